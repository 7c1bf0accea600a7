//! Dense conditional tables laid out over an ordered list of parent factors.
//!
//! A parent configuration is encoded mixed-radix with the last parent varying
//! fastest. Conditional columns (one per configuration) are stored contiguously.

use smallvec::{smallvec, SmallVec};

/// Mixed-radix layout for an ordered list of parent cardinalities.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParentLayout {
    cards: Vec<usize>,
    strides: Vec<usize>,
    size: usize,
}

impl ParentLayout {
    pub fn new(cards: &[usize]) -> Self {
        let mut strides = vec![0; cards.len()];
        let mut size = 1usize;
        for (i, &c) in cards.iter().enumerate().rev() {
            strides[i] = size;
            size *= c;
        }
        Self {
            cards: cards.to_vec(),
            strides,
            size,
        }
    }

    /// Number of joint configurations (1 when there are no parents).
    pub fn size(&self) -> usize {
        self.size
    }

    pub fn cards(&self) -> &[usize] {
        &self.cards
    }

    pub fn strides(&self) -> &[usize] {
        &self.strides
    }

    pub fn index(&self, values: &[usize]) -> usize {
        values.iter().zip(&self.strides).map(|(v, s)| v * s).sum()
    }

    pub fn decode(&self, mut index: usize, out: &mut [usize]) {
        for (i, &s) in self.strides.iter().enumerate() {
            out[i] = index / s;
            index %= s;
        }
    }
}

/// Visit every joint configuration of the given distributions that has
/// non-zero probability. The callback receives the mixed-radix configuration
/// index, the per-parent values, and the product of the parent probabilities.
pub fn for_each_supported<F>(dists: &[&[f64]], mut visit: F)
where
    F: FnMut(usize, &[usize], f64),
{
    let n = dists.len();
    if n == 0 {
        visit(0, &[], 1.0);
        return;
    }
    let mut strides: SmallVec<[usize; 16]> = smallvec![0; n];
    let mut acc = 1usize;
    for i in (0..n).rev() {
        strides[i] = acc;
        acc *= dists[i].len();
    }
    // supports of every parent, flattened; parent i owns flat[offsets[i]..offsets[i + 1]]
    let mut flat: SmallVec<[usize; 64]> = SmallVec::new();
    let mut offsets: SmallVec<[usize; 17]> = smallvec![0];
    for d in dists {
        flat.extend((0..d.len()).filter(|&i| d[i] > 0.0));
        if flat.len() == *offsets.last().expect("offsets start at 0") {
            return;
        }
        offsets.push(flat.len());
    }
    let mut cursor: SmallVec<[usize; 16]> = offsets[..n].iter().copied().collect();
    let mut values: SmallVec<[usize; 16]> = cursor.iter().map(|&c| flat[c]).collect();
    loop {
        let mut weight = 1.0;
        let mut index = 0;
        for i in 0..n {
            weight *= dists[i][values[i]];
            index += values[i] * strides[i];
        }
        visit(index, &values, weight);

        // odometer over the supports, last parent fastest
        let mut i = n;
        loop {
            if i == 0 {
                return;
            }
            i -= 1;
            cursor[i] += 1;
            if cursor[i] < offsets[i + 1] {
                values[i] = flat[cursor[i]];
                break;
            }
            cursor[i] = offsets[i];
            values[i] = flat[cursor[i]];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_round_trips_indices() {
        let layout = ParentLayout::new(&[3, 2, 4]);
        assert_eq!(layout.size(), 24);
        let mut out = [0; 3];
        for idx in 0..layout.size() {
            layout.decode(idx, &mut out);
            assert_eq!(layout.index(&out), idx);
        }
        assert_eq!(layout.index(&[0, 0, 1]), 1);
        assert_eq!(layout.index(&[1, 0, 0]), 8);
    }

    #[test]
    fn supported_iteration_skips_zero_mass() {
        let a = [0.5, 0.0, 0.5];
        let b = [0.0, 1.0];
        let mut seen = Vec::new();
        for_each_supported(&[&a, &b], |idx, vals, w| seen.push((idx, vals.to_vec(), w)));
        assert_eq!(seen, vec![(1, vec![0, 1], 0.5), (5, vec![2, 1], 0.5)]);
    }

    #[test]
    fn no_parents_visits_once() {
        let mut count = 0;
        for_each_supported(&[], |idx, vals, w| {
            assert_eq!((idx, vals.len(), w), (0, 0, 1.0));
            count += 1;
        });
        assert_eq!(count, 1);
    }
}
