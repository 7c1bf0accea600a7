//! Grid geometry and the two task action repertoires.

use serde::{Deserialize, Serialize};

/// Rectangular grid with cells numbered `1..=width*height`, row-major from the
/// top-left corner.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Grid {
    pub width: usize,
    pub height: usize,
}

impl Default for Grid {
    fn default() -> Self {
        Self { width: 3, height: 3 }
    }
}

impl Grid {
    pub fn new(width: usize, height: usize) -> Self {
        Self { width, height }
    }

    pub fn cell_count(&self) -> usize {
        self.width * self.height
    }

    pub fn contains(&self, cell: usize) -> bool {
        (1..=self.cell_count()).contains(&cell)
    }

    pub fn row_col(&self, cell: usize) -> (usize, usize) {
        ((cell - 1) / self.width, (cell - 1) % self.width)
    }

    pub fn cell_at(&self, row: usize, col: usize) -> usize {
        row * self.width + col + 1
    }

    /// Destination of a move, `None` when it would leave the grid.
    pub fn shift(&self, cell: usize, action: Action) -> Option<usize> {
        let (dr, dc) = action.delta();
        let (r, c) = self.row_col(cell);
        let r = r as i64 + dr;
        let c = c as i64 + dc;
        if r < 0 || c < 0 || r >= self.height as i64 || c >= self.width as i64 {
            None
        } else {
            Some(self.cell_at(r as usize, c as usize))
        }
    }

    /// Cells in the top and bottom rows.
    pub fn orchard_cells(&self) -> Vec<usize> {
        let mut cells: Vec<usize> = (0..self.width).map(|c| self.cell_at(0, c)).collect();
        if self.height > 1 {
            cells.extend((0..self.width).map(|c| self.cell_at(self.height - 1, c)));
        }
        cells
    }

    /// Distinct cells reachable in one step under `actions` without leaving the grid.
    pub fn reachable(&self, cell: usize, actions: &[Action]) -> Vec<usize> {
        let mut out: Vec<usize> = actions.iter().filter_map(|&a| self.shift(cell, a)).collect();
        out.sort_unstable();
        out.dedup();
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Action {
    Up,
    Down,
    Left,
    Right,
    UpLeft,
    UpRight,
    DownLeft,
    DownRight,
    Eat,
    Noop,
}

impl Action {
    /// `(row, col)` displacement; eating and no-op stay in place.
    pub fn delta(self) -> (i64, i64) {
        match self {
            Action::Up => (-1, 0),
            Action::Down => (1, 0),
            Action::Left => (0, -1),
            Action::Right => (0, 1),
            Action::UpLeft => (-1, -1),
            Action::UpRight => (-1, 1),
            Action::DownLeft => (1, -1),
            Action::DownRight => (1, 1),
            Action::Eat | Action::Noop => (0, 0),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Action::Up => "up",
            Action::Down => "down",
            Action::Left => "left",
            Action::Right => "right",
            Action::UpLeft => "up-left",
            Action::UpRight => "up-right",
            Action::DownLeft => "down-left",
            Action::DownRight => "down-right",
            Action::Eat => "eat",
            Action::Noop => "noop",
        }
    }

    pub fn from_label(label: &str) -> Option<Action> {
        ALL_ACTIONS.iter().copied().find(|a| a.label() == label)
    }
}

const ALL_ACTIONS: [Action; 10] = [
    Action::Up,
    Action::Down,
    Action::Left,
    Action::Right,
    Action::UpLeft,
    Action::UpRight,
    Action::DownLeft,
    Action::DownRight,
    Action::Eat,
    Action::Noop,
];

/// Directional moves, four diagonals, and no-op.
pub const COLLISION_ACTIONS: [Action; 9] = [
    Action::Up,
    Action::Down,
    Action::Left,
    Action::Right,
    Action::UpLeft,
    Action::UpRight,
    Action::DownLeft,
    Action::DownRight,
    Action::Noop,
];

/// Four moves, eating, and no-op.
pub const FORAGING_ACTIONS: [Action; 6] = [
    Action::Up,
    Action::Down,
    Action::Left,
    Action::Right,
    Action::Eat,
    Action::Noop,
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    Collision,
    Foraging,
}

impl Task {
    pub fn actions(self) -> &'static [Action] {
        match self {
            Task::Collision => &COLLISION_ACTIONS,
            Task::Foraging => &FORAGING_ACTIONS,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Task::Collision => "collision",
            Task::Foraging => "foraging",
        }
    }
}

impl std::str::FromStr for Task {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "collision" => Ok(Task::Collision),
            "foraging" => Ok(Task::Foraging),
            other => Err(format!("unknown task '{other}'")),
        }
    }
}
