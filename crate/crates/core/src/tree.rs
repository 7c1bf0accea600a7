//! Planning trees: an arena of belief, policy and observation nodes, with
//! line-delimited JSON and Graphviz export.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::belief::FactoredBelief;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NodeKind {
    Belief,
    Policy,
    Observation,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Owner {
    Focal,
    Other,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanNode {
    pub id: usize,
    pub parent: Option<usize>,
    pub kind: NodeKind,
    pub owner: Owner,
    /// Expansion step within a horizon step of the joint tree (1 to 4, root 5).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step: Option<u8>,
    pub depth: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub action: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outcome: Option<Vec<usize>>,
    pub label: String,
    pub efe: f64,
    pub probability: f64,
    #[serde(default)]
    pub pruned: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub belief: Option<FactoredBelief>,
    #[serde(default)]
    pub children: Vec<usize>,
}

impl PlanNode {
    pub fn new(kind: NodeKind, owner: Owner, depth: usize, label: impl Into<String>) -> Self {
        Self {
            id: 0,
            parent: None,
            kind,
            owner,
            step: None,
            depth,
            action: None,
            outcome: None,
            label: label.into(),
            efe: 0.0,
            probability: 1.0,
            pruned: false,
            belief: None,
            children: Vec::new(),
        }
    }
}

#[derive(Debug, Error)]
pub enum TreeError {
    #[error("tree has no nodes")]
    Empty,
    #[error("line {line}: {source}")]
    Parse {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("node {0} is out of order or references a missing node")]
    Dangling(usize),
    #[error("{0}")]
    Serde(#[from] serde_json::Error),
}

/// Which nesting discipline a tree obeys.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TreeShape {
    /// Belief root, then `(policy, observation)*`.
    Single,
    /// Belief root, then `(other policy, focal policy, focal observation, other observation)*`.
    Joint,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PlanTree {
    nodes: Vec<PlanNode>,
}

impl PlanTree {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[PlanNode] {
        &self.nodes
    }

    pub fn node(&self, id: usize) -> &PlanNode {
        &self.nodes[id]
    }

    pub fn node_mut(&mut self, id: usize) -> &mut PlanNode {
        &mut self.nodes[id]
    }

    pub fn root(&self) -> Option<&PlanNode> {
        self.nodes.first()
    }

    /// Appends a node under `parent` and returns its id.
    pub fn push(&mut self, parent: Option<usize>, mut node: PlanNode) -> usize {
        let id = self.nodes.len();
        node.id = id;
        node.parent = parent;
        node.children.clear();
        if let Some(p) = parent {
            self.nodes[p].children.push(id);
        }
        self.nodes.push(node);
        id
    }

    pub fn children(&self, id: usize) -> impl Iterator<Item = &PlanNode> {
        self.nodes[id].children.iter().map(move |&c| &self.nodes[c])
    }

    pub fn leaves(&self) -> impl Iterator<Item = &PlanNode> {
        self.nodes.iter().filter(|n| n.children.is_empty())
    }

    /// Verifies parent/child kinds along every path; returns the first offence.
    pub fn check_alternation(&self, shape: TreeShape) -> Result<(), String> {
        let Some(root) = self.root() else {
            return Err("empty tree".into());
        };
        if root.kind != NodeKind::Belief {
            return Err("root is not a belief node".into());
        }
        let next = |n: &PlanNode| -> (NodeKind, Owner) {
            match (shape, n.kind, n.owner) {
                (TreeShape::Single, NodeKind::Belief | NodeKind::Observation, o) => (NodeKind::Policy, o),
                (TreeShape::Single, NodeKind::Policy, o) => (NodeKind::Observation, o),
                (TreeShape::Joint, NodeKind::Belief, _) => (NodeKind::Policy, Owner::Other),
                (TreeShape::Joint, NodeKind::Policy, Owner::Other) => (NodeKind::Policy, Owner::Focal),
                (TreeShape::Joint, NodeKind::Policy, Owner::Focal) => (NodeKind::Observation, Owner::Focal),
                (TreeShape::Joint, NodeKind::Observation, Owner::Focal) => (NodeKind::Observation, Owner::Other),
                (TreeShape::Joint, NodeKind::Observation, Owner::Other) => (NodeKind::Policy, Owner::Other),
            }
        };
        let terminal = |n: &PlanNode| match shape {
            TreeShape::Single => n.kind == NodeKind::Observation,
            TreeShape::Joint => n.kind == NodeKind::Observation && n.owner == Owner::Other,
        };
        for n in &self.nodes {
            if n.children.is_empty() {
                if n.id != 0 && !terminal(n) {
                    return Err(format!(
                        "node {} ({:?} {:?}) ends a path mid-cycle",
                        n.id, n.owner, n.kind
                    ));
                }
                continue;
            }
            let want = next(n);
            for c in self.children(n.id) {
                if (c.kind, c.owner) != want {
                    return Err(format!(
                        "node {} ({:?} {:?}) has child {} ({:?} {:?}), expected {:?} {:?}",
                        n.id, n.owner, n.kind, c.id, c.owner, c.kind, want.1, want.0
                    ));
                }
                if c.parent != Some(n.id) {
                    return Err(format!("node {} has inconsistent parent", c.id));
                }
            }
        }
        Ok(())
    }

    /// One JSON record per node, in id order.
    pub fn to_jsonl(&self) -> Result<String, TreeError> {
        if self.nodes.is_empty() {
            return Err(TreeError::Empty);
        }
        let mut out = String::new();
        for n in &self.nodes {
            out.push_str(&serde_json::to_string(n)?);
            out.push('\n');
        }
        Ok(out)
    }

    pub fn from_jsonl(text: &str) -> Result<Self, TreeError> {
        let mut nodes: Vec<PlanNode> = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let n: PlanNode = serde_json::from_str(line).map_err(|source| TreeError::Parse { line: i + 1, source })?;
            if n.id != nodes.len() || n.parent.is_some_and(|p| p >= n.id) {
                return Err(TreeError::Dangling(n.id));
            }
            nodes.push(n);
        }
        if nodes.is_empty() {
            return Err(TreeError::Empty);
        }
        Ok(Self { nodes })
    }

    pub fn to_dot(&self) -> Result<String, TreeError> {
        if self.nodes.is_empty() {
            return Err(TreeError::Empty);
        }
        let mut out = String::from("digraph plan {\n  node [style=filled, fontname=\"Helvetica\"];\n");
        for n in &self.nodes {
            let shape = match n.kind {
                NodeKind::Belief => "circle",
                NodeKind::Policy => "box",
                NodeKind::Observation => "diamond",
            };
            let color = match n.owner {
                Owner::Focal => "#d62728",
                Owner::Other => "#9467bd",
            };
            let style = if n.pruned { ", style=\"filled,dashed\"" } else { "" };
            let label = format!("{}\\nG={:.2}\\np={:.3}", escape(&n.label), n.efe, n.probability);
            let _ = writeln!(
                out,
                "  n{} [shape={shape}, color=\"{color}\", fillcolor=\"{color}33\", label=\"{label}\"{style}];",
                n.id
            );
        }
        for n in &self.nodes {
            if let Some(p) = n.parent {
                let _ = writeln!(out, "  n{p} -> n{} [label=\"{:.3}\"];", n.id, n.probability);
            }
        }
        out.push_str("}\n");
        Ok(out)
    }
}

fn escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}
