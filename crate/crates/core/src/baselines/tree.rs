//! CART classification tree over binary features with Gini impurity.
//!
//! A node splits on the column with the largest Gini reduction, lowest index
//! on ties; rows with bit 0 go left. A node becomes a leaf when it is pure,
//! when the depth bound is reached, or when no column separates its rows.
//! Leaves predict the majority label, 0 on ties.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Matrix, SeededRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Node {
    Leaf { label: u8 },
    Split { feature: usize, left: usize, right: usize },
}

/// Nodes are stored flat with the root at index 0.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeModel {
    pub nodes: Vec<Node>,
    pub n_features: usize,
    pub max_depth: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct TreeConfig {
    /// `None` grows until leaves are pure or unsplittable.
    pub max_depth: Option<usize>,
}

/// `2p(1 − p)` for a node with `positives` of `total` labeled 1.
pub fn gini(positives: usize, total: usize) -> f64 {
    if total == 0 {
        return 0.0;
    }
    let p = positives as f64 / total as f64;
    2.0 * p * (1.0 - p)
}

/// Impurity reduction from splitting `rows` on `feature`.
pub fn gini_gain(x: &Matrix, y: &[u8], rows: &[usize], feature: usize) -> f64 {
    let (mut n1, mut p1, mut pos) = (0, 0, 0);
    for &r in rows {
        let label = y[r] as usize;
        pos += label;
        if x.get(r, feature) > 0.5 {
            n1 += 1;
            p1 += label;
        }
    }
    gain_from_counts(rows.len(), pos, n1, p1)
}

fn gain_from_counts(n: usize, pos: usize, n1: usize, p1: usize) -> f64 {
    let n0 = n - n1;
    let p0 = pos - p1;
    let nf = n as f64;
    gini(pos, n) - (n0 as f64 / nf) * gini(p0, n0) - (n1 as f64 / nf) * gini(p1, n1)
}

fn majority(pos: usize, total: usize) -> u8 {
    u8::from(2 * pos > total)
}

pub(crate) struct Grower<'a> {
    x: &'a Matrix,
    y: &'a [u8],
    max_depth: Option<usize>,
    /// Candidate columns drawn per node; `None` means all.
    features_per_split: Option<usize>,
    rng: Option<&'a mut SeededRng>,
    nodes: Vec<Node>,
}

impl<'a> Grower<'a> {
    pub(crate) fn new(
        x: &'a Matrix,
        y: &'a [u8],
        max_depth: Option<usize>,
        features_per_split: Option<usize>,
        rng: Option<&'a mut SeededRng>,
    ) -> Self {
        Self {
            x,
            y,
            max_depth,
            features_per_split,
            rng,
            nodes: Vec::new(),
        }
    }

    pub(crate) fn grow(mut self, rows: Vec<usize>) -> TreeModel {
        self.node(rows, 0);
        TreeModel {
            nodes: self.nodes,
            n_features: self.x.cols(),
            max_depth: self.max_depth,
        }
    }

    fn candidates(&mut self) -> Vec<usize> {
        let d = self.x.cols();
        match (self.features_per_split, self.rng.as_deref_mut()) {
            (Some(k), Some(rng)) if k < d => {
                let mut all: Vec<usize> = (0..d).collect();
                for i in 0..k {
                    let j = i + rng.below(d - i);
                    all.swap(i, j);
                }
                all.truncate(k);
                all.sort_unstable();
                all
            }
            _ => (0..d).collect(),
        }
    }

    fn best_split(&self, rows: &[usize], features: &[usize], pos: usize) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for &f in features {
            let (mut n1, mut p1) = (0, 0);
            for &r in rows {
                if self.x.get(r, f) > 0.5 {
                    n1 += 1;
                    p1 += self.y[r] as usize;
                }
            }
            if n1 == 0 || n1 == rows.len() {
                continue;
            }
            let gain = gain_from_counts(rows.len(), pos, n1, p1);
            if best.is_none_or(|(_, g)| gain > g) {
                best = Some((f, gain));
            }
        }
        best.map(|(f, _)| f)
    }

    fn node(&mut self, rows: Vec<usize>, depth: usize) -> usize {
        let id = self.nodes.len();
        let pos: usize = rows.iter().map(|&r| self.y[r] as usize).sum();
        self.nodes.push(Node::Leaf {
            label: majority(pos, rows.len()),
        });
        if pos == 0 || pos == rows.len() || self.max_depth.is_some_and(|m| depth >= m) {
            return id;
        }
        let picked = self.candidates();
        let mut feature = self.best_split(&rows, &picked, pos);
        if feature.is_none() && picked.len() < self.x.cols() {
            // none of the drawn columns separates these rows; fall back to the rest
            let rest: Vec<usize> = (0..self.x.cols()).filter(|f| !picked.contains(f)).collect();
            feature = self.best_split(&rows, &rest, pos);
        }
        let Some(feature) = feature else {
            return id;
        };
        let (right_rows, left_rows): (Vec<usize>, Vec<usize>) =
            rows.into_iter().partition(|&r| self.x.get(r, feature) > 0.5);
        let left = self.node(left_rows, depth + 1);
        let right = self.node(right_rows, depth + 1);
        self.nodes[id] = Node::Split { feature, left, right };
        id
    }
}

pub(crate) fn check_training(x: &Matrix, y: &[u8]) -> Result<()> {
    if x.rows() == 0 {
        return Err(Error::InvalidInput("no training samples".into()));
    }
    if x.rows() != y.len() {
        return Err(Error::dims(
            "fit",
            format!("{} rows with {} labels", x.rows(), y.len()),
        ));
    }
    if y.iter().any(|&l| l > 1) {
        return Err(Error::InvalidInput("labels must be 0 or 1".into()));
    }
    Ok(())
}

pub fn fit_tree(x: &Matrix, y: &[u8], cfg: &TreeConfig) -> Result<TreeModel> {
    check_training(x, y)?;
    Ok(Grower::new(x, y, cfg.max_depth, None, None).grow((0..x.rows()).collect()))
}

impl TreeModel {
    fn check(&self, x: &Matrix) -> Result<()> {
        if x.cols() != self.n_features {
            return Err(Error::dims(
                "predict_tree",
                format!("{} columns for a tree over {}", x.cols(), self.n_features),
            ));
        }
        Ok(())
    }

    pub fn predict_row(&self, row: &[f64]) -> u8 {
        let mut at = 0;
        loop {
            match self.nodes[at] {
                Node::Leaf { label } => return label,
                Node::Split { feature, left, right } => {
                    at = if row[feature] > 0.5 { right } else { left };
                }
            }
        }
    }

    pub fn predict(&self, x: &Matrix) -> Result<Vec<u8>> {
        self.check(x)?;
        Ok(x.iter_rows().map(|r| self.predict_row(r)).collect())
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], at: usize) -> usize {
            match nodes[at] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }

    /// Rejects out-of-range children or features and cycles.
    pub fn validate(&self) -> Result<()> {
        let n = self.nodes.len();
        if n == 0 {
            return Err(Error::InvalidInput("tree has no nodes".into()));
        }
        for (i, node) in self.nodes.iter().enumerate() {
            if let Node::Split { feature, left, right } = *node {
                // children are always allocated after their parent
                if feature >= self.n_features || left <= i || right <= i || left >= n || right >= n {
                    return Err(Error::InvalidInput(format!("tree node {i} is malformed")));
                }
            }
        }
        Ok(())
    }
}
