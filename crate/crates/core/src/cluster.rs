use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::som::Projection;
use crate::viewpoint::ViewpointMatrix;

/// Feature weight mass summed over each node's member rows.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterWeights {
    /// node -> feature -> W(f, node); only non-empty nodes appear.
    pub by_node: BTreeMap<usize, BTreeMap<usize, f64>>,
    pub members: BTreeMap<usize, usize>,
}

impl ClusterWeights {
    pub fn compute(matrix: &ViewpointMatrix, proj: &Projection) -> Result<Self> {
        let mut by_node: BTreeMap<usize, BTreeMap<usize, f64>> = BTreeMap::new();
        let mut members: BTreeMap<usize, usize> = BTreeMap::new();
        for (item, row) in matrix.rows() {
            let a = proj.get(item).ok_or_else(|| {
                Error::UniverseMismatch(format!("row `{item}` of `{}` has no projection", matrix.id()))
            })?;
            *members.entry(a.node).or_default() += 1;
            let node = by_node.entry(a.node).or_default();
            for &(f, w) in row.entries() {
                *node.entry(f).or_default() += w;
            }
        }
        Ok(ClusterWeights { by_node, members })
    }

    pub fn weight(&self, node: usize, feature: usize) -> f64 {
        self.by_node
            .get(&node)
            .and_then(|m| m.get(&feature))
            .copied()
            .unwrap_or(0.0)
    }

    /// Σ over clusters of W(f, c), per feature.
    pub fn feature_totals(&self) -> BTreeMap<usize, f64> {
        let mut out: BTreeMap<usize, f64> = BTreeMap::new();
        for weights in self.by_node.values() {
            for (&f, &w) in weights {
                *out.entry(f).or_default() += w;
            }
        }
        out
    }

    pub fn node_total(&self, node: usize) -> f64 {
        self.by_node.get(&node).map_or(0.0, |m| m.values().sum())
    }
}
