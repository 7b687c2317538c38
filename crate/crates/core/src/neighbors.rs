//! Exact nearest-neighbor search over embedded points.

use serde::{Deserialize, Serialize};

use crate::embedding::{euclidean, EmbeddedDataset};
use crate::{Error, Result};

/// `j` nearest points, closest first. `indices` index into the dataset's
/// point list; ties are broken toward the lower index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeighborSet {
    pub indices: Vec<usize>,
    pub distances: Vec<f64>,
    pub j: usize,
}

/// Skip candidates whose anchor lies within `window` seasons of `anchor`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Exclusion {
    pub anchor: usize,
    pub window: usize,
}

impl Exclusion {
    fn excludes(&self, a: usize) -> bool {
        a.abs_diff(self.anchor) <= self.window
    }
}

pub fn knn(data: &EmbeddedDataset, query: &[f64], j: usize) -> Result<NeighborSet> {
    knn_excluding(data, query, j, None)
}

pub fn knn_excluding(
    data: &EmbeddedDataset,
    query: &[f64],
    j: usize,
    exclusion: Option<Exclusion>,
) -> Result<NeighborSet> {
    let m = data.view.dim();
    if query.len() != m {
        return Err(Error::DimensionMismatch { expected: m, got: query.len() });
    }
    let mut cand: Vec<(f64, usize)> = data
        .points
        .iter()
        .enumerate()
        .filter(|(i, _)| !exclusion.is_some_and(|e| e.excludes(data.anchors[*i])))
        .map(|(i, p)| (euclidean(p, query), i))
        .collect();
    if j == 0 || j > cand.len() {
        return Err(Error::InsufficientData(format!("asked for {j} neighbors among {} candidates", cand.len())));
    }
    let order = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    if j < cand.len() {
        cand.select_nth_unstable_by(j - 1, order);
        cand.truncate(j);
    }
    cand.sort_unstable_by(order);
    let (distances, indices) = cand.into_iter().unzip();
    Ok(NeighborSet { indices, distances, j })
}
