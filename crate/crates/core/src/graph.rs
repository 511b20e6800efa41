//! Undirected attributed graphs built from visited-place sequences.

use std::collections::{BTreeMap, BTreeSet};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A mobility graph: one node per visited cluster, undirected edges between
/// consecutively visited distinct clusters, and a feature vector per node.
///
/// Edges are stored as `(i, j)` pairs of node *indices* with `i < j`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryGraph {
    node_ids: Vec<u32>,
    edges: BTreeSet<(usize, usize)>,
    features: Vec<Vec<f64>>,
}

impl TrajectoryGraph {
    pub fn new(
        node_ids: Vec<u32>,
        edges: impl IntoIterator<Item = (usize, usize)>,
        features: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let n = node_ids.len();
        if n == 0 {
            return Err(Error::DegenerateInput("graph has no nodes".into()));
        }
        if features.len() != n {
            return Err(Error::Dimension(format!(
                "{n} nodes but {} feature vectors",
                features.len()
            )));
        }
        let dim = features[0].len();
        if dim == 0 || features.iter().any(|f| f.len() != dim) {
            return Err(Error::Dimension(
                "node features must be nonempty and equally long".into(),
            ));
        }
        if features.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite node feature".into()));
        }
        if node_ids.iter().collect::<BTreeSet<_>>().len() != n {
            return Err(Error::Input("duplicate node id".into()));
        }
        let mut set = BTreeSet::new();
        for (a, b) in edges {
            if a == b {
                return Err(Error::Input(format!("self-loop on node index {a}")));
            }
            if a >= n || b >= n {
                return Err(Error::Input(format!(
                    "edge ({a}, {b}) references an undeclared node"
                )));
            }
            if !set.insert((a.min(b), a.max(b))) {
                return Err(Error::Input(format!("duplicate edge ({a}, {b})")));
            }
        }
        Ok(TrajectoryGraph {
            node_ids,
            edges: set,
            features,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.node_ids.len()
    }

    pub fn node_ids(&self) -> &[u32] {
        &self.node_ids
    }

    pub fn edges(&self) -> &BTreeSet<(usize, usize)> {
        &self.edges
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.edges.contains(&(a.min(b), a.max(b)))
    }

    /// Edges expressed as pairs of node ids rather than indices.
    pub fn edge_ids(&self) -> BTreeSet<(u32, u32)> {
        self.edges
            .iter()
            .map(|&(a, b)| {
                let (x, y) = (self.node_ids[a], self.node_ids[b]);
                (x.min(y), x.max(y))
            })
            .collect()
    }

    pub fn features(&self) -> &[Vec<f64>] {
        &self.features
    }

    pub fn feature_dim(&self) -> usize {
        self.features[0].len()
    }

    pub fn feature_matrix(&self) -> Array2<f64> {
        let n = self.num_nodes();
        let d = self.feature_dim();
        Array2::from_shape_fn((n, d), |(i, j)| self.features[i][j])
    }

    /// `D^{-1/2} (A + I) D^{-1/2}` with `D` the degree matrix of `A + I`.
    pub fn normalized_adjacency(&self) -> Array2<f64> {
        let n = self.num_nodes();
        let mut degree = vec![1.0; n];
        for &(a, b) in &self.edges {
            degree[a] += 1.0;
            degree[b] += 1.0;
        }
        let inv_sqrt: Vec<f64> = degree.iter().map(|d: &f64| 1.0 / d.sqrt()).collect();
        let mut adj = Array2::zeros((n, n));
        for i in 0..n {
            adj[[i, i]] = inv_sqrt[i] * inv_sqrt[i];
        }
        for &(a, b) in &self.edges {
            let w = inv_sqrt[a] * inv_sqrt[b];
            adj[[a, b]] = w;
            adj[[b, a]] = w;
        }
        adj
    }

    /// Same graph with edges replaced; node set and features are kept.
    pub(crate) fn with_edges(&self, edges: BTreeSet<(usize, usize)>) -> Self {
        TrajectoryGraph {
            node_ids: self.node_ids.clone(),
            edges,
            features: self.features.clone(),
        }
    }

    /// Reorders nodes: node `i` of the result is node `order[i]` of `self`.
    pub fn permuted(&self, order: &[usize]) -> Result<Self> {
        let n = self.num_nodes();
        if order.len() != n || order.iter().collect::<BTreeSet<_>>().len() != n {
            return Err(Error::Input("order must be a permutation of node indices".into()));
        }
        let mut position = vec![0; n];
        for (new, &old) in order.iter().enumerate() {
            position[old] = new;
        }
        let node_ids = order.iter().map(|&o| self.node_ids[o]).collect();
        let features = order.iter().map(|&o| self.features[o].clone()).collect();
        let edges: Vec<_> = self
            .edges
            .iter()
            .map(|&(a, b)| (position[a], position[b]))
            .collect();
        TrajectoryGraph::new(node_ids, edges, features)
    }
}

/// Builds the mobility graph of a sequence of visited cluster labels.
///
/// Nodes are the distinct labels in ascending order. Consecutive repeats add
/// no edge. Each node's features are its visit share (visits / sequence
/// length) followed by a one-hot encoding of its label over `num_clusters`.
pub fn build_mobility_graph(sequence: &[u32], num_clusters: usize) -> Result<TrajectoryGraph> {
    if sequence.is_empty() {
        return Err(Error::DegenerateInput("empty cluster sequence".into()));
    }
    if let Some(&bad) = sequence.iter().find(|&&c| c as usize >= num_clusters) {
        return Err(Error::Input(format!(
            "cluster label {bad} outside 0..{num_clusters}"
        )));
    }
    let mut visits: BTreeMap<u32, usize> = BTreeMap::new();
    for &c in sequence {
        *visits.entry(c).or_default() += 1;
    }
    let index: BTreeMap<u32, usize> = visits.keys().enumerate().map(|(i, &c)| (c, i)).collect();
    let mut edges = BTreeSet::new();
    for pair in sequence.windows(2) {
        if pair[0] != pair[1] {
            let (a, b) = (index[&pair[0]], index[&pair[1]]);
            edges.insert((a.min(b), a.max(b)));
        }
    }
    let len = sequence.len() as f64;
    let features = visits
        .iter()
        .map(|(&c, &count)| {
            let mut f = vec![0.0; num_clusters + 1];
            f[0] = count as f64 / len;
            f[1 + c as usize] = 1.0;
            f
        })
        .collect();
    TrajectoryGraph::new(visits.keys().copied().collect(), edges, features)
}

#[cfg(test)]
mod tests {
    use super::*;

    const A: u32 = 0;
    const B: u32 = 1;
    const C: u32 = 2;

    #[test]
    fn single_visit_is_one_isolated_node() {
        let g = build_mobility_graph(&[A], 3).unwrap();
        assert_eq!(g.num_nodes(), 1);
        assert_eq!(g.num_edges(), 0);
    }

    #[test]
    fn consecutive_pairs_become_undirected_edges() {
        let g = build_mobility_graph(&[A, B, A, C], 3).unwrap();
        assert_eq!(g.node_ids(), &[A, B, C]);
        let expected: BTreeSet<_> = [(A, B), (A, C)].into_iter().collect();
        assert_eq!(g.edge_ids(), expected);
        assert_eq!(g.features()[0], vec![0.5, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn repeats_add_no_edges() {
        let g = build_mobility_graph(&[A, A, A], 3).unwrap();
        assert_eq!(g.num_nodes(), 1);
        assert_eq!(g.num_edges(), 0);
        assert_eq!(g.features()[0][0], 1.0);
    }

    #[test]
    fn empty_and_out_of_range_sequences_fail() {
        assert!(matches!(
            build_mobility_graph(&[], 3),
            Err(Error::DegenerateInput(_))
        ));
        assert!(build_mobility_graph(&[5], 3).is_err());
    }

    #[test]
    fn constructor_rejects_invalid_edges() {
        let f = vec![vec![1.0]; 2];
        assert!(TrajectoryGraph::new(vec![0, 1], [(0, 0)], f.clone()).is_err());
        assert!(TrajectoryGraph::new(vec![0, 1], [(0, 1), (1, 0)], f.clone()).is_err());
        assert!(TrajectoryGraph::new(vec![0, 1], [(0, 2)], f).is_err());
    }

    #[test]
    fn isolated_nodes_normalize_to_identity() {
        let g = TrajectoryGraph::new(vec![0, 1], [], vec![vec![1.0]; 2]).unwrap();
        assert_eq!(g.normalized_adjacency(), Array2::<f64>::eye(2));
        let g = TrajectoryGraph::new(vec![0, 1], [(0, 1)], vec![vec![1.0]; 2]).unwrap();
        let a = g.normalized_adjacency();
        assert!((a[[0, 1]] - 0.5).abs() < 1e-15 && (a[[0, 0]] - 0.5).abs() < 1e-15);
    }
}
