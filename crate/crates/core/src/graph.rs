//! Undirected multi-agent communication graph with a fixed edge
//! orientation convention: every listed edge (i, j) is oriented from
//! its first-listed node, which receives the +1 entry in the incidence
//! matrix. Node indices are 1-based at the API boundary (matching
//! scenario files) and 0-based internally.

use std::collections::{BTreeSet, VecDeque};

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Undirected graph over `m` agents. Immutable after construction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    m: usize,
    edges: Vec<(usize, usize)>,
    neighbors: Vec<BTreeSet<usize>>,
}

impl Graph {
    /// Builds a graph from 1-based node pairs. Rejects self-loops,
    /// duplicate undirected edges, and out-of-range indices.
    pub fn new(m: usize, edge_list: &[(usize, usize)]) -> Result<Self> {
        let mut neighbors = vec![BTreeSet::new(); m];
        let mut edges = Vec::with_capacity(edge_list.len());
        for &(i, j) in edge_list {
            if i < 1 || i > m {
                return Err(Error::NodeIndexOutOfRange { node: i, m });
            }
            if j < 1 || j > m {
                return Err(Error::NodeIndexOutOfRange { node: j, m });
            }
            if i == j {
                return Err(Error::SelfLoop { node: i });
            }
            let (a, b) = (i - 1, j - 1);
            if neighbors[a].contains(&b) {
                return Err(Error::DuplicateEdge { i, j });
            }
            neighbors[a].insert(b);
            neighbors[b].insert(a);
            edges.push((a, b));
        }
        Ok(Self { m, edges, neighbors })
    }

    /// Number of agents.
    pub fn agent_count(&self) -> usize {
        self.m
    }

    /// Number of edges.
    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Edges as 0-based pairs, in listing order.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    /// Neighbor set of a 0-based agent index.
    pub fn neighbors(&self, agent: usize) -> &BTreeSet<usize> {
        &self.neighbors[agent]
    }

    /// All neighbor sets, indexed by agent.
    pub fn neighbor_sets(&self) -> &[BTreeSet<usize>] {
        &self.neighbors
    }

    /// Oriented incidence matrix, edges x nodes. Row k carries +1 at the
    /// first-listed node of edge k and -1 at the second.
    pub fn incidence_matrix(&self) -> DMatrix<f64> {
        let mut h = DMatrix::zeros(self.edges.len(), self.m);
        for (k, &(i, j)) in self.edges.iter().enumerate() {
            h[(k, i)] = 1.0;
            h[(k, j)] = -1.0;
        }
        h
    }

    /// True iff a single undirected component spans all agents.
    pub fn is_connected(&self) -> bool {
        self.component_count() == 1
    }

    /// Number of connected components, by breadth-first traversal.
    pub fn component_count(&self) -> usize {
        if self.m == 0 {
            return 0;
        }
        let mut seen = vec![false; self.m];
        let mut components = 0;
        for start in 0..self.m {
            if seen[start] {
                continue;
            }
            components += 1;
            seen[start] = true;
            let mut queue = VecDeque::from([start]);
            while let Some(v) = queue.pop_front() {
                for &w in &self.neighbors[v] {
                    if !seen[w] {
                        seen[w] = true;
                        queue.push_back(w);
                    }
                }
            }
        }
        components
    }
}
