//! Geographic proximity graph over visited cells and LINE-style location
//! embeddings learned from its first- and second-order proximity.

mod embedding;
mod line;

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

pub use embedding::EmbeddingMatrix;
pub use line::{train_line, LineConfig, LineReport};

use crate::error::{Error, Result};
use crate::math;
use crate::mobility::{CellId, GridSpec, Trajectory};

/// Undirected weighted edge with `u < v`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Edge {
    pub u: CellId,
    pub v: CellId,
    pub w: f64,
}

/// Undirected graph over cells with positive similarity weights.
#[derive(Clone, Debug, PartialEq)]
pub struct SpatialGraph {
    nodes: Vec<CellId>,
    edges: Vec<Edge>,
    /// Per node index: (neighbor node index, weight), sorted by neighbor.
    adjacency: Vec<Vec<(usize, f64)>>,
}

/// Sparse row `b_u` of the weighted adjacency matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct NeighborVector {
    pub entries: Vec<(CellId, f64)>,
}

impl NeighborVector {
    pub fn get(&self, v: CellId) -> f64 {
        self.entries
            .binary_search_by_key(&v, |e| e.0)
            .map_or(0.0, |i| self.entries[i].1)
    }
}

impl SpatialGraph {
    /// Builds a graph from explicit edges. Duplicate pairs (in either
    /// orientation) are merged, keeping the first weight.
    pub fn from_edges(edges: &[(CellId, CellId, f64)]) -> Result<Self> {
        let mut merged: BTreeMap<(CellId, CellId), f64> = BTreeMap::new();
        for &(a, b, w) in edges {
            if a == b {
                return Err(Error::Invalid(alloc::format!("self-loop on cell {a}")));
            }
            if !(w > 0.0) || !w.is_finite() {
                return Err(Error::Invalid(alloc::format!("edge ({a}, {b}) has non-positive weight {w}")));
            }
            merged.entry((a.min(b), a.max(b))).or_insert(w);
        }
        let mut nodes: Vec<CellId> = merged.keys().flat_map(|&(a, b)| [a, b]).collect();
        nodes.sort_unstable();
        nodes.dedup();
        Ok(Self::assemble(nodes, merged))
    }

    fn assemble(nodes: Vec<CellId>, merged: BTreeMap<(CellId, CellId), f64>) -> Self {
        let index = |c: CellId| nodes.binary_search(&c).expect("edge endpoint is a node");
        let mut adjacency = alloc::vec![Vec::new(); nodes.len()];
        let mut edges = Vec::with_capacity(merged.len());
        for (&(u, v), &w) in &merged {
            let (iu, iv) = (index(u), index(v));
            adjacency[iu].push((iv, w));
            adjacency[iv].push((iu, w));
            edges.push(Edge { u, v, w });
        }
        for adj in &mut adjacency {
            adj.sort_by_key(|e| e.0);
        }
        SpatialGraph { nodes, edges, adjacency }
    }

    pub fn nodes(&self) -> &[CellId] {
        &self.nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn node_index(&self, cell: CellId) -> Option<usize> {
        self.nodes.binary_search(&cell).ok()
    }

    pub(crate) fn adjacency(&self) -> &[Vec<(usize, f64)>] {
        &self.adjacency
    }

    pub fn weight(&self, u: CellId, v: CellId) -> Option<f64> {
        let (iu, iv) = (self.node_index(u)?, self.node_index(v)?);
        self.adjacency[iu]
            .binary_search_by_key(&iv, |e| e.0)
            .ok()
            .map(|i| self.adjacency[iu][i].1)
    }

    /// Weighted first-order proximity vector of `u`.
    pub fn neighbor_distribution(&self, u: CellId) -> Result<NeighborVector> {
        let iu = self.node_index(u).ok_or(Error::UnknownNode(u))?;
        Ok(NeighborVector {
            entries: self.adjacency[iu].iter().map(|&(j, w)| (self.nodes[j], w)).collect(),
        })
    }
}

/// Source of location embeddings for a spatial graph.
pub trait EmbeddingProvider {
    fn embed_graph(&self, graph: &SpatialGraph, n_cells: usize) -> Result<EmbeddingMatrix>;
}

impl EmbeddingProvider for LineConfig {
    fn embed_graph(&self, graph: &SpatialGraph, n_cells: usize) -> Result<EmbeddingMatrix> {
        Ok(train_line(graph, n_cells, self)?.embedding)
    }
}

/// Distinct cells visited by any trajectory, ascending.
pub fn visited_cells(trajs: &[Trajectory]) -> Vec<CellId> {
    let mut cells: Vec<CellId> = trajs.iter().flat_map(|t| t.cells.iter().copied()).collect();
    cells.sort_unstable();
    cells.dedup();
    cells
}

/// k-nearest-neighbor graph with Gaussian similarity weights.
///
/// Every visited cell links to its `k` nearest visited cells by center
/// distance (ties by ascending cell id). Weights are
/// `exp(-dist² / (2σ²))` with σ the median nearest-neighbor distance,
/// unless `bandwidth_m` overrides it.
pub fn build_spatial_graph(grid: &GridSpec, visited: &[CellId], k: usize, bandwidth_m: Option<f64>) -> Result<SpatialGraph> {
    let mut nodes = visited.to_vec();
    nodes.sort_unstable();
    nodes.dedup();
    if nodes.is_empty() {
        return Err(Error::Empty("visited cell set"));
    }
    if nodes.len() == 1 {
        return Err(Error::Invalid("a single visited cell admits no edges".into()));
    }
    if k == 0 {
        return Err(Error::InvalidConfig("k must be at least 1".into()));
    }
    if let Some(&c) = nodes.iter().find(|&&c| c >= grid.n_cells()) {
        return Err(Error::UnknownNode(c));
    }
    let k = k.min(nodes.len() - 1);

    let mut neighbors: Vec<Vec<(f64, CellId)>> = Vec::with_capacity(nodes.len());
    for &u in &nodes {
        let mut d: Vec<(f64, CellId)> = nodes
            .iter()
            .filter(|&&v| v != u)
            .map(|&v| (grid.distance_m(u, v), v))
            .collect();
        d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        d.truncate(k);
        neighbors.push(d);
    }
    let sigma = match bandwidth_m {
        Some(s) if s > 0.0 && s.is_finite() => s,
        Some(s) => return Err(Error::InvalidConfig(alloc::format!("bandwidth {s} must be positive"))),
        None => {
            let mut nn: Vec<f64> = neighbors.iter().map(|n| n[0].0).collect();
            nn.sort_by(f64::total_cmp);
            let m = nn.len();
            if m % 2 == 1 {
                nn[m / 2]
            } else {
                0.5 * (nn[m / 2 - 1] + nn[m / 2])
            }
        }
    };
    let mut merged = BTreeMap::new();
    for (&u, near) in nodes.iter().zip(&neighbors) {
        for &(dist, v) in near {
            let w = math::exp(-dist * dist / (2.0 * sigma * sigma));
            // underflow to zero would violate w > 0
            merged.entry((u.min(v), u.max(v))).or_insert(w.max(f64::MIN_POSITIVE));
        }
    }
    Ok(SpatialGraph::assemble(nodes, merged))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> GridSpec {
        GridSpec::new(40.0, 116.0, 1000.0, 10, 10).unwrap()
    }

    #[test]
    fn two_cells_use_the_pair_distance_as_bandwidth() {
        let g = grid();
        let graph = build_spatial_graph(&g, &[0, 23], 5, None).unwrap();
        assert_eq!(graph.edges().len(), 1);
        let w = graph.edges()[0].w;
        assert!((w - libm::exp(-0.5)).abs() < 1e-12);
        assert!((w - 0.6065).abs() < 1e-4);
    }

    #[test]
    fn plus_shape_center_edges_are_equal() {
        let g = grid();
        let center = g.cell(5, 5);
        let cells = [center, g.cell(4, 5), g.cell(6, 5), g.cell(5, 4), g.cell(5, 6)];
        let graph = build_spatial_graph(&g, &cells, 4, None).unwrap();
        let b = graph.neighbor_distribution(center).unwrap();
        assert_eq!(b.entries.len(), 4);
        let w0 = b.entries[0].1;
        assert!(b.entries.iter().all(|e| e.1 == w0));
    }

    #[test]
    fn duplicate_orientations_collapse() {
        let graph = SpatialGraph::from_edges(&[(1, 2, 0.5), (2, 1, 0.5)]).unwrap();
        assert_eq!(graph.edges().len(), 1);
        assert_eq!(graph.weight(2, 1), Some(0.5));
        assert_eq!(graph.weight(1, 2), Some(0.5));
    }

    #[test]
    fn neighbor_vectors() {
        let graph = SpatialGraph::from_edges(&[(0, 1, 1.0), (0, 2, 1.0), (0, 3, 1.0)]).unwrap();
        let b = graph.neighbor_distribution(0).unwrap();
        assert_eq!(b.entries, alloc::vec![(1, 1.0), (2, 1.0), (3, 1.0)]);
        assert_eq!(graph.neighbor_distribution(1).unwrap().get(0), b.get(1));
        assert_eq!(b.get(9), 0.0);
        assert!(matches!(graph.neighbor_distribution(42), Err(Error::UnknownNode(42))));
    }

    #[test]
    fn single_cell_is_rejected() {
        assert!(build_spatial_graph(&grid(), &[3, 3], 8, None).is_err());
        assert!(SpatialGraph::from_edges(&[(3, 3, 1.0)]).is_err());
    }

    #[test]
    fn knn_graph_is_symmetric() {
        let g = grid();
        let cells: Vec<usize> = (0..100).step_by(7).collect();
        let graph = build_spatial_graph(&g, &cells, 3, None).unwrap();
        for e in graph.edges() {
            assert!(e.u < e.v && e.w > 0.0);
            assert_eq!(graph.weight(e.u, e.v), graph.weight(e.v, e.u));
        }
        for &c in graph.nodes() {
            assert!(!graph.neighbor_distribution(c).unwrap().entries.is_empty());
        }
    }
}
