use alloc::vec;
use alloc::vec::Vec;

use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::weighted::WeightedAliasIndex;

use super::{EmbeddingMatrix, SpatialGraph};
use crate::autodiff::Array;
use crate::error::{Error, Result};
use crate::math;

#[derive(Clone, Debug, PartialEq)]
pub struct LineConfig {
    /// Total width; each proximity order gets `dim / 2`.
    pub dim: usize,
    pub k_neighbors: usize,
    pub n_negative: usize,
    pub n_epochs: usize,
    /// Initial SGD step, decayed linearly to `1e-4` of itself over training.
    pub learning_rate: f64,
    /// Kernel bandwidth in meters; `None` uses the median nearest-neighbor distance.
    pub bandwidth_m: Option<f64>,
    /// Edge samples drawn per epoch.
    pub samples_per_epoch: usize,
    pub seed: u64,
}

impl Default for LineConfig {
    fn default() -> Self {
        LineConfig {
            dim: 128,
            k_neighbors: 8,
            n_negative: 5,
            n_epochs: 50,
            learning_rate: 0.025,
            bandwidth_m: None,
            samples_per_epoch: 10_000,
            seed: 0,
        }
    }
}

impl LineConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.into()));
        if self.dim == 0 || !self.dim.is_multiple_of(2) {
            return bad("embedding dim must be positive and even");
        }
        if self.k_neighbors == 0 || self.n_negative == 0 || self.n_epochs == 0 || self.samples_per_epoch == 0 {
            return bad("k_neighbors, n_negative, n_epochs and samples_per_epoch must be positive");
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return bad("learning_rate must be positive");
        }
        if matches!(self.bandwidth_m, Some(s) if !(s > 0.0) || !s.is_finite()) {
            return bad("bandwidth must be positive");
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LineReport {
    pub embedding: EmbeddingMatrix,
    /// Mean negative-sampling loss per epoch.
    pub first_order_loss: Vec<f64>,
    pub second_order_loss: Vec<f64>,
}

struct Half {
    half: usize,
    vertex: Vec<f64>,
    context: Option<Vec<f64>>,
}

impl Half {
    /// One positive and its negatives for source `i`. Returns the loss.
    fn update(&mut self, i: usize, targets: &[(usize, f64)], lr: f64, err: &mut [f64]) -> f64 {
        let h = self.half;
        err.fill(0.0);
        let mut loss = 0.0;
        for &(j, label) in targets {
            let (src, tgt) = match &mut self.context {
                Some(ctx) => (&mut self.vertex[i * h..(i + 1) * h], &mut ctx[j * h..(j + 1) * h]),
                None => {
                    // i != j, so the two rows are disjoint
                    let (lo, hi) = (i.min(j), i.max(j));
                    let (a, b) = self.vertex.split_at_mut(hi * h);
                    let (lo_row, hi_row) = (&mut a[lo * h..(lo + 1) * h], &mut b[..h]);
                    if i < j {
                        (lo_row, hi_row)
                    } else {
                        (hi_row, lo_row)
                    }
                }
            };
            let f: f64 = src.iter().zip(tgt.iter()).map(|(a, b)| a * b).sum();
            loss -= if label > 0.5 { math::log_sigmoid(f) } else { math::log_sigmoid(-f) };
            let g = (label - math::sigmoid(f)) * lr;
            for k in 0..h {
                err[k] += g * tgt[k];
                tgt[k] += g * src[k];
            }
        }
        for (v, e) in self.vertex[i * h..(i + 1) * h].iter_mut().zip(err.iter()) {
            *v += e;
        }
        loss
    }

    fn first_non_finite(&self) -> Option<usize> {
        self.vertex
            .iter()
            .chain(self.context.iter().flatten())
            .position(|v| !v.is_finite())
    }
}

/// Learns first- and second-order LINE embeddings of the graph's nodes.
///
/// Arcs are drawn in both directions with probability proportional to
/// their weight; each positive is paired with `n_negative` nodes drawn from
/// the degree^0.75 noise distribution (draws hitting the source or the
/// positive target are skipped). The result has `n_cells + 1` rows laid out
/// as `[first-order | second-order]`.
pub fn train_line(g: &SpatialGraph, n_cells: usize, cfg: &LineConfig) -> Result<LineReport> {
    cfg.validate()?;
    let n = g.nodes().len();
    if n < 2 || g.edges().is_empty() {
        return Err(Error::Invalid("graph needs at least one edge".into()));
    }
    if let Some(&c) = g.nodes().iter().find(|&&c| c >= n_cells) {
        return Err(Error::UnknownNode(c));
    }
    let adjacency = g.adjacency();
    if let Some(i) = adjacency.iter().position(|a| a.is_empty()) {
        return Err(Error::Invalid(alloc::format!("node {} has no edges", g.nodes()[i])));
    }

    let mut arcs = Vec::with_capacity(2 * g.edges().len());
    let mut arc_w = Vec::with_capacity(2 * g.edges().len());
    for (i, adj) in adjacency.iter().enumerate() {
        for &(j, w) in adj {
            arcs.push((i, j));
            arc_w.push(w);
        }
    }
    let degree_noise: Vec<f64> = adjacency
        .iter()
        .map(|a| math::powf(a.iter().map(|e| e.1).sum::<f64>(), 0.75))
        .collect();
    let invalid = |e| Error::Invalid(alloc::format!("sampling table: {e}"));
    let arc_table = WeightedAliasIndex::new(arc_w).map_err(invalid)?;
    let noise_table = WeightedAliasIndex::new(degree_noise).map_err(invalid)?;

    let half = cfg.dim / 2;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let init = |rng: &mut ChaCha8Rng| -> Vec<f64> {
        (0..n * half).map(|_| (rng.random::<f64>() - 0.5) / half as f64).collect()
    };
    let mut first = Half { half, vertex: init(&mut rng), context: None };
    let mut second = Half { half, vertex: init(&mut rng), context: Some(vec![0.0; n * half]) };

    let total = (cfg.n_epochs * cfg.samples_per_epoch) as f64;
    let mut step = 0usize;
    let mut err = vec![0.0; half];
    let mut targets = Vec::with_capacity(cfg.n_negative + 1);
    let mut first_loss = Vec::with_capacity(cfg.n_epochs);
    let mut second_loss = Vec::with_capacity(cfg.n_epochs);
    for epoch in 0..cfg.n_epochs {
        let (mut l1, mut l2) = (0.0, 0.0);
        for _ in 0..cfg.samples_per_epoch {
            let lr = cfg.learning_rate * (1.0 - step as f64 / total).max(1e-4);
            step += 1;
            let (i, j) = arcs[arc_table.sample(&mut rng)];
            for (model, acc) in [(&mut first, &mut l1), (&mut second, &mut l2)] {
                targets.clear();
                targets.push((j, 1.0));
                for _ in 0..cfg.n_negative {
                    let neg = noise_table.sample(&mut rng);
                    if neg != i && neg != j {
                        targets.push((neg, 0.0));
                    }
                }
                *acc += model.update(i, &targets, lr, &mut err);
            }
        }
        if first.first_non_finite().is_some() || second.first_non_finite().is_some() {
            return Err(Error::NonFinite { what: "LINE embedding (epoch)", index: epoch });
        }
        first_loss.push(l1 / cfg.samples_per_epoch as f64);
        second_loss.push(l2 / cfg.samples_per_epoch as f64);
    }

    let mut table = Array::zeros(&[n_cells + 1, cfg.dim]);
    for (i, &cell) in g.nodes().iter().enumerate() {
        let row = table.row_mut(EmbeddingMatrix::row_of(cell));
        row[..half].copy_from_slice(&first.vertex[i * half..(i + 1) * half]);
        row[half..].copy_from_slice(&second.vertex[i * half..(i + 1) * half]);
    }
    Ok(LineReport {
        embedding: EmbeddingMatrix::from_array(table)?,
        first_order_loss: first_loss,
        second_order_loss: second_loss,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::build_spatial_graph;
    use crate::mobility::GridSpec;

    fn dot(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    }

    fn cosine(a: &[f64], b: &[f64]) -> f64 {
        dot(a, b) / libm::sqrt(dot(a, a) * dot(b, b))
    }

    fn small(seed: u64) -> LineConfig {
        LineConfig {
            dim: 16,
            n_epochs: 20,
            samples_per_epoch: 2_000,
            seed,
            ..LineConfig::default()
        }
    }

    #[test]
    fn single_edge_first_order_saturates() {
        let g = SpatialGraph::from_edges(&[(0, 1, 1.0)]).unwrap();
        let m = train_line(&g, 2, &small(1)).unwrap().embedding;
        let s = math::sigmoid(dot(m.first_order(0).unwrap(), m.first_order(1).unwrap()));
        assert!(s > 0.9, "sigmoid(u.v) = {s}");
    }

    #[test]
    fn fixed_seed_is_deterministic() {
        let g = SpatialGraph::from_edges(&[(0, 1, 1.0), (1, 2, 0.5), (2, 3, 0.7), (0, 3, 0.2)]).unwrap();
        let a = train_line(&g, 4, &small(9)).unwrap();
        let b = train_line(&g, 4, &small(9)).unwrap();
        assert_eq!(a, b);
        let c = train_line(&g, 4, &small(10)).unwrap();
        assert_ne!(a.embedding, c.embedding);
    }

    #[test]
    fn shared_neighborhoods_align_second_order() {
        // a, b hang off L; c, d hang off R; L and R are joined.
        let (a, b, l, r, c, d) = (0, 1, 2, 3, 4, 5);
        let g = SpatialGraph::from_edges(&[(a, l, 1.0), (b, l, 1.0), (l, r, 1.0), (r, c, 1.0), (r, d, 1.0)]).unwrap();
        let cfg = LineConfig { dim: 32, ..small(4) };
        let m = train_line(&g, 6, &cfg).unwrap().embedding;
        let so = |x| m.second_order(x).unwrap();
        assert!(cosine(so(a), so(b)) > cosine(so(a), so(c)));
        assert!(cosine(so(c), so(d)) > cosine(so(c), so(b)));
    }

    #[test]
    fn grid_embedding_is_bounded_and_loss_trends_down() {
        let grid = GridSpec::new(40.0, 116.0, 500.0, 8, 8).unwrap();
        let cells: Vec<usize> = (0..64).collect();
        let g = build_spatial_graph(&grid, &cells, 8, None).unwrap();
        let cfg = LineConfig { dim: 32, ..LineConfig::default() };
        let report = train_line(&g, 64, &cfg).unwrap();
        let t = report.embedding.as_array();
        for r in 0..t.rows() {
            let norm = libm::sqrt(dot(t.row(r), t.row(r)));
            assert!(norm < 1e3);
        }
        assert!(t.row(0).iter().all(|&v| v == 0.0));
        let windows: Vec<f64> = report
            .first_order_loss
            .chunks(10)
            .map(|w| w.iter().sum::<f64>() / w.len() as f64)
            .collect();
        assert!(windows.last() < windows.first(), "{windows:?}");
        for w in windows.windows(2) {
            assert!(w[1] <= w[0] * 1.05, "{windows:?}");
        }
    }

    #[test]
    fn rejects_bad_config_and_isolated_nodes() {
        let g = SpatialGraph::from_edges(&[(0, 1, 1.0)]).unwrap();
        assert!(train_line(&g, 2, &LineConfig { dim: 7, ..small(0) }).is_err());
        assert!(train_line(&g, 1, &small(0)).is_err());
    }
}
