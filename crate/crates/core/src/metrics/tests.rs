#![allow(clippy::needless_range_loop)]

use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::mobility::{GridSpec, Trajectory};

const LN2: f64 = core::f64::consts::LN_2;

fn grid(side: usize) -> GridSpec {
    GridSpec::new(39.9, 116.3, 1000.0, side, side).unwrap()
}

fn traj(id: &str, cells: Vec<usize>) -> Trajectory {
    Trajectory { user_id: id.to_string(), day_index: 0, cells }
}

fn random_trajs(n: usize, n_cells: usize, slots: usize, seed: u64) -> Vec<Trajectory> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|u| {
            let mut c = rng.random_range(0..n_cells);
            let cells = (0..slots)
                .map(|_| {
                    if rng.random::<f64>() < 0.4 {
                        c = rng.random_range(0..n_cells);
                    }
                    c
                })
                .collect();
            traj(&alloc::format!("u{}", u % (n / 2).max(1)), cells)
        })
        .collect()
}

fn random_dist(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let mut v: Vec<f64> = (0..n).map(|_| if rng.random::<f64>() < 0.2 { 0.0 } else { rng.random::<f64>() }).collect();
    v[0] += 1e-3;
    let s: f64 = v.iter().sum();
    v.iter_mut().for_each(|x| *x /= s);
    v
}

#[test]
fn jsd_laws_on_random_pairs() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..1000 {
        let n = rng.random_range(2..40);
        let (p, q) = (random_dist(&mut rng, n), random_dist(&mut rng, n));
        let a = jsd(&p, &q).unwrap();
        assert_eq!(a, jsd(&q, &p).unwrap());
        assert!((0.0..=LN2).contains(&a));
        assert_eq!(jsd(&p, &p).unwrap(), 0.0);
    }
}

#[test]
fn jsd_disjoint_and_errors() {
    assert!((jsd(&[1.0, 0.0], &[0.0, 1.0]).unwrap() - LN2).abs() < 1e-15);
    assert!(jsd(&[1.0], &[0.5, 0.5]).is_err());
    assert!(jsd(&[0.7, 0.7], &[0.5, 0.5]).is_err());
    assert!(jsd(&[-0.5, 1.5], &[0.5, 0.5]).is_err());
}

#[test]
fn stationary_trajectory_features() {
    let g = grid(4);
    let b = Binning::standard(48);
    let t = traj("a", vec![5; 48]);
    assert_eq!(radius_km(&t, &g), 0.0);
    assert_eq!(daily_locations(&t), 1);
    assert_eq!(durations_h(&t, b.slot_hours), vec![24.0]);
    assert!(distances_km(&t, &g).iter().all(|&d| d == 0.0));
    let f = trajectory_features(&[t], &g, &b).unwrap();
    assert_eq!(f.distance.masses[0], 1.0);
    assert_eq!(f.duration.masses[47], 1.0);
    assert_eq!(f.daily_loc.masses[0], 1.0);
}

#[test]
fn alternating_trajectory_features() {
    let g = grid(4);
    let t = traj("a", (0..48).map(|i| if i % 2 == 0 { 0 } else { 2 }).collect());
    assert!((radius_km(&t, &g) - 1.0).abs() < 1e-12);
    let f = trajectory_features(&[t], &g, &Binning::standard(48)).unwrap();
    let bin = f.distance.edges.partition_point(|&e| e <= 2.0) - 1;
    assert_eq!(f.distance.masses[bin], 1.0);
    assert_eq!(f.duration.masses[0], 1.0);
}

#[test]
fn binning_layout() {
    let b = Binning::standard(48);
    assert_eq!(b.distance_km.len(), 52);
    assert_eq!(b.distance_km[0], 0.0);
    assert!((b.distance_km[1] - 0.1).abs() < 1e-12 && (b.distance_km[51] - 100.0).abs() < 1e-9);
    assert_eq!(b.duration_h.len(), 49);
    assert_eq!(b.daily_loc.len(), 49);
    assert_eq!(b.slot_hours, 0.5);
}

fn oracle_bin(edges: &[f64], v: f64) -> usize {
    let bins = edges.len() - 1;
    let mut idx = 0;
    for i in 0..bins {
        if v >= edges[i] {
            idx = i;
        }
    }
    idx.min(bins - 1)
}

fn oracle_hist(edges: &[f64], values: &[f64]) -> Vec<f64> {
    let mut h = vec![0.0; edges.len() - 1];
    for &v in values {
        h[oracle_bin(edges, v)] += 1.0;
    }
    h.iter().map(|c| c / values.len() as f64).collect()
}

#[test]
fn feature_histograms_match_brute_force() {
    let g = grid(16);
    let b = Binning::standard(48);
    let trajs = random_trajs(50, 256, 48, 7);
    let f = trajectory_features(&trajs, &g, &b).unwrap();
    let (mut dist, mut rad, mut dur, mut loc) = (vec![], vec![], vec![], vec![]);
    for t in &trajs {
        let pts: Vec<(f64, f64)> = t.cells.iter().map(|&c| ((c % 16) as f64, (c / 16) as f64)).collect();
        for w in pts.windows(2) {
            dist.push(((w[0].0 - w[1].0).powi(2) + (w[0].1 - w[1].1).powi(2)).sqrt());
        }
        let n = pts.len() as f64;
        let mut pair = 0.0;
        for i in 0..pts.len() {
            for j in i + 1..pts.len() {
                pair += (pts[i].0 - pts[j].0).powi(2) + (pts[i].1 - pts[j].1).powi(2);
            }
        }
        rad.push((pair / (n * n)).sqrt());
        let mut starts = vec![0];
        starts.extend((1..t.cells.len()).filter(|&i| t.cells[i] != t.cells[i - 1]));
        starts.push(t.cells.len());
        dur.extend(starts.windows(2).map(|w| (w[1] - w[0]) as f64 * 0.5));
        let mut s = t.cells.clone();
        s.sort();
        s.dedup();
        loc.push(s.len() as f64);
    }
    for (h, e, v) in [
        (&f.distance, &b.distance_km, &dist),
        (&f.radius, &b.radius_km, &rad),
        (&f.duration, &b.duration_h, &dur),
        (&f.daily_loc, &b.daily_loc, &loc),
    ] {
        let o = oracle_hist(e, v);
        for (a, b) in h.masses.iter().zip(&o) {
            assert!((a - b).abs() < 1e-12, "{:?} vs {:?}", h.masses, o);
        }
        assert!((h.masses.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }
}

#[test]
fn rank_single_cell_and_ties() {
    let (g, i) = rank_distributions(&[traj("a", vec![3; 4]), traj("b", vec![3; 4])]).unwrap();
    assert_eq!(g.len(), GRANK_K);
    assert_eq!(i.len(), IRANK_K);
    assert_eq!((g[0], g[1]), (1.0, 0.0));
    assert_eq!(i[0], 1.0);
    let (g, _) = rank_distributions(&[traj("a", vec![9, 9, 2, 2])]).unwrap();
    assert_eq!((g[0], g[1]), (0.5, 0.5));
    assert!(rank_distributions(&[]).is_err());
}

#[test]
fn ranks_match_brute_force() {
    let trajs = random_trajs(40, 30, 12, 3);
    let (g, i) = rank_distributions(&trajs).unwrap();
    let curve = |cells: &[usize], k: usize| {
        let mut counts = vec![0u64; 30];
        cells.iter().for_each(|&c| counts[c] += 1);
        let mut out = vec![];
        for _ in 0..k {
            let best = (0..30).max_by_key(|&c| (counts[c], core::cmp::Reverse(c))).unwrap();
            out.push(counts[best] as f64);
            counts[best] = 0;
        }
        let s: f64 = out.iter().sum();
        out.iter().map(|v| v / s).collect::<Vec<f64>>()
    };
    let all: Vec<usize> = trajs.iter().flat_map(|t| t.cells.clone()).collect();
    let og = curve(&all, 30);
    for k in 0..GRANK_K {
        assert!((g[k] - og.get(k).copied().unwrap_or(0.0)).abs() < 1e-12);
    }
    let mut users: Vec<&str> = trajs.iter().map(|t| t.user_id.as_str()).collect();
    users.sort();
    users.dedup();
    let mut oi = [0.0; IRANK_K];
    for u in &users {
        let cells: Vec<usize> = trajs.iter().filter(|t| t.user_id == *u).flat_map(|t| t.cells.clone()).collect();
        for (a, v) in oi.iter_mut().zip(curve(&cells, IRANK_K)) {
            *a += v / users.len() as f64;
        }
    }
    for k in 0..IRANK_K {
        assert!((i[k] - oi[k]).abs() < 1e-12);
    }
}

#[test]
fn population_metric_cases() {
    let g = grid(4);
    let real = random_trajs(10, 16, 8, 1);
    let same = population_metric(&real, &real, &g, 4).unwrap();
    assert_eq!(same.jsd, 0.0);
    let far: Vec<usize> = (0..16).filter(|c| real.iter().all(|t| !t.cells.contains(c))).collect();
    let gen = vec![traj("g", vec![far[0]; 8])];
    assert!((population_metric(&real, &gen, &g, 4).unwrap().jsd - LN2).abs() < 1e-12);
    assert!(population_metric(&real, &real, &g, 3).is_err());
    assert!(population_metric(&real, &[], &g, 4).is_err());
}

#[test]
fn coarse_population_equals_block_summed_fine_fields() {
    let g = grid(64);
    let real = random_trajs(30, 64 * 64, 48, 11);
    let gen = random_trajs(30, 64 * 64, 48, 12);
    let fine = population_metric(&real, &gen, &g, 64).unwrap();
    let block = |a: &crate::autodiff::Array| {
        let mut out = vec![0.0; 256];
        for r in 0..64 {
            for c in 0..64 {
                out[(r / 4) * 16 + c / 4] += a.get(r, c);
            }
        }
        out
    };
    let (br, bg) = (block(&fine.real), block(&fine.generated));
    let coarse = population_metric(&real, &gen, &g, 16).unwrap();
    for (a, b) in coarse.real.data().iter().zip(&br) {
        assert!((a - b).abs() < 1e-12);
    }
    assert!((coarse.jsd - jsd(&br, &bg).unwrap()).abs() < 1e-12);
    assert!(coarse.jsd <= fine.jsd + 1e-12);
}

#[test]
fn od_cases() {
    let a = od_matrix(&[traj("a", vec![0, 1, 1, 2])], 4).unwrap();
    assert_eq!(a.total(), 3.0);
    assert_eq!(a.get(1, 1), 1.0);
    assert!((od_similarity(&a, &a).unwrap().value - 1.0).abs() < 1e-12);
    let b = od_matrix(&[traj("b", vec![3, 0])], 4).unwrap();
    assert_eq!(od_similarity(&a, &b).unwrap().value, 0.0);
    let z = OdMatrix::new(4);
    let s = od_similarity(&a, &z).unwrap();
    assert!(s.zero_matrix && s.value == 0.0);
    assert!(od_similarity(&a, &OdMatrix::new(5)).is_err());
    assert!(od_matrix(&[traj("c", vec![7, 0])], 4).is_err());
}

#[test]
fn od_similarity_matches_dense_oracle() {
    let n = 20;
    let a = od_matrix(&random_trajs(30, n, 10, 5), n).unwrap();
    let b = od_matrix(&random_trajs(30, n, 10, 6), n).unwrap();
    let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
    for i in 0..n {
        for j in 0..n {
            let (x, y) = (a.get(i, j), b.get(i, j));
            dot += x * y;
            na += x * x;
            nb += y * y;
        }
    }
    let want = dot / (na.sqrt() * nb.sqrt());
    assert!((od_similarity(&a, &b).unwrap().value - want).abs() < 1e-12);
}

#[test]
fn hourly_od_partitions_transitions() {
    let trajs = random_trajs(10, 9, 48, 2);
    let all = od_matrix(&trajs, 9).unwrap();
    let hourly = od_matrix_hourly(&trajs, 9, 0.5).unwrap();
    assert_eq!(hourly.len(), 24);
    assert_eq!(hourly.iter().map(|m| m.total()).sum::<f64>(), all.total());
    assert_eq!(hourly[0].total(), 20.0);
    assert_eq!(hourly[23].total(), 10.0);
    let sims = od_similarity_hourly(&hourly, &hourly).unwrap();
    assert!(sims.iter().all(|s| (s.value - 1.0).abs() < 1e-12));
}

#[test]
fn report_identity_and_order_invariance() {
    let g = grid(16);
    let real = random_trajs(40, 256, 48, 21);
    let r = report(&real, &real, &g, 16).unwrap();
    for v in [r.distance_jsd, r.radius_jsd, r.duration_jsd, r.dailyloc_jsd, r.grank_jsd, r.irank_jsd] {
        assert_eq!(v, Some(0.0));
    }
    assert_eq!(r.popdist_jsd, 0.0);
    assert!((r.od_cosine - 1.0).abs() < 1e-12 && !r.od_zero_matrix);

    let gen = random_trajs(40, 256, 48, 22);
    let mut shuffled = gen.clone();
    shuffled.reverse();
    let a = report(&real, &gen, &g, 16).unwrap();
    let b = report(&real, &shuffled, &g, 16).unwrap();
    assert_eq!(a, b);
    for v in [a.distance_jsd, a.radius_jsd, a.duration_jsd, a.dailyloc_jsd, a.grank_jsd, a.irank_jsd] {
        assert!((0.0..=LN2).contains(&v.unwrap()));
    }
}

#[test]
fn single_slot_sets_report_missing_distance() {
    let g = grid(4);
    let a = vec![traj("a", vec![1]), traj("b", vec![2])];
    let r = report(&a, &a, &g, 4).unwrap();
    assert_eq!(r.distance_jsd, None);
    assert!(r.od_zero_matrix);
    assert_eq!(r.radius_jsd, Some(0.0));
}

proptest! {
    #[test]
    fn jsd_is_symmetric_and_bounded(p in proptest::collection::vec(0.0f64..1.0, 2..30), seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s: f64 = p.iter().sum::<f64>() + 1e-3;
        let mut p: Vec<f64> = p.iter().map(|v| v / s).collect();
        p[0] += 1e-3 / s;
        let q = random_dist(&mut rng, p.len());
        let a = jsd(&p, &q).unwrap();
        prop_assert!((0.0..=LN2).contains(&a));
        prop_assert_eq!(a, jsd(&q, &p).unwrap());
    }

    #[test]
    fn od_scale_invariance(scale in 1e-3f64..1e3, seed in 0u64..1000) {
        let a = od_matrix(&random_trajs(8, 12, 6, seed), 12).unwrap();
        let b = od_matrix(&random_trajs(8, 12, 6, seed + 1), 12).unwrap();
        let base = od_similarity(&a, &b).unwrap().value;
        prop_assert!((od_similarity(&a.scaled(scale), &b).unwrap().value - base).abs() < 1e-12);
        prop_assert!((od_similarity(&a, &a.scaled(scale)).unwrap().value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn histograms_ignore_order_and_relabeling(seed in 0u64..500) {
        let g = grid(8);
        let b = Binning::standard(12);
        let trajs = random_trajs(10, 64, 12, seed);
        let mut other: Vec<Trajectory> = trajs.iter().rev().cloned().collect();
        for (i, t) in other.iter_mut().enumerate() {
            t.user_id = alloc::format!("x{i}");
        }
        prop_assert_eq!(trajectory_features(&trajs, &g, &b).unwrap(), trajectory_features(&other, &g, &b).unwrap());
    }
}
