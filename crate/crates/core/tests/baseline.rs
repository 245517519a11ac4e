use std::f64::consts::PI;

use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use srmd3d::baseline::{dbscan, srmd_decompose, ClusterLabeling, SrmdConfig};
use srmd3d::features::{evaluate_atom, sample_uniform_2d};
use srmd3d::signal::{crossover_chirp_pair, matched_snr_db, tones, Signal};

/// Partition of point indices into clusters, independent of label numbering.
fn partition(l: &ClusterLabeling) -> Vec<Vec<usize>> {
    let mut groups = l.groups();
    for g in &mut groups {
        g.sort_unstable();
    }
    groups.sort();
    groups
}

#[test]
fn two_blobs_give_two_clusters() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut pts = Vec::new();
    for c in [[0.2, 0.2], [0.8, 0.7]] {
        for _ in 0..50 {
            pts.push([c[0] + rng.random_range(-0.02..0.02), c[1] + rng.random_range(-0.02..0.02)]);
        }
    }
    pts.push([0.5, 0.95]);
    let l = dbscan(&pts, 0.03, 4).unwrap();
    assert_eq!(l.n_clusters, 2);
    assert_eq!(l.n_noise(), 1);
    assert_eq!(l.labels[100], -1);
    assert!(l.labels[..50].iter().all(|&v| v == l.labels[0]));
    assert!(l.labels[50..100].iter().all(|&v| v == l.labels[50]));
    assert_ne!(l.labels[0], l.labels[50]);
}

#[test]
fn parallel_lines_separate() {
    let pts: Vec<[f64; 2]> = (0..100)
        .flat_map(|i| {
            let x = i as f64 / 100.0;
            [[x, 0.3], [x, 0.6]]
        })
        .collect();
    let l = dbscan(&pts, 0.03, 3).unwrap();
    assert_eq!(l.n_clusters, 2);
    assert_eq!(l.n_noise(), 0);
    assert!(pts.iter().zip(&l.labels).all(|(p, &v)| (p[1] < 0.5) == (v == l.labels[0])));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn dbscan_partition_ignores_point_order(seed in any::<u64>(), n in 5usize..120) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pts: Vec<[f64; 2]> = (0..n).map(|_| [rng.random::<f64>(), rng.random::<f64>()]).collect();
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        let shuffled: Vec<[f64; 2]> = order.iter().map(|&i| pts[i]).collect();
        let a = dbscan(&pts, 0.1, 3).unwrap();
        let b = dbscan(&shuffled, 0.1, 3).unwrap();
        let mut mapped = ClusterLabeling { labels: vec![0; n], n_clusters: b.n_clusters };
        for (k, &i) in order.iter().enumerate() {
            mapped.labels[i] = b.labels[k];
        }
        prop_assert_eq!(a.n_clusters, b.n_clusters);
        prop_assert_eq!(partition(&a), partition(&mapped));
    }
}

#[test]
fn uniform_atoms_are_gaussian_windowed_sinusoids() {
    let atoms = sample_uniform_2d(200, 1.0, 512.0, 4);
    let times: Vec<f64> = (0..256).map(|i| i as f64 / 256.0).collect();
    let alpha = 0.0125f64.powi(2);
    for a in &atoms {
        assert_eq!(a.beta, 0.0);
        let col = evaluate_atom(a, &times, alpha);
        for (&t, &v) in times.iter().zip(&col) {
            let env = (-(t - a.tau).powi(2) / (2.0 * alpha)).exp();
            let arg = 2.0 * PI * a.xi * t;
            let direct = env * if a.phi == 0 { arg.cos() } else { arg.sin() };
            assert!((v - direct).abs() < 1e-12);
        }
    }
}

#[test]
fn tones_split_into_two_dominant_clusters() {
    let (x, truth) = tones(&[100.0, 300.0], 1024.0, 1.0).unwrap();
    let r = srmd_decompose(&x, &SrmdConfig::default()).unwrap();
    assert!(r.modes.len() >= 2);
    let energy: Vec<f64> = r.modes.modes().iter().map(Signal::energy).collect();
    let total: f64 = energy.iter().sum();
    assert!((energy[0] + energy[1]) / total > 0.95, "{energy:?}");
    let snr = matched_snr_db(&truth, &r.modes).unwrap();
    assert!(snr.iter().all(|&s| s > 20.0), "{snr:?}");
}

#[test]
fn crossover_pair_defeats_the_baseline() {
    let (x, truth) = crossover_chirp_pair(1024.0, 1.0).unwrap();
    let cfg = SrmdConfig {
        n_features: 2000,
        ..Default::default()
    };
    let r = srmd_decompose(&x, &cfg).unwrap();
    let snr = matched_snr_db(&truth, &r.modes).unwrap();
    let mean = snr.iter().sum::<f64>() / snr.len() as f64;
    assert!(mean <= 5.0, "{snr:?}");
}

#[test]
fn zero_signal_has_no_modes() {
    let x = Signal::zeros(512, 1024.0).unwrap();
    let cfg = SrmdConfig {
        n_features: 200,
        ..Default::default()
    };
    let r = srmd_decompose(&x, &cfg).unwrap();
    assert!(r.modes.is_empty());
    assert!(r.discarded.samples().iter().all(|&v| v == 0.0));
}

#[test]
fn clusters_and_discarded_sum_to_the_fit() {
    let (x, _) = tones(&[100.0, 300.0], 1024.0, 1.0).unwrap();
    let cfg = SrmdConfig {
        n_features: 1000,
        max_solver_iter: 200,
        ..Default::default()
    };
    let r = srmd_decompose(&x, &cfg).unwrap();
    let times = x.relative_times();
    let mut fit = vec![0.0; x.len()];
    for (a, &c) in r.atoms.atoms.iter().zip(&r.solution.coefficients) {
        if c != 0.0 {
            for (f, v) in fit.iter_mut().zip(evaluate_atom(a, &times, r.atoms.alpha)) {
                *f += c * v;
            }
        }
    }
    let parts = r.modes.sum().unwrap().add(&r.discarded).unwrap();
    let scale = fit.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    for (a, b) in parts.samples().iter().zip(&fit) {
        assert!((a - b).abs() <= 1e-10 * scale);
    }
}
