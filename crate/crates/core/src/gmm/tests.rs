#![allow(clippy::needless_range_loop)]

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};

use super::*;

fn uniform_points(seed: u64, n: usize, dim: usize) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let u = Uniform::new(-3.0, 3.0).unwrap();
    (0..n).map(|_| (0..dim).map(|_| u.sample(&mut rng)).collect()).collect()
}

fn two_clusters(seed: u64, per_cluster: usize, dim: usize) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for sign in [1.0, -1.0] {
        for _ in 0..per_cluster {
            let mut v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
            v[0] += 10.0 * sign;
            out.push(v);
        }
    }
    out
}

/// Direct (non-log-space) mixture density.
fn naive_density(m: &GmmModel, x: &[f64]) -> f64 {
    (0..m.k)
        .map(|i| {
            let mut p = m.weights[i];
            for j in 0..m.dim {
                let v = m.variances[i][j];
                let d = x[j] - m.means[i][j];
                p *= (-(d * d) / (2.0 * v)).exp() / (2.0 * std::f64::consts::PI * v).sqrt();
            }
            p
        })
        .sum()
}

fn config(seed: u64) -> GmmConfig {
    GmmConfig {
        seed,
        ..GmmConfig::default()
    }
}

#[test]
fn single_component_is_closed_form() {
    let samples = uniform_points(1, 50, 3);
    let model = fit_gmm(&samples, 1, &config(0)).unwrap();
    assert_eq!(model.weights, [1.0]);
    for j in 0..3 {
        let mean: f64 = samples.iter().map(|s| s[j]).sum::<f64>() / 50.0;
        let var: f64 = samples.iter().map(|s| (s[j] - mean).powi(2)).sum::<f64>() / 50.0;
        assert!((model.means[0][j] - mean).abs() < 1e-12);
        assert!((model.variances[0][j] - var).abs() < 1e-12);
    }
}

#[test]
fn recovers_two_separated_clusters() {
    let samples = two_clusters(42, 200, 3);
    let model = fit_gmm(&samples, 2, &config(7)).unwrap();
    let (pos, neg) = if model.means[0][0] > 0.0 { (0, 1) } else { (1, 0) };
    let target = |sign: f64, m: &[f64]| (m[0] - 10.0 * sign).abs() < 0.2 && m[1..].iter().all(|x| x.abs() < 0.2);
    assert!(target(1.0, &model.means[pos]), "{:?}", model.means);
    assert!(target(-1.0, &model.means[neg]), "{:?}", model.means);
    for w in &model.weights {
        assert!((w - 0.5).abs() < 0.05);
    }
}

#[test]
fn em_is_monotone() {
    for seed in 0..5 {
        let samples = uniform_points(100 + seed, 100, 4);
        let fit = fit_gmm_traced(
            &samples,
            4,
            &GmmConfig {
                tol: 0.0,
                max_iter: 60,
                ..config(seed)
            },
        )
        .unwrap();
        assert!(fit.log_likelihood_trace.len() > 2);
        for w in fit.log_likelihood_trace.windows(2) {
            assert!(w[1] >= w[0] - 1e-9, "{} -> {}", w[0], w[1]);
        }
    }
}

#[test]
fn more_iterations_never_hurt() {
    let samples = uniform_points(9, 120, 3);
    let mut last = f64::NEG_INFINITY;
    for iters in [1, 3, 10, 40] {
        let cfg = GmmConfig {
            max_iter: iters,
            tol: 0.0,
            ..config(3)
        };
        let ll = fit_gmm(&samples, 3, &cfg).unwrap().log_likelihood(&samples).unwrap();
        assert!(ll >= last - 1e-9);
        last = ll;
    }
}

#[test]
fn fit_is_reproducible() {
    let samples = uniform_points(5, 80, 3);
    let a = fit_gmm(&samples, 3, &config(11)).unwrap();
    let b = fit_gmm(&samples, 3, &config(11)).unwrap();
    assert_eq!(a, b);
}

#[test]
fn model_invariants_after_fit() {
    let samples = uniform_points(6, 90, 2);
    let fit = fit_gmm_traced(&samples, 5, &config(2)).unwrap();
    let m = &fit.model;
    assert!((m.weights.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    assert!(m.weights.iter().all(|&w| w > 0.0));
    assert!(m.variances.iter().flatten().all(|&v| v >= fit.variance_floor));
}

#[test]
fn variance_floor_applies_to_collapsed_components() {
    // Three exact duplicates pull a component onto a point mass.
    let mut samples = uniform_points(8, 30, 2);
    samples.extend(std::iter::repeat_n(vec![5.0, 5.0], 3));
    let fit = fit_gmm_traced(&samples, 6, &config(1)).unwrap();
    assert!(fit.model.variances.iter().flatten().all(|&v| v >= fit.variance_floor));
    assert!(fit.model.log_likelihood(&samples).unwrap().is_finite());
}

#[test]
fn fit_errors() {
    let samples = uniform_points(1, 3, 2);
    assert!(fit_gmm(&samples, 4, &config(0)).is_err());
    assert!(fit_gmm(&samples, 0, &config(0)).is_err());
    let mut bad = samples.clone();
    bad[1][0] = f64::NAN;
    assert!(fit_gmm(&bad, 2, &config(0)).is_err());
}

fn two_unit_gaussians(separation: f64) -> GmmModel {
    GmmModel {
        k: 2,
        dim: 2,
        weights: vec![0.5, 0.5],
        means: vec![vec![0.0, 0.0], vec![separation, 0.0]],
        variances: vec![vec![1.0, 1.0], vec![1.0, 1.0]],
    }
}

#[test]
fn posterior_examples() {
    let single = GmmModel {
        k: 1,
        dim: 2,
        weights: vec![1.0],
        means: vec![vec![0.0, 0.0]],
        variances: vec![vec![2.0, 0.5]],
    };
    assert_eq!(single.posterior(&[100.0, -3.0]).unwrap(), [1.0]);

    let far = two_unit_gaussians(20.0);
    assert!(far.posterior(&[0.0, 0.0]).unwrap()[0] > 0.999);

    let g = two_unit_gaussians(4.0);
    let p = g.posterior(&[2.0, 1.5]).unwrap();
    assert!((p[0] - 0.5).abs() < 1e-9 && (p[1] - 0.5).abs() < 1e-9);

    assert!(g.posterior(&[1.0]).is_err());
}

#[test]
fn posterior_survives_extreme_inputs() {
    let far = two_unit_gaussians(20.0);
    let p = far.posterior(&[1e4, 0.0]).unwrap();
    assert!(p.iter().all(|x| x.is_finite()));
    assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
}

#[test]
fn log_likelihood_standard_normal_at_mean() {
    let m = GmmModel {
        k: 1,
        dim: 1,
        weights: vec![1.0],
        means: vec![vec![0.0]],
        variances: vec![vec![1.0]],
    };
    let ll = m.log_likelihood(&[vec![0.0]]).unwrap();
    assert!((ll + 0.5 * (2.0 * std::f64::consts::PI).ln()).abs() < 1e-15);
    assert!(m.log_likelihood::<Vec<f64>>(&[]).is_err());
}

#[test]
fn log_likelihood_matches_direct_density() {
    let samples = uniform_points(3, 200, 3);
    let model = fit_gmm(&samples, 4, &config(5)).unwrap();
    let points = uniform_points(77, 10, 3);
    let direct: f64 = points.iter().map(|x| naive_density(&model, x).ln()).sum::<f64>() / 10.0;
    let ll = model.log_likelihood(&points).unwrap();
    assert!((ll - direct).abs() < 1e-9, "{ll} vs {direct}");
}

#[test]
fn model_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let model = fit_gmm(&uniform_points(4, 40, 2), 3, &config(0)).unwrap();
    let path = dir.path().join("gmm.json");
    model.save(&path).unwrap();
    assert_eq!(GmmModel::load(&path).unwrap(), model);
    let v: serde_json::Value = serde_json::from_slice(&std::fs::read(&path).unwrap()).unwrap();
    for key in ["K", "dim", "weights", "means", "variances"] {
        assert!(v.get(key).is_some(), "{key}");
    }
    std::fs::write(
        &path,
        r#"{"K":1,"dim":1,"weights":[0.5],"means":[[0]],"variances":[[1]]}"#,
    )
    .unwrap();
    assert!(GmmModel::load(&path).is_err());
}

proptest! {
    #[test]
    fn responsibilities_sum_to_one(x in proptest::collection::vec(-50.0f64..50.0, 3), seed in 0u64..50) {
        let samples = uniform_points(seed, 40, 3);
        let model = fit_gmm(&samples, 3, &GmmConfig { max_iter: 5, ..config(seed) }).unwrap();
        let p = model.posterior(&x).unwrap();
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        // agrees with the direct density ratio where that does not underflow
        let total = naive_density(&model, &x);
        if total > 1e-250 {
            for i in 0..3 {
                let mut single = model.clone();
                single.weights = (0..3).map(|j| if j == i { model.weights[i] } else { 0.0 }).collect();
                let direct = naive_density(&single, &x) / total;
                prop_assert!((p[i] - direct).abs() < 1e-9);
            }
        }
    }
}
