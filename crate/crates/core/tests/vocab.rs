mod common;

use common::*;
use patreid::synth::{generate_benchmark, SynthConfig};
use patreid::vocab::{
    apply_kpca, apply_pca, build_vocabulary, fit_gmm, fit_kpca, fit_pca, gmm_posteriors,
    load_vocabulary, save_vocabulary, Gmm, GmmOptions, PcaModel, VocabParams,
};
use patreid::Role;
use rand::Rng;

#[test]
fn jacobi_oracle_is_an_eigendecomposition() {
    let mut r = rng(1);
    let x = random_matrix(&mut r, 30, 6);
    let (_, cov) = covariance(&x);
    let (vals, vecs) = jacobi_eigen(&cov);
    for (l, v) in vals.iter().zip(&vecs) {
        let av: Vec<f64> = cov.iter().map(|row| dot(row, v)).collect();
        let lv: Vec<f64> = v.iter().map(|x| x * l).collect();
        assert!(max_abs_diff(&av, &lv) < 1e-12);
        assert!((dot(v, v) - 1.0).abs() < 1e-12);
    }
}

#[test]
fn pca_matches_dense_eigen_oracle() {
    let mut r = rng(20);
    let mixing = random_matrix(&mut r, 20, 20);
    let data: Vec<Vec<f64>> = (0..200)
        .map(|_| {
            let z: Vec<f64> = (0..20).map(|_| gaussian(&mut r)).collect();
            mixing.iter().map(|row| dot(row, &z)).collect()
        })
        .collect();
    let model = fit_pca(&data, 8, false).unwrap();
    let (mean, cov) = covariance(&data);
    let (vals, vecs) = jacobi_eigen(&cov);

    assert!(max_abs_diff(&model.mean, &mean) < 1e-12);
    for i in 0..8 {
        assert!(
            (model.eigenvalues[i] - vals[i]).abs() < 1e-8 * vals[0].max(1.0),
            "eigenvalue {i}"
        );
        assert!(
            sign_agnostic_error(&model.basis[i], &vecs[i]) < 1e-8,
            "eigenvector {i}"
        );
        // sign convention: largest-magnitude entry positive
        let big =
            model.basis[i]
                .iter()
                .copied()
                .fold(0.0f64, |m, v| if v.abs() > m.abs() { v } else { m });
        assert!(big > 0.0);
    }
    for i in 0..8 {
        for j in 0..8 {
            let expected = if i == j { 1.0 } else { 0.0 };
            assert!((dot(&model.basis[i], &model.basis[j]) - expected).abs() < 1e-8);
        }
    }
}

#[test]
fn centered_axis_aligned_round_trip() {
    let data = vec![
        vec![3.0, 0.0, 0.0],
        vec![-3.0, 0.0, 0.0],
        vec![0.0, 2.0, 0.0],
        vec![0.0, -2.0, 0.0],
        vec![0.0, 0.0, 1.0],
        vec![0.0, 0.0, -1.0],
    ];
    let model = fit_pca(&data, 3, false).unwrap();
    for x in &data {
        let y = apply_pca(&model, x).unwrap();
        let back: Vec<f64> = (0..3)
            .map(|d| model.mean[d] + (0..3).map(|i| model.basis[i][d] * y[i]).sum::<f64>())
            .collect();
        assert!(max_abs_diff(&back, x) < 1e-9);
    }
}

#[test]
fn apply_pca_matches_direct_arithmetic() {
    let mut r = rng(7);
    for whiten in [false, true] {
        let model = PcaModel {
            mean: (0..6).map(|_| gaussian(&mut r)).collect(),
            basis: random_matrix(&mut r, 3, 6),
            eigenvalues: vec![2.5, 0.7, 1e-14],
            whiten,
        };
        let x: Vec<f64> = (0..6).map(|_| gaussian(&mut r)).collect();
        let y = apply_pca(&model, &x).unwrap();
        for i in 0..3 {
            let mut acc = 0.0;
            for d in 0..6 {
                acc += model.basis[i][d] * (x[d] - model.mean[d]);
            }
            if whiten {
                acc /= model.eigenvalues[i].max(1e-12).sqrt();
            }
            assert!((y[i] - acc).abs() < 1e-12 * acc.abs().max(1.0));
        }
        assert!(apply_pca(&model, &model.mean)
            .unwrap()
            .iter()
            .all(|&v| v == 0.0));
    }
}

#[test]
fn gmm_recovers_two_separated_clusters() {
    let mut r = rng(3);
    let data: Vec<Vec<f64>> = (0..400)
        .map(|i| {
            let c = if i % 2 == 0 { 0.0 } else { 10.0 };
            (0..3).map(|_| c + 0.1 * gaussian(&mut r)).collect()
        })
        .collect();
    let opts = GmmOptions {
        k: 2,
        seed: 11,
        ..Default::default()
    };
    let gmm = fit_gmm(&data, &opts).unwrap();
    for truth in [0.0, 10.0] {
        let nearest = gmm
            .means
            .iter()
            .min_by(|a, b| (a[0] - truth).abs().total_cmp(&(b[0] - truth).abs()))
            .unwrap();
        assert!(
            nearest.iter().all(|m| (m - truth).abs() < 0.1),
            "{nearest:?}"
        );
    }
    assert!((gmm.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    assert_eq!(gmm, fit_gmm(&data, &opts).unwrap());
}

#[test]
fn gmm_closed_form_single_component() {
    let gmm = fit_gmm(
        &[vec![0.0], vec![2.0]],
        &GmmOptions {
            k: 1,
            ..Default::default()
        },
    )
    .unwrap();
    assert_eq!(gmm.weights, vec![1.0]);
    assert!((gmm.means[0][0] - 1.0).abs() < 1e-12);
    assert!((gmm.variances[0][0] - 1.0).abs() < 1e-12);
}

#[test]
fn identical_data_hits_variance_floor() {
    let data = vec![vec![0.5, 0.5]; 10];
    let gmm = fit_gmm(
        &data,
        &GmmOptions {
            k: 2,
            ..Default::default()
        },
    )
    .unwrap();
    assert!(gmm.variances.iter().flatten().all(|&v| v >= 1e-6));
}

#[test]
fn posteriors_match_direct_density() {
    let mut r = rng(5);
    for _ in 0..20 {
        let raw: Vec<f64> = (0..3).map(|_| r.random_range(0.2..1.0)).collect();
        let s: f64 = raw.iter().sum();
        let gmm = Gmm {
            weights: raw.iter().map(|w| w / s).collect(),
            means: random_matrix(&mut r, 3, 2),
            variances: (0..3)
                .map(|_| (0..2).map(|_| r.random_range(0.3..2.0)).collect())
                .collect(),
        };
        let x: Vec<f64> = (0..2).map(|_| gaussian(&mut r)).collect();
        let g = gmm_posteriors(&gmm, &x).unwrap();
        let joint: Vec<f64> = (0..3)
            .map(|k| {
                mixture_log_density(
                    &gmm.weights[k..=k],
                    &gmm.means[k..=k],
                    &gmm.variances[k..=k],
                    &x,
                )
                .exp()
            })
            .collect();
        let total: f64 = joint.iter().sum();
        for k in 0..3 {
            assert!((g[k] - joint[k] / total).abs() < 1e-10);
        }
        assert!((g.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!((gmm.log_likelihood(&x) - total.ln()).abs() < 1e-10);
    }
}

#[test]
fn symmetric_posteriors() {
    let gmm = Gmm {
        weights: vec![0.5, 0.5],
        means: vec![vec![-1.0], vec![1.0]],
        variances: vec![vec![1.0], vec![1.0]],
    };
    assert_eq!(gmm_posteriors(&gmm, &[0.0]).unwrap(), vec![0.5, 0.5]);
    let one = Gmm {
        weights: vec![1.0],
        means: vec![vec![3.0]],
        variances: vec![vec![0.1]],
    };
    assert_eq!(gmm_posteriors(&one, &[-50.0]).unwrap(), vec![1.0]);
}

#[test]
fn kpca_on_centered_data_equals_linear_pca() {
    let mut r = rng(9);
    let mut data = random_matrix(&mut r, 30, 5);
    let (mean, _) = covariance(&data);
    for x in &mut data {
        x.iter_mut().zip(&mean).for_each(|(v, m)| *v -= m);
    }
    let pca = fit_pca(&data, 5, false).unwrap();
    let kpca = fit_kpca(&data, 5).unwrap();
    assert_eq!(kpca.out_dim(), 5);
    let probes: Vec<Vec<f64>> = data
        .iter()
        .cloned()
        .chain(random_matrix(&mut r, 5, 5))
        .collect();
    for axis in 0..5 {
        let lin: Vec<f64> = probes
            .iter()
            .map(|x| apply_pca(&pca, x).unwrap()[axis])
            .collect();
        let ker: Vec<f64> = probes
            .iter()
            .map(|x| kpca.project(x).unwrap()[axis])
            .collect();
        assert!(sign_agnostic_error(&ker, &lin) < 1e-9, "axis {axis}");
    }
}

#[test]
fn kpca_training_self_consistency() {
    let mut r = rng(12);
    let data = random_matrix(&mut r, 12, 30);
    let m = fit_kpca(&data, 4).unwrap();
    for (j, x) in data.iter().enumerate() {
        let y = m.project(x).unwrap();
        for i in 0..4 {
            let stored = m.eigenvalues[i].sqrt() * m.alphas[i][j] * m.eigenvalues[i].sqrt();
            assert!((y[i] - stored).abs() < 1e-9);
        }
    }
    let a = apply_kpca(&m, &data[0]).unwrap();
    assert_eq!(a, apply_kpca(&m, &data[0]).unwrap());
    assert!((dot(&a.values, &a.values) - 1.0).abs() < 1e-12);
}

fn small_benchmark(dir: &std::path::Path) -> Vec<patreid::ImageFeatures> {
    let config = SynthConfig {
        seed: 5,
        n_individuals: 6,
        views_per_individual: 2,
        points_per_individual: 30,
        ..SynthConfig::default()
    };
    let manifest = generate_benchmark(&config, dir).unwrap();
    manifest
        .with_role(Role::Database)
        .map(|e| e.load_features().unwrap())
        .collect()
}

#[test]
fn vocabulary_round_trips_through_file() {
    let dir = tempfile::tempdir().unwrap();
    let db = small_benchmark(dir.path());
    let params = VocabParams {
        gmm_k: 4,
        pca_dim: 16,
        seed: 1,
        ..VocabParams::default()
    };
    let vocab = build_vocabulary(&db, &params).unwrap();
    assert_eq!(vocab.pca.out_dim(), 16);
    assert_eq!(vocab.gmm.k(), 4);
    assert_eq!(vocab.fisher_dim(), 2 * 4 * 16);
    assert_eq!(vocab.embedding_dim(), 5);
    let path = dir.path().join("vocab.txt");
    save_vocabulary(&vocab, &path).unwrap();
    let back = load_vocabulary(&path).unwrap();
    back.validate().unwrap();
    assert_eq!(back, vocab);
}

#[test]
fn vocabulary_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let db = small_benchmark(dir.path());
    let params = VocabParams {
        gmm_k: 3,
        pca_dim: 8,
        seed: 2,
        ..VocabParams::default()
    };
    assert_eq!(
        build_vocabulary(&db, &params).unwrap(),
        build_vocabulary(&db, &params).unwrap()
    );
}
