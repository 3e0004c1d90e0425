mod common;

use common::*;
use patreid::geometry::{
    dlt_homography, geometric_similarity, match_descriptors, ransac_homography, GeomParams,
    MatchParams, RansacParams,
};
use patreid::synth::{generate_individual, render_observation, SynthConfig};
use patreid::{AffineFrame, ImageFeatures, ReidError};
use rand::Rng;

fn features(id: &str, points: &[[f64; 2]], descs: &[Vec<f64>]) -> ImageFeatures {
    ImageFeatures::from_parts(
        id,
        descs[0].len(),
        points
            .iter()
            .zip(descs)
            .map(|(p, d)| (AffineFrame::at(p[0], p[1]), d.clone())),
    )
    .unwrap()
}

#[test]
fn mutual_nn_recovers_noisy_copies() {
    let mut r = rng(31);
    for _ in 0..20 {
        let q: Vec<Vec<f64>> = (0..5)
            .map(|_| unit((0..16).map(|_| gaussian(&mut r)).collect()))
            .collect();
        let d: Vec<Vec<f64>> = q
            .iter()
            .map(|v| unit(v.iter().map(|x| x + 0.05 * gaussian(&mut r)).collect()))
            .collect();
        // exhaustive oracle: every copy must be its original's unique nearest neighbor both ways
        let dist = |a: &[f64], b: &[f64]| 1.0 - dot(a, b);
        for i in 0..5 {
            for j in 0..5 {
                if i != j {
                    assert!(dist(&q[i], &d[i]) < dist(&q[i], &d[j]));
                    assert!(dist(&q[i], &d[i]) < dist(&q[j], &d[i]));
                }
            }
        }
        let pts: Vec<[f64; 2]> = (0..5).map(|i| [i as f64, 0.0]).collect();
        let m = match_descriptors(
            &features("q", &pts, &q),
            &features("d", &pts, &d),
            &MatchParams::default(),
        );
        let mut pairs: Vec<(usize, usize)> =
            m.iter().map(|c| (c.query_index, c.db_index)).collect();
        pairs.sort_unstable();
        assert_eq!(pairs, (0..5).map(|i| (i, i)).collect::<Vec<_>>());
        assert!(m
            .windows(2)
            .all(|w| w[0].descriptor_distance <= w[1].descriptor_distance));
    }
}

#[test]
fn dlt_rejects_collinear_sources() {
    let src = [[0.0, 0.0], [1.0, 0.0], [2.0, 0.0], [3.0, 0.0]];
    let dst = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]];
    assert!(matches!(
        dlt_homography(&src, &dst),
        Err(ReidError::Degenerate(_))
    ));
}

#[test]
fn pure_inliers_give_full_ratio() {
    let mut r = rng(2);
    let h = random_homography(&mut r, 0.1);
    let src: Vec<[f64; 2]> = (0..30)
        .map(|_| [r.random_range(-1.0..1.0), r.random_range(-1.0..1.0)])
        .collect();
    let dst: Vec<[f64; 2]> = src.iter().map(|&p| apply_h(&h, p)).collect();
    let (src, dst) = (normalized(&src), normalized(&dst));
    for thr in [1e-6, 0.05, 0.1] {
        let params = RansacParams {
            inlier_threshold: thr,
            ..Default::default()
        };
        let v = ransac_homography(&src, &dst, &params, 9);
        assert_eq!((v.n, v.omega), (30, 1.0), "threshold {thr}");
        assert_eq!(v, ransac_homography(&src, &dst, &params, 9));
    }
}

#[test]
fn three_correspondences_give_nothing() {
    let p = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
    let v = ransac_homography(&p, &p, &RansacParams::default(), 0);
    assert_eq!((v.n, v.omega), (0, 0.0));
    assert!(v.homography.is_none());
}

#[test]
fn image_against_itself() {
    let cfg = SynthConfig {
        seed: 4,
        ..SynthConfig::default()
    };
    let obs = render_observation(&generate_individual(&cfg, 0), &cfg, 2);
    let v = geometric_similarity(&obs.features, &obs.features, &GeomParams::default());
    assert_eq!(v.omega, 1.0);
    assert_eq!(v.n, obs.features.len());
}

struct Views {
    // views[i][v]: view v of individual i
    views: Vec<Vec<patreid::synth::Observation>>,
}

fn benchmark_views() -> Views {
    let cfg = SynthConfig {
        seed: 42,
        n_individuals: 25,
        views_per_individual: 6,
        ..SynthConfig::default()
    };
    Views {
        views: (0..25)
            .map(|i| {
                let c = generate_individual(&cfg, i);
                (0..6).map(|v| render_observation(&c, &cfg, v)).collect()
            })
            .collect(),
    }
}

#[test]
fn same_individual_inliers_cover_retained_points() {
    let b = benchmark_views();
    let params = GeomParams::default();
    let mut worst = f64::INFINITY;
    for views in &b.views {
        for q in &views[1..] {
            let retained = q.sources.iter().filter(|s| s.is_some()).count();
            let v = geometric_similarity(&q.features, &views[0].features, &params);
            worst = worst.min(v.n as f64 / retained as f64);
            assert!(
                v.n as f64 >= 0.5 * retained as f64,
                "{} inliers for {retained} retained",
                v.n
            );
        }
    }
    println!("smallest n / retained: {worst:.3}");
}

#[test]
fn different_individuals_have_low_inlier_ratio() {
    let b = benchmark_views();
    let params = GeomParams::default();
    let mut below = 0;
    let mut total = 0;
    for (i, views) in b.views.iter().enumerate() {
        for (j, other) in b.views.iter().enumerate() {
            if i == j {
                continue;
            }
            let v = geometric_similarity(&views[1 + j % 5].features, &other[0].features, &params);
            assert!((0.0..=1.0).contains(&v.omega));
            total += 1;
            if v.omega < 0.2 {
                below += 1;
            }
        }
    }
    let frac = below as f64 / total as f64;
    println!("omega < 0.2 in {below}/{total} = {frac:.4} of different-individual pairs");
    assert!(frac >= 0.85);
}
