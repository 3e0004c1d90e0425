mod common;

use common::dot;
use patreid::synth::{
    generate_benchmark, generate_individual, manifest_path, render_observation, SynthConfig,
};
use patreid::Role;

#[test]
fn individuals_have_near_orthogonal_descriptors() {
    let cfg = SynthConfig {
        seed: 42,
        n_individuals: 40,
        ..SynthConfig::default()
    };
    let cons: Vec<_> = (0..40).map(|i| generate_individual(&cfg, i)).collect();
    let mut pairs = 0;
    let mut worst: f64 = 0.0;
    for i in 0..40 {
        for j in i + 1..40 {
            if pairs == 100 {
                break;
            }
            let (a, b) = (&cons[i], &cons[j]);
            let total: f64 = a
                .descriptors
                .iter()
                .flat_map(|x| b.descriptors.iter().map(move |y| dot(x, y).abs()))
                .sum();
            let mean = total / (a.descriptors.len() * b.descriptors.len()) as f64;
            worst = worst.max(mean);
            pairs += 1;
        }
    }
    println!("worst mean |cos| over {pairs} individual pairs: {worst:.4}");
    assert!(worst < 0.3);
}

/// P(X >= lo) for X ~ Binomial(n, p), summed exactly in log space.
fn binomial_upper_tail(n: u64, p: f64, lo: u64) -> f64 {
    let ln_fact = |k: u64| (1..=k).map(|v| (v as f64).ln()).sum::<f64>();
    (lo..=n)
        .map(|k| {
            (ln_fact(n) - ln_fact(k) - ln_fact(n - k)
                + k as f64 * p.ln()
                + (n - k) as f64 * (1.0 - p).ln())
            .exp()
        })
        .sum()
}

#[test]
fn dropout_retention_range() {
    // retained true points ~ Binomial(80, 0.8)
    let tail = binomial_upper_tail(80, 0.8, 48);
    assert!(tail > 0.9999, "{tail}");

    let runs = 300;
    let mut inside = 0;
    for seed in 0..runs {
        let cfg = SynthConfig {
            seed,
            ..SynthConfig::default()
        };
        let con = generate_individual(&cfg, 0);
        let obs = render_observation(&con, &cfg, 1);
        let retained = obs.sources.iter().filter(|s| s.is_some()).count();
        if (48..=80).contains(&retained) {
            inside += 1;
        }
        assert_eq!(obs.sources.len() - retained, 16);
    }
    assert!(inside as f64 >= 0.99 * runs as f64, "{inside}/{runs}");
}

#[test]
fn observations_are_deterministic() {
    let cfg = SynthConfig {
        seed: 3,
        ..SynthConfig::default()
    };
    let con = generate_individual(&cfg, 2);
    assert_eq!(con, generate_individual(&cfg, 2));
    assert_eq!(
        render_observation(&con, &cfg, 4),
        render_observation(&con, &cfg, 4)
    );
    assert_ne!(
        render_observation(&con, &cfg, 4),
        render_observation(&con, &cfg, 5)
    );
}

#[test]
fn clean_identity_view_is_the_constellation() {
    let cfg = SynthConfig {
        dropout_rate: 0.0,
        clutter_rate: 0.0,
        descriptor_noise_sigma: 0.0,
        max_perspective: 0.0,
        points_per_individual: 12,
        ..SynthConfig::default()
    };
    let con = generate_individual(&cfg, 0);
    let obs = render_observation(&con, &cfg, 0);
    let centers: Vec<[f64; 2]> = obs.features.centers().collect();
    assert_eq!(centers, con.points);
    let descs: Vec<Vec<f64>> = obs.features.descriptors().map(<[f64]>::to_vec).collect();
    assert_eq!(descs, con.descriptors);
}

#[test]
fn benchmark_files_regenerate_identically() {
    let cfg = SynthConfig {
        seed: 8,
        n_individuals: 2,
        views_per_individual: 2,
        ..SynthConfig::default()
    };
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let manifest = generate_benchmark(&cfg, a.path()).unwrap();
    generate_benchmark(&cfg, b.path()).unwrap();
    assert_eq!(manifest.with_role(Role::Database).count(), 2);
    assert_eq!(manifest.with_role(Role::Query).count(), 2);
    let read = |dir: &std::path::Path, rel: &std::path::Path| std::fs::read(dir.join(rel)).unwrap();
    assert_eq!(
        std::fs::read(manifest_path(a.path())).unwrap(),
        std::fs::read(manifest_path(b.path())).unwrap()
    );
    for e in &manifest.entries {
        assert_eq!(
            read(a.path(), &e.feature_path),
            read(b.path(), &e.feature_path)
        );
    }
}
