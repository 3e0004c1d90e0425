//! Synthetic patterned individuals and their distorted observations.
//!
//! Each individual is a constellation of points in the unit square with one
//! canonical descriptor per point. Observations map the surviving points
//! through a random bounded homography, add clutter, and perturb descriptors,
//! so that the ground-truth correspondence and homography are known exactly.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{ReidError, Result};
use crate::ingest::{
    write_feature_file, AffineFrame, Feature, ImageFeatures, Manifest, ManifestEntry, Role,
};
use crate::linalg::norm;
use crate::rng::stream;

const NEIGHBORS: usize = 4;
/// Weight of the neighborhood-geometry term relative to the per-point term.
const GEOMETRY_WEIGHT: f64 = 0.5;
const FRAME_SCALE: f64 = 0.02;
const MANIFEST_NAME: &str = "manifest.csv";
const FEATURE_DIR: &str = "features";

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub seed: u64,
    pub n_individuals: usize,
    pub views_per_individual: usize,
    pub points_per_individual: usize,
    pub descriptor_dim: usize,
    pub descriptor_noise_sigma: f64,
    pub dropout_rate: f64,
    pub clutter_rate: f64,
    pub max_perspective: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 0,
            n_individuals: 10,
            views_per_individual: 2,
            points_per_individual: 80,
            descriptor_dim: 128,
            descriptor_noise_sigma: 0.05,
            dropout_rate: 0.2,
            clutter_rate: 0.2,
            max_perspective: 0.15,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(ReidError::Invalid(m));
        if self.n_individuals == 0 {
            return bad("individuals must be >= 1".into());
        }
        if self.views_per_individual == 0 {
            return bad("views must be >= 1".into());
        }
        if self.points_per_individual == 0 {
            return bad("points must be >= 1".into());
        }
        if self.descriptor_dim == 0 {
            return bad("descriptor-dim must be >= 1".into());
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return bad(format!(
                "dropout must be in [0, 1), got {}",
                self.dropout_rate
            ));
        }
        if !(self.clutter_rate >= 0.0 && self.clutter_rate.is_finite()) {
            return bad(format!("clutter must be >= 0, got {}", self.clutter_rate));
        }
        if !(self.descriptor_noise_sigma >= 0.0 && self.descriptor_noise_sigma.is_finite()) {
            return bad(format!(
                "noise must be >= 0, got {}",
                self.descriptor_noise_sigma
            ));
        }
        if !(0.0..0.5).contains(&self.max_perspective) {
            return bad(format!(
                "max-perspective must be in [0, 0.5), got {}",
                self.max_perspective
            ));
        }
        Ok(())
    }
}

pub fn individual_id(index: usize) -> String {
    format!("ind{index:03}")
}

pub fn image_id(index: usize, view: usize) -> String {
    format!("ind{index:03}_v{view:02}")
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constellation {
    pub index: usize,
    pub individual_id: String,
    pub points: Vec<[f64; 2]>,
    pub descriptors: Vec<Vec<f64>>,
    /// Canonical local affine shape of each point's region.
    pub shapes: Vec<[[f64; 2]; 2]>,
}

/// Observation of a constellation with its exact generating homography.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub features: ImageFeatures,
    /// Canonical unit-square coordinates to observation coordinates, h33 = 1.
    pub homography: [[f64; 3]; 3],
    /// Canonical point index of each feature, `None` for clutter.
    pub sources: Vec<Option<usize>>,
}

fn gaussian_vec(rng: &mut impl Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| StandardNormal.sample(rng)).collect()
}

fn normalized(mut v: Vec<f64>) -> Vec<f64> {
    let n = norm(&v);
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    } else if let Some(first) = v.first_mut() {
        *first = 1.0;
    }
    v
}

fn random_unit(rng: &mut impl Rng, dim: usize) -> Vec<f64> {
    normalized(gaussian_vec(rng, dim))
}

/// Local neighborhood signature: relative distances and directions to the
/// nearest neighbors. Zero-length when there are no neighbors.
fn neighborhood_signature(points: &[[f64; 2]], i: usize) -> Vec<f64> {
    let p = points[i];
    let mut nn: Vec<(f64, [f64; 2])> = points
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != i)
        .map(|(_, q)| {
            let d = [q[0] - p[0], q[1] - p[1]];
            (d[0].hypot(d[1]), d)
        })
        .collect();
    nn.sort_by(|a, b| a.0.total_cmp(&b.0));
    nn.truncate(NEIGHBORS);
    let scale = nn.first().map_or(1.0, |n| n.0.max(1e-12));
    let mut sig = Vec::with_capacity(3 * NEIGHBORS);
    for k in 0..NEIGHBORS {
        match nn.get(k) {
            Some((d, v)) => {
                sig.push(d / scale);
                sig.push(v[0] / d.max(1e-12));
                sig.push(v[1] / d.max(1e-12));
            }
            None => sig.extend([0.0, 0.0, 0.0]),
        }
    }
    sig
}

/// Deterministic in `(config.seed, index)`.
pub fn generate_individual(config: &SynthConfig, index: usize) -> Constellation {
    let mut rng = stream(config.seed, &[0, index as u64]);
    let n = config.points_per_individual;
    let dim = config.descriptor_dim;

    let min_sep = 0.3 / (n as f64).sqrt();
    let mut points: Vec<[f64; 2]> = Vec::with_capacity(n);
    while points.len() < n {
        let mut candidate = [0.0; 2];
        for attempt in 0..100 {
            candidate = [rng.random_range(0.05..0.95), rng.random_range(0.05..0.95)];
            let clear = points
                .iter()
                .all(|q| (q[0] - candidate[0]).hypot(q[1] - candidate[1]) >= min_sep);
            if clear || attempt == 99 {
                break;
            }
        }
        points.push(candidate);
    }

    // Individual-specific random basis for the geometric signature.
    let sig_len = 3 * NEIGHBORS;
    let basis: Vec<Vec<f64>> = (0..sig_len).map(|_| gaussian_vec(&mut rng, dim)).collect();
    let sigs: Vec<Vec<f64>> = (0..n).map(|i| neighborhood_signature(&points, i)).collect();

    // Standardize each signature component over the constellation.
    let mut mean = vec![0.0; sig_len];
    let mut var = vec![0.0; sig_len];
    for s in &sigs {
        for (m, v) in mean.iter_mut().zip(s) {
            *m += v / n as f64;
        }
    }
    for s in &sigs {
        for ((acc, v), m) in var.iter_mut().zip(s).zip(&mean) {
            *acc += (v - m).powi(2) / n as f64;
        }
    }

    let dim_scale = 1.0 / (dim as f64).sqrt();
    let sig_scale = GEOMETRY_WEIGHT / (sig_len as f64).sqrt();
    let mut descriptors = Vec::with_capacity(n);
    let mut shapes = Vec::with_capacity(n);
    for s in &sigs {
        let mut d: Vec<f64> = gaussian_vec(&mut rng, dim)
            .into_iter()
            .map(|x| x * dim_scale)
            .collect();
        for (k, b) in basis.iter().enumerate() {
            let z = if var[k] > 1e-12 {
                (s[k] - mean[k]) / var[k].sqrt()
            } else {
                0.0
            };
            for (dv, bv) in d.iter_mut().zip(b) {
                *dv += sig_scale * z * bv * dim_scale;
            }
        }
        descriptors.push(normalized(d));

        let theta: f64 = rng.random_range(0.0..std::f64::consts::TAU);
        let aspect: f64 = rng.random_range(0.7..1.4);
        let (sn, cs) = theta.sin_cos();
        shapes.push([
            [FRAME_SCALE * aspect * cs, -FRAME_SCALE * sn / aspect],
            [FRAME_SCALE * aspect * sn, FRAME_SCALE * cs / aspect],
        ]);
    }

    Constellation {
        index,
        individual_id: individual_id(index),
        points,
        descriptors,
        shapes,
    }
}

/// Random homography about the unit-square center whose linear, translation
/// and perspective perturbations are each bounded by `bound`.
fn random_homography(rng: &mut impl Rng, bound: f64) -> [[f64; 3]; 3] {
    if bound == 0.0 {
        return [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
    }
    let mut u = || rng.random_range(-bound..bound);
    let (a11, a12, a21, a22) = (1.0 + u(), u(), u(), 1.0 + u());
    let (tx, ty) = (0.5 * u(), 0.5 * u());
    let (p1, p2) = (u(), u());
    // H = T(c + t) * [[A, 0], [p, 1]] * T(-c), c = (0.5, 0.5)
    let c = 0.5;
    let m = [[a11, a12, 0.0], [a21, a22, 0.0], [p1, p2, 1.0]];
    let left = [[1.0, 0.0, c + tx], [0.0, 1.0, c + ty], [0.0, 0.0, 1.0]];
    let right = [[1.0, 0.0, -c], [0.0, 1.0, -c], [0.0, 0.0, 1.0]];
    let h = mat3_mul(&mat3_mul(&left, &m), &right);
    let s = h[2][2];
    h.map(|row| row.map(|v| v / s))
}

fn mat3_mul(a: &[[f64; 3]; 3], b: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let mut out = [[0.0; 3]; 3];
    for (i, row) in out.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    out
}

fn apply_h(h: &[[f64; 3]; 3], p: [f64; 2]) -> [f64; 2] {
    let w = h[2][0] * p[0] + h[2][1] * p[1] + h[2][2];
    [
        (h[0][0] * p[0] + h[0][1] * p[1] + h[0][2]) / w,
        (h[1][0] * p[0] + h[1][1] * p[1] + h[1][2]) / w,
    ]
}

/// Jacobian of the homography at `p`.
fn jacobian(h: &[[f64; 3]; 3], p: [f64; 2]) -> [[f64; 2]; 2] {
    let w = h[2][0] * p[0] + h[2][1] * p[1] + h[2][2];
    let u = apply_h(h, p);
    let mut j = [[0.0; 2]; 2];
    for r in 0..2 {
        for c in 0..2 {
            j[r][c] = (h[r][c] - u[r] * h[2][c]) / w;
        }
    }
    j
}

fn mat2_mul(a: &[[f64; 2]; 2], b: &[[f64; 2]; 2]) -> [[f64; 2]; 2] {
    [
        [
            a[0][0] * b[0][0] + a[0][1] * b[1][0],
            a[0][0] * b[0][1] + a[0][1] * b[1][1],
        ],
        [
            a[1][0] * b[0][0] + a[1][1] * b[1][0],
            a[1][0] * b[0][1] + a[1][1] * b[1][1],
        ],
    ]
}

/// Renders one view of `constellation`.
///
/// View 0 is the clean reference view: a homography bounded by half of
/// `max_perspective`, no dropout, no clutter, no descriptor noise. Other views
/// apply the full distortion model. Deterministic in
/// `(config.seed, individual, view_index)`.
pub fn render_observation(
    constellation: &Constellation,
    config: &SynthConfig,
    view_index: usize,
) -> Observation {
    let mut rng = stream(
        config.seed,
        &[1, constellation.index as u64, view_index as u64],
    );
    let dim = config.descriptor_dim;
    let clean = view_index == 0;

    let bound = if clean {
        0.5 * config.max_perspective
    } else {
        config.max_perspective
    };
    let h = random_homography(&mut rng, bound);
    let (dropout, clutter, sigma) = if clean {
        (0.0, 0.0, 0.0)
    } else {
        (
            config.dropout_rate,
            config.clutter_rate,
            config.descriptor_noise_sigma,
        )
    };

    let mut items: Vec<(Feature, Option<usize>)> = Vec::new();
    for (i, (&p, d)) in constellation
        .points
        .iter()
        .zip(&constellation.descriptors)
        .enumerate()
    {
        if dropout > 0.0 && rng.random::<f64>() < dropout {
            continue;
        }
        let q = apply_h(&h, p);
        let a = mat2_mul(&jacobian(&h, p), &constellation.shapes[i]);
        let descriptor = if sigma > 0.0 {
            let noise = gaussian_vec(&mut rng, dim);
            normalized(d.iter().zip(noise).map(|(v, e)| v + sigma * e).collect())
        } else {
            d.clone()
        };
        items.push((
            Feature {
                frame: AffineFrame::new(q[0], q[1], a[0][0], a[0][1], a[1][0], a[1][1]),
                descriptor,
            },
            Some(i),
        ));
    }

    let n_clutter = (clutter * config.points_per_individual as f64).round() as usize;
    for _ in 0..n_clutter {
        let p = [rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)];
        let q = apply_h(&h, p);
        let theta: f64 = rng.random_range(0.0..std::f64::consts::TAU);
        let (sn, cs) = theta.sin_cos();
        let shape = [
            [FRAME_SCALE * cs, -FRAME_SCALE * sn],
            [FRAME_SCALE * sn, FRAME_SCALE * cs],
        ];
        let a = mat2_mul(&jacobian(&h, p), &shape);
        items.push((
            Feature {
                frame: AffineFrame::new(q[0], q[1], a[0][0], a[0][1], a[1][0], a[1][1]),
                descriptor: random_unit(&mut rng, dim),
            },
            None,
        ));
    }
    if !clean {
        items.shuffle(&mut rng);
    }

    let (features, sources): (Vec<Feature>, Vec<Option<usize>>) = items.into_iter().unzip();
    let individual = Some(constellation.individual_id.clone());
    Observation {
        features: ImageFeatures {
            image_id: image_id(constellation.index, view_index),
            individual_id: individual,
            viewpoint: None,
            descriptor_dim: dim,
            features,
        },
        homography: h,
        sources,
    }
}

pub fn homography_to_string(h: &[[f64; 3]; 3]) -> String {
    let mut s = String::new();
    for (i, v) in h.iter().flatten().enumerate() {
        let _ = write!(s, "{}{v}", if i == 0 { "" } else { " " });
    }
    s.push('\n');
    s
}

/// Writes one database view and `views_per_individual - 1` query views per
/// individual under `out_dir`, plus `manifest.csv` and `<image_id>.h`
/// homography sidecars.
pub fn generate_benchmark(config: &SynthConfig, out_dir: impl AsRef<Path>) -> Result<Manifest> {
    config.validate()?;
    let out_dir = out_dir.as_ref();
    let feature_dir = out_dir.join(FEATURE_DIR);
    fs::create_dir_all(&feature_dir).map_err(|e| ReidError::io(&feature_dir, e))?;

    let mut manifest = Manifest::default();
    for index in 0..config.n_individuals {
        let constellation = generate_individual(config, index);
        for view in 0..config.views_per_individual {
            let obs = render_observation(&constellation, config, view);
            let id = obs.features.image_id.clone();
            let rel = PathBuf::from(FEATURE_DIR).join(format!("{id}.patf"));
            let resolved = out_dir.join(&rel);
            write_feature_file(&obs.features, &resolved)?;
            let hpath = feature_dir.join(format!("{id}.h"));
            fs::write(&hpath, homography_to_string(&obs.homography))
                .map_err(|e| ReidError::io(&hpath, e))?;
            manifest.entries.push(ManifestEntry {
                image_id: id,
                individual_id: Some(constellation.individual_id.clone()),
                viewpoint: None,
                role: if view == 0 {
                    Role::Database
                } else {
                    Role::Query
                },
                feature_path: rel,
                resolved_path: resolved,
            });
        }
    }
    manifest.write(out_dir.join(MANIFEST_NAME))?;
    Ok(manifest)
}

pub fn manifest_path(out_dir: impl AsRef<Path>) -> PathBuf {
    out_dir.as_ref().join(MANIFEST_NAME)
}
