//! Independent reference implementations used as test oracles.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut impl Rng) -> f64 {
    rng.sample(StandardNormal)
}

pub fn random_matrix(rng: &mut impl Rng, rows: usize, cols: usize) -> Vec<Vec<f64>> {
    (0..rows)
        .map(|_| (0..cols).map(|_| gaussian(rng)).collect())
        .collect()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn unit(mut v: Vec<f64>) -> Vec<f64> {
    let n = dot(&v, &v).sqrt();
    v.iter_mut().for_each(|x| *x /= n);
    v
}

/// Cyclic Jacobi eigendecomposition of a dense symmetric matrix. Returns
/// eigenvalues in non-increasing order with matching unit eigenvectors.
pub fn jacobi_eigen(a: &[Vec<f64>]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = a.len();
    let mut a: Vec<Vec<f64>> = a.to_vec();
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| f64::from(u8::from(i == j))).collect())
        .collect();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j] * a[i][j])
            .sum();
        let scale: f64 = (0..n).map(|i| a[i][i] * a[i][i]).sum::<f64>().max(1e-300);
        if off <= 1e-30 * scale {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for row in v.iter_mut() {
                    let vkp = row[p];
                    let vkq = row[q];
                    row[p] = c * vkp - s * vkq;
                    row[q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[j][j].total_cmp(&a[i][i]));
    let values = order.iter().map(|&i| a[i][i]).collect();
    let vectors = order
        .iter()
        .map(|&i| (0..n).map(|k| v[k][i]).collect())
        .collect();
    (values, vectors)
}

/// Biased covariance of row vectors.
pub fn covariance(xs: &[Vec<f64>]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = xs.len() as f64;
    let d = xs[0].len();
    let mean: Vec<f64> = (0..d)
        .map(|j| xs.iter().map(|x| x[j]).sum::<f64>() / n)
        .collect();
    let cov = (0..d)
        .map(|i| {
            (0..d)
                .map(|j| {
                    xs.iter()
                        .map(|x| (x[i] - mean[i]) * (x[j] - mean[j]))
                        .sum::<f64>()
                        / n
                })
                .collect()
        })
        .collect();
    (mean, cov)
}

/// Ratio of the distance between `a` and `b` (up to a global sign flip) to
/// the norm of `b`.
pub fn sign_agnostic_error(a: &[f64], b: &[f64]) -> f64 {
    let plus: f64 = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt();
    let minus: f64 = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x + y).powi(2))
        .sum::<f64>()
        .sqrt();
    plus.min(minus)
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Diagonal Gaussian mixture log density written out term by term.
pub fn mixture_log_density(
    weights: &[f64],
    means: &[Vec<f64>],
    vars: &[Vec<f64>],
    x: &[f64],
) -> f64 {
    let mut total = 0.0;
    for k in 0..weights.len() {
        let mut p = weights[k];
        for d in 0..x.len() {
            let z = x[d] - means[k][d];
            p *= (-(z * z) / (2.0 * vars[k][d])).exp()
                / (2.0 * std::f64::consts::PI * vars[k][d]).sqrt();
        }
        total += p;
    }
    total.ln()
}

/// Homography with bounded perspective terms, normalized so h33 = 1.
pub fn random_homography(rng: &mut impl Rng, perspective: f64) -> [[f64; 3]; 3] {
    let angle: f64 = rng.random_range(-0.5..0.5);
    let s: f64 = rng.random_range(0.8..1.2);
    let (c, si) = (angle.cos() * s, angle.sin() * s);
    [
        [
            c + rng.random_range(-0.1..0.1),
            -si + rng.random_range(-0.1..0.1),
            rng.random_range(-0.3..0.3),
        ],
        [
            si + rng.random_range(-0.1..0.1),
            c + rng.random_range(-0.1..0.1),
            rng.random_range(-0.3..0.3),
        ],
        [
            rng.random_range(-perspective..perspective),
            rng.random_range(-perspective..perspective),
            1.0,
        ],
    ]
}

pub fn apply_h(h: &[[f64; 3]; 3], p: [f64; 2]) -> [f64; 2] {
    let w = h[2][0] * p[0] + h[2][1] * p[1] + h[2][2];
    [
        (h[0][0] * p[0] + h[0][1] * p[1] + h[0][2]) / w,
        (h[1][0] * p[0] + h[1][1] * p[1] + h[1][2]) / w,
    ]
}

/// Zero-mean, max-norm-one copy of a point set.
pub fn normalized(points: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let n = points.len() as f64;
    let cx = points.iter().map(|p| p[0]).sum::<f64>() / n;
    let cy = points.iter().map(|p| p[1]).sum::<f64>() / n;
    let s = points
        .iter()
        .map(|p| (p[0] - cx).hypot(p[1] - cy))
        .fold(0.0, f64::max);
    points
        .iter()
        .map(|p| [(p[0] - cx) / s, (p[1] - cy) / s])
        .collect()
}
