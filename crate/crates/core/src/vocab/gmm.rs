//! Diagonal-covariance Gaussian mixture fitted with EM.

use rand::Rng;

use crate::error::{ReidError, Result};
use crate::rng::stream;

pub const VARIANCE_FLOOR: f64 = 1e-6;
const WEIGHT_FLOOR: f64 = 1e-12;
const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Clone, PartialEq)]
pub struct Gmm {
    pub weights: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    pub variances: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GmmOptions {
    pub k: usize,
    pub seed: u64,
    pub max_iters: usize,
    pub tol: f64,
}

impl Default for GmmOptions {
    fn default() -> Self {
        GmmOptions {
            k: 16,
            seed: 0,
            max_iters: 200,
            tol: 1e-6,
        }
    }
}

impl Gmm {
    pub fn k(&self) -> usize {
        self.weights.len()
    }

    pub fn dim(&self) -> usize {
        self.means.first().map_or(0, Vec::len)
    }

    /// Per-component `ln pi_k - 0.5 * sum_d ln(2 pi sigma^2)`.
    fn log_norms(&self) -> Vec<f64> {
        self.weights
            .iter()
            .zip(&self.variances)
            .map(|(w, var)| w.ln() - 0.5 * var.iter().map(|v| LN_2PI + v.ln()).sum::<f64>())
            .collect()
    }

    fn log_joint_into(&self, log_norms: &[f64], x: &[f64], out: &mut [f64]) {
        for (k, o) in out.iter_mut().enumerate() {
            let maha: f64 = x
                .iter()
                .zip(&self.means[k])
                .zip(&self.variances[k])
                .map(|((xv, m), v)| (xv - m) * (xv - m) / v)
                .sum();
            *o = log_norms[k] - 0.5 * maha;
        }
    }

    pub fn log_likelihood(&self, x: &[f64]) -> f64 {
        let mut buf = vec![0.0; self.k()];
        self.log_joint_into(&self.log_norms(), x, &mut buf);
        log_sum_exp(&buf)
    }

    pub fn average_log_likelihood<V: AsRef<[f64]>>(&self, xs: &[V]) -> f64 {
        let norms = self.log_norms();
        let mut buf = vec![0.0; self.k()];
        let total: f64 = xs
            .iter()
            .map(|x| {
                self.log_joint_into(&norms, x.as_ref(), &mut buf);
                log_sum_exp(&buf)
            })
            .sum();
        total / xs.len() as f64
    }
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + v.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Turns log joint densities into normalized posteriors in place.
fn normalize_log(v: &mut [f64]) -> f64 {
    let lse = log_sum_exp(v);
    let mut sum = 0.0;
    for x in v.iter_mut() {
        *x = (*x - lse).exp();
        sum += *x;
    }
    // remove the last-ulp drift from exp
    v.iter_mut().for_each(|x| *x /= sum);
    lse
}

/// Soft assignment of `x` to each component, computed in the log domain.
pub fn gmm_posteriors(gmm: &Gmm, x: &[f64]) -> Result<Vec<f64>> {
    if x.len() != gmm.dim() {
        return Err(ReidError::DimensionMismatch {
            expected: gmm.dim(),
            got: x.len(),
        });
    }
    let mut out = vec![0.0; gmm.k()];
    gmm.log_joint_into(&gmm.log_norms(), x, &mut out);
    normalize_log(&mut out);
    Ok(out)
}

/// Posteriors for many points, sharing the per-component constants.
pub(crate) fn posteriors_batch<V: AsRef<[f64]>>(gmm: &Gmm, xs: &[V]) -> Vec<Vec<f64>> {
    let norms = gmm.log_norms();
    xs.iter()
        .map(|x| {
            let mut out = vec![0.0; gmm.k()];
            gmm.log_joint_into(&norms, x.as_ref(), &mut out);
            normalize_log(&mut out);
            out
        })
        .collect()
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn kmeans_pp_seeds<V: AsRef<[f64]>>(xs: &[V], k: usize, rng: &mut impl Rng) -> Vec<Vec<f64>> {
    let n = xs.len();
    let mut centers = vec![xs[rng.random_range(0..n)].as_ref().to_vec()];
    let mut d2: Vec<f64> = xs
        .iter()
        .map(|x| sq_dist(x.as_ref(), &centers[0]))
        .collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut idx = n - 1;
            for (i, &d) in d2.iter().enumerate() {
                if target < d {
                    idx = i;
                    break;
                }
                target -= d;
            }
            idx
        } else {
            rng.random_range(0..n)
        };
        let c = xs[pick].as_ref().to_vec();
        for (d, x) in d2.iter_mut().zip(xs) {
            *d = d.min(sq_dist(x.as_ref(), &c));
        }
        centers.push(c);
    }
    centers
}

pub fn fit_gmm<V: AsRef<[f64]>>(vectors: &[V], opts: &GmmOptions) -> Result<Gmm> {
    fit_gmm_traced(vectors, opts).map(|(g, _)| g)
}

/// Fits the mixture and returns the average log-likelihood of every model
/// visited by EM, starting with the initialization.
pub fn fit_gmm_traced<V: AsRef<[f64]>>(
    vectors: &[V],
    opts: &GmmOptions,
) -> Result<(Gmm, Vec<f64>)> {
    let n = vectors.len();
    let k = opts.k;
    if k == 0 {
        return Err(ReidError::Invalid(
            "GMM needs at least one component".into(),
        ));
    }
    if n < k {
        return Err(ReidError::InsufficientData(format!(
            "GMM with {k} components needs at least {k} vectors, got {n}"
        )));
    }
    let dim = vectors[0].as_ref().len();
    if let Some(bad) = vectors.iter().find(|v| v.as_ref().len() != dim) {
        return Err(ReidError::DimensionMismatch {
            expected: dim,
            got: bad.as_ref().len(),
        });
    }

    let mut rng = stream(opts.seed, &[0x6d6d]);
    let means = kmeans_pp_seeds(vectors, k, &mut rng);

    let mut global_mean = vec![0.0; dim];
    for x in vectors {
        for (m, v) in global_mean.iter_mut().zip(x.as_ref()) {
            *m += v / n as f64;
        }
    }
    let mut global_var = vec![0.0; dim];
    for x in vectors {
        for ((acc, v), m) in global_var.iter_mut().zip(x.as_ref()).zip(&global_mean) {
            *acc += (v - m) * (v - m) / n as f64;
        }
    }
    global_var
        .iter_mut()
        .for_each(|v| *v = v.max(VARIANCE_FLOOR));

    let mut gmm = Gmm {
        weights: vec![1.0 / k as f64; k],
        means,
        variances: vec![global_var; k],
    };

    let mut trace = Vec::new();
    let mut resp = vec![vec![0.0; k]; n];
    for _ in 0..opts.max_iters {
        // E-step
        let norms = gmm.log_norms();
        let mut ll = 0.0;
        for (x, r) in vectors.iter().zip(resp.iter_mut()) {
            gmm.log_joint_into(&norms, x.as_ref(), r);
            ll += normalize_log(r);
        }
        let ll = ll / n as f64;
        if let Some(&prev) = trace.last() {
            trace.push(ll);
            if ll - prev < opts.tol {
                return Ok((gmm, trace));
            }
        } else {
            trace.push(ll);
        }
        m_step(&mut gmm, vectors, &resp);
    }
    trace.push(gmm.average_log_likelihood(vectors));
    Ok((gmm, trace))
}

fn m_step<V: AsRef<[f64]>>(gmm: &mut Gmm, xs: &[V], resp: &[Vec<f64>]) {
    let n = xs.len() as f64;
    let k = gmm.k();
    let dim = gmm.dim();
    for c in 0..k {
        let nk: f64 = resp.iter().map(|r| r[c]).sum();
        if nk <= WEIGHT_FLOOR * n {
            // collapsed component: keep location, shrink weight
            gmm.weights[c] = WEIGHT_FLOOR;
            continue;
        }
        let mut mean = vec![0.0; dim];
        for (x, r) in xs.iter().zip(resp) {
            let g = r[c];
            for (m, v) in mean.iter_mut().zip(x.as_ref()) {
                *m += g * v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= nk);
        let mut var = vec![0.0; dim];
        for (x, r) in xs.iter().zip(resp) {
            let g = r[c];
            for ((acc, v), m) in var.iter_mut().zip(x.as_ref()).zip(&mean) {
                *acc += g * (v - m) * (v - m);
            }
        }
        var.iter_mut()
            .for_each(|v| *v = (*v / nk).max(VARIANCE_FLOOR));
        gmm.weights[c] = nk / n;
        gmm.means[c] = mean;
        gmm.variances[c] = var;
    }
    let total: f64 = gmm.weights.iter().sum();
    gmm.weights.iter_mut().for_each(|w| *w /= total);
}
