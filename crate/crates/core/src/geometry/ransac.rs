use rand::seq::index::sample;

use super::homography::{
    dlt_homography, minimal_homography, orientation_consistent, project, sample_degenerate,
    Homography,
};
use super::GeomVerdict;
use crate::rng::stream;

/// Residual used for the inlier test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Residual {
    /// `|H q - p|`.
    #[default]
    Forward,
    /// Mean of `|H q - p|` and `|H^-1 p - q|`.
    Symmetric,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RansacParams {
    /// Inlier distance in normalized coordinates (strict `<`).
    pub inlier_threshold: f64,
    pub confidence: f64,
    pub max_iters: usize,
    pub residual: Residual,
}

impl Default for RansacParams {
    fn default() -> Self {
        RansacParams {
            inlier_threshold: 0.1,
            confidence: 0.99,
            max_iters: 2000,
            residual: Residual::Forward,
        }
    }
}

const REFIT_ROUNDS: usize = 3;
/// Degenerate draws are resampled, up to this multiple of `max_iters`.
const MAX_DRAW_FACTOR: usize = 10;

fn residual(h: &[[f64; 3]; 3], inv: Option<&[[f64; 3]; 3]>, q: [f64; 2], p: [f64; 2]) -> f64 {
    let fwd = match project(h, q) {
        Some(m) => (m[0] - p[0]).hypot(m[1] - p[1]),
        None => return f64::INFINITY,
    };
    match inv {
        None => fwd,
        Some(inv) => match project(inv, p) {
            Some(m) => 0.5 * (fwd + (m[0] - q[0]).hypot(m[1] - q[1])),
            None => f64::INFINITY,
        },
    }
}

struct Scorer<'a> {
    src: &'a [[f64; 2]],
    dst: &'a [[f64; 2]],
    params: &'a RansacParams,
}

impl Scorer<'_> {
    fn mask(&self, h: &[[f64; 3]; 3]) -> (usize, Vec<bool>) {
        let inv = match self.params.residual {
            Residual::Forward => None,
            Residual::Symmetric => match Homography::from_matrix(*h).inverse() {
                Some(i) => Some(i.h),
                None => return (0, vec![false; self.src.len()]),
            },
        };
        let mask: Vec<bool> = self
            .src
            .iter()
            .zip(self.dst)
            .map(|(&q, &p)| residual(h, inv.as_ref(), q, p) < self.params.inlier_threshold)
            .collect();
        (mask.iter().filter(|&&b| b).count(), mask)
    }

    fn count(&self, h: &[[f64; 3]; 3]) -> usize {
        if self.params.residual == Residual::Symmetric {
            return self.mask(h).0;
        }
        self.src
            .iter()
            .zip(self.dst)
            .filter(|(&q, &p)| residual(h, None, q, p) < self.params.inlier_threshold)
            .count()
    }
}

/// True when no source point lies on or beyond the horizon of `h`.
fn keeps_side(h: &[[f64; 3]; 3], src: &[[f64; 2]]) -> bool {
    src.iter()
        .all(|q| h[2][0] * q[0] + h[2][1] * q[1] + h[2][2] > 0.0)
}

fn required_iterations(inlier_ratio: f64, confidence: f64, cap: usize) -> usize {
    let good = inlier_ratio.powi(4);
    if good >= 1.0 {
        return 1;
    }
    if good <= 0.0 {
        return cap;
    }
    let k = (1.0 - confidence).ln() / (1.0 - good).ln();
    if k.is_finite() {
        (k.ceil() as usize).clamp(1, cap)
    } else {
        cap
    }
}

/// Robust homography fit from `src` (query) to `dst` (database) points.
///
/// Both point sets are expected to be normalized already. Fewer than four
/// correspondences, or no non-degenerate sample, give `n = 0`, `omega = 0`.
pub fn ransac_homography(
    src: &[[f64; 2]],
    dst: &[[f64; 2]],
    params: &RansacParams,
    seed: u64,
) -> GeomVerdict {
    let total = src.len().min(dst.len());
    let (src, dst) = (&src[..total], &dst[..total]);
    if total < 4 {
        return GeomVerdict::empty(total);
    }
    let scorer = Scorer { src, dst, params };
    let mut rng = stream(seed, &[0x7261_6e73]);

    let mut best: Option<([[f64; 3]; 3], usize)> = None;
    let mut needed = params.max_iters.max(1);
    let mut iters = 0;
    let mut draws = 0;
    while iters < needed && draws < MAX_DRAW_FACTOR * params.max_iters.max(1) {
        draws += 1;
        let idx = sample(&mut rng, total, 4);
        let s = [
            src[idx.index(0)],
            src[idx.index(1)],
            src[idx.index(2)],
            src[idx.index(3)],
        ];
        let d = [
            dst[idx.index(0)],
            dst[idx.index(1)],
            dst[idx.index(2)],
            dst[idx.index(3)],
        ];
        if sample_degenerate(&s) || sample_degenerate(&d) || !orientation_consistent(&s, &d) {
            continue;
        }
        let Some(h) = minimal_homography(&s, &d) else {
            continue;
        };
        if !keeps_side(&h, src) {
            continue;
        }
        iters += 1;
        let count = scorer.count(&h);
        if best.is_none_or(|(_, c)| count > c) {
            best = Some((h, count));
            needed = required_iterations(
                count as f64 / total as f64,
                params.confidence,
                params.max_iters.max(1),
            );
        }
    }

    let Some((h, _)) = best else {
        return GeomVerdict::empty(total);
    };
    let (mut count, mut mask) = scorer.mask(&h);
    let mut model = Homography::from_matrix(h);
    if count < 4 {
        return GeomVerdict::empty(total);
    }

    // refit on the consensus set while it keeps growing
    for _ in 0..REFIT_ROUNDS {
        let (s, d): (Vec<[f64; 2]>, Vec<[f64; 2]>) = mask
            .iter()
            .zip(src.iter().zip(dst))
            .filter(|(&m, _)| m)
            .map(|(_, (&s, &d))| (s, d))
            .unzip();
        let Ok(refit) = dlt_homography(&s, &d) else {
            break;
        };
        let (c, m) = scorer.mask(&refit.h);
        if c < count {
            break;
        }
        let grew = c > count;
        model = refit;
        count = c;
        mask = m;
        if !grew {
            break;
        }
    }

    GeomVerdict {
        n: count,
        omega: count as f64 / total as f64,
        homography: Some(model),
        inlier_mask: mask,
    }
}
