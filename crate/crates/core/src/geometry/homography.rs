use nalgebra::{DMatrix, Matrix3, SMatrix, SVector};

use crate::error::{ReidError, Result};

/// Points whose maximum centered norm is below this are treated as coincident.
const COINCIDENT_EPS: f64 = 1e-12;
/// `|h33|` below this leaves the estimate Frobenius-normalized instead.
const H33_EPS: f64 = 1e-9;
const RANK_TOL: f64 = 1e-9;
const COLLINEAR_EPS: f64 = 1e-9;

/// 3x3 projective transform, scaled so `h33 = 1` where possible.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Homography {
    pub h: [[f64; 3]; 3],
    /// True when `h33` was too close to zero and the matrix is scaled to unit
    /// Frobenius norm instead.
    pub frobenius_normalized: bool,
}

impl Homography {
    pub fn identity() -> Self {
        Homography {
            h: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            frobenius_normalized: false,
        }
    }

    pub fn from_matrix(h: [[f64; 3]; 3]) -> Self {
        let m = Matrix3::from_fn(|r, c| h[r][c]);
        Self::normalized(m)
    }

    fn normalized(m: Matrix3<f64>) -> Self {
        let h33 = m[(2, 2)];
        let (m, frob) = if h33.abs() > H33_EPS {
            (m / h33, false)
        } else {
            (m / m.norm(), true)
        };
        Homography {
            h: [
                [m[(0, 0)], m[(0, 1)], m[(0, 2)]],
                [m[(1, 0)], m[(1, 1)], m[(1, 2)]],
                [m[(2, 0)], m[(2, 1)], m[(2, 2)]],
            ],
            frobenius_normalized: frob,
        }
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::from_fn(|r, c| self.h[r][c])
    }

    /// Maps `p`; `None` when it lands on the line at infinity.
    pub fn project(&self, p: [f64; 2]) -> Option<[f64; 2]> {
        project(&self.h, p)
    }

    pub fn inverse(&self) -> Option<Homography> {
        self.matrix().try_inverse().map(Self::normalized)
    }
}

pub(crate) fn project(h: &[[f64; 3]; 3], p: [f64; 2]) -> Option<[f64; 2]> {
    let w = h[2][0] * p[0] + h[2][1] * p[1] + h[2][2];
    if w.abs() < 1e-12 {
        return None;
    }
    Some([
        (h[0][0] * p[0] + h[0][1] * p[1] + h[0][2]) / w,
        (h[1][0] * p[0] + h[1][1] * p[1] + h[1][2]) / w,
    ])
}

#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedPoints {
    pub points: Vec<[f64; 2]>,
    pub centroid: [f64; 2],
    pub scale: f64,
    /// All input points coincide; `scale` is 1.
    pub degenerate: bool,
}

impl NormalizedPoints {
    pub fn denormalize(&self, p: [f64; 2]) -> [f64; 2] {
        [
            p[0] * self.scale + self.centroid[0],
            p[1] * self.scale + self.centroid[1],
        ]
    }
}

/// Centers the points and scales them so the farthest lies at distance 1.
pub fn normalize_points(points: &[[f64; 2]]) -> Result<NormalizedPoints> {
    if points.is_empty() {
        return Err(ReidError::Invalid(
            "cannot normalize an empty point set".into(),
        ));
    }
    let n = points.len() as f64;
    let cx = points.iter().map(|p| p[0]).sum::<f64>() / n;
    let cy = points.iter().map(|p| p[1]).sum::<f64>() / n;
    let centered: Vec<[f64; 2]> = points.iter().map(|p| [p[0] - cx, p[1] - cy]).collect();
    let max = centered
        .iter()
        .map(|p| p[0].hypot(p[1]))
        .fold(0.0, f64::max);
    let degenerate = max < COINCIDENT_EPS;
    let scale = if degenerate { 1.0 } else { max };
    Ok(NormalizedPoints {
        points: centered
            .iter()
            .map(|p| [p[0] / scale, p[1] / scale])
            .collect(),
        centroid: [cx, cy],
        scale,
        degenerate,
    })
}

/// Least-squares direct linear transform `dst ~ H src` from at least four
/// correspondences, via the smallest right singular vector.
pub fn dlt_homography(src: &[[f64; 2]], dst: &[[f64; 2]]) -> Result<Homography> {
    let n = src.len();
    if n < 4 || dst.len() != n {
        return Err(ReidError::InsufficientData(format!(
            "homography needs at least 4 correspondences, got {n}"
        )));
    }
    let rows = (2 * n).max(9);
    let mut a = DMatrix::<f64>::zeros(rows, 9);
    for (i, (s, d)) in src.iter().zip(dst).enumerate() {
        let (x, y, u, v) = (s[0], s[1], d[0], d[1]);
        let r = 2 * i;
        a[(r, 0)] = -x;
        a[(r, 1)] = -y;
        a[(r, 2)] = -1.0;
        a[(r, 6)] = u * x;
        a[(r, 7)] = u * y;
        a[(r, 8)] = u;
        a[(r + 1, 3)] = -x;
        a[(r + 1, 4)] = -y;
        a[(r + 1, 5)] = -1.0;
        a[(r + 1, 6)] = v * x;
        a[(r + 1, 7)] = v * y;
        a[(r + 1, 8)] = v;
    }
    let svd = a.svd(false, true);
    let v_t = svd
        .v_t
        .as_ref()
        .ok_or_else(|| ReidError::Numeric("SVD did not produce right singular vectors".into()))?;
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| svd.singular_values[i].total_cmp(&svd.singular_values[j]));
    let smax = svd.singular_values[order[order.len() - 1]];
    // a second (near-)null direction means the system is rank deficient
    if smax == 0.0 || svd.singular_values[order[1]] <= RANK_TOL * smax {
        return Err(ReidError::Degenerate(
            "rank-deficient correspondence configuration".into(),
        ));
    }
    let h = v_t.row(order[0]);
    let m = Matrix3::from_fn(|r, c| h[3 * r + c]);
    if m.determinant().abs() < 1e-14 * m.norm().powi(3) {
        return Err(ReidError::Degenerate("singular homography".into()));
    }
    Ok(Homography::normalized(m))
}

fn orientation(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
}

fn collinear(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> bool {
    orientation(a, b, c).abs() < COLLINEAR_EPS
}

const TRIANGLES: [[usize; 3]; 4] = [[0, 1, 2], [0, 1, 3], [0, 2, 3], [1, 2, 3]];

/// True when every triangle of the sample keeps its orientation. Samples that
/// fold or mirror the plane fail this and are rejected.
pub(crate) fn orientation_consistent(src: &[[f64; 2]; 4], dst: &[[f64; 2]; 4]) -> bool {
    let signs = TRIANGLES.map(|[i, j, k]| {
        orientation(src[i], src[j], src[k]).signum() * orientation(dst[i], dst[j], dst[k]).signum()
    });
    signs.iter().all(|&s| s > 0.0)
}

pub(crate) fn sample_degenerate(pts: &[[f64; 2]; 4]) -> bool {
    collinear(pts[0], pts[1], pts[2])
        || collinear(pts[0], pts[1], pts[3])
        || collinear(pts[0], pts[2], pts[3])
        || collinear(pts[1], pts[2], pts[3])
}

/// Exact homography through four correspondences with `h33` fixed to 1.
/// Used for RANSAC hypotheses; callers check degeneracy first.
pub(crate) fn minimal_homography(
    src: &[[f64; 2]; 4],
    dst: &[[f64; 2]; 4],
) -> Option<[[f64; 3]; 3]> {
    let mut a = SMatrix::<f64, 8, 8>::zeros();
    let mut b = SVector::<f64, 8>::zeros();
    for i in 0..4 {
        let (x, y, u, v) = (src[i][0], src[i][1], dst[i][0], dst[i][1]);
        let r = 2 * i;
        a[(r, 0)] = x;
        a[(r, 1)] = y;
        a[(r, 2)] = 1.0;
        a[(r, 6)] = -u * x;
        a[(r, 7)] = -u * y;
        b[r] = u;
        a[(r + 1, 3)] = x;
        a[(r + 1, 4)] = y;
        a[(r + 1, 5)] = 1.0;
        a[(r + 1, 6)] = -v * x;
        a[(r + 1, 7)] = -v * y;
        b[r + 1] = v;
    }
    let h = a.lu().solve(&b)?;
    if h.iter().any(|v| !v.is_finite()) {
        return None;
    }
    Some([[h[0], h[1], h[2]], [h[3], h[4], h[5]], [h[6], h[7], 1.0]])
}
