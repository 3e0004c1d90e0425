use crate::ingest::ImageFeatures;
use crate::linalg::dot;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchParams {
    /// Largest cosine distance accepted for a match.
    pub max_distance: f64,
    /// Keep only pairs that are each other's nearest neighbor.
    pub mutual: bool,
    /// Optional ratio test: keep when `d1 <= ratio * d2`.
    pub ratio: Option<f64>,
}

impl Default for MatchParams {
    fn default() -> Self {
        MatchParams {
            max_distance: 0.9,
            mutual: true,
            ratio: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correspondence {
    pub query_index: usize,
    pub db_index: usize,
    pub query_point: [f64; 2],
    pub db_point: [f64; 2],
    /// Cosine distance between the two descriptors.
    pub descriptor_distance: f64,
}

/// Nearest-neighbor descriptor matching from query to database features.
///
/// Output is sorted by ascending distance, ties by query then db index.
pub fn match_descriptors(
    query: &ImageFeatures,
    db: &ImageFeatures,
    params: &MatchParams,
) -> Vec<Correspondence> {
    let nq = query.len();
    let nd = db.len();
    if nq == 0 || nd == 0 {
        return Vec::new();
    }

    let mut dist = vec![0.0; nq * nd];
    for (i, qf) in query.features.iter().enumerate() {
        let row = &mut dist[i * nd..(i + 1) * nd];
        for (d, df) in row.iter_mut().zip(&db.features) {
            *d = (1.0 - dot(&qf.descriptor, &df.descriptor)).clamp(0.0, 2.0);
        }
    }

    // nearest query feature of each db feature, lowest index on ties
    let db_best: Vec<usize> = (0..nd)
        .map(|j| {
            (0..nq)
                .min_by(|&a, &b| dist[a * nd + j].total_cmp(&dist[b * nd + j]))
                .expect("nq > 0")
        })
        .collect();

    let mut out = Vec::new();
    for i in 0..nq {
        let row = &dist[i * nd..(i + 1) * nd];
        let mut best = 0;
        let mut second = f64::INFINITY;
        for j in 1..nd {
            if row[j] < row[best] {
                second = row[best];
                best = j;
            } else if row[j] < second {
                second = row[j];
            }
        }
        let d = row[best];
        if d > params.max_distance {
            continue;
        }
        if params.mutual && db_best[best] != i {
            continue;
        }
        if let Some(ratio) = params.ratio {
            if second.is_finite() && d > ratio * second {
                continue;
            }
        }
        out.push(Correspondence {
            query_index: i,
            db_index: best,
            query_point: query.features[i].frame.center(),
            db_point: db.features[best].frame.center(),
            descriptor_distance: d,
        });
    }
    out.sort_by(|a, b| {
        a.descriptor_distance
            .total_cmp(&b.descriptor_distance)
            .then(a.query_index.cmp(&b.query_index))
            .then(a.db_index.cmp(&b.db_index))
    });
    out
}
