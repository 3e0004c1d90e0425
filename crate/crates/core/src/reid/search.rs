use std::cmp::Ordering;
use std::collections::{HashMap, HashSet};
use std::sync::Arc;

use super::combine::{combine_exponential, combine_polynomial, CombineParams, CombineRule};
use crate::encode::{cosine_distance, embed_image, Embedding};
use crate::error::{ReidError, Result};
use crate::geometry::{geometric_similarity, GeomParams, GeomVerdict};
use crate::ingest::ImageFeatures;
use crate::vocab::Vocabulary;

/// What counts as one identity when ranking and scoring.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum IdentityUnit {
    #[default]
    Individual,
    /// `individual_id` plus viewpoint, when a viewpoint is labeled.
    IndividualViewpoint,
}

impl IdentityUnit {
    pub fn key(self, features: &ImageFeatures) -> Option<String> {
        let ind = features.individual_id.as_deref()?;
        Some(match (self, features.viewpoint.as_deref()) {
            (IdentityUnit::IndividualViewpoint, Some(vp)) => format!("{ind}/{vp}"),
            _ => ind.to_string(),
        })
    }
}

#[derive(Debug, Clone)]
pub struct DbEntry {
    pub image_id: String,
    /// Identity key under the database's [`IdentityUnit`].
    pub identity: String,
    pub embedding: Embedding,
    pub features: Arc<ImageFeatures>,
}

/// Known individuals with precomputed appearance embeddings.
#[derive(Debug, Clone)]
pub struct ReidDatabase {
    pub vocab: Arc<Vocabulary>,
    pub entries: Vec<DbEntry>,
    pub identity_unit: IdentityUnit,
}

impl ReidDatabase {
    pub fn build(
        vocab: Arc<Vocabulary>,
        images: Vec<ImageFeatures>,
        identity_unit: IdentityUnit,
    ) -> Result<Self> {
        let embeddings = images
            .iter()
            .map(|f| embed_image(f, &vocab))
            .collect::<Result<Vec<_>>>()?;
        Self::from_embeddings(
            vocab,
            images.into_iter().zip(embeddings).collect(),
            identity_unit,
        )
    }

    /// Uses embeddings computed elsewhere, e.g. read from an embedding store.
    pub fn from_embeddings(
        vocab: Arc<Vocabulary>,
        items: Vec<(ImageFeatures, Embedding)>,
        identity_unit: IdentityUnit,
    ) -> Result<Self> {
        let mut seen = HashSet::new();
        let mut entries = Vec::with_capacity(items.len());
        for (features, embedding) in items {
            if !seen.insert(features.image_id.clone()) {
                return Err(ReidError::Invalid(format!(
                    "duplicate database image {:?}",
                    features.image_id
                )));
            }
            if embedding.dim() != vocab.embedding_dim() {
                return Err(ReidError::DimensionMismatch {
                    expected: vocab.embedding_dim(),
                    got: embedding.dim(),
                });
            }
            let identity = identity_unit.key(&features).ok_or_else(|| {
                ReidError::Invalid(format!(
                    "database image {:?} has no individual_id",
                    features.image_id
                ))
            })?;
            entries.push(DbEntry {
                image_id: features.image_id.clone(),
                identity,
                embedding,
                features: Arc::new(features),
            });
        }
        Ok(ReidDatabase {
            vocab,
            entries,
            identity_unit,
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchCandidate {
    pub db_image_id: String,
    /// Identity key of the database image.
    pub individual_id: String,
    pub d_l: f64,
    pub n: usize,
    pub omega: f64,
    pub d_c: f64,
    /// Whether geometric verification contributed to `d_c`.
    pub verified: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankedResult {
    pub query_image_id: String,
    pub candidates: Vec<MatchCandidate>,
    /// Distinct identities in first-appearance order of `candidates`.
    pub individuals: Vec<String>,
}

impl RankedResult {
    /// 1-based rank of `identity` among distinct individuals.
    pub fn rank_of(&self, identity: &str) -> Option<usize> {
        self.individuals
            .iter()
            .position(|i| i == identity)
            .map(|p| p + 1)
    }

    /// Best candidate of each of the first `k` individuals.
    pub fn top_individuals(&self, k: usize) -> Vec<&MatchCandidate> {
        let mut seen = HashSet::new();
        self.candidates
            .iter()
            .filter(|c| seen.insert(c.individual_id.as_str()))
            .take(k)
            .collect()
    }
}

/// Memoizes geometric verdicts per (query, database) image pair. Only valid
/// for one set of geometry parameters; switching parameters clears it.
#[derive(Debug, Default)]
pub struct GeometryCache {
    params: Option<GeomParams>,
    verdicts: HashMap<(String, String), (usize, f64)>,
}

impl GeometryCache {
    pub fn new() -> Self {
        Self::default()
    }

    fn get_or_compute(
        &mut self,
        query: &ImageFeatures,
        db: &ImageFeatures,
        params: &GeomParams,
    ) -> (usize, f64) {
        if self.params.as_ref() != Some(params) {
            self.verdicts.clear();
            self.params = Some(*params);
        }
        *self
            .verdicts
            .entry((query.image_id.clone(), db.image_id.clone()))
            .or_insert_with(|| {
                let v: GeomVerdict = geometric_similarity(query, db, params);
                (v.n, v.omega)
            })
    }

    pub fn len(&self) -> usize {
        self.verdicts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.verdicts.is_empty()
    }
}

fn combined(rule: CombineRule, params: &CombineParams, d_l: f64, n: usize, omega: f64) -> f64 {
    match rule {
        CombineRule::AppearanceOnly => d_l,
        CombineRule::GeometryOnly => -(n as f64),
        CombineRule::Polynomial => combine_polynomial(d_l, omega, params.a),
        CombineRule::Exponential => combine_exponential(d_l, n, params.epsilon),
    }
}

/// Scores one query/database pair under `params.rule`. Geometry is computed
/// only when the rule needs it.
pub fn score_pair(
    query: &ImageFeatures,
    query_embedding: &Embedding,
    entry: &DbEntry,
    params: &CombineParams,
) -> Result<MatchCandidate> {
    score_pair_cached(
        query,
        query_embedding,
        entry,
        params,
        &mut GeometryCache::new(),
    )
}

pub(crate) fn score_pair_cached(
    query: &ImageFeatures,
    query_embedding: &Embedding,
    entry: &DbEntry,
    params: &CombineParams,
    cache: &mut GeometryCache,
) -> Result<MatchCandidate> {
    let d_l = cosine_distance(query_embedding, &entry.embedding)?;
    let (n, omega) = if params.rule.uses_geometry() {
        cache.get_or_compute(query, &entry.features, &params.geometry)
    } else {
        (0, 0.0)
    };
    Ok(MatchCandidate {
        db_image_id: entry.image_id.clone(),
        individual_id: entry.identity.clone(),
        d_l,
        n,
        omega,
        d_c: combined(params.rule, params, d_l, n, omega),
        verified: params.rule.uses_geometry(),
    })
}

fn candidate_order(a: &MatchCandidate, b: &MatchCandidate) -> Ordering {
    // verified entries first, then d_C, d_L, image id
    b.verified
        .cmp(&a.verified)
        .then(a.d_c.total_cmp(&b.d_c))
        .then(a.d_l.total_cmp(&b.d_l))
        .then(a.db_image_id.cmp(&b.db_image_id))
}

/// Two-stage search: rank every entry by appearance, then verify the
/// shortlist geometrically and re-rank it with the combination rule.
pub fn query_database(
    db: &ReidDatabase,
    query: &ImageFeatures,
    params: &CombineParams,
) -> Result<RankedResult> {
    let embedding = embed_image(query, &db.vocab)?;
    rank_query(
        db,
        query,
        &embedding,
        params,
        None,
        &mut GeometryCache::new(),
    )
}

pub(crate) fn rank_query(
    db: &ReidDatabase,
    query: &ImageFeatures,
    query_embedding: &Embedding,
    params: &CombineParams,
    exclude_image: Option<&str>,
    cache: &mut GeometryCache,
) -> Result<RankedResult> {
    if db.is_empty() {
        return Err(ReidError::InsufficientData("empty database".into()));
    }
    params.validate()?;

    let mut stage1: Vec<(f64, &DbEntry)> = db
        .entries
        .iter()
        .filter(|e| Some(e.image_id.as_str()) != exclude_image)
        .map(|e| cosine_distance(query_embedding, &e.embedding).map(|d| (d, e)))
        .collect::<Result<_>>()?;
    if stage1.is_empty() {
        return Err(ReidError::InsufficientData(
            "no database entries left to rank".into(),
        ));
    }
    stage1.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.image_id.cmp(&b.1.image_id)));

    let verify = if params.rule.uses_geometry() {
        if params.shortlist_size == 0 {
            stage1.len()
        } else {
            params.shortlist_size.min(stage1.len())
        }
    } else {
        0
    };

    let mut candidates = Vec::with_capacity(stage1.len());
    for (i, (d_l, entry)) in stage1.iter().enumerate() {
        if i < verify {
            candidates.push(score_pair_cached(
                query,
                query_embedding,
                entry,
                params,
                cache,
            )?);
        } else {
            candidates.push(MatchCandidate {
                db_image_id: entry.image_id.clone(),
                individual_id: entry.identity.clone(),
                d_l: *d_l,
                n: 0,
                omega: 0.0,
                d_c: *d_l,
                verified: false,
            });
        }
    }
    candidates.sort_by(candidate_order);

    let mut seen = HashSet::new();
    let individuals = candidates
        .iter()
        .filter(|c| seen.insert(c.individual_id.clone()))
        .map(|c| c.individual_id.clone())
        .collect();
    Ok(RankedResult {
        query_image_id: query.image_id.clone(),
        candidates,
        individuals,
    })
}
