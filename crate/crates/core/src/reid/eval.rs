//! Top-k evaluation under the database/query split and leave-one-out
//! protocols.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use super::combine::{CombineParams, CombineRule};
use super::search::{
    rank_query, GeometryCache, IdentityUnit, MatchCandidate, RankedResult, ReidDatabase,
};
use crate::encode::embed_image;
use crate::error::{ReidError, Result};
use crate::ingest::{ImageFeatures, Manifest, Role};
use crate::vocab::Vocabulary;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Protocol {
    Split,
    LeaveOneOut,
}

impl Protocol {
    pub fn as_str(self) -> &'static str {
        match self {
            Protocol::Split => "split",
            Protocol::LeaveOneOut => "loo",
        }
    }
}

impl std::str::FromStr for Protocol {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "split" => Ok(Protocol::Split),
            "loo" | "leave_one_out" => Ok(Protocol::LeaveOneOut),
            other => Err(format!(
                "unknown protocol {other:?} (expected split or loo)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueryRecord {
    pub query_id: String,
    pub truth: String,
    /// 1-based rank of the true identity among distinct individuals.
    pub rank_of_truth: Option<usize>,
    pub top: Option<MatchCandidate>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub protocol: Protocol,
    pub rule: CombineRule,
    /// `accuracies[k - 1]` is the top-k accuracy.
    pub accuracies: Vec<f64>,
    pub records: Vec<QueryRecord>,
    /// Excluded query ids with the reason.
    pub excluded: Vec<(String, String)>,
}

impl EvalReport {
    pub fn top(&self, k: usize) -> f64 {
        self.accuracies[k - 1]
    }
}

/// Fraction of queries whose true identity is among the first `k` distinct
/// individuals of their ranking.
pub fn topk_accuracy(
    results: &[RankedResult],
    truths: &HashMap<String, String>,
    k: usize,
) -> Result<f64> {
    if results.is_empty() {
        return Err(ReidError::InsufficientData("no query results".into()));
    }
    let mut hits = 0usize;
    for r in results {
        let truth = truths.get(&r.query_image_id).ok_or_else(|| {
            ReidError::Invalid(format!("no truth label for query {:?}", r.query_image_id))
        })?;
        if r.individuals.iter().take(k).any(|i| i == truth) {
            hits += 1;
        }
    }
    Ok(hits as f64 / results.len() as f64)
}

fn accuracy_table(records: &[QueryRecord], k_max: usize) -> Vec<f64> {
    (1..=k_max)
        .map(|k| {
            let hits = records
                .iter()
                .filter(|r| r.rank_of_truth.is_some_and(|rank| rank <= k))
                .count();
            hits as f64 / records.len() as f64
        })
        .collect()
}

struct Query {
    features: ImageFeatures,
    truth: String,
    embedding: crate::encode::Embedding,
}

fn run_rules(
    db: &ReidDatabase,
    queries: &[Query],
    rules: &[CombineParams],
    k_max: usize,
    protocol: Protocol,
    excluded: Vec<(String, String)>,
) -> Result<Vec<EvalReport>> {
    if queries.is_empty() {
        return Err(ReidError::InsufficientData(format!(
            "all {} queries excluded",
            excluded.len()
        )));
    }
    let mut cache = GeometryCache::new();
    let mut reports = Vec::with_capacity(rules.len());
    for params in rules {
        let mut records = Vec::with_capacity(queries.len());
        for q in queries {
            let exclude =
                (protocol == Protocol::LeaveOneOut).then_some(q.features.image_id.as_str());
            let ranked = rank_query(db, &q.features, &q.embedding, params, exclude, &mut cache)?;
            records.push(QueryRecord {
                query_id: q.features.image_id.clone(),
                truth: q.truth.clone(),
                rank_of_truth: ranked.rank_of(&q.truth),
                top: ranked.candidates.first().cloned(),
            });
        }
        reports.push(EvalReport {
            protocol,
            rule: params.rule,
            accuracies: accuracy_table(&records, k_max),
            records,
            excluded: excluded.clone(),
        });
    }
    Ok(reports)
}

fn check_k(k_max: usize) -> Result<()> {
    if k_max == 0 {
        return Err(ReidError::Invalid("k_max must be >= 1".into()));
    }
    Ok(())
}

/// Evaluates every rule in `rules` with database images as the gallery and
/// query images as probes. Geometry is computed once per image pair and
/// shared across rules.
pub fn evaluate_split_images(
    database: Vec<ImageFeatures>,
    queries: Vec<ImageFeatures>,
    vocab: Arc<Vocabulary>,
    rules: &[CombineParams],
    k_max: usize,
) -> Result<Vec<EvalReport>> {
    check_k(k_max)?;
    if database.is_empty() {
        return Err(ReidError::InsufficientData("no database images".into()));
    }
    if queries.is_empty() {
        return Err(ReidError::InsufficientData("no query images".into()));
    }
    let unit = IdentityUnit::Individual;
    let db = ReidDatabase::build(vocab.clone(), database, unit)?;
    let known: std::collections::HashSet<&str> =
        db.entries.iter().map(|e| e.identity.as_str()).collect();

    let mut excluded = Vec::new();
    let mut probes = Vec::new();
    for features in queries {
        let truth = unit.key(&features).ok_or_else(|| {
            ReidError::Invalid(format!(
                "query {:?} has no individual_id",
                features.image_id
            ))
        })?;
        if !known.contains(truth.as_str()) {
            excluded.push((
                features.image_id.clone(),
                "individual not in database".to_string(),
            ));
            continue;
        }
        let embedding = embed_image(&features, &vocab)?;
        probes.push(Query {
            features,
            truth,
            embedding,
        });
    }
    run_rules(&db, &probes, rules, k_max, Protocol::Split, excluded)
}

/// Each image is queried against all others. Identities are
/// individual + viewpoint when a viewpoint is labeled; images whose identity
/// has no other image are excluded.
pub fn evaluate_leave_one_out_images(
    images: Vec<ImageFeatures>,
    vocab: Arc<Vocabulary>,
    rules: &[CombineParams],
    k_max: usize,
) -> Result<Vec<EvalReport>> {
    check_k(k_max)?;
    if images.len() < 2 {
        return Err(ReidError::InsufficientData(format!(
            "leave-one-out needs at least 2 images, got {}",
            images.len()
        )));
    }
    let unit = IdentityUnit::IndividualViewpoint;
    let db = ReidDatabase::build(vocab, images, unit)?;
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for e in &db.entries {
        *counts.entry(e.identity.as_str()).or_default() += 1;
    }

    let mut excluded = Vec::new();
    let mut probes = Vec::new();
    for e in &db.entries {
        if counts[e.identity.as_str()] < 2 {
            excluded.push((
                e.image_id.clone(),
                "no other image of this identity".to_string(),
            ));
            continue;
        }
        probes.push(Query {
            features: (*e.features).clone(),
            truth: e.identity.clone(),
            embedding: e.embedding.clone(),
        });
    }
    run_rules(&db, &probes, rules, k_max, Protocol::LeaveOneOut, excluded)
}

pub fn evaluate_split(
    manifest: &Manifest,
    vocab: &Vocabulary,
    params: &CombineParams,
    k_max: usize,
) -> Result<EvalReport> {
    evaluate_manifest(
        manifest,
        vocab,
        std::slice::from_ref(params),
        k_max,
        Protocol::Split,
    )
    .map(|mut r| r.remove(0))
}

pub fn evaluate_leave_one_out(
    manifest: &Manifest,
    vocab: &Vocabulary,
    params: &CombineParams,
    k_max: usize,
) -> Result<EvalReport> {
    evaluate_manifest(
        manifest,
        vocab,
        std::slice::from_ref(params),
        k_max,
        Protocol::LeaveOneOut,
    )
    .map(|mut r| r.remove(0))
}

/// Loads the manifest's feature files and evaluates every rule under
/// `protocol`. Leave-one-out pools both roles.
pub fn evaluate_manifest(
    manifest: &Manifest,
    vocab: &Vocabulary,
    rules: &[CombineParams],
    k_max: usize,
    protocol: Protocol,
) -> Result<Vec<EvalReport>> {
    let vocab = Arc::new(vocab.clone());
    match protocol {
        Protocol::Split => {
            let db = manifest
                .with_role(Role::Database)
                .map(|e| e.load_features())
                .collect::<Result<Vec<_>>>()?;
            let q = manifest
                .with_role(Role::Query)
                .map(|e| e.load_features())
                .collect::<Result<Vec<_>>>()?;
            evaluate_split_images(db, q, vocab, rules, k_max)
        }
        Protocol::LeaveOneOut => {
            evaluate_leave_one_out_images(manifest.load_all()?, vocab, rules, k_max)
        }
    }
}

pub const PER_QUERY_HEADER: &str = "rule,query_id,truth,rank_of_truth,d_L,n,omega,d_C";

/// Per-query CSV for one or more reports, followed by `#`-prefixed summary
/// lines.
pub fn per_query_csv(reports: &[EvalReport]) -> String {
    let mut s = String::from(PER_QUERY_HEADER);
    s.push('\n');
    for r in reports {
        for q in &r.records {
            let rank = q.rank_of_truth.map(|v| v.to_string()).unwrap_or_default();
            match &q.top {
                Some(t) => {
                    let _ = writeln!(
                        s,
                        "{},{},{},{},{},{},{},{}",
                        r.rule, q.query_id, q.truth, rank, t.d_l, t.n, t.omega, t.d_c
                    );
                }
                None => {
                    let _ = writeln!(s, "{},{},{},{},,,,", r.rule, q.query_id, q.truth, rank);
                }
            }
        }
    }
    for r in reports {
        let _ = write!(
            s,
            "# summary rule={} protocol={} queries={} excluded={}",
            r.rule,
            r.protocol.as_str(),
            r.records.len(),
            r.excluded.len()
        );
        for (k, acc) in r.accuracies.iter().enumerate() {
            let _ = write!(s, " top{}={acc}", k + 1);
        }
        s.push('\n');
    }
    s
}

pub fn write_per_query_csv(reports: &[EvalReport], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, per_query_csv(reports)).map_err(|e| ReidError::io(path, e))
}

fn rule_label(rule: CombineRule) -> &'static str {
    match rule {
        CombineRule::AppearanceOnly => "Appearance only: d_C = d_L",
        CombineRule::GeometryOnly => "Geometry only: d_C = -n",
        CombineRule::Polynomial => "Combined: d_C = d_L (1 - w)^a",
        CombineRule::Exponential => "Combined: d_C = d_L^n",
    }
}

/// Method x top-k grid with percentages.
pub fn format_grid(reports: &[EvalReport]) -> String {
    let k_max = reports
        .iter()
        .map(|r| r.accuracies.len())
        .max()
        .unwrap_or(0);
    let width = reports
        .iter()
        .map(|r| rule_label(r.rule).len())
        .max()
        .unwrap_or(6)
        .max(6);
    let mut s = format!("{:<width$}", "Method");
    for k in 1..=k_max {
        let _ = write!(s, "  {:>7}", format!("top-{k}"));
    }
    s.push('\n');
    for r in reports {
        let _ = write!(s, "{:<width$}", rule_label(r.rule));
        for acc in &r.accuracies {
            let _ = write!(s, "  {:>6.1}%", 100.0 * acc);
        }
        s.push('\n');
    }
    if let Some(r) = reports.first() {
        let _ = writeln!(
            s,
            "protocol={} queries={} excluded={}",
            r.protocol.as_str(),
            r.records.len(),
            r.excluded.len()
        );
    }
    s
}
