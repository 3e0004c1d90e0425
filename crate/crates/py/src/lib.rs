//! Python bindings: `import patreid`.

use std::path::PathBuf;
use std::sync::Arc;

use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use reid::geometry::{self, GeomParams, GeomVerdict, RansacParams};
use reid::ingest::{self, load_manifest};
use reid::reid::{
    evaluate_manifest, query_database, CombineParams, CombineRule, EvalReport, IdentityUnit,
    MatchCandidate, Protocol,
};
use reid::synth::{generate_benchmark, manifest_path, SynthConfig};
use reid::vocab::{build_vocabulary, load_vocabulary, save_vocabulary, VocabParams};
use reid::ReidError;

fn err(e: ReidError) -> PyErr {
    match e {
        ReidError::Io { .. } => PyOSError::new_err(e.to_string()),
        ReidError::Numeric(_) => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn parse_rule(rule: &str) -> PyResult<CombineRule> {
    rule.parse().map_err(PyValueError::new_err)
}

fn geom_params(inlier_threshold: f64, seed: u64) -> GeomParams {
    GeomParams {
        ransac: RansacParams {
            inlier_threshold,
            ..RansacParams::default()
        },
        seed,
        ..GeomParams::default()
    }
}

/// Local pattern features of one image.
#[pyclass(name = "ImageFeatures", module = "patreid", frozen, from_py_object)]
#[derive(Clone)]
struct PyImageFeatures {
    inner: Arc<ingest::ImageFeatures>,
}

#[pymethods]
impl PyImageFeatures {
    /// `centers` are (x, y) pairs; descriptors are normalized to unit length.
    #[new]
    #[pyo3(signature = (image_id, centers, descriptors, individual_id=None, viewpoint=None))]
    fn new(
        image_id: String,
        centers: Vec<(f64, f64)>,
        descriptors: Vec<Vec<f64>>,
        individual_id: Option<String>,
        viewpoint: Option<String>,
    ) -> PyResult<Self> {
        if centers.len() != descriptors.len() {
            return Err(PyValueError::new_err(format!(
                "{} centers but {} descriptors",
                centers.len(),
                descriptors.len()
            )));
        }
        let dim = descriptors.first().map_or(0, Vec::len);
        let parts = centers
            .into_iter()
            .zip(descriptors)
            .map(|((x, y), d)| (ingest::AffineFrame::at(x, y), d));
        let f = ingest::ImageFeatures::from_parts(image_id, dim, parts).map_err(err)?;
        Ok(PyImageFeatures {
            inner: Arc::new(f.with_labels(individual_id, viewpoint)),
        })
    }

    /// Reads a PATF feature file.
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let f = ingest::parse_feature_file(path).map_err(err)?;
        Ok(PyImageFeatures { inner: Arc::new(f) })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        ingest::write_feature_file(&self.inner, path).map_err(err)
    }

    #[getter]
    fn image_id(&self) -> &str {
        &self.inner.image_id
    }

    #[getter]
    fn individual_id(&self) -> Option<&str> {
        self.inner.individual_id.as_deref()
    }

    #[getter]
    fn descriptor_dim(&self) -> usize {
        self.inner.descriptor_dim
    }

    fn centers(&self) -> Vec<(f64, f64)> {
        self.inner.centers().map(|c| (c[0], c[1])).collect()
    }

    fn descriptors(&self) -> Vec<Vec<f64>> {
        self.inner.descriptors().map(<[f64]>::to_vec).collect()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!(
            "ImageFeatures({:?}, {} features, dim {})",
            self.inner.image_id,
            self.inner.len(),
            self.inner.descriptor_dim
        )
    }
}

/// L2-normalized appearance embedding.
#[pyclass(name = "Embedding", module = "patreid", frozen)]
struct PyEmbedding {
    inner: reid::Embedding,
}

#[pymethods]
impl PyEmbedding {
    #[new]
    fn new(values: Vec<f64>) -> Self {
        PyEmbedding {
            inner: reid::Embedding::from_raw(values),
        }
    }

    #[getter]
    fn values(&self) -> Vec<f64> {
        self.inner.values.clone()
    }

    #[getter]
    fn degenerate(&self) -> bool {
        self.inner.degenerate
    }

    fn __len__(&self) -> usize {
        self.inner.dim()
    }
}

/// Trained PCA, GMM and kernel-PCA state.
#[pyclass(name = "Vocabulary", module = "patreid", frozen)]
struct PyVocabulary {
    inner: Arc<reid::Vocabulary>,
}

#[pymethods]
impl PyVocabulary {
    #[staticmethod]
    #[pyo3(signature = (database, gmm_k=16, pca_dim=64, kpca_dim=None, whiten=true, alpha=0.5, seed=0, max_iters=200))]
    #[allow(clippy::too_many_arguments)]
    fn build(
        py: Python<'_>,
        database: Vec<PyImageFeatures>,
        gmm_k: usize,
        pca_dim: usize,
        kpca_dim: Option<usize>,
        whiten: bool,
        alpha: f64,
        seed: u64,
        max_iters: usize,
    ) -> PyResult<Self> {
        let images: Vec<_> = database.iter().map(|f| (*f.inner).clone()).collect();
        let params = VocabParams {
            gmm_k,
            pca_dim,
            kpca_dim,
            whiten,
            alpha,
            seed,
            max_iters,
            ..VocabParams::default()
        };
        let vocab = py
            .detach(|| build_vocabulary(&images, &params))
            .map_err(err)?;
        Ok(PyVocabulary {
            inner: Arc::new(vocab),
        })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(PyVocabulary {
            inner: Arc::new(load_vocabulary(path).map_err(err)?),
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        save_vocabulary(&self.inner, path).map_err(err)
    }

    fn embed(&self, features: &PyImageFeatures) -> PyResult<PyEmbedding> {
        let inner = reid::embed_image(&features.inner, &self.inner).map_err(err)?;
        Ok(PyEmbedding { inner })
    }

    #[getter]
    fn descriptor_dim(&self) -> usize {
        self.inner.descriptor_dim
    }

    #[getter]
    fn gmm_k(&self) -> usize {
        self.inner.gmm.k()
    }

    #[getter]
    fn fisher_dim(&self) -> usize {
        self.inner.fisher_dim()
    }

    #[getter]
    fn embedding_dim(&self) -> usize {
        self.inner.embedding_dim()
    }
}

fn candidate_dict<'py>(py: Python<'py>, c: &MatchCandidate) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("individual_id", &c.individual_id)?;
    d.set_item("image_id", &c.db_image_id)?;
    d.set_item("d_l", c.d_l)?;
    d.set_item("n", c.n)?;
    d.set_item("omega", c.omega)?;
    d.set_item("d_c", c.d_c)?;
    d.set_item("verified", c.verified)?;
    Ok(d)
}

/// Known individuals with precomputed embeddings.
#[pyclass(name = "Database", module = "patreid", frozen)]
struct PyDatabase {
    inner: reid::ReidDatabase,
}

#[pymethods]
impl PyDatabase {
    /// Every image must carry an `individual_id`.
    #[new]
    fn new(py: Python<'_>, vocab: &PyVocabulary, images: Vec<PyImageFeatures>) -> PyResult<Self> {
        let images: Vec<_> = images.iter().map(|f| (*f.inner).clone()).collect();
        let vocab = vocab.inner.clone();
        let inner = py
            .detach(|| reid::ReidDatabase::build(vocab, images, IdentityUnit::Individual))
            .map_err(err)?;
        Ok(PyDatabase { inner })
    }

    /// Best match per individual, best first.
    #[pyo3(signature = (features, rule="exp", topk=5, shortlist=50, inlier_threshold=0.1, seed=0))]
    #[allow(clippy::too_many_arguments)]
    fn query<'py>(
        &self,
        py: Python<'py>,
        features: &PyImageFeatures,
        rule: &str,
        topk: usize,
        shortlist: usize,
        inlier_threshold: f64,
        seed: u64,
    ) -> PyResult<Vec<Bound<'py, PyDict>>> {
        let params = CombineParams {
            rule: parse_rule(rule)?,
            shortlist_size: shortlist,
            geometry: geom_params(inlier_threshold, seed),
            ..CombineParams::default()
        };
        let q = features.inner.clone();
        let ranked = py
            .detach(|| query_database(&self.inner, &q, &params))
            .map_err(err)?;
        ranked
            .top_individuals(topk)
            .into_iter()
            .map(|c| candidate_dict(py, c))
            .collect()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }
}

#[pyfunction]
fn cosine_distance(a: &PyEmbedding, b: &PyEmbedding) -> PyResult<f64> {
    reid::cosine_distance(&a.inner, &b.inner).map_err(err)
}

/// Inlier count, inlier ratio and homography (or None) for a query/database pair.
#[pyfunction]
#[pyo3(signature = (query, db, inlier_threshold=0.1, seed=0))]
fn geometric_similarity<'py>(
    py: Python<'py>,
    query: &PyImageFeatures,
    db: &PyImageFeatures,
    inlier_threshold: f64,
    seed: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let params = geom_params(inlier_threshold, seed);
    let (q, d) = (query.inner.clone(), db.inner.clone());
    let v: GeomVerdict = py.detach(|| geometry::geometric_similarity(&q, &d, &params));
    let out = PyDict::new(py);
    out.set_item("n", v.n)?;
    out.set_item("omega", v.omega)?;
    out.set_item(
        "homography",
        v.homography.map(|h| h.h.map(Vec::from).to_vec()),
    )?;
    Ok(out)
}

#[pyfunction]
#[pyo3(signature = (d_l, omega, a=2.0))]
fn combine_polynomial(d_l: f64, omega: f64, a: f64) -> f64 {
    reid::reid::combine_polynomial(d_l, omega, a)
}

#[pyfunction]
#[pyo3(signature = (d_l, n, epsilon=1e-9))]
fn combine_exponential(d_l: f64, n: usize, epsilon: f64) -> f64 {
    reid::reid::combine_exponential(d_l, n, epsilon)
}

/// Writes a synthetic benchmark and returns the manifest path.
#[pyfunction]
#[pyo3(signature = (out_dir, seed=0, individuals=10, views=2, points=80, descriptor_dim=128))]
fn synth_benchmark(
    out_dir: PathBuf,
    seed: u64,
    individuals: usize,
    views: usize,
    points: usize,
    descriptor_dim: usize,
) -> PyResult<PathBuf> {
    let config = SynthConfig {
        seed,
        n_individuals: individuals,
        views_per_individual: views,
        points_per_individual: points,
        descriptor_dim,
        ..SynthConfig::default()
    };
    generate_benchmark(&config, &out_dir).map_err(err)?;
    Ok(manifest_path(&out_dir))
}

/// Loads the database entries of a manifest.
#[pyfunction]
fn load_database_features(manifest: PathBuf) -> PyResult<Vec<PyImageFeatures>> {
    let m = load_manifest(manifest).map_err(err)?;
    m.with_role(ingest::Role::Database)
        .map(|e| {
            let f = e.load_features().map_err(err)?;
            Ok(PyImageFeatures { inner: Arc::new(f) })
        })
        .collect()
}

fn report_dict<'py>(py: Python<'py>, r: &EvalReport) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("rule", r.rule.short_name())?;
    d.set_item("protocol", r.protocol.as_str())?;
    d.set_item("accuracies", &r.accuracies)?;
    d.set_item("queries", r.records.len())?;
    d.set_item("excluded", r.excluded.len())?;
    let ranks: Vec<(String, Option<usize>)> = r
        .records
        .iter()
        .map(|q| (q.query_id.clone(), q.rank_of_truth))
        .collect();
    d.set_item("ranks", ranks)?;
    Ok(d)
}

/// Top-k accuracy of each rule over a manifest. `protocol` is "split" or "loo".
#[pyfunction]
#[pyo3(signature = (manifest, vocab, protocol="split", topk=5, rules=None))]
fn evaluate<'py>(
    py: Python<'py>,
    manifest: PathBuf,
    vocab: &PyVocabulary,
    protocol: &str,
    topk: usize,
    rules: Option<Vec<String>>,
) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let protocol = match protocol {
        "split" => Protocol::Split,
        "loo" => Protocol::LeaveOneOut,
        other => return Err(PyValueError::new_err(format!("unknown protocol {other:?}"))),
    };
    let rules: Vec<CombineRule> = match rules {
        Some(names) => names
            .iter()
            .map(|r| parse_rule(r))
            .collect::<PyResult<_>>()?,
        None => CombineRule::ALL.to_vec(),
    };
    let params: Vec<_> = rules
        .into_iter()
        .map(|r| CombineParams::default().with_rule(r))
        .collect();
    let m = load_manifest(manifest).map_err(err)?;
    let v = vocab.inner.clone();
    let reports = py
        .detach(|| evaluate_manifest(&m, &v, &params, topk, protocol))
        .map_err(err)?;
    reports.iter().map(|r| report_dict(py, r)).collect()
}

#[pymodule]
fn patreid(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyImageFeatures>()?;
    m.add_class::<PyEmbedding>()?;
    m.add_class::<PyVocabulary>()?;
    m.add_class::<PyDatabase>()?;
    m.add_function(wrap_pyfunction!(cosine_distance, m)?)?;
    m.add_function(wrap_pyfunction!(geometric_similarity, m)?)?;
    m.add_function(wrap_pyfunction!(combine_polynomial, m)?)?;
    m.add_function(wrap_pyfunction!(combine_exponential, m)?)?;
    m.add_function(wrap_pyfunction!(synth_benchmark, m)?)?;
    m.add_function(wrap_pyfunction!(load_database_features, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    Ok(())
}
