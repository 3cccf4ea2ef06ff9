//! Python bindings for the `qudsim` crate.

use std::collections::BTreeSet;
use std::path::PathBuf;

use pyo3::exceptions::{PyFileNotFoundError, PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyModule;
use qudsim::alignment::{self, Provenance, TemplateCounting, ThresholdConfig};
use qudsim::baselines;
use qudsim::config::Config;
use qudsim::corpus::{self, AbstractionLevel, DocumentMeta, PairId};
use qudsim::scoring::{self, Metric};
use qudsim::workflow;

pyo3::create_exception!(qudsim_py, BackendError, PyRuntimeError);

fn err(e: qudsim::Error) -> PyErr {
    match &e {
        qudsim::Error::MissingArtifact(_) => PyFileNotFoundError::new_err(e.to_string()),
        e if e.is_backend() => BackendError::new_err(e.to_string()),
        qudsim::Error::Io { .. } => PyOSError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn parse<T: std::str::FromStr>(s: &str, what: &str) -> PyResult<T>
where
    T::Err: std::fmt::Display,
{
    s.parse()
        .map_err(|e| PyValueError::new_err(format!("bad {what} `{s}`: {e}")))
}

/// Serializable value to plain Python objects via the `json` module.
fn to_py<T: serde::Serialize>(py: Python<'_>, value: &T) -> PyResult<Py<PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    Ok(PyModule::import(py, "json")?
        .call_method1("loads", (text,))?
        .unbind())
}

#[pyclass(module = "qudsim_py", frozen)]
struct Document {
    inner: corpus::Document,
}

#[pymethods]
impl Document {
    #[new]
    #[pyo3(signature = (id, text, author_kind = "human", domain = "creative", prompt_id = "", variant_group = None))]
    fn new(
        id: &str,
        text: &str,
        author_kind: &str,
        domain: &str,
        prompt_id: &str,
        variant_group: Option<String>,
    ) -> PyResult<Self> {
        let meta = DocumentMeta {
            author_kind: author_kind.to_string(),
            domain: parse(domain, "domain")?,
            prompt_id: prompt_id.to_string(),
            variant_group,
        };
        Ok(Self {
            inner: corpus::Document::from_text(id, text, meta).map_err(err)?,
        })
    }

    #[getter]
    fn id(&self) -> &str {
        &self.inner.id
    }

    #[getter]
    fn sentences(&self) -> Vec<String> {
        self.inner.sentences.iter().map(|s| s.text.clone()).collect()
    }

    fn numbered_text(&self) -> String {
        self.inner.numbered_text()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!("Document({:?}, {} sentences)", self.inner.id, self.inner.len())
    }
}

#[pyclass(module = "qudsim_py", frozen)]
struct SimilarityMatrix {
    inner: scoring::SimilarityMatrix,
}

#[pymethods]
impl SimilarityMatrix {
    #[new]
    #[pyo3(signature = (source, target, values, metric_id = "qudsim"))]
    fn new(source: &str, target: &str, values: Vec<Vec<f64>>, metric_id: &str) -> PyResult<Self> {
        let inner =
            scoring::SimilarityMatrix::new(&PairId::new(source, target), metric_id, values).map_err(err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn values(&self) -> Vec<Vec<f64>> {
        self.inner.values.clone()
    }

    #[getter]
    fn shape(&self) -> (usize, usize) {
        (self.inner.rows, self.inner.cols)
    }

    #[getter]
    fn metric_id(&self) -> &str {
        &self.inner.metric_id
    }

    #[getter]
    fn pair(&self) -> String {
        pair_str(&self.inner.pair())
    }

    /// Score of 1-based segments `i` and `j`.
    fn get(&self, i: usize, j: usize) -> Option<f64> {
        self.inner.get(i, j)
    }

    fn transposed(&self) -> Self {
        Self {
            inner: self.inner.transposed(),
        }
    }

    fn align(&self, tau: f64) -> AlignmentSet {
        AlignmentSet {
            inner: alignment::threshold_align(&self.inner, tau),
        }
    }

    fn __repr__(&self) -> String {
        format!(
            "SimilarityMatrix({}, {}, {}x{})",
            pair_str(&self.inner.pair()),
            self.inner.metric_id,
            self.inner.rows,
            self.inner.cols
        )
    }
}

#[pyclass(module = "qudsim_py", frozen)]
struct AlignmentSet {
    inner: alignment::AlignmentSet,
}

#[pymethods]
impl AlignmentSet {
    #[new]
    #[pyo3(signature = (source, target, rows, cols, aligned, tau = 0.0, metric_id = "qudsim"))]
    fn new(
        source: &str,
        target: &str,
        rows: usize,
        cols: usize,
        aligned: Vec<(usize, usize)>,
        tau: f64,
        metric_id: &str,
    ) -> PyResult<Self> {
        if let Some(&(i, j)) = aligned
            .iter()
            .find(|&&(i, j)| i == 0 || j == 0 || i > rows || j > cols)
        {
            return Err(PyValueError::new_err(format!(
                "pair ({i}, {j}) outside {rows}x{cols}"
            )));
        }
        let pair = PairId::new(source, target);
        Ok(Self {
            inner: alignment::AlignmentSet::from_pairs(&pair, metric_id, tau, rows, cols, aligned),
        })
    }

    #[getter]
    fn aligned(&self) -> Vec<(usize, usize)> {
        self.inner.aligned.iter().copied().collect()
    }

    #[getter]
    fn tau(&self) -> f64 {
        self.inner.tau
    }

    fn document_similarity(&self) -> PyResult<f64> {
        alignment::document_similarity(&self.inner, self.inner.rows, self.inner.cols).map_err(err)
    }

    /// Number of length-`n` diagonal runs.
    #[pyo3(signature = (n, counting = "sliding"))]
    fn template_count(&self, n: usize, counting: &str) -> PyResult<usize> {
        let counting: TemplateCounting = parse(counting, "counting")?;
        Ok(alignment::extract_templates(&self.inner, n, counting)
            .map_err(err)?
            .count)
    }

    fn __len__(&self) -> usize {
        self.inner.aligned.len()
    }

    fn __repr__(&self) -> String {
        format!(
            "AlignmentSet({}, tau={}, {} pairs)",
            pair_str(&self.inner.pair()),
            self.inner.tau,
            self.inner.aligned.len()
        )
    }
}

/// A workspace directory plus the backend used for LLM stages.
#[pyclass(module = "qudsim_py", unsendable)]
struct Session {
    inner: workflow::Session,
}

fn pair_str(p: &PairId) -> String {
    format!("{}:{}", p.source, p.target)
}

fn paths(v: Vec<PathBuf>) -> Vec<String> {
    v.into_iter().map(|p| p.display().to_string()).collect()
}

impl Session {
    fn threshold(&self, metric: &str, tau: Option<f64>) -> PyResult<ThresholdConfig> {
        let id = parse::<Metric>(metric, "metric")?.id();
        match tau {
            Some(t) => ThresholdConfig::new(&id, t, Provenance::Manual).map_err(err),
            None => self
                .inner
                .cfg
                .threshold_for(&id)
                .ok_or_else(|| PyValueError::new_err(format!("no default threshold for `{id}`"))),
        }
    }
}

#[pymethods]
impl Session {
    /// `fixtures` names a directory of recorded transcripts to replay instead
    /// of calling a live backend.
    #[new]
    #[pyo3(signature = (root, fixtures = None, config = None))]
    fn new(root: PathBuf, fixtures: Option<PathBuf>, config: Option<PathBuf>) -> PyResult<Self> {
        let cfg = match config {
            Some(p) => Config::load(&p).map_err(err)?,
            None => Config::default(),
        };
        let inner = workflow::Session::open(root, cfg, fixtures.as_deref()).map_err(err)?;
        Ok(Self { inner })
    }

    fn ingest(&self, files: Vec<PathBuf>) -> PyResult<Vec<String>> {
        Ok(paths(self.inner.ingest(&files).map_err(err)?))
    }

    fn document_ids(&self) -> PyResult<Vec<String>> {
        self.inner.ws.document_ids().map_err(err)
    }

    fn document(&self, id: &str) -> PyResult<Document> {
        Ok(Document {
            inner: self.inner.ws.load_document(id).map_err(err)?,
        })
    }

    fn eligible_pairs(&self) -> PyResult<Vec<String>> {
        Ok(self
            .inner
            .eligible_pairs()
            .map_err(err)?
            .iter()
            .map(pair_str)
            .collect())
    }

    /// Segment, abstract (for the abstract level), generate QUDs and answer
    /// them for every eligible pair.
    #[pyo3(signature = (level = "abstract"))]
    fn run_pipeline(&self, level: &str) -> PyResult<Vec<String>> {
        let level: AbstractionLevel = parse(level, "level")?;
        Ok(paths(self.inner.run_pipeline(level).map_err(err)?))
    }

    fn score(&self, pair: &str, metric: &str) -> PyResult<SimilarityMatrix> {
        let pair: PairId = parse(pair, "pair")?;
        let metric: Metric = parse(metric, "metric")?;
        self.inner.score(&pair, &metric).map_err(err)?;
        self.matrix(&pair_str(&pair), &metric.id())
    }

    fn matrix(&self, pair: &str, metric: &str) -> PyResult<SimilarityMatrix> {
        let pair: PairId = parse(pair, "pair")?;
        let id = parse::<Metric>(metric, "metric")?.id();
        Ok(SimilarityMatrix {
            inner: self.inner.ws.load_matrix(&pair, &id).map_err(err)?,
        })
    }

    #[pyo3(signature = (pair, metric, tau = None))]
    fn align(&self, pair: &str, metric: &str, tau: Option<f64>) -> PyResult<AlignmentSet> {
        let p: PairId = parse(pair, "pair")?;
        let t = self.threshold(metric, tau)?;
        self.inner.align(&p, &t).map_err(err)?;
        Ok(AlignmentSet {
            inner: self.inner.ws.load_alignment(&p, &t.metric_id).map_err(err)?,
        })
    }

    fn calibrate(&self, py: Python<'_>, metric: &str) -> PyResult<Py<PyAny>> {
        let id = parse::<Metric>(metric, "metric")?.id();
        to_py(py, &self.inner.calibrate(&id).map_err(err)?.0)
    }

    #[pyo3(signature = (metric, tau = None))]
    fn eval(&self, py: Python<'_>, metric: &str, tau: Option<f64>) -> PyResult<Py<PyAny>> {
        to_py(
            py,
            &self.inner.eval(&self.threshold(metric, tau)?).map_err(err)?.0,
        )
    }

    #[pyo3(signature = (metric, tau = None))]
    fn heatmap(&self, py: Python<'_>, metric: &str, tau: Option<f64>) -> PyResult<Py<PyAny>> {
        to_py(
            py,
            &self.inner.heatmap(&self.threshold(metric, tau)?).map_err(err)?.0,
        )
    }

    #[pyo3(signature = (n, metric = "qudsim"))]
    fn templates(&self, py: Python<'_>, n: usize, metric: &str) -> PyResult<Py<PyAny>> {
        let id = parse::<Metric>(metric, "metric")?.id();
        to_py(py, &self.inner.templates(&id, n).map_err(err)?.0)
    }

    fn report(&self, pair: &str, metric: &str) -> PyResult<Vec<String>> {
        let pair: PairId = parse(pair, "pair")?;
        let id = parse::<Metric>(metric, "metric")?.id();
        Ok(paths(self.inner.report(&pair, &id).map_err(err)?))
    }
}

#[pyfunction]
fn split_sentences(text: &str) -> PyResult<Vec<String>> {
    Ok(corpus::split_sentences(text)
        .map_err(err)?
        .into_iter()
        .map(|s| s.text)
        .collect())
}

#[pyfunction]
fn tokenize(text: &str) -> Vec<String> {
    baselines::tokenize(text)
}

#[pyfunction]
fn ngram_jaccard(s: &str, t: &str, n: usize) -> PyResult<f64> {
    baselines::ngram_jaccard(&baselines::tokenize(s), &baselines::tokenize(t), n).map_err(err)
}

#[pyfunction]
fn rouge_l(s: &str, t: &str) -> f64 {
    baselines::rouge_l(&baselines::tokenize(s), &baselines::tokenize(t))
}

#[pyfunction]
fn cosine(a: Vec<f64>, b: Vec<f64>) -> PyResult<f64> {
    baselines::cosine(&a, &b).map_err(err)
}

/// Harmonic mean of the two directional similarities.
#[pyfunction]
fn qudsim_score(forward: f64, backward: f64) -> PyResult<f64> {
    scoring::qudsim_score(forward, backward).map_err(err)
}

#[pyfunction]
fn default_threshold(metric: &str) -> PyResult<Option<f64>> {
    let id = parse::<Metric>(metric, "metric")?.id();
    Ok(ThresholdConfig::default_for(&id).map(|t| t.tau))
}

/// Bare document similarity of 1-based aligned pairs in a `rows` x `cols`
/// matrix.
#[pyfunction]
fn document_similarity(aligned: Vec<(usize, usize)>, rows: usize, cols: usize) -> PyResult<f64> {
    let set: BTreeSet<(usize, usize)> = aligned.into_iter().collect();
    let a = alignment::AlignmentSet::from_pairs(&PairId::new("s", "t"), "qudsim", 0.0, rows, cols, set);
    alignment::document_similarity(&a, rows, cols).map_err(err)
}

#[pymodule]
fn qudsim_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Document>()?;
    m.add_class::<SimilarityMatrix>()?;
    m.add_class::<AlignmentSet>()?;
    m.add_class::<Session>()?;
    m.add("BackendError", m.py().get_type::<BackendError>())?;
    m.add_function(wrap_pyfunction!(split_sentences, m)?)?;
    m.add_function(wrap_pyfunction!(tokenize, m)?)?;
    m.add_function(wrap_pyfunction!(ngram_jaccard, m)?)?;
    m.add_function(wrap_pyfunction!(rouge_l, m)?)?;
    m.add_function(wrap_pyfunction!(cosine, m)?)?;
    m.add_function(wrap_pyfunction!(qudsim_score, m)?)?;
    m.add_function(wrap_pyfunction!(default_threshold, m)?)?;
    m.add_function(wrap_pyfunction!(document_similarity, m)?)?;
    Ok(())
}
