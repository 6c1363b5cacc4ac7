//! Python bindings for `prioritizer-core`.
//!
//! Tensors cross the boundary as a flat list of floats plus a shape, or as a
//! list of rows for batches.

use prioritizer_core::{self as core, eval, format, Error, Method, Selection, Task, Tensor};
use pyo3::create_exception;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

create_exception!(prioritizer, PrioritizerError, PyValueError);

type Traces = (Vec<Vec<f32>>, Option<Vec<u32>>);

fn py_err(e: Error) -> PyErr {
    PrioritizerError::new_err(format!("{}: {e}", e.category()))
}

trait IntoPy<T> {
    fn py(self) -> PyResult<T>;
}

impl<T> IntoPy<T> for core::Result<T> {
    fn py(self) -> PyResult<T> {
        self.map_err(py_err)
    }
}

fn batch(rows: &[Vec<f32>], item_shape: &[usize]) -> PyResult<Tensor> {
    Tensor::stack(item_shape, rows).py()
}

fn unbatch(t: &Tensor) -> Vec<Vec<f32>> {
    (0..t.rows()).map(|i| t.row(i).to_vec()).collect()
}

fn records(scores: &[f64]) -> PyResult<Vec<core::ScoreRecord>> {
    let n = u32::try_from(scores.len()).map_err(|_| PyValueError::new_err("too many scores"))?;
    Ok((0..n)
        .zip(scores)
        .map(|(input_index, &score)| core::ScoreRecord {
            input_index,
            method: Method::Softmax,
            score,
        })
        .collect())
}

/// A validated model loaded from a JSON manifest and an NNWB weights blob.
#[pyclass(frozen, module = "prioritizer")]
struct Model {
    inner: core::Model,
}

#[pymethods]
impl Model {
    /// Loads `manifest`; `weights` defaults to the manifest path with `.nnwb`.
    #[staticmethod]
    #[pyo3(signature = (manifest, weights = None))]
    fn load(manifest: std::path::PathBuf, weights: Option<std::path::PathBuf>) -> PyResult<Self> {
        let weights = weights.unwrap_or_else(|| manifest.with_extension("nnwb"));
        Ok(Self {
            inner: core::load_model(&manifest, &weights).py()?,
        })
    }

    /// Writes the model back out as a manifest and weights blob.
    fn save(&self, manifest: std::path::PathBuf, weights: std::path::PathBuf) -> PyResult<()> {
        core::save_model(self.inner.manifest(), manifest, weights).py()
    }

    #[getter]
    fn name(&self) -> &str {
        self.inner.name()
    }

    #[getter]
    fn task(&self) -> &'static str {
        self.inner.task().as_str()
    }

    #[getter]
    fn input_shape(&self) -> Vec<usize> {
        self.inner.input_shape().to_vec()
    }

    #[getter]
    fn output_len(&self) -> usize {
        self.inner.output_len()
    }

    #[getter]
    fn layer_names(&self) -> Vec<String> {
        self.inner.layers().iter().map(|l| l.name.clone()).collect()
    }

    #[getter]
    fn has_dropout(&self) -> bool {
        self.inner.has_dropout()
    }

    /// Deterministic outputs, one row per input row.
    fn predict(&self, py: Python<'_>, inputs: Vec<Vec<f32>>) -> PyResult<Vec<Vec<f32>>> {
        let x = batch(&inputs, self.inner.input_shape())?;
        let y = py.detach(|| core::predict_batch(&self.inner, &x)).py()?;
        Ok(unbatch(&y))
    }

    /// One stochastic forward pass with dropout active.
    fn predict_stochastic(
        &self,
        input: Vec<f32>,
        seed: u64,
        input_index: u64,
        sample_index: u32,
    ) -> PyResult<Vec<f32>> {
        let mode = core::ForwardMode::Stochastic {
            global_seed: seed,
            input_index,
            sample_index,
        };
        core::engine::forward_flat(&self.inner, &input, mode).py()
    }

    /// Concatenated activations of `layers` (default: the layer feeding
    /// softmax) and, for classifiers, the predicted classes.
    #[pyo3(signature = (inputs, layers = None))]
    fn traces(
        &self,
        py: Python<'_>,
        inputs: Vec<Vec<f32>>,
        layers: Option<Vec<String>>,
    ) -> PyResult<Traces> {
        let x = batch(&inputs, self.inner.input_shape())?;
        let layers = layers.unwrap_or_else(|| vec![self.inner.default_trace_layer().to_string()]);
        let with_classes = self.inner.task() == Task::Classification;
        let set = py
            .detach(|| core::capture_traces(&self.inner, &x, &layers, with_classes))
            .py()?;
        Ok((unbatch(&set.traces), set.predicted_class))
    }

    /// Priority scores: `softmax`, or `dropout` with `samples` passes. The
    /// dropout variant follows the model's task.
    #[pyo3(signature = (inputs, method, samples = 10, seed = 42))]
    fn score(
        &self,
        py: Python<'_>,
        inputs: Vec<Vec<f32>>,
        method: &str,
        samples: u32,
        seed: u64,
    ) -> PyResult<Vec<f64>> {
        let x = batch(&inputs, self.inner.input_shape())?;
        let (method, mc) = match method {
            "softmax" => (Method::Softmax, None),
            "dropout" => {
                let m = match self.inner.task() {
                    Task::Classification => Method::DropoutCls,
                    Task::Regression => Method::DropoutReg,
                };
                (m, Some(core::McConfig::new(samples, seed).py()?))
            }
            other => return Err(PyValueError::new_err(format!("unknown method {other:?}"))),
        };
        let recs = py
            .detach(|| core::score_batch(&self.inner, &x, method, mc))
            .py()?;
        Ok(recs.into_iter().map(|r| r.score).collect())
    }

    fn __repr__(&self) -> String {
        format!(
            "Model(name={:?}, task={}, input_shape={:?}, layers={})",
            self.inner.name(),
            self.inner.task().as_str(),
            self.inner.input_shape(),
            self.inner.layers().len()
        )
    }
}

/// Training traces grouped by predicted class, for DSA queries.
#[pyclass(frozen, module = "prioritizer")]
struct DsaIndex {
    inner: core::DsaIndex,
}

#[pymethods]
impl DsaIndex {
    #[new]
    fn new(traces: Vec<Vec<f32>>, classes: Vec<u32>) -> PyResult<Self> {
        let dim = traces.first().map_or(0, Vec::len);
        let t = Tensor::stack(&[dim], &traces).py()?;
        let set = core::ActivationTraceSet::new(vec!["traces".into()], t, Some(classes)).py()?;
        Ok(Self {
            inner: core::build_dsa_index(&set).py()?,
        })
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn num_classes(&self) -> usize {
        self.inner.num_classes()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    /// Training indices predicted as `cls`.
    fn bucket(&self, cls: usize) -> Vec<usize> {
        self.inner.bucket(cls).to_vec()
    }

    /// `(x_a, x_b, dist_a, dist_b, score)` for one test trace.
    fn query(&self, trace: Vec<f32>, cls: u32) -> PyResult<(usize, usize, f64, f64, f64)> {
        let m = self.inner.query(&trace, cls).py()?;
        Ok((m.x_a, m.x_b, m.dist_a, m.dist_b, m.score))
    }

    /// DSA score of every test trace against its predicted class.
    fn score(
        &self,
        py: Python<'_>,
        traces: Vec<Vec<f32>>,
        classes: Vec<u32>,
    ) -> PyResult<Vec<f64>> {
        let t = Tensor::stack(&[self.inner.dim()], &traces).py()?;
        let set = core::ActivationTraceSet::new(vec!["traces".into()], t, Some(classes)).py()?;
        let recs = py
            .detach(|| core::score_dsa_batch(&self.inner, &set))
            .py()?;
        Ok(recs.into_iter().map(|r| r.score).collect())
    }
}

/// Shannon entropy (natural log) of a probability vector.
#[pyfunction]
fn entropy(p: Vec<f64>) -> PyResult<f64> {
    core::entropy(&p).py()
}

#[pyfunction]
fn softmax(z: Vec<f64>) -> PyResult<Vec<f64>> {
    core::softmax(&z).py()
}

/// Input indices in descending score order, ties by index.
#[pyfunction]
fn rank_by_score(scores: Vec<f64>) -> PyResult<Vec<u32>> {
    core::rank_by_score(&records(&scores)?).py()
}

/// Running error count along `permutation`; `correct[i]` marks input `i`.
#[pyfunction]
fn cumulative_error_curve(permutation: Vec<u32>, correct: Vec<bool>) -> PyResult<Vec<u32>> {
    let cv = eval::CorrectnessVector {
        correct,
        task: Task::Classification,
        threshold: None,
    };
    core::cumulative_error_curve(&permutation, &cv).py()
}

/// Efficacy of a cumulative error curve as a percentage of the ideal.
#[pyfunction]
fn apfd_score(cum_errors: Vec<u32>, m: u32) -> PyResult<f64> {
    core::apfd_score(&cum_errors, m).py()
}

/// Per-row correctness of predictions against class labels or regression
/// targets.
#[pyfunction]
#[pyo3(signature = (predictions, labels, threshold = None))]
fn derive_correctness(
    predictions: Vec<Vec<f32>>,
    labels: &Bound<'_, PyAny>,
    threshold: Option<f64>,
) -> PyResult<Vec<bool>> {
    let width = predictions.first().map_or(0, Vec::len);
    let preds = Tensor::stack(&[width], &predictions).py()?;
    let (labels, task) = if let Ok(classes) = labels.extract::<Vec<u32>>() {
        (format::Labels::Classes(classes), Task::Classification)
    } else {
        let rows: Vec<Vec<f32>> = labels.extract()?;
        let w = rows.first().map_or(0, Vec::len);
        (
            format::Labels::Targets(Tensor::stack(&[w], &rows).py()?),
            Task::Regression,
        )
    };
    Ok(core::derive_correctness(&preds, &labels, task, threshold)
        .py()?
        .correct)
}

/// Top inputs by score, either a `fraction` of all inputs or exactly `k`.
#[pyfunction]
#[pyo3(signature = (scores, fraction = None, k = None))]
fn select_top(scores: Vec<f64>, fraction: Option<f64>, k: Option<usize>) -> PyResult<Vec<u32>> {
    let sel = match (fraction, k) {
        (Some(f), None) => Selection::Fraction(f),
        (None, Some(k)) => Selection::Count(k),
        _ => return Err(PyValueError::new_err("pass exactly one of fraction or k")),
    };
    core::select_top(&records(&scores)?, sel).py()
}

/// Reads an f32 TBIN file as `(shape, flat_data)`.
#[pyfunction]
fn load_tensor(path: std::path::PathBuf) -> PyResult<(Vec<usize>, Vec<f32>)> {
    let t = core::load_tensor_file(path).py()?;
    Ok((t.shape().to_vec(), t.data().to_vec()))
}

#[pyfunction]
fn save_tensor(path: std::path::PathBuf, shape: Vec<usize>, data: Vec<f32>) -> PyResult<()> {
    core::save_tensor_file(&Tensor::new(shape, data).py()?, path).py()
}

#[pyfunction]
fn load_classes(path: std::path::PathBuf) -> PyResult<Vec<u32>> {
    format::load_class_file(path).py()
}

#[pyfunction]
fn save_classes(path: std::path::PathBuf, classes: Vec<u32>) -> PyResult<()> {
    format::save_class_file(&classes, path).py()
}

#[pymodule]
fn prioritizer(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("PrioritizerError", m.py().get_type::<PrioritizerError>())?;
    m.add_class::<Model>()?;
    m.add_class::<DsaIndex>()?;
    m.add_function(wrap_pyfunction!(entropy, m)?)?;
    m.add_function(wrap_pyfunction!(softmax, m)?)?;
    m.add_function(wrap_pyfunction!(rank_by_score, m)?)?;
    m.add_function(wrap_pyfunction!(cumulative_error_curve, m)?)?;
    m.add_function(wrap_pyfunction!(apfd_score, m)?)?;
    m.add_function(wrap_pyfunction!(derive_correctness, m)?)?;
    m.add_function(wrap_pyfunction!(select_top, m)?)?;
    m.add_function(wrap_pyfunction!(load_tensor, m)?)?;
    m.add_function(wrap_pyfunction!(save_tensor, m)?)?;
    m.add_function(wrap_pyfunction!(load_classes, m)?)?;
    m.add_function(wrap_pyfunction!(save_classes, m)?)?;
    Ok(())
}
