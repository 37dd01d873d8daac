//! Python bindings. Matrices cross the boundary as lists of rows.

use std::collections::HashMap;

use ndarray::{Array1, Array2};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use nodecon::checkpoint::Checkpoint;
use nodecon::dpp::{build_kernel, greedy_map, sample_kdpp, Bandwidth};
use nodecon::graph::{generate_sbm, k_hop_neighbors, load_citation_bundle, Graph as CoreGraph, SbmParams, Splits};
use nodecon::objective::weighted_loss;
use nodecon::pipeline::{final_embeddings, linear_evaluate, train as core_train, TrainConfig};
use nodecon::rng::{stream, Phase};

fn err(e: nodecon::Error) -> PyErr {
    match e {
        nodecon::Error::Io { .. } | nodecon::Error::NonFinite(_) => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn matrix(rows: &[Vec<f64>]) -> PyResult<Array2<f64>> {
    let d = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != d) {
        return Err(PyValueError::new_err("rows have different lengths"));
    }
    Ok(Array2::from_shape_fn((rows.len(), d), |(i, j)| rows[i][j]))
}

fn rows(m: &Array2<f64>) -> Vec<Vec<f64>> {
    m.outer_iter().map(|r| r.to_vec()).collect()
}

/// Undirected attributed graph with train/val/test splits.
#[pyclass(name = "Graph", frozen)]
struct PyGraph(CoreGraph);

#[pymethods]
impl PyGraph {
    #[new]
    #[pyo3(signature = (num_nodes, edges, features, labels, train=vec![], val=vec![], test=vec![]))]
    fn new(
        num_nodes: usize,
        edges: Vec<(usize, usize)>,
        features: Vec<Vec<f64>>,
        labels: Vec<usize>,
        train: Vec<usize>,
        val: Vec<usize>,
        test: Vec<usize>,
    ) -> PyResult<Self> {
        let splits = Splits { train, val, test };
        CoreGraph::new(num_nodes, edges, matrix(&features)?, labels, splits)
            .map(Self)
            .map_err(err)
    }

    #[staticmethod]
    #[pyo3(signature = (blocks, p_in, p_out, feature_dim=16, separation=3.0, seed=0))]
    fn sbm(blocks: Vec<usize>, p_in: f64, p_out: f64, feature_dim: usize, separation: f64, seed: u64) -> PyResult<Self> {
        let params = SbmParams {
            block_sizes: blocks,
            p_in,
            p_out,
            feature_dim,
            feature_separation: separation,
        };
        generate_sbm(&params, seed).map(Self).map_err(err)
    }

    /// Loads a canonical four-file bundle directory.
    #[staticmethod]
    fn load(dir: &str) -> PyResult<Self> {
        load_citation_bundle(dir).map(Self).map_err(err)
    }

    #[getter]
    fn num_nodes(&self) -> usize {
        self.0.num_nodes()
    }

    #[getter]
    fn num_edges(&self) -> usize {
        self.0.num_edges()
    }

    #[getter]
    fn num_classes(&self) -> usize {
        self.0.num_classes()
    }

    #[getter]
    fn feature_dim(&self) -> usize {
        self.0.feature_dim()
    }

    fn edges(&self) -> Vec<(usize, usize)> {
        self.0.edges().to_vec()
    }

    fn labels(&self) -> Vec<usize> {
        self.0.labels().to_vec()
    }

    fn features(&self) -> Vec<Vec<f64>> {
        rows(self.0.features())
    }

    fn neighbors(&self, v: usize) -> PyResult<Vec<usize>> {
        if v >= self.0.num_nodes() {
            return Err(PyValueError::new_err(format!("node {v} out of range")));
        }
        Ok(self.0.neighbors(v).to_vec())
    }

    /// Nodes within distance `k` of `v`, including `v`.
    fn k_hop(&self, v: usize, k: usize) -> PyResult<Vec<usize>> {
        if v >= self.0.num_nodes() {
            return Err(PyValueError::new_err(format!("node {v} out of range")));
        }
        Ok(k_hop_neighbors(&self.0, v, k))
    }

    fn __repr__(&self) -> String {
        format!(
            "Graph(nodes={}, edges={}, classes={})",
            self.0.num_nodes(),
            self.0.num_edges(),
            self.0.num_classes()
        )
    }
}

fn config(overrides: Option<HashMap<String, String>>, desk: bool) -> PyResult<TrainConfig> {
    let mut cfg = if desk { TrainConfig::desk() } else { TrainConfig::default() };
    let mut keys: Vec<(String, String)> = overrides.unwrap_or_default().into_iter().collect();
    keys.sort();
    for (k, v) in keys {
        cfg.set(&k, &v).map_err(|m| PyValueError::new_err(format!("{k}: {m}")))?;
    }
    cfg.validate().map_err(err)?;
    Ok(cfg)
}

/// A trained encoder plus the config it was trained with.
#[pyclass(name = "Model", frozen)]
struct PyModel {
    checkpoint: Checkpoint,
    cfg: TrainConfig,
    #[pyo3(get)]
    losses: Vec<f64>,
    #[pyo3(get)]
    best_epoch: usize,
    #[pyo3(get)]
    test_accuracy: Option<f64>,
}

#[pymethods]
impl PyModel {
    #[staticmethod]
    #[pyo3(signature = (path, config=None, desk=true))]
    fn load(path: &str, config: Option<HashMap<String, String>>, desk: bool) -> PyResult<Self> {
        let checkpoint = Checkpoint::load(path).map_err(err)?;
        Ok(Self {
            checkpoint,
            cfg: self::config(config, desk)?,
            losses: vec![],
            best_epoch: 0,
            test_accuracy: None,
        })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        self.checkpoint.save(path).map_err(err)
    }

    #[getter]
    fn config_hash(&self) -> String {
        self.cfg.hash()
    }

    fn embed(&self, graph: &PyGraph) -> PyResult<Vec<Vec<f64>>> {
        if self.checkpoint.dims().input != graph.0.feature_dim() {
            return Err(PyValueError::new_err("feature dimension does not match the model"));
        }
        final_embeddings(&self.checkpoint.params, &graph.0, &self.cfg)
            .map(|m| rows(&m))
            .map_err(err)
    }
}

/// Trains an encoder. `config` maps config keys to string values.
#[pyfunction]
#[pyo3(signature = (graph, config=None, desk=true))]
fn train(py: Python<'_>, graph: &PyGraph, config: Option<HashMap<String, String>>, desk: bool) -> PyResult<PyModel> {
    let cfg = self::config(config, desk)?;
    let (checkpoint, report) = py.detach(|| core_train(&graph.0, &cfg)).map_err(err)?;
    Ok(PyModel {
        checkpoint,
        losses: report.loss_trace(),
        best_epoch: report.best_epoch,
        test_accuracy: report.probe.map(|p| p.mean),
        cfg,
    })
}

/// Linear-probe accuracy: `(mean, std, per-run test accuracies)`.
#[pyfunction]
#[pyo3(signature = (embeddings, graph, runs=10, seed=0))]
fn evaluate(embeddings: Vec<Vec<f64>>, graph: &PyGraph, runs: usize, seed: u64) -> PyResult<(f64, f64, Vec<f64>)> {
    let emb = matrix(&embeddings)?;
    let cfg = TrainConfig::default().probe();
    let s = linear_evaluate(emb.view(), graph.0.labels(), graph.0.splits(), runs, seed, &cfg).map_err(err)?;
    Ok((s.mean, s.std, s.runs.iter().map(|r| r.test_acc).collect()))
}

/// Median-bandwidth Gaussian kernel over the given rows.
#[pyfunction]
#[pyo3(signature = (embeddings, bandwidth=None))]
fn kernel(embeddings: Vec<Vec<f64>>, bandwidth: Option<f64>) -> PyResult<Vec<Vec<f64>>> {
    let x = matrix(&embeddings)?;
    let bw = bandwidth.map_or(Bandwidth::Median, Bandwidth::Fixed);
    let k = build_kernel(x.view(), (0..x.nrows()).collect(), bw).map_err(err)?;
    Ok(rows(k.matrix()))
}

/// Exact k-DPP draw of `m` row indices (sorted). `greedy` uses MAP instead.
#[pyfunction]
#[pyo3(signature = (embeddings, m, seed=0, greedy=false))]
fn dpp_select(embeddings: Vec<Vec<f64>>, m: usize, seed: u64, greedy: bool) -> PyResult<Vec<usize>> {
    let x = matrix(&embeddings)?;
    let k = build_kernel(x.view(), (0..x.nrows()).collect(), Bandwidth::Median).map_err(err)?;
    if greedy {
        greedy_map(&k, m).map_err(err)
    } else {
        sample_kdpp(&k, m, &mut stream(seed, Phase::Demo, 0, 0)).map_err(err)
    }
}

/// Weighted contrastive loss for one anchor: `(loss, weights, grad_hq)`.
#[pyfunction]
#[pyo3(signature = (h_q, h_k, negatives, tau=1.0, tau_w=1.0, use_weights=true))]
fn contrastive_loss(
    h_q: Vec<f64>,
    h_k: Vec<f64>,
    negatives: Vec<Vec<f64>>,
    tau: f64,
    tau_w: f64,
    use_weights: bool,
) -> PyResult<(f64, Vec<f64>, Vec<f64>)> {
    let (q, k) = (Array1::from(h_q), Array1::from(h_k));
    let negs: Vec<Array1<f64>> = negatives.into_iter().map(Array1::from).collect();
    let views: Vec<_> = negs.iter().map(|n| n.view()).collect();
    let t = weighted_loss(q.view(), k.view(), &views, tau, tau_w, use_weights).map_err(err)?;
    Ok((t.loss, t.weights, t.grad_hq.to_vec()))
}

#[pymodule]
fn nodecon_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyGraph>()?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(kernel, m)?)?;
    m.add_function(wrap_pyfunction!(dpp_select, m)?)?;
    m.add_function(wrap_pyfunction!(contrastive_loss, m)?)?;
    Ok(())
}
