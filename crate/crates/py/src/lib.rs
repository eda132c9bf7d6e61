//! Python bindings for the `netevo` simulator.
//!
//! Points cross the boundary as `(id, x, y)` tuples and links as `(a, b)` id
//! pairs. Experiment configs and provenance travel as JSON strings so the
//! Python side sees exactly what the CLI reads and writes.

use std::collections::BTreeMap;

use netevo::analysis::{self, Series};
use netevo::experiment::{
    run_multi_node_experiment, run_policy_comparison, run_single_node_experiment, ExperimentConfig,
    ExperimentError, ExperimentKind,
};
use netevo::geometry::{GeometryError, Inventory, Link, LocationPool, Network, NodeId, Point, Region};
use netevo::io;
use netevo::mesh::{self, DesignParams, InventoryPolicy, MeshError};
use netevo::metrics;
use netevo::ring::{insert_nodes_greedy, tsp_heuristic, Ring};
use netevo::rng;
use pyo3::create_exception;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

create_exception!(netevo_py, NoAcceptableNetworkError, PyRuntimeError);

type PyPoint = (NodeId, f64, f64);
type PyLink = (NodeId, NodeId);

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn mesh_err(e: MeshError) -> PyErr {
    match e {
        MeshError::NoAcceptableNetwork { .. } => NoAcceptableNetworkError::new_err(e.to_string()),
        other => value_err(other),
    }
}

fn experiment_err(e: ExperimentError) -> PyErr {
    if e.is_no_acceptable_network() {
        NoAcceptableNetworkError::new_err(e.to_string())
    } else {
        PyRuntimeError::new_err(e.to_string())
    }
}

fn points(raw: Vec<PyPoint>) -> Vec<Point> {
    raw.into_iter().map(|(id, x, y)| Point::new(id, x, y)).collect()
}

/// Undirected network with Euclidean link lengths.
#[pyclass(name = "Network", module = "netevo_py", frozen)]
struct PyNetwork {
    inner: Network,
}

#[pymethods]
impl PyNetwork {
    #[new]
    #[pyo3(signature = (nodes, links = Vec::new()))]
    fn new(nodes: Vec<PyPoint>, links: Vec<(NodeId, NodeId)>) -> PyResult<Self> {
        let mut inner = Network::with_nodes(points(nodes)).map_err(value_err)?;
        for (a, b) in links {
            inner.add_link(a, b).map_err(value_err)?;
        }
        Ok(Self { inner })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let (inner, _) = io::parse_network(text).map_err(value_err)?;
        Ok(Self { inner })
    }

    fn to_json(&self) -> String {
        io::network_to_json(&self.inner, Default::default())
    }

    #[getter]
    fn cost(&self) -> f64 {
        self.inner.cost()
    }

    #[getter]
    fn node_count(&self) -> usize {
        self.inner.node_count()
    }

    #[getter]
    fn link_count(&self) -> usize {
        self.inner.link_count()
    }

    fn nodes(&self) -> Vec<PyPoint> {
        self.inner.nodes().map(|p| (p.id, p.x, p.y)).collect()
    }

    fn links(&self) -> Vec<(NodeId, NodeId)> {
        self.inner.link_keys().into_iter().map(|k| (k.0, k.1)).collect()
    }

    fn degree(&self, id: NodeId) -> usize {
        self.inner.degree(id)
    }

    fn is_acceptable(&self, delay_bound: f64) -> bool {
        mesh::check_acceptable(&self.inner, delay_bound).acceptable
    }

    fn __repr__(&self) -> String {
        format!(
            "Network(nodes={}, links={}, cost={:.3})",
            self.inner.node_count(),
            self.inner.link_count(),
            self.inner.cost()
        )
    }
}

fn wrap(inner: Network) -> PyNetwork {
    PyNetwork { inner }
}

/// Uniform locations in a `width x height` region, numbered from `first_id`.
#[pyfunction]
#[pyo3(signature = (size, width = 3000.0, height = 1500.0, seed = 1, first_id = 0))]
fn gen_pool(size: usize, width: f64, height: f64, seed: u64, first_id: NodeId) -> PyResult<Vec<PyPoint>> {
    let region = Region::new(width, height).map_err(value_err)?;
    let pool = LocationPool::uniform(region, size, &mut rng::seeded(seed));
    Ok(pool.points().iter().map(|p| (p.id + first_id, p.x, p.y)).collect())
}

/// Heuristic minimum-length ring through `points`.
#[pyfunction]
#[pyo3(signature = (points, seed = 1, budget = 8))]
fn ring_design(points: Vec<PyPoint>, seed: u64, budget: usize) -> PyResult<PyNetwork> {
    let pts = self::points(points);
    let ring = tsp_heuristic(&pts, &mut rng::seeded(seed), budget).map_err(value_err)?;
    Ok(wrap(ring.to_network()))
}

/// Greedy cheapest insertion of `points` into an existing ring. Returns the ring and the purchased length.
#[pyfunction]
fn ring_insert(ring: PyRef<'_, PyNetwork>, points: Vec<PyPoint>) -> PyResult<(PyNetwork, f64)> {
    let base = Ring::from_network(&ring.inner).map_err(value_err)?;
    let (grown, cost) = insert_nodes_greedy(&base, &self::points(points)).map_err(value_err)?;
    Ok((wrap(grown.to_network()), cost))
}

fn design_params(
    delay_bound: f64,
    p_add: f64,
    p_del: f64,
    stall_window: usize,
    max_iterations: usize,
) -> PyResult<DesignParams> {
    let params = DesignParams {
        p_add,
        p_del,
        stall_window,
        max_iterations,
        ..DesignParams::with_delay_bound(delay_bound)
    };
    params.validate().map_err(value_err)?;
    Ok(params)
}

/// Cheapest survivable mesh over `points` whose primary and secondary paths respect `delay_bound`.
#[pyfunction]
#[allow(clippy::too_many_arguments)]
#[pyo3(signature = (points, delay_bound, seed = 1, p_add = 0.9, p_del = 0.9, stall_window = 10, max_iterations = 500))]
fn mesh_design(
    py: Python<'_>,
    points: Vec<PyPoint>,
    delay_bound: f64,
    seed: u64,
    p_add: f64,
    p_del: f64,
    stall_window: usize,
    max_iterations: usize,
) -> PyResult<PyNetwork> {
    let params = design_params(delay_bound, p_add, p_del, stall_window, max_iterations)?;
    let pts = self::points(points);
    py.detach(|| mesh::opt_design(&pts, &params, &mut rng::seeded(seed)))
        .map(wrap)
        .map_err(mesh_err)
}

/// Extend `prev` with `new_points` at minimum modification cost.
///
/// Returns `(network, modification_cost, inventory_links)`.
#[pyfunction]
#[allow(clippy::too_many_arguments)]
#[pyo3(signature = (
    prev, new_points, delay_bound, policy = "inventory", inventory = Vec::new(), seed = 1,
    p_add = 0.9, p_del = 0.9, stall_window = 10, max_iterations = 500
))]
fn mesh_evolve(
    py: Python<'_>,
    prev: PyRef<'_, PyNetwork>,
    new_points: Vec<PyPoint>,
    delay_bound: f64,
    policy: &str,
    inventory: Vec<(NodeId, NodeId)>,
    seed: u64,
    p_add: f64,
    p_del: f64,
    stall_window: usize,
    max_iterations: usize,
) -> PyResult<(PyNetwork, f64, Vec<PyLink>)> {
    let params = design_params(delay_bound, p_add, p_del, stall_window, max_iterations)?;
    let policy: InventoryPolicy = serde_json::from_value(serde_json::Value::from(policy))
        .map_err(|_| value_err(format!("unknown policy `{policy}`")))?;
    let prev = &prev.inner;
    let links = inventory
        .into_iter()
        .map(|(a, b)| {
            let missing = || GeometryError::UnknownEndpoint(a, b);
            let p = prev.node(a).ok_or_else(missing)?;
            let q = prev.node(b).ok_or_else(missing)?;
            Link::between(p, q)
        })
        .collect::<Result<Vec<_>, _>>()
        .map_err(value_err)?;
    let inv = Inventory::from_links(links);
    let pts = self::points(new_points);
    let out = py
        .detach(|| mesh::evo_design(prev, &inv, &pts, &params, policy, &mut rng::seeded(seed)))
        .map_err(mesh_err)?;
    let inv_links = out.inventory.links().map(|l| (l.key.0, l.key.1)).collect();
    Ok((wrap(out.network), out.mod_cost, inv_links))
}

/// Comparison metrics of an optimized/evolved pair at the same node set.
#[pyfunction]
#[pyo3(signature = (opt, evo, c_mod = 0.0, inventory_value = 0.0))]
fn compare(
    opt: PyRef<'_, PyNetwork>,
    evo: PyRef<'_, PyNetwork>,
    c_mod: f64,
    inventory_value: f64,
) -> PyResult<BTreeMap<&'static str, f64>> {
    let (o, e) = (&opt.inner, &evo.inner);
    Ok(BTreeMap::from([
        ("c_opt", o.cost()),
        ("c_evo", e.cost()),
        ("v", metrics::cost_overhead(e.cost(), o.cost()).map_err(value_err)?),
        ("e", metrics::evolvability(c_mod, o.cost()).map_err(value_err)?),
        ("r", metrics::inventory_overhead(inventory_value, e.cost()).map_err(value_err)?),
        ("t", metrics::topological_similarity(o, e).map_err(value_err)?),
    ]))
}

/// Runs a full experiment (`single-node`, `multi-node` or `policies`) from a JSON config.
///
/// Returns the per-repetition CSV and the provenance JSON.
#[pyfunction]
#[pyo3(signature = (kind, config = "{}"))]
fn run_experiment(py: Python<'_>, kind: &str, config: &str) -> PyResult<(String, String)> {
    let kind: ExperimentKind = serde_json::from_value(serde_json::Value::from(kind))
        .map_err(|_| value_err(format!("unknown experiment kind `{kind}`")))?;
    let cfg: ExperimentConfig = serde_json::from_str(config).map_err(value_err)?;
    let res = py
        .detach(|| match kind {
            ExperimentKind::SingleNode => run_single_node_experiment(&cfg),
            ExperimentKind::MultiNode => run_multi_node_experiment(&cfg),
            ExperimentKind::Policies => run_policy_comparison(&cfg),
        })
        .map_err(experiment_err)?;
    let csv = res.csv().map_err(value_err)?;
    let prov = serde_json::to_string_pretty(&res.provenance).map_err(value_err)?;
    Ok((csv, prov))
}

#[pyfunction]
fn mann_kendall<'py>(py: Python<'py>, values: Vec<f64>) -> PyResult<Bound<'py, PyDict>> {
    let mk = analysis::mann_kendall(&values).map_err(value_err)?;
    let d = PyDict::new(py);
    d.set_item("s", mk.s)?;
    d.set_item("z", mk.z)?;
    d.set_item("p_value", mk.p_value)?;
    d.set_item("p_increasing", mk.p_increasing())?;
    d.set_item("p_decreasing", mk.p_decreasing())?;
    d.set_item("trend", mk.trend.to_string())?;
    Ok(d)
}

/// `y = a * x^b` by least squares in log space. Returns `(a, b, r_squared)`.
#[pyfunction]
fn power_law_fit(x: Vec<f64>, y: Vec<f64>) -> PyResult<(f64, f64, f64)> {
    let s = Series::new(x, y).map_err(value_err)?;
    let fit = analysis::power_law_fit(&s).map_err(value_err)?;
    Ok((fit.coefficients[0], fit.coefficients[1], fit.r_squared))
}

#[pymodule]
fn netevo_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("NoAcceptableNetworkError", m.py().get_type::<NoAcceptableNetworkError>())?;
    m.add_class::<PyNetwork>()?;
    m.add_function(wrap_pyfunction!(gen_pool, m)?)?;
    m.add_function(wrap_pyfunction!(ring_design, m)?)?;
    m.add_function(wrap_pyfunction!(ring_insert, m)?)?;
    m.add_function(wrap_pyfunction!(mesh_design, m)?)?;
    m.add_function(wrap_pyfunction!(mesh_evolve, m)?)?;
    m.add_function(wrap_pyfunction!(compare, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(mann_kendall, m)?)?;
    m.add_function(wrap_pyfunction!(power_law_fit, m)?)?;
    Ok(())
}
