//! Repeated expansion experiments comparing optimized and evolved designs.
//!
//! Every repetition draws its own location pool and node sequence from
//! dedicated random streams, so optimized and evolved designs always see the
//! same node sets and results depend only on the configuration and master seed.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{
    confidence_interval_90, first_crossing, inverse_sqrt_fit, mann_kendall, power_law_fit, rho_curve_fit,
    AnalysisError, FitResult, Series, Trend,
};
use crate::expansion::{self, added_for_factor, ExpansionError, ExpansionModel};
use crate::geometry::{
    account_modification, CostLedger, Inventory, LedgerEntry, LedgerViolation, LocationPool,
    Network, NodeId, Point, Region,
};
use crate::io::{self, IoError};
use crate::mesh::{
    complete_graph_violation, evo_design, opt_design, DesignParams, InventoryPolicy, MeshError,
};
use crate::metrics::{metrics_record, MetricsError, MetricsRecord, RecordInput};
use crate::ring::{insert_node, insert_nodes_greedy, tsp_heuristic, Ring, RingError};
use crate::rng::{self, Component, StreamRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Topology {
    Ring,
    Mesh,
}

impl fmt::Display for Topology {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Topology::Ring => "ring",
            Topology::Mesh => "mesh",
        })
    }
}

impl FromStr for Topology {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ring" => Ok(Topology::Ring),
            "mesh" => Ok(Topology::Mesh),
            other => Err(format!("unknown topology `{other}`")),
        }
    }
}

/// Policy label written for ring rows: removed ring links are never reused.
pub const RING_POLICY: &str = "leasing";

/// The default expansion-factor grid, 1.0 to 4.0 in steps of 0.25.
pub fn default_rho_grid() -> Vec<f64> {
    (0..=12).map(|i| 1.0 + 0.25 * i as f64).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub topology: Topology,
    pub model: ExpansionModel,
    pub initial_size: usize,
    /// Final size of single-node experiments.
    pub max_size: usize,
    /// Size before the multi-node step; defaults to 50 for rings and 15 for meshes.
    pub base_size: Option<usize>,
    pub rho_grid: Vec<f64>,
    pub region: Region,
    pub pool_size: usize,
    /// Delay bound as a multiple of the region diagonal.
    pub delay_factor: f64,
    pub p_add: f64,
    pub p_del: f64,
    pub stall_window: usize,
    pub max_iterations: usize,
    pub tsp_budget: usize,
    pub policy: InventoryPolicy,
    pub repetitions: usize,
    pub seed: u64,
    /// Betweenness, delay, link-length and skewness columns; defaults to on for meshes only.
    pub robustness_metrics: Option<bool>,
    /// Network sizes at which both designs are kept in the result.
    pub snapshot_sizes: Vec<usize>,
    pub output_dir: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            topology: Topology::Mesh,
            model: ExpansionModel::Random,
            initial_size: 3,
            max_size: 60,
            base_size: None,
            rho_grid: default_rho_grid(),
            region: Region::default(),
            pool_size: 500,
            delay_factor: DesignParams::DELAY_FACTOR,
            p_add: 0.9,
            p_del: 0.9,
            stall_window: 10,
            max_iterations: 500,
            tsp_budget: 8,
            policy: InventoryPolicy::Inventory,
            repetitions: 20,
            seed: 1,
            robustness_metrics: None,
            snapshot_sizes: Vec::new(),
            output_dir: None,
        }
    }
}

impl ExperimentConfig {
    pub fn ring(model: ExpansionModel) -> Self {
        Self {
            topology: Topology::Ring,
            model,
            ..Self::default()
        }
    }

    pub fn mesh(model: ExpansionModel) -> Self {
        Self {
            topology: Topology::Mesh,
            model,
            ..Self::default()
        }
    }

    pub fn design_params(&self) -> DesignParams {
        DesignParams {
            delay_bound: self.delay_factor * self.region.diagonal(),
            p_add: self.p_add,
            p_del: self.p_del,
            stall_window: self.stall_window,
            max_iterations: self.max_iterations,
            tsp_budget: self.tsp_budget,
        }
    }

    pub fn base(&self) -> usize {
        self.base_size.unwrap_or(match self.topology {
            Topology::Ring => 50,
            Topology::Mesh => 15,
        })
    }

    fn robustness(&self) -> bool {
        self.robustness_metrics.unwrap_or(self.topology == Topology::Mesh)
    }

    fn max_added(&self) -> usize {
        self.rho_grid
            .iter()
            .map(|&r| added_for_factor(self.base(), r))
            .max()
            .unwrap_or(0)
    }

    pub fn validate(&self, kind: ExperimentKind) -> Result<(), ExperimentError> {
        let bad = |m: String| Err(ExperimentError::Config(m));
        Region::new(self.region.width, self.region.height).map_err(|e| ExperimentError::Config(e.to_string()))?;
        self.design_params().validate().map_err(|e| ExperimentError::Config(e.to_string()))?;
        if self.repetitions == 0 {
            return bad("repetitions must be at least 1".into());
        }
        if self.initial_size < 3 {
            return bad(format!("initial size must be at least 3, got {}", self.initial_size));
        }
        let needed = match kind {
            ExperimentKind::SingleNode | ExperimentKind::Policies => {
                if self.max_size <= self.initial_size {
                    return bad(format!(
                        "max size {} must exceed the initial size {}",
                        self.max_size, self.initial_size
                    ));
                }
                self.max_size
            }
            ExperimentKind::MultiNode => {
                if self.rho_grid.is_empty() {
                    return bad("expansion-factor grid is empty".into());
                }
                if let Some(r) = self.rho_grid.iter().find(|r| !(**r >= 1.0 && r.is_finite())) {
                    return bad(format!("expansion factors must be at least 1, got {r}"));
                }
                if self.rho_grid.windows(2).any(|w| w[1] <= w[0]) {
                    return bad("expansion-factor grid must be increasing".into());
                }
                if self.base() < self.initial_size {
                    return bad(format!("base size {} is below the initial size", self.base()));
                }
                self.base() + self.max_added()
            }
        };
        if kind == ExperimentKind::Policies && self.topology != Topology::Mesh {
            return bad("policy comparison needs the mesh topology".into());
        }
        if needed > self.pool_size {
            return bad(format!("experiment needs {needed} locations but the pool has {}", self.pool_size));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    SingleNode,
    MultiNode,
    Policies,
}

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("run {run}, environment {k}: {source}")]
    Design {
        run: usize,
        k: usize,
        #[source]
        source: MeshError,
    },
    #[error("run {run}: {source}")]
    Expansion {
        run: usize,
        #[source]
        source: ExpansionError,
    },
    #[error("run {run}: {source}")]
    Ring {
        run: usize,
        #[source]
        source: RingError,
    },
    #[error("run {run}: {source}")]
    Metrics {
        run: usize,
        #[source]
        source: MetricsError,
    },
    #[error("run {run}, policy {policy}: {source}")]
    Ledger {
        run: usize,
        policy: String,
        #[source]
        source: LedgerViolation,
    },
    #[error(transparent)]
    Io(#[from] IoError),
}

impl ExperimentError {
    pub fn is_no_acceptable_network(&self) -> bool {
        matches!(
            self,
            ExperimentError::Design {
                source: MeshError::NoAcceptableNetwork { .. },
                ..
            }
        )
    }
}

/// Mean and 90% interval of one metric at one environment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub model: ExpansionModel,
    pub policy: String,
    pub k: usize,
    pub n: usize,
    pub metric: String,
    pub count: usize,
    pub mean: f64,
    /// Empty with fewer than two samples.
    pub half_width: Option<f64>,
}

/// Both designs of one repetition at one network size.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub run: usize,
    pub k: usize,
    pub policy: String,
    pub opt: Network,
    pub evo: Network,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub kind: ExperimentKind,
    pub version: String,
    pub master_seed: u64,
    pub repetitions: usize,
    pub environments: usize,
    pub rows: usize,
    pub ledgers_verified: usize,
    /// Random locations skipped because no acceptable mesh could include them.
    pub redrawn_locations: usize,
    pub critical_rho: Option<f64>,
    pub config: ExperimentConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub rows: Vec<MetricsRecord>,
    pub aggregates: Vec<AggregateRow>,
    pub snapshots: Vec<Snapshot>,
    /// First expansion factor at which mean evolvability reaches zero (multi-node only).
    pub critical_rho: Option<f64>,
    pub provenance: Provenance,
}

impl ExperimentResult {
    pub fn csv(&self) -> Result<String, IoError> {
        let mut buf = Vec::new();
        io::write_records(&mut buf, &self.rows)?;
        Ok(String::from_utf8(buf).expect("csv is utf-8"))
    }

    pub fn aggregates_csv(&self) -> Result<String, IoError> {
        let mut buf = Vec::new();
        io::write_rows(&mut buf, &self.aggregates)?;
        Ok(String::from_utf8(buf).expect("csv is utf-8"))
    }

    /// Writes `<stem>.csv`, `<stem>_aggregates.csv` and `<stem>_provenance.json`.
    pub fn write(&self, dir: &Path, stem: &str) -> Result<Vec<PathBuf>, IoError> {
        fs::create_dir_all(dir)?;
        let files = [
            (dir.join(format!("{stem}.csv")), self.csv()?),
            (dir.join(format!("{stem}_aggregates.csv")), self.aggregates_csv()?),
            (
                dir.join(format!("{stem}_provenance.json")),
                serde_json::to_string_pretty(&self.provenance).expect("plain data serializes"),
            ),
        ];
        let mut out = Vec::new();
        for (path, text) in files {
            fs::write(&path, text)?;
            out.push(path);
        }
        Ok(out)
    }

    /// Rows of one expansion model and policy.
    pub fn select<'a>(&'a self, policy: &'a str) -> impl Iterator<Item = &'a MetricsRecord> + 'a {
        self.rows.iter().filter(move |r| r.policy == policy)
    }
}

/// Per-repetition output.
#[derive(Default)]
struct RepOutput {
    rows: Vec<MetricsRecord>,
    snapshots: Vec<Snapshot>,
    redraws: usize,
    ledgers: usize,
}

struct Streams {
    expansion: StreamRng,
    opt: StreamRng,
}

fn streams(seed: u64, run: usize) -> Streams {
    Streams {
        expansion: rng::substream(seed, run as u64, Component::Expansion),
        opt: rng::substream(seed, run as u64, Component::Opt),
    }
}

fn pool_for(cfg: &ExperimentConfig, run: usize) -> LocationPool {
    let mut r = rng::substream(cfg.seed, run as u64, Component::Pool);
    LocationPool::uniform(cfg.region, cfg.pool_size, &mut r)
}

fn points(pool: &LocationPool, ids: &[NodeId]) -> Vec<Point> {
    pool.lookup(ids).expect("drawn from the pool")
}

/// Draws locations one by one. For random mesh expansion a candidate that no
/// acceptable network could include (even the complete graph fails the delay
/// bound) is skipped and another one drawn.
struct Drawer<'a> {
    pool: &'a LocationPool,
    model: ExpansionModel,
    delay_bound: Option<f64>,
    current: BTreeSet<NodeId>,
    points: Vec<Point>,
    redraws: usize,
    run: usize,
}

impl<'a> Drawer<'a> {
    fn new(pool: &'a LocationPool, cfg: &ExperimentConfig, run: usize) -> Self {
        let check = cfg.topology == Topology::Mesh && cfg.model == ExpansionModel::Random;
        Self {
            pool,
            model: cfg.model,
            delay_bound: check.then(|| cfg.design_params().delay_bound),
            current: BTreeSet::new(),
            points: Vec::new(),
            redraws: 0,
            run,
        }
    }

    fn err(&self, source: ExpansionError) -> ExperimentError {
        ExperimentError::Expansion { run: self.run, source }
    }

    fn accept(&mut self, ids: &[NodeId]) {
        for &id in ids {
            self.current.insert(id);
            self.points.push(*self.pool.get(id).expect("pool member"));
        }
    }

    fn feasible_with(&self, cand: NodeId, bound: f64) -> bool {
        if self.points.len() < 2 {
            return true;
        }
        let mut pts = self.points.clone();
        pts.push(*self.pool.get(cand).expect("pool member"));
        complete_graph_violation(&pts, bound).is_none()
    }

    /// Draws `count` locations, committing them to the current set.
    fn draw(&mut self, count: usize, rng: &mut StreamRng) -> Result<Vec<NodeId>, ExperimentError> {
        let picked = match (self.model, self.delay_bound) {
            (ExpansionModel::Random, Some(bound)) => {
                let mut excluded = self.current.clone();
                let mut picked = Vec::with_capacity(count);
                while picked.len() < count {
                    let cand = expansion::random_step(self.pool, &excluded, 1, rng).map_err(|e| self.err(e))?[0];
                    excluded.insert(cand);
                    if self.feasible_with(cand, bound) {
                        self.accept(&[cand]);
                        picked.push(cand);
                    } else {
                        self.redraws += 1;
                    }
                }
                return Ok(picked);
            }
            (ExpansionModel::Random, None) => expansion::random_step(self.pool, &self.current, count, rng),
            (ExpansionModel::Gradual, _) => {
                if self.current.is_empty() {
                    let mut first = expansion::random_step(self.pool, &self.current, 1, rng).map_err(|e| self.err(e))?;
                    self.accept(&first);
                    let rest = expansion::gradual_step(self.pool, &self.current, count - 1).map_err(|e| self.err(e))?;
                    self.accept(&rest);
                    first.extend(rest);
                    return Ok(first);
                }
                expansion::gradual_step(self.pool, &self.current, count)
            }
        }
        .map_err(|e| self.err(e))?;
        self.accept(&picked);
        Ok(picked)
    }

    /// Draws without committing; used for nested multi-node draws.
    fn preview(&mut self, count: usize, rng: &mut StreamRng) -> Result<Vec<NodeId>, ExperimentError> {
        let (current, points) = (self.current.clone(), self.points.clone());
        let picked = self.draw(count, rng)?;
        self.current = current;
        self.points = points;
        Ok(picked)
    }

    /// Initial node set: one uniformly random location, the rest by the active model.
    fn initial(&mut self, size: usize, rng: &mut StreamRng) -> Result<Vec<NodeId>, ExperimentError> {
        match self.model {
            ExpansionModel::Gradual => self.draw(size, rng),
            ExpansionModel::Random => self.draw(size, rng),
        }
    }
}

fn design_err(run: usize, k: usize) -> impl Fn(MeshError) -> ExperimentError {
    move |source| ExperimentError::Design { run, k, source }
}

fn metric_err(run: usize) -> impl Fn(MetricsError) -> ExperimentError {
    move |source| ExperimentError::Metrics { run, source }
}

fn ring_err(run: usize) -> impl Fn(RingError) -> ExperimentError {
    move |source| ExperimentError::Ring { run, source }
}

/// Evolution state of one mesh policy trace.
struct MeshTrace {
    policy: InventoryPolicy,
    net: Network,
    inv: Inventory,
    discarded: f64,
    /// Inventory held when the ledger was opened.
    inv_offset: f64,
    ledger: CostLedger,
    rng: StreamRng,
}

impl MeshTrace {
    fn new(start: &Network, policy: InventoryPolicy, cfg: &ExperimentConfig, run: usize) -> Self {
        Self {
            policy,
            net: start.clone(),
            inv: Inventory::new(),
            discarded: 0.0,
            inv_offset: 0.0,
            ledger: CostLedger::new(start.cost()),
            rng: rng::substream(cfg.seed, run as u64, Component::Evo),
        }
    }

    /// Evolves to include `new`; returns the modification cost.
    fn step(&mut self, new: &[Point], params: &DesignParams, c_opt: f64) -> Result<f64, MeshError> {
        let out = evo_design(&self.net, &self.inv, new, params, self.policy, &mut self.rng)?;
        if self.policy != InventoryPolicy::Inventory {
            self.discarded += out.released.value();
        }
        self.net = out.network;
        self.inv = out.inventory;
        self.ledger.push(LedgerEntry {
            c_evo: self.net.cost(),
            c_mod: out.mod_cost,
            c_inv: self.ledger_inventory() - self.inv_offset,
            c_opt,
        });
        Ok(out.mod_cost)
    }

    /// Inventory term of the cost ledger: banked links plus everything given
    /// up so far, which keeps the ledger identities exact under every policy.
    fn ledger_inventory(&self) -> f64 {
        self.inv.value() + self.discarded
    }

    fn verify(&self, run: usize) -> Result<(), ExperimentError> {
        self.ledger.verify().map_err(|source| ExperimentError::Ledger {
            run,
            policy: self.policy.to_string(),
            source,
        })
    }
}

fn mesh_single_rep(
    cfg: &ExperimentConfig,
    run: usize,
    policies: &[InventoryPolicy],
) -> Result<RepOutput, ExperimentError> {
    let params = cfg.design_params();
    let pool = pool_for(cfg, run);
    let mut s = streams(cfg.seed, run);
    let mut drawer = Drawer::new(&pool, cfg, run);
    drawer.initial(cfg.initial_size, &mut s.expansion)?;
    let start = opt_design(&drawer.points, &params, &mut s.opt).map_err(design_err(run, 0))?;
    let mut traces: Vec<MeshTrace> = policies.iter().map(|&p| MeshTrace::new(&start, p, cfg, run)).collect();
    let mut out = RepOutput::default();
    let steps = cfg.max_size - cfg.initial_size;
    for k in 1..=steps {
        let new = drawer.draw(1, &mut s.expansion)?;
        let new_pts = points(&pool, &new);
        let opt = opt_design(&drawer.points, &params, &mut s.opt).map_err(design_err(run, k))?;
        for trace in traces.iter_mut() {
            let c_mod = trace.step(&new_pts, &params, opt.cost()).map_err(design_err(run, k))?;
            let label = trace.policy.to_string();
            out.rows.push(
                metrics_record(RecordInput {
                    run,
                    k,
                    model: cfg.model,
                    policy: &label,
                    opt: &opt,
                    evo: &trace.net,
                    c_mod,
                    c_inv: trace.ledger_inventory(),
                    reusable: trace.inv.value(),
                    robustness: cfg.robustness(),
                })
                .map_err(metric_err(run))?,
            );
            if cfg.snapshot_sizes.contains(&trace.net.node_count()) {
                out.snapshots.push(Snapshot {
                    run,
                    k,
                    policy: label,
                    opt: opt.clone(),
                    evo: trace.net.clone(),
                });
            }
        }
    }
    for trace in &traces {
        trace.verify(run)?;
        out.ledgers += 1;
    }
    out.redraws = drawer.redraws;
    Ok(out)
}

fn ring_network(ring: &Ring) -> Network {
    ring.to_network()
}

fn ring_single_rep(cfg: &ExperimentConfig, run: usize) -> Result<RepOutput, ExperimentError> {
    let pool = pool_for(cfg, run);
    let mut s = streams(cfg.seed, run);
    let mut drawer = Drawer::new(&pool, cfg, run);
    drawer.initial(cfg.initial_size, &mut s.expansion)?;
    let mut evo = tsp_heuristic(&drawer.points, &mut s.opt, cfg.tsp_budget).map_err(ring_err(run))?;
    let mut evo_net = ring_network(&evo);
    let mut ledger = CostLedger::new(evo_net.cost());
    let mut discarded = 0.0;
    let mut out = RepOutput::default();
    for k in 1..=(cfg.max_size - cfg.initial_size) {
        let new = drawer.draw(1, &mut s.expansion)?;
        let z = points(&pool, &new)[0];
        let opt = ring_network(&tsp_heuristic(&drawer.points, &mut s.opt, cfg.tsp_budget).map_err(ring_err(run))?);
        let (next, _) = insert_node(&evo, z).map_err(ring_err(run))?;
        let next_net = ring_network(&next);
        let m = account_modification(&evo_net, &Inventory::new(), &next_net);
        discarded += m.inventory.value();
        evo = next;
        evo_net = next_net;
        ledger.push(LedgerEntry {
            c_evo: evo_net.cost(),
            c_mod: m.cost,
            c_inv: discarded,
            c_opt: opt.cost(),
        });
        out.rows.push(
            metrics_record(RecordInput {
                run,
                k,
                model: cfg.model,
                policy: RING_POLICY,
                opt: &opt,
                evo: &evo_net,
                c_mod: m.cost,
                c_inv: discarded,
                reusable: 0.0,
                robustness: cfg.robustness(),
            })
            .map_err(metric_err(run))?,
        );
        if cfg.snapshot_sizes.contains(&evo_net.node_count()) {
            out.snapshots.push(Snapshot {
                run,
                k,
                policy: RING_POLICY.into(),
                opt,
                evo: evo_net.clone(),
            });
        }
    }
    ledger.verify().map_err(|source| ExperimentError::Ledger {
        run,
        policy: RING_POLICY.into(),
        source,
    })?;
    out.ledgers = 1;
    Ok(out)
}

fn ring_multi_rep(cfg: &ExperimentConfig, run: usize) -> Result<RepOutput, ExperimentError> {
    let pool = pool_for(cfg, run);
    let mut s = streams(cfg.seed, run);
    let mut drawer = Drawer::new(&pool, cfg, run);
    drawer.initial(cfg.base(), &mut s.expansion)?;
    let base_pts = drawer.points.clone();
    let base = tsp_heuristic(&base_pts, &mut s.opt, cfg.tsp_budget).map_err(ring_err(run))?;
    let base_net = ring_network(&base);
    let added = drawer.preview(cfg.max_added(), &mut s.expansion)?;
    let added_pts = points(&pool, &added);
    let mut out = RepOutput::default();
    for (k, &rho) in cfg.rho_grid.iter().enumerate() {
        let m = added_for_factor(cfg.base(), rho);
        // the modification cost is the total purchased over the greedy
        // insertions, so links bought and later split again count as discarded
        let (opt, evo, c_mod) = if m == 0 {
            (base_net.clone(), base_net.clone(), 0.0)
        } else {
            let mut all = base_pts.clone();
            all.extend_from_slice(&added_pts[..m]);
            let opt = tsp_heuristic(&all, &mut s.opt, cfg.tsp_budget).map_err(ring_err(run))?;
            let (evo, c_mod) = insert_nodes_greedy(&base, &added_pts[..m]).map_err(ring_err(run))?;
            (ring_network(&opt), ring_network(&evo), c_mod)
        };
        let c_inv = (base_net.cost() + c_mod - evo.cost()).max(0.0);
        out.rows.push(
            metrics_record(RecordInput {
                run,
                k,
                model: cfg.model,
                policy: RING_POLICY,
                opt: &opt,
                evo: &evo,
                c_mod,
                c_inv,
                reusable: 0.0,
                robustness: cfg.robustness(),
            })
            .map_err(metric_err(run))?,
        );
        let mut ledger = CostLedger::new(base_net.cost());
        ledger.push(LedgerEntry {
            c_evo: evo.cost(),
            c_mod,
            c_inv,
            c_opt: opt.cost(),
        });
        ledger.verify().map_err(|source| ExperimentError::Ledger {
            run,
            policy: RING_POLICY.into(),
            source,
        })?;
        out.ledgers += 1;
    }
    Ok(out)
}

fn mesh_multi_rep(cfg: &ExperimentConfig, run: usize) -> Result<RepOutput, ExperimentError> {
    let params = cfg.design_params();
    let pool = pool_for(cfg, run);
    let mut s = streams(cfg.seed, run);
    let mut drawer = Drawer::new(&pool, cfg, run);
    drawer.initial(cfg.initial_size, &mut s.expansion)?;
    let start = opt_design(&drawer.points, &params, &mut s.opt).map_err(design_err(run, 0))?;
    let mut base = MeshTrace::new(&start, cfg.policy, cfg, run);
    while drawer.points.len() < cfg.base() {
        let new = drawer.draw(1, &mut s.expansion)?;
        base.step(&points(&pool, &new), &params, f64::NAN)
            .map_err(design_err(run, 0))?;
    }
    base.verify(run)?;
    let base_pts = drawer.points.clone();
    let added = drawer.preview(cfg.max_added(), &mut s.expansion)?;
    let added_pts = points(&pool, &added);
    let mut out = RepOutput::default();
    for (k, &rho) in cfg.rho_grid.iter().enumerate() {
        let m = added_for_factor(cfg.base(), rho);
        let mut all = base_pts.clone();
        all.extend_from_slice(&added_pts[..m]);
        let opt = opt_design(&all, &params, &mut s.opt).map_err(design_err(run, k))?;
        let mut trace = MeshTrace {
            policy: base.policy,
            net: base.net.clone(),
            inv: base.inv.clone(),
            discarded: 0.0,
            inv_offset: base.inv.value(),
            ledger: CostLedger::new(base.net.cost()),
            rng: base.rng.clone(),
        };
        let c_mod = if m == 0 {
            // nothing to add, the evolved network stays as it is
            trace.ledger.push(LedgerEntry {
                c_evo: trace.net.cost(),
                c_mod: 0.0,
                c_inv: 0.0,
                c_opt: opt.cost(),
            });
            0.0
        } else {
            trace.step(&added_pts[..m], &params, opt.cost()).map_err(design_err(run, k))?
        };
        trace.verify(run)?;
        out.ledgers += 1;
        out.rows.push(
            metrics_record(RecordInput {
                run,
                k,
                model: cfg.model,
                policy: &cfg.policy.to_string(),
                opt: &opt,
                evo: &trace.net,
                c_mod,
                c_inv: trace.ledger_inventory(),
                reusable: trace.inv.value(),
                robustness: cfg.robustness(),
            })
            .map_err(metric_err(run))?,
        );
    }
    out.redraws = drawer.redraws;
    Ok(out)
}

const BASE_METRICS: [&str; 8] = ["c_opt", "c_evo", "c_mod", "c_inv", "v", "e", "r", "t"];

/// Looks up a numeric results column by name; `None` for empty or unknown columns.
pub fn metric_value(r: &MetricsRecord, name: &str) -> Option<f64> {
    match name {
        "c_opt" => Some(r.c_opt),
        "c_evo" => Some(r.c_evo),
        "c_mod" => Some(r.c_mod),
        "c_inv" => Some(r.c_inv),
        "v" => Some(r.v),
        "e" => Some(r.e),
        "r" => Some(r.r),
        "t" => Some(r.t),
        "mean_bc_opt" => r.mean_bc_opt,
        "mean_bc_evo" => r.mean_bc_evo,
        "delay_ratio" => r.delay_ratio,
        "avg_len_opt" => r.avg_len_opt,
        "avg_len_evo" => r.avg_len_evo,
        "skew_opt" => r.skew_opt,
        "skew_evo" => r.skew_evo,
        _ => None,
    }
}

/// Per-environment means and 90% intervals, grouped by policy then environment.
pub fn aggregate(rows: &[MetricsRecord]) -> Vec<AggregateRow> {
    let mut groups: BTreeMap<(String, usize), Vec<&MetricsRecord>> = BTreeMap::new();
    for r in rows {
        groups.entry((r.policy.clone(), r.k)).or_default().push(r);
    }
    let names = MetricsRecord::COLUMNS[5..].iter().copied().filter(|c| {
        BASE_METRICS.contains(c) || rows.iter().all(|r| metric_value(r, c).is_some())
    });
    let names: Vec<&str> = names.collect();
    let mut out = Vec::new();
    for ((policy, k), group) in groups {
        for &metric in &names {
            let values: Vec<f64> = group.iter().filter_map(|r| metric_value(r, metric)).collect();
            if values.is_empty() {
                continue;
            }
            let half_width = confidence_interval_90(&values).ok().map(|ci| ci.half_width);
            out.push(AggregateRow {
                model: group[0].model,
                policy: policy.clone(),
                k,
                n: group[0].n,
                metric: metric.to_string(),
                count: values.len(),
                mean: crate::analysis::mean(&values),
                half_width,
            });
        }
    }
    out
}

/// Mean of `metric` per network size over the given rows, in increasing size order.
pub fn mean_by_size<'a>(rows: impl IntoIterator<Item = &'a MetricsRecord>, metric: &str) -> (Vec<f64>, Vec<f64>) {
    let mut acc: BTreeMap<usize, (f64, usize)> = BTreeMap::new();
    for r in rows {
        if let Some(v) = metric_value(r, metric) {
            let e = acc.entry(r.n).or_default();
            e.0 += v;
            e.1 += 1;
        }
    }
    acc.into_iter().map(|(n, (sum, c))| (n as f64, sum / c as f64)).unzip()
}

/// One fit or trend test over a results file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisRow {
    pub model: ExpansionModel,
    pub policy: String,
    pub metric: String,
    pub test: String,
    /// Fit coefficients separated by `;`.
    pub coefficients: String,
    pub r_squared: Option<f64>,
    pub p_value: Option<f64>,
    pub trend: Option<Trend>,
}

/// Scaling fits and trend tests for every model/policy group of a results file.
///
/// Single-node results (one row per size) get a power-law fit of the optimized
/// cost, an inverse-square-root fit of the modification cost and Mann-Kendall
/// tests on the mean metric series. Multi-node results (several environments
/// sharing `k = 0` as the unexpanded base) are fitted against the expansion
/// factor instead and report the critical factor when evolvability hits zero.
pub fn analyze(rows: &[MetricsRecord]) -> Vec<AnalysisRow> {
    let mut groups: BTreeMap<(String, String), Vec<&MetricsRecord>> = BTreeMap::new();
    for r in rows {
        groups.entry((r.model.to_string(), r.policy.clone())).or_default().push(r);
    }
    let mut out = Vec::new();
    for group in groups.values() {
        let (model, policy) = (group[0].model, group[0].policy.clone());
        let row = |metric: &str, test: &str| AnalysisRow {
            model,
            policy: policy.clone(),
            metric: metric.to_string(),
            test: test.to_string(),
            coefficients: String::new(),
            r_squared: None,
            p_value: None,
            trend: None,
        };
        let fitted = |metric: &str, fit: Result<FitResult, AnalysisError>| {
            fit.ok().map(|f| AnalysisRow {
                coefficients: f.coefficients.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(";"),
                r_squared: Some(f.r_squared),
                ..row(metric, &f.kind.to_string())
            })
        };
        let base_n = group.iter().filter(|r| r.k == 0).map(|r| r.n).min();
        let multi = base_n.is_some();
        if let Some(base_n) = base_n {
            for metric in ["e", "v"] {
                let (n, y) = mean_by_size(group.iter().copied(), metric);
                let rho: Vec<f64> = n.iter().map(|n| n / base_n as f64).collect();
                if let Ok(s) = Series::new(rho.clone(), y.clone()) {
                    out.extend(fitted(metric, rho_curve_fit(&s, model)));
                }
                if metric == "e" {
                    if let Some(c) = first_crossing(&rho, &y, 0.0) {
                        out.push(AnalysisRow {
                            coefficients: c.to_string(),
                            ..row(metric, "critical-rho")
                        });
                    }
                }
            }
        } else {
            let (n, c_opt) = mean_by_size(group.iter().copied(), "c_opt");
            if let Ok(s) = Series::new(n.clone(), c_opt) {
                out.extend(fitted("c_opt", power_law_fit(&s)));
            }
            let (n2, c_mod) = mean_by_size(group.iter().copied(), "c_mod");
            if let Ok(s) = Series::new(n2, c_mod) {
                out.extend(fitted("c_mod", inverse_sqrt_fit(&s)));
            }
        }
        if !multi {
            for metric in ["c_mod", "v", "e", "r", "t"] {
                let (_, y) = mean_by_size(group.iter().copied(), metric);
                if let Ok(mk) = mann_kendall(&y) {
                    out.push(AnalysisRow {
                        p_value: Some(mk.p_value),
                        trend: Some(mk.trend),
                        ..row(metric, "mann-kendall")
                    });
                }
            }
        }
    }
    out
}

/// Mean evolvability per grid point and its first zero crossing.
fn critical_rho(cfg: &ExperimentConfig, rows: &[MetricsRecord]) -> Option<f64> {
    let mean_e: Vec<f64> = (0..cfg.rho_grid.len())
        .map(|k| {
            let v: Vec<f64> = rows.iter().filter(|r| r.k == k).map(|r| r.e).collect();
            crate::analysis::mean(&v)
        })
        .collect();
    first_crossing(&cfg.rho_grid, &mean_e, 0.0)
}

fn run_reps(
    cfg: &ExperimentConfig,
    kind: ExperimentKind,
    rep: impl Fn(usize) -> Result<RepOutput, ExperimentError> + Sync + Send,
) -> Result<ExperimentResult, ExperimentError> {
    cfg.validate(kind)?;
    let outputs: Vec<RepOutput> = (0..cfg.repetitions)
        .into_par_iter()
        .map(rep)
        .collect::<Result<_, _>>()?;
    let mut rows = Vec::new();
    let mut snapshots = Vec::new();
    let (mut redraws, mut ledgers) = (0, 0);
    for o in outputs {
        rows.extend(o.rows);
        snapshots.extend(o.snapshots);
        redraws += o.redraws;
        ledgers += o.ledgers;
    }
    let critical = (kind == ExperimentKind::MultiNode)
        .then(|| critical_rho(cfg, &rows))
        .flatten();
    let environments = match kind {
        ExperimentKind::MultiNode => cfg.rho_grid.len(),
        _ => cfg.max_size - cfg.initial_size,
    };
    let provenance = Provenance {
        kind,
        version: env!("CARGO_PKG_VERSION").to_string(),
        master_seed: cfg.seed,
        repetitions: cfg.repetitions,
        environments,
        rows: rows.len(),
        ledgers_verified: ledgers,
        redrawn_locations: redraws,
        critical_rho: critical,
        config: cfg.clone(),
    };
    Ok(ExperimentResult {
        aggregates: aggregate(&rows),
        rows,
        snapshots,
        critical_rho: critical,
        provenance,
    })
}

/// Grows the network one node at a time from the initial size to `max_size`,
/// designing optimized and evolved networks at every environment.
pub fn run_single_node_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult, ExperimentError> {
    match cfg.topology {
        Topology::Ring => run_reps(cfg, ExperimentKind::SingleNode, |run| ring_single_rep(cfg, run)),
        Topology::Mesh => run_reps(cfg, ExperimentKind::SingleNode, |run| {
            mesh_single_rep(cfg, run, &[cfg.policy])
        }),
    }
}

/// One multi-node step from the base size for every expansion factor of the
/// grid. Larger factors add a superset of the locations added by smaller ones.
pub fn run_multi_node_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult, ExperimentError> {
    match cfg.topology {
        Topology::Ring => run_reps(cfg, ExperimentKind::MultiNode, |run| ring_multi_rep(cfg, run)),
        Topology::Mesh => run_reps(cfg, ExperimentKind::MultiNode, |run| mesh_multi_rep(cfg, run)),
    }
}

/// Single-node mesh growth with one shared optimized design per environment
/// and three evolved traces, one per inventory policy, driven by identical
/// random streams.
pub fn run_policy_comparison(cfg: &ExperimentConfig) -> Result<ExperimentResult, ExperimentError> {
    run_reps(cfg, ExperimentKind::Policies, |run| {
        mesh_single_rep(cfg, run, &InventoryPolicy::ALL)
    })
}
