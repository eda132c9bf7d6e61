use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use netevo::expansion::ExpansionModel;
use netevo::experiment::{
    analyze, run_multi_node_experiment, run_policy_comparison, run_single_node_experiment, ExperimentConfig,
    ExperimentError, ExperimentResult, Topology,
};
use netevo::geometry::{Inventory, LinkKey, LocationPool, Network, Point, Region};
use netevo::io::{self, IoError, NetworkMeta};
use netevo::mesh::{evo_design, opt_design, DesignParams, InventoryPolicy, MeshError};
use netevo::metrics::{self, MetricsError};
use netevo::ring::{insert_nodes_greedy, tsp_heuristic, Ring, RingError};
use netevo::rng;
use thiserror::Error;

#[derive(Parser)]
#[command(name = "netevo", version, about = "Optimized versus incrementally evolved network topologies under expansion")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a uniform location pool.
    GenPool {
        #[arg(long, default_value_t = 500)]
        size: usize,
        #[arg(long, default_value_t = 3000.0)]
        width: f64,
        #[arg(long, default_value_t = 1500.0)]
        height: f64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Id of the first location; later ones are numbered consecutively.
        #[arg(long, default_value_t = 0)]
        first_id: u32,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Clean-slate design over every location of a pool file.
    DesignOpt {
        #[arg(long)]
        pool: PathBuf,
        #[arg(long, default_value = "mesh")]
        topology: Topology,
        #[command(flatten)]
        design: DesignArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evolve an existing network to include the locations of a pool file.
    DesignEvo {
        /// Previous network (JSON).
        #[arg(long)]
        prev: PathBuf,
        /// Locations to add (pool JSON).
        #[arg(long)]
        add: PathBuf,
        /// Banked links from earlier environments (network JSON).
        #[arg(long)]
        inventory: Option<PathBuf>,
        #[arg(long, default_value = "inventory")]
        policy: InventoryPolicy,
        #[arg(long, default_value = "mesh")]
        topology: Topology,
        #[command(flatten)]
        design: DesignArgs,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Where to write the updated inventory.
        #[arg(long)]
        inventory_out: Option<PathBuf>,
    },
    /// Single-node expansion experiment.
    SingleNode(ExperimentArgs),
    /// Multi-node expansion experiment over the expansion-factor grid.
    MultiNode(ExperimentArgs),
    /// Inventory, ownership and leasing compared on identical mesh expansions.
    Policies(ExperimentArgs),
    /// Metrics of an optimized/evolved network pair.
    Metrics {
        #[arg(long)]
        opt: PathBuf,
        #[arg(long)]
        evo: PathBuf,
        /// Modification cost, needed for evolvability.
        #[arg(long)]
        c_mod: Option<f64>,
        /// Reusable inventory value, needed for inventory overhead.
        #[arg(long)]
        inventory_value: Option<f64>,
    },
    /// Scaling fits and trend tests over a results CSV.
    Analyze {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a pool as a TSPLIB instance.
    ExportTsplib {
        #[arg(long)]
        pool: PathBuf,
        #[arg(long, default_value = "netevo")]
        name: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct DesignArgs {
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Delay bound in distance units; overrides the delay factor.
    #[arg(long)]
    delay_bound: Option<f64>,
    /// Delay bound as a multiple of the region diagonal.
    #[arg(long, default_value_t = DesignParams::DELAY_FACTOR)]
    delay_factor: f64,
    #[arg(long, default_value_t = 0.9)]
    p_add: f64,
    #[arg(long, default_value_t = 0.9)]
    p_del: f64,
    #[arg(long, default_value_t = 10)]
    stall_window: usize,
    #[arg(long, default_value_t = 500)]
    max_iterations: usize,
    #[arg(long, default_value_t = 8)]
    tsp_budget: usize,
    /// Append the violation of a failed design to this JSON-lines file.
    #[arg(long)]
    violations: Option<PathBuf>,
}

impl DesignArgs {
    fn params(&self, region: &Region) -> DesignParams {
        DesignParams {
            delay_bound: self.delay_bound.unwrap_or(self.delay_factor * region.diagonal()),
            p_add: self.p_add,
            p_del: self.p_del,
            stall_window: self.stall_window,
            max_iterations: self.max_iterations,
            tsp_budget: self.tsp_budget,
        }
    }
}

#[derive(Args)]
struct ExperimentArgs {
    /// JSON configuration; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    topology: Option<Topology>,
    #[arg(long)]
    model: Option<ExpansionModel>,
    #[arg(long)]
    initial_size: Option<usize>,
    #[arg(long)]
    max_size: Option<usize>,
    #[arg(long)]
    base_size: Option<usize>,
    /// Comma-separated expansion factors.
    #[arg(long, value_delimiter = ',')]
    rho_grid: Option<Vec<f64>>,
    #[arg(long)]
    width: Option<f64>,
    #[arg(long)]
    height: Option<f64>,
    #[arg(long)]
    pool_size: Option<usize>,
    #[arg(long)]
    delay_factor: Option<f64>,
    #[arg(long)]
    p_add: Option<f64>,
    #[arg(long)]
    p_del: Option<f64>,
    #[arg(long)]
    stall_window: Option<usize>,
    #[arg(long)]
    max_iterations: Option<usize>,
    #[arg(long)]
    tsp_budget: Option<usize>,
    #[arg(long)]
    policy: Option<InventoryPolicy>,
    #[arg(long)]
    repetitions: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    robustness_metrics: Option<bool>,
    /// Comma-separated network sizes whose designs are saved.
    #[arg(long, value_delimiter = ',')]
    snapshot_sizes: Option<Vec<usize>>,
    /// Output directory.
    #[arg(long, env = "NETEVO_OUT")]
    out: Option<PathBuf>,
    /// File name stem of the result files.
    #[arg(long)]
    stem: Option<String>,
    /// Worker threads; all cores when omitted.
    #[arg(long)]
    threads: Option<usize>,
}

macro_rules! apply {
    ($cfg:ident, $args:ident, $($field:ident),*) => {
        $(if let Some(v) = $args.$field.clone() { $cfg.$field = v; })*
    };
}

impl ExperimentArgs {
    fn config(&self) -> Result<ExperimentConfig, CliError> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
                serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
            }
            None => ExperimentConfig::default(),
        };
        apply!(
            cfg, self, topology, model, initial_size, max_size, rho_grid, pool_size, delay_factor, p_add, p_del,
            stall_window, max_iterations, tsp_budget, policy, repetitions, seed, snapshot_sizes
        );
        if self.base_size.is_some() {
            cfg.base_size = self.base_size;
        }
        if self.robustness_metrics.is_some() {
            cfg.robustness_metrics = self.robustness_metrics;
        }
        if let Some(w) = self.width {
            cfg.region.width = w;
        }
        if let Some(h) = self.height {
            cfg.region.height = h;
        }
        if self.out.is_some() {
            cfg.output_dir = self.out.clone();
        }
        Ok(cfg)
    }
}

#[derive(Debug, Error)]
enum CliError {
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Experiment(#[from] ExperimentError),
    #[error(transparent)]
    Io(#[from] IoError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Ring(#[from] RingError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Experiment(ExperimentError::Config(_)) => 3,
            CliError::Mesh(MeshError::NoAcceptableNetwork { .. }) => 2,
            CliError::Mesh(MeshError::InvalidParams(_)) => 3,
            CliError::Experiment(e) if e.is_no_acceptable_network() => 2,
            _ => 1,
        }
    }
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Io(e.into()))
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), CliError> {
    match out {
        Some(path) => {
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir).map_err(IoError::from)?;
            }
            fs::write(path, text).map_err(IoError::from)?;
        }
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes()).map_err(IoError::from)?;
            if !text.ends_with('\n') {
                stdout.write_all(b"\n").map_err(IoError::from)?;
            }
        }
    }
    Ok(())
}

fn log_violation(path: Option<&Path>, err: &MeshError) -> Result<(), CliError> {
    if let (Some(path), MeshError::NoAcceptableNetwork { violation: Some(v), .. }) = (path, err) {
        let mut file = fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(IoError::from)?;
        io::append_violation(&mut file, v)?;
    }
    Ok(())
}

fn design_opt(pool: &Path, topology: Topology, design: &DesignArgs, out: Option<&Path>) -> Result<(), CliError> {
    let pool = io::parse_pool(&read(pool)?)?;
    let mut rng = rng::seeded(design.seed);
    let net = match topology {
        Topology::Ring => tsp_heuristic(pool.points(), &mut rng, design.tsp_budget)?.to_network(),
        Topology::Mesh => opt_design(pool.points(), &design.params(pool.region()), &mut rng).or_else(|e| {
            log_violation(design.violations.as_deref(), &e)?;
            Err(CliError::Mesh(e))
        })?,
    };
    let meta = NetworkMeta {
        environment_index: 0,
        seed: design.seed,
    };
    emit(out, &io::network_to_json(&net, meta))
}

#[allow(clippy::too_many_arguments)]
fn design_evo(
    prev: &Path,
    add: &Path,
    inventory: Option<&Path>,
    policy: InventoryPolicy,
    topology: Topology,
    design: &DesignArgs,
    out: Option<&Path>,
    inventory_out: Option<&Path>,
) -> Result<(), CliError> {
    let (prev, meta) = io::parse_network(&read(prev)?)?;
    let add = io::parse_pool(&read(add)?)?;
    let inv = match inventory {
        Some(path) => Inventory::from_links(io::parse_network(&read(path)?)?.0.links()),
        None => Inventory::new(),
    };
    let meta = NetworkMeta {
        environment_index: meta.environment_index + 1,
        seed: design.seed,
    };
    let (net, inv, c_mod) = match topology {
        Topology::Ring => {
            let ring = Ring::from_network(&prev)?;
            let (next, c_mod) = insert_nodes_greedy(&ring, add.points())?;
            (next.to_network(), Inventory::new(), c_mod)
        }
        Topology::Mesh => {
            let mut rng = rng::seeded(design.seed);
            let outcome = evo_design(&prev, &inv, add.points(), &design.params(add.region()), policy, &mut rng)
                .or_else(|e| {
                    log_violation(design.violations.as_deref(), &e)?;
                    Err(CliError::Mesh(e))
                })?;
            (outcome.network, outcome.inventory, outcome.mod_cost)
        }
    };
    emit(out, &io::network_to_json(&net, meta))?;
    if let Some(path) = inventory_out {
        let mut bank = Network::new();
        for link in inv.links() {
            let LinkKey(a, b) = link.key;
            for id in [a, b] {
                if !bank.has_node(id) {
                    bank.add_node(*net.node(id).expect("inventory links join network nodes"))
                        .expect("fresh node");
                }
            }
            bank.add_link(a, b).expect("known nodes");
        }
        emit(Some(path), &io::network_to_json(&bank, meta))?;
    }
    eprintln!("modification cost {c_mod:.3}, network cost {:.3}", net.cost());
    Ok(())
}

fn write_result(result: &ExperimentResult, cfg: &ExperimentConfig, stem: &str) -> Result<(), CliError> {
    let dir = cfg.output_dir.clone().unwrap_or_else(|| PathBuf::from("netevo-out"));
    for path in result.write(&dir, stem)? {
        println!("wrote {}", path.display());
    }
    if !result.snapshots.is_empty() {
        let snap_dir = dir.join(format!("{stem}_snapshots"));
        fs::create_dir_all(&snap_dir).map_err(IoError::from)?;
        for s in &result.snapshots {
            let meta = NetworkMeta {
                environment_index: s.k,
                seed: cfg.seed,
            };
            for (label, net) in [("opt", &s.opt), ("evo", &s.evo)] {
                let name = format!("run{}_n{}_{}_{label}.json", s.run, s.evo.node_count(), s.policy);
                fs::write(snap_dir.join(name), io::network_to_json(net, meta)).map_err(IoError::from)?;
            }
        }
        println!("wrote {} snapshots to {}", result.snapshots.len(), snap_dir.display());
    }
    if let Some(rho) = result.critical_rho {
        println!("critical expansion factor {rho:.3}");
    }
    if result.provenance.redrawn_locations > 0 {
        println!("redrawn infeasible locations: {}", result.provenance.redrawn_locations);
    }
    Ok(())
}

fn experiment(
    args: &ExperimentArgs,
    default_stem: &str,
    run: fn(&ExperimentConfig) -> Result<ExperimentResult, ExperimentError>,
) -> Result<(), CliError> {
    let cfg = args.config()?;
    if let Some(threads) = args.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| CliError::Config(e.to_string()))?;
    }
    let result = run(&cfg)?;
    let stem = args
        .stem
        .clone()
        .unwrap_or_else(|| format!("{}_{}_{default_stem}", cfg.topology, cfg.model));
    write_result(&result, &cfg, &stem)
}

fn pair_metrics(opt: &Path, evo: &Path, c_mod: Option<f64>, inventory_value: Option<f64>) -> Result<(), CliError> {
    let (opt, _) = io::parse_network(&read(opt)?)?;
    let (evo, _) = io::parse_network(&read(evo)?)?;
    let (c_opt, c_evo) = (opt.cost(), evo.cost());
    let mut doc = serde_json::json!({
        "n": evo.node_count(),
        "c_opt": c_opt,
        "c_evo": c_evo,
        "v": metrics::cost_overhead(c_evo, c_opt)?,
        "t": metrics::topological_similarity(&opt, &evo)?,
        "mean_bc_opt": metrics::mean_node_betweenness(&opt)?,
        "mean_bc_evo": metrics::mean_node_betweenness(&evo)?,
        "delay_ratio": metrics::primary_delay_ratio(&evo, &opt)?,
        "avg_len_opt": metrics::average_link_length(&opt)?,
        "avg_len_evo": metrics::average_link_length(&evo)?,
        "skew_opt": metrics::degree_statistics(&opt)?.skewness,
        "skew_evo": metrics::degree_statistics(&evo)?.skewness,
    });
    if let Some(c) = c_mod {
        doc["c_mod"] = c.into();
        doc["e"] = metrics::evolvability(c, c_opt)?.into();
    }
    if let Some(value) = inventory_value {
        doc["r"] = metrics::inventory_overhead(value, c_evo)?.into();
    }
    emit(None, &serde_json::to_string_pretty(&doc).expect("plain data serializes"))
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::GenPool {
            size,
            width,
            height,
            seed,
            first_id,
            out,
        } => {
            let region = Region::new(width, height).map_err(|e| CliError::Config(e.to_string()))?;
            let pool = LocationPool::uniform(region, size, &mut rng::seeded(seed));
            let shifted = pool.points().iter().map(|p| Point::new(p.id + first_id, p.x, p.y)).collect();
            let pool = LocationPool::new(region, shifted).map_err(IoError::from)?;
            emit(out.as_deref(), &io::pool_to_json(&pool))
        }
        Command::DesignOpt {
            pool,
            topology,
            design,
            out,
        } => design_opt(&pool, topology, &design, out.as_deref()),
        Command::DesignEvo {
            prev,
            add,
            inventory,
            policy,
            topology,
            design,
            out,
            inventory_out,
        } => design_evo(
            &prev,
            &add,
            inventory.as_deref(),
            policy,
            topology,
            &design,
            out.as_deref(),
            inventory_out.as_deref(),
        ),
        Command::SingleNode(args) => experiment(&args, "single", run_single_node_experiment),
        Command::MultiNode(args) => experiment(&args, "multi", run_multi_node_experiment),
        Command::Policies(args) => experiment(&args, "policies", run_policy_comparison),
        Command::Metrics {
            opt,
            evo,
            c_mod,
            inventory_value,
        } => pair_metrics(&opt, &evo, c_mod, inventory_value),
        Command::Analyze { input, out } => {
            let rows = io::read_records(read(&input)?.as_bytes())?;
            let mut buf = Vec::new();
            io::write_rows(&mut buf, &analyze(&rows))?;
            emit(out.as_deref(), &String::from_utf8(buf).expect("csv is utf-8"))
        }
        Command::ExportTsplib { pool, name, out } => {
            let pool = io::parse_pool(&read(&pool)?)?;
            emit(out.as_deref(), &io::export_tsplib(&name, pool.points()))
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(3) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
