//! Experiment configuration, presets and output files.
//!
//! An experiment runs every (variant, gate) pair of its lists and writes, per
//! pair, `{name}_{gate}_{short}.csv` with one row per run and step, and
//! `{name}_{gate}_{short}_summary.json` with checkpoint statistics. With
//! `bound_report` set it also writes `{name}_bounds.json`.

use std::fmt::Write as _;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bounds::{self, BoundError, BoundInputs, BoundReport, BoundVariant, MIN_XI};
use crate::engine::{graph_seed, Aggregate, EngineError, SimConfig, Simulation, Variant};
use crate::env::{ArmSpec, BanditEnv};
use crate::graph::{analyze, generate_topology, GraphError, GraphSpec, Topology};
use crate::policy::ThompsonPrior;
use crate::protocol::Gate;

pub const CSV_HEADER: &str = "run,t,regret,comm_cost,control_msgs";

pub const PRESET_NAMES: [&str; 5] = [
    "paper-fig2a",
    "paper-fig2b",
    "paper-fig2c",
    "paper-fig2d",
    "paper-fig2e",
];

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot parse config: {0}")]
    Parse(String),
    #[error("invalid `{field}`: {message}")]
    Validation { field: &'static str, message: String },
    #[error("{0}")]
    Runtime(String),
}

impl ConfigError {
    /// Process exit status for this failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            ConfigError::Parse(_) => 2,
            ConfigError::Validation { .. } => 3,
            ConfigError::Runtime(_) => 1,
        }
    }

    fn invalid(field: &'static str, message: impl ToString) -> Self {
        ConfigError::Validation {
            field,
            message: message.to_string(),
        }
    }
}

impl From<io::Error> for ConfigError {
    fn from(e: io::Error) -> Self {
        ConfigError::Runtime(e.to_string())
    }
}

fn default_gamma() -> usize {
    1
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("results")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Prefix of every output file.
    pub name: String,
    pub variants: Vec<Variant>,
    pub gates: Vec<Gate>,
    pub arms: Vec<ArmSpec>,
    /// Common sub-Gaussian proxy; defaults to the largest per-arm proxy.
    #[serde(default)]
    pub sigma: Option<f64>,
    pub graph: GraphSpec,
    pub horizon: u64,
    #[serde(default = "default_gamma")]
    pub gamma: usize,
    #[serde(default)]
    pub clamp_gamma_to_diameter: bool,
    pub xi: f64,
    #[serde(default)]
    pub thompson_prior: ThompsonPrior,
    pub runs: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Steps reported in the summary; empty means T/4, T/2 and T.
    #[serde(default)]
    pub checkpoints: Vec<u64>,
    #[serde(default)]
    pub bound_report: bool,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        serde_json::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path)
            .map_err(|e| ConfigError::Parse(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn sim_config(&self, variant: Variant, gate: Gate) -> SimConfig {
        SimConfig {
            variant,
            gate,
            arms: self.arms.clone(),
            sigma: self.sigma,
            graph: self.graph,
            horizon: self.horizon,
            gamma: self.gamma,
            clamp_gamma_to_diameter: self.clamp_gamma_to_diameter,
            xi: self.xi,
            thompson_prior: self.thompson_prior,
            runs: self.runs,
            seed: self.seed,
        }
    }

    /// Checkpoint steps, deduplicated and in increasing order.
    pub fn checkpoint_steps(&self) -> Vec<u64> {
        let mut c = if self.checkpoints.is_empty() {
            let t = self.horizon;
            vec![(t / 4).max(1), (t / 2).max(1), t]
        } else {
            self.checkpoints.clone()
        };
        c.sort_unstable();
        c.dedup();
        c
    }

    /// Checks everything that does not need the graph.
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.name.is_empty()
            || !self
                .name
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.')
        {
            return Err(ConfigError::invalid("name", "use letters, digits, '-', '_' or '.'"));
        }
        if self.variants.is_empty() {
            return Err(ConfigError::invalid("variants", "list is empty"));
        }
        if self.gates.is_empty() {
            return Err(ConfigError::invalid("gates", "list is empty"));
        }
        BanditEnv::new(&self.arms, self.sigma).map_err(|e| {
            let field = if matches!(e, crate::env::EnvError::SigmaTooSmall { .. }) {
                "sigma"
            } else {
                "arms"
            };
            ConfigError::invalid(field, e)
        })?;
        if self.graph.num_agents() == 0 {
            return Err(ConfigError::invalid("graph", GraphError::Empty));
        }
        if let GraphSpec::ErdosRenyi { p, .. } = self.graph {
            if !(0.0..=1.0).contains(&p) {
                return Err(ConfigError::invalid("graph", GraphError::InvalidProbability(p)));
            }
        }
        if self.horizon < 1 {
            return Err(ConfigError::invalid("horizon", "must be at least 1"));
        }
        if self.runs < 1 {
            return Err(ConfigError::invalid("runs", "must be at least 1"));
        }
        if self.gamma < 1 {
            return Err(ConfigError::invalid("gamma", "must be at least 1"));
        }
        if !(self.xi > 0.0) {
            return Err(ConfigError::invalid("xi", "must be positive"));
        }
        if !(self.thompson_prior.variance > 0.0) {
            return Err(ConfigError::invalid("thompson_prior", "variance must be positive"));
        }
        if let Some(&c) = self.checkpoints.iter().find(|&&c| c < 1 || c > self.horizon) {
            return Err(ConfigError::invalid(
                "checkpoints",
                format!("{c} is outside 1..={}", self.horizon),
            ));
        }
        Ok(())
    }

    /// The experiment's communication graph (shared by every job).
    pub fn topology(&self) -> Result<Topology, ConfigError> {
        let mut rng = ChaCha8Rng::seed_from_u64(graph_seed(self.seed));
        generate_topology(&self.graph, &mut rng, true).map_err(|e| ConfigError::invalid("graph", e))
    }

    /// Validates the whole configuration and builds one simulation per
    /// (variant, gate) pair, in list order.
    pub fn prepare(&self) -> Result<Vec<Simulation>, ConfigError> {
        self.validate()?;
        let topology = self.topology()?;
        let mut sims = Vec::new();
        for &v in &self.variants {
            for &g in &self.gates {
                let sim = Simulation::with_topology(self.sim_config(v, g), topology.clone())
                    .map_err(engine_validation)?;
                sims.push(sim);
            }
        }
        Ok(sims)
    }

    /// Bound inputs for `variant` on this configuration's instance.
    pub fn bound_inputs(&self, variant: BoundVariant) -> Result<BoundInputs, ConfigError> {
        self.validate()?;
        let topology = self.topology()?;
        let env = BanditEnv::new(&self.arms, self.sigma).map_err(|e| ConfigError::invalid("arms", e))?;
        let gamma = match variant {
            BoundVariant::UcbShare => 1,
            BoundVariant::MpUcb | BoundVariant::LfUcb => {
                let diameter = analyze(&topology, 1)
                    .map_err(|e| ConfigError::invalid("graph", e))?
                    .diameter
                    .max(1);
                if self.gamma <= diameter {
                    self.gamma
                } else if self.clamp_gamma_to_diameter {
                    diameter
                } else {
                    return Err(ConfigError::invalid(
                        "gamma",
                        format!("{} exceeds the graph diameter {diameter}", self.gamma),
                    ));
                }
            }
        };
        BoundInputs::from_instance(&env, &topology, gamma, self.xi, self.horizon).map_err(bound_validation)
    }
}

fn engine_validation(e: EngineError) -> ConfigError {
    match e {
        EngineError::GammaExceedsDiameter { .. } => ConfigError::invalid("gamma", e),
        EngineError::Env(_) => ConfigError::invalid("arms", e),
        EngineError::Graph(_) => ConfigError::invalid("graph", e),
        EngineError::InvalidXi(_) => ConfigError::invalid("xi", e),
        other => ConfigError::Runtime(other.to_string()),
    }
}

fn bound_validation(e: BoundError) -> ConfigError {
    match e {
        BoundError::XiTooSmall(_) => ConfigError::invalid("xi", e),
        BoundError::ZeroGap(_) | BoundError::UndefinedMinGap => ConfigError::invalid("arms", e),
        _ => ConfigError::invalid("graph", e),
    }
}

fn paper_gaussian() -> Vec<ArmSpec> {
    let mut arms = vec![ArmSpec::Gaussian { mean: 11.0, variance: 1.0 }];
    arms.extend([ArmSpec::Gaussian { mean: 10.0, variance: 1.0 }; 9]);
    arms
}

fn paper_triangular() -> Vec<ArmSpec> {
    let mut arms = vec![ArmSpec::Triangular01 { mode: 1.0 }];
    arms.extend([ArmSpec::Triangular01 { mode: 0.0 }; 9]);
    arms
}

/// Built-in configurations for the five published experiment panels:
/// K = 10, N = 100, T = 500, Erdős–Rényi(0.7), xi = 1.01, 100 runs.
pub fn preset(name: &str) -> Option<ExperimentConfig> {
    let (short, variant, arms, gamma) = match name {
        "paper-fig2a" => ("fig2a", Variant::UcbShare, paper_triangular(), 1),
        "paper-fig2b" => ("fig2b", Variant::MpUcb, paper_gaussian(), 5),
        "paper-fig2c" => ("fig2c", Variant::EstUcb, paper_gaussian(), 5),
        "paper-fig2d" => ("fig2d", Variant::LfUcb, paper_triangular(), 5),
        "paper-fig2e" => ("fig2e", Variant::MpThompson, paper_gaussian(), 5),
        _ => return None,
    };
    Some(ExperimentConfig {
        name: short.to_string(),
        variants: vec![variant],
        gates: vec![Gate::Comex, Gate::Full],
        arms,
        sigma: None,
        graph: GraphSpec::ErdosRenyi { n: 100, p: 0.7 },
        horizon: 500,
        gamma,
        clamp_gamma_to_diameter: true,
        xi: 1.01,
        thompson_prior: ThompsonPrior::default(),
        runs: 100,
        seed: 1,
        output_dir: default_output_dir(),
        checkpoints: Vec::new(),
        bound_report: false,
    })
}

/// Formats like C's `%.6g`: six significant digits, trailing zeros dropped.
pub fn format_sig6(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let sci = format!("{x:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..6).contains(&exp) {
        let m = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        return format!("{m}e{sign}{:02}", exp.abs());
    }
    let decimals = (5 - exp).max(0) as usize;
    trim_zeros(&format!("{x:.decimals$}")).to_string()
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

pub fn csv_file_name(name: &str, gate: Gate, variant: Variant) -> String {
    format!("{name}_{}_{}.csv", gate.name(), variant.short())
}

pub fn summary_file_name(name: &str, gate: Gate, variant: Variant) -> String {
    format!("{name}_{}_{}_summary.json", gate.name(), variant.short())
}

pub fn bounds_file_name(name: &str) -> String {
    format!("{name}_bounds.json")
}

/// Trajectories of every run, one row per (run, t).
pub fn write_csv<W: Write>(mut w: W, agg: &Aggregate) -> io::Result<()> {
    let mut line = String::new();
    writeln!(w, "{CSV_HEADER}")?;
    for (r, m) in agg.runs.iter().enumerate() {
        for t in 0..m.regret.len() {
            line.clear();
            let _ = writeln!(
                line,
                "{r},{},{},{},{}",
                t + 1,
                format_sig6(m.regret[t]),
                m.comm_cost[t],
                m.control_msgs[t]
            );
            w.write_all(line.as_bytes())?;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub t: u64,
    pub regret_mean: f64,
    pub regret_std: f64,
    pub comm_cost_mean: f64,
    pub comm_cost_std: f64,
    pub control_msgs_mean: f64,
    pub comm_cost_per_arm_mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub config: ExperimentConfig,
    pub variant: Variant,
    pub gate: Gate,
    /// Hop radius used after clamping.
    pub gamma: usize,
    pub num_agents: usize,
    pub num_edges: usize,
    pub checkpoints: Vec<Checkpoint>,
    pub warnings: Vec<String>,
}

pub fn summarize(cfg: &ExperimentConfig, sim: &Simulation, agg: &Aggregate) -> Summary {
    let checkpoints = cfg
        .checkpoint_steps()
        .into_iter()
        .map(|t| {
            let i = (t - 1) as usize;
            Checkpoint {
                t,
                regret_mean: agg.mean_regret[i],
                regret_std: agg.std_regret[i],
                comm_cost_mean: agg.mean_comm_cost[i],
                comm_cost_std: agg.std_comm_cost[i],
                control_msgs_mean: agg.mean_control_msgs[i],
                comm_cost_per_arm_mean: agg.mean_comm_cost_per_arm[i],
            }
        })
        .collect();
    Summary {
        config: cfg.clone(),
        variant: sim.config().variant,
        gate: sim.config().gate,
        gamma: sim.gamma(),
        num_agents: sim.topology().num_agents(),
        num_edges: sim.topology().num_edges(),
        checkpoints,
        warnings: sim.warnings(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SkippedBound {
    pub variant: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundsFile {
    pub config: ExperimentConfig,
    pub reports: Vec<BoundReport>,
    pub skipped: Vec<SkippedBound>,
}

/// Bound reports for the variants of `cfg` that have closed-form bounds.
/// Variants whose preconditions fail are listed with the reason instead.
pub fn bound_reports(cfg: &ExperimentConfig) -> BoundsFile {
    let mut reports = Vec::new();
    let mut skipped = Vec::new();
    for v in &cfg.variants {
        let Some(bv) = v.bound_variant() else {
            skipped.push(SkippedBound {
                variant: v.name().to_string(),
                reason: "no closed-form bound".to_string(),
            });
            continue;
        };
        match cfg
            .bound_inputs(bv)
            .and_then(|b| bounds::report(bv, &b).map_err(bound_validation))
        {
            Ok(r) => reports.push(r),
            Err(e) => skipped.push(SkippedBound {
                variant: v.name().to_string(),
                reason: e.to_string(),
            }),
        }
    }
    BoundsFile {
        config: cfg.clone(),
        reports,
        skipped,
    }
}

/// Human-readable table of every closed-form bound for the instance.
/// Refuses configurations outside the range of xi the bounds cover.
pub fn bounds_table(cfg: &ExperimentConfig) -> Result<String, ConfigError> {
    cfg.validate()?;
    if cfg.xi < MIN_XI {
        return Err(ConfigError::invalid(
            "xi",
            format!("the regret and cost bounds require ξ ≥ 1.1, got {}", cfg.xi),
        ));
    }
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<12} {:>5} {:>16} {:>16} {:>16}",
        "variant", "gamma", "regret", "cost", "cost (capped)"
    );
    for bv in [BoundVariant::UcbShare, BoundVariant::MpUcb, BoundVariant::LfUcb] {
        let b = cfg.bound_inputs(bv)?;
        let r = bounds::report(bv, &b).map_err(bound_validation)?;
        let _ = writeln!(
            out,
            "{:<12} {:>5} {:>16.6} {:>16.6} {:>16.6}",
            bv.name(),
            r.gamma,
            r.bound_regret,
            r.bound_cost,
            r.bound_cost_capped
        );
    }
    if let Ok(b) = cfg.bound_inputs(BoundVariant::UcbShare) {
        if let Ok(v) = bounds::regret_bound_complete_modified(&b) {
            let _ = writeln!(out, "{:<12} {:>5} {:>16.6}", "complete_mod", 1, v);
        }
    }
    let _ = writeln!(
        out,
        "clique cover and dominating set sizes are greedy upper estimates"
    );
    Ok(out)
}

/// Runs every job of `cfg`, writing outputs under `cfg.output_dir`.
/// `note` receives progress lines and warnings. Returns the written paths.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    threads: Option<usize>,
    mut note: impl FnMut(&str),
) -> Result<Vec<PathBuf>, ConfigError> {
    let sims = cfg.prepare()?;
    fs::create_dir_all(&cfg.output_dir).map_err(|e| {
        ConfigError::invalid("output_dir", format!("{}: {e}", cfg.output_dir.display()))
    })?;
    let mut written = Vec::new();
    for sim in &sims {
        let (v, g) = (sim.config().variant, sim.config().gate);
        for w in sim.warnings() {
            note(&format!("warning: {}/{}: {w}", v.name(), g.name()));
        }
        let agg = sim
            .aggregate(threads)
            .map_err(|e| ConfigError::Runtime(e.to_string()))?;
        let csv_path = cfg.output_dir.join(csv_file_name(&cfg.name, g, v));
        let mut buf = Vec::new();
        write_csv(&mut buf, &agg)?;
        fs::write(&csv_path, buf)?;
        let summary_path = cfg.output_dir.join(summary_file_name(&cfg.name, g, v));
        let summary = serde_json::to_string_pretty(&summarize(cfg, sim, &agg))
            .map_err(|e| ConfigError::Runtime(e.to_string()))?;
        fs::write(&summary_path, summary + "\n")?;
        note(&format!("{}/{}: wrote {}", v.name(), g.name(), csv_path.display()));
        written.push(csv_path);
        written.push(summary_path);
    }
    if cfg.bound_report {
        let path = cfg.output_dir.join(bounds_file_name(&cfg.name));
        let report = serde_json::to_string_pretty(&bound_reports(cfg))
            .map_err(|e| ConfigError::Runtime(e.to_string()))?;
        fs::write(&path, report + "\n")?;
        written.push(path);
    }
    Ok(written)
}
