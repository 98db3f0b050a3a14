//! Time-stepped simulation of every algorithm variant and run aggregation.
//!
//! Each step runs four phases for all agents at once: choose and pull an
//! arm, build outgoing bundles, deliver synchronously, then fold the new
//! information into the estimates. Decisions at step `t` only read state
//! from the end of step `t - 1`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::argmax_lowest;
use crate::bounds::{BoundVariant, MIN_XI};
use crate::env::{ArmSpec, BanditEnv, EnvError};
use crate::graph::{
    analyze, generate_topology, leader_assignment, GraphAnalysis, GraphError, GraphSpec,
    LeaderAssignment, Topology,
};
use crate::policy::{
    confidence_width, instantaneously_best, select_arm_ucb, AgentEstimates, ThompsonPrior,
    ThompsonState, UcbParams,
};
use crate::protocol::{
    consensus_step, deliver_and_incorporate, follower_action, AuditRecord, ConsensusEstimates,
    EstimateSnapshot, Gate, LeaderActionMessage, LeaderHistory, MessageBuffer, ProtocolError,
    RewardMessage, WeightMatrix,
};

/// Environment variable capping the worker threads used by [`Simulation::aggregate`].
pub const THREADS_ENV: &str = "COMEX_THREADS";

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error("gamma {gamma} exceeds the graph diameter {diameter}")]
    GammaExceedsDiameter { gamma: usize, diameter: usize },
    #[error("{field} must be at least 1")]
    NonPositive { field: &'static str },
    #[error("xi must be positive, got {0}")]
    InvalidXi(f64),
    #[error("topology has {got} agents but the graph spec has {expected}")]
    AgentCountMismatch { expected: usize, got: usize },
    #[error("thread pool: {0}")]
    ThreadPool(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// One-hop sharing of single rewards.
    UcbShare,
    /// Rewards relayed up to gamma hops.
    MpUcb,
    /// Leaders run relayed UCB, followers replay their leader's actions.
    LfUcb,
    /// Neighbours average count and mean estimates.
    EstUcb,
    /// Thompson sampling with relayed rewards.
    MpThompson,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::UcbShare,
        Variant::MpUcb,
        Variant::LfUcb,
        Variant::EstUcb,
        Variant::MpThompson,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Variant::UcbShare => "ucb_share",
            Variant::MpUcb => "mp_ucb",
            Variant::LfUcb => "lf_ucb",
            Variant::EstUcb => "est_ucb",
            Variant::MpThompson => "mp_thompson",
        }
    }

    /// Suffix used in output file names.
    pub fn short(&self) -> &'static str {
        match self {
            Variant::UcbShare => "ucb",
            Variant::MpUcb => "mpucb",
            Variant::LfUcb => "lfucb",
            Variant::EstUcb => "estucb",
            Variant::MpThompson => "mpthompson",
        }
    }

    /// Whether the variant forwards messages over several hops.
    pub fn relays(&self) -> bool {
        matches!(self, Variant::MpUcb | Variant::LfUcb | Variant::MpThompson)
    }

    pub fn bound_variant(&self) -> Option<BoundVariant> {
        match self {
            Variant::UcbShare => Some(BoundVariant::UcbShare),
            Variant::MpUcb => Some(BoundVariant::MpUcb),
            Variant::LfUcb => Some(BoundVariant::LfUcb),
            Variant::EstUcb | Variant::MpThompson => None,
        }
    }
}

fn default_prior() -> ThompsonPrior {
    ThompsonPrior::default()
}

/// One (variant, gate) simulation setup.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub variant: Variant,
    pub gate: Gate,
    pub arms: Vec<ArmSpec>,
    #[serde(default)]
    pub sigma: Option<f64>,
    pub graph: GraphSpec,
    pub horizon: u64,
    pub gamma: usize,
    /// Use `min(gamma, diameter)` instead of rejecting a gamma above the
    /// diameter.
    #[serde(default)]
    pub clamp_gamma_to_diameter: bool,
    pub xi: f64,
    #[serde(default = "default_prior")]
    pub thompson_prior: ThompsonPrior,
    pub runs: usize,
    pub seed: u64,
}

const PURPOSE_GRAPH: u64 = 0x6772_6170_68;
const PURPOSE_ENV: u64 = 0x656e_76;
const PURPOSE_PROTOCOL: u64 = 0x7072_6f74_6f;
const PURPOSE_THOMPSON: u64 = 0x7468_6f6d;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of the stream used for `purpose` in run `run_index`.
pub fn derive_seed(base: u64, run_index: u64, purpose: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(base) ^ run_index) ^ purpose)
}

/// Seed for the communication graph, shared by all runs of an experiment.
pub fn graph_seed(base: u64) -> u64 {
    derive_seed(base, 0, PURPOSE_GRAPH)
}

/// Independent random streams of one run.
#[derive(Debug, Clone)]
pub struct RunStreams {
    /// Reward draws, in agent order within a step.
    pub env: ChaCha8Rng,
    /// First-step random arms and early follower pulls, in agent order.
    pub protocol: ChaCha8Rng,
    /// Posterior samples.
    pub thompson: ChaCha8Rng,
}

impl RunStreams {
    pub fn for_run(seed: u64, run_index: u64) -> Self {
        let s = |p| ChaCha8Rng::seed_from_u64(derive_seed(seed, run_index, p));
        Self {
            env: s(PURPOSE_ENV),
            protocol: s(PURPOSE_PROTOCOL),
            thompson: s(PURPOSE_THOMPSON),
        }
    }
}

/// Cumulative per-step series of one run, indexed by `t - 1`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunMetrics {
    /// Group regret from the true gaps.
    pub regret: Vec<f64>,
    /// Messages transmitted.
    pub comm_cost: Vec<u64>,
    /// Estimate sharing only: messages counted once per flagged arm.
    pub comm_cost_per_arm: Vec<u64>,
    /// Leader action broadcasts, counted apart from `comm_cost`.
    pub control_msgs: Vec<u64>,
    /// `final_pulls[i][k]`: own pulls of arm `k` by agent `i`.
    pub final_pulls: Vec<Vec<u64>>,
}

/// Step-level record of a run, for audits.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct RunTrace {
    /// `pulls[t-1][i]`.
    pub pulls: Vec<Vec<usize>>,
    /// Whether agent `i` initiated a reward message (or joined averaging).
    pub initiated: Vec<Vec<bool>>,
    /// Messages counted toward the cost for agent `i` at each step.
    pub sent: Vec<Vec<u64>>,
    /// Foreign reward incorporations.
    pub audit: Vec<AuditRecord>,
    /// Leader action incorporations.
    pub control_audit: Vec<AuditRecord>,
    /// `obs_counts[t-1][i][k]` after the step.
    pub obs_counts: Vec<Vec<Vec<f64>>>,
    /// `pull_counts[t-1][i][k]` after the step.
    pub pull_counts: Vec<Vec<Vec<u64>>>,
}

/// A validated configuration bound to its environment and graph.
#[derive(Debug, Clone)]
pub struct Simulation {
    cfg: SimConfig,
    env: BanditEnv,
    topology: Topology,
    analysis: GraphAnalysis,
    leaders: Option<LeaderAssignment>,
    weights: Option<WeightMatrix>,
}

impl Simulation {
    /// Builds the environment and draws the graph from the configured seed.
    pub fn new(cfg: SimConfig) -> Result<Self, EngineError> {
        let mut rng = ChaCha8Rng::seed_from_u64(graph_seed(cfg.seed));
        let topology = generate_topology(&cfg.graph, &mut rng, true)?;
        Self::with_topology(cfg, topology)
    }

    /// Uses a given graph; `cfg.graph` only has to agree on the agent count.
    pub fn with_topology(cfg: SimConfig, topology: Topology) -> Result<Self, EngineError> {
        if cfg.horizon < 1 {
            return Err(EngineError::NonPositive { field: "horizon" });
        }
        if cfg.runs < 1 {
            return Err(EngineError::NonPositive { field: "runs" });
        }
        if cfg.gamma < 1 {
            return Err(EngineError::NonPositive { field: "gamma" });
        }
        if !(cfg.xi > 0.0) {
            return Err(EngineError::InvalidXi(cfg.xi));
        }
        if topology.num_agents() != cfg.graph.num_agents() {
            return Err(EngineError::AgentCountMismatch {
                expected: cfg.graph.num_agents(),
                got: topology.num_agents(),
            });
        }
        let env = BanditEnv::new(&cfg.arms, cfg.sigma)?;
        let gamma = effective_gamma(&cfg, &topology)?;
        let analysis = analyze(&topology, gamma)?;
        let leaders = match cfg.variant {
            Variant::LfUcb => Some(leader_assignment(&analysis)?),
            _ => None,
        };
        let weights = match cfg.variant {
            Variant::EstUcb => Some(WeightMatrix::metropolis(&topology)),
            _ => None,
        };
        Ok(Self {
            cfg,
            env,
            topology,
            analysis,
            leaders,
            weights,
        })
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    pub fn env(&self) -> &BanditEnv {
        &self.env
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    pub fn analysis(&self) -> &GraphAnalysis {
        &self.analysis
    }

    /// Hop radius actually simulated.
    pub fn gamma(&self) -> usize {
        self.analysis.gamma
    }

    pub fn leaders(&self) -> Option<&LeaderAssignment> {
        self.leaders.as_ref()
    }

    /// Non-fatal remarks about the configuration.
    pub fn warnings(&self) -> Vec<String> {
        let mut w = Vec::new();
        if self.cfg.xi < MIN_XI {
            w.push(format!(
                "xi = {} is below 1.1; the regret and cost guarantees do not apply",
                self.cfg.xi
            ));
        }
        if self.gamma() != self.cfg.gamma && self.cfg.variant.relays() {
            w.push(format!(
                "gamma {} clamped to the graph diameter {}",
                self.cfg.gamma,
                self.gamma()
            ));
        }
        w
    }

    pub fn run(&self, run_index: u64) -> Result<RunMetrics, EngineError> {
        Runner::new(self, run_index, false).execute().map(|(m, _)| m)
    }

    pub fn run_traced(&self, run_index: u64) -> Result<(RunMetrics, RunTrace), EngineError> {
        Runner::new(self, run_index, true)
            .execute()
            .map(|(m, t)| (m, t.expect("tracing enabled")))
    }

    /// Runs `cfg.runs` independent runs, on at most `threads` workers (all
    /// cores when `None`). Results do not depend on the thread count.
    pub fn aggregate(&self, threads: Option<usize>) -> Result<Aggregate, EngineError> {
        let mut builder = rayon::ThreadPoolBuilder::new();
        if let Some(n) = threads {
            builder = builder.num_threads(n.max(1));
        }
        let pool = builder
            .build()
            .map_err(|e| EngineError::ThreadPool(e.to_string()))?;
        let runs = pool.install(|| {
            (0..self.cfg.runs as u64)
                .into_par_iter()
                .map(|r| self.run(r))
                .collect::<Result<Vec<_>, _>>()
        })?;
        Ok(Aggregate::from_runs(runs))
    }
}

/// Worker cap from [`THREADS_ENV`], if set to a positive integer.
pub fn threads_from_env() -> Option<usize> {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse().ok())
        .filter(|&n: &usize| n > 0)
}

fn effective_gamma(cfg: &SimConfig, g: &Topology) -> Result<usize, EngineError> {
    if !cfg.variant.relays() {
        return Ok(1);
    }
    let diameter = analyze(g, 1)?.diameter.max(1);
    if cfg.gamma <= diameter {
        Ok(cfg.gamma)
    } else if cfg.clamp_gamma_to_diameter {
        Ok(diameter)
    } else {
        Err(EngineError::GammaExceedsDiameter {
            gamma: cfg.gamma,
            diameter,
        })
    }
}

/// Pointwise mean and population standard deviation over runs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Aggregate {
    pub runs: Vec<RunMetrics>,
    pub mean_regret: Vec<f64>,
    pub std_regret: Vec<f64>,
    pub mean_comm_cost: Vec<f64>,
    pub std_comm_cost: Vec<f64>,
    pub mean_control_msgs: Vec<f64>,
    pub mean_comm_cost_per_arm: Vec<f64>,
}

fn mean_std(series: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let n = series.len() as f64;
    let len = series.first().map_or(0, Vec::len);
    (0..len)
        .map(|t| {
            let mean = series.iter().map(|s| s[t]).sum::<f64>() / n;
            let var = series.iter().map(|s| (s[t] - mean).powi(2)).sum::<f64>() / n;
            (mean, var.sqrt())
        })
        .unzip()
}

fn as_f64(v: &[u64]) -> Vec<f64> {
    v.iter().map(|&x| x as f64).collect()
}

impl Aggregate {
    pub fn from_runs(runs: Vec<RunMetrics>) -> Self {
        let (mean_regret, std_regret) =
            mean_std(&runs.iter().map(|r| r.regret.clone()).collect::<Vec<_>>());
        let (mean_comm_cost, std_comm_cost) =
            mean_std(&runs.iter().map(|r| as_f64(&r.comm_cost)).collect::<Vec<_>>());
        let (mean_control_msgs, _) =
            mean_std(&runs.iter().map(|r| as_f64(&r.control_msgs)).collect::<Vec<_>>());
        let (mean_comm_cost_per_arm, _) =
            mean_std(&runs.iter().map(|r| as_f64(&r.comm_cost_per_arm)).collect::<Vec<_>>());
        Self {
            runs,
            mean_regret,
            std_regret,
            mean_comm_cost,
            std_comm_cost,
            mean_control_msgs,
            mean_comm_cost_per_arm,
        }
    }
}

/// Arm with the largest upper confidence bound on real-valued counts.
fn select_arm_consensus(est: &ConsensusEstimates, t: f64, p: &UcbParams) -> usize {
    argmax_lowest((0..est.num_arms()).map(|k| {
        let w = confidence_width(est.count[k], t, p);
        if w.is_infinite() {
            w
        } else {
            est.mean_hat(k) + w
        }
    }))
}

fn consensus_best(est: &ConsensusEstimates) -> usize {
    argmax_lowest((0..est.num_arms()).map(|k| est.mean_hat(k)))
}

struct Runner<'a> {
    sim: &'a Simulation,
    streams: RunStreams,
    params: UcbParams,
    est: Vec<AgentEstimates>,
    consensus: Vec<ConsensusEstimates>,
    thompson: Vec<ThompsonState>,
    reward_bufs: Vec<MessageBuffer<RewardMessage>>,
    control_bufs: Vec<MessageBuffer<LeaderActionMessage>>,
    histories: Vec<LeaderHistory>,
    pulls: Vec<Vec<u64>>,
    arm_totals: Vec<u64>,
    trace: Option<RunTrace>,
}

/// What one agent does in the current step.
#[derive(Clone, Copy)]
struct Choice {
    arm: usize,
    initiate: bool,
    /// Leaders only: the flag carried by this step's action broadcast.
    leader_flag: bool,
}

impl<'a> Runner<'a> {
    fn new(sim: &'a Simulation, run_index: u64, trace: bool) -> Self {
        let n = sim.topology.num_agents();
        let k = sim.env.num_arms();
        let gamma = sim.gamma();
        let cfg = &sim.cfg;
        let thompson = if cfg.variant == Variant::MpThompson {
            let var = sim.env.sigma().powi(2);
            vec![ThompsonState::new(k, cfg.thompson_prior, var); n]
        } else {
            Vec::new()
        };
        let consensus = if cfg.variant == Variant::EstUcb {
            vec![ConsensusEstimates::new(k); n]
        } else {
            Vec::new()
        };
        let control_bufs = if cfg.variant == Variant::LfUcb {
            (0..n).map(|_| MessageBuffer::new(n, gamma)).collect()
        } else {
            Vec::new()
        };
        Self {
            sim,
            streams: RunStreams::for_run(cfg.seed, run_index),
            params: UcbParams {
                xi: cfg.xi,
                sigma: sim.env.sigma(),
            },
            est: vec![AgentEstimates::new(k); n],
            consensus,
            thompson,
            reward_bufs: (0..n).map(|_| MessageBuffer::new(n, gamma)).collect(),
            control_bufs,
            histories: vec![LeaderHistory::default(); n],
            pulls: vec![vec![0; k]; n],
            arm_totals: vec![0; k],
            trace: trace.then(RunTrace::default),
        }
    }

    fn execute(mut self) -> Result<(RunMetrics, Option<RunTrace>), EngineError> {
        let horizon = self.sim.cfg.horizon as usize;
        let mut m = RunMetrics {
            regret: Vec::with_capacity(horizon),
            comm_cost: Vec::with_capacity(horizon),
            comm_cost_per_arm: Vec::with_capacity(horizon),
            control_msgs: Vec::with_capacity(horizon),
            final_pulls: Vec::new(),
        };
        let (mut cost, mut per_arm, mut control) = (0u64, 0u64, 0u64);
        for t in 1..=self.sim.cfg.horizon {
            let step = self.step(t)?;
            cost += step.cost;
            per_arm += step.cost_per_arm;
            control += step.control;
            let gaps = self.sim.env.gaps();
            m.regret.push(
                self.arm_totals
                    .iter()
                    .zip(gaps)
                    .map(|(&c, &g)| g * c as f64)
                    .sum(),
            );
            m.comm_cost.push(cost);
            m.comm_cost_per_arm.push(per_arm);
            m.control_msgs.push(control);
        }
        m.final_pulls = self.pulls;
        Ok((m, self.trace))
    }

    fn choose(&mut self, t: u64) -> Result<Vec<Choice>, EngineError> {
        let n = self.sim.topology.num_agents();
        let k = self.sim.env.num_arms();
        let gate = self.sim.cfg.gate;
        if t == 1 {
            // Nothing is known yet: a random pull, shared unconditionally.
            return Ok((0..n)
                .map(|_| Choice {
                    arm: self.streams.protocol.random_range(0..k),
                    initiate: true,
                    leader_flag: true,
                })
                .collect());
        }
        let tf = (t - 1) as f64;
        let mut out = Vec::with_capacity(n);
        for i in 0..n {
            let c = match self.sim.cfg.variant {
                Variant::UcbShare | Variant::MpUcb => {
                    let arm = select_arm_ucb(&self.est[i], tf, &self.params);
                    Choice {
                        arm,
                        initiate: gate.initiates(&self.est[i], arm),
                        leader_flag: false,
                    }
                }
                Variant::MpThompson => {
                    let arm = self.thompson[i].select(&mut self.streams.thompson);
                    Choice {
                        arm,
                        initiate: gate.initiates(&self.est[i], arm),
                        leader_flag: false,
                    }
                }
                Variant::EstUcb => {
                    let est = &self.consensus[i];
                    let arm = select_arm_consensus(est, tf, &self.params);
                    let initiate = match gate {
                        Gate::Comex => arm != consensus_best(est),
                        Gate::Full => true,
                    };
                    Choice {
                        arm,
                        initiate,
                        leader_flag: false,
                    }
                }
                Variant::LfUcb => {
                    let a = self.sim.leaders.as_ref().expect("leaders assigned");
                    if a.is_leader(i) {
                        let arm = select_arm_ucb(&self.est[i], tf, &self.params);
                        let flag = arm != instantaneously_best(&self.est[i]);
                        Choice {
                            arm,
                            initiate: gate.initiates(&self.est[i], arm),
                            leader_flag: flag,
                        }
                    } else {
                        let d = follower_action(
                            i,
                            a.leader_of[i],
                            a.distance[i],
                            &self.histories[i],
                            t,
                            k,
                            &mut self.streams.protocol,
                        )?;
                        self.histories[i].prune_before(t + 1 - a.distance[i] as u64);
                        Choice {
                            arm: d.arm,
                            initiate: gate == Gate::Full || d.flagged,
                            leader_flag: false,
                        }
                    }
                }
            };
            out.push(c);
        }
        Ok(out)
    }

    fn step(&mut self, t: u64) -> Result<StepCost, EngineError> {
        let sim = self.sim;
        let n = sim.topology.num_agents();
        let choices = self.choose(t)?;

        let mut rewards = Vec::with_capacity(n);
        for (i, c) in choices.iter().enumerate() {
            let r = sim.env.sample_reward(c.arm, &mut self.streams.env)?;
            rewards.push(r);
            self.pulls[i][c.arm] += 1;
            self.arm_totals[c.arm] += 1;
        }

        let mut sc = StepCost::default();
        let mut sent = vec![0u64; n];
        if sim.cfg.variant == Variant::EstUcb {
            self.consensus_phase(t, &choices, &rewards, &mut sc, &mut sent)?;
        } else {
            self.message_phase(t, &choices, &rewards, &mut sc, &mut sent);
        }

        if let Some(tr) = self.trace.as_mut() {
            tr.pulls.push(choices.iter().map(|c| c.arm).collect());
            tr.initiated.push(choices.iter().map(|c| c.initiate).collect());
            tr.sent.push(sent);
            tr.pull_counts.push(self.pulls.clone());
            tr.obs_counts.push(if sim.cfg.variant == Variant::EstUcb {
                self.consensus.iter().map(|e| e.count.clone()).collect()
            } else {
                self.est
                    .iter()
                    .map(|e| (0..e.num_arms()).map(|k| e.obs_count(k) as f64).collect())
                    .collect()
            });
        }
        Ok(sc)
    }

    fn message_phase(
        &mut self,
        t: u64,
        choices: &[Choice],
        rewards: &[f64],
        sc: &mut StepCost,
        sent: &mut [u64],
    ) {
        let sim = self.sim;
        let g = &sim.topology;
        let n = g.num_agents();

        let bundles: Vec<Vec<RewardMessage>> = (0..n)
            .map(|i| {
                let own = choices[i].initiate.then_some(RewardMessage {
                    origin: i,
                    origin_time: t,
                    arm: choices[i].arm,
                    reward: rewards[i],
                });
                self.reward_bufs[i].outgoing_bundle(own, t)
            })
            .collect();
        for (i, b) in bundles.iter().enumerate() {
            if g.degree(i) > 0 {
                sent[i] = b.len() as u64;
            }
        }

        let control_bundles: Option<Vec<Vec<LeaderActionMessage>>> =
            sim.leaders.as_ref().map(|a| {
                (0..n)
                    .map(|i| {
                        let own = a.is_leader(i).then_some(LeaderActionMessage {
                            origin: i,
                            origin_time: t,
                            arm: choices[i].arm,
                            suboptimal_flag: choices[i].leader_flag,
                        });
                        self.control_bufs[i].outgoing_bundle(own, t)
                    })
                    .collect()
            });

        // Own pulls are folded in first; the gate already read the old state.
        for (i, c) in choices.iter().enumerate() {
            self.est[i].update(c.arm, rewards[i], true);
            if let Some(ts) = self.thompson.get_mut(i) {
                ts.update(c.arm, rewards[i]);
            }
        }

        let est = &mut self.est;
        let thompson = &mut self.thompson;
        let mut audit = self.trace.as_mut().map(|tr| &mut tr.audit);
        let delivery = deliver_and_incorporate(g, &bundles, &mut self.reward_bufs, t, |j, m| {
            est[j].update(m.arm, m.reward, false);
            if let Some(ts) = thompson.get_mut(j) {
                ts.update(m.arm, m.reward);
            }
            if let Some(a) = audit.as_mut() {
                a.push(audit_record(t, j, m.origin, m.origin_time, m.arm));
            }
        });
        sc.cost = delivery.transmitted;

        if let (Some(cb), Some(a)) = (control_bundles, sim.leaders.as_ref()) {
            let histories = &mut self.histories;
            let mut audit = self.trace.as_mut().map(|tr| &mut tr.control_audit);
            let delivery = deliver_and_incorporate(g, &cb, &mut self.control_bufs, t, |j, m| {
                if a.leader_of[j] == m.origin && j != m.origin {
                    histories[j].record(*m);
                }
                if let Some(au) = audit.as_mut() {
                    au.push(audit_record(t, j, m.origin, m.origin_time, m.arm));
                }
            });
            sc.control = delivery.transmitted;
        }
    }

    fn consensus_phase(
        &mut self,
        t: u64,
        choices: &[Choice],
        rewards: &[f64],
        sc: &mut StepCost,
        sent: &mut [u64],
    ) -> Result<(), EngineError> {
        let sim = self.sim;
        let g = &sim.topology;
        let k = sim.env.num_arms();
        let snapshots: Vec<Option<EstimateSnapshot>> = choices
            .iter()
            .enumerate()
            .map(|(i, c)| {
                c.initiate.then(|| {
                    let est = &self.consensus[i];
                    let flagged = match sim.cfg.gate {
                        Gate::Comex if t > 1 => {
                            let best = consensus_best(est);
                            (0..k).map(|a| a != best).collect()
                        }
                        _ => vec![true; k],
                    };
                    EstimateSnapshot::capture(i, t, est, flagged)
                })
            })
            .collect();
        for (i, s) in snapshots.iter().enumerate() {
            if let Some(s) = s {
                if g.degree(i) > 0 {
                    sent[i] = 1;
                    sc.cost += 1;
                    sc.cost_per_arm += s.flagged_count() as u64;
                }
            }
        }
        let own: Vec<Option<(usize, f64)>> = choices
            .iter()
            .zip(rewards)
            .map(|(c, &r)| Some((c.arm, r)))
            .collect();
        let weights = sim.weights.as_ref().expect("weights built");
        self.consensus = consensus_step(&self.consensus, &snapshots, weights, &own)?;
        for (i, c) in choices.iter().enumerate() {
            self.est[i].update(c.arm, rewards[i], true);
        }
        Ok(())
    }
}

fn audit_record(step: u64, receiver: usize, origin: usize, origin_time: u64, arm: usize) -> AuditRecord {
    AuditRecord {
        step,
        origin,
        origin_time,
        arm,
        hop_count: step - origin_time + 1,
        receiver,
    }
}

#[derive(Debug, Default)]
struct StepCost {
    cost: u64,
    cost_per_arm: u64,
    control: u64,
}
