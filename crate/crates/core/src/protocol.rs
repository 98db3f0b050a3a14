//! Message creation, gamma-hop relaying and the estimate-averaging step.
//!
//! Timing convention: a message born at step `t` is transmitted by its
//! origin at `t` and reaches agents at hop distance `d` during the receive
//! phase of step `t + d - 1`. A held message of age `a = now - origin_time`
//! is relayed once when `1 <= a <= gamma - 1` and dropped once `a > gamma`.

use std::collections::BTreeMap;
use std::io::{self, Write};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::Topology;
use crate::policy::{instantaneously_best, AgentEstimates};

#[derive(Debug, Error, PartialEq)]
pub enum ProtocolError {
    #[error("weight row {row} sums to {sum}, not 1")]
    NotRowStochastic { row: usize, sum: f64 },
    #[error("weight row {row} has a negative entry")]
    NegativeWeight { row: usize },
    #[error("follower {follower} has no action message from leader {leader} for step {origin_time}")]
    MissingLeaderMessage {
        follower: usize,
        leader: usize,
        origin_time: u64,
    },
}

/// Identity of a message: at most one message per agent per step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct MessageId {
    pub origin: usize,
    pub origin_time: u64,
}

pub trait Message: Clone {
    fn id(&self) -> MessageId;
}

/// `<i, t, A_t, X_t>`: one observed reward.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RewardMessage {
    pub origin: usize,
    pub origin_time: u64,
    pub arm: usize,
    pub reward: f64,
}

impl Message for RewardMessage {
    fn id(&self) -> MessageId {
        MessageId {
            origin: self.origin,
            origin_time: self.origin_time,
        }
    }
}

/// A leader's action broadcast, flagged when the action was instantaneously
/// suboptimal for the leader.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct LeaderActionMessage {
    pub origin: usize,
    pub origin_time: u64,
    pub arm: usize,
    pub suboptimal_flag: bool,
}

impl Message for LeaderActionMessage {
    fn id(&self) -> MessageId {
        MessageId {
            origin: self.origin,
            origin_time: self.origin_time,
        }
    }
}

/// Which pulls an agent shares.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Gate {
    /// Share only instantaneously suboptimal pulls.
    Comex,
    /// Share every pull.
    Full,
}

impl Gate {
    pub fn name(&self) -> &'static str {
        match self {
            Gate::Comex => "comex",
            Gate::Full => "full",
        }
    }

    /// `est` must hold the estimates from the end of the previous step.
    pub fn initiates(&self, est: &AgentEstimates, pulled_arm: usize) -> bool {
        match self {
            Gate::Comex => comex_gate(est, pulled_arm),
            Gate::Full => full_gate(),
        }
    }
}

/// True iff `pulled_arm` is not the argmax of the previous-step means.
pub fn comex_gate(est: &AgentEstimates, pulled_arm: usize) -> bool {
    pulled_arm != instantaneously_best(est)
}

pub fn full_gate() -> bool {
    true
}

/// Identities seen within the last `gamma + 1` origin times, one bit per
/// origin agent. Anything older can no longer arrive.
#[derive(Debug, Clone)]
struct SeenWindow {
    times: Vec<Option<u64>>,
    bits: Vec<Vec<bool>>,
}

impl SeenWindow {
    fn new(n_agents: usize, span: usize) -> Self {
        Self {
            times: vec![None; span],
            bits: vec![vec![false; n_agents]; span],
        }
    }

    fn slot(&self, t: u64) -> usize {
        (t % self.times.len() as u64) as usize
    }

    fn contains(&self, id: MessageId) -> bool {
        let s = self.slot(id.origin_time);
        self.times[s] == Some(id.origin_time) && self.bits[s][id.origin]
    }

    /// Returns false if the identity was already present or has fallen out
    /// of the window.
    fn insert(&mut self, id: MessageId) -> bool {
        let s = self.slot(id.origin_time);
        match self.times[s] {
            Some(t) if t == id.origin_time => {}
            Some(t) if t > id.origin_time => return false,
            _ => {
                self.times[s] = Some(id.origin_time);
                self.bits[s].iter_mut().for_each(|b| *b = false);
            }
        }
        !std::mem::replace(&mut self.bits[s][id.origin], true)
    }
}

#[derive(Debug, Clone)]
struct Held<M> {
    msg: M,
    forwarded: bool,
}

/// One agent's relay store.
#[derive(Debug, Clone)]
pub struct MessageBuffer<M> {
    gamma: u64,
    held: Vec<Held<M>>,
    seen: SeenWindow,
}

impl<M: Message> MessageBuffer<M> {
    pub fn new(n_agents: usize, gamma: usize) -> Self {
        assert!(gamma >= 1);
        Self {
            gamma: gamma as u64,
            held: Vec::new(),
            seen: SeenWindow::new(n_agents, gamma + 1),
        }
    }

    pub fn gamma(&self) -> usize {
        self.gamma as usize
    }

    /// Drops held messages older than gamma.
    pub fn age_to(&mut self, now: u64) {
        let gamma = self.gamma;
        self.held
            .retain(|h| now.saturating_sub(h.msg.id().origin_time) <= gamma);
    }

    pub fn held(&self) -> impl Iterator<Item = &M> {
        self.held.iter().map(|h| &h.msg)
    }

    pub fn has_seen(&self, id: MessageId) -> bool {
        self.seen.contains(id)
    }

    /// Builds this step's transmission: the agent's own new message (if any)
    /// followed by every held message of age `1..=gamma-1` not yet relayed.
    pub fn outgoing_bundle(&mut self, own_new: Option<M>, now: u64) -> Vec<M> {
        self.age_to(now);
        let mut bundle = Vec::new();
        if let Some(m) = own_new {
            self.seen.insert(m.id());
            bundle.push(m);
        }
        for h in &mut self.held {
            let age = now - h.msg.id().origin_time;
            if !h.forwarded && age >= 1 && age < self.gamma {
                h.forwarded = true;
                bundle.push(h.msg.clone());
            }
        }
        bundle
    }

    /// Accepts a message received at `now`. Returns true exactly once per
    /// identity; duplicates and expired messages are dropped.
    pub fn receive(&mut self, msg: &M, now: u64) -> bool {
        let id = msg.id();
        if id.origin_time > now || now - id.origin_time > self.gamma {
            return false;
        }
        if !self.seen.insert(id) {
            return false;
        }
        self.held.push(Held {
            msg: msg.clone(),
            forwarded: false,
        });
        true
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Delivery {
    /// Single messages put on the wire (bundle sizes of agents that have at
    /// least one neighbour).
    pub transmitted: u64,
    /// First-time receptions.
    pub incorporated: u64,
}

/// Synchronously delivers every bundle to the sender's neighbours. The
/// callback fires once per (receiver, message identity), receivers in index
/// order and senders in index order within a receiver.
pub fn deliver_and_incorporate<M: Message>(
    topology: &Topology,
    bundles: &[Vec<M>],
    buffers: &mut [MessageBuffer<M>],
    now: u64,
    mut incorporate: impl FnMut(usize, &M),
) -> Delivery {
    let mut out = Delivery::default();
    for (i, b) in bundles.iter().enumerate() {
        if topology.degree(i) > 0 {
            out.transmitted += b.len() as u64;
        }
    }
    for (j, buf) in buffers.iter_mut().enumerate() {
        for &i in topology.neighbors(j) {
            for m in &bundles[i] {
                if m.id().origin != j && buf.receive(m, now) {
                    out.incorporated += 1;
                    incorporate(j, m);
                }
            }
        }
    }
    out
}

/// One incorporation event, for dedup and delay audits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AuditRecord {
    pub step: u64,
    pub origin: usize,
    pub origin_time: u64,
    pub arm: usize,
    pub hop_count: u64,
    pub receiver: usize,
}

pub const AUDIT_HEADER: &str = "step,origin,origin_time,arm,hop_count,receiver";

pub fn write_audit_csv<W: Write>(mut w: W, records: &[AuditRecord]) -> io::Result<()> {
    writeln!(w, "{AUDIT_HEADER}")?;
    for r in records {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            r.step, r.origin, r.origin_time, r.arm, r.hop_count, r.receiver
        )?;
    }
    Ok(())
}

/// Real-valued per-arm count and reward-sum estimates used by estimate
/// sharing.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConsensusEstimates {
    pub count: Vec<f64>,
    pub sum: Vec<f64>,
}

impl ConsensusEstimates {
    pub fn new(num_arms: usize) -> Self {
        Self {
            count: vec![0.0; num_arms],
            sum: vec![0.0; num_arms],
        }
    }

    pub fn num_arms(&self) -> usize {
        self.count.len()
    }

    pub fn mean_hat(&self, k: usize) -> f64 {
        if self.count[k] > 0.0 {
            self.sum[k] / self.count[k]
        } else {
            0.0
        }
    }

    pub fn incorporate(&mut self, arm: usize, reward: f64) {
        self.count[arm] += 1.0;
        self.sum[arm] += reward;
    }
}

/// `<i, t, N_hat, mu_hat>` with the arms the origin is willing to average.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimateSnapshot {
    pub origin: usize,
    pub origin_time: u64,
    pub count: Vec<f64>,
    pub mean: Vec<f64>,
    pub flagged: Vec<bool>,
}

impl EstimateSnapshot {
    pub fn capture(origin: usize, origin_time: u64, est: &ConsensusEstimates, flagged: Vec<bool>) -> Self {
        Self {
            origin,
            origin_time,
            count: est.count.clone(),
            mean: (0..est.num_arms()).map(|k| est.mean_hat(k)).collect(),
            flagged,
        }
    }

    pub fn flagged_count(&self) -> usize {
        self.flagged.iter().filter(|&&f| f).count()
    }

    fn sum(&self, k: usize) -> f64 {
        self.mean[k] * self.count[k]
    }
}

/// Sparse row-stochastic weights, diagonal included.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix {
    rows: Vec<Vec<(usize, f64)>>,
}

impl WeightMatrix {
    pub fn identity(n: usize) -> Self {
        Self {
            rows: (0..n).map(|i| vec![(i, 1.0)]).collect(),
        }
    }

    /// `w_ij = 1 / (1 + max(d_i, d_j))` on edges, the diagonal takes the rest.
    pub fn metropolis(g: &Topology) -> Self {
        let rows = (0..g.num_agents())
            .map(|i| {
                let mut row: Vec<(usize, f64)> = g
                    .neighbors(i)
                    .iter()
                    .map(|&j| (j, 1.0 / (1.0 + g.degree(i).max(g.degree(j)) as f64)))
                    .collect();
                let off: f64 = row.iter().map(|&(_, w)| w).sum();
                row.push((i, 1.0 - off));
                row.sort_by_key(|&(j, _)| j);
                row
            })
            .collect();
        Self { rows }
    }

    pub fn from_dense(dense: &[Vec<f64>]) -> Self {
        Self {
            rows: dense
                .iter()
                .map(|r| {
                    r.iter()
                        .enumerate()
                        .filter(|(_, &w)| w != 0.0)
                        .map(|(j, &w)| (j, w))
                        .collect()
                })
                .collect(),
        }
    }

    pub fn num_agents(&self) -> usize {
        self.rows.len()
    }

    pub fn row(&self, i: usize) -> &[(usize, f64)] {
        &self.rows[i]
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.rows[i]
            .iter()
            .find(|&&(c, _)| c == j)
            .map_or(0.0, |&(_, w)| w)
    }

    pub fn validate(&self) -> Result<(), ProtocolError> {
        for (row, r) in self.rows.iter().enumerate() {
            if r.iter().any(|&(_, w)| w < 0.0) {
                return Err(ProtocolError::NegativeWeight { row });
            }
            let sum: f64 = r.iter().map(|&(_, w)| w).sum();
            if (sum - 1.0).abs() > 1e-9 {
                return Err(ProtocolError::NotRowStochastic { row, sum });
            }
        }
        Ok(())
    }
}

/// One averaging round followed by each agent's own new pull.
///
/// Agents with a snapshot this step take part. For a participant `i` and an
/// arm `k` it flags, `(count, sum)` becomes the weighted average over `i` and
/// every participating neighbour that also flags `k`; weight assigned to
/// anyone else stays on `i`'s own value. Non-participants and unflagged arms
/// keep their values. With symmetric weights the total count and sum of each
/// arm are preserved by the averaging.
pub fn consensus_step(
    current: &[ConsensusEstimates],
    snapshots: &[Option<EstimateSnapshot>],
    weights: &WeightMatrix,
    own_pulls: &[Option<(usize, f64)>],
) -> Result<Vec<ConsensusEstimates>, ProtocolError> {
    weights.validate()?;
    let mut next = current.to_vec();
    for (i, est) in next.iter_mut().enumerate() {
        if let Some(me) = &snapshots[i] {
            for k in (0..est.num_arms()).filter(|&k| me.flagged[k]) {
                let (mut count, mut sum) = (0.0, 0.0);
                for &(j, w) in weights.row(i) {
                    match &snapshots[j] {
                        Some(s) if j != i && s.flagged[k] => {
                            count += w * s.count[k];
                            sum += w * s.sum(k);
                        }
                        _ => {
                            count += w * current[i].count[k];
                            sum += w * current[i].sum[k];
                        }
                    }
                }
                est.count[k] = count;
                est.sum[k] = sum;
            }
        }
        if let Some((arm, reward)) = own_pulls[i] {
            est.incorporate(arm, reward);
        }
    }
    Ok(next)
}

/// Leader action messages a follower has received from its own leader,
/// keyed by origin time.
#[derive(Debug, Clone, Default)]
pub struct LeaderHistory {
    actions: BTreeMap<u64, LeaderActionMessage>,
}

impl LeaderHistory {
    pub fn record(&mut self, msg: LeaderActionMessage) {
        self.actions.insert(msg.origin_time, msg);
    }

    pub fn get(&self, origin_time: u64) -> Option<&LeaderActionMessage> {
        self.actions.get(&origin_time)
    }

    /// Forgets actions older than `origin_time`.
    pub fn prune_before(&mut self, origin_time: u64) {
        self.actions = self.actions.split_off(&origin_time);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FollowerDecision {
    pub arm: usize,
    /// Whether the follower shares the reward of this pull under ComEx.
    pub flagged: bool,
    pub copied: Option<LeaderActionMessage>,
}

/// A follower at distance `distance` from `leader` replays the leader's
/// action from `t - distance`. Before that action can have arrived it pulls
/// a uniformly random arm, which is always shared like the first-step
/// bootstrap.
pub fn follower_action<R: Rng + ?Sized>(
    follower: usize,
    leader: usize,
    distance: usize,
    history: &LeaderHistory,
    t: u64,
    num_arms: usize,
    rng: &mut R,
) -> Result<FollowerDecision, ProtocolError> {
    let d = distance as u64;
    if t <= d {
        return Ok(FollowerDecision {
            arm: rng.random_range(0..num_arms),
            flagged: true,
            copied: None,
        });
    }
    let origin_time = t - d;
    let msg = history
        .get(origin_time)
        .copied()
        .ok_or(ProtocolError::MissingLeaderMessage {
            follower,
            leader,
            origin_time,
        })?;
    Ok(FollowerDecision {
        arm: msg.arm,
        flagged: msg.suboptimal_flag,
        copied: Some(msg),
    })
}
