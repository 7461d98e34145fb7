//! Synchronous round loop.
//!
//! Round `t` proceeds as follows:
//!
//! 1. the adversary observes the snapshot taken at the start of round
//!    `max(1, t - lateness)` (plus the pending round for the strong
//!    strategy) and returns `B_t`;
//! 2. messages sent in round `t - 1` are delivered to every receiver not in
//!    `B_t`; the rest are dropped, never buffered;
//! 3. nodes in `B_t` take their blocked transition;
//! 4. every other node runs its protocol step, in `NodeId` order, on its own
//!    stream;
//! 5. outgoing messages are buffered for round `t + 1`.
//!
//! With [`BlockSemantics::Carryover`] the adversary announces `B_{t+1}` at
//! the end of round `t >= 2`: those nodes discard the value they just computed
//! and their round-`t` messages are withdrawn before the termination check.
//! Nothing is announced before the first update step, so `B_1 = B_2 = {}`.

use std::collections::{BTreeMap, VecDeque};
use std::fmt;
use std::sync::Arc;

use rand::Rng;

use crate::adversary::{BlockSet, Observation, Pending, Strategy};
use crate::config::{validate_config, BlockSemantics, ConfigError, ProtocolKind, TrialConfig};
use crate::protocol::{median3, BinaryNodeState, BinaryParams, MultiNodeState, MultiParams};
use crate::rng::{derive_streams, Streams};
use crate::types::{
    BinaryValue, Bit, Decision, Fraction, Message, MultiValue, NodeId, Outcome, SnapshotValues,
    SystemSnapshot, TrialResult,
};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EngineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("round {round}: adversary blocked {size} nodes, budget is {budget}")]
    OverBudget { round: u32, size: usize, budget: usize },
    #[error("round {round}: adversary blocked nonexistent node {id}")]
    UnknownNode { round: u32, id: NodeId },
}

/// `Y - X` stored exactly; displays as the half-integer `(Y - X) / 2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Imbalance(pub i64);

impl Imbalance {
    pub fn as_f64(self) -> f64 {
        self.0 as f64 / 2.0
    }
}

impl fmt::Display for Imbalance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sign = if self.0 < 0 { "-" } else { "" };
        let a = self.0.unsigned_abs();
        if a % 2 == 0 {
            write!(f, "{sign}{}", a / 2)
        } else {
            write!(f, "{sign}{}.5", a / 2)
        }
    }
}

/// State at the end of one round.
///
/// For the multi-value protocol `ones` counts holders of the current global
/// maximum and `zeros` every other defined node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoundRecord {
    pub round: u32,
    pub zeros: usize,
    pub ones: usize,
    pub defined: usize,
    pub bot: usize,
    pub delta: Imbalance,
    pub blocked: usize,
    pub decided_0: usize,
    pub decided_1: usize,
    pub messages_sent: u64,
    pub messages_delivered: u64,
    pub messages_dropped: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Trajectory {
    pub rows: Vec<RoundRecord>,
}

impl Trajectory {
    pub const CSV_HEADER: &'static str = "round,X,Y,n_t,bot,delta,blocked,decided_0,decided_1";

    pub fn to_csv(&self) -> String {
        let mut s = String::from(Self::CSV_HEADER);
        s.push('\n');
        for r in &self.rows {
            s.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                r.round, r.zeros, r.ones, r.defined, r.bot, r.delta, r.blocked, r.decided_0, r.decided_1
            ));
        }
        s
    }

    pub fn last(&self) -> Option<&RoundRecord> {
        self.rows.last()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    Continue,
    Success(MultiValue),
    AdversaryWin,
    Timeout,
}

/// Termination rule of the binary experiments, applied to an end-of-round
/// record: success once `|X - Y| >= (2/3 - epsilon) n` (checked first), adversary
/// win once at least half of the nodes are undefined, timeout at `max_rounds`.
pub fn check_termination(
    rec: &RoundRecord,
    n: usize,
    epsilon: Fraction,
    max_rounds: u32,
) -> Termination {
    let diff = rec.zeros.abs_diff(rec.ones) as i128;
    let (num, den) = (epsilon.num() as i128, epsilon.den() as i128);
    // 3 * den * |X - Y| >= (2 den - 3 num) n
    if 3 * den * diff >= (2 * den - 3 * num) * n as i128 {
        let v = if rec.ones > rec.zeros { 1 } else { 0 };
        return Termination::Success(MultiValue::Val(v));
    }
    if 2 * rec.bot >= n {
        return Termination::AdversaryWin;
    }
    if rec.round >= max_rounds {
        return Termination::Timeout;
    }
    Termination::Continue
}

enum Nodes {
    Binary {
        params: BinaryParams,
        inputs: Vec<Bit>,
        states: Vec<BinaryNodeState>,
        in_flight: Vec<Message<Bit>>,
    },
    Multi {
        params: MultiParams,
        inputs: Vec<MultiValue>,
        states: Vec<MultiNodeState>,
        in_flight: Vec<Message<MultiValue>>,
    },
    Median {
        values: Vec<Bit>,
    },
}

#[derive(Default)]
struct RoundTraffic {
    sent: u64,
    delivered: u64,
    dropped: u64,
}

/// Binary inputs: `ceil((n+s)/2)` ones on the lowest ids, zeros elsewhere.
pub fn binary_inputs(n: usize, bias: u64) -> Vec<Bit> {
    let ones = ((n as u64 + bias).div_ceil(2)).min(n as u64) as usize;
    (0..n)
        .map(|i| if i < ones { Bit::One } else { Bit::Zero })
        .collect()
}

/// One trial in progress.
pub struct Simulation {
    cfg: TrialConfig,
    n: usize,
    max_rounds: u32,
    streams: Streams,
    strategy: Strategy,
    round: u32,
    nodes: Nodes,
    snapshots: VecDeque<Arc<SystemSnapshot>>,
    announced: Option<BlockSet>,
    observed: Vec<Option<u32>>,
    trajectory: Trajectory,
    traffic_total: RoundTraffic,
    outcome: Option<(Outcome, u32)>,
    x_star: Option<u64>,
    initial_active: Option<usize>,
    decided: Vec<Option<Decision>>,
}

impl Simulation {
    pub fn new(cfg: TrialConfig) -> Result<Self, EngineError> {
        let cfg = validate_config(cfg)?;
        let n = cfg.n;
        let mut streams = derive_streams(cfg.seed, n);
        let nodes = match cfg.protocol {
            ProtocolKind::BinaryMajority => Nodes::Binary {
                params: BinaryParams::from_config(&cfg),
                inputs: binary_inputs(n, cfg.initial_bias),
                states: Vec::with_capacity(n),
                in_flight: Vec::new(),
            },
            ProtocolKind::MultiValue => {
                let domain = cfg.mv_domain_size();
                let inputs = (0..n)
                    .map(|_| MultiValue::Val(streams.engine.gen_range(1..=domain)))
                    .collect();
                Nodes::Multi {
                    params: MultiParams::from_config(&cfg),
                    inputs,
                    states: Vec::with_capacity(n),
                    in_flight: Vec::new(),
                }
            }
            ProtocolKind::MedianPull => Nodes::Median {
                values: binary_inputs(n, cfg.initial_bias),
            },
        };
        let initial_values = match &nodes {
            Nodes::Binary { inputs, .. } => {
                SnapshotValues::Binary(inputs.iter().map(|&b| b.into()).collect())
            }
            Nodes::Multi { inputs, .. } => SnapshotValues::Multi(inputs.clone()),
            Nodes::Median { values } => {
                SnapshotValues::Binary(values.iter().map(|&b| b.into()).collect())
            }
        };
        let initial = SystemSnapshot {
            round: 1,
            values: initial_values,
            blocked_now: vec![false; n],
            active: vec![false; n],
            decided: vec![None; n],
        };
        Ok(Simulation {
            max_rounds: cfg.effective_max_rounds(),
            strategy: Strategy(cfg.adversary),
            cfg,
            n,
            streams,
            round: 0,
            nodes,
            snapshots: VecDeque::from([Arc::new(initial)]),
            announced: None,
            observed: Vec::new(),
            trajectory: Trajectory::default(),
            traffic_total: RoundTraffic::default(),
            outcome: None,
            x_star: None,
            initial_active: None,
            decided: vec![None; n],
        })
    }

    pub fn config(&self) -> &TrialConfig {
        &self.cfg
    }

    /// Last completed round (0 before the first step).
    pub fn round(&self) -> u32 {
        self.round
    }

    pub fn trajectory(&self) -> &Trajectory {
        &self.trajectory
    }

    pub fn outcome(&self) -> Option<(Outcome, u32)> {
        self.outcome
    }

    /// Round of the snapshot the adversary saw in each executed round, or
    /// `None` when the block set was announced at the end of the previous round.
    pub fn observed_rounds(&self) -> &[Option<u32>] {
        &self.observed
    }

    /// Snapshot taken at the start of `round`, if still retained.
    pub fn snapshot(&self, round: u32) -> Option<Arc<SystemSnapshot>> {
        self.snapshots.iter().find(|s| s.round == round).cloned()
    }

    /// Messages currently buffered for delivery in the next round.
    pub fn in_flight_senders(&self) -> Vec<NodeId> {
        match &self.nodes {
            Nodes::Binary { in_flight, .. } => in_flight.iter().map(|m| m.from).collect(),
            Nodes::Multi { in_flight, .. } => in_flight.iter().map(|m| m.from).collect(),
            Nodes::Median { .. } => Vec::new(),
        }
    }

    pub fn is_finished(&self) -> bool {
        match self.outcome {
            None => false,
            Some(_) => {
                let protocol_done = matches!(self.nodes, Nodes::Multi { .. });
                let all_decided = matches!(self.nodes, Nodes::Binary { .. })
                    && self.decided.iter().all(Option::is_some);
                protocol_done
                    || !self.cfg.continue_after_outcome
                    || all_decided
                    || self.round >= self.max_rounds
            }
        }
    }

    fn observation_round(&self, t: u32) -> u32 {
        t.saturating_sub(self.cfg.lateness).max(1)
    }

    fn choose_blocks(&mut self, t: u32, pending: Option<Pending<'_>>) -> Result<BlockSet, EngineError> {
        let obs_round = self.observation_round(t);
        let snapshot = self
            .snapshot(obs_round)
            .expect("snapshots are retained for lateness + 1 rounds");
        let obs = Observation {
            snapshot: &snapshot,
            round: t,
            budget: self.cfg.budget(),
            pending,
        };
        let set = self.strategy.choose(&obs, &mut self.streams.adversary);
        if set.len() > obs.budget {
            return Err(EngineError::OverBudget {
                round: t,
                size: set.len(),
                budget: obs.budget,
            });
        }
        if let Some(&id) = set.ids().iter().find(|id| id.index() >= self.n) {
            return Err(EngineError::UnknownNode { round: t, id });
        }
        Ok(set)
    }

    /// Execute one round and report the termination status after it.
    pub fn step_round(&mut self) -> Result<Termination, EngineError> {
        let t = self.round + 1;
        let mut traffic = RoundTraffic::default();
        let announced = self.announced.take();
        let carryover = self.cfg.effective_block_semantics() == BlockSemantics::Carryover;
        let blocks = match announced {
            Some(set) => {
                self.observed.push(None);
                set
            }
            None if carryover => {
                self.observed.push(None);
                BlockSet::empty()
            }
            None => {
                self.observed.push(Some(self.observation_round(t)));
                if self.strategy.needs_pending() {
                    self.strong_blocks(t)?
                } else {
                    self.choose_blocks(t, None)?
                }
            }
        };
        let blocked = blocks.mask(self.n);

        match self.cfg.protocol {
            ProtocolKind::BinaryMajority => self.binary_round(t, &blocked, &mut traffic)?,
            ProtocolKind::MultiValue => self.multi_round(t, &blocked, &mut traffic),
            ProtocolKind::MedianPull => self.median_round(t, &blocked, &mut traffic),
        }

        self.round = t;
        let rec = self.record(t, blocks.len(), &traffic);
        self.traffic_total.sent += traffic.sent;
        self.traffic_total.delivered += traffic.delivered;
        self.traffic_total.dropped += traffic.dropped;
        self.push_snapshot(t + 1, blocked);

        let status = match &self.nodes {
            Nodes::Multi { params, .. } => {
                if t == params.iterations + 1 {
                    if 2 * rec.bot >= self.n {
                        Termination::AdversaryWin
                    } else {
                        Termination::Success(self.plurality_value().unwrap_or(MultiValue::Bot))
                    }
                } else if t >= self.max_rounds {
                    Termination::Timeout
                } else {
                    Termination::Continue
                }
            }
            _ => check_termination(&rec, self.n, self.cfg.epsilon, self.max_rounds),
        };
        self.trajectory.rows.push(rec);
        if self.outcome.is_none() {
            let outcome = match status {
                Termination::Continue => None,
                Termination::Success(v) => Some(Outcome::ConsensusOn(v)),
                Termination::AdversaryWin => Some(Outcome::AdversaryWin),
                Termination::Timeout => Some(Outcome::Timeout),
            };
            self.outcome = outcome.map(|o| (o, t));
        }
        if self.outcome.is_none() && t >= self.max_rounds {
            self.outcome = Some((Outcome::Timeout, t));
        }
        Ok(status)
    }

    fn strong_blocks(&mut self, t: u32) -> Result<BlockSet, EngineError> {
        match &self.nodes {
            Nodes::Binary {
                params,
                inputs,
                states,
                in_flight,
            } => {
                let tentative: Vec<BinaryValue> = if t == 1 {
                    inputs.iter().map(|&b| b.into()).collect()
                } else {
                    let inboxes = deliver(in_flight, &vec![false; self.n], &mut RoundTraffic::default());
                    let mut scratch = Vec::new();
                    states
                        .iter()
                        .enumerate()
                        .map(|(i, st)| {
                            let mut st = st.clone();
                            let mut rng = self.streams.nodes[i].clone();
                            scratch.clear();
                            st.step(NodeId::from(i), &inboxes[i], false, t, params, &mut rng, &mut scratch);
                            st.value
                        })
                        .collect()
                };
                self.choose_blocks(t, Some(Pending::Binary { tentative: &tentative }))
            }
            Nodes::Median { values } => {
                let targets = self.peek_median_targets();
                let tentative: Vec<Bit> = (0..self.n)
                    .map(|u| {
                        let [a, b] = targets[u];
                        median3(values[u], values[a.index()], values[b.index()])
                    })
                    .collect();
                let own = values.clone();
                self.choose_blocks(
                    t,
                    Some(Pending::Median {
                        own: &own,
                        targets: &targets,
                        tentative: &tentative,
                    }),
                )
            }
            Nodes::Multi { .. } => unreachable!("rejected by validate_config"),
        }
    }

    fn peek_median_targets(&self) -> Vec<[NodeId; 2]> {
        self.streams
            .nodes
            .iter()
            .map(|rng| draw_targets(&mut rng.clone(), self.n))
            .collect()
    }

    fn binary_round(&mut self, t: u32, blocked: &[bool], traffic: &mut RoundTraffic) -> Result<(), EngineError> {
        let n = self.n;
        let Nodes::Binary {
            params,
            inputs,
            states,
            in_flight,
        } = &mut self.nodes
        else {
            unreachable!()
        };
        let mut out = Vec::with_capacity(n * params.k);
        if t == 1 {
            states.clear();
            for i in 0..n {
                states.push(BinaryNodeState::round_one(
                    NodeId::from(i),
                    inputs[i],
                    blocked[i],
                    params,
                    &mut self.streams.nodes[i],
                    &mut out,
                ));
            }
        } else {
            let inboxes = deliver(in_flight, blocked, traffic);
            for (i, st) in states.iter_mut().enumerate() {
                st.step(
                    NodeId::from(i),
                    &inboxes[i],
                    blocked[i],
                    t,
                    params,
                    &mut self.streams.nodes[i],
                    &mut out,
                );
            }
        }
        traffic.sent += out.len() as u64;
        *in_flight = out;

        if self.cfg.effective_block_semantics() == BlockSemantics::Carryover && t >= 2 {
            let next = self.choose_blocks(t + 1, None)?;
            let Nodes::Binary { states, in_flight, .. } = &mut self.nodes else {
                unreachable!()
            };
            let withdrawn = next.mask(n);
            for id in next.ids() {
                states[id.index()].discard();
            }
            let before = in_flight.len();
            in_flight.retain(|m| !withdrawn[m.from.index()]);
            traffic.dropped += (before - in_flight.len()) as u64;
            self.announced = Some(next);
        }

        let Nodes::Binary { states, .. } = &mut self.nodes else {
            unreachable!()
        };
        for (i, st) in states.iter_mut().enumerate() {
            if self.decided[i].is_none() {
                if let Some(b) = st.try_decide(t) {
                    self.decided[i] = Some(Decision {
                        value: MultiValue::Val(b.as_u64()),
                        round: t,
                    });
                }
            }
        }
        Ok(())
    }

    fn multi_round(&mut self, t: u32, blocked: &[bool], traffic: &mut RoundTraffic) {
        let n = self.n;
        let Nodes::Multi {
            params,
            inputs,
            states,
            in_flight,
        } = &mut self.nodes
        else {
            unreachable!()
        };
        let mut out = Vec::new();
        if t == 1 {
            states.clear();
            for i in 0..n {
                states.push(MultiNodeState::init(
                    NodeId::from(i),
                    inputs[i],
                    blocked[i],
                    params,
                    &mut self.streams.nodes[i],
                    &mut out,
                ));
            }
            self.x_star = states.iter().filter_map(|s| s.value.value()).max();
            self.initial_active = Some(states.iter().filter(|s| s.active).count());
        } else if t <= params.iterations + 1 {
            let inboxes = deliver(in_flight, blocked, traffic);
            for (i, st) in states.iter_mut().enumerate() {
                st.step(
                    NodeId::from(i),
                    &inboxes[i],
                    blocked[i],
                    t - 1,
                    params,
                    &mut self.streams.nodes[i],
                    &mut out,
                );
            }
            if t == params.iterations + 1 {
                for (i, st) in states.iter().enumerate() {
                    self.decided[i] = Some(Decision {
                        value: st.decide(),
                        round: t,
                    });
                }
            }
        }
        traffic.sent += out.len() as u64;
        *in_flight = out;
    }

    fn median_round(&mut self, _t: u32, blocked: &[bool], traffic: &mut RoundTraffic) {
        let n = self.n;
        let Nodes::Median { values } = &mut self.nodes else {
            unreachable!()
        };
        let targets: Vec<[NodeId; 2]> = self
            .streams
            .nodes
            .iter_mut()
            .map(|rng| draw_targets(rng, n))
            .collect();
        let old = values.clone();
        for u in 0..n {
            if blocked[u] {
                continue;
            }
            traffic.sent += 2;
            let [a, b] = targets[u];
            if blocked[a.index()] || blocked[b.index()] {
                traffic.dropped += 2;
                continue;
            }
            traffic.delivered += 2;
            values[u] = crate::protocol::median_step(old[u], Some((old[a.index()], old[b.index()])));
        }
    }

    fn current_values(&self) -> SnapshotValues {
        match &self.nodes {
            Nodes::Binary { states, .. } => {
                SnapshotValues::Binary(states.iter().map(|s| s.value).collect())
            }
            Nodes::Multi { states, .. } => {
                SnapshotValues::Multi(states.iter().map(|s| s.value).collect())
            }
            Nodes::Median { values } => {
                SnapshotValues::Binary(values.iter().map(|&b| b.into()).collect())
            }
        }
    }

    fn histogram(&self) -> BTreeMap<MultiValue, usize> {
        let mut h = BTreeMap::new();
        match self.current_values() {
            SnapshotValues::Binary(v) => {
                for x in v {
                    *h.entry(MultiValue::from(x)).or_insert(0) += 1;
                }
            }
            SnapshotValues::Multi(v) => {
                for x in v {
                    *h.entry(x).or_insert(0) += 1;
                }
            }
        }
        h
    }

    /// Most common defined value; ties go to the larger value.
    fn plurality_value(&self) -> Option<MultiValue> {
        self.histogram()
            .into_iter()
            .filter(|(v, _)| !v.is_bot())
            .max_by_key(|&(v, c)| (c, v))
            .map(|(v, _)| v)
    }

    fn record(&self, t: u32, blocked: usize, traffic: &RoundTraffic) -> RoundRecord {
        let (zeros, ones, bot) = match self.current_values() {
            SnapshotValues::Binary(v) => v.iter().fold((0, 0, 0), |(z, o, b), x| match x {
                BinaryValue::Zero => (z + 1, o, b),
                BinaryValue::One => (z, o + 1, b),
                BinaryValue::Undefined => (z, o, b + 1),
            }),
            SnapshotValues::Multi(v) => {
                let max = v.iter().copied().max().unwrap_or(MultiValue::Bot);
                let bot = v.iter().filter(|x| x.is_bot()).count();
                let top = if max.is_bot() { 0 } else { v.iter().filter(|&&x| x == max).count() };
                (self.n - bot - top, top, bot)
            }
        };
        let decided_0 = self
            .decided
            .iter()
            .filter(|d| matches!(d, Some(Decision { value: MultiValue::Val(0), .. })))
            .count();
        let decided_1 = self
            .decided
            .iter()
            .filter(|d| matches!(d, Some(Decision { value: MultiValue::Val(1), .. })))
            .count();
        RoundRecord {
            round: t,
            zeros,
            ones,
            defined: zeros + ones,
            bot,
            delta: Imbalance(ones as i64 - zeros as i64),
            blocked,
            decided_0,
            decided_1,
            messages_sent: traffic.sent,
            messages_delivered: traffic.delivered,
            messages_dropped: traffic.dropped,
        }
    }

    fn push_snapshot(&mut self, round: u32, blocked_now: Vec<bool>) {
        let active = match &self.nodes {
            Nodes::Multi { states, .. } => states.iter().map(|s| s.active).collect(),
            _ => vec![false; self.n],
        };
        let snap = SystemSnapshot {
            round,
            values: self.current_values(),
            blocked_now,
            active,
            decided: self.decided.iter().map(|d| d.map(|d| d.value)).collect(),
        };
        self.snapshots.push_back(Arc::new(snap));
        let keep = self.cfg.lateness as usize + 2;
        while self.snapshots.len() > keep {
            self.snapshots.pop_front();
        }
    }

    /// Run until the outcome is fixed; with `continue_after_outcome`, further
    /// until every node has produced an output or `max_rounds`.
    pub fn run(mut self) -> Result<(TrialResult, Trajectory), EngineError> {
        while !self.is_finished() {
            self.step_round()?;
        }
        Ok(self.finish())
    }

    fn finish(self) -> (TrialResult, Trajectory) {
        let (outcome, rounds) = self.outcome.expect("finished trials have an outcome");
        let final_counts = self.histogram();
        let reference = match outcome {
            Outcome::ConsensusOn(v) => Some(v),
            _ => self.plurality_value(),
        };
        let agreeing = reference.map_or(0, |v| final_counts.get(&v).copied().unwrap_or(0));
        let decisions = self
            .decided
            .iter()
            .enumerate()
            .filter_map(|(i, d)| d.map(|d| (NodeId::from(i), d)))
            .collect();
        let inputs: Vec<MultiValue> = match &self.nodes {
            Nodes::Binary { inputs, .. } => inputs.iter().map(|&b| MultiValue::Val(b.as_u64())).collect(),
            Nodes::Multi { inputs, .. } => inputs.clone(),
            Nodes::Median { .. } => Vec::new(),
        };
        let inputs: std::collections::BTreeSet<MultiValue> = inputs.into_iter().collect();
        let validity_violations = self
            .decided
            .iter()
            .flatten()
            .filter(|d| !d.value.is_bot() && !inputs.contains(&d.value))
            .count();
        let result = TrialResult {
            outcome,
            rounds,
            rounds_executed: self.round,
            final_counts,
            decisions,
            loss: self.n - agreeing,
            messages_sent: self.traffic_total.sent,
            messages_delivered: self.traffic_total.delivered,
            messages_dropped: self.traffic_total.dropped,
            x_star: self.x_star,
            initial_active: self.initial_active,
            validity_violations,
        };
        (result, self.trajectory)
    }
}

fn draw_targets(rng: &mut crate::rng::Stream, n: usize) -> [NodeId; 2] {
    [
        NodeId(rng.gen_range(0..n as u32)),
        NodeId(rng.gen_range(0..n as u32)),
    ]
}

/// Split in-flight messages into per-receiver inboxes, dropping those whose
/// receiver is blocked this round.
/// Per-receiver inboxes in one flat buffer, in send order.
struct Inboxes<P> {
    offsets: Vec<usize>,
    payloads: Vec<P>,
}

impl<P> std::ops::Index<usize> for Inboxes<P> {
    type Output = [P];

    fn index(&self, i: usize) -> &[P] {
        &self.payloads[self.offsets[i]..self.offsets[i + 1]]
    }
}

fn deliver<P: Copy>(in_flight: &[Message<P>], blocked: &[bool], traffic: &mut RoundTraffic) -> Inboxes<P> {
    let n = blocked.len();
    let mut offsets = vec![0usize; n + 1];
    for m in in_flight {
        if blocked[m.to.index()] {
            traffic.dropped += 1;
        } else {
            traffic.delivered += 1;
            offsets[m.to.index() + 1] += 1;
        }
    }
    for i in 0..n {
        offsets[i + 1] += offsets[i];
    }
    let mut cursor = offsets.clone();
    let mut payloads = Vec::with_capacity(offsets[n]);
    if let Some(first) = in_flight.first() {
        payloads.resize(offsets[n], first.payload);
    }
    for m in in_flight {
        let to = m.to.index();
        if !blocked[to] {
            payloads[cursor[to]] = m.payload;
            cursor[to] += 1;
        }
    }
    Inboxes { offsets, payloads }
}

/// Validate `cfg` and run one complete trial.
pub fn run_trial(cfg: &TrialConfig) -> Result<(TrialResult, Trajectory), EngineError> {
    Simulation::new(cfg.clone())?.run()
}
