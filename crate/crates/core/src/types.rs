//! Value types shared by every protocol, the adversary and the engine.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

/// Index of a node inside one trial, in `[0, n)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub u32);

impl NodeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl From<usize> for NodeId {
    fn from(i: usize) -> Self {
        NodeId(i as u32)
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A defined binary value, the payload of every binary message.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Bit {
    Zero,
    One,
}

impl Bit {
    pub fn as_u64(self) -> u64 {
        match self {
            Bit::Zero => 0,
            Bit::One => 1,
        }
    }

    /// +1 for one, -1 for zero. Summing signs over nodes gives `Y - X`.
    pub fn sign(self) -> i64 {
        match self {
            Bit::Zero => -1,
            Bit::One => 1,
        }
    }

    pub fn flip(self) -> Bit {
        match self {
            Bit::Zero => Bit::One,
            Bit::One => Bit::Zero,
        }
    }
}

/// Value held by a node in the binary protocol; `Undefined` is the reset value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinaryValue {
    Zero,
    One,
    Undefined,
}

impl BinaryValue {
    pub fn bit(self) -> Option<Bit> {
        match self {
            BinaryValue::Zero => Some(Bit::Zero),
            BinaryValue::One => Some(Bit::One),
            BinaryValue::Undefined => None,
        }
    }

    pub fn is_defined(self) -> bool {
        self != BinaryValue::Undefined
    }
}

impl From<Bit> for BinaryValue {
    fn from(b: Bit) -> Self {
        match b {
            Bit::Zero => BinaryValue::Zero,
            Bit::One => BinaryValue::One,
        }
    }
}

impl From<Option<Bit>> for BinaryValue {
    fn from(b: Option<Bit>) -> Self {
        b.map_or(BinaryValue::Undefined, BinaryValue::from)
    }
}

/// Value held in the multi-value protocol. `Bot` sorts below every `Val`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum MultiValue {
    Bot,
    Val(u64),
}

impl MultiValue {
    pub fn is_bot(self) -> bool {
        self == MultiValue::Bot
    }

    pub fn value(self) -> Option<u64> {
        match self {
            MultiValue::Bot => None,
            MultiValue::Val(v) => Some(v),
        }
    }
}

impl From<BinaryValue> for MultiValue {
    fn from(v: BinaryValue) -> Self {
        match v {
            BinaryValue::Zero => MultiValue::Val(0),
            BinaryValue::One => MultiValue::Val(1),
            BinaryValue::Undefined => MultiValue::Bot,
        }
    }
}

impl fmt::Display for MultiValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MultiValue::Bot => f.write_str("bot"),
            MultiValue::Val(v) => write!(f, "{v}"),
        }
    }
}

/// Non-negative rational number, kept in lowest terms.
///
/// Blocking budgets are `floor(epsilon * n)`; doing that in integers avoids
/// `1/16 * 1024` landing on `63.999...`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Fraction {
    num: u64,
    den: u64,
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

impl Fraction {
    pub const ZERO: Fraction = Fraction { num: 0, den: 1 };

    pub fn new(num: u64, den: u64) -> Option<Fraction> {
        if den == 0 {
            return None;
        }
        let g = gcd(num, den).max(1);
        Some(Fraction {
            num: num / g,
            den: den / g,
        })
    }

    pub fn num(self) -> u64 {
        self.num
    }

    pub fn den(self) -> u64 {
        self.den
    }

    pub fn to_f64(self) -> f64 {
        self.num as f64 / self.den as f64
    }

    /// `floor(self * n)`.
    pub fn floor_mul(self, n: u64) -> u64 {
        ((self.num as u128 * n as u128) / self.den as u128) as u64
    }
}

impl PartialOrd for Fraction {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Fraction {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.num as u128 * other.den as u128).cmp(&(other.num as u128 * self.den as u128))
    }
}

impl fmt::Display for Fraction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.den == 1 {
            write!(f, "{}", self.num)
        } else {
            write!(f, "{}/{}", self.num, self.den)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("cannot parse {0:?} as a non-negative fraction (expected a/b or a decimal)")]
pub struct ParseFractionError(pub String);

impl FromStr for Fraction {
    type Err = ParseFractionError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || ParseFractionError(s.to_string());
        let s = s.trim();
        if let Some((a, b)) = s.split_once('/') {
            let num = a.trim().parse::<u64>().map_err(|_| err())?;
            let den = b.trim().parse::<u64>().map_err(|_| err())?;
            return Fraction::new(num, den).ok_or_else(err);
        }
        let (int, frac) = s.split_once('.').unwrap_or((s, ""));
        if int.is_empty() && frac.is_empty() {
            return Err(err());
        }
        if !int.chars().all(|c| c.is_ascii_digit()) || !frac.chars().all(|c| c.is_ascii_digit()) {
            return Err(err());
        }
        if frac.len() > 18 {
            return Err(err());
        }
        let den = 10u64.pow(frac.len() as u32);
        let int_part: u64 = if int.is_empty() { 0 } else { int.parse().map_err(|_| err())? };
        let frac_part: u64 = if frac.is_empty() { 0 } else { frac.parse().map_err(|_| err())? };
        let num = int_part
            .checked_mul(den)
            .and_then(|v| v.checked_add(frac_part))
            .ok_or_else(err)?;
        Fraction::new(num, den).ok_or_else(err)
    }
}

/// A message in flight between two nodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Message<P> {
    pub from: NodeId,
    pub to: NodeId,
    pub payload: P,
    pub sent_round: u32,
}

/// An irrevocable output of one node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Decision {
    pub value: MultiValue,
    pub round: u32,
}

/// Per-node values as they appear in a snapshot.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SnapshotValues {
    Binary(Vec<BinaryValue>),
    Multi(Vec<MultiValue>),
}

impl SnapshotValues {
    pub fn len(&self) -> usize {
        match self {
            SnapshotValues::Binary(v) => v.len(),
            SnapshotValues::Multi(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Full per-node state at the start of `round`.
///
/// `blocked_now` marks the nodes that were blocked in the round that just
/// ended (`round - 1`); the block set of `round` itself is not part of it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SystemSnapshot {
    pub round: u32,
    pub values: SnapshotValues,
    pub blocked_now: Vec<bool>,
    pub active: Vec<bool>,
    pub decided: Vec<Option<MultiValue>>,
}

impl SystemSnapshot {
    pub fn n(&self) -> usize {
        self.values.len()
    }

    /// Binary values, or `None` for a multi-value snapshot.
    pub fn binary_values(&self) -> Option<&[BinaryValue]> {
        match &self.values {
            SnapshotValues::Binary(v) => Some(v),
            SnapshotValues::Multi(_) => None,
        }
    }
}

/// How a trial ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    ConsensusOn(MultiValue),
    AdversaryWin,
    Timeout,
}

impl Outcome {
    pub fn is_success(self) -> bool {
        matches!(self, Outcome::ConsensusOn(_))
    }

    pub fn label(self) -> &'static str {
        match self {
            Outcome::ConsensusOn(_) => "Success",
            Outcome::AdversaryWin => "AdversaryWin",
            Outcome::Timeout => "Timeout",
        }
    }
}

/// Summary of one completed trial.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrialResult {
    pub outcome: Outcome,
    /// Round in which the outcome was fixed (`max_rounds` on timeout).
    pub rounds: u32,
    /// Rounds actually executed; exceeds `rounds` only with `continue_after_outcome`.
    pub rounds_executed: u32,
    /// Histogram of held values at the end of the last executed round.
    pub final_counts: BTreeMap<MultiValue, usize>,
    pub decisions: BTreeMap<NodeId, Decision>,
    /// Nodes whose final value differs from the agreed value.
    pub loss: usize,
    pub messages_sent: u64,
    pub messages_delivered: u64,
    pub messages_dropped: u64,
    /// Multi-value only: the maximum input among round-1 active, unblocked nodes.
    pub x_star: Option<u64>,
    /// Multi-value only: nodes that kept their input after round 1.
    pub initial_active: Option<usize>,
    /// Outputs that are not the input of any node.
    pub validity_violations: usize,
}

impl TrialResult {
    /// Distinct values among all emitted outputs.
    pub fn decided_values(&self) -> Vec<MultiValue> {
        let mut vals: Vec<MultiValue> = self.decisions.values().map(|d| d.value).collect();
        vals.sort();
        vals.dedup();
        vals
    }

    pub fn count_of(&self, v: MultiValue) -> usize {
        self.final_counts.get(&v).copied().unwrap_or(0)
    }
}
