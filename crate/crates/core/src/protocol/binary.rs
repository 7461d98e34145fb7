//! The (k,ℓ)-majority push protocol and its decision rule.
//!
//! Each round a node either resets to `Undefined` (it is blocked, or fewer
//! than ℓ values reached it) or adopts the majority of ℓ values sampled
//! uniformly without replacement from its inbox and pushes the result to k
//! destinations drawn uniformly with replacement from all n nodes. The new
//! value never depends on the node's previous value.

use std::collections::VecDeque;

use rand::Rng;

use crate::config::TrialConfig;
use crate::rng::Stream;
use crate::types::{BinaryValue, Bit, Message, NodeId};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SampleError {
    #[error("inbox holds {have} values, fewer than the sample size {want}")]
    InboxTooSmall { have: usize, want: usize },
    #[error("majority needs an odd, non-empty sample (got {0} values)")]
    BadSampleLength(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BinaryParams {
    pub n: usize,
    pub k: usize,
    pub l: usize,
    pub window: usize,
}

impl BinaryParams {
    pub fn from_config(cfg: &TrialConfig) -> Self {
        BinaryParams {
            n: cfg.n,
            k: cfg.k,
            l: cfg.l,
            window: cfg.decision_window(),
        }
    }
}

/// The last `W` held values of a node, oldest first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecisionWindow {
    entries: VecDeque<BinaryValue>,
    capacity: usize,
}

impl DecisionWindow {
    pub fn new(capacity: usize) -> Self {
        DecisionWindow {
            entries: VecDeque::with_capacity(capacity),
            capacity,
        }
    }

    pub fn from_values(capacity: usize, values: &[BinaryValue]) -> Self {
        let mut w = DecisionWindow::new(capacity);
        for &v in values {
            w.push(v);
        }
        w
    }

    pub fn push(&mut self, v: BinaryValue) {
        if self.entries.len() == self.capacity {
            self.entries.pop_front();
        }
        self.entries.push_back(v);
    }

    fn replace_latest(&mut self, v: BinaryValue) {
        if let Some(last) = self.entries.back_mut() {
            *last = v;
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.entries.len() == self.capacity
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn iter(&self) -> impl Iterator<Item = BinaryValue> + '_ {
        self.entries.iter().copied()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryNodeState {
    pub value: BinaryValue,
    pub history: DecisionWindow,
    /// First output and the round it was produced in. Never overwritten.
    pub output: Option<(Bit, u32)>,
}

fn push_to_uniform(
    from: NodeId,
    payload: Bit,
    params: &BinaryParams,
    round: u32,
    rng: &mut Stream,
    out: &mut Vec<Message<Bit>>,
) {
    for _ in 0..params.k {
        let to = NodeId(rng.gen_range(0..params.n as u32));
        out.push(Message {
            from,
            to,
            payload,
            sent_round: round,
        });
    }
}

impl BinaryNodeState {
    /// Round 1: hold the input and push it, unless blocked. The reset rule's
    /// inbox check does not apply because no earlier messages exist.
    pub fn round_one(
        id: NodeId,
        input: Bit,
        blocked: bool,
        params: &BinaryParams,
        rng: &mut Stream,
        out: &mut Vec<Message<Bit>>,
    ) -> Self {
        let mut state = BinaryNodeState {
            value: BinaryValue::Undefined,
            history: DecisionWindow::new(params.window),
            output: None,
        };
        if !blocked {
            state.value = input.into();
            push_to_uniform(id, input, params, 1, rng, out);
        }
        state.history.push(state.value);
        state
    }

    /// One round of the reset and update rules. `inbox` holds the values
    /// delivered this round, already filtered by the blocking rules.
    #[allow(clippy::too_many_arguments)]
    pub fn step(
        &mut self,
        id: NodeId,
        inbox: &[Bit],
        blocked: bool,
        round: u32,
        params: &BinaryParams,
        rng: &mut Stream,
        out: &mut Vec<Message<Bit>>,
    ) {
        self.value = if blocked || inbox.len() < params.l {
            BinaryValue::Undefined
        } else {
            let sample = sample_l(inbox, params.l, rng).expect("inbox size checked");
            let v = majority_of(&sample).expect("l is odd");
            push_to_uniform(id, v, params, round, rng, out);
            v.into()
        };
        self.history.push(self.value);
    }

    /// Throw away the value computed this round (carryover blocking).
    pub fn discard(&mut self) {
        self.value = BinaryValue::Undefined;
        self.history.replace_latest(BinaryValue::Undefined);
    }

    /// Apply the decision rule after a round; the first output sticks.
    pub fn try_decide(&mut self, round: u32) -> Option<Bit> {
        if self.output.is_none() {
            if let Some(y) = decision_check(&self.history) {
                self.output = Some((y, round));
            }
        }
        self.output.map(|(b, _)| b)
    }
}

/// Strict majority of an odd-length sample.
pub fn majority_of(sample: &[Bit]) -> Result<Bit, SampleError> {
    if sample.len() % 2 == 0 {
        return Err(SampleError::BadSampleLength(sample.len()));
    }
    let ones = sample.iter().filter(|&&b| b == Bit::One).count();
    Ok(if 2 * ones > sample.len() { Bit::One } else { Bit::Zero })
}

/// `l` values drawn uniformly without replacement from the inbox multiset.
pub fn sample_l(inbox: &[Bit], l: usize, rng: &mut Stream) -> Result<Vec<Bit>, SampleError> {
    if inbox.len() < l {
        return Err(SampleError::InboxTooSmall {
            have: inbox.len(),
            want: l,
        });
    }
    Ok(rand::seq::index::sample(rng, inbox.len(), l)
        .into_iter()
        .map(|i| inbox[i])
        .collect())
}

/// `Some(y)` iff the window is full, every entry is `y` or undefined, and at
/// least half of the entries (rounded up) equal `y`.
pub fn decision_check(window: &DecisionWindow) -> Option<Bit> {
    if !window.is_full() {
        return None;
    }
    let (mut zeros, mut ones) = (0usize, 0usize);
    for v in window.iter() {
        match v {
            BinaryValue::Zero => zeros += 1,
            BinaryValue::One => ones += 1,
            BinaryValue::Undefined => {}
        }
    }
    let need = window.capacity().div_ceil(2);
    match (zeros, ones) {
        (0, c) if c >= need => Some(Bit::One),
        (c, 0) if c >= need => Some(Bit::Zero),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::derive_streams;
    use proptest::prelude::*;
    use BinaryValue::{One as O, Undefined as U, Zero as Z};

    fn params(n: usize) -> BinaryParams {
        BinaryParams {
            n,
            k: 6,
            l: 3,
            window: 4,
        }
    }

    fn bits(s: &str) -> Vec<Bit> {
        s.chars()
            .map(|c| if c == '1' { Bit::One } else { Bit::Zero })
            .collect()
    }

    #[test]
    fn majority_examples() {
        assert_eq!(majority_of(&bits("001")), Ok(Bit::Zero));
        assert_eq!(majority_of(&bits("111")), Ok(Bit::One));
        assert_eq!(majority_of(&bits("011")), Ok(Bit::One));
        assert_eq!(majority_of(&bits("01")), Err(SampleError::BadSampleLength(2)));
    }

    #[test]
    fn round_one_unblocked_pushes_input() {
        let mut s = derive_streams(1, 1);
        let mut out = Vec::new();
        let st = BinaryNodeState::round_one(NodeId(0), Bit::One, false, &params(10), &mut s.nodes[0], &mut out);
        assert_eq!(st.value, O);
        assert_eq!(out.len(), 6);
        assert!(out.iter().all(|m| m.payload == Bit::One && m.sent_round == 1 && m.to.0 < 10));
    }

    #[test]
    fn round_one_blocked_is_silent() {
        let mut s = derive_streams(1, 1);
        let mut out = Vec::new();
        let st = BinaryNodeState::round_one(NodeId(0), Bit::Zero, true, &params(10), &mut s.nodes[0], &mut out);
        assert_eq!(st.value, U);
        assert!(out.is_empty());
        assert_eq!(st.history.iter().collect::<Vec<_>>(), vec![U]);
    }

    #[test]
    fn reset_rule_on_short_inbox() {
        let mut s = derive_streams(2, 1);
        let mut out = Vec::new();
        let p = params(10);
        let mut st = BinaryNodeState::round_one(NodeId(0), Bit::One, false, &p, &mut s.nodes[0], &mut out);
        out.clear();
        st.step(NodeId(0), &bits("01"), false, 2, &p, &mut s.nodes[0], &mut out);
        assert_eq!(st.value, U);
        assert!(out.is_empty());
    }

    #[test]
    fn reset_rule_when_blocked() {
        let mut s = derive_streams(2, 1);
        let mut out = Vec::new();
        let p = params(10);
        let mut st = BinaryNodeState::round_one(NodeId(0), Bit::One, false, &p, &mut s.nodes[0], &mut out);
        out.clear();
        st.step(NodeId(0), &bits("1111"), true, 2, &p, &mut s.nodes[0], &mut out);
        assert_eq!(st.value, U);
        assert!(out.is_empty());
    }

    #[test]
    fn forced_majorities() {
        let mut s = derive_streams(3, 1);
        let p = params(10);
        let mut out = Vec::new();
        let mut st = BinaryNodeState::round_one(NodeId(0), Bit::One, false, &p, &mut s.nodes[0], &mut out);
        out.clear();
        st.step(NodeId(0), &bits("000"), false, 2, &p, &mut s.nodes[0], &mut out);
        assert_eq!(st.value, Z);
        assert_eq!(out.len(), 6);
        assert!(out.iter().all(|m| m.payload == Bit::Zero && m.sent_round == 2));
        out.clear();
        st.step(NodeId(0), &bits("1111"), false, 3, &p, &mut s.nodes[0], &mut out);
        assert_eq!(st.value, O);
    }

    #[test]
    fn sample_of_whole_inbox_is_a_permutation() {
        let mut s = derive_streams(4, 1);
        let inbox = bits("011");
        let mut got = sample_l(&inbox, 3, &mut s.nodes[0]).unwrap();
        got.sort();
        assert_eq!(got, bits("011"));
    }

    #[test]
    fn sample_requires_enough_values() {
        let mut s = derive_streams(4, 1);
        assert_eq!(
            sample_l(&bits("11"), 3, &mut s.nodes[0]),
            Err(SampleError::InboxTooSmall { have: 2, want: 3 })
        );
    }

    #[test]
    fn decision_rule_examples() {
        let w = |vals: &[BinaryValue]| DecisionWindow::from_values(4, vals);
        assert_eq!(decision_check(&w(&[O, O, O, O])), Some(Bit::One));
        assert_eq!(decision_check(&w(&[O, U, O, U])), Some(Bit::One));
        assert_eq!(decision_check(&w(&[U, Z, Z, U])), Some(Bit::Zero));
        assert_eq!(decision_check(&w(&[O, U, U, U])), None);
        assert_eq!(decision_check(&w(&[O, Z, O, O])), None);
        assert_eq!(decision_check(&w(&[O, O, O])), None, "window not yet full");
        // odd window: ceil(5/2) = 3 entries needed
        assert_eq!(decision_check(&DecisionWindow::from_values(5, &[O, O, U, U, U])), None);
        assert_eq!(decision_check(&DecisionWindow::from_values(5, &[O, O, U, O, U])), Some(Bit::One));
    }

    #[test]
    fn first_output_sticks() {
        let mut st = BinaryNodeState {
            value: O,
            history: DecisionWindow::from_values(2, &[O, O]),
            output: None,
        };
        assert_eq!(st.try_decide(5), Some(Bit::One));
        st.history = DecisionWindow::from_values(2, &[Z, Z]);
        assert_eq!(st.try_decide(6), Some(Bit::One));
        assert_eq!(st.output, Some((Bit::One, 5)));
    }

    #[test]
    fn window_is_bounded() {
        let mut w = DecisionWindow::new(3);
        for v in [Z, O, U, O, O] {
            w.push(v);
            assert!(w.len() <= 3);
        }
        assert_eq!(w.iter().collect::<Vec<_>>(), vec![U, O, O]);
    }

    proptest! {
        #[test]
        fn majority_is_total_for_odd_samples(sample in proptest::collection::vec(any::<bool>(), 1..=15usize)
            .prop_filter("odd", |v| v.len() % 2 == 1)) {
            let s: Vec<Bit> = sample.iter().map(|&b| if b { Bit::One } else { Bit::Zero }).collect();
            let m = majority_of(&s).unwrap();
            let count = s.iter().filter(|&&b| b == m).count();
            prop_assert!(2 * count > s.len());
        }

        /// The new value is a function of (inbox, blocked, coins) only.
        #[test]
        fn step_ignores_previous_value(seed in any::<u64>(), inbox in proptest::collection::vec(any::<bool>(), 0..12usize),
                                       blocked in any::<bool>()) {
            let inbox: Vec<Bit> = inbox.iter().map(|&b| if b { Bit::One } else { Bit::Zero }).collect();
            let p = params(50);
            let run = |prior: BinaryValue| {
                let mut s = derive_streams(seed, 1);
                let mut st = BinaryNodeState { value: prior, history: DecisionWindow::new(4), output: None };
                let mut out = Vec::new();
                st.step(NodeId(0), &inbox, blocked, 2, &p, &mut s.nodes[0], &mut out);
                (st.value, out)
            };
            let a = run(Z);
            prop_assert_eq!(&a, &run(O));
            prop_assert_eq!(&a, &run(U));
        }
    }
}
