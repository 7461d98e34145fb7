//! Max-rule multi-value consensus with random activation.
//!
//! Round 1 activates each node with probability `min(1, c1 log n / n)`; an
//! active, unblocked node keeps its input and pushes it to `ceil(c2 log n)`
//! uniform destinations while every other node resets to `Bot`. Then
//! `T = ceil(c3 log n)` iterations follow: a node takes the maximum of its
//! value and everything it received, becomes active once it holds a value,
//! and (except in the last iteration) pushes that value to 2 destinations.

use rand::Rng;

use crate::config::TrialConfig;
use crate::rng::Stream;
use crate::types::{Message, MultiValue, NodeId};

pub const SPREAD_FANOUT: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MultiParams {
    pub n: usize,
    pub activation_probability: f64,
    pub initial_fanout: usize,
    pub iterations: u32,
    pub blocked_reset: bool,
}

impl MultiParams {
    pub fn from_config(cfg: &TrialConfig) -> Self {
        MultiParams {
            n: cfg.n,
            activation_probability: cfg.activation_probability(),
            initial_fanout: cfg.initial_fanout(),
            iterations: cfg.mv_iterations(),
            blocked_reset: cfg.blocked_reset_mv,
        }
    }
}

/// Upper bound on messages in one trial: `|A| * ceil(c2 log n) + 2n * ceil(c3 log n)`.
pub fn message_budget(params: &MultiParams, initial_active: usize) -> u64 {
    initial_active as u64 * params.initial_fanout as u64
        + 2 * params.n as u64 * params.iterations as u64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MultiNodeState {
    pub value: MultiValue,
    pub active: bool,
}

fn push_to_uniform(
    from: NodeId,
    payload: MultiValue,
    fanout: usize,
    n: usize,
    round: u32,
    rng: &mut Stream,
    out: &mut Vec<Message<MultiValue>>,
) {
    for _ in 0..fanout {
        out.push(Message {
            from,
            to: NodeId(rng.gen_range(0..n as u32)),
            payload,
            sent_round: round,
        });
    }
}

impl MultiNodeState {
    /// Round 1. The activation coin is flipped even when the node is blocked,
    /// so that a node's stream does not depend on the adversary's choice.
    pub fn init(
        id: NodeId,
        input: MultiValue,
        blocked: bool,
        params: &MultiParams,
        rng: &mut Stream,
        out: &mut Vec<Message<MultiValue>>,
    ) -> Self {
        let coin = rng.gen_bool(params.activation_probability);
        Self::init_with_coin(id, input, coin, blocked, params, rng, out)
    }

    pub fn init_with_coin(
        id: NodeId,
        input: MultiValue,
        coin: bool,
        blocked: bool,
        params: &MultiParams,
        rng: &mut Stream,
        out: &mut Vec<Message<MultiValue>>,
    ) -> Self {
        debug_assert!(!input.is_bot(), "inputs are defined values");
        if coin && !blocked {
            push_to_uniform(id, input, params.initial_fanout, params.n, 1, rng, out);
            MultiNodeState {
                value: input,
                active: true,
            }
        } else {
            MultiNodeState {
                value: MultiValue::Bot,
                active: false,
            }
        }
    }

    /// Spreading iteration `t` (1-based), executed in engine round `t + 1`.
    #[allow(clippy::too_many_arguments)]
    pub fn step(
        &mut self,
        id: NodeId,
        inbox: &[MultiValue],
        blocked: bool,
        t: u32,
        params: &MultiParams,
        rng: &mut Stream,
        out: &mut Vec<Message<MultiValue>>,
    ) {
        if blocked {
            if params.blocked_reset {
                self.value = MultiValue::Bot;
            }
            self.active = false;
            return;
        }
        self.value = inbox.iter().copied().fold(self.value, MultiValue::max);
        self.active = !self.value.is_bot();
        if self.active && t < params.iterations {
            push_to_uniform(id, self.value, SPREAD_FANOUT, params.n, t + 1, rng, out);
        }
    }

    pub fn decide(&self) -> MultiValue {
        self.value
    }
}
