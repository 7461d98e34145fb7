//! Monte Carlo checks of the one-round dynamics of the binary protocol.
//!
//! These checks run the formal blocking model
//! ([`BlockSemantics::Round`]): a node blocked in round `t` neither sends nor
//! receives in round `t`. Each check drives [`Simulation`] and reads only its
//! [`Trajectory`]; trial `i` uses seed `derive_trial_seed(seed, i)`.

use rayon::prelude::*;

use crate::config::{AdversaryKind, BlockSemantics, ProtocolKind, TrialConfig};
use crate::engine::{EngineError, RoundRecord, Simulation, Trajectory};
use crate::protocol::{BinaryNodeState, BinaryParams};
use crate::rng::{derive_streams, derive_trial_seed};
use crate::stats::{percentile_nearest_rank, Proportion};
use crate::types::{BinaryValue, Bit, Fraction, NodeId};

/// Pass thresholds for the verifiers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Thresholds {
    pub max_undefined_violation_rate: f64,
    pub min_drift_frequency: f64,
    pub min_jump_probability: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            max_undefined_violation_rate: 1e-3,
            min_drift_frequency: 0.99,
            min_jump_probability: 0.05,
        }
    }
}

/// Below this size the asymptotic claims are only reported, never asserted.
pub const ASYMPTOTIC_MIN_N: usize = 128;

fn clean_config(n: usize, initial_bias: u64, rounds: u32, seed: u64) -> TrialConfig {
    TrialConfig {
        n,
        epsilon: Fraction::ZERO,
        protocol: ProtocolKind::BinaryMajority,
        adversary: AdversaryKind::None,
        initial_bias,
        max_rounds: Some(rounds),
        continue_after_outcome: true,
        block_semantics: BlockSemantics::Round,
        seed,
        ..TrialConfig::default()
    }
}

/// Run `rounds` rounds from the given start; round 1 pushes the inputs, so
/// row 0 is the start state and row 1 is one update later.
fn clean_trajectory(n: usize, initial_bias: u64, rounds: u32, seed: u64) -> Result<Trajectory, EngineError> {
    let mut sim = Simulation::new(clean_config(n, initial_bias, rounds, seed))?;
    for _ in 0..rounds {
        sim.step_round()?;
    }
    Ok(sim.trajectory().clone())
}

#[derive(Debug, Clone, PartialEq)]
pub struct MinDefinedReport {
    pub n: usize,
    pub epsilon: Fraction,
    pub trials: u64,
    pub rounds: u64,
    pub violations: u64,
    pub rate: Proportion,
    /// False when `n` is below [`ASYMPTOTIC_MIN_N`].
    pub asserted: bool,
}

impl MinDefinedReport {
    pub fn passes(&self, th: &Thresholds) -> bool {
        !self.asserted || self.rate.estimate <= th.max_undefined_violation_rate
    }
}

/// Fraction of executed rounds that end with fewer than `3n/4` defined nodes,
/// for the (6,3) protocol against the late balancer.
pub fn verify_min_defined(
    n: usize,
    epsilon: Fraction,
    trials: u64,
    seed: u64,
) -> Result<MinDefinedReport, EngineError> {
    let per_trial: Vec<(u64, u64)> = (0..trials)
        .into_par_iter()
        .map(|i| {
            let cfg = TrialConfig {
                n,
                epsilon,
                adversary: AdversaryKind::LateBalancer,
                lateness: 1,
                block_semantics: BlockSemantics::Round,
                seed: derive_trial_seed(seed, i),
                ..TrialConfig::default()
            };
            let (_, traj) = crate::engine::run_trial(&cfg)?;
            let bad = traj.rows.iter().filter(|r| 4 * r.defined < 3 * n).count() as u64;
            Ok((traj.rows.len() as u64, bad))
        })
        .collect::<Result<_, EngineError>>()?;
    let rounds = per_trial.iter().map(|r| r.0).sum();
    let violations = per_trial.iter().map(|r| r.1).sum();
    Ok(MinDefinedReport {
        n,
        epsilon,
        trials,
        rounds,
        violations,
        rate: Proportion::new(violations, rounds),
        asserted: n >= ASYMPTOTIC_MIN_N,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegimeStatus {
    InRegime,
    Boundary,
    OutOfRegime,
}

impl RegimeStatus {
    pub fn label(self) -> &'static str {
        match self {
            RegimeStatus::InRegime => "in-regime",
            RegimeStatus::Boundary => "boundary",
            RegimeStatus::OutOfRegime => "out-of-regime",
        }
    }
}

/// Where `delta` sits relative to the window `[c sqrt(ln n / n), 1/4]`.
pub fn drift_regime(n: usize, delta: f64, c: f64) -> RegimeStatus {
    let lower = c * ((n as f64).ln() / n as f64).sqrt();
    if (delta - 0.25).abs() < 1e-12 {
        RegimeStatus::Boundary
    } else if delta < lower || delta > 0.25 {
        RegimeStatus::OutOfRegime
    } else {
        RegimeStatus::InRegime
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DriftRow {
    pub n: usize,
    pub delta: f64,
    pub status: RegimeStatus,
    /// Exact start imbalance fraction after rounding to whole nodes.
    pub start_delta: f64,
    pub frequency: Proportion,
}

impl DriftRow {
    pub fn passes(&self, th: &Thresholds) -> bool {
        self.status != RegimeStatus::InRegime || self.frequency.estimate >= th.min_drift_frequency
    }
}

/// Bias `s = Y - X` that puts the all-defined start state at imbalance
/// fraction `delta`, rounded to keep `n + s` even.
fn bias_for_delta(n: usize, delta: f64) -> u64 {
    let s = (2.0 * delta * n as f64).round() as u64;
    if (n as u64 + s) % 2 == 1 {
        s + 1
    } else {
        s
    }
}

/// `delta_{t+1} >= 9/8 delta_t` between two records, in exact arithmetic.
fn drift_event(before: &RoundRecord, after: &RoundRecord) -> bool {
    let d0 = before.ones as i128 - before.zeros as i128;
    let d1 = after.ones as i128 - after.zeros as i128;
    8 * d1 * before.defined as i128 >= 9 * d0 * after.defined as i128
}

/// For each `delta`, the frequency over `trials` one-round runs with no
/// adversary of `delta_{t+1} >= 9/8 delta_t`, starting from all nodes
/// defined with imbalance fraction `delta`.
pub fn verify_drift(
    n: usize,
    deltas: &[f64],
    trials: u64,
    seed: u64,
    c: f64,
) -> Result<Vec<DriftRow>, EngineError> {
    deltas
        .iter()
        .map(|&delta| {
            let bias = bias_for_delta(n, delta);
            let hits: Vec<bool> = (0..trials)
                .into_par_iter()
                .map(|i| {
                    let traj = clean_trajectory(n, bias, 2, derive_trial_seed(seed, i))?;
                    Ok(drift_event(&traj.rows[0], &traj.rows[1]))
                })
                .collect::<Result<_, EngineError>>()?;
            let successes = hits.iter().filter(|&&h| h).count() as u64;
            Ok(DriftRow {
                n,
                delta,
                status: drift_regime(n, delta, c),
                start_delta: bias as f64 / (2.0 * n as f64),
                frequency: Proportion::new(successes, trials),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct JumpReport {
    pub n: usize,
    pub start_bias: u64,
    pub alpha_hat: Proportion,
}

/// Probability that one round from imbalance `Delta = start_bias / 2` (all
/// nodes defined, no adversary) ends with `|Delta_{t+1}| >= sqrt(n_t / 16)`.
pub fn estimate_jump_from(n: usize, start_bias: u64, trials: u64, seed: u64) -> Result<JumpReport, EngineError> {
    let hits: Vec<bool> = (0..trials)
        .into_par_iter()
        .map(|i| {
            let traj = clean_trajectory(n, start_bias, 2, derive_trial_seed(seed, i))?;
            let (before, after) = (&traj.rows[0], &traj.rows[1]);
            let d = after.ones as i128 - after.zeros as i128;
            // |d/2| >= sqrt(n_t/16)  <=>  4 d^2 >= n_t
            Ok(4 * d * d >= before.defined as i128)
        })
        .collect::<Result<_, EngineError>>()?;
    let successes = hits.iter().filter(|&&h| h).count() as u64;
    Ok(JumpReport {
        n,
        start_bias,
        alpha_hat: Proportion::new(successes, trials),
    })
}

/// [`estimate_jump_from`] at perfect balance.
pub fn estimate_jump(n: usize, trials: u64, seed: u64) -> Result<JumpReport, EngineError> {
    estimate_jump_from(n, n as u64 % 2, trials, seed)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContractionReport {
    pub n: usize,
    pub start_zeros: usize,
    pub trials: u64,
    /// Minority size at or below which a run counts as contracted: `log2 n`.
    pub target: f64,
    /// Rounds with `X_t >= 32 log2 n`, where the bound is checked.
    pub checked_rounds: u64,
    pub bound_holds: Proportion,
    /// Update rounds until `X_t <= target`, per trial (`None` if never).
    pub rounds_to_target: Vec<Option<u32>>,
    pub median_rounds: Option<u32>,
}

pub const CONTRACTION_ROUND_LIMIT: u32 = 64;

/// From `start_zeros` zeros and all other nodes holding 1, with no adversary:
/// how many update rounds until the zeros number at most `log2 n`, and how
/// often `X_{t+1} <= 4 p_t^2 n_{t+1}` holds while `X_t >= 32 log2 n`.
pub fn verify_case1_contraction_from(
    n: usize,
    start_zeros: usize,
    trials: u64,
    seed: u64,
) -> Result<ContractionReport, EngineError> {
    let log2n = (n as f64).log2();
    let target = log2n;
    let check_floor = 32.0 * log2n;
    let bias = (n - 2 * start_zeros.min(n / 2)) as u64;
    let per_trial: Vec<(u64, u64, Option<u32>)> = (0..trials)
        .into_par_iter()
        .map(|i| {
            let mut sim = Simulation::new(clean_config(n, bias, CONTRACTION_ROUND_LIMIT + 1, derive_trial_seed(seed, i)))?;
            sim.step_round()?;
            let (mut checked, mut held, mut reached) = (0u64, 0u64, None);
            let minority = |r: &RoundRecord| r.zeros.min(r.ones);
            if minority(&sim.trajectory().rows[0]) as f64 <= target {
                reached = Some(0);
            }
            for update in 1..=CONTRACTION_ROUND_LIMIT {
                if reached.is_some() {
                    break;
                }
                sim.step_round()?;
                let rows = &sim.trajectory().rows;
                let (prev, cur) = (&rows[rows.len() - 2], &rows[rows.len() - 1]);
                let x = minority(prev);
                if x as f64 >= check_floor {
                    checked += 1;
                    let p = x as f64 / prev.defined as f64;
                    if (minority(cur) as f64) <= 4.0 * p * p * cur.defined as f64 {
                        held += 1;
                    }
                }
                if minority(cur) as f64 <= target {
                    reached = Some(update);
                }
            }
            Ok((checked, held, reached))
        })
        .collect::<Result<_, EngineError>>()?;
    let checked_rounds = per_trial.iter().map(|t| t.0).sum();
    let held: u64 = per_trial.iter().map(|t| t.1).sum();
    let rounds_to_target: Vec<Option<u32>> = per_trial.iter().map(|t| t.2).collect();
    let reached: Vec<u32> = rounds_to_target.iter().flatten().copied().collect();
    let median_rounds = if reached.len() as u64 == trials {
        percentile_nearest_rank(&reached, 50.0)
    } else {
        None
    };
    Ok(ContractionReport {
        n,
        start_zeros,
        trials,
        target,
        checked_rounds,
        bound_holds: Proportion::new(held, checked_rounds),
        rounds_to_target,
        median_rounds,
    })
}

/// [`verify_case1_contraction_from`] with `n/8` zeros.
pub fn verify_case1_contraction(n: usize, trials: u64, seed: u64) -> Result<ContractionReport, EngineError> {
    verify_case1_contraction_from(n, n / 8, trials, seed)
}

fn push_round(n: usize, n_t: usize, x_t: usize, k: usize, seed: u64) -> (BinaryParams, crate::rng::Streams, Vec<Vec<Bit>>) {
    let params = BinaryParams { n, k, l: 3, window: 1 };
    let mut streams = derive_streams(seed, n);
    let mut out = Vec::with_capacity(n_t * k);
    for i in 0..n_t {
        let input = if i < x_t { Bit::Zero } else { Bit::One };
        BinaryNodeState::round_one(NodeId::from(i), input, false, &params, &mut streams.nodes[i], &mut out);
    }
    let mut inboxes = vec![Vec::new(); n];
    for m in out {
        inboxes[m.to.index()].push(m.payload);
    }
    (params, streams, inboxes)
}

/// Histogram of per-node receive counts over `rounds` push rounds in which
/// `n_t` of `n` nodes push `k` values each. Index `j` counts nodes that
/// received exactly `j` values; `rounds * n` samples in total.
pub fn mc_receive_counts(n: usize, n_t: usize, k: usize, rounds: u64, seed: u64) -> Vec<u64> {
    let per_round: Vec<Vec<u64>> = (0..rounds)
        .into_par_iter()
        .map(|r| {
            let (_, _, inboxes) = push_round(n, n_t, 0, k, derive_trial_seed(seed, r));
            let mut h = vec![0u64; k * n_t + 1];
            for inbox in inboxes {
                h[inbox.len()] += 1;
            }
            h
        })
        .collect();
    let mut total = vec![0u64; k * n_t + 1];
    for h in per_round {
        for (t, x) in total.iter_mut().zip(h) {
            *t += x;
        }
    }
    total
}

/// Adoption counts after one (k,3) update with `x_t` zeros among `n_t`
/// senders: `(adopted_zero, defined)` summed over rounds until at least
/// `min_samples` nodes were defined.
pub fn mc_adopt_zero(n: usize, n_t: usize, x_t: usize, k: usize, min_samples: u64, seed: u64) -> (u64, u64) {
    const BATCH: u64 = 64;
    let (mut zeros, mut defined, mut next) = (0u64, 0u64, 0u64);
    while defined < min_samples {
        let batch: Vec<(u64, u64)> = (next..next + BATCH)
            .into_par_iter()
            .map(|r| {
                let (params, mut streams, inboxes) = push_round(n, n_t, x_t, k, derive_trial_seed(seed, r));
                let (mut z, mut d) = (0u64, 0u64);
                let mut out = Vec::new();
                for (i, inbox) in inboxes.iter().enumerate() {
                    let mut st = BinaryNodeState {
                        value: BinaryValue::Undefined,
                        history: crate::protocol::DecisionWindow::new(1),
                        output: None,
                    };
                    out.clear();
                    st.step(NodeId::from(i), inbox, false, 2, &params, &mut streams.nodes[i], &mut out);
                    match st.value {
                        BinaryValue::Zero => {
                            z += 1;
                            d += 1;
                        }
                        BinaryValue::One => d += 1,
                        BinaryValue::Undefined => {}
                    }
                }
                (z, d)
            })
            .collect();
        for (z, d) in batch {
            zeros += z;
            defined += d;
        }
        next += BATCH;
    }
    (zeros, defined)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn regime_gate() {
        assert_eq!(drift_regime(4096, 0.01, 1.0), RegimeStatus::OutOfRegime);
        assert_eq!(drift_regime(4096, 0.1, 1.0), RegimeStatus::InRegime);
        assert_eq!(drift_regime(4096, 0.25, 1.0), RegimeStatus::Boundary);
        assert_eq!(drift_regime(4096, 0.3, 1.0), RegimeStatus::OutOfRegime);
    }

    #[test]
    fn bias_keeps_parity() {
        assert_eq!(bias_for_delta(4096, 0.1), 820);
        assert_eq!((1001 + bias_for_delta(1001, 0.1)) % 2, 0);
    }

    #[test]
    fn small_n_is_reported_not_asserted() {
        let r = verify_min_defined(16, Fraction::new(1, 16).unwrap(), 5, 1).unwrap();
        assert!(!r.asserted);
        assert!(r.passes(&Thresholds::default()));
        assert!(r.rounds > 0);
    }

    #[test]
    fn no_zeros_stay_absent() {
        let r = verify_case1_contraction_from(256, 0, 5, 3).unwrap();
        assert_eq!(r.median_rounds, Some(0));
        assert_eq!(r.checked_rounds, 0);
    }

    #[test]
    fn receive_histogram_counts_every_node() {
        let h = mc_receive_counts(50, 40, 6, 3, 9);
        assert_eq!(h.iter().sum::<u64>(), 150);
        let msgs: u64 = h.iter().enumerate().map(|(j, c)| j as u64 * c).sum();
        assert_eq!(msgs, 3 * 40 * 6);
    }

    #[test]
    fn reports_are_reproducible() {
        let a = verify_drift(256, &[0.1], 20, 5, 1.0).unwrap();
        let b = verify_drift(256, &[0.1], 20, 5, 1.0).unwrap();
        assert_eq!(a, b);
    }
}
