//! Frequency checks on adversary, activation and baseline behaviour.

use latecons::rng::derive_trial_seed;
use latecons::{run_trial, AdversaryKind, Fraction, MultiValue, ProtocolKind, Simulation, TrialConfig};

/// `|observed - expected| <= 5 sigma` for a binomial count.
fn within_5_sigma(hits: u64, trials: u64, p: f64) -> bool {
    let mean = trials as f64 * p;
    let sigma = (trials as f64 * p * (1.0 - p)).sqrt();
    (hits as f64 - mean).abs() <= 5.0 * sigma
}

#[test]
fn random_adversary_blocks_every_node_equally_often() {
    let n = 64;
    let cfg = TrialConfig {
        n,
        epsilon: Fraction::new(1, 8).unwrap(),
        adversary: AdversaryKind::Random,
        max_rounds: Some(400),
        continue_after_outcome: true,
        seed: 11,
        ..TrialConfig::default()
    };
    let mut sim = Simulation::new(cfg.clone()).unwrap();
    let mut per_node = vec![0u64; n];
    let mut rounds = 0u64;
    while sim.round() < 400 {
        sim.step_round().unwrap();
        let snap = sim.snapshot(sim.round() + 1).unwrap();
        let blocked = snap.blocked_now.iter().filter(|&&b| b).count();
        // the first rounds carry no announced set
        if blocked == 0 {
            continue;
        }
        assert_eq!(blocked, cfg.budget());
        rounds += 1;
        for (count, &b) in per_node.iter_mut().zip(&snap.blocked_now) {
            *count += b as u64;
        }
    }
    assert!(rounds > 350);
    let p = cfg.budget() as f64 / n as f64;
    for (i, &c) in per_node.iter().enumerate() {
        assert!(within_5_sigma(c, rounds, p), "node {i}: {c} of {rounds}");
    }
}

#[test]
fn activation_fraction_matches_probability() {
    let n = 1024;
    let trials = 200;
    let base = TrialConfig {
        n,
        epsilon: Fraction::ZERO,
        protocol: ProtocolKind::MultiValue,
        adversary: AdversaryKind::None,
        ..TrialConfig::default()
    };
    let p = base.activation_probability();
    let active: u64 = (0..trials)
        .map(|i| {
            let cfg = TrialConfig {
                seed: derive_trial_seed(12, i),
                ..base.clone()
            };
            run_trial(&cfg).unwrap().0.initial_active.unwrap() as u64
        })
        .sum();
    assert!(within_5_sigma(active, trials * n as u64, p), "{active} active, p = {p}");
}

#[test]
fn median_rule_converges_without_adversary() {
    let n = 1024;
    let trials = 1000;
    let cap = (20.0 * (n as f64).log2()) as u32;
    let ok = (0..trials)
        .filter(|&i| {
            let cfg = TrialConfig {
                n,
                epsilon: Fraction::ZERO,
                protocol: ProtocolKind::MedianPull,
                adversary: AdversaryKind::None,
                lateness: 0,
                max_rounds: Some(cap),
                seed: derive_trial_seed(13, i),
                ..TrialConfig::default()
            };
            run_trial(&cfg).unwrap().0.outcome.is_success()
        })
        .count();
    assert!(ok >= 990, "{ok} of {trials}");
}

#[test]
fn small_multivalue_network_agrees_on_the_maximum() {
    // at n = 16 every node activates (c1 log2 n / n = 1)
    for i in 0..200 {
        let cfg = TrialConfig {
            n: 16,
            epsilon: Fraction::ZERO,
            protocol: ProtocolKind::MultiValue,
            adversary: AdversaryKind::None,
            seed: derive_trial_seed(14, i),
            ..TrialConfig::default()
        };
        let (res, _) = run_trial(&cfg).unwrap();
        assert_eq!(res.initial_active, Some(16));
        let x = MultiValue::Val(res.x_star.unwrap());
        assert!(res.decisions.values().all(|d| d.value == x), "trial {i}");
        assert_eq!(res.validity_violations, 0);
    }
}
