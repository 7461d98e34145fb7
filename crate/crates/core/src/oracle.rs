//! Closed-form probabilities from the analysis of the binary protocol.
//!
//! Everything is evaluated in log space where products get long; sums use
//! Neumaier compensation.

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum OracleError {
    #[error("j = {j} is outside 0..={max}")]
    OutOfRange { j: u64, max: u64 },
    #[error("{name} = {value} violates {constraint}")]
    Domain {
        name: &'static str,
        value: f64,
        constraint: &'static str,
    },
}

/// Compensated (Neumaier) sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct NeumaierSum {
    sum: f64,
    c: f64,
}

impl NeumaierSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.c += (self.sum - t) + x;
        } else {
            self.c += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(self) -> f64 {
        self.sum + self.c
    }
}

impl FromIterator<f64> for NeumaierSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = NeumaierSum::default();
        for x in iter {
            s.add(x);
        }
        s
    }
}

/// `ln C(m, j)` as a compensated sum of `min(j, m-j)` logarithms.
pub fn ln_binomial(m: u64, j: u64) -> f64 {
    let j = j.min(m - j);
    (0..j)
        .map(|i| ((m - i) as f64 / (j - i) as f64).ln())
        .collect::<NeumaierSum>()
        .value()
}

/// Probability that a fixed node receives exactly `j` of the `k * n_t`
/// messages pushed to uniform destinations among `n` nodes.
pub fn prob_receive_exactly(n: u64, n_t: u64, k: u64, j: u64) -> Result<f64, OracleError> {
    let m = k * n_t;
    if j > m {
        return Err(OracleError::OutOfRange { j, max: m });
    }
    if n == 0 {
        return Err(OracleError::Domain {
            name: "n",
            value: 0.0,
            constraint: "n >= 1",
        });
    }
    if n == 1 {
        return Ok(if j == m { 1.0 } else { 0.0 });
    }
    let p = 1.0 / n as f64;
    let ln = ln_binomial(m, j) + j as f64 * p.ln() + (m - j) as f64 * (-p).ln_1p();
    Ok(ln.exp())
}

/// Probability of receiving at most two values.
pub fn prob_le2(n: u64, n_t: u64, k: u64) -> Result<f64, OracleError> {
    let top = 2.min(k * n_t);
    let mut s = NeumaierSum::default();
    for j in 0..=top {
        s.add(prob_receive_exactly(n, n_t, k, j)?);
    }
    Ok(s.value())
}

/// Probability that a defined node adopts 0 when its three samples are drawn
/// without replacement from the global pool of `k * n_t` pushed values, of
/// which `k * x_t` are zeros.
pub fn prob_pick_zero_pool(k: u64, n_t: u64, x_t: u64) -> Result<f64, OracleError> {
    if n_t == 0 || x_t > n_t || k * n_t < 3 {
        return Err(OracleError::Domain {
            name: "x_t",
            value: x_t as f64,
            constraint: "0 <= x_t <= n_t and k * n_t >= 3",
        });
    }
    let pool = (k * n_t) as f64;
    let z = (k * x_t) as f64;
    let o = (k * (n_t - x_t)) as f64;
    let two_zeros = 3.0 * (z / pool) * ((z - 1.0) / (pool - 1.0)) * (o / (pool - 2.0));
    let three_zeros = (z / pool) * ((z - 1.0) / (pool - 1.0)) * ((z - 2.0) / (pool - 2.0));
    Ok((two_zeros.max(0.0) + three_zeros.max(0.0)).min(1.0))
}

/// [`prob_pick_zero_pool`] for the (6,3) protocol.
pub fn prob_pick_zero(n_t: u64, x_t: u64) -> Result<f64, OracleError> {
    prob_pick_zero_pool(6, n_t, x_t)
}

/// Large-`n_t` limit of the adoption probability at imbalance fraction `delta`:
/// `1/2 - 3/2 delta + 2 delta^3`.
pub fn drift_expansion(delta: f64) -> Result<f64, OracleError> {
    if !(0.0..=0.5).contains(&delta) {
        return Err(OracleError::Domain {
            name: "delta",
            value: delta,
            constraint: "0 <= delta <= 1/2",
        });
    }
    Ok(0.5 - 1.5 * delta + 2.0 * delta.powi(3))
}

/// Paley-Zygmund lower bound `Pr[Z > theta E Z] >= (1-theta)^2 E[Z]^2 / E[Z^2]`
/// applied to `Z = |Delta|^2`, so `mean2 = E|Delta|^2` and `mean4 = E|Delta|^4`.
pub fn paley_zygmund(mean2: f64, mean4: f64, theta: f64) -> Result<f64, OracleError> {
    if !(mean4 > 0.0) {
        return Err(OracleError::Domain {
            name: "mean4",
            value: mean4,
            constraint: "mean4 > 0",
        });
    }
    if !(0.0..=1.0).contains(&theta) {
        return Err(OracleError::Domain {
            name: "theta",
            value: theta,
            constraint: "0 <= theta <= 1",
        });
    }
    Ok((1.0 - theta).powi(2) * mean2 * mean2 / mean4)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn no_senders() {
        assert_eq!(prob_receive_exactly(100, 0, 6, 0).unwrap(), 1.0);
        assert!(prob_receive_exactly(100, 0, 6, 1).is_err());
    }

    #[test]
    fn zero_hits_closed_form() {
        let p = prob_receive_exactly(1000, 750, 6, 0).unwrap();
        let direct = (1.0f64 - 1e-3).powi(4500);
        assert!((p - direct).abs() / direct < 1e-12);
        assert!((p - 0.011_084_013).abs() < 1e-9, "{p}");
    }

    #[test]
    fn normalizes() {
        for (n, n_t, k) in [(10, 7, 6), (1000, 750, 6), (64, 64, 12), (3, 1, 3)] {
            let s: NeumaierSum = (0..=k * n_t).map(|j| prob_receive_exactly(n, n_t, k, j).unwrap()).collect();
            assert!((s.value() - 1.0).abs() < 1e-10, "{n} {n_t} {k}: {}", s.value());
        }
    }

    #[test]
    fn le2_bound_and_monotonicity() {
        let n = 1_000_000;
        let at_three_quarters = prob_le2(n, 3 * n / 4, 6).unwrap();
        assert!(at_three_quarters <= 2.0 / 11.0, "{at_three_quarters}");
        assert!(prob_le2(n, n, 6).unwrap() < at_three_quarters);
    }

    #[test]
    fn pick_zero_edges() {
        assert_eq!(prob_pick_zero(100, 0).unwrap(), 0.0);
        assert!((prob_pick_zero(100, 100).unwrap() - 1.0).abs() < 1e-15);
        let half = prob_pick_zero(4096, 2048).unwrap();
        assert!((half - 0.5).abs() <= 1.0 / 4096.0);
        assert!(prob_pick_zero(10, 11).is_err());
    }

    #[test]
    fn pick_zero_complementarity() {
        for n_t in [1u64, 2, 5, 100, 4097] {
            for x in 0..=n_t.min(60) {
                let s = prob_pick_zero(n_t, x).unwrap() + prob_pick_zero(n_t, n_t - x).unwrap();
                assert!((s - 1.0).abs() < 1e-12, "{n_t} {x}: {s}");
            }
        }
    }

    #[test]
    fn expansion_values() {
        assert_eq!(drift_expansion(0.0).unwrap(), 0.5);
        assert!((drift_expansion(0.25).unwrap() - 0.15625).abs() < 1e-15);
        assert!(drift_expansion(0.6).is_err());
    }

    #[test]
    fn expansion_matches_finite_pool() {
        let n_t = 100_000u64;
        for delta in [0.0, 0.05, 0.1, 0.2, 0.25, 0.4] {
            let x = (n_t as f64 * (0.5 - delta)).round() as u64;
            let d = drift_expansion(delta).unwrap() - prob_pick_zero(n_t, x).unwrap();
            assert!(d.abs() <= 10.0 / n_t as f64, "{delta}: {d}");
        }
    }

    #[test]
    fn paley_zygmund_values() {
        assert_eq!(paley_zygmund(3.0, 9.0, 1.0).unwrap(), 0.0);
        assert_eq!(paley_zygmund(3.0, 9.0, 0.0).unwrap(), 1.0);
        let n = 4096.0;
        let v = paley_zygmund(n / 8.0, n * n / 12.0, 0.5).unwrap();
        assert!((v - 3.0 / 64.0).abs() < 1e-15);
        assert!(paley_zygmund(1.0, 0.0, 0.5).is_err());
    }
}
