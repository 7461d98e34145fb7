//! Small descriptive statistics used by the harness and the verifiers.

/// Nearest-rank percentile: the smallest sample with at least `p` percent of
/// the samples at or below it. `None` for an empty sample.
pub fn percentile_nearest_rank(samples: &[u32], p: f64) -> Option<u32> {
    if samples.is_empty() {
        return None;
    }
    let mut sorted = samples.to_vec();
    sorted.sort_unstable();
    let rank = ((p / 100.0) * sorted.len() as f64).ceil().max(1.0) as usize;
    Some(sorted[rank.min(sorted.len()) - 1])
}

pub fn mean(samples: &[u32]) -> Option<f64> {
    if samples.is_empty() {
        None
    } else {
        Some(samples.iter().map(|&x| x as f64).sum::<f64>() / samples.len() as f64)
    }
}

/// Binomial proportion with a 95% normal-approximation interval including a
/// continuity correction of `1/(2N)`, clamped to `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Proportion {
    pub successes: u64,
    pub trials: u64,
    pub estimate: f64,
    pub lo: f64,
    pub hi: f64,
}

pub const Z95: f64 = 1.959_963_984_540_054;

impl Proportion {
    pub fn new(successes: u64, trials: u64) -> Self {
        if trials == 0 {
            return Proportion {
                successes,
                trials,
                estimate: f64::NAN,
                lo: 0.0,
                hi: 1.0,
            };
        }
        let n = trials as f64;
        let p = successes as f64 / n;
        let half = Z95 * (p * (1.0 - p) / n).sqrt() + 0.5 / n;
        Proportion {
            successes,
            trials,
            estimate: p,
            lo: (p - half).max(0.0),
            hi: (p + half).min(1.0),
        }
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn overlaps(&self, other: &Proportion) -> bool {
        self.lo <= other.hi && other.lo <= self.hi
    }
}

/// Least-squares line `y = a + b x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearFit {
    pub a: f64,
    pub b: f64,
    pub max_abs_residual: f64,
}

pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Option<LinearFit> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return None;
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let b = sxy / sxx;
    let a = my - b * mx;
    let max_abs_residual = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (y - a - b * x).abs())
        .fold(0.0, f64::max);
    Some(LinearFit {
        a,
        b,
        max_abs_residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nearest_rank() {
        assert_eq!(percentile_nearest_rank(&[7], 95.0), Some(7));
        assert_eq!(percentile_nearest_rank(&[], 95.0), None);
        let v: Vec<u32> = (1..=20).collect();
        assert_eq!(percentile_nearest_rank(&v, 95.0), Some(19));
        assert_eq!(percentile_nearest_rank(&v, 100.0), Some(20));
        assert_eq!(percentile_nearest_rank(&v, 50.0), Some(10));
        assert_eq!(percentile_nearest_rank(&[3, 1, 2], 0.0), Some(1));
    }

    #[test]
    fn mean_of_rounds() {
        assert_eq!(mean(&[7]), Some(7.0));
        assert_eq!(mean(&[]), None);
        assert_eq!(mean(&[1, 2, 3, 4]), Some(2.5));
    }

    #[test]
    fn proportion_interval() {
        let p = Proportion::new(50, 100);
        assert_eq!(p.estimate, 0.5);
        let half = Z95 * 0.05 + 0.005;
        assert!((p.hi - 0.5 - half).abs() < 1e-12);
        let all = Proportion::new(10, 10);
        assert_eq!(all.hi, 1.0);
        assert!(all.lo < 1.0);
    }

    #[test]
    fn fit_recovers_line() {
        let xs = [7.0, 8.0, 9.0, 10.0];
        let ys: Vec<f64> = xs.iter().map(|x| 1.5 + 0.75 * x).collect();
        let f = linear_fit(&xs, &ys).unwrap();
        assert!((f.a - 1.5).abs() < 1e-12 && (f.b - 0.75).abs() < 1e-12);
        assert!(f.max_abs_residual < 1e-12);
        assert!(linear_fit(&[1.0], &[1.0]).is_none());
    }
}
