//! Experiment grids, per-trial CSV rows, per-cell summaries and figure data.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use rayon::prelude::*;

use crate::config::{AdversaryKind, ProtocolKind, TrialConfig};
use crate::engine::{run_trial, EngineError};
use crate::protocol::{message_budget, MultiParams};
use crate::rng::derive_trial_seed;
use crate::stats::{mean, percentile_nearest_rank};
use crate::types::{Fraction, MultiValue};

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("record {record}: {reason}")]
    Malformed { record: usize, reason: String },
    #[error("missing grid cells: {}", .0.join(", "))]
    MissingCells(Vec<String>),
}

/// Cartesian product of sizes, blocking fractions and `(k, l)` pairs over a
/// base configuration. Cells are ordered by `(k, l)`, then `n`, then epsilon.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub base: TrialConfig,
    pub ns: Vec<usize>,
    pub epsilons: Vec<Fraction>,
    pub kl: Vec<(usize, usize)>,
}

impl Grid {
    pub fn single(base: TrialConfig) -> Self {
        Grid {
            ns: vec![base.n],
            epsilons: vec![base.epsilon],
            kl: vec![(base.k, base.l)],
            base,
        }
    }

    pub fn cells(&self) -> Vec<TrialConfig> {
        let mut out = Vec::new();
        for &(k, l) in &self.kl {
            for &n in &self.ns {
                for &epsilon in &self.epsilons {
                    out.push(TrialConfig {
                        n,
                        epsilon,
                        k,
                        l,
                        ..self.base.clone()
                    });
                }
            }
        }
        out
    }
}

/// One row of the experiment CSV.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrialRow {
    pub trial_id: u64,
    pub n: usize,
    pub epsilon: Fraction,
    pub k: usize,
    pub l: usize,
    pub protocol: ProtocolKind,
    pub adversary: AdversaryKind,
    pub lateness: u32,
    pub seed: u64,
    pub outcome: String,
    pub rounds: u32,
    /// Holders of the most common defined value at the end.
    pub final_majority: usize,
    pub final_bot: usize,
    pub decided_count: usize,
    /// Distinct values among all outputs; above 1 means disagreement.
    pub distinct_decisions: usize,
    /// Multi-value only: nodes that decided `x*`.
    pub x_star_agree: Option<usize>,
    pub validity_violations: usize,
    pub messages_sent: u64,
    /// Multi-value only: the message bound for this trial.
    pub message_budget: Option<u64>,
}

pub const CSV_HEADER: [&str; 19] = [
    "trial_id",
    "n",
    "epsilon",
    "k",
    "l",
    "protocol",
    "adversary",
    "lateness",
    "seed",
    "outcome",
    "rounds",
    "final_majority",
    "final_bot",
    "decided_count",
    "distinct_decisions",
    "x_star_agree",
    "validity_violations",
    "messages_sent",
    "message_budget",
];

fn opt<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map(T::to_string).unwrap_or_default()
}

impl TrialRow {
    fn record(&self) -> Vec<String> {
        vec![
            self.trial_id.to_string(),
            self.n.to_string(),
            self.epsilon.to_string(),
            self.k.to_string(),
            self.l.to_string(),
            self.protocol.to_string(),
            self.adversary.to_string(),
            self.lateness.to_string(),
            self.seed.to_string(),
            self.outcome.clone(),
            self.rounds.to_string(),
            self.final_majority.to_string(),
            self.final_bot.to_string(),
            self.decided_count.to_string(),
            self.distinct_decisions.to_string(),
            opt(&self.x_star_agree),
            self.validity_violations.to_string(),
            self.messages_sent.to_string(),
            opt(&self.message_budget),
        ]
    }

    fn from_record(idx: usize, rec: &csv::StringRecord) -> Result<Self, HarnessError> {
        if rec.len() != CSV_HEADER.len() {
            return Err(HarnessError::Malformed {
                record: idx,
                reason: format!("expected {} fields, found {}", CSV_HEADER.len(), rec.len()),
            });
        }
        fn field<T: std::str::FromStr>(idx: usize, rec: &csv::StringRecord, col: usize) -> Result<T, HarnessError> {
            rec[col].parse().map_err(|_| HarnessError::Malformed {
                record: idx,
                reason: format!("bad {} {:?}", CSV_HEADER[col], &rec[col]),
            })
        }
        fn opt_field<T: std::str::FromStr>(
            idx: usize,
            rec: &csv::StringRecord,
            col: usize,
        ) -> Result<Option<T>, HarnessError> {
            if rec[col].is_empty() {
                Ok(None)
            } else {
                field(idx, rec, col).map(Some)
            }
        }
        let outcome = rec[9].to_string();
        if !["Success", "AdversaryWin", "Timeout"].contains(&outcome.as_str()) {
            return Err(HarnessError::Malformed {
                record: idx,
                reason: format!("unknown outcome {outcome:?}"),
            });
        }
        Ok(TrialRow {
            trial_id: field(idx, rec, 0)?,
            n: field(idx, rec, 1)?,
            epsilon: field(idx, rec, 2)?,
            k: field(idx, rec, 3)?,
            l: field(idx, rec, 4)?,
            protocol: field(idx, rec, 5)?,
            adversary: field(idx, rec, 6)?,
            lateness: field(idx, rec, 7)?,
            seed: field(idx, rec, 8)?,
            outcome,
            rounds: field(idx, rec, 10)?,
            final_majority: field(idx, rec, 11)?,
            final_bot: field(idx, rec, 12)?,
            decided_count: field(idx, rec, 13)?,
            distinct_decisions: field(idx, rec, 14)?,
            x_star_agree: opt_field(idx, rec, 15)?,
            validity_violations: field(idx, rec, 16)?,
            messages_sent: field(idx, rec, 17)?,
            message_budget: opt_field(idx, rec, 18)?,
        })
    }

    pub fn is_success(&self) -> bool {
        self.outcome == "Success"
    }
}

/// Run one trial and flatten it into a row.
pub fn run_row(trial_id: u64, cfg: &TrialConfig) -> Result<TrialRow, EngineError> {
    let (res, _) = run_trial(cfg)?;
    let final_majority = res
        .final_counts
        .iter()
        .filter(|(v, _)| !v.is_bot())
        .map(|(_, &c)| c)
        .max()
        .unwrap_or(0);
    let decided = res.decided_values();
    let multi = cfg.protocol == ProtocolKind::MultiValue;
    Ok(TrialRow {
        trial_id,
        n: cfg.n,
        epsilon: cfg.epsilon,
        k: cfg.k,
        l: cfg.l,
        protocol: cfg.protocol,
        adversary: cfg.adversary,
        lateness: cfg.lateness,
        seed: cfg.seed,
        outcome: res.outcome.label().to_string(),
        rounds: res.rounds,
        final_majority,
        final_bot: res.count_of(MultiValue::Bot),
        decided_count: res.decisions.values().filter(|d| !d.value.is_bot()).count(),
        distinct_decisions: decided.iter().filter(|v| !v.is_bot()).count(),
        x_star_agree: if multi {
            Some(res.x_star.map_or(0, |x| {
                res.decisions
                    .values()
                    .filter(|d| d.value == MultiValue::Val(x))
                    .count()
            }))
        } else {
            None
        },
        validity_violations: res.validity_violations,
        messages_sent: res.messages_sent,
        message_budget: if multi {
            Some(message_budget(&MultiParams::from_config(cfg), res.initial_active.unwrap_or(0)))
        } else {
            None
        },
    })
}

/// Run `trials` trials per grid cell. Trial ids count up across cells in
/// grid order; trial `id` uses seed `derive_trial_seed(master_seed, id)`.
/// Rows come back sorted by id whether or not the work is spread over threads.
pub fn run_experiment_with(
    grid: &Grid,
    trials: u64,
    master_seed: u64,
    parallel: bool,
) -> Result<Vec<TrialRow>, EngineError> {
    let jobs: Vec<(u64, TrialConfig)> = grid
        .cells()
        .into_iter()
        .enumerate()
        .flat_map(|(c, cell)| {
            (0..trials).map(move |i| {
                let id = c as u64 * trials + i;
                let cfg = TrialConfig {
                    seed: derive_trial_seed(master_seed, id),
                    ..cell.clone()
                };
                (id, cfg)
            })
        })
        .collect();
    if parallel {
        jobs.par_iter().map(|(id, cfg)| run_row(*id, cfg)).collect()
    } else {
        jobs.iter().map(|(id, cfg)| run_row(*id, cfg)).collect()
    }
}

pub fn run_experiment(grid: &Grid, trials: u64, master_seed: u64) -> Result<Vec<TrialRow>, EngineError> {
    run_experiment_with(grid, trials, master_seed, true)
}

pub fn write_csv<W: Write>(rows: &[TrialRow], out: W) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in rows {
        w.write_record(r.record())?;
    }
    w.flush()?;
    Ok(())
}

pub fn to_csv_string(rows: &[TrialRow]) -> String {
    let mut buf = Vec::new();
    write_csv(rows, &mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("csv output is utf-8")
}

pub fn read_csv<R: Read>(input: R) -> Result<Vec<TrialRow>, HarnessError> {
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers()?.clone();
    if header.iter().ne(CSV_HEADER.iter().copied()) {
        return Err(HarnessError::Malformed {
            record: 0,
            reason: "unexpected header".into(),
        });
    }
    r.records()
        .enumerate()
        .map(|(i, rec)| TrialRow::from_record(i + 1, &rec?))
        .collect()
}

/// Grid coordinates identifying a summary cell.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CellKey {
    pub protocol: String,
    pub adversary: String,
    pub lateness: u32,
    pub k: usize,
    pub l: usize,
    pub n: usize,
    pub epsilon: Fraction,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellSummary {
    pub key: CellKey,
    pub trials: usize,
    pub successes: usize,
    pub success_rate: f64,
    /// Over successful trials; absent when there are none.
    pub mean_rounds: Option<f64>,
    pub p95_rounds: Option<u32>,
    /// Over all trials.
    pub mean_rounds_all: Option<f64>,
    pub p95_rounds_all: Option<u32>,
}

pub fn summarize(rows: &[TrialRow]) -> Vec<CellSummary> {
    let mut cells: BTreeMap<CellKey, Vec<&TrialRow>> = BTreeMap::new();
    for r in rows {
        let key = CellKey {
            protocol: r.protocol.to_string(),
            adversary: r.adversary.to_string(),
            lateness: r.lateness,
            k: r.k,
            l: r.l,
            n: r.n,
            epsilon: r.epsilon,
        };
        cells.entry(key).or_default().push(r);
    }
    cells
        .into_iter()
        .map(|(key, rs)| {
            let ok: Vec<u32> = rs.iter().filter(|r| r.is_success()).map(|r| r.rounds).collect();
            let all: Vec<u32> = rs.iter().map(|r| r.rounds).collect();
            CellSummary {
                key,
                trials: rs.len(),
                successes: ok.len(),
                success_rate: ok.len() as f64 / rs.len() as f64,
                mean_rounds: mean(&ok),
                p95_rounds: percentile_nearest_rank(&ok, 95.0),
                mean_rounds_all: mean(&all),
                p95_rounds_all: percentile_nearest_rank(&all, 95.0),
            }
        })
        .collect()
}

pub const SUMMARY_HEADER: [&str; 14] = [
    "protocol",
    "adversary",
    "lateness",
    "k",
    "l",
    "n",
    "epsilon",
    "trials",
    "success_rate",
    "mean_rounds",
    "p95_rounds",
    "mean_rounds_all",
    "p95_rounds_all",
    "successes",
];

fn fmt_mean(m: Option<f64>) -> String {
    m.map(|m| format!("{m:.3}")).unwrap_or_default()
}

pub fn write_summary_csv<W: Write>(summary: &[CellSummary], out: W) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SUMMARY_HEADER)?;
    for s in summary {
        w.write_record([
            s.key.protocol.clone(),
            s.key.adversary.clone(),
            s.key.lateness.to_string(),
            s.key.k.to_string(),
            s.key.l.to_string(),
            s.key.n.to_string(),
            s.key.epsilon.to_string(),
            s.trials.to_string(),
            format!("{:.4}", s.success_rate),
            fmt_mean(s.mean_rounds),
            opt(&s.p95_rounds),
            fmt_mean(s.mean_rounds_all),
            opt(&s.p95_rounds_all),
            s.successes.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Figure {
    /// (6,3), epsilon in {1/17, ..., 1/14}.
    Fig1,
    /// (12,3), epsilon in {1/17, ..., 1/5}.
    Fig2,
}

impl std::str::FromStr for Figure {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "fig1" => Ok(Figure::Fig1),
            "fig2" => Ok(Figure::Fig2),
            _ => Err(format!("unknown figure {s:?} (expected fig1 | fig2)")),
        }
    }
}

pub const FIGURE_NS: [usize; 6] = [128, 256, 512, 1024, 2048, 4096];

impl Figure {
    pub fn kl(self) -> (usize, usize) {
        match self {
            Figure::Fig1 => (6, 3),
            Figure::Fig2 => (12, 3),
        }
    }

    pub fn epsilons(self) -> Vec<Fraction> {
        let last = match self {
            Figure::Fig1 => 14,
            Figure::Fig2 => 5,
        };
        (last..=17).rev().map(|d| Fraction::new(1, d).unwrap()).collect()
    }

    /// The figure's grid against the late balancer with lateness 1.
    pub fn grid(self, ns: &[usize]) -> Grid {
        Grid {
            base: TrialConfig {
                adversary: AdversaryKind::LateBalancer,
                lateness: 1,
                ..TrialConfig::default()
            },
            ns: ns.to_vec(),
            epsilons: self.epsilons(),
            kl: vec![self.kl()],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FigureRow {
    pub n: usize,
    pub epsilon: Fraction,
    pub mean: Option<f64>,
    pub p95: Option<u32>,
    pub success_rate: f64,
}

/// Bar-chart layout of a figure: one row per `(n, epsilon)` of the figure's
/// full grid. Fails listing every cell the summary lacks.
pub fn emit_figure_data(summary: &[CellSummary], figure: Figure) -> Result<Vec<FigureRow>, HarnessError> {
    emit_figure_data_for(summary, figure, &FIGURE_NS)
}

/// [`emit_figure_data`] restricted to the sizes in `ns`.
pub fn emit_figure_data_for(
    summary: &[CellSummary],
    figure: Figure,
    ns: &[usize],
) -> Result<Vec<FigureRow>, HarnessError> {
    let (k, l) = figure.kl();
    let mut rows = Vec::new();
    let mut missing = Vec::new();
    for &n in ns {
        for eps in figure.epsilons() {
            let hit = summary.iter().find(|s| {
                s.key.k == k && s.key.l == l && s.key.n == n && s.key.epsilon == eps && s.key.protocol == "binary"
            });
            match hit {
                Some(s) => rows.push(FigureRow {
                    n,
                    epsilon: eps,
                    mean: s.mean_rounds,
                    p95: s.p95_rounds,
                    success_rate: s.success_rate,
                }),
                None => missing.push(format!("(n={n}, epsilon={eps})")),
            }
        }
    }
    if missing.is_empty() {
        Ok(rows)
    } else {
        Err(HarnessError::MissingCells(missing))
    }
}

pub fn write_figure_csv<W: Write>(rows: &[FigureRow], out: W) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["n", "epsilon", "mean", "p95", "success_rate"])?;
    for r in rows {
        w.write_record([
            r.n.to_string(),
            r.epsilon.to_string(),
            fmt_mean(r.mean),
            opt(&r.p95),
            format!("{:.4}", r.success_rate),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_grid() -> Grid {
        Grid {
            base: TrialConfig::default(),
            ns: vec![64, 128],
            epsilons: vec![Fraction::new(1, 17).unwrap(), Fraction::new(1, 16).unwrap()],
            kl: vec![(6, 3)],
        }
    }

    #[test]
    fn zero_trials_gives_header_only() {
        let rows = run_experiment(&small_grid(), 0, 1).unwrap();
        assert!(rows.is_empty());
        assert_eq!(to_csv_string(&rows), CSV_HEADER.join(",") + "\n");
    }

    #[test]
    fn ids_and_seeds() {
        let rows = run_experiment(&small_grid(), 3, 9).unwrap();
        assert_eq!(rows.len(), 12);
        for (i, r) in rows.iter().enumerate() {
            assert_eq!(r.trial_id, i as u64);
            assert_eq!(r.seed, derive_trial_seed(9, i as u64));
        }
        assert_eq!((rows[0].n, rows[3].n), (64, 64));
        assert_eq!(rows[6].n, 128);
    }

    #[test]
    fn csv_roundtrip() {
        let mut rows = run_experiment(&small_grid(), 2, 4).unwrap();
        let mv = TrialConfig {
            n: 64,
            protocol: ProtocolKind::MultiValue,
            adversary: AdversaryKind::Random,
            ..TrialConfig::default()
        };
        rows.push(run_row(99, &mv).unwrap());
        let text = to_csv_string(&rows);
        assert_eq!(read_csv(text.as_bytes()).unwrap(), rows);
    }

    #[test]
    fn malformed_csv_is_rejected() {
        assert!(read_csv("a,b\n1,2\n".as_bytes()).is_err());
        let mut text = CSV_HEADER.join(",");
        text.push_str("\n1,2,3\n");
        assert!(matches!(read_csv(text.as_bytes()), Err(HarnessError::Csv(_)) | Err(HarnessError::Malformed { .. })));
    }

    fn row(rounds: u32, outcome: &str) -> TrialRow {
        TrialRow {
            trial_id: 0,
            n: 128,
            epsilon: Fraction::new(1, 17).unwrap(),
            k: 6,
            l: 3,
            protocol: ProtocolKind::BinaryMajority,
            adversary: AdversaryKind::LateBalancer,
            lateness: 1,
            seed: 0,
            outcome: outcome.into(),
            rounds,
            final_majority: 0,
            final_bot: 0,
            decided_count: 0,
            distinct_decisions: 0,
            x_star_agree: None,
            validity_violations: 0,
            messages_sent: 0,
            message_budget: None,
        }
    }

    #[test]
    fn summary_examples() {
        let s = summarize(&[row(7, "Success")]);
        assert_eq!(s.len(), 1);
        assert_eq!((s[0].mean_rounds, s[0].p95_rounds), (Some(7.0), Some(7)));

        let s = summarize(&[row(3, "AdversaryWin"), row(4, "AdversaryWin")]);
        assert_eq!(s[0].success_rate, 0.0);
        assert_eq!((s[0].mean_rounds, s[0].p95_rounds), (None, None));
        assert_eq!(s[0].mean_rounds_all, Some(3.5));
    }

    #[test]
    fn empty_summary_lists_every_cell() {
        match emit_figure_data(&[], Figure::Fig1) {
            Err(HarnessError::MissingCells(cells)) => {
                assert_eq!(cells.len(), 24);
                assert!(cells.contains(&"(n=512, epsilon=1/14)".to_string()));
            }
            other => panic!("{other:?}"),
        }
        assert_eq!(Figure::Fig2.epsilons().len(), 13);
    }
}
