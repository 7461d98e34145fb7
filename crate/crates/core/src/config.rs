//! Trial configuration: defaults, flat `key=value` loading and validation.

use std::fmt;
use std::str::FromStr;

use crate::types::Fraction;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("unknown configuration key {0:?}")]
    UnknownKey(String),
    #[error("invalid value {value:?} for {key}: {reason}")]
    BadValue {
        key: String,
        value: String,
        reason: String,
    },
    #[error("line {line}: expected key=value, got {text:?}")]
    Syntax { line: usize, text: String },
    #[error("ℓ must be odd (got l={0})")]
    EvenSampleSize(usize),
    #[error("fanout k={k} must be at least the sample size l={l}")]
    FanoutBelowSample { k: usize, l: usize },
    #[error("ε out of range: {0} (need 0 <= ε < 1)")]
    EpsilonOutOfRange(Fraction),
    #[error("n must be at least 1")]
    EmptySystem,
    #[error("max_rounds must be at least 1")]
    NoRounds,
    #[error("{name} must be positive (got {value})")]
    NonPositive { name: &'static str, value: f64 },
    #[error("adversary {adversary} cannot be paired with {reason}")]
    Pairing {
        adversary: AdversaryKind,
        reason: String,
    },
    #[error("carryover blocking {0}")]
    Carryover(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ProtocolKind {
    /// The (k,ℓ)-majority push protocol with the decision rule.
    BinaryMajority,
    /// Max-rule spreading with random activation.
    MultiValue,
    /// Pull-based median rule baseline.
    MedianPull,
}

impl ProtocolKind {
    pub fn id(self) -> &'static str {
        match self {
            ProtocolKind::BinaryMajority => "binary",
            ProtocolKind::MultiValue => "multivalue",
            ProtocolKind::MedianPull => "median",
        }
    }
}

impl fmt::Display for ProtocolKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for ProtocolKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "binary" | "majority" | "binary-majority" => Ok(ProtocolKind::BinaryMajority),
            "multivalue" | "multi-value" | "multi" => Ok(ProtocolKind::MultiValue),
            "median" | "median-pull" => Ok(ProtocolKind::MedianPull),
            _ => Err("expected binary | multivalue | median".into()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AdversaryKind {
    None,
    Random,
    LateBalancer,
    StrongBalancer,
}

impl AdversaryKind {
    pub fn id(self) -> &'static str {
        match self {
            AdversaryKind::None => "none",
            AdversaryKind::Random => "random",
            AdversaryKind::LateBalancer => "late-balancer",
            AdversaryKind::StrongBalancer => "strong-balancer",
        }
    }
}

impl fmt::Display for AdversaryKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for AdversaryKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "none" => Ok(AdversaryKind::None),
            "random" => Ok(AdversaryKind::Random),
            "late-balancer" => Ok(AdversaryKind::LateBalancer),
            "strong-balancer" => Ok(AdversaryKind::StrongBalancer),
            _ => Err("expected none | random | late-balancer | strong-balancer".into()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LogBase {
    Two,
    E,
}

impl LogBase {
    pub fn log(self, x: f64) -> f64 {
        match self {
            LogBase::Two => x.log2(),
            LogBase::E => x.ln(),
        }
    }
}

impl fmt::Display for LogBase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LogBase::Two => "2",
            LogBase::E => "e",
        })
    }
}

impl FromStr for LogBase {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "2" => Ok(LogBase::Two),
            "e" => Ok(LogBase::E),
            _ => Err("expected 2 or e".into()),
        }
    }
}

/// When a block takes effect.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BlockSemantics {
    /// `Carryover` for the binary protocol against a late adversary, `Round`
    /// otherwise.
    Auto,
    /// A node in `B_t` is cut off for round `t` only: it receives nothing,
    /// resets, and sends nothing in round `t`.
    Round,
    /// Binary protocol only. `B_t` is announced at the end of round `t-1`:
    /// the blocked node throws away the value it just computed (its messages
    /// of round `t-1` are withdrawn) and is then cut off for all of round `t`.
    /// The first announcement follows the first update step, so rounds 1
    /// and 2 are never blocked.
    Carryover,
}

impl fmt::Display for BlockSemantics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BlockSemantics::Auto => "auto",
            BlockSemantics::Round => "round",
            BlockSemantics::Carryover => "carryover",
        })
    }
}

impl FromStr for BlockSemantics {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "auto" => Ok(BlockSemantics::Auto),
            "round" => Ok(BlockSemantics::Round),
            "carryover" => Ok(BlockSemantics::Carryover),
            _ => Err("expected auto | round | carryover".into()),
        }
    }
}

/// Everything that determines a trial. Two equal configs replay identically.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialConfig {
    pub n: usize,
    pub epsilon: Fraction,
    pub protocol: ProtocolKind,
    pub k: usize,
    pub l: usize,
    /// Decision window is `ceil(alpha * ln n)` rounds.
    pub alpha: f64,
    /// Activation probability `c1 log n / n`.
    pub c1: f64,
    /// Initial fanout `ceil(c2 log n)`.
    pub c2: f64,
    /// Spreading iterations `ceil(c3 log n)`.
    pub c3: f64,
    pub log_base: LogBase,
    pub adversary: AdversaryKind,
    pub lateness: u32,
    /// `None` means `ceil(40 log2 n)`.
    pub max_rounds: Option<u32>,
    pub seed: u64,
    pub blocked_reset_mv: bool,
    pub initial_bias: u64,
    pub block_semantics: BlockSemantics,
    /// Keep executing after the outcome is fixed, until every node has
    /// produced an output or `max_rounds` is reached.
    pub continue_after_outcome: bool,
    /// Multi-value inputs are drawn uniformly from `1..=mv_domain`; `None` means `n*n`.
    pub mv_domain: Option<u64>,
}

impl Default for TrialConfig {
    fn default() -> Self {
        TrialConfig {
            n: 1024,
            epsilon: Fraction::new(1, 16).unwrap(),
            protocol: ProtocolKind::BinaryMajority,
            k: 6,
            l: 3,
            alpha: 4.0,
            c1: 4.0,
            c2: 4.0,
            c3: 4.0,
            log_base: LogBase::Two,
            adversary: AdversaryKind::LateBalancer,
            lateness: 1,
            max_rounds: None,
            seed: 0,
            blocked_reset_mv: true,
            initial_bias: 0,
            block_semantics: BlockSemantics::Auto,
            continue_after_outcome: false,
            mv_domain: None,
        }
    }
}

pub const CONFIG_KEYS: &[&str] = &[
    "n",
    "epsilon",
    "protocol",
    "k",
    "l",
    "alpha",
    "c1",
    "c2",
    "c3",
    "log_base",
    "adversary",
    "lateness",
    "max_rounds",
    "seed",
    "blocked_reset_mv",
    "initial_bias",
    "block_semantics",
    "continue_after_outcome",
    "mv_domain",
];

fn parse_field<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: fmt::Display,
{
    value.parse::<T>().map_err(|e| ConfigError::BadValue {
        key: key.to_string(),
        value: value.to_string(),
        reason: e.to_string(),
    })
}

fn parse_auto<T: FromStr>(key: &str, value: &str) -> Result<Option<T>, ConfigError>
where
    T::Err: fmt::Display,
{
    if value == "auto" {
        Ok(None)
    } else {
        parse_field(key, value).map(Some)
    }
}

impl TrialConfig {
    /// Overwrite one field from its textual form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let value = value.trim();
        match key {
            "n" => self.n = parse_field(key, value)?,
            "epsilon" => self.epsilon = parse_field(key, value)?,
            "protocol" => self.protocol = parse_field(key, value)?,
            "k" => self.k = parse_field(key, value)?,
            "l" => self.l = parse_field(key, value)?,
            "alpha" => self.alpha = parse_field(key, value)?,
            "c1" => self.c1 = parse_field(key, value)?,
            "c2" => self.c2 = parse_field(key, value)?,
            "c3" => self.c3 = parse_field(key, value)?,
            "log_base" => self.log_base = parse_field(key, value)?,
            "adversary" => self.adversary = parse_field(key, value)?,
            "lateness" => self.lateness = parse_field(key, value)?,
            "max_rounds" => self.max_rounds = parse_auto(key, value)?,
            "seed" => self.seed = parse_field(key, value)?,
            "blocked_reset_mv" => self.blocked_reset_mv = parse_field(key, value)?,
            "initial_bias" => self.initial_bias = parse_field(key, value)?,
            "block_semantics" => self.block_semantics = parse_field(key, value)?,
            "continue_after_outcome" => self.continue_after_outcome = parse_field(key, value)?,
            "mv_domain" => self.mv_domain = parse_auto(key, value)?,
            _ => return Err(ConfigError::UnknownKey(key.to_string())),
        }
        Ok(())
    }

    /// Apply every `key=value` line of `text` on top of `self`.
    /// Blank lines and lines starting with `#` are skipped.
    pub fn apply_kv_text(&mut self, text: &str) -> Result<(), ConfigError> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line: i + 1,
                text: raw.to_string(),
            })?;
            self.set(key.trim(), value)?;
        }
        Ok(())
    }

    pub fn from_kv_text(text: &str) -> Result<TrialConfig, ConfigError> {
        let mut cfg = TrialConfig::default();
        cfg.apply_kv_text(text)?;
        Ok(cfg)
    }

    /// Serialize to the flat `key=value` form accepted by [`TrialConfig::from_kv_text`].
    pub fn to_kv_text(&self) -> String {
        let auto = |v: Option<String>| v.unwrap_or_else(|| "auto".to_string());
        let pairs: Vec<(&str, String)> = vec![
            ("n", self.n.to_string()),
            ("epsilon", self.epsilon.to_string()),
            ("protocol", self.protocol.to_string()),
            ("k", self.k.to_string()),
            ("l", self.l.to_string()),
            ("alpha", self.alpha.to_string()),
            ("c1", self.c1.to_string()),
            ("c2", self.c2.to_string()),
            ("c3", self.c3.to_string()),
            ("log_base", self.log_base.to_string()),
            ("adversary", self.adversary.to_string()),
            ("lateness", self.lateness.to_string()),
            ("max_rounds", auto(self.max_rounds.map(|v| v.to_string()))),
            ("seed", self.seed.to_string()),
            ("blocked_reset_mv", self.blocked_reset_mv.to_string()),
            ("initial_bias", self.initial_bias.to_string()),
            ("block_semantics", self.block_semantics.to_string()),
            ("continue_after_outcome", self.continue_after_outcome.to_string()),
            ("mv_domain", auto(self.mv_domain.map(|v| v.to_string()))),
        ];
        pairs
            .into_iter()
            .map(|(k, v)| format!("{k}={v}\n"))
            .collect()
    }

    /// Per-round blocking budget `floor(epsilon * n)`.
    pub fn budget(&self) -> usize {
        self.epsilon.floor_mul(self.n as u64) as usize
    }

    pub fn log_n(&self) -> f64 {
        self.log_base.log(self.n as f64)
    }

    pub fn effective_max_rounds(&self) -> u32 {
        self.max_rounds
            .unwrap_or_else(|| (40.0 * (self.n.max(2) as f64).log2()).ceil() as u32)
    }

    /// Decision window `W = ceil(alpha * ln n)`, at least one round.
    pub fn decision_window(&self) -> usize {
        ((self.alpha * (self.n as f64).ln()).ceil() as usize).max(1)
    }

    pub fn activation_probability(&self) -> f64 {
        (self.c1 * self.log_n() / self.n as f64).min(1.0)
    }

    pub fn initial_fanout(&self) -> usize {
        (self.c2 * self.log_n()).ceil() as usize
    }

    pub fn mv_iterations(&self) -> u32 {
        ((self.c3 * self.log_n()).ceil() as u32).max(1)
    }

    /// `block_semantics` with `Auto` resolved.
    pub fn effective_block_semantics(&self) -> BlockSemantics {
        match self.block_semantics {
            BlockSemantics::Auto
                if self.protocol == ProtocolKind::BinaryMajority
                    && self.lateness >= 1
                    && self.adversary != AdversaryKind::StrongBalancer =>
            {
                BlockSemantics::Carryover
            }
            BlockSemantics::Auto => BlockSemantics::Round,
            explicit => explicit,
        }
    }

    pub fn mv_domain_size(&self) -> u64 {
        self.mv_domain
            .unwrap_or_else(|| (self.n as u64).saturating_mul(self.n as u64))
            .max(1)
    }
}

/// Check every invariant of `cfg`, reporting the first violation.
pub fn validate_config(cfg: TrialConfig) -> Result<TrialConfig, ConfigError> {
    if cfg.n == 0 {
        return Err(ConfigError::EmptySystem);
    }
    if cfg.l % 2 == 0 {
        return Err(ConfigError::EvenSampleSize(cfg.l));
    }
    if cfg.k < cfg.l {
        return Err(ConfigError::FanoutBelowSample { k: cfg.k, l: cfg.l });
    }
    if cfg.epsilon >= Fraction::new(1, 1).unwrap() {
        return Err(ConfigError::EpsilonOutOfRange(cfg.epsilon));
    }
    if cfg.max_rounds == Some(0) {
        return Err(ConfigError::NoRounds);
    }
    for (name, value) in [("alpha", cfg.alpha), ("c1", cfg.c1), ("c2", cfg.c2), ("c3", cfg.c3)] {
        if !(value > 0.0 && value.is_finite()) {
            return Err(ConfigError::NonPositive { name, value });
        }
    }
    let pairing = |reason: &str| ConfigError::Pairing {
        adversary: cfg.adversary,
        reason: reason.to_string(),
    };
    match cfg.adversary {
        AdversaryKind::StrongBalancer => {
            if cfg.lateness != 0 {
                return Err(pairing("lateness >= 1 (it observes the current round)"));
            }
            if cfg.protocol == ProtocolKind::MultiValue {
                return Err(pairing("the multi-value protocol"));
            }
            if cfg.block_semantics == BlockSemantics::Carryover {
                return Err(pairing("carryover blocking"));
            }
        }
        AdversaryKind::LateBalancer if cfg.protocol == ProtocolKind::MultiValue => {
            return Err(pairing("the multi-value protocol (it reads binary values)"));
        }
        _ => {}
    }
    if cfg.block_semantics == BlockSemantics::Carryover {
        if cfg.protocol != ProtocolKind::BinaryMajority {
            return Err(ConfigError::Carryover("applies to the binary protocol only"));
        }
        if cfg.lateness == 0 {
            return Err(ConfigError::Carryover("needs lateness >= 1"));
        }
    }
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(n: usize, eps: (u64, u64), k: usize, l: usize) -> TrialConfig {
        TrialConfig {
            n,
            epsilon: Fraction::new(eps.0, eps.1).unwrap(),
            k,
            l,
            ..TrialConfig::default()
        }
    }

    #[test]
    fn six_three_at_one_sixteenth_is_accepted() {
        let c = cfg(128, (1, 16), 6, 3);
        assert_eq!(validate_config(c.clone()), Ok(c));
    }

    #[test]
    fn even_sample_rejected() {
        let err = validate_config(cfg(128, (1, 16), 6, 4)).unwrap_err();
        assert_eq!(err, ConfigError::EvenSampleSize(4));
        assert!(err.to_string().contains("ℓ must be odd"));
    }

    #[test]
    fn epsilon_above_one_rejected() {
        let mut c = cfg(128, (1, 16), 6, 3);
        c.set("epsilon", "1.5").unwrap();
        let err = validate_config(c).unwrap_err();
        assert!(matches!(err, ConfigError::EpsilonOutOfRange(_)));
        assert!(err.to_string().contains("ε out of range"));
        assert!(validate_config(cfg(128, (1, 1), 6, 3)).is_err());
    }

    #[test]
    fn other_invariants() {
        assert_eq!(
            validate_config(cfg(128, (1, 16), 2, 3)).unwrap_err(),
            ConfigError::FanoutBelowSample { k: 2, l: 3 }
        );
        assert_eq!(validate_config(cfg(0, (0, 1), 6, 3)).unwrap_err(), ConfigError::EmptySystem);
        let mut c = cfg(128, (1, 16), 6, 3);
        c.max_rounds = Some(0);
        assert_eq!(validate_config(c).unwrap_err(), ConfigError::NoRounds);
    }

    #[test]
    fn strong_adversary_needs_zero_lateness() {
        let mut c = cfg(128, (1, 16), 6, 3);
        c.adversary = AdversaryKind::StrongBalancer;
        c.block_semantics = BlockSemantics::Round;
        assert!(matches!(validate_config(c.clone()), Err(ConfigError::Pairing { .. })));
        c.lateness = 0;
        assert!(validate_config(c).is_ok());
    }

    #[test]
    fn carryover_restrictions() {
        let mut c = cfg(128, (1, 16), 6, 3);
        c.protocol = ProtocolKind::MedianPull;
        assert!(validate_config(c.clone()).is_ok());
        assert_eq!(c.effective_block_semantics(), BlockSemantics::Round);
        c.block_semantics = BlockSemantics::Carryover;
        assert!(matches!(validate_config(c.clone()), Err(ConfigError::Carryover(_))));
        c.protocol = ProtocolKind::BinaryMajority;
        c.lateness = 0;
        assert!(matches!(validate_config(c.clone()), Err(ConfigError::Carryover(_))));
    }

    #[test]
    fn auto_semantics() {
        let mut c = cfg(128, (1, 16), 6, 3);
        assert_eq!(c.effective_block_semantics(), BlockSemantics::Carryover);
        c.lateness = 0;
        assert_eq!(c.effective_block_semantics(), BlockSemantics::Round);
        c.lateness = 2;
        c.adversary = AdversaryKind::StrongBalancer;
        assert_eq!(c.effective_block_semantics(), BlockSemantics::Round);
    }

    #[test]
    fn kv_roundtrip_and_overrides() {
        let text = "# comment\nn = 512\nepsilon=1/15\n\nadversary=random\nmax_rounds=auto\n";
        let mut c = TrialConfig::from_kv_text(text).unwrap();
        assert_eq!(c.n, 512);
        assert_eq!(c.epsilon, Fraction::new(1, 15).unwrap());
        assert_eq!(c.adversary, AdversaryKind::Random);
        c.set("k", "12").unwrap();
        assert_eq!(c.k, 12);
        let back = TrialConfig::from_kv_text(&c.to_kv_text()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn kv_errors() {
        assert!(matches!(
            TrialConfig::from_kv_text("bogus=1"),
            Err(ConfigError::UnknownKey(_))
        ));
        assert!(matches!(
            TrialConfig::from_kv_text("n"),
            Err(ConfigError::Syntax { line: 1, .. })
        ));
        assert!(matches!(
            TrialConfig::from_kv_text("n=abc"),
            Err(ConfigError::BadValue { .. })
        ));
    }

    #[test]
    fn derived_quantities() {
        let c = cfg(1024, (1, 16), 6, 3);
        assert_eq!(c.budget(), 64);
        assert_eq!(c.effective_max_rounds(), 400);
        assert_eq!(c.decision_window(), 28);
        assert_eq!(c.initial_fanout(), 40);
        assert_eq!(c.mv_iterations(), 40);
        assert!((c.activation_probability() - 40.0 / 1024.0).abs() < 1e-15);
    }
}
