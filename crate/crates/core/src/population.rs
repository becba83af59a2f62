//! Agent-based realization of the language use game.
//!
//! Each round pairs every agent uniformly at random. Bilinguals carry a pure
//! strategy and earn the realized payoff of their single match; afterwards a
//! random subset revises by proportional imitation of another bilingual. In
//! expectation the share of revealers moves by `mu / range * rhs(x)` per
//! round, so the replicator attractor is the long-run mean.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::GameParams;
use crate::rng::{Domain, StreamKey};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Strategy {
    Reveal,
    Hide,
}

/// Agents `0..n_bilingual` are bilingual; the rest are monolingual.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AgentPopulation {
    n_total: usize,
    strategies: Vec<Strategy>,
    n_reveal: usize,
}

impl AgentPopulation {
    /// `round(alpha * n_total)` bilinguals, of whom `round(x0 * n_bilingual)`
    /// start as revealers.
    pub fn new(n_total: usize, alpha: f64, x0: f64) -> Result<Self> {
        if n_total < 2 {
            return Err(Error::param("population needs at least two agents"));
        }
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::param(format!("alpha = {alpha} outside (0,1)")));
        }
        if !(0.0..=1.0).contains(&x0) {
            return Err(Error::param(format!("initial revealer share {x0} outside [0,1]")));
        }
        let n_bilingual = (alpha * n_total as f64).round() as usize;
        if n_bilingual < 2 {
            return Err(Error::param("population has fewer than two bilinguals"));
        }
        let n_reveal = (x0 * n_bilingual as f64).round() as usize;
        let strategies = (0..n_bilingual)
            .map(|i| {
                if i < n_reveal {
                    Strategy::Reveal
                } else {
                    Strategy::Hide
                }
            })
            .collect();
        Ok(Self {
            n_total,
            strategies,
            n_reveal,
        })
    }

    pub fn from_strategies(n_total: usize, strategies: Vec<Strategy>) -> Result<Self> {
        if strategies.len() > n_total {
            return Err(Error::param("more bilinguals than agents"));
        }
        let n_reveal = strategies.iter().filter(|s| **s == Strategy::Reveal).count();
        Ok(Self {
            n_total,
            strategies,
            n_reveal,
        })
    }

    pub fn n_total(&self) -> usize {
        self.n_total
    }

    pub fn n_bilingual(&self) -> usize {
        self.strategies.len()
    }

    pub fn n_reveal(&self) -> usize {
        self.n_reveal
    }

    pub fn n_hide(&self) -> usize {
        self.strategies.len() - self.n_reveal
    }

    pub fn strategies(&self) -> &[Strategy] {
        &self.strategies
    }

    /// Share of bilinguals playing `R`.
    pub fn reveal_share(&self) -> f64 {
        self.n_reveal as f64 / self.strategies.len().max(1) as f64
    }
}

/// Kind of a match, ordered as (speaker, listener) for bilingual pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MatchType {
    RevealReveal,
    RevealHide,
    HideReveal,
    HideHide,
    BilingualMonolingual,
    MonolingualMonolingual,
}

impl MatchType {
    pub const ALL: [MatchType; 6] = [
        MatchType::RevealReveal,
        MatchType::RevealHide,
        MatchType::HideReveal,
        MatchType::HideHide,
        MatchType::BilingualMonolingual,
        MatchType::MonolingualMonolingual,
    ];

    /// Language under strong revealers: `B` whenever a revealer meets a
    /// bilingual, regardless of who speaks first.
    pub fn strong_language(self) -> Language {
        match self {
            MatchType::RevealReveal | MatchType::RevealHide | MatchType::HideReveal => Language::B,
            _ => Language::A,
        }
    }

    /// Language under weak revealers: `B` only when the speaker reveals and
    /// the listener is bilingual.
    pub fn weak_language(self) -> Language {
        match self {
            MatchType::RevealReveal | MatchType::RevealHide => Language::B,
            _ => Language::A,
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Language {
    A,
    B,
}

/// How a street survey records a conversation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Recorder {
    #[default]
    Strong,
    Weak,
}

impl std::str::FromStr for Recorder {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "strong" => Ok(Recorder::Strong),
            "weak" => Ok(Recorder::Weak),
            _ => Err(Error::param(format!("unknown recorder '{s}' (strong or weak)"))),
        }
    }
}

/// Match counts of one or more rounds.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConversationLog {
    counts: [u64; 6],
}

impl ConversationLog {
    pub fn record(&mut self, kind: MatchType) {
        self.counts[kind.index()] += 1;
    }

    pub fn count(&self, kind: MatchType) -> u64 {
        self.counts[kind.index()]
    }

    pub fn matches(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn merge(&mut self, other: &ConversationLog) {
        for (a, b) in self.counts.iter_mut().zip(other.counts) {
            *a += b;
        }
    }

    /// Individuals observed speaking `B` over all individuals observed.
    pub fn street_use(&self, recorder: Recorder) -> Result<f64> {
        let total = self.matches();
        if total == 0 {
            return Err(Error::Undefined("street use of an empty conversation log".into()));
        }
        let b: u64 = MatchType::ALL
            .iter()
            .filter(|k| {
                let lang = match recorder {
                    Recorder::Strong => k.strong_language(),
                    Recorder::Weak => k.weak_language(),
                };
                lang == Language::B
            })
            .map(|k| self.count(*k))
            .sum();
        // Two individuals per match on both sides of the ratio.
        Ok(b as f64 / total as f64)
    }
}

pub fn street_use_estimate(log: &ConversationLog, recorder: Recorder) -> Result<f64> {
    log.street_use(recorder)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundOutcome {
    pub log: ConversationLog,
    /// Realized payoff of each bilingual, indexed like the strategies.
    pub payoffs: Vec<f64>,
}

/// Plays one round of pairwise random matching.
///
/// An odd population is padded with one monolingual. The shuffle puts each
/// pair in uniformly random order, and the first member speaks.
pub fn run_round(pop: &AgentPopulation, p: &GameParams, key: StreamKey, round: u64) -> RoundOutcome {
    let n_bil = pop.n_bilingual();
    let padded = pop.n_total + pop.n_total % 2;
    let mut order: Vec<u32> = (0..padded as u32).collect();
    order.shuffle(&mut key.stream(Domain::Matching, round, 0));

    let mut log = ConversationLog::default();
    let mut payoffs = vec![0.0; n_bil];
    let strategy = |i: u32| pop.strategies.get(i as usize).copied();
    for pair in order.chunks_exact(2) {
        let (speaker, listener) = (pair[0], pair[1]);
        match (strategy(speaker), strategy(listener)) {
            (Some(s), Some(l)) => {
                let kind = match (s, l) {
                    (Strategy::Reveal, Strategy::Reveal) => MatchType::RevealReveal,
                    (Strategy::Reveal, Strategy::Hide) => MatchType::RevealHide,
                    (Strategy::Hide, Strategy::Reveal) => MatchType::HideReveal,
                    (Strategy::Hide, Strategy::Hide) => MatchType::HideHide,
                };
                let pay = if kind == MatchType::HideHide { p.n } else { p.m };
                payoffs[speaker as usize] = pay;
                payoffs[listener as usize] = pay;
                log.record(kind);
            }
            (Some(s), None) | (None, Some(s)) => {
                let bil = speaker.min(listener) as usize;
                payoffs[bil] = match s {
                    Strategy::Reveal => p.n - p.c,
                    Strategy::Hide => p.n,
                };
                log.record(MatchType::BilingualMonolingual);
            }
            (None, None) => log.record(MatchType::MonolingualMonolingual),
        }
    }
    RoundOutcome { log, payoffs }
}

/// Proportional imitation. Each bilingual, with probability `mu`, samples
/// another bilingual and adopts its strategy with probability
/// `max(0, pi_other - pi_self) / (m - (n - c))`. Updates are synchronous.
pub fn revise_strategies(
    pop: &AgentPopulation,
    payoffs: &[f64],
    mu: f64,
    p: &GameParams,
    key: StreamKey,
    round: u64,
) -> Result<AgentPopulation> {
    if !(0.0..=1.0).contains(&mu) {
        return Err(Error::param(format!("revision probability {mu} outside [0,1]")));
    }
    let n = pop.n_bilingual();
    if payoffs.len() != n {
        return Err(Error::param("payoff vector does not match the population"));
    }
    let range = p.m - (p.n - p.c);
    if range.is_nan() || range <= 0.0 {
        return Err(Error::param("payoff range m - (n - c) must be positive"));
    }
    let mut rng = key.stream(Domain::Revision, round, 0);
    let mut next = pop.strategies.clone();
    let mut n_reveal = pop.n_reveal;
    for i in 0..n {
        if rng.random::<f64>() >= mu {
            continue;
        }
        let mut j = rng.random_range(0..n - 1);
        if j >= i {
            j += 1;
        }
        let (own, other) = (pop.strategies[i], pop.strategies[j]);
        if own == other {
            continue;
        }
        let gain = payoffs[j] - payoffs[i];
        if gain > 0.0 && rng.random::<f64>() < gain / range {
            next[i] = other;
            match other {
                Strategy::Reveal => n_reveal += 1,
                Strategy::Hide => n_reveal -= 1,
            }
        }
    }
    Ok(AgentPopulation {
        n_total: pop.n_total,
        strategies: next,
        n_reveal,
    })
}

/// Configuration of a simulation run, read from JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub seed: u64,
    pub n_total: usize,
    pub alpha: f64,
    pub m: f64,
    pub n: f64,
    pub c: f64,
    pub mu: f64,
    pub rounds: u64,
    #[serde(default)]
    pub recorder: Recorder,
    #[serde(default = "default_x0")]
    pub x0: f64,
}

fn default_x0() -> f64 {
    0.1
}

impl SimConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: SimConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn game(&self) -> GameParams {
        GameParams::new(self.alpha, self.m, self.n, self.c)
    }

    pub fn validate(&self) -> Result<()> {
        self.game().check_basic()?;
        if !(0.0..=1.0).contains(&self.mu) {
            return Err(Error::param(format!("mu = {} outside [0,1]", self.mu)));
        }
        if !(0.0..=1.0).contains(&self.x0) {
            return Err(Error::param(format!("x0 = {} outside [0,1]", self.x0)));
        }
        if self.n_total > u32::MAX as usize - 1 {
            return Err(Error::param("population too large"));
        }
        AgentPopulation::new(self.n_total, self.alpha, self.x0).map(|_| ())
    }
}

/// One row of the simulation time series: the state during `round` and the
/// street use recorded in it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimRow {
    pub round: u64,
    pub x: f64,
    pub ke_strong: f64,
    pub ke_weak: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimOutput {
    pub rows: Vec<SimRow>,
    pub final_population: AgentPopulation,
    /// Conversation counts pooled over all rounds.
    pub pooled_log: ConversationLog,
}

impl SimOutput {
    /// Mean of `x` over rounds strictly after `burn_in`.
    pub fn mean_share_after(&self, burn_in: u64) -> Option<f64> {
        mean(self.rows.iter().filter(|r| r.round > burn_in).map(|r| r.x))
    }

    /// Pooled street use over rounds strictly after `burn_in`.
    pub fn mean_street_use_after(&self, burn_in: u64, recorder: Recorder) -> Option<f64> {
        mean(
            self.rows
                .iter()
                .filter(|r| r.round > burn_in)
                .map(|r| match recorder {
                    Recorder::Strong => r.ke_strong,
                    Recorder::Weak => r.ke_weak,
                }),
        )
    }
}

fn mean(it: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = it.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

pub fn simulate(cfg: &SimConfig) -> Result<SimOutput> {
    cfg.validate()?;
    let p = cfg.game();
    let key = StreamKey::new(cfg.seed);
    let mut pop = AgentPopulation::new(cfg.n_total, cfg.alpha, cfg.x0)?;
    let mut rows = Vec::with_capacity(cfg.rounds as usize);
    let mut pooled = ConversationLog::default();
    for round in 1..=cfg.rounds {
        let out = run_round(&pop, &p, key, round);
        rows.push(SimRow {
            round,
            x: pop.reveal_share(),
            ke_strong: out.log.street_use(Recorder::Strong)?,
            ke_weak: out.log.street_use(Recorder::Weak)?,
        });
        pooled.merge(&out.log);
        pop = revise_strategies(&pop, &out.payoffs, cfg.mu, &p, key, round)?;
    }
    Ok(SimOutput {
        rows,
        final_population: pop,
        pooled_log: pooled,
    })
}
