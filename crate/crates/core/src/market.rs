//! Agent-based marketplace with honest agents and scammers.
//!
//! Good consumers buy from random suppliers, rate good suppliers with a
//! random positive grade, and rate a bad supplier 0.0 once before
//! blacklisting it. Bad consumers pump bad suppliers with cheap transactions
//! rated 1.0. Consumers may restrict their choice to suppliers whose rank
//! clears the selection threshold.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::engine::{self, AgentId, EngineError, EngineParams, RatingMode, RatingRecord, ReputationState};
use crate::metrics::{self, MetricsReport};

/// Positive grades of the five-star scale.
pub const POSITIVE_GRADES: [f64; 4] = [0.25, 0.5, 0.75, 1.0];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScenarioError {
    #[error("{field}: {reason}")]
    InvalidConfig { field: &'static str, reason: String },
    #[error("{class} agents split into {consumers} consumers and {suppliers} suppliers; both must be non-zero")]
    DegenerateSplit {
        class: &'static str,
        consumers: usize,
        suppliers: usize,
    },
    #[error("bad consumer {0} cannot transact with good supplier {1}")]
    BadBuysFromGood(AgentId, AgentId),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

/// Whether and how consumers consult reputation when choosing suppliers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UsageMode {
    None,
    ExplicitUnweighted,
    ExplicitWeighted,
    ImplicitFinancial,
}

impl UsageMode {
    /// Rating mode consulted by consumers, if any.
    pub fn rating_mode(self) -> Option<RatingMode> {
        match self {
            UsageMode::None => None,
            UsageMode::ExplicitUnweighted => Some(RatingMode::ExplicitUnweighted),
            UsageMode::ExplicitWeighted => Some(RatingMode::ExplicitWeighted),
            UsageMode::ImplicitFinancial => Some(RatingMode::ImplicitFinancial),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self.rating_mode() {
            None => "none",
            Some(m) => m.as_str(),
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "none" => Some(UsageMode::None),
            _ => RatingMode::parse(s).map(UsageMode::from),
        }
    }
}

impl From<RatingMode> for UsageMode {
    fn from(m: RatingMode) -> Self {
        match m {
            RatingMode::ExplicitUnweighted => UsageMode::ExplicitUnweighted,
            RatingMode::ExplicitWeighted => UsageMode::ExplicitWeighted,
            RatingMode::ImplicitFinancial => UsageMode::ImplicitFinancial,
        }
    }
}

impl fmt::Display for UsageMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub n_agents: usize,
    pub days: u32,
    pub good_fraction: f64,
    /// 1.0 means every agent is both consumer and supplier.
    pub consumer_fraction: f64,
    /// Transactions per day of a bad consumer relative to a good one.
    pub bad_tx_rate_multiplier: u32,
    /// Spend of a good transaction relative to a bad one.
    pub good_value_ratio: f64,
    pub good_tx_per_day: f64,
    pub base_bad_value: f64,
    pub usage_mode: UsageMode,
    /// Rating mode of the reputation computed aside when `usage_mode` is none.
    pub measure_mode: RatingMode,
    pub selection_threshold: f64,
    /// When no supplier clears the threshold, choose among all
    /// non-blacklisted suppliers instead of skipping the purchase.
    pub fallback_to_random: bool,
    pub seed: u64,
    pub engine: EngineParams,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            n_agents: 100,
            days: 90,
            good_fraction: 0.8,
            consumer_fraction: 0.9,
            bad_tx_rate_multiplier: 10,
            good_value_ratio: 20.0,
            good_tx_per_day: 1.0,
            base_bad_value: 1.0,
            usage_mode: UsageMode::None,
            measure_mode: RatingMode::ExplicitWeighted,
            selection_threshold: 0.4,
            fallback_to_random: true,
            seed: 0,
            engine: EngineParams::default(),
        }
    }
}

impl ScenarioConfig {
    /// Rating mode the engine runs with.
    pub fn rating_mode(&self) -> RatingMode {
        self.usage_mode.rating_mode().unwrap_or(self.measure_mode)
    }

    pub fn is_overlap(&self) -> bool {
        self.consumer_fraction == 1.0
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let invalid = |field, reason: &str| {
            Err(ScenarioError::InvalidConfig {
                field,
                reason: reason.to_owned(),
            })
        };
        if self.n_agents < 2 {
            return invalid("n_agents", "must be at least 2");
        }
        if self.days < 1 {
            return invalid("days", "must be at least 1");
        }
        for (field, v) in [
            ("good_fraction", self.good_fraction),
            ("consumer_fraction", self.consumer_fraction),
            ("selection_threshold", self.selection_threshold),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return invalid(field, "must be in [0, 1]");
            }
        }
        if self.bad_tx_rate_multiplier < 1 {
            return invalid("bad_tx_rate_multiplier", "must be positive");
        }
        for (field, v) in [
            ("good_value_ratio", self.good_value_ratio),
            ("good_tx_per_day", self.good_tx_per_day),
            ("base_bad_value", self.base_bad_value),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return invalid(field, "must be positive");
            }
        }
        self.engine.validate()?;
        Ok(())
    }

    pub fn good_value(&self) -> f64 {
        self.base_bad_value * self.good_value_ratio
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Consumer,
    Supplier,
    Both,
}

impl Role {
    pub fn buys(self) -> bool {
        matches!(self, Role::Consumer | Role::Both)
    }

    pub fn sells(self) -> bool {
        matches!(self, Role::Supplier | Role::Both)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Agent {
    pub id: AgentId,
    pub good: bool,
    pub role: Role,
    /// Suppliers this consumer rated 0.0 and never buys from again.
    pub blacklist: BTreeSet<AgentId>,
}

/// One record plus the goodness of both parties.
#[derive(Debug, Clone, PartialEq)]
pub struct LogEntry {
    pub record: RatingRecord,
    pub rater_good: bool,
    pub ratee_good: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TransactionLog {
    pub entries: Vec<LogEntry>,
}

impl TransactionLog {
    pub fn records(&self) -> impl Iterator<Item = &RatingRecord> {
        self.entries.iter().map(|e| &e.record)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Purchase attempts, which are fixed by the config, and how many found no
/// eligible supplier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct AttemptStats {
    pub good_attempts: u64,
    pub bad_attempts: u64,
    pub skipped: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioOutcome {
    pub population: Vec<Agent>,
    pub log: TransactionLog,
    pub states: Vec<ReputationState>,
    pub report: MetricsReport,
    pub attempts: AttemptStats,
}

impl ScenarioOutcome {
    /// Expected goodness of every supplier: 1 for good, 0 for bad.
    pub fn expected(&self) -> BTreeMap<AgentId, f64> {
        expected_goodness(&self.population)
    }
}

pub fn expected_goodness(population: &[Agent]) -> BTreeMap<AgentId, f64> {
    population
        .iter()
        .filter(|a| a.role.sells())
        .map(|a| (a.id.clone(), if a.good { 1.0 } else { 0.0 }))
        .collect()
}

fn round_count(n: usize, fraction: f64) -> usize {
    ((n as f64) * fraction).round() as usize
}

/// Splits one goodness class into consumers and suppliers.
fn split_class(
    class: &'static str,
    size: usize,
    config: &ScenarioConfig,
) -> Result<(usize, usize), ScenarioError> {
    if size == 0 {
        return Ok((0, 0));
    }
    if config.is_overlap() {
        // Every member buys and sells; a bad consumer needs a bad peer.
        if class == "bad" && size < 2 {
            return Err(ScenarioError::DegenerateSplit {
                class,
                consumers: size,
                suppliers: size - 1,
            });
        }
        return Ok((size, size));
    }
    let consumers = round_count(size, config.consumer_fraction);
    let suppliers = size - consumers;
    if consumers == 0 || suppliers == 0 {
        return Err(ScenarioError::DegenerateSplit {
            class,
            consumers,
            suppliers,
        });
    }
    Ok((consumers, suppliers))
}

/// Creates the population with ids in shuffled order, so ids carry no role
/// or goodness information.
pub fn spawn_population(
    config: &ScenarioConfig,
    rng: &mut impl Rng,
) -> Result<Vec<Agent>, ScenarioError> {
    config.validate()?;
    let n_good = round_count(config.n_agents, config.good_fraction);
    let n_bad = config.n_agents - n_good;
    let mut slots: Vec<(bool, Role)> = Vec::with_capacity(config.n_agents);
    for (good, class, size) in [(true, "good", n_good), (false, "bad", n_bad)] {
        let (consumers, _) = split_class(class, size, config)?;
        if config.is_overlap() {
            slots.extend(std::iter::repeat_n((good, Role::Both), size));
        } else {
            slots.extend(std::iter::repeat_n((good, Role::Consumer), consumers));
            slots.extend(std::iter::repeat_n((good, Role::Supplier), size - consumers));
        }
    }
    slots.shuffle(rng);
    let width = (config.n_agents - 1).to_string().len();
    Ok(slots
        .into_iter()
        .enumerate()
        .map(|(i, (good, role))| Agent {
            id: AgentId::new(format!("a{i:0width$}")),
            good,
            role,
            blacklist: BTreeSet::new(),
        })
        .collect())
}

/// Picks a supplier for one purchase attempt, or `None` when no supplier is
/// eligible.
///
/// `reputation` is consulted only by good consumers and only when the usage
/// mode is not none; suppliers missing from it count at the default rank.
/// If no supplier clears the threshold the consumer either skips or, with
/// `fallback_to_random`, picks blindly among non-blacklisted suppliers.
pub fn select_supplier<'a>(
    consumer: &Agent,
    suppliers: &'a [Agent],
    reputation: Option<&ReputationState>,
    config: &ScenarioConfig,
    rng: &mut impl Rng,
) -> Option<&'a Agent> {
    let threshold = match (consumer.good, config.usage_mode, reputation) {
        (true, UsageMode::None, _) | (true, _, None) | (false, _, _) => None,
        (true, _, Some(state)) => Some(state),
    };
    let eligible: Vec<&Agent> = suppliers
        .iter()
        .filter(|s| s.id != consumer.id && s.role.sells())
        .filter(|s| {
            if !consumer.good {
                return !s.good;
            }
            if consumer.blacklist.contains(&s.id) {
                return false;
            }
            match threshold {
                Some(state) => {
                    state.rank(&s.id).unwrap_or(config.engine.default_rank)
                        >= config.selection_threshold
                }
                None => true,
            }
        })
        .collect();
    if eligible.is_empty() && threshold.is_some() && config.fallback_to_random {
        let open: Vec<&Agent> = suppliers
            .iter()
            .filter(|s| s.id != consumer.id && s.role.sells() && !consumer.blacklist.contains(&s.id))
            .collect();
        return open.choose(rng).copied();
    }
    eligible.choose(rng).copied()
}

/// Rating and payment for a completed purchase; a bad supplier rated by a
/// good consumer lands on its blacklist.
pub fn emit_rating(
    consumer: &mut Agent,
    supplier: &Agent,
    day: u32,
    config: &ScenarioConfig,
    rng: &mut impl Rng,
) -> Result<RatingRecord, ScenarioError> {
    let (rating, value) = match (consumer.good, supplier.good) {
        (true, true) => (
            *POSITIVE_GRADES.choose(rng).expect("non-empty"),
            config.good_value(),
        ),
        (true, false) => {
            consumer.blacklist.insert(supplier.id.clone());
            (0.0, config.good_value())
        }
        (false, false) => (1.0, config.base_bad_value),
        (false, true) => {
            return Err(ScenarioError::BadBuysFromGood(
                consumer.id.clone(),
                supplier.id.clone(),
            ))
        }
    };
    Ok(RatingRecord {
        day,
        rater: consumer.id.clone(),
        ratee: supplier.id.clone(),
        rating: Some(rating),
        value,
    })
}

/// Attempts on `day` for an agent making `rate` attempts per day on average.
fn attempts_on(day: u32, rate: f64) -> u64 {
    let upto = |d: u32| (f64::from(d) * rate).floor() as u64;
    upto(day) - upto(day - 1)
}

/// Runs the market for `config.days` days, updating reputation at the end of
/// every observation period.
pub fn run_scenario(config: &ScenarioConfig) -> Result<ScenarioOutcome, ScenarioError> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut population = spawn_population(config, &mut rng)?;
    let suppliers: Vec<Agent> = population
        .iter()
        .filter(|a| a.role.sells())
        .cloned()
        .collect();
    let goodness: BTreeMap<AgentId, bool> =
        population.iter().map(|a| (a.id.clone(), a.good)).collect();
    let mode = config.rating_mode();
    let period = config.engine.update_period;

    let mut log = TransactionLog::default();
    let mut states: Vec<ReputationState> = Vec::new();
    let mut current = ReputationState::empty(0);
    let mut period_records: Vec<RatingRecord> = Vec::new();
    let mut attempts = AttemptStats::default();

    for day in 1..=config.days {
        let good_n = attempts_on(day, config.good_tx_per_day);
        let bad_n = attempts_on(
            day,
            config.good_tx_per_day * f64::from(config.bad_tx_rate_multiplier),
        );
        let reputation = (!states.is_empty()).then_some(&current);
        for consumer in population.iter_mut().filter(|a| a.role.buys()) {
            let n = if consumer.good { good_n } else { bad_n };
            for _ in 0..n {
                if consumer.good {
                    attempts.good_attempts += 1;
                } else {
                    attempts.bad_attempts += 1;
                }
                let Some(supplier) =
                    select_supplier(consumer, &suppliers, reputation, config, &mut rng)
                else {
                    attempts.skipped += 1;
                    continue;
                };
                let record = emit_rating(consumer, supplier, day, config, &mut rng)?;
                log.entries.push(LogEntry {
                    rater_good: consumer.good,
                    ratee_good: goodness[&record.ratee],
                    record: record.clone(),
                });
                period_records.push(record);
            }
        }
        if day - current.day == period || day == config.days {
            // A trailing partial period ends on the last simulated day.
            let params = EngineParams {
                update_period: day - current.day,
                ..config.engine.clone()
            };
            current = engine::update_period(&current, &period_records, &params, mode)?;
            period_records.clear();
            states.push(current.clone());
        }
    }

    let expected = expected_goodness(&population);
    let report = metrics::build_report(&log, &states, &expected, config.engine.default_rank);
    Ok(ScenarioOutcome {
        population,
        log,
        states,
        report,
        attempts,
    })
}
