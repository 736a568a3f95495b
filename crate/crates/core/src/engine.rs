//! Weighted liquid rank.
//!
//! An incremental reputation update: the state at the end of one observation
//! period plus the ratings observed during the next period produce the next
//! state. Everything in this module is a pure function of its inputs.
//!
//! The pipeline for one period is
//!
//! 1. aggregate ratings per (rater, ratee) pair (optional),
//! 2. re-scale financial values by the precision,
//! 3. log-scale financial values (optional),
//! 4. downrate explicit ratings around the 0.25 threshold (optional),
//! 5. accumulate the differential update on every rated agent, weighting each
//!    rating by the rater's previous rank when liquid,
//! 6. normalize the differential update to `[0, 1]`,
//! 7. blend it with the previous state using the conservatism factor,
//! 8. max-normalize the blended ranks into the new state.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

/// Ratings below this value become negative under downrating.
pub const DOWNRATING_THRESHOLD: f64 = 0.25;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EngineError {
    #[error("parameter {name} = {value} is out of range ({expected})")]
    InvalidParam {
        name: &'static str,
        value: f64,
        expected: &'static str,
    },
    #[error("rating {0} is outside [0, 1]")]
    RatingOutOfRange(f64),
    #[error("record on day {day} falls outside the period ({start}, {end}]")]
    RecordOutsidePeriod { day: u32, start: u32, end: u32 },
    #[error("agent {0} rates itself")]
    SelfRating(AgentId),
    #[error("financial value {0} is negative or not finite")]
    InvalidValue(f64),
}

/// Opaque agent identifier.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AgentId(String);

impl AgentId {
    pub fn new(id: impl Into<String>) -> Self {
        Self(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for AgentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for AgentId {
    fn from(s: &str) -> Self {
        Self(s.to_owned())
    }
}

/// One rating or transaction event.
///
/// `rating` is absent for purely implicit (payment-only) events. `value` is
/// the financial amount of the transaction in currency units.
#[derive(Debug, Clone, PartialEq)]
pub struct RatingRecord {
    pub day: u32,
    pub rater: AgentId,
    pub ratee: AgentId,
    pub rating: Option<f64>,
    pub value: f64,
}

impl RatingRecord {
    pub fn new(
        day: u32,
        rater: impl Into<AgentId>,
        ratee: impl Into<AgentId>,
        rating: Option<f64>,
        value: f64,
    ) -> Self {
        Self {
            day,
            rater: rater.into(),
            ratee: ratee.into(),
            rating,
            value,
        }
    }

    pub fn validate(&self) -> Result<(), EngineError> {
        if self.rater == self.ratee {
            return Err(EngineError::SelfRating(self.rater.clone()));
        }
        if let Some(r) = self.rating {
            if !(0.0..=1.0).contains(&r) {
                return Err(EngineError::RatingOutOfRange(r));
            }
        }
        if !self.value.is_finite() || self.value < 0.0 {
            return Err(EngineError::InvalidValue(self.value));
        }
        Ok(())
    }
}

impl From<String> for AgentId {
    fn from(s: String) -> Self {
        Self(s)
    }
}

/// How ratings turn into a differential update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RatingMode {
    /// Financial values are the ratings.
    ImplicitFinancial,
    /// Explicit ratings, each counted once.
    ExplicitUnweighted,
    /// Explicit ratings multiplied by the financial value.
    ExplicitWeighted,
}

impl RatingMode {
    /// Explicit mode selected by the `weighting` switch.
    pub fn explicit(weighting: bool) -> Self {
        if weighting {
            RatingMode::ExplicitWeighted
        } else {
            RatingMode::ExplicitUnweighted
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            RatingMode::ImplicitFinancial => "implicit-financial",
            RatingMode::ExplicitUnweighted => "explicit-unweighted",
            RatingMode::ExplicitWeighted => "explicit-weighted",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "implicit-financial" => Some(RatingMode::ImplicitFinancial),
            "explicit-unweighted" => Some(RatingMode::ExplicitUnweighted),
            "explicit-weighted" => Some(RatingMode::ExplicitWeighted),
            _ => None,
        }
    }
}

impl fmt::Display for RatingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Algorithm knobs.
#[derive(Debug, Clone, PartialEq)]
pub struct EngineParams {
    /// Rank given to agents seen for the first time.
    pub default_rank: f64,
    /// Blending weight of the previous rank.
    pub conservatism: f64,
    /// Rank an inactive agent decays toward.
    pub decayed_rank: f64,
    /// Explicit rating assumed when a rater left none.
    pub default_rating: f64,
    /// Financial values become `round(value / precision)`.
    pub precision: f64,
    pub weighting: bool,
    pub full_norm: bool,
    pub liquid: bool,
    pub log_ranks: bool,
    pub log_ratings: bool,
    pub aggregation: bool,
    pub downrating: bool,
    /// Observation period length in days.
    pub update_period: u32,
}

impl Default for EngineParams {
    fn default() -> Self {
        Self {
            default_rank: 0.5,
            conservatism: 0.5,
            decayed_rank: 0.0,
            default_rating: 0.5,
            precision: 0.01,
            weighting: true,
            full_norm: true,
            liquid: true,
            log_ranks: false,
            log_ratings: false,
            aggregation: false,
            downrating: false,
            update_period: 1,
        }
    }
}

impl EngineParams {
    pub fn validate(&self) -> Result<(), EngineError> {
        let fractions = [
            ("default_rank", self.default_rank),
            ("conservatism", self.conservatism),
            ("decayed_rank", self.decayed_rank),
            ("default_rating", self.default_rating),
        ];
        for (name, value) in fractions {
            if !(0.0..=1.0).contains(&value) {
                return Err(EngineError::InvalidParam {
                    name,
                    value,
                    expected: "[0, 1]",
                });
            }
        }
        if !(self.precision > 0.0 && self.precision.is_finite()) {
            return Err(EngineError::InvalidParam {
                name: "precision",
                value: self.precision,
                expected: "> 0",
            });
        }
        if self.update_period == 0 {
            return Err(EngineError::InvalidParam {
                name: "update_period",
                value: 0.0,
                expected: ">= 1",
            });
        }
        Ok(())
    }
}

/// Ranks of all agents known at the end of `day`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ReputationState {
    pub day: u32,
    pub ranks: BTreeMap<AgentId, f64>,
}

impl ReputationState {
    pub fn empty(day: u32) -> Self {
        Self {
            day,
            ranks: BTreeMap::new(),
        }
    }

    pub fn rank(&self, agent: &AgentId) -> Option<f64> {
        self.ranks.get(agent).copied()
    }

    pub fn is_empty(&self) -> bool {
        self.ranks.is_empty()
    }

    pub fn len(&self) -> usize {
        self.ranks.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DifferentialUpdate {
    pub day: u32,
    pub raw: BTreeMap<AgentId, f64>,
    pub normalized: BTreeMap<AgentId, f64>,
}

/// Every intermediate of one period update.
#[derive(Debug, Clone, PartialEq)]
pub struct PeriodTrace {
    pub differential: DifferentialUpdate,
    pub blended: BTreeMap<AgentId, f64>,
    pub state: ReputationState,
}

/// Collapses all ratings of each (rater, ratee) pair into one record.
///
/// The rating becomes the mean of the pair's present ratings (absent if none
/// were present) and the value becomes the sum of the pair's values. Output is
/// ordered by rater then ratee and carries the latest day of the pair.
pub fn aggregate_ratings(records: &[RatingRecord]) -> Vec<RatingRecord> {
    #[derive(Default)]
    struct Acc {
        day: u32,
        rating_sum: f64,
        rated: u32,
        value: f64,
    }
    let mut pairs: BTreeMap<(&AgentId, &AgentId), Acc> = BTreeMap::new();
    for r in records {
        let acc = pairs.entry((&r.rater, &r.ratee)).or_default();
        acc.day = acc.day.max(r.day);
        if let Some(f) = r.rating {
            acc.rating_sum += f;
            acc.rated += 1;
        }
        acc.value += r.value;
    }
    pairs
        .into_iter()
        .map(|((rater, ratee), acc)| RatingRecord {
            day: acc.day,
            rater: rater.clone(),
            ratee: ratee.clone(),
            rating: (acc.rated > 0).then(|| acc.rating_sum / f64::from(acc.rated)),
            value: acc.value,
        })
        .collect()
}

/// `round(value / precision)`, rounding half away from zero.
pub fn apply_precision(value: f64, precision: f64) -> f64 {
    (value / precision).round()
}

/// Sign-preserving `log10(1 + |q|)`.
pub fn apply_log_rating(q: f64) -> f64 {
    if q < 0.0 {
        -(1.0 - q).log10()
    } else {
        (1.0 + q).log10()
    }
}

/// Maps `[0, 0.25]` onto `[-1, 0]` and `[0.25, 1]` onto `[0, 1]`.
pub fn apply_downrating(f: f64) -> Result<f64, EngineError> {
    if !(0.0..=1.0).contains(&f) {
        return Err(EngineError::RatingOutOfRange(f));
    }
    Ok(if f < DOWNRATING_THRESHOLD {
        (f - DOWNRATING_THRESHOLD) / DOWNRATING_THRESHOLD
    } else {
        (f - DOWNRATING_THRESHOLD) / (1.0 - DOWNRATING_THRESHOLD)
    })
}

/// A rating after the value and rating transforms, ready to accumulate.
#[derive(Debug, Clone, PartialEq)]
struct Prepared {
    rater: AgentId,
    ratee: AgentId,
    rating: f64,
    value: f64,
}

fn prepare(
    records: &[RatingRecord],
    params: &EngineParams,
    mode: RatingMode,
) -> Result<Vec<Prepared>, EngineError> {
    let aggregated;
    let records = if params.aggregation {
        aggregated = aggregate_ratings(records);
        &aggregated[..]
    } else {
        records
    };
    records
        .iter()
        .map(|r| {
            let mut value = apply_precision(r.value, params.precision);
            if params.log_ratings {
                value = apply_log_rating(value);
            }
            let mut rating = r.rating.unwrap_or(params.default_rating);
            if params.downrating && mode != RatingMode::ImplicitFinancial {
                rating = apply_downrating(rating)?;
            }
            Ok(Prepared {
                rater: r.rater.clone(),
                ratee: r.ratee.clone(),
                rating,
                value,
            })
        })
        .collect()
}

fn accumulate(
    prepared: &[Prepared],
    prev: &ReputationState,
    params: &EngineParams,
    mode: RatingMode,
) -> BTreeMap<AgentId, f64> {
    let mut raw: BTreeMap<AgentId, f64> = BTreeMap::new();
    for p in prepared {
        let rater_rank = if params.liquid {
            prev.rank(&p.rater).unwrap_or(params.default_rank)
        } else {
            1.0
        };
        let term = match mode {
            RatingMode::ImplicitFinancial => p.value * rater_rank,
            RatingMode::ExplicitUnweighted => p.rating * rater_rank,
            RatingMode::ExplicitWeighted => p.rating * p.value * rater_rank,
        };
        *raw.entry(p.ratee.clone()).or_insert(0.0) += term;
    }
    raw
}

/// Raw differential update: each rated agent accrues its incoming ratings,
/// weighted by the rater's previous rank when `liquid` is set.
///
/// Records are run through aggregation, precision, log scaling and downrating
/// as enabled in `params` before accumulation.
pub fn compute_differential(
    records: &[RatingRecord],
    prev: &ReputationState,
    params: &EngineParams,
    mode: RatingMode,
) -> Result<BTreeMap<AgentId, f64>, EngineError> {
    let prepared = prepare(records, params, mode)?;
    Ok(accumulate(&prepared, prev, params, mode))
}

fn max_of<'a>(values: impl Iterator<Item = &'a f64>) -> f64 {
    values.copied().fold(f64::NEG_INFINITY, f64::max)
}

fn min_of<'a>(values: impl Iterator<Item = &'a f64>) -> f64 {
    values.copied().fold(f64::INFINITY, f64::min)
}

/// Scales the raw differential update into `[0, 1]`.
///
/// With `log_ranks` each entry first becomes the signed `log10(1 + x)`. Then
/// either max-division (`full_norm = false`, negatives clamp to zero) or
/// min-max scaling (`full_norm = true`). A zero spread falls back to
/// max-division, and a non-positive maximum yields zeros.
pub fn normalize_differential(
    raw: &BTreeMap<AgentId, f64>,
    params: &EngineParams,
) -> BTreeMap<AgentId, f64> {
    if raw.is_empty() {
        return BTreeMap::new();
    }
    let scaled: BTreeMap<AgentId, f64> = if params.log_ranks {
        raw.iter()
            .map(|(k, v)| (k.clone(), apply_log_rating(*v)))
            .collect()
    } else {
        raw.clone()
    };
    let max = max_of(scaled.values());
    let min = min_of(scaled.values());
    if params.full_norm && max > min {
        let spread = max - min;
        return scaled
            .into_iter()
            .map(|(k, v)| (k, (v - min) / spread))
            .collect();
    }
    if max <= 0.0 {
        return scaled.into_keys().map(|k| (k, 0.0)).collect();
    }
    scaled
        .into_iter()
        .map(|(k, v)| (k, (v / max).max(0.0)))
        .collect()
}

/// `prev * C + nd * (1 - C)` over every agent in either map.
///
/// New agents start from the default rank; known agents without an update
/// take the decayed rank as their update.
pub fn blend(
    prev: &ReputationState,
    normalized: &BTreeMap<AgentId, f64>,
    params: &EngineParams,
) -> BTreeMap<AgentId, f64> {
    let c = params.conservatism;
    let agents: BTreeSet<&AgentId> = prev.ranks.keys().chain(normalized.keys()).collect();
    agents
        .into_iter()
        .map(|a| {
            let old = prev.rank(a).unwrap_or(params.default_rank);
            let nd = normalized.get(a).copied().unwrap_or(params.decayed_rank);
            (a.clone(), old * c + nd * (1.0 - c))
        })
        .collect()
}

/// Divides every blended rank by the maximum so the top agent sits at 1.
pub fn finalize_state(blended: BTreeMap<AgentId, f64>, day: u32) -> ReputationState {
    let max = max_of(blended.values());
    let ranks = if max > 0.0 {
        blended
            .into_iter()
            .map(|(k, v)| (k, (v / max).clamp(0.0, 1.0)))
            .collect()
    } else {
        blended.into_keys().map(|k| (k, 0.0)).collect()
    };
    ReputationState { day, ranks }
}

/// Runs one observation period and keeps every intermediate.
pub fn update_period_traced(
    prev: &ReputationState,
    records: &[RatingRecord],
    params: &EngineParams,
    mode: RatingMode,
) -> Result<PeriodTrace, EngineError> {
    params.validate()?;
    let start = prev.day;
    let end = prev.day + params.update_period;
    for r in records {
        if r.day <= start || r.day > end {
            return Err(EngineError::RecordOutsidePeriod {
                day: r.day,
                start,
                end,
            });
        }
        r.validate()?;
    }
    let raw = compute_differential(records, prev, params, mode)?;
    let normalized = normalize_differential(&raw, params);
    let blended = blend(prev, &normalized, params);
    let state = finalize_state(blended.clone(), end);
    Ok(PeriodTrace {
        differential: DifferentialUpdate {
            day: end,
            raw,
            normalized,
        },
        blended,
        state,
    })
}

/// Computes the state at `prev.day + update_period` from that period's records.
pub fn update_period(
    prev: &ReputationState,
    records: &[RatingRecord],
    params: &EngineParams,
    mode: RatingMode,
) -> Result<ReputationState, EngineError> {
    update_period_traced(prev, records, params, mode).map(|t| t.state)
}
