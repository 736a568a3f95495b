//! Text formats for scenario configs, ratings logs, reputation snapshots and
//! metric reports.
//!
//! * scenario config: `key=value` lines, `#` comments, blank lines ignored
//! * ratings log: CSV `day,rater,ratee,rating,value,rater_good,ratee_good`
//! * states: CSV `day,agent,rank`
//! * report: `key=value` lines, undefined values written as `undefined`
//!
//! Floats are written in Rust's shortest round-trip form with at least one
//! fractional digit, so every format reads back to identical values.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::engine::{AgentId, EngineParams, RatingMode, RatingRecord, ReputationState};
use crate::market::{LogEntry, ScenarioConfig, TransactionLog, UsageMode};
use crate::metrics::{MetricsReport, REPORT_KEYS};

pub const RATINGS_HEADER: [&str; 7] = [
    "day",
    "rater",
    "ratee",
    "rating",
    "value",
    "rater_good",
    "ratee_good",
];
pub const STATES_HEADER: [&str; 3] = ["day", "agent", "rank"];
pub const UNDEFINED: &str = "undefined";

pub const CONFIG_FILE: &str = "scenario.conf";
pub const RATINGS_FILE: &str = "ratings.csv";
pub const STATES_FILE: &str = "states.csv";
pub const REPORT_FILE: &str = "report.txt";

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("line {line}: {key}: {reason}")]
    Config {
        line: usize,
        key: String,
        reason: String,
    },
    #[error("{key}: {reason}")]
    Invalid { key: String, reason: String },
    #[error("row {row}: {reason}")]
    Row { row: usize, reason: String },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> FormatError + '_ {
    move |source| FormatError::Io {
        path: path.to_owned(),
        source,
    }
}

/// Shortest round-trip decimal form, always with a fractional part or exponent.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

pub fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| UNDEFINED.to_owned(), fmt_f64)
}

fn parse_f64(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        Ok(_) => Err(format!("non-finite number {s:?}")),
        Err(_) => Err(format!("expected a number, got {s:?}")),
    }
}

fn parse_bool(s: &str) -> Result<bool, String> {
    match s {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(format!("expected true or false, got {s:?}")),
    }
}

fn parse_int<T: std::str::FromStr>(s: &str) -> Result<T, String> {
    s.parse::<T>()
        .map_err(|_| format!("expected a non-negative integer, got {s:?}"))
}

fn fraction(s: &str) -> Result<f64, String> {
    let v = parse_f64(s)?;
    if (0.0..=1.0).contains(&v) {
        Ok(v)
    } else {
        Err(format!("{v} is outside [0, 1]"))
    }
}

fn positive(s: &str) -> Result<f64, String> {
    let v = parse_f64(s)?;
    if v > 0.0 {
        Ok(v)
    } else {
        Err(format!("{v} must be positive"))
    }
}

fn apply_key(cfg: &mut ScenarioConfig, key: &str, value: &str) -> Result<(), String> {
    let e = &mut cfg.engine;
    match key {
        "n_agents" => cfg.n_agents = parse_int(value)?,
        "days" => cfg.days = parse_int(value)?,
        "good_fraction" => cfg.good_fraction = fraction(value)?,
        "consumer_fraction" => cfg.consumer_fraction = fraction(value)?,
        "bad_tx_rate_multiplier" => cfg.bad_tx_rate_multiplier = parse_int(value)?,
        "good_value_ratio" => cfg.good_value_ratio = positive(value)?,
        "good_tx_per_day" => cfg.good_tx_per_day = positive(value)?,
        "base_bad_value" => cfg.base_bad_value = positive(value)?,
        "usage_mode" => {
            cfg.usage_mode =
                UsageMode::parse(value).ok_or_else(|| format!("unknown usage mode {value:?}"))?
        }
        "measure_mode" => {
            cfg.measure_mode =
                RatingMode::parse(value).ok_or_else(|| format!("unknown rating mode {value:?}"))?
        }
        "selection_threshold" => cfg.selection_threshold = fraction(value)?,
        "fallback_to_random" => cfg.fallback_to_random = parse_bool(value)?,
        "seed" => cfg.seed = parse_int(value)?,
        "default_rank" => e.default_rank = fraction(value)?,
        "conservatism" => e.conservatism = fraction(value)?,
        "decayed_rank" => e.decayed_rank = fraction(value)?,
        "default_rating" => e.default_rating = fraction(value)?,
        "precision" => e.precision = positive(value)?,
        "weighting" => e.weighting = parse_bool(value)?,
        "full_norm" => e.full_norm = parse_bool(value)?,
        "liquid" => e.liquid = parse_bool(value)?,
        "log_ranks" => e.log_ranks = parse_bool(value)?,
        "log_ratings" => e.log_ratings = parse_bool(value)?,
        "aggregation" => e.aggregation = parse_bool(value)?,
        "downrating" => e.downrating = parse_bool(value)?,
        "update_period" => {
            e.update_period = parse_int(value)?;
            if e.update_period == 0 {
                return Err("must be at least 1".into());
            }
        }
        _ => return Err("unknown key".into()),
    }
    Ok(())
}

/// Parses and validates a scenario config. Keys not given keep their
/// defaults; `weighting` also picks the measurement mode unless
/// `measure_mode` is given explicitly.
pub fn parse_scenario(text: &str) -> Result<ScenarioConfig, FormatError> {
    let mut cfg = ScenarioConfig::default();
    let mut seen: Vec<String> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let Some((key, value)) = content.split_once('=') else {
            return Err(FormatError::Config {
                line,
                key: content.to_owned(),
                reason: "expected key=value".into(),
            });
        };
        let (key, value) = (key.trim(), value.trim());
        let fail = |reason: String| FormatError::Config {
            line,
            key: key.to_owned(),
            reason,
        };
        if seen.iter().any(|k| k == key) {
            return Err(fail("duplicate key".into()));
        }
        apply_key(&mut cfg, key, value).map_err(fail)?;
        seen.push(key.to_owned());
    }
    let given = |k: &str| seen.iter().any(|s| s == k);
    if given("weighting") && !given("measure_mode") {
        cfg.measure_mode = RatingMode::explicit(cfg.engine.weighting);
    }
    cfg.validate().map_err(|e| FormatError::Invalid {
        key: match &e {
            crate::market::ScenarioError::InvalidConfig { field, .. } => (*field).to_owned(),
            crate::market::ScenarioError::Engine(crate::engine::EngineError::InvalidParam {
                name,
                ..
            }) => (*name).to_owned(),
            _ => "config".to_owned(),
        },
        reason: e.to_string(),
    })?;
    Ok(cfg)
}

/// Writes every key, so the output parses back to an identical config.
pub fn write_scenario(cfg: &ScenarioConfig) -> String {
    let e: &EngineParams = &cfg.engine;
    let lines = [
        ("n_agents", cfg.n_agents.to_string()),
        ("days", cfg.days.to_string()),
        ("good_fraction", fmt_f64(cfg.good_fraction)),
        ("consumer_fraction", fmt_f64(cfg.consumer_fraction)),
        ("bad_tx_rate_multiplier", cfg.bad_tx_rate_multiplier.to_string()),
        ("good_value_ratio", fmt_f64(cfg.good_value_ratio)),
        ("good_tx_per_day", fmt_f64(cfg.good_tx_per_day)),
        ("base_bad_value", fmt_f64(cfg.base_bad_value)),
        ("usage_mode", cfg.usage_mode.to_string()),
        ("measure_mode", cfg.measure_mode.to_string()),
        ("selection_threshold", fmt_f64(cfg.selection_threshold)),
        ("fallback_to_random", cfg.fallback_to_random.to_string()),
        ("seed", cfg.seed.to_string()),
        ("default_rank", fmt_f64(e.default_rank)),
        ("conservatism", fmt_f64(e.conservatism)),
        ("decayed_rank", fmt_f64(e.decayed_rank)),
        ("default_rating", fmt_f64(e.default_rating)),
        ("precision", fmt_f64(e.precision)),
        ("weighting", e.weighting.to_string()),
        ("full_norm", e.full_norm.to_string()),
        ("liquid", e.liquid.to_string()),
        ("log_ranks", e.log_ranks.to_string()),
        ("log_ratings", e.log_ratings.to_string()),
        ("aggregation", e.aggregation.to_string()),
        ("downrating", e.downrating.to_string()),
        ("update_period", e.update_period.to_string()),
    ];
    lines
        .iter()
        .map(|(k, v)| format!("{k}={v}\n"))
        .collect()
}

pub fn write_ratings<W: Write>(log: &TransactionLog, out: W) -> Result<(), FormatError> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record(RATINGS_HEADER)?;
    for e in &log.entries {
        let r = &e.record;
        w.write_record([
            r.day.to_string(),
            r.rater.to_string(),
            r.ratee.to_string(),
            r.rating.map(fmt_f64).unwrap_or_default(),
            fmt_f64(r.value),
            e.rater_good.to_string(),
            e.ratee_good.to_string(),
        ])?;
    }
    w.flush().map_err(|e| FormatError::Csv(e.into()))?;
    Ok(())
}

fn csv_reader<R: Read>(input: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new().has_headers(true).from_reader(input)
}

fn check_header<R: Read>(rdr: &mut csv::Reader<R>, expected: &[&str]) -> Result<(), FormatError> {
    let header = rdr.headers()?;
    if header.iter().ne(expected.iter().copied()) {
        return Err(FormatError::Row {
            row: 0,
            reason: format!("expected header {}", expected.join(",")),
        });
    }
    Ok(())
}

/// Reads a ratings log; rows are numbered from 1 after the header.
pub fn read_ratings<R: Read>(input: R) -> Result<TransactionLog, FormatError> {
    let mut rdr = csv_reader(input);
    check_header(&mut rdr, &RATINGS_HEADER)?;
    let mut entries = Vec::new();
    for (idx, rec) in rdr.records().enumerate() {
        let row = idx + 1;
        let rec = rec?;
        let bad = |reason: String| FormatError::Row { row, reason };
        if rec.len() != RATINGS_HEADER.len() {
            return Err(bad(format!("expected 7 fields, got {}", rec.len())));
        }
        let day = parse_int::<u32>(&rec[0]).map_err(bad)?;
        let rating = match &rec[3] {
            "" => None,
            s => Some(parse_f64(s).map_err(bad)?),
        };
        let record = RatingRecord {
            day,
            rater: AgentId::new(&rec[1]),
            ratee: AgentId::new(&rec[2]),
            rating,
            value: parse_f64(&rec[4]).map_err(bad)?,
        };
        record.validate().map_err(|e| bad(e.to_string()))?;
        if entries
            .last()
            .is_some_and(|prev: &LogEntry| prev.record.day > day)
        {
            return Err(bad("rows must be ordered by day".into()));
        }
        entries.push(LogEntry {
            record,
            rater_good: parse_bool(&rec[5]).map_err(bad)?,
            ratee_good: parse_bool(&rec[6]).map_err(bad)?,
        });
    }
    Ok(TransactionLog { entries })
}

pub fn write_states<W: Write>(states: &[ReputationState], out: W) -> Result<(), FormatError> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record(STATES_HEADER)?;
    for s in states {
        for (agent, rank) in &s.ranks {
            w.write_record([s.day.to_string(), agent.to_string(), fmt_f64(*rank)])?;
        }
    }
    w.flush().map_err(|e| FormatError::Csv(e.into()))?;
    Ok(())
}

/// Reads `day,agent,rank` rows back into one state per distinct day.
///
/// States with no agents cannot be represented and are not produced.
pub fn read_states<R: Read>(input: R) -> Result<Vec<ReputationState>, FormatError> {
    let mut rdr = csv_reader(input);
    check_header(&mut rdr, &STATES_HEADER)?;
    let mut states: Vec<ReputationState> = Vec::new();
    for (idx, rec) in rdr.records().enumerate() {
        let row = idx + 1;
        let rec = rec?;
        let bad = |reason: String| FormatError::Row { row, reason };
        if rec.len() != 3 {
            return Err(bad(format!("expected 3 fields, got {}", rec.len())));
        }
        let day = parse_int::<u32>(&rec[0]).map_err(bad)?;
        let rank = fraction(&rec[2]).map_err(bad)?;
        match states.last_mut() {
            Some(s) if s.day == day => {}
            Some(s) if s.day > day => return Err(bad("rows must be ordered by day".into())),
            _ => states.push(ReputationState::empty(day)),
        }
        let state = states.last_mut().expect("pushed above");
        if state.ranks.insert(AgentId::new(&rec[1]), rank).is_some() {
            return Err(bad(format!("duplicate agent {}", &rec[1])));
        }
    }
    Ok(states)
}

pub fn write_report(report: &MetricsReport) -> String {
    REPORT_KEYS
        .iter()
        .zip(report.values())
        .map(|(k, v)| format!("{k}={}\n", fmt_opt(v)))
        .collect()
}

pub fn parse_report(text: &str) -> Result<MetricsReport, FormatError> {
    let mut values: [Option<Option<f64>>; 14] = [None; 14];
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.trim();
        if content.is_empty() {
            continue;
        }
        let fail = |key: &str, reason: String| FormatError::Config {
            line,
            key: key.to_owned(),
            reason,
        };
        let (key, value) = content
            .split_once('=')
            .ok_or_else(|| fail(content, "expected key=value".into()))?;
        let slot = REPORT_KEYS
            .iter()
            .position(|k| *k == key)
            .ok_or_else(|| fail(key, "unknown key".into()))?;
        let parsed = if value == UNDEFINED {
            None
        } else {
            Some(parse_f64(value).map_err(|r| fail(key, r))?)
        };
        values[slot] = Some(parsed);
    }
    let mut out = [None; 14];
    for (i, v) in values.into_iter().enumerate() {
        out[i] = v.ok_or_else(|| FormatError::Invalid {
            key: REPORT_KEYS[i].to_owned(),
            reason: "missing".into(),
        })?;
    }
    Ok(MetricsReport::from_values(out))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), FormatError> {
    fs::write(path, bytes).map_err(io_err(path))
}

fn read_file(path: &Path) -> Result<String, FormatError> {
    fs::read_to_string(path).map_err(io_err(path))
}

pub fn write_ratings_log(log: &TransactionLog, path: &Path) -> Result<(), FormatError> {
    let mut buf = Vec::new();
    write_ratings(log, &mut buf)?;
    write_file(path, &buf)
}

pub fn read_ratings_log(path: &Path) -> Result<TransactionLog, FormatError> {
    let file = fs::File::open(path).map_err(io_err(path))?;
    read_ratings(std::io::BufReader::new(file))
}

/// A run on disk: the resolved config plus its outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct RunBundle {
    pub config: ScenarioConfig,
    pub log: TransactionLog,
    pub states: Vec<ReputationState>,
    pub report: MetricsReport,
}

impl RunBundle {
    pub fn write(&self, dir: &Path) -> Result<(), FormatError> {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        write_file(&dir.join(CONFIG_FILE), write_scenario(&self.config).as_bytes())?;
        write_ratings_log(&self.log, &dir.join(RATINGS_FILE))?;
        let mut states = Vec::new();
        write_states(&self.states, &mut states)?;
        write_file(&dir.join(STATES_FILE), &states)?;
        write_file(&dir.join(REPORT_FILE), write_report(&self.report).as_bytes())
    }

    pub fn read(dir: &Path) -> Result<Self, FormatError> {
        let config = parse_scenario(&read_file(&dir.join(CONFIG_FILE))?)?;
        let log = read_ratings_log(&dir.join(RATINGS_FILE))?;
        let states = read_states(read_file(&dir.join(STATES_FILE))?.as_bytes())?;
        let report = parse_report(&read_file(&dir.join(REPORT_FILE))?)?;
        Ok(Self {
            config,
            log,
            states,
            report,
        })
    }
}
