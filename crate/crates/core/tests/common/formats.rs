//! Random values of every on-disk format and their round-trip checks.

use liquid_rank::engine::{EngineParams, RatingMode};
use liquid_rank::io::{
    parse_report, parse_scenario, read_ratings, read_states, write_ratings, write_report,
    write_scenario, write_states, RunBundle,
};
use liquid_rank::market::{run_scenario, LogEntry};
use liquid_rank::{
    AgentId, MetricsReport, RatingRecord, ReputationState, ScenarioConfig, TransactionLog,
    UsageMode,
};
use proptest::prelude::*;

use super::run_property;

pub fn agent() -> impl Strategy<Value = AgentId> {
    "[a-z][a-z0-9_]{0,5}".prop_map(AgentId::new)
}

pub fn unit() -> impl Strategy<Value = f64> {
    prop_oneof![
        Just(0.0),
        Just(1.0),
        0.0f64..=1.0,
        (0u32..=8).prop_map(|k| f64::from(k) / 8.0),
    ]
}

pub fn positive() -> impl Strategy<Value = f64> {
    prop_oneof![1e-9f64..1e-3, 1e-3f64..1e3, 1e3f64..1e12]
}

pub fn scenario() -> impl Strategy<Value = ScenarioConfig> {
    let market = (
        2usize..5000,
        1u32..400,
        unit(),
        unit(),
        1u32..50,
        positive(),
        positive(),
        positive(),
        prop::sample::select(vec![
            UsageMode::None,
            UsageMode::ExplicitUnweighted,
            UsageMode::ExplicitWeighted,
            UsageMode::ImplicitFinancial,
        ]),
        prop::sample::select(vec![
            RatingMode::ExplicitUnweighted,
            RatingMode::ExplicitWeighted,
            RatingMode::ImplicitFinancial,
        ]),
        (unit(), any::<bool>(), any::<u64>()),
    );
    let engine = (
        prop::array::uniform4(unit()),
        positive(),
        prop::array::uniform8(any::<bool>()),
        1u32..30,
    )
        .prop_map(|(u, precision, f, update_period)| EngineParams {
            default_rank: u[0],
            conservatism: u[1],
            decayed_rank: u[2],
            default_rating: u[3],
            precision,
            weighting: f[0],
            full_norm: f[1],
            liquid: f[2],
            log_ranks: f[3],
            log_ratings: f[4],
            aggregation: f[5],
            downrating: f[6],
            update_period,
        });
    (market, engine).prop_map(
        |((n, days, gf, cf, mult, ratio, tx, base, usage, measure, (th, fb, seed)), engine)| {
            ScenarioConfig {
                n_agents: n,
                days,
                good_fraction: gf,
                consumer_fraction: cf,
                bad_tx_rate_multiplier: mult,
                good_value_ratio: ratio,
                good_tx_per_day: tx,
                base_bad_value: base,
                usage_mode: usage,
                measure_mode: measure,
                selection_threshold: th,
                fallback_to_random: fb,
                seed,
                engine,
            }
        },
    )
}

pub fn entry() -> impl Strategy<Value = (AgentId, AgentId, Option<f64>, f64, bool, bool)> {
    (
        agent(),
        agent(),
        proptest::option::of(unit()),
        prop_oneof![Just(0.0), positive()],
        any::<bool>(),
        any::<bool>(),
    )
        .prop_filter("self rating", |e| e.0 != e.1)
}

pub fn log() -> impl Strategy<Value = TransactionLog> {
    prop::collection::vec((0u32..3, entry()), 0..40).prop_map(|rows| {
        let mut day = 0;
        let entries = rows
            .into_iter()
            .map(|(step, (rater, ratee, rating, value, rg, eg))| {
                day += step;
                LogEntry {
                    record: RatingRecord {
                        day,
                        rater,
                        ratee,
                        rating,
                        value,
                    },
                    rater_good: rg,
                    ratee_good: eg,
                }
            })
            .collect();
        TransactionLog { entries }
    })
}

pub fn states() -> impl Strategy<Value = Vec<ReputationState>> {
    prop::collection::vec(
        (1u32..5, prop::collection::btree_map(agent(), unit(), 1..8)),
        0..6,
    )
    .prop_map(|rows| {
        let mut day = 0;
        rows.into_iter()
            .map(|(step, ranks)| {
                day += step;
                ReputationState { day, ranks }
            })
            .collect()
    })
}

pub fn report() -> impl Strategy<Value = MetricsReport> {
    let metric = || proptest::option::of(prop_oneof![-1.0f64..=1.0, 0.0f64..1e6]);
    (
        prop::array::uniform10(metric()),
        prop::array::uniform3(0.0f64..1e9),
        metric(),
    )
        .prop_map(|(m, v, ratio)| {
            let mut values = [None; 14];
            values[..10].copy_from_slice(&m);
            for i in 0..3 {
                values[10 + i] = Some(v[i]);
            }
            values[13] = ratio;
            MetricsReport::from_values(values)
        })
}

pub fn scenario_round_trip(cfg: &ScenarioConfig) -> Result<(), TestCaseError> {
    let text = write_scenario(cfg);
    let back = parse_scenario(&text).map_err(|e| TestCaseError::fail(e.to_string()))?;
    prop_assert_eq!(&back, cfg);
    prop_assert_eq!(write_scenario(&back), text);
    Ok(())
}

pub fn ratings_round_trip(log: &TransactionLog) -> Result<(), TestCaseError> {
    let mut buf = Vec::new();
    write_ratings(log, &mut buf).unwrap();
    let back = read_ratings(buf.as_slice()).map_err(|e| TestCaseError::fail(e.to_string()))?;
    prop_assert_eq!(&back, log);
    let mut again = Vec::new();
    write_ratings(&back, &mut again).unwrap();
    prop_assert_eq!(again, buf);
    Ok(())
}

pub fn states_round_trip(states: &[ReputationState]) -> Result<(), TestCaseError> {
    let mut buf = Vec::new();
    write_states(states, &mut buf).unwrap();
    let back = read_states(buf.as_slice()).map_err(|e| TestCaseError::fail(e.to_string()))?;
    prop_assert_eq!(back, states);
    Ok(())
}

pub fn report_round_trip(report: &MetricsReport) -> Result<(), TestCaseError> {
    let text = write_report(report);
    let back = parse_report(&text).map_err(|e| TestCaseError::fail(e.to_string()))?;
    prop_assert_eq!(&back, report);
    Ok(())
}

/// All four formats, each over `cases` random structures.
pub fn run_suite(cases: u32) -> Vec<(&'static str, Result<(), String>)> {
    vec![
        ("scenario config", run_property(cases, scenario(), |c| scenario_round_trip(&c))),
        ("ratings log", run_property(cases, log(), |l| ratings_round_trip(&l))),
        ("states", run_property(cases, states(), |s| states_round_trip(&s))),
        ("report", run_property(cases, report(), |r| report_round_trip(&r))),
    ]
}

/// A simulated run written as a bundle.
pub fn sample_bundle(seed: u64) -> RunBundle {
    let config = ScenarioConfig {
        n_agents: 40,
        days: 12,
        usage_mode: UsageMode::ImplicitFinancial,
        seed,
        ..ScenarioConfig::default()
    };
    let out = run_scenario(&config).unwrap();
    RunBundle {
        config,
        log: out.log,
        states: out.states,
        report: out.report,
    }
}

/// Sorted file names and contents of a directory.
pub fn dir_bytes(dir: &std::path::Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().into_string().unwrap(), std::fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    files
}
