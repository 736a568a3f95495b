//! Engine and metric invariants as strategies plus checks.

use std::collections::BTreeMap;

use liquid_rank::engine::{
    apply_downrating, apply_log_rating, blend, normalize_differential, update_period,
    update_period_traced,
};
use liquid_rank::metrics::{accuracy_metrics, pearson_pairs, rmsd_metrics};
use liquid_rank::{AgentId, EngineParams, RatingMode, RatingRecord, ReputationState};
use proptest::prelude::*;

use super::oracle::MODES;
use super::run_property;

pub const EPS: f64 = 1e-12;

fn id(i: usize) -> AgentId {
    AgentId::new(format!("n{i:02}"))
}

pub fn params() -> impl Strategy<Value = EngineParams> {
    (
        prop::array::uniform6(any::<bool>()),
        prop::sample::select(vec![0.001, 0.01, 0.5, 1.0]),
        prop::array::uniform4(0.0f64..=1.0),
    )
        .prop_map(|(f, precision, x)| EngineParams {
            full_norm: f[0],
            liquid: f[1],
            log_ranks: f[2],
            log_ratings: f[3],
            aggregation: f[4],
            downrating: f[5],
            precision,
            default_rank: x[0],
            conservatism: x[1],
            decayed_rank: x[2],
            default_rating: x[3],
            ..EngineParams::default()
        })
}

pub fn mode() -> impl Strategy<Value = RatingMode> {
    prop::sample::select(MODES.to_vec())
}

pub fn period_records(day: u32, agents: usize) -> impl Strategy<Value = Vec<RatingRecord>> {
    prop::collection::vec(
        (
            0..agents,
            1..agents,
            proptest::option::of(0.0f64..=1.0),
            0.0f64..500.0,
        ),
        0..30,
    )
    .prop_map(move |rows| {
        rows.into_iter()
            .map(|(a, off, f, v)| RatingRecord::new(day, id(a), id((a + off) % agents), f, v))
            .collect()
    })
}

pub fn state(agents: usize) -> impl Strategy<Value = ReputationState> {
    prop::collection::btree_map(0..agents, 0.0f64..=1.0, 0..agents).prop_map(|m| ReputationState {
        day: 0,
        ranks: m.into_iter().map(|(k, v)| (id(k), v)).collect(),
    })
}

pub fn raw_map() -> impl Strategy<Value = BTreeMap<AgentId, f64>> {
    prop::collection::btree_map(0usize..12, -1000.0f64..1000.0, 1..12)
        .prop_map(|m| m.into_iter().map(|(k, v)| (id(k), v)).collect())
}

pub fn labelled_pairs() -> impl Strategy<Value = Vec<(f64, bool)>> {
    prop::collection::vec((0.0f64..=1.0, any::<bool>()), 2..30)
}

pub fn ranks_in_range(
    p: &EngineParams,
    mode: RatingMode,
    periods: Vec<Vec<RatingRecord>>,
) -> Result<(), TestCaseError> {
    let mut s = ReputationState::empty(0);
    for recs in periods {
        let recs: Vec<_> = recs
            .into_iter()
            .map(|r| RatingRecord { day: s.day + 1, ..r })
            .collect();
        s = update_period(&s, &recs, p, mode).map_err(|e| TestCaseError::fail(e.to_string()))?;
        for r in s.ranks.values() {
            prop_assert!((0.0..=1.0).contains(r), "{}", r);
        }
        if s.ranks.values().any(|r| *r > 0.0) {
            prop_assert!(s.ranks.values().any(|r| *r == 1.0));
        }
    }
    Ok(())
}

pub fn blend_convex(
    prev: &ReputationState,
    nd: BTreeMap<AgentId, f64>,
    c: f64,
) -> Result<(), TestCaseError> {
    let nd: BTreeMap<_, _> = nd
        .into_iter()
        .map(|(k, v)| (k, (v.abs() / 1000.0).min(1.0)))
        .collect();
    let p = EngineParams {
        conservatism: c,
        ..EngineParams::default()
    };
    let out = blend(prev, &nd, &p);
    for (k, o) in &out {
        if let (Some(a), Some(b)) = (prev.rank(k), nd.get(k)) {
            prop_assert!(*o >= a.min(*b) - EPS && *o <= a.max(*b) + EPS);
        }
    }
    Ok(())
}

pub fn downrating_shape(a: f64, b: f64) -> Result<(), TestCaseError> {
    let fa = apply_downrating(a).unwrap();
    let fb = apply_downrating(b).unwrap();
    if a < b {
        prop_assert!(fa < fb);
    }
    prop_assert!((-1.0..=1.0).contains(&fa));
    prop_assert_eq!(fa <= 0.0, a <= 0.25);
    let want = if a < 0.25 {
        (a - 0.25) / 0.25
    } else {
        (a - 0.25) / 0.75
    };
    prop_assert!((fa - want).abs() <= EPS);
    prop_assert_eq!(apply_downrating(0.25).unwrap(), 0.0);
    prop_assert_eq!(apply_downrating(1.0).unwrap(), 1.0);
    prop_assert_eq!(apply_downrating(0.0).unwrap(), -1.0);
    Ok(())
}

pub fn log_rating_odd(q: f64) -> Result<(), TestCaseError> {
    prop_assert_eq!(apply_log_rating(-q), -apply_log_rating(q));
    prop_assert!(apply_log_rating(q) >= 0.0);
    Ok(())
}

pub fn full_norm_endpoints(raw: &BTreeMap<AgentId, f64>, log_ranks: bool) -> Result<(), TestCaseError> {
    let p = EngineParams {
        full_norm: true,
        log_ranks,
        ..EngineParams::default()
    };
    let out = normalize_differential(raw, &p);
    prop_assert_eq!(out.len(), raw.len());
    let first = *raw.values().next().unwrap();
    if raw.values().any(|v| *v != first) {
        let max = out.values().copied().fold(f64::MIN, f64::max);
        let min = out.values().copied().fold(f64::MAX, f64::min);
        prop_assert!((max - 1.0).abs() <= EPS && min.abs() <= EPS);
    }
    for v in out.values() {
        prop_assert!((0.0..=1.0).contains(v));
    }
    Ok(())
}

pub fn max_norm_monotone(raw: &BTreeMap<AgentId, f64>) -> Result<(), TestCaseError> {
    let p = EngineParams {
        full_norm: false,
        ..EngineParams::default()
    };
    let out = normalize_differential(raw, &p);
    if raw.values().any(|v| *v > 0.0) {
        prop_assert!(out.values().any(|v| *v == 1.0));
    }
    for (a, ra) in raw {
        for (b, rb) in raw {
            if ra <= rb {
                prop_assert!(out[a] <= out[b]);
            }
        }
    }
    Ok(())
}

/// Disregarding rater rank equals every rater having rank 1.
pub fn liquid_equivalence(
    p: &EngineParams,
    mode: RatingMode,
    prev: &ReputationState,
    recs: &[RatingRecord],
) -> Result<(), TestCaseError> {
    let off = EngineParams {
        liquid: false,
        ..p.clone()
    };
    let on = EngineParams {
        liquid: true,
        default_rank: 1.0,
        ..p.clone()
    };
    let ones = ReputationState {
        day: 0,
        ranks: prev.ranks.keys().map(|k| (k.clone(), 1.0)).collect(),
    };
    let a = update_period_traced(prev, recs, &off, mode).unwrap();
    let b = update_period_traced(&ones, recs, &on, mode).unwrap();
    prop_assert_eq!(a.differential, b.differential);
    Ok(())
}

/// An agent idle for `k` periods blends to `r0·C^k + R_c·(1 − C^k)`.
///
/// A second agent rated every period keeps the blended maximum at 1, so
/// finalization never rescales the idle agent.
pub fn geometric_decay(r0: f64, c: f64, rc: f64, k: usize) -> Result<(), TestCaseError> {
    let p = EngineParams {
        conservatism: c,
        decayed_rank: rc,
        ..EngineParams::default()
    };
    let idle = id(0);
    let busy = id(1);
    let mut s = ReputationState {
        day: 0,
        ranks: [(idle.clone(), r0), (busy.clone(), 1.0)].into_iter().collect(),
    };
    let mut blended = r0;
    for step in 1..=k {
        let recs = [RatingRecord::new(step as u32, id(2), busy.clone(), Some(1.0), 1.0)];
        let t = update_period_traced(&s, &recs, &p, RatingMode::ExplicitWeighted).unwrap();
        prop_assert_eq!(t.blended[&busy], 1.0);
        blended = t.blended[&idle];
        s = t.state;
    }
    let ck = c.powi(k as i32);
    prop_assert!((blended - (r0 * ck + rc * (1.0 - ck))).abs() <= EPS);
    Ok(())
}

/// Scaling every value by a constant keeps the normalized ordering.
pub fn scale_invariance(
    recs: &[RatingRecord],
    prev: &ReputationState,
    scale: f64,
) -> Result<(), TestCaseError> {
    let p = EngineParams {
        precision: 1.0,
        full_norm: true,
        ..EngineParams::default()
    };
    let base: Vec<_> = recs
        .iter()
        .map(|r| RatingRecord {
            value: r.value.round(),
            ..r.clone()
        })
        .collect();
    let scaled: Vec<_> = base
        .iter()
        .map(|r| RatingRecord {
            value: r.value * scale,
            ..r.clone()
        })
        .collect();
    let a = update_period_traced(prev, &base, &p, RatingMode::ExplicitWeighted).unwrap();
    let b = update_period_traced(prev, &scaled, &p, RatingMode::ExplicitWeighted).unwrap();
    let na = &a.differential.normalized;
    let nb = &b.differential.normalized;
    for (x, vx) in na {
        for (y, vy) in na {
            if vx + 1e-9 < *vy {
                prop_assert!(nb[x] < nb[y]);
            }
        }
    }
    Ok(())
}

fn close(a: Option<f64>, b: Option<f64>) -> bool {
    match (a, b) {
        (Some(a), Some(b)) => (a - b).abs() <= EPS,
        (None, None) => true,
        _ => false,
    }
}

/// Mean accuracy identity, complement symmetry and perfect prediction.
pub fn metric_identities(pairs: &[(f64, bool)]) -> Result<(), TestCaseError> {
    let computed: BTreeMap<_, _> = pairs.iter().enumerate().map(|(i, p)| (id(i), p.0)).collect();
    let expected: BTreeMap<_, _> = pairs
        .iter()
        .enumerate()
        .map(|(i, p)| (id(i), if p.1 { 1.0 } else { 0.0 }))
        .collect();
    let acc = accuracy_metrics(&computed, &expected);
    let dev = rmsd_metrics(&computed, &expected);
    match (acc.good, acc.bad) {
        (Some(g), Some(b)) => prop_assert!((acc.mean.unwrap() - (g + b) / 2.0).abs() <= EPS),
        _ => prop_assert!(acc.mean.is_none()),
    }

    let flip = |m: &BTreeMap<AgentId, f64>| -> BTreeMap<AgentId, f64> {
        m.iter().map(|(k, v)| (k.clone(), 1.0 - v)).collect()
    };
    let acc2 = accuracy_metrics(&flip(&computed), &flip(&expected));
    let dev2 = rmsd_metrics(&flip(&computed), &flip(&expected));
    prop_assert!(close(acc.good, acc2.bad) && close(acc.bad, acc2.good));
    prop_assert!(close(dev.good, dev2.bad) && close(dev.bad, dev2.good));
    prop_assert!(close(dev.mean, dev2.mean));

    let perfect = accuracy_metrics(&expected, &expected);
    let zero = rmsd_metrics(&expected, &expected);
    for v in [perfect.good, perfect.bad, perfect.mean].into_iter().flatten() {
        prop_assert_eq!(v, 1.0);
    }
    for v in [zero.good, zero.bad, zero.mean].into_iter().flatten() {
        prop_assert_eq!(v, 0.0);
    }
    let both = pairs.iter().any(|p| p.1) && pairs.iter().any(|p| !p.1);
    let xy: Vec<(f64, f64)> = expected.values().map(|e| (*e, *e)).collect();
    prop_assert_eq!(pearson_pairs(&xy).is_some(), both);
    if both {
        prop_assert!((pearson_pairs(&xy).unwrap() - 1.0).abs() <= EPS);
    }
    Ok(())
}

pub fn pearson_affine(xy: &[(f64, f64)], a: f64, b: f64, flip: bool) -> Result<(), TestCaseError> {
    let base = pearson_pairs(xy);
    let s = if flip { -a } else { a };
    let moved: Vec<_> = xy.iter().map(|(x, y)| (s * x + b, *y)).collect();
    match (base, pearson_pairs(&moved)) {
        (Some(r), Some(r2)) => {
            let want = if flip { -r } else { r };
            prop_assert!((r2 - want).abs() <= 1e-9, "{} {}", r, r2);
            prop_assert!((-1.0..=1.0).contains(&r));
        }
        (None, None) => {}
        other => prop_assert!(false, "{:?}", other),
    }
    Ok(())
}

/// Every property, each over `cases` random inputs.
pub fn run_suite(cases: u32) -> Vec<(&'static str, Result<(), String>)> {
    vec![
        (
            "rank range",
            run_property(
                cases,
                (params(), mode(), prop::collection::vec(period_records(1, 8), 1..5)),
                |(p, m, periods)| ranks_in_range(&p, m, periods),
            ),
        ),
        (
            "blend convexity",
            run_property(cases, (state(10), raw_map(), 0.0f64..=1.0), |(s, nd, c)| {
                blend_convex(&s, nd, c)
            }),
        ),
        (
            "downrating map",
            run_property(cases, (0.0f64..=1.0, 0.0f64..=1.0), |(a, b)| downrating_shape(a, b)),
        ),
        (
            "log-rating symmetry",
            run_property(cases, 0.0f64..1e9, log_rating_odd),
        ),
        (
            "full_norm endpoints",
            run_property(cases, (raw_map(), any::<bool>()), |(r, l)| full_norm_endpoints(&r, l)),
        ),
        (
            "max-norm monotonicity",
            run_property(cases, raw_map(), |r| max_norm_monotone(&r)),
        ),
        (
            "liquid equivalence",
            run_property(
                cases,
                (params(), mode(), state(8), period_records(1, 8)),
                |(p, m, s, r)| liquid_equivalence(&p, m, &s, &r),
            ),
        ),
        (
            "geometric decay",
            run_property(
                cases,
                (0.0f64..=1.0, 0.0f64..=1.0, 0.0f64..=1.0, 1usize..8),
                |(r0, c, rc, k)| geometric_decay(r0, c, rc, k),
            ),
        ),
        (
            "scale invariance",
            run_property(
                cases,
                (period_records(1, 8), state(8), prop::sample::select(vec![2.0, 10.0, 100.0])),
                |(r, s, k)| scale_invariance(&r, &s, k),
            ),
        ),
        (
            "metric identities",
            run_property(cases, labelled_pairs(), |p| metric_identities(&p)),
        ),
        (
            "pearson affine invariance",
            run_property(
                cases,
                (
                    prop::collection::vec((-10.0f64..10.0, -10.0f64..10.0), 3..30),
                    0.1f64..10.0,
                    -5.0f64..5.0,
                    any::<bool>(),
                ),
                |(xy, a, b, f)| pearson_affine(&xy, a, b, f),
            ),
        ),
    ]
}
