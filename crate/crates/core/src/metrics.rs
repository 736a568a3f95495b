//! Financial and accuracy metrics of a simulated market.
//!
//! Accuracy metrics compare computed ranks against expected "goodness"
//! labels (1 for honest agents, 0 for scammers). Undefined values (a ratio
//! with a zero denominator, a correlation of a constant series) are `None`.

use std::collections::BTreeMap;

use crate::engine::{AgentId, ReputationState};
use crate::market::TransactionLog;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Volumes {
    /// Total spend of good consumers.
    pub good: f64,
    /// Total spend of bad consumers.
    pub bad: f64,
    /// Spend of good consumers at bad suppliers.
    pub good_to_bad: f64,
    /// Spend of good consumers at good suppliers.
    pub good_to_good: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FinancialMetrics {
    pub loss_to_scam: Option<f64>,
    pub profit_from_scam: Option<f64>,
    pub volumes: Volumes,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Accuracy {
    pub good: Option<f64>,
    pub bad: Option<f64>,
    pub mean: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Deviation {
    pub good: Option<f64>,
    pub bad: Option<f64>,
    pub mean: Option<f64>,
}

/// Everything measured for one run.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub profit_from_scam: Option<f64>,
    pub loss_to_scam: Option<f64>,
    pub pearson_avg: Option<f64>,
    pub pearson_latest: Option<f64>,
    pub acc_good: Option<f64>,
    pub acc_bad: Option<f64>,
    pub acc_mean: Option<f64>,
    pub rmsd_good: Option<f64>,
    pub rmsd_bad: Option<f64>,
    pub rmsd_mean: Option<f64>,
    pub volume_good: f64,
    pub volume_bad: f64,
    pub volume_good_to_bad: f64,
    pub volume_ratio: Option<f64>,
}

/// Report field names in output order.
pub const REPORT_KEYS: [&str; 14] = [
    "profit_from_scam",
    "loss_to_scam",
    "pearson_avg",
    "pearson_latest",
    "acc_good",
    "acc_bad",
    "acc_mean",
    "rmsd_good",
    "rmsd_bad",
    "rmsd_mean",
    "volume_good",
    "volume_bad",
    "volume_good_to_bad",
    "volume_ratio",
];

impl MetricsReport {
    /// Fields in `REPORT_KEYS` order.
    pub fn values(&self) -> [Option<f64>; 14] {
        [
            self.profit_from_scam,
            self.loss_to_scam,
            self.pearson_avg,
            self.pearson_latest,
            self.acc_good,
            self.acc_bad,
            self.acc_mean,
            self.rmsd_good,
            self.rmsd_bad,
            self.rmsd_mean,
            Some(self.volume_good),
            Some(self.volume_bad),
            Some(self.volume_good_to_bad),
            self.volume_ratio,
        ]
    }

    /// Inverse of [`MetricsReport::values`]; volumes default to zero when absent.
    pub fn from_values(v: [Option<f64>; 14]) -> Self {
        Self {
            profit_from_scam: v[0],
            loss_to_scam: v[1],
            pearson_avg: v[2],
            pearson_latest: v[3],
            acc_good: v[4],
            acc_bad: v[5],
            acc_mean: v[6],
            rmsd_good: v[7],
            rmsd_bad: v[8],
            rmsd_mean: v[9],
            volume_good: v[10].unwrap_or(0.0),
            volume_bad: v[11].unwrap_or(0.0),
            volume_good_to_bad: v[12].unwrap_or(0.0),
            volume_ratio: v[13],
        }
    }
}

fn ratio(num: f64, den: f64) -> Option<f64> {
    (den != 0.0).then(|| num / den)
}

pub fn volumes(log: &TransactionLog) -> Volumes {
    let mut v = Volumes::default();
    for e in &log.entries {
        match (e.rater_good, e.ratee_good) {
            (true, true) => {
                v.good += e.record.value;
                v.good_to_good += e.record.value;
            }
            (true, false) => {
                v.good += e.record.value;
                v.good_to_bad += e.record.value;
            }
            (false, _) => v.bad += e.record.value,
        }
    }
    v
}

/// Loss to scam `V_gb / V_g` and profit from scam `V_gb / V_b`.
pub fn financial_metrics(log: &TransactionLog) -> FinancialMetrics {
    let volumes = volumes(log);
    FinancialMetrics {
        loss_to_scam: ratio(volumes.good_to_bad, volumes.good),
        profit_from_scam: ratio(volumes.good_to_bad, volumes.bad),
        volumes,
    }
}

/// Paired (computed, expected) samples in key order.
fn paired(
    computed: &BTreeMap<AgentId, f64>,
    expected: &BTreeMap<AgentId, f64>,
) -> Vec<(f64, f64)> {
    expected
        .iter()
        .filter_map(|(k, e)| computed.get(k).map(|c| (*c, *e)))
        .collect()
}

/// Expectation-weighted average of computed goodness and badness.
pub fn accuracy_metrics(
    computed: &BTreeMap<AgentId, f64>,
    expected: &BTreeMap<AgentId, f64>,
) -> Accuracy {
    let pairs = paired(computed, expected);
    let (mut good_num, mut good_den, mut bad_num, mut bad_den) = (0.0, 0.0, 0.0, 0.0);
    for (c, e) in pairs {
        good_num += c * e;
        good_den += e;
        bad_num += (1.0 - c) * (1.0 - e);
        bad_den += 1.0 - e;
    }
    let good = ratio(good_num, good_den);
    let bad = ratio(bad_num, bad_den);
    Accuracy {
        good,
        bad,
        mean: good.zip(bad).map(|(g, b)| (g + b) / 2.0),
    }
}

/// Root-mean-square deviations, weighted by goodness, by badness, and flat.
pub fn rmsd_metrics(
    computed: &BTreeMap<AgentId, f64>,
    expected: &BTreeMap<AgentId, f64>,
) -> Deviation {
    let pairs = paired(computed, expected);
    let (mut good_num, mut good_den, mut bad_num, mut bad_den, mut all) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for &(c, e) in &pairs {
        let sq = (c - e) * (c - e);
        good_num += sq * e;
        good_den += e;
        bad_num += sq * (1.0 - e);
        bad_den += 1.0 - e;
        all += sq;
    }
    let good = ratio(good_num, good_den).map(f64::sqrt);
    let bad = ratio(bad_num, bad_den).map(f64::sqrt);
    Deviation {
        good,
        bad,
        mean: good
            .and(bad)
            .and_then(|_| ratio(all, pairs.len() as f64))
            .map(f64::sqrt),
    }
}

/// Sample Pearson correlation; `None` when either series is constant.
pub fn pearson(computed: &BTreeMap<AgentId, f64>, expected: &BTreeMap<AgentId, f64>) -> Option<f64> {
    let pairs = paired(computed, expected);
    pearson_pairs(&pairs)
}

pub fn pearson_pairs(pairs: &[(f64, f64)]) -> Option<f64> {
    if pairs.len() < 2 {
        return None;
    }
    let n = pairs.len() as f64;
    let mx = pairs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pairs.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for &(x, y) in pairs {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Mean of the defined values.
pub fn mean_defined(values: impl IntoIterator<Item = Option<f64>>) -> Option<f64> {
    let (sum, n) = values
        .into_iter()
        .flatten()
        .fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Computed ranks for every expected agent; absent agents get `default_rank`.
pub fn computed_ranks(
    state: &ReputationState,
    expected: &BTreeMap<AgentId, f64>,
    default_rank: f64,
) -> BTreeMap<AgentId, f64> {
    expected
        .keys()
        .map(|k| (k.clone(), state.rank(k).unwrap_or(default_rank)))
        .collect()
}

/// Full report: financial metrics from the log, accuracy metrics averaged
/// over all periods, and the correlation of the final period.
pub fn build_report(
    log: &TransactionLog,
    states: &[ReputationState],
    expected: &BTreeMap<AgentId, f64>,
    default_rank: f64,
) -> MetricsReport {
    let fin = financial_metrics(log);
    let mut pccs = Vec::with_capacity(states.len());
    let mut accs = Vec::with_capacity(states.len());
    let mut devs = Vec::with_capacity(states.len());
    for s in states {
        let computed = computed_ranks(s, expected, default_rank);
        pccs.push(pearson(&computed, expected));
        accs.push(accuracy_metrics(&computed, expected));
        devs.push(rmsd_metrics(&computed, expected));
    }
    let acc_good = mean_defined(accs.iter().map(|a| a.good));
    let acc_bad = mean_defined(accs.iter().map(|a| a.bad));
    MetricsReport {
        profit_from_scam: fin.profit_from_scam,
        loss_to_scam: fin.loss_to_scam,
        pearson_avg: mean_defined(pccs.iter().copied()),
        pearson_latest: pccs.last().copied().flatten(),
        acc_good,
        acc_bad,
        acc_mean: acc_good.zip(acc_bad).map(|(g, b)| (g + b) / 2.0),
        rmsd_good: mean_defined(devs.iter().map(|d| d.good)),
        rmsd_bad: mean_defined(devs.iter().map(|d| d.bad)),
        rmsd_mean: mean_defined(devs.iter().map(|d| d.mean)),
        volume_good: fin.volumes.good,
        volume_bad: fin.volumes.bad,
        volume_good_to_bad: fin.volumes.good_to_bad,
        volume_ratio: ratio(fin.volumes.good, fin.volumes.bad),
    }
}
