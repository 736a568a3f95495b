//! Multi-seed parameter sweeps over market conditions and engine settings.
//!
//! A grid is a list of rows; every row is run twice per seed, once with
//! reputation computed aside (`none`) and once with consumers using it.
//! Seeds aggregate into mean and sample standard deviation per metric.

use std::fmt::Write as _;
use std::io::{Read, Write};

use rayon::prelude::*;
use thiserror::Error;

use crate::engine::{EngineParams, RatingMode};
use crate::io::{fmt_f64, fmt_opt, FormatError, UNDEFINED};
use crate::market::{run_scenario, ScenarioConfig, ScenarioError, UsageMode};
use crate::metrics::{MetricsReport, REPORT_KEYS};

pub const WORKERS_ENV: &str = "LIQUID_RANK_WORKERS";
pub const SUMMARY_FILE: &str = "summary.csv";

#[derive(Debug, Error)]
pub enum SweepError {
    #[error("unknown preset {0:?} (expected small, medium or large)")]
    UnknownPreset(String),
    #[error("unknown grid {0:?} (expected fig1 or fig2)")]
    UnknownGrid(String),
    #[error("bad seed list {0:?}: {1}")]
    Seeds(String, String),
    #[error("{WORKERS_ENV}={0:?} is not a positive integer")]
    Workers(String),
    #[error("row {row} seed {seed}: {source}")]
    Run {
        row: usize,
        seed: u64,
        #[source]
        source: ScenarioError,
    },
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error("thread pool: {0}")]
    Pool(#[from] rayon::ThreadPoolBuildError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Small,
    Medium,
    Large,
}

impl Preset {
    pub fn parse(s: &str) -> Result<Self, SweepError> {
        match s {
            "small" => Ok(Self::Small),
            "medium" => Ok(Self::Medium),
            "large" => Ok(Self::Large),
            _ => Err(SweepError::UnknownPreset(s.to_owned())),
        }
    }

    /// Agents and days.
    pub fn scale(self) -> (usize, u32) {
        match self {
            Self::Small => (10, 10),
            Self::Medium => (100, 90),
            Self::Large => (1000, 180),
        }
    }

    /// Sets agents and days. Ten agents cannot split into buyers and sellers
    /// within the scammer class, so the small preset makes everyone both.
    pub fn apply(self, cfg: &mut ScenarioConfig) {
        let (n, days) = self.scale();
        cfg.n_agents = n;
        cfg.days = days;
        if self == Self::Small {
            cfg.consumer_fraction = 1.0;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Grid {
    Fig1,
    Fig2,
}

impl Grid {
    pub fn parse(s: &str) -> Result<Self, SweepError> {
        match s {
            "fig1" => Ok(Self::Fig1),
            "fig2" => Ok(Self::Fig2),
            _ => Err(SweepError::UnknownGrid(s.to_owned())),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Fig1 => "fig1",
            Self::Fig2 => "fig2",
        }
    }
}

/// The engine settings varied across rows.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RowParams {
    pub full_norm: bool,
    pub log_ratings: bool,
    pub downrating: bool,
    pub precision: f64,
    pub default_rank: f64,
    pub conservatism: f64,
    pub decayed_rank: f64,
}

impl RowParams {
    pub fn engine(&self) -> EngineParams {
        EngineParams {
            full_norm: self.full_norm,
            log_ratings: self.log_ratings,
            downrating: self.downrating,
            precision: self.precision,
            default_rank: self.default_rank,
            conservatism: self.conservatism,
            decayed_rank: self.decayed_rank,
            ..EngineParams::default()
        }
    }
}

impl Default for RowParams {
    fn default() -> Self {
        let e = EngineParams::default();
        Self {
            full_norm: e.full_norm,
            log_ratings: e.log_ratings,
            downrating: e.downrating,
            precision: e.precision,
            default_rank: e.default_rank,
            conservatism: e.conservatism,
            decayed_rank: e.decayed_rank,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridRow {
    pub label: String,
    pub ratio: f64,
    pub mode: RatingMode,
    pub params: RowParams,
}

impl GridRow {
    /// Scenario for this row on top of `base`, with or without reputation use.
    pub fn config(&self, base: &ScenarioConfig, used: bool, seed: u64) -> ScenarioConfig {
        ScenarioConfig {
            good_value_ratio: self.ratio,
            usage_mode: if used {
                UsageMode::from(self.mode)
            } else {
                UsageMode::None
            },
            measure_mode: self.mode,
            engine: EngineParams {
                update_period: base.engine.update_period,
                liquid: base.engine.liquid,
                log_ranks: base.engine.log_ranks,
                aggregation: base.engine.aggregation,
                default_rating: base.engine.default_rating,
                weighting: self.mode == RatingMode::ExplicitWeighted,
                ..self.params.engine()
            },
            seed,
            ..base.clone()
        }
    }
}

fn mode_tag(mode: RatingMode) -> &'static str {
    match mode {
        RatingMode::ExplicitUnweighted => "unweighted",
        RatingMode::ExplicitWeighted => "weighted",
        RatingMode::ImplicitFinancial => "implicit",
    }
}

/// Three rating modes by three value ratios, fixed engine settings.
pub fn fig1_rows() -> Vec<GridRow> {
    let mut rows = Vec::new();
    for mode in [
        RatingMode::ExplicitUnweighted,
        RatingMode::ExplicitWeighted,
        RatingMode::ImplicitFinancial,
    ] {
        for ratio in [10.0, 20.0, 100.0] {
            rows.push(GridRow {
                label: format!("{}-r{ratio}", mode_tag(mode)),
                ratio,
                mode,
                params: RowParams::default(),
            });
        }
    }
    rows
}

// ratio, full_norm, log_ratings, downrating, precision, R_d, C, R_c
type Fig2Row = (f64, bool, bool, bool, f64, f64, f64, f64);

/// Weighted explicit ratings under 25 engine settings at value ratios 20 and 100.
pub fn fig2_rows() -> Vec<GridRow> {
    #[rustfmt::skip]
    const ROWS: [Fig2Row; 25] = [
        (20.0, true, true, false, 0.01, 0.5, 0.5, 0.0),
        (20.0, false, true, false, 0.01, 0.5, 0.5, 0.0),
        (20.0, false, false, false, 0.01, 0.5, 0.5, 0.0),
        (20.0, false, false, false, 0.01, 0.9, 0.1, 0.0),
        (20.0, true, false, false, 0.01, 0.5, 0.5, 0.0),
        (20.0, true, false, false, 0.01, 0.1, 0.5, 0.0),
        (20.0, true, false, false, 0.01, 0.9, 0.5, 0.0),
        (20.0, true, false, false, 0.01, 0.9, 0.1, 0.0),
        (20.0, true, false, false, 0.01, 0.9, 0.9, 0.0),
        (20.0, true, false, false, 0.01, 0.5, 0.5, 0.5),
        (20.0, true, false, false, 1.0, 0.5, 0.5, 0.0),
        (20.0, true, false, false, 0.001, 0.5, 0.5, 0.0),
        (20.0, true, false, true, 0.01, 0.5, 0.5, 0.0),
        (20.0, true, false, true, 0.01, 0.9, 0.1, 0.0),
        (20.0, true, true, true, 0.01, 0.9, 0.1, 0.0),
        (20.0, false, false, true, 0.01, 0.9, 0.1, 0.0),
        (20.0, false, true, true, 0.01, 0.9, 0.1, 0.0),
        (100.0, true, true, false, 0.01, 0.5, 0.5, 0.0),
        (100.0, false, true, false, 0.01, 0.5, 0.5, 0.0),
        (100.0, false, false, false, 0.01, 0.5, 0.5, 0.0),
        (100.0, true, false, false, 0.01, 0.5, 0.5, 0.0),
        (100.0, true, false, false, 0.01, 0.1, 0.5, 0.0),
        (100.0, true, false, false, 0.01, 0.9, 0.5, 0.0),
        (100.0, true, false, false, 0.01, 0.9, 0.1, 0.0),
        (100.0, true, false, false, 0.01, 0.9, 0.9, 0.0),
    ];
    ROWS.iter()
        .enumerate()
        .map(|(i, &(ratio, full_norm, log_ratings, downrating, precision, rd, c, rc))| GridRow {
            label: format!("row{}-r{ratio}", i + 1),
            ratio,
            mode: RatingMode::ExplicitWeighted,
            params: RowParams {
                full_norm,
                log_ratings,
                downrating,
                precision,
                default_rank: rd,
                conservatism: c,
                decayed_rank: rc,
            },
        })
        .collect()
}

pub fn grid_rows(grid: Grid) -> Vec<GridRow> {
    match grid {
        Grid::Fig1 => fig1_rows(),
        Grid::Fig2 => fig2_rows(),
    }
}

/// Parses `a..b` (inclusive), a comma list, or a mix such as `1..3,7`.
pub fn parse_seeds(text: &str) -> Result<Vec<u64>, SweepError> {
    let err = |why: &str| SweepError::Seeds(text.to_owned(), why.to_owned());
    let mut seeds = Vec::new();
    for part in text.split(',').map(str::trim) {
        if let Some((a, b)) = part.split_once("..") {
            let a: u64 = a.trim().parse().map_err(|_| err("range start is not an integer"))?;
            let b: u64 = b.trim().parse().map_err(|_| err("range end is not an integer"))?;
            if a > b {
                return Err(err("empty range"));
            }
            seeds.extend(a..=b);
        } else {
            seeds.push(part.parse().map_err(|_| err("not an integer"))?);
        }
    }
    let mut sorted = seeds.clone();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() != seeds.len() {
        return Err(err("duplicate seed"));
    }
    Ok(seeds)
}

pub fn format_seeds(seeds: &[u64]) -> String {
    let contiguous = seeds.windows(2).all(|w| w[1] == w[0] + 1);
    match seeds {
        [first, .., last] if contiguous => format!("{first}..{last}"),
        _ => seeds.iter().map(u64::to_string).collect::<Vec<_>>().join(","),
    }
}

/// Mean and sample standard deviation over the seeds where a metric is defined.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stat {
    pub mean: Option<f64>,
    pub std: Option<f64>,
    pub defined: usize,
}

impl Stat {
    pub fn of(values: impl IntoIterator<Item = Option<f64>>) -> Self {
        let xs: Vec<f64> = values.into_iter().flatten().collect();
        let n = xs.len();
        if n == 0 {
            return Self {
                mean: None,
                std: None,
                defined: 0,
            };
        }
        let mean = xs.iter().sum::<f64>() / n as f64;
        let std = (n > 1).then(|| {
            (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        });
        Self {
            mean: Some(mean),
            std,
            defined: n,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RowSummary {
    pub row: GridRow,
    pub none: [Stat; 14],
    pub used: [Stat; 14],
}

impl RowSummary {
    pub fn stat(&self, used: bool, key: &str) -> Stat {
        let i = REPORT_KEYS
            .iter()
            .position(|k| *k == key)
            .unwrap_or_else(|| panic!("unknown metric {key}"));
        if used {
            self.used[i]
        } else {
            self.none[i]
        }
    }

    pub fn mean(&self, used: bool, key: &str) -> Option<f64> {
        self.stat(used, key).mean
    }
}

fn aggregate(reports: &[MetricsReport]) -> [Stat; 14] {
    let rows: Vec<[Option<f64>; 14]> = reports.iter().map(MetricsReport::values).collect();
    std::array::from_fn(|i| Stat::of(rows.iter().map(|r| r[i])))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sweep {
    pub grid: Grid,
    pub n_agents: usize,
    pub days: u32,
    pub seeds: Vec<u64>,
    pub rows: Vec<RowSummary>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub grid: Grid,
    pub base: ScenarioConfig,
    pub seeds: Vec<u64>,
}

impl SweepSpec {
    pub fn new(grid: Grid, preset: Preset, seeds: Vec<u64>) -> Self {
        let mut base = ScenarioConfig::default();
        preset.apply(&mut base);
        Self { grid, base, seeds }
    }

    pub fn rows(&self) -> Vec<GridRow> {
        grid_rows(self.grid)
    }

    /// Number of scenario runs: rows, both usage sides, all seeds.
    pub fn cardinality(&self) -> usize {
        self.rows().len() * 2 * self.seeds.len()
    }

    pub fn describe(&self) -> String {
        format!(
            "{}: {} rows x 2 usage modes x {} seeds = {} runs ({} agents, {} days)",
            self.grid.as_str(),
            self.rows().len(),
            self.seeds.len(),
            self.cardinality(),
            self.base.n_agents,
            self.base.days
        )
    }

    /// Runs every cell; results do not depend on scheduling.
    pub fn run(&self) -> Result<Sweep, SweepError> {
        let rows = self.rows();
        let jobs: Vec<(usize, bool, u64)> = (0..rows.len())
            .flat_map(|r| {
                [false, true]
                    .into_iter()
                    .flat_map(move |used| self.seeds.iter().map(move |&s| (r, used, s)))
            })
            .collect();
        let reports: Vec<MetricsReport> = jobs
            .par_iter()
            .map(|&(r, used, seed)| {
                run_scenario(&rows[r].config(&self.base, used, seed))
                    .map(|o| o.report)
                    .map_err(|source| SweepError::Run {
                        row: r + 1,
                        seed,
                        source,
                    })
            })
            .collect::<Result<_, _>>()?;
        let k = self.seeds.len();
        let rows = rows
            .into_iter()
            .enumerate()
            .map(|(r, row)| {
                let base = r * 2 * k;
                RowSummary {
                    row,
                    none: aggregate(&reports[base..base + k]),
                    used: aggregate(&reports[base + k..base + 2 * k]),
                }
            })
            .collect();
        Ok(Sweep {
            grid: self.grid,
            n_agents: self.base.n_agents,
            days: self.base.days,
            seeds: self.seeds.clone(),
            rows,
        })
    }

    /// Runs on a pool sized by `LIQUID_RANK_WORKERS`, or rayon's default.
    pub fn run_with_env_workers(&self) -> Result<Sweep, SweepError> {
        match std::env::var(WORKERS_ENV) {
            Ok(v) => {
                let n: usize = v
                    .trim()
                    .parse()
                    .ok()
                    .filter(|&n| n > 0)
                    .ok_or_else(|| SweepError::Workers(v.clone()))?;
                let pool = rayon::ThreadPoolBuilder::new().num_threads(n).build()?;
                pool.install(|| self.run())
            }
            Err(_) => self.run(),
        }
    }
}

const ROW_COLUMNS: [&str; 14] = [
    "grid",
    "row",
    "label",
    "n_agents",
    "days",
    "seeds",
    "ratio",
    "mode",
    "full_norm",
    "log_ratings",
    "downrating",
    "precision",
    "default_rank",
    "conservatism",
];

fn header() -> Vec<String> {
    let mut h: Vec<String> = ROW_COLUMNS.iter().map(|s| s.to_string()).collect();
    h.push("decayed_rank".into());
    for side in ["none", "used"] {
        for key in REPORT_KEYS {
            for part in ["mean", "std", "n"] {
                h.push(format!("{side}.{key}.{part}"));
            }
        }
    }
    h
}

pub fn write_summary<W: Write>(sweep: &Sweep, out: W) -> Result<(), SweepError> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    w.write_record(header()).map_err(FormatError::from)?;
    let seeds = format_seeds(&sweep.seeds);
    for (i, s) in sweep.rows.iter().enumerate() {
        let p = &s.row.params;
        let mut rec = vec![
            sweep.grid.as_str().to_owned(),
            (i + 1).to_string(),
            s.row.label.clone(),
            sweep.n_agents.to_string(),
            sweep.days.to_string(),
            seeds.clone(),
            fmt_f64(s.row.ratio),
            s.row.mode.to_string(),
            p.full_norm.to_string(),
            p.log_ratings.to_string(),
            p.downrating.to_string(),
            fmt_f64(p.precision),
            fmt_f64(p.default_rank),
            fmt_f64(p.conservatism),
            fmt_f64(p.decayed_rank),
        ];
        for stats in [&s.none, &s.used] {
            for st in stats {
                rec.push(fmt_opt(st.mean));
                rec.push(fmt_opt(st.std));
                rec.push(st.defined.to_string());
            }
        }
        w.write_record(&rec).map_err(FormatError::from)?;
    }
    w.flush()
        .map_err(|e| FormatError::Csv(csv::Error::from(e)))?;
    Ok(())
}

pub fn read_summary<R: Read>(input: R) -> Result<Sweep, SweepError> {
    let mut rdr = csv::ReaderBuilder::new().from_reader(input);
    let expected = header();
    let got = rdr.headers().map_err(FormatError::from)?;
    if got.iter().ne(expected.iter().map(String::as_str)) {
        return Err(FormatError::Row {
            row: 0,
            reason: "not a sweep summary header".into(),
        }
        .into());
    }
    let mut sweep: Option<Sweep> = None;
    for (idx, rec) in rdr.records().enumerate() {
        let row = idx + 1;
        let rec = rec.map_err(FormatError::from)?;
        let bad = |reason: String| SweepError::Format(FormatError::Row { row, reason });
        let num = |i: usize| -> Result<f64, SweepError> {
            rec[i]
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| bad(format!("{}: expected a number", expected[i])))
        };
        let opt = |i: usize| -> Result<Option<f64>, SweepError> {
            if &rec[i] == UNDEFINED {
                Ok(None)
            } else {
                num(i).map(Some)
            }
        };
        let flag = |i: usize| -> Result<bool, SweepError> {
            rec[i]
                .parse::<bool>()
                .map_err(|_| bad(format!("{}: expected true or false", expected[i])))
        };
        let int = |i: usize| -> Result<u64, SweepError> {
            rec[i]
                .parse::<u64>()
                .map_err(|_| bad(format!("{}: expected an integer", expected[i])))
        };
        let grid = Grid::parse(&rec[0])?;
        let n_agents = int(3)? as usize;
        let days = int(4)? as u32;
        let seeds = parse_seeds(&rec[5])?;
        let mode = RatingMode::parse(&rec[7]).ok_or_else(|| bad(format!("mode {:?}", &rec[7])))?;
        let grid_row = GridRow {
            label: rec[2].to_owned(),
            ratio: num(6)?,
            mode,
            params: RowParams {
                full_norm: flag(8)?,
                log_ratings: flag(9)?,
                downrating: flag(10)?,
                precision: num(11)?,
                default_rank: num(12)?,
                conservatism: num(13)?,
                decayed_rank: num(14)?,
            },
        };
        let mut stats = [[Stat::of([]); 14]; 2];
        let mut col = 15;
        for side in &mut stats {
            for st in side.iter_mut() {
                *st = Stat {
                    mean: opt(col)?,
                    std: opt(col + 1)?,
                    defined: int(col + 2)? as usize,
                };
                col += 3;
            }
        }
        let summary = RowSummary {
            row: grid_row,
            none: stats[0],
            used: stats[1],
        };
        match &mut sweep {
            None => {
                sweep = Some(Sweep {
                    grid,
                    n_agents,
                    days,
                    seeds,
                    rows: vec![summary],
                })
            }
            Some(s) => {
                if s.grid != grid || s.n_agents != n_agents || s.days != days || s.seeds != seeds {
                    return Err(bad("row belongs to a different sweep".into()));
                }
                s.rows.push(summary);
            }
        }
    }
    sweep.ok_or_else(|| {
        FormatError::Row {
            row: 1,
            reason: "summary has no rows".into(),
        }
        .into()
    })
}

const METRIC_COLUMNS: [(&str, &str); 10] = [
    ("profit", "profit_from_scam"),
    ("loss", "loss_to_scam"),
    ("pcc_avg", "pearson_avg"),
    ("pcc_last", "pearson_latest"),
    ("A_g", "acc_good"),
    ("A_b", "acc_bad"),
    ("A_m", "acc_mean"),
    ("D_g", "rmsd_good"),
    ("D_b", "rmsd_bad"),
    ("D_m", "rmsd_mean"),
];

fn percent(v: Option<f64>) -> String {
    v.map_or_else(|| "undef".into(), |x| format!("{:.1}%", x * 100.0))
}

fn plain(v: Option<f64>) -> String {
    v.map_or_else(|| "undef".into(), |x| format!("{x:.2}"))
}

fn cell(key: &str, v: Option<f64>) -> String {
    if key == "profit_from_scam" || key == "loss_to_scam" {
        percent(v)
    } else {
        plain(v)
    }
}

/// Aligned text table of seed means in the published column order.
///
/// fig1 shows every metric for both sides; fig2 shows the engine settings,
/// the scam ratios without reputation, then every metric with it.
pub fn render_table(sweep: &Sweep) -> String {
    let mut head: Vec<String> = vec!["row".into(), "label".into()];
    let none_cols: &[(&str, &str)] = match sweep.grid {
        Grid::Fig1 => &METRIC_COLUMNS,
        Grid::Fig2 => &METRIC_COLUMNS[..2],
    };
    if sweep.grid == Grid::Fig2 {
        head.extend(
            ["full_norm", "log_rat", "downrat", "prec", "R_d", "C", "R_c"].map(String::from),
        );
    }
    head.extend(none_cols.iter().map(|(h, _)| format!("{h}/none")));
    head.extend(METRIC_COLUMNS.iter().map(|(h, _)| format!("{h}/use")));

    let mut body: Vec<Vec<String>> = Vec::new();
    for (i, s) in sweep.rows.iter().enumerate() {
        let mut line = vec![(i + 1).to_string(), s.row.label.clone()];
        if sweep.grid == Grid::Fig2 {
            let p = &s.row.params;
            line.extend([
                p.full_norm.to_string(),
                p.log_ratings.to_string(),
                p.downrating.to_string(),
                format!("{}", p.precision),
                format!("{}", p.default_rank),
                format!("{}", p.conservatism),
                format!("{}", p.decayed_rank),
            ]);
        }
        line.extend(none_cols.iter().map(|(_, k)| cell(k, s.mean(false, k))));
        line.extend(METRIC_COLUMNS.iter().map(|(_, k)| cell(k, s.mean(true, k))));
        body.push(line);
    }

    let widths: Vec<usize> = (0..head.len())
        .map(|c| {
            body.iter()
                .map(|l| l[c].len())
                .chain([head[c].len()])
                .max()
                .unwrap_or(0)
        })
        .collect();
    let mut out = format!(
        "# {} sweep, {} agents, {} days, seeds {}\n",
        sweep.grid.as_str(),
        sweep.n_agents,
        sweep.days,
        format_seeds(&sweep.seeds)
    );
    for line in std::iter::once(&head).chain(&body) {
        let cells: Vec<String> = line
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(c, (v, w))| {
                if c == 1 {
                    format!("{v:<w$}")
                } else {
                    format!("{v:>w$}")
                }
            })
            .collect();
        let _ = writeln!(out, "{}", cells.join("  ").trim_end());
    }
    out
}
