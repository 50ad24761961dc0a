//! Fixed-window space-time scan: every `m1 x m2 x T` prism is tested against
//! its expected count, and the day signals if any prism exceeds `h_scan`.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{DailyCountStream, Grid, LatticeConfig, Region, SummedArea};

/// `ln(k!)`: exact summation below 256, Stirling series above.
pub(crate) fn ln_factorial(k: u64) -> f64 {
    if k < 256 {
        (2..=k).map(|i| (i as f64).ln()).sum()
    } else {
        let n = k as f64;
        let n2 = n * n;
        n * n.ln() - n + 0.5 * (2.0 * std::f64::consts::PI * n).ln() + 1.0 / (12.0 * n)
            - 1.0 / (360.0 * n * n2)
            + 1.0 / (1260.0 * n * n2 * n2)
    }
}

fn ln_pmf(k: u64, mean: f64) -> f64 {
    k as f64 * mean.ln() - mean - ln_factorial(k)
}

// Relative cut-off for the series below; terms are monotone there.
const SERIES_EPS: f64 = 1e-18;

/// Returns `(P(Y <= y), P(Y > y))`, each computed from whichever side is the
/// short, non-cancelling sum.
fn poisson_split(y: u64, mean: f64) -> (f64, f64) {
    if (y as f64) + 1.0 >= mean {
        // upper tail: pmf(y+1) * (1 + m/(y+2) + m^2/((y+2)(y+3)) + ...), terms decreasing
        let first = y + 1;
        let mut term = 1.0;
        let mut acc = 1.0;
        let mut k = first;
        loop {
            k += 1;
            term *= mean / k as f64;
            acc += term;
            if term < SERIES_EPS * acc {
                break;
            }
        }
        let tail = (ln_pmf(first, mean) + acc.ln()).exp();
        (1.0 - tail, tail)
    } else {
        // lower sum: pmf(y) * (1 + y/m + y(y-1)/m^2 + ...), terms decreasing
        let mut term = 1.0;
        let mut acc = 1.0;
        let mut k = y;
        while k > 0 {
            term *= k as f64 / mean;
            acc += term;
            if term < SERIES_EPS * acc {
                break;
            }
            k -= 1;
        }
        let cdf = (ln_pmf(y, mean) + acc.ln()).exp();
        (cdf, 1.0 - cdf)
    }
}

fn check_mean(mean: f64) -> Result<()> {
    if !(mean > 0.0 && mean.is_finite()) {
        return Err(Error::Parameter(format!("Poisson mean must be positive, got {mean}")));
    }
    Ok(())
}

/// Strict upper tail `P(Y > y)` for `Y ~ Poisson(mean)`.
pub fn poisson_tail(y: u64, mean: f64) -> Result<f64> {
    check_mean(mean)?;
    Ok(poisson_split(y, mean).1.clamp(0.0, 1.0))
}

/// `P(Y <= y)` for `Y ~ Poisson(mean)`.
pub fn poisson_cdf(y: u64, mean: f64) -> Result<f64> {
    check_mean(mean)?;
    Ok(poisson_split(y, mean).0.clamp(0.0, 1.0))
}

/// Standardised departure `(y - M) / sqrt(M)`.
pub fn standardized_stat(y: f64, mean: f64) -> Result<f64> {
    check_mean(mean)?;
    if !(y >= 0.0) {
        return Err(Error::Domain(format!("count must be non-negative, got {y}")));
    }
    Ok((y - mean) / mean.sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScanMode {
    /// Statistic is the tail probability `P(Y > y)`; signal when it drops
    /// below the threshold.
    TailProbability,
    /// Statistic is `(y - M)/sqrt(M)`; signal when it exceeds the threshold.
    Standardized,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanParams {
    pub m1: usize,
    pub m2: usize,
    pub window_days: usize,
    pub threshold: f64,
    pub mode: ScanMode,
}

impl Default for ScanParams {
    fn default() -> Self {
        Self {
            m1: 10,
            m2: 10,
            window_days: 10,
            threshold: 7.809,
            mode: ScanMode::Standardized,
        }
    }
}

impl ScanParams {
    pub fn validate(&self, config: LatticeConfig) -> Result<()> {
        if self.m1 == 0 || self.m1 > config.rows || self.m2 == 0 || self.m2 > config.cols {
            return Err(Error::Parameter(format!(
                "scan window {}x{} does not fit a {}x{} lattice",
                self.m1, self.m2, config.rows, config.cols
            )));
        }
        if self.window_days == 0 {
            return Err(Error::Parameter("scan depth T must be at least one day".into()));
        }
        if !self.threshold.is_finite() {
            return Err(Error::Parameter("scan threshold must be finite".into()));
        }
        Ok(())
    }

    /// Number of window positions per day, `(A - m1 + 1)(B - m2 + 1)`.
    pub fn positions(&self, config: LatticeConfig) -> usize {
        (config.rows - self.m1 + 1) * (config.cols - self.m2 + 1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanResult {
    pub day: i64,
    pub best_window: Option<Region>,
    pub best_statistic: f64,
    pub signalled: bool,
    /// Row-major `(A - m1 + 1) x (B - m2 + 1)`; NaN where the window has zero
    /// expected count and was skipped.
    pub statistics: Vec<f64>,
    pub stat_rows: usize,
    pub stat_cols: usize,
    pub windows_evaluated: usize,
    pub windows_skipped: usize,
}

impl ScanResult {
    /// Statistic of the window starting at 1-based (i, j).
    pub fn statistic_at(&self, i: usize, j: usize) -> f64 {
        self.statistics[(i - 1) * self.stat_cols + (j - 1)]
    }

    pub fn record(&self) -> ScanRecord {
        ScanRecord {
            day: self.day,
            signalled: self.signalled,
            best_stat: self.best_statistic,
            best_window: self.best_window.map(WindowJson::from),
        }
    }
}

/// Rectangle in 1-based inclusive lattice indices, as written to reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowJson {
    pub r0: usize,
    pub r1: usize,
    pub c0: usize,
    pub c1: usize,
}

impl From<Region> for WindowJson {
    fn from(r: Region) -> Self {
        Self {
            r0: r.row_start(),
            r1: r.row_end(),
            c0: r.col_start(),
            c1: r.col_end(),
        }
    }
}

/// One JSON line of scan output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanRecord {
    pub day: i64,
    pub signalled: bool,
    pub best_stat: f64,
    pub best_window: Option<WindowJson>,
}

/// Evaluates every window given per-cell `T`-day sums of counts and means.
pub fn scan_sums(count_sums: &Grid, mean_sums: &Grid, params: &ScanParams) -> Result<ScanResult> {
    let config = count_sums.config();
    mean_sums.ensure_shape(config)?;
    params.validate(config)?;
    let counts = SummedArea::new(count_sums);
    let means = SummedArea::new(mean_sums);
    Ok(scan_tables(&counts, &means, params, count_sums.day()))
}

pub(crate) fn scan_tables(
    counts: &SummedArea,
    means: &SummedArea,
    params: &ScanParams,
    day: i64,
) -> ScanResult {
    let config = counts.config();
    let stat_rows = config.rows - params.m1 + 1;
    let stat_cols = config.cols - params.m2 + 1;
    let mut statistics = vec![f64::NAN; stat_rows * stat_cols];
    let mut best: Option<(usize, usize, f64)> = None;
    let mut skipped = 0;
    for i in 1..=stat_rows {
        let r1 = i + params.m1 - 1;
        for j in 1..=stat_cols {
            let c1 = j + params.m2 - 1;
            let m = means.sum_bounds(i, r1, j, c1);
            if m <= 0.0 {
                skipped += 1;
                continue;
            }
            let y = counts.sum_bounds(i, r1, j, c1);
            let (stat, better) = match params.mode {
                ScanMode::Standardized => {
                    let z = (y - m) / m.sqrt();
                    (z, best.is_none_or(|(_, _, b)| z > b))
                }
                ScanMode::TailProbability => {
                    let p = poisson_split(y.round() as u64, m).1;
                    (p, best.is_none_or(|(_, _, b)| p < b))
                }
            };
            statistics[(i - 1) * stat_cols + (j - 1)] = stat;
            if better {
                best = Some((i, j, stat));
            }
        }
    }
    let (best_window, best_statistic, signalled) = match best {
        Some((i, j, s)) => {
            let region = Region::new(i, i + params.m1 - 1, j, j + params.m2 - 1)
                .expect("window bounds validated");
            let signalled = match params.mode {
                ScanMode::Standardized => s > params.threshold,
                ScanMode::TailProbability => s < params.threshold,
            };
            (Some(region), s, signalled)
        }
        None => (None, f64::NAN, false),
    };
    ScanResult {
        day,
        best_window,
        best_statistic,
        signalled,
        statistics,
        stat_rows,
        stat_cols,
        windows_evaluated: stat_rows * stat_cols,
        windows_skipped: skipped,
    }
}

/// Scans day `t` of a stream that carries aligned mean grids.
pub fn scan_day(stream: &DailyCountStream, params: &ScanParams, t: i64) -> Result<ScanResult> {
    let config = stream.config();
    params.validate(config)?;
    let means = stream
        .means()
        .ok_or_else(|| Error::Parameter("scan needs a stream with mean grids".into()))?;
    let first = t - params.window_days as i64 + 1;
    if first < stream.start_day() || t > stream.end_day() {
        return Err(Error::InsufficientHistory {
            day: t,
            needed: params.window_days,
            available: (t - stream.start_day() + 1).clamp(0, stream.len() as i64) as usize,
        });
    }
    let lo = (first - stream.start_day()) as usize;
    let hi = (t - stream.start_day()) as usize;
    let mut count_sums = Grid::zeros(config, t);
    let mut mean_sums = Grid::zeros(config, t);
    for idx in lo..=hi {
        add_into(&mut count_sums, &stream.counts()[idx], 1.0);
        add_into(&mut mean_sums, &means[idx], 1.0);
    }
    scan_sums(&count_sums, &mean_sums, params)
}

fn add_into(acc: &mut Grid, g: &Grid, sign: f64) {
    for (a, v) in acc.values_mut().iter_mut().zip(g.values()) {
        *a += sign * v;
    }
}

/// Rolling scan over a live stream: keeps the last `T` days and their sums.
#[derive(Debug, Clone)]
pub struct ScanMonitor {
    params: ScanParams,
    config: LatticeConfig,
    history: VecDeque<(Grid, Grid)>,
    count_sums: Grid,
    mean_sums: Grid,
    count_table: SummedArea,
    mean_table: SummedArea,
    pushes: usize,
}

impl ScanMonitor {
    pub fn new(params: ScanParams, config: LatticeConfig) -> Result<Self> {
        params.validate(config)?;
        let zero = Grid::zeros(config, 0);
        Ok(Self {
            params,
            config,
            history: VecDeque::with_capacity(params.window_days + 1),
            count_table: SummedArea::new(&zero),
            mean_table: SummedArea::new(&zero),
            count_sums: zero.clone(),
            mean_sums: zero,
            pushes: 0,
        })
    }

    pub fn params(&self) -> &ScanParams {
        &self.params
    }

    pub fn set_threshold(&mut self, threshold: f64) {
        self.params.threshold = threshold;
    }

    pub fn reset(&mut self) {
        self.history.clear();
        self.count_sums = Grid::zeros(self.config, 0);
        self.mean_sums = Grid::zeros(self.config, 0);
        self.pushes = 0;
    }

    /// Days still needed before the window is full.
    pub fn days_until_ready(&self) -> usize {
        self.params.window_days.saturating_sub(self.history.len())
    }

    /// Adds one day; returns the scan once `T` days are available.
    pub fn push(&mut self, counts: &Grid, means: &Grid) -> Result<Option<ScanResult>> {
        counts.ensure_shape(self.config)?;
        means.ensure_shape(self.config)?;
        add_into(&mut self.count_sums, counts, 1.0);
        add_into(&mut self.mean_sums, means, 1.0);
        self.history.push_back((counts.clone(), means.clone()));
        if self.history.len() > self.params.window_days {
            let (old_c, old_m) = self.history.pop_front().expect("non-empty history");
            add_into(&mut self.count_sums, &old_c, -1.0);
            add_into(&mut self.mean_sums, &old_m, -1.0);
        }
        self.pushes += 1;
        // rolling add/subtract drifts; refresh the sums periodically
        if self.pushes % 256 == 0 {
            self.recompute_sums();
        }
        if self.history.len() < self.params.window_days {
            return Ok(None);
        }
        self.count_table.rebuild(&self.count_sums);
        self.mean_table.rebuild(&self.mean_sums);
        Ok(Some(scan_tables(
            &self.count_table,
            &self.mean_table,
            &self.params,
            counts.day(),
        )))
    }

    fn recompute_sums(&mut self) {
        self.count_sums = Grid::zeros(self.config, 0);
        self.mean_sums = Grid::zeros(self.config, 0);
        for (c, m) in &self.history {
            add_into(&mut self.count_sums, c, 1.0);
            add_into(&mut self.mean_sums, m, 1.0);
        }
        for v in self.count_sums.values_mut() {
            *v = v.max(0.0);
        }
    }
}
