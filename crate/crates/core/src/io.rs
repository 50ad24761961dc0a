//! File formats: cell-count and mean CSVs, point-event CSVs, the run
//! configuration (TOML) and the calibration file (JSON).

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::dof::{DofModel, ThresholdSearchResult, LOGVAR_FEATURES, MEAN_FEATURES};
use crate::error::{Error, Result};
use crate::forecast::ForecastConfig;
use crate::fss::{Expansion, FssParams, PruneRule, SelectionMode};
use crate::grid::{DailyCountStream, Grid, LatticeConfig, PointEvent};
use crate::scan::{ScanMode, ScanParams};
use crate::smoothing::SmoothingParams;

/// One `day,row,col,value` line.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellRecord {
    pub day: i64,
    pub row: usize,
    pub col: usize,
    pub value: f64,
}

fn parse_err(line: u64, message: impl Into<String>) -> Error {
    Error::Parse {
        line: line as usize,
        message: message.into(),
    }
}

fn reader(text: &str) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes())
}

fn check_header(rdr: &mut csv::Reader<&[u8]>, expected: &[&str]) -> Result<()> {
    let header = rdr.headers().map_err(|e| parse_err(1, e.to_string()))?;
    let found: Vec<&str> = header.iter().collect();
    if found != expected {
        return Err(parse_err(
            1,
            format!("expected header {:?}, found {:?}", expected.join(","), found.join(",")),
        ));
    }
    Ok(())
}

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize, name: &str, line: u64) -> Result<T> {
    let raw = rec.get(i).ok_or_else(|| parse_err(line, format!("missing field {name}")))?;
    raw.parse()
        .map_err(|_| parse_err(line, format!("invalid {name} {raw:?}")))
}

/// Parses `day,row,col,<value_column>` with 1-based rows and columns.
pub fn parse_cell_csv(text: &str, value_column: &str) -> Result<Vec<CellRecord>> {
    let mut rdr = reader(text);
    check_header(&mut rdr, &["day", "row", "col", value_column])?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != 4 {
            return Err(parse_err(line, format!("expected 4 fields, found {}", rec.len())));
        }
        let day: i64 = field(&rec, 0, "day", line)?;
        let row: usize = field(&rec, 1, "row", line)?;
        let col: usize = field(&rec, 2, "col", line)?;
        let value: f64 = field(&rec, 3, value_column, line)?;
        if row == 0 || col == 0 {
            return Err(parse_err(line, "rows and columns are 1-based"));
        }
        if !(value.is_finite() && value >= 0.0) {
            return Err(parse_err(line, format!("{value_column} must be finite and non-negative")));
        }
        out.push(CellRecord { day, row, col, value });
    }
    Ok(out)
}

/// Counts file: values must be whole numbers.
pub fn parse_counts_csv(text: &str) -> Result<Vec<CellRecord>> {
    let recs = parse_cell_csv(text, "count")?;
    if let Some((i, r)) = recs.iter().enumerate().find(|(_, r)| r.value.fract() != 0.0) {
        return Err(parse_err(i as u64 + 2, format!("count {} is not a whole number", r.value)));
    }
    Ok(recs)
}

pub fn parse_means_csv(text: &str) -> Result<Vec<CellRecord>> {
    parse_cell_csv(text, "mean")
}

/// Parses `x,y,day` point events.
pub fn parse_points_csv(text: &str) -> Result<Vec<PointEvent>> {
    let mut rdr = reader(text);
    check_header(&mut rdr, &["x", "y", "day"])?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| parse_err(e.position().map_or(0, |p| p.line()), e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != 3 {
            return Err(parse_err(line, format!("expected 3 fields, found {}", rec.len())));
        }
        let x: f64 = field(&rec, 0, "x", line)?;
        let y: f64 = field(&rec, 1, "y", line)?;
        if !(x.is_finite() && y.is_finite()) {
            return Err(parse_err(line, "coordinates must be finite"));
        }
        out.push(PointEvent {
            x,
            y,
            day: field(&rec, 2, "day", line)?,
        });
    }
    Ok(out)
}

fn fill_grids(
    config: LatticeConfig,
    records: &[CellRecord],
    first: i64,
    days: usize,
    what: &str,
) -> Result<Vec<Grid>> {
    let mut grids: Vec<Grid> = (0..days).map(|i| Grid::zeros(config, first + i as i64)).collect();
    let mut seen = BTreeSet::new();
    for r in records {
        if r.row > config.rows || r.col > config.cols {
            return Err(Error::Domain(format!(
                "{what} cell ({}, {}) on day {} outside a {} x {} lattice",
                r.row, r.col, r.day, config.rows, config.cols
            )));
        }
        if !seen.insert((r.day, r.row, r.col)) {
            return Err(Error::Domain(format!(
                "duplicate {what} for cell ({}, {}) on day {}",
                r.row, r.col, r.day
            )));
        }
        grids[(r.day - first) as usize].set(r.row, r.col, r.value);
    }
    Ok(grids)
}

/// Builds a stream from count records (absent cells are 0) and optional mean
/// records. Every day between the first and last present day must appear in
/// at least one of the two files.
pub fn assemble_stream(
    config: LatticeConfig,
    counts: &[CellRecord],
    means: Option<&[CellRecord]>,
) -> Result<DailyCountStream> {
    let present: BTreeSet<i64> = counts
        .iter()
        .chain(means.unwrap_or(&[]))
        .map(|r| r.day)
        .collect();
    let (Some(&first), Some(&last)) = (present.first(), present.last()) else {
        return Err(Error::Parameter("input contains no days".into()));
    };
    let missing: Vec<i64> = (first..=last).filter(|d| !present.contains(d)).collect();
    if !missing.is_empty() {
        return Err(Error::DayGap { missing });
    }
    let days = (last - first + 1) as usize;
    let count_grids = fill_grids(config, counts, first, days, "count")?;
    let mean_grids = means
        .map(|m| fill_grids(config, m, first, days, "mean"))
        .transpose()?;
    DailyCountStream::from_grids(count_grids, mean_grids)
}

fn write_cells(grids: &[Grid], value_column: &str, skip_zero: bool) -> String {
    let mut out = format!("day,row,col,{value_column}\n");
    for g in grids {
        for r in 1..=g.rows() {
            for c in 1..=g.cols() {
                let v = g.get(r, c);
                if skip_zero && v == 0.0 {
                    continue;
                }
                out.push_str(&format!("{},{r},{c},{v}\n", g.day()));
            }
        }
    }
    out
}

/// Non-zero cells only.
pub fn write_counts_csv(grids: &[Grid]) -> String {
    write_cells(grids, "count", true)
}

pub fn write_means_csv(grids: &[Grid]) -> String {
    write_cells(grids, "mean", false)
}

pub fn write_points_csv(points: &[PointEvent]) -> String {
    let mut out = String::from("x,y,day\n");
    for p in points {
        out.push_str(&format!("{},{},{}\n", p.x, p.y, p.day));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LatticeSection {
    pub rows: usize,
    pub cols: usize,
}

impl Default for LatticeSection {
    fn default() -> Self {
        Self { rows: 40, cols: 40 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SmoothingSection {
    pub alpha: f64,
    pub lambda: f64,
}

impl Default for SmoothingSection {
    fn default() -> Self {
        let d = SmoothingParams::default();
        Self {
            alpha: d.alpha,
            lambda: d.lambda,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScanSection {
    pub m1: usize,
    pub m2: usize,
    pub window_days: usize,
    pub threshold: f64,
    pub mode: ScanMode,
}

impl Default for ScanSection {
    fn default() -> Self {
        let d = ScanParams::default();
        Self {
            m1: d.m1,
            m2: d.m2,
            window_days: d.window_days,
            threshold: d.threshold,
            mode: d.mode,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FssSection {
    pub max_generations: usize,
    pub prune_a: f64,
    pub prune_b: f64,
    pub sd_floor: f64,
    pub selection_mode: SelectionMode,
    pub expansion: Expansion,
}

impl Default for FssSection {
    fn default() -> Self {
        let d = FssParams::default();
        Self {
            max_generations: d.max_generations,
            prune_a: d.prune_rule.intercept,
            prune_b: d.prune_rule.slope,
            sd_floor: d.sd_floor,
            selection_mode: d.selection_mode,
            expansion: d.expansion,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsSection {
    pub counts: Option<PathBuf>,
    pub means: Option<PathBuf>,
    pub points: Option<PathBuf>,
    pub calibration: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationSection {
    pub base_mean: f64,
    pub target_arl: f64,
    pub cap: usize,
    /// In-control days monitored before the outbreak; 0 is a zero-state run.
    pub burn_in: usize,
}

impl Default for SimulationSection {
    fn default() -> Self {
        Self {
            base_mean: 0.01,
            target_arl: 100.0,
            cap: 1000,
            burn_in: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForecastSection {
    pub window: usize,
    pub min_total: f64,
    pub refit_every: usize,
    pub harmonics: usize,
}

impl Default for ForecastSection {
    fn default() -> Self {
        let d = ForecastConfig::default();
        Self {
            window: d.window,
            min_total: d.min_total,
            refit_every: d.refit_every,
            harmonics: d.glm.harmonics,
        }
    }
}

/// Everything a command needs, loaded from one TOML file of dotted keys
/// such as `smoothing.alpha = 0.1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub lattice: LatticeSection,
    pub smoothing: SmoothingSection,
    pub scan: ScanSection,
    pub fss: FssSection,
    pub paths: PathsSection,
    pub simulation: SimulationSection,
    pub forecast: ForecastSection,
    pub seed: u64,
    pub replications: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            lattice: LatticeSection::default(),
            smoothing: SmoothingSection::default(),
            scan: ScanSection::default(),
            fss: FssSection::default(),
            paths: PathsSection::default(),
            simulation: SimulationSection::default(),
            forecast: ForecastSection::default(),
            seed: 1,
            replications: 200,
        }
    }
}

impl RunConfig {
    pub fn lattice(&self) -> Result<LatticeConfig> {
        LatticeConfig::new(self.lattice.rows, self.lattice.cols)
    }

    pub fn smoothing_params(&self) -> Result<SmoothingParams> {
        SmoothingParams::new(self.smoothing.alpha, self.smoothing.lambda)
    }

    pub fn scan_params(&self) -> Result<ScanParams> {
        let p = ScanParams {
            m1: self.scan.m1,
            m2: self.scan.m2,
            window_days: self.scan.window_days,
            threshold: self.scan.threshold,
            mode: self.scan.mode,
        };
        p.validate(self.lattice()?)?;
        Ok(p)
    }

    pub fn fss_params(&self) -> Result<FssParams> {
        let p = FssParams {
            smoothing: self.smoothing_params()?,
            max_generations: self.fss.max_generations,
            prune_rule: PruneRule {
                intercept: self.fss.prune_a,
                slope: self.fss.prune_b,
            },
            selection_mode: self.fss.selection_mode,
            sd_floor: self.fss.sd_floor,
            expansion: self.fss.expansion,
            ..FssParams::default()
        };
        p.validate()?;
        Ok(p)
    }

    pub fn forecast_config(&self) -> ForecastConfig {
        let d = ForecastConfig::default();
        ForecastConfig {
            window: self.forecast.window,
            min_total: self.forecast.min_total,
            refit_every: self.forecast.refit_every,
            glm: crate::forecast::GlmConfig {
                harmonics: self.forecast.harmonics,
                ..d.glm
            },
        }
    }

    /// Parameter ranges of every section.
    pub fn validate(&self) -> Result<()> {
        self.lattice()?;
        self.scan_params()?;
        self.fss_params()?;
        if self.replications == 0 {
            return Err(Error::Parameter("replications must be at least 1".into()));
        }
        if !(self.simulation.target_arl > 1.0) {
            return Err(Error::Parameter("simulation.target_arl must exceed 1".into()));
        }
        if !(self.simulation.base_mean >= 0.0 && self.simulation.base_mean.is_finite()) {
            return Err(Error::Parameter("simulation.base_mean must be non-negative".into()));
        }
        if self.simulation.cap == 0 {
            return Err(Error::Parameter("simulation.cap must be at least 1".into()));
        }
        Ok(())
    }

    /// Paths that are set but do not exist.
    pub fn missing_paths(&self) -> Vec<PathBuf> {
        [&self.paths.counts, &self.paths.means, &self.paths.points, &self.paths.calibration]
            .into_iter()
            .flatten()
            .filter(|p| !p.exists())
            .cloned()
            .collect()
    }
}

pub fn parse_run_config(text: &str) -> Result<RunConfig> {
    let cfg: RunConfig = toml::from_str(text).map_err(|e| {
        let line = e
            .span()
            .map_or(0, |s| text[..s.start.min(text.len())].matches('\n').count() + 1);
        Error::Parse {
            line,
            message: e.message().to_string(),
        }
    })?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn write_run_config(cfg: &RunConfig) -> String {
    toml::to_string(cfg).expect("config serialises")
}

pub const CALIBRATION_FORMAT: &str = "fss-calibration/1";

/// Names and order of the coefficient vectors in the file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationHeader {
    pub format: String,
    pub mean_features: Vec<String>,
    pub logvar_features: Vec<String>,
}

impl Default for CalibrationHeader {
    fn default() -> Self {
        Self {
            format: CALIBRATION_FORMAT.to_string(),
            mean_features: MEAN_FEATURES.iter().map(|s| s.to_string()).collect(),
            logvar_features: LOGVAR_FEATURES.iter().map(|s| s.to_string()).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationFile {
    pub header: CalibrationHeader,
    pub config_hash: String,
    pub seed: u64,
    pub scan: Option<ThresholdSearchResult>,
    pub fss: Option<ThresholdSearchResult>,
    pub dof_model: Option<DofModel>,
    #[serde(default)]
    pub extra: BTreeMap<String, f64>,
}

impl CalibrationFile {
    pub fn new(config_hash: String, seed: u64) -> Self {
        Self {
            header: CalibrationHeader::default(),
            config_hash,
            seed,
            scan: None,
            fss: None,
            dof_model: None,
            extra: BTreeMap::new(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("calibration serialises")
    }
}

pub fn parse_calibration_json(text: &str) -> Result<CalibrationFile> {
    let file: CalibrationFile = serde_json::from_str(text)?;
    let expected = CalibrationHeader::default();
    if file.header.format != expected.format {
        return Err(Error::Parameter(format!(
            "unsupported calibration format {:?}",
            file.header.format
        )));
    }
    if file.header.mean_features != expected.mean_features
        || file.header.logvar_features != expected.logvar_features
    {
        return Err(Error::Parameter("calibration coefficient order differs from this build".into()));
    }
    if let Some(m) = &file.dof_model {
        m.validate()?;
    }
    for r in [&file.scan, &file.fss].into_iter().flatten() {
        if !r.threshold.is_finite() || r.replications == 0 {
            return Err(Error::Parameter("calibration threshold must be finite with replications >= 1".into()));
        }
    }
    Ok(file)
}
