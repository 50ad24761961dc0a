//! Lattice geometry: count and mean grids, rectangular regions, window sums and
//! the square-root departure measures used by both detectors.
//!
//! All public indices are 1-based and inclusive, so a region written
//! `rows 1:4 x cols 1:10` covers the first four lattice rows. Storage is
//! row-major and 0-based internally.

mod design;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use design::{lattice_design_from_points, LatticeDesign, PointEvent};

/// Lattice dimensions: `rows` (A) by `cols` (B).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LatticeConfig {
    pub rows: usize,
    pub cols: usize,
}

impl LatticeConfig {
    pub fn new(rows: usize, cols: usize) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Parameter(format!(
                "lattice must have at least one row and column, got {rows}x{cols}"
            )));
        }
        Ok(Self { rows, cols })
    }

    pub fn cells(&self) -> usize {
        self.rows * self.cols
    }

    pub fn full_region(&self) -> Region {
        Region {
            row_start: 1,
            row_end: self.rows,
            col_start: 1,
            col_end: self.cols,
        }
    }
}

/// A dense A x B grid of non-negative reals for one day.
///
/// Used for raw counts, expected counts and their smoothed versions alike.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    rows: usize,
    cols: usize,
    day: i64,
    values: Vec<f64>,
}

/// Observed (possibly smoothed) counts.
pub type CountGrid = Grid;
/// Expected counts; cells outside the study region carry exactly 0.
pub type MeanGrid = Grid;

impl Grid {
    pub fn new(rows: usize, cols: usize, day: i64, values: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Parameter("grid must be non-empty".into()));
        }
        if values.len() != rows * cols {
            return Err(Error::Parameter(format!(
                "grid {rows}x{cols} needs {} values, got {}",
                rows * cols,
                values.len()
            )));
        }
        if let Some(bad) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::Domain(format!(
                "grid entries must be finite and non-negative, found {bad}"
            )));
        }
        Ok(Self {
            rows,
            cols,
            day,
            values,
        })
    }

    pub fn zeros(config: LatticeConfig, day: i64) -> Self {
        Self::filled(config, day, 0.0)
    }

    pub fn filled(config: LatticeConfig, day: i64, value: f64) -> Self {
        assert!(value.is_finite() && value >= 0.0, "fill value must be non-negative");
        Self {
            rows: config.rows,
            cols: config.cols,
            day,
            values: vec![value; config.cells()],
        }
    }

    /// Builds a grid from nested rows (outer index = lattice row).
    pub fn from_rows(day: i64, rows: &[Vec<f64>]) -> Result<Self> {
        let n_rows = rows.len();
        let n_cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n_cols) {
            return Err(Error::Parameter("ragged rows".into()));
        }
        Self::new(n_rows, n_cols, day, rows.concat())
    }

    pub(crate) fn from_raw(rows: usize, cols: usize, day: i64, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), rows * cols);
        Self {
            rows,
            cols,
            day,
            values,
        }
    }

    pub fn config(&self) -> LatticeConfig {
        LatticeConfig {
            rows: self.rows,
            cols: self.cols,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn day(&self) -> i64 {
        self.day
    }

    pub fn set_day(&mut self, day: i64) {
        self.day = day;
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub(crate) fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// Value at 1-based (row, col). Panics when out of range.
    pub fn get(&self, row: usize, col: usize) -> f64 {
        assert!(
            (1..=self.rows).contains(&row) && (1..=self.cols).contains(&col),
            "cell ({row}, {col}) outside {}x{} grid",
            self.rows,
            self.cols
        );
        self.values[(row - 1) * self.cols + (col - 1)]
    }

    /// Sets the value at 1-based (row, col). Panics when out of range or negative.
    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        assert!(value.is_finite() && value >= 0.0, "grid entries must be non-negative");
        assert!(
            (1..=self.rows).contains(&row) && (1..=self.cols).contains(&col),
            "cell ({row}, {col}) outside {}x{} grid",
            self.rows,
            self.cols
        );
        self.values[(row - 1) * self.cols + (col - 1)] = value;
    }

    #[inline]
    pub(crate) fn at(&self, r0: usize, c0: usize) -> f64 {
        self.values[r0 * self.cols + c0]
    }

    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn ensure_shape(&self, config: LatticeConfig) -> Result<()> {
        if self.rows != config.rows || self.cols != config.cols {
            return Err(Error::shape(
                (config.rows, config.cols),
                (self.rows, self.cols),
            ));
        }
        Ok(())
    }

    pub fn transpose(&self) -> Grid {
        let mut out = vec![0.0; self.values.len()];
        for r in 0..self.rows {
            for c in 0..self.cols {
                out[c * self.rows + r] = self.at(r, c);
            }
        }
        Grid::from_raw(self.cols, self.rows, self.day, out)
    }

    /// Minimum entry inside `region`.
    pub fn region_min(&self, region: &Region) -> f64 {
        let mut min = f64::INFINITY;
        for r in region.row_start - 1..region.row_end {
            let row = &self.values[r * self.cols..(r + 1) * self.cols];
            for v in &row[region.col_start - 1..region.col_end] {
                min = min.min(*v);
            }
        }
        min
    }
}

/// Partition direction. `Row` splits a region into a block of leading rows and
/// a block of trailing rows; `Column` does the same with columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    Row,
    Column,
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Axis::Row => f.write_str("row"),
            Axis::Column => f.write_str("column"),
        }
    }
}

/// Axis-aligned rectangle of lattice cells, 1-based inclusive bounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Region {
    row_start: usize,
    row_end: usize,
    col_start: usize,
    col_end: usize,
}

impl Region {
    pub fn new(row_start: usize, row_end: usize, col_start: usize, col_end: usize) -> Result<Self> {
        if row_start == 0 || col_start == 0 || row_start > row_end || col_start > col_end {
            return Err(Error::InvalidRegion {
                row_start,
                row_end,
                col_start,
                col_end,
            });
        }
        Ok(Self {
            row_start,
            row_end,
            col_start,
            col_end,
        })
    }

    pub fn row_start(&self) -> usize {
        self.row_start
    }
    pub fn row_end(&self) -> usize {
        self.row_end
    }
    pub fn col_start(&self) -> usize {
        self.col_start
    }
    pub fn col_end(&self) -> usize {
        self.col_end
    }

    pub fn n_rows(&self) -> usize {
        self.row_end - self.row_start + 1
    }

    pub fn n_cols(&self) -> usize {
        self.col_end - self.col_start + 1
    }

    pub fn len_along(&self, axis: Axis) -> usize {
        match axis {
            Axis::Row => self.n_rows(),
            Axis::Column => self.n_cols(),
        }
    }

    pub fn cells(&self) -> usize {
        self.n_rows() * self.n_cols()
    }

    pub fn within(&self, config: LatticeConfig) -> bool {
        self.row_end <= config.rows && self.col_end <= config.cols
    }

    pub fn check_within(&self, config: LatticeConfig) -> Result<()> {
        if self.within(config) {
            Ok(())
        } else {
            Err(Error::OutOfBounds {
                region: *self,
                rows: config.rows,
                cols: config.cols,
            })
        }
    }

    pub fn contains(&self, row: usize, col: usize) -> bool {
        (self.row_start..=self.row_end).contains(&row)
            && (self.col_start..=self.col_end).contains(&col)
    }

    pub fn intersection(&self, other: &Region) -> Option<Region> {
        let r0 = self.row_start.max(other.row_start);
        let r1 = self.row_end.min(other.row_end);
        let c0 = self.col_start.max(other.col_start);
        let c1 = self.col_end.min(other.col_end);
        (r0 <= r1 && c0 <= c1).then_some(Region {
            row_start: r0,
            row_end: r1,
            col_start: c0,
            col_end: c1,
        })
    }

    /// Splits after offset `k` along `axis`: the leading block keeps the first
    /// `k + 1` lines, the trailing block the rest. `k` must be below `len - 1`.
    pub fn split(&self, axis: Axis, k: usize) -> (Region, Region) {
        let len = self.len_along(axis);
        assert!(k + 1 < len, "split offset {k} leaves no trailing block (len {len})");
        match axis {
            Axis::Row => {
                let cut = self.row_start + k;
                (
                    Region {
                        row_end: cut,
                        ..*self
                    },
                    Region {
                        row_start: cut + 1,
                        ..*self
                    },
                )
            }
            Axis::Column => {
                let cut = self.col_start + k;
                (
                    Region {
                        col_end: cut,
                        ..*self
                    },
                    Region {
                        col_start: cut + 1,
                        ..*self
                    },
                )
            }
        }
    }
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "rows {}:{} x cols {}:{}",
            self.row_start, self.row_end, self.col_start, self.col_end
        )
    }
}

/// Sum of grid entries over `region`.
pub fn region_sum(grid: &Grid, region: &Region) -> Result<f64> {
    region.check_within(grid.config())?;
    let mut total = 0.0;
    for r in region.row_start - 1..region.row_end {
        let row = &grid.values[r * grid.cols..(r + 1) * grid.cols];
        total += row[region.col_start - 1..region.col_end].iter().sum::<f64>();
    }
    Ok(total)
}

/// Summed-area table giving O(1) rectangle sums.
#[derive(Debug, Clone)]
pub struct SummedArea {
    cols: usize,
    config: LatticeConfig,
    // (rows + 1) x (cols + 1), first row and column zero
    table: Vec<f64>,
}

impl SummedArea {
    pub fn new(grid: &Grid) -> Self {
        let mut sa = Self {
            cols: grid.cols + 1,
            config: grid.config(),
            table: vec![0.0; (grid.rows + 1) * (grid.cols + 1)],
        };
        sa.rebuild(grid);
        sa
    }

    pub fn rebuild(&mut self, grid: &Grid) {
        debug_assert_eq!(grid.config(), self.config);
        let w = self.cols;
        for r in 0..grid.rows {
            let mut running = 0.0;
            for c in 0..grid.cols {
                running += grid.at(r, c);
                self.table[(r + 1) * w + c + 1] = self.table[r * w + c + 1] + running;
            }
        }
    }

    pub fn config(&self) -> LatticeConfig {
        self.config
    }

    /// Rectangle sum over 1-based inclusive bounds; caller guarantees bounds.
    #[inline]
    pub fn sum_bounds(&self, r0: usize, r1: usize, c0: usize, c1: usize) -> f64 {
        let w = self.cols;
        let s = self.table[r1 * w + c1] - self.table[(r0 - 1) * w + c1]
            - self.table[r1 * w + c0 - 1]
            + self.table[(r0 - 1) * w + c0 - 1];
        // clamp cancellation noise on sums of non-negative entries
        s.max(0.0)
    }

    #[inline]
    pub fn sum(&self, region: &Region) -> f64 {
        self.sum_bounds(
            region.row_start,
            region.row_end,
            region.col_start,
            region.col_end,
        )
    }
}

/// Consecutive daily count grids sharing one lattice, with optional aligned
/// expected-count grids.
#[derive(Debug, Clone, PartialEq)]
pub struct DailyCountStream {
    config: LatticeConfig,
    start_day: i64,
    counts: Vec<CountGrid>,
    means: Option<Vec<MeanGrid>>,
}

impl DailyCountStream {
    pub fn new(config: LatticeConfig, start_day: i64) -> Self {
        Self {
            config,
            start_day,
            counts: Vec::new(),
            means: None,
        }
    }

    pub fn with_means(config: LatticeConfig, start_day: i64) -> Self {
        Self {
            means: Some(Vec::new()),
            ..Self::new(config, start_day)
        }
    }

    /// Builds a stream from grids whose days must run consecutively.
    pub fn from_grids(counts: Vec<CountGrid>, means: Option<Vec<MeanGrid>>) -> Result<Self> {
        let first = counts
            .first()
            .ok_or_else(|| Error::Parameter("stream needs at least one day".into()))?;
        let mut stream = if means.is_some() {
            Self::with_means(first.config(), first.day())
        } else {
            Self::new(first.config(), first.day())
        };
        match means {
            Some(means) => {
                if means.len() != counts.len() {
                    return Err(Error::Parameter(format!(
                        "{} count grids but {} mean grids",
                        counts.len(),
                        means.len()
                    )));
                }
                for (c, m) in counts.into_iter().zip(means) {
                    stream.push(c, Some(m))?;
                }
            }
            None => {
                for c in counts {
                    stream.push(c, None)?;
                }
            }
        }
        Ok(stream)
    }

    pub fn push(&mut self, counts: CountGrid, means: Option<MeanGrid>) -> Result<()> {
        counts.ensure_shape(self.config)?;
        let expected_day = self.start_day + self.counts.len() as i64;
        if counts.day() != expected_day {
            return Err(Error::Parameter(format!(
                "stream expects day {expected_day}, got {}",
                counts.day()
            )));
        }
        match (&mut self.means, means) {
            (Some(store), Some(m)) => {
                m.ensure_shape(self.config)?;
                if m.day() != expected_day {
                    return Err(Error::Parameter(format!(
                        "mean grid for day {} pushed at day {expected_day}",
                        m.day()
                    )));
                }
                store.push(m);
            }
            (None, None) => {}
            (Some(_), None) => {
                return Err(Error::Parameter("stream carries means; mean grid required".into()))
            }
            (None, Some(_)) => {
                return Err(Error::Parameter("stream has no mean grids".into()));
            }
        }
        self.counts.push(counts);
        Ok(())
    }

    pub fn config(&self) -> LatticeConfig {
        self.config
    }

    pub fn start_day(&self) -> i64 {
        self.start_day
    }

    /// Last day in the stream, or `start_day - 1` when empty.
    pub fn end_day(&self) -> i64 {
        self.start_day + self.counts.len() as i64 - 1
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn counts(&self) -> &[CountGrid] {
        &self.counts
    }

    pub fn counts_mut(&mut self) -> &mut [CountGrid] {
        &mut self.counts
    }

    pub fn means(&self) -> Option<&[MeanGrid]> {
        self.means.as_deref()
    }

    pub fn counts_at(&self, day: i64) -> Option<&CountGrid> {
        self.index_of(day).map(|i| &self.counts[i])
    }

    pub fn means_at(&self, day: i64) -> Option<&MeanGrid> {
        let i = self.index_of(day)?;
        self.means.as_ref().map(|m| &m[i])
    }

    fn index_of(&self, day: i64) -> Option<usize> {
        let offset = day.checked_sub(self.start_day)?;
        (offset >= 0 && (offset as usize) < self.counts.len()).then_some(offset as usize)
    }

    /// Per-cell totals over all days.
    pub fn cell_totals(&self) -> Grid {
        let mut totals = Grid::zeros(self.config, self.end_day());
        for g in &self.counts {
            for (t, v) in totals.values.iter_mut().zip(&g.values) {
                *t += v;
            }
        }
        totals
    }
}

/// Window bounds check shared by count and mean window sums.
fn check_window(
    config: LatticeConfig,
    i: usize,
    j: usize,
    m1: usize,
    m2: usize,
    window_days: usize,
) -> Result<Region> {
    if m1 == 0 || m2 == 0 || window_days == 0 {
        return Err(Error::Parameter("window dimensions must be positive".into()));
    }
    if m1 > config.rows || m2 > config.cols || i == 0 || j == 0 {
        return Err(Error::Parameter(format!(
            "window {m1}x{m2} at ({i}, {j}) does not fit a {}x{} lattice",
            config.rows, config.cols
        )));
    }
    let region = Region::new(i, i + m1 - 1, j, j + m2 - 1)?;
    region.check_within(config)?;
    Ok(region)
}

fn window_over(
    grids: &[Grid],
    stream: &DailyCountStream,
    region: &Region,
    t: i64,
    window_days: usize,
) -> Result<f64> {
    let first = t - window_days as i64 + 1;
    let available = (t - stream.start_day + 1).clamp(0, stream.len() as i64) as usize;
    if first < stream.start_day || t > stream.end_day() {
        return Err(Error::InsufficientHistory {
            day: t,
            needed: window_days,
            available,
        });
    }
    let lo = (first - stream.start_day) as usize;
    let hi = (t - stream.start_day) as usize;
    grids[lo..=hi].iter().map(|g| region_sum(g, region)).sum()
}

/// Total count in the `m1 x m2 x window_days` prism whose top-left cell is
/// (i, j) and whose last day is `t`: rows i..i+m1-1, columns j..j+m2-1,
/// days t-window_days+1..t.
pub fn window_sum(
    stream: &DailyCountStream,
    i: usize,
    j: usize,
    t: i64,
    m1: usize,
    m2: usize,
    window_days: usize,
) -> Result<f64> {
    let region = check_window(stream.config, i, j, m1, m2, window_days)?;
    window_over(&stream.counts, stream, &region, t, window_days)
}

/// Expected-count counterpart of [`window_sum`] over the stream's mean grids.
pub fn window_mean_sum(
    stream: &DailyCountStream,
    i: usize,
    j: usize,
    t: i64,
    m1: usize,
    m2: usize,
    window_days: usize,
) -> Result<f64> {
    let region = check_window(stream.config, i, j, m1, m2, window_days)?;
    let means = stream
        .means
        .as_ref()
        .ok_or_else(|| Error::Parameter("stream has no mean grids".into()))?;
    window_over(means, stream, &region, t, window_days)
}

/// Root signal-to-noise `sqrt(y) - sqrt(m)`.
pub fn root_snr(y: f64, m: f64) -> Result<f64> {
    if !(y >= 0.0 && m >= 0.0) {
        return Err(Error::Domain(format!(
            "root_snr needs non-negative inputs, got ({y}, {m})"
        )));
    }
    Ok(y.sqrt() - m.sqrt())
}

/// Parent departure `2 (sqrt(c_p) - sqrt(mu_p))`, approximately N(0, 1) for
/// raw Poisson counts.
pub fn parent_z(c_p: f64, mu_p: f64) -> Result<f64> {
    if !(c_p >= 0.0 && mu_p >= 0.0) {
        return Err(Error::Domain(format!(
            "parent_z needs non-negative inputs, got ({c_p}, {mu_p})"
        )));
    }
    Ok(2.0 * (c_p.sqrt() - mu_p.sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(r: usize, c: usize) -> LatticeConfig {
        LatticeConfig::new(r, c).unwrap()
    }

    #[test]
    fn region_sum_worked_example_block() {
        let g = Grid::filled(cfg(10, 10), 0, 3.0);
        let r = Region::new(1, 4, 1, 10).unwrap();
        assert_eq!(region_sum(&g, &r).unwrap(), 120.0);
    }

    #[test]
    fn region_sum_single_cell() {
        let mut g = Grid::zeros(cfg(3, 3), 0);
        g.set(2, 3, 7.5);
        assert_eq!(region_sum(&g, &Region::new(2, 2, 3, 3).unwrap()).unwrap(), 7.5);
    }

    #[test]
    fn region_sum_rejects_out_of_bounds() {
        let g = Grid::zeros(cfg(3, 3), 0);
        let r = Region::new(2, 4, 1, 1).unwrap();
        assert!(matches!(region_sum(&g, &r), Err(Error::OutOfBounds { .. })));
    }

    #[test]
    fn region_rejects_inverted_bounds() {
        assert!(Region::new(3, 2, 1, 1).is_err());
        assert!(Region::new(0, 2, 1, 1).is_err());
    }

    #[test]
    fn split_partitions_region() {
        let r = Region::new(2, 9, 3, 5).unwrap();
        let (a, b) = r.split(Axis::Row, 2);
        assert_eq!(a, Region::new(2, 4, 3, 5).unwrap());
        assert_eq!(b, Region::new(5, 9, 3, 5).unwrap());
        let (a, b) = r.split(Axis::Column, 0);
        assert_eq!(a, Region::new(2, 9, 3, 3).unwrap());
        assert_eq!(b, Region::new(2, 9, 4, 5).unwrap());
    }

    #[test]
    fn root_snr_values() {
        assert_eq!(root_snr(9.0, 4.0).unwrap(), 1.0);
        assert_eq!(root_snr(2.5, 2.5).unwrap(), 0.0);
        assert!((root_snr(127.0, 72.0).unwrap() - 2.784).abs() < 5e-4);
        assert!(root_snr(-1.0, 1.0).is_err());
        assert!(root_snr(1.0, f64::NAN).is_err());
    }

    #[test]
    fn parent_z_values() {
        assert_eq!(parent_z(3.0, 3.0).unwrap(), 0.0);
        assert_eq!(parent_z(4.0, 1.0).unwrap(), 2.0);
        // 2 (sqrt 174 - sqrt 120) = 4.47291
        assert!((parent_z(174.0, 120.0).unwrap() - 4.473).abs() < 5e-4);
        assert!(parent_z(1.0, -0.5).is_err());
    }

    #[test]
    fn window_sum_constant_field() {
        let c = cfg(5, 6);
        let grids: Vec<Grid> = (0..4).map(|d| Grid::filled(c, d, 0.5)).collect();
        let s = DailyCountStream::from_grids(grids, None).unwrap();
        let v = window_sum(&s, 2, 3, 3, 3, 2, 3).unwrap();
        assert!((v - 3.0 * 2.0 * 3.0 * 0.5).abs() < 1e-12);
    }

    #[test]
    fn window_sum_indicator() {
        let c = cfg(4, 4);
        let mut grids: Vec<Grid> = (0..3).map(|d| Grid::zeros(c, d)).collect();
        grids[1].set(2, 2, 1.0);
        let s = DailyCountStream::from_grids(grids, None).unwrap();
        assert_eq!(window_sum(&s, 1, 1, 2, 2, 2, 2).unwrap(), 1.0);
        assert_eq!(window_sum(&s, 3, 3, 2, 2, 2, 2).unwrap(), 0.0);
    }

    #[test]
    fn window_sum_needs_history() {
        let c = cfg(2, 2);
        let s = DailyCountStream::from_grids(vec![Grid::zeros(c, 5), Grid::zeros(c, 6)], None)
            .unwrap();
        assert!(matches!(
            window_sum(&s, 1, 1, 6, 1, 1, 3),
            Err(Error::InsufficientHistory { needed: 3, available: 2, .. })
        ));
    }

    #[test]
    fn stream_rejects_day_gap() {
        let c = cfg(2, 2);
        let err = DailyCountStream::from_grids(vec![Grid::zeros(c, 1), Grid::zeros(c, 3)], None);
        assert!(err.is_err());
    }

    #[test]
    fn summed_area_matches_direct() {
        let c = cfg(4, 5);
        let vals: Vec<f64> = (0..20).map(|v| (v * 7 % 11) as f64).collect();
        let g = Grid::new(4, 5, 0, vals).unwrap();
        let sa = SummedArea::new(&g);
        for r0 in 1..=4 {
            for r1 in r0..=4 {
                for c0 in 1..=5 {
                    for c1 in c0..=5 {
                        let reg = Region::new(r0, r1, c0, c1).unwrap();
                        assert!((sa.sum(&reg) - region_sum(&g, &reg).unwrap()).abs() < 1e-9);
                    }
                }
            }
        }
        assert_eq!(c.cells(), 20);
    }
}
