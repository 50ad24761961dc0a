use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid, LatticeConfig};

/// One geocoded case: planar coordinates in metres and the report day.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointEvent {
    pub x: f64,
    pub y: f64,
    pub day: i64,
}

/// Equal-marginal lattice built from point events.
///
/// Row 1 is the northern-most band (largest y), column 1 the western-most
/// (smallest x). `x_breaks` has `cols + 1` increasing entries and `y_breaks`
/// has `rows + 1` decreasing entries; the outer entries are the bounding box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatticeDesign {
    pub rows: usize,
    pub cols: usize,
    pub x_breaks: Vec<f64>,
    pub y_breaks: Vec<f64>,
    /// 1-based (row, col) of every input point, in input order.
    pub assignments: Vec<(usize, usize)>,
    pub tie_rule: String,
}

const TIE_RULE: &str = "points sharing a coordinate are ordered by input position";

impl LatticeDesign {
    pub fn config(&self) -> LatticeConfig {
        LatticeConfig {
            rows: self.rows,
            cols: self.cols,
        }
    }

    /// Cell of an arbitrary location by band membership; points outside the
    /// bounding box snap to the nearest edge band. Locations lying exactly on
    /// a breakpoint fall in the band to the west / south.
    pub fn locate(&self, x: f64, y: f64) -> (usize, usize) {
        let inner_x = &self.x_breaks[1..self.cols];
        let col = inner_x.partition_point(|b| *b < x) + 1;
        let inner_y = &self.y_breaks[1..self.rows];
        let row = inner_y.partition_point(|b| *b > y) + 1;
        (row, col)
    }

    /// Daily count grids for `first_day..=last_day` built from the design's
    /// point assignments.
    pub fn count_grids(&self, points: &[PointEvent], first_day: i64, last_day: i64) -> Vec<Grid> {
        let config = self.config();
        let mut grids: Vec<Grid> = (first_day..=last_day)
            .map(|d| Grid::zeros(config, d))
            .collect();
        for (p, &(row, col)) in points.iter().zip(&self.assignments) {
            if p.day < first_day || p.day > last_day {
                continue;
            }
            let g = &mut grids[(p.day - first_day) as usize];
            let cur = g.get(row, col);
            g.set(row, col, cur + 1.0);
        }
        grids
    }

    /// Point counts per row band and per column band.
    pub fn marginal_counts(&self) -> (Vec<usize>, Vec<usize>) {
        let mut rows = vec![0; self.rows];
        let mut cols = vec![0; self.cols];
        for &(r, c) in &self.assignments {
            rows[r - 1] += 1;
            cols[c - 1] += 1;
        }
        (rows, cols)
    }
}

/// Rank-based band assignment: sorted position `p` of `n` goes to band
/// `p * bands / n`, so band sizes differ by at most one. Returns per-point
/// band (0-based) and the interior breakpoints.
fn equal_bands(coords: &[f64], bands: usize, descending: bool) -> (Vec<usize>, Vec<f64>) {
    let n = coords.len();
    let mut order: Vec<usize> = (0..n).collect();
    // stable sort keeps input order among ties
    if descending {
        order.sort_by(|&a, &b| coords[b].total_cmp(&coords[a]));
    } else {
        order.sort_by(|&a, &b| coords[a].total_cmp(&coords[b]));
    }
    let mut band_of = vec![0; n];
    let mut breaks = Vec::with_capacity(bands.saturating_sub(1));
    let mut prev_band = 0;
    for (pos, &idx) in order.iter().enumerate() {
        let band = pos * bands / n;
        if band != prev_band {
            let last = coords[order[pos - 1]];
            breaks.push(0.5 * (last + coords[idx]));
            prev_band = band;
        }
        band_of[idx] = band;
    }
    (band_of, breaks)
}

/// Lattice whose row bands and column bands each hold an equal share of the
/// points (to within one).
pub fn lattice_design_from_points(
    points: &[PointEvent],
    rows: usize,
    cols: usize,
) -> Result<LatticeDesign> {
    LatticeConfig::new(rows, cols)?;
    if points.len() < rows * cols {
        return Err(Error::DegenerateDesign {
            points: points.len(),
            bands: rows * cols,
        });
    }
    if let Some(p) = points.iter().find(|p| !(p.x.is_finite() && p.y.is_finite())) {
        return Err(Error::Domain(format!("non-finite point ({}, {})", p.x, p.y)));
    }
    let xs: Vec<f64> = points.iter().map(|p| p.x).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.y).collect();
    let (min_x, max_x) = xs
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(*v), hi.max(*v)));
    let (min_y, max_y) = ys
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(*v), hi.max(*v)));

    let (col_of, x_inner) = equal_bands(&xs, cols, false);
    let (row_of, y_inner) = equal_bands(&ys, rows, true);

    let mut x_breaks = Vec::with_capacity(cols + 1);
    x_breaks.push(min_x);
    x_breaks.extend(x_inner);
    x_breaks.push(max_x);
    let mut y_breaks = Vec::with_capacity(rows + 1);
    y_breaks.push(max_y);
    y_breaks.extend(y_inner);
    y_breaks.push(min_y);

    let assignments = row_of
        .iter()
        .zip(&col_of)
        .map(|(r, c)| (r + 1, c + 1))
        .collect();

    Ok(LatticeDesign {
        rows,
        cols,
        x_breaks,
        y_breaks,
        assignments,
        tie_rule: TIE_RULE.to_string(),
    })
}
