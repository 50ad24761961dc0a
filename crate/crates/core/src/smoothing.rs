//! Temporal EWMA and separable double-exponential spatial smoothing.
//!
//! Counts and expected counts go through the identical pipeline, so an
//! in-control stream whose counts equal their means stays exactly on its
//! expectation after smoothing.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{CountGrid, Grid, LatticeConfig, MeanGrid};

/// EWMA weight `alpha` and spatial kernel decay `lambda`, both in (0, 1).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoothingParams {
    pub alpha: f64,
    pub lambda: f64,
}

impl SmoothingParams {
    pub fn new(alpha: f64, lambda: f64) -> Result<Self> {
        let p = Self { alpha, lambda };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Parameter(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        if !(self.lambda > 0.0 && self.lambda < 1.0) {
            return Err(Error::Parameter(format!(
                "lambda must lie in (0, 1), got {}",
                self.lambda
            )));
        }
        Ok(())
    }
}

impl Default for SmoothingParams {
    fn default() -> Self {
        Self {
            alpha: 0.1,
            lambda: 0.7,
        }
    }
}

/// EWMA state for counts and means.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothState {
    pub ewma_counts: CountGrid,
    pub ewma_means: MeanGrid,
    pub day: i64,
}

impl SmoothState {
    /// State at day `t - 1` seeded from the day-`t` means, for counts and
    /// means alike.
    pub fn new(first_means: &MeanGrid) -> Self {
        let day = first_means.day() - 1;
        let mut seed = first_means.clone();
        seed.set_day(day);
        Self {
            ewma_counts: seed.clone(),
            ewma_means: seed,
            day,
        }
    }

    pub fn config(&self) -> LatticeConfig {
        self.ewma_counts.config()
    }

    /// In-place version of [`ewma_update`].
    pub fn update(&mut self, counts: &CountGrid, means: &MeanGrid, alpha: f64) -> Result<()> {
        let config = self.config();
        counts.ensure_shape(config)?;
        means.ensure_shape(config)?;
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::Parameter(format!("alpha must lie in (0, 1), got {alpha}")));
        }
        let keep = 1.0 - alpha;
        for (s, y) in self.ewma_counts.values_mut().iter_mut().zip(counts.values()) {
            *s = alpha * y + keep * *s;
        }
        for (s, m) in self.ewma_means.values_mut().iter_mut().zip(means.values()) {
            *s = alpha * m + keep * *s;
        }
        self.day += 1;
        self.ewma_counts.set_day(self.day);
        self.ewma_means.set_day(self.day);
        Ok(())
    }
}

/// One EWMA step on both counts and means; the day advances by one.
pub fn ewma_update(
    state: &SmoothState,
    counts: &CountGrid,
    means: &MeanGrid,
    alpha: f64,
) -> Result<SmoothState> {
    let mut next = state.clone();
    next.update(counts, means, alpha)?;
    Ok(next)
}

/// Row-normalised kernel `D^-1 S` with `S_ij = lambda (1 - lambda)^|i - j|`.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelOperator {
    n: usize,
    weights: Vec<f64>,
}

impl KernelOperator {
    pub fn size(&self) -> usize {
        self.n
    }

    /// Weight in 0-based (row, col).
    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.weights[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.weights[i * self.n..(i + 1) * self.n]
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.n);
        (0..self.n)
            .map(|i| self.row(i).iter().zip(v).map(|(w, x)| w * x).sum())
            .collect()
    }
}

pub fn build_kernel(n: usize, lambda: f64) -> Result<KernelOperator> {
    if n == 0 {
        return Err(Error::Parameter("kernel size must be positive".into()));
    }
    if !(lambda > 0.0 && lambda < 1.0) {
        return Err(Error::Parameter(format!("lambda must lie in (0, 1), got {lambda}")));
    }
    let decay: Vec<f64> = (0..n).map(|d| lambda * (1.0 - lambda).powi(d as i32)).collect();
    let mut weights = vec![0.0; n * n];
    for i in 0..n {
        let row = &mut weights[i * n..(i + 1) * n];
        for (j, w) in row.iter_mut().enumerate() {
            *w = decay[i.abs_diff(j)];
        }
        let total: f64 = row.iter().sum();
        row.iter_mut().for_each(|w| *w /= total);
    }
    Ok(KernelOperator { n, weights })
}

/// Two-sided smoother `D_A^-1 S_A G S_B D_B^-1`.
///
/// Because `S_B` is symmetric, the right factor `S_B D_B^-1` is the transpose
/// of the row-normalised column kernel, so each output cell is
/// `sum_{k,l} K_A[i,k] K_B[j,l] G[k,l]`: a convex combination of the input.
#[derive(Debug, Clone)]
pub struct SpatialSmoother {
    rows: KernelOperator,
    cols: KernelOperator,
}

impl SpatialSmoother {
    pub fn new(config: LatticeConfig, lambda: f64) -> Result<Self> {
        Ok(Self {
            rows: build_kernel(config.rows, lambda)?,
            cols: build_kernel(config.cols, lambda)?,
        })
    }

    pub fn config(&self) -> LatticeConfig {
        LatticeConfig {
            rows: self.rows.n,
            cols: self.cols.n,
        }
    }

    pub fn row_kernel(&self) -> &KernelOperator {
        &self.rows
    }

    pub fn col_kernel(&self) -> &KernelOperator {
        &self.cols
    }

    pub fn smooth(&self, grid: &Grid) -> Result<Grid> {
        grid.ensure_shape(self.config())?;
        let mut out = Grid::zeros(self.config(), grid.day());
        self.smooth_into(grid, &mut out, &mut Vec::new());
        Ok(out)
    }

    /// Allocation-free variant; `scratch` is resized as needed.
    pub fn smooth_into(&self, grid: &Grid, out: &mut Grid, scratch: &mut Vec<f64>) {
        let (a, b) = (self.rows.n, self.cols.n);
        scratch.clear();
        scratch.resize(a * b, 0.0);
        // right factor: tmp[r][j] = sum_l G[r][l] K_B[j][l]
        let g = grid.values();
        for r in 0..a {
            let g_row = &g[r * b..(r + 1) * b];
            let t_row = &mut scratch[r * b..(r + 1) * b];
            for (j, t) in t_row.iter_mut().enumerate() {
                *t = self
                    .cols
                    .row(j)
                    .iter()
                    .zip(g_row)
                    .map(|(w, x)| w * x)
                    .sum();
            }
        }
        // left factor: out[i][j] = sum_r K_A[i][r] tmp[r][j]
        let o = out.values_mut();
        o.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..a {
            let o_row = &mut o[i * b..(i + 1) * b];
            for (r, w) in self.rows.row(i).iter().enumerate() {
                let t_row = &scratch[r * b..(r + 1) * b];
                for (ov, tv) in o_row.iter_mut().zip(t_row) {
                    *ov += w * tv;
                }
            }
        }
        out.set_day(grid.day());
    }

    /// Adds the smoothed image of `amount` placed at 0-based cell (r, c)
    /// into `target`, i.e. `amount * K_A[:, r] K_B[:, c]^T`.
    pub fn add_point_mass(&self, target: &mut Grid, r: usize, c: usize, amount: f64) {
        let b = self.cols.n;
        let col_weights: Vec<f64> = (0..b).map(|j| self.cols.weight(j, c) * amount).collect();
        let t = target.values_mut();
        for i in 0..self.rows.n {
            let w = self.rows.weight(i, r);
            let row = &mut t[i * b..(i + 1) * b];
            for (v, cw) in row.iter_mut().zip(&col_weights) {
                *v += w * cw;
            }
        }
    }
}

/// One-shot two-sided smoothing of `grid` with kernels built from `params`.
pub fn spatial_smooth(grid: &Grid, params: &SmoothingParams, config: LatticeConfig) -> Result<Grid> {
    grid.ensure_shape(config)?;
    SpatialSmoother::new(config, params.lambda)?.smooth(grid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cfg(r: usize, c: usize) -> LatticeConfig {
        LatticeConfig::new(r, c).unwrap()
    }

    #[test]
    fn ewma_single_step() {
        let c = cfg(1, 1);
        let mut state = SmoothState::new(&Grid::filled(c, 1, 3.0));
        state.update(&Grid::filled(c, 1, 13.0), &Grid::filled(c, 1, 3.0), 0.1).unwrap();
        assert!((state.ewma_counts.get(1, 1) - 4.0).abs() < 1e-12);
        assert!((state.ewma_means.get(1, 1) - 3.0).abs() < 1e-12);
        assert_eq!(state.day, 1);
    }

    #[test]
    fn ewma_fixed_point() {
        let c = cfg(2, 3);
        let g = Grid::filled(c, 1, 2.5);
        let mut s = SmoothState::new(&g);
        for _ in 0..50 {
            s.update(&g, &g, 0.3).unwrap();
        }
        assert!(s.ewma_counts.values().iter().all(|v| (v - 2.5).abs() < 1e-12));
    }

    #[test]
    fn ewma_near_one_tracks_input() {
        let c = cfg(1, 1);
        let mut s = SmoothState::new(&Grid::filled(c, 1, 10.0));
        let prev = s.ewma_counts.get(1, 1);
        s.update(&Grid::filled(c, 1, 2.0), &Grid::filled(c, 1, 1.0), 0.999).unwrap();
        let now = s.ewma_counts.get(1, 1);
        assert!((now - 2.0).abs() <= 0.001 * (prev - 2.0).abs() + 1e-12);
    }

    #[test]
    fn ewma_shape_mismatch() {
        let mut s = SmoothState::new(&Grid::zeros(cfg(2, 2), 1));
        let bad = Grid::zeros(cfg(2, 3), 1);
        assert!(matches!(
            s.update(&bad, &Grid::zeros(cfg(2, 2), 1), 0.1),
            Err(Error::Shape { .. })
        ));
    }

    #[test]
    fn kernel_size_one_is_identity() {
        let k = build_kernel(1, 0.4).unwrap();
        assert_eq!(k.weight(0, 0), 1.0);
    }

    #[test]
    fn kernel_three_by_hand() {
        let k = build_kernel(3, 0.7).unwrap();
        let total = 0.7 + 0.21 + 0.063;
        assert!((total - 0.973_f64).abs() < 1e-15);
        assert!((k.weight(0, 0) - 0.7 / 0.973).abs() < 1e-14);
        assert!((k.weight(0, 1) - 0.21 / 0.973).abs() < 1e-14);
        assert!((k.weight(0, 2) - 0.063 / 0.973).abs() < 1e-14);
        // middle row: (0.21, 0.7, 0.21) / 1.12
        assert!((k.weight(1, 1) - 0.7 / 1.12).abs() < 1e-14);
    }

    #[test]
    fn kernel_rejects_bad_lambda() {
        assert!(build_kernel(4, 0.0).is_err());
        assert!(build_kernel(4, 1.0).is_err());
        assert!(build_kernel(0, 0.5).is_err());
    }

    #[test]
    fn two_by_two_matches_explicit_product() {
        let g = Grid::from_rows(0, &[vec![1.0, 0.0], vec![0.0, 0.0]]).unwrap();
        let out = spatial_smooth(&g, &SmoothingParams::default(), cfg(2, 2)).unwrap();
        // n = 2 kernel rows normalised from (0.7, 0.21)
        let p = 0.7 / 0.91;
        let q = 0.21 / 0.91;
        let k = [[p, q], [q, p]];
        // K G K^T with G = e1 e1^T is the outer product of K's first column
        for i in 0..2 {
            for j in 0..2 {
                let want = k[i][0] * k[j][0];
                assert!((out.get(i + 1, j + 1) - want).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn one_by_one_unchanged() {
        let g = Grid::from_rows(0, &[vec![4.2]]).unwrap();
        let out = spatial_smooth(&g, &SmoothingParams::default(), cfg(1, 1)).unwrap();
        assert_eq!(out.get(1, 1), 4.2);
    }

    #[test]
    fn point_mass_matches_full_smooth() {
        let c = cfg(5, 7);
        let sm = SpatialSmoother::new(c, 0.6).unwrap();
        let mut g = Grid::zeros(c, 0);
        g.set(3, 2, 2.0);
        let full = sm.smooth(&g).unwrap();
        let mut inc = Grid::zeros(c, 0);
        sm.add_point_mass(&mut inc, 2, 1, 2.0);
        for (a, b) in full.values().iter().zip(inc.values()) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    proptest! {
        #[test]
        fn kernel_rows_stochastic(n in 1usize..60, lambda in 0.01f64..0.99) {
            let k = build_kernel(n, lambda).unwrap();
            for i in 0..n {
                let s: f64 = k.row(i).iter().sum();
                prop_assert!((s - 1.0).abs() < 1e-12);
                prop_assert!(k.row(i).iter().all(|w| *w > 0.0));
            }
        }

        #[test]
        fn smoothing_is_convex(
            rows in 1usize..8, cols in 1usize..8,
            seed in prop::collection::vec(0.0f64..20.0, 64),
            lambda in 0.05f64..0.95,
        ) {
            let vals: Vec<f64> = seed.iter().cycle().take(rows * cols).cloned().collect();
            let g = Grid::new(rows, cols, 0, vals.clone()).unwrap();
            let out = spatial_smooth(&g, &SmoothingParams { alpha: 0.5, lambda }, cfg(rows, cols)).unwrap();
            let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            for v in out.values() {
                prop_assert!(*v >= lo - 1e-12 && *v <= hi + 1e-12);
            }
        }

        #[test]
        fn smoothing_commutes_with_transpose(
            n in 1usize..8,
            seed in prop::collection::vec(0.0f64..5.0, 64),
        ) {
            let g = Grid::new(n, n, 0, seed[..n * n].to_vec()).unwrap();
            let p = SmoothingParams::default();
            let a = spatial_smooth(&g.transpose(), &p, cfg(n, n)).unwrap();
            let b = spatial_smooth(&g, &p, cfg(n, n)).unwrap().transpose();
            for (x, y) in a.values().iter().zip(b.values()) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }
    }
}
