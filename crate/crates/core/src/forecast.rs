//! Expected-count forecasting for observed case streams: per-group Poisson
//! log-linear models with day-of-week and harmonic terms, fitted on a moving
//! training window, with sparse cells pooled into neighbouring groups.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{DailyCountStream, Grid, LatticeConfig};
use crate::linalg::weighted_least_squares;
use crate::scan::ln_factorial;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GlmConfig {
    pub day_of_week: bool,
    /// Number of sin/cos pairs.
    pub harmonics: usize,
    pub period: f64,
    pub max_iterations: usize,
    pub tolerance: f64,
}

impl Default for GlmConfig {
    fn default() -> Self {
        Self {
            day_of_week: true,
            harmonics: 2,
            period: 365.25,
            max_iterations: 50,
            tolerance: 1e-8,
        }
    }
}

impl GlmConfig {
    pub fn intercept_only() -> Self {
        Self {
            day_of_week: false,
            harmonics: 0,
            ..Self::default()
        }
    }

    pub fn n_features(&self) -> usize {
        1 + if self.day_of_week { 6 } else { 0 } + 2 * self.harmonics
    }

    pub fn feature_names(&self) -> Vec<String> {
        let mut names = vec!["intercept".to_string()];
        if self.day_of_week {
            names.extend((1..7).map(|d| format!("dow{d}")));
        }
        for j in 1..=self.harmonics {
            names.push(format!("sin{j}"));
            names.push(format!("cos{j}"));
        }
        names
    }

    /// Covariates of integer day `t`. Day-of-week level `t mod 7 = 0` is the
    /// baseline.
    pub fn features(&self, day: i64, out: &mut Vec<f64>) {
        out.clear();
        out.push(1.0);
        if self.day_of_week {
            let dow = day.rem_euclid(7);
            out.extend((1..7).map(|d| if dow == d { 1.0 } else { 0.0 }));
        }
        for j in 1..=self.harmonics {
            let w = 2.0 * std::f64::consts::PI * j as f64 * day as f64 / self.period;
            out.push(w.sin());
            out.push(w.cos());
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlmModel {
    pub config: GlmConfig,
    pub names: Vec<String>,
    pub coefficients: Vec<f64>,
    pub std_errors: Vec<f64>,
    /// All-zero training series: the model predicts 0.
    pub degenerate: bool,
    pub iterations: usize,
    pub log_likelihood: f64,
}

impl GlmModel {
    pub fn predict(&self, day: i64) -> f64 {
        if self.degenerate {
            return 0.0;
        }
        let mut f = Vec::with_capacity(self.coefficients.len());
        self.config.features(day, &mut f);
        f.iter().zip(&self.coefficients).map(|(a, b)| a * b).sum::<f64>().exp()
    }
}

fn poisson_loglik(y: &[f64], mu: &[f64]) -> f64 {
    y.iter()
        .zip(mu)
        .map(|(&y, &m)| {
            let base = if y > 0.0 { y * m.ln() } else { 0.0 };
            base - m - ln_factorial(y.round() as u64)
        })
        .sum()
}

/// Poisson maximum likelihood by iteratively reweighted least squares under
/// the log link.
pub fn fit_glm(days: &[i64], counts: &[f64], config: &GlmConfig) -> Result<GlmModel> {
    if days.len() != counts.len() {
        return Err(Error::Parameter("days and counts differ in length".into()));
    }
    if counts.iter().any(|c| !(c.is_finite() && *c >= 0.0)) {
        return Err(Error::Domain("counts must be finite and non-negative".into()));
    }
    let p = config.n_features();
    let names = config.feature_names();
    if counts.iter().all(|c| *c == 0.0) {
        return Ok(GlmModel {
            config: *config,
            names,
            coefficients: vec![0.0; p],
            std_errors: vec![0.0; p],
            degenerate: true,
            iterations: 0,
            log_likelihood: 0.0,
        });
    }
    let n = days.len();
    let mut design = Vec::with_capacity(n * p);
    let mut row = Vec::with_capacity(p);
    for &d in days {
        config.features(d, &mut row);
        design.extend_from_slice(&row);
    }
    let name_refs: Vec<&str> = names.iter().map(String::as_str).collect();

    let ybar = counts.iter().sum::<f64>() / n as f64;
    let mut mu: Vec<f64> = counts.iter().map(|y| 0.5 * (y + ybar)).collect();
    let mut ll = poisson_loglik(counts, &mu);
    let mut eta: Vec<f64> = mu.iter().map(|m| m.ln()).collect();
    let mut fit = None;
    let mut iterations = 0;
    for it in 1..=config.max_iterations {
        iterations = it;
        let z: Vec<f64> = (0..n).map(|i| eta[i] + (counts[i] - mu[i]) / mu[i]).collect();
        let step = weighted_least_squares(&design, n, p, &z, Some(&mu), &name_refs)?;
        for i in 0..n {
            let row = &design[i * p..(i + 1) * p];
            eta[i] = row.iter().zip(&step.coefficients).map(|(a, b)| a * b).sum();
            mu[i] = eta[i].exp();
        }
        if mu.iter().any(|m| !m.is_finite()) {
            return Err(Error::FitFailed("IRLS diverged".into()));
        }
        let new_ll = poisson_loglik(counts, &mu);
        let change = (new_ll - ll).abs() / (ll.abs() + 0.1);
        ll = new_ll;
        fit = Some(step);
        if change < config.tolerance {
            break;
        }
        if it == config.max_iterations {
            return Err(Error::FitFailed(format!(
                "IRLS did not converge in {} iterations (possible separation)",
                config.max_iterations
            )));
        }
    }
    let fit = fit.expect("at least one iteration");
    // final weights at the converged means
    let se_fit = weighted_least_squares(&design, n, p, &eta, Some(&mu), &name_refs)?;
    if fit.coefficients.iter().any(|c| c.abs() > 30.0) {
        return Err(Error::FitFailed("coefficient diverging (separation)".into()));
    }
    Ok(GlmModel {
        config: *config,
        names,
        coefficients: fit.coefficients,
        std_errors: se_fit.std_errors(),
        degenerate: false,
        iterations,
        log_likelihood: ll,
    })
}

/// Fits a series whose first entry is day `first_day`, one entry per day.
pub fn fit_cell_glm(series: &[f64], first_day: i64, config: &GlmConfig) -> Result<GlmModel> {
    let days: Vec<i64> = (0..series.len()).map(|i| first_day + i as i64).collect();
    fit_glm(&days, series, config)
}

/// Partition of in-region cells into groups with allocation weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellGrouping {
    pub config: LatticeConfig,
    /// Group id per cell (row-major), `None` outside the study region.
    pub group_of: Vec<Option<usize>>,
    /// Member cells of each group.
    pub groups: Vec<Vec<usize>>,
    /// Allocation weight per cell; 0 outside the study region.
    pub weights: Vec<f64>,
    pub group_totals: Vec<f64>,
}

impl CellGrouping {
    pub fn identity(config: LatticeConfig) -> Self {
        let n = config.cells();
        Self {
            config,
            group_of: (0..n).map(Some).collect(),
            groups: (0..n).map(|i| vec![i]).collect(),
            weights: vec![1.0; n],
            group_totals: vec![0.0; n],
        }
    }
}

/// Greedy pooling: repeatedly takes the lowest-total group below `min_total`
/// that still has a neighbour and merges it into its highest-total 4-neighbour
/// group. Weights are each cell's share of its group's training total.
pub fn group_cells(totals: &Grid, min_total: f64, in_region: Option<&[bool]>) -> CellGrouping {
    let config = totals.config();
    let (rows, cols) = (config.rows, config.cols);
    let n = config.cells();
    let inside = |i: usize| in_region.is_none_or(|m| m[i]);
    let vals = totals.values();

    let mut label: Vec<Option<usize>> = (0..n).map(|i| inside(i).then_some(i)).collect();
    let mut members: Vec<Vec<usize>> = (0..n).map(|i| if inside(i) { vec![i] } else { vec![] }).collect();
    let mut sum: Vec<f64> = (0..n).map(|i| if inside(i) { vals[i] } else { 0.0 }).collect();
    let mut alive: Vec<bool> = (0..n).map(inside).collect();

    let neighbours = |i: usize| {
        let (r, c) = (i / cols, i % cols);
        let mut v = Vec::with_capacity(4);
        if r > 0 {
            v.push(i - cols);
        }
        if r + 1 < rows {
            v.push(i + cols);
        }
        if c > 0 {
            v.push(i - 1);
        }
        if c + 1 < cols {
            v.push(i + 1);
        }
        v
    };

    let mut isolated = vec![false; n];
    loop {
        let candidate = (0..n)
            .filter(|&g| alive[g] && !isolated[g] && sum[g] < min_total)
            .min_by(|&a, &b| sum[a].total_cmp(&sum[b]).then(a.cmp(&b)));
        let Some(g) = candidate else { break };
        let mut adjacent: Vec<usize> = members[g]
            .iter()
            .flat_map(|&cell| neighbours(cell))
            .filter_map(|nb| label[nb])
            .filter(|&h| h != g)
            .collect();
        adjacent.sort_unstable();
        adjacent.dedup();
        let Some(&target) = adjacent
            .iter()
            .max_by(|&&a, &&b| sum[a].total_cmp(&sum[b]).then(b.cmp(&a)))
        else {
            isolated[g] = true;
            continue;
        };
        let moved = std::mem::take(&mut members[g]);
        for &cell in &moved {
            label[cell] = Some(target);
        }
        members[target].extend(moved);
        sum[target] += sum[g];
        sum[g] = 0.0;
        alive[g] = false;
    }

    let mut ids = vec![usize::MAX; n];
    let mut groups = Vec::new();
    let mut group_totals = Vec::new();
    for g in 0..n {
        if alive[g] {
            ids[g] = groups.len();
            let mut m = members[g].clone();
            m.sort_unstable();
            groups.push(m);
            group_totals.push(sum[g]);
        }
    }
    let group_of: Vec<Option<usize>> = label.iter().map(|l| l.map(|g| ids[g])).collect();
    let mut weights = vec![0.0; n];
    for (gi, cells) in groups.iter().enumerate() {
        let total = group_totals[gi];
        for &c in cells {
            weights[c] = if total > 0.0 { vals[c] / total } else { 1.0 / cells.len() as f64 };
        }
    }
    CellGrouping {
        config,
        group_of,
        groups,
        weights,
        group_totals,
    }
}

/// Mean grid for one day with its training window.
#[derive(Debug, Clone, PartialEq)]
pub struct ForecastGrid {
    pub means: Grid,
    pub window: (i64, i64),
}

/// Distributes each group's prediction for `day` to its cells by weight.
pub fn forecast_day(models: &[GlmModel], grouping: &CellGrouping, day: i64) -> Result<Grid> {
    if models.len() != grouping.groups.len() {
        return Err(Error::Parameter(format!(
            "{} models for {} groups",
            models.len(),
            grouping.groups.len()
        )));
    }
    let preds: Vec<f64> = models.iter().map(|m| m.predict(day)).collect();
    let values: Vec<f64> = grouping
        .group_of
        .iter()
        .zip(&grouping.weights)
        .map(|(g, w)| g.map_or(0.0, |g| w * preds[g]))
        .collect();
    Grid::new(grouping.config.rows, grouping.config.cols, day, values)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForecastConfig {
    pub window: usize,
    pub min_total: f64,
    /// Days between refits; 1 refits daily.
    pub refit_every: usize,
    pub glm: GlmConfig,
}

impl Default for ForecastConfig {
    fn default() -> Self {
        Self {
            window: 730,
            min_total: 30.0,
            refit_every: 7,
            glm: GlmConfig::default(),
        }
    }
}

/// Group GLMs fitted on one training window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowFit {
    pub grouping: CellGrouping,
    pub models: Vec<GlmModel>,
    pub window: (i64, i64),
    /// Groups whose full model failed and fell back to a constant rate.
    pub fallbacks: usize,
}

/// Groups and fits on the `cfg.window` days ending the day before `target`.
pub fn fit_window(
    stream: &DailyCountStream,
    target: i64,
    cfg: &ForecastConfig,
    in_region: Option<&[bool]>,
) -> Result<WindowFit> {
    let first = target - cfg.window as i64;
    let available = (target - stream.start_day()).max(0) as usize;
    if first < stream.start_day() || target - 1 > stream.end_day() {
        return Err(Error::InsufficientHistory {
            day: target,
            needed: cfg.window,
            available: available.min(stream.len()),
        });
    }
    let config = stream.config();
    let days: Vec<&Grid> = (first..target)
        .map(|d| stream.counts_at(d).expect("day within stream"))
        .collect();
    let mut totals = Grid::zeros(config, target);
    for g in &days {
        for (t, v) in totals.values_mut().iter_mut().zip(g.values()) {
            *t += v;
        }
    }
    let grouping = group_cells(&totals, cfg.min_total, in_region);
    let day_index: Vec<i64> = (first..target).collect();
    let mut models = Vec::with_capacity(grouping.groups.len());
    let mut fallbacks = 0;
    for cells in &grouping.groups {
        let series: Vec<f64> = days
            .iter()
            .map(|g| cells.iter().map(|&c| g.values()[c]).sum())
            .collect();
        let model = match fit_glm(&day_index, &series, &cfg.glm) {
            Ok(m) => m,
            Err(Error::FitFailed(_)) | Err(Error::SingularFit { .. }) => {
                fallbacks += 1;
                fit_glm(&day_index, &series, &GlmConfig::intercept_only())?
            }
            Err(e) => return Err(e),
        };
        models.push(model);
    }
    Ok(WindowFit {
        grouping,
        models,
        window: (first, target - 1),
        fallbacks,
    })
}

/// Forecast means for every day from `start_day + window` to the end of the
/// stream, refitting every `refit_every` days.
pub fn forecast_stream(
    stream: &DailyCountStream,
    cfg: &ForecastConfig,
    in_region: Option<&[bool]>,
) -> Result<Vec<ForecastGrid>> {
    if cfg.refit_every == 0 || cfg.window == 0 {
        return Err(Error::Parameter("window and refit cadence must be positive".into()));
    }
    let first_target = stream.start_day() + cfg.window as i64;
    let mut out = Vec::new();
    let mut fit: Option<WindowFit> = None;
    for (i, target) in (first_target..=stream.end_day()).enumerate() {
        if i % cfg.refit_every == 0 {
            fit = Some(fit_window(stream, target, cfg, in_region)?);
        }
        let f = fit.as_ref().expect("fitted on first day");
        out.push(ForecastGrid {
            means: forecast_day(&f.models, &f.grouping, target)?,
            window: (target - cfg.window as i64, target - 1),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dof::replication_rng;
    use rand_distr::{Distribution, Poisson};

    fn simulate(coefs: &[f64], cfg: &GlmConfig, days: usize, seed: u64) -> Vec<f64> {
        let mut rng = replication_rng(seed, 0);
        let mut f = Vec::new();
        (0..days as i64)
            .map(|d| {
                cfg.features(d, &mut f);
                let rate: f64 = f.iter().zip(coefs).map(|(a, b)| a * b).sum::<f64>().exp();
                Poisson::new(rate).unwrap().sample(&mut rng)
            })
            .collect()
    }

    #[test]
    fn intercept_only_matches_sample_mean() {
        let y = [0.0, 3.0, 1.0, 2.0, 5.0, 0.0, 1.0];
        let m = fit_cell_glm(&y, 0, &GlmConfig::intercept_only()).unwrap();
        let mean = y.iter().sum::<f64>() / 7.0;
        assert!((m.predict(3) - mean).abs() < 1e-6);
    }

    #[test]
    fn all_zero_series_is_degenerate() {
        let m = fit_cell_glm(&[0.0; 30], 0, &GlmConfig::default()).unwrap();
        assert!(m.degenerate);
        assert_eq!(m.predict(12), 0.0);
    }

    #[test]
    fn saturated_weekday_factor_reproduces_rates() {
        let rates = [2.0, 3.0, 5.0, 4.0, 6.0, 1.0, 2.5];
        let cfg = GlmConfig { harmonics: 0, ..GlmConfig::default() };
        let y: Vec<f64> = (0..70).map(|d| rates[d % 7]).collect();
        let m = fit_cell_glm(&y, 0, &cfg).unwrap();
        for (d, r) in rates.iter().enumerate() {
            assert!((m.predict(d as i64) - r).abs() < 1e-4, "dow {d}");
        }
    }

    #[test]
    fn recovers_known_coefficients() {
        let cfg = GlmConfig::default();
        let mut truth = vec![0.0; cfg.n_features()];
        truth[0] = 1.0;
        truth[5] = 0.3;
        truth[6] = 0.3;
        truth[8] = 0.5;
        let y = simulate(&truth, &cfg, 730, 21);
        let m = fit_cell_glm(&y, 0, &cfg).unwrap();
        for (j, (b, t)) in m.coefficients.iter().zip(&truth).enumerate() {
            assert!((b - t).abs() < 3.0 * m.std_errors[j], "{}: {b} vs {t}", m.names[j]);
        }
    }

    #[test]
    fn identity_grouping_when_all_dense() {
        let totals = Grid::filled(LatticeConfig::new(3, 3).unwrap(), 0, 50.0);
        let g = group_cells(&totals, 30.0, None);
        assert_eq!(g.groups.len(), 9);
        assert!(g.weights.iter().all(|w| *w == 1.0));
    }

    #[test]
    fn two_cell_merge_weights() {
        let totals = Grid::new(2, 1, 0, vec![0.0, 10.0]).unwrap();
        let g = group_cells(&totals, 5.0, None);
        assert_eq!(g.groups, vec![vec![0, 1]]);
        assert_eq!(g.weights, vec![0.0, 1.0]);
    }

    #[test]
    fn zero_total_group_gets_uniform_weights() {
        let totals = Grid::new(1, 2, 0, vec![0.0, 0.0]).unwrap();
        let g = group_cells(&totals, 5.0, None);
        assert_eq!(g.weights, vec![0.5, 0.5]);
    }

    #[test]
    fn out_of_region_cells_excluded() {
        let totals = Grid::new(1, 3, 0, vec![1.0, 50.0, 1.0]).unwrap();
        let mask = [true, false, true];
        let g = group_cells(&totals, 5.0, Some(&mask));
        assert_eq!(g.group_of[1], None);
        assert_eq!(g.weights[1], 0.0);
        // the two in-region cells are not adjacent: each is its own component
        assert_eq!(g.groups.len(), 2);
    }

    #[test]
    fn proportional_allocation() {
        let totals = Grid::new(1, 2, 0, vec![1.0, 2.0]).unwrap();
        let grouping = group_cells(&totals, 10.0, None);
        let model = GlmModel {
            config: GlmConfig::intercept_only(),
            names: vec!["intercept".into()],
            coefficients: vec![0.9f64.ln()],
            std_errors: vec![0.0],
            degenerate: false,
            iterations: 1,
            log_likelihood: 0.0,
        };
        let g = forecast_day(&[model], &grouping, 4).unwrap();
        assert!((g.get(1, 1) - 0.3).abs() < 1e-12);
        assert!((g.get(1, 2) - 0.6).abs() < 1e-12);
    }

    #[test]
    fn moving_window_forecasts() {
        let mut rng = replication_rng(2, 0);
        let pois = Poisson::new(0.2).unwrap();
        let grids: Vec<Grid> = (0..40)
            .map(|d| {
                let v: Vec<f64> = (0..4).map(|_| pois.sample(&mut rng)).collect();
                Grid::new(2, 2, d, v).unwrap()
            })
            .collect();
        let stream = DailyCountStream::from_grids(grids, None).unwrap();
        let cfg = ForecastConfig { window: 30, min_total: 5.0, refit_every: 3, glm: GlmConfig::intercept_only() };
        let out = forecast_stream(&stream, &cfg, None).unwrap();
        assert_eq!(out.len(), 10);
        assert_eq!(out[0].window, (0, 29));
        assert!(out.iter().all(|f| f.means.values().iter().all(|v| *v > 0.0)));
    }
}
