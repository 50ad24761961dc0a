//! Degrees-of-freedom model for the best-split statistic, the parametric
//! bootstrap that feeds it, and Monte Carlo threshold search.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fss::{
    grow_with_sums, BlockCriterion, FssParams, RegionSums, SelectionMode, SplitCovariates,
    StopReason,
};
use crate::grid::{Axis, DailyCountStream, Grid, LatticeConfig};
use crate::linalg::weighted_least_squares;
use crate::sim::{estimate_arl, ArlOptions, PlanSpec, RunLengthSummary};
use crate::smoothing::{SmoothState, SpatialSmoother};

pub const MEAN_FEATURES: [&str; 13] = [
    "1", "z_p", "n_s", "n_s^2", "mu", "mu_p", "z_p^2", "z_p*n_s", "z_p*n_s^2", "z_p*mu",
    "z_p*mu_p", "mu*z_p^2", "mu_p*z_p^2",
];

pub const LOGVAR_FEATURES: [&str; 12] = [
    "1", "z_p", "n_s", "mu", "mu_p", "z_p^2", "z_p*n_s", "z_p*mu", "z_p*mu_p", "z_p^2*n_s",
    "mu*z_p^2", "mu_p*z_p^2",
];

const PUBLISHED_MEAN: [f64; 13] = [
    0.0192, 0.784214, 0.007253, -0.0001576, -0.000219, 0.00020, 0.420963, -0.010587, 0.000159,
    -0.000341, 0.0003577, -0.000378, 0.000144,
];

const PUBLISHED_LOGVAR: [f64; 12] = [
    -3.3696, -1.844822, 0.03334, -0.000904, 0.000792, 0.736898, 0.057413, -0.001137, 0.001294,
    -0.007494, 0.000378, 0.000489,
];

/// `E[ln chi2_1]`; log squared residuals underestimate the log variance by this.
const LOG_CHI2_1_MEAN: f64 = -1.270_362_845_461_478;

pub fn mean_features(cov: &SplitCovariates) -> [f64; 13] {
    let (z, n, mu, mp) = (cov.z_p, cov.n_s as f64, cov.mu, cov.mu_p);
    [
        1.0,
        z,
        n,
        n * n,
        mu,
        mp,
        z * z,
        z * n,
        z * n * n,
        z * mu,
        z * mp,
        mu * z * z,
        mp * z * z,
    ]
}

pub fn logvar_features(cov: &SplitCovariates) -> [f64; 12] {
    let (z, n, mu, mp) = (cov.z_p, cov.n_s as f64, cov.mu, cov.mu_p);
    [
        1.0,
        z,
        n,
        mu,
        mp,
        z * z,
        z * n,
        z * mu,
        z * mp,
        z * z * n,
        mu * z * z,
        mp * z * z,
    ]
}

/// Conditional mean and log-variance of the best-split statistic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DofModel {
    /// Ordered as [`MEAN_FEATURES`].
    pub mean_coefficients: Vec<f64>,
    /// Ordered as [`LOGVAR_FEATURES`].
    pub logvar_coefficients: Vec<f64>,
    pub sd_floor: f64,
}

impl DofModel {
    /// The fitted coefficients for a 40 x 40 lattice at 0.01 cases per cell
    /// per day.
    pub fn published() -> Self {
        Self {
            mean_coefficients: PUBLISHED_MEAN.to_vec(),
            logvar_coefficients: PUBLISHED_LOGVAR.to_vec(),
            sd_floor: 0.25,
        }
    }

    pub fn zeros() -> Self {
        Self {
            mean_coefficients: vec![0.0; 13],
            logvar_coefficients: vec![0.0; 12],
            sd_floor: 0.25,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.mean_coefficients.len() != MEAN_FEATURES.len()
            || self.logvar_coefficients.len() != LOGVAR_FEATURES.len()
        {
            return Err(Error::Parameter(format!(
                "DOF model needs {} mean and {} log-variance coefficients, got {} and {}",
                MEAN_FEATURES.len(),
                LOGVAR_FEATURES.len(),
                self.mean_coefficients.len(),
                self.logvar_coefficients.len()
            )));
        }
        if self
            .mean_coefficients
            .iter()
            .chain(&self.logvar_coefficients)
            .any(|c| !c.is_finite())
        {
            return Err(Error::Parameter("DOF model coefficients must be finite".into()));
        }
        Ok(())
    }

    pub fn expected(&self, cov: &SplitCovariates) -> f64 {
        dot(&self.mean_coefficients, &mean_features(cov))
    }

    pub fn variance(&self, cov: &SplitCovariates) -> f64 {
        dot(&self.logvar_coefficients, &logvar_features(cov)).exp()
    }

    /// `(E(X), Var(X))`.
    pub fn predict(&self, cov: &SplitCovariates) -> (f64, f64) {
        (self.expected(cov), self.variance(cov))
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapRecord {
    pub x: f64,
    pub covariates: SplitCovariates,
    pub axis: Axis,
}

/// Per-cell Poisson rates for simulating in-control counts. Day-varying
/// populations cycle through `daily` rate grids.
#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapPopulation {
    config: LatticeConfig,
    rates: Grid,
    daily: Option<Vec<Grid>>,
}

impl BootstrapPopulation {
    pub fn constant(config: LatticeConfig, rate: f64) -> Result<Self> {
        Self::from_rates(Grid::filled(config, 0, rate))
    }

    pub fn from_rates(rates: Grid) -> Result<Self> {
        if rates.values().iter().any(|r| !(r.is_finite() && *r >= 0.0)) {
            return Err(Error::Domain("bootstrap rates must be finite and non-negative".into()));
        }
        Ok(Self {
            config: rates.config(),
            rates,
            daily: None,
        })
    }

    pub fn day_varying(daily: Vec<Grid>) -> Result<Self> {
        let first = daily
            .first()
            .ok_or_else(|| Error::Parameter("day-varying population needs at least one day".into()))?;
        let config = first.config();
        for g in &daily {
            g.ensure_shape(config)?;
        }
        let mut mean = Grid::zeros(config, 0);
        for g in &daily {
            for (m, v) in mean.values_mut().iter_mut().zip(g.values()) {
                *m += v / daily.len() as f64;
            }
        }
        Ok(Self {
            config,
            rates: mean,
            daily: Some(daily),
        })
    }

    pub fn config(&self) -> LatticeConfig {
        self.config
    }

    /// Average rate grid.
    pub fn rates(&self) -> &Grid {
        &self.rates
    }

    /// Rates for day `index` (0-based) of a simulated series.
    pub fn rates_on(&self, index: usize) -> &Grid {
        match &self.daily {
            Some(d) => &d[index % d.len()],
            None => &self.rates,
        }
    }

    pub fn is_constant(&self) -> bool {
        self.daily.is_none()
    }
}

/// Constant-rate MLE per cell: the sample mean over the training days.
pub fn fit_bootstrap_population(training: &DailyCountStream) -> Result<BootstrapPopulation> {
    if training.is_empty() {
        return Err(Error::InsufficientHistory {
            day: training.start_day(),
            needed: 1,
            available: 0,
        });
    }
    let mut totals = training.cell_totals();
    let n = training.len() as f64;
    totals.values_mut().iter_mut().for_each(|v| *v /= n);
    BootstrapPopulation::from_rates(totals)
}

/// Draws a Poisson field over a rate grid: the total from a single Poisson
/// draw, then each event placed by inverse-CDF over the cell rates.
#[derive(Debug, Clone)]
pub struct FieldSampler {
    cumulative: Vec<f64>,
    total: f64,
    poisson: Option<Poisson<f64>>,
}

impl FieldSampler {
    pub fn new(rates: &Grid) -> Self {
        let mut acc = 0.0;
        let cumulative: Vec<f64> = rates
            .values()
            .iter()
            .map(|r| {
                acc += r;
                acc
            })
            .collect();
        Self {
            cumulative,
            total: acc,
            poisson: (acc > 0.0).then(|| Poisson::new(acc).expect("positive finite rate")),
        }
    }

    pub fn total_rate(&self) -> f64 {
        self.total
    }

    /// Overwrites `out` with one day's counts.
    pub fn sample_into<R: rand::Rng + ?Sized>(&self, rng: &mut R, out: &mut Grid) {
        let vals = out.values_mut();
        vals.iter_mut().for_each(|v| *v = 0.0);
        self.add_into(rng, vals);
    }

    /// Adds one day's draws to `vals` and returns the number of events.
    pub fn add_into<R: rand::Rng + ?Sized>(&self, rng: &mut R, vals: &mut [f64]) -> usize {
        let Some(poisson) = &self.poisson else {
            return 0;
        };
        let n = poisson.sample(rng) as usize;
        for _ in 0..n {
            let u = rng.random::<f64>() * self.total;
            let idx = self.cumulative.partition_point(|c| *c <= u).min(vals.len() - 1);
            vals[idx] += 1.0;
        }
        n
    }

    /// Cell indices (row-major, 0-based) of one day's events.
    pub fn sample_events<R: rand::Rng + ?Sized>(&self, rng: &mut R, events: &mut Vec<usize>) {
        events.clear();
        let Some(poisson) = &self.poisson else {
            return;
        };
        let n = poisson.sample(rng) as usize;
        let last = self.cumulative.len() - 1;
        for _ in 0..n {
            let u = rng.random::<f64>() * self.total;
            events.push(self.cumulative.partition_point(|c| *c <= u).min(last));
        }
    }
}

/// Per-replication generator: the base seed selects the key, the replication
/// index the stream.
pub fn replication_rng(seed: u64, rep: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(rep);
    rng
}

/// In-control series of `days` days starting at day 1, with the population
/// rates as the means.
pub fn generate_series(pop: &BootstrapPopulation, days: usize, seed: u64) -> Result<DailyCountStream> {
    if days == 0 {
        return Err(Error::Parameter("series length must be at least one day".into()));
    }
    let mut rng = replication_rng(seed, 0);
    let mut stream = DailyCountStream::with_means(pop.config(), 1);
    let constant = pop.is_constant().then(|| FieldSampler::new(pop.rates()));
    for i in 0..days {
        let day = i as i64 + 1;
        let rates = pop.rates_on(i);
        let mut counts = Grid::zeros(pop.config(), day);
        match &constant {
            Some(s) => s.sample_into(&mut rng, &mut counts),
            None => FieldSampler::new(rates).sample_into(&mut rng, &mut counts),
        }
        let mut means = rates.clone();
        means.set_day(day);
        stream.push(counts, Some(means))?;
    }
    Ok(stream)
}

/// Runs smoothing and partitioning over `reps` in-control series of `days`
/// days each, selecting axes by the raw statistic, and records both axes at
/// every searched node.
pub fn collect_split_records(
    pop: &BootstrapPopulation,
    params: &FssParams,
    reps: usize,
    days: usize,
    seed: u64,
) -> Result<Vec<BootstrapRecord>> {
    if reps == 0 || days == 0 {
        return Err(Error::Parameter("collection needs reps >= 1 and days >= 1".into()));
    }
    let params = FssParams {
        selection_mode: SelectionMode::Raw,
        ..params.clone()
    };
    params.validate()?;
    let config = pop.config();
    let smoother = SpatialSmoother::new(config, params.smoothing.lambda)?;
    let mut records = Vec::new();
    let mut y = Grid::zeros(config, 0);
    let mut m = Grid::zeros(config, 0);
    let mut scratch = Vec::new();
    for rep in 0..reps {
        let mut rng = replication_rng(seed, rep as u64);
        let mut state = SmoothState::new(pop.rates_on(0));
        let mut counts = Grid::zeros(config, 0);
        for i in 0..days {
            let rates = pop.rates_on(i);
            FieldSampler::new(rates).sample_into(&mut rng, &mut counts);
            state.update(&counts, rates, params.smoothing.alpha)?;
            smoother.smooth_into(&state.ewma_counts, &mut y, &mut scratch);
            smoother.smooth_into(&state.ewma_means, &mut m, &mut scratch);
            let sums = RegionSums::new(&y, &m)?;
            let tree = grow_with_sums(&sums, &m, &params, i as i64 + 1);
            for node in &tree.nodes {
                if !matches!(node.stop, StopReason::Split | StopReason::NoImprovement) {
                    continue;
                }
                for axis in [Axis::Row, Axis::Column] {
                    if let Some(s) = sums.search(&node.region, axis, BlockCriterion::RootSnr) {
                        records.push(BootstrapRecord {
                            x: s.statistic,
                            covariates: SplitCovariates::for_block(&s, node.count, node.mean),
                            axis,
                        });
                    }
                }
            }
        }
    }
    Ok(records)
}

/// Least-squares fit of `X` on the mean features, then of the log squared
/// residuals on the log-variance features. The variance intercept is shifted
/// by `-E[ln chi2_1]` so that `exp` of the fit estimates the variance rather
/// than its geometric mean.
pub fn fit_dof_model(records: &[BootstrapRecord]) -> Result<DofModel> {
    let need = 10 * MEAN_FEATURES.len();
    if records.len() < need {
        return Err(Error::FitFailed(format!(
            "{} records, need at least {need}",
            records.len()
        )));
    }
    let n = records.len();
    let mean_design: Vec<f64> = records
        .iter()
        .flat_map(|r| mean_features(&r.covariates))
        .collect();
    let xs: Vec<f64> = records.iter().map(|r| r.x).collect();
    let mean_fit = weighted_least_squares(&mean_design, n, 13, &xs, None, &MEAN_FEATURES)?;

    let log_r2: Vec<f64> = records
        .iter()
        .zip(mean_design.chunks(13))
        .map(|(r, f)| {
            let resid = r.x - dot(&mean_fit.coefficients, f);
            (resid * resid).max(1e-12).ln()
        })
        .collect();
    let var_design: Vec<f64> = records
        .iter()
        .flat_map(|r| logvar_features(&r.covariates))
        .collect();
    let mut var_fit = weighted_least_squares(&var_design, n, 12, &log_r2, None, &LOGVAR_FEATURES)?;
    var_fit.coefficients[0] -= LOG_CHI2_1_MEAN;

    Ok(DofModel {
        mean_coefficients: mean_fit.coefficients,
        logvar_coefficients: var_fit.coefficients,
        sd_floor: 0.25,
    })
}

/// One bisection probe.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchProbe {
    pub threshold: f64,
    pub arl: f64,
    pub se: f64,
    pub censored: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSearchResult {
    pub threshold: f64,
    pub achieved_arl: f64,
    pub standard_error: f64,
    pub replications: usize,
    pub target_arl: f64,
    pub converged: bool,
    pub trace: Vec<SearchProbe>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchOptions {
    pub bracket: (f64, f64),
    /// Relative ARL tolerance.
    pub tolerance: f64,
    pub min_width: f64,
    pub max_probes: usize,
}

impl SearchOptions {
    pub fn for_plan(plan: &PlanSpec) -> Self {
        let bracket = match plan {
            PlanSpec::Scan(_) => (0.0, 15.0),
            PlanSpec::Fss(_) => (0.0, 3.0),
        };
        Self {
            bracket,
            tolerance: 0.05,
            min_width: 1e-3,
            max_probes: 40,
        }
    }
}

/// Bisection over the plan's scalar threshold (the scan cut-off or the
/// constant pruning level) using common random numbers across probes.
pub fn calibrate_threshold(
    plan: &PlanSpec,
    pop: &BootstrapPopulation,
    target_arl: f64,
    arl: &ArlOptions,
    search: &SearchOptions,
) -> Result<ThresholdSearchResult> {
    if !(target_arl > 1.0) {
        return Err(Error::Parameter(format!("target ARL must exceed 1, got {target_arl}")));
    }
    let opts = ArlOptions {
        cap: arl.cap.or(Some((10.0 * target_arl).ceil() as usize)),
        ..arl.clone()
    };
    let mut trace: Vec<SearchProbe> = Vec::new();
    let probe = |h: f64, trace: &mut Vec<SearchProbe>| -> Result<SearchProbe> {
        let summary: RunLengthSummary = estimate_arl(&plan.with_threshold(h), pop, None, &opts)?;
        let p = SearchProbe {
            threshold: h,
            arl: summary.mean,
            se: summary.standard_error,
            censored: summary.censored,
        };
        trace.push(p);
        Ok(p)
    };
    let (mut lo, mut hi) = search.bracket;
    let p_lo = probe(lo, &mut trace)?;
    let p_hi = probe(hi, &mut trace)?;
    if !(p_lo.arl <= target_arl && p_hi.arl >= target_arl) {
        return Err(Error::Bracket {
            lo,
            hi,
            lo_arl: p_lo.arl,
            hi_arl: p_hi.arl,
            target: target_arl,
        });
    }
    let within = |p: &SearchProbe| (p.arl - target_arl).abs() <= search.tolerance * target_arl;
    let mut best = if (p_lo.arl - target_arl).abs() <= (p_hi.arl - target_arl).abs() {
        p_lo
    } else {
        p_hi
    };
    let mut converged = within(&best);
    while !converged && hi - lo >= search.min_width && trace.len() < search.max_probes {
        let mid = 0.5 * (lo + hi);
        let p = probe(mid, &mut trace)?;
        if (p.arl - target_arl).abs() < (best.arl - target_arl).abs() {
            best = p;
        }
        if within(&p) {
            converged = true;
        } else if p.arl < target_arl {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    check_monotone(&trace)?;
    Ok(ThresholdSearchResult {
        threshold: best.threshold,
        achieved_arl: best.arl,
        standard_error: best.se,
        replications: opts.reps,
        target_arl,
        converged,
        trace,
    })
}

/// ARL must not fall by more than 3 combined standard errors as the
/// threshold rises.
pub fn check_monotone(trace: &[SearchProbe]) -> Result<()> {
    let mut sorted = trace.to_vec();
    sorted.sort_by(|a, b| a.threshold.total_cmp(&b.threshold));
    for w in sorted.windows(2) {
        let slack = 3.0 * (w[0].se.powi(2) + w[1].se.powi(2)).sqrt();
        if w[1].arl < w[0].arl - slack {
            return Err(Error::NonMonotone(format!(
                "ARL {:.3} at threshold {} falls below {:.3} at {}",
                w[1].arl, w[1].threshold, w[0].arl, w[0].threshold
            )));
        }
    }
    Ok(())
}
