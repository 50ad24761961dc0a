//! Monte Carlo harness: outbreak injection, run-length estimation,
//! recurrence intervals and the comparative ARL experiment.

use rand::Rng;
use rand_distr::{Distribution, Normal, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dof::{replication_rng, BootstrapPopulation, FieldSampler};
use crate::error::{Error, Result};
use crate::fss::{FssMonitor, FssParams, PruneRule};
use crate::grid::{DailyCountStream, Grid, LatticeConfig, PointEvent, Region};
use crate::linalg::compensated_sum;
use crate::scan::{ScanMonitor, ScanParams};

/// A detection plan with its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "plan", rename_all = "lowercase")]
pub enum PlanSpec {
    Scan(ScanParams),
    Fss(FssParams),
}

impl PlanSpec {
    pub fn name(&self) -> &'static str {
        match self {
            PlanSpec::Scan(_) => "scan",
            PlanSpec::Fss(_) => "fss",
        }
    }

    /// Scan cut-off, or the intercept of the pruning rule.
    pub fn threshold(&self) -> f64 {
        match self {
            PlanSpec::Scan(p) => p.threshold,
            PlanSpec::Fss(p) => p.prune_rule.intercept,
        }
    }

    /// Same plan with its scalar threshold replaced; for FSS this is the
    /// constant rule `h(M) = h`.
    pub fn with_threshold(&self, h: f64) -> Self {
        match self {
            PlanSpec::Scan(p) => PlanSpec::Scan(ScanParams {
                threshold: h,
                ..p.clone()
            }),
            PlanSpec::Fss(p) => PlanSpec::Fss(FssParams {
                prune_rule: PruneRule::constant(h),
                ..p.clone()
            }),
        }
    }

    /// In-control days fed before day 1 so the plan can evaluate on day 1.
    pub fn warmup_days(&self) -> usize {
        match self {
            PlanSpec::Scan(p) => p.window_days - 1,
            PlanSpec::Fss(_) => 0,
        }
    }
}

/// When the outbreak starts relative to monitoring.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum Onset {
    /// Outbreak active from monitored day 1, fresh in-control state.
    ZeroState,
    /// `burn_in` in-control days are monitored first with alarms ignored.
    SteadyState { burn_in: usize },
}

impl Onset {
    pub fn burn_in(&self) -> usize {
        match self {
            Onset::ZeroState => 0,
            Onset::SteadyState { burn_in } => *burn_in,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArlOptions {
    pub reps: usize,
    pub seed: u64,
    /// Runs are stopped and counted as censored at this many days.
    pub cap: Option<usize>,
    pub onset: Onset,
}

impl Default for ArlOptions {
    fn default() -> Self {
        Self {
            reps: 200,
            seed: 1,
            cap: Some(1000),
            onset: Onset::ZeroState,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutbreakScenario {
    pub region: Region,
    pub delta: f64,
    pub base_mean: f64,
}

impl OutbreakScenario {
    pub fn validate(&self, config: LatticeConfig) -> Result<()> {
        self.region.check_within(config)?;
        if !(self.delta >= 0.0 && self.delta.is_finite()) {
            return Err(Error::Parameter(format!("delta must be non-negative, got {}", self.delta)));
        }
        if !(self.base_mean >= 0.0 && self.base_mean.is_finite()) {
            return Err(Error::Parameter(format!("base mean must be non-negative, got {}", self.base_mean)));
        }
        Ok(())
    }

    /// Extra-count rate grid: `base * delta` inside the region, 0 elsewhere.
    pub fn excess_rates(&self, config: LatticeConfig) -> Grid {
        let mut g = Grid::zeros(config, 0);
        let r = self.region;
        for row in r.row_start()..=r.row_end() {
            for col in r.col_start()..=r.col_end() {
                g.set(row, col, self.base_mean * self.delta);
            }
        }
        g
    }
}

/// Adds independent Poisson(base * delta) counts to every outbreak cell on
/// every day of the stream.
pub fn inject_outbreak(
    stream: &DailyCountStream,
    scenario: &OutbreakScenario,
    seed: u64,
) -> Result<DailyCountStream> {
    scenario.validate(stream.config())?;
    let mut out = stream.clone();
    let rate = scenario.base_mean * scenario.delta;
    if rate == 0.0 {
        return Ok(out);
    }
    let poisson = Poisson::new(rate).map_err(|e| Error::Parameter(e.to_string()))?;
    let mut rng = replication_rng(seed, 0);
    let r = scenario.region;
    for grid in out.counts_mut() {
        for row in r.row_start()..=r.row_end() {
            for col in r.col_start()..=r.col_end() {
                let add: f64 = poisson.sample(&mut rng);
                grid.set(row, col, grid.get(row, col) + add);
            }
        }
    }
    Ok(out)
}

/// Work done by a plan, aggregated over simulated days.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PlanCounters {
    pub days: usize,
    pub scan_windows_min: Option<usize>,
    pub scan_windows_max: Option<usize>,
    pub fss_generation1_min: Option<usize>,
    pub fss_generation1_max: Option<usize>,
    pub fss_candidates_max: Option<usize>,
    pub fss_generations_max: Option<usize>,
}

fn merge_min(a: Option<usize>, b: Option<usize>) -> Option<usize> {
    match (a, b) {
        (Some(x), Some(y)) => Some(x.min(y)),
        (x, None) | (None, x) => x,
    }
}

fn merge_max(a: Option<usize>, b: Option<usize>) -> Option<usize> {
    a.max(b)
}

impl PlanCounters {
    pub fn merge(&mut self, o: &PlanCounters) {
        self.days += o.days;
        self.scan_windows_min = merge_min(self.scan_windows_min, o.scan_windows_min);
        self.scan_windows_max = merge_max(self.scan_windows_max, o.scan_windows_max);
        self.fss_generation1_min = merge_min(self.fss_generation1_min, o.fss_generation1_min);
        self.fss_generation1_max = merge_max(self.fss_generation1_max, o.fss_generation1_max);
        self.fss_candidates_max = merge_max(self.fss_candidates_max, o.fss_candidates_max);
        self.fss_generations_max = merge_max(self.fss_generations_max, o.fss_generations_max);
    }
}

/// Stateful detector for one replication.
#[derive(Debug, Clone)]
pub enum Detector {
    Scan(ScanMonitor),
    Fss(Box<FssMonitor>),
}

impl Detector {
    pub fn new(plan: &PlanSpec, config: LatticeConfig) -> Result<Self> {
        Ok(match plan {
            PlanSpec::Scan(p) => Detector::Scan(ScanMonitor::new(p.clone(), config)?),
            PlanSpec::Fss(p) => Detector::Fss(Box::new(FssMonitor::new(p.clone(), config)?)),
        })
    }

    pub fn reset(&mut self) {
        match self {
            Detector::Scan(m) => m.reset(),
            Detector::Fss(m) => m.reset(),
        }
    }

    /// Processes one day; `true` when the plan signals.
    pub fn step(&mut self, counts: &Grid, means: &Grid, counters: &mut PlanCounters) -> Result<bool> {
        counters.days += 1;
        match self {
            Detector::Scan(m) => Ok(match m.push(counts, means)? {
                Some(r) => {
                    let w = Some(r.windows_evaluated);
                    counters.scan_windows_min = merge_min(counters.scan_windows_min, w);
                    counters.scan_windows_max = merge_max(counters.scan_windows_max, w);
                    r.signalled
                }
                None => false,
            }),
            Detector::Fss(m) => {
                let tree = m.grow(counts, means)?;
                let g1 = tree.candidates_by_generation.first().copied().filter(|c| *c > 0);
                counters.fss_generation1_min = merge_min(counters.fss_generation1_min, g1);
                counters.fss_generation1_max = merge_max(counters.fss_generation1_max, g1);
                counters.fss_candidates_max =
                    merge_max(counters.fss_candidates_max, Some(tree.candidates_evaluated));
                counters.fss_generations_max = merge_max(counters.fss_generations_max, Some(tree.depth()));
                Ok(crate::fss::any_survivor(&tree, &m.params().prune_rule))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunLengthSummary {
    pub plan: String,
    pub threshold: f64,
    pub scenario: Option<OutbreakScenario>,
    pub mean: f64,
    pub standard_error: f64,
    pub replications: usize,
    pub censored: usize,
    pub cap: Option<usize>,
    pub counters: PlanCounters,
}

/// Days to first signal for one replication, and whether the cap was hit.
fn single_run(
    plan: &PlanSpec,
    pop: &BootstrapPopulation,
    excess: Option<&FieldSampler>,
    opts: &ArlOptions,
    rep: usize,
) -> Result<(usize, bool, PlanCounters)> {
    let config = pop.config();
    let mut rng = replication_rng(opts.seed, rep as u64);
    let mut detector = Detector::new(plan, config)?;
    let mut counters = PlanCounters::default();
    let mut warm = PlanCounters::default();
    let mut counts = Grid::zeros(config, 0);
    let constant = pop.is_constant().then(|| FieldSampler::new(pop.rates()));
    let mut index = 0usize;
    let mut next_day = |rng: &mut rand_chacha::ChaCha8Rng, counts: &mut Grid, with_outbreak: bool| {
        let rates = pop.rates_on(index);
        match &constant {
            Some(s) => s.sample_into(rng, counts),
            None => FieldSampler::new(rates).sample_into(rng, counts),
        }
        if with_outbreak {
            if let Some(e) = excess {
                e.add_into(rng, counts.values_mut());
            }
        }
        counts.set_day(index as i64);
        let mut means = rates.clone();
        means.set_day(index as i64);
        index += 1;
        means
    };
    for _ in 0..plan.warmup_days() + opts.onset.burn_in() {
        let means = next_day(&mut rng, &mut counts, false);
        detector.step(&counts, &means, &mut warm)?;
    }
    let cap = opts.cap.unwrap_or(usize::MAX);
    let mut day = 0;
    while day < cap {
        day += 1;
        let means = next_day(&mut rng, &mut counts, true);
        if detector.step(&counts, &means, &mut counters)? {
            return Ok((day, false, counters));
        }
    }
    Ok((cap, true, counters))
}

/// Mean days to first signal over independent replications, each restarted
/// from a fresh in-control state. Censored runs count at the cap.
pub fn estimate_arl(
    plan: &PlanSpec,
    pop: &BootstrapPopulation,
    scenario: Option<&OutbreakScenario>,
    opts: &ArlOptions,
) -> Result<RunLengthSummary> {
    if opts.reps == 0 {
        return Err(Error::Parameter("reps must be at least 1".into()));
    }
    if opts.cap == Some(0) {
        return Err(Error::Parameter("cap must be at least 1 day".into()));
    }
    let excess = match scenario {
        Some(s) => {
            s.validate(pop.config())?;
            let sampler = FieldSampler::new(&s.excess_rates(pop.config()));
            (sampler.total_rate() > 0.0).then_some(sampler)
        }
        None => None,
    };
    let runs: Vec<(usize, bool, PlanCounters)> = (0..opts.reps)
        .into_par_iter()
        .map(|rep| single_run(plan, pop, excess.as_ref(), opts, rep))
        .collect::<Result<_>>()?;
    let n = runs.len() as f64;
    let mean = compensated_sum(runs.iter().map(|r| r.0 as f64)) / n;
    let var = if runs.len() > 1 {
        compensated_sum(runs.iter().map(|r| (r.0 as f64 - mean).powi(2))) / (n - 1.0)
    } else {
        0.0
    };
    let mut counters = PlanCounters::default();
    for r in &runs {
        counters.merge(&r.2);
    }
    Ok(RunLengthSummary {
        plan: plan.name().to_string(),
        threshold: plan.threshold(),
        scenario: scenario.copied(),
        mean,
        standard_error: (var / n).sqrt(),
        replications: runs.len(),
        censored: runs.iter().filter(|r| r.1).count(),
        cap: opts.cap,
        counters,
    })
}

/// Individual run lengths, for distribution checks.
pub fn run_lengths(
    plan: &PlanSpec,
    pop: &BootstrapPopulation,
    scenario: Option<&OutbreakScenario>,
    opts: &ArlOptions,
) -> Result<Vec<usize>> {
    let excess = scenario.map(|s| FieldSampler::new(&s.excess_rates(pop.config())));
    (0..opts.reps)
        .into_par_iter()
        .map(|rep| single_run(plan, pop, excess.as_ref(), opts, rep).map(|r| r.0))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecurrenceSummary {
    pub days: usize,
    pub events: usize,
    /// Mean gap between consecutive signal days; `None` with fewer than two
    /// signals.
    pub mean_gap: Option<f64>,
}

/// Monitors one long in-control stream without restarting after alarms.
pub fn recurrence_interval(
    plan: &PlanSpec,
    pop: &BootstrapPopulation,
    days: usize,
    seed: u64,
) -> Result<RecurrenceSummary> {
    let config = pop.config();
    let mut rng = replication_rng(seed, 0);
    let mut detector = Detector::new(plan, config)?;
    let mut counters = PlanCounters::default();
    let mut counts = Grid::zeros(config, 0);
    let total = plan.warmup_days() + days;
    let mut signal_days = Vec::new();
    for i in 0..total {
        let rates = pop.rates_on(i);
        FieldSampler::new(rates).sample_into(&mut rng, &mut counts);
        let fired = detector.step(&counts, rates, &mut counters)?;
        if i >= plan.warmup_days() && fired {
            signal_days.push(i);
        }
    }
    let mean_gap = (signal_days.len() >= 2).then(|| {
        (signal_days[signal_days.len() - 1] - signal_days[0]) as f64 / (signal_days.len() - 1) as f64
    });
    Ok(RecurrenceSummary {
        days,
        events: signal_days.len(),
        mean_gap,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table1Config {
    pub rows: usize,
    pub cols: usize,
    pub base_mean: f64,
    pub scan: ScanParams,
    pub fss: FssParams,
    pub regions: Vec<Region>,
    pub deltas: Vec<f64>,
    pub reps: usize,
    pub seed: u64,
    pub cap: usize,
    pub onset: Onset,
}

/// The four outbreak placements: two interior 10 x 4 blocks and two 20 x 2
/// strips, one of them on the western boundary.
pub fn table1_regions() -> Vec<Region> {
    [(5, 14, 11, 14), (10, 19, 16, 19), (1, 20, 10, 11), (1, 20, 1, 2)]
        .iter()
        .map(|&(a, b, c, d)| Region::new(a, b, c, d).expect("static region"))
        .collect()
}

pub fn table1_deltas() -> Vec<f64> {
    vec![0.0, 0.5, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0]
}

impl Default for Table1Config {
    fn default() -> Self {
        Self {
            rows: 40,
            cols: 40,
            base_mean: 0.01,
            scan: ScanParams::default(),
            fss: FssParams::default(),
            regions: table1_regions(),
            deltas: table1_deltas(),
            reps: 200,
            seed: 2009,
            cap: 1000,
            onset: Onset::ZeroState,
        }
    }
}

impl Table1Config {
    pub fn config_hash(&self) -> String {
        config_hash(self)
    }
}

/// Hex SHA-256 of the JSON serialisation.
pub fn config_hash<T: Serialize>(value: &T) -> String {
    let bytes = serde_json::to_vec(value).expect("config serialises");
    Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table1Cell {
    pub delta: f64,
    pub region: Region,
    pub scan: RunLengthSummary,
    pub fss: RunLengthSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table1Report {
    pub config_hash: String,
    pub seed: u64,
    pub onset: Onset,
    pub config: Table1Config,
    pub cells: Vec<Table1Cell>,
    pub scan_counters: PlanCounters,
    pub fss_counters: PlanCounters,
}

impl Table1Report {
    pub fn cell(&self, delta: f64, region: &Region) -> Option<&Table1Cell> {
        self.cells
            .iter()
            .find(|c| c.delta == delta && c.region == *region)
    }

    /// One row per delta; for each region the FSS and scan ARL with SEs.
    pub fn to_csv(&self) -> String {
        let mut out = format!(
            "# config_hash={} seed={} reps={} onset={}\n",
            self.config_hash,
            self.seed,
            self.config.reps,
            match self.onset {
                Onset::ZeroState => "zero-state".to_string(),
                Onset::SteadyState { burn_in } => format!("steady-state:{burn_in}"),
            }
        );
        let mut header = vec!["delta".to_string()];
        for r in &self.config.regions {
            let tag = format!("r{}-{}_c{}-{}", r.row_start(), r.row_end(), r.col_start(), r.col_end());
            for col in ["fss_arl", "fss_se", "scan_arl", "scan_se"] {
                header.push(format!("{tag}_{col}"));
            }
        }
        out.push_str(&header.join(","));
        out.push('\n');
        for &d in &self.config.deltas {
            let mut row = vec![format!("{d}")];
            for r in &self.config.regions {
                match self.cell(d, r) {
                    Some(c) => {
                        row.push(format!("{:.2}", c.fss.mean));
                        row.push(format!("{:.2}", c.fss.standard_error));
                        row.push(format!("{:.2}", c.scan.mean));
                        row.push(format!("{:.2}", c.scan.standard_error));
                    }
                    None => row.extend(std::iter::repeat_n(String::new(), 4)),
                }
            }
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises")
    }
}

/// Runs both plans over every region and delta. The in-control row is
/// estimated once per plan and shared across regions.
pub fn table1_experiment(config: &Table1Config) -> Result<Table1Report> {
    table1_with_progress(config, |_, _| {})
}

pub fn table1_with_progress<F: FnMut(usize, usize)>(
    config: &Table1Config,
    mut progress: F,
) -> Result<Table1Report> {
    let lattice = LatticeConfig::new(config.rows, config.cols)?;
    let pop = BootstrapPopulation::constant(lattice, config.base_mean)?;
    let scan = PlanSpec::Scan(config.scan.clone());
    let fss = PlanSpec::Fss(config.fss.clone());
    let opts = ArlOptions {
        reps: config.reps,
        seed: config.seed,
        cap: Some(config.cap),
        onset: config.onset,
    };
    let total = config.deltas.len() * config.regions.len();
    let mut done = 0;
    let mut cells = Vec::new();
    let mut scan_counters = PlanCounters::default();
    let mut fss_counters = PlanCounters::default();
    let mut in_control: Option<(RunLengthSummary, RunLengthSummary)> = None;
    for &delta in &config.deltas {
        for region in &config.regions {
            let scenario = OutbreakScenario {
                region: *region,
                delta,
                base_mean: config.base_mean,
            };
            let (s, f) = if delta == 0.0 {
                if in_control.is_none() {
                    let s = estimate_arl(&scan, &pop, None, &opts)?;
                    let f = estimate_arl(&fss, &pop, None, &opts)?;
                    scan_counters.merge(&s.counters);
                    fss_counters.merge(&f.counters);
                    in_control = Some((s, f));
                }
                let (s, f) = in_control.clone().expect("set above");
                (
                    RunLengthSummary { scenario: Some(scenario), ..s },
                    RunLengthSummary { scenario: Some(scenario), ..f },
                )
            } else {
                let s = estimate_arl(&scan, &pop, Some(&scenario), &opts)?;
                let f = estimate_arl(&fss, &pop, Some(&scenario), &opts)?;
                scan_counters.merge(&s.counters);
                fss_counters.merge(&f.counters);
                (s, f)
            };
            cells.push(Table1Cell {
                delta,
                region: *region,
                scan: s,
                fss: f,
            });
            done += 1;
            progress(done, total);
        }
    }
    Ok(Table1Report {
        config_hash: config.config_hash(),
        seed: config.seed,
        onset: config.onset,
        config: config.clone(),
        cells,
        scan_counters,
        fss_counters,
    })
}

/// Geocoded synthetic case stream resembling a regional syndromic feed:
/// a few population centres over a uniform background, weekday and annual
/// modulation, and an optional localised outbreak.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticPointsConfig {
    pub first_day: i64,
    pub days: usize,
    /// Study-area extent in metres, `(width, height)`.
    pub extent: (f64, f64),
    /// `(x, y, sd, weight)` per population centre.
    pub centres: Vec<(f64, f64, f64, f64)>,
    pub background_weight: f64,
    pub daily_rate: f64,
    pub weekend_factor: f64,
    pub seasonal_amplitude: f64,
    pub outbreak: Option<PointOutbreak>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointOutbreak {
    pub x: f64,
    pub y: f64,
    pub radius: f64,
    pub first_day: i64,
    pub last_day: i64,
    pub extra_per_day: f64,
}

impl Default for SyntheticPointsConfig {
    fn default() -> Self {
        Self {
            first_day: 1,
            days: 1100,
            extent: (60_000.0, 40_000.0),
            centres: vec![
                (15_000.0, 28_000.0, 4_000.0, 0.4),
                (38_000.0, 15_000.0, 6_000.0, 0.3),
                (50_000.0, 32_000.0, 3_000.0, 0.1),
            ],
            background_weight: 0.2,
            daily_rate: 10.0,
            weekend_factor: 0.7,
            seasonal_amplitude: 0.3,
            outbreak: None,
        }
    }
}

/// Daily expected case total for `day` under `cfg`.
pub fn synthetic_daily_rate(cfg: &SyntheticPointsConfig, day: i64) -> f64 {
    let dow = day.rem_euclid(7);
    let weekday = if dow >= 5 { cfg.weekend_factor } else { 1.0 };
    let season = 1.0 + cfg.seasonal_amplitude * (2.0 * std::f64::consts::PI * day as f64 / 365.25).cos();
    cfg.daily_rate * weekday * season
}

pub fn synthetic_points(cfg: &SyntheticPointsConfig, seed: u64) -> Result<Vec<PointEvent>> {
    let (w, h) = cfg.extent;
    if !(w > 0.0 && h > 0.0) {
        return Err(Error::Parameter("extent must be positive".into()));
    }
    let total_weight: f64 = cfg.background_weight + cfg.centres.iter().map(|c| c.3).sum::<f64>();
    if !(total_weight > 0.0) {
        return Err(Error::Parameter("mixture weights must sum to a positive value".into()));
    }
    let mut rng = replication_rng(seed, 0);
    let mut points = Vec::new();
    let clamp = |v: f64, hi: f64| v.clamp(0.0, hi);
    for i in 0..cfg.days {
        let day = cfg.first_day + i as i64;
        let n = poisson_draw(&mut rng, synthetic_daily_rate(cfg, day));
        for _ in 0..n {
            let mut u = rng.random::<f64>() * total_weight;
            let mut placed = None;
            for &(cx, cy, sd, wt) in &cfg.centres {
                if u < wt {
                    let normal = Normal::new(0.0, sd).map_err(|e| Error::Parameter(e.to_string()))?;
                    placed = Some((clamp(cx + normal.sample(&mut rng), w), clamp(cy + normal.sample(&mut rng), h)));
                    break;
                }
                u -= wt;
            }
            let (x, y) = placed.unwrap_or_else(|| (rng.random::<f64>() * w, rng.random::<f64>() * h));
            points.push(PointEvent { x, y, day });
        }
        if let Some(o) = &cfg.outbreak {
            if day >= o.first_day && day <= o.last_day {
                for _ in 0..poisson_draw(&mut rng, o.extra_per_day) {
                    let r = o.radius * rng.random::<f64>().sqrt();
                    let t = 2.0 * std::f64::consts::PI * rng.random::<f64>();
                    points.push(PointEvent {
                        x: clamp(o.x + r * t.cos(), w),
                        y: clamp(o.y + r * t.sin(), h),
                        day,
                    });
                }
            }
        }
    }
    Ok(points)
}

fn poisson_draw<R: Rng + ?Sized>(rng: &mut R, rate: f64) -> usize {
    if rate <= 0.0 {
        return 0;
    }
    Poisson::new(rate).map(|p| p.sample(rng) as usize).unwrap_or(0)
}
