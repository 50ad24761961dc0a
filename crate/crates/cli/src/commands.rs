use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use fss_core::dof::{
    calibrate_threshold, collect_split_records, fit_bootstrap_population, fit_dof_model, BootstrapPopulation,
    SearchOptions, ThresholdSearchResult,
};
use fss_core::example::{replay_worked_example, transcript};
use fss_core::forecast::forecast_stream;
use fss_core::grid::{lattice_design_from_points, LatticeDesign};
use fss_core::io::{
    assemble_stream, parse_calibration_json, parse_counts_csv, parse_means_csv, parse_points_csv, parse_run_config,
    CalibrationFile, RunConfig,
};
use fss_core::sim::{config_hash, table1_deltas, table1_regions, table1_with_progress, ArlOptions, Onset, PlanSpec, Table1Config};
use fss_core::{DailyCountStream, Error, FssMonitor, FssParams, Grid, PruneRule, ScanMonitor, ScanParams};
use serde::Serialize;

use crate::overlay::SignalOverlay;
use crate::{CalibrateArgs, Cli, Command, PlanChoice, SimulateArgs};

#[derive(Debug)]
pub enum CliError {
    MissingInput(PathBuf, String),
    Malformed(String),
    DemoMismatch(String),
    Other(String),
}

impl CliError {
    pub fn code(&self) -> u8 {
        match self {
            CliError::Other(_) => 1,
            CliError::MissingInput(..) => 2,
            CliError::Malformed(_) => 3,
            CliError::DemoMismatch(_) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::MissingInput(p, what) => write!(f, "missing {what}: {}", p.display()),
            CliError::Malformed(m) | CliError::DemoMismatch(m) | CliError::Other(m) => f.write_str(m),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Other(e.to_string())
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

/// Errors raised while reading an input stream.
fn malformed(path: &Path) -> impl Fn(Error) -> CliError + '_ {
    move |e| match e {
        Error::Io(_) | Error::Json(_) => CliError::Other(format!("{}: {e}", path.display())),
        _ => CliError::Malformed(format!("{}: {e}", path.display())),
    }
}

fn read_input(path: &Path, what: &str) -> CliResult<String> {
    if !path.exists() {
        return Err(CliError::MissingInput(path.to_path_buf(), what.to_string()));
    }
    fs::read_to_string(path).map_err(|e| CliError::Other(format!("{}: {e}", path.display())))
}

fn write_output(dir: &Path, name: &str, contents: &str) -> CliResult<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| CliError::Other(format!("{}: {e}", dir.display())))?;
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| CliError::Other(format!("{}: {e}", path.display())))?;
    Ok(path)
}

struct Loaded {
    cfg: RunConfig,
    hash: String,
}

fn load_config(cli: &Cli) -> CliResult<Loaded> {
    let mut cfg = match &cli.common.config {
        Some(path) => {
            let text = read_input(path, "config file")?;
            let mut cfg = parse_run_config(&text).map_err(|e| CliError::Other(format!("{}: {e}", path.display())))?;
            let base = path.parent().unwrap_or(Path::new(""));
            for p in [&mut cfg.paths.counts, &mut cfg.paths.means, &mut cfg.paths.points, &mut cfg.paths.calibration]
                .into_iter()
                .flatten()
            {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
            cfg
        }
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.common.seed {
        cfg.seed = seed;
    }
    if let Some(reps) = cli.common.reps {
        cfg.replications = reps;
    }
    cfg.validate()?;
    if let Some(p) = cfg.missing_paths().into_iter().next() {
        return Err(CliError::MissingInput(p, "input file".into()));
    }
    let hash = config_hash(&cfg);
    Ok(Loaded { cfg, hash })
}

/// Scan and FSS parameters with any calibrated thresholds applied.
fn plan_params(cfg: &RunConfig) -> CliResult<(ScanParams, FssParams)> {
    let mut scan = cfg.scan_params()?;
    let mut fss = cfg.fss_params()?;
    if let Some(path) = &cfg.paths.calibration {
        let text = read_input(path, "calibration file")?;
        let cal = parse_calibration_json(&text).map_err(|e| CliError::Other(format!("{}: {e}", path.display())))?;
        if let Some(s) = &cal.scan {
            scan.threshold = s.threshold;
        }
        if let Some(f) = &cal.fss {
            fss.prune_rule = PruneRule::constant(f.threshold);
        }
        if let Some(m) = cal.dof_model {
            fss.dof_model = Some(m);
        }
    }
    Ok((scan, fss))
}

fn onset(cfg: &RunConfig) -> Onset {
    match cfg.simulation.burn_in {
        0 => Onset::ZeroState,
        burn_in => Onset::SteadyState { burn_in },
    }
}

pub fn run(cli: &Cli) -> CliResult<()> {
    match &cli.command {
        Command::DemoFigure1 => demo_figure1(),
        Command::Calibrate(args) => calibrate(cli, args),
        Command::Monitor => monitor(cli),
        Command::Simulate(args) => simulate(cli, args),
    }
}

fn demo_figure1() -> CliResult<()> {
    let outcomes = replay_worked_example();
    print!("{}", transcript(&outcomes));
    if let Some(bad) = outcomes.iter().find(|o| !o.agrees()) {
        return Err(CliError::DemoMismatch(format!(
            "worked example disagrees in generation {} ({}): {}",
            bad.generation,
            bad.label,
            bad.mismatches.join("; ")
        )));
    }
    Ok(())
}

fn read_stream(cfg: &RunConfig) -> CliResult<(DailyCountStream, Option<LatticeDesign>)> {
    let lattice = cfg.lattice()?;
    if let Some(path) = &cfg.paths.counts {
        let counts = parse_counts_csv(&read_input(path, "counts file")?).map_err(malformed(path))?;
        let means = match &cfg.paths.means {
            Some(mp) => Some(parse_means_csv(&read_input(mp, "means file")?).map_err(malformed(mp))?),
            None => None,
        };
        let stream = assemble_stream(lattice, &counts, means.as_deref()).map_err(malformed(path))?;
        return Ok((stream, None));
    }
    if let Some(path) = &cfg.paths.points {
        let points = parse_points_csv(&read_input(path, "points file")?).map_err(malformed(path))?;
        let design = lattice_design_from_points(&points, lattice.rows, lattice.cols).map_err(malformed(path))?;
        let first = points.iter().map(|p| p.day).min().expect("design needs points");
        let last = points.iter().map(|p| p.day).max().expect("design needs points");
        let grids = design.count_grids(&points, first, last);
        let stream = DailyCountStream::from_grids(grids, None).map_err(malformed(path))?;
        return Ok((stream, Some(design)));
    }
    Err(CliError::MissingInput(
        PathBuf::from("paths.counts"),
        "counts or points input (set paths.counts or paths.points)".into(),
    ))
}

/// Monitored days with their expected counts: the supplied means, or rolling
/// GLM forecasts after the training window.
fn monitored_days(cfg: &RunConfig, stream: &DailyCountStream) -> CliResult<Vec<(Grid, Grid)>> {
    if let Some(means) = stream.means() {
        return Ok(stream.counts().iter().cloned().zip(means.iter().cloned()).collect());
    }
    let fcfg = cfg.forecast_config();
    if stream.len() <= fcfg.window {
        return Err(CliError::Malformed(format!(
            "stream has {} days; forecasting needs more than the {}-day training window",
            stream.len(),
            fcfg.window
        )));
    }
    let forecasts = forecast_stream(stream, &fcfg, None)?;
    Ok(forecasts
        .into_iter()
        .map(|f| {
            let day = f.means.day();
            (stream.counts_at(day).expect("forecast day in stream").clone(), f.means)
        })
        .collect())
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    config_hash: &'a str,
    seed: u64,
    plans: Vec<&'static str>,
    first_day: Option<i64>,
    last_day: Option<i64>,
    fss_signal_days: Vec<i64>,
    scan_signal_days: Vec<i64>,
}

fn monitor(cli: &Cli) -> CliResult<()> {
    let Loaded { cfg, hash } = load_config(cli)?;
    let (scan_params, fss_params) = plan_params(&cfg)?;
    let (stream, design) = read_stream(&cfg)?;
    let days = monitored_days(&cfg, &stream)?;
    let lattice = cfg.lattice()?;
    let plan = cli.common.plan;

    let mut scan = if plan.scan() { Some(ScanMonitor::new(scan_params, lattice)?) } else { None };
    let mut fss = if plan.fss() { Some(FssMonitor::new(fss_params, lattice)?) } else { None };
    let mut scan_lines = String::new();
    let mut fss_lines = String::new();
    let mut overlay = SignalOverlay::new(hash.clone(), lattice.rows, lattice.cols);
    let mut fss_days = Vec::new();
    let mut scan_days = Vec::new();

    for (counts, means) in &days {
        if let Some(m) = fss.as_mut() {
            let report = m.step(counts, means)?;
            fss_lines.push_str(&serde_json::to_string(&report.record()).expect("record serialises"));
            fss_lines.push('\n');
            if report.signalled {
                let regions: Vec<_> = report.regions.iter().map(|r| r.region).collect();
                overlay.push(report.day, "fss", &regions, design.as_ref());
                fss_days.push(report.day);
                let list: Vec<String> = regions.iter().map(|r| r.to_string()).collect();
                println!("day {}: fss signal {}", report.day, list.join(" "));
            }
        }
        if let Some(m) = scan.as_mut() {
            if let Some(result) = m.push(counts, means)? {
                scan_lines.push_str(&serde_json::to_string(&result.record()).expect("record serialises"));
                scan_lines.push('\n');
                if result.signalled {
                    let regions: Vec<_> = result.best_window.into_iter().collect();
                    overlay.push(result.day, "scan", &regions, design.as_ref());
                    scan_days.push(result.day);
                    let list: Vec<String> = regions.iter().map(|r| r.to_string()).collect();
                    println!("day {}: scan signal {} (statistic {:.3})", result.day, list.join(" "), result.best_statistic);
                }
            }
        }
    }

    let out = &cli.common.out;
    let mut plans = Vec::new();
    if fss.is_some() {
        write_output(out, "fss.jsonl", &fss_lines)?;
        plans.push("fss");
    }
    if scan.is_some() {
        write_output(out, "scan.jsonl", &scan_lines)?;
        plans.push("scan");
    }
    write_output(out, "overlay.json", &to_pretty(&overlay))?;
    if let Some(d) = &design {
        write_output(out, "lattice.json", &to_pretty(d))?;
    }
    let manifest = Manifest {
        command: "monitor",
        config_hash: &hash,
        seed: cfg.seed,
        plans,
        first_day: days.first().map(|d| d.0.day()),
        last_day: days.last().map(|d| d.0.day()),
        fss_signal_days: fss_days,
        scan_signal_days: scan_days,
    };
    write_output(out, "manifest.json", &to_pretty(&manifest))?;
    println!(
        "monitored {} days; fss signalled on {}, scan on {}; config {}",
        days.len(),
        manifest.fss_signal_days.len(),
        manifest.scan_signal_days.len(),
        &hash[..12]
    );
    Ok(())
}

fn to_pretty<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("output serialises");
    s.push('\n');
    s
}

fn calibrate(cli: &Cli, args: &CalibrateArgs) -> CliResult<()> {
    let Loaded { cfg, hash } = load_config(cli)?;
    let target = args.target.unwrap_or(cfg.simulation.target_arl);
    if !(target > 1.0) {
        return Err(CliError::Other(format!("target ARL must exceed 1, got {target}")));
    }
    let lattice = cfg.lattice()?;
    let pop = match &cfg.paths.counts {
        Some(_) => {
            let (stream, _) = read_stream(&cfg)?;
            fit_bootstrap_population(&stream)?
        }
        None => BootstrapPopulation::constant(lattice, cfg.simulation.base_mean)?,
    };
    let (scan_params, mut fss_params) = plan_params(&cfg)?;
    let mut file = CalibrationFile::new(hash.clone(), cfg.seed);

    if cli.common.plan.fss() && args.fit_dof {
        eprintln!("collecting bootstrap split records ({} reps x {} days)", args.dof_reps, args.dof_days);
        let records = collect_split_records(&pop, &fss_params, args.dof_reps, args.dof_days, cfg.seed)?;
        let model = fit_dof_model(&records)?;
        file.extra.insert("dof_records".into(), records.len() as f64);
        fss_params.dof_model = Some(model.clone());
        file.dof_model = Some(model);
    }

    let opts = ArlOptions {
        reps: cfg.replications,
        seed: cfg.seed,
        cap: Some(cfg.simulation.cap),
        onset: onset(&cfg),
    };
    let mut plans = Vec::new();
    if cli.common.plan.scan() {
        plans.push(PlanSpec::Scan(scan_params));
    }
    if cli.common.plan.fss() {
        plans.push(PlanSpec::Fss(fss_params));
    }
    let mut unconverged = Vec::new();
    for plan in &plans {
        eprintln!("calibrating {} to ARL {target} with {} replications", plan.name(), opts.reps);
        let result = calibrate_threshold(plan, &pop, target, &opts, &SearchOptions::for_plan(plan))?;
        println!(
            "{}: threshold {:.4}, ARL {:.2} (se {:.2}), converged {}",
            plan.name(),
            result.threshold,
            result.achieved_arl,
            result.standard_error,
            result.converged
        );
        if !result.converged {
            unconverged.push(bracket_diagnostics(plan.name(), &result));
        }
        match plan {
            PlanSpec::Scan(_) => file.scan = Some(result),
            PlanSpec::Fss(_) => file.fss = Some(result),
        }
    }
    file.extra.insert("cap".into(), cfg.simulation.cap as f64);
    let path = write_output(&cli.common.out, "calibration.json", &(file.to_json() + "\n"))?;
    println!("wrote {}", path.display());
    if !unconverged.is_empty() {
        return Err(CliError::Other(unconverged.join("\n")));
    }
    Ok(())
}

fn bracket_diagnostics(name: &str, r: &ThresholdSearchResult) -> String {
    let mut s = format!(
        "{name} threshold search did not reach ARL {} within tolerance; probes:",
        r.target_arl
    );
    for p in &r.trace {
        s.push_str(&format!(
            "\n  h={:.5} ARL={:.2} se={:.2} censored={}",
            p.threshold, p.arl, p.se, p.censored
        ));
    }
    s
}

fn simulate(cli: &Cli, args: &SimulateArgs) -> CliResult<()> {
    let Loaded { cfg, .. } = load_config(cli)?;
    let (scan, fss) = plan_params(&cfg)?;
    let lattice = cfg.lattice()?;
    let config = Table1Config {
        rows: lattice.rows,
        cols: lattice.cols,
        base_mean: cfg.simulation.base_mean,
        scan,
        fss,
        regions: table1_regions(),
        deltas: args.deltas.clone().unwrap_or_else(table1_deltas),
        reps: cfg.replications,
        seed: cfg.seed,
        cap: cfg.simulation.cap,
        onset: onset(&cfg),
    };
    if cli.common.plan != PlanChoice::Both {
        eprintln!("note: the study always runs both plans");
    }
    let report = table1_with_progress(&config, |done, total| {
        eprintln!("cell {done}/{total}");
    })?;
    let csv = report.to_csv();
    write_output(&cli.common.out, "table1.csv", &csv)?;
    write_output(&cli.common.out, "table1.json", &(report.to_json() + "\n"))?;
    print!("{csv}");
    println!(
        "scan windows/day {:?}..{:?}; fss generation-1 candidates {:?}; fss candidates/day max {:?}",
        report.scan_counters.scan_windows_min,
        report.scan_counters.scan_windows_max,
        report.fss_counters.fss_generation1_max,
        report.fss_counters.fss_candidates_max
    );
    Ok(())
}
