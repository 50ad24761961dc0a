use fss_core::dof::{calibrate_threshold, check_monotone, generate_series, BootstrapPopulation, SearchOptions};
use fss_core::sim::{
    config_hash, estimate_arl, run_lengths, table1_experiment, ArlOptions, Onset, OutbreakScenario, PlanSpec, Table1Config,
};
use fss_core::{FssParams, LatticeConfig, PruneRule, Region, ScanParams};

fn small_pop() -> BootstrapPopulation {
    BootstrapPopulation::constant(LatticeConfig::new(10, 10).unwrap(), 0.05).unwrap()
}

fn small_scan() -> ScanParams {
    ScanParams { m1: 3, m2: 3, window_days: 3, ..ScanParams::default() }
}

#[test]
fn series_depend_only_on_seed() {
    let pop = small_pop();
    let a = generate_series(&pop, 30, 4).unwrap();
    assert_eq!(a, generate_series(&pop, 30, 4).unwrap());
    let b = generate_series(&pop, 30, 5).unwrap();
    assert_ne!(a.counts(), b.counts());
    assert_eq!(a.means(), b.means());
}

#[test]
fn fss_calibration_hits_target_with_monotone_trace() {
    let pop = small_pop();
    let plan = PlanSpec::Fss(FssParams::default());
    let opts = ArlOptions { reps: 200, seed: 21, cap: Some(500), onset: Onset::ZeroState };
    let r = calibrate_threshold(&plan, &pop, 50.0, &opts, &SearchOptions::for_plan(&plan)).unwrap();
    assert!(r.converged, "{:?}", r.trace);
    assert!((r.achieved_arl - 50.0).abs() <= 2.5);
    assert!(r.trace.len() <= 40);
    check_monotone(&r.trace).unwrap();
    // lower bracket end alarms at once
    assert_eq!(r.trace[0].threshold, 0.0);
    assert_eq!(r.trace[0].arl, 1.0);
}

#[test]
fn in_control_run_lengths_look_geometric() {
    let pop = small_pop();
    let plan = PlanSpec::Fss(FssParams::default());
    let opts = ArlOptions { reps: 200, seed: 3, cap: Some(1000), onset: Onset::ZeroState };
    let cal = calibrate_threshold(&plan, &pop, 100.0, &opts, &SearchOptions::for_plan(&plan)).unwrap();
    assert!(cal.converged);
    let fresh = ArlOptions { reps: 400, seed: 77, ..opts };
    let runs = run_lengths(&plan.with_threshold(cal.threshold), &pop, None, &fresh).unwrap();
    let n = runs.len() as f64;
    let mean = runs.iter().sum::<usize>() as f64 / n;
    let var = runs.iter().map(|&r| (r as f64 - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let ratio = var.sqrt() / mean;
    assert!((60.0..=140.0).contains(&mean), "mean {mean}");
    assert!((0.5..=1.5).contains(&ratio), "sd/mean {ratio}");
}

#[test]
fn larger_outbreaks_are_caught_sooner() {
    let pop = small_pop();
    let region = Region::new(2, 5, 6, 8).unwrap();
    let opts = ArlOptions { reps: 100, seed: 8, cap: Some(200), onset: Onset::ZeroState };
    for plan in [
        PlanSpec::Fss(FssParams { prune_rule: PruneRule::constant(0.5), ..FssParams::default() }),
        PlanSpec::Scan(ScanParams { threshold: 4.0, ..small_scan() }),
    ] {
        let mut prev: Option<(f64, f64)> = None;
        for delta in [0.0, 1.0, 2.0, 4.0, 8.0] {
            let scen = OutbreakScenario { region, delta, base_mean: 0.05 };
            let s = estimate_arl(&plan, &pop, Some(&scen), &opts).unwrap();
            if let Some((m, se)) = prev {
                let slack = 3.0 * (se * se + s.standard_error * s.standard_error).sqrt();
                assert!(s.mean <= m + slack, "{} delta {delta}: {} after {m}", plan.name(), s.mean);
            }
            prev = Some((s.mean, s.standard_error));
        }
    }
}

#[test]
fn steady_state_onset_ignores_burn_in_alarms() {
    let pop = small_pop();
    let plan = PlanSpec::Fss(FssParams { prune_rule: PruneRule::constant(-1.0), ..FssParams::default() });
    let opts = ArlOptions { reps: 10, seed: 1, cap: Some(50), onset: Onset::SteadyState { burn_in: 20 } };
    let s = estimate_arl(&plan, &pop, None, &opts).unwrap();
    // run length counts from the end of the burn-in
    assert_eq!(s.mean, 1.0);
    assert_eq!(s.standard_error, 0.0);
}

fn tiny_table() -> Table1Config {
    Table1Config {
        rows: 12,
        cols: 12,
        base_mean: 0.05,
        scan: ScanParams { threshold: 3.5, ..small_scan() },
        fss: FssParams { prune_rule: PruneRule::constant(0.5), ..FssParams::default() },
        regions: vec![Region::new(1, 4, 1, 2).unwrap(), Region::new(5, 8, 5, 7).unwrap()],
        deltas: vec![0.0, 3.0],
        reps: 12,
        seed: 10,
        cap: 60,
        onset: Onset::ZeroState,
    }
}

#[test]
fn table_reports_are_reproducible_and_stamped() {
    let cfg = tiny_table();
    let a = table1_experiment(&cfg).unwrap();
    let b = table1_experiment(&cfg).unwrap();
    assert_eq!(a.to_csv(), b.to_csv());
    assert_eq!(a.to_json(), b.to_json());
    assert_eq!(a.config_hash, config_hash(&cfg));
    assert_eq!(a.cells.len(), 4);
    // the in-control run is shared across placements
    let zero: Vec<_> = a.cells.iter().filter(|c| c.delta == 0.0).collect();
    assert_eq!(zero[0].fss.mean, zero[1].fss.mean);
    assert_eq!(zero[0].fss.counters, zero[1].fss.counters);
    assert_eq!(zero[0].scan.mean, zero[1].scan.mean);
    assert_eq!(a.scan_counters.scan_windows_max, Some(100));
    assert_eq!(a.fss_counters.fss_generation1_max, Some(22));

    let mut other = cfg.clone();
    other.seed = 11;
    assert_ne!(config_hash(&other), a.config_hash);
}
