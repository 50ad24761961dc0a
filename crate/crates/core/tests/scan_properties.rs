use fss_core::grid::{region_sum, root_snr, window_mean_sum, window_sum};
use fss_core::scan::{poisson_cdf, poisson_tail, scan_day, standardized_stat, ScanMode};
use fss_core::{DailyCountStream, Grid, LatticeConfig, Region, ScanMonitor, ScanParams};
use proptest::prelude::*;

fn stream_from(config: LatticeConfig, counts: &[Vec<f64>], means: &[Vec<f64>]) -> DailyCountStream {
    let cg = counts
        .iter()
        .enumerate()
        .map(|(d, v)| Grid::new(config.rows, config.cols, d as i64 + 1, v.clone()).unwrap())
        .collect();
    let mg = means
        .iter()
        .enumerate()
        .map(|(d, v)| Grid::new(config.rows, config.cols, d as i64 + 1, v.clone()).unwrap())
        .collect();
    DailyCountStream::from_grids(cg, Some(mg)).unwrap()
}

proptest! {
    #[test]
    fn tail_and_cdf_are_complementary(y in 0u64..400, m in 0.01..300.0f64) {
        let t = poisson_tail(y, m).unwrap();
        let c = poisson_cdf(y, m).unwrap();
        prop_assert!((t + c - 1.0).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&t));
    }

    #[test]
    fn tail_monotone(y in 0u64..200, m in 0.5..150.0f64) {
        let t = poisson_tail(y, m).unwrap();
        let next = poisson_tail(y + 1, m).unwrap();
        prop_assert!(next <= t);
        let bigger = poisson_tail(y, m * 1.05).unwrap();
        prop_assert!(bigger >= t);
        // strict wherever the values are resolvable in double precision
        if t > 1e-290 && t < 1.0 - 1e-12 {
            prop_assert!(next < t);
            prop_assert!(bigger > t);
        }
    }

    #[test]
    fn root_snr_monotone(y in 0.0..1e4f64, m in 0.0..1e4f64, d in 1e-6..10.0f64) {
        let s = root_snr(y, m).unwrap();
        prop_assert!(root_snr(y + d, m).unwrap() > s);
        prop_assert!(root_snr(y, m + d).unwrap() < s);
    }

    #[test]
    fn region_sum_additive_over_splits(
        vals in prop::collection::vec(0.0..5.0f64, 7 * 9),
        k in 0usize..6,
        j in 0usize..8,
    ) {
        let g = Grid::new(7, 9, 0, vals).unwrap();
        let full = g.config().full_region();
        let (top, bottom) = full.split(fss_core::Axis::Row, k);
        let (tl, tr) = top.split(fss_core::Axis::Column, j);
        let parts = region_sum(&g, &tl).unwrap() + region_sum(&g, &tr).unwrap() + region_sum(&g, &bottom).unwrap();
        prop_assert!((parts - region_sum(&g, &full).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn window_sum_is_sum_of_days(
        days in prop::collection::vec(prop::collection::vec(0.0..4.0f64, 6 * 5), 8),
        i in 1usize..=4,
        j in 1usize..=3,
        t_days in 1usize..=5,
    ) {
        let config = LatticeConfig::new(6, 5).unwrap();
        let s = stream_from(config, &days, &days);
        let region = Region::new(i, i + 2, j, j + 2).unwrap();
        let t = 8i64;
        let direct: f64 = (t - t_days as i64 + 1..=t)
            .map(|d| region_sum(s.counts_at(d).unwrap(), &region).unwrap())
            .sum();
        let w = window_sum(&s, i, j, t, 3, 3, t_days).unwrap();
        prop_assert!((w - direct).abs() < 1e-9);
        let wm = window_mean_sum(&s, i, j, t, 3, 3, t_days).unwrap();
        prop_assert!((wm - direct).abs() < 1e-9);
    }

    #[test]
    fn scan_matches_brute_force_windows(
        counts in prop::collection::vec(prop::collection::vec(0.0..3.0f64, 7 * 6), 4),
        means in prop::collection::vec(prop::collection::vec(0.05..2.0f64, 7 * 6), 4),
    ) {
        let config = LatticeConfig::new(7, 6).unwrap();
        let s = stream_from(config, &counts, &means);
        let params = ScanParams { m1: 3, m2: 2, window_days: 3, threshold: 2.0, mode: ScanMode::Standardized };
        let r = scan_day(&s, &params, 4).unwrap();
        prop_assert_eq!(r.windows_evaluated, (7 - 3 + 1) * (6 - 2 + 1));
        let mut best = f64::NEG_INFINITY;
        for i in 1..=5 {
            for j in 1..=5 {
                let y = window_sum(&s, i, j, 4, 3, 2, 3).unwrap();
                let m = window_mean_sum(&s, i, j, 4, 3, 2, 3).unwrap();
                let z = standardized_stat(y, m).unwrap();
                prop_assert!((r.statistic_at(i, j) - z).abs() < 1e-9);
                best = best.max(z);
            }
        }
        prop_assert!((r.best_statistic - best).abs() < 1e-9);
        prop_assert_eq!(r.signalled, best > 2.0);
    }

    #[test]
    fn outbreak_shift_moves_the_argmax(r in 0usize..=6, c in 0usize..=5) {
        let config = LatticeConfig::new(14, 12).unwrap();
        let base = vec![1.0; 14 * 12];
        let mut day = base.clone();
        for dr in 0..3 {
            for dc in 0..3 {
                day[(2 + r + dr - 1) * 12 + (2 + c + dc - 1)] += 6.0;
            }
        }
        let s = stream_from(config, &[day], &[base]);
        let params = ScanParams { m1: 3, m2: 3, window_days: 1, threshold: 1.0, mode: ScanMode::Standardized };
        let res = scan_day(&s, &params, 1).unwrap();
        prop_assert_eq!(res.best_window, Some(Region::new(2 + r, 4 + r, 2 + c, 4 + c).unwrap()));
    }
}

#[test]
fn forty_by_forty_scan_evaluates_961_windows() {
    let config = LatticeConfig::new(40, 40).unwrap();
    let mut m = ScanMonitor::new(ScanParams::default(), config).unwrap();
    let means = Grid::filled(config, 0, 0.01);
    let mut seen = 0;
    for d in 1..=12 {
        let mut counts = Grid::zeros(config, d);
        counts.set(1 + d as usize, 3, 1.0);
        let mut mg = means.clone();
        mg.set_day(d);
        if let Some(r) = m.push(&counts, &mg).unwrap() {
            assert_eq!(r.windows_evaluated, 961);
            assert_eq!(r.statistics.len(), 961);
            seen += 1;
        }
    }
    assert_eq!(seen, 3);
}

#[test]
fn tail_mode_signals_below_threshold() {
    let config = LatticeConfig::new(3, 3).unwrap();
    let mut day = vec![1.0; 9];
    day[4] = 12.0;
    let s = stream_from(config, &[day], &[vec![1.0; 9]]);
    let params = ScanParams { m1: 1, m2: 1, window_days: 1, threshold: 1e-4, mode: ScanMode::TailProbability };
    let r = scan_day(&s, &params, 1).unwrap();
    assert!(r.signalled);
    assert_eq!(r.best_window, Some(Region::new(2, 2, 2, 2).unwrap()));
    assert!((r.best_statistic - poisson_tail(12, 1.0).unwrap()).abs() < 1e-15);
}
