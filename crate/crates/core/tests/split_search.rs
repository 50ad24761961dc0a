use fss_core::fss::{axis_split_search, grow_tree, prune_tree, Expansion, StopReason};
use fss_core::grid::region_sum;
use fss_core::{Axis, FssParams, Grid, PruneRule, Region, SelectionMode};
use proptest::prelude::*;

fn grid_strategy(max: usize) -> impl Strategy<Value = (Grid, Grid)> {
    (1..=max, 1..=max).prop_flat_map(|(r, c)| {
        (
            prop::collection::vec(0.0..20.0f64, r * c),
            prop::collection::vec(0.01..10.0f64, r * c),
        )
            .prop_map(move |(y, m)| (Grid::new(r, c, 0, y).unwrap(), Grid::new(r, c, 0, m).unwrap()))
    })
}

/// Every leading/trailing block of the parent along `axis`, summed cell by cell.
fn enumerate_blocks(counts: &Grid, means: &Grid, parent: &Region, axis: Axis) -> Vec<(Region, f64)> {
    let len = parent.len_along(axis);
    let mut out = Vec::new();
    for k in 0..len.saturating_sub(1) {
        let (lead, trail) = parent.split(axis, k);
        for block in [lead, trail] {
            let y = region_sum(counts, &block).unwrap();
            let m = region_sum(means, &block).unwrap();
            out.push((block, y.sqrt() - m.sqrt()));
        }
    }
    out
}

fn random_subregion(rows: usize, cols: usize, a: usize, b: usize, c: usize, d: usize) -> Region {
    let (r0, r1) = (a % rows + 1, b % rows + 1);
    let (c0, c1) = (c % cols + 1, d % cols + 1);
    Region::new(r0.min(r1), r0.max(r1), c0.min(c1), c0.max(c1)).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn axis_search_matches_exhaustive_enumeration(
        (counts, means) in grid_strategy(8),
        picks in (0usize..64, 0usize..64, 0usize..64, 0usize..64),
    ) {
        let parent = random_subregion(counts.rows(), counts.cols(), picks.0, picks.1, picks.2, picks.3);
        for axis in [Axis::Row, Axis::Column] {
            let blocks = enumerate_blocks(&counts, &means, &parent, axis);
            let found = axis_split_search(&counts, &means, &parent, axis).unwrap();
            if blocks.is_empty() {
                prop_assert!(found.is_none());
                continue;
            }
            let found = found.unwrap();
            let best = blocks.iter().map(|b| b.1).fold(f64::NEG_INFINITY, f64::max);
            prop_assert!((found.statistic - best).abs() < 1e-9, "{} vs {}", found.statistic, best);
            let direct = region_sum(&counts, &found.block).unwrap().sqrt()
                - region_sum(&means, &found.block).unwrap().sqrt();
            prop_assert!((direct - best).abs() < 1e-9);
            prop_assert_eq!(found.n_s, parent.len_along(axis) - 1);
            // first maximiser in (k, leading-before-trailing) order when the winner is clear
            let first = blocks.iter().find(|b| b.1 > best - 1e-9).unwrap();
            let runner_up = blocks.iter().filter(|b| b.0 != first.0).map(|b| b.1).fold(f64::NEG_INFINITY, f64::max);
            if best - runner_up > 1e-9 {
                prop_assert_eq!(found.block, first.0);
            }
        }
    }

    #[test]
    fn argmax_invariant_under_square_scaling(
        (counts, means) in grid_strategy(6),
        scale in 1u32..6,
    ) {
        let c2 = (scale * scale) as f64;
        let scaled = |g: &Grid| Grid::new(g.rows(), g.cols(), 0, g.values().iter().map(|v| v * c2).collect()).unwrap();
        let (sc, sm) = (scaled(&counts), scaled(&means));
        let parent = counts.config().full_region();
        for axis in [Axis::Row, Axis::Column] {
            let a = axis_split_search(&counts, &means, &parent, axis).unwrap();
            let b = axis_split_search(&sc, &sm, &parent, axis).unwrap();
            match (a, b) {
                (None, None) => {}
                (Some(a), Some(b)) => {
                    prop_assert!((b.statistic - scale as f64 * a.statistic).abs() < 1e-8);
                    let second = enumerate_blocks(&counts, &means, &parent, axis)
                        .into_iter()
                        .filter(|x| x.0 != a.block)
                        .map(|x| x.1)
                        .fold(f64::NEG_INFINITY, f64::max);
                    if a.statistic - second > 1e-9 {
                        prop_assert_eq!(a.block, b.block);
                    }
                }
                _ => prop_assert!(false, "axis availability changed"),
            }
        }
    }
}

fn params(mode: SelectionMode, h: f64) -> FssParams {
    FssParams {
        selection_mode: mode,
        prune_rule: PruneRule::constant(h),
        ..FssParams::default()
    }
}

fn mode_strategy() -> impl Strategy<Value = SelectionMode> {
    prop_oneof![Just(SelectionMode::Simple), Just(SelectionMode::Adjusted), Just(SelectionMode::Raw)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn offspring_partition_their_parent(
        (counts, means) in grid_strategy(12),
        mode in mode_strategy(),
        h in 0.0..1.0f64,
    ) {
        let tree = grow_tree(&counts, &means, &params(mode, h)).unwrap();
        prop_assert_eq!(tree.root().region, counts.config().full_region());
        for node in &tree.nodes {
            prop_assert!(node.generation <= 6);
            let Some((a, b)) = node.children else { continue };
            let (ra, rb) = (tree.nodes[a].region, tree.nodes[b].region);
            prop_assert!(ra.intersection(&rb).is_none());
            prop_assert_eq!(ra.cells() + rb.cells(), node.region.cells());
            prop_assert!(ra.intersection(&node.region) == Some(ra));
            prop_assert!(rb.intersection(&node.region) == Some(rb));
            let child_sum = tree.nodes[a].count + tree.nodes[b].count;
            prop_assert!((child_sum - node.count).abs() < 1e-9);
            prop_assert_eq!(tree.nodes[a].generation, node.generation + 1);
        }
    }

    #[test]
    fn raising_threshold_never_creates_a_signal(
        (counts, means) in grid_strategy(10),
        mode in mode_strategy(),
        h1 in 0.0..2.0f64,
        dh in 0.0..2.0f64,
    ) {
        let signalled = |h: f64| {
            let p = params(mode, h);
            let mut tree = grow_tree(&counts, &means, &p).unwrap();
            prune_tree(&mut tree, &p.prune_rule).signalled
        };
        if signalled(h1 + dh) {
            prop_assert!(signalled(h1));
        }
    }

    #[test]
    fn candidate_counters_are_bounded(
        (counts, means) in grid_strategy(12),
        mode in mode_strategy(),
    ) {
        let (a, b) = (counts.rows(), counts.cols());
        let base = params(mode, 0.0);
        let both = grow_tree(&counts, &means, &base).unwrap();
        let winner = grow_tree(&counts, &means, &FssParams { expansion: Expansion::Winner, ..base }).unwrap();
        for tree in [&both, &winner] {
            // the root is always searched at h = 0
            prop_assert_eq!(tree.candidates_by_generation[0], (a - 1) + (b - 1));
            prop_assert_eq!(tree.candidates_evaluated, tree.candidates_by_generation.iter().sum::<usize>());
        }
        prop_assert!(winner.candidates_evaluated <= 6 * (a + b - 2));
        prop_assert!(winner.candidates_evaluated <= both.candidates_evaluated);
        for n in winner.nodes.iter().filter(|n| n.stop == StopReason::NotExpanded) {
            prop_assert!(n.children.is_none());
        }
    }

    #[test]
    fn trees_are_deterministic((counts, means) in grid_strategy(10), mode in mode_strategy()) {
        let p = params(mode, 0.3);
        prop_assert_eq!(grow_tree(&counts, &means, &p).unwrap(), grow_tree(&counts, &means, &p).unwrap());
    }
}

#[test]
fn forty_by_forty_generation_one_has_78_candidates() {
    let config = fss_core::LatticeConfig::new(40, 40).unwrap();
    let means = Grid::filled(config, 0, 0.01);
    let mut counts = Grid::filled(config, 0, 0.01);
    counts.set(12, 30, 3.0);
    let tree = grow_tree(&counts, &means, &params(SelectionMode::Adjusted, 0.0)).unwrap();
    assert_eq!(tree.candidates_by_generation[0], 78);
}
