//! Replay of the 10 x 10 partitioning example (cell means 3, outbreak cells
//! at mean 6) from its row and column totals, in simple selection mode.

use std::fmt::Write as _;

use serde::Serialize;

use crate::fss::{best_block, BlockCandidate, BlockCriterion, Side};
use crate::grid::{Axis, Region};

/// Decimal places at which tail probabilities are compared.
pub const EXAMPLE_DECIMALS: u32 = 7;

/// A block as narrated: count, expected value, and the p-value or
/// standardised score as printed (value, decimals).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NarratedBlock {
    pub count: f64,
    pub expected: f64,
    pub p: Option<(f64, u32)>,
    pub z: Option<(f64, u32)>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExampleStep {
    pub generation: usize,
    pub label: &'static str,
    pub parent: Region,
    pub row_totals: Vec<f64>,
    pub col_totals: Vec<f64>,
    /// Expected count per row line and per column line of the parent.
    pub row_expected: f64,
    pub col_expected: f64,
    pub axis: Axis,
    pub block: Region,
    pub chosen: NarratedBlock,
    pub other: Option<NarratedBlock>,
}

fn region(r0: usize, r1: usize, c0: usize, c1: usize) -> Region {
    Region::new(r0, r1, c0, c1).expect("static region")
}

fn nb(count: f64, expected: f64, p: Option<(f64, u32)>, z: Option<(f64, u32)>) -> NarratedBlock {
    NarratedBlock { count, expected, p, z }
}

/// The narrated steps. Offspring 4 of generation 3 (row 10) has column
/// totals obtained as generation-2 offspring 2's column totals minus those of
/// generation-3 offspring 3. In generation 4 the printed row totals are the
/// full-width ones, so the row block's expected value is 2 x 8 x 3 = 48.
pub fn worked_example_steps() -> Vec<ExampleStep> {
    vec![
        ExampleStep {
            generation: 1,
            label: "whole lattice",
            parent: region(1, 10, 1, 10),
            row_totals: vec![33.0, 49.0, 37.0, 55.0, 23.0, 24.0, 24.0, 22.0, 25.0, 30.0],
            col_totals: vec![26.0, 35.0, 32.0, 38.0, 34.0, 34.0, 33.0, 41.0, 28.0, 21.0],
            row_expected: 30.0,
            col_expected: 30.0,
            axis: Axis::Row,
            block: region(1, 4, 1, 10),
            chosen: nb(174.0, 120.0, Some((0.0000015, 7)), None),
            other: Some(nb(273.0, 240.0, Some((0.0167785, 7)), None)),
        },
        ExampleStep {
            generation: 2,
            label: "offspring 1",
            parent: region(1, 4, 1, 10),
            row_totals: vec![33.0, 49.0, 37.0, 55.0],
            col_totals: vec![16.0, 19.0, 13.0, 22.0, 18.0, 21.0, 21.0, 24.0, 11.0, 9.0],
            row_expected: 30.0,
            col_expected: 12.0,
            axis: Axis::Column,
            block: region(1, 4, 1, 8),
            chosen: nb(154.0, 96.0, Some((0.0, 7)), None),
            other: Some(nb(141.0, 90.0, Some((0.0000003, 7)), None)),
        },
        ExampleStep {
            generation: 2,
            label: "offspring 2",
            parent: region(5, 10, 1, 10),
            row_totals: vec![23.0, 24.0, 24.0, 22.0, 25.0, 30.0],
            col_totals: vec![10.0, 16.0, 19.0, 16.0, 16.0, 13.0, 12.0, 17.0, 17.0, 12.0],
            row_expected: 30.0,
            col_expected: 18.0,
            axis: Axis::Row,
            block: region(10, 10, 1, 10),
            chosen: nb(30.0, 30.0, Some((0.452, 3)), None),
            other: Some(nb(46.0, 54.0, Some((0.847, 3)), None)),
        },
        ExampleStep {
            generation: 3,
            label: "offspring 1",
            parent: region(1, 4, 1, 8),
            row_totals: vec![27.0, 45.0, 32.0, 50.0],
            col_totals: vec![16.0, 19.0, 13.0, 22.0, 18.0, 21.0, 21.0, 24.0],
            row_expected: 24.0,
            col_expected: 12.0,
            axis: Axis::Row,
            block: region(2, 4, 1, 8),
            chosen: nb(127.0, 72.0, Some((0.0, 7)), Some((6.48, 2))),
            other: Some(nb(106.0, 60.0, Some((0.0, 7)), Some((5.94, 2)))),
        },
        ExampleStep {
            generation: 3,
            label: "offspring 2",
            parent: region(1, 4, 9, 10),
            row_totals: vec![6.0, 4.0, 5.0, 5.0],
            col_totals: vec![11.0, 9.0],
            row_expected: 6.0,
            col_expected: 12.0,
            axis: Axis::Row,
            block: region(1, 1, 9, 10),
            chosen: nb(6.0, 6.0, Some((0.39, 2)), None),
            other: Some(nb(11.0, 12.0, Some((0.538, 3)), None)),
        },
        ExampleStep {
            generation: 3,
            label: "offspring 3",
            parent: region(5, 9, 1, 10),
            row_totals: vec![23.0, 24.0, 24.0, 22.0, 25.0],
            col_totals: vec![8.0, 13.0, 13.0, 16.0, 10.0, 13.0, 10.0, 15.0, 12.0, 8.0],
            row_expected: 30.0,
            col_expected: 15.0,
            axis: Axis::Row,
            block: region(9, 9, 1, 10),
            chosen: nb(25.0, 30.0, Some((0.792, 3)), None),
            other: Some(nb(50.0, 60.0, Some((0.892, 3)), None)),
        },
        ExampleStep {
            generation: 3,
            label: "offspring 4",
            parent: region(10, 10, 1, 10),
            row_totals: vec![30.0],
            col_totals: vec![2.0, 3.0, 6.0, 0.0, 6.0, 0.0, 2.0, 2.0, 5.0, 4.0],
            row_expected: 30.0,
            col_expected: 3.0,
            axis: Axis::Column,
            block: region(10, 10, 9, 10),
            chosen: nb(9.0, 6.0, Some((0.083924, 6)), None),
            other: None,
        },
        ExampleStep {
            generation: 4,
            label: "outbreak offspring",
            parent: region(2, 4, 1, 8),
            row_totals: vec![49.0, 37.0, 55.0],
            col_totals: vec![12.0, 12.0, 11.0, 19.0, 17.0, 17.0, 19.0, 20.0],
            row_expected: 24.0,
            col_expected: 9.0,
            axis: Axis::Column,
            block: region(2, 4, 4, 8),
            chosen: nb(92.0, 45.0, Some((0.0, 7)), Some((7.01, 2))),
            other: Some(nb(92.0, 48.0, Some((0.0, 7)), None)),
        },
    ]
}

/// Best block on one axis as computed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ComputedBlock {
    pub axis: Axis,
    pub block: Region,
    pub count: f64,
    pub expected: f64,
    pub p: f64,
    pub z: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepOutcome {
    pub generation: usize,
    pub label: &'static str,
    pub chosen: ComputedBlock,
    pub other: Option<ComputedBlock>,
    pub mismatches: Vec<String>,
}

impl StepOutcome {
    pub fn agrees(&self) -> bool {
        self.mismatches.is_empty()
    }
}

fn axis_best(step: &ExampleStep, axis: Axis) -> Option<ComputedBlock> {
    let (totals, per_line) = match axis {
        Axis::Row => (&step.row_totals, step.row_expected),
        Axis::Column => (&step.col_totals, step.col_expected),
    };
    let means = vec![per_line; totals.len()];
    let c = best_block(totals, &means, BlockCriterion::PValue { decimals: EXAMPLE_DECIMALS })?;
    let (lead, trail) = step.parent.split(axis, c.k);
    Some(ComputedBlock {
        axis,
        block: if c.side == Side::Leading { lead } else { trail },
        count: c.count,
        expected: c.mean,
        p: c.p_value(),
        z: c.z_score(),
    })
}

fn as_candidate(b: &ComputedBlock) -> BlockCandidate {
    BlockCandidate {
        k: 0,
        side: Side::Leading,
        count: b.count,
        mean: b.expected,
    }
}

fn check_block(what: &str, got: &ComputedBlock, want: &NarratedBlock, out: &mut Vec<String>) {
    if got.count != want.count || got.expected != want.expected {
        out.push(format!(
            "{what}: {} vs {} where {} vs {} was narrated",
            got.count, got.expected, want.count, want.expected
        ));
    }
    if let Some((p, d)) = want.p {
        let scale = 10f64.powi(d as i32);
        if (got.p * scale).round() != (p * scale).round() {
            out.push(format!("{what}: p-value {:.*} where {p:.*} was narrated", d as usize, got.p, d as usize));
        }
    }
    if let Some((z, d)) = want.z {
        let scale = 10f64.powi(d as i32);
        if (got.z * scale).round() != (z * scale).round() {
            out.push(format!("{what}: score {:.*} where {z:.*} was narrated", d as usize, got.z, d as usize));
        }
    }
}

/// Runs one step: best block per axis, then the axis with the smaller
/// rounded p-value (larger standardised score on ties, rows on full ties).
pub fn replay_step(step: &ExampleStep) -> StepOutcome {
    let row = axis_best(step, Axis::Row);
    let col = axis_best(step, Axis::Column);
    let (chosen, other) = match (row, col) {
        (Some(r), Some(c)) => {
            let take_col = {
                let (a, b) = (as_candidate(&c), as_candidate(&r));
                crate::fss::better_pvalue(&a, &b, EXAMPLE_DECIMALS)
            };
            if take_col {
                (c, Some(r))
            } else {
                (r, Some(c))
            }
        }
        (Some(r), None) => (r, None),
        (None, Some(c)) => (c, None),
        (None, None) => unreachable!("example parents have at least two cells"),
    };
    let mut mismatches = Vec::new();
    if chosen.axis != step.axis {
        mismatches.push(format!("split on {} where {} was narrated", chosen.axis, step.axis));
    }
    if chosen.block != step.block {
        mismatches.push(format!("block {} where {} was narrated", chosen.block, step.block));
    }
    check_block("chosen block", &chosen, &step.chosen, &mut mismatches);
    match (&other, &step.other) {
        (Some(got), Some(want)) => check_block("other axis", got, want, &mut mismatches),
        (None, None) => {}
        (got, _) => mismatches.push(format!(
            "other axis {} where narration {}",
            if got.is_some() { "available" } else { "unavailable" },
            if step.other.is_some() { "has one" } else { "has none" }
        )),
    }
    StepOutcome {
        generation: step.generation,
        label: step.label,
        chosen,
        other,
        mismatches,
    }
}

pub fn replay_worked_example() -> Vec<StepOutcome> {
    worked_example_steps().iter().map(replay_step).collect()
}

fn describe(b: &ComputedBlock) -> String {
    format!(
        "{} split, block {}, count {} vs expected {}, p = {:.7}, z = {:.2}",
        b.axis, b.block, b.count, b.expected, b.p, b.z
    )
}

pub fn transcript(outcomes: &[StepOutcome]) -> String {
    let mut out = String::new();
    for o in outcomes {
        let _ = writeln!(out, "generation {} {}: {}", o.generation, o.label, describe(&o.chosen));
        if let Some(other) = &o.other {
            let _ = writeln!(out, "    other axis: {}", describe(other));
        }
        for m in &o.mismatches {
            let _ = writeln!(out, "    MISMATCH {m}");
        }
    }
    out
}
