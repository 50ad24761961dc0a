//! Forward selection scan: greedy binary partitioning of the lattice into
//! rectangles with unusually high smoothed counts, followed by pruning.
//!
//! Each parent region is split either along rows or along columns into a
//! leading block (the first `k + 1` lines) and a trailing block. Within an
//! axis the candidate blocks are ranked by root signal-to-noise
//! `sqrt(Y) - sqrt(M)` of their summed smoothed counts `Y` and means `M`; the
//! axis is then chosen by one of the [`SelectionMode`]s. Growth stops when the
//! parent is too small to ever survive pruning, when no block improves on the
//! parent, or at the generation limit.

use serde::{Deserialize, Serialize};

use crate::dof::DofModel;
use crate::error::{Error, Result};
use crate::grid::{parent_z, Axis, Grid, Region, SummedArea};
use crate::scan::{poisson_tail, standardized_stat, WindowJson};
use crate::smoothing::{SmoothState, SmoothingParams, SpatialSmoother};

/// Pruning threshold `h(M) = intercept + slope * M`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PruneRule {
    pub intercept: f64,
    pub slope: f64,
}

impl PruneRule {
    pub fn constant(h: f64) -> Self {
        Self {
            intercept: h,
            slope: 0.0,
        }
    }

    pub fn threshold(&self, mean: f64) -> f64 {
        self.intercept + self.slope * mean
    }
}

impl Default for PruneRule {
    fn default() -> Self {
        Self::constant(1.3)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SelectionMode {
    /// Raw counts: blocks and axes ranked by Poisson tail probability at a
    /// fixed decimal precision, equal p-values broken by standardised score.
    Simple,
    /// Axis with the larger degrees-of-freedom adjusted score wins.
    Adjusted,
    /// Axis with the larger raw statistic wins (`R_max > C_max` picks rows).
    /// This is the selection used while collecting bootstrap records.
    Raw,
}

/// Which offspring of a split are searched in the next generation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Expansion {
    /// Both offspring, breadth-first.
    #[default]
    Both,
    /// Only the offspring holding the chosen block; at most one search of
    /// `(A-1)+(B-1)` candidates per generation.
    Winner,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FssParams {
    pub smoothing: SmoothingParams,
    pub max_generations: usize,
    pub prune_rule: PruneRule,
    pub selection_mode: SelectionMode,
    pub dof_model: Option<DofModel>,
    pub sd_floor: f64,
    /// Decimal places at which simple-mode p-values are compared.
    pub pvalue_decimals: u32,
    pub expansion: Expansion,
}

impl Default for FssParams {
    fn default() -> Self {
        Self {
            smoothing: SmoothingParams::default(),
            max_generations: 6,
            prune_rule: PruneRule::default(),
            selection_mode: SelectionMode::Adjusted,
            dof_model: Some(DofModel::published()),
            sd_floor: 0.25,
            pvalue_decimals: 7,
            expansion: Expansion::Both,
        }
    }
}

impl FssParams {
    pub fn validate(&self) -> Result<()> {
        self.smoothing.validate()?;
        if self.max_generations == 0 {
            return Err(Error::Parameter("max_generations must be at least 1".into()));
        }
        if !(self.sd_floor > 0.0) {
            return Err(Error::Parameter(format!("sd_floor must be positive, got {}", self.sd_floor)));
        }
        if !(self.prune_rule.intercept.is_finite() && self.prune_rule.slope.is_finite()) {
            return Err(Error::Parameter("prune rule coefficients must be finite".into()));
        }
        if self.selection_mode == SelectionMode::Adjusted && self.dof_model.is_none() {
            return Err(Error::Parameter("adjusted selection needs a DOF model".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    /// First offspring: lines `0..=k` of the parent.
    Leading,
    /// Second offspring: lines `k+1..` of the parent.
    Trailing,
}

/// Best block found along one axis of a parent region.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxisSearch {
    pub axis: Axis,
    pub k: usize,
    pub side: Side,
    /// Root signal-to-noise of the chosen block (`R_1k`, `R_2k`, `C_1k` or `C_2k`).
    pub statistic: f64,
    pub block: Region,
    pub block_count: f64,
    pub block_mean: f64,
    /// Number of candidate split positions along the axis (`len - 1`).
    pub n_s: usize,
}

/// Covariates conditioning the best-split statistic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitCovariates {
    pub n_s: usize,
    /// Offspring (block) smoothed expected count.
    pub mu: f64,
    pub mu_p: f64,
    pub c_p: f64,
    pub z_p: f64,
}

impl SplitCovariates {
    pub fn for_block(search: &AxisSearch, parent_count: f64, parent_mean: f64) -> Self {
        Self {
            n_s: search.n_s,
            mu: search.block_mean,
            mu_p: parent_mean,
            c_p: parent_count,
            z_p: parent_z(parent_count, parent_mean).unwrap_or(0.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitStatistics {
    pub axis: Axis,
    pub k: usize,
    pub side: Side,
    /// Raw statistic of the chosen block.
    pub statistic: f64,
    pub block: Region,
    pub block_count: f64,
    pub block_mean: f64,
    pub row_max: Option<f64>,
    pub col_max: Option<f64>,
    /// `max(R_max, C_max)` over the available axes.
    pub p_max: f64,
    pub adjusted_score: Option<f64>,
    pub covariates: SplitCovariates,
    pub row: Option<AxisSearch>,
    pub column: Option<AxisSearch>,
}

/// `(X - E(X)) / max(sqrt(Var(X)), sd_floor)` under `model`.
pub fn adjusted_score(x: f64, cov: &SplitCovariates, model: &DofModel, sd_floor: f64) -> f64 {
    let (mean, var) = model.predict(cov);
    (x - mean) / var.sqrt().max(sd_floor)
}

/// How candidate blocks along one axis are ranked.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BlockCriterion {
    RootSnr,
    /// Smallest tail probability rounded to `decimals`, ties by larger
    /// standardised score.
    PValue { decimals: u32 },
}

/// One candidate block along an axis, described by its 1-D extent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockCandidate {
    pub k: usize,
    pub side: Side,
    pub count: f64,
    pub mean: f64,
}

impl BlockCandidate {
    pub fn root_snr(&self) -> f64 {
        self.count.sqrt() - self.mean.sqrt()
    }

    /// Strict upper tail of the (rounded) block count; 1 when the mean is 0.
    pub fn p_value(&self) -> f64 {
        if self.mean > 0.0 {
            poisson_tail(self.count.round().max(0.0) as u64, self.mean).unwrap_or(1.0)
        } else {
            1.0
        }
    }

    pub fn z_score(&self) -> f64 {
        standardized_stat(self.count, self.mean).unwrap_or(if self.count > 0.0 {
            f64::INFINITY
        } else {
            0.0
        })
    }

    /// `(rounded p-value, -z)`, smaller is more unusual.
    fn pvalue_key(&self, decimals: u32) -> (i64, f64) {
        let scale = 10f64.powi(decimals as i32);
        ((self.p_value() * scale).round() as i64, -self.z_score())
    }
}

pub(crate) fn better_pvalue(a: &BlockCandidate, b: &BlockCandidate, decimals: u32) -> bool {
    let (pa, za) = a.pvalue_key(decimals);
    let (pb, zb) = b.pvalue_key(decimals);
    pa < pb || (pa == pb && za < zb)
}

/// Best leading/trailing block from per-line totals of one axis. Candidates
/// are visited by increasing `k`, leading before trailing; a later candidate
/// replaces the incumbent only when strictly better.
pub fn best_block(
    count_totals: &[f64],
    mean_totals: &[f64],
    criterion: BlockCriterion,
) -> Option<BlockCandidate> {
    assert_eq!(count_totals.len(), mean_totals.len());
    let len = count_totals.len();
    if len < 2 {
        return None;
    }
    let total_c: f64 = count_totals.iter().sum();
    let total_m: f64 = mean_totals.iter().sum();
    let mut lead_c = 0.0;
    let mut lead_m = 0.0;
    let mut best: Option<BlockCandidate> = None;
    for k in 0..len - 1 {
        lead_c += count_totals[k];
        lead_m += mean_totals[k];
        let leading = BlockCandidate {
            k,
            side: Side::Leading,
            count: lead_c,
            mean: lead_m,
        };
        let trailing = BlockCandidate {
            k,
            side: Side::Trailing,
            count: (total_c - lead_c).max(0.0),
            mean: (total_m - lead_m).max(0.0),
        };
        for cand in [leading, trailing] {
            let replace = match (&best, criterion) {
                (None, _) => true,
                (Some(b), BlockCriterion::RootSnr) => cand.root_snr() > b.root_snr(),
                (Some(b), BlockCriterion::PValue { decimals }) => better_pvalue(&cand, b, decimals),
            };
            if replace {
                best = Some(cand);
            }
        }
    }
    best
}

/// Summed-area tables of a (smoothed) count grid and its mean grid.
#[derive(Debug, Clone)]
pub struct RegionSums {
    counts: SummedArea,
    means: SummedArea,
}

impl RegionSums {
    pub fn new(counts: &Grid, means: &Grid) -> Result<Self> {
        means.ensure_shape(counts.config())?;
        Ok(Self {
            counts: SummedArea::new(counts),
            means: SummedArea::new(means),
        })
    }

    pub fn count(&self, region: &Region) -> f64 {
        self.counts.sum(region)
    }

    pub fn mean(&self, region: &Region) -> f64 {
        self.means.sum(region)
    }

    /// Per-line (count, mean) totals of `region` along `axis`.
    pub fn axis_totals(&self, region: &Region, axis: Axis) -> (Vec<f64>, Vec<f64>) {
        let (r0, r1, c0, c1) = (
            region.row_start(),
            region.row_end(),
            region.col_start(),
            region.col_end(),
        );
        match axis {
            Axis::Row => (r0..=r1)
                .map(|r| (self.counts.sum_bounds(r, r, c0, c1), self.means.sum_bounds(r, r, c0, c1)))
                .unzip(),
            Axis::Column => (c0..=c1)
                .map(|c| (self.counts.sum_bounds(r0, r1, c, c), self.means.sum_bounds(r0, r1, c, c)))
                .unzip(),
        }
    }

    pub fn search(&self, parent: &Region, axis: Axis, criterion: BlockCriterion) -> Option<AxisSearch> {
        let (counts, means) = self.axis_totals(parent, axis);
        let cand = best_block(&counts, &means, criterion)?;
        let (lead, trail) = parent.split(axis, cand.k);
        let block = match cand.side {
            Side::Leading => lead,
            Side::Trailing => trail,
        };
        Some(AxisSearch {
            axis,
            k: cand.k,
            side: cand.side,
            statistic: cand.root_snr(),
            block,
            block_count: cand.count,
            block_mean: cand.mean,
            n_s: counts.len() - 1,
        })
    }

    /// Largest root signal-to-noise over every candidate block on both axes.
    fn max_block_snr(&self, parent: &Region) -> Option<f64> {
        [Axis::Row, Axis::Column]
            .into_iter()
            .filter_map(|a| self.search(parent, a, BlockCriterion::RootSnr))
            .map(|s| s.statistic)
            .reduce(f64::max)
    }
}

/// Best root-SNR block along `axis` of `parent`; `None` when the parent is
/// a single line along that axis.
pub fn axis_split_search(
    counts: &Grid,
    means: &Grid,
    parent: &Region,
    axis: Axis,
) -> Result<Option<AxisSearch>> {
    parent.check_within(counts.config())?;
    let sums = RegionSums::new(counts, means)?;
    Ok(sums.search(parent, axis, BlockCriterion::RootSnr))
}

fn choose_with_sums(sums: &RegionSums, parent: &Region, params: &FssParams) -> Option<SplitStatistics> {
    let criterion = match params.selection_mode {
        SelectionMode::Simple => BlockCriterion::PValue {
            decimals: params.pvalue_decimals,
        },
        SelectionMode::Adjusted | SelectionMode::Raw => BlockCriterion::RootSnr,
    };
    let row = sums.search(parent, Axis::Row, criterion);
    let column = sums.search(parent, Axis::Column, criterion);
    if row.is_none() && column.is_none() {
        return None;
    }

    let c_p = sums.count(parent);
    let mu_p = sums.mean(parent);
    let parent_snr = c_p.sqrt() - mu_p.sqrt();
    let improves = match criterion {
        BlockCriterion::RootSnr => row
            .iter()
            .chain(column.iter())
            .map(|s| s.statistic)
            .fold(f64::NEG_INFINITY, f64::max),
        BlockCriterion::PValue { .. } => sums.max_block_snr(parent).unwrap_or(f64::NEG_INFINITY),
    } > parent_snr;
    if !improves {
        return None;
    }

    let score = |s: &AxisSearch| -> Option<f64> {
        let model = params.dof_model.as_ref()?;
        let cov = SplitCovariates::for_block(s, c_p, mu_p);
        Some(adjusted_score(s.statistic, &cov, model, params.sd_floor))
    };
    let row_score = row.as_ref().and_then(score);
    let col_score = column.as_ref().and_then(score);

    let chosen = match (&row, &column) {
        (Some(r), None) => *r,
        (None, Some(c)) => *c,
        (Some(r), Some(c)) => {
            let take_column = match params.selection_mode {
                SelectionMode::Raw => c.statistic > r.statistic,
                SelectionMode::Adjusted => col_score.unwrap_or(f64::NEG_INFINITY)
                    > row_score.unwrap_or(f64::NEG_INFINITY),
                SelectionMode::Simple => {
                    let as_cand = |s: &AxisSearch| BlockCandidate {
                        k: s.k,
                        side: s.side,
                        count: s.block_count,
                        mean: s.block_mean,
                    };
                    better_pvalue(&as_cand(c), &as_cand(r), params.pvalue_decimals)
                }
            };
            if take_column {
                *c
            } else {
                *r
            }
        }
        (None, None) => unreachable!(),
    };
    let row_max = row.map(|s| s.statistic);
    let col_max = column.map(|s| s.statistic);
    Some(SplitStatistics {
        axis: chosen.axis,
        k: chosen.k,
        side: chosen.side,
        statistic: chosen.statistic,
        block: chosen.block,
        block_count: chosen.block_count,
        block_mean: chosen.block_mean,
        row_max,
        col_max,
        p_max: row_max.into_iter().chain(col_max).fold(f64::NEG_INFINITY, f64::max),
        adjusted_score: match chosen.axis {
            Axis::Row => row_score,
            Axis::Column => col_score,
        },
        covariates: SplitCovariates::for_block(&chosen, c_p, mu_p),
        row,
        column,
    })
}

/// Picks the partition of `parent`, or `None` when no block is more unusual
/// than the parent itself.
pub fn choose_partition(
    counts: &Grid,
    means: &Grid,
    parent: &Region,
    params: &FssParams,
) -> Result<Option<SplitStatistics>> {
    params.validate()?;
    parent.check_within(counts.config())?;
    let sums = RegionSums::new(counts, means)?;
    Ok(choose_with_sums(&sums, parent, params))
}

/// Why a node produced no offspring.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    /// The node was split.
    Split,
    /// `sqrt(Y) < h(min cell mean)`: no descendant could survive pruning.
    LowCount,
    /// No block improves on the parent's root signal-to-noise.
    NoImprovement,
    MaxGeneration,
    /// A single cell cannot be partitioned.
    SingleCell,
    /// Remainder offspring under winner-only expansion.
    NotExpanded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionNode {
    pub region: Region,
    pub generation: usize,
    pub count: f64,
    pub mean: f64,
    pub split: Option<SplitStatistics>,
    pub children: Option<(usize, usize)>,
    pub parent: Option<usize>,
    pub stop: StopReason,
    pub pruned: bool,
}

impl PartitionNode {
    pub fn root_snr(&self) -> f64 {
        self.count.sqrt() - self.mean.sqrt()
    }
}

/// Nodes in breadth-first order; index 0 is the root (generation 0, the whole
/// lattice). Splitting a generation-`g` node produces generation `g + 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionTree {
    pub day: i64,
    pub nodes: Vec<PartitionNode>,
    /// Split positions examined, summed over both axes of every searched node.
    pub candidates_evaluated: usize,
    /// `candidates_by_generation[g]` counts positions examined while producing
    /// generation `g + 1`.
    pub candidates_by_generation: Vec<usize>,
}

impl PartitionTree {
    pub fn root(&self) -> &PartitionNode {
        &self.nodes[0]
    }

    pub fn depth(&self) -> usize {
        self.nodes.iter().map(|n| n.generation).max().unwrap_or(0)
    }
}

pub(crate) fn grow_with_sums(
    sums: &RegionSums,
    means: &Grid,
    params: &FssParams,
    day: i64,
) -> PartitionTree {
    let root_region = means.config().full_region();
    let mut nodes = vec![PartitionNode {
        region: root_region,
        generation: 0,
        count: sums.count(&root_region),
        mean: sums.mean(&root_region),
        split: None,
        children: None,
        parent: None,
        stop: StopReason::MaxGeneration,
        pruned: false,
    }];
    let mut candidates_by_generation = vec![0; params.max_generations];
    let mut next = 0;
    while next < nodes.len() {
        let idx = next;
        next += 1;
        let node = &nodes[idx];
        let region = node.region;
        let generation = node.generation;
        if node.stop == StopReason::NotExpanded {
            continue;
        }
        if generation >= params.max_generations {
            nodes[idx].stop = StopReason::MaxGeneration;
            continue;
        }
        if region.cells() == 1 {
            nodes[idx].stop = StopReason::SingleCell;
            continue;
        }
        let floor = params.prune_rule.threshold(means.region_min(&region));
        if node.count.sqrt() < floor {
            nodes[idx].stop = StopReason::LowCount;
            continue;
        }
        candidates_by_generation[generation] += (region.n_rows() - 1) + (region.n_cols() - 1);
        let Some(split) = choose_with_sums(sums, &region, params) else {
            nodes[idx].stop = StopReason::NoImprovement;
            continue;
        };
        let (lead, trail) = region.split(split.axis, split.k);
        let first = nodes.len();
        for child in [lead, trail] {
            let stop = if params.expansion == Expansion::Winner && child != split.block {
                StopReason::NotExpanded
            } else {
                StopReason::MaxGeneration
            };
            nodes.push(PartitionNode {
                region: child,
                generation: generation + 1,
                count: sums.count(&child),
                mean: sums.mean(&child),
                split: None,
                children: None,
                parent: Some(idx),
                stop,
                pruned: false,
            });
        }
        let node = &mut nodes[idx];
        node.split = Some(split);
        node.children = Some((first, first + 1));
        node.stop = StopReason::Split;
    }
    PartitionTree {
        day,
        nodes,
        candidates_evaluated: candidates_by_generation.iter().sum(),
        candidates_by_generation,
    }
}

/// Grows the partition tree breadth-first from the whole lattice.
pub fn grow_tree(counts: &Grid, means: &Grid, params: &FssParams) -> Result<PartitionTree> {
    params.validate()?;
    let sums = RegionSums::new(counts, means)?;
    Ok(grow_with_sums(&sums, means, params, counts.day()))
}

/// A region that survived pruning with no surviving descendant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurvivingRegion {
    pub region: Region,
    pub snr: f64,
    pub count: f64,
    pub mean: f64,
    pub generation: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalReport {
    pub day: i64,
    pub signalled: bool,
    pub regions: Vec<SurvivingRegion>,
    pub candidates_evaluated: usize,
    pub candidates_by_generation: Vec<usize>,
    pub generations: usize,
    pub nodes: usize,
}

impl SignalReport {
    pub fn record(&self) -> FssRecord {
        FssRecord {
            day: self.day,
            signalled: self.signalled,
            regions: self
                .regions
                .iter()
                .map(|r| RegionJson {
                    window: r.region.into(),
                    snr: r.snr,
                    mean: r.mean,
                })
                .collect(),
            candidates_evaluated: self.candidates_evaluated,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionJson {
    #[serde(flatten)]
    pub window: WindowJson,
    pub snr: f64,
    pub mean: f64,
}

/// One JSON line of FSS output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FssRecord {
    pub day: i64,
    pub signalled: bool,
    pub regions: Vec<RegionJson>,
    pub candidates_evaluated: usize,
}

/// Marks every node with `sqrt(Y) - sqrt(M) < h(M)` as pruned and reports the
/// deepest survivors.
pub fn prune_tree(tree: &mut PartitionTree, rule: &PruneRule) -> SignalReport {
    let n = tree.nodes.len();
    for node in &mut tree.nodes {
        node.pruned = node.root_snr() < rule.threshold(node.mean);
    }
    // children always follow their parent, so a reverse sweep sees them first
    let mut survivor_below = vec![false; n];
    for idx in (0..n).rev() {
        if let Some(parent) = tree.nodes[idx].parent {
            if !tree.nodes[idx].pruned || survivor_below[idx] {
                survivor_below[parent] = true;
            }
        }
    }
    let regions: Vec<SurvivingRegion> = tree
        .nodes
        .iter()
        .enumerate()
        .filter(|(i, node)| !node.pruned && !survivor_below[*i])
        .map(|(_, node)| SurvivingRegion {
            region: node.region,
            snr: node.root_snr(),
            count: node.count,
            mean: node.mean,
            generation: node.generation,
        })
        .collect();
    SignalReport {
        day: tree.day,
        signalled: !regions.is_empty(),
        regions,
        candidates_evaluated: tree.candidates_evaluated,
        candidates_by_generation: tree.candidates_by_generation.clone(),
        generations: tree.depth(),
        nodes: n,
    }
}

/// Whether any node of the tree survives `rule`, without building a report.
pub(crate) fn any_survivor(tree: &PartitionTree, rule: &PruneRule) -> bool {
    tree.nodes
        .iter()
        .any(|node| node.root_snr() >= rule.threshold(node.mean))
}

/// One day of the full plan: EWMA, spatial smoothing of counts and means,
/// tree growth and pruning.
pub fn fss_day(
    state: &SmoothState,
    counts: &Grid,
    means: &Grid,
    params: &FssParams,
) -> Result<(SmoothState, SignalReport)> {
    params.validate()?;
    let mut next = state.clone();
    next.update(counts, means, params.smoothing.alpha)?;
    let smoother = SpatialSmoother::new(next.config(), params.smoothing.lambda)?;
    let y = smoother.smooth(&next.ewma_counts)?;
    let m = smoother.smooth(&next.ewma_means)?;
    let mut tree = grow_tree(&y, &m, params)?;
    let report = prune_tree(&mut tree, &params.prune_rule);
    Ok((next, report))
}

/// Stateful daily FSS runner that reuses kernels and buffers across days.
#[derive(Debug, Clone)]
pub struct FssMonitor {
    params: FssParams,
    smoother: SpatialSmoother,
    state: Option<SmoothState>,
    smoothed_counts: Grid,
    smoothed_means: Grid,
    means_cache: Option<Vec<f64>>,
    scratch: Vec<f64>,
}

impl FssMonitor {
    pub fn new(params: FssParams, config: crate::grid::LatticeConfig) -> Result<Self> {
        params.validate()?;
        let smoother = SpatialSmoother::new(config, params.smoothing.lambda)?;
        Ok(Self {
            params,
            smoother,
            state: None,
            smoothed_counts: Grid::zeros(config, 0),
            smoothed_means: Grid::zeros(config, 0),
            means_cache: None,
            scratch: Vec::new(),
        })
    }

    pub fn params(&self) -> &FssParams {
        &self.params
    }

    pub fn set_prune_rule(&mut self, rule: PruneRule) {
        self.params.prune_rule = rule;
    }

    pub fn reset(&mut self) {
        self.state = None;
        self.means_cache = None;
    }

    pub fn state(&self) -> Option<&SmoothState> {
        self.state.as_ref()
    }

    /// Smooths one day and grows its tree; the state seeds itself from the
    /// first day's means.
    pub fn grow(&mut self, counts: &Grid, means: &Grid) -> Result<PartitionTree> {
        let state = self.state.get_or_insert_with(|| SmoothState::new(means));
        state.update(counts, means, self.params.smoothing.alpha)?;
        self.smoother
            .smooth_into(&state.ewma_counts, &mut self.smoothed_counts, &mut self.scratch);
        // smoothed means change only when the EWMA of means does
        let ewma_means = state.ewma_means.values();
        if self.means_cache.as_deref() != Some(ewma_means) {
            self.smoother
                .smooth_into(&state.ewma_means, &mut self.smoothed_means, &mut self.scratch);
            self.means_cache = Some(ewma_means.to_vec());
        }
        self.smoothed_means.set_day(counts.day());
        let sums = RegionSums::new(&self.smoothed_counts, &self.smoothed_means)?;
        Ok(grow_with_sums(&sums, &self.smoothed_means, &self.params, counts.day()))
    }

    pub fn step(&mut self, counts: &Grid, means: &Grid) -> Result<SignalReport> {
        let mut tree = self.grow(counts, means)?;
        Ok(prune_tree(&mut tree, &self.params.prune_rule))
    }

    pub fn smoothed(&self) -> (&Grid, &Grid) {
        (&self.smoothed_counts, &self.smoothed_means)
    }
}
