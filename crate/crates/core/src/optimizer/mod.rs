//! The two encoder optimisation loops.
//!
//! *Loop 1* works on fixed blocks (4⁴ in the 4D modes, 8×8 in the stitched
//! 2D mode): design one predictor per class, fit context thresholds, then
//! move every block to the class with the lowest residual cost.
//!
//! *Loop 2* freezes the predictors and jointly refines thresholds, shape
//! parameters and the variable-size partition with its leaf classes.
//!
//! Every candidate state is scored with the exact cost `J` of coding it,
//! computed by the same routines as the coder. A state is accepted only
//! when it lowers the best `J` seen so far; a loop ends after
//! `max_iterations` or after [`STALL_LIMIT`] iterations in a row without
//! improvement.

mod config;
mod groups;
mod tree;

use std::collections::HashSet;
use std::fmt;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

pub use config::{default_class_count, EncoderConfig, DEFAULT_MAX_ITERATIONS, STALL_LIMIT};
pub use groups::{optimise_shapes, optimise_thresholds, MAX_BINS};
pub use tree::{optimise_tree, split_set, tree_cost, FlagCosts, TreeSnapshot};

use crate::entropy::codec::{
    abs_errors, choose_menu, coefficient_bits, contexts, predict_plane, residual_cost, threshold_bits, tree_cost as coded_tree_cost,
    tree_events, FlagMenu, TreeEvent,
};
use crate::entropy::model::{cost_units, fold, ModelBank, COST_FRAC_BITS, COST_ONE, GAUSSIAN_SHAPE_INDEX, SCALE};
use crate::error::{Error, Result};
use crate::partition::{
    binary_frequencies, ternary_frequencies, Node, PartitionMode, PartitionTree, Region, SplitKind, TreeGeometry,
    FIXED_BLOCK_2D, FIXED_BLOCK_4D, HEX_CONTEXTS,
};
use crate::prediction::{
    predict_from_taps, quantise_coefficients, quantise_context, ClassModel, NormalEquations, PlaneRef, SupportLayout,
    SupportShape, NUM_GROUPS,
};

/// Components of the cost `J`, in units of 2⁻¹⁶ bit.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CostBreakdown {
    /// Predictor coefficients.
    pub b_a: u64,
    /// Partition flags and their probability indices.
    pub b_m_flags: u64,
    /// Leaf class indices.
    pub b_m_class: u64,
    /// Context thresholds and shape indices.
    pub b_t: u64,
    /// Prediction residuals.
    pub b_r: u64,
}

impl CostBreakdown {
    pub fn b_m(&self) -> u64 {
        self.b_m_flags + self.b_m_class
    }

    /// `J = B_a + B_m + B_t + B_r`.
    pub fn j(&self) -> u64 {
        self.b_a + self.b_m() + self.b_t + self.b_r
    }

    /// A cost in bits; exact as the fraction `units / 65536`.
    pub fn bits(units: u64) -> f64 {
        units as f64 / COST_ONE as f64
    }
}

impl std::ops::Add for CostBreakdown {
    type Output = CostBreakdown;
    fn add(self, o: CostBreakdown) -> CostBreakdown {
        CostBreakdown {
            b_a: self.b_a + o.b_a,
            b_m_flags: self.b_m_flags + o.b_m_flags,
            b_m_class: self.b_m_class + o.b_m_class,
            b_t: self.b_t + o.b_t,
            b_r: self.b_r + o.b_r,
        }
    }
}

impl fmt::Display for CostBreakdown {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let b = CostBreakdown::bits;
        write!(
            f,
            "J = {:.1} bits (B_a {:.1}, B_m {:.1} = flags {:.1} + classes {:.1}, B_t {:.1}, B_r {:.1})",
            b(self.j()),
            b(self.b_a),
            b(self.b_m()),
            b(self.b_m_flags),
            b(self.b_m_class),
            b(self.b_t),
            b(self.b_r)
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    MaxIterations,
    /// [`STALL_LIMIT`] consecutive iterations without improvement.
    Stalled,
}

/// What one loop did.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LoopTrace {
    pub iterations: usize,
    /// `J` of every accepted iteration, in order.
    pub accepted: Vec<u64>,
    pub stop: StopReason,
}

struct LoopCounter {
    max: usize,
    iterations: usize,
    stall: usize,
    accepted: Vec<u64>,
    best: u64,
}

impl LoopCounter {
    fn new(max: usize, baseline: u64) -> Self {
        LoopCounter {
            max,
            iterations: 0,
            stall: 0,
            accepted: Vec::new(),
            best: baseline,
        }
    }

    fn running(&self) -> bool {
        self.iterations < self.max && self.stall < STALL_LIMIT
    }

    /// Records an iteration's `J`; true if accepted.
    fn record(&mut self, j: u64) -> bool {
        self.iterations += 1;
        if j < self.best {
            self.best = j;
            self.accepted.push(j);
            self.stall = 0;
            true
        } else {
            self.stall += 1;
            false
        }
    }

    /// The next iterations would repeat the last one exactly, so each would
    /// count as another iteration without improvement.
    fn fast_forward(&mut self) {
        while self.running() {
            self.iterations += 1;
            self.stall += 1;
        }
    }

    fn finish(self) -> LoopTrace {
        LoopTrace {
            stop: if self.stall >= STALL_LIMIT {
                StopReason::Stalled
            } else {
                StopReason::MaxIterations
            },
            iterations: self.iterations,
            accepted: self.accepted,
        }
    }
}

/// Static inputs of one plane's optimisation.
pub struct PlaneProblem<'a> {
    pub plane: PlaneRef<'a>,
    pub layout: SupportLayout,
    pub geom: TreeGeometry,
    pub bank: Arc<ModelBank>,
}

impl<'a> PlaneProblem<'a> {
    pub fn new(plane: PlaneRef<'a>, shape: SupportShape, mode: PartitionMode) -> Self {
        PlaneProblem {
            layout: SupportLayout::new(shape, plane.dims),
            geom: TreeGeometry::new(mode, plane.dims),
            bank: ModelBank::shared(plane.max_value),
            plane,
        }
    }

    fn pixels(&self) -> usize {
        self.plane.dims.pixels()
    }
}

/// Exact coding cost of one configuration, with the data needed to code it.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub breakdown: CostBreakdown,
    pub menu: FlagMenu,
    pub events: Vec<TreeEvent>,
    pub class_map: Vec<u16>,
    pub predictions: Vec<u32>,
    pub contexts: Vec<u64>,
}

/// Scores `models` with `tree`. `predict` maps a class map to per-pixel
/// predictions.
pub fn evaluate(
    problem: &PlaneProblem,
    models: &[ClassModel],
    tree: &PartitionTree,
    predict: impl FnOnce(&[u16]) -> Vec<u32>,
) -> Result<Evaluation> {
    let mut class_map = vec![0u16; problem.pixels()];
    let events = tree_events(&problem.geom, tree, models.len(), &mut class_map)?;
    let menu = choose_menu(problem.geom.mode, &events);
    let predictions = predict(&class_map);
    let errors = abs_errors(problem.plane.samples, &predictions);
    let ctx = contexts(&problem.layout, &errors);
    let (flags, classes) = coded_tree_cost(&events, &menu, models.len());
    let breakdown = CostBreakdown {
        b_a: models.iter().map(|m| coefficient_bits(&m.coefficients)).sum::<u64>() << COST_FRAC_BITS,
        b_m_flags: flags + (menu.header_bits() << COST_FRAC_BITS),
        b_m_class: classes,
        b_t: models.iter().map(threshold_bits).sum::<u64>() << COST_FRAC_BITS,
        b_r: residual_cost(&problem.bank, models, &class_map, problem.plane.samples, &predictions, &ctx),
    };
    Ok(Evaluation {
        breakdown,
        menu,
        events,
        class_map,
        predictions,
        contexts: ctx,
    })
}

/// Deals fixed blocks to `m` classes in order of increasing pixel variance,
/// so class sizes differ by at most one. Equal variances keep block order,
/// or a seeded random order when `seed` is given.
pub fn init_classes(samples: &[u32], blocks: &[Vec<usize>], m: usize, seed: Option<u64>) -> Vec<u16> {
    let var: Vec<f64> = blocks
        .iter()
        .map(|px| {
            let n = px.len().max(1) as f64;
            let mean = px.iter().map(|&i| samples[i] as f64).sum::<f64>() / n;
            px.iter().map(|&i| (samples[i] as f64 - mean).powi(2)).sum::<f64>() / n
        })
        .collect();
    let mut order: Vec<usize> = (0..blocks.len()).collect();
    if let Some(seed) = seed {
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    }
    order.sort_by(|&a, &b| var[a].total_cmp(&var[b]));
    let mut out = vec![0u16; blocks.len()];
    let nb = blocks.len().max(1);
    for (rank, &b) in order.iter().enumerate() {
        out[b] = (rank * m / nb) as u16;
    }
    out
}

/// Candidate support prefixes tried when designing a class.
fn prefix_lengths(shape: &SupportShape) -> Vec<usize> {
    let kc = shape.k_current();
    let kr = shape.k_reference();
    let mut v: Vec<usize> = [1, 2, 3, 4, 6, 8, 12, 16].into_iter().filter(|&l| l <= kc).collect();
    v.push(kc);
    for r in 0..4 {
        let base = kc + r * kr;
        for j in [1, 2, 4, 8] {
            if j < kr {
                v.push(base + j);
            }
        }
        v.push(base + kr);
    }
    v.retain(|&l| l >= 1 && l <= shape.len());
    v.sort_unstable();
    v.dedup();
    v
}

/// Least-squares predictor for a class, choosing how many leading taps to
/// use by the estimated bits of residuals plus coefficients.
pub fn design_class(eq: &NormalEquations, shape: &SupportShape) -> Option<Vec<i16>> {
    let n = eq.count() as f64;
    if eq.count() == 0 {
        return None;
    }
    let mut best: Option<(f64, Vec<i16>)> = None;
    for len in prefix_lengths(shape) {
        let Some(real) = eq.solve_prefix(len) else { continue };
        let mut q = quantise_coefficients(&real);
        q.resize(shape.len(), 0);
        let mse = (eq.sse(&q) / n).max(0.05);
        let est = 0.5 * n * mse.log2() + coefficient_bits(&q) as f64;
        if best.as_ref().is_none_or(|(b, _)| est < *b) {
            best = Some((est, q));
        }
    }
    best.map(|b| b.1)
}

/// Predictions of every pixel under every class, at `p * classes + m`.
pub fn predict_all(problem: &PlaneProblem, models: &[ClassModel]) -> Vec<u32> {
    let d = problem.plane.dims;
    let m = models.len();
    let sai = d.sai_pixels();
    let mut out = vec![0u32; d.pixels() * m];
    out.par_chunks_mut(sai * m).enumerate().for_each(|(k, chunk)| {
        let (t, s) = (k / d.s, k % d.s);
        let mut taps = vec![0u32; problem.layout.len()];
        for j in 0..sai {
            problem.layout.gather(&problem.plane, t, s, j / d.u, j % d.u, &mut taps);
            for (c, model) in models.iter().enumerate() {
                chunk[j * m + c] = predict_from_taps(&model.coefficients, &taps, problem.plane.max_value);
            }
        }
    });
    out
}

fn assigned(all: &[u32], classes: usize, class_map: &[u16]) -> Vec<u32> {
    class_map
        .iter()
        .enumerate()
        .map(|(p, &c)| all[p * classes + c as usize])
        .collect()
}

/// Fits thresholds (and, when `shapes` is set, shape indices) of every
/// class to the pixels currently assigned to it.
pub fn optimise_groups(
    bank: &ModelBank,
    models: &mut [ClassModel],
    class_map: &[u16],
    contexts: &[u64],
    folded: &[u32],
    shapes: bool,
) {
    let mut per_class: Vec<Vec<(u64, u32)>> = vec![Vec::new(); models.len()];
    for p in 0..class_map.len() {
        per_class[class_map[p] as usize].push((contexts[p], folded[p]));
    }
    models.par_iter_mut().zip(per_class).for_each(|(model, samples)| {
        if let Some(th) = optimise_thresholds(bank, &model.shapes, &samples) {
            model.thresholds = th;
            if shapes {
                model.shapes = optimise_shapes(bank, &model.thresholds, &samples);
            }
        }
    });
}

/// Moves every fixed block to the class with the lowest residual cost
/// under frozen contexts. Ties go to the lower class index.
pub fn optimise_classification_fixed(
    bank: &ModelBank,
    models: &[ClassModel],
    blocks: &[Vec<usize>],
    samples: &[u32],
    all_predictions: &[u32],
    contexts: &[u64],
) -> Vec<u16> {
    let m = models.len();
    let max = bank.alphabet.max_value;
    blocks
        .par_iter()
        .map(|px| {
            let mut cost = vec![0u64; m];
            for &p in px {
                for (c, model) in models.iter().enumerate() {
                    let g = quantise_context(contexts[p], &model.thresholds);
                    let f = fold(samples[p], all_predictions[p * m + c], max);
                    cost[c] += bank.cost(g, model.shapes[g], f) as u64;
                }
            }
            (0..m).min_by_key(|&c| (cost[c], c)).unwrap() as u16
        })
        .collect()
}

/// Tree that splits down to the fixed blocks and gives each leaf the class
/// of the block it lies in.
pub fn fixed_block_tree(geom: &TreeGeometry, class_map: &[u16]) -> PartitionTree {
    let limit = match geom.mode {
        PartitionMode::Quad2d => FIXED_BLOCK_2D,
        _ => FIXED_BLOCK_4D,
    };
    fn build(geom: &TreeGeometry, r: &Region, limit: usize, map: &[u16]) -> Node {
        let e = r.extent();
        let kind = match geom.mode {
            PartitionMode::Hex if e[0] > limit => Some(SplitKind::Hex),
            PartitionMode::Quad2d if e[3] > limit => Some(SplitKind::Quad),
            PartitionMode::Dual if e[0] > limit => Some(SplitKind::Angular),
            PartitionMode::Dual if e[3] > limit => Some(SplitKind::Spatial),
            _ => None,
        };
        match kind {
            Some(kind) => Node::Split {
                kind,
                children: geom
                    .children(r, kind)
                    .expect("fixed-block split is legal")
                    .iter()
                    .map(|c| c.as_ref().map(|c| build(geom, c, limit, map)))
                    .collect(),
            },
            None => Node::Leaf {
                class: map[r.pixels(geom.dims)[0]],
            },
        }
    }
    PartitionTree {
        mode: geom.mode,
        roots: geom.top_regions().iter().map(|r| build(geom, r, limit, class_map)).collect(),
    }
}

/// Everything the coder needs for one plane, plus how it was found.
#[derive(Debug, Clone)]
pub struct PlaneSolution {
    pub models: Vec<ClassModel>,
    pub tree: PartitionTree,
    pub evaluation: Evaluation,
    pub loop1: LoopTrace,
    pub loop2: Option<LoopTrace>,
}

impl PlaneSolution {
    pub fn breakdown(&self) -> CostBreakdown {
        self.evaluation.breakdown
    }
}

fn relabel(node: &Node, map: &[u16]) -> Node {
    match node {
        Node::Leaf { class } => Node::Leaf { class: map[*class as usize] },
        Node::Split { kind, children } => Node::Split {
            kind: *kind,
            children: children.iter().map(|c| c.as_ref().map(|c| relabel(c, map))).collect(),
        },
    }
}

/// Drops classes that no leaf uses and renumbers the rest in order.
pub fn remove_unused_classes(models: &[ClassModel], tree: &PartitionTree, class_map: &[u16]) -> (Vec<ClassModel>, PartitionTree) {
    let used: HashSet<u16> = class_map.iter().copied().collect();
    let mut map = vec![u16::MAX; models.len()];
    let mut kept = Vec::new();
    for (i, m) in models.iter().enumerate() {
        if used.contains(&(i as u16)) {
            map[i] = kept.len() as u16;
            kept.push(m.clone());
        }
    }
    let tree = PartitionTree {
        mode: tree.mode,
        roots: tree.roots.iter().map(|n| relabel(n, &map)).collect(),
    };
    (kept, tree)
}

fn flag_costs(menu: &FlagMenu) -> FlagCosts {
    match menu {
        FlagMenu::Binary(idx) => FlagCosts::Binary(
            (0..HEX_CONTEXTS)
                .map(|c| {
                    let f = binary_frequencies(idx[c], SCALE);
                    [cost_units(f[0], SCALE) as u64, cost_units(f[1], SCALE) as u64]
                })
                .collect(),
        ),
        FlagMenu::Ternary([n, s]) => {
            let f = ternary_frequencies(*n, *s, SCALE);
            FlagCosts::Ternary(core::array::from_fn(|k| cost_units(f[k], SCALE) as u64))
        }
    }
}

fn rank_costs(events: &[TreeEvent], classes: usize) -> Vec<u64> {
    let mut hist = vec![0u64; classes];
    for e in events {
        if let TreeEvent::Class { rank } = e {
            hist[*rank] += 1;
        }
    }
    let total: u64 = hist.iter().sum::<u64>() + classes as u64;
    hist.iter()
        .map(|&h| (-((h + 1) as f64 / total as f64).log2() * COST_ONE as f64).round() as u64)
        .collect()
}

struct LoopOneResult {
    models: Vec<ClassModel>,
    class_map: Vec<u16>,
    trace: LoopTrace,
}

fn loop_one(problem: &PlaneProblem, cfg: &EncoderConfig, classes: usize) -> Result<LoopOneResult> {
    let dims = problem.plane.dims;
    let samples = problem.plane.samples;
    let shape = problem.layout.shape().clone();
    let blocks: Vec<Vec<usize>> = problem
        .geom
        .fixed_blocks()
        .iter()
        .map(|r| r.pixels(dims))
        .filter(|p| !p.is_empty())
        .collect();
    let block_eq: Vec<NormalEquations> = blocks
        .par_iter()
        .map(|px| {
            let mut eq = NormalEquations::new(problem.layout.len());
            let mut taps = vec![0u32; problem.layout.len()];
            for &p in px {
                let (t, s, v, u) = dims.coords(p);
                problem.layout.gather(&problem.plane, t, s, v, u, &mut taps);
                eq.add(&taps, samples[p]);
            }
            eq
        })
        .collect();
    let block_map = |assign: &[u16]| {
        let mut map = vec![0u16; dims.pixels()];
        for (b, px) in blocks.iter().enumerate() {
            for &p in px {
                map[p] = assign[b];
            }
        }
        map
    };

    let mut assignment = init_classes(samples, &blocks, classes, cfg.seed);
    let mut models = vec![ClassModel::left_copy(&shape); classes];
    let mut counter = LoopCounter::new(cfg.max_iterations, u64::MAX);
    let mut best: Option<(Vec<ClassModel>, Vec<u16>)> = None;
    while counter.running() {
        let designs: Vec<Option<Vec<i16>>> = (0..classes)
            .into_par_iter()
            .map(|m| {
                let mut eq = NormalEquations::new(problem.layout.len());
                for (b, e) in block_eq.iter().enumerate() {
                    if assignment[b] as usize == m {
                        eq.merge(e);
                    }
                }
                design_class(&eq, &shape)
            })
            .collect();
        for (model, d) in models.iter_mut().zip(designs) {
            if let Some(c) = d {
                model.coefficients = c;
            }
        }
        let all = predict_all(problem, &models);
        let map = block_map(&assignment);
        let preds = assigned(&all, classes, &map);
        let ctx = contexts(&problem.layout, &abs_errors(samples, &preds));
        let folded: Vec<u32> = samples
            .iter()
            .zip(&preds)
            .map(|(&s, &p)| fold(s, p, problem.plane.max_value))
            .collect();
        optimise_groups(&problem.bank, &mut models, &map, &ctx, &folded, false);
        let next = optimise_classification_fixed(&problem.bank, &models, &blocks, samples, &all, &ctx);
        let next_map = block_map(&next);
        let tree = fixed_block_tree(&problem.geom, &next_map);
        let eval = evaluate(problem, &models, &tree, |cm| assigned(&all, classes, cm))?;
        if counter.record(eval.breakdown.j()) {
            best = Some((models.clone(), next_map));
        }
        if next == assignment {
            counter.fast_forward();
        }
        assignment = next;
    }
    let (models, class_map) = best.ok_or_else(|| Error::InvalidArgument("no iteration ran".into()))?;
    Ok(LoopOneResult {
        models,
        class_map,
        trace: counter.finish(),
    })
}

fn loop_two(
    problem: &PlaneProblem,
    cfg: &EncoderConfig,
    models: Vec<ClassModel>,
    tree: PartitionTree,
    baseline: Evaluation,
) -> Result<(Vec<ClassModel>, PartitionTree, LoopTrace)> {
    let samples = problem.plane.samples;
    let max = problem.plane.max_value;
    let classes = models.len();
    let all = predict_all(problem, &models);
    let mut counter = LoopCounter::new(cfg.max_iterations, baseline.breakdown.j());
    let mut best = (models.clone(), tree.clone());
    let mut cur = (models, tree, baseline);
    while counter.running() {
        let (cur_models, cur_tree, cur_eval) = &cur;
        let mut cand_models = cur_models.clone();
        let folded: Vec<u32> = samples
            .iter()
            .zip(&cur_eval.predictions)
            .map(|(&s, &p)| fold(s, p, max))
            .collect();
        optimise_groups(&problem.bank, &mut cand_models, &cur_eval.class_map, &cur_eval.contexts, &folded, true);

        let pixel_cost: Vec<u32> = (0..problem.pixels())
            .into_par_iter()
            .flat_map_iter(|p| {
                let c = cur_eval.contexts[p];
                let all = &all;
                let cand_models = &cand_models;
                (0..classes).map(move |m| {
                    let model = &cand_models[m];
                    let g = quantise_context(c, &model.thresholds);
                    problem.bank.cost(g, model.shapes[g], fold(samples[p], all[p * classes + m], max))
                })
            })
            .collect();
        let splits = split_set(&problem.geom, &cur_tree.roots);
        let snap = TreeSnapshot {
            geom: &problem.geom,
            classes,
            pixel_cost: &pixel_cost,
            flag_cost: flag_costs(&cur_eval.menu),
            prev_splits: &splits,
            rank_cost: rank_costs(&cur_eval.events, classes),
            prev_class_map: &cur_eval.class_map,
        };
        let roots: Vec<Node> = problem
            .geom
            .top_regions()
            .par_iter()
            .map(|r| optimise_tree(&snap, r).0)
            .collect();
        let cand_tree = PartitionTree {
            mode: problem.geom.mode,
            roots,
        };
        let unchanged = cand_tree == *cur_tree && cand_models == *cur_models;
        let eval = evaluate(problem, &cand_models, &cand_tree, |cm| assigned(&all, classes, cm))?;
        if counter.record(eval.breakdown.j()) {
            best = (cand_models.clone(), cand_tree.clone());
        }
        if unchanged {
            counter.fast_forward();
        }
        cur = (cand_models, cand_tree, eval);
    }
    Ok((best.0, best.1, counter.finish()))
}

/// Runs both loops on one plane and returns the cheapest configuration
/// found, with unused classes removed.
pub fn run_encoder_loops(problem: &PlaneProblem, cfg: &EncoderConfig) -> Result<PlaneSolution> {
    let classes = cfg.class_count(problem.pixels()).min(u16::MAX as usize - 1);
    let l1 = loop_one(problem, cfg, classes)?;
    let tree = fixed_block_tree(&problem.geom, &l1.class_map);
    let (models, tree, loop2) = if cfg.second_loop {
        let all = predict_all(problem, &l1.models);
        let base = evaluate(problem, &l1.models, &tree, |cm| assigned(&all, classes, cm))?;
        let (m, t, trace) = loop_two(problem, cfg, l1.models, tree, base)?;
        (m, t, Some(trace))
    } else {
        (l1.models, tree, None)
    };
    let mut class_map = vec![0u16; problem.pixels()];
    tree_events(&problem.geom, &tree, models.len(), &mut class_map)?;
    let (models, tree) = remove_unused_classes(&models, &tree, &class_map);
    let evaluation = evaluate(problem, &models, &tree, |cm| {
        predict_plane(&problem.plane, &problem.layout, &models, cm)
    })?;
    Ok(PlaneSolution {
        models,
        tree,
        evaluation,
        loop1: l1.trace,
        loop2,
    })
}

/// Shape index used for every group during the fixed block loop.
pub const LOOP_ONE_SHAPE: u8 = GAUSSIAN_SHAPE_INDEX;

/// Groups used by a class for the given contexts (for statistics).
pub fn groups_used(model: &ClassModel, contexts: impl IntoIterator<Item = u64>) -> [bool; NUM_GROUPS] {
    let mut used = [false; NUM_GROUPS];
    for c in contexts {
        used[quantise_context(c, &model.thresholds)] = true;
    }
    used
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lightfield::Dims;

    fn problem<'a>(samples: &'a [u32], dims: Dims, max: u32, mode: PartitionMode, kr: usize) -> PlaneProblem<'a> {
        PlaneProblem::new(
            PlaneRef {
                samples,
                dims,
                max_value: max,
            },
            SupportShape::new(20, kr).unwrap(),
            mode,
        )
    }

    #[test]
    fn init_classes_examples() {
        let samples: Vec<u32> = vec![5, 5, 5, 5, 0, 20, 0, 20];
        let blocks = vec![vec![0, 1, 2, 3], vec![4, 5, 6, 7]];
        assert_eq!(init_classes(&samples, &blocks, 1, None), vec![0, 0]);
        assert_eq!(init_classes(&samples, &blocks, 2, None), vec![0, 1]);
        let many: Vec<Vec<usize>> = (0..7).map(|i| vec![i]).collect();
        let s: Vec<u32> = (0..7).collect();
        let a = init_classes(&s, &many, 3, None);
        let mut counts = [0; 3];
        for c in a {
            counts[c as usize] += 1;
        }
        assert!(counts.iter().max().unwrap() - counts.iter().min().unwrap() <= 1);
    }

    #[test]
    fn classification_picks_exact_predictor_and_is_a_fixed_point() {
        let dims = Dims::new(2, 2, 8, 8);
        let samples: Vec<u32> = (0..dims.pixels() as u32).map(|i| (i * 37 + i / 8 * 11) % 200).collect();
        let p = problem(&samples, dims, 255, PartitionMode::Hex, 5);
        let shape = p.layout.shape().clone();
        let mut models = vec![ClassModel::new(vec![0; shape.len()]); 3];
        models[1] = ClassModel::left_copy(&shape);
        // class 2 reproduces the block exactly: design it on all pixels
        let all_px: Vec<usize> = (0..dims.pixels()).collect();
        models[2].coefficients = crate::prediction::design_coefficients(&p.plane, &p.layout, &all_px).unwrap();
        let all = predict_all(&p, &models);
        let zeros = vec![0u64; dims.pixels()];
        let blocks = vec![all_px.clone()];
        let a = optimise_classification_fixed(&p.bank, &models, &blocks, &samples, &all, &zeros);
        let b = optimise_classification_fixed(&p.bank, &models, &blocks, &samples, &all, &zeros);
        assert_eq!(a, b);
        let cost = |m: usize| -> u64 {
            all_px
                .iter()
                .map(|&q| p.bank.cost(0, 5, fold(samples[q], all[q * 3 + m], 255)) as u64)
                .sum()
        };
        let best = (0..3).min_by_key(|&m| (cost(m), m)).unwrap();
        assert_eq!(a[0] as usize, best);
    }

    #[test]
    fn removing_unused_classes_keeps_residual_cost() {
        let dims = Dims::new(2, 2, 8, 8);
        let samples: Vec<u32> = (0..dims.pixels() as u32).map(|i| (i * 13 + i / 8) % 250).collect();
        for mode in PartitionMode::ALL {
            let p = problem(&samples, dims, 255, mode, 5);
            let shape = p.layout.shape().clone();
            let mut models = vec![ClassModel::new(vec![0; shape.len()]); 4];
            models[1] = ClassModel::left_copy(&shape);
            models[3] = ClassModel::left_copy(&shape);
            models[3].coefficients[0] = 7;
            let blocks = p.geom.fixed_blocks();
            let mut class_map = vec![0u16; dims.pixels()];
            for (b, px) in blocks.iter().enumerate() {
                for q in px.pixels(dims) {
                    class_map[q] = [1u16, 3][b % 2];
                }
            }
            let tree = fixed_block_tree(&p.geom, &class_map);
            let eval = |m: &[ClassModel], t: &PartitionTree| {
                evaluate(&p, m, t, |cm| predict_plane(&p.plane, &p.layout, m, cm)).unwrap()
            };
            let before = eval(&models, &tree);
            let (kept, pruned) = remove_unused_classes(&models, &tree, &before.class_map);
            assert_eq!(kept.len(), 2);
            let after = eval(&kept, &pruned);
            assert_eq!(after.breakdown.b_r, before.breakdown.b_r, "{mode:?}");
            assert!(after.breakdown.b_a < before.breakdown.b_a);
        }
    }

    #[test]
    fn constant_field_is_nearly_free() {
        let dims = Dims::new(4, 4, 8, 8);
        let samples = vec![117u32; dims.pixels()];
        for mode in PartitionMode::ALL {
            let p = problem(&samples, dims, 255, mode, 13);
            let sol = run_encoder_loops(&p, &EncoderConfig::with_mode(mode)).unwrap();
            assert_eq!(sol.models.len(), 1);
            let br = CostBreakdown::bits(sol.breakdown().b_r) / dims.pixels() as f64;
            assert!(br < 0.05, "{mode:?}: {br}");
            assert!(sol.loop1.accepted.len() <= 2);
        }
    }

    #[test]
    fn accepted_costs_decrease_and_loops_stop() {
        let dims = Dims::new(3, 3, 12, 12);
        let samples: Vec<u32> = (0..dims.pixels()).map(|i| ((i * 7919) % 97 + (i % 12) * 5) as u32).collect();
        for mode in PartitionMode::ALL {
            let p = problem(&samples, dims, 255, mode, 5);
            let cfg = EncoderConfig {
                max_iterations: 6,
                ..EncoderConfig::with_mode(mode)
            };
            let sol = run_encoder_loops(&p, &cfg).unwrap();
            let l2 = sol.loop2.as_ref().unwrap();
            let seq: Vec<u64> = sol.loop1.accepted.iter().chain(&l2.accepted).copied().collect();
            assert!(seq.windows(2).all(|w| w[1] < w[0]), "{seq:?}");
            assert!(sol.loop1.iterations <= 6 && l2.iterations <= 6);
            // the cap is below the stall limit, so both loops end at the cap
            assert_eq!((sol.loop1.stop, l2.stop), (StopReason::MaxIterations, StopReason::MaxIterations));
            assert_eq!((sol.loop1.iterations, l2.iterations), (6, 6));
            // removing classes keeps B_r and does not raise B_a
            assert!(sol.breakdown().j() <= *seq.last().unwrap() + (64 << 16));
        }
    }

    #[test]
    fn second_loop_never_hurts() {
        let dims = Dims::new(2, 3, 16, 16);
        let samples: Vec<u32> = (0..dims.pixels()).map(|i| ((i * 31) % 61 + (i / 16) % 7 * 20) as u32).collect();
        for mode in PartitionMode::ALL {
            let p = problem(&samples, dims, 255, mode, 5);
            let full = run_encoder_loops(&p, &EncoderConfig::with_mode(mode)).unwrap();
            let only1 = run_encoder_loops(
                &p,
                &EncoderConfig {
                    second_loop: false,
                    ..EncoderConfig::with_mode(mode)
                },
            )
            .unwrap();
            let j1 = *only1.loop1.accepted.last().unwrap();
            let j2 = *full.loop2.as_ref().unwrap().accepted.last().unwrap_or(&j1);
            assert!(j2 <= j1);
        }
    }
}
