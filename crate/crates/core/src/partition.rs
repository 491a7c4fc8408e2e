//! Block partition trees used to assign prediction classes.
//!
//! Three tree flavours share one node type:
//!
//! * **hexadecatree**: a 4D block is halved along `t, s, v, u` at once,
//!   giving 16 children. Levels run from 4 (32⁴ top block) down to 0 (2⁴).
//! * **dual tree**: a 4D block is either split along `(v, u)` (spatial) or
//!   along `(t, s)` (angular) into 4 children, or left whole.
//! * **2D quadtree**: the light field is viewed as one `T·V × S·U` image of
//!   stitched SAIs and split in classic quadtree fashion.
//!
//! Blocks carry *nominal* power-of-two extents. The block grid is laid from
//! the origin and clipped at the light field border; children that fall
//! completely outside are not coded.
//!
//! Split flags are coded with probabilities drawn from a 7-entry menu. The
//! hexadecatree (and 2D quadtree) use one context per level and number of
//! split neighbours; the dual tree uses a single ternary model whose
//! probabilities follow from how often each flag occurs in the whole tree.

use std::collections::HashSet;
use std::ops::Range;

use crate::error::{Error, Result};
use crate::lightfield::Dims;

pub const TOP_BLOCK: usize = 32;
/// Nominal edge of the fixed blocks of the first optimisation loop.
pub const FIXED_BLOCK_4D: usize = 4;
pub const FIXED_BLOCK_2D: usize = 8;
pub const MAX_LEVEL: u8 = 4;

/// Probability menu, as numerators over 20: {0.05, 0.2, 0.35, 0.5, 0.65, 0.8, 0.95}.
pub const FLAG_MENU_20THS: [u32; 7] = [1, 4, 7, 10, 13, 16, 19];
pub const FLAG_MENU_LEN: usize = 7;
/// Neutral menu entry (0.5).
pub const FLAG_MENU_NEUTRAL: u8 = 3;
pub const HEX_CONTEXTS: usize = 24;
const HEX_NEIGHBOURS: usize = 5;

pub fn menu_probability(index: u8) -> f64 {
    FLAG_MENU_20THS[index as usize] as f64 / 20.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PartitionMode {
    /// Hexadecatree partition (4D-MRP).
    Hex,
    /// Separate spatial/angular quad splits (DT-4D-MRP).
    Dual,
    /// 2D quadtree over the stitched SAI array (M-MRP).
    Quad2d,
}

impl PartitionMode {
    pub const ALL: [PartitionMode; 3] = [PartitionMode::Hex, PartitionMode::Dual, PartitionMode::Quad2d];

    pub fn code(self) -> u8 {
        match self {
            PartitionMode::Hex => 0,
            PartitionMode::Dual => 1,
            PartitionMode::Quad2d => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(PartitionMode::Hex),
            1 => Some(PartitionMode::Dual),
            2 => Some(PartitionMode::Quad2d),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            PartitionMode::Hex => "4d",
            PartitionMode::Dual => "dt",
            PartitionMode::Quad2d => "2d",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "4d" | "hex" => Some(PartitionMode::Hex),
            "dt" | "dual" => Some(PartitionMode::Dual),
            "2d" | "quad2d" => Some(PartitionMode::Quad2d),
            _ => None,
        }
    }
}

/// Axis-aligned 4D block `[origin, origin + extent)` over `(t, s, v, u)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Block4D {
    pub origin: [usize; 4],
    pub extent: [usize; 4],
}

impl Block4D {
    pub const fn new(origin: [usize; 4], extent: [usize; 4]) -> Self {
        Block4D { origin, extent }
    }

    /// Ranges of the block after clipping to `dims`; `None` if nothing is left.
    pub fn clipped(&self, dims: Dims) -> Option<[Range<usize>; 4]> {
        let lim = dims.as_array();
        let r: [Range<usize>; 4] =
            core::array::from_fn(|k| self.origin[k].min(lim[k])..(self.origin[k] + self.extent[k]).min(lim[k]));
        r.iter().all(|x| !x.is_empty()).then_some(r)
    }

    fn halve(&self, axes: [bool; 4], count: usize) -> Vec<Block4D> {
        let bits: Vec<usize> = (0..4).filter(|&k| axes[k]).collect();
        (0..count)
            .map(|i| {
                let mut origin = self.origin;
                let mut extent = self.extent;
                for (j, &k) in bits.iter().enumerate() {
                    // The first split axis takes the most significant index bit.
                    let bit = (i >> (bits.len() - 1 - j)) & 1;
                    extent[k] = self.extent[k] / 2;
                    origin[k] = self.origin[k] + bit * extent[k];
                }
                Block4D { origin, extent }
            })
            .collect()
    }
}

fn splittable(e: usize) -> bool {
    e >= 4 && e.is_multiple_of(2)
}

/// Halves all four extents. Child `i` takes the upper half of `t` when bit 3
/// of `i` is set, of `s` for bit 2, of `v` for bit 1 and of `u` for bit 0.
pub fn split_hex(b: &Block4D) -> Result<Vec<Block4D>> {
    if !b.extent.iter().all(|&e| splittable(e)) {
        return Err(Error::InvalidArgument(format!("block {b:?} is not hexadecatree-splittable")));
    }
    Ok(b.halve([true; 4], 16))
}

/// Halves `v` and `u` (bit 1 selects the `v` half, bit 0 the `u` half).
pub fn split_spatial(b: &Block4D) -> Result<Vec<Block4D>> {
    if !(splittable(b.extent[2]) && splittable(b.extent[3])) {
        return Err(Error::InvalidArgument(format!("block {b:?} is not spatially splittable")));
    }
    Ok(b.halve([false, false, true, true], 4))
}

/// Halves `t` and `s` (bit 1 selects the `t` half, bit 0 the `s` half).
pub fn split_angular(b: &Block4D) -> Result<Vec<Block4D>> {
    if !(splittable(b.extent[0]) && splittable(b.extent[1])) {
        return Err(Error::InvalidArgument(format!("block {b:?} is not angularly splittable")));
    }
    Ok(b.halve([true, true, false, false], 4))
}

/// Block of the stitched `T·V × S·U` image: row `t·V + v`, column `s·U + u`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Block2D {
    pub row: usize,
    pub col: usize,
    pub height: usize,
    pub width: usize,
}

impl Block2D {
    pub const fn new(row: usize, col: usize, height: usize, width: usize) -> Self {
        Block2D { row, col, height, width }
    }

    pub fn clipped(&self, dims: Dims) -> Option<(Range<usize>, Range<usize>)> {
        let (h, w) = (dims.t * dims.v, dims.s * dims.u);
        let rows = self.row.min(h)..(self.row + self.height).min(h);
        let cols = self.col.min(w)..(self.col + self.width).min(w);
        (!rows.is_empty() && !cols.is_empty()).then_some((rows, cols))
    }
}

pub fn split_quad2d(b: &Block2D) -> Result<Vec<Block2D>> {
    if !(splittable(b.height) && splittable(b.width)) {
        return Err(Error::InvalidArgument(format!("block {b:?} is not quadtree-splittable")));
    }
    let (h, w) = (b.height / 2, b.width / 2);
    Ok((0..4)
        .map(|i| Block2D::new(b.row + (i >> 1) * h, b.col + (i & 1) * w, h, w))
        .collect())
}

/// A node's area: a 4D block, or a block of the stitched 2D image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Region {
    Block(Block4D),
    Flat(Block2D),
}

impl Region {
    pub fn is_empty(&self, dims: Dims) -> bool {
        match self {
            Region::Block(b) => b.clipped(dims).is_none(),
            Region::Flat(b) => b.clipped(dims).is_none(),
        }
    }

    /// Linear plane indices covered by the clipped region. The order is
    /// raster over `(t, s, v, u)` for 4D blocks and over stitched rows then
    /// columns for 2D blocks.
    pub fn pixels(&self, dims: Dims) -> Vec<usize> {
        let mut out = Vec::new();
        self.for_each_pixel(dims, |i| out.push(i));
        out
    }

    pub fn for_each_pixel(&self, dims: Dims, mut f: impl FnMut(usize)) {
        match self {
            Region::Block(b) => {
                if let Some([rt, rs, rv, ru]) = b.clipped(dims) {
                    for t in rt {
                        for s in rs.clone() {
                            for v in rv.clone() {
                                for u in ru.clone() {
                                    f(dims.index(t, s, v, u));
                                }
                            }
                        }
                    }
                }
            }
            Region::Flat(b) => {
                if let Some((rows, cols)) = b.clipped(dims) {
                    for r in rows {
                        for c in cols.clone() {
                            f(dims.index(r / dims.v, c / dims.u, r % dims.v, c % dims.u));
                        }
                    }
                }
            }
        }
    }

    pub fn pixel_count(&self, dims: Dims) -> usize {
        match self {
            Region::Block(b) => b.clipped(dims).map_or(0, |r| r.iter().map(|x| x.len()).product()),
            Region::Flat(b) => b.clipped(dims).map_or(0, |(r, c)| r.len() * c.len()),
        }
    }

    /// Nominal extents, `[T, S, V, U]` or `[H, W]` padded with ones.
    pub fn extent(&self) -> [usize; 4] {
        match self {
            Region::Block(b) => b.extent,
            Region::Flat(b) => [1, 1, b.height, b.width],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SplitKind {
    Hex,
    Spatial,
    Angular,
    Quad,
}

/// Flag coded for a node that may be split.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Flag {
    NoSplit,
    Split(SplitKind),
}

impl Flag {
    /// Index in the ternary dual-tree alphabet `N, S, A`.
    pub fn ternary_index(self) -> usize {
        match self {
            Flag::NoSplit => 0,
            Flag::Split(SplitKind::Spatial) => 1,
            Flag::Split(SplitKind::Angular) => 2,
            Flag::Split(_) => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Node {
    Leaf { class: u16 },
    /// Children in index order; `None` marks a child clipped away entirely.
    Split { kind: SplitKind, children: Vec<Option<Node>> },
}

impl Node {
    pub fn leaf_count(&self) -> usize {
        match self {
            Node::Leaf { .. } => 1,
            Node::Split { children, .. } => children.iter().flatten().map(Node::leaf_count).sum(),
        }
    }
}

/// Partition of a whole colour plane: one tree per top block, in raster
/// order of the top-block grid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartitionTree {
    pub mode: PartitionMode,
    pub roots: Vec<Node>,
}

/// Which splits a region admits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SplitOptions {
    pub primary: bool,
    /// Dual tree only: angular split admissible.
    pub angular: bool,
}

impl SplitOptions {
    pub fn any(&self) -> bool {
        self.primary || self.angular
    }
}

/// Tree layout for one mode over concrete light field dimensions.
#[derive(Debug, Clone)]
pub struct TreeGeometry {
    pub mode: PartitionMode,
    pub dims: Dims,
    /// Nominal extents of the top blocks.
    pub top: [usize; 4],
}

/// Smallest power of two ≥ `n`, at least 2.
fn pow2_at_least(n: usize) -> usize {
    n.next_power_of_two().max(2)
}

impl TreeGeometry {
    pub fn new(mode: PartitionMode, dims: Dims) -> Self {
        let top = match mode {
            PartitionMode::Hex => [TOP_BLOCK; 4],
            PartitionMode::Dual => {
                let ang = pow2_at_least(dims.t.max(dims.s)).min(TOP_BLOCK);
                [ang, ang, TOP_BLOCK, TOP_BLOCK]
            }
            PartitionMode::Quad2d => [1, 1, TOP_BLOCK, TOP_BLOCK],
        };
        TreeGeometry { mode, dims, top }
    }

    /// Top-level regions in coding order.
    pub fn top_regions(&self) -> Vec<Region> {
        let d = self.dims;
        match self.mode {
            PartitionMode::Quad2d => {
                let (h, w) = (d.t * d.v, d.s * d.u);
                let mut out = Vec::new();
                for r in (0..h).step_by(TOP_BLOCK) {
                    for c in (0..w).step_by(TOP_BLOCK) {
                        out.push(Region::Flat(Block2D::new(r, c, TOP_BLOCK, TOP_BLOCK)));
                    }
                }
                out
            }
            _ => {
                let lim = d.as_array();
                let mut out = Vec::new();
                for t in (0..lim[0]).step_by(self.top[0]) {
                    for s in (0..lim[1]).step_by(self.top[1]) {
                        for v in (0..lim[2]).step_by(self.top[2]) {
                            for u in (0..lim[3]).step_by(self.top[3]) {
                                out.push(Region::Block(Block4D::new([t, s, v, u], self.top)));
                            }
                        }
                    }
                }
                out
            }
        }
    }

    pub fn split_options(&self, region: &Region) -> SplitOptions {
        match (self.mode, region) {
            (PartitionMode::Hex, Region::Block(b)) => SplitOptions {
                primary: b.extent.iter().all(|&e| splittable(e)),
                angular: false,
            },
            (PartitionMode::Dual, Region::Block(b)) => SplitOptions {
                primary: splittable(b.extent[2]) && splittable(b.extent[3]),
                angular: splittable(b.extent[0]) && splittable(b.extent[1]),
            },
            (PartitionMode::Quad2d, Region::Flat(b)) => SplitOptions {
                primary: splittable(b.height) && splittable(b.width),
                angular: false,
            },
            _ => SplitOptions::default(),
        }
    }

    /// Split kind of the non-angular split of this mode.
    pub fn primary_kind(&self) -> SplitKind {
        match self.mode {
            PartitionMode::Hex => SplitKind::Hex,
            PartitionMode::Dual => SplitKind::Spatial,
            PartitionMode::Quad2d => SplitKind::Quad,
        }
    }

    /// Children of `region` under `kind`, with `None` for clipped-away children.
    pub fn children(&self, region: &Region, kind: SplitKind) -> Result<Vec<Option<Region>>> {
        let kids: Vec<Region> = match (region, kind) {
            (Region::Block(b), SplitKind::Hex) => split_hex(b)?.into_iter().map(Region::Block).collect(),
            (Region::Block(b), SplitKind::Spatial) => split_spatial(b)?.into_iter().map(Region::Block).collect(),
            (Region::Block(b), SplitKind::Angular) => split_angular(b)?.into_iter().map(Region::Block).collect(),
            (Region::Flat(b), SplitKind::Quad) => split_quad2d(b)?.into_iter().map(Region::Flat).collect(),
            _ => return Err(Error::InvalidArgument(format!("{kind:?} split on {region:?}"))),
        };
        Ok(kids
            .into_iter()
            .map(|r| (!r.is_empty(self.dims)).then_some(r))
            .collect())
    }

    /// Level of a hexadecatree / quadtree node: 4 for 32-wide blocks down to 0 for 2-wide.
    pub fn level(&self, region: &Region) -> u8 {
        let e = match region {
            Region::Block(b) => b.extent[3],
            Region::Flat(b) => b.width,
        };
        (e.trailing_zeros() as u8).saturating_sub(1)
    }

    /// Key of a node in the per-level grid used for flag contexts.
    pub fn cell_key(&self, region: &Region) -> CellKey {
        match region {
            Region::Block(b) => CellKey {
                level: self.level(region),
                cell: core::array::from_fn(|k| b.origin[k] / b.extent[k]),
            },
            Region::Flat(b) => CellKey {
                level: self.level(region),
                cell: [0, 0, b.row / b.height, b.col / b.width],
            },
        }
    }

    /// Same-level neighbour cells whose split flags form the context:
    /// `−t, −s, −v, −u` and the `(−v, −u)` diagonal for 4D blocks; `−row`,
    /// `−col` and the diagonal for 2D blocks.
    pub fn context_neighbours(&self, key: &CellKey) -> Vec<CellKey> {
        let deltas: &[[isize; 4]] = match self.mode {
            PartitionMode::Quad2d => &[[0, 0, -1, 0], [0, 0, 0, -1], [0, 0, -1, -1]],
            _ => &[[-1, 0, 0, 0], [0, -1, 0, 0], [0, 0, -1, 0], [0, 0, 0, -1], [0, 0, -1, -1]],
        };
        deltas
            .iter()
            .filter_map(|d| {
                let mut cell = key.cell;
                for k in 0..4 {
                    let c = key.cell[k] as isize + d[k];
                    if c < 0 {
                        return None;
                    }
                    cell[k] = c as usize;
                }
                Some(CellKey { level: key.level, cell })
            })
            .collect()
    }

    /// Fixed-size blocks of the first optimisation loop, in raster order.
    pub fn fixed_blocks(&self) -> Vec<Region> {
        let d = self.dims;
        match self.mode {
            PartitionMode::Quad2d => {
                let (h, w) = (d.t * d.v, d.s * d.u);
                let mut out = Vec::new();
                for r in (0..h).step_by(FIXED_BLOCK_2D) {
                    for c in (0..w).step_by(FIXED_BLOCK_2D) {
                        out.push(Region::Flat(Block2D::new(r, c, FIXED_BLOCK_2D, FIXED_BLOCK_2D)));
                    }
                }
                out
            }
            _ => {
                let e = FIXED_BLOCK_4D;
                let mut out = Vec::new();
                for t in (0..d.t).step_by(e) {
                    for s in (0..d.s).step_by(e) {
                        for v in (0..d.v).step_by(e) {
                            for u in (0..d.u).step_by(e) {
                                out.push(Region::Block(Block4D::new([t, s, v, u], [e; 4])));
                            }
                        }
                    }
                }
                out
            }
        }
    }

    /// Whether `region` is exactly a fixed block (the tree may stop there).
    pub fn is_fixed_size(&self, region: &Region) -> bool {
        match region {
            Region::Block(b) => b.extent == [FIXED_BLOCK_4D; 4],
            Region::Flat(b) => b.height == FIXED_BLOCK_2D && b.width == FIXED_BLOCK_2D,
        }
    }

    /// Pixels whose class the move-to-front list consults for `region`:
    /// above, left and above-right of its first pixel, within one SAI for 4D
    /// blocks and within the stitched image for 2D blocks.
    pub fn class_neighbour_pixels(&self, region: &Region) -> [Option<usize>; 3] {
        let d = self.dims;
        match region {
            Region::Block(b) => {
                let Some([rt, rs, rv, ru]) = b.clipped(d) else {
                    return [None; 3];
                };
                let (t, s, v, u) = (rt.start, rs.start, rv.start, ru.start);
                let up = (v > 0).then(|| d.index(t, s, v - 1, u));
                let left = (u > 0).then(|| d.index(t, s, v, u - 1));
                let up_right = (v > 0 && ru.end < d.u).then(|| d.index(t, s, v - 1, ru.end));
                [up, left, up_right]
            }
            Region::Flat(b) => {
                let Some((rows, cols)) = b.clipped(d) else {
                    return [None; 3];
                };
                let w = d.s * d.u;
                let at = |r: usize, c: usize| d.index(r / d.v, c / d.u, r % d.v, c % d.u);
                let (r, c) = (rows.start, cols.start);
                let up = (r > 0).then(|| at(r - 1, c));
                let left = (c > 0).then(|| at(r, c - 1));
                let up_right = (r > 0 && cols.end < w).then(|| at(r - 1, cols.end));
                [up, left, up_right]
            }
        }
    }
}

/// Position of a node in the per-level grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CellKey {
    pub level: u8,
    pub cell: [usize; 4],
}

/// Set of split nodes, used to evaluate neighbour-based flag contexts.
pub type SplitSet = HashSet<CellKey>;

/// Flag context of a hexadecatree / quadtree node: `(level − 1)·6 + n`
/// where `n` counts split same-level neighbours.
pub fn hex_flag_context(level: u8, split_neighbours: usize) -> usize {
    debug_assert!((1..=MAX_LEVEL).contains(&level));
    debug_assert!(split_neighbours <= HEX_NEIGHBOURS);
    (level as usize - 1) * (HEX_NEIGHBOURS + 1) + split_neighbours
}

/// Context of `region` given the split nodes decided so far.
pub fn node_context(geom: &TreeGeometry, region: &Region, decided: &SplitSet) -> usize {
    let key = geom.cell_key(region);
    let n = geom
        .context_neighbours(&key)
        .iter()
        .filter(|k| decided.contains(k))
        .count();
    hex_flag_context(key.level, n)
}

/// Per-flag tallies `(ctx_N, ctx_S, ctx_A)` over the flags decided so far.
pub fn dt_flag_context(flags: &[Flag]) -> [u64; 3] {
    let mut c = [0u64; 3];
    for f in flags {
        c[f.ternary_index()] += 1;
    }
    c
}

fn menu_log_costs() -> [f64; FLAG_MENU_LEN] {
    core::array::from_fn(|i| -menu_probability(i as u8).log2())
}

/// Menu entry minimising `−log2(p)·a − log2(1−p)·b`. Equal costs resolve
/// toward the neutral entry 0.5, then toward the lower index.
pub fn menu_argmin(a: u64, b: u64) -> u8 {
    let l = menu_log_costs();
    let mut best = FLAG_MENU_NEUTRAL;
    let mut best_cost = f64::INFINITY;
    for i in [3usize, 2, 4, 1, 5, 0, 6] {
        let c = a as f64 * l[i] + b as f64 * l[FLAG_MENU_LEN - 1 - i];
        if c < best_cost {
            best_cost = c;
            best = i as u8;
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BinaryFlagCost {
    pub index: u8,
    pub cost_not_split: f64,
    pub cost_split: f64,
}

/// Probability of "not split" chosen from the menu for the observed
/// counts, and the resulting flag costs in bits.
pub fn flag_cost_binary(ctx0: u64, ctx1: u64) -> BinaryFlagCost {
    let index = menu_argmin(ctx0, ctx1);
    let l = menu_log_costs();
    BinaryFlagCost {
        index,
        cost_not_split: l[index as usize],
        cost_split: l[FLAG_MENU_LEN - 1 - index as usize],
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TernaryFlagCost {
    /// Menu index of `P_N`.
    pub index_n: u8,
    /// Menu index of `P_{S|N̄}`.
    pub index_s: u8,
    /// Costs in bits of flags `N, S, A`.
    pub cost: [f64; 3],
}

/// Two-stage menu selection for the dual tree: first `N` against `S ∪ A`,
/// then `S` against `A`.
pub fn flag_cost_ternary(ctx_n: u64, ctx_s: u64, ctx_a: u64) -> TernaryFlagCost {
    let index_n = menu_argmin(ctx_n, ctx_s + ctx_a);
    let index_s = menu_argmin(ctx_s, ctx_a);
    let p_n = menu_probability(index_n);
    let p = menu_probability(index_s);
    TernaryFlagCost {
        index_n,
        index_s,
        cost: [-p_n.log2(), -(p * (1.0 - p_n)).log2(), -((1.0 - p) * (1.0 - p_n)).log2()],
    }
}

/// Exact ternary probabilities as `numerator / 400`.
pub fn ternary_probabilities_400(index_n: u8, index_s: u8) -> [u32; 3] {
    let a = FLAG_MENU_20THS[index_n as usize];
    let b = FLAG_MENU_20THS[index_s as usize];
    [20 * a, b * (20 - a), (20 - b) * (20 - a)]
}

/// Integer frequencies of `[not split, split]` summing to `total`.
pub fn binary_frequencies(index: u8, total: u32) -> [u32; 2] {
    let n = FLAG_MENU_20THS[index as usize];
    let f0 = (n * total + 10) / 20;
    [f0, total - f0]
}

/// Integer frequencies of `[N, S, A]` summing to `total`.
pub fn ternary_frequencies(index_n: u8, index_s: u8, total: u32) -> [u32; 3] {
    let p = ternary_probabilities_400(index_n, index_s);
    let f_n = (p[0] * total + 200) / 400;
    let f_s = (p[1] * total + 200) / 400;
    [f_n, f_s, total - f_n - f_s]
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    fn voxels(b: &Block4D) -> BTreeSet<[usize; 4]> {
        let mut set = BTreeSet::new();
        for t in b.origin[0]..b.origin[0] + b.extent[0] {
            for s in b.origin[1]..b.origin[1] + b.extent[1] {
                for v in b.origin[2]..b.origin[2] + b.extent[2] {
                    for u in b.origin[3]..b.origin[3] + b.extent[3] {
                        set.insert([t, s, v, u]);
                    }
                }
            }
        }
        set
    }

    #[test]
    fn hex_split_of_top_block() {
        let top = Block4D::new([0; 4], [32; 4]);
        let kids = split_hex(&top).unwrap();
        assert_eq!(kids.len(), 16);
        assert!(kids.iter().all(|k| k.extent == [16; 4]));
        assert_eq!(kids[0].origin, top.origin);
    }

    #[test]
    fn hex_indices_follow_sign_pattern() {
        // child i origin = parent + E·(1 + (−1)^(⌊i/2^k⌋+1))/4 along each axis
        let b = Block4D::new([4, 8, 12, 16], [8, 8, 8, 8]);
        let kids = split_hex(&b).unwrap();
        for (i, k) in kids.iter().enumerate() {
            for (axis, div) in [8usize, 4, 2, 1].into_iter().enumerate() {
                let sign: i64 = if (i / div) % 2 == 1 { 1 } else { -1 };
                let expect = b.origin[axis] as i64 + b.extent[axis] as i64 * (1 + sign) / 4;
                assert_eq!(k.origin[axis] as i64, expect, "child {i} axis {axis}");
            }
        }
    }

    #[test]
    fn spatial_and_angular_examples() {
        let b = Block4D::new([0; 4], [8, 8, 32, 32]);
        assert!(split_spatial(&b).unwrap().iter().all(|k| k.extent == [8, 8, 16, 16]));
        assert!(split_angular(&b).unwrap().iter().all(|k| k.extent == [4, 4, 32, 32]));
        assert!(split_spatial(&Block4D::new([0; 4], [8, 8, 2, 2])).is_err());
        assert!(split_hex(&Block4D::new([0; 4], [2, 4, 4, 4])).is_err());
    }

    #[test]
    fn angular_then_spatial_equals_hex() {
        let b = Block4D::new([0, 0, 8, 0], [4, 8, 8, 4]);
        let mut composed: Vec<BTreeSet<[usize; 4]>> = split_angular(&b)
            .unwrap()
            .iter()
            .flat_map(|a| split_spatial(a).unwrap())
            .map(|k| voxels(&k))
            .collect();
        let mut hex: Vec<BTreeSet<[usize; 4]>> = split_hex(&b).unwrap().iter().map(voxels).collect();
        composed.sort();
        hex.sort();
        assert_eq!(composed, hex);
    }

    #[test]
    fn quad2d_split_and_straddling_block() {
        let kids = split_quad2d(&Block2D::new(0, 0, 32, 32)).unwrap();
        assert!(kids.iter().all(|k| k.height == 16 && k.width == 16));
        // 2×2 SAIs of 3×3 pixels: stitched rows 2..6 span SAI rows 0 and 1.
        let dims = Dims::new(2, 2, 3, 3);
        let r = Region::Flat(Block2D::new(2, 2, 4, 4));
        let px = r.pixels(dims);
        assert!(px.contains(&dims.index(0, 0, 2, 2)));
        assert!(px.contains(&dims.index(1, 1, 2, 2)));
        assert_eq!(px.len(), 16);
    }

    #[test]
    fn binary_flag_examples() {
        let eq = flag_cost_binary(7, 7);
        assert_eq!(eq.index, 3);
        assert!((eq.cost_not_split - 1.0).abs() < 1e-12 && (eq.cost_split - 1.0).abs() < 1e-12);
        assert_eq!(flag_cost_binary(10, 0).index, 6);
        assert_eq!(flag_cost_binary(0, 0).index, 3);
    }

    #[test]
    fn ternary_flag_examples() {
        let c = flag_cost_ternary(5, 5, 5);
        assert_eq!((c.index_n, c.index_s), (2, 3));
        let c = flag_cost_ternary(9, 0, 0);
        assert_eq!(c.index_n, 6);
        assert!((c.cost[0] - 0.0740).abs() < 1e-3);
        for i in 0..7 {
            for j in 0..7 {
                assert_eq!(ternary_probabilities_400(i, j).iter().sum::<u32>(), 400);
                let f = ternary_frequencies(i, j, 1 << 15);
                assert!(f.iter().all(|&x| x > 0));
                assert_eq!(f.iter().sum::<u32>(), 1 << 15);
            }
        }
    }

    #[test]
    fn hex_contexts_span_24_values() {
        assert_eq!(hex_flag_context(1, 0), 0);
        assert_eq!(hex_flag_context(4, 5), 23);
        let all: BTreeSet<usize> = (1..=4).flat_map(|l| (0..=5).map(move |n| hex_flag_context(l, n))).collect();
        assert_eq!(all.len(), HEX_CONTEXTS);
        assert_eq!(*all.iter().max().unwrap(), HEX_CONTEXTS - 1);
    }

    #[test]
    fn dt_context_tallies() {
        assert_eq!(dt_flag_context(&[]), [0, 0, 0]);
        let flags = [Flag::Split(SplitKind::Spatial), Flag::NoSplit, Flag::NoSplit];
        let c = dt_flag_context(&flags);
        assert!(c[1] >= 1);
        assert_eq!(c.iter().sum::<u64>(), flags.len() as u64);
    }

    #[test]
    fn dual_geometry_adapts_angular_top() {
        let g = TreeGeometry::new(PartitionMode::Dual, Dims::new(13, 13, 64, 64));
        assert_eq!(g.top, [16, 16, 32, 32]);
        assert_eq!(g.top_regions().len(), 4);
        let g = TreeGeometry::new(PartitionMode::Hex, Dims::new(5, 5, 64, 64));
        assert_eq!(g.top_regions().len(), 4);
    }

    #[test]
    fn clipped_children_are_skipped() {
        let dims = Dims::new(5, 5, 40, 8);
        let g = TreeGeometry::new(PartitionMode::Hex, dims);
        let top = g.top_regions();
        assert_eq!(top.len(), 2);
        let kids = g.children(&top[0], SplitKind::Hex).unwrap();
        // only t, s, u lower halves exist; v has both halves
        assert_eq!(kids.iter().flatten().count(), 2);
    }
}
