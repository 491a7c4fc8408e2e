//! Coding of one colour plane: side information, partition tree, class
//! indices and residuals.
//!
//! The same routines drive the real range coder and the cost meter used by
//! the optimiser, so the optimiser's cost of a configuration is the length
//! the coder will produce (up to the coder's flush overhead).

use rayon::prelude::*;

use crate::entropy::bitio::{se_len, ue_len, BitReader, BitWriter};
use crate::entropy::model::{fold, unfold, ModelBank, COST_FRAC_BITS, SCALE, SHAPE_MENU};
use crate::entropy::rangecoder::{encode_from, AdaptiveModel, CostMeter, RangeDecoder, SymbolSink};
use crate::error::{Error, Result};
use crate::lightfield::Dims;
use crate::partition::{
    binary_frequencies, menu_argmin, node_context, ternary_frequencies, Flag, Node, PartitionMode,
    PartitionTree, Region, SplitKind, SplitSet, TreeGeometry, FLAG_MENU_LEN, FLAG_MENU_NEUTRAL, HEX_CONTEXTS,
};
use crate::prediction::{
    predict_from_taps, quantise_context, ClassModel, PlaneRef, SupportLayout, NUM_GROUPS, NUM_THRESHOLDS,
};

/// Marks a pixel whose class is not known yet.
pub const UNASSIGNED: u16 = u16::MAX;

/// Flag probabilities transmitted in the plane header, as menu indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FlagMenu {
    /// Probability of "not split" per binary context.
    Binary([u8; HEX_CONTEXTS]),
    /// `P_N` and `P_{S|N̄}` of the dual tree.
    Ternary([u8; 2]),
}

impl FlagMenu {
    pub fn neutral(mode: PartitionMode) -> Self {
        match mode {
            PartitionMode::Dual => FlagMenu::Ternary([FLAG_MENU_NEUTRAL; 2]),
            _ => FlagMenu::Binary([FLAG_MENU_NEUTRAL; HEX_CONTEXTS]),
        }
    }

    fn indices(&self) -> &[u8] {
        match self {
            FlagMenu::Binary(a) => a,
            FlagMenu::Ternary(a) => a,
        }
    }

    pub fn header_bits(&self) -> u64 {
        self.indices()
            .iter()
            .map(|&i| se_len(i as i64 - FLAG_MENU_NEUTRAL as i64, 0) as u64)
            .sum()
    }

    pub fn write(&self, w: &mut BitWriter) {
        for &i in self.indices() {
            w.write_se(i as i64 - FLAG_MENU_NEUTRAL as i64, 0);
        }
    }

    pub fn read(r: &mut BitReader, mode: PartitionMode) -> Result<Self> {
        let mut menu = FlagMenu::neutral(mode);
        let slots = match &mut menu {
            FlagMenu::Binary(a) => &mut a[..],
            FlagMenu::Ternary(a) => &mut a[..],
        };
        for slot in slots {
            let v = r.read_se(0)? + FLAG_MENU_NEUTRAL as i64;
            if !(0..FLAG_MENU_LEN as i64).contains(&v) {
                return Err(Error::MalformedHeader(format!("flag menu index {v}")));
            }
            *slot = v as u8;
        }
        Ok(menu)
    }

    /// Frequencies of the flag alphabet for a node with context `ctx`.
    fn frequencies(&self, ctx: usize) -> ([u32; 3], usize) {
        match self {
            FlagMenu::Binary(a) => {
                let f = binary_frequencies(a[ctx], SCALE);
                ([f[0], f[1], 0], 2)
            }
            FlagMenu::Ternary([n, s]) => (ternary_frequencies(*n, *s, SCALE), 3),
        }
    }
}

/// One coded decision of the tree walk.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TreeEvent {
    /// Flag symbol (0 = no split; 1 = split, or spatial; 2 = angular) and
    /// its binary context (0 for the dual tree).
    Flag { ctx: usize, symbol: usize },
    /// Move-to-front rank of a leaf's class.
    Class { rank: usize },
}

/// Move-to-front list of class indices.
#[derive(Debug, Clone)]
pub struct ClassMtf {
    list: Vec<u16>,
}

impl ClassMtf {
    pub fn new(classes: usize) -> Self {
        ClassMtf {
            list: (0..classes as u16).collect(),
        }
    }

    pub fn promote(&mut self, class: u16) {
        if let Some(p) = self.list.iter().position(|&c| c == class) {
            self.list[..=p].rotate_right(1);
        }
    }

    /// Brings the neighbour classes `[above, left, above-right]` to the
    /// front so that the list starts above, left, above-right.
    pub fn promote_neighbours(&mut self, neighbours: [Option<u16>; 3]) {
        for c in neighbours.iter().rev().flatten() {
            self.promote(*c);
        }
    }

    pub fn rank(&self, class: u16) -> usize {
        self.list.iter().position(|&c| c == class).expect("class in list")
    }

    pub fn class_at(&self, rank: usize) -> Option<u16> {
        self.list.get(rank).copied()
    }
}

fn neighbour_classes(geom: &TreeGeometry, region: &Region, class_map: &[u16]) -> [Option<u16>; 3] {
    geom.class_neighbour_pixels(region)
        .map(|p| p.map(|i| class_map[i]).filter(|&c| c != UNASSIGNED))
}

fn flag_symbol(flag: Flag) -> usize {
    match flag {
        Flag::NoSplit => 0,
        Flag::Split(SplitKind::Angular) => 2,
        Flag::Split(_) => 1,
    }
}

struct Walker<'a> {
    geom: &'a TreeGeometry,
    splits: SplitSet,
    mtf: ClassMtf,
    classes: usize,
    class_map: &'a mut [u16],
    events: Vec<TreeEvent>,
}

impl Walker<'_> {
    fn context(&self, region: &Region) -> usize {
        match self.geom.mode {
            PartitionMode::Dual => 0,
            _ => node_context(self.geom, region, &self.splits),
        }
    }

    fn visit(&mut self, region: &Region, node: &Node) -> Result<()> {
        let opts = self.geom.split_options(region);
        match node {
            Node::Split { kind, children } => {
                let legal = match kind {
                    SplitKind::Angular => opts.angular,
                    k => opts.primary && *k == self.geom.primary_kind(),
                };
                if !legal {
                    return Err(Error::InvalidArgument(format!("illegal {kind:?} split of {region:?}")));
                }
                let ctx = self.context(region);
                self.events.push(TreeEvent::Flag {
                    ctx,
                    symbol: flag_symbol(Flag::Split(*kind)),
                });
                if *kind != SplitKind::Angular && self.geom.mode != PartitionMode::Dual {
                    self.splits.insert(self.geom.cell_key(region));
                }
                let regions = self.geom.children(region, *kind)?;
                if regions.len() != children.len() {
                    return Err(Error::InvalidArgument("child count mismatch".into()));
                }
                for (r, c) in regions.iter().zip(children) {
                    match (r, c) {
                        (Some(r), Some(c)) => self.visit(r, c)?,
                        (None, None) => {}
                        _ => return Err(Error::InvalidArgument("child presence mismatch".into())),
                    }
                }
            }
            Node::Leaf { class } => {
                if *class as usize >= self.classes {
                    return Err(Error::InvalidArgument(format!("leaf class {class} out of range")));
                }
                if opts.any() {
                    let ctx = self.context(region);
                    self.events.push(TreeEvent::Flag { ctx, symbol: 0 });
                }
                self.mtf.promote_neighbours(neighbour_classes(self.geom, region, self.class_map));
                self.events.push(TreeEvent::Class {
                    rank: self.mtf.rank(*class),
                });
                self.mtf.promote(*class);
                region.for_each_pixel(self.geom.dims, |i| self.class_map[i] = *class);
            }
        }
        Ok(())
    }
}

/// Walks the tree in coding order, filling `class_map` and returning the
/// decisions to be coded.
pub fn tree_events(geom: &TreeGeometry, tree: &PartitionTree, classes: usize, class_map: &mut [u16]) -> Result<Vec<TreeEvent>> {
    let tops = geom.top_regions();
    if tops.len() != tree.roots.len() || tree.mode != geom.mode {
        return Err(Error::InvalidArgument("tree does not match the block grid".into()));
    }
    class_map.fill(UNASSIGNED);
    let mut w = Walker {
        geom,
        splits: SplitSet::new(),
        mtf: ClassMtf::new(classes),
        classes,
        class_map,
        events: Vec::new(),
    };
    for (r, n) in tops.iter().zip(&tree.roots) {
        w.visit(r, n)?;
    }
    Ok(w.events)
}

/// Menu indices fitted to the flags actually coded.
pub fn choose_menu(mode: PartitionMode, events: &[TreeEvent]) -> FlagMenu {
    match mode {
        PartitionMode::Dual => {
            let mut c = [0u64; 3];
            for e in events {
                if let TreeEvent::Flag { symbol, .. } = e {
                    c[*symbol] += 1;
                }
            }
            FlagMenu::Ternary([menu_argmin(c[0], c[1] + c[2]), menu_argmin(c[1], c[2])])
        }
        _ => {
            let mut c = [[0u64; 2]; HEX_CONTEXTS];
            for e in events {
                if let TreeEvent::Flag { ctx, symbol } = e {
                    c[*ctx][*symbol] += 1;
                }
            }
            FlagMenu::Binary(core::array::from_fn(|k| menu_argmin(c[k][0], c[k][1])))
        }
    }
}

/// Codes tree events. Returns nothing; use [`tree_cost`] for lengths.
pub fn emit_tree<S: SymbolSink>(events: &[TreeEvent], menu: &FlagMenu, classes: usize, sink: &mut S) {
    let mut model = AdaptiveModel::new(classes);
    for e in events {
        match *e {
            TreeEvent::Flag { ctx, symbol } => {
                let (f, n) = menu.frequencies(ctx);
                encode_from(sink, &f[..n], symbol);
            }
            TreeEvent::Class { rank } => model.encode(sink, rank),
        }
    }
}

/// `(flag cost, class cost)` of the events in cost units.
pub fn tree_cost(events: &[TreeEvent], menu: &FlagMenu, classes: usize) -> (u64, u64) {
    let mut flags = CostMeter::default();
    let mut cls = CostMeter::default();
    let mut model = AdaptiveModel::new(classes);
    for e in events {
        match *e {
            TreeEvent::Flag { ctx, symbol } => {
                let (f, n) = menu.frequencies(ctx);
                encode_from(&mut flags, &f[..n], symbol);
            }
            TreeEvent::Class { rank } => model.encode(&mut cls, rank),
        }
    }
    (flags.units, cls.units)
}

/// Reads a partition tree back, filling `class_map`.
pub fn decode_tree(
    geom: &TreeGeometry,
    menu: &FlagMenu,
    classes: usize,
    dec: &mut RangeDecoder,
    class_map: &mut [u16],
) -> Result<PartitionTree> {
    struct Reader<'a, 'b> {
        geom: &'a TreeGeometry,
        menu: &'a FlagMenu,
        splits: SplitSet,
        mtf: ClassMtf,
        model: AdaptiveModel,
        class_map: &'a mut [u16],
        dec: &'a mut RangeDecoder<'b>,
    }
    impl Reader<'_, '_> {
        fn node(&mut self, region: &Region) -> Result<Node> {
            let opts = self.geom.split_options(region);
            let symbol = if opts.any() {
                let ctx = match self.geom.mode {
                    PartitionMode::Dual => 0,
                    _ => node_context(self.geom, region, &self.splits),
                };
                let (f, n) = self.menu.frequencies(ctx);
                self.dec.symbol_from(&f[..n])?
            } else {
                0
            };
            let kind = match symbol {
                0 => None,
                2 if opts.angular => Some(SplitKind::Angular),
                1 if opts.primary => Some(self.geom.primary_kind()),
                _ => return Err(Error::CorruptStream),
            };
            match kind {
                Some(kind) => {
                    if kind != SplitKind::Angular && self.geom.mode != PartitionMode::Dual {
                        self.splits.insert(self.geom.cell_key(region));
                    }
                    let children = self
                        .geom
                        .children(region, kind)?
                        .iter()
                        .map(|r| r.as_ref().map(|r| self.node(r)).transpose())
                        .collect::<Result<Vec<_>>>()?;
                    Ok(Node::Split { kind, children })
                }
                None => {
                    self.mtf
                        .promote_neighbours(neighbour_classes(self.geom, region, self.class_map));
                    let rank = self.model.decode(self.dec)?;
                    let class = self.mtf.class_at(rank).ok_or(Error::CorruptStream)?;
                    self.mtf.promote(class);
                    region.for_each_pixel(self.geom.dims, |i| self.class_map[i] = class);
                    Ok(Node::Leaf { class })
                }
            }
        }
    }
    class_map.fill(UNASSIGNED);
    let mut r = Reader {
        geom,
        menu,
        splits: SplitSet::new(),
        mtf: ClassMtf::new(classes),
        model: AdaptiveModel::new(classes),
        class_map,
        dec,
    };
    let roots = geom
        .top_regions()
        .iter()
        .map(|reg| r.node(reg))
        .collect::<Result<Vec<_>>>()?;
    Ok(PartitionTree { mode: geom.mode, roots })
}

/// Prediction of every pixel with its assigned class.
pub fn predict_plane(plane: &PlaneRef, layout: &SupportLayout, models: &[ClassModel], class_map: &[u16]) -> Vec<u32> {
    let d = plane.dims;
    let sai = d.sai_pixels();
    let mut out = vec![0u32; d.pixels()];
    out.par_chunks_mut(sai).enumerate().for_each(|(k, chunk)| {
        let (t, s) = (k / d.s, k % d.s);
        let mut taps = vec![0u32; layout.len()];
        for (j, o) in chunk.iter_mut().enumerate() {
            let (v, u) = (j / d.u, j % d.u);
            layout.gather(plane, t, s, v, u, &mut taps);
            let m = &models[class_map[k * sai + j] as usize];
            *o = predict_from_taps(&m.coefficients, &taps, plane.max_value);
        }
    });
    out
}

/// Absolute prediction errors.
pub fn abs_errors(samples: &[u32], predictions: &[u32]) -> Vec<u32> {
    samples.iter().zip(predictions).map(|(&s, &p)| s.abs_diff(p)).collect()
}

/// Context value `C` of every pixel given all absolute errors.
pub fn contexts(layout: &SupportLayout, errors: &[u32]) -> Vec<u64> {
    let d = layout.dims();
    let sai = d.sai_pixels();
    let mut out = vec![0u64; d.pixels()];
    out.par_chunks_mut(sai).enumerate().for_each(|(k, chunk)| {
        let (t, s) = (k / d.s, k % d.s);
        for (j, o) in chunk.iter_mut().enumerate() {
            *o = layout.context(errors, t, s, j / d.u, j % d.u);
        }
    });
    out
}

/// Group of every pixel under its class's thresholds.
fn group_of(models: &[ClassModel], class: u16, c: u64) -> usize {
    quantise_context(c, &models[class as usize].thresholds)
}

/// Codes all residuals of a plane in raster order.
pub fn emit_residuals<S: SymbolSink>(
    sink: &mut S,
    bank: &ModelBank,
    models: &[ClassModel],
    class_map: &[u16],
    samples: &[u32],
    predictions: &[u32],
    contexts: &[u64],
) {
    let max = bank.alphabet.max_value;
    for i in 0..samples.len() {
        let class = class_map[i];
        let g = group_of(models, class, contexts[i]);
        let shape = models[class as usize].shapes[g];
        let f = fold(samples[i], predictions[i], max);
        let (sym, bits, raw) = bank.alphabet.split(f);
        sink.table_symbol(bank.table(g, shape), sym);
        sink.bits(raw, bits);
    }
}

/// Residual cost in cost units (parallel sum of table costs).
pub fn residual_cost(
    bank: &ModelBank,
    models: &[ClassModel],
    class_map: &[u16],
    samples: &[u32],
    predictions: &[u32],
    contexts: &[u64],
) -> u64 {
    let max = bank.alphabet.max_value;
    (0..samples.len())
        .into_par_iter()
        .with_min_len(4096)
        .map(|i| {
            let class = class_map[i];
            let g = group_of(models, class, contexts[i]);
            let f = fold(samples[i], predictions[i], max);
            bank.cost(g, models[class as usize].shapes[g], f) as u64
        })
        .sum()
}

/// Reconstructs a plane's samples from the residual part of the body.
pub fn decode_residuals(
    dec: &mut RangeDecoder,
    bank: &ModelBank,
    layout: &SupportLayout,
    models: &[ClassModel],
    class_map: &[u16],
    dims: Dims,
) -> Result<Vec<u32>> {
    let max = bank.alphabet.max_value;
    let n = dims.pixels();
    let mut samples = vec![0u32; n];
    let mut errors = vec![0u32; n];
    let mut taps = vec![0u32; layout.len()];
    let mut i = 0;
    for t in 0..dims.t {
        for s in 0..dims.s {
            for v in 0..dims.v {
                for u in 0..dims.u {
                    let class = class_map[i];
                    let model = &models[class as usize];
                    let plane = PlaneRef {
                        samples: &samples,
                        dims,
                        max_value: max,
                    };
                    layout.gather(&plane, t, s, v, u, &mut taps);
                    let pred = predict_from_taps(&model.coefficients, &taps, max);
                    let g = quantise_context(layout.context(&errors, t, s, v, u), &model.thresholds);
                    let sym = dec.table_symbol(bank.table(g, model.shapes[g]))?;
                    let raw = dec.bits(bank.alphabet.raw_bits(sym))?;
                    let f = bank.alphabet.join(sym, raw);
                    let x = unfold(f, pred, max).ok_or(Error::CorruptStream)?;
                    samples[i] = x;
                    errors[i] = x.abs_diff(pred);
                    i += 1;
                }
            }
        }
    }
    Ok(samples)
}

const LEN_K: u32 = 2;

fn best_k(values: impl Fn(u32) -> u64, ks: std::ops::Range<u32>) -> (u32, u64) {
    ks.map(|k| (k, values(k))).min_by_key(|&(k, b)| (b, k)).unwrap()
}

fn coef_len(coefs: &[i16]) -> usize {
    coefs.iter().rposition(|&a| a != 0).map_or(0, |p| p + 1)
}

/// Bits of a class's coefficient block: its length (trailing zeros are not
/// sent), an Exp-Golomb order and the signed coefficients.
pub fn coefficient_bits(coefs: &[i16]) -> u64 {
    let len = coef_len(coefs);
    let mut bits = ue_len(len as u64, LEN_K) as u64;
    if len > 0 {
        bits += 2 + best_k(|k| coefs[..len].iter().map(|&a| se_len(a as i64, k) as u64).sum(), 0..4).1;
    }
    bits
}

fn threshold_deltas(th: &[u32; NUM_THRESHOLDS]) -> [u64; NUM_THRESHOLDS] {
    core::array::from_fn(|i| if i == 0 { th[0] as u64 } else { (th[i] - th[i - 1]) as u64 })
}

/// Bits of the thresholds (shared Exp-Golomb order, first value then
/// deltas) and of the 16 shape indices.
pub fn threshold_bits(model: &ClassModel) -> u64 {
    let d = threshold_deltas(&model.thresholds);
    let th = 4 + best_k(|k| d.iter().map(|&x| ue_len(x, k) as u64).sum(), 0..16).1;
    let shapes: u64 = model
        .shapes
        .iter()
        .map(|&s| ue_len((SHAPE_MENU.len() - 1 - s as usize) as u64, 0) as u64)
        .sum();
    th + shapes
}

pub fn write_class(w: &mut BitWriter, model: &ClassModel) {
    let c = &model.coefficients;
    let len = coef_len(c);
    w.write_ue(len as u64, LEN_K);
    if len > 0 {
        let (k, _) = best_k(|k| c[..len].iter().map(|&a| se_len(a as i64, k) as u64).sum(), 0..4);
        w.write_bits(k as u64, 2);
        for &a in &c[..len] {
            w.write_se(a as i64, k);
        }
    }
    let d = threshold_deltas(&model.thresholds);
    let (k, _) = best_k(|k| d.iter().map(|&x| ue_len(x, k) as u64).sum(), 0..16);
    w.write_bits(k as u64, 4);
    for &x in &d {
        w.write_ue(x, k);
    }
    for &s in &model.shapes {
        w.write_ue((SHAPE_MENU.len() - 1 - s as usize) as u64, 0);
    }
}

pub fn read_class(r: &mut BitReader, taps: usize) -> Result<ClassModel> {
    let len = r.read_ue(LEN_K)? as usize;
    if len > taps {
        return Err(Error::MalformedHeader(format!("{len} coefficients for {taps} taps")));
    }
    let mut coefs = vec![0i16; taps];
    if len > 0 {
        let k = r.read_bits(2)? as u32;
        for a in &mut coefs[..len] {
            let v = r.read_se(k)?;
            *a = i16::try_from(v).map_err(|_| Error::MalformedHeader("coefficient overflow".into()))?;
        }
    }
    let k = r.read_bits(4)? as u32;
    let mut thresholds = [0u32; NUM_THRESHOLDS];
    let mut acc = 0u64;
    for th in &mut thresholds {
        acc += r.read_ue(k)?;
        *th = u32::try_from(acc).map_err(|_| Error::MalformedHeader("threshold overflow".into()))?;
    }
    let mut shapes = [0u8; NUM_GROUPS];
    for sh in &mut shapes {
        let v = r.read_ue(0)?;
        if v >= SHAPE_MENU.len() as u64 {
            return Err(Error::MalformedHeader(format!("shape index {v}")));
        }
        *sh = (SHAPE_MENU.len() as u64 - 1 - v) as u8;
    }
    Ok(ClassModel {
        coefficients: coefs,
        thresholds,
        shapes,
    })
}

/// Converts cost units to whole bits, rounding up.
pub fn units_to_whole_bits(units: u64) -> u64 {
    units.div_ceil(1 << COST_FRAC_BITS)
}
