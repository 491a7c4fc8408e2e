//! 4D linear prediction from the current SAI and its four causal neighbours.
//!
//! A pixel `p0` of SAI `(t, s)` is predicted as a fixed-point linear
//! combination of taps taken from five support regions: causal pixels of the
//! current SAI (role `c`) and windows of the left, top-left, top and
//! top-right SAIs (roles `l`, `tl`, `t`, `tr`), which are fully decoded and
//! may therefore be sampled on both sides of the co-located pixel.
//!
//! The same supports define the error context: previously coded absolute
//! residuals weighted by the inverse of their 3D distance to `p0`, with an
//! angular distance of 1 for every reference SAI.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::lightfield::{Dims, NeighborRole};

/// Fractional bits of the coefficient fixed point format.
pub const COEF_FRAC_BITS: u32 = 6;
pub const COEF_ONE: i32 = 1 << COEF_FRAC_BITS;
pub const NUM_THRESHOLDS: usize = 15;
pub const NUM_GROUPS: usize = NUM_THRESHOLDS + 1;
/// Context values are carried in units of 1/16.
pub const CONTEXT_FRAC_BITS: u32 = 4;

pub const DEFAULT_K_CURRENT: usize = 20;
pub const DEFAULT_K_REFERENCE: usize = 13;
pub const MAX_K_CURRENT: usize = 60;
pub const MAX_K_REFERENCE: usize = 41;

/// Reference search window; large enough for the supported tap counts.
const WINDOW: i32 = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SupportRole {
    Current,
    Reference(NeighborRole),
}

impl SupportRole {
    pub const ORDER: [SupportRole; 5] = [
        SupportRole::Current,
        SupportRole::Reference(NeighborRole::Left),
        SupportRole::Reference(NeighborRole::TopLeft),
        SupportRole::Reference(NeighborRole::Top),
        SupportRole::Reference(NeighborRole::TopRight),
    ];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Offset {
    pub dv: i32,
    pub du: i32,
}

impl Offset {
    pub const fn new(dv: i32, du: i32) -> Self {
        Offset { dv, du }
    }

    fn dist2(&self) -> i32 {
        self.dv * self.dv + self.du * self.du
    }

    /// Strictly before the origin in raster order.
    pub fn is_causal(&self) -> bool {
        self.dv < 0 || (self.dv == 0 && self.du < 0)
    }
}

/// Offsets of every support region. All four reference roles share one
/// offset list.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SupportShape {
    current: Vec<Offset>,
    reference: Vec<Offset>,
}

fn nearest_offsets(k: usize, keep: impl Fn(&Offset) -> bool) -> Vec<Offset> {
    let mut all: Vec<Offset> = (-WINDOW..=WINDOW)
        .flat_map(|dv| (-WINDOW..=WINDOW).map(move |du| Offset::new(dv, du)))
        .filter(|o| keep(o))
        .collect();
    all.sort_by_key(|o| (o.dist2(), o.dv, o.du));
    all.truncate(k);
    all
}

impl SupportShape {
    /// `k_current` causal taps in the current SAI and `k_reference` taps in
    /// each reference SAI (0 disables inter-SAI prediction), ordered by
    /// increasing distance with ties broken by `(dv, du)`.
    pub fn new(k_current: usize, k_reference: usize) -> Result<Self> {
        if k_current == 0 || k_current > MAX_K_CURRENT {
            return Err(Error::InvalidArgument(format!(
                "current-SAI support size must be 1..={MAX_K_CURRENT}, got {k_current}"
            )));
        }
        if k_reference > MAX_K_REFERENCE {
            return Err(Error::InvalidArgument(format!(
                "reference support size must be 0..={MAX_K_REFERENCE}, got {k_reference}"
            )));
        }
        Ok(SupportShape {
            current: nearest_offsets(k_current, Offset::is_causal),
            reference: nearest_offsets(k_reference, |_| true),
        })
    }

    pub fn k_current(&self) -> usize {
        self.current.len()
    }

    pub fn k_reference(&self) -> usize {
        self.reference.len()
    }

    pub fn uses_references(&self) -> bool {
        !self.reference.is_empty()
    }

    /// Total coefficient count `Σ K_i`.
    pub fn len(&self) -> usize {
        self.current.len() + 4 * self.reference.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn offsets(&self, role: SupportRole) -> &[Offset] {
        match role {
            SupportRole::Current => &self.current,
            SupportRole::Reference(_) => &self.reference,
        }
    }

    /// Every tap in coefficient order: role `c` first, then `l, tl, t, tr`.
    pub fn taps(&self) -> Vec<(SupportRole, Offset)> {
        let mut out = Vec::with_capacity(self.len());
        out.extend(self.current.iter().map(|&o| (SupportRole::Current, o)));
        if self.uses_references() {
            for role in NeighborRole::ALL {
                out.extend(self.reference.iter().map(|&o| (SupportRole::Reference(role), o)));
            }
        }
        out
    }
}

/// Inverse-distance weights of the error context, `1/δ` with
/// `δ = sqrt(dv² + du² + d²) / 64` and `d = 1` for reference SAIs.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceWeights {
    delta: Vec<f64>,
    fixed: Vec<u32>,
}

impl DistanceWeights {
    pub fn new(shape: &SupportShape) -> Self {
        let delta: Vec<f64> = shape
            .taps()
            .iter()
            .map(|(role, o)| {
                let d = if *role == SupportRole::Current { 0 } else { 1 };
                ((o.dist2() + d) as f64).sqrt() / 64.0
            })
            .collect();
        let fixed = delta
            .iter()
            .map(|&dl| ((1u32 << CONTEXT_FRAC_BITS) as f64 / dl).round() as u32)
            .collect();
        DistanceWeights { delta, fixed }
    }

    pub fn delta(&self, tap: usize) -> f64 {
        self.delta[tap]
    }

    /// `1/δ` in context units (1/16).
    pub fn weight_fixed(&self, tap: usize) -> u32 {
        self.fixed[tap]
    }
}

/// One linear predictor with its context quantiser and group shapes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassModel {
    /// Fixed point with [`COEF_FRAC_BITS`] fractional bits, in tap order.
    pub coefficients: Vec<i16>,
    pub thresholds: [u32; NUM_THRESHOLDS],
    /// Index into the shape-parameter menu, per context group.
    pub shapes: [u8; NUM_GROUPS],
}

impl ClassModel {
    pub fn new(coefficients: Vec<i16>) -> Self {
        ClassModel {
            coefficients,
            thresholds: [0; NUM_THRESHOLDS],
            shapes: [crate::entropy::model::GAUSSIAN_SHAPE_INDEX; NUM_GROUPS],
        }
    }

    /// Predictor copying the left neighbour.
    pub fn left_copy(shape: &SupportShape) -> Self {
        let mut coefs = vec![0i16; shape.len()];
        if let Some(k) = shape.offsets(SupportRole::Current).iter().position(|o| *o == Offset::new(0, -1)) {
            coefs[k] = COEF_ONE as i16;
        }
        Self::new(coefs)
    }
}

/// Read access to one working colour plane.
#[derive(Debug, Clone, Copy)]
pub struct PlaneRef<'a> {
    pub samples: &'a [u32],
    pub dims: Dims,
    pub max_value: u32,
}

#[derive(Debug, Clone, Copy)]
struct TapSlot {
    role: SupportRole,
    off: Offset,
    /// Linear displacement for pixels where the whole support is in bounds.
    linear: isize,
}

/// Support geometry resolved against concrete light field dimensions.
#[derive(Debug, Clone)]
pub struct SupportLayout {
    shape: SupportShape,
    weights: DistanceWeights,
    dims: Dims,
    slots: Vec<TapSlot>,
    reach_c: i32,
    reach_r: i32,
}

impl SupportLayout {
    pub fn new(shape: SupportShape, dims: Dims) -> Self {
        let weights = DistanceWeights::new(&shape);
        let sai = dims.sai_pixels() as isize;
        let slots = shape
            .taps()
            .into_iter()
            .map(|(role, off)| {
                let within = off.dv as isize * dims.u as isize + off.du as isize;
                let linear = match role {
                    SupportRole::Current => within,
                    SupportRole::Reference(r) => {
                        let (dt, ds) = r.offset();
                        (dt * dims.s as isize + ds) * sai + within
                    }
                };
                TapSlot { role, off, linear }
            })
            .collect();
        let reach = |offs: &[Offset]| offs.iter().map(|o| o.dv.abs().max(o.du.abs())).max().unwrap_or(0);
        SupportLayout {
            reach_c: reach(&shape.current),
            reach_r: reach(&shape.reference),
            shape,
            weights,
            dims,
            slots,
        }
    }

    pub fn shape(&self) -> &SupportShape {
        &self.shape
    }

    pub fn weights(&self) -> &DistanceWeights {
        &self.weights
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    fn interior(&self, t: usize, s: usize, v: usize, u: usize) -> bool {
        let d = self.dims;
        let r = self.reach_c.max(self.reach_r) as usize;
        let spatial = v >= r && u >= r && v + r < d.v && u + r < d.u;
        let angular = !self.shape.uses_references() || (t >= 1 && s >= 1 && s + 1 < d.s);
        spatial && angular
    }

    fn sai_exists(&self, t: usize, s: usize, role: NeighborRole) -> bool {
        let (dt, ds) = role.offset();
        let (tt, ss) = (t as isize + dt, s as isize + ds);
        tt >= 0 && ss >= 0 && (ss as usize) < self.dims.s
    }

    /// Sample of the current SAI at `(v+dv, u+du)`, substituting the nearest
    /// causal sample when the position is outside the SAI.
    fn current_sample(&self, plane: &PlaneRef, t: usize, s: usize, v: usize, u: usize, off: Offset) -> u32 {
        let d = self.dims;
        let vv = (v as i32 + off.dv).clamp(0, d.v as i32 - 1) as usize;
        let uu = (u as i32 + off.du).clamp(0, d.u as i32 - 1) as usize;
        if vv < v || (vv == v && uu < u) {
            return plane.samples[d.index(t, s, vv, uu)];
        }
        if u > 0 {
            plane.samples[d.index(t, s, v, u - 1)]
        } else if v > 0 {
            plane.samples[d.index(t, s, v - 1, u)]
        } else {
            self.first_pixel_substitute(plane, t, s)
        }
    }

    fn first_pixel_substitute(&self, plane: &PlaneRef, t: usize, s: usize) -> u32 {
        if self.shape.uses_references() {
            for role in [NeighborRole::Left, NeighborRole::Top, NeighborRole::TopLeft, NeighborRole::TopRight] {
                if self.sai_exists(t, s, role) {
                    let (dt, ds) = role.offset();
                    let (tt, ss) = ((t as isize + dt) as usize, (s as isize + ds) as usize);
                    return plane.samples[self.dims.index(tt, ss, 0, 0)];
                }
            }
        }
        plane.max_value.div_ceil(2)
    }

    fn reference_sample(&self, plane: &PlaneRef, t: usize, s: usize, v: usize, u: usize, role: NeighborRole, off: Offset) -> u32 {
        let d = self.dims;
        let vv = (v as i32 + off.dv).clamp(0, d.v as i32 - 1) as usize;
        let uu = (u as i32 + off.du).clamp(0, d.u as i32 - 1) as usize;
        let pick = [role, NeighborRole::Left, NeighborRole::Top, NeighborRole::TopLeft, NeighborRole::TopRight]
            .into_iter()
            .find(|&r| self.sai_exists(t, s, r));
        match pick {
            Some(r) => {
                let (dt, ds) = r.offset();
                let (tt, ss) = ((t as isize + dt) as usize, (s as isize + ds) as usize);
                plane.samples[d.index(tt, ss, vv, uu)]
            }
            None => self.current_sample(plane, t, s, v, u, Offset::new(0, -1)),
        }
    }

    /// Fills `out` with the support samples of pixel `(t, s, v, u)`.
    pub fn gather(&self, plane: &PlaneRef, t: usize, s: usize, v: usize, u: usize, out: &mut [u32]) {
        debug_assert_eq!(out.len(), self.slots.len());
        if self.interior(t, s, v, u) {
            let base = self.dims.index(t, s, v, u) as isize;
            for (o, slot) in out.iter_mut().zip(&self.slots) {
                *o = plane.samples[(base + slot.linear) as usize];
            }
            return;
        }
        for (o, slot) in out.iter_mut().zip(&self.slots) {
            *o = match slot.role {
                SupportRole::Current => self.current_sample(plane, t, s, v, u, slot.off),
                SupportRole::Reference(r) => self.reference_sample(plane, t, s, v, u, r, slot.off),
            };
        }
    }

    /// Weighted sum of coded absolute residuals around `(t, s, v, u)`, in
    /// units of 1/16. Positions outside the light field contribute nothing.
    pub fn context(&self, errors: &[u32], t: usize, s: usize, v: usize, u: usize) -> u64 {
        let d = self.dims;
        let mut acc = 0u64;
        if self.interior(t, s, v, u) {
            let base = self.dims.index(t, s, v, u) as isize;
            for (k, slot) in self.slots.iter().enumerate() {
                acc += self.weights.fixed[k] as u64 * errors[(base + slot.linear) as usize] as u64;
            }
            return acc;
        }
        for (k, slot) in self.slots.iter().enumerate() {
            let vv = v as i32 + slot.off.dv;
            let uu = u as i32 + slot.off.du;
            if vv < 0 || uu < 0 || vv >= d.v as i32 || uu >= d.u as i32 {
                continue;
            }
            let (tt, ss) = match slot.role {
                SupportRole::Current => (t, s),
                SupportRole::Reference(r) => {
                    if !self.sai_exists(t, s, r) {
                        continue;
                    }
                    let (dt, ds) = r.offset();
                    ((t as isize + dt) as usize, (s as isize + ds) as usize)
                }
            };
            acc += self.weights.fixed[k] as u64 * errors[d.index(tt, ss, vv as usize, uu as usize)] as u64;
        }
        acc
    }
}

/// Fixed-point dot product, rounded to nearest and clamped to the sample range.
#[inline]
pub fn predict_from_taps(coefficients: &[i16], taps: &[u32], max_value: u32) -> u32 {
    let acc: i64 = coefficients
        .iter()
        .zip(taps)
        .map(|(&a, &x)| a as i64 * x as i64)
        .sum();
    let rounded = (acc + (1 << (COEF_FRAC_BITS - 1))) >> COEF_FRAC_BITS;
    rounded.clamp(0, max_value as i64) as u32
}

/// Prediction `ŝ(0)` of one pixel with the given class.
pub fn predict(plane: &PlaneRef, layout: &SupportLayout, pos: (usize, usize, usize, usize), model: &ClassModel) -> u32 {
    let mut taps = vec![0u32; layout.len()];
    layout.gather(plane, pos.0, pos.1, pos.2, pos.3, &mut taps);
    predict_from_taps(&model.coefficients, &taps, plane.max_value)
}

/// Context value `C` converted to a real number.
pub fn context_value(errors: &[u32], layout: &SupportLayout, pos: (usize, usize, usize, usize)) -> f64 {
    layout.context(errors, pos.0, pos.1, pos.2, pos.3) as f64 / (1u64 << CONTEXT_FRAC_BITS) as f64
}

/// Group index: the number of thresholds not exceeding `c`.
#[inline]
pub fn quantise_context(c: u64, thresholds: &[u32; NUM_THRESHOLDS]) -> usize {
    thresholds.partition_point(|&th| th as u64 <= c)
}

/// Accumulated normal equations `Σ x xᵀ a = Σ x y` over a pixel set.
/// Integer accumulation keeps the sums exact and order independent.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NormalEquations {
    n: usize,
    /// Upper triangle, row-major.
    gram: Vec<u64>,
    rhs: Vec<u64>,
    yy: u64,
    count: u64,
}

impl NormalEquations {
    pub fn new(n: usize) -> Self {
        NormalEquations {
            n,
            gram: vec![0; n * (n + 1) / 2],
            rhs: vec![0; n],
            yy: 0,
            count: 0,
        }
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn add(&mut self, taps: &[u32], target: u32) {
        let mut k = 0;
        for i in 0..self.n {
            let xi = taps[i] as u64;
            self.rhs[i] += xi * target as u64;
            for &xj in &taps[i..self.n] {
                self.gram[k] += xi * xj as u64;
                k += 1;
            }
        }
        self.yy += target as u64 * target as u64;
        self.count += 1;
    }

    pub fn merge(&mut self, other: &NormalEquations) {
        for (a, b) in self.gram.iter_mut().zip(&other.gram) {
            *a += b;
        }
        for (a, b) in self.rhs.iter_mut().zip(&other.rhs) {
            *a += b;
        }
        self.yy += other.yy;
        self.count += other.count;
    }

    pub fn subtract(&mut self, other: &NormalEquations) {
        for (a, b) in self.gram.iter_mut().zip(&other.gram) {
            *a -= b;
        }
        for (a, b) in self.rhs.iter_mut().zip(&other.rhs) {
            *a -= b;
        }
        self.yy -= other.yy;
        self.count -= other.count;
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Least-squares solution in floating point. Falls back to a ridge
    /// regularised solve when the system is singular.
    pub fn solve(&self) -> Option<Vec<f64>> {
        self.solve_prefix(self.n)
    }

    /// Least-squares solution restricted to the first `len` taps.
    pub fn solve_prefix(&self, len: usize) -> Option<Vec<f64>> {
        if self.count == 0 || len == 0 || len > self.n {
            return None;
        }
        let n = len;
        let mut m = DMatrix::<f64>::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let g = self.gram[packed_index(self.n, i, j)] as f64;
                m[(i, j)] = g;
                m[(j, i)] = g;
            }
        }
        let b = DVector::from_iterator(n, self.rhs[..n].iter().map(|&x| x as f64));
        let scale = (0..n).map(|i| m[(i, i)]).sum::<f64>() / n as f64 + 1.0;
        let mut ridge = 0.0;
        for _ in 0..12 {
            let mut mr = m.clone();
            for i in 0..n {
                mr[(i, i)] += ridge;
            }
            if let Some(chol) = mr.cholesky() {
                let x = chol.solve(&b);
                if x.iter().all(|v| v.is_finite()) {
                    return Some(x.iter().copied().collect());
                }
            }
            ridge = if ridge == 0.0 { scale * 1e-9 } else { ridge * 100.0 };
        }
        None
    }

    /// Squared prediction error of fixed-point coefficients over the
    /// accumulated set, ignoring rounding and clamping of the prediction.
    pub fn sse(&self, coefficients: &[i16]) -> f64 {
        let a: Vec<f64> = coefficients.iter().map(|&c| c as f64 / COEF_ONE as f64).collect();
        let mut quad = 0.0;
        for i in 0..self.n {
            if a[i] == 0.0 {
                continue;
            }
            quad += a[i] * a[i] * self.gram[packed_index(self.n, i, i)] as f64;
            for j in i + 1..self.n {
                quad += 2.0 * a[i] * a[j] * self.gram[packed_index(self.n, i, j)] as f64;
            }
        }
        let lin: f64 = a.iter().zip(&self.rhs).map(|(x, &r)| x * r as f64).sum();
        (self.yy as f64 - 2.0 * lin + quad).max(0.0)
    }
}

/// Offset of `(i, j)`, `i ≤ j`, in a row-major packed upper triangle of order `n`.
fn packed_index(n: usize, i: usize, j: usize) -> usize {
    i * n - i * (i + 1) / 2 + j
}

/// Rounds real coefficients to the fixed-point grid while preserving the
/// rounded sum (largest-remainder rounding), so unit-gain predictors stay
/// unit-gain after quantisation.
pub fn quantise_coefficients(real: &[f64]) -> Vec<i16> {
    let scaled: Vec<f64> = real
        .iter()
        .map(|&a| (a * COEF_ONE as f64).clamp(i16::MIN as f64, i16::MAX as f64))
        .collect();
    let target = scaled.iter().sum::<f64>().round() as i64;
    let mut q: Vec<i64> = scaled.iter().map(|x| x.floor() as i64).collect();
    let mut deficit = target - q.iter().sum::<i64>();
    let mut order: Vec<usize> = (0..scaled.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = scaled[a] - scaled[a].floor();
        let fb = scaled[b] - scaled[b].floor();
        fb.partial_cmp(&fa).unwrap().then(a.cmp(&b))
    });
    for &i in order.iter().cycle().take(scaled.len() * 2) {
        if deficit <= 0 {
            break;
        }
        if q[i] < i16::MAX as i64 {
            q[i] += 1;
            deficit -= 1;
        }
    }
    q.into_iter().map(|x| x.clamp(i16::MIN as i64, i16::MAX as i64) as i16).collect()
}

/// Designs the least-squares predictor for the pixels listed in `pixels`
/// (linear plane indices).
pub fn design_coefficients(plane: &PlaneRef, layout: &SupportLayout, pixels: &[usize]) -> Option<Vec<i16>> {
    let d = plane.dims;
    let mut eq = NormalEquations::new(layout.len());
    let mut taps = vec![0u32; layout.len()];
    for &i in pixels {
        let (t, s, v, u) = d.coords(i);
        layout.gather(plane, t, s, v, u, &mut taps);
        eq.add(&taps, plane.samples[i]);
    }
    eq.solve().map(|a| quantise_coefficients(&a))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn shifted_lf(dims: Dims) -> Vec<u32> {
        // SAI (t, s) is the base texture shifted by s pixels horizontally.
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let base: Vec<u32> = (0..dims.v * (dims.u + dims.s)).map(|_| rng.gen_range(0..256)).collect();
        let w = dims.u + dims.s;
        let mut out = vec![0; dims.pixels()];
        for t in 0..dims.t {
            for s in 0..dims.s {
                for v in 0..dims.v {
                    for u in 0..dims.u {
                        out[dims.index(t, s, v, u)] = base[v * w + u + s];
                    }
                }
            }
        }
        out
    }

    #[test]
    fn current_support_is_causal_and_ordered() {
        let shape = SupportShape::new(20, 13).unwrap();
        let c = shape.offsets(SupportRole::Current);
        assert_eq!(c.len(), 20);
        assert!(c.iter().all(Offset::is_causal));
        assert_eq!(c[0], Offset::new(-1, 0));
        assert_eq!(c[1], Offset::new(0, -1));
        assert_eq!(c[18], Offset::new(-3, -2));
        assert_eq!(c[19], Offset::new(-3, 2));
        let r = shape.offsets(SupportRole::Reference(NeighborRole::Left));
        assert_eq!(r.len(), 13);
        assert_eq!(r[0], Offset::new(0, 0));
        assert_eq!(shape.len(), 20 + 4 * 13);
        let r5 = SupportShape::new(20, 5).unwrap();
        assert_eq!(r5.offsets(SupportRole::Reference(NeighborRole::Top)).len(), 5);
    }

    #[test]
    fn zero_predictor_predicts_zero() {
        let dims = Dims::new(2, 2, 4, 4);
        let samples: Vec<u32> = (0..dims.pixels() as u32).collect();
        let plane = PlaneRef { samples: &samples, dims, max_value: 255 };
        let layout = SupportLayout::new(SupportShape::new(20, 13).unwrap(), dims);
        let model = ClassModel::new(vec![0; layout.len()]);
        for i in 0..dims.pixels() {
            let pos = (i / 32, (i / 16) % 2, (i / 4) % 4, i % 4);
            assert_eq!(predict(&plane, &layout, pos, &model), 0);
        }
    }

    #[test]
    fn copy_predictor_returns_colocated_sample() {
        let dims = Dims::new(1, 2, 4, 4);
        let mut samples = vec![0u32; dims.pixels()];
        for v in 0..4 {
            for u in 0..4 {
                let x = (v * 4 + u) as u32 * 9;
                samples[dims.index(0, 0, v, u)] = x;
                samples[dims.index(0, 1, v, u)] = x;
            }
        }
        let plane = PlaneRef { samples: &samples, dims, max_value: 255 };
        let shape = SupportShape::new(20, 13).unwrap();
        let layout = SupportLayout::new(shape.clone(), dims);
        let tap = shape
            .taps()
            .iter()
            .position(|&(r, o)| r == SupportRole::Reference(NeighborRole::Left) && o == Offset::new(0, 0))
            .unwrap();
        let mut coefs = vec![0i16; shape.len()];
        coefs[tap] = COEF_ONE as i16;
        let model = ClassModel::new(coefs);
        for v in 0..4 {
            for u in 0..4 {
                assert_eq!(predict(&plane, &layout, (0, 1, v, u), &model), samples[dims.index(0, 1, v, u)]);
            }
        }
    }

    #[test]
    fn shifted_views_predict_exactly_from_left_reference() {
        let dims = Dims::new(2, 4, 8, 12);
        let samples = shifted_lf(dims);
        let plane = PlaneRef { samples: &samples, dims, max_value: 255 };
        let shape = SupportShape::new(20, 13).unwrap();
        let layout = SupportLayout::new(shape.clone(), dims);
        let tap = shape
            .taps()
            .iter()
            .position(|&(r, o)| r == SupportRole::Reference(NeighborRole::Left) && o == Offset::new(0, 1))
            .unwrap();
        let mut coefs = vec![0i16; shape.len()];
        coefs[tap] = COEF_ONE as i16;
        let model = ClassModel::new(coefs);
        for t in 0..dims.t {
            for s in 1..dims.s {
                for v in 0..dims.v {
                    for u in 0..dims.u - 1 {
                        let i = dims.index(t, s, v, u);
                        assert_eq!(predict(&plane, &layout, (t, s, v, u), &model), samples[i]);
                    }
                }
            }
        }
    }

    #[test]
    fn design_recovers_unit_tap_on_linear_data() {
        // Rows are a ramp along u, so s(v, u) = s(v, u-1) + 1 does not hold
        // exactly with a single tap; use a plane where each row is constant.
        let dims = Dims::new(1, 1, 16, 16);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let rows: Vec<u32> = (0..16).map(|_| rng.gen_range(0..256)).collect();
        let samples: Vec<u32> = (0..dims.pixels()).map(|i| rows[i / 16]).collect();
        let plane = PlaneRef { samples: &samples, dims, max_value: 255 };
        let layout = SupportLayout::new(SupportShape::new(2, 0).unwrap(), dims);
        // Taps are (-1,0) and (0,-1); exclude column 0 where (0,-1) is substituted.
        let pixels: Vec<usize> = (0..dims.pixels()).filter(|i| i % 16 != 0 && i / 16 != 0).collect();
        let coefs = design_coefficients(&plane, &layout, &pixels).unwrap();
        assert_eq!(coefs, vec![0, COEF_ONE as i16]);
    }

    #[test]
    fn design_matches_least_squares_oracle() {
        let dims = Dims::new(1, 1, 24, 24);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let samples: Vec<u32> = (0..dims.pixels()).map(|_| rng.gen_range(0..256)).collect();
        let plane = PlaneRef { samples: &samples, dims, max_value: 255 };
        let layout = SupportLayout::new(SupportShape::new(2, 0).unwrap(), dims);
        let pixels: Vec<usize> = (0..dims.pixels()).collect();
        let coefs = design_coefficients(&plane, &layout, &pixels).unwrap();

        // Oracle: explicit 2x2 normal equations solved by Cramer's rule.
        let (mut a11, mut a12, mut a22, mut b1, mut b2) = (0f64, 0f64, 0f64, 0f64, 0f64);
        let mut taps = [0u32; 2];
        for &i in &pixels {
            layout.gather(&plane, 0, 0, i / 24, i % 24, &mut taps);
            let (x1, x2, y) = (taps[0] as f64, taps[1] as f64, samples[i] as f64);
            a11 += x1 * x1;
            a12 += x1 * x2;
            a22 += x2 * x2;
            b1 += x1 * y;
            b2 += x2 * y;
        }
        let det = a11 * a22 - a12 * a12;
        let w1 = (b1 * a22 - b2 * a12) / det;
        let w2 = (a11 * b2 - a12 * b1) / det;
        for (q, w) in coefs.iter().zip([w1, w2]) {
            assert!((*q as f64 / 64.0 - w).abs() <= 1.0 / 64.0, "{q} vs {w}");
        }
    }

    #[test]
    fn constant_block_has_zero_residual() {
        let dims = Dims::new(2, 2, 8, 8);
        let samples = vec![117u32; dims.pixels()];
        let plane = PlaneRef { samples: &samples, dims, max_value: 255 };
        let layout = SupportLayout::new(SupportShape::new(20, 13).unwrap(), dims);
        let pixels: Vec<usize> = (0..dims.pixels()).collect();
        let coefs = design_coefficients(&plane, &layout, &pixels).unwrap();
        assert_eq!(coefs.iter().map(|&c| c as i32).sum::<i32>(), COEF_ONE);
        let model = ClassModel::new(coefs);
        assert_eq!(predict(&plane, &layout, (1, 1, 4, 4), &model), 117);
        assert_eq!(predict(&plane, &layout, (0, 1, 0, 0), &model), 117);
        // the very first pixel has no causal samples at all
        assert_eq!(predict(&plane, &layout, (0, 0, 0, 0), &model), 128);
    }

    #[test]
    fn context_examples() {
        let dims = Dims::new(1, 2, 3, 3);
        let layout = SupportLayout::new(SupportShape::new(20, 13).unwrap(), dims);
        let mut errors = vec![0u32; dims.pixels()];
        assert_eq!(context_value(&errors, &layout, (0, 1, 1, 1)), 0.0);
        // residual 1 at the left neighbour in the current SAI
        errors[dims.index(0, 1, 1, 0)] = 1;
        assert_eq!(context_value(&errors, &layout, (0, 1, 1, 1)), 64.0);
        errors.iter_mut().for_each(|e| *e = 0);
        // residual 1 at the co-located pixel of the left SAI
        errors[dims.index(0, 0, 1, 1)] = 1;
        assert_eq!(context_value(&errors, &layout, (0, 1, 1, 1)), 64.0);
        let w = layout.weights();
        assert!((w.delta(0) - 1.0 / 64.0).abs() < 1e-12);
    }

    #[test]
    fn quantise_context_examples() {
        let th: [u32; 15] = core::array::from_fn(|i| (i as u32 + 1) * 16);
        assert_eq!(quantise_context(0, &th), 0);
        assert_eq!(quantise_context(10_000, &th), 15);
        assert_eq!(quantise_context(7 * 16 + 8, &th), 7); // C = 7.5
    }

    #[test]
    fn quantise_context_matches_linear_scan() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        for _ in 0..10_000 {
            let mut th: [u32; 15] = core::array::from_fn(|_| rng.gen_range(0..500));
            th.sort_unstable();
            let c = rng.gen_range(0..520u64);
            let oracle = th.iter().filter(|&&x| x as u64 <= c).count();
            assert_eq!(quantise_context(c, &th), oracle);
        }
    }

    #[test]
    fn four_reference_support_beats_intra_on_shifted_views() {
        let dims = Dims::new(3, 4, 12, 12);
        let samples = shifted_lf(dims);
        let plane = PlaneRef { samples: &samples, dims, max_value: 255 };
        let pixels: Vec<usize> = (0..dims.pixels()).collect();
        let mean_abs = |layout: &SupportLayout| {
            let model = ClassModel::new(design_coefficients(&plane, layout, &pixels).unwrap());
            let mut taps = vec![0; layout.len()];
            let mut sum = 0u64;
            for t in 0..dims.t {
                for s in 0..dims.s {
                    for v in 0..dims.v {
                        for u in 0..dims.u {
                            layout.gather(&plane, t, s, v, u, &mut taps);
                            let p = predict_from_taps(&model.coefficients, &taps, 255);
                            sum += p.abs_diff(samples[dims.index(t, s, v, u)]) as u64;
                        }
                    }
                }
            }
            sum as f64 / dims.pixels() as f64
        };
        let inter = mean_abs(&SupportLayout::new(SupportShape::new(20, 13).unwrap(), dims));
        let intra = mean_abs(&SupportLayout::new(SupportShape::new(20, 0).unwrap(), dims));
        assert!(inter < intra, "{inter} vs {intra}");
    }
}
