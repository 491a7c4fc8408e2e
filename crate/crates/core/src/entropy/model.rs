//! Generalised-Gaussian residual models.
//!
//! Residuals are folded onto a non-negative alphabet before coding. Each
//! context group `n` owns a fixed standard deviation on a geometric ladder
//! and every class picks, per group, one shape parameter `β` from a small
//! menu. For every `(group, shape)` pair a static frequency table is built
//! once from
//!
//! ```text
//! pdf(e) ∝ exp(−(|e| / s)^β),   s = σ · sqrt(Γ(1/β) / Γ(3/β))
//! ```
//!
//! Large folded values are coded as an escape bucket (four per power of
//! two) followed by raw bits. Tables stay small even for 16-bit samples, so
//! the minimum count of one per symbol takes almost no probability mass.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use crate::prediction::NUM_GROUPS;

pub const SCALE_BITS: u32 = 15;
/// Total of every static frequency table.
pub const SCALE: u32 = 1 << SCALE_BITS;
/// Costs are kept as integers in units of 2⁻¹⁶ bit.
pub const COST_FRAC_BITS: u32 = 16;
pub const COST_ONE: u64 = 1 << COST_FRAC_BITS;
pub const SHAPE_MENU: [f64; 6] = [0.6, 0.8, 1.0, 1.2, 1.6, 2.0];
pub const GAUSSIAN_SHAPE_INDEX: u8 = 5;
pub const VARIANCE_FLOOR: f64 = 0.1;
/// Folded values below this get their own symbol.
pub const DIRECT_SYMBOLS: u32 = 32;
const DIRECT_BITS: u32 = DIRECT_SYMBOLS.trailing_zeros();
/// Escape buckets per power of two.
pub const SUB_BUCKETS: u32 = 4;
const SUB_BITS: u32 = SUB_BUCKETS.trailing_zeros();

/// Cost of a symbol of frequency `freq` out of `total`, in cost units.
pub fn cost_units(freq: u32, total: u32) -> u32 {
    debug_assert!(freq > 0 && freq <= total);
    (-libm::log2(freq as f64 / total as f64) * COST_ONE as f64).round() as u32
}

pub fn units_to_bits(units: u64) -> f64 {
    units as f64 / COST_ONE as f64
}

/// Maps a residual onto `0..=max_value` given the prediction: small
/// magnitudes interleave `0, −1, +1, −2, +2, …`; once one side of the
/// sample range is exhausted the remaining side continues linearly.
pub fn fold(sample: u32, prediction: u32, max_value: u32) -> u32 {
    let theta = prediction.min(max_value - prediction);
    let e = sample as i64 - prediction as i64;
    let mag = e.unsigned_abs() as u32;
    if mag <= theta {
        if e >= 0 {
            2 * mag
        } else {
            2 * mag - 1
        }
    } else {
        theta + mag
    }
}

/// Inverse of [`fold`]. `None` if `f` is outside the sample range.
pub fn unfold(f: u32, prediction: u32, max_value: u32) -> Option<u32> {
    if f > max_value || prediction > max_value {
        return None;
    }
    let theta = prediction.min(max_value - prediction);
    if f <= 2 * theta {
        if f.is_multiple_of(2) {
            Some(prediction + f / 2)
        } else {
            Some(prediction - f.div_ceil(2))
        }
    } else {
        let mag = f - theta;
        if prediction <= max_value - prediction {
            Some(prediction + mag)
        } else {
            Some(prediction - mag)
        }
    }
}

fn floor_log2(x: u32) -> u32 {
    31 - x.leading_zeros()
}

/// Symbol alphabet of one plane: direct symbols for folded values below
/// [`DIRECT_SYMBOLS`], then [`SUB_BUCKETS`] escape buckets per power of two,
/// each followed by the raw low bits of the value.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Alphabet {
    pub max_value: u32,
    direct: u32,
    buckets: u32,
}

impl Alphabet {
    pub fn new(max_value: u32) -> Self {
        let direct = (max_value + 1).min(DIRECT_SYMBOLS);
        let buckets = if max_value >= DIRECT_SYMBOLS {
            (floor_log2(max_value) - DIRECT_BITS + 1) * SUB_BUCKETS
        } else {
            0
        };
        Alphabet { max_value, direct, buckets }
    }

    pub fn size(&self) -> usize {
        (self.direct + self.buckets) as usize
    }

    /// `(symbol, raw bit count, raw value)` of a folded value.
    #[inline]
    pub fn split(&self, f: u32) -> (u32, u32, u32) {
        if f < self.direct {
            (f, 0, 0)
        } else {
            let b = floor_log2(f);
            let raw_bits = b - SUB_BITS;
            let sub = (f >> raw_bits) & (SUB_BUCKETS - 1);
            let sym = self.direct + (b - DIRECT_BITS) * SUB_BUCKETS + sub;
            (sym, raw_bits, f & ((1 << raw_bits) - 1))
        }
    }

    #[inline]
    pub fn raw_bits(&self, symbol: u32) -> u32 {
        if symbol < self.direct {
            0
        } else {
            (symbol - self.direct) / SUB_BUCKETS + DIRECT_BITS - SUB_BITS
        }
    }

    pub fn join(&self, symbol: u32, raw: u32) -> u32 {
        if symbol < self.direct {
            symbol
        } else {
            self.span(symbol).0 + raw
        }
    }

    /// Folded values covered by `symbol`, as `(first, count)`; `count` may
    /// be 0 for buckets past `max_value`.
    fn span(&self, symbol: u32) -> (u32, u32) {
        if symbol < self.direct {
            (symbol, 1)
        } else {
            let k = symbol - self.direct;
            let b = k / SUB_BUCKETS + DIRECT_BITS;
            let raw_bits = b - SUB_BITS;
            let lo = (1u32 << b) | ((k % SUB_BUCKETS) << raw_bits);
            let hi = (lo as u64 + (1u64 << raw_bits)).min(self.max_value as u64 + 1);
            (lo, hi.saturating_sub(lo as u64) as u32)
        }
    }
}

/// Static frequency table of one context group.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContextGroupModel {
    /// Cumulative counts, length `alphabet + 1`, ending at [`SCALE`].
    cum: Vec<u32>,
    /// Cost of each symbol (raw bits excluded), in cost units.
    cost: Vec<u32>,
}

impl ContextGroupModel {
    pub fn len(&self) -> usize {
        self.cost.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cost.is_empty()
    }

    #[inline]
    pub fn cum(&self, symbol: u32) -> u32 {
        self.cum[symbol as usize]
    }

    #[inline]
    pub fn freq(&self, symbol: u32) -> u32 {
        self.cum[symbol as usize + 1] - self.cum[symbol as usize]
    }

    pub fn probability(&self, symbol: u32) -> f64 {
        self.freq(symbol) as f64 / SCALE as f64
    }

    #[inline]
    pub fn symbol_cost(&self, symbol: u32) -> u32 {
        self.cost[symbol as usize]
    }

    /// Symbol whose cumulative interval contains `target`.
    pub fn find(&self, target: u32) -> u32 {
        (self.cum.partition_point(|&c| c <= target) - 1) as u32
    }

    /// Entropy of the table in bits per symbol.
    pub fn entropy(&self) -> f64 {
        (0..self.len() as u32)
            .map(|s| {
                let p = self.probability(s);
                -p * p.log2()
            })
            .sum()
    }
}

fn gg_scale(sigma: f64, beta: f64) -> f64 {
    sigma * libm::sqrt(libm::tgamma(1.0 / beta) / libm::tgamma(3.0 / beta))
}

/// Discretised generalised-Gaussian table for variance `variance` and menu
/// shape `shape_index`, with a minimum count of 1 per symbol.
pub fn build_group_model(variance: f64, shape_index: u8, alphabet: &Alphabet) -> ContextGroupModel {
    let sigma = libm::sqrt(variance.max(VARIANCE_FLOOR));
    let beta = SHAPE_MENU[shape_index as usize];
    let s = gg_scale(sigma, beta);
    let n = alphabet.size();
    let weight = |mag: u32| libm::exp(-libm::pow(mag as f64 / s, beta));
    let w: Vec<f64> = (0..n as u32)
        .map(|sym| {
            let (first, count) = alphabet.span(sym);
            (first..first + count).map(|f| weight(f.div_ceil(2))).sum::<f64>()
        })
        .collect();
    let total_w: f64 = w.iter().sum();
    let spare = SCALE - n as u32;
    let mut freq: Vec<u32> = w
        .iter()
        .map(|&x| 1 + libm::floor(x / total_w * spare as f64) as u32)
        .collect();
    let assigned: u32 = freq.iter().sum();
    freq[0] += SCALE - assigned;
    let mut cum = Vec::with_capacity(n + 1);
    let mut acc = 0;
    cum.push(0);
    for &f in &freq {
        acc += f;
        cum.push(acc);
    }
    let cost = freq.iter().map(|&f| cost_units(f, SCALE)).collect();
    ContextGroupModel { cum, cost }
}

/// Standard deviations of the 16 context groups: geometric from
/// `sqrt(0.1)` up to half the sample range.
pub fn group_sigmas(max_value: u32) -> [f64; NUM_GROUPS] {
    let lo = libm::sqrt(VARIANCE_FLOOR);
    let hi = ((max_value as f64 + 1.0) / 2.0).max(lo);
    let ratio = libm::pow(hi / lo, 1.0 / (NUM_GROUPS - 1) as f64);
    core::array::from_fn(|n| lo * libm::pow(ratio, n as f64))
}

/// All `(group, shape)` tables for one sample range.
#[derive(Debug)]
pub struct ModelBank {
    pub alphabet: Alphabet,
    tables: Vec<ContextGroupModel>,
}

impl ModelBank {
    pub fn new(max_value: u32) -> Self {
        let alphabet = Alphabet::new(max_value);
        let sigmas = group_sigmas(max_value);
        let tables = (0..NUM_GROUPS)
            .flat_map(|g| {
                let var = sigmas[g] * sigmas[g];
                (0..SHAPE_MENU.len() as u8).map(move |sh| build_group_model(var, sh, &alphabet))
            })
            .collect();
        ModelBank { alphabet, tables }
    }

    /// Shared bank for `max_value`, built on first use.
    pub fn shared(max_value: u32) -> Arc<ModelBank> {
        static CACHE: OnceLock<Mutex<HashMap<u32, Arc<ModelBank>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(Default::default);
        if let Some(bank) = cache.lock().unwrap().get(&max_value) {
            return bank.clone();
        }
        let bank = Arc::new(ModelBank::new(max_value));
        cache.lock().unwrap().entry(max_value).or_insert(bank).clone()
    }

    #[inline]
    pub fn table(&self, group: usize, shape: u8) -> &ContextGroupModel {
        &self.tables[group * SHAPE_MENU.len() + shape as usize]
    }

    /// Full cost of folded value `f` (symbol plus raw bits), in cost units.
    #[inline]
    pub fn cost(&self, group: usize, shape: u8, f: u32) -> u32 {
        let (sym, raw_bits, _) = self.alphabet.split(f);
        self.table(group, shape).symbol_cost(sym) + (raw_bits << COST_FRAC_BITS)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fold_is_a_bijection() {
        for max in [0u32, 1, 7, 255] {
            for pred in 0..=max {
                let mut seen = vec![false; max as usize + 1];
                for s in 0..=max {
                    let f = fold(s, pred, max);
                    assert!(f <= max);
                    assert!(!seen[f as usize]);
                    seen[f as usize] = true;
                    assert_eq!(unfold(f, pred, max), Some(s));
                }
            }
        }
    }

    #[test]
    fn fold_interleaves_small_residuals() {
        assert_eq!(fold(100, 100, 255), 0);
        assert_eq!(fold(99, 100, 255), 1);
        assert_eq!(fold(101, 100, 255), 2);
        assert_eq!(fold(250, 250, 255), 0);
        assert_eq!(fold(0, 250, 255), 255);
    }

    #[test]
    fn gaussian_table_is_symmetric_about_zero() {
        let a = Alphabet::new(255);
        let t = build_group_model(16.0, GAUSSIAN_SHAPE_INDEX, &a);
        // folded symbols 2k−1 and 2k are −k and +k
        for k in 1..DIRECT_SYMBOLS / 2 {
            assert_eq!(t.freq(2 * k - 1), t.freq(2 * k));
        }
    }

    #[test]
    fn gaussian_entropy_matches_differential_entropy() {
        let a = Alphabet::new(1023);
        let t = build_group_model(16.0, GAUSSIAN_SHAPE_INDEX, &a);
        let closed = 0.5 * (2.0 * std::f64::consts::PI * std::f64::consts::E * 16.0).log2();
        assert!((t.entropy() - closed).abs() < 0.1, "{} vs {closed}", t.entropy());
    }

    #[test]
    fn smaller_sigma_peaks_higher() {
        let a = Alphabet::new(255);
        for shape in 0..SHAPE_MENU.len() as u8 {
            let mut prev = 0;
            for var in [400.0, 100.0, 25.0, 4.0, 1.0, 0.25] {
                let p0 = build_group_model(var, shape, &a).freq(0);
                assert!(p0 > prev, "shape {shape} var {var}");
                prev = p0;
            }
        }
    }

    #[test]
    fn tables_are_positive_and_normalised() {
        for max in [1u32, 255, 1023, 4095, 65535, 131071] {
            let a = Alphabet::new(max);
            for shape in 0..SHAPE_MENU.len() as u8 {
                for var in [0.01, 3.0, 1e4, 1e9] {
                    let t = build_group_model(var, shape, &a);
                    assert_eq!(t.len(), a.size());
                    assert_eq!(t.cum(t.len() as u32), SCALE);
                    assert!((0..t.len() as u32).all(|s| t.freq(s) >= 1));
                }
            }
        }
    }

    #[test]
    fn escape_buckets_cover_the_range() {
        let a = Alphabet::new(5000);
        assert_eq!(a.size(), 32 + 8 * 4);
        let mut next = 0;
        for sym in 0..a.size() as u32 {
            let (first, count) = a.span(sym);
            if count > 0 {
                assert_eq!(first, next);
                next += count;
            }
        }
        assert_eq!(next, 5001);
        for f in 0..=5000 {
            let (sym, bits, raw) = a.split(f);
            assert_eq!(a.raw_bits(sym), bits);
            assert!(raw < (1 << bits) || bits == 0);
            assert_eq!(a.join(sym, raw), f);
        }
    }

    #[test]
    fn find_inverts_cumulative_counts() {
        let a = Alphabet::new(300);
        let t = build_group_model(9.0, 2, &a);
        for sym in 0..t.len() as u32 {
            assert_eq!(t.find(t.cum(sym)), sym);
            assert_eq!(t.find(t.cum(sym + 1) - 1), sym);
        }
    }

    #[test]
    fn sigma_ladder_endpoints() {
        let s = group_sigmas(255);
        assert!((s[0] - 0.1f64.sqrt()).abs() < 1e-12);
        assert!((s[15] - 128.0).abs() < 1e-9);
        assert!(s.windows(2).all(|w| w[0] < w[1]));
    }
}
