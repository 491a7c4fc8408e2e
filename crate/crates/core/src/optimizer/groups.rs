//! Context quantisation thresholds and per-group shape selection.
//!
//! For one class the pixels are sorted by context value `C` and grouped into
//! at most [`MAX_BINS`] bins. Assigning the 16 groups to contiguous runs of
//! bins is a shortest-path problem solved exactly by dynamic programming:
//! with prefix sums the inner minimum is a running minimum, so the whole
//! search is linear in the number of bins.

use crate::entropy::bitio::ue_len;
use crate::entropy::model::{ModelBank, COST_FRAC_BITS, SHAPE_MENU};
use crate::prediction::{quantise_context, NUM_GROUPS, NUM_THRESHOLDS};

pub const MAX_BINS: usize = 4096;

/// Bins of sorted context values: `(lowest C in bin, first index)`.
fn make_bins(sorted_c: &[u32]) -> Vec<(u32, usize)> {
    let n = sorted_c.len();
    let mut distinct = 1;
    for w in sorted_c.windows(2) {
        if w[0] != w[1] {
            distinct += 1;
        }
    }
    let mut bins: Vec<(u32, usize)> = Vec::new();
    let push = |i: usize, bins: &mut Vec<(u32, usize)>| {
        if bins.last().is_none_or(|&(c, _)| c != sorted_c[i]) {
            bins.push((sorted_c[i], i));
        }
    };
    if distinct <= MAX_BINS {
        for i in 0..n {
            push(i, &mut bins);
        }
    } else {
        for k in 0..MAX_BINS {
            let mut i = k * n / MAX_BINS;
            // snap back to the first occurrence of that value
            i = sorted_c.partition_point(|&c| c < sorted_c[i]);
            push(i, &mut bins);
        }
    }
    bins
}

/// Thresholds minimising the total residual cost of `(C, folded residual)`
/// pairs, with group `n` coded by shape `shapes[n]`. Returns `None` for an
/// empty pixel set.
pub fn optimise_thresholds(
    bank: &ModelBank,
    shapes: &[u8; NUM_GROUPS],
    samples: &[(u64, u32)],
) -> Option<[u32; NUM_THRESHOLDS]> {
    if samples.is_empty() {
        return None;
    }
    let mut pairs: Vec<(u32, u32)> = samples
        .iter()
        .map(|&(c, f)| (c.min(u32::MAX as u64) as u32, f))
        .collect();
    pairs.sort_unstable();
    let cs: Vec<u32> = pairs.iter().map(|p| p.0).collect();
    let bins = make_bins(&cs);
    let nb = bins.len();
    // prefix[g][b]: cost of bins [0, b) coded with group g
    let mut prefix = vec![vec![0i64; nb + 1]; NUM_GROUPS];
    for (b, &(_, start)) in bins.iter().enumerate() {
        let end = bins.get(b + 1).map_or(pairs.len(), |x| x.1);
        for (g, row) in prefix.iter_mut().enumerate() {
            let c: i64 = pairs[start..end]
                .iter()
                .map(|&(_, f)| bank.cost(g, shapes[g], f) as i64)
                .sum();
            row[b + 1] = row[b] + c;
        }
    }
    // best[g][b]: bins [0, b) coded by groups 0..=g, group g ending at b
    let mut best = prefix[0].clone();
    let mut from = vec![vec![0usize; nb + 1]; NUM_GROUPS];
    for g in 1..NUM_GROUPS {
        let mut next = vec![0i64; nb + 1];
        let mut run_min = i64::MAX;
        let mut run_arg = 0;
        for b in 0..=nb {
            let cand = best[b] - prefix[g][b];
            if cand < run_min {
                run_min = cand;
                run_arg = b;
            }
            next[b] = prefix[g][b] + run_min;
            from[g][b] = run_arg;
        }
        best = next;
    }
    let mut ends = [0usize; NUM_GROUPS];
    ends[NUM_GROUPS - 1] = nb;
    for g in (1..NUM_GROUPS).rev() {
        ends[g - 1] = from[g][ends[g]];
    }
    let above = cs[cs.len() - 1].saturating_add(1);
    Some(core::array::from_fn(|g| if ends[g] < nb { bins[ends[g]].0 } else { above }))
}

/// Shape per group minimising residual cost plus the shape's header bits.
pub fn optimise_shapes(
    bank: &ModelBank,
    thresholds: &[u32; NUM_THRESHOLDS],
    samples: &[(u64, u32)],
) -> [u8; NUM_GROUPS] {
    let nshapes = SHAPE_MENU.len();
    let mut cost = vec![[0u64; NUM_GROUPS]; nshapes];
    for &(c, f) in samples {
        let g = quantise_context(c, thresholds);
        for (sh, row) in cost.iter_mut().enumerate() {
            row[g] += bank.cost(g, sh as u8, f) as u64;
        }
    }
    core::array::from_fn(|g| {
        (0..nshapes)
            .rev()
            .min_by_key(|&sh| cost[sh][g] + ((ue_len((nshapes - 1 - sh) as u64, 0) as u64) << COST_FRAC_BITS))
            .unwrap() as u8
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::entropy::model::GAUSSIAN_SHAPE_INDEX;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn total(bank: &ModelBank, th: &[u32; 15], shapes: &[u8; 16], s: &[(u64, u32)]) -> u64 {
        s.iter()
            .map(|&(c, f)| {
                let g = quantise_context(c, th);
                bank.cost(g, shapes[g], f) as u64
            })
            .sum()
    }

    #[test]
    fn single_context_collapses() {
        let bank = ModelBank::new(255);
        let shapes = [GAUSSIAN_SHAPE_INDEX; 16];
        let s: Vec<(u64, u32)> = (0..50).map(|i| (77, (i % 9) as u32)).collect();
        let th = optimise_thresholds(&bank, &shapes, &s).unwrap();
        assert!(th.iter().all(|&t| t == 77 || t == 78));
        // every threshold choice is equivalent for the cost, collapse included
        let g = quantise_context(77, &th);
        let best = (0..16)
            .map(|n| s.iter().map(|&(_, f)| bank.cost(n, GAUSSIAN_SHAPE_INDEX, f) as u64).sum::<u64>())
            .min()
            .unwrap();
        assert_eq!(total(&bank, &th, &shapes, &s), best);
        assert_eq!(s.iter().map(|&(_, f)| bank.cost(g, 5, f) as u64).sum::<u64>(), best);
    }

    #[test]
    fn threshold_separates_two_clusters() {
        let bank = ModelBank::new(255);
        let shapes = [GAUSSIAN_SHAPE_INDEX; 16];
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut s = Vec::new();
        for _ in 0..400 {
            s.push((rng.gen_range(0..100u64), rng.gen_range(0..2u32)));
            s.push((rng.gen_range(5000..6000u64), rng.gen_range(0..120u32)));
        }
        let th = optimise_thresholds(&bank, &shapes, &s).unwrap();
        let hi_low = s.iter().map(|p| p.0).filter(|&c| c < 100).max().unwrap();
        let lo_high = s.iter().map(|p| p.0).filter(|&c| c >= 5000).min().unwrap();
        assert!(quantise_context(hi_low, &th) < quantise_context(lo_high, &th), "{th:?}");

        // brute force over one threshold with the best group on each side
        let group_cost = |part: &[&(u64, u32)], n: usize| -> u64 {
            part.iter().map(|&&(_, f)| bank.cost(n, GAUSSIAN_SHAPE_INDEX, f) as u64).sum()
        };
        let mut cuts: Vec<u64> = s.iter().map(|p| p.0).collect();
        cuts.sort_unstable();
        cuts.dedup();
        let mut best_one = u64::MAX;
        for &tau in &cuts {
            let (lo, hi): (Vec<_>, Vec<_>) = s.iter().partition(|p| p.0 < tau);
            for n in 0..16 {
                let a = group_cost(&lo, n);
                let b = (n..16).map(|m| group_cost(&hi, m)).min().unwrap();
                best_one = best_one.min(a + b);
            }
        }
        assert!(total(&bank, &th, &shapes, &s) <= best_one);
    }

    #[test]
    fn dp_beats_random_thresholds() {
        let bank = ModelBank::new(1023);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let s: Vec<(u64, u32)> = (0..3000)
            .map(|_| {
                let c = rng.gen_range(0..200_000u64);
                let spread = 1 + (c / 2000) as u32;
                (c, rng.gen_range(0..spread))
            })
            .collect();
        let shapes = [GAUSSIAN_SHAPE_INDEX; 16];
        let th = optimise_thresholds(&bank, &shapes, &s).unwrap();
        assert!(th.windows(2).all(|w| w[0] <= w[1]));
        let dp = total(&bank, &th, &shapes, &s);
        for _ in 0..1000 {
            let mut r: [u32; 15] = core::array::from_fn(|_| rng.gen_range(0..210_000));
            r.sort_unstable();
            assert!(dp <= total(&bank, &r, &shapes, &s));
        }
    }

    #[test]
    fn shapes_never_worse_than_gaussian() {
        let bank = ModelBank::new(255);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let s: Vec<(u64, u32)> = (0..2000)
            .map(|_| (rng.gen_range(0..1000u64), if rng.gen_bool(0.8) { 0 } else { rng.gen_range(0..60) }))
            .collect();
        let th: [u32; 15] = core::array::from_fn(|i| (i as u32 + 1) * 60);
        let shapes = optimise_shapes(&bank, &th, &s);
        let gauss = [GAUSSIAN_SHAPE_INDEX; 16];
        assert!(total(&bank, &th, &shapes, &s) <= total(&bank, &th, &gauss, &s));
    }
}
