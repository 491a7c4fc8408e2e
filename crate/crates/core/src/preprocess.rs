//! Reversible colour transform and histogram packing.
//!
//! Both steps are exact bijections, applied before prediction and undone
//! after decoding. Chroma components of the transform are signed; they are
//! offset by `2^bit_depth` so every later stage only sees unsigned samples
//! (one extra bit of depth for the two chroma planes).

use crate::error::{Error, Result};
use crate::lightfield::{Dims, LightField4D};

/// `(r, g, b) -> (y, cu, cv)` with `y = ⌊(r + 2g + b) / 4⌋`, `cu = b − g`, `cv = r − g`.
pub fn rct_forward(r: i32, g: i32, b: i32) -> (i32, i32, i32) {
    ((r + 2 * g + b).div_euclid(4), b - g, r - g)
}

/// Exact inverse of [`rct_forward`].
pub fn rct_inverse(y: i32, cu: i32, cv: i32) -> (i32, i32, i32) {
    let g = y - (cu + cv).div_euclid(4);
    (cv + g, g, cu + g)
}

/// Sorted list of the sample values occurring in a plane.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PackTable {
    values: Vec<u32>,
}

impl PackTable {
    pub fn from_values(values: Vec<u32>) -> Result<Self> {
        if values.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::MalformedHeader("pack table not strictly increasing".into()));
        }
        Ok(PackTable { values })
    }

    pub fn values(&self) -> &[u32] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn value_of_index(&self, index: u32) -> Result<u32> {
        self.values.get(index as usize).copied().ok_or(Error::IndexOutOfTable {
            index,
            len: self.values.len(),
        })
    }

    pub fn index_of_value(&self, value: u32) -> Option<u32> {
        self.values.binary_search(&value).ok().map(|i| i as u32)
    }
}

/// Maps each sample onto its rank among the distinct values of the plane.
pub fn pack_histogram(plane: &[u32]) -> (Vec<u32>, PackTable) {
    let mut values = plane.to_vec();
    values.sort_unstable();
    values.dedup();
    let table = PackTable { values };
    let packed = plane
        .iter()
        .map(|&x| table.index_of_value(x).expect("value present by construction"))
        .collect();
    (packed, table)
}

pub fn unpack_histogram(packed: &[u32], table: &PackTable) -> Result<Vec<u32>> {
    packed.iter().map(|&i| table.value_of_index(i)).collect()
}

/// Sum of absolute differences between consecutive samples in raster order,
/// restarted at the beginning of every SAI.
pub fn total_variation(plane: &[u32], sai_len: usize) -> u64 {
    plane
        .chunks(sai_len.max(1))
        .map(|sai| sai.windows(2).map(|w| w[0].abs_diff(w[1]) as u64).sum::<u64>())
        .sum()
}

/// Packing is worthwhile only when it strictly lowers the total variation.
pub fn should_pack(plane: &[u32], sai_len: usize) -> bool {
    let (packed, _) = pack_histogram(plane);
    total_variation(&packed, sai_len) < total_variation(plane, sai_len)
}

/// One colour plane as seen by the predictor: unsigned samples in
/// `0..=max_value`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WorkingPlane {
    pub samples: Vec<u32>,
    pub max_value: u32,
    pub pack: Option<PackTable>,
}

/// The transformed light field handed to the encoder.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Preprocessed {
    pub dims: Dims,
    pub bit_depth: u8,
    pub rct: bool,
    pub planes: Vec<WorkingPlane>,
}

/// Depth of plane `p` after the colour transform.
pub fn effective_depth(bit_depth: u8, rct: bool, p: usize) -> u8 {
    if rct && p > 0 {
        bit_depth + 1
    } else {
        bit_depth
    }
}

/// Applies the colour transform (3-plane inputs only) and, per plane,
/// histogram packing when [`should_pack`] says so.
pub fn forward(lf: &LightField4D) -> Preprocessed {
    let dims = lf.dims();
    let n = dims.pixels();
    let rct = lf.planes() == 3;
    let offset = 1i32 << lf.bit_depth();
    let mut raw: Vec<Vec<u32>> = (0..lf.planes())
        .map(|p| lf.plane(p).iter().map(|&x| x as u32).collect())
        .collect();
    if rct {
        let (mut y, mut cu, mut cv) = (vec![0; n], vec![0; n], vec![0; n]);
        for i in 0..n {
            let (a, b, c) = rct_forward(raw[0][i] as i32, raw[1][i] as i32, raw[2][i] as i32);
            y[i] = a as u32;
            cu[i] = (b + offset) as u32;
            cv[i] = (c + offset) as u32;
        }
        raw = vec![y, cu, cv];
    }
    let planes = raw
        .into_iter()
        .enumerate()
        .map(|(p, samples)| {
            if should_pack(&samples, dims.sai_pixels()) {
                let (packed, table) = pack_histogram(&samples);
                WorkingPlane {
                    samples: packed,
                    max_value: table.len() as u32 - 1,
                    pack: Some(table),
                }
            } else {
                WorkingPlane {
                    samples,
                    max_value: (1u32 << effective_depth(lf.bit_depth(), rct, p)) - 1,
                    pack: None,
                }
            }
        })
        .collect();
    Preprocessed {
        dims,
        bit_depth: lf.bit_depth(),
        rct,
        planes,
    }
}

/// Undoes [`forward`].
pub fn inverse(pre: &Preprocessed) -> Result<LightField4D> {
    let mut raw: Vec<Vec<u32>> = pre
        .planes
        .iter()
        .map(|wp| match &wp.pack {
            Some(table) => unpack_histogram(&wp.samples, table),
            None => Ok(wp.samples.clone()),
        })
        .collect::<Result<_>>()?;
    if pre.rct {
        if raw.len() != 3 {
            return Err(Error::MalformedHeader("colour transform flag on a grey light field".into()));
        }
        let offset = 1i32 << pre.bit_depth;
        for i in 0..pre.dims.pixels() {
            let (r, g, b) = rct_inverse(
                raw[0][i] as i32,
                raw[1][i] as i32 - offset,
                raw[2][i] as i32 - offset,
            );
            raw[0][i] = r as u32;
            raw[1][i] = g as u32;
            raw[2][i] = b as u32;
        }
    }
    let max = (1i64 << pre.bit_depth) - 1;
    let mut samples = Vec::with_capacity(raw.len() * pre.dims.pixels());
    for plane in &raw {
        for &x in plane {
            if x as i64 > max {
                // Only reachable from a corrupted stream.
                return Err(Error::SampleOutOfRange {
                    index: samples.len(),
                    value: x,
                    bit_depth: pre.bit_depth,
                });
            }
            samples.push(x as u16);
        }
    }
    LightField4D::new(pre.dims, raw.len(), pre.bit_depth, samples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn grey_is_fixed_point() {
        for x in [0, 1, 77, 255, 1023] {
            assert_eq!(rct_forward(x, x, x), (x, 0, 0));
            assert_eq!(rct_inverse(x, 0, 0), (x, x, x));
        }
    }

    #[test]
    fn pure_red() {
        assert_eq!(rct_forward(255, 0, 0), (63, 0, 255));
        assert_eq!(rct_inverse(63, 0, 255), (255, 0, 0));
    }

    #[test]
    fn rct_roundtrip_random_10_bit() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100_000 {
            let (r, g, b) = (rng.gen_range(0..1024), rng.gen_range(0..1024), rng.gen_range(0..1024));
            let (y, cu, cv) = rct_forward(r, g, b);
            assert_eq!(rct_inverse(y, cu, cv), (r, g, b));
        }
    }

    #[test]
    fn pack_examples() {
        let (p, t) = pack_histogram(&[5, 5, 5]);
        assert_eq!(p, vec![0, 0, 0]);
        assert_eq!(t.values(), &[5]);
        assert_eq!(unpack_histogram(&p, &t).unwrap(), vec![5, 5, 5]);

        let (p, t) = pack_histogram(&[10, 500, 10, 300]);
        assert_eq!(p, vec![0, 2, 0, 1]);
        assert_eq!(t.values(), &[10, 300, 500]);
        assert_eq!(unpack_histogram(&p, &t).unwrap(), vec![10, 500, 10, 300]);
    }

    #[test]
    fn unpack_rejects_index_outside_table() {
        let t = PackTable::from_values(vec![3, 9]).unwrap();
        assert!(matches!(
            unpack_histogram(&[0, 2], &t),
            Err(Error::IndexOutOfTable { index: 2, len: 2 })
        ));
    }

    #[test]
    fn should_pack_examples() {
        assert!(!should_pack(&[7; 16], 16));
        let alternating: Vec<u32> = (0..16).map(|i| if i % 2 == 0 { 0 } else { 1000 }).collect();
        assert!(should_pack(&alternating, 16));
        let dense: Vec<u32> = (0..16).collect();
        assert!(!should_pack(&dense, 16));
    }

    proptest! {
        #[test]
        fn pack_roundtrip(plane in proptest::collection::vec(0u32..70000, 1..300)) {
            let (packed, table) = pack_histogram(&plane);
            prop_assert_eq!(unpack_histogram(&packed, &table).unwrap(), plane);
            // every index in 0..K used
            let mut seen = vec![false; table.len()];
            for &i in &packed { seen[i as usize] = true; }
            prop_assert!(seen.into_iter().all(|b| b));
        }
    }
}
