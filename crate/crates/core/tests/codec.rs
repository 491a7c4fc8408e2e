use mrp4d::lightfield::Layout;
use mrp4d::{decode_lightfield, encode_lightfield, inspect, synth, Dims, EncoderConfig, LightField4D, PartitionMode};
use proptest::prelude::*;

fn quick(mode: PartitionMode) -> EncoderConfig {
    EncoderConfig {
        max_iterations: 4,
        ..EncoderConfig::with_mode(mode)
    }
}

#[test]
fn noise_costs_at_most_half_a_bit_extra() {
    for depth in [8u8, 10] {
        let lf = synth::noise(Dims::new(8, 8, 8, 8), 1, depth, 11).unwrap();
        for mode in PartitionMode::ALL {
            let enc = encode_lightfield(&lf, &EncoderConfig::with_mode(mode)).unwrap();
            let bpp = enc.report.bpp();
            assert!(bpp <= depth as f64 + 0.5, "{mode:?} at {depth} bits: {bpp}");
            assert_eq!(decode_lightfield(&enc.bytes).unwrap(), lf);
        }
    }
}

#[test]
fn constant_field_is_cheap() {
    let lf = synth::constant(Dims::new(4, 4, 8, 8), 1, 8, 200).unwrap();
    for mode in PartitionMode::ALL {
        let enc = encode_lightfield(&lf, &EncoderConfig::with_mode(mode)).unwrap();
        assert!(enc.report.bpp() < 0.5, "{mode:?}: {}", enc.report.bpp());
    }
}

#[test]
fn encoding_is_deterministic() {
    let lf = synth::shifted(Dims::new(3, 4, 10, 9), 3, 10, 1, 2, 4).unwrap();
    for mode in PartitionMode::ALL {
        for seed in [None, Some(99)] {
            let cfg = EncoderConfig { seed, ..quick(mode) };
            let a = encode_lightfield(&lf, &cfg).unwrap().bytes;
            let b = encode_lightfield(&lf, &cfg).unwrap().bytes;
            assert_eq!(a, b, "{mode:?} seed {seed:?}");
        }
    }
}

#[test]
fn modelled_cost_tracks_the_coded_length() {
    let lf = synth::shifted(Dims::new(16, 16, 16, 16), 1, 8, 1, 1, 3).unwrap();
    let enc = encode_lightfield(&lf, &EncoderConfig::with_mode(PartitionMode::Dual)).unwrap();
    let plane = &enc.report.planes[0];
    let estimate = plane.body_estimate_bits();
    let actual = plane.body_bits as f64;
    assert!(
        (actual - estimate).abs() <= 0.01 * actual + 64.0,
        "estimate {estimate:.0} vs actual {actual:.0}"
    );
    let info = inspect(&enc.bytes).unwrap();
    assert_eq!(info.total_bytes * 8, enc.report.total_bits as usize);
}

#[test]
fn report_accounts_for_every_bit() {
    let lf = synth::shifted(Dims::new(3, 3, 8, 8), 3, 8, 1, 1, 5).unwrap();
    let enc = encode_lightfield(&lf, &quick(PartitionMode::Hex)).unwrap();
    let r = &enc.report;
    let planes: u64 = r.planes.iter().map(|p| p.bits).sum();
    assert_eq!(planes + r.overhead_bits, r.total_bits);
    assert_eq!(r.total_bits, enc.bytes.len() as u64 * 8);
    for p in &r.planes {
        assert_eq!(p.header_bits + p.body_bits, p.bits);
        let leaves: usize = p.leaf_sizes.values().sum();
        assert!(leaves as u64 >= p.flags[0]);
    }
}

#[test]
fn container_and_sai_grid_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    for planes in [1, 3] {
        let lf = synth::noise(Dims::new(2, 3, 5, 4), planes, 10, 8).unwrap();
        let raw = dir.path().join(format!("lf{planes}.lf4d"));
        lf.store(&raw, Layout::PlanarRaw).unwrap();
        assert_eq!(LightField4D::load(&raw, Layout::PlanarRaw).unwrap(), lf);
        let grid = dir.path().join(format!("grid{planes}"));
        lf.store(&grid, Layout::SaiGrid).unwrap();
        let back = LightField4D::load(&grid, Layout::SaiGrid).unwrap();
        assert_eq!(back.samples(), lf.samples());
        assert_eq!(back.dims(), lf.dims());
    }
}

#[test]
fn truncation_is_reported() {
    let lf = synth::noise(Dims::new(2, 2, 4, 4), 1, 8, 1).unwrap();
    let bytes = encode_lightfield(&lf, &quick(PartitionMode::Quad2d)).unwrap().bytes;
    for cut in [0, 3, 5, bytes.len() / 2, bytes.len() - 1] {
        let err = decode_lightfield(&bytes[..cut]).unwrap_err();
        assert!(err.is_integrity(), "cut at {cut}: {err}");
    }
}

fn arb_lightfield() -> impl Strategy<Value = LightField4D> {
    (1usize..=4, 1usize..=4, 1usize..=6, 1usize..=6, prop::bool::ANY, 8u8..=12)
        .prop_flat_map(|(t, s, v, u, colour, depth)| {
            let planes = if colour { 3 } else { 1 };
            let n = t * s * v * u * planes;
            let max = (1u16 << depth) - 1;
            prop::collection::vec(
                prop_oneof![0..=max, Just(0), Just(max), (0..=max / 8).prop_map(|x| x * 8)],
                n,
            )
            .prop_map(move |samples| LightField4D::new(Dims::new(t, s, v, u), planes, depth, samples).unwrap())
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn any_lightfield_roundtrips(lf in arb_lightfield(), mode in 0usize..3) {
        let enc = encode_lightfield(&lf, &quick(PartitionMode::ALL[mode])).unwrap();
        prop_assert_eq!(decode_lightfield(&enc.bytes).unwrap(), lf);
    }
}
