//! Bitstream assembly and parsing.
//!
//! ```text
//! "MR4D" | version u8 | global header (bit-packed, byte aligned)
//! per plane: plane header (bit-packed, byte aligned) | range-coded body
//! CRC-32 of the decoded samples (LE) | CRC-32 of every preceding byte (LE)
//! ```
//!
//! The global header holds the partition mode, the dimensions, the plane
//! count, the bit depth, the support sizes and every histogram packing
//! table. A plane header holds the class count, each class's coefficients,
//! thresholds and shape indices, the flag probability menu indices and the
//! body length in bytes. The body codes the partition trees with their
//! class indices, then all residuals in raster order.
//!
//! The stream checksum is verified before anything else is parsed.

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::entropy::bitio::{BitReader, BitWriter};
use crate::entropy::codec::{
    decode_residuals, decode_tree, emit_residuals, emit_tree, read_class, write_class, FlagMenu, TreeEvent, UNASSIGNED,
};
use crate::entropy::model::ModelBank;
use crate::entropy::rangecoder::{RangeDecoder, RangeEncoder};
use crate::error::{Error, Result};
use crate::lightfield::{Dims, LightField4D};
use crate::optimizer::{run_encoder_loops, CostBreakdown, EncoderConfig, LoopTrace, PlaneProblem};
use crate::partition::{Node, PartitionMode, PartitionTree, TreeGeometry};
use crate::prediction::{ClassModel, PlaneRef, SupportLayout, SupportShape};
use crate::preprocess::{self, effective_depth, PackTable, Preprocessed, WorkingPlane};

pub const MAGIC: &[u8; 4] = b"MR4D";
pub const VERSION: u8 = 1;
/// Largest plane the decoder accepts.
pub const MAX_PIXELS: usize = 1 << 31;
const TRAILER_LEN: usize = 8;

/// Fields of the global header.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StreamHeader {
    pub mode: PartitionMode,
    pub dims: Dims,
    pub planes: usize,
    pub bit_depth: u8,
    pub k_current: usize,
    pub k_reference: usize,
    pub packs: Vec<Option<PackTable>>,
}

impl StreamHeader {
    pub fn rct(&self) -> bool {
        self.planes == 3
    }

    fn max_value(&self, p: usize) -> u32 {
        match &self.packs[p] {
            Some(t) => t.len() as u32 - 1,
            None => (1u32 << effective_depth(self.bit_depth, self.rct(), p)) - 1,
        }
    }

    fn write(&self, w: &mut BitWriter) {
        w.write_bits(self.mode.code() as u64, 2);
        for d in self.dims.as_array() {
            w.write_ue(d as u64 - 1, 3);
        }
        w.write_bit(self.planes == 3);
        w.write_bits(self.bit_depth as u64 - 8, 4);
        w.write_bits(self.k_current as u64, 6);
        w.write_bits(self.k_reference as u64, 6);
        for (p, pack) in self.packs.iter().enumerate() {
            w.write_bit(pack.is_some());
            if let Some(table) = pack {
                write_pack(w, table, effective_depth(self.bit_depth, self.rct(), p));
            }
        }
    }

    fn read(r: &mut BitReader) -> Result<Self> {
        let mode = PartitionMode::from_code(r.read_bits(2)? as u8)
            .ok_or_else(|| Error::MalformedHeader("unknown partition mode".into()))?;
        let mut d = [0usize; 4];
        for x in &mut d {
            let v = r.read_ue(3)?;
            if v >= MAX_PIXELS as u64 {
                return Err(Error::MalformedHeader("dimension too large".into()));
            }
            *x = v as usize + 1;
        }
        let dims = Dims::new(d[0], d[1], d[2], d[3]);
        if d.iter().try_fold(1usize, |a, &x| a.checked_mul(x)).is_none_or(|n| n > MAX_PIXELS) {
            return Err(Error::MalformedHeader("light field too large".into()));
        }
        let planes = if r.read_bit()? { 3 } else { 1 };
        let bit_depth = r.read_bits(4)? as u8 + 8;
        if bit_depth > 16 {
            return Err(Error::MalformedHeader(format!("bit depth {bit_depth}")));
        }
        let k_current = r.read_bits(6)? as usize;
        let k_reference = r.read_bits(6)? as usize;
        SupportShape::new(k_current, k_reference).map_err(|e| Error::MalformedHeader(e.to_string()))?;
        let mut packs = Vec::with_capacity(planes);
        for p in 0..planes {
            packs.push(if r.read_bit()? {
                Some(read_pack(r, effective_depth(bit_depth, planes == 3, p))?)
            } else {
                None
            });
        }
        Ok(StreamHeader {
            mode,
            dims,
            planes,
            bit_depth,
            k_current,
            k_reference,
            packs,
        })
    }
}

fn pack_deltas(v: &[u32]) -> Vec<u64> {
    v.windows(2).map(|w| (w[1] - w[0] - 1) as u64).collect()
}

fn write_pack(w: &mut BitWriter, table: &PackTable, depth: u8) {
    let v = table.values();
    w.write_ue(v.len() as u64 - 1, 4);
    w.write_bits(v[0] as u64, depth as u32);
    let deltas = pack_deltas(v);
    let k = (0..16u32)
        .min_by_key(|&k| deltas.iter().map(|&x| crate::entropy::bitio::ue_len(x, k) as u64).sum::<u64>())
        .unwrap();
    w.write_bits(k as u64, 4);
    for d in deltas {
        w.write_ue(d, k);
    }
}

fn read_pack(r: &mut BitReader, depth: u8) -> Result<PackTable> {
    let limit = 1u64 << depth;
    let len = r.read_ue(4)? + 1;
    if len > limit {
        return Err(Error::MalformedHeader(format!("pack table of {len} entries")));
    }
    let mut v = Vec::with_capacity(len as usize);
    let mut x = r.read_bits(depth as u32)?;
    v.push(x as u32);
    let k = r.read_bits(4)? as u32;
    for _ in 1..len {
        x += r.read_ue(k)? + 1;
        if x >= limit {
            return Err(Error::MalformedHeader("pack table value out of range".into()));
        }
        v.push(x as u32);
    }
    PackTable::from_values(v)
}

/// Per-plane section header.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlaneHeader {
    pub models: Vec<ClassModel>,
    pub menu: FlagMenu,
    pub body_len: usize,
}

impl PlaneHeader {
    fn write(&self, w: &mut BitWriter) {
        w.write_ue(self.models.len() as u64 - 1, 2);
        for m in &self.models {
            write_class(w, m);
        }
        self.menu.write(w);
        w.write_ue(self.body_len as u64, 8);
    }

    fn read(r: &mut BitReader, mode: PartitionMode, taps: usize, remaining: usize) -> Result<Self> {
        let m = r.read_ue(2)? + 1;
        if m >= UNASSIGNED as u64 {
            return Err(Error::MalformedHeader(format!("{m} classes")));
        }
        let models = (0..m).map(|_| read_class(r, taps)).collect::<Result<Vec<_>>>()?;
        let menu = FlagMenu::read(r, mode)?;
        let body_len = r.read_ue(8)?;
        if body_len > remaining as u64 {
            return Err(Error::Truncated {
                expected: body_len as usize,
                found: remaining,
            });
        }
        Ok(PlaneHeader {
            models,
            menu,
            body_len: body_len as usize,
        })
    }
}

/// Encoder statistics for one colour plane.
#[derive(Debug, Clone)]
pub struct PlaneReport {
    /// Bits of the plane section (header and body).
    pub bits: u64,
    pub header_bits: u64,
    pub body_bits: u64,
    pub breakdown: CostBreakdown,
    pub classes: usize,
    pub packed: bool,
    pub loop1: LoopTrace,
    pub loop2: Option<LoopTrace>,
    /// Leaf count per nominal block extent `[t, s, v, u]`.
    pub leaf_sizes: BTreeMap<[usize; 4], usize>,
    /// Coded flags: `[no split, primary split, angular split]`.
    pub flags: [u64; 3],
    /// Header bits spent on the flag probability menu.
    pub menu_bits: u64,
}

impl PlaneReport {
    /// Modelled body length in bits (flags, class indices and residuals).
    pub fn body_estimate_bits(&self) -> f64 {
        let b = &self.breakdown;
        CostBreakdown::bits(b.b_r + b.b_m_class + b.b_m_flags) - self.menu_bits as f64
    }
}

/// Encoder statistics for a whole light field.
#[derive(Debug, Clone)]
pub struct EncodeReport {
    pub mode: PartitionMode,
    pub dims: Dims,
    pub planes: Vec<PlaneReport>,
    /// Magic, version, global header and trailer.
    pub overhead_bits: u64,
    pub total_bits: u64,
}

impl EncodeReport {
    /// Compressed bits per pixel of one plane (all planes summed).
    pub fn bpp(&self) -> f64 {
        self.total_bits as f64 / self.dims.pixels() as f64
    }

    pub fn plane_bpp(&self, p: usize) -> f64 {
        self.planes[p].bits as f64 / self.dims.pixels() as f64
    }

    /// Sum of the planes' cost breakdowns.
    pub fn breakdown(&self) -> CostBreakdown {
        self.planes.iter().map(|p| p.breakdown).fold(CostBreakdown::default(), |a, b| a + b)
    }
}

#[derive(Debug, Clone)]
pub struct Encoded {
    pub bytes: Vec<u8>,
    pub report: EncodeReport,
}

fn sample_crc(lf: &LightField4D) -> u32 {
    let mut h = crc32fast::Hasher::new();
    for &x in lf.samples() {
        h.update(&x.to_le_bytes());
    }
    h.finalize()
}

fn leaf_sizes(geom: &TreeGeometry, tree: &PartitionTree) -> BTreeMap<[usize; 4], usize> {
    fn walk(geom: &TreeGeometry, r: &crate::partition::Region, n: &Node, out: &mut BTreeMap<[usize; 4], usize>) {
        match n {
            Node::Leaf { .. } => *out.entry(r.extent()).or_default() += 1,
            Node::Split { kind, children } => {
                for (cr, cn) in geom.children(r, *kind).expect("legal split").iter().zip(children) {
                    if let (Some(cr), Some(cn)) = (cr, cn) {
                        walk(geom, cr, cn, out);
                    }
                }
            }
        }
    }
    let mut out = BTreeMap::new();
    for (r, n) in geom.top_regions().iter().zip(&tree.roots) {
        walk(geom, r, n, &mut out);
    }
    out
}

struct PlaneSection {
    bytes: Vec<u8>,
    report: PlaneReport,
}

fn encode_plane(wp: &WorkingPlane, dims: Dims, cfg: &EncoderConfig) -> Result<PlaneSection> {
    let plane = PlaneRef {
        samples: &wp.samples,
        dims,
        max_value: wp.max_value,
    };
    let shape = SupportShape::new(cfg.k_current, cfg.k_reference)?;
    let problem = PlaneProblem::new(plane, shape, cfg.mode);
    let sol = run_encoder_loops(&problem, cfg)?;
    let ev = &sol.evaluation;

    let mut enc = RangeEncoder::new();
    emit_tree(&ev.events, &ev.menu, sol.models.len(), &mut enc);
    emit_residuals(
        &mut enc,
        &problem.bank,
        &sol.models,
        &ev.class_map,
        &wp.samples,
        &ev.predictions,
        &ev.contexts,
    );
    let body = enc.finish();
    let header = PlaneHeader {
        models: sol.models.clone(),
        menu: ev.menu.clone(),
        body_len: body.len(),
    };
    let mut w = BitWriter::new();
    header.write(&mut w);
    let mut bytes = w.finish();
    let header_bits = bytes.len() as u64 * 8;
    bytes.extend_from_slice(&body);

    let mut flags = [0u64; 3];
    for e in &ev.events {
        if let TreeEvent::Flag { symbol, .. } = e {
            flags[*symbol] += 1;
        }
    }
    let report = PlaneReport {
        bits: bytes.len() as u64 * 8,
        header_bits,
        body_bits: body.len() as u64 * 8,
        breakdown: sol.breakdown(),
        classes: sol.models.len(),
        packed: wp.pack.is_some(),
        loop1: sol.loop1.clone(),
        loop2: sol.loop2.clone(),
        leaf_sizes: leaf_sizes(&problem.geom, &sol.tree),
        flags,
        menu_bits: ev.menu.header_bits(),
    };
    Ok(PlaneSection { bytes, report })
}

/// Encodes a light field. Colour planes are optimised concurrently.
pub fn encode_lightfield(lf: &LightField4D, cfg: &EncoderConfig) -> Result<Encoded> {
    let dims = lf.dims();
    if dims.pixels() == 0 {
        return Err(Error::EmptyLightField);
    }
    if dims.pixels() > MAX_PIXELS {
        return Err(Error::InvalidArgument("light field too large".into()));
    }
    let pre = preprocess::forward(lf);
    let header = StreamHeader {
        mode: cfg.mode,
        dims,
        planes: lf.planes(),
        bit_depth: lf.bit_depth(),
        k_current: cfg.k_current,
        k_reference: cfg.k_reference,
        packs: pre.planes.iter().map(|p| p.pack.clone()).collect(),
    };
    let sections = pre
        .planes
        .par_iter()
        .map(|wp| encode_plane(wp, dims, cfg))
        .collect::<Result<Vec<_>>>()?;

    let mut w = BitWriter::new();
    header.write(&mut w);
    let mut bytes = MAGIC.to_vec();
    bytes.push(VERSION);
    bytes.extend(w.finish());
    let mut planes = Vec::with_capacity(sections.len());
    for s in sections {
        bytes.extend_from_slice(&s.bytes);
        planes.push(s.report);
    }
    bytes.extend_from_slice(&sample_crc(lf).to_le_bytes());
    let crc = crc32fast::hash(&bytes);
    bytes.extend_from_slice(&crc.to_le_bytes());

    let total_bits = bytes.len() as u64 * 8;
    let report = EncodeReport {
        mode: cfg.mode,
        dims,
        overhead_bits: total_bits - planes.iter().map(|p| p.bits).sum::<u64>(),
        planes,
        total_bits,
    };
    Ok(Encoded { bytes, report })
}

/// Header information of a stream, read without decoding any body.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StreamInfo {
    pub version: u8,
    pub header: StreamHeader,
    pub planes: Vec<PlaneHeader>,
    /// Byte offset of each plane body.
    pub body_offsets: Vec<usize>,
    pub sample_crc: u32,
    pub total_bytes: usize,
}

fn check_envelope(bytes: &[u8]) -> Result<&[u8]> {
    let min = MAGIC.len() + 1;
    if bytes.len() < min || &bytes[..4] != MAGIC {
        if bytes.len() >= 4 && &bytes[..4] != MAGIC {
            return Err(Error::MalformedHeader("bad magic".into()));
        }
        return Err(Error::Truncated {
            expected: min + TRAILER_LEN,
            found: bytes.len(),
        });
    }
    if bytes[4] != VERSION {
        return Err(Error::VersionMismatch {
            found: bytes[4],
            expected: VERSION,
        });
    }
    if bytes.len() < min + TRAILER_LEN {
        return Err(Error::Truncated {
            expected: min + TRAILER_LEN,
            found: bytes.len(),
        });
    }
    let (content, tail) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(tail.try_into().unwrap());
    let computed = crc32fast::hash(content);
    if stored != computed {
        return Err(Error::ChecksumMismatch { stored, computed });
    }
    Ok(content)
}

/// Parses and validates all headers.
pub fn inspect(bytes: &[u8]) -> Result<StreamInfo> {
    let content = check_envelope(bytes)?;
    let payload = &content[..content.len() - 4];
    let sample_crc = u32::from_le_bytes(content[content.len() - 4..].try_into().unwrap());
    let mut r = BitReader::new(&payload[5..]);
    let header = StreamHeader::read(&mut r)?;
    let taps = SupportShape::new(header.k_current, header.k_reference)?.len();
    let mut pos = 5 + r.align();
    let mut planes = Vec::with_capacity(header.planes);
    let mut body_offsets = Vec::with_capacity(header.planes);
    for _ in 0..header.planes {
        let mut r = BitReader::new(&payload[pos..]);
        let ph = PlaneHeader::read(&mut r, header.mode, taps, usize::MAX)?;
        let start = pos + r.align();
        let remaining = payload.len() - start.min(payload.len());
        if ph.body_len > remaining {
            return Err(Error::Truncated {
                expected: ph.body_len,
                found: remaining,
            });
        }
        body_offsets.push(start);
        pos = start + ph.body_len;
        planes.push(ph);
    }
    if pos != payload.len() {
        return Err(Error::MalformedHeader(format!("{} unexpected bytes before the trailer", payload.len() - pos)));
    }
    Ok(StreamInfo {
        version: bytes[4],
        header,
        planes,
        body_offsets,
        sample_crc,
        total_bytes: bytes.len(),
    })
}

fn decode_plane(info: &StreamInfo, bytes: &[u8], p: usize) -> Result<WorkingPlane> {
    let h = &info.header;
    let ph = &info.planes[p];
    let body = &bytes[info.body_offsets[p]..info.body_offsets[p] + ph.body_len];
    let max_value = h.max_value(p);
    let geom = TreeGeometry::new(h.mode, h.dims);
    let layout = SupportLayout::new(SupportShape::new(h.k_current, h.k_reference)?, h.dims);
    let bank = ModelBank::shared(max_value);
    let mut dec = RangeDecoder::new(body);
    let mut class_map = vec![UNASSIGNED; h.dims.pixels()];
    decode_tree(&geom, &ph.menu, ph.models.len(), &mut dec, &mut class_map)?;
    if class_map.contains(&UNASSIGNED) {
        return Err(Error::CorruptStream);
    }
    let samples = decode_residuals(&mut dec, &bank, &layout, &ph.models, &class_map, h.dims)?;
    Ok(WorkingPlane {
        samples,
        max_value,
        pack: h.packs[p].clone(),
    })
}

/// Decodes a stream produced by [`encode_lightfield`].
pub fn decode_lightfield(bytes: &[u8]) -> Result<LightField4D> {
    let info = inspect(bytes)?;
    let planes = (0..info.header.planes)
        .into_par_iter()
        .map(|p| decode_plane(&info, bytes, p))
        .collect::<Result<Vec<_>>>()?;
    let pre = Preprocessed {
        dims: info.header.dims,
        bit_depth: info.header.bit_depth,
        rct: info.header.rct(),
        planes,
    };
    let lf = preprocess::inverse(&pre)?;
    let computed = sample_crc(&lf);
    if computed != info.sample_crc {
        return Err(Error::ChecksumMismatch {
            stored: info.sample_crc,
            computed,
        });
    }
    Ok(lf)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick(mode: PartitionMode) -> EncoderConfig {
        EncoderConfig {
            max_iterations: 4,
            ..EncoderConfig::with_mode(mode)
        }
    }

    fn gradient(dims: Dims, planes: usize, depth: u8) -> LightField4D {
        let n = dims.pixels();
        let max = (1u32 << depth) - 1;
        let samples = (0..planes * n)
            .map(|i| {
                let (t, s, v, u) = dims.coords(i % n);
                ((v * 9 + u * 5 + t * 3 + s + i / n * 40) as u32 % (max + 1)) as u16
            })
            .collect();
        LightField4D::new(dims, planes, depth, samples).unwrap()
    }

    #[test]
    fn roundtrip_all_modes() {
        for mode in PartitionMode::ALL {
            for (planes, depth) in [(1, 8), (3, 10)] {
                let lf = gradient(Dims::new(3, 2, 7, 9), planes, depth);
                let enc = encode_lightfield(&lf, &quick(mode)).unwrap();
                assert_eq!(decode_lightfield(&enc.bytes).unwrap(), lf);
                assert_eq!(enc.report.total_bits, enc.bytes.len() as u64 * 8);
            }
        }
    }

    #[test]
    fn header_survives_inspect() {
        let lf = gradient(Dims::new(2, 2, 8, 8), 3, 8);
        let enc = encode_lightfield(&lf, &quick(PartitionMode::Dual)).unwrap();
        let info = inspect(&enc.bytes).unwrap();
        assert_eq!(info.header.dims, lf.dims());
        assert_eq!(info.header.planes, 3);
        assert_eq!(info.header.mode, PartitionMode::Dual);
        assert_eq!(info.planes.len(), 3);
    }

    #[test]
    fn pack_table_roundtrip() {
        let t = PackTable::from_values(vec![3, 4, 9, 200, 255]).unwrap();
        let mut w = BitWriter::new();
        write_pack(&mut w, &t, 8);
        let bytes = w.finish();
        assert_eq!(read_pack(&mut BitReader::new(&bytes), 8).unwrap(), t);
    }

    #[test]
    fn envelope_errors() {
        let lf = gradient(Dims::new(2, 2, 4, 4), 1, 8);
        let enc = encode_lightfield(&lf, &quick(PartitionMode::Hex)).unwrap();
        let mut b = enc.bytes.clone();
        b[4] = 9;
        assert!(matches!(decode_lightfield(&b), Err(Error::VersionMismatch { .. })));
        let b = &enc.bytes[..enc.bytes.len() - 3];
        assert!(decode_lightfield(b).unwrap_err().is_integrity());
        assert!(matches!(decode_lightfield(b"MR"), Err(Error::Truncated { .. })));
        assert!(matches!(decode_lightfield(b"JUNKJUNKJUNKJUNK"), Err(Error::MalformedHeader(_))));
    }
}
