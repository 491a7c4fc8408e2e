//! Human-readable and `#kv key=value` report lines.

use std::fmt::Display;
use std::time::Duration;

use mrp4d::entropy::StreamInfo;
use mrp4d::optimizer::{LoopTrace, StopReason};
use mrp4d::{CostBreakdown, Dims, EncodeReport};

pub struct Report {
    quiet: bool,
}

fn stop_name(s: StopReason) -> &'static str {
    match s {
        StopReason::MaxIterations => "max_iterations",
        StopReason::Stalled => "stalled",
    }
}

fn dims_str(d: Dims) -> String {
    format!("{}x{}x{}x{}", d.t, d.s, d.v, d.u)
}

impl Report {
    pub fn new(quiet: bool) -> Self {
        Report { quiet }
    }

    pub fn text(&self, line: impl Display) {
        if !self.quiet {
            println!("{line}");
        }
    }

    pub fn kv(&self, key: &str, value: impl Display) {
        println!("#kv {key}={value}");
    }

    fn breakdown(&self, prefix: &str, b: &CostBreakdown) {
        let bits = CostBreakdown::bits;
        self.kv(&format!("{prefix}J_bits"), format!("{:.3}", bits(b.j())));
        self.kv(&format!("{prefix}B_a_bits"), format!("{:.3}", bits(b.b_a)));
        self.kv(&format!("{prefix}B_m_bits"), format!("{:.3}", bits(b.b_m())));
        self.kv(&format!("{prefix}B_m_flags_bits"), format!("{:.3}", bits(b.b_m_flags)));
        self.kv(&format!("{prefix}B_m_class_bits"), format!("{:.3}", bits(b.b_m_class)));
        self.kv(&format!("{prefix}B_t_bits"), format!("{:.3}", bits(b.b_t)));
        self.kv(&format!("{prefix}B_r_bits"), format!("{:.3}", bits(b.b_r)));
    }

    fn trace(&self, key: &str, t: &LoopTrace) {
        self.kv(&format!("{key}.iterations"), t.iterations);
        self.kv(&format!("{key}.accepted"), t.accepted.len());
        self.kv(&format!("{key}.stop"), stop_name(t.stop));
    }

    pub fn encode(&self, r: &EncodeReport, bytes: usize, elapsed: Duration) {
        let pixels = r.dims.pixels();
        self.text(format_args!(
            "{} {} plane(s), mode {}: {bytes} bytes, {:.4} bpp",
            dims_str(r.dims),
            r.planes.len(),
            r.mode.name(),
            r.bpp()
        ));
        for (p, pr) in r.planes.iter().enumerate() {
            let l2 = pr.loop2.as_ref().map_or(0, |t| t.iterations);
            self.text(format_args!(
                "  plane {p}: {:.4} bpp, {} classes, iterations {}+{l2}, flags N/S/A {}/{}/{}",
                r.plane_bpp(p),
                pr.classes,
                pr.loop1.iterations,
                pr.flags[0],
                pr.flags[1],
                pr.flags[2]
            ));
            self.text(format_args!("    {}", pr.breakdown));
        }
        self.text(format_args!("  wall time {:.2} s", elapsed.as_secs_f64()));

        self.kv("mode", r.mode.name());
        self.kv("dims", dims_str(r.dims));
        self.kv("planes", r.planes.len());
        self.kv("bytes", bytes);
        self.kv("bits", r.total_bits);
        self.kv("bpp", format!("{:.6}", r.bpp()));
        self.kv("file_bpp", format!("{:.6}", (bytes * 8) as f64 / pixels as f64));
        self.kv("overhead_bits", r.overhead_bits);
        self.breakdown("", &r.breakdown());
        let mut flags = [0u64; 3];
        for (p, pr) in r.planes.iter().enumerate() {
            let k = format!("plane{p}");
            self.kv(&format!("{k}.bpp"), format!("{:.6}", r.plane_bpp(p)));
            self.kv(&format!("{k}.bits"), pr.bits);
            self.kv(&format!("{k}.header_bits"), pr.header_bits);
            self.kv(&format!("{k}.body_bits"), pr.body_bits);
            self.kv(&format!("{k}.body_estimate_bits"), format!("{:.1}", pr.body_estimate_bits()));
            self.kv(&format!("{k}.classes"), pr.classes);
            self.kv(&format!("{k}.packed"), pr.packed);
            self.breakdown(&format!("{k}."), &pr.breakdown);
            self.trace(&format!("{k}.loop1"), &pr.loop1);
            if let Some(t) = &pr.loop2 {
                self.trace(&format!("{k}.loop2"), t);
            }
            for (name, n) in ["no_split", "primary_split", "angular_split"].iter().zip(pr.flags) {
                self.kv(&format!("{k}.flags.{name}"), n);
            }
            for (extent, n) in &pr.leaf_sizes {
                self.kv(&format!("{k}.leaves.{}x{}x{}x{}", extent[0], extent[1], extent[2], extent[3]), n);
            }
            for (f, n) in flags.iter_mut().zip(pr.flags) {
                *f += n;
            }
        }
        self.kv("flags.no_split", flags[0]);
        self.kv("flags.primary_split", flags[1]);
        self.kv("flags.angular_split", flags[2]);
        self.kv("wall_time_s", format!("{:.3}", elapsed.as_secs_f64()));
    }

    pub fn inspect(&self, info: &StreamInfo) {
        let h = &info.header;
        self.text(format_args!(
            "MR4D version {}, mode {}, {} x {} plane(s) at {} bits{}",
            info.version,
            h.mode.name(),
            dims_str(h.dims),
            h.planes,
            h.bit_depth,
            if h.rct() { ", RCT" } else { "" }
        ));
        self.text(format_args!("  support: {} current + {} per reference", h.k_current, h.k_reference));
        for (p, ph) in info.planes.iter().enumerate() {
            let pack = h.packs[p].as_ref().map_or("no".to_string(), |t| format!("{} values", t.len()));
            self.text(format_args!(
                "  plane {p}: {} classes, packed {pack}, body {} bytes at offset {}",
                ph.models.len(),
                ph.body_len,
                info.body_offsets[p]
            ));
        }
        self.text(format_args!("  sample crc {:#010x}, {} bytes total", info.sample_crc, info.total_bytes));

        self.kv("version", info.version);
        self.kv("mode", h.mode.name());
        self.kv("dims", dims_str(h.dims));
        self.kv("planes", h.planes);
        self.kv("bit_depth", h.bit_depth);
        self.kv("rct", h.rct());
        self.kv("k_current", h.k_current);
        self.kv("k_reference", h.k_reference);
        self.kv("bytes", info.total_bytes);
        self.kv("bpp", format!("{:.6}", (info.total_bytes * 8) as f64 / h.dims.pixels() as f64));
        for (p, ph) in info.planes.iter().enumerate() {
            self.kv(&format!("plane{p}.classes"), ph.models.len());
            self.kv(&format!("plane{p}.packed"), h.packs[p].is_some());
            self.kv(&format!("plane{p}.body_bytes"), ph.body_len);
        }
        self.kv("sample_crc", format!("{:#010x}", info.sample_crc));
    }
}
