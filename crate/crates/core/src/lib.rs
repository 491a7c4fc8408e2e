//! Lossless light field coding with 4D minimum rate predictors.
//!
//! A light field `L(t, s, v, u)` is coded plane by plane. Each sample is
//! predicted from causal pixels of its own sub-aperture image (SAI) and of
//! the four neighbouring SAIs already decoded. Predictors come from a small
//! set of *classes* designed to minimise the coded length, and a partition
//! tree assigns a class to every block. The residuals are coded with
//! context-dependent generalised Gaussian models and a range coder.
//!
//! ```
//! use mrp4d::lightfield::Dims;
//! use mrp4d::optimizer::EncoderConfig;
//! use mrp4d::partition::PartitionMode;
//! use mrp4d::{decode_lightfield, encode_lightfield, synth};
//!
//! let lf = synth::shifted(Dims::new(3, 3, 16, 16), 1, 8, 1, 1, 7)?;
//! let cfg = EncoderConfig { max_iterations: 3, ..EncoderConfig::with_mode(PartitionMode::Dual) };
//! let encoded = encode_lightfield(&lf, &cfg)?;
//! assert_eq!(decode_lightfield(&encoded.bytes)?, lf);
//! assert!(encoded.report.bpp() < 8.0);
//! # Ok::<(), mrp4d::Error>(())
//! ```

pub mod entropy;
pub mod error;
pub mod lightfield;
pub mod optimizer;
pub mod partition;
pub mod pnm;
pub mod prediction;
pub mod preprocess;
pub mod synth;

pub use entropy::{decode_lightfield, encode_lightfield, inspect, EncodeReport, Encoded};
pub use error::{Error, Result};
pub use lightfield::{Dims, LightField4D};
pub use optimizer::{CostBreakdown, EncoderConfig};
pub use partition::PartitionMode;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../README.md")]
    mod readme {}
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/light-fields.md")]
    mod light_fields {}
    #[doc = include_str!("../../../book/src/prediction.md")]
    mod prediction {}
    #[doc = include_str!("../../../book/src/partitions.md")]
    mod partitions {}
    #[doc = include_str!("../../../book/src/entropy-coding.md")]
    mod entropy_coding {}
    #[doc = include_str!("../../../book/src/encoder.md")]
    mod encoder {}
    #[doc = include_str!("../../../book/src/command-line.md")]
    mod command_line {}
}
