//! Residual models, the range coder and the bitstream.

pub mod bitio;
pub mod bitstream;
pub mod codec;
pub mod model;
pub mod rangecoder;

pub use bitstream::{decode_lightfield, encode_lightfield, inspect, EncodeReport, Encoded, PlaneReport, StreamInfo};
