//! Range coding over 16-bit cumulative frequency tables and the `.hcfs`
//! container.

mod cdf;
mod container;
mod range;
mod tables;

pub use cdf::{quantize_cdf, CdfTable, PRECISION_BITS, TOTAL};
pub use container::{CodedStream, HEADER_LEN, MAGIC, VERSION};
pub use range::{decode_symbols, encode_symbols, RangeDecoder, RangeEncoder};
pub use tables::{gaussian_table, phi_lut, table_bits, PHI_LUT_LEN, PHI_LUT_RANGE};
