//! Block DCT, window tiling and adaptive frequency modulation.

mod afmm;
mod dct;
mod window;

pub use afmm::{modulate_windows, Afmm};
pub use dct::{dct2, dct_basis, idct2};
pub use window::{window_merge, window_partition, WindowGrid};
