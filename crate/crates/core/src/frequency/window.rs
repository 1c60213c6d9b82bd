use crate::error::{Error, Result};
use crate::ops::PadMode;
use crate::tape::{Tape, Var};
use crate::tensor::Scalar;

/// Tiling of an `orig_h x orig_w` map into `window x window` blocks after
/// reflect padding at the bottom and right. Windows are numbered row-major.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct WindowGrid {
    pub window: usize,
    pub orig_h: usize,
    pub orig_w: usize,
    pub padded_h: usize,
    pub padded_w: usize,
}

impl WindowGrid {
    pub fn new(h: usize, w: usize, window: usize) -> Result<Self> {
        if window == 0 || h == 0 || w == 0 {
            return Err(Error::InvalidArgument(format!("window grid {h}x{w} / {window}")));
        }
        Ok(Self {
            window,
            orig_h: h,
            orig_w: w,
            padded_h: h.div_ceil(window) * window,
            padded_w: w.div_ceil(window) * window,
        })
    }

    pub fn rows(&self) -> usize {
        self.padded_h / self.window
    }

    pub fn cols(&self) -> usize {
        self.padded_w / self.window
    }

    pub fn count(&self) -> usize {
        self.rows() * self.cols()
    }

    /// Padded-map coordinates of in-window position `(r, c)` of window `index`.
    pub fn pixel(&self, index: usize, r: usize, c: usize) -> (usize, usize) {
        let (wr, wc) = (index / self.cols(), index % self.cols());
        (wr * self.window + r, wc * self.window + c)
    }
}

/// `[C, H, W]` to `[B, C, w, w]` windows.
pub fn window_partition<T: Scalar>(t: &mut Tape<T>, x: Var, window: usize) -> Result<(Var, WindowGrid)> {
    let s = t.shape(x).to_vec();
    if s.len() != 3 {
        return Err(Error::shape("window_partition", format!("{s:?}, want [C, H, W]")));
    }
    let grid = WindowGrid::new(s[1], s[2], window)?;
    let p = t.pad2d(x, grid.padded_h, grid.padded_w, PadMode::Reflect)?;
    let (nh, nw) = (grid.rows(), grid.cols());
    let r = t.reshape(p, &[s[0], nh, window, nw, window])?;
    let r = t.permute(r, &[1, 3, 0, 2, 4])?;
    let out = t.reshape(r, &[nh * nw, s[0], window, window])?;
    Ok((out, grid))
}

/// Inverse of [`window_partition`], cropped to the original extent.
pub fn window_merge<T: Scalar>(t: &mut Tape<T>, windows: Var, grid: &WindowGrid) -> Result<Var> {
    let s = t.shape(windows).to_vec();
    let w = grid.window;
    if s.len() != 4 || s[0] != grid.count() || s[2] != w || s[3] != w {
        return Err(Error::shape("window_merge", format!("{s:?} vs grid {grid:?}")));
    }
    let c = s[1];
    let r = t.reshape(windows, &[grid.rows(), grid.cols(), c, w, w])?;
    let r = t.permute(r, &[2, 0, 3, 1, 4])?;
    let r = t.reshape(r, &[c, grid.padded_h, grid.padded_w])?;
    t.crop2d(r, grid.orig_h, grid.orig_w)
}
