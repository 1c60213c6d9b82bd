/// The four path types of omni-directional scanning.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ScanKind {
    Horizontal,
    Vertical,
    Diagonal,
    AntiDiagonal,
}

impl ScanKind {
    pub const ALL: [ScanKind; 4] = [
        ScanKind::Horizontal,
        ScanKind::Vertical,
        ScanKind::Diagonal,
        ScanKind::AntiDiagonal,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ScanKind::Horizontal => "horizontal",
            ScanKind::Vertical => "vertical",
            ScanKind::Diagonal => "diagonal",
            ScanKind::AntiDiagonal => "anti_diagonal",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

/// A traversal of an `h x w` map: `perm[k]` is the row-major pixel index
/// visited at step `k`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ScanOrder {
    pub kind: ScanKind,
    pub reversed: bool,
    pub perm: Vec<usize>,
}

impl ScanOrder {
    /// `inv[perm[k]] = k`; gathering a sequence with it scatters back to
    /// row-major layout.
    pub fn inverse(&self) -> Vec<usize> {
        let mut inv = vec![0; self.perm.len()];
        for (k, &p) in self.perm.iter().enumerate() {
            inv[p] = k;
        }
        inv
    }
}

fn forward_perm(kind: ScanKind, h: usize, w: usize) -> Vec<usize> {
    match kind {
        ScanKind::Horizontal => (0..h * w).collect(),
        ScanKind::Vertical => (0..w).flat_map(|c| (0..h).map(move |r| r * w + c)).collect(),
        ScanKind::Diagonal => {
            // group key col - row, shifted to be non-negative
            let mut cells: Vec<(usize, usize)> =
                (0..h * w).map(|p| (p % w + (h - 1) - p / w, p)).collect();
            cells.sort_unstable();
            cells.into_iter().map(|(_, p)| p).collect()
        }
        ScanKind::AntiDiagonal => {
            let mut cells: Vec<(usize, usize)> = (0..h * w).map(|p| (p / w + p % w, p)).collect();
            cells.sort_unstable();
            cells.into_iter().map(|(_, p)| p).collect()
        }
    }
}

/// Forward and reversed orders for each [`ScanKind`], kind-major:
/// `[horizontal, horizontal reversed, vertical, ...]`.
///
/// Within a diagonal group cells are taken by increasing row; sorting on
/// `(group, row-major index)` gives exactly that.
pub fn build_scan_orders(h: usize, w: usize) -> Vec<ScanOrder> {
    assert!(h >= 1 && w >= 1, "scan orders need a non-empty map");
    let mut out = Vec::with_capacity(8);
    for kind in ScanKind::ALL {
        let perm = forward_perm(kind, h, w);
        let mut rev = perm.clone();
        rev.reverse();
        out.push(ScanOrder {
            kind,
            reversed: false,
            perm,
        });
        out.push(ScanOrder {
            kind,
            reversed: true,
            perm: rev,
        });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn forward(kind: ScanKind, h: usize, w: usize) -> Vec<usize> {
        build_scan_orders(h, w)
            .into_iter()
            .find(|o| o.kind == kind && !o.reversed)
            .unwrap()
            .perm
    }

    #[test]
    fn one_pixel() {
        for o in build_scan_orders(1, 1) {
            assert_eq!(o.perm, vec![0]);
        }
    }

    #[test]
    fn two_by_two() {
        assert_eq!(forward(ScanKind::Horizontal, 2, 2), [0, 1, 2, 3]);
        assert_eq!(forward(ScanKind::Vertical, 2, 2), [0, 2, 1, 3]);
        assert_eq!(forward(ScanKind::AntiDiagonal, 2, 2), [0, 1, 2, 3]);
        assert_eq!(forward(ScanKind::Diagonal, 2, 2), [2, 0, 3, 1]);
    }

    #[test]
    fn reversed_is_reverse() {
        let orders = build_scan_orders(3, 5);
        for pair in orders.chunks(2) {
            let mut r = pair[0].perm.clone();
            r.reverse();
            assert_eq!(r, pair[1].perm);
            assert!(pair[1].reversed && !pair[0].reversed);
        }
    }

    #[test]
    fn inverse_undoes_perm() {
        for o in build_scan_orders(4, 7) {
            let inv = o.inverse();
            for (k, &p) in o.perm.iter().enumerate() {
                assert_eq!(inv[p], k);
            }
        }
    }
}
