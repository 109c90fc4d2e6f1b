//! Window partitioning with optional cyclic shift.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// How an `h×w` token grid is cut into `M×M` attention windows.
///
/// Windowed order is (window row, window column, row in window, column in
/// window). For shifted layouts the grid is first rolled by `-shift` on
/// both axes, so windowed slot `k` reads token `order[k]` of the unrolled
/// grid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WindowLayout {
    pub grid: [usize; 2],
    pub window: usize,
    pub shift: usize,
    /// Windowed slot → row-major token index in the original grid.
    pub order: Vec<usize>,
    /// Window index of each original token.
    pub window_of: Vec<usize>,
    /// Position inside its window of each original token.
    pub slot_of: Vec<usize>,
    /// Per window, `n×n` allowed pairs (query row, key column). `None`
    /// when every pair is allowed.
    pub mask: Option<Vec<bool>>,
}

impl WindowLayout {
    pub fn tokens_per_window(&self) -> usize {
        self.window * self.window
    }

    pub fn num_windows(&self) -> usize {
        (self.grid[0] / self.window) * (self.grid[1] / self.window)
    }

    pub fn allowed(&self, window: usize, q: usize, k: usize) -> bool {
        let n = self.tokens_per_window();
        match &self.mask {
            None => true,
            Some(m) => m[(window * n + q) * n + k],
        }
    }
}

/// Builds the layout for an `h×w` grid and window `m`.
///
/// Shifting uses `⌊m/2⌋` and is disabled when `m ≥ min(h, w)`.
pub fn build_window_layout(grid: [usize; 2], m: usize, shifted: bool) -> Result<WindowLayout> {
    let [h, w] = grid;
    if m == 0 || m > h.min(w) {
        return Err(Error::WindowTooLarge { window: m, grid });
    }
    if h % m != 0 || w % m != 0 {
        return Err(Error::NonDivisibleWindow {
            window: m,
            dims: grid,
        });
    }
    let shift = if shifted && m < h.min(w) { m / 2 } else { 0 };
    let (nwy, nwx) = (h / m, w / m);
    let n = m * m;
    let mut order = Vec::with_capacity(h * w);
    let mut window_of = vec![0; h * w];
    let mut slot_of = vec![0; h * w];
    for wy in 0..nwy {
        for wx in 0..nwx {
            for py in 0..m {
                for px in 0..m {
                    let (sy, sx) = (wy * m + py, wx * m + px);
                    let (oy, ox) = ((sy + shift) % h, (sx + shift) % w);
                    let tok = oy * w + ox;
                    window_of[tok] = wy * nwx + wx;
                    slot_of[tok] = py * m + px;
                    order.push(tok);
                }
            }
        }
    }
    let mask = (shift > 0).then(|| {
        // region label on the rolled grid: [0, h-m), [h-m, h-s), [h-s, h)
        let band = |v: usize, len: usize| -> usize {
            if v < len - m {
                0
            } else if v < len - shift {
                1
            } else {
                2
            }
        };
        let mut mask = vec![false; nwy * nwx * n * n];
        for win in 0..nwy * nwx {
            let (wy, wx) = (win / nwx, win % nwx);
            let region = |slot: usize| {
                let (py, px) = (slot / m, slot % m);
                band(wy * m + py, h) * 3 + band(wx * m + px, w)
            };
            for q in 0..n {
                for k in 0..n {
                    mask[(win * n + q) * n + k] = region(q) == region(k);
                }
            }
        }
        mask
    });
    Ok(WindowLayout {
        grid,
        window: m,
        shift,
        order,
        window_of,
        slot_of,
        mask,
    })
}

/// Rearranges `[h·w, c]` rows into windowed order.
pub fn window_partition<T: Copy>(x: &[T], c: usize, layout: &WindowLayout) -> Vec<T> {
    let mut out = Vec::with_capacity(x.len());
    for &tok in &layout.order {
        out.extend_from_slice(&x[tok * c..(tok + 1) * c]);
    }
    out
}

/// Inverse of [`window_partition`].
pub fn window_reverse<T: Copy + Default>(xw: &[T], c: usize, layout: &WindowLayout) -> Vec<T> {
    let mut out = vec![T::default(); xw.len()];
    for (slot, &tok) in layout.order.iter().enumerate() {
        out[tok * c..(tok + 1) * c].copy_from_slice(&xw[slot * c..(slot + 1) * c]);
    }
    out
}

/// Gather index taking an `[N, h, w, c]` map to `[N·nW, M², c]` windows.
pub fn partition_index(layout: &WindowLayout, batch: usize, c: usize) -> Vec<usize> {
    let hw = layout.grid[0] * layout.grid[1];
    let mut index = Vec::with_capacity(batch * hw * c);
    for b in 0..batch {
        for &tok in &layout.order {
            let base = (b * hw + tok) * c;
            index.extend(base..base + c);
        }
    }
    index
}

/// Gather index taking `[N·nW, M², c]` windows back to `[N, h, w, c]`.
pub fn reverse_index(layout: &WindowLayout, batch: usize, c: usize) -> Vec<usize> {
    let hw = layout.grid[0] * layout.grid[1];
    let n = layout.tokens_per_window();
    let mut index = Vec::with_capacity(batch * hw * c);
    for b in 0..batch {
        for tok in 0..hw {
            let slot = layout.window_of[tok] * n + layout.slot_of[tok];
            let base = (b * hw + slot) * c;
            index.extend(base..base + c);
        }
    }
    index
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn base_grid_counts() {
        let l = build_window_layout([56, 56], 7, false).unwrap();
        assert_eq!(l.num_windows(), 64);
        assert_eq!(l.tokens_per_window(), 49);
        assert!(l.mask.is_none());
    }

    #[test]
    fn covering_window_disables_shift() {
        let l = build_window_layout([4, 4], 4, true).unwrap();
        assert_eq!(l.shift, 0);
        assert_eq!(l.num_windows(), 1);
        assert!(l.mask.is_none());
        assert_eq!(l, build_window_layout([4, 4], 4, false).unwrap());
    }

    #[test]
    fn oversize_window_is_an_error() {
        assert_eq!(
            build_window_layout([4, 4], 5, false),
            Err(Error::WindowTooLarge {
                window: 5,
                grid: [4, 4]
            })
        );
    }

    #[test]
    fn partition_is_a_bijection() {
        for h in 1..=16usize {
            for w in 1..=16usize {
                for m in 1..=h.min(w) {
                    if h % m != 0 || w % m != 0 {
                        continue;
                    }
                    for shifted in [false, true] {
                        let l = build_window_layout([h, w], m, shifted).unwrap();
                        let x: Vec<u32> = (0..(h * w * 2) as u32).collect();
                        let p = window_partition(&x, 2, &l);
                        assert_eq!(window_reverse(&p, 2, &l), x, "{h}x{w} M={m} {shifted}");
                        let mut seen = l.order.clone();
                        seen.sort_unstable();
                        assert!(seen.iter().enumerate().all(|(i, &t)| i == t));
                    }
                }
            }
        }
    }
}
