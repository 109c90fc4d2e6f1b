//! Frequency-split attention.
//!
//! High-frequency heads run self-attention inside non-overlapping `s×s`
//! windows. Low-frequency heads let every position query keys and values
//! computed from the `s×s` average-pooled map. The two outputs are
//! concatenated channel-wise, high-frequency first.

use alloc::format;

use serde::{Deserialize, Serialize};

use crate::attention::multi_head_attention;
use crate::error::{Error, Result};
use crate::nn::{linear, linear_params, narrow_last, Bound, Init};
use crate::scalar::Real;
use crate::swin::window::{build_window_layout, partition_index, reverse_index};
use crate::tape::{PoolMode, Tape, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HiLoConfig {
    pub channels: usize,
    pub total_heads: usize,
    pub hi_heads: usize,
    pub window: usize,
}

impl HiLoConfig {
    /// 8 heads, 4 of them high-frequency, 2×2 windows.
    pub fn paper(channels: usize) -> Self {
        Self {
            channels,
            total_heads: 8,
            hi_heads: 4,
            window: 2,
        }
    }

    /// 4 heads, 2 of them high-frequency, 2×2 windows.
    pub fn desk(channels: usize) -> Self {
        Self {
            channels,
            total_heads: 4,
            hi_heads: 2,
            window: 2,
        }
    }

    pub fn head_dim(&self) -> usize {
        self.channels / self.total_heads
    }

    pub fn lo_heads(&self) -> usize {
        self.total_heads - self.hi_heads
    }

    pub fn hi_dim(&self) -> usize {
        self.hi_heads * self.head_dim()
    }

    pub fn lo_dim(&self) -> usize {
        self.lo_heads() * self.head_dim()
    }

    pub fn validate(&self) -> Result<()> {
        if self.total_heads == 0 || self.channels % self.total_heads != 0 {
            return Err(Error::HeadDivisibility {
                heads: self.total_heads,
                dim: self.channels,
            });
        }
        if self.hi_heads > self.total_heads {
            return Err(Error::InvalidConfig(format!(
                "hi_heads {} exceeds total_heads {}",
                self.hi_heads, self.total_heads
            )));
        }
        if self.window == 0 {
            return Err(Error::InvalidConfig("HiLo window must be >= 1".into()));
        }
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        let d = self.channels;
        let (hd, ld) = (self.hi_dim(), self.lo_dim());
        let mut n = 0;
        if hd > 0 {
            n += linear_params(d, 3 * hd, true) + linear_params(hd, hd, true);
        }
        if ld > 0 {
            n += linear_params(d, ld, true)
                + linear_params(d, 2 * ld, true)
                + linear_params(ld, ld, true);
        }
        n
    }
}

/// Per-path projections: `h_qkv`, `h_proj` for high frequency and `l_q`,
/// `l_kv`, `l_proj` for low frequency, fan-in scaled. No relative position
/// bias.
pub fn init_hilo<T: Real>(init: &mut Init<'_, T>, prefix: &str, cfg: &HiLoConfig) {
    let d = cfg.channels;
    let (hd, ld) = (cfg.hi_dim(), cfg.lo_dim());
    let std = |fan_in: usize| 1.0 / num_traits::Float::sqrt(fan_in as f64);
    if hd > 0 {
        init.linear(&format!("{prefix}.h_qkv"), d, 3 * hd, true, std(d));
        init.linear(&format!("{prefix}.h_proj"), hd, hd, true, std(hd));
    }
    if ld > 0 {
        init.linear(&format!("{prefix}.l_q"), d, ld, true, std(d));
        init.linear(&format!("{prefix}.l_kv"), d, 2 * ld, true, std(d));
        init.linear(&format!("{prefix}.l_proj"), ld, ld, true, std(ld));
    }
}

/// HiLo attention on `x[N×h×w×D]`; output has the same shape.
pub fn hilo_attend<T: Real>(
    tape: &mut Tape<T>,
    p: &Bound,
    prefix: &str,
    x: Var,
    cfg: &HiLoConfig,
) -> Result<Var> {
    cfg.validate()?;
    let s = tape.shape(x).to_vec();
    if s.len() != 4 || s[3] != cfg.channels {
        return Err(Error::ShapeMismatch {
            op: "hilo_attend",
            lhs: s,
            rhs: alloc::vec![cfg.channels],
        });
    }
    let (n, h, w, d) = (s[0], s[1], s[2], s[3]);
    let win = cfg.window;
    if h % win != 0 || w % win != 0 {
        return Err(Error::NonDivisibleWindow {
            window: win,
            dims: [h, w],
        });
    }
    let (hd, ld) = (cfg.hi_dim(), cfg.lo_dim());

    let hi = if hd > 0 {
        let layout = build_window_layout([h, w], win, false)?;
        let tokens = win * win;
        let bw = n * layout.num_windows();
        let xw = tape.gather(x, partition_index(&layout, n, d).into(), &[bw, tokens, d])?;
        let qkv = linear(tape, p, &format!("{prefix}.h_qkv"), xw)?;
        let q = narrow_last(tape, qkv, 0, hd)?;
        let k = narrow_last(tape, qkv, hd, hd)?;
        let v = narrow_last(tape, qkv, 2 * hd, hd)?;
        let a = multi_head_attention(tape, q, k, v, cfg.hi_heads, None)?;
        let a = linear(tape, p, &format!("{prefix}.h_proj"), a)?;
        Some(tape.gather(a, reverse_index(&layout, n, hd).into(), &[n, h, w, hd])?)
    } else {
        None
    };

    let lo = if ld > 0 {
        let q = linear(tape, p, &format!("{prefix}.l_q"), x)?;
        let q = tape.reshape(q, &[n, h * w, ld])?;
        let pooled = if win > 1 {
            tape.pool2d(x, win, PoolMode::Avg)?
        } else {
            x
        };
        let kv = linear(tape, p, &format!("{prefix}.l_kv"), pooled)?;
        let kv = tape.reshape(kv, &[n, (h / win) * (w / win), 2 * ld])?;
        let k = narrow_last(tape, kv, 0, ld)?;
        let v = narrow_last(tape, kv, ld, ld)?;
        let a = multi_head_attention(tape, q, k, v, cfg.lo_heads(), None)?;
        let a = linear(tape, p, &format!("{prefix}.l_proj"), a)?;
        Some(tape.reshape(a, &[n, h, w, ld])?)
    } else {
        None
    };

    match (hi, lo) {
        (Some(a), Some(b)) => tape.concat_last(a, b),
        (Some(a), None) | (None, Some(a)) => Ok(a),
        (None, None) => unreachable!("total_heads > 0 after validation"),
    }
}
