//! Scaled dot-product multi-head attention on tape values.

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::tape::{Tape, Var};

/// `[B, n, H·d] → [B·H, n, d]`
pub fn split_heads<T: Real>(tape: &mut Tape<T>, x: Var, heads: usize) -> Result<Var> {
    let s = tape.shape(x).to_vec();
    if s.len() != 3 || heads == 0 || s[2] % heads != 0 {
        return Err(Error::HeadDivisibility {
            heads,
            dim: s.last().copied().unwrap_or(0),
        });
    }
    let (b, n, d) = (s[0], s[1], s[2] / heads);
    let r = tape.reshape(x, &[b, n, heads, d])?;
    let p = tape.permute(r, &[0, 2, 1, 3])?;
    tape.reshape(p, &[b * heads, n, d])
}

/// `[B·H, n, d] → [B, n, H·d]`
pub fn merge_heads<T: Real>(tape: &mut Tape<T>, x: Var, heads: usize) -> Result<Var> {
    let s = tape.shape(x).to_vec();
    let (b, n, d) = (s[0] / heads, s[1], s[2]);
    let r = tape.reshape(x, &[b, heads, n, d])?;
    let p = tape.permute(r, &[0, 2, 1, 3])?;
    tape.reshape(p, &[b, n, heads * d])
}

/// Multi-head `softmax(QKᵀ/√d + bias)·V`.
///
/// `q: [B, nq, H·d]`, `k, v: [B, nk, H·d]`; `bias`, when given, has shape
/// `[B·H, nq, nk]` and is added to the logits before the softmax.
pub fn multi_head_attention<T: Real>(
    tape: &mut Tape<T>,
    q: Var,
    k: Var,
    v: Var,
    heads: usize,
    bias: Option<Var>,
) -> Result<Var> {
    let dim = *tape.shape(q).last().unwrap();
    let head_dim = dim / heads.max(1);
    let qh = split_heads(tape, q, heads)?;
    let kh = split_heads(tape, k, heads)?;
    let vh = split_heads(tape, v, heads)?;
    let qs = tape.scale(qh, T::one() / T::cst(head_dim as f64).sqrt());
    let mut logits = tape.bmm(qs, kh, true)?;
    if let Some(b) = bias {
        logits = tape.add(logits, b)?;
    }
    let attn = tape.softmax(logits);
    let out = tape.bmm(attn, vh, false)?;
    merge_heads(tape, out, heads)
}
