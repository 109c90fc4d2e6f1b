//! Central finite-difference gradient checking.

use alloc::vec::Vec;

use crate::error::Result;
use crate::rng::SplitMix64;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// Denominator floor for the relative error of near-zero gradients.
pub const REL_FLOOR: f64 = 1e-6;

/// `|a − n| / max(|a|, |n|, REL_FLOOR)`.
pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

/// Worst-case comparison result.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub checked: usize,
    /// (input index, coordinate) of the worst entry.
    pub worst: (usize, usize),
}

/// Compares the analytic gradient of `f` against `(f(x+h) − f(x−h)) / 2h`.
///
/// `f` records a scalar on the supplied tape from the leaf handles it is
/// given. When `max_coords` is set, that many coordinates are sampled
/// (deterministically from `seed`) instead of checking all of them.
pub fn grad_check<F>(
    f: F,
    inputs: &[Tensor<f64>],
    step: f64,
    max_coords: Option<usize>,
    seed: u64,
) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Result<Var>,
{
    let eval = |xs: &[Tensor<f64>]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = xs.iter().map(|t| tape.leaf(t)).collect();
        let out = f(&mut tape, &vars)?;
        Ok(tape.value(out)[0])
    };

    let mut tape = Tape::new();
    let tracked: Vec<Tensor<f64>> = inputs.iter().map(|t| t.clone().with_grad()).collect();
    let vars: Vec<Var> = tracked.iter().map(|t| tape.leaf(t)).collect();
    let out = f(&mut tape, &vars)?;
    tape.backward(out)?;
    let analytic: Vec<Vec<f64>> = vars
        .iter()
        .map(|&v| tape.grad(v).map(|g| g.to_vec()).unwrap_or_default())
        .collect();

    let mut coords: Vec<(usize, usize)> = inputs
        .iter()
        .enumerate()
        .flat_map(|(i, t)| (0..t.numel()).map(move |j| (i, j)))
        .collect();
    if let Some(k) = max_coords {
        if k < coords.len() {
            SplitMix64::new(seed).shuffle(&mut coords);
            coords.truncate(k);
            coords.sort_unstable();
        }
    }

    let mut work: Vec<Tensor<f64>> = inputs.to_vec();
    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        checked: 0,
        worst: (0, 0),
    };
    for (i, j) in coords {
        let orig = work[i].data()[j];
        work[i].data_mut()[j] = orig + step;
        let fp = eval(&work)?;
        work[i].data_mut()[j] = orig - step;
        let fm = eval(&work)?;
        work[i].data_mut()[j] = orig;
        let numeric = (fp - fm) / (2.0 * step);
        let e = rel_err(analytic[i][j], numeric);
        report.checked += 1;
        if e > report.max_rel_err || report.checked == 1 {
            report.max_rel_err = report.max_rel_err.max(e);
            if e >= report.max_rel_err {
                report.worst = (i, j);
            }
        }
    }
    Ok(report)
}
