use alloc::string::ToString;

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::tensor::Tensor;

/// Plain SGD: `p ← p − lr·grad(p)`, then gradients are zeroed.
pub fn sgd_step<'a, T: Real>(
    params: impl IntoIterator<Item = (&'a str, &'a mut Tensor<T>)>,
    lr: T,
) -> Result<()> {
    for (name, p) in params {
        let Some(g) = p.grad() else {
            return Err(Error::MissingGradient(name.to_string()));
        };
        let g = g.to_vec();
        p.data_mut()
            .iter_mut()
            .zip(&g)
            .for_each(|(w, &d)| *w = *w - lr * d);
        p.zero_grad();
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tape::Tape;
    use alloc::vec;

    #[test]
    fn direct_step() {
        let mut p = Tensor::new(&[1], vec![1.0f64]).unwrap().with_grad();
        p.accumulate_grad(&[2.0]).unwrap();
        sgd_step([("p", &mut p)], 0.1).unwrap();
        assert!((p.data()[0] - 0.8).abs() < 1e-15);
        assert_eq!(p.grad().unwrap(), &[0.0]);
    }

    #[test]
    fn zero_lr_is_noop() {
        let mut p = Tensor::new(&[2], vec![1.5f64, -2.0]).unwrap().with_grad();
        p.accumulate_grad(&[3.0, 4.0]).unwrap();
        sgd_step([("p", &mut p)], 0.0).unwrap();
        assert_eq!(p.data(), &[1.5, -2.0]);
    }

    #[test]
    fn missing_gradient_is_an_error() {
        let mut p = Tensor::new(&[1], vec![1.0f32]).unwrap().with_grad();
        let err = sgd_step([("w", &mut p)], 0.1).unwrap_err();
        assert_eq!(err, Error::MissingGradient("w".into()));
    }

    #[test]
    fn quadratic_descent_converges() {
        // f(w) = (w-3)^2; each step contracts the error by 0.8, 0.8^100 ≈ 2e-10.
        let mut w = Tensor::new(&[1], vec![0.0f64]).unwrap().with_grad();
        for _ in 0..100 {
            let mut tape = Tape::new();
            let x = tape.leaf(&w);
            let y = tape.add_scalar(x, -3.0);
            let sq = tape.mul(y, y).unwrap();
            let loss = tape.sum(sq);
            tape.backward(loss).unwrap();
            w.accumulate_grad(tape.grad(x).unwrap()).unwrap();
            sgd_step([("w", &mut w)], 0.1).unwrap();
        }
        assert!((w.data()[0] - 3.0).abs() < 1e-4);
    }
}
