//! Reverse-mode automatic differentiation over a linear tape.
//!
//! Every operation appends one node holding its output value and enough
//! saved state to run its backward rule. Nodes only reference earlier
//! nodes, so a single reverse sweep visits each recorded op exactly once.
//! A tape supports one backward pass; build a fresh tape per step.

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::kernels::{col2im_acc, gemm_acc, gemm_nt_acc, gemm_tn_acc, im2col, ConvGeom};
use crate::scalar::Real;
use crate::tensor::Tensor;

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PoolMode {
    Max,
    Avg,
}

#[derive(Debug, Clone, Copy)]
struct PoolGeom {
    n: usize,
    h: usize,
    w: usize,
    c: usize,
    k: usize,
}

impl PoolGeom {
    fn oh(&self) -> usize {
        self.h / self.k
    }
    fn ow(&self) -> usize {
        self.w / self.k
    }
}

#[derive(Debug)]
enum Op<T> {
    Leaf,
    Add(Var, Var),
    AddBcast(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, T),
    AddScalar(Var),
    MatMul {
        a: Var,
        b: Var,
        m: usize,
        k: usize,
        n: usize,
    },
    Bmm {
        a: Var,
        b: Var,
        batch: usize,
        m: usize,
        k: usize,
        n: usize,
        trans_b: bool,
    },
    Linear {
        x: Var,
        w: Var,
        b: Option<Var>,
        rows: usize,
        fin: usize,
        fout: usize,
    },
    Gather {
        x: Var,
        index: Arc<[usize]>,
    },
    Reshape(Var),
    Concat {
        a: Var,
        b: Var,
        outer: usize,
        da: usize,
        db: usize,
    },
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        d: usize,
        xhat: Vec<T>,
        rstd: Vec<T>,
    },
    Softmax {
        x: Var,
        n: usize,
    },
    Gelu(Var),
    Relu(Var),
    Sigmoid(Var),
    L2Norm {
        x: Var,
        d: usize,
        norms: Vec<T>,
        eps: T,
    },
    Conv2d {
        x: Var,
        w: Var,
        b: Var,
        geom: ConvGeom,
        cols: Vec<T>,
    },
    MaxPool {
        x: Var,
        argmax: Vec<usize>,
    },
    AvgPool {
        x: Var,
        geom: PoolGeom,
    },
    MeanAxis {
        x: Var,
        outer: usize,
        len: usize,
        inner: usize,
    },
    Sum(Var),
    Mean(Var),
    CrossEntropy {
        logits: Var,
        labels: Vec<usize>,
        probs: Vec<T>,
        classes: usize,
    },
    Bce {
        pred: Var,
        labels: Vec<T>,
        eps: T,
    },
    ArcMargin {
        cos: Var,
        labels: Vec<usize>,
        classes: usize,
        deriv: Vec<T>,
    },
    Elementwise {
        x: Var,
        deriv: Vec<T>,
    },
}

#[derive(Debug)]
struct Node<T> {
    shape: Vec<usize>,
    value: Vec<T>,
    op: Op<T>,
    requires_grad: bool,
}

/// Operation record plus the values it produced.
#[derive(Debug, Default)]
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
    grads: Option<Vec<Option<Vec<T>>>>,
}

fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            grads: None,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, shape: Vec<usize>, value: Vec<T>, op: Op<T>, requires_grad: bool) -> Var {
        debug_assert_eq!(numel(&shape), value.len());
        self.nodes.push(Node {
            shape,
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    pub fn value(&self, v: Var) -> &[T] {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.rg(v)
    }

    pub fn to_tensor(&self, v: Var) -> Tensor<T> {
        let n = &self.nodes[v.0];
        Tensor::new(&n.shape, n.value.clone()).expect("tape node shape is consistent")
    }

    /// Records a tensor as a leaf; tracked iff `tensor.requires_grad`.
    pub fn leaf(&mut self, tensor: &Tensor<T>) -> Var {
        self.push(
            tensor.shape().to_vec(),
            tensor.data().to_vec(),
            Op::Leaf,
            tensor.requires_grad,
        )
    }

    pub fn input(&mut self, shape: &[usize], data: Vec<T>, requires_grad: bool) -> Result<Var> {
        if numel(shape) != data.len() || shape.iter().any(|&d| d == 0) {
            return Err(Error::InvalidShape {
                op: "input",
                shape: shape.to_vec(),
                reason: "product of shape must equal data length",
            });
        }
        Ok(self.push(shape.to_vec(), data, Op::Leaf, requires_grad))
    }

    pub fn constant(&mut self, shape: &[usize], data: Vec<T>) -> Result<Var> {
        self.input(shape, data, false)
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::ShapeMismatch {
                op,
                lhs: self.shape(a).to_vec(),
                rhs: self.shape(b).to_vec(),
            });
        }
        Ok(())
    }

    fn zip_map(&self, a: Var, b: Var, f: impl Fn(T, T) -> T) -> Vec<T> {
        self.value(a)
            .iter()
            .zip(self.value(b))
            .map(|(&x, &y)| f(x, y))
            .collect()
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let v = self.zip_map(a, b, |x, y| x + y);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(self.shape(a).to_vec(), v, Op::Add(a, b), rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        let v = self.zip_map(a, b, |x, y| x - y);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(self.shape(a).to_vec(), v, Op::Sub(a, b), rg))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let v = self.zip_map(a, b, |x, y| x * y);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(self.shape(a).to_vec(), v, Op::Mul(a, b), rg))
    }

    /// `a + b` where `b`'s shape equals the trailing dims of `a`.
    pub fn add_bcast(&mut self, a: Var, b: Var) -> Result<Var> {
        let sa = self.shape(a);
        let sb = self.shape(b);
        if sb.len() > sa.len() || sa[sa.len() - sb.len()..] != *sb {
            return Err(Error::ShapeMismatch {
                op: "add_bcast",
                lhs: sa.to_vec(),
                rhs: sb.to_vec(),
            });
        }
        let inner = numel(sb);
        let bv = self.value(b);
        let v: Vec<T> = self
            .value(a)
            .iter()
            .enumerate()
            .map(|(i, &x)| x + bv[i % inner])
            .collect();
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(sa.to_vec(), v, Op::AddBcast(a, b), rg))
    }

    pub fn scale(&mut self, a: Var, s: T) -> Var {
        let v = self.value(a).iter().map(|&x| x * s).collect();
        let rg = self.rg(a);
        self.push(self.shape(a).to_vec(), v, Op::Scale(a, s), rg)
    }

    pub fn add_scalar(&mut self, a: Var, s: T) -> Var {
        let v = self.value(a).iter().map(|&x| x + s).collect();
        let rg = self.rg(a);
        self.push(self.shape(a).to_vec(), v, Op::AddScalar(a), rg)
    }

    /// Plain 2-D matrix product.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::ShapeMismatch {
                op: "matmul",
                lhs: sa.to_vec(),
                rhs: sb.to_vec(),
            });
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut out = vec![T::zero(); m * n];
        gemm_acc(self.value(a), self.value(b), &mut out, m, k, n);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(vec![m, n], out, Op::MatMul { a, b, m, k, n }, rg))
    }

    /// Batched product `a[B×m×k] · b[B×k×n]`, or `a · bᵀ` with `b[B×n×k]`.
    pub fn bmm(&mut self, a: Var, b: Var, trans_b: bool) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        let bad = || Error::ShapeMismatch {
            op: "bmm",
            lhs: sa.to_vec(),
            rhs: sb.to_vec(),
        };
        if sa.len() != 3 || sb.len() != 3 || sa[0] != sb[0] {
            return Err(bad());
        }
        let (batch, m, k) = (sa[0], sa[1], sa[2]);
        let n = if trans_b {
            if sb[2] != k {
                return Err(bad());
            }
            sb[1]
        } else {
            if sb[1] != k {
                return Err(bad());
            }
            sb[2]
        };
        let mut out = vec![T::zero(); batch * m * n];
        let (av, bv) = (self.value(a), self.value(b));
        for i in 0..batch {
            let ai = &av[i * m * k..(i + 1) * m * k];
            let bi = &bv[i * k * n..(i + 1) * k * n];
            let oi = &mut out[i * m * n..(i + 1) * m * n];
            if trans_b {
                gemm_nt_acc(ai, bi, oi, m, k, n);
            } else {
                gemm_acc(ai, bi, oi, m, k, n);
            }
        }
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(
            vec![batch, m, n],
            out,
            Op::Bmm {
                a,
                b,
                batch,
                m,
                k,
                n,
                trans_b,
            },
            rg,
        ))
    }

    /// Affine map over the last axis: `x[..., in] · w[in, out] + b[out]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let sx = self.shape(x).to_vec();
        let sw = self.shape(w).to_vec();
        let fin = *sx.last().unwrap();
        if sw.len() != 2 || sw[0] != fin {
            return Err(Error::ShapeMismatch {
                op: "linear",
                lhs: sx,
                rhs: sw,
            });
        }
        let fout = sw[1];
        if let Some(b) = b {
            if self.shape(b) != [fout] {
                return Err(Error::ShapeMismatch {
                    op: "linear bias",
                    lhs: sw,
                    rhs: self.shape(b).to_vec(),
                });
            }
        }
        let rows = numel(&sx) / fin;
        let mut out = vec![T::zero(); rows * fout];
        if let Some(b) = b {
            let bv = self.value(b);
            for r in 0..rows {
                out[r * fout..(r + 1) * fout].copy_from_slice(bv);
            }
        }
        gemm_acc(self.value(x), self.value(w), &mut out, rows, fin, fout);
        let mut shape = sx;
        *shape.last_mut().unwrap() = fout;
        let rg = self.rg(x) || self.rg(w) || b.map_or(false, |b| self.rg(b));
        Ok(self.push(
            shape,
            out,
            Op::Linear {
                x,
                w,
                b,
                rows,
                fin,
                fout,
            },
            rg,
        ))
    }

    /// `out[i] = x[index[i]]`, reshaped to `shape`. Backward scatter-adds.
    pub fn gather(&mut self, x: Var, index: Arc<[usize]>, shape: &[usize]) -> Result<Var> {
        let n = self.value(x).len();
        if numel(shape) != index.len() || index.iter().any(|&i| i >= n) {
            return Err(Error::InvalidShape {
                op: "gather",
                shape: shape.to_vec(),
                reason: "index length must match shape and stay in bounds",
            });
        }
        let xv = self.value(x);
        let v = index.iter().map(|&i| xv[i]).collect();
        let rg = self.rg(x);
        Ok(self.push(shape.to_vec(), v, Op::Gather { x, index }, rg))
    }

    /// Axis permutation, recorded as a gather.
    pub fn permute(&mut self, x: Var, axes: &[usize]) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        let (index, out_shape) = permute_index(&shape, axes)?;
        self.gather(x, index.into(), &out_shape)
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        if numel(shape) != self.value(x).len() {
            return Err(Error::ShapeMismatch {
                op: "reshape",
                lhs: self.shape(x).to_vec(),
                rhs: shape.to_vec(),
            });
        }
        let v = self.value(x).to_vec();
        let rg = self.rg(x);
        Ok(self.push(shape.to_vec(), v, Op::Reshape(x), rg))
    }

    /// Concatenate along the last axis.
    pub fn concat_last(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if sa.len() != sb.len() || sa[..sa.len() - 1] != sb[..sb.len() - 1] {
            return Err(Error::ShapeMismatch {
                op: "concat_last",
                lhs: sa,
                rhs: sb,
            });
        }
        let da = *sa.last().unwrap();
        let db = *sb.last().unwrap();
        let outer = numel(&sa) / da;
        let (av, bv) = (self.value(a), self.value(b));
        let mut v = Vec::with_capacity(outer * (da + db));
        for r in 0..outer {
            v.extend_from_slice(&av[r * da..(r + 1) * da]);
            v.extend_from_slice(&bv[r * db..(r + 1) * db]);
        }
        let mut shape = sa;
        *shape.last_mut().unwrap() = da + db;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(
            shape,
            v,
            Op::Concat {
                a,
                b,
                outer,
                da,
                db,
            },
            rg,
        ))
    }

    /// Per-row standardization over the last axis followed by `gamma`/`beta`.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: T) -> Result<Var> {
        let sx = self.shape(x).to_vec();
        let d = *sx.last().unwrap();
        if self.shape(gamma) != [d] || self.shape(beta) != [d] {
            return Err(Error::ShapeMismatch {
                op: "layer_norm",
                lhs: sx,
                rhs: self.shape(gamma).to_vec(),
            });
        }
        let rows = numel(&sx) / d;
        let xv = self.value(x);
        let (g, bt) = (self.value(gamma), self.value(beta));
        let dn = T::cst(d as f64);
        let mut xhat = vec![T::zero(); rows * d];
        let mut rstd = vec![T::zero(); rows];
        let mut out = vec![T::zero(); rows * d];
        for r in 0..rows {
            let row = &xv[r * d..(r + 1) * d];
            let mean = row.iter().fold(T::zero(), |s, &v| s + v) / dn;
            let var = row
                .iter()
                .fold(T::zero(), |s, &v| s + (v - mean) * (v - mean))
                / dn;
            let rs = T::one() / (var + eps).sqrt();
            rstd[r] = rs;
            for j in 0..d {
                let xh = (row[j] - mean) * rs;
                xhat[r * d + j] = xh;
                out[r * d + j] = xh * g[j] + bt[j];
            }
        }
        let rg = self.rg(x) || self.rg(gamma) || self.rg(beta);
        Ok(self.push(
            sx,
            out,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                d,
                xhat,
                rstd,
            },
            rg,
        ))
    }

    /// Softmax over the last axis with max subtraction.
    pub fn softmax(&mut self, x: Var) -> Var {
        let shape = self.shape(x).to_vec();
        let n = *shape.last().unwrap();
        let mut out = self.value(x).to_vec();
        for row in out.chunks_mut(n) {
            softmax_row(row);
        }
        let rg = self.rg(x);
        self.push(shape, out, Op::Softmax { x, n }, rg)
    }

    /// GELU, tanh approximation: `0.5·x·(1 + tanh(√(2/π)·(x + 0.044715·x³)))`.
    pub fn gelu(&mut self, x: Var) -> Var {
        let v = self.value(x).iter().map(|&u| gelu(u)).collect();
        let rg = self.rg(x);
        self.push(self.shape(x).to_vec(), v, Op::Gelu(x), rg)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let v = self.value(x).iter().map(|&u| u.max(T::zero())).collect();
        let rg = self.rg(x);
        self.push(self.shape(x).to_vec(), v, Op::Relu(x), rg)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let v = self.value(x).iter().map(|&u| sigmoid(u)).collect();
        let rg = self.rg(x);
        self.push(self.shape(x).to_vec(), v, Op::Sigmoid(x), rg)
    }

    /// `v / max(‖v‖₂, eps)` along the last axis.
    pub fn l2_normalize(&mut self, x: Var, eps: T) -> Var {
        let shape = self.shape(x).to_vec();
        let d = *shape.last().unwrap();
        let mut out = self.value(x).to_vec();
        let mut norms = Vec::with_capacity(out.len() / d);
        for row in out.chunks_mut(d) {
            let nrm = row.iter().fold(T::zero(), |s, &v| s + v * v).sqrt();
            let den = nrm.max(eps);
            row.iter_mut().for_each(|v| *v = *v / den);
            norms.push(nrm);
        }
        let rg = self.rg(x);
        self.push(shape, out, Op::L2Norm { x, d, norms, eps }, rg)
    }

    /// NHWC cross-correlation with `w[kh×kw×C×F]` and `bias[F]`.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Var, stride: usize, pad: usize) -> Result<Var> {
        let sx = self.shape(x).to_vec();
        let sw = self.shape(w).to_vec();
        if sx.len() != 4 || sw.len() != 4 || sw[2] != sx[3] || self.shape(b) != [sw[3]] {
            return Err(Error::ShapeMismatch {
                op: "conv2d",
                lhs: sx,
                rhs: sw,
            });
        }
        if stride == 0 {
            return Err(Error::InvalidConfig("conv2d stride must be >= 1".into()));
        }
        let (ph, pw) = (sx[1] + 2 * pad, sx[2] + 2 * pad);
        if sw[0] > ph || sw[1] > pw {
            return Err(Error::KernelTooLarge {
                kernel: [sw[0], sw[1]],
                padded: [ph, pw],
            });
        }
        let geom = ConvGeom {
            n: sx[0],
            h: sx[1],
            w: sx[2],
            c: sx[3],
            kh: sw[0],
            kw: sw[1],
            f: sw[3],
            stride,
            pad,
            oh: (ph - sw[0]) / stride + 1,
            ow: (pw - sw[1]) / stride + 1,
        };
        let cols = im2col(self.value(x), &geom);
        let rows = geom.rows();
        let mut out = vec![T::zero(); rows * geom.f];
        let bv = self.value(b);
        for r in 0..rows {
            out[r * geom.f..(r + 1) * geom.f].copy_from_slice(bv);
        }
        gemm_acc(
            &cols,
            self.value(w),
            &mut out,
            rows,
            geom.patch_len(),
            geom.f,
        );
        let rg = self.rg(x) || self.rg(w) || self.rg(b);
        Ok(self.push(
            vec![geom.n, geom.oh, geom.ow, geom.f],
            out,
            Op::Conv2d {
                x,
                w,
                b,
                geom,
                cols,
            },
            rg,
        ))
    }

    /// Non-overlapping `window×window` reduction on an NHWC map.
    pub fn pool2d(&mut self, x: Var, window: usize, mode: PoolMode) -> Result<Var> {
        let sx = self.shape(x).to_vec();
        if sx.len() != 4 {
            return Err(Error::InvalidShape {
                op: "pool2d",
                shape: sx,
                reason: "expected N×H×W×C",
            });
        }
        if window == 0 || sx[1] % window != 0 || sx[2] % window != 0 {
            return Err(Error::NonDivisibleWindow {
                window,
                dims: [sx[1], sx[2]],
            });
        }
        let g = PoolGeom {
            n: sx[0],
            h: sx[1],
            w: sx[2],
            c: sx[3],
            k: window,
        };
        let (oh, ow) = (g.oh(), g.ow());
        let xv = self.value(x);
        let mut out = vec![T::zero(); g.n * oh * ow * g.c];
        let mut argmax = match mode {
            PoolMode::Max => vec![0usize; out.len()],
            PoolMode::Avg => Vec::new(),
        };
        let inv = T::one() / T::cst((window * window) as f64);
        for b in 0..g.n {
            for oy in 0..oh {
                for ox in 0..ow {
                    for c in 0..g.c {
                        let o = ((b * oh + oy) * ow + ox) * g.c + c;
                        let mut best = T::neg_infinity();
                        let mut best_i = 0;
                        let mut acc = T::zero();
                        // scan order: row-major within the window
                        for ky in 0..window {
                            for kx in 0..window {
                                let i = ((b * g.h + oy * window + ky) * g.w + ox * window + kx)
                                    * g.c
                                    + c;
                                let v = xv[i];
                                acc = acc + v;
                                if v > best {
                                    best = v;
                                    best_i = i;
                                }
                            }
                        }
                        match mode {
                            PoolMode::Max => {
                                out[o] = best;
                                argmax[o] = best_i;
                            }
                            PoolMode::Avg => out[o] = acc * inv,
                        }
                    }
                }
            }
        }
        let rg = self.rg(x);
        let op = match mode {
            PoolMode::Max => Op::MaxPool { x, argmax },
            PoolMode::Avg => Op::AvgPool { x, geom: g },
        };
        Ok(self.push(vec![g.n, oh, ow, g.c], out, op, rg))
    }

    /// Mean over one axis; the axis is removed from the shape.
    pub fn mean_axis(&mut self, x: Var, axis: usize) -> Result<Var> {
        let sx = self.shape(x).to_vec();
        if axis >= sx.len() {
            return Err(Error::InvalidShape {
                op: "mean_axis",
                shape: sx,
                reason: "axis out of range",
            });
        }
        let outer: usize = sx[..axis].iter().product();
        let len = sx[axis];
        let inner: usize = sx[axis + 1..].iter().product();
        let xv = self.value(x);
        let inv = T::one() / T::cst(len as f64);
        let mut out = vec![T::zero(); outer * inner];
        for o in 0..outer {
            for l in 0..len {
                let src = &xv[(o * len + l) * inner..(o * len + l + 1) * inner];
                for (d, &s) in out[o * inner..(o + 1) * inner].iter_mut().zip(src) {
                    *d = *d + s;
                }
            }
        }
        out.iter_mut().for_each(|v| *v = *v * inv);
        let mut shape = sx;
        shape.remove(axis);
        if shape.is_empty() {
            shape.push(1);
        }
        let rg = self.rg(x);
        Ok(self.push(
            shape,
            out,
            Op::MeanAxis {
                x,
                outer,
                len,
                inner,
            },
            rg,
        ))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).iter().fold(T::zero(), |a, &v| a + v);
        let rg = self.rg(x);
        self.push(vec![1], vec![s], Op::Sum(x), rg)
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let n = self.value(x).len();
        let s = self.value(x).iter().fold(T::zero(), |a, &v| a + v) / T::cst(n as f64);
        let rg = self.rg(x);
        self.push(vec![1], vec![s], Op::Mean(x), rg)
    }

    /// Mean negative log-softmax of the labelled logit, `logits[N×C]`.
    pub fn cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let sl = self.shape(logits).to_vec();
        if sl.len() != 2 || sl[0] != labels.len() {
            return Err(Error::ShapeMismatch {
                op: "cross_entropy",
                lhs: sl,
                rhs: vec![labels.len()],
            });
        }
        let classes = sl[1];
        if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
            return Err(Error::LabelOutOfRange {
                label: bad,
                classes,
            });
        }
        let mut probs = self.value(logits).to_vec();
        let mut loss = T::zero();
        for (row, (&y, lrow)) in probs
            .chunks_mut(classes)
            .zip(labels.iter().zip(self.value(logits).chunks(classes)))
        {
            loss = loss - log_softmax_at(lrow, y);
            softmax_row(row);
        }
        loss = loss / T::cst(labels.len() as f64);
        let rg = self.rg(logits);
        Ok(self.push(
            vec![1],
            vec![loss],
            Op::CrossEntropy {
                logits,
                labels: labels.to_vec(),
                probs,
                classes,
            },
            rg,
        ))
    }

    /// Mean binary cross-entropy; predictions are clamped to `[eps, 1-eps]`.
    pub fn bce(&mut self, pred: Var, labels: &[T], eps: T) -> Result<Var> {
        if self.value(pred).len() != labels.len() {
            return Err(Error::ShapeMismatch {
                op: "bce",
                lhs: self.shape(pred).to_vec(),
                rhs: vec![labels.len()],
            });
        }
        let n = T::cst(labels.len() as f64);
        let mut loss = T::zero();
        for (&p, &y) in self.value(pred).iter().zip(labels) {
            let p = p.max(eps).min(T::one() - eps);
            loss = loss - (y * p.ln() + (T::one() - y) * (T::one() - p).ln());
        }
        let rg = self.rg(pred);
        Ok(self.push(
            vec![1],
            vec![loss / n],
            Op::Bce {
                pred,
                labels: labels.to_vec(),
                eps,
            },
            rg,
        ))
    }

    /// Replaces each row's labelled cosine `c` with `cos(arccos(c) + margin)`.
    ///
    /// Cosines are clamped to `[-1+1e-7, 1-1e-7]` before `arccos`.
    pub fn arc_margin(&mut self, cos: Var, labels: &[usize], margin: T) -> Result<Var> {
        let sc = self.shape(cos).to_vec();
        if sc.len() != 2 || sc[0] != labels.len() {
            return Err(Error::ShapeMismatch {
                op: "arc_margin",
                lhs: sc,
                rhs: vec![labels.len()],
            });
        }
        let classes = sc[1];
        if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
            return Err(Error::LabelOutOfRange {
                label: bad,
                classes,
            });
        }
        let eps = T::cst(1e-7);
        let lo = -T::one() + eps;
        let hi = T::one() - eps;
        let mut out = self.value(cos).to_vec();
        let mut deriv = Vec::with_capacity(labels.len());
        for (r, &y) in labels.iter().enumerate() {
            let c = out[r * classes + y];
            let cc = c.max(lo).min(hi);
            let theta = cc.acos();
            out[r * classes + y] = (theta + margin).cos();
            let inside = c > lo && c < hi;
            deriv.push(if inside {
                (theta + margin).sin() / (T::one() - cc * cc).sqrt()
            } else {
                T::zero()
            });
        }
        let rg = self.rg(cos);
        Ok(self.push(
            sc,
            out,
            Op::ArcMargin {
                cos,
                labels: labels.to_vec(),
                classes,
                deriv,
            },
            rg,
        ))
    }

    /// Elementwise map with a caller-supplied derivative.
    pub fn map_custom(&mut self, x: Var, f: impl Fn(T) -> T, df: impl Fn(T) -> T) -> Var {
        let xv = self.value(x);
        let v = xv.iter().map(|&u| f(u)).collect();
        let deriv = xv.iter().map(|&u| df(u)).collect();
        let rg = self.rg(x);
        self.push(self.shape(x).to_vec(), v, Op::Elementwise { x, deriv }, rg)
    }

    /// Runs the reverse sweep from the scalar `loss`.
    ///
    /// Every tracked leaf ends up with a gradient (zeros when it does not
    /// influence the loss). A second call on the same tape is an error.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.grads.is_some() {
            return Err(Error::BackwardTwice);
        }
        if self.value(loss).len() != 1 {
            return Err(Error::NonScalarLoss(self.shape(loss).to_vec()));
        }
        if !self.rg(loss) {
            return Err(Error::DetachedGraph);
        }
        let mut grads: Vec<Option<Vec<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(vec![T::one()]);
        for i in (0..=loss.0).rev() {
            if !self.nodes[i].requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.backward_node(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        for (i, node) in self.nodes.iter().enumerate() {
            if node.requires_grad && matches!(node.op, Op::Leaf) && grads[i].is_none() {
                grads[i] = Some(vec![T::zero(); node.value.len()]);
            }
        }
        self.grads = Some(grads);
        Ok(())
    }

    /// Gradient of the last backward pass with respect to `v`.
    pub fn grad(&self, v: Var) -> Option<&[T]> {
        self.grads.as_ref()?.get(v.0)?.as_deref()
    }

    fn backward_node(&self, i: usize, g: &[T], grads: &mut [Option<Vec<T>>]) {
        let node = &self.nodes[i];
        let nodes = &self.nodes;
        let mut acc = |v: Var, f: &mut dyn FnMut(&mut [T])| {
            if !nodes[v.0].requires_grad {
                return;
            }
            let buf = grads[v.0].get_or_insert_with(|| vec![T::zero(); nodes[v.0].value.len()]);
            f(buf);
        };
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                acc(*a, &mut |d| add_into(d, g));
                acc(*b, &mut |d| add_into(d, g));
            }
            Op::Sub(a, b) => {
                acc(*a, &mut |d| add_into(d, g));
                acc(*b, &mut |d| {
                    d.iter_mut().zip(g).for_each(|(x, &y)| *x = *x - y)
                });
            }
            Op::Mul(a, b) => {
                let (av, bv) = (&nodes[a.0].value, &nodes[b.0].value);
                acc(*a, &mut |d| {
                    for j in 0..d.len() {
                        d[j] = d[j] + g[j] * bv[j];
                    }
                });
                acc(*b, &mut |d| {
                    for j in 0..d.len() {
                        d[j] = d[j] + g[j] * av[j];
                    }
                });
            }
            Op::AddBcast(a, b) => {
                acc(*a, &mut |d| add_into(d, g));
                acc(*b, &mut |d| {
                    let inner = d.len();
                    for (j, &gv) in g.iter().enumerate() {
                        d[j % inner] = d[j % inner] + gv;
                    }
                });
            }
            Op::Scale(a, s) => acc(*a, &mut |d| {
                d.iter_mut().zip(g).for_each(|(x, &y)| *x = *x + y * *s)
            }),
            Op::AddScalar(a) | Op::Reshape(a) => acc(*a, &mut |d| add_into(d, g)),
            Op::MatMul { a, b, m, k, n } => {
                let (av, bv) = (&nodes[a.0].value, &nodes[b.0].value);
                acc(*a, &mut |d| gemm_nt_acc(g, bv, d, *m, *n, *k));
                acc(*b, &mut |d| gemm_tn_acc(av, g, d, *m, *k, *n));
            }
            Op::Bmm {
                a,
                b,
                batch,
                m,
                k,
                n,
                trans_b,
            } => {
                let (m, k, n) = (*m, *k, *n);
                let (av, bv) = (&nodes[a.0].value, &nodes[b.0].value);
                acc(*a, &mut |d| {
                    for t in 0..*batch {
                        let gt = &g[t * m * n..(t + 1) * m * n];
                        let bt = &bv[t * k * n..(t + 1) * k * n];
                        let dt = &mut d[t * m * k..(t + 1) * m * k];
                        if *trans_b {
                            // b is n×k: dA = G·B
                            gemm_acc(gt, bt, dt, m, n, k);
                        } else {
                            gemm_nt_acc(gt, bt, dt, m, n, k);
                        }
                    }
                });
                acc(*b, &mut |d| {
                    for t in 0..*batch {
                        let gt = &g[t * m * n..(t + 1) * m * n];
                        let at = &av[t * m * k..(t + 1) * m * k];
                        let dt = &mut d[t * k * n..(t + 1) * k * n];
                        if *trans_b {
                            // dB[n×k] = Gᵀ·A
                            gemm_tn_acc(gt, at, dt, m, n, k);
                        } else {
                            gemm_tn_acc(at, gt, dt, m, k, n);
                        }
                    }
                });
            }
            Op::Linear {
                x,
                w,
                b,
                rows,
                fin,
                fout,
            } => {
                let (xv, wv) = (&nodes[x.0].value, &nodes[w.0].value);
                acc(*x, &mut |d| gemm_nt_acc(g, wv, d, *rows, *fout, *fin));
                acc(*w, &mut |d| gemm_tn_acc(xv, g, d, *rows, *fin, *fout));
                if let Some(b) = b {
                    acc(*b, &mut |d| {
                        for r in 0..*rows {
                            add_into(d, &g[r * fout..(r + 1) * fout]);
                        }
                    });
                }
            }
            Op::Gather { x, index } => acc(*x, &mut |d| {
                for (&src, &gv) in index.iter().zip(g) {
                    d[src] = d[src] + gv;
                }
            }),
            Op::Concat {
                a,
                b,
                outer,
                da,
                db,
            } => {
                let w = da + db;
                acc(*a, &mut |d| {
                    for r in 0..*outer {
                        add_into(&mut d[r * da..(r + 1) * da], &g[r * w..r * w + da]);
                    }
                });
                acc(*b, &mut |d| {
                    for r in 0..*outer {
                        add_into(&mut d[r * db..(r + 1) * db], &g[r * w + da..(r + 1) * w]);
                    }
                });
            }
            Op::LayerNorm {
                x,
                gamma,
                beta,
                d,
                xhat,
                rstd,
            } => {
                let d = *d;
                let gv = &nodes[gamma.0].value;
                let dn = T::cst(d as f64);
                acc(*x, &mut |dx| {
                    for (r, &rs) in rstd.iter().enumerate() {
                        let gr = &g[r * d..(r + 1) * d];
                        let xh = &xhat[r * d..(r + 1) * d];
                        let mut m1 = T::zero();
                        let mut m2 = T::zero();
                        for j in 0..d {
                            let dxh = gr[j] * gv[j];
                            m1 = m1 + dxh;
                            m2 = m2 + dxh * xh[j];
                        }
                        m1 = m1 / dn;
                        m2 = m2 / dn;
                        for j in 0..d {
                            let dxh = gr[j] * gv[j];
                            dx[r * d + j] = dx[r * d + j] + rs * (dxh - m1 - xh[j] * m2);
                        }
                    }
                });
                acc(*gamma, &mut |dg| {
                    for (j, (&gj, &xh)) in g.iter().zip(xhat.iter()).enumerate() {
                        dg[j % d] = dg[j % d] + gj * xh;
                    }
                });
                acc(*beta, &mut |db| {
                    for (j, &gj) in g.iter().enumerate() {
                        db[j % d] = db[j % d] + gj;
                    }
                });
            }
            Op::Softmax { x, n } => {
                let y = &node.value;
                acc(*x, &mut |dx| {
                    for ((dr, yr), gr) in dx.chunks_mut(*n).zip(y.chunks(*n)).zip(g.chunks(*n)) {
                        let dot = yr.iter().zip(gr).fold(T::zero(), |s, (&a, &b)| s + a * b);
                        for j in 0..*n {
                            dr[j] = dr[j] + yr[j] * (gr[j] - dot);
                        }
                    }
                });
            }
            Op::Gelu(x) => {
                let xv = &nodes[x.0].value;
                acc(*x, &mut |dx| {
                    for j in 0..dx.len() {
                        dx[j] = dx[j] + g[j] * gelu_grad(xv[j]);
                    }
                });
            }
            Op::Relu(x) => {
                let xv = &nodes[x.0].value;
                acc(*x, &mut |dx| {
                    for j in 0..dx.len() {
                        if xv[j] > T::zero() {
                            dx[j] = dx[j] + g[j];
                        }
                    }
                });
            }
            Op::Sigmoid(x) => {
                let y = &node.value;
                acc(*x, &mut |dx| {
                    for j in 0..dx.len() {
                        dx[j] = dx[j] + g[j] * y[j] * (T::one() - y[j]);
                    }
                });
            }
            Op::L2Norm { x, d, norms, eps } => {
                let y = &node.value;
                acc(*x, &mut |dx| {
                    for (r, &nrm) in norms.iter().enumerate() {
                        let yr = &y[r * d..(r + 1) * d];
                        let gr = &g[r * d..(r + 1) * d];
                        let dr = &mut dx[r * d..(r + 1) * d];
                        if nrm > *eps {
                            let dot = yr.iter().zip(gr).fold(T::zero(), |s, (&a, &b)| s + a * b);
                            for j in 0..*d {
                                dr[j] = dr[j] + (gr[j] - yr[j] * dot) / nrm;
                            }
                        } else {
                            for j in 0..*d {
                                dr[j] = dr[j] + gr[j] / *eps;
                            }
                        }
                    }
                });
            }
            Op::Conv2d {
                x,
                w,
                b,
                geom,
                cols,
            } => {
                let rows = geom.rows();
                let plen = geom.patch_len();
                let wv = &nodes[w.0].value;
                acc(*x, &mut |dx| {
                    let mut dcols = vec![T::zero(); rows * plen];
                    gemm_nt_acc(g, wv, &mut dcols, rows, geom.f, plen);
                    col2im_acc(&dcols, geom, dx);
                });
                acc(*w, &mut |dw| gemm_tn_acc(cols, g, dw, rows, plen, geom.f));
                acc(*b, &mut |db| {
                    for r in 0..rows {
                        add_into(db, &g[r * geom.f..(r + 1) * geom.f]);
                    }
                });
            }
            Op::MaxPool { x, argmax } => acc(*x, &mut |dx| {
                for (&src, &gv) in argmax.iter().zip(g) {
                    dx[src] = dx[src] + gv;
                }
            }),
            Op::AvgPool { x, geom } => {
                let gm = *geom;
                let inv = T::one() / T::cst((gm.k * gm.k) as f64);
                acc(*x, &mut |dx| {
                    for b in 0..gm.n {
                        for y in 0..gm.h {
                            for xx in 0..gm.w {
                                let o = ((b * gm.oh() + y / gm.k) * gm.ow() + xx / gm.k) * gm.c;
                                let i = ((b * gm.h + y) * gm.w + xx) * gm.c;
                                for c in 0..gm.c {
                                    dx[i + c] = dx[i + c] + g[o + c] * inv;
                                }
                            }
                        }
                    }
                });
            }
            Op::MeanAxis {
                x,
                outer,
                len,
                inner,
            } => {
                let inv = T::one() / T::cst(*len as f64);
                acc(*x, &mut |dx| {
                    for o in 0..*outer {
                        let gs = &g[o * inner..(o + 1) * inner];
                        for l in 0..*len {
                            let base = (o * len + l) * inner;
                            for (k, &gv) in gs.iter().enumerate() {
                                dx[base + k] = dx[base + k] + gv * inv;
                            }
                        }
                    }
                });
            }
            Op::Sum(x) => acc(*x, &mut |dx| dx.iter_mut().for_each(|v| *v = *v + g[0])),
            Op::Mean(x) => {
                let n = T::cst(nodes[x.0].value.len() as f64);
                acc(*x, &mut |dx| dx.iter_mut().for_each(|v| *v = *v + g[0] / n));
            }
            Op::CrossEntropy {
                logits,
                labels,
                probs,
                classes,
            } => {
                let scale = g[0] / T::cst(labels.len() as f64);
                acc(*logits, &mut |dx| {
                    for (r, &y) in labels.iter().enumerate() {
                        for c in 0..*classes {
                            let p = probs[r * classes + c];
                            let t = if c == y { T::one() } else { T::zero() };
                            dx[r * classes + c] = dx[r * classes + c] + (p - t) * scale;
                        }
                    }
                });
            }
            Op::Bce { pred, labels, eps } => {
                let pv = &nodes[pred.0].value;
                let scale = g[0] / T::cst(labels.len() as f64);
                acc(*pred, &mut |dx| {
                    for j in 0..labels.len() {
                        let p = pv[j];
                        if p <= *eps || p >= T::one() - *eps {
                            continue;
                        }
                        let y = labels[j];
                        dx[j] = dx[j] + scale * (-(y / p) + (T::one() - y) / (T::one() - p));
                    }
                });
            }
            Op::ArcMargin {
                cos,
                labels,
                classes,
                deriv,
            } => acc(*cos, &mut |dx| {
                for (j, &gv) in g.iter().enumerate() {
                    let (r, c) = (j / classes, j % classes);
                    let local = if c == labels[r] { deriv[r] } else { T::one() };
                    dx[j] = dx[j] + gv * local;
                }
            }),
            Op::Elementwise { x, deriv } => acc(*x, &mut |dx| {
                for j in 0..dx.len() {
                    dx[j] = dx[j] + g[j] * deriv[j];
                }
            }),
        }
    }
}

fn add_into<T: Real>(d: &mut [T], g: &[T]) {
    d.iter_mut().zip(g).for_each(|(a, &b)| *a = *a + b);
}

pub(crate) fn softmax_row<T: Real>(row: &mut [T]) {
    let mx = row.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
    let mut s = T::zero();
    for v in row.iter_mut() {
        *v = (*v - mx).exp();
        s = s + *v;
    }
    row.iter_mut().for_each(|v| *v = *v / s);
}

fn log_softmax_at<T: Real>(row: &[T], y: usize) -> T {
    let mx = row.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
    let lse = row.iter().fold(T::zero(), |s, &v| s + (v - mx).exp()).ln() + mx;
    row[y] - lse
}

const GELU_K: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_C: f64 = 0.044_715;

pub(crate) fn gelu<T: Real>(x: T) -> T {
    let k = T::cst(GELU_K);
    let c = T::cst(GELU_C);
    T::cst(0.5) * x * (T::one() + (k * (x + c * x * x * x)).tanh())
}

fn gelu_grad<T: Real>(x: T) -> T {
    let k = T::cst(GELU_K);
    let c = T::cst(GELU_C);
    let t = (k * (x + c * x * x * x)).tanh();
    T::cst(0.5) * (T::one() + t)
        + T::cst(0.5) * x * (T::one() - t * t) * k * (T::one() + T::cst(3.0) * c * x * x)
}

pub(crate) fn sigmoid<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// Flat source indices realising an axis permutation.
pub fn permute_index(shape: &[usize], axes: &[usize]) -> Result<(Vec<usize>, Vec<usize>)> {
    let r = shape.len();
    let mut seen = vec![false; r];
    if axes.len() != r
        || axes
            .iter()
            .any(|&a| a >= r || core::mem::replace(&mut seen[a], true))
    {
        return Err(Error::InvalidShape {
            op: "permute",
            shape: shape.to_vec(),
            reason: "axes must be a permutation of the tensor rank",
        });
    }
    let mut strides = vec![1usize; r];
    for i in (0..r.saturating_sub(1)).rev() {
        strides[i] = strides[i + 1] * shape[i + 1];
    }
    let out_shape: Vec<usize> = axes.iter().map(|&a| shape[a]).collect();
    let n = numel(shape);
    let mut index = Vec::with_capacity(n);
    let mut coord = vec![0usize; r];
    for _ in 0..n {
        let src: usize = coord.iter().zip(axes).map(|(&c, &a)| c * strides[a]).sum();
        index.push(src);
        for d in (0..r).rev() {
            coord[d] += 1;
            if coord[d] < out_shape[d] {
                break;
            }
            coord[d] = 0;
        }
    }
    Ok((index, out_shape))
}
