//! Minimal tensor engine with reverse-mode automatic differentiation.
//!
//! Tensors are row-major `f64` buffers with an optional gradient. Every
//! forward operation on a gradient-tracked input records its parents and a
//! backward closure; [`Tensor::backward`] replays the recorded graph in
//! reverse topological order and frees it afterwards. Graphs are rebuilt on
//! every forward pass.

use std::cell::RefCell;
use std::collections::HashSet;
use std::rc::Rc;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

const LAYER_NORM_EPS: f64 = 1e-5;
const BATCH_NORM_EPS: f64 = 1e-5;

type BackwardFn = Box<dyn Fn(&[f64])>;

struct Inner {
    shape: Vec<usize>,
    data: Vec<f64>,
    requires_grad: bool,
    grad: Option<Vec<f64>>,
    parents: Vec<Tensor>,
    backward_fn: Option<BackwardFn>,
}

/// Shaped f64 array, optionally tracked for gradients.
///
/// Cloning a `Tensor` clones the handle, not the buffer; all clones see the
/// same data and gradient.
#[derive(Clone)]
pub struct Tensor {
    inner: Rc<RefCell<Inner>>,
}

impl std::fmt::Debug for Tensor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let inner = self.inner.borrow();
        f.debug_struct("Tensor")
            .field("shape", &inner.shape)
            .field("requires_grad", &inner.requires_grad)
            .finish()
    }
}

impl Tensor {
    pub fn from_vec(data: Vec<f64>, shape: &[usize]) -> Result<Tensor> {
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(Error::InvalidShape {
                op: "from_vec",
                shape: shape.to_vec(),
                reason: format!("shape wants {} elements, data has {}", numel, data.len()),
            });
        }
        Ok(Self::leaf(data, shape.to_vec(), false))
    }

    pub fn scalar(value: f64) -> Tensor {
        Self::leaf(vec![value], vec![1], false)
    }

    pub fn zeros(shape: &[usize]) -> Tensor {
        let numel: usize = shape.iter().product();
        Self::leaf(vec![0.0; numel], shape.to_vec(), false)
    }

    pub fn ones(shape: &[usize]) -> Tensor {
        let numel: usize = shape.iter().product();
        Self::leaf(vec![1.0; numel], shape.to_vec(), false)
    }

    /// Gaussian init with mean 0 and the given standard deviation.
    pub fn randn<R: Rng>(shape: &[usize], std: f64, rng: &mut R) -> Tensor {
        let numel: usize = shape.iter().product();
        let dist = Normal::new(0.0, std).expect("std must be finite and positive");
        let data: Vec<f64> = (0..numel).map(|_| dist.sample(rng)).collect();
        Self::leaf(data, shape.to_vec(), false)
    }

    fn leaf(data: Vec<f64>, shape: Vec<usize>, requires_grad: bool) -> Tensor {
        Tensor {
            inner: Rc::new(RefCell::new(Inner {
                shape,
                data,
                requires_grad,
                grad: None,
                parents: Vec::new(),
                backward_fn: None,
            })),
        }
    }

    /// Marks this tensor as a gradient leaf and returns it.
    pub fn with_grad(self) -> Tensor {
        self.inner.borrow_mut().requires_grad = true;
        self
    }

    pub fn shape(&self) -> Vec<usize> {
        self.inner.borrow().shape.clone()
    }

    pub fn numel(&self) -> usize {
        self.inner.borrow().data.len()
    }

    pub fn data(&self) -> Vec<f64> {
        self.inner.borrow().data.clone()
    }

    /// Value of a single-element tensor.
    pub fn item(&self) -> f64 {
        let inner = self.inner.borrow();
        assert_eq!(inner.data.len(), 1, "item() requires a scalar tensor");
        inner.data[0]
    }

    pub fn at(&self, row: usize, col: usize) -> f64 {
        let inner = self.inner.borrow();
        assert_eq!(inner.shape.len(), 2);
        inner.data[row * inner.shape[1] + col]
    }

    pub fn requires_grad(&self) -> bool {
        self.inner.borrow().requires_grad
    }

    pub fn grad(&self) -> Option<Vec<f64>> {
        self.inner.borrow().grad.clone()
    }

    pub fn zero_grad(&self) {
        self.inner.borrow_mut().grad = None;
    }

    /// Replaces the data buffer in place; the length must not change.
    pub fn set_data(&self, data: Vec<f64>) {
        let mut inner = self.inner.borrow_mut();
        assert_eq!(inner.data.len(), data.len(), "set_data must preserve length");
        inner.data = data;
    }

    /// Adds `delta` to one element; used by finite-difference checks.
    pub fn nudge(&self, index: usize, delta: f64) {
        self.inner.borrow_mut().data[index] += delta;
    }

    pub fn is_finite(&self) -> bool {
        self.inner.borrow().data.iter().all(|v| v.is_finite())
    }

    fn accum_grad(&self, delta: &[f64]) {
        let mut inner = self.inner.borrow_mut();
        if !inner.requires_grad {
            return;
        }
        let len = inner.data.len();
        let grad = inner.grad.get_or_insert_with(|| vec![0.0; len]);
        for (g, d) in grad.iter_mut().zip(delta) {
            *g += d;
        }
    }

    fn dims2(&self, op: &'static str) -> Result<(usize, usize)> {
        let shape = self.shape();
        match shape.as_slice() {
            [m, n] => Ok((*m, *n)),
            _ => Err(Error::InvalidShape {
                op,
                shape,
                reason: "expected a 2-D tensor".into(),
            }),
        }
    }

    /// Rows/cols view: 1-D tensors count as a single row.
    fn rows_cols(&self) -> (usize, usize) {
        let shape = self.shape();
        match shape.as_slice() {
            [n] => (1, *n),
            [m, n] => (*m, *n),
            _ => panic!("expected 1-D or 2-D tensor, got {:?}", shape),
        }
    }

    fn from_op(
        data: Vec<f64>,
        shape: Vec<usize>,
        parents: Vec<Tensor>,
        backward: impl Fn(&[f64]) + 'static,
    ) -> Tensor {
        let tracked = parents.iter().any(|p| p.requires_grad());
        if tracked {
            Tensor {
                inner: Rc::new(RefCell::new(Inner {
                    shape,
                    data,
                    requires_grad: true,
                    grad: None,
                    parents,
                    backward_fn: Some(Box::new(backward)),
                })),
            }
        } else {
            Self::leaf(data, shape, false)
        }
    }

    /// Backpropagates from a scalar loss through the recorded graph.
    ///
    /// Gradients accumulate into every tracked tensor reachable from the
    /// loss. The graph is freed on the way back; leaf gradients survive until
    /// [`Tensor::zero_grad`].
    pub fn backward(&self) -> Result<()> {
        if self.numel() != 1 {
            return Err(Error::NonScalarLoss { shape: self.shape() });
        }
        let order = self.topo_order();
        self.accum_grad(&[1.0]);
        for node in order.iter().rev() {
            let (grad, backward_fn) = {
                let mut inner = node.inner.borrow_mut();
                (inner.grad.clone(), inner.backward_fn.take())
            };
            if let (Some(grad), Some(f)) = (grad, backward_fn) {
                f(&grad);
            }
            // Free the graph; intermediate grads are no longer needed either.
            let mut inner = node.inner.borrow_mut();
            if !inner.parents.is_empty() {
                inner.parents.clear();
                inner.grad = None;
            }
        }
        Ok(())
    }

    fn topo_order(&self) -> Vec<Tensor> {
        let mut order = Vec::new();
        let mut visited: HashSet<*const Inner> = HashSet::new();
        // Iterative post-order DFS; graphs can be deep for long sequences.
        enum Item {
            Visit(Tensor),
            Emit(Tensor),
        }
        let mut stack = vec![Item::Visit(self.clone())];
        while let Some(item) = stack.pop() {
            match item {
                Item::Visit(node) => {
                    let ptr = Rc::as_ptr(&node.inner) as *const Inner;
                    if !visited.insert(ptr) {
                        continue;
                    }
                    let parents = node.inner.borrow().parents.clone();
                    stack.push(Item::Emit(node));
                    for p in parents {
                        stack.push(Item::Visit(p));
                    }
                }
                Item::Emit(node) => order.push(node),
            }
        }
        order
    }

    // ---- arithmetic ----

    pub fn matmul(&self, other: &Tensor) -> Result<Tensor> {
        let (m, k) = self.dims2("matmul")?;
        let (k2, n) = other.dims2("matmul")?;
        if k != k2 {
            return Err(Error::ShapeMismatch {
                op: "matmul",
                lhs: self.shape(),
                rhs: other.shape(),
            });
        }
        let a = self.inner.borrow();
        let b = other.inner.borrow();
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for p in 0..k {
                let aip = a.data[i * k + p];
                if aip == 0.0 {
                    continue;
                }
                let brow = &b.data[p * n..(p + 1) * n];
                let orow = &mut out[i * n..(i + 1) * n];
                for j in 0..n {
                    orow[j] += aip * brow[j];
                }
            }
        }
        drop(a);
        drop(b);
        let lhs = self.clone();
        let rhs = other.clone();
        Ok(Tensor::from_op(out, vec![m, n], vec![lhs.clone(), rhs.clone()], move |g| {
            let a = lhs.data();
            let b = rhs.data();
            if lhs.requires_grad() {
                // dA = G * B^T
                let mut da = vec![0.0; m * k];
                for i in 0..m {
                    for j in 0..n {
                        let gij = g[i * n + j];
                        if gij == 0.0 {
                            continue;
                        }
                        for p in 0..k {
                            da[i * k + p] += gij * b[p * n + j];
                        }
                    }
                }
                lhs.accum_grad(&da);
            }
            if rhs.requires_grad() {
                // dB = A^T * G
                let mut db = vec![0.0; k * n];
                for i in 0..m {
                    for p in 0..k {
                        let aip = a[i * k + p];
                        if aip == 0.0 {
                            continue;
                        }
                        for j in 0..n {
                            db[p * n + j] += aip * g[i * n + j];
                        }
                    }
                }
                rhs.accum_grad(&db);
            }
        }))
    }

    pub fn transpose(&self) -> Result<Tensor> {
        let (m, n) = self.dims2("transpose")?;
        let data = self.data();
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                out[j * m + i] = data[i * n + j];
            }
        }
        let parent = self.clone();
        Ok(Tensor::from_op(out, vec![n, m], vec![parent.clone()], move |g| {
            let mut dx = vec![0.0; m * n];
            for j in 0..n {
                for i in 0..m {
                    dx[i * n + j] = g[j * m + i];
                }
            }
            parent.accum_grad(&dx);
        }))
    }

    fn zip_same_shape(
        &self,
        other: &Tensor,
        op: &'static str,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Vec<f64>> {
        if self.shape() != other.shape() {
            return Err(Error::ShapeMismatch {
                op,
                lhs: self.shape(),
                rhs: other.shape(),
            });
        }
        let a = self.inner.borrow();
        let b = other.inner.borrow();
        Ok(a.data.iter().zip(&b.data).map(|(&x, &y)| f(x, y)).collect())
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        let out = self.zip_same_shape(other, "add", |x, y| x + y)?;
        let lhs = self.clone();
        let rhs = other.clone();
        Ok(Tensor::from_op(out, self.shape(), vec![lhs.clone(), rhs.clone()], move |g| {
            lhs.accum_grad(g);
            rhs.accum_grad(g);
        }))
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        let out = self.zip_same_shape(other, "sub", |x, y| x - y)?;
        let lhs = self.clone();
        let rhs = other.clone();
        Ok(Tensor::from_op(out, self.shape(), vec![lhs.clone(), rhs.clone()], move |g| {
            lhs.accum_grad(g);
            let neg: Vec<f64> = g.iter().map(|v| -v).collect();
            rhs.accum_grad(&neg);
        }))
    }

    pub fn mul(&self, other: &Tensor) -> Result<Tensor> {
        let out = self.zip_same_shape(other, "mul", |x, y| x * y)?;
        let lhs = self.clone();
        let rhs = other.clone();
        Ok(Tensor::from_op(out, self.shape(), vec![lhs.clone(), rhs.clone()], move |g| {
            if lhs.requires_grad() {
                let b = rhs.data();
                let d: Vec<f64> = g.iter().zip(&b).map(|(gv, bv)| gv * bv).collect();
                lhs.accum_grad(&d);
            }
            if rhs.requires_grad() {
                let a = lhs.data();
                let d: Vec<f64> = g.iter().zip(&a).map(|(gv, av)| gv * av).collect();
                rhs.accum_grad(&d);
            }
        }))
    }

    pub fn scale(&self, c: f64) -> Tensor {
        let out: Vec<f64> = self.data().iter().map(|v| v * c).collect();
        let parent = self.clone();
        Tensor::from_op(out, self.shape(), vec![parent.clone()], move |g| {
            let d: Vec<f64> = g.iter().map(|v| v * c).collect();
            parent.accum_grad(&d);
        })
    }

    /// Broadcast-adds a 1-D bias over every row of a 2-D tensor.
    pub fn add_row(&self, bias: &Tensor) -> Result<Tensor> {
        let (m, n) = self.dims2("add_row")?;
        if bias.shape() != [n] {
            return Err(Error::ShapeMismatch {
                op: "add_row",
                lhs: self.shape(),
                rhs: bias.shape(),
            });
        }
        let b = bias.data();
        let out: Vec<f64> = self
            .data()
            .iter()
            .enumerate()
            .map(|(idx, v)| v + b[idx % n])
            .collect();
        let lhs = self.clone();
        let rhs = bias.clone();
        Ok(Tensor::from_op(out, vec![m, n], vec![lhs.clone(), rhs.clone()], move |g| {
            lhs.accum_grad(g);
            if rhs.requires_grad() {
                let mut db = vec![0.0; n];
                for i in 0..m {
                    for j in 0..n {
                        db[j] += g[i * n + j];
                    }
                }
                rhs.accum_grad(&db);
            }
        }))
    }

    pub fn tanh(&self) -> Tensor {
        let out: Vec<f64> = self.data().iter().map(|v| v.tanh()).collect();
        let y = out.clone();
        let parent = self.clone();
        Tensor::from_op(out, self.shape(), vec![parent.clone()], move |g| {
            let d: Vec<f64> = g.iter().zip(&y).map(|(gv, yv)| gv * (1.0 - yv * yv)).collect();
            parent.accum_grad(&d);
        })
    }

    /// GELU with the tanh approximation; smooth everywhere, which keeps
    /// finite-difference gradient checks clean.
    pub fn gelu(&self) -> Tensor {
        const C: f64 = 0.7978845608028654; // sqrt(2/pi)
        const A: f64 = 0.044715;
        let x = self.data();
        let out: Vec<f64> = x
            .iter()
            .map(|&v| 0.5 * v * (1.0 + (C * (v + A * v * v * v)).tanh()))
            .collect();
        let parent = self.clone();
        Tensor::from_op(out, self.shape(), vec![parent.clone()], move |g| {
            let x = parent.data();
            let d: Vec<f64> = g
                .iter()
                .zip(&x)
                .map(|(gv, &v)| {
                    let u = C * (v + A * v * v * v);
                    let t = u.tanh();
                    let du = C * (1.0 + 3.0 * A * v * v);
                    gv * (0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * du)
                })
                .collect();
            parent.accum_grad(&d);
        })
    }

    /// Row-wise softmax with max-subtraction. 1-D input counts as one row.
    pub fn softmax_rows(&self) -> Tensor {
        let (m, n) = self.rows_cols();
        let x = self.data();
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let row = &x[i * n..(i + 1) * n];
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for j in 0..n {
                let e = (row[j] - max).exp();
                out[i * n + j] = e;
                sum += e;
            }
            for j in 0..n {
                out[i * n + j] /= sum;
            }
        }
        let y = out.clone();
        let parent = self.clone();
        Tensor::from_op(out, self.shape(), vec![parent.clone()], move |g| {
            let mut dx = vec![0.0; m * n];
            for i in 0..m {
                let yr = &y[i * n..(i + 1) * n];
                let gr = &g[i * n..(i + 1) * n];
                let dot: f64 = yr.iter().zip(gr).map(|(yv, gv)| yv * gv).sum();
                for j in 0..n {
                    dx[i * n + j] = yr[j] * (gr[j] - dot);
                }
            }
            parent.accum_grad(&dx);
        })
    }

    /// Per-row layer normalization: gain ⊙ (x − mean)/sqrt(var + 1e-5) + bias.
    pub fn layer_norm(&self, gain: &Tensor, bias: &Tensor) -> Result<Tensor> {
        let (m, n) = self.dims2("layer_norm")?;
        if gain.shape() != [n] || bias.shape() != [n] {
            return Err(Error::ShapeMismatch {
                op: "layer_norm",
                lhs: self.shape(),
                rhs: gain.shape(),
            });
        }
        let x = self.data();
        let gv = gain.data();
        let bv = bias.data();
        let mut xhat = vec![0.0; m * n];
        let mut inv_std = vec![0.0; m];
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let row = &x[i * n..(i + 1) * n];
            let mean: f64 = row.iter().sum::<f64>() / n as f64;
            let var: f64 = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
            let inv = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            inv_std[i] = inv;
            for j in 0..n {
                let h = (row[j] - mean) * inv;
                xhat[i * n + j] = h;
                out[i * n + j] = gv[j] * h + bv[j];
            }
        }
        let xp = self.clone();
        let gp = gain.clone();
        let bp = bias.clone();
        Ok(Tensor::from_op(
            out,
            vec![m, n],
            vec![xp.clone(), gp.clone(), bp.clone()],
            move |g| {
                let gainv = gp.data();
                if xp.requires_grad() {
                    let mut dx = vec![0.0; m * n];
                    for i in 0..m {
                        let gr = &g[i * n..(i + 1) * n];
                        let hr = &xhat[i * n..(i + 1) * n];
                        let dh: Vec<f64> =
                            (0..n).map(|j| gr[j] * gainv[j]).collect();
                        let mean_dh: f64 = dh.iter().sum::<f64>() / n as f64;
                        let mean_dh_h: f64 =
                            dh.iter().zip(hr).map(|(d, h)| d * h).sum::<f64>() / n as f64;
                        for j in 0..n {
                            dx[i * n + j] = inv_std[i] * (dh[j] - mean_dh - hr[j] * mean_dh_h);
                        }
                    }
                    xp.accum_grad(&dx);
                }
                if gp.requires_grad() {
                    let mut dg = vec![0.0; n];
                    for i in 0..m {
                        for j in 0..n {
                            dg[j] += g[i * n + j] * xhat[i * n + j];
                        }
                    }
                    gp.accum_grad(&dg);
                }
                if bp.requires_grad() {
                    let mut db = vec![0.0; n];
                    for i in 0..m {
                        for j in 0..n {
                            db[j] += g[i * n + j];
                        }
                    }
                    bp.accum_grad(&db);
                }
            },
        ))
    }

    /// Batch normalization over rows (training mode). Normalizes each column
    /// with batch statistics and returns `(output, batch_mean, batch_var)` so
    /// the caller can update running statistics.
    pub fn batch_norm_train(
        &self,
        gamma: &Tensor,
        beta: &Tensor,
    ) -> Result<(Tensor, Vec<f64>, Vec<f64>)> {
        let (m, n) = self.dims2("batch_norm")?;
        if gamma.shape() != [n] || beta.shape() != [n] {
            return Err(Error::ShapeMismatch {
                op: "batch_norm",
                lhs: self.shape(),
                rhs: gamma.shape(),
            });
        }
        let x = self.data();
        let gv = gamma.data();
        let bv = beta.data();
        let mut mean = vec![0.0; n];
        let mut var = vec![0.0; n];
        for j in 0..n {
            let mut s = 0.0;
            for i in 0..m {
                s += x[i * n + j];
            }
            mean[j] = s / m as f64;
            let mut v = 0.0;
            for i in 0..m {
                let d = x[i * n + j] - mean[j];
                v += d * d;
            }
            var[j] = v / m as f64;
        }
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + BATCH_NORM_EPS).sqrt()).collect();
        let mut xhat = vec![0.0; m * n];
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                let h = (x[i * n + j] - mean[j]) * inv_std[j];
                xhat[i * n + j] = h;
                out[i * n + j] = gv[j] * h + bv[j];
            }
        }
        let xp = self.clone();
        let gp = gamma.clone();
        let bp = beta.clone();
        let inv = inv_std.clone();
        let tensor = Tensor::from_op(
            out,
            vec![m, n],
            vec![xp.clone(), gp.clone(), bp.clone()],
            move |g| {
                let gammav = gp.data();
                if xp.requires_grad() {
                    let mut dx = vec![0.0; m * n];
                    for j in 0..n {
                        let mut sum_dh = 0.0;
                        let mut sum_dh_h = 0.0;
                        for i in 0..m {
                            let dh = g[i * n + j] * gammav[j];
                            sum_dh += dh;
                            sum_dh_h += dh * xhat[i * n + j];
                        }
                        let mean_dh = sum_dh / m as f64;
                        let mean_dh_h = sum_dh_h / m as f64;
                        for i in 0..m {
                            let dh = g[i * n + j] * gammav[j];
                            dx[i * n + j] =
                                inv[j] * (dh - mean_dh - xhat[i * n + j] * mean_dh_h);
                        }
                    }
                    xp.accum_grad(&dx);
                }
                if gp.requires_grad() {
                    let mut dg = vec![0.0; n];
                    for i in 0..m {
                        for j in 0..n {
                            dg[j] += g[i * n + j] * xhat[i * n + j];
                        }
                    }
                    gp.accum_grad(&dg);
                }
                if bp.requires_grad() {
                    let mut db = vec![0.0; n];
                    for i in 0..m {
                        for j in 0..n {
                            db[j] += g[i * n + j];
                        }
                    }
                    bp.accum_grad(&db);
                }
            },
        );
        Ok((tensor, mean, var))
    }

    /// Batch normalization with fixed (running) statistics, inference mode.
    pub fn batch_norm_eval(
        &self,
        gamma: &Tensor,
        beta: &Tensor,
        mean: &[f64],
        var: &[f64],
    ) -> Result<Tensor> {
        let (m, n) = self.dims2("batch_norm")?;
        if gamma.shape() != [n] || beta.shape() != [n] || mean.len() != n || var.len() != n {
            return Err(Error::ShapeMismatch {
                op: "batch_norm",
                lhs: self.shape(),
                rhs: gamma.shape(),
            });
        }
        let x = self.data();
        let gv = gamma.data();
        let bv = beta.data();
        let inv: Vec<f64> = var.iter().map(|v| 1.0 / (v + BATCH_NORM_EPS).sqrt()).collect();
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                out[i * n + j] = gv[j] * (x[i * n + j] - mean[j]) * inv[j] + bv[j];
            }
        }
        let xp = self.clone();
        let gp = gamma.clone();
        let bp = beta.clone();
        let mean = mean.to_vec();
        Ok(Tensor::from_op(
            out,
            vec![m, n],
            vec![xp.clone(), gp.clone(), bp.clone()],
            move |g| {
                let gammav = gp.data();
                if xp.requires_grad() {
                    let mut dx = vec![0.0; m * n];
                    for i in 0..m {
                        for j in 0..n {
                            dx[i * n + j] = g[i * n + j] * gammav[j] * inv[j];
                        }
                    }
                    xp.accum_grad(&dx);
                }
                if gp.requires_grad() {
                    let x = xp.data();
                    let mut dg = vec![0.0; n];
                    for i in 0..m {
                        for j in 0..n {
                            dg[j] += g[i * n + j] * (x[i * n + j] - mean[j]) * inv[j];
                        }
                    }
                    gp.accum_grad(&dg);
                }
                if bp.requires_grad() {
                    let mut db = vec![0.0; n];
                    for i in 0..m {
                        for j in 0..n {
                            db[j] += g[i * n + j];
                        }
                    }
                    bp.accum_grad(&db);
                }
            },
        ))
    }

    pub fn sum_all(&self) -> Tensor {
        let total: f64 = self.data().iter().sum();
        let numel = self.numel();
        let shape = self.shape();
        let parent = self.clone();
        Tensor::from_op(vec![total], vec![1], vec![parent.clone()], move |g| {
            let _ = &shape;
            parent.accum_grad(&vec![g[0]; numel]);
        })
    }

    pub fn mean_all(&self) -> Tensor {
        let n = self.numel() as f64;
        self.sum_all().scale(1.0 / n)
    }

    /// Row gather for embedding lookup: `self` is [V×d], output [ids.len()×d].
    pub fn gather_rows(&self, ids: &[usize]) -> Result<Tensor> {
        let (v, d) = self.dims2("gather_rows")?;
        for &id in ids {
            if id >= v {
                return Err(Error::IdOutOfRange { id, vocab_size: v });
            }
        }
        let x = self.data();
        let mut out = Vec::with_capacity(ids.len() * d);
        for &id in ids {
            out.extend_from_slice(&x[id * d..(id + 1) * d]);
        }
        let parent = self.clone();
        let ids = ids.to_vec();
        let l = ids.len();
        Ok(Tensor::from_op(out, vec![l, d], vec![parent.clone()], move |g| {
            let mut dx = vec![0.0; v * d];
            for (row, &id) in ids.iter().enumerate() {
                for j in 0..d {
                    dx[id * d + j] += g[row * d + j];
                }
            }
            parent.accum_grad(&dx);
        }))
    }

    pub fn slice_rows(&self, start: usize, end: usize) -> Result<Tensor> {
        let (m, n) = self.dims2("slice_rows")?;
        if start >= end || end > m {
            return Err(Error::InvalidShape {
                op: "slice_rows",
                shape: self.shape(),
                reason: format!("row range {}..{} out of bounds", start, end),
            });
        }
        let x = self.data();
        let out = x[start * n..end * n].to_vec();
        let parent = self.clone();
        Ok(Tensor::from_op(
            out,
            vec![end - start, n],
            vec![parent.clone()],
            move |g| {
                let mut dx = vec![0.0; m * n];
                dx[start * n..end * n].copy_from_slice(g);
                parent.accum_grad(&dx);
            },
        ))
    }

    pub fn slice_cols(&self, start: usize, end: usize) -> Result<Tensor> {
        let (m, n) = self.dims2("slice_cols")?;
        if start >= end || end > n {
            return Err(Error::InvalidShape {
                op: "slice_cols",
                shape: self.shape(),
                reason: format!("column range {}..{} out of bounds", start, end),
            });
        }
        let x = self.data();
        let w = end - start;
        let mut out = Vec::with_capacity(m * w);
        for i in 0..m {
            out.extend_from_slice(&x[i * n + start..i * n + end]);
        }
        let parent = self.clone();
        Ok(Tensor::from_op(out, vec![m, w], vec![parent.clone()], move |g| {
            let mut dx = vec![0.0; m * n];
            for i in 0..m {
                dx[i * n + start..i * n + end].copy_from_slice(&g[i * w..(i + 1) * w]);
            }
            parent.accum_grad(&dx);
        }))
    }

    /// Column-wise concatenation of 2-D tensors with equal row counts.
    pub fn concat_cols(parts: &[Tensor]) -> Result<Tensor> {
        assert!(!parts.is_empty());
        let (m, _) = parts[0].dims2("concat_cols")?;
        let mut widths = Vec::with_capacity(parts.len());
        for p in parts {
            let (pm, pn) = p.dims2("concat_cols")?;
            if pm != m {
                return Err(Error::ShapeMismatch {
                    op: "concat_cols",
                    lhs: parts[0].shape(),
                    rhs: p.shape(),
                });
            }
            widths.push(pn);
        }
        let total: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(m * total);
        let datas: Vec<Vec<f64>> = parts.iter().map(|p| p.data()).collect();
        for i in 0..m {
            for (p, &w) in datas.iter().zip(&widths) {
                out.extend_from_slice(&p[i * w..(i + 1) * w]);
            }
        }
        let parents: Vec<Tensor> = parts.to_vec();
        let captured = parents.clone();
        Ok(Tensor::from_op(out, vec![m, total], parents, move |g| {
            let mut offset = 0;
            for (p, &w) in captured.iter().zip(&widths) {
                if p.requires_grad() {
                    let mut dp = vec![0.0; m * w];
                    for i in 0..m {
                        dp[i * w..(i + 1) * w]
                            .copy_from_slice(&g[i * total + offset..i * total + offset + w]);
                    }
                    p.accum_grad(&dp);
                }
                offset += w;
            }
        }))
    }

    /// Row-wise concatenation (stacking) of 2-D tensors with equal widths.
    pub fn concat_rows(parts: &[Tensor]) -> Result<Tensor> {
        assert!(!parts.is_empty());
        let (_, n) = parts[0].dims2("concat_rows")?;
        let mut heights = Vec::with_capacity(parts.len());
        for p in parts {
            let (pm, pn) = p.dims2("concat_rows")?;
            if pn != n {
                return Err(Error::ShapeMismatch {
                    op: "concat_rows",
                    lhs: parts[0].shape(),
                    rhs: p.shape(),
                });
            }
            heights.push(pm);
        }
        let total: usize = heights.iter().sum();
        let mut out = Vec::with_capacity(total * n);
        for p in parts {
            out.extend_from_slice(&p.data());
        }
        let parents: Vec<Tensor> = parts.to_vec();
        let captured = parents.clone();
        Ok(Tensor::from_op(out, vec![total, n], parents, move |g| {
            let mut offset = 0;
            for (p, &h) in captured.iter().zip(&heights) {
                if p.requires_grad() {
                    p.accum_grad(&g[offset * n..(offset + h) * n]);
                }
                offset += h;
            }
        }))
    }

    /// Inverted dropout: keeps each element with probability 1−p and scales
    /// survivors by 1/(1−p). `p == 0` is the identity.
    pub fn dropout<R: Rng>(&self, p: f64, rng: &mut R) -> Tensor {
        assert!((0.0..1.0).contains(&p), "dropout rate must be in [0,1)");
        if p == 0.0 {
            return self.clone();
        }
        let keep = 1.0 - p;
        let mask: Vec<f64> = (0..self.numel())
            .map(|_| if rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 })
            .collect();
        let out: Vec<f64> = self.data().iter().zip(&mask).map(|(v, m)| v * m).collect();
        let parent = self.clone();
        Tensor::from_op(out, self.shape(), vec![parent.clone()], move |g| {
            let d: Vec<f64> = g.iter().zip(&mask).map(|(gv, m)| gv * m).collect();
            parent.accum_grad(&d);
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn assert_close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{} vs {} (tol {})", a, b, tol);
    }

    #[test]
    fn matmul_identity() {
        let i2 = Tensor::from_vec(vec![1.0, 0.0, 0.0, 1.0], &[2, 2]).unwrap();
        let a = Tensor::from_vec(vec![1.0, 2.0, 3.0, 4.0], &[2, 2]).unwrap();
        let out = i2.matmul(&a).unwrap();
        assert_eq!(out.data(), vec![1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn matmul_reference_example() {
        // frozen from the triple-loop reference: [[1,2],[3,4]] x [[5],[6]]
        let a = Tensor::from_vec(vec![1.0, 2.0, 3.0, 4.0], &[2, 2]).unwrap();
        let b = Tensor::from_vec(vec![5.0, 6.0], &[2, 1]).unwrap();
        let out = a.matmul(&b).unwrap();
        assert_eq!(out.data(), vec![17.0, 39.0]);
    }

    #[test]
    fn matmul_zeros_annihilate() {
        let a = Tensor::zeros(&[1, 3]);
        let b = Tensor::from_vec(vec![1.0, -2.0, 3.0, 4.0, 5.0, -6.0], &[3, 2]).unwrap();
        let out = a.matmul(&b).unwrap();
        assert_eq!(out.shape(), vec![1, 2]);
        assert_eq!(out.data(), vec![0.0, 0.0]);
    }

    #[test]
    fn matmul_shape_mismatch_names_both_shapes() {
        let a = Tensor::zeros(&[2, 3]);
        let b = Tensor::zeros(&[2, 2]);
        let err = a.matmul(&b).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("[2, 3]") && msg.contains("[2, 2]"), "{}", msg);
    }

    /// Naive triple-loop multiplier, kept independent of the implementation.
    fn reference_matmul(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                for p in 0..k {
                    out[i * n + j] += a[i * k + p] * b[p * n + j];
                }
            }
        }
        out
    }

    #[test]
    fn matmul_matches_triple_loop_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let m = rng.gen_range(1..=16);
            let k = rng.gen_range(1..=16);
            let n = rng.gen_range(1..=16);
            let a: Vec<f64> = (0..m * k).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let b: Vec<f64> = (0..k * n).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let want = reference_matmul(&a, &b, m, k, n);
            let got = Tensor::from_vec(a, &[m, k])
                .unwrap()
                .matmul(&Tensor::from_vec(b, &[k, n]).unwrap())
                .unwrap();
            for (g, w) in got.data().iter().zip(&want) {
                assert_close(*g, *w, 1e-10);
            }
        }
    }

    #[test]
    fn softmax_symmetry_and_reference() {
        let out = Tensor::from_vec(vec![0.0, 0.0], &[1, 2]).unwrap().softmax_rows();
        assert_eq!(out.data(), vec![0.5, 0.5]);

        // frozen from direct exp/sum on [1,2,3]
        let out = Tensor::from_vec(vec![1.0, 2.0, 3.0], &[1, 3]).unwrap().softmax_rows();
        let want = [0.09003, 0.24473, 0.66524];
        for (g, w) in out.data().iter().zip(&want) {
            assert_close(*g, *w, 1e-5);
        }
    }

    #[test]
    fn softmax_large_inputs_stable() {
        let out = Tensor::from_vec(vec![1000.0, 1000.0], &[1, 2]).unwrap().softmax_rows();
        assert_eq!(out.data(), vec![0.5, 0.5]);
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let n = rng.gen_range(1..=12);
            let scale = if rng.gen::<bool>() { 1.0 } else { 500.0 };
            let row: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0) * scale).collect();
            let out = Tensor::from_vec(row, &[1, n]).unwrap().softmax_rows();
            let sum: f64 = out.data().iter().sum();
            assert_close(sum, 1.0, 1e-9);
            assert!(out.data().iter().all(|v| *v >= 0.0));
        }
    }

    #[test]
    fn layer_norm_constant_row_is_zero() {
        let x = Tensor::from_vec(vec![3.0; 8], &[1, 8]).unwrap();
        let out = x.layer_norm(&Tensor::ones(&[8]), &Tensor::zeros(&[8])).unwrap();
        for v in out.data() {
            assert_close(v, 0.0, 1e-12);
        }
    }

    #[test]
    fn layer_norm_reference_example() {
        // frozen from direct mean/population-variance computation on [1,2,3]
        let x = Tensor::from_vec(vec![1.0, 2.0, 3.0], &[1, 3]).unwrap();
        let out = x.layer_norm(&Tensor::ones(&[3]), &Tensor::zeros(&[3])).unwrap();
        let want = [-1.2247, 0.0, 1.2247];
        for (g, w) in out.data().iter().zip(&want) {
            assert_close(*g, *w, 1e-3);
        }
    }

    #[test]
    fn layer_norm_zero_gain_broadcasts_bias() {
        let x = Tensor::from_vec(vec![1.0, -5.0, 2.0, 9.0, 0.0, 3.0], &[2, 3]).unwrap();
        let bias = Tensor::from_vec(vec![0.5, -0.5, 2.0], &[3]).unwrap();
        let out = x.layer_norm(&Tensor::zeros(&[3]), &bias).unwrap();
        assert_eq!(out.data(), vec![0.5, -0.5, 2.0, 0.5, -0.5, 2.0]);
    }

    #[test]
    fn layer_norm_normalizes_rows() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = Tensor::randn(&[4, 16], 2.0, &mut rng);
        let out = x.layer_norm(&Tensor::ones(&[16]), &Tensor::zeros(&[16])).unwrap();
        let d = out.data();
        for i in 0..4 {
            let row = &d[i * 16..(i + 1) * 16];
            let mean: f64 = row.iter().sum::<f64>() / 16.0;
            let var: f64 = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 16.0;
            assert_close(mean, 0.0, 1e-9);
            assert_close(var, 1.0, 1e-3);
        }
    }

    #[test]
    fn backward_sum_gives_ones() {
        let x = Tensor::from_vec(vec![1.0, -2.0, 3.0, 0.5], &[2, 2]).unwrap().with_grad();
        x.sum_all().backward().unwrap();
        assert_eq!(x.grad().unwrap(), vec![1.0; 4]);
    }

    #[test]
    fn backward_quadratic() {
        let x = Tensor::from_vec(vec![1.0, 2.0, 3.0], &[1, 3]).unwrap().with_grad();
        let loss = x.mul(&x).unwrap().sum_all();
        loss.backward().unwrap();
        assert_eq!(x.grad().unwrap(), vec![2.0, 4.0, 6.0]);
    }

    #[test]
    fn backward_rejects_non_scalar() {
        let x = Tensor::from_vec(vec![1.0, 2.0], &[1, 2]).unwrap().with_grad();
        let y = x.scale(2.0);
        assert!(matches!(y.backward(), Err(Error::NonScalarLoss { .. })));
    }

    #[test]
    fn backward_accumulates_across_passes() {
        let x = Tensor::from_vec(vec![1.0, 2.0], &[1, 2]).unwrap().with_grad();
        x.sum_all().backward().unwrap();
        x.sum_all().backward().unwrap();
        assert_eq!(x.grad().unwrap(), vec![2.0, 2.0]);
    }

    #[test]
    fn forward_ops_are_pure() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = Tensor::randn(&[3, 4], 1.0, &mut rng);
        let b = Tensor::randn(&[4, 2], 1.0, &mut rng);
        let r1 = a.matmul(&b).unwrap().data();
        let r2 = a.matmul(&b).unwrap().data();
        assert_eq!(r1, r2);
        let s1 = a.softmax_rows().data();
        let s2 = a.softmax_rows().data();
        assert_eq!(s1, s2);
    }

    /// Central finite differences on a scalar-valued function of one leaf.
    fn finite_diff_check(x: &Tensor, f: impl Fn(&Tensor) -> Tensor, tol: f64) {
        let loss = f(x);
        loss.backward().unwrap();
        let grad = x.grad().unwrap();
        let h = 1e-5;
        for i in 0..x.numel() {
            x.nudge(i, h);
            let up = f(x).item();
            x.nudge(i, -2.0 * h);
            let down = f(x).item();
            x.nudge(i, h);
            let fd = (up - down) / (2.0 * h);
            let denom = fd.abs().max(grad[i].abs()).max(1.0);
            assert!(
                (fd - grad[i]).abs() / denom < tol,
                "grad[{}]: autodiff {} vs fd {}",
                i,
                grad[i],
                fd
            );
        }
        x.zero_grad();
    }

    #[test]
    fn gradients_match_finite_differences_per_op() {
        for seed in 0..5u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = Tensor::randn(&[3, 4], 1.0, &mut rng).with_grad();
            let w = Tensor::randn(&[4, 3], 0.5, &mut rng);
            let b = Tensor::randn(&[4], 0.5, &mut rng);

            finite_diff_check(&x, |x| x.matmul(&w).unwrap().sum_all(), 1e-4);
            finite_diff_check(&x, |x| x.softmax_rows().mul(x).unwrap().sum_all(), 1e-4);
            finite_diff_check(&x, |x| x.tanh().sum_all(), 1e-4);
            finite_diff_check(&x, |x| x.gelu().sum_all(), 1e-4);
            finite_diff_check(&x, |x| {
                x.layer_norm(&Tensor::ones(&[4]), &Tensor::zeros(&[4]))
                    .unwrap()
                    .mul(x)
                    .unwrap()
                    .sum_all()
            }, 1e-4);
            finite_diff_check(&x, |x| x.add_row(&b).unwrap().gelu().sum_all(), 1e-4);
            finite_diff_check(&x, |x| x.transpose().unwrap().tanh().sum_all(), 1e-4);
            finite_diff_check(&x, |x| x.slice_cols(1, 3).unwrap().gelu().sum_all(), 1e-4);
            finite_diff_check(&x, |x| x.slice_rows(0, 2).unwrap().tanh().sum_all(), 1e-4);
            finite_diff_check(&x, |x| {
                let (y, _, _) = x
                    .batch_norm_train(&Tensor::ones(&[4]), &Tensor::zeros(&[4]))
                    .unwrap();
                y.mul(x).unwrap().sum_all()
            }, 1e-4);
            finite_diff_check(&x, |x| {
                x.batch_norm_eval(
                    &Tensor::ones(&[4]),
                    &Tensor::zeros(&[4]),
                    &[0.1, -0.2, 0.3, 0.0],
                    &[1.0, 2.0, 0.5, 1.5],
                )
                .unwrap()
                .tanh()
                .sum_all()
            }, 1e-4);
            finite_diff_check(&x, |x| {
                Tensor::concat_cols(&[x.clone(), x.tanh()]).unwrap().gelu().sum_all()
            }, 1e-4);
            finite_diff_check(&x, |x| {
                Tensor::concat_rows(&[x.clone(), x.scale(0.5)]).unwrap().tanh().sum_all()
            }, 1e-4);

            let emb = Tensor::randn(&[6, 4], 0.5, &mut rng).with_grad();
            finite_diff_check(&emb, |e| {
                e.gather_rows(&[0, 3, 3, 5]).unwrap().gelu().sum_all()
            }, 1e-4);
        }
    }

    #[test]
    fn gather_rows_out_of_range() {
        let emb = Tensor::zeros(&[4, 2]);
        assert!(matches!(
            emb.gather_rows(&[0, 4]),
            Err(Error::IdOutOfRange { id: 4, vocab_size: 4 })
        ));
    }

    #[test]
    fn dropout_zero_rate_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = Tensor::from_vec(vec![1.0, 2.0, 3.0], &[1, 3]).unwrap();
        let y = x.dropout(0.0, &mut rng);
        assert_eq!(y.data(), x.data());
    }

    #[test]
    fn dropout_preserves_expectation_roughly() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = Tensor::ones(&[1, 10_000]);
        let y = x.dropout(0.3, &mut rng);
        let mean: f64 = y.data().iter().sum::<f64>() / 10_000.0;
        assert!((mean - 1.0).abs() < 0.05, "mean {}", mean);
    }
}
