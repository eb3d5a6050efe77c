use std::sync::Arc;

use rand::Rng;

use super::kernels::{add_into, col2im_add, im2col, ConvGeometry};
use super::{Scalar, Tensor};
use crate::error::{Error, Result};

/// Handle to a node on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op<T> {
    Leaf,
    Constant,
    MatMul {
        a: Var,
        b: Var,
        m: usize,
        k: usize,
        n: usize,
    },
    Linear {
        x: Var,
        w: Var,
        b: Var,
        rows: usize,
        fan_in: usize,
        units: usize,
    },
    Conv2d {
        x: Var,
        kernel: Var,
        bias: Var,
        geom: ConvGeometry,
        batch: usize,
        filters: usize,
        cols: Vec<T>,
    },
    Relu(Var),
    MaxPool {
        x: Var,
        argmax: Vec<usize>,
    },
    InstanceNorm {
        x: Var,
        xhat: Vec<T>,
        inv_std: Vec<T>,
        plane: usize,
    },
    Dropout {
        x: Var,
        mask: Vec<T>,
    },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, T),
    Abs(Var),
    Sum(Var),
    Mean(Var),
    Reshape(Var),
    MaskedCrossEntropy {
        logits: Var,
        classes: Vec<usize>,
        label_pos: Vec<usize>,
        probs: Vec<T>,
        width: usize,
    },
    WeightedSqDist {
        x: Var,
        anchor: Arc<[T]>,
        weight: Arc<[T]>,
    },
}

#[derive(Debug)]
struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
}

/// Operation tape. Nodes are appended in evaluation order, so every node's
/// inputs have smaller indices than the node itself.
#[derive(Debug, Default)]
pub struct Graph<T> {
    nodes: Vec<Node<T>>,
    fault: Option<(Var, f64)>,
}

fn shape_err(op: &'static str, left: &[usize], right: &[usize]) -> Error {
    Error::Shape {
        op,
        left: left.to_vec(),
        right: right.to_vec(),
    }
}

fn slot<'a, T: Scalar>(grads: &'a mut [Option<Vec<T>>], nodes: &[Node<T>], v: Var) -> &'a mut Vec<T> {
    let len = nodes[v.0].value.len();
    grads[v.0].get_or_insert_with(|| vec![T::zero(); len])
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            fault: None,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf)
    }

    /// A leaf whose gradient is never needed. Its gradient reads as zeros.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Constant)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn data(&self, v: Var) -> &[T] {
        self.nodes[v.0].value.data()
    }

    pub fn grad(&self, v: Var) -> Option<&[T]> {
        self.nodes[v.0].value.grad()
    }

    pub fn take_grad(&mut self, v: Var) -> Option<Vec<T>> {
        self.nodes[v.0].value.take_grad()
    }

    /// Consumes the graph and returns the tensor held by `v`.
    pub fn into_value(mut self, v: Var) -> Tensor<T> {
        self.nodes.swap_remove(v.0).value
    }

    // ---------------------------------------------------------------- ops

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(shape_err("matmul", sa, sb));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut out = vec![T::zero(); m * n];
        T::gemm(false, false, m, k, n, T::one(), self.data(a), self.data(b), T::zero(), &mut out);
        let value = Tensor::new(&[m, n], out)?;
        Ok(self.push(value, Op::MatMul { a, b, m, k, n }))
    }

    /// Fully connected layer `x · wᵀ + b` with `w` stored as `[units, fan_in]`
    /// so that row `u` holds the incoming weights of unit `u`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (sx, sw, sb) = (self.shape(x), self.shape(w), self.shape(b));
        if sx.len() != 2 || sw.len() != 2 || sx[1] != sw[1] {
            return Err(shape_err("linear", sx, sw));
        }
        if sb != [sw[0]] {
            return Err(shape_err("linear bias", sw, sb));
        }
        let (rows, fan_in, units) = (sx[0], sx[1], sw[0]);
        let mut out = vec![T::zero(); rows * units];
        T::gemm(false, true, rows, fan_in, units, T::one(), self.data(x), self.data(w), T::zero(), &mut out);
        let bias = self.data(b);
        for row in out.chunks_mut(units) {
            add_into(row, bias);
        }
        let value = Tensor::new(&[rows, units], out)?;
        Ok(self.push(value, Op::Linear { x, w, b, rows, fan_in, units }))
    }

    /// Cross-correlation of `[N, C, H, W]` input with `[F, C, kh, kw]` kernels.
    pub fn conv2d(&mut self, x: Var, kernel: Var, bias: Var, stride: usize, padding: usize) -> Result<Var> {
        let (sx, sk, sb) = (self.shape(x), self.shape(kernel), self.shape(bias));
        if sx.len() != 4 || sk.len() != 4 || sx[1] != sk[1] {
            return Err(shape_err("conv2d", sx, sk));
        }
        if sb != [sk[0]] {
            return Err(shape_err("conv2d bias", sk, sb));
        }
        if stride == 0 {
            return Err(Error::Config("conv2d stride must be at least 1".into()));
        }
        let (batch, channels, height, width) = (sx[0], sx[1], sx[2], sx[3]);
        let (filters, kernel_h, kernel_w) = (sk[0], sk[2], sk[3]);
        let (ph, pw) = (height + 2 * padding, width + 2 * padding);
        if kernel_h > ph || kernel_w > pw {
            return Err(Error::Config(format!(
                "conv2d kernel {kernel_h}x{kernel_w} larger than padded input {ph}x{pw}"
            )));
        }
        if (ph - kernel_h) % stride != 0 || (pw - kernel_w) % stride != 0 {
            return Err(Error::Config(format!(
                "conv2d output size is not an integer: padded input {ph}x{pw}, kernel {kernel_h}x{kernel_w}, stride {stride}"
            )));
        }
        let geom = ConvGeometry {
            channels,
            height,
            width,
            kernel_h,
            kernel_w,
            stride,
            padding,
            out_h: (ph - kernel_h) / stride + 1,
            out_w: (pw - kernel_w) / stride + 1,
        };
        let (patch, positions) = (geom.patch_len(), geom.positions());
        let in_len = channels * height * width;
        let out_len = filters * positions;
        let wide = batch * positions;
        let mut cols = vec![T::zero(); patch * wide];
        let mut flat = vec![T::zero(); filters * wide];
        let (input, weights, b) = (self.data(x), self.data(kernel), self.data(bias));
        for n in 0..batch {
            im2col(&input[n * in_len..(n + 1) * in_len], &geom, &mut cols[n * positions..], wide);
        }
        T::gemm(false, false, filters, patch, wide, T::one(), weights, &cols, T::zero(), &mut flat);
        let mut out = vec![T::zero(); batch * out_len];
        for n in 0..batch {
            for f in 0..filters {
                let src = &flat[f * wide + n * positions..f * wide + (n + 1) * positions];
                let dst = &mut out[n * out_len + f * positions..n * out_len + (f + 1) * positions];
                for (d, &v) in dst.iter_mut().zip(src) {
                    *d = v + b[f];
                }
            }
        }
        let value = Tensor::new(&[batch, filters, geom.out_h, geom.out_w], out)?;
        Ok(self.push(value, Op::Conv2d { x, kernel, bias, geom, batch, filters, cols }))
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        let src = self.value(x);
        let data = src.data().iter().map(|&v| if v > T::zero() { v } else { T::zero() }).collect();
        let value = Tensor::new(src.shape(), data)?;
        Ok(self.push(value, Op::Relu(x)))
    }

    /// Max pooling over `window x window` tiles with the given stride; the
    /// output size is floored. Ties route the gradient to the first maximum
    /// in row-major scan order.
    pub fn maxpool2d(&mut self, x: Var, window: usize, stride: usize) -> Result<Var> {
        let sx = self.shape(x).to_vec();
        if sx.len() != 4 || window == 0 || stride == 0 || sx[2] < window || sx[3] < window {
            return Err(shape_err("maxpool2d", &sx, &[window, window]));
        }
        let (planes, h, w) = (sx[0] * sx[1], sx[2], sx[3]);
        let (oh, ow) = ((h - window) / stride + 1, (w - window) / stride + 1);
        let input = self.data(x);
        let mut out = Vec::with_capacity(planes * oh * ow);
        let mut argmax = Vec::with_capacity(planes * oh * ow);
        for p in 0..planes {
            let plane = &input[p * h * w..(p + 1) * h * w];
            for oy in 0..oh {
                let rows = &plane[oy * stride * w..(oy * stride + window) * w];
                for ox in 0..ow {
                    let mut best = ox * stride;
                    let mut top = rows[best];
                    for dy in 0..window {
                        let start = dy * w + ox * stride;
                        for (dx, &v) in rows[start..start + window].iter().enumerate() {
                            let gt = v > top;
                            best = if gt { start + dx } else { best };
                            top = if gt { v } else { top };
                        }
                    }
                    out.push(top);
                    argmax.push(p * h * w + oy * stride * w + best);
                }
            }
        }
        let value = Tensor::new(&[sx[0], sx[1], oh, ow], out)?;
        Ok(self.push(value, Op::MaxPool { x, argmax }))
    }

    /// Per-sample, per-channel normalization over spatial positions with no
    /// learned affine transform.
    pub fn instance_norm2d(&mut self, x: Var, eps: f64) -> Result<Var> {
        let sx = self.shape(x).to_vec();
        if sx.len() != 4 {
            return Err(shape_err("instance_norm2d", &sx, &[0, 0, 0, 0]));
        }
        let plane = sx[2] * sx[3];
        let eps = T::from_f64(eps);
        let count = T::from_f64(plane as f64);
        let input = self.data(x);
        let mut xhat = vec![T::zero(); input.len()];
        let mut inv_std = Vec::with_capacity(sx[0] * sx[1]);
        for (src, dst) in input.chunks(plane).zip(xhat.chunks_mut(plane)) {
            let mean = src.iter().fold(T::zero(), |a, &v| a + v) / count;
            let var = src.iter().fold(T::zero(), |a, &v| a + (v - mean) * (v - mean)) / count;
            let r = T::one() / (var + eps).sqrt();
            for (d, &s) in dst.iter_mut().zip(src) {
                *d = (s - mean) * r;
            }
            inv_std.push(r);
        }
        let value = Tensor::new(&sx, xhat.clone())?;
        Ok(self.push(value, Op::InstanceNorm { x, xhat, inv_std, plane }))
    }

    /// Inverted dropout. Outside training, or with `rate == 0`, returns `x`
    /// itself.
    pub fn dropout<R: Rng + ?Sized>(&mut self, x: Var, rate: f64, training: bool, rng: &mut R) -> Result<Var> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::Config(format!("dropout rate {rate} outside [0, 1)")));
        }
        if !training || rate == 0.0 {
            return Ok(x);
        }
        let keep = T::from_f64(1.0 / (1.0 - rate));
        let src = self.value(x);
        let mask: Vec<T> = (0..src.len())
            .map(|_| if rng.gen::<f64>() < rate { T::zero() } else { keep })
            .collect();
        let data = src.data().iter().zip(&mask).map(|(&v, &m)| v * m).collect();
        let value = Tensor::new(src.shape(), data)?;
        Ok(self.push(value, Op::Dropout { x, mask }))
    }

    fn binary(&mut self, op: &'static str, a: Var, b: Var, f: impl Fn(T, T) -> T) -> Result<Tensor<T>> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(shape_err(op, ta.shape(), tb.shape()));
        }
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        Tensor::new(ta.shape(), data)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.binary("add", a, b, |x, y| x + y)?;
        Ok(self.push(value, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.binary("sub", a, b, |x, y| x - y)?;
        Ok(self.push(value, Op::Sub(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.binary("mul", a, b, |x, y| x * y)?;
        Ok(self.push(value, Op::Mul(a, b)))
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Result<Var> {
        let factor = T::from_f64(factor);
        let src = self.value(x);
        let value = Tensor::new(src.shape(), src.data().iter().map(|&v| v * factor).collect())?;
        Ok(self.push(value, Op::Scale(x, factor)))
    }

    pub fn abs(&mut self, x: Var) -> Result<Var> {
        let src = self.value(x);
        let value = Tensor::new(src.shape(), src.data().iter().map(|v| v.abs()).collect())?;
        Ok(self.push(value, Op::Abs(x)))
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let total = self.data(x).iter().fold(T::zero(), |a, &v| a + v);
        Ok(self.push(Tensor::scalar(total), Op::Sum(x)))
    }

    pub fn mean(&mut self, x: Var) -> Result<Var> {
        let src = self.data(x);
        let total = src.iter().fold(T::zero(), |a, &v| a + v);
        let mean = total / T::from_f64(src.len() as f64);
        Ok(self.push(Tensor::scalar(mean), Op::Mean(x)))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(x).clone().reshaped(shape)?;
        Ok(self.push(value, Op::Reshape(x)))
    }

    /// Mean negative log-likelihood of a softmax restricted to the logit
    /// columns listed in `classes`. Columns outside `classes` receive zero
    /// gradient.
    pub fn masked_cross_entropy(&mut self, logits: Var, labels: &[usize], classes: &[usize]) -> Result<Var> {
        let sl = self.shape(logits);
        if sl.len() != 2 || sl[0] != labels.len() {
            return Err(shape_err("masked_cross_entropy", sl, &[labels.len()]));
        }
        let (rows, width) = (sl[0], sl[1]);
        if classes.is_empty() || classes.iter().any(|&c| c >= width) {
            return Err(Error::Config(format!("task classes {classes:?} out of range for {width} logits")));
        }
        let label_pos = labels
            .iter()
            .map(|l| {
                classes
                    .iter()
                    .position(|c| c == l)
                    .ok_or_else(|| Error::Data(format!("label {l} is not in task classes {classes:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        let z = self.data(logits);
        let k = classes.len();
        let mut probs = vec![T::zero(); rows * k];
        let mut total = T::zero();
        for r in 0..rows {
            let row = &z[r * width..(r + 1) * width];
            let max = classes.iter().map(|&c| row[c]).fold(T::neg_infinity(), T::max);
            let p = &mut probs[r * k..(r + 1) * k];
            let mut denom = T::zero();
            for (pi, &c) in p.iter_mut().zip(classes) {
                *pi = (row[c] - max).exp();
                denom = denom + *pi;
            }
            p.iter_mut().for_each(|v| *v = *v / denom);
            total = total + (max + denom.ln() - row[classes[label_pos[r]]]);
        }
        let loss = total / T::from_f64(rows as f64);
        Ok(self.push(
            Tensor::scalar(loss),
            Op::MaskedCrossEntropy {
                logits,
                classes: classes.to_vec(),
                label_pos,
                probs,
                width,
            },
        ))
    }

    /// `Σ weight·(x − anchor)²` against constant anchor and weight vectors.
    pub fn weighted_sq_dist(&mut self, x: Var, anchor: Arc<[T]>, weight: Arc<[T]>) -> Result<Var> {
        let n = self.value(x).len();
        if anchor.len() != n || weight.len() != n {
            return Err(shape_err("weighted_sq_dist", self.shape(x), &[anchor.len(), weight.len()]));
        }
        let total = self
            .data(x)
            .iter()
            .zip(anchor.iter().zip(weight.iter()))
            .fold(T::zero(), |acc, (&v, (&a, &w))| acc + w * (v - a) * (v - a));
        Ok(self.push(Tensor::scalar(total), Op::WeightedSqDist { x, anchor, weight }))
    }

    // ----------------------------------------------------------- backward

    /// Fault injection for negative-control tests: the backward rule of `v`
    /// propagates its upstream gradient multiplied by `factor`.
    #[doc(hidden)]
    pub fn corrupt_backward(&mut self, v: Var, factor: f64) {
        self.fault = Some((v, factor));
    }

    /// Reverse sweep from a one-element `loss`. Every node ends up with a
    /// gradient buffer; nodes the loss does not depend on get zeros.
    /// Repeated calls recompute gradients from scratch.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.value(loss).len() != 1 {
            return Err(Error::State(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        let mut grads: Vec<Option<Vec<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(vec![T::one()]);
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            match self.fault {
                Some((v, factor)) if v.0 == i => {
                    let scaled: Vec<T> = g.iter().map(|&x| x * T::from_f64(factor)).collect();
                    self.backward_node(i, &scaled, &mut grads);
                }
                _ => self.backward_node(i, &g, &mut grads),
            }
            grads[i] = Some(g);
        }
        for (node, g) in self.nodes.iter_mut().zip(grads) {
            let len = node.value.len();
            node.value.set_grad(g.unwrap_or_else(|| vec![T::zero(); len]));
        }
        Ok(())
    }

    fn backward_node(&self, i: usize, g: &[T], grads: &mut [Option<Vec<T>>]) {
        let nodes = &self.nodes;
        let val = |v: Var| nodes[v.0].value.data();
        match &nodes[i].op {
            Op::Leaf | Op::Constant => {}
            Op::MatMul { a, b, m, k, n } => {
                T::gemm(false, true, *m, *n, *k, T::one(), g, val(*b), T::one(), slot(grads, nodes, *a));
                T::gemm(true, false, *k, *m, *n, T::one(), val(*a), g, T::one(), slot(grads, nodes, *b));
            }
            Op::Linear { x, w, b, rows, fan_in, units } => {
                T::gemm(false, false, *rows, *units, *fan_in, T::one(), g, val(*w), T::one(), slot(grads, nodes, *x));
                T::gemm(true, false, *units, *rows, *fan_in, T::one(), g, val(*x), T::one(), slot(grads, nodes, *w));
                let db = slot(grads, nodes, *b);
                for row in g.chunks(*units) {
                    add_into(db, row);
                }
            }
            Op::Conv2d { x, kernel, bias, geom, batch, filters, cols } => {
                let (patch, positions) = (geom.patch_len(), geom.positions());
                let in_len = geom.channels * geom.height * geom.width;
                let out_len = filters * positions;
                let wide = batch * positions;
                let mut flat = vec![T::zero(); filters * wide];
                let mut db = vec![T::zero(); *filters];
                for n in 0..*batch {
                    for f in 0..*filters {
                        let src = &g[n * out_len + f * positions..n * out_len + (f + 1) * positions];
                        flat[f * wide + n * positions..f * wide + (n + 1) * positions].copy_from_slice(src);
                        db[f] = src.iter().fold(db[f], |a, &v| a + v);
                    }
                }
                T::gemm(false, true, *filters, wide, patch, T::one(), &flat, cols, T::one(), slot(grads, nodes, *kernel));
                add_into(slot(grads, nodes, *bias), &db);
                if !matches!(nodes[x.0].op, Op::Constant) {
                    let mut dcols = vec![T::zero(); patch * wide];
                    T::gemm(true, false, patch, *filters, wide, T::one(), val(*kernel), &flat, T::zero(), &mut dcols);
                    let dx = slot(grads, nodes, *x);
                    for n in 0..*batch {
                        col2im_add(&dcols[n * positions..], geom, &mut dx[n * in_len..(n + 1) * in_len], wide);
                    }
                }
            }
            Op::Relu(x) => {
                let input = val(*x);
                let dx = slot(grads, nodes, *x);
                for ((d, &v), &gi) in dx.iter_mut().zip(input).zip(g) {
                    *d = *d + if v > T::zero() { gi } else { T::zero() };
                }
            }
            Op::MaxPool { x, argmax } => {
                let dx = slot(grads, nodes, *x);
                for (&idx, &gi) in argmax.iter().zip(g) {
                    dx[idx] = dx[idx] + gi;
                }
            }
            Op::InstanceNorm { x, xhat, inv_std, plane } => {
                let count = T::from_f64(*plane as f64);
                let dx = slot(grads, nodes, *x);
                for (((dxp, gp), xp), &r) in dx
                    .chunks_mut(*plane)
                    .zip(g.chunks(*plane))
                    .zip(xhat.chunks(*plane))
                    .zip(inv_std)
                {
                    let sum_g = gp.iter().fold(T::zero(), |a, &v| a + v);
                    let sum_gx = gp.iter().zip(xp).fold(T::zero(), |a, (&gv, &xv)| a + gv * xv);
                    for ((d, &gv), &xv) in dxp.iter_mut().zip(gp).zip(xp) {
                        *d = *d + r / count * (count * gv - sum_g - xv * sum_gx);
                    }
                }
            }
            Op::Dropout { x, mask } => {
                let dx = slot(grads, nodes, *x);
                for ((d, &m), &gi) in dx.iter_mut().zip(mask).zip(g) {
                    *d = *d + m * gi;
                }
            }
            Op::Add(a, b) => {
                add_into(slot(grads, nodes, *a), g);
                add_into(slot(grads, nodes, *b), g);
            }
            Op::Sub(a, b) => {
                add_into(slot(grads, nodes, *a), g);
                let db = slot(grads, nodes, *b);
                for (d, &gi) in db.iter_mut().zip(g) {
                    *d = *d - gi;
                }
            }
            Op::Mul(a, b) => {
                // a and b may be the same node; read values before writing.
                let (va, vb) = (val(*a).to_vec(), val(*b).to_vec());
                let da = slot(grads, nodes, *a);
                for ((d, &y), &gi) in da.iter_mut().zip(&vb).zip(g) {
                    *d = *d + gi * y;
                }
                let db = slot(grads, nodes, *b);
                for ((d, &x), &gi) in db.iter_mut().zip(&va).zip(g) {
                    *d = *d + gi * x;
                }
            }
            Op::Scale(x, factor) => {
                let dx = slot(grads, nodes, *x);
                for (d, &gi) in dx.iter_mut().zip(g) {
                    *d = *d + gi * *factor;
                }
            }
            Op::Abs(x) => {
                let input = val(*x);
                let dx = slot(grads, nodes, *x);
                for ((d, &v), &gi) in dx.iter_mut().zip(input).zip(g) {
                    if v > T::zero() {
                        *d = *d + gi;
                    } else if v < T::zero() {
                        *d = *d - gi;
                    }
                }
            }
            Op::Sum(x) => {
                let dx = slot(grads, nodes, *x);
                dx.iter_mut().for_each(|d| *d = *d + g[0]);
            }
            Op::Mean(x) => {
                let dx = slot(grads, nodes, *x);
                let share = g[0] / T::from_f64(dx.len() as f64);
                dx.iter_mut().for_each(|d| *d = *d + share);
            }
            Op::Reshape(x) => add_into(slot(grads, nodes, *x), g),
            Op::MaskedCrossEntropy { logits, classes, label_pos, probs, width } => {
                let k = classes.len();
                let rows = label_pos.len();
                let scale = g[0] / T::from_f64(rows as f64);
                let dz = slot(grads, nodes, *logits);
                for r in 0..rows {
                    for (j, &c) in classes.iter().enumerate() {
                        let target = if j == label_pos[r] { T::one() } else { T::zero() };
                        let d = &mut dz[r * width + c];
                        *d = *d + scale * (probs[r * k + j] - target);
                    }
                }
            }
            Op::WeightedSqDist { x, anchor, weight } => {
                let input = val(*x);
                let two = T::from_f64(2.0) * g[0];
                let dx = slot(grads, nodes, *x);
                for (((d, &v), &a), &w) in dx.iter_mut().zip(input).zip(anchor.iter()).zip(weight.iter()) {
                    *d = *d + two * w * (v - a);
                }
            }
        }
    }
}
