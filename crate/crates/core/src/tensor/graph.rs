use alloc::vec;
use alloc::vec::Vec;

use super::kernels::{self, ConvGeom};
use super::params::{Gradients, ParamId, ParamStore};
use super::{ensure_finite, Scalar, Tensor};
use crate::error::{invalid, shape_err, Error, Result};

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op<T> {
    Input,
    Param(ParamId),
    Conv2d { input: Var, kernel: Var, bias: Var, geom: ConvGeom },
    Relu(Var),
    GlobalAvgPool { x: Var, plane: usize },
    Concat { a: Var, b: Var, outer: usize, block_a: usize, block_b: usize },
    Slice { x: Var, outer: usize, offset: usize, block: usize, in_block: usize },
    Linear { x: Var, weight: Var, bias: Var, n: usize, din: usize, dout: usize },
    Softmax2(Var),
    CrossEntropy { probs: Var, targets: Vec<usize>, clamped: Vec<bool> },
    AddN(Vec<Var>),
    Mul(Var, Var),
    Scale(Var, T),
    Sum(Var),
}

#[derive(Debug)]
struct Node<T> {
    op: Op<T>,
    /// `None` for parameter nodes, whose value lives in the store.
    value: Option<Tensor<T>>,
    requires_grad: bool,
}

/// Append-only record of operations, replayed in reverse by [`Graph::backward`].
///
/// Nodes are only ever appended after their inputs, so index order is a
/// topological order.
pub struct Graph<'p, T: Scalar> {
    params: Option<&'p ParamStore<T>>,
    nodes: Vec<Node<T>>,
    param_nodes: Vec<(ParamId, Var)>,
    grads: Vec<Option<Vec<T>>>,
}

/// Probabilities below this are clamped before taking the log.
pub const PROB_FLOOR: f64 = 1e-12;

impl<T: Scalar> Default for Graph<'_, T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<'p, T: Scalar> Graph<'p, T> {
    pub fn new() -> Self {
        Graph { params: None, nodes: Vec::new(), param_nodes: Vec::new(), grads: Vec::new() }
    }

    pub fn with_params(params: &'p ParamStore<T>) -> Self {
        Graph { params: Some(params), ..Self::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        let node = &self.nodes[v.0];
        match (&node.value, &node.op) {
            (Some(t), _) => t,
            (None, Op::Param(id)) => self.params.expect("param node without store").value(*id),
            _ => unreachable!("node without value"),
        }
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.value(v).shape()
    }

    /// Gradient of the last backward pass with respect to `v`.
    pub fn grad(&self, v: Var) -> Option<&[T]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    fn push(&mut self, op: Op<T>, value: Tensor<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node { op, value: Some(value), requires_grad });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Constant input; no gradient flows into it.
    pub fn input(&mut self, t: Tensor<T>) -> Var {
        self.push(Op::Input, t, false)
    }

    /// Input whose gradient is tracked and readable through [`Graph::grad`].
    pub fn variable(&mut self, t: Tensor<T>) -> Var {
        self.push(Op::Input, t, true)
    }

    /// Node for a stored parameter. Repeated calls with one id return the same node,
    /// so shared weights accumulate a single gradient.
    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(&(_, v)) = self.param_nodes.iter().find(|(p, _)| *p == id) {
            return v;
        }
        let store = self.params.expect("Graph::param needs a graph built with_params");
        let requires_grad = store.get(id).requires_grad;
        self.nodes.push(Node { op: Op::Param(id), value: None, requires_grad });
        let v = Var(self.nodes.len() - 1);
        self.param_nodes.push((id, v));
        v
    }

    pub fn conv2d(&mut self, input: Var, kernel: Var, bias: Var, stride: usize, padding: usize) -> Result<Var> {
        let (xs, ks, bs) = (self.shape(input), self.shape(kernel), self.shape(bias));
        if xs.len() != 4 || ks.len() != 4 {
            return Err(shape_err!("conv2d expects 4-d input and kernel, got input {xs:?} and kernel {ks:?}"));
        }
        if xs[1] != ks[1] {
            return Err(shape_err!(
                "conv2d input channels {} (input {xs:?}) do not match kernel {ks:?}",
                xs[1]
            ));
        }
        if bs != [ks[0]] {
            return Err(shape_err!("conv2d bias {bs:?} does not match kernel {ks:?}"));
        }
        if stride == 0 {
            return Err(invalid!("conv2d stride must be at least 1"));
        }
        let (ph, pw) = (xs[2] + 2 * padding, xs[3] + 2 * padding);
        if ks[2] > ph || ks[3] > pw {
            return Err(shape_err!("conv2d kernel {ks:?} larger than padded input {ph}x{pw}"));
        }
        let geom = ConvGeom {
            n: xs[0],
            cin: xs[1],
            h: xs[2],
            w: xs[3],
            cout: ks[0],
            kh: ks[2],
            kw: ks[3],
            stride,
            pad: padding,
            oh: (ph - ks[2]) / stride + 1,
            ow: (pw - ks[3]) / stride + 1,
        };
        let mut out = vec![T::zero(); geom.n * geom.cout * geom.oh * geom.ow];
        kernels::conv2d_forward(
            &geom,
            self.value(input).data(),
            self.value(kernel).data(),
            self.value(bias).data(),
            &mut out,
        );
        ensure_finite("conv2d", &out)?;
        let t = Tensor::new(&[geom.n, geom.cout, geom.oh, geom.ow], out)?;
        let rg = self.rg(input) || self.rg(kernel) || self.rg(bias);
        Ok(self.push(Op::Conv2d { input, kernel, bias, geom }, t, rg))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let data = xv.data().iter().map(|&v| if v > T::zero() { v } else { T::zero() }).collect();
        let t = Tensor { shape: xv.shape().to_vec(), data };
        let rg = self.rg(x);
        self.push(Op::Relu(x), t, rg)
    }

    /// Mean over each trailing H×W plane: `[N,C,H,W] -> [N,C]`.
    pub fn global_avg_pool(&mut self, x: Var) -> Result<Var> {
        let xs = self.shape(x);
        if xs.len() != 4 {
            return Err(shape_err!("global_avg_pool expects [N,C,H,W], got {xs:?}"));
        }
        let (n, c, plane) = (xs[0], xs[1], xs[2] * xs[3]);
        let count = T::of(plane as f64);
        let data: Vec<T> = self.value(x).data().chunks_exact(plane).map(|p| kernels::sum(p) / count).collect();
        let t = Tensor::new(&[n, c], data)?;
        let rg = self.rg(x);
        Ok(self.push(Op::GlobalAvgPool { x, plane }, t, rg))
    }

    /// Concatenate along dimension 1.
    pub fn concat_channels(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() < 2 || sa.len() != sb.len() || sa[0] != sb[0] || sa[2..] != sb[2..] {
            return Err(shape_err!("concat_channels needs equal non-channel dims, got {sa:?} and {sb:?}"));
        }
        let inner: usize = sa[2..].iter().product();
        let (outer, block_a, block_b) = (sa[0], sa[1] * inner, sb[1] * inner);
        let mut shape = sa.to_vec();
        shape[1] = sa[1] + sb[1];
        let (da, db) = (self.value(a).data(), self.value(b).data());
        let mut data = Vec::with_capacity(da.len() + db.len());
        for i in 0..outer {
            data.extend_from_slice(&da[i * block_a..(i + 1) * block_a]);
            data.extend_from_slice(&db[i * block_b..(i + 1) * block_b]);
        }
        let t = Tensor::new(&shape, data)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Op::Concat { a, b, outer, block_a, block_b }, t, rg))
    }

    /// Channels `[start, start+len)` along dimension 1.
    pub fn slice_channels(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let xs = self.shape(x);
        if xs.len() < 2 || len == 0 || start + len > xs[1] {
            return Err(shape_err!("slice_channels [{start}, {}) out of range for {xs:?}", start + len));
        }
        let inner: usize = xs[2..].iter().product();
        let (outer, in_block, block, offset) = (xs[0], xs[1] * inner, len * inner, start * inner);
        let mut shape = xs.to_vec();
        shape[1] = len;
        let d = self.value(x).data();
        let mut data = Vec::with_capacity(outer * block);
        for i in 0..outer {
            data.extend_from_slice(&d[i * in_block + offset..i * in_block + offset + block]);
        }
        let t = Tensor::new(&shape, data)?;
        let rg = self.rg(x);
        Ok(self.push(Op::Slice { x, outer, offset, block, in_block }, t, rg))
    }

    /// `x · weightᵀ + bias` with `x: [N,D_in]`, `weight: [D_out,D_in]`.
    pub fn linear(&mut self, x: Var, weight: Var, bias: Var) -> Result<Var> {
        let (xs, ws, bs) = (self.shape(x), self.shape(weight), self.shape(bias));
        if xs.len() != 2 || ws.len() != 2 || xs[1] != ws[1] || bs != [ws[0]] {
            return Err(shape_err!("linear: input {xs:?}, weight {ws:?}, bias {bs:?}"));
        }
        let (n, din, dout) = (xs[0], xs[1], ws[0]);
        let (xd, wd, bd) = (self.value(x).data(), self.value(weight).data(), self.value(bias).data());
        let mut out = Vec::with_capacity(n * dout);
        for i in 0..n {
            let row = &xd[i * din..(i + 1) * din];
            for o in 0..dout {
                out.push(bd[o] + kernels::dot(row, &wd[o * din..(o + 1) * din]));
            }
        }
        ensure_finite("linear", &out)?;
        let t = Tensor::new(&[n, dout], out)?;
        let rg = self.rg(x) || self.rg(weight) || self.rg(bias);
        Ok(self.push(Op::Linear { x, weight, bias, n, din, dout }, t, rg))
    }

    /// Row-wise softmax over two classes, with max subtraction.
    pub fn softmax2(&mut self, logits: Var) -> Result<Var> {
        let xs = self.shape(logits);
        if xs.len() != 2 || xs[1] != 2 {
            return Err(shape_err!("softmax2 expects [N,2], got {xs:?}"));
        }
        let d = self.value(logits).data();
        if d.iter().any(|v| v.is_nan()) {
            return Err(Error::NonFinite("softmax2 input contains NaN".into()));
        }
        let mut out = Vec::with_capacity(d.len());
        for row in d.chunks_exact(2) {
            let m = row[0].max(row[1]);
            let (e0, e1) = ((row[0] - m).exp(), (row[1] - m).exp());
            let s = e0 + e1;
            out.push(e0 / s);
            out.push(e1 / s);
        }
        ensure_finite("softmax2", &out)?;
        let t = Tensor::new(xs, out)?;
        let rg = self.rg(logits);
        Ok(self.push(Op::Softmax2(logits), t, rg))
    }

    /// Mean over rows of `-ln(max(p[target], 1e-12))`.
    pub fn cross_entropy(&mut self, probs: Var, targets: &[usize]) -> Result<Var> {
        let ps = self.shape(probs);
        if ps.len() != 2 || ps[1] != 2 || ps[0] != targets.len() {
            return Err(shape_err!("cross_entropy: probs {ps:?} with {} targets", targets.len()));
        }
        if let Some(t) = targets.iter().find(|&&t| t > 1) {
            return Err(invalid!("cross_entropy target {t} is not a class index in {{0,1}}"));
        }
        let floor = T::of(PROB_FLOOR);
        let d = self.value(probs).data();
        let mut total = T::zero();
        let mut clamped = Vec::with_capacity(targets.len());
        for (row, &t) in d.chunks_exact(2).zip(targets) {
            let p = row[t];
            clamped.push(!(p > floor));
            total = total - p.max(floor).ln();
        }
        let loss = total / T::of(targets.len() as f64);
        ensure_finite("cross_entropy", &[loss])?;
        let rg = self.rg(probs);
        Ok(self.push(Op::CrossEntropy { probs, targets: targets.to_vec(), clamped }, Tensor::scalar(loss), rg))
    }

    /// Elementwise sum of equally shaped tensors, accumulated left to right.
    pub fn add_n(&mut self, xs: &[Var]) -> Result<Var> {
        let first = *xs.first().ok_or_else(|| invalid!("add_n needs at least one operand"))?;
        let shape = self.shape(first).to_vec();
        let mut acc = self.value(first).data().to_vec();
        for &v in &xs[1..] {
            let t = self.value(v);
            if t.shape() != shape.as_slice() {
                return Err(shape_err!("add_n operands {shape:?} and {:?}", t.shape()));
            }
            for (a, &b) in acc.iter_mut().zip(t.data()) {
                *a = *a + b;
            }
        }
        ensure_finite("add", &acc)?;
        let t = Tensor::new(&shape, acc)?;
        let rg = xs.iter().any(|&v| self.rg(v));
        Ok(self.push(Op::AddN(xs.to_vec()), t, rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.add_n(&[a, b])
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(shape_err!("mul operands {sa:?} and {sb:?}"));
        }
        let data: Vec<T> = self.value(a).data().iter().zip(self.value(b).data()).map(|(&x, &y)| x * y).collect();
        ensure_finite("mul", &data)?;
        let t = Tensor::new(sa, data)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Op::Mul(a, b), t, rg))
    }

    pub fn scale(&mut self, x: Var, c: T) -> Result<Var> {
        let xv = self.value(x);
        let data: Vec<T> = xv.data().iter().map(|&v| v * c).collect();
        ensure_finite("scale", &data)?;
        let t = Tensor::new(xv.shape(), data)?;
        let rg = self.rg(x);
        Ok(self.push(Op::Scale(x, c), t, rg))
    }

    /// Sum of all elements as a scalar.
    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let s = kernels::sum(self.value(x).data());
        ensure_finite("sum", &[s])?;
        let rg = self.rg(x);
        Ok(self.push(Op::Sum(x), Tensor::scalar(s), rg))
    }

    /// Signs of every ReLU input, in graph order. Finite-difference checks use it
    /// to detect perturbations that cross a kink.
    pub fn relu_pattern(&self) -> Vec<bool> {
        let mut out = Vec::new();
        for node in &self.nodes {
            if let Op::Relu(x) = node.op {
                out.extend(self.value(x).data().iter().map(|&v| v > T::zero()));
            }
        }
        out
    }

    /// Reverse pass from a one-element `loss`. Gradients of tracked inputs become
    /// readable through [`Graph::grad`]; parameter gradients are returned.
    pub fn backward(&mut self, loss: Var) -> Result<Gradients<T>> {
        if !self.value(loss).is_scalar() {
            return Err(shape_err!("backward needs a scalar loss, got shape {:?}", self.shape(loss)));
        }
        let mut grads: Vec<Option<Vec<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(vec![T::one()]);
        for i in (0..=loss.0).rev() {
            if !self.nodes[i].requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.backprop_node(i, &g, &mut grads)?;
            grads[i] = Some(g);
        }
        let mut out = Gradients::default();
        for &(id, v) in &self.param_nodes {
            if let Some(g) = &grads[v.0] {
                if g.iter().any(|x| !x.is_finite()) {
                    return Err(Error::NonFinite(alloc::format!("gradient of parameter #{}", id.0)));
                }
                out.entries.push((id, g.clone()));
            }
        }
        self.grads = grads;
        Ok(out)
    }

    fn backprop_node(&self, i: usize, g: &[T], grads: &mut [Option<Vec<T>>]) -> Result<()> {
        let node = &self.nodes[i];
        match &node.op {
            Op::Input | Op::Param(_) => {}
            Op::Conv2d { input, kernel, bias, geom } => {
                let mut gx = self.rg(*input).then(|| vec![T::zero(); self.value(*input).len()]);
                let mut gk = self.rg(*kernel).then(|| vec![T::zero(); self.value(*kernel).len()]);
                let mut gb = self.rg(*bias).then(|| vec![T::zero(); geom.cout]);
                kernels::conv2d_backward(
                    geom,
                    self.value(*input).data(),
                    self.value(*kernel).data(),
                    g,
                    gx.as_deref_mut(),
                    gk.as_deref_mut(),
                    gb.as_deref_mut(),
                );
                for (v, d) in [(*input, gx), (*kernel, gk), (*bias, gb)] {
                    if let Some(d) = d {
                        accumulate(grads, v, &d);
                    }
                }
            }
            Op::Relu(x) => {
                let xd = self.value(*x).data();
                let d: Vec<T> = g.iter().zip(xd).map(|(&gv, &v)| if v > T::zero() { gv } else { T::zero() }).collect();
                accumulate(grads, *x, &d);
            }
            Op::GlobalAvgPool { x, plane } => {
                let count = T::of(*plane as f64);
                let mut d = Vec::with_capacity(g.len() * plane);
                for &gv in g {
                    d.extend(core::iter::repeat_n(gv / count, *plane));
                }
                accumulate(grads, *x, &d);
            }
            Op::Concat { a, b, outer, block_a, block_b } => {
                let (mut da, mut db) = (Vec::new(), Vec::new());
                for o in 0..*outer {
                    let base = o * (block_a + block_b);
                    da.extend_from_slice(&g[base..base + block_a]);
                    db.extend_from_slice(&g[base + block_a..base + block_a + block_b]);
                }
                if self.rg(*a) {
                    accumulate(grads, *a, &da);
                }
                if self.rg(*b) {
                    accumulate(grads, *b, &db);
                }
            }
            Op::Slice { x, outer, offset, block, in_block } => {
                let mut d = vec![T::zero(); outer * in_block];
                for o in 0..*outer {
                    d[o * in_block + offset..o * in_block + offset + block].copy_from_slice(&g[o * block..(o + 1) * block]);
                }
                accumulate(grads, *x, &d);
            }
            Op::Linear { x, weight, bias, n, din, dout } => {
                let (xd, wd) = (self.value(*x).data(), self.value(*weight).data());
                if self.rg(*x) {
                    let mut d = vec![T::zero(); n * din];
                    for r in 0..*n {
                        let drow = &mut d[r * din..(r + 1) * din];
                        for o in 0..*dout {
                            let gv = g[r * dout + o];
                            for (dv, &wv) in drow.iter_mut().zip(&wd[o * din..(o + 1) * din]) {
                                *dv = *dv + gv * wv;
                            }
                        }
                    }
                    accumulate(grads, *x, &d);
                }
                if self.rg(*weight) {
                    let mut d = vec![T::zero(); dout * din];
                    for r in 0..*n {
                        let xrow = &xd[r * din..(r + 1) * din];
                        for o in 0..*dout {
                            let gv = g[r * dout + o];
                            for (dv, &xv) in d[o * din..(o + 1) * din].iter_mut().zip(xrow) {
                                *dv = *dv + gv * xv;
                            }
                        }
                    }
                    accumulate(grads, *weight, &d);
                }
                if self.rg(*bias) {
                    let mut d = vec![T::zero(); *dout];
                    for r in 0..*n {
                        for o in 0..*dout {
                            d[o] = d[o] + g[r * dout + o];
                        }
                    }
                    accumulate(grads, *bias, &d);
                }
            }
            Op::Softmax2(x) => {
                let y = node.value.as_ref().expect("softmax value").data();
                let mut d = Vec::with_capacity(y.len());
                for (yr, gr) in y.chunks_exact(2).zip(g.chunks_exact(2)) {
                    let inner = yr[0] * gr[0] + yr[1] * gr[1];
                    d.push(yr[0] * (gr[0] - inner));
                    d.push(yr[1] * (gr[1] - inner));
                }
                accumulate(grads, *x, &d);
            }
            Op::CrossEntropy { probs, targets, clamped } => {
                let p = self.value(*probs).data();
                let n = T::of(targets.len() as f64);
                let mut d = vec![T::zero(); p.len()];
                for (r, (&t, &c)) in targets.iter().zip(clamped).enumerate() {
                    if !c {
                        d[r * 2 + t] = -g[0] / (n * p[r * 2 + t]);
                    }
                }
                accumulate(grads, *probs, &d);
            }
            Op::AddN(xs) => {
                for &v in xs {
                    if self.rg(v) {
                        accumulate(grads, v, g);
                    }
                }
            }
            Op::Mul(a, b) => {
                let (ad, bd) = (self.value(*a).data(), self.value(*b).data());
                if self.rg(*a) {
                    let d: Vec<T> = g.iter().zip(bd).map(|(&gv, &bv)| gv * bv).collect();
                    accumulate(grads, *a, &d);
                }
                if self.rg(*b) {
                    let d: Vec<T> = g.iter().zip(ad).map(|(&gv, &av)| gv * av).collect();
                    accumulate(grads, *b, &d);
                }
            }
            Op::Scale(x, c) => {
                let d: Vec<T> = g.iter().map(|&gv| gv * *c).collect();
                accumulate(grads, *x, &d);
            }
            Op::Sum(x) => {
                let d = vec![g[0]; self.value(*x).len()];
                accumulate(grads, *x, &d);
            }
        }
        Ok(())
    }
}

fn accumulate<T: Scalar>(grads: &mut [Option<Vec<T>>], v: Var, d: &[T]) {
    match &mut grads[v.0] {
        Some(acc) => {
            for (a, &b) in acc.iter_mut().zip(d) {
                *a = *a + b;
            }
        }
        slot @ None => *slot = Some(d.to_vec()),
    }
}
