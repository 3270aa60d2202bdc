//! Tape-based reverse-mode differentiation.
//!
//! A [`Graph`] records one forward pass. Nodes are appended in evaluation
//! order, so reverse index order is a valid topological order for the
//! backward sweep. A graph supports exactly one backward pass.

use crate::error::{Error, Result};
use crate::kernels;
use crate::tensor::{Real, Tensor};

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    Conv2d {
        input: Var,
        weight: Var,
        bias: Option<Var>,
        stride: usize,
        padding: usize,
    },
    MaxPool2d {
        input: Var,
        argmax: Vec<usize>,
    },
    Resize(Var),
    Relu(Var),
    Sigmoid(Var),
    Abs(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    AddScalar(Var),
    Concat(Var, Var),
    SliceChannels {
        input: Var,
        start: usize,
    },
    Sum(Var),
    MeanChannels(Var),
}

#[derive(Debug)]
struct Node<T> {
    value: Tensor<T>,
    op: Op,
    requires_grad: bool,
}

#[derive(Debug, Default)]
pub struct Graph<T> {
    nodes: Vec<Node<T>>,
    grads: Vec<Option<Vec<T>>>,
    backward_done: bool,
}

impl<T: Real> Graph<T> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            grads: Vec::new(),
            backward_done: false,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<T>, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value: value.with_requires_grad(requires_grad),
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    /// Inserts a tensor; it is differentiated iff its `requires_grad` flag is set.
    pub fn input(&mut self, t: Tensor<T>) -> Var {
        let rg = t.requires_grad();
        self.push(t, Op::Leaf, rg)
    }

    pub fn leaf(&mut self, t: Tensor<T>, requires_grad: bool) -> Var {
        self.push(t, Op::Leaf, requires_grad)
    }

    pub fn constant(&mut self, t: Tensor<T>) -> Var {
        self.push(t, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Gradient of the loss w.r.t. `v`, available after [`Graph::backward`].
    pub fn grad(&self, v: Var) -> Option<&[T]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    /// A copy of the node's value with its gradient attached.
    pub fn tensor_with_grad(&self, v: Var) -> Tensor<T> {
        let mut t = self.nodes[v.0].value.clone();
        if let Some(g) = self.grad(v) {
            t.set_grad(g.to_vec()).expect("gradient matches node shape");
        }
        t
    }

    pub fn conv2d(
        &mut self,
        input: Var,
        weight: Var,
        bias: Option<Var>,
        stride: usize,
        padding: usize,
    ) -> Result<Var> {
        let out = kernels::conv2d(
            self.value(input),
            self.value(weight),
            bias.map(|b| self.value(b)),
            stride,
            padding,
        )?;
        let mut parents = vec![input, weight];
        parents.extend(bias);
        let rg = self.needs(&parents);
        Ok(self.push(
            out,
            Op::Conv2d {
                input,
                weight,
                bias,
                stride,
                padding,
            },
            rg,
        ))
    }

    pub fn max_pool2d(&mut self, input: Var) -> Result<Var> {
        let (out, argmax) = kernels::max_pool2d(self.value(input))?;
        let rg = self.needs(&[input]);
        Ok(self.push(out, Op::MaxPool2d { input, argmax }, rg))
    }

    pub fn upsample_bilinear(&mut self, input: Var, factor: usize) -> Result<Var> {
        let out = kernels::upsample_bilinear(self.value(input), factor)?;
        let rg = self.needs(&[input]);
        Ok(self.push(out, Op::Resize(input), rg))
    }

    pub fn resize_bilinear(&mut self, input: Var, h: usize, w: usize) -> Result<Var> {
        let out = kernels::resize_bilinear(self.value(input), h, w)?;
        let rg = self.needs(&[input]);
        Ok(self.push(out, Op::Resize(input), rg))
    }

    fn unary(&mut self, input: Var, f: impl Fn(T) -> T, op: Op) -> Var {
        let out = self.value(input).map(f);
        let rg = self.needs(&[input]);
        self.push(out, op, rg)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.unary(x, |v| v.max(T::zero()), Op::Relu(x))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.unary(x, sigmoid, Op::Sigmoid(x))
    }

    pub fn abs(&mut self, x: Var) -> Var {
        self.unary(x, |v| v.abs(), Op::Abs(x))
    }

    pub fn add_scalar(&mut self, x: Var, c: T) -> Var {
        self.unary(x, |v| v + c, Op::AddScalar(x))
    }

    fn binary(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(T, T) -> T,
        op: Op,
    ) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return Err(Error::shape(name, va.shape(), vb.shape()));
        }
        let data = va.data().iter().zip(vb.data()).map(|(&x, &y)| f(x, y)).collect();
        let out = Tensor::new(va.shape().to_vec(), data)?;
        let rg = self.needs(&[a, b]);
        Ok(self.push(out, op, rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("div", a, b, |x, y| x / y, Op::Div(a, b))
    }

    pub fn concat_channels(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        let (n, ca, h, w) = va.dims4()?;
        let (nb, cb, hb, wb) = vb.dims4()?;
        if (n, h, w) != (nb, hb, wb) {
            return Err(Error::shape("concat_channels", va.shape(), vb.shape()));
        }
        let plane = h * w;
        let mut data = Vec::with_capacity(n * (ca + cb) * plane);
        for i in 0..n {
            data.extend_from_slice(&va.data()[i * ca * plane..(i + 1) * ca * plane]);
            data.extend_from_slice(&vb.data()[i * cb * plane..(i + 1) * cb * plane]);
        }
        let out = Tensor::new(vec![n, ca + cb, h, w], data)?;
        let rg = self.needs(&[a, b]);
        Ok(self.push(out, Op::Concat(a, b), rg))
    }

    /// Channels `start..start + len` of an NCHW tensor.
    pub fn slice_channels(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let vx = self.value(x);
        let (n, c, h, w) = vx.dims4()?;
        if len == 0 || start + len > c {
            return Err(Error::invalid(format!(
                "channel slice {start}..{} out of range for {c} channels",
                start + len
            )));
        }
        let plane = h * w;
        let mut data = Vec::with_capacity(n * len * plane);
        for i in 0..n {
            let base = (i * c + start) * plane;
            data.extend_from_slice(&vx.data()[base..base + len * plane]);
        }
        let out = Tensor::new(vec![n, len, h, w], data)?;
        let rg = self.needs(&[x]);
        Ok(self.push(out, Op::SliceChannels { input: x, start }, rg))
    }

    /// Splits the channel axis into two equal halves, first half first.
    pub fn split_channels_half(&mut self, x: Var) -> Result<(Var, Var)> {
        let c = self.value(x).dims4()?.1;
        if c % 2 != 0 {
            return Err(Error::invalid(format!(
                "split_channels_half needs an even channel count, got {c}"
            )));
        }
        Ok((self.slice_channels(x, 0, c / 2)?, self.slice_channels(x, c / 2, c / 2)?))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s: T = self.value(x).data().iter().copied().sum();
        let rg = self.needs(&[x]);
        self.push(Tensor::scalar(s), Op::Sum(x), rg)
    }

    /// Mean over the channel axis, keeping it with size one.
    pub fn mean_channels(&mut self, x: Var) -> Result<Var> {
        let out = mean_channels(self.value(x))?;
        let rg = self.needs(&[x]);
        Ok(self.push(out, Op::MeanChannels(x), rg))
    }

    /// Runs the reverse sweep from a scalar `loss`.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.backward_done {
            return Err(Error::BackwardTwice);
        }
        let shape = self.shape(loss);
        if shape.iter().product::<usize>() != 1 {
            return Err(Error::NonScalarLoss(shape.to_vec()));
        }
        self.backward_done = true;
        self.grads = (0..self.nodes.len()).map(|_| None).collect();
        if !self.nodes[loss.0].requires_grad {
            return Ok(());
        }
        self.grads[loss.0] = Some(vec![T::one()]);

        for i in (0..=loss.0).rev() {
            if !self.nodes[i].requires_grad {
                continue;
            }
            let Some(g) = self.grads[i].take() else {
                continue;
            };
            self.propagate(i, &g)?;
            self.grads[i] = Some(g);
        }
        Ok(())
    }

    fn accumulate(&mut self, v: Var, contribution: impl FnOnce(usize) -> Vec<T>) {
        if !self.nodes[v.0].requires_grad {
            return;
        }
        let numel = self.nodes[v.0].value.numel();
        let add = contribution(numel);
        match &mut self.grads[v.0] {
            Some(acc) => acc.iter_mut().zip(&add).for_each(|(a, b)| *a += *b),
            slot @ None => *slot = Some(add),
        }
    }

    fn elementwise(&self, v: Var, g: &[T], f: impl Fn(T, T) -> T) -> Vec<T> {
        let x = self.nodes[v.0].value.data();
        g.iter().zip(x).map(|(&g, &x)| f(g, x)).collect()
    }

    fn propagate(&mut self, i: usize, g: &[T]) -> Result<()> {
        // Parent lists are small; clone the op's handles to release the borrow.
        match &self.nodes[i].op {
            Op::Leaf => {}
            Op::Conv2d {
                input,
                weight,
                bias,
                stride,
                padding,
            } => {
                let (input, weight, bias, stride, padding) =
                    (*input, *weight, *bias, *stride, *padding);
                let grads = kernels::conv2d_backward(
                    self.value(input),
                    self.value(weight),
                    g,
                    stride,
                    padding,
                    self.requires_grad(input),
                    self.requires_grad(weight),
                    bias.is_some_and(|b| self.requires_grad(b)),
                )?;
                if let Some(d) = grads.input {
                    self.accumulate(input, |_| d);
                }
                if let Some(d) = grads.weight {
                    self.accumulate(weight, |_| d);
                }
                if let (Some(b), Some(d)) = (bias, grads.bias) {
                    self.accumulate(b, |_| d);
                }
            }
            Op::MaxPool2d { input, argmax } => {
                let input = *input;
                let mut d = vec![T::zero(); self.value(input).numel()];
                for (&src, &gv) in argmax.iter().zip(g) {
                    d[src] += gv;
                }
                self.accumulate(input, |_| d);
            }
            Op::Resize(input) => {
                let input = *input;
                let out_shape = self.nodes[i].value.shape();
                let (oh, ow) = (out_shape[2], out_shape[3]);
                let d = kernels::resize_bilinear_backward(self.value(input).shape(), oh, ow, g);
                self.accumulate(input, |_| d);
            }
            Op::Relu(x) => {
                let x = *x;
                let d = self.elementwise(x, g, |g, x| if x > T::zero() { g } else { T::zero() });
                self.accumulate(x, |_| d);
            }
            Op::Sigmoid(x) => {
                let x = *x;
                let y = self.nodes[i].value.data();
                let d: Vec<T> = g.iter().zip(y).map(|(&g, &s)| g * s * (T::one() - s)).collect();
                self.accumulate(x, |_| d);
            }
            Op::Abs(x) => {
                let x = *x;
                let d = self.elementwise(x, g, |g, x| {
                    if x > T::zero() {
                        g
                    } else if x < T::zero() {
                        -g
                    } else {
                        T::zero()
                    }
                });
                self.accumulate(x, |_| d);
            }
            Op::AddScalar(x) => {
                let x = *x;
                self.accumulate(x, |_| g.to_vec());
            }
            Op::Add(a, b) => {
                let (a, b) = (*a, *b);
                self.accumulate(a, |_| g.to_vec());
                self.accumulate(b, |_| g.to_vec());
            }
            Op::Sub(a, b) => {
                let (a, b) = (*a, *b);
                self.accumulate(a, |_| g.to_vec());
                self.accumulate(b, |_| g.iter().map(|&v| -v).collect());
            }
            Op::Mul(a, b) => {
                let (a, b) = (*a, *b);
                let da = self.elementwise(b, g, |g, y| g * y);
                let db = self.elementwise(a, g, |g, x| g * x);
                self.accumulate(a, |_| da);
                self.accumulate(b, |_| db);
            }
            Op::Div(a, b) => {
                let (a, b) = (*a, *b);
                let (va, vb) = (self.value(a).data(), self.value(b).data());
                let da: Vec<T> = g.iter().zip(vb).map(|(&g, &y)| g / y).collect();
                let db: Vec<T> = g
                    .iter()
                    .zip(va.iter().zip(vb))
                    .map(|(&g, (&x, &y))| -g * x / (y * y))
                    .collect();
                self.accumulate(a, |_| da);
                self.accumulate(b, |_| db);
            }
            Op::Concat(a, b) => {
                let (a, b) = (*a, *b);
                let (n, ca, h, w) = self.value(a).dims4()?;
                let cb = self.value(b).dims4()?.1;
                let plane = h * w;
                let mut da = Vec::with_capacity(n * ca * plane);
                let mut db = Vec::with_capacity(n * cb * plane);
                for s in 0..n {
                    let base = s * (ca + cb) * plane;
                    da.extend_from_slice(&g[base..base + ca * plane]);
                    db.extend_from_slice(&g[base + ca * plane..base + (ca + cb) * plane]);
                }
                self.accumulate(a, |_| da);
                self.accumulate(b, |_| db);
            }
            Op::SliceChannels { input, start } => {
                let (input, start) = (*input, *start);
                let (n, c, h, w) = self.value(input).dims4()?;
                let len = self.nodes[i].value.shape()[1];
                let plane = h * w;
                let mut d = vec![T::zero(); n * c * plane];
                for s in 0..n {
                    let dst = (s * c + start) * plane;
                    let src = s * len * plane;
                    d[dst..dst + len * plane].copy_from_slice(&g[src..src + len * plane]);
                }
                self.accumulate(input, |_| d);
            }
            Op::Sum(x) => {
                let x = *x;
                let gv = g[0];
                self.accumulate(x, |n| vec![gv; n]);
            }
            Op::MeanChannels(x) => {
                let x = *x;
                let (n, c, h, w) = self.value(x).dims4()?;
                let plane = h * w;
                let inv = T::one() / T::lit(c as f64);
                let mut d = vec![T::zero(); n * c * plane];
                for s in 0..n {
                    for ch in 0..c {
                        let dst = (s * c + ch) * plane;
                        for p in 0..plane {
                            d[dst + p] = g[s * plane + p] * inv;
                        }
                    }
                }
                self.accumulate(x, |_| d);
            }
        }
        Ok(())
    }
}

/// Logistic function, kept strictly inside `(0, 1)` in the working precision.
pub fn sigmoid<T: Real>(x: T) -> T {
    let s = if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    };
    let hi = T::one() - T::epsilon() / T::lit(2.0);
    s.max(T::min_positive_value()).min(hi)
}

/// Mean over the channel axis of an NCHW tensor, keeping a size-one channel axis.
pub fn mean_channels<T: Real>(x: &Tensor<T>) -> Result<Tensor<T>> {
    let (n, c, h, w) = x.dims4()?;
    let plane = h * w;
    let inv = T::one() / T::lit(c as f64);
    let mut out = vec![T::zero(); n * plane];
    for s in 0..n {
        for ch in 0..c {
            let src = &x.data()[(s * c + ch) * plane..(s * c + ch + 1) * plane];
            for (o, &v) in out[s * plane..(s + 1) * plane].iter_mut().zip(src) {
                *o += v;
            }
        }
    }
    out.iter_mut().for_each(|v| *v *= inv);
    Tensor::new(vec![n, 1, h, w], out)
}
