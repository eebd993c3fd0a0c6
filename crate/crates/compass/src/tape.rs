//! Reverse-mode automatic differentiation over a linear tape.
//!
//! Operations are recorded as nodes in evaluation order; `evaluate` runs the
//! forward pass and caches every intermediate value, `backward` replays the
//! tape in reverse and accumulates adjoints for every input and parameter
//! node. Supports exactly the op set a small MLP/CNN classifier needs.

use std::collections::HashMap;

use thiserror::Error;

use crate::tensor::{Tensor, TensorError};

pub type NodeId = usize;

#[derive(Debug, Error)]
pub enum TapeError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("{op} requires {expected}, got shape {got:?}")]
    BadOperand {
        op: &'static str,
        expected: &'static str,
        got: Vec<usize>,
    },
    #[error("non-finite value produced by node {node} ({op})")]
    NonFinite { node: NodeId, op: &'static str },
    #[error("input node {0} has no binding")]
    UnboundInput(NodeId),
    #[error("binding for node {node} has shape {got:?}, declared {expected:?}")]
    BindingShape {
        node: NodeId,
        expected: Vec<usize>,
        got: Vec<usize>,
    },
    #[error("backward requires a scalar root, got shape {0:?}")]
    RootNotScalar(Vec<usize>),
    #[error("backward called before evaluate")]
    BackwardBeforeForward,
    #[error("cross-entropy label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
}

#[derive(Debug, Clone)]
enum Op {
    Input { shape: Vec<usize> },
    Parameter { value: Tensor },
    /// [m,k] x [k] -> [m], or [m,k] x [k,n] -> [m,n].
    Matmul { lhs: NodeId, rhs: NodeId },
    /// input [C,H,W], kernel [O,C,kh,kw], bias [O]; stride 1, zero padding.
    Conv2d {
        input: NodeId,
        kernel: NodeId,
        bias: NodeId,
        padding: usize,
    },
    Add { lhs: NodeId, rhs: NodeId },
    MulScalar { input: NodeId, factor: f64 },
    Relu { input: NodeId },
    /// Non-overlapping window x window max pooling, stride = window.
    MaxPool2d { input: NodeId, window: usize },
    Mean { input: NodeId },
    Softmax { input: NodeId },
    /// -ln(probs[label]); operand must already be a probability vector.
    CrossEntropy { probs: NodeId, label: usize },
    Clamp { input: NodeId, lo: f64, hi: f64 },
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Input { .. } => "input",
            Op::Parameter { .. } => "parameter",
            Op::Matmul { .. } => "matmul",
            Op::Conv2d { .. } => "conv2d",
            Op::Add { .. } => "add",
            Op::MulScalar { .. } => "mul-scalar",
            Op::Relu { .. } => "relu",
            Op::MaxPool2d { .. } => "max-pool2d",
            Op::Mean { .. } => "mean",
            Op::Softmax { .. } => "softmax",
            Op::CrossEntropy { .. } => "cross-entropy",
            Op::Clamp { .. } => "clamp",
        }
    }
}

/// Adjoints produced by [`Tape::backward`], keyed by node id.
#[derive(Debug, Clone, Default)]
pub struct GradientSet {
    grads: HashMap<NodeId, Tensor>,
}

impl GradientSet {
    pub fn get(&self, node: NodeId) -> Option<&Tensor> {
        self.grads.get(&node)
    }

    /// Adjoint of `node`, or a zero tensor of the given shape when the node
    /// does not influence the root.
    pub fn get_or_zero(&self, node: NodeId, shape: &[usize]) -> Tensor {
        self.grads
            .get(&node)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(shape.to_vec()))
    }
}

/// Recorded computation graph. Nodes reference only earlier nodes, so the
/// tape order is a valid evaluation order.
#[derive(Debug, Clone, Default)]
pub struct Tape {
    ops: Vec<Op>,
    values: Vec<Option<Tensor>>,
    evaluated: bool,
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    fn push(&mut self, op: Op) -> NodeId {
        self.ops.push(op);
        self.values.push(None);
        self.evaluated = false;
        self.ops.len() - 1
    }

    pub fn input(&mut self, shape: Vec<usize>) -> NodeId {
        self.push(Op::Input { shape })
    }

    pub fn parameter(&mut self, value: Tensor) -> NodeId {
        self.push(Op::Parameter { value })
    }

    pub fn matmul(&mut self, lhs: NodeId, rhs: NodeId) -> NodeId {
        self.push(Op::Matmul { lhs, rhs })
    }

    pub fn conv2d(&mut self, input: NodeId, kernel: NodeId, bias: NodeId, padding: usize) -> NodeId {
        self.push(Op::Conv2d {
            input,
            kernel,
            bias,
            padding,
        })
    }

    pub fn add(&mut self, lhs: NodeId, rhs: NodeId) -> NodeId {
        self.push(Op::Add { lhs, rhs })
    }

    pub fn mul_scalar(&mut self, input: NodeId, factor: f64) -> NodeId {
        self.push(Op::MulScalar { input, factor })
    }

    pub fn relu(&mut self, input: NodeId) -> NodeId {
        self.push(Op::Relu { input })
    }

    pub fn max_pool2d(&mut self, input: NodeId, window: usize) -> NodeId {
        self.push(Op::MaxPool2d { input, window })
    }

    pub fn mean(&mut self, input: NodeId) -> NodeId {
        self.push(Op::Mean { input })
    }

    pub fn softmax(&mut self, input: NodeId) -> NodeId {
        self.push(Op::Softmax { input })
    }

    pub fn cross_entropy(&mut self, probs: NodeId, label: usize) -> NodeId {
        self.push(Op::CrossEntropy { probs, label })
    }

    pub fn clamp(&mut self, input: NodeId, lo: f64, hi: f64) -> NodeId {
        self.push(Op::Clamp { input, lo, hi })
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    /// Cached forward value of a node; present after `evaluate`.
    pub fn value(&self, node: NodeId) -> Option<&Tensor> {
        self.values.get(node).and_then(|v| v.as_ref())
    }

    /// Replace the stored value of a parameter node.
    pub fn set_parameter(&mut self, node: NodeId, value: Tensor) {
        if let Op::Parameter { value: v } = &mut self.ops[node] {
            *v = value;
            self.evaluated = false;
        }
    }

    /// Forward pass: computes and caches every node value, returns the value
    /// of `root`.
    pub fn evaluate(
        &mut self,
        root: NodeId,
        bindings: &HashMap<NodeId, Tensor>,
    ) -> Result<Tensor, TapeError> {
        for id in 0..self.ops.len() {
            let value = self.forward_node(id, bindings)?;
            if value.check_finite().is_err() {
                return Err(TapeError::NonFinite {
                    node: id,
                    op: self.ops[id].name(),
                });
            }
            self.values[id] = Some(value);
        }
        self.evaluated = true;
        Ok(self.values[root].clone().expect("value just cached"))
    }

    fn val(&self, id: NodeId) -> &Tensor {
        self.values[id].as_ref().expect("operand precedes node")
    }

    fn forward_node(
        &self,
        id: NodeId,
        bindings: &HashMap<NodeId, Tensor>,
    ) -> Result<Tensor, TapeError> {
        match &self.ops[id] {
            Op::Input { shape } => {
                let bound = bindings.get(&id).ok_or(TapeError::UnboundInput(id))?;
                if bound.shape() != shape.as_slice() {
                    return Err(TapeError::BindingShape {
                        node: id,
                        expected: shape.clone(),
                        got: bound.shape().to_vec(),
                    });
                }
                Ok(bound.clone())
            }
            Op::Parameter { value } => Ok(value.clone()),
            Op::Matmul { lhs, rhs } => matmul_forward(self.val(*lhs), self.val(*rhs)),
            Op::Conv2d {
                input,
                kernel,
                bias,
                padding,
            } => conv2d_forward(self.val(*input), self.val(*kernel), self.val(*bias), *padding),
            Op::Add { lhs, rhs } => {
                let (a, b) = (self.val(*lhs), self.val(*rhs));
                if a.shape() != b.shape() {
                    return Err(TapeError::ShapeMismatch {
                        op: "add",
                        left: a.shape().to_vec(),
                        right: b.shape().to_vec(),
                    });
                }
                Ok(a.zip(b, |x, y| x + y)?)
            }
            Op::MulScalar { input, factor } => Ok(self.val(*input).scale(*factor)),
            Op::Relu { input } => Ok(self.val(*input).map(|v| v.max(0.0))),
            Op::MaxPool2d { input, window } => max_pool_forward(self.val(*input), *window),
            Op::Mean { input } => {
                let t = self.val(*input);
                Ok(Tensor::scalar(t.data().iter().sum::<f64>() / t.numel() as f64))
            }
            Op::Softmax { input } => softmax_forward(self.val(*input)),
            Op::CrossEntropy { probs, label } => {
                let p = self.val(*probs);
                if *label >= p.numel() {
                    return Err(TapeError::LabelOutOfRange {
                        label: *label,
                        classes: p.numel(),
                    });
                }
                Ok(Tensor::scalar(-p.data()[*label].ln()))
            }
            Op::Clamp { input, lo, hi } => Ok(self.val(*input).clamp(*lo, *hi)),
        }
    }

    /// Reverse pass from a scalar root. Requires a prior `evaluate` on the
    /// same bindings.
    pub fn backward(&self, root: NodeId) -> Result<GradientSet, TapeError> {
        if !self.evaluated {
            return Err(TapeError::BackwardBeforeForward);
        }
        let root_val = self.val(root);
        if !root_val.is_scalar() {
            return Err(TapeError::RootNotScalar(root_val.shape().to_vec()));
        }

        let mut adjoints: Vec<Option<Tensor>> = vec![None; self.ops.len()];
        adjoints[root] = Some(Tensor::scalar(1.0));

        for id in (0..=root).rev() {
            let Some(dy) = adjoints[id].clone() else {
                continue;
            };
            match &self.ops[id] {
                Op::Input { .. } | Op::Parameter { .. } => {}
                Op::Matmul { lhs, rhs } => {
                    let (da, db) = matmul_backward(self.val(*lhs), self.val(*rhs), &dy);
                    accumulate(&mut adjoints, *lhs, da);
                    accumulate(&mut adjoints, *rhs, db);
                }
                Op::Conv2d {
                    input,
                    kernel,
                    bias,
                    padding,
                } => {
                    let (dx, dk, db) =
                        conv2d_backward(self.val(*input), self.val(*kernel), &dy, *padding);
                    accumulate(&mut adjoints, *input, dx);
                    accumulate(&mut adjoints, *kernel, dk);
                    accumulate(&mut adjoints, *bias, db);
                }
                Op::Add { lhs, rhs } => {
                    accumulate(&mut adjoints, *lhs, dy.clone());
                    accumulate(&mut adjoints, *rhs, dy);
                }
                Op::MulScalar { input, factor } => {
                    accumulate(&mut adjoints, *input, dy.scale(*factor));
                }
                Op::Relu { input } => {
                    // subgradient at 0 is 0
                    let x = self.val(*input);
                    let dx = x.zip(&dy, |xi, g| if xi > 0.0 { g } else { 0.0 })?;
                    accumulate(&mut adjoints, *input, dx);
                }
                Op::MaxPool2d { input, window } => {
                    let dx = max_pool_backward(self.val(*input), &dy, *window);
                    accumulate(&mut adjoints, *input, dx);
                }
                Op::Mean { input } => {
                    let x = self.val(*input);
                    let g = dy.scalar_value() / x.numel() as f64;
                    accumulate(&mut adjoints, *input, x.map(|_| g));
                }
                Op::Softmax { input } => {
                    let y = self.val(id);
                    let dot: f64 = y
                        .data()
                        .iter()
                        .zip(dy.data())
                        .map(|(&yi, &gi)| yi * gi)
                        .sum();
                    let dx = y.zip(&dy, |yi, gi| yi * (gi - dot))?;
                    accumulate(&mut adjoints, *input, dx);
                }
                Op::CrossEntropy { probs, label } => {
                    let p = self.val(*probs);
                    let g = dy.scalar_value();
                    let mut dx = Tensor::zeros(p.shape().to_vec());
                    dx.data_mut()[*label] = -g / p.data()[*label];
                    accumulate(&mut adjoints, *probs, dx);
                }
                Op::Clamp { input, lo, hi } => {
                    let x = self.val(*input);
                    let dx = x.zip(&dy, |xi, g| if xi >= *lo && xi <= *hi { g } else { 0.0 })?;
                    accumulate(&mut adjoints, *input, dx);
                }
            }
        }

        let mut grads = HashMap::new();
        for (id, adj) in adjoints.into_iter().enumerate() {
            if let (Op::Input { .. } | Op::Parameter { .. }, Some(a)) = (&self.ops[id], adj) {
                grads.insert(id, a);
            }
        }
        Ok(GradientSet { grads })
    }
}

fn accumulate(adjoints: &mut [Option<Tensor>], id: NodeId, delta: Tensor) {
    match &mut adjoints[id] {
        Some(a) => *a = a.add(&delta).expect("adjoint shapes match"),
        slot @ None => *slot = Some(delta),
    }
}

fn matmul_forward(a: &Tensor, b: &Tensor) -> Result<Tensor, TapeError> {
    let (m, k) = match a.shape() {
        [m, k] => (*m, *k),
        other => {
            return Err(TapeError::BadOperand {
                op: "matmul",
                expected: "2-D left operand",
                got: other.to_vec(),
            })
        }
    };
    match b.shape() {
        // flat right operand: any shape with k elements acts as a vector,
        // which lets a dense layer consume conv output without a reshape op
        shape if b.numel() == k && (shape.len() != 2 || shape == [k, 1]) => {
            let mut out = vec![0.0; m];
            for i in 0..m {
                out[i] = (0..k).map(|j| a.data()[i * k + j] * b.data()[j]).sum();
            }
            Ok(Tensor::new(vec![m], out)?)
        }
        [k2, n] if *k2 == k => {
            let n = *n;
            let mut out = vec![0.0; m * n];
            for i in 0..m {
                for j in 0..n {
                    out[i * n + j] = (0..k)
                        .map(|t| a.data()[i * k + t] * b.data()[t * n + j])
                        .sum();
                }
            }
            Ok(Tensor::new(vec![m, n], out)?)
        }
        other => Err(TapeError::ShapeMismatch {
            op: "matmul",
            left: a.shape().to_vec(),
            right: other.to_vec(),
        }),
    }
}

fn matmul_backward(a: &Tensor, b: &Tensor, dy: &Tensor) -> (Tensor, Tensor) {
    let (m, k) = (a.shape()[0], a.shape()[1]);
    match b.shape() {
        shape if b.numel() == k && (shape.len() != 2 || shape == [k, 1]) => {
            // y = A b : dA = dy b^T, db = A^T dy (db keeps b's shape)
            let mut da = vec![0.0; m * k];
            let mut db = vec![0.0; k];
            for i in 0..m {
                for j in 0..k {
                    da[i * k + j] = dy.data()[i] * b.data()[j];
                    db[j] += a.data()[i * k + j] * dy.data()[i];
                }
            }
            (
                Tensor::new(vec![m, k], da).unwrap(),
                Tensor::new(b.shape().to_vec(), db).unwrap(),
            )
        }
        [_, n] => {
            let n = *n;
            let mut da = vec![0.0; m * k];
            let mut db = vec![0.0; k * n];
            for i in 0..m {
                for t in 0..k {
                    for j in 0..n {
                        da[i * k + t] += dy.data()[i * n + j] * b.data()[t * n + j];
                        db[t * n + j] += a.data()[i * k + t] * dy.data()[i * n + j];
                    }
                }
            }
            (
                Tensor::new(vec![m, k], da).unwrap(),
                Tensor::new(vec![k, n], db).unwrap(),
            )
        }
        _ => unreachable!("validated in forward"),
    }
}

fn conv2d_forward(
    input: &Tensor,
    kernel: &Tensor,
    bias: &Tensor,
    padding: usize,
) -> Result<Tensor, TapeError> {
    let [c, h, w] = *input.shape() else {
        return Err(TapeError::BadOperand {
            op: "conv2d",
            expected: "input of shape [C,H,W]",
            got: input.shape().to_vec(),
        });
    };
    let [o, kc, kh, kw] = *kernel.shape() else {
        return Err(TapeError::BadOperand {
            op: "conv2d",
            expected: "kernel of shape [O,C,kh,kw]",
            got: kernel.shape().to_vec(),
        });
    };
    if kc != c || bias.shape() != [o] {
        return Err(TapeError::ShapeMismatch {
            op: "conv2d",
            left: input.shape().to_vec(),
            right: kernel.shape().to_vec(),
        });
    }
    let (ph, pw) = (h + 2 * padding, w + 2 * padding);
    if kh > ph || kw > pw {
        return Err(TapeError::BadOperand {
            op: "conv2d",
            expected: "kernel no larger than padded input",
            got: kernel.shape().to_vec(),
        });
    }
    let (oh, ow) = (ph - kh + 1, pw - kw + 1);
    let mut out = vec![0.0; o * oh * ow];
    let at = |ch: usize, y: isize, x: isize| -> f64 {
        if y < 0 || x < 0 || y >= h as isize || x >= w as isize {
            0.0
        } else {
            input.data()[(ch * h + y as usize) * w + x as usize]
        }
    };
    for oc in 0..o {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut acc = bias.data()[oc];
                for ic in 0..c {
                    for ky in 0..kh {
                        for kx in 0..kw {
                            let iy = oy as isize + ky as isize - padding as isize;
                            let ix = ox as isize + kx as isize - padding as isize;
                            acc += at(ic, iy, ix)
                                * kernel.data()[((oc * c + ic) * kh + ky) * kw + kx];
                        }
                    }
                }
                out[(oc * oh + oy) * ow + ox] = acc;
            }
        }
    }
    Ok(Tensor::new(vec![o, oh, ow], out)?)
}

fn conv2d_backward(
    input: &Tensor,
    kernel: &Tensor,
    dy: &Tensor,
    padding: usize,
) -> (Tensor, Tensor, Tensor) {
    let [c, h, w] = *input.shape() else { unreachable!() };
    let [o, _, kh, kw] = *kernel.shape() else { unreachable!() };
    let [_, oh, ow] = *dy.shape() else { unreachable!() };
    let mut dx = vec![0.0; c * h * w];
    let mut dk = vec![0.0; kernel.numel()];
    let mut db = vec![0.0; o];
    for oc in 0..o {
        for oy in 0..oh {
            for ox in 0..ow {
                let g = dy.data()[(oc * oh + oy) * ow + ox];
                db[oc] += g;
                for ic in 0..c {
                    for ky in 0..kh {
                        for kx in 0..kw {
                            let iy = oy as isize + ky as isize - padding as isize;
                            let ix = ox as isize + kx as isize - padding as isize;
                            if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                                continue;
                            }
                            let ii = (ic * h + iy as usize) * w + ix as usize;
                            let ki = ((oc * c + ic) * kh + ky) * kw + kx;
                            dx[ii] += g * kernel.data()[ki];
                            dk[ki] += g * input.data()[ii];
                        }
                    }
                }
            }
        }
    }
    (
        Tensor::new(vec![c, h, w], dx).unwrap(),
        Tensor::new(kernel.shape().to_vec(), dk).unwrap(),
        Tensor::new(vec![o], db).unwrap(),
    )
}

fn max_pool_forward(input: &Tensor, window: usize) -> Result<Tensor, TapeError> {
    let [c, h, w] = *input.shape() else {
        return Err(TapeError::BadOperand {
            op: "max-pool2d",
            expected: "input of shape [C,H,W]",
            got: input.shape().to_vec(),
        });
    };
    if window == 0 || h < window || w < window {
        return Err(TapeError::BadOperand {
            op: "max-pool2d",
            expected: "window no larger than spatial dims",
            got: vec![window],
        });
    }
    let (oh, ow) = (h / window, w / window);
    let mut out = vec![0.0; c * oh * ow];
    for ch in 0..c {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = f64::NEG_INFINITY;
                for dy in 0..window {
                    for dx in 0..window {
                        let v = input.data()[(ch * h + oy * window + dy) * w + ox * window + dx];
                        if v > best {
                            best = v;
                        }
                    }
                }
                out[(ch * oh + oy) * ow + ox] = best;
            }
        }
    }
    Ok(Tensor::new(vec![c, oh, ow], out)?)
}

fn max_pool_backward(input: &Tensor, dy: &Tensor, window: usize) -> Tensor {
    let [c, h, w] = *input.shape() else { unreachable!() };
    let (oh, ow) = (h / window, w / window);
    let mut dx = vec![0.0; input.numel()];
    for ch in 0..c {
        for oy in 0..oh {
            for ox in 0..ow {
                // gradient flows to the first maximal element of the window
                let mut best = f64::NEG_INFINITY;
                let mut best_idx = 0;
                for py in 0..window {
                    for px in 0..window {
                        let idx = (ch * h + oy * window + py) * w + ox * window + px;
                        if input.data()[idx] > best {
                            best = input.data()[idx];
                            best_idx = idx;
                        }
                    }
                }
                dx[best_idx] += dy.data()[(ch * oh + oy) * ow + ox];
            }
        }
    }
    Tensor::new(input.shape().to_vec(), dx).unwrap()
}

fn softmax_forward(input: &Tensor) -> Result<Tensor, TapeError> {
    if input.shape().len() != 1 {
        return Err(TapeError::BadOperand {
            op: "softmax",
            expected: "1-D logit vector",
            got: input.shape().to_vec(),
        });
    }
    let max = input.data().iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let exps: Vec<f64> = input.data().iter().map(|&v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    Ok(Tensor::new(
        input.shape().to_vec(),
        exps.into_iter().map(|e| e / sum).collect(),
    )?)
}

/// Central-difference gradient estimate of a scalar function, the independent
/// oracle used to check `backward`.
pub fn numeric_gradient<F>(f: F, point: &Tensor, h: f64) -> Result<Tensor, TapeError>
where
    F: Fn(&Tensor) -> Result<f64, TapeError>,
{
    assert!(h > 0.0, "step must be positive");
    let mut grad = Tensor::zeros(point.shape().to_vec());
    for i in 0..point.numel() {
        let mut plus = point.clone();
        plus.data_mut()[i] += h;
        let mut minus = point.clone();
        minus.data_mut()[i] -= h;
        let fp = f(&plus)?;
        let fm = f(&minus)?;
        if !fp.is_finite() || !fm.is_finite() {
            return Err(TapeError::NonFinite { node: i, op: "numeric-gradient" });
        }
        grad.data_mut()[i] = (fp - fm) / (2.0 * h);
    }
    Ok(grad)
}
