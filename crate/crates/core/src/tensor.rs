//! Dense `f64` tensors and tape-based reverse-mode automatic differentiation.
//!
//! The tensor type is deliberately minimal: row-major storage, and only
//! the operations the model zoo and the erasure policy need. Gradients
//! come from a dynamic tape: operations executed through a [`Tape`]
//! record themselves, and [`Tape::backward`] replays the records in
//! reverse to accumulate `d(loss)/d(node)` for every node.
//!
//! A tape is a single-threaded value. Tensors detached from any tape are
//! plain immutable data, safe to share across threads for concurrent
//! reads.

use crate::error::{Error, Result};

/// Dense row-major tensor of 64-bit floats.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    values: Vec<f64>,
}

impl Tensor {
    /// Builds a tensor, checking that the value count matches the shape.
    pub fn new(shape: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        if shape.contains(&0) {
            return Err(Error::Dimension(format!(
                "shape {shape:?} contains a zero dimension"
            )));
        }
        let numel: usize = shape.iter().product();
        if numel != values.len() {
            return Err(Error::Dimension(format!(
                "shape {shape:?} needs {numel} values, got {}",
                values.len()
            )));
        }
        Ok(Tensor { shape, values })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let numel: usize = shape.iter().product();
        Tensor {
            shape,
            values: vec![0.0; numel],
        }
    }

    /// A scalar carried as a one-element tensor of shape `[1]`.
    pub fn scalar(v: f64) -> Self {
        Tensor {
            shape: vec![1],
            values: vec![v],
        }
    }

    pub fn vector(values: Vec<f64>) -> Self {
        Tensor {
            shape: vec![values.len()],
            values,
        }
    }

    pub fn matrix(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        Tensor::new(vec![rows, cols], values)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn numel(&self) -> usize {
        self.values.len()
    }

    /// Extracts the single value of a one-element tensor.
    ///
    /// Panics if the tensor has more than one element; callers use this
    /// only on nodes already checked to be scalar.
    pub fn item(&self) -> f64 {
        assert!(
            self.numel() == 1,
            "item() on tensor of shape {:?}",
            self.shape
        );
        self.values[0]
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    fn dims2(&self) -> Result<(usize, usize)> {
        match self.shape.as_slice() {
            [r, c] => Ok((*r, *c)),
            other => Err(Error::Dimension(format!(
                "expected a 2-d tensor, got shape {other:?}"
            ))),
        }
    }

    /// Standard matrix product `[m,k] x [k,n] -> [m,n]`.
    pub fn matmul(&self, other: &Tensor) -> Result<Tensor> {
        let (m, k) = self.dims2()?;
        let (k2, n) = other.dims2()?;
        if k != k2 {
            return Err(Error::Dimension(format!(
                "matmul inner dimensions differ: {:?} x {:?}",
                self.shape, other.shape
            )));
        }
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for p in 0..k {
                let a = self.values[i * k + p];
                if a == 0.0 {
                    continue;
                }
                let row = &other.values[p * n..(p + 1) * n];
                let dst = &mut out[i * n..(i + 1) * n];
                for (d, &b) in dst.iter_mut().zip(row) {
                    *d += a * b;
                }
            }
        }
        Tensor::new(vec![m, n], out)
    }

    /// Matrix-vector product `[m,n] x [n] -> [m]`.
    pub fn matvec(&self, x: &Tensor) -> Result<Tensor> {
        let (m, n) = self.dims2()?;
        if x.shape.len() != 1 || x.numel() != n {
            return Err(Error::Dimension(format!(
                "matvec: {:?} x {:?}",
                self.shape, x.shape
            )));
        }
        let mut out = vec![0.0; m];
        for (i, o) in out.iter_mut().enumerate() {
            let row = &self.values[i * n..(i + 1) * n];
            let mut acc = 0.0;
            for (a, b) in row.iter().zip(&x.values) {
                acc += a * b;
            }
            *o = acc;
        }
        Ok(Tensor::vector(out))
    }

    fn zip_same_shape(&self, other: &Tensor, op: &str) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::Dimension(format!(
                "{op}: shapes {:?} and {:?} differ",
                self.shape, other.shape
            )));
        }
        Ok(())
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_same_shape(other, "add")?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a + b)
            .collect();
        Ok(Tensor {
            shape: self.shape.clone(),
            values,
        })
    }

    /// Elementwise product.
    pub fn mul(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_same_shape(other, "mul")?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a * b)
            .collect();
        Ok(Tensor {
            shape: self.shape.clone(),
            values,
        })
    }

    pub fn scale(&self, c: f64) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            values: self.values.iter().map(|v| v * c).collect(),
        }
    }

    pub fn tanh(&self) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            values: self.values.iter().map(|v| v.tanh()).collect(),
        }
    }

    pub fn sigmoid(&self) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            values: self.values.iter().map(|v| sigmoid(*v)).collect(),
        }
    }

    /// Concatenates 1-d tensors into one vector.
    pub fn concat(parts: &[&Tensor]) -> Result<Tensor> {
        let mut values = Vec::new();
        for p in parts {
            if p.shape.len() != 1 {
                return Err(Error::Dimension(format!(
                    "concat expects vectors, got shape {:?}",
                    p.shape
                )));
            }
            values.extend_from_slice(&p.values);
        }
        Ok(Tensor::vector(values))
    }

    /// Copy with positions where `mask` is zero set to zero and the rest
    /// multiplied through (non-0/1 masks implement inverted dropout).
    pub fn mask(&self, mask: &Tensor) -> Result<Tensor> {
        self.zip_same_shape(mask, "mask")?;
        let values = self
            .values
            .iter()
            .zip(&mask.values)
            .map(|(v, m)| if *m == 1.0 { *v } else { v * m })
            .collect();
        Ok(Tensor {
            shape: self.shape.clone(),
            values,
        })
    }

    /// Row `r` of a 2-d tensor as a vector.
    pub fn row(&self, r: usize) -> Result<Tensor> {
        let (rows, cols) = self.dims2()?;
        if r >= rows {
            return Err(Error::Index(format!("row {r} of {rows}-row tensor")));
        }
        Ok(Tensor::vector(self.values[r * cols..(r + 1) * cols].to_vec()))
    }

    /// Numerically stable softmax of a vector (max-subtraction).
    pub fn softmax(&self) -> Tensor {
        let max = self.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = self.values.iter().map(|v| (v - max).exp()).collect();
        let sum: f64 = exps.iter().sum();
        Tensor {
            shape: self.shape.clone(),
            values: exps.iter().map(|e| e / sum).collect(),
        }
    }

    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, v) in self.values.iter().enumerate() {
            if *v > self.values[best] {
                best = i;
            }
        }
        best
    }

    /// Euclidean norm of all values.
    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Transpose of a 2-d tensor.
    pub fn transpose(&self) -> Result<Tensor> {
        let (r, c) = self.dims2()?;
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = self.values[i * c + j];
            }
        }
        Tensor::new(vec![c, r], out)
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + exp(x))` without overflow.
pub(crate) fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Floor applied to probabilities before taking a log, so the negative
/// log-likelihood stays finite for arbitrarily confident wrong answers.
pub const PROB_FLOOR: f64 = 1e-12;

/// Negative log-likelihood of `gold` under a stable softmax of `logits`.
pub fn softmax_nll_value(logits: &Tensor, gold: usize) -> Result<f64> {
    if logits.shape().len() != 1 {
        return Err(Error::Dimension(format!(
            "softmax_nll expects a vector of logits, got shape {:?}",
            logits.shape()
        )));
    }
    if gold >= logits.numel() {
        return Err(Error::Index(format!(
            "gold class {gold} out of range for {} logits",
            logits.numel()
        )));
    }
    let p = logits.softmax().values()[gold].max(PROB_FLOOR);
    Ok(-p.ln())
}

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

enum Op {
    Leaf,
    Matmul(NodeId, NodeId),
    Matvec(NodeId, NodeId),
    Add(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Scale(NodeId, f64),
    Tanh(NodeId),
    Sigmoid(NodeId),
    Concat(Vec<NodeId>),
    Mask(NodeId, Tensor),
    Row(NodeId, usize),
    SoftmaxNll(NodeId, usize),
    Mse(NodeId, f64),
    /// log-probability of a Bernoulli draw `z` under probability
    /// `sigmoid(logit)`: `z*l - softplus(l)`.
    BernoulliLogProb(NodeId, f64),
}

struct Node {
    value: Tensor,
    op: Op,
}

/// Records primitive operations so gradients can be computed by a
/// reverse sweep. Nodes are appended in execution order, which is a
/// topological order by construction.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Registers a source node (input or parameter).
    pub fn leaf(&mut self, value: Tensor) -> NodeId {
        self.push(value, Op::Leaf)
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    fn push(&mut self, value: Tensor, op: Op) -> NodeId {
        self.nodes.push(Node { value, op });
        NodeId(self.nodes.len() - 1)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.value(a).matmul(self.value(b))?;
        Ok(self.push(v, Op::Matmul(a, b)))
    }

    pub fn matvec(&mut self, w: NodeId, x: NodeId) -> Result<NodeId> {
        let v = self.value(w).matvec(self.value(x))?;
        Ok(self.push(v, Op::Matvec(w, x)))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.value(a).add(self.value(b))?;
        Ok(self.push(v, Op::Add(a, b)))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.value(a).mul(self.value(b))?;
        Ok(self.push(v, Op::Mul(a, b)))
    }

    pub fn scale(&mut self, x: NodeId, c: f64) -> NodeId {
        let v = self.value(x).scale(c);
        self.push(v, Op::Scale(x, c))
    }

    pub fn tanh(&mut self, x: NodeId) -> NodeId {
        let v = self.value(x).tanh();
        self.push(v, Op::Tanh(x))
    }

    pub fn sigmoid(&mut self, x: NodeId) -> NodeId {
        let v = self.value(x).sigmoid();
        self.push(v, Op::Sigmoid(x))
    }

    pub fn concat(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        let tensors: Vec<&Tensor> = parts.iter().map(|id| self.value(*id)).collect();
        let v = Tensor::concat(&tensors)?;
        Ok(self.push(v, Op::Concat(parts.to_vec())))
    }

    pub fn mask(&mut self, x: NodeId, mask: &Tensor) -> Result<NodeId> {
        let v = self.value(x).mask(mask)?;
        Ok(self.push(v, Op::Mask(x, mask.clone())))
    }

    pub fn row(&mut self, m: NodeId, r: usize) -> Result<NodeId> {
        let v = self.value(m).row(r)?;
        Ok(self.push(v, Op::Row(m, r)))
    }

    /// Scalar `S = -log softmax(logits)[gold]`, always >= 0.
    pub fn softmax_nll(&mut self, logits: NodeId, gold: usize) -> Result<NodeId> {
        let loss = softmax_nll_value(self.value(logits), gold)?;
        Ok(self.push(Tensor::scalar(loss), Op::SoftmaxNll(logits, gold)))
    }

    /// Scalar `(pred - target)^2` for a scalar prediction node.
    pub fn mse(&mut self, pred: NodeId, target: f64) -> Result<NodeId> {
        if self.value(pred).numel() != 1 {
            return Err(Error::Dimension(format!(
                "mse expects a scalar prediction, got shape {:?}",
                self.value(pred).shape()
            )));
        }
        let d = self.value(pred).item() - target;
        Ok(self.push(Tensor::scalar(d * d), Op::Mse(pred, target)))
    }

    /// Scalar log-probability of the Bernoulli outcome `z` (0 or 1) under
    /// removal probability `sigmoid(logit)`.
    pub fn bernoulli_log_prob(&mut self, logit: NodeId, z: bool) -> Result<NodeId> {
        if self.value(logit).numel() != 1 {
            return Err(Error::Dimension(format!(
                "bernoulli_log_prob expects a scalar logit, got shape {:?}",
                self.value(logit).shape()
            )));
        }
        let l = self.value(logit).item();
        let zf = if z { 1.0 } else { 0.0 };
        let v = zf * l - softplus(l);
        Ok(self.push(Tensor::scalar(v), Op::BernoulliLogProb(logit, zf)))
    }

    /// Reverse sweep from a scalar `loss` node. Every node reachable from
    /// the loss ends up with its accumulated gradient; gradients add
    /// across multiple uses of the same node.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients> {
        if self.value(loss).numel() != 1 {
            return Err(Error::Contract(format!(
                "backward requires a scalar loss node, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = Vec::with_capacity(self.nodes.len());
        grads.resize_with(self.nodes.len(), || None);
        let seed = Tensor::new(self.value(loss).shape().to_vec(), vec![1.0]).unwrap();
        grads[loss.0] = Some(seed);

        for idx in (0..=loss.0).rev() {
            let g = match grads[idx].take() {
                Some(g) => g,
                None => continue,
            };
            self.propagate(idx, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn propagate(&self, idx: usize, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let accumulate = |grads: &mut [Option<Tensor>], id: NodeId, delta: Tensor| {
            match &mut grads[id.0] {
                Some(acc) => {
                    let summed = acc.add(&delta).expect("gradient shape mismatch");
                    *acc = summed;
                }
                slot @ None => *slot = Some(delta),
            }
        };

        match &self.nodes[idx].op {
            Op::Leaf => {}
            Op::Matmul(a, b) => {
                let at = self.value(*a);
                let bt = self.value(*b);
                let da = g.matmul(&bt.transpose().unwrap()).unwrap();
                let db = at.transpose().unwrap().matmul(g).unwrap();
                accumulate(grads, *a, da);
                accumulate(grads, *b, db);
            }
            Op::Matvec(w, x) => {
                let wt = self.value(*w);
                let xt = self.value(*x);
                let (m, n) = (wt.shape()[0], wt.shape()[1]);
                // dW[i,j] += g[i] * x[j]
                let mut dw = vec![0.0; m * n];
                for i in 0..m {
                    let gi = g.values()[i];
                    if gi == 0.0 {
                        continue;
                    }
                    for j in 0..n {
                        dw[i * n + j] = gi * xt.values()[j];
                    }
                }
                // dx[j] += sum_i W[i,j] * g[i]
                let mut dx = vec![0.0; n];
                for i in 0..m {
                    let gi = g.values()[i];
                    if gi == 0.0 {
                        continue;
                    }
                    let row = &wt.values()[i * n..(i + 1) * n];
                    for (d, &w) in dx.iter_mut().zip(row) {
                        *d += w * gi;
                    }
                }
                accumulate(grads, *w, Tensor::new(vec![m, n], dw).unwrap());
                accumulate(grads, *x, Tensor::vector(dx));
            }
            Op::Add(a, b) => {
                accumulate(grads, *a, g.clone());
                accumulate(grads, *b, g.clone());
            }
            Op::Mul(a, b) => {
                let da = g.mul(self.value(*b)).unwrap();
                let db = g.mul(self.value(*a)).unwrap();
                accumulate(grads, *a, da);
                accumulate(grads, *b, db);
            }
            Op::Scale(x, c) => accumulate(grads, *x, g.scale(*c)),
            Op::Tanh(x) => {
                let y = &self.nodes[idx].value;
                let d = Tensor::vector_like(y, |yi| 1.0 - yi * yi);
                accumulate(grads, *x, g.mul(&d).unwrap());
            }
            Op::Sigmoid(x) => {
                let y = &self.nodes[idx].value;
                let d = Tensor::vector_like(y, |yi| yi * (1.0 - yi));
                accumulate(grads, *x, g.mul(&d).unwrap());
            }
            Op::Concat(parts) => {
                let mut offset = 0;
                for p in parts {
                    let len = self.value(*p).numel();
                    let slice = g.values()[offset..offset + len].to_vec();
                    accumulate(grads, *p, Tensor::vector(slice));
                    offset += len;
                }
            }
            Op::Mask(x, mask) => accumulate(grads, *x, g.mul(mask).unwrap()),
            Op::Row(m, r) => {
                let mt = self.value(*m);
                let (rows, cols) = (mt.shape()[0], mt.shape()[1]);
                let mut dm = vec![0.0; rows * cols];
                dm[r * cols..(r + 1) * cols].copy_from_slice(g.values());
                accumulate(grads, *m, Tensor::new(vec![rows, cols], dm).unwrap());
            }
            Op::SoftmaxNll(logits, gold) => {
                let gs = g.item();
                let probs = self.value(*logits).softmax();
                let mut d = probs.values().to_vec();
                d[*gold] -= 1.0;
                for v in &mut d {
                    *v *= gs;
                }
                accumulate(grads, *logits, Tensor::vector(d));
            }
            Op::Mse(pred, target) => {
                let gs = g.item();
                let p = self.value(*pred).item();
                let shape = self.value(*pred).shape().to_vec();
                let delta = Tensor::new(shape, vec![2.0 * (p - target) * gs]).unwrap();
                accumulate(grads, *pred, delta);
            }
            Op::BernoulliLogProb(logit, z) => {
                let gs = g.item();
                let l = self.value(*logit).item();
                let shape = self.value(*logit).shape().to_vec();
                let delta = Tensor::new(shape, vec![(z - sigmoid(l)) * gs]).unwrap();
                accumulate(grads, *logit, delta);
            }
        }
    }
}

impl Tensor {
    fn vector_like(other: &Tensor, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            shape: other.shape.clone(),
            values: other.values.iter().map(|v| f(*v)).collect(),
        }
    }
}

/// Gradients produced by [`Tape::backward`], indexed by node.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient of the loss with respect to `id`, if the node is
    /// reachable from the loss.
    pub fn get(&self, id: NodeId) -> Option<&Tensor> {
        self.grads.get(id.0).and_then(|g| g.as_ref())
    }

    /// Like [`Gradients::get`] but returns zeros of the given shape for
    /// nodes the loss does not depend on.
    pub fn get_or_zeros(&self, id: NodeId, shape: &[usize]) -> Tensor {
        match self.get(id) {
            Some(g) => g.clone(),
            None => Tensor::zeros(shape.to_vec()),
        }
    }
}

/// Central-difference step used by [`grad_check`].
pub const GRAD_CHECK_STEP: f64 = 1e-5;

/// Outcome of comparing analytic gradients to central differences.
/// A failed check is reported, not raised.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub tolerance: f64,
    pub passed: bool,
    /// Worst relative error per parameter, in input order.
    pub per_param: Vec<f64>,
}

/// Compares the tape gradient of `f` against central finite differences.
///
/// `f` receives a fresh tape plus one leaf per entry of `params` and
/// returns the scalar loss node. The relative error for a parameter is
/// the worst component difference normalized by the larger of the two
/// gradient infinity-norms, so parameters with uniformly zero gradients
/// compare exactly.
pub fn grad_check<F>(f: F, params: &[Tensor], tolerance: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &[NodeId]) -> Result<NodeId>,
{
    let eval = |tensors: &[Tensor]| -> Result<f64> {
        let mut tape = Tape::new();
        let ids: Vec<NodeId> = tensors.iter().map(|t| tape.leaf(t.clone())).collect();
        let loss = f(&mut tape, &ids)?;
        Ok(tape.value(loss).item())
    };

    // Analytic pass.
    let mut tape = Tape::new();
    let ids: Vec<NodeId> = params.iter().map(|t| tape.leaf(t.clone())).collect();
    let loss = f(&mut tape, &ids)?;
    let grads = tape.backward(loss)?;

    let mut per_param = Vec::with_capacity(params.len());
    let mut work: Vec<Tensor> = params.to_vec();
    for (pi, id) in ids.iter().enumerate() {
        let analytic = grads.get_or_zeros(*id, params[pi].shape());
        let mut numeric = Vec::with_capacity(params[pi].numel());
        for j in 0..params[pi].numel() {
            let orig = work[pi].values()[j];
            work[pi].values_mut()[j] = orig + GRAD_CHECK_STEP;
            let plus = eval(&work)?;
            work[pi].values_mut()[j] = orig - GRAD_CHECK_STEP;
            let minus = eval(&work)?;
            work[pi].values_mut()[j] = orig;
            numeric.push((plus - minus) / (2.0 * GRAD_CHECK_STEP));
        }
        let scale = analytic
            .values()
            .iter()
            .chain(numeric.iter())
            .fold(0.0f64, |m, v| m.max(v.abs()))
            .max(1e-12);
        let worst = analytic
            .values()
            .iter()
            .zip(&numeric)
            .fold(0.0f64, |m, (a, n)| m.max((a - n).abs()))
            / scale;
        per_param.push(worst);
    }

    let max_rel_error = per_param.iter().cloned().fold(0.0, f64::max);
    Ok(GradCheckReport {
        max_rel_error,
        tolerance,
        passed: max_rel_error <= tolerance,
        per_param,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assert_close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b} (tol {tol})");
    }

    #[test]
    fn matmul_identity() {
        let i = Tensor::matrix(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let v = Tensor::matrix(2, 1, vec![3.0, 4.0]).unwrap();
        assert_eq!(i.matmul(&v).unwrap().values(), &[3.0, 4.0]);
    }

    #[test]
    fn matmul_hand_arithmetic() {
        let a = Tensor::matrix(1, 2, vec![1.0, 2.0]).unwrap();
        let b = Tensor::matrix(2, 1, vec![3.0, 4.0]).unwrap();
        assert_eq!(a.matmul(&b).unwrap().values(), &[11.0]);
    }

    #[test]
    fn matmul_shape_mismatch_names_both_shapes() {
        let a = Tensor::matrix(2, 3, vec![0.0; 6]).unwrap();
        let b = Tensor::matrix(2, 2, vec![0.0; 4]).unwrap();
        let err = a.matmul(&b).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("[2, 3]") && msg.contains("[2, 2]"), "{msg}");
    }

    #[test]
    fn matmul_gradient_matches_finite_differences() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let a = Tensor::new(vec![5, 4], (0..20).map(|_| rng.gen_range(-2.0..2.0)).collect())
            .unwrap();
        let b = Tensor::new(vec![4, 3], (0..12).map(|_| rng.gen_range(-2.0..2.0)).collect())
            .unwrap();
        // Reduce with a fixed weight vector so the loss is scalar.
        let report = grad_check(
            |tape, ids| {
                let prod = tape.matmul(ids[0], ids[1])?;
                let m = Tensor::new(vec![5, 3], (1..=15).map(|i| i as f64 / 5.0).collect())?;
                let weighted = tape.mask(prod, &m)?;
                // Sum all entries: mask with ones then multiply by a ones
                // "vector" via concat trick is overkill; use matmul with
                // ones matrices instead.
                let ones_l = tape.leaf(Tensor::matrix(1, 5, vec![1.0; 5])?);
                let ones_r = tape.leaf(Tensor::matrix(3, 1, vec![1.0; 3])?);
                let rowsum = tape.matmul(ones_l, weighted)?;
                tape.matmul(rowsum, ones_r)
            },
            &[a, b],
            1e-6,
        )
        .unwrap();
        assert!(report.passed, "max rel error {}", report.max_rel_error);
    }

    #[test]
    fn tanh_and_sigmoid_at_zero() {
        assert_eq!(Tensor::scalar(0.0).tanh().item(), 0.0);
        assert_eq!(Tensor::scalar(0.0).sigmoid().item(), 0.5);
    }

    #[test]
    fn tanh_gradient_at_0_3() {
        let report = grad_check(
            |tape, ids| Ok(tape.tanh(ids[0])),
            &[Tensor::scalar(0.3)],
            1e-8,
        )
        .unwrap();
        assert!(report.passed, "max rel error {}", report.max_rel_error);
    }

    #[test]
    fn softmax_nll_uniform_two_class() {
        let loss = softmax_nll_value(&Tensor::vector(vec![0.0, 0.0]), 0).unwrap();
        assert_close(loss, std::f64::consts::LN_2, 1e-12);
    }

    #[test]
    fn softmax_nll_extreme_logits_do_not_overflow() {
        let loss = softmax_nll_value(&Tensor::vector(vec![1000.0, 0.0]), 0).unwrap();
        assert!(loss.is_finite() && (0.0..1e-9).contains(&loss), "{loss}");
    }

    #[test]
    fn softmax_nll_gold_out_of_range() {
        let err = softmax_nll_value(&Tensor::vector(vec![0.0, 0.0]), 2).unwrap_err();
        assert!(matches!(err, Error::Index(_)));
    }

    #[test]
    fn softmax_nll_gradient_is_probs_minus_onehot() {
        let logits = Tensor::vector(vec![0.4, -1.2, 0.7]);
        let mut tape = Tape::new();
        let l = tape.leaf(logits.clone());
        let loss = tape.softmax_nll(l, 1).unwrap();
        let grads = tape.backward(loss).unwrap();
        let g = grads.get(l).unwrap();
        let probs = logits.softmax();
        for k in 0..3 {
            let expect = probs.values()[k] - if k == 1 { 1.0 } else { 0.0 };
            assert_close(g.values()[k], expect, 1e-12);
        }
        // And the analytic identity itself agrees with finite differences.
        let report = grad_check(
            |tape, ids| tape.softmax_nll(ids[0], 1),
            &[logits],
            1e-7,
        )
        .unwrap();
        assert!(report.passed, "max rel error {}", report.max_rel_error);
    }

    #[test]
    fn mse_values_and_gradient() {
        let mut tape = Tape::new();
        let p = tape.leaf(Tensor::scalar(3.0));
        let loss = tape.mse(p, 3.0).unwrap();
        assert_eq!(tape.value(loss).item(), 0.0);

        let mut tape = Tape::new();
        let p = tape.leaf(Tensor::scalar(2.0));
        let loss = tape.mse(p, 0.0).unwrap();
        assert_eq!(tape.value(loss).item(), 4.0);

        let report = grad_check(
            |tape, ids| tape.mse(ids[0], 1.25),
            &[Tensor::scalar(0.6)],
            1e-8,
        )
        .unwrap();
        assert!(report.passed, "max rel error {}", report.max_rel_error);
    }

    #[test]
    fn backward_rejects_non_scalar_loss() {
        let mut tape = Tape::new();
        let v = tape.leaf(Tensor::vector(vec![1.0, 2.0]));
        let err = tape.backward(v).unwrap_err();
        assert!(matches!(err, Error::Contract(_)));
    }

    #[test]
    fn gradient_accumulates_across_uses() {
        // loss = x + x: gradient must be exactly twice the single-use one.
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::scalar(1.5));
        let loss = tape.add(x, x).unwrap();
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.get(x).unwrap().item(), 2.0);
    }

    #[test]
    fn grad_check_linear_is_essentially_exact() {
        let report = grad_check(
            |tape, ids| {
                let w = tape.leaf(Tensor::matrix(1, 3, vec![2.0, -1.0, 0.5]).unwrap());
                let y = tape.matvec(w, ids[0])?;
                tape.mse(y, 0.0)
            },
            &[Tensor::vector(vec![0.3, 0.1, -0.2])],
            1e-6,
        )
        .unwrap();
        // Not exactly linear (squared), but smooth; the dedicated linear
        // case below pins the 1e-10 claim.
        assert!(report.passed);

        let linear = grad_check(
            |tape, ids| {
                let w = tape.leaf(Tensor::matrix(1, 3, vec![2.0, -1.0, 0.5]).unwrap());
                tape.matvec(w, ids[0])
            },
            &[Tensor::vector(vec![0.3, 0.1, -0.2])],
            1e-10,
        )
        .unwrap();
        assert!(linear.passed, "max rel error {}", linear.max_rel_error);
    }

    #[test]
    fn grad_check_two_layer_tanh_net() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let w1 = Tensor::new(vec![4, 3], (0..12).map(|_| rng.gen_range(-2.0..2.0)).collect())
            .unwrap();
        let w2 = Tensor::new(vec![2, 4], (0..8).map(|_| rng.gen_range(-2.0..2.0)).collect())
            .unwrap();
        let x = Tensor::vector(vec![0.2, -0.4, 0.9]);
        let report = grad_check(
            |tape, ids| {
                let xin = tape.leaf(x.clone());
                let h1 = tape.matvec(ids[0], xin)?;
                let a1 = tape.tanh(h1);
                let h2 = tape.matvec(ids[1], a1)?;
                let a2 = tape.tanh(h2);
                tape.softmax_nll(a2, 0)
            },
            &[w1, w2],
            1e-4,
        )
        .unwrap();
        assert!(report.passed, "max rel error {}", report.max_rel_error);
    }

    #[test]
    fn grad_check_constant_function_zero_both_ways() {
        let report = grad_check(
            |tape, _ids| {
                let c = tape.leaf(Tensor::scalar(4.0));
                Ok(tape.scale(c, 1.0))
            },
            &[Tensor::vector(vec![1.0, 2.0])],
            1e-10,
        )
        .unwrap();
        assert_eq!(report.max_rel_error, 0.0);
        assert!(report.passed);
    }

    #[test]
    fn bernoulli_log_prob_matches_closed_form_and_gradient() {
        let l = 0.8;
        let mut tape = Tape::new();
        let logit = tape.leaf(Tensor::scalar(l));
        let lp1 = tape.bernoulli_log_prob(logit, true).unwrap();
        let lp0 = tape.bernoulli_log_prob(logit, false).unwrap();
        let p = 1.0 / (1.0 + (-l).exp());
        assert_close(tape.value(lp1).item(), p.ln(), 1e-12);
        assert_close(tape.value(lp0).item(), (1.0 - p).ln(), 1e-12);

        for z in [true, false] {
            let report = grad_check(
                |tape, ids| tape.bernoulli_log_prob(ids[0], z),
                &[Tensor::scalar(-0.4)],
                1e-7,
            )
            .unwrap();
            assert!(report.passed, "z={z}: {}", report.max_rel_error);
        }
    }

    #[test]
    fn concat_row_and_mask_gradients() {
        let m = Tensor::matrix(3, 2, vec![0.5, -1.0, 2.0, 0.1, -0.3, 0.7]).unwrap();
        let report = grad_check(
            |tape, ids| {
                let r0 = tape.row(ids[0], 0)?;
                let r2 = tape.row(ids[0], 2)?;
                let cat = tape.concat(&[r0, r2])?;
                let masked = tape.mask(cat, &Tensor::vector(vec![1.0, 0.0, 2.0, 1.0]))?;
                let w = tape.leaf(Tensor::matrix(1, 4, vec![1.0, 1.0, 1.0, 1.0])?);
                let s = tape.matvec(w, masked)?;
                tape.mse(s, 0.2)
            },
            &[m],
            1e-6,
        )
        .unwrap();
        assert!(report.passed, "max rel error {}", report.max_rel_error);
    }

    #[test]
    fn replay_is_bit_identical() {
        let run = || {
            let mut tape = Tape::new();
            let x = tape.leaf(Tensor::vector(vec![0.1, 0.2, 0.3]));
            let w = tape.leaf(Tensor::matrix(2, 3, vec![0.4, 0.5, 0.6, 0.7, 0.8, 0.9]).unwrap());
            let h = tape.matvec(w, x).unwrap();
            let a = tape.tanh(h);
            let loss = tape.softmax_nll(a, 1).unwrap();
            let grads = tape.backward(loss).unwrap();
            (
                tape.value(loss).item(),
                grads.get(w).unwrap().values().to_vec(),
            )
        };
        let (l1, g1) = run();
        let (l2, g2) = run();
        assert!(l1.to_bits() == l2.to_bits());
        assert!(g1.iter().zip(&g2).all(|(a, b)| a.to_bits() == b.to_bits()));
    }
}
