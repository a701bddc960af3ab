//! Tape-based reverse-mode differentiation over [`Tensor`] values.
//!
//! A [`Tape`] records one forward pass as an append-only list of primitive
//! operations. Node indices are a topological order by construction, so
//! [`Tape::backward`] visits each node exactly once in reverse insertion
//! order and accumulates adjoints into the parents. Every operation checks
//! its output for non-finite values and its inputs for shape compatibility.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;
use crate::tensor::Tensor;

/// Handle to a value recorded on a tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ValueId(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Matmul(ValueId, ValueId),
    Add(ValueId, ValueId),
    Sub(ValueId, ValueId),
    Mul(ValueId, ValueId),
    Scale(ValueId, f64),
    /// Broadcast-add a rank-1 bias over every row of a rank-2 input.
    AddRow(ValueId, ValueId),
    Relu(ValueId),
    Tanh(ValueId),
    Sigmoid(ValueId),
    Abs(ValueId),
    /// Row-wise softmax of a rank-2 input.
    SoftmaxRows(ValueId),
    /// Sum over the column axis: [n, f] -> [n, 1].
    SumRows(ValueId),
    SumAll(ValueId),
    MeanAll(ValueId),
    ConcatRows(Vec<ValueId>),
    ConcatCols(Vec<ValueId>),
    /// Stack same-shape rank-2 tensors along a new leading axis, stored
    /// flattened as [k * n, f].
    Stack(Vec<ValueId>),
    SliceRows(ValueId, usize, usize),
    GatherRows(ValueId, Vec<usize>),
    Reshape(ValueId),
}

struct Node {
    value: Tensor,
    op: Op,
}

/// Recorder for one forward pass.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Tape {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// The forward value of a recorded node.
    pub fn value(&self, id: ValueId) -> &Tensor {
        &self.nodes[id.0].value
    }

    /// Record an input value (parameter or data); gradients accumulate here.
    pub fn leaf(&mut self, value: Tensor) -> ValueId {
        self.push_unchecked(value, Op::Leaf)
    }

    fn push_unchecked(&mut self, value: Tensor, op: Op) -> ValueId {
        self.nodes.push(Node { value, op });
        ValueId(self.nodes.len() - 1)
    }

    fn push(&mut self, value: Tensor, op: Op, what: &str) -> Result<ValueId> {
        if !value.all_finite() {
            return Err(Error::Numeric(format!("{what} produced a non-finite value")));
        }
        Ok(self.push_unchecked(value, op))
    }

    pub fn matmul(&mut self, a: ValueId, b: ValueId) -> Result<ValueId> {
        let value = self.value(a).matmul(self.value(b))?;
        self.push(value, Op::Matmul(a, b), "matmul")
    }

    pub fn add(&mut self, a: ValueId, b: ValueId) -> Result<ValueId> {
        let value = self.value(a).zip_with(self.value(b), |x, y| x + y)?;
        self.push(value, Op::Add(a, b), "add")
    }

    pub fn sub(&mut self, a: ValueId, b: ValueId) -> Result<ValueId> {
        let value = self.value(a).zip_with(self.value(b), |x, y| x - y)?;
        self.push(value, Op::Sub(a, b), "sub")
    }

    pub fn mul(&mut self, a: ValueId, b: ValueId) -> Result<ValueId> {
        let value = self.value(a).zip_with(self.value(b), |x, y| x * y)?;
        self.push(value, Op::Mul(a, b), "mul")
    }

    pub fn scale(&mut self, a: ValueId, factor: f64) -> Result<ValueId> {
        let value = self.value(a).map(|x| factor * x);
        self.push(value, Op::Scale(a, factor), "scale")
    }

    /// `x + bias` with `x: [n, d]` and `bias: [d]`, broadcast over rows.
    pub fn add_row(&mut self, x: ValueId, bias: ValueId) -> Result<ValueId> {
        let (n, d) = self.value(x).dims2()?;
        let b = self.value(bias);
        if b.shape() != [d] {
            return Err(Error::Dimension(format!(
                "bias shape {:?} does not broadcast over rows of {:?}",
                b.shape(),
                self.value(x).shape()
            )));
        }
        let mut out = self.value(x).clone();
        for i in 0..n {
            for (o, &bv) in out.data_mut()[i * d..(i + 1) * d].iter_mut().zip(b.data()) {
                *o += bv;
            }
        }
        self.push(out, Op::AddRow(x, bias), "add_row")
    }

    pub fn relu(&mut self, x: ValueId) -> Result<ValueId> {
        let value = self.value(x).map(|v| if v > 0.0 { v } else { 0.0 });
        self.push(value, Op::Relu(x), "relu")
    }

    pub fn tanh(&mut self, x: ValueId) -> Result<ValueId> {
        let value = self.value(x).map(math::tanh);
        self.push(value, Op::Tanh(x), "tanh")
    }

    pub fn sigmoid(&mut self, x: ValueId) -> Result<ValueId> {
        let value = self.value(x).map(math::sigmoid);
        self.push(value, Op::Sigmoid(x), "sigmoid")
    }

    pub fn abs(&mut self, x: ValueId) -> Result<ValueId> {
        let value = self.value(x).map(math::abs);
        self.push(value, Op::Abs(x), "abs")
    }

    /// Row-wise softmax of `[n, f]`, numerically stabilized by the row max.
    pub fn softmax_rows(&mut self, x: ValueId) -> Result<ValueId> {
        let (n, f) = self.value(x).dims2()?;
        let mut out = self.value(x).clone();
        for i in 0..n {
            let row = &mut out.data_mut()[i * f..(i + 1) * f];
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for v in row.iter_mut() {
                *v = math::exp(*v - max);
                total += *v;
            }
            for v in row.iter_mut() {
                *v /= total;
            }
        }
        self.push(out, Op::SoftmaxRows(x), "softmax")
    }

    /// Sum over columns: `[n, f] -> [n, 1]`.
    pub fn sum_rows(&mut self, x: ValueId) -> Result<ValueId> {
        let (n, f) = self.value(x).dims2()?;
        let data = (0..n)
            .map(|i| self.value(x).data()[i * f..(i + 1) * f].iter().sum())
            .collect();
        let value = Tensor::from_vec(&[n, 1], data)?;
        self.push(value, Op::SumRows(x), "sum_rows")
    }

    pub fn sum_all(&mut self, x: ValueId) -> Result<ValueId> {
        let value = Tensor::scalar(self.value(x).data().iter().sum());
        self.push(value, Op::SumAll(x), "sum_all")
    }

    pub fn mean_all(&mut self, x: ValueId) -> Result<ValueId> {
        let len = self.value(x).len();
        if len == 0 {
            return Err(Error::DegenerateInput("mean of an empty tensor".into()));
        }
        let value = Tensor::scalar(self.value(x).data().iter().sum::<f64>() / len as f64);
        self.push(value, Op::MeanAll(x), "mean_all")
    }

    /// Concatenate rank-2 tensors along rows (all column counts equal).
    pub fn concat_rows(&mut self, xs: &[ValueId]) -> Result<ValueId> {
        if xs.is_empty() {
            return Err(Error::DegenerateInput("concat of zero tensors".into()));
        }
        let (_, cols) = self.value(xs[0]).dims2()?;
        let mut data = Vec::new();
        let mut rows = 0;
        for &x in xs {
            let (r, c) = self.value(x).dims2()?;
            if c != cols {
                return Err(Error::Dimension(format!(
                    "concat_rows column mismatch: {cols} vs {c}"
                )));
            }
            rows += r;
            data.extend_from_slice(self.value(x).data());
        }
        let value = Tensor::from_vec(&[rows, cols], data)?;
        self.push(value, Op::ConcatRows(xs.to_vec()), "concat_rows")
    }

    /// Concatenate rank-2 tensors along columns (all row counts equal).
    pub fn concat_cols(&mut self, xs: &[ValueId]) -> Result<ValueId> {
        if xs.is_empty() {
            return Err(Error::DegenerateInput("concat of zero tensors".into()));
        }
        let (rows, _) = self.value(xs[0]).dims2()?;
        let mut widths = Vec::with_capacity(xs.len());
        for &x in xs {
            let (r, c) = self.value(x).dims2()?;
            if r != rows {
                return Err(Error::Dimension(format!(
                    "concat_cols row mismatch: {rows} vs {r}"
                )));
            }
            widths.push(c);
        }
        let total: usize = widths.iter().sum();
        let mut data = vec![0.0; rows * total];
        let mut offset = 0;
        for (&x, &w) in xs.iter().zip(&widths) {
            let src = self.value(x).data();
            for i in 0..rows {
                data[i * total + offset..i * total + offset + w]
                    .copy_from_slice(&src[i * w..(i + 1) * w]);
            }
            offset += w;
        }
        let value = Tensor::from_vec(&[rows, total], data)?;
        self.push(value, Op::ConcatCols(xs.to_vec()), "concat_cols")
    }

    /// Stack same-shape rank-2 tensors along a new leading axis; the result
    /// is stored flattened as `[k * n, f]`.
    pub fn stack(&mut self, xs: &[ValueId]) -> Result<ValueId> {
        if xs.is_empty() {
            return Err(Error::DegenerateInput("stack of zero tensors".into()));
        }
        let shape = self.value(xs[0]).shape().to_vec();
        for &x in xs {
            if self.value(x).shape() != shape {
                return Err(Error::Dimension(format!(
                    "stack shape mismatch: {:?} vs {:?}",
                    shape,
                    self.value(x).shape()
                )));
            }
        }
        let (n, f) = self.value(xs[0]).dims2()?;
        let mut data = Vec::with_capacity(xs.len() * n * f);
        for &x in xs {
            data.extend_from_slice(self.value(x).data());
        }
        let value = Tensor::from_vec(&[xs.len() * n, f], data)?;
        self.push(value, Op::Stack(xs.to_vec()), "stack")
    }

    /// A contiguous block of rows from a rank-2 tensor.
    pub fn slice_rows(&mut self, x: ValueId, start: usize, len: usize) -> Result<ValueId> {
        let (n, f) = self.value(x).dims2()?;
        if start + len > n {
            return Err(Error::Dimension(format!(
                "slice rows {start}..{} out of bounds for {n} rows",
                start + len
            )));
        }
        let data = self.value(x).data()[start * f..(start + len) * f].to_vec();
        let value = Tensor::from_vec(&[len, f], data)?;
        self.push(value, Op::SliceRows(x, start, len), "slice_rows")
    }

    /// Select rows by index (repeats allowed); the adjoint scatter-adds.
    pub fn gather_rows(&mut self, x: ValueId, indices: &[usize]) -> Result<ValueId> {
        let (n, f) = self.value(x).dims2()?;
        if let Some(&bad) = indices.iter().find(|&&i| i >= n) {
            return Err(Error::Dimension(format!(
                "gather index {bad} out of bounds for {n} rows"
            )));
        }
        let mut data = Vec::with_capacity(indices.len() * f);
        for &i in indices {
            data.extend_from_slice(&self.value(x).data()[i * f..(i + 1) * f]);
        }
        let value = Tensor::from_vec(&[indices.len(), f], data)?;
        self.push(value, Op::GatherRows(x, indices.to_vec()), "gather_rows")
    }

    pub fn reshape(&mut self, x: ValueId, shape: &[usize]) -> Result<ValueId> {
        let value = self.value(x).reshaped(shape)?;
        self.push(value, Op::Reshape(x), "reshape")
    }

    /// Reverse pass from a scalar loss; returns per-node adjoints.
    pub fn backward(&self, loss: ValueId) -> Result<Gradients> {
        if self.value(loss).len() != 1 {
            return Err(Error::Dimension(format!(
                "backward needs a scalar loss, shape is {:?}",
                self.value(loss).shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::filled(self.value(loss).shape(), 1.0));
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            self.propagate(i, &g, &mut grads)?;
            if matches!(self.nodes[i].op, Op::Leaf) {
                grads[i] = Some(g);
            }
        }
        Ok(Gradients { grads })
    }

    fn accumulate(
        &self,
        grads: &mut [Option<Tensor>],
        target: ValueId,
        update: impl FnOnce(&mut Tensor) -> Result<()>,
    ) -> Result<()> {
        let slot = &mut grads[target.0];
        if slot.is_none() {
            *slot = Some(Tensor::zeros(self.nodes[target.0].value.shape()));
        }
        update(slot.as_mut().expect("just initialized"))
    }

    fn propagate(&self, i: usize, g: &Tensor, grads: &mut [Option<Tensor>]) -> Result<()> {
        let node = &self.nodes[i];
        match &node.op {
            Op::Leaf => {}
            Op::Matmul(a, b) => {
                let da = g.matmul_nt(&self.nodes[b.0].value)?;
                self.accumulate(grads, *a, |t| t.add_scaled_assign(&da, 1.0))?;
                let db = self.nodes[a.0].value.matmul_tn(g)?;
                self.accumulate(grads, *b, |t| t.add_scaled_assign(&db, 1.0))?;
            }
            Op::Add(a, b) => {
                self.accumulate(grads, *a, |t| t.add_scaled_assign(g, 1.0))?;
                self.accumulate(grads, *b, |t| t.add_scaled_assign(g, 1.0))?;
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, *a, |t| t.add_scaled_assign(g, 1.0))?;
                self.accumulate(grads, *b, |t| t.add_scaled_assign(g, -1.0))?;
            }
            Op::Mul(a, b) => {
                let da = g.zip_with(&self.nodes[b.0].value, |gv, bv| gv * bv)?;
                self.accumulate(grads, *a, |t| t.add_scaled_assign(&da, 1.0))?;
                let db = g.zip_with(&self.nodes[a.0].value, |gv, av| gv * av)?;
                self.accumulate(grads, *b, |t| t.add_scaled_assign(&db, 1.0))?;
            }
            Op::Scale(a, factor) => {
                self.accumulate(grads, *a, |t| t.add_scaled_assign(g, *factor))?;
            }
            Op::AddRow(x, bias) => {
                self.accumulate(grads, *x, |t| t.add_scaled_assign(g, 1.0))?;
                let (n, d) = g.dims2()?;
                let mut db = vec![0.0; d];
                for i in 0..n {
                    for (acc, &gv) in db.iter_mut().zip(&g.data()[i * d..(i + 1) * d]) {
                        *acc += gv;
                    }
                }
                let db = Tensor::from_vec(&[d], db)?;
                self.accumulate(grads, *bias, |t| t.add_scaled_assign(&db, 1.0))?;
            }
            Op::Relu(x) => {
                let dx = g.zip_with(&self.nodes[x.0].value, |gv, xv| {
                    if xv > 0.0 {
                        gv
                    } else {
                        0.0
                    }
                })?;
                self.accumulate(grads, *x, |t| t.add_scaled_assign(&dx, 1.0))?;
            }
            Op::Tanh(x) => {
                let dx = g.zip_with(&node.value, |gv, y| gv * (1.0 - y * y))?;
                self.accumulate(grads, *x, |t| t.add_scaled_assign(&dx, 1.0))?;
            }
            Op::Sigmoid(x) => {
                let dx = g.zip_with(&node.value, |gv, y| gv * y * (1.0 - y))?;
                self.accumulate(grads, *x, |t| t.add_scaled_assign(&dx, 1.0))?;
            }
            Op::Abs(x) => {
                // Subgradient 0 at the kink.
                let dx = g.zip_with(&self.nodes[x.0].value, |gv, xv| {
                    if xv > 0.0 {
                        gv
                    } else if xv < 0.0 {
                        -gv
                    } else {
                        0.0
                    }
                })?;
                self.accumulate(grads, *x, |t| t.add_scaled_assign(&dx, 1.0))?;
            }
            Op::SoftmaxRows(x) => {
                let (n, f) = node.value.dims2()?;
                let mut dx = vec![0.0; n * f];
                for r in 0..n {
                    let y = &node.value.data()[r * f..(r + 1) * f];
                    let gr = &g.data()[r * f..(r + 1) * f];
                    let dot: f64 = y.iter().zip(gr).map(|(&yv, &gv)| yv * gv).sum();
                    for ((d, &yv), &gv) in dx[r * f..(r + 1) * f].iter_mut().zip(y).zip(gr) {
                        *d = yv * (gv - dot);
                    }
                }
                let dx = Tensor::from_vec(&[n, f], dx)?;
                self.accumulate(grads, *x, |t| t.add_scaled_assign(&dx, 1.0))?;
            }
            Op::SumRows(x) => {
                let (n, f) = self.nodes[x.0].value.dims2()?;
                let mut dx = vec![0.0; n * f];
                for r in 0..n {
                    let gv = g.data()[r];
                    for d in &mut dx[r * f..(r + 1) * f] {
                        *d = gv;
                    }
                }
                let dx = Tensor::from_vec(&[n, f], dx)?;
                self.accumulate(grads, *x, |t| t.add_scaled_assign(&dx, 1.0))?;
            }
            Op::SumAll(x) => {
                let gv = g.data()[0];
                let shape = self.nodes[x.0].value.shape().to_vec();
                let dx = Tensor::filled(&shape, gv);
                self.accumulate(grads, *x, |t| t.add_scaled_assign(&dx, 1.0))?;
            }
            Op::MeanAll(x) => {
                let len = self.nodes[x.0].value.len();
                let gv = g.data()[0] / len as f64;
                let shape = self.nodes[x.0].value.shape().to_vec();
                let dx = Tensor::filled(&shape, gv);
                self.accumulate(grads, *x, |t| t.add_scaled_assign(&dx, 1.0))?;
            }
            Op::ConcatRows(xs) | Op::Stack(xs) => {
                let mut row = 0;
                for &x in xs {
                    let (r, f) = self.nodes[x.0].value.dims2()?;
                    let part =
                        Tensor::from_vec(&[r, f], g.data()[row * f..(row + r) * f].to_vec())?;
                    self.accumulate(grads, x, |t| t.add_scaled_assign(&part, 1.0))?;
                    row += r;
                }
            }
            Op::ConcatCols(xs) => {
                let (rows, total) = node.value.dims2()?;
                let mut offset = 0;
                for &x in xs {
                    let (_, w) = self.nodes[x.0].value.dims2()?;
                    let mut part = vec![0.0; rows * w];
                    for r in 0..rows {
                        part[r * w..(r + 1) * w].copy_from_slice(
                            &g.data()[r * total + offset..r * total + offset + w],
                        );
                    }
                    let part = Tensor::from_vec(&[rows, w], part)?;
                    self.accumulate(grads, x, |t| t.add_scaled_assign(&part, 1.0))?;
                    offset += w;
                }
            }
            Op::SliceRows(x, start, len) => {
                let (_, f) = self.nodes[x.0].value.dims2()?;
                let (start, len) = (*start, *len);
                self.accumulate(grads, *x, |t| {
                    for (d, &gv) in t.data_mut()[start * f..(start + len) * f]
                        .iter_mut()
                        .zip(g.data())
                    {
                        *d += gv;
                    }
                    Ok(())
                })?;
            }
            Op::GatherRows(x, indices) => {
                let (_, f) = self.nodes[x.0].value.dims2()?;
                self.accumulate(grads, *x, |t| {
                    for (k, &i) in indices.iter().enumerate() {
                        for (d, &gv) in t.data_mut()[i * f..(i + 1) * f]
                            .iter_mut()
                            .zip(&g.data()[k * f..(k + 1) * f])
                        {
                            *d += gv;
                        }
                    }
                    Ok(())
                })?;
            }
            Op::Reshape(x) => {
                let reshaped = g.reshaped(self.nodes[x.0].value.shape())?;
                self.accumulate(grads, *x, |t| t.add_scaled_assign(&reshaped, 1.0))?;
            }
        }
        Ok(())
    }
}

/// Adjoints from one backward pass, indexed by node.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, id: ValueId) -> Option<&Tensor> {
        self.grads.get(id.0).and_then(|g| g.as_ref())
    }

    /// The gradient for a leaf, or zeros when the loss never touched it.
    pub fn get_or_zeros(&self, id: ValueId, shape: &[usize]) -> Tensor {
        match self.get(id) {
            Some(g) => g.clone(),
            None => Tensor::zeros(shape),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{seeded, ChaCha8Rng};
    use rand::Rng;

    /// Central-difference oracle: perturbs every input scalar and compares
    /// against the tape's analytic gradients. Relative error uses a unit
    /// floor so near-zero gradients are compared absolutely.
    fn check_gradients(
        build: impl Fn(&mut Tape, &[Tensor]) -> ValueId,
        inputs: &[Tensor],
        tol: f64,
    ) {
        let eval = |inputs: &[Tensor]| -> f64 {
            let mut tape = Tape::new();
            let loss = build(&mut tape, inputs);
            tape.value(loss).item().unwrap()
        };
        let mut tape = Tape::new();
        let loss = build(&mut tape, inputs);
        let leaf_ids: Vec<ValueId> = (0..inputs.len()).map(ValueId).collect();
        let grads = tape.backward(loss).unwrap();

        let h = 1e-5;
        for (which, input) in inputs.iter().enumerate() {
            let analytic = grads.get_or_zeros(leaf_ids[which], input.shape());
            for j in 0..input.len() {
                let mut plus = inputs.to_vec();
                plus[which].data_mut()[j] += h;
                let mut minus = inputs.to_vec();
                minus[which].data_mut()[j] -= h;
                let numeric = (eval(&plus) - eval(&minus)) / (2.0 * h);
                let a = analytic.data()[j];
                let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1.0);
                assert!(
                    err < tol,
                    "input {which} element {j}: analytic {a}, numeric {numeric}, err {err}"
                );
            }
        }
    }

    /// Random tensor with entries bounded away from zero so kinked ops
    /// (relu, abs) stay differentiable at the probe points.
    fn random_tensor(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
        let data = (0..shape.iter().product())
            .map(|_| {
                let sign = if rng.random::<f64>() < 0.5 { -1.0 } else { 1.0 };
                sign * (0.1 + 0.9 * rng.random::<f64>())
            })
            .collect();
        Tensor::from_vec(shape, data).unwrap()
    }

    /// Reduce an arbitrary output to a scalar through a fixed random
    /// weighting, so adjoint mistakes cannot cancel out.
    fn weighted_sum(tape: &mut Tape, out: ValueId, rng: &mut ChaCha8Rng) -> ValueId {
        let shape = tape.value(out).shape().to_vec();
        let w = random_tensor(&shape, rng);
        let w = tape.leaf(w);
        let prod = tape.mul(out, w).unwrap();
        tape.sum_all(prod).unwrap()
    }

    #[test]
    fn softmax_of_equal_scores_is_uniform() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::from_vec(&[1, 3], vec![0.0, 0.0, 0.0]).unwrap());
        let s = tape.softmax_rows(x).unwrap();
        for &v in tape.value(s).data() {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn relu_matches_definition() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::from_vec(&[1, 3], vec![-1.0, 0.0, 2.0]).unwrap());
        let y = tape.relu(x).unwrap();
        assert_eq!(tape.value(y).data(), &[0.0, 0.0, 2.0]);
    }

    #[test]
    fn every_primitive_passes_finite_difference_check() {
        let tol = 1e-6;
        let mut rng = seeded(2024, "fd-primitives");

        // matmul
        let a = random_tensor(&[3, 4], &mut rng);
        let b = random_tensor(&[4, 2], &mut rng);
        check_gradients(
            |tape, ins| {
                let a = tape.leaf(ins[0].clone());
                let b = tape.leaf(ins[1].clone());
                let c = tape.matmul(a, b).unwrap();
                let mut w = seeded(7, "w-matmul");
                weighted_sum(tape, c, &mut w)
            },
            &[a, b],
            tol,
        );

        // add / sub / mul
        let x = random_tensor(&[3, 4], &mut rng);
        let y = random_tensor(&[3, 4], &mut rng);
        for op in ["add", "sub", "mul"] {
            check_gradients(
                |tape, ins| {
                    let a = tape.leaf(ins[0].clone());
                    let b = tape.leaf(ins[1].clone());
                    let c = match op {
                        "add" => tape.add(a, b).unwrap(),
                        "sub" => tape.sub(a, b).unwrap(),
                        _ => tape.mul(a, b).unwrap(),
                    };
                    let mut w = seeded(8, op);
                    weighted_sum(tape, c, &mut w)
                },
                &[x.clone(), y.clone()],
                tol,
            );
        }

        // scale
        check_gradients(
            |tape, ins| {
                let a = tape.leaf(ins[0].clone());
                let c = tape.scale(a, -1.7).unwrap();
                let mut w = seeded(9, "w-scale");
                weighted_sum(tape, c, &mut w)
            },
            &[x.clone()],
            tol,
        );

        // add_row
        let bias = random_tensor(&[4], &mut rng);
        check_gradients(
            |tape, ins| {
                let a = tape.leaf(ins[0].clone());
                let b = tape.leaf(ins[1].clone());
                let c = tape.add_row(a, b).unwrap();
                let mut w = seeded(10, "w-bias");
                weighted_sum(tape, c, &mut w)
            },
            &[x.clone(), bias],
            tol,
        );

        // unary ops
        for op in ["relu", "tanh", "sigmoid", "abs"] {
            check_gradients(
                |tape, ins| {
                    let a = tape.leaf(ins[0].clone());
                    let c = match op {
                        "relu" => tape.relu(a).unwrap(),
                        "tanh" => tape.tanh(a).unwrap(),
                        "sigmoid" => tape.sigmoid(a).unwrap(),
                        _ => tape.abs(a).unwrap(),
                    };
                    let mut w = seeded(11, op);
                    weighted_sum(tape, c, &mut w)
                },
                &[x.clone()],
                tol,
            );
        }

        // softmax
        check_gradients(
            |tape, ins| {
                let a = tape.leaf(ins[0].clone());
                let c = tape.softmax_rows(a).unwrap();
                let mut w = seeded(12, "w-softmax");
                weighted_sum(tape, c, &mut w)
            },
            &[x.clone()],
            tol,
        );

        // reductions
        for op in ["sum_rows", "sum_all", "mean_all"] {
            check_gradients(
                |tape, ins| {
                    let a = tape.leaf(ins[0].clone());
                    let c = match op {
                        "sum_rows" => tape.sum_rows(a).unwrap(),
                        "sum_all" => tape.sum_all(a).unwrap(),
                        _ => tape.mean_all(a).unwrap(),
                    };
                    let mut w = seeded(13, op);
                    weighted_sum(tape, c, &mut w)
                },
                &[x.clone()],
                tol,
            );
        }

        // concat / stack
        let p = random_tensor(&[2, 3], &mut rng);
        let q = random_tensor(&[2, 3], &mut rng);
        for op in ["concat_rows", "concat_cols", "stack"] {
            check_gradients(
                |tape, ins| {
                    let a = tape.leaf(ins[0].clone());
                    let b = tape.leaf(ins[1].clone());
                    let c = match op {
                        "concat_rows" => tape.concat_rows(&[a, b]).unwrap(),
                        "concat_cols" => tape.concat_cols(&[a, b]).unwrap(),
                        _ => tape.stack(&[a, b]).unwrap(),
                    };
                    let mut w = seeded(14, op);
                    weighted_sum(tape, c, &mut w)
                },
                &[p.clone(), q.clone()],
                tol,
            );
        }

        // slice / gather (with a repeated index to exercise scatter-add)
        let big = random_tensor(&[5, 3], &mut rng);
        check_gradients(
            |tape, ins| {
                let a = tape.leaf(ins[0].clone());
                let c = tape.slice_rows(a, 1, 3).unwrap();
                let mut w = seeded(15, "w-slice");
                weighted_sum(tape, c, &mut w)
            },
            &[big.clone()],
            tol,
        );
        check_gradients(
            |tape, ins| {
                let a = tape.leaf(ins[0].clone());
                let c = tape.gather_rows(a, &[0, 2, 2, 4]).unwrap();
                let mut w = seeded(16, "w-gather");
                weighted_sum(tape, c, &mut w)
            },
            &[big.clone()],
            tol,
        );

        // reshape
        check_gradients(
            |tape, ins| {
                let a = tape.leaf(ins[0].clone());
                let c = tape.reshape(a, &[3, 5]).unwrap();
                let mut w = seeded(17, "w-reshape");
                weighted_sum(tape, c, &mut w)
            },
            &[big],
            tol,
        );
    }

    #[test]
    fn unused_leaf_has_no_gradient() {
        let mut tape = Tape::new();
        let used = tape.leaf(Tensor::from_vec(&[1, 2], vec![1.0, 2.0]).unwrap());
        let unused = tape.leaf(Tensor::from_vec(&[1, 2], vec![3.0, 4.0]).unwrap());
        let loss = tape.sum_all(used).unwrap();
        let grads = tape.backward(loss).unwrap();
        assert!(grads.get(unused).is_none());
        let zeros = grads.get_or_zeros(unused, &[1, 2]);
        assert_eq!(zeros.data(), &[0.0, 0.0]);
        assert_eq!(grads.get(used).unwrap().data(), &[1.0, 1.0]);
    }

    #[test]
    fn shared_subexpression_accumulates_both_paths() {
        // loss = sum(x*x) + sum(x) has gradient 2x + 1.
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::from_vec(&[1, 3], vec![1.0, -2.0, 0.5]).unwrap());
        let sq = tape.mul(x, x).unwrap();
        let s1 = tape.sum_all(sq).unwrap();
        let s2 = tape.sum_all(x).unwrap();
        let loss = tape.add(s1, s2).unwrap();
        let grads = tape.backward(loss).unwrap();
        let g = grads.get(x).unwrap();
        assert_eq!(g.data(), &[3.0, -3.0, 2.0]);
    }

    #[test]
    fn non_finite_output_is_a_numeric_error() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::from_vec(&[1, 1], vec![1e308]).unwrap());
        let doubled = tape.add(x, x);
        assert!(matches!(doubled, Err(Error::Numeric(_))));
    }

    #[test]
    fn backward_requires_scalar_loss() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::zeros(&[2, 2]));
        assert!(matches!(tape.backward(x), Err(Error::Dimension(_))));
    }
}
