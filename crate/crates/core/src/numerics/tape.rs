//! Reverse-mode gradient tape over [`Tensor`] values.
//!
//! Every primitive appends one node holding its forward value. `backward`
//! walks the nodes from the loss back to the first node and accumulates
//! adjoints; parameter leaves then deposit their adjoint into the owning
//! [`ParamStore`].

use std::collections::HashMap;

use rand::Rng;

use super::tensor::{self, Tensor};
use super::{ParamId, ParamStore};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Input,
    Param,
    MatVec(Var, Var),
    Dot(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    /// vector times a scalar node
    Scale(Var, Var),
    MulConst(Var, Vec<f64>),
    Tanh(Var),
    Sigmoid(Var),
    Softmax(Var),
    Concat(Vec<Var>),
    Element(Var, usize),
    MeanPool(Vec<Var>),
    WeightedSum(Var, Vec<Var>),
    SumSquares(Var),
    NegLogAt(Var, usize, f64),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    param_vars: HashMap<ParamId, Var>,
}

/// Adjoints for every node of a tape after a backward sweep.
#[derive(Debug)]
pub struct Gradients {
    adjoints: Vec<Option<Tensor>>,
    visit_order: Vec<usize>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.adjoints[v.0].as_ref()
    }

    /// Node indices in the order the backward sweep processed them.
    pub fn visit_order(&self) -> &[usize] {
        &self.visit_order
    }
}

fn dim_err(op: &'static str, a: &Tensor, b: &Tensor) -> Error {
    Error::Dimension {
        op,
        left: a.shape().to_vec(),
        right: b.shape().to_vec(),
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    /// A constant leaf; receives an adjoint but nothing is stored from it.
    pub fn input(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Input)
    }

    /// Leaf bound to a stored parameter. Repeated calls on the same tape
    /// return the same node.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        if let Some(&v) = self.param_vars.get(&id) {
            return v;
        }
        let v = self.push(store.value(id).clone(), Op::Param);
        self.param_vars.insert(id, v);
        v
    }

    pub fn matvec(&mut self, m: Var, v: Var) -> Result<Var> {
        let out = tensor::matvec(self.value(m), self.value(v))?;
        Ok(self.push(out, Op::MatVec(m, v)))
    }

    pub fn dot(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        if !x.is_vector() || x.shape() != y.shape() {
            return Err(dim_err("dot", x, y));
        }
        let s = x.data().iter().zip(y.data()).map(|(p, q)| p * q).sum();
        Ok(self.push(Tensor::scalar(s), Op::Dot(a, b)))
    }

    fn zip_with(
        &mut self,
        op: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Tensor> {
        let (x, y) = (self.value(a), self.value(b));
        if x.shape() != y.shape() {
            return Err(dim_err(op, x, y));
        }
        let data = x.data().iter().zip(y.data()).map(|(&p, &q)| f(p, q));
        let mut out = x.clone();
        for (o, d) in out.data_mut().iter_mut().zip(data) {
            *o = d;
        }
        Ok(out)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip_with("add", a, b, |p, q| p + q)?;
        Ok(self.push(out, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip_with("sub", a, b, |p, q| p - q)?;
        Ok(self.push(out, Op::Sub(a, b)))
    }

    /// Elementwise (Hadamard) product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip_with("mul", a, b, |p, q| p * q)?;
        Ok(self.push(out, Op::Mul(a, b)))
    }

    /// `v · s` for a scalar node `s`.
    pub fn scale(&mut self, v: Var, s: Var) -> Result<Var> {
        let sv = self.value(s);
        if !sv.is_scalar() {
            return Err(dim_err("scale", self.value(v), sv));
        }
        let k = sv.item();
        let out = self.value(v).map(|x| x * k);
        Ok(self.push(out, Op::Scale(v, s)))
    }

    /// Elementwise product with a constant mask.
    pub fn mul_const(&mut self, v: Var, mask: Vec<f64>) -> Result<Var> {
        let x = self.value(v);
        if x.len() != mask.len() {
            return Err(Error::Dimension {
                op: "mul_const",
                left: x.shape().to_vec(),
                right: vec![mask.len()],
            });
        }
        let mut out = x.clone();
        for (o, m) in out.data_mut().iter_mut().zip(&mask) {
            *o *= m;
        }
        Ok(self.push(out, Op::MulConst(v, mask)))
    }

    pub fn tanh(&mut self, v: Var) -> Var {
        let out = self.value(v).map(f64::tanh);
        self.push(out, Op::Tanh(v))
    }

    pub fn sigmoid(&mut self, v: Var) -> Var {
        let out = self.value(v).map(tensor::sigmoid);
        self.push(out, Op::Sigmoid(v))
    }

    pub fn softmax(&mut self, v: Var) -> Result<Var> {
        let x = self.value(v);
        if !x.is_vector() {
            return Err(Error::Dimension {
                op: "softmax",
                left: x.shape().to_vec(),
                right: vec![],
            });
        }
        let out = Tensor::vector(tensor::softmax(x.data())?);
        Ok(self.push(out, Op::Softmax(v)))
    }

    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(Error::Empty("concat"));
        }
        let mut data = Vec::new();
        for &p in parts {
            let x = self.value(p);
            if !x.is_vector() {
                return Err(Error::Dimension {
                    op: "concat",
                    left: x.shape().to_vec(),
                    right: vec![],
                });
            }
            data.extend_from_slice(x.data());
        }
        Ok(self.push(Tensor::vector(data), Op::Concat(parts.to_vec())))
    }

    /// Scalar node holding `v[i]`.
    pub fn element(&mut self, v: Var, i: usize) -> Result<Var> {
        let x = self.value(v);
        if !x.is_vector() || i >= x.len() {
            return Err(Error::Dimension {
                op: "element",
                left: x.shape().to_vec(),
                right: vec![i],
            });
        }
        let out = Tensor::scalar(x.data()[i]);
        Ok(self.push(out, Op::Element(v, i)))
    }

    pub fn mean_pool(&mut self, rows: &[Var]) -> Result<Var> {
        let first = rows.first().ok_or(Error::Empty("mean_pool"))?;
        let mut acc = Tensor::zeros_like(self.value(*first));
        for &r in rows {
            let x = self.value(r);
            if x.shape() != acc.shape() {
                return Err(dim_err("mean_pool", &acc, x));
            }
            acc.add_assign(x);
        }
        let n = rows.len() as f64;
        let out = acc.map(|x| x / n);
        Ok(self.push(out, Op::MeanPool(rows.to_vec())))
    }

    /// Σ_i weights[i] · rows[i].
    pub fn weighted_sum(&mut self, weights: Var, rows: &[Var]) -> Result<Var> {
        let first = rows.first().ok_or(Error::Empty("weighted_sum"))?;
        let w = self.value(weights);
        if w.len() != rows.len() {
            return Err(Error::Dimension {
                op: "weighted_sum",
                left: w.shape().to_vec(),
                right: vec![rows.len()],
            });
        }
        let w = w.data().to_vec();
        let mut acc = Tensor::zeros_like(self.value(*first));
        for (&r, wi) in rows.iter().zip(&w) {
            let x = self.value(r);
            if x.shape() != acc.shape() {
                return Err(dim_err("weighted_sum", &acc, x));
            }
            for (a, b) in acc.data_mut().iter_mut().zip(x.data()) {
                *a += wi * b;
            }
        }
        Ok(self.push(acc, Op::WeightedSum(weights, rows.to_vec())))
    }

    pub fn sum_squares(&mut self, v: Var) -> Var {
        let out = Tensor::scalar(self.value(v).sum_squares());
        self.push(out, Op::SumSquares(v))
    }

    /// `-ln(max(v[i], floor))`.
    pub fn neg_log_at(&mut self, v: Var, i: usize, floor: f64) -> Result<Var> {
        let x = self.value(v);
        if !x.is_vector() || i >= x.len() {
            return Err(Error::Dimension {
                op: "neg_log_at",
                left: x.shape().to_vec(),
                right: vec![i],
            });
        }
        let out = Tensor::scalar(-x.data()[i].max(floor).ln());
        Ok(self.push(out, Op::NegLogAt(v, i, floor)))
    }

    /// Inverted dropout: in training mode each entry is zeroed with
    /// probability `rate` and survivors are scaled by `1/(1-rate)`.
    /// Inference mode and `rate == 0` return `v` itself.
    pub fn dropout<R: Rng>(&mut self, v: Var, rate: f64, rng: &mut R, training: bool) -> Result<Var> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::config(format!("dropout rate {rate} outside [0, 1)")));
        }
        if !training || rate == 0.0 {
            return Ok(v);
        }
        let keep = 1.0 / (1.0 - rate);
        let mask = (0..self.value(v).len())
            .map(|_| if rng.gen::<f64>() < rate { 0.0 } else { keep })
            .collect();
        self.mul_const(v, mask)
    }

    /// Back-propagates from the scalar `loss` node and returns adjoints for
    /// every node.
    pub fn gradients(&self, loss: Var) -> Result<Gradients> {
        let lv = self.value(loss);
        if !lv.is_scalar() {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                lv.shape()
            )));
        }
        let mut adj: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        adj[loss.0] = Some(Tensor::scalar(1.0));
        let mut visit_order = Vec::with_capacity(loss.0 + 1);

        for idx in (0..=loss.0).rev() {
            let Some(g) = adj[idx].take() else {
                continue;
            };
            visit_order.push(idx);
            self.propagate(idx, &g, &mut adj);
            adj[idx] = Some(g);
        }
        Ok(Gradients {
            adjoints: adj,
            visit_order,
        })
    }

    /// Back-propagates from `loss` and adds each parameter's gradient into
    /// the store. Non-trainable parameters are left untouched.
    pub fn backward(&self, loss: Var, store: &mut ParamStore) -> Result<Gradients> {
        let grads = self.gradients(loss)?;
        for (&id, &v) in &self.param_vars {
            let p = store.get_mut(id);
            if !p.trainable {
                continue;
            }
            if let Some(g) = grads.get(v) {
                p.grad.add_assign(g);
            }
        }
        Ok(grads)
    }

    fn propagate(&self, idx: usize, g: &Tensor, adj: &mut [Option<Tensor>]) {
        let node = &self.nodes[idx];
        let mut acc = |v: Var, delta: Tensor| match &mut adj[v.0] {
            Some(t) => t.add_assign(&delta),
            slot @ None => *slot = Some(delta),
        };
        let val = |v: Var| &self.nodes[v.0].value;

        match &node.op {
            Op::Input | Op::Param => {}
            Op::MatVec(m, v) => {
                let (mv, vv) = (val(*m), val(*v));
                let cols = mv.cols();
                let mut gm = Tensor::zeros_like(mv);
                for (r, gr) in g.data().iter().enumerate() {
                    for (c, x) in vv.data().iter().enumerate() {
                        gm.data_mut()[r * cols + c] = gr * x;
                    }
                }
                let mut gv = vec![0.0; cols];
                for (r, gr) in g.data().iter().enumerate() {
                    let row = &mv.data()[r * cols..(r + 1) * cols];
                    for (o, w) in gv.iter_mut().zip(row) {
                        *o += gr * w;
                    }
                }
                acc(*m, gm);
                acc(*v, Tensor::vector(gv));
            }
            Op::Dot(a, b) => {
                let s = g.item();
                acc(*a, val(*b).map(|x| x * s));
                acc(*b, val(*a).map(|x| x * s));
            }
            Op::Add(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.clone());
            }
            Op::Sub(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.map(|x| -x));
            }
            Op::Mul(a, b) => {
                acc(*a, hadamard(g, val(*b)));
                acc(*b, hadamard(g, val(*a)));
            }
            Op::Scale(v, s) => {
                let k = val(*s).item();
                let ds: f64 = g.data().iter().zip(val(*v).data()).map(|(p, q)| p * q).sum();
                acc(*v, g.map(|x| x * k));
                acc(*s, Tensor::scalar(ds));
            }
            Op::MulConst(v, mask) => {
                let mut d = g.clone();
                for (o, m) in d.data_mut().iter_mut().zip(mask) {
                    *o *= m;
                }
                acc(*v, d);
            }
            Op::Tanh(v) => {
                let mut d = g.clone();
                for (o, y) in d.data_mut().iter_mut().zip(node.value.data()) {
                    *o *= 1.0 - y * y;
                }
                acc(*v, d);
            }
            Op::Sigmoid(v) => {
                let mut d = g.clone();
                for (o, y) in d.data_mut().iter_mut().zip(node.value.data()) {
                    *o *= y * (1.0 - y);
                }
                acc(*v, d);
            }
            Op::Softmax(v) => {
                let y = node.value.data();
                let inner: f64 = g.data().iter().zip(y).map(|(p, q)| p * q).sum();
                let d = y
                    .iter()
                    .zip(g.data())
                    .map(|(yi, gi)| yi * (gi - inner))
                    .collect();
                acc(*v, Tensor::vector(d));
            }
            Op::Concat(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let n = val(p).len();
                    acc(p, Tensor::vector(g.data()[offset..offset + n].to_vec()));
                    offset += n;
                }
            }
            Op::Element(v, i) => {
                let mut d = Tensor::zeros_like(val(*v));
                d.data_mut()[*i] = g.item();
                acc(*v, d);
            }
            Op::MeanPool(rows) => {
                let n = rows.len() as f64;
                for &r in rows {
                    acc(r, g.map(|x| x / n));
                }
            }
            Op::WeightedSum(w, rows) => {
                let wv = val(*w).data().to_vec();
                let mut dw = Vec::with_capacity(rows.len());
                for (&r, wi) in rows.iter().zip(&wv) {
                    let rv = val(r);
                    dw.push(g.data().iter().zip(rv.data()).map(|(p, q)| p * q).sum());
                    acc(r, g.map(|x| x * wi));
                }
                acc(*w, Tensor::vector(dw));
            }
            Op::SumSquares(v) => {
                let s = g.item();
                acc(*v, val(*v).map(|x| 2.0 * x * s));
            }
            Op::NegLogAt(v, i, floor) => {
                let x = val(*v);
                let mut d = Tensor::zeros_like(x);
                let p = x.data()[*i];
                if p > *floor {
                    d.data_mut()[*i] = -g.item() / p;
                }
                acc(*v, d);
            }
        }
    }
}

fn hadamard(a: &Tensor, b: &Tensor) -> Tensor {
    let mut out = a.clone();
    for (o, x) in out.data_mut().iter_mut().zip(b.data()) {
        *o *= x;
    }
    out
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::numerics::ParamKind;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(7)
    }

    #[test]
    fn linear_loss_gradient_is_input() {
        let mut store = ParamStore::new();
        let w = store.add("w", Tensor::vector(vec![0.3, -0.2, 0.9]), ParamKind::Weight);
        let mut tape = Tape::new();
        let wv = tape.param(&store, w);
        let x = tape.input(Tensor::vector(vec![1.5, -2.0, 0.25]));
        let loss = tape.dot(wv, x).unwrap();
        tape.backward(loss, &mut store).unwrap();
        assert_eq!(store.get(w).grad.data(), &[1.5, -2.0, 0.25]);
    }

    #[test]
    fn tanh_gradient_at_zero_is_one() {
        let mut store = ParamStore::new();
        let w = store.add("w", Tensor::scalar(0.0), ParamKind::Weight);
        let mut tape = Tape::new();
        let wv = tape.param(&store, w);
        let loss = tape.tanh(wv);
        tape.backward(loss, &mut store).unwrap();
        assert_eq!(store.get(w).grad.item(), 1.0);
    }

    #[test]
    fn non_scalar_loss_is_rejected() {
        let mut tape = Tape::new();
        let v = tape.input(Tensor::vector(vec![1.0, 2.0]));
        assert!(matches!(tape.gradients(v), Err(Error::Contract(_))));
    }

    #[test]
    fn backward_visits_in_reverse_execution_order() {
        let mut tape = Tape::new();
        let a = tape.input(Tensor::vector(vec![0.1, 0.2]));
        let b = tape.tanh(a);
        let c = tape.sigmoid(b);
        let d = tape.mul(b, c).unwrap();
        let e = tape.sum_squares(d);
        let grads = tape.gradients(e).unwrap();
        assert_eq!(grads.visit_order(), &[4, 3, 2, 1, 0]);
    }

    #[test]
    fn trainable_flag_blocks_accumulation() {
        let mut store = ParamStore::new();
        let w = store.add("w", Tensor::scalar(2.0), ParamKind::Weight);
        store.get_mut(w).trainable = false;
        let mut tape = Tape::new();
        let wv = tape.param(&store, w);
        let loss = tape.sum_squares(wv);
        tape.backward(loss, &mut store).unwrap();
        assert_eq!(store.get(w).grad.item(), 0.0);
    }

    #[test]
    fn param_leaf_is_shared_within_a_tape() {
        let mut store = ParamStore::new();
        let w = store.add("w", Tensor::scalar(3.0), ParamKind::Weight);
        let mut tape = Tape::new();
        let a = tape.param(&store, w);
        let b = tape.param(&store, w);
        assert_eq!(a, b);
        let loss = tape.mul(a, b).unwrap();
        tape.backward(loss, &mut store).unwrap();
        assert_eq!(store.get(w).grad.item(), 6.0);
    }

    #[test]
    fn dropout_identity_cases() {
        let mut tape = Tape::new();
        let v = tape.input(Tensor::vector(vec![1.0, 2.0, 3.0]));
        let mut r = rng();
        assert_eq!(tape.dropout(v, 0.0, &mut r, true).unwrap(), v);
        assert_eq!(tape.dropout(v, 0.9, &mut r, false).unwrap(), v);
        assert!(tape.dropout(v, 1.0, &mut r, true).is_err());
        assert!(tape.dropout(v, -0.1, &mut r, true).is_err());
    }

    #[test]
    fn dropout_preserves_mean() {
        // Each survivor is 2.0 with p = 1/2, so per-entry variance is 1 and the
        // sample mean of n entries has standard deviation 1/sqrt(n).
        let n = 100_000;
        let mut tape = Tape::new();
        let v = tape.input(Tensor::vector(vec![1.0; n]));
        let out = tape.dropout(v, 0.5, &mut rng(), true).unwrap();
        let mean = tape.value(out).data().iter().sum::<f64>() / n as f64;
        let sigma = 1.0 / (n as f64).sqrt();
        assert!((mean - 1.0).abs() < 3.0 * sigma, "mean {mean}");
    }

    #[test]
    fn neg_log_clamps_zero_probability() {
        let mut tape = Tape::new();
        let p = tape.input(Tensor::vector(vec![0.0, 1.0]));
        let l = tape.neg_log_at(p, 0, 1e-12).unwrap();
        assert!((tape.value(l).item() - 1e-12_f64.ln().abs()).abs() < 1e-9);
        let g = tape.gradients(l).unwrap();
        assert!(g.get(p).unwrap().is_finite());
    }
}
