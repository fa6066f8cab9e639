//! Bidirectional LSTM encoder on the tape.
//!
//! Cell: i, f, o = σ(W x + U h + b); g = tanh(W x + U h + b);
//! c' = f ⊙ c + i ⊙ g; h' = o ⊙ tanh(c'). Initial h and c are zero.

use crate::error::Result;
use crate::numerics::{ParamId, ParamKind, ParamStore, Tape, Tensor, Var};

pub const GATES: [&str; 4] = ["i", "f", "o", "g"];

#[derive(Clone, Debug)]
pub struct LstmParams {
    pub w: [ParamId; 4],
    pub u: [ParamId; 4],
    pub b: [ParamId; 4],
    pub hidden: usize,
}

impl LstmParams {
    pub fn register(store: &mut ParamStore, prefix: &str, input: usize, hidden: usize) -> Self {
        let mk = |store: &mut ParamStore, name: String, shape: &[usize], kind| {
            store.add(name, Tensor::zeros(shape), kind)
        };
        let w = GATES.map(|g| mk(store, format!("{prefix}.W_{g}"), &[hidden, input], ParamKind::Weight));
        let u = GATES.map(|g| mk(store, format!("{prefix}.U_{g}"), &[hidden, hidden], ParamKind::Weight));
        let b = GATES.map(|g| mk(store, format!("{prefix}.b_{g}"), &[hidden], ParamKind::Bias));
        LstmParams { w, u, b, hidden }
    }

    fn step(&self, tape: &mut Tape, store: &ParamStore, x: Var, h: Var, c: Var) -> Result<(Var, Var)> {
        let mut gate = [x; 4];
        for k in 0..4 {
            let w = tape.param(store, self.w[k]);
            let u = tape.param(store, self.u[k]);
            let b = tape.param(store, self.b[k]);
            let wx = tape.matvec(w, x)?;
            let uh = tape.matvec(u, h)?;
            let z = tape.add(wx, uh)?;
            let z = tape.add(z, b)?;
            gate[k] = if k == 3 { tape.tanh(z) } else { tape.sigmoid(z) };
        }
        let [i, f, o, g] = gate;
        let fc = tape.mul(f, c)?;
        let ig = tape.mul(i, g)?;
        let c_next = tape.add(fc, ig)?;
        let tc = tape.tanh(c_next);
        let h_next = tape.mul(o, tc)?;
        Ok((h_next, c_next))
    }

    /// Hidden states for each input, in input order.
    pub fn run(&self, tape: &mut Tape, store: &ParamStore, inputs: &[Var]) -> Result<Vec<Var>> {
        let mut h = tape.input(Tensor::zeros(&[self.hidden]));
        let mut c = tape.input(Tensor::zeros(&[self.hidden]));
        let mut out = Vec::with_capacity(inputs.len());
        for &x in inputs {
            (h, c) = self.step(tape, store, x, h, c)?;
            out.push(h);
        }
        Ok(out)
    }
}

#[derive(Clone, Debug)]
pub struct BiLstmParams {
    pub forward: LstmParams,
    pub backward: LstmParams,
}

impl BiLstmParams {
    pub fn register(store: &mut ParamStore, prefix: &str, input: usize, hidden: usize) -> Self {
        BiLstmParams {
            forward: LstmParams::register(store, &format!("{prefix}.fwd"), input, hidden),
            backward: LstmParams::register(store, &format!("{prefix}.bwd"), input, hidden),
        }
    }

    /// `[h_fwd_t ; h_bwd_t]` for every position t.
    pub fn encode(&self, tape: &mut Tape, store: &ParamStore, inputs: &[Var]) -> Result<Vec<Var>> {
        let fwd = self.forward.run(tape, store, inputs)?;
        let reversed: Vec<Var> = inputs.iter().rev().copied().collect();
        let mut bwd = self.backward.run(tape, store, &reversed)?;
        bwd.reverse();
        fwd.into_iter()
            .zip(bwd)
            .map(|(f, b)| tape.concat(&[f, b]))
            .collect()
    }
}
