//! Loss, SGD with momentum, the epoch loop and accuracy metrics.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{LcrRot, Mode, SentenceInput, NUM_CLASSES};
use crate::numerics::tensor::argmax;
use crate::numerics::{ParamKind, ParamStore, Tape, Tensor, Var};

/// Probabilities below this are clamped before the log.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Hyperparams {
    pub learning_rate: f64,
    pub momentum: f64,
    pub l2: f64,
    pub dropout: f64,
    pub epochs: usize,
    pub seed: u64,
    pub batch_size: usize,
    pub init_bound: f64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            learning_rate: 0.05,
            momentum: 0.9,
            l2: 1e-5,
            dropout: 0.0,
            epochs: 30,
            seed: 0,
            batch_size: 1,
            init_bound: 0.01,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::config(m));
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning rate {} must be finite and non-negative", self.learning_rate));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad(format!("momentum {} outside [0, 1)", self.momentum));
        }
        if !(self.l2 >= 0.0 && self.l2.is_finite()) {
            return bad(format!("L2 coefficient {} must be non-negative", self.l2));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} outside [0, 1)", self.dropout));
        }
        if self.batch_size == 0 {
            return bad("batch size must be at least 1".into());
        }
        if !(self.init_bound > 0.0) {
            return bad(format!("init bound {} must be positive", self.init_bound));
        }
        Ok(())
    }
}

/// Per-parameter velocities, zero at start.
#[derive(Clone, Debug)]
pub struct OptimizerState {
    velocities: Vec<Tensor>,
}

impl OptimizerState {
    pub fn new(store: &ParamStore) -> Self {
        OptimizerState {
            velocities: store.iter().map(|(_, p)| Tensor::zeros_like(&p.value)).collect(),
        }
    }

    pub fn velocity(&self, index: usize) -> &Tensor {
        &self.velocities[index]
    }
}

/// `v ← m·v − lr·g`, `value ← value + v`, then gradients are reset.
pub fn sgd_momentum_step(store: &mut ParamStore, state: &mut OptimizerState, lr: f64, momentum: f64) {
    for (p, v) in store.iter_mut().zip(&mut state.velocities) {
        if p.trainable {
            for ((x, vel), g) in p.value.data_mut().iter_mut().zip(v.data_mut()).zip(p.grad.data()) {
                *vel = momentum * *vel - lr * g;
                *x += *vel;
            }
        }
        p.zero_grad();
    }
}

/// Cross-entropy plus `l2 · Σ‖W‖²` over weights, built on the tape so the
/// penalty's gradient flows with the rest.
pub fn loss_on_tape(tape: &mut Tape, store: &ParamStore, probs: Var, gold: usize, l2: f64) -> Result<Var> {
    let p = tape.value(probs).data().get(gold).copied().ok_or_else(|| {
        Error::Contract(format!("gold index {gold} outside {} classes", tape.value(probs).len()))
    })?;
    if p < PROB_FLOOR {
        log::warn!("probability of gold class {gold} is {p:e}; clamped to {PROB_FLOOR:e}");
    }
    let mut loss = tape.neg_log_at(probs, gold, PROB_FLOOR)?;
    if l2 > 0.0 {
        for (id, param) in store.iter() {
            if param.kind == ParamKind::Weight {
                let w = tape.param(store, id);
                let sq = tape.sum_squares(w);
                let pen = tape.mul_const(sq, vec![l2])?;
                loss = tape.add(loss, pen)?;
            }
        }
    }
    Ok(loss)
}

/// Plain-value version of [`loss_on_tape`].
pub fn loss(probs: &[f64], gold: usize, store: &ParamStore, l2: f64) -> Result<f64> {
    let p = *probs
        .get(gold)
        .ok_or_else(|| Error::Contract(format!("gold index {gold} outside {} classes", probs.len())))?;
    if p < PROB_FLOOR {
        log::warn!("probability of gold class {gold} is {p:e}; clamped to {PROB_FLOOR:e}");
    }
    Ok(-p.max(PROB_FLOOR).ln() + l2 * store.weight_sum_squares())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean per-example loss over the epoch, penalty included.
    pub loss: f64,
    /// Accuracy of the predictions made during the epoch (dropout active).
    pub train_acc: f64,
}

/// A labelled example: model input and gold class index.
pub type Example = (SentenceInput, usize);

/// Runs `hyper.epochs` shuffled epochs over `data`, calling `on_epoch`
/// after each one. The model keeps its current parameters as a start.
pub fn train_with(
    model: &mut LcrRot,
    data: &[Example],
    hyper: &Hyperparams,
    mut on_epoch: impl FnMut(&EpochRecord) -> Result<()>,
) -> Result<Vec<EpochRecord>> {
    hyper.validate()?;
    if data.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    if (model.config().dropout - hyper.dropout).abs() > 0.0 {
        return Err(Error::config(format!(
            "model dropout {} differs from hyperparameter dropout {}",
            model.config().dropout,
            hyper.dropout
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed.wrapping_add(1));
    let mut state = OptimizerState::new(model.store());
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut trace = Vec::with_capacity(hyper.epochs);
    model.store_mut().zero_grads();

    for epoch in 1..=hyper.epochs {
        order.shuffle(&mut rng);
        let (mut total, mut correct) = (0.0, 0usize);
        for (pos, chunk) in order.chunks(hyper.batch_size).enumerate() {
            for (k, &i) in chunk.iter().enumerate() {
                let (input, gold) = &data[i];
                let mut tape = Tape::new();
                let fwd = model.forward(&mut tape, input, Mode::Training(&mut rng))?;
                let l = loss_on_tape(&mut tape, model.store(), fwd.probs, *gold, hyper.l2)?;
                let value = tape.value(l).item();
                if !value.is_finite() {
                    return Err(Error::Divergence {
                        epoch,
                        example: pos * hyper.batch_size + k,
                        loss: value,
                    });
                }
                total += value;
                if argmax(tape.value(fwd.probs).data()) == *gold {
                    correct += 1;
                }
                tape.backward(l, model.store_mut())?;
            }
            if chunk.len() > 1 {
                let scale = 1.0 / chunk.len() as f64;
                for p in model.store_mut().iter_mut() {
                    p.grad.data_mut().iter_mut().for_each(|g| *g *= scale);
                }
            }
            sgd_momentum_step(model.store_mut(), &mut state, hyper.learning_rate, hyper.momentum);
        }
        let record = EpochRecord {
            epoch,
            loss: total / data.len() as f64,
            train_acc: correct as f64 / data.len() as f64,
        };
        log::debug!("epoch {epoch}: loss {:.6} acc {:.4}", record.loss, record.train_acc);
        on_epoch(&record)?;
        trace.push(record);
    }
    Ok(trace)
}

pub fn train(model: &mut LcrRot, data: &[Example], hyper: &Hyperparams) -> Result<Vec<EpochRecord>> {
    train_with(model, data, hyper, |_| Ok(()))
}

/// Builds a model from `config` with dropout taken from `hyper`,
/// initializes it from `hyper.seed` and trains it.
pub fn fit(
    config: crate::model::ModelConfig,
    data: &[Example],
    hyper: &Hyperparams,
) -> Result<(LcrRot, Vec<EpochRecord>)> {
    hyper.validate()?;
    let mut model = LcrRot::new(config.with_dropout(hyper.dropout))?;
    model.init_uniform(hyper.init_bound, &mut ChaCha8Rng::seed_from_u64(hyper.seed));
    let trace = train(&mut model, data, hyper)?;
    Ok((model, trace))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub accuracy: f64,
    /// `confusion[gold][predicted]`.
    pub confusion: [[usize; NUM_CLASSES]; NUM_CLASSES],
    pub total: usize,
}

impl Evaluation {
    pub fn from_pairs(pairs: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut confusion = [[0usize; NUM_CLASSES]; NUM_CLASSES];
        let mut total = 0;
        for (gold, pred) in pairs {
            if gold >= NUM_CLASSES || pred >= NUM_CLASSES {
                return Err(Error::Contract(format!("class index out of range: {gold}, {pred}")));
            }
            confusion[gold][pred] += 1;
            total += 1;
        }
        if total == 0 {
            return Err(Error::EmptyCorpus);
        }
        let correct: usize = (0..NUM_CLASSES).map(|k| confusion[k][k]).sum();
        Ok(Evaluation {
            accuracy: correct as f64 / total as f64,
            confusion,
            total,
        })
    }

    pub fn gold_counts(&self) -> [usize; NUM_CLASSES] {
        self.confusion.map(|row| row.iter().sum())
    }
}

/// Argmax accuracy and confusion counts in inference mode.
pub fn evaluate(model: &LcrRot, data: &[Example]) -> Result<Evaluation> {
    let pairs = data
        .iter()
        .map(|(input, gold)| Ok((*gold, argmax(&model.predict(input)?))))
        .collect::<Result<Vec<_>>>()?;
    Evaluation::from_pairs(pairs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;

    fn store_with(value: f64) -> ParamStore {
        let mut s = ParamStore::new();
        s.add("x", Tensor::vector(vec![value]), ParamKind::Weight);
        s
    }

    #[test]
    fn loss_examples() {
        let s = store_with(0.0);
        assert_eq!(loss(&[0.0, 1.0, 0.0], 1, &s, 0.0).unwrap(), 0.0);
        let u = loss(&[1.0 / 3.0; 3], 2, &s, 0.0).unwrap();
        assert!((u - 3f64.ln()).abs() < 1e-15);
        let clamped = loss(&[1.0, 0.0, 0.0], 1, &s, 0.0).unwrap();
        assert!((clamped - 1e12f64.ln()).abs() < 1e-9);
    }

    #[test]
    fn momentum_zero_is_plain_sgd() {
        let mut s = store_with(1.0);
        let mut st = OptimizerState::new(&s);
        s.iter_mut().next().unwrap().grad = Tensor::vector(vec![2.0]);
        sgd_momentum_step(&mut s, &mut st, 0.1, 0.0);
        assert!((s.iter().next().unwrap().1.value.data()[0] - 0.8).abs() < 1e-15);
        assert_eq!(s.iter().next().unwrap().1.grad.data()[0], 0.0);
    }

    #[test]
    fn second_step_unrolls() {
        let (lr, m, g) = (0.1, 0.9, 0.5);
        let mut s = store_with(0.0);
        let mut st = OptimizerState::new(&s);
        let mut xs = vec![0.0];
        for _ in 0..2 {
            s.iter_mut().next().unwrap().grad = Tensor::vector(vec![g]);
            sgd_momentum_step(&mut s, &mut st, lr, m);
            xs.push(s.iter().next().unwrap().1.value.data()[0]);
        }
        assert!(((xs[2] - xs[1]) - (-lr * g * (1.0 + m))).abs() < 1e-15);
    }

    #[test]
    fn quadratic_follows_recurrence() {
        // The damped oscillation has |x_50| ≈ 0.067; it stays under 0.05
        // from step 52 on.
        let mut s = store_with(1.0);
        let mut st = OptimizerState::new(&s);
        let (mut x, mut v) = (1.0f64, 0.0f64);
        for step in 1..=120 {
            let p = s.iter_mut().next().unwrap();
            p.grad = p.value.clone();
            sgd_momentum_step(&mut s, &mut st, 0.1, 0.9);
            v = 0.9 * v - 0.1 * x;
            x += v;
            let got = s.iter().next().unwrap().1.value.data()[0];
            assert_eq!(got, x);
            if step >= 52 {
                assert!(got.abs() < 0.05, "step {step}: x = {got}");
            }
        }
    }

    #[test]
    fn confusion_rows_match_gold() {
        let e = Evaluation::from_pairs([(0, 0), (0, 2), (1, 1), (2, 2), (2, 2)]).unwrap();
        assert_eq!(e.gold_counts(), [2, 1, 2]);
        assert!((e.accuracy - 0.8).abs() < 1e-15);
        assert!(Evaluation::from_pairs([]).is_err());
    }

    #[test]
    fn zero_lr_leaves_params() {
        let data = vec![(
            SentenceInput::from_vectors(vec![vec![0.1, 0.2], vec![0.3, -0.1]], (0, 1)),
            2,
        )];
        let hyper = Hyperparams {
            learning_rate: 0.0,
            epochs: 2,
            ..Default::default()
        };
        let mut m = LcrRot::new(ModelConfig::new(2, 2).with_method(3)).unwrap();
        m.init_uniform(0.1, &mut ChaCha8Rng::seed_from_u64(3));
        let before: Vec<Tensor> = m.store().iter().map(|(_, p)| p.value.clone()).collect();
        train(&mut m, &data, &hyper).unwrap();
        let after: Vec<Tensor> = m.store().iter().map(|(_, p)| p.value.clone()).collect();
        assert_eq!(before, after);
    }
}
