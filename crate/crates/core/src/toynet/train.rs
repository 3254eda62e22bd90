//! Full-image SGD with momentum.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labels::{LabelMap, IGNORE};
use crate::loss::{total_loss, LossReport, LossWeights};
use crate::plane::{Real, Tensor};
use crate::rng::SeededRng;

use super::net::{ParamGrads, ToyWsdNet};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub momentum: f64,
    pub iterations: usize,
    /// Scenes per step; each scene is used whole.
    pub batch_size: usize,
    /// Drives the per-epoch visiting order of the dataset.
    pub seed: u64,
    pub weights: LossWeights,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 1e-3,
            momentum: 0.9,
            iterations: 2000,
            batch_size: 1,
            seed: 0,
            weights: LossWeights::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::invalid(format!("learning rate must be finite and >= 0, got {}", self.lr)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::invalid(format!("momentum must be in [0, 1), got {}", self.momentum)));
        }
        if self.iterations == 0 {
            return Err(Error::invalid("iterations must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch size must be at least 1"));
        }
        self.weights.validate()
    }
}

/// Loss and gradients for one scene.
pub fn loss_and_grads<T: Real>(
    net: &ToyWsdNet<T>,
    image: &Tensor<T>,
    labels: &LabelMap,
    weights: &LossWeights,
) -> Result<(LossReport, ParamGrads<T>)> {
    let out = net.forward(image)?;
    let (report, g) = total_loss(&out.seg_logits, &out.aux_logits, labels, image, &out.i_rec, weights)?;
    let grads = net.backward(&out.cache, &g.seg_logits, &g.aux_logits, &g.i_rec)?;
    Ok((report, grads))
}

/// Visiting order: a fresh seeded shuffle per pass over the data.
struct Schedule {
    rng: SeededRng,
    order: Vec<usize>,
    pos: usize,
}

impl Schedule {
    fn new(n: usize, seed: u64) -> Self {
        Schedule {
            rng: SeededRng::new(seed),
            order: (0..n).collect(),
            pos: n,
        }
    }

    fn next(&mut self) -> usize {
        if self.pos == self.order.len() {
            for i in (1..self.order.len()).rev() {
                let j = self.rng.below(i as u64 + 1) as usize;
                self.order.swap(i, j);
            }
            self.pos = 0;
        }
        self.pos += 1;
        self.order[self.pos - 1]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainOutcome {
    /// Mean total loss of each step's batch, before that step's update.
    pub loss_history: Vec<f64>,
    pub last_report: LossReport,
}

/// Stepwise optimizer state: momentum buffers and the visiting schedule.
pub struct Trainer<T: Real = f32> {
    cfg: TrainConfig,
    velocity: ParamGrads<T>,
    schedule: Schedule,
}

impl<T: Real> Trainer<T> {
    pub fn new(net: &ToyWsdNet<T>, dataset: &[(Tensor<T>, LabelMap)], cfg: &TrainConfig) -> Result<Self> {
        cfg.validate()?;
        if dataset.is_empty() {
            return Err(Error::Empty("training dataset"));
        }
        for (_, labels) in dataset {
            labels.validate(net.num_categories)?;
        }
        Ok(Trainer {
            cfg: cfg.clone(),
            velocity: ParamGrads::zeros_like(net),
            schedule: Schedule::new(dataset.len(), cfg.seed),
        })
    }

    /// One update, `v ← μ·v + g`, `θ ← θ − lr·v`. Returns the batch's mean
    /// loss measured before the update.
    pub fn step(&mut self, net: &mut ToyWsdNet<T>, dataset: &[(Tensor<T>, LabelMap)]) -> Result<LossReport> {
        let batch = self.cfg.batch_size;
        let (lr, mu) = (T::lit(self.cfg.lr), T::lit(self.cfg.momentum));
        let mut batch_grads = ParamGrads::zeros_like(net);
        let mut mean = LossReport::default();
        for _ in 0..batch {
            let (image, labels) = &dataset[self.schedule.next()];
            let (report, grads) = loss_and_grads(net, image, labels, &self.cfg.weights)?;
            batch_grads.add_scaled(&grads, T::lit(1.0 / batch as f64));
            mean.accumulate(&report, 1.0 / batch as f64);
        }
        for ((layer, (vw, vb)), (gw, gb)) in net
            .layers
            .iter_mut()
            .zip(self.velocity.layers.iter_mut())
            .zip(&batch_grads.layers)
        {
            for ((p, v), &g) in layer.weight.iter_mut().zip(vw.iter_mut()).zip(gw) {
                *v = mu * *v + g;
                *p -= lr * *v;
            }
            for ((p, v), &g) in layer.bias.iter_mut().zip(vb.iter_mut()).zip(gb) {
                *v = mu * *v + g;
                *p -= lr * *v;
            }
        }
        Ok(mean)
    }
}

/// Runs `cfg.iterations` steps in place.
pub fn train<T: Real>(
    net: &mut ToyWsdNet<T>,
    dataset: &[(Tensor<T>, LabelMap)],
    cfg: &TrainConfig,
    mut on_step: impl FnMut(usize, &LossReport),
) -> Result<TrainOutcome> {
    let mut trainer = Trainer::new(net, dataset, cfg)?;
    let mut history = Vec::with_capacity(cfg.iterations);
    let mut last = LossReport::default();
    for step in 0..cfg.iterations {
        last = trainer.step(net, dataset)?;
        on_step(step, &last);
        history.push(last.total);
    }
    Ok(TrainOutcome {
        loss_history: history,
        last_report: last,
    })
}

/// Fraction of non-ignored pixels whose predicted category is correct.
pub fn pixel_accuracy<T: Real>(net: &ToyWsdNet<T>, image: &Tensor<T>, labels: &LabelMap) -> Result<f64> {
    let pred = net.predict(image)?;
    if pred.dims() != labels.dims() {
        return Err(Error::shape(format!(
            "prediction is {:?}, labels are {:?}",
            pred.dims(),
            labels.dims()
        )));
    }
    let (mut hit, mut n) = (0usize, 0usize);
    for (&p, &g) in pred.labels().iter().zip(labels.labels()) {
        if g != IGNORE {
            n += 1;
            hit += usize::from(p == g);
        }
    }
    if n == 0 {
        return Err(Error::NoValidPixels);
    }
    Ok(hit as f64 / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::toynet::gen_scene;

    fn scene(seed: u64) -> (Tensor, LabelMap) {
        gen_scene(&mut SeededRng::new(seed), 32, 32, 3).unwrap()
    }

    #[test]
    fn zero_lr_keeps_loss_constant() {
        let mut net = ToyWsdNet::seeded(3, 1).unwrap();
        let cfg = TrainConfig {
            lr: 0.0,
            iterations: 4,
            ..TrainConfig::default()
        };
        let out = train(&mut net, &[scene(1)], &cfg, |_, _| {}).unwrap();
        assert!(out.loss_history.iter().all(|&l| l == out.loss_history[0]));
    }

    #[test]
    fn same_seed_same_history() {
        let data = [scene(1), scene(2)];
        let cfg = TrainConfig {
            lr: 1e-2,
            iterations: 5,
            seed: 9,
            ..TrainConfig::default()
        };
        let mut a = ToyWsdNet::seeded(3, 4).unwrap();
        let mut b = a.clone();
        let ha = train(&mut a, &data, &cfg, |_, _| {}).unwrap();
        let hb = train(&mut b, &data, &cfg, |_, _| {}).unwrap();
        assert_eq!(ha, hb);
        assert_eq!(a, b);
    }

    #[test]
    fn schedule_visits_each_sample_once_per_pass() {
        let mut s = Schedule::new(5, 3);
        let mut seen: Vec<usize> = (0..5).map(|_| s.next()).collect();
        seen.sort_unstable();
        assert_eq!(seen, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn rejects_bad_input() {
        let mut net = ToyWsdNet::<f32>::seeded(3, 1).unwrap();
        let cfg = TrainConfig::default();
        assert!(matches!(train(&mut net, &[], &cfg, |_, _| {}), Err(Error::Empty(_))));
        let bad = TrainConfig {
            iterations: 0,
            ..cfg
        };
        assert!(train(&mut net, &[scene(1)], &bad, |_, _| {}).is_err());
    }
}
