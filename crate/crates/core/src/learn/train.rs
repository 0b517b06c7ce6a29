use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::mlp::Mlp;
use super::optim::{Optimizer, OptimizerKind};
use super::tasks::{ForwardSettings, Samples, TaskKind};
use crate::distribution::SampleStrategy;
use crate::error::{Error, Result};
use crate::provenance::ProvenanceKind;
use crate::tensor::Tape;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub provenance: ProvenanceKind,
    pub seed: u64,
    /// Symbols kept after each intermediate program step.
    pub sample: Option<usize>,
    pub sample_strategy: SampleStrategy,
    pub optimizer: OptimizerKind,
    pub hidden: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 1e-3,
            batch_size: 64,
            epochs: 5,
            provenance: ProvenanceKind::Damp,
            seed: 0,
            sample: None,
            sample_strategy: SampleStrategy::TopMean,
            optimizer: OptimizerKind::Adam,
            hidden: 128,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.epochs == 0 || self.hidden == 0 {
            return Err(Error::Config("batch_size, epochs and hidden must be positive".into()));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("learning rate {} must be finite and non-negative", self.lr)));
        }
        if self.sample == Some(0) {
            return Err(Error::Config("sample must be at least 1".into()));
        }
        Ok(())
    }

    pub fn settings(&self) -> ForwardSettings {
        ForwardSettings {
            provenance: self.provenance,
            sampling: self.sample.map(|m| (m, self.sample_strategy)),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub loss: f64,
    pub accuracy: f64,
    pub epoch_seconds: f64,
}

#[derive(Clone, Debug)]
pub struct Trained {
    pub model: Mlp,
    pub history: Vec<EpochStats>,
}

impl Trained {
    pub fn best_accuracy(&self) -> f64 {
        self.history.iter().map(|e| e.accuracy).fold(0.0, f64::max)
    }
}

/// Fresh perception model for `kind` seeded from `seed`.
pub fn init_model(kind: TaskKind, input_dim: usize, hidden: usize, seed: u64) -> Result<Mlp> {
    Mlp::new(&kind.model_sizes(input_dim, hidden), &mut ChaCha8Rng::seed_from_u64(seed))
}

/// Fraction of samples whose most probable program output is correct.
pub fn evaluate(kind: TaskKind, model: &Mlp, samples: &Samples, settings: ForwardSettings, batch_size: usize) -> Result<f64> {
    kind.check_samples(samples)?;
    if samples.is_empty() {
        return Ok(0.0);
    }
    let order: Vec<usize> = (0..samples.len()).collect();
    let mut correct = 0;
    for batch in order.chunks(batch_size.max(1)) {
        let tape = Tape::new();
        correct += kind.forward(&tape, &model.bind(&tape), samples, batch, settings)?.correct;
    }
    Ok(correct as f64 / samples.len() as f64)
}

/// Minibatch training with one evaluation on `test` after every epoch.
pub fn train(kind: TaskKind, cfg: &TrainConfig, train: &Samples, test: &Samples) -> Result<Trained> {
    cfg.validate()?;
    kind.check_samples(train)?;
    kind.check_samples(test)?;
    let dim = train
        .input_dim()
        .ok_or_else(|| Error::Config("training set is empty".into()))?;
    let mut model = init_model(kind, dim, cfg.hidden, cfg.seed)?;
    train_model(kind, cfg, &mut model, train, test)
}

/// [`train`] starting from an existing model.
pub fn train_model(kind: TaskKind, cfg: &TrainConfig, model: &mut Mlp, train: &Samples, test: &Samples) -> Result<Trained> {
    cfg.validate()?;
    let settings = cfg.settings();
    let mut opt = Optimizer::new(cfg.optimizer, cfg.lr, model.params());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let start = Instant::now();
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let tape = Tape::new();
            let bound = model.bind(&tape);
            let fwd = kind.forward(&tape, &bound, train, batch, settings)?;
            let grads = tape.backward(&fwd.loss)?;
            let g: Vec<_> = bound.params().iter().map(|p| grads.wrt(p)).collect();
            opt.step(model.params_mut(), &g)?;
            total += fwd.loss.value().item() * batch.len() as f64;
        }
        let epoch_seconds = start.elapsed().as_secs_f64();
        let accuracy = evaluate(kind, model, test, settings, cfg.batch_size)?;
        history.push(EpochStats {
            epoch,
            loss: total / train.len().max(1) as f64,
            accuracy,
            epoch_seconds,
        });
    }
    Ok(Trained {
        model: model.clone(),
        history,
    })
}
