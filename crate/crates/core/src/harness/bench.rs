//! Batched against per-sample execution timing.

use std::sync::Arc;
use std::time::Instant;

use serde::Serialize;

use crate::data::gen_synthetic_digits;
use crate::error::Result;
use crate::learn::{digit_tuples, init_model, train_model, ForwardSettings, Mlp, Samples, TaskKind, TrainConfig};
use crate::provenance::ProvenanceKind;
use crate::tensor::Tape;

#[derive(Clone, Debug, Serialize)]
pub struct SpeedupReport {
    pub task: String,
    pub batch: usize,
    pub batched_seconds: f64,
    pub sequential_seconds: f64,
    /// Sequential time over batched time.
    pub speedup: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ScalingReport {
    pub task: String,
    pub samples: usize,
    pub small_batch: usize,
    pub large_batch: usize,
    pub small_epoch_seconds: f64,
    pub large_epoch_seconds: f64,
    /// Epoch time at the large batch over epoch time at the small batch.
    pub ratio: f64,
}

#[derive(Clone, Debug)]
pub struct BenchSettings {
    pub provenance: ProvenanceKind,
    pub hidden: usize,
    pub separation: f64,
    pub repeats: usize,
    pub seed: u64,
}

fn digit_samples(n: usize, count: usize, separation: f64, seed: u64) -> Result<Samples> {
    let images = gen_synthetic_digits(10, (n * count).div_ceil(10), separation, seed)?;
    let total = images.len();
    Ok(Samples::Digits {
        images: Arc::new(images),
        tuples: digit_tuples(total, n).into_iter().take(count).collect(),
    })
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

fn time_forward(kind: TaskKind, model: &Mlp, samples: &Samples, batches: &[Vec<usize>], settings: ForwardSettings) -> Result<f64> {
    let start = Instant::now();
    for batch in batches {
        let tape = Tape::new();
        kind.forward(&tape, &model.bind(&tape), samples, batch, settings)?;
    }
    Ok(start.elapsed().as_secs_f64())
}

/// Forward pass over `batch` samples of an `n`-digit sum, once as one batch
/// and once as `batch` single-sample programs. Median over the repeats.
pub fn forward_speedup(n: usize, batch: usize, s: &BenchSettings) -> Result<SpeedupReport> {
    let kind = TaskKind::Sum { n };
    let samples = digit_samples(n, batch, s.separation, s.seed)?;
    let model = init_model(kind, samples.input_dim().unwrap_or(0), s.hidden, s.seed)?;
    let settings = ForwardSettings {
        provenance: s.provenance,
        sampling: None,
    };
    let joint = vec![(0..batch).collect::<Vec<_>>()];
    let single: Vec<Vec<usize>> = (0..batch).map(|i| vec![i]).collect();
    // Warm-up.
    time_forward(kind, &model, &samples, &joint, settings)?;
    let mut batched = vec![];
    let mut sequential = vec![];
    for _ in 0..s.repeats.max(1) {
        batched.push(time_forward(kind, &model, &samples, &joint, settings)?);
        sequential.push(time_forward(kind, &model, &samples, &single, settings)?);
    }
    let (b, q) = (median(batched), median(sequential));
    Ok(SpeedupReport {
        task: kind.to_string(),
        batch,
        batched_seconds: b,
        sequential_seconds: q,
        speedup: q / b,
    })
}

/// One training epoch over a fixed sample set at two batch sizes.
pub fn batch_scaling(n: usize, samples: usize, small: usize, large: usize, s: &BenchSettings) -> Result<ScalingReport> {
    let kind = TaskKind::Sum { n };
    let train = digit_samples(n, samples, s.separation, s.seed)?;
    let test = digit_samples(n, 1, s.separation, s.seed.wrapping_add(1))?;
    let epoch = |batch_size: usize| -> Result<f64> {
        let cfg = TrainConfig {
            batch_size,
            epochs: 1,
            provenance: s.provenance,
            seed: s.seed,
            hidden: s.hidden,
            ..TrainConfig::default()
        };
        let mut model = init_model(kind, train.input_dim().unwrap_or(0), s.hidden, s.seed)?;
        Ok(train_model(kind, &cfg, &mut model, &train, &test)?.history[0].epoch_seconds)
    };
    epoch(small)?;
    let mut a = vec![];
    let mut b = vec![];
    for _ in 0..s.repeats.max(1) {
        a.push(epoch(small)?);
        b.push(epoch(large)?);
    }
    let (a, b) = (median(a), median(b));
    Ok(ScalingReport {
        task: kind.to_string(),
        samples,
        small_batch: small,
        large_batch: large,
        small_epoch_seconds: a,
        large_epoch_seconds: b,
        ratio: b / a,
    })
}
