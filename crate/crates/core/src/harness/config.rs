//! Run configuration files. Every table rejects unknown keys.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Deserialize;

use crate::data::{gen_hwf_dataset, gen_path_dataset, gen_synthetic_digits, parse_idx, synth::DEFAULT_SEPARATION};
use crate::distribution::SampleStrategy;
use crate::error::{Error, Result};
use crate::learn::{digit_tuples, same_class_pairs, OptimizerKind, Samples, TaskKind, TrainConfig};
use crate::provenance::ProvenanceKind;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    task: String,
    size: Option<usize>,
    seed: Option<u64>,
    output_dir: Option<PathBuf>,
    #[serde(default)]
    train: RawTrain,
    #[serde(default)]
    provenance: RawProvenance,
    sampling: Option<RawSampling>,
    #[serde(default)]
    data: RawData,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTrain {
    lr: Option<f64>,
    batch_size: Option<usize>,
    epochs: Option<usize>,
    optimizer: Option<String>,
    hidden: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawProvenance {
    kind: Option<String>,
    k: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSampling {
    m: usize,
    strategy: Option<String>,
    seed: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawData {
    source: Option<String>,
    train_count: Option<usize>,
    test_count: Option<usize>,
    separation: Option<f64>,
    dim: Option<usize>,
    edge_prob: Option<f64>,
    noise: Option<f64>,
    train_images: Option<PathBuf>,
    train_labels: Option<PathBuf>,
    test_images: Option<PathBuf>,
    test_labels: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticSpec {
    pub train_count: usize,
    pub test_count: usize,
    pub separation: f64,
    /// Feature width for formula tokens and graph edges.
    pub dim: usize,
    pub edge_prob: f64,
    pub noise: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct IdxSpec {
    pub train_images: PathBuf,
    pub train_labels: PathBuf,
    pub test_images: PathBuf,
    pub test_labels: PathBuf,
    /// Optional caps on the number of task samples.
    pub train_count: Option<usize>,
    pub test_count: Option<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum DataSource {
    Synthetic(SyntheticSpec),
    Idx(IdxSpec),
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub task: TaskKind,
    pub train: TrainConfig,
    pub data: DataSource,
    pub output_dir: PathBuf,
}

fn cfg_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Io { path: path.to_path_buf(), source: e })?;
        Self::parse(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn parse(text: &str) -> Result<Self> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| cfg_err(e.message().to_string()))?;
        let size = raw.size;
        let need = |what: &str| size.ok_or_else(|| cfg_err(format!("task `{}` needs `size` ({what})", raw.task)));
        let task = match raw.task.as_str() {
            "sum" => TaskKind::Sum { n: need("digit count")? },
            "product" => TaskKind::Product { n: need("digit count")? },
            "hwf" => TaskKind::Hwf {
                max_len: need("maximum formula length")?,
            },
            "path" => TaskKind::Path {
                nodes: need("node count")?,
            },
            "toy" => TaskKind::Toy,
            other => return Err(cfg_err(format!("unknown task `{other}` (expected sum, product, hwf, path or toy)"))),
        };
        match task {
            TaskKind::Sum { n } | TaskKind::Product { n } if n == 0 => return Err(cfg_err("size must be at least 1")),
            TaskKind::Hwf { max_len } if max_len % 2 == 0 => return Err(cfg_err("hwf size must be odd")),
            TaskKind::Path { nodes } if !(2..=64).contains(&nodes) => {
                return Err(cfg_err("path size must be between 2 and 64"))
            }
            _ => {}
        }

        let (default_lr, default_k) = match task {
            TaskKind::Hwf { .. } => (1e-4, 3),
            TaskKind::Path { .. } => (1e-4, 1),
            _ => (1e-3, 1),
        };
        let default_kind = match task {
            TaskKind::Hwf { .. } | TaskKind::Path { .. } => "dtkp-am",
            _ => "damp",
        };
        let kind = raw.provenance.kind.as_deref().unwrap_or(default_kind);
        let provenance = match kind {
            "damp" if raw.provenance.k.is_some() => return Err(cfg_err("`k` only applies to dtkp-am")),
            "damp" => ProvenanceKind::Damp,
            "dtkp-am" => ProvenanceKind::dtkp(raw.provenance.k.unwrap_or(default_k)).map_err(|e| cfg_err(e.to_string()))?,
            other => return Err(cfg_err(format!("unknown provenance `{other}` (expected damp or dtkp-am)"))),
        };
        let (sample, sample_strategy) = match raw.sampling {
            None => (None, SampleStrategy::TopMean),
            Some(s) => {
                let strategy = match (s.strategy.as_deref().unwrap_or("top-mean"), s.seed) {
                    ("top-mean", None) => SampleStrategy::TopMean,
                    ("top-mean", Some(_)) => return Err(cfg_err("sampling seed only applies to the seeded strategy")),
                    ("seeded", seed) => SampleStrategy::Seeded(seed.unwrap_or(0)),
                    (other, _) => return Err(cfg_err(format!("unknown sampling strategy `{other}`"))),
                };
                (Some(s.m), strategy)
            }
        };
        let optimizer = match raw.train.optimizer {
            Some(o) => o.parse::<OptimizerKind>()?,
            None => OptimizerKind::Adam,
        };
        let train = TrainConfig {
            lr: raw.train.lr.unwrap_or(default_lr),
            batch_size: raw.train.batch_size.unwrap_or(64),
            epochs: raw.train.epochs.unwrap_or(5),
            provenance,
            seed: raw.seed.unwrap_or(0),
            sample,
            sample_strategy,
            optimizer,
            hidden: raw.train.hidden.unwrap_or(128),
        };
        train.validate()?;

        let d = raw.data;
        let data = match d.source.as_deref().unwrap_or("synthetic") {
            "synthetic" => {
                if d.train_images.is_some() || d.train_labels.is_some() || d.test_images.is_some() || d.test_labels.is_some() {
                    return Err(cfg_err("image paths only apply to source = \"idx\""));
                }
                let spec = SyntheticSpec {
                    train_count: d.train_count.unwrap_or(2000),
                    test_count: d.test_count.unwrap_or(500),
                    separation: d.separation.unwrap_or(DEFAULT_SEPARATION),
                    dim: d.dim.unwrap_or(crate::data::synth::IMAGE_DIM),
                    edge_prob: d.edge_prob.unwrap_or(0.2),
                    noise: d.noise.unwrap_or(1.0),
                };
                if !(spec.separation > 0.0) || spec.dim == 0 || !(0.0..=1.0).contains(&spec.edge_prob) || spec.noise < 0.0 {
                    return Err(cfg_err("synthetic data needs separation > 0, dim > 0, edge_prob in [0, 1], noise >= 0"));
                }
                if spec.train_count == 0 || spec.test_count == 0 {
                    return Err(cfg_err("train_count and test_count must be positive"));
                }
                DataSource::Synthetic(spec)
            }
            "idx" => {
                if !matches!(task, TaskKind::Sum { .. } | TaskKind::Product { .. } | TaskKind::Toy) {
                    return Err(cfg_err("idx data only serves the digit tasks (sum, product, toy)"));
                }
                if d.separation.is_some() || d.dim.is_some() || d.edge_prob.is_some() || d.noise.is_some() {
                    return Err(cfg_err("generator settings only apply to source = \"synthetic\""));
                }
                let path = |p: Option<PathBuf>, key: &str| -> Result<PathBuf> {
                    let p = p.ok_or_else(|| cfg_err(format!("idx data needs `{key}`")))?;
                    if !p.exists() {
                        return Err(cfg_err(format!("`{key}` = {} does not exist", p.display())));
                    }
                    Ok(p)
                };
                DataSource::Idx(IdxSpec {
                    train_images: path(d.train_images, "train_images")?,
                    train_labels: path(d.train_labels, "train_labels")?,
                    test_images: path(d.test_images, "test_images")?,
                    test_labels: path(d.test_labels, "test_labels")?,
                    train_count: d.train_count,
                    test_count: d.test_count,
                })
            }
            other => return Err(cfg_err(format!("unknown data source `{other}` (expected synthetic or idx)"))),
        };
        let output_dir = raw.output_dir.unwrap_or_else(|| PathBuf::from(format!("runs/{task}")));
        Ok(RunConfig {
            task,
            train,
            data,
            output_dir,
        })
    }

    /// Builds the train and test samples. Generated data depends only on
    /// the configuration and `data_seed`.
    pub fn load_data(&self, data_seed: u64) -> Result<(Samples, Samples)> {
        match &self.data {
            DataSource::Synthetic(s) => synthetic_samples(self.task, s, data_seed),
            DataSource::Idx(spec) => {
                let train = parse_idx(&spec.train_images, &spec.train_labels)?;
                let test = parse_idx(&spec.test_images, &spec.test_labels)?;
                Ok((
                    digit_samples(self.task, train, spec.train_count, data_seed)?,
                    digit_samples(self.task, test, spec.test_count, data_seed.wrapping_add(1))?,
                ))
            }
        }
    }
}

fn digit_samples(
    task: TaskKind,
    images: crate::data::LabeledImages,
    cap: Option<usize>,
    seed: u64,
) -> Result<Samples> {
    let mut tuples = match task {
        TaskKind::Sum { n } | TaskKind::Product { n } => digit_tuples(images.len(), n),
        TaskKind::Toy => same_class_pairs(&images.labels, images.len(), seed),
        _ => return Err(cfg_err(format!("task {task} does not use digit images"))),
    };
    if let Some(c) = cap {
        tuples.truncate(c);
    }
    if tuples.is_empty() {
        return Err(cfg_err("not enough images for one sample"));
    }
    Ok(Samples::Digits {
        images: Arc::new(images),
        tuples,
    })
}

fn synthetic_samples(task: TaskKind, s: &SyntheticSpec, seed: u64) -> Result<(Samples, Samples)> {
    let total = s.train_count + s.test_count;
    Ok(match task {
        TaskKind::Sum { .. } | TaskKind::Product { .. } | TaskKind::Toy => {
            let arity = match task {
                TaskKind::Sum { n } | TaskKind::Product { n } => n,
                _ => 1,
            };
            let per_class = (total * arity).div_ceil(10);
            let all = gen_synthetic_digits(10, per_class, s.separation, seed)?;
            let (tr, te) = all.split(s.train_count * arity);
            (
                digit_samples(task, tr, Some(s.train_count), seed)?,
                digit_samples(task, te, Some(s.test_count), seed.wrapping_add(1))?,
            )
        }
        TaskKind::Hwf { max_len } => {
            let mut all = gen_hwf_dataset(max_len, total, s.dim, s.separation, seed)?;
            let test = all.split_off(s.train_count);
            (Samples::Hwf(all), Samples::Hwf(test))
        }
        TaskKind::Path { nodes } => {
            let mut all = gen_path_dataset(nodes, s.edge_prob, total, s.dim, s.noise, seed)?;
            let test = all.split_off(s.train_count);
            (Samples::Path(all), Samples::Path(test))
        }
    })
}
