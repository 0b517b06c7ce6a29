//! Perception model, losses, optimizers and the training loop.

mod loss;
mod mlp;
mod optim;
mod tasks;
mod train;

pub use loss::{loss_bce, loss_nll};
pub use mlp::{BoundMlp, Mlp};
pub use optim::{adam_step, sgd_step, AdamState, Optimizer, OptimizerKind};
pub use tasks::{argmax, digit_tuples, same_class_pairs, sampling, ForwardSettings, Forward, Group, Samples, Target, TaskKind};
pub use train::{evaluate, init_model, train, train_model, EpochStats, TrainConfig, Trained};
