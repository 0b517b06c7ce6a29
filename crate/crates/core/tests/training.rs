use std::process::Command;

use neurosym::harness::{read_metrics, RunConfig};
use neurosym::learn::train;

fn sum2(seed: u64) -> RunConfig {
    RunConfig::parse(&format!(
        r#"task = "sum"
size = 2
seed = {seed}

[train]
batch_size = 64
epochs = 3
hidden = 64

[data]
source = "synthetic"
train_count = 1000
test_count = 200
"#
    ))
    .unwrap()
}

#[test]
fn loss_does_not_increase_over_first_three_epochs() {
    let mut monotone = 0;
    for seed in 0..10 {
        let cfg = sum2(seed);
        let (tr, te) = cfg.load_data(seed).unwrap();
        let mut tc = cfg.train.clone();
        tc.seed = seed;
        let losses: Vec<f64> = train(cfg.task, &tc, &tr, &te).unwrap().history.iter().map(|s| s.loss).collect();
        assert_eq!(losses.len(), 3);
        monotone += usize::from(losses.windows(2).all(|w| w[1] <= w[0]));
    }
    assert!(monotone >= 9, "loss non-increasing in only {monotone} of 10 seeds");
}

#[test]
fn same_seed_gives_same_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("sum2.toml");
    std::fs::write(
        &cfg,
        "task = \"sum\"\nsize = 2\nseed = 5\n[train]\nepochs = 2\nhidden = 16\n[data]\nsource = \"synthetic\"\ntrain_count = 300\ntest_count = 60\n",
    )
    .unwrap();
    let runs: Vec<_> = ["a", "b"]
        .iter()
        .map(|name| {
            let out = dir.path().join(name);
            let status = Command::new(env!("CARGO_BIN_EXE_neurosym"))
                .args(["run", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()])
                .status()
                .unwrap();
            assert!(status.success());
            read_metrics(&out.join("metrics.csv")).unwrap()
        })
        .collect();
    assert_eq!(runs[0].len(), 2);
    // Wall time is the only column allowed to differ.
    for (a, b) in runs[0].iter().zip(&runs[1]) {
        assert_eq!((a.epoch, a.loss, a.accuracy, &a.provenance, a.k, a.seed), (b.epoch, b.loss, b.accuracy, &b.provenance, b.k, b.seed));
    }
}
