//! Seeded synthetic datasets: Gaussian class clusters standing in for
//! digit and token images, handwritten-formula samples, and random graphs.

use num_rational::Rational64;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::LabeledImages;
use crate::error::{Error, Result};
use crate::programs::{evaluate_tokens, OPERATORS};
use crate::tensor::Tensor;

pub const IMAGE_DIM: usize = 784;
pub const DEFAULT_SEPARATION: f64 = 8.0;

fn unit_vector(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / n).collect()
}

/// Class means spaced roughly `separation` apart, with unit-variance
/// isotropic noise around them.
#[derive(Clone, Debug)]
pub struct Clusters {
    means: Vec<Vec<f64>>,
}

impl Clusters {
    pub fn new(classes: usize, dim: usize, separation: f64, rng: &mut ChaCha8Rng) -> Result<Self> {
        if !(separation > 0.0) || classes == 0 || dim == 0 {
            return Err(Error::InvalidArgument(
                "clusters need positive separation, classes and dimension".into(),
            ));
        }
        let scale = separation / std::f64::consts::SQRT_2;
        let means = (0..classes)
            .map(|_| unit_vector(rng, dim).into_iter().map(|x| x * scale).collect())
            .collect();
        Ok(Clusters { means })
    }

    pub fn classes(&self) -> usize {
        self.means.len()
    }

    pub fn dim(&self) -> usize {
        self.means[0].len()
    }

    pub fn mean(&self, class: usize) -> &[f64] {
        &self.means[class]
    }

    pub fn sample_into(&self, class: usize, rng: &mut ChaCha8Rng, out: &mut Vec<f64>) {
        out.extend(self.means[class].iter().map(|m| m + rng.sample::<f64, _>(StandardNormal)));
    }
}

/// `per_class` points for each of `classes` clusters in `dim` dimensions,
/// shuffled.
pub fn gen_clusters(classes: usize, per_class: usize, dim: usize, separation: f64, seed: u64) -> Result<LabeledImages> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let clusters = Clusters::new(classes, dim, separation, &mut rng)?;
    let mut labels: Vec<usize> = (0..classes).flat_map(|c| std::iter::repeat(c).take(per_class)).collect();
    labels.shuffle(&mut rng);
    let mut data = Vec::with_capacity(labels.len() * dim);
    for &c in &labels {
        clusters.sample_into(c, &mut rng, &mut data);
    }
    Ok(LabeledImages {
        images: Tensor::new(vec![labels.len(), dim], data)?,
        labels,
    })
}

/// Stand-in for the MNIST digits: ten clusters in 784 dimensions.
pub fn gen_synthetic_digits(classes: usize, per_class: usize, separation: f64, seed: u64) -> Result<LabeledImages> {
    gen_clusters(classes, per_class, IMAGE_DIM, separation, seed)
}

#[derive(Clone, Debug)]
pub struct HwfSample {
    /// One row of features per token.
    pub features: Tensor,
    /// Token class indices into the fourteen-token alphabet.
    pub tokens: Vec<usize>,
    pub value: Rational64,
}

impl HwfSample {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn formula(&self) -> String {
        self.tokens.iter().map(|&t| token_text(t)).collect::<Vec<_>>().join(" ")
    }
}

pub fn token_text(class: usize) -> &'static str {
    const DIGITS: [&str; 10] = ["0", "1", "2", "3", "4", "5", "6", "7", "8", "9"];
    if class < 10 {
        DIGITS[class]
    } else {
        OPERATORS[class - 10]
    }
}

/// Formulas of odd length up to `max_len` with alternating digits and
/// operators; lengths are drawn uniformly. Formulas dividing by zero are
/// redrawn.
pub fn gen_hwf_dataset(max_len: usize, count: usize, dim: usize, separation: f64, seed: u64) -> Result<Vec<HwfSample>> {
    if max_len % 2 == 0 {
        return Err(Error::InvalidArgument(format!("formula length {max_len} must be odd")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let clusters = Clusters::new(14, dim, separation, &mut rng)?;
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let len = 2 * rng.gen_range(0..=max_len / 2) + 1;
        let tokens: Vec<usize> = (0..len)
            .map(|i| if i % 2 == 0 { rng.gen_range(0..10) } else { 10 + rng.gen_range(0..4) })
            .collect();
        let text: Vec<&str> = tokens.iter().map(|&t| token_text(t)).collect();
        let Some(value) = evaluate_tokens(&text) else {
            continue;
        };
        let mut data = Vec::with_capacity(len * dim);
        for &t in &tokens {
            clusters.sample_into(t, &mut rng, &mut data);
        }
        out.push(HwfSample {
            features: Tensor::new(vec![len, dim], data)?,
            tokens,
            value,
        });
    }
    Ok(out)
}

#[derive(Clone, Debug)]
pub struct PathSample {
    /// One feature row per ordered node pair, in [`ordered_pairs`] order.
    pub features: Tensor,
    /// The hidden edges, kept for checking.
    pub edges: Vec<(i64, i64)>,
    pub query: (i64, i64),
    pub connected: bool,
}

/// All `(x, y)` with `x != y`, lexicographically.
pub fn ordered_pairs(nodes: usize) -> Vec<(i64, i64)> {
    let n = nodes as i64;
    (0..n).flat_map(|x| (0..n).filter(move |&y| y != x).map(move |y| (x, y))).collect()
}

/// Random digraphs whose edges are visible only through noisy per-pair
/// features. Each sample asks whether a random pair of distinct nodes is
/// joined by a directed path.
pub fn gen_path_dataset(
    nodes: usize,
    edge_prob: f64,
    count: usize,
    dim: usize,
    noise: f64,
    seed: u64,
) -> Result<Vec<PathSample>> {
    if !(2..=64).contains(&nodes) || !(0.0..=1.0).contains(&edge_prob) || dim == 0 {
        return Err(Error::InvalidArgument(
            "path graphs need 2..=64 nodes, an edge probability in [0, 1] and a feature dimension".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let signal: Vec<f64> = unit_vector(&mut rng, dim).into_iter().map(|x| 2.0 * x).collect();
    let pairs = ordered_pairs(nodes);
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let mut adj = vec![vec![false; nodes]; nodes];
        let mut data = Vec::with_capacity(pairs.len() * dim);
        let mut edges = vec![];
        for &(x, y) in &pairs {
            let present = rng.gen_bool(edge_prob);
            adj[x as usize][y as usize] = present;
            if present {
                edges.push((x, y));
            }
            let sign = if present { 1.0 } else { -1.0 };
            data.extend(signal.iter().map(|s| sign * s + noise * rng.sample::<f64, _>(StandardNormal)));
        }
        // Warshall
        for k in 0..nodes {
            for i in 0..nodes {
                if adj[i][k] {
                    for j in 0..nodes {
                        if adj[k][j] {
                            adj[i][j] = true;
                        }
                    }
                }
            }
        }
        let query = pairs[rng.gen_range(0..pairs.len())];
        out.push(PathSample {
            features: Tensor::new(vec![pairs.len(), dim], data)?,
            edges,
            query,
            connected: adj[query.0 as usize][query.1 as usize],
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::checks::oracle::reachability;

    fn nearest_mean_accuracy(set: &LabeledImages, clusters: usize) -> f64 {
        let dim = set.images.shape()[1];
        let mut means = vec![vec![0.0; dim]; clusters];
        let mut counts = vec![0.0; clusters];
        for (i, &c) in set.labels.iter().enumerate() {
            counts[c] += 1.0;
            for (m, x) in means[c].iter_mut().zip(set.images.row(i)) {
                *m += x;
            }
        }
        for (m, n) in means.iter_mut().zip(&counts) {
            m.iter_mut().for_each(|v| *v /= n);
        }
        let hits = set
            .labels
            .iter()
            .enumerate()
            .filter(|&(i, &c)| {
                let x = set.images.row(i);
                let d = |m: &Vec<f64>| m.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
                (0..clusters).min_by(|&a, &b| d(&means[a]).total_cmp(&d(&means[b]))) == Some(c)
            })
            .count();
        hits as f64 / set.labels.len() as f64
    }

    #[test]
    fn digits_are_deterministic_and_separable() {
        let a = gen_synthetic_digits(10, 20, DEFAULT_SEPARATION, 5).unwrap();
        let b = gen_synthetic_digits(10, 20, DEFAULT_SEPARATION, 5).unwrap();
        assert_eq!(a.images, b.images);
        assert_eq!(a.labels, b.labels);
        assert_eq!(a.images.shape(), &[200, IMAGE_DIM]);
        let c = gen_synthetic_digits(10, 20, DEFAULT_SEPARATION, 6).unwrap();
        assert_ne!(a.images, c.images);
        let far = gen_clusters(10, 30, 16, 1e4, 1).unwrap();
        assert_eq!(nearest_mean_accuracy(&far, 10), 1.0);
        assert!(gen_clusters(3, 1, 4, 0.0, 1).is_err());
    }

    #[test]
    fn single_token_formulas_are_digits() {
        let set = gen_hwf_dataset(1, 50, 8, 4.0, 3).unwrap();
        for s in &set {
            assert_eq!(s.len(), 1);
            assert_eq!(s.value, Rational64::from_integer(s.tokens[0] as i64));
        }
        assert!(gen_hwf_dataset(4, 1, 8, 4.0, 3).is_err());
    }

    #[test]
    fn stored_values_match_reevaluation() {
        let set = gen_hwf_dataset(7, 1000, 4, 4.0, 9).unwrap();
        for s in &set {
            let text: Vec<&str> = s.tokens.iter().map(|&t| token_text(t)).collect();
            assert_eq!(evaluate_tokens(&text), Some(s.value), "{}", s.formula());
            assert_eq!(s.features.shape(), &[s.len(), 4]);
            assert!(s.tokens.iter().enumerate().all(|(i, &t)| (i % 2 == 1) == (t >= 10)));
        }
        assert!(set.iter().any(|s| s.len() == 7));
    }

    #[test]
    fn path_label_extremes() {
        let none = gen_path_dataset(5, 0.0, 30, 3, 0.1, 1).unwrap();
        assert!(none.iter().all(|s| !s.connected && s.edges.is_empty()));
        let all = gen_path_dataset(5, 1.0, 30, 3, 0.1, 1).unwrap();
        assert!(all.iter().all(|s| s.connected));
        assert_eq!(all[0].features.shape(), &[20, 3]);
    }

    #[test]
    fn path_labels_match_second_oracle() {
        let set = gen_path_dataset(7, 0.15, 100, 3, 0.5, 4).unwrap();
        for s in &set {
            assert_eq!(reachability(&s.edges).contains(&s.query), s.connected);
        }
        let positives = set.iter().filter(|s| s.connected).count();
        assert!(positives > 10 && positives < 90, "{positives}");
    }
}
