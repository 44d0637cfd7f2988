//! Synthetic multi-label data with planted linear rules and tunable label
//! correlation.
//!
//! Each example draws a feature vector `x ~ N(0, I_d)`. Label 0 is
//! `w_0·x > 0` flipped with probability `noise`. Label `k > 0` copies label
//! `k-1` with probability `correlation` and otherwise follows its own rule
//! `w_k·x > 0`, again with flip noise. Rule vectors are orthonormalised while
//! `k < d`, so labels that do not copy are independent of each other.
//!
//! The image embedding is `x` and the text embedding is all ones, so fusion
//! returns `x` unchanged. Optional paraphrase copies keep the image embedding
//! and perturb the text embedding with Gaussian noise.

use std::collections::BTreeSet;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::dataset::{Dataset, Example, Origin, Taxonomy};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Augment {
    /// Paraphrase copies per group.
    pub copies: usize,
    /// Standard deviation of the additive text-embedding perturbation.
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub n_examples: usize,
    pub feature_dim: usize,
    pub n_labels: usize,
    pub correlation: f64,
    pub noise: f64,
    pub seed: u64,
    pub augment: Option<Augment>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_examples: 1000,
            feature_dim: 8,
            n_labels: 4,
            correlation: 0.5,
            noise: 0.1,
            seed: 0,
            augment: None,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_examples == 0 || self.feature_dim == 0 || self.n_labels == 0 {
            return Err(Error::InvalidArgument(
                "n_examples, feature_dim and n_labels must be positive".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.correlation) {
            return Err(Error::InvalidArgument(format!(
                "correlation must be in [0, 1], got {}",
                self.correlation
            )));
        }
        if !(0.0..=0.5).contains(&self.noise) {
            return Err(Error::InvalidArgument(format!(
                "noise must be in [0, 0.5], got {}",
                self.noise
            )));
        }
        if let Some(a) = self.augment {
            if !(a.sigma >= 0.0 && a.sigma.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "augment sigma must be >= 0, got {}",
                    a.sigma
                )));
            }
        }
        Ok(())
    }

    pub fn taxonomy(&self) -> Taxonomy {
        Taxonomy::new((0..self.n_labels).map(|k| format!("label_{k}")))
            .expect("generated names are unique")
    }
}

/// Generates a dataset; identical configs give identical output.
pub fn generate(cfg: &SynthConfig) -> Result<Dataset> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let rules = rule_vectors(&mut rng, cfg.n_labels, cfg.feature_dim);
    let width = cfg.n_examples.to_string().len();
    let mut examples =
        Vec::with_capacity(cfg.n_examples * (1 + cfg.augment.map_or(0, |a| a.copies)));

    for n in 0..cfg.n_examples {
        let x: Vec<f64> = (0..cfg.feature_dim)
            .map(|_| rng.sample(StandardNormal))
            .collect();
        let mut labels = Vec::with_capacity(cfg.n_labels);
        for (k, w) in rules.iter().enumerate() {
            let label = if k > 0 && rng.gen_bool(cfg.correlation) {
                labels[k - 1]
            } else {
                let planted = w.iter().zip(&x).map(|(a, b)| a * b).sum::<f64>() > 0.0;
                planted ^ rng.gen_bool(cfg.noise)
            };
            labels.push(label);
        }
        let gold: BTreeSet<usize> = labels
            .iter()
            .enumerate()
            .filter(|(_, &y)| y)
            .map(|(k, _)| k)
            .collect();
        let id = format!("s{n:0width$}");

        examples.push(Example {
            id: id.clone(),
            group: id.clone(),
            image_embedding: x.clone(),
            text_embedding: vec![1.0; cfg.feature_dim],
            origin: Origin::Original,
            gold: Some(gold.clone()),
        });
        if let Some(aug) = cfg.augment {
            for c in 0..aug.copies {
                let text: Vec<f64> = (0..cfg.feature_dim)
                    .map(|_| {
                        let e: f64 = StandardNormal.sample(&mut rng);
                        1.0 + aug.sigma * e
                    })
                    .collect();
                examples.push(Example {
                    id: format!("{id}-p{c}"),
                    group: id.clone(),
                    image_embedding: x.clone(),
                    text_embedding: text,
                    origin: Origin::Paraphrase,
                    gold: Some(gold.clone()),
                });
            }
        }
    }
    Dataset::new(cfg.taxonomy(), examples)
}

/// Gaussian directions, Gram–Schmidt orthonormalised for the first `d`.
fn rule_vectors(rng: &mut ChaCha8Rng, n_labels: usize, d: usize) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(n_labels);
    for k in 0..n_labels {
        let mut v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        if k < d {
            for u in &out {
                let proj: f64 = v.iter().zip(u).map(|(a, b)| a * b).sum();
                v.iter_mut().zip(u).for_each(|(a, b)| *a -= proj * b);
            }
        }
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm > 0.0 {
            v.iter_mut().for_each(|a| *a /= norm);
        }
        out.push(v);
    }
    out
}
