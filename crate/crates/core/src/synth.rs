//! Synthetic word streams with planted topics.
//!
//! Topics are block-diagonal over the vocabulary, so a word alone identifies
//! its true topic. Each cell's topic mixture is a softmax of a slowly varying
//! sinusoid field over space and time; `smoothness` scales the field, and at
//! zero every cell shares the uniform mixture.

use std::collections::BTreeMap;
use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, RostError};
use crate::model::{cell_of, CellKey, Position, DEFAULT_CELL_SIZE};
use crate::num::Scalar;
use crate::sampler::sample_categorical;
use crate::stream_io::{Observation, WordStream};

/// Peak logit magnitude of the field at `smoothness = 1`.
const FIELD_GAIN: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeparableConfig {
    pub topics: usize,
    pub vocab_size: usize,
    /// Spatial width and height of the world, in cells.
    pub extent: u32,
    pub steps: u32,
    pub words_per_step: usize,
    pub smoothness: f64,
    pub cell_size: u32,
    pub seed: u64,
}

impl Default for SeparableConfig {
    fn default() -> Self {
        Self {
            topics: 8,
            vocab_size: 100,
            extent: 4,
            steps: 200,
            words_per_step: 50,
            smoothness: 1.0,
            cell_size: DEFAULT_CELL_SIZE,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlantedModel<F> {
    /// `K x V`, row-stochastic.
    pub phi_true: Vec<Vec<F>>,
    pub theta_field: BTreeMap<CellKey, Vec<F>>,
    pub words_per_step: usize,
    pub extent: u32,
    pub steps: u32,
    pub cell_size: u32,
    pub seed: u64,
}

impl<F: Scalar> PlantedModel<F> {
    pub fn topics(&self) -> usize {
        self.phi_true.len()
    }

    pub fn vocab_size(&self) -> usize {
        self.phi_true.first().map_or(0, Vec::len)
    }

    /// Size of each topic's vocabulary slice.
    pub fn slice_len(&self) -> usize {
        self.vocab_size() / self.topics()
    }

    /// True topic of a word under the block-diagonal construction.
    pub fn topic_of_word(&self, word: u32) -> u32 {
        (word as usize / self.slice_len()) as u32
    }

    /// Mean cell mixture over the whole field.
    pub fn mean_theta(&self) -> Vec<F> {
        let mut acc = vec![F::zero(); self.topics()];
        for th in self.theta_field.values() {
            for (a, &p) in acc.iter_mut().zip(th) {
                *a += p;
            }
        }
        let n = F::from_usize_lossy(self.theta_field.len());
        acc.into_iter().map(|a| a / n).collect()
    }
}

pub fn make_separable<F: Scalar>(cfg: &SeparableConfig) -> Result<PlantedModel<F>> {
    if cfg.topics == 0 {
        return Err(RostError::InvalidParameter("topics must be >= 1".into()));
    }
    if cfg.vocab_size < cfg.topics {
        return Err(RostError::InvalidParameter(format!(
            "vocabulary size {} is smaller than topic count {}",
            cfg.vocab_size, cfg.topics
        )));
    }
    if !(0.0..=1.0).contains(&cfg.smoothness) {
        return Err(RostError::InvalidParameter(format!("smoothness must lie in [0, 1], got {}", cfg.smoothness)));
    }
    if cfg.extent == 0 || cfg.cell_size == 0 {
        return Err(RostError::InvalidParameter("extent and cell size must be positive".into()));
    }

    let slice = cfg.vocab_size / cfg.topics;
    let weight = F::one() / F::from_usize_lossy(slice);
    let phi_true = (0..cfg.topics)
        .map(|k| {
            (0..cfg.vocab_size)
                .map(|v| if v / slice == k { weight } else { F::zero() })
                .collect()
        })
        .collect();

    // one low-frequency plane wave per topic
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let waves: Vec<[f64; 4]> = (0..cfg.topics)
        .map(|_| {
            let sign = |r: &mut ChaCha8Rng| if r.gen::<bool>() { 1.0 } else { -1.0 };
            let fx = sign(&mut rng) * rng.gen_range(0.25..1.0);
            let fy = sign(&mut rng) * rng.gen_range(0.25..1.0);
            let ft = rng.gen_range(0.5..2.0);
            let phase = rng.gen_range(0.0..TAU);
            [fx, fy, ft, phase]
        })
        .collect();

    let extent = cfg.extent as f64;
    let steps = cfg.steps.max(1) as f64;
    let mut theta_field = BTreeMap::new();
    for ct in 0..cfg.steps {
        for cy in 0..cfg.extent as i32 {
            for cx in 0..cfg.extent as i32 {
                let logits: Vec<f64> = waves
                    .iter()
                    .map(|&[fx, fy, ft, phase]| {
                        let arg = TAU * (fx * cx as f64 / extent + fy * cy as f64 / extent + ft * ct as f64 / steps);
                        FIELD_GAIN * cfg.smoothness * (arg + phase).sin()
                    })
                    .collect();
                let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
                let z: f64 = exps.iter().sum();
                let theta = exps.iter().map(|e| F::from_f64_lossy(e / z)).collect();
                theta_field.insert(CellKey::new(cx, cy, ct), theta);
            }
        }
    }

    Ok(PlantedModel {
        phi_true,
        theta_field,
        words_per_step: cfg.words_per_step,
        extent: cfg.extent,
        steps: cfg.steps,
        cell_size: cfg.cell_size,
        seed: cfg.seed,
    })
}

/// Draws a stream from the planted model. Returns the stream and the true
/// topic of every word, aligned per observation.
pub fn generate<F: Scalar>(model: &PlantedModel<F>) -> (WordStream, Vec<Vec<u32>>) {
    let mut rng = ChaCha8Rng::seed_from_u64(model.seed);
    // separate stream from the one that built the field
    rng.set_stream(1);
    let span = (model.extent * model.cell_size) as i32;
    let mut observations = Vec::with_capacity(model.steps as usize);
    let mut labels = Vec::with_capacity(model.steps as usize);
    for t in 0..model.steps {
        let mut words = Vec::with_capacity(model.words_per_step);
        let mut zs = Vec::with_capacity(model.words_per_step);
        for _ in 0..model.words_per_step {
            let pos = Position::new(rng.gen_range(0..span), rng.gen_range(0..span), t);
            let theta = &model.theta_field[&cell_of(pos, model.cell_size)];
            let z = sample_categorical(theta, &mut rng);
            let w = sample_categorical(&model.phi_true[z], &mut rng);
            words.push((w as u32, pos));
            zs.push(z as u32);
        }
        observations.push(Observation { t, words });
        labels.push(zs);
    }
    let stream = WordStream { vocab_size: model.vocab_size(), observations };
    (stream, labels)
}
