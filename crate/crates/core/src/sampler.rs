//! Collapsed Gibbs conditional over the cell grid, label initialization,
//! per-word / per-cell refinement and the batch sweep sampler.

use rand::Rng;

use crate::error::{Result, RostError};
use crate::model::{CellKey, TokenId, TopicCounts, World};
use crate::num::{unit, Scalar};

/// Dirichlet hyperparameters, topic count and generator seed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GibbsParams<F> {
    pub alpha: F,
    pub beta: F,
    pub topics: usize,
    pub seed: u64,
}

impl<F: Scalar> Default for GibbsParams<F> {
    fn default() -> Self {
        Self {
            alpha: F::from_f64_lossy(0.1),
            beta: F::from_f64_lossy(0.5),
            topics: 16,
            seed: 0,
        }
    }
}

impl<F: Scalar> GibbsParams<F> {
    pub fn validate(&self) -> Result<()> {
        if self.alpha.is_nan() || self.alpha <= F::zero() {
            return Err(RostError::InvalidParameter(format!("alpha must be > 0, got {}", self.alpha)));
        }
        if self.beta.is_nan() || self.beta <= F::zero() {
            return Err(RostError::InvalidParameter(format!("beta must be > 0, got {}", self.beta)));
        }
        if self.topics == 0 {
            return Err(RostError::InvalidParameter("topics must be >= 1".into()));
        }
        Ok(())
    }

    /// Empty world over `vocab_size` words with these hyperparameters.
    pub fn world(&self, vocab_size: usize, cell_size: u32) -> Result<World<F>> {
        self.validate()?;
        World::new(vocab_size, self.topics, self.alpha, self.beta, cell_size)
    }
}

/// Unnormalized conditional weights for a word given (already excluded)
/// topic-word counts and neighbourhood histogram.
fn conditional_weights<F: Scalar>(
    counts: &TopicCounts<F>,
    word: usize,
    exclude_topic: Option<usize>,
    hist: &[u32],
    alpha: F,
    out: &mut Vec<F>,
) {
    let k_topics = hist.len();
    let v_beta = F::from_usize_lossy(counts.vocab_size()) * counts.beta();
    let hist_total: u64 = hist.iter().map(|&h| h as u64).sum();
    let g_denom = F::from_usize_lossy(hist_total as usize) + F::from_usize_lossy(k_topics) * alpha;
    out.clear();
    for (k, &h) in hist.iter().enumerate() {
        let ex = u32::from(exclude_topic == Some(k));
        let n_kv = counts.count(k, word) - ex;
        let n_k = counts.total(k) - ex;
        let word_factor =
            (F::from_usize_lossy(n_kv as usize) + counts.beta()) / (F::from_usize_lossy(n_k as usize) + v_beta);
        let ctx_factor = (F::from_usize_lossy(h as usize) + alpha) / g_denom;
        out.push(word_factor * ctx_factor);
    }
}

/// Posterior over topics for one token, with the token itself excluded
/// from every count when it is assigned.
pub fn posterior<F: Scalar>(world: &World<F>, id: TokenId) -> Result<Vec<F>> {
    world.check_token(id)?;
    let token = *world.token(id);
    let key = world.cell_key_of(id);
    let hist = world.neighborhood_hist(key, token.topic.map(|_| id));
    let mut w = Vec::with_capacity(world.topics());
    conditional_weights(
        world.counts(),
        token.word as usize,
        token.topic.map(|z| z as usize),
        &hist,
        world.grid().alpha(),
        &mut w,
    );
    let total: F = w.iter().copied().sum();
    for p in &mut w {
        *p /= total;
    }
    Ok(w)
}

/// Inverse-CDF draw from unnormalized weights.
pub fn sample_categorical<F: Scalar, R: Rng + ?Sized>(weights: &[F], rng: &mut R) -> usize {
    let total: F = weights.iter().copied().sum();
    let target = unit::<F, R>(rng) * total;
    let mut acc = F::zero();
    let mut last_positive = 0;
    for (k, &w) in weights.iter().enumerate() {
        acc += w;
        if w > F::zero() {
            last_positive = k;
            if acc > target {
                return k;
            }
        }
    }
    last_positive
}

/// Labels each token with an independent uniform topic.
pub fn init_labels<F: Scalar, R: Rng + ?Sized>(world: &mut World<F>, ids: &[TokenId], rng: &mut R) -> Result<()> {
    for &id in ids {
        world.check_token(id)?;
        if world.token(id).topic.is_some() {
            return Err(RostError::AlreadyAssigned(id.0));
        }
    }
    let k = world.topics() as u32;
    for &id in ids {
        // a duplicated id in the list would be a double initialization
        if world.token(id).topic.is_some() {
            return Err(RostError::AlreadyAssigned(id.0));
        }
        world.assign(id, rng.gen_range(0..k));
    }
    Ok(())
}

/// Resamples one assigned token from its conditional. Returns the new topic.
pub fn refine_word<F: Scalar, R: Rng + ?Sized>(world: &mut World<F>, id: TokenId, rng: &mut R) -> Result<u32> {
    world.check_token(id)?;
    if world.token(id).topic.is_none() {
        return Err(RostError::Unassigned(id.0));
    }
    let key = world.cell_key_of(id);
    world.unassign(id);
    let hist = world.neighborhood_hist(key, None);
    let mut buf = Vec::with_capacity(world.topics());
    Ok(resample(world, id, &hist, &mut buf, rng) as u32)
}

/// Draws a label for an unassigned token given the neighbourhood histogram
/// (which must already exclude it) and assigns it.
fn resample<F: Scalar, R: Rng + ?Sized>(
    world: &mut World<F>,
    id: TokenId,
    hist: &[u32],
    buf: &mut Vec<F>,
    rng: &mut R,
) -> usize {
    let word = world.token(id).word as usize;
    conditional_weights(world.counts(), word, None, hist, world.grid().alpha(), buf);
    let z = sample_categorical(buf, rng);
    world.assign(id, z as u32);
    z
}

/// Refines every token of a cell in insertion order. Unknown keys refine nothing.
pub fn refine_cell<F: Scalar, R: Rng + ?Sized>(world: &mut World<F>, key: CellKey, rng: &mut R) -> usize {
    match world.grid().cell_index(key) {
        Some(ci) => refine_cell_index(world, ci, &mut Vec::new(), rng),
        None => 0,
    }
}

pub(crate) fn refine_cell_index<F: Scalar, R: Rng + ?Sized>(
    world: &mut World<F>,
    ci: usize,
    buf: &mut Vec<F>,
    rng: &mut R,
) -> usize {
    let key = world.grid().cell_by_index(ci).key;
    let n = world.grid().cell_by_index(ci).tokens.len();
    // every token of the cell shares G(c), and c is in G(c), so the summed
    // histogram only moves by the label changes made here
    let mut hist = world.grid().neighborhood_hist(key);
    for i in 0..n {
        let id = world.grid().cell_by_index(ci).tokens[i];
        if let Some(old) = world.unassign(id) {
            hist[old as usize] -= 1;
        }
        let z = resample(world, id, &hist, buf, rng);
        hist[z] += 1;
    }
    n
}

/// Refines all cells observed at timestep `t` (0-indexed). Returns words refined.
pub fn refine_timestep<F: Scalar, R: Rng + ?Sized>(world: &mut World<F>, t: u32, rng: &mut R) -> usize {
    refine_timestep_with(world, t, &mut Vec::new(), rng)
}

pub(crate) fn refine_timestep_with<F: Scalar, R: Rng + ?Sized>(
    world: &mut World<F>,
    t: u32,
    buf: &mut Vec<F>,
    rng: &mut R,
) -> usize {
    let mut refined = 0;
    for i in 0..world.grid().cell_indices_at(t).len() {
        let ci = world.grid().cell_indices_at(t)[i];
        refined += refine_cell_index(world, ci, buf, rng);
    }
    refined
}

/// One full pass over every cell in `(ct, cy, cx)` order.
pub fn sweep<F: Scalar, R: Rng + ?Sized>(world: &mut World<F>, rng: &mut R) -> usize {
    let mut buf = Vec::with_capacity(world.topics());
    (0..world.num_timesteps() as u32)
        .map(|t| refine_timestep_with(world, t, &mut buf, rng))
        .sum()
}

/// `n_sweeps` full passes of the batch sampler. Returns words refined.
pub fn batch_gibbs<F: Scalar, R: Rng + ?Sized>(world: &mut World<F>, n_sweeps: usize, rng: &mut R) -> u64 {
    (0..n_sweeps).map(|_| sweep(world, rng) as u64).sum()
}
