//! Perplexity, label agreement and the scheduler comparison table.
//!
//! Perplexity uses the marginal predictive of the current model state,
//! `p(w | x) = sum_k phi_k(w) theta_{c(x)}(k)`, without excluding the scored
//! token from the counts:
//!
//! `ppx = exp(-(1/N) sum_i ln p(w_i | x_i))`.

use std::collections::HashMap;

use crate::error::{Result, RostError};
use crate::model::{CellKey, Position, WordToken, World};
use crate::num::Scalar;

/// Caches `theta` per cell and the `phi` denominators for repeated scoring.
struct Predictive<'a, F> {
    world: &'a World<F>,
    phi_denoms: Vec<F>,
    thetas: HashMap<CellKey, Vec<F>>,
}

impl<'a, F: Scalar> Predictive<'a, F> {
    fn new(world: &'a World<F>) -> Self {
        let counts = world.counts();
        let v_beta = F::from_usize_lossy(world.vocab_size()) * counts.beta();
        let phi_denoms = counts
            .totals()
            .iter()
            .map(|&n| F::from_usize_lossy(n as usize) + v_beta)
            .collect();
        Self { world, phi_denoms, thetas: HashMap::new() }
    }

    fn prob(&mut self, word: u32, pos: Position) -> F {
        let key = self.world.grid().cell_of(pos);
        let world = self.world;
        let theta = self.thetas.entry(key).or_insert_with(|| world.theta(key));
        let counts = world.counts();
        let beta = counts.beta();
        theta
            .iter()
            .zip(&self.phi_denoms)
            .enumerate()
            .map(|(k, (&th, &den))| {
                (F::from_usize_lossy(counts.count(k, word as usize) as usize) + beta) / den * th
            })
            .sum()
    }
}

/// Perplexity of arbitrary `(word, position)` pairs under the model.
pub fn perplexity_of<F, I>(world: &World<F>, words: I) -> Result<F>
where
    F: Scalar,
    I: IntoIterator<Item = (u32, Position)>,
{
    let mut pred = Predictive::new(world);
    let mut log_sum = F::zero();
    let mut n = 0usize;
    for (word, pos) in words {
        log_sum += pred.prob(word, pos).ln();
        n += 1;
    }
    if n == 0 {
        return Err(RostError::EmptyTokens);
    }
    Ok((-log_sum / F::from_usize_lossy(n)).exp())
}

pub fn perplexity<'t, F: Scalar>(world: &World<F>, tokens: impl IntoIterator<Item = &'t WordToken>) -> Result<F> {
    perplexity_of(world, tokens.into_iter().map(|t| (t.word, t.pos)))
}

/// Perplexity of the words observed at timestep `t`.
pub fn instantaneous_ppx<F: Scalar>(world: &World<F>, t: u32) -> Result<F> {
    if t as usize >= world.num_timesteps() {
        return Err(RostError::UnknownTimestep(t));
    }
    let ids = world.tokens_at(t);
    perplexity(world, ids.iter().map(|&id| world.token(id)))
}

/// Per-timestep perplexity under the current state; `None` for empty timesteps.
pub fn per_timestep_ppx<F: Scalar>(world: &World<F>) -> Vec<Option<F>> {
    (0..world.num_timesteps() as u32)
        .map(|t| instantaneous_ppx(world, t).ok())
        .collect()
}

fn entropy(counts: impl Iterator<Item = usize>, n: f64) -> f64 {
    counts
        .filter(|&c| c > 0)
        .map(|c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// Normalized mutual information `I(A;B) / sqrt(H(A) H(B))`.
///
/// Two constant labelings are identical up to renaming and score 1; a
/// constant labeling against a non-constant one scores 0.
pub fn nmi<F: Scalar>(labels_a: &[u32], labels_b: &[u32]) -> Result<F> {
    if labels_a.len() != labels_b.len() {
        return Err(RostError::LengthMismatch(labels_a.len(), labels_b.len()));
    }
    if labels_a.is_empty() {
        return Err(RostError::EmptyTokens);
    }
    let n = labels_a.len() as f64;
    let mut joint: HashMap<(u32, u32), usize> = HashMap::new();
    let mut ma: HashMap<u32, usize> = HashMap::new();
    let mut mb: HashMap<u32, usize> = HashMap::new();
    for (&a, &b) in labels_a.iter().zip(labels_b) {
        *joint.entry((a, b)).or_default() += 1;
        *ma.entry(a).or_default() += 1;
        *mb.entry(b).or_default() += 1;
    }
    let ha = entropy(ma.values().copied(), n);
    let hb = entropy(mb.values().copied(), n);
    if ha == 0.0 && hb == 0.0 {
        return Ok(F::one());
    }
    if ha == 0.0 || hb == 0.0 {
        return Ok(F::zero());
    }
    let mi: f64 = joint
        .iter()
        .map(|(&(a, b), &c)| {
            let pab = c as f64 / n;
            let pa = ma[&a] as f64 / n;
            let pb = mb[&b] as f64 / n;
            pab * (pab / (pa * pb)).ln()
        })
        .sum();
    let score = (mi / (ha * hb).sqrt()).clamp(0.0, 1.0);
    Ok(F::from_f64_lossy(score))
}

/// Instantaneous and final perplexities of one run (or a restart average).
#[derive(Debug, Clone, PartialEq)]
pub struct PerplexityTrace<F> {
    /// `(t, perplexity)` measured one timestep after arrival.
    pub instant: Vec<(u32, F)>,
    /// `(t, perplexity)` of each timestep under the end-of-stream model.
    pub final_per_step: Vec<(u32, F)>,
    /// Perplexity of all words under the end-of-stream model.
    pub final_ppx: F,
    pub batch_ratio_instant: Option<Vec<(u32, F)>>,
    pub batch_ratio_final: Option<F>,
}

fn mean<F: Scalar>(points: &[(u32, F)]) -> F {
    if points.is_empty() {
        return F::nan();
    }
    points.iter().map(|p| p.1).sum::<F>() / F::from_usize_lossy(points.len())
}

impl<F: Scalar> PerplexityTrace<F> {
    pub fn mean_instant(&self) -> F {
        mean(&self.instant)
    }

    pub fn mean_final(&self) -> F {
        mean(&self.final_per_step)
    }

    /// Element-wise mean of traces over the same stream.
    pub fn average(traces: &[PerplexityTrace<F>]) -> Result<Self> {
        let first = traces.first().ok_or(RostError::EmptyTokens)?;
        for tr in traces {
            if tr.instant.len() != first.instant.len() || tr.final_per_step.len() != first.final_per_step.len() {
                return Err(RostError::LengthMismatch(tr.instant.len(), first.instant.len()));
            }
        }
        let n = F::from_usize_lossy(traces.len());
        let avg = |pick: fn(&PerplexityTrace<F>) -> &Vec<(u32, F)>| -> Vec<(u32, F)> {
            (0..pick(first).len())
                .map(|i| {
                    let t = pick(first)[i].0;
                    (t, traces.iter().map(|tr| pick(tr)[i].1).sum::<F>() / n)
                })
                .collect()
        };
        Ok(Self {
            instant: avg(|t| &t.instant),
            final_per_step: avg(|t| &t.final_per_step),
            final_ppx: traces.iter().map(|t| t.final_ppx).sum::<F>() / n,
            batch_ratio_instant: None,
            batch_ratio_final: None,
        })
    }

    /// Fills the ratio fields against a batch trace over the same stream.
    pub fn attach_batch(&mut self, batch: &PerplexityTrace<F>) -> Result<()> {
        if self.instant.len() != batch.final_per_step.len() {
            return Err(RostError::LengthMismatch(self.instant.len(), batch.final_per_step.len()));
        }
        self.batch_ratio_instant = Some(
            self.instant
                .iter()
                .zip(&batch.final_per_step)
                .map(|(&(t, p), &(_, b))| (t, p / b))
                .collect(),
        );
        self.batch_ratio_final = Some(self.final_ppx / batch.final_ppx);
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow<F> {
    pub name: String,
    pub mean_instant_ppx: F,
    pub mean_final_ppx: F,
    pub instant_ratio: F,
    pub final_ratio: F,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RatioSeries<F> {
    pub name: String,
    /// `(t, instant / batch, final / batch)`.
    pub points: Vec<(u32, F, F)>,
}

/// Mean perplexities per scheduler and their ratios to the batch baseline,
/// one row per scheduler followed by a `batch` row.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonTable<F> {
    /// Budget per interval (R rounds or T_R milliseconds).
    pub budget: u64,
    pub rows: Vec<ComparisonRow<F>>,
    pub ratio_series: Vec<RatioSeries<F>>,
}

impl<F: Scalar> ComparisonTable<F> {
    pub fn row(&self, name: &str) -> Option<&ComparisonRow<F>> {
        self.rows.iter().find(|r| r.name == name)
    }
}

/// Assembles the comparison table. The batch trace's per-timestep
/// perplexities serve as the denominator for both instantaneous and final
/// ratios.
pub fn compare_report<F: Scalar>(
    traces: &[(String, PerplexityTrace<F>)],
    batch: &PerplexityTrace<F>,
    budget: u64,
) -> Result<ComparisonTable<F>> {
    let batch_mean = batch.mean_final();
    let mut rows = Vec::with_capacity(traces.len() + 1);
    let mut ratio_series = Vec::with_capacity(traces.len());
    for (name, tr) in traces {
        let n = batch.final_per_step.len();
        if tr.instant.len() != n || tr.final_per_step.len() != n {
            return Err(RostError::LengthMismatch(tr.instant.len(), n));
        }
        if tr.instant.iter().zip(&batch.final_per_step).any(|(a, b)| a.0 != b.0) {
            return Err(RostError::InvalidParameter(format!("trace '{name}' covers different timesteps")));
        }
        let mi = tr.mean_instant();
        let mf = tr.mean_final();
        rows.push(ComparisonRow {
            name: name.clone(),
            mean_instant_ppx: mi,
            mean_final_ppx: mf,
            instant_ratio: mi / batch_mean,
            final_ratio: mf / batch_mean,
        });
        ratio_series.push(RatioSeries {
            name: name.clone(),
            points: tr
                .instant
                .iter()
                .zip(&tr.final_per_step)
                .zip(&batch.final_per_step)
                .map(|((&(t, i), &(_, f)), &(_, b))| (t, i / b, f / b))
                .collect(),
        });
    }
    rows.push(ComparisonRow {
        name: "batch".into(),
        mean_instant_ppx: batch.mean_instant(),
        mean_final_ppx: batch_mean,
        instant_ratio: batch.mean_instant() / batch_mean,
        final_ratio: F::one(),
    });
    Ok(ComparisonTable { budget, rows, ratio_series })
}
