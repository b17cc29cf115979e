//! Realtime refinement loop: ingest an observation, label it uniformly at
//! random, then spend the interval's budget refining timesteps drawn from a
//! scheduler.
//!
//! A refinement round refines every cell of one sampled timestep. The
//! instantaneous perplexity of timestep `t` is measured right before
//! observation `t + 1` is ingested; for the last observation it is measured
//! after one trailing budget window.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Result, RostError};
use crate::eval::{self, PerplexityTrace};
use crate::model::World;
use crate::num::Scalar;
use crate::sampler::{self, GibbsParams};
use crate::scheduler::{Scheduler, SchedulerKind};
use crate::stream_io::{Observation, WordStream};

/// Refinement allowed between two consecutive observations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Budget {
    /// Exactly `R` rounds per interval.
    Rounds(u32),
    /// Refine until the wall-clock allowance `T_R` is spent; at least one round.
    WallClock(Duration),
}

impl Budget {
    pub fn millis(ms: u64) -> Self {
        Budget::WallClock(Duration::from_millis(ms))
    }

    /// The per-interval figure reported in comparison tables.
    pub fn amount(&self) -> u64 {
        match *self {
            Budget::Rounds(r) => r as u64,
            Budget::WallClock(d) => d.as_millis() as u64,
        }
    }
}

/// Per-timestep refinement bookkeeping, indexed by 0-based timestep.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RefinementLedger {
    /// Rounds in which the timestep was drawn.
    pub r: Vec<u64>,
    /// Word refinements spent on the timestep.
    pub words_refined: Vec<u64>,
}

impl RefinementLedger {
    fn grow(&mut self, len: usize) {
        if self.r.len() < len {
            self.r.resize(len, 0);
            self.words_refined.resize(len, 0);
        }
    }

    pub fn total_rounds(&self) -> u64 {
        self.r.iter().sum()
    }

    pub fn total_words(&self) -> u64 {
        self.words_refined.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepReport<F> {
    pub t: u32,
    pub rounds: u64,
    pub words_refined: u64,
    /// Instantaneous perplexity of the previous timestep, taken before ingest.
    pub previous_instant: Option<(u32, F)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport<F> {
    pub n_words: Vec<usize>,
    /// Instantaneous perplexity per timestep (`None` for empty timesteps).
    pub instant: Vec<Option<F>>,
    /// Per-timestep perplexity under the final model.
    pub final_per_step: Vec<Option<F>>,
    /// Perplexity of every word under the final model.
    pub final_ppx: Option<F>,
    pub ledger: RefinementLedger,
    pub total_rounds: u64,
    /// Final topic of every token, in ingestion order.
    pub labels: Vec<u32>,
}

impl<F: Scalar> RunReport<F> {
    fn empty() -> Self {
        Self {
            n_words: Vec::new(),
            instant: Vec::new(),
            final_per_step: Vec::new(),
            final_ppx: None,
            ledger: RefinementLedger::default(),
            total_rounds: 0,
            labels: Vec::new(),
        }
    }

    fn finalize(world: &World<F>, instant: Vec<Option<F>>, n_words: Vec<usize>, ledger: RefinementLedger) -> Self {
        let total_rounds = ledger.total_rounds();
        Self {
            final_per_step: eval::per_timestep_ppx(world),
            final_ppx: eval::perplexity(world, world.tokens()).ok(),
            labels: world.tokens().map(|t| t.topic.unwrap_or(u32::MAX)).collect(),
            instant,
            n_words,
            ledger,
            total_rounds,
        }
    }

    pub fn trace(&self) -> PerplexityTrace<F> {
        let pts = |v: &[Option<F>]| -> Vec<(u32, F)> {
            v.iter()
                .enumerate()
                .filter_map(|(t, p)| p.map(|p| (t as u32, p)))
                .collect()
        };
        PerplexityTrace {
            instant: pts(&self.instant),
            final_per_step: pts(&self.final_per_step),
            final_ppx: self.final_ppx.unwrap_or_else(F::nan),
            batch_ratio_instant: None,
            batch_ratio_final: None,
        }
    }
}

/// Online sampler state for one trajectory.
#[derive(Debug, Clone)]
pub struct Pipeline<F> {
    world: World<F>,
    scheduler: Scheduler<F>,
    budget: Budget,
    ledger: RefinementLedger,
    instant: Vec<Option<F>>,
    n_words: Vec<usize>,
    buf: Vec<F>,
    draw_log: Option<Vec<u32>>,
}

impl<F: Scalar> Pipeline<F> {
    pub fn new(world: World<F>, scheduler: Scheduler<F>, budget: Budget) -> Self {
        Self {
            world,
            scheduler,
            budget,
            ledger: RefinementLedger::default(),
            instant: Vec::new(),
            n_words: Vec::new(),
            buf: Vec::new(),
            draw_log: None,
        }
    }

    /// Records every timestep the scheduler draws.
    pub fn with_draw_log(mut self) -> Self {
        self.draw_log = Some(Vec::new());
        self
    }

    pub fn draw_log(&self) -> Option<&[u32]> {
        self.draw_log.as_deref()
    }

    pub fn world(&self) -> &World<F> {
        &self.world
    }

    pub fn ledger(&self) -> &RefinementLedger {
        &self.ledger
    }

    fn measure_latest(&mut self) -> Option<(u32, F)> {
        let t = self.world.num_timesteps().checked_sub(1)? as u32;
        let p = eval::instantaneous_ppx(&self.world, t).ok();
        self.instant[t as usize] = p;
        p.map(|p| (t, p))
    }

    /// One refinement round: draw a timestep and refine all its cells.
    fn round<R: Rng + ?Sized>(&mut self, horizon: u32, rng: &mut R) -> u64 {
        let t = self.scheduler.sample(horizon, rng) - 1;
        if let Some(log) = &mut self.draw_log {
            log.push(t);
        }
        let words = sampler::refine_timestep_with(&mut self.world, t, &mut self.buf, rng) as u64;
        self.ledger.r[t as usize] += 1;
        self.ledger.words_refined[t as usize] += words;
        words
    }

    /// Spends one interval's budget. Returns `(rounds, words refined)`.
    fn window<R: Rng + ?Sized>(&mut self, rng: &mut R) -> (u64, u64) {
        let horizon = self.world.num_timesteps() as u32;
        if horizon == 0 {
            return (0, 0);
        }
        let mut rounds = 0;
        let mut words = 0;
        match self.budget {
            Budget::Rounds(r) => {
                for _ in 0..r {
                    words += self.round(horizon, rng);
                    rounds += 1;
                }
            }
            Budget::WallClock(allowance) => {
                let deadline = Instant::now() + allowance;
                loop {
                    words += self.round(horizon, rng);
                    rounds += 1;
                    if Instant::now() >= deadline {
                        break;
                    }
                }
            }
        }
        (rounds, words)
    }

    /// Ingests one observation and refines until the next one is due.
    pub fn step<R: Rng + ?Sized>(&mut self, observation: &Observation, rng: &mut R) -> Result<StepReport<F>> {
        let expected = self.world.num_timesteps() as u32;
        if observation.t != expected {
            return Err(RostError::OutOfOrder { got: observation.t, expected });
        }
        let previous_instant = self.measure_latest();
        let ids = self.world.add_observation(observation.t, &observation.words)?;
        sampler::init_labels(&mut self.world, &ids, rng)?;
        self.ledger.grow(self.world.num_timesteps());
        self.instant.push(None);
        self.n_words.push(ids.len());
        let (rounds, words_refined) = self.window(rng);
        Ok(StepReport { t: observation.t, rounds, words_refined, previous_instant })
    }

    /// Runs the trailing window, measures the last observation and scores
    /// the final model.
    pub fn finish<R: Rng + ?Sized>(mut self, rng: &mut R) -> (RunReport<F>, World<F>) {
        if self.world.num_timesteps() == 0 {
            return (RunReport::empty(), self.world);
        }
        self.window(rng);
        self.measure_latest();
        let report = RunReport::finalize(&self.world, self.instant, self.n_words, self.ledger);
        (report, self.world)
    }
}

/// Online run over a whole stream.
pub fn run_stream<F: Scalar, R: Rng + ?Sized>(
    stream: &WordStream,
    scheduler: Scheduler<F>,
    budget: Budget,
    params: &GibbsParams<F>,
    cell_size: u32,
    rng: &mut R,
) -> Result<RunReport<F>> {
    let world = params.world(stream.vocab_size, cell_size)?;
    let mut pipe = Pipeline::new(world, scheduler, budget);
    for obs in &stream.observations {
        pipe.step(obs, rng)?;
    }
    Ok(pipe.finish(rng).0)
}

/// Total refinement effort granted to the batch sampler.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BatchBudget {
    /// Word refinements to reach.
    Words(u64),
    /// Online-equivalent rounds; one round is worth the mean number of
    /// words per timestep.
    Rounds(u64),
    /// Total wall-clock allowance; at least one sweep when non-zero.
    WallClock(Duration),
}

/// Batch baseline: ingest everything, initialize, then sweep until the
/// word-refinement count first reaches the target.
pub fn run_batch_baseline<F: Scalar, R: Rng + ?Sized>(
    stream: &WordStream,
    budget: BatchBudget,
    params: &GibbsParams<F>,
    cell_size: u32,
    rng: &mut R,
) -> Result<RunReport<F>> {
    let mut world = params.world(stream.vocab_size, cell_size)?;
    let mut all = Vec::with_capacity(stream.num_words());
    let mut n_words = Vec::with_capacity(stream.num_timesteps());
    for obs in &stream.observations {
        let ids = world.add_observation(obs.t, &obs.words)?;
        n_words.push(ids.len());
        all.extend(ids);
    }
    if n_words.is_empty() {
        return Ok(RunReport::empty());
    }
    sampler::init_labels(&mut world, &all, rng)?;

    let total_words = all.len() as u64;
    let mut sweeps = 0u64;
    let mut refined = 0u64;
    match budget {
        BatchBudget::Words(_) | BatchBudget::Rounds(_) => {
            let target = match budget {
                BatchBudget::Words(w) => w,
                BatchBudget::Rounds(r) => {
                    let steps = n_words.len() as u64;
                    (r * total_words).div_ceil(steps)
                }
                BatchBudget::WallClock(_) => unreachable!(),
            };
            while refined < target && total_words > 0 {
                refined += sampler::sweep(&mut world, rng) as u64;
                sweeps += 1;
            }
        }
        BatchBudget::WallClock(allowance) => {
            if !allowance.is_zero() && total_words > 0 {
                let deadline = Instant::now() + allowance;
                loop {
                    sampler::sweep(&mut world, rng);
                    sweeps += 1;
                    if Instant::now() >= deadline {
                        break;
                    }
                }
            }
        }
    }

    let ledger = RefinementLedger {
        r: vec![sweeps; n_words.len()],
        words_refined: n_words.iter().map(|&n| n as u64 * sweeps).collect(),
    };
    let per_step = eval::per_timestep_ppx(&world);
    Ok(RunReport::finalize(&world, per_step, n_words, ledger))
}

/// Averaged traces of a scheduler comparison over several restarts.
#[derive(Debug, Clone)]
pub struct Comparison<F> {
    pub schedulers: Vec<(SchedulerKind, PerplexityTrace<F>)>,
    pub batch: PerplexityTrace<F>,
    pub budget: Budget,
}

impl<F: Scalar> Comparison<F> {
    pub fn table(&self) -> Result<eval::ComparisonTable<F>> {
        let named: Vec<_> = self
            .schedulers
            .iter()
            .map(|(k, tr)| (k.name().to_string(), tr.clone()))
            .collect();
        eval::compare_report(&named, &self.batch, self.budget.amount())
    }
}

/// Settings shared by every run of a comparison.
#[derive(Debug, Clone)]
pub struct CompareConfig<F> {
    pub kinds: Vec<SchedulerKind>,
    pub q: F,
    pub eta: F,
    pub budget: Budget,
    pub params: GibbsParams<F>,
    pub cell_size: u32,
    pub restarts: u32,
}

/// Runs every scheduler and the batch baseline with `restarts` seeds
/// (`params.seed + i`), in parallel, and averages the traces per scheduler.
///
/// The batch baseline receives `R * (T + 1)` rounds (or `T_R * (T + 1)`
/// milliseconds), matching the online runs' trailing window.
pub fn compare_schedulers<F: Scalar>(stream: &WordStream, cfg: &CompareConfig<F>) -> Result<Comparison<F>> {
    if cfg.restarts == 0 {
        return Err(RostError::InvalidParameter("restarts must be >= 1".into()));
    }
    let schedulers = cfg
        .kinds
        .iter()
        .map(|&k| Scheduler::new(k, cfg.q, cfg.eta))
        .collect::<Result<Vec<_>>>()?;
    let windows = stream.num_timesteps() as u64 + 1;
    let batch_budget = match cfg.budget {
        Budget::Rounds(r) => BatchBudget::Rounds(r as u64 * windows),
        Budget::WallClock(d) => BatchBudget::WallClock(d * windows as u32),
    };

    // job j < kinds.len() is an online run, the last one is batch
    let jobs: Vec<(usize, u32)> = (0..cfg.restarts)
        .flat_map(|i| (0..=schedulers.len()).map(move |j| (j, i)))
        .collect();
    let traces = jobs
        .par_iter()
        .map(|&(j, i)| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.params.seed.wrapping_add(i as u64));
            let report = match schedulers.get(j) {
                Some(s) => run_stream(stream, *s, cfg.budget, &cfg.params, cfg.cell_size, &mut rng)?,
                None => run_batch_baseline(stream, batch_budget, &cfg.params, cfg.cell_size, &mut rng)?,
            };
            Ok(report.trace())
        })
        .collect::<Result<Vec<_>>>()?;

    let per_job = schedulers.len() + 1;
    let collect = |j: usize| -> Result<PerplexityTrace<F>> {
        let runs: Vec<_> = (0..cfg.restarts as usize)
            .map(|i| traces[i * per_job + j].clone())
            .collect();
        PerplexityTrace::average(&runs)
    };
    let batch = collect(schedulers.len())?;
    let mut out = Vec::with_capacity(schedulers.len());
    for (j, s) in schedulers.iter().enumerate() {
        let mut tr = collect(j)?;
        tr.attach_batch(&batch)?;
        out.push((s.kind, tr));
    }
    Ok(Comparison { schedulers: out, batch, budget: cfg.budget })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Position;

    fn params() -> GibbsParams<f64> {
        GibbsParams { topics: 4, ..GibbsParams::default() }
    }

    fn tiny_stream(steps: u32, per_step: i32) -> WordStream {
        WordStream {
            vocab_size: 8,
            observations: (0..steps)
                .map(|t| Observation {
                    t,
                    words: (0..per_step)
                        .map(|i| (((i + t as i32) % 8) as u32, Position::new(i * 37 % 200, i * 53 % 200, t)))
                        .collect(),
                })
                .collect(),
        }
    }

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn now_first_observation() {
        let world = params().world(8, 64).unwrap();
        let mut pipe = Pipeline::new(world, Scheduler::with_defaults(SchedulerKind::Now), Budget::Rounds(5));
        let s = tiny_stream(1, 12);
        let rep = pipe.step(&s.observations[0], &mut rng(0)).unwrap();
        assert_eq!(rep.rounds, 5);
        assert_eq!(rep.words_refined, 60);
        assert_eq!(rep.previous_instant, None);
        assert_eq!(pipe.ledger().r, vec![5]);
    }

    #[test]
    fn zero_budget_keeps_initialization() {
        let s = tiny_stream(3, 10);
        let mut r1 = rng(4);
        let rep = run_stream(&s, Scheduler::with_defaults(SchedulerKind::Uniform), Budget::Rounds(0), &params(), 64, &mut r1)
            .unwrap();
        assert_eq!(rep.total_rounds, 0);

        let mut w = params().world(8, 64).unwrap();
        let mut r2 = rng(4);
        for obs in &s.observations {
            let ids = w.add_observation(obs.t, &obs.words).unwrap();
            sampler::init_labels(&mut w, &ids, &mut r2).unwrap();
        }
        let init: Vec<u32> = w.tokens().map(|t| t.topic.unwrap()).collect();
        assert_eq!(rep.labels, init);
    }

    #[test]
    fn out_of_order_rejected() {
        let world = params().world(8, 64).unwrap();
        let mut pipe = Pipeline::new(world, Scheduler::with_defaults(SchedulerKind::Now), Budget::Rounds(1));
        let s = tiny_stream(2, 3);
        assert!(matches!(pipe.step(&s.observations[1], &mut rng(0)), Err(RostError::OutOfOrder { .. })));
    }

    #[test]
    fn uniform_two_steps_expectation() {
        // E r[0] after two steps with R=100: 100 * (1/1 + 1/2) = 150
        let s = tiny_stream(2, 4);
        let reps = 200;
        let mut total = 0u64;
        for seed in 0..reps {
            let world = params().world(8, 64).unwrap();
            let mut pipe = Pipeline::new(world, Scheduler::with_defaults(SchedulerKind::Uniform), Budget::Rounds(100));
            let mut r = rng(seed);
            for obs in &s.observations {
                pipe.step(obs, &mut r).unwrap();
            }
            total += pipe.ledger().r[0];
        }
        let mean = total as f64 / reps as f64;
        assert!((mean - 150.0).abs() / 150.0 < 0.05, "mean {mean}");
    }

    #[test]
    fn stream_report_shape_and_accounting() {
        let s = tiny_stream(6, 9);
        let rep = run_stream(&s, Scheduler::with_defaults(SchedulerKind::Now), Budget::Rounds(3), &params(), 64, &mut rng(1))
            .unwrap();
        assert_eq!(rep.instant.len(), 6);
        assert!(rep.instant.iter().all(Option::is_some));
        assert_eq!(rep.total_rounds, 3 * 7);
        // Now refines each timestep R times in its own interval; the last
        // one also gets the trailing window
        assert_eq!(rep.ledger.r, vec![3, 3, 3, 3, 3, 6]);
        assert_eq!(rep.ledger.words_refined, vec![27, 27, 27, 27, 27, 54]);

        let one = run_stream(&tiny_stream(1, 4), Scheduler::with_defaults(SchedulerKind::Now), Budget::Rounds(2), &params(), 64, &mut rng(0))
            .unwrap();
        assert_eq!(one.instant.len(), 1);

        let empty = WordStream { vocab_size: 8, observations: vec![] };
        let rep = run_stream(&empty, Scheduler::with_defaults(SchedulerKind::Now), Budget::Rounds(2), &params(), 64, &mut rng(0))
            .unwrap();
        assert!(rep.instant.is_empty() && rep.final_ppx.is_none());
    }

    #[test]
    fn deterministic_reports() {
        let s = tiny_stream(8, 15);
        let go = || {
            run_stream(&s, Scheduler::with_defaults(SchedulerKind::UniformExp), Budget::Rounds(4), &params(), 64, &mut rng(9))
                .unwrap()
        };
        assert_eq!(go(), go());
    }

    #[test]
    fn now_matches_manual_refinement() {
        let s = tiny_stream(5, 11);
        let r_per = 3;
        let rep = run_stream(&s, Scheduler::with_defaults(SchedulerKind::Now), Budget::Rounds(r_per), &params(), 64, &mut rng(21))
            .unwrap();

        let mut w = params().world(8, 64).unwrap();
        let mut r = rng(21);
        for obs in &s.observations {
            let ids = w.add_observation(obs.t, &obs.words).unwrap();
            sampler::init_labels(&mut w, &ids, &mut r).unwrap();
            for _ in 0..r_per {
                sampler::refine_timestep(&mut w, obs.t, &mut r);
            }
        }
        for _ in 0..r_per {
            sampler::refine_timestep(&mut w, 4, &mut r);
        }
        let manual: Vec<u32> = w.tokens().map(|t| t.topic.unwrap()).collect();
        assert_eq!(rep.labels, manual);
    }

    #[test]
    fn ledger_matches_instrumented_draws() {
        let s = tiny_stream(7, 5);
        for kind in SchedulerKind::ALL {
            let world = params().world(8, 64).unwrap();
            let mut pipe = Pipeline::new(world, Scheduler::with_defaults(kind), Budget::Rounds(6)).with_draw_log();
            let mut r = rng(8);
            for obs in &s.observations {
                pipe.step(obs, &mut r).unwrap();
            }
            let log = pipe.draw_log().unwrap();
            assert_eq!(log.len(), 7 * 6);
            for t in 0..7u32 {
                let drawn = log.iter().filter(|&&d| d == t).count() as u64;
                assert_eq!(pipe.ledger().r[t as usize], drawn, "{kind} t={t}");
                assert_eq!(pipe.ledger().words_refined[t as usize], drawn * 5);
            }
        }
    }

    #[test]
    fn wall_clock_always_progresses() {
        let s = tiny_stream(4, 10);
        let rep = run_stream(&s, Scheduler::with_defaults(SchedulerKind::Uniform), Budget::WallClock(Duration::ZERO), &params(), 64, &mut rng(0))
            .unwrap();
        // one round per window, five windows
        assert_eq!(rep.total_rounds, 5);

        let start = Instant::now();
        let rep = run_stream(&s, Scheduler::with_defaults(SchedulerKind::Uniform), Budget::millis(5), &params(), 64, &mut rng(0))
            .unwrap();
        assert!(rep.total_rounds >= 5);
        assert!(start.elapsed() >= Duration::from_millis(25));
    }

    #[test]
    fn batch_stopping_rule() {
        let s = tiny_stream(5, 10);
        let rep = run_batch_baseline(&s, BatchBudget::Words(125), &params(), 64, &mut rng(0)).unwrap();
        // 50 words per sweep: 3 sweeps is the first to reach 125
        assert_eq!(rep.ledger.r, vec![3; 5]);
        assert_eq!(rep.ledger.total_words(), 150);

        let rep = run_batch_baseline(&s, BatchBudget::Rounds(12), &params(), 64, &mut rng(0)).unwrap();
        // 12 rounds x 10 words = 120 -> 3 sweeps
        assert_eq!(rep.ledger.total_words(), 150);

        let rep = run_batch_baseline(&s, BatchBudget::Words(0), &params(), 64, &mut rng(0)).unwrap();
        assert_eq!(rep.ledger.total_words(), 0);
        assert!(rep.final_ppx.is_some());
    }

    #[test]
    fn batch_matches_online_effort() {
        let s = tiny_stream(6, 8);
        let online = run_stream(&s, Scheduler::with_defaults(SchedulerKind::Uniform), Budget::Rounds(4), &params(), 64, &mut rng(2))
            .unwrap();
        let batch = run_batch_baseline(&s, BatchBudget::Words(online.ledger.total_words()), &params(), 64, &mut rng(2))
            .unwrap();
        let sweep = s.num_words() as u64;
        let diff = batch.ledger.total_words() - online.ledger.total_words();
        assert!(diff < sweep);
    }

    #[test]
    fn comparison_shape() {
        let s = tiny_stream(5, 12);
        let cfg = CompareConfig {
            kinds: SchedulerKind::ALL.to_vec(),
            q: 0.5,
            eta: 0.5,
            budget: Budget::Rounds(2),
            params: params(),
            cell_size: 64,
            restarts: 2,
        };
        let cmp = compare_schedulers(&s, &cfg).unwrap();
        let table = cmp.table().unwrap();
        assert_eq!(table.rows.len(), 9);
        assert_eq!(table.rows[8].name, "batch");
        assert_eq!(table.ratio_series.len(), 8);
        assert!(cmp.schedulers.iter().all(|(_, t)| t.batch_ratio_final.is_some()));
        let again = compare_schedulers(&s, &cfg).unwrap().table().unwrap();
        assert_eq!(table, again);
    }
}
