//! Streaming spatiotemporal topic modeling.
//!
//! Words observed at spacetime positions are bucketed into grid cells; each
//! word's topic prior comes from the topic histogram of its cell and the
//! cell's six axis neighbours. Labels are inferred by collapsed Gibbs
//! sampling, either in batch or online under a per-interval refinement
//! budget, with the refined timestep drawn from one of several schedulers.
//!
//! All estimators are generic over [`Scalar`] (`f32` or `f64`); the `*64`
//! aliases below are the double-precision instantiations used by the CLI.

pub mod cli;
pub mod error;
pub mod eval;
pub mod model;
pub mod num;
pub mod pipeline;
pub mod sampler;
pub mod scheduler;
pub mod stream_io;
pub mod synth;

pub use error::{Result, RostError};
pub use eval::{compare_report, instantaneous_ppx, nmi, perplexity, ComparisonTable, PerplexityTrace};
pub use model::{cell_of, Cell, CellGrid, CellKey, Neighborhood, Position, TokenId, TopicCounts, WordToken, World};
pub use num::Scalar;
pub use pipeline::{
    compare_schedulers, run_batch_baseline, run_stream, BatchBudget, Budget, CompareConfig, Pipeline,
    RefinementLedger, RunReport, StepReport,
};
pub use sampler::{batch_gibbs, init_labels, posterior, refine_cell, refine_word, GibbsParams};
pub use scheduler::{Scheduler, SchedulerKind};
pub use stream_io::{Observation, WordStream};
pub use synth::{generate, make_separable, PlantedModel, SeparableConfig};

/// Generator used throughout; seeded from a `u64`.
pub type RostRng = rand_chacha::ChaCha8Rng;

pub type World64 = World<f64>;
pub type World32 = World<f32>;
pub type GibbsParams64 = GibbsParams<f64>;
pub type GibbsParams32 = GibbsParams<f32>;
pub type Scheduler64 = Scheduler<f64>;
pub type Scheduler32 = Scheduler<f32>;
pub type RunReport64 = RunReport<f64>;
pub type PerplexityTrace64 = PerplexityTrace<f64>;
pub type ComparisonTable64 = ComparisonTable<f64>;
pub type PlantedModel64 = PlantedModel<f64>;
