//! Training runs, sweeps over the experiment grid and the on-disk result
//! store.

mod config;
mod data;
mod optim;
mod run;
mod store;

pub use config::{
    CorpusConfig, ExperimentConfig, GridConfig, OptimizerConfig, RunConfig, TrainingConfig,
    CONFIG_VERSION, DEFAULT_LAMBDA_GRID,
};
pub use data::{load_split, Dataset};
pub use optim::Adam;
pub use run::{
    evaluate_checkpoint, evaluate_examples, train_one, EpochRecord, Evaluation, RunPaths,
    RunRecord, RunStatus, SplitResult,
};
pub use store::{sweep, ResultStore, SweepOutcome};

/// Examples per gradient shard. Shards are reduced in index order, so the
/// summed gradient does not depend on how many threads computed them.
pub const SHARD_SIZE: usize = 8;

/// `items.map(f)` with results in input order, in parallel when the
/// `parallel` feature is on.
pub(crate) fn map_ordered<T: Sync, R: Send>(
    items: &[T],
    f: impl Fn(&T) -> R + Sync + Send,
) -> Vec<R> {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().map(f).collect()
    }
}

/// Runs `f` on a single worker thread when `deterministic` is set.
pub fn with_mode<R: Send>(deterministic: bool, f: impl FnOnce() -> R + Send) -> R {
    #[cfg(feature = "parallel")]
    if deterministic {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .expect("single-thread pool");
        return pool.install(f);
    }
    let _ = deterministic;
    f()
}
