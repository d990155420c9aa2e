use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::objective::ConstraintKind;

use super::config::{ExperimentConfig, RunConfig};
use super::data::Dataset;
use super::run::{train_one, write_run, RunPaths, RunRecord, RunStatus};
use super::with_mode;

/// `root/<config_hash>/{record.json, history.csv, checkpoint.bin}`. Each run
/// owns its directory, so concurrent writers never share a file.
#[derive(Debug, Clone)]
pub struct ResultStore {
    root: PathBuf,
}

impl ResultStore {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn paths(&self, hash: &str) -> RunPaths {
        RunPaths {
            dir: self.root.join(hash),
        }
    }

    pub fn load(&self, hash: &str) -> Result<Option<RunRecord>> {
        let path = self.paths(hash).record();
        if !path.exists() {
            return Ok(None);
        }
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        Ok(Some(serde_json::from_str(&text)?))
    }

    pub fn is_completed(&self, hash: &str) -> Result<bool> {
        Ok(self.load(hash)?.is_some_and(|r| r.is_completed()))
    }

    /// Every record in the store, ordered by config hash.
    pub fn records(&self) -> Result<Vec<RunRecord>> {
        if !self.root.exists() {
            return Ok(Vec::new());
        }
        let mut dirs: Vec<PathBuf> = std::fs::read_dir(&self.root)
            .map_err(|e| Error::io(&self.root, e))?
            .filter_map(|entry| entry.ok().map(|e| e.path()))
            .filter(|p| p.join("record.json").is_file())
            .collect();
        dirs.sort();
        dirs.into_iter()
            .map(|d| {
                let path = d.join("record.json");
                let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
                Ok(serde_json::from_str(&text)?)
            })
            .collect()
    }
}

#[derive(Debug, Clone, Default)]
pub struct SweepOutcome {
    /// One record per grid cell, in grid order.
    pub records: Vec<RunRecord>,
    pub trained: usize,
    pub skipped: usize,
    pub failed: usize,
}

impl SweepOutcome {
    pub fn exit_code(&self) -> i32 {
        if self.failed > 0 {
            2
        } else {
            0
        }
    }
}

fn failed_record(run: &RunConfig, reason: String) -> RunRecord {
    RunRecord {
        config_hash: run.hash(),
        corpus: run.corpus.name,
        constraint: run.constraint.kind,
        lambda: run.constraint.lambda,
        layers: run.model.num_bilstm_layers,
        seed: run.seed,
        status: RunStatus::Failed { reason },
        vocab_hash: String::new(),
        history: Vec::new(),
        best_epoch: None,
        results: Default::default(),
        checkpoint: None,
        wall_clock_secs: 0.0,
        config: run.clone(),
    }
}

/// Trains every grid cell not already completed in `store`. A cell that
/// fails is recorded and the sweep moves on; failed cells are retried on
/// the next invocation.
pub fn sweep(config: &ExperimentConfig, store: &ResultStore) -> Result<SweepOutcome> {
    config.validate()?;
    let cells = config.expand_grid();
    let mut outcome = SweepOutcome::default();
    let mut pending = Vec::new();
    for run in &cells {
        match store.load(&run.hash())? {
            Some(r) if r.is_completed() => outcome.skipped += 1,
            _ => pending.push(run),
        }
    }
    if !pending.is_empty() {
        let with_heuristics = pending.iter().any(|r| {
            r.constraint.is_active() && r.constraint.kind == ConstraintKind::SemiSupervised
        });
        let data = Dataset::prepare(&config.corpus, with_heuristics);
        for run in pending {
            let paths = store.paths(&run.hash());
            log::info!(
                "training {} ({} λ={} layers={} seed={})",
                run.hash(),
                run.constraint.kind.as_str(),
                run.constraint.lambda,
                run.model.num_bilstm_layers,
                run.seed
            );
            let result = match &data {
                Ok(d) => with_mode(config.training.deterministic, || {
                    train_one(run, d, Some(&paths))
                }),
                Err(e) => Err(Error::InvalidInput(format!("data preparation failed: {e}"))),
            };
            let record = match result {
                Ok(r) => r,
                Err(e) => {
                    let r = failed_record(run, e.to_string());
                    write_run(&paths, &r)?;
                    r
                }
            };
            outcome.trained += 1;
            if !record.is_completed() {
                outcome.failed += 1;
            }
        }
    }
    for run in &cells {
        let record = store
            .load(&run.hash())?
            .ok_or_else(|| Error::InvalidInput(format!("missing record for {}", run.hash())))?;
        outcome.records.push(record);
    }
    Ok(outcome)
}
