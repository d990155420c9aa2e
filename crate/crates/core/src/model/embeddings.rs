use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use crate::corpus::Vocabulary;
use crate::error::{Error, Result};

/// Bound of the uniform initialization for lemmas without a pretrained
/// vector.
pub const OOV_INIT_BOUND: f64 = 0.05;

#[derive(Debug, Clone, Default)]
pub struct PretrainedEmbeddings {
    pub dim: usize,
    vectors: HashMap<String, Vec<f64>>,
}

impl PretrainedEmbeddings {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            vectors: HashMap::new(),
        }
    }

    pub fn insert(&mut self, token: &str, vector: Vec<f64>) -> Result<()> {
        if vector.len() != self.dim {
            return Err(Error::Dimension(format!(
                "vector for {token:?} has {} components, table has {}",
                vector.len(),
                self.dim
            )));
        }
        self.vectors.insert(token.to_string(), vector);
        Ok(())
    }

    pub fn get(&self, token: &str) -> Option<&[f64]> {
        self.vectors.get(token).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }
}

/// Reads a GloVe text file (`token v1 … vd` per line). With `restrict`, only
/// tokens present in the vocabulary are kept. Every line must have the same
/// dimension as the first.
pub fn load_glove(path: &Path, restrict: Option<&Vocabulary>) -> Result<PretrainedEmbeddings> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut table: Option<PretrainedEmbeddings> = None;
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let mut parts = line.split(' ');
        let Some(token) = parts.next().filter(|t| !t.is_empty()) else {
            continue;
        };
        let values: Vec<&str> = parts.filter(|p| !p.is_empty()).collect();
        let dim = values.len();
        let t = table.get_or_insert_with(|| PretrainedEmbeddings::new(dim));
        if dim != t.dim {
            return Err(Error::Dimension(format!(
                "{}:{}: {dim} components, expected {}",
                path.display(),
                lineno + 1,
                t.dim
            )));
        }
        if restrict.is_some_and(|v| !v.contains(token)) {
            continue;
        }
        let vector = values
            .iter()
            .map(|v| v.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::InvalidInput(format!("{}:{}: {e}", path.display(), lineno + 1)))?;
        t.vectors.insert(token.to_string(), vector);
    }
    Ok(table.unwrap_or_default())
}
