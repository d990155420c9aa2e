use std::str::FromStr;

use crate::corpus::{read_jsonl, CorpusName, Example, Split, Task, Vocabulary};
use crate::error::{Error, Result};
use crate::heuristic::{
    align_heuristics, build_heuristic_maps, read_heuristics, FrequencyTable, WeightSource,
};
use crate::model::{load_glove, PretrainedEmbeddings};

use super::config::CorpusConfig;

/// Examples of one split. Accepts `train`, `val` (or `dev`, `validation`)
/// and `test`.
pub fn load_split(corpus: &CorpusConfig, split: &str) -> Result<Vec<Example>> {
    let split = Split::from_str(split)?;
    let mut examples = if corpus.name == CorpusName::Synthetic {
        corpus.synthetic.generate_split(split)
    } else {
        let path = match split {
            Split::Train => &corpus.train,
            Split::Val => &corpus.val,
            Split::Test => &corpus.test,
        };
        let path = path.as_ref().ok_or_else(|| {
            Error::Config(format!(
                "no {split} file configured for corpus {}",
                corpus.name
            ))
        })?;
        read_jsonl(path)?
    };
    if let Some(max) = corpus.max_tokens {
        examples.retain(|e| e.num_tokens() <= max);
    }
    let task = corpus.name.task();
    if let Some(bad) = examples.iter().find(|e| e.task != task) {
        return Err(Error::InvalidInput(format!(
            "example {} is {:?} but corpus {} is {:?}",
            bad.id, bad.task, corpus.name, task
        )));
    }
    Ok(examples)
}

/// Splits, vocabulary and auxiliary inputs shared by every run on a corpus.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub train: Vec<Example>,
    pub val: Vec<Example>,
    pub test: Option<Vec<Example>>,
    pub vocab: Vocabulary,
    pub pretrained: Option<PretrainedEmbeddings>,
    /// Heuristic maps aligned with `train`.
    pub heuristics: Option<Vec<Option<Vec<Vec<f64>>>>>,
}

impl Dataset {
    /// Loads the splits and builds the vocabulary from the training split.
    /// Heuristic maps are read or built only when `with_heuristics` is set.
    pub fn prepare(corpus: &CorpusConfig, with_heuristics: bool) -> Result<Self> {
        let train = load_split(corpus, "train")?;
        if train.is_empty() {
            return Err(Error::InvalidInput("training split is empty".into()));
        }
        let val = load_split(corpus, "val")?;
        let has_test = corpus.name == CorpusName::Synthetic && corpus.synthetic.n_test > 0
            || corpus.test.is_some();
        let test = if has_test {
            Some(load_split(corpus, "test")?)
        } else {
            None
        };
        let vocab = Vocabulary::build(&train, corpus.min_count);
        let pretrained = corpus
            .embeddings
            .as_deref()
            .map(|p| load_glove(p, Some(&vocab)))
            .transpose()?;
        let mut data = Self {
            train,
            val,
            test,
            vocab,
            pretrained,
            heuristics: None,
        };
        if with_heuristics {
            data.heuristics = Some(data.training_heuristics(corpus)?);
        }
        Ok(data)
    }

    fn training_heuristics(&self, corpus: &CorpusConfig) -> Result<Vec<Option<Vec<Vec<f64>>>>> {
        if let Some(path) = &corpus.heuristics {
            return align_heuristics(&self.train, &read_heuristics(path)?);
        }
        let table;
        let source = match corpus.name.task() {
            Task::Classification => {
                table = FrequencyTable::build(&self.train)?;
                WeightSource::Frequency(&table)
            }
            Task::Nli => WeightSource::Similarity(self.pretrained.as_ref().ok_or_else(|| {
                Error::MissingAuxiliary(
                    "NLI heuristic maps need pretrained embeddings or a heuristics file".into(),
                )
            })?),
        };
        let maps = build_heuristic_maps(&self.train, source, &corpus.filter)?;
        Ok(maps
            .into_iter()
            .map(|segs| Some(segs.into_iter().map(|m| m.values).collect()))
            .collect())
    }

    pub fn split(&self, split: Split) -> Result<&[Example]> {
        match split {
            Split::Train => Ok(&self.train),
            Split::Val => Ok(&self.val),
            Split::Test => self
                .test
                .as_deref()
                .ok_or_else(|| Error::InvalidInput("no test split loaded".into())),
        }
    }
}
