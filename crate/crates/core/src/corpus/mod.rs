//! Corpus ingestion: canonical token format, source adapters, vocabulary and
//! padded batches.

mod align;
mod batch;
mod sources;
mod synthetic;
mod tagger;
mod vocab;

use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use align::{align_highlights, char_len, MIN_HIGHLIGHT_FRACTION};
pub use batch::{batchify, Batch, SegmentBatch};
pub use sources::{load_esnli, load_hatexplain, load_yelphat, MergePolicy, YELPHAT_SPLIT_SEED};
pub use synthetic::{generate_synthetic, SyntheticSpec};
pub use tagger::{
    tokenize_and_tag, CachingTagger, FixtureTagger, ProcessTagger, TaggedToken, Tagger,
};
pub use vocab::{Vocabulary, PAD_ID, UNK_ID};

/// Universal POS tagset plus `UNKNOWN` for anything a tagger emits outside it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Pos {
    Adj,
    Adp,
    Adv,
    Aux,
    Cconj,
    Det,
    Intj,
    Noun,
    Num,
    Part,
    Pron,
    Propn,
    Punct,
    Sconj,
    Sym,
    Verb,
    X,
    Unknown,
}

impl Pos {
    pub fn from_tag(tag: &str) -> Pos {
        match tag.to_ascii_uppercase().as_str() {
            "ADJ" => Pos::Adj,
            "ADP" => Pos::Adp,
            "ADV" => Pos::Adv,
            "AUX" => Pos::Aux,
            "CCONJ" | "CONJ" => Pos::Cconj,
            "DET" => Pos::Det,
            "INTJ" => Pos::Intj,
            "NOUN" => Pos::Noun,
            "NUM" => Pos::Num,
            "PART" => Pos::Part,
            "PRON" => Pos::Pron,
            "PROPN" => Pos::Propn,
            "PUNCT" => Pos::Punct,
            "SCONJ" => Pos::Sconj,
            "SYM" => Pos::Sym,
            "VERB" => Pos::Verb,
            "X" => Pos::X,
            _ => Pos::Unknown,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Token {
    pub surface: String,
    pub lemma: String,
    pub pos: Pos,
}

impl Token {
    pub fn new(surface: impl Into<String>, lemma: impl Into<String>, pos: Pos) -> Self {
        Self {
            surface: surface.into(),
            lemma: lemma.into(),
            pos,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Classification,
    Nli,
}

impl Task {
    pub fn num_segments(self) -> usize {
        match self {
            Task::Classification => 1,
            Task::Nli => 2,
        }
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "classification" => Ok(Task::Classification),
            "nli" => Ok(Task::Nli),
            other => Err(Error::InvalidInput(format!("unknown task `{other}`"))),
        }
    }
}

/// One tokenized text (or premise/hypothesis pair) with its label and the
/// optional per-token human annotation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Example {
    pub id: String,
    pub task: Task,
    pub segments: Vec<Vec<Token>>,
    pub label: usize,
    pub annotation: Option<Vec<Vec<u8>>>,
}

impl Example {
    pub fn validate(&self) -> Result<()> {
        if self.segments.len() != self.task.num_segments() {
            return Err(Error::InvalidInput(format!(
                "example {}: {:?} expects {} segments, found {}",
                self.id,
                self.task,
                self.task.num_segments(),
                self.segments.len()
            )));
        }
        for tokens in &self.segments {
            if tokens.iter().any(|t| t.lemma.is_empty()) {
                return Err(Error::InvalidInput(format!(
                    "example {}: empty lemma",
                    self.id
                )));
            }
        }
        if let Some(annotation) = &self.annotation {
            if annotation.len() != self.segments.len() {
                return Err(Error::InvalidInput(format!(
                    "example {}: annotation has {} segments",
                    self.id,
                    annotation.len()
                )));
            }
            for (seg, ann) in self.segments.iter().zip(annotation) {
                if seg.len() != ann.len() {
                    return Err(Error::InvalidInput(format!(
                        "example {}: annotation length {} != token count {}",
                        self.id,
                        ann.len(),
                        seg.len()
                    )));
                }
                if ann.iter().any(|&a| a > 1) {
                    return Err(Error::InvalidInput(format!(
                        "example {}: annotation is not binary",
                        self.id
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn num_tokens(&self) -> usize {
        self.segments.iter().map(Vec::len).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorpusName {
    Esnli,
    Hatexplain,
    Yelphat,
    Synthetic,
}

impl CorpusName {
    pub fn task(self) -> Task {
        match self {
            CorpusName::Esnli => Task::Nli,
            _ => Task::Classification,
        }
    }

    pub fn num_classes(self) -> usize {
        match self {
            CorpusName::Esnli | CorpusName::Hatexplain => 3,
            CorpusName::Yelphat | CorpusName::Synthetic => 2,
        }
    }
}

impl fmt::Display for CorpusName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            CorpusName::Esnli => "esnli",
            CorpusName::Hatexplain => "hatexplain",
            CorpusName::Yelphat => "yelphat",
            CorpusName::Synthetic => "synthetic",
        };
        f.write_str(s)
    }
}

impl FromStr for CorpusName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "esnli" => Ok(CorpusName::Esnli),
            "hatexplain" => Ok(CorpusName::Hatexplain),
            "yelphat" => Ok(CorpusName::Yelphat),
            "synthetic" => Ok(CorpusName::Synthetic),
            other => Err(Error::InvalidInput(format!("unknown corpus `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" | "dev" | "validation" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::UnknownSplit(other.to_string())),
        }
    }
}

/// Counters for records that were skipped or degraded while loading.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoadWarnings {
    pub malformed: usize,
    pub annotation_mismatch: usize,
    pub incoherent_excluded: usize,
    pub no_majority_label: usize,
    pub over_length_filtered: usize,
}

impl LoadWarnings {
    pub fn total(&self) -> usize {
        self.malformed
            + self.annotation_mismatch
            + self.incoherent_excluded
            + self.no_majority_label
            + self.over_length_filtered
    }
}

#[derive(Debug, Clone, Default)]
pub struct Loaded {
    pub examples: Vec<Example>,
    pub warnings: LoadWarnings,
}

#[derive(Default)]
pub struct LoadOptions<'a> {
    /// Required for every source corpus; unused for `synthetic`.
    pub tagger: Option<&'a mut dyn Tagger>,
    pub merge: MergePolicy,
    /// Drop examples with more tokens than this (e.g. 50 for YelpHat-50).
    pub max_tokens: Option<usize>,
    pub synthetic: SyntheticSpec,
}

/// Loads one split of a corpus into canonical examples.
///
/// `path` is the directory holding the source files. The synthetic corpus
/// ignores `path` and generates from `opts.synthetic`.
pub fn load_corpus(
    name: CorpusName,
    path: &Path,
    split: Split,
    opts: LoadOptions<'_>,
) -> Result<Loaded> {
    let LoadOptions {
        tagger,
        merge,
        max_tokens,
        synthetic,
    } = opts;
    let mut loaded = match name {
        CorpusName::Synthetic => Loaded {
            examples: synthetic.generate_split(split),
            warnings: LoadWarnings::default(),
        },
        _ => {
            let tagger = tagger.ok_or_else(|| {
                Error::TaggerUnavailable(format!(
                    "corpus {name} needs a POS tagger/lemmatizer (configure an external tagger command or a fixture cache)"
                ))
            })?;
            match name {
                CorpusName::Esnli => load_esnli(path, split, tagger, merge)?,
                CorpusName::Hatexplain => load_hatexplain(path, split, tagger, merge)?,
                CorpusName::Yelphat => load_yelphat(path, split, tagger)?,
                CorpusName::Synthetic => unreachable!(),
            }
        }
    };
    if let Some(max) = max_tokens {
        let before = loaded.examples.len();
        loaded.examples.retain(|e| e.num_tokens() <= max);
        loaded.warnings.over_length_filtered += before - loaded.examples.len();
    }
    Ok(loaded)
}

pub fn write_jsonl(path: &Path, examples: &[Example]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for ex in examples {
        serde_json::to_writer(&mut out, ex)?;
        out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

/// Reads canonical JSONL. Every record is validated; a malformed line is an
/// error here because canonical files are produced by this crate.
pub fn read_jsonl(path: &Path) -> Result<Vec<Example>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut examples = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let ex: Example = serde_json::from_str(&line)
            .map_err(|e| Error::InvalidInput(format!("{}:{}: {e}", path.display(), lineno + 1)))?;
        ex.validate()?;
        examples.push(ex);
    }
    Ok(examples)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Example {
        Example {
            id: "x".into(),
            task: Task::Classification,
            segments: vec![vec![
                Token::new("Good", "good", Pos::Adj),
                Token::new("food", "food", Pos::Noun),
            ]],
            label: 1,
            annotation: Some(vec![vec![1, 0]]),
        }
    }

    #[test]
    fn canonical_json_shape() {
        let v = serde_json::to_value(sample()).unwrap();
        assert_eq!(v["task"], "classification");
        assert_eq!(v["segments"][0][0]["pos"], "ADJ");
        assert_eq!(v["annotation"][0], serde_json::json!([1, 0]));
        let mut no_ann = sample();
        no_ann.annotation = None;
        assert!(serde_json::to_value(no_ann).unwrap()["annotation"].is_null());
    }

    #[test]
    fn validate_rejects_misaligned_annotation() {
        let mut ex = sample();
        ex.annotation = Some(vec![vec![1]]);
        assert!(ex.validate().is_err());
        let mut ex = sample();
        ex.task = Task::Nli;
        assert!(ex.validate().is_err());
    }

    #[test]
    fn empty_file_gives_no_examples() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("empty.jsonl");
        std::fs::write(&p, "").unwrap();
        assert!(read_jsonl(&p).unwrap().is_empty());
    }

    #[test]
    fn source_corpus_without_tagger_names_component() {
        let err = load_corpus(
            CorpusName::Esnli,
            Path::new("/nonexistent"),
            Split::Train,
            LoadOptions::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::TaggerUnavailable(_)));
        assert!(err.to_string().contains("tagger"));
    }

    #[test]
    fn pos_tags_parse_with_fallback() {
        assert_eq!(Pos::from_tag("propn"), Pos::Propn);
        assert_eq!(Pos::from_tag("SPACE"), Pos::Unknown);
    }
}
