//! Heuristic attention maps: POS filtering, task-dependent token weights and
//! per-segment renormalization into a probability vector.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{Example, Pos, Task, Token};
use crate::error::{Error, Result};
use crate::linalg::cosine;
use crate::metrics::example_metrics;
use crate::model::PretrainedEmbeddings;

/// Lemmas dropped even when tagged as content words.
pub const AUXILIARY_SHORTLIST: &[&str] = &[
    "be", "have", "do", "will", "would", "can", "could", "shall", "should", "may", "might", "must",
    "get",
];

/// English stop-words (the NLTK list, lowercased).
pub const STOP_WORDS: &[&str] = &[
    "i",
    "me",
    "my",
    "myself",
    "we",
    "our",
    "ours",
    "ourselves",
    "you",
    "you're",
    "you've",
    "you'll",
    "you'd",
    "your",
    "yours",
    "yourself",
    "yourselves",
    "he",
    "him",
    "his",
    "himself",
    "she",
    "she's",
    "her",
    "hers",
    "herself",
    "it",
    "it's",
    "its",
    "itself",
    "they",
    "them",
    "their",
    "theirs",
    "themselves",
    "what",
    "which",
    "who",
    "whom",
    "this",
    "that",
    "that'll",
    "these",
    "those",
    "am",
    "is",
    "are",
    "was",
    "were",
    "be",
    "been",
    "being",
    "have",
    "has",
    "had",
    "having",
    "do",
    "does",
    "did",
    "doing",
    "a",
    "an",
    "the",
    "and",
    "but",
    "if",
    "or",
    "because",
    "as",
    "until",
    "while",
    "of",
    "at",
    "by",
    "for",
    "with",
    "about",
    "against",
    "between",
    "into",
    "through",
    "during",
    "before",
    "after",
    "above",
    "below",
    "to",
    "from",
    "up",
    "down",
    "in",
    "out",
    "on",
    "off",
    "over",
    "under",
    "again",
    "further",
    "then",
    "once",
    "here",
    "there",
    "when",
    "where",
    "why",
    "how",
    "all",
    "any",
    "both",
    "each",
    "few",
    "more",
    "most",
    "other",
    "some",
    "such",
    "no",
    "nor",
    "not",
    "only",
    "own",
    "same",
    "so",
    "than",
    "too",
    "very",
    "s",
    "t",
    "can",
    "will",
    "just",
    "don",
    "don't",
    "should",
    "should've",
    "now",
    "d",
    "ll",
    "m",
    "o",
    "re",
    "ve",
    "y",
    "ain",
    "aren",
    "aren't",
    "couldn",
    "couldn't",
    "didn",
    "didn't",
    "doesn",
    "doesn't",
    "hadn",
    "hadn't",
    "hasn",
    "hasn't",
    "haven",
    "haven't",
    "isn",
    "isn't",
    "ma",
    "mightn",
    "mightn't",
    "mustn",
    "mustn't",
    "needn",
    "needn't",
    "shan",
    "shan't",
    "shouldn",
    "shouldn't",
    "wasn",
    "wasn't",
    "weren",
    "weren't",
    "won",
    "won't",
    "wouldn",
    "wouldn't",
];

/// Which tokens may receive heuristic weight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterConfig {
    pub shortlist: Vec<String>,
    pub stop_words: Vec<String>,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            shortlist: AUXILIARY_SHORTLIST.iter().map(|s| s.to_string()).collect(),
            stop_words: STOP_WORDS.iter().map(|s| s.to_string()).collect(),
        }
    }
}

impl FilterConfig {
    pub fn keeps(&self, token: &Token) -> bool {
        if !matches!(token.pos, Pos::Noun | Pos::Propn | Pos::Verb | Pos::Adj) {
            return false;
        }
        let lemma = token.lemma.to_lowercase();
        let surface = token.surface.to_lowercase();
        let listed = |list: &[String]| list.iter().any(|w| *w == lemma || *w == surface);
        !listed(&self.shortlist) && !listed(&self.stop_words)
    }
}

/// 1 for content words (noun, proper noun, verb, adjective) outside the
/// shortlist and stop-word list, 0 otherwise.
pub fn pos_keep_mask(tokens: &[Token], filter: &FilterConfig) -> Vec<u8> {
    tokens.iter().map(|t| u8::from(filter.keeps(t))).collect()
}

/// Per-lemma share of occurrences that fall inside a human annotation.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FrequencyTable {
    frequencies: BTreeMap<String, f64>,
}

#[derive(Serialize, Deserialize)]
struct FrequencyRow {
    lemma: String,
    frequency: f64,
}

impl FrequencyTable {
    /// Counts lemmas over the annotated examples only.
    pub fn build(examples: &[Example]) -> Result<Self> {
        let mut counts: HashMap<&str, (u64, u64)> = HashMap::new();
        let mut annotated_examples = 0;
        for ex in examples {
            let Some(ann) = &ex.annotation else { continue };
            annotated_examples += 1;
            for (seg, mask) in ex.segments.iter().zip(ann) {
                for (tok, &a) in seg.iter().zip(mask) {
                    let entry = counts.entry(tok.lemma.as_str()).or_default();
                    entry.0 += u64::from(a);
                    entry.1 += 1;
                }
            }
        }
        if annotated_examples == 0 {
            return Err(Error::InvalidInput(
                "frequency table needs at least one annotated example".into(),
            ));
        }
        let frequencies = counts
            .into_iter()
            .map(|(lemma, (hit, total))| (lemma.to_string(), hit as f64 / total as f64))
            .collect();
        Ok(Self { frequencies })
    }

    /// Frequency of `lemma`, 0 when unseen.
    pub fn get(&self, lemma: &str) -> f64 {
        self.frequencies.get(lemma).copied().unwrap_or(0.0)
    }

    pub fn len(&self) -> usize {
        self.frequencies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frequencies.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.frequencies.iter().map(|(k, &v)| (k.as_str(), v))
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        for (lemma, frequency) in self.iter() {
            w.serialize(FrequencyRow {
                lemma: lemma.to_string(),
                frequency,
            })?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }

    pub fn load_csv(path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        let mut frequencies = BTreeMap::new();
        for row in r.deserialize() {
            let row: FrequencyRow = row?;
            if !(0.0..=1.0).contains(&row.frequency) {
                return Err(Error::InvalidInput(format!(
                    "frequency {} for `{}` outside [0, 1]",
                    row.frequency, row.lemma
                )));
            }
            frequencies.insert(row.lemma, row.frequency);
        }
        Ok(Self { frequencies })
    }
}

/// `w_i = max(0, Σ_j cos(e_i, e'_j))` over the tokens of the other segment;
/// lemmas missing from `embeddings` count as zero vectors.
pub fn nli_similarity_weights(
    segment: &[Token],
    other: &[Token],
    embeddings: &PretrainedEmbeddings,
) -> Vec<f64> {
    let zero = vec![0.0; embeddings.dim];
    let lookup = |t: &Token| {
        embeddings
            .get(&t.lemma)
            .map(<[f64]>::to_vec)
            .unwrap_or_else(|| zero.clone())
    };
    let others: Vec<Vec<f64>> = other.iter().map(lookup).collect();
    segment
        .iter()
        .map(|t| {
            let e = lookup(t);
            others.iter().map(|o| cosine(&e, o)).sum::<f64>().max(0.0)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeuristicMap {
    pub values: Vec<f64>,
    /// Set when the weights carried no mass and a uniform fallback was used.
    pub degenerate: bool,
}

/// Zeroes weights outside `keep`, clamps negatives and renormalizes. With no
/// mass left the map falls back to uniform over kept tokens, or over all
/// tokens when nothing is kept.
pub fn normalize_weights(weights: &[f64], keep: &[u8]) -> HeuristicMap {
    assert_eq!(
        weights.len(),
        keep.len(),
        "weights and mask differ in length"
    );
    let masked: Vec<f64> = weights
        .iter()
        .zip(keep)
        .map(|(&w, &k)| {
            if k == 1 && w.is_finite() {
                w.max(0.0)
            } else {
                0.0
            }
        })
        .collect();
    let total: f64 = masked.iter().sum();
    if total > 0.0 {
        return HeuristicMap {
            values: masked.iter().map(|w| w / total).collect(),
            degenerate: false,
        };
    }
    let kept = keep.iter().filter(|&&k| k == 1).count();
    let values = if kept > 0 {
        keep.iter().map(|&k| f64::from(k) / kept as f64).collect()
    } else if keep.is_empty() {
        Vec::new()
    } else {
        vec![1.0 / keep.len() as f64; keep.len()]
    };
    HeuristicMap {
        values,
        degenerate: true,
    }
}

/// Token weights for the heuristic: annotation frequencies for single-text
/// classification, cross-segment cosine sums for NLI.
#[derive(Debug, Clone, Copy)]
pub enum WeightSource<'a> {
    Frequency(&'a FrequencyTable),
    Similarity(&'a PretrainedEmbeddings),
}

/// One map per segment of `example`.
pub fn build_heuristic_map(
    example: &Example,
    source: WeightSource<'_>,
    filter: &FilterConfig,
) -> Result<Vec<HeuristicMap>> {
    let weights: Vec<Vec<f64>> = match (example.task, source) {
        (Task::Classification, WeightSource::Frequency(table)) => example
            .segments
            .iter()
            .map(|seg| seg.iter().map(|t| table.get(&t.lemma)).collect())
            .collect(),
        (Task::Nli, WeightSource::Similarity(emb)) => {
            if example.segments.len() != 2 {
                return Err(Error::InvalidInput(format!(
                    "example {} has {} segments, expected a sentence pair",
                    example.id,
                    example.segments.len()
                )));
            }
            vec![
                nli_similarity_weights(&example.segments[0], &example.segments[1], emb),
                nli_similarity_weights(&example.segments[1], &example.segments[0], emb),
            ]
        }
        (Task::Classification, _) => {
            return Err(Error::InvalidInput(
                "classification heuristics are weighted by a frequency table".into(),
            ))
        }
        (Task::Nli, _) => {
            return Err(Error::InvalidInput(
                "NLI heuristics are weighted by embedding similarity".into(),
            ))
        }
    };
    Ok(example
        .segments
        .iter()
        .zip(&weights)
        .map(|(seg, w)| normalize_weights(w, &pos_keep_mask(seg, filter)))
        .collect())
}

/// Maps for a whole corpus, in input order.
pub fn build_heuristic_maps(
    examples: &[Example],
    source: WeightSource<'_>,
    filter: &FilterConfig,
) -> Result<Vec<Vec<HeuristicMap>>> {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        examples
            .par_iter()
            .map(|ex| build_heuristic_map(ex, source, filter))
            .collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        examples
            .iter()
            .map(|ex| build_heuristic_map(ex, source, filter))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeuristicQuality {
    pub mean_auprc: Option<f64>,
    pub n_evaluated: usize,
    pub n_excluded: usize,
}

/// Mean per-example AUPRC of heuristic maps against human annotations.
/// Examples without a usable annotation are excluded and counted.
pub fn heuristic_quality(examples: &[Example], maps: &[Vec<Vec<f64>>]) -> HeuristicQuality {
    assert_eq!(examples.len(), maps.len(), "one heuristic per example");
    let mut sum = 0.0;
    let mut n = 0;
    for (ex, m) in examples.iter().zip(maps) {
        let Some(ann) = &ex.annotation else { continue };
        let map_refs: Vec<&[f64]> = m.iter().map(Vec::as_slice).collect();
        let ann_refs: Vec<&[u8]> = ann.iter().map(Vec::as_slice).collect();
        if let Some(a) = example_metrics(&ex.id, &map_refs, &ann_refs).auprc {
            sum += a;
            n += 1;
        }
    }
    HeuristicQuality {
        mean_auprc: (n > 0).then(|| sum / n as f64),
        n_evaluated: n,
        n_excluded: examples.len() - n,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Coverage {
    pub annotated_tokens: usize,
    pub annotated_kept: usize,
}

impl Coverage {
    /// Share of annotated tokens that pass the POS filter.
    pub fn fraction(&self) -> Option<f64> {
        (self.annotated_tokens > 0)
            .then(|| self.annotated_kept as f64 / self.annotated_tokens as f64)
    }
}

pub fn coverage(examples: &[Example], filter: &FilterConfig) -> Coverage {
    let mut c = Coverage {
        annotated_tokens: 0,
        annotated_kept: 0,
    };
    for ex in examples {
        let Some(ann) = &ex.annotation else { continue };
        for (seg, mask) in ex.segments.iter().zip(ann) {
            for (tok, &a) in seg.iter().zip(mask) {
                if a == 1 {
                    c.annotated_tokens += 1;
                    c.annotated_kept += usize::from(filter.keeps(tok));
                }
            }
        }
    }
    c
}

/// One line of the heuristics JSONL file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeuristicRecord {
    pub id: String,
    pub heuristic: Vec<Vec<f64>>,
}

pub fn write_heuristics(path: &Path, records: &[HeuristicRecord]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_heuristics(path: &Path) -> Result<Vec<HeuristicRecord>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line)?);
    }
    Ok(out)
}

/// Lines up heuristic records with `examples` by id, checking segment
/// lengths. Examples without a record get `None`.
pub fn align_heuristics(
    examples: &[Example],
    records: &[HeuristicRecord],
) -> Result<Vec<Option<Vec<Vec<f64>>>>> {
    let by_id: HashMap<&str, &HeuristicRecord> =
        records.iter().map(|r| (r.id.as_str(), r)).collect();
    examples
        .iter()
        .map(|ex| {
            let Some(r) = by_id.get(ex.id.as_str()) else {
                return Ok(None);
            };
            let lengths_match = r.heuristic.len() == ex.segments.len()
                && r.heuristic
                    .iter()
                    .zip(&ex.segments)
                    .all(|(h, s)| h.len() == s.len());
            if !lengths_match {
                return Err(Error::InvalidInput(format!(
                    "heuristic for {} does not match its token counts",
                    ex.id
                )));
            }
            Ok(Some(r.heuristic.clone()))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tok(lemma: &str, pos: Pos) -> Token {
        Token::new(lemma, lemma, pos)
    }

    fn classified(id: &str, toks: Vec<Token>, ann: Option<Vec<u8>>) -> Example {
        Example {
            id: id.into(),
            task: Task::Classification,
            segments: vec![toks],
            label: 0,
            annotation: ann.map(|a| vec![a]),
        }
    }

    #[test]
    fn keep_mask_rules() {
        let f = FilterConfig::default();
        let toks = [
            tok("the", Pos::Det),
            tok("dog", Pos::Noun),
            tok("run", Pos::Verb),
        ];
        assert_eq!(pos_keep_mask(&toks, &f), vec![0, 1, 1]);
        let is = Token::new("is", "be", Pos::Verb);
        assert_eq!(pos_keep_mask(&[is], &f), vec![0]);
        assert_eq!(pos_keep_mask(&[tok("very", Pos::Adj)], &f), vec![0]);
        assert_eq!(
            pos_keep_mask(&[tok("a", Pos::Det), tok(".", Pos::Punct)], &f),
            vec![0, 0]
        );
    }

    #[test]
    fn frequency_counts() {
        let data = vec![
            classified(
                "a",
                vec![tok("good", Pos::Adj), tok("good", Pos::Adj)],
                Some(vec![1, 1]),
            ),
            classified(
                "b",
                vec![
                    tok("good", Pos::Adj),
                    tok("good", Pos::Adj),
                    tok("food", Pos::Noun),
                ],
                Some(vec![1, 0, 0]),
            ),
            classified("c", vec![tok("good", Pos::Adj)], None),
        ];
        let t = FrequencyTable::build(&data).unwrap();
        assert_eq!(t.get("good"), 0.75);
        assert_eq!(t.get("food"), 0.0);
        assert_eq!(t.get("unseen"), 0.0);
        assert!(FrequencyTable::build(&data[2..]).is_err());

        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("freq.csv");
        t.save_csv(&p).unwrap();
        assert_eq!(FrequencyTable::load_csv(&p).unwrap(), t);
    }

    #[test]
    fn normalization_and_fallbacks() {
        let m = normalize_weights(&[0.0, 2.0, 2.0], &[1, 1, 1]);
        assert_eq!(m.values, vec![0.0, 0.5, 0.5]);
        assert!(!m.degenerate);
        let m = normalize_weights(&[0.0, 0.0, 0.0], &[0, 1, 1]);
        assert_eq!(m.values, vec![0.0, 0.5, 0.5]);
        assert!(m.degenerate);
        let m = normalize_weights(&[3.0, 1.0], &[0, 0]);
        assert_eq!(m.values, vec![0.5, 0.5]);
        assert!(m.degenerate);
        let m = normalize_weights(&[5.0, -1.0, 1.0], &[0, 1, 1]);
        assert_eq!(m.values, vec![0.0, 0.0, 1.0]);
    }

    #[test]
    fn cosine_weights() {
        let mut emb = PretrainedEmbeddings::new(3);
        emb.insert("a", vec![1.0, 0.0, 0.0]).unwrap();
        emb.insert("b", vec![0.0, 1.0, 0.0]).unwrap();
        emb.insert("c", vec![0.0, 0.0, 1.0]).unwrap();
        emb.insert("z", vec![0.0, 0.0, 0.0]).unwrap();
        let other = [
            tok("a", Pos::Noun),
            tok("b", Pos::Noun),
            tok("c", Pos::Noun),
        ];
        let w = nli_similarity_weights(
            &[
                tok("a", Pos::Noun),
                tok("z", Pos::Noun),
                tok("oov", Pos::Noun),
            ],
            &other,
            &emb,
        );
        assert_eq!(w, vec![1.0, 0.0, 0.0]);

        let mut neg = PretrainedEmbeddings::new(2);
        neg.insert("x", vec![1.0, 0.0]).unwrap();
        neg.insert("y", vec![-1.0, 0.0]).unwrap();
        let w = nli_similarity_weights(&[tok("x", Pos::Noun)], &[tok("y", Pos::Noun)], &neg);
        assert_eq!(w, vec![0.0]);
    }

    #[test]
    fn nli_maps_symmetric_for_identical_pair() {
        let mut emb = PretrainedEmbeddings::new(2);
        emb.insert("dog", vec![1.0, 0.2]).unwrap();
        emb.insert("run", vec![0.1, 1.0]).unwrap();
        emb.insert("park", vec![0.7, 0.7]).unwrap();
        let sent = vec![
            tok("dog", Pos::Noun),
            tok("run", Pos::Verb),
            tok("park", Pos::Noun),
        ];
        let ex = Example {
            id: "p".into(),
            task: Task::Nli,
            segments: vec![sent.clone(), sent],
            label: 0,
            annotation: None,
        };
        let maps = build_heuristic_map(
            &ex,
            WeightSource::Similarity(&emb),
            &FilterConfig::default(),
        )
        .unwrap();
        assert_eq!(maps[0], maps[1]);
        assert!((maps[0].values.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn quality_and_coverage() {
        let ex = classified(
            "a",
            vec![
                tok("the", Pos::Det),
                tok("great", Pos::Adj),
                tok("food", Pos::Noun),
            ],
            Some(vec![0, 1, 1]),
        );
        let q = heuristic_quality(std::slice::from_ref(&ex), &[vec![vec![0.0, 0.5, 0.5]]]);
        assert_eq!(q.mean_auprc, Some(1.0));
        let c = coverage(&[ex], &FilterConfig::default());
        assert_eq!(c.fraction(), Some(1.0));
    }

    #[test]
    fn wrong_source_for_task_is_an_error() {
        let emb = PretrainedEmbeddings::new(2);
        let ex = classified("a", vec![tok("food", Pos::Noun)], None);
        assert!(build_heuristic_map(
            &ex,
            WeightSource::Similarity(&emb),
            &FilterConfig::default()
        )
        .is_err());
    }
}
