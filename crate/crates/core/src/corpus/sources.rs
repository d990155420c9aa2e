//! Adapters from the source corpus formats to canonical examples.

use std::collections::HashMap;
use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    align_highlights, char_len, Example, LoadWarnings, Loaded, Split, Tagger, Task, Token,
};
use crate::error::{Error, Result};

/// Seed of the fixed random Yelp-Hat train/validation split.
pub const YELPHAT_SPLIT_SEED: u64 = 2023;
const YELPHAT_TRAIN: usize = 2436;
const YELPHAT_TOTAL: usize = 3482;

/// How several annotators' token highlights merge into one binary map: a
/// token is kept when at least `min_votes` annotators marked it (capped at
/// the number of annotators available).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MergePolicy {
    pub min_votes: usize,
}

impl Default for MergePolicy {
    fn default() -> Self {
        Self { min_votes: 2 }
    }
}

impl MergePolicy {
    pub fn merge(&self, maps: &[Vec<u8>]) -> Option<Vec<u8>> {
        let first = maps.first()?;
        if maps.iter().any(|m| m.len() != first.len()) {
            return None;
        }
        let need = self.min_votes.clamp(1, maps.len());
        Some(
            (0..first.len())
                .map(|i| u8::from(maps.iter().filter(|m| m[i] == 1).count() >= need))
                .collect(),
        )
    }
}

fn tag_with_spans(
    tagger: &mut dyn Tagger,
    text: &str,
    span_sets: &[Vec<(usize, usize)>],
    merge: MergePolicy,
) -> Result<(Vec<Token>, Option<Vec<u8>>)> {
    let tagged = tagger.tag(text)?;
    let len = char_len(text);
    let tokens = tagged.iter().map(|t| t.to_token()).collect();
    if span_sets.is_empty() {
        return Ok((tokens, None));
    }
    let maps: Vec<Vec<u8>> = span_sets
        .iter()
        .map(|spans| align_highlights(&tagged, spans, len))
        .collect();
    Ok((tokens, merge.merge(&maps)))
}

/// Strips `*word*` markers, returning the clean text and highlighted spans
/// in character offsets of the clean text.
pub(crate) fn parse_marked(marked: &str) -> (String, Vec<(usize, usize)>) {
    let mut clean = String::with_capacity(marked.len());
    let mut spans = Vec::new();
    let mut open: Option<usize> = None;
    let mut pos = 0usize;
    for ch in marked.chars() {
        if ch == '*' {
            match open.take() {
                Some(start) => spans.push((start, pos)),
                None => open = Some(pos),
            }
        } else {
            clean.push(ch);
            pos += 1;
        }
    }
    if let Some(start) = open {
        spans.push((start, pos));
    }
    (clean, spans)
}

fn esnli_files(dir: &Path, split: Split) -> Vec<PathBuf> {
    let names: &[&str] = match split {
        Split::Train => &["esnli_train_1.csv", "esnli_train_2.csv", "esnli_train.csv"],
        Split::Val => &["esnli_dev.csv"],
        Split::Test => &["esnli_test.csv"],
    };
    names
        .iter()
        .map(|n| dir.join(n))
        .filter(|p| p.exists())
        .collect()
}

fn esnli_label(s: &str) -> Option<usize> {
    match s.trim() {
        "entailment" => Some(0),
        "neutral" => Some(1),
        "contradiction" => Some(2),
        _ => None,
    }
}

/// e-SNLI CSV: `pairID, gold_label, Sentence1, Sentence2` plus
/// `Sentence{1,2}_marked_{k}` columns where highlighted words are wrapped in
/// asterisks (one column pair per annotator).
pub fn load_esnli(
    dir: &Path,
    split: Split,
    tagger: &mut dyn Tagger,
    merge: MergePolicy,
) -> Result<Loaded> {
    let files = esnli_files(dir, split);
    if files.is_empty() {
        return Err(Error::InvalidInput(format!(
            "no e-SNLI {split} file under {}",
            dir.display()
        )));
    }
    let mut out = Loaded::default();
    for path in files {
        let mut rdr = csv::ReaderBuilder::new().flexible(true).from_path(&path)?;
        let headers = rdr.headers()?.clone();
        let col = |name: &str| headers.iter().position(|h| h == name);
        let (Some(id_c), Some(label_c), Some(s1_c), Some(s2_c)) = (
            col("pairID"),
            col("gold_label"),
            col("Sentence1"),
            col("Sentence2"),
        ) else {
            return Err(Error::InvalidInput(format!(
                "{}: missing e-SNLI columns",
                path.display()
            )));
        };
        let marked_cols: Vec<(usize, usize)> = (1..=3)
            .filter_map(|k| {
                Some((
                    col(&format!("Sentence1_marked_{k}"))?,
                    col(&format!("Sentence2_marked_{k}"))?,
                ))
            })
            .collect();
        for record in rdr.records() {
            let Ok(record) = record else {
                out.warnings.malformed += 1;
                continue;
            };
            let field = |c: usize| record.get(c).unwrap_or("").trim();
            let Some(label) = esnli_label(field(label_c)) else {
                out.warnings.malformed += 1;
                continue;
            };
            let texts = [field(s1_c), field(s2_c)];
            if texts.iter().any(|t| t.is_empty()) {
                out.warnings.malformed += 1;
                continue;
            }
            let mut segments = Vec::with_capacity(2);
            let mut annotation = Some(Vec::with_capacity(2));
            for (seg, text) in texts.iter().enumerate() {
                let mut span_sets = Vec::new();
                let mut coherent = true;
                for &(c1, c2) in &marked_cols {
                    let marked = field(if seg == 0 { c1 } else { c2 });
                    if marked.is_empty() {
                        continue;
                    }
                    let (clean, spans) = parse_marked(marked);
                    if char_len(clean.trim()) != char_len(text) {
                        coherent = false;
                    }
                    span_sets.push(spans);
                }
                let (tokens, ann) = tag_with_spans(tagger, text, &span_sets, merge)?;
                match (coherent, ann) {
                    (true, Some(a)) => {
                        if let Some(v) = annotation.as_mut() {
                            v.push(a);
                        }
                    }
                    _ => annotation = None,
                }
                segments.push(tokens);
            }
            if segments.iter().any(Vec::is_empty) {
                out.warnings.malformed += 1;
                continue;
            }
            if annotation.is_none() && !marked_cols.is_empty() {
                out.warnings.annotation_mismatch += 1;
            }
            out.examples.push(Example {
                id: field(id_c).to_string(),
                task: Task::Nli,
                segments,
                label,
                annotation,
            });
        }
    }
    Ok(out)
}

#[derive(Deserialize)]
struct HxAnnotator {
    label: String,
}

#[derive(Deserialize)]
struct HxPost {
    post_id: String,
    annotators: Vec<HxAnnotator>,
    #[serde(default)]
    rationales: Vec<Vec<u8>>,
    post_tokens: Vec<String>,
}

fn hatexplain_label(s: &str) -> Option<usize> {
    match s {
        "normal" => Some(0),
        "offensive" => Some(1),
        "hatespeech" => Some(2),
        _ => None,
    }
}

fn majority(labels: &[usize]) -> Option<usize> {
    let mut counts: HashMap<usize, usize> = HashMap::new();
    for &l in labels {
        *counts.entry(l).or_default() += 1;
    }
    counts
        .into_iter()
        .find(|&(_, c)| 2 * c > labels.len())
        .map(|(l, _)| l)
}

/// Joins pre-split tokens with single spaces and returns the text together
/// with each source token's character span.
fn join_tokens(tokens: &[String]) -> (String, Vec<(usize, usize)>) {
    let mut text = String::new();
    let mut spans = Vec::with_capacity(tokens.len());
    let mut pos = 0;
    for (i, t) in tokens.iter().enumerate() {
        if i > 0 {
            text.push(' ');
            pos += 1;
        }
        let n = char_len(t);
        spans.push((pos, pos + n));
        text.push_str(t);
        pos += n;
    }
    (text, spans)
}

/// Converts a per-source-token 0/1 vector into character spans.
fn spans_from_vector(token_spans: &[(usize, usize)], marks: &[u8]) -> Vec<(usize, usize)> {
    token_spans
        .iter()
        .zip(marks)
        .filter(|(_, &m)| m == 1)
        .map(|(&s, _)| s)
        .collect()
}

/// HateXPlain: `dataset.json` (post id → post) and `post_id_divisions.json`
/// (split → post ids). Labels are the annotators' majority; posts without a
/// majority are skipped.
pub fn load_hatexplain(
    dir: &Path,
    split: Split,
    tagger: &mut dyn Tagger,
    merge: MergePolicy,
) -> Result<Loaded> {
    let read_json = |name: &str| -> Result<serde_json::Value> {
        let p = dir.join(name);
        let f = File::open(&p).map_err(|e| Error::io(&p, e))?;
        Ok(serde_json::from_reader(BufReader::new(f))?)
    };
    let dataset = read_json("dataset.json")?;
    let divisions = read_json("post_id_divisions.json")?;
    let key = match split {
        Split::Train => "train",
        Split::Val => "val",
        Split::Test => "test",
    };
    let ids = divisions
        .get(key)
        .and_then(|v| v.as_array())
        .ok_or_else(|| Error::UnknownSplit(key.to_string()))?;
    let mut out = Loaded::default();
    for id in ids {
        let Some(raw) = id.as_str().and_then(|id| dataset.get(id)) else {
            out.warnings.malformed += 1;
            continue;
        };
        let Ok(post) = serde_json::from_value::<HxPost>(raw.clone()) else {
            out.warnings.malformed += 1;
            continue;
        };
        let labels: Option<Vec<usize>> = post
            .annotators
            .iter()
            .map(|a| hatexplain_label(&a.label))
            .collect();
        let Some(labels) = labels.filter(|l| !l.is_empty()) else {
            out.warnings.malformed += 1;
            continue;
        };
        let Some(label) = majority(&labels) else {
            out.warnings.no_majority_label += 1;
            continue;
        };
        if post.post_tokens.is_empty() {
            out.warnings.malformed += 1;
            continue;
        }
        let (text, token_spans) = join_tokens(&post.post_tokens);
        let coherent = post
            .rationales
            .iter()
            .all(|r| r.len() == post.post_tokens.len());
        let span_sets: Vec<_> = if coherent {
            post.rationales
                .iter()
                .map(|r| spans_from_vector(&token_spans, r))
                .collect()
        } else {
            Vec::new()
        };
        let (tokens, merged) = tag_with_spans(tagger, &text, &span_sets, merge)?;
        if tokens.is_empty() {
            out.warnings.malformed += 1;
            continue;
        }
        if !coherent {
            out.warnings.annotation_mismatch += 1;
        }
        let annotation = (!span_sets.is_empty()).then(|| vec![merged.unwrap_or_default()]);
        out.examples.push(Example {
            id: post.post_id,
            task: Task::Classification,
            segments: vec![tokens],
            label,
            annotation,
        });
    }
    Ok(out)
}

/// Yelp-Hat CSV files (every `*.csv` in the directory, in name order) with
/// columns `text`, `label` and `annotation`, the latter a space-separated 0/1
/// vector over whitespace tokens. Rows whose vector length disagrees with the
/// token count are incoherent and excluded. There is no official split: the
/// pooled rows are shuffled with [`YELPHAT_SPLIT_SEED`] and cut 2,436/1,046
/// (proportionally for other pool sizes).
pub fn load_yelphat(dir: &Path, split: Split, tagger: &mut dyn Tagger) -> Result<Loaded> {
    if split == Split::Test {
        return Err(Error::UnknownSplit(
            "test (Yelp-Hat only has train and val)".to_string(),
        ));
    }
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    files.sort();
    let mut warnings = LoadWarnings::default();
    let mut rows: Vec<(String, String, usize, Vec<u8>)> = Vec::new();
    for path in &files {
        let stem = path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("yelp")
            .to_string();
        let mut rdr = csv::ReaderBuilder::new().flexible(true).from_path(path)?;
        let headers = rdr.headers()?.clone();
        let col = |name: &str| headers.iter().position(|h| h == name);
        let (Some(text_c), Some(label_c), Some(ann_c)) =
            (col("text"), col("label"), col("annotation"))
        else {
            return Err(Error::InvalidInput(format!(
                "{}: expected columns text,label,annotation",
                path.display()
            )));
        };
        for (i, record) in rdr.records().enumerate() {
            let Ok(record) = record else {
                warnings.malformed += 1;
                continue;
            };
            let text = record.get(text_c).unwrap_or("").trim().to_string();
            let label = record
                .get(label_c)
                .and_then(|l| l.trim().parse::<usize>().ok());
            let ann: Option<Vec<u8>> = record.get(ann_c).and_then(|a| {
                a.split_whitespace()
                    .map(|v| match v {
                        "0" => Some(0),
                        "1" => Some(1),
                        _ => None,
                    })
                    .collect()
            });
            let (Some(label), Some(ann)) = (label, ann) else {
                warnings.malformed += 1;
                continue;
            };
            if text.is_empty() || label > 1 {
                warnings.malformed += 1;
                continue;
            }
            if ann.len() != text.split_whitespace().count() {
                warnings.incoherent_excluded += 1;
                continue;
            }
            rows.push((format!("{stem}-{i}"), text, label, ann));
        }
    }
    let mut order: Vec<usize> = (0..rows.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(YELPHAT_SPLIT_SEED));
    let n_train = if rows.len() == YELPHAT_TOTAL {
        YELPHAT_TRAIN
    } else {
        (rows.len() as f64 * YELPHAT_TRAIN as f64 / YELPHAT_TOTAL as f64).round() as usize
    };
    let chosen = match split {
        Split::Train => &order[..n_train],
        _ => &order[n_train..],
    };
    let mut out = Loaded {
        examples: Vec::with_capacity(chosen.len()),
        warnings,
    };
    for &idx in chosen {
        let (id, text, label, ann) = &rows[idx];
        let words: Vec<String> = text.split_whitespace().map(str::to_string).collect();
        let (joined, token_spans) = join_tokens(&words);
        let spans = spans_from_vector(&token_spans, ann);
        let (tokens, annotation) =
            tag_with_spans(tagger, &joined, &[spans], MergePolicy::default())?;
        if tokens.is_empty() {
            out.warnings.malformed += 1;
            continue;
        }
        out.examples.push(Example {
            id: id.clone(),
            task: Task::Classification,
            segments: vec![tokens],
            label: *label,
            annotation: annotation.map(|a| vec![a]),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn marked_sentence_parsing() {
        let (clean, spans) = parse_marked("A *man* plays *guitar*.");
        assert_eq!(clean, "A man plays guitar.");
        assert_eq!(spans, vec![(2, 5), (12, 18)]);
    }

    #[test]
    fn merge_policy_votes() {
        let maps = vec![vec![1, 1, 0], vec![1, 0, 0], vec![0, 1, 1]];
        assert_eq!(MergePolicy::default().merge(&maps), Some(vec![1, 1, 0]));
        assert_eq!(
            MergePolicy { min_votes: 1 }.merge(&maps),
            Some(vec![1, 1, 1])
        );
        // single annotator: cap at available votes
        assert_eq!(
            MergePolicy::default().merge(&maps[..1]),
            Some(vec![1, 1, 0])
        );
        assert_eq!(MergePolicy::default().merge(&[vec![1], vec![1, 0]]), None);
    }

    #[test]
    fn majority_requires_strict_majority() {
        assert_eq!(majority(&[0, 0, 1]), Some(0));
        assert_eq!(majority(&[0, 1, 2]), None);
    }

    #[test]
    fn joined_token_spans() {
        let (text, spans) = join_tokens(&["ab".into(), "c".into()]);
        assert_eq!(text, "ab c");
        assert_eq!(spans, vec![(0, 2), (3, 4)]);
    }
}
