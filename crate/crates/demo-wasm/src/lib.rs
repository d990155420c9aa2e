//! Browser bindings. Every export takes and returns JSON strings so the page
//! needs no generated type glue beyond wasm-bindgen's own.

use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

use plausible_attention::corpus::{Example, Pos, Task, Token};
use plausible_attention::heuristic::{
    build_heuristic_map, pos_keep_mask, FilterConfig, FrequencyTable, WeightSource,
};
use plausible_attention::metrics::{auprc, minmax_scale, recall_specificity};
use plausible_attention::objective::{
    entropy_constraint, entropy_grad, jaccard_constraint, jaccard_grad, kl_constraint, kl_grad,
    sigmoid_map, JaccardForm,
};

fn parse<T: serde::de::DeserializeOwned>(what: &str, text: &str) -> Result<T, String> {
    serde_json::from_str(text).map_err(|e| format!("{what}: {e}"))
}

fn softmax(x: &[f64]) -> Vec<f64> {
    let m = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = x.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

fn binary(annotation: &[u8]) -> Result<(), String> {
    if annotation.iter().any(|&a| a > 1) {
        return Err("annotation must be 0/1".into());
    }
    Ok(())
}

/// Attention map, constraint values and their gradients for raw scores â.
/// `heuristic` is optional (empty array to skip the KL term).
pub fn constraints(scores: &str, annotation: &str, heuristic: &str) -> Result<Value, String> {
    let scores: Vec<f64> = parse("scores", scores)?;
    let annotation: Vec<u8> = parse("annotation", annotation)?;
    let heuristic: Vec<f64> = parse("heuristic", heuristic)?;
    if scores.is_empty() {
        return Err("no scores".into());
    }
    if annotation.len() != scores.len() {
        return Err(format!(
            "annotation has {} entries, scores {}",
            annotation.len(),
            scores.len()
        ));
    }
    binary(&annotation)?;
    let alpha = softmax(&scores);
    let beta = sigmoid_map(&scores);
    let mut out = json!({
        "attention": alpha,
        "sigmoid": beta,
        "entropy": { "value": entropy_constraint(&alpha), "grad": entropy_grad(&alpha) },
    });
    if annotation.contains(&1) {
        out["jaccard"] = json!({
            "value": jaccard_constraint(&beta, &annotation, JaccardForm::Loss),
            "grad": jaccard_grad(&beta, &annotation, JaccardForm::Loss),
        });
    }
    if !heuristic.is_empty() {
        if heuristic.len() != scores.len() {
            return Err(format!(
                "heuristic has {} entries, scores {}",
                heuristic.len(),
                scores.len()
            ));
        }
        let total: f64 = heuristic.iter().sum();
        if heuristic.iter().any(|&h| h < 0.0) || total <= 0.0 {
            return Err("heuristic must be non-negative with positive mass".into());
        }
        let target: Vec<f64> = heuristic.iter().map(|h| h / total).collect();
        out["kl"] = json!({
            "value": kl_constraint(&alpha, &target),
            "grad": kl_grad(&alpha, &target),
            "target": target,
        });
    }
    Ok(out)
}

/// Min-max scaled map, AUPRC, recall and specificity at 0.5.
pub fn plausibility(map: &str, annotation: &str) -> Result<Value, String> {
    let map: Vec<f64> = parse("map", map)?;
    let annotation: Vec<u8> = parse("annotation", annotation)?;
    if map.len() != annotation.len() {
        return Err(format!(
            "annotation has {} entries, map {}",
            annotation.len(),
            map.len()
        ));
    }
    binary(&annotation)?;
    let scaled = minmax_scale(&map);
    let (recall, specificity) = recall_specificity(&scaled.values, &annotation, 0.5);
    Ok(json!({
        "scaled": scaled.values,
        "degenerate": scaled.degenerate,
        "auprc": auprc(&map, &annotation),
        "recall": recall,
        "specificity": specificity,
    }))
}

/// `word/POS` or `word/lemma/POS`; a leading `*` marks a highlighted token.
fn parse_token(raw: &str) -> Result<(Token, bool), String> {
    let (highlighted, body) = match raw.strip_prefix('*') {
        Some(rest) => (true, rest),
        None => (false, raw),
    };
    let parts: Vec<&str> = body.split('/').collect();
    let (surface, lemma, pos) = match parts.as_slice() {
        [w] => (*w, w.to_lowercase(), Pos::Unknown),
        [w, p] => (*w, w.to_lowercase(), Pos::from_tag(p)),
        [w, l, p] => (*w, l.to_lowercase(), Pos::from_tag(p)),
        _ => return Err(format!("cannot read token `{raw}`")),
    };
    if surface.is_empty() {
        return Err(format!("empty token in `{raw}`"));
    }
    Ok((Token::new(surface, lemma, pos), highlighted))
}

fn parse_sentence(id: &str, line: &str) -> Result<Example, String> {
    let tokens: Vec<(Token, bool)> = line
        .split_whitespace()
        .map(parse_token)
        .collect::<Result<_, _>>()?;
    let annotation: Vec<u8> = tokens.iter().map(|(_, h)| u8::from(*h)).collect();
    Ok(Example {
        id: id.to_string(),
        task: Task::Classification,
        segments: vec![tokens.into_iter().map(|(t, _)| t).collect()],
        label: 0,
        annotation: Some(vec![annotation]),
    })
}

/// Frequency-weighted heuristic map for `sentence`, with the frequency table
/// built from the annotated `references` (one sentence per line).
pub fn heuristic(sentence: &str, references: &str) -> Result<Value, String> {
    let target = parse_sentence("input", sentence)?;
    if target.segments[0].is_empty() {
        return Err("empty sentence".into());
    }
    let refs: Vec<Example> = references
        .lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| parse_sentence(&format!("ref{i}"), l))
        .collect::<Result<_, _>>()?;
    let table = FrequencyTable::build(&refs).map_err(|e| e.to_string())?;
    let filter = FilterConfig::default();
    let tokens = &target.segments[0];
    let map = build_heuristic_map(&target, WeightSource::Frequency(&table), &filter)
        .map_err(|e| e.to_string())?
        .remove(0);
    let human = &target.annotation.as_ref().expect("parsed with annotation")[0];
    Ok(json!({
        "tokens": tokens.iter().map(|t| &t.surface).collect::<Vec<_>>(),
        "lemmas": tokens.iter().map(|t| &t.lemma).collect::<Vec<_>>(),
        "keep": pos_keep_mask(tokens, &filter),
        "frequency": tokens.iter().map(|t| table.get(&t.lemma)).collect::<Vec<_>>(),
        "map": map.values,
        "degenerate": map.degenerate,
        "auprc": auprc(&map.values, human),
    }))
}

fn to_js(r: Result<Value, String>) -> Result<String, JsValue> {
    r.map(|v| v.to_string()).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen(js_name = constraints)]
pub fn constraints_js(scores: &str, annotation: &str, heuristic: &str) -> Result<String, JsValue> {
    to_js(constraints(scores, annotation, heuristic))
}

#[wasm_bindgen(js_name = plausibility)]
pub fn plausibility_js(map: &str, annotation: &str) -> Result<String, JsValue> {
    to_js(plausibility(map, annotation))
}

#[wasm_bindgen(js_name = heuristic)]
pub fn heuristic_js(sentence: &str, references: &str) -> Result<String, JsValue> {
    to_js(heuristic(sentence, references))
}
