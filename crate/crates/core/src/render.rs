//! Token heatmaps comparing model attention, human annotation and the
//! heuristic map, as plain text or a self-contained HTML page.

use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{Example, Vocabulary};
use crate::error::{Error, Result};
use crate::metrics::minmax_scale;
use crate::model::Network;
use crate::trainer::evaluate_examples;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatmapHeader {
    pub constraint: String,
    pub lambda: f64,
    /// Model and heuristic tracks are min-max scaled per segment.
    pub scaled: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatmapSegment {
    pub tokens: Vec<String>,
    pub model: Vec<f64>,
    pub human: Option<Vec<f64>>,
    pub heuristic: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatmapRow {
    pub id: String,
    pub label: usize,
    pub prediction: usize,
    pub segments: Vec<HeatmapSegment>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatmapDocument {
    pub header: HeatmapHeader,
    pub rows: Vec<HeatmapRow>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Text,
    Html,
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "text" | "txt" => Ok(Format::Text),
            "html" => Ok(Format::Html),
            other => Err(Error::InvalidInput(format!(
                "unknown render format `{other}`"
            ))),
        }
    }
}

fn scale(values: &[f64], scaled: bool) -> Vec<f64> {
    if scaled {
        minmax_scale(values).values
    } else {
        values.to_vec()
    }
}

/// Runs `network` over `examples` and lines up the three tracks.
/// `heuristics`, when given, is aligned with `examples`.
pub fn build_document(
    network: &Network,
    vocab: &Vocabulary,
    examples: &[Example],
    heuristics: Option<&[Option<Vec<Vec<f64>>>]>,
    header: HeatmapHeader,
) -> Result<HeatmapDocument> {
    if let Some(h) = heuristics {
        if h.len() != examples.len() {
            return Err(Error::InvalidInput(
                "heuristics do not line up with examples".into(),
            ));
        }
    }
    let eval = evaluate_examples(network, vocab, examples)?;
    let rows = examples
        .iter()
        .enumerate()
        .map(|(i, ex)| {
            let heur = heuristics.and_then(|h| h[i].as_ref());
            let segments = ex
                .segments
                .iter()
                .enumerate()
                .map(|(s, toks)| HeatmapSegment {
                    tokens: toks.iter().map(|t| t.surface.clone()).collect(),
                    model: scale(&eval.maps[i][s], header.scaled),
                    human: ex
                        .annotation
                        .as_ref()
                        .map(|a| a[s].iter().map(|&v| f64::from(v)).collect()),
                    heuristic: heur.map(|h| scale(&h[s], header.scaled)),
                })
                .collect();
            HeatmapRow {
                id: ex.id.clone(),
                label: ex.label,
                prediction: eval.predictions[i],
                segments,
            }
        })
        .collect();
    Ok(HeatmapDocument { header, rows })
}

const SHADES: [char; 5] = [' ', '░', '▒', '▓', '█'];

/// Shade for a value in `[0, 1]`; only exactly 1 gets the full block.
pub fn shade(value: f64) -> char {
    if value >= 1.0 {
        SHADES[4]
    } else {
        SHADES[((value.max(0.0) * 4.0).floor() as usize).min(3)]
    }
}

fn segment_name(n_segments: usize, s: usize) -> Option<&'static str> {
    match (n_segments, s) {
        (2, 0) => Some("premise"),
        (2, 1) => Some("hypothesis"),
        _ => None,
    }
}

pub fn render_text(doc: &HeatmapDocument) -> String {
    let mut out = String::new();
    let h = &doc.header;
    let _ = writeln!(
        out,
        "# constraint={} lambda={} values={}",
        h.constraint,
        h.lambda,
        if h.scaled { "minmax" } else { "raw" }
    );
    for row in &doc.rows {
        let _ = writeln!(
            out,
            "\n## {} label={} prediction={}",
            row.id, row.label, row.prediction
        );
        for (s, seg) in row.segments.iter().enumerate() {
            if let Some(name) = segment_name(row.segments.len(), s) {
                let _ = writeln!(out, "[{name}]");
            }
            let width = seg
                .tokens
                .iter()
                .map(|t| t.chars().count())
                .max()
                .unwrap_or(0)
                .max(5);
            let _ = writeln!(
                out,
                "{:<width$}  {:<6}  {:<6}  {:<6}",
                "token", "model", "human", "heur"
            );
            for (k, tok) in seg.tokens.iter().enumerate() {
                let cell = |track: Option<&Vec<f64>>| match track {
                    Some(v) => format!("{} {:.2}", shade(v[k]), v[k]),
                    None => "-".to_string(),
                };
                let _ = writeln!(
                    out,
                    "{:<width$}  {:<6}  {:<6}  {:<6}",
                    tok,
                    cell(Some(&seg.model)),
                    cell(seg.human.as_ref()),
                    cell(seg.heuristic.as_ref())
                );
            }
        }
    }
    out
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&#39;"),
            c => out.push(c),
        }
    }
    out
}

const STYLE: &str = "body{font-family:sans-serif;margin:2em;color:#222}\
table{border-collapse:collapse;margin-bottom:1em}\
th{text-align:right;padding-right:1em;font-weight:normal;color:#666}\
td{padding:2px 0}\
.tok{display:inline-block;padding:1px 3px;margin:1px;border-radius:3px}";

fn track_html(out: &mut String, name: &str, tokens: &[String], values: &[f64]) {
    let _ = write!(out, "<tr><th>{name}</th><td>");
    for (tok, &v) in tokens.iter().zip(values) {
        let _ = write!(
            out,
            "<span class=\"tok\" title=\"{v:.3}\" style=\"background-color:rgba({},{:.3})\">{}</span>",
            match name {
                "model" => "214,39,40",
                "human" => "31,119,180",
                _ => "44,160,44",
            },
            v.clamp(0.0, 1.0),
            escape(tok)
        );
    }
    out.push_str("</td></tr>\n");
}

pub fn render_html(doc: &HeatmapDocument) -> String {
    let h = &doc.header;
    let mut out = String::new();
    out.push_str("<!DOCTYPE html>\n<html lang=\"en\">\n<head>\n<meta charset=\"utf-8\"/>\n");
    out.push_str("<title>Attention heatmaps</title>\n");
    let _ = writeln!(out, "<style>{STYLE}</style>\n</head>\n<body>");
    let _ = writeln!(
        out,
        "<h1>Attention heatmaps</h1>\n<p>constraint: {} &#183; &#955; = {} &#183; values: {}</p>",
        escape(&h.constraint),
        h.lambda,
        if h.scaled { "min-max scaled" } else { "raw" }
    );
    for row in &doc.rows {
        let _ = writeln!(
            out,
            "<section>\n<h2>{}</h2>\n<p>label {} &#183; prediction {}</p>",
            escape(&row.id),
            row.label,
            row.prediction
        );
        for (s, seg) in row.segments.iter().enumerate() {
            if let Some(name) = segment_name(row.segments.len(), s) {
                let _ = writeln!(out, "<h3>{name}</h3>");
            }
            out.push_str("<table>\n");
            track_html(&mut out, "model", &seg.tokens, &seg.model);
            if let Some(v) = &seg.human {
                track_html(&mut out, "human", &seg.tokens, v);
            }
            if let Some(v) = &seg.heuristic {
                track_html(&mut out, "heuristic", &seg.tokens, v);
            }
            out.push_str("</table>\n");
        }
        out.push_str("</section>\n");
    }
    out.push_str("</body>\n</html>\n");
    out
}

pub fn render(doc: &HeatmapDocument, format: Format) -> String {
    match format {
        Format::Text => render_text(doc),
        Format::Html => render_html(doc),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc(model: Vec<f64>) -> HeatmapDocument {
        HeatmapDocument {
            header: HeatmapHeader {
                constraint: "supervised".into(),
                lambda: 0.1,
                scaled: true,
            },
            rows: vec![HeatmapRow {
                id: "ex<1>".into(),
                label: 1,
                prediction: 0,
                segments: vec![HeatmapSegment {
                    tokens: vec!["a".into(), "b&c".into(), "d".into()],
                    human: Some(vec![0.0, 1.0, 0.0]),
                    heuristic: None,
                    model,
                }],
            }],
        }
    }

    #[test]
    fn shading_buckets() {
        assert_eq!(shade(0.0), ' ');
        assert_eq!(shade(0.3), '░');
        assert_eq!(shade(0.99), '▓');
        assert_eq!(shade(1.0), '█');
    }

    #[test]
    fn one_hot_map_has_a_single_full_block_in_the_model_column() {
        let text = render_text(&doc(vec![0.0, 1.0, 0.0]));
        let model_blocks = text
            .lines()
            .filter(|l| l.chars().nth(7) == Some('█'))
            .count();
        assert_eq!(model_blocks, 1, "{text}");
    }

    #[test]
    fn html_escapes_tokens() {
        let html = render_html(&doc(vec![0.0, 1.0, 0.0]));
        assert!(html.contains("b&amp;c"));
        assert!(html.contains("ex&lt;1&gt;"));
        assert!(!html.contains("http"));
    }
}
