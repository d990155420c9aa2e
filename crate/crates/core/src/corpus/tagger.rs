//! POS tagging and lemmatization behind a pluggable interface.
//!
//! The reference setup runs spaCy in a child process (see
//! `tools/spacy_tagger.py`) speaking a JSON-lines protocol: one request
//! `{"text": ...}` per line, one reply `{"tokens": [...]}` per line. Replies
//! are cached to a fixture file so later runs (and the test suite) need no
//! tagger at all.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};

use serde::{Deserialize, Serialize};

use super::{Pos, Token};
use crate::error::{Error, Result};

/// Tagger output with character offsets into the tagged text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaggedToken {
    pub surface: String,
    pub lemma: String,
    pub pos: Pos,
    pub start: usize,
    pub end: usize,
}

impl TaggedToken {
    pub fn to_token(&self) -> Token {
        let mut lemma = self.lemma.to_lowercase();
        if lemma.is_empty() {
            lemma = self.surface.to_lowercase();
        }
        Token::new(self.surface.clone(), lemma, self.pos)
    }
}

pub trait Tagger {
    fn tag(&mut self, text: &str) -> Result<Vec<TaggedToken>>;
}

#[derive(Serialize, Deserialize)]
struct FixtureEntry {
    text: String,
    tokens: Vec<TaggedToken>,
}

#[derive(Deserialize)]
struct TaggerReply {
    tokens: Option<Vec<TaggedToken>>,
    error: Option<String>,
}

/// Child-process tagger.
pub struct ProcessTagger {
    command: String,
    child: Child,
    stdin: BufWriter<ChildStdin>,
    stdout: BufReader<ChildStdout>,
}

impl ProcessTagger {
    pub fn spawn(program: &str, args: &[String]) -> Result<Self> {
        let command = std::iter::once(program.to_string())
            .chain(args.iter().cloned())
            .collect::<Vec<_>>()
            .join(" ");
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .spawn()
            .map_err(|e| {
                Error::TaggerUnavailable(format!("cannot start external tagger `{command}`: {e}"))
            })?;
        let stdin = BufWriter::new(child.stdin.take().expect("piped stdin"));
        let stdout = BufReader::new(child.stdout.take().expect("piped stdout"));
        Ok(Self {
            command,
            child,
            stdin,
            stdout,
        })
    }
}

impl Tagger for ProcessTagger {
    fn tag(&mut self, text: &str) -> Result<Vec<TaggedToken>> {
        let unavailable = |e: std::io::Error, cmd: &str| {
            Error::TaggerUnavailable(format!("external tagger `{cmd}`: {e}"))
        };
        serde_json::to_writer(&mut self.stdin, &serde_json::json!({ "text": text }))?;
        self.stdin
            .write_all(b"\n")
            .and_then(|_| self.stdin.flush())
            .map_err(|e| unavailable(e, &self.command))?;
        let mut line = String::new();
        let n = self
            .stdout
            .read_line(&mut line)
            .map_err(|e| unavailable(e, &self.command))?;
        if n == 0 {
            return Err(Error::TaggerUnavailable(format!(
                "external tagger `{}` exited before replying",
                self.command
            )));
        }
        let reply: TaggerReply = serde_json::from_str(&line)
            .map_err(|e| Error::Tagger(format!("bad reply from `{}`: {e}", self.command)))?;
        match (reply.tokens, reply.error) {
            (Some(tokens), None) => Ok(tokens),
            (_, Some(err)) => Err(Error::Tagger(err)),
            (None, None) => Err(Error::Tagger("reply has neither tokens nor error".into())),
        }
    }
}

impl Drop for ProcessTagger {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// Frozen tagger outputs keyed by exact input text.
#[derive(Debug, Default, Clone)]
pub struct FixtureTagger {
    entries: BTreeMap<String, Vec<TaggedToken>>,
}

impl FixtureTagger {
    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut entries = BTreeMap::new();
        for line in BufReader::new(file).lines() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let entry: FixtureEntry = serde_json::from_str(&line)?;
            entries.insert(entry.text, entry.tokens);
        }
        Ok(Self { entries })
    }

    pub fn insert(&mut self, text: &str, tokens: Vec<TaggedToken>) {
        self.entries.insert(text.to_string(), tokens);
    }

    pub fn get(&self, text: &str) -> Option<&Vec<TaggedToken>> {
        self.entries.get(text)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Writes entries sorted by text, so saves are byte-stable.
    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        for (text, tokens) in &self.entries {
            serde_json::to_writer(
                &mut out,
                &FixtureEntry {
                    text: text.clone(),
                    tokens: tokens.clone(),
                },
            )?;
            out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
        }
        out.flush().map_err(|e| Error::io(path, e))
    }
}

impl Tagger for FixtureTagger {
    fn tag(&mut self, text: &str) -> Result<Vec<TaggedToken>> {
        if text.is_empty() {
            return Ok(Vec::new());
        }
        self.entries.get(text).cloned().ok_or_else(|| {
            Error::TaggerUnavailable(format!(
                "no cached tagging for {text:?} and no external tagger configured"
            ))
        })
    }
}

/// Fixture cache in front of an optional live tagger; misses go to the live
/// tagger and are remembered.
pub struct CachingTagger {
    cache: FixtureTagger,
    live: Option<Box<dyn Tagger>>,
    cache_path: Option<PathBuf>,
    misses: usize,
}

impl CachingTagger {
    pub fn new(cache: FixtureTagger, live: Option<Box<dyn Tagger>>) -> Self {
        Self {
            cache,
            live,
            cache_path: None,
            misses: 0,
        }
    }

    /// Opens (or starts) a cache file that `persist` writes back to.
    pub fn with_cache_file(path: &Path, live: Option<Box<dyn Tagger>>) -> Result<Self> {
        let cache = if path.exists() {
            FixtureTagger::load(path)?
        } else {
            FixtureTagger::default()
        };
        Ok(Self {
            cache,
            live,
            cache_path: Some(path.to_path_buf()),
            misses: 0,
        })
    }

    pub fn misses(&self) -> usize {
        self.misses
    }

    pub fn persist(&self) -> Result<()> {
        match &self.cache_path {
            Some(p) => self.cache.save(p),
            None => Ok(()),
        }
    }
}

impl Tagger for CachingTagger {
    fn tag(&mut self, text: &str) -> Result<Vec<TaggedToken>> {
        if text.is_empty() {
            return Ok(Vec::new());
        }
        if let Some(hit) = self.cache.get(text) {
            return Ok(hit.clone());
        }
        let live = self.live.as_mut().ok_or_else(|| {
            Error::TaggerUnavailable(format!(
                "no cached tagging for {text:?} and no external tagger configured"
            ))
        })?;
        let tokens = live.tag(text)?;
        self.misses += 1;
        self.cache.insert(text, tokens.clone());
        Ok(tokens)
    }
}

/// Tags `text` and converts to canonical tokens.
pub fn tokenize_and_tag(tagger: &mut dyn Tagger, text: &str) -> Result<Vec<Token>> {
    Ok(tagger
        .tag(text)?
        .iter()
        .map(TaggedToken::to_token)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn missing_external_tagger_is_a_hard_error() {
        let err = ProcessTagger::spawn("definitely-not-a-tagger-binary", &[])
            .err()
            .unwrap();
        assert!(matches!(err, Error::TaggerUnavailable(_)));
        assert!(err.to_string().contains("definitely-not-a-tagger-binary"));
    }

    #[test]
    fn caching_tagger_without_live_reports_miss() {
        let mut t = CachingTagger::new(FixtureTagger::default(), None);
        assert!(t.tag("").unwrap().is_empty());
        assert!(matches!(t.tag("hello"), Err(Error::TaggerUnavailable(_))));
    }

    #[test]
    fn lemma_is_lowercased() {
        let t = TaggedToken {
            surface: "Dogs".into(),
            lemma: "Dog".into(),
            pos: Pos::Noun,
            start: 0,
            end: 4,
        };
        assert_eq!(t.to_token().lemma, "dog");
    }
}
