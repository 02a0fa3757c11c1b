use std::collections::HashMap;
use std::f64::consts::LN_10;

use crate::error::{Error, Result};

pub const MAX_PHRASE_LEN: usize = 7;

/// Natural-log score given to each of the four scores of a pass-through entry.
pub const PASS_THROUGH_SCORE: f64 = -10.0;

#[derive(Debug, Clone, PartialEq)]
pub struct PhraseEntry {
    pub source: Vec<String>,
    pub target: Vec<String>,
    /// Forward/backward phrase and lexical log-probabilities, natural log.
    pub scores: [f64; 4],
}

impl PhraseEntry {
    pub fn new(source: Vec<String>, target: Vec<String>, scores: [f64; 4]) -> Result<Self> {
        if source.is_empty() || source.len() > MAX_PHRASE_LEN {
            return Err(Error::Config(format!(
                "source phrase length must be 1..={MAX_PHRASE_LEN}, got {}",
                source.len()
            )));
        }
        if scores.iter().any(|s| !s.is_finite()) {
            return Err(Error::Config("phrase scores must be finite".into()));
        }
        Ok(PhraseEntry { source, target, scores })
    }

    pub fn pass_through(word: &str) -> Self {
        PhraseEntry {
            source: vec![word.to_string()],
            target: vec![word.to_string()],
            scores: [PASS_THROUGH_SCORE; 4],
        }
    }
}

/// Exact-match source phrase lookup.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PhraseTable {
    entries: HashMap<Vec<String>, Vec<PhraseEntry>>,
    max_len: usize,
}

impl PhraseTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, entry: PhraseEntry) {
        self.max_len = self.max_len.max(entry.source.len());
        self.entries.entry(entry.source.clone()).or_default().push(entry);
    }

    /// Parses `src ||| tgt ||| s1 s2 s3 s4` lines with log10 scores.
    pub fn parse(text: &str) -> Result<Self> {
        let mut table = PhraseTable::new();
        for (lineno, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let err = |msg: String| Error::Parse { line: lineno + 1, msg };
            let fields: Vec<&str> = line.split("|||").map(str::trim).collect();
            if fields.len() != 3 {
                return Err(err("expected `src ||| tgt ||| s1 s2 s3 s4`".into()));
            }
            let source: Vec<String> = fields[0].split_whitespace().map(str::to_string).collect();
            let target: Vec<String> = fields[1].split_whitespace().map(str::to_string).collect();
            let scores: Vec<f64> = fields[2]
                .split_whitespace()
                .map(|s| s.parse::<f64>().map_err(|_| err(format!("invalid score `{s}`"))))
                .collect::<Result<_>>()?;
            let scores: [f64; 4] = scores
                .try_into()
                .map_err(|v: Vec<f64>| err(format!("expected 4 scores, found {}", v.len())))?;
            let entry = PhraseEntry::new(source, target, scores.map(|s| s * LN_10)).map_err(|e| err(e.to_string()))?;
            table.insert(entry);
        }
        Ok(table)
    }

    pub fn lookup(&self, source: &[String]) -> &[PhraseEntry] {
        self.entries.get(source).map_or(&[], Vec::as_slice)
    }

    pub fn max_len(&self) -> usize {
        self.max_len
    }

    pub fn len(&self) -> usize {
        self.entries.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Writes the table back in the file format, sources in sorted order.
    pub fn to_text(&self) -> String {
        let mut keys: Vec<&Vec<String>> = self.entries.keys().collect();
        keys.sort();
        let mut out = String::new();
        for k in keys {
            for e in &self.entries[k] {
                let s: Vec<String> = e.scores.iter().map(|v| format!("{}", v / LN_10)).collect();
                out.push_str(&format!("{} ||| {} ||| {}\n", e.source.join(" "), e.target.join(" "), s.join(" ")));
            }
        }
        out
    }
}
