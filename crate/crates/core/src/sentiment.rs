//! Lexicon valence scoring.
//!
//! A simplified VADER-style rule set: each lexicon word contributes its
//! valence, a booster directly before it pushes the valence further from
//! zero, a negator among the three preceding tokens flips and damps it, and
//! the raw sum is squashed into `[-1, 1]`.
//!
//! Lexicon file format (UTF-8): `token<TAB>valence` per line. A `#boosters`
//! line switches to `token<TAB>increment` entries, `#negators` to one token
//! per line, `#valences` back to valences. Other `#` lines and blank lines
//! are ignored.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use thiserror::Error;
use tracing::warn;

use crate::corpus::tokenize;

pub const NEGATION_SCALAR: f64 = -0.74;
pub const NORMALIZATION_ALPHA: f64 = 15.0;
pub const NEGATION_WINDOW: usize = 3;
pub const VALENCE_BOUND: f64 = 4.0;

/// The lexicon shipped with the crate (`data/lexicon.tsv`).
pub const BUNDLED_LEXICON: &str = include_str!("../data/lexicon.tsv");

#[derive(Debug, Error)]
pub enum LexiconError {
    #[error("cannot read lexicon {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("lexicon line {line}: {message}")]
    Parse { line: usize, message: String },
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SentimentLexicon {
    valences: BTreeMap<String, f64>,
    boosters: BTreeMap<String, f64>,
    negators: BTreeSet<String>,
}

#[derive(Clone, Copy, PartialEq)]
enum Section {
    Valences,
    Boosters,
    Negators,
}

impl SentimentLexicon {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_valence(mut self, token: &str, valence: f64) -> Self {
        self.valences.insert(token.to_string(), valence.clamp(-VALENCE_BOUND, VALENCE_BOUND));
        self
    }

    pub fn with_booster(mut self, token: &str, increment: f64) -> Self {
        self.negators.remove(token);
        self.boosters.insert(token.to_string(), increment);
        self
    }

    pub fn with_negator(mut self, token: &str) -> Self {
        self.boosters.remove(token);
        self.negators.insert(token.to_string());
        self
    }

    pub fn valence(&self, token: &str) -> Option<f64> {
        self.valences.get(token).copied()
    }

    pub fn is_empty(&self) -> bool {
        self.valences.is_empty()
    }

    /// Same lexicon with every valence negated.
    pub fn mirrored(&self) -> Self {
        let mut out = self.clone();
        for v in out.valences.values_mut() {
            *v = -*v;
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self, LexiconError> {
        let mut lex = SentimentLexicon::new();
        let mut section = Section::Valences;
        for (i, line) in text.lines().enumerate() {
            let lineno = i + 1;
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() {
                continue;
            }
            if let Some(tag) = line.strip_prefix('#') {
                match tag.trim() {
                    "valences" => section = Section::Valences,
                    "boosters" => section = Section::Boosters,
                    "negators" => section = Section::Negators,
                    _ => {}
                }
                continue;
            }
            if section == Section::Negators {
                let tok = line.trim();
                if tok.contains(char::is_whitespace) {
                    return Err(LexiconError::Parse { line: lineno, message: "negator must be a single token".into() });
                }
                if lex.boosters.contains_key(tok) {
                    return Err(LexiconError::Parse { line: lineno, message: format!("`{tok}` is already a booster") });
                }
                lex.negators.insert(tok.to_string());
                continue;
            }
            let (tok, value) = line
                .split_once('\t')
                .ok_or_else(|| LexiconError::Parse { line: lineno, message: "expected token<TAB>value".into() })?;
            let value: f64 = value
                .trim()
                .parse()
                .ok()
                .filter(|v: &f64| v.is_finite())
                .ok_or_else(|| LexiconError::Parse { line: lineno, message: format!("bad number `{}`", value.trim()) })?;
            let tok = tok.trim();
            if tok.is_empty() {
                return Err(LexiconError::Parse { line: lineno, message: "empty token".into() });
            }
            match section {
                Section::Valences => {
                    if !(-VALENCE_BOUND..=VALENCE_BOUND).contains(&value) {
                        return Err(LexiconError::Parse { line: lineno, message: format!("valence {value} outside [-4, 4]") });
                    }
                    if lex.valences.insert(tok.to_string(), value).is_some() {
                        warn!(line = lineno, token = tok, "duplicate lexicon entry, keeping the later value");
                    }
                }
                Section::Boosters => {
                    if lex.negators.contains(tok) {
                        return Err(LexiconError::Parse { line: lineno, message: format!("`{tok}` is already a negator") });
                    }
                    if lex.boosters.insert(tok.to_string(), value).is_some() {
                        warn!(line = lineno, token = tok, "duplicate booster entry, keeping the later value");
                    }
                }
                Section::Negators => unreachable!(),
            }
        }
        Ok(lex)
    }

    pub fn bundled() -> Self {
        Self::parse(BUNDLED_LEXICON).expect("bundled lexicon parses")
    }

    pub fn load(path: &Path) -> Result<Self, LexiconError> {
        let text = std::fs::read_to_string(path).map_err(|source| LexiconError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    /// Unnormalized valence sum of a token sequence.
    pub fn raw_sum<S: AsRef<str>>(&self, tokens: &[S]) -> f64 {
        let mut sum = 0.0;
        for (i, tok) in tokens.iter().enumerate() {
            let Some(mut v) = self.valence(tok.as_ref()) else { continue };
            if i > 0 {
                if let Some(b) = self.boosters.get(tokens[i - 1].as_ref()) {
                    v += if v > 0.0 { *b } else if v < 0.0 { -*b } else { 0.0 };
                }
            }
            let start = i.saturating_sub(NEGATION_WINDOW);
            if tokens[start..i].iter().any(|t| self.negators.contains(t.as_ref())) {
                v *= NEGATION_SCALAR;
            }
            sum += v;
        }
        sum
    }

    /// Compound score in `[-1, 1]` for already tokenized text.
    pub fn polarity_tokens<S: AsRef<str>>(&self, tokens: &[S]) -> f64 {
        normalize(self.raw_sum(tokens))
    }

    /// Compound score in `[-1, 1]`.
    pub fn polarity(&self, text: &str) -> f64 {
        self.polarity_tokens(&tokenize(text))
    }
}

/// `s / sqrt(s^2 + alpha)`, clamped for the overflow case.
pub fn normalize(sum: f64) -> f64 {
    if sum == 0.0 {
        return 0.0;
    }
    (sum / (sum * sum + NORMALIZATION_ALPHA).sqrt()).clamp(-1.0, 1.0)
}

pub fn polarity(text: &str, lexicon: &SentimentLexicon) -> f64 {
    lexicon.polarity(text)
}
