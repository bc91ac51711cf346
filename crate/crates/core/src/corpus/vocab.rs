use std::collections::{BTreeMap, HashMap};

use super::{Corpus, CorpusError};
use crate::par::{self, Exec};

/// Reserved symbol for out-of-vocabulary tokens. The tokenizer never emits it.
pub const UNK: &str = "<unk>";

/// Frequency-capped vocabulary. Index 0 is always [`UNK`]; the rest follow
/// descending corpus frequency with ties broken lexicographically.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    counts: Vec<u64>,
    max_size: usize,
    index: HashMap<String, u32>,
}

impl Vocabulary {
    /// Build from raw token frequencies, keeping `UNK` plus the
    /// `max_size - 1` most frequent tokens.
    pub fn from_counts(freqs: &BTreeMap<String, u64>, max_size: usize) -> Result<Self, CorpusError> {
        if max_size == 0 {
            return Err(CorpusError::InvalidArgument("max_size must be at least 1".into()));
        }
        let mut ranked: Vec<(&String, u64)> = freqs
            .iter()
            .filter(|(t, _)| t.as_str() != UNK)
            .map(|(t, &c)| (t, c))
            .collect();
        // BTreeMap iteration is already lexicographic, a stable sort keeps it for ties.
        ranked.sort_by_key(|&(_, c)| std::cmp::Reverse(c));
        ranked.truncate(max_size - 1);

        let mut tokens = vec![UNK.to_string()];
        let mut counts = vec![freqs.get(UNK).copied().unwrap_or(0)];
        for (t, c) in ranked {
            tokens.push(t.clone());
            counts.push(c);
        }
        Ok(Self::from_parts(tokens, counts, max_size))
    }

    fn from_parts(tokens: Vec<String>, counts: Vec<u64>, max_size: usize) -> Self {
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        Self { tokens, counts, max_size, index }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        // UNK is always present
        false
    }

    pub fn max_size(&self) -> usize {
        self.max_size
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    /// Id of `token`, or 0 (`UNK`) when out of vocabulary.
    pub fn id(&self, token: &str) -> u32 {
        self.index.get(token).copied().unwrap_or(0)
    }

    pub fn token(&self, id: u32) -> &str {
        &self.tokens[id as usize]
    }

    /// Serialize as `#vocab v1 max_size=N` followed by `token<TAB>count` lines.
    pub fn to_text(&self) -> String {
        let mut out = format!("#vocab v1 max_size={}\n", self.max_size);
        for (t, c) in self.tokens.iter().zip(&self.counts) {
            out.push_str(&format!("{t}\t{c}\n"));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, CorpusError> {
        let mut lines = text.lines().enumerate();
        let (_, header) = lines
            .next()
            .ok_or_else(|| CorpusError::format("<vocab>", 1, "missing header"))?;
        let max_size = header
            .strip_prefix("#vocab v1 max_size=")
            .and_then(|n| n.parse::<usize>().ok())
            .filter(|&n| n >= 1)
            .ok_or_else(|| CorpusError::format("<vocab>", 1, "bad vocabulary header"))?;
        let mut tokens = Vec::new();
        let mut counts = Vec::new();
        for (i, line) in lines {
            let (tok, count) = line
                .split_once('\t')
                .and_then(|(t, c)| Some((t, c.parse::<u64>().ok()?)))
                .ok_or_else(|| CorpusError::format("<vocab>", i + 1, "expected token<TAB>count"))?;
            tokens.push(tok.to_string());
            counts.push(count);
        }
        if tokens.first().map(String::as_str) != Some(UNK) || tokens.len() > max_size {
            return Err(CorpusError::format("<vocab>", 2, "vocabulary must start with <unk> and fit max_size"));
        }
        Ok(Self::from_parts(tokens, counts, max_size))
    }
}

/// Count every token of every stored line in the corpus.
pub fn token_frequencies(corpus: &Corpus, exec: Exec) -> BTreeMap<String, u64> {
    par::fold_merge(
        exec,
        &corpus.films,
        BTreeMap::new,
        |mut acc: BTreeMap<String, u64>, film| {
            for tok in film.lines.iter().flatten() {
                *acc.entry(tok.clone()).or_default() += 1;
            }
            acc
        },
        |mut a, b| {
            for (t, c) in b {
                *a.entry(t).or_default() += c;
            }
            a
        },
    )
}

/// Build a vocabulary of at most `max_size` entries (including `UNK`).
pub fn build_vocab(corpus: &Corpus, max_size: usize) -> Result<Vocabulary, CorpusError> {
    Vocabulary::from_counts(&token_frequencies(corpus, Exec::default()), max_size)
}
