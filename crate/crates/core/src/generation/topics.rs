use std::collections::{BTreeMap, BTreeSet};

use crate::corpus::{tokenize, Corpus};
use crate::par::{self, Exec};

const STOPWORDS: &[&str] = &[
    "a", "about", "above", "after", "again", "against", "all", "am", "an", "and", "any", "are", "aren't",
    "as", "at", "be", "because", "been", "before", "being", "below", "between", "both", "but", "by", "can",
    "can't", "cannot", "could", "couldn't", "did", "didn't", "do", "does", "doesn't", "doing", "don't",
    "down", "during", "each", "few", "for", "from", "further", "get", "got", "had", "hadn't", "has",
    "hasn't", "have", "haven't", "having", "he", "he'd", "he'll", "he's", "her", "here", "here's", "hers",
    "herself", "hey", "him", "himself", "his", "how", "how's", "i", "i'd", "i'll", "i'm", "i've", "if",
    "in", "into", "is", "isn't", "it", "it's", "its", "itself", "just", "let's", "like", "me", "more",
    "most", "mustn't", "my", "myself", "no", "nor", "not", "now", "of", "off", "oh", "ok", "okay", "on",
    "once", "only", "or", "other", "ought", "our", "ours", "ourselves", "out", "over", "own", "really",
    "same", "shan't", "she", "she'd", "she'll", "she's", "should", "shouldn't", "so", "some", "such",
    "than", "that", "that's", "the", "their", "theirs", "them", "themselves", "then", "there", "there's",
    "these", "they", "they'd", "they'll", "they're", "they've", "this", "those", "through", "to", "too",
    "under", "until", "up", "us", "very", "was", "wasn't", "we", "we'd", "we'll", "we're", "we've",
    "well", "were", "weren't", "what", "what's", "when", "when's", "where", "where's", "which", "while",
    "who", "who's", "whom", "why", "why's", "will", "with", "won't", "would", "wouldn't", "yeah", "yes",
    "you", "you'd", "you'll", "you're", "you've", "your", "yours", "yourself", "yourselves",
];

pub fn is_stopword(token: &str) -> bool {
    STOPWORDS.binary_search(&token).is_ok()
}

fn is_content_word(token: &str) -> bool {
    token.chars().any(char::is_alphabetic) && !is_stopword(token)
}

/// Document frequencies with films as documents.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DocFreqs {
    pub documents: u64,
    pub df: BTreeMap<String, u64>,
}

impl DocFreqs {
    pub fn from_corpus(corpus: &Corpus, exec: Exec) -> Self {
        let df = par::fold_merge(
            exec,
            corpus.films(),
            BTreeMap::new,
            |mut acc: BTreeMap<String, u64>, film| {
                let distinct: BTreeSet<&String> = film.lines.iter().flatten().collect();
                for t in distinct {
                    *acc.entry(t.clone()).or_default() += 1;
                }
                acc
            },
            |mut a, b| {
                for (t, n) in b {
                    *a.entry(t).or_default() += n;
                }
                a
            },
        );
        DocFreqs { documents: corpus.films().len() as u64, df }
    }

    /// Smoothed inverse document frequency, `ln((1 + N) / (1 + df)) + 1`.
    pub fn idf(&self, token: &str) -> f64 {
        let df = self.df.get(token).copied().unwrap_or(0) as f64;
        ((1.0 + self.documents as f64) / (1.0 + df)).ln() + 1.0
    }
}

/// Topic keywords with weights in `[0, 1]`, strongest first.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TopicProfile {
    pub keywords: Vec<(String, f64)>,
}

impl TopicProfile {
    pub fn is_empty(&self) -> bool {
        self.keywords.is_empty()
    }

    pub fn len(&self) -> usize {
        self.keywords.len()
    }

    pub fn tokens(&self) -> impl Iterator<Item = &str> {
        self.keywords.iter().map(|(t, _)| t.as_str())
    }

    pub fn contains(&self, token: &str) -> bool {
        self.keywords.iter().any(|(t, _)| t == token)
    }
}

/// Top `k` content words of the recent utterances by TF-IDF. Ties go to the
/// lexicographically smaller token. Weights are scaled so the top keyword
/// has weight 1.
pub fn extract_topics<S: AsRef<str>>(recent_utterances: &[S], doc_freqs: &DocFreqs, k: usize) -> TopicProfile {
    let mut tf: BTreeMap<String, u64> = BTreeMap::new();
    for u in recent_utterances {
        for t in tokenize(u.as_ref()) {
            if is_content_word(&t) {
                *tf.entry(t).or_default() += 1;
            }
        }
    }
    let mut scored: Vec<(String, f64)> = tf
        .into_iter()
        .map(|(t, n)| {
            let w = n as f64 * doc_freqs.idf(&t);
            (t, w)
        })
        .collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    scored.truncate(k);
    if let Some(max) = scored.first().map(|(_, w)| *w).filter(|w| *w > 0.0) {
        for (_, w) in &mut scored {
            *w /= max;
        }
    }
    TopicProfile { keywords: scored }
}
