use serde::Serialize;

use crate::generation::{Candidate, TopicProfile};
use crate::sentiment::SentimentLexicon;

/// Weights of the selection heuristic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
#[serde(default)]
pub struct SelectionWeights {
    pub lm: f64,
    pub sentiment: f64,
    pub topic: f64,
    pub length: f64,
}

impl Default for SelectionWeights {
    fn default() -> Self {
        Self { lm: 1.0, sentiment: 0.5, topic: 0.5, length: 0.25 }
    }
}

/// One candidate with its unweighted heuristic terms and weighted total.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoredCandidate {
    pub text: String,
    #[serde(skip)]
    pub candidate: Candidate,
    /// Length-normalized log-probability.
    pub lm_term: f64,
    /// `1 - |polarity(candidate) - polarity(last human line)| / 2`.
    pub sent_term: f64,
    /// Fraction of topic keywords present in the candidate.
    pub topic_term: f64,
    /// `|len - target_len| / target_len`, subtracted.
    pub len_term: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelectionTrace {
    pub candidates: Vec<ScoredCandidate>,
    pub chosen_index: usize,
    pub weights: SelectionWeights,
    pub target_len: usize,
    pub human_polarity: f64,
}

impl SelectionTrace {
    pub fn chosen(&self) -> &ScoredCandidate {
        &self.candidates[self.chosen_index]
    }
}

/// Score candidates against the last human line and the topic, and pick
/// the highest total (lowest index on ties). `candidates` must be non-empty.
pub fn score_candidates(
    candidates: Vec<Candidate>,
    lexicon: &SentimentLexicon,
    topic: &TopicProfile,
    last_human_line: &str,
    weights: SelectionWeights,
    target_len: usize,
) -> SelectionTrace {
    assert!(!candidates.is_empty(), "score_candidates needs at least one candidate");
    let human_polarity = lexicon.polarity(last_human_line);
    let target = target_len.max(1) as f64;
    let scored: Vec<ScoredCandidate> = candidates
        .into_iter()
        .map(|c| {
            let len = c.tokens.len().max(1) as f64;
            let lm_term = c.lm_logprob / len;
            let sent_term = 1.0 - (lexicon.polarity_tokens(&c.tokens) - human_polarity).abs() / 2.0;
            let topic_term = if topic.is_empty() {
                0.0
            } else {
                topic.tokens().filter(|k| c.tokens.iter().any(|t| t == k)).count() as f64 / topic.len() as f64
            };
            let len_term = (c.tokens.len() as f64 - target).abs() / target;
            let total = weights.lm * lm_term + weights.sentiment * sent_term + weights.topic * topic_term
                - weights.length * len_term;
            ScoredCandidate { text: c.text(), candidate: c, lm_term, sent_term, topic_term, len_term, total }
        })
        .collect();
    let mut chosen_index = 0;
    for (i, s) in scored.iter().enumerate() {
        if s.total > scored[chosen_index].total {
            chosen_index = i;
        }
    }
    SelectionTrace { candidates: scored, chosen_index, weights, target_len, human_polarity }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generation::CandidateSource;

    fn cand(text: &str, lp: f64) -> Candidate {
        Candidate {
            tokens: crate::corpus::tokenize(text),
            lm_logprob: lp,
            source: CandidateSource::InProcess,
        }
    }

    #[test]
    fn lm_only_weights_pick_best_normalized_logprob() {
        let w = SelectionWeights { lm: 1.0, sentiment: 0.0, topic: 0.0, length: 0.0 };
        let cands = vec![cand("a b", -4.0), cand("a b c d", -6.0), cand("a", -3.0)];
        let t = score_candidates(cands, &SentimentLexicon::new(), &TopicProfile::default(), "", w, 8);
        // -2.0, -1.5, -3.0
        assert_eq!(t.chosen_index, 1);
    }

    #[test]
    fn ties_go_to_first() {
        let cands = vec![cand("same words", -2.0), cand("same words", -2.0)];
        let t = score_candidates(cands, &SentimentLexicon::new(), &TopicProfile::default(), "hi", SelectionWeights::default(), 8);
        assert_eq!(t.chosen_index, 0);
    }
}
