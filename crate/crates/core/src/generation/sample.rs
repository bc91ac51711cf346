use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Candidate, CandidateSource, NgramModel, TopicProfile};
use crate::par::{self, Exec};

/// Multiplicative topic boost applied to keyword probabilities.
pub const DEFAULT_BOOST: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplingConfig {
    pub k: usize,
    pub max_len: usize,
    pub boost: f64,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self { k: 5, max_len: 20, boost: DEFAULT_BOOST }
    }
}

/// Symbol ids of the topic keywords that are in the model vocabulary, with
/// their weights.
pub fn topic_ids(model: &NgramModel, topic: &TopicProfile) -> Vec<(u32, f64)> {
    topic
        .keywords
        .iter()
        .filter(|(t, _)| model.vocab().contains(t))
        .map(|(t, w)| (model.vocab().id(t), *w))
        .collect()
}

/// The distribution a sampler draws from after `history`.
///
/// Each keyword's model probability is multiplied by `1 + boost * weight`
/// and the result renormalized. At the first position `</s>` is removed so
/// no reply is empty. With no effective boost the model distribution is
/// returned untouched (apart from that first-step mask).
pub fn sampling_distribution(
    model: &NgramModel,
    history: &[u32],
    topic: &[(u32, f64)],
    boost: f64,
    first_step: bool,
) -> Vec<f64> {
    let mut dist = model.distribution(history);
    let boosted = boost != 0.0 && topic.iter().any(|(_, w)| *w != 0.0);
    if boosted {
        for &(id, w) in topic {
            dist[id as usize] *= 1.0 + boost * w;
        }
    }
    if first_step {
        dist[model.eos_id() as usize] = 0.0;
    }
    if boosted || first_step {
        let total: f64 = dist.iter().sum();
        for p in &mut dist {
            *p /= total;
        }
    }
    dist
}

fn draw(dist: &[f64], rng: &mut ChaCha8Rng) -> u32 {
    let u: f64 = rng.gen::<f64>();
    let mut acc = 0.0;
    let mut last_nonzero = 0;
    for (i, &p) in dist.iter().enumerate() {
        if p > 0.0 {
            acc += p;
            last_nonzero = i;
            if u < acc {
                return i as u32;
            }
        }
    }
    last_nonzero as u32
}

/// Sample one reply. `stream` selects an independent ChaCha stream so the
/// candidates of one request never share random draws.
pub fn sample_one(
    model: &NgramModel,
    topic: &[(u32, f64)],
    seed: u64,
    stream: u64,
    max_len: usize,
    boost: f64,
) -> Candidate {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let n = model.order() - 1;
    let mut history = vec![model.bos_id(); n];
    let mut tokens = Vec::new();
    let mut lm_logprob = 0.0;
    while tokens.len() < max_len.max(1) {
        let window = &history[history.len() - n..];
        let dist = sampling_distribution(model, window, topic, boost, tokens.is_empty());
        let id = draw(&dist, &mut rng);
        lm_logprob += model.prob_id(window, id).ln();
        if id == model.eos_id() {
            break;
        }
        tokens.push(model.symbol(id).to_string());
        history.push(id);
    }
    Candidate { tokens, lm_logprob, source: CandidateSource::InProcess }
}

/// `k` sampled replies, deterministic in every argument.
pub fn generate_candidates(
    model: &NgramModel,
    topic: &TopicProfile,
    seed: u64,
    config: &SamplingConfig,
) -> Vec<Candidate> {
    generate_candidates_with(Exec::default(), model, topic, seed, config)
}

pub fn generate_candidates_with(
    exec: Exec,
    model: &NgramModel,
    topic: &TopicProfile,
    seed: u64,
    config: &SamplingConfig,
) -> Vec<Candidate> {
    let ids = topic_ids(model, topic);
    par::map_range(exec, config.k, |i| {
        sample_one(model, &ids, seed, i as u64, config.max_len, config.boost)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Vocabulary;
    use std::collections::BTreeMap;

    fn seq(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    fn model_from(seqs: &[Vec<String>], order: usize, k: f64) -> NgramModel {
        let mut f = BTreeMap::new();
        for t in seqs.iter().flatten() {
            *f.entry(t.clone()).or_insert(0u64) += 1;
        }
        let v = Vocabulary::from_counts(&f, 100).unwrap();
        NgramModel::train_sequences(Exec::Sequential, seqs, &v, order, k).unwrap()
    }

    fn toy() -> NgramModel {
        model_from(
            &[seq("the cat sat on the mat ."), seq("the dog sat on the log ."), seq("a cat ran !")],
            3,
            0.1,
        )
    }

    fn topic(words: &[(&str, f64)]) -> TopicProfile {
        TopicProfile { keywords: words.iter().map(|(t, w)| (t.to_string(), *w)).collect() }
    }

    #[test]
    fn same_seed_same_candidates() {
        let m = toy();
        let cfg = SamplingConfig::default();
        let t = topic(&[("dog", 1.0)]);
        let a = generate_candidates_with(Exec::Sequential, &m, &t, 42, &cfg);
        let b = generate_candidates_with(Exec::Parallel, &m, &t, 42, &cfg);
        assert_eq!(a, b);
        assert_eq!(a.len(), 5);
        assert_ne!(a, generate_candidates(&m, &t, 43, &cfg));
    }

    #[test]
    fn zero_boost_is_model_distribution() {
        let m = toy();
        let ids = topic_ids(&m, &topic(&[("dog", 1.0), ("cat", 0.5)]));
        for ctx in [seq("the"), seq("the cat"), seq("zzz")] {
            let h = m.history(&ctx);
            assert_eq!(sampling_distribution(&m, &h, &ids, 0.0, false), m.distribution(&h));
        }
    }

    #[test]
    fn boost_raises_keyword_mass() {
        let m = toy();
        let ids = topic_ids(&m, &topic(&[("dog", 1.0)]));
        let h = m.history(&seq("the"));
        let plain = m.distribution(&h);
        let boosted = sampling_distribution(&m, &h, &ids, 2.0, false);
        let dog = m.vocab().id("dog") as usize;
        assert!(boosted[dog] > plain[dog]);
        let expected = plain[dog] * 3.0 / (1.0 + 2.0 * plain[dog]);
        assert!((boosted[dog] - expected).abs() < 1e-12);
        assert!((boosted.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn first_step_never_ends() {
        let m = toy();
        let h = m.history(&[]);
        let d = sampling_distribution(&m, &h, &[], 0.0, true);
        assert_eq!(d[m.eos_id() as usize], 0.0);
        assert!((d.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn degenerate_model_gives_single_tokens() {
        // every training sequence is one token long, so </s> follows with
        // probability 1 up to a vanishing smoothing mass
        let m = model_from(&[seq("hi"), seq("hi"), seq("hi")], 2, 1e-300);
        let cands = generate_candidates(&m, &TopicProfile::default(), 7, &SamplingConfig { k: 20, ..Default::default() });
        assert!(cands.iter().all(|c| c.tokens == ["hi"]));
    }

    #[test]
    fn respects_length_bounds_and_scores() {
        let m = toy();
        let cfg = SamplingConfig { k: 30, max_len: 4, boost: 2.0 };
        for c in generate_candidates(&m, &topic(&[("cat", 1.0)]), 9, &cfg) {
            assert!((1..=4).contains(&c.tokens.len()));
            assert!(c.lm_logprob.is_finite() && c.lm_logprob <= 0.0);
            assert!(!c.tokens.iter().any(|t| t == "<s>" || t == "</s>"));
        }
    }

    #[test]
    fn logprob_is_unboosted_model_score() {
        let m = toy();
        let c = sample_one(&m, &topic_ids(&m, &topic(&[("dog", 1.0)])), 3, 0, 20, 5.0);
        let (full, _) = m.log_prob(&c.tokens);
        if c.tokens.len() < 20 {
            assert!((c.lm_logprob - full).abs() < 1e-12);
        }
    }
}
