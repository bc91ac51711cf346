use std::collections::BTreeMap;

use super::GenerationError;
use crate::corpus::{Corpus, Vocabulary};
use crate::par::{self, Exec};

/// Begin-of-sentence pad. Only ever appears in contexts.
pub const BOS: &str = "<s>";
/// End-of-sentence symbol. Predicted once per sequence.
pub const EOS: &str = "</s>";

/// Counts following one context.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ContextCounts {
    pub total: u64,
    pub next: BTreeMap<u32, u64>,
}

type CountMap = BTreeMap<Vec<u32>, ContextCounts>;

/// Add-k smoothed n-gram model with backoff to the longest seen context.
///
/// Symbol ids are vocabulary ids, then `</s>` at `vocab.len()` and `<s>` at
/// `vocab.len() + 1`. The prediction space is the vocabulary plus `</s>`.
#[derive(Debug, Clone, PartialEq)]
pub struct NgramModel {
    order: usize,
    smoothing: f64,
    vocab: Vocabulary,
    counts: CountMap,
}

impl NgramModel {
    /// Train on the response side of every corpus pair.
    pub fn train(corpus: &Corpus, vocab: &Vocabulary, order: usize, smoothing: f64) -> Result<Self, GenerationError> {
        Self::train_with(Exec::default(), corpus, vocab, order, smoothing)
    }

    pub fn train_with(
        exec: Exec,
        corpus: &Corpus,
        vocab: &Vocabulary,
        order: usize,
        smoothing: f64,
    ) -> Result<Self, GenerationError> {
        let responses: Vec<&[String]> = corpus.responses().collect();
        Self::train_sequences(exec, &responses, vocab, order, smoothing)
    }

    /// Train on arbitrary token sequences.
    pub fn train_sequences<S: AsRef<[String]> + Sync>(
        exec: Exec,
        sequences: &[S],
        vocab: &Vocabulary,
        order: usize,
        smoothing: f64,
    ) -> Result<Self, GenerationError> {
        let mut model = Self::untrained(vocab.clone(), order, smoothing)?;
        if sequences.iter().all(|s| s.as_ref().is_empty()) {
            return Err(GenerationError::EmptyCorpus);
        }
        let counts = par::fold_merge(
            exec,
            sequences,
            CountMap::new,
            |mut acc, seq| {
                model.count_sequence(&mut acc, seq.as_ref());
                acc
            },
            merge_counts,
        );
        model.counts = counts;
        Ok(model)
    }

    /// A model without counts: every symbol gets `1 / V`.
    pub fn untrained(vocab: Vocabulary, order: usize, smoothing: f64) -> Result<Self, GenerationError> {
        if order < 1 {
            return Err(GenerationError::InvalidArgument("order must be at least 1".into()));
        }
        if !(smoothing > 0.0 && smoothing.is_finite()) {
            return Err(GenerationError::InvalidArgument("smoothing must be positive".into()));
        }
        Ok(Self { order, smoothing, vocab, counts: CountMap::new() })
    }

    fn count_sequence(&self, acc: &mut CountMap, seq: &[String]) {
        if seq.is_empty() {
            return;
        }
        let padded = self.padded(seq);
        for j in self.order - 1..padded.len() {
            let target = padded[j];
            for m in 0..self.order {
                let entry = acc.entry(padded[j - m..j].to_vec()).or_default();
                entry.total += 1;
                *entry.next.entry(target).or_default() += 1;
            }
        }
    }

    /// `order - 1` pads, the token ids, then `</s>`.
    pub fn padded(&self, seq: &[String]) -> Vec<u32> {
        let mut out = vec![self.bos_id(); self.order - 1];
        out.extend(seq.iter().map(|t| self.vocab.id(t)));
        out.push(self.eos_id());
        out
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn smoothing(&self) -> f64 {
        self.smoothing
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn counts(&self) -> &BTreeMap<Vec<u32>, ContextCounts> {
        &self.counts
    }

    pub fn eos_id(&self) -> u32 {
        self.vocab.len() as u32
    }

    pub fn bos_id(&self) -> u32 {
        self.vocab.len() as u32 + 1
    }

    /// Size of the prediction space (vocabulary plus `</s>`).
    pub fn outcomes(&self) -> usize {
        self.vocab.len() + 1
    }

    pub fn symbol(&self, id: u32) -> &str {
        if id == self.eos_id() {
            EOS
        } else if id == self.bos_id() {
            BOS
        } else {
            self.vocab.token(id)
        }
    }

    pub fn count(&self, context: &[u32], target: u32) -> u64 {
        self.counts
            .get(context)
            .and_then(|c| c.next.get(&target))
            .copied()
            .unwrap_or(0)
    }

    /// History ids for a (possibly partial) token context: pads, then the
    /// tokens, keeping only the last `order - 1`.
    pub fn history(&self, context: &[String]) -> Vec<u32> {
        let mut h = vec![self.bos_id(); self.order - 1];
        h.extend(context.iter().map(|t| self.vocab.id(t)));
        let keep = self.order - 1;
        h.split_off(h.len() - keep)
    }

    /// Longest suffix of `history` (at most `order - 1` long) with a nonzero
    /// count. Falls back to the empty context, which may itself be unseen.
    fn active_context<'a>(&'a self, history: &[u32]) -> Option<&'a ContextCounts> {
        let max = history.len().min(self.order - 1);
        for m in (0..=max).rev() {
            let ctx = &history[history.len() - m..];
            if let Some(c) = self.counts.get(ctx).filter(|c| c.total > 0) {
                return Some(c);
            }
        }
        None
    }

    pub fn prob_id(&self, history: &[u32], target: u32) -> f64 {
        let v = self.outcomes() as f64;
        match self.active_context(history) {
            Some(c) => {
                let n = c.next.get(&target).copied().unwrap_or(0) as f64;
                (n + self.smoothing) / (c.total as f64 + self.smoothing * v)
            }
            None => 1.0 / v,
        }
    }

    /// Full next-symbol distribution, indexed by symbol id (length `outcomes()`).
    pub fn distribution(&self, history: &[u32]) -> Vec<f64> {
        let v = self.outcomes();
        match self.active_context(history) {
            Some(c) => {
                let denom = c.total as f64 + self.smoothing * v as f64;
                let mut dist = vec![self.smoothing / denom; v];
                for (&id, &n) in &c.next {
                    dist[id as usize] = (n as f64 + self.smoothing) / denom;
                }
                dist
            }
            None => vec![1.0 / v as f64; v],
        }
    }

    /// Probability of `token` (or `</s>`) after the token context.
    pub fn next_token_prob(&self, context: &[String], token: &str) -> f64 {
        let target = if token == EOS { self.eos_id() } else { self.vocab.id(token) };
        self.prob_id(&self.history(context), target)
    }

    /// Sum of natural-log probabilities of the padded sequence, and the
    /// number of predicted positions.
    pub fn log_prob(&self, tokens: &[String]) -> (f64, usize) {
        let padded = self.padded(tokens);
        let k = self.order - 1;
        let mut total = 0.0;
        for j in k..padded.len() {
            total += self.prob_id(&padded[j - k..j], padded[j]).ln();
        }
        (total, padded.len() - k)
    }

    pub fn perplexity(&self, tokens: &[String]) -> Result<f64, GenerationError> {
        if tokens.is_empty() {
            return Err(GenerationError::InvalidArgument("perplexity of an empty sequence".into()));
        }
        let (lp, n) = self.log_prob(tokens);
        Ok((-lp / n as f64).exp())
    }

    /// Perplexity over many sequences (mean over every predicted position).
    /// Per-sequence sums are combined in input order on both execution paths.
    pub fn corpus_perplexity<S: AsRef<[String]> + Sync>(&self, exec: Exec, sequences: &[S]) -> Result<f64, GenerationError> {
        let parts = par::map(exec, sequences, |s| {
            let s = s.as_ref();
            if s.is_empty() { (0.0, 0) } else { self.log_prob(s) }
        });
        let (lp, n) = parts.iter().fold((0.0, 0usize), |(a, b), (lp, n)| (a + lp, b + n));
        if n == 0 {
            return Err(GenerationError::InvalidArgument("perplexity of an empty sequence set".into()));
        }
        Ok((-lp / n as f64).exp())
    }

    /// Line-oriented serialization: a `#ngram v1 order=N smoothing=K` header,
    /// the vocabulary block, then `#counts` with
    /// `<context tokens><TAB><target><TAB><count>` lines.
    pub fn to_text(&self) -> String {
        let mut out = format!("#ngram v1 order={} smoothing={}\n", self.order, self.smoothing);
        out.push_str(&self.vocab.to_text());
        out.push_str("#counts\n");
        for (ctx, c) in &self.counts {
            let ctx_text: Vec<&str> = ctx.iter().map(|&id| self.symbol(id)).collect();
            let ctx_text = ctx_text.join(" ");
            for (&target, &n) in &c.next {
                out.push_str(&format!("{ctx_text}\t{}\t{n}\n", self.symbol(target)));
            }
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, GenerationError> {
        let bad = |line: usize, msg: &str| GenerationError::Format { line, message: msg.to_string() };
        let (header, rest) = text.split_once('\n').ok_or_else(|| bad(1, "missing header"))?;
        let params = header.strip_prefix("#ngram v1 ").ok_or_else(|| bad(1, "expected `#ngram v1`"))?;
        let mut order = None;
        let mut smoothing = None;
        for kv in params.split_whitespace() {
            match kv.split_once('=') {
                Some(("order", v)) => order = v.parse::<usize>().ok(),
                Some(("smoothing", v)) => smoothing = v.parse::<f64>().ok(),
                _ => return Err(bad(1, "unknown header field")),
            }
        }
        let (order, smoothing) = order.zip(smoothing).ok_or_else(|| bad(1, "header needs order and smoothing"))?;
        let (vocab_text, counts_text) = rest
            .split_once("#counts\n")
            .or_else(|| rest.strip_suffix("#counts").map(|v| (v, "")))
            .ok_or_else(|| bad(1, "missing #counts section"))?;
        let vocab = Vocabulary::from_text(vocab_text).map_err(|e| bad(2, &e.to_string()))?;
        let mut model = Self::untrained(vocab, order, smoothing)?;
        let first_count_line = 2 + vocab_text.lines().count() + 1;
        let lookup = |tok: &str| -> Option<u32> {
            match tok {
                EOS => Some(model.eos_id()),
                BOS => Some(model.bos_id()),
                t if model.vocab.contains(t) => Some(model.vocab.id(t)),
                _ => None,
            }
        };
        let mut counts = CountMap::new();
        for (i, line) in counts_text.lines().enumerate() {
            let lineno = first_count_line + i;
            let mut fields = line.split('\t');
            let (Some(ctx), Some(target), Some(n), None) = (fields.next(), fields.next(), fields.next(), fields.next()) else {
                return Err(bad(lineno, "expected context<TAB>target<TAB>count"));
            };
            let ctx: Option<Vec<u32>> = ctx.split(' ').filter(|t| !t.is_empty()).map(lookup).collect();
            let ctx = ctx.filter(|c| c.len() < order).ok_or_else(|| bad(lineno, "bad context"))?;
            let target = lookup(target).filter(|&t| t != model.bos_id()).ok_or_else(|| bad(lineno, "bad target"))?;
            let n: u64 = n.parse().ok().filter(|&n| n > 0).ok_or_else(|| bad(lineno, "bad count"))?;
            let entry = counts.entry(ctx).or_default();
            entry.total += n;
            *entry.next.entry(target).or_default() += n;
        }
        model.counts = counts;
        Ok(model)
    }
}

fn merge_counts(mut a: CountMap, b: CountMap) -> CountMap {
    if a.len() < b.len() {
        return merge_counts(b, a);
    }
    for (ctx, c) in b {
        let entry = a.entry(ctx).or_default();
        entry.total += c.total;
        for (t, n) in c.next {
            *entry.next.entry(t).or_default() += n;
        }
    }
    a
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    fn seq(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    fn vocab_of(seqs: &[Vec<String>]) -> Vocabulary {
        let mut f = BTreeMap::new();
        for t in seqs.iter().flatten() {
            *f.entry(t.clone()).or_insert(0u64) += 1;
        }
        Vocabulary::from_counts(&f, 100).unwrap()
    }

    fn model(seqs: &[Vec<String>], order: usize, k: f64) -> NgramModel {
        NgramModel::train_sequences(Exec::Sequential, seqs, &vocab_of(seqs), order, k).unwrap()
    }

    #[test]
    fn bigram_counts_by_hand() {
        let seqs = vec![seq("a b a b a c")];
        let m = model(&seqs, 2, 1.0);
        let v = m.vocab();
        assert_eq!(m.count(&[v.id("a")], v.id("b")), 2);
        assert_eq!(m.count(&[v.id("a")], v.id("c")), 1);
        assert_eq!(m.count(&[v.id("c")], m.eos_id()), 1);
        assert_eq!(m.count(&[m.bos_id()], v.id("a")), 1);
    }

    #[test]
    fn unigram_order_ignores_context() {
        let seqs = vec![seq("a b a")];
        let m = model(&seqs, 1, 0.5);
        let v = m.vocab();
        assert_eq!(m.count(&[], v.id("a")), 2);
        assert_eq!(m.next_token_prob(&seq("b"), "a"), m.next_token_prob(&seq("a"), "a"));
    }

    #[test]
    fn duplicate_sequences_double_counts() {
        let one = model(&[seq("x y z x")], 3, 0.1);
        let two = model(&[seq("x y z x"), seq("x y z x")], 3, 0.1);
        for (ctx, c) in one.counts() {
            let d = &two.counts()[ctx];
            assert_eq!(d.total, 2 * c.total);
            for (t, n) in &c.next {
                assert_eq!(d.next[t], 2 * n);
            }
        }
        assert_eq!(one.counts().len(), two.counts().len());
    }

    #[test]
    fn add_one_example() {
        // vocabulary {<unk>, a, b, c} plus </s>: 5 outcomes
        let m = model(&[seq("a b a b a c")], 2, 1.0);
        assert_eq!(m.outcomes(), 5);
        assert!((m.next_token_prob(&seq("a"), "b") - 0.375).abs() < 1e-15);
    }

    #[test]
    fn unseen_context_backs_off() {
        let m = model(&[seq("a b a b a c")], 3, 0.1);
        // (c, a) never occurs as a trigram context, (a) does
        let full = m.next_token_prob(&seq("c a"), "b");
        let lower = m.prob_id(&[m.vocab().id("a")], m.vocab().id("b"));
        assert_eq!(full, lower);
        // an unknown word maps to <unk>, unseen at every level above unigram
        let uni = m.prob_id(&[], m.vocab().id("b"));
        assert_eq!(m.next_token_prob(&seq("zzz zzz"), "b"), uni);
    }

    #[test]
    fn normalized() {
        let m = model(&[seq("a b a b a c"), seq("c c b")], 3, 0.1);
        for ctx in [seq(""), seq("a"), seq("a b"), seq("q r")] {
            let h = m.history(&ctx);
            let total: f64 = m.distribution(&h).iter().sum();
            assert!((total - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn empty_training_set_errors() {
        let v = vocab_of(&[seq("a")]);
        let empty: Vec<Vec<String>> = vec![vec![]];
        assert!(matches!(
            NgramModel::train_sequences(Exec::Sequential, &empty, &v, 2, 0.1),
            Err(GenerationError::EmptyCorpus)
        ));
        assert!(NgramModel::untrained(v.clone(), 0, 0.1).is_err());
        assert!(NgramModel::untrained(v, 2, 0.0).is_err());
    }

    #[test]
    fn uniform_perplexity_is_vocab_size() {
        let v = vocab_of(&[seq("a b c d")]);
        let m = NgramModel::untrained(v, 3, 0.1).unwrap();
        let pp = m.perplexity(&seq("a b c d a")).unwrap();
        assert!((pp - m.outcomes() as f64).abs() < 1e-9);
        assert!(m.perplexity(&[]).is_err());
    }

    #[test]
    fn deterministic_chain_perplexity_near_one() {
        let s = seq(&"a ".repeat(200));
        let m = model(std::slice::from_ref(&s), 2, 1e-9);
        let pp = m.perplexity(&s).unwrap();
        assert!(pp < 1.05, "{pp}");
    }

    #[test]
    fn text_round_trip() {
        let m = model(&[seq("a b a b a c"), seq("c , b !")], 3, 0.1);
        let back = NgramModel::from_text(&m.to_text()).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.to_text(), m.to_text());
    }

    #[test]
    fn malformed_model_text() {
        assert!(NgramModel::from_text("").is_err());
        assert!(NgramModel::from_text("#ngram v1 order=2 smoothing=0.1\n#vocab v1 max_size=3\n<unk>\t0\n#counts\n\tzz\t3\n").is_err());
    }
}
