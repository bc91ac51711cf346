use std::collections::HashMap;
use std::path::Path;

use improv_core::sentiment::SentimentLexicon;
use improv_core::tokenize;

struct Reference {
    valence: HashMap<String, f64>,
    booster: HashMap<String, f64>,
    negator: Vec<String>,
}

fn parse_reference(text: &str) -> Reference {
    let mut r = Reference { valence: HashMap::new(), booster: HashMap::new(), negator: Vec::new() };
    let mut section = "valences";
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        if line == "#boosters" || line == "#negators" {
            section = &line[1..];
            continue;
        }
        if line.starts_with('#') {
            continue;
        }
        match section {
            "negators" => r.negator.push(line.trim().to_string()),
            s => {
                let mut parts = line.split('\t');
                let tok = parts.next().unwrap().to_string();
                let v: f64 = parts.next().unwrap().parse().unwrap();
                if s == "valences" {
                    r.valence.insert(tok, v);
                } else {
                    r.booster.insert(tok, v);
                }
            }
        }
    }
    r
}

/// Straight transcription of the scoring rules, one token at a time.
fn reference_score(r: &Reference, text: &str) -> f64 {
    let tokens = tokenize(text);
    let mut s = 0.0;
    for i in 0..tokens.len() {
        let Some(&base) = r.valence.get(&tokens[i]) else { continue };
        let mut v = base;
        if i >= 1 {
            if let Some(&b) = r.booster.get(&tokens[i - 1]) {
                if v > 0.0 {
                    v += b;
                } else if v < 0.0 {
                    v -= b;
                }
            }
        }
        let mut negated = false;
        for back in 1..=3 {
            if i >= back && r.negator.contains(&tokens[i - back]) {
                negated = true;
            }
        }
        if negated {
            v *= -0.74;
        }
        s += v;
    }
    if s == 0.0 {
        0.0
    } else {
        s / (s * s + 15.0).sqrt()
    }
}

fn fixture(name: &str) -> String {
    std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)).unwrap()
}

#[test]
fn fifty_sentence_fixture_matches_reference() {
    let lex_text = fixture("mini_lexicon.tsv");
    let lexicon = SentimentLexicon::parse(&lex_text).unwrap();
    let reference = parse_reference(&lex_text);
    let sentences = fixture("sentences.txt");
    let sentences: Vec<&str> = sentences.lines().collect();
    assert_eq!(sentences.len(), 50);
    let mut nonzero = 0;
    for s in &sentences {
        let got = lexicon.polarity(s);
        let want = reference_score(&reference, s);
        assert!((got - want).abs() <= 1e-9, "{s:?}: {got} vs {want}");
        if want != 0.0 {
            nonzero += 1;
        }
    }
    assert!(nonzero > 40);
}

#[test]
fn bundled_lexicon_loads() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("data/lexicon.tsv");
    let lexicon = SentimentLexicon::load(&path).unwrap();
    assert!((lexicon.polarity("good") - 0.4404).abs() < 1e-4);
    assert!(lexicon.polarity("not good") < 0.0);
    assert!(SentimentLexicon::load(Path::new("/no/such/lexicon")).is_err());
    assert_eq!(SentimentLexicon::bundled(), lexicon);
}
