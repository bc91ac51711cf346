use std::path::{Path, PathBuf};

use improv_core::corpus::{build_vocab, corpus_files, ingest, ingest_with, read_subtitle_file, Corpus, CorpusError};
use improv_core::Exec;

fn toy_files() -> Vec<PathBuf> {
    corpus_files(&Path::new(env!("CARGO_MANIFEST_DIR")).join("data/toy_corpus")).unwrap()
}

#[test]
fn toy_corpus_shape() {
    let corpus = ingest(&toy_files()).unwrap();
    assert_eq!(corpus.films().len(), 50);
    let ids: Vec<&str> = corpus.films().iter().map(|f| f.id.as_str()).collect();
    let mut sorted = ids.clone();
    sorted.sort();
    assert_eq!(ids, sorted);
    let analytic: usize = corpus.films().iter().map(|f| f.lines.len().saturating_sub(1)).sum();
    assert_eq!(corpus.pair_count(), analytic);
    assert_eq!(corpus.pairs().count(), analytic);
    assert!(corpus.films().iter().flat_map(|f| &f.lines).all(|l| !l.is_empty()));
}

#[test]
fn cleaned_lines_match_raw_count() {
    // every raw line that survives cleaning is stored
    for path in toy_files() {
        for raw in read_subtitle_file(&path).unwrap() {
            let kept = raw.lines.iter().filter_map(|l| improv_core::clean_line(l)).count();
            let film = improv_core::corpus::Film::from_raw(&raw);
            assert_eq!(film.lines.len(), kept);
        }
    }
}

#[test]
fn ingestion_is_deterministic_across_paths() {
    let files = toy_files();
    let seq = ingest_with(Exec::Sequential, &files).unwrap();
    let par = ingest_with(Exec::Parallel, &files).unwrap();
    assert_eq!(seq.to_text(), par.to_text());
    let mut reversed = files.clone();
    reversed.reverse();
    assert_eq!(ingest(&reversed).unwrap().to_text(), seq.to_text());
    assert_eq!(build_vocab(&seq, 5000).unwrap().to_text(), build_vocab(&par, 5000).unwrap().to_text());
}

#[test]
fn serialized_corpus_round_trips() {
    let corpus = ingest(&toy_files()).unwrap();
    let text = corpus.to_text();
    assert_eq!(Corpus::from_text(&text).unwrap(), corpus);
}

#[test]
fn format_error_names_file_and_line() {
    let dir = tempfile::tempdir().unwrap();
    let good = dir.path().join("a.txt");
    let bad = dir.path().join("b.txt");
    std::fs::write(&good, "# film: x\nhello\nthere\n").unwrap();
    std::fs::write(&bad, "# film: y\nfine\n\n#film:\n").unwrap();
    match ingest(&[good, bad.clone()]) {
        Err(CorpusError::Format { source_name, line, .. }) => {
            assert_eq!(line, 4);
            assert!(source_name.ends_with("b.txt"));
        }
        other => panic!("expected format error, got {other:?}"),
    }
}
