//! Subtitle corpus ingestion.
//!
//! Corpus files are UTF-8 text. A film starts with a `# film: <film_id>`
//! header; every following non-blank line is one utterance, in order.
//! Lines are cleaned with [`clean_line`], tokenized with [`tokenize`], and
//! adjacent lines of one film form (context, response) pairs.

mod clean;
mod tokenize;
mod vocab;

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::par::{self, Exec};

pub use clean::clean_line;
pub use tokenize::{detokenize, tokenize};
pub use vocab::{build_vocab, token_frequencies, Vocabulary, UNK};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read corpus file {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{source_name}:{line}: {message}")]
    Format {
        source_name: String,
        line: usize,
        message: String,
    },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

impl CorpusError {
    pub(crate) fn format(source_name: &str, line: usize, message: &str) -> Self {
        CorpusError::Format {
            source_name: source_name.to_string(),
            line,
            message: message.to_string(),
        }
    }
}

/// One film as read from disk, before cleaning.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawSubtitleFile {
    pub film_id: String,
    pub lines: Vec<String>,
}

/// A cleaned, tokenized film. No stored line is empty.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Film {
    pub id: String,
    pub lines: Vec<Vec<String>>,
}

impl Film {
    pub fn from_raw(raw: &RawSubtitleFile) -> Self {
        let lines = raw
            .lines
            .iter()
            .filter_map(|l| clean_line(l))
            .map(|l| tokenize(&l))
            .filter(|t| !t.is_empty())
            .collect();
        Film { id: raw.film_id.clone(), lines }
    }
}

/// Cleaned dialog corpus. Films are ordered by id (stable for duplicates);
/// pairs are the adjacent lines within each film.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Corpus {
    films: Vec<Film>,
}

impl Corpus {
    pub fn from_films(films: Vec<Film>) -> Self {
        let mut films: Vec<Film> = films
            .into_iter()
            .map(|mut f| {
                f.lines.retain(|l| !l.is_empty());
                f
            })
            .collect();
        films.sort_by(|a, b| a.id.cmp(&b.id));
        Corpus { films }
    }

    pub fn from_raw(raw: &[RawSubtitleFile]) -> Self {
        Self::from_films(raw.iter().map(Film::from_raw).collect())
    }

    pub fn films(&self) -> &[Film] {
        &self.films
    }

    pub fn is_empty(&self) -> bool {
        self.films.iter().all(|f| f.lines.is_empty())
    }

    /// (context, response) pairs from adjacent lines, never crossing films.
    pub fn pairs(&self) -> impl Iterator<Item = (&[String], &[String])> + '_ {
        self.films
            .iter()
            .flat_map(|f| f.lines.windows(2).map(|w| (w[0].as_slice(), w[1].as_slice())))
    }

    pub fn pair_count(&self) -> usize {
        self.films.iter().map(|f| f.lines.len().saturating_sub(1)).sum()
    }

    /// Response side of every pair.
    pub fn responses(&self) -> impl Iterator<Item = &[String]> + '_ {
        self.pairs().map(|(_, r)| r)
    }

    pub fn token_count(&self) -> usize {
        self.films.iter().flat_map(|f| &f.lines).map(Vec::len).sum()
    }

    /// Line-oriented serialization: a `#corpus v1 films=N pairs=M` header,
    /// then each film as `# film: <id>` followed by one space-joined token
    /// line per utterance.
    pub fn to_text(&self) -> String {
        let mut out = format!("#corpus v1 films={} pairs={}\n", self.films.len(), self.pair_count());
        for film in &self.films {
            out.push_str(&format!("# film: {}\n", film.id));
            for line in &film.lines {
                out.push_str(&line.join(" "));
                out.push('\n');
            }
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, CorpusError> {
        let (header, body) = text.split_once('\n').unwrap_or((text, ""));
        if !header.starts_with("#corpus v1") {
            return Err(CorpusError::format("<corpus>", 1, "missing #corpus v1 header"));
        }
        let raw = parse_films("<corpus>", body, 1)?;
        let films = raw
            .into_iter()
            .map(|r| Film {
                id: r.film_id,
                lines: r
                    .lines
                    .iter()
                    .map(|l| l.split(' ').map(str::to_string).collect())
                    .collect(),
            })
            .collect();
        Ok(Corpus::from_films(films))
    }
}

/// Parse the corpus file format into raw films. `line_offset` shifts the
/// reported line numbers.
pub fn parse_films(
    source_name: &str,
    text: &str,
    line_offset: usize,
) -> Result<Vec<RawSubtitleFile>, CorpusError> {
    let mut films: Vec<RawSubtitleFile> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1 + line_offset;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let header_like = trimmed
            .strip_prefix('#')
            .is_some_and(|r| r.trim_start().starts_with("film"));
        if header_like {
            let id = trimmed
                .strip_prefix("# film:")
                .map(str::trim)
                .filter(|id| !id.is_empty())
                .ok_or_else(|| CorpusError::format(source_name, lineno, "malformed film header"))?;
            films.push(RawSubtitleFile { film_id: id.to_string(), lines: Vec::new() });
            continue;
        }
        match films.last_mut() {
            Some(film) => film.lines.push(trimmed.to_string()),
            None => {
                return Err(CorpusError::format(
                    source_name,
                    lineno,
                    "utterance before the first `# film:` header",
                ))
            }
        }
    }
    Ok(films)
}

pub fn read_subtitle_file(path: &Path) -> Result<Vec<RawSubtitleFile>, CorpusError> {
    let text = std::fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_films(&path.display().to_string(), &text, 0)
}

/// Read, clean and tokenize corpus files into one [`Corpus`].
pub fn ingest<P: AsRef<Path> + Sync>(paths: &[P]) -> Result<Corpus, CorpusError> {
    ingest_with(Exec::default(), paths)
}

pub fn ingest_with<P: AsRef<Path> + Sync>(exec: Exec, paths: &[P]) -> Result<Corpus, CorpusError> {
    let per_file = par::map(exec, paths, |p| {
        read_subtitle_file(p.as_ref()).map(|raw| raw.iter().map(Film::from_raw).collect::<Vec<_>>())
    });
    let mut films = Vec::new();
    for result in per_file {
        films.extend(result?);
    }
    Ok(Corpus::from_films(films))
}

/// Corpus files in a directory (`*.txt`), sorted by name.
pub fn corpus_files(dir: &Path) -> Result<Vec<PathBuf>, CorpusError> {
    let entries = std::fs::read_dir(dir).map_err(|source| CorpusError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "txt"))
        .collect();
    paths.sort();
    Ok(paths)
}
