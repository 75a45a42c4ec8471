//! Document ingestion: tokenization, n-gram extraction, the frequency-ordered
//! vocabulary and the bit-packed per-document presence vectors.

mod index;
mod persist;

use std::collections::BTreeSet;
use std::fmt;
use std::io::BufRead;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use index::{build_index, CorpusIndex, DocBitVector, IndexOptions, VocabularyIndex};
pub use persist::{read_index, write_index, PersistedIndex, FORMAT_VERSION, MAGIC};

/// Longest n-gram kept in the vocabulary.
pub const MAX_NGRAM: usize = 3;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("duplicate document id `{0}`")]
    DuplicateDocumentId(String),
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("document `{0}` has empty text")]
    EmptyText(String),
    #[error("unknown document id `{0}`")]
    UnknownDocument(String),
    #[error("line {line}: {source}")]
    Json {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("malformed index file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Relevant,
    Irrelevant,
    #[default]
    Unlabeled,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Source {
    #[default]
    SeedCorpus,
    ProviderFetch,
}

/// A raw text record. `fetched_at` is UTC seconds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub text: String,
    #[serde(default)]
    pub label: Label,
    #[serde(default)]
    pub source: Source,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fetched_at: Option<i64>,
}

impl Document {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        Document {
            id: id.into(),
            text: text.into(),
            label: Label::Unlabeled,
            source: Source::SeedCorpus,
            fetched_at: None,
        }
    }

    pub fn with_label(mut self, label: Label) -> Self {
        self.label = label;
        self
    }

    pub fn validate(&self) -> Result<(), CorpusError> {
        if self.text.trim().is_empty() {
            return Err(CorpusError::EmptyText(self.id.clone()));
        }
        Ok(())
    }

    /// The document's n-gram set, i.e. the phrases a query can test for.
    pub fn phrases(&self) -> BTreeSet<Phrase> {
        extract_ngrams(&tokenize(&self.text))
    }
}

/// Reads a JSON-lines corpus. Blank lines are skipped.
pub fn read_jsonl(path: impl AsRef<Path>) -> Result<Vec<Document>, CorpusError> {
    let file = std::fs::File::open(path)?;
    parse_jsonl(std::io::BufReader::new(file))
}

pub fn parse_jsonl(reader: impl BufRead) -> Result<Vec<Document>, CorpusError> {
    let mut docs = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let doc: Document =
            serde_json::from_str(&line).map_err(|source| CorpusError::Json { line: i + 1, source })?;
        doc.validate()?;
        docs.push(doc);
    }
    Ok(docs)
}

pub fn write_jsonl(path: impl AsRef<Path>, docs: &[Document]) -> Result<(), CorpusError> {
    use std::io::Write;
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    for doc in docs {
        serde_json::to_writer(&mut out, doc).map_err(std::io::Error::from)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

/// An n-gram of 1 to 3 lowercase tokens.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Phrase(Vec<String>);

impl Phrase {
    /// Returns `None` unless there are 1..=3 tokens, none containing whitespace.
    pub fn new(tokens: Vec<String>) -> Option<Self> {
        let ok = (1..=MAX_NGRAM).contains(&tokens.len())
            && tokens.iter().all(|t| !t.is_empty() && !t.chars().any(char::is_whitespace));
        ok.then_some(Phrase(tokens))
    }

    /// Tokenizes `text` and wraps the result if it is a valid phrase.
    pub fn parse(text: &str) -> Option<Self> {
        Phrase::new(tokenize(text))
    }

    pub fn tokens(&self) -> &[String] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn joined(&self) -> String {
        self.0.join(" ")
    }
}

impl fmt::Display for Phrase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, t) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            f.write_str(t)?;
        }
        Ok(())
    }
}

/// Splits on whitespace and lowercases. Within each token only alphanumerics
/// survive, plus a leading `#`/`@` and hyphens that sit between two
/// alphanumerics (`i-264`). Tokens left without any alphanumeric are dropped.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace().filter_map(clean_token).collect()
}

fn clean_token(raw: &str) -> Option<String> {
    let chars: Vec<char> = raw.chars().collect();
    let mut out = String::with_capacity(raw.len());
    let mut has_alnum = false;
    for (i, &c) in chars.iter().enumerate() {
        if c.is_alphanumeric() {
            out.extend(c.to_lowercase());
            has_alnum = true;
        } else if (c == '#' || c == '@') && out.is_empty() {
            out.push(c);
        } else if c == '-'
            && i > 0
            && chars[i - 1].is_alphanumeric()
            && chars.get(i + 1).is_some_and(|n| n.is_alphanumeric())
        {
            out.push(c);
        }
    }
    has_alnum.then_some(out)
}

/// All contiguous 1-, 2- and 3-grams, deduplicated.
pub fn extract_ngrams(tokens: &[String]) -> BTreeSet<Phrase> {
    let mut set = BTreeSet::new();
    for n in 1..=MAX_NGRAM {
        for window in tokens.windows(n) {
            set.insert(Phrase(window.to_vec()));
        }
    }
    set
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(s: &str) -> Phrase {
        Phrase(s.split(' ').map(String::from).collect())
    }

    #[test]
    fn tokenize_highway_report() {
        assert_eq!(
            tokenize("Crash on I-264 at exit 103"),
            vec!["crash", "on", "i-264", "at", "exit", "103"]
        );
    }

    #[test]
    fn tokenize_keeps_hashtags_and_mentions() {
        assert_eq!(tokenize("#accident on bardstown"), vec!["#accident", "on", "bardstown"]);
        assert_eq!(tokenize("@LMPD: (#BlackIce!)"), vec!["@lmpd", "#blackice"]);
    }

    #[test]
    fn tokenize_strips_punctuation() {
        assert_eq!(tokenize(""), Vec::<String>::new());
        assert_eq!(tokenize("  ... -- !! "), Vec::<String>::new());
        assert_eq!(tokenize("chili's, rose st."), vec!["chilis", "rose", "st"]);
        assert_eq!(tokenize("-ramp- a--b mm23.7"), vec!["ramp", "ab", "mm237"]);
        assert_eq!(tokenize("a#b x@y"), vec!["ab", "xy"]);
    }

    #[test]
    fn ngrams_of_three_tokens() {
        let toks: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
        let got = extract_ngrams(&toks);
        let want: BTreeSet<Phrase> = ["a", "b", "c", "a b", "b c", "a b c"].iter().map(|s| p(s)).collect();
        assert_eq!(got, want);
        assert_eq!(extract_ngrams(&toks[..1]), [p("a")].into_iter().collect());
        assert!(extract_ngrams(&[]).is_empty());
    }

    #[test]
    fn ngrams_collapse_duplicates() {
        let toks = tokenize("a a a a");
        let got: Vec<String> = extract_ngrams(&toks).iter().map(Phrase::joined).collect();
        assert_eq!(got, vec!["a", "a a", "a a a"]);
    }

    #[test]
    fn phrase_bounds() {
        assert!(Phrase::new(vec![]).is_none());
        assert!(Phrase::new(vec!["a b".into()]).is_none());
        assert!(Phrase::parse("a b c d").is_none());
        assert_eq!(Phrase::parse("Black Ice").unwrap().joined(), "black ice");
    }

    #[test]
    fn jsonl_defaults_and_errors() {
        let src = "{\"id\":\"1\",\"text\":\"crash\"}\n\n{\"id\":\"2\",\"text\":\"x\",\"label\":\"relevant\",\"source\":\"provider-fetch\",\"fetched_at\":5}\n";
        let docs = parse_jsonl(src.as_bytes()).unwrap();
        assert_eq!(docs[0].label, Label::Unlabeled);
        assert_eq!(docs[0].source, Source::SeedCorpus);
        assert_eq!(docs[1].label, Label::Relevant);
        assert_eq!(docs[1].source, Source::ProviderFetch);
        assert_eq!(docs[1].fetched_at, Some(5));

        let err = parse_jsonl("{\"id\":\"1\",\"text\":\"  \"}".as_bytes()).unwrap_err();
        assert!(matches!(err, CorpusError::EmptyText(_)));
        let err = parse_jsonl("{\"id\":1}".as_bytes()).unwrap_err();
        assert!(matches!(err, CorpusError::Json { line: 1, .. }));
    }
}
