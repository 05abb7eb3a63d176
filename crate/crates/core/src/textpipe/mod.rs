//! Caption normalization, dictionary building, and fixed-length encoding.

mod porter;

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;
use std::path::Path;
use std::sync::OnceLock;

use crate::error::{Error, Result};

pub use porter::stem;

/// Default fixed sequence length.
pub const DEFAULT_SEQ_LEN: usize = 70;

/// Default minimum corpus frequency for a dictionary entry.
pub const DEFAULT_MIN_FREQ: u64 = 5;

const STOPWORDS_V1: &str = include_str!("../../data/stopwords_en_v1.txt");

/// The pinned English stopword set.
pub fn stopwords() -> &'static HashSet<&'static str> {
    static SET: OnceLock<HashSet<&'static str>> = OnceLock::new();
    SET.get_or_init(|| {
        STOPWORDS_V1
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .collect()
    })
}

/// Lowercase, strip everything but ASCII letters/digits/whitespace, split on
/// whitespace, drop stopwords, and Porter-stem.
///
/// Stems that collide with a stopword (`ones → on`) are dropped as well.
pub fn normalize(text: &str) -> Vec<String> {
    let cleaned: String = text
        .chars()
        .filter(|c| c.is_ascii_alphanumeric() || c.is_ascii_whitespace())
        .map(|c| c.to_ascii_lowercase())
        .collect();
    let stop = stopwords();
    cleaned
        .split_ascii_whitespace()
        .filter(|w| !stop.contains(w))
        .map(stem)
        .filter(|s| !stop.contains(s.as_str()))
        .collect()
}

/// [`normalize`] for raw bytes; invalid UTF-8 sequences are dropped.
pub fn normalize_bytes(bytes: &[u8]) -> Vec<String> {
    normalize(&String::from_utf8_lossy(bytes))
}

pub fn concat_captions<S: AsRef<str>>(captions: &[S]) -> String {
    captions.iter().map(AsRef::as_ref).collect::<Vec<_>>().join(" ")
}

/// Stemmed-token dictionary. Index 0 is reserved for padding; tokens occupy
/// `1..=len()`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Vocabulary {
    index: HashMap<String, usize>,
    tokens: Vec<String>,
    freq: Vec<u64>,
}

impl Vocabulary {
    /// Number of tokens, `d`.
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn index_of(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, index: usize) -> Option<&str> {
        index.checked_sub(1).and_then(|i| self.tokens.get(i)).map(String::as_str)
    }

    pub fn frequency(&self, index: usize) -> Option<u64> {
        index.checked_sub(1).and_then(|i| self.freq.get(i)).copied()
    }

    /// `(token, index, frequency)` in index order.
    pub fn entries(&self) -> impl Iterator<Item = (&str, usize, u64)> {
        self.tokens
            .iter()
            .zip(&self.freq)
            .enumerate()
            .map(|(i, (t, &f))| (t.as_str(), i + 1, f))
    }

    fn push(&mut self, token: String, freq: u64) {
        self.index.insert(token.clone(), self.tokens.len() + 1);
        self.tokens.push(token);
        self.freq.push(freq);
    }

    pub fn to_tsv(&self) -> String {
        let mut out = format!("#vocab v1 d={}\n", self.len());
        for (t, i, f) in self.entries() {
            writeln!(out, "{t}\t{i}\t{f}").unwrap();
        }
        out
    }

    pub fn write_tsv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_tsv()).map_err(|e| Error::io(path, e))
    }

    pub fn read_tsv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_tsv(&text, path)
    }

    pub fn parse_tsv(text: &str, path: &Path) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| Error::format(path, 1, "empty vocabulary file"))?;
        let d: usize = header
            .strip_prefix("#vocab v1 d=")
            .and_then(|d| d.trim().parse().ok())
            .ok_or_else(|| Error::format(path, 1, format!("bad header `{header}`")))?;
        let mut vocab = Vocabulary::default();
        for (n, line) in lines.enumerate() {
            let lineno = n + 2;
            let fields: Vec<&str> = line.split('\t').collect();
            let [token, index, freq] = fields[..] else {
                return Err(Error::format(path, lineno, "expected token<TAB>index<TAB>frequency"));
            };
            let index: usize = index
                .parse()
                .map_err(|_| Error::format(path, lineno, format!("bad index `{index}`")))?;
            let freq: u64 = freq
                .parse()
                .map_err(|_| Error::format(path, lineno, format!("bad frequency `{freq}`")))?;
            if index != vocab.len() + 1 {
                return Err(Error::format(
                    path,
                    lineno,
                    format!("index {index} out of sequence, expected {}", vocab.len() + 1),
                ));
            }
            if token.is_empty() || vocab.index.contains_key(token) {
                return Err(Error::format(path, lineno, format!("empty or duplicate token `{token}`")));
            }
            vocab.push(token.to_owned(), freq);
        }
        if vocab.len() != d {
            return Err(Error::format(path, 1, format!("header says d={d}, found {} entries", vocab.len())));
        }
        Ok(vocab)
    }
}

/// Counts tokens and keeps those with frequency `>= min_freq`, indexed by
/// descending frequency, ties broken lexicographically.
pub fn build_vocab<I, T>(corpus: I, min_freq: u64) -> Result<Vocabulary>
where
    I: IntoIterator<Item = T>,
    T: AsRef<[String]>,
{
    if min_freq == 0 {
        return Err(Error::Invalid("min_freq must be at least 1".into()));
    }
    let mut counts: HashMap<String, u64> = HashMap::new();
    for doc in corpus {
        for tok in doc.as_ref() {
            *counts.entry(tok.clone()).or_default() += 1;
        }
    }
    let mut kept: Vec<(String, u64)> = counts.into_iter().filter(|&(_, c)| c >= min_freq).collect();
    kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    let mut vocab = Vocabulary::default();
    for (tok, c) in kept {
        vocab.push(tok, c);
    }
    Ok(vocab)
}

/// A token sequence padded or truncated to a fixed length.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedText {
    indices: Vec<usize>,
    true_length: usize,
}

impl EncodedText {
    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn true_length(&self) -> usize {
        self.true_length
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Builds from raw indices, right-padding with zeros to `seq_len`.
    pub fn from_indices(indices: &[usize], seq_len: usize) -> Result<Self> {
        if seq_len == 0 {
            return Err(Error::Invalid("sequence length must be at least 1".into()));
        }
        if indices.contains(&0) {
            return Err(Error::Invalid("index 0 is reserved for padding".into()));
        }
        let true_length = indices.len().min(seq_len);
        let mut out = indices[..true_length].to_vec();
        out.resize(seq_len, 0);
        Ok(EncodedText {
            indices: out,
            true_length,
        })
    }
}

/// Maps tokens to dictionary indices, dropping out-of-vocabulary tokens,
/// then truncates or zero-pads to `seq_len`.
pub fn encode<S: AsRef<str>>(tokens: &[S], vocab: &Vocabulary, seq_len: usize) -> Result<EncodedText> {
    let known: Vec<usize> = tokens.iter().filter_map(|t| vocab.index_of(t.as_ref())).collect();
    EncodedText::from_indices(&known, seq_len)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(words: &[&str]) -> Vec<String> {
        words.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn normalize_examples() {
        assert_eq!(normalize("Running dogs!"), vec!["run", "dog"]);
        assert!(normalize("").is_empty());
        assert!(normalize("the a an").is_empty());
    }

    #[test]
    fn normalize_strips_special_characters_and_case() {
        assert_eq!(normalize("#Sunset @ the BEACH http://t.co/x1"), vec!["sunset", "beach", "httptcox1"]);
        assert_eq!(normalize("café"), vec!["caf"]);
    }

    #[test]
    fn stem_colliding_with_stopword_is_dropped() {
        assert_eq!(stem("ones"), "on");
        assert!(normalize("ones").is_empty());
    }

    #[test]
    fn invalid_utf8_dropped() {
        assert_eq!(normalize_bytes(b"dog\xff\xfes"), vec!["dog"]);
    }

    #[test]
    fn concat_examples() {
        assert_eq!(concat_captions(&["a cat", "on mat"]), "a cat on mat");
        assert_eq!(concat_captions(&[""]), "");
        assert_eq!(concat_captions(&["x"]), "x");
    }

    #[test]
    fn build_vocab_examples() {
        let corpus = vec![toks(&["a", "b", "b"])];
        let v = build_vocab(&corpus, 1).unwrap();
        assert_eq!(v.index_of("b"), Some(1));
        assert_eq!(v.index_of("a"), Some(2));
        let v = build_vocab(&corpus, 2).unwrap();
        assert_eq!(v.len(), 1);
        assert_eq!(v.index_of("b"), Some(1));
        let empty: Vec<Vec<String>> = Vec::new();
        assert_eq!(build_vocab(&empty, 1).unwrap().len(), 0);
        assert!(build_vocab(&corpus, 0).is_err());
    }

    #[test]
    fn ties_broken_lexicographically() {
        let corpus = vec![toks(&["zeta", "alpha", "mid", "mid"])];
        let v = build_vocab(&corpus, 1).unwrap();
        let order: Vec<&str> = v.entries().map(|(t, _, _)| t).collect();
        assert_eq!(order, ["mid", "alpha", "zeta"]);
    }

    #[test]
    fn encode_examples() {
        let words: Vec<String> = (0..80).map(|i| format!("w{i}")).collect();
        let vocab = build_vocab(std::slice::from_ref(&words), 1).unwrap();

        let e = encode::<String>(&[], &vocab, 70).unwrap();
        assert_eq!(e.len(), 70);
        assert_eq!(e.true_length(), 0);
        assert!(e.indices().iter().all(|&i| i == 0));

        let e = encode(&words[..3], &vocab, 70).unwrap();
        assert_eq!(e.true_length(), 3);
        let want: Vec<usize> = words[..3].iter().map(|w| vocab.index_of(w).unwrap()).collect();
        assert_eq!(&e.indices()[..3], &want[..]);
        assert!(e.indices()[3..].iter().all(|&i| i == 0));

        let e = encode(&words[..75], &vocab, 70).unwrap();
        assert_eq!(e.true_length(), 70);
        let want: Vec<usize> = words[..70].iter().map(|w| vocab.index_of(w).unwrap()).collect();
        assert_eq!(e.indices(), &want[..]);
    }

    #[test]
    fn out_of_vocabulary_dropped_before_truncation() {
        let vocab = build_vocab(&[toks(&["x", "y"])], 1).unwrap();
        let e = encode(&toks(&["q", "q", "x", "q", "y"]), &vocab, 2).unwrap();
        assert_eq!(e.true_length(), 2);
        assert_eq!(e.indices(), &[vocab.index_of("x").unwrap(), vocab.index_of("y").unwrap()]);
    }

    #[test]
    fn vocab_tsv_round_trip_and_errors() {
        let vocab = build_vocab(&[toks(&["a", "b", "b", "c"])], 1).unwrap();
        let text = vocab.to_tsv();
        assert!(text.starts_with("#vocab v1 d=3\n"));
        let back = Vocabulary::parse_tsv(&text, Path::new("v.tsv")).unwrap();
        assert_eq!(back, vocab);

        let bad = "#vocab v1 d=2\nb\t1\t2\na\t3\t1\n";
        let err = Vocabulary::parse_tsv(bad, Path::new("v.tsv")).unwrap_err().to_string();
        assert!(err.contains("v.tsv:3"), "{err}");
        assert!(Vocabulary::parse_tsv("#vocab v1 d=5\n", Path::new("v.tsv")).is_err());
    }
}
