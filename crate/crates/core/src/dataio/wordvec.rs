use std::collections::HashMap;
use std::path::Path;

use rand::Rng;

use crate::encoders::INIT_SCALE;
use crate::error::{Error, Result};
use crate::numcore::Tensor;
use crate::textpipe::Vocabulary;

/// Pretrained vectors in the space-separated text format
/// (`token v1 v2 ... vdim` per line).
#[derive(Debug, Clone, PartialEq)]
pub struct WordVectorTable {
    dim: usize,
    vectors: HashMap<String, Vec<f64>>,
}

impl WordVectorTable {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn get(&self, token: &str) -> Option<&[f64]> {
        self.vectors.get(token).map(Vec::as_slice)
    }

    /// Parses the whole file. Only tokens accepted by `keep` are stored, but
    /// every line is validated. The first occurrence of a token wins.
    pub fn parse(text: &str, path: &Path, keep: impl Fn(&str) -> bool) -> Result<Self> {
        let mut dim = None;
        let mut vectors = HashMap::new();
        for (n, line) in text.lines().enumerate() {
            let lineno = n + 1;
            let mut fields = line.split(' ').filter(|f| !f.is_empty());
            let Some(token) = fields.next() else { continue };
            let values = fields
                .map(|f| {
                    f.parse::<f64>()
                        .ok()
                        .filter(|v| v.is_finite())
                        .ok_or_else(|| Error::format(path, lineno, format!("unparseable value `{f}`")))
                })
                .collect::<Result<Vec<f64>>>()?;
            match dim {
                None if values.is_empty() => {
                    return Err(Error::format(path, lineno, "vector has no components"));
                }
                None => dim = Some(values.len()),
                Some(d) if d != values.len() => {
                    return Err(Error::format(
                        path,
                        lineno,
                        format!("vector has {} components, earlier lines have {d}", values.len()),
                    ));
                }
                Some(_) => {}
            }
            if keep(token) && !vectors.contains_key(token) {
                vectors.insert(token.to_owned(), values);
            }
        }
        let dim = dim.ok_or_else(|| Error::format(path, 0, "no vectors in file"))?;
        Ok(WordVectorTable { dim, vectors })
    }

    pub fn read(path: impl AsRef<Path>, keep: impl Fn(&str) -> bool) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path, keep)
    }

    /// `(d + 1) × dim` embedding table for `vocab`: row 0 zero, known tokens
    /// copied, the rest uniform in `[-0.08, 0.08]` drawn from `rng` in index
    /// order. Also returns the fraction of vocabulary tokens found.
    pub fn embedding_matrix(&self, vocab: &Vocabulary, rng: &mut impl Rng) -> (Tensor, f64) {
        let mut m = Tensor::zeros(&[vocab.len() + 1, self.dim]);
        let mut found = 0usize;
        for (token, index, _) in vocab.entries() {
            let row = m.row_mut(index);
            match self.get(token) {
                Some(v) => {
                    row.copy_from_slice(v);
                    found += 1;
                }
                None => row.iter_mut().for_each(|x| *x = rng.gen_range(-INIT_SCALE..=INIT_SCALE)),
            }
        }
        let coverage = if vocab.is_empty() {
            0.0
        } else {
            found as f64 / vocab.len() as f64
        };
        (m, coverage)
    }
}

/// Reads a word-vector file and builds the embedding table for `vocab`.
pub fn load_word_vectors(path: impl AsRef<Path>, vocab: &Vocabulary, rng: &mut impl Rng) -> Result<(Tensor, f64)> {
    let table = WordVectorTable::read(path, |t| vocab.index_of(t).is_some())?;
    Ok(table.embedding_matrix(vocab, rng))
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::textpipe::build_vocab;

    fn vocab() -> Vocabulary {
        let corpus = vec![vec!["dog".to_string(), "dog".into(), "cat".into(), "emu".into()]];
        build_vocab(&corpus, 1).unwrap()
    }

    #[test]
    fn copies_known_rows_and_fills_the_rest() {
        let text = "dog 0.5 -1 2\nzebra 1 1 1\ncat 3 2 1\n";
        let t = WordVectorTable::parse(text, Path::new("w.txt"), |_| true).unwrap();
        let v = vocab();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (m, coverage) = t.embedding_matrix(&v, &mut rng);
        assert_eq!(m.shape(), &[4, 3]);
        assert_eq!(m.row(0), &[0.0; 3]);
        assert_eq!(m.row(v.index_of("dog").unwrap()), &[0.5, -1.0, 2.0]);
        assert_eq!(m.row(v.index_of("cat").unwrap()), &[3.0, 2.0, 1.0]);
        let emu = m.row(v.index_of("emu").unwrap());
        assert!(emu.iter().all(|x| x.abs() <= INIT_SCALE));
        assert!((coverage - 2.0 / 3.0).abs() < 1e-15);

        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(t.embedding_matrix(&v, &mut rng).0, m);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        assert_ne!(t.embedding_matrix(&v, &mut rng).0, m);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let err = WordVectorTable::parse("a 1 2\nb 1 2 3\n", Path::new("w.txt"), |_| true)
            .unwrap_err()
            .to_string();
        assert!(err.contains("w.txt:2"), "{err}");
        let err = WordVectorTable::parse("a 1 2\nb 1 x\n", Path::new("w.txt"), |_| true)
            .unwrap_err()
            .to_string();
        assert!(err.contains("w.txt:2") && err.contains("`x`"), "{err}");
        assert!(WordVectorTable::parse("", Path::new("w.txt"), |_| true).is_err());
    }
}
