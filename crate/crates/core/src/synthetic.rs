//! Seeded synthetic datasets for tests, examples and demos.
//!
//! Captions are strings of words `tok0 … tok{vocab-1}`, which pass through
//! normalization unchanged; features are standard normal.

use std::collections::HashSet;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::dataio::{DatasetRecord, FeatureTable};
use crate::textpipe::{build_vocab, normalize, Vocabulary};
use crate::trainer::{CaptionMode, TrainingData};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticSpec {
    pub records: usize,
    pub vocab: usize,
    pub feature_dim: usize,
    pub caption_len: usize,
    pub captions_per_record: usize,
    pub seq_len: usize,
}

pub fn word(i: usize) -> String {
    format!("tok{i}")
}

/// Records, their feature table, and the vocabulary built from all captions.
/// Every caption is distinct, and every word is used at least once when
/// there are enough caption slots.
pub fn synthetic_dataset(spec: &SyntheticSpec, seed: u64) -> (Vec<DatasetRecord>, FeatureTable, Vocabulary) {
    assert!(spec.records > 0 && spec.vocab > 0 && spec.feature_dim > 0);
    assert!(spec.caption_len > 0 && spec.captions_per_record > 0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut features = FeatureTable::new(spec.feature_dim).expect("positive dim");
    let mut seen = HashSet::new();
    let mut slot = 0usize;
    let mut records = Vec::with_capacity(spec.records);
    for r in 0..spec.records {
        let id = format!("img{r:05}");
        let v: Vec<f32> = (0..spec.feature_dim).map(|_| rng.sample(StandardNormal)).collect();
        features.insert(id.clone(), v).expect("fresh id");
        let captions = (0..spec.captions_per_record)
            .map(|_| loop {
                let words: Vec<usize> = (0..spec.caption_len)
                    // the first pass over the slots covers the whole vocabulary
                    .map(|k| if slot + k < spec.vocab { slot + k } else { rng.gen_range(0..spec.vocab) })
                    .collect();
                let caption = words.iter().map(|&w| word(w)).collect::<Vec<_>>().join(" ");
                if seen.insert(caption.clone()) || seen.len() >= spec.vocab.saturating_pow(spec.caption_len as u32) {
                    slot += spec.caption_len;
                    break caption;
                }
            })
            .collect();
        records.push(DatasetRecord {
            id: format!("rec{r:05}"),
            feature_ref: id,
            captions,
        });
    }
    let corpus: Vec<Vec<String>> = records.iter().flat_map(|r| r.captions.iter().map(|c| normalize(c))).collect();
    let vocab = build_vocab(&corpus, 1).expect("min_freq 1");
    (records, features, vocab)
}

/// A synthetic dataset already encoded for training.
pub fn synthetic_training_data(spec: &SyntheticSpec, seed: u64) -> TrainingData {
    let (records, features, vocab) = synthetic_dataset(spec, seed);
    TrainingData::prepare(&records, &features, &vocab, spec.seq_len, CaptionMode::Individual).expect("consistent synthetic data")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn words_survive_normalization() {
        for i in [0, 7, 49, 123] {
            assert_eq!(normalize(&word(i)), vec![word(i)]);
        }
    }

    #[test]
    fn covers_vocabulary_and_is_seeded() {
        let spec = SyntheticSpec {
            records: 64,
            vocab: 50,
            feature_dim: 32,
            caption_len: 4,
            captions_per_record: 1,
            seq_len: 6,
        };
        let (recs, feats, vocab) = synthetic_dataset(&spec, 1);
        assert_eq!(vocab.len(), 50);
        assert_eq!(feats.len(), 64);
        let distinct: HashSet<_> = recs.iter().map(|r| &r.captions[0]).collect();
        assert_eq!(distinct.len(), 64);
        assert_eq!(synthetic_dataset(&spec, 1).0, recs);
        assert_ne!(synthetic_dataset(&spec, 2).0, recs);
    }
}
