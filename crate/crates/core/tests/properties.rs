use std::path::Path;

use proptest::collection::vec;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use xmodal::dataio::FeatureTable;
use xmodal::encoders::{encode_image, encode_text, ImageActivation, ModelDims, ModelParams};
use xmodal::evaluator::{median_rank, rank_from_scores, recall_at_k, RankOutcome};
use xmodal::numcore::Tensor;
use xmodal::objective::{batch_loss_value, LossConfig, NegativeMode};
use xmodal::textpipe::{build_vocab, encode, normalize, EncodedText, Vocabulary};
use xmodal::trainer::{adam_step, schedule_update, AdamConfig, AdamState, ScheduleConfig, ScheduleState};

fn matrix(rows: usize, cols: usize, lo: f64, hi: f64) -> impl Strategy<Value = Tensor> {
    vec(lo..hi, rows * cols).prop_map(move |d| Tensor::matrix(rows, cols, d).unwrap())
}

fn small_params(seed: u64) -> ModelParams {
    let dims = ModelDims {
        vocab_size: 6,
        embed_dim: 3,
        joint_dim: 4,
        feature_dim: 5,
    };
    ModelParams::init(dims, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
}

fn outcomes(ranks: &[usize]) -> Vec<RankOutcome> {
    ranks.iter().map(|&best_rank| RankOutcome { best_rank }).collect()
}

proptest! {
    #[test]
    fn feature_file_round_trip(
        dim in 1usize..6,
        entries in vec(("[a-z0-9é]{0,12}", vec(-1e6f32..1e6, 5)), 0..8),
    ) {
        let mut table = FeatureTable::new(dim).unwrap();
        for (id, v) in entries {
            let _ = table.insert(id, v[..dim].to_vec());
        }
        let bytes = table.to_bytes();
        let back = FeatureTable::from_bytes(&bytes, Path::new("t")).unwrap();
        prop_assert_eq!(&back, &table);
        prop_assert_eq!(back.to_bytes(), bytes);
    }

    #[test]
    fn truncated_feature_files_rejected(cut in 1usize..40) {
        let mut table = FeatureTable::new(3).unwrap();
        table.insert("a", vec![1.0, 2.0, 3.0]).unwrap();
        table.insert("bb", vec![4.0, 5.0, 6.0]).unwrap();
        let bytes = table.to_bytes();
        let cut = cut.min(bytes.len());
        prop_assert!(FeatureTable::from_bytes(&bytes[..bytes.len() - cut], Path::new("t")).is_err());
    }

    #[test]
    fn encode_has_fixed_length(tokens in vec("[a-e]{1,2}", 0..120), seq_len in 1usize..90) {
        let corpus = vec![vec!["a".to_string(), "b".into(), "cc".into(), "de".into()]];
        let vocab = build_vocab(&corpus, 1).unwrap();
        let e = encode(&tokens, &vocab, seq_len).unwrap();
        prop_assert_eq!(e.len(), seq_len);
        prop_assert!(e.true_length() <= seq_len);
        prop_assert!(e.indices()[..e.true_length()].iter().all(|&i| i >= 1 && i <= vocab.len()));
        prop_assert!(e.indices()[e.true_length()..].iter().all(|&i| i == 0));
    }

    #[test]
    fn normalized_tokens_are_lowercase_alphanumeric(text in "\\PC{0,60}") {
        for t in normalize(&text) {
            prop_assert!(!t.is_empty());
            prop_assert!(t.chars().all(|c| c.is_ascii_lowercase() || c.is_ascii_digit()));
        }
    }

    #[test]
    fn vocabulary_tsv_round_trip(words in vec("[a-z]{1,6}", 0..40), min_freq in 1u64..3) {
        let vocab = build_vocab(&[words], min_freq).unwrap();
        let back = Vocabulary::parse_tsv(&vocab.to_tsv(), Path::new("v")).unwrap();
        prop_assert_eq!(back.to_tsv(), vocab.to_tsv());
        prop_assert_eq!(back.len(), vocab.len());
    }

    #[test]
    fn encoders_are_non_negative(
        seed in 0u64..1000,
        idx in vec(1usize..=6, 0..9),
        f in vec(-50.0f64..50.0, 5),
    ) {
        let p = small_params(seed);
        let t = encode_text(&EncodedText::from_indices(&idx, 7).unwrap(), &p).unwrap();
        prop_assert!(t.iter().all(|&x| x >= 0.0));
        for act in [ImageActivation::Relu, ImageActivation::Identity] {
            prop_assert!(encode_image(&f, &p, act).unwrap().iter().all(|&x| x >= 0.0));
        }
    }

    #[test]
    fn batch_loss_invariant_under_batch_permutation(
        (txt, img) in (2usize..7).prop_flat_map(|b| (matrix(b, 3, 0.0, 1.0), matrix(b, 3, 0.0, 1.0))),
        rot in 0usize..7,
        max_mode in any::<bool>(),
        lambda_var in prop_oneof![Just(0.0), 0.0f64..2.0],
    ) {
        let b = txt.rows();
        let perm: Vec<usize> = (0..b).map(|i| (i * 5 + rot) % b).collect();
        let mut seen = perm.clone();
        seen.sort_unstable();
        prop_assume!(seen == (0..b).collect::<Vec<_>>());
        // tied hardest negatives are picked by index, so with a variance
        // term the max mode depends on batch order
        prop_assume!(!max_mode || lambda_var == 0.0);
        let permute = |t: &Tensor| Tensor::from_rows(&perm.iter().map(|&i| t.row(i).to_vec()).collect::<Vec<_>>()).unwrap();
        let cfg = LossConfig {
            alpha: 0.2,
            lambda_var,
            negative_mode: if max_mode { NegativeMode::Max } else { NegativeMode::Sum },
            ..LossConfig::default()
        };
        let a = batch_loss_value(&txt, &img, &cfg).unwrap();
        let p = batch_loss_value(&permute(&txt), &permute(&img), &cfg).unwrap();
        prop_assert!((a - p).abs() <= 1e-12 * a.abs().max(1.0), "{} vs {}", a, p);
    }

    #[test]
    fn batch_loss_monotone_in_margin(
        (txt, img) in (2usize..6).prop_flat_map(|b| (matrix(b, 4, 0.0, 1.0), matrix(b, 4, 0.0, 1.0))),
        a1 in 0.0f64..1.0,
        a2 in 0.0f64..1.0,
    ) {
        let (lo, hi) = if a1 <= a2 { (a1, a2) } else { (a2, a1) };
        let at = |alpha| batch_loss_value(&txt, &img, &LossConfig { alpha, ..LossConfig::default() }).unwrap();
        prop_assert!(at(lo) <= at(hi));
        prop_assert!(at(lo) >= 0.0);
    }

    #[test]
    fn metrics_ignore_outcome_order(ranks in vec(1usize..100, 1..40), rot in 0usize..40) {
        let mut shuffled = ranks.clone();
        let n = shuffled.len();
        shuffled.rotate_left(rot % n);
        shuffled.reverse();
        let (a, b) = (outcomes(&ranks), outcomes(&shuffled));
        for k in [1, 5, 10] {
            prop_assert_eq!(recall_at_k(&a, k), recall_at_k(&b, k));
        }
        prop_assert_eq!(median_rank(&a), median_rank(&b));
        prop_assert!(median_rank(&a) >= 1.0);
    }

    #[test]
    fn recall_non_decreasing_in_k(ranks in vec(1usize..60, 1..40)) {
        let o = outcomes(&ranks);
        let mut prev = 0.0;
        for k in 1..=60 {
            let r = recall_at_k(&o, k);
            prop_assert!(r >= prev);
            prev = r;
        }
        prop_assert_eq!(prev, 100.0);
    }

    #[test]
    fn extra_irrelevant_items_never_improve_rank(
        scores in vec(-5i32..5, 1..30),
        extra in vec(-5i32..5, 0..30),
        rel in 0usize..30,
    ) {
        let scores: Vec<f64> = scores.into_iter().map(f64::from).collect();
        let rel = rel % scores.len();
        let base = rank_from_scores(&scores, &[rel]).unwrap().best_rank;
        let mut grown = scores.clone();
        grown.extend(extra.into_iter().map(f64::from));
        let after = rank_from_scores(&grown, &[rel]).unwrap().best_rank;
        prop_assert!(after >= base);
        prop_assert!(after <= grown.len());
    }

    #[test]
    fn adam_keeps_shapes(seed in 0u64..100, lr in 0.0f64..1.0, g in -10.0f64..10.0) {
        let mut p = small_params(seed);
        let before: Vec<Vec<usize>> = p.iter().map(|(_, t)| t.shape().to_vec()).collect();
        let grads = p.map(|t| t.map(|x| x * g));
        let mut s = AdamState::new(&p, AdamConfig::default());
        adam_step(&mut p, &grads, &mut s, lr).unwrap();
        let after: Vec<Vec<usize>> = p.iter().map(|(_, t)| t.shape().to_vec()).collect();
        prop_assert_eq!(before, after);
        prop_assert!(s.v.iter().all(|(_, t)| t.data().iter().all(|&x| x >= 0.0)));
    }

    #[test]
    fn schedule_stays_in_range(losses in vec(0.0f64..10.0, 1..400)) {
        let cfg = ScheduleConfig::default();
        let mut s = ScheduleState::new(&cfg);
        for l in losses {
            schedule_update(&mut s, &cfg, l);
            prop_assert!(s.lr > 0.0 && s.lr <= 0.1);
            prop_assert!(s.lr >= cfg.lr_floor);
            prop_assert!(s.batch_size.is_multiple_of(16) && (s.batch_size / 16).is_power_of_two());
        }
    }
}
