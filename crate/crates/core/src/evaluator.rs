//! Ranking-based retrieval metrics in both directions.
//!
//! Galleries are ordered by similarity, highest first (penalty increasing),
//! with ties resolved by ascending gallery index. A query's outcome is the
//! 1-based rank of its best-placed relevant item.

use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::encoders::{embed_images, embed_texts, ImageActivation, ModelParams};
use crate::error::{Error, Result};
use crate::numcore::Tensor;
use crate::objective::{similarity, similarity_matrix};
use crate::textpipe::EncodedText;

/// Images per fold under [`Protocol::Folds1k`].
pub const FOLD_SIZE: usize = 1000;

/// Images used by [`Protocol::Full5k`] and partitioned by [`Protocol::Folds1k`].
pub const TEST_IMAGES: usize = 5000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// A caption queries the image gallery (image retrieval).
    TextQuery,
    /// An image queries the caption gallery (sentence retrieval).
    ImageQuery,
}

/// 1-based rank of the best relevant gallery item for one query.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct RankOutcome {
    pub best_rank: usize,
}

/// Best rank given precomputed gallery scores.
pub fn rank_from_scores(scores: &[f64], relevant: &[usize]) -> Result<RankOutcome> {
    if relevant.is_empty() {
        return Err(Error::Invalid("rank_gallery: empty relevant set".into()));
    }
    if let Some(&bad) = relevant.iter().find(|&&r| r >= scores.len()) {
        return Err(Error::Invalid(format!(
            "rank_gallery: relevant index {bad} outside gallery of {}",
            scores.len()
        )));
    }
    let best_rank = relevant
        .iter()
        .map(|&r| {
            let s = scores[r];
            let ahead = scores
                .iter()
                .enumerate()
                .filter(|&(k, &v)| v > s || (v == s && k < r))
                .count();
            ahead + 1
        })
        .min()
        .expect("non-empty");
    Ok(RankOutcome { best_rank })
}

/// Ranks one query against a gallery of embeddings (one per row).
pub fn rank_gallery(query: &[f64], gallery: &Tensor, relevant: &[usize], direction: Direction) -> Result<RankOutcome> {
    if gallery.rows() == 0 {
        return Err(Error::Invalid("rank_gallery: empty gallery".into()));
    }
    let scores = (0..gallery.rows())
        .map(|k| match direction {
            Direction::TextQuery => similarity(query, gallery.row(k)),
            Direction::ImageQuery => similarity(gallery.row(k), query),
        })
        .collect::<Result<Vec<f64>>>()?;
    rank_from_scores(&scores, relevant)
}

/// Percentage of outcomes ranked within the top `k`.
pub fn recall_at_k(outcomes: &[RankOutcome], k: usize) -> f64 {
    if outcomes.is_empty() {
        return 0.0;
    }
    let hits = outcomes.iter().filter(|o| o.best_rank <= k).count();
    100.0 * hits as f64 / outcomes.len() as f64
}

/// Middle best-rank; mean of the two middle values for even counts.
pub fn median_rank(outcomes: &[RankOutcome]) -> f64 {
    if outcomes.is_empty() {
        return f64::NAN;
    }
    let mut ranks: Vec<usize> = outcomes.iter().map(|o| o.best_rank).collect();
    ranks.sort_unstable();
    let n = ranks.len();
    if n % 2 == 1 {
        ranks[n / 2] as f64
    } else {
        (ranks[n / 2 - 1] + ranks[n / 2]) as f64 / 2.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Metrics {
    pub r1: f64,
    pub r5: f64,
    pub r10: f64,
    pub medr: f64,
    pub n_queries: usize,
}

impl Metrics {
    pub fn from_outcomes(outcomes: &[RankOutcome]) -> Self {
        Metrics {
            r1: recall_at_k(outcomes, 1),
            r5: recall_at_k(outcomes, 5),
            r10: recall_at_k(outcomes, 10),
            medr: median_rank(outcomes),
            n_queries: outcomes.len(),
        }
    }

    fn mean(all: &[Metrics]) -> Metrics {
        let n = all.len() as f64;
        let avg = |f: fn(&Metrics) -> f64| all.iter().map(f).sum::<f64>() / n;
        Metrics {
            r1: avg(|m| m.r1),
            r5: avg(|m| m.r5),
            r10: avg(|m| m.r10),
            medr: avg(|m| m.medr),
            n_queries: all.iter().map(|m| m.n_queries).sum(),
        }
    }
}

/// Images and captions of an evaluation split, already encoded.
#[derive(Debug, Clone)]
pub struct EvalSet {
    /// `N × f`, one image per row.
    pub features: Tensor,
    pub captions: Vec<EncodedText>,
    /// Image row owning each caption.
    pub owner: Vec<usize>,
}

impl EvalSet {
    pub fn num_images(&self) -> usize {
        self.features.rows()
    }

    /// The first `n` images and their captions.
    pub fn prefix(&self, n: usize) -> EvalSet {
        self.range(0, n)
    }

    fn range(&self, start: usize, end: usize) -> EvalSet {
        let f = self.features.cols();
        let features = Tensor::matrix(
            end - start,
            f,
            self.features.data()[start * f..end * f].to_vec(),
        )
        .expect("slice shape");
        let (captions, owner) = self
            .captions
            .iter()
            .zip(&self.owner)
            .filter(|(_, &o)| (start..end).contains(&o))
            .map(|(c, &o)| (c.clone(), o - start))
            .unzip();
        EvalSet {
            features,
            captions,
            owner,
        }
    }
}

/// Both-direction outcomes from precomputed embeddings: `txt` holds one
/// caption per row, `img` one image per row, `owner[c]` is caption `c`'s image.
pub fn evaluate_embeddings(txt: &Tensor, img: &Tensor, owner: &[usize]) -> Result<(Metrics, Metrics)> {
    if txt.rows() != owner.len() {
        return Err(Error::Invalid("caption/owner count mismatch".into()));
    }
    let n_img = img.rows();
    if n_img == 0 || txt.rows() == 0 {
        return Err(Error::Invalid("evaluation needs at least one image and one caption".into()));
    }
    // (caption, image) similarities
    let sim = similarity_matrix(txt, img)?;

    let mut captions_of = vec![Vec::new(); n_img];
    for (c, &o) in owner.iter().enumerate() {
        if o >= n_img {
            return Err(Error::Invalid(format!("caption {c} owned by missing image {o}")));
        }
        captions_of[o].push(c);
    }

    let sentence = (0..n_img)
        .map(|k| {
            let col: Vec<f64> = (0..sim.rows()).map(|c| sim.get(c, k)).collect();
            rank_from_scores(&col, &captions_of[k])
        })
        .collect::<Result<Vec<_>>>()?;
    let image = (0..sim.rows())
        .map(|c| rank_from_scores(sim.row(c), &[owner[c]]))
        .collect::<Result<Vec<_>>>()?;
    Ok((Metrics::from_outcomes(&sentence), Metrics::from_outcomes(&image)))
}

/// Embeds a split and evaluates both directions over the whole of it.
pub fn evaluate(params: &ModelParams, activation: ImageActivation, set: &EvalSet) -> Result<(Metrics, Metrics)> {
    let txt = embed_texts(&set.captions, params)?;
    let img = embed_images(&set.features, params, activation)?;
    evaluate_embeddings(&txt, &img, &set.owner)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Protocol {
    /// Up to the first 5000 test images as one gallery.
    #[default]
    Full5k,
    /// Disjoint folds of 1000 images over the first 5000; per-fold and mean.
    Folds1k,
}

impl FromStr for Protocol {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "5k" | "full_5k" => Ok(Protocol::Full5k),
            "1k" | "folds_1k" => Ok(Protocol::Folds1k),
            _ => Err(Error::Config(format!("unknown protocol `{s}` (1k|5k)"))),
        }
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(match self {
            Protocol::Full5k => "full_5k",
            Protocol::Folds1k => "folds_1k",
        })
    }
}

/// Metrics for one retrieval direction under a protocol.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DirectionReport {
    pub direction: &'static str,
    pub protocol: String,
    #[serde(flatten)]
    pub metrics: Metrics,
    pub folds: Vec<Metrics>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolReport {
    pub protocol: Protocol,
    pub sentence: DirectionReport,
    pub image: DirectionReport,
}

impl ProtocolReport {
    /// Two JSON objects, sentence retrieval then image retrieval.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!([self.sentence, self.image])
    }

    /// Plain-text table in the usual R@1/R@5/R@10/Med r layout.
    pub fn table(&self) -> String {
        let row = |label: &str, s: &Metrics, i: &Metrics| {
            format!(
                "{label:<10}| {:>6.1} {:>6.1} {:>6.1} {:>7.1} | {:>6.1} {:>6.1} {:>6.1} {:>7.1}\n",
                s.r1, s.r5, s.r10, s.medr, i.r1, i.r5, i.r10, i.medr
            )
        };
        let mut out = String::new();
        out.push_str(&format!("{:<10}| {:<29} | {:<29}\n", "Task", "Sentence Retrieval", "Image Retrieval"));
        out.push_str(&format!(
            "{:<10}| {:>6} {:>6} {:>6} {:>7} | {:>6} {:>6} {:>6} {:>7}\n",
            "Protocol", "R@1", "R@5", "R@10", "Med r", "R@1", "R@5", "R@10", "Med r"
        ));
        out.push_str(&"-".repeat(75));
        out.push('\n');
        let (s, i) = (&self.sentence, &self.image);
        if self.protocol == Protocol::Folds1k {
            for (k, (sf, imf)) in s.folds.iter().zip(&i.folds).enumerate() {
                out.push_str(&row(&format!("1K fold {k}"), sf, imf));
            }
            out.push_str(&row("1K mean", &s.metrics, &i.metrics));
        } else {
            out.push_str(&row("5K", &s.metrics, &i.metrics));
        }
        out
    }
}

/// Evaluates a test split under `protocol`.
pub fn evaluate_protocol(
    params: &ModelParams,
    activation: ImageActivation,
    set: &EvalSet,
    protocol: Protocol,
) -> Result<ProtocolReport> {
    let n = set.num_images();
    let report = |metrics: Metrics, folds: Vec<Metrics>, direction| DirectionReport {
        direction,
        protocol: protocol.to_string(),
        metrics,
        folds,
    };
    match protocol {
        Protocol::Full5k => {
            if n == 0 {
                return Err(Error::Invalid("empty test split".into()));
            }
            let (s, i) = evaluate(params, activation, &set.prefix(n.min(TEST_IMAGES)))?;
            Ok(ProtocolReport {
                protocol,
                sentence: report(s, Vec::new(), "sentence_retrieval"),
                image: report(i, Vec::new(), "image_retrieval"),
            })
        }
        Protocol::Folds1k => {
            if n < FOLD_SIZE {
                return Err(Error::Invalid(format!(
                    "1k protocol needs at least {FOLD_SIZE} test images, got {n}"
                )));
            }
            let folds = (n.min(TEST_IMAGES)) / FOLD_SIZE;
            let mut sent = Vec::with_capacity(folds);
            let mut img = Vec::with_capacity(folds);
            for f in 0..folds {
                let (s, i) = evaluate(params, activation, &set.range(f * FOLD_SIZE, (f + 1) * FOLD_SIZE))?;
                sent.push(s);
                img.push(i);
            }
            Ok(ProtocolReport {
                protocol,
                sentence: report(Metrics::mean(&sent), sent, "sentence_retrieval"),
                image: report(Metrics::mean(&img), img, "image_retrieval"),
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn outcomes(ranks: &[usize]) -> Vec<RankOutcome> {
        ranks.iter().map(|&best_rank| RankOutcome { best_rank }).collect()
    }

    #[test]
    fn strictly_best_relevant_ranks_first() {
        let o = rank_from_scores(&[-3.0, -0.5, -2.0], &[1]).unwrap();
        assert_eq!(o.best_rank, 1);
    }

    #[test]
    fn ties_resolved_by_gallery_index() {
        let scores = [0.0; 10];
        assert_eq!(rank_from_scores(&scores, &[7, 4]).unwrap().best_rank, 5);
        assert_eq!(rank_from_scores(&scores, &[0]).unwrap().best_rank, 1);
    }

    #[test]
    fn empty_relevant_set_rejected() {
        assert!(rank_from_scores(&[1.0], &[]).is_err());
        assert!(rank_from_scores(&[1.0], &[3]).is_err());
    }

    #[test]
    fn direction_controls_argument_order() {
        // S(T, I) = −||max(0, I − T)||²
        let gallery = Tensor::matrix(2, 1, vec![0.0, 2.0]).unwrap();
        // text query 1.0 vs images 0 and 2: S = 0 and −1 → image 0 first
        let o = rank_gallery(&[1.0], &gallery, &[0], Direction::TextQuery).unwrap();
        assert_eq!(o.best_rank, 1);
        // image query 1.0 vs texts 0 and 2: S = −1 and 0 → text 1 first
        let o = rank_gallery(&[1.0], &gallery, &[0], Direction::ImageQuery).unwrap();
        assert_eq!(o.best_rank, 2);
    }

    #[test]
    fn recall_and_median_examples() {
        let o = outcomes(&[1, 1, 1]);
        assert_eq!(recall_at_k(&o, 1), 100.0);
        let o = outcomes(&[1, 6, 11]);
        assert_eq!(recall_at_k(&o, 1), 100.0 / 3.0);
        assert_eq!(recall_at_k(&o, 5), 100.0 / 3.0);
        assert_eq!(recall_at_k(&o, 10), 200.0 / 3.0);
        assert_eq!(recall_at_k(&o, 11), 100.0);
        assert_eq!(median_rank(&outcomes(&[1, 2, 3])), 2.0);
        assert_eq!(median_rank(&outcomes(&[4, 1, 3, 2])), 2.5);
    }

    #[test]
    fn perfect_embeddings_score_full_recall() {
        // Captions dominate exactly their own image; image k = e_k, caption = e_k.
        let n = 4;
        let img = Tensor::identity(n);
        let mut rows = Vec::new();
        let mut owner = Vec::new();
        for k in 0..n {
            for _ in 0..2 {
                let mut r = vec![0.0; n];
                r[k] = 1.0;
                rows.push(r);
                owner.push(k);
            }
        }
        let txt = Tensor::from_rows(&rows).unwrap();
        let (s, i) = evaluate_embeddings(&txt, &img, &owner).unwrap();
        assert_eq!((s.r1, i.r1), (100.0, 100.0));
        assert_eq!((s.medr, i.medr), (1.0, 1.0));
        assert_eq!(s.n_queries, 4);
        assert_eq!(i.n_queries, 8);
    }

    #[test]
    fn folds_need_a_thousand_images() {
        let set = EvalSet {
            features: Tensor::zeros(&[10, 2]),
            captions: Vec::new(),
            owner: Vec::new(),
        };
        let p = ModelParams::zeros(crate::encoders::ModelDims {
            vocab_size: 1,
            embed_dim: 1,
            joint_dim: 1,
            feature_dim: 2,
        })
        .unwrap();
        assert!(evaluate_protocol(&p, ImageActivation::Relu, &set, Protocol::Folds1k).is_err());
    }

    #[test]
    fn protocol_names() {
        assert_eq!("1k".parse::<Protocol>().unwrap(), Protocol::Folds1k);
        assert_eq!("5k".parse::<Protocol>().unwrap(), Protocol::Full5k);
        assert!("10k".parse::<Protocol>().is_err());
    }
}
