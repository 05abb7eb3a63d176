//! Order-violation similarity and the in-batch triplet hinge loss.
//!
//! `E(x, y) = ||max(0, y − x)||²` is zero exactly when `y ≤ x`
//! componentwise, and `S(T, I) = −E(v_txt, v_img)`. For a batch of `B`
//! aligned pairs every other member of the batch serves as a negative:
//!
//! ```text
//! Σ_i [ Σ_{i'≠i} (max(0, α − S_ii + S_i'i) − λ·σ²(t_i'))
//!     + Σ_{k'≠i} (max(0, α − S_ii + S_ik') − λ·σ²(v_k')) ]
//! ```

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::numcore::{forward_op, Eager, Graph, Op, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NegativeMode {
    /// Sum the hinge over every in-batch negative.
    #[default]
    Sum,
    /// Only the hardest negative per positive pair.
    Max,
}

/// Population the variance term's mean is taken over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum VarianceScope {
    /// Components of the single negative vector.
    #[default]
    Components,
    /// Per-component batch means.
    Batch,
}

macro_rules! str_enum {
    ($ty:ident { $($variant:ident => $s:literal),+ }) => {
        impl FromStr for $ty {
            type Err = Error;
            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($s => Ok($ty::$variant),)+
                    _ => Err(Error::Config(format!(concat!("unknown ", stringify!($ty), " `{}`"), s))),
                }
            }
        }
        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.pad(match self { $($ty::$variant => $s,)+ })
            }
        }
    };
}

str_enum!(NegativeMode { Sum => "sum", Max => "max" });
str_enum!(VarianceScope { Components => "components", Batch => "batch" });

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossConfig {
    pub alpha: f64,
    /// Weight of the subtracted variance term. Off by default: with a
    /// positive weight the loss is unbounded below.
    pub lambda_var: f64,
    pub negative_mode: NegativeMode,
    pub variance_scope: VarianceScope,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            alpha: 0.05,
            lambda_var: 0.0,
            negative_mode: NegativeMode::Sum,
            variance_scope: VarianceScope::Components,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0) || !self.alpha.is_finite() {
            return Err(Error::Config(format!("alpha must be finite and >= 0, got {}", self.alpha)));
        }
        if !self.lambda_var.is_finite() {
            return Err(Error::Config("lambda_var must be finite".into()));
        }
        Ok(())
    }
}

fn check_len(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::shape("order_penalty", &[x.len()], &[y.len()]));
    }
    Ok(())
}

/// `||max(0, y − x)||²`.
pub fn order_penalty(x: &[f64], y: &[f64]) -> Result<f64> {
    check_len(x, y)?;
    Ok(x.iter()
        .zip(y)
        .map(|(a, b)| {
            let d = (b - a).max(0.0);
            d * d
        })
        .sum())
}

/// `S(T, I) = −E(v_txt, v_img)`; zero iff `v_img ≤ v_txt` componentwise.
pub fn similarity(v_txt: &[f64], v_img: &[f64]) -> Result<f64> {
    Ok(-order_penalty(v_txt, v_img)?)
}

/// Population variance of the components of `v`.
pub fn variance_term(v: &[f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n
}

/// `B_t × B_i` matrix with entry `(i, k) = S(T_i, I_k)` for embeddings
/// stored one per row.
pub fn similarity_matrix(txt: &Tensor, img: &Tensor) -> Result<Tensor> {
    let e = forward_op(&Op::PairwiseOrderPenalty, &[txt, img])?;
    Ok(e.map(|v| -v))
}

/// Number of positive hinge terms `α − S_ii + S_neg > 0` over every
/// negative, in both directions, of a square similarity matrix.
pub fn hinge_violations(sim: &Tensor, alpha: f64) -> usize {
    let b = sim.rows();
    let mut count = 0;
    for i in 0..b {
        let pos = sim.get(i, i);
        for n in (0..b).filter(|&n| n != i) {
            count += usize::from(alpha - pos + sim.get(n, i) > 0.0);
            count += usize::from(alpha - pos + sim.get(i, n) > 0.0);
        }
    }
    count
}

/// Per-row variance as a `B × 1` column.
fn row_variances<G: Graph>(g: &mut G, v: &G::Node, scope: VarianceScope) -> Result<G::Node> {
    let (b, j) = {
        let t = g.value(v);
        (t.rows(), t.cols())
    };
    let avg_cols = g.constant(Tensor::filled(&[j, 1], 1.0 / j as f64));
    let centered = match scope {
        VarianceScope::Components => {
            let mean = g.matmul(v, &avg_cols)?;
            let spread = g.constant(Tensor::filled(&[1, j], 1.0));
            let mean_b = g.matmul(&mean, &spread)?;
            g.sub(v, &mean_b)?
        }
        VarianceScope::Batch => {
            let avg_rows = g.constant(Tensor::filled(&[1, b], 1.0 / b as f64));
            let mean = g.matmul(&avg_rows, v)?;
            let neg = g.scale(&mean, -1.0)?;
            g.add_row(v, &neg)?
        }
    };
    let sq = g.square(&centered)?;
    g.matmul(&sq, &avg_cols)
}

/// One-hot selection of the largest off-diagonal entry in each column
/// (lowest row index on ties), plus how often each row was picked.
fn hardest_negatives(h: &Tensor) -> (Tensor, Vec<f64>) {
    let b = h.rows();
    let mut pick = Tensor::zeros(&[b, b]);
    let mut counts = vec![0.0; b];
    for col in 0..b {
        let best = (0..b)
            .filter(|&r| r != col)
            .fold(None, |best: Option<usize>, r| match best {
                Some(bi) if h.get(bi, col) >= h.get(r, col) => Some(bi),
                _ => Some(r),
            })
            .expect("B >= 2");
        pick.data_mut()[best * b + col] = 1.0;
        counts[best] += 1.0;
    }
    (pick, counts)
}

/// Triplet loss over in-batch negatives for row-aligned `B × j` text and
/// image embeddings.
pub fn batch_loss<G: Graph>(g: &mut G, txt: &G::Node, img: &G::Node, cfg: &LossConfig) -> Result<G::Node> {
    cfg.validate()?;
    let (ts, is) = (g.value(txt).shape().to_vec(), g.value(img).shape().to_vec());
    if ts.len() != 2 || ts != is {
        return Err(Error::shape("batch_loss", &ts, &is));
    }
    let b = ts[0];
    if b < 2 {
        return Err(Error::Invalid(format!("batch_loss needs at least 2 pairs, got {b}")));
    }

    let penalty = g.pairwise_order_penalty(txt, img)?;
    let s = g.scale(&penalty, -1.0)?;
    let diag = g.diagonal(&s)?;
    let neg_diag = g.scale(&diag, -1.0)?;

    // Both hinge matrices are indexed [negative][positive].
    let st = g.transpose(&s)?;
    let hinge = |m: &G::Node, g: &mut G| -> Result<G::Node> {
        let shifted = g.add_row(m, &neg_diag)?;
        let margin = g.add_scalar(&shifted, cfg.alpha)?;
        g.relu(&margin)
    };
    let h_txt = hinge(&s, g)?;
    let h_img = hinge(&st, g)?;

    let mut off_diag = Tensor::filled(&[b, b], 1.0);
    for i in 0..b {
        off_diag.data_mut()[i * b + i] = 0.0;
    }

    let (sel_txt, sel_img, counts_txt, counts_img) = match cfg.negative_mode {
        NegativeMode::Sum => {
            let c = vec![(b - 1) as f64; b];
            (off_diag.clone(), off_diag, c.clone(), c)
        }
        NegativeMode::Max => {
            let (pt, ct) = hardest_negatives(g.value(&h_txt));
            let (pi, ci) = hardest_negatives(g.value(&h_img));
            (pt, pi, ct, ci)
        }
    };
    let sel_txt = g.constant(sel_txt);
    let sel_img = g.constant(sel_img);
    let kept_txt = g.mul(&h_txt, &sel_txt)?;
    let kept_img = g.mul(&h_img, &sel_img)?;
    let sum_txt = g.sum(&kept_txt)?;
    let sum_img = g.sum(&kept_img)?;
    let hinge_total = g.add(&sum_txt, &sum_img)?;

    if cfg.lambda_var == 0.0 {
        return Ok(hinge_total);
    }
    let weighted_var = |v: &G::Node, counts: Vec<f64>, g: &mut G| -> Result<G::Node> {
        let var = row_variances(g, v, cfg.variance_scope)?;
        let w = g.constant(Tensor::column_vector(counts));
        let prod = g.mul(&var, &w)?;
        g.sum(&prod)
    };
    let vt = weighted_var(txt, counts_txt, g)?;
    let vi = weighted_var(img, counts_img, g)?;
    let var_total = g.add(&vt, &vi)?;
    let var_scaled = g.scale(&var_total, cfg.lambda_var)?;
    g.sub(&hinge_total, &var_scaled)
}

/// [`batch_loss`] evaluated without recording.
pub fn batch_loss_value(txt: &Tensor, img: &Tensor, cfg: &LossConfig) -> Result<f64> {
    let mut g = Eager;
    Ok(batch_loss(&mut g, txt, img, cfg)?.item())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_penalty_examples() {
        assert_eq!(order_penalty(&[0.3, 1.0], &[0.3, 1.0]).unwrap(), 0.0);
        assert_eq!(order_penalty(&[3.0, 3.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(order_penalty(&[1.0, 2.0], &[2.0, 1.0]).unwrap(), 1.0);
        assert!(order_penalty(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn similarity_examples() {
        assert_eq!(similarity(&[2.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(similarity(&[1.0, 2.0], &[2.0, 1.0]).unwrap(), -1.0);
        assert!(similarity(&[1.0, 2.0], &[1.0]).is_err());
    }

    #[test]
    fn variance_examples() {
        assert_eq!(variance_term(&[4.0, 4.0, 4.0]), 0.0);
        assert_eq!(variance_term(&[0.0, 2.0]), 1.0);
    }

    #[test]
    fn equal_embeddings_give_four_alpha() {
        let v = Tensor::matrix(2, 3, vec![0.5, 1.0, 0.2, 0.5, 1.0, 0.2]).unwrap();
        let cfg = LossConfig {
            alpha: 0.3,
            ..LossConfig::default()
        };
        let loss = batch_loss_value(&v, &v, &cfg).unwrap();
        assert!((loss - 4.0 * 0.3).abs() < 1e-15, "{loss}");
    }

    #[test]
    fn well_separated_batch_has_zero_loss() {
        // txt_i dominates img_i; img_k exceeds txt_i by >= 1 elsewhere.
        let txt = Tensor::matrix(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let img = Tensor::matrix(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let cfg = LossConfig {
            alpha: 0.5,
            ..LossConfig::default()
        };
        assert_eq!(batch_loss_value(&txt, &img, &cfg).unwrap(), 0.0);
        let sim = similarity_matrix(&txt, &img).unwrap();
        assert_eq!(hinge_violations(&sim, 0.5), 0);
        assert_eq!(hinge_violations(&sim, 1.5), 4);
    }

    #[test]
    fn rejects_tiny_or_misaligned_batches() {
        let one = Tensor::matrix(1, 2, vec![1.0, 2.0]).unwrap();
        assert!(batch_loss_value(&one, &one, &LossConfig::default()).is_err());
        let two = Tensor::matrix(2, 2, vec![1.0; 4]).unwrap();
        let three = Tensor::matrix(3, 2, vec![1.0; 6]).unwrap();
        assert!(batch_loss_value(&two, &three, &LossConfig::default()).is_err());
        let bad = LossConfig {
            alpha: -1.0,
            ..LossConfig::default()
        };
        assert!(batch_loss_value(&two, &two, &bad).is_err());
    }

    #[test]
    fn config_enums_parse() {
        assert_eq!("max".parse::<NegativeMode>().unwrap(), NegativeMode::Max);
        assert_eq!("batch".parse::<VarianceScope>().unwrap(), VarianceScope::Batch);
        assert!("hard".parse::<NegativeMode>().is_err());
        assert_eq!(NegativeMode::Sum.to_string(), "sum");
    }
}
