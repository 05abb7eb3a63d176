//! Text and image branches mapping into the shared non-negative space.
//!
//! Text: embedding lookup, a single-layer LSTM run over every position of
//! the fixed-length sequence (padding included), last hidden state, `abs`.
//! Image: `abs(W2 · act(W1 · f + b1) + b2)`.

use std::ops::Deref;

use rand::Rng;

use crate::error::{Error, Result};
use crate::numcore::{Eager, Graph, Tensor};
use crate::textpipe::EncodedText;

/// Range of the symmetric uniform initializer.
pub const INIT_SCALE: f64 = 0.08;

/// Initial LSTM forget-gate bias.
pub const FORGET_BIAS: f64 = 1.0;

/// Gate order used for the LSTM weight arrays.
pub const GATES: [&str; 4] = ["i", "f", "g", "o"];

const NAMES: [&str; NUM_TENSORS] = [
    "embedding",
    "lstm.wx.i",
    "lstm.wx.f",
    "lstm.wx.g",
    "lstm.wx.o",
    "lstm.wh.i",
    "lstm.wh.f",
    "lstm.wh.g",
    "lstm.wh.o",
    "lstm.b.i",
    "lstm.b.f",
    "lstm.b.g",
    "lstm.b.o",
    "image.w1",
    "image.b1",
    "image.w2",
    "image.b2",
];

/// Number of parameter tensors in a model.
pub const NUM_TENSORS: usize = 17;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelDims {
    /// Dictionary size `d`; the embedding table has `d + 1` rows.
    pub vocab_size: usize,
    pub embed_dim: usize,
    /// Joint embedding size, also the LSTM hidden size.
    pub joint_dim: usize,
    pub feature_dim: usize,
}

impl ModelDims {
    fn validate(&self) -> Result<()> {
        if self.embed_dim == 0 || self.joint_dim == 0 || self.feature_dim == 0 {
            return Err(Error::Invalid(format!("model dimensions must be positive: {self:?}")));
        }
        Ok(())
    }

    /// Expected tensor shapes, in [`ModelParams::names`] order.
    pub fn shapes(&self) -> Vec<Vec<usize>> {
        let (e, h, f) = (self.embed_dim, self.joint_dim, self.feature_dim);
        let mut s = vec![vec![self.vocab_size + 1, e]];
        s.extend(std::iter::repeat_n(vec![e, h], 4));
        s.extend(std::iter::repeat_n(vec![h, h], 4));
        s.extend(std::iter::repeat_n(vec![1, h], 4));
        s.extend([vec![f, h], vec![1, h], vec![h, h], vec![1, h]]);
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams<T = Tensor> {
    /// Input-to-gate weights, `e × h` each.
    pub wx: [T; 4],
    /// Hidden-to-gate weights, `h × h` each.
    pub wh: [T; 4],
    /// Gate biases, `1 × h` each.
    pub b: [T; 4],
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImageHead<T = Tensor> {
    pub w1: T,
    pub b1: T,
    pub w2: T,
    pub b2: T,
}

/// All trainable weights. Generic so the same layout can hold tensors,
/// tape handles, gradients, or optimizer moments.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T = Tensor> {
    pub embedding: T,
    pub lstm: LstmParams<T>,
    pub image: ImageHead<T>,
}

impl<T> ModelParams<T> {
    pub fn names() -> &'static [&'static str] {
        &NAMES
    }

    pub fn iter(&self) -> impl Iterator<Item = (&'static str, &T)> {
        let l = &self.lstm;
        let im = &self.image;
        let refs = [&self.embedding]
            .into_iter()
            .chain(l.wx.iter())
            .chain(l.wh.iter())
            .chain(l.b.iter())
            .chain([&im.w1, &im.b1, &im.w2, &im.b2]);
        NAMES.into_iter().zip(refs)
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&'static str, &mut T)> {
        let l = &mut self.lstm;
        let im = &mut self.image;
        let refs = [&mut self.embedding]
            .into_iter()
            .chain(l.wx.iter_mut())
            .chain(l.wh.iter_mut())
            .chain(l.b.iter_mut())
            .chain([&mut im.w1, &mut im.b1, &mut im.w2, &mut im.b2]);
        NAMES.into_iter().zip(refs)
    }

    pub fn map<U>(&self, mut f: impl FnMut(&T) -> U) -> ModelParams<U> {
        let l = &self.lstm;
        ModelParams {
            embedding: f(&self.embedding),
            lstm: LstmParams {
                wx: [f(&l.wx[0]), f(&l.wx[1]), f(&l.wx[2]), f(&l.wx[3])],
                wh: [f(&l.wh[0]), f(&l.wh[1]), f(&l.wh[2]), f(&l.wh[3])],
                b: [f(&l.b[0]), f(&l.b[1]), f(&l.b[2]), f(&l.b[3])],
            },
            image: ImageHead {
                w1: f(&self.image.w1),
                b1: f(&self.image.b1),
                w2: f(&self.image.w2),
                b2: f(&self.image.b2),
            },
        }
    }

    /// Inverse of [`iter`](Self::iter): values in name order.
    pub fn from_vec(values: Vec<T>) -> Option<Self> {
        if values.len() != NUM_TENSORS {
            return None;
        }
        let mut it = values.into_iter();
        let mut next = || it.next().unwrap();
        let embedding = next();
        let wx = [next(), next(), next(), next()];
        let wh = [next(), next(), next(), next()];
        let b = [next(), next(), next(), next()];
        let image = ImageHead {
            w1: next(),
            b1: next(),
            w2: next(),
            b2: next(),
        };
        Some(ModelParams {
            embedding,
            lstm: LstmParams { wx, wh, b },
            image,
        })
    }
}

impl ModelParams<Tensor> {
    /// All-zero parameters.
    pub fn zeros(dims: ModelDims) -> Result<Self> {
        dims.validate()?;
        let tensors = dims.shapes().iter().map(|s| Tensor::zeros(s)).collect();
        Ok(Self::from_vec(tensors).expect("tensor count"))
    }

    /// Uniform `[-0.08, 0.08]` weights, zero biases except the forget gate
    /// (`1.0`), and an all-zero padding row.
    pub fn init(dims: ModelDims, rng: &mut impl Rng) -> Result<Self> {
        let mut p = Self::zeros(dims)?;
        for (name, t) in p.iter_mut() {
            if name.starts_with("lstm.b.") || name.starts_with("image.b") {
                continue;
            }
            for v in t.data_mut() {
                *v = rng.gen_range(-INIT_SCALE..=INIT_SCALE);
            }
        }
        p.embedding.row_mut(0).fill(0.0);
        p.lstm.b[1].data_mut().fill(FORGET_BIAS);
        Ok(p)
    }

    pub fn dims(&self) -> ModelDims {
        ModelDims {
            vocab_size: self.embedding.rows() - 1,
            embed_dim: self.embedding.cols(),
            joint_dim: self.image.w2.cols(),
            feature_dim: self.image.w1.rows(),
        }
    }

    /// Checks every tensor against the shapes implied by `dims`.
    pub fn check_dims(&self, dims: ModelDims) -> Result<()> {
        for ((name, t), want) in self.iter().zip(dims.shapes()) {
            if t.shape() != want.as_slice() {
                return Err(Error::Invalid(format!(
                    "parameter `{name}` has shape {:?}, expected {want:?}",
                    t.shape()
                )));
            }
        }
        Ok(())
    }

    pub fn num_scalars(&self) -> usize {
        self.iter().map(|(_, t)| t.numel()).sum()
    }

    /// Places every tensor on `g` as a variable.
    pub fn bind<G: Graph>(&self, g: &mut G) -> ModelParams<G::Node> {
        self.map(|t| g.variable(t.clone()))
    }
}

/// Activation between the two image layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ImageActivation {
    #[default]
    Relu,
    Identity,
}

impl std::str::FromStr for ImageActivation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "relu" => Ok(Self::Relu),
            "identity" => Ok(Self::Identity),
            _ => Err(Error::Config(format!("unknown image activation `{s}` (relu|identity)"))),
        }
    }
}

impl std::fmt::Display for ImageActivation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.pad(match self {
            Self::Relu => "relu",
            Self::Identity => "identity",
        })
    }
}

/// A vector in the joint space; every component is non-negative.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector(Vec<f64>);

impl EmbeddingVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::Invalid("embedding components must be finite and non-negative".into()));
        }
        Ok(EmbeddingVector(values))
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for EmbeddingVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// One LSTM step over a batch: `x` is `B × e`, states are `B × h`.
pub fn lstm_step<G: Graph>(
    g: &mut G,
    x: &G::Node,
    h_prev: &G::Node,
    c_prev: &G::Node,
    lstm: &LstmParams<G::Node>,
) -> Result<(G::Node, G::Node)> {
    let gate = |k: usize, g: &mut G| -> Result<G::Node> {
        let zx = g.matmul(x, &lstm.wx[k])?;
        let zh = g.matmul(h_prev, &lstm.wh[k])?;
        let z = g.add(&zx, &zh)?;
        let z = g.add_row(&z, &lstm.b[k])?;
        if k == 2 {
            g.tanh(&z)
        } else {
            g.sigmoid(&z)
        }
    };
    let i = gate(0, g)?;
    let f = gate(1, g)?;
    let cand = gate(2, g)?;
    let o = gate(3, g)?;
    let keep = g.mul(&f, c_prev)?;
    let write = g.mul(&i, &cand)?;
    let c = g.add(&keep, &write)?;
    let tc = g.tanh(&c)?;
    let h = g.mul(&o, &tc)?;
    Ok((h, c))
}

/// Text branch over a batch of equal-length sequences; returns `B × j`.
pub fn text_forward<G: Graph>(
    g: &mut G,
    seqs: &[&EncodedText],
    params: &ModelParams<G::Node>,
) -> Result<G::Node> {
    let first = seqs
        .first()
        .ok_or_else(|| Error::Invalid("text_forward: empty batch".into()))?;
    let steps = first.len();
    if seqs.iter().any(|s| s.len() != steps) {
        return Err(Error::Invalid("text_forward: sequences differ in length".into()));
    }
    let hidden = g.value(&params.lstm.wh[0]).rows();
    let vocab_rows = g.value(&params.embedding).rows();
    if let Some(bad) = seqs.iter().flat_map(|s| s.indices()).find(|&&i| i >= vocab_rows) {
        return Err(Error::Invalid(format!(
            "token index {bad} out of range for an embedding table of {vocab_rows} rows"
        )));
    }

    let mut h = g.constant(Tensor::zeros(&[seqs.len(), hidden]));
    let mut c = h.clone();
    for t in 0..steps {
        let rows = seqs.iter().map(|s| s.indices()[t]).collect();
        let x = g.gather_rows(&params.embedding, rows)?;
        (h, c) = lstm_step(g, &x, &h, &c, &params.lstm)?;
    }
    g.abs(&h)
}

/// Image branch: `features` is `B × f`; returns `B × j`.
pub fn image_forward<G: Graph>(
    g: &mut G,
    features: &G::Node,
    params: &ModelParams<G::Node>,
    activation: ImageActivation,
) -> Result<G::Node> {
    let im = &params.image;
    let z1 = g.matmul(features, &im.w1)?;
    let z1 = g.add_row(&z1, &im.b1)?;
    let a1 = match activation {
        ImageActivation::Relu => g.relu(&z1)?,
        ImageActivation::Identity => z1,
    };
    let z2 = g.matmul(&a1, &im.w2)?;
    let z2 = g.add_row(&z2, &im.b2)?;
    g.abs(&z2)
}

fn row_embedding(t: &Tensor) -> EmbeddingVector {
    EmbeddingVector(t.row(0).to_vec())
}

pub fn encode_text(seq: &EncodedText, params: &ModelParams) -> Result<EmbeddingVector> {
    let mut g = Eager;
    let nodes = params.bind(&mut g);
    let out = text_forward(&mut g, &[seq], &nodes)?;
    Ok(row_embedding(&out))
}

pub fn encode_image(features: &[f64], params: &ModelParams, activation: ImageActivation) -> Result<EmbeddingVector> {
    let mut g = Eager;
    let nodes = params.bind(&mut g);
    let f = Tensor::row_vector(features.to_vec());
    let out = image_forward(&mut g, &f, &nodes, activation)?;
    Ok(row_embedding(&out))
}

/// Rows per eager chunk when embedding a whole split.
const CHUNK: usize = 512;

/// Embeds many sequences without recording; row `i` is sequence `i`.
pub fn embed_texts(seqs: &[EncodedText], params: &ModelParams) -> Result<Tensor> {
    let j = params.dims().joint_dim;
    let mut g = Eager;
    let nodes = params.bind(&mut g);
    let mut data = Vec::with_capacity(seqs.len() * j);
    for chunk in seqs.chunks(CHUNK) {
        let refs: Vec<&EncodedText> = chunk.iter().collect();
        data.extend(text_forward(&mut g, &refs, &nodes)?.into_data());
    }
    Tensor::matrix(seqs.len(), j, data)
}

/// Embeds the rows of a `N × f` feature matrix.
pub fn embed_images(features: &Tensor, params: &ModelParams, activation: ImageActivation) -> Result<Tensor> {
    let mut g = Eager;
    let nodes = params.bind(&mut g);
    image_forward(&mut g, features, &nodes, activation)
}
