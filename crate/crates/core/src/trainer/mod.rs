//! Minibatch training: shuffled batches, Adam updates, and the plateau
//! schedule, plus grid search over run settings.

mod adam;
mod grid;
mod schedule;

use std::fmt;
use std::ops::ControlFlow;
use std::str::FromStr;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use grid::{grid_points, grid_search, select_best, GridAxis, GridReport, GridResult};
pub use schedule::{schedule_update, ScheduleAction, ScheduleConfig, ScheduleState};

use crate::dataio::{DatasetRecord, FeatureTable};
use crate::encoders::{image_forward, text_forward, ImageActivation, ModelDims, ModelParams};
use crate::error::{Error, Result};
use crate::evaluator::{evaluate, EvalSet};
use crate::numcore::{Graph, Tape, Tensor};
use crate::objective::{batch_loss, LossConfig};
use crate::textpipe::{concat_captions, encode, normalize, EncodedText, Vocabulary};

/// How a record's captions become training texts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CaptionMode {
    /// One caption per record per epoch, cycling through them by epoch.
    #[default]
    Individual,
    /// All captions joined into one long description.
    Concatenated,
}

impl FromStr for CaptionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "individual" => Ok(CaptionMode::Individual),
            "concatenated" => Ok(CaptionMode::Concatenated),
            _ => Err(Error::Config(format!("unknown caption mode `{s}`"))),
        }
    }
}

impl fmt::Display for CaptionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(match self {
            CaptionMode::Individual => "individual",
            CaptionMode::Concatenated => "concatenated",
        })
    }
}

/// Normalizes and encodes one raw caption.
pub fn encode_caption(caption: &str, vocab: &Vocabulary, seq_len: usize) -> Result<EncodedText> {
    encode(&normalize(caption), vocab, seq_len)
}

/// Training split with features gathered into one matrix and captions encoded.
#[derive(Debug, Clone)]
pub struct TrainingData {
    /// `N × f`, row `r` belongs to record `r`.
    pub features: Tensor,
    /// Encoded texts per record.
    pub texts: Vec<Vec<EncodedText>>,
    pub vocab_size: usize,
}

impl TrainingData {
    pub fn prepare(
        records: &[DatasetRecord],
        features: &FeatureTable,
        vocab: &Vocabulary,
        seq_len: usize,
        mode: CaptionMode,
    ) -> Result<Self> {
        let feats = feature_matrix(records, features)?;
        let texts = records
            .iter()
            .map(|r| match mode {
                CaptionMode::Individual => r
                    .captions
                    .iter()
                    .map(|c| encode_caption(c, vocab, seq_len))
                    .collect(),
                CaptionMode::Concatenated => Ok(vec![encode_caption(&concat_captions(&r.captions), vocab, seq_len)?]),
            })
            .collect::<Result<_>>()?;
        Ok(TrainingData {
            features: feats,
            texts,
            vocab_size: vocab.len(),
        })
    }

    pub fn len(&self) -> usize {
        self.texts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.texts.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    /// Text used for record `r` during `epoch`.
    pub fn text_for(&self, r: usize, epoch: u64) -> &EncodedText {
        let t = &self.texts[r];
        &t[(epoch % t.len() as u64) as usize]
    }

    /// All texts of the split as an evaluation set.
    pub fn eval_set(&self) -> EvalSet {
        let mut captions = Vec::new();
        let mut owner = Vec::new();
        for (r, texts) in self.texts.iter().enumerate() {
            captions.extend(texts.iter().cloned());
            owner.extend(std::iter::repeat_n(r, texts.len()));
        }
        EvalSet {
            features: self.features.clone(),
            captions,
            owner,
        }
    }
}

/// Gathers the records' feature vectors into a `N × f` matrix.
pub fn feature_matrix(records: &[DatasetRecord], features: &FeatureTable) -> Result<Tensor> {
    let f = features.dim();
    let mut data = Vec::with_capacity(records.len() * f);
    for r in records {
        let v = features
            .get(&r.feature_ref)
            .ok_or_else(|| Error::Invalid(format!("record `{}`: unknown feature `{}`", r.id, r.feature_ref)))?;
        data.extend(v.iter().map(|&x| x as f64));
    }
    Tensor::matrix(records.len(), f, data)
}

/// Builds an evaluation set with every caption of every record.
pub fn eval_set(records: &[DatasetRecord], features: &FeatureTable, vocab: &Vocabulary, seq_len: usize) -> Result<EvalSet> {
    let data = TrainingData::prepare(records, features, vocab, seq_len, CaptionMode::Individual)?;
    Ok(data.eval_set())
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub seed: u64,
    pub max_epochs: u64,
    pub max_grow_cycles: u32,
    pub reset_moments_on_grow: bool,
    /// When false, logged `wall_ms` is 0 so that logs are reproducible.
    pub record_wall_time: bool,
    pub activation: ImageActivation,
    pub loss: LossConfig,
    pub adam: AdamConfig,
    pub schedule: ScheduleConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            seed: 0,
            max_epochs: 200,
            max_grow_cycles: 3,
            reset_moments_on_grow: false,
            record_wall_time: true,
            activation: ImageActivation::Relu,
            loss: LossConfig::default(),
            adam: AdamConfig::default(),
            schedule: ScheduleConfig::default(),
        }
    }
}

/// Validation R@1 in both directions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ValScores {
    pub r1_sent: f64,
    pub r1_img: f64,
}

/// Everything needed to continue a run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub params: ModelParams,
    pub adam: AdamState,
    pub schedule: ScheduleState,
    /// Completed epochs.
    pub epoch: u64,
    pub last_scores: Option<ValScores>,
}

impl TrainState {
    pub fn new(params: ModelParams, cfg: &TrainConfig) -> Self {
        let adam = AdamState::new(&params, cfg.adam);
        TrainState {
            params,
            adam,
            schedule: ScheduleState::new(&cfg.schedule),
            epoch: 0,
            last_scores: None,
        }
    }

    /// Fresh parameters drawn from the run seed. A pretrained embedding table
    /// replaces the random one when given.
    pub fn init(dims: ModelDims, embedding: Option<Tensor>, cfg: &TrainConfig) -> Result<Self> {
        let mut params = ModelParams::init(dims, &mut param_rng(cfg.seed))?;
        if let Some(e) = embedding {
            if e.shape() != params.embedding.shape() {
                return Err(Error::shape("embedding init", e.shape(), params.embedding.shape()));
            }
            params.embedding = e;
        }
        Ok(Self::new(params, cfg))
    }
}

/// RNG for parameter initialization.
pub fn param_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochLog {
    pub epoch: u64,
    pub loss: f64,
    pub lr: f64,
    pub batch_size: usize,
    pub val_r1_sent: Option<f64>,
    pub val_r1_img: Option<f64>,
    pub wall_ms: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    MaxEpochs,
    GrowCycles,
    Observer,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub log: Vec<EpochLog>,
    pub stop: StopReason,
}

/// Loss and parameter gradients for one batch.
pub fn batch_gradients(
    params: &ModelParams,
    features: &Tensor,
    texts: &[&EncodedText],
    loss: &LossConfig,
    activation: ImageActivation,
) -> Result<(f64, ModelParams)> {
    let mut tape = Tape::new();
    let vars = params.bind(&mut tape);
    let f = tape.constant(features.clone());
    let txt = text_forward(&mut tape, texts, &vars)?;
    let img = image_forward(&mut tape, &f, &vars, activation)?;
    let l = batch_loss(&mut tape, &txt, &img, loss)?;
    let value = tape.value(&l).item();
    if !value.is_finite() {
        return Err(Error::NonFinite { param: "loss".into() });
    }
    let mut grads = tape.backward(l)?;
    Ok((value, vars.map(|&v| grads.take(v))))
}

/// Visiting order of the records in `epoch`.
pub fn epoch_order(n: usize, seed: u64, epoch: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch + 1);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    order
}

/// One pass over the data. Returns the mean per-pair loss.
pub fn train_epoch(state: &mut TrainState, data: &TrainingData, cfg: &TrainConfig) -> Result<f64> {
    let order = epoch_order(data.len(), cfg.seed, state.epoch);
    let f = data.feature_dim();
    let mut total = 0.0;
    let mut pairs = 0usize;
    for chunk in order.chunks(state.schedule.batch_size) {
        if chunk.len() < 2 {
            continue;
        }
        let mut feats = Vec::with_capacity(chunk.len() * f);
        for &r in chunk {
            feats.extend_from_slice(data.features.row(r));
        }
        let feats = Tensor::matrix(chunk.len(), f, feats)?;
        let texts: Vec<&EncodedText> = chunk.iter().map(|&r| data.text_for(r, state.epoch)).collect();
        let (loss, grads) = batch_gradients(&state.params, &feats, &texts, &cfg.loss, cfg.activation)?;
        adam_step(&mut state.params, &grads, &mut state.adam, state.schedule.lr)?;
        total += loss;
        pairs += chunk.len();
    }
    Ok(total / pairs as f64)
}

/// Validation R@1 for the current parameters.
pub fn score(params: &ModelParams, activation: ImageActivation, val: &EvalSet) -> Result<ValScores> {
    let (s, i) = evaluate(params, activation, val)?;
    Ok(ValScores {
        r1_sent: s.r1,
        r1_img: i.r1,
    })
}

/// Trains until `max_epochs` total epochs, `max_grow_cycles` batch growths,
/// or the observer breaks. `observer` sees each epoch after it is logged.
pub fn train(
    state: &mut TrainState,
    data: &TrainingData,
    val: Option<&EvalSet>,
    cfg: &TrainConfig,
    mut observer: impl FnMut(&EpochLog, &TrainState) -> ControlFlow<()>,
) -> Result<TrainReport> {
    cfg.loss.validate()?;
    cfg.schedule.validate()?;
    if data.len() < 2 {
        return Err(Error::Invalid(format!(
            "training needs at least 2 records to form a batch, got {}",
            data.len()
        )));
    }
    state.params.check_dims(ModelDims {
        vocab_size: data.vocab_size,
        feature_dim: data.feature_dim(),
        ..state.params.dims()
    })?;

    let mut log = Vec::new();
    let stop = loop {
        if state.schedule.grow_cycles >= cfg.max_grow_cycles {
            break StopReason::GrowCycles;
        }
        if state.epoch >= cfg.max_epochs {
            break StopReason::MaxEpochs;
        }
        let started = Instant::now();
        let lr = state.schedule.lr;
        let batch_size = state.schedule.batch_size;
        let loss = train_epoch(state, data, cfg)?;
        state.epoch += 1;
        if schedule_update(&mut state.schedule, &cfg.schedule, loss) == ScheduleAction::GrowBatchResetLr
            && cfg.reset_moments_on_grow
        {
            state.adam.reset_moments();
        }
        state.last_scores = val.map(|v| score(&state.params, cfg.activation, v)).transpose()?;
        let entry = EpochLog {
            epoch: state.epoch,
            loss,
            lr,
            batch_size,
            val_r1_sent: state.last_scores.map(|s| s.r1_sent),
            val_r1_img: state.last_scores.map(|s| s.r1_img),
            wall_ms: if cfg.record_wall_time {
                started.elapsed().as_millis() as u64
            } else {
                0
            },
        };
        let flow = observer(&entry, state);
        log.push(entry);
        if flow.is_break() {
            break StopReason::Observer;
        }
    };
    Ok(TrainReport { log, stop })
}
