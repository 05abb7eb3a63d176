//! The `xmodal` command line.
//!
//! Exit codes: 0 on success, 2 for input or configuration errors, 3 when
//! training aborts on a non-finite value.

use std::ffi::OsString;
use std::io::Write;
use std::ops::ControlFlow;
use std::path::{Path, PathBuf};

use clap::{ArgGroup, Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{RunConfig, SEED_ENV};
use crate::dataio::{load_checkpoint, load_dataset, read_dataset, read_feature_file, save_checkpoint, WordVectorTable};
use crate::encoders::{embed_images, embed_texts, encode_image, encode_text, ModelParams};
use crate::error::{Error, Result};
use crate::evaluator::{evaluate, evaluate_protocol, Protocol};
use crate::numcore::Tensor;
use crate::objective::similarity;
use crate::textpipe::{build_vocab, normalize, Vocabulary};
use crate::trainer::{eval_set, encode_caption, train, TrainState, TrainingData};

#[derive(Debug, Parser)]
#[command(name = "xmodal", version, about = "Cross-modal image/text retrieval with order embeddings")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build the vocabulary from a dataset's captions.
    BuildVocab(BuildVocabArgs),
    /// Train a model described by a config file.
    Train(TrainArgs),
    /// Evaluate a checkpoint under the 1k or 5k protocol.
    Eval(EvalArgs),
    /// Rank a gallery for one text or image query.
    Query(QueryArgs),
}

#[derive(Debug, Args)]
struct BuildVocabArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = crate::textpipe::DEFAULT_MIN_FREQ)]
    min_freq: u64,
    /// Word-vector file to report coverage against.
    #[arg(long)]
    glove: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    resume: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long, value_parser = ["1k", "5k"])]
    protocol: String,
    /// Config naming the vocabulary, features and model settings.
    #[arg(long)]
    config: PathBuf,
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("query").required(true).args(["text", "image_id"])))]
struct QueryArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    config: PathBuf,
    /// Caption text; ranks images.
    #[arg(long)]
    text: Option<String>,
    /// Image id in the feature table; ranks captions.
    #[arg(long)]
    image_id: Option<String>,
    #[arg(long, default_value_t = 10)]
    top: usize,
    /// Dataset supplying the caption gallery (defaults to the config's
    /// training data).
    #[arg(long)]
    dataset: Option<PathBuf>,
}

/// Parses `args` (program name first), runs the command, and returns the
/// process exit code. Output goes to `out`, diagnostics to `err`.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = if e.use_stderr() {
                write!(err, "{}", e.render())
            } else {
                write!(out, "{}", e.render())
            };
            return code;
        }
    };
    let result = match cli.command {
        Command::BuildVocab(a) => build_vocab_cmd(a, out, err),
        Command::Train(a) => train_cmd(a, out, err),
        Command::Eval(a) => eval_cmd(a, out),
        Command::Query(a) => query_cmd(a, out),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

fn io_err(e: std::io::Error) -> Error {
    Error::io("<stdout>", e)
}

fn required<'a>(p: &'a Option<PathBuf>, key: &str) -> Result<&'a Path> {
    let p = p
        .as_deref()
        .ok_or_else(|| Error::Config(format!("`{key}` must be set")))?;
    if !p.exists() {
        return Err(Error::Config(format!("`{key}` = {} does not exist", p.display())));
    }
    Ok(p)
}

fn load_config(path: &Path) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(path)?;
    cfg.override_seed(std::env::var(SEED_ENV).ok().as_deref())?;
    Ok(cfg)
}

fn build_vocab_cmd(a: BuildVocabArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<()> {
    let records = read_dataset(&a.dataset)?;
    let corpus: Vec<Vec<String>> = records.iter().flat_map(|r| r.captions.iter().map(|c| normalize(c))).collect();
    let vocab = build_vocab(&corpus, a.min_freq)?;
    if vocab.is_empty() {
        writeln!(err, "warning: no token reaches min-freq {}; vocabulary is empty", a.min_freq).map_err(io_err)?;
    }
    vocab.write_tsv(&a.out)?;
    let mut line = format!("d={} tokens", vocab.len());
    if let Some(g) = &a.glove {
        let table = WordVectorTable::read(g, |t| vocab.index_of(t).is_some())?;
        let coverage = if vocab.is_empty() { 0.0 } else { table.len() as f64 / vocab.len() as f64 };
        line.push_str(&format!(", coverage={coverage:.4} vs {} (dim {})", g.display(), table.dim()));
    }
    writeln!(out, "{line}").map_err(io_err)
}

struct Inputs {
    vocab: Vocabulary,
    features: crate::dataio::FeatureTable,
}

fn load_inputs(cfg: &RunConfig) -> Result<Inputs> {
    let vocab = Vocabulary::read_tsv(required(&cfg.paths.vocab, "vocab")?)?;
    let features = read_feature_file(required(&cfg.paths.features, "features")?)?;
    Ok(Inputs { vocab, features })
}

fn train_cmd(a: TrainArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<()> {
    let cfg = load_config(&a.config)?;
    let inputs = load_inputs(&cfg)?;
    let train_path = required(&cfg.paths.train_data, "train_data")?;
    let ckpt_path = cfg
        .paths
        .checkpoint
        .clone()
        .ok_or_else(|| Error::Config("`checkpoint` must be set".into()))?;
    let records = load_dataset(train_path, &inputs.features)?;
    let data = TrainingData::prepare(&records, &inputs.features, &inputs.vocab, cfg.seq_len, cfg.caption_mode)?;
    let val = match &cfg.paths.val_data {
        Some(_) => {
            let p = required(&cfg.paths.val_data, "val_data")?;
            let recs = load_dataset(p, &inputs.features)?;
            Some(eval_set(&recs, &inputs.features, &inputs.vocab, cfg.seq_len)?)
        }
        None => None,
    };
    let tc = cfg.train_config();
    let dims = cfg.model_dims(inputs.vocab.len(), inputs.features.dim());

    let mut state = match &a.resume {
        Some(p) => load_checkpoint(p, Some(dims))?,
        None => {
            let embedding = match &cfg.paths.word_vectors {
                Some(_) => {
                    let p = required(&cfg.paths.word_vectors, "word_vectors")?;
                    let table = WordVectorTable::read(p, |t| inputs.vocab.index_of(t).is_some())?;
                    if table.dim() != cfg.embed_dim {
                        return Err(Error::Config(format!(
                            "word vectors have dim {}, embed_dim is {}",
                            table.dim(),
                            cfg.embed_dim
                        )));
                    }
                    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed());
                    rng.set_stream(u64::MAX);
                    let (m, coverage) = table.embedding_matrix(&inputs.vocab, &mut rng);
                    writeln!(err, "word vectors cover {:.2}% of the vocabulary", 100.0 * coverage).map_err(io_err)?;
                    Some(m)
                }
                None => None,
            };
            TrainState::init(dims, embedding, &tc)?
        }
    };

    let mut log = match &cfg.paths.log {
        Some(p) => Some(std::fs::File::create(p).map_err(|e| Error::io(p, e))?),
        None => None,
    };
    if let (Some(f), Some(p)) = (log.as_mut(), &cfg.paths.log) {
        let mut header = serde_json::Map::new();
        for (k, v) in cfg.entries() {
            header.insert(k.to_owned(), serde_json::Value::String(v));
        }
        if let Some(r) = &a.resume {
            header.insert("resume".into(), serde_json::Value::String(r.display().to_string()));
        }
        writeln!(f, "{}", serde_json::json!({ "config": header })).map_err(|e| Error::io(p, e))?;
    }
    let mut log_err = None;
    let report = train(&mut state, &data, val.as_ref(), &tc, |entry, _| {
        if let (Some(f), Some(p)) = (log.as_mut(), &cfg.paths.log) {
            let line = serde_json::to_string(entry).expect("serializable");
            if let Err(e) = writeln!(f, "{line}") {
                log_err = Some(Error::io(p, e));
                return ControlFlow::Break(());
            }
        }
        ControlFlow::Continue(())
    })?;
    if let Some(e) = log_err {
        return Err(e);
    }
    save_checkpoint(&state, &ckpt_path)?;

    writeln!(
        out,
        "epochs={} stop={:?} lr={} batch_size={} checkpoint={}",
        state.epoch,
        report.stop,
        state.schedule.lr,
        state.schedule.batch_size,
        ckpt_path.display()
    )
    .map_err(io_err)?;
    let (label, set) = match &val {
        Some(v) => ("validation", v.clone()),
        None => ("training", data.eval_set()),
    };
    let (s, i) = evaluate(&state.params, tc.activation, &set)?;
    writeln!(
        out,
        "{label}: sentence r1={:.2} r5={:.2} r10={:.2} medr={} | image r1={:.2} r5={:.2} r10={:.2} medr={}",
        s.r1, s.r5, s.r10, s.medr, i.r1, i.r5, i.r10, i.medr
    )
    .map_err(io_err)
}

fn load_model(checkpoint: &Path, cfg: &RunConfig, inputs: &Inputs) -> Result<ModelParams> {
    let dims = cfg.model_dims(inputs.vocab.len(), inputs.features.dim());
    Ok(load_checkpoint(checkpoint, Some(dims))?.params)
}

fn eval_cmd(a: EvalArgs, out: &mut dyn Write) -> Result<()> {
    let cfg = load_config(&a.config)?;
    let inputs = load_inputs(&cfg)?;
    let params = load_model(&a.checkpoint, &cfg, &inputs)?;
    let records = load_dataset(&a.dataset, &inputs.features)?;
    let set = eval_set(&records, &inputs.features, &inputs.vocab, cfg.seq_len)?;
    let protocol: Protocol = a.protocol.parse()?;
    let report = evaluate_protocol(&params, cfg.train.activation, &set, protocol)?;
    let json = serde_json::to_string_pretty(&report.to_json()).expect("serializable");
    writeln!(out, "{json}\n\n{}", report.table()).map_err(io_err)
}

/// Gallery order for `scores`: descending, ties by ascending index.
pub fn ranked(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order
}

fn query_cmd(a: QueryArgs, out: &mut dyn Write) -> Result<()> {
    let cfg = load_config(&a.config)?;
    let inputs = load_inputs(&cfg)?;
    let params = load_model(&a.checkpoint, &cfg, &inputs)?;
    let activation = cfg.train.activation;

    let (ids, labels, scores) = if let Some(text) = &a.text {
        let q = encode_text(&encode_caption(text, &inputs.vocab, cfg.seq_len)?, &params)?;
        let ids: Vec<String> = inputs.features.iter().map(|(id, _)| id.to_owned()).collect();
        let feats: Vec<f64> = inputs.features.iter().flat_map(|(_, v)| v.iter().map(|&x| x as f64)).collect();
        let feats = Tensor::matrix(ids.len(), inputs.features.dim(), feats)?;
        let gallery = embed_images(&feats, &params, activation)?;
        let scores = (0..gallery.rows())
            .map(|k| similarity(&q, gallery.row(k)))
            .collect::<Result<Vec<_>>>()?;
        (ids, None, scores)
    } else {
        let id = a.image_id.as_deref().expect("clap enforces one query");
        let f = inputs
            .features
            .get(id)
            .ok_or_else(|| Error::Invalid(format!("unknown image id `{id}`")))?;
        let q = encode_image(&f.iter().map(|&x| x as f64).collect::<Vec<_>>(), &params, activation)?;
        let path = match &a.dataset {
            Some(p) => p.as_path(),
            None => required(&cfg.paths.train_data, "train_data")?,
        };
        let records = load_dataset(path, &inputs.features)?;
        let mut ids = Vec::new();
        let mut texts = Vec::new();
        let mut seqs = Vec::new();
        for r in &records {
            for (k, c) in r.captions.iter().enumerate() {
                ids.push(format!("{}#{k}", r.id));
                texts.push(c.clone());
                seqs.push(encode_caption(c, &inputs.vocab, cfg.seq_len)?);
            }
        }
        let gallery = embed_texts(&seqs, &params)?;
        let scores = (0..gallery.rows())
            .map(|c| similarity(gallery.row(c), &q))
            .collect::<Result<Vec<_>>>()?;
        (ids, Some(texts), scores)
    };

    for (rank, &k) in ranked(&scores).iter().take(a.top).enumerate() {
        let mut line = format!("{}\t{}\t{:.6}", rank + 1, ids[k], scores[k]);
        if let Some(l) = &labels {
            line.push('\t');
            line.push_str(&l[k]);
        }
        writeln!(out, "{line}").map_err(io_err)?;
    }
    Ok(())
}
