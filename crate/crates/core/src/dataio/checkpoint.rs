//! Checkpoint container.
//!
//! ```text
//! version u32 | tensor count u32
//! count × ( name_len u16 | name UTF-8 | rank u8 | rank × extent u32 | data f64 )
//! step u64 | lr f64 | batch_size u32 | phase u8
//! ```
//!
//! All numbers little-endian.

use std::path::Path;

use crate::encoders::{ModelDims, ModelParams};
use crate::error::{Error, Result};
use crate::numcore::Tensor;
use crate::trainer::{AdamConfig, AdamState, ScheduleState, TrainState, ValScores};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Counters {
    pub step: u64,
    pub lr: f64,
    pub batch_size: u32,
    pub phase: u8,
}

/// Named tensors plus scalar counters, the raw content of a checkpoint file.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub tensors: Vec<(String, Tensor)>,
    pub counters: Counters,
}

impl Checkpoint {
    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    fn require(&self, name: &str, path: &Path) -> Result<&Tensor> {
        self.get(name)
            .ok_or_else(|| Error::format(path, "manifest", format!("missing tensor `{name}`")))
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for (name, t) in &self.tensors {
            if name.len() > u16::MAX as usize || t.rank() > u8::MAX as usize {
                return Err(Error::Invalid(format!("tensor `{name}` cannot be stored")));
            }
            out.extend_from_slice(&(name.len() as u16).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.push(t.rank() as u8);
            for &e in t.shape() {
                let e = u32::try_from(e).map_err(|_| Error::Invalid(format!("tensor `{name}` too large")))?;
                out.extend_from_slice(&e.to_le_bytes());
            }
            for x in t.data() {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        let c = &self.counters;
        out.extend_from_slice(&c.step.to_le_bytes());
        out.extend_from_slice(&c.lr.to_le_bytes());
        out.extend_from_slice(&c.batch_size.to_le_bytes());
        out.push(c.phase);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0, path };
        let version = u32::from_le_bytes(r.array()?);
        if version != CHECKPOINT_VERSION {
            return Err(Error::format(
                path,
                "offset 0",
                format!("checkpoint version {version}, expected {CHECKPOINT_VERSION}"),
            ));
        }
        let count = u32::from_le_bytes(r.array()?);
        let mut tensors = Vec::new();
        for _ in 0..count {
            let start = r.pos;
            let len = u16::from_le_bytes(r.array()?) as usize;
            let name = std::str::from_utf8(r.take(len)?)
                .map_err(|_| Error::format(path, format!("offset {start}"), "tensor name is not UTF-8"))?
                .to_owned();
            let rank = r.array::<1>()?[0] as usize;
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                shape.push(u32::from_le_bytes(r.array()?) as usize);
            }
            let n: usize = shape.iter().product();
            let raw = r.take(n.checked_mul(8).ok_or_else(|| Error::format(path, start, "tensor too large"))?)?;
            let data = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            let t = Tensor::new(shape, data).map_err(|e| Error::format(path, format!("offset {start}"), e.to_string()))?;
            tensors.push((name, t));
        }
        let counters = Counters {
            step: u64::from_le_bytes(r.array()?),
            lr: f64::from_le_bytes(r.array()?),
            batch_size: u32::from_le_bytes(r.array()?),
            phase: r.array::<1>()?[0],
        };
        if r.pos != bytes.len() {
            return Err(Error::format(path, format!("offset {}", r.pos), "trailing bytes"));
        }
        Ok(Checkpoint { tensors, counters })
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, path)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::format(
                self.path,
                format!("offset {}", self.pos),
                format!("truncated: need {n} bytes, {} left", self.bytes.len() - self.pos),
            ));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().unwrap())
    }
}

const ADAM_HYPER: &str = "adam.hyper";
const SCHEDULE: &str = "schedule.state";
const SCORES: &str = "metrics.last";

/// Packs a training state into the container.
pub fn checkpoint_of(state: &TrainState) -> Result<Checkpoint> {
    let mut tensors: Vec<(String, Tensor)> = Vec::new();
    for (name, t) in state.params.iter() {
        tensors.push((name.to_owned(), t.clone()));
    }
    for (name, t) in state.adam.m.iter() {
        tensors.push((format!("adam.m.{name}"), t.clone()));
    }
    for (name, t) in state.adam.v.iter() {
        tensors.push((format!("adam.v.{name}"), t.clone()));
    }
    let a = state.adam.config;
    tensors.push((ADAM_HYPER.into(), Tensor::row_vector(vec![a.beta1, a.beta2, a.eps])));
    let s = &state.schedule;
    tensors.push((
        SCHEDULE.into(),
        Tensor::row_vector(vec![s.best_loss, s.epochs_since_improve as f64, state.epoch as f64]),
    ));
    if let Some(sc) = state.last_scores {
        tensors.push((SCORES.into(), Tensor::row_vector(vec![sc.r1_sent, sc.r1_img])));
    }
    let counters = Counters {
        step: state.adam.t,
        lr: s.lr,
        batch_size: u32::try_from(s.batch_size).map_err(|_| Error::Invalid("batch size too large".into()))?,
        phase: u8::try_from(s.grow_cycles).map_err(|_| Error::Invalid("too many grow cycles".into()))?,
    };
    Ok(Checkpoint { tensors, counters })
}

pub fn save_checkpoint(state: &TrainState, path: impl AsRef<Path>) -> Result<()> {
    checkpoint_of(state)?.write(path)
}

/// Unpacks a container. When `expected` is given, every parameter shape must
/// match it.
pub fn state_from_checkpoint(ck: &Checkpoint, expected: Option<ModelDims>, path: &Path) -> Result<TrainState> {
    let take = |prefix: &str| -> Result<ModelParams> {
        let ts = ModelParams::<()>::names()
            .iter()
            .map(|n| ck.require(&format!("{prefix}{n}"), path).cloned())
            .collect::<Result<Vec<_>>>()?;
        Ok(ModelParams::from_vec(ts).expect("tensor count"))
    };
    let params = take("")?;
    let dims = expected.unwrap_or_else(|| params.dims());
    let mismatch = |e: Error| Error::Invalid(format!("{}: checkpoint does not fit the configured model: {e}", path.display()));
    params.check_dims(dims).map_err(mismatch)?;
    let m = take("adam.m.")?;
    let v = take("adam.v.")?;
    m.check_dims(dims).map_err(mismatch)?;
    v.check_dims(dims).map_err(mismatch)?;

    let fixed = |name: &str, n: usize| -> Result<Vec<f64>> {
        let t = ck.require(name, path)?;
        if t.numel() != n {
            return Err(Error::format(path, "manifest", format!("`{name}` should hold {n} values")));
        }
        Ok(t.data().to_vec())
    };
    let h = fixed(ADAM_HYPER, 3)?;
    let sch = fixed(SCHEDULE, 3)?;
    let last_scores = match ck.get(SCORES) {
        Some(_) => {
            let s = fixed(SCORES, 2)?;
            Some(ValScores {
                r1_sent: s[0],
                r1_img: s[1],
            })
        }
        None => None,
    };
    let c = ck.counters;
    Ok(TrainState {
        params,
        adam: AdamState {
            m,
            v,
            t: c.step,
            config: AdamConfig {
                beta1: h[0],
                beta2: h[1],
                eps: h[2],
            },
        },
        schedule: ScheduleState {
            lr: c.lr,
            batch_size: c.batch_size as usize,
            best_loss: sch[0],
            epochs_since_improve: sch[1] as u32,
            grow_cycles: c.phase as u32,
        },
        epoch: sch[2] as u64,
        last_scores,
    })
}

pub fn load_checkpoint(path: impl AsRef<Path>, expected: Option<ModelDims>) -> Result<TrainState> {
    let path = path.as_ref();
    state_from_checkpoint(&Checkpoint::read(path)?, expected, path)
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::trainer::TrainConfig;

    fn dims(joint_dim: usize) -> ModelDims {
        ModelDims {
            vocab_size: 5,
            embed_dim: 3,
            joint_dim,
            feature_dim: 4,
        }
    }

    fn state(joint_dim: usize) -> TrainState {
        let cfg = TrainConfig::default();
        let p = ModelParams::init(dims(joint_dim), &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let mut s = TrainState::new(p, &cfg);
        s.adam.t = 17;
        s.adam.m.image.w1.data_mut()[2] = -1.0 / 3.0;
        s.adam.v.embedding.data_mut()[5] = 1e-300;
        s.schedule.lr = 0.1 / 1024.0;
        s.schedule.batch_size = 64;
        s.schedule.grow_cycles = 2;
        s.schedule.best_loss = 0.123456789;
        s.schedule.epochs_since_improve = 2;
        s.epoch = 41;
        s.last_scores = Some(ValScores {
            r1_sent: 12.5,
            r1_img: 100.0 / 3.0,
        });
        s
    }

    #[test]
    fn round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.ckpt");
        let s = state(16);
        save_checkpoint(&s, &path).unwrap();
        let back = load_checkpoint(&path, Some(dims(16))).unwrap();
        assert_eq!(back, s);
        let bytes = std::fs::read(&path).unwrap();
        save_checkpoint(&back, &path).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), bytes);
    }

    #[test]
    fn infinite_best_loss_survives() {
        let mut s = state(4);
        s.schedule.best_loss = f64::INFINITY;
        s.last_scores = None;
        let ck = checkpoint_of(&s).unwrap();
        let back = Checkpoint::from_bytes(&ck.to_bytes().unwrap(), Path::new("c")).unwrap();
        assert_eq!(state_from_checkpoint(&back, None, Path::new("c")).unwrap(), s);
    }

    #[test]
    fn joint_dim_mismatch_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.ckpt");
        save_checkpoint(&state(16), &path).unwrap();
        let err = load_checkpoint(&path, Some(dims(32))).unwrap_err().to_string();
        assert!(err.contains("does not fit"), "{err}");
    }

    #[test]
    fn version_and_truncation_rejected() {
        let bytes = checkpoint_of(&state(2)).unwrap().to_bytes().unwrap();
        let mut bad = bytes.clone();
        bad[0] = 9;
        let err = Checkpoint::from_bytes(&bad, Path::new("c")).unwrap_err().to_string();
        assert!(err.contains("version 9"), "{err}");
        let err = Checkpoint::from_bytes(&bytes[..bytes.len() - 3], Path::new("c"))
            .unwrap_err()
            .to_string();
        assert!(err.contains("truncated"), "{err}");
    }

    #[test]
    fn counters_follow_tensors() {
        let ck = Checkpoint {
            tensors: vec![("x".into(), Tensor::scalar(2.5))],
            counters: Counters {
                step: 3,
                lr: 0.5,
                batch_size: 16,
                phase: 1,
            },
        };
        let bytes = ck.to_bytes().unwrap();
        let want: Vec<u8> = [
            &1u32.to_le_bytes()[..],
            &1u32.to_le_bytes(),
            &1u16.to_le_bytes(),
            b"x",
            &[1],
            &1u32.to_le_bytes(),
            &2.5f64.to_le_bytes(),
            &3u64.to_le_bytes(),
            &0.5f64.to_le_bytes(),
            &16u32.to_le_bytes(),
            &[1],
        ]
        .concat();
        assert_eq!(bytes, want);
    }
}
