use crate::encoders::ModelParams;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates, laid out like the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: ModelParams,
    pub v: ModelParams,
    /// Number of updates applied so far.
    pub t: u64,
    pub config: AdamConfig,
}

impl AdamState {
    pub fn new(params: &ModelParams, config: AdamConfig) -> Self {
        let zeros = params.map(|t| t.map(|_| 0.0));
        AdamState {
            m: zeros.clone(),
            v: zeros,
            t: 0,
            config,
        }
    }

    /// Zeroes both moments and the step count.
    pub fn reset_moments(&mut self) {
        for (_, t) in self.m.iter_mut().chain(self.v.iter_mut()) {
            t.data_mut().fill(0.0);
        }
        self.t = 0;
    }
}

/// One bias-corrected Adam update. Nothing is modified if any gradient is
/// non-finite; the error names the first offending parameter.
pub fn adam_step(params: &mut ModelParams, grads: &ModelParams, state: &mut AdamState, lr: f64) -> Result<()> {
    if !(lr >= 0.0 && lr.is_finite()) {
        return Err(Error::Invalid(format!("learning rate must be finite and non-negative, got {lr}")));
    }
    for ((name, p), (_, g)) in params.iter().zip(grads.iter()) {
        if p.shape() != g.shape() {
            return Err(Error::shape("adam_step", p.shape(), g.shape()));
        }
        if !g.is_finite() {
            return Err(Error::NonFinite { param: name.to_owned() });
        }
    }

    let AdamConfig { beta1, beta2, eps } = state.config;
    state.t += 1;
    let t = state.t as i32;
    let c1 = 1.0 - beta1.powi(t);
    let c2 = 1.0 - beta2.powi(t);
    let tensors = params
        .iter_mut()
        .zip(grads.iter())
        .zip(state.m.iter_mut().zip(state.v.iter_mut()));
    for (((_, p), (_, g)), ((_, m), (_, v))) in tensors {
        let iter = p
            .data_mut()
            .iter_mut()
            .zip(g.data())
            .zip(m.data_mut().iter_mut().zip(v.data_mut().iter_mut()));
        for ((theta, &gi), (mi, vi)) in iter {
            *mi = beta1 * *mi + (1.0 - beta1) * gi;
            *vi = beta2 * *vi + (1.0 - beta2) * gi * gi;
            let m_hat = *mi / c1;
            let v_hat = *vi / c2;
            *theta -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::encoders::ModelDims;

    fn params() -> ModelParams {
        let dims = ModelDims {
            vocab_size: 3,
            embed_dim: 2,
            joint_dim: 2,
            feature_dim: 3,
        };
        ModelParams::init(dims, &mut ChaCha8Rng::seed_from_u64(4)).unwrap()
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut p = params();
        let before = p.clone();
        let g = p.map(|t| t.map(|_| 0.0));
        let mut s = AdamState::new(&p, AdamConfig::default());
        adam_step(&mut p, &g, &mut s, 0.1).unwrap();
        assert_eq!(p, before);
        assert_eq!(s.t, 1);
    }

    #[test]
    fn first_step_moves_by_lr_against_sign() {
        let mut p = params();
        let before = p.clone();
        let g = p.map(|t| t.map(|x| if x >= 0.0 { 0.3 } else { -2.0 }));
        let mut s = AdamState::new(&p, AdamConfig::default());
        adam_step(&mut p, &g, &mut s, 0.1).unwrap();
        for (((_, a), (_, b)), (_, gi)) in p.iter().zip(before.iter()).zip(g.iter()) {
            for ((x, y), gv) in a.data().iter().zip(b.data()).zip(gi.data()) {
                let step = x - y;
                assert!((step + 0.1 * gv.signum()).abs() < 1e-6, "{step}");
            }
        }
    }

    #[test]
    fn nan_gradient_names_parameter_and_changes_nothing() {
        let mut p = params();
        let before = p.clone();
        let mut g = p.map(|t| t.map(|_| 1.0));
        g.image.b1.data_mut()[1] = f64::NAN;
        let mut s = AdamState::new(&p, AdamConfig::default());
        let err = adam_step(&mut p, &g, &mut s, 0.1).unwrap_err();
        assert!(matches!(&err, Error::NonFinite { param } if param == "image.b1"), "{err}");
        assert_eq!(err.exit_code(), 3);
        assert_eq!(p, before);
        assert_eq!(s.t, 0);
    }

    #[test]
    fn negative_lr_rejected() {
        let mut p = params();
        let g = p.clone();
        let mut s = AdamState::new(&p, AdamConfig::default());
        assert!(adam_step(&mut p, &g, &mut s, -1.0).is_err());
    }
}
