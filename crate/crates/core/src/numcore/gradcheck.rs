use crate::error::{Error, Result};

use super::{Graph, Tape, Tensor, Var};

/// Compares reverse-mode gradients against central differences.
///
/// `build` receives one variable per tensor in `point` and must return a
/// scalar node. Returns the maximum over all coordinates of
/// `|analytic − numeric| / max(1, |numeric|)`.
pub fn finite_diff_check<F>(build: F, point: &[Tensor], step: f64) -> Result<f64>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    if !(step > 0.0) {
        return Err(Error::Invalid(format!("finite-difference step must be positive, got {step}")));
    }

    let mut tape = Tape::new();
    let vars: Vec<Var> = point.iter().map(|t| tape.variable(t.clone())).collect();
    let loss = build(&mut tape, &vars)?;
    let grads = tape.backward(loss)?;
    let analytic: Vec<Tensor> = vars.iter().map(|&v| grads.wrt(v)).collect();

    let eval = |inputs: &[Tensor]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = inputs.iter().map(|t| tape.variable(t.clone())).collect();
        let out = build(&mut tape, &vars)?;
        Ok(tape.value(&out).item())
    };

    let mut worst = 0.0f64;
    let mut probe = point.to_vec();
    for (t, grad) in analytic.iter().enumerate() {
        for c in 0..point[t].numel() {
            let orig = point[t].data()[c];
            probe[t].data_mut()[c] = orig + step;
            let plus = eval(&probe)?;
            probe[t].data_mut()[c] = orig - step;
            let minus = eval(&probe)?;
            probe[t].data_mut()[c] = orig;

            let numeric = (plus - minus) / (2.0 * step);
            let err = (grad.data()[c] - numeric).abs() / numeric.abs().max(1.0);
            worst = worst.max(err);
        }
    }
    Ok(worst)
}
