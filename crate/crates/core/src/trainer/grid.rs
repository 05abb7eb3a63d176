use std::ops::ControlFlow;

use super::{score, train, TrainState, TrainingData, ValScores};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::evaluator::EvalSet;

/// Settings that shape the prepared data and so cannot vary inside a search.
const FIXED_KEYS: &[&str] = &["seq_len", "min_freq", "caption_mode"];

/// One searched setting and its candidate values, as config-file strings.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GridAxis {
    pub key: String,
    pub values: Vec<String>,
}

impl GridAxis {
    pub fn new<S: ToString>(key: &str, values: &[S]) -> Self {
        GridAxis {
            key: key.to_owned(),
            values: values.iter().map(ToString::to_string).collect(),
        }
    }
}

/// Cartesian product of the axes; the last axis varies fastest.
pub fn grid_points(axes: &[GridAxis]) -> Vec<Vec<(String, String)>> {
    axes.iter().fold(vec![Vec::new()], |acc, axis| {
        acc.iter()
            .flat_map(|prefix| {
                axis.values.iter().map(move |v| {
                    let mut p = prefix.clone();
                    p.push((axis.key.clone(), v.clone()));
                    p
                })
            })
            .collect()
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridResult {
    pub overrides: Vec<(String, String)>,
    pub scores: ValScores,
    /// Sum of validation R@1 over both directions.
    pub criterion: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridReport {
    pub results: Vec<GridResult>,
    pub best: usize,
}

impl GridReport {
    pub fn best(&self) -> &GridResult {
        &self.results[self.best]
    }

    pub fn table(&self) -> String {
        let mut out = String::from("point  r1_sent  r1_img  criterion  settings\n");
        for (i, r) in self.results.iter().enumerate() {
            let settings: Vec<String> = r.overrides.iter().map(|(k, v)| format!("{k}={v}")).collect();
            let mark = if i == self.best { "*" } else { " " };
            out.push_str(&format!(
                "{i:>4}{mark} {:>8.2} {:>7.2} {:>10.2}  {}\n",
                r.scores.r1_sent,
                r.scores.r1_img,
                r.criterion,
                settings.join(" ")
            ));
        }
        out
    }
}

/// Index of the highest criterion; the earliest wins ties. NaN never wins.
pub fn select_best(results: &[GridResult]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, r) in results.iter().enumerate() {
        if r.criterion.is_nan() {
            continue;
        }
        if best.is_none_or(|b| r.criterion > results[b].criterion) {
            best = Some(i);
        }
    }
    best.or(if results.is_empty() { None } else { Some(0) })
}

/// Trains one model per grid point from `base` and scores it on `val`.
pub fn grid_search(base: &RunConfig, axes: &[GridAxis], data: &TrainingData, val: &EvalSet) -> Result<GridReport> {
    if axes.is_empty() || axes.iter().any(|a| a.values.is_empty()) {
        return Err(Error::Config("grid search needs at least one value per axis".into()));
    }
    if let Some(a) = axes.iter().find(|a| FIXED_KEYS.contains(&a.key.as_str())) {
        return Err(Error::Config(format!("`{}` cannot be searched over prepared data", a.key)));
    }
    let mut results = Vec::new();
    for overrides in grid_points(axes) {
        let mut cfg = base.clone();
        for (k, v) in &overrides {
            cfg.set(k, v)?;
        }
        let tc = cfg.train_config();
        let mut state = TrainState::init(cfg.model_dims(data.vocab_size, data.feature_dim()), None, &tc)?;
        train(&mut state, data, None, &tc, |_, _| ControlFlow::Continue(()))?;
        let scores = score(&state.params, tc.activation, val)?;
        results.push(GridResult {
            overrides,
            scores,
            criterion: scores.r1_sent + scores.r1_img,
        });
    }
    let best = select_best(&results).expect("non-empty grid");
    Ok(GridReport { results, best })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn result(criterion: f64) -> GridResult {
        GridResult {
            overrides: Vec::new(),
            scores: ValScores {
                r1_sent: criterion,
                r1_img: 0.0,
            },
            criterion,
        }
    }

    #[test]
    fn product_order() {
        let pts = grid_points(&[GridAxis::new("a", &[1, 2]), GridAxis::new("b", &["x", "y", "z"])]);
        assert_eq!(pts.len(), 6);
        assert_eq!(pts[0], vec![("a".into(), "1".into()), ("b".into(), "x".into())]);
        assert_eq!(pts[1][1].1, "y");
        assert_eq!(pts[3][0].1, "2");
    }

    #[test]
    fn ties_go_to_earliest_and_worse_points_never_win() {
        let rs = vec![result(10.0), result(30.0), result(30.0), result(5.0)];
        assert_eq!(select_best(&rs), Some(1));
        let mut more = rs.clone();
        more.push(result(29.0));
        more.insert(0, result(1.0));
        assert_eq!(select_best(&more), Some(2));
        assert_eq!(select_best(&[result(f64::NAN), result(0.0)]), Some(1));
        assert_eq!(select_best(&[]), None);
    }

    #[test]
    fn data_shaping_keys_rejected() {
        let base = RunConfig::test_profile();
        let data = TrainingData {
            features: crate::numcore::Tensor::zeros(&[2, 1]),
            texts: Vec::new(),
            vocab_size: 0,
        };
        let val = data.eval_set();
        let err = grid_search(&base, &[GridAxis::new("seq_len", &[3])], &data, &val).unwrap_err();
        assert!(err.to_string().contains("seq_len"));
    }
}
