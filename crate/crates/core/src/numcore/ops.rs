use crate::error::{Error, Result};

use super::Tensor;

/// Primitive differentiable operations.
///
/// Elementwise kinds accept any shape; the row/column kinds require rank-2
/// operands. `Sum` and `Mean` reduce to shape `[1]`.
#[derive(Clone, Debug, PartialEq)]
pub enum Op {
    MatMul,
    Add,
    Sub,
    Mul,
    /// `max(0, x)`, subgradient 0 at 0.
    ReluZeroFloor,
    Sigmoid,
    Tanh,
    /// `|x|`, subgradient 0 at 0.
    Abs,
    Square,
    Sum,
    Mean,
    ConcatRows,
    SliceRow(usize),
    Scale(f64),
    AddScalar(f64),
    /// `m×n + 1×n`, the row vector added to every row.
    AddRowBroadcast,
    Transpose,
    /// `n×n → 1×n`.
    Diagonal,
    /// Rows of a table selected by index, `m×n → k×n`.
    GatherRows(Vec<usize>),
    /// `a: p×j`, `b: q×j` → `p×q` with entry `(i, k) = ||max(0, b_k − a_i)||²`.
    PairwiseOrderPenalty,
}

impl Op {
    pub fn name(&self) -> &'static str {
        match self {
            Op::MatMul => "matmul",
            Op::Add => "add",
            Op::Sub => "sub",
            Op::Mul => "elementwise_mul",
            Op::ReluZeroFloor => "relu_zero_floor",
            Op::Sigmoid => "sigmoid",
            Op::Tanh => "tanh",
            Op::Abs => "abs",
            Op::Square => "square",
            Op::Sum => "sum",
            Op::Mean => "mean",
            Op::ConcatRows => "concat_rows",
            Op::SliceRow(_) => "slice_row",
            Op::Scale(_) => "scale",
            Op::AddScalar(_) => "add_scalar",
            Op::AddRowBroadcast => "add_row_broadcast",
            Op::Transpose => "transpose",
            Op::Diagonal => "diagonal",
            Op::GatherRows(_) => "gather_rows",
            Op::PairwiseOrderPenalty => "pairwise_order_penalty",
        }
    }

    fn arity(&self) -> Option<usize> {
        match self {
            Op::MatMul | Op::Add | Op::Sub | Op::Mul | Op::AddRowBroadcast | Op::PairwiseOrderPenalty => {
                Some(2)
            }
            Op::ConcatRows => None,
            _ => Some(1),
        }
    }
}

fn require_matrix(op: &Op, t: &Tensor) -> Result<()> {
    if t.is_matrix() {
        Ok(())
    } else {
        Err(Error::InvalidOp {
            op: op.name(),
            msg: format!("expected a matrix, got shape {:?}", t.shape()),
        })
    }
}

fn zip_map(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::new(a.shape().to_vec(), data).expect("same shape")
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn matmul(a: &Tensor, b: &Tensor) -> Tensor {
    let (m, k, n) = (a.rows(), a.cols(), b.cols());
    let mut out = vec![0.0; m * n];
    let (ad, bd) = (a.data(), b.data());
    for i in 0..m {
        let orow = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let av = ad[i * k + p];
            if av == 0.0 {
                continue;
            }
            let brow = &bd[p * n..(p + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    Tensor::new(vec![m, n], out).expect("matmul shape")
}

pub(crate) fn transpose(a: &Tensor) -> Tensor {
    let (m, n) = (a.rows(), a.cols());
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            out[j * m + i] = a.data()[i * n + j];
        }
    }
    Tensor::new(vec![n, m], out).expect("transpose shape")
}

/// Evaluates `op` on concrete inputs.
pub fn forward_op(op: &Op, inputs: &[&Tensor]) -> Result<Tensor> {
    if let Some(n) = op.arity() {
        if inputs.len() != n {
            return Err(Error::InvalidOp {
                op: op.name(),
                msg: format!("expected {n} inputs, got {}", inputs.len()),
            });
        }
    }
    let out = match op {
        Op::MatMul => {
            let (a, b) = (inputs[0], inputs[1]);
            if !a.is_matrix() || !b.is_matrix() || a.cols() != b.rows() {
                return Err(Error::shape(op.name(), a.shape(), b.shape()));
            }
            matmul(a, b)
        }
        Op::Add | Op::Sub | Op::Mul => {
            let (a, b) = (inputs[0], inputs[1]);
            if a.shape() != b.shape() {
                return Err(Error::shape(op.name(), a.shape(), b.shape()));
            }
            match op {
                Op::Add => zip_map(a, b, |x, y| x + y),
                Op::Sub => zip_map(a, b, |x, y| x - y),
                _ => zip_map(a, b, |x, y| x * y),
            }
        }
        Op::ReluZeroFloor => inputs[0].map(|x| x.max(0.0)),
        Op::Sigmoid => inputs[0].map(sigmoid),
        Op::Tanh => inputs[0].map(f64::tanh),
        Op::Abs => inputs[0].map(f64::abs),
        Op::Square => inputs[0].map(|x| x * x),
        Op::Sum => Tensor::scalar(inputs[0].data().iter().sum()),
        Op::Mean => {
            let t = inputs[0];
            if t.numel() == 0 {
                return Err(Error::InvalidOp {
                    op: op.name(),
                    msg: "mean of an empty tensor".into(),
                });
            }
            Tensor::scalar(t.data().iter().sum::<f64>() / t.numel() as f64)
        }
        Op::ConcatRows => {
            let first = inputs.first().ok_or(Error::InvalidOp {
                op: op.name(),
                msg: "no inputs".into(),
            })?;
            require_matrix(op, first)?;
            let cols = first.cols();
            let mut rows = 0;
            let mut data = Vec::new();
            for t in inputs {
                if !t.is_matrix() || t.cols() != cols {
                    return Err(Error::shape(op.name(), first.shape(), t.shape()));
                }
                rows += t.rows();
                data.extend_from_slice(t.data());
            }
            Tensor::new(vec![rows, cols], data)?
        }
        Op::SliceRow(r) => {
            let t = inputs[0];
            require_matrix(op, t)?;
            if *r >= t.rows() {
                return Err(Error::InvalidOp {
                    op: op.name(),
                    msg: format!("row {r} out of range for shape {:?}", t.shape()),
                });
            }
            Tensor::row_vector(t.row(*r).to_vec())
        }
        Op::Scale(c) => inputs[0].map(|x| c * x),
        Op::AddScalar(c) => inputs[0].map(|x| x + c),
        Op::AddRowBroadcast => {
            let (a, b) = (inputs[0], inputs[1]);
            if !a.is_matrix() || b.shape() != [1, a.cols()] {
                return Err(Error::shape(op.name(), a.shape(), b.shape()));
            }
            let mut out = a.clone();
            for r in 0..a.rows() {
                for (o, &v) in out.row_mut(r).iter_mut().zip(b.data()) {
                    *o += v;
                }
            }
            out
        }
        Op::Transpose => {
            require_matrix(op, inputs[0])?;
            transpose(inputs[0])
        }
        Op::Diagonal => {
            let t = inputs[0];
            if !t.is_matrix() || t.rows() != t.cols() {
                return Err(Error::InvalidOp {
                    op: op.name(),
                    msg: format!("expected a square matrix, got shape {:?}", t.shape()),
                });
            }
            Tensor::row_vector((0..t.rows()).map(|i| t.get(i, i)).collect())
        }
        Op::GatherRows(idx) => {
            let t = inputs[0];
            require_matrix(op, t)?;
            let mut data = Vec::with_capacity(idx.len() * t.cols());
            for &i in idx {
                if i >= t.rows() {
                    return Err(Error::InvalidOp {
                        op: op.name(),
                        msg: format!("index {i} out of range for {} rows", t.rows()),
                    });
                }
                data.extend_from_slice(t.row(i));
            }
            Tensor::new(vec![idx.len(), t.cols()], data)?
        }
        Op::PairwiseOrderPenalty => {
            let (a, b) = (inputs[0], inputs[1]);
            if !a.is_matrix() || !b.is_matrix() || a.cols() != b.cols() {
                return Err(Error::shape(op.name(), a.shape(), b.shape()));
            }
            let (p, q) = (a.rows(), b.rows());
            let mut out = vec![0.0; p * q];
            for i in 0..p {
                let ar = a.row(i);
                for k in 0..q {
                    out[i * q + k] = ar
                        .iter()
                        .zip(b.row(k))
                        .map(|(&x, &y)| {
                            let d = (y - x).max(0.0);
                            d * d
                        })
                        .sum();
                }
            }
            Tensor::new(vec![p, q], out)?
        }
    };
    Ok(out)
}

/// Gradient flowing into one input of a node.
pub(crate) enum Contribution {
    Dense(Tensor),
    /// Row `k` of `values` is added to row `rows[k]` of the input gradient.
    Rows { rows: Vec<usize>, values: Tensor },
}

/// Vector-Jacobian products of `op` for every input flagged in `needs`.
pub(crate) fn backward_op(
    op: &Op,
    inputs: &[&Tensor],
    output: &Tensor,
    grad: &Tensor,
    needs: &[bool],
) -> Vec<Option<Contribution>> {
    use Contribution::Dense;
    let dense = |t: Tensor| Some(Dense(t));
    let unary = |f: &dyn Fn(f64, f64, f64) -> f64| -> Vec<Option<Contribution>> {
        // f(x, y, g) with x the input, y the output, g the upstream gradient
        let x = inputs[0];
        let data = x
            .data()
            .iter()
            .zip(output.data())
            .zip(grad.data())
            .map(|((&x, &y), &g)| f(x, y, g))
            .collect();
        vec![dense(Tensor::new(x.shape().to_vec(), data).unwrap())]
    };
    match op {
        Op::MatMul => {
            let (a, b) = (inputs[0], inputs[1]);
            vec![
                needs[0].then(|| Dense(matmul(grad, &transpose(b)))),
                needs[1].then(|| Dense(matmul(&transpose(a), grad))),
            ]
        }
        Op::Add => vec![
            needs[0].then(|| Dense(grad.clone())),
            needs[1].then(|| Dense(grad.clone())),
        ],
        Op::Sub => vec![
            needs[0].then(|| Dense(grad.clone())),
            needs[1].then(|| Dense(grad.map(|g| -g))),
        ],
        Op::Mul => vec![
            needs[0].then(|| Dense(zip_map(grad, inputs[1], |g, y| g * y))),
            needs[1].then(|| Dense(zip_map(grad, inputs[0], |g, x| g * x))),
        ],
        Op::ReluZeroFloor => unary(&|x, _, g| if x > 0.0 { g } else { 0.0 }),
        Op::Sigmoid => unary(&|_, y, g| g * y * (1.0 - y)),
        Op::Tanh => unary(&|_, y, g| g * (1.0 - y * y)),
        Op::Abs => unary(&|x, _, g| {
            if x > 0.0 {
                g
            } else if x < 0.0 {
                -g
            } else {
                0.0
            }
        }),
        Op::Square => unary(&|x, _, g| 2.0 * x * g),
        Op::Sum => vec![dense(Tensor::filled(inputs[0].shape(), grad.item()))],
        Op::Mean => {
            let n = inputs[0].numel() as f64;
            vec![dense(Tensor::filled(inputs[0].shape(), grad.item() / n))]
        }
        Op::ConcatRows => {
            let cols = grad.cols();
            let mut offset = 0;
            inputs
                .iter()
                .zip(needs)
                .map(|(t, &need)| {
                    let len = t.numel();
                    let part = need.then(|| {
                        Dense(Tensor::new(vec![t.rows(), cols], grad.data()[offset..offset + len].to_vec()).unwrap())
                    });
                    offset += len;
                    part
                })
                .collect()
        }
        Op::SliceRow(r) => vec![Some(Contribution::Rows {
            rows: vec![*r],
            values: grad.clone(),
        })],
        Op::Scale(c) => vec![dense(grad.map(|g| c * g))],
        Op::AddScalar(_) => vec![dense(grad.clone())],
        Op::AddRowBroadcast => {
            let bias_grad = needs[1].then(|| {
                let mut acc = vec![0.0; grad.cols()];
                for r in 0..grad.rows() {
                    for (a, &g) in acc.iter_mut().zip(grad.row(r)) {
                        *a += g;
                    }
                }
                Dense(Tensor::row_vector(acc))
            });
            vec![needs[0].then(|| Dense(grad.clone())), bias_grad]
        }
        Op::Transpose => vec![dense(transpose(grad))],
        Op::Diagonal => {
            let n = grad.cols();
            let mut t = Tensor::zeros(&[n, n]);
            for i in 0..n {
                t.data_mut()[i * n + i] = grad.data()[i];
            }
            vec![dense(t)]
        }
        Op::GatherRows(idx) => vec![Some(Contribution::Rows {
            rows: idx.clone(),
            values: grad.clone(),
        })],
        Op::PairwiseOrderPenalty => {
            let (a, b) = (inputs[0], inputs[1]);
            let (p, q, j) = (a.rows(), b.rows(), a.cols());
            let mut ga = vec![0.0; p * j];
            let mut gb = vec![0.0; q * j];
            for i in 0..p {
                let ar = a.row(i);
                for k in 0..q {
                    let g = grad.get(i, k);
                    if g == 0.0 {
                        continue;
                    }
                    let br = b.row(k);
                    for c in 0..j {
                        let d = br[c] - ar[c];
                        if d > 0.0 {
                            ga[i * j + c] -= 2.0 * d * g;
                            gb[k * j + c] += 2.0 * d * g;
                        }
                    }
                }
            }
            vec![
                needs[0].then(|| Dense(Tensor::new(vec![p, j], ga).unwrap())),
                needs[1].then(|| Dense(Tensor::new(vec![q, j], gb).unwrap())),
            ]
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(rows: usize, cols: usize, v: &[f64]) -> Tensor {
        Tensor::matrix(rows, cols, v.to_vec()).unwrap()
    }

    #[test]
    fn matmul_identity() {
        let a = t(2, 3, &[1.0, -2.0, 3.5, 0.0, 4.0, -1.0]);
        let out = forward_op(&Op::MatMul, &[&a, &Tensor::identity(3)]).unwrap();
        assert_eq!(out, a);
    }

    #[test]
    fn relu_sigmoid_tanh_at_reference_points() {
        let x = Tensor::row_vector(vec![-1.0, 0.0, 2.0]);
        assert_eq!(forward_op(&Op::ReluZeroFloor, &[&x]).unwrap().data(), &[0.0, 0.0, 2.0]);
        let zero = Tensor::scalar(0.0);
        assert_eq!(forward_op(&Op::Sigmoid, &[&zero]).unwrap().item(), 0.5);
        assert_eq!(forward_op(&Op::Tanh, &[&zero]).unwrap().item(), 0.0);
    }

    #[test]
    fn shape_mismatch_names_op_and_shapes() {
        let a = t(2, 3, &[0.0; 6]);
        let b = t(2, 3, &[0.0; 6]);
        let err = forward_op(&Op::MatMul, &[&a, &b]).unwrap_err().to_string();
        assert!(err.contains("matmul") && err.contains("[2, 3]"), "{err}");
        let c = t(3, 2, &[0.0; 6]);
        let err = forward_op(&Op::Add, &[&a, &c]).unwrap_err().to_string();
        assert!(err.contains("add") && err.contains("[3, 2]"), "{err}");
    }

    #[test]
    fn gather_and_slice_bounds() {
        let a = t(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        assert!(forward_op(&Op::SliceRow(2), &[&a]).is_err());
        assert!(forward_op(&Op::GatherRows(vec![0, 5]), &[&a]).is_err());
        let g = forward_op(&Op::GatherRows(vec![1, 1, 0]), &[&a]).unwrap();
        assert_eq!(g.data(), &[3.0, 4.0, 3.0, 4.0, 1.0, 2.0]);
    }

    #[test]
    fn pairwise_penalty_matches_definition() {
        let a = t(1, 2, &[1.0, 2.0]);
        let b = t(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        let e = forward_op(&Op::PairwiseOrderPenalty, &[&a, &b]).unwrap();
        assert_eq!(e.data(), &[1.0, 0.0]);
    }

    #[test]
    fn sigmoid_is_stable_for_large_magnitudes() {
        let x = Tensor::row_vector(vec![-800.0, 800.0]);
        let y = forward_op(&Op::Sigmoid, &[&x]).unwrap();
        assert!(y.is_finite());
        assert_eq!(y.data(), &[0.0, 1.0]);
    }
}
