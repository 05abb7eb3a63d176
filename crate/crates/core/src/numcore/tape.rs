use crate::error::{Error, Result};

use super::ops::{backward_op, forward_op, Contribution, Op};
use super::Tensor;

/// Something computations can be built on: either a recording [`Tape`] or
/// the non-recording [`Eager`] evaluator.
///
/// Model code is written once against this trait and runs both for training
/// (with gradients) and for inference (without the memory cost of a tape).
pub trait Graph {
    type Node: Clone;

    /// A value gradients are requested for.
    fn variable(&mut self, t: Tensor) -> Self::Node;

    /// A value treated as fixed.
    fn constant(&mut self, t: Tensor) -> Self::Node;

    fn apply(&mut self, op: Op, inputs: &[&Self::Node]) -> Result<Self::Node>;

    fn value<'a>(&'a self, node: &'a Self::Node) -> &'a Tensor;

    fn matmul(&mut self, a: &Self::Node, b: &Self::Node) -> Result<Self::Node> {
        self.apply(Op::MatMul, &[a, b])
    }

    fn add(&mut self, a: &Self::Node, b: &Self::Node) -> Result<Self::Node> {
        self.apply(Op::Add, &[a, b])
    }

    fn sub(&mut self, a: &Self::Node, b: &Self::Node) -> Result<Self::Node> {
        self.apply(Op::Sub, &[a, b])
    }

    fn mul(&mut self, a: &Self::Node, b: &Self::Node) -> Result<Self::Node> {
        self.apply(Op::Mul, &[a, b])
    }

    fn relu(&mut self, a: &Self::Node) -> Result<Self::Node> {
        self.apply(Op::ReluZeroFloor, &[a])
    }

    fn sigmoid(&mut self, a: &Self::Node) -> Result<Self::Node> {
        self.apply(Op::Sigmoid, &[a])
    }

    fn tanh(&mut self, a: &Self::Node) -> Result<Self::Node> {
        self.apply(Op::Tanh, &[a])
    }

    fn abs(&mut self, a: &Self::Node) -> Result<Self::Node> {
        self.apply(Op::Abs, &[a])
    }

    fn square(&mut self, a: &Self::Node) -> Result<Self::Node> {
        self.apply(Op::Square, &[a])
    }

    fn sum(&mut self, a: &Self::Node) -> Result<Self::Node> {
        self.apply(Op::Sum, &[a])
    }

    fn mean(&mut self, a: &Self::Node) -> Result<Self::Node> {
        self.apply(Op::Mean, &[a])
    }

    fn scale(&mut self, a: &Self::Node, c: f64) -> Result<Self::Node> {
        self.apply(Op::Scale(c), &[a])
    }

    fn add_scalar(&mut self, a: &Self::Node, c: f64) -> Result<Self::Node> {
        self.apply(Op::AddScalar(c), &[a])
    }

    fn add_row(&mut self, a: &Self::Node, row: &Self::Node) -> Result<Self::Node> {
        self.apply(Op::AddRowBroadcast, &[a, row])
    }

    fn transpose(&mut self, a: &Self::Node) -> Result<Self::Node> {
        self.apply(Op::Transpose, &[a])
    }

    fn diagonal(&mut self, a: &Self::Node) -> Result<Self::Node> {
        self.apply(Op::Diagonal, &[a])
    }

    fn slice_row(&mut self, a: &Self::Node, row: usize) -> Result<Self::Node> {
        self.apply(Op::SliceRow(row), &[a])
    }

    fn gather_rows(&mut self, table: &Self::Node, rows: Vec<usize>) -> Result<Self::Node> {
        self.apply(Op::GatherRows(rows), &[table])
    }

    fn concat_rows(&mut self, parts: &[&Self::Node]) -> Result<Self::Node> {
        self.apply(Op::ConcatRows, parts)
    }

    fn pairwise_order_penalty(&mut self, a: &Self::Node, b: &Self::Node) -> Result<Self::Node> {
        self.apply(Op::PairwiseOrderPenalty, &[a, b])
    }
}

/// Evaluates operations immediately and keeps nothing.
#[derive(Debug, Default, Clone, Copy)]
pub struct Eager;

impl Graph for Eager {
    type Node = Tensor;

    fn variable(&mut self, t: Tensor) -> Tensor {
        t
    }

    fn constant(&mut self, t: Tensor) -> Tensor {
        t
    }

    fn apply(&mut self, op: Op, inputs: &[&Tensor]) -> Result<Tensor> {
        forward_op(&op, inputs)
    }

    fn value<'a>(&'a self, node: &'a Tensor) -> &'a Tensor {
        node
    }
}

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

struct Node {
    op: Option<Op>,
    inputs: Vec<usize>,
    value: Tensor,
    requires_grad: bool,
}

/// Wengert list for reverse-mode differentiation.
///
/// Nodes are appended in evaluation order, so the list is always a valid
/// topological order. One tape serves a single forward/backward pass.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, op: Option<Op>, inputs: Vec<usize>, value: Tensor, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            op,
            inputs,
            value,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// Reverse sweep from a scalar node.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let root = &self.nodes[loss.0];
        if !root.value.is_scalar() {
            return Err(Error::NotScalar(root.value.shape().to_vec()));
        }
        let mut grads: Vec<Option<Tensor>> = Vec::new();
        grads.resize_with(self.nodes.len(), || None);
        grads[loss.0] = Some(Tensor::filled(root.value.shape(), 1.0));

        for id in (0..=loss.0).rev() {
            let node = &self.nodes[id];
            let (Some(op), true) = (&node.op, node.requires_grad) else {
                continue;
            };
            let Some(g) = grads[id].take() else { continue };
            let inputs: Vec<&Tensor> = node.inputs.iter().map(|&i| &self.nodes[i].value).collect();
            let needs: Vec<bool> = node.inputs.iter().map(|&i| self.nodes[i].requires_grad).collect();
            let contribs = backward_op(op, &inputs, &node.value, &g, &needs);
            grads[id] = Some(g);

            for ((&input, contrib), need) in node.inputs.iter().zip(contribs).zip(needs) {
                let Some(contrib) = contrib.filter(|_| need) else { continue };
                let acc = grads[input].get_or_insert_with(|| Tensor::zeros(self.nodes[input].value.shape()));
                match contrib {
                    Contribution::Dense(t) => acc.add_assign(&t),
                    Contribution::Rows { rows, values } => {
                        for (k, &r) in rows.iter().enumerate() {
                            for (a, &v) in acc.row_mut(r).iter_mut().zip(values.row(k)) {
                                *a += v;
                            }
                        }
                    }
                }
            }
        }
        let shapes = self.nodes.iter().map(|n| n.value.shape().to_vec()).collect();
        Ok(Gradients { grads, shapes })
    }
}

impl Graph for Tape {
    type Node = Var;

    fn variable(&mut self, t: Tensor) -> Var {
        self.push(None, Vec::new(), t, true)
    }

    fn constant(&mut self, t: Tensor) -> Var {
        self.push(None, Vec::new(), t, false)
    }

    fn apply(&mut self, op: Op, inputs: &[&Var]) -> Result<Var> {
        let values: Vec<&Tensor> = inputs.iter().map(|v| &self.nodes[v.0].value).collect();
        let out = forward_op(&op, &values)?;
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        let ids = inputs.iter().map(|v| v.0).collect();
        Ok(self.push(Some(op), ids, out, requires_grad))
    }

    fn value<'a>(&'a self, node: &'a Var) -> &'a Tensor {
        &self.nodes[node.0].value
    }
}

/// Result of [`Tape::backward`].
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    shapes: Vec<Vec<usize>>,
}

impl Gradients {
    /// Gradient for `v`; zeros when `v` does not influence the loss.
    pub fn wrt(&self, v: Var) -> Tensor {
        match &self.grads[v.0] {
            Some(g) => g.clone(),
            None => Tensor::zeros(&self.shapes[v.0]),
        }
    }

    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads[v.0].as_ref()
    }

    pub fn take(&mut self, v: Var) -> Tensor {
        self.grads[v.0]
            .take()
            .unwrap_or_else(|| Tensor::zeros(&self.shapes[v.0]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_sum_gradient() {
        let mut tape = Tape::new();
        let x = tape.variable(Tensor::row_vector(vec![1.0, 2.0, 3.0]));
        let sq = tape.square(&x).unwrap();
        let loss = tape.sum(&sq).unwrap();
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.wrt(x).data(), &[2.0, 4.0, 6.0]);
    }

    #[test]
    fn bilinear_gradient_is_other_operand() {
        let mut tape = Tape::new();
        let x = tape.variable(Tensor::row_vector(vec![0.5, -1.0, 2.0]));
        let y = tape.variable(Tensor::row_vector(vec![3.0, 4.0, -5.0]));
        let p = tape.mul(&x, &y).unwrap();
        let loss = tape.sum(&p).unwrap();
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.wrt(x).data(), &[3.0, 4.0, -5.0]);
        assert_eq!(grads.wrt(y).data(), &[0.5, -1.0, 2.0]);
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let mut tape = Tape::new();
        let x = tape.variable(Tensor::row_vector(vec![1.0, 2.0]));
        assert!(matches!(tape.backward(x), Err(Error::NotScalar(_))));
    }

    #[test]
    fn unreachable_node_reports_zero() {
        let mut tape = Tape::new();
        let x = tape.variable(Tensor::row_vector(vec![1.0, 2.0]));
        let unused = tape.variable(Tensor::row_vector(vec![7.0]));
        let loss = tape.sum(&x).unwrap();
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.wrt(unused).data(), &[0.0]);
        assert!(grads.get(unused).is_none());
    }

    #[test]
    fn two_uses_of_a_node_accumulate() {
        // loss = sum(x * x) + sum(3x) → 2x + 3
        let mut tape = Tape::new();
        let x = tape.variable(Tensor::row_vector(vec![1.0, -2.0]));
        let xx = tape.mul(&x, &x).unwrap();
        let a = tape.sum(&xx).unwrap();
        let x3 = tape.scale(&x, 3.0).unwrap();
        let b = tape.sum(&x3).unwrap();
        let loss = tape.add(&a, &b).unwrap();
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.wrt(x).data(), &[5.0, -1.0]);
    }

    #[test]
    fn constants_get_no_gradient() {
        let mut tape = Tape::new();
        let c = tape.constant(Tensor::row_vector(vec![1.0, 2.0]));
        let x = tape.variable(Tensor::row_vector(vec![3.0, 4.0]));
        let p = tape.mul(&c, &x).unwrap();
        let loss = tape.sum(&p).unwrap();
        let grads = tape.backward(loss).unwrap();
        assert!(grads.get(c).is_none());
        assert_eq!(grads.wrt(x).data(), &[1.0, 2.0]);
    }

    #[test]
    fn eager_matches_tape_values() {
        let a = Tensor::matrix(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let mut tape = Tape::new();
        let va = tape.variable(a.clone());
        let vt = tape.tanh(&va).unwrap();
        let mut eager = Eager;
        let et = eager.tanh(&a).unwrap();
        assert_eq!(tape.value(&vt), &et);
    }
}
