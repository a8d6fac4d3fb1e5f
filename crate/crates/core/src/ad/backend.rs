use super::ops::{descending_permutation, eval, Op};
use super::tensor::Tensor;
use crate::error::Result;

/// Something that can evaluate the primitive [`Op`] set.
///
/// Model code is written once against this trait and runs either eagerly
/// ([`Eager`], no bookkeeping) or on a recording [`Tape`](super::Tape) when
/// gradients are needed.
pub trait Backend {
    type Value: Clone;

    /// A value that never receives a gradient.
    fn constant(&mut self, t: Tensor) -> Self::Value;

    /// A trainable leaf.
    fn param(&mut self, t: &Tensor) -> Self::Value;

    fn tensor<'a>(&'a self, v: &'a Self::Value) -> &'a Tensor;

    fn apply(&mut self, op: Op, args: &[&Self::Value]) -> Result<Self::Value>;

    fn matmul(&mut self, a: &Self::Value, b: &Self::Value) -> Result<Self::Value> {
        self.apply(Op::MatMul, &[a, b])
    }

    fn add_bias(&mut self, x: &Self::Value, bias: &Self::Value) -> Result<Self::Value> {
        self.apply(Op::AddBias, &[x, bias])
    }

    fn mul_cols(&mut self, x: &Self::Value, v: &Self::Value) -> Result<Self::Value> {
        self.apply(Op::MulCols, &[x, v])
    }

    fn add(&mut self, a: &Self::Value, b: &Self::Value) -> Result<Self::Value> {
        self.apply(Op::Add, &[a, b])
    }

    fn sub(&mut self, a: &Self::Value, b: &Self::Value) -> Result<Self::Value> {
        self.apply(Op::Sub, &[a, b])
    }

    fn mul(&mut self, a: &Self::Value, b: &Self::Value) -> Result<Self::Value> {
        self.apply(Op::Mul, &[a, b])
    }

    fn scale(&mut self, x: &Self::Value, c: f64) -> Result<Self::Value> {
        self.apply(Op::Scale(c), &[x])
    }

    fn offset(&mut self, x: &Self::Value, c: f64) -> Result<Self::Value> {
        self.apply(Op::Offset(c), &[x])
    }

    fn exp(&mut self, x: &Self::Value) -> Result<Self::Value> {
        self.apply(Op::Exp, &[x])
    }

    fn log(&mut self, x: &Self::Value) -> Result<Self::Value> {
        self.apply(Op::Log, &[x])
    }

    fn sqrt(&mut self, x: &Self::Value) -> Result<Self::Value> {
        self.apply(Op::Sqrt, &[x])
    }

    fn tanh(&mut self, x: &Self::Value) -> Result<Self::Value> {
        self.apply(Op::Tanh, &[x])
    }

    fn square(&mut self, x: &Self::Value) -> Result<Self::Value> {
        self.apply(Op::Square, &[x])
    }

    fn leaky_relu(&mut self, x: &Self::Value, slope: f64) -> Result<Self::Value> {
        self.apply(Op::LeakyRelu(slope), &[x])
    }

    fn sum(&mut self, x: &Self::Value) -> Result<Self::Value> {
        self.apply(Op::Sum, &[x])
    }

    fn mean(&mut self, x: &Self::Value) -> Result<Self::Value> {
        self.apply(Op::Mean, &[x])
    }

    fn row_sum(&mut self, x: &Self::Value) -> Result<Self::Value> {
        self.apply(Op::RowSum, &[x])
    }

    fn logsumexp(&mut self, x: &Self::Value) -> Result<Self::Value> {
        self.apply(Op::LogSumExp, &[x])
    }

    fn select_cols(&mut self, x: &Self::Value, cols: &[usize]) -> Result<Self::Value> {
        self.apply(Op::SelectCols(cols.to_vec()), &[x])
    }

    fn merge_cols(
        &mut self,
        a: &Self::Value,
        left: &[usize],
        b: &Self::Value,
        right: &[usize],
    ) -> Result<Self::Value> {
        let op = Op::MergeCols {
            left: left.to_vec(),
            right: right.to_vec(),
        };
        self.apply(op, &[a, b])
    }

    /// Sort a vector in non-increasing order.
    ///
    /// Returns the sorted values and `perm` with `sorted[i] == v[perm[i]]`.
    /// The permutation is fixed at this point; gradients of `sorted[i]` flow
    /// back to `v[perm[i]]` only.
    fn sort_descending(&mut self, v: &Self::Value) -> Result<(Self::Value, Vec<usize>)> {
        let t = self.tensor(v);
        if t.shape().len() != 1 {
            return Err(crate::error::dim_err(format!(
                "sort_descending expects a vector, got shape {:?}",
                t.shape()
            )));
        }
        let perm = descending_permutation(t.data())?;
        let sorted = self.apply(Op::Gather(perm.clone()), &[v])?;
        Ok((sorted, perm))
    }
}

/// Evaluates eagerly and keeps nothing.
#[derive(Debug, Default, Clone, Copy)]
pub struct Eager;

impl Backend for Eager {
    type Value = Tensor;

    fn constant(&mut self, t: Tensor) -> Tensor {
        t
    }

    fn param(&mut self, t: &Tensor) -> Tensor {
        t.clone()
    }

    fn tensor<'a>(&'a self, v: &'a Tensor) -> &'a Tensor {
        v
    }

    fn apply(&mut self, op: Op, args: &[&Tensor]) -> Result<Tensor> {
        eval(&op, args)
    }
}
