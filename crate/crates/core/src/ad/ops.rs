//! Primitive operations and their value kernels.
//!
//! Both the eager evaluator and the recording tape compute values through
//! [`eval`], so inference and training share one numerical path.

use super::tensor::Tensor;
use crate::error::{dim_err, Error, Result};

/// The primitive set understood by every [`Backend`](super::Backend).
///
/// Broadcasting is limited to a scalar right-hand side for `Add`, `Sub` and
/// `Mul`, and to a per-column vector for `AddBias` and `MulCols`.
#[derive(Clone, Debug, PartialEq)]
pub enum Op {
    /// `[n×k] · [k×m]`.
    MatMul,
    /// `[n×m] + [m]`, added to every row.
    AddBias,
    /// `[n×m] ⊙ [m]`, every row scaled column-wise.
    MulCols,
    Add,
    Sub,
    Mul,
    Scale(f64),
    Offset(f64),
    Exp,
    Log,
    Sqrt,
    Tanh,
    Square,
    LeakyRelu(f64),
    Sum,
    Mean,
    /// `[n×m] → [n]`.
    RowSum,
    LogSumExp,
    /// Keep the listed columns, in order.
    SelectCols(Vec<usize>),
    /// Interleave two matrices: column `j` of the first lands at `left[j]`,
    /// column `j` of the second at `right[j]`.
    MergeCols { left: Vec<usize>, right: Vec<usize> },
    /// `out[i] = x[perm[i]]` over the flat data.
    Gather(Vec<usize>),
}

impl Op {
    pub fn arity(&self) -> usize {
        match self {
            Op::MatMul | Op::AddBias | Op::MulCols | Op::Add | Op::Sub | Op::Mul => 2,
            Op::MergeCols { .. } => 2,
            _ => 1,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Op::MatMul => "matmul",
            Op::AddBias => "add_bias",
            Op::MulCols => "mul_cols",
            Op::Add => "add",
            Op::Sub => "sub",
            Op::Mul => "mul",
            Op::Scale(_) => "scale",
            Op::Offset(_) => "offset",
            Op::Exp => "exp",
            Op::Log => "log",
            Op::Sqrt => "sqrt",
            Op::Tanh => "tanh",
            Op::Square => "square",
            Op::LeakyRelu(_) => "leaky_relu",
            Op::Sum => "sum",
            Op::Mean => "mean",
            Op::RowSum => "row_sum",
            Op::LogSumExp => "logsumexp",
            Op::SelectCols(_) => "select_cols",
            Op::MergeCols { .. } => "merge_cols",
            Op::Gather(_) => "gather",
        }
    }
}

fn map(x: &Tensor, f: impl Fn(f64) -> f64) -> Tensor {
    Tensor::from_parts(x.shape().to_vec(), x.data().iter().map(|&v| f(v)).collect())
}

fn zip(a: &Tensor, b: &Tensor, op: &Op, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
    if a.shape() == b.shape() {
        let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
        Ok(Tensor::from_parts(a.shape().to_vec(), data))
    } else if b.is_scalar() {
        let s = b.item();
        Ok(map(a, |x| f(x, s)))
    } else {
        Err(dim_err(format!(
            "{}: shapes {:?} and {:?} are neither equal nor tensor-scalar",
            op.name(),
            a.shape(),
            b.shape()
        )))
    }
}

fn require_matrix(op: &Op, t: &Tensor) -> Result<()> {
    if t.is_matrix() {
        Ok(())
    } else {
        Err(dim_err(format!("{}: expected a matrix, got shape {:?}", op.name(), t.shape())))
    }
}

fn require_col_vector(op: &Op, x: &Tensor, v: &Tensor) -> Result<()> {
    require_matrix(op, x)?;
    if v.shape() != [x.cols()] {
        return Err(dim_err(format!(
            "{}: per-column operand has shape {:?}, expected [{}] for matrix {:?}",
            op.name(),
            v.shape(),
            x.cols(),
            x.shape()
        )));
    }
    Ok(())
}

/// Output widths below this go through dot products instead of row updates.
const NARROW: usize = 4;

fn transpose(a: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; a.len()];
    for (i, row) in a.chunks_exact(cols).enumerate() {
        for (j, &v) in row.iter().enumerate() {
            out[j * rows + i] = v;
        }
    }
    out
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for l in 0..4 {
            acc[l] += x[l] * y[l];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// `a[n×k] · b[k×m]`.
pub(crate) fn matmul_nn(a: &[f64], b: &[f64], n: usize, k: usize, m: usize) -> Vec<f64> {
    if m < NARROW {
        return matmul_nt(a, &transpose(b, k, m), n, k, m);
    }
    let mut out = vec![0.0; n * m];
    for (orow, arow) in out.chunks_exact_mut(m).zip(a.chunks_exact(k)) {
        for (&aip, brow) in arow.iter().zip(b.chunks_exact(m)) {
            if aip == 0.0 {
                continue;
            }
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += aip * bv;
            }
        }
    }
    out
}

/// `a[n×m] · b[k×m]ᵀ → [n×k]`.
pub(crate) fn matmul_nt(a: &[f64], b: &[f64], n: usize, m: usize, k: usize) -> Vec<f64> {
    if k >= NARROW {
        return matmul_nn(a, &transpose(b, k, m), n, m, k);
    }
    let mut out = Vec::with_capacity(n * k);
    for arow in a.chunks_exact(m) {
        out.extend(b.chunks_exact(m).map(|brow| dot(arow, brow)));
    }
    out
}

/// `a[n×k]ᵀ · b[n×m] → [k×m]`.
pub(crate) fn matmul_tn(a: &[f64], b: &[f64], n: usize, k: usize, m: usize) -> Vec<f64> {
    if m < NARROW && k > m {
        return transpose(&matmul_tn(b, a, n, m, k), m, k);
    }
    debug_assert_eq!(a.len(), n * k);
    let mut out = vec![0.0; k * m];
    for (arow, brow) in a.chunks_exact(k).zip(b.chunks_exact(m)) {
        for (&aip, orow) in arow.iter().zip(out.chunks_exact_mut(m)) {
            if aip == 0.0 {
                continue;
            }
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += aip * bv;
            }
        }
    }
    out
}

pub(crate) fn logsumexp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

fn check_columns(op: &Op, cols: &[usize], width: usize) -> Result<()> {
    if cols.is_empty() {
        return Err(dim_err(format!("{}: empty column list", op.name())));
    }
    if let Some(&c) = cols.iter().find(|&&c| c >= width) {
        return Err(dim_err(format!("{}: column {c} out of range for width {width}", op.name())));
    }
    Ok(())
}

/// Evaluate `op` on its arguments.
pub fn eval(op: &Op, args: &[&Tensor]) -> Result<Tensor> {
    if args.len() != op.arity() {
        return Err(dim_err(format!(
            "{} takes {} operands, got {}",
            op.name(),
            op.arity(),
            args.len()
        )));
    }
    let x = args[0];
    Ok(match op {
        Op::MatMul => {
            let b = args[1];
            if !x.is_matrix() || !b.is_matrix() || x.cols() != b.rows() {
                return Err(dim_err(format!(
                    "matmul: cannot multiply {:?} by {:?}",
                    x.shape(),
                    b.shape()
                )));
            }
            let (n, k, m) = (x.rows(), x.cols(), b.cols());
            Tensor::from_parts(vec![n, m], matmul_nn(x.data(), b.data(), n, k, m))
        }
        Op::AddBias | Op::MulCols => {
            let v = args[1];
            require_col_vector(op, x, v)?;
            let m = x.cols();
            let mut data = x.data().to_vec();
            for row in data.chunks_mut(m) {
                for (o, &b) in row.iter_mut().zip(v.data()) {
                    if *op == Op::AddBias {
                        *o += b;
                    } else {
                        *o *= b;
                    }
                }
            }
            Tensor::from_parts(x.shape().to_vec(), data)
        }
        Op::Add => zip(x, args[1], op, |a, b| a + b)?,
        Op::Sub => zip(x, args[1], op, |a, b| a - b)?,
        Op::Mul => zip(x, args[1], op, |a, b| a * b)?,
        Op::Scale(c) => map(x, |v| v * c),
        Op::Offset(c) => map(x, |v| v + c),
        Op::Exp => map(x, f64::exp),
        Op::Log => {
            if let Some((index, &value)) = x.data().iter().enumerate().find(|(_, &v)| v.is_nan() || v <= 0.0) {
                return Err(Error::Domain { op: "log", index, value });
            }
            map(x, f64::ln)
        }
        Op::Sqrt => {
            if let Some((index, &value)) = x.data().iter().enumerate().find(|(_, &v)| v.is_nan() || v < 0.0) {
                return Err(Error::Domain { op: "sqrt", index, value });
            }
            map(x, f64::sqrt)
        }
        Op::Tanh => map(x, f64::tanh),
        Op::Square => map(x, |v| v * v),
        Op::LeakyRelu(slope) => map(x, |v| if v > 0.0 { v } else { slope * v }),
        Op::Sum => Tensor::scalar(x.data().iter().sum()),
        Op::Mean => Tensor::scalar(x.data().iter().sum::<f64>() / x.len() as f64),
        Op::RowSum => {
            require_matrix(op, x)?;
            let sums = x.data().chunks(x.cols()).map(|r| r.iter().sum()).collect();
            Tensor::from_parts(vec![x.rows()], sums)
        }
        Op::LogSumExp => Tensor::scalar(logsumexp(x.data())),
        Op::SelectCols(cols) => {
            require_matrix(op, x)?;
            check_columns(op, cols, x.cols())?;
            let mut data = Vec::with_capacity(x.rows() * cols.len());
            for row in x.data().chunks(x.cols()) {
                data.extend(cols.iter().map(|&c| row[c]));
            }
            Tensor::from_parts(vec![x.rows(), cols.len()], data)
        }
        Op::MergeCols { left, right } => {
            let y = args[1];
            require_matrix(op, x)?;
            require_matrix(op, y)?;
            let width = left.len() + right.len();
            check_columns(op, left, width)?;
            check_columns(op, right, width)?;
            let mut seen = vec![false; width];
            for &c in left.iter().chain(right) {
                if std::mem::replace(&mut seen[c], true) {
                    return Err(dim_err(format!("merge_cols: column {c} assigned twice")));
                }
            }
            if x.rows() != y.rows() || x.cols() != left.len() || y.cols() != right.len() {
                return Err(dim_err(format!(
                    "merge_cols: operands {:?} and {:?} do not match column maps of sizes {} and {}",
                    x.shape(),
                    y.shape(),
                    left.len(),
                    right.len()
                )));
            }
            let mut data = vec![0.0; x.rows() * width];
            for (i, out) in data.chunks_mut(width).enumerate() {
                for (j, &c) in left.iter().enumerate() {
                    out[c] = x.at(i, j);
                }
                for (j, &c) in right.iter().enumerate() {
                    out[c] = y.at(i, j);
                }
            }
            Tensor::from_parts(vec![x.rows(), width], data)
        }
        Op::Gather(perm) => {
            if perm.len() != x.len() || perm.iter().any(|&p| p >= x.len()) {
                return Err(dim_err(format!(
                    "gather: permutation of length {} for {} entries",
                    perm.len(),
                    x.len()
                )));
            }
            let data = perm.iter().map(|&p| x.data()[p]).collect();
            Tensor::from_parts(vec![perm.len()], data)
        }
    })
}

/// Stable descending order of `values`; ties keep ascending index order.
pub fn descending_permutation(values: &[f64]) -> Result<Vec<usize>> {
    if let Some(i) = values.iter().position(|v| v.is_nan()) {
        return Err(Error::Numeric(format!("NaN at index {i} cannot be sorted")));
    }
    let mut perm: Vec<usize> = (0..values.len()).collect();
    perm.sort_by(|&i, &j| values[j].total_cmp(&values[i]));
    Ok(perm)
}
