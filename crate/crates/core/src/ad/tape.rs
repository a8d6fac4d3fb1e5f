//! Append-only Wengert tape for reverse-mode differentiation.

use super::backend::Backend;
use super::ops::{eval, matmul_nt, matmul_tn, Op};
use super::tensor::Tensor;
use crate::error::{dim_err, Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum NodeKind {
    Leaf,
    Op { op: Op, inputs: Vec<Var> },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    kind: NodeKind,
}

/// Records a forward pass so that [`Tape::backward`] can replay it in reverse.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    consumed: bool,
}

/// Gradients of a scalar loss with respect to every node that needed one.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    /// `None` when `v` does not require a gradient or is unreachable from the loss.
    pub fn wrt(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }
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

    /// Drop everything recorded so far and start a new forward pass.
    pub fn reset(&mut self) {
        self.nodes.clear();
        self.consumed = false;
    }

    /// Record a leaf. Leaves with `requires_grad` set receive gradients.
    pub fn leaf(&mut self, t: Tensor) -> Var {
        self.nodes.push(Node {
            value: t,
            kind: NodeKind::Leaf,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// Run the chain rule from `loss` back to every leaf that requires a grad.
    ///
    /// Leaf tensors also get their `grad` field populated. A tape can be
    /// differentiated once; a second call fails with [`Error::StaleTape`].
    pub fn backward(&mut self, loss: Var) -> Result<Gradients> {
        if self.consumed {
            return Err(Error::StaleTape);
        }
        let out = self.value(loss);
        if !out.is_scalar() {
            return Err(dim_err(format!("backward needs a scalar loss, got shape {:?}", out.shape())));
        }
        self.consumed = true;

        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        if !self.value(loss).requires_grad() {
            return Ok(Gradients { grads });
        }
        grads[loss.0] = Some(vec![1.0]);

        for id in (0..=loss.0).rev() {
            let node = &self.nodes[id];
            let NodeKind::Op { op, inputs } = &node.kind else {
                continue;
            };
            let Some(g) = grads[id].as_ref() else {
                continue;
            };
            let args: Vec<&Tensor> = inputs.iter().map(|v| &self.nodes[v.0].value).collect();
            let contributions = vjp(op, &args, &node.value, g);
            for ((input, arg), contrib) in inputs.iter().zip(&args).zip(contributions) {
                if !arg.requires_grad() {
                    continue;
                }
                let Some(contrib) = contrib else { continue };
                match &mut grads[input.0] {
                    Some(acc) => acc.iter_mut().zip(&contrib).for_each(|(a, c)| *a += c),
                    slot @ None => *slot = Some(contrib),
                }
            }
        }

        for (node, g) in self.nodes.iter_mut().zip(&grads) {
            if let (NodeKind::Leaf, Some(g)) = (&node.kind, g) {
                node.value.set_grad(g.clone())?;
            }
        }
        Ok(Gradients { grads })
    }
}

impl Backend for Tape {
    type Value = Var;

    fn constant(&mut self, t: Tensor) -> Var {
        self.leaf(t.with_requires_grad(false))
    }

    fn param(&mut self, t: &Tensor) -> Var {
        let mut t = t.clone().with_requires_grad(true);
        t.clear_grad();
        self.leaf(t)
    }

    fn tensor<'a>(&'a self, v: &'a Var) -> &'a Tensor {
        self.value(*v)
    }

    fn apply(&mut self, op: Op, args: &[&Var]) -> Result<Var> {
        let values: Vec<&Tensor> = args.iter().map(|v| &self.nodes[v.0].value).collect();
        let requires_grad = values.iter().any(|t| t.requires_grad());
        let value = eval(&op, &values)?.with_requires_grad(requires_grad);
        self.nodes.push(Node {
            value,
            kind: NodeKind::Op {
                op,
                inputs: args.iter().map(|v| **v).collect(),
            },
        });
        Ok(Var(self.nodes.len() - 1))
    }
}

/// Reduce an upstream gradient to a scalar operand's gradient.
fn reduce(v: impl Iterator<Item = f64>) -> Vec<f64> {
    vec![v.sum()]
}

/// Vector-Jacobian products of `op` at `args`, given output `out` and its
/// upstream gradient `g`. One entry per operand.
fn vjp(op: &Op, args: &[&Tensor], out: &Tensor, g: &[f64]) -> Vec<Option<Vec<f64>>> {
    let x = args[0];
    let unary = |f: &dyn Fn(usize) -> f64| vec![Some((0..g.len()).map(f).collect())];
    match op {
        Op::MatMul => {
            let b = args[1];
            let (n, k, m) = (x.rows(), x.cols(), b.cols());
            let da = if x.requires_grad() {
                Some(matmul_nt(g, b.data(), n, m, k))
            } else {
                None
            };
            let db = if b.requires_grad() {
                Some(matmul_tn(x.data(), g, n, k, m))
            } else {
                None
            };
            vec![da, db]
        }
        Op::AddBias => {
            let m = x.cols();
            let mut db = vec![0.0; m];
            for row in g.chunks(m) {
                db.iter_mut().zip(row).for_each(|(d, r)| *d += r);
            }
            vec![Some(g.to_vec()), Some(db)]
        }
        Op::MulCols => {
            let v = args[1].data();
            let m = x.cols();
            let mut dx = g.to_vec();
            let mut dv = vec![0.0; m];
            for (i, row) in dx.chunks_mut(m).enumerate() {
                for j in 0..m {
                    dv[j] += row[j] * x.data()[i * m + j];
                    row[j] *= v[j];
                }
            }
            vec![Some(dx), Some(dv)]
        }
        Op::Add | Op::Sub => {
            let b = args[1];
            let sign = if *op == Op::Add { 1.0 } else { -1.0 };
            let db = if b.shape() == x.shape() {
                g.iter().map(|v| sign * v).collect()
            } else {
                reduce(g.iter().map(|v| sign * v))
            };
            vec![Some(g.to_vec()), Some(db)]
        }
        Op::Mul => {
            let b = args[1];
            if b.shape() == x.shape() {
                let da = g.iter().zip(b.data()).map(|(g, b)| g * b).collect();
                let db = g.iter().zip(x.data()).map(|(g, a)| g * a).collect();
                vec![Some(da), Some(db)]
            } else {
                let s = b.item();
                let da = g.iter().map(|g| g * s).collect();
                let db = reduce(g.iter().zip(x.data()).map(|(g, a)| g * a));
                vec![Some(da), Some(db)]
            }
        }
        Op::Scale(c) => unary(&|i| g[i] * c),
        Op::Offset(_) => vec![Some(g.to_vec())],
        Op::Exp => unary(&|i| g[i] * out.data()[i]),
        Op::Log => unary(&|i| g[i] / x.data()[i]),
        Op::Sqrt => unary(&|i| g[i] * 0.5 / out.data()[i]),
        Op::Tanh => unary(&|i| {
            let t = out.data()[i];
            g[i] * (1.0 - t * t)
        }),
        Op::Square => unary(&|i| g[i] * 2.0 * x.data()[i]),
        Op::LeakyRelu(slope) => unary(&|i| if x.data()[i] > 0.0 { g[i] } else { g[i] * slope }),
        Op::Sum => vec![Some(vec![g[0]; x.len()])],
        Op::Mean => vec![Some(vec![g[0] / x.len() as f64; x.len()])],
        Op::RowSum => {
            let m = x.cols();
            vec![Some(g.iter().flat_map(|&gi| std::iter::repeat_n(gi, m)).collect())]
        }
        Op::LogSumExp => {
            let lse = out.item();
            vec![Some(x.data().iter().map(|v| g[0] * (v - lse).exp()).collect())]
        }
        Op::SelectCols(cols) => {
            let m = x.cols();
            let mut dx = vec![0.0; x.len()];
            for (i, grow) in g.chunks(cols.len()).enumerate() {
                for (j, &c) in cols.iter().enumerate() {
                    dx[i * m + c] += grow[j];
                }
            }
            vec![Some(dx)]
        }
        Op::MergeCols { left, right } => {
            let width = left.len() + right.len();
            let pick = |map: &[usize]| {
                let mut d = Vec::with_capacity(x.rows() * map.len());
                for grow in g.chunks(width) {
                    d.extend(map.iter().map(|&c| grow[c]));
                }
                d
            };
            vec![Some(pick(left)), Some(pick(right))]
        }
        Op::Gather(perm) => {
            let mut dx = vec![0.0; x.len()];
            for (i, &p) in perm.iter().enumerate() {
                dx[p] += g[i];
            }
            vec![Some(dx)]
        }
    }
}
