use super::FlowModel;
use crate::ad::Tensor;
use crate::error::{dim_err, Error, Result};

const FD_STEP: f64 = 1e-7;
const MAX_DIM: usize = 6;

/// `log|det J|` of a finite-difference Jacobian of the forward map at `x`.
///
/// Central differences with step `1e-7`; only for `D ≤ 6`.
pub fn numeric_jacobian_logdet(model: &FlowModel, x: &[f64]) -> Result<f64> {
    let d = model.dim();
    if x.len() != d {
        return Err(dim_err(format!("point of length {} for a flow of dimension {d}", x.len())));
    }
    if d > MAX_DIM {
        return Err(Error::Config(format!(
            "numeric Jacobian is limited to D <= {MAX_DIM}, got {d}"
        )));
    }
    // Rows 2j and 2j+1 are x ± h·e_j; one batched pass.
    let mut probes = Vec::with_capacity(2 * d * d);
    for j in 0..d {
        for sign in [1.0, -1.0] {
            let mut p = x.to_vec();
            p[j] += sign * FD_STEP;
            probes.extend(p);
        }
    }
    let (z, _) = model.forward_eval(&Tensor::matrix(2 * d, d, probes)?)?;
    let mut jac = vec![0.0; d * d];
    for j in 0..d {
        for i in 0..d {
            jac[i * d + j] = (z.at(2 * j, i) - z.at(2 * j + 1, i)) / (2.0 * FD_STEP);
        }
    }
    log_abs_det(jac, d)
}

/// `log|det A|` by LU with partial pivoting. `a` is row-major `d × d`.
pub fn log_abs_det(mut a: Vec<f64>, d: usize) -> Result<f64> {
    if a.len() != d * d {
        return Err(dim_err(format!("{} entries do not form a {d}x{d} matrix", a.len())));
    }
    let mut acc = 0.0;
    for col in 0..d {
        let pivot = (col..d)
            .max_by(|&r, &s| a[r * d + col].abs().total_cmp(&a[s * d + col].abs()))
            .expect("non-empty range");
        let pv = a[pivot * d + col];
        if pv == 0.0 || !pv.is_finite() {
            return Err(Error::Numeric(format!("singular Jacobian (pivot {pv} in column {col})")));
        }
        if pivot != col {
            for k in 0..d {
                a.swap(col * d + k, pivot * d + k);
            }
        }
        acc += pv.abs().ln();
        for r in col + 1..d {
            let f = a[r * d + col] / pv;
            for k in col..d {
                a[r * d + k] -= f * a[col * d + k];
            }
        }
    }
    Ok(acc)
}
