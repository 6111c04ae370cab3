//! Central-difference numerical Jacobians, used both as a production
//! diagnostic (expansion terms) and as the reference oracle for the
//! reverse-mode gradients.

use super::Matrix;
use crate::{Error, Result};

/// Jacobian of `f` at `x` by central differences with step `h`:
/// entry `(i, j) = (f_i(x + h e_j) - f_i(x - h e_j)) / (2h)`.
///
/// Returns an `out_dim x in_dim` matrix. Errors if `h` is not positive, the
/// output dimension is inconsistent across probes, or any output entry is
/// non-finite (named by input column).
pub fn numerical_jacobian<F>(f: F, x: &[f64], h: f64) -> Result<Matrix>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    if !h.is_finite() || h <= 0.0 {
        return Err(Error::invalid(format!("step h must be positive and finite, got {h}")));
    }
    if x.is_empty() {
        return Err(Error::invalid("jacobian input must be non-empty"));
    }
    let mut xp = x.to_vec();
    let mut jac: Option<Matrix> = None;
    for j in 0..x.len() {
        xp[j] = x[j] + h;
        let fp = f(&xp);
        xp[j] = x[j] - h;
        let fm = f(&xp);
        xp[j] = x[j];
        if fp.len() != fm.len() {
            return Err(Error::shape(format!(
                "f returned {} then {} outputs while probing column {j}",
                fp.len(),
                fm.len()
            )));
        }
        let m = jac.get_or_insert_with(|| Matrix::zeros(fp.len(), x.len()));
        if fp.len() != m.rows() {
            return Err(Error::shape(format!(
                "f returned {} outputs while probing column {j}, expected {}",
                fp.len(),
                m.rows()
            )));
        }
        for i in 0..fp.len() {
            let d = (fp[i] - fm[i]) / (2.0 * h);
            if !d.is_finite() {
                return Err(Error::non_finite(format!(
                    "jacobian column {j} (output {i}) is {d}"
                )));
            }
            m[(i, j)] = d;
        }
    }
    Ok(jac.expect("x is non-empty"))
}
