//! Central finite-difference verification of analytic gradients.

use crate::error::{Error, Result};
use crate::numerics::matrix::Matrix;
use crate::numerics::tape::{NodeId, Tape};

const H: f64 = 1e-6;

/// Compares reverse-mode gradients of a scalar function against central
/// finite differences at the given point.
///
/// `f` rebuilds the computation on a fresh tape from leaves for each
/// parameter (in order) and returns the scalar output node. Returns the
/// maximum over all parameter entries of
/// |analytic - numeric| / max(1, |numeric|).
pub fn grad_check<F>(params: &[Matrix], f: F) -> Result<f64>
where
    F: Fn(&mut Tape, &[NodeId]) -> Result<NodeId>,
{
    let eval = |point: &[Matrix]| -> Result<(f64, Vec<Matrix>)> {
        let mut tape = Tape::new();
        let leaves: Vec<NodeId> = point.iter().map(|p| tape.leaf(p.clone())).collect();
        let out = f(&mut tape, &leaves)?;
        let val = tape.value(out).get(0, 0);
        if !val.is_finite() {
            return Err(Error::NonFinite("grad_check objective".into()));
        }
        tape.backward(out)?;
        let grads = leaves.iter().map(|&l| tape.grad(l).clone()).collect();
        Ok((val, grads))
    };

    let (_, analytic) = eval(params)?;

    let mut point: Vec<Matrix> = params.to_vec();
    let mut max_err = 0.0_f64;
    for pi in 0..point.len() {
        for idx in 0..point[pi].data().len() {
            let orig = point[pi].data()[idx];
            point[pi].data_mut()[idx] = orig + H;
            let (fp, _) = eval(&point)?;
            point[pi].data_mut()[idx] = orig - H;
            let (fm, _) = eval(&point)?;
            point[pi].data_mut()[idx] = orig;
            let numeric = (fp - fm) / (2.0 * H);
            let a = analytic[pi].data()[idx];
            let err = (a - numeric).abs() / numeric.abs().max(1.0);
            if err > max_err {
                max_err = err;
            }
        }
    }
    Ok(max_err)
}

pub use grad_check as finite_diff_check;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_is_exact_to_fd_resolution() {
        // f(x) = x^2 at x = 3: analytic 6, central difference 6
        let x = Matrix::new(1, 1, vec![3.0]).unwrap();
        let err = grad_check(&[x], |t, leaves| {
            let sq = t.square(leaves[0]);
            Ok(t.sum_all(sq))
        })
        .unwrap();
        assert!(err <= 1e-9, "error {err}");
    }

    #[test]
    fn non_finite_objective_rejected() {
        let x = Matrix::new(1, 1, vec![1e308]).unwrap();
        let res = grad_check(&[x], |t, leaves| {
            let sq = t.square(leaves[0]);
            Ok(t.sum_all(sq))
        });
        assert!(res.is_err());
    }
}
