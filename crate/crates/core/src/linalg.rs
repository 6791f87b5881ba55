//! Small dense linear solves used for exact policy evaluation and stationary
//! distributions.

use nalgebra::{DMatrix, DVector};

/// Solves `a · x = b` by partial-pivot LU followed by `refine` steps of
/// iterative refinement. Returns `None` if `a` is singular.
pub(crate) fn solve(a: &DMatrix<f64>, b: &DVector<f64>, refine: usize) -> Option<DVector<f64>> {
    let lu = a.clone().lu();
    let mut x = lu.solve(b)?;
    for _ in 0..refine {
        let r = b - a * &x;
        let dx = lu.solve(&r)?;
        x += dx;
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}
