//! Dense linear solves backed by nalgebra's partially pivoted LU.

use nalgebra::{DMatrix, DVector};

/// Solves `(I − discount · M) x = b` for a square `M` given row by row.
/// Returns `None` if the system is singular, which cannot happen when `M`
/// is substochastic and `discount < 1`.
pub fn solve_resolvent<'a>(
    n: usize,
    discount: f64,
    row: impl Fn(usize) -> &'a [f64],
    b: &[f64],
) -> Option<Vec<f64>> {
    let mut a = DMatrix::<f64>::identity(n, n);
    for i in 0..n {
        for (j, &m) in row(i).iter().enumerate() {
            a[(i, j)] -= discount * m;
        }
    }
    let x = a.lu().solve(&DVector::from_column_slice(b))?;
    Some(x.iter().copied().collect())
}

/// `‖(I − discount · M) x − b‖∞`.
pub fn resolvent_residual<'a>(
    n: usize,
    discount: f64,
    row: impl Fn(usize) -> &'a [f64],
    x: &[f64],
    b: &[f64],
) -> f64 {
    (0..n)
        .map(|i| {
            let mx: f64 = row(i).iter().zip(x).map(|(m, xj)| m * xj).sum();
            (x[i] - discount * mx - b[i]).abs()
        })
        .fold(0.0, f64::max)
}
