//! Central finite differences used wherever an analytic derivative is not supplied.

use crate::{Matrix, Vector};

/// Per-coordinate central-difference step, `1e-6·(1 + |x_i|)`.
#[inline]
pub fn step(xi: f64) -> f64 {
    1e-6 * (1.0 + xi.abs())
}

pub fn gradient<F>(f: F, x: &Vector) -> Vector
where
    F: Fn(&Vector) -> f64,
{
    let mut probe = x.clone();
    Vector::from_iterator(
        x.len(),
        (0..x.len()).map(|i| {
            let h = step(x[i]);
            probe[i] = x[i] + h;
            let fp = f(&probe);
            probe[i] = x[i] - h;
            let fm = f(&probe);
            probe[i] = x[i];
            (fp - fm) / (2.0 * h)
        }),
    )
}

/// Jacobian of `f: R^n → R^m` as an `m × n` matrix.
pub fn jacobian<F>(f: F, x: &Vector) -> Matrix
where
    F: Fn(&Vector) -> Vector,
{
    let mut probe = x.clone();
    let mut columns = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let h = step(x[i]);
        probe[i] = x[i] + h;
        let fp = f(&probe);
        probe[i] = x[i] - h;
        let fm = f(&probe);
        probe[i] = x[i];
        columns.push((fp - fm) / (2.0 * h));
    }
    let rows = columns.first().map_or(0, |c| c.len());
    Matrix::from_fn(rows, x.len(), |r, c| columns[c][r])
}

/// Derivative of `s ↦ f(x + s·direction)` at `s = 0`.
pub fn directional<F>(f: F, x: &Vector, direction: &Vector, h: f64) -> f64
where
    F: Fn(&Vector) -> f64,
{
    (f(&(x + direction * h)) - f(&(x - direction * h))) / (2.0 * h)
}
