//! Small vector helpers and the operator abstraction used by the eigensolver.

use nalgebra::DMatrix;

/// A symmetric linear map on `R^dim`, applied without materialisation.
pub trait SymmetricOperator: Sync {
    fn dim(&self) -> usize;

    /// Writes `A x` into `out`. Both slices have length `dim()`.
    fn apply(&self, x: &[f64], out: &mut [f64]);
}

impl SymmetricOperator for DMatrix<f64> {
    fn dim(&self) -> usize {
        self.nrows()
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) {
        let n = self.nrows();
        out.iter_mut().for_each(|v| *v = 0.0);
        // Column-major storage: accumulate column by column.
        for (j, &xj) in x.iter().enumerate() {
            if xj == 0.0 {
                continue;
            }
            let col = &self.as_slice()[j * n..(j + 1) * n];
            axpy(xj, col, out);
        }
    }
}

/// `alpha·I − A`, used to turn smallest eigenpairs into largest ones.
pub struct Shifted<'a, A: SymmetricOperator> {
    pub inner: &'a A,
    pub shift: f64,
}

impl<A: SymmetricOperator> SymmetricOperator for Shifted<'_, A> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) {
        self.inner.apply(x, out);
        for (o, &xi) in out.iter_mut().zip(x) {
            *o = self.shift * xi - *o;
        }
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `y += alpha·x`
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn scale(alpha: f64, x: &mut [f64]) {
    x.iter_mut().for_each(|v| *v *= alpha);
}

/// `⌈f·n⌉` robust to representation error in `f` (0.1·300 is not exactly 30).
pub fn ceil_fraction(f: f64, n: usize) -> usize {
    let x = f * n as f64;
    let r = x.round();
    if (x - r).abs() <= 1e-9 * x.abs().max(1.0) {
        r as usize
    } else {
        x.ceil() as usize
    }
}

/// `⌊f·n⌋` with the same tolerance as [`ceil_fraction`].
pub fn floor_fraction(f: f64, n: usize) -> usize {
    let x = f * n as f64;
    let r = x.round();
    if (x - r).abs() <= 1e-9 * x.abs().max(1.0) {
        r as usize
    } else {
        x.floor() as usize
    }
}
