//! Dense Cholesky factorization for the small SPD systems of the ridge head.

use super::{AutodiffError, Tensor};

/// Lower-triangular factor `L` with `A = L Lᵀ`.
#[derive(Clone, Debug)]
pub struct Cholesky {
    n: usize,
    lower: Vec<f64>,
}

impl Cholesky {
    /// Factorizes `a`, reading only its lower triangle.
    pub fn factor(a: &Tensor) -> Result<Self, AutodiffError> {
        let n = a.rows();
        if a.cols() != n {
            return Err(AutodiffError::Shape(format!(
                "cholesky of non-square {}x{}",
                a.rows(),
                a.cols()
            )));
        }
        let mut l = vec![0.0; n * n];
        for j in 0..n {
            let mut diag = a.get(j, j);
            for k in 0..j {
                diag -= l[j * n + k] * l[j * n + k];
            }
            if !(diag > 0.0) || !diag.is_finite() {
                return Err(AutodiffError::NotPositiveDefinite { pivot: j, value: diag });
            }
            let d = diag.sqrt();
            l[j * n + j] = d;
            for i in (j + 1)..n {
                let mut s = a.get(i, j);
                for k in 0..j {
                    s -= l[i * n + k] * l[j * n + k];
                }
                l[i * n + j] = s / d;
            }
        }
        Ok(Self { n, lower: l })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Solves `A X = B` for every column of `b`.
    pub fn solve(&self, b: &Tensor) -> Result<Tensor, AutodiffError> {
        let n = self.n;
        if b.rows() != n {
            return Err(AutodiffError::Shape(format!(
                "solve with {n}x{n} system and {}x{} rhs",
                b.rows(),
                b.cols()
            )));
        }
        let m = b.cols();
        let mut x = b.clone();
        let l = &self.lower;
        for c in 0..m {
            // forward: L y = b
            for i in 0..n {
                let mut s = x.get(i, c);
                for k in 0..i {
                    s -= l[i * n + k] * x.get(k, c);
                }
                x.set(i, c, s / l[i * n + i]);
            }
            // backward: Lᵀ x = y
            for i in (0..n).rev() {
                let mut s = x.get(i, c);
                for k in (i + 1)..n {
                    s -= l[k * n + i] * x.get(k, c);
                }
                x.set(i, c, s / l[i * n + i]);
            }
        }
        Ok(x)
    }
}

/// Maximum relative asymmetry `|a_ij - a_ji| / max|a|`.
pub fn asymmetry(a: &Tensor) -> f64 {
    let scale = a.max_abs().max(f64::MIN_POSITIVE);
    let n = a.rows();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in 0..i {
            worst = worst.max((a.get(i, j) - a.get(j, i)).abs());
        }
    }
    worst / scale
}
