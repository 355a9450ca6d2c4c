//! Dense complex helpers on top of nalgebra: general eigenvalues, inverse
//! iteration and an O(m^2) shifted Hessenberg solve.

use nalgebra::{DMatrix, DVector, Hessenberg, Schur};
use num_complex::Complex64;

use crate::{Error, Result};

pub fn to_complex(m: &DMatrix<f64>) -> DMatrix<Complex64> {
    m.map(|x| Complex64::new(x, 0.0))
}

/// Eigenvalues of a general complex matrix via complex Schur.
pub fn eigenvalues(m: &DMatrix<Complex64>) -> Result<Vec<Complex64>> {
    let n = m.nrows();
    let schur = Schur::try_new(m.clone(), f64::EPSILON, 1000 * n.max(10))
        .ok_or_else(|| Error::Eigen(format!("complex Schur did not converge (m = {n})")))?;
    let (_, t) = schur.unpack();
    Ok((0..n).map(|i| t[(i, i)]).collect())
}

/// Eigenvalues of a general real matrix via real Schur.
pub fn eigenvalues_real(m: &DMatrix<f64>) -> Result<Vec<Complex64>> {
    let n = m.nrows();
    let schur = Schur::try_new(m.clone(), f64::EPSILON, 1000 * n.max(10))
        .ok_or_else(|| Error::Eigen(format!("real Schur did not converge (m = {n})")))?;
    Ok(schur.complex_eigenvalues().iter().copied().collect())
}

/// Unit eigenvector for the eigenvalue nearest `shift` by inverse iteration.
///
/// The shift is nudged off the eigenvalue by a relative `1e-10` so the
/// factorization stays non-singular.
pub fn inverse_iteration(m: &DMatrix<Complex64>, shift: Complex64) -> Result<DVector<Complex64>> {
    let n = m.nrows();
    let scale = m.iter().map(|z| z.norm()).fold(0.0, f64::max).max(1.0);
    let mu = shift + Complex64::new(1e-10 * scale, 0.7e-10 * scale);
    let mut a = m.clone();
    for i in 0..n {
        a[(i, i)] -= mu;
    }
    let lu = a.lu();
    let mut x = DVector::from_fn(n, |i, _| Complex64::new(1.0 + (i as f64 * 0.37).sin(), 0.0));
    for _ in 0..4 {
        let y = lu
            .solve(&x)
            .ok_or_else(|| Error::Eigen("inverse iteration hit a singular shift".into()))?;
        let nrm = y.norm();
        if !nrm.is_finite() || nrm == 0.0 {
            return Err(Error::Eigen("inverse iteration diverged".into()));
        }
        x = y / Complex64::new(nrm, 0.0);
    }
    Ok(x)
}

/// `c (s I - A)^{-1} b` by a direct LU solve.
pub fn direct_resolvent(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    c: &DVector<f64>,
    s: Complex64,
) -> Option<Complex64> {
    let m = a.nrows();
    let mut r = DMatrix::from_fn(m, m, |i, j| Complex64::new(-a[(i, j)], 0.0));
    for i in 0..m {
        r[(i, i)] += s;
    }
    let rhs = DVector::from_fn(m, |i, _| Complex64::new(b[i], 0.0));
    let x = r.lu().solve(&rhs)?;
    let val: Complex64 = (0..m).map(|i| x[i] * c[i]).sum();
    val.is_finite().then_some(val)
}

/// `A = Q H Q^T` with `H` upper Hessenberg; each shifted solve
/// `c (s I - A)^{-1} b = (Q^T c)^T (s I - H)^{-1} (Q^T b)` costs O(m^2).
#[derive(Clone, Debug)]
pub struct HessenbergSolver {
    h: DMatrix<f64>,
    qtb: DVector<f64>,
    qtc: DVector<f64>,
}

impl HessenbergSolver {
    pub fn new(a: &DMatrix<f64>, b: &DVector<f64>, c: &DVector<f64>) -> Option<Self> {
        if !a.iter().all(|x| x.is_finite()) {
            return None;
        }
        let hess = Hessenberg::new(a.clone());
        let (q, h) = hess.unpack();
        let qt = q.transpose();
        Some(HessenbergSolver {
            h,
            qtb: &qt * b,
            qtc: &qt * c,
        })
    }

    pub fn dim(&self) -> usize {
        self.h.nrows()
    }

    /// `None` if a pivot vanishes (s on the spectrum).
    pub fn eval(&self, s: Complex64) -> Option<Complex64> {
        let m = self.h.nrows();
        // Row-major dense copy of sI - H restricted to its Hessenberg band;
        // Gaussian elimination with partial pivoting between adjacent rows
        // keeps the upper-Hessenberg shape.
        let mut u: Vec<Complex64> = Vec::with_capacity(m * m);
        for i in 0..m {
            for j in 0..m {
                let v = if j + 1 >= i { -self.h[(i, j)] } else { 0.0 };
                u.push(Complex64::new(v, 0.0));
            }
            u[i * m + i] += s;
        }
        let mut y: Vec<Complex64> = self.qtb.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        let scale = self.h.iter().fold(0.0f64, |a, x| a.max(x.abs())).max(s.norm()).max(1.0);
        for k in 0..m {
            if k + 1 < m && u[(k + 1) * m + k].norm() > u[k * m + k].norm() {
                for j in k..m {
                    u.swap(k * m + j, (k + 1) * m + j);
                }
                y.swap(k, k + 1);
            }
            let piv = u[k * m + k];
            if piv.norm() <= 1e-300 * scale {
                return None;
            }
            if k + 1 < m {
                let f = u[(k + 1) * m + k] / piv;
                if f != Complex64::new(0.0, 0.0) {
                    for j in k..m {
                        let t = u[k * m + j];
                        u[(k + 1) * m + j] -= f * t;
                    }
                    let t = y[k];
                    y[k + 1] -= f * t;
                }
            }
        }
        for k in (0..m).rev() {
            let mut acc = y[k];
            for j in k + 1..m {
                acc -= u[k * m + j] * y[j];
            }
            y[k] = acc / u[k * m + k];
        }
        let val: Complex64 = (0..m).map(|i| y[i] * self.qtc[i]).sum();
        val.is_finite().then_some(val)
    }
}
