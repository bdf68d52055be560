use num_complex::Complex64;

use super::ComplexMatrix;
use crate::{Error, Result};

/// Diagonal entries of `R` at or below this magnitude mark the channel as
/// rank deficient.
pub const RANK_TOLERANCE: f64 = 1e-12;

/// `H = [Q1 Q2]·[R; 0]` with `diag(R)` real and strictly positive.
#[derive(Debug, Clone, PartialEq)]
pub struct QrFactors {
    /// First `N_t` columns of the unitary factor (`N_r × N_t`).
    pub q1: ComplexMatrix,
    /// Remaining `N_r − N_t` columns (`N_r × (N_r − N_t)`, empty when square).
    pub q2: ComplexMatrix,
    /// Upper triangular `N_t × N_t`.
    pub r: ComplexMatrix,
}

impl QrFactors {
    /// The full `N_r × N_r` unitary factor `[Q1 Q2]`.
    pub fn q(&self) -> ComplexMatrix {
        let (rows, n1, n2) = (self.q1.rows(), self.q1.cols(), self.q2.cols());
        ComplexMatrix::from_fn(rows, n1 + n2, |i, j| {
            if j < n1 {
                self.q1[(i, j)]
            } else {
                self.q2[(i, j - n1)]
            }
        })
    }
}

/// Householder QR of a tall complex matrix.
///
/// After the reflections every row of `R` is rotated by the conjugate phase
/// of its diagonal entry (and the matching column of `Q1` by the phase), so
/// the factorization is unique.
pub fn qrd(h: &ComplexMatrix) -> Result<QrFactors> {
    let (m, n) = (h.rows(), h.cols());
    if n == 0 || m < n {
        return Err(Error::InvalidArgument(format!(
            "qrd needs rows >= cols >= 1, got {m}x{n}"
        )));
    }

    let mut a = h.clone();
    let mut q = ComplexMatrix::identity(m);
    let mut v = vec![Complex64::new(0.0, 0.0); m];

    for k in 0..n {
        let norm_x = (k..m).map(|i| a[(i, k)].norm_sqr()).sum::<f64>().sqrt();
        if norm_x == 0.0 {
            continue;
        }
        let x0 = a[(k, k)];
        let phase = if x0.norm() == 0.0 {
            Complex64::new(1.0, 0.0)
        } else {
            x0 / x0.norm()
        };
        // v = x + e^{iθ}‖x‖e₁ avoids cancellation in the first component
        for i in k..m {
            v[i] = a[(i, k)];
        }
        v[k] += phase * norm_x;
        let v_norm_sqr: f64 = (k..m).map(|i| v[i].norm_sqr()).sum();
        if v_norm_sqr == 0.0 {
            continue;
        }
        let tau = 2.0 / v_norm_sqr;

        // A ← (I − τvvᴴ)A
        for j in k..n {
            let dot: Complex64 = (k..m).map(|i| v[i].conj() * a[(i, j)]).sum();
            let s = dot * tau;
            for i in k..m {
                let vi = v[i];
                a[(i, j)] -= vi * s;
            }
        }
        // Q ← Q(I − τvvᴴ)
        for i in 0..m {
            let dot: Complex64 = (k..m).map(|l| q[(i, l)] * v[l]).sum();
            let s = dot * tau;
            for l in k..m {
                let vl = v[l];
                q[(i, l)] -= s * vl.conj();
            }
        }
    }

    let mut r = ComplexMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            r[(i, j)] = a[(i, j)];
        }
    }

    for k in 0..n {
        let d = r[(k, k)];
        let magnitude = d.norm();
        if magnitude <= RANK_TOLERANCE || !magnitude.is_finite() {
            return Err(Error::RankDeficient {
                column: k,
                magnitude,
            });
        }
        let phase = d / magnitude;
        let conj = phase.conj();
        for j in k..n {
            r[(k, j)] *= conj;
        }
        r[(k, k)] = Complex64::new(magnitude, 0.0);
        for i in 0..m {
            q[(i, k)] *= phase;
        }
    }

    Ok(QrFactors {
        q1: q.columns(0, n),
        q2: q.columns(n, m),
        r,
    })
}
