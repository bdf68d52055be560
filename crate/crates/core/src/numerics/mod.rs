//! Dense complex linear algebra and the numeric helpers shared by every
//! detector.

mod counter;
mod matrix;
mod qr;
mod random;
pub mod special;

pub use counter::OpCounter;
pub use matrix::{ComplexMatrix, ComplexVector};
pub use qr::{qrd, QrFactors, RANK_TOLERANCE};
pub use random::{gaussian_complex_vector, seeded_rng, substream_rng, TrialRng};

use num_complex::Complex64;

/// `‖z − R·x‖²`, counting one multiply and one add per term of every row
/// product plus one of each for the magnitude square.
///
/// The count matches the sum of the per-layer branch metrics, so a full
/// path costs the same whether it is evaluated at once or layer by layer.
pub fn counted_residual_metric(
    z: &ComplexVector,
    r: &ComplexMatrix,
    x: &ComplexVector,
    counter: &mut OpCounter,
) -> f64 {
    debug_assert_eq!(z.len(), r.rows());
    debug_assert_eq!(x.len(), r.cols());
    let n = r.cols();
    let mut total = 0.0;
    for row in 0..r.rows() {
        let start = row.min(n);
        let mut w = z[row];
        for k in start..n {
            w -= r[(row, k)] * x[k];
        }
        let terms = (n - start) as u64;
        counter.mults(terms + 1);
        counter.adds(terms + 1);
        total += w.norm_sqr();
    }
    total
}

/// Uncounted `‖a − b‖²`.
pub fn squared_distance(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q).norm_sqr()).sum()
}
