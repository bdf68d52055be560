use num_complex::Complex64;

use crate::numerics::{ComplexMatrix, OpCounter};

/// `e = [zᴴz, Re(Rᴴz)ᵀ, Im(Rᴴz)ᵀ, σ_v²]`, length `2N_t + 2`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector(pub Vec<f64>);

impl FeatureVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

pub fn extract_features(z: &[Complex64], r: &ComplexMatrix, noise_variance: f64) -> FeatureVector {
    extract_features_counted(z, r, noise_variance, &mut OpCounter::new())
}

/// As [`extract_features`], tallying `zᴴz` and the triangular `Rᴴz`.
pub fn extract_features_counted(
    z: &[Complex64],
    r: &ComplexMatrix,
    noise_variance: f64,
    counter: &mut OpCounter,
) -> FeatureVector {
    let n = r.cols();
    assert_eq!(z.len(), n, "z and R disagree in size");
    assert!(noise_variance > 0.0, "noise variance must be positive");

    let energy: f64 = z.iter().map(|c| c.norm_sqr()).sum();
    counter.mults(n as u64);
    counter.adds(n as u64);

    // (Rᴴz)_j = Σ_{i≤j} conj(r_ij)·z_i
    let mut mf = vec![Complex64::new(0.0, 0.0); n];
    for (j, out) in mf.iter_mut().enumerate() {
        for i in 0..=j {
            *out += r[(i, j)].conj() * z[i];
        }
    }
    let terms = (n * (n + 1) / 2) as u64;
    counter.mults(terms);
    counter.adds(terms);

    let mut e = Vec::with_capacity(2 * n + 2);
    e.push(energy);
    e.extend(mf.iter().map(|c| c.re));
    e.extend(mf.iter().map(|c| c.im));
    e.push(noise_variance);
    FeatureVector(e)
}
