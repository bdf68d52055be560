use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::ComplexVector;

/// Generator used for every simulated quantity. ChaCha keeps streams
/// identical across platforms.
pub type TrialRng = ChaCha8Rng;

pub fn seeded_rng(seed: u64) -> TrialRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Independent generator for sub-task `index` of stream `stream` under `seed`.
///
/// Trials and dataset samples each take their own substream, so results do
/// not depend on scheduling or on how many items run in parallel.
pub fn substream_rng(seed: u64, stream: u64, index: u64) -> TrialRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    rng.set_stream(stream);
    rng
}

/// `n` i.i.d. circularly symmetric complex Gaussian entries with
/// `E|v|² = variance`.
pub fn gaussian_complex_vector<R: Rng + ?Sized>(n: usize, variance: f64, rng: &mut R) -> ComplexVector {
    let scale = (variance / 2.0).sqrt();
    ComplexVector(
        (0..n)
            .map(|_| {
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                Complex64::new(scale * re, scale * im)
            })
            .collect(),
    )
}
