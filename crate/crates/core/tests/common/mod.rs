#![allow(dead_code)]

use dppsd::channel::{draw_channel_instance, ChannelInstance, Constellation};
use dppsd::dpp::PreparedInstance;
use dppsd::numerics::{substream_rng, ComplexMatrix};
use dppsd::Complex64;

pub struct Case {
    pub inst: ChannelInstance,
    pub prep: PreparedInstance,
}

/// Square `n×n` QPSK instances at the given SNRs, cycling through them.
pub fn corpus(n: usize, snrs: &[f64], count: usize, seed: u64) -> Vec<Case> {
    let c = Constellation::qpsk();
    (0..count)
        .map(|i| {
            let mut rng = substream_rng(seed, 0, i as u64);
            let snr = snrs[i % snrs.len()];
            let inst = draw_channel_instance(n, n, &c, snr, &mut rng).unwrap();
            let prep = PreparedInstance::new(&inst.y, &inst.h).unwrap();
            Case { inst, prep }
        })
        .collect()
}

/// All index vectors of length `n` over `m` symbols, `x_0` most significant.
pub fn all_index_vectors(n: usize, m: usize) -> Vec<Vec<usize>> {
    let total = m.pow(n as u32);
    (0..total)
        .map(|mut k| {
            let mut v = vec![0; n];
            for pos in (0..n).rev() {
                v[pos] = k % m;
                k /= m;
            }
            v
        })
        .collect()
}

/// `‖z − R·x‖²` straight from the definition.
pub fn direct_metric(z: &[Complex64], r: &ComplexMatrix, x: &[Complex64]) -> f64 {
    let rx = r.mul_vec(x);
    z.iter().zip(rx.iter()).map(|(a, b)| (a - b).norm_sqr()).sum()
}

/// Brute-force minimum over every candidate, optionally with a fixed top
/// symbol. Returns (metric, lexicographically first argmin).
pub fn brute_force(z: &[Complex64], r: &ComplexMatrix, c: &Constellation, root: Option<usize>) -> (f64, Vec<usize>) {
    let n = r.cols();
    let mut best = (f64::INFINITY, Vec::new());
    for idx in all_index_vectors(n, c.len()) {
        if let Some(q) = root {
            if idx[n - 1] != q {
                continue;
            }
        }
        let m = direct_metric(z, r, &c.vector(&idx));
        if m < best.0 {
            best = (m, idx);
        }
    }
    best
}
