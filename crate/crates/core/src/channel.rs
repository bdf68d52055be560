//! Constellations, the `y = Hx + v` system model and zero-forcing.

use num_complex::Complex64;
use rand::Rng;

use crate::numerics::{gaussian_complex_vector, qrd, ComplexMatrix, ComplexVector};
use crate::{Error, Result};

/// Entries closer than this to a symbol are identified with it.
const POINT_TOLERANCE: f64 = 1e-9;

/// Ordered symbol alphabet with unit average energy and bit labels.
///
/// Symbol indices are the stable identifiers used everywhere else: sub-tree
/// `q`, network output `q` and tie-breaking all refer to `symbols[q]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Constellation {
    name: String,
    symbols: Vec<Complex64>,
    labels: Vec<u32>,
    bits_per_symbol: u32,
}

impl Constellation {
    /// Gray-labeled QPSK, `(±1 ± j)/√2`, in counter-clockwise order from the
    /// first quadrant.
    pub fn qpsk() -> Self {
        let a = std::f64::consts::FRAC_1_SQRT_2;
        Self {
            name: "qpsk".into(),
            symbols: vec![
                Complex64::new(a, a),
                Complex64::new(-a, a),
                Complex64::new(-a, -a),
                Complex64::new(a, -a),
            ],
            labels: vec![0b00, 0b01, 0b11, 0b10],
            bits_per_symbol: 2,
        }
    }

    /// Gray-labeled square QAM with `2^bits_per_symbol` points, normalized to
    /// unit average energy. `bits_per_symbol` must be even.
    pub fn square_qam(bits_per_symbol: u32) -> Result<Self> {
        if bits_per_symbol == 0 || bits_per_symbol % 2 != 0 || bits_per_symbol > 12 {
            return Err(Error::InvalidArgument(format!(
                "square QAM needs an even number of bits in 2..=12, got {bits_per_symbol}"
            )));
        }
        if bits_per_symbol == 2 {
            return Ok(Self::qpsk());
        }
        let half = bits_per_symbol / 2;
        let side = 1u32 << half;
        let levels: Vec<f64> = (0..side).map(|i| 2.0 * i as f64 - (side - 1) as f64).collect();
        let energy = 2.0 * levels.iter().map(|l| l * l).sum::<f64>() / side as f64;
        let scale = 1.0 / energy.sqrt();
        let gray = |i: u32| i ^ (i >> 1);
        let mut symbols = Vec::with_capacity((side * side) as usize);
        let mut labels = Vec::with_capacity(symbols.capacity());
        for i in 0..side {
            for q in 0..side {
                symbols.push(Complex64::new(levels[i as usize] * scale, levels[q as usize] * scale));
                labels.push((gray(i) << half) | gray(q));
            }
        }
        Ok(Self {
            name: format!("qam{}", side * side),
            symbols,
            labels,
            bits_per_symbol,
        })
    }

    /// Looks up a constellation by its name (`qpsk`, `qam16`, `qam64`).
    pub fn by_name(name: &str) -> Result<Self> {
        match name.to_ascii_lowercase().as_str() {
            "qpsk" | "qam4" | "4qam" => Ok(Self::qpsk()),
            "qam16" | "16qam" => Self::square_qam(4),
            "qam64" | "64qam" => Self::square_qam(6),
            other => Err(Error::InvalidArgument(format!("unknown constellation `{other}`"))),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    #[inline]
    pub fn symbols(&self) -> &[Complex64] {
        &self.symbols
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn bits_per_symbol(&self) -> u32 {
        self.bits_per_symbol
    }

    pub fn label(&self, index: usize) -> u32 {
        self.labels[index]
    }

    pub fn average_energy(&self) -> f64 {
        self.symbols.iter().map(|s| s.norm_sqr()).sum::<f64>() / self.len() as f64
    }

    /// Index of the symbol nearest to `point`; ties go to the lower index.
    pub fn nearest(&self, point: Complex64) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (i, s) in self.symbols.iter().enumerate() {
            let d = (point - s).norm_sqr();
            if d < best_d {
                best = i;
                best_d = d;
            }
        }
        best
    }

    /// Index of `point` if it is (numerically) a constellation symbol.
    pub fn index_of(&self, point: Complex64) -> Option<usize> {
        let i = self.nearest(point);
        ((point - self.symbols[i]).norm() <= POINT_TOLERANCE).then_some(i)
    }

    pub fn indices_of(&self, x: &[Complex64]) -> Result<Vec<usize>> {
        x.iter()
            .enumerate()
            .map(|(index, &p)| self.index_of(p).ok_or(Error::NotAConstellationPoint { index }))
            .collect()
    }

    pub fn vector(&self, indices: &[usize]) -> ComplexVector {
        ComplexVector(indices.iter().map(|&i| self.symbols[i]).collect())
    }
}

/// One realization of `y = H·x + v`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelInstance {
    pub h: ComplexMatrix,
    pub x_true: ComplexVector,
    pub x_indices: Vec<usize>,
    pub v: ComplexVector,
    pub y: ComplexVector,
    /// `σ_v²` per complex receive dimension.
    pub noise_variance: f64,
}

/// `σ_v² = E_s·N_t / 10^(snr/10)` with `E_s = 1`.
pub fn snr_to_noise_variance(snr_db: f64, n_t: usize) -> f64 {
    n_t as f64 / 10f64.powf(snr_db / 10.0)
}

/// Draws `H` with i.i.d. `CN(0, 1)` entries, uniform symbols and noise at
/// the given SNR. The draw order (H, then symbols, then noise) is fixed.
pub fn draw_channel_instance<R: Rng + ?Sized>(
    n_t: usize,
    n_r: usize,
    constellation: &Constellation,
    snr_db: f64,
    rng: &mut R,
) -> Result<ChannelInstance> {
    draw_with_noise_variance(n_t, n_r, constellation, snr_to_noise_variance(snr_db, n_t), rng)
}

/// As [`draw_channel_instance`] but with `σ_v²` given directly.
pub fn draw_with_noise_variance<R: Rng + ?Sized>(
    n_t: usize,
    n_r: usize,
    constellation: &Constellation,
    noise_variance: f64,
    rng: &mut R,
) -> Result<ChannelInstance> {
    if n_t == 0 || n_r < n_t {
        return Err(Error::InvalidArgument(format!(
            "need n_r >= n_t >= 1, got n_t = {n_t}, n_r = {n_r}"
        )));
    }
    if !(noise_variance > 0.0) || !noise_variance.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "noise variance must be positive and finite, got {noise_variance}"
        )));
    }
    let h = ComplexMatrix::new(n_r, n_t, gaussian_complex_vector(n_r * n_t, 1.0, rng).into_inner())?;
    let x_indices: Vec<usize> = (0..n_t).map(|_| rng.random_range(0..constellation.len())).collect();
    let x_true = constellation.vector(&x_indices);
    let v = gaussian_complex_vector(n_r, noise_variance, rng);
    let mut y = h.mul_vec(&x_true);
    for (yi, vi) in y.iter_mut().zip(v.iter()) {
        *yi += vi;
    }
    Ok(ChannelInstance {
        h,
        x_true,
        x_indices,
        v,
        y,
        noise_variance,
    })
}

/// Componentwise slicing of the least-squares estimate `(HᴴH)⁻¹Hᴴy`.
///
/// The estimate is computed as `R⁻¹Q1ᴴy` from the QR factors.
pub fn zero_forcing_detect(
    y: &[Complex64],
    h: &ComplexMatrix,
    constellation: &Constellation,
) -> Result<ComplexVector> {
    let estimate = zero_forcing_estimate(y, h)?;
    Ok(slice(&estimate, constellation))
}

/// Unsliced least-squares estimate.
pub fn zero_forcing_estimate(y: &[Complex64], h: &ComplexMatrix) -> Result<ComplexVector> {
    if y.len() != h.rows() {
        return Err(Error::DimensionMismatch {
            what: "received vector",
            expected: h.rows(),
            found: y.len(),
        });
    }
    let qr = qrd(h)?;
    let z = qr.q1.conj_transpose_mul_vec(y);
    Ok(back_substitute(&qr.r, &z))
}

/// Solves `R·x = z` for upper triangular `R`.
pub fn back_substitute(r: &ComplexMatrix, z: &[Complex64]) -> ComplexVector {
    let n = r.cols();
    let mut x = ComplexVector::zeros(n);
    for i in (0..n).rev() {
        let mut acc = z[i];
        for k in i + 1..n {
            acc -= r[(i, k)] * x[k];
        }
        x[i] = acc / r[(i, i)];
    }
    x
}

fn slice(estimate: &[Complex64], constellation: &Constellation) -> ComplexVector {
    ComplexVector(
        estimate
            .iter()
            .map(|&e| constellation.symbols()[constellation.nearest(e)])
            .collect(),
    )
}

/// Number of differing bits between the labels of two symbol vectors.
pub fn bits_diff(a: &[Complex64], b: &[Complex64], constellation: &Constellation) -> Result<u64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            what: "symbol vectors",
            expected: a.len(),
            found: b.len(),
        });
    }
    let ia = constellation.indices_of(a)?;
    let ib = constellation.indices_of(b)?;
    Ok(ia
        .iter()
        .zip(&ib)
        .map(|(&p, &q)| u64::from((constellation.label(p) ^ constellation.label(q)).count_ones()))
        .sum())
}
