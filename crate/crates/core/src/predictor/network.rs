use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{hidden_dim, input_dim, FeatureVector};
use crate::numerics::OpCounter;
use crate::{Error, Result};

/// `φ(γ) = exp(−γ²)`: Gaussian RBF with center 0 and width 1.
#[inline]
pub fn gaussian_activation(gamma: f64) -> f64 {
    (-gamma * gamma).exp()
}

/// Per-feature affine map `(e − mean) / scale` applied before the first
/// layer. Statistics come from the training set and travel with the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Normalization {
    pub fn identity(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            scale: vec![1.0; dim],
        }
    }

    /// Mean and population standard deviation per column of `rows`;
    /// constant columns keep scale 1.
    pub fn fit<'a>(rows: impl Iterator<Item = &'a [f64]>, dim: usize) -> Self {
        let mut count = 0usize;
        let mut mean = vec![0.0; dim];
        let mut m2 = vec![0.0; dim];
        for row in rows {
            count += 1;
            for j in 0..dim {
                let delta = row[j] - mean[j];
                mean[j] += delta / count as f64;
                m2[j] += delta * (row[j] - mean[j]);
            }
        }
        let scale = m2
            .iter()
            .map(|&s| {
                let sd = if count > 0 { (s / count as f64).sqrt() } else { 0.0 };
                if sd > 1e-12 && sd.is_finite() {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, scale }
    }

    pub fn apply(&self, raw: &[f64], out: &mut [f64]) {
        for (j, o) in out.iter_mut().enumerate() {
            *o = (raw[j] - self.mean[j]) / self.scale[j];
        }
    }
}

/// Single-hidden-layer Gaussian RBF network predicting the `|𝕊|` sub-tree
/// minimum distances `g_q` from the reduced feature vector.
///
/// Matrices are row-major: `w1` is hidden × input, `w2` is output × hidden.
#[derive(Debug, Clone, PartialEq)]
pub struct RbfnModel {
    pub n_t: usize,
    pub constellation_size: usize,
    pub normalization: Normalization,
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

impl RbfnModel {
    pub fn zeros(n_t: usize, constellation_size: usize) -> Self {
        let (i, h, o) = (input_dim(n_t), hidden_dim(n_t, constellation_size), constellation_size);
        Self {
            n_t,
            constellation_size,
            normalization: Normalization::identity(i),
            w1: vec![0.0; h * i],
            b1: vec![0.0; h],
            w2: vec![0.0; o * h],
            b2: vec![0.0; o],
        }
    }

    /// Parameters uniform in `±1/√fan_in` of their layer.
    pub fn random<R: Rng + ?Sized>(n_t: usize, constellation_size: usize, rng: &mut R) -> Self {
        let mut m = Self::zeros(n_t, constellation_size);
        let a1 = 1.0 / (m.input_dim() as f64).sqrt();
        let a2 = 1.0 / (m.hidden_dim() as f64).sqrt();
        for w in m.w1.iter_mut().chain(m.b1.iter_mut()) {
            *w = rng.random_range(-a1..=a1);
        }
        for w in m.w2.iter_mut().chain(m.b2.iter_mut()) {
            *w = rng.random_range(-a2..=a2);
        }
        m
    }

    #[inline]
    pub fn input_dim(&self) -> usize {
        input_dim(self.n_t)
    }

    #[inline]
    pub fn hidden_dim(&self) -> usize {
        hidden_dim(self.n_t, self.constellation_size)
    }

    #[inline]
    pub fn output_dim(&self) -> usize {
        self.constellation_size
    }

    pub fn param_count(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + self.b2.len()
    }

    /// `θ = [w1, b1, w2, b2]` flattened.
    pub fn params(&self) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.param_count());
        p.extend_from_slice(&self.w1);
        p.extend_from_slice(&self.b1);
        p.extend_from_slice(&self.w2);
        p.extend_from_slice(&self.b2);
        p
    }

    pub fn set_params(&mut self, theta: &[f64]) {
        assert_eq!(theta.len(), self.param_count(), "parameter vector length");
        let mut rest = theta;
        for part in [&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2] {
            let (head, tail) = rest.split_at(part.len());
            part.copy_from_slice(head);
            rest = tail;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.params().iter().all(|p| p.is_finite())
            && self
                .normalization
                .mean
                .iter()
                .chain(&self.normalization.scale)
                .all(|p| p.is_finite())
    }

    /// `w2·φ(w1·ê + b1) + b2` on the normalized features `ê`.
    pub fn forward(&self, features: &FeatureVector) -> Result<Vec<f64>> {
        self.check_input(features)?;
        let mut x = vec![0.0; self.input_dim()];
        self.normalization.apply(features.as_slice(), &mut x);
        let mut hidden = vec![0.0; self.hidden_dim()];
        let mut out = vec![0.0; self.output_dim()];
        Layout::of(self).forward(&self.params_view(), &x, &mut hidden, &mut out);
        Ok(out)
    }

    /// [`RbfnModel::forward`], tallying normalization, the network itself
    /// and nothing else. See [`RbfnModel::inference_cost`] for the network
    /// share.
    pub fn forward_counted(&self, features: &FeatureVector, counter: &mut OpCounter) -> Result<Vec<f64>> {
        let out = self.forward(features)?;
        let i = self.input_dim() as u64;
        counter.mults(i);
        counter.adds(i);
        *counter += self.inference_cost();
        Ok(out)
    }

    /// Arithmetic of one network evaluation on normalized input: a
    /// multiply-accumulate per weight, a bias add per hidden and output
    /// node, and one square per hidden activation.
    pub fn inference_cost(&self) -> OpCounter {
        let (i, h, o) = (self.input_dim() as u64, self.hidden_dim() as u64, self.output_dim() as u64);
        let macs = h * i + o * h;
        OpCounter {
            complex_mults: macs + h,
            complex_adds: macs + h + o,
        }
    }

    pub(crate) fn check_input(&self, features: &FeatureVector) -> Result<()> {
        if features.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                what: "feature vector",
                expected: self.input_dim(),
                found: features.len(),
            });
        }
        Ok(())
    }

    fn params_view(&self) -> ParamsView<'_> {
        ParamsView {
            w1: &self.w1,
            b1: &self.b1,
            w2: &self.w2,
            b2: &self.b2,
        }
    }
}

pub(crate) struct ParamsView<'a> {
    pub w1: &'a [f64],
    pub b1: &'a [f64],
    pub w2: &'a [f64],
    pub b2: &'a [f64],
}

/// Network shape, shared by inference and training on a flat `θ`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Layout {
    pub input: usize,
    pub hidden: usize,
    pub output: usize,
}

impl Layout {
    pub fn of(model: &RbfnModel) -> Self {
        Self {
            input: model.input_dim(),
            hidden: model.hidden_dim(),
            output: model.output_dim(),
        }
    }

    pub fn len(&self) -> usize {
        self.hidden * self.input + self.hidden + self.output * self.hidden + self.output
    }

    pub fn split<'a>(&self, theta: &'a [f64]) -> ParamsView<'a> {
        let (w1, rest) = theta.split_at(self.hidden * self.input);
        let (b1, rest) = rest.split_at(self.hidden);
        let (w2, b2) = rest.split_at(self.output * self.hidden);
        ParamsView { w1, b1, w2, b2 }
    }

    /// Fills `hidden` with `φ(a)` of the pre-activations and `out` with the
    /// outputs; `pre` (if given) receives the pre-activations.
    #[inline]
    pub fn forward(&self, p: &ParamsView<'_>, x: &[f64], hidden: &mut [f64], out: &mut [f64]) {
        self.forward_with_pre(p, x, None, hidden, out)
    }

    #[inline]
    pub fn forward_with_pre(
        &self,
        p: &ParamsView<'_>,
        x: &[f64],
        mut pre: Option<&mut [f64]>,
        hidden: &mut [f64],
        out: &mut [f64],
    ) {
        for h in 0..self.hidden {
            let row = &p.w1[h * self.input..(h + 1) * self.input];
            let a = p.b1[h] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
            if let Some(pre) = pre.as_deref_mut() {
                pre[h] = a;
            }
            hidden[h] = gaussian_activation(a);
        }
        for o in 0..self.output {
            let row = &p.w2[o * self.hidden..(o + 1) * self.hidden];
            out[o] = p.b2[o] + row.iter().zip(hidden.iter()).map(|(w, v)| w * v).sum::<f64>();
        }
    }

    /// Accumulates `Jᵀ·d_out` into `grad`, where `J = ∂out/∂θ` at input `x`.
    #[inline]
    pub fn backprop(
        &self,
        p: &ParamsView<'_>,
        x: &[f64],
        pre: &[f64],
        hidden: &[f64],
        d_out: &[f64],
        grad: &mut [f64],
    ) {
        let (g_w1, rest) = grad.split_at_mut(self.hidden * self.input);
        let (g_b1, rest) = rest.split_at_mut(self.hidden);
        let (g_w2, g_b2) = rest.split_at_mut(self.output * self.hidden);
        for o in 0..self.output {
            let d = d_out[o];
            g_b2[o] += d;
            let row = &mut g_w2[o * self.hidden..(o + 1) * self.hidden];
            for (g, v) in row.iter_mut().zip(hidden) {
                *g += d * v;
            }
        }
        for h in 0..self.hidden {
            let mut d_hidden = 0.0;
            for o in 0..self.output {
                d_hidden += p.w2[o * self.hidden + h] * d_out[o];
            }
            // φ'(a) = −2a·φ(a)
            let d_pre = d_hidden * (-2.0 * pre[h] * hidden[h]);
            g_b1[h] += d_pre;
            let row = &mut g_w1[h * self.input..(h + 1) * self.input];
            for (g, v) in row.iter_mut().zip(x) {
                *g += d_pre * v;
            }
        }
    }
}
