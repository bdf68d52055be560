use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::network::Layout;
use super::{Normalization, RbfnModel, TrainingExample};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrainingMethod {
    /// Møller's scaled conjugate gradient.
    Scg,
    /// Fixed-step full-batch gradient descent.
    GradientDescent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainerConfig {
    pub method: TrainingMethod,
    pub max_epochs: usize,
    /// SCG finite-difference scale for the curvature estimate.
    pub sigma: f64,
    /// SCG initial scaling parameter.
    pub lambda_init: f64,
    /// Gradient-descent step.
    pub learning_rate: f64,
    /// Stop when the relative MSE improvement over `patience` epochs falls
    /// below this.
    pub tolerance: f64,
    pub patience: usize,
    pub seed: u64,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        Self {
            method: TrainingMethod::Scg,
            max_epochs: 2000,
            sigma: 1e-4,
            lambda_init: 1e-6,
            learning_rate: 1e-4,
            tolerance: 1e-8,
            patience: 10,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingReport {
    pub epochs_run: usize,
    /// Training-set MSE of the current parameters after each epoch.
    pub mse_history: Vec<f64>,
    pub final_mse: f64,
    pub method: TrainingMethod,
}

/// Full-batch MSE `(1/M)·Σ‖ĝ − g‖²` over normalized inputs, as a function
/// of the flat parameter vector.
pub struct Objective {
    layout: Layout,
    inputs: Vec<f64>,
    targets: Vec<f64>,
    samples: usize,
}

impl Objective {
    /// Normalizes `examples` with `normalization` and stores them flat.
    pub fn new(model: &RbfnModel, normalization: &Normalization, examples: &[TrainingExample]) -> Result<Self> {
        let layout = Layout::of(model);
        let mut inputs = vec![0.0; examples.len() * layout.input];
        let mut targets = Vec::with_capacity(examples.len() * layout.output);
        for (k, ex) in examples.iter().enumerate() {
            model.check_input(&ex.features)?;
            if ex.targets.len() != layout.output {
                return Err(Error::DimensionMismatch {
                    what: "target vector",
                    expected: layout.output,
                    found: ex.targets.len(),
                });
            }
            normalization.apply(
                ex.features.as_slice(),
                &mut inputs[k * layout.input..(k + 1) * layout.input],
            );
            targets.extend_from_slice(&ex.targets);
        }
        Ok(Self {
            layout,
            inputs,
            targets,
            samples: examples.len(),
        })
    }

    pub fn dim(&self) -> usize {
        self.layout.len()
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    pub fn loss(&self, theta: &[f64]) -> f64 {
        let p = self.layout.split(theta);
        let mut hidden = vec![0.0; self.layout.hidden];
        let mut out = vec![0.0; self.layout.output];
        let mut total = 0.0;
        for k in 0..self.samples {
            let x = &self.inputs[k * self.layout.input..(k + 1) * self.layout.input];
            let g = &self.targets[k * self.layout.output..(k + 1) * self.layout.output];
            self.layout.forward(&p, x, &mut hidden, &mut out);
            total += out.iter().zip(g).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        }
        total / self.samples as f64
    }

    /// Loss and its gradient with respect to `theta`.
    pub fn loss_and_gradient(&self, theta: &[f64]) -> (f64, Vec<f64>) {
        let l = self.layout;
        let p = l.split(theta);
        let mut grad = vec![0.0; l.len()];
        let mut pre = vec![0.0; l.hidden];
        let mut hidden = vec![0.0; l.hidden];
        let mut out = vec![0.0; l.output];
        let mut d_out = vec![0.0; l.output];
        let scale = 2.0 / self.samples as f64;
        let mut total = 0.0;
        for k in 0..self.samples {
            let x = &self.inputs[k * l.input..(k + 1) * l.input];
            let g = &self.targets[k * l.output..(k + 1) * l.output];
            l.forward_with_pre(&p, x, Some(&mut pre), &mut hidden, &mut out);
            for o in 0..l.output {
                let e = out[o] - g[o];
                total += e * e;
                d_out[o] = scale * e;
            }
            l.backprop(&p, x, &pre, &hidden, &d_out, &mut grad);
        }
        (total / self.samples as f64, grad)
    }

    /// `∂ĝ_o/∂θ` for sample `k`, for gradient checks.
    pub fn output_gradient(&self, theta: &[f64], k: usize, o: usize) -> (f64, Vec<f64>) {
        let l = self.layout;
        let p = l.split(theta);
        let x = &self.inputs[k * l.input..(k + 1) * l.input];
        let mut pre = vec![0.0; l.hidden];
        let mut hidden = vec![0.0; l.hidden];
        let mut out = vec![0.0; l.output];
        l.forward_with_pre(&p, x, Some(&mut pre), &mut hidden, &mut out);
        let mut d_out = vec![0.0; l.output];
        d_out[o] = 1.0;
        let mut grad = vec![0.0; l.len()];
        l.backprop(&p, x, &pre, &hidden, &d_out, &mut grad);
        (out[o], grad)
    }

    /// Network output `o` for sample `k`.
    pub fn output(&self, theta: &[f64], k: usize, o: usize) -> f64 {
        let l = self.layout;
        let p = l.split(theta);
        let x = &self.inputs[k * l.input..(k + 1) * l.input];
        let mut hidden = vec![0.0; l.hidden];
        let mut out = vec![0.0; l.output];
        l.forward(&p, x, &mut hidden, &mut out);
        out[o]
    }
}

/// Fits an [`RbfnModel`] to `dataset` by full-batch minimization of the MSE.
///
/// Feature normalization statistics are taken from `dataset` and stored in
/// the returned model. The returned parameters are the best seen.
pub fn train(dataset: &[TrainingExample], config: &TrainerConfig) -> Result<(RbfnModel, TrainingReport)> {
    let first = dataset
        .first()
        .ok_or_else(|| Error::InvalidArgument("training set is empty".into()))?;
    let output = first.targets.len();
    let input = first.features.len();
    if input < 4 || input % 2 != 0 || output == 0 {
        return Err(Error::InvalidArgument(format!(
            "cannot infer network shape from {input} features and {output} targets"
        )));
    }
    let n_t = (input - 2) / 2;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut model = RbfnModel::random(n_t, output, &mut rng);
    let normalization = Normalization::fit(dataset.iter().map(|e| e.features.as_slice()), input);
    let objective = Objective::new(&model, &normalization, dataset)?;
    model.normalization = normalization;

    let theta0 = model.params();
    let (theta, history) = match config.method {
        TrainingMethod::Scg => scg(&objective, theta0, config)?,
        TrainingMethod::GradientDescent => gradient_descent(&objective, theta0, config)?,
    };
    model.set_params(&theta);
    let final_mse = *history.last().expect("at least one epoch");
    Ok((
        model,
        TrainingReport {
            epochs_run: history.len(),
            final_mse,
            mse_history: history,
            method: config.method,
        },
    ))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(w: &[f64], alpha: f64, p: &[f64]) -> Vec<f64> {
    w.iter().zip(p).map(|(a, b)| a + alpha * b).collect()
}

fn converged(history: &[f64], config: &TrainerConfig) -> bool {
    let n = history.len();
    if n == 0 {
        return false;
    }
    if history[n - 1] == 0.0 {
        return true;
    }
    if n <= config.patience {
        return false;
    }
    let old = history[n - 1 - config.patience];
    (old - history[n - 1]) <= config.tolerance * old.abs()
}

/// Scaled conjugate gradient (Møller, 1993). One epoch is one SCG
/// iteration; rejected steps leave the weights, and hence the recorded MSE,
/// unchanged.
fn scg(objective: &Objective, mut w: Vec<f64>, config: &TrainerConfig) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = w.len();
    let (mut e_w, grad) = objective.loss_and_gradient(&w);
    if !e_w.is_finite() {
        return Err(Error::DivergedToNonFinite { epoch: 0 });
    }
    let mut r: Vec<f64> = grad.iter().map(|g| -g).collect();
    let mut p = r.clone();
    let mut lambda = config.lambda_init;
    let mut lambda_bar = 0.0;
    let mut success = true;
    let mut delta = 0.0;
    let mut history = Vec::with_capacity(config.max_epochs.min(1 << 16));

    for k in 1..=config.max_epochs {
        let p_sq = dot(&p, &p);
        if p_sq == 0.0 || dot(&r, &r) == 0.0 {
            history.push(e_w);
            break;
        }
        if success {
            let sigma_k = config.sigma / p_sq.sqrt();
            let (_, g_probe) = objective.loss_and_gradient(&axpy(&w, sigma_k, &p));
            // s = (E'(w + σp) − E'(w)) / σ with E'(w) = −r
            delta = g_probe
                .iter()
                .zip(&r)
                .zip(&p)
                .map(|((gp, ri), pi)| (gp + ri) / sigma_k * pi)
                .sum();
        }
        delta += (lambda - lambda_bar) * p_sq;
        if delta <= 0.0 {
            lambda_bar = 2.0 * (lambda - delta / p_sq);
            delta = -delta + lambda * p_sq;
            lambda = lambda_bar;
        }
        let mu = dot(&p, &r);
        let alpha = mu / delta;
        let w_new = axpy(&w, alpha, &p);
        let (e_new, g_new) = objective.loss_and_gradient(&w_new);
        let comparison = if e_new.is_finite() {
            2.0 * delta * (e_w - e_new) / (mu * mu)
        } else {
            f64::NEG_INFINITY
        };

        if comparison >= 0.0 {
            w = w_new;
            e_w = e_new;
            let r_new: Vec<f64> = g_new.iter().map(|g| -g).collect();
            lambda_bar = 0.0;
            success = true;
            if k % n == 0 {
                p = r_new.clone();
            } else {
                let beta = (dot(&r_new, &r_new) - dot(&r_new, &r)) / mu;
                p = r_new.iter().zip(&p).map(|(ri, pi)| ri + beta * pi).collect();
            }
            r = r_new;
            if comparison >= 0.75 {
                lambda *= 0.25;
            }
        } else {
            lambda_bar = lambda;
            success = false;
        }
        if comparison < 0.25 {
            lambda += if comparison.is_finite() {
                delta * (1.0 - comparison) / p_sq
            } else {
                // overflowing step: scale up hard
                4.0 * lambda.max(config.lambda_init) + delta / p_sq
            };
        }
        if !lambda.is_finite() || !e_w.is_finite() {
            return Err(Error::DivergedToNonFinite { epoch: k });
        }
        history.push(e_w);
        if converged(&history, config) {
            break;
        }
    }
    if history.is_empty() {
        history.push(e_w);
    }
    Ok((w, history))
}

fn gradient_descent(objective: &Objective, mut w: Vec<f64>, config: &TrainerConfig) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut best = w.clone();
    let mut best_loss = f64::INFINITY;
    let mut history = Vec::new();
    for epoch in 1..=config.max_epochs.max(1) {
        let (loss, grad) = objective.loss_and_gradient(&w);
        if !loss.is_finite() {
            return Err(Error::DivergedToNonFinite { epoch });
        }
        if loss < best_loss {
            best_loss = loss;
            best.copy_from_slice(&w);
        }
        history.push(best_loss);
        if converged(&history, config) {
            break;
        }
        for (wi, gi) in w.iter_mut().zip(&grad) {
            *wi -= config.learning_rate * gi;
        }
    }
    Ok((best, history))
}
