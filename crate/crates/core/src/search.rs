//! Depth-first Schnorr-Euchner sphere decoding over the complex symbol tree.
//!
//! Row `l` of `R` is layer `l`. The search fixes the top layer `n − 1` first
//! and reaches a leaf at layer 0, so a top-layer symbol roots a sub-tree of
//! `|𝕊|^(n−1)` leaves. Layer and symbol indices are zero-based.

use num_complex::Complex64;

use crate::channel::Constellation;
use crate::numerics::special::chi_square_quantile;
use crate::numerics::{ComplexMatrix, ComplexVector, OpCounter};
use crate::{Error, Result};

/// Largest candidate count [`ml_oracle`] will enumerate.
pub const ML_ORACLE_LIMIT: f64 = 1e7;

/// Bisection tolerance for the chi-square quantile behind the conventional
/// radius.
const QUANTILE_TOLERANCE: f64 = 1e-10;

/// Reduced-domain search input: `z = Q1ᴴy`, `R`, the alphabet and the
/// squared radius `d̃²`.
#[derive(Debug, Clone)]
pub struct SearchProblem<'a> {
    pub z: &'a [Complex64],
    pub r: &'a ComplexMatrix,
    pub constellation: &'a Constellation,
    pub squared_radius: f64,
    pub counter: OpCounter,
}

impl<'a> SearchProblem<'a> {
    pub fn new(
        z: &'a [Complex64],
        r: &'a ComplexMatrix,
        constellation: &'a Constellation,
        squared_radius: f64,
    ) -> Result<Self> {
        if r.rows() != r.cols() || r.cols() == 0 {
            return Err(Error::InvalidArgument(format!(
                "R must be square and nonempty, got {}x{}",
                r.rows(),
                r.cols()
            )));
        }
        if z.len() != r.rows() {
            return Err(Error::DimensionMismatch {
                what: "z",
                expected: r.rows(),
                found: z.len(),
            });
        }
        if squared_radius.is_nan() || squared_radius < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "squared radius must be >= 0, got {squared_radius}"
            )));
        }
        Ok(Self {
            z,
            r,
            constellation,
            squared_radius,
            counter: OpCounter::new(),
        })
    }

    /// Number of layers `N_t`.
    #[inline]
    pub fn dim(&self) -> usize {
        self.r.cols()
    }

    fn with_radius(&self, squared_radius: f64) -> SearchProblem<'a> {
        SearchProblem {
            squared_radius,
            counter: OpCounter::new(),
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchOutcome {
    pub solution: Option<ComplexVector>,
    /// Constellation indices of `solution`.
    pub indices: Option<Vec<usize>>,
    /// `‖z − R·solution‖²`.
    pub metric: Option<f64>,
    pub nodes_visited: u64,
    pub leaf_count: u64,
    /// Top-layer sub-trees entered before the search ended.
    pub subtrees_searched: usize,
    pub terminated_early: bool,
    /// Incumbent metrics in the order they were accepted.
    pub incumbent_trace: Vec<f64>,
    /// Squared radius in force when the search ended.
    pub final_squared_radius: f64,
}

impl SearchOutcome {
    pub fn found(&self) -> bool {
        self.solution.is_some()
    }
}

/// State handed to the early-stop hook after each completed sub-tree.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubtreeProgress {
    /// Sub-trees finished so far (1-based position in the visiting order).
    pub completed: usize,
    /// Current squared radius: the incumbent metric, or the initial radius
    /// while nothing has been found.
    pub squared_radius: f64,
    pub incumbent: Option<f64>,
}

/// `|z_l − Σ_{k≥l} r_{l,k}·x_k|²` for a partial vector fixing layers
/// `layer..n`; entries below `layer` are ignored.
pub fn branch_metric(problem: &mut SearchProblem<'_>, layer: usize, partial: &[Complex64]) -> f64 {
    let n = problem.dim();
    assert!(layer < n && partial.len() == n, "layer or partial length out of range");
    let mut w = problem.z[layer];
    for k in layer..n {
        w -= problem.r[(layer, k)] * partial[k];
    }
    let terms = (n - layer) as u64;
    problem.counter.mults(terms + 1);
    problem.counter.adds(terms + 1);
    w.norm_sqr()
}

/// Schnorr-Euchner visiting order of the children at `layer`: every symbol
/// sorted by its branch metric, ties by constellation index.
pub fn se_child_order(problem: &mut SearchProblem<'_>, layer: usize, partial_above: &[Complex64]) -> Vec<usize> {
    let n = problem.dim();
    assert!(layer < n && partial_above.len() == n, "layer or partial length out of range");
    let center = interference_removed(problem, layer, partial_above);
    let mut order = Vec::with_capacity(problem.constellation.len());
    child_metrics(problem, layer, center, &mut order);
    order.into_iter().map(|(_, s)| s).collect()
}

/// `z_l − Σ_{k>l} r_{l,k}·x_k`.
#[inline]
fn interference_removed(problem: &mut SearchProblem<'_>, layer: usize, x: &[Complex64]) -> Complex64 {
    let n = problem.dim();
    let row = problem.r.row(layer);
    let mut c = problem.z[layer];
    for k in layer + 1..n {
        c -= row[k] * x[k];
    }
    let terms = (n - layer - 1) as u64;
    problem.counter.mults(terms);
    problem.counter.adds(terms);
    c
}

#[inline]
fn child_metrics(problem: &mut SearchProblem<'_>, layer: usize, center: Complex64, out: &mut Vec<(f64, usize)>) {
    let diag = problem.r[(layer, layer)];
    out.clear();
    out.extend(
        problem
            .constellation
            .symbols()
            .iter()
            .enumerate()
            .map(|(i, &s)| ((center - diag * s).norm_sqr(), i)),
    );
    let m = out.len() as u64;
    problem.counter.mults(2 * m);
    problem.counter.adds(2 * m);
    out.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
}

struct Searcher<'p, 'a> {
    problem: &'p mut SearchProblem<'a>,
    x: Vec<Complex64>,
    idx: Vec<usize>,
    bound: f64,
    best: Option<(Vec<usize>, f64)>,
    scratch: Vec<Vec<(f64, usize)>>,
    nodes: u64,
    leaves: u64,
    trace: Vec<f64>,
}

impl<'p, 'a> Searcher<'p, 'a> {
    fn new(problem: &'p mut SearchProblem<'a>, squared_radius: f64) -> Self {
        let n = problem.dim();
        let m = problem.constellation.len();
        Self {
            problem,
            x: vec![Complex64::new(0.0, 0.0); n],
            idx: vec![0; n],
            bound: squared_radius,
            best: None,
            scratch: (0..n).map(|_| Vec::with_capacity(m)).collect(),
            nodes: 0,
            leaves: 0,
            trace: Vec::new(),
        }
    }

    /// Nodes are kept while their metric is within the radius; once an
    /// incumbent exists only strictly better paths survive.
    #[inline]
    fn exceeds(&self, metric: f64) -> bool {
        if self.best.is_some() {
            metric >= self.bound
        } else {
            metric > self.bound
        }
    }

    fn run(
        mut self,
        order: Option<&[usize]>,
        mut early_stop: Option<&mut dyn FnMut(&SubtreeProgress) -> bool>,
    ) -> SearchOutcome {
        let top = self.problem.dim() - 1;
        let center = self.problem.z[top];
        let mut roots = std::mem::take(&mut self.scratch[top]);
        child_metrics(self.problem, top, center, &mut roots);
        let mut root_metric = vec![0.0; roots.len()];
        for &(m, s) in &roots {
            root_metric[s] = m;
        }
        let visiting: Vec<usize> = match order {
            Some(o) => o.to_vec(),
            None => roots.iter().map(|&(_, s)| s).collect(),
        };

        let mut searched = 0;
        let mut terminated_early = false;
        for (p, &s) in visiting.iter().enumerate() {
            searched = p + 1;
            let m = root_metric[s];
            if !self.exceeds(m) {
                self.nodes += 1;
                self.x[top] = self.problem.constellation.symbols()[s];
                self.idx[top] = s;
                if top == 0 {
                    self.leaf(m);
                } else {
                    self.descend(top - 1, m);
                }
            }
            if p + 1 < visiting.len() {
                if let Some(stop) = early_stop.as_mut() {
                    let progress = SubtreeProgress {
                        completed: p + 1,
                        squared_radius: self.bound,
                        incumbent: self.best.as_ref().map(|b| b.1),
                    };
                    if stop(&progress) {
                        terminated_early = true;
                        break;
                    }
                }
            }
        }

        let (solution, indices, metric) = match self.best {
            Some((idx, metric)) => (
                Some(self.problem.constellation.vector(&idx)),
                Some(idx),
                Some(metric),
            ),
            None => (None, None, None),
        };
        SearchOutcome {
            solution,
            indices,
            metric,
            nodes_visited: self.nodes,
            leaf_count: self.leaves,
            subtrees_searched: searched,
            terminated_early,
            incumbent_trace: self.trace,
            final_squared_radius: self.bound,
        }
    }

    fn descend(&mut self, layer: usize, acc: f64) {
        let center = interference_removed(self.problem, layer, &self.x);
        let mut children = std::mem::take(&mut self.scratch[layer]);
        child_metrics(self.problem, layer, center, &mut children);
        for &(bm, s) in &children {
            let m = acc + bm;
            self.problem.counter.adds(1);
            if self.exceeds(m) {
                break;
            }
            self.nodes += 1;
            self.x[layer] = self.problem.constellation.symbols()[s];
            self.idx[layer] = s;
            if layer == 0 {
                self.leaf(m);
            } else {
                self.descend(layer - 1, m);
            }
        }
        self.scratch[layer] = children;
    }

    fn leaf(&mut self, metric: f64) {
        self.leaves += 1;
        self.bound = metric;
        self.trace.push(metric);
        self.best = Some((self.idx.clone(), metric));
    }
}

/// Depth-first SE sphere decoding with radius shrinking.
///
/// The top layer is visited in `subtree_order` when given (a permutation of
/// the constellation indices), otherwise in SE order. After every sub-tree
/// except the last, `early_stop` may end the search. An empty outcome means
/// no leaf lies within the radius.
///
/// # Panics
///
/// If `subtree_order` is not a permutation of `0..|𝕊|`.
pub fn sphere_decode(
    problem: &mut SearchProblem<'_>,
    subtree_order: Option<&[usize]>,
    early_stop: Option<&mut dyn FnMut(&SubtreeProgress) -> bool>,
) -> SearchOutcome {
    if let Some(order) = subtree_order {
        let m = problem.constellation.len();
        let mut seen = vec![false; m];
        assert!(
            order.len() == m && order.iter().all(|&s| s < m && !std::mem::replace(&mut seen[s], true)),
            "subtree order must be a permutation of the constellation indices"
        );
    }
    let radius = problem.squared_radius;
    Searcher::new(problem, radius).run(subtree_order, early_stop)
}

/// Minimum of `‖z − R·x‖²` over the sub-tree whose top-layer symbol is
/// `root`, found by an unbounded SE search restricted to that sub-tree.
pub fn subtree_min_metric(problem: &mut SearchProblem<'_>, root: usize) -> f64 {
    assert!(root < problem.constellation.len(), "root symbol index out of range");
    let outcome = Searcher::new(problem, f64::INFINITY).run(Some(&[root]), None);
    outcome.metric.expect("unbounded search always reaches a leaf")
}

/// [`subtree_min_metric`] for every root, in constellation index order.
pub fn subtree_min_metrics(problem: &mut SearchProblem<'_>) -> Vec<f64> {
    (0..problem.constellation.len())
        .map(|q| subtree_min_metric(problem, q))
        .collect()
}

/// Exhaustive minimum of `‖z − R·x‖²` over `𝕊^n`. Ties keep the
/// lexicographically smallest index vector, with `x_0` most significant.
///
/// The radius of `problem` is ignored.
pub fn ml_oracle(problem: &mut SearchProblem<'_>) -> Result<SearchOutcome> {
    let n = problem.dim();
    let m = problem.constellation.len();
    let candidates = (m as f64).powi(n as i32);
    if candidates > ML_ORACLE_LIMIT {
        return Err(Error::TooLarge {
            candidates,
            limit: ML_ORACLE_LIMIT,
        });
    }
    let symbols = problem.constellation.symbols();
    let mut idx = vec![0usize; n];
    let mut x: Vec<Complex64> = vec![symbols[0]; n];
    let mut best_idx = idx.clone();
    let mut best = f64::INFINITY;
    let mut counter = problem.counter;
    loop {
        let mut metric = 0.0;
        for row in 0..n {
            let mut w = problem.z[row];
            for k in row..n {
                w -= problem.r[(row, k)] * x[k];
            }
            metric += w.norm_sqr();
            let terms = (n - row) as u64;
            counter.mults(terms + 1);
            counter.adds(terms + 1);
        }
        if metric < best {
            best = metric;
            best_idx.copy_from_slice(&idx);
        }
        // odometer with the last position fastest
        let mut pos = n;
        loop {
            if pos == 0 {
                problem.counter = counter;
                return Ok(SearchOutcome {
                    solution: Some(problem.constellation.vector(&best_idx)),
                    indices: Some(best_idx),
                    metric: Some(best),
                    nodes_visited: candidates as u64,
                    leaf_count: candidates as u64,
                    subtrees_searched: m,
                    terminated_early: false,
                    incumbent_trace: vec![best],
                    final_squared_radius: best,
                });
            }
            pos -= 1;
            idx[pos] += 1;
            if idx[pos] < m {
                x[pos] = symbols[idx[pos]];
                break;
            }
            idx[pos] = 0;
            x[pos] = symbols[0];
        }
    }
}

/// Radius `f` with `P(‖v‖² ≤ f²) = epsilon_complement` for
/// `v ~ CN(0, σ_v²·I_{n_r})`: `f² = (σ_v²/2)·χ²_{2n_r}⁻¹(epsilon_complement)`.
pub fn conventional_radius(noise_variance: f64, n_r: usize, epsilon_complement: f64) -> f64 {
    assert!(noise_variance > 0.0, "noise variance must be positive");
    assert!(
        epsilon_complement > 0.0 && epsilon_complement < 1.0,
        "coverage probability must lie in (0, 1)"
    );
    let q = chi_square_quantile(2.0 * n_r as f64, epsilon_complement, QUANTILE_TOLERANCE);
    (0.5 * noise_variance * q).sqrt()
}

/// Reduced-domain squared radius `d̃² = max(f² − ‖Q2ᴴy‖², 0)`.
pub fn reduced_squared_radius(radius: f64, residual: f64) -> f64 {
    (radius * radius - residual).max(0.0)
}

/// Runs [`sphere_decode`] on a copy of `problem` with a different radius.
/// Counts go to the copy and are returned alongside the outcome.
pub fn sphere_decode_with_radius(
    problem: &SearchProblem<'_>,
    squared_radius: f64,
    subtree_order: Option<&[usize]>,
    early_stop: Option<&mut dyn FnMut(&SubtreeProgress) -> bool>,
) -> (SearchOutcome, OpCounter) {
    let mut p = problem.with_radius(squared_radius);
    let outcome = sphere_decode(&mut p, subtree_order, early_stop);
    (outcome, p.counter)
}
