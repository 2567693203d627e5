//! Monte-Carlo maximum likelihood for SNP coefficients.
//!
//! The sample objective is
//! `f(Θ) = −Σ_i 2 w_i log|1 + Θᵀ𝓗(z_i)| + log(1 + Θᵀ𝒬Θ)`
//! (the `Σ w_i log φ(z_i)` constant is left out). It is non-convex; a start is
//! obtained from the relaxation
//! `r_σ(Θ) = −Σ_i 2 w_i log(σ(1 + Θᵀ𝓗(z_i))) + Θᵀ𝒬Θ`, `σ = ±1`,
//! which is convex on its open feasible set and is solved once per sign branch.

use log::{debug, warn};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::density::{basis_into, SnpDensity};
use crate::error::{Result, SnpError};
use crate::indexset::{build_index_set, MultiIndexSet};
use crate::whitening::WhiteningTransform;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    Positive,
    Negative,
}

impl Branch {
    pub fn sign(self) -> f64 {
        match self {
            Branch::Positive => 1.0,
            Branch::Negative => -1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Branch::Positive => "positive",
            Branch::Negative => "negative",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BranchPolicy {
    Both,
    PositiveOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub order: usize,
    /// Floor inside `log|·|` so the objective stays finite on the zero set of `P`.
    pub guard_epsilon: f64,
    pub convex_tolerance: f64,
    pub nonlinear_tolerance: f64,
    pub max_iterations: usize,
    pub branch_policy: BranchPolicy,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            order: 4,
            guard_epsilon: 1e-12,
            convex_tolerance: 1e-8,
            nonlinear_tolerance: 1e-9,
            max_iterations: 500,
            branch_policy: BranchPolicy::Both,
        }
    }
}

impl FitConfig {
    pub fn with_order(order: usize) -> Self {
        Self {
            order,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.order < 2 {
            return Err(SnpError::InvalidOrder {
                order: self.order,
                reason: "whitened expansions start at order 2",
            });
        }
        for (name, v) in [
            ("guard_epsilon", self.guard_epsilon),
            ("convex_tolerance", self.convex_tolerance),
            ("nonlinear_tolerance", self.nonlinear_tolerance),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(SnpError::InvalidConfig(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        if self.max_iterations == 0 {
            return Err(SnpError::InvalidConfig(
                "max_iterations must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IterationCounts {
    pub convex_pos: usize,
    pub convex_neg: Option<usize>,
    pub nonlinear_pos: usize,
    pub nonlinear_neg: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub convex_objective_pos: f64,
    pub convex_objective_neg: Option<f64>,
    pub nonlinear_objective_pos: f64,
    pub nonlinear_objective_neg: Option<f64>,
    pub chosen_branch: Branch,
    pub iterations: IterationCounts,
    pub theta: Vec<f64>,
    /// Unrelaxed objective at each branch's convex solution, where refinement starts.
    pub start_objective_pos: f64,
    pub start_objective_neg: Option<f64>,
    pub warnings: Vec<String>,
}

/// Weighted population mean and covariance, Cholesky whitening of every row.
pub fn whiten_samples(
    samples: &DMatrix<f64>,
    weights: &[f64],
) -> Result<(DMatrix<f64>, WhiteningTransform)> {
    let (n, d) = samples.shape();
    if weights.len() != n {
        return Err(SnpError::DimensionMismatch {
            expected: n,
            got: weights.len(),
        });
    }
    if n <= d {
        return Err(SnpError::DegenerateEnsemble(format!(
            "need more samples than dimensions (N_s = {n}, d = {d})"
        )));
    }
    check_weights(weights)?;
    let total: f64 = weights.iter().sum();
    let mut mean = DVector::zeros(d);
    for (i, &w) in weights.iter().enumerate() {
        mean += samples.row(i).transpose() * w;
    }
    mean /= total;
    let mut cov = DMatrix::zeros(d, d);
    for (i, &w) in weights.iter().enumerate() {
        let c = samples.row(i).transpose() - &mean;
        cov += &c * c.transpose() * w;
    }
    cov /= total;
    let transform = WhiteningTransform::from_moments(mean, &cov)?;
    let mut out = DMatrix::zeros(n, d);
    let mut row = vec![0.0; d];
    for i in 0..n {
        for (j, r) in row.iter_mut().enumerate() {
            *r = samples[(i, j)];
        }
        let z = transform.whiten(&row);
        for (j, zj) in z.into_iter().enumerate() {
            out[(i, j)] = zj;
        }
    }
    Ok((out, transform))
}

pub(crate) fn check_weights(weights: &[f64]) -> Result<()> {
    if weights.iter().any(|&w| !(w >= 0.0 && w.is_finite())) {
        return Err(SnpError::InvalidWeights(
            "weights must be finite and nonnegative".into(),
        ));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(SnpError::InvalidWeights(format!(
            "weights sum to {total}, expected 1"
        )));
    }
    Ok(())
}

/// Uniform weights `1/N_s`.
pub fn uniform_weights(n: usize) -> Vec<f64> {
    vec![1.0 / n as f64; n]
}

/// Basis matrix `B[i, α] = H_α(z_i)` with the weights and `𝒬` diagonal, shared by
/// every objective and solver below.
#[derive(Debug, Clone)]
pub struct MleProblem {
    basis: DMatrix<f64>,
    weights: DVector<f64>,
    q: DVector<f64>,
    guard: f64,
}

impl MleProblem {
    pub fn new(
        whitened: &DMatrix<f64>,
        weights: &[f64],
        index_set: &MultiIndexSet,
        guard_epsilon: f64,
    ) -> Result<Self> {
        let (n, d) = whitened.shape();
        if d != index_set.dimension() {
            return Err(SnpError::DimensionMismatch {
                expected: index_set.dimension(),
                got: d,
            });
        }
        if weights.len() != n {
            return Err(SnpError::DimensionMismatch {
                expected: n,
                got: weights.len(),
            });
        }
        let m = index_set.len();
        let mut basis = DMatrix::zeros(n, m);
        let mut scratch = vec![0.0; d * (index_set.order() + 1)];
        let mut z = vec![0.0; d];
        let mut h = vec![0.0; m];
        for i in 0..n {
            for (j, zj) in z.iter_mut().enumerate() {
                *zj = whitened[(i, j)];
            }
            basis_into(index_set, &z, &mut scratch, &mut h);
            for (a, v) in h.iter().enumerate() {
                basis[(i, a)] = *v;
            }
        }
        Ok(Self {
            basis,
            weights: DVector::from_column_slice(weights),
            q: DVector::from_iterator(m, index_set.weights().iter().map(|&w| w as f64)),
            guard: guard_epsilon,
        })
    }

    pub fn len(&self) -> usize {
        self.basis.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.basis.ncols() == 0
    }

    pub fn samples(&self) -> usize {
        self.basis.nrows()
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    /// `P(z_i; Θ) = 1 + Θᵀ𝓗(z_i)` for every sample.
    pub fn polynomial_values(&self, theta: &DVector<f64>) -> DVector<f64> {
        let mut p = &self.basis * theta;
        p.add_scalar_mut(1.0);
        p
    }

    fn quad(&self, theta: &DVector<f64>) -> f64 {
        theta
            .iter()
            .zip(self.q.iter())
            .map(|(c, q)| q * c * c)
            .sum()
    }

    pub fn objective(&self, theta: &DVector<f64>) -> f64 {
        let p = self.polynomial_values(theta);
        let loglik: f64 = p
            .iter()
            .zip(self.weights.iter())
            .map(|(pi, w)| 2.0 * w * pi.abs().max(self.guard).ln())
            .sum();
        -loglik + (1.0 + self.quad(theta)).ln()
    }

    pub fn gradient(&self, theta: &DVector<f64>) -> Result<DVector<f64>> {
        let p = self.polynomial_values(theta);
        self.gradient_from(theta, &p)
    }

    fn gradient_from(&self, theta: &DVector<f64>, p: &DVector<f64>) -> Result<DVector<f64>> {
        let mut r = DVector::zeros(p.len());
        for (i, (&pi, &w)) in p.iter().zip(self.weights.iter()).enumerate() {
            if !(pi.abs() > self.guard) {
                return Err(SnpError::SingularGradient {
                    sample: i,
                    value: pi,
                });
            }
            r[i] = -2.0 * w / pi;
        }
        let s = 1.0 + self.quad(theta);
        let mut g = self.basis.tr_mul(&r);
        g += self.q.component_mul(theta) * (2.0 / s);
        Ok(g)
    }

    /// Relaxed branch objective; `+∞` outside the open feasible set.
    pub fn relaxed_objective(&self, theta: &DVector<f64>, branch: Branch) -> f64 {
        let p = self.polynomial_values(theta);
        self.relaxed_from(theta, &p, branch.sign())
    }

    fn relaxed_from(&self, theta: &DVector<f64>, p: &DVector<f64>, sign: f64) -> f64 {
        let mut acc = 0.0;
        for (pi, w) in p.iter().zip(self.weights.iter()) {
            let v = sign * pi;
            if v <= 0.0 {
                return f64::INFINITY;
            }
            acc -= 2.0 * w * v.ln();
        }
        acc + self.quad(theta)
    }

    fn relaxed_gradient_hessian(
        &self,
        theta: &DVector<f64>,
        p: &DVector<f64>,
    ) -> (DVector<f64>, DMatrix<f64>) {
        let n = p.len();
        let r = DVector::from_iterator(
            n,
            p.iter()
                .zip(self.weights.iter())
                .map(|(pi, w)| -2.0 * w / pi),
        );
        let mut g = self.basis.tr_mul(&r);
        g += self.q.component_mul(theta) * 2.0;
        let mut scaled = self.basis.clone();
        for (i, (pi, w)) in p.iter().zip(self.weights.iter()).enumerate() {
            let s = (2.0 * w).sqrt() / pi.abs();
            scaled.row_mut(i).scale_mut(s);
        }
        let mut h = scaled.tr_mul(&scaled);
        for a in 0..h.nrows() {
            h[(a, a)] += 2.0 * self.q[a];
        }
        (g, h)
    }

    /// Looks for a `Θ` with `1 + Θᵀ𝓗(z_i) < 0` at every sample.
    ///
    /// First scales `−2𝓗(z_1)/‖𝓗(z_1)‖²` by powers of two (20 tries); failing that,
    /// minimizes `log Σ_i w_i exp(vᵀ𝓗(z_i))` with Newton steps until every `vᵀ𝓗(z_i) < 0`.
    pub fn negative_feasible_start(&self, max_iterations: usize) -> Option<DVector<f64>> {
        let first = self.basis.row(0).transpose();
        let norm2 = first.norm_squared();
        if norm2 > 0.0 {
            let base = &first * (-2.0 / norm2);
            let mut scale = 1.0;
            for _ in 0..20 {
                let theta = &base * scale;
                if self.polynomial_values(&theta).iter().all(|&p| p < 0.0) {
                    return Some(theta);
                }
                scale *= 2.0;
            }
        }
        let direction = self.negative_direction(max_iterations)?;
        let a = &self.basis * &direction;
        let least = a.max();
        debug_assert!(least < 0.0);
        Some(direction * (2.0 / -least))
    }

    fn negative_direction(&self, max_iterations: usize) -> Option<DVector<f64>> {
        let m = self.len();
        let lse = |v: &DVector<f64>| -> (f64, DVector<f64>) {
            let a = &self.basis * v;
            let top = a.max();
            let e = DVector::from_iterator(
                a.len(),
                a.iter()
                    .zip(self.weights.iter())
                    .map(|(ai, w)| w * (ai - top).exp()),
            );
            let total = e.sum();
            (top + total.ln(), e / total)
        };
        let mut v = DVector::zeros(m);
        let (mut f, mut pi) = lse(&v);
        for _ in 0..max_iterations {
            let a = &self.basis * &v;
            if a.max() < 0.0 {
                return Some(v);
            }
            let g = self.basis.tr_mul(&pi);
            if g.norm() < 1e-12 {
                return None;
            }
            let mut scaled = self.basis.clone();
            for (i, p) in pi.iter().enumerate() {
                scaled.row_mut(i).scale_mut(p.sqrt());
            }
            let mut h = scaled.tr_mul(&scaled) - &g * g.transpose();
            let ridge = 1e-10 * (1.0 + h.diagonal().max());
            for k in 0..m {
                h[(k, k)] += ridge;
            }
            let step = match h.cholesky() {
                Some(c) => -c.solve(&g),
                None => -g.clone(),
            };
            let slope = g.dot(&step);
            let mut t = 1.0;
            let mut accepted = false;
            for _ in 0..60 {
                let trial = &v + &step * t;
                let (ft, pt) = lse(&trial);
                if ft <= f + 1e-4 * t * slope {
                    v = trial;
                    f = ft;
                    pi = pt;
                    accepted = true;
                    break;
                }
                t *= 0.5;
            }
            if !accepted {
                return None;
            }
        }
        let a = &self.basis * &v;
        (a.max() < 0.0).then_some(v)
    }
}

/// Sample MLE objective (uncached wrapper around [`MleProblem::objective`]).
pub fn mle_objective(
    theta: &[f64],
    whitened: &DMatrix<f64>,
    weights: &[f64],
    index_set: &MultiIndexSet,
    guard_epsilon: f64,
) -> Result<f64> {
    let problem = MleProblem::new(whitened, weights, index_set, guard_epsilon)?;
    check_theta(theta, problem.len())?;
    Ok(problem.objective(&DVector::from_column_slice(theta)))
}

/// Analytic gradient of [`mle_objective`].
pub fn mle_gradient(
    theta: &[f64],
    whitened: &DMatrix<f64>,
    weights: &[f64],
    index_set: &MultiIndexSet,
    guard_epsilon: f64,
) -> Result<Vec<f64>> {
    let problem = MleProblem::new(whitened, weights, index_set, guard_epsilon)?;
    check_theta(theta, problem.len())?;
    Ok(problem
        .gradient(&DVector::from_column_slice(theta))?
        .iter()
        .copied()
        .collect())
}

fn check_theta(theta: &[f64], m: usize) -> Result<()> {
    if theta.len() != m {
        return Err(SnpError::DimensionMismatch {
            expected: m,
            got: theta.len(),
        });
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvexSolution {
    pub theta: DVector<f64>,
    pub objective: f64,
    pub iterations: usize,
}

/// Damped Newton on the relaxed branch objective. Backtracking keeps every iterate
/// strictly inside `σ(1 + Θᵀ𝓗(z_i)) > 0`.
pub fn convex_relaxed_fit(
    problem: &MleProblem,
    branch: Branch,
    config: &FitConfig,
) -> Result<ConvexSolution> {
    let start = match branch {
        Branch::Positive => DVector::zeros(problem.len()),
        Branch::Negative => problem
            .negative_feasible_start(config.max_iterations)
            .ok_or_else(|| SnpError::InfeasibleBranch {
                branch: "negative",
                reason: "no coefficient vector makes the polynomial negative at every sample"
                    .into(),
            })?,
    };
    let sign = branch.sign();
    let mut theta = start;
    let mut p = problem.polynomial_values(&theta);
    let mut f = problem.relaxed_from(&theta, &p, sign);
    if !f.is_finite() {
        return Err(SnpError::InfeasibleBranch {
            branch: branch.name(),
            reason: "start point is not strictly feasible".into(),
        });
    }
    let mut iterations = 0;
    while iterations < config.max_iterations {
        let (g, h) = problem.relaxed_gradient_hessian(&theta, &p);
        if g.norm() <= config.convex_tolerance {
            break;
        }
        let step = match h.cholesky() {
            Some(c) => -c.solve(&g),
            None => -g.clone(),
        };
        let slope = g.dot(&step);
        // squared Newton decrement at the f64 resolution of f
        if -slope <= 1e-15 * f.abs().max(1.0) {
            break;
        }
        let mut t = 1.0;
        let mut moved = false;
        for _ in 0..80 {
            let trial = &theta + &step * t;
            let pt = problem.polynomial_values(&trial);
            let ft = problem.relaxed_from(&trial, &pt, sign);
            if ft.is_finite() && ft <= f + 1e-4 * t * slope {
                theta = trial;
                p = pt;
                f = ft;
                moved = true;
                break;
            }
            t *= 0.5;
        }
        iterations += 1;
        if !moved {
            // Newton decrement below what f64 can resolve
            break;
        }
    }
    debug!(
        "convex {} branch: f = {f}, {iterations} iterations",
        branch.name()
    );
    Ok(ConvexSolution {
        theta,
        objective: f,
        iterations,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct NonlinearSolution {
    pub theta: DVector<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Objective after each accepted step, starting with the initial value.
    pub history: Vec<f64>,
}

const LBFGS_MEMORY: usize = 10;

/// Limited-memory BFGS with Armijo backtracking on the unrelaxed objective.
/// Trial points inside the guard band, where the gradient is undefined, are rejected.
pub fn nonlinear_fit(
    problem: &MleProblem,
    initial: &DVector<f64>,
    config: &FitConfig,
) -> Result<NonlinearSolution> {
    if initial.len() != problem.len() {
        return Err(SnpError::DimensionMismatch {
            expected: problem.len(),
            got: initial.len(),
        });
    }
    if initial.iter().any(|v| !v.is_finite()) {
        return Err(SnpError::NonFiniteObjective { iteration: 0 });
    }
    let mut theta = initial.clone();
    let mut f = problem.objective(&theta);
    if !f.is_finite() {
        return Err(SnpError::NonFiniteObjective { iteration: 0 });
    }
    let mut g = problem.gradient(&theta)?;
    let mut history = vec![f];
    let mut pairs: std::collections::VecDeque<(DVector<f64>, DVector<f64>, f64)> =
        Default::default();
    // 𝒬⁻¹ as the base inverse Hessian: the coordinates Q^{1/2}Θ are well scaled
    let precond = problem.q.map(|q| 1.0 / q);
    let mut iterations = 0;
    let mut stalled = 0;
    let mut converged = g.norm() <= config.nonlinear_tolerance;

    while !converged && iterations < config.max_iterations {
        let mut dir = two_loop(&g, &pairs, &precond);
        let mut slope = g.dot(&dir);
        if !(slope < 0.0) {
            pairs.clear();
            dir = -g.component_mul(&precond);
            slope = g.dot(&dir);
        }
        let mut t = if pairs.is_empty() {
            (1.0 / dir.norm()).min(1.0)
        } else {
            1.0
        };
        let mut accepted = None;
        for _ in 0..60 {
            let trial = &theta + &dir * t;
            let ft = problem.objective(&trial);
            if ft.is_finite() && ft <= f + 1e-4 * t * slope {
                if let Ok(gt) = problem.gradient(&trial) {
                    accepted = Some((trial, ft, gt));
                    break;
                }
            }
            t *= 0.5;
        }
        let Some((next, fn_, gn)) = accepted else {
            if pairs.is_empty() {
                break;
            }
            pairs.clear();
            continue;
        };
        iterations += 1;
        let s = &next - &theta;
        let y = &gn - &g;
        let sy = s.dot(&y);
        if sy > 1e-12 * s.norm() * y.norm() {
            if pairs.len() == LBFGS_MEMORY {
                pairs.pop_front();
            }
            pairs.push_back((s, y, 1.0 / sy));
        }
        let progress = f - fn_;
        theta = next;
        f = fn_;
        g = gn;
        history.push(f);
        if !f.is_finite() {
            return Err(SnpError::NonFiniteObjective {
                iteration: iterations,
            });
        }
        converged = g.norm() <= config.nonlinear_tolerance;
        // objective no longer resolvable in f64
        if progress <= 4.0 * f64::EPSILON * f.abs().max(1.0) {
            stalled += 1;
            if stalled >= 3 {
                break;
            }
        } else {
            stalled = 0;
        }
    }
    Ok(NonlinearSolution {
        theta,
        objective: f,
        iterations,
        converged,
        history,
    })
}

fn two_loop(
    g: &DVector<f64>,
    pairs: &std::collections::VecDeque<(DVector<f64>, DVector<f64>, f64)>,
    precond: &DVector<f64>,
) -> DVector<f64> {
    let mut q = g.clone();
    let mut alphas = Vec::with_capacity(pairs.len());
    for (s, y, rho) in pairs.iter().rev() {
        let a = rho * s.dot(&q);
        q.axpy(-a, y, 1.0);
        alphas.push(a);
    }
    q.component_mul_assign(precond);
    if let Some((s, y, _)) = pairs.back() {
        q *= s.dot(y) / y.dot(&y.component_mul(precond));
    }
    for ((s, y, rho), a) in pairs.iter().zip(alphas.into_iter().rev()) {
        let b = rho * y.dot(&q);
        q.axpy(a - b, s, 1.0);
    }
    -q
}

struct BranchOutcome {
    convex: ConvexSolution,
    start_objective: f64,
    refined: NonlinearSolution,
}

fn run_branch(problem: &MleProblem, branch: Branch, config: &FitConfig) -> Result<BranchOutcome> {
    let convex = convex_relaxed_fit(problem, branch, config)?;
    let start_objective = problem.objective(&convex.theta);
    let refined = nonlinear_fit(problem, &convex.theta, config)?;
    Ok(BranchOutcome {
        convex,
        start_objective,
        refined,
    })
}

/// Full pipeline with uniform weights.
pub fn fit_snp(samples: &DMatrix<f64>, config: &FitConfig) -> Result<(SnpDensity, FitReport)> {
    fit_snp_weighted(samples, &uniform_weights(samples.nrows()), config)
}

/// Whiten, solve both relaxed branches, refine each, keep the better one.
pub fn fit_snp_weighted(
    samples: &DMatrix<f64>,
    weights: &[f64],
    config: &FitConfig,
) -> Result<(SnpDensity, FitReport)> {
    config.validate()?;
    let (n, d) = samples.shape();
    if n > 0 && (1..n).all(|i| samples.row(i) == samples.row(0)) {
        return Err(SnpError::DegenerateEnsemble(
            "all samples are identical".into(),
        ));
    }
    let (whitened, transform) = whiten_samples(samples, weights)?;
    let set = build_index_set(d, config.order)?;
    let mut warnings = Vec::new();
    if n < set.len() {
        let msg = format!(
            "fewer samples ({n}) than coefficients ({}); the fit is underdetermined",
            set.len()
        );
        warn!("{msg}");
        warnings.push(msg);
    }
    let problem = MleProblem::new(&whitened, weights, &set, config.guard_epsilon)?;

    let pos = run_branch(&problem, Branch::Positive, config)?;
    let neg = match config.branch_policy {
        BranchPolicy::PositiveOnly => None,
        BranchPolicy::Both => match run_branch(&problem, Branch::Negative, config) {
            Ok(outcome) => Some(outcome),
            Err(SnpError::InfeasibleBranch { reason, .. }) => {
                let msg = format!("negative branch infeasible: {reason}");
                warn!("{msg}");
                warnings.push(msg);
                None
            }
            Err(e) => return Err(e),
        },
    };

    let chosen = match &neg {
        Some(n) if n.refined.objective < pos.refined.objective - 1e-12 => Branch::Negative,
        _ => Branch::Positive,
    };
    let theta = match chosen {
        Branch::Positive => &pos.refined.theta,
        Branch::Negative => &neg.as_ref().expect("chosen implies present").refined.theta,
    };
    let theta: Vec<f64> = theta.iter().copied().collect();
    let report = FitReport {
        convex_objective_pos: pos.convex.objective,
        convex_objective_neg: neg.as_ref().map(|n| n.convex.objective),
        nonlinear_objective_pos: pos.refined.objective,
        nonlinear_objective_neg: neg.as_ref().map(|n| n.refined.objective),
        chosen_branch: chosen,
        iterations: IterationCounts {
            convex_pos: pos.convex.iterations,
            convex_neg: neg.as_ref().map(|n| n.convex.iterations),
            nonlinear_pos: pos.refined.iterations,
            nonlinear_neg: neg.as_ref().map(|n| n.refined.iterations),
        },
        theta: theta.clone(),
        start_objective_pos: pos.start_objective,
        start_objective_neg: neg.as_ref().map(|n| n.start_objective),
        warnings,
    };
    let density = SnpDensity::new(set, theta, Some(transform))?;
    Ok((density, report))
}
