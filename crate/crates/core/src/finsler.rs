//! Randers–Finsler geometry above Mañé's critical value.
//!
//! For `κ > c` the function `F(v) = √(2κ) |v|_A − α(v)` is a right-invariant
//! Randers norm whose unit-speed geodesics are, after reparametrization to
//! speed `√(2κ)`, exactly the magnetic geodesics of energy `κ`. This module
//! evaluates `F`, checks its equivalence to `|·|_A`, computes discrete lengths
//! and energies of control paths, and connects two points at a prescribed
//! energy by minimizing the discrete Finsler energy.

use nalgebra::{DMatrix, DVector, Matrix3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::algebra::{flow_points, matrix_exp3, AlgebraVector, ControlPath, Covector, GroupPoint, LieAlgebra};
use crate::error::{check_dim, Error, Result};
use crate::flow::{check_point, integrate_magnetic, magnetic_rhs, Trajectory, TrajectoryMeta};
use crate::magnetics::{mane_critical_value, MagneticSystem, ManeResult};
use crate::optim::{lbfgs, LbfgsSettings};

/// Randers metric `F(v) = √(2κ) |v|_A − α(v)` on the Lie algebra, extended
/// by right translation.
#[derive(Clone, Debug)]
pub struct RandersMetric {
    sys: MagneticSystem,
    kappa: f64,
    mane: ManeResult,
    primitive: Covector,
    speed: f64,
    primitive_norm: f64,
}

impl RandersMetric {
    /// Metric built from the Mañé-optimal primitive `α + β*`, which maximizes
    /// the positivity margin. Fails with [`Error::Subcritical`] unless `κ > c`.
    pub fn new(sys: MagneticSystem, kappa: f64) -> Result<Self> {
        let mane = mane_critical_value(&sys);
        let primitive = mane.optimal_alpha.clone();
        Self::build(sys, kappa, mane, primitive)
    }

    /// Metric built from an explicit primitive of the same magnetic field,
    /// i.e. `primitive − α` must annihilate `[g, g]`.
    pub fn with_primitive(sys: MagneticSystem, kappa: f64, primitive: Covector) -> Result<Self> {
        check_dim(sys.dim(), primitive.dim())?;
        let diff = &primitive.0 - &sys.alpha().0;
        let leak = (sys.algebra().derived_generators().transpose() * &diff).amax();
        if leak > 1e-12 * (1.0 + diff.amax()) {
            return Err(Error::InvalidArgument(
                "primitive differs from α by a form that is not closed".into(),
            ));
        }
        let mane = mane_critical_value(&sys);
        Self::build(sys, kappa, mane, primitive)
    }

    fn build(sys: MagneticSystem, kappa: f64, mane: ManeResult, primitive: Covector) -> Result<Self> {
        if !kappa.is_finite() || kappa <= mane.value || kappa <= 0.0 {
            return Err(Error::Subcritical {
                kappa,
                critical: mane.value,
            });
        }
        let speed = (2.0 * kappa).sqrt();
        let primitive_norm = sys.inertia().dual_norm(&primitive)?;
        if primitive_norm >= speed {
            return Err(Error::InvalidArgument(format!(
                "primitive norm {primitive_norm} is not below √(2κ) = {speed}"
            )));
        }
        Ok(Self {
            sys,
            kappa,
            mane,
            primitive,
            speed,
            primitive_norm,
        })
    }

    pub fn system(&self) -> &MagneticSystem {
        &self.sys
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn critical_value(&self) -> f64 {
        self.mane.value
    }

    pub fn mane(&self) -> &ManeResult {
        &self.mane
    }

    /// The one-form actually used in `F`.
    pub fn primitive(&self) -> &Covector {
        &self.primitive
    }

    /// `√(2κ)`.
    pub fn speed(&self) -> f64 {
        self.speed
    }

    /// `C₁ = √(2κ) − |α|_*`, so that `C₁ |v| ≤ F(v)`.
    pub fn c1(&self) -> f64 {
        self.speed - self.primitive_norm
    }

    /// `C₂ = √(2κ) + |α|_*`, so that `F(v) ≤ C₂ |v|`.
    pub fn c2(&self) -> f64 {
        self.speed + self.primitive_norm
    }

    pub fn eval(&self, v: &AlgebraVector) -> Result<f64> {
        check_dim(self.sys.dim(), v.dim())?;
        Ok(self.eval_slice(v.as_slice()))
    }

    fn eval_slice(&self, v: &[f64]) -> f64 {
        let a = self.sys.inertia().matrix();
        let n = v.len();
        let mut q = 0.0;
        let mut lin = 0.0;
        for i in 0..n {
            let mut row = 0.0;
            for j in 0..n {
                row += a[(i, j)] * v[j];
            }
            q += row * v[i];
            lin += self.primitive.0[i] * v[i];
        }
        self.speed * q.max(0.0).sqrt() - lin
    }

    fn a_norm(&self, v: &[f64]) -> f64 {
        let a = self.sys.inertia().matrix();
        let v = DVector::from_column_slice(v);
        (&v.transpose() * a * &v)[(0, 0)].max(0.0).sqrt()
    }
}

/// `F(v)`.
pub fn finsler_eval(f: &RandersMetric, v: &AlgebraVector) -> Result<f64> {
    f.eval(v)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceReport {
    pub samples: usize,
    pub c1: f64,
    pub c2: f64,
    /// Samples with `F(v) < C₁|v|` or `F(v) > C₂|v|`.
    pub violations: usize,
    /// Violations of the reciprocal form `|v| ≤ F(v)/C₁` and `F(v)/C₂ ≤ |v|`.
    pub reciprocal_violations: usize,
    /// `min (F(v) − C₁|v|)` over unit samples.
    pub worst_lower_slack: f64,
    /// `min (C₂|v| − F(v))` over unit samples.
    pub worst_upper_slack: f64,
    /// `F(v*) − C₁` at the direction `v* ∝ A⁻¹α` where the lower bound is attained.
    pub extremal_lower_gap: f64,
}

impl EquivalenceReport {
    pub fn passed(&self) -> bool {
        self.violations == 0 && self.reciprocal_violations == 0
    }
}

/// Samples `samples` random `A`-unit vectors and checks
/// `C₁ |v|_A ≤ F(v) ≤ C₂ |v|_A` together with its reciprocal form.
pub fn check_equivalence_bounds(f: &RandersMetric, samples: usize, seed: u64) -> Result<EquivalenceReport> {
    if samples == 0 {
        return Err(Error::InvalidArgument("need at least one sample".into()));
    }
    let n = f.sys.dim();
    let (c1, c2) = (f.c1(), f.c2());
    let tol = 1e-12 * f.speed;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = EquivalenceReport {
        samples,
        c1,
        c2,
        violations: 0,
        reciprocal_violations: 0,
        worst_lower_slack: f64::INFINITY,
        worst_upper_slack: f64::INFINITY,
        extremal_lower_gap: 0.0,
    };
    let mut v = vec![0.0; n];
    let mut done = 0;
    while done < samples {
        v.iter_mut().for_each(|x| *x = rng.gen_range(-1.0..1.0));
        let norm = f.a_norm(&v);
        if norm < 1e-8 {
            continue;
        }
        v.iter_mut().for_each(|x| *x /= norm);
        let fv = f.eval_slice(&v);
        let lower = fv - c1;
        let upper = c2 - fv;
        report.worst_lower_slack = report.worst_lower_slack.min(lower);
        report.worst_upper_slack = report.worst_upper_slack.min(upper);
        if lower < -tol || upper < -tol {
            report.violations += 1;
        }
        if 1.0 > fv / c1 + tol || fv / c2 > 1.0 + tol {
            report.reciprocal_violations += 1;
        }
        done += 1;
    }
    let sharp = f.sys.inertia().sharp(&f.primitive)?;
    let norm = f.a_norm(sharp.as_slice());
    if norm > 0.0 {
        let dir: Vec<f64> = sharp.iter().map(|x| x / norm).collect();
        report.extremal_lower_gap = f.eval_slice(&dir) - c1;
    }
    Ok(report)
}

fn half_square(f: &RandersMetric, v: &DVector<f64>) -> f64 {
    0.5 * f.eval_slice(v.as_slice()).powi(2)
}

/// Central finite-difference Hessian of `½F²` at `v` with step `h`.
pub fn fundamental_tensor(f: &RandersMetric, v: &AlgebraVector, h: f64) -> Result<DMatrix<f64>> {
    check_dim(f.sys.dim(), v.dim())?;
    if v.iter().all(|x| *x == 0.0) {
        return Err(Error::ZeroVector);
    }
    if !(h > 0.0) {
        return Err(Error::InvalidArgument(format!("step must be positive, got {h}")));
    }
    let n = v.dim();
    let mut out = DMatrix::zeros(n, n);
    let shifted = |j: usize, sj: f64, k: usize, sk: f64| {
        let mut w = v.0.clone();
        w[j] += sj * h;
        w[k] += sk * h;
        half_square(f, &w)
    };
    for j in 0..n {
        for k in j..n {
            let val = (shifted(j, 1.0, k, 1.0) - shifted(j, 1.0, k, -1.0) - shifted(j, -1.0, k, 1.0)
                + shifted(j, -1.0, k, -1.0))
                / (4.0 * h * h);
            out[(j, k)] = val;
            out[(k, j)] = val;
        }
    }
    Ok(out)
}

/// Exact Hessian of `½F²`: `∇F ∇Fᵀ + F ∇²F` with `∇F = √(2κ) A v/|v| − α`
/// and `∇²F = √(2κ) (A/|v| − A v vᵀ A/|v|³)`.
pub fn fundamental_tensor_exact(f: &RandersMetric, v: &AlgebraVector) -> Result<DMatrix<f64>> {
    check_dim(f.sys.dim(), v.dim())?;
    let norm = f.a_norm(v.as_slice());
    if norm == 0.0 {
        return Err(Error::ZeroVector);
    }
    let a = f.sys.inertia().matrix();
    let av = a * &v.0;
    let grad = &av * (f.speed / norm) - &f.primitive.0;
    let hess = (a / norm - &av * av.transpose() / norm.powi(3)) * f.speed;
    Ok(&grad * grad.transpose() + hess * f.eval_slice(v.as_slice()))
}

/// The closed form
/// `2κ A/|v| − √(2κ)/|v| (A v αᵀ + α vᵀ A) + √(2κ) α(v)/|v|³ A v vᵀ A`.
/// It is not homogeneous of degree zero in `v` and does not agree with the
/// Hessian of `½F²` in general; kept only to report the discrepancy.
pub fn fundamental_tensor_closed_form(f: &RandersMetric, v: &AlgebraVector) -> Result<DMatrix<f64>> {
    check_dim(f.sys.dim(), v.dim())?;
    let norm = f.a_norm(v.as_slice());
    if norm == 0.0 {
        return Err(Error::ZeroVector);
    }
    let a = f.sys.inertia().matrix();
    let av = a * &v.0;
    let alpha = &f.primitive.0;
    let alpha_v = alpha.dot(&v.0);
    let s = f.speed;
    Ok(a * (2.0 * f.kappa / norm) - (&av * alpha.transpose() + alpha * av.transpose()) * (s / norm)
        + &av * av.transpose() * (s * alpha_v / norm.powi(3)))
}

/// `Σ dt F(ξ_i)`.
pub fn finsler_length(f: &RandersMetric, path: &ControlPath) -> Result<f64> {
    path.controls
        .iter()
        .try_fold(0.0, |acc, xi| Ok(acc + path.dt * f.eval(xi)?))
}

/// `Σ dt F(ξ_i)²`.
pub fn finsler_energy(f: &RandersMetric, path: &ControlPath) -> Result<f64> {
    path.controls
        .iter()
        .try_fold(0.0, |acc, xi| Ok(acc + path.dt * f.eval(xi)?.powi(2)))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActionGap {
    /// `S = Σ dt (½|ξ|² − α(ξ) + κ)`.
    pub action: f64,
    /// `Σ dt (√(2κ)|ξ| − α(ξ))`.
    pub length: f64,
    /// `S − length`.
    pub gap: f64,
}

/// Action of `L + κ` against the Randers length, both built from the
/// Mañé-optimal primitive. Each step contributes `dt (|ξ| − √(2κ))²/2 ≥ 0`.
pub fn action_gap(sys: &MagneticSystem, kappa: f64, path: &ControlPath) -> Result<ActionGap> {
    if !(kappa > 0.0) || !kappa.is_finite() {
        return Err(Error::InvalidArgument(format!("energy level must be positive, got {kappa}")));
    }
    let alpha = mane_critical_value(sys).optimal_alpha;
    let s = (2.0 * kappa).sqrt();
    let (mut action, mut length) = (0.0, 0.0);
    for xi in &path.controls {
        let norm = sys.inertia().norm(xi)?;
        let a = alpha.pair(xi)?;
        action += path.dt * (0.5 * norm * norm - a + kappa);
        length += path.dt * (s * norm - a);
    }
    Ok(ActionGap {
        action,
        length,
        gap: action - length,
    })
}

/// Tuning of the direct-method minimizer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MinimizerOptions {
    /// Number of piecewise-constant control steps on `[0, 1]`.
    pub steps: usize,
    /// Number of multistart seeds; seed 0 is the straight line when a group
    /// logarithm is available.
    pub seeds: usize,
    pub seed: u64,
    /// Penalty weights of the augmented-Lagrangian continuation.
    pub penalties: Vec<f64>,
    /// Extra multiplier updates at the last penalty weight.
    pub extra_rounds: usize,
    pub max_iterations: usize,
    pub endpoint_tol: f64,
    pub stationarity_tol: f64,
    /// Finite-difference step for gradients.
    pub fd_step: f64,
    /// Half-width of the uniform distribution of random initial controls.
    pub random_scale: f64,
}

impl Default for MinimizerOptions {
    fn default() -> Self {
        Self {
            steps: 32,
            seeds: 8,
            seed: 0,
            penalties: vec![1e1, 1e2, 1e3, 1e4],
            extra_rounds: 20,
            max_iterations: 3000,
            endpoint_tol: 1e-6,
            stationarity_tol: 1e-6,
            fd_step: 1e-6,
            random_scale: 0.25,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedOutcome {
    pub index: usize,
    pub energy: f64,
    pub endpoint_error: f64,
    pub stationarity: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// JSON-serializable summary of a minimization.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizationReport {
    pub converged: bool,
    /// Start equals target; the zero path is returned.
    pub degenerate: bool,
    pub selected_seed: usize,
    pub iterations: usize,
    /// Augmented objective after every quasi-Newton step of the selected seed.
    pub energy_curve: Vec<f64>,
    pub energy: f64,
    pub length: f64,
    pub endpoint_error: f64,
    /// Euclidean norm of the finite-difference gradient of the final objective.
    pub stationarity: f64,
    /// Discrete magnetic-geodesic residual of the reparametrized controls.
    pub residual: f64,
    pub seeds: Vec<SeedOutcome>,
}

#[derive(Clone, Debug)]
pub struct MinimizerOutput {
    pub path: ControlPath,
    /// The minimizer reparametrized to speed `√(2κ)`: node `i` carries the
    /// velocity of the segment that starts there.
    pub trajectory: Trajectory,
    pub report: OptimizationReport,
}

struct Problem<'a> {
    metric: &'a RandersMetric,
    alg: &'a LieAlgebra,
    start: &'a GroupPoint,
    target: Vec<f64>,
    n: usize,
    d: usize,
    dt: f64,
    h: f64,
}

struct SeedRun {
    x: DVector<f64>,
    outcome: SeedOutcome,
    curve: Vec<f64>,
}

impl Problem<'_> {
    fn control<'x>(&self, x: &'x DVector<f64>, i: usize) -> &'x [f64] {
        &x.as_slice()[i * self.d..(i + 1) * self.d]
    }

    fn term(&self, xi: &[f64]) -> f64 {
        self.dt * self.metric.eval_slice(xi).powi(2)
    }

    fn step_matrix(&self, xi: &[f64]) -> Matrix3<f64> {
        let scaled: Vec<f64> = xi.iter().map(|v| v * self.dt).collect();
        matrix_exp3(self.alg.kind(), &scaled)
    }

    fn start_matrix(&self) -> Option<Matrix3<f64>> {
        match self.start {
            GroupPoint::Matrix(m) => Some(Matrix3::from_fn(|r, c| m[(r, c)])),
            GroupPoint::Diffeo(_) => None,
        }
    }

    fn flow_diffeo(&self, pts: &mut [f64], xi: &[f64]) {
        let circle = self.alg.circle().expect("diffeomorphism group");
        flow_points(circle, xi, pts, self.dt);
    }

    fn endpoint(&self, x: &DVector<f64>) -> Vec<f64> {
        match self.start_matrix() {
            Some(mut g) => {
                for i in 0..self.n {
                    g = self.step_matrix(self.control(x, i)) * g;
                }
                matrix_entries(&g)
            }
            None => {
                let mut pts = self.start.entries();
                for i in 0..self.n {
                    self.flow_diffeo(&mut pts, self.control(x, i));
                }
                pts
            }
        }
    }

    fn penalty(&self, end: &[f64], lambda: &[f64], mu: f64) -> f64 {
        end.iter()
            .zip(&self.target)
            .zip(lambda)
            .map(|((e, t), l)| {
                let r = e - t;
                l * r + 0.5 * mu * r * r
            })
            .sum()
    }

    fn energy(&self, x: &DVector<f64>) -> f64 {
        (0..self.n).map(|i| self.term(self.control(x, i))).sum()
    }

    fn objective(&self, x: &DVector<f64>, lambda: &[f64], mu: f64) -> f64 {
        self.energy(x) + self.penalty(&self.endpoint(x), lambda, mu)
    }

    /// Central differences; only the perturbed step is recomputed, using
    /// cached products before and after it.
    fn gradient(&self, x: &DVector<f64>, lambda: &[f64], mu: f64) -> DVector<f64> {
        let (n, d, h) = (self.n, self.d, self.h);
        let mut grad = DVector::zeros(n * d);
        let mut xi = vec![0.0; d];
        match self.start_matrix() {
            Some(g0) => {
                let steps: Vec<Matrix3<f64>> = (0..n).map(|i| self.step_matrix(self.control(x, i))).collect();
                let mut prefix = Vec::with_capacity(n);
                let mut g = g0;
                for s in &steps {
                    prefix.push(g);
                    g = s * g;
                }
                let mut suffix = vec![Matrix3::<f64>::identity(); n];
                for i in (0..n.saturating_sub(1)).rev() {
                    suffix[i] = suffix[i + 1] * steps[i + 1];
                }
                for i in 0..n {
                    for k in 0..d {
                        xi.copy_from_slice(self.control(x, i));
                        let mut side = |sign: f64| {
                            xi[k] = x[i * d + k] + sign * h;
                            let end = suffix[i] * self.step_matrix(&xi) * prefix[i];
                            self.term(&xi) + self.penalty(&matrix_entries(&end), lambda, mu)
                        };
                        let (plus, minus) = (side(1.0), side(-1.0));
                        grad[i * d + k] = (plus - minus) / (2.0 * h);
                    }
                }
            }
            None => {
                let mut prefix = Vec::with_capacity(n);
                let mut pts = self.start.entries();
                for i in 0..n {
                    prefix.push(pts.clone());
                    self.flow_diffeo(&mut pts, self.control(x, i));
                }
                for i in 0..n {
                    for k in 0..d {
                        xi.copy_from_slice(self.control(x, i));
                        let mut side = |sign: f64| {
                            xi[k] = x[i * d + k] + sign * h;
                            let mut p = prefix[i].clone();
                            self.flow_diffeo(&mut p, &xi);
                            for j in (i + 1)..n {
                                self.flow_diffeo(&mut p, self.control(x, j));
                            }
                            self.term(&xi) + self.penalty(&p, lambda, mu)
                        };
                        let (plus, minus) = (side(1.0), side(-1.0));
                        grad[i * d + k] = (plus - minus) / (2.0 * h);
                    }
                }
            }
        }
        grad
    }

    fn endpoint_error(&self, x: &DVector<f64>) -> f64 {
        let end = self.endpoint(x);
        match self.start {
            GroupPoint::Matrix(_) => end
                .iter()
                .zip(&self.target)
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt(),
            GroupPoint::Diffeo(_) => end
                .iter()
                .zip(&self.target)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max),
        }
    }

    fn run(&self, index: usize, x0: DVector<f64>, opts: &MinimizerOptions) -> SeedRun {
        let m = self.target.len();
        let mut lambda = vec![0.0; m];
        let mut x = x0;
        let mut curve = Vec::new();
        let mut iterations = 0;
        let mut stationarity = f64::INFINITY;
        let mut endpoint_error = f64::INFINITY;
        let last = *opts.penalties.last().unwrap_or(&1e4);
        let schedule = opts
            .penalties
            .iter()
            .copied()
            .chain(std::iter::repeat(last).take(opts.extra_rounds));
        let settings = LbfgsSettings {
            max_iterations: opts.max_iterations,
            gradient_tol: 1e-3 * opts.stationarity_tol,
            ..LbfgsSettings::default()
        };
        for (round, mu) in schedule.enumerate() {
            let lam = lambda.clone();
            let out = lbfgs(
                x,
                settings,
                |y| (self.objective(y, &lam, mu), self.gradient(y, &lam, mu)),
                |y| self.objective(y, &lam, mu),
            );
            x = out.x;
            iterations += out.iterations;
            curve.extend(out.history);
            stationarity = out.gradient.norm();
            endpoint_error = self.endpoint_error(&x);
            if !x.iter().all(|v| v.is_finite()) {
                break;
            }
            let done = round + 1 >= opts.penalties.len()
                && endpoint_error <= 0.1 * opts.endpoint_tol
                && stationarity <= opts.stationarity_tol;
            if done {
                break;
            }
            let end = self.endpoint(&x);
            for ((l, e), t) in lambda.iter_mut().zip(&end).zip(&self.target) {
                *l += mu * (e - t);
            }
        }
        let energy = self.energy(&x);
        SeedRun {
            outcome: SeedOutcome {
                index,
                energy,
                endpoint_error,
                stationarity,
                iterations,
                converged: endpoint_error <= opts.endpoint_tol
                    && stationarity <= opts.stationarity_tol
                    && energy.is_finite(),
            },
            x,
            curve,
        }
    }
}

fn matrix_entries(m: &Matrix3<f64>) -> Vec<f64> {
    (0..3).flat_map(|r| (0..3).map(move |c| m[(r, c)])).collect()
}

/// Minimizes `Σ dt F(ξ_i)²` over `steps` controls on `[0, 1]` subject to
/// `evolve(ξ)·start = target`, by an augmented-Lagrangian continuation over
/// the penalty weights with L-BFGS inner solves and multistart. Seeds run in
/// parallel; the lowest energy among converged seeds wins, ties within 1e−10
/// going to the smaller endpoint error, then the smaller seed index.
///
/// Failure to converge is not an error: the report's `converged` flag is
/// false and the best iterate is returned for diagnosis.
pub fn minimize_finsler_energy(
    f: &RandersMetric,
    start: &GroupPoint,
    target: &GroupPoint,
    opts: &MinimizerOptions,
) -> Result<MinimizerOutput> {
    let alg = f.sys.algebra();
    check_point(alg, start)?;
    check_point(alg, target)?;
    if opts.steps < 8 {
        return Err(Error::InvalidArgument(format!("need at least 8 steps, got {}", opts.steps)));
    }
    if opts.seeds == 0 || opts.penalties.is_empty() || opts.penalties.iter().any(|m| !(*m > 0.0)) {
        return Err(Error::InvalidArgument("need at least one seed and positive penalties".into()));
    }
    let (n, d) = (opts.steps, f.sys.dim());
    let dt = 1.0 / n as f64;

    if start.distance(target)? == 0.0 {
        let path = ControlPath::new(vec![AlgebraVector::zeros(d); n], dt, start.clone(), target.clone())?;
        let trajectory = reparametrize(f, &path)?;
        let report = OptimizationReport {
            converged: true,
            degenerate: true,
            selected_seed: 0,
            iterations: 0,
            energy_curve: vec![],
            energy: 0.0,
            length: 0.0,
            endpoint_error: 0.0,
            stationarity: 0.0,
            residual: 0.0,
            seeds: vec![],
        };
        return Ok(MinimizerOutput {
            path,
            trajectory,
            report,
        });
    }

    let problem = Problem {
        metric: f,
        alg,
        start,
        target: target.entries(),
        n,
        d,
        dt,
        h: opts.fd_step,
    };
    let straight = start
        .inverse()
        .ok()
        .and_then(|inv| target.mul(&inv).ok())
        .and_then(|rel| alg.group_log(&rel));
    let inits: Vec<DVector<f64>> = (0..opts.seeds)
        .map(|k| match (&straight, k) {
            (Some(log), 0) => DVector::from_fn(n * d, |j, _| log[j % d]),
            _ => {
                let mut rng = ChaCha8Rng::seed_from_u64(opts.seed.wrapping_add(k as u64));
                DVector::from_fn(n * d, |_, _| rng.gen_range(-opts.random_scale..=opts.random_scale))
            }
        })
        .collect();
    let runs: Vec<SeedRun> = inits
        .into_par_iter()
        .enumerate()
        .map(|(k, x0)| problem.run(k, x0, opts))
        .collect();

    let any_converged = runs.iter().any(|r| r.outcome.converged);
    let best = runs
        .iter()
        .filter(|r| r.outcome.converged || !any_converged)
        .filter(|r| r.outcome.energy.is_finite())
        .min_by(|a, b| {
            let (ea, eb) = (a.outcome.energy, b.outcome.energy);
            if (ea - eb).abs() <= 1e-10 {
                a.outcome
                    .endpoint_error
                    .total_cmp(&b.outcome.endpoint_error)
                    .then(a.outcome.index.cmp(&b.outcome.index))
            } else {
                ea.total_cmp(&eb)
            }
        })
        .ok_or_else(|| Error::NonConvergence("every seed diverged".into()))?;

    let controls: Vec<AlgebraVector> = (0..n)
        .map(|i| AlgebraVector::new(problem.control(&best.x, i).to_vec()))
        .collect();
    let path = ControlPath::new(controls, dt, start.clone(), target.clone())?;
    let trajectory = reparametrize(f, &path)?;
    let report = OptimizationReport {
        converged: best.outcome.converged,
        degenerate: false,
        selected_seed: best.outcome.index,
        iterations: best.outcome.iterations,
        energy_curve: best.curve.clone(),
        energy: best.outcome.energy,
        length: finsler_length(f, &path)?,
        endpoint_error: best.outcome.endpoint_error,
        stationarity: best.outcome.stationarity,
        residual: segment_residual(&f.sys, &trajectory)?,
        seeds: runs.iter().map(|r| r.outcome.clone()).collect(),
    };
    Ok(MinimizerOutput {
        path,
        trajectory,
        report,
    })
}

/// Rescales each control to speed `√(2κ)` and its duration so that every
/// step `exp(dt ξ_i)` is unchanged: `u_i = √(2κ) ξ_i/|ξ_i|`, `τ_i = dt |ξ_i|/√(2κ)`.
/// Zero controls are dropped.
pub fn reparametrize(f: &RandersMetric, path: &ControlPath) -> Result<Trajectory> {
    let alg = f.sys.algebra();
    let d = f.sys.dim();
    let mut times = vec![0.0];
    let mut points = vec![path.start.clone()];
    let mut velocities = Vec::new();
    let mut g = path.start.clone();
    for xi in &path.controls {
        check_dim(d, xi.dim())?;
        let norm = f.a_norm(xi.as_slice());
        if norm == 0.0 {
            continue;
        }
        velocities.push(AlgebraVector(&xi.0 * (f.speed / norm)));
        g = alg.exp_left_mul(&AlgebraVector(&xi.0 * path.dt), &g)?;
        times.push(times.last().unwrap() + path.dt * norm / f.speed);
        points.push(g.clone());
    }
    let last = velocities.last().cloned().unwrap_or_else(|| AlgebraVector::zeros(d));
    velocities.push(last);
    let energies = velocities
        .iter()
        .map(|u| f.sys.inertia().kinetic_energy(u))
        .collect::<Result<Vec<f64>>>()?;
    Ok(Trajectory {
        times,
        points,
        velocities,
        energies,
        meta: TrajectoryMeta {
            integrator: "finsler-minimizer".into(),
            group: alg.kind(),
            dt: path.dt,
            system_hash: f.sys.fingerprint(),
        },
    })
}

/// Residual of a piecewise-constant velocity sequence (one velocity per
/// segment, as produced by [`reparametrize`]) against the magnetic equation:
/// `max |(u_{i+1} − u_i)/t̄ − rhs((u_i + u_{i+1})/2)|∞`, with `t̄` the distance
/// between segment midpoints.
pub fn segment_residual(sys: &MagneticSystem, traj: &Trajectory) -> Result<f64> {
    let segs = traj.len().saturating_sub(1);
    let mut worst: f64 = 0.0;
    for i in 0..segs.saturating_sub(1) {
        let tau0 = traj.times[i + 1] - traj.times[i];
        let tau1 = traj.times[i + 2] - traj.times[i + 1];
        let (u0, u1) = (&traj.velocities[i].0, &traj.velocities[i + 1].0);
        let mid = AlgebraVector((u0 + u1) * 0.5);
        let rhs = magnetic_rhs(sys, &mid)?;
        let r = (u1 - u0) / (0.5 * (tau0 + tau1)) - rhs.0;
        worst = worst.max(r.amax());
    }
    Ok(worst)
}

/// `max_k |(u_{k+1} − u_{k−1})/(t_{k+1} − t_{k−1}) − rhs(u_k)|∞` over interior samples.
pub fn geodesic_residual(sys: &MagneticSystem, traj: &Trajectory) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for k in 1..traj.len().saturating_sub(1) {
        let du = (&traj.velocities[k + 1].0 - &traj.velocities[k - 1].0)
            / (traj.times[k + 1] - traj.times[k - 1]);
        let rhs = magnetic_rhs(sys, &traj.velocities[k])?;
        worst = worst.max((du - rhs.0).amax());
    }
    Ok(worst)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConnectOptions {
    pub minimizer: MinimizerOptions,
    /// Refine the reparametrized minimizer by shooting on `(u(0), T)`.
    pub polish: bool,
    /// Integrator step of the polished trajectory.
    pub step: f64,
    pub shooting_iterations: usize,
}

impl Default for ConnectOptions {
    fn default() -> Self {
        Self {
            minimizer: MinimizerOptions::default(),
            polish: true,
            step: 1e-3,
            shooting_iterations: 60,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConnectReport {
    pub converged: bool,
    pub degenerate: bool,
    pub kappa: f64,
    pub critical_value: f64,
    pub travel_time: f64,
    pub endpoint_error: f64,
    /// `max_t | |u(t)|_A − √(2κ) |`.
    pub speed_error: f64,
    pub residual: f64,
    pub polished: bool,
    pub shooting_iterations: usize,
    /// Largest distance between the reparametrized minimizer and the
    /// polished geodesic at matching normalized times.
    pub polish_shift: f64,
    pub minimizer: OptimizationReport,
}

#[derive(Clone, Debug)]
pub struct Connection {
    pub trajectory: Trajectory,
    pub minimizer: MinimizerOutput,
    pub report: ConnectReport,
}

/// Magnetic geodesic of energy `κ` from `x` to `y` built from the Randers
/// energy minimizer of the Mañé-optimal metric.
pub fn connect_at_energy(
    sys: &MagneticSystem,
    kappa: f64,
    x: &GroupPoint,
    y: &GroupPoint,
    opts: &ConnectOptions,
) -> Result<Connection> {
    let metric = RandersMetric::new(sys.clone(), kappa)?;
    connect_with_metric(&metric, x, y, opts)
}

/// As [`connect_at_energy`] for a given Randers metric.
///
/// The minimizer is reparametrized to speed `√(2κ)`; when `opts.polish` is
/// set its initial velocity and duration seed a Levenberg–Marquardt shooting
/// solve for the exact geodesic, whose deviation from the minimizer is
/// reported as `polish_shift`.
pub fn connect_with_metric(
    f: &RandersMetric,
    x: &GroupPoint,
    y: &GroupPoint,
    opts: &ConnectOptions,
) -> Result<Connection> {
    let sys = &f.sys;
    let minimizer = minimize_finsler_energy(f, x, y, &opts.minimizer)?;
    let base = ConnectReport {
        converged: minimizer.report.converged,
        degenerate: minimizer.report.degenerate,
        kappa: f.kappa,
        critical_value: f.mane.value,
        travel_time: *minimizer.trajectory.times.last().unwrap(),
        endpoint_error: minimizer.report.endpoint_error,
        speed_error: speed_error(f, &minimizer.trajectory)?,
        residual: minimizer.report.residual,
        polished: false,
        shooting_iterations: 0,
        polish_shift: 0.0,
        minimizer: minimizer.report.clone(),
    };
    if minimizer.report.degenerate {
        let trajectory = Trajectory {
            times: vec![0.0],
            points: vec![x.clone()],
            velocities: vec![AlgebraVector::zeros(sys.dim())],
            energies: vec![0.0],
            meta: minimizer.trajectory.meta.clone(),
        };
        let report = ConnectReport {
            speed_error: 0.0,
            ..base
        };
        return Ok(Connection {
            trajectory,
            minimizer,
            report,
        });
    }
    if !opts.polish {
        let trajectory = minimizer.trajectory.clone();
        let report = ConnectReport {
            converged: base.converged
                && base.endpoint_error <= opts.minimizer.endpoint_tol
                && base.speed_error <= 1e-6
                && base.residual <= 1e-4,
            ..base
        };
        return Ok(Connection {
            trajectory,
            minimizer,
            report,
        });
    }

    let rep = &minimizer.trajectory;
    let (u0, u1) = (&rep.velocities[0].0, &rep.velocities[1.min(rep.len() - 2)].0);
    let (tau0, tau1) = (rep.times[1] - rep.times[0], rep.times[2.min(rep.len() - 1)] - rep.times[1]);
    let w0 = if tau0 + tau1 > 0.0 && rep.len() > 2 {
        u0 + (u0 - u1) * (tau0 / (tau0 + tau1))
    } else {
        u0.clone()
    };
    let t0 = base.travel_time;
    let n = ((t0 / opts.step).ceil() as usize).max(64);
    let (u_start, t_end, iters) = shoot(f, x, y, w0, t0, n, opts.shooting_iterations)?;
    let trajectory = integrate_magnetic(sys, &u_start, x, t_end, t_end / n as f64)?;
    let endpoint_error = trajectory.final_point().distance(y)?;
    let speed_err = speed_error(f, &trajectory)?;
    let residual = geodesic_residual(sys, &trajectory)?;
    let mut shift: f64 = 0.0;
    for (t, g) in rep.times.iter().zip(&rep.points) {
        let k = ((t / t0) * n as f64).round().min(n as f64) as usize;
        shift = shift.max(g.distance(&trajectory.points[k])?);
    }
    let report = ConnectReport {
        converged: minimizer.report.converged
            && endpoint_error <= opts.minimizer.endpoint_tol
            && speed_err <= 1e-6
            && residual <= 1e-4,
        travel_time: t_end,
        endpoint_error,
        speed_error: speed_err,
        residual,
        polished: true,
        shooting_iterations: iters,
        polish_shift: shift,
        ..base
    };
    Ok(Connection {
        trajectory,
        minimizer,
        report,
    })
}

fn speed_error(f: &RandersMetric, traj: &Trajectory) -> Result<f64> {
    traj.velocities.iter().try_fold(0.0f64, |acc, u| {
        Ok(acc.max((f.sys.inertia().norm(u)? - f.speed).abs()))
    })
}

/// Levenberg–Marquardt on `z = (w, T)` for the endpoint of the magnetic
/// geodesic with `u(0) = √(2κ) w/|w|_A` run for time `T` in `n` steps.
fn shoot(
    f: &RandersMetric,
    x: &GroupPoint,
    y: &GroupPoint,
    w0: DVector<f64>,
    t0: f64,
    n: usize,
    max_iterations: usize,
) -> Result<(AlgebraVector, f64, usize)> {
    let sys = &f.sys;
    let d = sys.dim();
    let target = DVector::from_vec(y.entries());
    let velocity = |z: &DVector<f64>| -> AlgebraVector {
        let w = z.rows(0, d).into_owned();
        let norm = f.a_norm(w.as_slice()).max(f64::MIN_POSITIVE);
        AlgebraVector(w * (f.speed / norm))
    };
    let residual = |z: &DVector<f64>| -> Option<DVector<f64>> {
        let t = z[d];
        if !(t > 0.0) {
            return None;
        }
        let traj = integrate_magnetic(sys, &velocity(z), x, t, t / n as f64).ok()?;
        let r = DVector::from_vec(traj.final_point().entries()) - &target;
        r.iter().all(|v| v.is_finite()).then_some(r)
    };
    let mut z = DVector::zeros(d + 1);
    z.rows_mut(0, d).copy_from(&velocity(&{
        let mut tmp = DVector::zeros(d + 1);
        tmp.rows_mut(0, d).copy_from(&w0);
        tmp
    }).0);
    z[d] = t0;
    let mut r = residual(&z).ok_or(Error::NonFinite { last_valid_time: 0.0 })?;
    let mut lambda = 1e-3;
    let mut iters = 0;
    while iters < max_iterations && r.amax() > 1e-13 {
        iters += 1;
        let mut jac = DMatrix::zeros(r.len(), d + 1);
        for j in 0..=d {
            let h = 1e-7 * z[j].abs().max(1.0);
            let mut zp = z.clone();
            let mut zm = z.clone();
            zp[j] += h;
            zm[j] -= h;
            let (Some(rp), Some(rm)) = (residual(&zp), residual(&zm)) else {
                return Err(Error::NonFinite { last_valid_time: 0.0 });
            };
            jac.set_column(j, &((rp - rm) / (2.0 * h)));
        }
        let jtj = jac.transpose() * &jac;
        let jtr = jac.transpose() * &r;
        let mut improved = false;
        while lambda < 1e12 {
            let mut damped = jtj.clone();
            for i in 0..=d {
                damped[(i, i)] += lambda * (jtj[(i, i)] + 1e-12);
            }
            let Some(step) = damped.lu().solve(&(-&jtr)) else {
                lambda *= 10.0;
                continue;
            };
            let mut trial = &z + step;
            let v = velocity(&trial);
            trial.rows_mut(0, d).copy_from(&v.0);
            match residual(&trial) {
                Some(rt) if rt.norm() < r.norm() => {
                    z = trial;
                    r = rt;
                    lambda = (lambda / 3.0).max(1e-12);
                    improved = true;
                    break;
                }
                _ => lambda *= 4.0,
            }
        }
        if !improved {
            break;
        }
    }
    Ok((velocity(&z), z[d], iters))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::magnetics::InertiaOperator;
    use approx::assert_abs_diff_eq;

    fn so3(alpha: [f64; 3]) -> MagneticSystem {
        MagneticSystem::new(LieAlgebra::so3(), InertiaOperator::identity(3), Covector::new(alpha.to_vec())).unwrap()
    }

    #[test]
    fn eval_examples() {
        let f = RandersMetric::new(so3([0.0; 3]), 0.5).unwrap();
        let v = AlgebraVector::new(vec![0.3, -0.4, 1.2]);
        assert_abs_diff_eq!(f.eval(&v).unwrap(), 1.3, epsilon = 1e-15);
        assert_eq!(f.eval(&AlgebraVector::zeros(3)).unwrap(), 0.0);
        let f = RandersMetric::new(so3([1.0, 0.0, 0.0]), 2.0).unwrap();
        assert_abs_diff_eq!(f.eval(&AlgebraVector::basis(3, 0)).unwrap(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn subcritical_rejected() {
        let sys = MagneticSystem::new(
            LieAlgebra::heisenberg3(),
            InertiaOperator::identity(3),
            Covector::new(vec![1.0, 0.0, 1.0]),
        )
        .unwrap();
        match RandersMetric::new(sys.clone(), 0.25) {
            Err(Error::Subcritical { critical, .. }) => assert_abs_diff_eq!(critical, 0.5, epsilon = 1e-12),
            other => panic!("{other:?}"),
        }
        assert!(RandersMetric::new(sys.clone(), 0.5).is_err());
        assert!(RandersMetric::new(sys, 0.51).is_ok());
    }

    #[test]
    fn with_primitive_requires_closed_difference() {
        let sys = MagneticSystem::new(
            LieAlgebra::heisenberg3(),
            InertiaOperator::identity(3),
            Covector::new(vec![0.0, 0.0, 0.3]),
        )
        .unwrap();
        assert!(RandersMetric::with_primitive(sys.clone(), 1.0, Covector::new(vec![0.2, -0.1, 0.3])).is_ok());
        assert!(RandersMetric::with_primitive(sys, 1.0, Covector::new(vec![0.0, 0.0, 0.4])).is_err());
    }

    #[test]
    fn equivalence_bounds_and_extremal_direction() {
        let f = RandersMetric::new(so3([1.0, 0.0, 0.0]), 2.0).unwrap();
        assert_abs_diff_eq!(f.c1(), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(f.c2(), 3.0, epsilon = 1e-15);
        let report = check_equivalence_bounds(&f, 2000, 7).unwrap();
        assert!(report.passed(), "{report:?}");
        assert!(report.extremal_lower_gap.abs() < 1e-14);
        // Grid search over directions in the e1–e2 plane: the minimum of F on
        // the unit circle is at e1 and equals C₁.
        let best = (0..3600)
            .map(|k| {
                let th = k as f64 * std::f64::consts::TAU / 3600.0;
                f.eval(&AlgebraVector::new(vec![th.cos(), th.sin(), 0.0])).unwrap()
            })
            .fold(f64::INFINITY, f64::min);
        assert_abs_diff_eq!(best, 1.0, epsilon = 1e-12);

        let flat = RandersMetric::new(so3([0.0; 3]), 3.0).unwrap();
        let report = check_equivalence_bounds(&flat, 100, 1).unwrap();
        assert_eq!(report.c1, report.c2);
        assert!(report.worst_lower_slack.abs() < 1e-14 && report.worst_upper_slack.abs() < 1e-14);
        assert!(check_equivalence_bounds(&flat, 0, 1).is_err());
    }

    #[test]
    fn fundamental_tensor_riemannian_case() {
        let sys = MagneticSystem::new(
            LieAlgebra::se2(),
            InertiaOperator::diagonal(&[1.0, 2.0, 0.5]).unwrap(),
            Covector::zeros(3),
        )
        .unwrap();
        let f = RandersMetric::new(sys, 0.5).unwrap();
        let v = AlgebraVector::new(vec![0.4, -1.1, 0.7]);
        let g = fundamental_tensor(&f, &v, 1e-4).unwrap();
        assert!((g - f.system().inertia().matrix()).amax() < 1e-6);
        assert_eq!(fundamental_tensor(&f, &AlgebraVector::zeros(3), 1e-4), Err(Error::ZeroVector));
    }

    #[test]
    fn fundamental_tensor_matches_exact_hessian() {
        let f = RandersMetric::new(so3([0.9 * 2.0, 0.0, 0.0]), 2.0).unwrap();
        let v = AlgebraVector::new(vec![0.3, 0.8, -0.5]);
        let fd = fundamental_tensor(&f, &v, 1e-4).unwrap();
        let exact = fundamental_tensor_exact(&f, &v).unwrap();
        assert!((&fd - &exact).amax() < 1e-6, "{}", (&fd - &exact).amax());
        assert!(exact.symmetric_eigenvalues().min() > 0.0);
        // Degree-zero homogeneity of the true tensor; the closed form lacks it.
        let exact2 = fundamental_tensor_exact(&f, &AlgebraVector(&v.0 * 3.0)).unwrap();
        assert!((&exact2 - &exact).amax() < 1e-12);
        let closed = fundamental_tensor_closed_form(&f, &v).unwrap();
        let closed2 = fundamental_tensor_closed_form(&f, &AlgebraVector(&v.0 * 3.0)).unwrap();
        assert!((&closed2 - &closed).amax() > 1e-3);
    }

    fn path(controls: Vec<Vec<f64>>, dt: f64) -> ControlPath {
        let id = LieAlgebra::so3().identity();
        ControlPath::new(controls.into_iter().map(AlgebraVector::new).collect(), dt, id.clone(), id).unwrap()
    }

    #[test]
    fn length_and_energy_examples() {
        let f = RandersMetric::new(so3([0.0; 3]), 0.5).unwrap();
        assert_eq!(finsler_length(&f, &path(vec![vec![0.0; 3]; 4], 0.25)).unwrap(), 0.0);
        assert_eq!(finsler_energy(&f, &path(vec![vec![0.0; 3]; 4], 0.25)).unwrap(), 0.0);
        let p = path(vec![vec![1.0, 0.0, 0.0]; 3], 1.0);
        assert_eq!(finsler_length(&f, &p).unwrap(), 3.0);
        let len = finsler_length(&f, &p).unwrap();
        assert_eq!(finsler_energy(&f, &p).unwrap(), len * len / p.total_time());
        let halves = path(vec![vec![1.0, 0.0, 0.0]; 6], 0.5);
        assert_eq!(finsler_length(&f, &halves).unwrap(), 3.0);
        let double = path(vec![vec![1.0, 0.0, 0.0]; 3], 2.0);
        assert_eq!(finsler_energy(&f, &double).unwrap(), 2.0 * finsler_energy(&f, &p).unwrap());
    }

    #[test]
    fn action_gap_examples() {
        let sys = so3([0.0, 0.0, 0.3]);
        let kappa: f64 = 2.0;
        let s = (2.0 * kappa).sqrt();
        let on_shell = path(vec![vec![s, 0.0, 0.0], vec![0.0, s, 0.0]], 0.5);
        assert!(action_gap(&sys, kappa, &on_shell).unwrap().gap.abs() <= 1e-12);
        let fast = path(vec![vec![2.0 * s, 0.0, 0.0]], 1.5);
        let gap = action_gap(&sys, kappa, &fast).unwrap().gap;
        assert_abs_diff_eq!(gap, 1.5 * (0.5 * 8.0 * kappa + kappa - 2.0 * 2.0 * kappa), epsilon = 1e-12);
        let rest = path(vec![vec![0.0; 3]; 2], 1.0);
        let g = action_gap(&sys, 1.0, &rest).unwrap();
        assert_eq!((g.action, g.length, g.gap), (2.0, 0.0, 2.0));
    }

    #[test]
    fn minimizer_trivial_target() {
        let f = RandersMetric::new(so3([0.0, 0.0, 0.3]), 2.0).unwrap();
        let e = f.system().algebra().identity();
        let out = minimize_finsler_energy(&f, &e, &e, &MinimizerOptions::default()).unwrap();
        assert!(out.report.degenerate && out.report.converged);
        assert_eq!(finsler_energy(&f, &out.path).unwrap(), 0.0);
    }

    #[test]
    fn minimizer_bi_invariant_distance() {
        let f = RandersMetric::new(so3([0.0; 3]), 2.0).unwrap();
        let alg = f.system().algebra();
        let target = alg.group_exp(&AlgebraVector::new(vec![0.0, 0.0, 0.5])).unwrap();
        let opts = MinimizerOptions {
            steps: 8,
            seeds: 2,
            ..MinimizerOptions::default()
        };
        let out = minimize_finsler_energy(&f, &alg.identity(), &target, &opts).unwrap();
        assert!(out.report.converged, "{:?}", out.report);
        assert_abs_diff_eq!(out.report.length / f.speed(), 0.5, epsilon = 1e-5);
    }

    #[test]
    fn rejects_too_few_steps() {
        let f = RandersMetric::new(so3([0.0; 3]), 2.0).unwrap();
        let e = f.system().algebra().identity();
        let opts = MinimizerOptions {
            steps: 4,
            ..MinimizerOptions::default()
        };
        assert!(minimize_finsler_energy(&f, &e, &e, &opts).is_err());
    }
}
