//! Limited-memory BFGS with backtracking (Armijo) line search.

use std::collections::VecDeque;

use nalgebra::DVector;

#[derive(Clone, Copy, Debug)]
pub(crate) struct LbfgsSettings {
    pub max_iterations: usize,
    /// Stop once `‖∇f‖∞` falls below this.
    pub gradient_tol: f64,
    pub memory: usize,
}

impl Default for LbfgsSettings {
    fn default() -> Self {
        Self {
            max_iterations: 2000,
            gradient_tol: 1e-10,
            memory: 12,
        }
    }
}

#[derive(Clone, Debug)]
pub(crate) struct LbfgsOutcome {
    pub x: DVector<f64>,
    pub gradient: DVector<f64>,
    pub iterations: usize,
    /// Objective value after each accepted step.
    pub history: Vec<f64>,
}

/// Minimizes `f` from `x0`. `eval` returns value and gradient, `value` only
/// the value (used by the line search).
pub(crate) fn lbfgs(
    x0: DVector<f64>,
    settings: LbfgsSettings,
    eval: impl Fn(&DVector<f64>) -> (f64, DVector<f64>),
    value: impl Fn(&DVector<f64>) -> f64,
) -> LbfgsOutcome {
    let mut x = x0;
    let (mut f, mut g) = eval(&x);
    let mut pairs: VecDeque<(DVector<f64>, DVector<f64>, f64)> = VecDeque::new();
    let mut history = Vec::new();
    let mut iterations = 0;

    while iterations < settings.max_iterations && g.amax() > settings.gradient_tol {
        let mut dir = two_loop(&g, &pairs);
        if dir.dot(&g) >= 0.0 {
            pairs.clear();
            dir = -&g;
        }
        let step = match backtrack(&value, &x, f, &g, &dir) {
            Some(s) => s,
            None if !pairs.is_empty() => {
                pairs.clear();
                dir = -&g;
                match backtrack(&value, &x, f, &g, &dir) {
                    Some(s) => s,
                    None => break,
                }
            }
            None => break,
        };
        let x_new = &x + &dir * step;
        let (f_new, g_new) = eval(&x_new);
        let s = &x_new - &x;
        let y = &g_new - &g;
        let sy = s.dot(&y);
        if sy > 1e-12 * s.norm() * y.norm() {
            if pairs.len() == settings.memory {
                pairs.pop_front();
            }
            pairs.push_back((s, y, 1.0 / sy));
        }
        x = x_new;
        f = f_new;
        g = g_new;
        iterations += 1;
        history.push(f);
    }

    LbfgsOutcome {
        x,
        gradient: g,
        iterations,
        history,
    }
}

fn two_loop(g: &DVector<f64>, pairs: &VecDeque<(DVector<f64>, DVector<f64>, f64)>) -> DVector<f64> {
    let mut q = g.clone();
    let mut alphas = Vec::with_capacity(pairs.len());
    for (s, y, rho) in pairs.iter().rev() {
        let a = rho * s.dot(&q);
        q.axpy(-a, y, 1.0);
        alphas.push(a);
    }
    if let Some((s, y, _)) = pairs.back() {
        q *= s.dot(y) / y.norm_squared();
    }
    for ((s, y, rho), a) in pairs.iter().zip(alphas.into_iter().rev()) {
        let b = rho * y.dot(&q);
        q.axpy(a - b, s, 1.0);
    }
    -q
}

fn backtrack(
    value: &impl Fn(&DVector<f64>) -> f64,
    x: &DVector<f64>,
    f: f64,
    g: &DVector<f64>,
    dir: &DVector<f64>,
) -> Option<f64> {
    let slope = g.dot(dir);
    let mut t = 1.0;
    for _ in 0..60 {
        let trial = value(&(x + dir * t));
        if trial.is_finite() && trial <= f + 1e-4 * t * slope {
            return (trial < f).then_some(t);
        }
        t *= 0.5;
    }
    None
}
