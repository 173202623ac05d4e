//! Box-constrained quasi-Newton minimization with multiple starts.
//!
//! The local solver is a projected BFGS: variables sitting on a bound with
//! the gradient pointing outward are frozen for the iteration, the inverse
//! Hessian approximation drives the remaining ones, and an Armijo
//! backtracking search runs along the projected path. Every iterate is
//! clamped into the box, so reported points satisfy the bounds exactly.

use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq)]
pub struct Bounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Bounds {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Self {
        assert_eq!(lower.len(), upper.len());
        debug_assert!(lower.iter().zip(&upper).all(|(l, u)| l <= u));
        Self { lower, upper }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn project(&self, x: &mut [f64]) {
        for ((v, lo), hi) in x.iter_mut().zip(&self.lower).zip(&self.upper) {
            *v = v.clamp(*lo, *hi);
        }
    }

    pub fn center(&self) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| 0.5 * (l + u))
            .collect()
    }

    /// Uniform draw inside the box.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| if u > l { rng.random_range(*l..*u) } else { *l })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalOptions {
    pub max_iterations: usize,
    /// Relative change in the objective below which the search stops.
    pub f_tol: f64,
    /// Infinity norm of the projected gradient below which the search stops.
    pub g_tol: f64,
}

impl Default for LocalOptions {
    fn default() -> Self {
        Self {
            max_iterations: 500,
            f_tol: 1e-8,
            g_tol: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalOutcome {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Minimizes `f` (which returns value and gradient) inside `bounds`.
///
/// Non-finite objective values are treated as infeasible and rejected by the
/// line search.
pub fn minimize<F>(mut f: F, x0: &[f64], bounds: &Bounds, opts: &LocalOptions) -> LocalOutcome
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    let n = bounds.dim();
    let mut x = x0.to_vec();
    bounds.project(&mut x);
    let (mut fx, mut g) = f(&x);
    if !fx.is_finite() {
        return LocalOutcome {
            x,
            value: f64::INFINITY,
            iterations: 0,
            converged: false,
        };
    }

    let identity = |h: &mut Vec<f64>| {
        h.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..n {
            h[i * n + i] = 1.0;
        }
    };
    let mut h = vec![0.0; n * n];
    identity(&mut h);
    let mut fresh = true;
    let mut small_steps = 0;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < opts.max_iterations {
        iterations += 1;
        let free: Vec<bool> = (0..n)
            .map(|i| {
                let at_lo = x[i] <= bounds.lower[i] && g[i] > 0.0;
                let at_hi = x[i] >= bounds.upper[i] && g[i] < 0.0;
                !(at_lo || at_hi)
            })
            .collect();
        let pg_norm = (0..n)
            .filter(|&i| free[i])
            .map(|i| g[i].abs())
            .fold(0.0, f64::max);
        if pg_norm <= opts.g_tol {
            converged = true;
            break;
        }

        let mut d: Vec<f64> = (0..n)
            .map(|i| {
                if !free[i] {
                    return 0.0;
                }
                -(0..n).filter(|&j| free[j]).map(|j| h[i * n + j] * g[j]).sum::<f64>()
            })
            .collect();
        if dot(&g, &d) >= 0.0 {
            identity(&mut h);
            fresh = true;
            d = (0..n).map(|i| if free[i] { -g[i] } else { 0.0 }).collect();
        }
        // keep the first trial step within a unit-ish region of the scaled space
        let d_max = d.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let mut step_len = if fresh && d_max > 1.0 { 1.0 / d_max } else { 1.0 };

        let mut accepted = None;
        for _ in 0..60 {
            let mut xn: Vec<f64> = x.iter().zip(&d).map(|(xi, di)| xi + step_len * di).collect();
            bounds.project(&mut xn);
            let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
            if s.iter().all(|v| *v == 0.0) {
                break;
            }
            let (fn_, gn) = f(&xn);
            if fn_.is_finite() && fn_ <= fx + 1e-4 * dot(&g, &s) {
                accepted = Some((xn, s, fn_, gn));
                break;
            }
            step_len *= 0.5;
        }

        let Some((xn, s, fn_, gn)) = accepted else {
            if fresh {
                // no descent left at working precision
                converged = true;
                break;
            }
            identity(&mut h);
            fresh = true;
            continue;
        };

        let y: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        let rel = (fx - fn_).abs() / fx.abs().max(1.0);
        x = xn;
        fx = fn_;
        g = gn;

        let sy = dot(&s, &y);
        let s_norm = dot(&s, &s).sqrt();
        let y_norm = dot(&y, &y).sqrt();
        if sy > 1e-12 * s_norm * y_norm && sy > 0.0 {
            if fresh {
                // Shanno-Phua scaling of the initial inverse Hessian
                let scale = sy / dot(&y, &y);
                h.iter_mut().for_each(|v| *v *= scale);
            }
            bfgs_update(&mut h, &s, &y, n);
            fresh = false;
        }

        if rel < opts.f_tol {
            small_steps += 1;
            if small_steps >= 2 {
                converged = true;
                break;
            }
        } else {
            small_steps = 0;
        }
    }

    LocalOutcome {
        x,
        value: fx,
        iterations,
        converged,
    }
}

/// `H ← (I − ρ s yᵀ) H (I − ρ y sᵀ) + ρ s sᵀ`
fn bfgs_update(h: &mut [f64], s: &[f64], y: &[f64], n: usize) {
    let rho = 1.0 / dot(s, y);
    let hy: Vec<f64> = (0..n).map(|i| (0..n).map(|j| h[i * n + j] * y[j]).sum()).collect();
    let yhy = dot(y, &hy);
    for i in 0..n {
        for j in 0..n {
            h[i * n + j] += -rho * (hy[i] * s[j] + s[i] * hy[j])
                + (rho * rho * yhy + rho) * s[i] * s[j];
        }
    }
}

/// Central-difference gradient, one-sided where a bound blocks the stencil.
pub fn numerical_gradient<F>(f: &mut F, x: &[f64], bounds: &Bounds) -> Vec<f64>
where
    F: FnMut(&[f64]) -> f64,
{
    let mut grad = vec![0.0; x.len()];
    let mut probe = x.to_vec();
    for i in 0..x.len() {
        let h = 1e-6 * x[i].abs().max(1.0);
        let up = (x[i] + h).min(bounds.upper[i]);
        let down = (x[i] - h).max(bounds.lower[i]);
        if up == down {
            continue;
        }
        probe[i] = up;
        let fu = f(&probe);
        probe[i] = down;
        let fd = f(&probe);
        probe[i] = x[i];
        grad[i] = (fu - fd) / (up - down);
    }
    grad
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StartOrigin {
    Heuristic,
    Center,
    Random,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Start {
    pub origin: StartOrigin,
    pub x: Vec<f64>,
}

/// Per-start record shared by all fitting routines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StartDiagnostics {
    pub origin: StartOrigin,
    /// Starting parameters on their natural scale.
    pub start: Vec<f64>,
    /// Final parameters on their natural scale.
    pub end: Vec<f64>,
    /// Final objective value; absent when the start never reached a
    /// feasible point.
    pub objective: Option<f64>,
    pub converged: bool,
    pub iterations: usize,
}

/// Pairs starts with their outcomes, mapping points through `natural` and
/// objective values through `objective`.
pub fn diagnostics(
    starts: &[Start],
    outcomes: &[LocalOutcome],
    natural: impl Fn(&[f64]) -> Vec<f64>,
    objective: impl Fn(f64) -> f64,
) -> Vec<StartDiagnostics> {
    starts
        .iter()
        .zip(outcomes)
        .map(|(s, o)| StartDiagnostics {
            origin: s.origin,
            start: natural(&s.x),
            end: natural(&o.x),
            objective: o.value.is_finite().then(|| objective(o.value)),
            converged: o.converged,
            iterations: o.iterations,
        })
        .collect()
}

/// Runs the local solver from every start. Returns the outcomes in start
/// order and the index of the best one (lowest value, ties to the lowest
/// index), or `None` when no start reached a finite value.
pub fn multistart<F>(
    mut f: F,
    starts: &[Start],
    bounds: &Bounds,
    opts: &LocalOptions,
) -> (Vec<LocalOutcome>, Option<usize>)
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    let outcomes: Vec<LocalOutcome> = starts
        .iter()
        .map(|s| minimize(&mut f, &s.x, bounds, opts))
        .collect();
    let mut best: Option<usize> = None;
    for (i, o) in outcomes.iter().enumerate() {
        if !o.value.is_finite() {
            continue;
        }
        match best {
            Some(b) if outcomes[b].value <= o.value => {}
            _ => best = Some(i),
        }
    }
    (outcomes, best)
}
