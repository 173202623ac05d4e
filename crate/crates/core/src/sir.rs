//! Susceptible-Infected-Recovered dynamics: rates, exact stochastic
//! simulation, the ODE mean-field, the stochastic-SIR likelihood, and the
//! deterministic final size.

use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::cascade::{Cascade, EventKind, SirEvent, SirParams, SirRealization};
use crate::error::{Error, Result};
use crate::optimize::{self, Bounds, LocalOptions, Start, StartDiagnostics, StartOrigin};

/// Bivariate chain state `{s, i}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SirState {
    pub s: usize,
    pub i: usize,
}

impl SirState {
    pub fn new(s: usize, i: usize) -> Self {
        Self { s, i }
    }

    pub fn is_absorbing(&self) -> bool {
        self.i == 0
    }
}

/// New-infection and recovery rates `(β s i / N, γ i)`.
pub fn rates(p: &SirParams, st: SirState) -> (f64, f64) {
    let i = st.i as f64;
    (p.beta * st.s as f64 * i / p.n_pop, p.gamma * i)
}

pub fn basic_reproduction_number(p: &SirParams) -> f64 {
    p.beta / p.gamma
}

/// Gillespie simulation from `{N − i0, i0}` until nobody is infected.
pub fn simulate_stochastic(p: &SirParams, seed: u64) -> Result<SirRealization> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    simulate_stochastic_with(p, &mut rng)
}

pub fn simulate_stochastic_with<R: Rng + ?Sized>(
    p: &SirParams,
    rng: &mut R,
) -> Result<SirRealization> {
    p.validate()?;
    let n_pop = p.population();
    if p.i0 > n_pop {
        return Err(Error::params("i0 exceeds the population"));
    }
    let mut s = n_pop - p.i0;
    let mut infected: Vec<usize> = (0..p.i0).collect();
    let mut next_id = p.i0;
    let mut t = 0.0;
    let mut events = Vec::with_capacity(2 * n_pop);
    let mut recovered = Vec::with_capacity(n_pop);

    while !infected.is_empty() {
        let (li, lr) = rates(p, SirState::new(s, infected.len()));
        let total = li + lr;
        let wait: f64 = Exp::new(total)
            .map_err(|e| Error::params(e.to_string()))?
            .sample(rng);
        t += wait;
        if rng.random::<f64>() * total < li {
            s -= 1;
            infected.push(next_id);
            next_id += 1;
            events.push(SirEvent {
                time: t,
                kind: EventKind::Infection,
            });
        } else {
            let k = rng.random_range(0..infected.len());
            recovered.push(infected.swap_remove(k));
            events.push(SirEvent {
                time: t,
                kind: EventKind::Recovery,
            });
        }
    }
    SirRealization::new(events, n_pop as f64, p.i0)?.with_pairing(recovered)
}

/// Deterministic compartment sizes on a time grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SirTrajectory {
    pub times: Vec<f64>,
    pub s: Vec<f64>,
    pub i: Vec<f64>,
    pub r: Vec<f64>,
}

impl SirTrajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> std::io::Result<()> {
        let mut w = std::io::BufWriter::new(writer);
        writeln!(w, "time,S,I,R")?;
        for k in 0..self.len() {
            writeln!(w, "{},{},{},{}", self.times[k], self.s[k], self.i[k], self.r[k])?;
        }
        w.flush()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        self.write_csv(file).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })
    }
}

fn derivatives(beta: f64, gamma: f64, n_pop: f64, s: f64, i: f64) -> (f64, f64, f64) {
    let infection = beta * s * i / n_pop;
    let recovery = gamma * i;
    (-infection, infection - recovery, recovery)
}

fn rk4_step(beta: f64, gamma: f64, n_pop: f64, y: (f64, f64, f64), h: f64) -> (f64, f64, f64) {
    let f = |s: f64, i: f64| derivatives(beta, gamma, n_pop, s, i);
    let k1 = f(y.0, y.1);
    let k2 = f(y.0 + 0.5 * h * k1.0, y.1 + 0.5 * h * k1.1);
    let k3 = f(y.0 + 0.5 * h * k2.0, y.1 + 0.5 * h * k2.1);
    let k4 = f(y.0 + h * k3.0, y.1 + h * k3.1);
    (
        y.0 + h / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0),
        y.1 + h / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1),
        y.2 + h / 6.0 * (k1.2 + 2.0 * k2.2 + 2.0 * k3.2 + k4.2),
    )
}

/// Default integration step `0.01 / γ`.
pub fn default_step(p: &SirParams) -> f64 {
    0.01 / p.gamma
}

/// Fixed-step RK4 integration of the SIR equations from `(N − i0, i0, 0)`.
/// The grid runs from zero in steps of `dt`; the last step is shortened to
/// land on `t_max`.
pub fn simulate_deterministic(p: &SirParams, dt: f64, t_max: f64) -> Result<SirTrajectory> {
    p.validate()?;
    if !(dt > 0.0) || !(t_max >= 0.0) {
        return Err(Error::params(format!("need dt > 0 and t_max >= 0 (got {dt}, {t_max})")));
    }
    let steps = (t_max / dt).ceil() as usize;
    let mut traj = SirTrajectory {
        times: Vec::with_capacity(steps + 1),
        s: Vec::with_capacity(steps + 1),
        i: Vec::with_capacity(steps + 1),
        r: Vec::with_capacity(steps + 1),
    };
    let mut y = (p.s0(), p.i0 as f64, 0.0);
    let mut t = 0.0;
    let push = |traj: &mut SirTrajectory, t: f64, y: (f64, f64, f64)| {
        traj.times.push(t);
        traj.s.push(y.0);
        traj.i.push(y.1);
        traj.r.push(y.2);
    };
    push(&mut traj, t, y);
    for k in 1..=steps {
        let next = (k as f64 * dt).min(t_max);
        y = rk4_step(p.beta, p.gamma, p.n_pop, y, next - t);
        t = next;
        push(&mut traj, t, y);
    }
    Ok(traj)
}

/// Integrates to each requested time (sorted, starting at or after zero)
/// with sub-steps no larger than `max_step`. Returns `(S, C = I + R)`.
pub(crate) fn integrate_at(
    beta: f64,
    gamma: f64,
    n_pop: f64,
    i0: f64,
    times: &[f64],
    max_step: f64,
) -> (Vec<f64>, Vec<f64>) {
    let mut y = (n_pop - i0, i0, 0.0);
    let mut t = 0.0;
    let mut s_out = Vec::with_capacity(times.len());
    let mut c_out = Vec::with_capacity(times.len());
    for &target in times {
        let span = target - t;
        if span > 0.0 {
            let k = (span / max_step).ceil().max(1.0) as usize;
            let h = span / k as f64;
            for _ in 0..k {
                y = rk4_step(beta, gamma, n_pop, y, h);
            }
            t = target;
        }
        s_out.push(y.0);
        c_out.push(y.1 + y.2);
    }
    (s_out, c_out)
}

/// Log-likelihood of a stochastic SIR realization, conditioned on the
/// initial state at time zero. Returns `-inf` for impossible event sequences.
pub fn log_likelihood_stochastic(p: &SirParams, r: &SirRealization) -> f64 {
    log_likelihood_stochastic_with_gradient(p, r).0
}

/// Log-likelihood and its gradient in `(β, γ, N)`.
pub fn log_likelihood_stochastic_with_gradient(
    p: &SirParams,
    r: &SirRealization,
) -> (f64, [f64; 3]) {
    let n_pop = p.n_pop;
    let mut ever = r.i0() as f64;
    let mut i = r.i0() as f64;
    let mut prev = 0.0;
    let mut ll = 0.0;
    let mut grad = [0.0; 3];
    for e in r.events() {
        let dt = e.time - prev;
        prev = e.time;
        let s = n_pop - ever;
        if i <= 0.0 || s < 0.0 {
            return (f64::NEG_INFINITY, [0.0; 3]);
        }
        let frac = s / n_pop;
        let li = p.beta * frac * i;
        let lr = p.gamma * i;
        ll -= (li + lr) * dt;
        grad[0] -= frac * i * dt;
        grad[1] -= i * dt;
        grad[2] -= p.beta * i * ever / (n_pop * n_pop) * dt;
        match e.kind {
            EventKind::Infection => {
                if !(li > 0.0) {
                    return (f64::NEG_INFINITY, [0.0; 3]);
                }
                ll += li.ln();
                grad[0] += 1.0 / p.beta;
                grad[2] += ever / (n_pop * s);
                ever += 1.0;
                i += 1.0;
            }
            EventKind::Recovery => {
                ll += lr.ln();
                grad[1] += 1.0 / p.gamma;
                i -= 1.0;
            }
        }
    }
    (ll, grad)
}

/// Root of `x − N − (Nγ/β) ln(x / S(0))` by bisection; returns the
/// susceptibles left when the epidemic is over.
pub fn final_susceptible_deterministic(p: &SirParams) -> Result<f64> {
    p.validate()?;
    let n_pop = p.n_pop;
    let s0 = p.s0();
    if p.i0 == 0 {
        return Err(Error::params("final size needs at least one initial infected"));
    }
    if s0 <= 0.0 {
        return Ok(0.0);
    }
    if p.beta == 0.0 {
        return Ok(s0);
    }
    let c = n_pop * p.gamma / p.beta;
    let f = |x: f64| x - n_pop - c * (x / s0).ln();
    let mut lo = 1e-12 * n_pop;
    let mut hi = n_pop;
    if f(lo) <= 0.0 {
        // the root sits below the lower bracket; essentially everyone is infected
        return Ok(lo);
    }
    // bisect to machine precision
    loop {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(if f(lo).abs() <= f(hi).abs() { lo } else { hi })
}

/// Predicted final size `R(∞) = N − S(∞)` of the deterministic epidemic.
pub fn final_size_deterministic(p: &SirParams) -> Result<f64> {
    Ok(p.n_pop - final_susceptible_deterministic(p)?)
}

/// Population counts at discrete times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SirObservations {
    pub times: Vec<f64>,
    /// Susceptibles; omitted when only cumulative counts are known.
    pub s: Option<Vec<f64>>,
    /// Cumulative infections `C = I + R`.
    pub c: Vec<f64>,
}

impl SirObservations {
    /// Counts of a cascade's events on a regular grid of `width` up to the last
    /// event. When `n_pop` is given, susceptibles are reported as `N − C`.
    pub fn from_cascade(c: &Cascade, width: f64, n_pop: Option<f64>) -> Result<Self> {
        if !(width > 0.0) {
            return Err(Error::params("bin width must be positive"));
        }
        let end = c.last_time().unwrap_or(0.0);
        let bins = (end / width).ceil() as usize;
        let mut times = Vec::with_capacity(bins + 1);
        let mut counts = Vec::with_capacity(bins + 1);
        for k in 0..=bins {
            let t = k as f64 * width;
            times.push(t);
            counts.push(c.times().partition_point(|&x| x <= t) as f64);
        }
        let s = n_pop.map(|n| counts.iter().map(|cnt| n - cnt).collect());
        Ok(Self {
            times,
            s,
            c: counts,
        })
    }

    /// Exact compartment values sampled from a deterministic trajectory.
    pub fn from_trajectory(traj: &SirTrajectory, stride: usize) -> Self {
        let idx: Vec<usize> = (0..traj.len()).step_by(stride.max(1)).collect();
        Self {
            times: idx.iter().map(|&k| traj.times[k]).collect(),
            s: Some(idx.iter().map(|&k| traj.s[k]).collect()),
            c: idx.iter().map(|&k| traj.i[k] + traj.r[k]).collect(),
        }
    }
}

/// Least-squares fit of the deterministic SIR to binned observations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeterministicFit {
    pub params: SirParams,
    pub sse: f64,
    pub converged: bool,
    pub starts: Vec<StartDiagnostics>,
    pub seed: u64,
}

/// Search settings for [`fit_deterministic`].
#[derive(Debug, Clone, PartialEq)]
pub struct DeterministicFitConfig {
    pub beta_bounds: (f64, f64),
    pub gamma_bounds: (f64, f64),
    /// Upper bound on N as a multiple of the largest observed count.
    pub n_pop_factor: f64,
    pub starts: usize,
    pub seed: u64,
    pub local: LocalOptions,
    /// Largest RK4 sub-step used when simulating forward.
    pub max_step: f64,
}

impl Default for DeterministicFitConfig {
    fn default() -> Self {
        Self {
            beta_bounds: (1e-4, 1e2),
            gamma_bounds: (1e-4, 1e2),
            n_pop_factor: 10.0,
            starts: 10,
            seed: 0,
            local: LocalOptions {
                max_iterations: 500,
                f_tol: 1e-10,
                g_tol: 1e-9,
            },
            max_step: 0.05,
        }
    }
}

/// Sum of squared errors between observations and the forward ODE solution.
pub fn deterministic_sse(obs: &SirObservations, beta: f64, gamma: f64, n_pop: f64, i0: usize, max_step: f64) -> f64 {
    let (s_hat, c_hat) = integrate_at(beta, gamma, n_pop, i0 as f64, &obs.times, max_step);
    let mut sse: f64 = obs.c.iter().zip(&c_hat).map(|(o, e)| (o - e).powi(2)).sum();
    if let Some(s_obs) = &obs.s {
        sse += s_obs.iter().zip(&s_hat).map(|(o, e)| (o - e).powi(2)).sum::<f64>();
    }
    sse
}

/// Fits `(β, γ, N)` by minimizing the squared error of `S` and `C` against
/// the forward-simulated ODE, with the same multi-start strategy as the
/// likelihood fits. N is bounded below by the largest observed count.
pub fn fit_deterministic(
    obs: &SirObservations,
    i0: usize,
    cfg: &DeterministicFitConfig,
) -> Result<DeterministicFit> {
    if obs.times.is_empty() || obs.times.len() != obs.c.len() {
        return Err(Error::domain("observations need matching times and counts"));
    }
    if let Some(s) = &obs.s {
        if s.len() != obs.times.len() {
            return Err(Error::domain("susceptible series length mismatch"));
        }
    }
    if i0 == 0 {
        return Err(Error::params("deterministic fit needs i0 >= 1"));
    }
    let c_max = obs.c.iter().copied().fold(i0 as f64, f64::max);
    let n_lo = c_max.max(1.0);
    let n_hi = n_lo * cfg.n_pop_factor.max(1.0 + 1e-9);
    let bounds = Bounds::new(
        vec![cfg.beta_bounds.0.ln(), cfg.gamma_bounds.0.ln(), n_lo.ln()],
        vec![cfg.beta_bounds.1.ln(), cfg.gamma_bounds.1.ln(), n_hi.ln()],
    );
    let scale = obs.c.iter().map(|v| v * v).sum::<f64>().max(1.0);
    let objective = |z: &[f64]| {
        let v = deterministic_sse(obs, z[0].exp(), z[1].exp(), z[2].exp(), i0, cfg.max_step) / scale;
        if v.is_finite() {
            v
        } else {
            f64::INFINITY
        }
    };
    let mut with_grad = |z: &[f64]| {
        let v = objective(z);
        if !v.is_finite() {
            return (v, vec![0.0; 3]);
        }
        let mut f = objective;
        (v, optimize::numerical_gradient(&mut f, z, &bounds))
    };

    let mut starts = Vec::new();
    // Heuristic start: growth rate from the early curve with γ guessed from
    // the epidemic duration, N from the plateau.
    let duration = obs.times.last().copied().unwrap_or(1.0).max(1e-9);
    let gamma0 = (10.0 / duration).clamp(cfg.gamma_bounds.0, cfg.gamma_bounds.1);
    let beta0 = (3.0 * gamma0).clamp(cfg.beta_bounds.0, cfg.beta_bounds.1);
    let mut z0 = vec![beta0.ln(), gamma0.ln(), (c_max * 1.05).max(n_lo).ln()];
    bounds.project(&mut z0);
    starts.push(Start {
        origin: StartOrigin::Heuristic,
        x: z0,
    });
    if cfg.starts > 1 {
        starts.push(Start {
            origin: StartOrigin::Center,
            x: bounds.center(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    while starts.len() < cfg.starts.max(1) {
        starts.push(Start {
            origin: StartOrigin::Random,
            x: bounds.sample(&mut rng),
        });
    }

    let (outcomes, best) = optimize::multistart(&mut with_grad, &starts, &bounds, &cfg.local);
    let natural = |z: &[f64]| z.iter().map(|v| v.exp()).collect::<Vec<_>>();
    let diagnostics = optimize::diagnostics(&starts, &outcomes, natural, |v| v * scale);
    let Some(best) = best else {
        return Ok(DeterministicFit {
            params: SirParams::new(f64::NAN, f64::NAN, f64::NAN, i0),
            sse: f64::INFINITY,
            converged: false,
            starts: diagnostics,
            seed: cfg.seed,
        });
    };
    let z = &outcomes[best].x;
    let params = SirParams::new(z[0].exp(), z[1].exp(), z[2].exp(), i0);
    Ok(DeterministicFit {
        sse: deterministic_sse(obs, params.beta, params.gamma, params.n_pop, i0, cfg.max_step),
        params,
        converged: outcomes[best].converged,
        starts: diagnostics,
        seed: cfg.seed,
    })
}
