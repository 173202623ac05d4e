//! HawkesN: a self-exciting point process in a finite population.
//!
//! ```text
//! λ(t) = (1 − N_t / N) · [μ + Σ_{t_j < t} κ · m_j^η · θ · e^{−θ (t − t_j)}]
//! ```
//!
//! `N_t` counts events up to and including `t`. With `N = ∞` this is the
//! plain Hawkes process; with no `η` every mark weight is one.
//!
//! Likelihood terms are computed in a single pass using the exponential
//! kernel's recursive structure, so evaluation is linear in the number of
//! events.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};

use crate::cascade::{Cascade, HawkesNParams};
use crate::error::{Error, Result};

/// Intensity below which a simulated cascade is considered extinct.
pub const EXTINCTION_RATE: f64 = 1e-12;

/// Exponential kernel `κ·m^η·θ·e^{−θτ}`; the mark is ignored in unmarked mode.
pub fn kernel(p: &HawkesNParams, tau: f64, mark: Option<f64>) -> Result<f64> {
    if !(tau >= 0.0) {
        return Err(Error::domain(format!("kernel lag {tau} must be >= 0")));
    }
    let w = match (p.eta, mark) {
        (Some(eta), Some(m)) => m.powf(eta),
        _ => 1.0,
    };
    Ok(p.kappa * w * p.theta * (-p.theta * tau).exp())
}

/// Population factor `1 − count / N`, exactly one for infinite `N`.
#[inline]
fn population_factor(count: usize, n_pop: f64) -> f64 {
    if n_pop.is_infinite() {
        1.0
    } else {
        1.0 - count as f64 / n_pop
    }
}

fn mark_weights(p: &HawkesNParams, c: &Cascade) -> Vec<f64> {
    match (p.eta, c.marks()) {
        (Some(eta), Some(marks)) => marks.iter().map(|m| m.powf(eta)).collect(),
        _ => vec![1.0; c.len()],
    }
}

fn log_marks(p: &HawkesNParams, c: &Cascade) -> Vec<f64> {
    match (p.eta, c.marks()) {
        (Some(_), Some(marks)) => marks.iter().map(|m| m.ln()).collect(),
        _ => vec![0.0; c.len()],
    }
}

/// Conditional intensity at `t`, using right-continuous counting.
pub fn intensity(p: &HawkesNParams, c: &Cascade, t: f64) -> Result<f64> {
    if !(t >= 0.0) {
        return Err(Error::domain(format!("time {t} must be >= 0")));
    }
    let times = c.times();
    let count = times.partition_point(|&tj| tj <= t);
    if count as f64 > p.n_pop {
        return Err(Error::domain(format!(
            "{count} events by t = {t} exceed population {}",
            p.n_pop
        )));
    }
    let weights = mark_weights(p, c);
    let excitation: f64 = times
        .iter()
        .zip(&weights)
        .take_while(|(tj, _)| **tj < t)
        .map(|(tj, w)| w * (-p.theta * (t - tj)).exp())
        .sum();
    Ok(population_factor(count, p.n_pop) * (p.mu + p.kappa * p.theta * excitation))
}

/// Piecewise view of the intensity over a fixed history.
#[derive(Debug, Clone)]
pub struct IntensityTrace<'a> {
    params: HawkesNParams,
    cascade: &'a Cascade,
}

impl<'a> IntensityTrace<'a> {
    pub fn new(params: HawkesNParams, cascade: &'a Cascade) -> Self {
        Self { params, cascade }
    }

    /// Event times where the intensity jumps.
    pub fn breakpoints(&self) -> &[f64] {
        self.cascade.times()
    }

    pub fn at(&self, t: f64) -> Result<f64> {
        intensity(&self.params, self.cascade, t)
    }
}

/// Partial derivatives of a log-likelihood with respect to the HawkesN
/// parameters. `n_pop` is zero for infinite populations; `eta` is zero in
/// unmarked mode.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LikelihoodGradient {
    pub kappa: f64,
    pub theta: f64,
    pub n_pop: f64,
    pub eta: f64,
}

/// Accumulated log-intensity and compensator terms over part of a cascade.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct Terms {
    pub log_sum: f64,
    pub compensator: f64,
    pub d_log: LikelihoodGradient,
    pub d_comp: LikelihoodGradient,
    /// Index of the first event with zero (or negative) intensity.
    pub impossible_at: Option<usize>,
    /// Number of events contributing a log-intensity term.
    pub log_terms: usize,
    /// Σ over log-term events of their zero-based index.
    pub index_sum: f64,
    /// `κ Σ_l l · A_l · (e^{..} − e^{..})`, the compensator weighted by event
    /// count; its ratio to `N²` is the compensator's derivative in `N`.
    pub count_moment: f64,
}

/// One pass over the cascade.
///
/// Log-intensity terms are taken for events with index `>= log_from` that are
/// not seeds (ties with the first event). The compensator integrates over
/// `[comp_from, t_end]`.
pub(crate) fn terms(
    p: &HawkesNParams,
    c: &Cascade,
    log_from: usize,
    comp_from: f64,
    t_end: f64,
) -> Terms {
    let times = c.times();
    let n = times.len();
    let weights = mark_weights(p, c);
    let lnm = log_marks(p, c);
    let seeds = c.seed_count();
    let theta = p.theta;
    let kappa = p.kappa;
    let finite = p.n_pop.is_finite();
    let big_n = p.n_pop;

    let mut out = Terms::default();

    // Recursions at the current event time t_l (events with index <= l):
    //   a = Σ w_k e^{−θ(t_l − t_k)}
    //   b = Σ w_k (t_l − t_k) e^{−θ(t_l − t_k)}
    //   g = Σ w_k ln m_k e^{−θ(t_l − t_k)}
    // and the same sums restricted to events strictly before t_l.
    let (mut a, mut b, mut g) = (0.0f64, 0.0f64, 0.0f64);
    let (mut ea, mut eb, mut eg) = (0.0f64, 0.0f64, 0.0f64);

    for l in 0..n {
        let tl = times[l];
        if l > 0 {
            let dt = tl - times[l - 1];
            if dt > 0.0 {
                let decay = (-theta * dt).exp();
                let nb = decay * (b + dt * a);
                a *= decay;
                g *= decay;
                b = nb;
                ea = a;
                eb = b;
                eg = g;
            }
        }

        // log-intensity just before t_l
        if l >= log_from && l >= seeds {
            let pf = population_factor(l, big_n);
            if !(pf > 0.0) || !(ea > 0.0) {
                out.impossible_at.get_or_insert(l);
            } else {
                out.log_sum += pf.ln() + kappa.ln() + theta.ln() + ea.ln();
                out.d_log.kappa += 1.0 / kappa;
                out.d_log.theta += 1.0 / theta - eb / ea;
                if finite {
                    out.d_log.n_pop += l as f64 / (big_n * (big_n - l as f64));
                }
                out.d_log.eta += eg / ea;
            }
            out.log_terms += 1;
            out.index_sum += l as f64;
        }

        a += weights[l];
        g += weights[l] * lnm[l];

        // integral over (t_l, next] where next is t_{l+1} or t_end
        let next = if l + 1 < n { times[l + 1].min(t_end) } else { t_end };
        let start = tl.max(comp_from);
        if next > start {
            let count = l + 1;
            let pf = population_factor(count, big_n);
            let e1 = (-theta * (start - tl)).exp();
            let e2 = (-theta * (next - tl)).exp();
            let diff = e1 - e2;
            let piece = kappa * pf * a * diff;
            out.compensator += piece;
            out.d_comp.kappa += pf * a * diff;
            out.d_comp.theta +=
                kappa * pf * (-b * diff + a * (-(start - tl) * e1 + (next - tl) * e2));
            let moment = kappa * count as f64 * a * diff;
            out.count_moment += moment;
            if finite {
                out.d_comp.n_pop += moment / (big_n * big_n);
            }
            out.d_comp.eta += kappa * pf * g * diff;
        }
    }
    out
}

fn require_cascade_mode(p: &HawkesNParams) -> Result<()> {
    p.validate()?;
    if p.mu != 0.0 {
        return Err(Error::domain(
            "likelihood terms require a zero background rate (cascade mode)",
        ));
    }
    Ok(())
}

/// Integrated intensity `∫_0^{t_end} λ(τ) dτ` in closed form.
pub fn compensator(p: &HawkesNParams, c: &Cascade, t_end: f64) -> Result<f64> {
    require_cascade_mode(p)?;
    if let Some(last) = c.last_time() {
        if t_end < last {
            return Err(Error::domain(format!(
                "t_end = {t_end} precedes the last event at {last}"
            )));
        }
    }
    Ok(terms(p, c, usize::MAX, 0.0, t_end).compensator)
}

/// Point-process log-likelihood of a cascade, conditioned on its seed events.
///
/// Returns `-inf` when some event has zero intensity under `p`.
pub fn log_likelihood(p: &HawkesNParams, c: &Cascade) -> Result<f64> {
    Ok(log_likelihood_with_gradient(p, c)?.0)
}

/// Log-likelihood and its gradient with respect to `(κ, θ, N, η)`.
pub fn log_likelihood_with_gradient(
    p: &HawkesNParams,
    c: &Cascade,
) -> Result<(f64, LikelihoodGradient)> {
    require_cascade_mode(p)?;
    let t_end = c
        .last_time()
        .ok_or_else(|| Error::domain("cannot evaluate the likelihood of an empty cascade"))?;
    if c.len() as f64 > p.n_pop {
        return Ok((f64::NEG_INFINITY, LikelihoodGradient::default()));
    }
    let t = terms(p, c, 0, 0.0, t_end);
    if let Some(j) = t.impossible_at {
        log::debug!("event {} at t = {} has zero intensity", j + 1, c.times()[j]);
        return Ok((f64::NEG_INFINITY, LikelihoodGradient::default()));
    }
    let grad = LikelihoodGradient {
        kappa: t.d_log.kappa - t.d_comp.kappa,
        theta: t.d_log.theta - t.d_comp.theta,
        n_pop: t.d_log.n_pop - t.d_comp.n_pop,
        eta: t.d_log.eta - t.d_comp.eta,
    };
    Ok((t.log_sum - t.compensator, grad))
}

/// Expected number of events directly triggered by one event early on.
pub fn branching_factor(p: &HawkesNParams) -> Result<f64> {
    match p.eta {
        None => Ok(p.kappa),
        Some(eta) => {
            let denom = p.alpha - eta - 1.0;
            if !(denom > 0.0) {
                return Err(Error::params(format!(
                    "eta = {eta} must be below alpha - 1 = {}",
                    p.alpha - 1.0
                )));
            }
            Ok(p.kappa * (p.alpha - 1.0) / denom)
        }
    }
}

/// Knobs for [`simulate_with`].
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationOptions {
    /// Stop at this time if the cascade is still alive.
    pub t_max: Option<f64>,
    /// Number of initial events injected at time zero.
    pub seeds: usize,
    /// Mark of the seed events; drawn from the power law when absent.
    pub initial_mark: Option<f64>,
    /// Hard cap on the number of events (required for infinite populations
    /// without a horizon).
    pub max_events: Option<usize>,
}

impl Default for SimulationOptions {
    fn default() -> Self {
        Self {
            t_max: None,
            seeds: 1,
            initial_mark: None,
            max_events: None,
        }
    }
}

/// Draws a mark from `p(m) = (α − 1) m^{−α}` on `[1, ∞)`.
pub fn sample_mark<R: Rng + ?Sized>(alpha: f64, rng: &mut R) -> f64 {
    // 1 - u lies in (0, 1]
    let u: f64 = 1.0 - rng.random::<f64>();
    u.powf(-1.0 / (alpha - 1.0))
}

/// Simulates a cascade from one seed event at time zero.
pub fn simulate(p: &HawkesNParams, seed: u64, t_max: Option<f64>) -> Result<Cascade> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    simulate_with(
        p,
        &SimulationOptions {
            t_max,
            ..SimulationOptions::default()
        },
        &mut rng,
    )
}

/// Ogata thinning. Between events the intensity decays monotonically, so its
/// value right after the latest accepted or rejected point bounds it until
/// the next event.
pub fn simulate_with<R: Rng + ?Sized>(
    p: &HawkesNParams,
    opts: &SimulationOptions,
    rng: &mut R,
) -> Result<Cascade> {
    p.validate()?;
    if opts.seeds == 0 && p.mu == 0.0 {
        return Err(Error::params(
            "a cascade without background rate needs at least one seed event",
        ));
    }
    if p.n_pop.is_infinite() && opts.t_max.is_none() && opts.max_events.is_none() {
        return Err(Error::params(
            "an infinite population needs a time horizon or an event cap",
        ));
    }
    if opts.seeds as f64 > p.n_pop {
        return Err(Error::params(format!(
            "{} seeds exceed population {}",
            opts.seeds, p.n_pop
        )));
    }

    let marked = p.eta.is_some();
    let eta = p.eta.unwrap_or(0.0);
    let mut times = Vec::new();
    let mut marks = Vec::new();
    let mut excitation = 0.0;
    for _ in 0..opts.seeds {
        let m = if marked {
            opts.initial_mark
                .unwrap_or_else(|| sample_mark(p.alpha, rng))
        } else {
            1.0
        };
        times.push(0.0);
        marks.push(m);
        excitation += m.powf(eta);
    }

    let cap = opts.max_events.unwrap_or(usize::MAX);
    let mut t = 0.0;
    loop {
        let count = times.len();
        // N_t may never exceed N, even for fractional N
        if count as f64 + 1.0 > p.n_pop || count >= cap {
            break;
        }
        let pf = population_factor(count, p.n_pop);
        let bound = pf * (p.mu + p.kappa * p.theta * excitation);
        if bound < EXTINCTION_RATE {
            break;
        }
        let wait: f64 = Exp::new(bound)
            .map_err(|e| Error::params(e.to_string()))?
            .sample(rng);
        let candidate = t + wait;
        if let Some(t_max) = opts.t_max {
            if candidate > t_max {
                break;
            }
        }
        excitation *= (-p.theta * (candidate - t)).exp();
        t = candidate;
        let rate = pf * (p.mu + p.kappa * p.theta * excitation);
        if rng.random::<f64>() * bound <= rate {
            let m = if marked { sample_mark(p.alpha, rng) } else { 1.0 };
            times.push(t);
            marks.push(m);
            excitation += m.powf(eta);
        }
    }
    Cascade::from_relative(times, marked.then_some(marks))
}
