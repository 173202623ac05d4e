//! Maximum-likelihood fitting, population-size identifiability, and
//! holdout evaluation.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cascade::{Cascade, HawkesNParams, SirParams, SirRealization, DEFAULT_MARK_ALPHA};
use crate::equivalence::{hawkesn_to_sir, sir_to_hawkesn};
use crate::error::{Error, Result};
use crate::process::{self, terms};
use crate::optimize::{self, Bounds, LocalOptions, Start, StartDiagnostics, StartOrigin};
use crate::sir::{self, DeterministicFit};

#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    pub kappa_bounds: (f64, f64),
    pub theta_bounds: (f64, f64),
    pub beta_bounds: (f64, f64),
    pub gamma_bounds: (f64, f64),
    /// Upper bound on N; defaults to `max(1e4, 100 n)`.
    pub n_pop_max: Option<f64>,
    /// Total number of starts: one heuristic, one bound-centred, the rest
    /// log-uniform at random.
    pub starts: usize,
    /// Relative log-likelihood change that ends a local search.
    pub tolerance: f64,
    pub max_iterations: usize,
    pub seed: u64,
    pub alpha: f64,
    pub use_marks: bool,
    pub root_scan_intervals: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            kappa_bounds: (1e-3, 1e3),
            theta_bounds: (1e-6, 1e4),
            beta_bounds: (1e-6, 1e4),
            gamma_bounds: (1e-6, 1e4),
            n_pop_max: None,
            starts: 10,
            tolerance: 1e-8,
            max_iterations: 500,
            seed: 0,
            alpha: DEFAULT_MARK_ALPHA,
            use_marks: false,
            root_scan_intervals: 1000,
        }
    }
}

impl FitConfig {
    fn local(&self) -> LocalOptions {
        LocalOptions {
            max_iterations: self.max_iterations,
            f_tol: self.tolerance,
            g_tol: 1e-9,
        }
    }

    pub fn n_pop_upper(&self, n: usize) -> f64 {
        self.n_pop_max.unwrap_or_else(|| (100.0 * n as f64).max(1e4))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Hawkesn,
    SirStochastic,
    SirDeterministic,
}

/// Whether the data can pin down a finite population size.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Identifiability {
    /// The statistic is non-positive, so a finite maximizer may exist.
    ValidN,
    /// The statistic is positive: the likelihood increases in N everywhere.
    NoValidN,
    NotApplicable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub model: ModelKind,
    pub hawkesn: Option<HawkesNParams>,
    pub sir: Option<SirParams>,
    /// Fitted population rounded to an integer, when finite.
    pub n_pop_rounded: Option<u64>,
    pub n_fixed: bool,
    /// Log-likelihood at the fitted parameters; absent when no start
    /// reached a feasible point or the model is fitted by least squares.
    pub log_likelihood: Option<f64>,
    /// Sum of squared errors for least-squares fits.
    pub sse: Option<f64>,
    pub converged: bool,
    pub starts: Vec<StartDiagnostics>,
    pub seed: u64,
    pub n_events: usize,
    pub identifiability: Identifiability,
    pub statistic: Option<f64>,
    /// Best root of the likelihood derivative in N found by scanning.
    pub n_root: Option<f64>,
}

impl FitReport {
    pub fn from_deterministic(fit: &DeterministicFit, n_events: usize) -> Self {
        let finite = fit.params.n_pop.is_finite();
        Self {
            model: ModelKind::SirDeterministic,
            hawkesn: finite.then(|| sir_to_hawkesn(&fit.params)),
            sir: finite.then_some(fit.params),
            n_pop_rounded: finite.then(|| fit.params.n_pop.round() as u64),
            n_fixed: false,
            log_likelihood: None,
            sse: fit.sse.is_finite().then_some(fit.sse),
            converged: fit.converged,
            starts: fit.starts.clone(),
            seed: fit.seed,
            n_events,
            identifiability: Identifiability::NotApplicable,
            statistic: None,
            n_root: None,
        }
    }
}

/// Coordinates of the search space, each with its own transform.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Coord {
    Kappa,
    Theta,
    NPop,
    Eta,
}

struct HawkesSpace {
    coords: Vec<Coord>,
    template: HawkesNParams,
}

impl HawkesSpace {
    fn params(&self, z: &[f64]) -> HawkesNParams {
        let mut p = self.template;
        for (c, v) in self.coords.iter().zip(z) {
            match c {
                Coord::Kappa => p.kappa = v.exp(),
                Coord::Theta => p.theta = v.exp(),
                Coord::NPop => p.n_pop = v.exp(),
                Coord::Eta => p.eta = Some(*v),
            }
        }
        p
    }

    fn encode(&self, p: &HawkesNParams) -> Vec<f64> {
        self.coords
            .iter()
            .map(|c| match c {
                Coord::Kappa => p.kappa.ln(),
                Coord::Theta => p.theta.ln(),
                Coord::NPop => p.n_pop.ln(),
                Coord::Eta => p.eta.unwrap_or(0.0),
            })
            .collect()
    }

    fn natural(&self, z: &[f64]) -> Vec<f64> {
        self.coords
            .iter()
            .zip(z)
            .map(|(c, v)| if *c == Coord::Eta { *v } else { v.exp() })
            .collect()
    }
}

fn log_bounds(b: (f64, f64)) -> (f64, f64) {
    (b.0.ln(), b.1.ln())
}

fn build_starts(
    heuristic: Vec<f64>,
    bounds: &Bounds,
    count: usize,
    seed: u64,
) -> Vec<Start> {
    let mut x0 = heuristic;
    bounds.project(&mut x0);
    let mut starts = vec![Start {
        origin: StartOrigin::Heuristic,
        x: x0,
    }];
    if count > 1 {
        starts.push(Start {
            origin: StartOrigin::Center,
            x: bounds.center(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    while starts.len() < count.max(1) {
        starts.push(Start {
            origin: StartOrigin::Random,
            x: bounds.sample(&mut rng),
        });
    }
    starts
}

/// Maximizes the HawkesN log-likelihood of `c` over `(κ, θ, N)`, plus `η` in
/// marked mode. With `fixed_n` the population is held at the given value;
/// `f64::INFINITY` fits the plain Hawkes process.
pub fn fit_hawkesn(c: &Cascade, cfg: &FitConfig, fixed_n: Option<f64>) -> Result<FitReport> {
    let n = c.len();
    if n < 2 {
        return Err(Error::domain("fitting needs at least two events"));
    }
    if c.seed_count() >= n {
        return Err(Error::domain("all event times are identical"));
    }
    if cfg.use_marks && c.marks().is_none() {
        return Err(Error::domain("marked fitting requested but the cascade has no marks"));
    }
    if let Some(v) = fixed_n {
        if !(v >= n as f64) {
            return Err(Error::params(format!("fixed N = {v} is below the {n} observed events")));
        }
    }

    let n_max = cfg.n_pop_upper(n).max(n as f64);
    let mut coords = vec![Coord::Kappa, Coord::Theta];
    let mut lower = vec![log_bounds(cfg.kappa_bounds).0, log_bounds(cfg.theta_bounds).0];
    let mut upper = vec![log_bounds(cfg.kappa_bounds).1, log_bounds(cfg.theta_bounds).1];
    if fixed_n.is_none() {
        coords.push(Coord::NPop);
        lower.push((n as f64).ln());
        upper.push(n_max.ln());
    }
    let mut template = HawkesNParams::new(1.0, 1.0, fixed_n.unwrap_or(n as f64));
    if cfg.use_marks {
        coords.push(Coord::Eta);
        lower.push(0.0);
        upper.push((cfg.alpha - 1.0) * (1.0 - 1e-3));
        template = template.with_marks(0.0, cfg.alpha);
    }
    let space = HawkesSpace { coords, template };
    let bounds = Bounds::new(lower, upper);
    let scale = (n - c.seed_count()) as f64;

    let mut objective = |z: &[f64]| {
        let p = space.params(z);
        match process::log_likelihood_with_gradient(&p, c) {
            Ok((ll, g)) if ll.is_finite() => {
                let grad = space
                    .coords
                    .iter()
                    .map(|co| match co {
                        Coord::Kappa => -g.kappa * p.kappa / scale,
                        Coord::Theta => -g.theta * p.theta / scale,
                        Coord::NPop => -g.n_pop * p.n_pop / scale,
                        Coord::Eta => -g.eta / scale,
                    })
                    .collect();
                (-ll / scale, grad)
            }
            _ => (f64::INFINITY, vec![0.0; z.len()]),
        }
    };

    // Heuristic: the mean event age approximates the kernel's mean delay and
    // the share of non-seed events stands in for the branching factor.
    let seeds = c.seed_count();
    let children = &c.times()[seeds..];
    let mean_age = children.iter().sum::<f64>() / children.len() as f64;
    let guess = HawkesNParams {
        kappa: 2.0 * children.len() as f64 / n as f64,
        theta: 1.0 / mean_age.max(1e-12),
        n_pop: fixed_n.unwrap_or(1.5 * n as f64),
        eta: cfg.use_marks.then_some(0.5 * (cfg.alpha - 1.0)),
        ..space.template
    };
    let starts = build_starts(space.encode(&guess), &bounds, cfg.starts, cfg.seed);
    let (outcomes, best) = optimize::multistart(&mut objective, &starts, &bounds, &cfg.local());
    let diagnostics =
        optimize::diagnostics(&starts, &outcomes, |z| space.natural(z), |v| -v * scale);

    let Some(best) = best else {
        return Ok(FitReport {
            model: ModelKind::Hawkesn,
            hawkesn: None,
            sir: None,
            n_pop_rounded: None,
            n_fixed: fixed_n.is_some(),
            log_likelihood: None,
            sse: None,
            converged: false,
            starts: diagnostics,
            seed: cfg.seed,
            n_events: n,
            identifiability: Identifiability::NotApplicable,
            statistic: None,
            n_root: None,
        });
    };

    let fitted = space.params(&outcomes[best].x);
    let ll = process::log_likelihood(&fitted, c)?;
    let statistic = n_statistic_for(&fitted, c);
    let n_root = find_n_root_with(&fitted, c, n_max, cfg.root_scan_intervals);
    Ok(FitReport {
        model: ModelKind::Hawkesn,
        hawkesn: Some(fitted),
        sir: hawkesn_to_sir(&fitted, seeds)
            .ok()
            .filter(|s| s.n_pop.is_finite()),
        n_pop_rounded: fitted.n_pop.is_finite().then(|| fitted.n_pop.round() as u64),
        n_fixed: fixed_n.is_some(),
        log_likelihood: ll.is_finite().then_some(ll),
        sse: None,
        converged: outcomes[best].converged,
        starts: diagnostics,
        seed: cfg.seed,
        n_events: n,
        identifiability: if statistic > 0.0 {
            Identifiability::NoValidN
        } else {
            Identifiability::ValidN
        },
        statistic: Some(statistic),
        n_root,
    })
}

/// SIR parameters held fixed during [`fit_sir_stochastic`].
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SirFixed {
    pub beta: Option<f64>,
    pub gamma: Option<f64>,
    pub n_pop: Option<f64>,
}

/// Maximizes the stochastic-SIR log-likelihood over whichever of `(β, γ, N)`
/// are not fixed. N is bounded below by everyone ever infected.
pub fn fit_sir_stochastic(
    r: &SirRealization,
    cfg: &FitConfig,
    fixed: SirFixed,
) -> Result<FitReport> {
    if r.is_empty() {
        return Err(Error::domain("fitting needs at least one event"));
    }
    let i0 = r.i0();
    let ever = i0 + r.infection_count();
    let n_lo = (ever as f64).max(1.0);
    if let Some(v) = fixed.n_pop {
        if !(v >= n_lo) {
            return Err(Error::params(format!("fixed N = {v} is below {ever} infected")));
        }
    }
    let n_max = cfg.n_pop_upper(ever).max(n_lo);

    // method-of-moments guesses from the integrated compartments
    let n_guess = fixed.n_pop.unwrap_or(1.5 * n_lo);
    let (mut int_i, mut int_si) = (0.0, 0.0);
    let (mut i, mut c, mut prev) = (i0 as f64, i0 as f64, 0.0);
    for e in r.events() {
        let dt = e.time - prev;
        int_i += i * dt;
        int_si += (n_guess - c) * i / n_guess * dt;
        prev = e.time;
        match e.kind {
            crate::cascade::EventKind::Infection => {
                i += 1.0;
                c += 1.0;
            }
            crate::cascade::EventKind::Recovery => i -= 1.0,
        }
    }
    let recoveries = r.recovery_times().len() as f64;
    let infections = r.infection_count() as f64;
    let beta_guess = if int_si > 0.0 { (infections / int_si).max(1e-3) } else { 1.0 };
    let gamma_guess = if int_i > 0.0 { (recoveries / int_i).max(1e-3) } else { 1.0 };

    let free: Vec<usize> = [fixed.beta.is_none(), fixed.gamma.is_none(), fixed.n_pop.is_none()]
        .iter()
        .enumerate()
        .filter_map(|(k, f)| f.then_some(k))
        .collect();
    let all_lower = [
        cfg.beta_bounds.0.ln(),
        cfg.gamma_bounds.0.ln(),
        n_lo.ln(),
    ];
    let all_upper = [cfg.beta_bounds.1.ln(), cfg.gamma_bounds.1.ln(), n_max.ln()];
    let base = [
        fixed.beta.unwrap_or(beta_guess),
        fixed.gamma.unwrap_or(gamma_guess),
        n_guess,
    ];
    let params_of = |z: &[f64]| {
        let mut v = base;
        for (k, idx) in free.iter().enumerate() {
            v[*idx] = z[k].exp();
        }
        SirParams::new(v[0], v[1], v[2], i0)
    };
    let natural = |z: &[f64]| {
        let p = params_of(z);
        free.iter().map(|&k| [p.beta, p.gamma, p.n_pop][k]).collect::<Vec<_>>()
    };
    let scale = r.len() as f64;

    let finish = |p: SirParams, converged: bool, starts: Vec<StartDiagnostics>| {
        let ll = sir::log_likelihood_stochastic(&p, r);
        FitReport {
            model: ModelKind::SirStochastic,
            hawkesn: Some(sir_to_hawkesn(&p)),
            sir: Some(p),
            n_pop_rounded: Some(p.n_pop.round() as u64),
            n_fixed: fixed.n_pop.is_some(),
            log_likelihood: ll.is_finite().then_some(ll),
            sse: None,
            converged,
            starts,
            seed: cfg.seed,
            n_events: r.len(),
            identifiability: Identifiability::NotApplicable,
            statistic: None,
            n_root: None,
        }
    };
    if free.is_empty() {
        return Ok(finish(params_of(&[]), true, Vec::new()));
    }

    let bounds = Bounds::new(
        free.iter().map(|&k| all_lower[k]).collect(),
        free.iter().map(|&k| all_upper[k]).collect(),
    );
    let mut objective = |z: &[f64]| {
        let p = params_of(z);
        let (ll, g) = sir::log_likelihood_stochastic_with_gradient(&p, r);
        if !ll.is_finite() {
            return (f64::INFINITY, vec![0.0; z.len()]);
        }
        let natural = [p.beta, p.gamma, p.n_pop];
        let grad = free.iter().map(|&k| -g[k] * natural[k] / scale).collect();
        (-ll / scale, grad)
    };
    let heuristic: Vec<f64> = free.iter().map(|&k| base[k].ln()).collect();
    let starts = build_starts(heuristic, &bounds, cfg.starts, cfg.seed);
    let (outcomes, best) = optimize::multistart(&mut objective, &starts, &bounds, &cfg.local());
    let diagnostics = optimize::diagnostics(&starts, &outcomes, natural, |v| -v * scale);
    match best {
        Some(b) => Ok(finish(params_of(&outcomes[b].x), outcomes[b].converged, diagnostics)),
        None => {
            let mut report = finish(params_of(&starts[0].x), false, diagnostics);
            report.log_likelihood = None;
            Ok(report)
        }
    }
}

/// `∂ℒ/∂N` of the HawkesN log-likelihood.
pub fn dll_dn(hp: &HawkesNParams, c: &Cascade) -> Result<f64> {
    hp.validate()?;
    if hp.mu != 0.0 {
        return Err(Error::domain("the derivative in N is defined for cascade mode (mu = 0)"));
    }
    if (c.len() as f64) > hp.n_pop {
        return Err(Error::domain(format!(
            "N = {} is below the {} observed events",
            hp.n_pop,
            c.len()
        )));
    }
    let Some(t_end) = c.last_time() else {
        return Ok(0.0);
    };
    let t = terms(hp, c, 0, 0.0, t_end);
    Ok(t.d_log.n_pop - t.d_comp.n_pop)
}

/// Identifiability statistic for an unmarked cascade. When positive, the
/// log-likelihood increases with N for every `N ≥ n`.
pub fn n_statistic(kappa: f64, theta: f64, c: &Cascade) -> f64 {
    n_statistic_for(&HawkesNParams::infinite(kappa, theta), c)
}

/// Identifiability statistic using the kernel (and marks) of `hp`; the
/// population size is ignored.
pub fn n_statistic_for(hp: &HawkesNParams, c: &Cascade) -> f64 {
    let Some(t_end) = c.last_time() else {
        return 0.0;
    };
    let t = terms(hp, c, 0, 0.0, t_end);
    t.index_sum - t.count_moment
}

/// Brackets sign changes of `f` from positive to negative on a uniform grid
/// and refines each by bisection to relative tolerance `1e-10`.
pub fn scan_maxima<F: FnMut(f64) -> f64>(mut f: F, lo: f64, hi: f64, intervals: usize) -> Vec<f64> {
    let intervals = intervals.max(1);
    let width = (hi - lo) / intervals as f64;
    let mut roots = Vec::new();
    let mut a = lo;
    let mut fa = f(a);
    for k in 1..=intervals {
        let b = if k == intervals { hi } else { lo + k as f64 * width };
        let fb = f(b);
        if fa > 0.0 && fb <= 0.0 {
            let (mut x0, mut x1) = (a, b);
            if fb == 0.0 {
                x0 = b;
            }
            while (x1 - x0) > 1e-10 * x1.abs().max(1.0) {
                let mid = 0.5 * (x0 + x1);
                if f(mid) > 0.0 {
                    x0 = mid;
                } else {
                    x1 = mid;
                }
            }
            roots.push(0.5 * (x0 + x1));
        }
        a = b;
        fa = fb;
    }
    roots
}

/// Scans `[n, n_max]` for maxima of the HawkesN likelihood in N with κ and θ
/// fixed. Returns the one with the highest log-likelihood, if any.
pub fn find_n_root(kappa: f64, theta: f64, c: &Cascade, n_max: f64) -> Option<f64> {
    find_n_root_with(&HawkesNParams::infinite(kappa, theta), c, n_max, 1000)
}

pub fn find_n_root_with(hp: &HawkesNParams, c: &Cascade, n_max: f64, intervals: usize) -> Option<f64> {
    let n = c.len() as f64;
    if !(n_max > n) || c.len() < 2 {
        return None;
    }
    let at = |big_n: f64| HawkesNParams { n_pop: big_n, ..*hp };
    let roots = scan_maxima(
        |big_n| dll_dn(&at(big_n), c).unwrap_or(f64::NAN),
        n,
        n_max,
        intervals,
    );
    best_by(roots, |big_n| process::log_likelihood(&at(big_n), c).unwrap_or(f64::NEG_INFINITY))
}

/// Same scan for the stochastic-SIR likelihood with β and γ fixed, over
/// `[i0 + infections, n_max]`.
pub fn find_sir_n_root(p: &SirParams, r: &SirRealization, n_max: f64, intervals: usize) -> Option<f64> {
    let lo = (r.i0() + r.infection_count()) as f64;
    if !(n_max > lo) {
        return None;
    }
    let at = |big_n: f64| SirParams { n_pop: big_n, ..*p };
    let roots = scan_maxima(
        |big_n| sir::log_likelihood_stochastic_with_gradient(&at(big_n), r).1[2],
        lo,
        n_max,
        intervals,
    );
    best_by(roots, |big_n| sir::log_likelihood_stochastic(&at(big_n), r))
}

fn best_by(roots: Vec<f64>, mut score: impl FnMut(f64) -> f64) -> Option<f64> {
    let mut best: Option<(f64, f64)> = None;
    for x in roots {
        let s = score(x);
        if best.is_none_or(|(_, bs)| s > bs) {
            best = Some((x, s));
        }
    }
    best.map(|(x, _)| x)
}

/// Maximum-likelihood N under the kernel-free intensity `1 − N_t/N` with unit
/// background rate, when a maximizer with `N > n` exists.
///
/// The derivative is proportional to `h(N) = Σ (j−1)[N/(N−j+1) − (t_j − t_{j−1})]`,
/// which is strictly decreasing in N; a root above `n` exists iff `h(n) > 0`
/// and `h(∞) < 0`.
pub fn simplified_model_mle(c: &Cascade) -> Option<f64> {
    let t = c.times();
    let n = t.len();
    if n < 2 {
        return None;
    }
    match n {
        2 => {
            let gap = t[1] - t[0];
            (gap > 1.0 && gap < 2.0).then(|| (t[0] - t[1]) / (1.0 + t[0] - t[1]))
        }
        3 => {
            let d = 2.0 * t[2] - t[1] - t[0];
            let (a, b, cc) = (3.0 - d, 3.0 * d - 4.0, -2.0 * d);
            let roots: Vec<f64> = if a == 0.0 {
                vec![-cc / b]
            } else {
                let disc = b * b - 4.0 * a * cc;
                if disc < 0.0 {
                    return None;
                }
                let sq = disc.sqrt();
                vec![(-b + sq) / (2.0 * a), (-b - sq) / (2.0 * a)]
            };
            roots.into_iter().find(|&r| r > 3.0 && r.is_finite())
        }
        _ => {
            let h = |big_n: f64| -> f64 {
                (1..n)
                    .map(|j| {
                        let k = j as f64;
                        k * (big_n / (big_n - k) - (t[j] - t[j - 1]))
                    })
                    .sum()
            };
            let limit: f64 = (1..n).map(|j| j as f64 * (1.0 - (t[j] - t[j - 1]))).sum();
            let lo = n as f64;
            if !(h(lo) > 0.0) || !(limit < 0.0) {
                return None;
            }
            let mut hi = 2.0 * lo;
            while h(hi) > 0.0 {
                hi *= 2.0;
                if !hi.is_finite() {
                    return None;
                }
            }
            let mut lo = lo;
            while hi - lo > 1e-12 * hi {
                let mid = 0.5 * (lo + hi);
                if h(mid) > 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            Some(0.5 * (lo + hi))
        }
    }
}

/// Per-event negative log-likelihood of `holdout` given the `observed`
/// history. Returns `+inf` when some holdout event is impossible under `hp`.
pub fn holdout_negative_ll(hp: &HawkesNParams, observed: &Cascade, holdout: &Cascade) -> Result<f64> {
    hp.validate()?;
    if hp.mu != 0.0 {
        return Err(Error::domain("holdout likelihood requires cascade mode (mu = 0)"));
    }
    if holdout.is_empty() {
        return Err(Error::domain("empty holdout"));
    }
    if observed.is_empty() {
        return Err(Error::domain("holdout evaluation needs at least one observed event"));
    }
    let full = observed.concat(holdout)?;
    if full.len() as f64 > hp.n_pop {
        return Ok(f64::INFINITY);
    }
    let t_k = observed.last_time().unwrap_or(0.0);
    let t_end = full.last_time().unwrap_or(t_k);
    let t = terms(hp, &full, observed.len(), t_k, t_end);
    if t.impossible_at.is_some() {
        return Ok(f64::INFINITY);
    }
    Ok(-(t.log_sum - t.compensator) / holdout.len() as f64)
}
