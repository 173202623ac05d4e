//! Final-size distributions from the absorbing `{s, i}` Markov chain.
//!
//! The embedded jump chain of the stochastic SIR moves from `{s, i}` to
//! `{s − 1, i + 1}` (infection) or `{s, i − 1}` (recovery). Both moves lower
//! `2s + i` by one, so after `k` steps all transient mass sits on a single
//! level of that quantity. Propagation walks the levels one at a time, which
//! is the same as applying the full transition operator but touches only
//! `O(N)` states per step.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::cascade::{Cascade, HawkesNParams, SirParams};
use crate::equivalence::{expected_infected_count, hawkesn_to_sir};
use crate::error::{Error, Result};
use crate::sir::SirState;

/// Largest population handled unless the caller raises the cap.
pub const DEFAULT_POPULATION_CAP: usize = 5000;

/// Transient mass below which propagation stops early.
pub const ABSORPTION_TOLERANCE: f64 = 1e-12;

/// Enumeration of the valid states `s, i ≥ 0, s + i ≤ N`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StateSpace {
    n_pop: usize,
}

impl StateSpace {
    pub fn new(n_pop: usize) -> Self {
        Self { n_pop }
    }

    pub fn n_pop(&self) -> usize {
        self.n_pop
    }

    /// `(N + 1)(N + 2) / 2`
    pub fn len(&self) -> usize {
        (self.n_pop + 1) * (self.n_pop + 2) / 2
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, st: SirState) -> bool {
        st.s + st.i <= self.n_pop
    }

    /// Dense ordinal, enumerating `s` ascending and then `i` ascending.
    pub fn index(&self, st: SirState) -> Option<usize> {
        if !self.contains(st) {
            return None;
        }
        let s = st.s;
        Some(s * (self.n_pop + 1) - s * s.saturating_sub(1) / 2 + st.i)
    }

    pub fn state(&self, index: usize) -> Option<SirState> {
        let mut rest = index;
        for s in 0..=self.n_pop {
            let width = self.n_pop - s + 1;
            if rest < width {
                return Some(SirState::new(s, rest));
            }
            rest -= width;
        }
        None
    }

    pub fn states(&self) -> impl Iterator<Item = SirState> + '_ {
        (0..=self.n_pop).flat_map(move |s| (0..=self.n_pop - s).map(move |i| SirState::new(s, i)))
    }

    /// Outgoing moves of the jump chain with their probabilities. Absorbing
    /// states return a self-loop of probability one.
    pub fn successors(&self, p: &SirParams, st: SirState) -> Vec<(SirState, f64)> {
        if st.is_absorbing() {
            return vec![(st, 1.0)];
        }
        let (p_inf, p_rec) =
            transition_probabilities(p, st).expect("transient state has transitions");
        let mut out = Vec::with_capacity(2);
        if st.s > 0 && p_inf > 0.0 {
            out.push((SirState::new(st.s - 1, st.i + 1), p_inf));
        }
        out.push((SirState::new(st.s, st.i - 1), p_rec));
        out
    }

    /// One application of the transition operator to a dense vector indexed
    /// by [`StateSpace::index`].
    pub fn apply(&self, p: &SirParams, pi: &[f64]) -> Vec<f64> {
        let mut next = vec![0.0; self.len()];
        for (k, st) in self.states().enumerate() {
            let m = pi[k];
            if m == 0.0 {
                continue;
            }
            for (to, w) in self.successors(p, st) {
                next[self.index(to).expect("successor stays in the space")] += m * w;
            }
        }
        next
    }
}

/// Probabilities that the next event from `{s, i}` is an infection or a
/// recovery: `βs / (βs + Nγ)` and `Nγ / (βs + Nγ)`.
pub fn transition_probabilities(p: &SirParams, st: SirState) -> Result<(f64, f64)> {
    if st.i == 0 {
        return Err(Error::domain(format!(
            "state {{{}, 0}} is absorbing and has no transitions",
            st.s
        )));
    }
    let inf = p.beta * st.s as f64;
    let rec = p.n_pop * p.gamma;
    let total = inf + rec;
    Ok((inf / total, rec / total))
}

/// Probability mass over final sizes `0..=N`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizeDistribution {
    pub probs: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SizeProbability {
    pub size: usize,
    pub probability: f64,
}

impl SizeDistribution {
    pub fn point_mass(n_pop: usize, size: usize) -> Self {
        let mut probs = vec![0.0; n_pop + 1];
        probs[size] = 1.0;
        Self { probs }
    }

    pub fn n_pop(&self) -> usize {
        self.probs.len().saturating_sub(1)
    }

    pub fn total(&self) -> f64 {
        self.probs.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.probs.iter().enumerate().map(|(k, p)| k as f64 * p).sum()
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.probs
            .iter()
            .enumerate()
            .map(|(k, p)| (k as f64 - m).powi(2) * p)
            .sum()
    }

    /// Three-point moving average with zero padding.
    pub fn smoothed(&self) -> Vec<f64> {
        let n = self.probs.len();
        (0..n)
            .map(|k| {
                let left = if k > 0 { self.probs[k - 1] } else { 0.0 };
                let right = if k + 1 < n { self.probs[k + 1] } else { 0.0 };
                (left + self.probs[k] + right) / 3.0
            })
            .collect()
    }

    /// Strict local maxima of the smoothed distribution.
    pub fn modes(&self) -> Vec<usize> {
        let sm = self.smoothed();
        let n = sm.len();
        (0..n)
            .filter(|&k| {
                let left = k == 0 || sm[k] > sm[k - 1];
                let right = k + 1 == n || sm[k] > sm[k + 1];
                sm[k] > 0.0 && left && right
            })
            .collect()
    }

    pub fn records(&self) -> Vec<SizeProbability> {
        self.probs
            .iter()
            .enumerate()
            .map(|(size, &probability)| SizeProbability { size, probability })
            .collect()
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> std::io::Result<()> {
        let mut w = std::io::BufWriter::new(writer);
        writeln!(w, "size,probability")?;
        for (k, p) in self.probs.iter().enumerate() {
            writeln!(w, "{k},{p}")?;
        }
        w.flush()
    }

    /// JSON array of `{size, probability}` records.
    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.records()).expect("plain records serialize")
    }
}

/// Level-by-level propagation of the chain's probability vector.
#[derive(Debug, Clone)]
pub struct Propagator {
    params: SirParams,
    n_pop: usize,
    /// Current value of `2s + i` shared by every transient state with mass.
    level: usize,
    /// Transient mass on the current level, indexed by `s`.
    transient: Vec<f64>,
    /// Absorbed mass indexed by `s`.
    absorbed: Vec<f64>,
    steps: usize,
}

impl Propagator {
    pub fn new(p: &SirParams, initial: SirState, cap: usize) -> Result<Self> {
        p.validate()?;
        let n_pop = p.population();
        if n_pop > cap {
            return Err(Error::StateSpaceTooLarge { n_pop, cap });
        }
        if initial.s + initial.i > n_pop {
            return Err(Error::domain(format!(
                "initial state {{{}, {}}} exceeds population {n_pop}",
                initial.s, initial.i
            )));
        }
        let mut transient = vec![0.0; n_pop + 1];
        let mut absorbed = vec![0.0; n_pop + 1];
        if initial.is_absorbing() {
            absorbed[initial.s] = 1.0;
        } else {
            transient[initial.s] = 1.0;
        }
        Ok(Self {
            params: *p,
            n_pop,
            level: 2 * initial.s + initial.i,
            transient,
            absorbed,
            steps: 0,
        })
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn transient_mass(&self) -> f64 {
        self.transient.iter().sum()
    }

    /// Current probability of every state that carries mass.
    pub fn state_masses(&self) -> Vec<(SirState, f64)> {
        let mut out = Vec::new();
        for (s, &m) in self.absorbed.iter().enumerate() {
            if m != 0.0 {
                out.push((SirState::new(s, 0), m));
            }
        }
        for (s, &m) in self.transient.iter().enumerate() {
            if m != 0.0 {
                out.push((SirState::new(s, self.level - 2 * s), m));
            }
        }
        out
    }

    /// Applies the transition operator once. Returns `false` when nothing
    /// transient is left.
    pub fn step(&mut self) -> bool {
        if self.level == 0 || self.transient.iter().all(|&m| m == 0.0) {
            return false;
        }
        let mut next = vec![0.0; self.n_pop + 1];
        for s in 0..=self.n_pop {
            let m = self.transient[s];
            if m == 0.0 {
                continue;
            }
            let i = self.level - 2 * s;
            let beta_s = self.params.beta * s as f64;
            let rec = self.params.n_pop * self.params.gamma;
            let p_inf = beta_s / (beta_s + rec);
            let p_rec = rec / (beta_s + rec);
            if s > 0 && p_inf > 0.0 {
                next[s - 1] += m * p_inf;
            }
            if i == 1 {
                self.absorbed[s] += m * p_rec;
            } else {
                next[s] += m * p_rec;
            }
        }
        self.transient = next;
        self.level -= 1;
        self.steps += 1;
        true
    }

    /// Runs until the transient mass drops below [`ABSORPTION_TOLERANCE`].
    pub fn run(&mut self) {
        while self.transient_mass() >= ABSORPTION_TOLERANCE && self.step() {}
    }

    /// Absorbed mass re-indexed by final size `N − s`.
    pub fn distribution(&self) -> SizeDistribution {
        let mut probs = vec![0.0; self.n_pop + 1];
        for (s, &m) in self.absorbed.iter().enumerate() {
            probs[self.n_pop - s] = m;
        }
        SizeDistribution { probs }
    }
}

/// Final-size distribution of the chain started at `initial`, with the
/// default population cap.
pub fn final_size_distribution(p: &SirParams, initial: SirState) -> Result<SizeDistribution> {
    final_size_distribution_capped(p, initial, DEFAULT_POPULATION_CAP)
}

pub fn final_size_distribution_capped(
    p: &SirParams,
    initial: SirState,
    cap: usize,
) -> Result<SizeDistribution> {
    let mut prop = Propagator::new(p, initial, cap)?;
    prop.run();
    Ok(prop.distribution())
}

fn finite_population(hp: &HawkesNParams) -> Result<usize> {
    if !hp.n_pop.is_finite() {
        return Err(Error::params("size distributions need a finite population"));
    }
    Ok(hp.n_pop.round() as usize)
}

/// Distribution before anything but the first event is seen, from `{N − 1, 1}`.
pub fn apriori_distribution(hp: &HawkesNParams) -> Result<SizeDistribution> {
    apriori_distribution_capped(hp, DEFAULT_POPULATION_CAP)
}

pub fn apriori_distribution_capped(hp: &HawkesNParams, cap: usize) -> Result<SizeDistribution> {
    let n_pop = finite_population(hp)?;
    let sir = hawkesn_to_sir(hp, 1)?;
    final_size_distribution_capped(&sir, SirState::new(n_pop - 1, 1), cap)
}

/// Infected count used to seed the chain after observing `c`: the expected
/// count rounded half-up and clamped to `[1, l]`.
pub fn seeded_infected(theta: f64, c: &Cascade) -> usize {
    let l = c.len();
    let t_l = c.last_time().unwrap_or(0.0);
    let expected = expected_infected_count(theta, c.times(), t_l);
    ((expected + 0.5).floor() as usize).clamp(1, l.max(1))
}

/// Distribution conditioned on the observed prefix `c`, from
/// `{N − l, round(E[ĩ])}`.
pub fn aposteriori_distribution(hp: &HawkesNParams, c: &Cascade) -> Result<SizeDistribution> {
    aposteriori_distribution_capped(hp, c, DEFAULT_POPULATION_CAP)
}

pub fn aposteriori_distribution_capped(
    hp: &HawkesNParams,
    c: &Cascade,
    cap: usize,
) -> Result<SizeDistribution> {
    let n_pop = finite_population(hp)?;
    let l = c.len();
    if l == 0 {
        return Err(Error::domain("empty cascade"));
    }
    if l > n_pop {
        return Err(Error::domain(format!(
            "{l} observed events exceed population {n_pop}"
        )));
    }
    if n_pop > cap {
        return Err(Error::StateSpaceTooLarge { n_pop, cap });
    }
    if l == n_pop {
        return Ok(SizeDistribution::point_mass(n_pop, n_pop));
    }
    let sir = hawkesn_to_sir(hp, 1)?;
    let i = seeded_infected(hp.theta, c);
    final_size_distribution_capped(&sir, SirState::new(n_pop - l, i), cap)
}
