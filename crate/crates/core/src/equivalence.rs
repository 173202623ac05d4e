//! Parameter maps between SIR and HawkesN.
//!
//! Marginalizing the recovery times out of a stochastic SIR run leaves an
//! infection-event process whose expected rate is exactly the HawkesN
//! intensity with `μ = 0`, `κ = β/γ`, `θ = γ` and the same population.

use crate::cascade::{HawkesNParams, SirParams};
use crate::error::{Error, Result};
use crate::process::branching_factor;

/// `(β, γ, N) ↦ (μ = 0, κ = β/γ, θ = γ, N)`.
pub fn sir_to_hawkesn(p: &SirParams) -> HawkesNParams {
    HawkesNParams::new(p.beta / p.gamma, p.gamma, p.n_pop)
}

/// Inverse map with `γ = θ` and `β = n* θ`, where `n*` is the (possibly
/// marked) branching factor. `i0` is the number of seed infections.
pub fn hawkesn_to_sir(p: &HawkesNParams, i0: usize) -> Result<SirParams> {
    if p.mu != 0.0 {
        return Err(Error::domain(
            "a HawkesN process with background rate has no SIR counterpart",
        ));
    }
    let n_star = branching_factor(p)?;
    Ok(SirParams::new(n_star * p.theta, p.theta, p.n_pop, i0))
}

/// Expected SIR infection rate given the infection history, with recovery
/// times integrated out: `(1 − C_t/N) Σ_{t_j < t} β e^{−γ(t − t_j)}`.
pub fn expected_infection_rate(p: &SirParams, infection_times: &[f64], t: f64) -> f64 {
    let ever = infection_times.partition_point(|&x| x <= t);
    let remaining = 1.0 - ever as f64 / p.n_pop;
    if remaining <= 0.0 {
        return 0.0;
    }
    let before = infection_times.partition_point(|&x| x < t);
    let excitation: f64 = infection_times[..before]
        .iter()
        .map(|&tj| p.beta * (-p.gamma * (t - tj)).exp())
        .sum();
    remaining * excitation
}

/// Expected number of still-infected individuals at `t_l` after observing
/// the given infection times: `Σ_j e^{−γ(t_l − t_j)}`.
pub fn expected_infected_count(gamma: f64, observed_times: &[f64], t_l: f64) -> f64 {
    observed_times
        .iter()
        .map(|&tj| (-gamma * (t_l - tj)).exp())
        .sum()
}
