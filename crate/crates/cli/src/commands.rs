use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use clap::{Args, ValueEnum};
use hawkesn::cascade::observed_count;
use hawkesn::estimation::{
    find_n_root_with, fit_hawkesn, fit_sir_stochastic, holdout_negative_ll, n_statistic_for,
    SirFixed,
};
use hawkesn::process::{simulate_with, SimulationOptions};
use hawkesn::sir::{
    default_step, fit_deterministic, simulate_deterministic, simulate_stochastic,
    DeterministicFitConfig, SirObservations,
};
use hawkesn::size_distribution::{
    aposteriori_distribution_capped, apriori_distribution_capped, DEFAULT_POPULATION_CAP,
};
use hawkesn::{split_cascade, Cascade, FitConfig, FitReport, Identifiability, SirRealization};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use crate::io::{run_inputs, sink, summary, write_json, Format, InputArgs};
use crate::params::ParamArgs;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Model {
    Hawkesn,
    SirStochastic,
    SirDeterministic,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, value_enum, default_value_t = Model::Hawkesn)]
    pub model: Model,
    #[command(flatten)]
    pub params: ParamArgs,
    #[arg(long)]
    pub seed: u64,
    /// Stop the simulation at this time.
    #[arg(long)]
    pub t_max: Option<f64>,
    /// Hard cap on the number of HawkesN events.
    #[arg(long)]
    pub max_events: Option<usize>,
    /// Mark of the HawkesN seed events (drawn when absent).
    #[arg(long)]
    pub initial_mark: Option<f64>,
    /// Step of the deterministic integrator (default 0.01/γ).
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long, value_enum, default_value_t = Model::Hawkesn)]
    pub model: Model,
    #[command(flatten)]
    pub inputs: InputArgs,
    /// Fit on the first ceil(f·n) events only.
    #[arg(long, default_value_t = 1.0)]
    pub observed_fraction: f64,
    /// Hold N fixed at this value.
    #[arg(long)]
    pub fixed_n: Option<f64>,
    /// Fit the plain Hawkes process (N = ∞).
    #[arg(long, conflicts_with = "fixed_n")]
    pub hawkes_infinite: bool,
    /// Population of an SIR realization file, or of the susceptible counts
    /// when fitting the deterministic model.
    #[arg(long = "n")]
    pub n_pop: Option<f64>,
    /// Initially infected for the deterministic model (default: the seeds of
    /// the cascade).
    #[arg(long)]
    pub i0: Option<usize>,
    /// Bin width for the deterministic model.
    #[arg(long, default_value_t = 1.0)]
    pub bin_width: f64,
    #[command(flatten)]
    pub search: SearchArgs,
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct SearchArgs {
    /// Number of optimizer starts.
    #[arg(long, default_value_t = 10)]
    pub starts: usize,
    /// Seed of the random starts.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Upper bound on N (default: max(1e4, 100 n)).
    #[arg(long)]
    pub n_max: Option<f64>,
}

impl SearchArgs {
    fn config(&self, use_marks: bool) -> FitConfig {
        FitConfig {
            starts: self.starts,
            seed: self.seed,
            n_pop_max: self.n_max,
            use_marks,
            ..FitConfig::default()
        }
    }
}

#[derive(Debug, Args)]
pub struct HoldoutArgs {
    #[command(flatten)]
    pub inputs: InputArgs,
    #[arg(long, default_value_t = 0.8)]
    pub observed_fraction: f64,
    #[arg(long)]
    pub fixed_n: Option<f64>,
    #[arg(long, conflicts_with = "fixed_n")]
    pub hawkes_infinite: bool,
    #[command(flatten)]
    pub search: SearchArgs,
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SizeDistArgs {
    #[command(flatten)]
    pub params: ParamArgs,
    /// Distribution from a single seed event (the default).
    #[arg(long, conflicts_with = "prefix")]
    pub apriori: bool,
    /// Observed cascade prefix to condition on.
    #[arg(long, value_name = "PATH")]
    pub prefix: Option<PathBuf>,
    /// Use only the first ceil(f·n) events of the prefix file.
    #[arg(long, default_value_t = 1.0, requires = "prefix")]
    pub observed_fraction: f64,
    /// The prefix file carries a `magnitude` column.
    #[arg(long)]
    pub marks: bool,
    /// Largest population accepted.
    #[arg(long, default_value_t = DEFAULT_POPULATION_CAP)]
    pub cap: usize,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct NStatArgs {
    #[command(flatten)]
    pub params: ParamArgs,
    #[command(flatten)]
    pub inputs: InputArgs,
    #[arg(long, default_value_t = 1.0)]
    pub observed_fraction: f64,
    /// Upper end of the root scan (default: max(1e4, 100 n)).
    #[arg(long)]
    pub n_max: Option<f64>,
    /// Grid intervals of the root scan.
    #[arg(long, default_value_t = 1000)]
    pub intervals: usize,
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
}

fn check_fraction(f: f64, allow_one: bool) -> Result<()> {
    let ok = f > 0.0 && (f < 1.0 || (allow_one && f == 1.0));
    ensure!(ok, "observed fraction {f} outside {}", if allow_one { "(0, 1]" } else { "(0, 1)" });
    Ok(())
}

fn load_prefix(path: &Path, marks: bool, fraction: f64) -> Result<Cascade> {
    let c = Cascade::load(path, marks)?;
    ensure!(!c.is_empty(), "{} holds no events", path.display());
    Ok(split_cascade(&c, fraction)?.observed)
}

fn to_value<T: serde::Serialize>(v: &T) -> Result<Value> {
    Ok(serde_json::to_value(v)?)
}

pub fn simulate(a: &SimulateArgs) -> Result<()> {
    let out = a.out.as_deref();
    let (events, duration) = match a.model {
        Model::Hawkesn => {
            let p = a.params.hawkesn()?;
            let opts = SimulationOptions {
                t_max: a.t_max,
                seeds: a.params.i0(),
                initial_mark: a.initial_mark,
                max_events: a.max_events,
            };
            let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
            let c = simulate_with(&p, &opts, &mut rng)?;
            let mut w = sink(out)?;
            match a.format {
                Format::Csv => c.write_csv(&mut w)?,
                Format::Json => serde_json::to_writer(&mut w, &c)?,
            }
            w.flush()?;
            (c.len(), c.last_time().unwrap_or(0.0))
        }
        Model::SirStochastic => {
            let p = a.params.sir()?;
            let r = simulate_stochastic(&p, a.seed)?;
            let r = match a.t_max {
                Some(t) => r.prefix(r.events().partition_point(|e| e.time <= t)),
                None => r,
            };
            let mut w = sink(out)?;
            match a.format {
                Format::Csv => r.write_csv(&mut w)?,
                Format::Json => serde_json::to_writer(&mut w, &r)?,
            }
            w.flush()?;
            (r.len(), r.events().last().map_or(0.0, |e| e.time))
        }
        Model::SirDeterministic => {
            let p = a.params.sir()?;
            let Some(t_max) = a.t_max else {
                bail!("the deterministic model needs --t-max");
            };
            let traj = simulate_deterministic(&p, a.dt.unwrap_or_else(|| default_step(&p)), t_max)?;
            let mut w = sink(out)?;
            match a.format {
                Format::Csv => traj.write_csv(&mut w)?,
                Format::Json => serde_json::to_writer(&mut w, &traj)?,
            }
            w.flush()?;
            (traj.len(), t_max)
        }
    };
    summary(
        out,
        &json!({
            "model": a.model.to_possible_value().map(|v| v.get_name().to_owned()),
            "seed": a.seed,
            "events": events,
            "duration": duration,
        }),
    )
}

fn fit_one(a: &FitArgs, path: &Path) -> Result<Value> {
    let f = a.observed_fraction;
    let cfg = a.search.config(a.inputs.marks);
    let report = match a.model {
        Model::Hawkesn => {
            let c = load_prefix(path, a.inputs.marks, f)?;
            let fixed = if a.hawkes_infinite { Some(f64::INFINITY) } else { a.fixed_n };
            fit_hawkesn(&c, &cfg, fixed)?
        }
        Model::SirStochastic => {
            let r = SirRealization::load(path, a.n_pop)?;
            let r = r.prefix(observed_count(r.len(), f));
            let fixed = SirFixed {
                n_pop: a.fixed_n,
                ..SirFixed::default()
            };
            fit_sir_stochastic(&r, &cfg, fixed)?
        }
        Model::SirDeterministic => {
            let c = load_prefix(path, false, f)?;
            let obs = SirObservations::from_cascade(&c, a.bin_width, a.n_pop)?;
            let dcfg = DeterministicFitConfig {
                starts: a.search.starts,
                seed: a.search.seed,
                ..DeterministicFitConfig::default()
            };
            let i0 = a.i0.unwrap_or_else(|| c.seed_count());
            FitReport::from_deterministic(&fit_deterministic(&obs, i0, &dcfg)?, c.len())
        }
    };
    let mut v = to_value(&report)?;
    v["observed_fraction"] = json!(f);
    Ok(v)
}

pub fn fit(a: &FitArgs) -> Result<()> {
    check_fraction(a.observed_fraction, true)?;
    if a.hawkes_infinite && a.model != Model::Hawkesn {
        bail!("--hawkes-infinite applies to the hawkesn model only");
    }
    run_inputs(&a.inputs, a.out.as_deref(), |p| fit_one(a, p))
}

fn holdout_one(a: &HoldoutArgs, path: &Path) -> Result<Value> {
    let c = Cascade::load(path, a.inputs.marks)?;
    ensure!(!c.is_empty(), "{} holds no events", path.display());
    let split = split_cascade(&c, a.observed_fraction)?;
    ensure!(!split.holdout.is_empty(), "nothing left to hold out");
    let fixed = if a.hawkes_infinite { Some(f64::INFINITY) } else { a.fixed_n };
    let report = fit_hawkesn(&split.observed, &a.search.config(a.inputs.marks), fixed)?;
    let params = report.hawkesn.context("the fit found no feasible parameters")?;
    let nll = holdout_negative_ll(&params, &split.observed, &split.holdout)?;
    Ok(json!({
        "observed_fraction": a.observed_fraction,
        // an impossible holdout scores +inf, which JSON writes as null
        "holdout_nll": nll.is_finite().then_some(nll),
        "n_holdout": split.holdout.len(),
        "n_observed": split.observed.len(),
        "params": params,
    }))
}

pub fn holdout(a: &HoldoutArgs) -> Result<()> {
    check_fraction(a.observed_fraction, false)?;
    run_inputs(&a.inputs, a.out.as_deref(), |p| holdout_one(a, p))
}

pub fn sizedist(a: &SizeDistArgs) -> Result<()> {
    check_fraction(a.observed_fraction, true)?;
    let p = a.params.hawkesn()?;
    let (dist, observed) = match &a.prefix {
        Some(path) => {
            let c = load_prefix(path, a.marks, a.observed_fraction)?;
            (aposteriori_distribution_capped(&p, &c, a.cap)?, c.len())
        }
        None => (apriori_distribution_capped(&p, a.cap)?, 1),
    };
    let stats = json!({
        "n_pop": dist.n_pop(),
        "observed": observed,
        "total": dist.total(),
        "mean": dist.mean(),
        "variance": dist.variance(),
        "modes": dist.modes(),
    });
    let out = a.out.as_deref();
    match a.format {
        Format::Csv => {
            let mut w = sink(out)?;
            dist.write_csv(&mut w)?;
            w.flush()?;
            summary(out, &stats)
        }
        Format::Json => {
            let mut v = stats;
            v["distribution"] = to_value(&dist.records())?;
            write_json(out, &v)
        }
    }
}

fn nstat_one(a: &NStatArgs, path: &Path) -> Result<Value> {
    let hp = a.params.hawkesn()?;
    let c = load_prefix(path, a.inputs.marks, a.observed_fraction)?;
    let statistic = n_statistic_for(&hp, &c);
    let verdict = if statistic > 0.0 {
        Identifiability::NoValidN
    } else {
        Identifiability::ValidN
    };
    let n_max = a.n_max.unwrap_or_else(|| FitConfig::default().n_pop_upper(c.len()));
    let root = find_n_root_with(&hp, &c, n_max, a.intervals);
    Ok(json!({
        "n_events": c.len(),
        "statistic": statistic,
        "identifiability": verdict,
        "n_root": root,
    }))
}

pub fn nstat(a: &NStatArgs) -> Result<()> {
    check_fraction(a.observed_fraction, true)?;
    run_inputs(&a.inputs, a.out.as_deref(), |p| nstat_one(a, p))
}
