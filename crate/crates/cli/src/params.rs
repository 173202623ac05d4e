//! Model parameters from flags or from a JSON file.
//!
//! A parameter file holds either a bare `HawkesNParams` / `SirParams` object
//! or a fit report, in which case its fitted parameters are used.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use hawkesn::equivalence::{hawkesn_to_sir, sir_to_hawkesn};
use hawkesn::{FitReport, HawkesNParams, SirParams, DEFAULT_MARK_ALPHA};
use serde_json::Value;

#[derive(Debug, Clone, Args)]
pub struct ParamArgs {
    /// Kernel scale κ.
    #[arg(long)]
    pub kappa: Option<f64>,
    /// Memory decay θ.
    #[arg(long)]
    pub theta: Option<f64>,
    /// Population size N; omit for an infinite population.
    #[arg(long = "n")]
    pub n_pop: Option<f64>,
    /// Background rate μ.
    #[arg(long)]
    pub mu: Option<f64>,
    /// Mark warp η; enables marked mode.
    #[arg(long)]
    pub eta: Option<f64>,
    /// Power-law exponent of the mark distribution.
    #[arg(long, default_value_t = DEFAULT_MARK_ALPHA)]
    pub alpha: f64,
    /// SIR infection rate β.
    #[arg(long)]
    pub beta: Option<f64>,
    /// SIR recovery rate γ.
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Initially infected individuals (seed events).
    #[arg(long)]
    pub i0: Option<usize>,
    /// JSON parameter file or fit report.
    #[arg(long, value_name = "PATH", conflicts_with_all = ["kappa", "theta", "n_pop", "mu", "eta", "beta", "gamma"])]
    pub params: Option<PathBuf>,
}

enum Source {
    Hawkes(HawkesNParams),
    Sir(SirParams),
}

impl ParamArgs {
    pub fn i0(&self) -> usize {
        self.i0.unwrap_or(1)
    }

    fn source(&self) -> Result<Source> {
        if let Some(path) = &self.params {
            return read_params(path);
        }
        match (self.kappa, self.theta, self.beta, self.gamma) {
            (Some(kappa), Some(theta), None, None) => {
                let mut p = HawkesNParams::new(kappa, theta, self.n_pop.unwrap_or(f64::INFINITY));
                if let Some(mu) = self.mu {
                    p = p.with_background(mu);
                }
                if let Some(eta) = self.eta {
                    p = p.with_marks(eta, self.alpha);
                }
                Ok(Source::Hawkes(p))
            }
            (None, None, Some(beta), Some(gamma)) => {
                let Some(n_pop) = self.n_pop else {
                    bail!("SIR parameters need --n");
                };
                Ok(Source::Sir(SirParams::new(beta, gamma, n_pop, self.i0())))
            }
            (None, None, None, None) => bail!("give --kappa/--theta, --beta/--gamma, or --params"),
            _ => bail!("give either --kappa with --theta or --beta with --gamma"),
        }
    }

    pub fn hawkesn(&self) -> Result<HawkesNParams> {
        let p = match self.source()? {
            Source::Hawkes(p) => p,
            Source::Sir(s) => sir_to_hawkesn(&s),
        };
        p.validate()?;
        Ok(p)
    }

    pub fn sir(&self) -> Result<SirParams> {
        let mut p = match self.source()? {
            Source::Sir(s) => s,
            Source::Hawkes(h) => hawkesn_to_sir(&h, self.i0())?,
        };
        if let Some(i0) = self.i0 {
            p.i0 = i0;
        }
        p.validate()?;
        Ok(p)
    }
}

fn read_params(path: &Path) -> Result<Source> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))?;
    let value: Value =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    let obj = value
        .as_object()
        .with_context(|| format!("{} is not a JSON object", path.display()))?;
    if obj.contains_key("model") {
        let report: FitReport = serde_json::from_value(value)?;
        if let Some(h) = report.hawkesn {
            return Ok(Source::Hawkes(h));
        }
        if let Some(s) = report.sir {
            return Ok(Source::Sir(s));
        }
        bail!("fit report {} carries no parameters", path.display());
    }
    if obj.contains_key("kappa") {
        return Ok(Source::Hawkes(serde_json::from_value(value)?));
    }
    if obj.contains_key("beta") {
        return Ok(Source::Sir(serde_json::from_value(value)?));
    }
    bail!("{} holds neither HawkesN nor SIR parameters", path.display())
}
