//! Observed diffusions and model parameter bundles.
//!
//! A [`Cascade`] is the Hawkes-side observation: event times (relative to
//! the first event) with optional per-event marks. A [`SirRealization`] is
//! the SIR-side observation: an interleaved sequence of infection and
//! recovery events starting from a known initial state.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Power-law exponent of the user-influence distribution measured on
/// retweet cascades.
pub const DEFAULT_MARK_ALPHA: f64 = 2.016;

/// Ordered event times with optional marks.
///
/// Times are non-negative and non-decreasing. Cascades built with
/// [`Cascade::new`] or loaded from disk are shifted so the first event sits
/// at zero; the raw offset is kept in [`Cascade::offset`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cascade {
    times: Vec<f64>,
    marks: Option<Vec<f64>>,
    offset: f64,
}

impl Cascade {
    /// Builds a normalized cascade from raw times.
    pub fn new(times: Vec<f64>, marks: Option<Vec<f64>>) -> Result<Self> {
        if times.is_empty() {
            return Err(Error::domain("cascade must contain at least one event"));
        }
        validate_times(&times)?;
        validate_marks(&times, marks.as_deref())?;
        let offset = times[0];
        let times: Vec<f64> = times.into_iter().map(|t| t - offset).collect();
        warn_on_ties(&times);
        Ok(Self { times, marks, offset })
    }

    /// Builds a cascade from times already on the normalized clock, without
    /// shifting them. Used for suffixes that must keep the original clock.
    pub fn from_relative(times: Vec<f64>, marks: Option<Vec<f64>>) -> Result<Self> {
        validate_times(&times)?;
        validate_marks(&times, marks.as_deref())?;
        Ok(Self {
            times,
            marks,
            offset: 0.0,
        })
    }

    /// A cascade of `seeds` simultaneous events at time zero.
    pub fn seeded(seeds: usize) -> Self {
        Self {
            times: vec![0.0; seeds],
            marks: None,
            offset: 0.0,
        }
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn marks(&self) -> Option<&[f64]> {
        self.marks.as_deref()
    }

    /// Raw time of the first event before normalization.
    pub fn offset(&self) -> f64 {
        self.offset
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last_time(&self) -> Option<f64> {
        self.times.last().copied()
    }

    /// Number of events tied with the first one. With no background rate these
    /// are the seeds of the cascade: they carry no density and only condition
    /// the rest of the process.
    pub fn seed_count(&self) -> usize {
        match self.times.first() {
            Some(&t0) => self.times.iter().take_while(|&&t| t == t0).count(),
            None => 0,
        }
    }

    /// First `n` events as a new cascade on the same clock.
    pub fn prefix(&self, n: usize) -> Cascade {
        let n = n.min(self.len());
        Cascade {
            times: self.times[..n].to_vec(),
            marks: self.marks.as_ref().map(|m| m[..n].to_vec()),
            offset: self.offset,
        }
    }

    fn suffix(&self, start: usize) -> Cascade {
        Cascade {
            times: self.times[start..].to_vec(),
            marks: self.marks.as_ref().map(|m| m[start..].to_vec()),
            offset: self.offset,
        }
    }

    /// Concatenates `other` after `self`. Both must share the same clock.
    pub fn concat(&self, other: &Cascade) -> Result<Cascade> {
        if let (Some(a), Some(b)) = (self.last_time(), other.times.first()) {
            if *b < a {
                return Err(Error::domain(format!(
                    "cannot append events starting at {b} after history ending at {a}"
                )));
            }
        }
        let marks = match (&self.marks, &other.marks) {
            (Some(a), Some(b)) => Some(a.iter().chain(b).copied().collect()),
            (None, None) => None,
            _ if other.is_empty() => self.marks.clone(),
            _ if self.is_empty() => other.marks.clone(),
            _ => return Err(Error::domain("cannot mix marked and unmarked events")),
        };
        Ok(Cascade {
            times: self.times.iter().chain(&other.times).copied().collect(),
            marks,
            offset: self.offset,
        })
    }

    /// Reads a cascade CSV (`time[,magnitude]`, header row required).
    pub fn load(path: &Path, has_marks: bool) -> Result<Cascade> {
        let file = std::fs::File::open(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::read_csv(file, has_marks)
    }

    pub fn read_csv<R: Read>(reader: R, has_marks: bool) -> Result<Cascade> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr
            .headers()
            .map_err(|e| Error::Parse {
                row: 0,
                message: e.to_string(),
            })?
            .clone();
        let time_col = column_index(&headers, "time")?;
        let mark_col = if has_marks {
            Some(column_index(&headers, "magnitude")?)
        } else {
            None
        };

        let mut times = Vec::new();
        let mut marks = Vec::new();
        for (i, record) in rdr.records().enumerate() {
            let row = i + 1;
            let record = record.map_err(|e| Error::Parse {
                row,
                message: e.to_string(),
            })?;
            let t = parse_field(&record, time_col, row)?;
            if t < 0.0 {
                return Err(Error::domain(format!("negative time {t} at row {row}")));
            }
            if let Some(&prev) = times.last() {
                if t < prev {
                    return Err(Error::Ordering {
                        row,
                        time: t,
                        previous: prev,
                    });
                }
            }
            times.push(t);
            if let Some(col) = mark_col {
                let m = parse_field(&record, col, row)?;
                if !(m >= 1.0) {
                    return Err(Error::domain(format!("mark {m} < 1 at row {row}")));
                }
                marks.push(m);
            }
        }
        Cascade::new(times, has_marks.then_some(marks))
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

    pub fn write_csv<W: Write>(&self, writer: W) -> std::io::Result<()> {
        let mut w = std::io::BufWriter::new(writer);
        match &self.marks {
            Some(marks) => {
                writeln!(w, "time,magnitude")?;
                for (t, m) in self.times.iter().zip(marks) {
                    writeln!(w, "{t},{m}")?;
                }
            }
            None => {
                writeln!(w, "time")?;
                for t in &self.times {
                    writeln!(w, "{t}")?;
                }
            }
        }
        w.flush()
    }
}

fn column_index(headers: &csv::StringRecord, name: &str) -> Result<usize> {
    headers
        .iter()
        .position(|h| h.eq_ignore_ascii_case(name))
        .ok_or_else(|| Error::Parse {
            row: 0,
            message: format!("missing column `{name}`"),
        })
}

fn parse_field(record: &csv::StringRecord, col: usize, row: usize) -> Result<f64> {
    let raw = record.get(col).ok_or_else(|| Error::Parse {
        row,
        message: format!("missing field {col}"),
    })?;
    let v: f64 = raw.parse().map_err(|_| Error::Parse {
        row,
        message: format!("`{raw}` is not a number"),
    })?;
    if !v.is_finite() {
        return Err(Error::Parse {
            row,
            message: format!("`{raw}` is not finite"),
        });
    }
    Ok(v)
}

fn validate_times(times: &[f64]) -> Result<()> {
    let mut prev = f64::NEG_INFINITY;
    for (i, &t) in times.iter().enumerate() {
        if !t.is_finite() || t < 0.0 {
            return Err(Error::domain(format!("invalid event time {t} at index {i}")));
        }
        if t < prev {
            return Err(Error::Ordering {
                row: i + 1,
                time: t,
                previous: prev,
            });
        }
        prev = t;
    }
    Ok(())
}

fn validate_marks(times: &[f64], marks: Option<&[f64]>) -> Result<()> {
    if let Some(marks) = marks {
        if marks.len() != times.len() {
            return Err(Error::domain(format!(
                "{} marks for {} events",
                marks.len(),
                times.len()
            )));
        }
        if let Some((i, m)) = marks.iter().enumerate().find(|(_, m)| !(**m >= 1.0 && m.is_finite())) {
            return Err(Error::domain(format!("mark {m} < 1 at index {i}")));
        }
    }
    Ok(())
}

fn warn_on_ties(times: &[f64]) {
    let ties = times.windows(2).filter(|w| w[0] == w[1]).count();
    if ties > 0 {
        log::warn!("cascade has {ties} simultaneous event(s); ties ordered by position");
    }
}

/// Observed prefix and held-out suffix of a cascade.
#[derive(Debug, Clone)]
pub struct Split {
    pub observed: Cascade,
    /// Remaining events on the original clock; empty when fraction is 1.
    pub holdout: Cascade,
}

/// Splits a cascade after its first `ceil(fraction * n)` events.
pub fn split_cascade(c: &Cascade, fraction: f64) -> Result<Split> {
    if c.is_empty() {
        return Err(Error::domain("cannot split an empty cascade"));
    }
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::domain(format!("fraction {fraction} outside (0, 1]")));
    }
    let k = observed_count(c.len(), fraction);
    Ok(Split {
        observed: c.prefix(k),
        holdout: c.suffix(k),
    })
}

/// `ceil(fraction * n)`, at least one. The product is nudged down by a few
/// ulps so that e.g. `0.4 * 10` does not round up to 5.
pub fn observed_count(n: usize, fraction: f64) -> usize {
    let x = fraction * n as f64;
    let k = (x - x * 4.0 * f64::EPSILON).ceil() as usize;
    k.clamp(1, n)
}

/// HawkesN parameters: background rate, kernel scale, memory decay, and
/// population size, plus the optional mark warp.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HawkesNParams {
    #[serde(default)]
    pub mu: f64,
    pub kappa: f64,
    pub theta: f64,
    /// Population size. `f64::INFINITY` gives the plain Hawkes process and is
    /// written as `null` in JSON.
    #[serde(with = "infinite_as_null")]
    pub n_pop: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
}

pub(crate) mod infinite_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_infinite() {
            s.serialize_none()
        } else {
            s.serialize_some(v)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

fn default_alpha() -> f64 {
    DEFAULT_MARK_ALPHA
}

impl HawkesNParams {
    /// Unmarked cascade parameters (zero background rate).
    pub fn new(kappa: f64, theta: f64, n_pop: f64) -> Self {
        Self {
            mu: 0.0,
            kappa,
            theta,
            n_pop,
            eta: None,
            alpha: DEFAULT_MARK_ALPHA,
        }
    }

    /// Plain Hawkes process with infinite population.
    pub fn infinite(kappa: f64, theta: f64) -> Self {
        Self::new(kappa, theta, f64::INFINITY)
    }

    pub fn with_marks(mut self, eta: f64, alpha: f64) -> Self {
        self.eta = Some(eta);
        self.alpha = alpha;
        self
    }

    pub fn with_background(mut self, mu: f64) -> Self {
        self.mu = mu;
        self
    }

    pub fn is_marked(&self) -> bool {
        self.eta.is_some()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mu >= 0.0 && self.mu.is_finite()) {
            return Err(Error::params(format!("mu = {} must be >= 0", self.mu)));
        }
        if !(self.kappa > 0.0 && self.kappa.is_finite()) {
            return Err(Error::params(format!("kappa = {} must be > 0", self.kappa)));
        }
        if !(self.theta > 0.0 && self.theta.is_finite()) {
            return Err(Error::params(format!("theta = {} must be > 0", self.theta)));
        }
        if !(self.n_pop >= 1.0) {
            return Err(Error::params(format!("n_pop = {} must be >= 1", self.n_pop)));
        }
        if let Some(eta) = self.eta {
            if !(self.alpha > 1.0) {
                return Err(Error::params(format!("alpha = {} must be > 1", self.alpha)));
            }
            // eta = 0 is the unmarked limit and stays admissible
            if !(eta >= 0.0 && eta < self.alpha - 1.0) {
                return Err(Error::params(format!(
                    "eta = {eta} must lie in [0, alpha - 1 = {})",
                    self.alpha - 1.0
                )));
            }
        }
        Ok(())
    }
}

/// SIR parameters. `n_pop` is real; discrete simulators use
/// [`SirParams::population`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SirParams {
    pub beta: f64,
    pub gamma: f64,
    pub n_pop: f64,
    #[serde(default = "one")]
    pub i0: usize,
}

fn one() -> usize {
    1
}

impl SirParams {
    pub fn new(beta: f64, gamma: f64, n_pop: f64, i0: usize) -> Self {
        Self {
            beta,
            gamma,
            n_pop,
            i0,
        }
    }

    /// Population rounded to the nearest integer.
    pub fn population(&self) -> usize {
        self.n_pop.round() as usize
    }

    /// Initial susceptible count.
    pub fn s0(&self) -> f64 {
        self.n_pop - self.i0 as f64
    }

    /// Checks rates and the initial condition. `i0 = 0` is accepted: it is the
    /// trivial no-epidemic state used by degenerate checks.
    pub fn validate(&self) -> Result<()> {
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(Error::params(format!("beta = {} must be >= 0", self.beta)));
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::params(format!("gamma = {} must be > 0", self.gamma)));
        }
        if !(self.n_pop >= 1.0 && self.n_pop.is_finite()) {
            return Err(Error::params(format!("n_pop = {} must be >= 1", self.n_pop)));
        }
        if self.i0 as f64 > self.n_pop {
            return Err(Error::params(format!(
                "i0 = {} exceeds population {}",
                self.i0, self.n_pop
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EventKind {
    #[serde(rename = "I")]
    Infection,
    #[serde(rename = "R")]
    Recovery,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SirEvent {
    pub time: f64,
    pub kind: EventKind,
}

/// Interleaved infection/recovery events of a stochastic SIR run. The `i0`
/// seeds are infected at time zero and are not listed as events.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SirRealization {
    events: Vec<SirEvent>,
    /// For each recovery event (in order), the index of the individual who
    /// recovered: `0..i0` are seeds, `i0 + k` is the k-th infection.
    recovered: Option<Vec<usize>>,
    n_pop: f64,
    i0: usize,
}

impl SirRealization {
    pub fn new(events: Vec<SirEvent>, n_pop: f64, i0: usize) -> Result<Self> {
        let r = Self {
            events,
            recovered: None,
            n_pop,
            i0,
        };
        r.validate()?;
        Ok(r)
    }

    pub fn with_pairing(mut self, recovered: Vec<usize>) -> Result<Self> {
        self.recovered = Some(recovered);
        self.validate()?;
        Ok(self)
    }

    pub fn events(&self) -> &[SirEvent] {
        &self.events
    }

    pub fn n_pop(&self) -> f64 {
        self.n_pop
    }

    pub fn i0(&self) -> usize {
        self.i0
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn infection_times(&self) -> Vec<f64> {
        self.times_of(EventKind::Infection)
    }

    pub fn recovery_times(&self) -> Vec<f64> {
        self.times_of(EventKind::Recovery)
    }

    pub fn infection_count(&self) -> usize {
        self.events
            .iter()
            .filter(|e| e.kind == EventKind::Infection)
            .count()
    }

    /// Individual index for each recovery, when the generator recorded it.
    pub fn pairing(&self) -> Option<&[usize]> {
        self.recovered.as_deref()
    }

    /// Time at which each individual (seeds first) recovered, if paired.
    pub fn times_to_recovery(&self) -> Option<Vec<f64>> {
        let pairing = self.recovered.as_ref()?;
        let mut infected_at = vec![0.0; self.i0];
        infected_at.extend(self.infection_times());
        Some(
            self.recovery_times()
                .iter()
                .zip(pairing)
                .map(|(tr, &who)| tr - infected_at[who])
                .collect(),
        )
    }

    fn times_of(&self, kind: EventKind) -> Vec<f64> {
        self.events
            .iter()
            .filter(|e| e.kind == kind)
            .map(|e| e.time)
            .collect()
    }

    /// Infection process as a cascade: `i0` seed events at time zero followed
    /// by the infection times.
    pub fn infection_cascade(&self) -> Result<Cascade> {
        let mut times = vec![0.0; self.i0];
        times.extend(self.infection_times());
        Cascade::from_relative(times, None)
    }

    /// First `k` events, keeping the initial condition.
    pub fn prefix(&self, k: usize) -> SirRealization {
        let k = k.min(self.events.len());
        let recovered = self.recovered.as_ref().map(|r| {
            let recoveries = self.events[..k]
                .iter()
                .filter(|e| e.kind == EventKind::Recovery)
                .count();
            r[..recoveries].to_vec()
        });
        SirRealization {
            events: self.events[..k].to_vec(),
            recovered,
            n_pop: self.n_pop,
            i0: self.i0,
        }
    }

    /// (susceptible, infected) after each event, starting with the initial state.
    pub fn states(&self) -> Vec<(f64, usize)> {
        let mut s = self.n_pop - self.i0 as f64;
        let mut i = self.i0;
        let mut out = Vec::with_capacity(self.events.len() + 1);
        out.push((s, i));
        for e in &self.events {
            match e.kind {
                EventKind::Infection => {
                    s -= 1.0;
                    i += 1;
                }
                EventKind::Recovery => i = i.saturating_sub(1),
            }
            out.push((s, i));
        }
        out
    }

    fn validate(&self) -> Result<()> {
        if !(self.n_pop >= 1.0) || self.i0 as f64 > self.n_pop {
            return Err(Error::domain(format!(
                "initial condition i0 = {} invalid for N = {}",
                self.i0, self.n_pop
            )));
        }
        let mut prev = 0.0;
        let mut infected = self.i0 as i64;
        let mut infections = 0usize;
        for (k, e) in self.events.iter().enumerate() {
            if !(e.time >= prev) || !e.time.is_finite() {
                return Err(Error::Ordering {
                    row: k + 1,
                    time: e.time,
                    previous: prev,
                });
            }
            prev = e.time;
            if infected <= 0 {
                return Err(Error::domain(format!(
                    "event {} at t = {} occurs with no infected individuals",
                    k + 1,
                    e.time
                )));
            }
            match e.kind {
                EventKind::Infection => {
                    infected += 1;
                    infections += 1;
                }
                EventKind::Recovery => infected -= 1,
            }
        }
        if (infections + self.i0) as f64 > self.n_pop {
            return Err(Error::domain(format!(
                "{infections} infections exceed the {} susceptibles",
                self.n_pop - self.i0 as f64
            )));
        }
        if let Some(pairing) = &self.recovered {
            let recoveries = self.recovery_times();
            if pairing.len() != recoveries.len() {
                return Err(Error::domain("recovery pairing length mismatch"));
            }
            let mut infected_at = vec![0.0; self.i0];
            infected_at.extend(self.infection_times());
            let mut seen = vec![false; infected_at.len()];
            for (tr, &who) in recoveries.iter().zip(pairing) {
                if who >= infected_at.len() || seen[who] || *tr < infected_at[who] {
                    return Err(Error::domain(format!(
                        "recovery at {tr} cannot be paired with individual {who}"
                    )));
                }
                seen[who] = true;
            }
        }
        Ok(())
    }

    /// Reads a `time,kind` CSV. Leading `I` rows at time zero are the seeds.
    pub fn load(path: &Path, n_pop: Option<f64>) -> Result<SirRealization> {
        let file = std::fs::File::open(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::read_csv(file, n_pop)
    }

    /// Parses a `time,kind` CSV. When `n_pop` is absent the population is set to
    /// the number of individuals ever infected.
    pub fn read_csv<R: Read>(reader: R, n_pop: Option<f64>) -> Result<SirRealization> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr
            .headers()
            .map_err(|e| Error::Parse {
                row: 0,
                message: e.to_string(),
            })?
            .clone();
        let time_col = column_index(&headers, "time")?;
        let kind_col = column_index(&headers, "kind")?;
        let mut i0 = 0usize;
        let mut seeding = true;
        let mut events = Vec::new();
        for (i, record) in rdr.records().enumerate() {
            let row = i + 1;
            let record = record.map_err(|e| Error::Parse {
                row,
                message: e.to_string(),
            })?;
            let time = parse_field(&record, time_col, row)?;
            let kind = match record.get(kind_col) {
                Some("I") | Some("i") => EventKind::Infection,
                Some("R") | Some("r") => EventKind::Recovery,
                other => {
                    return Err(Error::Parse {
                        row,
                        message: format!("kind must be I or R, got {other:?}"),
                    })
                }
            };
            if time < 0.0 {
                return Err(Error::domain(format!("negative time {time} at row {row}")));
            }
            if seeding && time == 0.0 && kind == EventKind::Infection {
                i0 += 1;
                continue;
            }
            seeding = false;
            events.push(SirEvent { time, kind });
        }
        let ever_infected = i0
            + events
                .iter()
                .filter(|e| e.kind == EventKind::Infection)
                .count();
        let n_pop = n_pop.unwrap_or(ever_infected as f64);
        SirRealization::new(events, n_pop, i0)
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

    pub fn write_csv<W: Write>(&self, writer: W) -> std::io::Result<()> {
        let mut w = std::io::BufWriter::new(writer);
        writeln!(w, "time,kind")?;
        for _ in 0..self.i0 {
            writeln!(w, "0,I")?;
        }
        for e in &self.events {
            let k = match e.kind {
                EventKind::Infection => "I",
                EventKind::Recovery => "R",
            };
            writeln!(w, "{},{k}", e.time)?;
        }
        w.flush()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn load_normalizes_offset() {
        let c = Cascade::read_csv("time,magnitude\n10,5\n12,1\n".as_bytes(), true).unwrap();
        assert_eq!(c.times(), &[0.0, 2.0]);
        assert_eq!(c.marks().unwrap(), &[5.0, 1.0]);
        assert_eq!(c.offset(), 10.0);
    }

    #[test]
    fn single_event_cascade() {
        let c = Cascade::read_csv("time\n0\n".as_bytes(), false).unwrap();
        assert_eq!(c.times(), &[0.0]);
        assert!(c.marks().is_none());
    }

    #[test]
    fn unsorted_rejected() {
        let err = Cascade::read_csv("time\n5\n3\n".as_bytes(), false).unwrap_err();
        assert!(matches!(err, Error::Ordering { row: 2, .. }));
    }

    #[test]
    fn malformed_and_domain_errors() {
        assert!(matches!(
            Cascade::read_csv("time\nabc\n".as_bytes(), false),
            Err(Error::Parse { row: 1, .. })
        ));
        assert!(matches!(
            Cascade::read_csv("time\n-1\n".as_bytes(), false),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            Cascade::read_csv("time,magnitude\n0,0.5\n".as_bytes(), true),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            Cascade::read_csv("stamp\n0\n".as_bytes(), false),
            Err(Error::Parse { row: 0, .. })
        ));
    }

    #[test]
    fn split_counts() {
        let c = Cascade::new((0..10).map(f64::from).collect(), None).unwrap();
        let s = split_cascade(&c, 0.4).unwrap();
        assert_eq!(s.observed.len(), 4);
        assert_eq!(s.holdout.len(), 6);
        assert_eq!(s.holdout.times()[0], 4.0);

        let s = split_cascade(&c, 1.0).unwrap();
        assert_eq!(s.observed.len(), 10);
        assert!(s.holdout.is_empty());

        let c = Cascade::new((0..100).map(f64::from).collect(), None).unwrap();
        assert_eq!(split_cascade(&c, 0.05).unwrap().observed.len(), 5);
        assert_eq!(split_cascade(&c, 0.001).unwrap().observed.len(), 1);
        assert!(split_cascade(&c, 0.0).is_err());
        assert!(split_cascade(&c, 1.5).is_err());
    }

    #[test]
    fn seed_count_counts_ties_with_first() {
        let c = Cascade::from_relative(vec![0.0, 0.0, 0.0, 1.0, 1.0], None).unwrap();
        assert_eq!(c.seed_count(), 3);
    }

    #[test]
    fn realization_invariants() {
        use EventKind::*;
        let ev = |time, kind| SirEvent { time, kind };
        // recovery with nobody infected
        let r = SirRealization::new(vec![ev(1.0, Recovery), ev(2.0, Recovery)], 5.0, 1);
        assert!(r.is_err());
        // too many infections
        let r = SirRealization::new(vec![ev(1.0, Infection), ev(2.0, Infection)], 2.0, 1);
        assert!(r.is_err());
        let r = SirRealization::new(vec![ev(1.0, Infection), ev(2.0, Recovery)], 2.0, 1).unwrap();
        assert_eq!(r.states(), vec![(1.0, 1), (0.0, 2), (0.0, 1)]);
        assert!(r.clone().with_pairing(vec![1]).is_ok());
        // individual 1 infected at t = 1 cannot recover before that
        let early = SirRealization::new(vec![ev(0.5, Recovery)], 2.0, 1).unwrap();
        assert!(early.with_pairing(vec![1]).is_err());
    }

    #[test]
    fn realization_csv_roundtrip_keeps_seeds() {
        use EventKind::*;
        let ev = |time, kind| SirEvent { time, kind };
        let r = SirRealization::new(
            vec![ev(0.25, Infection), ev(0.5, Recovery), ev(1.75, Recovery), ev(2.0, Recovery)],
            10.0,
            2,
        )
        .unwrap();
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        let back = SirRealization::read_csv(buf.as_slice(), Some(10.0)).unwrap();
        assert_eq!(back, r);
        assert_eq!(back.infection_cascade().unwrap().times(), &[0.0, 0.0, 0.25]);
    }
}
