//! Closed-loop simulation of a transfer-function plant matrix under
//! decentralized PI control with output limits and no anti-windup.

use std::collections::BTreeMap;
use std::path::Path;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::lti::{DelayedRealization, TimeSeries, TransferFunction};
use crate::{Error, Result};

/// Matrix of SISO models, CV rows by MV columns, around a steady state.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantMatrix {
    cv_names: Vec<String>,
    mv_names: Vec<String>,
    entries: Vec<Vec<Option<TransferFunction>>>,
    u_ss: Vec<f64>,
    z_ss: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct PlantDoc {
    #[serde(default)]
    cv_names: Option<Vec<String>>,
    #[serde(default)]
    mv_names: Option<Vec<String>>,
    #[serde(default)]
    u_ss: Option<Vec<f64>>,
    #[serde(default)]
    z_ss: Option<Vec<f64>>,
    #[serde(default)]
    entries: BTreeMap<String, TransferFunction>,
}

impl PlantMatrix {
    pub fn new(
        cv_names: Vec<String>,
        mv_names: Vec<String>,
        entries: Vec<Vec<Option<TransferFunction>>>,
        u_ss: Vec<f64>,
        z_ss: Vec<f64>,
    ) -> Result<Self> {
        crate::linss::check_labels("cv_names", &cv_names, cv_names.len())?;
        crate::linss::check_labels("mv_names", &mv_names, mv_names.len())?;
        if cv_names.is_empty() || mv_names.is_empty() {
            return Err(Error::validation(
                "entries",
                "plant needs at least one CV and one MV",
            ));
        }
        if u_ss.len() != mv_names.len() {
            return Err(Error::validation(
                "u_ss",
                format!("{} values for {} MVs", u_ss.len(), mv_names.len()),
            ));
        }
        if z_ss.len() != cv_names.len() {
            return Err(Error::validation(
                "z_ss",
                format!("{} values for {} CVs", z_ss.len(), cv_names.len()),
            ));
        }
        if let Some(v) = u_ss.iter().chain(&z_ss).find(|v| !v.is_finite()) {
            return Err(Error::validation(
                "u_ss/z_ss",
                format!("non-finite value {v}"),
            ));
        }
        if entries.len() != cv_names.len() || entries.iter().any(|r| r.len() != mv_names.len()) {
            return Err(Error::DimensionMismatch(format!(
                "entries must be {}x{}",
                cv_names.len(),
                mv_names.len()
            )));
        }
        for (i, row) in entries.iter().enumerate() {
            if row.iter().all(Option::is_none) {
                return Err(Error::validation(
                    "entries",
                    format!("CV {} has no model entry", cv_names[i]),
                ));
            }
        }
        Ok(PlantMatrix {
            cv_names,
            mv_names,
            entries,
            u_ss,
            z_ss,
        })
    }

    /// Plant with models only on the diagonal.
    pub fn diagonal(
        cv_names: Vec<String>,
        mv_names: Vec<String>,
        models: Vec<TransferFunction>,
        u_ss: Vec<f64>,
        z_ss: Vec<f64>,
    ) -> Result<Self> {
        let n = models.len();
        let entries = models
            .into_iter()
            .enumerate()
            .map(|(i, g)| {
                let mut row = vec![None; n];
                row[i] = Some(g);
                row
            })
            .collect();
        Self::new(cv_names, mv_names, entries, u_ss, z_ss)
    }

    pub fn cv_names(&self) -> &[String] {
        &self.cv_names
    }

    pub fn mv_names(&self) -> &[String] {
        &self.mv_names
    }

    pub fn u_ss(&self) -> &[f64] {
        &self.u_ss
    }

    pub fn z_ss(&self) -> &[f64] {
        &self.z_ss
    }

    pub fn entry(&self, cv: usize, mv: usize) -> Option<&TransferFunction> {
        self.entries[cv][mv].as_ref()
    }

    pub fn cv_index(&self, name: &str) -> Result<usize> {
        self.cv_names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::validation("cv", format!("unknown CV {name}")))
    }

    pub fn mv_index(&self, name: &str) -> Result<usize> {
        self.mv_names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::validation("mv", format!("unknown MV {name}")))
    }

    /// Stationary gains; absent entries are zero.
    pub fn dc_gain(&self) -> nalgebra::DMatrix<f64> {
        nalgebra::DMatrix::from_fn(self.cv_names.len(), self.mv_names.len(), |i, j| {
            self.entries[i][j].as_ref().map_or(0.0, |g| g.k0())
        })
    }

    /// Smallest pole time constant over all entries.
    pub fn fastest_pole(&self) -> Option<f64> {
        self.entries
            .iter()
            .flatten()
            .flatten()
            .flat_map(|g| g.poles().iter().copied())
            .reduce(f64::min)
    }

    /// Same plant with CV rows reordered; row `i` of the result is row
    /// `order[i]` of `self`.
    pub fn permute_cvs(&self, order: &[usize]) -> Result<Self> {
        let mut seen = vec![false; self.cv_names.len()];
        if order.len() != seen.len()
            || order
                .iter()
                .any(|&i| i >= seen.len() || std::mem::replace(&mut seen[i], true))
        {
            return Err(Error::validation(
                "order",
                "not a permutation of the CV rows",
            ));
        }
        Self::new(
            order.iter().map(|&i| self.cv_names[i].clone()).collect(),
            self.mv_names.clone(),
            order.iter().map(|&i| self.entries[i].clone()).collect(),
            self.u_ss.clone(),
            order.iter().map(|&i| self.z_ss[i]).collect(),
        )
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: PlantDoc = serde_json::from_str(text)?;
        let cv_names = doc
            .cv_names
            .ok_or_else(|| Error::validation("cv_names", "missing"))?;
        let mv_names = doc
            .mv_names
            .ok_or_else(|| Error::validation("mv_names", "missing"))?;
        let u_ss = doc
            .u_ss
            .ok_or_else(|| Error::validation("u_ss", "missing"))?;
        let z_ss = doc
            .z_ss
            .ok_or_else(|| Error::validation("z_ss", "missing"))?;
        let mut entries = vec![vec![None; mv_names.len()]; cv_names.len()];
        for (key, g) in doc.entries {
            let (cv, mv) = key.split_once('/').ok_or_else(|| {
                Error::validation("entries", format!("key {key:?} is not \"cv/mv\""))
            })?;
            let i = cv_names.iter().position(|n| n == cv).ok_or_else(|| {
                Error::validation("entries", format!("unknown CV {cv:?} in {key:?}"))
            })?;
            let j = mv_names.iter().position(|n| n == mv).ok_or_else(|| {
                Error::validation("entries", format!("unknown MV {mv:?} in {key:?}"))
            })?;
            entries[i][j] = Some(g);
        }
        Self::new(cv_names, mv_names, entries, u_ss, z_ss)
    }

    pub fn to_json(&self) -> String {
        let mut entries = BTreeMap::new();
        for (i, row) in self.entries.iter().enumerate() {
            for (j, g) in row.iter().enumerate() {
                if let Some(g) = g {
                    entries.insert(
                        format!("{}/{}", self.cv_names[i], self.mv_names[j]),
                        g.clone(),
                    );
                }
            }
        }
        let doc = PlantDoc {
            cv_names: Some(self.cv_names.clone()),
            mv_names: Some(self.mv_names.clone()),
            u_ss: Some(self.u_ss.clone()),
            z_ss: Some(self.z_ss.clone()),
            entries,
        };
        serde_json::to_string_pretty(&doc).expect("plant serializes")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

/// Piecewise-constant signal: the value of the last breakpoint at or before
/// `t`, or `initial` before the first one.
#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    initial: f64,
    breakpoints: Vec<(f64, f64)>,
}

impl Schedule {
    pub fn constant(value: f64) -> Self {
        Schedule {
            initial: value,
            breakpoints: Vec::new(),
        }
    }

    pub fn new(initial: f64, breakpoints: Vec<(f64, f64)>) -> Result<Self> {
        if breakpoints.windows(2).any(|w| !(w[1].0 > w[0].0)) {
            return Err(Error::validation(
                "schedule",
                "breakpoint times must increase strictly",
            ));
        }
        if breakpoints
            .iter()
            .any(|&(t, v)| !t.is_finite() || !v.is_finite())
            || !initial.is_finite()
        {
            return Err(Error::validation("schedule", "non-finite breakpoint"));
        }
        Ok(Schedule {
            initial,
            breakpoints,
        })
    }

    pub fn at(&self, t: f64) -> f64 {
        match self.breakpoints.partition_point(|&(tb, _)| tb <= t) {
            0 => self.initial,
            i => self.breakpoints[i - 1].1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PiController {
    pub kp: f64,
    pub ki: f64,
    pub u_min: f64,
    pub u_max: f64,
}

impl PiController {
    fn validate(&self) -> Result<()> {
        if !self.kp.is_finite() || !self.ki.is_finite() {
            return Err(Error::validation("kp/ki", "gains must be finite"));
        }
        if !(self.u_min < self.u_max) {
            return Err(Error::validation(
                "limits",
                format!("u_min {} must be below u_max {}", self.u_min, self.u_max),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControlLoop {
    pub cv: usize,
    pub mv: usize,
    pub controller: PiController,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoopConfig {
    pub loops: Vec<ControlLoop>,
    /// Absolute setpoint per CV.
    pub setpoints: Vec<Schedule>,
    /// Additive load per MV, applied at the plant inlet after the limiter.
    pub disturbances: Vec<Schedule>,
    pub dt: f64,
    pub horizon: f64,
    /// Record every n-th step; the final step is always recorded.
    pub record_every: usize,
}

impl LoopConfig {
    /// No loops, setpoints at steady state, no disturbances.
    pub fn open(plant: &PlantMatrix, dt: f64, horizon: f64) -> Self {
        LoopConfig {
            loops: Vec::new(),
            setpoints: plant.z_ss.iter().map(|&z| Schedule::constant(z)).collect(),
            disturbances: vec![Schedule::constant(0.0); plant.mv_names.len()],
            dt,
            horizon,
            record_every: 1,
        }
    }

    pub fn validate(&self, plant: &PlantMatrix) -> Result<()> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::validation("dt", "must be positive"));
        }
        if !(self.horizon >= 0.0) || !self.horizon.is_finite() {
            return Err(Error::validation("horizon", "must be non-negative"));
        }
        if self.record_every == 0 {
            return Err(Error::validation("record_every", "must be at least 1"));
        }
        if self.setpoints.len() != plant.cv_names.len() {
            return Err(Error::validation("setpoints", "one schedule per CV"));
        }
        if self.disturbances.len() != plant.mv_names.len() {
            return Err(Error::validation("disturbances", "one schedule per MV"));
        }
        let mut cv_used = vec![false; plant.cv_names.len()];
        let mut mv_used = vec![false; plant.mv_names.len()];
        for l in &self.loops {
            if l.cv >= cv_used.len() || l.mv >= mv_used.len() {
                return Err(Error::validation("loops", "index out of range"));
            }
            if std::mem::replace(&mut cv_used[l.cv], true)
                || std::mem::replace(&mut mv_used[l.mv], true)
            {
                return Err(Error::validation(
                    "loops",
                    format!(
                        "{}/{} reuses a CV or MV",
                        plant.cv_names[l.cv], plant.mv_names[l.mv]
                    ),
                ));
            }
            if plant.entry(l.cv, l.mv).is_none() {
                return Err(Error::validation(
                    "loops",
                    format!(
                        "no model for {}/{}",
                        plant.cv_names[l.cv], plant.mv_names[l.mv]
                    ),
                ));
            }
            l.controller.validate()?;
        }
        Ok(())
    }
}

/// File form of a loop configuration; CVs and MVs are referenced by name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoopConfigDoc {
    pub dt: f64,
    pub horizon: f64,
    #[serde(default = "one")]
    pub record_every: usize,
    pub loops: Vec<LoopDoc>,
    /// CV name to `[time, absolute value]` breakpoints.
    #[serde(default)]
    pub setpoints: BTreeMap<String, Vec<(f64, f64)>>,
    /// MV name to `[time, additive value]` breakpoints.
    #[serde(default)]
    pub disturbances: BTreeMap<String, Vec<(f64, f64)>>,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoopDoc {
    pub cv: String,
    pub mv: String,
    pub kp: f64,
    pub ki: f64,
    /// Defaults to `0`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u_min: Option<f64>,
    /// Defaults to twice the steady-state MV value.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u_max: Option<f64>,
}

impl LoopConfigDoc {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn resolve(&self, plant: &PlantMatrix) -> Result<LoopConfig> {
        let mut cfg = LoopConfig::open(plant, self.dt, self.horizon);
        cfg.record_every = self.record_every;
        for l in &self.loops {
            let cv = plant.cv_index(&l.cv)?;
            let mv = plant.mv_index(&l.mv)?;
            let u_ss = plant.u_ss[mv];
            cfg.loops.push(ControlLoop {
                cv,
                mv,
                controller: PiController {
                    kp: l.kp,
                    ki: l.ki,
                    u_min: l.u_min.unwrap_or(0.0),
                    u_max: l.u_max.unwrap_or(2.0 * u_ss),
                },
            });
        }
        for (name, bp) in &self.setpoints {
            let i = plant.cv_index(name)?;
            cfg.setpoints[i] = Schedule::new(plant.z_ss[i], bp.clone())?;
        }
        for (name, bp) in &self.disturbances {
            let j = plant.mv_index(name)?;
            cfg.disturbances[j] = Schedule::new(0.0, bp.clone())?;
        }
        cfg.validate(plant)?;
        Ok(cfg)
    }
}

pub fn setpoint_channel(cv: &str) -> String {
    format!("{cv}.sp")
}

pub fn integral_channel(cv: &str) -> String {
    format!("{cv}.integral")
}

pub fn error_channel(cv: &str) -> String {
    format!("{cv}.error")
}

/// Fixed-step simulation of the plant in deviation variables with one
/// delayed realization per entry.
///
/// At each step the controllers read the CVs produced by the input held over
/// the previous step, so biproper entries without delay do not create an
/// algebraic loop. The trace holds every CV, every MV (the limited controller
/// output, or `u_ss` for unpaired MVs) and per loop the setpoint, integral and
/// control error.
pub fn simulate_closed_loop(plant: &PlantMatrix, cfg: &LoopConfig) -> Result<TimeSeries> {
    cfg.validate(plant)?;
    let (q, p) = (plant.cv_names.len(), plant.mv_names.len());
    if let Some(fast) = plant.fastest_pole() {
        if cfg.dt > fast / 10.0 {
            warn!(
                "dt = {} s does not resolve the fastest pole {} s within a factor 10",
                cfg.dt, fast
            );
        }
    }

    let mut blocks: Vec<(usize, usize, DelayedRealization)> = Vec::new();
    for i in 0..q {
        for j in 0..p {
            if let Some(g) = plant.entry(i, j) {
                blocks.push((i, j, DelayedRealization::new(g, cfg.dt)?));
            }
        }
    }

    let steps = (cfg.horizon / cfg.dt).round() as usize;
    let mut t_rec = Vec::new();
    let mut cv_rec = vec![Vec::new(); q];
    let mut mv_rec = vec![Vec::new(); p];
    let mut loop_rec = vec![[Vec::new(), Vec::new(), Vec::new()]; cfg.loops.len()];

    let mut integral = vec![0.0; cfg.loops.len()];
    let mut du_prev = vec![0.0; p];
    let mut du = vec![0.0; p];
    let mut z = vec![0.0; q];
    let mut u = plant.u_ss.clone();

    for k in 0..=steps {
        let t = k as f64 * cfg.dt;
        z.copy_from_slice(&plant.z_ss);
        for (i, j, r) in &blocks {
            z[*i] += r.output(du_prev[*j]);
        }
        u.copy_from_slice(&plant.u_ss);
        let mut errors = Vec::with_capacity(cfg.loops.len());
        for (l, c) in cfg.loops.iter().enumerate() {
            let e = cfg.setpoints[c.cv].at(t) - z[c.cv];
            let pi = &c.controller;
            u[c.mv] =
                (plant.u_ss[c.mv] + pi.kp * e + pi.ki * integral[l]).clamp(pi.u_min, pi.u_max);
            errors.push(e);
        }

        if k % cfg.record_every == 0 || k == steps {
            t_rec.push(t);
            for i in 0..q {
                cv_rec[i].push(z[i]);
            }
            for j in 0..p {
                mv_rec[j].push(u[j]);
            }
            for (l, c) in cfg.loops.iter().enumerate() {
                loop_rec[l][0].push(cfg.setpoints[c.cv].at(t));
                loop_rec[l][1].push(integral[l]);
                loop_rec[l][2].push(errors[l]);
            }
        }
        if k == steps {
            break;
        }

        for j in 0..p {
            du[j] = u[j] + cfg.disturbances[j].at(t) - plant.u_ss[j];
        }
        for (_, j, r) in blocks.iter_mut() {
            r.step(du[*j]);
        }
        for (l, e) in errors.iter().enumerate() {
            integral[l] += e * cfg.dt;
        }
        du_prev.copy_from_slice(&du);
    }

    let mut trace = TimeSeries::new(t_rec)?;
    for (i, v) in cv_rec.into_iter().enumerate() {
        trace.push_channel(plant.cv_names[i].clone(), v)?;
    }
    for (j, v) in mv_rec.into_iter().enumerate() {
        trace.push_channel(plant.mv_names[j].clone(), v)?;
    }
    for (l, [sp, int, err]) in loop_rec.into_iter().enumerate() {
        let cv = &plant.cv_names[cfg.loops[l].cv];
        trace.push_channel(setpoint_channel(cv), sp)?;
        trace.push_channel(integral_channel(cv), int)?;
        trace.push_channel(error_channel(cv), err)?;
    }
    Ok(trace)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Limit {
    Lower,
    Upper,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaturationInterval {
    pub limit: Limit,
    pub start: f64,
    /// Last recorded sample still at the limit.
    pub end: f64,
    /// Integral state at the last saturated sample.
    pub integral_at_exit: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoopSaturation {
    pub cv: String,
    pub mv: String,
    pub intervals: Vec<SaturationInterval>,
}

/// Intervals over which each loop's MV sits exactly at one of its limits.
pub fn saturation_report(
    trace: &TimeSeries,
    plant: &PlantMatrix,
    cfg: &LoopConfig,
) -> Result<Vec<LoopSaturation>> {
    let t = trace.t();
    let mut out = Vec::with_capacity(cfg.loops.len());
    for c in &cfg.loops {
        let cv = &plant.cv_names[c.cv];
        let mv = &plant.mv_names[c.mv];
        let missing = |name: &str| Error::validation("trace", format!("missing channel {name}"));
        let u = trace.channel(mv).ok_or_else(|| missing(mv))?;
        let int_name = integral_channel(cv);
        let integral = trace.channel(&int_name).ok_or_else(|| missing(&int_name))?;
        let at_limit = |v: f64| {
            if v == c.controller.u_min {
                Some(Limit::Lower)
            } else if v == c.controller.u_max {
                Some(Limit::Upper)
            } else {
                None
            }
        };
        let mut intervals: Vec<SaturationInterval> = Vec::new();
        let mut open: Option<Limit> = None;
        for k in 0..t.len() {
            let now = at_limit(u[k]);
            match (open, now) {
                (Some(a), Some(b)) if a == b => {
                    let last = intervals.last_mut().expect("open interval");
                    last.end = t[k];
                    last.integral_at_exit = integral[k];
                }
                (_, Some(b)) => intervals.push(SaturationInterval {
                    limit: b,
                    start: t[k],
                    end: t[k],
                    integral_at_exit: integral[k],
                }),
                (_, None) => {}
            }
            open = now;
        }
        out.push(LoopSaturation {
            cv: cv.clone(),
            mv: mv.clone(),
            intervals,
        });
    }
    Ok(out)
}

/// First time after which `y` stays within `band` of `target` until the end
/// of the trace, or `None` if the last sample is outside.
pub fn settling_time(t: &[f64], y: &[f64], target: f64, band: f64) -> Option<f64> {
    let outside = |v: &f64| (v - target).abs() > band;
    match y.iter().rposition(outside) {
        None => t.first().copied(),
        Some(k) if k + 1 < t.len() => Some(t[k + 1]),
        Some(_) => None,
    }
}
