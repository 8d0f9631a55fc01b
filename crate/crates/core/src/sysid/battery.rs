//! Relative step tests on a plant matrix and per-pair fitting of the results.

use log::debug;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    fit_sopdt, initial_guess, normalize_step, FitResult, NormalizedStep,
    REFERENCE_SAMPLES_PER_HOUR, REFERENCE_STEP_SIZES,
};
use crate::cloop::PlantMatrix;
use crate::lti::{step_response_analytic, step_response_numeric, TimeSeries, TransferFunction};
use crate::{Error, Result};

/// Upper bound on refinement samples chosen by [`StepExperiment::planned`].
pub const MAX_REFINED_SAMPLES: usize = 2000;

/// Extra samples after the step: every `period` seconds up to `until`
/// seconds past the step instant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Refinement {
    pub period: f64,
    pub until: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepExperiment {
    /// Restrict the battery to one MV; all MVs when absent.
    #[serde(default)]
    pub mv: Option<String>,
    /// Step sizes as fractions of the steady-state MV value.
    pub step_sizes: Vec<f64>,
    /// Step instant in seconds.
    pub t0: f64,
    /// End of the recording in seconds.
    pub tf: f64,
    /// Samples per hour.
    pub sample_rate: f64,
    #[serde(default)]
    pub refinement: Option<Refinement>,
}

impl StepExperiment {
    /// Four relative steps recorded at 100 samples per hour.
    pub fn reference(tf: f64) -> Self {
        StepExperiment {
            mv: None,
            step_sizes: REFERENCE_STEP_SIZES.to_vec(),
            t0: 0.0,
            tf,
            sample_rate: REFERENCE_SAMPLES_PER_HOUR,
            refinement: None,
        }
    }

    /// Reference protocol with a horizon and early dense sampling sized for
    /// the given models: the recording lasts until the slowest model has
    /// settled (delay plus eight largest time constants, at least one hour),
    /// and when the fastest pole is shorter than the regular period, samples
    /// every tenth of it are added until ten of its time constants past the
    /// longest delay, capped at [`MAX_REFINED_SAMPLES`].
    pub fn planned<'a>(models: impl IntoIterator<Item = &'a TransferFunction>) -> Self {
        let period = 3600.0 / REFERENCE_SAMPLES_PER_HOUR;
        let (mut fast, mut tf, mut delay) = (f64::INFINITY, 3600.0f64, 0.0f64);
        for g in models {
            let slow = g.poles().iter().copied().fold(0.0, f64::max);
            fast = g.poles().iter().copied().fold(fast, f64::min);
            tf = tf.max(g.delay() + 8.0 * slow);
            delay = delay.max(g.delay());
        }
        let mut exp = Self::reference((tf / period).ceil() * period);
        if fast.is_finite() && fast / 10.0 < period {
            let until = delay + 10.0 * fast;
            let step = (fast / 10.0).max(until / MAX_REFINED_SAMPLES as f64);
            exp.refinement = Some(Refinement {
                period: step,
                until,
            });
        }
        exp
    }

    pub fn validate(&self) -> Result<()> {
        if self.step_sizes.is_empty() {
            return Err(Error::validation("step_sizes", "no step sizes"));
        }
        if self.step_sizes.iter().any(|s| !s.is_finite() || *s == 0.0) {
            return Err(Error::validation(
                "step_sizes",
                "step sizes must be finite and non-zero",
            ));
        }
        if !(self.sample_rate > 0.0) || !self.sample_rate.is_finite() {
            return Err(Error::validation("sample_rate", "must be positive"));
        }
        if !(self.t0 >= 0.0) || !(self.tf > self.t0) || !self.tf.is_finite() {
            return Err(Error::validation("tf", "need 0 <= t0 < tf"));
        }
        if let Some(r) = self.refinement {
            if !(r.period > 0.0) || !(r.until >= 0.0) || !r.until.is_finite() {
                return Err(Error::validation(
                    "refinement",
                    "period must be positive and until non-negative",
                ));
            }
        }
        Ok(())
    }
}

/// Sample instants: the regular grid from 0 to `tf`, the step instant, and
/// any refinement samples, sorted and without duplicates.
pub fn sample_times(exp: &StepExperiment) -> Result<Vec<f64>> {
    exp.validate()?;
    let period = 3600.0 / exp.sample_rate;
    let n = (exp.tf / period * (1.0 + 1e-12)).floor() as usize;
    let mut t: Vec<f64> = (0..=n).map(|k| k as f64 * period).collect();
    t.push(exp.t0);
    if let Some(r) = exp.refinement {
        let m = (r.until / r.period * (1.0 + 1e-12)).floor() as usize;
        t.extend(
            (1..=m)
                .map(|k| exp.t0 + k as f64 * r.period)
                .filter(|&x| x <= exp.tf),
        );
    }
    t.sort_by(f64::total_cmp);
    let tol = 1e-9 * period.min(exp.refinement.map_or(f64::INFINITY, |r| r.period));
    t.dedup_by(|b, a| (*b - *a).abs() <= tol);
    Ok(t)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub cv: usize,
    pub mv: usize,
    pub step_size: f64,
    pub data: NormalizedStep,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepBattery {
    pub cv_names: Vec<String>,
    pub mv_names: Vec<String>,
    pub step_sizes: Vec<f64>,
    /// Raw CV recordings per stepped MV, one column per CV and step size.
    pub raw: Vec<(usize, TimeSeries)>,
    pub steps: Vec<StepRecord>,
    /// Largest absolute CV deviation per (CV, MV) over all step sizes.
    pub max_deviation: Vec<Vec<f64>>,
    z_ss: Vec<f64>,
}

pub fn raw_column(cv: &str, step_size: f64) -> String {
    format!("{cv}@{:+}%", step_size * 100.0)
}

impl StepBattery {
    /// Largest relative CV change `max |z - z_ss| / |z_ss|` per (CV, MV).
    pub fn responsiveness(&self) -> Result<Vec<Vec<f64>>> {
        self.max_deviation
            .iter()
            .enumerate()
            .map(|(i, row)| {
                if self.z_ss[i] == 0.0 {
                    return Err(Error::ZeroSteadyState(self.cv_names[i].clone()));
                }
                Ok(row.iter().map(|d| d / self.z_ss[i].abs()).collect())
            })
            .collect()
    }

    pub fn step(&self, cv: usize, mv: usize, step_size: f64) -> Option<&NormalizedStep> {
        self.steps
            .iter()
            .find(|r| r.cv == cv && r.mv == mv && r.step_size == step_size)
            .map(|r| &r.data)
    }
}

/// Response of one entry to a unit step at `t = 0` on the grid `t`.
fn unit_response(g: &TransferFunction, t: &[f64]) -> Result<Vec<f64>> {
    if g.poles().len() <= 2 && g.effective_zeros().count() <= 1 {
        return t.iter().map(|&ti| step_response_analytic(g, ti)).collect();
    }
    let fast = g.poles().iter().copied().fold(f64::INFINITY, f64::min);
    let trace = step_response_numeric(g, t, fast / 20.0)?;
    Ok(trace
        .channel("y")
        .expect("numeric response channel")
        .to_vec())
}

/// Steps each MV (or the selected one) by every relative step size while the
/// other MVs stay at steady state, records all CVs on the experiment grid and
/// normalizes each response by its input change.
pub fn run_step_battery(plant: &PlantMatrix, exp: &StepExperiment) -> Result<StepBattery> {
    let t = sample_times(exp)?;
    let mvs: Vec<usize> = match &exp.mv {
        Some(name) => vec![plant.mv_index(name)?],
        None => (0..plant.mv_names().len()).collect(),
    };
    let q = plant.cv_names().len();
    let rel_t: Vec<f64> = t.iter().map(|&ti| ti - exp.t0).collect();

    let mut raw = Vec::new();
    let mut steps = Vec::new();
    let mut max_deviation = vec![vec![0.0; plant.mv_names().len()]; q];
    for &j in &mvs {
        let u_ss = plant.u_ss()[j];
        if u_ss == 0.0 {
            return Err(Error::ZeroSteadyState(plant.mv_names()[j].clone()));
        }
        let unit: Vec<Option<Vec<f64>>> = (0..q)
            .map(|i| {
                plant
                    .entry(i, j)
                    .map(|g| unit_response(g, &rel_t))
                    .transpose()
            })
            .collect::<Result<_>>()?;
        let mut series = TimeSeries::new(t.clone())?;
        for &size in &exp.step_sizes {
            let du = size * u_ss;
            let u: Vec<f64> = t
                .iter()
                .map(|&ti| if ti > exp.t0 { u_ss + du } else { u_ss })
                .collect();
            for i in 0..q {
                let z_ss = plant.z_ss()[i];
                let z: Vec<f64> = match &unit[i] {
                    Some(s) => s.iter().map(|v| z_ss + du * v).collect(),
                    None => vec![z_ss; t.len()],
                };
                let dev = z.iter().fold(0.0f64, |m, v| m.max((v - z_ss).abs()));
                max_deviation[i][j] = f64::max(max_deviation[i][j], dev);
                let data = normalize_step(&t, &z, &u, 0.0)?;
                series.push_channel(raw_column(&plant.cv_names()[i], size), z)?;
                steps.push(StepRecord {
                    cv: i,
                    mv: j,
                    step_size: size,
                    data,
                });
            }
        }
        raw.push((j, series));
    }
    Ok(StepBattery {
        cv_names: plant.cv_names().to_vec(),
        mv_names: plant.mv_names().to_vec(),
        step_sizes: exp.step_sizes.clone(),
        raw,
        steps,
        max_deviation,
        z_ss: plant.z_ss().to_vec(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepFit {
    pub step_size: f64,
    pub fit: FitResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairFits {
    pub cv: String,
    pub mv: String,
    pub fits: Vec<StepFit>,
    /// Parameter-wise mean over the step sizes.
    pub mean: TransferFunction,
    /// Fitted gains differ in sign between step sizes.
    pub sign_flip: bool,
}

fn fit_one(data: &NormalizedStep) -> Result<Option<FitResult>> {
    let guess = match initial_guess(data) {
        Ok(g) => g,
        Err(Error::NeverResponds) => return Ok(None),
        Err(e) => return Err(e),
    };
    fit_sopdt(data, &guess).map(Some)
}

fn mean_model(fits: &[StepFit]) -> Result<TransferFunction> {
    let n = fits.len() as f64;
    let mut acc = [0.0; 5];
    for f in fits {
        let g = &f.fit.model;
        let p = g.poles();
        let (t1, t2) = match *p {
            [a, b] => (a, b),
            [a] => (a, a),
            _ => {
                return Err(Error::UnsupportedStructure {
                    poles: p.len(),
                    zeros: g.zeros().len(),
                })
            }
        };
        let tz = g.effective_zeros().next().unwrap_or(0.0);
        for (a, v) in acc.iter_mut().zip([g.k0(), t1, t2, tz, g.delay()]) {
            *a += v / n;
        }
    }
    TransferFunction::sopdt(acc[0], acc[1], acc[2], acc[3], acc[4])
}

/// Fits every responding (CV, MV) pair of the battery, or only the listed
/// pairs. Pairs whose responses are identically zero are skipped. Output order
/// follows the pair order, independent of scheduling.
pub fn fit_battery(
    battery: &StepBattery,
    pairs: Option<&[(usize, usize)]>,
) -> Result<Vec<PairFits>> {
    let mut keys: Vec<(usize, usize)> = match pairs {
        Some(p) => p.to_vec(),
        None => battery.steps.iter().map(|r| (r.cv, r.mv)).collect(),
    };
    let mut seen = std::collections::BTreeSet::new();
    keys.retain(|k| seen.insert(*k));

    let results: Vec<Result<Option<PairFits>>> = keys
        .par_iter()
        .map(|&(cv, mv)| {
            let mut fits = Vec::new();
            for r in battery.steps.iter().filter(|r| r.cv == cv && r.mv == mv) {
                if let Some(fit) = fit_one(&r.data)? {
                    fits.push(StepFit {
                        step_size: r.step_size,
                        fit,
                    });
                }
            }
            if fits.is_empty() {
                debug!(
                    "{}/{}: no response, skipped",
                    battery.cv_names[cv], battery.mv_names[mv]
                );
                return Ok(None);
            }
            let positive = fits.iter().filter(|f| f.fit.model.k0() > 0.0).count();
            let sign_flip = positive != 0 && positive != fits.len();
            Ok(Some(PairFits {
                cv: battery.cv_names[cv].clone(),
                mv: battery.mv_names[mv].clone(),
                mean: mean_model(&fits)?,
                fits,
                sign_flip,
            }))
        })
        .collect();
    let mut out = Vec::new();
    for r in results {
        if let Some(p) = r? {
            out.push(p);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn diag_plant() -> PlantMatrix {
        let g1 = TransferFunction::sopdt(2.0, 300.0, 100.0, 50.0, 72.0).unwrap();
        let g2 = TransferFunction::fopdt(-0.5, 400.0, 36.0).unwrap();
        PlantMatrix::diagonal(
            vec!["a".into(), "b".into()],
            vec!["x".into(), "y".into()],
            vec![g1, g2],
            vec![10.0, 4.0],
            vec![100.0, 7.0],
        )
        .unwrap()
    }

    #[test]
    fn one_hour_grid() {
        let t = sample_times(&StepExperiment::reference(3600.0)).unwrap();
        assert_eq!(t.len(), 101);
        assert_eq!(t[1], 36.0);
        assert_eq!(*t.last().unwrap(), 3600.0);
    }

    #[test]
    fn refinement_adds_early_samples() {
        let mut exp = StepExperiment::reference(3600.0);
        exp.refinement = Some(Refinement {
            period: 1.0,
            until: 72.0,
        });
        let t = sample_times(&exp).unwrap();
        assert_eq!(t.len(), 101 + 72 - 2);
        assert!(t.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn diagonal_plant_has_silent_off_diagonals() {
        let b = run_step_battery(&diag_plant(), &StepExperiment::reference(7200.0)).unwrap();
        assert_eq!(b.steps.len(), 2 * 2 * 4);
        for r in &b.steps {
            let silent = r.data.s.iter().all(|&v| v == 0.0);
            assert_eq!(silent, r.cv != r.mv);
        }
        assert_eq!(b.max_deviation[0][1], 0.0);
        let rel = b.responsiveness().unwrap();
        assert!(rel[0][0] > 0.0 && rel[1][0] == 0.0);
    }

    #[test]
    fn normalized_steps_do_not_depend_on_size() {
        let b = run_step_battery(&diag_plant(), &StepExperiment::reference(7200.0)).unwrap();
        for (cv, mv) in [(0, 0), (1, 1)] {
            let base = b.step(cv, mv, 0.01).unwrap();
            for &size in &REFERENCE_STEP_SIZES {
                let other = b.step(cv, mv, size).unwrap();
                let dev = base
                    .s
                    .iter()
                    .zip(&other.s)
                    .fold(0.0f64, |m, (a, c)| m.max((a - c).abs()));
                assert!(dev < 1e-6, "size {size}: {dev}");
            }
        }
    }

    #[test]
    fn raw_columns_are_named_by_step() {
        let b = run_step_battery(&diag_plant(), &StepExperiment::reference(3600.0)).unwrap();
        let names = b.raw[0].1.channel_names();
        assert_eq!(names[0], "a@-1%");
        assert!(names.contains(&"b@+0.5%"));
    }

    #[test]
    fn zero_steady_state_mv_is_rejected() {
        let g = TransferFunction::fopdt(1.0, 10.0, 0.0).unwrap();
        let p = PlantMatrix::diagonal(
            vec!["a".into()],
            vec!["x".into()],
            vec![g],
            vec![0.0],
            vec![1.0],
        )
        .unwrap();
        assert!(matches!(
            run_step_battery(&p, &StepExperiment::reference(3600.0)),
            Err(Error::ZeroSteadyState(_))
        ));
    }

    #[test]
    fn battery_fits_recover_models() {
        let plant = diag_plant();
        let b = run_step_battery(&plant, &StepExperiment::reference(4.0 * 3600.0)).unwrap();
        let fits = fit_battery(&b, None).unwrap();
        assert_eq!(fits.len(), 2);
        let m = &fits[0].mean;
        assert!((m.k0() - 2.0).abs() < 1e-3 * 2.0);
        assert!((m.poles()[0] - 300.0).abs() < 3.0);
        assert!((m.delay() - 72.0).abs() < 72.0);
        assert!(!fits[0].sign_flip);
        assert_eq!(fits[1].mv, "y");
    }
}
