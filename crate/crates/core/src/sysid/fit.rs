//! Least-squares fit of the second-order model with one zero and dead time.
//!
//! The dead time enters through the Heaviside gate, so the objective is only
//! piecewise smooth in `td`: its kinks sit at the sample instants. The search
//! therefore runs per inter-sample interval around the first detected
//! response. Within an interval, `k0` and `k0 tz` enter linearly; they are
//! projected out by linear least squares so a coarse grid over the two pole
//! time constants, followed by damped Gauss-Newton on `(tau1, tau2, td)`,
//! gives a reliable start. A final damped Gauss-Newton pass over all five
//! parameters uses the closed-form step expression directly, and repeated
//! poles are refit with a shared pole.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::lm::{self, Bounds};
use super::NormalizedStep;
use crate::lti::{sopdt_step, TransferFunction};
use crate::{Error, Result};

pub const MAX_ITERATIONS: usize = 500;

/// Relative pole gap below which a repeated-pole refit is attempted.
const EQUAL_POLE_GAP: f64 = 1e-3;
const GRID_POINTS: usize = 24;
const INTERVALS_BEFORE_ONSET: usize = 4;
const MAX_EXTRA_INTERVALS: usize = 16;

/// Knot interval holding the response onset when the first samples may be
/// noise: the last knot before the first sample exceeding five times a robust
/// noise level from median absolute successive differences.
fn noise_onset(step: &NormalizedStep, knots: &[f64]) -> usize {
    let mut diffs: Vec<f64> = step.s.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
    if diffs.is_empty() {
        return 0;
    }
    let mid = diffs.len() / 2;
    let (_, median, _) = diffs.select_nth_unstable_by(mid, f64::total_cmp);
    let sigma = *median / (0.6745 * std::f64::consts::SQRT_2);
    let level = (5.0 * sigma).max(super::RESPONSE_EPSILON);
    match step
        .t
        .iter()
        .zip(&step.s)
        .find(|&(&t, s)| t >= 0.0 && s.abs() > level)
    {
        Some((&t, _)) => knots.partition_point(|&k| k < t).saturating_sub(1),
        None => 0,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub model: TransferFunction,
    /// Root-mean-square of data minus model, in normalized units.
    pub residual_norm: f64,
    pub converged: bool,
    pub iterations: usize,
}

/// Basis of the model for fixed poles and delay:
/// `s = k0 * phi1 + (k0 tz) * phi2`, with `phi2` the divided difference
/// `(e^(-dt/tb) - e^(-dt/ta)) / (tb - ta)` evaluated without cancellation.
#[inline]
fn basis(ta: f64, tb: f64, dt: f64) -> (f64, f64) {
    if dt <= 0.0 {
        return (0.0, 0.0);
    }
    let ea = (-dt / ta).exp();
    let eb = (-dt / tb).exp();
    let x = dt * (tb - ta) / (ta * tb);
    let dd = if x.abs() > 1.0 {
        (eb - ea) / (tb - ta)
    } else if x == 0.0 {
        ea * dt / (ta * tb)
    } else {
        ea * dt / (ta * tb) * (x.exp_m1() / x)
    };
    (1.0 - eb - ta * dd, dd)
}

/// Linear least-squares coefficients `(k0, k0 tz)` for fixed `(ta, tb, td)`.
fn project(
    step: &NormalizedStep,
    ta: f64,
    tb: f64,
    td: f64,
    phi: &mut Vec<(f64, f64)>,
) -> (f64, f64) {
    phi.clear();
    let (mut g11, mut g12, mut g22, mut b1, mut b2) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (&t, &s) in step.t.iter().zip(&step.s) {
        let (p1, p2) = basis(ta, tb, t - td);
        phi.push((p1, p2));
        g11 += p1 * p1;
        g12 += p1 * p2;
        g22 += p2 * p2;
        b1 += p1 * s;
        b2 += p2 * s;
    }
    if g11 <= 0.0 {
        return (0.0, 0.0);
    }
    let d1 = g11.sqrt();
    let d2 = g22.sqrt();
    let rho = if d2 > 0.0 { g12 / (d1 * d2) } else { 1.0 };
    let det = 1.0 - rho * rho;
    if det < 1e-13 {
        return (b1 / g11, 0.0);
    }
    let (y1, y2) = (b1 / d1, b2 / d2);
    ((y1 - rho * y2) / det / d1, (y2 - rho * y1) / det / d2)
}

fn projected_residual(
    step: &NormalizedStep,
    ta: f64,
    tb: f64,
    td: f64,
    phi: &mut Vec<(f64, f64)>,
    r: &mut [f64],
) {
    let (c1, c2) = project(step, ta, tb, td, phi);
    for i in 0..step.s.len() {
        r[i] = step.s[i] - c1 * phi[i].0 - c2 * phi[i].1;
    }
}

fn sse_of(r: &[f64]) -> f64 {
    r.iter().map(|v| v * v).sum()
}

fn model_sse(step: &NormalizedStep, g: &TransferFunction) -> f64 {
    let (k0, ta, tb, tz, td) = sopdt_params(g);
    step.t
        .iter()
        .zip(&step.s)
        .map(|(&t, &s)| {
            let e = s - sopdt_step(k0, ta, tb, tz, td, t);
            e * e
        })
        .sum()
}

/// `(k0, tau1, tau2, tz, td)` of a model with at most two poles and one zero;
/// missing poles are filled from the present one.
fn sopdt_params(g: &TransferFunction) -> (f64, f64, f64, f64, f64) {
    let tz = g.effective_zeros().next().unwrap_or(0.0);
    let (ta, tb) = match *g.poles() {
        [a, b] => (a, b),
        [a] => (a, a),
        _ => (1.0, 1.0),
    };
    (g.k0(), ta, tb, tz, g.delay())
}

struct Candidate {
    sse: f64,
    k0: f64,
    ta: f64,
    tb: f64,
    tz: f64,
    td: f64,
    interval: (f64, f64),
    iterations: usize,
}

/// Coarse grid over the pole pair at the interval midpoint, then reduced
/// damped Gauss-Newton from the two best grid points.
fn search_interval(
    step: &NormalizedStep,
    taus: &[f64],
    log_bounds: (f64, f64),
    lo: f64,
    hi: f64,
) -> Candidate {
    let n = step.len();
    let mid = 0.5 * (lo + hi);
    let mut phi = Vec::with_capacity(n);
    let mut r = vec![0.0; n];

    let mut scored: Vec<(f64, f64, f64)> = Vec::new();
    for (ia, &ta) in taus.iter().enumerate() {
        for &tb in &taus[..=ia] {
            projected_residual(step, ta, tb, mid, &mut phi, &mut r);
            scored.push((sse_of(&r), ta, tb));
        }
    }
    scored.sort_by(|a, b| a.0.total_cmp(&b.0));

    let mut best: Option<Candidate> = None;
    for &(_, ta0, tb0) in scored.iter().take(2) {
        let bounds = Bounds {
            lower: vec![log_bounds.0, log_bounds.0, lo],
            upper: vec![log_bounds.1, log_bounds.1, hi],
        };
        let out = lm::minimize(
            |p, res| {
                let mut phi = Vec::with_capacity(n);
                projected_residual(step, p[0].exp(), p[1].exp(), p[2], &mut phi, res);
            },
            &[ta0.ln(), (tb0 * 0.9).ln(), mid],
            n,
            &bounds,
            MAX_ITERATIONS,
        );
        let (ta, tb, td) = (out.params[0].exp(), out.params[1].exp(), out.params[2]);
        let (k0, m) = project(step, ta, tb, td, &mut phi);
        let tz = if k0 != 0.0 { m / k0 } else { 0.0 };
        if best.as_ref().is_none_or(|b| out.sse < b.sse) {
            best = Some(Candidate {
                sse: out.sse,
                k0,
                ta,
                tb,
                tz,
                td,
                interval: (lo, hi),
                iterations: out.iterations,
            });
        }
    }
    best.expect("grid is not empty")
}

/// Fits the two-pole, one-zero model with dead time to normalized step data.
/// Returns the best parameters found; `converged` is false if the optimizer
/// hit [`MAX_ITERATIONS`].
pub fn fit_sopdt(step: &NormalizedStep, guess: &TransferFunction) -> Result<FitResult> {
    if guess.poles().len() > 2 || guess.effective_zeros().count() > 1 || guess.poles().is_empty() {
        return Err(Error::UnsupportedStructure {
            poles: guess.poles().len(),
            zeros: guess.effective_zeros().count(),
        });
    }
    let n = step.len();
    let scale = step.s.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if scale == 0.0 {
        return Err(Error::NeverResponds);
    }

    let guess_sse = model_sse(step, guess);
    if (guess_sse / n as f64).sqrt() <= 1e-13 * scale {
        return Ok(FitResult {
            model: guess.clone(),
            residual_norm: (guess_sse / n as f64).sqrt(),
            converged: true,
            iterations: 0,
        });
    }

    let mut knots: Vec<f64> = std::iter::once(0.0)
        .chain(step.t.iter().copied().filter(|&t| t > 0.0))
        .collect();
    knots.dedup();
    if knots.len() < 2 {
        return Err(Error::validation(
            "t",
            "need at least one sample after the step",
        ));
    }
    let onset = knots
        .partition_point(|&t| t < guess.delay())
        .min(knots.len() - 2);
    let first = onset.saturating_sub(INTERVALS_BEFORE_ONSET);
    let last =
        noise_onset(step, &knots).clamp(onset, (onset + MAX_EXTRA_INTERVALS).min(knots.len() - 2));

    let min_spacing = step
        .t
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::INFINITY, f64::min);
    let span = step.t[n - 1] - knots[first];
    let tau_lo = (0.25 * min_spacing).max(1e-9);
    let tau_hi = (4.0 * span).max(4.0 * tau_lo);
    let taus: Vec<f64> = (0..GRID_POINTS)
        .map(|i| tau_lo * (tau_hi / tau_lo).powf(i as f64 / (GRID_POINTS - 1) as f64))
        .collect();
    let log_bounds = ((0.1 * tau_lo).ln(), (10.0 * tau_hi).ln());

    // Intervals are searched independently; the reduction keeps the first
    // of equal costs so the result does not depend on scheduling.
    let start = (first..=last)
        .into_par_iter()
        .map(|j| search_interval(step, &taus, log_bounds, knots[j], knots[j + 1]))
        .collect::<Vec<_>>()
        .into_iter()
        .reduce(|a, b| if b.sse < a.sse { b } else { a })
        .expect("at least one delay interval");

    let (lo, hi) = start.interval;
    let residual_full = |p: &[f64], res: &mut [f64]| {
        let (ta, tb) = (p[1].exp(), p[2].exp());
        for ((r, &s), &t) in res.iter_mut().zip(&step.s).zip(&step.t) {
            *r = s - sopdt_step(p[0], ta, tb, p[3], p[4], t);
        }
    };
    let full_bounds = Bounds {
        lower: vec![
            f64::NEG_INFINITY,
            log_bounds.0,
            log_bounds.0,
            f64::NEG_INFINITY,
            lo,
        ],
        upper: vec![f64::INFINITY, log_bounds.1, log_bounds.1, f64::INFINITY, hi],
    };
    let full = lm::minimize(
        residual_full,
        &[start.k0, start.ta.ln(), start.tb.ln(), start.tz, start.td],
        n,
        &full_bounds,
        MAX_ITERATIONS,
    );
    let mut iterations = start.iterations + full.iterations;
    let (mut sse, mut converged) = (full.sse, full.converged);
    let p = &full.params;
    let mut params = (p[0], p[1].exp(), p[2].exp(), p[3], p[4]);
    if start.sse < sse {
        params = (start.k0, start.ta, start.tb, start.tz, start.td);
        sse = start.sse;
    }

    let (ta, tb) = (params.1, params.2);
    if (ta - tb).abs() <= EQUAL_POLE_GAP * ta.max(tb) {
        let shared = (0.5 * (ta + tb)).ln();
        let equal = lm::minimize(
            |p: &[f64], res: &mut [f64]| {
                let tau = p[1].exp();
                for ((r, &s), &t) in res.iter_mut().zip(&step.s).zip(&step.t) {
                    *r = s - sopdt_step(p[0], tau, tau, p[2], p[3], t);
                }
            },
            &[params.0, shared, params.3, params.4],
            n,
            &Bounds {
                lower: vec![f64::NEG_INFINITY, log_bounds.0, f64::NEG_INFINITY, lo],
                upper: vec![f64::INFINITY, log_bounds.1, f64::INFINITY, hi],
            },
            MAX_ITERATIONS,
        );
        iterations += equal.iterations;
        if equal.sse <= sse {
            let e = &equal.params;
            params = (e[0], e[1].exp(), e[1].exp(), e[2], e[3]);
            sse = equal.sse;
            converged = equal.converged;
        }
    }

    let (k0, ta, tb, tz, td) = params;
    let model = TransferFunction::sopdt(k0, ta, tb, tz, td)?;
    Ok(FitResult {
        model,
        residual_norm: (sse / n as f64).sqrt(),
        converged,
        iterations,
    })
}
