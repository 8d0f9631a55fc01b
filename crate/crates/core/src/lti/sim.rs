//! Fixed-step RK4 simulation of a SISO transfer function with dead time.
//!
//! Inputs are held constant over each step. The dead time is split into a
//! whole number of steps, served from a circular history of past inputs, and a
//! fractional remainder: when the remainder is non-zero the step is
//! integrated in two pieces so the delayed input switches at the exact
//! instant. For piecewise-constant inputs the delay therefore adds no
//! discretization error.

use std::collections::VecDeque;

use super::{to_state_space, TimeSeries, TransferFunction};
use crate::{Error, Result};

const FRACTION_EPS: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct DelayedRealization {
    n: usize,
    a: Vec<f64>,
    b: Vec<f64>,
    c: Vec<f64>,
    d: f64,
    x: Vec<f64>,
    dt: f64,
    lag: usize,
    frac: f64,
    /// Past inputs, most recent at the back.
    history: VecDeque<f64>,
    scratch: [Vec<f64>; 5],
}

impl DelayedRealization {
    pub fn new(g: &TransferFunction, dt: f64) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::validation("dt", format!("{dt} must be positive")));
        }
        let (delay, ss) = to_state_space(g)?;
        let n = ss.states();
        let mut a = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                a.push(ss.a[(i, j)]);
            }
        }
        let steps = delay / dt;
        let mut lag = steps.floor() as usize;
        let mut frac = steps - lag as f64;
        if frac < FRACTION_EPS {
            frac = 0.0;
        } else if frac > 1.0 - FRACTION_EPS {
            lag += 1;
            frac = 0.0;
        }
        Ok(DelayedRealization {
            n,
            a,
            b: ss.b.column(0).iter().copied().collect(),
            c: ss.c.row(0).iter().copied().collect(),
            d: ss.d[(0, 0)],
            x: vec![0.0; n],
            dt,
            lag,
            frac,
            history: VecDeque::with_capacity(lag + 2),
            scratch: std::array::from_fn(|_| vec![0.0; n]),
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn state(&self) -> &[f64] {
        &self.x
    }

    /// Input applied `lag` steps ago; `u_now` for lag 0 and 0 (equilibrium)
    /// before the history starts.
    fn past_input(&self, lag: usize, u_now: f64) -> f64 {
        if lag == 0 {
            return u_now;
        }
        let len = self.history.len();
        if lag <= len {
            self.history[len - lag]
        } else {
            0.0
        }
    }

    /// Delayed input acting at `t_k + h` for `0 <= h < dt`.
    fn delayed_input_at(&self, h: f64, u_now: f64) -> f64 {
        if self.frac > 0.0 && h < self.frac * self.dt {
            self.past_input(self.lag + 1, u_now)
        } else {
            self.past_input(self.lag, u_now)
        }
    }

    fn output_from(&self, x: &[f64], v: f64) -> f64 {
        self.c.iter().zip(x).map(|(c, x)| c * x).sum::<f64>() + self.d * v
    }

    /// Output at the current step instant, given the input being applied now.
    pub fn output(&self, u_now: f64) -> f64 {
        self.output_from(&self.x, self.delayed_input_at(0.0, u_now))
    }

    /// Output at `t_k + h` without advancing the state.
    pub fn peek(&self, h: f64, u_now: f64) -> f64 {
        let h = h.clamp(0.0, self.dt);
        let mut x = self.x.clone();
        let mut scratch = self.scratch.clone();
        let split = if self.frac > 0.0 {
            self.frac * self.dt
        } else {
            0.0
        };
        if split > 0.0 {
            let first = h.min(split);
            rk4(
                self.n,
                &self.a,
                &self.b,
                &mut x,
                self.past_input(self.lag + 1, u_now),
                first,
                &mut scratch,
            );
            if h > split {
                rk4(
                    self.n,
                    &self.a,
                    &self.b,
                    &mut x,
                    self.past_input(self.lag, u_now),
                    h - split,
                    &mut scratch,
                );
            }
        } else {
            rk4(
                self.n,
                &self.a,
                &self.b,
                &mut x,
                self.past_input(self.lag, u_now),
                h,
                &mut scratch,
            );
        }
        let v = if h >= self.dt {
            self.past_input(self.lag, u_now)
        } else {
            self.delayed_input_at(h, u_now)
        };
        self.output_from(&x, v)
    }

    /// Advances one step with `u_now` held over `[t_k, t_k + dt)`.
    pub fn step(&mut self, u_now: f64) {
        if self.frac > 0.0 {
            let v_old = self.past_input(self.lag + 1, u_now);
            let v_new = self.past_input(self.lag, u_now);
            rk4(
                self.n,
                &self.a,
                &self.b,
                &mut self.x,
                v_old,
                self.frac * self.dt,
                &mut self.scratch,
            );
            rk4(
                self.n,
                &self.a,
                &self.b,
                &mut self.x,
                v_new,
                (1.0 - self.frac) * self.dt,
                &mut self.scratch,
            );
        } else {
            let v = self.past_input(self.lag, u_now);
            rk4(
                self.n,
                &self.a,
                &self.b,
                &mut self.x,
                v,
                self.dt,
                &mut self.scratch,
            );
        }
        if self.lag + 1 > 0 {
            self.history.push_back(u_now);
            while self.history.len() > self.lag + 1 {
                self.history.pop_front();
            }
        }
    }
}

/// One RK4 step of `dx/dt = A x + b v` with constant `v`.
fn rk4(n: usize, a: &[f64], b: &[f64], x: &mut [f64], v: f64, h: f64, s: &mut [Vec<f64>; 5]) {
    if n == 0 || h <= 0.0 {
        return;
    }
    let deriv = |x: &[f64], out: &mut [f64]| {
        for i in 0..n {
            let row = &a[i * n..(i + 1) * n];
            out[i] = row.iter().zip(x).map(|(a, x)| a * x).sum::<f64>() + b[i] * v;
        }
    };
    let [k1, k2, k3, k4, tmp] = s;
    deriv(x, k1);
    for i in 0..n {
        tmp[i] = x[i] + 0.5 * h * k1[i];
    }
    deriv(tmp, k2);
    for i in 0..n {
        tmp[i] = x[i] + 0.5 * h * k2[i];
    }
    deriv(tmp, k3);
    for i in 0..n {
        tmp[i] = x[i] + h * k3[i];
    }
    deriv(tmp, k4);
    for i in 0..n {
        x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
}

/// Unit-step response (step applied at t = 0) sampled at `t_grid`, integrated
/// with fixed step `dt`. Grid points between steps are reached by a partial
/// step from the preceding step instant, so the grid need not align with `dt`.
pub fn step_response_numeric(g: &TransferFunction, t_grid: &[f64], dt: f64) -> Result<TimeSeries> {
    let mut block = DelayedRealization::new(g, dt)?;
    if let Some(&fastest) = g.poles().last() {
        if dt > fastest / 10.0 {
            log::warn!("dt = {dt} s exceeds a tenth of the fastest time constant ({fastest} s)");
        }
    }
    let mut y = Vec::with_capacity(t_grid.len());
    let mut k: u64 = 0;
    for &t in t_grid {
        if t < 0.0 {
            y.push(0.0);
            continue;
        }
        while ((k + 1) as f64) * dt <= t * (1.0 + 1e-12) {
            block.step(1.0);
            k += 1;
        }
        let h = t - k as f64 * dt;
        y.push(if h <= 1e-12 * dt {
            block.output(1.0)
        } else {
            block.peek(h, 1.0)
        });
    }
    let mut ts = TimeSeries::new(t_grid.to_vec())?;
    ts.push_channel("y", y)?;
    Ok(ts)
}
