//! PI tuning by the SIMC rules: positive zeros are absorbed into nearby
//! poles, the half rule reduces the rest to first order plus dead time, and
//! the PI gains follow from the closed-loop time constant `tau_c`.

use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};

use crate::lti::TransferFunction;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FopdtModel {
    pub k: f64,
    pub tau1: f64,
    pub taud: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PiGains {
    pub kp: f64,
    /// Proportional gain per second.
    pub ki: f64,
    pub tau_c: f64,
}

/// Closed-loop time constant: a value in seconds or the effective delay.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TauC {
    Value(f64),
    Recommended,
}

impl Serialize for TauC {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            TauC::Value(v) => s.serialize_f64(*v),
            TauC::Recommended => s.serialize_str("recommended"),
        }
    }
}

impl<'de> Deserialize<'de> for TauC {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(TauC::Value(v)),
            Raw::Text(t) => t.parse().map_err(serde::de::Error::custom),
        }
    }
}

impl std::str::FromStr for TauC {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("recommended") {
            return Ok(TauC::Recommended);
        }
        s.parse::<f64>().map(TauC::Value).map_err(|_| {
            Error::validation(
                "tau_c",
                format!("expected seconds or \"recommended\", got {s:?}"),
            )
        })
    }
}

/// Approximation applied to `(T0 s + 1) / (tau0 s + 1)` with `theta` the
/// model delay.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ZeroCase {
    /// `T0 == tau0`: factor 1.
    ExactCancellation,
    /// `T0 >= tau0 >= theta`: factor `T0 / tau0`.
    LeadAbovePole,
    /// `T0 >= theta >= tau0`: factor `T0 / theta`.
    LeadAboveDelay,
    /// `theta >= T0 >= tau0`: factor 1.
    DelayDominant,
    /// `tau0 >= T0`: factor `T0 / tau0`.
    LagAboveLead,
}

impl fmt::Display for ZeroCase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ZeroCase::ExactCancellation => "T0 = tau0, factor 1",
            ZeroCase::LeadAbovePole => "T0 >= tau0 >= theta, factor T0/tau0",
            ZeroCase::LeadAboveDelay => "T0 >= theta >= tau0, factor T0/theta",
            ZeroCase::DelayDominant => "theta >= T0 >= tau0, factor 1",
            ZeroCase::LagAboveLead => "tau0 >= T0, factor T0/tau0",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Substitution {
    pub zero: f64,
    pub pole: f64,
    pub case: ZeroCase,
    pub factor: f64,
}

fn classify(t0: f64, tau0: f64, theta: f64) -> (ZeroCase, f64) {
    if t0 == tau0 {
        (ZeroCase::ExactCancellation, 1.0)
    } else if tau0 > t0 {
        (ZeroCase::LagAboveLead, t0 / tau0)
    } else if tau0 >= theta {
        (ZeroCase::LeadAbovePole, t0 / tau0)
    } else if t0 >= theta {
        (ZeroCase::LeadAboveDelay, t0 / theta)
    } else {
        (ZeroCase::DelayDominant, 1.0)
    }
}

/// Removes every positive zero together with one pole, largest zero first.
/// Each zero takes the smallest pole at least as large as itself, or the
/// largest remaining pole if there is none. The gain is scaled by the case
/// factor; negative zeros and the delay are kept.
pub fn cancel_positive_zeros(
    g: &TransferFunction,
) -> Result<(TransferFunction, Vec<Substitution>)> {
    let theta = g.delay();
    let mut poles = g.poles().to_vec();
    let mut kept_zeros = Vec::new();
    let mut k = g.k0();
    let mut log = Vec::new();
    for z in g.effective_zeros() {
        if z < 0.0 {
            kept_zeros.push(z);
            continue;
        }
        // Poles are sorted descending.
        let idx = match poles.iter().rposition(|&p| p >= z) {
            Some(i) => i,
            None if !poles.is_empty() => 0,
            None => {
                return Err(Error::ImproperSystem {
                    zeros: g.effective_zeros().count(),
                    poles: g.poles().len(),
                })
            }
        };
        let pole = poles.remove(idx);
        let (case, factor) = classify(z, pole, theta);
        k *= factor;
        log.push(Substitution {
            zero: z,
            pole,
            case,
            factor,
        });
    }
    Ok((TransferFunction::new(k, kept_zeros, poles, theta)?, log))
}

/// Half rule. Positive zeros must have been removed first. A model without
/// poles gives `tau1 = 0` and keeps its delay.
pub fn half_rule(g: &TransferFunction) -> Result<FopdtModel> {
    if g.effective_zeros().any(|z| z > 0.0) {
        return Err(Error::validation(
            "zeros",
            "positive zeros must be removed before the half rule",
        ));
    }
    let p = g.poles();
    let p1 = p.first().copied().unwrap_or(0.0);
    let p2 = p.get(1).copied().unwrap_or(0.0);
    let rest: f64 = p.iter().skip(2).sum();
    let neg: f64 = g.effective_zeros().map(f64::abs).sum();
    Ok(FopdtModel {
        k: g.k0(),
        tau1: p1 + p2 / 2.0,
        taud: g.delay() + p2 / 2.0 + rest + neg,
    })
}

/// SIMC PI gains. `tau_c` must exceed `-taud`.
pub fn tune_pi(m: &FopdtModel, tau_c: TauC) -> Result<PiGains> {
    if m.k == 0.0 {
        return Err(Error::ZeroGainModel);
    }
    let tau_c = match tau_c {
        TauC::Value(v) => v,
        TauC::Recommended => m.taud,
    };
    if !tau_c.is_finite() || !(tau_c + m.taud > 0.0) {
        return Err(Error::InvalidTauC {
            tau_c,
            taud: m.taud,
        });
    }
    let horizon = tau_c + m.taud;
    let kp = m.tau1 / (m.k * horizon);
    // For tau1 below 4 (tau_c + taud), kp / tau1 simplifies and stays
    // defined when tau1 = 0.
    let ki = if m.tau1 <= 4.0 * horizon {
        1.0 / (m.k * horizon)
    } else {
        kp / (4.0 * horizon)
    };
    Ok(PiGains { kp, ki, tau_c })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningReport {
    pub model: TransferFunction,
    pub substitutions: Vec<Substitution>,
    pub reduced: TransferFunction,
    pub fopdt: FopdtModel,
    /// Delay of the input model.
    pub delay_before: f64,
    /// Effective delay after the half rule.
    pub delay_after: f64,
    pub gains: PiGains,
}

/// Zero handling, half rule and PI gains in one pass.
pub fn tune_loop(g: &TransferFunction, tau_c: TauC) -> Result<TuningReport> {
    let (reduced, substitutions) = cancel_positive_zeros(g)?;
    let fopdt = half_rule(&reduced)?;
    let gains = tune_pi(&fopdt, tau_c)?;
    Ok(TuningReport {
        model: g.clone(),
        substitutions,
        reduced,
        fopdt,
        delay_before: g.delay(),
        delay_after: fopdt.taud,
        gains,
    })
}

impl TuningReport {
    /// Plain-text account of every reduction step.
    pub fn render(&self, label: &str) -> String {
        let mut s = String::new();
        let g = &self.model;
        let _ = writeln!(s, "{label}");
        let _ = writeln!(
            s,
            "  model: k0 = {}, zeros = {:?}, poles = {:?}, delay = {} s",
            g.k0(),
            g.zeros(),
            g.poles(),
            g.delay()
        );
        if self.substitutions.is_empty() {
            let _ = writeln!(s, "  no positive zeros");
        }
        for sub in &self.substitutions {
            let _ = writeln!(
                s,
                "  zero {} with pole {} (theta = {}): {} -> {}",
                sub.zero, sub.pole, self.delay_before, sub.case, sub.factor
            );
        }
        let f = &self.fopdt;
        let _ = writeln!(s, "  first order: k = {}, tau1 = {} s", f.k, f.tau1);
        let _ = writeln!(
            s,
            "  delay: {} s before reduction, {} s effective",
            self.delay_before, self.delay_after
        );
        let pi = &self.gains;
        let _ = writeln!(
            s,
            "  tau_c = {} s: kp = {}, ki = {} 1/s",
            pi.tau_c, pi.kp, pi.ki
        );
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    #[test]
    fn formula_example() {
        let m = FopdtModel {
            k: 1.0,
            tau1: 10.0,
            taud: 2.0,
        };
        assert_eq!(
            tune_pi(&m, TauC::Value(2.0)).unwrap(),
            PiGains {
                kp: 2.5,
                ki: 0.25,
                tau_c: 2.0
            }
        );
        let neg = FopdtModel { k: -1.0, ..m };
        let g = tune_pi(&neg, TauC::Value(2.0)).unwrap();
        assert_eq!((g.kp, g.ki), (-2.5, -0.25));
        assert_eq!(tune_pi(&m, TauC::Recommended).unwrap().tau_c, 2.0);
    }

    #[test]
    fn tau_c_bounds_and_zero_gain() {
        let m = FopdtModel {
            k: 1.0,
            tau1: 10.0,
            taud: 2.0,
        };
        assert!(matches!(
            tune_pi(&m, TauC::Value(-2.0)),
            Err(Error::InvalidTauC { .. })
        ));
        assert!(tune_pi(&m, TauC::Value(-1.9)).is_ok());
        assert!(matches!(
            tune_pi(&FopdtModel { k: 0.0, ..m }, TauC::Value(1.0)),
            Err(Error::ZeroGainModel)
        ));
    }

    #[test]
    fn lead_above_pole_consumes_pole() {
        let g = TransferFunction::sopdt(-20.54, 7.93, 7.93, 21.74, 0.18).unwrap();
        let (r, log) = cancel_positive_zeros(&g).unwrap();
        assert_eq!(log.len(), 1);
        assert_eq!(log[0].case, ZeroCase::LeadAbovePole);
        assert!(rel(log[0].factor, 2.741) < 1e-3);
        assert!(rel(r.k0(), -56.31) < 1e-3);
        assert_eq!(r.poles(), &[7.93]);
        assert_eq!(r.delay(), 0.18);
    }

    #[test]
    fn exact_cancellation_keeps_gain() {
        let g = TransferFunction::new(3.0, vec![5.0], vec![20.0, 5.0], 1.0).unwrap();
        let (r, log) = cancel_positive_zeros(&g).unwrap();
        assert_eq!(log[0].case, ZeroCase::ExactCancellation);
        assert_eq!(r.k0(), 3.0);
        assert_eq!(r.poles(), &[20.0]);
    }

    #[test]
    fn zero_takes_closest_larger_pole() {
        // Zero 3 pairs with 4, not with 50; theta = 1 <= T0 and tau0 > T0.
        let g = TransferFunction::new(2.0, vec![3.0], vec![50.0, 4.0, 0.5], 1.0).unwrap();
        let (r, log) = cancel_positive_zeros(&g).unwrap();
        assert_eq!((log[0].pole, log[0].case), (4.0, ZeroCase::LagAboveLead));
        assert_eq!(r.k0(), 2.0 * 3.0 / 4.0);
        assert_eq!(r.poles(), &[50.0, 0.5]);
    }

    #[test]
    fn remaining_cases() {
        assert_eq!(classify(10.0, 2.0, 5.0), (ZeroCase::LeadAboveDelay, 2.0));
        assert_eq!(classify(3.0, 2.0, 5.0), (ZeroCase::DelayDominant, 1.0));
        assert_eq!(classify(10.0, 4.0, 1.0), (ZeroCase::LeadAbovePole, 2.5));
    }

    #[test]
    fn half_rule_examples() {
        let g = TransferFunction::new(1.0, vec![], vec![19191.9, 2153.3], 162.02).unwrap();
        let m = half_rule(&g).unwrap();
        assert!((m.tau1 - 20268.55).abs() < 1e-9);
        assert!((m.taud - 1238.67).abs() < 1e-9);

        let single = half_rule(&TransferFunction::fopdt(1.0, 10.0, 2.0).unwrap()).unwrap();
        assert_eq!((single.tau1, single.taud), (10.0, 2.0));

        let h = TransferFunction::sopdt(-36.88, 969.2, 969.2, -0.38, 920.3).unwrap();
        let m = half_rule(&h).unwrap();
        assert!((m.tau1 - 1453.8).abs() < 1e-9);
        assert!((m.taud - 1405.28).abs() < 1e-9);
    }

    #[test]
    fn static_model_gets_integral_action_only() {
        let g = TransferFunction::new(2.0, vec![], vec![], 3.0).unwrap();
        let m = half_rule(&g).unwrap();
        assert_eq!((m.tau1, m.taud), (0.0, 3.0));
        let pi = tune_pi(&m, TauC::Value(1.0)).unwrap();
        assert_eq!((pi.kp, pi.ki), (0.0, 1.0 / 8.0));
    }

    #[test]
    fn grate_loop_matches_reference_gains() {
        let g = TransferFunction::sopdt(-36.88, 969.2, 969.2, -0.38, 920.3).unwrap();
        let r = tune_loop(&g, TauC::Value(-1000.0)).unwrap();
        assert!(rel(r.gains.kp, -0.097) < 0.01, "{}", r.gains.kp);
        assert!(rel(r.gains.ki, -6.7e-5) < 0.01, "{}", r.gains.ki);
        assert_eq!(r.delay_before, 920.3);
        assert!((r.delay_after - 1405.28).abs() < 1e-9);
    }

    #[test]
    fn fopdt_input_bypasses_reduction() {
        let g = TransferFunction::fopdt(1.5, 30.0, 4.0).unwrap();
        let r = tune_loop(&g, TauC::Value(4.0)).unwrap();
        let direct = tune_pi(
            &FopdtModel {
                k: 1.5,
                tau1: 30.0,
                taud: 4.0,
            },
            TauC::Value(4.0),
        )
        .unwrap();
        assert!(r.substitutions.is_empty());
        assert_eq!(r.gains, direct);
    }

    #[test]
    fn tau_c_parses() {
        assert_eq!("recommended".parse::<TauC>().unwrap(), TauC::Recommended);
        assert_eq!("12.5".parse::<TauC>().unwrap(), TauC::Value(12.5));
        assert!("fast".parse::<TauC>().is_err());
        let v: Vec<TauC> = serde_json::from_str(r#"[3, "recommended"]"#).unwrap();
        assert_eq!(v, vec![TauC::Value(3.0), TauC::Recommended]);
    }

    #[test]
    fn report_mentions_both_delays() {
        let g = TransferFunction::sopdt(103.35, 2153.3, 19191.9, 1187.8, 162.02).unwrap();
        let r = tune_loop(&g, TauC::Value(162.02)).unwrap();
        let text = r.render("F_f_K -> T_s_burn");
        assert!(text.contains("162.02 s before reduction"));
        assert!(text.contains("LagAboveLead") || text.contains("tau0 >= T0"));
    }
}
