//! Reference data for the cement pyro-section case: identified models of the
//! six control loops, two PI gain sets, the stationary RGA table and the
//! fixture plant and loop configurations built from them.
//!
//! The gain sets are kept as reference values. Only the `v_grate` loop
//! follows from its model under [`crate::simc`]; the other IMC rows differ
//! by a constant factor per loop, which points to an undocumented MV/CV
//! scaling.

use std::collections::BTreeMap;

use crate::cloop::{LoopConfigDoc, LoopDoc, PlantMatrix};
use crate::lti::TransferFunction;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelRow {
    pub mv: &'static str,
    pub cv: &'static str,
    pub k0: f64,
    pub tau1: f64,
    pub tau2: f64,
    pub tau_z: f64,
    pub tau_d: f64,
}

impl ModelRow {
    pub fn model(&self) -> TransferFunction {
        TransferFunction::sopdt(self.k0, self.tau1, self.tau2, self.tau_z, self.tau_d)
            .expect("valid reference model")
    }
}

/// Identified loop models; time constants in seconds.
pub const MODELS: [ModelRow; 6] = [
    ModelRow {
        mv: "P_ph",
        cv: "X_O2_Ca",
        k0: -20.54,
        tau1: 7.93,
        tau2: 7.93,
        tau_z: 21.74,
        tau_d: 0.18,
    },
    ModelRow {
        mv: "F_f_Ca",
        cv: "X_CaO",
        k0: 0.29,
        tau1: 9.23,
        tau2: 18103.3,
        tau_z: 3663.1,
        tau_d: 0.04,
    },
    ModelRow {
        mv: "F_f_K",
        cv: "T_s_burn",
        k0: 103.35,
        tau1: 2153.3,
        tau2: 19191.9,
        tau_z: 1187.8,
        tau_d: 162.02,
    },
    ModelRow {
        mv: "F_1st",
        cv: "X_O2_K",
        k0: 0.26,
        tau1: 2.64,
        tau2: 16.4,
        tau_z: 32.07,
        tau_d: 0.024,
    },
    ModelRow {
        mv: "F_cool",
        cv: "T_clinker",
        k0: -4.75,
        tau1: 1001.1,
        tau2: 20072.9,
        tau_z: 2694.2,
        tau_d: 1073.9,
    },
    ModelRow {
        mv: "v_grate",
        cv: "h_bed",
        k0: -36.88,
        tau1: 969.2,
        tau2: 969.2,
        tau_z: -0.38,
        tau_d: 920.3,
    },
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GainRow {
    pub mv: &'static str,
    pub cv: &'static str,
    pub kp_imc: f64,
    pub kp_manual: f64,
    pub ki_imc: f64,
    pub ki_manual: f64,
    pub tau_c: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GainSet {
    Imc,
    Manual,
}

impl GainRow {
    pub fn gains(&self, set: GainSet) -> (f64, f64) {
        match set {
            GainSet::Imc => (self.kp_imc, self.ki_imc),
            GainSet::Manual => (self.kp_manual, self.ki_manual),
        }
    }
}

pub const GAINS: [GainRow; 6] = [
    GainRow {
        mv: "P_ph",
        cv: "X_O2_Ca",
        kp_imc: -0.0089,
        kp_manual: -0.01,
        ki_imc: -0.006,
        ki_manual: -0.001,
        tau_c: 0.18,
    },
    GainRow {
        mv: "F_f_Ca",
        cv: "X_CaO",
        kp_imc: 12.51,
        kp_manual: 0.005,
        ki_imc: 1.35,
        ki_manual: 0.011,
        tau_c: 10.0,
    },
    GainRow {
        mv: "F_f_K",
        cv: "T_s_burn",
        kp_imc: 0.47,
        kp_manual: 0.07,
        ki_imc: 3.6e-4,
        ki_manual: 1.4e-5,
        tau_c: 162.02,
    },
    GainRow {
        mv: "F_1st",
        cv: "X_O2_K",
        kp_imc: 0.014,
        kp_manual: 0.008,
        ki_imc: 0.0069,
        ki_manual: 0.16,
        tau_c: 0.5,
    },
    GainRow {
        mv: "F_cool",
        cv: "T_clinker",
        kp_imc: -0.32,
        kp_manual: -2.8e-4,
        ki_imc: -3.2e-4,
        ki_manual: -2.8e-4,
        tau_c: 1073.9,
    },
    GainRow {
        mv: "v_grate",
        cv: "h_bed",
        kp_imc: -0.097,
        kp_manual: -0.02,
        ki_imc: -6.7e-5,
        ki_manual: -0.0001,
        tau_c: -1000.0,
    },
];

pub const RGA_CVS: [&str; 7] = [
    "X_O2_Ca",
    "X_CaO",
    "X_O2_K",
    "T_s_burn",
    "F_clink",
    "T_clinker",
    "h_bed",
];
pub const RGA_MVS: [&str; 7] = [
    "v_grate", "P_ph", "F_feed", "F_f_Ca", "F_f_K", "F_1st", "F_cool",
];

/// Stationary relative gains, rounded; rows follow [`RGA_CVS`], columns
/// [`RGA_MVS`].
pub const RGA_TABLE: [[f64; 7]; 7] = [
    [-7e-6, 5.20, -0.08, -1.13, 1.61, -2.17, -2.43],
    [1e-5, -6.62, 1.30, 13.4, -14.4, 3.87, 3.51],
    [8e-5, -3.56, -0.02, -0.01, -4.23, 7.14, 1.69],
    [-0.01, 8.54, -1.38, -11.7, 19.4, -8.35, -5.51],
    [1e-3, -0.17, 1.04, 2e-3, 0.01, 0.04, 0.08],
    [-2e-6, -2.41, 0.18, 0.42, -1.26, 0.45, 3.61],
    [1.01, 0.02, -0.04, 0.02, -0.08, 0.02, 0.05],
];

/// (CV, MV) pairs selected from [`RGA_TABLE`] by minimum relative interaction.
pub const RGA_PAIRS: [(&str, &str); 7] = [
    ("h_bed", "v_grate"),
    ("F_clink", "F_feed"),
    ("X_O2_Ca", "F_f_K"),
    ("X_O2_K", "F_cool"),
    ("X_CaO", "F_1st"),
    ("T_s_burn", "P_ph"),
    ("T_clinker", "F_f_Ca"),
];

/// Steady state of the fixture plant: (name, value).
pub const STEADY_MVS: [(&str, f64); 6] = [
    ("P_ph", 0.05),
    ("F_f_Ca", 1.0),
    ("F_f_K", 5.0),
    ("F_1st", 1.0),
    ("F_cool", 100.0),
    ("v_grate", 0.05),
];
pub const STEADY_CVS: [(&str, f64); 6] = [
    ("X_O2_Ca", 0.03),
    ("X_CaO", 0.9),
    ("T_s_burn", 1700.0),
    ("X_O2_K", 0.03),
    ("T_clinker", 400.0),
    ("h_bed", 0.6),
];

/// Relative setpoint step applied to each loop in the fixture schedule.
pub const SETPOINT_STEP: f64 = 0.01;
/// Time between consecutive setpoint steps, the first at one period.
pub const SETPOINT_STAGGER: f64 = 3600.0;
pub const FIXTURE_DT: f64 = 1.0;
pub const FIXTURE_HORIZON: f64 = 50.0 * 3600.0;
pub const FIXTURE_RECORD_EVERY: usize = 10;

/// Diagonal plant of the six loop models around [`STEADY_MVS`] and
/// [`STEADY_CVS`].
pub fn reference_plant() -> PlantMatrix {
    PlantMatrix::diagonal(
        MODELS.iter().map(|r| r.cv.to_string()).collect(),
        MODELS.iter().map(|r| r.mv.to_string()).collect(),
        MODELS.iter().map(ModelRow::model).collect(),
        STEADY_MVS.iter().map(|r| r.1).collect(),
        STEADY_CVS.iter().map(|r| r.1).collect(),
    )
    .expect("valid reference plant")
}

/// Setpoint time of loop `i` in the staggered schedule.
pub fn setpoint_time(i: usize) -> f64 {
    (i + 1) as f64 * SETPOINT_STAGGER
}

/// All six loops with the chosen gain set, default limits, and a `+1 %`
/// setpoint step on each CV at staggered times.
pub fn reference_loops(set: GainSet) -> LoopConfigDoc {
    let loops = GAINS
        .iter()
        .map(|g| {
            let (kp, ki) = g.gains(set);
            LoopDoc {
                cv: g.cv.to_string(),
                mv: g.mv.to_string(),
                kp,
                ki,
                u_min: None,
                u_max: None,
            }
        })
        .collect();
    let setpoints: BTreeMap<String, Vec<(f64, f64)>> = STEADY_CVS
        .iter()
        .enumerate()
        .map(|(i, &(cv, z))| {
            (
                cv.to_string(),
                vec![(setpoint_time(i), z * (1.0 + SETPOINT_STEP))],
            )
        })
        .collect();
    LoopConfigDoc {
        dt: FIXTURE_DT,
        horizon: FIXTURE_HORIZON,
        record_every: FIXTURE_RECORD_EVERY,
        loops,
        setpoints,
        disturbances: BTreeMap::new(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tables_are_consistent() {
        for (m, g) in MODELS.iter().zip(&GAINS) {
            assert_eq!((m.mv, m.cv), (g.mv, g.cv));
            assert!(m.k0.signum() == g.kp_imc.signum() && m.k0.signum() == g.kp_manual.signum());
        }
        for (cv, mv) in RGA_PAIRS {
            assert!(RGA_CVS.contains(&cv) && RGA_MVS.contains(&mv));
        }
        for (i, (name, _)) in STEADY_CVS.iter().enumerate() {
            assert_eq!(*name, MODELS[i].cv);
            assert_eq!(STEADY_MVS[i].0, MODELS[i].mv);
        }
    }

    #[test]
    fn fixture_config_resolves() {
        let plant = reference_plant();
        let cfg = reference_loops(GainSet::Imc).resolve(&plant).unwrap();
        assert_eq!(cfg.loops.len(), 6);
        assert!(cfg.loops.iter().all(|l| l.cv == l.mv));
        assert_eq!(cfg.loops[2].controller.u_max, 10.0);
    }
}
