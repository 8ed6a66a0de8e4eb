//! Three degree-of-freedom surface vessel: discretized maneuvering regressors,
//! reference parameter sets and planar kinematics.
//!
//! State ordering is `nu = [u, v, r]` (surge, sway, yaw rate) and the stacked
//! regressor argument is `[u, v, r, tau_1, tau_2, tau_3]`. Hydrodynamic terms
//! act on the velocity relative to the current, wind terms on the velocity
//! relative to the air.

use std::sync::OnceLock;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::som::{
    BlockDisturbance, ModelBlock, ModelStructure, OffsetGain, RegressorSpec, TermKind,
};

pub const N_PARAMS: usize = 17;

/// Parameter names in the order of the parameter vector.
pub const PARAM_NAMES: [&str; N_PARAMS] = [
    "X_u", "X_vr", "X_|u|u", "W_|u|u", "X_tau", "Y_v", "Y_ur", "Y_|v|v", "Y_|v|r", "W_|v|v",
    "Y_tau", "N_r", "N_uv", "N_|v|v", "N_|v|r", "W_uv", "N_tau",
];

/// Slots of the wind (aerodynamic) parameters.
pub const WIND_PARAMS: [usize; 3] = [3, 9, 15];

/// Slots of the hydrodynamic and input parameters.
pub const HYDRO_PARAMS: [usize; 14] = [0, 1, 2, 4, 5, 6, 7, 8, 10, 11, 12, 13, 14, 16];

/// Coefficients of the unit-sample discretized maneuvering model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShipParams {
    #[serde(rename = "X_u")]
    pub x_u: f64,
    #[serde(rename = "X_vr")]
    pub x_vr: f64,
    #[serde(rename = "X_|u|u")]
    pub x_uu: f64,
    #[serde(rename = "W_|u|u")]
    pub w_uu: f64,
    #[serde(rename = "X_tau")]
    pub x_tau: f64,
    #[serde(rename = "Y_v")]
    pub y_v: f64,
    #[serde(rename = "Y_ur")]
    pub y_ur: f64,
    #[serde(rename = "Y_|v|v")]
    pub y_vv: f64,
    #[serde(rename = "Y_|v|r")]
    pub y_vr: f64,
    #[serde(rename = "W_|v|v")]
    pub w_vv: f64,
    #[serde(rename = "Y_tau")]
    pub y_tau: f64,
    #[serde(rename = "N_r")]
    pub n_r: f64,
    #[serde(rename = "N_uv")]
    pub n_uv: f64,
    #[serde(rename = "N_|v|v")]
    pub n_vv: f64,
    #[serde(rename = "N_|v|r")]
    pub n_vr: f64,
    #[serde(rename = "W_uv")]
    pub w_uv: f64,
    #[serde(rename = "N_tau")]
    pub n_tau: f64,
}

impl ShipParams {
    /// Parameters of the simulated "true" vessel.
    pub const TRUE: ShipParams = ShipParams {
        x_u: -0.05,
        x_vr: 1.0,
        x_uu: -0.05,
        w_uu: -0.0005,
        x_tau: 0.02,
        y_v: -0.2,
        y_ur: -0.65,
        y_vv: -0.2,
        y_vr: -0.1,
        w_vv: -0.0015,
        y_tau: 0.02,
        n_r: -0.1,
        n_uv: -0.0015,
        n_vv: -0.001,
        n_vr: -0.04,
        w_uv: -0.00003,
        n_tau: 0.0003,
    };

    /// Crude nominal model used to start the instrument iteration.
    pub const NOMINAL: ShipParams = ShipParams {
        x_u: -0.2,
        x_vr: 0.8,
        x_uu: 0.0,
        w_uu: 0.0,
        x_tau: 0.01,
        y_v: -0.3,
        y_ur: -0.8,
        y_vv: 0.0,
        y_vr: 0.0,
        w_vv: 0.0,
        y_tau: 0.01,
        n_r: -0.15,
        n_uv: 0.0,
        n_vv: 0.0,
        n_vr: 0.0,
        w_uv: 0.0,
        n_tau: 0.00015,
    };

    pub fn preset(name: &str) -> Option<ShipParams> {
        match name {
            "true" => Some(Self::TRUE),
            "nominal" => Some(Self::NOMINAL),
            _ => None,
        }
    }

    pub fn to_vec(&self) -> Vec<f64> {
        vec![
            self.x_u, self.x_vr, self.x_uu, self.w_uu, self.x_tau, self.y_v, self.y_ur, self.y_vv,
            self.y_vr, self.w_vv, self.y_tau, self.n_r, self.n_uv, self.n_vv, self.n_vr, self.w_uv,
            self.n_tau,
        ]
    }

    pub fn from_slice(theta: &[f64]) -> Result<Self> {
        if theta.len() != N_PARAMS {
            return Err(Error::DimensionMismatch {
                axis: "ship parameter vector",
                expected: N_PARAMS,
                found: theta.len(),
            });
        }
        Ok(Self {
            x_u: theta[0],
            x_vr: theta[1],
            x_uu: theta[2],
            w_uu: theta[3],
            x_tau: theta[4],
            y_v: theta[5],
            y_ur: theta[6],
            y_vv: theta[7],
            y_vr: theta[8],
            w_vv: theta[9],
            y_tau: theta[10],
            n_r: theta[11],
            n_uv: theta[12],
            n_vv: theta[13],
            n_vr: theta[14],
            w_uv: theta[15],
            n_tau: theta[16],
        })
    }

    /// Names of damping coefficients that are positive (energy-injecting).
    pub fn non_dissipative(&self) -> Vec<&'static str> {
        let v = self.to_vec();
        [0usize, 2, 3, 5, 7, 9, 11, 13]
            .into_iter()
            .filter(|&i| v[i] > 0.0)
            .map(|i| PARAM_NAMES[i])
            .collect()
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let p: ShipParams = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        for name in p.non_dissipative() {
            log::warn!("damping coefficient {name} is positive");
        }
        Ok(p)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("parameters serialize")
    }
}

/// Body-frame velocities and inertial pose.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct VesselState {
    /// `[u, v, r]`.
    pub nu: Vector3<f64>,
    /// `[x, y, psi]`, heading kept unwrapped.
    pub eta: Vector3<f64>,
}

impl VesselState {
    pub fn heading(&self) -> f64 {
        self.eta[2]
    }
}

/// Inertial-frame current and wind, north/south and east/west components.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct WorldDisturbance {
    pub current_ns: f64,
    pub current_ew: f64,
    pub wind_ns: f64,
    pub wind_ew: f64,
}

fn check_heading(psi: f64) -> Result<()> {
    if psi.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite {
            what: "heading",
            step: 0,
        })
    }
}

/// Rotation from body to inertial frame about the vertical axis.
pub fn rotation(psi: f64) -> Result<Matrix3<f64>> {
    check_heading(psi)?;
    Ok(rotation_unchecked(psi))
}

/// Inertial to body frame, the transpose of [`rotation`].
pub fn rotation_inv(psi: f64) -> Result<Matrix3<f64>> {
    check_heading(psi)?;
    Ok(rotation_unchecked(psi).transpose())
}

#[inline]
pub(crate) fn rotation_unchecked(psi: f64) -> Matrix3<f64> {
    let (s, c) = psi.sin_cos();
    Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

/// Current and wind expressed in the body frame: `(nu_c, nu_w)`.
pub fn body_disturbance(psi: f64, w: &WorldDisturbance) -> (Vector3<f64>, Vector3<f64>) {
    let jinv = rotation_unchecked(psi).transpose();
    (
        jinv * Vector3::new(w.current_ns, w.current_ew, 0.0),
        jinv * Vector3::new(w.wind_ns, w.wind_ew, 0.0),
    )
}

/// The two regressor blocks of the vessel and their parameter slots.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShipRegressors {
    /// Terms on the current-relative velocity and the input, 14 rows.
    pub hydro: RegressorSpec,
    /// Terms on the wind-relative velocity, 3 rows.
    pub wind: RegressorSpec,
    pub hydro_params: Vec<usize>,
    pub wind_params: Vec<usize>,
}

pub fn ship_regressor_spec() -> ShipRegressors {
    use TermKind::{Cross, CrossAbs, Linear, Zero};
    let z = Zero;
    // stacked index: 1 u, 2 v, 3 r, 4..6 tau
    let full: [[TermKind; 3]; N_PARAMS] = [
        [Linear(1), z, z],      // X_u
        [Cross(2, 3), z, z],    // X_vr
        [CrossAbs(1, 1), z, z], // X_|u|u
        [CrossAbs(1, 1), z, z], // W_|u|u
        [Linear(4), z, z],      // X_tau
        [z, Linear(2), z],      // Y_v
        [z, Cross(1, 3), z],    // Y_ur
        [z, CrossAbs(2, 2), z], // Y_|v|v
        [z, CrossAbs(3, 2), z], // Y_|v|r
        [z, CrossAbs(2, 2), z], // W_|v|v
        [z, Linear(5), z],      // Y_tau
        [z, z, Linear(3)],      // N_r
        [z, z, Cross(1, 2)],    // N_uv
        [z, z, CrossAbs(2, 2)], // N_|v|v
        [z, z, CrossAbs(3, 2)], // N_|v|r
        [z, z, Cross(1, 2)],    // W_uv
        [z, z, Linear(6)],      // N_tau
    ];
    let rows = |slots: &[usize]| slots.iter().map(|&p| full[p].to_vec()).collect::<Vec<_>>();
    ShipRegressors {
        hydro: RegressorSpec::new(3, 3, 3, rows(&HYDRO_PARAMS)).expect("static spec"),
        wind: RegressorSpec::new(3, 3, 3, rows(&WIND_PARAMS)).expect("static spec"),
        hydro_params: HYDRO_PARAMS.to_vec(),
        wind_params: WIND_PARAMS.to_vec(),
    }
}

/// Vessel model structure: hydrodynamic block offset by the (unmeasured)
/// current, wind block offset by the (measured) wind, both through the
/// heading rotation on surge and sway.
pub fn ship_structure() -> &'static ModelStructure {
    static STRUCTURE: OnceLock<ModelStructure> = OnceLock::new();
    STRUCTURE.get_or_init(|| {
        let r = ship_regressor_spec();
        ModelStructure::new(
            PARAM_NAMES.iter().map(|s| s.to_string()).collect(),
            vec![
                ModelBlock {
                    label: "hydrodynamic".into(),
                    spec: r.hydro,
                    params: r.hydro_params,
                    disturbance: BlockDisturbance::Unmeasured,
                },
                ModelBlock {
                    label: "wind".into(),
                    spec: r.wind,
                    params: r.wind_params,
                    disturbance: BlockDisturbance::Measured,
                },
            ],
            OffsetGain::PlanarRotation { states: [1, 2] },
            true,
        )
        .expect("static vessel structure")
    })
}

/// Velocity increment `Phi^T(nu_r, nu_q, tau) theta` for one sample.
pub fn velocity_increment(
    theta: &[f64],
    nu_r: &Vector3<f64>,
    nu_q: &Vector3<f64>,
    tau: &[f64; 3],
) -> Vector3<f64> {
    let s = ship_structure();
    let zero = [0.0; 3];
    // offsets relative to nu = 0 so that step() returns the pure increment
    let hydro: [f64; 3] = (*nu_r).into();
    let wind: [f64; 3] = (*nu_q).into();
    let inc = s.step(theta, &zero, tau, &[&hydro, &wind]);
    Vector3::new(inc[0], inc[1], inc[2])
}
