#![allow(dead_code)]

use delta_sim::cavity::{Numerics, System};
use delta_sim::config::{RunConfig, REFERENCE_PRESET};
use delta_sim::constants::hz_to_rad;
use delta_sim::model::{
    build_liouvillian, propagate_oracle, AtomDetunings, AtomParams, DensityMatrix, FieldState, C64,
};

pub const TAU: f64 = std::f64::consts::TAU;

pub fn preset() -> RunConfig {
    RunConfig::from_json(REFERENCE_PRESET).unwrap()
}

pub fn reference_system() -> (System, Numerics) {
    let cfg = preset();
    (cfg.system().unwrap(), cfg.numerics())
}

fn lerp(u: f64, lo: f64, hi: f64) -> f64 {
    lo + u * (hi - lo)
}

fn log_lerp(u: f64, lo: f64, hi: f64) -> f64 {
    (lo.ln() + u * (hi.ln() - lo.ln())).exp()
}

/// Physical single-ion case from 14 numbers in `[0, 1)`: lifetimes,
/// temperature, detunings up to ±2π·2 MHz and drive strengths up to
/// 2π·300 kHz with arbitrary phases.
pub fn atom_case(u: &[f64; 14]) -> (AtomParams, AtomDetunings, FieldState) {
    let t1_spin = log_lerp(u[0], 1e-4, 1e-2);
    let t1_opt = log_lerp(u[1], 1e-3, 2e-2);
    let params = AtomParams {
        t1_spin,
        t2_spin: log_lerp(u[2], 2e-7, 1e-5),
        t2_opt: log_lerp(u[3], 2e-7, 1e-5),
        t1_opt,
        branching_31: u[4],
        temperature: lerp(u[5], 0.0, 10.0),
        g_mu: 1.0,
        g_s: 1.0,
        g_p: 1.0,
        ..AtomParams::default()
    };
    let det = AtomDetunings::new(
        hz_to_rad(lerp(u[6], -2e6, 2e6)),
        hz_to_rad(lerp(u[7], -2e6, 2e6)),
    );
    let fields = FieldState {
        b: C64::from_polar(hz_to_rad(log_lerp(u[8], 1e2, 3e5)), TAU * u[9]),
        a: C64::from_polar(hz_to_rad(log_lerp(u[10], 1e1, 1e5)), TAU * u[11]),
        omega_o: C64::from_polar(hz_to_rad(log_lerp(u[12], 1e3, 3e5)), TAU * u[13]),
    };
    (params, det, fields)
}

/// RK4 propagation from the thermal state to `t = 100·max(T1)`.
pub fn oracle_steady(
    params: &AtomParams,
    det: &AtomDetunings,
    fields: &FieldState,
) -> DensityMatrix {
    let l = build_liouvillian(params, det, fields).unwrap();
    let t = 100.0 * params.t1_spin.max(params.t1_opt);
    let dt = 0.05 / l.norm_inf();
    let rho0 = DensityMatrix::diagonal(1.0, 0.0, 0.0);
    propagate_oracle(&l, &rho0, t, dt).unwrap()
}

pub fn rel_diff(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}
