use nalgebra::{Matrix3, SMatrix, SVector};

use super::{DensityMatrix, Superoperator, C64};
use crate::error::{Error, Result};

/// Classic fourth-order Runge–Kutta integration of `dρ/dt = L ρ`.
///
/// Independent of the linear-algebra steady-state path; used as a
/// verification oracle. Requires `dt·‖L‖∞ < 0.1`. For the linear,
/// autonomous equation one RK4 step is the matrix
/// `P = 1 + hL + (hL)²/2 + (hL)³/6 + (hL)⁴/24`, so the `n` steps are applied
/// as `Pⁿ` by repeated squaring.
pub fn propagate_oracle(
    l: &Superoperator,
    rho0: &DensityMatrix,
    t_final: f64,
    dt: f64,
) -> Result<DensityMatrix> {
    if t_final <= 0.0 {
        return Ok(*rho0);
    }
    let stiffness = dt * l.norm_inf();
    if !(dt > 0.0) || stiffness >= 0.1 {
        return Err(Error::config(
            "dt",
            format!("dt·‖L‖ = {stiffness:.3e} must be below 0.1"),
        ));
    }
    let steps = (t_final / dt).ceil() as u64;
    let h = C64::new(t_final / steps as f64, 0.0);
    let hl = l.matrix * h;
    // Only the deviation `P − 1` is stored, so squaring keeps its precision.
    let mut term = SMatrix::<C64, 9, 9>::identity();
    let mut deviation = SMatrix::<C64, 9, 9>::zeros();
    for k in 1..=4 {
        term = term * hl / C64::new(k as f64, 0.0);
        deviation += term;
    }

    let mut v: SVector<C64, 9> = SVector::from_fn(|idx, _| rho0.matrix()[(idx / 3, idx % 3)]);
    let trace0 = v[0] + v[4] + v[8];
    let two = C64::new(2.0, 0.0);
    let mut n = steps;
    while n > 0 {
        if n & 1 == 1 {
            v += deviation * v;
        }
        n >>= 1;
        if n > 0 {
            deviation = deviation * two + deviation * deviation;
        }
    }
    let drift = (v[0] + v[4] + v[8] - trace0).norm();
    if !(drift <= 1e-6) {
        return Err(Error::StepSize { drift });
    }
    Ok(DensityMatrix::from_matrix(Matrix3::from_fn(|i, j| {
        v[3 * i + j]
    })))
}
