//! Classical cavity modes and the self-consistent field solve.
//!
//! Every κ is an energy (photon-number) decay rate in rad/s: the amplitude
//! decays at κ/2 and a port carries `κ_port·|amp|²` photons per second.

use nalgebra::{Matrix4, Vector4};
use serde::{Deserialize, Serialize};

use crate::constants::PLANCK;
use crate::ensemble::{
    build_detuning_grid_at, ensemble_response_with_jacobian, DetuningGrid, EnsembleResponse,
    InhomogeneousSpec,
};
use crate::error::{Error, Result};
use crate::model::{AtomParams, FieldState, C64};

/// Amplitudes beyond this magnitude abort the solve as divergent.
pub const DIVERGENCE_LIMIT: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CavityParams {
    pub kappa1: f64,
    pub kappa2: f64,
    pub kappai: f64,
    /// Detuning of the mode from its drive or signal frequency.
    pub delta_c: f64,
}

impl CavityParams {
    pub fn kappa_total(&self) -> f64 {
        self.kappa1 + self.kappa2 + self.kappai
    }

    pub fn validate(&self, name: &str) -> Result<()> {
        for (field, k) in [
            ("kappa1", self.kappa1),
            ("kappa2", self.kappa2),
            ("kappai", self.kappai),
        ] {
            if !(k.is_finite() && k >= 0.0) {
                return Err(Error::config(
                    format!("{name}.{field}"),
                    format!("must be >= 0 rad/s (got {k})"),
                ));
            }
        }
        if !(self.kappa_total() > 0.0) {
            return Err(Error::config(
                format!("{name}.kappa1"),
                "total loss kappa1 + kappa2 + kappai must be > 0",
            ));
        }
        if !self.delta_c.is_finite() {
            return Err(Error::config(format!("{name}.delta_c"), "must be finite"));
        }
        Ok(())
    }

    /// Same cavity with the input port matched to all other losses,
    /// `κ1 = κ2 + κi`.
    pub fn impedance_matched(&self) -> Self {
        CavityParams {
            kappa1: self.kappa2 + self.kappai,
            ..*self
        }
    }

    fn response_denominator(&self) -> C64 {
        C64::new(0.5 * self.kappa_total(), self.delta_c)
    }
}

pub fn dbm_to_watts(p_dbm: f64) -> f64 {
    10f64.powf((p_dbm - 30.0) / 10.0)
}

/// Photons per second carried by power `p` (W) at frequency `f` (Hz).
pub fn input_photon_flux(p: f64, f: f64) -> f64 {
    p / (PLANCK * f)
}

/// Pump Rabi frequency from the resonant empty-cavity buildup
/// `n_p = 4 κ1 Φ_in / κ²`, `Ω = g_p √n_p`.
pub fn pump_rabi(p_opt: f64, opt_cavity: &CavityParams, g_p: f64, f_opt: f64) -> C64 {
    let flux = input_photon_flux(p_opt, f_opt);
    let kappa = opt_cavity.kappa_total();
    let n_p = 4.0 * opt_cavity.kappa1 * flux / (kappa * kappa);
    C64::new(g_p * n_p.sqrt(), 0.0)
}

/// Steady state of `ȧ = −(iΔ + κ/2) a + √κ1 a_in − i·pol`.
pub fn cavity_steady_amplitude(cav: &CavityParams, drive_amp: C64, pol: C64) -> C64 {
    (drive_amp * cav.kappa1.sqrt() - C64::new(0.0, 1.0) * pol) / cav.response_denominator()
}

/// Empty-cavity field reflection at port 1, `r(δ) = 1 − κ1/(iδ + κ/2)`.
pub fn reflection_coefficient(cav: &CavityParams, delta: f64) -> C64 {
    C64::new(1.0, 0.0) - cav.kappa1 / C64::new(0.5 * cav.kappa_total(), delta)
}

/// Drive settings. Powers in dBm (microwave) and W (pump), frequencies in
/// Hz, operating detunings from the inhomogeneous line centers in rad/s.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriveInputs {
    pub p_mw_dbm: f64,
    pub p_opt: f64,
    pub f_mw: f64,
    pub f_opt: f64,
    pub delta_o: f64,
    pub delta_mu: f64,
}

impl DriveInputs {
    pub fn validate(&self) -> Result<()> {
        if !(self.p_opt.is_finite() && self.p_opt >= 0.0) {
            return Err(Error::config(
                "p_opt",
                format!("must be >= 0 W (got {})", self.p_opt),
            ));
        }
        for (name, f) in [("f_mw", self.f_mw), ("f_opt", self.f_opt)] {
            if !(f.is_finite() && f > 0.0) {
                return Err(Error::config(name, format!("must be > 0 Hz (got {f})")));
            }
        }
        if self.p_mw_dbm.is_nan() || self.p_mw_dbm == f64::INFINITY {
            return Err(Error::config(
                "p_mw_dbm",
                "must be a finite dBm value or -inf",
            ));
        }
        Ok(())
    }

    /// Input microwave photon flux.
    pub fn microwave_flux(&self) -> f64 {
        input_photon_flux(dbm_to_watts(self.p_mw_dbm), self.f_mw)
    }
}

/// Cavity update rule inside the fixed-point loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum UpdateMethod {
    /// Plain substitution: the target is the cavity response to the current
    /// polarizations.
    Picard,
    /// The target is the Newton iterate of `x − T(x) = 0` built from the
    /// polarization Jacobian. Same fixed points as `Picard`; converges
    /// when the ensemble loss exceeds the cavity loss, where substitution
    /// oscillates and diverges.
    #[default]
    Newton,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Numerics {
    pub damping: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub method: UpdateMethod,
}

impl Default for Numerics {
    fn default() -> Self {
        Numerics {
            damping: 0.5,
            tol: 1e-10,
            max_iter: 10_000,
            method: UpdateMethod::Newton,
        }
    }
}

impl Numerics {
    pub fn validate(&self) -> Result<()> {
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(Error::config(
                "damping",
                format!("must lie in (0, 1] (got {})", self.damping),
            ));
        }
        if !(self.tol > 0.0) {
            return Err(Error::config(
                "tol",
                format!("must be > 0 (got {})", self.tol),
            ));
        }
        if self.max_iter == 0 {
            return Err(Error::config("max_iter", "must be >= 1"));
        }
        Ok(())
    }
}

/// Everything needed for one operating point.
#[derive(Debug, Clone, PartialEq)]
pub struct System {
    pub atom: AtomParams,
    pub inhomogeneous: InhomogeneousSpec,
    pub n_eff: f64,
    pub microwave: CavityParams,
    pub optical: CavityParams,
    pub drive: DriveInputs,
}

impl System {
    pub fn validate(&self) -> Result<()> {
        self.atom.validate()?;
        self.inhomogeneous.validate()?;
        self.microwave.validate("microwave")?;
        self.optical.validate("optical")?;
        self.drive.validate()
    }

    pub fn grid(&self) -> Result<DetuningGrid> {
        build_detuning_grid_at(
            &self.inhomogeneous,
            self.n_eff,
            self.drive.delta_o,
            self.drive.delta_mu,
        )
    }

    pub fn pump(&self) -> C64 {
        pump_rabi(
            self.drive.p_opt,
            &self.optical,
            self.atom.g_p,
            self.drive.f_opt,
        )
    }

    /// Microwave mode driven by the input alone.
    pub fn empty_cavity_fields(&self) -> FieldState {
        let b_in = C64::new(self.drive.microwave_flux().sqrt(), 0.0);
        FieldState {
            a: C64::new(0.0, 0.0),
            b: cavity_steady_amplitude(&self.microwave, b_in, C64::new(0.0, 0.0)),
            omega_o: self.pump(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SteadyStateSolution {
    pub fields: FieldState,
    pub response: EnsembleResponse,
    pub grid: DetuningGrid,
    pub eta: f64,
    pub iterations: usize,
    pub residual: f64,
}

/// Photon-number efficiency `κ1,o |a|² / Φ_mw,in`.
pub fn conversion_efficiency(
    fields: &FieldState,
    opt_cavity: &CavityParams,
    drive: &DriveInputs,
) -> Result<f64> {
    let flux = drive.microwave_flux();
    if !(flux > 0.0) {
        return Err(Error::Undefined(
            "conversion efficiency with zero microwave input flux",
        ));
    }
    Ok(opt_cavity.kappa1 * fields.a.norm_sqr() / flux)
}

fn pack(f: &FieldState) -> Vector4<f64> {
    Vector4::new(f.b.re, f.b.im, f.a.re, f.a.im)
}

fn unpack(x: &Vector4<f64>, omega_o: C64) -> FieldState {
    FieldState {
        b: C64::new(x[0], x[1]),
        a: C64::new(x[2], x[3]),
        omega_o,
    }
}

fn relative_change(new: C64, old: C64) -> f64 {
    let delta = (new - old).norm();
    if delta == 0.0 {
        0.0
    } else {
        delta / new.norm().max(old.norm())
    }
}

/// Field-wise relative size of a Newton correction.
fn correction_norm(step: &Vector4<f64>, scale: [f64; 2]) -> f64 {
    let mut norm: f64 = 0.0;
    for (i, k) in [0, 2].into_iter().enumerate() {
        if scale[i] > 0.0 {
            norm = norm.max(step[k].hypot(step[k + 1]) / scale[i]);
        }
    }
    norm
}

/// Alternates ensemble steady states and cavity updates until the fields
/// stop changing: `x ← (1−α) x + α x_target`.
///
/// Starts from the empty-cavity microwave field, no signal, and thermal
/// atoms, so every operating point is solved from identical conditions.
/// With the Newton target the step is further halved (down to α/64) until
/// the simplified correction `J(x)⁻¹ F(x_trial)` is smaller than the full
/// one. Convergence is declared when the undamped update is below `tol`
/// relative to the fields.
pub fn fixed_point_solve(system: &System, numerics: &Numerics) -> Result<SteadyStateSolution> {
    system.validate()?;
    numerics.validate()?;
    let grid = system.grid()?;
    let b_in = C64::new(system.drive.microwave_flux().sqrt(), 0.0);
    let den_b = system.microwave.response_denominator();
    let den_a = system.optical.response_denominator();
    let minus_i = C64::new(0.0, -1.0);
    let omega_o = system.pump();
    let newton = numerics.method == UpdateMethod::Newton;

    let evaluate = |x: &Vector4<f64>| -> Result<(EnsembleResponse, Vector4<f64>)> {
        let fields = unpack(x, omega_o);
        let response = if newton {
            ensemble_response_with_jacobian(&grid, &system.atom, &fields)?
        } else {
            crate::ensemble::ensemble_response(&grid, &system.atom, &fields)?
        };
        let b = cavity_steady_amplitude(&system.microwave, b_in, response.pol_mu);
        let a = cavity_steady_amplitude(&system.optical, C64::new(0.0, 0.0), response.pol_s);
        Ok((response, Vector4::new(b.re, b.im, a.re, a.im)))
    };

    let mut x = pack(&system.empty_cavity_fields());
    let (mut response, mut mapped) = evaluate(&x)?;
    let mut residual = f64::INFINITY;
    for iteration in 1..=numerics.max_iter {
        let lu = match (&response.jacobian, newton) {
            (Some(jac), true) => {
                let mut j_f = Matrix4::identity();
                for k in 0..4 {
                    let db = minus_i * jac.d_pol_mu[k] / den_b;
                    let da = minus_i * jac.d_pol_s[k] / den_a;
                    j_f[(0, k)] -= db.re;
                    j_f[(1, k)] -= db.im;
                    j_f[(2, k)] -= da.re;
                    j_f[(3, k)] -= da.im;
                }
                Some(j_f.lu())
            }
            _ => None,
        };
        let newton_step = lu.as_ref().and_then(|lu| lu.solve(&(mapped - x)));
        let target = newton_step.map_or(mapped, |step| x + step);
        let (now, aim) = (unpack(&x, omega_o), unpack(&target, omega_o));
        residual = relative_change(aim.b, now.b).max(relative_change(aim.a, now.a));
        if residual < numerics.tol {
            let fields = now;
            let eta = conversion_efficiency(&fields, &system.optical, &system.drive).unwrap_or(0.0);
            return Ok(SteadyStateSolution {
                fields,
                response,
                grid,
                eta,
                iterations: iteration,
                residual,
            });
        }

        let scale = [
            now.b.norm().max(aim.b.norm()),
            now.a.norm().max(aim.a.norm()),
        ];
        let full = newton_step.map(|step| correction_norm(&step, scale));
        let mut alpha = numerics.damping;
        loop {
            let trial = x * (1.0 - alpha) + target * alpha;
            for (name, k) in [("b", 0), ("a", 2)] {
                let magnitude = trial[k].hypot(trial[k + 1]);
                if !(magnitude <= DIVERGENCE_LIMIT) {
                    return Err(Error::Divergence {
                        field: name,
                        magnitude,
                        iteration,
                    });
                }
            }
            let (trial_response, trial_mapped) = evaluate(&trial)?;
            let accept = match (&lu, full) {
                (Some(lu), Some(full)) if alpha > numerics.damping / 64.0 => {
                    lu.solve(&(trial_mapped - trial)).is_some_and(|simplified| {
                        correction_norm(&simplified, scale) <= (1.0 - alpha / 4.0) * full
                    })
                }
                _ => true,
            };
            if accept {
                x = trial;
                response = trial_response;
                mapped = trial_mapped;
                break;
            }
            alpha *= 0.5;
        }
    }
    Err(Error::NonConvergence {
        iterations: numerics.max_iter,
        residual,
    })
}
