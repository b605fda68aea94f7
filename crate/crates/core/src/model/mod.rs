//! Single-ion physics for a three-level Δ-system.
//!
//! Levels are `|1⟩` (lower spin state), `|2⟩` (upper spin state, microwave
//! transition to `|1⟩`) and `|3⟩` (optically excited state). In the frame
//! where the drives are time independent the Hamiltonian is
//!
//! ```text
//! H = δμ σ22 + δs σ33 + (Ω σ32 + gs a σ31 + gμ b σ21 + h.c.),   δs = δo + δμ
//! ```
//!
//! with `σij = |i⟩⟨j|`, and all rates in rad/s.

mod density;
mod liouvillian;
mod propagate;
mod steady;

pub use density::DensityMatrix;
pub use liouvillian::{build_liouvillian, hamiltonian, BlochGenerators, Superoperator, BLOCH_DIM};
pub use propagate::propagate_oracle;
pub use steady::{steady_state_atom, thermal_state, BlochSolver, BlochState};

use num_complex::Complex64;

use crate::constants::boltzmann_exponent;
use crate::error::{Error, Result};

pub type C64 = Complex64;

/// Parameters of one ion class. Times in seconds, couplings in rad/s.
#[derive(Debug, Clone, PartialEq)]
pub struct AtomParams {
    /// Spin (`|1⟩↔|2⟩`) transition frequency, Hz.
    pub f_mu: f64,
    /// Pump (`|2⟩↔|3⟩`) optical transition frequency, Hz.
    pub f_opt: f64,
    pub t1_spin: f64,
    pub t2_spin: f64,
    pub t2_opt: f64,
    pub t1_opt: f64,
    /// Fraction of `|3⟩` decay that lands in `|1⟩`.
    pub branching_31: f64,
    pub g_mu: f64,
    pub g_s: f64,
    pub g_p: f64,
    /// Bath temperature, K.
    pub temperature: f64,
    /// Thermal re-excitation `|1⟩→|2⟩` in detailed balance with the `|2⟩→|1⟩` decay.
    pub thermal_spin_bath: bool,
}

impl Default for AtomParams {
    fn default() -> Self {
        AtomParams {
            f_mu: 5.186e9,
            f_opt: 195_113.30e9,
            t1_spin: 1e-3,
            t2_spin: 1e-6,
            t2_opt: 1e-6,
            t1_opt: 11e-3,
            branching_31: 0.5,
            g_mu: 0.0,
            g_s: 0.0,
            g_p: 0.0,
            temperature: 4.6,
            thermal_spin_bath: true,
        }
    }
}

/// Decay and dephasing rates derived from [`AtomParams`], all in 1/s.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rates {
    /// `|2⟩→|1⟩`.
    pub spin_down: f64,
    /// `|1⟩→|2⟩`, zero without thermal bath.
    pub spin_up: f64,
    /// `|3⟩→|1⟩`.
    pub opt_to_1: f64,
    /// `|3⟩→|2⟩`.
    pub opt_to_2: f64,
    /// Pure dephasing of `|2⟩`.
    pub dephase_2: f64,
    /// Pure dephasing of `|3⟩`.
    pub dephase_3: f64,
}

impl Rates {
    /// Total amplitude decay rate of ρ21.
    pub fn gamma_21(&self) -> f64 {
        0.5 * (self.spin_down + self.spin_up) + self.dephase_2
    }

    /// Total amplitude decay rate of ρ31.
    pub fn gamma_31(&self) -> f64 {
        0.5 * (self.opt_to_1 + self.opt_to_2 + self.spin_up) + self.dephase_3
    }

    /// Total amplitude decay rate of ρ32.
    pub fn gamma_32(&self) -> f64 {
        0.5 * (self.opt_to_1 + self.opt_to_2 + self.spin_down) + self.dephase_2 + self.dephase_3
    }
}

fn positive(field: &str, value: f64, unit: &str) -> Result<()> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(Error::config(
            field,
            format!("must be a positive number of {unit} (got {value})"),
        ))
    }
}

impl AtomParams {
    pub fn validate(&self) -> Result<()> {
        positive("f_mu", self.f_mu, "Hz")?;
        positive("f_opt", self.f_opt, "Hz")?;
        positive("T1_spin", self.t1_spin, "s")?;
        positive("T2_spin", self.t2_spin, "s")?;
        positive("T2_opt", self.t2_opt, "s")?;
        positive("T1_opt", self.t1_opt, "s")?;
        if !(0.0..=1.0).contains(&self.branching_31) {
            return Err(Error::config(
                "branching_31",
                format!("must lie in [0, 1] (got {})", self.branching_31),
            ));
        }
        for (name, g) in [("g_mu", self.g_mu), ("g_s", self.g_s), ("g_p", self.g_p)] {
            if !g.is_finite() || g < 0.0 {
                return Err(Error::config(
                    name,
                    format!("must be a non-negative coupling in rad/s (got {g})"),
                ));
            }
        }
        if !(self.temperature >= 0.0) {
            return Err(Error::config(
                "temperature",
                format!("must be >= 0 K (got {})", self.temperature),
            ));
        }
        self.rates().map(|_| ())
    }

    /// Ratio `p2/p1` of the undriven spin populations.
    pub fn boltzmann_ratio(&self) -> f64 {
        (-boltzmann_exponent(self.f_mu, self.temperature)).exp()
    }

    /// Lindblad rates. Fails when a T2 is too short to be explained by
    /// population decay alone, i.e. an implied pure dephasing would be negative.
    pub fn rates(&self) -> Result<Rates> {
        let spin_down = 1.0 / self.t1_spin;
        let spin_up = if self.thermal_spin_bath {
            spin_down * self.boltzmann_ratio()
        } else {
            0.0
        };
        let opt = 1.0 / self.t1_opt;
        let opt_to_1 = self.branching_31 * opt;
        let opt_to_2 = opt - opt_to_1;
        let dephase_2 = 1.0 / self.t2_spin - 0.5 * (spin_down + spin_up);
        let dephase_3 = 1.0 / self.t2_opt - 0.5 * (opt + spin_up);
        if dephase_2 < 0.0 {
            return Err(Error::config(
                "T2_spin",
                format!("implies negative pure dephasing ({dephase_2:.3e} 1/s); need T2_spin <= 2 T1_spin"),
            ));
        }
        if dephase_3 < 0.0 {
            return Err(Error::config(
                "T2_opt",
                format!("implies negative pure dephasing ({dephase_3:.3e} 1/s); need T2_opt <= 2 T1_opt"),
            ));
        }
        Ok(Rates {
            spin_down,
            spin_up,
            opt_to_1,
            opt_to_2,
            dephase_2,
            dephase_3,
        })
    }
}

/// Detunings of one ion. The signal detuning is always derived.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AtomDetunings {
    delta_o: f64,
    delta_mu: f64,
}

impl AtomDetunings {
    pub fn new(delta_o: f64, delta_mu: f64) -> Self {
        AtomDetunings { delta_o, delta_mu }
    }

    pub fn delta_o(&self) -> f64 {
        self.delta_o
    }

    pub fn delta_mu(&self) -> f64 {
        self.delta_mu
    }

    pub fn delta_s(&self) -> f64 {
        self.delta_o + self.delta_mu
    }
}

/// Classical cavity amplitudes and pump Rabi frequency.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FieldState {
    /// Signal mode, `|a|²` = intracavity photons.
    pub a: C64,
    /// Microwave mode, `|b|²` = intracavity photons.
    pub b: C64,
    /// Pump Rabi frequency, rad/s.
    pub omega_o: C64,
}

impl FieldState {
    pub fn is_finite(&self) -> bool {
        [self.a, self.b, self.omega_o]
            .iter()
            .all(|z| z.re.is_finite() && z.im.is_finite())
    }
}
