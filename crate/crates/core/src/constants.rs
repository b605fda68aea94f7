//! Physical constants (CODATA 2018 exact SI values) and unit helpers.

use std::f64::consts::PI;

/// Planck constant, J s.
pub const PLANCK: f64 = 6.626_070_15e-34;
/// Boltzmann constant, J/K.
pub const BOLTZMANN: f64 = 1.380_649e-23;

/// Tag written into result provenance headers.
pub const CONSTANTS_VERSION: &str = "CODATA-2018";

/// Cycles per second to radians per second.
#[inline]
pub fn hz_to_rad(f: f64) -> f64 {
    2.0 * PI * f
}

/// `h f / (k_B T)`; infinite at `T = 0`.
pub fn boltzmann_exponent(frequency_hz: f64, temperature_k: f64) -> f64 {
    if temperature_k <= 0.0 {
        f64::INFINITY
    } else {
        PLANCK * frequency_hz / (BOLTZMANN * temperature_k)
    }
}
