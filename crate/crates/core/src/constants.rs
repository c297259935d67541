//! Physical constants (exact SI values since the 2019 redefinition).

use std::f64::consts::PI;

/// Planck constant, J s.
pub const PLANCK: f64 = 6.626_070_15e-34;
/// Reduced Planck constant, J s.
pub const HBAR: f64 = PLANCK / (2.0 * PI);
/// Elementary charge, C.
pub const ELEMENTARY_CHARGE: f64 = 1.602_176_634e-19;

/// Superconducting resistance quantum h/(2e)^2, in ohm.
pub fn resistance_quantum() -> f64 {
    PLANCK / (4.0 * ELEMENTARY_CHARGE * ELEMENTARY_CHARGE)
}
