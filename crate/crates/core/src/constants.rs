//! Physical constants (CODATA 2018 exact or recommended values).

/// Reduced Planck constant ħ in J·s.
pub const HBAR: f64 = 1.054_571_817e-34;

/// Boltzmann constant k_B in J/K (exact).
pub const K_B: f64 = 1.380_649e-23;

/// Speed of light in vacuum in m/s (exact).
pub const C_LIGHT: f64 = 299_792_458.0;

pub const TWO_PI: f64 = 2.0 * std::f64::consts::PI;
