//! SI constants (CODATA 2018) and the unit conversions used everywhere else.
//!
//! Energies are frequencies in Hz, fields in G, intensities in W/cm^2,
//! temperatures and trap depths in uK.

pub const PLANCK: f64 = 6.626_070_15e-34;
pub const BOLTZMANN: f64 = 1.380_649e-23;
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
pub const VACUUM_PERMITTIVITY: f64 = 8.854_187_812_8e-12;
pub const ELEMENTARY_CHARGE: f64 = 1.602_176_634e-19;
pub const BOHR_RADIUS: f64 = 5.291_772_109_03e-11;

/// k_B * (1 uK) / h, in Hz.
pub fn microkelvin_in_hz() -> f64 {
    BOLTZMANN * 1e-6 / PLANCK
}

/// Second-order light-shift scale in Hz^2 per (W/cm^2) for a squared dipole of 1 (e a0)^2.
///
/// A field of intensity I has amplitude E0^2 = 2I/(c eps0); the shift of a level
/// is -|d E0|^2 / (4 h^2) per unit inverse detuning, hence |d|^2 I / (2 c eps0 h^2).
pub fn stark_prefactor() -> f64 {
    let d = ELEMENTARY_CHARGE * BOHR_RADIUS;
    d * d / (2.0 * SPEED_OF_LIGHT * VACUUM_PERMITTIVITY * PLANCK * PLANCK) * 1e4
}

/// Vacuum frequency in Hz of light with vacuum wavelength `nm`.
pub fn frequency_from_wavelength_nm(nm: f64) -> f64 {
    SPEED_OF_LIGHT / (nm * 1e-9)
}
