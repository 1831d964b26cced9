//! Unit conventions.
//!
//! Internally every rate and detuning is an angular frequency in rad·µs⁻¹ and
//! every time is in µs. Positions along a memory are normalized, z ∈ [0, 1].
//! Human-facing configuration uses linear MHz, converted with a factor 2π.

use std::f64::consts::TAU;

/// Linear frequency in MHz to angular frequency in rad·µs⁻¹.
pub fn mhz_to_rad_per_us(f: f64) -> f64 {
    TAU * f
}

/// Angular frequency in rad·µs⁻¹ to linear frequency in MHz.
pub fn rad_per_us_to_mhz(w: f64) -> f64 {
    w / TAU
}

/// Intensity FWHM (µs) of a Gaussian pulse to its standard deviation in
/// intensity, |E|² ∝ exp(-t²/2s²).
pub fn gaussian_fwhm_to_sigma(fwhm: f64) -> f64 {
    fwhm / (2.0 * (2.0 * 2f64.ln()).sqrt())
}

/// Angular spectral FWHM (rad·µs⁻¹) of the intensity spectrum of a
/// transform-limited Gaussian with the given temporal intensity FWHM.
pub fn gaussian_spectral_fwhm(fwhm: f64) -> f64 {
    4.0 * 2f64.ln() / fwhm
}
