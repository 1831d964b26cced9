//! Light-spin propagation through cascaded Raman gradient-echo memories.
//!
//! Everything is written in the moving frame t' = t - z/c, with z ∈ [0, 1]
//! along each ensemble. Within a time step the probe envelopes are
//! integrated along z (trapezoidal accumulation of the spin source), and the
//! spin coherence is advanced in time with classical RK4. Cells placed in
//! series are integrated together: the outflow of cell i is the inflow of
//! cell i + 1 at the same instant.
//!
//! Energy bookkeeping uses the conserved combination
//!
//! ```text
//! ∫|E_in|² dt = ∫|E_out|² dt + (𝒩/g) ∫|σ|² dz + losses
//! ```
//!
//! so the "stored energy" of a spin wave is βΓ ∫|σ|² dz with g = 1.

mod cell;
mod shared;
mod heatmap;
mod metrics;
mod network;

pub use cell::{simulate_cell, simulate_cell_bright, MemoryCell};
pub use shared::{simulate_shared_state, total_probe, POINTS_PER_BEAT};
pub use heatmap::Heatmap;
pub use metrics::{efficiency_and_overlap, ideal_output, overlap};
pub use network::{
    extract_transfer_matrix, reference_echo, simulate_network, Event, NetworkOptions, NetworkResult, Schedule,
    ScheduleEntry, WindowEnergy,
};

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::units::gaussian_fwhm_to_sigma;

/// Space-time discretization of one time window.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    /// Points across z ∈ [0, 1], endpoints included.
    pub nz: usize,
    /// Time steps per window.
    pub nt: usize,
    /// Step (µs).
    pub dt: f64,
}

impl Grid {
    pub const MIN_NZ: usize = 64;

    /// Grid with `nt = window/dt` steps; `window` must be a whole number of
    /// steps.
    pub fn new(nz: usize, window: f64, dt: f64) -> Result<Self> {
        if nz < Self::MIN_NZ {
            return Err(Error::Invalid(format!("nz must be at least {}, got {nz}", Self::MIN_NZ)));
        }
        if !(dt > 0.0 && window > 0.0) {
            return Err(Error::Invalid("window and dt must be positive".into()));
        }
        let nt = (window / dt).round() as usize;
        if nt == 0 || ((nt as f64) * dt - window).abs() > 1e-9 * window {
            return Err(Error::Invalid(format!("window {window} µs is not a multiple of dt = {dt} µs")));
        }
        Ok(Self { nz, nt, dt })
    }

    pub fn window(&self) -> f64 {
        self.nt as f64 * self.dt
    }

    pub fn dz(&self) -> f64 {
        1.0 / (self.nz - 1) as f64
    }

    pub fn z(&self, i: usize) -> f64 {
        i as f64 * self.dz()
    }

    /// Refined grid: `nz` and step count scaled by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        let nz = ((self.nz - 1) as f64 * factor).round() as usize + 1;
        let nt = (self.nt as f64 * factor).round() as usize;
        Self::new(nz, self.window(), self.window() / nt as f64)
    }
}

/// Envelopes E_k(0, t) entering a network during one window, sampled every
/// half step (2·nt + 1 samples) so that RK4 midpoints need no interpolation.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldInput {
    samples: Vec<Vec<C64>>,
}

impl FieldInput {
    pub fn zeros(n_modes: usize, grid: &Grid) -> Self {
        Self { samples: vec![vec![C64::new(0.0, 0.0); 2 * grid.nt + 1]; n_modes] }
    }

    pub fn from_fn(n_modes: usize, grid: &Grid, f: impl Fn(usize, f64) -> C64) -> Self {
        let h = grid.dt / 2.0;
        Self {
            samples: (0..n_modes).map(|k| (0..=2 * grid.nt).map(|i| f(k, i as f64 * h)).collect()).collect(),
        }
    }

    /// Gaussian pulse g(t) = exp(-(t - t_c)²/(4 s²)) (intensity FWHM `fwhm`)
    /// times a complex amplitude per mode.
    pub fn gaussian(amplitudes: &[C64], center: f64, fwhm: f64, grid: &Grid) -> Self {
        let s = gaussian_fwhm_to_sigma(fwhm);
        Self::from_fn(amplitudes.len(), grid, |k, t| amplitudes[k] * (-(t - center).powi(2) / (4.0 * s * s)).exp())
    }

    pub fn n_modes(&self) -> usize {
        self.samples.len()
    }

    /// Put mode 0 of `self` into mode `j` of an `n_modes` input, others empty.
    pub fn embed_mode(&self, n_modes: usize, j: usize) -> Self {
        let zero = vec![C64::new(0.0, 0.0); self.samples[0].len()];
        Self { samples: (0..n_modes).map(|k| if k == j { self.samples[0].clone() } else { zero.clone() }).collect() }
    }

    /// Value at half-step index `h` (time h·dt/2).
    pub(crate) fn at_half(&self, k: usize, h: usize) -> C64 {
        self.samples[k][h]
    }

    /// Samples at the integer steps t_n = n·dt, n = 0..=nt.
    pub fn at_steps(&self) -> FieldOutput {
        FieldOutput { samples: self.samples.iter().map(|s| s.iter().step_by(2).copied().collect()).collect() }
    }

    /// Rotate the mode vector at every sample: E'_j = Σ_k M_jk E_k.
    pub fn transform(&self, m: &nalgebra::DMatrix<C64>) -> Self {
        let len = self.samples[0].len();
        let samples = (0..m.nrows())
            .map(|j| (0..len).map(|h| (0..m.ncols()).map(|k| m[(j, k)] * self.samples[k][h]).sum()).collect())
            .collect();
        Self { samples }
    }

    pub fn energy(&self, dt: f64) -> f64 {
        self.at_steps().energy(dt)
    }

    /// Superposition a·self + b·other.
    pub fn combine(&self, a: C64, other: &Self, b: C64) -> Self {
        Self {
            samples: self
                .samples
                .iter()
                .zip(&other.samples)
                .map(|(x, y)| x.iter().zip(y).map(|(p, q)| a * p + b * q).collect())
                .collect(),
        }
    }
}

/// Envelopes E_k(t_n) leaving a network, one sample per step (nt + 1).
#[derive(Clone, Debug, PartialEq)]
pub struct FieldOutput {
    pub samples: Vec<Vec<C64>>,
}

impl FieldOutput {
    pub fn zeros(n_modes: usize, grid: &Grid) -> Self {
        Self { samples: vec![vec![C64::new(0.0, 0.0); grid.nt + 1]; n_modes] }
    }

    pub fn n_modes(&self) -> usize {
        self.samples.len()
    }

    pub fn mode(&self, k: usize) -> &[C64] {
        &self.samples[k]
    }

    /// Σ_k ∫|E_k|² dt by the trapezoidal rule.
    pub fn energy(&self, dt: f64) -> f64 {
        self.samples.iter().map(|s| trapz(s.iter().map(|x| x.norm_sqr()), dt)).sum()
    }

    pub fn mode_energy(&self, k: usize, dt: f64) -> f64 {
        trapz(self.samples[k].iter().map(|x| x.norm_sqr()), dt)
    }

    pub fn transform(&self, m: &nalgebra::DMatrix<C64>) -> Self {
        let len = self.samples[0].len();
        let samples = (0..m.nrows())
            .map(|j| (0..len).map(|n| (0..m.ncols()).map(|k| m[(j, k)] * self.samples[k][n]).sum()).collect())
            .collect();
        Self { samples }
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.samples
            .iter()
            .zip(&other.samples)
            .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).norm()))
            .fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.samples.iter().flatten().map(|x| x.norm()).fold(0.0, f64::max)
    }
}

/// Spin coherence σ_gs(z) of one cell.
#[derive(Clone, Debug, PartialEq)]
pub struct SpinState {
    pub values: Vec<C64>,
}

impl SpinState {
    pub fn zeros(grid: &Grid) -> Self {
        Self { values: vec![C64::new(0.0, 0.0); grid.nz] }
    }

    /// βΓ ∫|σ|² dz: the optical energy this spin wave would carry.
    pub fn stored_energy(&self, density: f64) -> f64 {
        let dz = 1.0 / (self.values.len() - 1) as f64;
        density * trapz(self.values.iter().map(|x| x.norm_sqr()), dz)
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|x| x.re.is_finite() && x.im.is_finite())
    }
}

pub(crate) fn trapz(values: impl Iterator<Item = f64>, dx: f64) -> f64 {
    let mut sum = 0.0;
    let mut first = None;
    let mut last = 0.0;
    for v in values {
        if first.is_none() {
            first = Some(v);
        }
        sum += v;
        last = v;
    }
    match first {
        None => 0.0,
        Some(f) => dx * (sum - 0.5 * (f + last)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_validation() {
        assert!(Grid::new(32, 40.0, 0.05).is_err());
        assert!(Grid::new(128, 40.0, 0.07).is_err());
        let g = Grid::new(128, 40.0, 0.05).unwrap();
        assert_eq!(g.nt, 800);
        let r = g.scaled(2.0).unwrap();
        assert_eq!((r.nz, r.nt), (255, 1600));
        assert!((r.dt - 0.025).abs() < 1e-15);
    }

    #[test]
    fn gaussian_energy() {
        // ∫ exp(-(t-tc)²/(2s²)) dt = s√(2π)
        let g = Grid::new(64, 40.0, 0.05).unwrap();
        let f = FieldInput::gaussian(&[C64::new(1.0, 0.0)], 20.0, 10.0, &g);
        let s = gaussian_fwhm_to_sigma(10.0);
        let exact = s * (2.0 * std::f64::consts::PI).sqrt();
        assert!((f.energy(g.dt) - exact).abs() < 1e-4);
    }

    #[test]
    fn trapz_of_line() {
        assert!((trapz([0.0, 1.0, 2.0].into_iter(), 0.5) - 1.0).abs() < 1e-15);
        assert_eq!(trapz(std::iter::empty(), 1.0), 0.0);
    }
}
