//! Single excited state shared by all modes: one total probe envelope and one
//! total coupling Ω(t) = Σ_k Ω_k e^{iν_k t}, ν_k = Δ_k - Δ, whose beat notes
//! are kept in full.

use num_complex::Complex64 as C64;

use super::network::{Event, ScheduleEntry};
use super::{FieldInput, FieldOutput, Grid, MemoryCell, SpinState};
use crate::error::{Error, Result};
use crate::modes::ModeSpectrum;

const I: C64 = C64 { re: 0.0, im: 1.0 };

/// Minimum samples per period of the fastest beat note.
pub const POINTS_PER_BEAT: f64 = 20.0;

/// Carrier offsets ν_k = Δ_k - Δ of each mode from the mean detuning.
pub fn beat_offsets(spectrum: &ModeSpectrum) -> Vec<f64> {
    spectrum.offsets()
}

/// Total probe ℰ(t) = Σ_k ℰ_k(t) e^{iν_k t} at half-step resolution.
pub fn total_probe(input: &FieldInput, spectrum: &ModeSpectrum, grid: &Grid) -> FieldInput {
    let nu = beat_offsets(spectrum);
    let h = grid.dt / 2.0;
    let mut total = FieldInput::zeros(1, grid);
    for (i, s) in total.samples[0].iter_mut().enumerate() {
        let t = i as f64 * h;
        *s = (0..input.n_modes()).map(|k| input.at_half(k, i) * C64::from_polar(1.0, nu[k] * t)).sum();
    }
    total
}

/// Integrate one cell through one window in the single-excited-state model.
///
/// Returns the total outgoing probe (one "mode") and the final spin. The
/// spin sees
///
/// ```text
/// ∂t σ = -(γ + iδ(z) + i(Δ - iΓ)|Ω(t)|²/Δ²) σ + i g (Ω*(t)/Δ) ℰ
/// ∂z ℰ = i 𝒩 (Ω(t)/Δ) σ
/// ```
///
/// with the cell's switches applied: no absorption drops the Γ term, light
/// shift compensation subtracts the time-averaged part of the shift.
///
/// Each mode enters Ω(t)/Δ with its own Raman ratio, Ω(t)/Δ → Σ_k (Ω_k/Δ_k)
/// e^{iν_k t}, so that with no beat notes the single-mode limit is exact.
pub fn simulate_shared_state(
    cell: &MemoryCell,
    entry: &ScheduleEntry,
    spectrum: &ModeSpectrum,
    input: &FieldInput,
    spin: &SpinState,
    grid: &Grid,
) -> Result<(FieldOutput, SpinState)> {
    let nm = spectrum.n_modes();
    entry.check(nm)?;
    if input.n_modes() != nm {
        return Err(Error::Dimension { expected: nm, got: input.n_modes() });
    }
    if spin.values.len() != grid.nz {
        return Err(Error::Dimension { expected: grid.nz, got: spin.values.len() });
    }
    let max_split = spectrum.max_splitting();
    if max_split > 0.0 {
        let limit = 2.0 * std::f64::consts::PI / (POINTS_PER_BEAT * max_split);
        if grid.dt > limit {
            return Err(Error::StepSize(format!(
                "dt = {} µs does not resolve the {:.3} rad/µs beat; need dt ≤ {limit:.3e}",
                grid.dt, max_split
            )));
        }
    }

    let delta = spectrum.mean_detuning();
    let nu = beat_offsets(spectrum);
    let atoms = &cell.atoms;
    let (ratios, gate, gradient) = match (entry.event, &entry.coupling) {
        (Event::Store | Event::Recall, Some(c)) => (c.ratios(spectrum)?, entry.gate, entry.gradient_sign * cell.gradient),
        _ => (Vec::new(), None, 0.0),
    };
    // time average of |Ω(t)/Δ|²
    let mean_power: f64 = ratios.iter().map(|a| a.norm_sqr()).sum();
    let compensation = if cell.stark_compensation { delta * mean_power } else { 0.0 };
    let gamma_scatter = if cell.absorption { atoms.decay } else { 0.0 };

    let peak_power = mean_power * nm as f64;
    let max_rate = atoms.dephasing
        + atoms.two_photon_detuning.abs()
        + 0.5 * gradient.abs()
        + (gamma_scatter + delta.abs()) * peak_power
        + compensation.abs()
        + atoms.density() * peak_power;
    if grid.dt * max_rate > 0.5 {
        return Err(Error::StepSize(format!("dt·max rate = {:.3} > 0.5; reduce dt", grid.dt * max_rate)));
    }

    let probe = total_probe(input, spectrum, grid);
    let nz = grid.nz;
    let dz = grid.dz();
    let density = atoms.density();
    let g = atoms.g();

    // Ω(t)/Δ, or None outside the gate.
    let coupling_at = |t: f64| -> Option<C64> {
        if ratios.is_empty() || gate.is_some_and(|(a, b)| t < a || t > b) {
            return None;
        }
        Some(ratios.iter().zip(&nu).map(|(r, n)| r * C64::from_polar(1.0, n * t)).sum::<C64>())
    };
    let deriv = |t: f64, half: usize, s: &[C64], ds: &mut [C64]| -> C64 {
        let (c, shift) = match coupling_at(t) {
            Some(c) => (c, delta * c.norm_sqr() - compensation),
            None => (C64::new(0.0, 0.0), 0.0),
        };
        let rate_re = atoms.dephasing + gamma_scatter * c.norm_sqr();
        let shift = atoms.two_photon_detuning + shift;
        let step = I * density * c * (0.5 * dz);
        let cc = c.conj();
        let mut e = probe.at_half(0, half);
        for i in 0..nz {
            if i > 0 {
                e += step * (s[i - 1] + s[i]);
            }
            let decay = C64::new(rate_re, shift + gradient * (i as f64 * dz - 0.5));
            ds[i] = -decay * s[i] + I * g * cc * e;
        }
        e
    };

    let dt = grid.dt;
    let zero = C64::new(0.0, 0.0);
    let mut state = spin.values.clone();
    let (mut k1, mut k2, mut k3, mut k4) = (vec![zero; nz], vec![zero; nz], vec![zero; nz], vec![zero; nz]);
    let mut tmp = vec![zero; nz];
    let mut output = FieldOutput::zeros(1, grid);
    for step in 0..=grid.nt {
        let t = step as f64 * dt;
        output.samples[0][step] = deriv(t, 2 * step, &state, &mut k1);
        if step == grid.nt {
            break;
        }
        for i in 0..nz {
            tmp[i] = state[i] + 0.5 * dt * k1[i];
        }
        deriv(t + 0.5 * dt, 2 * step + 1, &tmp, &mut k2);
        for i in 0..nz {
            tmp[i] = state[i] + 0.5 * dt * k2[i];
        }
        deriv(t + 0.5 * dt, 2 * step + 1, &tmp, &mut k3);
        for i in 0..nz {
            tmp[i] = state[i] + dt * k3[i];
        }
        deriv(t + dt, 2 * step + 2, &tmp, &mut k4);
        for i in 0..nz {
            state[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        if !state.iter().all(|x| x.re.is_finite() && x.im.is_finite()) {
            return Err(Error::Divergence(format!("non-finite spin at t = {:.4} µs", t + dt)));
        }
    }
    Ok((output, SpinState { values: state }))
}
