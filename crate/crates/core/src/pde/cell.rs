use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use super::network::{Event, ScheduleEntry};
use super::{FieldInput, FieldOutput, Grid, SpinState};
use crate::error::{Error, Result};
use crate::modes::{
    bright_mode_coefficients, complete_bright_basis, effective_rates, omega_tilde, AtomicParams, CouplingVector,
    EffectiveRates, ModeSpectrum,
};

const I: C64 = C64 { re: 0.0, im: 1.0 };

/// One gradient-echo memory: an atomic ensemble with a switchable linear
/// two-photon detuning gradient δ'(z) = δ' + sign·η·(z - ½).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MemoryCell {
    pub id: String,
    pub atoms: AtomicParams,
    /// Gradient span η (rad·µs⁻¹ across the cell).
    pub gradient: f64,
    /// Keep the Γ|Ω_k/Δ_k|² scattering term in γ'.
    pub absorption: bool,
    /// Retune δ to cancel the uniform ac-Stark shift, so δ' = δ.
    pub stark_compensation: bool,
}

impl MemoryCell {
    pub fn new(id: impl Into<String>, atoms: AtomicParams, gradient: f64) -> Self {
        Self { id: id.into(), atoms, gradient, absorption: true, stark_compensation: false }
    }

    /// Far-detuned ideal limit: no excited-state scattering, light shift
    /// compensated.
    pub fn ideal_limit(mut self) -> Self {
        self.absorption = false;
        self.stark_compensation = true;
        self
    }

    /// γ', δ' seen by the spin while `coupling` is on, after the cell's model
    /// switches.
    pub fn window_rates(&self, coupling: &CouplingVector, spectrum: &ModeSpectrum) -> Result<EffectiveRates> {
        let mut r = effective_rates(coupling, spectrum, &self.atoms)?;
        if !self.absorption {
            r.gamma_eff = self.atoms.dephasing;
        }
        if self.stark_compensation {
            r.delta_eff = self.atoms.two_photon_detuning;
        }
        Ok(r)
    }

    /// Rates widened by the gradient: |δ'| is replaced by |δ'| + |η|/2, the
    /// largest two-photon detuning found inside the cell.
    pub fn bandwidth_rates(&self, coupling: &CouplingVector, spectrum: &ModeSpectrum) -> Result<EffectiveRates> {
        let r = self.window_rates(coupling, spectrum)?;
        Ok(EffectiveRates { gamma_eff: r.gamma_eff, delta_eff: r.delta_eff.abs() + 0.5 * self.gradient.abs() })
    }

    /// Gradient-echo coupling d = βΓΩ̃²/|η|.
    pub fn gem_coupling(&self, omega_tilde: f64) -> f64 {
        self.atoms.density() * omega_tilde * omega_tilde / self.gradient.abs()
    }

    /// Ω̃ that gives gradient-echo coupling `d`.
    pub fn omega_tilde_for(&self, d: f64) -> f64 {
        (d * self.gradient.abs() / self.atoms.density()).sqrt()
    }
}

/// Coupling active in a cell during one window.
#[derive(Clone, Debug)]
pub(crate) struct ActiveDrive {
    /// Ω_k/Δ_k (possibly co-rotated by dispersion phases).
    pub ratios: Vec<C64>,
    pub rates: EffectiveRates,
    pub gate: Option<(f64, f64)>,
}

/// Everything the kernel needs about one cell in one window.
#[derive(Clone, Debug)]
pub(crate) struct CellWindow {
    pub drive: Option<ActiveDrive>,
    pub gradient: f64,
    pub bare_decay: f64,
    pub bare_detuning: f64,
    pub density: f64,
    pub g: f64,
    /// Per-mode phase factors applied to the outflow.
    pub out_phase: Option<Vec<C64>>,
}

impl CellWindow {
    pub fn new(
        cell: &MemoryCell,
        entry: &ScheduleEntry,
        spectrum: &ModeSpectrum,
        in_phase: Option<&[C64]>,
        out_phase: Option<Vec<C64>>,
    ) -> Result<Self> {
        let drive = match (entry.event, &entry.coupling) {
            (Event::Store | Event::Recall, Some(c)) => {
                let mut ratios = c.ratios(spectrum)?;
                if let Some(p) = in_phase {
                    ratios.iter_mut().zip(p).for_each(|(r, p)| *r *= p);
                }
                Some(ActiveDrive { ratios, rates: cell.window_rates(c, spectrum)?, gate: entry.gate })
            }
            _ => None,
        };
        let gradient = match entry.event {
            Event::Store | Event::Recall => entry.gradient_sign * cell.gradient,
            Event::Hold | Event::Idle => 0.0,
        };
        Ok(Self {
            drive,
            gradient,
            bare_decay: cell.atoms.dephasing,
            bare_detuning: cell.atoms.two_photon_detuning,
            density: cell.atoms.density(),
            g: cell.atoms.g(),
            out_phase,
        })
    }

    fn active(&self, t: f64) -> Option<&ActiveDrive> {
        self.drive.as_ref().filter(|d| d.gate.is_none_or(|(a, b)| t >= a && t <= b))
    }

    /// Largest rate in the linear system, used for the step-size guard.
    pub fn max_rate(&self) -> f64 {
        let bare = self.bare_decay.abs() + self.bare_detuning.abs() + 0.5 * self.gradient.abs();
        match &self.drive {
            None => bare,
            Some(d) => {
                let ot2: f64 = d.ratios.iter().map(|r| r.norm_sqr()).sum();
                let own = d.rates.gamma_eff.abs()
                    + d.rates.delta_eff.abs()
                    + 0.5 * self.gradient.abs()
                    + self.g * self.density * ot2;
                own.max(bare)
            }
        }
    }

    /// dσ/dt at time `t` and the outflow E_k(1, t) for inflow E_k(0, t).
    ///
    /// `field_mag`, when given, receives sqrt(Σ_k |E_k(z)|²) along the cell.
    #[allow(clippy::too_many_arguments)]
    pub fn derivative(
        &self,
        t: f64,
        sigma: &[C64],
        inflow: &[C64],
        dsigma: &mut [C64],
        outflow: &mut [C64],
        drive_buf: &mut [C64],
        mut field_mag: Option<&mut [f64]>,
    ) {
        let nz = sigma.len();
        let dz = 1.0 / (nz - 1) as f64;
        let detuning_at = |i: usize, base: f64| base + self.gradient * (i as f64 * dz - 0.5);
        match self.active(t) {
            None => {
                for i in 0..nz {
                    dsigma[i] = -C64::new(self.bare_decay, detuning_at(i, self.bare_detuning)) * sigma[i];
                }
                outflow.copy_from_slice(inflow);
                if let Some(fm) = field_mag.as_deref_mut() {
                    let e = inflow.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
                    fm.iter_mut().for_each(|v| *v = e);
                }
            }
            Some(d) => {
                drive_buf.iter_mut().for_each(|x| *x = C64::new(0.0, 0.0));
                if let Some(fm) = field_mag.as_deref_mut() {
                    fm.iter_mut().for_each(|v| *v = 0.0);
                }
                // E_k(z) = E_k(0) + i𝒩 (Ω_k/Δ_k) ∫_0^z σ, accumulated per mode
                for (k, r) in d.ratios.iter().enumerate() {
                    let step = I * self.density * r * (0.5 * dz);
                    let rc = r.conj();
                    let mut e = inflow[k];
                    for i in 0..nz {
                        if i > 0 {
                            e += step * (sigma[i - 1] + sigma[i]);
                        }
                        drive_buf[i] += rc * e;
                        if let Some(fm) = field_mag.as_deref_mut() {
                            fm[i] += e.norm_sqr();
                        }
                    }
                    outflow[k] = e;
                }
                if let Some(fm) = field_mag {
                    fm.iter_mut().for_each(|v| *v = v.sqrt());
                }
                let ig = I * self.g;
                for i in 0..nz {
                    let decay = C64::new(d.rates.gamma_eff, detuning_at(i, d.rates.delta_eff));
                    dsigma[i] = -decay * sigma[i] + ig * drive_buf[i];
                }
            }
        }
        if let Some(p) = &self.out_phase {
            outflow.iter_mut().zip(p).for_each(|(o, p)| *o *= p);
        }
    }
}

/// Per-window trace of a chain integration.
pub(crate) struct WindowRun {
    pub output: FieldOutput,
    /// Rows: recorded times; columns: z across all cells.
    pub field_rows: Vec<Vec<f64>>,
    pub spin_rows: Vec<Vec<f64>>,
}

/// Integrate cells in series through one window with RK4, starting from
/// `spins` (updated in place).
pub(crate) fn integrate_window(
    cells: &[CellWindow],
    spins: &mut [SpinState],
    input: &FieldInput,
    grid: &Grid,
    heat_stride: Option<usize>,
) -> Result<WindowRun> {
    let nz = grid.nz;
    let nc = cells.len();
    let nm = input.n_modes();
    let dt = grid.dt;
    for (c, cw) in cells.iter().enumerate() {
        if let Some(d) = &cw.drive {
            if d.ratios.len() != nm {
                return Err(Error::Dimension { expected: nm, got: d.ratios.len() });
            }
        }
        if spins[c].values.len() != nz {
            return Err(Error::Dimension { expected: nz, got: spins[c].values.len() });
        }
        let r = cw.max_rate();
        if dt * r > 0.5 {
            return Err(Error::StepSize(format!("dt·max rate = {:.3} > 0.5 in cell {c}; reduce dt", dt * r)));
        }
    }

    let mut state: Vec<C64> = spins.iter().flat_map(|s| s.values.iter().copied()).collect();
    let n = state.len();
    let zero = C64::new(0.0, 0.0);
    let mut ks = [vec![zero; n], vec![zero; n], vec![zero; n], vec![zero; n]];
    let mut tmp = vec![zero; n];
    let mut flow_a = vec![zero; nm];
    let mut flow_b = vec![zero; nm];
    let mut drive_buf = vec![zero; nz];
    let mut heat_field = vec![0.0; nc * nz];
    let mut output = FieldOutput::zeros(nm, grid);
    let mut field_rows = Vec::new();
    let mut spin_rows = Vec::new();

    // Evaluates the chain derivative; leaves the network outflow in flow_a.
    let mut eval = |t: f64,
                    half: usize,
                    s: &[C64],
                    ds: &mut [C64],
                    flow_a: &mut Vec<C64>,
                    flow_b: &mut Vec<C64>,
                    mut heat: Option<&mut [f64]>| {
        for (k, f) in flow_a.iter_mut().enumerate() {
            *f = input.at_half(k, half);
        }
        for (c, cw) in cells.iter().enumerate() {
            let range = c * nz..(c + 1) * nz;
            let fm = heat.as_deref_mut().map(|h| &mut h[range.clone()]);
            cw.derivative(t, &s[range.clone()], flow_a, &mut ds[range], flow_b, &mut drive_buf, fm);
            std::mem::swap(flow_a, flow_b);
        }
    };

    let record = |n: usize| heat_stride.is_some_and(|s| n.is_multiple_of(s));
    for step in 0..=grid.nt {
        let t = step as f64 * dt;
        let rec = record(step);
        {
            let [k1, ..] = &mut ks;
            eval(t, 2 * step, &state, k1, &mut flow_a, &mut flow_b, rec.then_some(&mut heat_field[..]));
        }
        for (k, f) in flow_a.iter().enumerate() {
            output.samples[k][step] = *f;
        }
        if rec {
            field_rows.push(heat_field.clone());
            spin_rows.push(state.iter().map(|x| x.norm()).collect());
        }
        if step == grid.nt {
            break;
        }
        let [k1, k2, k3, k4] = &mut ks;
        for i in 0..n {
            tmp[i] = state[i] + 0.5 * dt * k1[i];
        }
        eval(t + 0.5 * dt, 2 * step + 1, &tmp, k2, &mut flow_a, &mut flow_b, None);
        for i in 0..n {
            tmp[i] = state[i] + 0.5 * dt * k2[i];
        }
        eval(t + 0.5 * dt, 2 * step + 1, &tmp, k3, &mut flow_a, &mut flow_b, None);
        for i in 0..n {
            tmp[i] = state[i] + dt * k3[i];
        }
        eval(t + dt, 2 * step + 2, &tmp, k4, &mut flow_a, &mut flow_b, None);
        let mut finite = true;
        for i in 0..n {
            state[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            finite &= state[i].re.is_finite() && state[i].im.is_finite();
        }
        if !finite {
            return Err(Error::Divergence(format!("non-finite spin at t = {:.4} µs", t + dt)));
        }
    }
    for (c, s) in spins.iter_mut().enumerate() {
        s.values.copy_from_slice(&state[c * nz..(c + 1) * nz]);
    }
    Ok(WindowRun { output, field_rows, spin_rows })
}

/// Integrate a single cell through one window with the full N-mode
/// equations: every probe envelope is propagated along z separately and the
/// spin is driven by Σ_k (Ω_k*/Δ_k) E_k.
pub fn simulate_cell(
    cell: &MemoryCell,
    entry: &ScheduleEntry,
    spectrum: &ModeSpectrum,
    input: &FieldInput,
    spin: &SpinState,
    grid: &Grid,
) -> Result<(FieldOutput, SpinState)> {
    entry.check(spectrum.n_modes())?;
    if input.n_modes() != spectrum.n_modes() {
        return Err(Error::Dimension { expected: spectrum.n_modes(), got: input.n_modes() });
    }
    let cw = CellWindow::new(cell, entry, spectrum, None, None)?;
    let mut spins = [spin.clone()];
    let run = integrate_window(&[cw], &mut spins, input, grid, None)?;
    let [spin] = spins;
    Ok((run.output, spin))
}

/// Same observables as [`simulate_cell`], computed in the rotated basis: the
/// inputs are projected onto the bright mode and its orthogonal completion,
/// only the bright mode is coupled to a two-level ensemble with strength Ω̃,
/// the dark modes pass straight through, and the result is rotated back.
pub fn simulate_cell_bright(
    cell: &MemoryCell,
    entry: &ScheduleEntry,
    spectrum: &ModeSpectrum,
    input: &FieldInput,
    spin: &SpinState,
    grid: &Grid,
) -> Result<(FieldOutput, SpinState)> {
    entry.check(spectrum.n_modes())?;
    let n = spectrum.n_modes();
    let coupling = match (entry.event, &entry.coupling) {
        (Event::Store | Event::Recall, Some(c)) if !c.is_zero() => c,
        _ => return simulate_cell(cell, entry, spectrum, input, spin, grid),
    };
    let w = bright_mode_coefficients(coupling, spectrum)?;
    let basis = complete_bright_basis(&w)?;
    let rotated = input.transform(&basis);
    let bright_only = rotated.transform(&nalgebra::DMatrix::from_fn(1, n, |_, k| {
        if k == 0 {
            C64::new(1.0, 0.0)
        } else {
            C64::new(0.0, 0.0)
        }
    }));
    let ot = omega_tilde(coupling, spectrum)?;
    let mut cw = CellWindow::new(cell, &ScheduleEntry { coupling: None, ..entry.clone() }, spectrum, None, None)?;
    cw.drive = Some(ActiveDrive {
        ratios: vec![C64::new(ot, 0.0)],
        rates: cell.window_rates(coupling, spectrum)?,
        gate: entry.gate,
    });
    let mut spins = [spin.clone()];
    let run = integrate_window(&[cw], &mut spins, &bright_only, grid, None)?;
    let mut out_rot = rotated.at_steps();
    out_rot.samples[0] = run.output.samples.into_iter().next().expect("one bright mode");
    let [spin] = spins;
    Ok((out_rot.transform(&basis.adjoint()), spin))
}
