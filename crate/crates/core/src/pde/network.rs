use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::cell::{integrate_window, CellWindow};
use super::heatmap::Heatmap;
use super::metrics::inner;
use super::{FieldInput, FieldOutput, Grid, MemoryCell, SpinState};
use crate::error::{Error, Result};
use crate::modes::{dispersion_phase, omega_tilde, CouplingVector, ModeSpectrum};

/// What a cell does during one time window.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Event {
    /// Coupling on, gradient +η: absorb the bright mode.
    Store,
    /// Coupling on, gradient flipped: re-emit the spin wave.
    Recall,
    /// Coupling and gradient off, spin kept.
    Hold,
    /// Nothing stored yet; coupling and gradient off.
    Idle,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScheduleEntry {
    pub event: Event,
    pub coupling: Option<CouplingVector>,
    /// ±1; multiplies the cell's gradient.
    pub gradient_sign: f64,
    /// Coupling switched on only for t ∈ [on, off] (µs into the window).
    pub gate: Option<(f64, f64)>,
}

impl ScheduleEntry {
    pub fn store(coupling: CouplingVector) -> Self {
        Self { event: Event::Store, coupling: Some(coupling), gradient_sign: 1.0, gate: None }
    }

    pub fn recall(coupling: CouplingVector) -> Self {
        Self { event: Event::Recall, coupling: Some(coupling), gradient_sign: -1.0, gate: None }
    }

    pub fn hold() -> Self {
        Self { event: Event::Hold, coupling: None, gradient_sign: 0.0, gate: None }
    }

    pub fn idle() -> Self {
        Self { event: Event::Idle, coupling: None, gradient_sign: 0.0, gate: None }
    }

    pub fn with_gate(mut self, on: f64, off: f64) -> Self {
        self.gate = Some((on, off));
        self
    }

    pub(crate) fn check(&self, n_modes: usize) -> Result<()> {
        match self.event {
            Event::Store | Event::Recall => {
                let c = self
                    .coupling
                    .as_ref()
                    .ok_or_else(|| Error::Schedule(format!("{:?} event without coupling", self.event)))?;
                if c.len() != n_modes {
                    return Err(Error::Dimension { expected: n_modes, got: c.len() });
                }
                if c.is_zero() {
                    return Err(Error::Schedule(format!("{:?} event with zero coupling", self.event)));
                }
                if self.gradient_sign.abs() != 1.0 {
                    return Err(Error::Schedule(format!("gradient sign must be ±1, got {}", self.gradient_sign)));
                }
            }
            Event::Hold | Event::Idle => {
                if self.coupling.as_ref().is_some_and(|c| !c.is_zero()) {
                    return Err(Error::Schedule(format!("{:?} event must have the coupling off", self.event)));
                }
            }
        }
        Ok(())
    }
}

/// Grid of (window × cell) events.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub windows: Vec<Vec<ScheduleEntry>>,
}

impl Schedule {
    pub fn new(windows: Vec<Vec<ScheduleEntry>>) -> Self {
        Self { windows }
    }

    /// Every cell stores with its `write` coupling in the first window, holds
    /// for `holds` windows and recalls with its `read` coupling in the last.
    pub fn store_then_recall(write: &[CouplingVector], read: &[CouplingVector], holds: usize) -> Self {
        let mut windows = vec![write.iter().cloned().map(ScheduleEntry::store).collect::<Vec<_>>()];
        windows.extend((0..holds).map(|_| vec![ScheduleEntry::hold(); write.len()]));
        windows.push(read.iter().cloned().map(ScheduleEntry::recall).collect());
        Self { windows }
    }

    /// Apply gates to every store and recall entry.
    pub fn gated(mut self, store: Option<(f64, f64)>, recall: Option<(f64, f64)>) -> Self {
        for e in self.windows.iter_mut().flatten() {
            match e.event {
                Event::Store => e.gate = store,
                Event::Recall => e.gate = recall,
                _ => {}
            }
        }
        self
    }

    pub fn n_windows(&self) -> usize {
        self.windows.len()
    }

    pub fn n_cells(&self) -> usize {
        self.windows.first().map_or(0, Vec::len)
    }

    /// Windows in which at least one cell recalls.
    pub fn output_windows(&self) -> Vec<usize> {
        (0..self.windows.len()).filter(|&w| self.windows[w].iter().any(|e| e.event == Event::Recall)).collect()
    }

    /// Column of entries for one cell.
    pub fn column(&self, cell: usize) -> Vec<ScheduleEntry> {
        self.windows.iter().map(|w| w[cell].clone()).collect()
    }

    pub fn validate(&self, cells: &[MemoryCell], n_modes: usize) -> Result<()> {
        if self.windows.is_empty() {
            return Err(Error::Schedule("schedule has no windows".into()));
        }
        let mut stored = vec![false; cells.len()];
        for (w, window) in self.windows.iter().enumerate() {
            if window.len() != cells.len() {
                return Err(Error::Schedule(format!(
                    "window {w} has {} entries for {} cells",
                    window.len(),
                    cells.len()
                )));
            }
            for (c, e) in window.iter().enumerate() {
                e.check(n_modes).map_err(|err| Error::Schedule(format!("window {w}, cell {c}: {err}")))?;
                match e.event {
                    Event::Store | Event::Recall if cells[c].gradient == 0.0 => {
                        return Err(Error::Schedule(format!("cell {c} has no gradient in window {w}")));
                    }
                    Event::Store => stored[c] = true,
                    Event::Recall if !stored[c] => {
                        return Err(Error::Schedule(format!("cell {c} recalls in window {w} before storing")));
                    }
                    _ => {}
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default)]
pub struct NetworkOptions {
    /// Apply per-mode dispersion phases at cell boundaries (couplings
    /// co-propagate, so they are co-rotated with the probes).
    pub dispersion: bool,
    /// Record a heatmap sample every `n` steps.
    pub heatmap_stride: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindowEnergy {
    pub input: f64,
    pub output: f64,
    /// Stored spin energy summed over cells at the end of the window.
    pub stored: f64,
}

#[derive(Clone, Debug)]
pub struct NetworkResult {
    /// Output envelopes per window.
    pub outputs: Vec<FieldOutput>,
    pub window_energies: Vec<WindowEnergy>,
    /// Residual spins at the end of the run.
    pub spins: Vec<SpinState>,
    pub output_windows: Vec<usize>,
    /// Output energy in the designated windows over total input energy.
    pub efficiency: f64,
    pub overlap: Option<f64>,
    pub heatmap: Option<Heatmap>,
}

impl NetworkResult {
    /// Output of the first designated output window.
    pub fn primary_output(&self) -> Option<&FieldOutput> {
        self.output_windows.first().map(|&w| &self.outputs[w])
    }
}

/// Integrate cells in series through every window of `schedule`.
///
/// `inputs[w]` enters the first cell during window w; missing windows get no
/// input.
pub fn simulate_network(
    cells: &[MemoryCell],
    spectrum: &ModeSpectrum,
    schedule: &Schedule,
    inputs: &[FieldInput],
    grid: &Grid,
    options: &NetworkOptions,
) -> Result<NetworkResult> {
    let nm = spectrum.n_modes();
    schedule.validate(cells, nm)?;
    if let Some(bad) = inputs.iter().find(|f| f.n_modes() != nm) {
        return Err(Error::Dimension { expected: nm, got: bad.n_modes() });
    }

    let (in_phases, out_phases) = if options.dispersion {
        let mut acc = vec![0.0; nm];
        let mut ins = Vec::new();
        let mut outs = Vec::new();
        for cell in cells {
            let phi = dispersion_phase(&cell.atoms, spectrum, 1.0)?;
            ins.push(Some(acc.iter().map(|a| C64::from_polar(1.0, *a)).collect::<Vec<_>>()));
            outs.push(Some(phi.iter().map(|p| C64::from_polar(1.0, *p)).collect::<Vec<_>>()));
            acc.iter_mut().zip(&phi).for_each(|(a, p)| *a += p);
        }
        (ins, outs)
    } else {
        (vec![None; cells.len()], vec![None; cells.len()])
    };

    let mut spins = vec![SpinState::zeros(grid); cells.len()];
    let zero_input = FieldInput::zeros(nm, grid);
    let mut outputs = Vec::with_capacity(schedule.n_windows());
    let mut window_energies = Vec::with_capacity(schedule.n_windows());
    let mut heatmap = options.heatmap_stride.map(|s| Heatmap::new(grid, cells.len(), s));

    for (w, window) in schedule.windows.iter().enumerate() {
        let cws = cells
            .iter()
            .zip(window)
            .enumerate()
            .map(|(c, (cell, e))| CellWindow::new(cell, e, spectrum, in_phases[c].as_deref(), out_phases[c].clone()))
            .collect::<Result<Vec<_>>>()?;
        let input = inputs.get(w).unwrap_or(&zero_input);
        let run = integrate_window(&cws, &mut spins, input, grid, options.heatmap_stride)?;
        if let Some(h) = heatmap.as_mut() {
            h.push_window(run.field_rows, run.spin_rows);
        }
        window_energies.push(WindowEnergy {
            input: input.energy(grid.dt),
            output: run.output.energy(grid.dt),
            stored: cells.iter().zip(&spins).map(|(c, s)| s.stored_energy(c.atoms.density())).sum(),
        });
        outputs.push(run.output);
    }

    let output_windows = schedule.output_windows();
    let e_in: f64 = window_energies.iter().map(|e| e.input).sum();
    let e_out: f64 = output_windows.iter().map(|&w| window_energies[w].output).sum();
    let efficiency = if e_in > 0.0 { e_out / e_in } else { 0.0 };
    Ok(NetworkResult { outputs, window_energies, spins, output_windows, efficiency, overlap: None, heatmap })
}

/// Recalled temporal mode of a lone cell driven on a single mode with the
/// same Ω̃ per window as `template` (one cell's column of a schedule),
/// rescaled to carry the energy of `pulse`.
///
/// This is the temporal shape every ideal network output should have.
pub fn reference_echo(
    cell: &MemoryCell,
    spectrum: &ModeSpectrum,
    template: &[ScheduleEntry],
    pulse: &FieldInput,
    grid: &Grid,
) -> Result<Vec<C64>> {
    let mean = spectrum.mean_detuning();
    let single = ModeSpectrum::with_guard(vec![mean], f64::INFINITY)?;
    let windows = template
        .iter()
        .map(|e| {
            let mut e = e.clone();
            if let Some(c) = &e.coupling {
                let ot = omega_tilde(c, spectrum)?;
                e.coupling = Some(CouplingVector::new(vec![C64::new(ot * mean, 0.0)])?);
            }
            Ok(vec![e])
        })
        .collect::<Result<Vec<_>>>()?;
    let schedule = Schedule::new(windows);
    let out = schedule.output_windows();
    if out.len() != 1 {
        return Err(Error::Schedule(format!("reference echo needs exactly one recall window, found {}", out.len())));
    }
    if pulse.n_modes() != 1 {
        return Err(Error::Dimension { expected: 1, got: pulse.n_modes() });
    }
    let res = simulate_network(
        std::slice::from_ref(cell),
        &single,
        &schedule,
        std::slice::from_ref(pulse),
        grid,
        &NetworkOptions::default(),
    )?;
    let echo = res.outputs[out[0]].samples[0].clone();
    let e_echo = super::trapz(echo.iter().map(|x| x.norm_sqr()), grid.dt);
    if e_echo == 0.0 {
        return Err(Error::UndefinedOverlap);
    }
    let scale = (pulse.energy(grid.dt) / e_echo).sqrt();
    Ok(echo.into_iter().map(|x| x * scale).collect())
}

/// Realized mode-transfer matrix of a network.
///
/// Runs one simulation per input mode j with `pulse` (single-mode temporal
/// shape) entering in window 0, and projects each output mode k onto the
/// reference echo of cell 0: entry (k, j) = ⟨r̂, E_k^out⟩ / ∫|pulse|².
pub fn extract_transfer_matrix(
    cells: &[MemoryCell],
    spectrum: &ModeSpectrum,
    schedule: &Schedule,
    pulse: &FieldInput,
    grid: &Grid,
    options: &NetworkOptions,
) -> Result<DMatrix<C64>> {
    let nm = spectrum.n_modes();
    let reference = reference_echo(&cells[0], spectrum, &schedule.column(0), pulse, grid)?;
    let e_in = pulse.energy(grid.dt);
    let opts = NetworkOptions { heatmap_stride: None, ..options.clone() };
    let columns = (0..nm)
        .into_par_iter()
        .map(|j| {
            let input = pulse.embed_mode(nm, j);
            let res = simulate_network(cells, spectrum, schedule, &[input], grid, &opts)?;
            let out = res.primary_output().ok_or_else(|| Error::Schedule("schedule never recalls".into()))?;
            Ok((0..nm).map(|k| inner(&reference, out.mode(k), grid.dt) / e_in).collect::<Vec<_>>())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DMatrix::from_fn(nm, nm, |k, j| columns[j][k]))
}
