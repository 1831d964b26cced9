//! JSON scenario files: parsing, cross-checks, execution and reports.
//!
//! Frequencies are given in MHz and times in µs; everything is converted to
//! rad·µs⁻¹ on load. Complex vectors and matrices are `{"re": .., "im": ..}`.

use std::path::Path;
use std::time::Instant;

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::compiler::{compile_read, compile_write, ideal_transfer, validate_plan, MemoryPlan, PlanJson};
use crate::error::{Error, Result};
use crate::fock::{self, Action, GateStage, Policy, StageRole};
use crate::modes::{AtomicParams, CouplingVector, ModeSpectrum};
use crate::pde::{
    efficiency_and_overlap, extract_transfer_matrix, ideal_output, reference_echo, simulate_cell, simulate_shared_state,
    simulate_network, FieldInput, Grid, Heatmap, MemoryCell, NetworkOptions, Schedule, ScheduleEntry, SpinState,
    WindowEnergy,
};
use crate::regime::{MarginReport, DEFAULT_THRESHOLD};
use crate::unitary::{ComplexMatrix, UnitarySpec};
use crate::units::{gaussian_spectral_fwhm, mhz_to_rad_per_us as mhz};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub description: String,
    pub spectrum: Option<SpectrumConfig>,
    pub atoms: Option<AtomsConfig>,
    pub cells: Option<CellsConfig>,
    pub operations: Option<OperationsConfig>,
    pub pulse: Option<PulseConfig>,
    pub grid: Option<GridConfig>,
    #[serde(default)]
    pub outputs: OutputsConfig,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    pub fock: Option<FockConfig>,
    pub shared_sweep: Option<SharedSweepConfig>,
}

fn default_threshold() -> f64 {
    DEFAULT_THRESHOLD
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumConfig {
    /// Explicit detunings, or `base_mhz + k·spacing_mhz` for k < n_modes.
    pub detunings_mhz: Option<Vec<f64>>,
    pub base_mhz: Option<f64>,
    pub spacing_mhz: Option<f64>,
    pub n_modes: Option<usize>,
    #[serde(default = "default_guard")]
    pub guard: f64,
}

fn default_guard() -> f64 {
    ModeSpectrum::DEFAULT_GUARD
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AtomsConfig {
    pub decay_mhz: f64,
    pub dephasing_mhz: f64,
    #[serde(default)]
    pub two_photon_detuning_mhz: f64,
    pub optical_depth: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellsConfig {
    /// Defaults to one memory per mode.
    pub count: Option<usize>,
    /// Gradient span across a cell, MHz.
    pub gradient_mhz: Option<f64>,
    /// Gradient span as a multiple of the pulse's spectral FWHM.
    pub gradient_fwhm_multiple: Option<f64>,
    /// Gradient-echo coupling d = βΓΩ̃²/η used to set Ω̃.
    pub gem_coupling: Option<f64>,
    /// Ω̃ directly (dimensionless); overrides `gem_coupling`.
    pub omega_tilde: Option<f64>,
    #[serde(default = "yes")]
    pub absorption: bool,
    #[serde(default)]
    pub stark_compensation: bool,
}

fn yes() -> bool {
    true
}

/// A unitary by construction rule or by entries.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum UnitaryConfig {
    Identity { n: Option<usize> },
    Hadamard,
    Swap { a: usize, b: usize, n: Option<usize> },
    Haar { seed: u64, n: Option<usize> },
    /// Nonlinear-sign gate (3 modes).
    Ns,
    Matrix { re: Vec<Vec<f64>>, im: Vec<Vec<f64>> },
}

impl UnitaryConfig {
    fn build(&self, default_n: Option<usize>, path: &str) -> Result<UnitarySpec> {
        let need_n = |n: &Option<usize>| {
            n.or(default_n).ok_or_else(|| Error::config(format!("{path}.n"), "dimension needed (no spectrum to infer it from)"))
        };
        let wrap = |e: Error| Error::config(path, e.to_string());
        match self {
            Self::Identity { n } => Ok(UnitarySpec::identity(need_n(n)?)),
            Self::Hadamard => Ok(UnitarySpec::hadamard()),
            Self::Swap { a, b, n } => {
                let n = need_n(n)?;
                if *a >= n || *b >= n {
                    return Err(Error::config(path, format!("swap({a},{b}) outside {n} modes")));
                }
                Ok(UnitarySpec::swap(n, *a, *b))
            }
            Self::Haar { seed, n } => {
                Ok(UnitarySpec::haar(need_n(n)?, &mut rand_chacha::ChaCha8Rng::seed_from_u64(*seed)))
            }
            Self::Ns => fock::ns_gate().map_err(wrap),
            Self::Matrix { re, im } => {
                let m = ComplexMatrix { re: re.clone(), im: im.clone() }.to_matrix().map_err(wrap)?;
                UnitarySpec::new(m, "matrix").map_err(wrap)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperationsConfig {
    pub write: UnitaryConfig,
    pub read: UnitaryConfig,
    /// Hold windows between storage and recall.
    #[serde(default)]
    pub holds: usize,
    pub store_gate_us: Option<[f64; 2]>,
    pub recall_gate_us: Option<[f64; 2]>,
    /// Per-mode dispersion phases between cells.
    #[serde(default)]
    pub dispersion: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComplexVec {
    pub re: Vec<f64>,
    #[serde(default)]
    pub im: Vec<f64>,
}

impl ComplexVec {
    fn to_vec(&self, path: &str) -> Result<Vec<C64>> {
        if !self.im.is_empty() && self.im.len() != self.re.len() {
            return Err(Error::config(path, "re and im lengths differ"));
        }
        Ok((0..self.re.len()).map(|i| C64::new(self.re[i], self.im.get(i).copied().unwrap_or(0.0))).collect())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PulseShape {
    Gaussian,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PulseConfig {
    pub shape: PulseShape,
    pub fwhm_us: f64,
    pub center_us: f64,
    pub mode_amplitudes: ComplexVec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub nz: usize,
    pub window_us: f64,
    pub dt_us: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputsConfig {
    /// Record heatmaps every this many steps; 0 disables them.
    #[serde(default = "default_stride")]
    pub heatmap_stride: usize,
    #[serde(default)]
    pub transfer: bool,
    /// Also run with excited-state absorption switched on.
    #[serde(default)]
    pub compare_absorption: bool,
}

fn default_stride() -> usize {
    10
}

impl Default for OutputsConfig {
    fn default() -> Self {
        Self { heatmap_stride: default_stride(), transfer: false, compare_absorption: false }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FockConfig {
    /// Ancilla occupations appended after the four rail modes.
    #[serde(default)]
    pub ancilla: Vec<u8>,
    pub stages: Vec<StageConfig>,
    pub policy: PolicyConfig,
    pub target: FockTarget,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FockTarget {
    Cz,
    Identity,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageConfig {
    pub label: String,
    pub role: StageRole,
    /// Applied in order; merged into one stage unitary.
    pub ops: Vec<OpConfig>,
    #[serde(default)]
    pub measured: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OpConfig {
    pub unitary: UnitaryConfig,
    pub modes: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyConfig {
    #[serde(default)]
    pub accept: Vec<Vec<u8>>,
    #[serde(default)]
    pub reject: Vec<Vec<u8>>,
    pub default: Option<PolicyDefault>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyDefault {
    Accept,
    Reject,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SharedSweepConfig {
    /// Target mode-spacing margins; the two-mode splitting is set from each.
    pub margins9: Vec<f64>,
    #[serde(default)]
    pub input_mode: usize,
}

/// Parsed and cross-checked scenario.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub hash: String,
    spectrum: Option<ModeSpectrum>,
    atoms: Option<AtomicParams>,
}

/// Network pieces derived from a config.
#[derive(Clone, Debug)]
pub struct NetworkSetup {
    pub spectrum: ModeSpectrum,
    pub cells: Vec<MemoryCell>,
    pub write: MemoryPlan,
    pub read: MemoryPlan,
    pub u_in: UnitarySpec,
    pub u_out: UnitarySpec,
    pub schedule: Schedule,
    pub grid: Grid,
    pub amplitudes: Vec<C64>,
    pub pulse: PulseConfig,
    pub options: NetworkOptions,
}

impl NetworkSetup {
    pub fn input(&self) -> FieldInput {
        FieldInput::gaussian(&self.amplitudes, self.pulse.center_us, self.pulse.fwhm_us, &self.grid)
    }

    /// Unit-amplitude single-mode pulse with the same temporal shape.
    pub fn unit_pulse(&self) -> FieldInput {
        FieldInput::gaussian(&[C64::new(1.0, 0.0)], self.pulse.center_us, self.pulse.fwhm_us, &self.grid)
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let config: ScenarioConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            Error::config(if path == "." { "(root)".to_owned() } else { path }, e.into_inner().to_string())
        })?;
        Self::new(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(path.display().to_string(), format!("cannot read: {e}")))?;
        Self::from_json(&text)
    }

    pub fn new(config: ScenarioConfig) -> Result<Self> {
        let hash = sha256_hex(&serde_json::to_vec(&config).expect("config serializes"));
        let spectrum = config.spectrum.as_ref().map(build_spectrum).transpose()?;
        let atoms = config
            .atoms
            .as_ref()
            .map(|a| {
                AtomicParams::new(mhz(a.decay_mhz), mhz(a.dephasing_mhz), mhz(a.two_photon_detuning_mhz), a.optical_depth)
                    .map_err(|e| Error::config("atoms", e.to_string()))
            })
            .transpose()?;
        if !(config.threshold > 0.0) {
            return Err(Error::config("threshold", "must be positive"));
        }
        let s = Self { config, hash, spectrum, atoms };
        if s.config.operations.is_some() {
            s.network(1.0)?;
        }
        if s.config.shared_sweep.is_some() {
            s.sweep_base()?;
        }
        if let Some(f) = &s.config.fock {
            s.fock_stages(f)?;
            fock_policy(&f.policy)?;
        }
        if s.config.operations.is_none() && s.config.fock.is_none() && s.config.shared_sweep.is_none() {
            return Err(Error::config("(root)", "nothing to run: need `operations`, `fock` or `shared_sweep`"));
        }
        Ok(s)
    }

    fn require<'a, T>(&self, v: &'a Option<T>, path: &str) -> Result<&'a T> {
        v.as_ref().ok_or_else(|| Error::config(path, "missing field"))
    }

    fn cell_template(&self, pulse: &PulseConfig) -> Result<(MemoryCell, f64)> {
        let atoms = *self.require(&self.atoms, "atoms")?;
        let cc = self.require(&self.config.cells, "cells")?;
        let eta = match (cc.gradient_mhz, cc.gradient_fwhm_multiple) {
            (Some(g), None) => mhz(g),
            (None, Some(m)) => m * gaussian_spectral_fwhm(pulse.fwhm_us),
            (None, None) => 2.0 * gaussian_spectral_fwhm(pulse.fwhm_us),
            (Some(_), Some(_)) => {
                return Err(Error::config("cells", "give gradient_mhz or gradient_fwhm_multiple, not both"))
            }
        };
        if !(eta.is_finite() && eta != 0.0) {
            return Err(Error::config("cells.gradient_mhz", "gradient must be non-zero"));
        }
        let mut cell = MemoryCell::new("cell", atoms, eta);
        cell.absorption = cc.absorption;
        cell.stark_compensation = cc.stark_compensation;
        let ot = match (cc.omega_tilde, cc.gem_coupling) {
            (Some(o), _) => o,
            (None, Some(d)) => cell.omega_tilde_for(d),
            (None, None) => return Err(Error::config("cells.gem_coupling", "missing field (or give omega_tilde)")),
        };
        if !(ot > 0.0 && ot.is_finite()) {
            return Err(Error::config("cells.omega_tilde", "must be positive"));
        }
        Ok((cell, ot))
    }

    /// Build everything a network run needs, with the grid refined by
    /// `grid_scale`.
    pub fn network(&self, grid_scale: f64) -> Result<NetworkSetup> {
        let ops = self.require(&self.config.operations, "operations")?;
        let spectrum = self.require(&self.spectrum, "spectrum")?.clone();
        let pulse = self.require(&self.config.pulse, "pulse")?.clone();
        let gc = self.require(&self.config.grid, "grid")?;
        let n = spectrum.n_modes();
        let (template, ot) = self.cell_template(&pulse)?;
        let count = self.config.cells.as_ref().and_then(|c| c.count).unwrap_or(n);
        if count != n {
            return Err(Error::config("cells.count", format!("{count} cells for {n} modes; one memory per mode needed")));
        }
        let cells: Vec<MemoryCell> =
            (0..n).map(|i| MemoryCell { id: format!("m{i}"), ..template.clone() }).collect();
        let u_in = ops.write.build(Some(n), "operations.write")?;
        let u_out = ops.read.build(Some(n), "operations.read")?;
        for (u, p) in [(&u_in, "operations.write"), (&u_out, "operations.read")] {
            if u.dim() != n {
                return Err(Error::config(p, format!("{}-mode unitary for {n} modes", u.dim())));
            }
        }
        let write = compile_write(&u_in, &spectrum, ot)?;
        let read = compile_read(&u_out, &spectrum, ot)?;
        let gate = |g: Option<[f64; 2]>| g.map(|[a, b]| (a, b));
        let schedule = Schedule::store_then_recall(&write.memories, &read.memories, ops.holds)
            .gated(gate(ops.store_gate_us), gate(ops.recall_gate_us));
        schedule.validate(&cells, n).map_err(|e| Error::config("operations", e.to_string()))?;
        let grid = Grid::new(gc.nz, gc.window_us, gc.dt_us)
            .and_then(|g| if grid_scale == 1.0 { Ok(g) } else { g.scaled(grid_scale) })
            .map_err(|e| Error::config("grid", e.to_string()))?;
        if !(pulse.fwhm_us > 0.0) {
            return Err(Error::config("pulse.fwhm_us", "must be positive"));
        }
        let amplitudes = pulse.mode_amplitudes.to_vec("pulse.mode_amplitudes")?;
        if amplitudes.len() != n {
            return Err(Error::config("pulse.mode_amplitudes", format!("{} amplitudes for {n} modes", amplitudes.len())));
        }
        if amplitudes.iter().all(|a| a.norm() == 0.0) {
            return Err(Error::config("pulse.mode_amplitudes", "all amplitudes are zero"));
        }
        let stride = self.config.outputs.heatmap_stride;
        let options = NetworkOptions { dispersion: ops.dispersion, heatmap_stride: (stride > 0).then_some(stride) };
        Ok(NetworkSetup { spectrum, cells, write, read, u_in, u_out, schedule, grid, amplitudes, pulse, options })
    }

    /// Validity margins of the compiled plans, worst over write and read.
    pub fn margins(&self) -> Result<Option<MarginReport>> {
        if self.config.operations.is_none() {
            return Ok(None);
        }
        let net = self.network(1.0)?;
        let w = validate_plan(&net.write, &net.spectrum, &net.cells[0], self.config.threshold)?;
        let r = validate_plan(&net.read, &net.spectrum, &net.cells[0], self.config.threshold)?;
        Ok(Some(MarginReport::new(w.margin7.min(r.margin7), w.margin9.min(r.margin9), self.config.threshold)))
    }

    fn fock_stages(&self, f: &FockConfig) -> Result<Vec<GateStage>> {
        let n_total = 4 + f.ancilla.len();
        let mut width = n_total;
        let mut out = Vec::new();
        for (i, sc) in f.stages.iter().enumerate() {
            let path = format!("fock.stages[{i}]");
            let mut modes: Vec<usize> = sc.ops.iter().flat_map(|o| o.modes.iter().copied()).collect();
            modes.sort_unstable();
            modes.dedup();
            if let Some(&m) = modes.iter().find(|&&m| m >= width) {
                return Err(Error::config(&path, format!("mode {m} outside the {width} live modes")));
            }
            if modes.is_empty() {
                return Err(Error::config(&path, "stage acts on no modes"));
            }
            let mut u = DMatrix::<C64>::identity(modes.len(), modes.len());
            for (j, op) in sc.ops.iter().enumerate() {
                let opath = format!("{path}.ops[{j}]");
                let local: Vec<usize> =
                    op.modes.iter().map(|m| modes.iter().position(|x| x == m).expect("collected")).collect();
                let spec = op.unitary.build(Some(op.modes.len()), &format!("{opath}.unitary"))?;
                let embedded = spec.embed(modes.len(), &local).map_err(|e| Error::config(&opath, e.to_string()))?;
                u = embedded.matrix() * u;
            }
            let unitary = UnitarySpec::new(u, sc.label.clone()).map_err(|e| Error::config(&path, e.to_string()))?;
            let mut stage = GateStage::new(sc.label.clone(), sc.role, unitary, modes);
            if !sc.measured.is_empty() {
                let k = sc.measured.len();
                let mut sorted = sc.measured.clone();
                sorted.sort_unstable();
                if sorted != ((width - k)..width).collect::<Vec<_>>() {
                    return Err(Error::config(format!("{path}.measured"), "must be the highest-indexed live modes"));
                }
                width -= k;
                stage = stage.measuring(sc.measured.clone());
            }
            out.push(stage);
        }
        if width != 4 {
            return Err(Error::config("fock.stages", format!("{width} modes left after measurement; expected the 4 rails")));
        }
        Ok(out)
    }

    fn sweep_base(&self) -> Result<(MemoryCell, f64, f64, PulseConfig, GridConfig)> {
        let spectrum = self.require(&self.spectrum, "spectrum")?;
        let pulse = self.require(&self.config.pulse, "pulse")?.clone();
        let gc = self.require(&self.config.grid, "grid")?.clone();
        let (cell, ot) = self.cell_template(&pulse)?;
        let sw = self.config.shared_sweep.as_ref().expect("checked by caller");
        if sw.input_mode > 1 {
            return Err(Error::config("shared_sweep.input_mode", "must be 0 or 1"));
        }
        if sw.margins9.iter().any(|m| !(*m > 0.0)) {
            return Err(Error::config("shared_sweep.margins9", "margins must be positive"));
        }
        Ok((cell, ot, spectrum.mean_detuning(), pulse, gc))
    }

    pub fn run(&self, opts: &RunOptions) -> Result<RunOutput> {
        let start = Instant::now();
        let mut report = RunReport::new(self, "run", opts.grid_scale);
        let mut heatmap = None;
        let mut transfer = None;
        if self.config.operations.is_some() {
            let net = self.network(opts.grid_scale)?;
            report.margins = self.margins()?;
            let res = simulate_network(&net.cells, &net.spectrum, &net.schedule, &[net.input()], &net.grid, &net.options)?;
            let reference = reference_echo(&net.cells[0], &net.spectrum, &net.schedule.column(0), &net.unit_pulse(), &net.grid)?;
            let ideal = ideal_transfer(&net.u_in, &net.u_out, 1.0, 1.0)?;
            let ideal_out = ideal_output(&ideal.matrix, &net.amplitudes, &reference);
            let out = res.primary_output().ok_or_else(|| Error::Schedule("no recall window".into()))?;
            let (_, overlap) = efficiency_and_overlap(out, &ideal_out, net.grid.dt)?;
            report.efficiency = Some(res.efficiency);
            report.overlap = Some(overlap);
            report.window_energies = res.window_energies.clone();
            report.grid = Some(net.grid);
            report.ideal_transfer = Some(ComplexMatrix::from(&ideal.matrix));
            report.gem = Some(GemReport {
                gradient: net.cells[0].gradient,
                omega_tilde: net.write.omega_tilde,
                coupling: net.cells[0].gem_coupling(net.write.omega_tilde),
                absorption: net.cells[0].absorption,
                stark_compensation: net.cells[0].stark_compensation,
            });
            heatmap = res.heatmap;
            if self.config.outputs.compare_absorption && !net.cells[0].absorption {
                let cells: Vec<_> = net.cells.iter().map(|c| MemoryCell { absorption: true, ..c.clone() }).collect();
                let plain = NetworkOptions { heatmap_stride: None, ..net.options.clone() };
                let r = simulate_network(&cells, &net.spectrum, &net.schedule, &[net.input()], &net.grid, &plain)?;
                report.efficiency_with_absorption = Some(r.efficiency);
            }
            if self.config.outputs.transfer {
                let m = self.transfer_of(&net)?;
                report.record_transfer(&m, &ideal.matrix);
                transfer = Some(m);
            }
        }
        if self.config.shared_sweep.is_some() {
            report.shared_sweep = Some(self.shared_sweep(opts.grid_scale)?);
        }
        if self.config.fock.is_some() {
            report.fock = Some(self.fock_report()?);
        }
        report.wall_time_s = start.elapsed().as_secs_f64();
        Ok(RunOutput { report, heatmap, transfer })
    }

    fn transfer_of(&self, net: &NetworkSetup) -> Result<DMatrix<C64>> {
        let opts = NetworkOptions { heatmap_stride: None, ..net.options.clone() };
        extract_transfer_matrix(&net.cells, &net.spectrum, &net.schedule, &net.unit_pulse(), &net.grid, &opts)
    }

    /// Transfer matrix only.
    pub fn extract_transfer(&self, opts: &RunOptions) -> Result<RunOutput> {
        let start = Instant::now();
        let net = self.network(opts.grid_scale)?;
        let mut report = RunReport::new(self, "extract-transfer", opts.grid_scale);
        report.margins = self.margins()?;
        report.grid = Some(net.grid);
        let ideal = ideal_transfer(&net.u_in, &net.u_out, 1.0, 1.0)?;
        report.ideal_transfer = Some(ComplexMatrix::from(&ideal.matrix));
        let m = self.transfer_of(&net)?;
        report.record_transfer(&m, &ideal.matrix);
        report.wall_time_s = start.elapsed().as_secs_f64();
        Ok(RunOutput { report, heatmap: None, transfer: Some(m) })
    }

    /// Dual-rail gate check over the four basis states and |++⟩.
    pub fn fock_report(&self) -> Result<FockReport> {
        let f = self.require(&self.config.fock, "fock")?;
        let stages = self.fock_stages(f)?;
        let policy = fock_policy(&f.policy)?;
        let one = C64::new(1.0, 0.0);
        let zero = C64::new(0.0, 0.0);
        let mut inputs: Vec<(String, [C64; 4])> = ["00", "01", "10", "11"]
            .iter()
            .enumerate()
            .map(|(q, l)| {
                let mut v = [zero; 4];
                v[q] = one;
                (l.to_string(), v)
            })
            .collect();
        inputs.push(("++".into(), [C64::new(0.5, 0.0); 4]));
        let mut cases = Vec::new();
        for (label, q) in inputs {
            let input = fock::dual_rail_state(q, &f.ancilla)?;
            let r = fock::run_with_feedforward(&stages, &input, &policy)?;
            let mut target_q = q;
            if f.target == FockTarget::Cz {
                target_q[3] = -target_q[3];
            }
            let target = fock::dual_rail_state(target_q, &[])?;
            let fidelity = r
                .accepted
                .iter()
                .map(|o| o.conditioned_state.fidelity(&target))
                .fold(if r.accepted.is_empty() { 0.0 } else { 1.0 }, f64::min);
            cases.push(FockCase {
                input: label,
                success_probability: r.success_probability,
                failure_probability: r.failure_probability,
                fidelity,
                accepted_patterns: r.accepted.iter().map(|o| o.pattern.clone()).collect(),
            });
        }
        let min_fidelity = cases.iter().map(|c| c.fidelity).fold(1.0, f64::min);
        let mut stage_plans = Vec::new();
        if let (Some(spectrum), Some(pulse)) = (&self.spectrum, &self.config.pulse) {
            let (_, ot) = self.cell_template(pulse)?;
            for s in &stages {
                let u = s.full_unitary(4 + f.ancilla.len())?;
                if u.dim() == spectrum.n_modes() {
                    stage_plans.push(StagePlan { label: s.label.clone(), plan: compile_write(&u, spectrum, ot)?.to_json() });
                }
            }
        }
        Ok(FockReport { cases, min_fidelity, stage_plans })
    }

    /// Storage efficiency of the multi-Λ and shared-excited-state models for
    /// two modes at each target margin.
    pub fn shared_sweep(&self, grid_scale: f64) -> Result<Vec<SweepPoint>> {
        let (cell, ot, centre, pulse, gc) = self.sweep_base()?;
        let sw = self.config.shared_sweep.as_ref().expect("present");
        let mut points = Vec::new();
        for &target in &sw.margins9 {
            // the bandwidth hardly depends on the splitting; one pass is enough
            let trial = two_mode_spectrum(centre, 1.0)?;
            let bw = cell.bandwidth_rates(&equal_coupling(&trial, ot)?, &trial)?;
            let split = target * 2f64.sqrt() * bw.gamma_eff.max(bw.delta_eff.abs());
            let spectrum = two_mode_spectrum(centre, split)?;
            let coupling = equal_coupling(&spectrum, ot)?;
            let plan = MemoryPlan { memories: vec![coupling.clone()], omega_tilde: ot };
            let margins = validate_plan(&plan, &spectrum, &cell, self.config.threshold)?;
            let dt = (gc.dt_us / grid_scale).min(2.0 * std::f64::consts::PI / (crate::pde::POINTS_PER_BEAT * split));
            let nt = (gc.window_us / dt).ceil() as usize;
            let nz = (((gc.nz - 1) as f64) * grid_scale).round() as usize + 1;
            let grid = Grid::new(nz, gc.window_us, gc.window_us / nt as f64)?;
            let mut amps = [C64::new(0.0, 0.0); 2];
            amps[sw.input_mode] = C64::new(1.0, 0.0);
            let input = FieldInput::gaussian(&amps, pulse.center_us, pulse.fwhm_us, &grid);
            let e_in = input.energy(grid.dt);
            let entry = ScheduleEntry::store(coupling);
            let spin = SpinState::zeros(&grid);
            let (_, s1) = simulate_cell(&cell, &entry, &spectrum, &input, &spin, &grid)?;
            let (_, s5) = simulate_shared_state(&cell, &entry, &spectrum, &input, &spin, &grid)?;
            let density = cell.atoms.density();
            let multi = s1.stored_energy(density) / e_in;
            let shared = s5.stored_energy(density) / e_in;
            points.push(SweepPoint {
                target_margin9: target,
                margin9: margins.margin9,
                margin7: margins.margin7,
                splitting_mhz: split / (2.0 * std::f64::consts::PI),
                dt_us: grid.dt,
                storage_multi: multi,
                storage_shared: shared,
                relative_deviation: (shared - multi) / multi,
            });
        }
        Ok(points)
    }

    pub fn validation_report(&self) -> Result<ValidationReport> {
        let margins = self.margins()?;
        let mut notes = Vec::new();
        if let Some(m) = &margins {
            if !m.pass7 || !m.pass9 {
                notes.push(format!("validity margins below threshold {}", m.threshold));
            }
            notes.extend(m.notes.iter().cloned());
        }
        Ok(ValidationReport {
            name: self.config.name.clone(),
            config_hash: self.hash.clone(),
            schema: "ok".into(),
            n_modes: self.spectrum.as_ref().map(|s| s.n_modes()),
            margins,
            notes,
        })
    }
}

fn build_spectrum(c: &SpectrumConfig) -> Result<ModeSpectrum> {
    let det = match (&c.detunings_mhz, c.base_mhz, c.spacing_mhz, c.n_modes) {
        (Some(d), None, None, None) => d.iter().map(|x| mhz(*x)).collect(),
        (None, Some(b), Some(s), Some(n)) => (0..n).map(|k| mhz(b + s * k as f64)).collect(),
        _ => {
            return Err(Error::config(
                "spectrum",
                "give either detunings_mhz, or base_mhz + spacing_mhz + n_modes",
            ))
        }
    };
    ModeSpectrum::with_guard(det, c.guard).map_err(|e| Error::config("spectrum", e.to_string()))
}

fn fock_policy(p: &PolicyConfig) -> Result<Policy> {
    let mut rules: Vec<(Vec<u8>, Action)> =
        p.accept.iter().map(|a| (a.clone(), Action::Accept { correction: None })).collect();
    for r in &p.reject {
        if p.accept.contains(r) {
            return Err(Error::config("fock.policy", format!("pattern {r:?} both accepted and rejected")));
        }
        rules.push((r.clone(), Action::Reject));
    }
    let default = p.default.map(|d| match d {
        PolicyDefault::Accept => Action::Accept { correction: None },
        PolicyDefault::Reject => Action::Reject,
    });
    Ok(Policy { rules, default })
}

fn two_mode_spectrum(centre: f64, split: f64) -> Result<ModeSpectrum> {
    ModeSpectrum::with_guard(vec![centre - 0.5 * split, centre + 0.5 * split], 0.95)
}

fn equal_coupling(spectrum: &ModeSpectrum, ot: f64) -> Result<CouplingVector> {
    let n = spectrum.n_modes() as f64;
    CouplingVector::new(spectrum.detunings().iter().map(|d| C64::new(ot * d / n.sqrt(), 0.0)).collect())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RunOptions {
    pub grid_scale: f64,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self { grid_scale: 1.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GemReport {
    pub gradient: f64,
    pub omega_tilde: f64,
    pub coupling: f64,
    pub absorption: bool,
    pub stark_compensation: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FockCase {
    pub input: String,
    pub success_probability: f64,
    pub failure_probability: f64,
    pub fidelity: f64,
    pub accepted_patterns: Vec<Vec<u8>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StagePlan {
    pub label: String,
    pub plan: PlanJson,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FockReport {
    pub cases: Vec<FockCase>,
    pub min_fidelity: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub stage_plans: Vec<StagePlan>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub target_margin9: f64,
    pub margin9: f64,
    pub margin7: f64,
    pub splitting_mhz: f64,
    pub dt_us: f64,
    pub storage_multi: f64,
    pub storage_shared: f64,
    pub relative_deviation: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub name: String,
    pub config_hash: String,
    pub schema: String,
    pub n_modes: Option<usize>,
    pub margins: Option<MarginReport>,
    pub notes: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub name: String,
    pub command: String,
    pub config_hash: String,
    pub grid_scale: f64,
    pub grid: Option<Grid>,
    pub efficiency: Option<f64>,
    pub overlap: Option<f64>,
    pub efficiency_with_absorption: Option<f64>,
    pub margins: Option<MarginReport>,
    pub gem: Option<GemReport>,
    pub window_energies: Vec<WindowEnergy>,
    pub transfer: Option<ComplexMatrix>,
    pub ideal_transfer: Option<ComplexMatrix>,
    /// |Tr(T_ideal† M)|² / (‖T_ideal‖² ‖M‖²).
    pub transfer_overlap: Option<f64>,
    /// ‖M‖² / ‖T_ideal‖²: mean per-mode efficiency of the transfer.
    pub transfer_efficiency: Option<f64>,
    pub fock: Option<FockReport>,
    pub shared_sweep: Option<Vec<SweepPoint>>,
    pub wall_time_s: f64,
}

impl RunReport {
    fn new(s: &Scenario, command: &str, grid_scale: f64) -> Self {
        Self {
            name: s.config.name.clone(),
            command: command.into(),
            config_hash: s.hash.clone(),
            grid_scale,
            grid: None,
            efficiency: None,
            overlap: None,
            efficiency_with_absorption: None,
            margins: None,
            gem: None,
            window_energies: Vec::new(),
            transfer: None,
            ideal_transfer: None,
            transfer_overlap: None,
            transfer_efficiency: None,
            fock: None,
            shared_sweep: None,
            wall_time_s: 0.0,
        }
    }

    fn record_transfer(&mut self, m: &DMatrix<C64>, ideal: &DMatrix<C64>) {
        let inner: C64 = ideal.iter().zip(m.iter()).map(|(a, b)| a.conj() * b).sum();
        let (nm, ni) = (m.norm_squared(), ideal.norm_squared());
        self.transfer_overlap = Some(if nm > 0.0 { (inner.norm_sqr() / (nm * ni)).min(1.0) } else { 0.0 });
        self.transfer_efficiency = Some(nm / ni);
        self.transfer = Some(ComplexMatrix::from(m));
    }

    /// Pretty JSON with the wall time zeroed, for byte comparisons.
    pub fn to_json_without_timing(&self) -> String {
        let mut r = self.clone();
        r.wall_time_s = 0.0;
        serde_json::to_string_pretty(&r).expect("report serializes")
    }
}

/// Report plus the arrays behind the CSV artifacts.
#[derive(Clone, Debug)]
pub struct RunOutput {
    pub report: RunReport,
    pub heatmap: Option<Heatmap>,
    pub transfer: Option<DMatrix<C64>>,
}

/// Long-format CSV: `row,col,re,im`.
pub fn transfer_csv(m: &DMatrix<C64>) -> String {
    let mut s = String::from("row,col,re,im\n");
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            s.push_str(&format!("{i},{j},{:e},{:e}\n", m[(i, j)].re, m[(i, j)].im));
        }
    }
    s
}

impl RunOutput {
    /// Write `report.json`, `heatmap_<obs>.csv` and `transfer.csv` as
    /// available.
    pub fn write(&self, dir: &Path) -> Result<Vec<std::path::PathBuf>> {
        std::fs::create_dir_all(dir)?;
        let mut written = Vec::new();
        let p = dir.join("report.json");
        std::fs::write(&p, serde_json::to_string_pretty(&self.report).expect("report serializes") + "\n")?;
        written.push(p);
        if let Some(h) = &self.heatmap {
            written.extend(h.write(dir)?);
        }
        if let Some(m) = &self.transfer {
            let p = dir.join("transfer.csv");
            std::fs::write(&p, transfer_csv(m))?;
            written.push(p);
        }
        Ok(written)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "name": "t",
        "spectrum": {"base_mhz": 250, "spacing_mhz": 15, "n_modes": 2},
        "atoms": {"decay_mhz": 6, "dephasing_mhz": 1e-5, "optical_depth": 100},
        "cells": {"gem_coupling": 0.55, "absorption": false, "stark_compensation": true},
        "operations": {"write": {"kind": "identity"}, "read": {"kind": "identity"}},
        "pulse": {"shape": "gaussian", "fwhm_us": 10, "center_us": 20, "mode_amplitudes": {"re": [1, 0]}},
        "grid": {"nz": 64, "window_us": 40, "dt_us": 0.1}
    }"#;

    fn err_path(text: &str) -> String {
        match Scenario::from_json(text) {
            Err(Error::Config { path, .. }) => path,
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn minimal_config_loads() {
        let s = Scenario::from_json(MINIMAL).unwrap();
        assert_eq!(s.hash.len(), 64);
        let net = s.network(1.0).unwrap();
        assert_eq!(net.cells.len(), 2);
        assert!((net.cells[0].gem_coupling(net.write.omega_tilde) - 0.55).abs() < 1e-12);
    }

    #[test]
    fn errors_name_the_path() {
        let v: serde_json::Value = serde_json::from_str(MINIMAL).unwrap();
        let mut no_spec = v.clone();
        no_spec.as_object_mut().unwrap().remove("spectrum");
        assert_eq!(err_path(&no_spec.to_string()), "spectrum");
        let mut bad = v.clone();
        bad["grid"]["nz"] = serde_json::json!("many");
        assert_eq!(err_path(&bad.to_string()), "grid.nz");
        let mut unknown = v.clone();
        unknown["atoms"]["colour"] = serde_json::json!(1);
        assert_eq!(err_path(&unknown.to_string()), "atoms.colour");
        let mut amps = v;
        amps["pulse"]["mode_amplitudes"]["re"] = serde_json::json!([1]);
        assert_eq!(err_path(&amps.to_string()), "pulse.mode_amplitudes");
    }

    #[test]
    fn non_unitary_matrix_is_rejected() {
        let mut v: serde_json::Value = serde_json::from_str(MINIMAL).unwrap();
        v["operations"]["write"] = serde_json::json!({"kind": "matrix", "re": [[1, 1], [1, 1]], "im": [[0, 0], [0, 0]]});
        assert_eq!(err_path(&v.to_string()), "operations.write");
    }

    #[test]
    fn hash_tracks_content() {
        let a = Scenario::from_json(MINIMAL).unwrap();
        let b = Scenario::from_json(&MINIMAL.replace("\"t\"", "\"u\"")).unwrap();
        assert_ne!(a.hash, b.hash);
        assert_eq!(a.hash, Scenario::from_json(MINIMAL).unwrap().hash);
    }
}
