//! Coupling-field plans that make a bank of N memories apply an N×N unitary.
//!
//! Memory j is driven with Ω_{j,k} = Ω̃ Δ_k U*_jk on probe mode k. During a
//! write it then absorbs Σ_k U_jk ℰ_k; during a read with a plan built from
//! U it re-emits its spin wave into mode k with weight U*_jk, so a full
//! write-then-read applies U_read† U_write.

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::modes::{omega_tilde, CouplingVector, ModeSpectrum};
use crate::pde::MemoryCell;
use crate::regime::{check_inequality_7, check_inequality_9, MarginReport};
use crate::unitary::UnitarySpec;

/// One coupling vector per memory, all with the same Ω̃.
#[derive(Clone, Debug, PartialEq)]
pub struct MemoryPlan {
    pub memories: Vec<CouplingVector>,
    pub omega_tilde: f64,
}

pub type WritePlan = MemoryPlan;
pub type ReadPlan = MemoryPlan;

fn compile(u: &UnitarySpec, spectrum: &ModeSpectrum, omega_tilde: f64) -> Result<MemoryPlan> {
    let n = spectrum.n_modes();
    if u.dim() != n {
        return Err(Error::Dimension { expected: n, got: u.dim() });
    }
    if !(omega_tilde > 0.0 && omega_tilde.is_finite()) {
        return Err(Error::Invalid(format!("omega_tilde must be positive, got {omega_tilde}")));
    }
    let m = u.matrix();
    let memories = (0..n)
        .map(|j| CouplingVector::new((0..n).map(|k| omega_tilde * spectrum.detuning(k) * m[(j, k)].conj()).collect()))
        .collect::<Result<_>>()?;
    Ok(MemoryPlan { memories, omega_tilde })
}

/// Plan that stores Σ_k U_jk ℰ_k in memory j.
pub fn compile_write(u: &UnitarySpec, spectrum: &ModeSpectrum, omega_tilde: f64) -> Result<WritePlan> {
    compile(u, spectrum, omega_tilde)
}

/// Plan whose recall maps spin waves to fields by U†.
pub fn compile_read(u: &UnitarySpec, spectrum: &ModeSpectrum, omega_tilde: f64) -> Result<ReadPlan> {
    compile(u, spectrum, omega_tilde)
}

impl MemoryPlan {
    pub fn n_memories(&self) -> usize {
        self.memories.len()
    }

    /// U_jk = Ω*_{j,k} / (Δ_k Ω̃), the matrix the plan encodes.
    pub fn reconstruct(&self, spectrum: &ModeSpectrum) -> DMatrix<C64> {
        let n = self.memories.len();
        let m = spectrum.n_modes();
        DMatrix::from_fn(n, m, |j, k| {
            self.memories[j].amplitudes()[k].conj() / (spectrum.detuning(k) * self.omega_tilde)
        })
    }

    /// Ω̃ of each memory's coupling.
    pub fn row_omega_tilde(&self, spectrum: &ModeSpectrum) -> Result<Vec<f64>> {
        self.memories.iter().map(|c| omega_tilde(c, spectrum)).collect()
    }

    pub fn to_json(&self) -> PlanJson {
        PlanJson {
            memories: self
                .memories
                .iter()
                .map(|c| MemoryJson {
                    omega_re: c.amplitudes().iter().map(|x| x.re).collect(),
                    omega_im: c.amplitudes().iter().map(|x| x.im).collect(),
                })
                .collect(),
            omega_tilde: self.omega_tilde,
        }
    }

    pub fn from_json(json: &PlanJson) -> Result<Self> {
        let memories = json
            .memories
            .iter()
            .map(|m| {
                if m.omega_re.len() != m.omega_im.len() {
                    return Err(Error::Dimension { expected: m.omega_re.len(), got: m.omega_im.len() });
                }
                CouplingVector::new(m.omega_re.iter().zip(&m.omega_im).map(|(&r, &i)| C64::new(r, i)).collect())
            })
            .collect::<Result<_>>()?;
        Ok(Self { memories, omega_tilde: json.omega_tilde })
    }
}

/// Serialized plan: `{"memories":[{"omega_re":[..],"omega_im":[..]}],"omega_tilde":x}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanJson {
    pub memories: Vec<MemoryJson>,
    pub omega_tilde: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MemoryJson {
    pub omega_re: Vec<f64>,
    pub omega_im: Vec<f64>,
}

/// Loss-scaled mode transfer of a write followed by a read.
#[derive(Clone, Debug, PartialEq)]
pub struct IdealTransfer {
    pub matrix: DMatrix<C64>,
    pub write_efficiency: f64,
    pub read_efficiency: f64,
}

/// √(η_w η_r) · U_out† · U_in.
pub fn ideal_transfer(u_in: &UnitarySpec, u_out: &UnitarySpec, eta_w: f64, eta_r: f64) -> Result<IdealTransfer> {
    for eta in [eta_w, eta_r] {
        if !(0.0..=1.0).contains(&eta) {
            return Err(Error::Invalid(format!("efficiency must lie in [0, 1], got {eta}")));
        }
    }
    if u_in.dim() != u_out.dim() {
        return Err(Error::Dimension { expected: u_in.dim(), got: u_out.dim() });
    }
    let scale = C64::new((eta_w * eta_r).sqrt(), 0.0);
    Ok(IdealTransfer {
        matrix: (u_out.matrix().adjoint() * u_in.matrix()).map(|x| x * scale),
        write_efficiency: eta_w,
        read_efficiency: eta_r,
    })
}

/// Worst-case validity margins over every memory of the plan, for memories
/// built like `cell`.
pub fn validate_plan(plan: &MemoryPlan, spectrum: &ModeSpectrum, cell: &MemoryCell, threshold: f64) -> Result<MarginReport> {
    let n = spectrum.n_modes();
    let mut m7 = f64::INFINITY;
    let mut m9 = f64::INFINITY;
    for c in &plan.memories {
        if c.len() != n {
            return Err(Error::Dimension { expected: n, got: c.len() });
        }
        if c.is_zero() {
            continue;
        }
        m7 = m7.min(check_inequality_7(spectrum, omega_tilde(c, spectrum)?));
        m9 = m9.min(check_inequality_9(spectrum, &cell.bandwidth_rates(c, spectrum)?, n));
    }
    Ok(MarginReport::new(m7, m9, threshold))
}
