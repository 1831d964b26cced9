use nalgebra::DMatrix;
use num_complex::Complex64 as C64;

use super::FieldOutput;
use crate::error::{Error, Result};

/// ∫ conj(a) b dt (trapezoidal).
pub(crate) fn inner(a: &[C64], b: &[C64], dt: f64) -> C64 {
    let n = a.len().min(b.len());
    if n == 0 {
        return C64::new(0.0, 0.0);
    }
    let sum: C64 = a.iter().zip(b).map(|(x, y)| x.conj() * y).sum();
    (sum - 0.5 * (a[0].conj() * b[0] + a[n - 1].conj() * b[n - 1])) * dt
}

fn field_inner(a: &FieldOutput, b: &FieldOutput, dt: f64) -> C64 {
    a.samples.iter().zip(&b.samples).map(|(x, y)| inner(x, y, dt)).sum()
}

/// |⟨a, b⟩|² / (‖a‖²‖b‖²) over all modes and times.
pub fn overlap(a: &FieldOutput, b: &FieldOutput, dt: f64) -> Result<f64> {
    if a.n_modes() != b.n_modes() {
        return Err(Error::Dimension { expected: b.n_modes(), got: a.n_modes() });
    }
    let (ea, eb) = (a.energy(dt), b.energy(dt));
    if ea == 0.0 || eb == 0.0 {
        return Err(Error::UndefinedOverlap);
    }
    // Cauchy-Schwarz caps this at 1; rounding can overshoot by an ulp or two
    Ok((field_inner(a, b, dt).norm_sqr() / (ea * eb)).min(1.0))
}

/// (E_out / E_ideal, normalized overlap of output with ideal).
///
/// A silent output gives (0, 0); a silent ideal is an error.
pub fn efficiency_and_overlap(output: &FieldOutput, ideal: &FieldOutput, dt: f64) -> Result<(f64, f64)> {
    if output.n_modes() != ideal.n_modes() {
        return Err(Error::Dimension { expected: ideal.n_modes(), got: output.n_modes() });
    }
    let e_ideal = ideal.energy(dt);
    if e_ideal == 0.0 {
        return Err(Error::UndefinedOverlap);
    }
    let e_out = output.energy(dt);
    if e_out == 0.0 {
        return Ok((0.0, 0.0));
    }
    Ok((e_out / e_ideal, field_inner(output, ideal, dt).norm_sqr() / (e_out * e_ideal)))
}

/// Ideal output E_k(t) = Σ_j T_kj a_j r(t) for input amplitudes `a` and
/// reference temporal mode `r`.
pub fn ideal_output(transfer: &DMatrix<C64>, amplitudes: &[C64], reference: &[C64]) -> FieldOutput {
    let v: Vec<C64> = (0..transfer.nrows())
        .map(|k| (0..transfer.ncols()).map(|j| transfer[(k, j)] * amplitudes[j]).sum())
        .collect();
    FieldOutput { samples: v.iter().map(|c| reference.iter().map(|r| c * r).collect()).collect() }
}
