//! Signal-mode spectra, coupling vectors and the bright/dark mode algebra.
//!
//! A memory driven by coupling amplitudes Ω_k on N frequency-separated
//! Raman transitions couples to exactly one superposition of the signal
//! modes, the *bright* mode
//!
//! ```text
//! E'_c = (1/Ω̃) Σ_k (Ω_k*/Δ_k) E_k,     Ω̃ = sqrt(Σ_k |Ω_k/Δ_k|²)
//! ```
//!
//! Every orthogonal superposition is *dark* and propagates through the
//! ensemble untouched. The helpers here compute that decomposition, the
//! light-shifted rates of the spin coherence and the dispersion phases picked
//! up by each signal.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Detunings Δ_k (rad·µs⁻¹) of the N signal modes about their mean Δ.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeSpectrum {
    detunings: Vec<f64>,
    mean_detuning: f64,
}

impl ModeSpectrum {
    /// Default bound on max_k |Δ_k - Δ| / Δ.
    pub const DEFAULT_GUARD: f64 = 0.2;

    pub fn new(detunings: Vec<f64>) -> Result<Self> {
        Self::with_guard(detunings, Self::DEFAULT_GUARD)
    }

    /// Build a spectrum, requiring max_k |Δ_k - Δ| ≤ `guard`·Δ.
    pub fn with_guard(detunings: Vec<f64>, guard: f64) -> Result<Self> {
        if detunings.is_empty() {
            return Err(Error::Invalid("spectrum needs at least one mode".into()));
        }
        if let Some(d) = detunings.iter().find(|d| !d.is_finite() || **d <= 0.0) {
            return Err(Error::Invalid(format!("detunings must be finite and positive, got {d}")));
        }
        for (j, a) in detunings.iter().enumerate() {
            if detunings[j + 1..].iter().any(|b| a == b) {
                return Err(Error::Invalid(format!("duplicate detuning {a}")));
            }
        }
        let mean_detuning = detunings.iter().sum::<f64>() / detunings.len() as f64;
        let spread = detunings
            .iter()
            .map(|d| (d - mean_detuning).abs())
            .fold(0.0, f64::max);
        if spread > guard * mean_detuning {
            return Err(Error::Invalid(format!(
                "far-detuned guard violated: max |Δ_k - Δ| = {spread:.4} > {guard}·Δ = {:.4}",
                guard * mean_detuning
            )));
        }
        Ok(Self { detunings, mean_detuning })
    }

    /// `n` modes at `base + k·spacing`, k = 0..n.
    pub fn equally_spaced(base: f64, spacing: f64, n: usize, guard: f64) -> Result<Self> {
        Self::with_guard((0..n).map(|k| base + spacing * k as f64).collect(), guard)
    }

    pub fn n_modes(&self) -> usize {
        self.detunings.len()
    }

    pub fn detunings(&self) -> &[f64] {
        &self.detunings
    }

    pub fn detuning(&self, k: usize) -> f64 {
        self.detunings[k]
    }

    pub fn mean_detuning(&self) -> f64 {
        self.mean_detuning
    }

    /// Offsets Δ_k - Δ of each mode from the mean.
    pub fn offsets(&self) -> Vec<f64> {
        self.detunings.iter().map(|d| d - self.mean_detuning).collect()
    }

    /// δ_{k,j} = Δ_k - Δ_j.
    pub fn splitting(&self, k: usize, j: usize) -> f64 {
        self.detunings[k] - self.detunings[j]
    }

    /// Smallest |δ_{k,j}| over distinct pairs, `None` for a single mode.
    pub fn min_splitting(&self) -> Option<f64> {
        let n = self.n_modes();
        (0..n)
            .flat_map(|k| (k + 1..n).map(move |j| (k, j)))
            .map(|(k, j)| self.splitting(k, j).abs())
            .min_by(f64::total_cmp)
    }

    /// Largest |δ_{k,j}|, zero for a single mode.
    pub fn max_splitting(&self) -> f64 {
        let lo = self.detunings.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = self.detunings.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        hi - lo
    }
}

/// Atomic ensemble constants.
///
/// The light-atom coupling g and linear density 𝒩 only enter through their
/// products with Ω̃, so the model fixes g = 1, L = 1 and 𝒩 = βΓ/L.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AtomicParams {
    /// Excited-state decay Γ.
    pub decay: f64,
    /// Ground-state (spin) dephasing γ.
    pub dephasing: f64,
    /// Bare two-photon detuning δ.
    pub two_photon_detuning: f64,
    /// Resonant optical depth β.
    pub optical_depth: f64,
}

impl AtomicParams {
    pub fn new(decay: f64, dephasing: f64, two_photon_detuning: f64, optical_depth: f64) -> Result<Self> {
        let p = Self { decay, dephasing, two_photon_detuning, optical_depth };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.decay > 0.0 && self.decay.is_finite()) {
            return Err(Error::Invalid(format!("Γ must be positive, got {}", self.decay)));
        }
        if !(self.dephasing >= 0.0 && self.dephasing.is_finite()) {
            return Err(Error::Invalid(format!("γ must be non-negative, got {}", self.dephasing)));
        }
        if !(self.optical_depth > 0.0 && self.optical_depth.is_finite()) {
            return Err(Error::Invalid(format!("β must be positive, got {}", self.optical_depth)));
        }
        if !self.two_photon_detuning.is_finite() {
            return Err(Error::Invalid("δ must be finite".into()));
        }
        Ok(())
    }

    /// Light-atom coupling g.
    pub fn g(&self) -> f64 {
        1.0
    }

    /// Normalized ensemble length L.
    pub fn length(&self) -> f64 {
        1.0
    }

    /// Linear density 𝒩 = βΓ/L.
    pub fn density(&self) -> f64 {
        self.optical_depth * self.decay / self.length()
    }
}

/// Complex coupling-field amplitudes Ω_k, one per signal mode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CouplingVector(Vec<C64>);

impl CouplingVector {
    pub fn new(amplitudes: Vec<C64>) -> Result<Self> {
        if amplitudes.iter().any(|a| !a.re.is_finite() || !a.im.is_finite()) {
            return Err(Error::Invalid("coupling amplitudes must be finite".into()));
        }
        Ok(Self(amplitudes))
    }

    pub fn zeros(n: usize) -> Self {
        Self(vec![C64::new(0.0, 0.0); n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.0
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|a| a.norm_sqr() == 0.0)
    }

    /// Ω_k/Δ_k for each mode.
    pub fn ratios(&self, spectrum: &ModeSpectrum) -> Result<Vec<C64>> {
        check_len(self, spectrum)?;
        Ok(self.0.iter().zip(spectrum.detunings()).map(|(o, d)| o / d).collect())
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self(self.0.iter().map(|a| a * s).collect())
    }
}

/// Light-shifted spin decay γ' and two-photon detuning δ'.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EffectiveRates {
    pub gamma_eff: f64,
    pub delta_eff: f64,
}

fn check_len(coupling: &CouplingVector, spectrum: &ModeSpectrum) -> Result<()> {
    if coupling.len() != spectrum.n_modes() {
        return Err(Error::Dimension { expected: spectrum.n_modes(), got: coupling.len() });
    }
    Ok(())
}

/// Ω̃ = sqrt(Σ_k |Ω_k/Δ_k|²).
pub fn omega_tilde(coupling: &CouplingVector, spectrum: &ModeSpectrum) -> Result<f64> {
    Ok(coupling.ratios(spectrum)?.iter().map(|r| r.norm_sqr()).sum::<f64>().sqrt())
}

/// Coefficients w_k = (Ω_k*/Δ_k)/Ω̃ of the bright mode E'_c = Σ_k w_k E_k.
pub fn bright_mode_coefficients(coupling: &CouplingVector, spectrum: &ModeSpectrum) -> Result<DVector<C64>> {
    let ot = omega_tilde(coupling, spectrum)?;
    if ot == 0.0 {
        return Err(Error::DegenerateCoupling);
    }
    let ratios = coupling.ratios(spectrum)?;
    Ok(DVector::from_iterator(ratios.len(), ratios.iter().map(|r| r.conj() / ot)))
}

/// Complete a unit vector to a unitary whose first row is `w`.
///
/// Rows are built by modified Gram-Schmidt over the standard basis, taking at
/// each step the candidate with the largest residual; a second
/// orthogonalization pass keeps U†U = I at the 1e-15 level.
pub fn complete_bright_basis(w: &DVector<C64>) -> Result<DMatrix<C64>> {
    let n = w.len();
    let norm = w.norm();
    if n == 0 || (norm - 1.0).abs() > 1e-10 {
        return Err(Error::NotNormalized(norm));
    }
    // <a, b> = Σ a_k conj(b_k): rows r_i satisfy <r_i, r_j> = δ_ij
    let inner = |a: &[C64], b: &[C64]| a.iter().zip(b).map(|(x, y)| x * y.conj()).sum::<C64>();
    let mut rows: Vec<Vec<C64>> = vec![w.iter().copied().collect()];
    let mut candidates: Vec<usize> = (0..n).collect();
    while rows.len() < n {
        let mut best: Option<(usize, Vec<C64>, f64)> = None;
        for (ci, &e) in candidates.iter().enumerate() {
            let mut v = vec![C64::new(0.0, 0.0); n];
            v[e] = C64::new(1.0, 0.0);
            for _ in 0..2 {
                for r in &rows {
                    let p = inner(&v, r);
                    v.iter_mut().zip(r).for_each(|(vk, rk)| *vk -= p * rk);
                }
            }
            let res = inner(&v, &v).re.sqrt();
            if best.as_ref().is_none_or(|b| res > b.2) {
                best = Some((ci, v, res));
            }
        }
        let (ci, v, res) = best.expect("candidates remain while basis is incomplete");
        candidates.swap_remove(ci);
        rows.push(v.into_iter().map(|x| x / res).collect());
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

/// γ' = γ + Γ Σ_k (|Ω_k|/Δ_k)² and δ' = δ - Σ_k |Ω_k|²/Δ_k.
///
/// The shift uses |Ω_k|²/Δ_k (the ac-Stark form). Written as a bare ratio
/// |Ω_k|/Δ_k the shift would not be a frequency.
pub fn effective_rates(
    coupling: &CouplingVector,
    spectrum: &ModeSpectrum,
    atoms: &AtomicParams,
) -> Result<EffectiveRates> {
    check_len(coupling, spectrum)?;
    let mut broadening = 0.0;
    let mut shift = 0.0;
    for (o, d) in coupling.amplitudes().iter().zip(spectrum.detunings()) {
        broadening += o.norm_sqr() / (d * d);
        shift += o.norm_sqr() / d;
    }
    Ok(EffectiveRates {
        gamma_eff: atoms.dephasing + atoms.decay * broadening,
        delta_eff: atoms.two_photon_detuning - shift,
    })
}

/// Effective Raman optical depth β_eff = β Ω̃² Γ/γ.
///
/// Returns `f64::INFINITY` when γ = 0 and Ω̃ > 0 (no dephasing to compete
/// with), and 0 whenever Ω̃ = 0.
pub fn effective_optical_depth(atoms: &AtomicParams, omega_tilde: f64) -> f64 {
    let num = atoms.optical_depth * omega_tilde * omega_tilde * atoms.decay;
    if num == 0.0 {
        0.0
    } else if atoms.dephasing == 0.0 {
        f64::INFINITY
    } else {
        num / atoms.dephasing
    }
}

/// Dispersion phase φ_k(z) = -βΓz/Δ_k absorbed into each envelope at depth z.
pub fn dispersion_phase(atoms: &AtomicParams, spectrum: &ModeSpectrum, z: f64) -> Result<Vec<f64>> {
    if !(0.0..=1.0).contains(&z) {
        return Err(Error::Invalid(format!("z must lie in [0, 1], got {z}")));
    }
    let bg = atoms.optical_depth * atoms.decay;
    Ok(spectrum.detunings().iter().map(|d| -bg * z / d).collect())
}

/// max_k φ_k(1) - min_k φ_k(1): the phase mismatch across the spectrum after
/// one full ensemble.
pub fn dispersion_spread(atoms: &AtomicParams, spectrum: &ModeSpectrum) -> f64 {
    let phases = dispersion_phase(atoms, spectrum, 1.0).expect("z = 1 is in range");
    let hi = phases.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = phases.iter().copied().fold(f64::INFINITY, f64::min);
    hi - lo
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::units::mhz_to_rad_per_us as mhz;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_1_SQRT_2, PI};

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn spectrum(n: usize) -> ModeSpectrum {
        ModeSpectrum::equally_spaced(mhz(250.0), mhz(5.0), n, 0.2).unwrap()
    }

    fn unitarity_error(u: &DMatrix<C64>) -> f64 {
        let n = u.nrows();
        (u.adjoint() * u - DMatrix::<C64>::identity(n, n)).iter().map(|x| x.norm()).fold(0.0, f64::max)
    }

    #[test]
    fn spectrum_validation() {
        assert!(ModeSpectrum::new(vec![]).is_err());
        assert!(ModeSpectrum::new(vec![1.0, 1.0]).is_err());
        assert!(ModeSpectrum::new(vec![-1.0]).is_err());
        // 100 and 200 about mean 150: spread 50/150 = 0.33
        assert!(ModeSpectrum::new(vec![100.0, 200.0]).is_err());
        assert!(ModeSpectrum::with_guard(vec![100.0, 200.0], 0.4).is_ok());
        let s = spectrum(3);
        assert!((s.min_splitting().unwrap() - s.max_splitting() / 2.0).abs() < 1e-12);
        assert!(ModeSpectrum::new(vec![5.0]).unwrap().min_splitting().is_none());
    }

    #[test]
    fn omega_tilde_examples() {
        let s = spectrum(3);
        let mut a = vec![c(0.0, 0.0); 3];
        a[0] = c(s.detuning(0), 0.0);
        assert!((omega_tilde(&CouplingVector::new(a).unwrap(), &s).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(omega_tilde(&CouplingVector::zeros(3), &s).unwrap(), 0.0);
        let n = 3f64;
        let eq = CouplingVector::new(s.detunings().iter().map(|d| c(d / n.sqrt(), 0.0)).collect()).unwrap();
        assert!((omega_tilde(&eq, &s).unwrap() - 1.0).abs() < 1e-14);
        assert!(matches!(
            omega_tilde(&CouplingVector::zeros(2), &s),
            Err(Error::Dimension { expected: 3, got: 2 })
        ));
    }

    #[test]
    fn bright_mode_examples() {
        let s = spectrum(2);
        let w = bright_mode_coefficients(&CouplingVector::new(vec![c(s.detuning(0), 0.0), c(0.0, 0.0)]).unwrap(), &s)
            .unwrap();
        assert!((w[0] - c(1.0, 0.0)).norm() < 1e-15 && w[1].norm() == 0.0);

        let phi = 0.7;
        let cv = CouplingVector::new(s.detunings().iter().map(|d| C64::from_polar(*d, phi)).collect()).unwrap();
        let w = bright_mode_coefficients(&cv, &s).unwrap();
        let expect = C64::from_polar(FRAC_1_SQRT_2, -phi);
        assert!((w[0] - expect).norm() < 1e-15 && (w[1] - expect).norm() < 1e-15);

        assert!(matches!(bright_mode_coefficients(&CouplingVector::zeros(2), &s), Err(Error::DegenerateCoupling)));
    }

    #[test]
    fn completion_examples() {
        let e1 = DVector::from_vec(vec![c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)]);
        let u = complete_bright_basis(&e1).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((u[(i, j)].norm() - expect).abs() < 1e-15);
            }
        }
        let h = DVector::from_vec(vec![c(FRAC_1_SQRT_2, 0.0), c(FRAC_1_SQRT_2, 0.0)]);
        let u = complete_bright_basis(&h).unwrap();
        assert!(unitarity_error(&u) < 1e-15);
        // second row ∝ (1, -1)/√2
        assert!((u[(1, 0)] + u[(1, 1)]).norm() < 1e-15);
        assert!((u[(1, 0)].norm() - FRAC_1_SQRT_2).abs() < 1e-15);

        let bad = DVector::from_vec(vec![c(1.0, 0.0), c(1.0, 0.0)]);
        assert!(matches!(complete_bright_basis(&bad), Err(Error::NotNormalized(_))));
    }

    #[test]
    fn effective_rate_examples() {
        let atoms = AtomicParams::new(mhz(6.0), 0.01, 0.0, 100.0).unwrap();
        let s = spectrum(3);
        let r = effective_rates(&CouplingVector::zeros(3), &s, &atoms).unwrap();
        assert_eq!((r.gamma_eff, r.delta_eff), (0.01, 0.0));

        let one = ModeSpectrum::new(vec![mhz(250.0)]).unwrap();
        let d = one.detuning(0);
        let r = effective_rates(&CouplingVector::new(vec![c(d / 10.0, 0.0)]).unwrap(), &one, &atoms).unwrap();
        assert!((r.gamma_eff - (0.01 + atoms.decay / 100.0)).abs() < 1e-12);
        assert!((r.delta_eff + d / 100.0).abs() < 1e-10);

        // equal |Ω_k|²/Δ_k on every mode: shift is N times the single-mode one
        let cv = CouplingVector::new(s.detunings().iter().map(|d| c((d * 0.5).sqrt(), 0.0)).collect()).unwrap();
        let r = effective_rates(&cv, &s, &atoms).unwrap();
        assert!((r.delta_eff + 3.0 * 0.5).abs() < 1e-12);
    }

    #[test]
    fn optical_depth_examples() {
        let atoms = AtomicParams::new(1000.0, 1.0, 0.0, 100.0).unwrap();
        assert_eq!(effective_optical_depth(&atoms, 0.0), 0.0);
        let ot = 1e-3f64.sqrt();
        assert!((effective_optical_depth(&atoms, ot) - 100.0).abs() < 1e-9);
        let twice = effective_optical_depth(&atoms, ot * 2f64.sqrt());
        assert!((twice - 200.0).abs() < 1e-9);
        let no_dephasing = AtomicParams { dephasing: 0.0, ..atoms };
        assert!(effective_optical_depth(&no_dephasing, ot).is_infinite());
    }

    #[test]
    fn dispersion_examples() {
        let atoms = AtomicParams::new(mhz(6.0), 0.0, 0.0, 100.0).unwrap();
        let s = ModeSpectrum::equally_spaced(mhz(250.0), mhz(15.0), 10, 0.3).unwrap();
        assert!(dispersion_phase(&atoms, &s, 0.0).unwrap().iter().all(|p| *p == 0.0));
        let p = dispersion_phase(&atoms, &s, 1.0).unwrap();
        assert!((p[0] + 2.4).abs() < 1e-12);
        assert!(p.windows(2).all(|w| w[0].abs() > w[1].abs()));
        assert!(dispersion_phase(&atoms, &s, 1.5).is_err());
    }

    #[test]
    fn dispersion_spread_quarter_and_twentieth_wave() {
        // ten modes 50 MHz apart above a 250 MHz base with β = 100 per segment
        let atoms = AtomicParams::new(mhz(6.0), 0.0, 0.0, 100.0).unwrap();
        let s = ModeSpectrum::equally_spaced(mhz(250.0), mhz(50.0), 10, 0.5).unwrap();
        let quarter = dispersion_spread(&atoms, &s) / (2.0 * PI);
        assert!((quarter - 0.25).abs() < 0.01, "{quarter}");
        let s = ModeSpectrum::equally_spaced(mhz(750.0), mhz(50.0), 10, 0.5).unwrap();
        let twentieth = dispersion_spread(&atoms, &s) / (2.0 * PI);
        assert!((twentieth - 0.05).abs() < 0.005, "{twentieth}");
    }

    fn arb_coupling(n: usize) -> impl Strategy<Value = Vec<C64>> {
        prop::collection::vec((-50.0f64..50.0, -50.0f64..50.0), n)
            .prop_map(|v| v.into_iter().map(|(a, b)| c(a, b)).collect())
    }

    proptest! {
        #[test]
        fn bright_mode_is_normalized(amps in arb_coupling(6)) {
            let s = spectrum(6);
            let cv = CouplingVector::new(amps).unwrap();
            prop_assume!(omega_tilde(&cv, &s).unwrap() > 1e-6);
            let w = bright_mode_coefficients(&cv, &s).unwrap();
            prop_assert!((w.norm() - 1.0).abs() < 1e-14);
        }

        #[test]
        fn completion_is_unitary(n in 1usize..=16, seed in any::<u64>()) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let v = DVector::from_fn(n, |_, _| c(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
            let w = &v / C64::from(v.norm());
            let u = complete_bright_basis(&w).unwrap();
            prop_assert!(unitarity_error(&u) <= 1e-12);
            for k in 0..n {
                prop_assert!((u[(0, k)] - w[k]).norm() < 1e-15);
            }
        }

        #[test]
        fn power_broadening_never_narrows(amps in arb_coupling(4), gamma in 0.0f64..1.0) {
            let s = spectrum(4);
            let atoms = AtomicParams::new(mhz(6.0), gamma, 0.3, 100.0).unwrap();
            let r = effective_rates(&CouplingVector::new(amps).unwrap(), &s, &atoms).unwrap();
            prop_assert!(r.gamma_eff >= gamma);
        }
    }
}
