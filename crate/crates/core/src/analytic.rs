//! Closed forms for the spin coherence when all modes share one excited
//! state, and a brute-force integrator to check them.
//!
//! Conventions: Δ is the mean detuning, ν_k = Δ_k - Δ, δ_kj = Δ_k - Δ_j,
//! Ω(t) = Σ_k Ω_k e^{iν_k t} and ℰ(t) = Σ_k ℰ_k e^{iν_k t}. The spin obeys
//!
//! ```text
//! ∂t σ = -(γ + iδ + a|Ω(t)|²) σ + i g (Ω*(t)/Δ) ℰ(t),   a = (Γ + iΔ)/Δ²
//! ```
//!
//! Averaging |Ω(t)|² gives γ' = γ + Γ Σ|Ω_k|²/Δ² and δ' = δ + Σ|Ω_k|²/Δ.

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::modes::{AtomicParams, CouplingVector, EffectiveRates, ModeSpectrum};

const I: C64 = C64 { re: 0.0, im: 1.0 };

/// Points per period of the fastest beat the oracle's time grid must carry.
pub const ORACLE_POINTS_PER_BEAT: f64 = 20.0;
const ORACLE_SUBSTEPS: usize = 8;

/// Time-averaged rates of the shared-excited-state model.
pub fn shared_state_rates(atoms: &AtomicParams, coupling: &CouplingVector, spectrum: &ModeSpectrum) -> Result<EffectiveRates> {
    if coupling.len() != spectrum.n_modes() {
        return Err(Error::Dimension { expected: spectrum.n_modes(), got: coupling.len() });
    }
    let d = spectrum.mean_detuning();
    let p: f64 = coupling.amplitudes().iter().map(|o| o.norm_sqr()).sum();
    Ok(EffectiveRates {
        gamma_eff: atoms.dephasing + atoms.decay * p / (d * d),
        delta_eff: atoms.two_photon_detuning + p / d,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct AnalyticSpinSolution {
    /// Integration constant α.
    pub alpha: C64,
    pub rates: EffectiveRates,
    pub atoms: AtomicParams,
    pub spectrum: ModeSpectrum,
    pub coupling: CouplingVector,
}

impl AnalyticSpinSolution {
    pub fn new(alpha: C64, atoms: AtomicParams, coupling: CouplingVector, spectrum: ModeSpectrum) -> Result<Self> {
        let rates = shared_state_rates(&atoms, &coupling, &spectrum)?;
        Ok(Self { alpha, rates, atoms, spectrum, coupling })
    }

    fn envelope(&self, t: f64) -> C64 {
        self.alpha * (-C64::new(self.rates.gamma_eff, self.rates.delta_eff) * t).exp()
    }

    // (k, j, Ω_k Ω*_j, δ_kj) over ordered pairs k ≠ j
    fn pairs(&self) -> Result<Vec<(usize, usize, C64, f64)>> {
        let om = self.coupling.amplitudes();
        let n = om.len();
        let mut out = Vec::with_capacity(n * n.saturating_sub(1));
        for k in 0..n {
            for j in 0..n {
                if j == k {
                    continue;
                }
                let s = self.spectrum.splitting(k, j);
                if s == 0.0 {
                    return Err(Error::Singular(format!("modes {k} and {j} share a detuning")));
                }
                out.push((k, j, om[k] * om[j].conj(), s));
            }
        }
        Ok(out)
    }

    /// Undriven spin including every cross-mode light-shift beat:
    ///
    /// α e^{-(γ'+iδ')t} Π_{k≠j} exp(-i (Ω_k Ω*_j/δ_kj)((-Γ - iΔ)/Δ²) e^{iδ_kj t}).
    ///
    /// At t = 0 the product is not 1; the oracle must start from this value.
    pub fn undriven_exact(&self, t: f64) -> Result<C64> {
        let d = self.spectrum.mean_detuning();
        let f = C64::new(-self.atoms.decay, -d) / (d * d);
        let mut exponent = C64::new(0.0, 0.0);
        for (_, _, p, s) in self.pairs()? {
            exponent += -I * p / s * f * C64::from_polar(1.0, s * t);
        }
        Ok(self.envelope(t) * exponent.exp())
    }

    /// First-order expansion for Δ ≫ Γ and |δ_kj| ≫ |Ω_k Ω_j/Δ|:
    ///
    /// α e^{-(γ'+iδ')t} (1 - Σ_{k≠j} Ω_k Ω*_j e^{iδ_kj t}/(Δ δ_kj)).
    pub fn undriven_first_order(&self, t: f64) -> Result<C64> {
        let d = self.spectrum.mean_detuning();
        let mut corr = C64::new(1.0, 0.0);
        for (_, _, p, s) in self.pairs()? {
            corr -= p * C64::from_polar(1.0, s * t) / (d * s);
        }
        Ok(self.envelope(t) * corr)
    }

    /// Largest |Ω_k Ω_j/(Δ δ_kj)|; the expansion needs this ≪ 1.
    pub fn expansion_parameter(&self) -> Result<f64> {
        let d = self.spectrum.mean_detuning();
        Ok(self.pairs()?.iter().map(|(_, _, p, s)| p.norm() / (d * s).abs()).fold(0.0, f64::max))
    }

    /// Spin driven by constant probe amplitudes ℰ_k, neglecting the beat in
    /// |Ω(t)|²:
    ///
    /// α e^{-(γ'+iδ')t} + ig/(γ'+iδ') Σ_k (Ω*_k/Δ) ℰ_k
    ///   + ig Σ_{k≠j} (Ω*_j/Δ) ℰ_k e^{iδ_kj t} / (γ' + i(δ' + δ_kj)).
    pub fn driven(&self, fields: &[C64], t: f64) -> Result<C64> {
        let n = self.spectrum.n_modes();
        if fields.len() != n {
            return Err(Error::Dimension { expected: n, got: fields.len() });
        }
        let d = self.spectrum.mean_detuning();
        let om = self.coupling.amplitudes();
        let ig = I * self.atoms.g();
        let steady_den = C64::new(self.rates.gamma_eff, self.rates.delta_eff);
        if steady_den.norm() == 0.0 {
            return Err(Error::ResonancePole(0, 0));
        }
        let steady: C64 = (0..n).map(|k| om[k].conj() / d * fields[k]).sum::<C64>() * ig / steady_den;
        Ok(self.envelope(t) + steady + self.driven_oscillating(fields, t)?)
    }

    /// The cross-mode part of [`driven`](Self::driven) alone.
    pub fn driven_oscillating(&self, fields: &[C64], t: f64) -> Result<C64> {
        let d = self.spectrum.mean_detuning();
        let om = self.coupling.amplitudes();
        let ig = I * self.atoms.g();
        let mut sum = C64::new(0.0, 0.0);
        for (k, j, _, s) in self.pairs()? {
            let den = C64::new(self.rates.gamma_eff, self.rates.delta_eff + s);
            if den.norm() == 0.0 {
                return Err(Error::ResonancePole(k, j));
            }
            sum += om[j].conj() / d * fields[k] * C64::from_polar(1.0, s * t) / den;
        }
        Ok(ig * sum)
    }
}

/// Quadrature sum √(Σ_{k≠j} |Ω*_k Ω_j/(Δ δ_kj)|²) of the cross-mode
/// light-shift amplitudes.
pub fn perturbation_magnitude(coupling: &CouplingVector, spectrum: &ModeSpectrum) -> Result<f64> {
    let n = spectrum.n_modes();
    if coupling.len() != n {
        return Err(Error::Dimension { expected: n, got: coupling.len() });
    }
    let d = spectrum.mean_detuning();
    let om = coupling.amplitudes();
    let mut sum = 0.0;
    for k in 0..n {
        for j in 0..n {
            if j != k {
                sum += (om[k].conj() * om[j] / (d * spectrum.splitting(k, j))).norm_sqr();
            }
        }
    }
    Ok(sum.sqrt())
}

/// Total probe ℰ(t) = Σ_k ℰ_k e^{iν_k t} for constant amplitudes.
pub fn beating_probe(fields: &[C64], spectrum: &ModeSpectrum) -> impl Fn(f64) -> C64 {
    let nu = spectrum.offsets();
    let fields = fields.to_vec();
    move |t| fields.iter().zip(&nu).map(|(e, n)| e * C64::from_polar(1.0, n * t)).sum()
}

/// Brute-force RK4 trajectory of the spin with the full oscillating Ω(t)
/// and |Ω(t)|², sampled on `t_grid` (increasing, starting where σ = `sigma0`).
///
/// Every grid interval is split into fixed substeps; the grid itself must
/// resolve the fastest beat.
pub fn ode_oracle(
    atoms: &AtomicParams,
    coupling: &CouplingVector,
    spectrum: &ModeSpectrum,
    probe: impl Fn(f64) -> C64,
    sigma0: C64,
    t_grid: &[f64],
) -> Result<Vec<C64>> {
    let n = spectrum.n_modes();
    if coupling.len() != n {
        return Err(Error::Dimension { expected: n, got: coupling.len() });
    }
    let beat = spectrum.max_splitting();
    let max_dt = t_grid.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
    if t_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Invalid("time grid must be strictly increasing".into()));
    }
    if beat > 0.0 && max_dt > 2.0 * std::f64::consts::PI / (ORACLE_POINTS_PER_BEAT * beat) {
        return Err(Error::StepSize(format!(
            "time grid spacing {max_dt:.3e} µs gives fewer than {ORACLE_POINTS_PER_BEAT} points per beat"
        )));
    }
    let d = spectrum.mean_detuning();
    let a = C64::new(atoms.decay, d) / (d * d);
    let nu = spectrum.offsets();
    let om = coupling.amplitudes();
    let ig = I * atoms.g();
    let base = C64::new(atoms.dephasing, atoms.two_photon_detuning);
    let rhs = |t: f64, s: C64| {
        let w: C64 = om.iter().zip(&nu).map(|(o, n)| o * C64::from_polar(1.0, n * t)).sum();
        -(base + a * w.norm_sqr()) * s + ig * w.conj() / d * probe(t)
    };
    let mut out = Vec::with_capacity(t_grid.len());
    let mut s = sigma0;
    if let Some(&t0) = t_grid.first() {
        out.push(s);
        let mut t = t0;
        for &t1 in &t_grid[1..] {
            let h = (t1 - t) / ORACLE_SUBSTEPS as f64;
            for _ in 0..ORACLE_SUBSTEPS {
                let k1 = rhs(t, s);
                let k2 = rhs(t + 0.5 * h, s + 0.5 * h * k1);
                let k3 = rhs(t + 0.5 * h, s + 0.5 * h * k2);
                let k4 = rhs(t + h, s + h * k3);
                s += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
                t += h;
            }
            t = t1;
            if !(s.re.is_finite() && s.im.is_finite()) {
                return Err(Error::Divergence(format!("oracle diverged at t = {t1}")));
            }
            out.push(s);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::units::mhz_to_rad_per_us as mhz;

    fn atoms() -> AtomicParams {
        AtomicParams::new(mhz(6.0), mhz(0.01), mhz(0.02), 100.0).unwrap()
    }

    fn two_modes(spacing_mhz: f64) -> ModeSpectrum {
        ModeSpectrum::new(vec![mhz(250.0), mhz(250.0 + spacing_mhz)]).unwrap()
    }

    fn coupling(s: &ModeSpectrum, ot: f64) -> CouplingVector {
        let n = s.n_modes() as f64;
        CouplingVector::new(
            s.detunings().iter().enumerate().map(|(k, d)| C64::from_polar(ot * d / n.sqrt(), 0.3 * k as f64)).collect(),
        )
        .unwrap()
    }

    #[test]
    fn single_mode_is_plain_decay() {
        let s = ModeSpectrum::new(vec![mhz(250.0)]).unwrap();
        let sol = AnalyticSpinSolution::new(C64::new(1.0, 0.0), atoms(), coupling(&s, 0.05), s).unwrap();
        for t in [0.0, 0.3, 2.0] {
            let plain = (-C64::new(sol.rates.gamma_eff, sol.rates.delta_eff) * t).exp();
            assert!((sol.undriven_exact(t).unwrap() - plain).norm() < 1e-15);
            assert!((sol.undriven_first_order(t).unwrap() - plain).norm() < 1e-15);
            assert!((sol.driven(&[C64::new(0.0, 0.0)], t).unwrap() - plain).norm() < 1e-15);
        }
    }

    #[test]
    fn single_mode_steady_state() {
        let s = ModeSpectrum::new(vec![mhz(250.0)]).unwrap();
        let c = coupling(&s, 0.05);
        let sol = AnalyticSpinSolution::new(C64::new(0.0, 0.0), atoms(), c.clone(), s.clone()).unwrap();
        let e = C64::new(0.7, -0.2);
        let expect = I * c.amplitudes()[0].conj() / s.mean_detuning() * e
            / C64::new(sol.rates.gamma_eff, sol.rates.delta_eff);
        assert!((sol.driven(&[e], 5.0).unwrap() - expect).norm() < 1e-15);
    }

    #[test]
    fn value_at_zero() {
        let s = two_modes(50.0);
        let c = coupling(&s, 0.05);
        let sol = AnalyticSpinSolution::new(C64::new(1.0, 0.0), atoms(), c.clone(), s.clone()).unwrap();
        let d = s.mean_detuning();
        let om = c.amplitudes();
        let mut e = C64::new(0.0, 0.0);
        for (k, j) in [(0, 1), (1, 0)] {
            e += -I * om[k] * om[j].conj() / s.splitting(k, j) * C64::new(-atoms().decay, -d) / (d * d);
        }
        assert!((sol.undriven_exact(0.0).unwrap() - e.exp()).norm() < 1e-15);
    }

    #[test]
    fn oracle_pure_decay() {
        let s = two_modes(50.0);
        let a = atoms();
        let ts: Vec<f64> = (0..=400).map(|i| i as f64 * 5e-4).collect();
        let traj = ode_oracle(&a, &CouplingVector::zeros(2), &s, |_| C64::new(0.0, 0.0), C64::new(1.0, 0.0), &ts).unwrap();
        for (t, x) in ts.iter().zip(&traj) {
            let exact = (-C64::new(a.dephasing, a.two_photon_detuning) * *t).exp();
            assert!((x - exact).norm() < 1e-13);
        }
    }

    #[test]
    fn oracle_rejects_coarse_grid() {
        let s = two_modes(50.0);
        let ts = [0.0, 0.01];
        let r = ode_oracle(&atoms(), &coupling(&s, 0.01), &s, |_| C64::new(0.0, 0.0), C64::new(1.0, 0.0), &ts);
        assert!(matches!(r, Err(Error::StepSize(_))));
    }

    #[test]
    fn perturbation_examples() {
        let one = ModeSpectrum::new(vec![mhz(250.0)]).unwrap();
        assert_eq!(perturbation_magnitude(&coupling(&one, 0.1), &one).unwrap(), 0.0);
        for n in [2usize, 5, 10] {
            let sp = mhz(15.0);
            let centred = |sp: f64| {
                ModeSpectrum::equally_spaced(mhz(250.0) - 0.5 * (n - 1) as f64 * sp, sp, n, 0.95).unwrap()
            };
            let s = centred(sp);
            // equal |Ω_k| so every pair has the same numerator
            let ot = 0.01;
            let c = CouplingVector::new(vec![C64::new(ot * s.mean_detuning() / (n as f64).sqrt(), 0.0); n]).unwrap();
            let p = perturbation_magnitude(&c, &s).unwrap();
            let scale = s.mean_detuning() * ot * ot / ((n as f64).sqrt() * sp);
            assert!(p / scale > 0.5 && p / scale < 2.0, "n={n}: {}", p / scale);
            let s2 = centred(2.0 * sp);
            let p2 = perturbation_magnitude(&c, &s2).unwrap();
            assert!((p / p2 - 2.0).abs() < 1e-12);
        }
    }
}
