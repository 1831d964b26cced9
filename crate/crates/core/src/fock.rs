//! Few-photon Fock-space linear optics: permanents, heralded measurement and
//! feed-forward, enough to check a dual-rail CZ gate built from two
//! nonlinear-sign gates.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, Matrix3};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::unitary::UnitarySpec;

pub const DEFAULT_PHOTON_CAP: u8 = 4;
pub const MODE_CAP: usize = 10;
/// Largest permanent evaluated.
pub const PERMANENT_CAP: usize = 6;

/// Occupation-number pattern, one entry per mode.
pub type Occupation = Vec<u8>;

/// Pure state over occupation patterns.
#[derive(Clone, Debug, PartialEq)]
pub struct FockState {
    n_modes: usize,
    photon_cap: u8,
    amplitudes: BTreeMap<Occupation, C64>,
}

impl FockState {
    pub fn vacuum(n_modes: usize) -> Result<Self> {
        Self::basis(&vec![0; n_modes])
    }

    pub fn basis(occupation: &[u8]) -> Result<Self> {
        let mut s = Self::empty(occupation.len(), DEFAULT_PHOTON_CAP)?;
        s.add(occupation, C64::new(1.0, 0.0))?;
        Ok(s)
    }

    /// Zero vector on `n_modes` modes.
    pub fn empty(n_modes: usize, photon_cap: u8) -> Result<Self> {
        if n_modes == 0 || n_modes > MODE_CAP {
            return Err(Error::Capacity(format!("mode count {n_modes} outside 1..={MODE_CAP}")));
        }
        Ok(Self { n_modes, photon_cap, amplitudes: BTreeMap::new() })
    }

    /// Normalized superposition of basis patterns.
    pub fn superposition(n_modes: usize, terms: &[(Occupation, C64)]) -> Result<Self> {
        let mut s = Self::empty(n_modes, DEFAULT_PHOTON_CAP)?;
        for (occ, a) in terms {
            s.add(occ, *a)?;
        }
        s.normalized()
    }

    /// Add `amp` to the amplitude of `occupation`.
    pub fn add(&mut self, occupation: &[u8], amp: C64) -> Result<()> {
        if occupation.len() != self.n_modes {
            return Err(Error::Dimension { expected: self.n_modes, got: occupation.len() });
        }
        if let Some(&n) = occupation.iter().find(|&&n| n > self.photon_cap) {
            return Err(Error::Capacity(format!("occupation {n} exceeds photon cap {}", self.photon_cap)));
        }
        *self.amplitudes.entry(occupation.to_vec()).or_default() += amp;
        Ok(())
    }

    pub fn n_modes(&self) -> usize {
        self.n_modes
    }

    pub fn photon_cap(&self) -> u8 {
        self.photon_cap
    }

    pub fn with_photon_cap(mut self, cap: u8) -> Result<Self> {
        if self.amplitudes.keys().flatten().any(|&n| n > cap) {
            return Err(Error::Capacity(format!("state already exceeds photon cap {cap}")));
        }
        self.photon_cap = cap;
        Ok(self)
    }

    pub fn amplitude(&self, occupation: &[u8]) -> C64 {
        self.amplitudes.get(occupation).copied().unwrap_or_default()
    }

    /// Non-zero terms in pattern order.
    pub fn terms(&self) -> impl Iterator<Item = (&Occupation, &C64)> {
        self.amplitudes.iter().filter(|(_, a)| a.norm_sqr() > 0.0)
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.values().map(|a| a.norm_sqr()).sum()
    }

    pub fn normalized(mut self) -> Result<Self> {
        let n = self.norm_sqr().sqrt();
        if n == 0.0 {
            return Err(Error::NotNormalized(0.0));
        }
        self.amplitudes.values_mut().for_each(|a| *a /= n);
        Ok(self)
    }

    /// ⟨self|other⟩.
    pub fn inner(&self, other: &Self) -> C64 {
        self.amplitudes.iter().map(|(k, a)| a.conj() * other.amplitude(k)).sum()
    }

    /// |⟨a|b⟩|² / (‖a‖²‖b‖²).
    pub fn fidelity(&self, other: &Self) -> f64 {
        let d = self.norm_sqr() * other.norm_sqr();
        if d == 0.0 {
            0.0
        } else {
            self.inner(other).norm_sqr() / d
        }
    }

    /// Distinct total photon numbers present.
    pub fn photon_numbers(&self) -> Vec<u32> {
        let mut v: Vec<u32> = self.terms().map(|(k, _)| k.iter().map(|&n| n as u32).sum()).collect();
        v.sort_unstable();
        v.dedup();
        v
    }
}

/// Permanent by Ryser's formula with Gray-code updates.
pub fn permanent(m: &DMatrix<C64>) -> Result<C64> {
    let n = m.nrows();
    if m.ncols() != n {
        return Err(Error::Invalid(format!("permanent needs a square matrix, got {}x{}", n, m.ncols())));
    }
    if n > PERMANENT_CAP {
        return Err(Error::Capacity(format!("permanent of size {n} exceeds cap {PERMANENT_CAP}")));
    }
    if n == 0 {
        return Ok(C64::new(1.0, 0.0));
    }
    let mut row_sums = vec![C64::new(0.0, 0.0); n];
    let mut total = C64::new(0.0, 0.0);
    let mut gray = 0usize;
    for k in 1..(1usize << n) {
        let next = k ^ (k >> 1);
        let bit = (gray ^ next).trailing_zeros() as usize;
        let sign = if next & (1 << bit) != 0 { 1.0 } else { -1.0 };
        for (i, r) in row_sums.iter_mut().enumerate() {
            *r += sign * m[(i, bit)];
        }
        gray = next;
        let prod: C64 = row_sums.iter().product();
        let parity = if (n - next.count_ones() as usize).is_multiple_of(2) { 1.0 } else { -1.0 };
        total += parity * prod;
    }
    Ok(total)
}

fn factorial(n: u8) -> f64 {
    (1..=n as u32).map(f64::from).product()
}

/// All occupation patterns of `k` modes holding `total` photons.
fn patterns(k: usize, total: u32) -> Vec<Vec<u8>> {
    if k == 0 {
        return if total == 0 { vec![vec![]] } else { vec![] };
    }
    let mut out = Vec::new();
    for first in (0..=total).rev() {
        for mut rest in patterns(k - 1, total - first) {
            rest.insert(0, first as u8);
            out.push(rest);
        }
    }
    out
}

/// Apply the linear-optical unitary `u` to `modes` of `state`:
/// â†_j → Σ_i u_ij â†_i, amplitudes ⟨m|Û|n⟩ = per(u[m, n]) / √(Π n! Π m!).
pub fn apply_unitary(state: &FockState, u: &UnitarySpec, modes: &[usize]) -> Result<FockState> {
    let k = modes.len();
    if u.dim() != k {
        return Err(Error::Dimension { expected: k, got: u.dim() });
    }
    if modes.iter().any(|&m| m >= state.n_modes) {
        return Err(Error::Invalid(format!("mode index out of range in {modes:?}")));
    }
    for (i, a) in modes.iter().enumerate() {
        if modes[i + 1..].contains(a) {
            return Err(Error::Invalid(format!("repeated mode {a} in {modes:?}")));
        }
    }
    let um = u.matrix();
    let mut out = FockState::empty(state.n_modes, state.photon_cap)?;
    let mut cache: BTreeMap<(Vec<u8>, Vec<u8>), C64> = BTreeMap::new();
    for (occ, amp) in state.terms() {
        let sub_in: Vec<u8> = modes.iter().map(|&m| occ[m]).collect();
        let total: u32 = sub_in.iter().map(|&n| n as u32).sum();
        let cols: Vec<usize> = sub_in.iter().enumerate().flat_map(|(j, &n)| std::iter::repeat_n(j, n as usize)).collect();
        let in_norm: f64 = sub_in.iter().map(|&n| factorial(n)).product();
        for sub_out in patterns(k, total) {
            let key = (sub_in.clone(), sub_out.clone());
            let a = match cache.get(&key) {
                Some(a) => *a,
                None => {
                    let rows: Vec<usize> =
                        sub_out.iter().enumerate().flat_map(|(i, &n)| std::iter::repeat_n(i, n as usize)).collect();
                    let sub = DMatrix::from_fn(rows.len(), cols.len(), |r, c| um[(rows[r], cols[c])]);
                    let out_norm: f64 = sub_out.iter().map(|&n| factorial(n)).product();
                    let a = permanent(&sub)? / (in_norm * out_norm).sqrt();
                    cache.insert(key, a);
                    a
                }
            };
            if a.norm_sqr() < 1e-30 {
                continue;
            }
            let mut full = occ.clone();
            for (i, &m) in modes.iter().enumerate() {
                full[m] = sub_out[i];
            }
            out.add(&full, amp * a)?;
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct MeasurementOutcome {
    pub pattern: Occupation,
    pub probability: f64,
    /// Renormalized state of the unmeasured modes.
    pub conditioned_state: FockState,
}

/// Project `modes` onto `pattern` and keep the rest.
pub fn measure_and_condition(state: &FockState, modes: &[usize], pattern: &[u8]) -> Result<MeasurementOutcome> {
    if modes.len() != pattern.len() {
        return Err(Error::Dimension { expected: modes.len(), got: pattern.len() });
    }
    if modes.iter().any(|&m| m >= state.n_modes) {
        return Err(Error::Invalid(format!("mode index out of range in {modes:?}")));
    }
    let keep: Vec<usize> = (0..state.n_modes).filter(|m| !modes.contains(m)).collect();
    let total = state.norm_sqr();
    let mut kept = BTreeMap::<Occupation, C64>::new();
    for (occ, a) in state.terms() {
        if modes.iter().zip(pattern).all(|(&m, &p)| occ[m] == p) {
            *kept.entry(keep.iter().map(|&m| occ[m]).collect()).or_default() += a;
        }
    }
    let p: f64 = kept.values().map(|a| a.norm_sqr()).sum();
    if p <= 1e-24 * total.max(1e-300) {
        return Err(Error::Conditioning(pattern.to_vec()));
    }
    let conditioned_state = if keep.is_empty() {
        // nothing left: a one-mode vacuum stands for the scalar
        FockState::vacuum(1)?
    } else {
        let mut s = FockState::empty(keep.len(), state.photon_cap)?;
        for (k, a) in kept {
            s.add(&k, a / p.sqrt())?;
        }
        s
    };
    Ok(MeasurementOutcome { pattern: pattern.to_vec(), probability: p / total, conditioned_state })
}

/// Every pattern on `modes` with non-zero probability, with its outcome.
pub fn measurement_outcomes(state: &FockState, modes: &[usize]) -> Result<Vec<MeasurementOutcome>> {
    let mut seen: Vec<Occupation> = state.terms().map(|(o, _)| modes.iter().map(|&m| o[m]).collect()).collect();
    seen.sort();
    seen.dedup();
    seen.into_iter().map(|p| measure_and_condition(state, modes, &p)).collect()
}

/// Nonlinear-sign gate on (signal, ancilla, ancilla): with ancilla input
/// |1,0⟩ and herald (1,0), maps c0|0⟩ + c1|1⟩ + c2|2⟩ to
/// ½(c0|0⟩ + c1|1⟩ - c2|2⟩).
///
/// The matrix is found by Newton iteration over real orthogonal 3×3
/// matrices, scoring each candidate with [`apply_unitary`].
pub fn ns_gate() -> Result<UnitarySpec> {
    const TARGET: [f64; 3] = [0.5, 0.5, -0.5];
    let residual = |x: &[f64; 3], flip: bool| -> Result<[f64; 3]> {
        let u = orthogonal_from(x, flip);
        let mut r = [0.0; 3];
        for n in 0..3u8 {
            let out = apply_unitary(&FockState::basis(&[n, 1, 0])?, &u, &[0, 1, 2])?;
            let a = out.amplitude(&[n, 1, 0]);
            r[n as usize] = a.re - TARGET[n as usize];
        }
        Ok(r)
    };
    // deterministic spread of starting points
    let starts = (0..64).map(|i| {
        let f = |k: u32| ((i as f64 + 1.0) * (0.618_033_988_75 * k as f64 + 0.1)).fract() * 2.0 * std::f64::consts::PI - std::f64::consts::PI;
        ([f(1), f(2), f(3)], i % 2 == 1)
    });
    for (mut x, flip) in starts {
        for _ in 0..60 {
            let r = residual(&x, flip)?;
            let err = r.iter().map(|v| v.abs()).fold(0.0, f64::max);
            if err < 1e-14 {
                let u = orthogonal_from(&x, flip);
                return Ok(u.with_label("ns"));
            }
            let h = 1e-7;
            let mut jac = Matrix3::<f64>::zeros();
            for c in 0..3 {
                let mut xp = x;
                xp[c] += h;
                let mut xm = x;
                xm[c] -= h;
                let (rp, rm) = (residual(&xp, flip)?, residual(&xm, flip)?);
                for row in 0..3 {
                    jac[(row, c)] = (rp[row] - rm[row]) / (2.0 * h);
                }
            }
            let Some(inv) = jac.try_inverse() else { break };
            let step = inv * nalgebra::Vector3::new(r[0], r[1], r[2]);
            for c in 0..3 {
                x[c] -= step[c].clamp(-0.5, 0.5);
            }
        }
    }
    Err(Error::Derivation("no orthogonal 3-mode matrix satisfies the sign-gate constraints".into()))
}

// exp of the skew matrix built from x, optionally times diag(1, 1, -1)
fn orthogonal_from(x: &[f64; 3], flip: bool) -> UnitarySpec {
    let k = Matrix3::new(0.0, -x[2], x[1], x[2], 0.0, -x[0], -x[1], x[0], 0.0);
    let mut r = k.exp();
    if flip {
        r.column_mut(2).neg_mut();
    }
    let m = DMatrix::from_fn(3, 3, |i, j| C64::new(r[(i, j)], 0.0));
    UnitarySpec::new(m, "ns").expect("rotation is orthogonal")
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StageRole {
    Prepare,
    Measure,
    Write,
    Transfer,
    Feedforward,
}

/// One step of a gate: a unitary on some modes, optionally followed by
/// photon counting on `measured` modes (which are then dropped; measured
/// modes must be the highest-indexed ones so the rest keep their indices).
#[derive(Clone, Debug, PartialEq)]
pub struct GateStage {
    pub label: String,
    pub role: StageRole,
    pub unitary: UnitarySpec,
    pub modes: Vec<usize>,
    pub measured: Vec<usize>,
}

impl GateStage {
    pub fn new(label: impl Into<String>, role: StageRole, unitary: UnitarySpec, modes: Vec<usize>) -> Self {
        Self { label: label.into(), role, unitary, modes, measured: Vec::new() }
    }

    pub fn measuring(mut self, modes: Vec<usize>) -> Self {
        self.measured = modes;
        self
    }

    /// The stage's unitary embedded in an `n`-mode identity, ready to be
    /// compiled into memory plans.
    pub fn full_unitary(&self, n: usize) -> Result<UnitarySpec> {
        self.unitary.embed(n, &self.modes)
    }
}

/// Mode layout of [`cz_network`]: rails (a0, a1, b0, b1), then two ancilla
/// pairs.
pub const CZ_MODES: usize = 8;
/// Ancilla input and success herald on modes 4..8.
pub const CZ_ANCILLA: [u8; 4] = [1, 0, 1, 0];

/// Dual-rail CZ: mix the |1⟩ rails, apply a sign gate to each, herald both,
/// unmix.
pub fn cz_network() -> Result<Vec<GateStage>> {
    let ns = ns_gate()?;
    let h = UnitarySpec::hadamard();
    let mut two_ns = DMatrix::<C64>::identity(6, 6);
    // sign gates on (a1, anc4, anc5) and (b1, anc6, anc7) in local order
    // [a1, b1, anc4, anc5, anc6, anc7]
    let idx = [[0, 2, 3], [1, 4, 5]];
    for g in idx {
        for (r, &i) in g.iter().enumerate() {
            for (c, &j) in g.iter().enumerate() {
                two_ns[(i, j)] = ns.matrix()[(r, c)];
            }
        }
    }
    Ok(vec![
        GateStage::new("U1", StageRole::Prepare, h.clone().with_label("mix"), vec![1, 3]),
        GateStage::new("U2", StageRole::Measure, UnitarySpec::new(two_ns, "ns⊗ns")?, vec![1, 3, 4, 5, 6, 7])
            .measuring(vec![4, 5, 6, 7]),
        GateStage::new("U3", StageRole::Write, UnitarySpec::identity(4), vec![0, 1, 2, 3]),
        GateStage::new("U4", StageRole::Transfer, h.with_label("unmix"), vec![1, 3]),
        GateStage::new("U5", StageRole::Feedforward, UnitarySpec::identity(4), vec![0, 1, 2, 3]),
    ])
}

/// What to do after a measurement pattern.
#[derive(Clone, Debug, PartialEq)]
pub enum Action {
    /// Keep going; a feed-forward stage then applies `correction` (on the
    /// stage's modes) in place of its own unitary, if given.
    Accept { correction: Option<UnitarySpec> },
    Reject,
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct Policy {
    pub rules: Vec<(Occupation, Action)>,
    pub default: Option<Action>,
}

impl Policy {
    /// Accept one pattern, reject the rest.
    pub fn herald(pattern: &[u8]) -> Self {
        Self { rules: vec![(pattern.to_vec(), Action::Accept { correction: None })], default: Some(Action::Reject) }
    }

    /// Accept everything.
    pub fn accept_all() -> Self {
        Self { rules: Vec::new(), default: Some(Action::Accept { correction: None }) }
    }

    fn action(&self, pattern: &[u8]) -> Result<&Action> {
        self.rules
            .iter()
            .find(|(p, _)| p == pattern)
            .map(|(_, a)| a)
            .or(self.default.as_ref())
            .ok_or_else(|| Error::Policy(pattern.to_vec()))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeedForwardResult {
    /// Accepted branches, probabilities cumulative over every measurement.
    pub accepted: Vec<MeasurementOutcome>,
    pub rejected: Vec<(Vec<Occupation>, f64)>,
    pub success_probability: f64,
    pub failure_probability: f64,
}

/// Run `stages` on `input`, branching at every measurement according to
/// `policy`.
pub fn run_with_feedforward(stages: &[GateStage], input: &FockState, policy: &Policy) -> Result<FeedForwardResult> {
    let mut accepted = Vec::new();
    let mut rejected = Vec::new();
    branch(stages, input.clone(), 1.0, Vec::new(), None, policy, &mut accepted, &mut rejected)?;
    let success_probability = accepted.iter().map(|o: &MeasurementOutcome| o.probability).sum();
    let failure_probability = rejected.iter().map(|(_, p)| p).sum();
    Ok(FeedForwardResult { accepted, rejected, success_probability, failure_probability })
}

#[allow(clippy::too_many_arguments)]
fn branch(
    stages: &[GateStage],
    mut state: FockState,
    prob: f64,
    history: Vec<Occupation>,
    mut correction: Option<UnitarySpec>,
    policy: &Policy,
    accepted: &mut Vec<MeasurementOutcome>,
    rejected: &mut Vec<(Vec<Occupation>, f64)>,
) -> Result<()> {
    for (i, stage) in stages.iter().enumerate() {
        let u = match (stage.role, correction.take()) {
            (StageRole::Feedforward, Some(c)) => c,
            (_, c) => {
                correction = c;
                stage.unitary.clone()
            }
        };
        state = apply_unitary(&state, &u, &stage.modes)?;
        if stage.measured.is_empty() {
            continue;
        }
        let first_measured = state.n_modes() - stage.measured.len();
        if stage.measured.iter().any(|&m| m < first_measured) {
            return Err(Error::Invalid(format!("stage {} must measure the highest modes", stage.label)));
        }
        for outcome in measurement_outcomes(&state, &stage.measured)? {
            let mut h = history.clone();
            h.push(outcome.pattern.clone());
            let p = prob * outcome.probability;
            match policy.action(&outcome.pattern)? {
                Action::Reject => rejected.push((h, p)),
                Action::Accept { correction: c } => {
                    branch(&stages[i + 1..], outcome.conditioned_state, p, h, c.clone(), policy, accepted, rejected)?
                }
            }
        }
        return Ok(());
    }
    let pattern = history.into_iter().flatten().collect();
    accepted.push(MeasurementOutcome { pattern, probability: prob, conditioned_state: state });
    Ok(())
}

/// Two dual-rail qubits on modes (a0, a1, b0, b1) followed by `ancilla`;
/// `qubits` gives amplitudes of |00⟩, |01⟩, |10⟩, |11⟩.
pub fn dual_rail_state(qubits: [C64; 4], ancilla: &[u8]) -> Result<FockState> {
    let terms: Vec<(Occupation, C64)> = (0..4)
        .map(|q| {
            let (a, b) = (q >> 1, q & 1);
            let mut occ = vec![0u8; 4 + ancilla.len()];
            occ[a] = 1;
            occ[2 + b] = 1;
            occ[4..].copy_from_slice(ancilla);
            (occ, qubits[q])
        })
        .collect();
    FockState::superposition(4 + ancilla.len(), &terms)
}

/// Input of [`cz_network`].
pub fn cz_input(qubits: [C64; 4]) -> Result<FockState> {
    dual_rail_state(qubits, &CZ_ANCILLA)
}

/// CZ|ψ⟩ on the four rail modes.
pub fn cz_target(mut qubits: [C64; 4]) -> Result<FockState> {
    qubits[3] = -qubits[3];
    dual_rail_state(qubits, &[])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::unitary::unitarity_error;
    use proptest::prelude::*;
    use rand::SeedableRng;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    fn naive_permanent(m: &DMatrix<C64>) -> C64 {
        fn perms(n: usize) -> Vec<Vec<usize>> {
            if n == 0 {
                return vec![vec![]];
            }
            let mut out = Vec::new();
            for p in perms(n - 1) {
                for pos in 0..=p.len() {
                    let mut q = p.clone();
                    q.insert(pos, n - 1);
                    out.push(q);
                }
            }
            out
        }
        perms(m.nrows()).iter().map(|p| p.iter().enumerate().map(|(i, &j)| m[(i, j)]).product::<C64>()).sum()
    }

    // Expand Π_j (Σ_i u_ij a†_i)^{n_j} / √n_j! on the vacuum directly.
    fn creation_expansion(u: &DMatrix<C64>, occ: &[u8]) -> BTreeMap<Vec<u8>, C64> {
        let m = occ.len();
        let mut poly: BTreeMap<Vec<u8>, C64> = BTreeMap::from([(vec![0; m], c(1.0))]);
        for (j, &n) in occ.iter().enumerate() {
            for _ in 0..n {
                let mut next = BTreeMap::new();
                for (k, a) in &poly {
                    for i in 0..m {
                        let mut k2 = k.clone();
                        k2[i] += 1;
                        *next.entry(k2).or_insert(c(0.0)) += a * u[(i, j)];
                    }
                }
                poly = next;
            }
            poly.values_mut().for_each(|a| *a /= factorial(n).sqrt());
        }
        // monomials → normalized number states
        poly.into_iter().map(|(k, a)| {
            let f: f64 = k.iter().map(|&n| factorial(n)).product();
            (k, a * f.sqrt())
        }).collect()
    }

    #[test]
    fn permanent_examples() {
        assert_eq!(permanent(&DMatrix::identity(4, 4)).unwrap(), c(1.0));
        assert_eq!(permanent(&DMatrix::from_element(2, 2, c(1.0))).unwrap(), c(2.0));
        assert!(permanent(&DMatrix::identity(7, 7)).is_err());
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        for n in 1..=5 {
            let m = UnitarySpec::haar(n, &mut rng).matrix().clone();
            assert!((permanent(&m).unwrap() - naive_permanent(&m)).norm() < 1e-12);
        }
    }

    #[test]
    fn identity_and_single_photon() {
        let s = FockState::superposition(3, &[(vec![1, 1, 0], c(1.0)), (vec![0, 0, 2], C64::new(0.0, 1.0))]).unwrap();
        let same = apply_unitary(&s, &UnitarySpec::identity(3), &[0, 1, 2]).unwrap();
        assert!((same.fidelity(&s) - 1.0).abs() < 1e-14);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let u = UnitarySpec::haar(3, &mut rng);
        let out = apply_unitary(&FockState::basis(&[0, 1, 0]).unwrap(), &u, &[0, 1, 2]).unwrap();
        for i in 0..3 {
            let mut occ = vec![0; 3];
            occ[i] = 1;
            assert!((out.amplitude(&occ) - u.matrix()[(i, 1)]).norm() < 1e-14);
        }
    }

    #[test]
    fn hong_ou_mandel() {
        let out = apply_unitary(&FockState::basis(&[1, 1]).unwrap(), &UnitarySpec::hadamard(), &[0, 1]).unwrap();
        assert!(out.amplitude(&[1, 1]).norm() < 1e-15);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((out.amplitude(&[2, 0]) - c(h)).norm() < 1e-15);
        assert!((out.amplitude(&[0, 2]) + c(h)).norm() < 1e-15);
    }

    #[test]
    fn matches_creation_operator_expansion() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        for m in 1..=4usize {
            let u = UnitarySpec::haar(m, &mut rng);
            let modes: Vec<usize> = (0..m).collect();
            for total in 0..=3u32 {
                for occ in patterns(m, total) {
                    let out = apply_unitary(&FockState::basis(&occ).unwrap(), &u, &modes).unwrap();
                    for (k, a) in creation_expansion(u.matrix(), &occ) {
                        assert!((out.amplitude(&k) - a).norm() < 1e-12, "{occ:?} → {k:?}");
                    }
                }
            }
        }
    }

    #[test]
    fn capacity_is_enforced() {
        let s = FockState::basis(&[3, 2]).unwrap();
        assert!(matches!(apply_unitary(&s, &UnitarySpec::hadamard(), &[0, 1]), Err(Error::Capacity(_))));
        assert!(FockState::basis(&[5]).is_err());
        assert!(FockState::vacuum(11).is_err());
    }

    #[test]
    fn measurement_examples() {
        let s = FockState::basis(&[1, 0]).unwrap();
        assert!((measure_and_condition(&s, &[0, 1], &[1, 0]).unwrap().probability - 1.0).abs() < 1e-15);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let s = FockState::superposition(2, &[(vec![1, 0], c(h)), (vec![0, 1], c(h))]).unwrap();
        let o = measure_and_condition(&s, &[1], &[0]).unwrap();
        assert!((o.probability - 0.5).abs() < 1e-15);
        assert!((o.conditioned_state.amplitude(&[1]) - c(1.0)).norm() < 1e-15);
        assert!(matches!(measure_and_condition(&s, &[1], &[2]), Err(Error::Conditioning(_))));
        let all: f64 = measurement_outcomes(&s, &[1]).unwrap().iter().map(|o| o.probability).sum();
        assert!((all - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ns_gate_heralds_sign_flip() {
        let ns = ns_gate().unwrap();
        assert!(unitarity_error(ns.matrix()) < 1e-10);
        for (n, want) in [(0u8, 0.5), (1, 0.5), (2, -0.5)] {
            let out = apply_unitary(&FockState::basis(&[n, 1, 0]).unwrap(), &ns, &[0, 1, 2]).unwrap();
            assert!((out.amplitude(&[n, 1, 0]) - c(want)).norm() < 1e-12);
            let o = measure_and_condition(&out, &[1, 2], &[1, 0]).unwrap();
            assert!((o.probability - 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn cz_on_basis_and_plus_plus() {
        let stages = cz_network().unwrap();
        for s in &stages {
            assert!(unitarity_error(s.full_unitary(CZ_MODES).unwrap().matrix()) < 1e-10);
        }
        let policy = Policy::herald(&CZ_ANCILLA);
        let mut inputs: Vec<[C64; 4]> = (0..4)
            .map(|q| {
                let mut v = [c(0.0); 4];
                v[q] = c(1.0);
                v
            })
            .collect();
        inputs.push([c(0.5); 4]);
        for q in inputs {
            let r = run_with_feedforward(&stages, &cz_input(q).unwrap(), &policy).unwrap();
            assert_eq!(r.accepted.len(), 1);
            assert!((r.success_probability - 1.0 / 16.0).abs() < 1e-10);
            assert!((r.failure_probability - 15.0 / 16.0).abs() < 1e-10);
            let out = &r.accepted[0].conditioned_state;
            let target = cz_target(q).unwrap();
            assert!(1.0 - out.fidelity(&target) < 1e-10);
            // the sign itself, not only up to global phase, for |11⟩
            if q[3] == c(1.0) {
                assert!((out.inner(&target) - c(1.0)).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn policy_errors_and_trivial_policy() {
        let stages = cz_network().unwrap();
        let strict = Policy { rules: vec![(CZ_ANCILLA.to_vec(), Action::Accept { correction: None })], default: None };
        let input = cz_input([c(1.0), c(0.0), c(0.0), c(0.0)]).unwrap();
        assert!(matches!(run_with_feedforward(&stages, &input, &strict), Err(Error::Policy(_))));
        let plain = vec![GateStage::new("mix", StageRole::Prepare, UnitarySpec::hadamard(), vec![0, 1])];
        let s = FockState::basis(&[1, 1]).unwrap();
        let r = run_with_feedforward(&plain, &s, &Policy::default()).unwrap();
        let direct = apply_unitary(&s, &UnitarySpec::hadamard(), &[0, 1]).unwrap();
        assert_eq!(r.accepted[0].conditioned_state, direct);
        assert_eq!(r.success_probability, 1.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn norm_number_and_composition(seed in any::<u64>(), occ in proptest::collection::vec(0u8..=1, 4)) {
            prop_assume!(occ.iter().any(|&n| n > 0));
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let u = UnitarySpec::haar(4, &mut rng);
            let v = UnitarySpec::haar(4, &mut rng);
            let modes = [0, 1, 2, 3];
            let s = FockState::basis(&occ).unwrap();
            let a = apply_unitary(&apply_unitary(&s, &u, &modes).unwrap(), &v, &modes).unwrap();
            let vu = UnitarySpec::new(v.matrix() * u.matrix(), "vu").unwrap();
            let b = apply_unitary(&s, &vu, &modes).unwrap();
            prop_assert!((a.norm_sqr() - 1.0).abs() < 1e-10);
            prop_assert_eq!(a.photon_numbers(), s.photon_numbers());
            for (k, x) in b.terms() {
                prop_assert!((a.amplitude(k) - x).norm() < 1e-10);
            }
        }
    }
}
