//! Validated unitary matrices and their JSON form.

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const UNITARITY_TOL: f64 = 1e-10;

/// max_ij |(U†U - I)_ij|.
pub fn unitarity_error(u: &DMatrix<C64>) -> f64 {
    let n = u.ncols();
    (u.adjoint() * u - DMatrix::<C64>::identity(n, n))
        .iter()
        .map(|x| x.norm())
        .fold(0.0, f64::max)
}

#[derive(Clone, Debug, PartialEq)]
pub struct UnitarySpec {
    matrix: DMatrix<C64>,
    label: String,
}

impl UnitarySpec {
    pub fn new(matrix: DMatrix<C64>, label: impl Into<String>) -> Result<Self> {
        if !matrix.is_square() || matrix.nrows() == 0 {
            return Err(Error::Invalid(format!(
                "unitary must be square and non-empty, got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        let err = unitarity_error(&matrix);
        if !(err <= UNITARITY_TOL) {
            return Err(Error::NotUnitary(err));
        }
        Ok(Self { matrix, label: label.into() })
    }

    pub fn identity(n: usize) -> Self {
        Self { matrix: DMatrix::identity(n, n), label: "identity".into() }
    }

    /// Haar-random unitary: QR of a complex Ginibre matrix with the phases of
    /// R's diagonal pushed into Q.
    pub fn haar<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Self {
        let g = DMatrix::from_fn(n, n, |_, _| {
            C64::new(rng.sample::<f64, _>(StandardNormal), rng.sample::<f64, _>(StandardNormal))
        });
        let qr = g.qr();
        let (mut q, r) = (qr.q(), qr.r());
        for j in 0..n {
            let d = r[(j, j)];
            let ph = if d.norm() > 0.0 { d / d.norm() } else { C64::new(1.0, 0.0) };
            for i in 0..n {
                q[(i, j)] *= ph;
            }
        }
        Self { matrix: q, label: "haar".into() }
    }

    /// Permutation matrix exchanging modes `a` and `b`.
    pub fn swap(n: usize, a: usize, b: usize) -> Self {
        let mut m = DMatrix::<C64>::identity(n, n);
        m.swap_rows(a, b);
        Self { matrix: m, label: format!("swap({a},{b})") }
    }

    /// Symmetric 50/50 splitter (1, 1; 1, -1)/√2.
    pub fn hadamard() -> Self {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        Self {
            matrix: DMatrix::from_row_slice(2, 2, &[h.into(), h.into(), h.into(), (-h).into()]),
            label: "hadamard".into(),
        }
    }

    /// Embed `self` acting on `modes` into an n-mode identity.
    pub fn embed(&self, n: usize, modes: &[usize]) -> Result<Self> {
        if modes.len() != self.dim() || modes.iter().any(|&m| m >= n) {
            return Err(Error::Invalid(format!("cannot embed {}-mode unitary on {modes:?} of {n}", self.dim())));
        }
        let mut m = DMatrix::<C64>::identity(n, n);
        for (a, &i) in modes.iter().enumerate() {
            for (b, &j) in modes.iter().enumerate() {
                m[(i, j)] = self.matrix[(a, b)];
            }
        }
        Ok(Self { matrix: m, label: self.label.clone() })
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.matrix
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn adjoint(&self) -> Self {
        Self { matrix: self.matrix.adjoint(), label: format!("{}†", self.label) }
    }
}

/// Dense complex matrix as paired real/imaginary row arrays.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComplexMatrix {
    pub re: Vec<Vec<f64>>,
    pub im: Vec<Vec<f64>>,
}

impl ComplexMatrix {
    pub fn to_matrix(&self) -> Result<DMatrix<C64>> {
        let rows = self.re.len();
        if rows == 0 || self.im.len() != rows {
            return Err(Error::Invalid("re/im must have the same non-zero row count".into()));
        }
        let cols = self.re[0].len();
        if self.re.iter().chain(&self.im).any(|r| r.len() != cols) {
            return Err(Error::Invalid("ragged matrix rows".into()));
        }
        Ok(DMatrix::from_fn(rows, cols, |i, j| C64::new(self.re[i][j], self.im[i][j])))
    }
}

impl From<&DMatrix<C64>> for ComplexMatrix {
    fn from(m: &DMatrix<C64>) -> Self {
        let rows = |f: fn(&C64) -> f64| (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| f(&m[(i, j)])).collect()).collect();
        Self { re: rows(|c| c.re), im: rows(|c| c.im) }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn haar_is_unitary() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for n in [1, 2, 5, 10, 16] {
            let u = UnitarySpec::haar(n, &mut rng);
            assert!(unitarity_error(u.matrix()) < 1e-13);
        }
    }

    #[test]
    fn rejects_non_unitary() {
        let m = DMatrix::from_element(2, 2, C64::new(1.0, 0.0));
        assert!(matches!(UnitarySpec::new(m, "ones"), Err(Error::NotUnitary(_))));
        assert!(UnitarySpec::new(DMatrix::<C64>::zeros(2, 3), "rect").is_err());
    }

    #[test]
    fn embedding_and_json() {
        let h = UnitarySpec::hadamard().embed(4, &[1, 3]).unwrap();
        assert!(unitarity_error(h.matrix()) < 1e-15);
        assert_eq!(h.matrix()[(0, 0)], C64::new(1.0, 0.0));
        assert!((h.matrix()[(3, 3)].re + std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
        let cm = ComplexMatrix::from(h.matrix());
        assert_eq!(&cm.to_matrix().unwrap(), h.matrix());
        assert!(UnitarySpec::hadamard().embed(2, &[0, 2]).is_err());
    }
}
