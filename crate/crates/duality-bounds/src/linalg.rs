//! Dense complex linear algebra and the quadratic-form algebra shared by all
//! other modules.
//!
//! Everything here is dense and O(d^3); the intended scale is d <= 64.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex;

use crate::error::{Error, Result};

pub type C64 = Complex<f64>;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

/// Relative asymmetry above which a matrix is rejected rather than silently
/// symmetrized.
pub const HERMITIAN_REJECT_TOL: f64 = 1e-8;

/// Relative singular-value cutoff for pseudo-inverse solves.
pub const PINV_CUTOFF_REL: f64 = 1e-12;

pub fn identity(dim: usize) -> CMatrix {
    CMatrix::identity(dim, dim)
}

pub fn zeros(dim: usize) -> CMatrix {
    CMatrix::zeros(dim, dim)
}

pub fn is_finite_matrix(m: &CMatrix) -> bool {
    m.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

pub fn is_finite_vector(v: &CVector) -> bool {
    v.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

fn check_square(m: &CMatrix) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::DimensionMismatch {
            expected: m.nrows(),
            got: m.ncols(),
        });
    }
    Ok(())
}

/// Hermitian / skew-Hermitian decomposition: `M = Mh + Ms` with
/// `Mh = (M + M^dag)/2` and `Ms = (M - M^dag)/2`.
pub fn hermitian_split(m: &CMatrix) -> Result<(CMatrix, CMatrix)> {
    check_square(m)?;
    let adj = m.adjoint();
    let mh = (m + &adj).scale(0.5);
    let ms = (m - &adj).scale(0.5);
    Ok((mh, ms))
}

/// Operator (spectral) norm via singular values.
pub fn op_norm(m: &CMatrix) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    m.clone().singular_values().max()
}

/// Frobenius asymmetry of a nominally Hermitian matrix, relative to its norm.
pub fn relative_asymmetry(m: &CMatrix) -> f64 {
    let adj = m.adjoint();
    let skew = (m - &adj).norm();
    let scale = m.norm().max(1e-300);
    skew / scale
}

/// Eigendecomposition of a Hermitian matrix. The input is symmetrized before
/// factoring so that roundoff from operator products does not leak into the
/// eigenvalues.
pub struct HermitianEigen {
    pub vectors: CMatrix,
    pub values: DVector<f64>,
}

impl HermitianEigen {
    pub fn new(a: &CMatrix) -> Result<Self> {
        check_square(a)?;
        let adj = a.adjoint();
        let sym = (a + &adj).scale(0.5);
        let eig = SymmetricEigen::new(sym);
        Ok(Self {
            vectors: eig.eigenvectors,
            values: eig.eigenvalues,
        })
    }

    pub fn lambda_min(&self) -> f64 {
        self.values.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn lambda_max(&self) -> f64 {
        self.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Spectral norm of the decomposed matrix.
    pub fn op_norm(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, &v| m.max(v.abs()))
    }

    /// Least-squares solve `A x = b` through the eigenbasis, dropping
    /// eigendirections below `cutoff_rel * max|lambda|`.
    pub fn pinv_solve(&self, b: &CVector, cutoff_rel: f64) -> CVector {
        let dim = self.values.len();
        let cutoff = cutoff_rel * self.op_norm();
        let mut x = CVector::zeros(dim);
        for i in 0..dim {
            let lam = self.values[i];
            if lam.abs() <= cutoff {
                continue;
            }
            let q = self.vectors.column(i);
            let coeff = q.dotc(b) / Complex::new(lam, 0.0);
            x.axpy(coeff, &q.into_owned(), Complex::new(1.0, 0.0));
        }
        x
    }
}

/// Classification of a Hermitian matrix against an eps shift.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Definiteness {
    PositiveDefiniteEps,
    PositiveSemidefiniteEps,
    Below,
}

/// Classifies `A` by `lambda_min(A)` against `eps`, with an eigenvalue
/// tolerance of `1e-10 * ||A||_O` around the boundary.
pub fn definiteness(a: &CMatrix, eps: f64) -> Result<Definiteness> {
    let asym = relative_asymmetry(a);
    if asym > HERMITIAN_REJECT_TOL {
        return Err(Error::NotHermitian { asymmetry: asym });
    }
    let eig = HermitianEigen::new(a)?;
    let tol = 1e-10 * eig.op_norm();
    let lam = eig.lambda_min();
    if lam > eps + tol {
        Ok(Definiteness::PositiveDefiniteEps)
    } else if lam >= eps - tol {
        Ok(Definiteness::PositiveSemidefiniteEps)
    } else {
        Ok(Definiteness::Below)
    }
}

/// Solves `A x = b` for Hermitian positive (semi)definite `A`, falling back
/// to the pseudo-inverse on the semidefinite boundary. Errors if `A` is
/// indefinite below tolerance.
pub fn solve_hermitian(a: &CMatrix, b: &CVector) -> Result<CVector> {
    if a.nrows() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.nrows(),
            got: b.len(),
        });
    }
    let eig = HermitianEigen::new(a)?;
    let tol = 1e-10 * eig.op_norm().max(1e-300);
    let lam = eig.lambda_min();
    if lam < -tol {
        return Err(Error::Indefinite { lambda_min: lam });
    }
    Ok(eig.pinv_solve(b, PINV_CUTOFF_REL))
}

/// A real-valued quadratic function `f(t) = 2 Re(t^dag s) - t^dag A t + v`
/// with Hermitian `A`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticForm {
    s: CVector,
    a: CMatrix,
    v: f64,
}

impl QuadraticForm {
    /// Builds a form, symmetrizing `a`. Asymmetry above 1e-8 relative is an
    /// error rather than silently absorbed.
    pub fn new(s: CVector, a: CMatrix, v: f64) -> Result<Self> {
        check_square(&a)?;
        if a.nrows() != s.len() {
            return Err(Error::DimensionMismatch {
                expected: a.nrows(),
                got: s.len(),
            });
        }
        if !is_finite_matrix(&a) || !is_finite_vector(&s) || !v.is_finite() {
            return Err(Error::InvalidInput("non-finite quadratic form".into()));
        }
        let asym = relative_asymmetry(&a);
        if asym > HERMITIAN_REJECT_TOL {
            return Err(Error::NotHermitian { asymmetry: asym });
        }
        let adj = a.adjoint();
        let a = (&a + adj).scale(0.5);
        Ok(Self { s, a, v })
    }

    pub fn zero(dim: usize) -> Self {
        Self {
            s: CVector::zeros(dim),
            a: zeros(dim),
            v: 0.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.s.len()
    }

    pub fn s(&self) -> &CVector {
        &self.s
    }

    pub fn a(&self) -> &CMatrix {
        &self.a
    }

    pub fn v(&self) -> f64 {
        self.v
    }

    /// `f(t) = 2 Re(t^dag s) - t^dag A t + v`.
    pub fn eval(&self, t: &CVector) -> Result<f64> {
        if t.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: t.len(),
            });
        }
        let lin = 2.0 * t.dotc(&self.s).re;
        let quad = t.dotc(&(&self.a * t)).re;
        Ok(lin - quad + self.v)
    }

    /// Componentwise linear combination `sum_i c_i f_i`.
    pub fn combine(coeffs: &[f64], forms: &[&QuadraticForm]) -> Result<QuadraticForm> {
        if coeffs.len() != forms.len() {
            return Err(Error::DimensionMismatch {
                expected: forms.len(),
                got: coeffs.len(),
            });
        }
        if forms.is_empty() {
            return Err(Error::InvalidInput("empty combination".into()));
        }
        let dim = forms[0].dim();
        let mut s = CVector::zeros(dim);
        let mut a = zeros(dim);
        let mut v = 0.0;
        for (&c, f) in coeffs.iter().zip(forms) {
            if f.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: f.dim(),
                });
            }
            let cc = Complex::new(c, 0.0);
            s += f.s.clone().scale_c(cc);
            a += f.a.clone().scale_c(cc);
            v += c * f.v;
        }
        Ok(QuadraticForm { s, a, v })
    }

    /// `self + c * other`, dims must agree.
    pub fn add_scaled(&self, c: f64, other: &QuadraticForm) -> Result<QuadraticForm> {
        QuadraticForm::combine(&[1.0, c], &[self, other])
    }

    /// Replaces the linear part, keeping `A` and `v`.
    pub fn with_linear_part(&self, s: CVector) -> Result<QuadraticForm> {
        QuadraticForm::new(s, self.a.clone(), self.v)
    }
}

trait ScaleC {
    fn scale_c(self, c: C64) -> Self;
}

impl ScaleC for CVector {
    fn scale_c(self, c: C64) -> Self {
        self * c
    }
}

impl ScaleC for CMatrix {
    fn scale_c(self, c: C64) -> Self {
        self * c
    }
}
