//! Quadratic equality constraints satisfied by the exact physics of every
//! binary design: the compact resistive-power constraint, the simple
//! per-projector schema, and the background-shifted schema.

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::linalg::{self, C64, CMatrix, CVector, Definiteness, HermitianEigen, QuadraticForm};
use crate::scattering::{Design, ScatteringProblem};

/// Off-block mass above which a map is rejected as not respecting the
/// partition.
const BLOCK_DIAG_TOL: f64 = 1e-12;

/// Deduplication threshold on normalized (s, A) concatenations.
const DEDUP_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum ConstraintKind {
    /// `f(t) = 0` on the feasible set.
    Equality,
    /// `f(t) >= 0` on the feasible set; the multiplier is sign-constrained.
    InequalityLE,
}

/// A single quadratic constraint with its provenance label.
#[derive(Debug, Clone)]
pub struct Constraint {
    pub form: QuadraticForm,
    pub kind: ConstraintKind,
    pub label: String,
}

impl Constraint {
    pub fn equality(form: QuadraticForm, label: impl Into<String>) -> Self {
        Self {
            form,
            kind: ConstraintKind::Equality,
            label: label.into(),
        }
    }

    /// Rescales so the quadratic part has unit operator norm. Leaves
    /// (near-)zero constraints untouched.
    pub fn normalized(mut self) -> Result<Self> {
        let norm = HermitianEigen::new(self.form.a())?.op_norm();
        if norm > 1e-14 {
            let c = 1.0 / norm;
            self.form = QuadraticForm::new(
                self.form.s() * Complex::new(c, 0.0),
                self.form.a() * Complex::new(c, 0.0),
                c * self.form.v(),
            )?;
        }
        Ok(self)
    }

    /// Normalized violation scale at a point: `||s|| ||t|| + ||A||_O ||t||^2`.
    pub fn violation_scale(&self, t: &CVector) -> f64 {
        let tn = t.norm();
        let an = HermitianEigen::new(self.form.a())
            .map(|e| e.op_norm())
            .unwrap_or(0.0);
        self.form.s().norm() * tn + an * tn * tn
    }
}

/// Ordered constraints with the distinguished compact constraint.
#[derive(Debug, Clone)]
pub struct ConstraintSet {
    constraints: Vec<Constraint>,
    compact_index: usize,
}

impl ConstraintSet {
    /// `eps` is the passivity margin the compact constraint must clear.
    pub fn new(constraints: Vec<Constraint>, compact_index: usize, eps: f64) -> Result<Self> {
        if compact_index >= constraints.len() {
            return Err(Error::InvalidInput(format!(
                "compact index {compact_index} out of range"
            )));
        }
        let compact = &constraints[compact_index];
        if linalg::definiteness(compact.form.a(), eps)? != Definiteness::PositiveDefiniteEps {
            return Err(Error::PassivityViolation {
                lambda_min: HermitianEigen::new(compact.form.a())?.lambda_min(),
            });
        }
        Ok(Self {
            constraints,
            compact_index,
        })
    }

    pub fn len(&self) -> usize {
        self.constraints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.constraints.is_empty()
    }

    pub fn compact_index(&self) -> usize {
        self.compact_index
    }

    pub fn compact(&self) -> &Constraint {
        &self.constraints[self.compact_index]
    }

    pub fn get(&self, k: usize) -> &Constraint {
        &self.constraints[k]
    }

    pub fn iter(&self) -> impl Iterator<Item = &Constraint> {
        self.constraints.iter()
    }

    pub fn dim(&self) -> usize {
        self.constraints[self.compact_index].form.dim()
    }

    /// Appends a constraint (used by bound feedback); the compact index is
    /// unchanged so existing multiplier bookkeeping stays valid.
    pub fn push(&mut self, c: Constraint) {
        self.constraints.push(c);
    }

    /// Constraint residuals at a point, in set order.
    pub fn residuals(&self, t: &CVector) -> Result<Vec<f64>> {
        self.constraints.iter().map(|c| c.form.eval(t)).collect()
    }
}

fn check_block_diagonal(p: &ScatteringProblem, map: &CMatrix) -> Result<()> {
    let mass = p.partition().off_block_mass(map);
    if map.norm() > 0.0 && mass > BLOCK_DIAG_TOL {
        return Err(Error::NotBlockDiagonal { mass });
    }
    Ok(())
}

/// The resistive-power constraint: `s = i s / 2`, `A = (iU)^h`, `v = 0`.
/// Positive definite above the passivity margin, so its zero level set is
/// compact.
pub fn compact_constraint(p: &ScatteringProblem) -> Result<Constraint> {
    let u = p.build_u()?;
    let (_, us) = linalg::hermitian_split(&u)?;
    let a = us * C64::new(0.0, 1.0);
    if linalg::definiteness(&a, p.eps_passivity())? != Definiteness::PositiveDefiniteEps {
        return Err(Error::PassivityViolation {
            lambda_min: HermitianEigen::new(&a)?.lambda_min(),
        });
    }
    let s = p.incident() * C64::new(0.0, 0.5);
    Ok(Constraint::equality(
        QuadraticForm::new(s, a, 0.0)?,
        "compact",
    ))
}

/// The simple schema `Re(t^dag P s) = t^dag (PU)^h t` for a block-diagonal
/// `P`, encoded as `s = P s / 2`, `A = (PU)^h`, `v = 0`.
pub fn gen_constraint_simple(
    p: &ScatteringProblem,
    map: &CMatrix,
    label: impl Into<String>,
) -> Result<Constraint> {
    check_block_diagonal(p, map)?;
    let u = &(p.potential_inverse() - p.green());
    let (a, _) = linalg::hermitian_split(&(map * u))?;
    let s = (map * p.incident()) * C64::new(0.5, 0.0);
    Ok(Constraint::equality(QuadraticForm::new(s, a, 0.0)?, label))
}

/// The background-shifted schema at background `b`:
/// `s = (Wb^-1d P Vc + Wc^-1d Pd Vb) s / 2`, `A = (Wb^-1d P Wc^-1)^h`.
/// `map` is the post-redefinition `P` (any redefinition factor is assumed
/// already absorbed by the caller).
pub fn gen_constraint_background(
    p: &ScatteringProblem,
    map: &CMatrix,
    b: &Design,
    label: impl Into<String>,
) -> Result<Constraint> {
    check_block_diagonal(p, map)?;
    let ops = p.background_operators(b)?;
    let wb_adj = ops.wb_inv.adjoint();
    let wc_adj = ops.wc_inv.adjoint();
    let s_op = &wb_adj * map * &ops.vc + &wc_adj * map.adjoint() * &ops.vb;
    let s = (s_op * p.incident()) * C64::new(0.5, 0.0);
    let (a, _) = linalg::hermitian_split(&(wb_adj * map * &ops.wc_inv))?;
    Ok(Constraint::equality(QuadraticForm::new(s, a, 0.0)?, label))
}

fn flat_signature(c: &Constraint) -> Vec<f64> {
    let mut u: Vec<f64> = Vec::new();
    for z in c.form.s().iter() {
        u.push(z.re);
        u.push(z.im);
    }
    for z in c.form.a().iter() {
        u.push(z.re);
        u.push(z.im);
    }
    let norm: f64 = u.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        for x in &mut u {
            *x /= norm;
        }
    }
    u
}

fn signature_distance(a: &[f64], b: &[f64]) -> f64 {
    // equality constraints are sign-blind
    let d_plus: f64 = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt();
    let d_minus: f64 = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x + y) * (x + y))
        .sum::<f64>()
        .sqrt();
    d_plus.min(d_minus)
}

/// The standard constraint menu: the compact constraint plus, for every
/// block `j`, the pair `P = I|d_j` and `P = i I|d_j` through the simple
/// schema, and the same pairs through the background schema for each
/// requested background. Duplicates and zero constraints are dropped.
pub fn default_family(
    p: &ScatteringProblem,
    backgrounds: &[Design],
) -> Result<ConstraintSet> {
    let mut out: Vec<Constraint> = vec![compact_constraint(p)?];
    let mut sigs: Vec<Vec<f64>> = vec![flat_signature(&out[0])];

    let push_unique = |c: Constraint, out: &mut Vec<Constraint>, sigs: &mut Vec<Vec<f64>>| {
        if c.form.s().norm() < 1e-14 && c.form.a().norm() < 1e-14 {
            return;
        }
        let sig = flat_signature(&c);
        if sigs.iter().all(|s| signature_distance(s, &sig) >= DEDUP_TOL) {
            sigs.push(sig);
            out.push(c);
        }
    };

    for j in 0..p.num_blocks() {
        let proj = p.partition().block_projector(j);
        let proj_i = &proj * C64::new(0.0, 1.0);
        let c = gen_constraint_simple(p, &proj, format!("simple re block {j}"))?.normalized()?;
        push_unique(c, &mut out, &mut sigs);
        let c = gen_constraint_simple(p, &proj_i, format!("simple im block {j}"))?.normalized()?;
        push_unique(c, &mut out, &mut sigs);
    }

    for (bi, b) in backgrounds.iter().enumerate() {
        for j in 0..p.num_blocks() {
            let proj = p.partition().block_projector(j);
            let proj_i = &proj * C64::new(0.0, 1.0);
            let c = gen_constraint_background(p, &proj, b, format!("bg {bi} re block {j}"))?
                .normalized()?;
            push_unique(c, &mut out, &mut sigs);
            let c = gen_constraint_background(p, &proj_i, b, format!("bg {bi} im block {j}"))?
                .normalized()?;
            push_unique(c, &mut out, &mut sigs);
        }
    }

    ConstraintSet::new(out, 0, p.eps_passivity())
}

/// Outcome of checking a constraint set against exhaustive design physics.
#[derive(Debug, Clone, serde::Serialize)]
pub struct ValidationReport {
    pub max_normalized_violation: f64,
    /// `(constraint index, design bits)` of the worst violation.
    pub worst: Option<(usize, Vec<bool>)>,
    pub tol: f64,
    pub pass: bool,
}

/// Checks every constraint against a list of designs' exact solutions.
/// An empty design list passes vacuously.
pub fn validate_on_listed(
    cs: &ConstraintSet,
    p: &ScatteringProblem,
    designs: &[Design],
    tol: f64,
) -> Result<ValidationReport> {
    let mut max_violation = 0.0;
    let mut worst = None;
    for rho in designs {
        let t = p.solve_design(rho)?;
        for (k, c) in cs.iter().enumerate() {
            let val = c.form.eval(&t)?.abs();
            let scale = c.violation_scale(&t).max(1e-300);
            let normalized = val / scale;
            if normalized > max_violation {
                max_violation = normalized;
                worst = Some((k, rho.bits().to_vec()));
            }
        }
    }
    Ok(ValidationReport {
        max_normalized_violation: max_violation,
        worst,
        tol,
        pass: max_violation <= tol,
    })
}

/// Checks every constraint against all `2^J` design solutions.
pub fn validate_on_designs(
    cs: &ConstraintSet,
    p: &ScatteringProblem,
    tol: f64,
) -> Result<ValidationReport> {
    let designs: Vec<Design> = p
        .enumerate_designs()?
        .map(|r| r.map(|(d, _)| d))
        .collect::<Result<_>>()?;
    validate_on_listed(cs, p, &designs, tol)
}
