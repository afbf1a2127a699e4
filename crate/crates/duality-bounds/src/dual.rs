//! Evaluation and minimization of the convex dual function over the
//! multiplier set where the Lagrangian's quadratic part stays above eps.
//!
//! The dual value at a multiplier point is the maximum of the Lagrangian over
//! the compact set C = { t : f_dot(t) >= 0 }. When the unconstrained
//! maximizer leaves C, the compact multiplier is implicitly lifted until the
//! maximizer returns to the boundary of C; the lift changes the evaluation
//! point, not the multiplier itself.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::constraints::{ConstraintKind, ConstraintSet};
use crate::error::{Error, Result};
use crate::linalg::{CVector, CMatrix, HermitianEigen, QuadraticForm, PINV_CUTOFF_REL};

/// Normalized feasibility tolerance on the compact residual of lifted points.
pub const TOL_FEAS: f64 = 1e-10;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolverConfig {
    /// eps = eps_factor * lambda_min(A_dot).
    pub eps_factor: f64,
    pub grad_tol: f64,
    pub max_iters: usize,
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            eps_factor: 1e-6,
            grad_tol: 1e-8,
            max_iters: 500,
            seed: 0,
        }
    }
}

/// Real multipliers indexed like the constraint set.
#[derive(Debug, Clone, PartialEq)]
pub struct Multipliers(pub Vec<f64>);

impl Multipliers {
    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum DualStatus {
    Interior,
    OnEpsBoundary,
    Lifted,
}

/// A dual evaluation: the lifted maximizer, value, gradient, and the
/// distance of the quadratic part from the eps boundary.
#[derive(Debug, Clone)]
pub struct DualState {
    pub phi: Multipliers,
    pub lift_alpha: f64,
    pub t_star: CVector,
    pub value: f64,
    pub grad: Vec<f64>,
    /// lambda_min(A_phi - eps I).
    pub lambda_min: f64,
    pub status: DualStatus,
}

/// Objective plus constraint set plus the eps margin of the multiplier set.
#[derive(Debug, Clone)]
pub struct LagrangianProblem {
    objective: QuadraticForm,
    constraints: ConstraintSet,
    eps: f64,
    scale: f64,
    phi0: Multipliers,
}

impl LagrangianProblem {
    /// `eps` must be strictly positive and cleared by the compact
    /// constraint's quadratic part; the objective's constant part must be
    /// zero.
    pub fn new(objective: QuadraticForm, constraints: ConstraintSet, eps: f64) -> Result<Self> {
        if objective.dim() != constraints.dim() {
            return Err(Error::DimensionMismatch {
                expected: constraints.dim(),
                got: objective.dim(),
            });
        }
        if eps <= 0.0 {
            return Err(Error::InvalidInput("eps must be strictly positive".into()));
        }
        if objective.v() != 0.0 {
            return Err(Error::InvalidInput(
                "objective constant part must be zero".into(),
            ));
        }
        let lam_dot = HermitianEigen::new(constraints.compact().form.a())?.lambda_min();
        if lam_dot <= eps {
            return Err(Error::InvalidInput(format!(
                "compact constraint not eps-positive-definite: lambda_min {lam_dot:.3e} <= eps {eps:.3e}"
            )));
        }

        let mut lp = Self {
            phi0: Multipliers::zeros(constraints.len()),
            scale: 1.0,
            objective,
            constraints,
            eps,
        };
        lp.phi0 = lp.initial_multipliers()?;
        let d0 = eval_dual(&lp, &lp.phi0)?.value;
        lp.scale = d0.abs() + 1.0;
        Ok(lp)
    }

    /// Construction with the default eps = 1e-6 * lambda_min(A_dot).
    pub fn with_default_eps(
        objective: QuadraticForm,
        constraints: ConstraintSet,
        eps_factor: f64,
    ) -> Result<Self> {
        let lam_dot = HermitianEigen::new(constraints.compact().form.a())?.lambda_min();
        Self::new(objective, constraints, eps_factor * lam_dot)
    }

    pub fn objective(&self) -> &QuadraticForm {
        &self.objective
    }

    pub fn constraints(&self) -> &ConstraintSet {
        &self.constraints
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    /// |D(phi0)| + 1, the dimensionless reference for all stopping criteria.
    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn dim(&self) -> usize {
        self.objective.dim()
    }

    pub fn initial_point(&self) -> &Multipliers {
        &self.phi0
    }

    /// Same constraints and eps, different objective. The scale is
    /// recomputed for the new objective.
    pub fn with_objective(&self, objective: QuadraticForm) -> Result<Self> {
        Self::new(objective, self.constraints.clone(), self.eps)
    }

    /// `phi0 = c e_dot` with c large enough that A_phi0 clears eps with
    /// margin.
    fn initial_multipliers(&self) -> Result<Multipliers> {
        let lam_obj = HermitianEigen::new(self.objective.a())?.lambda_min();
        let lam_dot = HermitianEigen::new(self.constraints.compact().form.a())?.lambda_min();
        let mut c = ((2.0 * self.eps - lam_obj) / lam_dot).max(1.0);
        for _ in 0..80 {
            let mut phi = Multipliers::zeros(self.constraints.len());
            phi.0[self.constraints.compact_index()] = c;
            let (_, a, _) = self.assemble(&phi)?;
            let lam = HermitianEigen::new(&a)?.lambda_min();
            if lam >= 1.5 * self.eps {
                return Ok(phi);
            }
            c *= 2.0;
        }
        Err(Error::InvalidInput(
            "could not find an initial multiplier in Phi_eps".into(),
        ))
    }

    /// Assembles `(s_phi, A_phi, v_phi)` of the Lagrangian at `phi`.
    pub fn assemble(&self, phi: &Multipliers) -> Result<(CVector, CMatrix, f64)> {
        self.check_phi_len(phi)?;
        let mut s = self.objective.s().clone();
        let mut a = self.objective.a().clone();
        let mut v = 0.0;
        for (k, c) in self.constraints.iter().enumerate() {
            let w = Complex::new(phi.0[k], 0.0);
            s += c.form.s() * w;
            a += c.form.a() * w;
            v += phi.0[k] * c.form.v();
        }
        Ok((s, a, v))
    }

    /// Pure-constraint combination `(s_psi, A_psi, v_psi)`, objective
    /// excluded.
    pub fn assemble_pure(&self, psi: &[f64]) -> Result<(CVector, CMatrix, f64)> {
        if psi.len() != self.constraints.len() {
            return Err(Error::DimensionMismatch {
                expected: self.constraints.len(),
                got: psi.len(),
            });
        }
        let dim = self.dim();
        let mut s = CVector::zeros(dim);
        let mut a = crate::linalg::zeros(dim);
        let mut v = 0.0;
        for (k, c) in self.constraints.iter().enumerate() {
            let w = Complex::new(psi[k], 0.0);
            s += c.form.s() * w;
            a += c.form.a() * w;
            v += psi[k] * c.form.v();
        }
        Ok((s, a, v))
    }

    /// `L(phi, t) = f_o(t) + sum_k phi_k f_k(t)`.
    pub fn lagrangian(&self, phi: &Multipliers, t: &CVector) -> Result<f64> {
        self.check_phi_len(phi)?;
        let mut val = self.objective.eval(t)?;
        for (k, c) in self.constraints.iter().enumerate() {
            val += phi.0[k] * c.form.eval(t)?;
        }
        Ok(val)
    }

    fn check_phi_len(&self, phi: &Multipliers) -> Result<()> {
        if phi.len() != self.constraints.len() {
            return Err(Error::DimensionMismatch {
                expected: self.constraints.len(),
                got: phi.len(),
            });
        }
        Ok(())
    }

    fn check_signs(&self, phi: &Multipliers) -> Result<()> {
        for (k, c) in self.constraints.iter().enumerate() {
            if c.kind == ConstraintKind::InequalityLE && phi.0[k] < -1e-12 {
                return Err(Error::InvalidInput(format!(
                    "inequality multiplier {k} is negative ({})",
                    phi.0[k]
                )));
            }
        }
        Ok(())
    }
}

fn compact_residual_normalized(lp: &LagrangianProblem, t: &CVector) -> Result<f64> {
    let c = lp.constraints.compact();
    let scale = c.violation_scale(t).max(1.0);
    Ok(c.form.eval(t)? / scale)
}

/// Finds the smallest lift `alpha >= 0` of the compact multiplier bringing
/// the Lagrangian maximizer back to the boundary of C. Bracket expansion by
/// doubling up to 2^60, then bisection.
pub fn lift_phi_dot(lp: &LagrangianProblem, phi: &Multipliers) -> Result<(f64, CVector)> {
    let (s_phi, a_phi, _) = lp.assemble(phi)?;
    let compact = lp.constraints.compact();
    let solve_at = |alpha: f64| -> Result<CVector> {
        let a = &a_phi + compact.form.a() * Complex::new(alpha, 0.0);
        let s = &s_phi + compact.form.s() * Complex::new(alpha, 0.0);
        let eig = HermitianEigen::new(&a)?;
        Ok(eig.pinv_solve(&s, PINV_CUTOFF_REL))
    };
    let g = |t: &CVector| compact_residual_normalized(lp, t);

    let t0 = solve_at(0.0)?;
    if g(&t0)? >= -TOL_FEAS {
        return Ok((0.0, t0));
    }

    let mut hi = 1.0f64;
    let mut lo = 0.0f64;
    let mut t_hi;
    loop {
        t_hi = solve_at(hi)?;
        if g(&t_hi)? >= 0.0 {
            break;
        }
        lo = hi;
        hi *= 2.0;
        if hi > (1u64 << 60) as f64 {
            return Err(Error::LiftBracketFailure);
        }
    }

    let mut alpha = hi;
    let mut t = t_hi;
    for _ in 0..128 {
        let mid = 0.5 * (lo + hi);
        let t_mid = solve_at(mid)?;
        let val = g(&t_mid)?;
        if val.abs() <= TOL_FEAS {
            return Ok((mid, t_mid));
        }
        if val < 0.0 {
            lo = mid;
        } else {
            hi = mid;
            alpha = mid;
            t = t_mid;
        }
        if hi - lo <= f64::EPSILON * hi.max(1.0) {
            break;
        }
    }
    // the bracket collapsed; the upper endpoint is feasible-side
    if g(&t)?.abs() <= 1e3 * TOL_FEAS {
        Ok((alpha, t))
    } else {
        Err(Error::LiftBracketFailure)
    }
}

/// Evaluates the dual function at `phi`, lifting the compact multiplier if
/// the unconstrained maximizer leaves C.
pub fn eval_dual(lp: &LagrangianProblem, phi: &Multipliers) -> Result<DualState> {
    lp.check_signs(phi)?;
    let (s_phi, a_phi, _) = lp.assemble(phi)?;
    let eig = HermitianEigen::new(&a_phi)?;
    let tol_eig = 1e-10 * eig.op_norm().max(1e-300);
    let lambda_min = eig.lambda_min() - lp.eps;
    if lambda_min < -tol_eig {
        return Err(Error::MultiplierOutsidePhiEps { lambda_min });
    }

    let t_hat = eig.pinv_solve(&s_phi, PINV_CUTOFF_REL);
    let (lift_alpha, t_star) = if compact_residual_normalized(lp, &t_hat)? >= -TOL_FEAS {
        (0.0, t_hat)
    } else {
        lift_phi_dot(lp, phi)?
    };

    let value = lp.lagrangian(phi, &t_star)?;
    let mut grad = Vec::with_capacity(lp.constraints.len());
    for c in lp.constraints.iter() {
        grad.push(c.form.eval(&t_star)?);
    }
    let boundary_tol = tol_eig.max(1e-6 * lp.eps);
    let status = if lift_alpha > 0.0 {
        grad[lp.constraints.compact_index()] = 0.0;
        DualStatus::Lifted
    } else if lambda_min <= boundary_tol {
        DualStatus::OnEpsBoundary
    } else {
        DualStatus::Interior
    };

    Ok(DualState {
        phi: phi.clone(),
        lift_alpha,
        t_star,
        value,
        grad,
        lambda_min,
        status,
    })
}

/// `dD/dphi_k = f_k(t_star)`; zero in the compact component of lifted
/// states.
pub fn dual_gradient(state: &DualState, lp: &LagrangianProblem) -> Result<Vec<f64>> {
    let mut grad = Vec::with_capacity(lp.constraints().len());
    for c in lp.constraints().iter() {
        grad.push(c.form.eval(&state.t_star)?);
    }
    if state.status == DualStatus::Lifted {
        grad[lp.constraints().compact_index()] = 0.0;
    }
    Ok(grad)
}

fn hessian_at(
    lp: &LagrangianProblem,
    phi: &Multipliers,
    lift_alpha: f64,
    t_star: &CVector,
) -> Result<DMatrix<f64>> {
    let (_, mut a_phi, _) = lp.assemble(phi)?;
    if lift_alpha > 0.0 {
        a_phi += lp.constraints().compact().form.a() * Complex::new(lift_alpha, 0.0);
    }
    let eig = HermitianEigen::new(&a_phi)?;
    let n = lp.constraints().len();
    let mut residuals: Vec<CVector> = Vec::with_capacity(n);
    let mut solved: Vec<CVector> = Vec::with_capacity(n);
    for c in lp.constraints().iter() {
        let r = c.form.s() - c.form.a() * t_star;
        solved.push(eig.pinv_solve(&r, PINV_CUTOFF_REL));
        residuals.push(r);
    }
    let mut h = DMatrix::<f64>::zeros(n, n);
    for k in 0..n {
        for j in k..n {
            let val = 2.0 * residuals[k].dotc(&solved[j]).re;
            h[(k, j)] = val;
            h[(j, k)] = val;
        }
    }
    Ok(h)
}

/// Exact dual Hessian `H_kj = 2 Re[(s_k - A_k t*)^dag A_phi^-1 (s_j - A_j t*)]`.
/// Only valid strictly inside Phi_eps at unlifted points.
pub fn dual_hessian(state: &DualState, lp: &LagrangianProblem) -> Result<DMatrix<f64>> {
    if state.status != DualStatus::Interior {
        return Err(Error::InvalidInput(
            "dual Hessian formula is not valid at lifted or boundary states".into(),
        ));
    }
    hessian_at(lp, &state.phi, 0.0, &state.t_star)
}

fn project_signs(lp: &LagrangianProblem, phi: &mut Multipliers) {
    for (k, c) in lp.constraints().iter().enumerate() {
        if c.kind == ConstraintKind::InequalityLE && phi.0[k] < 0.0 {
            phi.0[k] = 0.0;
        }
    }
}

/// Gradient with the components blocked by active sign constraints removed.
fn projected_gradient(lp: &LagrangianProblem, phi: &Multipliers, grad: &[f64]) -> Vec<f64> {
    let mut pg = grad.to_vec();
    for (k, c) in lp.constraints().iter().enumerate() {
        if c.kind == ConstraintKind::InequalityLE && phi.0[k] <= 0.0 && grad[k] > 0.0 {
            pg[k] = 0.0;
        }
    }
    pg
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Minimizes the dual over Phi_eps by damped Newton descent with Levenberg
/// regularization, falling back to gradient steps where the Hessian formula
/// is unreliable. Inequality multipliers are kept nonnegative by projection.
pub fn minimize_dual(lp: &LagrangianProblem, cfg: &SolverConfig) -> Result<DualState> {
    let mut phi = lp.initial_point().clone();
    let mut state = eval_dual(lp, &phi)?;
    let scale = lp.scale();
    let n = lp.constraints().len();
    let mut stall = 0usize;

    for _ in 0..cfg.max_iters {
        if state.value < -1e12 * scale || norm(&phi.0) > 1e12 {
            return Err(Error::CoercivityFailure);
        }
        let pg = projected_gradient(lp, &phi, &state.grad);
        if norm(&pg) <= cfg.grad_tol * scale {
            return Ok(state);
        }

        // Newton direction. At lifted points the interior formula with the
        // lifted quadratic part is used as an approximation; Levenberg
        // damping and the line search keep descent monotone either way.
        let use_newton = state.status != DualStatus::OnEpsBoundary;
        let h = if use_newton {
            hessian_at(lp, &phi, state.lift_alpha, &state.t_star).ok()
        } else {
            None
        };

        let mut accepted = false;
        let mut lambda_reg = 1e-10 * scale.max(1.0);
        'damping: for _ in 0..40 {
            let dir: Vec<f64> = match &h {
                Some(h) => {
                    let mut hreg = h.clone();
                    for i in 0..n {
                        hreg[(i, i)] += lambda_reg;
                    }
                    match hreg.cholesky() {
                        Some(ch) => {
                            let g = DVector::from_column_slice(&pg);
                            let d = ch.solve(&(-g));
                            d.iter().cloned().collect()
                        }
                        None => {
                            lambda_reg *= 10.0;
                            continue 'damping;
                        }
                    }
                }
                None => pg.iter().map(|x| -x).collect(),
            };

            // backtracking line search with feasibility acceptance
            let mut step = 1.0f64;
            for _ in 0..60 {
                let mut cand = phi.clone();
                for i in 0..n {
                    cand.0[i] += step * dir[i];
                }
                project_signs(lp, &mut cand);
                let d_eff: Vec<f64> = (0..n).map(|i| cand.0[i] - phi.0[i]).collect();
                let slope: f64 = d_eff.iter().zip(&pg).map(|(d, g)| d * g).sum();
                if slope >= 0.0 {
                    step *= 0.5;
                    continue;
                }
                match eval_dual(lp, &cand) {
                    Ok(next) if next.value <= state.value + 1e-4 * slope => {
                        let decrease = state.value - next.value;
                        phi = cand;
                        state = next;
                        accepted = true;
                        stall = if decrease <= 1e-13 * scale { stall + 1 } else { 0 };
                        break 'damping;
                    }
                    _ => step *= 0.5,
                }
            }
            lambda_reg *= 10.0;
        }

        if !accepted || stall >= 3 {
            // no strictly feasible descent step: terminal boundary case or
            // flat region at the stated tolerance
            return Ok(state);
        }
    }
    Err(Error::IterationLimit(cfg.max_iters))
}

/// Outcome of the sampled coercivity pre-check.
#[derive(Debug, Clone)]
pub enum CoercivityOutcome {
    Pass,
    /// A sampled unit multiplier direction along which the pure-constraint
    /// maximum over C stays at or below delta.
    FailDirection(Vec<f64>),
}

/// Maximum over C of a pure-constraint quadratic form (objective excluded),
/// evaluated with the same pseudo-inverse plus compact-lift machinery as the
/// dual.
pub fn max_over_c_pure(lp: &LagrangianProblem, psi: &[f64]) -> Result<f64> {
    let (s_psi, a_psi, v_psi) = lp.assemble_pure(psi)?;
    let compact = lp.constraints().compact();
    let eval_at = |t: &CVector| -> Result<f64> {
        let lin = 2.0 * t.dotc(&s_psi).re;
        let quad = t.dotc(&(&a_psi * t)).re;
        Ok(lin - quad + v_psi)
    };
    let solve_at = |alpha: f64| -> Result<CVector> {
        let a = &a_psi + compact.form.a() * Complex::new(alpha, 0.0);
        let s = &s_psi + compact.form.s() * Complex::new(alpha, 0.0);
        Ok(HermitianEigen::new(&a)?.pinv_solve(&s, PINV_CUTOFF_REL))
    };
    let t0 = solve_at(0.0)?;
    if compact_residual_normalized(lp, &t0)? >= -TOL_FEAS {
        return eval_at(&t0);
    }
    // lift along the compact direction until the maximizer returns to C
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    loop {
        let t = solve_at(hi)?;
        if compact_residual_normalized(lp, &t)? >= 0.0 {
            break;
        }
        lo = hi;
        hi *= 2.0;
        if hi > (1u64 << 60) as f64 {
            return Err(Error::LiftBracketFailure);
        }
    }
    let mut t_best = solve_at(hi)?;
    for _ in 0..128 {
        let mid = 0.5 * (lo + hi);
        let t = solve_at(mid)?;
        let val = compact_residual_normalized(lp, &t)?;
        if val.abs() <= TOL_FEAS {
            t_best = t;
            break;
        }
        if val < 0.0 {
            lo = mid;
        } else {
            hi = mid;
            t_best = t;
        }
    }
    eval_at(&t_best)
}

/// Samples unit directions psi in the nonnegative-definite cone of the
/// constraint set (Gaussian draws shifted toward the compact direction) and
/// checks that the pure-constraint maximum over C stays above delta on each.
pub fn coercivity_check(
    lp: &LagrangianProblem,
    delta: f64,
    n_samples: usize,
    seed: u64,
) -> Result<CoercivityOutcome> {
    let n = lp.constraints().len();
    let compact_idx = lp.constraints().compact_index();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let cone_ok = |v: &[f64]| -> Result<bool> {
        let (_, a, _) = lp.assemble_pure(v)?;
        let eig = HermitianEigen::new(&a)?;
        Ok(eig.lambda_min() >= -1e-12 * eig.op_norm().max(1e-300))
    };
    // shift toward e_dot by the smallest amount making the quadratic part
    // PSD (relaxed cone test); bisection on the blend weight
    let into_cone = |mut psi: Vec<f64>| -> Result<Vec<f64>> {
        let blend = |beta: f64, v: &[f64]| -> Vec<f64> {
            let mut out: Vec<f64> = v.iter().map(|x| x * (1.0 - beta)).collect();
            out[compact_idx] += beta;
            let nn = norm(&out);
            out.iter().map(|x| x / nn).collect()
        };
        if !cone_ok(&psi)? {
            let (mut lo, mut hi) = (0.0f64, 1.0f64);
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                if cone_ok(&blend(mid, &psi))? {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            psi = blend(hi, &psi);
        }
        Ok(psi)
    };

    // deterministic probes first: coordinate directions and pair
    // combinations, which expose sign-degenerate constraint families
    let mut probes: Vec<Vec<f64>> = Vec::new();
    for k in 0..n {
        let mut e = vec![0.0; n];
        e[k] = 1.0;
        probes.push(e);
    }
    for k in 0..n {
        for j in (k + 1)..n {
            for sign in [1.0, -1.0] {
                let mut e = vec![0.0; n];
                e[k] = std::f64::consts::FRAC_1_SQRT_2;
                e[j] = sign * std::f64::consts::FRAC_1_SQRT_2;
                probes.push(e);
            }
        }
    }
    for _ in 0..n_samples {
        let psi: Vec<f64> = (0..n)
            .map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal))
            .collect();
        let nn = norm(&psi);
        if nn == 0.0 {
            continue;
        }
        probes.push(psi.iter().map(|x| x / nn).collect());
    }

    for psi in probes {
        let psi = into_cone(psi)?;
        let value = max_over_c_pure(lp, &psi)?;
        if value <= delta {
            return Ok(CoercivityOutcome::FailDirection(psi));
        }
    }
    Ok(CoercivityOutcome::Pass)
}


/// Continues dual minimization from a caller-supplied starting point.
pub fn minimize_from(
    lp: &LagrangianProblem,
    start: Multipliers,
    cfg: &SolverConfig,
) -> Result<DualState> {
    let mut inner = lp.clone();
    inner.phi0 = start;
    minimize_dual(&inner, cfg)
}
