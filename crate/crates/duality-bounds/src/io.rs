//! JSON file formats: problems, constraint sets, solver configs, and the
//! report types emitted by the pipeline. All floats round-trip bit-exactly
//! through the serializer (shortest-representation encoding), which makes
//! reruns byte-identical for diffing.

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::constraints::{Constraint, ConstraintKind, ConstraintSet};
use crate::dual::DualStatus;
use crate::error::{Error, Result};
use crate::linalg::{CMatrix, CVector, QuadraticForm, C64};
use crate::refine::{Certificate, RefinementTrace};
use crate::scattering::{DesignPartition, ScatteringProblem};
use crate::verify::{FdReport, Lemma3Report, Lemma4Report, MinimaxReport};

fn matrix_to_rows(m: &CMatrix) -> Vec<Vec<[f64; 2]>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| [m[(i, j)].re, m[(i, j)].im]).collect())
        .collect()
}

fn matrix_from_rows(rows: &[Vec<[f64; 2]>]) -> Result<CMatrix> {
    let n = rows.len();
    if rows.iter().any(|r| r.len() != n) {
        return Err(Error::InvalidInput("matrix rows are not square".into()));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| {
        C64::new(rows[i][j][0], rows[i][j][1])
    }))
}

fn vector_to_pairs(v: &CVector) -> Vec<[f64; 2]> {
    v.iter().map(|z| [z.re, z.im]).collect()
}

fn vector_from_pairs(pairs: &[[f64; 2]]) -> CVector {
    CVector::from_iterator(pairs.len(), pairs.iter().map(|p| C64::new(p[0], p[1])))
}

/// On-disk form of a scattering problem.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProblemFile {
    pub dim: usize,
    pub blocks: Vec<Vec<usize>>,
    pub green: Vec<Vec<[f64; 2]>>,
    pub potential: Vec<Vec<[f64; 2]>>,
    pub incident: Vec<[f64; 2]>,
    pub eps_passivity: f64,
    pub seed: u64,
}

impl ProblemFile {
    pub fn from_problem(p: &ScatteringProblem) -> Self {
        Self {
            dim: p.dim(),
            blocks: p.partition().blocks().to_vec(),
            green: matrix_to_rows(p.green()),
            potential: matrix_to_rows(p.potential()),
            incident: vector_to_pairs(p.incident()),
            eps_passivity: p.eps_passivity(),
            seed: p.seed(),
        }
    }

    /// Rebuilds and revalidates the problem; the potential inverse is
    /// recomputed.
    pub fn into_problem(&self) -> Result<ScatteringProblem> {
        let g = matrix_from_rows(&self.green)?;
        let v = matrix_from_rows(&self.potential)?;
        if g.nrows() != self.dim || self.incident.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: g.nrows(),
            });
        }
        let vinv = v.clone().try_inverse().ok_or(Error::SingularOperator {
            cond: f64::INFINITY,
        })?;
        let partition = DesignPartition::new(self.blocks.clone(), self.dim)?;
        let s = vector_from_pairs(&self.incident);
        ScatteringProblem::new(g, v, vinv, partition, s, self.eps_passivity, self.seed)
    }
}

/// On-disk form of one constraint.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConstraintFile {
    pub label: String,
    pub kind: ConstraintKind,
    pub s: Vec<[f64; 2]>,
    pub a: Vec<Vec<[f64; 2]>>,
    pub v: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConstraintSetFile {
    pub constraints: Vec<ConstraintFile>,
    pub compact_index: usize,
    pub eps_passivity: f64,
}

impl ConstraintSetFile {
    pub fn from_set(cs: &ConstraintSet, eps_passivity: f64) -> Self {
        Self {
            constraints: cs
                .iter()
                .map(|c| ConstraintFile {
                    label: c.label.clone(),
                    kind: c.kind,
                    s: vector_to_pairs(c.form.s()),
                    a: matrix_to_rows(c.form.a()),
                    v: c.form.v(),
                })
                .collect(),
            compact_index: cs.compact_index(),
            eps_passivity,
        }
    }

    pub fn into_set(&self) -> Result<ConstraintSet> {
        let mut out = Vec::with_capacity(self.constraints.len());
        for c in &self.constraints {
            let form = QuadraticForm::new(vector_from_pairs(&c.s), matrix_from_rows(&c.a)?, c.v)?;
            out.push(Constraint {
                form,
                kind: c.kind,
                label: c.label.clone(),
            });
        }
        ConstraintSet::new(out, self.compact_index, self.eps_passivity)
    }
}

/// Solve report persisted by the pipeline. `wall_ms` is excluded from
/// determinism comparisons.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundReport {
    pub dual_value: f64,
    pub status: String,
    pub grad_norm: f64,
    pub lift_alpha: f64,
    pub lambda_min: f64,
    pub phi: Vec<f64>,
    pub certificate: serde_json::Value,
    pub oracle_value: Option<f64>,
    pub oracle_design: Option<Vec<bool>>,
    pub scale: f64,
    pub wall_ms: f64,
}

pub fn status_name(s: DualStatus) -> &'static str {
    match s {
        DualStatus::Interior => "interior",
        DualStatus::OnEpsBoundary => "on-eps-boundary",
        DualStatus::Lifted => "lifted",
    }
}

/// Aggregate verification report.
#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub constraint_validity: Option<crate::constraints::ValidationReport>,
    pub fd: Option<FdReport>,
    pub weak_duality_pass: Option<bool>,
    pub lemma3: Option<Lemma3Report>,
    pub lemma4: Option<Lemma4Report>,
    pub minimax: Option<MinimaxReport>,
    pub pass: bool,
}

pub fn save_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

pub fn load_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

pub fn certificate_to_value(c: &Certificate) -> Result<serde_json::Value> {
    Ok(serde_json::to_value(c)?)
}

pub fn trace_to_value(t: &RefinementTrace) -> Result<serde_json::Value> {
    Ok(serde_json::to_value(t)?)
}
