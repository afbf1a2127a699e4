//! Toy scattering instances: a damped discrete wave kernel standing in for a
//! background Green's function, a single-valued block potential, and the
//! exact physics of every binary design.

use nalgebra::DVector;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::{
    self, C64, CMatrix, CVector, HermitianEigen,
};

/// Hard cap on design enumeration (2^J designs).
pub const ENUMERATION_CAP: usize = 20;

/// Conditioning guard for design solves.
const COND_GUARD: f64 = 1e14;

/// Disjoint index blocks covering `0..dim`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DesignPartition {
    blocks: Vec<Vec<usize>>,
    dim: usize,
}

impl DesignPartition {
    pub fn new(blocks: Vec<Vec<usize>>, dim: usize) -> Result<Self> {
        let mut seen = vec![false; dim];
        for block in &blocks {
            for &i in block {
                if i >= dim {
                    return Err(Error::InvalidInput(format!(
                        "partition index {i} out of range (dim {dim})"
                    )));
                }
                if seen[i] {
                    return Err(Error::InvalidInput(format!(
                        "partition blocks overlap at index {i}"
                    )));
                }
                seen[i] = true;
            }
        }
        if seen.iter().any(|&s| !s) {
            return Err(Error::InvalidInput(
                "partition blocks do not cover the index range".into(),
            ));
        }
        Ok(Self { blocks, dim })
    }

    /// `J` contiguous blocks of equal length.
    pub fn contiguous(dim: usize, j: usize) -> Result<Self> {
        if j == 0 || dim % j != 0 {
            return Err(Error::InvalidInput(format!(
                "dim {dim} not divisible into {j} contiguous blocks"
            )));
        }
        let w = dim / j;
        let blocks = (0..j).map(|b| (b * w..(b + 1) * w).collect()).collect();
        Self::new(blocks, dim)
    }

    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn block(&self, j: usize) -> &[usize] {
        &self.blocks[j]
    }

    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.blocks
    }

    /// The projector onto block `j`, as a complex matrix.
    pub fn block_projector(&self, j: usize) -> CMatrix {
        let mut m = linalg::zeros(self.dim);
        for &i in &self.blocks[j] {
            m[(i, i)] = C64::new(1.0, 0.0);
        }
        m
    }

    /// Block label of each index, for block-diagonality checks.
    fn block_of(&self) -> Vec<usize> {
        let mut label = vec![0usize; self.dim];
        for (j, block) in self.blocks.iter().enumerate() {
            for &i in block {
                label[i] = j;
            }
        }
        label
    }

    /// Frobenius mass of the entries of `m` that mix distinct blocks,
    /// relative to the norm of `m`.
    pub fn off_block_mass(&self, m: &CMatrix) -> f64 {
        let label = self.block_of();
        let mut off = 0.0;
        for i in 0..self.dim {
            for k in 0..self.dim {
                if label[i] != label[k] {
                    off += m[(i, k)].norm_sqr();
                }
            }
        }
        off.sqrt() / m.norm().max(1e-300)
    }
}

/// A binary design: which partition blocks carry the potential.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Design {
    rho: Vec<bool>,
}

impl Design {
    pub fn new(rho: Vec<bool>) -> Self {
        Self { rho }
    }

    pub fn all_off(j: usize) -> Self {
        Self {
            rho: vec![false; j],
        }
    }

    pub fn all_on(j: usize) -> Self {
        Self { rho: vec![true; j] }
    }

    pub fn len(&self) -> usize {
        self.rho.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rho.is_empty()
    }

    pub fn bits(&self) -> &[bool] {
        &self.rho
    }

    pub fn is_active(&self, j: usize) -> bool {
        self.rho[j]
    }
}

/// Background operators for a design `b`: the split `V = Vb + Vc` and the
/// (inverse) wave operators `Wb^-1 = I - Vb G`, `Wc^-1 = I - Vc G`.
pub struct BackgroundOperators {
    pub vb: CMatrix,
    pub vc: CMatrix,
    pub wb_inv: CMatrix,
    pub wc_inv: CMatrix,
}

/// A toy scattering problem: Green's function `G`, all-on potential `V` (and
/// its inverse on its support), design partition, incident field `s`, and
/// the passivity margin `eps`.
#[derive(Debug, Clone)]
pub struct ScatteringProblem {
    g: CMatrix,
    v: CMatrix,
    vinv: CMatrix,
    partition: DesignPartition,
    s: CVector,
    eps_passivity: f64,
    seed: u64,
}

impl ScatteringProblem {
    /// Validates invariants and constructs. `v` and `vinv` must be
    /// block-diagonal inverses of each other on their support.
    pub fn new(
        g: CMatrix,
        v: CMatrix,
        vinv: CMatrix,
        partition: DesignPartition,
        s: CVector,
        eps_passivity: f64,
        seed: u64,
    ) -> Result<Self> {
        let dim = partition.dim();
        if g.nrows() != dim || v.nrows() != dim || vinv.nrows() != dim || s.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: g.nrows(),
            });
        }
        if eps_passivity <= 0.0 {
            return Err(Error::PassivityViolation {
                lambda_min: eps_passivity,
            });
        }
        if partition.off_block_mass(&v) > 1e-12 {
            return Err(Error::NotBlockDiagonal {
                mass: partition.off_block_mass(&v),
            });
        }
        let p = Self {
            g,
            v,
            vinv,
            partition,
            s,
            eps_passivity,
            seed,
        };
        p.validate_passivity()?;
        Ok(p)
    }

    /// Checks the two passivity invariants: per-block `i D_j^s > eps` and
    /// globally `(iU)^h > eps` for `U = V^-1 - G`.
    fn validate_passivity(&self) -> Result<()> {
        for j in 0..self.partition.num_blocks() {
            let idx = self.partition.block(j);
            let dj = self.vinv.select_rows(idx).select_columns(idx);
            let (_, skew) = linalg::hermitian_split(&dj)?;
            let i_skew = skew * C64::new(0.0, 1.0);
            let lam = HermitianEigen::new(&i_skew)?.lambda_min();
            if lam <= self.eps_passivity {
                return Err(Error::PassivityViolation { lambda_min: lam });
            }
        }
        let u = &self.vinv - &self.g;
        let (_, us) = linalg::hermitian_split(&u)?;
        let iu_h = us * C64::new(0.0, 1.0);
        let lam = HermitianEigen::new(&iu_h)?.lambda_min();
        if lam <= self.eps_passivity {
            return Err(Error::PassivityViolation { lambda_min: lam });
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.partition.dim()
    }

    pub fn num_blocks(&self) -> usize {
        self.partition.num_blocks()
    }

    pub fn green(&self) -> &CMatrix {
        &self.g
    }

    pub fn potential(&self) -> &CMatrix {
        &self.v
    }

    pub fn potential_inverse(&self) -> &CMatrix {
        &self.vinv
    }

    pub fn partition(&self) -> &DesignPartition {
        &self.partition
    }

    pub fn incident(&self) -> &CVector {
        &self.s
    }

    pub fn eps_passivity(&self) -> f64 {
        self.eps_passivity
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// `U = V^-1 - G`, re-verifying the passivity margin.
    pub fn build_u(&self) -> Result<CMatrix> {
        let u = &self.vinv - &self.g;
        let (_, us) = linalg::hermitian_split(&u)?;
        let iu_h = us * C64::new(0.0, 1.0);
        let lam = HermitianEigen::new(&iu_h)?.lambda_min();
        if lam <= self.eps_passivity {
            return Err(Error::PassivityViolation { lambda_min: lam });
        }
        Ok(u)
    }

    /// Indices where the design carries the potential.
    pub fn active_indices(&self, rho: &Design) -> Result<Vec<usize>> {
        if rho.len() != self.num_blocks() {
            return Err(Error::DimensionMismatch {
                expected: self.num_blocks(),
                got: rho.len(),
            });
        }
        let mut idx = Vec::new();
        for j in 0..self.num_blocks() {
            if rho.is_active(j) {
                idx.extend_from_slice(self.partition.block(j));
            }
        }
        Ok(idx)
    }

    /// Exact polarization current of a binary design: zero outside the
    /// active blocks, and on the active index set `r` the solution of
    /// `(V^-1 - G)|_rr t_r = s_r`.
    pub fn solve_design(&self, rho: &Design) -> Result<CVector> {
        let idx = self.active_indices(rho)?;
        let mut t = CVector::zeros(self.dim());
        if idx.is_empty() {
            return Ok(t);
        }
        let u = &self.vinv - &self.g;
        let urr = u.select_rows(&idx).select_columns(&idx);
        let sr = DVector::from_iterator(idx.len(), idx.iter().map(|&i| self.s[i]));

        let sv = urr.clone().singular_values();
        let smax = sv.max();
        let smin = sv.min();
        if smin <= 0.0 || smax / smin > COND_GUARD {
            return Err(Error::SingularOperator {
                cond: if smin > 0.0 { smax / smin } else { f64::INFINITY },
            });
        }
        let tr = urr
            .clone()
            .lu()
            .solve(&sr)
            .ok_or(Error::SingularOperator { cond: f64::INFINITY })?;
        if (&urr * &tr - &sr).norm() > 1e-10 * sr.norm().max(1e-300) {
            return Err(Error::SingularOperator {
                cond: smax / smin,
            });
        }
        for (k, &i) in idx.iter().enumerate() {
            t[i] = tr[k];
        }
        Ok(t)
    }

    /// Iterates all `2^J` designs with their exact solutions, lexicographic
    /// in the design bits (all-off first).
    pub fn enumerate_designs(
        &self,
    ) -> Result<impl Iterator<Item = Result<(Design, CVector)>> + '_> {
        let j = self.num_blocks();
        if j > ENUMERATION_CAP {
            return Err(Error::DesignCapExceeded { j });
        }
        let total: u64 = 1 << j;
        Ok((0..total).map(move |m| {
            let rho = Design::new((0..j).map(|b| (m >> (j - 1 - b)) & 1 == 1).collect());
            let t = self.solve_design(&rho)?;
            Ok((rho, t))
        }))
    }

    /// Splits the potential along a background design and forms the inverse
    /// wave operators: `Vb` carries `V` on the active blocks of `b`, `Vc` on
    /// the rest, `Wb^-1 = I - Vb G`, `Wc^-1 = I - Vc G`.
    pub fn background_operators(&self, b: &Design) -> Result<BackgroundOperators> {
        let idx = self.active_indices(b)?;
        let mut vb = linalg::zeros(self.dim());
        for &i in &idx {
            for &k in &idx {
                vb[(i, k)] = self.v[(i, k)];
            }
        }
        let vc = &self.v - &vb;
        let eye = linalg::identity(self.dim());
        let wb_inv = &eye - &vb * &self.g;
        let wc_inv = &eye - &vc * &self.g;
        Ok(BackgroundOperators {
            vb,
            vc,
            wb_inv,
            wc_inv,
        })
    }
}

/// Builds a deterministic toy problem: `G = c K + i g K^2` with `K` a random
/// symmetric tridiagonal coupling matrix, potential `v = 1 + i loss` per
/// block, and a normalized random incident field.
pub fn build_toy_problem(
    dim: usize,
    j: usize,
    loss: f64,
    coupling: f64,
    seed: u64,
) -> Result<ScatteringProblem> {
    if dim == 0 {
        return Err(Error::InvalidInput("dim must be positive".into()));
    }
    if loss <= 0.0 {
        return Err(Error::PassivityViolation { lambda_min: loss });
    }
    let partition = DesignPartition::contiguous(dim, j)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut k = linalg::zeros(dim);
    for i in 0..dim {
        k[(i, i)] = C64::new(rng.random_range(-0.5..0.5), 0.0);
    }
    for i in 0..dim.saturating_sub(1) {
        let o = rng.random_range(0.25..0.75);
        k[(i, i + 1)] = C64::new(o, 0.0);
        k[(i + 1, i)] = C64::new(o, 0.0);
    }
    let gamma = 0.1;
    let g = k.clone() * C64::new(coupling, 0.0) + (&k * &k) * C64::new(0.0, gamma);

    let v_scalar = C64::new(1.0, loss);
    let v = linalg::identity(dim) * v_scalar;
    let vinv = linalg::identity(dim) * v_scalar.inv();

    let mut s = CVector::from_fn(dim, |_, _| {
        C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
    });
    let n = s.norm();
    if n > 0.0 {
        s /= C64::new(n, 0.0);
    }

    // i D^s for the scalar-per-block potential is (loss / |v|^2) I; half of
    // that leaves a strict margin for both passivity invariants.
    let eps = 0.5 * loss / v_scalar.norm_sqr();

    ScatteringProblem::new(g, v, vinv, partition, s, eps, seed)
}
