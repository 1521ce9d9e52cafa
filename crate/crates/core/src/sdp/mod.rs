//! Small dense cone programs: linear objective, linear equalities and
//! inequalities, and affine positive-semidefinite blocks.
//!
//! Programs are built variable-by-variable through affine expressions and
//! solved by a primal-dual interior-point method ([`solver`]). The epigraph
//! builder [`ConeProgram::add_matrix_fractional_epigraph`] turns a
//! matrix-fractional objective `p^T D^{-1} p + q` into a Schur-complement
//! PSD block, which is how the certificate programs enter the solver.

mod solver;

pub use solver::{solve, solve_with, SolverOptions};

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::linalg::symmetrize;

/// Affine scalar expression `constant + sum coeff_i * x_i`.
#[derive(Debug, Clone, Default)]
pub struct AffineScalar {
    pub constant: f64,
    pub terms: Vec<(usize, f64)>,
}

impl AffineScalar {
    pub fn constant(c: f64) -> Self {
        Self { constant: c, terms: Vec::new() }
    }

    pub fn var(idx: usize) -> Self {
        Self { constant: 0.0, terms: vec![(idx, 1.0)] }
    }

    pub fn term(idx: usize, coeff: f64) -> Self {
        Self { constant: 0.0, terms: vec![(idx, coeff)] }
    }

    pub fn push(&mut self, idx: usize, coeff: f64) -> &mut Self {
        if coeff != 0.0 {
            self.terms.push((idx, coeff));
        }
        self
    }

    pub fn eval(&self, x: &DVector<f64>) -> f64 {
        self.constant + self.terms.iter().map(|&(i, c)| c * x[i]).sum::<f64>()
    }

    /// Merge duplicate variable indices (keeps rows compact).
    fn compress(&mut self) {
        self.terms.sort_by_key(|&(i, _)| i);
        let mut out: Vec<(usize, f64)> = Vec::with_capacity(self.terms.len());
        for &(i, c) in &self.terms {
            match out.last_mut() {
                Some(last) if last.0 == i => last.1 += c,
                _ => out.push((i, c)),
            }
        }
        out.retain(|&(_, c)| c != 0.0);
        self.terms = out;
    }
}

/// Affine vector expression `constant + sum x_i * coeff_i`.
#[derive(Debug, Clone)]
pub struct AffineVec {
    pub dim: usize,
    pub constant: DVector<f64>,
    pub terms: Vec<(usize, DVector<f64>)>,
}

impl AffineVec {
    pub fn zero(dim: usize) -> Self {
        Self { dim, constant: DVector::zeros(dim), terms: Vec::new() }
    }

    pub fn push(&mut self, idx: usize, coeff: DVector<f64>) -> &mut Self {
        assert_eq!(coeff.len(), self.dim, "affine vector term dimension mismatch");
        self.terms.push((idx, coeff));
        self
    }

    pub fn eval(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut v = self.constant.clone();
        for (i, c) in &self.terms {
            v += c * x[*i];
        }
        v
    }
}

/// Affine symmetric-matrix expression `constant + sum x_i * coeff_i`.
#[derive(Debug, Clone)]
pub struct AffineSym {
    pub dim: usize,
    pub constant: DMatrix<f64>,
    pub terms: Vec<(usize, DMatrix<f64>)>,
}

impl AffineSym {
    pub fn zero(dim: usize) -> Self {
        Self { dim, constant: DMatrix::zeros(dim, dim), terms: Vec::new() }
    }

    pub fn identity_times(dim: usize, idx: usize) -> Self {
        let mut s = Self::zero(dim);
        s.push(idx, DMatrix::identity(dim, dim));
        s
    }

    pub fn push(&mut self, idx: usize, coeff: DMatrix<f64>) -> &mut Self {
        assert_eq!(coeff.nrows(), self.dim, "affine matrix term dimension mismatch");
        assert_eq!(coeff.ncols(), self.dim, "affine matrix term dimension mismatch");
        self.terms.push((idx, symmetrize(&coeff)));
        self
    }

    pub fn eval(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let mut m = self.constant.clone();
        for (i, c) in &self.terms {
            m += c * x[*i];
        }
        m
    }

    fn compress(&mut self) {
        self.terms.sort_by_key(|&(i, _)| i);
        let mut out: Vec<(usize, DMatrix<f64>)> = Vec::with_capacity(self.terms.len());
        for (i, c) in self.terms.drain(..) {
            match out.last_mut() {
                Some(last) if last.0 == i => last.1 += c,
                _ => out.push((i, c)),
            }
        }
        out.retain(|(_, c)| c.amax() != 0.0);
        self.terms = out;
    }
}

/// Solver exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Optimal,
    Infeasible,
    Unbounded,
    MaxIter,
}

/// Output of [`solve`].
#[derive(Debug, Clone)]
pub struct Solution {
    pub x: DVector<f64>,
    pub objective_value: f64,
    pub status: Status,
    /// Absolute primal-dual gap estimate at exit.
    pub gap: f64,
    pub iterations: usize,
}

/// A cone program: minimize `c^T x` subject to affine equalities (`= 0`),
/// affine inequalities (`>= 0`), and affine symmetric blocks (`>= 0` in the
/// PSD order).
#[derive(Debug, Clone, Default)]
pub struct ConeProgram {
    num_vars: usize,
    objective: Vec<f64>,
    pub psd_blocks: Vec<AffineSym>,
    pub eq_constraints: Vec<AffineScalar>,
    pub ineq_constraints: Vec<AffineScalar>,
    /// Optional elimination hint: disjoint variable groups whose cone rows
    /// touch only that group plus ungrouped ("core") variables. The KKT
    /// solver then factors a block-arrow system instead of a dense one.
    pub elimination_groups: Vec<Vec<usize>>,
}

impl ConeProgram {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    pub fn add_var(&mut self) -> usize {
        self.objective.push(0.0);
        self.num_vars += 1;
        self.num_vars - 1
    }

    pub fn add_vars(&mut self, count: usize) -> std::ops::Range<usize> {
        let start = self.num_vars;
        for _ in 0..count {
            self.add_var();
        }
        start..self.num_vars
    }

    pub fn add_objective(&mut self, idx: usize, coeff: f64) {
        self.objective[idx] += coeff;
    }

    pub fn add_objective_expr(&mut self, expr: &AffineScalar) -> f64 {
        for &(i, c) in &expr.terms {
            self.add_objective(i, c);
        }
        expr.constant
    }

    pub fn objective_vector(&self) -> DVector<f64> {
        DVector::from_vec(self.objective.clone())
    }

    pub fn add_eq(&mut self, mut row: AffineScalar) {
        row.compress();
        self.eq_constraints.push(row);
    }

    pub fn add_ineq(&mut self, mut row: AffineScalar) {
        row.compress();
        self.ineq_constraints.push(row);
    }

    /// `x_idx >= 0`.
    pub fn add_nonneg(&mut self, idx: usize) {
        self.add_ineq(AffineScalar::var(idx));
    }

    pub fn add_psd_block(&mut self, mut block: AffineSym) {
        block.compress();
        self.psd_blocks.push(block);
    }

    /// Epigraph of a matrix-fractional objective: introduces a scalar `t`,
    /// adds the block `[[D, p], [p^T, t - q]] >= 0` and `t` to the objective.
    ///
    /// At any feasible point with `D > 0` the minimal `t` equals
    /// `p^T D^{-1} p + q`; for singular `D` with `p` in `range(D)` the
    /// pseudoinverse takes over.
    pub fn add_matrix_fractional_epigraph(
        &mut self,
        p: &AffineVec,
        d: &AffineSym,
        q: &AffineScalar,
    ) -> usize {
        assert_eq!(p.dim, d.dim, "matrix-fractional epigraph: p and D dimensions differ");
        let k = d.dim + 1;
        let t = self.add_var();
        self.add_objective(t, 1.0);

        let mut block = AffineSym::zero(k);
        let mut constant = DMatrix::zeros(k, k);
        constant.view_mut((0, 0), (d.dim, d.dim)).copy_from(&d.constant);
        for i in 0..d.dim {
            constant[(i, d.dim)] = p.constant[i];
            constant[(d.dim, i)] = p.constant[i];
        }
        constant[(d.dim, d.dim)] = -q.constant;
        block.constant = constant;

        for (idx, m) in &d.terms {
            let mut term = DMatrix::zeros(k, k);
            term.view_mut((0, 0), (d.dim, d.dim)).copy_from(m);
            block.push(*idx, term);
        }
        for (idx, v) in &p.terms {
            let mut term = DMatrix::zeros(k, k);
            for i in 0..d.dim {
                term[(i, d.dim)] = v[i];
                term[(d.dim, i)] = v[i];
            }
            block.push(*idx, term);
        }
        for &(idx, c) in &q.terms {
            let mut term = DMatrix::zeros(k, k);
            term[(d.dim, d.dim)] = -c;
            block.push(idx, term);
        }
        let mut t_term = DMatrix::zeros(k, k);
        t_term[(d.dim, d.dim)] = 1.0;
        block.push(t, t_term);

        self.add_psd_block(block);
        t
    }

    /// Plain-text sparse dump for cross-checking against external solvers.
    ///
    /// One line per nonzero: `block row col var coeff`, where `var` is `-1`
    /// for constant terms. Blocks are `obj`, `eq{k}`, `ineq{k}`, `psd{k}`.
    pub fn dump_sparse(&self) -> String {
        use std::fmt::Write as _;
        let mut out = String::new();
        for (i, c) in self.objective.iter().enumerate() {
            if *c != 0.0 {
                writeln!(out, "obj 0 0 {i} {c:.17e}").unwrap();
            }
        }
        let scalar_rows = |out: &mut String, name: &str, rows: &[AffineScalar]| {
            for (k, row) in rows.iter().enumerate() {
                if row.constant != 0.0 {
                    writeln!(out, "{name}{k} 0 0 -1 {:.17e}", row.constant).unwrap();
                }
                for &(v, c) in &row.terms {
                    writeln!(out, "{name}{k} 0 0 {v} {c:.17e}").unwrap();
                }
            }
        };
        scalar_rows(&mut out, "eq", &self.eq_constraints);
        scalar_rows(&mut out, "ineq", &self.ineq_constraints);
        for (k, block) in self.psd_blocks.iter().enumerate() {
            for r in 0..block.dim {
                for c in 0..=r {
                    if block.constant[(r, c)] != 0.0 {
                        writeln!(out, "psd{k} {r} {c} -1 {:.17e}", block.constant[(r, c)]).unwrap();
                    }
                }
            }
            for (v, m) in &block.terms {
                for r in 0..block.dim {
                    for c in 0..=r {
                        if m[(r, c)] != 0.0 {
                            writeln!(out, "psd{k} {r} {c} {v} {:.17e}", m[(r, c)]).unwrap();
                        }
                    }
                }
            }
        }
        out
    }

    /// Feasibility check of a candidate point against all constraints.
    pub fn max_violation(&self, x: &DVector<f64>) -> f64 {
        let mut worst = 0.0_f64;
        for row in &self.eq_constraints {
            worst = worst.max(row.eval(x).abs());
        }
        for row in &self.ineq_constraints {
            worst = worst.max(-row.eval(x));
        }
        for block in &self.psd_blocks {
            worst = worst.max(-crate::linalg::min_eig(&block.eval(x)));
        }
        worst
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn epigraph_block_shape() {
        let mut prog = ConeProgram::new();
        let v = prog.add_var();
        let mut p = AffineVec::zero(2);
        p.constant = DVector::from_vec(vec![3.0, 4.0]);
        let mut d = AffineSym::zero(2);
        d.constant = DMatrix::identity(2, 2);
        let mut q = AffineScalar::constant(0.0);
        q.push(v, 1.0);
        let t = prog.add_matrix_fractional_epigraph(&p, &d, &q);
        assert_eq!(prog.num_vars(), 2);
        assert_eq!(prog.psd_blocks.len(), 1);
        assert_eq!(prog.psd_blocks[0].dim, 3);
        // At x = (q_v, t): the block corner is t - q_v.
        let x = DVector::from_vec(vec![2.0, 30.0]);
        let m = prog.psd_blocks[0].eval(&x);
        assert_eq!(m[(2, 2)], 28.0);
        assert_eq!(m[(0, 2)], 3.0);
        assert_eq!(t, 1);
    }

    #[test]
    fn dump_lists_every_nonzero() {
        let mut prog = ConeProgram::new();
        let x = prog.add_var();
        prog.add_objective(x, 1.0);
        let mut row = AffineScalar::constant(-1.0);
        row.push(x, 1.0);
        prog.add_ineq(row);
        let dump = prog.dump_sparse();
        assert!(dump.contains("obj 0 0 0"));
        assert!(dump.contains("ineq0 0 0 -1"));
        assert!(dump.contains("ineq0 0 0 0"));
    }
}
