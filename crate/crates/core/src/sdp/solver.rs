//! Primal-dual interior-point method for the cone programs of this crate.
//!
//! Standard form: minimize `c^T x` subject to `eq(x) = 0` and slacks
//! `s = affine(x)` in the cone (nonnegative orthant per inequality row,
//! PSD cone per matrix block). Nesterov-Todd scaling on PSD blocks,
//! Mehrotra predictor-corrector steps, dense factorizations. Problem data
//! is Ruiz-equilibrated before iterating.
//!
//! The KKT system `H = L^T W^{-2} L` is factored densely by default; when
//! the program carries `elimination_groups` (disjoint variable groups whose
//! cone rows touch only that group plus core variables) a block-arrow
//! factorization is used instead, which is what makes the N-sample
//! classification certificates cheap.

use nalgebra::{DMatrix, DVector};

use super::{AffineScalar, AffineSym, ConeProgram, Solution, Status};
use crate::linalg::symmetrize;
use crate::Error;

/// Interior-point options. `feas_tol` and `max_iter` defaults follow the
/// accuracy needed by the downstream certificate comparisons.
#[derive(Debug, Clone)]
pub struct SolverOptions {
    pub feas_tol: f64,
    pub gap_tol: f64,
    pub max_iter: usize,
    /// Print per-iteration residuals to stderr.
    pub trace: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { feas_tol: 1e-7, gap_tol: 1e-6, max_iter: 200, trace: false }
    }
}

/// Solve a cone program to duality-gap tolerance `tol`.
pub fn solve(program: &ConeProgram, tol: f64) -> crate::Result<Solution> {
    solve_with(program, &SolverOptions { gap_tol: tol, ..Default::default() })
}

pub fn solve_with(program: &ConeProgram, opts: &SolverOptions) -> crate::Result<Solution> {
    Ipm::new(program, opts.clone())?.run()
}

/// A point in the product cone (nonnegative scalars + PSD blocks).
#[derive(Clone)]
struct ConePoint {
    lin: DVector<f64>,
    psd: Vec<DMatrix<f64>>,
}

impl ConePoint {
    fn dot(&self, other: &ConePoint) -> f64 {
        let mut acc = self.lin.dot(&other.lin);
        for (a, b) in self.psd.iter().zip(&other.psd) {
            acc += a.iter().zip(b.iter()).map(|(x, y)| x * y).sum::<f64>();
        }
        acc
    }

    fn axpy(&mut self, alpha: f64, other: &ConePoint) {
        self.lin.axpy(alpha, &other.lin, 1.0);
        for (a, b) in self.psd.iter_mut().zip(&other.psd) {
            *a += b * alpha;
        }
    }

    fn inf_norm(&self) -> f64 {
        let mut m = self.lin.iter().fold(0.0_f64, |a, x| a.max(x.abs()));
        for b in &self.psd {
            m = b.iter().fold(m, |a, x| a.max(x.abs()));
        }
        m
    }
}

/// Sparse linear row `constant + sum coeff * x` with the constant split off.
struct LinRow {
    terms: Vec<(usize, f64)>,
    constant: f64,
}

/// Per-iteration Nesterov-Todd scaling data for one PSD block.
struct PsdScaling {
    r: DMatrix<f64>,
    r_inv: DMatrix<f64>,
    /// Eigen-decomposition of the scaled point lambda.
    lam_vecs: DMatrix<f64>,
    lam_vals: DVector<f64>,
}

/// KKT factorization strategy.
enum Kkt {
    Dense,
    BlockArrow(ArrowLayout),
}

/// Variable layout for the block-arrow factorization.
struct ArrowLayout {
    /// group id per variable; usize::MAX marks core variables.
    var_group: Vec<usize>,
    /// local index of each variable inside its group or inside the core.
    var_local: Vec<usize>,
    groups: Vec<Vec<usize>>,
    group_sizes: Vec<usize>,
    core: Vec<usize>,
}

struct Ipm {
    n: usize,
    c: DVector<f64>,
    lin_rows: Vec<LinRow>,
    psd_blocks: Vec<AffineSym>,
    eq_rows: Vec<LinRow>,
    cone_degree: f64,
    kkt: Kkt,
    opts: SolverOptions,
    /// Per-variable equilibration scale (x_original = col_scale * x_scaled).
    col_scale: DVector<f64>,
    obj_scale: f64,
}

impl Ipm {
    fn new(program: &ConeProgram, opts: SolverOptions) -> crate::Result<Self> {
        let n = program.num_vars();
        if n == 0 {
            return Err(Error::InvalidInput("cone program has no variables".into()));
        }
        let mut lin_rows: Vec<LinRow> = program
            .ineq_constraints
            .iter()
            .map(|r| LinRow { terms: r.terms.clone(), constant: r.constant })
            .collect();
        let mut eq_rows: Vec<LinRow> = program
            .eq_constraints
            .iter()
            .map(|r| LinRow { terms: r.terms.clone(), constant: r.constant })
            .collect();
        let mut psd_blocks = program.psd_blocks.clone();
        if lin_rows.is_empty() && psd_blocks.is_empty() {
            return Err(Error::InvalidInput("cone program has no cone constraints".into()));
        }

        // Ruiz-style equilibration: per-variable scales, per-row scales and a
        // per-PSD-block scalar. Row scaling of individual svec entries would
        // break the PSD structure, so blocks get one scalar each.
        let mut col_scale = DVector::from_element(n, 1.0_f64);
        for _ in 0..3 {
            // Row pass.
            for row in lin_rows.iter_mut().chain(eq_rows.iter_mut()) {
                let m = row
                    .terms
                    .iter()
                    .map(|&(v, c)| (c * col_scale[v]).abs())
                    .fold(0.0_f64, f64::max);
                if m > 0.0 {
                    let f = 1.0 / m.sqrt();
                    for t in &mut row.terms {
                        t.1 *= f;
                    }
                    row.constant *= f;
                }
            }
            for block in &mut psd_blocks {
                let m = block
                    .terms
                    .iter()
                    .map(|(v, mat)| mat.amax() * col_scale[*v])
                    .fold(0.0_f64, f64::max);
                if m > 0.0 {
                    let f = 1.0 / m.sqrt();
                    block.constant *= f;
                    for t in &mut block.terms {
                        t.1 *= f;
                    }
                }
            }
            // Column pass.
            let mut col_max = DVector::from_element(n, 0.0_f64);
            for row in lin_rows.iter().chain(eq_rows.iter()) {
                for &(v, c) in &row.terms {
                    col_max[v] = col_max[v].max((c * col_scale[v]).abs());
                }
            }
            for block in &psd_blocks {
                for (v, mat) in &block.terms {
                    col_max[*v] = col_max[*v].max(mat.amax() * col_scale[*v]);
                }
            }
            for v in 0..n {
                if col_max[v] > 0.0 {
                    col_scale[v] /= col_max[v].sqrt();
                }
            }
        }
        // Bake column scales into coefficients.
        for row in lin_rows.iter_mut().chain(eq_rows.iter_mut()) {
            for t in &mut row.terms {
                t.1 *= col_scale[t.0];
            }
        }
        for block in &mut psd_blocks {
            for t in &mut block.terms {
                let s = col_scale[t.0];
                t.1 *= s;
            }
        }
        let mut c = program.objective_vector();
        for v in 0..n {
            c[v] *= col_scale[v];
        }
        let obj_scale = c.amax().max(1e-12);
        c /= obj_scale;

        let kkt = match Self::arrow_layout(n, &program.elimination_groups, &lin_rows, &psd_blocks) {
            Some(layout) => Kkt::BlockArrow(layout),
            None => Kkt::Dense,
        };

        let cone_degree =
            lin_rows.len() as f64 + psd_blocks.iter().map(|b| b.dim as f64).sum::<f64>();

        Ok(Self { n, c, lin_rows, psd_blocks, eq_rows, cone_degree, kkt, opts, col_scale, obj_scale })
    }

    /// Validate the elimination hint; cone rows must not span two groups and
    /// PSD blocks must touch core variables only.
    fn arrow_layout(
        n: usize,
        groups: &[Vec<usize>],
        lin_rows: &[LinRow],
        psd_blocks: &[AffineSym],
    ) -> Option<ArrowLayout> {
        if groups.is_empty() {
            return None;
        }
        let mut var_group = vec![usize::MAX; n];
        let mut var_local = vec![0usize; n];
        let mut group_sizes = Vec::with_capacity(groups.len());
        for (g, vars) in groups.iter().enumerate() {
            for (k, &v) in vars.iter().enumerate() {
                if v >= n || var_group[v] != usize::MAX {
                    return None; // out of range or overlapping groups
                }
                var_group[v] = g;
                var_local[v] = k;
            }
            group_sizes.push(vars.len());
        }
        let mut core = Vec::new();
        for v in 0..n {
            if var_group[v] == usize::MAX {
                var_local[v] = core.len();
                core.push(v);
            }
        }
        for row in lin_rows {
            let mut seen = usize::MAX;
            for &(v, _) in &row.terms {
                let g = var_group[v];
                if g != usize::MAX {
                    if seen != usize::MAX && seen != g {
                        return None;
                    }
                    seen = g;
                }
            }
        }
        for block in psd_blocks {
            if block.terms.iter().any(|(v, _)| var_group[*v] != usize::MAX) {
                return None;
            }
        }
        Some(ArrowLayout { var_group, var_local, groups: groups.to_vec(), group_sizes, core })
    }

    /// Affine slack value `affine(x)` per cone.
    fn affine_value(&self, x: &DVector<f64>) -> ConePoint {
        let lin = DVector::from_iterator(
            self.lin_rows.len(),
            self.lin_rows.iter().map(|r| r.constant + r.terms.iter().map(|&(v, c)| c * x[v]).sum::<f64>()),
        );
        let psd = self.psd_blocks.iter().map(|b| b.eval(x)).collect();
        ConePoint { lin, psd }
    }

    /// Adjoint of the linear part: `(L^T z)_v`.
    fn adjoint(&self, z: &ConePoint) -> DVector<f64> {
        let mut out = DVector::zeros(self.n);
        for (i, row) in self.lin_rows.iter().enumerate() {
            let zi = z.lin[i];
            for &(v, c) in &row.terms {
                out[v] += c * zi;
            }
        }
        for (j, block) in self.psd_blocks.iter().enumerate() {
            let zb = &z.psd[j];
            for (v, m) in &block.terms {
                out[*v] += m.iter().zip(zb.iter()).map(|(a, b)| a * b).sum::<f64>();
            }
        }
        out
    }

    /// Linear part only, `L(x) = affine(x) - affine(0)`.
    fn linear_map(&self, x: &DVector<f64>) -> ConePoint {
        let lin = DVector::from_iterator(
            self.lin_rows.len(),
            self.lin_rows.iter().map(|r| r.terms.iter().map(|&(v, c)| c * x[v]).sum::<f64>()),
        );
        let psd = self
            .psd_blocks
            .iter()
            .map(|b| {
                let mut m = DMatrix::zeros(b.dim, b.dim);
                for (v, mat) in &b.terms {
                    m += mat * x[*v];
                }
                m
            })
            .collect();
        ConePoint { lin, psd }
    }

    fn eq_residual(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(
            self.eq_rows.len(),
            self.eq_rows.iter().map(|r| r.constant + r.terms.iter().map(|&(v, c)| c * x[v]).sum::<f64>()),
        )
    }

    fn eq_adjoint(&self, y: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.n);
        for (i, row) in self.eq_rows.iter().enumerate() {
            for &(v, c) in &row.terms {
                out[v] += c * y[i];
            }
        }
        out
    }

    fn run(&mut self) -> crate::Result<Solution> {
        let n = self.n;
        let p = self.eq_rows.len();
        let mut x = DVector::zeros(n);
        let mut y = DVector::zeros(p);

        // Interior start: shift the affine value at x = 0 into the cone.
        let t0 = self.affine_value(&x);
        let mut s = ConePoint {
            lin: t0.lin.map(|v| v.max(1.0)),
            psd: t0
                .psd
                .iter()
                .map(|m| {
                    let shift = (-crate::linalg::min_eig(m)).max(0.0) + 1.0;
                    m + DMatrix::identity(m.nrows(), m.ncols()) * shift
                })
                .collect(),
        };
        let mut z = ConePoint {
            lin: DVector::from_element(self.lin_rows.len(), 1.0),
            psd: self.psd_blocks.iter().map(|b| DMatrix::identity(b.dim, b.dim)).collect(),
        };

        let data_scale = 1.0
            + self
                .lin_rows
                .iter()
                .chain(self.eq_rows.iter())
                .map(|r| r.constant.abs())
                .fold(0.0_f64, f64::max)
                .max(self.psd_blocks.iter().map(|b| b.constant.amax()).fold(0.0, f64::max));

        let mut best: Option<(DVector<f64>, f64, f64)> = None;
        let mut stall = 0usize;

        for iter in 0..self.opts.max_iter {
            // Residuals.
            let tval = self.affine_value(&x);
            let mut rz = s.clone();
            rz.axpy(-1.0, &tval);
            let ry = self.eq_residual(&x);
            let rx = &self.c + self.eq_adjoint(&y) - self.adjoint(&z);
            let gap = s.dot(&z).max(0.0);
            let mu = (gap / self.cone_degree).max(f64::MIN_POSITIVE);
            let obj = self.c.dot(&x);

            let pres = rz.inf_norm().max(ry.amax()) / data_scale;
            let dres = rx.amax() / (1.0 + self.c.amax());
            let relgap = gap / obj.abs().max(1.0);
            if self.opts.trace {
                eprintln!(
                    "iter {iter:3} obj {obj:+.6e} gap {gap:.3e} pres {pres:.3e} dres {dres:.3e}"
                );
            }

            if pres <= self.opts.feas_tol && dres <= self.opts.feas_tol {
                if best.as_ref().map_or(true, |b| gap < b.2) {
                    best = Some((x.clone(), obj, gap));
                }
                if gap <= self.opts.gap_tol || relgap <= self.opts.gap_tol {
                    return Ok(self.finish(x, obj, Status::Optimal, gap, iter));
                }
            }

            // Infeasibility certificates (Farkas-style) on the current duals.
            let hz = {
                let h = self.affine_value(&DVector::zeros(n));
                h.dot(&z) - self.eq_rows.iter().enumerate().map(|(i, r)| r.constant * y[i]).sum::<f64>()
            };
            let cert_resid = (self.adjoint(&z) - self.eq_adjoint(&y)).amax();
            let dual_mag = z.inf_norm().max(y.amax()).max(1.0);
            if hz < -1e-6 * dual_mag && cert_resid <= 1e-8 * dual_mag * data_scale {
                return Ok(self.finish(x, obj, Status::Infeasible, gap, iter));
            }
            if x.amax() > 1e14 || z.inf_norm() > 1e14 {
                let status = if obj < -1e8 { Status::Unbounded } else { Status::MaxIter };
                return Ok(self.finish(x, obj, status, gap, iter));
            }

            // Nesterov-Todd scaling.
            let lin_w: DVector<f64> =
                DVector::from_iterator(s.lin.len(), s.lin.iter().zip(z.lin.iter()).map(|(si, zi)| (si / zi).sqrt()));
            let lin_lam: DVector<f64> =
                DVector::from_iterator(s.lin.len(), s.lin.iter().zip(z.lin.iter()).map(|(si, zi)| (si * zi).sqrt()));
            let psd_scalings: Vec<PsdScaling> = s
                .psd
                .iter()
                .zip(&z.psd)
                .map(|(sb, zb)| nt_scaling(sb, zb))
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| Error::NumericalBreakdown(format!("NT scaling failed at iter {iter}: {e}")))?;

            let factor = self
                .factor_kkt(&lin_w, &psd_scalings)
                .map_err(|e| Error::NumericalBreakdown(format!("KKT factorization failed at iter {iter}: {e}")))?;

            // Affine (predictor) direction.
            let g_aff = self.centrality_rhs(&lin_lam, &psd_scalings, &s, &z, 0.0, None);
            let (dx_a, _dy_a, ds_a, dz_a) =
                self.solve_newton(&factor, &lin_w, &psd_scalings, &rx, &ry, &rz, &g_aff)?;
            let alpha_aff = step_length(&s, &ds_a, &z, &dz_a).min(1.0);
            let mut s_trial = s.clone();
            s_trial.axpy(alpha_aff, &ds_a);
            let mut z_trial = z.clone();
            z_trial.axpy(alpha_aff, &dz_a);
            let gap_aff = s_trial.dot(&z_trial).max(0.0);
            let sigma = ((gap_aff / gap.max(f64::MIN_POSITIVE)).powi(3)).clamp(1e-8, 0.999);
            // Do not aim the barrier below what the exit test needs; grinding
            // mu toward the f64 floor only corrupts the dual residual.
            let sigma_mu = (sigma * mu).max(0.01 * self.opts.gap_tol / self.cone_degree);

            // Combined (corrector) direction.
            let g_comb = self.centrality_rhs(
                &lin_lam,
                &psd_scalings,
                &s,
                &z,
                sigma_mu,
                Some((&ds_a, &dz_a, &lin_w)),
            );
            let (dx, dy, ds, dz) =
                self.solve_newton(&factor, &lin_w, &psd_scalings, &rx, &ry, &rz, &g_comb)?;
            let alpha = (0.99 * step_length(&s, &ds, &z, &dz)).min(1.0);

            if alpha < 1e-10 {
                stall += 1;
                if stall >= 3 {
                    if let Some((bx, bobj, bgap)) = best.take() {
                        return Ok(self.finish(bx, bobj, Status::MaxIter, bgap, iter));
                    }
                    return Ok(self.finish(x, obj, Status::MaxIter, gap, iter));
                }
            } else {
                stall = 0;
            }

            x += &dx * alpha;
            y += &dy * alpha;
            s.axpy(alpha, &ds);
            z.axpy(alpha, &dz);
        }

        let obj = self.c.dot(&x);
        let gap = s.dot(&z);
        if let Some((bx, bobj, bgap)) = best.take() {
            return Ok(self.finish(bx, bobj, Status::MaxIter, bgap, self.opts.max_iter));
        }
        Ok(self.finish(x, obj, Status::MaxIter, gap, self.opts.max_iter))
    }

    /// Scaled centrality right-hand side g with `lambda o g = gamma`,
    /// `gamma = sigma*mu*e - lambda o lambda - corrector`.
    fn centrality_rhs(
        &self,
        lin_lam: &DVector<f64>,
        psd: &[PsdScaling],
        _s: &ConePoint,
        _z: &ConePoint,
        sigma_mu: f64,
        corrector: Option<(&ConePoint, &ConePoint, &DVector<f64>)>,
    ) -> ConePoint {
        let lin = DVector::from_iterator(
            lin_lam.len(),
            lin_lam.iter().enumerate().map(|(i, &lam)| {
                let mut gamma = sigma_mu - lam * lam;
                if let Some((ds_a, dz_a, _w)) = corrector {
                    gamma -= ds_a.lin[i] * dz_a.lin[i];
                }
                gamma / lam
            }),
        );
        let psd_parts = psd
            .iter()
            .enumerate()
            .map(|(j, sc)| {
                let k = sc.lam_vals.len();
                // gamma in the lambda eigenbasis.
                let mut gamma_tilde = DMatrix::zeros(k, k);
                for i in 0..k {
                    gamma_tilde[(i, i)] = sigma_mu - sc.lam_vals[i] * sc.lam_vals[i];
                }
                if let Some((ds_a, dz_a, _)) = corrector {
                    let u = &sc.r_inv * &ds_a.psd[j] * &sc.r_inv;
                    let v = &sc.r * &dz_a.psd[j] * &sc.r;
                    let corr = symmetrize(&(&u * &v));
                    let corr_t = sc.lam_vecs.transpose() * corr * &sc.lam_vecs;
                    gamma_tilde -= corr_t;
                }
                // Solve (lambda g + g lambda)/2 = gamma in the eigenbasis.
                let mut g_tilde = DMatrix::zeros(k, k);
                for a in 0..k {
                    for b in 0..k {
                        g_tilde[(a, b)] =
                            2.0 * gamma_tilde[(a, b)] / (sc.lam_vals[a] + sc.lam_vals[b]);
                    }
                }
                symmetrize(&(&sc.lam_vecs * g_tilde * sc.lam_vecs.transpose()))
            })
            .collect();
        ConePoint { lin, psd: psd_parts }
    }

    /// One Newton solve given the factored KKT system.
    #[allow(clippy::too_many_arguments)]
    fn solve_newton(
        &self,
        factor: &KktFactor,
        lin_w: &DVector<f64>,
        psd: &[PsdScaling],
        rx: &DVector<f64>,
        ry: &DVector<f64>,
        rz: &ConePoint,
        g: &ConePoint,
    ) -> crate::Result<(DVector<f64>, DVector<f64>, ConePoint, ConePoint)> {
        // t := W g + rz, then bx = -rx + L^T W^{-2} t.
        let mut t_lin = DVector::zeros(lin_w.len());
        for i in 0..lin_w.len() {
            t_lin[i] = lin_w[i] * g.lin[i] + rz.lin[i];
        }
        let t_psd: Vec<DMatrix<f64>> = psd
            .iter()
            .enumerate()
            .map(|(j, sc)| &sc.r * &g.psd[j] * &sc.r + &rz.psd[j])
            .collect();
        let winv2_t = ConePoint {
            lin: DVector::from_iterator(
                lin_w.len(),
                (0..lin_w.len()).map(|i| t_lin[i] / (lin_w[i] * lin_w[i])),
            ),
            psd: psd
                .iter()
                .enumerate()
                .map(|(j, sc)| {
                    let inner = &sc.r_inv * &t_psd[j] * &sc.r_inv;
                    symmetrize(&(&sc.r_inv * inner * &sc.r_inv))
                })
                .collect(),
        };
        let bx = -rx + self.adjoint(&winv2_t);

        let (mut dx, mut dy) = factor.solve_bordered(self, &bx, ry)?;

        // One pass of iterative refinement on the bordered KKT system; the
        // scaled system is severely ill-conditioned near the cone boundary.
        {
            let h_dx = self.apply_h(&dx, lin_w, psd);
            let mut r1 = &bx - h_dx;
            if !self.eq_rows.is_empty() {
                r1 -= self.eq_adjoint(&dy);
            }
            let mut r2 = -ry.clone();
            for (i, row) in self.eq_rows.iter().enumerate() {
                r2[i] -= row.terms.iter().map(|&(v, c)| c * dx[v]).sum::<f64>();
            }
            let (ddx, ddy) = factor.solve_bordered(self, &r1, &(-r2))?;
            dx += ddx;
            dy += ddy;
        }

        // ds = L dx - rz ; dz = W^{-2} (W g + rz - L dx).
        let ldx = self.linear_map(&dx);
        let mut ds = ldx.clone();
        ds.axpy(-1.0, rz);
        let dz_lin = DVector::from_iterator(
            lin_w.len(),
            (0..lin_w.len()).map(|i| (t_lin[i] - ldx.lin[i]) / (lin_w[i] * lin_w[i])),
        );
        let dz_psd: Vec<DMatrix<f64>> = psd
            .iter()
            .enumerate()
            .map(|(j, sc)| {
                let m = &t_psd[j] - &ldx.psd[j];
                let inner = &sc.r_inv * m * &sc.r_inv;
                symmetrize(&(&sc.r_inv * inner * &sc.r_inv))
            })
            .collect();
        Ok((dx, dy, ds, ConePoint { lin: dz_lin, psd: dz_psd }))
    }

    /// Apply `H = L^T W^{-2} L` to a vector (used for iterative refinement).
    fn apply_h(&self, x: &DVector<f64>, lin_w: &DVector<f64>, psd: &[PsdScaling]) -> DVector<f64> {
        let lx = self.linear_map(x);
        let scaled = ConePoint {
            lin: DVector::from_iterator(
                lin_w.len(),
                (0..lin_w.len()).map(|i| lx.lin[i] / (lin_w[i] * lin_w[i])),
            ),
            psd: psd
                .iter()
                .enumerate()
                .map(|(j, sc)| {
                    let inner = &sc.r_inv * &lx.psd[j] * &sc.r_inv;
                    symmetrize(&(&sc.r_inv * inner * &sc.r_inv))
                })
                .collect(),
        };
        self.adjoint(&scaled)
    }

    /// Assemble and factor `H = L^T W^{-2} L` (plus the equality border).
    fn factor_kkt(&self, lin_w: &DVector<f64>, psd: &[PsdScaling]) -> Result<KktFactor, String> {
        // Scaled PSD basis columns (touch core variables only in arrow mode).
        let scaled_psd: Vec<Vec<(usize, DVector<f64>)>> = self
            .psd_blocks
            .iter()
            .zip(psd)
            .map(|(block, sc)| {
                block
                    .terms
                    .iter()
                    .map(|(v, m)| (*v, crate::linalg::svec(&(&sc.r_inv * m * &sc.r_inv))))
                    .collect()
            })
            .collect();

        match &self.kkt {
            Kkt::Dense => {
                let n = self.n;
                let mut h = DMatrix::zeros(n, n);
                for (i, row) in self.lin_rows.iter().enumerate() {
                    let w2 = 1.0 / (lin_w[i] * lin_w[i]);
                    for &(u, cu) in &row.terms {
                        for &(v, cv) in &row.terms {
                            h[(u, v)] += w2 * cu * cv;
                        }
                    }
                }
                for cols in &scaled_psd {
                    for (u, su) in cols {
                        for (v, sv) in cols {
                            h[(*u, *v)] += su.dot(sv);
                        }
                    }
                }
                let chol = chol_with_jitter(h)?;
                Ok(KktFactor::Dense(chol))
            }
            Kkt::BlockArrow(layout) => {
                let nc = layout.core.len();
                let ng = layout.group_sizes.len();
                let mut blocks: Vec<DMatrix<f64>> =
                    layout.group_sizes.iter().map(|&s| DMatrix::zeros(s, s)).collect();
                let mut couplings: Vec<DMatrix<f64>> =
                    layout.group_sizes.iter().map(|&s| DMatrix::zeros(s, nc)).collect();
                let mut core = DMatrix::zeros(nc, nc);

                for (i, row) in self.lin_rows.iter().enumerate() {
                    let w2 = 1.0 / (lin_w[i] * lin_w[i]);
                    let mut gpart: Vec<(usize, f64)> = Vec::new();
                    let mut cpart: Vec<(usize, f64)> = Vec::new();
                    let mut gid = usize::MAX;
                    for &(v, c) in &row.terms {
                        if layout.var_group[v] == usize::MAX {
                            cpart.push((layout.var_local[v], c));
                        } else {
                            gid = layout.var_group[v];
                            gpart.push((layout.var_local[v], c));
                        }
                    }
                    for &(a, ca) in &gpart {
                        for &(b, cb) in &gpart {
                            blocks[gid][(a, b)] += w2 * ca * cb;
                        }
                        for &(b, cb) in &cpart {
                            couplings[gid][(a, b)] += w2 * ca * cb;
                        }
                    }
                    for &(a, ca) in &cpart {
                        for &(b, cb) in &cpart {
                            core[(a, b)] += w2 * ca * cb;
                        }
                    }
                }
                for cols in &scaled_psd {
                    for (u, su) in cols {
                        let lu = layout.var_local[*u];
                        for (v, sv) in cols {
                            core[(lu, layout.var_local[*v])] += su.dot(sv);
                        }
                    }
                }

                let mut block_chols = Vec::with_capacity(ng);
                let mut binv_e = Vec::with_capacity(ng);
                let mut core_schur = core;
                for g in 0..ng {
                    let chol = chol_with_jitter(blocks[g].clone())?;
                    let f = chol_solve_matrix(&chol, &couplings[g]);
                    core_schur -= couplings[g].transpose() * &f;
                    block_chols.push(chol);
                    binv_e.push(f);
                }
                let core_chol = chol_with_jitter(core_schur)?;
                Ok(KktFactor::BlockArrow { block_chols, binv_e, core_chol })
            }
        }
    }

    fn finish(&self, x: DVector<f64>, obj: f64, status: Status, gap: f64, iterations: usize) -> Solution {
        let mut x_out = x;
        for v in 0..self.n {
            x_out[v] *= self.col_scale[v];
        }
        Solution {
            x: x_out,
            objective_value: obj * self.obj_scale,
            status,
            gap: gap * self.obj_scale,
            iterations,
        }
    }
}

enum KktFactor {
    Dense(nalgebra::Cholesky<f64, nalgebra::Dyn>),
    BlockArrow {
        block_chols: Vec<nalgebra::Cholesky<f64, nalgebra::Dyn>>,
        binv_e: Vec<DMatrix<f64>>,
        core_chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
    },
}

impl KktFactor {
    fn solve_h(&self, ipm: &Ipm, r: &DVector<f64>) -> DVector<f64> {
        match self {
            KktFactor::Dense(chol) => chol.solve(r),
            KktFactor::BlockArrow { block_chols, binv_e, core_chol } => {
                let Kkt::BlockArrow(layout) = &ipm.kkt else { unreachable!() };
                let ng = layout.group_sizes.len();
                let nc = layout.core.len();
                let mut rg: Vec<DVector<f64>> =
                    layout.group_sizes.iter().map(|&s| DVector::zeros(s)).collect();
                let mut rc = DVector::zeros(nc);
                for v in 0..ipm.n {
                    let g = layout.var_group[v];
                    if g == usize::MAX {
                        rc[layout.var_local[v]] = r[v];
                    } else {
                        rg[g][layout.var_local[v]] = r[v];
                    }
                }
                let ug: Vec<DVector<f64>> =
                    (0..ng).map(|g| block_chols[g].solve(&rg[g])).collect();
                let mut rc_tilde = rc;
                for g in 0..ng {
                    rc_tilde -= binv_e[g].transpose() * &rg[g];
                }
                let dc = core_chol.solve(&rc_tilde);
                let mut out = DVector::zeros(ipm.n);
                for (k, &v) in layout.core.iter().enumerate() {
                    out[v] = dc[k];
                }
                for g in 0..ng {
                    let dg = &ug[g] - &binv_e[g] * &dc;
                    for (k, &v) in layout.groups[g].iter().enumerate() {
                        out[v] = dg[k];
                    }
                }
                out
            }
        }
    }

    /// Solve `[H A^T; A 0] [dx; dy] = [bx; -ry]` through the H factorization.
    fn solve_bordered(
        &self,
        ipm: &Ipm,
        bx: &DVector<f64>,
        ry: &DVector<f64>,
    ) -> crate::Result<(DVector<f64>, DVector<f64>)> {
        let p = ipm.eq_rows.len();
        let h_inv_bx = self.solve_h(ipm, bx);
        if p == 0 {
            return Ok((h_inv_bx, DVector::zeros(0)));
        }
        let mut k1 = DMatrix::zeros(ipm.n, p);
        for j in 0..p {
            let mut col = DVector::zeros(ipm.n);
            for &(v, c) in &ipm.eq_rows[j].terms {
                col[v] = c;
            }
            k1.set_column(j, &self.solve_h(ipm, &col));
        }
        let mut sy = DMatrix::zeros(p, p);
        for i in 0..p {
            for j in 0..p {
                let mut acc = 0.0;
                for &(v, c) in &ipm.eq_rows[i].terms {
                    acc += c * k1[(v, j)];
                }
                sy[(i, j)] = acc;
            }
        }
        let mut rhs = ry.clone();
        for i in 0..p {
            for &(v, c) in &ipm.eq_rows[i].terms {
                rhs[i] += c * h_inv_bx[v];
            }
        }
        let chol = chol_with_jitter(symmetrize(&sy))
            .map_err(|e| Error::NumericalBreakdown(format!("equality Schur complement: {e}")))?;
        let dy = chol.solve(&rhs);
        let dx = h_inv_bx - k1 * &dy;
        Ok((dx, dy))
    }
}

fn chol_solve_matrix(
    chol: &nalgebra::Cholesky<f64, nalgebra::Dyn>,
    m: &DMatrix<f64>,
) -> DMatrix<f64> {
    let mut out = m.clone();
    for j in 0..m.ncols() {
        let col = chol.solve(&m.column(j).into_owned());
        out.set_column(j, &col);
    }
    out
}

fn chol_with_jitter(mut h: DMatrix<f64>) -> Result<nalgebra::Cholesky<f64, nalgebra::Dyn>, String> {
    let n = h.nrows();
    let scale = h.diagonal().amax().max(1.0);
    let mut jitter = 1e-13 * scale;
    for i in 0..n {
        h[(i, i)] += jitter;
    }
    for _ in 0..10 {
        if let Some(c) = h.clone().cholesky() {
            return Ok(c);
        }
        let bump = jitter * 99.0;
        for i in 0..n {
            h[(i, i)] += bump;
        }
        jitter *= 100.0;
    }
    Err(format!(
        "KKT matrix not factorable (size {n}, diagonal scale {scale:.3e}, last jitter {jitter:.3e})"
    ))
}

/// Largest step with `s + alpha ds` and `z + alpha dz` inside the cone.
fn step_length(s: &ConePoint, ds: &ConePoint, z: &ConePoint, dz: &ConePoint) -> f64 {
    let mut alpha = f64::INFINITY;
    for (si, dsi) in s.lin.iter().zip(ds.lin.iter()) {
        if *dsi < 0.0 {
            alpha = alpha.min(-si / dsi);
        }
    }
    for (zi, dzi) in z.lin.iter().zip(dz.lin.iter()) {
        if *dzi < 0.0 {
            alpha = alpha.min(-zi / dzi);
        }
    }
    for (mat, dir) in s.psd.iter().zip(ds.psd.iter()).chain(z.psd.iter().zip(dz.psd.iter())) {
        alpha = alpha.min(psd_step(mat, dir));
    }
    alpha
}

fn psd_step(mat: &DMatrix<f64>, dir: &DMatrix<f64>) -> f64 {
    let n = mat.nrows();
    // Transform the direction by the inverse Cholesky factor of mat.
    let chol = match mat.clone().cholesky() {
        Some(c) => c,
        None => {
            // Boundary iterate; fall back to an eigenvalue floor.
            let eig = symmetrize(mat).symmetric_eigen();
            let floor = eig.eigenvalues.amax().max(1.0) * 1e-14;
            let mut m = symmetrize(mat);
            let bump = eig.eigenvalues.iter().fold(0.0_f64, |a, &l| a.max(floor - l));
            for i in 0..n {
                m[(i, i)] += bump + floor;
            }
            m.cholesky().expect("floored matrix must factor")
        }
    };
    let l = chol.l();
    let linv_dir = l.solve_lower_triangular(dir).expect("triangular solve");
    let transformed = l
        .solve_lower_triangular(&linv_dir.transpose())
        .expect("triangular solve");
    let lam_min = crate::linalg::min_eig(&symmetrize(&transformed));
    if lam_min >= 0.0 {
        f64::INFINITY
    } else {
        1.0 / (-lam_min)
    }
}

/// Nesterov-Todd scaling point for a PSD pair (S, Z).
///
/// Iterates ride the cone boundary near convergence, so eigenvalues are
/// floored relative to the matrix scale rather than rejected.
fn nt_scaling(s: &DMatrix<f64>, z: &DMatrix<f64>) -> Result<PsdScaling, String> {
    let n = s.nrows();
    let sqrt_of = |m: &DMatrix<f64>, invert: bool| -> Result<DMatrix<f64>, String> {
        let eig = symmetrize(m).symmetric_eigen();
        let scale = eig.eigenvalues.iter().fold(0.0_f64, |a, &l| a.max(l));
        if !(scale > 0.0) || eig.eigenvalues.iter().any(|l| !l.is_finite()) {
            return Err(format!("matrix lost positive definiteness (max eig {scale:.3e})"));
        }
        let floor = scale * 1e-16;
        let mut d = DVector::zeros(n);
        for i in 0..n {
            let lam = eig.eigenvalues[i].max(floor);
            d[i] = if invert { 1.0 / lam.sqrt() } else { lam.sqrt() };
        }
        let mut q = eig.eigenvectors.clone();
        for j in 0..n {
            for i in 0..n {
                q[(i, j)] *= d[j];
            }
        }
        Ok(&q * eig.eigenvectors.transpose())
    };
    let s_half = sqrt_of(s, false)?;
    let m = &s_half * z * &s_half;
    let m_inv_half = sqrt_of(&m, true)?;
    let t = &s_half * m_inv_half * &s_half;
    let r = sqrt_of(&t, false)?;
    let r_inv = sqrt_of(&t, true)?;
    let lam = symmetrize(&(0.5 * (&r * z * &r + &r_inv * s * &r_inv)));
    let eig = lam.clone().symmetric_eigen();
    let lam_max = eig.eigenvalues.iter().fold(0.0_f64, |a, &l| a.max(l));
    if !(lam_max > 0.0) {
        return Err("scaled point lost positive definiteness".into());
    }
    let lam_vals = eig.eigenvalues.map(|l| l.max(lam_max * 1e-16));
    Ok(PsdScaling { r, r_inv, lam_vecs: eig.eigenvectors, lam_vals })
}

#[cfg(test)]
mod tests {
    use super::super::{AffineScalar, AffineSym, AffineVec, ConeProgram, Status};
    use super::*;
    use approx::assert_relative_eq;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    #[test]
    fn scalar_lp() {
        // minimize x subject to x >= 1.
        let mut prog = ConeProgram::new();
        let x = prog.add_var();
        prog.add_objective(x, 1.0);
        let mut row = AffineScalar::constant(-1.0);
        row.push(x, 1.0);
        prog.add_ineq(row);
        // Keep x bounded above too so the dual is clean.
        let mut ub = AffineScalar::constant(10.0);
        ub.push(x, -1.0);
        prog.add_ineq(ub);
        let sol = solve(&prog, 1e-8).unwrap();
        assert_eq!(sol.status, Status::Optimal);
        assert_relative_eq!(sol.x[x], 1.0, epsilon = 1e-6);
        assert_relative_eq!(sol.objective_value, 1.0, epsilon = 1e-6);
    }

    #[test]
    fn trace_minimization_over_psd() {
        // minimize tr(X) s.t. X >= I, X in S^3 -> 3.
        let n = 3;
        let mut prog = ConeProgram::new();
        let mut block = AffineSym::zero(n);
        block.constant = -DMatrix::identity(n, n);
        for i in 0..n {
            for j in i..n {
                let v = prog.add_var();
                let mut m = DMatrix::zeros(n, n);
                m[(i, j)] = 1.0;
                m[(j, i)] = 1.0;
                if i == j {
                    prog.add_objective(v, 1.0);
                }
                block.push(v, m);
            }
        }
        prog.add_psd_block(block);
        let sol = solve(&prog, 1e-8).unwrap();
        assert_eq!(sol.status, Status::Optimal);
        assert_relative_eq!(sol.objective_value, 3.0, epsilon = 1e-5);
    }

    #[test]
    fn schur_two_by_two() {
        // minimize t s.t. [[1, 2], [2, t]] >= 0 -> t = 4.
        let mut prog = ConeProgram::new();
        let t = prog.add_var();
        prog.add_objective(t, 1.0);
        let mut block = AffineSym::zero(2);
        block.constant = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 0.0]);
        let mut m = DMatrix::zeros(2, 2);
        m[(1, 1)] = 1.0;
        block.push(t, m);
        prog.add_psd_block(block);
        let sol = solve(&prog, 1e-8).unwrap();
        assert_eq!(sol.status, Status::Optimal);
        assert_relative_eq!(sol.objective_value, 4.0, epsilon = 1e-5);
    }

    #[test]
    fn epigraph_fixed_data() {
        // D = I, p = (3, 4), q = 0 -> min t = 25. And diag(2,2), p=(2,0), q=5 -> 7.
        for (d_diag, p_vec, q_const, expected) in [
            (vec![1.0, 1.0], vec![3.0, 4.0], 0.0, 25.0),
            (vec![2.0, 2.0], vec![2.0, 0.0], 5.0, 7.0),
        ] {
            let mut prog = ConeProgram::new();
            let mut p = AffineVec::zero(2);
            p.constant = DVector::from_vec(p_vec);
            let mut d = AffineSym::zero(2);
            d.constant = DMatrix::from_diagonal(&DVector::from_vec(d_diag));
            let q = AffineScalar::constant(q_const);
            prog.add_matrix_fractional_epigraph(&p, &d, &q);
            let sol = solve(&prog, 1e-8).unwrap();
            assert_eq!(sol.status, Status::Optimal);
            // The block corner is t - q, so the optimal t already includes q.
            assert_relative_eq!(sol.objective_value, expected, epsilon = 1e-4);
        }
    }

    #[test]
    fn epigraph_random_matches_closed_form() {
        let mut rng = StdRng::seed_from_u64(7);
        for _ in 0..20 {
            let k = 4;
            let b = DMatrix::from_fn(k, k, |_, _| rng.gen_range(-1.0..1.0));
            let d_mat = &b * b.transpose() + DMatrix::identity(k, k) * rng.gen_range(0.3..1.0);
            let p_vec = DVector::from_fn(k, |_, _| rng.gen_range(-1.0..1.0));
            let q_const: f64 = rng.gen_range(-1.0..1.0);
            let mut prog = ConeProgram::new();
            let mut p = AffineVec::zero(k);
            p.constant = p_vec.clone();
            let mut d = AffineSym::zero(k);
            d.constant = d_mat.clone();
            prog.add_matrix_fractional_epigraph(&p, &d, &AffineScalar::constant(q_const));
            let sol = solve(&prog, 1e-8).unwrap();
            assert_eq!(sol.status, Status::Optimal);
            let direct = p_vec.dot(&d_mat.clone().cholesky().unwrap().solve(&p_vec)) + q_const;
            assert_relative_eq!(sol.objective_value, direct, max_relative = 1e-5, epsilon = 1e-7);
        }
    }

    #[test]
    fn equality_constraints_respected() {
        // minimize x + y s.t. x + y + z = 2, x,y,z >= 0, z <= 0.5.
        let mut prog = ConeProgram::new();
        let vars = prog.add_vars(3);
        let (x, y, z) = (vars.start, vars.start + 1, vars.start + 2);
        prog.add_objective(x, 1.0);
        prog.add_objective(y, 1.0);
        let mut eq = AffineScalar::constant(-2.0);
        eq.push(x, 1.0).push(y, 1.0).push(z, 1.0);
        prog.add_eq(eq);
        for v in [x, y, z] {
            prog.add_nonneg(v);
        }
        let mut cap = AffineScalar::constant(0.5);
        cap.push(z, -1.0);
        prog.add_ineq(cap);
        let sol = solve(&prog, 1e-8).unwrap();
        assert_eq!(sol.status, Status::Optimal);
        assert_relative_eq!(sol.objective_value, 1.5, epsilon = 1e-5);
        assert_relative_eq!(sol.x[z], 0.5, epsilon = 1e-5);
    }

    #[test]
    fn objective_scaling_covariance() {
        let build = |alpha: f64| {
            let mut prog = ConeProgram::new();
            let x = prog.add_var();
            let y = prog.add_var();
            prog.add_objective(x, alpha * 2.0);
            prog.add_objective(y, alpha * 1.0);
            let mut r1 = AffineScalar::constant(-1.0);
            r1.push(x, 1.0).push(y, 1.0);
            prog.add_ineq(r1);
            prog.add_nonneg(x);
            prog.add_nonneg(y);
            prog
        };
        let s1 = solve(&build(1.0), 1e-8).unwrap();
        let s5 = solve(&build(5.0), 1e-8).unwrap();
        assert_relative_eq!(5.0 * s1.objective_value, s5.objective_value, max_relative = 1e-6);
        assert_relative_eq!((s1.x.clone() - s5.x.clone()).amax(), 0.0, epsilon = 1e-5);
    }

    #[test]
    fn detects_infeasible() {
        // x >= 1 and x <= 0 simultaneously.
        let mut prog = ConeProgram::new();
        let x = prog.add_var();
        prog.add_objective(x, 1.0);
        let mut lo = AffineScalar::constant(-1.0);
        lo.push(x, 1.0);
        prog.add_ineq(lo);
        let mut hi = AffineScalar::constant(0.0);
        hi.push(x, -1.0);
        prog.add_ineq(hi);
        let sol = solve(&prog, 1e-8).unwrap();
        assert_eq!(sol.status, Status::Infeasible);
    }

    #[test]
    fn block_arrow_matches_dense() {
        // Random separable program: groups of 3 vars with their own rows,
        // plus two core vars tied to everything.
        let mut rng = StdRng::seed_from_u64(11);
        let ngroups = 6;
        let build = |grouped: bool, rng: &mut StdRng| {
            let mut prog = ConeProgram::new();
            let core_a = prog.add_var();
            let core_b = prog.add_var();
            prog.add_objective(core_a, 1.0);
            prog.add_objective(core_b, 0.5);
            let mut groups = Vec::new();
            for _ in 0..ngroups {
                let vars: Vec<usize> = (0..3).map(|_| prog.add_var()).collect();
                for &v in &vars {
                    prog.add_nonneg(v);
                    prog.add_objective(v, rng.gen_range(0.1..1.0));
                }
                // Row linking group to core: v0 + v1 + v2 + core_a - const >= 0 and reverse cap.
                let c1: f64 = rng.gen_range(0.5..2.0);
                let mut row = AffineScalar::constant(-c1);
                for &v in &vars {
                    row.push(v, 1.0);
                }
                row.push(core_a, 1.0);
                prog.add_ineq(row);
                groups.push(vars);
            }
            // PSD block on the core: [[core_a, 0.3],[0.3, core_b]] >= 0.
            let mut block = AffineSym::zero(2);
            block.constant = DMatrix::from_row_slice(2, 2, &[0.0, 0.3, 0.3, 0.0]);
            let mut ma = DMatrix::zeros(2, 2);
            ma[(0, 0)] = 1.0;
            block.push(core_a, ma);
            let mut mb = DMatrix::zeros(2, 2);
            mb[(1, 1)] = 1.0;
            block.push(core_b, mb);
            prog.add_psd_block(block);
            if grouped {
                prog.elimination_groups = groups;
            }
            prog
        };
        let mut rng2 = StdRng::seed_from_u64(11);
        let dense = solve(&build(false, &mut rng), 1e-8).unwrap();
        let arrow = solve(&build(true, &mut rng2), 1e-8).unwrap();
        assert_eq!(dense.status, Status::Optimal);
        assert_eq!(arrow.status, Status::Optimal);
        assert_relative_eq!(dense.objective_value, arrow.objective_value, max_relative = 1e-6, epsilon = 1e-8);
        assert_relative_eq!((dense.x - arrow.x).amax(), 0.0, epsilon = 1e-4);
    }

    #[test]
    fn optimal_solution_is_feasible() {
        let mut rng = StdRng::seed_from_u64(13);
        for _ in 0..5 {
            let k = 3;
            let b = DMatrix::from_fn(k, k, |_, _| rng.gen_range(-1.0..1.0));
            let d_mat = &b * b.transpose() + DMatrix::identity(k, k);
            let mut prog = ConeProgram::new();
            let mut p = AffineVec::zero(k);
            p.constant = DVector::from_fn(k, |_, _| rng.gen_range(-1.0..1.0));
            let mut d = AffineSym::zero(k);
            d.constant = d_mat;
            prog.add_matrix_fractional_epigraph(&p, &d, &AffineScalar::constant(0.0));
            let sol = solve(&prog, 1e-8).unwrap();
            assert_eq!(sol.status, Status::Optimal);
            assert!(prog.max_violation(&sol.x) <= 1e-6, "violation {}", prog.max_violation(&sol.x));
        }
    }
}
