//! Certificate for online hinge-loss classification under ε-contamination.
//!
//! The learner runs θ' = (1-ση)θ + η 1[θᵀz ≤ 1] z on points with ‖z‖ ≤ 1;
//! regularization keeps ‖θ‖ ≤ 1/σ, and the adversary draws from the unit
//! ball. The inner supremum is handled by splitting on the adversarial
//! indicator (two program branches), relaxing the per-sample indicators to
//! [0, 1], and convexifying the bilinear products qᵢθ with McCormick
//! envelopes; dualizing yields two matrix-fractional programs whose max is
//! the solver bound. The certificate of record is the independently
//! verified bound for the winning multiplier, with the true indicators.
//!
//! Tiny instances admit a brute-force oracle that grids θ and z_adv and
//! enumerates the integer indicator vector, which is what the relaxation
//! soundness tests lean on.

use nalgebra::{DMatrix, DVector};
use std::collections::BTreeMap;
use std::ops::Range;

use crate::certcore::{
    matrix_to_rows, verify_certificate, AdversarialObjective, Ball, CertificateResult,
    ContaminatedStream, LearningRule, QuadraticMultiplier, SearchConfig, ThetaDomain,
};
use crate::linalg::{sym_basis, sym_from_coords};
use crate::sdp::{solve, AffineScalar, AffineSym, AffineVec, ConeProgram, Solution, Status};
use crate::{Error, Result};

/// One classification problem instance: label-multiplied points z = y·x.
#[derive(Debug, Clone)]
pub struct ClassInstance {
    pub points: Vec<DVector<f64>>,
    pub eta: f64,
    pub sigma: f64,
    pub epsilon: f64,
    /// Targets of the adversarial hinge objective; defaults to the points
    /// themselves (the adversary degrades benign performance).
    pub targets: Vec<DVector<f64>>,
}

impl ClassInstance {
    pub fn new(points: Vec<DVector<f64>>, eta: f64, sigma: f64, epsilon: f64) -> Result<Self> {
        let targets = points.clone();
        Self::with_targets(points, eta, sigma, epsilon, targets)
    }

    pub fn with_targets(
        points: Vec<DVector<f64>>,
        eta: f64,
        sigma: f64,
        epsilon: f64,
        targets: Vec<DVector<f64>>,
    ) -> Result<Self> {
        if points.is_empty() || targets.is_empty() {
            return Err(Error::InvalidInput("need at least one point and one target".into()));
        }
        let d = points[0].len();
        if points.iter().chain(targets.iter()).any(|p| p.len() != d) {
            return Err(Error::InvalidInput("mixed point dimensions".into()));
        }
        if points.iter().any(|p| p.norm() > 1.0 + 1e-9) {
            return Err(Error::InvalidInput("classification points must satisfy |z| <= 1".into()));
        }
        if !(eta > 0.0 && sigma > 0.0 && sigma * eta < 1.0) {
            return Err(Error::InvalidInput(format!(
                "need eta > 0, sigma > 0, sigma*eta < 1; got eta={eta}, sigma={sigma}"
            )));
        }
        if !(0.0..=1.0).contains(&epsilon) {
            return Err(Error::InvalidInput(format!("epsilon {epsilon} outside [0,1]")));
        }
        Ok(Self { points, eta, sigma, epsilon, targets })
    }

    pub fn dim(&self) -> usize {
        self.points[0].len()
    }

    pub fn n_points(&self) -> usize {
        self.points.len()
    }

    pub fn rule(&self) -> Result<LearningRule> {
        LearningRule::hinge(self.eta, self.sigma)
    }

    pub fn stream(&self) -> Result<ContaminatedStream> {
        ContaminatedStream::empirical(self.epsilon, self.points.clone())
    }

    pub fn objective(&self) -> AdversarialObjective {
        AdversarialObjective::HingeOnTarget { targets: self.targets.clone() }
    }

    /// Parameter domain ‖θ‖ ≤ 1/σ (regularization keeps iterates inside).
    pub fn theta_domain(&self) -> ThetaDomain {
        ThetaDomain::Ball(Ball::new(DVector::zeros(self.dim()), 1.0 / self.sigma))
    }

    /// Admissible adversarial set: the unit ball.
    pub fn adversary_set(&self) -> Ball {
        Ball::unit(self.dim())
    }
}

/// Sense of the per-sample scalar component constraint (the q_i row of
/// r_i(ν) + s(z_i, A, b) vs 0).
///
/// Only the q_i row admits a sound inequality (q ⪰ 0 is a kept primal
/// constraint); the w_i rows are always equalities because w is a free
/// variable of the relaxed primal, and the builder eliminates them by
/// solving for ν₆. The verified bound makes either choice safe.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ConstraintSense {
    #[default]
    LessEq,
    Eq,
}

/// Which indicator branch a program encodes for the adversarial point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    /// Indicator 0: no z_adv terms survive.
    Opt1,
    /// Indicator 1: full z_adv coupling.
    Opt2,
}

/// Variable layout of a classification certificate program.
pub struct ClassProgram {
    pub program: ConeProgram,
    pub branch: Branch,
    pub a_vars: Range<usize>,
    pub b_vars: Range<usize>,
    pub t_var: usize,
    pub nu8_var: usize,
}

/// Build the OPT₂ branch program.
pub fn build_opt2(inst: &ClassInstance, sense: ConstraintSense) -> ClassProgram {
    build_branch(inst, sense, Branch::Opt2)
}

/// Build the OPT₁ branch program (no adversarial coupling).
pub fn build_opt1(inst: &ClassInstance, sense: ConstraintSense) -> ClassProgram {
    build_branch(inst, sense, Branch::Opt1)
}

fn build_branch(inst: &ClassInstance, sense: ConstraintSense, branch: Branch) -> ClassProgram {
    let d = inst.dim();
    let n = inst.n_points();
    let eta = inst.eta;
    let sigma = inst.sigma;
    let eps = inst.epsilon;
    let inv_sigma = 1.0 / sigma;
    let contraction = 1.0 - sigma * eta;
    let basis = sym_basis(d);

    let mut prog = ConeProgram::new();

    // Per-sample multiplier group: nu1, nu2, nu7 scalars then nu3, nu4, nu5
    // in R^d, all nonnegative. nu6 is eliminated through the w-row equality
    //   nu3 + nu4 - nu5 - nu6 + s2(z_i, A) = 0
    // (w is a free variable of the relaxed primal, so its coefficient must
    // vanish exactly), leaving nu6 as an affine expression with its own
    // nonnegativity rows. Groups then couple only through (A, b, u), which
    // is what makes the block-arrow KKT factorization legal.
    struct Group {
        nu1: usize,
        nu2: usize,
        nu7: usize,
        nu3: Range<usize>,
        nu4: Range<usize>,
        nu5: Range<usize>,
        /// nu6[k] as an affine expression in (group vars, A coords).
        nu6: Vec<AffineScalar>,
    }
    let mut groups: Vec<Group> = Vec::with_capacity(n);
    let mut group_vars: Vec<Vec<usize>> = Vec::with_capacity(n);
    for _ in 0..n {
        let nu1 = prog.add_var();
        let nu2 = prog.add_var();
        let nu7 = prog.add_var();
        let nu3 = prog.add_vars(d);
        let nu4 = prog.add_vars(d);
        let nu5 = prog.add_vars(d);
        let mut all = vec![nu1, nu2, nu7];
        all.extend(nu3.clone());
        all.extend(nu4.clone());
        all.extend(nu5.clone());
        for &v in &all {
            prog.add_nonneg(v);
        }
        group_vars.push(all);
        groups.push(Group { nu1, nu2, nu7, nu3, nu4, nu5, nu6: Vec::new() });
    }

    let a_vars = prog.add_vars(basis.len());
    let b_vars = prog.add_vars(d);
    // u = sum_i ((nu1_i - nu2_i) z_i - nu4_i + nu6_i), defined by equalities
    // so that the PSD block touches core variables only.
    let u_vars = prog.add_vars(d);
    let nu8_var = prog.add_var();
    prog.add_nonneg(nu8_var);
    let (nu9_var, nu10_var) = match branch {
        Branch::Opt2 => {
            let nu9 = prog.add_var();
            let nu10 = prog.add_var();
            prog.add_nonneg(nu9);
            prog.add_nonneg(nu10);
            (Some(nu9), Some(nu10))
        }
        Branch::Opt1 => (None, None),
    };

    for k in 0..d {
        let mut row = AffineScalar::term(u_vars.start + k, 1.0);
        for (i, g) in groups.iter().enumerate() {
            row.push(g.nu1, -inst.points[i][k]);
            row.push(g.nu2, inst.points[i][k]);
            row.push(g.nu4.start + k, 1.0);
            row.push(g.nu6.start + k, -1.0);
        }
        prog.add_eq(row);
    }

    // D block.
    let block_dim = match branch {
        Branch::Opt2 => 2 * d,
        Branch::Opt1 => d,
    };
    let mut d_map = AffineSym::zero(block_dim);
    for (k, bmat) in basis.iter().enumerate() {
        let mut term = DMatrix::zeros(block_dim, block_dim);
        term.view_mut((0, 0), (d, d))
            .copy_from(&(bmat * (1.0 - contraction * contraction)));
        if branch == Branch::Opt2 {
            let off = bmat * (-eps * contraction * eta);
            term.view_mut((0, d), (d, d)).copy_from(&off);
            term.view_mut((d, 0), (d, d)).copy_from(&off);
            term.view_mut((d, d), (d, d)).copy_from(&(bmat * (-eps * eta * eta)));
        }
        d_map.push(a_vars.start + k, term);
    }
    {
        let mut nu8_term = DMatrix::zeros(block_dim, block_dim);
        nu8_term.view_mut((0, 0), (d, d)).copy_from(&DMatrix::<f64>::identity(d, d));
        d_map.push(nu8_var, nu8_term);
    }
    if let (Some(nu9), Some(nu10)) = (nu9_var, nu10_var) {
        let mut nu9_term = DMatrix::zeros(block_dim, block_dim);
        nu9_term.view_mut((0, d), (d, d)).copy_from(&DMatrix::<f64>::identity(d, d));
        nu9_term.view_mut((d, 0), (d, d)).copy_from(&DMatrix::<f64>::identity(d, d));
        d_map.push(nu9, nu9_term);
        let mut nu10_term = DMatrix::zeros(block_dim, block_dim);
        nu10_term.view_mut((d, d), (d, d)).copy_from(&DMatrix::<f64>::identity(d, d));
        d_map.push(nu10, nu10_term);
    }

    // p = 1/2 [-ση b + u ; εη b] (second block only for OPT₂).
    let mut p_map = AffineVec::zero(block_dim);
    for k in 0..d {
        let mut b_term = DVector::zeros(block_dim);
        b_term[k] = -sigma * eta / 2.0;
        if branch == Branch::Opt2 {
            b_term[d + k] = eps * eta / 2.0;
        }
        p_map.push(b_vars.start + k, b_term);
        let mut u_term = DVector::zeros(block_dim);
        u_term[k] = 0.5;
        p_map.push(u_vars.start + k, u_term);
    }

    // q(ν); the main-text coefficients.
    let mut q_map = AffineScalar::constant(0.0);
    for g in &groups {
        q_map.push(g.nu1, -1.0);
        q_map.push(g.nu2, 2.0 + inv_sigma);
        q_map.push(g.nu7, 1.0);
        for k in 0..d {
            q_map.push(g.nu4.start + k, inv_sigma);
            q_map.push(g.nu6.start + k, inv_sigma);
        }
    }
    q_map.push(nu8_var, inv_sigma * inv_sigma);
    if let (Some(nu9), Some(nu10)) = (nu9_var, nu10_var) {
        q_map.push(nu9, 2.0);
        q_map.push(nu10, 1.0);
    }

    // Component constraints r_i(ν) + s(z_i, A, b) vs 0, row by row.
    for (i, g) in groups.iter().enumerate() {
        let z = &inst.points[i];
        // First row: the q_i coefficient must collect every constraint that
        // touches q_i. The lower McCormick envelopes (nu3, nu5) carry q_i
        // with weight 1/σ, so they belong here with a positive sign; without
        // them the program has a cost-free ray (grow nu5 to absorb any
        // w-coefficient) and dives unbounded on many instances.
        let mut row = AffineScalar::constant(1.0 / n as f64);
        row.push(g.nu1, 1.0 + inv_sigma);
        row.push(g.nu2, -(1.0 + inv_sigma));
        row.push(g.nu7, -1.0);
        for k in 0..d {
            row.push(g.nu3.start + k, inv_sigma);
            row.push(g.nu4.start + k, -inv_sigma);
            row.push(g.nu5.start + k, inv_sigma);
            row.push(g.nu6.start + k, -inv_sigma);
        }
        for (k, bmat) in basis.iter().enumerate() {
            row.push(a_vars.start + k, (1.0 - eps) * eta * eta * z.dot(&(bmat * z)) / n as f64);
        }
        for k in 0..d {
            row.push(b_vars.start + k, (1.0 - eps) * eta * z[k] / n as f64);
        }
        add_component_row(&mut prog, row, sense);
        // Remaining d rows (the w_i coefficients).
        for j in 0..d {
            let mut row = AffineScalar::constant(-z[j] / n as f64);
            row.push(g.nu3.start + j, 1.0);
            row.push(g.nu4.start + j, 1.0);
            row.push(g.nu5.start + j, -1.0);
            row.push(g.nu6.start + j, -1.0);
            for (k, bmat) in basis.iter().enumerate() {
                let az = bmat * z;
                row.push(
                    a_vars.start + k,
                    2.0 * (1.0 - eps) * eta * contraction * az[j] / n as f64,
                );
            }
            add_component_row(&mut prog, row, sense);
        }
    }

    let t_var = prog.add_matrix_fractional_epigraph(&p_map, &d_map, &q_map);
    prog.elimination_groups = group_vars;
    ClassProgram { program: prog, branch, a_vars, b_vars, t_var, nu8_var }
}

fn add_component_row(prog: &mut ConeProgram, row: AffineScalar, sense: ConstraintSense) {
    match sense {
        ConstraintSense::LessEq => {
            // row <= 0, and our inequalities read expr >= 0.
            let mut neg = AffineScalar::constant(-row.constant);
            for &(v, c) in &row.terms {
                neg.push(v, -c);
            }
            prog.add_ineq(neg);
        }
        ConstraintSense::Eq => prog.add_eq(row),
    }
}

/// Options for [`certify_class_with`].
#[derive(Debug, Clone)]
pub struct ClassCertOptions {
    pub sense: ConstraintSense,
    /// Certificates subsample the dataset to at most this many points
    /// (solver size); the subsample is seeded and deterministic.
    pub n_cap: usize,
    pub subsample_seed: u64,
    pub search: SearchConfig,
}

impl Default for ClassCertOptions {
    fn default() -> Self {
        Self {
            sense: ConstraintSense::LessEq,
            n_cap: 200,
            subsample_seed: 0,
            search: SearchConfig::default(),
        }
    }
}

/// Solve one branch, returning the extracted multiplier and solver output.
pub fn solve_branch(
    inst: &ClassInstance,
    branch: Branch,
    sense: ConstraintSense,
    tol: f64,
) -> Result<(DMatrix<f64>, DVector<f64>, Solution)> {
    let built = match branch {
        Branch::Opt1 => build_opt1(inst, sense),
        Branch::Opt2 => build_opt2(inst, sense),
    };
    let sol = solve(&built.program, tol)?;
    if sol.status == Status::Infeasible || sol.status == Status::Unbounded {
        return Err(Error::SolverFailed {
            status: sol.status,
            detail: format!("{branch:?} should be feasible (large nu8 with A = alpha I works)"),
        });
    }
    let d = inst.dim();
    let coords: Vec<f64> = built.a_vars.clone().map(|v| sol.x[v]).collect();
    let a = sym_from_coords(&coords, d);
    let b = DVector::from_iterator(d, built.b_vars.clone().map(|v| sol.x[v]));
    Ok((a, b, sol))
}

/// Solve both branches, take the max, then verify the winning multiplier
/// against the exact Lagrangian (true indicators) over Θ × 𝒜. The verified
/// value is the certificate of record.
pub fn certify_class(inst: &ClassInstance, tol: f64) -> Result<CertificateResult> {
    certify_class_with(inst, tol, &ClassCertOptions::default())
}

pub fn certify_class_with(
    inst: &ClassInstance,
    tol: f64,
    opts: &ClassCertOptions,
) -> Result<CertificateResult> {
    let capped = subsample(inst, opts.n_cap, opts.subsample_seed);
    let (r1, r2) = rayon::join(
        || solve_branch(&capped, Branch::Opt1, opts.sense, tol),
        || solve_branch(&capped, Branch::Opt2, opts.sense, tol),
    );
    let (a1, b1, s1) = r1?;
    let (a2, b2, s2) = r2?;
    let (winner, a, b, sol, other) = if s1.objective_value >= s2.objective_value {
        ("opt1", a1, b1, s1, s2.objective_value)
    } else {
        ("opt2", a2, b2, s2, s1.objective_value)
    };

    let lambda = QuadraticMultiplier::new(crate::linalg::symmetrize(&a), b.clone())?;
    let verified = verify_certificate(
        &lambda,
        &capped.rule()?,
        &capped.stream()?,
        &capped.objective(),
        &capped.theta_domain(),
        &capped.adversary_set(),
        &opts.search,
    );

    let mut params = BTreeMap::new();
    params.insert("d".into(), capped.dim() as f64);
    params.insert("n".into(), capped.n_points() as f64);
    params.insert("eta".into(), capped.eta);
    params.insert("sigma".into(), capped.sigma);
    params.insert("epsilon".into(), capped.epsilon);
    let mut extra = BTreeMap::new();
    extra.insert("losing_branch_bound".into(), other);
    extra.insert("winning_branch".into(), if winner == "opt1" { 1.0 } else { 2.0 });

    Ok(CertificateResult {
        kind: "classification".into(),
        solver_bound: sol.objective_value,
        verified_bound: verified.bound,
        solver_status: sol.status,
        solver_gap: sol.gap,
        solver_iterations: sol.iterations,
        dual_a: matrix_to_rows(&lambda.matrix().clone()),
        dual_b: b.iter().copied().collect(),
        dual_extra: extra,
        verifier_converged: verified.converged,
        params,
    })
}

fn subsample(inst: &ClassInstance, cap: usize, seed: u64) -> ClassInstance {
    if inst.n_points() <= cap {
        return inst.clone();
    }
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut idx: Vec<usize> = (0..inst.n_points()).collect();
    idx.shuffle(&mut rng);
    idx.truncate(cap);
    idx.sort_unstable();
    let points: Vec<_> = idx.iter().map(|&i| inst.points[i].clone()).collect();
    ClassInstance {
        points,
        eta: inst.eta,
        sigma: inst.sigma,
        epsilon: inst.epsilon,
        targets: inst.targets.clone(),
    }
}

/// Result of the brute-force oracle.
#[derive(Debug, Clone)]
pub struct BruteForceResult {
    pub value: f64,
    pub argmax_theta: DVector<f64>,
    pub argmax_z: DVector<f64>,
    /// Set when the grid is too coarse (< 20 points per axis) to trust.
    pub coarse_warning: bool,
}

/// Exhaustive maximization of the pre-relaxation objective at a fixed
/// multiplier (A, b): grids θ over the 1/σ ball and z_adv over the unit
/// ball, enumerates the integer indicator vector q ∈ {0,1}^N subject to the
/// consistency constraints. Serves as the relaxation-soundness oracle.
///
/// Scales as 2^N · resolution²; restricted to d ≤ 2, N ≤ 8.
pub fn brute_force_inner_sup(
    inst: &ClassInstance,
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    resolution: usize,
) -> BruteForceResult {
    let d = inst.dim();
    let n = inst.n_points();
    assert!(d <= 2, "brute force is restricted to d <= 2");
    assert!(n <= 8, "brute force is restricted to N <= 8");
    assert!(resolution >= 2);
    assert_eq!(
        inst.points.len(),
        inst.targets.len(),
        "the enumeration reuses the update indicators for the hinge objective"
    );
    let eta = inst.eta;
    let sigma = inst.sigma;
    let eps = inst.epsilon;
    let contraction = 1.0 - sigma * eta;
    let inv_sigma = 1.0 / sigma;

    let ball_grid = |radius: f64| -> Vec<DVector<f64>> {
        let mut pts = Vec::new();
        match d {
            1 => {
                for i in 0..resolution {
                    let x = -radius + 2.0 * radius * i as f64 / (resolution - 1) as f64;
                    pts.push(DVector::from_vec(vec![x]));
                }
            }
            _ => {
                for i in 0..resolution {
                    for j in 0..resolution {
                        let x = -radius + 2.0 * radius * i as f64 / (resolution - 1) as f64;
                        let y = -radius + 2.0 * radius * j as f64 / (resolution - 1) as f64;
                        let mut p = DVector::from_vec(vec![x, y]);
                        let nrm = p.norm();
                        if nrm > radius {
                            p *= radius / nrm;
                        }
                        pts.push(p);
                    }
                }
            }
        }
        pts
    };

    let theta_grid = ball_grid(inv_sigma);
    let z_grid = ball_grid(1.0);

    let mut best = f64::NEG_INFINITY;
    let mut best_theta = theta_grid[0].clone();
    let mut best_z = z_grid[0].clone();
    for theta in &theta_grid {
        // Adversarial part: max over the z grid with the true indicator.
        let mut adv_best = 0.0_f64; // z with indicator 0 contributes 0
        let mut adv_arg = z_grid[0].clone();
        let mut adv_found = false;
        for z in &z_grid {
            let v = if theta.dot(z) <= 1.0 {
                eta * eta * z.dot(&(a * z))
                    + 2.0 * eta * contraction * theta.dot(&(a * z))
                    + eta * b.dot(z)
            } else {
                0.0
            };
            if !adv_found || v > adv_best {
                adv_best = v;
                adv_arg = z.clone();
                adv_found = true;
            }
        }
        let base = (contraction * contraction - 1.0) * theta.dot(&(a * theta))
            - sigma * eta * b.dot(theta)
            + eps * adv_best;
        // Per-sample indicator coefficients.
        let coeffs: Vec<f64> = inst
            .points
            .iter()
            .map(|z| {
                (1.0 - eps)
                    * (eta * eta * z.dot(&(a * z))
                        + 2.0 * eta * contraction * theta.dot(&(a * z))
                        + eta * b.dot(z))
                    / n as f64
                    + (1.0 - theta.dot(z)) / n as f64
            })
            .collect();
        let margins: Vec<f64> = inst.points.iter().map(|z| 1.0 - theta.dot(z)).collect();
        // Enumerate q in {0,1}^N with the consistency constraints
        // 1 - θᵀz_i <= (1 + 1/σ) q_i and 1 - θᵀz_i >= -(1 + 1/σ)(1 - q_i).
        'combos: for mask in 0u32..(1u32 << n) {
            let mut val = base;
            for i in 0..n {
                let q = (mask >> i) & 1 == 1;
                if q {
                    if margins[i] < 0.0 {
                        continue 'combos;
                    }
                    val += coeffs[i];
                } else if margins[i] > 0.0 {
                    continue 'combos;
                }
            }
            if val > best {
                best = val;
                best_theta = theta.clone();
                best_z = adv_arg.clone();
            }
        }
    }

    BruteForceResult {
        value: best,
        argmax_theta: best_theta,
        argmax_z: best_z,
        coarse_warning: resolution < 20,
    }
}
