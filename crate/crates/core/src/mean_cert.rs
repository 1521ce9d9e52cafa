//! Certificate for online mean estimation under ε-contamination.
//!
//! The learner runs θ' = (1-η)θ + ηz + ηBw with defense covariance S = BBᵀ;
//! the adversary picks points in the ball ‖z_adv − μ‖² ≤ r and wants to
//! maximize the stationary average of ‖μ − θ‖². For a quadratic multiplier
//! λ(θ) = θᵀAθ + θᵀb and constraint multiplier ν the inner supremum has the
//! closed dual form [`eval_g`]; minimizing it over (A, b, ν) is a
//! matrix-fractional program solved through the cone-program epigraph.
//! The reported certificate is always the independently re-verified bound.

use nalgebra::{DMatrix, DVector};
use std::collections::BTreeMap;

use crate::certcore::{
    matrix_to_rows, verify_certificate, AdversarialObjective, Ball, CertificateResult,
    ContaminatedStream, LearningRule, QuadraticMultiplier, SearchConfig, ThetaDomain,
};
use crate::linalg::{asymmetry, is_psd, psd_inv_quad_form, sym_basis, trace_product_of};
use crate::sdp::{solve, AffineScalar, AffineSym, AffineVec, ConeProgram, Status};
use crate::{Error, Result};

/// One mean-estimation problem instance.
#[derive(Debug, Clone)]
pub struct MeanInstance {
    pub mu: DVector<f64>,
    pub sigma: DMatrix<f64>,
    pub eta: f64,
    pub s: DMatrix<f64>,
    pub epsilon: f64,
    pub r: f64,
}

impl MeanInstance {
    pub fn new(
        mu: DVector<f64>,
        sigma: DMatrix<f64>,
        eta: f64,
        s: DMatrix<f64>,
        epsilon: f64,
        r: f64,
    ) -> Result<Self> {
        let d = mu.len();
        if sigma.nrows() != d || sigma.ncols() != d || s.nrows() != d || s.ncols() != d {
            return Err(Error::InvalidInput("mean instance dimension mismatch".into()));
        }
        if asymmetry(&sigma) > 1e-9 || !is_psd(&sigma, 1e-9) {
            return Err(Error::InvalidInput("Sigma must be symmetric PSD".into()));
        }
        if asymmetry(&s) > 1e-9 || !is_psd(&s, 1e-9) {
            return Err(Error::InvalidInput("S must be symmetric PSD".into()));
        }
        if !(eta > 0.0 && eta < 1.0) {
            return Err(Error::InvalidInput(format!("eta must be in (0,1), got {eta}")));
        }
        if !(0.0..=1.0).contains(&epsilon) {
            return Err(Error::InvalidInput(format!("epsilon {epsilon} outside [0,1]")));
        }
        if r <= 0.0 {
            return Err(Error::InvalidInput("adversary budget r must be positive".into()));
        }
        Ok(Self { mu, sigma, eta, s, epsilon, r })
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub fn rule(&self) -> Result<LearningRule> {
        LearningRule::mean(self.eta, self.s.clone())
    }

    pub fn stream(&self) -> Result<ContaminatedStream> {
        ContaminatedStream::gaussian(self.epsilon, self.mu.clone(), self.sigma.clone())
    }

    pub fn objective(&self) -> AdversarialObjective {
        AdversarialObjective::SquaredDistance { mu: self.mu.clone() }
    }

    /// Admissible adversarial set ‖z − μ‖₂ ≤ √r.
    pub fn adversary_set(&self) -> Ball {
        Ball::new(self.mu.clone(), self.r.sqrt())
    }

    /// Default compact domain for the verifier's θ supremum: the learner's
    /// iterates concentrate near μ, so a generous multiple covers them.
    pub fn default_domain_radius(&self) -> f64 {
        10.0 * (self.mu.norm() + self.r.sqrt())
    }
}

/// Dual point (A, b, ν) of the mean certificate.
#[derive(Debug, Clone)]
pub struct MeanDualPoint {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub nu: f64,
}

/// The Hessian block D(A, ν) of the dual function.
///
/// The multiplier ν tames the adversarial quadratic, so it enters the
/// lower-right block with a positive sign: ν increasing must move D into
/// the cone or the ε = 0 case would have no feasible point at all. The
/// worked 1-d example (A=2, ν=0.1 at η=0.5 giving D = diag(0.5, 0.1)) pins
/// this convention.
pub fn dual_hessian(a: &DMatrix<f64>, nu: f64, inst: &MeanInstance) -> DMatrix<f64> {
    let d = inst.dim();
    let eta = inst.eta;
    let eps = inst.epsilon;
    let mut out = DMatrix::zeros(2 * d, 2 * d);
    let top = a * (1.0 - (1.0 - eta).powi(2)) - DMatrix::<f64>::identity(d, d);
    let off = a * (-eta * eps * (1.0 - eta));
    let bot = a * (-eps * eta * eta) + DMatrix::<f64>::identity(d, d) * nu;
    out.view_mut((0, 0), (d, d)).copy_from(&top);
    out.view_mut((0, d), (d, d)).copy_from(&off);
    out.view_mut((d, 0), (d, d)).copy_from(&off);
    out.view_mut((d, d), (d, d)).copy_from(&bot);
    out
}

/// Linear-term vector of the dual function (the `c` whose quarter
/// D⁻¹-weighted norm appears in the objective).
pub fn dual_linear_term(dual: &MeanDualPoint, inst: &MeanInstance) -> DVector<f64> {
    let d = inst.dim();
    let eta = inst.eta;
    let eps = inst.epsilon;
    let mut c = DVector::zeros(2 * d);
    let top = &dual.a * &inst.mu * (2.0 * (1.0 - eps) * eta * (1.0 - eta))
        - &inst.mu * 2.0
        - &dual.b * eta;
    let bot = &dual.b * (eps * eta) + &inst.mu * (2.0 * dual.nu);
    c.rows_mut(0, d).copy_from(&top);
    c.rows_mut(d, d).copy_from(&bot);
    c
}

/// The affine (non-fractional) part of the dual objective.
fn affine_terms(dual: &MeanDualPoint, inst: &MeanInstance) -> f64 {
    let eta = inst.eta;
    let eps = inst.epsilon;
    let mu = &inst.mu;
    (1.0 - eps)
        * (eta * eta * trace_product_of(&inst.sigma, &dual.a)
            + eta * eta * mu.dot(&(&dual.a * mu))
            + eta * dual.b.dot(mu))
        + mu.dot(mu)
        + eta * eta * trace_product_of(&dual.a, &inst.s)
        + dual.nu * (inst.r - mu.dot(mu))
}

/// Dual objective g(A, b, ν): +∞ when ν < 0, D is not PSD, or the linear
/// term leaves range(D) (infeasible multiplier for the minimization).
pub fn eval_g(dual: &MeanDualPoint, inst: &MeanInstance) -> f64 {
    if dual.nu < 0.0 {
        return f64::INFINITY;
    }
    let d_mat = dual_hessian(&dual.a, dual.nu, inst);
    if !is_psd(&d_mat, 1e-9) {
        return f64::INFINITY;
    }
    let c = dual_linear_term(dual, inst);
    match psd_inv_quad_form(&d_mat, &c, 1e-10) {
        Some(q) => 0.25 * q + affine_terms(dual, inst),
        None => f64::INFINITY,
    }
}

/// Loss at stationarity of the benign dynamics: η² Tr(S).
pub fn benign_loss(eta: f64, s: &DMatrix<f64>) -> f64 {
    assert!(is_psd(s, 1e-9), "benign_loss needs a PSD defense covariance");
    eta * eta * s.trace()
}

/// Variable layout of the mean certificate cone program.
pub struct MeanProgram {
    pub program: ConeProgram,
    pub a_vars: std::ops::Range<usize>,
    pub b_vars: std::ops::Range<usize>,
    pub nu_var: usize,
    pub t_var: usize,
}

/// Build the epigraph program: minimize t with the Schur block
/// [[D(A,ν), c/2], [c/2ᵀ, t − q(A,b,ν)]] ⪰ 0 and ν ≥ 0.
pub fn build_mean_program(inst: &MeanInstance) -> MeanProgram {
    let d = inst.dim();
    let eta = inst.eta;
    let eps = inst.epsilon;
    let mu = &inst.mu;
    let basis = sym_basis(d);

    let mut prog = ConeProgram::new();
    let a_vars = prog.add_vars(basis.len());
    let b_vars = prog.add_vars(d);
    let nu_var = prog.add_var();
    prog.add_nonneg(nu_var);

    // D block as an affine map of (A coordinates, nu).
    let mut d_map = AffineSym::zero(2 * d);
    {
        let mut constant = DMatrix::zeros(2 * d, 2 * d);
        constant.view_mut((0, 0), (d, d)).copy_from(&(-DMatrix::<f64>::identity(d, d)));
        d_map.constant = constant;
        for (k, bmat) in basis.iter().enumerate() {
            let mut term = DMatrix::zeros(2 * d, 2 * d);
            term.view_mut((0, 0), (d, d)).copy_from(&(bmat * (1.0 - (1.0 - eta).powi(2))));
            let off = bmat * (-eta * eps * (1.0 - eta));
            term.view_mut((0, d), (d, d)).copy_from(&off);
            term.view_mut((d, 0), (d, d)).copy_from(&off);
            term.view_mut((d, d), (d, d)).copy_from(&(bmat * (-eps * eta * eta)));
            d_map.push(a_vars.start + k, term);
        }
        let mut nu_term = DMatrix::zeros(2 * d, 2 * d);
        nu_term.view_mut((d, d), (d, d)).copy_from(&DMatrix::<f64>::identity(d, d));
        d_map.push(nu_var, nu_term);
    }

    // p = c/2.
    let mut p_map = AffineVec::zero(2 * d);
    {
        let mut constant = DVector::zeros(2 * d);
        constant.rows_mut(0, d).copy_from(&(-mu.clone()));
        p_map.constant = constant;
        for (k, bmat) in basis.iter().enumerate() {
            let mut term = DVector::zeros(2 * d);
            term.rows_mut(0, d).copy_from(&(bmat * mu * ((1.0 - eps) * eta * (1.0 - eta))));
            p_map.push(a_vars.start + k, term);
        }
        for k in 0..d {
            let mut term = DVector::zeros(2 * d);
            term[k] = -eta / 2.0;
            term[d + k] = eps * eta / 2.0;
            p_map.push(b_vars.start + k, term);
        }
        let mut nu_term = DVector::zeros(2 * d);
        nu_term.rows_mut(d, d).copy_from(mu);
        p_map.push(nu_var, nu_term);
    }

    // q = the affine terms.
    let mut q_map = AffineScalar::constant(mu.dot(mu));
    for (k, bmat) in basis.iter().enumerate() {
        let coeff = (1.0 - eps)
            * (eta * eta * trace_product_of(&inst.sigma, bmat) + eta * eta * mu.dot(&(bmat * mu)))
            + eta * eta * trace_product_of(bmat, &inst.s);
        q_map.push(a_vars.start + k, coeff);
    }
    for k in 0..d {
        q_map.push(b_vars.start + k, (1.0 - eps) * eta * mu[k]);
    }
    q_map.push(nu_var, inst.r - mu.dot(mu));

    let t_var = prog.add_matrix_fractional_epigraph(&p_map, &d_map, &q_map);
    MeanProgram { program: prog, a_vars, b_vars, nu_var, t_var }
}

/// Solve the dual program, returning the optimal dual point and solver data.
pub fn solve_mean_dual(
    inst: &MeanInstance,
    tol: f64,
) -> Result<(MeanDualPoint, crate::sdp::Solution)> {
    let built = build_mean_program(inst);
    let sol = solve(&built.program, tol)?;
    if sol.status == Status::Infeasible || sol.status == Status::Unbounded {
        return Err(Error::SolverFailed {
            status: sol.status,
            detail: "mean certificate program should always be feasible".into(),
        });
    }
    let d = inst.dim();
    let coords: Vec<f64> = built.a_vars.clone().map(|v| sol.x[v]).collect();
    let a = crate::linalg::sym_from_coords(&coords, d);
    let b = DVector::from_iterator(d, built.b_vars.clone().map(|v| sol.x[v]));
    let nu = sol.x[built.nu_var].max(0.0);
    Ok((MeanDualPoint { a, b, nu }, sol))
}

/// Options for [`certify_mean_with`].
#[derive(Debug, Clone, Default)]
pub struct MeanCertOptions {
    /// Override the default θ-domain radius for verification.
    pub domain_radius: Option<f64>,
    pub search: SearchConfig,
}

/// Solve the certificate program and independently verify the resulting
/// multiplier. The verified bound is the certificate of record.
pub fn certify_mean(inst: &MeanInstance, tol: f64) -> Result<CertificateResult> {
    certify_mean_with(inst, tol, &MeanCertOptions::default())
}

pub fn certify_mean_with(
    inst: &MeanInstance,
    tol: f64,
    opts: &MeanCertOptions,
) -> Result<CertificateResult> {
    let (dual, sol) = solve_mean_dual(inst, tol)?;
    let lambda = QuadraticMultiplier::new(dual.a.clone(), dual.b.clone())?;
    let radius = opts.domain_radius.unwrap_or_else(|| inst.default_domain_radius());
    let domain = ThetaDomain::Ball(Ball::new(inst.mu.clone(), radius));
    let verified = verify_certificate(
        &lambda,
        &inst.rule()?,
        &inst.stream()?,
        &inst.objective(),
        &domain,
        &inst.adversary_set(),
        &opts.search,
    );

    let mut params = BTreeMap::new();
    params.insert("d".into(), inst.dim() as f64);
    params.insert("eta".into(), inst.eta);
    params.insert("epsilon".into(), inst.epsilon);
    params.insert("r".into(), inst.r);
    params.insert("trace_s".into(), inst.s.trace());
    params.insert("domain_radius".into(), radius);
    let mut extra = BTreeMap::new();
    extra.insert("nu".into(), dual.nu);

    Ok(CertificateResult {
        kind: "mean".into(),
        solver_bound: sol.objective_value,
        verified_bound: verified.bound,
        solver_status: sol.status,
        solver_gap: sol.gap,
        solver_iterations: sol.iterations,
        dual_a: matrix_to_rows(&dual.a),
        dual_b: dual.b.iter().copied().collect(),
        dual_extra: extra,
        verifier_converged: verified.converged,
        params,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn dvec(v: &[f64]) -> DVector<f64> {
        DVector::from_vec(v.to_vec())
    }

    fn random_instance(rng: &mut StdRng, d: usize) -> MeanInstance {
        let mu = DVector::from_fn(d, |_, _| rng.gen_range(-1.0..1.0));
        let w = DMatrix::from_fn(d, d, |_, _| rng.gen_range(-0.5..0.5));
        let sigma = &w * w.transpose();
        let v = DMatrix::from_fn(d, d, |_, _| rng.gen_range(-0.4..0.4));
        let s = &v * v.transpose();
        MeanInstance::new(
            mu,
            sigma,
            rng.gen_range(0.15..0.85),
            s,
            rng.gen_range(0.0..0.25),
            rng.gen_range(0.3..2.0),
        )
        .unwrap()
    }

    #[test]
    fn all_zero_dual_is_infeasible() {
        let inst = MeanInstance::new(
            dvec(&[0.0]),
            DMatrix::identity(1, 1),
            0.5,
            DMatrix::zeros(1, 1),
            0.1,
            1.0,
        )
        .unwrap();
        let dual = MeanDualPoint { a: DMatrix::zeros(1, 1), b: dvec(&[0.0]), nu: 0.0 };
        // D = [[-1, 0], [0, 0]] is not PSD.
        assert_eq!(eval_g(&dual, &inst), f64::INFINITY);
    }

    #[test]
    fn hand_substituted_value() {
        // d=1, mu=0, Sigma=1, eta=0.5, S=0, eps=0, r=1, dual (A=2, b=0, nu=0.1):
        // D = [[0.5, 0], [0, 0.1]], linear term 0, g = 0.25*1*2 + 0.1*1 = 0.6.
        let inst = MeanInstance::new(
            dvec(&[0.0]),
            DMatrix::identity(1, 1),
            0.5,
            DMatrix::zeros(1, 1),
            0.0,
            1.0,
        )
        .unwrap();
        let dual = MeanDualPoint { a: DMatrix::identity(1, 1) * 2.0, b: dvec(&[0.0]), nu: 0.1 };
        let d_mat = dual_hessian(&dual.a, dual.nu, &inst);
        assert_relative_eq!(d_mat[(0, 0)], 0.5, epsilon = 1e-12);
        assert_relative_eq!(d_mat[(1, 1)], 0.1, epsilon = 1e-12);
        assert_relative_eq!(eval_g(&dual, &inst), 0.6, epsilon = 1e-9);
    }

    #[test]
    fn eval_g_dominates_verified_bound() {
        // g is the dual value of the inner supremum, so it upper-bounds the
        // verifier's search value for the same (A, b).
        let mut rng = StdRng::seed_from_u64(21);
        let mut checked = 0;
        for _ in 0..40 {
            let d = rng.gen_range(1..3usize);
            let inst = random_instance(&mut rng, d);
            // Feasible-ish dual: the theta block is concave once A clears
            // I / (1 - (1-eta)^2).
            let lift = 1.0 / (1.0 - (1.0 - inst.eta).powi(2));
            let w = DMatrix::from_fn(d, d, |_, _| rng.gen_range(-0.3..0.3));
            let a =
                DMatrix::identity(d, d) * (lift * rng.gen_range(1.05..2.0)) + &w * w.transpose();
            let b = DVector::from_fn(d, |_, _| rng.gen_range(-1.0..1.0));
            let nu = inst.epsilon
                * inst.eta
                * inst.eta
                * crate::linalg::sym_eigenvalues(&a).max()
                + rng.gen_range(0.05..0.5);
            let dual = MeanDualPoint { a: a.clone(), b: b.clone(), nu };
            let g = eval_g(&dual, &inst);
            if !g.is_finite() {
                continue;
            }
            checked += 1;
            let lambda = QuadraticMultiplier::new(a, b).unwrap();
            let domain =
                ThetaDomain::Ball(Ball::new(inst.mu.clone(), inst.default_domain_radius()));
            let verified = verify_certificate(
                &lambda,
                &inst.rule().unwrap(),
                &inst.stream().unwrap(),
                &inst.objective(),
                &domain,
                &inst.adversary_set(),
                &SearchConfig { restarts: 16, grid_per_axis: 15, ..Default::default() },
            );
            assert!(
                g >= verified.raw_sup - 1e-7 * (1.0 + g.abs()),
                "g {g} < verified sup {}",
                verified.raw_sup
            );
        }
        assert!(checked >= 15, "too few feasible duals sampled ({checked})");
    }

    #[test]
    fn contraction_instance_has_tiny_certificate() {
        // eps=0, S=0, Sigma=0, eta=0.9: dynamics contract to mu exactly.
        let inst = MeanInstance::new(
            dvec(&[3.0]),
            DMatrix::zeros(1, 1),
            0.9,
            DMatrix::zeros(1, 1),
            0.0,
            1.0,
        )
        .unwrap();
        let cert = certify_mean(&inst, 1e-6).unwrap();
        assert!(cert.verified_bound >= 0.0);
        assert!(cert.verified_bound <= 0.01, "certificate {}", cert.verified_bound);
        // Discretized-MDP oracle agrees the optimal gain is ~0.
        let mdp = crate::certcore::DiscretizedMdp::mean_1d(
            0.9, 0.0, 3.0, 0.0, 0.0, 1.0, 1.0, 5.0, 81, 5,
        )
        .unwrap();
        let gain = crate::certcore::solve_discretized_mdp(&mdp, 1e-8).unwrap();
        // The 1e-6 ergodicity mixing teleports mass across the grid, so the
        // zero-gain chain picks up ~ mixing * mean reward ~ 3e-6.
        assert!(gain.gain.abs() < 1e-5, "gain {}", gain.gain);
        assert!(cert.verified_bound >= gain.gain - 1e-5);
    }

    #[test]
    fn doubling_budget_never_shrinks_solver_bound() {
        let mut rng = StdRng::seed_from_u64(5);
        for _ in 0..10 {
            let d = rng.gen_range(1..3usize);
            let inst = random_instance(&mut rng, d);
            let mut bigger = inst.clone();
            bigger.r = inst.r * 2.0;
            let a = solve_mean_dual(&inst, 1e-7).unwrap().1.objective_value;
            let b = solve_mean_dual(&bigger, 1e-7).unwrap().1.objective_value;
            assert!(b >= a - 1e-6 * (1.0 + a.abs()), "r doubled but bound fell: {a} -> {b}");
        }
    }

    #[test]
    fn convexity_probe_on_feasible_duals() {
        let mut rng = StdRng::seed_from_u64(9);
        let mut checked = 0;
        while checked < 10 {
            let d = rng.gen_range(1..3usize);
            let inst = random_instance(&mut rng, d);
            let lift = 1.0 / (1.0 - (1.0 - inst.eta).powi(2));
            let mut sample_dual = |rng: &mut StdRng| {
                let w = DMatrix::from_fn(d, d, |_, _| rng.gen_range(-0.2..0.2));
                let a = DMatrix::identity(d, d) * (lift * rng.gen_range(1.1..1.8))
                    + &w * w.transpose();
                let nu = inst.epsilon
                    * inst.eta
                    * inst.eta
                    * crate::linalg::sym_eigenvalues(&a).max()
                    + rng.gen_range(0.1..0.6);
                MeanDualPoint {
                    a,
                    b: DVector::from_fn(d, |_, _| rng.gen_range(-0.5..0.5)),
                    nu,
                }
            };
            let u = sample_dual(&mut rng);
            let v = sample_dual(&mut rng);
            let gu = eval_g(&u, &inst);
            let gv = eval_g(&v, &inst);
            if !gu.is_finite() || !gv.is_finite() {
                continue;
            }
            checked += 1;
            for &t in &[0.25, 0.5, 0.75] {
                let mix = MeanDualPoint {
                    a: &u.a * t + &v.a * (1.0 - t),
                    b: &u.b * t + &v.b * (1.0 - t),
                    nu: u.nu * t + v.nu * (1.0 - t),
                };
                let gm = eval_g(&mix, &inst);
                assert!(
                    gm <= t * gu + (1.0 - t) * gv + 1e-8 * (1.0 + gu.abs() + gv.abs()),
                    "convexity violated: {gm} > {} at t={t}",
                    t * gu + (1.0 - t) * gv
                );
            }
        }
    }

    #[test]
    fn affine_terms_collinear_in_epsilon() {
        // The non-fractional part of g is affine in epsilon; assert
        // three-point collinearity. The matrix-fractional term moves D and
        // the linear term with epsilon, so the full g is convex in epsilon,
        // not affine.
        let mut rng = StdRng::seed_from_u64(31);
        for _ in 0..10 {
            let d = rng.gen_range(1..4usize);
            let base = random_instance(&mut rng, d);
            let dual = MeanDualPoint {
                a: {
                    let w = DMatrix::from_fn(d, d, |_, _| rng.gen_range(-1.0..1.0));
                    crate::linalg::symmetrize(&w)
                },
                b: DVector::from_fn(d, |_, _| rng.gen_range(-1.0..1.0)),
                nu: rng.gen_range(0.0..1.0),
            };
            let at = |eps: f64| {
                let mut inst = base.clone();
                inst.epsilon = eps;
                affine_terms(&dual, &inst)
            };
            let (g0, g1, g2) = (at(0.1), at(0.3), at(0.5));
            assert!(
                (g1 - 0.5 * (g0 + g2)).abs() <= 1e-9 * (1.0 + g1.abs()),
                "not collinear: {g0} {g1} {g2}"
            );
        }
    }

    #[test]
    fn benign_loss_formula() {
        assert_eq!(benign_loss(0.3, &DMatrix::zeros(2, 2)), 0.0);
        assert_relative_eq!(benign_loss(0.1, &DMatrix::identity(3, 3)), 0.03, epsilon = 1e-12);
        let s = DMatrix::from_diagonal(&dvec(&[1.0, 3.0]));
        assert_relative_eq!(benign_loss(0.5, &s), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn translation_covariance_of_certificate() {
        // Shifting mu leaves the certificate unchanged: the problem is
        // translation-equivariant in (mu, z_adv, theta).
        let mut rng = StdRng::seed_from_u64(17);
        let inst = random_instance(&mut rng, 2);
        let mut shifted = inst.clone();
        shifted.mu = &inst.mu + dvec(&[5.0, -3.0]);
        let c0 = certify_mean(&inst, 1e-7).unwrap();
        let c1 = certify_mean(&shifted, 1e-7).unwrap();
        assert_relative_eq!(c0.solver_bound, c1.solver_bound, max_relative = 1e-5, epsilon = 1e-5);
        assert_relative_eq!(
            c0.verified_bound,
            c1.verified_bound,
            max_relative = 1e-4,
            epsilon = 1e-4
        );
    }
}
