//! Independent verification of a candidate certificate by direct search of
//! the inner supremum.
//!
//! For a quadratic multiplier the map (θ, z_adv) → Lagrangian value has
//! enough structure to solve the z_adv-slice exactly (a ball-constrained
//! quadratic, plus one linear cap for the hinge indicator branch), and for
//! the mean rule the θ-slice too. Those exact slices, a coarse grid at low
//! dimension, and seeded multi-start projected gradient ascent generate
//! candidate points; every candidate is scored through [`lagrangian_value`],
//! so the returned supremum is a true maximum over evaluated probes no
//! matter what the analytic shortcuts do.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{
    lagrangian_value, AdversarialObjective, Ball, BenignSource, ContaminatedStream, LearningRule,
    QuadraticMultiplier, ThetaDomain,
};
use crate::linalg::{
    max_quadratic_on_ball, max_quadratic_on_capped_ball, min_eig, symmetrize,
};

/// Search budget and safety margins for [`verify_certificate`].
#[derive(Debug, Clone)]
pub struct SearchConfig {
    pub restarts: usize,
    pub grid_per_axis: usize,
    /// Grid pass only runs when the parameter dimension is at most this.
    pub max_grid_dim: usize,
    pub ascent_steps: usize,
    pub grad_tol: f64,
    pub seed: u64,
    /// Zoom passes: local grids around the current best θ points, shrinking
    /// each round. Catches maxima between coarse grid lines (the hinge
    /// landscape has structure at scale 1 inside a ball of radius 1/σ).
    pub refine_rounds: usize,
    pub refine_top: usize,
    pub refine_per_axis: usize,
    /// Verified bound = raw sup * (1 + safety_rel) + safety_abs.
    pub safety_rel: f64,
    pub safety_abs: f64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            restarts: 64,
            grid_per_axis: 50,
            max_grid_dim: 3,
            ascent_steps: 120,
            grad_tol: 1e-6,
            seed: 0,
            refine_rounds: 2,
            refine_top: 16,
            refine_per_axis: 9,
            safety_rel: 1e-6,
            safety_abs: 1e-9,
        }
    }
}

/// Outcome of a verification search. `bound` carries the floating-point
/// safety margin and is the certificate of record; `raw_sup` is the best
/// Lagrangian value actually evaluated.
#[derive(Debug, Clone)]
pub struct VerifiedBound {
    pub bound: f64,
    pub raw_sup: f64,
    pub witness_theta: DVector<f64>,
    pub witness_z: DVector<f64>,
    /// False when no probe satisfied the gradient-norm test and no exact
    /// slice solve produced the winner; the value is still a valid max over
    /// probes, just not certified stationary.
    pub converged: bool,
    pub evaluations: usize,
}

struct Candidate {
    theta: DVector<f64>,
    z: DVector<f64>,
    exact: bool,
}

/// Quadratic model of the Lagrangian for the mean rule:
/// value = θᵀ Qtt θ + 2 θᵀ Qtz z + zᵀ Qzz z + qtᵀθ + qzᵀz + const.
struct MeanModel {
    qtt: DMatrix<f64>,
    qtz: DMatrix<f64>,
    qzz: DMatrix<f64>,
    qt: DVector<f64>,
    qz: DVector<f64>,
}

fn mean_model(
    lambda: &QuadraticMultiplier,
    rule: &LearningRule,
    stream: &ContaminatedStream,
    obj: &AdversarialObjective,
) -> Option<MeanModel> {
    let LearningRule::Mean { eta, .. } = rule else { return None };
    let AdversarialObjective::SquaredDistance { mu: mu_obj } = obj else { return None };
    let eta = *eta;
    let eps = stream.epsilon();
    let a = lambda.matrix();
    let b = lambda.vector();
    let d = lambda.dim();
    let benign_mean = match stream.benign() {
        BenignSource::Gaussian { mu, .. } => mu.clone(),
        BenignSource::Empirical { points } => {
            let mut m = DVector::zeros(d);
            for p in points {
                m += p;
            }
            m / points.len() as f64
        }
    };
    let one = DMatrix::identity(d, d);
    let qtt = a * ((1.0 - eta).powi(2) - 1.0) + one;
    let qtz = a * (eps * eta * (1.0 - eta));
    let qzz = a * (eps * eta * eta);
    let qt = a * &benign_mean * (2.0 * (1.0 - eps) * eta * (1.0 - eta)) - b * eta - mu_obj * 2.0;
    let qz = b * (eps * eta);
    Some(MeanModel { qtt, qtz, qzz, qt, qz })
}

/// sup over (θ ∈ domain, z_adv ∈ adv_set) of the Lagrangian value of λ,
/// inflated by the configured safety margin.
pub fn verify_certificate(
    lambda: &QuadraticMultiplier,
    rule: &LearningRule,
    stream: &ContaminatedStream,
    obj: &AdversarialObjective,
    domain: &ThetaDomain,
    adv_set: &Ball,
    search: &SearchConfig,
) -> VerifiedBound {
    let d = lambda.dim();
    assert_eq!(domain.dim(), d, "domain dimension mismatch");
    assert_eq!(adv_set.center.len(), d, "adversarial set dimension mismatch");

    let value = |theta: &DVector<f64>, z: &DVector<f64>| -> f64 {
        lagrangian_value(lambda, theta, z, rule, stream, obj)
    };

    let mut candidates: Vec<Candidate> = Vec::new();

    // Exact joint solve for the mean rule: partial-maximize θ, then a
    // trust-region solve over the adversarial ball.
    let model = mean_model(lambda, rule, stream, obj);
    if let Some(m) = &model {
        if min_eig(&m.qtt) < -1e-12 {
            if let Some(chol) = (-&m.qtt).cholesky() {
                // ψ(z) = max_θ h: Schur complement of the θ block.
                let qtt_inv_qtz = chol.solve(&m.qtz); // (-Qtt)^{-1} Qtz
                let qtt_inv_qt = chol.solve(&m.qt);
                let p_psi = symmetrize(&(&m.qzz + m.qtz.transpose() * &qtt_inv_qtz));
                let q_psi = &m.qz + m.qtz.transpose() * &qtt_inv_qt;
                // Shift to the adversarial ball's local coordinates.
                let c = &adv_set.center;
                let q_local = &q_psi + &p_psi * c * 2.0;
                let best = max_quadratic_on_ball(&p_psi, &q_local, adv_set.radius);
                let z_star = c + best.argmax;
                let theta_star = chol.solve(&(&m.qtz * &z_star + &m.qt * 0.5));
                let inside = match domain {
                    ThetaDomain::Ball(b) => b.contains(&theta_star, 1e-9),
                    ThetaDomain::Box { .. } => {
                        (domain.project(&theta_star) - &theta_star).norm() <= 1e-9
                    }
                };
                candidates.push(Candidate {
                    theta: domain.project(&theta_star),
                    z: z_star,
                    exact: inside,
                });
            }
        }
    }

    // Grid anchors at low dimension, with the z_adv slice solved exactly
    // per grid point.
    if d <= search.max_grid_dim && search.grid_per_axis >= 2 {
        let grid = theta_grid(domain, search.grid_per_axis);
        let mut grid_cands: Vec<Candidate> = grid
            .par_iter()
            .flat_map_iter(|theta| {
                best_z_candidates(lambda, rule, stream, theta, adv_set)
                    .into_iter()
                    .map(|(z, exact)| Candidate { theta: theta.clone(), z, exact })
            })
            .collect();
        candidates.append(&mut grid_cands);
    }

    // Multi-start projected gradient ascent, deterministic per-restart seeds.
    let ascent: Vec<Candidate> = (0..search.restarts)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(search.seed ^ (0x9E3779B97F4A7C15u64.wrapping_mul(k as u64 + 1)));
            let theta0 = sample_domain(domain, &mut rng);
            let z0 = sample_ball(adv_set, &mut rng);
            ascend(lambda, rule, stream, obj, domain, adv_set, theta0, z0, search)
        })
        .collect();
    candidates.extend(ascent);

    // Score every candidate through the one true evaluator.
    let mut evaluations = 0usize;
    let mut scored: Vec<(f64, usize)> = candidates
        .iter()
        .enumerate()
        .map(|(i, c)| (value(&c.theta, &c.z), i))
        .collect();
    evaluations += scored.len();

    // Zoom passes: local grids around the current leaders, shrinking each
    // round, with the z slice solved exactly at every new θ.
    let base_cell = match domain {
        ThetaDomain::Ball(b) => 2.0 * b.radius / (search.grid_per_axis.max(2) - 1) as f64,
        ThetaDomain::Box { lower, upper } => {
            (upper - lower).amax() / (search.grid_per_axis.max(2) - 1) as f64
        }
    };
    let mut halfwidth = base_cell;
    let refine_rounds = if d <= search.max_grid_dim { search.refine_rounds } else { 0 };
    for _ in 0..refine_rounds {
        scored.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
        let leaders: Vec<DVector<f64>> = scored
            .iter()
            .take(search.refine_top)
            .map(|&(_, i)| candidates[i].theta.clone())
            .collect();
        let local: Vec<Candidate> = leaders
            .par_iter()
            .flat_map_iter(|center| {
                let mut out = Vec::new();
                for p in local_grid(center, halfwidth, search.refine_per_axis, domain) {
                    for (z, exact) in best_z_candidates(lambda, rule, stream, &p, adv_set) {
                        out.push(Candidate { theta: p.clone(), z, exact });
                    }
                }
                out
            })
            .collect();
        for c in local {
            let v = value(&c.theta, &c.z);
            candidates.push(c);
            scored.push((v, candidates.len() - 1));
            evaluations += 1;
        }
        halfwidth *= 2.0 / (search.refine_per_axis.max(3) - 1) as f64;
    }

    let (mut raw, mut idx) =
        scored.iter().fold((f64::NEG_INFINITY, 0usize), |acc, &(v, i)| {
            if v > acc.0 {
                (v, i)
            } else {
                acc
            }
        });
    // One exact z-slice refinement at the winning θ.
    for (z, exact) in best_z_candidates(lambda, rule, stream, &candidates[idx].theta, adv_set) {
        let v = value(&candidates[idx].theta, &z);
        evaluations += 1;
        if v > raw {
            raw = v;
            candidates.push(Candidate { theta: candidates[idx].theta.clone(), z, exact });
            idx = candidates.len() - 1;
        }
    }

    let winner = &candidates[idx];
    let converged = winner.exact
        || projected_grad_norm(lambda, rule, stream, obj, domain, adv_set, &winner.theta, &winner.z)
            <= search.grad_tol * (1.0 + raw.abs());
    VerifiedBound {
        bound: raw + raw.abs() * search.safety_rel + search.safety_abs,
        raw_sup: raw,
        witness_theta: winner.theta.clone(),
        witness_z: winner.z.clone(),
        converged,
        evaluations,
    }
}

/// Exact maximizers of the z_adv slice at fixed θ. Returns (z, exact) pairs;
/// for the hinge rule both indicator branches are covered.
fn best_z_candidates(
    lambda: &QuadraticMultiplier,
    rule: &LearningRule,
    stream: &ContaminatedStream,
    theta: &DVector<f64>,
    adv_set: &Ball,
) -> Vec<(DVector<f64>, bool)> {
    let eps = stream.epsilon();
    let a = lambda.matrix();
    let b = lambda.vector();
    let c = &adv_set.center;
    let radius = adv_set.radius;
    let mut out = Vec::new();
    if eps == 0.0 {
        // z_adv is irrelevant; any feasible point will do.
        out.push((c.clone(), true));
        return out;
    }
    match rule {
        LearningRule::Mean { eta, .. } => {
            // ε λ((1-η)θ + η(c+u)): quadratic in u on |u| <= radius.
            let m0 = theta * (1.0 - eta) + c * *eta;
            let p = a * (eps * eta * eta);
            let q = (a * &m0 * 2.0 + b) * (eps * eta);
            let best = max_quadratic_on_ball(&p, &q, radius);
            out.push((c + best.argmax, true));
        }
        LearningRule::Hinge { eta, sigma } => {
            // Active branch: maximize ε λ((1-ση)θ + ηz) over the ball cut by
            // θᵀz <= 1.
            let m0 = theta * (1.0 - sigma * eta) + c * *eta;
            let p = a * (eps * eta * eta);
            let q = (a * &m0 * 2.0 + b) * (eps * eta);
            let cap_ub = 1.0 - theta.dot(c);
            if let Some(best) = max_quadratic_on_capped_ball(&p, &q, radius, theta, cap_ub) {
                out.push((c + best.argmax, true));
            }
            // Inactive branch: any z with θᵀz > 1; reachable iff the ball
            // pokes past the margin.
            let tnorm = theta.norm();
            if tnorm > 0.0 {
                let z0 = c + theta * (radius / tnorm);
                if theta.dot(&z0) > 1.0 + 1e-12 {
                    out.push((z0, true));
                }
            }
        }
    }
    out
}

/// Box grid of `per_axis`^d points centered at a leader, projected into the
/// domain.
fn local_grid(
    center: &DVector<f64>,
    halfwidth: f64,
    per_axis: usize,
    domain: &ThetaDomain,
) -> Vec<DVector<f64>> {
    let d = center.len();
    let per_axis = per_axis.max(3);
    let mut pts = Vec::new();
    let mut index = vec![0usize; d];
    loop {
        let p = DVector::from_iterator(
            d,
            (0..d).map(|i| {
                center[i] - halfwidth + 2.0 * halfwidth * index[i] as f64 / (per_axis - 1) as f64
            }),
        );
        pts.push(domain.project(&p));
        let mut k = 0;
        loop {
            index[k] += 1;
            if index[k] < per_axis {
                break;
            }
            index[k] = 0;
            k += 1;
            if k == d {
                return pts;
            }
        }
    }
}

fn theta_grid(domain: &ThetaDomain, per_axis: usize) -> Vec<DVector<f64>> {
    let d = domain.dim();
    let (lo, hi): (DVector<f64>, DVector<f64>) = match domain {
        ThetaDomain::Ball(b) => (
            b.center.map(|v| v - b.radius) - DVector::zeros(d) * 0.0,
            b.center.map(|v| v + b.radius),
        ),
        ThetaDomain::Box { lower, upper } => (lower.clone(), upper.clone()),
    };
    let mut pts = Vec::new();
    let mut index = vec![0usize; d];
    loop {
        let p = DVector::from_iterator(
            d,
            (0..d).map(|i| lo[i] + (hi[i] - lo[i]) * index[i] as f64 / (per_axis - 1) as f64),
        );
        match domain {
            ThetaDomain::Ball(b) => {
                // Keep interior points; project exterior ones onto the sphere
                // so the boundary is anchored too.
                pts.push(if b.contains(&p, 0.0) { p } else { b.project(&p) });
            }
            ThetaDomain::Box { .. } => pts.push(p),
        }
        // Odometer increment.
        let mut k = 0;
        loop {
            index[k] += 1;
            if index[k] < per_axis {
                break;
            }
            index[k] = 0;
            k += 1;
            if k == d {
                return pts;
            }
        }
    }
}

fn sample_domain(domain: &ThetaDomain, rng: &mut ChaCha8Rng) -> DVector<f64> {
    match domain {
        ThetaDomain::Ball(b) => sample_ball(b, rng),
        ThetaDomain::Box { lower, upper } => DVector::from_iterator(
            lower.len(),
            (0..lower.len()).map(|i| rng.gen_range(lower[i]..=upper[i])),
        ),
    }
}

fn sample_ball(ball: &Ball, rng: &mut ChaCha8Rng) -> DVector<f64> {
    let d = ball.center.len();
    let mut dir = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(rand_distr::StandardNormal));
    let n = dir.norm();
    if n == 0.0 {
        return ball.center.clone();
    }
    dir /= n;
    let u: f64 = rng.gen_range(0.0..1.0);
    &ball.center + dir * (ball.radius * u.powf(1.0 / d as f64))
}

#[allow(clippy::too_many_arguments)]
fn ascend(
    lambda: &QuadraticMultiplier,
    rule: &LearningRule,
    stream: &ContaminatedStream,
    obj: &AdversarialObjective,
    domain: &ThetaDomain,
    adv_set: &Ball,
    mut theta: DVector<f64>,
    mut z: DVector<f64>,
    search: &SearchConfig,
) -> Candidate {
    let mut val = lagrangian_value(lambda, &theta, &z, rule, stream, obj);
    let scale = match domain {
        ThetaDomain::Ball(b) => b.radius.max(adv_set.radius),
        ThetaDomain::Box { lower, upper } => (upper - lower).amax().max(adv_set.radius),
    };
    let mut step = 0.1 * scale.max(1e-6);
    for _ in 0..search.ascent_steps {
        let (gt, gz) = gradients(lambda, rule, stream, obj, &theta, &z);
        let gnorm = (gt.norm_squared() + gz.norm_squared()).sqrt();
        if gnorm <= 1e-14 {
            break;
        }
        let mut improved = false;
        let mut t = step;
        for _ in 0..25 {
            let theta_trial = domain.project(&(&theta + &gt * (t / gnorm)));
            let z_trial = adv_set.project(&(&z + &gz * (t / gnorm)));
            let v = lagrangian_value(lambda, &theta_trial, &z_trial, rule, stream, obj);
            if v > val + 1e-15 {
                theta = theta_trial;
                z = z_trial;
                val = v;
                improved = true;
                step = t * 1.5;
                break;
            }
            t *= 0.5;
        }
        if !improved {
            break;
        }
    }
    Candidate { theta, z, exact: false }
}

fn gradients(
    lambda: &QuadraticMultiplier,
    rule: &LearningRule,
    stream: &ContaminatedStream,
    obj: &AdversarialObjective,
    theta: &DVector<f64>,
    z: &DVector<f64>,
) -> (DVector<f64>, DVector<f64>) {
    let eps = stream.epsilon();
    match rule {
        LearningRule::Mean { eta, .. } => {
            let contraction = 1.0 - eta;
            let adv_next = rule.apply_deterministic(theta, z);
            let mut gt = lambda.gradient(&adv_next) * (eps * contraction);
            match stream.benign() {
                BenignSource::Gaussian { mu, .. } => {
                    gt += lambda.gradient(&rule.apply_deterministic(theta, mu))
                        * ((1.0 - eps) * contraction);
                }
                BenignSource::Empirical { points } => {
                    let mut acc = DVector::zeros(theta.len());
                    for p in points {
                        acc += lambda.gradient(&rule.apply_deterministic(theta, p));
                    }
                    gt += acc * ((1.0 - eps) * contraction / points.len() as f64);
                }
            }
            gt += obj.subgradient(theta) - lambda.gradient(theta);
            let gz = lambda.gradient(&adv_next) * (eps * eta);
            (gt, gz)
        }
        LearningRule::Hinge { eta, sigma } => {
            let contraction = 1.0 - sigma * eta;
            let adv_next = rule.apply_deterministic(theta, z);
            let mut gt = lambda.gradient(&adv_next) * (eps * contraction);
            let BenignSource::Empirical { points } = stream.benign() else {
                panic!("hinge rule requires an empirical benign source");
            };
            let mut acc = DVector::zeros(theta.len());
            for p in points {
                acc += lambda.gradient(&rule.apply_deterministic(theta, p));
            }
            gt += acc * ((1.0 - eps) * contraction / points.len() as f64);
            gt += obj.subgradient(theta) - lambda.gradient(theta);
            let gz = if theta.dot(z) <= 1.0 {
                lambda.gradient(&adv_next) * (eps * eta)
            } else {
                DVector::zeros(z.len())
            };
            (gt, gz)
        }
    }
}

/// Norm of the projected ascent direction at a point (small means KKT-ish).
#[allow(clippy::too_many_arguments)]
fn projected_grad_norm(
    lambda: &QuadraticMultiplier,
    rule: &LearningRule,
    stream: &ContaminatedStream,
    obj: &AdversarialObjective,
    domain: &ThetaDomain,
    adv_set: &Ball,
    theta: &DVector<f64>,
    z: &DVector<f64>,
) -> f64 {
    let (gt, gz) = gradients(lambda, rule, stream, obj, theta, z);
    let t = 1e-6;
    let theta_step = domain.project(&(theta + &gt * t));
    let z_step = adv_set.project(&(z + &gz * t));
    (((&theta_step - theta) / t).norm_squared() + ((&z_step - z) / t).norm_squared()).sqrt()
}
