//! Simulation of the poisoned online dynamics and the heuristic attacks
//! used as empirical lower bounds on the optimal dynamic adversary.
//!
//! Each step draws the adversarial branch with probability ε; the policy
//! observes the full current parameter vector, proposes a point, and the
//! point is projected onto the admissible set before the update fires.
//! Trajectories are bitwise reproducible for a fixed seed.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::certcore::{
    AdversarialObjective, Ball, BenignSource, ContaminatedStream, LearningRule,
};
use crate::{Error, Result};

/// Dynamic adversary policies.
#[derive(Debug, Clone)]
pub enum AttackPolicy {
    /// Clean stream: the ε-slot receives a fresh benign draw.
    None,
    /// Negate a benign point. `fixed` reuses one point for the whole run
    /// instead of redrawing each poisoned step.
    LabelFlip { fixed: bool },
    /// Random init in the admissible set, one ascent step on the one-step
    /// lookahead loss, project back.
    Fgsm { step: f64 },
    /// Multiple small ascent steps with projection.
    Pgd { steps: usize, step: f64 },
    /// Closed-form one-step best response (mean estimation only).
    GreedyBestResponse,
}

impl AttackPolicy {
    pub fn name(&self) -> &'static str {
        match self {
            AttackPolicy::None => "none",
            AttackPolicy::LabelFlip { .. } => "label_flip",
            AttackPolicy::Fgsm { .. } => "fgsm",
            AttackPolicy::Pgd { .. } => "pgd",
            AttackPolicy::GreedyBestResponse => "greedy",
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            AttackPolicy::Fgsm { step } if *step <= 0.0 => {
                Err(Error::InvalidInput("fgsm step must be positive".into()))
            }
            AttackPolicy::Pgd { steps, step } if *steps < 1 || *step <= 0.0 => {
                Err(Error::InvalidInput("pgd needs steps >= 1 and a positive step".into()))
            }
            _ => Ok(()),
        }
    }
}

/// One simulated run.
#[derive(Debug, Clone)]
pub struct Trajectory {
    /// Recorded parameter iterates (empty unless requested via options).
    pub thetas: Vec<DVector<f64>>,
    /// Time average of ℓ_adv(θ_t) over the post-burn-in steps.
    pub avg_adv_loss: f64,
    /// Time average of the learner's own loss over the same window.
    pub avg_benign_loss: f64,
    /// Time average of θ over the window.
    pub theta_time_avg: DVector<f64>,
    /// Time average of ‖θ‖² over the window (for stationary spread checks).
    pub theta_sq_time_avg: f64,
    pub max_theta_norm: f64,
    pub final_theta: DVector<f64>,
    pub seed: u64,
    pub t_steps: usize,
    pub burn_in: usize,
}

#[derive(Debug, Clone, Default)]
pub struct SimOptions {
    /// Keep every θ_t in the trajectory (memory-heavy; off by default).
    pub record_thetas: bool,
}

/// Run the contaminated online dynamics for `t_steps` steps.
///
/// Averages cover exactly `t_steps - burn_in` states. The policy sees the
/// current θ; its proposal is projected onto `adv_set` so every injected
/// point is feasible.
#[allow(clippy::too_many_arguments)]
pub fn run_online(
    rule: &LearningRule,
    stream: &ContaminatedStream,
    obj: &AdversarialObjective,
    policy: &AttackPolicy,
    adv_set: &Ball,
    t_steps: usize,
    burn_in: usize,
    seed: u64,
    theta0: &DVector<f64>,
) -> Result<Trajectory> {
    run_online_with(
        rule, stream, obj, policy, adv_set, t_steps, burn_in, seed, theta0,
        &SimOptions::default(),
    )
}

#[allow(clippy::too_many_arguments)]
pub fn run_online_with(
    rule: &LearningRule,
    stream: &ContaminatedStream,
    obj: &AdversarialObjective,
    policy: &AttackPolicy,
    adv_set: &Ball,
    t_steps: usize,
    burn_in: usize,
    seed: u64,
    theta0: &DVector<f64>,
    opts: &SimOptions,
) -> Result<Trajectory> {
    if t_steps <= burn_in {
        return Err(Error::InvalidInput("need t_steps > burn_in".into()));
    }
    policy.validate()?;
    let d = theta0.len();
    assert_eq!(stream.dim(), d, "stream dimension mismatch");
    if let LearningRule::Hinge { sigma, .. } = rule {
        if theta0.norm() > 1.0 / sigma + 1e-9 {
            return Err(Error::InvalidInput(
                "hinge rule requires the start inside the 1/sigma ball".into(),
            ));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let eps = stream.epsilon();

    // Fixed-point label flip draws its victim once, up front.
    let fixed_flip: Option<DVector<f64>> = match policy {
        AttackPolicy::LabelFlip { fixed: true } => Some(benign_draw(stream, &mut rng)),
        _ => None,
    };

    let mut theta = theta0.clone();
    let window = (t_steps - burn_in) as f64;
    let mut adv_acc = 0.0;
    let mut benign_acc = 0.0;
    let mut theta_acc = DVector::<f64>::zeros(d);
    let mut theta_sq_acc = 0.0;
    let mut max_norm = theta.norm();
    let mut thetas = Vec::new();
    if opts.record_thetas {
        thetas.reserve(t_steps);
    }

    for t in 0..t_steps {
        if opts.record_thetas {
            thetas.push(theta.clone());
        }
        if t >= burn_in {
            adv_acc += obj.eval(&theta);
            benign_acc += benign_loss_at(rule, stream, &theta);
            theta_acc += &theta;
            theta_sq_acc += theta.norm_squared();
        }

        let z = if eps > 0.0 && rng.gen_range(0.0..1.0) < eps {
            let proposal = match policy {
                AttackPolicy::None => benign_draw(stream, &mut rng),
                AttackPolicy::LabelFlip { fixed } => {
                    let victim = if *fixed {
                        fixed_flip.clone().unwrap()
                    } else {
                        benign_draw(stream, &mut rng)
                    };
                    -victim
                }
                AttackPolicy::Fgsm { step } => {
                    lookahead_ascent(rule, obj, adv_set, &theta, 1, *step, &mut rng)
                }
                AttackPolicy::Pgd { steps, step } => {
                    lookahead_ascent(rule, obj, adv_set, &theta, *steps, *step, &mut rng)
                }
                AttackPolicy::GreedyBestResponse => match rule {
                    LearningRule::Mean { eta, .. } => greedy_best_response_mean(
                        &theta,
                        &adv_set.center,
                        adv_set.radius * adv_set.radius,
                        *eta,
                    ),
                    LearningRule::Hinge { .. } => {
                        return Err(Error::InvalidInput(
                            "greedy best response is defined for the mean rule only".into(),
                        ))
                    }
                },
            };
            if proposal.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite {
                    step: t,
                    detail: format!("policy {} produced a non-finite point", policy.name()),
                });
            }
            let z = adv_set.project(&proposal);
            assert!(adv_set.contains(&z, 1e-9), "projected point left the admissible set");
            z
        } else {
            benign_draw(stream, &mut rng)
        };

        theta = rule.apply_deterministic(&theta, &z);
        if let LearningRule::Mean { eta, s_factor, .. } = rule {
            if s_factor.amax() > 0.0 {
                let w = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
                theta += s_factor * w * *eta;
            }
        }
        if theta.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { step: t, detail: "parameter update diverged".into() });
        }
        max_norm = max_norm.max(theta.norm());
    }

    Ok(Trajectory {
        thetas,
        avg_adv_loss: adv_acc / window,
        avg_benign_loss: benign_acc / window,
        theta_time_avg: theta_acc / window,
        theta_sq_time_avg: theta_sq_acc / window,
        max_theta_norm: max_norm,
        final_theta: theta,
        seed,
        t_steps,
        burn_in,
    })
}

/// Run one trajectory per seed in parallel (each seed is its own RNG).
#[allow(clippy::too_many_arguments)]
pub fn run_seeds(
    rule: &LearningRule,
    stream: &ContaminatedStream,
    obj: &AdversarialObjective,
    policy: &AttackPolicy,
    adv_set: &Ball,
    t_steps: usize,
    burn_in: usize,
    seeds: &[u64],
    theta0: &DVector<f64>,
) -> Result<Vec<Trajectory>> {
    seeds
        .par_iter()
        .map(|&seed| {
            run_online(rule, stream, obj, policy, adv_set, t_steps, burn_in, seed, theta0)
        })
        .collect()
}

/// The learner's own loss at θ: squared error to the benign mean for the
/// mean rule, regularized hinge on the benign sample for the hinge rule.
pub fn benign_loss_at(rule: &LearningRule, stream: &ContaminatedStream, theta: &DVector<f64>) -> f64 {
    match (rule, stream.benign()) {
        (LearningRule::Mean { .. }, BenignSource::Gaussian { mu, .. }) => {
            (mu - theta).norm_squared()
        }
        (LearningRule::Mean { .. }, BenignSource::Empirical { points }) => {
            let mut m = DVector::zeros(theta.len());
            for p in points {
                m += p;
            }
            m /= points.len() as f64;
            (m - theta).norm_squared()
        }
        (LearningRule::Hinge { sigma, .. }, BenignSource::Empirical { points }) => {
            points.iter().map(|z| (1.0 - theta.dot(z)).max(0.0)).sum::<f64>()
                / points.len() as f64
                + 0.5 * sigma * theta.norm_squared()
        }
        (LearningRule::Hinge { .. }, BenignSource::Gaussian { .. }) => {
            panic!("hinge rule requires an empirical benign source")
        }
    }
}

fn benign_draw(stream: &ContaminatedStream, rng: &mut ChaCha8Rng) -> DVector<f64> {
    match stream.benign() {
        BenignSource::Gaussian { mu, sigma_factor, .. } => {
            let w = DVector::from_fn(mu.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
            mu + sigma_factor * w
        }
        BenignSource::Empirical { points } => points[rng.gen_range(0..points.len())].clone(),
    }
}

/// One-step-optimal adversarial point for the mean rule: push the iterate
/// away from μ along its current displacement.
///
/// argmax over ‖z − μ‖² ≤ r of E‖μ − F(θ, z)‖² = μ + √r (θ−μ)/‖θ−μ‖,
/// with the tie at θ = μ broken along the first axis.
pub fn greedy_best_response_mean(
    theta: &DVector<f64>,
    mu: &DVector<f64>,
    r: f64,
    eta: f64,
) -> DVector<f64> {
    assert!(r > 0.0, "adversary budget must be positive");
    debug_assert!(eta > 0.0);
    let offset = theta - mu;
    let n = offset.norm();
    if n == 0.0 {
        let mut e1 = DVector::zeros(mu.len());
        e1[0] = 1.0;
        mu + e1 * r.sqrt()
    } else {
        mu + offset * (r.sqrt() / n)
    }
}

/// Expected one-step-lookahead adversarial loss E[ℓ_adv(F(θ, z))] (the
/// additive defense noise is mean-zero and drops out of comparisons).
pub fn lookahead_loss(
    rule: &LearningRule,
    obj: &AdversarialObjective,
    theta: &DVector<f64>,
    z: &DVector<f64>,
) -> f64 {
    obj.eval(&rule.apply_deterministic(theta, z))
}

fn lookahead_gradient(
    rule: &LearningRule,
    obj: &AdversarialObjective,
    theta: &DVector<f64>,
    z: &DVector<f64>,
) -> DVector<f64> {
    let next = rule.apply_deterministic(theta, z);
    match rule {
        LearningRule::Mean { eta, .. } => obj.subgradient(&next) * *eta,
        LearningRule::Hinge { eta, .. } => {
            if theta.dot(z) <= 1.0 {
                obj.subgradient(&next) * *eta
            } else {
                DVector::zeros(z.len())
            }
        }
    }
}

/// Shared fgsm/pgd body: random init in the admissible set, `steps` ascent
/// steps on the lookahead loss with projection. A zero gradient returns the
/// current (feasible) point.
pub fn lookahead_ascent(
    rule: &LearningRule,
    obj: &AdversarialObjective,
    adv_set: &Ball,
    theta: &DVector<f64>,
    steps: usize,
    step: f64,
    rng: &mut ChaCha8Rng,
) -> DVector<f64> {
    let d = theta.len();
    let mut dir = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
    let n = dir.norm();
    if n > 0.0 {
        let u: f64 = rng.gen_range(0.0..1.0);
        dir *= adv_set.radius * u.powf(1.0 / d as f64) / n;
    }
    let mut z = &adv_set.center + dir;
    for _ in 0..steps {
        let g = lookahead_gradient(rule, obj, theta, &z);
        if g.amax() == 0.0 {
            break;
        }
        z = adv_set.project(&(&z + g * step));
    }
    z
}

/// fgsm: one big ascent step from a random init.
pub fn fgsm_attack(
    rule: &LearningRule,
    obj: &AdversarialObjective,
    adv_set: &Ball,
    theta: &DVector<f64>,
    step: f64,
    rng: &mut ChaCha8Rng,
) -> DVector<f64> {
    lookahead_ascent(rule, obj, adv_set, theta, 1, step, rng)
}

/// pgd: several small ascent steps.
#[allow(clippy::too_many_arguments)]
pub fn pgd_attack(
    rule: &LearningRule,
    obj: &AdversarialObjective,
    adv_set: &Ball,
    theta: &DVector<f64>,
    steps: usize,
    step: f64,
    rng: &mut ChaCha8Rng,
) -> DVector<f64> {
    lookahead_ascent(rule, obj, adv_set, theta, steps, step, rng)
}

/// Negate a benign draw.
pub fn label_flip_attack(stream: &ContaminatedStream, rng: &mut ChaCha8Rng) -> DVector<f64> {
    -benign_draw(stream, rng)
}

/// Mean and standard error of the average adversarial loss across runs with
/// identical configuration.
pub fn estimate_avg_reward(runs: &[Trajectory]) -> Result<(f64, f64)> {
    if runs.len() < 2 {
        return Err(Error::InvalidInput("need at least two runs".into()));
    }
    let (t, b) = (runs[0].t_steps, runs[0].burn_in);
    if runs.iter().any(|r| r.t_steps != t || r.burn_in != b) {
        return Err(Error::InvalidInput("runs have mismatched configurations".into()));
    }
    let n = runs.len() as f64;
    let mean = runs.iter().map(|r| r.avg_adv_loss).sum::<f64>() / n;
    let var =
        runs.iter().map(|r| (r.avg_adv_loss - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok((mean, (var / n).sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn dvec(v: &[f64]) -> DVector<f64> {
        DVector::from_vec(v.to_vec())
    }

    fn mean_setup(
        d: usize,
        eta: f64,
        s_scale: f64,
        sigma_scale: f64,
        eps: f64,
        mu: DVector<f64>,
    ) -> (LearningRule, ContaminatedStream, AdversarialObjective, Ball) {
        let rule = LearningRule::mean(eta, DMatrix::identity(d, d) * s_scale).unwrap();
        let stream =
            ContaminatedStream::gaussian(eps, mu.clone(), DMatrix::identity(d, d) * sigma_scale)
                .unwrap();
        let obj = AdversarialObjective::SquaredDistance { mu: mu.clone() };
        let adv = Ball::new(mu, 1.0);
        (rule, stream, obj, adv)
    }

    #[test]
    fn benign_contraction_reaches_mu() {
        let mu = dvec(&[2.0, -1.0]);
        let (rule, stream, obj, adv) = mean_setup(2, 0.9, 0.0, 0.0, 0.0, mu.clone());
        let theta0 = &mu + dvec(&[1.0, 1.0]);
        let traj = run_online(
            &rule, &stream, &obj, &AttackPolicy::None, &adv, 200, 100, 7, &theta0,
        )
        .unwrap();
        assert!(traj.avg_adv_loss <= 1e-6, "avg {}", traj.avg_adv_loss);
        assert_relative_eq!((traj.final_theta - mu).norm(), 0.0, epsilon = 1e-9);
    }

    #[test]
    fn stationary_mean_matches_mu_across_seeds() {
        let mu = dvec(&[0.8, -0.4]);
        let (rule, stream, obj, adv) = mean_setup(2, 0.3, 0.2, 0.5, 0.0, mu.clone());
        let seeds: Vec<u64> = (0..32).collect();
        let runs = run_seeds(
            &rule, &stream, &obj, &AttackPolicy::None, &adv, 4000, 1000, &seeds, &mu,
        )
        .unwrap();
        for k in 0..2 {
            let vals: Vec<f64> = runs.iter().map(|r| r.theta_time_avg[k]).collect();
            let n = vals.len() as f64;
            let m = vals.iter().sum::<f64>() / n;
            let sd = (vals.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
            let stderr = sd / n.sqrt();
            assert!(
                (m - mu[k]).abs() <= 4.0 * stderr + 1e-6,
                "component {k}: mean {m} vs mu {} (stderr {stderr})",
                mu[k]
            );
        }
    }

    #[test]
    fn hinge_norm_bound_holds() {
        let points = vec![dvec(&[0.9, 0.1]), dvec(&[-0.2, 0.8]), dvec(&[0.3, -0.6])];
        let rule = LearningRule::hinge(0.2, 0.5).unwrap();
        let stream = ContaminatedStream::empirical(0.1, points.clone()).unwrap();
        let obj = AdversarialObjective::HingeOnTarget { targets: points };
        let adv = Ball::unit(2);
        let traj = run_online(
            &rule,
            &stream,
            &obj,
            &AttackPolicy::Pgd { steps: 5, step: 0.3 },
            &adv,
            20_000,
            100,
            3,
            &DVector::zeros(2),
        )
        .unwrap();
        assert!(traj.max_theta_norm <= 1.0 / 0.5 + 1e-9, "max norm {}", traj.max_theta_norm);
    }

    #[test]
    fn greedy_tie_break_and_closed_form() {
        let mu = dvec(&[1.0, 1.0]);
        // Tie-break at theta = mu.
        let z = greedy_best_response_mean(&mu, &mu, 4.0, 0.5);
        assert_relative_eq!((z - (&mu + dvec(&[2.0, 0.0]))).norm(), 0.0, epsilon = 1e-12);
        // theta - mu = (3, 4), r = 1: z = mu + (0.6, 0.8).
        let theta = &mu + dvec(&[3.0, 4.0]);
        let z = greedy_best_response_mean(&theta, &mu, 1.0, 0.5);
        assert_relative_eq!((z - (&mu + dvec(&[0.6, 0.8]))).norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn greedy_beats_sphere_grid_and_random_probes() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mu = dvec(&[0.5, -0.5]);
        let rule = LearningRule::mean(0.35, DMatrix::identity(2, 2) * 0.1).unwrap();
        let r = 1.3_f64;
        for _ in 0..20 {
            let theta = DVector::from_fn(2, |_, _| rng.gen_range(-2.0..2.0));
            let z_star = greedy_best_response_mean(&theta, &mu, r, 0.35);
            let best = |z: &DVector<f64>| {
                // E||mu - F(theta,z)||^2 up to the constant noise term.
                (&mu - rule.apply_deterministic(&theta, z)).norm_squared()
            };
            let star_val = best(&z_star);
            // 10^4-point sphere grid.
            for k in 0..10_000 {
                let ang = 2.0 * std::f64::consts::PI * k as f64 / 10_000.0;
                let z = &mu + dvec(&[ang.cos(), ang.sin()]) * r.sqrt();
                assert!(star_val >= best(&z) - 1e-9);
            }
            // 10^3 random feasible points.
            for _ in 0..1000 {
                let dir = DVector::from_fn(2, |_, _| rng.gen_range(-1.0..1.0));
                let n = dir.norm();
                if n == 0.0 {
                    continue;
                }
                let z = &mu + dir * (r.sqrt() * rng.gen_range(0.0..1.0) / n);
                assert!(star_val >= best(&z) - 1e-9);
            }
        }
    }

    #[test]
    fn pgd_one_step_equals_fgsm() {
        let points = vec![dvec(&[0.9, 0.1]), dvec(&[-0.2, 0.8])];
        let rule = LearningRule::hinge(0.1, 0.3).unwrap();
        let stream = ContaminatedStream::empirical(0.2, points.clone()).unwrap();
        let obj = AdversarialObjective::HingeOnTarget { targets: points };
        let adv = Ball::unit(2);
        let theta0 = DVector::zeros(2);
        let a = run_online(
            &rule, &stream, &obj, &AttackPolicy::Fgsm { step: 0.5 }, &adv, 500, 100, 9, &theta0,
        )
        .unwrap();
        let b = run_online(
            &rule,
            &stream,
            &obj,
            &AttackPolicy::Pgd { steps: 1, step: 0.5 },
            &adv,
            500,
            100,
            9,
            &theta0,
        )
        .unwrap();
        assert_eq!(a.avg_adv_loss.to_bits(), b.avg_adv_loss.to_bits());
        assert_eq!(a.final_theta, b.final_theta);
    }

    #[test]
    fn pgd_mostly_beats_fgsm_on_lookahead() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let points = vec![dvec(&[0.9, 0.1]), dvec(&[-0.4, 0.7]), dvec(&[0.1, -0.9])];
        let rule = LearningRule::hinge(0.3, 0.4).unwrap();
        let obj = AdversarialObjective::HingeOnTarget { targets: points };
        let adv = Ball::unit(2);
        let mut wins = 0;
        let trials = 100;
        for _ in 0..trials {
            let theta = {
                let v = DVector::from_fn(2, |_, _| rng.gen_range(-1.0_f64..1.0));
                let n = v.norm().max(1e-9);
                v * (rng.gen_range(0.0..2.5) / n)
            };
            let mut rng_a = ChaCha8Rng::seed_from_u64(rng.gen());
            let mut rng_b = rng_a.clone();
            let z_fgsm = fgsm_attack(&rule, &obj, &adv, &theta, 1.0, &mut rng_a);
            let z_pgd = pgd_attack(&rule, &obj, &adv, &theta, 20, 0.1, &mut rng_b);
            if lookahead_loss(&rule, &obj, &theta, &z_pgd)
                >= lookahead_loss(&rule, &obj, &theta, &z_fgsm) - 1e-12
            {
                wins += 1;
            }
        }
        assert!(wins >= 90, "pgd won only {wins}/{trials}");
    }

    #[test]
    fn label_flip_negates_single_point() {
        let z1 = dvec(&[0.4, -0.2]);
        let stream = ContaminatedStream::empirical(0.5, vec![z1.clone()]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(label_flip_attack(&stream, &mut rng), -z1);
    }

    #[test]
    fn seed_determinism_is_bitwise() {
        let mu = dvec(&[0.0, 1.0]);
        let (rule, stream, obj, adv) = mean_setup(2, 0.4, 0.3, 0.6, 0.05, mu.clone());
        let a = run_online(
            &rule, &stream, &obj, &AttackPolicy::GreedyBestResponse, &adv, 2000, 500, 42, &mu,
        )
        .unwrap();
        let b = run_online(
            &rule, &stream, &obj, &AttackPolicy::GreedyBestResponse, &adv, 2000, 500, 42, &mu,
        )
        .unwrap();
        assert_eq!(a.avg_adv_loss.to_bits(), b.avg_adv_loss.to_bits());
        assert_eq!(a.final_theta, b.final_theta);
    }

    #[test]
    fn estimate_rejects_mismatched_runs_and_zero_spread() {
        let mu = dvec(&[0.0]);
        let (rule, stream, obj, adv) = mean_setup(1, 0.4, 0.1, 0.3, 0.02, mu.clone());
        let a = run_online(&rule, &stream, &obj, &AttackPolicy::None, &adv, 500, 100, 1, &mu)
            .unwrap();
        let b = run_online(&rule, &stream, &obj, &AttackPolicy::None, &adv, 500, 100, 1, &mu)
            .unwrap();
        let (_, stderr) = estimate_avg_reward(&[a.clone(), b.clone()]).unwrap();
        assert_eq!(stderr, 0.0);
        let c = run_online(&rule, &stream, &obj, &AttackPolicy::None, &adv, 600, 100, 1, &mu)
            .unwrap();
        assert!(estimate_avg_reward(&[a, c]).is_err());
    }

    #[test]
    fn greedy_attack_hurts_more_than_no_attack() {
        let mu = dvec(&[0.3, -0.7]);
        let (rule, stream, obj, adv) = mean_setup(2, 0.3, 0.1, 0.4, 0.05, mu.clone());
        let seeds: Vec<u64> = (0..8).collect();
        let clean = run_seeds(
            &rule, &stream, &obj, &AttackPolicy::None, &adv, 20_000, 4000, &seeds, &mu,
        )
        .unwrap();
        let attacked = run_seeds(
            &rule,
            &stream,
            &obj,
            &AttackPolicy::GreedyBestResponse,
            &adv,
            20_000,
            4000,
            &seeds,
            &mu,
        )
        .unwrap();
        let (m_clean, _) = estimate_avg_reward(&clean).unwrap();
        let (m_attacked, _) = estimate_avg_reward(&attacked).unwrap();
        assert!(m_attacked > m_clean, "greedy {m_attacked} <= clean {m_clean}");
    }

    #[test]
    fn burn_in_insensitivity_on_stationary_instance() {
        let mu = dvec(&[0.0]);
        let (rule, stream, obj, adv) = mean_setup(1, 0.5, 0.2, 0.4, 0.03, mu.clone());
        let seeds: Vec<u64> = (0..8).collect();
        let short = run_seeds(
            &rule, &stream, &obj, &AttackPolicy::GreedyBestResponse, &adv, 30_000, 3000, &seeds,
            &mu,
        )
        .unwrap();
        let long = run_seeds(
            &rule, &stream, &obj, &AttackPolicy::GreedyBestResponse, &adv, 30_000, 6000, &seeds,
            &mu,
        )
        .unwrap();
        let (m1, s1) = estimate_avg_reward(&short).unwrap();
        let (m2, s2) = estimate_avg_reward(&long).unwrap();
        assert!(
            (m1 - m2).abs() < 2.0 * (s1 + s2) + 1e-9,
            "burn-in doubled moved the mean too much: {m1} vs {m2}"
        );
    }
}
