//! Finite-state surrogate of the adversary's Markov decision process, used
//! to validate weak duality end-to-end: the optimal average reward of the
//! discretized chain must stay below the verified dual certificate.

use nalgebra::DVector;

use crate::{Error, Result};

/// Finite MDP over a parameter grid (states) and an adversarial-point grid
/// (actions). Rewards depend on the state only.
#[derive(Debug, Clone)]
pub struct DiscretizedMdp {
    pub theta_grid: Vec<f64>,
    pub action_grid: Vec<f64>,
    /// Row-stochastic transition tensor, indexed `[state][action][next]`,
    /// stored flat as `state * (A * S) + action * S + next`.
    pub transition: Vec<f64>,
    /// Reward per state.
    pub reward: Vec<f64>,
}

/// Result of relative value iteration: the gain estimate and its bracket.
#[derive(Debug, Clone, Copy)]
pub struct GainBracket {
    pub gain: f64,
    pub lower: f64,
    pub upper: f64,
    pub sweeps: usize,
}

impl DiscretizedMdp {
    pub fn n_states(&self) -> usize {
        self.theta_grid.len()
    }

    pub fn n_actions(&self) -> usize {
        self.action_grid.len()
    }

    pub fn validate(&self) -> Result<()> {
        let s = self.n_states();
        let a = self.n_actions();
        if self.transition.len() != s * a * s {
            return Err(Error::InvalidInput("transition tensor size mismatch".into()));
        }
        if self.reward.len() != s || self.reward.iter().any(|r| !r.is_finite()) {
            return Err(Error::InvalidInput("reward must be finite on all states".into()));
        }
        for i in 0..s {
            for k in 0..a {
                let row = &self.transition[i * a * s + k * s..i * a * s + k * s + s];
                let sum: f64 = row.iter().sum();
                if (sum - 1.0).abs() > 1e-9 || row.iter().any(|p| *p < 0.0) {
                    return Err(Error::InvalidInput(format!(
                        "transition row ({i},{k}) sums to {sum}, not 1"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Build the one-dimensional mean-estimation MDP: states discretize θ,
    /// actions discretize the admissible interval `[μ-√r, μ+√r]`, and the
    /// Gaussian transition mass of `θ' = (1-η)θ + ηz + ηB w` is integrated
    /// over the grid cells (outer cells absorb the tails). A `1e-6` uniform
    /// mixing keeps every chain ergodic.
    #[allow(clippy::too_many_arguments)]
    pub fn mean_1d(
        eta: f64,
        s_noise: f64,
        mu: f64,
        sigma_var: f64,
        epsilon: f64,
        r: f64,
        theta_lo: f64,
        theta_hi: f64,
        n_states: usize,
        n_actions: usize,
    ) -> Result<Self> {
        if n_states < 2 || n_actions < 1 {
            return Err(Error::InvalidInput("mean_1d needs >= 2 states and >= 1 action".into()));
        }
        if !(theta_hi > theta_lo) || r <= 0.0 {
            return Err(Error::InvalidInput("bad grid bounds or adversary budget".into()));
        }
        let theta_grid: Vec<f64> = (0..n_states)
            .map(|i| theta_lo + (theta_hi - theta_lo) * i as f64 / (n_states - 1) as f64)
            .collect();
        let half_r = r.sqrt();
        let action_grid: Vec<f64> = if n_actions == 1 {
            vec![mu + half_r]
        } else {
            (0..n_actions)
                .map(|k| mu - half_r + 2.0 * half_r * k as f64 / (n_actions - 1) as f64)
                .collect()
        };
        let reward: Vec<f64> = theta_grid.iter().map(|t| (mu - t) * (mu - t)).collect();

        // Cell boundaries (midpoints between grid nodes; outer cells open).
        let mut bounds = Vec::with_capacity(n_states + 1);
        bounds.push(f64::NEG_INFINITY);
        for i in 0..n_states - 1 {
            bounds.push(0.5 * (theta_grid[i] + theta_grid[i + 1]));
        }
        bounds.push(f64::INFINITY);

        let cell_mass = |mean: f64, var: f64, buf: &mut [f64]| {
            if var <= 1e-300 {
                // Deterministic next state: snap to the nearest grid point.
                buf.iter_mut().for_each(|p| *p = 0.0);
                let mut bi = 0usize;
                let mut bd = f64::INFINITY;
                for (i, t) in theta_grid.iter().enumerate() {
                    let dd = (t - mean).abs();
                    if dd < bd {
                        bd = dd;
                        bi = i;
                    }
                }
                buf[bi] = 1.0;
            } else {
                let sd = var.sqrt();
                let cdf = |x: f64| {
                    if x == f64::INFINITY {
                        1.0
                    } else if x == f64::NEG_INFINITY {
                        0.0
                    } else {
                        0.5 * (1.0 + libm::erf((x - mean) / (sd * std::f64::consts::SQRT_2)))
                    }
                };
                let mut prev = 0.0;
                for (i, item) in buf.iter_mut().enumerate() {
                    let next = cdf(bounds[i + 1]);
                    *item = (next - prev).max(0.0);
                    prev = next;
                }
            }
        };

        let s = n_states;
        let a = action_grid.len();
        let mut transition = vec![0.0; s * a * s];
        let mut adv_buf = vec![0.0; s];
        let mut ben_buf = vec![0.0; s];
        let mix = 1e-6;
        for (i, &theta) in theta_grid.iter().enumerate() {
            let drift = (1.0 - eta) * theta;
            // Benign branch folds the data covariance into the noise.
            cell_mass(drift + eta * mu, eta * eta * (sigma_var + s_noise), &mut ben_buf);
            for (k, &z) in action_grid.iter().enumerate() {
                cell_mass(drift + eta * z, eta * eta * s_noise, &mut adv_buf);
                let row = &mut transition[i * a * s + k * s..i * a * s + k * s + s];
                let mut sum = 0.0;
                for j in 0..s {
                    let p = epsilon * adv_buf[j] + (1.0 - epsilon) * ben_buf[j];
                    row[j] = (1.0 - mix) * p + mix / s as f64;
                    sum += row[j];
                }
                // Renormalize away the erf rounding.
                for p in row.iter_mut() {
                    *p /= sum;
                }
            }
        }
        let mdp = Self { theta_grid, action_grid, transition, reward };
        mdp.validate()?;
        Ok(mdp)
    }
}

/// Optimal average reward by relative value iteration, to gain accuracy
/// `tol` (span of the Bellman increment).
///
/// Uses the aperiodicity transformation P ← (1-τ)I + τP, which leaves the
/// gain unchanged and lets the span contract on periodic chains.
pub fn solve_discretized_mdp(mdp: &DiscretizedMdp, tol: f64) -> Result<GainBracket> {
    mdp.validate()?;
    let s = mdp.n_states();
    let a = mdp.n_actions();
    let tau = 0.5;
    let max_sweeps = 500_000usize;
    let mut h = DVector::<f64>::zeros(s);
    let mut th = DVector::<f64>::zeros(s);
    let mut bracket = (f64::NEG_INFINITY, f64::INFINITY);
    for sweep in 0..max_sweeps {
        for i in 0..s {
            let mut best = f64::NEG_INFINITY;
            for k in 0..a {
                let row = &mdp.transition[i * a * s + k * s..i * a * s + k * s + s];
                let mut acc = 0.0;
                for j in 0..s {
                    acc += row[j] * h[j];
                }
                if acc > best {
                    best = acc;
                }
            }
            th[i] = mdp.reward[i] + (1.0 - tau) * h[i] + tau * best;
        }
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..s {
            let diff = th[i] - h[i];
            lo = lo.min(diff);
            hi = hi.max(diff);
        }
        bracket = (lo, hi);
        if hi - lo <= tol {
            return Ok(GainBracket { gain: 0.5 * (lo + hi), lower: lo, upper: hi, sweeps: sweep + 1 });
        }
        let anchor = th[0];
        for i in 0..s {
            h[i] = th[i] - anchor;
        }
    }
    Err(Error::NoConvergence {
        iterations: max_sweeps,
        detail: format!("gain bracket [{:.6e}, {:.6e}]", bracket.0, bracket.1),
    })
}
