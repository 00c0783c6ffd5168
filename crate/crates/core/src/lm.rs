//! Levenberg-Marquardt damped least squares over an arbitrary state type.
//!
//! States are updated through [`LeastSquaresProblem::retract`], so rotations
//! can be stepped with axis-angle increments composed onto the current
//! estimate instead of being stored as a minimal parameterization.

use nalgebra::{DMatrix, DVector};

/// Relative finite-difference step.
pub const FD_STEP: f64 = 1e-6;

pub trait LeastSquaresProblem {
    type State: Clone;

    fn num_params(&self) -> usize;

    fn residuals(&self, state: &Self::State) -> DVector<f64>;

    /// Applies a parameter increment to a state.
    fn retract(&self, state: &Self::State, delta: &DVector<f64>) -> Self::State;

    /// Typical magnitude of parameter `k`; sets the finite-difference step.
    fn param_scale(&self, _state: &Self::State, _k: usize) -> f64 {
        1.0
    }

    fn jacobian(&self, state: &Self::State) -> DMatrix<f64> {
        let n = self.num_params();
        let r0 = self.residuals(state);
        let mut jac = DMatrix::zeros(r0.len(), n);
        for k in 0..n {
            let (plus, minus, h) = fd_pair(self, state, k);
            let col = (self.residuals(&plus) - self.residuals(&minus)) / (2.0 * h);
            jac.set_column(k, &col);
        }
        jac
    }
}

/// States at `+h` and `-h` along parameter `k`, and the step `h`.
pub fn fd_pair<P: LeastSquaresProblem + ?Sized>(
    problem: &P,
    state: &P::State,
    k: usize,
) -> (P::State, P::State, f64) {
    let n = problem.num_params();
    let h = FD_STEP * problem.param_scale(state, k).abs().max(1.0);
    let mut delta = DVector::zeros(n);
    delta[k] = h;
    let plus = problem.retract(state, &delta);
    delta[k] = -h;
    let minus = problem.retract(state, &delta);
    (plus, minus, h)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LmConfig {
    pub max_iterations: usize,
    /// Stop once an accepted step lowers the cost by less than this fraction.
    pub cost_tolerance: f64,
    /// Stop when the infinity norm of the gradient falls below this.
    pub gradient_tolerance: f64,
    /// Stop when the scaled step norm falls below this.
    pub step_tolerance: f64,
    pub lambda_init: f64,
    pub lambda_factor: f64,
    pub lambda_min: f64,
    pub lambda_max: f64,
}

impl Default for LmConfig {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            cost_tolerance: 1e-12,
            gradient_tolerance: 1e-10,
            step_tolerance: 1e-13,
            lambda_init: 1e-3,
            lambda_factor: 10.0,
            lambda_min: 1e-12,
            lambda_max: 1e12,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    CostConverged,
    GradientConverged,
    StepConverged,
    MaxIterations,
    /// Every step was rejected and the damping hit its cap.
    Diverged,
}

impl Termination {
    pub fn converged(self) -> bool {
        !matches!(self, Termination::Diverged)
    }
}

#[derive(Debug, Clone)]
pub struct LmReport<S> {
    pub state: S,
    /// Sum of squared residuals at the start.
    pub initial_cost: f64,
    /// Sum of squared residuals at the returned state.
    pub cost: f64,
    pub num_residuals: usize,
    pub iterations: usize,
    pub termination: Termination,
}

impl<S> LmReport<S> {
    /// RMS over residual components.
    pub fn rms(&self) -> f64 {
        rms(self.cost, self.num_residuals)
    }
}

pub fn rms(cost: f64, n: usize) -> f64 {
    if n == 0 {
        0.0
    } else {
        (cost / n as f64).sqrt()
    }
}

/// Minimizes `‖r(x)‖²`. The returned state is never worse than `init`.
pub fn minimize<P: LeastSquaresProblem>(
    problem: &P,
    init: P::State,
    config: &LmConfig,
) -> LmReport<P::State> {
    let mut state = init;
    let mut r = problem.residuals(&state);
    let mut cost = r.norm_squared();
    let initial_cost = cost;
    let m = r.len();
    let n = problem.num_params();
    let mut lambda = config.lambda_init;
    let mut iterations = 0;

    let termination = 'outer: loop {
        if cost == 0.0 {
            break Termination::CostConverged;
        }
        if iterations >= config.max_iterations {
            break Termination::MaxIterations;
        }
        iterations += 1;

        let jac = problem.jacobian(&state);
        let jt = jac.transpose();
        let gradient = &jt * &r;
        if gradient.amax() < config.gradient_tolerance {
            break Termination::GradientConverged;
        }
        let normal = &jt * &jac;
        let scales: Vec<f64> = (0..n)
            .map(|k| problem.param_scale(&state, k).abs().max(1.0))
            .collect();

        loop {
            let mut damped = normal.clone();
            for k in 0..n {
                damped[(k, k)] += lambda * normal[(k, k)].max(1e-12);
            }
            let Some(chol) = damped.cholesky() else {
                lambda *= config.lambda_factor;
                if lambda > config.lambda_max {
                    break 'outer Termination::Diverged;
                }
                continue;
            };
            let delta = -chol.solve(&gradient);
            let scaled_step = delta
                .iter()
                .zip(&scales)
                .map(|(d, s)| (d / s).powi(2))
                .sum::<f64>()
                .sqrt();
            if scaled_step < config.step_tolerance {
                break 'outer Termination::StepConverged;
            }
            let candidate = problem.retract(&state, &delta);
            let r_new = problem.residuals(&candidate);
            let cost_new = r_new.norm_squared();
            if cost_new.is_finite() && cost_new < cost {
                let decrease = (cost - cost_new) / cost;
                state = candidate;
                r = r_new;
                cost = cost_new;
                lambda = (lambda / config.lambda_factor).max(config.lambda_min);
                if decrease < config.cost_tolerance {
                    break 'outer Termination::CostConverged;
                }
                break;
            }
            lambda *= config.lambda_factor;
            if lambda > config.lambda_max {
                break 'outer Termination::Diverged;
            }
        }
    };

    LmReport {
        state,
        initial_cost,
        cost,
        num_residuals: m,
        iterations,
        termination,
    }
}
