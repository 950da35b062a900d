//! Fletcher-Reeves conjugate gradient reconstruction loop: forward and
//! adjoint solves, coefficient gradients, projected updates with a joint
//! Armijo backtracking line search, and independent stopping for the two
//! coefficients.

use crate::domain::RegionMask;
use crate::error::{Error, Result};
use crate::fields::{CoefficientField, ScalarField};
use crate::objective::{inner_dot, inner_l2_norm, GradientPair};
use crate::problem::InverseProblem;

const ARMIJO_C: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 20;
/// When the unit trial already satisfies the sufficient-decrease bound,
/// the search doubles the step while the objective keeps improving; the
/// coefficient clamp saturates runaway trials, so growth self-limits.
const MAX_EXPANSIONS: usize = 40;
const RESTART_PERIOD: usize = 20;

/// Per-parameter stopping rule.
#[derive(Debug, Clone, Copy)]
pub struct StoppingSpec {
    /// Gradient-norm tolerance.
    pub theta: f64,
    /// Stabilization window (iterations) for the coefficient norm.
    pub window: usize,
    /// Relative tolerance for norm stabilization over the window.
    pub rho: f64,
    pub max_iter: usize,
}

impl StoppingSpec {
    pub fn new(theta: f64, window: usize, rho: f64, max_iter: usize) -> Result<Self> {
        if !(theta > 0.0) {
            return Err(Error::Validation {
                field: "theta".into(),
                reason: "gradient tolerance must be positive".into(),
            });
        }
        if window < 2 {
            return Err(Error::Validation {
                field: "window".into(),
                reason: "stabilization window must be at least 2".into(),
            });
        }
        Ok(StoppingSpec {
            theta,
            window,
            rho,
            max_iter,
        })
    }
}

/// Initial line-search scales for the two parameters.
#[derive(Debug, Clone, Copy)]
pub struct StepScales {
    pub alpha_eps: f64,
    pub alpha_mu: f64,
}

/// How step lengths are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepRule {
    /// Joint projected Armijo backtracking with expansion; the objective
    /// is nonincreasing across accepted iterations.
    Armijo,
    /// Constant steps alpha_eps, alpha_mu as in the reference procedure;
    /// no descent guarantee, iterates may ride the admissible bounds.
    Fixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopDecision {
    Continue,
    StopEps,
    StopMu,
    StopAll,
}

/// One conjugate-gradient direction update:
/// beta = |g|^2 / |g_prev|^2, d = -g + beta d_prev.
pub fn cg_direction(
    g: &ScalarField,
    g_prev: &ScalarField,
    d_prev: &ScalarField,
    mask: &RegionMask,
    grid: &crate::domain::Grid3,
) -> Result<(ScalarField, f64)> {
    let num = inner_dot(g, g, mask, grid);
    let den = inner_dot(g_prev, g_prev, mask, grid);
    if den == 0.0 {
        return Err(Error::DegenerateGradient);
    }
    let beta = num / den;
    let mut d = ScalarField {
        n: g.n,
        data: vec![0.0; g.data.len()],
    };
    for i in 0..d.data.len() {
        d.data[i] = -g.data[i] + beta * d_prev.data[i];
    }
    Ok((d, beta))
}

/// Projected coefficient update: clamp into the admissible ranges, OUTER
/// nodes untouched (directions are zero there by construction).
pub fn update_coefficients(
    coeffs: &CoefficientField,
    d_eps: &ScalarField,
    d_mu: &ScalarField,
    alpha_eps: f64,
    alpha_mu: f64,
    mask: &RegionMask,
    grid: &crate::domain::Grid3,
) -> CoefficientField {
    let mut out = coeffs.clone();
    for k in mask.inner_lo[2]..=mask.inner_hi[2] {
        for j in mask.inner_lo[1]..=mask.inner_hi[1] {
            for i in mask.inner_lo[0]..=mask.inner_hi[0] {
                let idx = grid.idx(i, j, k);
                let e = coeffs.eps[idx] + alpha_eps * d_eps.data[idx];
                out.eps[idx] = e.clamp(coeffs.eps_bounds.0, coeffs.eps_bounds.1);
                let m = coeffs.mu[idx] + alpha_mu * d_mu.data[idx];
                out.mu[idx] = m.clamp(coeffs.mu_bounds.0, coeffs.mu_bounds.1);
            }
        }
    }
    out
}

/// Check the per-parameter stopping rules against the recorded histories.
pub fn stopping_check(
    grad_norms: (&[f64], &[f64]),
    coeff_norms: (&[f64], &[f64]),
    iter: usize,
    spec: &StoppingSpec,
) -> StopDecision {
    let stalled = |norms: &[f64]| {
        if norms.len() < spec.window {
            return false;
        }
        let tail = &norms[norms.len() - spec.window..];
        let base = tail[0].abs().max(1e-300);
        tail.iter()
            .all(|v| (v - tail[0]).abs() <= spec.rho * base)
    };
    let eps_stop = grad_norms.0.last().map(|&g| g <= spec.theta).unwrap_or(false)
        || stalled(coeff_norms.0)
        || iter >= spec.max_iter;
    let mu_stop = grad_norms.1.last().map(|&g| g <= spec.theta).unwrap_or(false)
        || stalled(coeff_norms.1)
        || iter >= spec.max_iter;
    match (eps_stop, mu_stop) {
        (true, true) => StopDecision::StopAll,
        (true, false) => StopDecision::StopEps,
        (false, true) => StopDecision::StopMu,
        (false, false) => StopDecision::Continue,
    }
}

/// One line of the per-iteration log.
#[derive(Debug, Clone)]
pub struct IterationRecord {
    pub iter: usize,
    pub objective: f64,
    pub grad_norm_eps: f64,
    pub grad_norm_mu: f64,
    pub alpha: f64,
    pub max_eps: f64,
    pub max_mu: f64,
}

#[derive(Debug, Clone)]
pub struct ReconstructionResult {
    pub coeffs: CoefficientField,
    /// Last iteration at which the permittivity was updated.
    pub last_eps_iter: usize,
    /// Last iteration at which the permeability was updated.
    pub last_mu_iter: usize,
    pub iterations: Vec<IterationRecord>,
    pub objective_history: Vec<f64>,
    pub line_search_failed: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct CgOptions {
    pub scales: StepScales,
    pub stopping: StoppingSpec,
    pub step_rule: StepRule,
}

/// Run the full reconstruction from the background start.
pub fn reconstruct(problem: &InverseProblem, opts: &CgOptions) -> Result<ReconstructionResult> {
    reconstruct_from(problem, problem.background(), opts)
}

/// Run the reconstruction from a caller-supplied initial field.
pub fn reconstruct_from(
    problem: &InverseProblem,
    start: CoefficientField,
    opts: &CgOptions,
) -> Result<ReconstructionResult> {
    let grid = &problem.grid;
    let mask = &problem.mask;
    let mut coeffs = start;

    let mut iterations = Vec::new();
    let mut objective_history = Vec::new();
    let mut grad_norms_eps: Vec<f64> = Vec::new();
    let mut grad_norms_mu: Vec<f64> = Vec::new();
    let mut coeff_norms_eps: Vec<f64> = Vec::new();
    let mut coeff_norms_mu: Vec<f64> = Vec::new();

    let mut eps_active = true;
    let mut mu_active = true;
    let mut last_eps_iter = 0;
    let mut last_mu_iter = 0;
    let mut line_search_failed = false;

    let (mut f_curr, mut grads) = {
        let (f, g) = problem.objective_and_gradient(&coeffs)?;
        (f, g)
    };
    objective_history.push(f_curr);

    let zero = ScalarField {
        n: grid.n,
        data: vec![0.0; grid.node_count()],
    };
    let mut d_eps = zero.clone();
    let mut d_mu = zero.clone();
    let mut g_prev: Option<GradientPair> = None;
    let mut since_restart = 0usize;

    for m in 0..opts.stopping.max_iter {
        let gn_eps = inner_l2_norm(&grads.g_eps, mask, grid);
        let gn_mu = inner_l2_norm(&grads.g_mu, mask, grid);
        grad_norms_eps.push(gn_eps);
        grad_norms_mu.push(gn_mu);

        // Per-parameter stopping, checked before spending solves on a
        // line search; a frozen parameter is never touched again.
        match stopping_check(
            (&grad_norms_eps, &grad_norms_mu),
            (&coeff_norms_eps, &coeff_norms_mu),
            m,
            &opts.stopping,
        ) {
            StopDecision::StopAll => break,
            StopDecision::StopEps => eps_active = false,
            StopDecision::StopMu => mu_active = false,
            StopDecision::Continue => {}
        }
        if !eps_active && !mu_active {
            break;
        }

        // Directions: steepest descent at m = 0 and on restarts,
        // Fletcher-Reeves otherwise; frozen parameters keep a zero
        // direction.
        let restart = m == 0 || since_restart >= RESTART_PERIOD || g_prev.is_none();
        let mut new_d_eps = zero.clone();
        let mut new_d_mu = zero.clone();
        if eps_active {
            if restart {
                for i in 0..new_d_eps.data.len() {
                    new_d_eps.data[i] = -grads.g_eps.data[i];
                }
            } else {
                let prev = g_prev.as_ref().unwrap();
                match cg_direction(&grads.g_eps, &prev.g_eps, &d_eps, mask, grid) {
                    Ok((d, _beta)) => new_d_eps = d,
                    Err(Error::DegenerateGradient) => {
                        for i in 0..new_d_eps.data.len() {
                            new_d_eps.data[i] = -grads.g_eps.data[i];
                        }
                    }
                    Err(e) => return Err(e),
                }
            }
            // Non-descent safeguard.
            if inner_dot(&grads.g_eps, &new_d_eps, mask, grid) >= 0.0 {
                for i in 0..new_d_eps.data.len() {
                    new_d_eps.data[i] = -grads.g_eps.data[i];
                }
            }
        }
        if mu_active {
            if restart {
                for i in 0..new_d_mu.data.len() {
                    new_d_mu.data[i] = -grads.g_mu.data[i];
                }
            } else {
                let prev = g_prev.as_ref().unwrap();
                match cg_direction(&grads.g_mu, &prev.g_mu, &d_mu, mask, grid) {
                    Ok((d, _beta)) => new_d_mu = d,
                    Err(Error::DegenerateGradient) => {
                        for i in 0..new_d_mu.data.len() {
                            new_d_mu.data[i] = -grads.g_mu.data[i];
                        }
                    }
                    Err(e) => return Err(e),
                }
            }
            if inner_dot(&grads.g_mu, &new_d_mu, mask, grid) >= 0.0 {
                for i in 0..new_d_mu.data.len() {
                    new_d_mu.data[i] = -grads.g_mu.data[i];
                }
            }
        }
        d_eps = new_d_eps;
        d_mu = new_d_mu;
        since_restart = if restart { 1 } else { since_restart + 1 };

        if opts.step_rule == StepRule::Fixed {
            let trial = update_coefficients(
                &coeffs,
                &d_eps,
                &d_mu,
                opts.scales.alpha_eps,
                opts.scales.alpha_mu,
                mask,
                grid,
            );
            coeffs = trial;
            if eps_active {
                last_eps_iter = m + 1;
            }
            if mu_active {
                last_mu_iter = m + 1;
            }
            g_prev = Some(grads);
            let (f_new, g_new) = problem.objective_and_gradient(&coeffs)?;
            f_curr = f_new;
            grads = g_new;
            objective_history.push(f_curr);
            coeff_norms_eps.push(inner_l2_norm(
                &ScalarField {
                    n: grid.n,
                    data: coeffs.eps.clone(),
                },
                mask,
                grid,
            ));
            coeff_norms_mu.push(inner_l2_norm(
                &ScalarField {
                    n: grid.n,
                    data: coeffs.mu.clone(),
                },
                mask,
                grid,
            ));
            iterations.push(IterationRecord {
                iter: m,
                objective: f_curr,
                grad_norm_eps: gn_eps,
                grad_norm_mu: gn_mu,
                alpha: 1.0,
                max_eps: coeffs.max_eps(),
                max_mu: coeffs.max_mu(),
            });
            continue;
        }

        // Joint Armijo backtracking along (alpha_eps d_eps, alpha_mu d_mu).
        // The slope is measured against the realized (projected) step so
        // that directions pressing on the admissible bounds do not inflate
        // the expected decrease.
        let unclamped_slope = inner_dot(&grads.g_eps, &d_eps, mask, grid)
            * opts.scales.alpha_eps
            + inner_dot(&grads.g_mu, &d_mu, mask, grid) * opts.scales.alpha_mu;
        if unclamped_slope >= 0.0 {
            // Both active gradients vanish (the safeguard guarantees a
            // descent direction otherwise); nothing left to do.
            break;
        }
        let projected_gain = |trial: &CoefficientField| -> f64 {
            let mut acc = 0.0;
            for k in mask.inner_lo[2]..=mask.inner_hi[2] {
                for j in mask.inner_lo[1]..=mask.inner_hi[1] {
                    for i in mask.inner_lo[0]..=mask.inner_hi[0] {
                        let idx = grid.idx(i, j, k);
                        acc += grads.g_eps.data[idx] * (trial.eps[idx] - coeffs.eps[idx]);
                        acc += grads.g_mu.data[idx] * (trial.mu[idx] - coeffs.mu[idx]);
                    }
                }
            }
            acc * grid.h * grid.h * grid.h
        };
        let mut sigma = 1.0;
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACKS {
            let trial = update_coefficients(
                &coeffs,
                &d_eps,
                &d_mu,
                sigma * opts.scales.alpha_eps,
                sigma * opts.scales.alpha_mu,
                mask,
                grid,
            );
            let gain = projected_gain(&trial);
            if gain < 0.0 {
                let f_trial = problem.objective(&trial)?;
                if f_trial <= f_curr + ARMIJO_C * gain {
                    accepted = Some((trial, f_trial, sigma));
                    break;
                }
            }
            sigma *= 0.5;
        }
        if let Some((_, f_best, 1.0)) = accepted {
            // The unit step was no effort; expand while it pays off.
            let mut f_best = f_best;
            for _ in 0..MAX_EXPANSIONS {
                let sigma_try = sigma * 2.0;
                let trial = update_coefficients(
                    &coeffs,
                    &d_eps,
                    &d_mu,
                    sigma_try * opts.scales.alpha_eps,
                    sigma_try * opts.scales.alpha_mu,
                    mask,
                    grid,
                );
                let gain = projected_gain(&trial);
                if gain >= 0.0 {
                    break;
                }
                let f_trial = problem.objective(&trial)?;
                if f_trial <= f_curr + ARMIJO_C * gain && f_trial < f_best {
                    sigma = sigma_try;
                    f_best = f_trial;
                    accepted = Some((trial, f_trial, sigma));
                } else {
                    break;
                }
            }
        }

        // A failed search along a conjugate direction falls back to
        // steepest descent once before giving up.
        if accepted.is_none() && !restart {
            if eps_active {
                for i in 0..d_eps.data.len() {
                    d_eps.data[i] = -grads.g_eps.data[i];
                }
            }
            if mu_active {
                for i in 0..d_mu.data.len() {
                    d_mu.data[i] = -grads.g_mu.data[i];
                }
            }
            since_restart = 1;
            let mut sigma = 1.0;
            for _ in 0..MAX_BACKTRACKS {
                let trial = update_coefficients(
                    &coeffs,
                    &d_eps,
                    &d_mu,
                    sigma * opts.scales.alpha_eps,
                    sigma * opts.scales.alpha_mu,
                    mask,
                    grid,
                );
                let gain = projected_gain(&trial);
                if gain < 0.0 {
                    let f_trial = problem.objective(&trial)?;
                    if f_trial <= f_curr + ARMIJO_C * gain {
                        accepted = Some((trial, f_trial, sigma));
                        break;
                    }
                }
                sigma *= 0.5;
            }
        }

        let alpha_logged;
        match accepted {
            Some((trial, f_trial, sigma)) => {
                coeffs = trial;
                f_curr = f_trial;
                alpha_logged = sigma;
                if eps_active {
                    last_eps_iter = m + 1;
                }
                if mu_active {
                    last_mu_iter = m + 1;
                }
            }
            None => {
                line_search_failed = true;
                alpha_logged = 0.0;
            }
        }
        objective_history.push(f_curr);
        coeff_norms_eps.push(inner_l2_norm(
            &ScalarField {
                n: grid.n,
                data: coeffs.eps.clone(),
            },
            mask,
            grid,
        ));
        coeff_norms_mu.push(inner_l2_norm(
            &ScalarField {
                n: grid.n,
                data: coeffs.mu.clone(),
            },
            mask,
            grid,
        ));

        iterations.push(IterationRecord {
            iter: m,
            objective: f_curr,
            grad_norm_eps: gn_eps,
            grad_norm_mu: gn_mu,
            alpha: alpha_logged,
            max_eps: coeffs.max_eps(),
            max_mu: coeffs.max_mu(),
        });

        if line_search_failed {
            break;
        }

        // Refresh gradients at the accepted iterate.
        g_prev = Some(grads);
        let (f_new, g_new) = problem.objective_and_gradient(&coeffs)?;
        f_curr = f_new;
        grads = g_new;
    }

    Ok(ReconstructionResult {
        coeffs,
        last_eps_iter,
        last_mu_iter,
        iterations,
        objective_history,
        line_search_failed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adjoint::CutoffSpec;
    use crate::domain::{build_decomposition, build_grid, classify_boundary};
    use crate::fields::{phantom, InclusionSpec};
    use crate::forward::{solve_forward, RecordPolicy, SourcePulse, TimeLoopSpec};
    use crate::objective::TikhonovParams;

    fn grid_and_mask() -> (crate::domain::Grid3, RegionMask) {
        let g = build_grid([(0.0, 1.0), (0.0, 1.0), (0.0, 0.8)], 0.1).unwrap();
        let m = build_decomposition(&g, [(0.2, 0.8), (0.2, 0.8), (0.2, 0.6)]).unwrap();
        (g, m)
    }

    fn field(g: &crate::domain::Grid3, v: f64) -> ScalarField {
        ScalarField {
            n: g.n,
            data: vec![v; g.node_count()],
        }
    }

    #[test]
    fn cg_direction_formula() {
        let (g, m) = grid_and_mask();
        let gm = field(&g, 1.0);
        let gp = field(&g, 1.0);
        let dp = field(&g, 0.5);
        let (d, beta) = cg_direction(&gm, &gp, &dp, &m, &g).unwrap();
        assert_eq!(beta, 1.0);
        let idx = g.idx(3, 3, 3);
        assert_eq!(d.data[idx], -1.0 + 0.5);

        // |g| = 1 vs |g_prev| = 2 gives beta 0.25.
        let gp2 = field(&g, 2.0);
        let (_, beta) = cg_direction(&gm, &gp2, &dp, &m, &g).unwrap();
        assert!((beta - 0.25).abs() < 1e-15);

        // Zero current gradient: beta = 0 and the direction is zero.
        let gz = field(&g, 0.0);
        let (d, beta) = cg_direction(&gz, &gp, &dp, &m, &g).unwrap();
        assert_eq!(beta, 0.0);
        assert!(d.data.iter().all(|&v| v == 0.0));

        // Zero previous gradient must signal a restart.
        assert!(matches!(
            cg_direction(&gm, &gz, &dp, &m, &g).unwrap_err(),
            Error::DegenerateGradient
        ));
    }

    #[test]
    fn update_clamps_to_admissible_ranges() {
        let (g, m) = grid_and_mask();
        let c = CoefficientField::background(&g);
        let d_eps = field(&g, 1.0);
        let d_mu = field(&g, -1.0);
        let out = update_coefficients(&c, &d_eps, &d_mu, 15.0, 0.5, &m, &g);
        let idx = g.idx(3, 3, 3);
        assert_eq!(out.eps[idx], 15.0);
        assert_eq!(out.mu[idx], 1.0);
        // OUTER untouched.
        assert_eq!(out.eps[g.idx(0, 0, 0)], 1.0);

        let same = update_coefficients(&c, &field(&g, 0.0), &field(&g, 0.0), 1.0, 1.0, &m, &g);
        assert_eq!(same, c);
    }

    #[test]
    fn stopping_decisions() {
        let spec = StoppingSpec::new(1e-6, 3, 1e-4, 100).unwrap();
        // Gradient below theta stops eps only.
        let d = stopping_check(
            (&[1e-7], &[1.0]),
            (&[1.0], &[1.0]),
            1,
            &spec,
        );
        assert_eq!(d, StopDecision::StopEps);
        // Stalled mu coefficient norms stop mu.
        let d = stopping_check(
            (&[1.0], &[1.0]),
            (&[1.0, 1.1, 1.2], &[2.0, 2.0, 2.0]),
            3,
            &spec,
        );
        assert_eq!(d, StopDecision::StopMu);
        // Everything moving: continue.
        let d = stopping_check(
            (&[1.0], &[1.0]),
            (&[1.0, 1.5, 2.0], &[1.0, 1.5, 2.0]),
            3,
            &spec,
        );
        assert_eq!(d, StopDecision::Continue);
        // Iteration cap stops all.
        let d = stopping_check((&[1.0], &[1.0]), (&[1.0], &[1.0]), 100, &spec);
        assert_eq!(d, StopDecision::StopAll);
    }

    #[test]
    fn exact_start_at_truth_stops_immediately() {
        let (g, m) = grid_and_mask();
        let b = classify_boundary(&g, 2).unwrap();
        let incs = vec![InclusionSpec {
            extents: [(0.4, 0.6), (0.4, 0.6), (0.3, 0.5)],
            eps: 4.0,
            mu: 1.5,
        }];
        let truth = phantom(&g, &m, &incs).unwrap();
        let tspec = TimeLoopSpec::new(0.01, 0.6).unwrap();
        let source = SourcePulse::new(21.0);
        let obs = solve_forward(&g, &truth, &b, &source, &tspec, 1.0, RecordPolicy::BoundaryTrace)
            .unwrap()
            .recorded
            .into_trace();
        let cutoff = CutoffSpec::new(0.06, 0.6).unwrap();
        // Priors equal the truth so the regularization is centered there.
        let params = TikhonovParams {
            gamma1: 0.01,
            gamma2: 0.9,
            eps_prior: ScalarField {
                n: g.n,
                data: truth.eps.clone(),
            },
            mu_prior: ScalarField {
                n: g.n,
                data: truth.mu.clone(),
            },
            cutoff,
        };
        let problem = InverseProblem {
            grid: g.clone(),
            mask: m.clone(),
            bmap: b,
            source,
            tspec,
            s: 1.0,
            params,
            observed: obs,
        };
        let opts = CgOptions {
            scales: StepScales {
                alpha_eps: 0.5,
                alpha_mu: 0.05,
            },
            stopping: StoppingSpec::new(1e-6, 5, 1e-4, 10).unwrap(),
            step_rule: StepRule::Armijo,
        };
        let res = reconstruct_from(&problem, truth.clone(), &opts).unwrap();
        // The simulated trace equals the observation bit for bit, so the
        // gradients vanish and the loop stops without any update.
        assert!(res.iterations.is_empty());
        assert!(!res.line_search_failed);
        assert_eq!(res.coeffs, truth);
    }
}
