//! Tikhonov functional and the adjoint-state gradients with respect to
//! the two coefficients.
//!
//! The misfit integrates the squared trace residual over the observation
//! face and time, weighted by the cut-off; quadrature is dual-cell area in
//! space and trapezoid in time. The gradients combine the time-integrated
//! field products with the regularization pull toward the priors; they are
//! densities with respect to the volume measure, so the derivative of the
//! functional along a single-node perturbation is h^3 times the gradient
//! entry there.

use crate::adjoint::{cutoff, CutoffSpec};
use crate::domain::{Grid3, RegionMask};
use crate::error::{Error, Result};
use crate::fields::{CoefficientField, FieldHistory, ObservationTrace, ScalarField};
use crate::stencil::{BoundaryRule, StencilContext, StencilWorkspace};

#[derive(Debug, Clone)]
pub struct TikhonovParams {
    pub gamma1: f64,
    pub gamma2: f64,
    pub eps_prior: ScalarField,
    pub mu_prior: ScalarField,
    pub cutoff: CutoffSpec,
}

impl TikhonovParams {
    pub fn uniform_priors(g: &Grid3, gamma1: f64, gamma2: f64, cutoff: CutoffSpec) -> Self {
        TikhonovParams {
            gamma1,
            gamma2,
            eps_prior: ScalarField::constant(g, 1.0),
            mu_prior: ScalarField::constant(g, 1.0),
            cutoff,
        }
    }
}

/// Trapezoid weight for stored level `m` of `n_levels`.
#[inline]
fn trapezoid(m: usize, n_levels: usize, dt: f64) -> f64 {
    if m == 0 || m + 1 == n_levels {
        0.5 * dt
    } else {
        dt
    }
}

/// F(E, eps, mu): misfit plus the two regularization terms.
pub fn tikhonov(
    simulated: &ObservationTrace,
    observed: &ObservationTrace,
    coeffs: &CoefficientField,
    params: &TikhonovParams,
    grid: &Grid3,
) -> Result<f64> {
    simulated.check_congruent(observed)?;
    coeffs.check_shape(grid)?;
    params.eps_prior.check_shape(grid)?;
    params.mu_prior.check_shape(grid)?;

    let area = grid.h * grid.h;
    let mut misfit = 0.0;
    let n_face = simulated.n_face();
    for level in 0..simulated.n_levels {
        let z = cutoff(level as f64 * simulated.tau, &params.cutoff);
        if z == 0.0 {
            continue;
        }
        let w = trapezoid(level, simulated.n_levels, simulated.tau);
        let base = level * n_face * 3;
        let mut acc = 0.0;
        for s in 0..n_face * 3 {
            let d = simulated.values[base + s] - observed.values[base + s];
            acc += d * d;
        }
        misfit += w * z * acc;
    }
    misfit *= 0.5 * area;

    let vol = grid.h * grid.h * grid.h;
    let mut reg = 0.0;
    if params.gamma1 != 0.0 {
        let mut acc = 0.0;
        for (e, e0) in coeffs.eps.iter().zip(&params.eps_prior.data) {
            let d = e - e0;
            acc += d * d;
        }
        reg += 0.5 * params.gamma1 * vol * acc;
    }
    if params.gamma2 != 0.0 {
        let mut acc = 0.0;
        for (m, m0) in coeffs.mu.iter().zip(&params.mu_prior.data) {
            let d = m - m0;
            acc += d * d;
        }
        reg += 0.5 * params.gamma2 * vol * acc;
    }
    Ok(misfit + reg)
}

/// Both coefficient gradients, zero at OUTER nodes.
#[derive(Debug, Clone)]
pub struct GradientPair {
    pub g_eps: ScalarField,
    pub g_mu: ScalarField,
}

impl GradientPair {
    /// Accumulate both gradients from congruent state and adjoint
    /// histories.
    pub fn compute(
        e_hist: &FieldHistory,
        l_hist: &FieldHistory,
        coeffs: &CoefficientField,
        params: &TikhonovParams,
        mask: &RegionMask,
        grid: &Grid3,
        s: f64,
    ) -> Result<GradientPair> {
        e_hist.check_congruent(l_hist)?;
        coeffs.check_shape(grid)?;
        if e_hist.n_levels() < 3 {
            return Err(Error::HistoryMismatch(
                "need at least three stored levels for time derivatives".into(),
            ));
        }
        for f in e_hist.frames.iter().chain(l_hist.frames.iter()) {
            f.check_shape(grid)?;
        }

        let ctx = StencilContext::new(grid, BoundaryRule::OneSided, s)?;
        let mut ws = StencilWorkspace::new(grid);
        let len = grid.node_count();
        let n_levels = e_hist.n_levels();
        let dt = e_hist.dt();

        let mut acc_eps = vec![0.0f64; len];
        let mut acc_mu = vec![0.0f64; len];
        let mut div_l = vec![0.0; len];
        let mut grad_div_l = [vec![0.0; len], vec![0.0; len], vec![0.0; len]];
        let mut curl_e = [vec![0.0; len], vec![0.0; len], vec![0.0; len]];
        let mut curl_l = [vec![0.0; len], vec![0.0; len], vec![0.0; len]];

        // Leapfrog-natural pairing: the adjoint frame k+1 meets the state
        // at level k. The mass term integrates lambda against the second
        // time difference, equal to -INT d_t(lambda) d_t(E) after parts;
        // the penalty enters in its integrated-by-parts form
        // -s E . grad(div lambda). The lambda-side spatial kernels are
        // the transposed ones, so the sum reproduces the derivative of
        // the discrete functional at interior nodes.
        for m in 1..n_levels - 1 {
            let lam = &l_hist.frames[m];
            let e_frame = &e_hist.frames[m];

            crate::stencil::divergence_adjoint_comps(&ctx, &lam.comps, &mut div_l);
            crate::stencil::gradient_adjoint_comps(&ctx, &div_l, &mut grad_div_l);
            crate::stencil::curl_comps(&ctx, &e_frame.comps, &mut ws, &mut curl_e);
            crate::stencil::curl_adjoint_comps(&ctx, &lam.comps, &mut curl_l);

            let e_prev = &e_hist.frames[m - 1];
            let e_next = &e_hist.frames[m + 1];
            let inv_dt = 1.0 / dt;
            for i in 0..len {
                let mut lam_ddot_e = 0.0;
                let mut e_dot_gdl = 0.0;
                let mut dot_c = 0.0;
                for c in 0..3 {
                    let dde = e_next.comps[c][i] - 2.0 * e_frame.comps[c][i]
                        + e_prev.comps[c][i];
                    lam_ddot_e += lam.comps[c][i] * dde;
                    e_dot_gdl += e_frame.comps[c][i] * grad_div_l[c][i];
                    dot_c += curl_e[c][i] * curl_l[c][i];
                }
                acc_eps[i] += lam_ddot_e * inv_dt - dt * s * e_dot_gdl;
                acc_mu[i] += -dt * dot_c / (coeffs.mu[i] * coeffs.mu[i]);
            }
        }

        let mut g_eps = ScalarField::zeros(grid);
        let mut g_mu = ScalarField::zeros(grid);
        for k in mask.inner_lo[2]..=mask.inner_hi[2] {
            for j in mask.inner_lo[1]..=mask.inner_hi[1] {
                for i in mask.inner_lo[0]..=mask.inner_hi[0] {
                    let idx = grid.idx(i, j, k);
                    g_eps.data[idx] = acc_eps[idx]
                        + params.gamma1 * (coeffs.eps[idx] - params.eps_prior.data[idx]);
                    g_mu.data[idx] = acc_mu[idx]
                        + params.gamma2 * (coeffs.mu[idx] - params.mu_prior.data[idx]);
                }
            }
        }
        Ok(GradientPair { g_eps, g_mu })
    }
}

/// Gradient with respect to the permittivity only.
pub fn grad_epsilon(
    e_hist: &FieldHistory,
    l_hist: &FieldHistory,
    coeffs: &CoefficientField,
    params: &TikhonovParams,
    mask: &RegionMask,
    grid: &Grid3,
    s: f64,
) -> Result<ScalarField> {
    Ok(GradientPair::compute(e_hist, l_hist, coeffs, params, mask, grid, s)?.g_eps)
}

/// Gradient with respect to the permeability only.
pub fn grad_mu(
    e_hist: &FieldHistory,
    l_hist: &FieldHistory,
    coeffs: &CoefficientField,
    params: &TikhonovParams,
    mask: &RegionMask,
    grid: &Grid3,
    s: f64,
) -> Result<ScalarField> {
    Ok(GradientPair::compute(e_hist, l_hist, coeffs, params, mask, grid, s)?.g_mu)
}

/// Discrete L2 norm over INNER nodes, with the volume weight.
pub fn inner_l2_norm(f: &ScalarField, mask: &RegionMask, grid: &Grid3) -> f64 {
    let vol = grid.h * grid.h * grid.h;
    let mut acc = 0.0;
    for k in mask.inner_lo[2]..=mask.inner_hi[2] {
        for j in mask.inner_lo[1]..=mask.inner_hi[1] {
            for i in mask.inner_lo[0]..=mask.inner_hi[0] {
                let v = f.data[grid.idx(i, j, k)];
                acc += v * v;
            }
        }
    }
    (acc * vol).sqrt()
}

/// Volume-weighted inner product over INNER nodes.
pub fn inner_dot(a: &ScalarField, b: &ScalarField, mask: &RegionMask, grid: &Grid3) -> f64 {
    let vol = grid.h * grid.h * grid.h;
    let mut acc = 0.0;
    for k in mask.inner_lo[2]..=mask.inner_hi[2] {
        for j in mask.inner_lo[1]..=mask.inner_hi[1] {
            for i in mask.inner_lo[0]..=mask.inner_hi[0] {
                let idx = grid.idx(i, j, k);
                acc += a.data[idx] * b.data[idx];
            }
        }
    }
    acc * vol
}
