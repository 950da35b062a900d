//! Backward-in-time integration of the adjoint problem.
//!
//! The adjoint field starts from zero terminal conditions and is driven by
//! the observation residual on the observation face, weighted in time by a
//! smooth cut-off that vanishes near the final time so the terminal
//! conditions are compatible. The spatial operator is the transpose
//! counterpart of the forward one (coefficient outside the divergence
//! penalty); boundary conditions mirror the forward absorbing/Neumann set
//! with the time direction reversed.

use crate::domain::{BoundaryMap, Grid3};
use crate::error::{Error, Result};
use crate::fields::{CoefficientField, FieldHistory, ObservationTrace, VectorFieldFrame};
use crate::forward::{mur_coef, TimeLoopSpec};
use crate::stencil::{apply_stabilized_transpose_into, BoundaryRule, StencilContext, StencilWorkspace};

/// Smooth time cut-off: 1 until `t_final - delta`, 0 from
/// `t_final - delta/2`, strictly monotone in between.
#[derive(Debug, Clone, Copy)]
pub struct CutoffSpec {
    pub delta: f64,
    pub t_final: f64,
}

impl CutoffSpec {
    pub fn new(delta: f64, t_final: f64) -> Result<Self> {
        if !(delta > 0.0 && delta < t_final) {
            return Err(Error::Validation {
                field: "delta".into(),
                reason: format!("need 0 < delta < t_final, got delta={delta}, t_final={t_final}"),
            });
        }
        Ok(CutoffSpec { delta, t_final })
    }
}

/// One-sided smooth step: 0 at 0, 1 at 1, infinitely differentiable.
fn bump_blend(sigma: f64) -> f64 {
    let e = |x: f64| if x > 0.0 { (-1.0 / x).exp() } else { 0.0 };
    let a = e(sigma);
    let b = e(1.0 - sigma);
    a / (a + b)
}

/// z(t): piecewise smooth cut-off weight.
pub fn cutoff(t: f64, spec: &CutoffSpec) -> f64 {
    let lo = spec.t_final - spec.delta;
    let hi = spec.t_final - spec.delta / 2.0;
    if t <= lo {
        1.0
    } else if t >= hi {
        0.0
    } else {
        bump_blend((hi - t) / (spec.delta / 2.0))
    }
}

/// Samples on the observation face for every time level; the storage
/// mirrors [`ObservationTrace`].
#[derive(Debug, Clone, PartialEq)]
pub struct BoundarySeries {
    pub n_levels: usize,
    pub tau: f64,
    pub axis: usize,
    pub face_dims: [usize; 2],
    pub values: Vec<f64>,
}

impl BoundarySeries {
    pub fn n_face(&self) -> usize {
        self.face_dims[0] * self.face_dims[1]
    }

    #[inline(always)]
    pub fn at(&self, level: usize, node: usize, comp: usize) -> f64 {
        self.values[(level * self.n_face() + node) * 3 + comp]
    }

    pub fn scaled(&self, factor: f64) -> BoundarySeries {
        let mut out = self.clone();
        for v in &mut out.values {
            *v *= factor;
        }
        out
    }
}

/// Adjoint driving term: -(E - E~) z(t) per face node, level and component.
pub fn residual_source(
    simulated: &ObservationTrace,
    observed: &ObservationTrace,
    spec: &CutoffSpec,
) -> Result<BoundarySeries> {
    simulated.check_congruent(observed)?;
    let n_face = simulated.n_face();
    let mut values = vec![0.0; simulated.values.len()];
    for level in 0..simulated.n_levels {
        let z = cutoff(level as f64 * simulated.tau, spec);
        if z == 0.0 {
            continue;
        }
        let base = level * n_face * 3;
        for s in 0..n_face * 3 {
            values[base + s] = -(simulated.values[base + s] - observed.values[base + s]) * z;
        }
    }
    Ok(BoundarySeries {
        n_levels: simulated.n_levels,
        tau: simulated.tau,
        axis: simulated.axis,
        face_dims: simulated.face_dims,
        values,
    })
}

#[derive(Debug, Clone)]
pub struct AdjointRun {
    pub history: FieldHistory,
    pub max_abs: f64,
}

/// March the adjoint field from zero terminal conditions down to t = 0.
///
/// The recursion is the transpose of the forward step including its
/// boundary pass, so the absorbing conditions d_n lambda = d_t lambda on
/// the observation and opposite faces and the Neumann walls appear in
/// scatter form. The face-supported residual enters scaled by tau^2 / w
/// and the dual-cell surface/volume factor 1/h, carrying the trapezoid
/// weight of the misfit quadrature. While the forward face value is
/// prescribed (t <= `injection_end`) its variation vanishes, so that
/// window carries neither scatter nor source and the face slots stay
/// pinned at zero.
pub fn solve_adjoint(
    grid: &Grid3,
    coeffs: &CoefficientField,
    bmap: &BoundaryMap,
    source: &BoundarySeries,
    tspec: &TimeLoopSpec,
    s: f64,
    injection_end: f64,
) -> Result<AdjointRun> {
    if source.n_levels != tspec.n_steps + 1
        || source.face_dims != bmap.face_dims
        || source.axis != bmap.axis
    {
        return Err(Error::TraceMismatch(format!(
            "residual source has {} levels on face {:?}, expected {} on {:?}",
            source.n_levels,
            source.face_dims,
            tspec.n_steps + 1,
            bmap.face_dims
        )));
    }
    coeffs.check_shape(grid)?;
    let max_tau = crate::stencil::cfl_max_step(grid, coeffs);
    if tspec.tau > max_tau * (1.0 + 1e-12) {
        return Err(Error::CflViolation {
            tau: tspec.tau,
            max: max_tau,
        });
    }
    let ctx = StencilContext::new(grid, BoundaryRule::OneSided, s)?;
    let mut ws = StencilWorkspace::new(grid);
    let n = tspec.n_steps;
    let len = grid.node_count();
    let inv_w: Vec<f64> = coeffs.eps.iter().map(|e| 1.0 / e).collect();
    let kappa = mur_coef(tspec.tau, grid.h);
    let tau2 = tspec.tau * tspec.tau;
    // Lumped surface load: dual-cell area over volume leaves 1/h.
    let src_scale = tau2 / grid.h;

    // The stored history holds the boundary-redistributed field: the slot
    // k value is the one the level-k state pairs with in the transpose
    // bookkeeping, zero on every boundary slot. The raw recursion
    // variable lives only in two rolling buffers.
    let mut frames = vec![VectorFieldFrame::zeros(grid); n + 1];
    for (k, f) in frames.iter_mut().enumerate() {
        f.time_index = k;
    }

    // Raw terminal level: only the (half-weighted) direct misfit term.
    // The cut-off makes it vanish in production runs.
    let mut raw_next = VectorFieldFrame::zeros(grid);
    if tspec.time(n) > injection_end {
        for c in 0..3 {
            for (slot, node) in bmap.d1.iter().enumerate() {
                raw_next.comps[c][node.idx] =
                    src_scale * 0.5 * inv_w[node.idx] * source.at(n, slot, c);
            }
        }
    }

    let mut raw_curr = VectorFieldFrame::zeros(grid);
    let mut op_buf: [Vec<f64>; 3] = [vec![0.0; len], vec![0.0; len], vec![0.0; len]];
    // Partial sensitivity of the level about to be completed.
    let mut acc = VectorFieldFrame::zeros(grid);
    let mut max_abs: f64 = 0.0;

    for k in (1..n).rev() {
        // Redistribute the boundary slots of the completed raw level k+1
        // the way the forward boundary pass sourced them, into the stored
        // slot k. In the weighted metric the scatters carry the eps ratio
        // of the two nodes; production fields have eps = 1 on the whole
        // collar, so the ratios are exactly 1 there.
        let newer_pinned = tspec.time(k + 1) <= injection_end;
        {
            let mu = &mut frames[k];
            for c in 0..3 {
                mu.comps[c].copy_from_slice(&raw_next.comps[c]);
                let comp = &mut mu.comps[c];
                for node in &bmap.d3 {
                    let v = comp[node.idx];
                    comp[node.idx] = 0.0;
                    comp[node.donor] += v * coeffs.eps[node.idx] / coeffs.eps[node.donor];
                }
                for node in &bmap.d2 {
                    let v = comp[node.idx];
                    comp[node.idx] = 0.0;
                    comp[node.adj] += kappa * v * coeffs.eps[node.idx] / coeffs.eps[node.adj];
                }
                for node in &bmap.d1 {
                    let v = comp[node.idx];
                    comp[node.idx] = 0.0;
                    if !newer_pinned {
                        comp[node.adj] += kappa * v * coeffs.eps[node.idx] / coeffs.eps[node.adj];
                    }
                }
            }
        }

        apply_stabilized_transpose_into(&ctx, &frames[k].comps, coeffs, &mut ws, &mut op_buf);

        let pinned = tspec.time(k) <= injection_end;
        for c in 0..3 {
            let o = &mut raw_curr.comps[c];
            let mu = &frames[k].comps[c];
            let a = &acc.comps[c];
            let op = &op_buf[c];
            for i in 0..len {
                o[i] = a[i] + 2.0 * mu[i] - tau2 * inv_w[i] * op[i];
            }
            // Direct couplings of the absorbing updates to the current
            // level.
            for node in &bmap.d2 {
                let v = raw_next.comps[c][node.idx];
                o[node.adj] += v * coeffs.eps[node.idx] / coeffs.eps[node.adj];
                o[node.idx] -= kappa * v;
            }
            if !newer_pinned {
                for node in &bmap.d1 {
                    let v = raw_next.comps[c][node.idx];
                    o[node.adj] += v * coeffs.eps[node.idx] / coeffs.eps[node.adj];
                    o[node.idx] -= kappa * v;
                }
            }
            if !pinned {
                for (slot, node) in bmap.d1.iter().enumerate() {
                    o[node.idx] += src_scale * inv_w[node.idx] * source.at(k, slot, c);
                }
            } else {
                for node in &bmap.d1 {
                    o[node.idx] = 0.0;
                }
            }
            // The discarded previous-level slot of the leapfrog.
            for (a, m) in acc.comps[c].iter_mut().zip(mu.iter()) {
                *a = -m;
            }
        }

        let m = frames[k].max_abs();
        if !m.is_finite() {
            return Err(Error::NonFinite { step: k });
        }
        max_abs = max_abs.max(m);
        std::mem::swap(&mut raw_next, &mut raw_curr);
    }

    // Slot 0: redistribution of the final raw level, under the regime of
    // the first step.
    {
        let first_pinned = tspec.time(1) <= injection_end;
        let mu = &mut frames[0];
        for c in 0..3 {
            mu.comps[c].copy_from_slice(&raw_next.comps[c]);
            let comp = &mut mu.comps[c];
            for node in &bmap.d3 {
                let v = comp[node.idx];
                comp[node.idx] = 0.0;
                comp[node.donor] += v * coeffs.eps[node.idx] / coeffs.eps[node.donor];
            }
            for node in &bmap.d2 {
                let v = comp[node.idx];
                comp[node.idx] = 0.0;
                comp[node.adj] += kappa * v * coeffs.eps[node.idx] / coeffs.eps[node.adj];
            }
            for node in &bmap.d1 {
                let v = comp[node.idx];
                comp[node.idx] = 0.0;
                if !first_pinned {
                    comp[node.adj] += kappa * v * coeffs.eps[node.idx] / coeffs.eps[node.adj];
                }
            }
        }
    }

    Ok(AdjointRun {
        history: FieldHistory {
            frames,
            tau: tspec.tau,
            stride: 1,
        },
        max_abs,
    })
}
