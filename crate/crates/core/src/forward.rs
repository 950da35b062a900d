//! Explicit leapfrog integration of the stabilized state equation.
//!
//! The field starts from rest. A single-cycle sine pulse is injected as a
//! Dirichlet value of the polarization component on the observation face;
//! once the pulse ends that face switches to a first-order absorbing
//! condition. The opposite face is always absorbing, the four lateral
//! faces carry homogeneous Neumann conditions realized by copying the
//! inward neighbor.

use crate::domain::{BoundaryMap, Grid3};
use crate::error::{Error, Result};
use crate::fields::{
    CoefficientField, FieldHistory, ObservationTrace, ScalarField, VectorFieldFrame,
};
use crate::stencil::{
    apply_stabilized_into, cfl_max_step, lumped_mass_weights, BoundaryRule, StencilContext,
    StencilWorkspace,
};

/// Single-cycle sine plane-wave source on the observation face.
#[derive(Debug, Clone, Copy)]
pub struct SourcePulse {
    /// Angular frequency.
    pub omega: f64,
    /// Polarization component index; the in-plane component E2 by default.
    pub component: usize,
}

impl SourcePulse {
    pub fn new(omega: f64) -> Self {
        SourcePulse {
            omega,
            component: 1,
        }
    }

    /// End of the injection window, one full period.
    pub fn end_time(&self) -> f64 {
        2.0 * std::f64::consts::PI / self.omega
    }
}

/// f(t) = sin(omega t) inside (0, 2 pi / omega), zero outside.
pub fn pulse(t: f64, p: &SourcePulse) -> f64 {
    if t > 0.0 && t < p.end_time() {
        (p.omega * t).sin()
    } else {
        0.0
    }
}

/// Uniform time partition of `[0, t_final]`.
#[derive(Debug, Clone, Copy)]
pub struct TimeLoopSpec {
    pub tau: f64,
    pub t_final: f64,
    pub n_steps: usize,
}

impl TimeLoopSpec {
    /// `t_final` must be an integer multiple of `tau` within 1e-9 relative.
    pub fn new(tau: f64, t_final: f64) -> Result<Self> {
        if !(tau > 0.0) || !(t_final > 0.0) {
            return Err(Error::Validation {
                field: "tau".into(),
                reason: format!("need positive tau and t_final, got {tau}, {t_final}"),
            });
        }
        let steps = t_final / tau;
        let n = steps.round();
        if (steps - n).abs() > 1e-9 * steps.max(1.0) {
            return Err(Error::Validation {
                field: "t_final".into(),
                reason: format!("t_final = {t_final} is not an integer multiple of tau = {tau}"),
            });
        }
        Ok(TimeLoopSpec {
            tau,
            t_final,
            n_steps: n as usize,
        })
    }

    #[inline]
    pub fn time(&self, level: usize) -> f64 {
        level as f64 * self.tau
    }
}

/// What a solve records.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RecordPolicy {
    /// Every time level, needed by the gradient accumulation.
    FullHistory,
    /// Every n-th level (n must divide the step count); cheaper storage at
    /// the cost of coarser time quadrature in the gradients.
    EveryNth(usize),
    /// Observation-face samples only.
    BoundaryTrace,
}

#[derive(Debug, Clone)]
pub enum Recorded {
    History(FieldHistory),
    Trace(ObservationTrace),
}

impl Recorded {
    pub fn into_history(self) -> FieldHistory {
        match self {
            Recorded::History(h) => h,
            Recorded::Trace(_) => panic!("recorded a trace, not a history"),
        }
    }

    pub fn into_trace(self) -> ObservationTrace {
        match self {
            Recorded::Trace(t) => t,
            Recorded::History(_) => panic!("recorded a history, not a trace"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ForwardRun {
    pub recorded: Recorded,
    /// Max |E| over the whole run, all components.
    pub max_abs: f64,
}

/// First-order absorbing update for one face node.
///
/// `new_adj`/`old_adj` are the values one node inward at the new and the
/// current level, `old_b` the current boundary value. The boundary wave
/// speed is the background speed 1.
#[inline(always)]
pub(crate) fn mur_value(coef: f64, new_adj: f64, old_adj: f64, old_b: f64) -> f64 {
    old_adj + coef * (new_adj - old_b)
}

#[inline(always)]
pub(crate) fn mur_coef(tau: f64, h: f64) -> f64 {
    (tau - h) / (tau + h)
}

pub(crate) struct Stepper<'a> {
    pub grid: &'a Grid3,
    pub coeffs: &'a CoefficientField,
    pub bmap: &'a BoundaryMap,
    pub ctx: StencilContext<'a>,
    pub tau: f64,
    pub inv_weights: Vec<f64>,
    pub ws: StencilWorkspace,
    pub op_buf: [Vec<f64>; 3],
}

impl<'a> Stepper<'a> {
    pub fn new(
        grid: &'a Grid3,
        coeffs: &'a CoefficientField,
        bmap: &'a BoundaryMap,
        tau: f64,
        s: f64,
    ) -> Result<Self> {
        coeffs.check_shape(grid)?;
        let max_tau = cfl_max_step(grid, coeffs);
        if tau > max_tau * (1.0 + 1e-12) {
            return Err(Error::CflViolation { tau, max: max_tau });
        }
        let ctx = StencilContext::new(grid, BoundaryRule::OneSided, s)?;
        let weights: ScalarField = lumped_mass_weights(coeffs);
        let inv_weights = weights.data.iter().map(|w| 1.0 / w).collect();
        let len = grid.node_count();
        Ok(Stepper {
            grid,
            coeffs,
            bmap,
            ctx,
            tau,
            inv_weights,
            ws: StencilWorkspace::new(grid),
            op_buf: [vec![0.0; len], vec![0.0; len], vec![0.0; len]],
        })
    }

    /// Interior leapfrog update into `next`; boundary nodes get the same
    /// formula and are overwritten by the boundary pass afterwards.
    pub fn leapfrog_interior(
        &mut self,
        prev: &VectorFieldFrame,
        curr: &VectorFieldFrame,
        next: &mut VectorFieldFrame,
        adjoint_operator: bool,
    ) {
        if adjoint_operator {
            crate::stencil::apply_stabilized_adjoint_into(
                &self.ctx,
                &curr.comps,
                self.coeffs,
                &mut self.ws,
                &mut self.op_buf,
            );
        } else {
            apply_stabilized_into(
                &self.ctx,
                &curr.comps,
                self.coeffs,
                &mut self.ws,
                &mut self.op_buf,
            );
        }
        let tau2 = self.tau * self.tau;
        for c in 0..3 {
            let a = &self.op_buf[c];
            let p = &prev.comps[c];
            let q = &curr.comps[c];
            let out = &mut next.comps[c];
            let iw = &self.inv_weights;
            for i in 0..out.len() {
                out[i] = 2.0 * q[i] - p[i] - tau2 * iw[i] * a[i];
            }
        }
    }

    /// Neumann copy on the lateral faces, edges and corners.
    pub fn neumann_pass(&self, next: &mut VectorFieldFrame) {
        for c in 0..3 {
            let comp = &mut next.comps[c];
            for node in &self.bmap.d3 {
                comp[node.idx] = comp[node.donor];
            }
        }
    }

    /// Absorbing update on the opposite face.
    pub fn absorb_d2(&self, curr: &VectorFieldFrame, next: &mut VectorFieldFrame) {
        let coef = mur_coef(self.tau, self.grid.h);
        for c in 0..3 {
            let comp = &mut next.comps[c];
            let old = &curr.comps[c];
            for node in &self.bmap.d2 {
                comp[node.idx] = mur_value(coef, comp[node.adj], old[node.adj], old[node.idx]);
            }
        }
    }

    pub fn absorb_d1(&self, curr: &VectorFieldFrame, next: &mut VectorFieldFrame) {
        let coef = mur_coef(self.tau, self.grid.h);
        for c in 0..3 {
            let comp = &mut next.comps[c];
            let old = &curr.comps[c];
            for node in &self.bmap.d1 {
                comp[node.idx] = mur_value(coef, comp[node.adj], old[node.adj], old[node.idx]);
            }
        }
    }

    /// Dirichlet plane-wave injection on the observation face.
    pub fn inject_d1(&self, value: f64, component: usize, next: &mut VectorFieldFrame) {
        for c in 0..3 {
            let v = if c == component { value } else { 0.0 };
            let comp = &mut next.comps[c];
            for node in &self.bmap.d1 {
                comp[node.idx] = v;
            }
        }
    }

}

/// One forward step: leapfrog update plus the boundary pass at `t_next`.
pub fn step_forward(
    grid: &Grid3,
    e_prev: &VectorFieldFrame,
    e_curr: &VectorFieldFrame,
    coeffs: &CoefficientField,
    bmap: &BoundaryMap,
    t_next: f64,
    source: &SourcePulse,
    tspec: &TimeLoopSpec,
    s: f64,
) -> Result<VectorFieldFrame> {
    e_prev.check_shape(grid)?;
    e_curr.check_shape(grid)?;
    let mut stepper = Stepper::new(grid, coeffs, bmap, tspec.tau, s)?;
    let mut next = VectorFieldFrame::zeros(grid);
    stepper.leapfrog_interior(e_prev, e_curr, &mut next, false);
    stepper.neumann_pass(&mut next);
    stepper.absorb_d2(e_curr, &mut next);
    if t_next <= source.end_time() {
        stepper.inject_d1(pulse(t_next, source), source.component, &mut next);
    } else {
        stepper.absorb_d1(e_curr, &mut next);
    }
    next.time_index = e_curr.time_index + 1;
    if !next.max_abs().is_finite() {
        return Err(Error::NonFinite {
            step: next.time_index,
        });
    }
    Ok(next)
}

fn record_trace_level(trace: &mut ObservationTrace, bmap: &BoundaryMap, level: usize, frame: &VectorFieldFrame) {
    let n_face = trace.n_face();
    for (slot, node) in bmap.d1.iter().enumerate() {
        for c in 0..3 {
            trace.values[(level * n_face + slot) * 3 + c] = frame.comps[c][node.idx];
        }
    }
}

/// Integrate the state equation from rest over the whole time window.
pub fn solve_forward(
    grid: &Grid3,
    coeffs: &CoefficientField,
    bmap: &BoundaryMap,
    source: &SourcePulse,
    tspec: &TimeLoopSpec,
    s: f64,
    record: RecordPolicy,
) -> Result<ForwardRun> {
    let stride = match record {
        RecordPolicy::EveryNth(n) => {
            if n == 0 || tspec.n_steps % n != 0 {
                return Err(Error::Validation {
                    field: "record".into(),
                    reason: format!(
                        "stride {n} must be positive and divide the step count {}",
                        tspec.n_steps
                    ),
                });
            }
            n
        }
        _ => 1,
    };
    let mut stepper = Stepper::new(grid, coeffs, bmap, tspec.tau, s)?;
    let n = tspec.n_steps;

    let mut history = FieldHistory {
        frames: Vec::new(),
        tau: tspec.tau,
        stride,
    };
    let mut trace = ObservationTrace::zeros(n + 1, tspec.tau, bmap, source.omega);

    let mut prev = VectorFieldFrame::zeros(grid);
    let mut curr = VectorFieldFrame::zeros(grid);
    let mut next = VectorFieldFrame::zeros(grid);

    match record {
        RecordPolicy::BoundaryTrace => record_trace_level(&mut trace, bmap, 0, &curr),
        _ => history.frames.push(curr.clone()),
    }

    let mut max_abs: f64 = 0.0;
    let t1 = source.end_time();
    for k in 0..n {
        let t_next = tspec.time(k + 1);
        stepper.leapfrog_interior(&prev, &curr, &mut next, false);
        stepper.neumann_pass(&mut next);
        stepper.absorb_d2(&curr, &mut next);
        if t_next <= t1 {
            stepper.inject_d1(pulse(t_next, source), source.component, &mut next);
        } else {
            stepper.absorb_d1(&curr, &mut next);
        }
        next.time_index = k + 1;

        let m = next.max_abs();
        if !m.is_finite() {
            return Err(Error::NonFinite { step: k + 1 });
        }
        max_abs = max_abs.max(m);

        match record {
            RecordPolicy::BoundaryTrace => record_trace_level(&mut trace, bmap, k + 1, &next),
            RecordPolicy::FullHistory => history.frames.push(next.clone()),
            RecordPolicy::EveryNth(s) => {
                if (k + 1) % s == 0 {
                    history.frames.push(next.clone());
                }
            }
        }

        std::mem::swap(&mut prev, &mut curr);
        std::mem::swap(&mut curr, &mut next);
    }

    let recorded = match record {
        RecordPolicy::BoundaryTrace => Recorded::Trace(trace),
        _ => Recorded::History(history),
    };
    Ok(ForwardRun { recorded, max_abs })
}

/// Observation-face samples of a full (stride-1) history.
pub fn trace_from_history(
    hist: &FieldHistory,
    bmap: &BoundaryMap,
    omega: f64,
) -> Result<ObservationTrace> {
    if hist.stride != 1 {
        return Err(Error::HistoryMismatch(
            "trace extraction needs a stride-1 history".into(),
        ));
    }
    let mut trace = ObservationTrace::zeros(hist.n_levels(), hist.tau, bmap, omega);
    for (level, frame) in hist.frames.iter().enumerate() {
        record_trace_level(&mut trace, bmap, level, frame);
    }
    Ok(trace)
}
