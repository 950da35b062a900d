//! Assembled inverse problem: domain, time loop, source, functional
//! parameters and the observed data, with objective/gradient evaluation.

use crate::adjoint::{residual_source, solve_adjoint};
use crate::domain::{BoundaryMap, Grid3, RegionMask};
use crate::error::Result;
use crate::fields::{CoefficientField, FieldHistory, ObservationTrace};
use crate::forward::{solve_forward, trace_from_history, RecordPolicy, SourcePulse, TimeLoopSpec};
use crate::objective::{tikhonov, GradientPair, TikhonovParams};

#[derive(Debug, Clone)]
pub struct InverseProblem {
    pub grid: Grid3,
    pub mask: RegionMask,
    pub bmap: BoundaryMap,
    pub source: SourcePulse,
    pub tspec: TimeLoopSpec,
    pub s: f64,
    pub params: TikhonovParams,
    pub observed: ObservationTrace,
}

impl InverseProblem {
    /// F at the given coefficients; one boundary-trace forward solve.
    pub fn objective(&self, coeffs: &CoefficientField) -> Result<f64> {
        let trace = solve_forward(
            &self.grid,
            coeffs,
            &self.bmap,
            &self.source,
            &self.tspec,
            self.s,
            RecordPolicy::BoundaryTrace,
        )?
        .recorded
        .into_trace();
        tikhonov(&trace, &self.observed, coeffs, &self.params, &self.grid)
    }

    /// F and both gradients; one forward and one adjoint solve with full
    /// histories.
    pub fn objective_and_gradient(
        &self,
        coeffs: &CoefficientField,
    ) -> Result<(f64, GradientPair)> {
        let (f, pair, _, _) = self.objective_gradient_full(coeffs)?;
        Ok((f, pair))
    }

    /// As [`Self::objective_and_gradient`], additionally returning the
    /// state history and simulated trace for callers that reuse them.
    pub fn objective_gradient_full(
        &self,
        coeffs: &CoefficientField,
    ) -> Result<(f64, GradientPair, FieldHistory, ObservationTrace)> {
        let run = solve_forward(
            &self.grid,
            coeffs,
            &self.bmap,
            &self.source,
            &self.tspec,
            self.s,
            RecordPolicy::FullHistory,
        )?;
        let e_hist = run.recorded.into_history();
        let sim = trace_from_history(&e_hist, &self.bmap, self.source.omega)?;
        let f = tikhonov(&sim, &self.observed, coeffs, &self.params, &self.grid)?;
        let src = residual_source(&sim, &self.observed, &self.params.cutoff)?;
        let adj = solve_adjoint(
            &self.grid,
            coeffs,
            &self.bmap,
            &src,
            &self.tspec,
            self.s,
            self.source.end_time(),
        )?;
        let pair = GradientPair::compute(
            &e_hist,
            &adj.history,
            coeffs,
            &self.params,
            &self.mask,
            &self.grid,
            self.s,
        )?;
        Ok((f, pair, e_hist, sim))
    }

    pub fn background(&self) -> CoefficientField {
        CoefficientField::background(&self.grid)
    }
}
