//! Run configuration: a flat TOML file whose keys mirror the solver and
//! reconstruction parameters, with defaults matching the reference setup.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::adjoint::CutoffSpec;
use crate::domain::{build_decomposition, build_grid, classify_boundary, BoundaryMap, Grid3, RegionMask};
use crate::error::{Error, Result};
use crate::fields::{phantom, CoefficientField, InclusionSpec};
use crate::forward::{SourcePulse, TimeLoopSpec};
use crate::optimizer::{CgOptions, StepRule, StepScales, StoppingSpec};

/// Step-length policy of the reconstruction loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LineSearch {
    Armijo,
    Fixed,
}

/// What a run does.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    GenerateData,
    Reconstruct,
    Gradcheck,
    Adjointcheck,
    Regsearch,
}

/// The four standard data cases: frequency and noise level.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CaseId {
    I,
    Ii,
    Iii,
    Iv,
}

impl CaseId {
    pub fn parse(s: &str) -> Option<CaseId> {
        match s.to_ascii_lowercase().as_str() {
            "i" | "1" => Some(CaseId::I),
            "ii" | "2" => Some(CaseId::Ii),
            "iii" | "3" => Some(CaseId::Iii),
            "iv" | "4" => Some(CaseId::Iv),
            _ => None,
        }
    }

    pub fn omega(self) -> f64 {
        match self {
            CaseId::I | CaseId::Ii => 21.0,
            CaseId::Iii | CaseId::Iv => 30.0,
        }
    }

    pub fn noise_percent(self) -> f64 {
        match self {
            CaseId::I | CaseId::Iii => 3.0,
            CaseId::Ii | CaseId::Iv => 10.0,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            CaseId::I => "i",
            CaseId::Ii => "ii",
            CaseId::Iii => "iii",
            CaseId::Iv => "iv",
        }
    }
}

fn default_outer() -> [(f64, f64); 3] {
    [(-3.4, 3.4), (-0.8, 0.8), (-0.4, 0.4)]
}

fn default_inner() -> [(f64, f64); 3] {
    [(-3.2, 3.2), (-0.6, 0.6), (-0.3, 0.3)]
}

fn default_inclusions() -> Vec<InclusionSpec> {
    vec![
        InclusionSpec {
            extents: [(-1.0, -0.6), (-0.2, 0.2), (-0.1, 0.1)],
            eps: 12.0,
            mu: 2.0,
        },
        InclusionSpec {
            extents: [(0.6, 1.0), (-0.2, 0.2), (-0.1, 0.1)],
            eps: 12.0,
            mu: 2.0,
        },
    ]
}

/// Fully resolved run parameters. Every field has a default; a config
/// file may override any subset and unknown keys are rejected.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub outer: [(f64, f64); 3],
    pub inner: [(f64, f64); 3],
    pub h: f64,
    pub tau: f64,
    pub t_final: f64,
    pub omega: f64,
    pub s: f64,
    pub delta: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    pub eps_init: f64,
    pub mu_init: f64,
    pub noise_percent: f64,
    pub seed: u64,
    pub alpha1: f64,
    pub alpha2: f64,
    pub theta: f64,
    pub stab_window: usize,
    pub stab_rho: f64,
    pub max_iter: usize,
    pub observation_axis: usize,
    pub mode: Mode,
    pub line_search: LineSearch,
    pub inclusions: Vec<InclusionSpec>,
    /// Data-generation time refinement: the synthetic trace is computed
    /// at tau / data_refine and restricted to the coarse levels.
    pub data_refine: usize,
    pub data_path: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
    /// Regularization grids for the regsearch mode.
    pub gamma1_grid: Vec<f64>,
    pub gamma2_grid: Vec<f64>,
    /// Number of probe nodes for the gradient check.
    pub gradcheck_nodes: usize,
    /// Central finite-difference step of the gradient check.
    pub gradcheck_step: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            outer: default_outer(),
            inner: default_inner(),
            h: 0.1,
            tau: 0.003,
            t_final: 1.2,
            omega: 30.0,
            s: 1.0,
            delta: 0.12,
            gamma1: 2e-5,
            gamma2: 2e-3,
            eps_init: 1.0,
            mu_init: 1.0,
            noise_percent: 3.0,
            seed: 42,
            alpha1: 0.5,
            alpha2: 0.5,
            theta: 1e-6,
            stab_window: 5,
            stab_rho: 1e-4,
            max_iter: 200,
            observation_axis: 2,
            mode: Mode::Reconstruct,
            line_search: LineSearch::Armijo,
            inclusions: default_inclusions(),
            data_refine: 2,
            data_path: None,
            output_dir: None,
            gamma1_grid: vec![1e-5, 2e-5, 1e-4],
            gamma2_grid: vec![1e-3, 2e-3, 1e-2],
            gradcheck_nodes: 5,
            gradcheck_step: 1e-3,
        }
    }
}

/// Grid, regions and solver specs assembled from a validated config.
#[derive(Debug, Clone)]
pub struct Assembled {
    pub grid: Grid3,
    pub mask: RegionMask,
    pub bmap: BoundaryMap,
    pub tspec: TimeLoopSpec,
    pub source: SourcePulse,
    pub cutoff: CutoffSpec,
    pub truth: CoefficientField,
}

impl RunConfig {
    /// Parse and validate a TOML config file.
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<RunConfig> {
        let cfg = Self::parse_unvalidated(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Parse without the cross-field validation; used when keys are set
    /// one at a time and the whole is checked before a run.
    pub fn parse_unvalidated(text: &str) -> Result<RunConfig> {
        toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    /// Check every solver precondition that is knowable at load time.
    pub fn validate(&self) -> Result<()> {
        let fail = |field: &str, reason: String| -> Result<()> {
            Err(Error::Validation {
                field: field.into(),
                reason,
            })
        };
        let grid = build_grid(self.outer, self.h)?;
        build_decomposition(&grid, self.inner)?;
        classify_boundary(&grid, self.observation_axis)?;
        TimeLoopSpec::new(self.tau, self.t_final)?;
        // CFL against the fastest admissible speed, the unit background.
        let cfl = self.h / 3.0f64.sqrt();
        if self.tau > cfl * (1.0 + 1e-12) {
            return Err(Error::CflViolation {
                tau: self.tau,
                max: cfl,
            });
        }
        if !(self.omega > 0.0) {
            return fail("omega", format!("must be positive, got {}", self.omega));
        }
        if !(0.0..=1.0).contains(&self.s) {
            return fail("s", format!("penalty must lie in [0, 1], got {}", self.s));
        }
        CutoffSpec::new(self.delta, self.t_final)?;
        if self.gamma1 < 0.0 || self.gamma2 < 0.0 {
            return fail(
                "gamma",
                format!("weights must be nonnegative, got {} and {}", self.gamma1, self.gamma2),
            );
        }
        if self.noise_percent < 0.0 {
            return fail("noise_percent", "must be nonnegative".into());
        }
        if !(self.alpha1 > 0.0 && self.alpha2 > 0.0) {
            return fail("alpha", "initial step scales must be positive".into());
        }
        StoppingSpec::new(self.theta, self.stab_window, self.stab_rho, self.max_iter)?;
        if self.max_iter == 0 {
            return fail("max_iter", "must be at least 1".into());
        }
        if self.data_refine == 0 {
            return fail("data_refine", "must be at least 1".into());
        }
        if !(self.eps_init >= 1.0 && self.eps_init <= 15.0) {
            return fail("eps_init", format!("must lie in [1, 15], got {}", self.eps_init));
        }
        if !(self.mu_init >= 1.0 && self.mu_init <= 3.0) {
            return fail("mu_init", format!("must lie in [1, 3], got {}", self.mu_init));
        }
        if self.gradcheck_nodes == 0 || !(self.gradcheck_step > 0.0) {
            return fail("gradcheck", "need at least one node and a positive step".into());
        }
        // Inclusion geometry and values.
        let mask = build_decomposition(&grid, self.inner)?;
        phantom(&grid, &mask, &self.inclusions)?;
        Ok(())
    }

    /// Build the domain objects the pipeline works with.
    pub fn assemble(&self) -> Result<Assembled> {
        let grid = build_grid(self.outer, self.h)?;
        let mask = build_decomposition(&grid, self.inner)?;
        let bmap = classify_boundary(&grid, self.observation_axis)?;
        let tspec = TimeLoopSpec::new(self.tau, self.t_final)?;
        let source = SourcePulse::new(self.omega);
        let cutoff = CutoffSpec::new(self.delta, self.t_final)?;
        let truth = phantom(&grid, &mask, &self.inclusions)?;
        Ok(Assembled {
            grid,
            mask,
            bmap,
            tspec,
            source,
            cutoff,
            truth,
        })
    }

    pub fn cg_options(&self) -> Result<CgOptions> {
        Ok(CgOptions {
            scales: StepScales {
                alpha_eps: self.alpha1,
                alpha_mu: self.alpha2,
            },
            stopping: StoppingSpec::new(self.theta, self.stab_window, self.stab_rho, self.max_iter)?,
            step_rule: match self.line_search {
                LineSearch::Armijo => StepRule::Armijo,
                LineSearch::Fixed => StepRule::Fixed,
            },
        })
    }

    pub fn apply_case(&mut self, case: CaseId) {
        self.omega = case.omega();
        self.noise_percent = case.noise_percent();
    }

    /// Serialized resolved config, written as the run manifest.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_and_validate() {
        let cfg = RunConfig::default();
        cfg.validate().unwrap();
        let text = cfg.to_toml();
        let back = RunConfig::parse(&text).unwrap();
        assert_eq!(back.omega, cfg.omega);
        assert_eq!(back.inclusions, cfg.inclusions);
    }

    #[test]
    fn minimal_override_keeps_defaults() {
        let cfg = RunConfig::parse("omega = 30.0\n").unwrap();
        assert_eq!(cfg.omega, 30.0);
        assert_eq!(cfg.tau, 0.003);
        assert_eq!(cfg.h, 0.1);
        assert_eq!(cfg.t_final, 1.2);
        assert_eq!(cfg.inclusions.len(), 2);
    }

    #[test]
    fn cfl_violation_rejected() {
        let err = RunConfig::parse("tau = 0.1\nt_final = 1.2\n").unwrap_err();
        assert!(matches!(err, Error::CflViolation { .. }));
    }

    #[test]
    fn negative_gamma_rejected() {
        let err = RunConfig::parse("gamma1 = -0.5\n").unwrap_err();
        assert!(matches!(err, Error::Validation { .. }));
    }

    #[test]
    fn unknown_keys_rejected() {
        let err = RunConfig::parse("not_a_key = 1\n").unwrap_err();
        assert!(matches!(err, Error::Parse(_)));
    }

    #[test]
    fn case_table() {
        assert_eq!(CaseId::parse("iii"), Some(CaseId::Iii));
        assert_eq!(CaseId::I.omega(), 21.0);
        assert_eq!(CaseId::Iv.noise_percent(), 10.0);
        let mut cfg = RunConfig::default();
        cfg.apply_case(CaseId::Iii);
        assert_eq!(cfg.omega, 30.0);
        assert_eq!(cfg.noise_percent, 3.0);
    }

    #[test]
    fn inclusion_outside_inner_rejected() {
        let text = r#"
inclusions = [{ extents = [[-3.35, -3.0], [-0.2, 0.2], [-0.1, 0.1]], eps = 4.0, mu = 1.5 }]
"#;
        assert!(RunConfig::parse(text).is_err());
    }
}
