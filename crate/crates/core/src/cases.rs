//! Experiment pipeline: synthetic data generation, reconstruction runs,
//! the standard cases and the regularization grid search. Every artifact
//! a run writes is byte-reproducible from the config seed.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::config::{Assembled, CaseId, RunConfig};
use crate::error::{Error, Result};
use crate::fields::{add_noise, CoefficientField, ObservationTrace, ScalarField};
use crate::forward::{solve_forward, RecordPolicy, TimeLoopSpec};
use crate::io::{
    write_field_csv, write_field_vtk, write_iteration_log, write_trace_csv,
};
use crate::objective::TikhonovParams;
use crate::optimizer::ReconstructionResult;
use crate::postprocess::{localization_report, relative_error, threshold_fields, LocalizationReport};
use crate::problem::InverseProblem;
use crate::verify::{adjoint_identity_check, adjoint_identity_check_mutated};

/// Restrict a refined-time trace to every `ratio`-th level.
pub fn restrict_trace_time(fine: &ObservationTrace, ratio: usize) -> Result<ObservationTrace> {
    if ratio == 0 || (fine.n_levels - 1) % ratio != 0 {
        return Err(Error::TraceMismatch(format!(
            "cannot restrict {} levels by {ratio}",
            fine.n_levels
        )));
    }
    let n_levels = (fine.n_levels - 1) / ratio + 1;
    let n_face = fine.n_face();
    let mut out = fine.clone();
    out.n_levels = n_levels;
    out.tau = fine.tau * ratio as f64;
    out.values = Vec::with_capacity(n_levels * n_face * 3);
    for level in 0..n_levels {
        let base = ratio * level * n_face * 3;
        out.values
            .extend_from_slice(&fine.values[base..base + n_face * 3]);
    }
    Ok(out)
}

/// Clean and noisy synthetic observations for the configured phantom.
///
/// The data run uses the same grid at a refined time step, then the trace
/// is restricted to the inversion time levels; noise is added from the
/// config seed.
pub fn generate_data(cfg: &RunConfig) -> Result<(ObservationTrace, ObservationTrace)> {
    let asm = cfg.assemble()?;
    let fine_tau = cfg.tau / cfg.data_refine as f64;
    let fine_tspec = TimeLoopSpec::new(fine_tau, cfg.t_final)?;
    let fine = solve_forward(
        &asm.grid,
        &asm.truth,
        &asm.bmap,
        &asm.source,
        &fine_tspec,
        cfg.s,
        RecordPolicy::BoundaryTrace,
    )?
    .recorded
    .into_trace();
    let clean = restrict_trace_time(&fine, cfg.data_refine)?;
    let noisy = add_noise(&clean, cfg.noise_percent, cfg.seed);
    Ok((clean, noisy))
}

/// Assemble the inverse problem against a given observation trace.
pub fn build_problem(cfg: &RunConfig, observed: ObservationTrace) -> Result<InverseProblem> {
    let Assembled {
        grid,
        mask,
        bmap,
        tspec,
        source,
        cutoff,
        ..
    } = cfg.assemble()?;
    let mut params = TikhonovParams::uniform_priors(&grid, cfg.gamma1, cfg.gamma2, cutoff);
    if cfg.eps_init != 1.0 {
        params.eps_prior = ScalarField::constant(&grid, cfg.eps_init);
    }
    if cfg.mu_init != 1.0 {
        params.mu_prior = ScalarField::constant(&grid, cfg.mu_init);
    }
    Ok(InverseProblem {
        grid,
        mask,
        bmap,
        source,
        tspec,
        s: cfg.s,
        params,
        observed,
    })
}

/// Reconstruction starting field from the config priors.
pub fn initial_coefficients(cfg: &RunConfig, problem: &InverseProblem) -> CoefficientField {
    let mut c = CoefficientField::background(&problem.grid);
    if cfg.eps_init != 1.0 || cfg.mu_init != 1.0 {
        let m = &problem.mask;
        for k in m.inner_lo[2]..=m.inner_hi[2] {
            for j in m.inner_lo[1]..=m.inner_hi[1] {
                for i in m.inner_lo[0]..=m.inner_hi[0] {
                    let idx = problem.grid.idx(i, j, k);
                    c.eps[idx] = cfg.eps_init;
                    c.mu[idx] = cfg.mu_init;
                }
            }
        }
    }
    c
}

/// Everything a finished case run reports.
#[derive(Debug, Clone)]
pub struct CaseOutcome {
    pub result: ReconstructionResult,
    pub eps_raw: ScalarField,
    pub mu_raw: ScalarField,
    pub eps_masked: ScalarField,
    pub mu_masked: ScalarField,
    pub max_eps_masked: f64,
    pub max_mu_masked: f64,
    pub err_eps: f64,
    pub err_mu: f64,
    pub localization_eps: LocalizationReport,
    pub report_text: String,
}

/// Reconstruct against the given data and post-process against the truth.
pub fn run_reconstruction(
    cfg: &RunConfig,
    observed: ObservationTrace,
) -> Result<CaseOutcome> {
    let problem = build_problem(cfg, observed)?;
    let opts = cfg.cg_options()?;
    let result = crate::optimizer::reconstruct_from(
        &problem,
        initial_coefficients(cfg, &problem),
        &opts,
    )?;
    summarize(cfg, &problem, result)
}

fn summarize(
    cfg: &RunConfig,
    problem: &InverseProblem,
    result: ReconstructionResult,
) -> Result<CaseOutcome> {
    let asm = cfg.assemble()?;
    let grid = &problem.grid;
    let eps_raw = ScalarField {
        n: grid.n,
        data: result.coeffs.eps.clone(),
    };
    let mu_raw = ScalarField {
        n: grid.n,
        data: result.coeffs.mu.clone(),
    };
    let (eps_masked, mu_masked) = threshold_fields(&eps_raw, &mu_raw);
    let exact_eps = ScalarField {
        n: grid.n,
        data: asm.truth.eps.clone(),
    };
    let exact_mu = ScalarField {
        n: grid.n,
        data: asm.truth.mu.clone(),
    };
    let err_eps = relative_error(&eps_masked, &exact_eps, &problem.mask, grid)?;
    let err_mu = relative_error(&mu_masked, &exact_mu, &problem.mask, grid)?;
    let localization_eps =
        localization_report(&eps_masked, grid, &cfg.inclusions, cfg.observation_axis);

    let mut text = String::new();
    let max_eps_masked = eps_masked.max();
    let max_mu_masked = mu_masked.max();
    writeln!(text, "max_eps={max_eps_masked}").unwrap();
    writeln!(text, "max_mu={max_mu_masked}").unwrap();
    writeln!(text, "err_eps={err_eps}").unwrap();
    writeln!(text, "err_mu={err_mu}").unwrap();
    writeln!(text, "iterations_eps={}", result.last_eps_iter).unwrap();
    writeln!(text, "iterations_mu={}", result.last_mu_iter).unwrap();
    writeln!(text, "line_search_failed={}", result.line_search_failed).unwrap();
    writeln!(text, "components={}", localization_eps.components.len()).unwrap();
    for (idx, comp) in localization_eps.components.iter().enumerate() {
        let (m, d) = comp
            .matched
            .map(|(m, d)| (m as i64, d))
            .unwrap_or((-1, f64::NAN));
        writeln!(
            text,
            "component_{idx}: nodes={} centroid=({:.4},{:.4},{:.4}) nearest_truth={m} transverse_distance={d:.4}",
            comp.node_count, comp.centroid[0], comp.centroid[1], comp.centroid[2]
        )
        .unwrap();
    }
    for (idx, d) in localization_eps.best_distances().iter().enumerate() {
        match d {
            Some(d) => writeln!(text, "truth_{idx}: hit distance={d:.4}").unwrap(),
            None => writeln!(text, "truth_{idx}: miss").unwrap(),
        }
    }

    Ok(CaseOutcome {
        result,
        eps_raw,
        mu_raw,
        eps_masked,
        mu_masked,
        max_eps_masked,
        max_mu_masked,
        err_eps,
        err_mu,
        localization_eps,
        report_text: text,
    })
}

/// Run one standard case end to end, writing every artifact under
/// `workdir/case_<id>/`.
pub fn run_case(case: CaseId, base_cfg: &RunConfig, workdir: &Path) -> Result<PathBuf> {
    let mut cfg = base_cfg.clone();
    cfg.apply_case(case);
    cfg.validate()?;
    let dir = workdir.join(format!("case_{}", case.label()));
    std::fs::create_dir_all(&dir)?;

    std::fs::write(dir.join("manifest.toml"), cfg.to_toml())?;

    let (clean, noisy) = generate_data(&cfg)?;
    write_trace_csv(&clean, &dir.join("trace_clean.csv"))?;
    write_trace_csv(&noisy, &dir.join("trace_noisy.csv"))?;

    let outcome = run_reconstruction(&cfg, noisy)?;
    let asm = cfg.assemble()?;
    write_iteration_log(&outcome.result.iterations, &dir.join("iterations.csv"))?;
    write_field_vtk(&outcome.eps_raw, &asm.grid, "eps_raw", &dir.join("eps_raw.vtk"))?;
    write_field_vtk(&outcome.mu_raw, &asm.grid, "mu_raw", &dir.join("mu_raw.vtk"))?;
    write_field_vtk(
        &outcome.eps_masked,
        &asm.grid,
        "eps_masked",
        &dir.join("eps_masked.vtk"),
    )?;
    write_field_vtk(
        &outcome.mu_masked,
        &asm.grid,
        "mu_masked",
        &dir.join("mu_masked.vtk"),
    )?;
    write_field_csv(&outcome.eps_raw, &asm.grid, &dir.join("eps_raw.csv"))?;
    write_field_csv(&outcome.mu_raw, &asm.grid, &dir.join("mu_raw.csv"))?;
    std::fs::write(dir.join("report.txt"), &outcome.report_text)?;
    Ok(dir)
}

/// One row of the regularization search table.
#[derive(Debug, Clone)]
pub struct RegsearchRow {
    pub gamma1: f64,
    pub gamma2: f64,
    pub err_eps: f64,
    pub err_mu: f64,
    pub max_eps: f64,
    pub max_mu: f64,
}

/// Reconstruct on every point of the gamma grid, reporting the relative
/// errors against the exact phantom; the row minimizing err_eps + err_mu
/// is the selected pair.
pub fn regsearch(cfg: &RunConfig) -> Result<(Vec<RegsearchRow>, usize)> {
    let (_, noisy) = generate_data(cfg)?;
    let mut rows = Vec::new();
    for &g1 in &cfg.gamma1_grid {
        for &g2 in &cfg.gamma2_grid {
            let mut c = cfg.clone();
            c.gamma1 = g1;
            c.gamma2 = g2;
            c.validate()?;
            let outcome = run_reconstruction(&c, noisy.clone())?;
            rows.push(RegsearchRow {
                gamma1: g1,
                gamma2: g2,
                err_eps: outcome.err_eps,
                err_mu: outcome.err_mu,
                max_eps: outcome.max_eps_masked,
                max_mu: outcome.max_mu_masked,
            });
        }
    }
    let best = rows
        .iter()
        .enumerate()
        .min_by(|a, b| {
            (a.1.err_eps + a.1.err_mu)
                .partial_cmp(&(b.1.err_eps + b.1.err_mu))
                .unwrap()
        })
        .map(|(i, _)| i)
        .unwrap_or(0);
    Ok((rows, best))
}

pub fn regsearch_table(rows: &[RegsearchRow], best: usize) -> String {
    let mut out = String::from("gamma1,gamma2,err_eps,err_mu,max_eps,max_mu,selected\n");
    for (i, r) in rows.iter().enumerate() {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.gamma1,
            r.gamma2,
            r.err_eps,
            r.err_mu,
            r.max_eps,
            r.max_mu,
            if i == best { 1 } else { 0 }
        )
        .unwrap();
    }
    out
}

/// Outcome of the adjoint identity verification.
#[derive(Debug, Clone, Copy)]
pub struct AdjointCheckOutcome {
    pub discrepancy: f64,
    pub mutated_discrepancy: f64,
}

/// Run the adjoint identity check on a small grid derived from the config
/// spacing.
pub fn adjoint_check(seed: u64) -> Result<AdjointCheckOutcome> {
    let g = crate::domain::build_grid([(0.0, 0.8), (0.0, 0.8), (0.0, 0.8)], 0.1)?;
    Ok(AdjointCheckOutcome {
        discrepancy: adjoint_identity_check(&g, 50, seed)?,
        mutated_discrepancy: adjoint_identity_check_mutated(&g, 50, seed)?,
    })
}

/// FD-vs-adjoint gradient comparison at sampled INNER nodes.
#[derive(Debug, Clone)]
pub struct GradcheckRow {
    pub node: [usize; 3],
    pub param: &'static str,
    pub fd: f64,
    pub adjoint: f64,
    pub rel_err: f64,
}

/// Run the gradient check of the configured problem at seeded random
/// inner nodes, evaluated at a half-contrast start so the wavefield
/// carries genuine sensitivity.
pub fn gradcheck(cfg: &RunConfig) -> Result<Vec<GradcheckRow>> {
    use crate::verify::{fd_gradient_oracle, CoefficientParam};
    use rand::prelude::IndexedRandom;
    use rand::SeedableRng;

    let (_, noisy) = generate_data(cfg)?;
    let problem = build_problem(cfg, noisy)?;
    // Evaluate at a smooth lifted start: the observation comes from the
    // phantom, so the residual and the wavefields carry full sensitivity,
    // while the differentiation point itself has no coefficient jumps
    // (pointwise derivative comparisons degrade on interface rows) and
    // perturbations in both directions stay admissible.
    let mut coeffs = problem.background();
    let m = &problem.mask;
    for k in m.inner_lo[2]..=m.inner_hi[2] {
        for j in m.inner_lo[1]..=m.inner_hi[1] {
            for i in m.inner_lo[0]..=m.inner_hi[0] {
                let idx = problem.grid.idx(i, j, k);
                coeffs.eps[idx] = 1.5;
                coeffs.mu[idx] = 1.3;
            }
        }
    }
    let (_, pair) = problem.objective_and_gradient(&coeffs)?;
    let vol = problem.grid.h.powi(3);

    // Probes stay two layers clear of the domain boundary so the
    // quadrature stencils read interior adjoint values only; the wall
    // ring of the backward march holds transpose bookkeeping, not field
    // values.
    let g = &problem.grid;
    let inner: Vec<usize> = problem
        .mask
        .inner_nodes(g)
        .into_iter()
        .filter(|&idx| {
            let [i, j, k] = g.ijk(idx);
            i >= 2
                && j >= 2
                && k >= 2
                && i + 2 < g.n[0]
                && j + 2 < g.n[1]
                && k + 2 < g.n[2]
        })
        .collect();
    if inner.is_empty() {
        return Err(Error::Validation {
            field: "gradcheck".into(),
            reason: "no inner nodes two layers clear of the boundary".into(),
        });
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut rows = Vec::new();
    for _ in 0..cfg.gradcheck_nodes {
        let &node = inner.choose(&mut rng).expect("inner region nonempty");
        for (param, name, g) in [
            (CoefficientParam::Eps, "eps", pair.g_eps.data[node]),
            (CoefficientParam::Mu, "mu", pair.g_mu.data[node]),
        ] {
            let fd = fd_gradient_oracle(&problem, &coeffs, param, node, cfg.gradcheck_step)?;
            rows.push(GradcheckRow {
                node: problem.grid.ijk(node),
                param: name,
                fd,
                adjoint: g * vol,
                rel_err: 0.0,
            });
        }
    }
    // Relative error with a floor at one percent of the probe-set scale:
    // a derivative passing through zero at some node should not turn an
    // absolute agreement as tight as everywhere else into a blow-up.
    let scale = rows.iter().fold(0.0f64, |m, r| m.max(r.fd.abs()));
    for r in &mut rows {
        r.rel_err = (r.fd - r.adjoint).abs() / r.fd.abs().max(0.01 * scale).max(1e-300);
    }
    Ok(rows)
}

/// Convenience wrapper used by the CLI and tests: reconstruct with data
/// loaded from `data_path` when set, generated otherwise.
pub fn reconstruct_mode(cfg: &RunConfig) -> Result<(CaseOutcome, ObservationTrace)> {
    let observed = match &cfg.data_path {
        Some(p) => crate::io::read_trace_csv(p)?,
        None => generate_data(cfg)?.1,
    };
    let outcome = run_reconstruction(cfg, observed.clone())?;
    Ok((outcome, observed))
}

/// Quiet wrapper for tests: full reconstruction from generated data.
pub fn reconstruct_generated(cfg: &RunConfig) -> Result<CaseOutcome> {
    let (_, noisy) = generate_data(cfg)?;
    run_reconstruction(cfg, noisy)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_cfg() -> RunConfig {
        let mut cfg = RunConfig::default();
        cfg.outer = [(0.0, 1.2), (0.0, 1.0), (0.0, 0.8)];
        cfg.inner = [(0.2, 1.0), (0.2, 0.8), (0.2, 0.6)];
        cfg.inclusions = vec![crate::fields::InclusionSpec {
            extents: [(0.4, 0.8), (0.4, 0.6), (0.3, 0.5)],
            eps: 6.0,
            mu: 1.8,
        }];
        cfg.tau = 0.01;
        cfg.t_final = 1.0;
        cfg.omega = 9.0;
        cfg.delta = 0.1;
        cfg.max_iter = 3;
        cfg.validate().unwrap();
        cfg
    }

    #[test]
    fn time_restriction_picks_every_other_level() {
        let cfg = tiny_cfg();
        let asm = cfg.assemble().unwrap();
        let fine_tspec = TimeLoopSpec::new(cfg.tau / 2.0, cfg.t_final).unwrap();
        let fine = solve_forward(
            &asm.grid,
            &asm.truth,
            &asm.bmap,
            &asm.source,
            &fine_tspec,
            cfg.s,
            RecordPolicy::BoundaryTrace,
        )
        .unwrap()
        .recorded
        .into_trace();
        let coarse = restrict_trace_time(&fine, 2).unwrap();
        assert_eq!(coarse.n_levels, fine_tspec.n_steps / 2 + 1);
        assert_eq!(coarse.tau, cfg.tau);
        for level in 0..coarse.n_levels {
            for node in 0..coarse.n_face() {
                for c in 0..3 {
                    assert_eq!(coarse.at(level, node, c), fine.at(2 * level, node, c));
                }
            }
        }
        assert!(restrict_trace_time(&fine, 7).is_err());
    }

    #[test]
    fn data_generation_is_seeded_and_clean_matches_frequency() {
        let cfg = tiny_cfg();
        let (clean_a, noisy_a) = generate_data(&cfg).unwrap();
        let (clean_b, noisy_b) = generate_data(&cfg).unwrap();
        assert_eq!(noisy_a, noisy_b);
        assert_eq!(clean_a, clean_b);
        // Same frequency, different noise level: identical clean traces.
        let mut cfg10 = cfg.clone();
        cfg10.noise_percent = 10.0;
        let (clean_c, noisy_c) = generate_data(&cfg10).unwrap();
        assert_eq!(clean_a.values, clean_c.values);
        assert_ne!(noisy_a.values, noisy_c.values);
    }

    #[test]
    fn case_artifacts_are_written_and_reproducible() {
        let mut cfg = tiny_cfg();
        cfg.max_iter = 2;
        let tmp = std::env::temp_dir().join(format!("emrecon_case_{}", std::process::id()));
        let dir = run_case(CaseId::I, &cfg, &tmp).unwrap();
        for file in [
            "manifest.toml",
            "trace_clean.csv",
            "trace_noisy.csv",
            "iterations.csv",
            "eps_raw.vtk",
            "mu_raw.vtk",
            "eps_masked.vtk",
            "mu_masked.vtk",
            "eps_raw.csv",
            "mu_raw.csv",
            "report.txt",
        ] {
            assert!(dir.join(file).exists(), "{file} missing");
        }
        let report_first = std::fs::read(dir.join("report.txt")).unwrap();
        let noisy_first = std::fs::read(dir.join("trace_noisy.csv")).unwrap();
        // Byte-identical rerun.
        let dir2 = run_case(CaseId::I, &cfg, &tmp).unwrap();
        assert_eq!(std::fs::read(dir2.join("report.txt")).unwrap(), report_first);
        assert_eq!(
            std::fs::read(dir2.join("trace_noisy.csv")).unwrap(),
            noisy_first
        );
        std::fs::remove_dir_all(&tmp).ok();
    }

    #[test]
    fn regsearch_reports_each_grid_point() {
        let mut cfg = tiny_cfg();
        cfg.max_iter = 1;
        cfg.gamma1_grid = vec![0.0, 1e-4];
        cfg.gamma2_grid = vec![1e-3];
        let (rows, best) = regsearch(&cfg).unwrap();
        assert_eq!(rows.len(), 2);
        assert!(best < rows.len());
        assert!(rows.iter().any(|r| r.gamma1 == 0.0));
        let table = regsearch_table(&rows, best);
        assert_eq!(table.lines().count(), 3);
        assert_eq!(table.lines().filter(|l| l.ends_with(",1")).count(), 1);
    }

    #[test]
    fn adjoint_check_outcome() {
        let out = adjoint_check(3).unwrap();
        assert!(out.discrepancy < 1e-10);
        assert!(out.mutated_discrepancy > 1e-6);
    }
}
