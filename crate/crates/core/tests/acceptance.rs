//! Acceptance suite: every check prints one PASS line with its measured
//! numbers once its assertions hold.
//!
//! The slow end-to-end reconstructions (criteria 6..9) run the standard
//! cases at full scale and take minutes each; the whole suite stays well
//! under an hour on one core.

use emrecon::adjoint::CutoffSpec;
use emrecon::cases;
use emrecon::config::{CaseId, RunConfig};
use emrecon::domain::{build_decomposition, build_grid, classify_boundary, Grid3};
use emrecon::fields::{CoefficientField, VectorFieldFrame};
use emrecon::forward::{solve_forward, RecordPolicy, SourcePulse, TimeLoopSpec};
use emrecon::stencil::{
    apply_stabilized_operator, cfl_max_step, BoundaryRule, StencilContext,
};
use emrecon::verify::{
    adjoint_identity_check, adjoint_identity_check_mutated, adjoint_identity_symmetric_control,
};

/// Independently coded reference: the seven-point Laplacian made of the
/// same central first-difference applied twice, i.e. second differences
/// with doubled spacing.
fn reference_laplacian(g: &Grid3, f: &[f64], idx: usize) -> f64 {
    let inv4h2 = 1.0 / (4.0 * g.h * g.h);
    let mut acc = 0.0;
    for a in 0..3 {
        let s = 2 * g.stride(a);
        acc += (f[idx + s] - 2.0 * f[idx] + f[idx - s]) * inv4h2;
    }
    acc
}

#[test]
fn operator_reduces_to_wave_equation() {
    let start = std::time::Instant::now();
    // Dyadic spacing and integer node values make every floating-point
    // operation exact, so the reduction identity must hold bit for bit.
    let g = build_grid([(0.0, 4.0), (0.0, 3.0), (0.0, 2.5)], 0.25).unwrap();
    let ctx = StencilContext::new(&g, BoundaryRule::OneSided, 1.0).unwrap();
    let coeffs = CoefficientField::background(&g);
    let mut state = 0xfeedu64;
    let mut next_int = move || {
        state = state
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        ((state >> 33) % 33) as f64 - 16.0
    };
    let e = VectorFieldFrame::from_fn(&g, |_| [next_int(), next_int(), next_int()]);
    let a = apply_stabilized_operator(&ctx, &e, &coeffs).unwrap();
    let mut worst: f64 = 0.0;
    let mut checked = 0usize;
    for k in 2..g.n[2] - 2 {
        for j in 2..g.n[1] - 2 {
            for i in 2..g.n[0] - 2 {
                let idx = g.idx(i, j, k);
                for c in 0..3 {
                    let lap = reference_laplacian(&g, &e.comps[c], idx);
                    worst = worst.max((a.comps[c][idx] + lap).abs());
                    checked += 1;
                }
            }
        }
    }
    assert!(checked > 1000);
    assert_eq!(worst, 0.0, "operator must equal -lap exactly at depth 2");
    let dt = start.elapsed();
    assert!(dt.as_secs_f64() < 1.0, "took {dt:?}");
    println!("PASS operator reduction: max |A(E) + lap E| = {worst} over {checked} samples in {dt:?}");
}

#[test]
fn adjoint_identity_with_mutation_control() {
    let start = std::time::Instant::now();
    let g = build_grid([(0.0, 0.8), (0.0, 0.8), (0.0, 0.8)], 0.1).unwrap();
    assert_eq!(g.node_count(), 9 * 9 * 9);
    let mut worst: f64 = 0.0;
    for seed in [1u64, 2, 3] {
        worst = worst.max(adjoint_identity_check(&g, 50, seed).unwrap());
    }
    assert!(worst < 1e-10, "discrepancy {worst}");
    let mutated = adjoint_identity_check_mutated(&g, 50, 1).unwrap();
    assert!(
        mutated > 1e-6,
        "sign-flipped adjoint must fail the identity, got {mutated}"
    );
    let control = adjoint_identity_symmetric_control(&g, 50, 9).unwrap();
    assert_eq!(control, 0.0);
    let dt = start.elapsed();
    assert!(dt.as_secs_f64() < 5.0, "took {dt:?}");
    println!(
        "PASS adjoint identity: discrepancy {worst:.3e} (< 1e-10), sign-flipped {mutated:.3e}, symmetric control {control} in {dt:?}"
    );
}

fn gradcheck_config(tau: f64) -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.h = 0.2;
    // The inner depth snaps to the coarser spacing.
    cfg.inner = [(-3.2, 3.2), (-0.6, 0.6), (-0.2, 0.2)];
    cfg.tau = tau;
    // A lower frequency keeps a usable propagating band at the doubled
    // spacing while the pulse still ends well before the final time.
    cfg.omega = 8.0;
    cfg.validate().unwrap();
    cfg
}

#[test]
fn gradient_consistency_against_fd_oracle() {
    let start = std::time::Instant::now();
    let worst = |tau: f64| -> f64 {
        let rows = cases::gradcheck(&gradcheck_config(tau)).unwrap();
        assert_eq!(rows.len(), 10, "five nodes, two parameters");
        rows.iter().fold(0.0f64, |m, r| m.max(r.rel_err))
    };
    let base = worst(0.003);
    assert!(base <= 5e-2, "worst relative error {base} at tau 0.003");
    let half = worst(0.0015);
    // Refinement must not lose accuracy; at these magnitudes both sit at
    // the oracle's own finite-difference floor, orders below tolerance.
    assert!(
        half < base || (base < 1e-4 && half < 1e-4),
        "no improvement under tau refinement: {base} -> {half}"
    );
    let dt = start.elapsed();
    assert!(dt.as_secs_f64() < 600.0, "took {dt:?}");
    println!("PASS gradient consistency: worst rel err {base:.3e} at tau 3e-3, {half:.3e} at tau 1.5e-3 in {dt:?}");
}

#[test]
fn wave_speed_across_depth() {
    let start = std::time::Instant::now();
    // Homogeneous medium; the pulse must stay well resolved by the
    // composed central stencils, so the probe uses a low frequency on a
    // matching grid. Arrival times at two depths cancel the source rise.
    let g = build_grid([(0.0, 0.6), (0.0, 0.6), (-0.4, 0.4)], 0.05).unwrap();
    let b = classify_boundary(&g, 2).unwrap();
    let c = CoefficientField::background(&g);
    let tspec = TimeLoopSpec::new(0.002, 1.2).unwrap();
    let src = SourcePulse::new(3.5);
    let hist = solve_forward(&g, &c, &b, &src, &tspec, 1.0, RecordPolicy::FullHistory)
        .unwrap()
        .recorded
        .into_history();
    let (ci, cj) = (g.n[0] / 2, g.n[1] / 2);
    let arrival = |k: usize| -> f64 {
        let idx = g.idx(ci, cj, k);
        for (lvl, f) in hist.frames.iter().enumerate() {
            if f.comps[1][idx].abs() >= 0.2 {
                return lvl as f64 * tspec.tau;
            }
        }
        panic!("no arrival at plane {k}");
    };
    // Planes two cells from either face, spanning 0.6 of the 0.8 extent.
    let k_near = g.n[2] - 3;
    let k_far = 2;
    let dist = (k_near - k_far) as f64 * g.h;
    let t = arrival(k_far) - arrival(k_near);
    let speed = dist / t;
    let err = (speed - 1.0).abs();
    assert!(err < 0.02, "speed {speed} over {dist}, error {err:.4}");
    let dt = start.elapsed();
    assert!(dt.as_secs_f64() < 30.0, "took {dt:?}");
    println!("PASS wave speed: measured {speed:.4} over depth {dist} (error {err:.4} < 0.02) in {dt:?}");
}

#[test]
fn stability_at_cfl_margin_and_guard() {
    let start = std::time::Instant::now();
    let cfg = RunConfig::default();
    let asm = cfg.assemble().unwrap();
    let tau_max = cfl_max_step(&asm.grid, &asm.truth);
    let bound = asm.grid.h / 3.0f64.sqrt();
    assert!((tau_max - bound).abs() < 1e-15);

    // 0.9 tau_max must stay bounded over the full window.
    let tau = 0.9 * tau_max;
    let n = (cfg.t_final / tau).floor() as usize;
    let tspec = TimeLoopSpec::new(tau, tau * n as f64).unwrap();
    let run = solve_forward(
        &asm.grid,
        &asm.truth,
        &asm.bmap,
        &asm.source,
        &tspec,
        cfg.s,
        RecordPolicy::BoundaryTrace,
    )
    .unwrap();
    assert!(
        run.max_abs < 10.0,
        "field blew up: max |E| = {}",
        run.max_abs
    );

    // 1.5 tau_max is rejected by the guard before stepping.
    let tau_bad = 1.5 * tau_max;
    let n_bad = (cfg.t_final / tau_bad).floor().max(2.0) as usize;
    let tspec_bad = TimeLoopSpec::new(tau_bad, tau_bad * n_bad as f64).unwrap();
    let err = solve_forward(
        &asm.grid,
        &asm.truth,
        &asm.bmap,
        &asm.source,
        &tspec_bad,
        cfg.s,
        RecordPolicy::BoundaryTrace,
    )
    .unwrap_err();
    assert!(matches!(err, emrecon::Error::CflViolation { .. }));
    let dt = start.elapsed();
    assert!(dt.as_secs_f64() < 60.0, "took {dt:?}");
    println!(
        "PASS stability: max |E| = {:.4} at 0.9 tau_max over {n} steps; 1.5 tau_max rejected ({err}) in {dt:?}",
        run.max_abs
    );
}

struct CaseChecks {
    eps_band: (f64, f64),
    mu_band: (f64, f64),
}

fn check_case(case: CaseId, checks: &CaseChecks, dir: &std::path::Path) -> cases::CaseOutcome {
    let cfg = RunConfig::default();
    let case_dir = cases::run_case(case, &cfg, dir).unwrap();
    // Re-derive the outcome from the written artifacts' source: run the
    // reconstruction again through the library to inspect it.
    let mut case_cfg = cfg.clone();
    case_cfg.apply_case(case);
    let (_, noisy) = cases::generate_data(&case_cfg).unwrap();
    let outcome = cases::run_reconstruction(&case_cfg, noisy).unwrap();

    let report = std::fs::read_to_string(case_dir.join("report.txt")).unwrap();
    assert!(report.contains(&format!("max_eps={}", outcome.max_eps_masked)));

    let (lo_e, hi_e) = checks.eps_band;
    assert!(
        outcome.max_eps_masked >= lo_e && outcome.max_eps_masked <= hi_e,
        "case {}: masked max eps {} outside [{lo_e}, {hi_e}]",
        case.label(),
        outcome.max_eps_masked
    );
    let (lo_m, hi_m) = checks.mu_band;
    assert!(
        outcome.max_mu_masked >= lo_m && outcome.max_mu_masked <= hi_m,
        "case {}: masked max mu {} outside [{lo_m}, {hi_m}]",
        case.label(),
        outcome.max_mu_masked
    );
    // Both inclusions localized within 3h transverse to the observation
    // axis.
    let dists = outcome.localization_eps.best_distances();
    assert_eq!(dists.len(), 2);
    for (t, d) in dists.iter().enumerate() {
        let d = d.unwrap_or(f64::INFINITY);
        assert!(
            d <= 3.0 * case_cfg.h + 1e-12,
            "case {}: inclusion {t} centroid off by {d}",
            case.label()
        );
    }
    outcome
}

#[test]
fn reconstruction_case_iii_bands_monotonicity_determinism() {
    let start = std::time::Instant::now();
    let tmp = std::env::temp_dir().join(format!("emrecon_accept_iii_{}", std::process::id()));

    // Criterion: thresholded max eps within [10, 15] (reported value 11.3),
    // max mu within [1.4, 2.4] (reported 1.7), centroids within 3h.
    let outcome = check_case(
        CaseId::Iii,
        &CaseChecks {
            eps_band: (10.0, 15.0),
            mu_band: (1.4, 2.4),
        },
        &tmp,
    );
    let dists: Vec<f64> = outcome
        .localization_eps
        .best_distances()
        .iter()
        .map(|d| d.unwrap())
        .collect();
    println!(
        "PASS case iii bands: masked max eps {:.3} in [10, 15], max mu {:.3} in [1.4, 2.4], centroid offsets {:.3}/{:.3} <= 0.3",
        outcome.max_eps_masked, outcome.max_mu_masked, dists[0], dists[1]
    );

    // Monotonicity of the functional across accepted line-search steps.
    let hist = &outcome.result.objective_history;
    for w in hist.windows(2) {
        assert!(
            w[1] <= w[0] * (1.0 + 1e-12),
            "objective increased: {} -> {}",
            w[0],
            w[1]
        );
    }
    println!(
        "PASS monotonicity: objective nonincreasing over {} accepted iterations ({:.6e} -> {:.6e})",
        hist.len() - 1,
        hist.first().unwrap(),
        hist.last().unwrap()
    );

    // Determinism: the full case pipeline repeats byte for byte.
    let cfg = RunConfig::default();
    let dir_a = cases::run_case(CaseId::Iii, &cfg, &tmp.join("a")).unwrap();
    let dir_b = cases::run_case(CaseId::Iii, &cfg, &tmp.join("b")).unwrap();
    for file in ["report.txt", "iterations.csv", "trace_noisy.csv", "eps_raw.csv"] {
        let a = std::fs::read(dir_a.join(file)).unwrap();
        let b = std::fs::read(dir_b.join(file)).unwrap();
        assert_eq!(a, b, "{file} differs between identical runs");
    }
    println!("PASS determinism: repeated case iii artifacts byte-identical");
    println!("case iii total {:?}", start.elapsed());
    std::fs::remove_dir_all(&tmp).ok();
}

#[test]
fn reconstruction_case_i_bands() {
    let start = std::time::Instant::now();
    let tmp = std::env::temp_dir().join(format!("emrecon_accept_i_{}", std::process::id()));
    // Criterion: thresholded max eps at least 12 (reported value sits at
    // the upper clamp), max mu within [1.6, 2.4] (reported 2).
    let outcome = check_case(
        CaseId::I,
        &CaseChecks {
            eps_band: (12.0, 15.0),
            mu_band: (1.6, 2.4),
        },
        &tmp,
    );
    println!(
        "PASS case i bands: masked max eps {:.3} >= 12, max mu {:.3} in [1.6, 2.4] in {:?}",
        outcome.max_eps_masked,
        outcome.max_mu_masked,
        start.elapsed()
    );
    std::fs::remove_dir_all(&tmp).ok();
}
