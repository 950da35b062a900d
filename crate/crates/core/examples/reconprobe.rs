//! Scratch reconstruction experiment driver.
//! args: omega gamma1 gamma2 alpha1 alpha2 max_iter noise_pct
use emrecon::adjoint::CutoffSpec;
use emrecon::domain::{build_decomposition, build_grid, classify_boundary};
use emrecon::fields::{add_noise, phantom, InclusionSpec, ObservationTrace};
use emrecon::forward::{solve_forward, RecordPolicy, SourcePulse, TimeLoopSpec};
use emrecon::objective::TikhonovParams;
use emrecon::optimizer::{reconstruct, CgOptions, StepRule, StepScales, StoppingSpec};
use emrecon::problem::InverseProblem;

fn restrict_time(fine: &ObservationTrace, n_levels: usize, ratio: usize) -> ObservationTrace {
    let mut out = fine.clone();
    out.n_levels = n_levels;
    out.tau = fine.tau * ratio as f64;
    out.values = Vec::with_capacity(n_levels * fine.n_face() * 3);
    for lvl in 0..n_levels {
        let base = ratio * lvl * fine.n_face() * 3;
        out.values.extend_from_slice(&fine.values[base..base + fine.n_face() * 3]);
    }
    out
}

fn main() {
    let argv: Vec<String> = std::env::args().skip(1).collect();
    let a: Vec<f64> = argv[..7].iter().map(|s| s.parse().unwrap()).collect();
    let (omega, g1, g2, a1, a2, maxit, noise) = (a[0], a[1], a[2], a[3], a[4], a[5] as usize, a[6]);
    let geom = argv.get(7).cloned().unwrap_or_else(|| "a".into());
    let rho: f64 = argv.get(8).map(|s| s.parse().unwrap()).unwrap_or(1e-4);
    let fixed = argv.get(9).map(|s| s == "fixed").unwrap_or(false);
    let h = 0.1;
    let tau = 0.003;
    let outer = [(-3.4, 3.4), (-0.8, 0.8), (-0.4, 0.4)];
    let inner = [(-3.2, 3.2), (-0.6, 0.6), (-0.3, 0.3)];
    let incs = match geom.as_str() {
        "b" => vec![
            InclusionSpec { extents: [(-1.2, -0.4), (-0.2, 0.2), (-0.1, 0.1)], eps: 12.0, mu: 2.0 },
            InclusionSpec { extents: [(0.4, 1.2), (-0.2, 0.2), (-0.1, 0.1)], eps: 12.0, mu: 2.0 },
        ],
        "d" => vec![
            InclusionSpec { extents: [(-1.2, -0.4), (-0.4, 0.4), (-0.2, 0.2)], eps: 12.0, mu: 2.0 },
            InclusionSpec { extents: [(0.4, 1.2), (-0.4, 0.4), (-0.2, 0.2)], eps: 12.0, mu: 2.0 },
        ],
        "c" => vec![
            InclusionSpec { extents: [(-1.2, -0.4), (-0.3, 0.3), (-0.2, 0.2)], eps: 12.0, mu: 2.0 },
            InclusionSpec { extents: [(0.4, 1.2), (-0.3, 0.3), (-0.2, 0.2)], eps: 12.0, mu: 2.0 },
        ],
        _ => vec![
            InclusionSpec { extents: [(-1.0, -0.6), (-0.2, 0.2), (-0.1, 0.1)], eps: 12.0, mu: 2.0 },
            InclusionSpec { extents: [(0.6, 1.0), (-0.2, 0.2), (-0.1, 0.1)], eps: 12.0, mu: 2.0 },
        ],
    };
    let g = build_grid(outer, h).unwrap();
    let mask = build_decomposition(&g, inner).unwrap();
    let bmap = classify_boundary(&g, 2).unwrap();
    let tspec = TimeLoopSpec::new(tau, 1.2).unwrap();
    let source = SourcePulse::new(omega);
    let truth = phantom(&g, &mask, &incs).unwrap();
    let tspec_f = TimeLoopSpec::new(tau / 2.0, 1.2).unwrap();
    let fine = solve_forward(&g, &truth, &bmap, &source, &tspec_f, 1.0, RecordPolicy::BoundaryTrace).unwrap().recorded.into_trace();
    let clean = restrict_time(&fine, tspec.n_steps + 1, 2);
    let observed = add_noise(&clean, noise, 42);
    let cutoff = CutoffSpec::new(0.12, 1.2).unwrap();
    let params = TikhonovParams::uniform_priors(&g, g1, g2, cutoff);
    let problem = InverseProblem { grid: g.clone(), mask: mask.clone(), bmap, source, tspec, s: 1.0, params, observed };
    let opts = CgOptions {
        scales: StepScales { alpha_eps: a1, alpha_mu: a2 },
        stopping: StoppingSpec::new(1e-6, 5, rho, maxit).unwrap(),
        step_rule: if fixed { StepRule::Fixed } else { StepRule::Armijo },
    };
    let t0 = std::time::Instant::now();
    let res = reconstruct(&problem, &opts).unwrap();
    println!("# done in {:?}, line_search_failed={}", t0.elapsed(), res.line_search_failed);
    for r in &res.iterations {
        println!("m {:3}  F {:.5e}  |g_e| {:.3e}  |g_m| {:.3e}  a {:.4}  max_e {:7.3}  max_m {:6.3}",
            r.iter, r.objective, r.grad_norm_eps, r.grad_norm_mu, r.alpha, r.max_eps, r.max_mu);
    }
    // Where is the max and are the blobs in the right places?
    let c = &res.coeffs;
    let mut best = (0usize, 0.0f64);
    for (i, &v) in c.eps.iter().enumerate() { if v > best.1 { best = (i, v); } }
    let ijk = g.ijk(best.0);
    let xyz = g.coord(ijk[0], ijk[1], ijk[2]);
    println!("max eps {:.3} at {:?} -> ({:.2},{:.2},{:.2})", best.1, ijk, xyz[0], xyz[1], xyz[2]);
    let mut bestm = (0usize, 0.0f64);
    for (i, &v) in c.mu.iter().enumerate() { if v > bestm.1 { bestm = (i, v); } }
    let ijk = g.ijk(bestm.0);
    let xyz = g.coord(ijk[0], ijk[1], ijk[2]);
    println!("max mu {:.3} at {:?} -> ({:.2},{:.2},{:.2})", bestm.1, ijk, xyz[0], xyz[1], xyz[2]);
}
