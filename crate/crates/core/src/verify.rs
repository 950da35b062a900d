//! Independent checks run before trusting the optimizer: a discrete
//! adjoint identity for the leapfrog chain and a finite-difference oracle
//! for the coefficient gradients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::domain::Grid3;
use crate::error::{Error, Result};
use crate::fields::{CoefficientField, VectorFieldFrame};
use crate::problem::InverseProblem;
use crate::stencil::{
    apply_stabilized_adjoint_into, apply_stabilized_into, cfl_max_step, BoundaryRule,
    StencilContext, StencilWorkspace,
};

const MAX_IDENTITY_NODES: usize = 9 * 9 * 9;
const MAX_IDENTITY_STEPS: usize = 50;

/// Which coefficient a check targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoefficientParam {
    Eps,
    Mu,
}

/// eps-weighted inner product; the multiplication order keeps it exactly
/// symmetric in its two field arguments.
fn weighted_dot(w: &[f64], a: &VectorFieldFrame, b: &VectorFieldFrame) -> f64 {
    let mut acc = 0.0;
    for c in 0..3 {
        for ((x, y), wi) in a.comps[c].iter().zip(&b.comps[c]).zip(w) {
            acc += wi * (x * y);
        }
    }
    acc
}

fn random_coeffs(g: &Grid3, rng: &mut ChaCha8Rng) -> CoefficientField {
    let mut c = CoefficientField::background(g);
    for (e, m) in c.eps.iter_mut().zip(c.mu.iter_mut()) {
        *e = 1.0 + 2.0 * rng.random::<f64>();
        *m = 1.0 + rng.random::<f64>();
    }
    c
}

fn random_interior(g: &Grid3, rng: &mut ChaCha8Rng) -> VectorFieldFrame {
    let mut f = VectorFieldFrame::zeros(g);
    for k in 1..g.n[2] - 1 {
        for j in 1..g.n[1] - 1 {
            for i in 1..g.n[0] - 1 {
                let idx = g.idx(i, j, k);
                for c in 0..3 {
                    f.comps[c][idx] = rng.random::<f64>() - 0.5;
                }
            }
        }
    }
    f
}

struct Chain<'a> {
    ctx: StencilContext<'a>,
    coeffs: &'a CoefficientField,
    inv_w: Vec<f64>,
    tau2: f64,
    ws: StencilWorkspace,
    buf: [Vec<f64>; 3],
}

#[derive(Clone, Copy, PartialEq)]
enum ChainOp {
    Forward,
    Adjoint,
    /// Adjoint with the divergence-penalty sign flipped; used to prove
    /// the identity test is sensitive.
    AdjointFlippedPenalty,
}

impl<'a> Chain<'a> {
    fn new(grid: &'a Grid3, coeffs: &'a CoefficientField, tau: f64, s: f64) -> Result<Self> {
        let ctx = StencilContext::new(grid, BoundaryRule::Frozen, s)?;
        Ok(Chain {
            ctx,
            coeffs,
            inv_w: coeffs.eps.iter().map(|e| 1.0 / e).collect(),
            tau2: tau * tau,
            ws: StencilWorkspace::new(grid),
            buf: [
                vec![0.0; grid.node_count()],
                vec![0.0; grid.node_count()],
                vec![0.0; grid.node_count()],
            ],
        })
    }

    fn step(
        &mut self,
        prev: &VectorFieldFrame,
        curr: &VectorFieldFrame,
        next: &mut VectorFieldFrame,
        op: ChainOp,
    ) {
        match op {
            ChainOp::Forward => apply_stabilized_into(
                &self.ctx,
                &curr.comps,
                self.coeffs,
                &mut self.ws,
                &mut self.buf,
            ),
            ChainOp::Adjoint => apply_stabilized_adjoint_into(
                &self.ctx,
                &curr.comps,
                self.coeffs,
                &mut self.ws,
                &mut self.buf,
            ),
            ChainOp::AdjointFlippedPenalty => {
                let mut flipped = self.ctx;
                flipped.s = -self.ctx.s;
                apply_stabilized_adjoint_into(
                    &flipped,
                    &curr.comps,
                    self.coeffs,
                    &mut self.ws,
                    &mut self.buf,
                )
            }
        }
        let tau2 = self.tau2;
        for c in 0..3 {
            let a = &self.buf[c];
            let p = &prev.comps[c];
            let q = &curr.comps[c];
            let out = &mut next.comps[c];
            for i in 0..out.len() {
                out[i] = 2.0 * q[i] - p[i] - tau2 * self.inv_w[i] * a[i];
            }
        }
    }

    /// K-1 leapfrog steps from (0, input); returns the final frame.
    fn run(&mut self, input: &VectorFieldFrame, n_steps: usize, op: ChainOp) -> VectorFieldFrame {
        let g = self.ctx.grid;
        let mut prev = VectorFieldFrame::zeros(g);
        let mut curr = input.clone();
        let mut next = VectorFieldFrame::zeros(g);
        for _ in 1..n_steps {
            self.step(&prev, &curr, &mut next, op);
            std::mem::swap(&mut prev, &mut curr);
            std::mem::swap(&mut curr, &mut next);
        }
        curr
    }
}

fn identity_impl(
    grid: &Grid3,
    n_steps: usize,
    seed: u64,
    op: ChainOp,
    uniform_coeffs: bool,
    equal_fields: bool,
) -> Result<f64> {
    if grid.node_count() > MAX_IDENTITY_NODES {
        return Err(Error::Validation {
            field: "grid".into(),
            reason: format!(
                "identity check wants at most {MAX_IDENTITY_NODES} nodes, got {}",
                grid.node_count()
            ),
        });
    }
    if n_steps < 2 || n_steps > MAX_IDENTITY_STEPS {
        return Err(Error::Validation {
            field: "n_steps".into(),
            reason: format!("identity check wants 2..={MAX_IDENTITY_STEPS} steps, got {n_steps}"),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let coeffs = if uniform_coeffs {
        CoefficientField::background(grid)
    } else {
        random_coeffs(grid, &mut rng)
    };
    let tau = 0.5 * cfl_max_step(grid, &coeffs);
    let u = random_interior(grid, &mut rng);
    let v = if equal_fields {
        u.clone()
    } else {
        random_interior(grid, &mut rng)
    };

    let mut chain = Chain::new(grid, &coeffs, tau, 1.0)?;
    // Forward: E^0 = 0, E^1 = u, output E^K.
    let e_final = chain.run(&u, n_steps, ChainOp::Forward);
    // Adjoint: lambda^K = 0, lambda^{K-1} = v, output lambda^0.
    let l_final = chain.run(&v, n_steps, op);

    let lhs = weighted_dot(&coeffs.eps, &e_final, &v);
    let rhs = weighted_dot(&coeffs.eps, &u, &l_final);
    let nu = weighted_dot(&coeffs.eps, &u, &u).sqrt();
    let nv = weighted_dot(&coeffs.eps, &v, &v).sqrt();
    Ok((lhs - rhs).abs() / (nu * nv).max(1e-300))
}

/// Relative discrepancy |<L u, v> - <u, L* v>| / (|u| |v|) of one
/// linearized leapfrog chain against its adjoint chain, frozen boundaries,
/// random interior fields and random admissible coefficients.
pub fn adjoint_identity_check(grid: &Grid3, n_steps: usize, seed: u64) -> Result<f64> {
    identity_impl(grid, n_steps, seed, ChainOp::Adjoint, false, false)
}

/// Same chain with the adjoint's penalty sign deliberately flipped; a
/// sound test setup must report a large discrepancy here.
pub fn adjoint_identity_check_mutated(grid: &Grid3, n_steps: usize, seed: u64) -> Result<f64> {
    identity_impl(
        grid,
        n_steps,
        seed,
        ChainOp::AdjointFlippedPenalty,
        false,
        false,
    )
}

/// Symmetric control: uniform coefficients make the chain self-adjoint,
/// and with u = v the two pairings are the same floating-point sum.
pub fn adjoint_identity_symmetric_control(grid: &Grid3, n_steps: usize, seed: u64) -> Result<f64> {
    identity_impl(grid, n_steps, seed, ChainOp::Adjoint, true, true)
}

/// Central finite difference of F along a single-node coefficient
/// perturbation: (F(c + d e) - F(c - d e)) / (2 d).
///
/// Uses only forward solves and the functional, never the adjoint path.
/// The matching adjoint quantity is the gradient entry times the dual
/// cell volume h^3.
pub fn fd_gradient_oracle(
    problem: &InverseProblem,
    coeffs: &CoefficientField,
    param: CoefficientParam,
    node: usize,
    h_fd: f64,
) -> Result<f64> {
    let [i, j, k] = problem.grid.ijk(node);
    if !problem.mask.is_inner(i, j, k) {
        return Err(Error::Validation {
            field: "node".into(),
            reason: format!("node ({i},{j},{k}) is not INNER"),
        });
    }
    if !(h_fd > 0.0) {
        return Err(Error::Validation {
            field: "h_fd".into(),
            reason: "perturbation must be positive".into(),
        });
    }
    let (value, bounds) = match param {
        CoefficientParam::Eps => (coeffs.eps[node], coeffs.eps_bounds),
        CoefficientParam::Mu => (coeffs.mu[node], coeffs.mu_bounds),
    };
    if value - h_fd < bounds.0 || value + h_fd > bounds.1 {
        return Err(Error::ClampContact {
            value,
            step: h_fd,
        });
    }
    let mut perturbed = coeffs.clone();
    let slot = match param {
        CoefficientParam::Eps => &mut perturbed.eps[node],
        CoefficientParam::Mu => &mut perturbed.mu[node],
    };
    *slot = value + h_fd;
    let f_plus = problem.objective(&perturbed)?;
    let slot = match param {
        CoefficientParam::Eps => &mut perturbed.eps[node],
        CoefficientParam::Mu => &mut perturbed.mu[node],
    };
    *slot = value - h_fd;
    let f_minus = problem.objective(&perturbed)?;
    Ok((f_plus - f_minus) / (2.0 * h_fd))
}
