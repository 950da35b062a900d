//! Discrete spatial operators on the structured grid: curl, divergence,
//! gradient, the stabilized operator of the governing equation, lumped
//! mass weights and the CFL bound.
//!
//! All first derivatives are second-order central differences at interior
//! nodes and first-order one-sided at boundary nodes (or zero, under the
//! frozen-boundary rule used by the adjoint identity check). The composite
//! operators are built strictly by composing these passes with pointwise
//! coefficient multiplications in between.

use rayon::prelude::*;

use crate::domain::Grid3;
use crate::error::{Error, Result};
use crate::fields::{CoefficientField, ScalarField, VectorFieldFrame};

/// How derivative stencils treat boundary nodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryRule {
    /// First-order one-sided differences on the boundary.
    OneSided,
    /// Boundary output forced to zero. Restricted to interior nodes the
    /// derivative matrices are then exactly antisymmetric, which the
    /// adjoint identity check relies on.
    Frozen,
}

/// Grid, boundary rule and divergence penalty for the stabilized operator.
#[derive(Debug, Clone, Copy)]
pub struct StencilContext<'g> {
    pub grid: &'g Grid3,
    pub rule: BoundaryRule,
    /// Divergence penalty factor, in [0, 1].
    pub s: f64,
}

impl<'g> StencilContext<'g> {
    pub fn new(grid: &'g Grid3, rule: BoundaryRule, s: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&s) {
            return Err(Error::Validation {
                field: "s".into(),
                reason: format!("penalty factor must lie in [0, 1], got {s}"),
            });
        }
        Ok(StencilContext { grid, rule, s })
    }
}

/// Elementwise combination of a derivative value with the output slot.
trait Combine: Copy + Sync {
    fn apply(&self, out: &mut f64, d: f64);
}

#[derive(Clone, Copy)]
struct Assign;
#[derive(Clone, Copy)]
struct Add;
#[derive(Clone, Copy)]
struct SubScaled(f64);

impl Combine for Assign {
    #[inline(always)]
    fn apply(&self, out: &mut f64, d: f64) {
        *out = d;
    }
}
impl Combine for Add {
    #[inline(always)]
    fn apply(&self, out: &mut f64, d: f64) {
        *out += d;
    }
}
impl Combine for SubScaled {
    #[inline(always)]
    fn apply(&self, out: &mut f64, d: f64) {
        *out -= self.0 * d;
    }
}

/// Grids below this node count run the kernels serially.
const PAR_THRESHOLD: usize = 1 << 13;

/// d(src)/dx_axis combined into `out` elementwise.
fn diff_axis<C: Combine>(
    g: &Grid3,
    src: &[f64],
    axis: usize,
    rule: BoundaryRule,
    out: &mut [f64],
    op: C,
) {
    let [n0, n1, n2] = g.n;
    let slab = n0 * n1;
    let inv2h = 1.0 / (2.0 * g.h);
    let invh = 1.0 / g.h;
    debug_assert_eq!(src.len(), g.node_count());
    debug_assert_eq!(out.len(), g.node_count());

    let row_kernel_0 = |o: &mut [f64], s: &[f64]| {
        for i in 1..n0 - 1 {
            op.apply(&mut o[i], (s[i + 1] - s[i - 1]) * inv2h);
        }
        match rule {
            BoundaryRule::OneSided => {
                op.apply(&mut o[0], (s[1] - s[0]) * invh);
                op.apply(&mut o[n0 - 1], (s[n0 - 1] - s[n0 - 2]) * invh);
            }
            BoundaryRule::Frozen => {
                op.apply(&mut o[0], 0.0);
                op.apply(&mut o[n0 - 1], 0.0);
            }
        }
    };

    let slab_kernel_1 = |o: &mut [f64], s: &[f64]| {
        for j in 1..n1 - 1 {
            let r = j * n0;
            for i in 0..n0 {
                op.apply(&mut o[r + i], (s[r + n0 + i] - s[r - n0 + i]) * inv2h);
            }
        }
        let last = (n1 - 1) * n0;
        match rule {
            BoundaryRule::OneSided => {
                for i in 0..n0 {
                    op.apply(&mut o[i], (s[n0 + i] - s[i]) * invh);
                    op.apply(&mut o[last + i], (s[last + i] - s[last - n0 + i]) * invh);
                }
            }
            BoundaryRule::Frozen => {
                for i in 0..n0 {
                    op.apply(&mut o[i], 0.0);
                    op.apply(&mut o[last + i], 0.0);
                }
            }
        }
    };

    let slab_kernel_2 = |k: usize, o: &mut [f64], src: &[f64]| {
        if k >= 1 && k <= n2 - 2 {
            let up = &src[(k + 1) * slab..(k + 2) * slab];
            let dn = &src[(k - 1) * slab..k * slab];
            for i in 0..slab {
                op.apply(&mut o[i], (up[i] - dn[i]) * inv2h);
            }
        } else {
            match rule {
                BoundaryRule::OneSided => {
                    let (a, b) = if k == 0 {
                        (&src[slab..2 * slab], &src[0..slab])
                    } else {
                        (&src[k * slab..(k + 1) * slab], &src[(k - 1) * slab..k * slab])
                    };
                    for i in 0..slab {
                        op.apply(&mut o[i], (a[i] - b[i]) * invh);
                    }
                }
                BoundaryRule::Frozen => {
                    for v in o.iter_mut() {
                        op.apply(v, 0.0);
                    }
                }
            }
        }
    };

    let parallel = g.node_count() >= PAR_THRESHOLD;
    match axis {
        0 => {
            if parallel {
                out.par_chunks_mut(n0)
                    .zip(src.par_chunks(n0))
                    .for_each(|(o, s)| row_kernel_0(o, s));
            } else {
                out.chunks_mut(n0)
                    .zip(src.chunks(n0))
                    .for_each(|(o, s)| row_kernel_0(o, s));
            }
        }
        1 => {
            if parallel {
                out.par_chunks_mut(slab)
                    .zip(src.par_chunks(slab))
                    .for_each(|(o, s)| slab_kernel_1(o, s));
            } else {
                out.chunks_mut(slab)
                    .zip(src.chunks(slab))
                    .for_each(|(o, s)| slab_kernel_1(o, s));
            }
        }
        2 => {
            if parallel {
                out.par_chunks_mut(slab)
                    .enumerate()
                    .for_each(|(k, o)| slab_kernel_2(k, o, src));
            } else {
                out.chunks_mut(slab)
                    .enumerate()
                    .for_each(|(k, o)| slab_kernel_2(k, o, src));
            }
        }
        _ => unreachable!("axis out of range"),
    }
}

/// Negated transpose of [`diff_axis`]: at interior nodes this is again the
/// central difference, while the one-sided boundary rows turn into their
/// scatter (column) form. Used by the adjoint march so that the spatial
/// operator there is the exact transpose of the forward one.
fn diff_axis_adjoint<C: Combine>(
    g: &Grid3,
    src: &[f64],
    axis: usize,
    rule: BoundaryRule,
    out: &mut [f64],
    op: C,
) {
    let [n0, n1, n2] = g.n;
    let slab = n0 * n1;
    let inv2h = 1.0 / (2.0 * g.h);
    let invh = 1.0 / g.h;
    debug_assert_eq!(src.len(), g.node_count());
    debug_assert_eq!(out.len(), g.node_count());

    // Value of (-D^T src) at line position j for a line of length n.
    // Central rows i in [1, n-2] read columns i-1 (coef -1/2h) and i+1
    // (+1/2h); one-sided rows 0 and n-1 read their two end columns with
    // 1/h. Transposing and negating gives, per column j:
    #[inline(always)]
    fn line_value(
        f: impl Fn(usize) -> f64,
        j: usize,
        n: usize,
        rule: BoundaryRule,
        invh: f64,
        inv2h: f64,
    ) -> f64 {
        let mut acc = 0.0;
        if j + 1 <= n - 2 {
            acc += f(j + 1) * inv2h;
        }
        if j >= 2 {
            acc -= f(j - 1) * inv2h;
        }
        if matches!(rule, BoundaryRule::OneSided) {
            if j == 0 {
                acc += f(0) * invh;
            }
            if j == 1 {
                acc -= f(0) * invh;
            }
            if j == n - 2 {
                acc += f(n - 1) * invh;
            }
            if j == n - 1 {
                acc -= f(n - 1) * invh;
            }
        }
        acc
    }

    match axis {
        0 => {
            let run = |o: &mut [f64], s: &[f64]| {
                for j in 0..n0 {
                    let v = line_value(|i| s[i], j, n0, rule, invh, inv2h);
                    op.apply(&mut o[j], v);
                }
            };
            if g.node_count() >= PAR_THRESHOLD {
                out.par_chunks_mut(n0)
                    .zip(src.par_chunks(n0))
                    .for_each(|(o, s)| run(o, s));
            } else {
                out.chunks_mut(n0)
                    .zip(src.chunks(n0))
                    .for_each(|(o, s)| run(o, s));
            }
        }
        1 => {
            let run = |o: &mut [f64], s: &[f64]| {
                for j in 0..n1 {
                    for i in 0..n0 {
                        let v = line_value(|q| s[q * n0 + i], j, n1, rule, invh, inv2h);
                        op.apply(&mut o[j * n0 + i], v);
                    }
                }
            };
            if g.node_count() >= PAR_THRESHOLD {
                out.par_chunks_mut(slab)
                    .zip(src.par_chunks(slab))
                    .for_each(|(o, s)| run(o, s));
            } else {
                out.chunks_mut(slab)
                    .zip(src.chunks(slab))
                    .for_each(|(o, s)| run(o, s));
            }
        }
        2 => {
            let run = |k: usize, o: &mut [f64], src: &[f64]| {
                for i in 0..slab {
                    let v = line_value(|q| src[q * slab + i], k, n2, rule, invh, inv2h);
                    op.apply(&mut o[i], v);
                }
            };
            if g.node_count() >= PAR_THRESHOLD {
                out.par_chunks_mut(slab)
                    .enumerate()
                    .for_each(|(k, o)| run(k, o, src));
            } else {
                out.chunks_mut(slab)
                    .enumerate()
                    .for_each(|(k, o)| run(k, o, src));
            }
        }
        _ => unreachable!("axis out of range"),
    }
}

/// Elementwise `out[i] op= f(i)` over two aligned sources.
fn pointwise_mul(dst: &mut [f64], src: &[f64], factor: &[f64]) {
    if dst.len() >= PAR_THRESHOLD {
        dst.par_iter_mut()
            .zip(src.par_iter().zip(factor.par_iter()))
            .for_each(|(d, (s, f))| *d = s * f);
    } else {
        for ((d, s), f) in dst.iter_mut().zip(src).zip(factor) {
            *d = s * f;
        }
    }
}

/// Scratch buffers for the composite operators.
#[derive(Debug, Clone)]
pub struct StencilWorkspace {
    curl_buf: [Vec<f64>; 3],
    p: Vec<f64>,
    t: Vec<f64>,
}

impl StencilWorkspace {
    pub fn new(g: &Grid3) -> Self {
        let len = g.node_count();
        StencilWorkspace {
            curl_buf: [vec![0.0; len], vec![0.0; len], vec![0.0; len]],
            p: vec![0.0; len],
            t: vec![0.0; len],
        }
    }
}

/// Curl component layout: out_c = d(src_b)/da - d(src_a)/db with
/// (c, a, b) cycling over (0,1,2).
const CURL_TERMS: [(usize, usize, usize); 3] = [(0, 1, 2), (1, 2, 0), (2, 0, 1)];

fn curl_into(ctx: &StencilContext, f: &[Vec<f64>; 3], out: &mut [Vec<f64>; 3]) {
    for (c, a, b) in CURL_TERMS {
        // out_c = d f_b / d x_a - d f_a / d x_b
        diff_axis(ctx.grid, &f[b], a, ctx.rule, &mut out[c], Assign);
        diff_axis(ctx.grid, &f[a], b, ctx.rule, &mut out[c], SubScaled(1.0));
    }
}

pub(crate) fn curl_comps(
    ctx: &StencilContext,
    f: &[Vec<f64>; 3],
    _ws: &mut StencilWorkspace,
    out: &mut [Vec<f64>; 3],
) {
    curl_into(ctx, f, out);
}

pub(crate) fn divergence_comps(ctx: &StencilContext, f: &[Vec<f64>; 3], out: &mut [f64]) {
    divergence_into(ctx, f, out);
}

pub(crate) fn gradient_comps(ctx: &StencilContext, p: &[f64], out: &mut [Vec<f64>; 3]) {
    for (a, out_a) in out.iter_mut().enumerate() {
        diff_axis(ctx.grid, p, a, ctx.rule, out_a, Assign);
    }
}

/// Curl built from the negated-transpose derivative kernels; identical to
/// [`curl_comps`] away from the boundary.
pub(crate) fn curl_adjoint_comps(
    ctx: &StencilContext,
    f: &[Vec<f64>; 3],
    out: &mut [Vec<f64>; 3],
) {
    for (c, a, b) in CURL_TERMS {
        diff_axis_adjoint(ctx.grid, &f[b], a, ctx.rule, &mut out[c], Assign);
        diff_axis_adjoint(ctx.grid, &f[a], b, ctx.rule, &mut out[c], SubScaled(1.0));
    }
}

pub(crate) fn divergence_adjoint_comps(ctx: &StencilContext, f: &[Vec<f64>; 3], out: &mut [f64]) {
    for (a, fa) in f.iter().enumerate() {
        if a == 0 {
            diff_axis_adjoint(ctx.grid, fa, a, ctx.rule, out, Assign);
        } else {
            diff_axis_adjoint(ctx.grid, fa, a, ctx.rule, out, Add);
        }
    }
}

pub(crate) fn gradient_adjoint_comps(ctx: &StencilContext, p: &[f64], out: &mut [Vec<f64>; 3]) {
    for (a, out_a) in out.iter_mut().enumerate() {
        diff_axis_adjoint(ctx.grid, p, a, ctx.rule, out_a, Assign);
    }
}

/// curl F with the context's boundary rule.
pub fn curl(ctx: &StencilContext, f: &VectorFieldFrame) -> Result<VectorFieldFrame> {
    f.check_shape(ctx.grid)?;
    let mut out = VectorFieldFrame::zeros(ctx.grid);
    out.time_index = f.time_index;
    curl_into(ctx, &f.comps, &mut out.comps);
    Ok(out)
}

fn divergence_into(ctx: &StencilContext, f: &[Vec<f64>; 3], out: &mut [f64]) {
    diff_axis(ctx.grid, &f[0], 0, ctx.rule, out, Assign);
    diff_axis(ctx.grid, &f[1], 1, ctx.rule, out, Add);
    diff_axis(ctx.grid, &f[2], 2, ctx.rule, out, Add);
}

/// div F.
pub fn divergence(ctx: &StencilContext, f: &VectorFieldFrame) -> Result<ScalarField> {
    f.check_shape(ctx.grid)?;
    let mut out = ScalarField::zeros(ctx.grid);
    divergence_into(ctx, &f.comps, &mut out.data);
    Ok(out)
}

/// grad p.
pub fn gradient_scalar(ctx: &StencilContext, p: &ScalarField) -> Result<VectorFieldFrame> {
    p.check_shape(ctx.grid)?;
    let mut out = VectorFieldFrame::zeros(ctx.grid);
    for a in 0..3 {
        diff_axis(ctx.grid, &p.data, a, ctx.rule, &mut out.comps[a], Assign);
    }
    Ok(out)
}

/// A(E) = curl(mu^-1 curl E) - s grad(div(eps E)), written into `out`.
pub fn apply_stabilized_into(
    ctx: &StencilContext,
    e: &[Vec<f64>; 3],
    c: &CoefficientField,
    ws: &mut StencilWorkspace,
    out: &mut [Vec<f64>; 3],
) {
    curl_into(ctx, e, &mut ws.curl_buf);
    for buf in &mut ws.curl_buf {
        if buf.len() >= PAR_THRESHOLD {
            buf.par_iter_mut()
                .zip(c.mu.par_iter())
                .for_each(|(v, m)| *v /= m);
        } else {
            for (v, m) in buf.iter_mut().zip(&c.mu) {
                *v /= m;
            }
        }
    }
    for (cc, a, b) in CURL_TERMS {
        diff_axis(ctx.grid, &ws.curl_buf[b], a, ctx.rule, &mut out[cc], Assign);
        diff_axis(ctx.grid, &ws.curl_buf[a], b, ctx.rule, &mut out[cc], SubScaled(1.0));
    }
    if ctx.s != 0.0 {
        // p = div(eps E), accumulated one component at a time.
        for a in 0..3 {
            pointwise_mul(&mut ws.t, &e[a], &c.eps);
            if a == 0 {
                diff_axis(ctx.grid, &ws.t, a, ctx.rule, &mut ws.p, Assign);
            } else {
                diff_axis(ctx.grid, &ws.t, a, ctx.rule, &mut ws.p, Add);
            }
        }
        for (a, out_a) in out.iter_mut().enumerate() {
            diff_axis(ctx.grid, &ws.p, a, ctx.rule, out_a, SubScaled(ctx.s));
        }
    }
}

/// Transpose counterpart of [`apply_stabilized_into`]:
/// A*(L) = curl(mu^-1 curl L) - s eps grad(div L).
///
/// The penalty carries the coefficient outside the divergence, which makes
/// this the plain transpose of the forward operator at interior nodes.
pub fn apply_stabilized_adjoint_into(
    ctx: &StencilContext,
    l: &[Vec<f64>; 3],
    c: &CoefficientField,
    ws: &mut StencilWorkspace,
    out: &mut [Vec<f64>; 3],
) {
    curl_into(ctx, l, &mut ws.curl_buf);
    for buf in &mut ws.curl_buf {
        if buf.len() >= PAR_THRESHOLD {
            buf.par_iter_mut()
                .zip(c.mu.par_iter())
                .for_each(|(v, m)| *v /= m);
        } else {
            for (v, m) in buf.iter_mut().zip(&c.mu) {
                *v /= m;
            }
        }
    }
    for (cc, a, b) in CURL_TERMS {
        diff_axis(ctx.grid, &ws.curl_buf[b], a, ctx.rule, &mut out[cc], Assign);
        diff_axis(ctx.grid, &ws.curl_buf[a], b, ctx.rule, &mut out[cc], SubScaled(1.0));
    }
    if ctx.s != 0.0 {
        divergence_into(ctx, l, &mut ws.p);
        let s = ctx.s;
        for (a, out_a) in out.iter_mut().enumerate() {
            diff_axis(ctx.grid, &ws.p, a, ctx.rule, &mut ws.t, Assign);
            if out_a.len() >= PAR_THRESHOLD {
                out_a
                    .par_iter_mut()
                    .zip(ws.t.par_iter().zip(c.eps.par_iter()))
                    .for_each(|(o, (t, e))| *o -= s * e * t);
            } else {
                for ((o, t), e) in out_a.iter_mut().zip(&ws.t).zip(&c.eps) {
                    *o -= s * e * t;
                }
            }
        }
    }
}

/// Exact matrix transpose of [`apply_stabilized_into`], one-sided
/// boundary rows included: every derivative kernel is replaced by its
/// negated transpose. Away from the boundary this coincides with
/// [`apply_stabilized_adjoint_into`]; the adjoint march uses this variant
/// so the backward dynamics transpose the forward ones exactly.
pub(crate) fn apply_stabilized_transpose_into(
    ctx: &StencilContext,
    l: &[Vec<f64>; 3],
    c: &CoefficientField,
    ws: &mut StencilWorkspace,
    out: &mut [Vec<f64>; 3],
) {
    for (cc, a, b) in CURL_TERMS {
        diff_axis_adjoint(ctx.grid, &l[b], a, ctx.rule, &mut ws.curl_buf[cc], Assign);
        diff_axis_adjoint(ctx.grid, &l[a], b, ctx.rule, &mut ws.curl_buf[cc], SubScaled(1.0));
    }
    for buf in &mut ws.curl_buf {
        if buf.len() >= PAR_THRESHOLD {
            buf.par_iter_mut()
                .zip(c.mu.par_iter())
                .for_each(|(v, m)| *v /= m);
        } else {
            for (v, m) in buf.iter_mut().zip(&c.mu) {
                *v /= m;
            }
        }
    }
    for (cc, a, b) in CURL_TERMS {
        diff_axis_adjoint(ctx.grid, &ws.curl_buf[b], a, ctx.rule, &mut out[cc], Assign);
        diff_axis_adjoint(ctx.grid, &ws.curl_buf[a], b, ctx.rule, &mut out[cc], SubScaled(1.0));
    }
    if ctx.s != 0.0 {
        for a in 0..3 {
            if a == 0 {
                diff_axis_adjoint(ctx.grid, &l[a], a, ctx.rule, &mut ws.p, Assign);
            } else {
                diff_axis_adjoint(ctx.grid, &l[a], a, ctx.rule, &mut ws.p, Add);
            }
        }
        let s = ctx.s;
        for (a, out_a) in out.iter_mut().enumerate() {
            diff_axis_adjoint(ctx.grid, &ws.p, a, ctx.rule, &mut ws.t, Assign);
            if out_a.len() >= PAR_THRESHOLD {
                out_a
                    .par_iter_mut()
                    .zip(ws.t.par_iter().zip(c.eps.par_iter()))
                    .for_each(|(o, (t, e))| *o -= s * e * t);
            } else {
                for ((o, t), e) in out_a.iter_mut().zip(&ws.t).zip(&c.eps) {
                    *o -= s * e * t;
                }
            }
        }
    }
}

/// A^T(L) as a fresh frame (exact matrix transpose).
pub fn apply_stabilized_operator_transpose(
    ctx: &StencilContext,
    l: &VectorFieldFrame,
    c: &CoefficientField,
) -> Result<VectorFieldFrame> {
    l.check_shape(ctx.grid)?;
    c.check_shape(ctx.grid)?;
    let mut ws = StencilWorkspace::new(ctx.grid);
    let mut out = VectorFieldFrame::zeros(ctx.grid);
    out.time_index = l.time_index;
    apply_stabilized_transpose_into(ctx, &l.comps, c, &mut ws, &mut out.comps);
    Ok(out)
}

/// A(E) as a fresh frame.
pub fn apply_stabilized_operator(
    ctx: &StencilContext,
    e: &VectorFieldFrame,
    c: &CoefficientField,
) -> Result<VectorFieldFrame> {
    e.check_shape(ctx.grid)?;
    c.check_shape(ctx.grid)?;
    let mut ws = StencilWorkspace::new(ctx.grid);
    let mut out = VectorFieldFrame::zeros(ctx.grid);
    out.time_index = e.time_index;
    apply_stabilized_into(ctx, &e.comps, c, &mut ws, &mut out.comps);
    Ok(out)
}

/// A*(L) as a fresh frame.
pub fn apply_stabilized_operator_adjoint(
    ctx: &StencilContext,
    l: &VectorFieldFrame,
    c: &CoefficientField,
) -> Result<VectorFieldFrame> {
    l.check_shape(ctx.grid)?;
    c.check_shape(ctx.grid)?;
    let mut ws = StencilWorkspace::new(ctx.grid);
    let mut out = VectorFieldFrame::zeros(ctx.grid);
    out.time_index = l.time_index;
    apply_stabilized_adjoint_into(ctx, &l.comps, c, &mut ws, &mut out.comps);
    Ok(out)
}

/// Diagonal lumped mass weight per node.
///
/// With node-centered collocation the lumped mass entry is eps times the
/// dual cell volume; the volume factor cancels against the stiffness side
/// in the explicit update and is omitted.
pub fn lumped_mass_weights(c: &CoefficientField) -> ScalarField {
    ScalarField {
        n: c.n,
        data: c.eps.clone(),
    }
}

/// Largest stable time step: h / (sqrt(3) c_max), with c_max the fastest
/// wave speed max(1/sqrt(eps mu)) over the nodes.
pub fn cfl_max_step(g: &Grid3, c: &CoefficientField) -> f64 {
    let mut c_max: f64 = 0.0;
    for (e, m) in c.eps.iter().zip(&c.mu) {
        c_max = c_max.max(1.0 / (e * m).sqrt());
    }
    g.h / (3.0f64.sqrt() * c_max)
}
