//! Field storage: nodal scalar arrays, three-component frames, time
//! histories, coefficient fields and boundary observation traces.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::domain::{BoundaryMap, Grid3, RegionMask};
use crate::error::{Error, Result};

/// Scalar value per grid node.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    pub n: [usize; 3],
    pub data: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(g: &Grid3) -> Self {
        ScalarField {
            n: g.n,
            data: vec![0.0; g.node_count()],
        }
    }

    pub fn constant(g: &Grid3, value: f64) -> Self {
        ScalarField {
            n: g.n,
            data: vec![value; g.node_count()],
        }
    }

    pub fn from_fn(g: &Grid3, mut f: impl FnMut([f64; 3]) -> f64) -> Self {
        let mut data = Vec::with_capacity(g.node_count());
        for k in 0..g.n[2] {
            for j in 0..g.n[1] {
                for i in 0..g.n[0] {
                    data.push(f(g.coord(i, j, k)));
                }
            }
        }
        ScalarField { n: g.n, data }
    }

    pub fn check_shape(&self, g: &Grid3) -> Result<()> {
        if self.n != g.n || self.data.len() != g.node_count() {
            return Err(Error::ShapeMismatch {
                expected: g.n,
                got: self.n,
            });
        }
        Ok(())
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn max(&self) -> f64 {
        self.data.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v))
    }
}

/// Three nodal component arrays at one time level.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorFieldFrame {
    pub n: [usize; 3],
    pub comps: [Vec<f64>; 3],
    pub time_index: usize,
}

impl VectorFieldFrame {
    pub fn zeros(g: &Grid3) -> Self {
        let len = g.node_count();
        VectorFieldFrame {
            n: g.n,
            comps: [vec![0.0; len], vec![0.0; len], vec![0.0; len]],
            time_index: 0,
        }
    }

    pub fn from_fn(g: &Grid3, mut f: impl FnMut([f64; 3]) -> [f64; 3]) -> Self {
        let mut frame = Self::zeros(g);
        let mut idx = 0;
        for k in 0..g.n[2] {
            for j in 0..g.n[1] {
                for i in 0..g.n[0] {
                    let v = f(g.coord(i, j, k));
                    for c in 0..3 {
                        frame.comps[c][idx] = v[c];
                    }
                    idx += 1;
                }
            }
        }
        frame
    }

    pub fn check_shape(&self, g: &Grid3) -> Result<()> {
        if self.n != g.n || self.comps.iter().any(|c| c.len() != g.node_count()) {
            return Err(Error::ShapeMismatch {
                expected: g.n,
                got: self.n,
            });
        }
        Ok(())
    }

    pub fn fill(&mut self, value: f64) {
        for c in &mut self.comps {
            c.fill(value);
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.comps
            .iter()
            .flat_map(|c| c.iter())
            .fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

/// Recorded frames of a time loop, possibly strided.
///
/// Frame `m` holds the field at time `t = m * stride * tau`; a stride of 1
/// stores every level. `n_levels` counts the stored frames.
#[derive(Debug, Clone)]
pub struct FieldHistory {
    pub frames: Vec<VectorFieldFrame>,
    pub tau: f64,
    pub stride: usize,
}

impl FieldHistory {
    pub fn n_levels(&self) -> usize {
        self.frames.len()
    }

    /// Time increment between stored frames.
    pub fn dt(&self) -> f64 {
        self.tau * self.stride as f64
    }

    /// Keep every `stride`-th stored frame (which must include the last
    /// one), for memory-constrained gradient evaluation.
    pub fn subsample(&self, stride: usize) -> Result<FieldHistory> {
        if stride == 0 || (self.frames.len() - 1) % stride != 0 {
            return Err(Error::HistoryMismatch(format!(
                "cannot subsample {} frames by {stride}",
                self.frames.len()
            )));
        }
        Ok(FieldHistory {
            frames: self.frames.iter().step_by(stride).cloned().collect(),
            tau: self.tau,
            stride: self.stride * stride,
        })
    }

    pub fn check_congruent(&self, other: &FieldHistory) -> Result<()> {
        if self.frames.len() != other.frames.len()
            || self.stride != other.stride
            || (self.tau - other.tau).abs() > 1e-12 * self.tau.max(1e-300)
        {
            return Err(Error::HistoryMismatch(format!(
                "{} frames @ tau={} stride={} vs {} frames @ tau={} stride={}",
                self.frames.len(),
                self.tau,
                self.stride,
                other.frames.len(),
                other.tau,
                other.stride
            )));
        }
        Ok(())
    }
}

/// Per-node relative permittivity and permeability with their admissible
/// ranges. Background value is 1 for both.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientField {
    pub n: [usize; 3],
    pub eps: Vec<f64>,
    pub mu: Vec<f64>,
    pub eps_bounds: (f64, f64),
    pub mu_bounds: (f64, f64),
}

/// Admissible ranges for the two coefficients.
pub const EPS_RANGE: (f64, f64) = (1.0, 15.0);
pub const MU_RANGE: (f64, f64) = (1.0, 3.0);

impl CoefficientField {
    pub fn background(g: &Grid3) -> Self {
        CoefficientField {
            n: g.n,
            eps: vec![1.0; g.node_count()],
            mu: vec![1.0; g.node_count()],
            eps_bounds: EPS_RANGE,
            mu_bounds: MU_RANGE,
        }
    }

    pub fn check_shape(&self, g: &Grid3) -> Result<()> {
        if self.n != g.n
            || self.eps.len() != g.node_count()
            || self.mu.len() != g.node_count()
        {
            return Err(Error::ShapeMismatch {
                expected: g.n,
                got: self.n,
            });
        }
        Ok(())
    }

    /// Check the admissible ranges everywhere and the frozen background at
    /// OUTER nodes.
    pub fn validate(&self, g: &Grid3, mask: &RegionMask) -> Result<()> {
        self.check_shape(g)?;
        for k in 0..g.n[2] {
            for j in 0..g.n[1] {
                for i in 0..g.n[0] {
                    let idx = g.idx(i, j, k);
                    for (v, (lo, hi)) in [
                        (self.eps[idx], self.eps_bounds),
                        (self.mu[idx], self.mu_bounds),
                    ] {
                        if !(v >= lo && v <= hi) {
                            return Err(Error::OutOfBounds { value: v, lo, hi });
                        }
                    }
                    if !mask.is_inner(i, j, k)
                        && (self.eps[idx] != 1.0 || self.mu[idx] != 1.0)
                    {
                        return Err(Error::OutsideInner);
                    }
                }
            }
        }
        Ok(())
    }

    pub fn max_eps(&self) -> f64 {
        self.eps.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v))
    }

    pub fn max_mu(&self) -> f64 {
        self.mu.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v))
    }
}

/// Axis-aligned inclusion: a box with constant coefficient values.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct InclusionSpec {
    /// Closed intervals per axis.
    pub extents: [(f64, f64); 3],
    pub eps: f64,
    pub mu: f64,
}

impl InclusionSpec {
    pub fn centroid(&self) -> [f64; 3] {
        [
            0.5 * (self.extents[0].0 + self.extents[0].1),
            0.5 * (self.extents[1].0 + self.extents[1].1),
            0.5 * (self.extents[2].0 + self.extents[2].1),
        ]
    }
}

/// Build the exact coefficient field: background 1 everywhere, the given
/// values inside each inclusion box.
pub fn phantom(
    g: &Grid3,
    mask: &RegionMask,
    inclusions: &[InclusionSpec],
) -> Result<CoefficientField> {
    let mut c = CoefficientField::background(g);
    for inc in inclusions {
        if !(inc.eps >= c.eps_bounds.0 && inc.eps <= c.eps_bounds.1) {
            return Err(Error::OutOfBounds {
                value: inc.eps,
                lo: c.eps_bounds.0,
                hi: c.eps_bounds.1,
            });
        }
        if !(inc.mu >= c.mu_bounds.0 && inc.mu <= c.mu_bounds.1) {
            return Err(Error::OutOfBounds {
                value: inc.mu,
                lo: c.mu_bounds.0,
                hi: c.mu_bounds.1,
            });
        }
        // Snap the box to node index ranges; the box must not leak outside
        // the inner region.
        let mut lo = [0usize; 3];
        let mut hi = [0usize; 3];
        for a in 0..3 {
            lo[a] = ((inc.extents[a].0 - g.lo[a]) / g.h - 1e-6).ceil().max(0.0) as usize;
            hi[a] = (((inc.extents[a].1 - g.lo[a]) / g.h + 1e-6).floor() as usize)
                .min(g.n[a] - 1);
            if lo[a] < mask.inner_lo[a] || hi[a] > mask.inner_hi[a] {
                return Err(Error::OutsideInner);
            }
        }
        for k in lo[2]..=hi[2] {
            for j in lo[1]..=hi[1] {
                for i in lo[0]..=hi[0] {
                    let idx = g.idx(i, j, k);
                    c.eps[idx] = inc.eps;
                    c.mu[idx] = inc.mu;
                }
            }
        }
    }
    Ok(c)
}

/// Electric field samples at every interior node of the observation face,
/// for every time level.
///
/// Layout: `values[(level * n_face + node) * 3 + comp]` with face nodes in
/// the order fixed by [`BoundaryMap`].
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationTrace {
    /// Stored time levels, `n_steps + 1`.
    pub n_levels: usize,
    pub tau: f64,
    pub axis: usize,
    pub face_dims: [usize; 2],
    pub values: Vec<f64>,
    pub noise_percent: f64,
    pub seed: Option<u64>,
    pub omega: f64,
}

impl ObservationTrace {
    pub fn zeros(n_levels: usize, tau: f64, bmap: &BoundaryMap, omega: f64) -> Self {
        ObservationTrace {
            n_levels,
            tau,
            axis: bmap.axis,
            face_dims: bmap.face_dims,
            values: vec![0.0; n_levels * bmap.d1.len() * 3],
            noise_percent: 0.0,
            seed: None,
            omega,
        }
    }

    pub fn n_face(&self) -> usize {
        self.face_dims[0] * self.face_dims[1]
    }

    #[inline(always)]
    pub fn at(&self, level: usize, node: usize, comp: usize) -> f64 {
        self.values[(level * self.n_face() + node) * 3 + comp]
    }

    #[inline(always)]
    pub fn at_mut(&mut self, level: usize, node: usize, comp: usize) -> &mut f64 {
        let n_face = self.n_face();
        &mut self.values[(level * n_face + node) * 3 + comp]
    }

    pub fn check_congruent(&self, other: &ObservationTrace) -> Result<()> {
        if self.n_levels != other.n_levels
            || self.axis != other.axis
            || self.face_dims != other.face_dims
            || (self.tau - other.tau).abs() > 1e-12 * self.tau.max(1e-300)
        {
            return Err(Error::TraceMismatch(format!(
                "levels {}x{:?} tau {} vs levels {}x{:?} tau {}",
                self.n_levels, self.face_dims, self.tau, other.n_levels, other.face_dims, other.tau
            )));
        }
        Ok(())
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

/// Additive uniform noise, relative to the global max of the clean trace.
///
/// Each sample receives `(level/100) * u * A` with `u` iid uniform on
/// [-1, 1] drawn from a ChaCha stream seeded by `seed` and `A` the max
/// absolute value of the clean trace. Level 0 returns the input unchanged.
pub fn add_noise(obs: &ObservationTrace, level_percent: f64, seed: u64) -> ObservationTrace {
    assert!(level_percent >= 0.0, "noise level must be nonnegative");
    let mut noisy = obs.clone();
    if level_percent == 0.0 {
        return noisy;
    }
    let amplitude = obs.max_abs();
    let scale = level_percent / 100.0 * amplitude;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for v in &mut noisy.values {
        let u: f64 = rng.random::<f64>() * 2.0 - 1.0;
        *v += scale * u;
    }
    noisy.noise_percent = level_percent;
    noisy.seed = Some(seed);
    noisy
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{build_decomposition, build_grid, classify_boundary};

    fn setup() -> (Grid3, RegionMask) {
        let g = build_grid([(-3.4, 3.4), (-0.8, 0.8), (-0.4, 0.4)], 0.1).unwrap();
        let m = build_decomposition(&g, [(-3.2, 3.2), (-0.6, 0.6), (-0.3, 0.3)]).unwrap();
        (g, m)
    }

    fn two_scatterers() -> Vec<InclusionSpec> {
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

    #[test]
    fn phantom_two_scatterers() {
        let (g, m) = setup();
        let c = phantom(&g, &m, &two_scatterers()).unwrap();
        assert_eq!(c.max_eps(), 12.0);
        assert_eq!(c.max_mu(), 2.0);
        c.validate(&g, &m).unwrap();
        // Background away from the boxes.
        let idx = g.idx(2, 2, 2);
        assert_eq!(c.eps[idx], 1.0);
        assert_eq!(c.mu[idx], 1.0);
    }

    #[test]
    fn empty_inclusion_list_is_uniform() {
        let (g, m) = setup();
        let c = phantom(&g, &m, &[]).unwrap();
        assert!(c.eps.iter().all(|&v| v == 1.0));
        assert!(c.mu.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn out_of_range_value_rejected() {
        let (g, m) = setup();
        let mut incs = two_scatterers();
        incs[0].eps = 20.0;
        assert!(matches!(
            phantom(&g, &m, &incs).unwrap_err(),
            Error::OutOfBounds { .. }
        ));
    }

    #[test]
    fn box_outside_inner_rejected() {
        let (g, m) = setup();
        let incs = vec![InclusionSpec {
            extents: [(-3.4, -3.0), (-0.2, 0.2), (-0.1, 0.1)],
            eps: 4.0,
            mu: 1.5,
        }];
        assert!(matches!(
            phantom(&g, &m, &incs).unwrap_err(),
            Error::OutsideInner
        ));
    }

    #[test]
    fn validate_catches_outer_contamination() {
        let (g, m) = setup();
        let mut c = CoefficientField::background(&g);
        c.eps[g.idx(0, 0, 0)] = 2.0;
        assert!(matches!(
            c.validate(&g, &m).unwrap_err(),
            Error::OutsideInner
        ));
    }

    fn sample_trace(g: &Grid3) -> ObservationTrace {
        let b = classify_boundary(g, 2).unwrap();
        let mut t = ObservationTrace::zeros(11, 0.01, &b, 21.0);
        for (s, v) in t.values.iter_mut().enumerate() {
            *v = (s as f64 * 0.37).sin();
        }
        t
    }

    #[test]
    fn zero_noise_is_identity() {
        let (g, _) = setup();
        let t = sample_trace(&g);
        let n = add_noise(&t, 0.0, 12345);
        assert_eq!(t, n);
    }

    #[test]
    fn noise_is_deterministic() {
        let (g, _) = setup();
        let t = sample_trace(&g);
        let a = add_noise(&t, 3.0, 7);
        let b = add_noise(&t, 3.0, 7);
        assert_eq!(a.values, b.values);
        assert_ne!(a.values, t.values);
    }

    #[test]
    fn noise_bounded_and_centered() {
        let (g, _) = setup();
        let t = sample_trace(&g);
        let a = t.max_abs();
        let noisy = add_noise(&t, 10.0, 99);
        let perturbations: Vec<f64> = noisy
            .values
            .iter()
            .zip(&t.values)
            .map(|(n, c)| n - c)
            .collect();
        let bound = 0.10 * a;
        assert!(perturbations.iter().all(|p| p.abs() <= bound + 1e-12 * a));
        // Sample mean of u = p / (0.1 A); should be near zero for this
        // many iid uniform draws (3 sigma of the mean ~ 0.013).
        let n = perturbations.len() as f64;
        let mean_u: f64 = perturbations.iter().map(|p| p / bound).sum::<f64>() / n;
        assert!(mean_u.abs() < 0.02, "mean {mean_u}");
    }

    #[test]
    fn noise_is_purely_additive() {
        let (g, _) = setup();
        let t = sample_trace(&g);
        let a = t.max_abs();
        let noisy = add_noise(&t, 3.0, 5);
        // Regenerate the perturbation stream and compare.
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let scale = 0.03 * a;
        for (n, c) in noisy.values.iter().zip(&t.values) {
            let u: f64 = rng.random::<f64>() * 2.0 - 1.0;
            assert!((n - c - scale * u).abs() <= 1e-15 * a);
        }
    }

    #[test]
    fn trace_congruence_checked() {
        let (g, _) = setup();
        let t = sample_trace(&g);
        let mut other = t.clone();
        other.n_levels = 12;
        assert!(t.check_congruent(&other).is_err());
        assert!(t.check_congruent(&t.clone()).is_ok());
    }
}
