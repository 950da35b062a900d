//! Thresholded images, relative errors and inclusion localization.

use crate::domain::{Grid3, RegionMask};
use crate::error::{Error, Result};
use crate::fields::{InclusionSpec, ScalarField};

/// Permittivity image cut: keep values strictly above this fraction of the
/// field maximum.
pub const EPS_THRESHOLD_FRACTION: f64 = 0.25;
/// Permeability image cut.
pub const MU_THRESHOLD_FRACTION: f64 = 0.87;

fn threshold_one(field: &ScalarField, fraction: f64) -> ScalarField {
    let max = field.max();
    let cut = fraction * max;
    ScalarField {
        n: field.n,
        data: field
            .data
            .iter()
            .map(|&v| if v > cut { v } else { 1.0 })
            .collect(),
    }
}

/// Apply the two image cuts: values at or below the fraction of the field
/// maximum become background 1.
pub fn threshold_fields(eps: &ScalarField, mu: &ScalarField) -> (ScalarField, ScalarField) {
    (
        threshold_one(eps, EPS_THRESHOLD_FRACTION),
        threshold_one(mu, MU_THRESHOLD_FRACTION),
    )
}

/// Relative L2 error over INNER nodes, difference norm over the computed
/// field norm.
pub fn relative_error(
    computed: &ScalarField,
    exact: &ScalarField,
    mask: &RegionMask,
    grid: &Grid3,
) -> Result<f64> {
    computed.check_shape(grid)?;
    exact.check_shape(grid)?;
    let mut num = 0.0;
    let mut den = 0.0;
    for k in mask.inner_lo[2]..=mask.inner_hi[2] {
        for j in mask.inner_lo[1]..=mask.inner_hi[1] {
            for i in mask.inner_lo[0]..=mask.inner_hi[0] {
                let idx = grid.idx(i, j, k);
                let d = exact.data[idx] - computed.data[idx];
                num += d * d;
                den += computed.data[idx] * computed.data[idx];
            }
        }
    }
    if den == 0.0 {
        return Err(Error::ZeroDenominator);
    }
    Ok((num / den).sqrt())
}

/// One connected component of above-background nodes.
#[derive(Debug, Clone)]
pub struct ComponentInfo {
    pub node_count: usize,
    pub centroid: [f64; 3],
    pub bbox_lo: [f64; 3],
    pub bbox_hi: [f64; 3],
    /// Index of the nearest true inclusion and the centroid distance in
    /// the plane transverse to the observation axis.
    pub matched: Option<(usize, f64)>,
}

#[derive(Debug, Clone)]
pub struct LocalizationReport {
    pub components: Vec<ComponentInfo>,
    /// True inclusions hit by at least one component, in order.
    pub hits: Vec<bool>,
}

impl LocalizationReport {
    pub fn all_hit(&self) -> bool {
        self.hits.iter().all(|&h| h)
    }

    /// Smallest transverse centroid distance per true inclusion.
    pub fn best_distances(&self) -> Vec<Option<f64>> {
        let mut best = vec![None; self.hits.len()];
        for c in &self.components {
            if let Some((idx, d)) = c.matched {
                let slot: &mut Option<f64> = &mut best[idx];
                if slot.map(|b| d < b).unwrap_or(true) {
                    *slot = Some(d);
                }
            }
        }
        best
    }
}

/// Connected components (6-connectivity) of the masked field above
/// background, their centroids and their match to the true inclusions.
///
/// Distances are measured in the plane transverse to `observation_axis`,
/// between the component centroid and the true inclusion centroid.
pub fn localization_report(
    masked: &ScalarField,
    grid: &Grid3,
    truth: &[InclusionSpec],
    observation_axis: usize,
) -> LocalizationReport {
    let n = grid.node_count();
    let mut visited = vec![false; n];
    let mut components = Vec::new();
    let above = |idx: usize| masked.data[idx] > 1.0;

    for start in 0..n {
        if visited[start] || !above(start) {
            continue;
        }
        // Flood fill.
        let mut stack = vec![start];
        visited[start] = true;
        let mut nodes = Vec::new();
        while let Some(idx) = stack.pop() {
            nodes.push(idx);
            let [i, j, k] = grid.ijk(idx);
            let mut push = |ni: usize, nj: usize, nk: usize| {
                let nidx = grid.idx(ni, nj, nk);
                if !visited[nidx] && above(nidx) {
                    visited[nidx] = true;
                    stack.push(nidx);
                }
            };
            if i > 0 {
                push(i - 1, j, k);
            }
            if i + 1 < grid.n[0] {
                push(i + 1, j, k);
            }
            if j > 0 {
                push(i, j - 1, k);
            }
            if j + 1 < grid.n[1] {
                push(i, j + 1, k);
            }
            if k > 0 {
                push(i, j, k - 1);
            }
            if k + 1 < grid.n[2] {
                push(i, j, k + 1);
            }
        }

        let mut centroid = [0.0; 3];
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for &idx in &nodes {
            let [i, j, k] = grid.ijk(idx);
            let x = grid.coord(i, j, k);
            for a in 0..3 {
                centroid[a] += x[a];
                lo[a] = lo[a].min(x[a]);
                hi[a] = hi[a].max(x[a]);
            }
        }
        for c in centroid.iter_mut() {
            *c /= nodes.len() as f64;
        }

        let matched = truth
            .iter()
            .enumerate()
            .map(|(t, inc)| {
                let tc = inc.centroid();
                let mut d2 = 0.0;
                for a in 0..3 {
                    if a != observation_axis {
                        d2 += (centroid[a] - tc[a]).powi(2);
                    }
                }
                (t, d2.sqrt())
            })
            .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap());

        components.push(ComponentInfo {
            node_count: nodes.len(),
            centroid,
            bbox_lo: lo,
            bbox_hi: hi,
            matched,
        });
    }

    let mut hits = vec![false; truth.len()];
    for c in &components {
        if let Some((t, _)) = c.matched {
            hits[t] = true;
        }
    }
    LocalizationReport { components, hits }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{build_decomposition, build_grid};
    use crate::fields::phantom;
    use proptest::prelude::*;

    fn grid() -> Grid3 {
        build_grid([(-3.4, 3.4), (-0.8, 0.8), (-0.4, 0.4)], 0.1).unwrap()
    }

    #[test]
    fn eps_cut_uses_quarter_of_max() {
        let g = grid();
        let mut f = ScalarField::constant(&g, 1.0);
        f.data[0] = 12.0;
        f.data[1] = 2.9; // below 0.25 * 12 = 3
        f.data[2] = 3.1; // above
        let (m, _) = threshold_fields(&f, &ScalarField::constant(&g, 1.0));
        assert_eq!(m.data[0], 12.0);
        assert_eq!(m.data[1], 1.0);
        assert_eq!(m.data[2], 3.1);
    }

    #[test]
    fn mu_cut_uses_strict_inequality() {
        let g = grid();
        let mut f = ScalarField::constant(&g, 1.0);
        f.data[0] = 2.0;
        f.data[1] = 1.75; // above 0.87 * 2 = 1.74, kept
        f.data[2] = 1.73; // below, reset
        let (_, m) = threshold_fields(&ScalarField::constant(&g, 1.0), &f);
        assert_eq!(m.data[0], 2.0);
        assert_eq!(m.data[1], 1.75);
        assert_eq!(m.data[2], 1.0);
    }

    #[test]
    fn uniform_background_unchanged() {
        let g = grid();
        let f = ScalarField::constant(&g, 1.0);
        let (me, mm) = threshold_fields(&f, &f);
        assert_eq!(me.data, f.data);
        assert_eq!(mm.data, f.data);
    }

    proptest! {
        #[test]
        fn thresholding_is_idempotent(values in proptest::collection::vec(1.0f64..15.0, 27)) {
            let g = build_grid([(0.0, 1.0), (0.0, 1.0), (0.0, 1.0)], 0.5).unwrap();
            let f = ScalarField { n: g.n, data: values.clone() };
            let (a, b) = threshold_fields(&f, &f);
            let (aa, bb) = threshold_fields(&a, &b);
            prop_assert_eq!(&a.data, &aa.data);
            prop_assert_eq!(&b.data, &bb.data);
        }
    }

    #[test]
    fn relative_error_examples() {
        let g = grid();
        let m = build_decomposition(&g, [(-3.2, 3.2), (-0.6, 0.6), (-0.3, 0.3)]).unwrap();
        let a = ScalarField::constant(&g, 2.0);
        assert_eq!(relative_error(&a, &a, &m, &g).unwrap(), 0.0);
        let b = ScalarField::constant(&g, 4.0);
        let e = relative_error(&a, &b, &m, &g).unwrap();
        assert!((e - 1.0).abs() < 1e-12);
        // Background vs phantom is strictly positive.
        let incs = vec![InclusionSpec {
            extents: [(-1.0, -0.6), (-0.2, 0.2), (-0.1, 0.1)],
            eps: 12.0,
            mu: 2.0,
        }];
        let truth = phantom(&g, &m, &incs).unwrap();
        let bg = ScalarField::constant(&g, 1.0);
        let exact = ScalarField {
            n: g.n,
            data: truth.eps.clone(),
        };
        assert!(relative_error(&bg, &exact, &m, &g).unwrap() > 0.0);
    }

    #[test]
    fn localization_of_exact_phantom() {
        let g = grid();
        let m = build_decomposition(&g, [(-3.2, 3.2), (-0.6, 0.6), (-0.3, 0.3)]).unwrap();
        let incs = vec![
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
        ];
        let truth = phantom(&g, &m, &incs).unwrap();
        let eps = ScalarField {
            n: g.n,
            data: truth.eps.clone(),
        };
        let report = localization_report(&eps, &g, &incs, 2);
        assert_eq!(report.components.len(), 2);
        assert!(report.all_hit());
        for d in report.best_distances() {
            assert!(d.unwrap() < 1e-12);
        }
    }

    #[test]
    fn empty_field_reports_misses() {
        let g = grid();
        let incs = vec![InclusionSpec {
            extents: [(-1.0, -0.6), (-0.2, 0.2), (-0.1, 0.1)],
            eps: 12.0,
            mu: 2.0,
        }];
        let bg = ScalarField::constant(&g, 1.0);
        let report = localization_report(&bg, &g, &incs, 2);
        assert!(report.components.is_empty());
        assert!(!report.all_hit());
        assert_eq!(report.best_distances(), vec![None]);
    }
}
