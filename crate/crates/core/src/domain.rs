//! Computational domain: structured node-centered grid, the inner/outer
//! region split and the boundary face taxonomy.
//!
//! The domain is a box discretized with a uniform spacing `h` on all three
//! axes. Coefficients are unknown only inside an inner box; the collar
//! between the inner and outer boxes has frozen background coefficients.
//! The boundary decomposes into the observation/illumination face (`d1`),
//! the opposite face (`d2`) and the four lateral faces (`d3`).

use crate::error::{Error, Result};

/// Relative tolerance for deciding whether an extent is an integer
/// multiple of the spacing.
const CONFORMITY_RTOL: f64 = 1e-9;

/// Uniform node-centered 3D grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid3 {
    pub lo: [f64; 3],
    pub hi: [f64; 3],
    pub h: f64,
    /// Nodes per axis, `n[a] = round((hi[a]-lo[a])/h) + 1`.
    pub n: [usize; 3],
}

/// Build a grid over `extents` with spacing `h`.
///
/// Each extent length must be an integer multiple of `h` (within a 1e-9
/// relative tolerance) and at least `2h`, so that every axis carries an
/// interior layer of nodes.
pub fn build_grid(extents: [(f64, f64); 3], h: f64) -> Result<Grid3> {
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::Validation {
            field: "h".into(),
            reason: format!("spacing must be positive and finite, got {h}"),
        });
    }
    let mut n = [0usize; 3];
    let mut lo = [0.0; 3];
    let mut hi = [0.0; 3];
    for a in 0..3 {
        let (a_lo, a_hi) = extents[a];
        let length = a_hi - a_lo;
        if !(length > 0.0) {
            return Err(Error::DegenerateAxis {
                axis: a,
                length,
                min: 2.0 * h,
            });
        }
        let cells = length / h;
        let m = cells.round();
        if (cells - m).abs() > CONFORMITY_RTOL * cells.max(1.0) {
            return Err(Error::NonConformingSpacing {
                axis: a,
                length,
                h,
            });
        }
        if m < 2.0 {
            return Err(Error::DegenerateAxis {
                axis: a,
                length,
                min: 2.0 * h,
            });
        }
        n[a] = m as usize + 1;
        lo[a] = a_lo;
        hi[a] = a_hi;
    }
    Ok(Grid3 { lo, hi, h, n })
}

impl Grid3 {
    pub fn node_count(&self) -> usize {
        self.n[0] * self.n[1] * self.n[2]
    }

    /// Linear index of node `(i, j, k)`; `i` varies fastest.
    #[inline(always)]
    pub fn idx(&self, i: usize, j: usize, k: usize) -> usize {
        (k * self.n[1] + j) * self.n[0] + i
    }

    /// Inverse of [`Grid3::idx`].
    #[inline]
    pub fn ijk(&self, idx: usize) -> [usize; 3] {
        let i = idx % self.n[0];
        let r = idx / self.n[0];
        [i, r % self.n[1], r / self.n[1]]
    }

    /// Physical coordinates of node `(i, j, k)`.
    #[inline]
    pub fn coord(&self, i: usize, j: usize, k: usize) -> [f64; 3] {
        [
            self.lo[0] + i as f64 * self.h,
            self.lo[1] + j as f64 * self.h,
            self.lo[2] + k as f64 * self.h,
        ]
    }

    /// Index stride of axis `a` in the linear layout.
    #[inline(always)]
    pub fn stride(&self, a: usize) -> usize {
        match a {
            0 => 1,
            1 => self.n[0],
            _ => self.n[0] * self.n[1],
        }
    }

    pub fn is_boundary(&self, i: usize, j: usize, k: usize) -> bool {
        i == 0
            || j == 0
            || k == 0
            || i == self.n[0] - 1
            || j == self.n[1] - 1
            || k == self.n[2] - 1
    }

    /// Nearest node index on axis `a` for coordinate `x`, clamped to the grid.
    pub fn snap(&self, a: usize, x: f64) -> usize {
        let t = ((x - self.lo[a]) / self.h).round();
        (t.max(0.0) as usize).min(self.n[a] - 1)
    }
}

/// Inner (unknown coefficients) / outer (frozen background) split.
///
/// Stored as an index-space box; nodes inside the box, bounds inclusive,
/// are INNER and everything else is OUTER.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionMask {
    pub n: [usize; 3],
    pub inner_lo: [usize; 3],
    pub inner_hi: [usize; 3],
}

/// Mark the nodes inside `inner_extents` (inclusive) as INNER.
///
/// The inner box must be `h`-conforming and strictly inside the grid:
/// at least one node of collar on every side.
pub fn build_decomposition(g: &Grid3, inner_extents: [(f64, f64); 3]) -> Result<RegionMask> {
    let mut inner_lo = [0usize; 3];
    let mut inner_hi = [0usize; 3];
    for a in 0..3 {
        let (lo, hi) = inner_extents[a];
        if hi < lo {
            return Err(Error::Validation {
                field: "inner".into(),
                reason: format!("axis {a}: empty interval ({lo}, {hi})"),
            });
        }
        for x in [lo, hi] {
            let offset = (x - g.lo[a]) / g.h;
            if (offset - offset.round()).abs() > 1e-6 {
                return Err(Error::NonConformingSpacing {
                    axis: a,
                    length: x - g.lo[a],
                    h: g.h,
                });
            }
        }
        let ilo = ((lo - g.lo[a]) / g.h).round() as i64;
        let ihi = ((hi - g.lo[a]) / g.h).round() as i64;
        if ilo < 1 || ihi > g.n[a] as i64 - 2 {
            return Err(Error::InnerNotContained { axis: a });
        }
        inner_lo[a] = ilo as usize;
        inner_hi[a] = ihi as usize;
    }
    Ok(RegionMask {
        n: g.n,
        inner_lo,
        inner_hi,
    })
}

impl RegionMask {
    #[inline]
    pub fn is_inner(&self, i: usize, j: usize, k: usize) -> bool {
        i >= self.inner_lo[0]
            && i <= self.inner_hi[0]
            && j >= self.inner_lo[1]
            && j <= self.inner_hi[1]
            && k >= self.inner_lo[2]
            && k <= self.inner_hi[2]
    }

    /// Nodes per axis of the inner box.
    pub fn inner_dims(&self) -> [usize; 3] {
        [
            self.inner_hi[0] - self.inner_lo[0] + 1,
            self.inner_hi[1] - self.inner_lo[1] + 1,
            self.inner_hi[2] - self.inner_lo[2] + 1,
        ]
    }

    pub fn inner_count(&self) -> usize {
        let d = self.inner_dims();
        d[0] * d[1] * d[2]
    }

    /// Linear indices of all INNER nodes, in layout order.
    pub fn inner_nodes(&self, g: &Grid3) -> Vec<usize> {
        assert_eq!(self.n, g.n);
        let mut out = Vec::with_capacity(self.inner_count());
        for k in self.inner_lo[2]..=self.inner_hi[2] {
            for j in self.inner_lo[1]..=self.inner_hi[1] {
                for i in self.inner_lo[0]..=self.inner_hi[0] {
                    out.push(g.idx(i, j, k));
                }
            }
        }
        out
    }
}

/// A node of the observation (`d1`) or opposite (`d2`) face.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FaceNode {
    /// Linear node index.
    pub idx: usize,
    /// Linear index of the node one step inward along the face normal.
    pub adj: usize,
    /// In-face coordinates (first non-observation axis, second one), both
    /// counted over the interior of the face.
    pub fi: usize,
    pub fj: usize,
}

/// A `d3` node together with its inward donor for the Neumann copy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CollarNode {
    pub idx: usize,
    /// Node displaced one step inward along every axis on which this node
    /// sits on the boundary; always strictly interior.
    pub donor: usize,
}

/// Boundary classification for a given observation axis.
///
/// `d1` is the interior of the max-face on the observation axis, `d2` the
/// interior of the min-face; edge and corner nodes go to `d3` along with
/// the four lateral faces.
#[derive(Debug, Clone)]
pub struct BoundaryMap {
    pub axis: usize,
    /// The two in-face axes, ascending.
    pub face_axes: [usize; 2],
    /// Interior dimensions of the observation face.
    pub face_dims: [usize; 2],
    pub d1: Vec<FaceNode>,
    pub d2: Vec<FaceNode>,
    pub d3: Vec<CollarNode>,
}

pub fn classify_boundary(g: &Grid3, observation_axis: usize) -> Result<BoundaryMap> {
    if observation_axis > 2 {
        return Err(Error::InvalidAxis(observation_axis));
    }
    let ax = observation_axis;
    let face_axes = match ax {
        0 => [1, 2],
        1 => [0, 2],
        _ => [0, 1],
    };
    let (u, v) = (face_axes[0], face_axes[1]);
    let face_dims = [g.n[u] - 2, g.n[v] - 2];

    let mut d1 = Vec::with_capacity(face_dims[0] * face_dims[1]);
    let mut d2 = Vec::with_capacity(face_dims[0] * face_dims[1]);
    // Interior face nodes, ordered (fi outer, fj inner) over the in-face axes.
    for fi in 0..face_dims[0] {
        for fj in 0..face_dims[1] {
            let mut ijk = [0usize; 3];
            ijk[u] = fi + 1;
            ijk[v] = fj + 1;
            ijk[ax] = g.n[ax] - 1;
            let mut adj = ijk;
            adj[ax] -= 1;
            d1.push(FaceNode {
                idx: g.idx(ijk[0], ijk[1], ijk[2]),
                adj: g.idx(adj[0], adj[1], adj[2]),
                fi,
                fj,
            });
            ijk[ax] = 0;
            adj = ijk;
            adj[ax] += 1;
            d2.push(FaceNode {
                idx: g.idx(ijk[0], ijk[1], ijk[2]),
                adj: g.idx(adj[0], adj[1], adj[2]),
                fi,
                fj,
            });
        }
    }

    let mut d3 = Vec::new();
    for k in 0..g.n[2] {
        for j in 0..g.n[1] {
            for i in 0..g.n[0] {
                if !g.is_boundary(i, j, k) {
                    continue;
                }
                let ijk = [i, j, k];
                // Interior face nodes of the observation axis belong to d1/d2.
                let on_obs_face = ijk[ax] == 0 || ijk[ax] == g.n[ax] - 1;
                let u_interior = ijk[u] >= 1 && ijk[u] <= g.n[u] - 2;
                let v_interior = ijk[v] >= 1 && ijk[v] <= g.n[v] - 2;
                if on_obs_face && u_interior && v_interior {
                    continue;
                }
                let mut donor = ijk;
                for a in 0..3 {
                    if ijk[a] == 0 {
                        donor[a] = 1;
                    } else if ijk[a] == g.n[a] - 1 {
                        donor[a] = g.n[a] - 2;
                    }
                }
                d3.push(CollarNode {
                    idx: g.idx(i, j, k),
                    donor: g.idx(donor[0], donor[1], donor[2]),
                });
            }
        }
    }

    Ok(BoundaryMap {
        axis: ax,
        face_axes,
        face_dims,
        d1,
        d2,
        d3,
    })
}

impl BoundaryMap {
    pub fn boundary_count(&self) -> usize {
        self.d1.len() + self.d2.len() + self.d3.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn paper_grid() -> Grid3 {
        build_grid([(-3.4, 3.4), (-0.8, 0.8), (-0.4, 0.4)], 0.1).unwrap()
    }

    #[test]
    fn paper_domain_node_counts() {
        let g = paper_grid();
        assert_eq!(g.n, [69, 17, 9]);
        assert_eq!(g.node_count(), 69 * 17 * 9);
    }

    #[test]
    fn unit_cube_half_spacing() {
        let g = build_grid([(0.0, 1.0), (0.0, 1.0), (0.0, 1.0)], 0.5).unwrap();
        assert_eq!(g.n, [3, 3, 3]);
    }

    #[test]
    fn non_conforming_spacing_rejected() {
        let err = build_grid([(0.0, 1.0), (0.0, 1.0), (0.0, 1.0)], 0.3).unwrap_err();
        assert!(matches!(err, Error::NonConformingSpacing { .. }));
    }

    #[test]
    fn short_axis_rejected() {
        let err = build_grid([(0.0, 0.1), (0.0, 1.0), (0.0, 1.0)], 0.1).unwrap_err();
        assert!(matches!(err, Error::DegenerateAxis { axis: 0, .. }));
    }

    #[test]
    fn coordinate_round_trip() {
        let g = paper_grid();
        for k in 0..g.n[2] {
            for j in 0..g.n[1] {
                for i in 0..g.n[0] {
                    let x = g.coord(i, j, k);
                    assert_eq!([g.snap(0, x[0]), g.snap(1, x[1]), g.snap(2, x[2])], [i, j, k]);
                    assert_eq!(g.ijk(g.idx(i, j, k)), [i, j, k]);
                }
            }
        }
    }

    #[test]
    fn paper_inner_region() {
        let g = paper_grid();
        let m = build_decomposition(&g, [(-3.2, 3.2), (-0.6, 0.6), (-0.3, 0.3)]).unwrap();
        assert_eq!(m.inner_dims(), [65, 13, 7]);
        assert_eq!(m.inner_nodes(&g).len(), 65 * 13 * 7);
        // The collar between the boxes is OUTER.
        assert!(!m.is_inner(1, 8, 4));
        assert!(m.is_inner(2, 8, 4));
    }

    #[test]
    fn inner_equal_to_outer_rejected() {
        let g = paper_grid();
        let err =
            build_decomposition(&g, [(-3.4, 3.4), (-0.8, 0.8), (-0.4, 0.4)]).unwrap_err();
        assert!(matches!(err, Error::InnerNotContained { .. }));
    }

    #[test]
    fn single_node_inner_box() {
        let g = paper_grid();
        let m = build_decomposition(&g, [(0.0, 0.0), (0.0, 0.0), (0.0, 0.0)]).unwrap();
        assert_eq!(m.inner_count(), 1);
        assert!(m.is_inner(34, 8, 4));
    }

    #[test]
    fn paper_observation_face_size() {
        let g = paper_grid();
        let b = classify_boundary(&g, 2).unwrap();
        assert_eq!(b.d1.len(), 67 * 15);
        assert_eq!(b.d2.len(), 67 * 15);
        assert_eq!(b.face_dims, [67, 15]);
    }

    #[test]
    fn tiny_grid_single_face_node() {
        let g = build_grid([(0.0, 1.0), (0.0, 1.0), (0.0, 1.0)], 0.5).unwrap();
        let b = classify_boundary(&g, 0).unwrap();
        assert_eq!(b.d1.len(), 1);
        assert_eq!(b.d1[0].idx, g.idx(2, 1, 1));
        assert_eq!(b.d1[0].adj, g.idx(1, 1, 1));
    }

    #[test]
    fn boundary_partition_is_exact() {
        for (extents, h, axis) in [
            ([(-3.4, 3.4), (-0.8, 0.8), (-0.4, 0.4)], 0.1, 2),
            ([(0.0, 1.0), (0.0, 1.0), (0.0, 1.0)], 0.5, 0),
            ([(0.0, 1.2), (0.0, 0.8), (0.0, 0.6)], 0.2, 1),
        ] {
            let g = build_grid(extents, h).unwrap();
            let b = classify_boundary(&g, axis).unwrap();
            let mut seen = vec![0u8; g.node_count()];
            for f in b.d1.iter().chain(b.d2.iter()) {
                seen[f.idx] += 1;
            }
            for c in &b.d3 {
                seen[c.idx] += 1;
            }
            let mut boundary_total = 0;
            for k in 0..g.n[2] {
                for j in 0..g.n[1] {
                    for i in 0..g.n[0] {
                        let expect = u8::from(g.is_boundary(i, j, k));
                        assert_eq!(seen[g.idx(i, j, k)], expect, "node ({i},{j},{k})");
                        boundary_total += expect as usize;
                    }
                }
            }
            assert_eq!(b.boundary_count(), boundary_total);
        }
    }

    #[test]
    fn collar_donors_are_interior() {
        let g = paper_grid();
        let b = classify_boundary(&g, 2).unwrap();
        for c in &b.d3 {
            let [i, j, k] = g.ijk(c.donor);
            assert!(!g.is_boundary(i, j, k));
        }
    }

    #[test]
    fn invalid_axis_rejected() {
        let g = paper_grid();
        assert!(matches!(
            classify_boundary(&g, 3).unwrap_err(),
            Error::InvalidAxis(3)
        ));
    }
}
