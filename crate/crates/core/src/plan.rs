//! Overlapping stripe decompositions of a raster scan.
//!
//! Each subdomain owns a contiguous block of scan columns (or rows) and is the
//! union of its frames' windows, so neighbouring stripes share a band of
//! width `frame_side - step`.

use serde::{Deserialize, Serialize};

use crate::error::{PtychoError, Result};
use crate::forward::{FrameStack, ScanGeometry};
use crate::grid::{extract, ComplexField, Grid, RealField, Region};
use crate::scalar::Real;

/// Direction along which the scan grid is cut.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitAxis {
    /// Split the longer scan axis; column stripes when both are equal.
    Auto,
    /// Vertical stripes, each a block of scan columns.
    Columns,
    /// Horizontal stripes, each a block of scan rows.
    Rows,
}

/// One subdomain: its rectangle, its frames and its local scan.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Subdomain {
    /// Rectangle in global image coordinates.
    pub region: Region,
    /// Global indices of the frames assigned here, in local scan order.
    pub frames: Vec<usize>,
    /// The frames' scan re-expressed relative to `region`.
    pub geometry: ScanGeometry,
}

/// Intersection of two subdomains, `first < second`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Overlap {
    pub first: usize,
    pub second: usize,
    /// Rectangle in global image coordinates.
    pub region: Region,
}

impl Overlap {
    pub fn involves(&self, d: usize) -> bool {
        self.first == d || self.second == d
    }

    pub fn other(&self, d: usize) -> usize {
        if self.first == d {
            self.second
        } else {
            self.first
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecompositionPlan {
    image_shape: (usize, usize),
    axis: SplitAxis,
    subdomains: Vec<Subdomain>,
    overlaps: Vec<Overlap>,
}

/// Cuts the scan into `count` stripes along the longer scan axis.
pub fn plan_stripes(geometry: &ScanGeometry, count: usize) -> Result<DecompositionPlan> {
    plan_stripes_along(geometry, count, SplitAxis::Auto)
}

pub fn plan_stripes_along(
    geometry: &ScanGeometry,
    count: usize,
    axis: SplitAxis,
) -> Result<DecompositionPlan> {
    let (n_rows, n_cols) = geometry.grid_shape();
    let axis = match axis {
        SplitAxis::Auto if n_rows > n_cols => SplitAxis::Rows,
        SplitAxis::Auto => SplitAxis::Columns,
        a => a,
    };
    let n = if axis == SplitAxis::Columns {
        n_cols
    } else {
        n_rows
    };
    if count == 0 {
        return Err(PtychoError::Parameter(
            "subdomain count must be at least 1".into(),
        ));
    }
    if count > n {
        return Err(PtychoError::InfeasibleDecomposition(format!(
            "{count} stripes requested but the scan has only {n} frame {}",
            if axis == SplitAxis::Columns {
                "columns"
            } else {
                "rows"
            }
        )));
    }

    let mut subdomains = Vec::with_capacity(count);
    let (base, extra) = (n / count, n % count);
    let mut start = 0;
    for d in 0..count {
        let end = start + base + usize::from(d < extra);
        let (rows, cols) = match axis {
            SplitAxis::Columns => (0..n_rows, start..end),
            _ => (start..end, 0..n_cols),
        };
        let (local, region) = geometry.sub_scan(rows.clone(), cols.clone())?;
        let frames = rows
            .flat_map(|r| cols.clone().map(move |c| r * n_cols + c))
            .collect();
        subdomains.push(Subdomain {
            region,
            frames,
            geometry: local,
        });
        start = end;
    }

    let mut overlaps = Vec::new();
    for a in 0..count {
        for b in a + 1..count {
            if let Some(region) = subdomains[a].region.intersect(&subdomains[b].region) {
                overlaps.push(Overlap {
                    first: a,
                    second: b,
                    region,
                });
            }
        }
    }

    Ok(DecompositionPlan {
        image_shape: geometry.image_shape(),
        axis,
        subdomains,
        overlaps,
    })
}

impl DecompositionPlan {
    pub fn len(&self) -> usize {
        self.subdomains.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subdomains.is_empty()
    }

    pub fn image_shape(&self) -> (usize, usize) {
        self.image_shape
    }

    pub fn axis(&self) -> SplitAxis {
        self.axis
    }

    pub fn subdomains(&self) -> &[Subdomain] {
        &self.subdomains
    }

    pub fn subdomain(&self, d: usize) -> &Subdomain {
        &self.subdomains[d]
    }

    /// All overlapping pairs, ordered by `(first, second)`.
    pub fn overlaps(&self) -> &[Overlap] {
        &self.overlaps
    }

    pub fn neighbor_pairs(&self) -> Vec<(usize, usize)> {
        self.overlaps.iter().map(|o| (o.first, o.second)).collect()
    }

    /// Index into [`overlaps`](Self::overlaps) of the pair `{a, b}`.
    pub fn overlap_index(&self, a: usize, b: usize) -> Option<usize> {
        let (lo, hi) = (a.min(b), a.max(b));
        self.overlaps
            .iter()
            .position(|o| o.first == lo && o.second == hi)
    }

    /// Overlap rectangle of pair `p` in the local coordinates of subdomain `d`.
    pub fn local_overlap(&self, p: usize, d: usize) -> Region {
        self.overlaps[p]
            .region
            .relative_to(&self.subdomains[d].region)
    }

    /// Union of all subdomains.
    pub fn field_of_view(&self) -> Region {
        self.subdomains
            .iter()
            .skip(1)
            .fold(self.subdomains[0].region, |acc, s| acc.hull(&s.region))
    }

    /// Number of subdomains covering each global pixel.
    pub fn coverage(&self) -> RealField<f64> {
        let (h, w) = self.image_shape;
        let mut out = RealField::zeros_real(h, w);
        for s in &self.subdomains {
            out.add_region_real(
                &s.region,
                &Grid::filled(s.region.height(), s.region.width(), 1.0),
            );
        }
        out
    }

    /// Splits measurements into per-subdomain stacks, in local scan order.
    pub fn partition_frames<R: Real>(&self, frames: &FrameStack<R>) -> Result<Vec<FrameStack<R>>> {
        let total: usize = self.subdomains.iter().map(|s| s.frames.len()).sum();
        if frames.len() != total {
            return Err(PtychoError::Dimension(format!(
                "plan covers {total} frames, got {}",
                frames.len()
            )));
        }
        Ok(self
            .subdomains
            .iter()
            .map(|s| frames.select(&s.frames))
            .collect())
    }

    /// `R_d u`: the pixels of a global image inside subdomain `d`.
    pub fn restrict<T: Clone>(&self, image: &Grid<T>, d: usize) -> Result<Grid<T>> {
        image.ensure_shape(self.image_shape, "image")?;
        extract(image, &self.subdomains[d].region)
    }

    pub fn restrict_all<T: Clone>(&self, image: &Grid<T>) -> Result<Vec<Grid<T>>> {
        (0..self.len()).map(|d| self.restrict(image, d)).collect()
    }
}

/// `π u_d`: the pixels of subdomain `d`'s image inside its overlap with `neighbor`.
pub fn restrict_overlap<R: Real>(
    u_d: &ComplexField<R>,
    plan: &DecompositionPlan,
    d: usize,
    neighbor: usize,
) -> Result<ComplexField<R>> {
    if d >= plan.len() || neighbor >= plan.len() {
        return Err(PtychoError::Plan(format!(
            "subdomain index out of range for a {}-subdomain plan",
            plan.len()
        )));
    }
    let p = plan.overlap_index(d, neighbor).ok_or_else(|| {
        PtychoError::Plan(format!("subdomains {d} and {neighbor} do not overlap"))
    })?;
    u_d.ensure_shape(plan.subdomain(d).region.shape(), "subdomain image")?;
    extract(u_d, &plan.local_overlap(p, d))
}

/// Global image from per-subdomain solutions: covered pixels take the mean of
/// every covering solution, uncovered pixels are set to the vacuum value 1.
pub fn merge<R: Real>(
    subs: &[ComplexField<R>],
    plan: &DecompositionPlan,
) -> Result<ComplexField<R>> {
    if subs.len() != plan.len() {
        return Err(PtychoError::Dimension(format!(
            "{} sub-solutions for a {}-subdomain plan",
            subs.len(),
            plan.len()
        )));
    }
    for (u, s) in subs.iter().zip(plan.subdomains()) {
        u.ensure_shape(s.region.shape(), "sub-solution")?;
    }
    let (h, w) = plan.image_shape();
    let mut sum = ComplexField::zeros(h, w);
    for (u, s) in subs.iter().zip(plan.subdomains()) {
        sum.add_region(&s.region, u);
    }
    let cov = plan.coverage();
    for (x, c) in sum.data_mut().iter_mut().zip(cov.data()) {
        *x = if *c > 0.0 {
            *x / R::lit(*c)
        } else {
            num_complex::Complex::new(R::one(), R::zero())
        };
    }
    Ok(sum)
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex;

    #[test]
    fn two_stripes_of_the_standard_scan() {
        let g = ScanGeometry::raster((256, 256), 64, 8).unwrap();
        let p = plan_stripes(&g, 2).unwrap();
        assert_eq!(p.subdomain(0).frames.len(), 13 * 25);
        assert_eq!(p.subdomain(1).frames.len(), 12 * 25);
        assert_eq!(p.subdomain(0).region, Region::window(0, 0, 256, 160));
        assert_eq!(p.subdomain(1).region, Region::window(0, 104, 256, 152));
        assert_eq!(p.overlaps().len(), 1);
        assert_eq!(p.overlaps()[0].region.width(), 56);
        assert_eq!(p.field_of_view(), g.field_of_view());
    }

    #[test]
    fn large_scan_overlap_width() {
        let g = ScanGeometry::raster((512, 512), 64, 16).unwrap();
        let p = plan_stripes(&g, 4).unwrap();
        assert_eq!(p.neighbor_pairs(), vec![(0, 1), (1, 2), (2, 3)]);
        assert!(p.overlaps().iter().all(|o| o.region.width() == 48));
    }

    #[test]
    fn single_subdomain() {
        let g = ScanGeometry::raster((32, 32), 8, 4).unwrap();
        let p = plan_stripes(&g, 1).unwrap();
        assert_eq!(p.len(), 1);
        assert!(p.overlaps().is_empty());
        assert_eq!(p.subdomain(0).region, Region::of_shape(32, 32));
        assert_eq!(p.subdomain(0).geometry, g);
    }

    #[test]
    fn too_many_stripes() {
        let g = ScanGeometry::raster((32, 32), 8, 4).unwrap();
        assert!(matches!(
            plan_stripes(&g, 8),
            Err(PtychoError::InfeasibleDecomposition(_))
        ));
        assert!(plan_stripes(&g, 0).is_err());
    }

    #[test]
    fn axis_selection() {
        let tall = ScanGeometry::raster((40, 16), 8, 4).unwrap();
        let p = plan_stripes(&tall, 2).unwrap();
        assert_eq!(p.axis(), SplitAxis::Rows);
        assert_eq!(p.subdomain(0).region.width(), 16);
        let p = plan_stripes_along(&tall, 2, SplitAxis::Columns).unwrap();
        assert_eq!(p.subdomain(0).region.height(), 40);
    }

    #[test]
    fn frame_assignment_is_a_partition() {
        let g = ScanGeometry::raster((512, 512), 64, 16).unwrap();
        let p = plan_stripes(&g, 10).unwrap();
        let mut seen = vec![0; g.len()];
        for s in p.subdomains() {
            for (k, &j) in s.frames.iter().enumerate() {
                seen[j] += 1;
                let (r, c) = s.geometry.position(k);
                let (gr, gc) = g.position(j);
                assert_eq!((r + s.region.row_start, c + s.region.col_start), (gr, gc));
            }
        }
        assert!(seen.iter().all(|&n| n == 1));
        let sizes: Vec<_> = p.subdomains().iter().map(|s| s.frames.len() / 29).collect();
        assert_eq!(sizes, vec![3, 3, 3, 3, 3, 3, 3, 3, 3, 2]);
    }

    fn toy() -> (ScanGeometry, DecompositionPlan) {
        let g = ScanGeometry::raster((6, 6), 4, 1).unwrap();
        let p = plan_stripes(&g, 2).unwrap();
        (g, p)
    }

    #[test]
    fn restrict_overlap_is_consistent_and_indicator() {
        let (_, p) = toy();
        let u = Grid::from_fn(6, 6, |r, c| Complex::new(r as f64, c as f64));
        let a = restrict_overlap(&p.restrict(&u, 0).unwrap(), &p, 0, 1).unwrap();
        let b = restrict_overlap(&p.restrict(&u, 1).unwrap(), &p, 1, 0).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.width(), 4 - 1);

        // πᵀπ on subdomain 0 is the indicator of the overlap columns.
        let r0 = p.subdomain(0).region;
        let ov = p.local_overlap(0, 0);
        for r in 0..r0.height() {
            for c in 0..r0.width() {
                let mut e = ComplexField::<f64>::zeros(r0.height(), r0.width());
                *e.get_mut(r, c) = Complex::new(1.0, 0.0);
                let pi = restrict_overlap(&e, &p, 0, 1).unwrap();
                let back = crate::grid::embed(&pi, &ov, r0.shape()).unwrap();
                let expect = if ov.contains(r, c) { 1.0 } else { 0.0 };
                assert_eq!(back.get(r, c).re, expect);
                assert_eq!(back.norm_sqr(), expect);
            }
        }
    }

    #[test]
    fn restrict_overlap_rejects_non_neighbors() {
        let g = ScanGeometry::raster((64, 64), 8, 4).unwrap();
        let p = plan_stripes(&g, 5).unwrap();
        let u = ComplexField::<f64>::ones(64, 64);
        let u0 = p.restrict(&u, 0).unwrap();
        assert!(restrict_overlap(&u0, &p, 0, 4).is_err());
        assert!(restrict_overlap(&u0, &p, 0, 9).is_err());
    }

    #[test]
    fn merge_round_trip_and_midpoint() {
        let (_, p) = toy();
        let u = Grid::from_fn(6, 6, |r, c| Complex::new((r * 6 + c) as f64, 1.0));
        let subs = p.restrict_all(&u).unwrap();
        assert_eq!(merge(&subs, &p).unwrap(), u);

        let mut subs = subs;
        let ov0 = p.local_overlap(0, 0);
        let ov1 = p.local_overlap(0, 1);
        for (s, ov, delta) in [(0, ov0, 0.5), (1, ov1, -0.5)] {
            for r in ov.row_start..ov.row_end {
                for c in ov.col_start..ov.col_end {
                    subs[s].get_mut(r, c).re += delta;
                }
            }
        }
        assert_eq!(merge(&subs, &p).unwrap(), u);
    }

    #[test]
    fn three_stripe_coverage() {
        let g = ScanGeometry::raster((8, 12), 4, 2).unwrap();
        let p = plan_stripes(&g, 3).unwrap();
        let cov = p.coverage();
        let mut expect = [0.0; 12];
        for s in p.subdomains() {
            for c in s.region.col_start..s.region.col_end {
                expect[c] += 1.0;
            }
        }
        for r in 0..8 {
            assert_eq!(cov.row(r), &expect[..]);
        }
        assert!(expect.iter().all(|&n| n == 1.0 || n == 2.0));
        assert_eq!(p.neighbor_pairs(), vec![(0, 1), (1, 2)]);
    }

    #[test]
    fn merge_fills_vacuum_and_checks_shapes() {
        let g = ScanGeometry::new(4, 2, vec![0, 2], vec![0, 2], (8, 8)).unwrap();
        let p = plan_stripes(&g, 2).unwrap();
        let subs: Vec<_> = p
            .subdomains()
            .iter()
            .map(|s| Grid::filled(s.region.height(), s.region.width(), Complex::new(2.0, 0.0)))
            .collect();
        let m = merge(&subs, &p).unwrap();
        assert_eq!(m.get(7, 7).re, 1.0);
        assert_eq!(m.get(0, 0).re, 2.0);
        assert!(merge(&subs[..1], &p).is_err());
    }
}
