//! Row-major 2-D fields and axis-aligned pixel regions.

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{PtychoError, Result};
use crate::scalar::Real;

/// Rectangular row-major grid of samples.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid<T> {
    height: usize,
    width: usize,
    data: Vec<T>,
}

/// Complex-valued field (image, probe, frame).
pub type ComplexField<R> = Grid<Complex<R>>;
/// Real-valued field (intensities, densities, residual maps).
pub type RealField<R> = Grid<R>;

impl<T: Clone> Grid<T> {
    pub fn new(height: usize, width: usize, data: Vec<T>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(PtychoError::Dimension(format!(
                "grid must be at least 1x1, got {height}x{width}"
            )));
        }
        if data.len() != height * width {
            return Err(PtychoError::Dimension(format!(
                "{height}x{width} grid needs {} samples, got {}",
                height * width,
                data.len()
            )));
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    /// Panics if either dimension is zero.
    pub fn filled(height: usize, width: usize, value: T) -> Self {
        assert!(height > 0 && width > 0, "grid must be at least 1x1");
        Self {
            height,
            width,
            data: vec![value; height * width],
        }
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        assert!(height > 0 && width > 0, "grid must be at least 1x1");
        let mut data = Vec::with_capacity(height * width);
        for r in 0..height {
            for c in 0..width {
                data.push(f(r, c));
            }
        }
        Self {
            height,
            width,
            data,
        }
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn data(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> &T {
        &self.data[row * self.width + col]
    }

    #[inline]
    pub fn get_mut(&mut self, row: usize, col: usize) -> &mut T {
        &mut self.data[row * self.width + col]
    }

    #[inline]
    pub fn row(&self, row: usize) -> &[T] {
        &self.data[row * self.width..(row + 1) * self.width]
    }

    #[inline]
    pub fn row_mut(&mut self, row: usize) -> &mut [T] {
        &mut self.data[row * self.width..(row + 1) * self.width]
    }

    pub fn map<U: Clone>(&self, f: impl FnMut(&T) -> U) -> Grid<U> {
        Grid {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(f).collect(),
        }
    }

    /// Region covering the whole grid.
    pub fn full_region(&self) -> Region {
        Region::of_shape(self.height, self.width)
    }

    pub fn ensure_shape(&self, shape: (usize, usize), what: &str) -> Result<()> {
        if self.shape() != shape {
            return Err(PtychoError::Dimension(format!(
                "{what}: expected {}x{}, got {}x{}",
                shape.0, shape.1, self.height, self.width
            )));
        }
        Ok(())
    }

    /// Copies `region` out of `self` into `out` (which must have the region's shape).
    pub fn copy_region_into(&self, region: &Region, out: &mut Grid<T>) {
        debug_assert_eq!(out.shape(), region.shape());
        let w = region.width();
        for (i, r) in (region.row_start..region.row_end).enumerate() {
            let src = &self.row(r)[region.col_start..region.col_end];
            out.data[i * w..(i + 1) * w].clone_from_slice(src);
        }
    }

    /// Overwrites `region` of `self` with `patch`.
    pub fn write_region(&mut self, region: &Region, patch: &Grid<T>) {
        debug_assert_eq!(patch.shape(), region.shape());
        let w = region.width();
        for (i, r) in (region.row_start..region.row_end).enumerate() {
            let (c0, c1) = (region.col_start, region.col_end);
            self.row_mut(r)[c0..c1].clone_from_slice(&patch.data[i * w..(i + 1) * w]);
        }
    }
}

impl<R: Real> Grid<Complex<R>> {
    pub fn zeros(height: usize, width: usize) -> Self {
        Self::filled(height, width, Complex::new(R::zero(), R::zero()))
    }

    pub fn ones(height: usize, width: usize) -> Self {
        Self::filled(height, width, Complex::new(R::one(), R::zero()))
    }

    /// Sum of `|x|^2`.
    pub fn norm_sqr(&self) -> R {
        self.data.iter().map(|x| x.norm_sqr()).sum()
    }

    pub fn norm(&self) -> R {
        self.norm_sqr().sqrt()
    }

    /// `<self, other> = sum conj(self) * other`.
    pub fn inner(&self, other: &Self) -> Complex<R> {
        debug_assert_eq!(self.shape(), other.shape());
        self.data
            .iter()
            .zip(&other.data)
            .fold(Complex::new(R::zero(), R::zero()), |acc, (a, b)| {
                acc + a.conj() * b
            })
    }

    pub fn abs(&self) -> RealField<R> {
        self.map(|x| x.norm())
    }

    pub fn abs_sqr(&self) -> RealField<R> {
        self.map(|x| x.norm_sqr())
    }

    pub fn is_finite(&self) -> bool {
        self.data
            .iter()
            .all(|x| x.re.is_finite() && x.im.is_finite())
    }

    /// Adds `patch` into `region` of `self`.
    pub fn add_region(&mut self, region: &Region, patch: &Self) {
        debug_assert_eq!(patch.shape(), region.shape());
        let w = region.width();
        for (i, r) in (region.row_start..region.row_end).enumerate() {
            let (c0, c1) = (region.col_start, region.col_end);
            for (d, s) in self.row_mut(r)[c0..c1]
                .iter_mut()
                .zip(&patch.data[i * w..(i + 1) * w])
            {
                *d = *d + *s;
            }
        }
    }

    /// Largest element-wise modulus of `self - other`.
    pub fn max_abs_diff(&self, other: &Self) -> R {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (*a - *b).norm())
            .fold(R::zero(), R::max)
    }
}

impl<R: Real> Grid<R> {
    pub fn zeros_real(height: usize, width: usize) -> Self {
        Self::filled(height, width, R::zero())
    }

    pub fn sum(&self) -> R {
        self.data.iter().copied().sum()
    }

    pub fn min_value(&self) -> R {
        self.data.iter().copied().fold(R::infinity(), R::min)
    }

    pub fn max_value(&self) -> R {
        self.data.iter().copied().fold(R::neg_infinity(), R::max)
    }

    /// Adds `patch` into `region` of `self`.
    pub fn add_region_real(&mut self, region: &Region, patch: &Self) {
        debug_assert_eq!(patch.shape(), region.shape());
        let w = region.width();
        for (i, r) in (region.row_start..region.row_end).enumerate() {
            let (c0, c1) = (region.col_start, region.col_end);
            for (d, s) in self.row_mut(r)[c0..c1]
                .iter_mut()
                .zip(&patch.data[i * w..(i + 1) * w])
            {
                *d = *d + *s;
            }
        }
    }
}

/// Half-open axis-aligned pixel rectangle `[row_start, row_end) x [col_start, col_end)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Region {
    pub row_start: usize,
    pub row_end: usize,
    pub col_start: usize,
    pub col_end: usize,
}

impl Region {
    pub fn new(row_start: usize, row_end: usize, col_start: usize, col_end: usize) -> Result<Self> {
        if row_start >= row_end || col_start >= col_end {
            return Err(PtychoError::Validation(format!(
                "empty region rows {row_start}..{row_end}, cols {col_start}..{col_end}"
            )));
        }
        Ok(Self {
            row_start,
            row_end,
            col_start,
            col_end,
        })
    }

    /// `height x width` window with top-left corner at `(row, col)`.
    pub fn window(row: usize, col: usize, height: usize, width: usize) -> Self {
        assert!(height > 0 && width > 0);
        Self {
            row_start: row,
            row_end: row + height,
            col_start: col,
            col_end: col + width,
        }
    }

    pub fn of_shape(height: usize, width: usize) -> Self {
        Self::window(0, 0, height, width)
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.row_end - self.row_start
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.col_end - self.col_start
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.height(), self.width())
    }

    #[inline]
    pub fn area(&self) -> usize {
        self.height() * self.width()
    }

    pub fn fits_in(&self, shape: (usize, usize)) -> bool {
        self.row_end <= shape.0 && self.col_end <= shape.1
    }

    #[inline]
    pub fn contains(&self, row: usize, col: usize) -> bool {
        (self.row_start..self.row_end).contains(&row)
            && (self.col_start..self.col_end).contains(&col)
    }

    pub fn contains_region(&self, other: &Region) -> bool {
        other.row_start >= self.row_start
            && other.row_end <= self.row_end
            && other.col_start >= self.col_start
            && other.col_end <= self.col_end
    }

    pub fn intersect(&self, other: &Region) -> Option<Region> {
        let r0 = self.row_start.max(other.row_start);
        let r1 = self.row_end.min(other.row_end);
        let c0 = self.col_start.max(other.col_start);
        let c1 = self.col_end.min(other.col_end);
        (r0 < r1 && c0 < c1).then_some(Region {
            row_start: r0,
            row_end: r1,
            col_start: c0,
            col_end: c1,
        })
    }

    /// Smallest region containing both.
    pub fn hull(&self, other: &Region) -> Region {
        Region {
            row_start: self.row_start.min(other.row_start),
            row_end: self.row_end.max(other.row_end),
            col_start: self.col_start.min(other.col_start),
            col_end: self.col_end.max(other.col_end),
        }
    }

    /// Re-expresses `self` in the coordinates of `frame` (whose top-left becomes the origin).
    /// `self` must lie inside `frame`.
    pub fn relative_to(&self, frame: &Region) -> Region {
        debug_assert!(frame.contains_region(self));
        Region {
            row_start: self.row_start - frame.row_start,
            row_end: self.row_end - frame.row_start,
            col_start: self.col_start - frame.col_start,
            col_end: self.col_end - frame.col_start,
        }
    }

    fn check_in(&self, shape: (usize, usize)) -> Result<()> {
        if !self.fits_in(shape) {
            return Err(PtychoError::Bounds(format!(
                "region rows {}..{}, cols {}..{} exceeds {}x{}",
                self.row_start, self.row_end, self.col_start, self.col_end, shape.0, shape.1
            )));
        }
        Ok(())
    }
}

/// Copies `region` out of `field`.
pub fn extract<T: Clone>(field: &Grid<T>, region: &Region) -> Result<Grid<T>> {
    region.check_in(field.shape())?;
    let mut data = Vec::with_capacity(region.area());
    for r in region.row_start..region.row_end {
        data.extend_from_slice(&field.row(r)[region.col_start..region.col_end]);
    }
    Grid::new(region.height(), region.width(), data)
}

/// Zero field of `shape` with `patch` written into `region`; the adjoint of [`extract`].
pub fn embed<R: Real>(
    patch: &ComplexField<R>,
    region: &Region,
    shape: (usize, usize),
) -> Result<ComplexField<R>> {
    region.check_in(shape)?;
    if patch.shape() != region.shape() {
        return Err(PtychoError::Dimension(format!(
            "patch {}x{} does not match region {}x{}",
            patch.height(),
            patch.width(),
            region.height(),
            region.width()
        )));
    }
    if shape.0 == 0 || shape.1 == 0 {
        return Err(PtychoError::Dimension("target shape is empty".into()));
    }
    let mut out = ComplexField::zeros(shape.0, shape.1);
    out.write_region(region, patch);
    Ok(out)
}
