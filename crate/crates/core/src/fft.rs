//! Unitary 2-D discrete Fourier transform.
//!
//! Both directions are scaled by `1/sqrt(h*w)`, so the forward transform is an
//! isometry and the inverse is its adjoint.

use std::sync::Arc;

use num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::grid::ComplexField;
use crate::scalar::Real;

/// Reusable plan plus workspace for `height x width` transforms.
///
/// Cloning shares the plans but allocates fresh buffers, so each worker thread
/// can own a clone.
pub struct Fft2<R: Real> {
    height: usize,
    width: usize,
    row_fwd: Arc<dyn Fft<R>>,
    row_inv: Arc<dyn Fft<R>>,
    col_fwd: Arc<dyn Fft<R>>,
    col_inv: Arc<dyn Fft<R>>,
    scale: R,
    transposed: Vec<Complex<R>>,
    scratch: Vec<Complex<R>>,
}

impl<R: Real> Clone for Fft2<R> {
    fn clone(&self) -> Self {
        Self {
            height: self.height,
            width: self.width,
            row_fwd: Arc::clone(&self.row_fwd),
            row_inv: Arc::clone(&self.row_inv),
            col_fwd: Arc::clone(&self.col_fwd),
            col_inv: Arc::clone(&self.col_inv),
            scale: self.scale,
            transposed: vec![Complex::default(); self.transposed.len()],
            scratch: vec![Complex::default(); self.scratch.len()],
        }
    }
}

impl<R: Real> Fft2<R> {
    pub fn new(height: usize, width: usize) -> Self {
        let mut planner = FftPlanner::new();
        let row_fwd = planner.plan_fft_forward(width);
        let row_inv = planner.plan_fft_inverse(width);
        let col_fwd = planner.plan_fft_forward(height);
        let col_inv = planner.plan_fft_inverse(height);
        let scratch_len = [&row_fwd, &row_inv, &col_fwd, &col_inv]
            .iter()
            .map(|p| p.get_inplace_scratch_len())
            .max()
            .unwrap_or(0);
        Self {
            height,
            width,
            row_fwd,
            row_inv,
            col_fwd,
            col_inv,
            scale: R::one() / R::from_count(height * width).sqrt(),
            transposed: vec![Complex::default(); height * width],
            scratch: vec![Complex::default(); scratch_len],
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    /// In-place unitary forward transform of a row-major `height x width` buffer.
    pub fn forward(&mut self, data: &mut [Complex<R>]) {
        self.transform(data, false);
    }

    /// In-place unitary inverse transform.
    pub fn inverse(&mut self, data: &mut [Complex<R>]) {
        self.transform(data, true);
    }

    fn transform(&mut self, data: &mut [Complex<R>], inverse: bool) {
        let (h, w) = (self.height, self.width);
        assert_eq!(data.len(), h * w, "buffer does not match plan shape");
        let (row, col) = if inverse {
            (&self.row_inv, &self.col_inv)
        } else {
            (&self.row_fwd, &self.col_fwd)
        };
        row.process_with_scratch(data, &mut self.scratch);
        transpose(data, &mut self.transposed, h, w);
        col.process_with_scratch(&mut self.transposed, &mut self.scratch);
        transpose(&self.transposed, data, w, h);
        let s = self.scale;
        for x in data.iter_mut() {
            *x = *x * s;
        }
    }
}

fn transpose<T: Copy>(src: &[T], dst: &mut [T], rows: usize, cols: usize) {
    for r in 0..rows {
        for c in 0..cols {
            dst[c * rows + r] = src[r * cols + c];
        }
    }
}

/// Unitary forward DFT of `x`.
pub fn fft2_normalized<R: Real>(x: &ComplexField<R>) -> ComplexField<R> {
    let mut out = x.clone();
    Fft2::new(x.height(), x.width()).forward(out.data_mut());
    out
}

/// Unitary inverse DFT of `x`.
pub fn ifft2_normalized<R: Real>(x: &ComplexField<R>) -> ComplexField<R> {
    let mut out = x.clone();
    Fft2::new(x.height(), x.width()).inverse(out.data_mut());
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;

    type C = Complex<f64>;

    /// Direct O(n^2) DFT used as an independent check.
    fn naive_dft(x: &ComplexField<f64>, sign: f64) -> ComplexField<f64> {
        let (h, w) = x.shape();
        let s = 1.0 / ((h * w) as f64).sqrt();
        Grid::from_fn(h, w, |k, l| {
            let mut acc = C::new(0.0, 0.0);
            for r in 0..h {
                for c in 0..w {
                    let ph = sign
                        * 2.0
                        * std::f64::consts::PI
                        * ((k * r) as f64 / h as f64 + (l * c) as f64 / w as f64);
                    acc += *x.get(r, c) * C::from_polar(1.0, ph);
                }
            }
            acc * s
        })
    }

    fn pseudo_random(h: usize, w: usize, seed: u64) -> ComplexField<f64> {
        let mut state = seed.wrapping_mul(6364136223846793005).wrapping_add(1);
        let mut next = move || {
            state = state
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        };
        Grid::from_fn(h, w, |_, _| C::new(next(), next()))
    }

    #[test]
    fn constant_2x2_maps_to_scaled_delta() {
        let out = fft2_normalized(&ComplexField::<f64>::ones(2, 2));
        assert!((out.get(0, 0) - C::new(2.0, 0.0)).norm() < 1e-15);
        for (r, c) in [(0, 1), (1, 0), (1, 1)] {
            assert!(out.get(r, c).norm() < 1e-15);
        }
    }

    #[test]
    fn delta_inverse_is_constant() {
        let mut d = ComplexField::<f64>::zeros(2, 2);
        *d.get_mut(0, 0) = C::new(2.0, 0.0);
        let out = ifft2_normalized(&d);
        assert!(out.max_abs_diff(&ComplexField::ones(2, 2)) < 1e-15);
    }

    #[test]
    fn matches_naive_dft_on_rectangular_grid() {
        let x = pseudo_random(6, 10, 3);
        assert!(fft2_normalized(&x).max_abs_diff(&naive_dft(&x, -1.0)) < 1e-12);
        assert!(ifft2_normalized(&x).max_abs_diff(&naive_dft(&x, 1.0)) < 1e-12);
    }

    #[test]
    fn parseval_and_round_trip() {
        for (h, w, seed) in [(4, 4, 1), (16, 16, 2), (64, 64, 3), (5, 9, 4)] {
            let x = pseudo_random(h, w, seed);
            let fx = fft2_normalized(&x);
            assert!((fx.norm() - x.norm()).abs() <= 1e-12 * x.norm());
            let back = ifft2_normalized(&fx);
            assert!(back.max_abs_diff(&x) <= 1e-12 * x.norm());
        }
    }

    #[test]
    fn adjoint_identity() {
        let a = pseudo_random(8, 8, 11);
        let b = pseudo_random(8, 8, 12);
        let lhs = fft2_normalized(&a).inner(&b);
        let rhs = a.inner(&ifft2_normalized(&b));
        assert!((lhs - rhs).norm() < 1e-12);
    }

    #[test]
    fn works_in_single_precision() {
        let x = Grid::from_fn(8, 8, |r, c| Complex::<f32>::new(r as f32, c as f32));
        let back = ifft2_normalized(&fft2_normalized(&x));
        assert!(back.max_abs_diff(&x) < 1e-4);
    }

    #[test]
    fn cloned_plan_gives_identical_results() {
        let x = pseudo_random(16, 16, 5);
        let mut p = Fft2::new(16, 16);
        let mut q = p.clone();
        let mut a = x.clone();
        let mut b = x.clone();
        p.forward(a.data_mut());
        q.forward(b.data_mut());
        assert_eq!(a, b);
    }
}
