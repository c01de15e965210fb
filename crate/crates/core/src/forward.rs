//! Ptychographic forward operator, its adjoints and the diagonal normal operators.
//!
//! Frame `j` of the forward model is `F(w ∘ S_j u)`: the probe `w` multiplies the
//! `j`-th scan window of the image `u` and the product is Fourier transformed.
//! For fixed probe this is linear in the image; for fixed image it is linear in
//! the probe, which is the bilinear map the blind solver works with.

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{PtychoError, Result};
use crate::fft::Fft2;
use crate::grid::{ComplexField, Grid, RealField, Region};
use crate::scalar::Real;

/// Raster scan: top-left window corners on an equally spaced square grid.
///
/// Frames are ordered row-major over the grid (left to right, then top to bottom).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawGeometry")]
pub struct ScanGeometry {
    frame_side: usize,
    step: usize,
    row_offsets: Vec<usize>,
    col_offsets: Vec<usize>,
    image_shape: (usize, usize),
}

#[derive(Deserialize)]
struct RawGeometry {
    frame_side: usize,
    step: usize,
    row_offsets: Vec<usize>,
    col_offsets: Vec<usize>,
    image_shape: (usize, usize),
}

impl TryFrom<RawGeometry> for ScanGeometry {
    type Error = PtychoError;

    fn try_from(raw: RawGeometry) -> Result<Self> {
        Self::new(
            raw.frame_side,
            raw.step,
            raw.row_offsets,
            raw.col_offsets,
            raw.image_shape,
        )
    }
}

impl ScanGeometry {
    pub fn new(
        frame_side: usize,
        step: usize,
        row_offsets: Vec<usize>,
        col_offsets: Vec<usize>,
        image_shape: (usize, usize),
    ) -> Result<Self> {
        if frame_side == 0 || step == 0 {
            return Err(PtychoError::Parameter(
                "frame side and step must be positive".into(),
            ));
        }
        if step >= frame_side {
            return Err(PtychoError::Parameter(format!(
                "step {step} must be smaller than the frame side {frame_side} for windows to overlap"
            )));
        }
        if row_offsets.is_empty() || col_offsets.is_empty() {
            return Err(PtychoError::Validation("scan has no positions".into()));
        }
        for offsets in [&row_offsets, &col_offsets] {
            if offsets.windows(2).any(|p| p[1] != p[0] + step) {
                return Err(PtychoError::Validation(
                    "scan offsets must form an equally spaced raster with the given step".into(),
                ));
            }
        }
        let last_r = *row_offsets.last().unwrap() + frame_side;
        let last_c = *col_offsets.last().unwrap() + frame_side;
        if last_r > image_shape.0 || last_c > image_shape.1 {
            return Err(PtychoError::Bounds(format!(
                "scan windows reach {last_r}x{last_c} but the image is {}x{}",
                image_shape.0, image_shape.1
            )));
        }
        Ok(Self {
            frame_side,
            step,
            row_offsets,
            col_offsets,
            image_shape,
        })
    }

    /// Largest raster starting at the image corner that fits inside `image_shape`.
    pub fn raster(image_shape: (usize, usize), frame_side: usize, step: usize) -> Result<Self> {
        if frame_side > image_shape.0 || frame_side > image_shape.1 {
            return Err(PtychoError::Bounds(format!(
                "frame side {frame_side} exceeds image {}x{}",
                image_shape.0, image_shape.1
            )));
        }
        if step == 0 {
            return Err(PtychoError::Parameter("step must be positive".into()));
        }
        let n_rows = (image_shape.0 - frame_side) / step + 1;
        let n_cols = (image_shape.1 - frame_side) / step + 1;
        Self::new(
            frame_side,
            step,
            (0..n_rows).map(|i| i * step).collect(),
            (0..n_cols).map(|i| i * step).collect(),
            image_shape,
        )
    }

    #[inline]
    pub fn frame_side(&self) -> usize {
        self.frame_side
    }

    #[inline]
    pub fn frame_shape(&self) -> (usize, usize) {
        (self.frame_side, self.frame_side)
    }

    #[inline]
    pub fn step(&self) -> usize {
        self.step
    }

    #[inline]
    pub fn image_shape(&self) -> (usize, usize) {
        self.image_shape
    }

    pub fn row_offsets(&self) -> &[usize] {
        &self.row_offsets
    }

    pub fn col_offsets(&self) -> &[usize] {
        &self.col_offsets
    }

    /// Number of scan rows and columns.
    pub fn grid_shape(&self) -> (usize, usize) {
        (self.row_offsets.len(), self.col_offsets.len())
    }

    /// Number of frames `J`.
    #[inline]
    pub fn len(&self) -> usize {
        self.row_offsets.len() * self.col_offsets.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Top-left corner of frame `j`.
    #[inline]
    pub fn position(&self, j: usize) -> (usize, usize) {
        let nc = self.col_offsets.len();
        (self.row_offsets[j / nc], self.col_offsets[j % nc])
    }

    pub fn positions(&self) -> Vec<(usize, usize)> {
        (0..self.len()).map(|j| self.position(j)).collect()
    }

    /// Beam center of frame `j` (corner plus half a frame).
    pub fn center(&self, j: usize) -> (usize, usize) {
        let (r, c) = self.position(j);
        (r + self.frame_side / 2, c + self.frame_side / 2)
    }

    #[inline]
    pub fn window(&self, j: usize) -> Region {
        let (r, c) = self.position(j);
        Region::window(r, c, self.frame_side, self.frame_side)
    }

    /// Union of all windows (a rectangle for a raster scan).
    pub fn field_of_view(&self) -> Region {
        let r0 = self.row_offsets[0];
        let c0 = self.col_offsets[0];
        let r1 = *self.row_offsets.last().unwrap() + self.frame_side;
        let c1 = *self.col_offsets.last().unwrap() + self.frame_side;
        Region::window(r0, c0, r1 - r0, c1 - c0)
    }

    /// The scan restricted to grid rows `rows` and columns `cols`, re-expressed
    /// in the coordinates of its own field of view.
    pub fn sub_scan(
        &self,
        rows: std::ops::Range<usize>,
        cols: std::ops::Range<usize>,
    ) -> Result<(ScanGeometry, Region)> {
        if rows.is_empty()
            || cols.is_empty()
            || rows.end > self.row_offsets.len()
            || cols.end > self.col_offsets.len()
        {
            return Err(PtychoError::Plan(format!(
                "sub-scan rows {rows:?}, cols {cols:?} outside {:?} scan grid",
                self.grid_shape()
            )));
        }
        let r_off = &self.row_offsets[rows];
        let c_off = &self.col_offsets[cols];
        let fov = Region::window(
            r_off[0],
            c_off[0],
            r_off[r_off.len() - 1] + self.frame_side - r_off[0],
            c_off[c_off.len() - 1] + self.frame_side - c_off[0],
        );
        let geometry = ScanGeometry::new(
            self.frame_side,
            self.step,
            r_off.iter().map(|r| r - fov.row_start).collect(),
            c_off.iter().map(|c| c - fov.col_start).collect(),
            fov.shape(),
        )?;
        Ok((geometry, fov))
    }

    fn check_image(&self, image: &ComplexField<impl Real>) -> Result<()> {
        image.ensure_shape(self.image_shape, "image")
    }

    fn check_probe(&self, probe: &ComplexField<impl Real>) -> Result<()> {
        probe.ensure_shape(self.frame_shape(), "probe")
    }

    fn check_frames<T: Clone>(&self, frames: &[Grid<T>]) -> Result<()> {
        if frames.len() != self.len() {
            return Err(PtychoError::Dimension(format!(
                "expected {} frames, got {}",
                self.len(),
                frames.len()
            )));
        }
        for f in frames {
            f.ensure_shape(self.frame_shape(), "frame")?;
        }
        Ok(())
    }
}

/// Phaseless measurements: one nonnegative intensity frame per scan position.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameStack<R> {
    frames: Vec<RealField<R>>,
}

impl<R: Real> FrameStack<R> {
    pub fn new(frames: Vec<RealField<R>>) -> Result<Self> {
        let Some(first) = frames.first() else {
            return Err(PtychoError::Validation("frame stack is empty".into()));
        };
        let shape = first.shape();
        if shape.0 != shape.1 {
            return Err(PtychoError::Dimension("frames must be square".into()));
        }
        for (j, f) in frames.iter().enumerate() {
            f.ensure_shape(shape, "frame")?;
            if f.data().iter().any(|x| !(x.is_finite() && *x >= R::zero())) {
                return Err(PtychoError::Validation(format!(
                    "frame {j} contains a negative or non-finite intensity"
                )));
            }
        }
        Ok(Self { frames })
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn frame_side(&self) -> usize {
        self.frames[0].height()
    }

    pub fn frames(&self) -> &[RealField<R>] {
        &self.frames
    }

    pub fn into_frames(self) -> Vec<RealField<R>> {
        self.frames
    }

    pub fn total(&self) -> R {
        self.frames.iter().map(|f| f.sum()).sum()
    }

    /// Element-wise square roots (measured amplitudes).
    pub fn amplitudes(&self) -> Vec<RealField<R>> {
        self.frames.iter().map(|f| f.map(|x| x.sqrt())).collect()
    }

    /// Frames `indices`, in the given order.
    pub fn select(&self, indices: &[usize]) -> Self {
        Self {
            frames: indices.iter().map(|&j| self.frames[j].clone()).collect(),
        }
    }

    pub(crate) fn check_against(&self, geometry: &ScanGeometry) -> Result<()> {
        geometry.check_frames(&self.frames)
    }
}

/// Forward/adjoint kernels with a reusable FFT workspace.
///
/// All accumulation runs over frames in index order, so results never depend
/// on how callers distribute work across threads.
#[derive(Clone)]
pub struct ScanOperator<R: Real> {
    geometry: ScanGeometry,
    fft: Fft2<R>,
    buf: Vec<Complex<R>>,
}

impl<R: Real> ScanOperator<R> {
    pub fn new(geometry: ScanGeometry) -> Self {
        let n = geometry.frame_side;
        Self {
            fft: Fft2::new(n, n),
            buf: vec![Complex::default(); n * n],
            geometry,
        }
    }

    pub fn geometry(&self) -> &ScanGeometry {
        &self.geometry
    }

    /// Computes each frame `F(probe ∘ S_j image)` and hands it to `sink(j, frame)`.
    pub fn forward_with(
        &mut self,
        probe: &ComplexField<R>,
        image: &ComplexField<R>,
        mut sink: impl FnMut(usize, &[Complex<R>]),
    ) {
        let n = self.geometry.frame_side;
        let w = probe.data();
        for j in 0..self.geometry.len() {
            let (r0, c0) = self.geometry.position(j);
            for r in 0..n {
                let src = &image.row(r0 + r)[c0..c0 + n];
                let dst = &mut self.buf[r * n..(r + 1) * n];
                for ((d, s), p) in dst.iter_mut().zip(src).zip(&w[r * n..(r + 1) * n]) {
                    *d = *p * *s;
                }
            }
            self.fft.forward(&mut self.buf);
            sink(j, &self.buf);
        }
    }

    /// Accumulates `sum_j S_j^T (conj(probe) ∘ F^*(y_j))` into `out`, where
    /// `fill(j, buf)` writes `y_j` into the workspace.
    pub fn adjoint_with(
        &mut self,
        probe: &ComplexField<R>,
        mut fill: impl FnMut(usize, &mut [Complex<R>]),
        out: &mut ComplexField<R>,
    ) {
        let n = self.geometry.frame_side;
        let w = probe.data();
        for j in 0..self.geometry.len() {
            fill(j, &mut self.buf);
            self.fft.inverse(&mut self.buf);
            let (r0, c0) = self.geometry.position(j);
            for r in 0..n {
                let dst = &mut out.row_mut(r0 + r)[c0..c0 + n];
                let src = &self.buf[r * n..(r + 1) * n];
                for ((d, s), p) in dst.iter_mut().zip(src).zip(&w[r * n..(r + 1) * n]) {
                    *d = *d + p.conj() * *s;
                }
            }
        }
    }

    /// Inverse-transforms every frame: `fill(j, buf)` writes `y_j`, then
    /// `sink(j, buf)` receives `F^*(y_j)`.
    pub fn inverse_with(
        &mut self,
        mut fill: impl FnMut(usize, &mut [Complex<R>]),
        mut sink: impl FnMut(usize, &[Complex<R>]),
    ) {
        for j in 0..self.geometry.len() {
            fill(j, &mut self.buf);
            self.fft.inverse(&mut self.buf);
            sink(j, &self.buf);
        }
    }

    /// Accumulates the probe-side adjoint `sum_j conj(S_j image) ∘ F^*(y_j)`
    /// into the frame-shaped `out`.
    pub fn probe_adjoint_with(
        &mut self,
        image: &ComplexField<R>,
        mut fill: impl FnMut(usize, &mut [Complex<R>]),
        out: &mut ComplexField<R>,
    ) {
        let n = self.geometry.frame_side;
        for j in 0..self.geometry.len() {
            fill(j, &mut self.buf);
            self.fft.inverse(&mut self.buf);
            let (r0, c0) = self.geometry.position(j);
            for r in 0..n {
                let patch = &image.row(r0 + r)[c0..c0 + n];
                let dst = &mut out.data_mut()[r * n..(r + 1) * n];
                for ((d, s), u) in dst.iter_mut().zip(&self.buf[r * n..(r + 1) * n]).zip(patch) {
                    *d = *d + u.conj() * *s;
                }
            }
        }
    }

    pub fn illumination_density(&self, probe: &ComplexField<R>) -> RealField<R> {
        let (h, w) = self.geometry.image_shape;
        let mut out = RealField::zeros_real(h, w);
        let p2 = probe.abs_sqr();
        for j in 0..self.geometry.len() {
            out.add_region_real(&self.geometry.window(j), &p2);
        }
        out
    }

    pub fn probe_density(&self, image: &ComplexField<R>) -> RealField<R> {
        let n = self.geometry.frame_side;
        let mut out = RealField::zeros_real(n, n);
        for j in 0..self.geometry.len() {
            let (r0, c0) = self.geometry.position(j);
            for r in 0..n {
                let patch = &image.row(r0 + r)[c0..c0 + n];
                for (d, u) in out.row_mut(r).iter_mut().zip(patch) {
                    *d = *d + u.norm_sqr();
                }
            }
        }
        out
    }
}

/// Frames `F(probe ∘ S_j image)` in scan order.
pub fn forward<R: Real>(
    probe: &ComplexField<R>,
    image: &ComplexField<R>,
    geometry: &ScanGeometry,
) -> Result<Vec<ComplexField<R>>> {
    geometry.check_probe(probe)?;
    geometry.check_image(image)?;
    let n = geometry.frame_side;
    let mut frames = Vec::with_capacity(geometry.len());
    ScanOperator::new(geometry.clone()).forward_with(probe, image, |_, f| {
        frames.push(Grid::new(n, n, f.to_vec()).expect("frame shape"));
    });
    Ok(frames)
}

/// Adjoint of [`forward`] in the image.
pub fn adjoint<R: Real>(
    probe: &ComplexField<R>,
    frames: &[ComplexField<R>],
    geometry: &ScanGeometry,
) -> Result<ComplexField<R>> {
    geometry.check_probe(probe)?;
    geometry.check_frames(frames)?;
    let (h, w) = geometry.image_shape;
    let mut out = ComplexField::zeros(h, w);
    ScanOperator::new(geometry.clone()).adjoint_with(
        probe,
        |j, buf| buf.copy_from_slice(frames[j].data()),
        &mut out,
    );
    Ok(out)
}

/// Adjoint of [`forward`] in the probe, for fixed image.
pub fn probe_adjoint<R: Real>(
    image: &ComplexField<R>,
    frames: &[ComplexField<R>],
    geometry: &ScanGeometry,
) -> Result<ComplexField<R>> {
    geometry.check_image(image)?;
    geometry.check_frames(frames)?;
    let n = geometry.frame_side;
    let mut out = ComplexField::zeros(n, n);
    ScanOperator::new(geometry.clone()).probe_adjoint_with(
        image,
        |j, buf| buf.copy_from_slice(frames[j].data()),
        &mut out,
    );
    Ok(out)
}

/// Diagonal of `A^*A`: `sum_j S_j^T |probe|^2` on the image grid.
pub fn illumination_density<R: Real>(
    probe: &ComplexField<R>,
    geometry: &ScanGeometry,
) -> Result<RealField<R>> {
    geometry.check_probe(probe)?;
    Ok(ScanOperator::new(geometry.clone()).illumination_density(probe))
}

/// Diagonal of `D_U^* D_U`: `sum_j S_j |image|^2` on the frame grid.
pub fn probe_density<R: Real>(
    image: &ComplexField<R>,
    geometry: &ScanGeometry,
) -> Result<RealField<R>> {
    geometry.check_image(image)?;
    Ok(ScanOperator::new(geometry.clone()).probe_density(image))
}

/// Squared modulus of every frame.
pub fn intensity<R: Real>(frames: &[ComplexField<R>]) -> Result<FrameStack<R>> {
    FrameStack::new(frames.iter().map(|f| f.abs_sqr()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fft::fft2_normalized;
    use crate::grid::{embed, extract};

    type C = Complex<f64>;

    fn noise(h: usize, w: usize, seed: u64) -> ComplexField<f64> {
        let mut s = seed.wrapping_add(0x9E3779B97F4A7C15);
        let mut next = move || {
            s ^= s << 13;
            s ^= s >> 7;
            s ^= s << 17;
            (s >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        Grid::from_fn(h, w, |_, _| C::new(next(), next()))
    }

    #[test]
    fn geometry_raster_counts() {
        let g = ScanGeometry::raster((256, 256), 64, 8).unwrap();
        assert_eq!(g.grid_shape(), (25, 25));
        assert_eq!(g.field_of_view(), Region::of_shape(256, 256));
        assert_eq!(g.position(26), (8, 8));
        assert_eq!(g.center(0), (32, 32));
        assert!(ScanGeometry::raster((256, 256), 64, 64).is_err());
        assert!(ScanGeometry::new(4, 2, vec![0, 3], vec![0], (8, 8)).is_err());
        assert!(ScanGeometry::new(4, 2, vec![0, 2, 4], vec![0], (7, 8)).is_err());
    }

    #[test]
    fn geometry_serde_validates() {
        let g = ScanGeometry::raster((16, 16), 8, 4).unwrap();
        let s = serde_json::to_string(&g).unwrap();
        assert_eq!(serde_json::from_str::<ScanGeometry>(&s).unwrap(), g);
        let bad = s.replace("\"step\":4", "\"step\":9");
        assert!(serde_json::from_str::<ScanGeometry>(&bad).is_err());
    }

    #[test]
    fn constant_probe_and_image_give_scaled_delta() {
        let g = ScanGeometry::new(2, 1, vec![0], vec![0], (4, 4)).unwrap();
        let frames = forward(&ComplexField::ones(2, 2), &ComplexField::ones(4, 4), &g).unwrap();
        assert_eq!(frames.len(), 1);
        let mut expect = ComplexField::<f64>::zeros(2, 2);
        *expect.get_mut(0, 0) = C::new(2.0, 0.0);
        assert!(frames[0].max_abs_diff(&expect) < 1e-15);
    }

    #[test]
    fn forward_matches_per_window_loop() {
        let g = ScanGeometry::raster((8, 8), 4, 2).unwrap();
        assert_eq!(g.len(), 9);
        let u = noise(8, 8, 1);
        let w = noise(4, 4, 2);
        let frames = forward(&w, &u, &g).unwrap();
        let mut energy = 0.0;
        for (j, f) in frames.iter().enumerate() {
            let patch = extract(&u, &g.window(j)).unwrap();
            let exit = Grid::from_fn(4, 4, |r, c| w.get(r, c) * patch.get(r, c));
            energy += exit.norm_sqr();
            assert!(f.max_abs_diff(&fft2_normalized(&exit)) < 1e-12);
        }
        let total: f64 = frames.iter().map(|f| f.norm_sqr()).sum();
        assert!((total - energy).abs() < 1e-12 * energy);
    }

    #[test]
    fn adjoint_matches_accumulation_loop() {
        let g = ScanGeometry::new(4, 2, vec![0, 2, 4], vec![2], (8, 8)).unwrap();
        let w = noise(4, 4, 3);
        let z: Vec<_> = (0..3).map(|j| noise(4, 4, 10 + j)).collect();
        let got = adjoint(&w, &z, &g).unwrap();
        let mut expect = ComplexField::zeros(8, 8);
        for (j, zj) in z.iter().enumerate() {
            let back = crate::fft::ifft2_normalized(zj);
            let prod = Grid::from_fn(4, 4, |r, c| w.get(r, c).conj() * back.get(r, c));
            let e = embed(&prod, &g.window(j), (8, 8)).unwrap();
            for (a, b) in expect.data_mut().iter_mut().zip(e.data()) {
                *a += b;
            }
        }
        assert!(got.max_abs_diff(&expect) < 1e-12);
    }

    #[test]
    fn adjoint_of_delta_frames_reconstructs_patch_embedding() {
        let g = ScanGeometry::new(2, 1, vec![1], vec![1], (4, 4)).unwrap();
        // F^* of the delta 2·δ(0,0) on 2x2 is the all-ones patch.
        let mut d = ComplexField::<f64>::zeros(2, 2);
        *d.get_mut(0, 0) = C::new(2.0, 0.0);
        let got = adjoint(&ComplexField::ones(2, 2), &[d], &g).unwrap();
        let expect = embed(&ComplexField::ones(2, 2), &g.window(0), (4, 4)).unwrap();
        assert!(got.max_abs_diff(&expect) < 1e-15);
    }

    #[test]
    fn density_counts_overlapping_windows() {
        let g = ScanGeometry::new(2, 1, vec![0], vec![0, 1], (3, 4)).unwrap();
        let rho = illumination_density(&ComplexField::<f64>::ones(2, 2), &g).unwrap();
        let expect = [1.0, 2.0, 1.0, 0.0, 1.0, 2.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        assert_eq!(rho.data(), &expect);
    }

    #[test]
    fn probe_density_cases() {
        let g = ScanGeometry::raster((6, 6), 4, 1).unwrap();
        let ones = probe_density(&ComplexField::<f64>::ones(6, 6), &g).unwrap();
        assert!(ones.data().iter().all(|&x| x == g.len() as f64));

        let single = ScanGeometry::new(4, 1, vec![1], vec![2], (6, 6)).unwrap();
        let u = noise(6, 6, 4);
        let got = probe_density(&u, &single).unwrap();
        let patch = extract(&u, &single.window(0)).unwrap().abs_sqr();
        assert_eq!(got, patch);

        let got = probe_density(&u, &g).unwrap();
        let mut expect = RealField::<f64>::zeros_real(4, 4);
        for j in 0..g.len() {
            let p = extract(&u, &g.window(j)).unwrap();
            for (e, x) in expect.data_mut().iter_mut().zip(p.data()) {
                *e += x.norm_sqr();
            }
        }
        for (a, b) in got.data().iter().zip(expect.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn intensity_cases() {
        let unit = Grid::from_fn(3, 3, |r, c| C::from_polar(1.0, (r * 3 + c) as f64));
        let f = intensity(&[unit]).unwrap();
        assert!(f.frames()[0].data().iter().all(|x| (x - 1.0).abs() < 1e-15));
        let z = intensity(&[ComplexField::<f64>::zeros(3, 3)]).unwrap();
        assert_eq!(z.total(), 0.0);
        let x = noise(3, 3, 9);
        let f = intensity(std::slice::from_ref(&x)).unwrap();
        for (a, b) in f.frames()[0].data().iter().zip(x.data()) {
            assert_eq!(*a, b.re * b.re + b.im * b.im);
        }
    }

    #[test]
    fn shape_errors() {
        let g = ScanGeometry::raster((8, 8), 4, 2).unwrap();
        let w = ComplexField::<f64>::ones(4, 4);
        let one = ComplexField::<f64>::ones;
        assert!(forward(&w, &one(7, 8), &g).is_err());
        assert!(forward(&one(3, 3), &one(8, 8), &g).is_err());
        assert!(adjoint(&w, &[one(4, 4)], &g).is_err());
        assert!(FrameStack::new(vec![Grid::filled(2, 2, -1.0)]).is_err());
    }
}
