//! Synthetic experiments: test images, a zone-plate probe, frame simulation
//! and Poisson noise.

use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{PtychoError, Result};
use crate::fft::Fft2;
use crate::forward::{forward, intensity, FrameStack, ScanGeometry};
use crate::grid::{ComplexField, Grid, RealField, Region};
use crate::scalar::Real;

/// Largest expected count for which every integer is exactly representable.
const MAX_EXPECTED_COUNT: f64 = 9_007_199_254_740_992.0;

/// `magnitude · exp(i · phase)`, pixel by pixel.
pub fn make_sample<R: Real>(
    magnitude: &RealField<R>,
    phase: &RealField<R>,
) -> Result<ComplexField<R>> {
    phase.ensure_shape(magnitude.shape(), "phase")?;
    if magnitude
        .data()
        .iter()
        .any(|m| !(*m >= R::zero() && *m <= R::one()))
    {
        return Err(PtychoError::Validation(
            "magnitude must lie in [0, 1]".into(),
        ));
    }
    if phase
        .data()
        .iter()
        .any(|p| !(*p >= R::zero() && *p <= R::PI()))
    {
        return Err(PtychoError::Validation("phase must lie in [0, π]".into()));
    }
    let data = magnitude
        .data()
        .iter()
        .zip(phase.data())
        .map(|(m, p)| Complex::from_polar(*m, *p))
        .collect();
    Grid::new(magnitude.height(), magnitude.width(), data)
}

/// Sets every pixel outside `field_of_view` to the vacuum value `1`.
pub fn enforce_vacuum<R: Real>(sample: &mut ComplexField<R>, field_of_view: &Region) {
    let w = sample.width();
    for (k, x) in sample.data_mut().iter_mut().enumerate() {
        if !field_of_view.contains(k / w, k % w) {
            *x = Complex::new(R::one(), R::zero());
        }
    }
}

/// Which procedural test image to generate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pattern {
    Magnitude,
    Phase,
}

/// Deterministic test image in `[0, 1]`: smooth blobs, a few sharp-edged
/// disks and rectangles, and a fine sinusoidal texture.
// The literal 6.28 is part of the image recipe; changing it changes every image.
#[allow(clippy::approx_constant)]
pub fn procedural_image(
    height: usize,
    width: usize,
    pattern: Pattern,
    seed: u64,
) -> RealField<f64> {
    let salt = match pattern {
        Pattern::Magnitude => 0x6d61_676e,
        Pattern::Phase => 0x7068_6173,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ salt);
    let (hf, wf) = (height as f64, width as f64);
    let scale = hf.min(wf);

    let blobs: Vec<(f64, f64, f64, f64)> = (0..14)
        .map(|_| {
            (
                rng.random_range(0.0..hf),
                rng.random_range(0.0..wf),
                rng.random_range(0.04..0.16) * scale,
                rng.random_range(-1.0..1.0),
            )
        })
        .collect();
    let disks: Vec<(f64, f64, f64, f64)> = (0..4)
        .map(|_| {
            (
                rng.random_range(0.1..0.9) * hf,
                rng.random_range(0.1..0.9) * wf,
                rng.random_range(0.04..0.1) * scale,
                rng.random_range(-0.6..0.6),
            )
        })
        .collect();
    let rects: Vec<(f64, f64, f64, f64, f64)> = (0..3)
        .map(|_| {
            let r0 = rng.random_range(0.05..0.7) * hf;
            let c0 = rng.random_range(0.05..0.7) * wf;
            (
                r0,
                c0,
                r0 + rng.random_range(0.08..0.25) * hf,
                c0 + rng.random_range(0.08..0.25) * wf,
                rng.random_range(-0.5..0.5),
            )
        })
        .collect();
    let waves: Vec<(f64, f64, f64)> = (0..3)
        .map(|_| {
            let angle: f64 = rng.random_range(0.0..std::f64::consts::PI);
            let freq = rng.random_range(0.08..0.25);
            (
                freq * angle.cos(),
                freq * angle.sin(),
                rng.random_range(0.0..6.28),
            )
        })
        .collect();

    let raw = Grid::from_fn(height, width, |r, c| {
        let (y, x) = (r as f64, c as f64);
        let mut v = 0.0;
        for (cy, cx, s, a) in &blobs {
            let d2 = (y - cy).powi(2) + (x - cx).powi(2);
            v += a * (-d2 / (2.0 * s * s)).exp();
        }
        for (cy, cx, rad, a) in &disks {
            if (y - cy).powi(2) + (x - cx).powi(2) <= rad * rad {
                v += a;
            }
        }
        for (r0, c0, r1, c1, a) in &rects {
            if y >= *r0 && y < *r1 && x >= *c0 && x < *c1 {
                v += a;
            }
        }
        for (ky, kx, ph) in &waves {
            v += 0.06 * (ky * y + kx * x + ph).sin();
        }
        v
    });
    let (lo, hi) = (raw.min_value(), raw.max_value());
    let span = if hi > lo { hi - lo } else { 1.0 };
    raw.map(|v| ((v - lo) / span).clamp(0.0, 1.0))
}

/// Magnitude in `[floor, 1]` and phase in `[0, π]` test images.
pub fn test_sample(
    height: usize,
    width: usize,
    floor: f64,
    seed: u64,
) -> Result<ComplexField<f64>> {
    let mag = procedural_image(height, width, Pattern::Magnitude, seed)
        .map(|m| floor + (1.0 - floor) * m);
    let phase =
        procedural_image(height, width, Pattern::Phase, seed).map(|p| std::f64::consts::PI * p);
    make_sample(&mag, &phase)
}

/// Bilinear resampling with corner pixels aligned.
pub fn resample_bilinear(
    field: &RealField<f64>,
    height: usize,
    width: usize,
) -> Result<RealField<f64>> {
    let (h, w) = field.shape();
    if height == 0 || width == 0 {
        return Err(PtychoError::Dimension("resample target is empty".into()));
    }
    let map = |i: usize, n_out: usize, n_in: usize| -> (usize, usize, f64) {
        if n_out == 1 || n_in == 1 {
            return (0, 0, 0.0);
        }
        let x = i as f64 * (n_in - 1) as f64 / (n_out - 1) as f64;
        let i0 = (x.floor() as usize).min(n_in - 1);
        let i1 = (i0 + 1).min(n_in - 1);
        (i0, i1, x - i0 as f64)
    };
    Ok(Grid::from_fn(height, width, |r, c| {
        let (r0, r1, fr) = map(r, height, h);
        let (c0, c1, fc) = map(c, width, w);
        let top = field.get(r0, c0) * (1.0 - fc) + field.get(r0, c1) * fc;
        let bottom = field.get(r1, c0) * (1.0 - fc) + field.get(r1, c1) * fc;
        top * (1.0 - fr) + bottom * fr
    }))
}

/// Zone-plate probe: a circular pupil with binary Fresnel zones and a
/// quadratic defocus, propagated to the sample plane.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZonePlateParams {
    pub side: usize,
    /// Pupil radius in frequency pixels.
    pub pupil_radius: f64,
    /// Number of Fresnel zones across the pupil.
    pub zones: usize,
    /// Defocus phase coefficient per squared frequency pixel.
    pub defocus: f64,
    /// Total energy `‖w‖²`.
    pub flux: f64,
}

impl Default for ZonePlateParams {
    fn default() -> Self {
        Self {
            side: 64,
            pupil_radius: 14.0,
            zones: 5,
            defocus: 0.04,
            flux: 4.0e7,
        }
    }
}

/// Builds the probe described by `params`. Its spectrum vanishes outside the pupil.
pub fn make_zone_plate_probe(params: &ZonePlateParams) -> Result<ComplexField<f64>> {
    let n = params.side;
    if n < 8 {
        return Err(PtychoError::Parameter(format!(
            "probe side must be at least 8, got {n}"
        )));
    }
    if !(params.pupil_radius > 0.0) || !(params.flux > 0.0) {
        return Err(PtychoError::Parameter(
            "pupil radius and flux must be positive".into(),
        ));
    }
    let freq = |i: usize| -> f64 {
        if i <= n / 2 {
            i as f64
        } else {
            i as f64 - n as f64
        }
    };
    let r2 = params.pupil_radius * params.pupil_radius;
    let mut pupil = Grid::from_fn(n, n, |r, c| {
        let k2 = freq(r).powi(2) + freq(c).powi(2);
        let zone = (params.zones as f64 * k2 / r2).floor() as usize;
        if k2 > r2 || zone % 2 == 1 {
            return Complex::new(0.0, 0.0);
        }
        // The (-1)^(r+c) factor centres the beam in the window.
        let sign = if (r + c) % 2 == 0 { 1.0 } else { -1.0 };
        Complex::from_polar(sign, params.defocus * k2)
    });
    Fft2::new(n, n).inverse(pupil.data_mut());
    let energy = pupil.norm_sqr();
    if !(energy > 0.0) {
        return Err(PtychoError::Parameter(
            "zone plate transmits no light".into(),
        ));
    }
    let s = (params.flux / energy).sqrt();
    Ok(pupil.map(|x| x * s))
}

/// Noiseless intensities `|F(w ∘ S_j u)|²`.
pub fn simulate_frames<R: Real>(
    probe: &ComplexField<R>,
    sample: &ComplexField<R>,
    geometry: &ScanGeometry,
) -> Result<FrameStack<R>> {
    intensity(&forward(probe, sample, geometry)?)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    /// Photons per unit intensity.
    pub scale: f64,
    pub seed: u64,
}

/// `-10 log10(‖noisy − clean‖² / ‖noisy‖²)` over all frames.
pub fn intensity_snr_db(noisy: &FrameStack<f64>, clean: &FrameStack<f64>) -> f64 {
    let (mut diff, mut norm) = (0.0, 0.0);
    for (a, b) in noisy.frames().iter().zip(clean.frames()) {
        for (x, y) in a.data().iter().zip(b.data()) {
            diff += (x - y).powi(2);
            norm += x * x;
        }
    }
    if diff == 0.0 {
        f64::INFINITY
    } else {
        -10.0 * (diff / norm).log10()
    }
}

/// Replaces each pixel by `Poisson(scale · f) / scale`; returns the noisy
/// frames and their intensity SNR in dB.
pub fn add_poisson_noise(
    frames: &FrameStack<f64>,
    spec: &NoiseSpec,
) -> Result<(FrameStack<f64>, f64)> {
    if !(spec.scale > 0.0 && spec.scale.is_finite()) {
        return Err(PtychoError::Parameter(format!(
            "noise scale must be positive, got {}",
            spec.scale
        )));
    }
    let peak = frames
        .frames()
        .iter()
        .map(|f| f.max_value())
        .fold(0.0, f64::max)
        * spec.scale;
    if peak > MAX_EXPECTED_COUNT {
        return Err(PtychoError::CountOverflow(peak));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let noisy = frames
        .frames()
        .iter()
        .map(|f| {
            f.map(|&x| {
                let lambda = x * spec.scale;
                if lambda > 0.0 {
                    let p = Poisson::new(lambda).expect("positive finite rate");
                    p.sample(&mut rng) / spec.scale
                } else {
                    0.0
                }
            })
        })
        .collect();
    let noisy = FrameStack::new(noisy)?;
    let snr = intensity_snr_db(&noisy, frames);
    Ok((noisy, snr))
}

/// Scale whose Poisson noise (drawn with `seed`) gives `target_db` intensity
/// SNR, found by bisection on `log(scale)`.
pub fn calibrate_noise_scale(frames: &FrameStack<f64>, target_db: f64, seed: u64) -> Result<f64> {
    if !target_db.is_finite() {
        return Err(PtychoError::Parameter("target SNR must be finite".into()));
    }
    let (mut s1, mut s2) = (0.0, 0.0);
    for f in frames.frames() {
        for x in f.data() {
            s1 += x;
            s2 += x * x;
        }
    }
    if !(s1 > 0.0) {
        return Err(PtychoError::UndefinedMetric(
            "frames carry no intensity".into(),
        ));
    }
    // Expected SNR is about 10 log10(scale · Σf² / Σf).
    let guess = 10f64.powf(target_db / 10.0) * s1 / s2;
    let snr_at = |log_s: f64| -> Result<f64> {
        let spec = NoiseSpec {
            scale: log_s.exp(),
            seed,
        };
        Ok(add_poisson_noise(frames, &spec)?.1)
    };
    let (mut lo, mut hi) = (guess.ln() - 5.0, guess.ln() + 5.0);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        let snr = snr_at(mid)?;
        if (snr - target_db).abs() < 1e-3 {
            return Ok(mid.exp());
        }
        if snr < target_db {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok((0.5 * (lo + hi)).exp())
}

/// Recipe for a synthetic noiseless dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub size: usize,
    pub step: usize,
    pub probe: ZonePlateParams,
    /// Smallest sample magnitude.
    pub floor: f64,
    /// Side of the procedural images, bilinearly resampled to `size` when set.
    pub base_size: Option<usize>,
    pub seed: u64,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            size: 256,
            step: 8,
            probe: ZonePlateParams::default(),
            floor: 0.2,
            base_size: None,
            seed: 1,
        }
    }
}

impl ExperimentSpec {
    /// 512² sample upsampled from the 256² images, scanned with step 16.
    pub fn large() -> Self {
        Self {
            size: 512,
            step: 16,
            probe: ZonePlateParams {
                flux: 1.3e8,
                ..ZonePlateParams::default()
            },
            base_size: Some(256),
            ..Self::default()
        }
    }

    pub fn build(&self) -> Result<Experiment> {
        let geometry = ScanGeometry::raster((self.size, self.size), self.probe.side, self.step)?;
        if !(0.0..=1.0).contains(&self.floor) {
            return Err(PtychoError::Parameter(format!(
                "floor must lie in [0, 1], got {}",
                self.floor
            )));
        }
        let base = self.base_size.unwrap_or(self.size);
        let mut mag = procedural_image(base, base, Pattern::Magnitude, self.seed);
        let mut phase = procedural_image(base, base, Pattern::Phase, self.seed);
        if base != self.size {
            mag = resample_bilinear(&mag, self.size, self.size)?;
            phase = resample_bilinear(&phase, self.size, self.size)?;
        }
        let mag = mag.map(|m| (self.floor + (1.0 - self.floor) * m).clamp(0.0, 1.0));
        let phase = phase.map(|p| (std::f64::consts::PI * p).clamp(0.0, std::f64::consts::PI));
        let mut sample = make_sample(&mag, &phase)?;
        enforce_vacuum(&mut sample, &geometry.field_of_view());
        let probe = make_zone_plate_probe(&self.probe)?;
        let frames = simulate_frames(&probe, &sample, &geometry)?;
        Ok(Experiment {
            geometry,
            sample,
            probe,
            frames,
        })
    }
}

/// A synthetic dataset together with its ground truth.
#[derive(Clone, Debug)]
pub struct Experiment {
    pub geometry: ScanGeometry,
    pub sample: ComplexField<f64>,
    pub probe: ComplexField<f64>,
    pub frames: FrameStack<f64>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fft::fft2_normalized;

    #[test]
    fn sample_examples() {
        let ones = make_sample(&Grid::filled(3, 3, 1.0), &Grid::filled(3, 3, 0.0)).unwrap();
        assert!(ones.data().iter().all(|x| *x == Complex::new(1.0, 0.0)));
        let s = make_sample(
            &Grid::filled(1, 1, 0.5),
            &Grid::filled(1, 1, std::f64::consts::FRAC_PI_2),
        )
        .unwrap();
        assert!((s.get(0, 0) - Complex::new(0.0, 0.5)).norm() < 1e-15);
        assert!(make_sample(&Grid::filled(1, 1, 1.5), &Grid::filled(1, 1, 0.0)).is_err());
        assert!(make_sample(&Grid::filled(1, 1, 0.5), &Grid::filled(1, 1, 4.0)).is_err());
    }

    #[test]
    fn sample_round_trip() {
        let mag = procedural_image(16, 16, Pattern::Magnitude, 3);
        let phase = procedural_image(16, 16, Pattern::Phase, 3).map(|p| p * std::f64::consts::PI);
        let s = make_sample(&mag, &phase).unwrap();
        for k in 0..s.len() {
            let (m, p) = (mag.data()[k], phase.data()[k]);
            assert!((s.data()[k].norm() - m).abs() < 1e-12);
            if m > 1e-6 {
                let arg = s.data()[k].arg().rem_euclid(2.0 * std::f64::consts::PI);
                let d = (arg - p).abs();
                assert!(d < 1e-12 || (d - 2.0 * std::f64::consts::PI).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn vacuum_border() {
        let mut s = test_sample(8, 8, 0.2, 1).unwrap();
        enforce_vacuum(&mut s, &Region::window(2, 2, 4, 4));
        assert_eq!(*s.get(0, 0), Complex::new(1.0, 0.0));
        assert_eq!(*s.get(7, 3), Complex::new(1.0, 0.0));
    }

    #[test]
    fn procedural_images_are_deterministic_and_normalized() {
        let a = procedural_image(32, 24, Pattern::Phase, 7);
        assert_eq!(a, procedural_image(32, 24, Pattern::Phase, 7));
        assert_ne!(a, procedural_image(32, 24, Pattern::Phase, 8));
        assert_ne!(a, procedural_image(32, 24, Pattern::Magnitude, 7));
        assert_eq!(a.min_value(), 0.0);
        assert_eq!(a.max_value(), 1.0);
    }

    #[test]
    fn probe_flux_and_spectrum() {
        let params = ZonePlateParams::default();
        let w = make_zone_plate_probe(&params).unwrap();
        assert!((w.norm_sqr() - params.flux).abs() < 1e-10 * params.flux);
        let spec = fft2_normalized(&w);
        let mut outside = 0.0;
        for r in 0..64 {
            for c in 0..64 {
                let kr = r.min(64 - r) as f64;
                let kc = c.min(64 - c) as f64;
                if kr * kr + kc * kc > params.pupil_radius * params.pupil_radius {
                    outside += spec.get(r, c).norm_sqr();
                }
            }
        }
        assert!(outside <= 0.01 * spec.norm_sqr());
    }

    #[test]
    fn probe_is_centred() {
        let w = make_zone_plate_probe(&ZonePlateParams::default()).unwrap();
        let a = w.abs();
        let peak = a.max_value();
        let centre = (28..36)
            .flat_map(|r| (28..36).map(move |c| (r, c)))
            .map(|(r, c)| *a.get(r, c))
            .fold(0.0, f64::max);
        assert_eq!(centre, peak);
        let corner = (0..4)
            .flat_map(|r| (0..4).map(move |c| (r, c)))
            .map(|(r, c)| *a.get(r, c))
            .sum::<f64>()
            / 16.0;
        assert!(corner < 0.05 * peak);
        assert!(make_zone_plate_probe(&ZonePlateParams {
            side: 4,
            ..Default::default()
        })
        .is_err());
    }

    #[test]
    fn simulated_frames_conserve_energy_and_ignore_global_phase() {
        let g = ScanGeometry::raster((32, 32), 16, 4).unwrap();
        let w = make_zone_plate_probe(&ZonePlateParams {
            side: 16,
            pupil_radius: 5.0,
            ..Default::default()
        })
        .unwrap();
        let u = test_sample(32, 32, 0.2, 2).unwrap();
        let f = simulate_frames(&w, &u, &g).unwrap();
        let mut expect = 0.0;
        for j in 0..g.len() {
            let patch = crate::grid::extract(&u, &g.window(j)).unwrap();
            for (p, q) in patch.data().iter().zip(w.data()) {
                expect += (p * q).norm_sqr();
            }
        }
        assert!((f.total() - expect).abs() < 1e-10 * expect);
        let rotated = u.map(|x| x * Complex::from_polar(1.0, 0.7));
        let f2 = simulate_frames(&w, &rotated, &g).unwrap();
        for (a, b) in f.frames().iter().zip(f2.frames()) {
            for (x, y) in a.data().iter().zip(b.data()) {
                assert!((x - y).abs() <= 1e-9 * (1.0 + x.abs()));
            }
        }
    }

    #[test]
    fn noise_limits_and_determinism() {
        let frames =
            FrameStack::new(vec![Grid::from_fn(8, 8, |r, c| 1.0 + (r * 8 + c) as f64)]).unwrap();
        let spec = NoiseSpec {
            scale: 1e9,
            seed: 4,
        };
        let (noisy, snr) = add_poisson_noise(&frames, &spec).unwrap();
        assert!(snr >= 80.0);
        assert_eq!(noisy, add_poisson_noise(&frames, &spec).unwrap().0);
        assert!(add_poisson_noise(
            &frames,
            &NoiseSpec {
                scale: 0.0,
                seed: 1
            }
        )
        .is_err());
        assert!(matches!(
            add_poisson_noise(
                &frames,
                &NoiseSpec {
                    scale: 1e20,
                    seed: 1
                }
            ),
            Err(PtychoError::CountOverflow(_))
        ));
    }

    #[test]
    fn poisson_mean_within_three_sigma() {
        let f = 2.5;
        let scale = 4.0;
        let frames = FrameStack::new(vec![Grid::filled(100, 100, f)]).unwrap();
        let (noisy, _) = add_poisson_noise(&frames, &NoiseSpec { scale, seed: 11 }).unwrap();
        let counts: Vec<f64> = noisy.frames()[0].data().iter().map(|x| x * scale).collect();
        assert!(counts.iter().all(|x| *x >= 0.0 && x.fract() == 0.0));
        let mean = counts.iter().sum::<f64>() / counts.len() as f64;
        let sigma = (scale * f / counts.len() as f64).sqrt();
        assert!((mean - scale * f).abs() < 3.0 * sigma);
    }

    #[test]
    fn calibration_hits_targets() {
        let g = ScanGeometry::raster((32, 32), 16, 4).unwrap();
        let w = make_zone_plate_probe(&ZonePlateParams {
            side: 16,
            pupil_radius: 5.0,
            ..Default::default()
        })
        .unwrap();
        let f = simulate_frames(&w, &test_sample(32, 32, 0.2, 2).unwrap(), &g).unwrap();
        for target in [39.8, 29.9] {
            let scale = calibrate_noise_scale(&f, target, 5).unwrap();
            let (_, snr) = add_poisson_noise(&f, &NoiseSpec { scale, seed: 5 }).unwrap();
            assert!((snr - target).abs() < 0.5, "{snr} vs {target}");
        }
    }

    #[test]
    fn bilinear_resample() {
        let f = Grid::from_fn(3, 3, |r, c| (r * 3 + c) as f64);
        let up = resample_bilinear(&f, 5, 5).unwrap();
        assert_eq!(*up.get(0, 0), 0.0);
        assert_eq!(*up.get(4, 4), 8.0);
        assert_eq!(*up.get(2, 2), 4.0);
        assert!((up.get(0, 1) - 0.5).abs() < 1e-15);
        assert_eq!(resample_bilinear(&f, 3, 3).unwrap(), f);
    }
}
