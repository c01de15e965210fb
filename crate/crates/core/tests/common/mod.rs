//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use num_complex::Complex;

use ptycho_dd::fft::{fft2_normalized, ifft2_normalized};
use ptycho_dd::sim::{make_zone_plate_probe, simulate_frames, test_sample, ZonePlateParams};
use ptycho_dd::stagm::{prox_amplitude, value_amplitude};
use ptycho_dd::{ComplexField, DecompositionPlan, FrameStack, Grid, ScanGeometry};

pub struct Problem {
    pub geometry: ScanGeometry,
    pub probe: ComplexField<f64>,
    pub frames: FrameStack<f64>,
}

pub fn problem(size: usize, side: usize, step: usize) -> Problem {
    let geometry = ScanGeometry::raster((size, size), side, step).unwrap();
    let probe = make_zone_plate_probe(&ZonePlateParams {
        side,
        pupil_radius: side as f64 / 4.0,
        zones: 2,
        defocus: 0.02,
        flux: (side * side) as f64,
    })
    .unwrap();
    let sample = test_sample(size, size, 0.3, 5).unwrap();
    let frames = simulate_frames(&probe, &sample, &geometry).unwrap();
    Problem {
        geometry,
        probe,
        frames,
    }
}

/// Straightforward two-subdomain ADMM written against global coordinates.
pub struct Reference {
    pub plan: DecompositionPlan,
    pub probe: ComplexField<f64>,
    pub amp: Vec<Vec<ComplexField<f64>>>,
    pub eta: f64,
    pub r: f64,
    pub eps: f64,
    pub u: Vec<ComplexField<f64>>,
    pub z: Vec<Vec<ComplexField<f64>>>,
    pub gamma: Vec<Vec<ComplexField<f64>>>,
    pub v: ComplexField<f64>,
    pub lambda: [ComplexField<f64>; 2],
}

impl Reference {
    pub fn new(p: &Problem, plan: &DecompositionPlan, eta: f64, r: f64, eps: f64) -> Self {
        assert_eq!(plan.len(), 2);
        let u: Vec<_> = plan
            .subdomains()
            .iter()
            .map(|s| ComplexField::ones(s.region.height(), s.region.width()))
            .collect();
        let amp = plan
            .subdomains()
            .iter()
            .map(|s| {
                s.frames
                    .iter()
                    .map(|&j| p.frames.frames()[j].map(|b| Complex::new(b.sqrt(), 0.0)))
                    .collect()
            })
            .collect();
        let ov = plan.overlaps()[0].region;
        let mut me = Self {
            plan: plan.clone(),
            probe: p.probe.clone(),
            amp,
            eta,
            r,
            eps,
            z: vec![],
            gamma: vec![],
            v: ComplexField::ones(ov.height(), ov.width()),
            lambda: [
                ComplexField::zeros(ov.height(), ov.width()),
                ComplexField::zeros(ov.height(), ov.width()),
            ],
            u,
        };
        me.z = (0..2).map(|d| me.apply(d)).collect();
        me.gamma =
            me.z.iter()
                .map(|zd| {
                    zd.iter()
                        .map(|f| ComplexField::zeros(f.height(), f.width()))
                        .collect()
                })
                .collect();
        me
    }

    fn at(&self, d: usize, gr: usize, gc: usize) -> Complex<f64> {
        let reg = self.plan.subdomain(d).region;
        *self.u[d].get(gr - reg.row_start, gc - reg.col_start)
    }

    /// `A_d u_d` frame by frame.
    fn apply(&self, d: usize) -> Vec<ComplexField<f64>> {
        let sub = self.plan.subdomain(d);
        let n = self.probe.height();
        sub.frames
            .iter()
            .map(|&j| {
                let (r0, c0) = global_position(&self.plan, d, j);
                let patch = Grid::from_fn(n, n, |r, c| {
                    *self.probe.get(r, c) * self.at(d, r0 + r, c0 + c)
                });
                fft2_normalized(&patch)
            })
            .collect()
    }

    pub fn step(&mut self) {
        for d in 0..2 {
            let au = self.apply(d);
            for (k, y) in au.iter().enumerate() {
                let a = &self.amp[d][k];
                let t = Grid::from_fn(y.height(), y.width(), |r, c| {
                    *self.gamma[d][k].get(r, c) + *y.get(r, c)
                });
                let zn = Grid::from_fn(y.height(), y.width(), |r, c| {
                    prox_amplitude(*t.get(r, c), a.get(r, c).re, self.eta, self.eps)
                });
                self.gamma[d][k] =
                    Grid::from_fn(y.height(), y.width(), |r, c| *t.get(r, c) - *zn.get(r, c));
                self.z[d][k] = zn;
            }
        }
        let o = self.plan.overlaps()[0];
        let ov = o.region;
        self.v = Grid::from_fn(ov.height(), ov.width(), |i, k| {
            let (gr, gc) = (ov.row_start + i, ov.col_start + k);
            (self.at(o.first, gr, gc)
                + self.at(o.second, gr, gc)
                + *self.lambda[0].get(i, k)
                + *self.lambda[1].get(i, k))
                * 0.5
        });
        let n = self.probe.height();
        let mut new_u = Vec::new();
        for d in 0..2 {
            let reg = self.plan.subdomain(d).region;
            let mut numer = ComplexField::zeros(reg.height(), reg.width());
            let mut denom = Grid::filled(reg.height(), reg.width(), 0.0);
            for (k, &j) in self.plan.subdomain(d).frames.iter().enumerate() {
                let diff = Grid::from_fn(n, n, |r, c| {
                    *self.z[d][k].get(r, c) - *self.gamma[d][k].get(r, c)
                });
                let back = ifft2_normalized(&diff);
                let (r0, c0) = global_position(&self.plan, d, j);
                for r in 0..n {
                    for c in 0..n {
                        let (lr, lc) = (r0 + r - reg.row_start, c0 + c - reg.col_start);
                        let w = *self.probe.get(r, c);
                        *numer.get_mut(lr, lc) += w.conj() * *back.get(r, c) * self.eta;
                        *denom.get_mut(lr, lc) += w.norm_sqr() * self.eta;
                    }
                }
            }
            let side = if d == o.first { 0 } else { 1 };
            for i in 0..ov.height() {
                for k in 0..ov.width() {
                    let (lr, lc) = (
                        ov.row_start + i - reg.row_start,
                        ov.col_start + k - reg.col_start,
                    );
                    *numer.get_mut(lr, lc) +=
                        (*self.v.get(i, k) - *self.lambda[side].get(i, k)) * self.r;
                    *denom.get_mut(lr, lc) += self.r;
                }
            }
            new_u.push(Grid::from_fn(reg.height(), reg.width(), |r, c| {
                *numer.get(r, c) / *denom.get(r, c)
            }));
        }
        self.u = new_u;
        for (side, d) in [o.first, o.second].into_iter().enumerate() {
            self.lambda[side] = Grid::from_fn(ov.height(), ov.width(), |i, k| {
                *self.lambda[side].get(i, k) + self.at(d, ov.row_start + i, ov.col_start + k)
                    - *self.v.get(i, k)
            });
        }
    }
}

pub fn global_position(plan: &DecompositionPlan, d: usize, j: usize) -> (usize, usize) {
    let sub = plan.subdomain(d);
    let k = sub.frames.iter().position(|&f| f == j).unwrap();
    let (r, c) = sub.geometry.position(k);
    (r + sub.region.row_start, c + sub.region.col_start)
}

pub fn max_diff(a: &[ComplexField<f64>], b: &[ComplexField<f64>]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.max_abs_diff(y))
        .fold(0.0, f64::max)
}

/// Objective of the pixel prox: `g(x; a²) + (λ/2)|x − y|²`.
pub fn prox_objective(x: Complex<f64>, y: Complex<f64>, a: f64, lambda: f64, eps: f64) -> f64 {
    value_amplitude(x, a, eps) + 0.5 * lambda * (x - y).norm_sqr()
}

/// Minimum of the prox objective along the ray through `y`, found by a magnitude grid
/// on `[0, |y| + a + 1]` followed by golden-section refinement around the best node.
pub fn ray_grid_minimum(y: Complex<f64>, a: f64, lambda: f64, eps: f64, step: f64) -> f64 {
    let dir = if y.norm() > 0.0 {
        y / y.norm()
    } else {
        Complex::new(1.0, 0.0)
    };
    let f = |t: f64| prox_objective(dir * t, y, a, lambda, eps);
    let top = y.norm() + a + 1.0;
    let n = (top / step).ceil() as usize;
    let (mut best_t, mut best) = (0.0, f(0.0));
    for i in 1..=n {
        let t = (i as f64 * step).min(top);
        let v = f(t);
        if v < best {
            best = v;
            best_t = t;
        }
    }
    let (mut lo, mut hi) = ((best_t - step).max(0.0), (best_t + step).min(top));
    let g = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..80 {
        let m1 = hi - g * (hi - lo);
        let m2 = lo + g * (hi - lo);
        if f(m1) < f(m2) {
            hi = m2;
        } else {
            lo = m1;
        }
    }
    best.min(f(0.5 * (lo + hi)))
}

/// Naive unitary DFT.
pub fn dft2(x: &ComplexField<f64>) -> ComplexField<f64> {
    let (h, w) = x.shape();
    let scale = 1.0 / ((h * w) as f64).sqrt();
    ComplexField::from_fn(h, w, |kr, kc| {
        let mut acc = Complex::default();
        for r in 0..h {
            for c in 0..w {
                let th = -std::f64::consts::TAU
                    * ((kr * r) as f64 / h as f64 + (kc * c) as f64 / w as f64);
                acc += *x.get(r, c) * Complex::from_polar(1.0, th);
            }
        }
        acc * scale
    })
}
