//! Blind reconstruction: joint recovery of probe and image.
//!
//! Each subdomain holds its own probe copy `W_d`, tied to a shared probe `w`
//! by multipliers `Δ_d`. The shared probe is confined to a Fourier support:
//!
//! ```text
//! w    ← F* M F (1/D) Σ_d (Δ_d + W_d)
//! v_p  ← ½(π u_a + π u_b + Λ_ab + Λ_ba)
//! z_d  ← prox(Γ_d + B(W_d, u_d)),   Γ_d ← Γ_d + B(W_d, u_d) − z_d
//! W_d  ← [η D_u*(z_d − Γ_d) + μ(w − Δ_d)] / [η Σ_j |S_j u_d|² + μ]
//! u_d  ← [η A_W*(z_d − Γ_d) + r Σ_p πᵀ(v_p − Λ_dp) + γ u_d] / [η diag(A_W*A_W) + r Σ_p πᵀπ + γ]
//! Δ_d  ← Δ_d + W_d − w,             Λ_dp ← Λ_dp + π u_d − v_p
//! ```
//!
//! `M` passes the support and zeroes everything else, so `w` always lies in
//! the set of probes whose spectrum vanishes off the support.

use num_complex::Complex;
use rayon::prelude::*;
use rayon::ThreadPool;

use super::{
    add_overlap_pull, build_pool, change_norms, check_positive, check_tolerance, link_coverage,
    make_links, overlap_average, timed, update_multipliers, ConvergenceRecord, Link, PhaseClock,
    StopReason,
};
use crate::error::{PtychoError, Result};
use crate::fft::Fft2;
use crate::forward::{FrameStack, ScanOperator};
use crate::grid::{ComplexField, Grid, RealField};
use crate::plan::{merge, DecompositionPlan};
use crate::scalar::Real;
use crate::stagm::{check_epsilon, prox_amplitude};

/// How the Fourier support of the probe is chosen.
#[derive(Clone, Debug, PartialEq)]
pub enum Support<R> {
    /// Disk holding the given fraction of the initial probe's spectral energy.
    EnergyFraction(f64),
    /// Disk of the given radius in frequency pixels.
    Radius(f64),
    /// Explicit 0/1 mask in unshifted Fourier coordinates.
    Mask(RealField<R>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct BlindConfig<R> {
    pub epsilon: R,
    pub eta: R,
    pub r: R,
    /// Penalty tying the probe copies to the shared probe.
    pub mu: R,
    /// Proximal weight on the image update; `None` means `1e-3 · η`.
    pub gamma: Option<R>,
    pub support: Support<R>,
    /// Starting probe; `None` averages the back-propagated amplitudes.
    pub initial_probe: Option<ComplexField<R>>,
    pub max_iters: usize,
    pub tol_rf: Option<R>,
    pub tol_re: Option<R>,
    pub threads: Option<usize>,
}

impl<R: Real> Default for BlindConfig<R> {
    /// `ε = 0.5, η = 0.1, r = 5000, μ = 200`, R-factor tolerance `1e-5`.
    fn default() -> Self {
        Self {
            epsilon: R::lit(0.5),
            eta: R::lit(0.1),
            r: R::lit(5000.0),
            mu: R::lit(200.0),
            gamma: None,
            support: Support::EnergyFraction(0.99),
            initial_probe: None,
            max_iters: 1000,
            tol_rf: Some(R::lit(1e-5)),
            tol_re: None,
            threads: None,
        }
    }
}

impl<R: Real> BlindConfig<R> {
    pub fn gamma_value(&self) -> R {
        self.gamma.unwrap_or(R::lit(1e-3) * self.eta)
    }

    pub fn validate(&self) -> Result<()> {
        check_epsilon(self.epsilon)?;
        check_positive("eta", self.eta)?;
        check_positive("r", self.r)?;
        check_positive("mu", self.mu)?;
        check_positive("gamma", self.gamma_value())?;
        check_tolerance("tol_rf", self.tol_rf)?;
        check_tolerance("tol_re", self.tol_re)?;
        if self.max_iters == 0 {
            return Err(PtychoError::Parameter(
                "max_iters must be at least 1".into(),
            ));
        }
        match &self.support {
            Support::EnergyFraction(f) if !(*f > 0.0 && *f <= 1.0) => Err(PtychoError::Parameter(
                format!("support energy fraction must lie in (0, 1], got {f}"),
            )),
            Support::Radius(r) if !(*r >= 0.0) => Err(PtychoError::Parameter(format!(
                "support radius must be nonnegative, got {r}"
            ))),
            Support::Mask(m) if m.data().iter().any(|x| *x != R::zero() && *x != R::one()) => {
                Err(PtychoError::Parameter("support mask must be 0/1".into()))
            }
            _ => Ok(()),
        }
    }
}

/// Signed frequency index of bin `i` out of `n` (DC at 0, wrapping).
fn signed_frequency(i: usize, n: usize) -> f64 {
    i.min(n - i) as f64
}

/// 0/1 disk of `radius` around DC in unshifted `side x side` Fourier coordinates.
pub fn support_disk<R: Real>(side: usize, radius: f64) -> RealField<R> {
    let r2 = radius * radius;
    Grid::from_fn(side, side, |r, c| {
        let (kr, kc) = (signed_frequency(r, side), signed_frequency(c, side));
        if kr * kr + kc * kc <= r2 {
            R::one()
        } else {
            R::zero()
        }
    })
}

/// Smallest radius whose DC-centred disk holds `fraction` of the spectral energy.
pub fn support_radius_for_energy<R: Real>(spectrum: &ComplexField<R>, fraction: f64) -> f64 {
    let (h, w) = spectrum.shape();
    let mut bins: Vec<(f64, f64)> = (0..h * w)
        .map(|k| {
            let (kr, kc) = (signed_frequency(k / w, h), signed_frequency(k % w, w));
            (
                (kr * kr + kc * kc).sqrt(),
                spectrum.data()[k].norm_sqr().as_f64(),
            )
        })
        .collect();
    bins.sort_by(|a, b| a.0.total_cmp(&b.0));
    let total: f64 = bins.iter().map(|b| b.1).sum();
    let mut acc = 0.0;
    for (radius, e) in &bins {
        acc += e;
        if acc >= fraction * total {
            return *radius;
        }
    }
    bins.last().map(|b| b.0).unwrap_or(0.0)
}

/// 0/1 mask of the spectral bins where `probe` carries energy above
/// `rel_threshold` times its peak magnitude.
pub fn support_from_probe<R: Real>(probe: &ComplexField<R>, rel_threshold: f64) -> RealField<R> {
    let spectrum = crate::fft::fft2_normalized(probe).abs();
    let cut = R::lit(rel_threshold) * spectrum.max_value();
    spectrum.map(|a| if *a > cut { R::one() } else { R::zero() })
}

/// Snapshot of the blind solver's variables.
#[derive(Clone, Debug, PartialEq)]
pub struct BlindState<R: Real> {
    /// Shared probe.
    pub w: ComplexField<R>,
    /// Spectrum of the shared probe after the support projection.
    pub w_spectrum: ComplexField<R>,
    pub w_copies: Vec<ComplexField<R>>,
    pub delta: Vec<ComplexField<R>>,
    pub u: Vec<ComplexField<R>>,
    pub z: Vec<Vec<ComplexField<R>>>,
    pub gamma: Vec<Vec<ComplexField<R>>>,
    pub v: Vec<ComplexField<R>>,
    pub lambda: Vec<[ComplexField<R>; 2]>,
    pub iteration: usize,
}

pub struct BlindResult<R: Real> {
    /// Recovered shared probe.
    pub probe: ComplexField<R>,
    /// Its spectrum, exactly zero off the support.
    pub probe_spectrum: ComplexField<R>,
    pub support_mask: RealField<R>,
    pub subs: Vec<ComplexField<R>>,
    pub merged: ComplexField<R>,
    pub records: Vec<ConvergenceRecord>,
    pub iterations: usize,
    pub stop: StopReason,
    pub final_rf: f64,
    pub gamma: f64,
}

struct Worker<R: Real> {
    op: ScanOperator<R>,
    amp: Vec<R>,
    z: Vec<Complex<R>>,
    gamma: Vec<Complex<R>>,
    back: Vec<Complex<R>>,
    u: ComplexField<R>,
    numer: ComplexField<R>,
    probe: ComplexField<R>,
    delta: ComplexField<R>,
    probe_numer: ComplexField<R>,
    image_density: RealField<R>,
    cov: Vec<R>,
    links: Vec<Link<R>>,
}

impl<R: Real> Worker<R> {
    fn side(&self) -> usize {
        self.op.geometry().frame_side()
    }

    /// Residual of the local copy, then the z- and Γ-steps, the
    /// back-transformed frames and the probe-side adjoint.
    fn phase_a(&mut self, cfg: &BlindConfig<R>) -> (R, f64) {
        timed(|| {
            let n = self.side();
            let nn = n * n;
            let (eps, eta) = (cfg.epsilon, cfg.eta);
            let mut rf = R::zero();
            let Worker {
                op,
                amp,
                z,
                gamma,
                back,
                u,
                probe,
                probe_numer,
                image_density,
                ..
            } = self;
            op.forward_with(probe, u, |j, bu| {
                let base = j * nn;
                for k in 0..nn {
                    rf = rf + (bu[k].norm() - amp[base + k]).abs();
                    let t = gamma[base + k] + bu[k];
                    let zn = prox_amplitude(t, amp[base + k], eta, eps);
                    z[base + k] = zn;
                    gamma[base + k] = t - zn;
                }
            });
            let geometry = op.geometry().clone();
            probe_numer.data_mut().fill(Complex::default());
            image_density.data_mut().fill(R::zero());
            op.inverse_with(
                |j, buf| {
                    let base = j * nn;
                    for (k, b) in buf.iter_mut().enumerate() {
                        *b = z[base + k] - gamma[base + k];
                    }
                },
                |j, y| {
                    back[j * nn..(j + 1) * nn].copy_from_slice(y);
                    let (r0, c0) = geometry.position(j);
                    for r in 0..n {
                        let patch = &u.row(r0 + r)[c0..c0 + n];
                        let pn = &mut probe_numer.data_mut()[r * n..(r + 1) * n];
                        let pd = &mut image_density.data_mut()[r * n..(r + 1) * n];
                        for c in 0..n {
                            pn[c] = pn[c] + patch[c].conj() * y[r * n + c];
                            pd[c] = pd[c] + patch[c].norm_sqr();
                        }
                    }
                },
            );
            rf
        })
    }

    /// Probe-copy and image updates, then both multiplier updates.
    fn phase_b(
        &mut self,
        cfg: &BlindConfig<R>,
        shared: &ComplexField<R>,
        v: &[ComplexField<R>],
    ) -> ((R, R), f64) {
        timed(|| {
            let n = self.side();
            let nn = n * n;
            let (eta, mu, gam) = (cfg.eta, cfg.mu, cfg.gamma_value());
            for k in 0..nn {
                let num = self.probe_numer.data()[k] * eta
                    + (shared.data()[k] - self.delta.data()[k]) * mu;
                self.probe.data_mut()[k] = num / (eta * self.image_density.data()[k] + mu);
            }

            let geometry = self.op.geometry().clone();
            let mut density = RealField::zeros_real(self.u.height(), self.u.width());
            self.numer.data_mut().fill(Complex::default());
            for j in 0..geometry.len() {
                let (r0, c0) = geometry.position(j);
                let y = &self.back[j * nn..(j + 1) * nn];
                for r in 0..n {
                    let w = &self.probe.data()[r * n..(r + 1) * n];
                    let dst = &mut self.numer.row_mut(r0 + r)[c0..c0 + n];
                    let rho = &mut density.row_mut(r0 + r)[c0..c0 + n];
                    for c in 0..n {
                        dst[c] = dst[c] + w[c].conj() * y[r * n + c];
                        rho[c] = rho[c] + w[c].norm_sqr();
                    }
                }
            }
            for x in self.numer.data_mut() {
                *x = *x * eta;
            }
            add_overlap_pull(&mut self.numer, &self.links, v, cfg.r);
            for (((x, old), rho), c) in self
                .numer
                .data_mut()
                .iter_mut()
                .zip(self.u.data())
                .zip(density.data())
                .zip(&self.cov)
            {
                *x = (*x + *old * gam) / (eta * *rho + cfg.r * *c + gam);
            }
            let norms = change_norms(self.numer.data(), self.u.data());
            std::mem::swap(&mut self.u, &mut self.numer);

            for ((d, w), s) in self
                .delta
                .data_mut()
                .iter_mut()
                .zip(self.probe.data())
                .zip(shared.data())
            {
                *d = *d + *w - *s;
            }
            update_multipliers(&self.u, &mut self.links, v);
            norms
        })
    }
}

/// Stateful blind solver.
pub struct BlindSolver<R: Real> {
    plan: DecompositionPlan,
    config: BlindConfig<R>,
    workers: Vec<Worker<R>>,
    v: Vec<ComplexField<R>>,
    w: ComplexField<R>,
    w_spectrum: ComplexField<R>,
    mask: RealField<R>,
    fft: Fft2<R>,
    pool: ThreadPool,
    iteration: usize,
    rf_den: R,
}

impl<R: Real> BlindSolver<R> {
    pub fn new(
        plan: &DecompositionPlan,
        frames: &FrameStack<R>,
        config: BlindConfig<R>,
    ) -> Result<Self> {
        config.validate()?;
        let side = frames.frame_side();
        let mut fft = Fft2::new(side, side);

        let mut mean_amp = ComplexField::zeros(side, side);
        for f in frames.frames() {
            for (m, x) in mean_amp.data_mut().iter_mut().zip(f.data()) {
                m.re = m.re + x.sqrt();
            }
        }
        let inv_j = R::one() / R::from_count(frames.len());
        for m in mean_amp.data_mut() {
            *m = *m * inv_j;
        }
        let w0 = match &config.initial_probe {
            Some(p) => {
                p.ensure_shape((side, side), "initial probe")?;
                p.clone()
            }
            None => {
                let mut w0 = mean_amp.clone();
                fft.inverse(w0.data_mut());
                // Move the beam from the window corner to its centre.
                let h = side / 2;
                Grid::from_fn(side, side, |r, c| {
                    *w0.get((r + side - h) % side, (c + side - h) % side)
                })
            }
        };
        let mut w0_spectrum = w0.clone();
        fft.forward(w0_spectrum.data_mut());

        let mask = match &config.support {
            Support::Mask(m) => {
                m.ensure_shape((side, side), "support mask")?;
                m.clone()
            }
            Support::Radius(r) => support_disk(side, *r),
            Support::EnergyFraction(f) => {
                support_disk(side, support_radius_for_energy(&w0_spectrum, *f))
            }
        };

        let parts = plan.partition_frames(frames)?;
        let mut workers = Vec::with_capacity(plan.len());
        let mut rf_den = R::zero();
        for (d, (sub, part)) in plan.subdomains().iter().zip(parts).enumerate() {
            part.check_against(&sub.geometry)?;
            let mut op = ScanOperator::new(sub.geometry.clone());
            let amp: Vec<R> = part
                .frames()
                .iter()
                .flat_map(|f| f.data().iter().map(|x| x.sqrt()))
                .collect();
            rf_den = rf_den + amp.iter().copied().sum();
            let (h, w) = sub.region.shape();
            let u = ComplexField::ones(h, w);
            let mut z = Vec::with_capacity(amp.len());
            op.forward_with(&w0, &u, |_, f| z.extend_from_slice(f));
            let links = make_links(plan, d);
            workers.push(Worker {
                cov: link_coverage((h, w), &links),
                gamma: vec![Complex::default(); z.len()],
                back: vec![Complex::default(); z.len()],
                op,
                amp,
                z,
                u,
                numer: ComplexField::zeros(h, w),
                probe: w0.clone(),
                delta: ComplexField::zeros(side, side),
                probe_numer: ComplexField::zeros(side, side),
                image_density: RealField::zeros_real(side, side),
                links,
            });
        }
        if !(rf_den > R::zero()) {
            return Err(PtychoError::UndefinedMetric(
                "R-factor is undefined for all-zero measurements".into(),
            ));
        }
        let v = plan
            .overlaps()
            .iter()
            .map(|o| ComplexField::ones(o.region.height(), o.region.width()))
            .collect();
        Ok(Self {
            pool: build_pool(config.threads)?,
            plan: plan.clone(),
            config,
            workers,
            v,
            w: w0,
            w_spectrum: w0_spectrum,
            mask,
            fft,
            iteration: 0,
            rf_den,
        })
    }

    pub fn support_mask(&self) -> &RealField<R> {
        &self.mask
    }

    pub fn probe(&self) -> &ComplexField<R> {
        &self.w
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn state(&self) -> BlindState<R> {
        let side = self.w.height();
        let split = |data: &[Complex<R>]| -> Vec<ComplexField<R>> {
            data.chunks(side * side)
                .map(|c| Grid::new(side, side, c.to_vec()).expect("frame shape"))
                .collect()
        };
        let link = |d: usize, p: usize| -> ComplexField<R> {
            self.workers[d]
                .links
                .iter()
                .find(|l| l.pair == p)
                .expect("link")
                .lambda
                .clone()
        };
        BlindState {
            w: self.w.clone(),
            w_spectrum: self.w_spectrum.clone(),
            w_copies: self.workers.iter().map(|w| w.probe.clone()).collect(),
            delta: self.workers.iter().map(|w| w.delta.clone()).collect(),
            u: self.workers.iter().map(|w| w.u.clone()).collect(),
            z: self.workers.iter().map(|w| split(&w.z)).collect(),
            gamma: self.workers.iter().map(|w| split(&w.gamma)).collect(),
            v: self.v.clone(),
            lambda: self
                .plan
                .overlaps()
                .iter()
                .enumerate()
                .map(|(p, o)| [link(o.first, p), link(o.second, p)])
                .collect(),
            iteration: self.iteration,
        }
    }

    fn run_phase_a(&mut self) -> (R, Vec<f64>) {
        let cfg = &self.config;
        let out: Vec<(R, f64)> = self.pool.install(|| {
            self.workers
                .par_iter_mut()
                .map(|wk| wk.phase_a(cfg))
                .collect()
        });
        let rf = out.iter().map(|o| o.0).sum::<R>() / self.rf_den;
        (rf, out.iter().map(|o| o.1).collect())
    }

    /// Shared probe and overlap variables; the all-gather between phases.
    fn run_shared(&mut self) {
        let inv_d = R::one() / R::from_count(self.workers.len());
        let spec = self.w_spectrum.data_mut();
        spec.fill(Complex::default());
        for wk in &self.workers {
            for ((s, p), d) in spec.iter_mut().zip(wk.probe.data()).zip(wk.delta.data()) {
                *s = *s + *p + *d;
            }
        }
        for s in spec.iter_mut() {
            *s = *s * inv_d;
        }
        self.fft.forward(spec);
        for (s, m) in spec.iter_mut().zip(self.mask.data()) {
            if *m == R::zero() {
                *s = Complex::default();
            }
        }
        self.w.data_mut().copy_from_slice(spec);
        self.fft.inverse(self.w.data_mut());
        for (p, o) in self.plan.overlaps().iter().enumerate() {
            let (a, b) = (&self.workers[o.first], &self.workers[o.second]);
            let la = a.links.iter().find(|l| l.pair == p).expect("link");
            let lb = b.links.iter().find(|l| l.pair == p).expect("link");
            overlap_average(&a.u, la, &b.u, lb, &mut self.v[p]);
        }
    }

    fn run_phase_b(&mut self) -> Result<(R, Vec<f64>)> {
        let cfg = &self.config;
        let (w, v) = (&self.w, &self.v);
        let out: Vec<((R, R), f64)> = self.pool.install(|| {
            self.workers
                .par_iter_mut()
                .map(|wk| wk.phase_b(cfg, w, v))
                .collect()
        });
        self.iteration += 1;
        let mut re = R::zero();
        for ((diff, norm), _) in &out {
            if !(diff.is_finite() && norm.is_finite()) || !self.w.is_finite() {
                return Err(PtychoError::Divergence {
                    iteration: self.iteration,
                });
            }
            if !(*norm > R::zero()) {
                return Err(PtychoError::UndefinedMetric(
                    "relative error is undefined for a zero iterate".into(),
                ));
            }
            re = re.max((*diff / *norm).sqrt());
        }
        Ok((re, out.iter().map(|o| o.1).collect()))
    }

    /// One full iteration; returns the R-factor it started from and the
    /// relative change it produced.
    pub fn step(&mut self) -> Result<(R, R)> {
        let (rf, _) = self.run_phase_a();
        self.run_shared();
        let (re, _) = self.run_phase_b()?;
        Ok((rf, re))
    }

    pub fn run(mut self, mut observer: impl FnMut(&ConvergenceRecord)) -> Result<BlindResult<R>> {
        let (tol_rf, tol_re) = (self.config.tol_rf, self.config.tol_re);
        let mut clock = PhaseClock::new(self.workers.len());
        let mut records = Vec::new();
        let mut re_prev: Option<R> = None;
        let stop = loop {
            let (rf, ta) = self.run_phase_a();
            clock.phase(&ta);
            let (sub_seconds, virtual_seconds, actual_seconds) = clock.finish();
            let record = ConvergenceRecord {
                iteration: self.iteration,
                rf: rf.as_f64(),
                re: re_prev.map(R::as_f64),
                lagrangian: None,
                sub_seconds,
                virtual_seconds,
                actual_seconds,
            };
            observer(&record);
            records.push(record);
            if !rf.is_finite() {
                return Err(PtychoError::Divergence {
                    iteration: self.iteration,
                });
            }
            if tol_rf.is_some_and(|t| rf <= t) {
                break StopReason::RFactor;
            }
            if let (Some(t), Some(re)) = (tol_re, re_prev) {
                if re <= t {
                    break StopReason::RelativeError;
                }
            }
            if self.iteration >= self.config.max_iters {
                break StopReason::MaxIterations;
            }
            self.run_shared();
            let (re, tb) = self.run_phase_b()?;
            clock.phase(&tb);
            re_prev = Some(re);
        };
        let subs: Vec<_> = self.workers.iter().map(|w| w.u.clone()).collect();
        Ok(BlindResult {
            merged: merge(&subs, &self.plan)?,
            subs,
            probe: self.w,
            probe_spectrum: self.w_spectrum,
            support_mask: self.mask,
            final_rf: records.last().map(|r| r.rf).unwrap_or(f64::NAN),
            records,
            iterations: self.iteration,
            stop,
            gamma: self.config.gamma_value().as_f64(),
        })
    }
}

pub fn run_blind<R: Real>(
    plan: &DecompositionPlan,
    frames: &FrameStack<R>,
    config: BlindConfig<R>,
    observer: impl FnMut(&ConvergenceRecord),
) -> Result<BlindResult<R>> {
    BlindSolver::new(plan, frames, config)?.run(observer)
}
