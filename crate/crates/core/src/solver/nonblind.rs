//! Nonblind reconstruction with a known probe.
//!
//! Per iteration and subdomain `d`, with `A_d` the local forward operator:
//!
//! ```text
//! z_d  ← prox(Γ_d + A_d u_d)                 (η-penalized metric prox)
//! v_p  ← ½(π u_a + π u_b + Λ_ab + Λ_ba)       for every overlapping pair p = (a, b)
//! Γ_d  ← Γ_d + A_d u_d − z_d                 (with the pre-update u_d)
//! u_d  ← [η A_d*(z_d − Γ_d) + r Σ_p πᵀ(v_p − Λ_dp)] / [η diag(A_d*A_d) + r Σ_p πᵀπ]
//! Λ_dp ← Λ_dp + π u_d − v_p
//! ```

use num_complex::Complex;
use rayon::prelude::*;
use rayon::ThreadPool;
use serde::{Deserialize, Serialize};

use super::{
    add_overlap_pull, build_pool, change_norms, check_positive, check_tolerance, link_coverage,
    make_links, overlap_average, overlap_lagrangian, timed, update_multipliers, ConvergenceRecord,
    Link, PhaseClock, StopReason,
};
use crate::error::{PtychoError, Result};
use crate::forward::{FrameStack, ScanOperator};
use crate::grid::{ComplexField, Grid, RealField};
use crate::plan::{merge, DecompositionPlan};
use crate::scalar::Real;
use crate::stagm::{check_epsilon, lipschitz_constant, prox_amplitude, value_amplitude};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NonblindConfig<R> {
    pub epsilon: R,
    /// Penalty on the frame constraint `A u = z`.
    pub eta: R,
    /// Penalty on the overlap constraint `π u = v`.
    pub r: R,
    pub max_iters: usize,
    /// Stop once the R-factor is at or below this value.
    pub tol_rf: Option<R>,
    /// Stop once the relative change between iterates is at or below this value.
    pub tol_re: Option<R>,
    pub record_lagrangian: bool,
    /// Worker threads; `None` uses one per available core.
    pub threads: Option<usize>,
}

impl<R: Real> Default for NonblindConfig<R> {
    /// Noiseless setting: `ε = 0.5, η = 0.1, r = 4000`, R-factor tolerance
    /// `1e-5`, at most 1000 iterations.
    fn default() -> Self {
        Self {
            epsilon: R::lit(0.5),
            eta: R::lit(0.1),
            r: R::lit(4000.0),
            max_iters: 1000,
            tol_rf: Some(R::lit(1e-5)),
            tol_re: None,
            record_lagrangian: false,
            threads: None,
        }
    }
}

impl<R: Real> NonblindConfig<R> {
    /// Noisy setting: relative-change tolerance `1e-3`, at most 200 iterations.
    pub fn noisy(r: R) -> Self {
        Self {
            r,
            max_iters: 200,
            tol_rf: None,
            tol_re: Some(R::lit(1e-3)),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_epsilon(self.epsilon)?;
        check_positive("eta", self.eta)?;
        check_positive("r", self.r)?;
        check_tolerance("tol_rf", self.tol_rf)?;
        check_tolerance("tol_re", self.tol_re)?;
        if self.max_iters == 0 {
            return Err(PtychoError::Parameter(
                "max_iters must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Constants that define the parameter region in which the augmented
/// Lagrangian is provably non-increasing.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParameterSet {
    /// Lipschitz constant of the metric gradient.
    pub lipschitz: f64,
    /// `max_d max{2‖A_d*A_d‖, ‖π A_d*‖}`.
    pub c0: f64,
    /// `2 max ‖π A_d*‖²`.
    pub c1: f64,
}

impl ParameterSet {
    pub fn new<R: Real>(
        plan: &DecompositionPlan,
        probe: &ComplexField<R>,
        epsilon: R,
    ) -> Result<Self> {
        let lipschitz = lipschitz_constant(epsilon)?.as_f64();
        let (mut c0, mut pi_sq) = (0.0_f64, 0.0_f64);
        for (d, sub) in plan.subdomains().iter().enumerate() {
            probe.ensure_shape(sub.geometry.frame_shape(), "probe")?;
            let rho = ScanOperator::new(sub.geometry.clone()).illumination_density(probe);
            c0 = c0.max(2.0 * rho.max_value().as_f64());
            for (p, o) in plan.overlaps().iter().enumerate() {
                if o.involves(d) {
                    let region = plan.local_overlap(p, d);
                    let mut m = 0.0_f64;
                    for r in region.row_start..region.row_end {
                        for c in region.col_start..region.col_end {
                            m = m.max(rho.get(r, c).as_f64());
                        }
                    }
                    pi_sq = pi_sq.max(m);
                    c0 = c0.max(m.sqrt());
                }
            }
        }
        Ok(Self {
            lipschitz,
            c0,
            c1: 2.0 * pi_sq,
        })
    }

    /// Lower bound on `η` from the nonemptiness construction.
    pub fn eta_threshold(&self) -> f64 {
        let l = self.lipschitz;
        let tail = if self.c0 > 0.0 {
            2.0 * self.c1 / (self.c0 * self.c0) * (l + 1.0).powi(2)
        } else {
            0.0
        };
        (6.0 * l + 2.0 * l * l + tail).max(1.0)
    }

    /// A pair `(r, η)` inside the region: `η` and `r / (c0 η)` both exceed
    /// their thresholds by the factor `1 + margin`.
    pub fn construct(&self, margin: f64) -> (f64, f64) {
        let eta = self.eta_threshold() * (1.0 + margin);
        (self.c0 * eta * (1.0 + margin), eta)
    }

    pub fn contains(&self, r: f64, eta: f64) -> bool {
        let l = self.lipschitz;
        let pi_sq = self.c1 / 2.0;
        eta >= 1.0
            && r > self.c0 * eta
            && (eta - 3.0 * l) / 2.0 - l * l / eta - 2.0 * (l + eta).powi(2) / (r * r) * pi_sq > 0.0
    }
}

/// Snapshot of every primal and dual variable.
#[derive(Clone, Debug, PartialEq)]
pub struct NonblindState<R: Real> {
    /// Subdomain images.
    pub u: Vec<ComplexField<R>>,
    /// Auxiliary frames per subdomain, in local scan order.
    pub z: Vec<Vec<ComplexField<R>>>,
    /// Frame multipliers per subdomain.
    pub gamma: Vec<Vec<ComplexField<R>>>,
    /// Shared overlap variable per overlapping pair.
    pub v: Vec<ComplexField<R>>,
    /// Per pair `(a, b)` with `a < b`: `[Λ_ab, Λ_ba]`.
    pub lambda: Vec<[ComplexField<R>; 2]>,
    pub iteration: usize,
}

pub struct NonblindResult<R: Real> {
    pub subs: Vec<ComplexField<R>>,
    pub merged: ComplexField<R>,
    pub records: Vec<ConvergenceRecord>,
    pub iterations: usize,
    pub stop: StopReason,
    pub final_rf: f64,
    /// Whether `(r, η)` lies in the provably monotone parameter region.
    pub in_parameter_set: bool,
}

struct Worker<R: Real> {
    op: ScanOperator<R>,
    probe: ComplexField<R>,
    amp: Vec<R>,
    z: Vec<Complex<R>>,
    gamma: Vec<Complex<R>>,
    u: ComplexField<R>,
    numer: ComplexField<R>,
    density: RealField<R>,
    cov: Vec<R>,
    links: Vec<Link<R>>,
}

struct PhaseA<R> {
    rf_num: R,
    lagrangian: R,
    seconds: f64,
}

impl<R: Real> Worker<R> {
    fn frame_len(&self) -> usize {
        let n = self.op.geometry().frame_side();
        n * n
    }

    /// Residual sums of the current iterate, then the z- and Γ-steps and the
    /// adjoint `A*(z − Γ)` into `numer`.
    fn phase_a(
        &mut self,
        cfg: &NonblindConfig<R>,
        v: &[ComplexField<R>],
        lagrangian: bool,
    ) -> PhaseA<R> {
        let ((rf_num, lag), seconds) = timed(|| {
            let nn = self.frame_len();
            let (eps, eta, half) = (cfg.epsilon, cfg.eta, R::lit(0.5));
            let mut rf = R::zero();
            let mut lag = if lagrangian {
                overlap_lagrangian(&self.u, &self.links, v, cfg.r)
            } else {
                R::zero()
            };
            let Worker {
                op,
                probe,
                amp,
                z,
                gamma,
                u,
                numer,
                ..
            } = self;
            op.forward_with(probe, u, |j, au| {
                let base = j * nn;
                let amp = &amp[base..base + nn];
                let z = &mut z[base..base + nn];
                let gamma = &mut gamma[base..base + nn];
                for k in 0..nn {
                    let y = au[k];
                    let a = amp[k];
                    rf = rf + (y.norm() - a).abs();
                    if lagrangian {
                        let d = y - z[k];
                        lag = lag
                            + value_amplitude(z[k], a, eps)
                            + eta * ((gamma[k].conj() * d).re + half * d.norm_sqr());
                    }
                    let t = gamma[k] + y;
                    let zn = prox_amplitude(t, a, eta, eps);
                    z[k] = zn;
                    gamma[k] = t - zn;
                }
            });
            numer.data_mut().fill(Complex::default());
            op.adjoint_with(
                probe,
                |j, buf| {
                    let base = j * nn;
                    for (k, b) in buf.iter_mut().enumerate() {
                        *b = z[base + k] - gamma[base + k];
                    }
                },
                numer,
            );
            (rf, lag)
        });
        PhaseA {
            rf_num,
            lagrangian: lag,
            seconds,
        }
    }

    /// Image update, then the overlap multipliers. Returns the squared norms
    /// of the change and of the new iterate.
    fn phase_b(&mut self, cfg: &NonblindConfig<R>, v: &[ComplexField<R>]) -> ((R, R), f64) {
        timed(|| {
            let eta = cfg.eta;
            for x in self.numer.data_mut() {
                *x = *x * eta;
            }
            add_overlap_pull(&mut self.numer, &self.links, v, cfg.r);
            for ((x, rho), c) in self
                .numer
                .data_mut()
                .iter_mut()
                .zip(self.density.data())
                .zip(&self.cov)
            {
                *x = *x / (eta * *rho + cfg.r * *c);
            }
            let norms = change_norms(self.numer.data(), self.u.data());
            std::mem::swap(&mut self.u, &mut self.numer);
            update_multipliers(&self.u, &mut self.links, v);
            norms
        })
    }

    /// Forward-only residual sum `Σ ||A u| − √f|`.
    fn residual(&mut self) -> R {
        let nn = self.frame_len();
        let mut rf = R::zero();
        let Worker {
            op, probe, amp, u, ..
        } = self;
        op.forward_with(probe, u, |j, au| {
            for (y, a) in au.iter().zip(&amp[j * nn..(j + 1) * nn]) {
                rf = rf + (y.norm() - *a).abs();
            }
        });
        rf
    }
}

/// Stateful nonblind solver; [`run`](Self::run) drives it to a stopping rule.
pub struct NonblindSolver<R: Real> {
    plan: DecompositionPlan,
    config: NonblindConfig<R>,
    workers: Vec<Worker<R>>,
    v: Vec<ComplexField<R>>,
    pool: ThreadPool,
    iteration: usize,
    rf_den: R,
    in_parameter_set: bool,
    clock: PhaseClock,
    re_prev: Option<R>,
    stopped: Option<StopReason>,
}

impl<R: Real> NonblindSolver<R> {
    /// Initial state: `u = 1`, `z = A u`, zero multipliers and `v` the
    /// overlap restriction of `u`.
    pub fn new(
        plan: &DecompositionPlan,
        frames: &FrameStack<R>,
        probe: &ComplexField<R>,
        config: NonblindConfig<R>,
    ) -> Result<Self> {
        config.validate()?;
        let parts = plan.partition_frames(frames)?;
        let mut workers = Vec::with_capacity(plan.len());
        let mut rf_den = R::zero();
        for (d, (sub, part)) in plan.subdomains().iter().zip(parts).enumerate() {
            part.check_against(&sub.geometry)?;
            probe.ensure_shape(sub.geometry.frame_shape(), "probe")?;
            let mut op = ScanOperator::new(sub.geometry.clone());
            let density = op.illumination_density(probe);
            if let Some(k) = density.data().iter().position(|x| !(*x > R::zero())) {
                return Err(PtychoError::ZeroDensity {
                    subdomain: d,
                    row: k / density.width(),
                    col: k % density.width(),
                });
            }
            let amp: Vec<R> = part
                .frames()
                .iter()
                .flat_map(|f| f.data().iter().map(|x| x.sqrt()))
                .collect();
            rf_den = rf_den + amp.iter().copied().sum();
            let (h, w) = sub.region.shape();
            let u = ComplexField::ones(h, w);
            let mut z = Vec::with_capacity(amp.len());
            op.forward_with(probe, &u, |_, f| z.extend_from_slice(f));
            let links = make_links(plan, d);
            workers.push(Worker {
                cov: link_coverage((h, w), &links),
                gamma: vec![Complex::default(); z.len()],
                op,
                probe: probe.clone(),
                amp,
                z,
                u,
                numer: ComplexField::zeros(h, w),
                density,
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
        let in_parameter_set = ParameterSet::new(plan, probe, config.epsilon)?
            .contains(config.r.as_f64(), config.eta.as_f64());
        Ok(Self {
            pool: build_pool(config.threads)?,
            plan: plan.clone(),
            config,
            workers,
            v,
            iteration: 0,
            rf_den,
            in_parameter_set,
            clock: PhaseClock::new(plan.len()),
            re_prev: None,
            stopped: None,
        })
    }

    pub fn plan(&self) -> &DecompositionPlan {
        &self.plan
    }

    pub fn config(&self) -> &NonblindConfig<R> {
        &self.config
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn in_parameter_set(&self) -> bool {
        self.in_parameter_set
    }

    pub fn subdomain_images(&self) -> Vec<ComplexField<R>> {
        self.workers.iter().map(|w| w.u.clone()).collect()
    }

    pub fn state(&self) -> NonblindState<R> {
        let split = |w: &Worker<R>, data: &[Complex<R>]| -> Vec<ComplexField<R>> {
            let n = w.op.geometry().frame_side();
            data.chunks(n * n)
                .map(|c| Grid::new(n, n, c.to_vec()).expect("frame shape"))
                .collect()
        };
        let lambda = self
            .plan
            .overlaps()
            .iter()
            .enumerate()
            .map(|(p, o)| {
                [
                    self.link(o.first, p).lambda.clone(),
                    self.link(o.second, p).lambda.clone(),
                ]
            })
            .collect();
        NonblindState {
            u: self.subdomain_images(),
            z: self.workers.iter().map(|w| split(w, &w.z)).collect(),
            gamma: self.workers.iter().map(|w| split(w, &w.gamma)).collect(),
            v: self.v.clone(),
            lambda,
            iteration: self.iteration,
        }
    }

    /// Replaces every variable; shapes must match the plan.
    pub fn set_state(&mut self, state: NonblindState<R>) -> Result<()> {
        let d_count = self.workers.len();
        if state.u.len() != d_count || state.z.len() != d_count || state.gamma.len() != d_count {
            return Err(PtychoError::Dimension(
                "state has the wrong subdomain count".into(),
            ));
        }
        if state.v.len() != self.v.len() || state.lambda.len() != self.v.len() {
            return Err(PtychoError::Dimension(
                "state has the wrong overlap count".into(),
            ));
        }
        for (d, w) in self.workers.iter().enumerate() {
            state.u[d].ensure_shape(w.u.shape(), "u")?;
            let frames = w.z.len() / w.frame_len();
            for set in [&state.z[d], &state.gamma[d]] {
                if set.len() != frames {
                    return Err(PtychoError::Dimension(
                        "state has the wrong frame count".into(),
                    ));
                }
                for f in set {
                    f.ensure_shape(w.probe.shape(), "frame")?;
                }
            }
        }
        for (p, o) in self.plan.overlaps().iter().enumerate() {
            let shape = o.region.shape();
            state.v[p].ensure_shape(shape, "v")?;
            state.lambda[p][0].ensure_shape(shape, "lambda")?;
            state.lambda[p][1].ensure_shape(shape, "lambda")?;
        }
        let flat = |set: &[ComplexField<R>]| -> Vec<Complex<R>> {
            set.iter().flat_map(|f| f.data().iter().copied()).collect()
        };
        for (d, w) in self.workers.iter_mut().enumerate() {
            w.u = state.u[d].clone();
            w.z = flat(&state.z[d]);
            w.gamma = flat(&state.gamma[d]);
        }
        for (p, o) in self.plan.overlaps().iter().enumerate() {
            for (side, d) in [o.first, o.second].into_iter().enumerate() {
                let w = &mut self.workers[d];
                let link = w.links.iter_mut().find(|l| l.pair == p).expect("link");
                link.lambda = state.lambda[p][side].clone();
            }
        }
        self.v = state.v;
        self.iteration = state.iteration;
        self.re_prev = None;
        self.stopped = None;
        Ok(())
    }

    fn link(&self, d: usize, p: usize) -> &Link<R> {
        self.workers[d]
            .links
            .iter()
            .find(|l| l.pair == p)
            .expect("every overlap has a link on both sides")
    }

    /// R-factor of the current iterate.
    pub fn r_factor(&mut self) -> R {
        let num: R = self
            .pool
            .install(|| {
                self.workers
                    .par_iter_mut()
                    .map(|w| w.residual())
                    .collect::<Vec<_>>()
            })
            .into_iter()
            .sum();
        num / self.rf_den
    }

    /// Augmented Lagrangian of the current state.
    pub fn lagrangian(&mut self) -> R {
        let (eps, eta, r, half) = (
            self.config.epsilon,
            self.config.eta,
            self.config.r,
            R::lit(0.5),
        );
        let v = &self.v;
        let parts: Vec<R> = self.pool.install(|| {
            self.workers
                .par_iter_mut()
                .map(|w| {
                    let nn = w.frame_len();
                    let mut acc = overlap_lagrangian(&w.u, &w.links, v, r);
                    let Worker {
                        op,
                        probe,
                        amp,
                        z,
                        gamma,
                        u,
                        ..
                    } = w;
                    op.forward_with(probe, u, |j, au| {
                        for k in 0..nn {
                            let i = j * nn + k;
                            let d = au[k] - z[i];
                            acc = acc
                                + value_amplitude(z[i], amp[i], eps)
                                + eta * ((gamma[i].conj() * d).re + half * d.norm_sqr());
                        }
                    });
                    acc
                })
                .collect()
        });
        parts.into_iter().sum()
    }

    fn run_phase_a(&mut self, lagrangian: bool) -> (R, Option<R>, Vec<f64>) {
        let cfg = &self.config;
        let v = &self.v;
        let out: Vec<PhaseA<R>> = self.pool.install(|| {
            self.workers
                .par_iter_mut()
                .map(|w| w.phase_a(cfg, v, lagrangian))
                .collect()
        });
        let rf = out.iter().map(|p| p.rf_num).sum::<R>() / self.rf_den;
        let lag = lagrangian.then(|| out.iter().map(|p| p.lagrangian).sum());
        (rf, lag, out.iter().map(|p| p.seconds).collect())
    }

    fn run_step_v(&mut self) {
        for (p, o) in self.plan.overlaps().iter().enumerate() {
            let (a, b) = (&self.workers[o.first], &self.workers[o.second]);
            let la = a.links.iter().find(|l| l.pair == p).expect("link");
            let lb = b.links.iter().find(|l| l.pair == p).expect("link");
            overlap_average(&a.u, la, &b.u, lb, &mut self.v[p]);
        }
    }

    fn run_phase_b(&mut self) -> Result<(R, Vec<f64>)> {
        let cfg = &self.config;
        let v = &self.v;
        let out: Vec<((R, R), f64)> = self.pool.install(|| {
            self.workers
                .par_iter_mut()
                .map(|w| w.phase_b(cfg, v))
                .collect()
        });
        self.iteration += 1;
        let mut re = R::zero();
        for ((diff, norm), _) in &out {
            if !(diff.is_finite() && norm.is_finite()) {
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

    /// One full iteration. Returns the R-factor of the iterate it started
    /// from and the relative change it produced.
    pub fn step(&mut self) -> Result<(R, R)> {
        let (rf, _, _) = self.run_phase_a(false);
        self.run_step_v();
        let (re, _) = self.run_phase_b()?;
        Ok((rf, re))
    }

    /// Logs the current iterate and, unless a stopping rule fires, advances
    /// it by one iteration. Returns the log row and the stop reason, if any.
    pub fn advance(&mut self) -> Result<(ConvergenceRecord, Option<StopReason>)> {
        if let Some(stop) = self.stopped {
            return Err(PtychoError::Parameter(format!(
                "solver already stopped ({stop:?})"
            )));
        }
        let (rf, lag, ta) = self.run_phase_a(self.config.record_lagrangian);
        self.clock.phase(&ta);
        let (sub_seconds, virtual_seconds, actual_seconds) = self.clock.finish();
        let record = ConvergenceRecord {
            iteration: self.iteration,
            rf: rf.as_f64(),
            re: self.re_prev.map(R::as_f64),
            lagrangian: lag.map(R::as_f64),
            sub_seconds,
            virtual_seconds,
            actual_seconds,
        };
        if !rf.is_finite() {
            return Err(PtychoError::Divergence {
                iteration: self.iteration,
            });
        }
        let stop = if self.config.tol_rf.is_some_and(|t| rf <= t) {
            Some(StopReason::RFactor)
        } else if self
            .config
            .tol_re
            .zip(self.re_prev)
            .is_some_and(|(t, re)| re <= t)
        {
            Some(StopReason::RelativeError)
        } else if self.iteration >= self.config.max_iters {
            Some(StopReason::MaxIterations)
        } else {
            None
        };
        if stop.is_some() {
            self.stopped = stop;
        } else {
            self.run_step_v();
            let (re, tb) = self.run_phase_b()?;
            self.clock.phase(&tb);
            self.re_prev = Some(re);
        }
        Ok((record, stop))
    }

    /// Iterates until a stopping rule fires, reporting each record to `observer`.
    pub fn run(
        mut self,
        mut observer: impl FnMut(&ConvergenceRecord),
    ) -> Result<NonblindResult<R>> {
        let mut records = Vec::new();
        let stop = loop {
            let (record, stop) = self.advance()?;
            observer(&record);
            records.push(record);
            if let Some(stop) = stop {
                break stop;
            }
        };
        self.finish(records, stop)
    }

    /// Merges the sub-solutions of a stopped run.
    pub fn finish(
        &self,
        records: Vec<ConvergenceRecord>,
        stop: StopReason,
    ) -> Result<NonblindResult<R>> {
        let subs = self.subdomain_images();
        Ok(NonblindResult {
            merged: merge(&subs, &self.plan)?,
            subs,
            final_rf: records.last().map(|r| r.rf).unwrap_or(f64::NAN),
            records,
            iterations: self.iteration,
            stop,
            in_parameter_set: self.in_parameter_set,
        })
    }
}

/// Builds a solver from the initial state and runs it.
pub fn run_nonblind<R: Real>(
    plan: &DecompositionPlan,
    frames: &FrameStack<R>,
    probe: &ComplexField<R>,
    config: NonblindConfig<R>,
    observer: impl FnMut(&ConvergenceRecord),
) -> Result<NonblindResult<R>> {
    NonblindSolver::new(plan, frames, probe, config)?.run(observer)
}
