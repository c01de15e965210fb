//! ADMM solvers over an overlapping decomposition.
//!
//! Every subdomain is advanced by its own worker. Per iteration the workers
//! meet twice: once to gather the R-factor and form the shared overlap
//! variables, and once after the image update. All reductions run in
//! subdomain order, so the iterates do not depend on the thread count.

pub mod blind;
pub mod nonblind;

use std::time::Instant;

use num_complex::Complex;
use rayon::ThreadPool;
use serde::{Deserialize, Serialize};

use crate::error::{PtychoError, Result};
use crate::grid::{ComplexField, Region};
use crate::plan::DecompositionPlan;
use crate::scalar::Real;

pub use blind::{
    run_blind, support_disk, support_from_probe, support_radius_for_energy, BlindConfig,
    BlindResult, BlindSolver, BlindState, Support,
};
pub use nonblind::{
    run_nonblind, NonblindConfig, NonblindResult, NonblindSolver, NonblindState, ParameterSet,
};

/// One row of the convergence log.
///
/// Row `n` describes the iterate after `n` updates. Its timings cover the
/// work between the previous row and this one.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRecord {
    pub iteration: usize,
    /// R-factor of the current iterate.
    pub rf: f64,
    /// Relative change against the previous iterate; absent for the initial guess.
    pub re: Option<f64>,
    pub lagrangian: Option<f64>,
    /// CPU time of each subdomain worker, seconds.
    pub sub_seconds: Vec<f64>,
    /// Slowest worker's compute time; overlap exchange is not counted.
    pub virtual_seconds: f64,
    /// Elapsed wall time including synchronization.
    pub actual_seconds: f64,
}

/// Why a run ended.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    /// R-factor at or below `tol_rf`.
    RFactor,
    /// Relative change at or below `tol_re`.
    RelativeError,
    MaxIterations,
}

pub(crate) fn build_pool(threads: Option<usize>) -> Result<ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        if n == 0 {
            return Err(PtychoError::Parameter(
                "thread count must be positive".into(),
            ));
        }
        builder = builder.num_threads(n);
    }
    builder
        .build()
        .map_err(|e| PtychoError::Parameter(format!("cannot start worker pool: {e}")))
}

pub(crate) fn check_positive<R: Real>(name: &str, x: R) -> Result<()> {
    if x > R::zero() && x.is_finite() {
        Ok(())
    } else {
        Err(PtychoError::Parameter(format!(
            "{name} must be positive, got {x}"
        )))
    }
}

pub(crate) fn check_tolerance<R: Real>(name: &str, x: Option<R>) -> Result<()> {
    match x {
        Some(t) => check_positive(name, t),
        None => Ok(()),
    }
}

/// One subdomain's side of an overlap: the pair index, the overlap in local
/// coordinates, and the multiplier `Λ` for this side.
#[derive(Clone)]
pub(crate) struct Link<R: Real> {
    pub pair: usize,
    pub region: Region,
    pub lambda: ComplexField<R>,
}

pub(crate) fn make_links<R: Real>(plan: &DecompositionPlan, d: usize) -> Vec<Link<R>> {
    plan.overlaps()
        .iter()
        .enumerate()
        .filter(|(_, o)| o.involves(d))
        .map(|(p, o)| Link {
            pair: p,
            region: plan.local_overlap(p, d),
            lambda: ComplexField::zeros(o.region.height(), o.region.width()),
        })
        .collect()
}

/// Overlap variables of pair `p`: `½(π u_a + π u_b + Λ_ab + Λ_ba)`.
pub(crate) fn overlap_average<R: Real>(
    ua: &ComplexField<R>,
    la: &Link<R>,
    ub: &ComplexField<R>,
    lb: &Link<R>,
    out: &mut ComplexField<R>,
) {
    let half = R::lit(0.5);
    let w = la.region.width();
    for i in 0..la.region.height() {
        let ra = &ua.row(la.region.row_start + i)[la.region.col_start..la.region.col_end];
        let rb = &ub.row(lb.region.row_start + i)[lb.region.col_start..lb.region.col_end];
        let lam_a = &la.lambda.data()[i * w..(i + 1) * w];
        let lam_b = &lb.lambda.data()[i * w..(i + 1) * w];
        let dst = &mut out.data_mut()[i * w..(i + 1) * w];
        for k in 0..w {
            dst[k] = (ra[k] + rb[k] + lam_a[k] + lam_b[k]) * half;
        }
    }
}

/// `r Σ (Re⟨Λ, πu − v⟩ + ½‖πu − v‖²)` over the links of one subdomain.
pub(crate) fn overlap_lagrangian<R: Real>(
    u: &ComplexField<R>,
    links: &[Link<R>],
    v: &[ComplexField<R>],
    r: R,
) -> R {
    let half = R::lit(0.5);
    let mut acc = R::zero();
    for link in links {
        let w = link.region.width();
        let vp = &v[link.pair];
        for i in 0..link.region.height() {
            let ur = &u.row(link.region.row_start + i)[link.region.col_start..link.region.col_end];
            for k in 0..w {
                let e = ur[k] - vp.data()[i * w + k];
                let lam = link.lambda.data()[i * w + k];
                acc = acc + (lam.conj() * e).re + half * e.norm_sqr();
            }
        }
    }
    r * acc
}

/// Adds `r (v_p − Λ)` over every link into `numer`.
pub(crate) fn add_overlap_pull<R: Real>(
    numer: &mut ComplexField<R>,
    links: &[Link<R>],
    v: &[ComplexField<R>],
    r: R,
) {
    for link in links {
        let w = link.region.width();
        let vp = &v[link.pair];
        for i in 0..link.region.height() {
            let row = &mut numer.row_mut(link.region.row_start + i)
                [link.region.col_start..link.region.col_end];
            for k in 0..w {
                row[k] = row[k] + (vp.data()[i * w + k] - link.lambda.data()[i * w + k]) * r;
            }
        }
    }
}

/// `Λ += π u − v_p` over every link.
pub(crate) fn update_multipliers<R: Real>(
    u: &ComplexField<R>,
    links: &mut [Link<R>],
    v: &[ComplexField<R>],
) {
    for link in links {
        let w = link.region.width();
        let vp = &v[link.pair];
        let region = link.region;
        let lam = link.lambda.data_mut();
        for i in 0..region.height() {
            let ur = &u.row(region.row_start + i)[region.col_start..region.col_end];
            for k in 0..w {
                lam[i * w + k] = lam[i * w + k] + ur[k] - vp.data()[i * w + k];
            }
        }
    }
}

/// Overlap coverage count of every local pixel (how many links contain it).
pub(crate) fn link_coverage<R: Real>(shape: (usize, usize), links: &[Link<R>]) -> Vec<R> {
    let mut cov = vec![R::zero(); shape.0 * shape.1];
    for link in links {
        for r in link.region.row_start..link.region.row_end {
            for c in link.region.col_start..link.region.col_end {
                cov[r * shape.1 + c] = cov[r * shape.1 + c] + R::one();
            }
        }
    }
    cov
}

/// Squared norms `(‖new − old‖², ‖new‖²)` for the relative-change metric.
pub(crate) fn change_norms<R: Real>(new: &[Complex<R>], old: &[Complex<R>]) -> (R, R) {
    new.iter()
        .zip(old)
        .fold((R::zero(), R::zero()), |(d, n), (a, b)| {
            (d + (*a - *b).norm_sqr(), n + a.norm_sqr())
        })
}

/// Per-worker compute time across the phases of one iteration.
///
/// Virtual time is the slowest worker's total. Consensus steps on the
/// overlaps count as communication and are left out.
pub(crate) struct PhaseClock {
    sub: Vec<f64>,
    started: Instant,
}

impl PhaseClock {
    pub fn new(workers: usize) -> Self {
        Self {
            sub: vec![0.0; workers],
            started: Instant::now(),
        }
    }

    /// Adds the busy time of one barrier-separated compute phase.
    pub fn phase(&mut self, seconds: &[f64]) {
        for (s, t) in self.sub.iter_mut().zip(seconds) {
            *s += t;
        }
    }

    pub fn finish(&mut self) -> (Vec<f64>, f64, f64) {
        let fresh = vec![0.0; self.sub.len()];
        let sub = std::mem::replace(&mut self.sub, fresh);
        let virt = sub.iter().copied().fold(0.0, f64::max);
        let actual = self.started.elapsed().as_secs_f64();
        self.started = Instant::now();
        (sub, virt, actual)
    }
}

/// Runs `f` and returns its result with the CPU time the calling thread spent in it.
pub(crate) fn timed<T>(f: impl FnOnce() -> T) -> (T, f64) {
    let t = thread_cpu_seconds();
    let out = f();
    (out, thread_cpu_seconds() - t)
}

#[cfg(unix)]
fn thread_cpu_seconds() -> f64 {
    let mut ts = libc::timespec {
        tv_sec: 0,
        tv_nsec: 0,
    };
    // SAFETY: `ts` is a valid, writable timespec.
    let rc = unsafe { libc::clock_gettime(libc::CLOCK_THREAD_CPUTIME_ID, &mut ts) };
    assert_eq!(rc, 0, "thread CPU clock unavailable");
    ts.tv_sec as f64 + ts.tv_nsec as f64 * 1e-9
}

#[cfg(not(unix))]
fn thread_cpu_seconds() -> f64 {
    use std::sync::OnceLock;
    static START: OnceLock<Instant> = OnceLock::new();
    START.get_or_init(Instant::now).elapsed().as_secs_f64()
}
