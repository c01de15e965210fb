//! Scalar diagnostics: R-factor, relative error, SNR, the augmented
//! Lagrangian and parallel speedup.

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{PtychoError, Result};
use crate::forward::{FrameStack, ScanOperator};
use crate::grid::ComplexField;
use crate::plan::DecompositionPlan;
use crate::scalar::Real;
use crate::solver::{ConvergenceRecord, NonblindConfig, NonblindState};
use crate::stagm::value_amplitude;

/// `Σ_d ‖|A_d u_d| − √f_d‖₁ / Σ_d ‖√f_d‖₁`, with `A_d` built from `probe`.
pub fn r_factor<R: Real>(
    subs: &[ComplexField<R>],
    plan: &DecompositionPlan,
    frames: &FrameStack<R>,
    probe: &ComplexField<R>,
) -> Result<R> {
    if subs.len() != plan.len() {
        return Err(PtychoError::Dimension(format!(
            "expected {} subdomain images, got {}",
            plan.len(),
            subs.len()
        )));
    }
    let parts = plan.partition_frames(frames)?;
    let (mut num, mut den) = (R::zero(), R::zero());
    for ((sub, u), part) in plan.subdomains().iter().zip(subs).zip(&parts) {
        u.ensure_shape(sub.region.shape(), "subdomain image")?;
        part.check_against(&sub.geometry)?;
        let mut op = ScanOperator::new(sub.geometry.clone());
        let f = part.frames();
        op.forward_with(probe, u, |j, au| {
            for (y, x) in au.iter().zip(f[j].data()) {
                let a = x.sqrt();
                num = num + (y.norm() - a).abs();
                den = den + a;
            }
        });
    }
    if !(den > R::zero()) {
        return Err(PtychoError::UndefinedMetric(
            "R-factor is undefined for all-zero measurements".into(),
        ));
    }
    Ok(num / den)
}

/// `max_d ‖u_d − u_d_prev‖ / ‖u_d‖`.
pub fn relative_error<R: Real>(
    current: &[ComplexField<R>],
    previous: &[ComplexField<R>],
) -> Result<R> {
    if current.len() != previous.len() {
        return Err(PtychoError::Dimension(
            "iterate lists differ in length".into(),
        ));
    }
    let mut worst = R::zero();
    for (u, p) in current.iter().zip(previous) {
        p.ensure_shape(u.shape(), "previous iterate")?;
        let norm = u.norm_sqr();
        if !(norm > R::zero()) {
            return Err(PtychoError::UndefinedMetric(
                "relative error is undefined for a zero iterate".into(),
            ));
        }
        let diff = u
            .data()
            .iter()
            .zip(p.data())
            .fold(R::zero(), |acc, (a, b)| acc + (*a - *b).norm_sqr());
        worst = worst.max((diff / norm).sqrt());
    }
    Ok(worst)
}

/// `−10 log10(‖u_r − u_g‖² / ‖u_r‖²)` in dB; `+∞` when the fields agree.
pub fn snr_db<R: Real>(recovered: &ComplexField<R>, truth: &ComplexField<R>) -> Result<f64> {
    truth.ensure_shape(recovered.shape(), "ground truth")?;
    let diff = recovered
        .data()
        .iter()
        .zip(truth.data())
        .fold(0.0, |acc, (a, b)| acc + (*a - *b).norm_sqr().as_f64());
    if diff == 0.0 {
        return Ok(f64::INFINITY);
    }
    let norm = recovered.norm_sqr().as_f64();
    if !(norm > 0.0) {
        return Err(PtychoError::UndefinedMetric(
            "recovered image is zero".into(),
        ));
    }
    Ok(-10.0 * (diff / norm).log10())
}

/// `recovered · e^{iθ}` with `θ` minimizing the distance to `truth`.
///
/// Far-field data cannot fix a global phase, so a reconstruction is only
/// determined up to this factor.
pub fn align_global_phase<R: Real>(
    recovered: &ComplexField<R>,
    truth: &ComplexField<R>,
) -> Result<ComplexField<R>> {
    truth.ensure_shape(recovered.shape(), "ground truth")?;
    let ip = recovered
        .data()
        .iter()
        .zip(truth.data())
        .fold(Complex::new(R::zero(), R::zero()), |acc, (a, b)| {
            acc + a.conj() * *b
        });
    let norm = ip.norm();
    if !(norm > R::zero()) {
        return Ok(recovered.clone());
    }
    let phase = ip / norm;
    Ok(recovered.map(|x| *x * phase))
}

/// [`snr_db`] after [`align_global_phase`].
pub fn snr_db_aligned<R: Real>(
    recovered: &ComplexField<R>,
    truth: &ComplexField<R>,
) -> Result<f64> {
    snr_db(&align_global_phase(recovered, truth)?, truth)
}

/// Augmented Lagrangian of a nonblind state:
///
/// ```text
/// Σ_d [ G(z_d) + η Re⟨Γ_d, A_d u_d − z_d⟩ + η/2 ‖A_d u_d − z_d‖² ]
///   + r Σ_(d,p) [ Re⟨Λ_dp, π u_d − v_p⟩ + 1/2 ‖π u_d − v_p‖² ]
/// ```
pub fn augmented_lagrangian<R: Real>(
    state: &NonblindState<R>,
    plan: &DecompositionPlan,
    frames: &FrameStack<R>,
    probe: &ComplexField<R>,
    config: &NonblindConfig<R>,
) -> Result<R> {
    if state.u.len() != plan.len() || state.z.len() != plan.len() || state.gamma.len() != plan.len()
    {
        return Err(PtychoError::Dimension(
            "state has the wrong subdomain count".into(),
        ));
    }
    if state.v.len() != plan.overlaps().len() || state.lambda.len() != plan.overlaps().len() {
        return Err(PtychoError::Dimension(
            "state has the wrong overlap count".into(),
        ));
    }
    let (eps, eta, r, half) = (config.epsilon, config.eta, config.r, R::lit(0.5));
    let parts = plan.partition_frames(frames)?;
    let mut total = R::zero();
    for (d, (sub, part)) in plan.subdomains().iter().zip(&parts).enumerate() {
        state.u[d].ensure_shape(sub.region.shape(), "u")?;
        if state.z[d].len() != part.len() || state.gamma[d].len() != part.len() {
            return Err(PtychoError::Dimension(
                "state has the wrong frame count".into(),
            ));
        }
        let mut op = ScanOperator::new(sub.geometry.clone());
        let (z, gamma, f) = (&state.z[d], &state.gamma[d], part.frames());
        op.forward_with(probe, &state.u[d], |j, au| {
            let (zj, gj, fj) = (z[j].data(), gamma[j].data(), f[j].data());
            for k in 0..au.len() {
                let e = au[k] - zj[k];
                total = total
                    + value_amplitude(zj[k], fj[k].sqrt(), eps)
                    + eta * ((gj[k].conj() * e).re + half * e.norm_sqr());
            }
        });
    }
    for (p, o) in plan.overlaps().iter().enumerate() {
        let v = &state.v[p];
        v.ensure_shape(o.region.shape(), "v")?;
        for (side, d) in [o.first, o.second].into_iter().enumerate() {
            let lam = &state.lambda[p][side];
            lam.ensure_shape(o.region.shape(), "lambda")?;
            let local = plan.local_overlap(p, d);
            for i in 0..local.height() {
                for k in 0..local.width() {
                    let e =
                        *state.u[d].get(local.row_start + i, local.col_start + k) - *v.get(i, k);
                    total = total + r * ((lam.get(i, k).conj() * e).re + half * e.norm_sqr());
                }
            }
        }
    }
    Ok(total)
}

/// Largest rebound `(x_i − min_(k<i) x_k) / min_(k<i) x_k` within the last
/// `window` values of a decreasing error curve.
pub fn trailing_ripple(values: &[f64], window: usize) -> f64 {
    let tail = &values[values.len().saturating_sub(window)..];
    let mut low = f64::INFINITY;
    let mut worst = 0.0_f64;
    for &x in tail {
        if low.is_finite() && low > 0.0 {
            worst = worst.max((x - low) / low);
        }
        low = low.min(x);
    }
    worst
}

/// Iteration count and synchronized time of one run.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunTiming {
    pub subdomains: usize,
    pub iterations: usize,
    pub virtual_seconds: f64,
}

impl RunTiming {
    /// Sums the virtual time of a convergence log.
    pub fn from_records(
        subdomains: usize,
        iterations: usize,
        records: &[ConvergenceRecord],
    ) -> Self {
        Self {
            subdomains,
            iterations,
            virtual_seconds: records.iter().map(|r| r.virtual_seconds).sum(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpeedupRow {
    pub subdomains: usize,
    pub iterations: usize,
    pub virtual_seconds: f64,
    /// Baseline virtual time over this run's virtual time.
    pub speedup: f64,
    /// `speedup / D`.
    pub efficiency: f64,
    /// Efficiency above one, usually from cache effects.
    pub superlinear: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpeedupReport {
    pub rows: Vec<SpeedupRow>,
}

impl SpeedupReport {
    pub fn row(&self, subdomains: usize) -> Option<&SpeedupRow> {
        self.rows.iter().find(|r| r.subdomains == subdomains)
    }

    pub fn min_efficiency(&self) -> f64 {
        self.rows
            .iter()
            .map(|r| r.efficiency)
            .fold(f64::INFINITY, f64::min)
    }

    /// Plain-text table, one run per line.
    pub fn to_table(&self) -> String {
        let mut out = String::from("   D  iterations  virtual_s  speedup  efficiency\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{:>4}  {:>10}  {:>9.2}  {:>7.2}  {:>10.3}{}\n",
                r.subdomains,
                r.iterations,
                r.virtual_seconds,
                r.speedup,
                r.efficiency,
                if r.superlinear { "  superlinear" } else { "" }
            ));
        }
        out
    }
}

/// Speedup of every run against the single-subdomain baseline, sorted by `D`.
pub fn speedup_report(runs: &[RunTiming]) -> Result<SpeedupReport> {
    let base = runs
        .iter()
        .find(|r| r.subdomains == 1)
        .ok_or_else(|| PtychoError::Report("speedup needs a run with one subdomain".into()))?;
    let mut rows = Vec::with_capacity(runs.len());
    for run in runs {
        if run.subdomains == 0 || !(run.virtual_seconds > 0.0) {
            return Err(PtychoError::Report(format!(
                "run with {} subdomains has no positive time",
                run.subdomains
            )));
        }
        let speedup = base.virtual_seconds / run.virtual_seconds;
        let efficiency = speedup / run.subdomains as f64;
        rows.push(SpeedupRow {
            subdomains: run.subdomains,
            iterations: run.iterations,
            virtual_seconds: run.virtual_seconds,
            speedup,
            efficiency,
            superlinear: efficiency > 1.0,
        });
    }
    rows.sort_by_key(|r| r.subdomains);
    Ok(SpeedupReport { rows })
}
