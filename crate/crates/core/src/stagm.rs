//! Smooth-truncated amplitude-Gaussian metric.
//!
//! Per pixel, with measured intensity `b` and truncation `ε ∈ (0, 1)`:
//!
//! ```text
//! g(x; b) = (1-ε)/2 · (b - |x|²/ε)   if |x| < ε√b
//!         = ½ (|x| - √b)²             otherwise
//! ```
//!
//! The metric is continuously differentiable with a `(2/ε - 1)`-Lipschitz
//! gradient, and its proximal mapping is available in closed form.

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{PtychoError, Result};
use crate::forward::FrameStack;
use crate::grid::{ComplexField, Grid};
use crate::scalar::{unit_phase, Real};

/// Truncation parameter and prox penalty.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StagmParams<R> {
    pub epsilon: R,
    pub penalty: R,
}

impl<R: Real> StagmParams<R> {
    pub fn new(epsilon: R, penalty: R) -> Result<Self> {
        check_epsilon(epsilon)?;
        check_penalty(penalty)?;
        Ok(Self { epsilon, penalty })
    }
}

pub(crate) fn check_epsilon<R: Real>(epsilon: R) -> Result<()> {
    if epsilon > R::zero() && epsilon < R::one() {
        Ok(())
    } else {
        Err(PtychoError::Parameter(format!(
            "epsilon must lie in (0, 1), got {epsilon}"
        )))
    }
}

fn check_penalty<R: Real>(lambda: R) -> Result<()> {
    if lambda > R::zero() && lambda.is_finite() {
        Ok(())
    } else {
        Err(PtychoError::Parameter(format!(
            "prox penalty must be positive, got {lambda}"
        )))
    }
}

/// Lipschitz constant `2/ε - 1` of the metric's gradient.
pub fn lipschitz_constant<R: Real>(epsilon: R) -> Result<R> {
    check_epsilon(epsilon)?;
    Ok(R::lit(2.0) / epsilon - R::one())
}

/// `g(x; b)` for a single pixel, given the amplitude `a = √b`.
#[inline]
pub fn value_amplitude<R: Real>(x: Complex<R>, a: R, epsilon: R) -> R {
    let m = x.norm();
    let half = R::lit(0.5);
    if m < epsilon * a {
        half * (R::one() - epsilon) * (a * a - m * m / epsilon)
    } else {
        let d = m - a;
        half * d * d
    }
}

/// `∇g(x; b)` for a single pixel, given the amplitude `a = √b`.
///
/// The derivative is taken with respect to `(Re x, Im x)` and packed back
/// into a complex number.
#[inline]
pub fn gradient_amplitude<R: Real>(x: Complex<R>, a: R, epsilon: R) -> Complex<R> {
    let m = x.norm();
    if m < epsilon * a {
        x * (R::one() - R::one() / epsilon)
    } else {
        // m ≥ εa > 0 unless a = 0, where the gradient is x itself.
        let s = if m > R::zero() { a / m } else { R::zero() };
        x * (R::one() - s)
    }
}

/// Minimizer of `g(x; a²) + (λ/2)|x - y|²`.
///
/// Every admissible stationary magnitude is compared against the branch
/// boundary and the origin by objective value. Ties keep the outer branch.
#[inline]
pub fn prox_amplitude<R: Real>(y: Complex<R>, a: R, lambda: R, epsilon: R) -> Complex<R> {
    let t = prox_magnitude(y.norm(), a, lambda, epsilon);
    unit_phase(y) * t
}

fn prox_magnitude<R: Real>(m: R, a: R, lambda: R, epsilon: R) -> R {
    let half = R::lit(0.5);
    let boundary = epsilon * a;
    let objective = |t: R| {
        let inner = if t < boundary {
            half * (R::one() - epsilon) * (a * a - t * t / epsilon)
        } else {
            let d = t - a;
            half * d * d
        };
        let e = t - m;
        inner + half * lambda * e * e
    };

    let outer = (a + lambda * m) / (R::one() + lambda);
    let mut best = if outer >= boundary { Some(outer) } else { None };
    let mut best_val = best.map(objective).unwrap_or(R::infinity());

    let curvature = lambda - (R::one() - epsilon) / epsilon;
    let mut candidates = [R::zero(), boundary, R::nan()];
    if curvature > R::zero() {
        let inner = lambda * m / curvature;
        if inner < boundary {
            candidates[2] = inner;
        }
    }
    for &t in candidates.iter().filter(|t| !t.is_nan()) {
        let v = objective(t);
        if v < best_val {
            best = Some(t);
            best_val = v;
        }
    }
    best.unwrap_or(outer)
}

/// Prox magnitude from the threshold rule: inner branch
/// `max{0, λ|y| / (λ - (1-ε)/ε)}` when `|y| < (ε - (1-ε)/λ)√b`, otherwise
/// the outer branch `(√b + λ|y|) / (1 + λ)`.
pub fn prox_threshold_rule<R: Real>(y: Complex<R>, b: R, lambda: R, epsilon: R) -> Complex<R> {
    let a = b.sqrt();
    let m = y.norm();
    let threshold = (epsilon - (R::one() - epsilon) / lambda) * a;
    let t = if m < threshold {
        let denom = lambda - (R::one() - epsilon) / epsilon;
        (lambda * m / denom).max(R::zero())
    } else {
        (a + lambda * m) / (R::one() + lambda)
    };
    unit_phase(y) * t
}

fn check_pair<R: Real>(z: &[ComplexField<R>], f: &FrameStack<R>) -> Result<()> {
    if z.len() != f.len() {
        return Err(PtychoError::Dimension(format!(
            "{} frames against {} measurements",
            z.len(),
            f.len()
        )));
    }
    for (zj, fj) in z.iter().zip(f.frames()) {
        zj.ensure_shape(fj.shape(), "frame")?;
    }
    Ok(())
}

/// `Σ_j Σ_pixels g(z_j; f_j)`.
pub fn stagm_value<R: Real>(z: &[ComplexField<R>], f: &FrameStack<R>, epsilon: R) -> Result<R> {
    check_epsilon(epsilon)?;
    check_pair(z, f)?;
    Ok(z.iter()
        .zip(f.frames())
        .map(|(zj, fj)| {
            zj.data()
                .iter()
                .zip(fj.data())
                .map(|(x, b)| value_amplitude(*x, b.sqrt(), epsilon))
                .sum::<R>()
        })
        .sum())
}

pub fn stagm_gradient<R: Real>(
    z: &[ComplexField<R>],
    f: &FrameStack<R>,
    epsilon: R,
) -> Result<Vec<ComplexField<R>>> {
    check_epsilon(epsilon)?;
    check_pair(z, f)?;
    Ok(z.iter()
        .zip(f.frames())
        .map(|(zj, fj)| zip_map(zj, fj, |x, b| gradient_amplitude(x, b.sqrt(), epsilon)))
        .collect())
}

pub fn stagm_prox<R: Real>(
    y: &[ComplexField<R>],
    f: &FrameStack<R>,
    lambda: R,
    epsilon: R,
) -> Result<Vec<ComplexField<R>>> {
    check_epsilon(epsilon)?;
    check_penalty(lambda)?;
    check_pair(y, f)?;
    Ok(y.iter()
        .zip(f.frames())
        .map(|(yj, fj)| zip_map(yj, fj, |x, b| prox_amplitude(x, b.sqrt(), lambda, epsilon)))
        .collect())
}

fn zip_map<R: Real>(
    z: &ComplexField<R>,
    f: &Grid<R>,
    op: impl Fn(Complex<R>, R) -> Complex<R>,
) -> ComplexField<R> {
    let data = z
        .data()
        .iter()
        .zip(f.data())
        .map(|(x, b)| op(*x, *b))
        .collect();
    Grid::new(z.height(), z.width(), data).expect("shape preserved")
}

#[cfg(test)]
mod tests {
    use super::*;

    type C = Complex<f64>;

    fn one(x: C, b: f64) -> (Vec<ComplexField<f64>>, FrameStack<f64>) {
        (
            vec![Grid::filled(1, 1, x)],
            FrameStack::new(vec![Grid::filled(1, 1, b)]).unwrap(),
        )
    }

    fn prox1(y: f64, b: f64, lambda: f64, eps: f64) -> f64 {
        let (z, f) = one(C::new(y, 0.0), b);
        stagm_prox(&z, &f, lambda, eps).unwrap()[0].get(0, 0).re
    }

    #[test]
    fn value_examples() {
        let (z, f) = one(C::from_polar(2.0, 0.7), 4.0);
        assert_eq!(stagm_value(&z, &f, 0.3).unwrap(), 0.0);
        let (z, f) = one(C::new(0.0, 0.0), 1.0);
        assert_eq!(stagm_value(&z, &f, 0.5).unwrap(), 0.25);
        let (z, f) = one(C::new(0.6, -0.8), 0.0);
        assert!((stagm_value(&z, &f, 0.5).unwrap() - 0.5).abs() < 1e-15);
        assert!(stagm_value(&z, &f, 1.0).is_err());
        assert!(stagm_value(&z, &f, 0.0).is_err());
    }

    #[test]
    fn gradient_examples() {
        let (z, f) = one(C::from_polar(3.0, -1.2), 9.0);
        assert!(stagm_gradient(&z, &f, 0.5).unwrap()[0].get(0, 0).norm() < 1e-15);
        let (z, f) = one(C::new(0.0, 0.0), 1.0);
        assert_eq!(
            *stagm_gradient(&z, &f, 0.5).unwrap()[0].get(0, 0),
            C::new(0.0, 0.0)
        );
    }

    #[test]
    fn gradient_continuous_at_boundary() {
        let (a, eps) = (2.0, 0.4);
        let x = C::from_polar(eps * a, 0.3);
        let inside = gradient_amplitude(x * (1.0 - 1e-12), a, eps);
        let outside = gradient_amplitude(x, a, eps);
        assert!((inside - outside).norm() < 1e-10);
    }

    #[test]
    fn lipschitz_examples() {
        assert_eq!(lipschitz_constant(0.5).unwrap(), 3.0);
        assert!((lipschitz_constant(1.0_f64 - 1e-12).unwrap() - 1.0).abs() < 1e-10);
        assert!(lipschitz_constant(1.5).is_err());
    }

    #[test]
    fn prox_examples() {
        assert!((prox1(1.0, 0.0, 1.0, 0.5) - 0.5).abs() < 1e-15);
        assert!((prox1(0.9, 1.0, 4.0, 0.5) - 0.92).abs() < 1e-12);
        assert!((prox1(0.2, 1.0, 0.1, 0.5) - 1.02 / 1.1).abs() < 1e-12);
    }

    #[test]
    fn prox_zero_input_takes_unit_phase() {
        let x = prox_amplitude(C::new(0.0, 0.0), 1.0, 0.1, 0.5);
        assert!(x.im == 0.0 && x.re > 0.0);
    }

    #[test]
    fn prox_inner_branch_case() {
        // λ = 10, ε = 0.5: threshold (0.5 - 0.05)·1 = 0.45, inner magnitude 10y/9.
        assert!((prox1(0.3, 1.0, 10.0, 0.5) - 3.0 / 9.0).abs() < 1e-12);
    }

    #[test]
    fn prox_rejects_bad_penalty() {
        let (z, f) = one(C::new(1.0, 0.0), 1.0);
        assert!(stagm_prox(&z, &f, 0.0, 0.5).is_err());
        assert!(stagm_prox(&z, &f, -1.0, 0.5).is_err());
    }

    #[test]
    fn params_validate() {
        assert!(StagmParams::new(0.5, 0.1).is_ok());
        assert!(StagmParams::new(0.0, 0.1).is_err());
        assert!(StagmParams::new(0.5, 0.0).is_err());
    }

    #[test]
    fn works_in_f32() {
        let x = prox_amplitude(Complex::<f32>::new(0.9, 0.0), 1.0, 4.0, 0.5);
        assert!((x.re - 0.92).abs() < 1e-6);
    }
}
