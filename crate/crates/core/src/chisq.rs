//! Upper tail probabilities of the chi-squared distribution and of
//! nonnegative linear combinations of independent one-degree-of-freedom
//! chi-squared variables.
//!
//! The mixture tail is computed by Imhof's inversion formula
//!
//! ```text
//! P(Q > x) = 1/2 + (1/π) ∫₀^∞ sin θ(u) / (u ρ(u)) du
//! θ(u) = ½ Σ arctan(ωᵢu) − ½ x u,   ρ(u) = Π (1 + ωᵢ²u²)^{1/4}
//! ```
//!
//! `θ` is concave with `θ(0) = 0`, so past its maximum it decreases
//! monotonically. The integral is split at that maximum and then at every
//! point where `θ` crosses a multiple of π. The head is integrated
//! adaptively; the tail becomes an alternating series of half-period
//! integrals that is summed with Wynn epsilon acceleration, stopping early
//! when Imhof's analytic truncation bound is already below tolerance.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::{checked_gamma_ur, gamma_ur};

use crate::error::{IhtError, Result};
use crate::quadrature::{integrate, wynn_epsilon};

/// Weights below this fraction of the largest are dropped.
const DROP_REL: f64 = 1e-12;
/// Absolute target for the probability itself.
const PROB_ABS_TOL: f64 = 1e-10;
/// Half-period cap for the oscillatory tail.
const MAX_HALF_PERIODS: usize = 100_000;

/// `P(χ²_df > x)`; equals 1 for `x <= 0`.
pub fn chisq_sf(x: f64, df: usize) -> f64 {
    assert!(df >= 1, "chi-squared needs at least one degree of freedom");
    if x <= 0.0 || x.is_nan() {
        return 1.0;
    }
    if x.is_infinite() {
        return 0.0;
    }
    gamma_ur(df as f64 / 2.0, x / 2.0)
}

/// Smallest `x` with `chisq_sf(x, df) <= prob`, by bisection to 1e-8.
pub fn chisq_quantile_upper(prob: f64, df: usize) -> Result<f64> {
    bisect_upper(prob, |x| Ok(chisq_sf(x, df)))
}

/// Weights of `Σ ωᵢ Kᵢ` with quadrature controls.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureSpec {
    pub weights: Vec<f64>,
    pub quad_rel_tol: f64,
    pub max_subdivisions: usize,
}

impl MixtureSpec {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        let spec = Self {
            weights,
            quad_rel_tol: 1e-8,
            max_subdivisions: 200,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(IhtError::InvalidArgument(
                "mixture weights must be finite and nonnegative".into(),
            ));
        }
        if !self.weights.iter().any(|&w| w > 0.0) {
            return Err(IhtError::InvalidArgument(
                "mixture needs at least one positive weight".into(),
            ));
        }
        Ok(())
    }

    fn max_weight(&self) -> f64 {
        self.weights.iter().copied().fold(0.0, f64::max)
    }

    /// Weights scaled so the largest is 1, tiny ones dropped; plus the scale.
    fn normalized(&self) -> (Vec<f64>, f64) {
        let max = self.max_weight();
        let w = self
            .weights
            .iter()
            .filter(|&&w| w > DROP_REL * max)
            .map(|&w| w / max)
            .collect();
        (w, max)
    }
}

/// `P(Σ ωᵢ Kᵢ > x)`.
///
/// Equal weights reduce to a scaled chi-squared and are evaluated in closed
/// form; everything else goes through [`imhof_sf`].
pub fn mixture_sf(x: f64, spec: &MixtureSpec) -> Result<f64> {
    spec.validate()?;
    if x <= 0.0 {
        return Ok(1.0);
    }
    let (w, scale) = spec.normalized();
    let xs = x / scale;
    if w.iter().all(|&v| (v - 1.0).abs() <= 1e-12) {
        return Ok(chisq_sf(xs, w.len()));
    }
    imhof_normalized(xs, &w, spec)
}

/// Imhof inversion without the equal-weight shortcut.
pub fn imhof_sf(x: f64, spec: &MixtureSpec) -> Result<f64> {
    spec.validate()?;
    if x <= 0.0 {
        return Ok(1.0);
    }
    let (w, scale) = spec.normalized();
    imhof_normalized(x / scale, &w, spec)
}

struct Integrand<'a> {
    w: &'a [f64],
    x: f64,
}

impl Integrand<'_> {
    fn theta(&self, u: f64) -> f64 {
        0.5 * self.w.iter().map(|&w| (w * u).atan()).sum::<f64>() - 0.5 * self.x * u
    }

    fn dtheta(&self, u: f64) -> f64 {
        0.5 * self
            .w
            .iter()
            .map(|&w| w / (1.0 + w * w * u * u))
            .sum::<f64>()
            - 0.5 * self.x
    }

    fn value(&self, u: f64) -> f64 {
        if u <= 0.0 {
            return self.dtheta(0.0);
        }
        let log_rho = 0.25 * self.w.iter().map(|&w| (w * w * u * u).ln_1p()).sum::<f64>();
        self.theta(u).sin() / u * (-log_rho).exp()
    }

    /// `(1/π) ∫_U^∞ 1/(u ρ(u)) du ≤ 1 / (π k U^k Π √ωᵢ)`, `k = m/2`.
    fn truncation_bound(&self, u: f64) -> f64 {
        let k = 0.5 * self.w.len() as f64;
        let log_prod: f64 = self.w.iter().map(|w| 0.5 * w.ln()).sum();
        let log_bound = -(std::f64::consts::PI.ln() + k.ln() + k * u.ln() + log_prod);
        log_bound.exp()
    }

    /// Location of the maximum of θ (0 when θ is decreasing from the start).
    fn argmax_theta(&self) -> f64 {
        if self.dtheta(0.0) <= 0.0 {
            return 0.0;
        }
        let mut hi = 1.0;
        while self.dtheta(hi) > 0.0 {
            hi *= 2.0;
        }
        let mut lo = 0.0;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.dtheta(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-15 * hi {
                break;
            }
        }
        0.5 * (lo + hi)
    }

    /// The `u > from` at which θ(u) = target, with θ decreasing past `from`.
    fn solve_theta(&self, target: f64, from: f64) -> f64 {
        let mut lo = from;
        let mut step = (2.0 * std::f64::consts::PI / self.x).max(1e-12);
        let mut hi = from + step;
        while self.theta(hi) > target {
            lo = hi;
            step *= 2.0;
            hi += step;
        }
        // Safeguarded Newton.
        let mut u = 0.5 * (lo + hi);
        for _ in 0..100 {
            let g = self.theta(u) - target;
            if g > 0.0 {
                lo = u;
            } else {
                hi = u;
            }
            let d = self.dtheta(u);
            let mut next = if d < 0.0 { u - g / d } else { f64::NAN };
            if !(next > lo && next < hi) {
                next = 0.5 * (lo + hi);
            }
            if (next - u).abs() <= 1e-14 * u.max(1.0) {
                return next;
            }
            u = next;
        }
        u
    }
}

fn imhof_normalized(x: f64, w: &[f64], spec: &MixtureSpec) -> Result<f64> {
    let g = Integrand { w, x };
    let f = |u: f64| g.value(u);
    let pi = std::f64::consts::PI;
    // Integral tolerance so the probability is accurate to PROB_ABS_TOL.
    let int_tol = PROB_ABS_TOL * pi;

    let u_star = g.argmax_theta();
    let mut err_total = 0.0;
    let mut head = 0.0;
    if u_star > 0.0 {
        let r = integrate(
            &f,
            0.0,
            u_star,
            0.25 * int_tol,
            spec.quad_rel_tol * 1e-2,
            spec.max_subdivisions,
        );
        if !r.converged {
            return Err(IhtError::Accuracy {
                estimate: r.error / pi,
            });
        }
        head = r.value;
        err_total += r.error;
    }

    let theta_max = g.theta(u_star);
    let mut target = (theta_max / pi).floor() * pi;
    if target >= theta_max {
        target -= pi;
    }

    let mut left = u_star;
    let mut sum = head;
    let mut sums: Vec<f64> = Vec::new();
    let mut last_est = f64::NAN;
    let mut agree = 0;
    for k in 0..MAX_HALF_PERIODS {
        let right = g.solve_theta(target, left);
        let r = integrate(
            &f,
            left,
            right,
            0.25 * int_tol,
            spec.quad_rel_tol * 1e-2,
            spec.max_subdivisions,
        );
        if !r.converged {
            return Err(IhtError::Accuracy {
                estimate: r.error / pi,
            });
        }
        err_total += r.error;
        sum += r.value;
        sums.push(sum);
        left = right;
        target -= pi;

        if g.truncation_bound(left) < 0.25 * PROB_ABS_TOL {
            return Ok(finish(sum, pi));
        }
        if r.value.abs() < 1e-3 * int_tol && k > 2 {
            return Ok(finish(sum, pi));
        }
        if sums.len() >= 6 {
            let window = &sums[sums.len().saturating_sub(40)..];
            let est = wynn_epsilon(window);
            if (est - last_est).abs() < 0.25 * int_tol {
                agree += 1;
                if agree >= 2 {
                    return Ok(finish(est, pi));
                }
            } else {
                agree = 0;
            }
            last_est = est;
        }
    }
    Err(IhtError::Accuracy {
        estimate: (err_total / pi).max(g.truncation_bound(left)),
    })
}

fn finish(integral: f64, pi: f64) -> f64 {
    (0.5 + integral / pi).clamp(0.0, 1.0)
}

/// Smallest `x` with `mixture_sf(x) <= prob`, by bisection to 1e-8.
pub fn mixture_quantile_upper(prob: f64, spec: &MixtureSpec) -> Result<f64> {
    bisect_upper(prob, |x| mixture_sf(x, spec))
}

/// Two-moment Satterthwaite approximation `a χ²_ν` matching mean and
/// variance of the mixture. Diagnostic only.
pub fn satterthwaite_sf(x: f64, spec: &MixtureSpec) -> Result<f64> {
    spec.validate()?;
    if x <= 0.0 {
        return Ok(1.0);
    }
    let s1: f64 = spec.weights.iter().sum();
    let s2: f64 = spec.weights.iter().map(|w| w * w).sum();
    let a = s2 / s1;
    let nu = s1 * s1 / s2;
    checked_gamma_ur(nu / 2.0, x / (2.0 * a)).map_err(|e| IhtError::Numerical(e.to_string()))
}

fn bisect_upper<F: Fn(f64) -> Result<f64>>(prob: f64, sf: F) -> Result<f64> {
    if !(prob > 0.0 && prob < 1.0) {
        return Err(IhtError::InvalidArgument(format!(
            "tail probability {prob} not in (0, 1)"
        )));
    }
    let mut lo = 0.0;
    let mut hi = 1.0;
    while sf(hi)? > prob {
        lo = hi;
        hi *= 2.0;
        if hi > 1e12 {
            return Err(IhtError::Numerical("quantile bracket overflow".into()));
        }
    }
    while hi - lo > 1e-8 * hi.max(1.0) {
        let mid = 0.5 * (lo + hi);
        if sf(mid)? > prob {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn spec(w: &[f64]) -> MixtureSpec {
        MixtureSpec::new(w.to_vec()).unwrap()
    }

    /// Closed form for even df: e^{-x/2} Σ_{k<df/2} (x/2)^k / k!.
    fn even_df_sf(x: f64, df: usize) -> f64 {
        let h = x / 2.0;
        let mut term = 1.0;
        let mut s = 1.0;
        for k in 1..df / 2 {
            term *= h / k as f64;
            s += term;
        }
        (-h).exp() * s
    }

    #[test]
    fn chisq_boundaries_and_closed_forms() {
        for m in 1..10 {
            assert_eq!(chisq_sf(0.0, m), 1.0);
            assert_eq!(chisq_sf(-3.0, m), 1.0);
        }
        for &df in &[2usize, 4, 6, 10] {
            for &x in &[0.1, 1.0, 5.0, 12.5, 40.0] {
                assert!((chisq_sf(x, df) - even_df_sf(x, df)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn chisq_table_values() {
        assert!((chisq_sf(12.52, 5) - 0.028).abs() < 1e-3);
        assert!((chisq_sf(2.238, 4) - 0.692).abs() < 1e-3);
        assert!((chisq_sf(19.08, 6) - 0.004).abs() < 1e-3);
    }

    #[test]
    fn chisq_quantile_inverts() {
        let q = chisq_quantile_upper(0.05, 3).unwrap();
        assert!((q - 7.814_727_903_251_178).abs() < 1e-6);
        assert!((chisq_sf(q, 3) - 0.05).abs() < 1e-8);
    }

    #[test]
    fn mixture_reduces_to_chisq() {
        for m in 1..6 {
            let s = spec(&vec![1.0; m]);
            for &x in &[1.0, 5.0, 20.0] {
                let want = chisq_sf(x, m);
                assert!((mixture_sf(x, &s).unwrap() - want).abs() < 1e-6);
                if m >= 2 {
                    let got = imhof_sf(x, &s).unwrap();
                    assert!((got - want).abs() < 1e-8, "m={m} x={x}: {got} vs {want}");
                }
            }
        }
    }

    #[test]
    fn half_weights_give_exponential() {
        let s = spec(&[0.5, 0.5]);
        let want = (-1.0f64).exp();
        assert!((mixture_sf(1.0, &s).unwrap() - want).abs() < 1e-6);
        assert!((imhof_sf(1.0, &s).unwrap() - want).abs() < 1e-9);
    }

    #[test]
    fn single_weight_matches_scaled_chisq() {
        for &w in &[0.01, 0.7, 3.0] {
            let s = spec(&[w]);
            for &x in &[0.05, 0.5, 2.0, 9.0] {
                let want = chisq_sf(x / w, 1);
                assert!((mixture_sf(x, &s).unwrap() - want).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn unequal_pair_matches_closed_form() {
        // Q = 2K₁ + K₂ by direct convolution quadrature.
        let s = spec(&[2.0, 1.0]);
        let x = 3.0;
        // P(Q ≤ x) = ∫₀^{x/2} f₁(s) F₂(x − 2s) ds with f₁ the χ²₁ density.
        let n = 200_000;
        let upper = x / 2.0;
        // s = upper·t² removes the s^{-1/2} singularity.
        let mut acc = 0.0;
        for i in 0..n {
            let t = (i as f64 + 0.5) / n as f64;
            let sv = upper * t * t;
            let dens = (-sv / 2.0).exp() / (2.0 * std::f64::consts::PI * sv).sqrt();
            let cdf = 1.0 - chisq_sf(x - 2.0 * sv, 1);
            acc += dens * cdf * 2.0 * upper * t;
        }
        let want = 1.0 - acc / n as f64;
        let got = mixture_sf(x, &s).unwrap();
        assert!((got - want).abs() < 1e-6, "{got} vs {want}");
    }

    #[test]
    fn tiny_weights_are_dropped() {
        let a = mixture_sf(2.0, &spec(&[1.0, 0.3])).unwrap();
        let b = mixture_sf(2.0, &spec(&[1.0, 0.3, 1e-14, 0.0])).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn invalid_specs() {
        assert!(MixtureSpec::new(vec![]).is_err());
        assert!(MixtureSpec::new(vec![0.0, 0.0]).is_err());
        assert!(MixtureSpec::new(vec![1.0, -0.5]).is_err());
        assert!(MixtureSpec::new(vec![f64::NAN]).is_err());
    }

    #[test]
    fn many_small_weights() {
        // The shape produced by the general-case test: a few near-1 weights
        // and many close to zero.
        let mut w = vec![0.97, 1.05, 0.9];
        w.extend((0..46).map(|i| 0.001 * (i as f64 + 1.0) / 46.0));
        let s = spec(&w);
        let p = mixture_sf(7.0, &s).unwrap();
        let approx = satterthwaite_sf(7.0, &s).unwrap();
        assert!((p - approx).abs() < 0.02, "{p} vs {approx}");
    }

    #[test]
    fn satterthwaite_exact_for_equal_weights() {
        let s = spec(&[2.0, 2.0, 2.0]);
        assert!((satterthwaite_sf(5.0, &s).unwrap() - chisq_sf(2.5, 3)).abs() < 1e-12);
    }

    #[test]
    fn quantile_round_trip() {
        let s = spec(&[1.0, 0.5, 0.2]);
        let q = mixture_quantile_upper(0.05, &s).unwrap();
        assert!((mixture_sf(q, &s).unwrap() - 0.05).abs() < 1e-7);
    }

    #[test]
    fn monotone_on_grid() {
        let s = spec(&[1.3, 0.4, 0.05, 0.02]);
        let mut prev = 1.0;
        for i in 0..100 {
            let x = 0.1 + 0.25 * i as f64;
            let v = mixture_sf(x, &s).unwrap();
            assert!((0.0..=1.0).contains(&v));
            assert!(v <= prev + 1e-9, "inversion at x={x}: {v} > {prev}");
            prev = v;
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn scale_equivariance(
            w in proptest::collection::vec(0.01f64..3.0, 1..6),
            x in 0.05f64..15.0,
            c in prop_oneof![Just(0.1f64), Just(1.0), Just(10.0)],
        ) {
            let base = mixture_sf(x, &spec(&w)).unwrap();
            let scaled: Vec<f64> = w.iter().map(|v| v * c).collect();
            let other = mixture_sf(c * x, &spec(&scaled)).unwrap();
            prop_assert!((base - other).abs() < 1e-8);
        }

        #[test]
        fn in_unit_interval(w in proptest::collection::vec(0.0f64..5.0, 1..10), x in -1.0f64..60.0) {
            prop_assume!(w.iter().any(|&v| v > 1e-3));
            let v = mixture_sf(x, &spec(&w)).unwrap();
            prop_assert!((0.0..=1.0).contains(&v));
        }
    }
}
