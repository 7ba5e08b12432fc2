//! Standard normal helpers used by the probit and selection models.

use statrs::distribution::{ContinuousCDF, Normal};
use libm::erfc;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Below this argument the inverse Mills ratio switches to a continued fraction.
const MILLS_SWITCH: f64 = -8.0;

pub fn pdf(z: f64) -> f64 {
    (-0.5 * z * z - LN_SQRT_2PI).exp()
}

pub fn cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// Upper tail `1 - Φ(z)` without cancellation.
pub fn sf(z: f64) -> f64 {
    0.5 * erfc(z / std::f64::consts::SQRT_2)
}

/// `ln Φ(z)`, finite for any finite `z`.
pub fn ln_cdf(z: f64) -> f64 {
    if z < -5.0 {
        -0.5 * z * z - LN_SQRT_2PI - inverse_mills(z).ln()
    } else if z < 0.0 {
        cdf(z).ln()
    } else {
        (-sf(z)).ln_1p()
    }
}

pub fn quantile(p: f64) -> f64 {
    Normal::standard().inverse_cdf(p)
}

/// Two-sided p-value of a z (or large-sample t) statistic.
pub fn two_sided_p(t: f64) -> f64 {
    if t.is_nan() {
        return f64::NAN;
    }
    2.0 * sf(t.abs())
}

/// Mills ratio `(1 - Φ(x)) / φ(x)` for large positive `x` by Laplace's continued fraction.
fn mills_ratio_tail(x: f64) -> f64 {
    let mut acc = x;
    for k in (1..=80).rev() {
        acc = x + k as f64 / acc;
    }
    1.0 / acc
}

/// Inverse Mills ratio `λ(z) = φ(z) / Φ(z)`.
///
/// For `z < -8` the ratio is evaluated through the tail continued fraction,
/// which tends to `-z` and never overflows.
pub fn inverse_mills(z: f64) -> f64 {
    if z < MILLS_SWITCH {
        1.0 / mills_ratio_tail(-z)
    } else {
        pdf(z) / cdf(z)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mills_at_zero() {
        // φ(0) / 0.5 = 2 / sqrt(2π)
        let expected = 2.0 / (2.0 * std::f64::consts::PI).sqrt();
        assert!((expected - 0.797_884_560_8).abs() < 1e-10);
        assert!((inverse_mills(0.0) - expected).abs() < 1e-12);
    }

    #[test]
    fn mills_positive_and_decreasing() {
        let mut prev = f64::INFINITY;
        let mut z = -45.0;
        while z <= 10.0 {
            let l = inverse_mills(z);
            assert!(l > 0.0 && l.is_finite(), "λ({z}) = {l}");
            assert!(l < prev, "not decreasing at {z}");
            prev = l;
            z += 0.05;
        }
    }

    #[test]
    fn mills_far_tail() {
        let l = inverse_mills(-40.0);
        assert!(l.is_finite());
        // λ(z) = -z + 1/(-z) - 2/(-z)^3 + ...
        let x = 40.0_f64;
        let asymptotic = x + 1.0 / x - 2.0 / x.powi(3);
        assert!((l - asymptotic).abs() < 1e-6, "{l} vs {asymptotic}");
    }

    #[test]
    fn mills_branches_agree_at_switch() {
        let direct = pdf(-8.0) / cdf(-8.0);
        let tail = 1.0 / mills_ratio_tail(8.0);
        assert!((direct - tail).abs() / direct < 1e-12);
    }

    #[test]
    fn ln_cdf_matches_direct_where_safe() {
        for z in [-4.9, -2.0, 0.0, 1.5, 6.0] {
            assert!((ln_cdf(z) - cdf(z).ln()).abs() < 1e-12);
        }
        assert!((ln_cdf(-5.01) - cdf(-5.01).ln()).abs() < 1e-9);
        assert!(ln_cdf(-60.0).is_finite());
    }

    #[test]
    fn p_values() {
        assert!((two_sided_p(1.959_963_984_540_054) - 0.05).abs() < 1e-12);
        assert!(two_sided_p(3.5) < 0.001);
    }
}
