//! Error function and standard-normal helpers.
//!
//! Tail probabilities always go through `erfc` so that intervals far from
//! the mode keep full relative precision.

use std::f64::consts::FRAC_1_SQRT_2;

pub use crate::erf::{erf, erfc};

/// 1 / sqrt(2 pi)
pub const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Standard normal density.
#[inline]
pub fn norm_pdf(x: f64) -> f64 {
    if x.is_infinite() {
        return 0.0;
    }
    FRAC_1_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Standard normal CDF.
#[inline]
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * erfc(-x * FRAC_1_SQRT_2)
}

/// Upper tail `P(Z > x)` for a standard normal `Z`.
#[inline]
pub fn norm_sf(x: f64) -> f64 {
    0.5 * erfc(x * FRAC_1_SQRT_2)
}

/// `P(a < Z < b)` without cancellation in either tail.
pub fn norm_mass(a: f64, b: f64) -> f64 {
    if a >= b {
        return 0.0;
    }
    if a >= 0.0 {
        norm_sf(a) - norm_sf(b)
    } else if b <= 0.0 {
        norm_sf(-b) - norm_sf(-a)
    } else {
        1.0 - norm_sf(b) - norm_sf(-a)
    }
}

/// Positive half of the 16-point Gauss-Legendre rule on [-1, 1].
const GL16: [(f64, f64); 8] = [
    (0.09501250983763745, 0.18945061045506859),
    (0.2816035507792589, 0.1826034150449236),
    (0.45801677765722737, 0.16915651939500262),
    (0.6178762444026438, 0.14959598881657676),
    (0.755404408355003, 0.12462897125553403),
    (0.8656312023878318, 0.09515851168249259),
    (0.9445750230732326, 0.062253523938647706),
    (0.9894009349916499, 0.027152459411754037),
];

/// Composite 16-point Gauss-Legendre over a finite `[a, b]`, using panels no
/// wider than `max_panel`.
///
/// For the smooth integrands used here (polynomial times Gaussian or
/// exponential, restricted to a sign-pure piece) each panel is accurate to a
/// few ulps relative, which is what distortion differences near a fixed point
/// need.
pub fn gauss_legendre<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, max_panel: f64) -> f64 {
    debug_assert!(a.is_finite() && b.is_finite());
    if a >= b {
        return 0.0;
    }
    let panels = ((b - a) / max_panel).ceil().max(1.0) as usize;
    let width = (b - a) / panels as f64;
    let mut sum = NeumaierSum::default();
    for p in 0..panels {
        let lo = a + width * p as f64;
        let hi = if p + 1 == panels { b } else { lo + width };
        let half = 0.5 * (hi - lo);
        let mid = lo + half;
        let mut panel = 0.0;
        for &(x, w) in GL16.iter().rev() {
            panel += w * (f(mid - half * x) + f(mid + half * x));
        }
        sum.add(half * panel);
    }
    sum.total()
}

/// Compensated (Kahan-Babuska-Neumaier) summation.
#[derive(Debug, Default, Clone, Copy)]
pub struct NeumaierSum {
    sum: f64,
    compensation: f64,
}

impl NeumaierSum {
    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.compensation += (self.sum - t) + x;
        } else {
            self.compensation += (x - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn total(&self) -> f64 {
        self.sum + self.compensation
    }
}

impl FromIterator<f64> for NeumaierSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = NeumaierSum::default();
        for x in iter {
            s.add(x);
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    // Reference values from mpmath at 50 digits.
    const ERF_TABLE: [(f64, f64); 20] = [
        (-3.0, -0.99997790950300141456),
        (-2.0, -0.99532226501895273416),
        (-1.5, -0.96610514647531072707),
        (-1.0, -0.84270079294971486934),
        (-0.5, -0.52049987781304653768),
        (-0.1, -0.1124629160182848984),
        (0.0, 0.0),
        (1e-08, 1.1283791670955125599e-8),
        (0.05, 0.056371977797016626955),
        (0.1, 0.1124629160182848984),
        (0.25, 0.27632639016823693299),
        (0.5, 0.52049987781304653768),
        (0.75, 0.7111556336535151316),
        (0.84375, 0.76722566123234163346),
        (1.0, 0.84270079294971486934),
        (1.25, 0.92290012825645823014),
        (1.5, 0.96610514647531072707),
        (2.0, 0.99532226501895273416),
        (2.5, 0.99959304798255504106),
        (3.5, 0.99999925690162765859),
    ];

    #[test]
    fn erf_matches_reference_table() {
        for &(x, want) in &ERF_TABLE {
            let got = erf(x);
            assert!((got - want).abs() <= 1e-12, "erf({x}) = {got}, want {want}");
        }
    }

    #[test]
    fn erfc_keeps_relative_precision_in_tail() {
        // erfc(5) and erfc(10) from mpmath.
        let cases = [(5.0, 1.5374597944280348502e-12), (10.0, 2.0884875837625447570e-45)];
        for (x, want) in cases {
            let rel = (erfc(x) - want).abs() / want;
            assert!(rel < 1e-13, "erfc({x}) rel err {rel}");
        }
    }

    #[test]
    fn norm_mass_is_additive() {
        let (a, c, b) = (-1.3, 0.4, 7.5);
        let lhs = norm_mass(a, b);
        let rhs = norm_mass(a, c) + norm_mass(c, b);
        assert!((lhs - rhs).abs() < 1e-15);
        assert!((norm_mass(f64::NEG_INFINITY, f64::INFINITY) - 1.0).abs() < 1e-16);
    }

    #[test]
    fn gauss_legendre_integrates_polynomials_exactly() {
        let v = gauss_legendre(|x| x.powi(7) - 3.0 * x * x + 1.0, -1.0, 2.0, 10.0);
        let exact = (2f64.powi(8) - 1.0) / 8.0 - (8.0 + 1.0) + 3.0;
        assert!((v - exact).abs() < 1e-12);
    }

    #[test]
    fn neumaier_recovers_small_terms() {
        let s: NeumaierSum = [1.0, 1e-16, -1.0, 1e-16].into_iter().collect();
        assert_eq!(s.total(), 2e-16);
    }
}
