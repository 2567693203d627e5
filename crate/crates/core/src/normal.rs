//! Standard normal density and distribution function.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

/// 1/√(2π)
pub const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Arguments beyond this magnitude are clamped; φ and Φ are saturated there.
pub const SATURATION: f64 = 40.0;

#[inline]
pub fn pdf(x: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Φ(x) through erfc, which keeps full relative accuracy in the lower tail.
#[inline]
pub fn cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

/// Log of the standard d-variate normal density at `z`.
pub fn log_pdf_multi(z: &[f64]) -> f64 {
    let sq: f64 = z.iter().map(|v| v * v).sum();
    -0.5 * sq - 0.5 * z.len() as f64 * (2.0 * PI).ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_values() {
        assert!((pdf(0.0) - 0.398_942_280_4).abs() < 1e-10);
        assert_eq!(cdf(0.0), 0.5);
        // Φ(1.96) from standard tables
        assert!((cdf(1.96) - 0.975_002_104_851_780).abs() < 1e-13);
        assert!((cdf(-1.0) - 0.158_655_253_931_457).abs() < 1e-13);
        assert_eq!(cdf(SATURATION), 1.0);
        assert!(cdf(-SATURATION) < 1e-300);
    }

    #[test]
    fn symmetry() {
        for i in 0..100 {
            let x = -5.0 + 0.1 * i as f64;
            assert!((cdf(x) + cdf(-x) - 1.0).abs() < 1e-15);
        }
    }
}
