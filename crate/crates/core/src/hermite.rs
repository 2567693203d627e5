//! Probabilists' Hermite polynomials and the Gaussian-weighted lower integrals
//! used by the closed-form CDF.
//!
//! `H_n` is evaluated with the three-term recurrence
//! `H_{n+1}(z) = z H_n(z) - n H_{n-1}(z)`, `H_0 = 1`, `H_1 = z`.

use crate::error::{Result, SnpError};
use crate::normal;

/// Largest order accepted by the product linearization (and therefore by the CDF).
pub const MAX_LINEARIZATION_ORDER: usize = 16;

/// `H_0(z), ..., H_K(z)` for a single point.
#[derive(Debug, Clone, PartialEq)]
pub struct HermiteTable {
    max_order: usize,
    values: Vec<f64>,
}

impl HermiteTable {
    pub fn new(max_order: usize, z: f64) -> Self {
        let mut values = vec![0.0; max_order + 1];
        fill(z, &mut values);
        Self { max_order, values }
    }

    pub fn max_order(&self) -> usize {
        self.max_order
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn get(&self, n: usize) -> f64 {
        self.values[n]
    }
}

/// Fills `out[n] = H_n(z)` for `n < out.len()`.
#[inline]
pub fn fill(z: f64, out: &mut [f64]) {
    if out.is_empty() {
        return;
    }
    out[0] = 1.0;
    if out.len() > 1 {
        out[1] = z;
    }
    for n in 1..out.len().saturating_sub(1) {
        out[n + 1] = z * out[n] - n as f64 * out[n - 1];
    }
}

pub fn hermite_eval(n: usize, z: f64) -> f64 {
    let (mut prev, mut cur) = (1.0, z);
    if n == 0 {
        return prev;
    }
    for k in 1..n {
        let next = z * cur - k as f64 * prev;
        prev = cur;
        cur = next;
    }
    cur
}

pub fn hermite_eval_all(max_order: usize, z: f64) -> HermiteTable {
    HermiteTable::new(max_order, z)
}

/// `G_n(x) = ∫_{-∞}^x φ(t) H_n(t) dt`: `Φ(x)` for `n = 0`, `-H_{n-1}(x) φ(x)` otherwise.
pub fn gaussian_lower_integral(n: usize, x: f64) -> f64 {
    let x = x.clamp(-normal::SATURATION, normal::SATURATION);
    if n == 0 {
        normal::cdf(x)
    } else {
        -hermite_eval(n - 1, x) * normal::pdf(x)
    }
}

/// `G_0(x), ..., G_{max}(x)` sharing one recurrence and one φ evaluation.
pub fn gaussian_lower_integrals(max: usize, x: f64) -> Vec<f64> {
    let x = x.clamp(-normal::SATURATION, normal::SATURATION);
    let mut h = vec![0.0; max.max(1)];
    fill(x, &mut h);
    let phi = normal::pdf(x);
    let mut out = Vec::with_capacity(max + 1);
    out.push(normal::cdf(x));
    out.extend(h.iter().take(max).map(|hn| -hn * phi));
    out
}

fn binomial(n: u64, k: u64) -> u64 {
    let k = k.min(n - k);
    let mut acc = 1u64;
    for i in 0..k {
        // exact at every step: acc * (n - i) is divisible by (i + 1)
        acc = acc * (n - i) / (i + 1);
    }
    acc
}

/// Terms `(i + j - 2k, k! C(i,k) C(j,k))` of `H_i H_j = Σ_k k! C(i,k) C(j,k) H_{i+j-2k}`,
/// ordered by descending polynomial order.
pub fn hermite_product_linearization(i: usize, j: usize) -> Result<Vec<(usize, u64)>> {
    let top = i.max(j);
    if top > MAX_LINEARIZATION_ORDER {
        return Err(SnpError::InvalidOrder {
            order: top,
            reason: "exceeds the exact linearization limit of 16",
        });
    }
    let mut terms = Vec::with_capacity(i.min(j) + 1);
    let mut k_fact = 1u64;
    for k in 0..=i.min(j) {
        if k > 0 {
            k_fact *= k as u64;
        }
        let coef = k_fact * binomial(i as u64, k as u64) * binomial(j as u64, k as u64);
        terms.push((i + j - 2 * k, coef));
    }
    Ok(terms)
}

/// `J_{p,q}(x) = ∫_{-∞}^x φ H_p H_q = Σ_k k! C(p,k) C(q,k) G_{p+q-2k}(x)`.
pub fn crossed_lower_integral(p: usize, q: usize, x: f64) -> Result<f64> {
    let g = gaussian_lower_integrals(p + q, x);
    crossed_from_table(p, q, &g)
}

/// Same as [`crossed_lower_integral`] but reads `G_n(x)` from a precomputed table.
pub fn crossed_from_table(p: usize, q: usize, g: &[f64]) -> Result<f64> {
    Ok(hermite_product_linearization(p, q)?
        .into_iter()
        .map(|(order, coef)| coef as f64 * g[order])
        .sum())
}

/// Memoized `J_{p,q}(x)` for all `p, q <= max_order` at a single point.
#[derive(Debug, Clone)]
pub struct CrossedTable {
    stride: usize,
    values: Vec<f64>,
}

impl CrossedTable {
    pub fn new(max_order: usize, x: f64) -> Result<Self> {
        let g = gaussian_lower_integrals(2 * max_order, x);
        let stride = max_order + 1;
        let mut values = vec![0.0; stride * stride];
        for p in 0..=max_order {
            for q in p..=max_order {
                let v = crossed_from_table(p, q, &g)?;
                values[p * stride + q] = v;
                values[q * stride + p] = v;
            }
        }
        Ok(Self { stride, values })
    }

    #[inline]
    pub fn get(&self, p: usize, q: usize) -> f64 {
        self.values[p * self.stride + q]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eval_examples() {
        assert_eq!(hermite_eval(2, 0.0), -1.0);
        assert_eq!(hermite_eval(0, 7.3), 1.0);
        assert_eq!(hermite_eval(4, 2.0), -5.0);
        assert_eq!(hermite_eval(1, -3.5), -3.5);
    }

    #[test]
    fn eval_all_examples() {
        assert_eq!(hermite_eval_all(2, 1.0).values(), &[1.0, 1.0, 0.0]);
        assert_eq!(hermite_eval_all(0, 5.0).values(), &[1.0]);
        assert_eq!(hermite_eval_all(3, -1.0).values(), &[1.0, -1.0, 0.0, 2.0]);
    }

    #[test]
    fn table_matches_scalar_eval() {
        for &z in &[-2.7, -0.3, 0.0, 1.1, 4.2] {
            let t = hermite_eval_all(12, z);
            for n in 0..=12 {
                assert_eq!(t.get(n), hermite_eval(n, z));
            }
        }
    }

    #[test]
    fn explicit_polynomials() {
        // H_3 = z^3 - 3z, H_4 = z^4 - 6z^2 + 3, H_5 = z^5 - 10z^3 + 15z
        for &z in &[-1.7, 0.4, 2.2] {
            let z2 = z * z;
            assert!((hermite_eval(3, z) - (z2 * z - 3.0 * z)).abs() < 1e-12);
            assert!((hermite_eval(4, z) - (z2 * z2 - 6.0 * z2 + 3.0)).abs() < 1e-12);
            assert!((hermite_eval(5, z) - (z2 * z2 * z - 10.0 * z2 * z + 15.0 * z)).abs() < 1e-11);
        }
    }

    #[test]
    fn lower_integral_examples() {
        assert_eq!(gaussian_lower_integral(0, 0.0), 0.5);
        assert!((gaussian_lower_integral(1, 0.0) + 0.398_942_280_4).abs() < 1e-10);
        assert_eq!(gaussian_lower_integral(3, f64::INFINITY), 0.0);
        assert_eq!(gaussian_lower_integral(0, f64::INFINITY), 1.0);
        assert_eq!(gaussian_lower_integral(0, f64::NEG_INFINITY), 0.0);
        let batch = gaussian_lower_integrals(6, 0.8);
        for (n, g) in batch.iter().enumerate() {
            assert_eq!(*g, gaussian_lower_integral(n, 0.8));
        }
    }

    #[test]
    fn linearization_examples() {
        assert_eq!(
            hermite_product_linearization(1, 1).unwrap(),
            vec![(2, 1), (0, 1)]
        );
        assert_eq!(hermite_product_linearization(0, 5).unwrap(), vec![(5, 1)]);
        assert_eq!(
            hermite_product_linearization(2, 2).unwrap(),
            vec![(4, 1), (2, 4), (0, 2)]
        );
        assert!(hermite_product_linearization(17, 2).is_err());
        // largest coefficient at the cap is still exact
        let top = hermite_product_linearization(16, 16).unwrap();
        assert_eq!(top.last().unwrap(), &(0, 20_922_789_888_000));
    }

    #[test]
    fn crossed_examples() {
        assert_eq!(crossed_lower_integral(0, 0, 0.0).unwrap(), 0.5);
        assert_eq!(crossed_lower_integral(1, 1, f64::INFINITY).unwrap(), 1.0);
        // J_{p,q}(+∞) = p! δ_pq
        assert_eq!(crossed_lower_integral(3, 3, 1e6).unwrap(), 6.0);
        assert_eq!(crossed_lower_integral(3, 2, 1e6).unwrap(), 0.0);
    }

    #[test]
    fn crossed_table_matches_direct() {
        let t = CrossedTable::new(6, -0.35).unwrap();
        for p in 0..=6 {
            for q in 0..=6 {
                assert_eq!(t.get(p, q), crossed_lower_integral(p, q, -0.35).unwrap());
            }
        }
    }
}
