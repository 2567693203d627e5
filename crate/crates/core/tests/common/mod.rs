//! Independent numerical oracles shared by the integration tests.

#![allow(dead_code, clippy::excessive_precision)]

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

const GK_NODES: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
];
const GK_WEIGHTS: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const G_WEIGHTS: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

/// 15-point Kronrod estimate and its difference from the embedded 7-point Gauss rule.
fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = GK_WEIGHTS[7] * fc;
    let mut gauss = G_WEIGHTS[3] * fc;
    for j in 0..7 {
        let x = h * GK_NODES[j];
        let s = f(c - x) + f(c + x);
        kronrod += GK_WEIGHTS[j] * s;
        if j % 2 == 1 {
            gauss += G_WEIGHTS[j / 2] * s;
        }
    }
    (kronrod * h, ((kronrod - gauss) * h).abs())
}

/// Globally adaptive Gauss–Kronrod (15/7) quadrature on `[a, b]`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let (v, e) = gk15(&f, a, b);
    let mut intervals = vec![(a, b, v, e)];
    for _ in 0..2000 {
        let total_err: f64 = intervals.iter().map(|t| t.3).sum();
        if total_err <= tol {
            break;
        }
        let (worst, _) = intervals
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .unwrap();
        let (lo, hi, _, _) = intervals.swap_remove(worst);
        let mid = 0.5 * (lo + hi);
        let (v1, e1) = gk15(&f, lo, mid);
        let (v2, e2) = gk15(&f, mid, hi);
        intervals.push((lo, mid, v1, e1));
        intervals.push((mid, hi, v2, e2));
    }
    intervals.iter().map(|t| t.2).sum()
}

/// Probabilists' Gauss–Hermite rule: `Σ wᵢ f(xᵢ) ≈ ∫ f φ`, exact for polynomials
/// of degree `< 2n`. Golub–Welsch supplies starting nodes; Newton on `He_n` polishes
/// them and the weights come from `wᵢ = n! / (n He_{n−1}(xᵢ))²`.
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut j = DMatrix::zeros(n, n);
    for k in 1..n {
        let b = (k as f64).sqrt();
        j[(k - 1, k)] = b;
        j[(k, k - 1)] = b;
    }
    let mut nodes: Vec<f64> = SymmetricEigen::new(j).eigenvalues.iter().copied().collect();
    nodes.sort_by(|a, b| a.total_cmp(b));
    // (He_n(x), He_{n-1}(x)) by the three-term recurrence
    let he = |x: f64| {
        let (mut prev, mut cur) = (1.0, x);
        for k in 1..n {
            let next = x * cur - k as f64 * prev;
            prev = cur;
            cur = next;
        }
        (cur, prev)
    };
    let fact: f64 = (1..=n).map(|k| k as f64).product();
    let weights = nodes
        .iter_mut()
        .map(|x| {
            for _ in 0..5 {
                let (h, hm1) = he(*x);
                *x -= h / (n as f64 * hm1);
            }
            let (_, hm1) = he(*x);
            fact / (n as f64 * hm1).powi(2)
        })
        .collect();
    (nodes, weights)
}

/// Neumaier-compensated sum.
pub fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let (mut sum, mut c) = (0.0f64, 0.0f64);
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            c += (sum - t) + v;
        } else {
            c += (v - t) + sum;
        }
        sum = t;
    }
    sum + c
}

/// Probabilists' Hermite polynomial by its explicit sum, independent of the crate.
pub fn hermite_explicit(n: usize, x: f64) -> f64 {
    let mut total = 0.0;
    for m in 0..=n / 2 {
        let mut coef = 1.0;
        for k in 1..=n {
            coef *= k as f64;
        }
        let mut denom = 1.0;
        for k in 1..=m {
            denom *= k as f64;
        }
        for k in 1..=(n - 2 * m) {
            denom *= k as f64;
        }
        let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
        total += sign * coef / (denom * 2f64.powi(m as i32)) * x.powi((n - 2 * m) as i32);
    }
    total
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Coefficient vector of length `m` with Euclidean norm uniform in `[0, radius]`.
pub fn random_theta(rng: &mut ChaCha8Rng, m: usize, radius: f64) -> Vec<f64> {
    let v: Vec<f64> = (0..m).map(|_| rng.sample(StandardNormal)).collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-300);
    let r = radius * rng.random::<f64>();
    v.into_iter().map(|x| x * r / norm).collect()
}

pub fn normal_samples(rng: &mut ChaCha8Rng, n: usize, d: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, d, |_, _| rng.sample(StandardNormal))
}

pub fn phi(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}
