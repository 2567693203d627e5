mod common;

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::Rng;
use snp::density::{normalization, SnpDensity};
use snp::{build_index_set, SnpError, WhiteningTransform};

use common::{gauss_hermite, integrate, normal_samples, phi, random_theta, rng};

fn random_density(seed: u64, d: usize, order: usize, radius: f64) -> SnpDensity {
    let set = build_index_set(d, order).unwrap();
    let mut r = rng(seed);
    let theta = random_theta(&mut r, set.len(), radius);
    SnpDensity::new(set, theta, None).unwrap()
}

/// `∫ f(z) φ(z) dz` over `R^d` by a tensor Gauss–Hermite grid.
fn gh_tensor<F: Fn(&[f64]) -> f64>(d: usize, nodes: usize, f: F) -> f64 {
    let (x, w) = gauss_hermite(nodes);
    let mut idx = vec![0usize; d];
    let mut total = 0.0;
    let mut z = vec![0.0; d];
    loop {
        let mut weight = 1.0;
        for k in 0..d {
            z[k] = x[idx[k]];
            weight *= w[idx[k]];
        }
        total += weight * f(&z);
        let mut k = 0;
        while k < d {
            idx[k] += 1;
            if idx[k] < nodes {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
        if k == d {
            return total;
        }
    }
}

fn gaussian_weight(z: &[f64]) -> f64 {
    z.iter().map(|&x| phi(x)).product()
}

#[test]
fn integrates_to_one() {
    for (seed, d, order) in [(1, 1, 6), (2, 2, 4), (3, 3, 3), (4, 2, 6)] {
        let dens = random_density(seed, d, order, 1.5);
        let total = gh_tensor(d, 2 * order + 2, |z| dens.pdf_whitened(z).unwrap() / gaussian_weight(z));
        assert!((total - 1.0).abs() < 1e-12, "d={d} K={order}: {total}");
    }
}

#[test]
fn normalization_matches_monte_carlo() {
    let dens = random_density(11, 2, 4, 1.0);
    let mut r = rng(12);
    let z = normal_samples(&mut r, 200_000, 2);
    let vals: Vec<f64> = (0..z.nrows())
        .map(|i| {
            let row: Vec<f64> = z.row(i).iter().copied().collect();
            dens.polynomial_value(&row).unwrap().powi(2)
        })
        .collect();
    let n = vals.len() as f64;
    let mean = vals.iter().sum::<f64>() / n;
    let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let se = (var / n).sqrt();
    assert!((mean - dens.normalization()).abs() < 5.0 * se, "{mean} vs {}", dens.normalization());
}

#[test]
fn gaussian_reference_values() {
    let set = build_index_set(1, 4).unwrap();
    let g = SnpDensity::gaussian(set);
    assert!((g.pdf_whitened(&[0.0]).unwrap() - 0.3989422804014327).abs() < 1e-15);
    assert!((g.cdf_whitened(&[0.0]).unwrap() - 0.5).abs() < 1e-15);
    assert!((g.cdf_whitened(&[50.0]).unwrap() - 1.0).abs() < 1e-15);
}

#[test]
fn full_space_box_is_one_and_empty_box_is_zero() {
    let dens = random_density(5, 3, 4, 1.0);
    let inf = f64::INFINITY;
    let p = dens.box_probability(&[-inf; 3], &[inf; 3], &[0, 1, 2]).unwrap();
    assert!((p - 1.0).abs() < 1e-12);
    let p = dens.box_probability(&[0.3, -1.0], &[0.3, 2.0], &[2, 0]).unwrap();
    assert_eq!(p, 0.0);
}

#[test]
fn univariate_box_matches_quadrature() {
    let dens = random_density(21, 1, 8, 1.0);
    let (a, b) = (-0.7, 1.9);
    let exact = integrate(|t| dens.pdf_whitened(&[t]).unwrap(), a, b, 1e-13);
    let p = dens.box_probability(&[a], &[b], &[0]).unwrap();
    assert!((p - exact).abs() < 1e-10, "{p} vs {exact}");
}

#[test]
fn bivariate_box_matches_nested_quadrature() {
    let dens = random_density(22, 2, 4, 1.0);
    let (lo, hi) = ([-1.0, 0.0], [-0.5, 2.0]);
    let exact = integrate(
        |x| integrate(|y| dens.pdf_whitened(&[x, y]).unwrap(), lo[1], hi[1], 1e-13),
        lo[0],
        hi[0],
        1e-12,
    );
    let p = dens.box_probability(&lo, &hi, &[0, 1]).unwrap();
    assert!((p - exact).abs() < 1e-9, "{p} vs {exact}");
}

#[test]
fn marginal_respects_keep_order() {
    let dens = random_density(31, 3, 4, 1.0);
    let m01 = dens.marginal(&[0, 2]).unwrap();
    let m10 = dens.marginal(&[2, 0]).unwrap();
    for &(a, b) in &[(0.1, -0.4), (1.2, 0.7), (-2.0, 0.3)] {
        let x = m01.pdf(&[a, b]).unwrap();
        let y = m10.pdf(&[b, a]).unwrap();
        assert!((x - y).abs() < 1e-14);
        let x = m01.cdf(&[a, b]).unwrap();
        let y = m10.cdf(&[b, a]).unwrap();
        assert!((x - y).abs() < 1e-14);
    }
}

#[test]
fn marginal_matches_gauss_hermite_integration() {
    let dens = random_density(32, 3, 5, 1.0);
    let m = dens.marginal(&[1]).unwrap();
    for &y in &[-2.5, -0.3, 0.0, 1.1, 2.9] {
        let exact = gh_tensor(2, 12, |r| dens.pdf_whitened(&[r[0], y, r[1]]).unwrap() / gaussian_weight(r));
        let v = m.pdf(&[y]).unwrap();
        assert!((v - exact).abs() < 1e-12, "y={y}: {v} vs {exact}");
    }
}

#[test]
fn marginal_rejects_bad_keep_sets() {
    let dens = random_density(33, 3, 3, 0.5);
    assert!(matches!(dens.marginal(&[]), Err(SnpError::EmptyKeep)));
    assert!(matches!(dens.marginal(&[0, 3]), Err(SnpError::CoordinateOutOfRange { .. })));
    assert!(matches!(dens.marginal(&[1, 1]), Err(SnpError::DuplicateCoordinate(1))));
}

#[test]
fn box_rejects_inverted_bounds() {
    let dens = random_density(34, 2, 3, 0.5);
    let err = dens.box_probability(&[1.0, 0.0], &[0.0, 1.0], &[0, 1]).unwrap_err();
    assert!(matches!(err, SnpError::InvertedBounds { axis: 0, .. }));
}

#[test]
fn raw_pdf_includes_jacobian() {
    let set = build_index_set(2, 4).unwrap();
    let mut r = rng(41);
    let theta = random_theta(&mut r, set.len(), 1.0);
    let mean = DVector::from_vec(vec![0.5, -1.0]);
    let cov = DMatrix::from_row_slice(2, 2, &[4.0, 1.2, 1.2, 2.0]);
    let w = WhiteningTransform::from_moments(mean, &cov).unwrap();
    let dens = SnpDensity::new(set, theta, Some(w.clone())).unwrap();
    let x = [1.3, 0.2];
    let z = w.whiten(&x);
    let jac = 1.0 / (4.0f64 * 2.0 - 1.2 * 1.2).sqrt();
    let expected = dens.pdf_whitened(&z).unwrap() * jac;
    assert!((dens.pdf(&x).unwrap() - expected).abs() < 1e-14);
}

#[test]
fn raw_box_with_diagonal_factor() {
    let set = build_index_set(2, 4).unwrap();
    let mut r = rng(42);
    let theta = random_theta(&mut r, set.len(), 1.0);
    let mean = DVector::from_vec(vec![1.0, 2.0]);
    let w = WhiteningTransform::from_factor(mean, DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 0.5]))).unwrap();
    let dens = SnpDensity::new(set, theta, Some(w)).unwrap();
    let raw = dens.box_probability_raw(&[0.0, 1.5], &[3.0, 2.5], &[0, 1]).unwrap();
    let white = dens.box_probability(&[-0.5, -1.0], &[1.0, 1.0], &[0, 1]).unwrap();
    assert!((raw - white).abs() < 1e-14);
}

#[test]
fn raw_box_rejects_correlated_factor() {
    let set = build_index_set(2, 2).unwrap();
    let cov = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0]);
    let w = WhiteningTransform::from_moments(DVector::zeros(2), &cov).unwrap();
    let dens = SnpDensity::gaussian(set).with_whitening(w).unwrap();
    assert!(matches!(
        dens.box_probability_raw(&[0.0, 0.0], &[1.0, 1.0], &[0, 1]),
        Err(SnpError::UnsupportedGeometry(_))
    ));
}

#[test]
fn file_roundtrip_and_mismatch() {
    let dens = random_density(51, 3, 4, 1.0);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.json");
    dens.save(&path).unwrap();
    let back = SnpDensity::load(&path).unwrap();
    assert_eq!(back.theta(), dens.theta());
    assert_eq!(back.normalization(), dens.normalization());
    assert_eq!(back.index_set(), dens.index_set());

    let mut file = dens.to_file();
    file.normalization += 1e-6;
    assert!(matches!(SnpDensity::from_file(file), Err(SnpError::NormalizationMismatch { .. })));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn normalization_is_one_plus_weighted_square(seed in 0u64..10_000, d in 1usize..=3, order in 2usize..=6) {
        let set = build_index_set(d, order).unwrap();
        let mut r = rng(seed);
        let theta = random_theta(&mut r, set.len(), 2.0);
        let direct: f64 = 1.0 + theta.iter().zip(set.indices()).map(|(t, a)| t * t * a.factorial() as f64).sum::<f64>();
        prop_assert!((normalization(&set, &theta) - direct).abs() < 1e-12 * direct);
    }

    #[test]
    fn cdf_is_monotone(seed in 0u64..10_000, d in 1usize..=2, order in 2usize..=5) {
        let dens = random_density(seed, d, order, 1.0);
        let mut r = rng(seed ^ 0xABCD);
        let z: Vec<f64> = (0..d).map(|_| r.random_range(-3.0..3.0)).collect();
        let base = dens.cdf_whitened(&z).unwrap();
        prop_assert!((-1e-12..=1.0 + 1e-12).contains(&base));
        for k in 0..d {
            let mut up = z.clone();
            up[k] += r.random_range(0.01..1.0);
            prop_assert!(dens.cdf_whitened(&up).unwrap() >= base - 1e-12);
        }
    }

    #[test]
    fn cdf_differentiates_to_pdf(seed in 0u64..10_000, order in 2usize..=6, x in -3.0f64..3.0) {
        let dens = random_density(seed, 1, order, 1.0);
        let h = 1e-5;
        let fd = (dens.cdf_whitened(&[x + h]).unwrap() - dens.cdf_whitened(&[x - h]).unwrap()) / (2.0 * h);
        let p = dens.pdf_whitened(&[x]).unwrap();
        prop_assert!((fd - p).abs() < 1e-7, "{fd} vs {p}");
    }

    #[test]
    fn bivariate_cdf_mixed_partial_is_pdf(seed in 0u64..10_000, order in 2usize..=4, x in -2.5f64..2.5, y in -2.5f64..2.5) {
        let dens = random_density(seed, 2, order, 1.0);
        let h = 1e-3;
        let c = |a: f64, b: f64| dens.cdf_whitened(&[a, b]).unwrap();
        let fd = (c(x + h, y + h) - c(x + h, y - h) - c(x - h, y + h) + c(x - h, y - h)) / (4.0 * h * h);
        let p = dens.pdf_whitened(&[x, y]).unwrap();
        prop_assert!((fd - p).abs() < 1e-5, "{fd} vs {p}");
    }

    #[test]
    fn nested_boxes_are_monotone(seed in 0u64..10_000, grow in 0.0f64..1.5) {
        let dens = random_density(seed, 3, 3, 1.0);
        let inner = dens.box_probability(&[-0.5, -0.2], &[0.4, 0.9], &[0, 2]).unwrap();
        let outer = dens.box_probability(&[-0.5 - grow, -0.2], &[0.4, 0.9 + grow], &[0, 2]).unwrap();
        prop_assert!(inner >= -1e-12);
        prop_assert!(outer >= inner - 1e-12);
        prop_assert!(outer <= 1.0 + 1e-12);
    }

    #[test]
    fn full_marginal_cdf_matches_joint(seed in 0u64..10_000, x in -3.0f64..3.0, y in -3.0f64..3.0) {
        let dens = random_density(seed, 2, 4, 1.0);
        let m = dens.marginal(&[0, 1]).unwrap();
        prop_assert!((m.cdf(&[x, y]).unwrap() - dens.cdf_whitened(&[x, y]).unwrap()).abs() < 1e-13);
        prop_assert!((m.pdf(&[x, y]).unwrap() - dens.pdf_whitened(&[x, y]).unwrap()).abs() < 1e-13);
    }
}
