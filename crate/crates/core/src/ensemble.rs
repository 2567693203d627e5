//! Gaussian initial ensembles, fixed-step RK4 propagation, and the Monte Carlo
//! box-counting baseline.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SnpError};
use crate::whitening::WhiteningTransform;

/// Default integration step for the Lorenz fixtures.
pub const DEFAULT_STEP: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LorenzParams {
    pub s: f64,
    pub rho: f64,
    pub beta: f64,
}

impl Default for LorenzParams {
    fn default() -> Self {
        Self {
            s: 10.0,
            rho: 28.0,
            beta: 8.0 / 3.0,
        }
    }
}

impl LorenzParams {
    /// Vector field usable with [`propagate`].
    pub fn field(self) -> impl Fn(&[f64], &mut [f64]) + Sync + Copy {
        move |x, out| {
            let r = lorenz_rhs([x[0], x[1], x[2]], &self);
            out.copy_from_slice(&r);
        }
    }
}

pub fn lorenz_rhs(state: [f64; 3], params: &LorenzParams) -> [f64; 3] {
    let [x, y, z] = state;
    [
        params.s * (y - x),
        x * (params.rho - z) - y,
        x * y - params.beta * z,
    ]
}

/// Classical fourth-order Runge–Kutta from `t = 0` to `t = duration`; the last step
/// is shortened to land exactly on `duration`.
pub fn propagate<F>(state: &[f64], rhs: &F, duration: f64, step: f64) -> Result<Vec<f64>>
where
    F: Fn(&[f64], &mut [f64]) + ?Sized,
{
    if !(duration >= 0.0) {
        return Err(SnpError::InvalidConfig(format!(
            "duration must be >= 0, got {duration}"
        )));
    }
    if !(step > 0.0) {
        return Err(SnpError::InvalidConfig(format!(
            "step must be > 0, got {step}"
        )));
    }
    let d = state.len();
    let mut x = state.to_vec();
    let (mut k1, mut k2, mut k3, mut k4, mut tmp) = (
        vec![0.0; d],
        vec![0.0; d],
        vec![0.0; d],
        vec![0.0; d],
        vec![0.0; d],
    );
    let steps = (duration / step).floor() as u64;
    let mut remainder = duration - steps as f64 * step;
    // rounding-level leftovers are not worth an extra step
    if remainder <= 1e-12 * step {
        remainder = 0.0;
    }
    let mut t = 0.0;
    let mut advance = |x: &mut Vec<f64>, h: f64, t: f64| -> Result<()> {
        rhs(x, &mut k1);
        for i in 0..d {
            tmp[i] = x[i] + 0.5 * h * k1[i];
        }
        rhs(&tmp, &mut k2);
        for i in 0..d {
            tmp[i] = x[i] + 0.5 * h * k2[i];
        }
        rhs(&tmp, &mut k3);
        for i in 0..d {
            tmp[i] = x[i] + h * k3[i];
        }
        rhs(&tmp, &mut k4);
        for i in 0..d {
            x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(SnpError::Divergence {
                time: t + h,
                point: None,
            });
        }
        Ok(())
    };
    for k in 0..steps {
        advance(&mut x, step, t)?;
        t = (k + 1) as f64 * step;
    }
    if remainder > 0.0 {
        advance(&mut x, remainder, t)?;
    }
    Ok(x)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianInitial {
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
}

impl GaussianInitial {
    pub fn new(mean: Vec<f64>, covariance: DMatrix<f64>) -> Result<Self> {
        let d = mean.len();
        if covariance.shape() != (d, d) {
            return Err(SnpError::InvalidCovariance(format!(
                "expected {d}x{d}, got {}x{}",
                covariance.nrows(),
                covariance.ncols()
            )));
        }
        let init = Self {
            mean: DVector::from_vec(mean),
            covariance,
        };
        init.factor()?;
        Ok(init)
    }

    pub fn diagonal(mean: Vec<f64>, variances: &[f64]) -> Result<Self> {
        let cov = DMatrix::from_diagonal(&DVector::from_column_slice(variances));
        Self::new(mean, cov)
    }

    pub fn dimension(&self) -> usize {
        self.mean.len()
    }

    fn factor(&self) -> Result<DMatrix<f64>> {
        let sym = (&self.covariance - self.covariance.transpose()).abs().max();
        if sym > 1e-12 * self.covariance.abs().max().max(1.0) {
            return Err(SnpError::InvalidCovariance(
                "covariance is not symmetric".into(),
            ));
        }
        self.covariance
            .clone()
            .cholesky()
            .map(|c| c.l())
            .ok_or_else(|| {
                SnpError::InvalidCovariance("covariance is not positive definite".into())
            })
    }
}

/// Weighted point cloud at a given time.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleEnsemble {
    pub points: DMatrix<f64>,
    pub weights: Vec<f64>,
    pub seed: u64,
    pub time: f64,
}

impl SampleEnsemble {
    pub fn uniform(points: DMatrix<f64>, seed: u64, time: f64) -> Self {
        let n = points.nrows();
        Self {
            points,
            weights: vec![1.0 / n as f64; n],
            seed,
            time,
        }
    }

    pub fn len(&self) -> usize {
        self.points.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.points.nrows() == 0
    }

    pub fn dimension(&self) -> usize {
        self.points.ncols()
    }

    pub fn point(&self, i: usize) -> Vec<f64> {
        self.points.row(i).iter().copied().collect()
    }

    pub fn has_uniform_weights(&self) -> bool {
        let u = 1.0 / self.len() as f64;
        self.weights.iter().all(|&w| w == u)
    }

    /// Same ensemble mapped through `transform.whiten`.
    pub fn whitened(&self, transform: &WhiteningTransform) -> Result<Self> {
        if transform.dimension() != self.dimension() {
            return Err(SnpError::DimensionMismatch {
                expected: self.dimension(),
                got: transform.dimension(),
            });
        }
        let mut out = self.clone();
        for i in 0..self.len() {
            let z = transform.whiten(&self.point(i));
            for (j, v) in z.into_iter().enumerate() {
                out.points[(i, j)] = v;
            }
        }
        Ok(out)
    }

    pub fn to_csv(&self) -> String {
        let d = self.dimension();
        let weighted = !self.has_uniform_weights();
        let mut s = String::new();
        let _ = writeln!(s, "# t={:?}", self.time);
        let _ = writeln!(s, "# seed={}", self.seed);
        let header: Vec<String> = (0..d).map(|j| format!("x{j}")).collect();
        s.push_str(&header.join(","));
        if weighted {
            s.push_str(",weight");
        }
        s.push('\n');
        for i in 0..self.len() {
            let row: Vec<String> = (0..d)
                .map(|j| format!("{:?}", self.points[(i, j)]))
                .collect();
            s.push_str(&row.join(","));
            if weighted {
                let _ = write!(s, ",{:?}", self.weights[i]);
            }
            s.push('\n');
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut time = 0.0;
        let mut seed = 0u64;
        let mut header: Option<Vec<String>> = None;
        let mut rows: Vec<f64> = Vec::new();
        let mut weights: Vec<f64> = Vec::new();
        let mut n = 0;
        let mut header_line = 0;
        for (lineno, line) in text.lines().enumerate().map(|(i, l)| (i + 1, l.trim())) {
            if line.is_empty() {
                continue;
            }
            if let Some(meta) = line.strip_prefix('#') {
                let meta = meta.trim();
                if let Some(v) = meta.strip_prefix("t=") {
                    time = parse_f64(v, lineno, "t")?;
                } else if let Some(v) = meta.strip_prefix("seed=") {
                    seed = v.trim().parse().map_err(|_| SnpError::Parse {
                        line: lineno,
                        message: format!("invalid seed '{v}'"),
                    })?;
                }
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            let Some(cols) = &header else {
                header_line = lineno;
                header = Some(fields.iter().map(|f| f.to_string()).collect());
                continue;
            };
            if fields.len() < cols.len() {
                return Err(SnpError::Parse {
                    line: lineno,
                    message: format!("missing column '{}'", cols[fields.len()]),
                });
            }
            if fields.len() > cols.len() {
                return Err(SnpError::Parse {
                    line: lineno,
                    message: format!("{} fields but header has {}", fields.len(), cols.len()),
                });
            }
            for (name, field) in cols.iter().zip(&fields) {
                let v = parse_f64(field, lineno, name)?;
                if name == "weight" {
                    weights.push(v);
                } else {
                    rows.push(v);
                }
            }
            n += 1;
        }
        let cols = header.ok_or(SnpError::Parse {
            line: 0,
            message: "missing header row".into(),
        })?;
        let d = cols.iter().filter(|c| c.as_str() != "weight").count();
        let coords: Vec<&String> = cols.iter().filter(|c| c.as_str() != "weight").collect();
        for (k, name) in coords.iter().enumerate() {
            if **name != format!("x{k}") {
                return Err(SnpError::Parse {
                    line: header_line,
                    message: format!("missing column 'x{k}' (found '{name}')"),
                });
            }
        }
        if d == 0 {
            return Err(SnpError::Parse {
                line: 0,
                message: "no coordinate columns".into(),
            });
        }
        if n == 0 {
            return Err(SnpError::Parse {
                line: 0,
                message: "no data rows".into(),
            });
        }
        let points = DMatrix::from_row_slice(n, d, &rows);
        let weights = if weights.is_empty() {
            vec![1.0 / n as f64; n]
        } else {
            crate::fit::check_weights(&weights)?;
            weights
        };
        Ok(Self {
            points,
            weights,
            seed,
            time,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_csv(&std::fs::read_to_string(path)?)
    }
}

fn parse_f64(field: &str, line: usize, column: &str) -> Result<f64> {
    field.trim().parse().map_err(|_| SnpError::Parse {
        line,
        message: format!("invalid number '{field}' in column '{column}'"),
    })
}

/// Draws `n` points from `N(μ, P)` as `μ + L ε`. Point `i` uses ChaCha stream `i`
/// of `seed`, so the ensemble is identical however the work is split across threads.
pub fn sample_gaussian(init: &GaussianInitial, n: usize, seed: u64) -> Result<SampleEnsemble> {
    if n == 0 {
        return Err(SnpError::InvalidConfig(
            "sample count must be at least 1".into(),
        ));
    }
    let l = init.factor()?;
    let d = init.dimension();
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let eps: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
            (0..d)
                .map(|r| init.mean[r] + (0..=r).map(|c| l[(r, c)] * eps[c]).sum::<f64>())
                .collect()
        })
        .collect();
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    Ok(SampleEnsemble::uniform(
        DMatrix::from_row_slice(n, d, &flat),
        seed,
        0.0,
    ))
}

/// Propagates every point; output order matches input order.
pub fn propagate_ensemble<F>(
    ensemble: &SampleEnsemble,
    rhs: &F,
    duration: f64,
    step: f64,
) -> Result<SampleEnsemble>
where
    F: Fn(&[f64], &mut [f64]) + Sync,
{
    let n = ensemble.len();
    let d = ensemble.dimension();
    let results: Vec<std::result::Result<Vec<f64>, SnpError>> = (0..n)
        .into_par_iter()
        .map(|i| propagate(&ensemble.point(i), rhs, duration, step))
        .collect();
    let mut flat = Vec::with_capacity(n * d);
    let mut failures = Vec::new();
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok(x) => flat.extend(x),
            Err(SnpError::Divergence { time, .. }) => failures.push((i, time)),
            Err(e) => return Err(e),
        }
    }
    if let Some(&(first_index, first_time)) = failures.first() {
        return Err(SnpError::EnsembleDivergence {
            count: failures.len(),
            first_index,
            first_time,
        });
    }
    Ok(SampleEnsemble {
        points: DMatrix::from_row_slice(n, d, &flat),
        weights: ensemble.weights.clone(),
        seed: ensemble.seed,
        time: ensemble.time + duration,
    })
}

/// Weight of the points whose `coords` lie in the closed box `[lower, upper]`.
pub fn mc_box_probability(
    ensemble: &SampleEnsemble,
    lower: &[f64],
    upper: &[f64],
    coords: &[usize],
) -> Result<f64> {
    let d = ensemble.dimension();
    if lower.len() != coords.len() || upper.len() != coords.len() {
        return Err(SnpError::DimensionMismatch {
            expected: coords.len(),
            got: lower.len().max(upper.len()),
        });
    }
    for (axis, (&l, &u)) in lower.iter().zip(upper).enumerate() {
        if !(l <= u) {
            return Err(SnpError::InvertedBounds {
                axis,
                lower: l,
                upper: u,
            });
        }
    }
    if let Some(&bad) = coords.iter().find(|&&c| c >= d) {
        return Err(SnpError::CoordinateOutOfRange {
            index: bad,
            dimension: d,
        });
    }
    let inside = |i: usize| {
        coords
            .iter()
            .zip(lower.iter().zip(upper))
            .all(|(&c, (&l, &u))| {
                let v = ensemble.points[(i, c)];
                l <= v && v <= u
            })
    };
    if ensemble.has_uniform_weights() {
        let count = (0..ensemble.len()).filter(|&i| inside(i)).count();
        return Ok(count as f64 / ensemble.len() as f64);
    }
    Ok((0..ensemble.len())
        .filter(|&i| inside(i))
        .map(|i| ensemble.weights[i])
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lorenz_examples() {
        let p = LorenzParams::default();
        let r = lorenz_rhs([1.0, 1.0, 1.0], &p);
        assert_eq!(r[0], 0.0);
        assert_eq!(r[1], 26.0);
        assert!((r[2] + 5.0 / 3.0).abs() < 1e-15);
        assert_eq!(lorenz_rhs([0.0, 0.0, 0.0], &p), [0.0, 0.0, 0.0]);
        for sign in [1.0, -1.0] {
            let x = sign * (p.beta * (p.rho - 1.0)).sqrt();
            let r = lorenz_rhs([x, x, p.rho - 1.0], &p);
            assert!(r.iter().all(|v| v.abs() < 1e-12), "{r:?}");
        }
    }

    #[test]
    fn zero_duration_is_identity() {
        let f = LorenzParams::default().field();
        let x = [1.5, -2.0, 20.0];
        assert_eq!(propagate(&x, &f, 0.0, 0.01).unwrap(), x.to_vec());
    }

    #[test]
    fn exponential_decay() {
        let decay = |x: &[f64], out: &mut [f64]| out[0] = -x[0];
        let x = propagate(&[1.0], &decay, 1.0, 0.001).unwrap();
        assert!((x[0] - (-1.0f64).exp()).abs() < 1e-9);
        // partial final step lands on T
        let y = propagate(&[1.0], &decay, 1.0005, 0.001).unwrap();
        assert!((y[0] - (-1.0005f64).exp()).abs() < 1e-9);
    }

    #[test]
    fn divergence_reported() {
        let blowup = |x: &[f64], out: &mut [f64]| out[0] = x[0] * x[0];
        assert!(matches!(
            propagate(&[1.0], &blowup, 2.0, 0.01),
            Err(SnpError::Divergence { .. })
        ));
        assert!(propagate(&[1.0], &blowup, 1.0, 0.0).is_err());
    }

    #[test]
    fn degenerate_covariance_collapses_to_mean() {
        let init = GaussianInitial::diagonal(vec![1.0, 2.0, 3.0], &[1e-20; 3]).unwrap();
        let e = sample_gaussian(&init, 50, 7).unwrap();
        for i in 0..50 {
            for (j, m) in [1.0, 2.0, 3.0].iter().enumerate() {
                assert!((e.points[(i, j)] - m).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn seed_determinism() {
        let init = GaussianInitial::diagonal(vec![0.0; 3], &[1.0; 3]).unwrap();
        let a = sample_gaussian(&init, 200, 42).unwrap();
        let b = sample_gaussian(&init, 200, 42).unwrap();
        let c = sample_gaussian(&init, 200, 43).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.points, c.points);
        // prefix-stable: point i depends only on (seed, i)
        let short = sample_gaussian(&init, 10, 42).unwrap();
        assert_eq!(short.points.rows(0, 10), a.points.rows(0, 10));
    }

    #[test]
    fn rejects_bad_covariance() {
        let cov = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(
            GaussianInitial::new(vec![0.0, 0.0], cov),
            Err(SnpError::InvalidCovariance(_))
        ));
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.0, 1.0]);
        assert!(GaussianInitial::new(vec![0.0, 0.0], asym).is_err());
    }

    #[test]
    fn box_counting() {
        let pts = DMatrix::from_row_slice(4, 2, &[0.0, 0.0, 1.0, 1.0, 2.0, 2.0, 3.0, 3.0]);
        let e = SampleEnsemble::uniform(pts, 0, 0.0);
        assert_eq!(
            mc_box_probability(&e, &[-10.0, -10.0], &[10.0, 10.0], &[0, 1]).unwrap(),
            1.0
        );
        assert_eq!(
            mc_box_probability(&e, &[5.0, 5.0], &[6.0, 6.0], &[0, 1]).unwrap(),
            0.0
        );
        assert_eq!(
            mc_box_probability(&e, &[0.5, -1.0], &[1.5, 1.0], &[0, 1]).unwrap(),
            0.25
        );
        // closed on both ends
        assert_eq!(mc_box_probability(&e, &[1.0], &[2.0], &[0]).unwrap(), 0.5);
        assert!(matches!(
            mc_box_probability(&e, &[1.0], &[0.0], &[0]),
            Err(SnpError::InvertedBounds { .. })
        ));
    }

    #[test]
    fn csv_roundtrip_exact() {
        let pts = DMatrix::from_row_slice(2, 3, &[0.1, -1e-20, 1.0 / 3.0, 1e300, 2.5, -7.0]);
        let mut e = SampleEnsemble::uniform(pts, 99, 0.63);
        let back = SampleEnsemble::from_csv(&e.to_csv()).unwrap();
        assert_eq!(back, e);
        e.weights = vec![0.25, 0.75];
        let back = SampleEnsemble::from_csv(&e.to_csv()).unwrap();
        assert_eq!(back, e);
    }

    #[test]
    fn csv_missing_column() {
        let text = "# t=0\n# seed=1\nx0,x1,x2\n1,2,3\n4,5\n";
        match SampleEnsemble::from_csv(text) {
            Err(SnpError::Parse { line, message }) => {
                assert_eq!(line, 5);
                assert!(message.contains("'x2'"), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}
