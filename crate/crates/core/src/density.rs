//! Fitted SNP densities `p(z) = φ(z) P(z)² / S` with `P(z) = 1 + Θᵀ𝓗(z)` and
//! `S = 1 + Θᵀ𝒬Θ`, plus closed-form marginals, CDFs and box probabilities.
//!
//! Everything here works in whitened coordinates unless a method says otherwise;
//! [`SnpDensity::pdf`] maps raw states through the stored [`WhiteningTransform`].

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SnpError};
use crate::hermite::{self, CrossedTable};
use crate::indexset::{MultiIndex, MultiIndexSet};
use crate::normal;
use crate::whitening::WhiteningTransform;

/// Tolerance used when validating the stored normalization of a density file.
pub const NORMALIZATION_FILE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct SnpDensity {
    index_set: MultiIndexSet,
    theta: Vec<f64>,
    normalization: f64,
    whitening: Option<WhiteningTransform>,
}

/// Evaluates the basis `𝓗(z)` for every multi-index of `set` into `out`.
/// `scratch` must hold `d * (K + 1)` values.
pub fn basis_into(set: &MultiIndexSet, z: &[f64], scratch: &mut [f64], out: &mut [f64]) {
    let stride = set.order() + 1;
    for (j, &zj) in z.iter().enumerate() {
        hermite::fill(zj, &mut scratch[j * stride..(j + 1) * stride]);
    }
    for (o, alpha) in out.iter_mut().zip(set.indices()) {
        *o = alpha
            .entries()
            .iter()
            .enumerate()
            .map(|(j, &a)| scratch[j * stride + a])
            .product();
    }
}

/// Allocating variant of [`basis_into`].
pub fn basis_vector(set: &MultiIndexSet, z: &[f64]) -> Vec<f64> {
    let mut scratch = vec![0.0; set.dimension() * (set.order() + 1)];
    let mut out = vec![0.0; set.len()];
    basis_into(set, z, &mut scratch, &mut out);
    out
}

/// `1 + Θᵀ𝒬Θ`
pub fn normalization(set: &MultiIndexSet, theta: &[f64]) -> f64 {
    1.0 + theta
        .iter()
        .zip(set.weights())
        .map(|(c, &w)| c * c * w as f64)
        .sum::<f64>()
}

impl SnpDensity {
    pub fn new(
        index_set: MultiIndexSet,
        theta: Vec<f64>,
        whitening: Option<WhiteningTransform>,
    ) -> Result<Self> {
        if theta.len() != index_set.len() {
            return Err(SnpError::DimensionMismatch {
                expected: index_set.len(),
                got: theta.len(),
            });
        }
        if let Some(w) = &whitening {
            check_dim(index_set.dimension(), w.dimension())?;
        }
        let normalization = normalization(&index_set, &theta);
        Ok(Self {
            index_set,
            theta,
            normalization,
            whitening,
        })
    }

    /// The standard normal in `d` whitened dimensions (`Θ = 0`).
    pub fn gaussian(index_set: MultiIndexSet) -> Self {
        let theta = vec![0.0; index_set.len()];
        Self::new(index_set, theta, None).expect("zero coefficients always match")
    }

    pub fn index_set(&self) -> &MultiIndexSet {
        &self.index_set
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn normalization(&self) -> f64 {
        self.normalization
    }

    pub fn whitening(&self) -> Option<&WhiteningTransform> {
        self.whitening.as_ref()
    }

    pub fn dimension(&self) -> usize {
        self.index_set.dimension()
    }

    pub fn order(&self) -> usize {
        self.index_set.order()
    }

    pub fn with_whitening(mut self, whitening: WhiteningTransform) -> Result<Self> {
        check_dim(self.dimension(), whitening.dimension())?;
        self.whitening = Some(whitening);
        Ok(self)
    }

    pub fn polynomial_value(&self, z: &[f64]) -> Result<f64> {
        check_dim(self.dimension(), z.len())?;
        let h = basis_vector(&self.index_set, z);
        Ok(1.0 + dot(&self.theta, &h))
    }

    pub fn pdf_whitened(&self, z: &[f64]) -> Result<f64> {
        let p = self.polynomial_value(z)?;
        Ok(normal::log_pdf_multi(z).exp() * p * p / self.normalization)
    }

    pub fn log_pdf_whitened(&self, z: &[f64]) -> Result<f64> {
        let p = self.polynomial_value(z)?;
        Ok(normal::log_pdf_multi(z) + 2.0 * p.abs().ln() - self.normalization.ln())
    }

    /// Density in raw coordinates, including the `|det L⁻¹|` Jacobian.
    pub fn pdf(&self, x: &[f64]) -> Result<f64> {
        let w = self.whitening.as_ref().ok_or(SnpError::MissingWhitening)?;
        check_dim(self.dimension(), x.len())?;
        let z = w.whiten(x);
        Ok(self.pdf_whitened(&z)? * w.log_abs_det_inverse().exp())
    }

    /// Analytic marginal over the coordinates in `keep` (0-based, evaluated in the given order).
    pub fn marginal(&self, keep: &[usize]) -> Result<SnpMarginal> {
        SnpMarginal::new(self, keep)
    }

    /// Closed-form joint CDF in whitened coordinates.
    pub fn cdf_whitened(&self, z: &[f64]) -> Result<f64> {
        check_dim(self.dimension(), z.len())?;
        let all: Vec<usize> = (0..self.dimension()).collect();
        self.marginal(&all)?.cdf(z)
    }

    /// Probability of the whitened axis-aligned box `lower ≤ z_coords ≤ upper`, by
    /// signed inclusion–exclusion over the `2^m` CDF corners of the marginal over `coords`.
    pub fn box_probability(&self, lower: &[f64], upper: &[f64], coords: &[usize]) -> Result<f64> {
        check_box(lower, upper, coords.len())?;
        let marginal = self.marginal(coords)?;
        marginal.box_probability(lower, upper)
    }

    /// Box probability with bounds given in raw coordinates. Only available when the
    /// whitening factor is diagonal, so that the raw box maps to a whitened box.
    pub fn box_probability_raw(
        &self,
        lower: &[f64],
        upper: &[f64],
        coords: &[usize],
    ) -> Result<f64> {
        let w = self.whitening.as_ref().ok_or(SnpError::MissingWhitening)?;
        if !w.is_diagonal() {
            return Err(SnpError::UnsupportedGeometry(
                "raw-coordinate box under a correlated whitening maps to a parallelepiped".into(),
            ));
        }
        check_box(lower, upper, coords.len())?;
        let d = self.dimension();
        let map = |&c: &usize, v: f64| -> Result<f64> {
            if c >= d {
                return Err(SnpError::CoordinateOutOfRange {
                    index: c,
                    dimension: d,
                });
            }
            Ok((v - w.mean()[c]) / w.factor()[(c, c)])
        };
        let lo = coords
            .iter()
            .zip(lower)
            .map(|(c, &v)| map(c, v))
            .collect::<Result<Vec<_>>>()?;
        let hi = coords
            .iter()
            .zip(upper)
            .map(|(c, &v)| map(c, v))
            .collect::<Result<Vec<_>>>()?;
        self.box_probability(&lo, &hi, coords)
    }

    pub fn to_file(&self) -> DensityFile {
        DensityFile {
            dimension: self.dimension(),
            order: self.order(),
            indices: self.index_set.indices().to_vec(),
            theta: self.theta.clone(),
            whitening: self.whitening.as_ref().map(|w| WhiteningFile {
                mean: w.mean().iter().copied().collect(),
                factor: w.factor_row_major(),
            }),
            normalization: self.normalization,
        }
    }

    pub fn from_file(file: DensityFile) -> Result<Self> {
        let set = MultiIndexSet::from_indices(file.dimension, file.order, file.indices)?;
        let whitening = match file.whitening {
            Some(w) => {
                let d = file.dimension;
                if w.mean.len() != d || w.factor.len() != d * d {
                    return Err(SnpError::DimensionMismatch {
                        expected: d,
                        got: w.mean.len(),
                    });
                }
                Some(WhiteningTransform::from_factor(
                    DVector::from_vec(w.mean),
                    DMatrix::from_row_slice(d, d, &w.factor),
                )?)
            }
            None => None,
        };
        let density = Self::new(set, file.theta, whitening)?;
        if (density.normalization - file.normalization).abs() > NORMALIZATION_FILE_TOLERANCE {
            return Err(SnpError::NormalizationMismatch {
                file: file.normalization,
                recomputed: density.normalization,
            });
        }
        Ok(density)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut text = serde_json::to_string_pretty(&self.to_file())?;
        text.push('\n');
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_file(serde_json::from_str(&text)?)
    }
}

/// On-disk density record.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct DensityFile {
    pub dimension: usize,
    pub order: usize,
    pub indices: Vec<MultiIndex>,
    pub theta: Vec<f64>,
    pub whitening: Option<WhiteningFile>,
    pub normalization: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct WhiteningFile {
    pub mean: Vec<f64>,
    /// Lower-triangular factor, row-major.
    pub factor: Vec<f64>,
}

#[derive(Debug, Clone)]
struct Term {
    coef: f64,
    sub: Vec<usize>,
}

#[derive(Debug, Clone)]
struct Group {
    weight: f64,
    terms: Vec<Term>,
}

/// Marginal of an [`SnpDensity`] over a subset `U` of whitened coordinates.
///
/// Terms are grouped by the dropped part `α_{-U}`. Orthogonality of the dropped
/// coordinates leaves
/// `p_U = φ(z_U)/S · [ (1 + Σ_{α_{-U}=0} c_α H_{α_U})² + Σ_{δ≠0} δ! (Σ_{α_{-U}=δ} c_α H_{α_U})² ]`.
#[derive(Debug, Clone)]
pub struct SnpMarginal {
    keep: Vec<usize>,
    order: usize,
    normalization: f64,
    base: Vec<Term>,
    groups: Vec<Group>,
}

impl SnpMarginal {
    fn new(density: &SnpDensity, keep: &[usize]) -> Result<Self> {
        let d = density.dimension();
        if keep.is_empty() {
            return Err(SnpError::EmptyKeep);
        }
        let mut seen = vec![false; d];
        for &k in keep {
            if k >= d {
                return Err(SnpError::CoordinateOutOfRange {
                    index: k,
                    dimension: d,
                });
            }
            if seen[k] {
                return Err(SnpError::DuplicateCoordinate(k));
            }
            seen[k] = true;
        }
        let dropped: Vec<usize> = (0..d).filter(|j| !seen[*j]).collect();

        let mut base = Vec::new();
        let mut grouped: std::collections::BTreeMap<Vec<usize>, Vec<Term>> = Default::default();
        for (alpha, &coef) in density.index_set().indices().iter().zip(density.theta()) {
            if coef == 0.0 {
                continue;
            }
            let sub: Vec<usize> = keep.iter().map(|&k| alpha[k]).collect();
            let rest: Vec<usize> = dropped.iter().map(|&j| alpha[j]).collect();
            let term = Term { coef, sub };
            if rest.iter().all(|&a| a == 0) {
                base.push(term);
            } else {
                grouped.entry(rest).or_default().push(term);
            }
        }
        let groups = grouped
            .into_iter()
            .map(|(rest, terms)| Group {
                weight: MultiIndex::new(rest).factorial() as f64,
                terms,
            })
            .collect();
        Ok(Self {
            keep: keep.to_vec(),
            order: density.order(),
            normalization: density.normalization(),
            base,
            groups,
        })
    }

    pub fn keep(&self) -> &[usize] {
        &self.keep
    }

    pub fn dimension(&self) -> usize {
        self.keep.len()
    }

    fn hermite_tables(&self, z: &[f64]) -> Vec<Vec<f64>> {
        z.iter()
            .map(|&zi| {
                let mut h = vec![0.0; self.order + 1];
                hermite::fill(zi, &mut h);
                h
            })
            .collect()
    }

    pub fn pdf(&self, z: &[f64]) -> Result<f64> {
        check_dim(self.dimension(), z.len())?;
        let tables = self.hermite_tables(z);
        let eval = |terms: &[Term]| -> f64 {
            terms
                .iter()
                .map(|t| {
                    t.coef
                        * t.sub
                            .iter()
                            .enumerate()
                            .map(|(i, &a)| tables[i][a])
                            .product::<f64>()
                })
                .sum()
        };
        let lead = 1.0 + eval(&self.base);
        let mut bracket = lead * lead;
        for g in &self.groups {
            let s = eval(&g.terms);
            bracket += g.weight * s * s;
        }
        Ok(normal::log_pdf_multi(z).exp() * bracket / self.normalization)
    }

    /// Closed-form CDF of the marginal at `z` (whitened, ordered like `keep`).
    pub fn cdf(&self, z: &[f64]) -> Result<f64> {
        check_dim(self.dimension(), z.len())?;
        let m = self.dimension();
        let g: Vec<Vec<f64>> = z
            .iter()
            .map(|&zi| hermite::gaussian_lower_integrals(self.order, zi))
            .collect();
        let j: Vec<CrossedTable> = z
            .iter()
            .map(|&zi| CrossedTable::new(self.order, zi))
            .collect::<Result<_>>()?;

        let gauss: f64 = g.iter().map(|gi| gi[0]).product();
        let linear: f64 = self
            .base
            .iter()
            .map(|t| t.coef * (0..m).map(|i| g[i][t.sub[i]]).product::<f64>())
            .sum();
        let crossed = |terms: &[Term]| -> f64 {
            let mut acc = 0.0;
            for (a, ta) in terms.iter().enumerate() {
                let diag: f64 = (0..m).map(|i| j[i].get(ta.sub[i], ta.sub[i])).product();
                acc += ta.coef * ta.coef * diag;
                for tb in &terms[a + 1..] {
                    let prod: f64 = (0..m).map(|i| j[i].get(ta.sub[i], tb.sub[i])).product();
                    acc += 2.0 * ta.coef * tb.coef * prod;
                }
            }
            acc
        };
        let mut quad = crossed(&self.base);
        for grp in &self.groups {
            quad += grp.weight * crossed(&grp.terms);
        }
        Ok((gauss + 2.0 * linear + quad) / self.normalization)
    }

    /// Inclusion–exclusion over the `2^m` corners of `[lower, upper]`.
    pub fn box_probability(&self, lower: &[f64], upper: &[f64]) -> Result<f64> {
        let m = self.dimension();
        check_box(lower, upper, m)?;
        if lower.iter().zip(upper).any(|(l, u)| l == u) {
            return Ok(0.0);
        }
        let mut total = 0.0;
        let mut corner = vec![0.0; m];
        for mask in 0u32..(1 << m) {
            let mut lower_picks = 0;
            for i in 0..m {
                if mask & (1 << i) != 0 {
                    corner[i] = lower[i];
                    lower_picks += 1;
                } else {
                    corner[i] = upper[i];
                }
            }
            let f = self.cdf(&corner)?;
            if lower_picks % 2 == 0 {
                total += f;
            } else {
                total -= f;
            }
        }
        Ok(total)
    }
}

fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(SnpError::DimensionMismatch { expected, got });
    }
    Ok(())
}

fn check_box(lower: &[f64], upper: &[f64], m: usize) -> Result<()> {
    check_dim(m, lower.len())?;
    check_dim(m, upper.len())?;
    for (axis, (&l, &u)) in lower.iter().zip(upper).enumerate() {
        if !(l <= u) {
            return Err(SnpError::InvertedBounds {
                axis,
                lower: l,
                upper: u,
            });
        }
    }
    Ok(())
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
