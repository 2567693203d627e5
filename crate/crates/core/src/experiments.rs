//! The two Lorenz reference experiments: density estimation from a broad initial
//! cloud propagated to `T = 3`, and box-probability estimation from a tight cloud
//! propagated to `T = 0.63`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::density::SnpDensity;
use crate::ensemble::{
    mc_box_probability, propagate_ensemble, sample_gaussian, GaussianInitial, LorenzParams,
    SampleEnsemble, DEFAULT_STEP,
};
use crate::error::Result;
use crate::fit::{fit_snp, whiten_samples, FitConfig, FitReport};

/// Initial mean shared by both experiments.
pub const LORENZ_MEAN: [f64; 3] = [1.0, 1.0, 1.0];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LorenzFixture {
    pub variance: f64,
    pub duration: f64,
    pub step: f64,
    pub params: LorenzParams,
}

impl LorenzFixture {
    /// `P = diag(5², 5², 5²)`, `T = 3`.
    pub fn density() -> Self {
        Self {
            variance: 25.0,
            duration: 3.0,
            step: DEFAULT_STEP,
            params: LorenzParams::default(),
        }
    }

    /// `P = diag(0.3², 0.3², 0.3²)`, `T = 0.63`.
    pub fn quantile() -> Self {
        Self {
            variance: 0.09,
            duration: 0.63,
            step: DEFAULT_STEP,
            params: LorenzParams::default(),
        }
    }

    pub fn initial(&self) -> GaussianInitial {
        GaussianInitial::diagonal(LORENZ_MEAN.to_vec(), &[self.variance; 3])
            .expect("diagonal covariance is valid")
    }

    /// Samples `n` initial states with `seed`, returns `(initial, propagated)`.
    pub fn ensemble(&self, n: usize, seed: u64) -> Result<(SampleEnsemble, SampleEnsemble)> {
        let initial = sample_gaussian(&self.initial(), n, seed)?;
        let field = self.params.field();
        let propagated = propagate_ensemble(&initial, &field, self.duration, self.step)?;
        Ok((initial, propagated))
    }
}

/// Whitened box `x ∈ [−1, −0.5]`, `y ∈ [0, 2]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WhitenedBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub coords: Vec<usize>,
}

impl Default for WhitenedBox {
    fn default() -> Self {
        Self {
            lower: vec![-1.0, 0.0],
            upper: vec![-0.5, 2.0],
            coords: vec![0, 1],
        }
    }
}

/// SplitMix64 finalizer over `base ^ stream`; gives independent seeds per trial.
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    let mut z = base
        ^ stream
            .wrapping_mul(0x9E37_79B9_7F4A_7C15)
            .wrapping_add(0x2545_F491_4F6C_DD1D);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Raw Monte Carlo estimate: whiten the ensemble with its own moments, then count.
pub fn mc_whitened_box(ensemble: &SampleEnsemble, bx: &WhitenedBox) -> Result<f64> {
    let (_, transform) = whiten_samples(&ensemble.points, &ensemble.weights)?;
    let white = ensemble.whitened(&transform)?;
    mc_box_probability(&white, &bx.lower, &bx.upper, &bx.coords)
}

/// One SNP trial: fit order `order` and evaluate the whitened box analytically.
pub fn snp_box_trial(
    propagated: &SampleEnsemble,
    order: usize,
    bx: &WhitenedBox,
) -> Result<(f64, SnpDensity, FitReport)> {
    let (density, report) = fit_snp(&propagated.points, &FitConfig::with_order(order))?;
    let p = density.box_probability(&bx.lower, &bx.upper, &bx.coords)?;
    Ok((p, density, report))
}

/// Raw MC box probabilities for `trials` independent ensembles of size `n`.
/// Trials run in parallel; the result order follows the trial index.
pub fn mc_trials(
    fixture: &LorenzFixture,
    n: usize,
    trials: usize,
    seed: u64,
    bx: &WhitenedBox,
) -> Result<Vec<f64>> {
    (0..trials)
        .into_par_iter()
        .map(|t| {
            let (_, prop) = fixture.ensemble(n, derive_seed(seed, t as u64))?;
            mc_whitened_box(&prop, bx)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialStats {
    pub values: Vec<f64>,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    pub std: f64,
}

impl TrialStats {
    pub fn new(values: Vec<f64>) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Self {
            values,
            mean,
            min,
            max,
            std: var.sqrt(),
        }
    }

    pub fn spread(&self) -> f64 {
        self.max - self.min
    }

    pub fn mean_abs_error(&self, reference: f64) -> f64 {
        self.values
            .iter()
            .map(|v| (v - reference).abs())
            .sum::<f64>()
            / self.values.len() as f64
    }
}

/// Local maxima of a sampled curve that are separated from a neighbouring maximum
/// by a dip of at least `dip` (relative to the smaller peak). Returns the indices of
/// the peaks involved.
pub fn separated_modes(values: &[f64], dip: f64) -> Vec<usize> {
    let n = values.len();
    let peaks: Vec<usize> = (1..n.saturating_sub(1))
        .filter(|&i| values[i] > values[i - 1] && values[i] >= values[i + 1])
        .collect();
    let mut modes = Vec::new();
    for w in peaks.windows(2) {
        let (a, b) = (w[0], w[1]);
        let valley = values[a..=b].iter().copied().fold(f64::INFINITY, f64::min);
        if valley <= (1.0 - dip) * values[a].min(values[b]) {
            if modes.last() != Some(&a) {
                modes.push(a);
            }
            modes.push(b);
        }
    }
    modes
}
