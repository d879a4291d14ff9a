//! Classifier-weighted Gaussian kernel density estimates of the realness
//! likelihood on the prior bins.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::priors::ParameterSpace;

pub const DEFAULT_BANDWIDTH: f64 = 0.1;

/// One coordinate of a sampled parameter vector (range-normalized to
/// `[0, 1]`) and the discriminator's realness score for that sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightedSample {
    pub theta_value: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "value")]
pub enum Bandwidth {
    Fixed(f64),
    /// Silverman's rule of thumb on the weighted samples of each dimension.
    Silverman,
}

impl Default for Bandwidth {
    fn default() -> Self {
        Bandwidth::Fixed(DEFAULT_BANDWIDTH)
    }
}

/// How the per-dimension likelihood is formed from the weighted kernel sum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LikelihoodEstimator {
    /// `sum_v w_v K(g - theta_v)`. The generated values are drawn from the
    /// current prior, so this carries the prior density along and the
    /// update squares the prior every iteration.
    WeightedSum,
    /// Weighted sum divided by the unweighted kernel sum, i.e. the kernel
    /// regression estimate of the mean score near `g`.
    #[default]
    ScoreRegression,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KdeConfig {
    pub bandwidth: Bandwidth,
    pub estimator: LikelihoodEstimator,
}

impl KdeConfig {
    pub fn validate(&self) -> Result<()> {
        if let Bandwidth::Fixed(h) = self.bandwidth {
            if !(h > 0.0 && h.is_finite()) {
                return Err(Error::Config(format!("bandwidth must be positive, got {h}")));
            }
        }
        Ok(())
    }
}

/// `table[g] = sum_v w_v / (h sqrt(2 pi)) exp(-(g - theta_v)^2 / (2 h^2))`.
///
/// No division by the sample count; an empty sample set gives zeros.
pub fn weighted_kde(samples: &[WeightedSample], h: f64, grid: &[f64]) -> Vec<f64> {
    let norm = 1.0 / (h * (2.0 * PI).sqrt());
    let inv_two_h2 = 1.0 / (2.0 * h * h);
    grid.iter()
        .map(|g| {
            norm * samples
                .iter()
                .map(|s| {
                    let d = g - s.theta_value;
                    s.weight * (-d * d * inv_two_h2).exp()
                })
                .sum::<f64>()
        })
        .collect()
}

/// Weighted Silverman bandwidth `0.9 min(sd, iqr / 1.34) n_eff^(-1/5)`,
/// falling back to the default when the samples carry no spread.
pub fn silverman_bandwidth(samples: &[WeightedSample]) -> f64 {
    let total: f64 = samples.iter().map(|s| s.weight).sum();
    if total <= 0.0 || samples.len() < 2 {
        return DEFAULT_BANDWIDTH;
    }
    let mean = samples.iter().map(|s| s.weight * s.theta_value).sum::<f64>() / total;
    let var = samples
        .iter()
        .map(|s| s.weight * (s.theta_value - mean).powi(2))
        .sum::<f64>()
        / total;
    let sq: f64 = samples.iter().map(|s| s.weight * s.weight).sum();
    let n_eff = total * total / sq;

    let mut sorted: Vec<&WeightedSample> = samples.iter().filter(|s| s.weight > 0.0).collect();
    sorted.sort_by(|a, b| a.theta_value.total_cmp(&b.theta_value));
    let quantile = |q: f64| {
        let mut acc = 0.0;
        for s in &sorted {
            acc += s.weight;
            if acc >= q * total {
                return s.theta_value;
            }
        }
        sorted.last().map_or(0.0, |s| s.theta_value)
    };
    let iqr = quantile(0.75) - quantile(0.25);
    let spread = if iqr > 0.0 { var.sqrt().min(iqr / 1.34) } else { var.sqrt() };
    let h = 0.9 * spread * n_eff.powf(-0.2);
    if h > 0.0 && h.is_finite() {
        h
    } else {
        DEFAULT_BANDWIDTH
    }
}

/// Per-dimension likelihood tables on the bin centres of `space`.
///
/// `thetas[i]` is a full parameter vector in `space` order and `scores[i]`
/// its realness probability.
pub fn likelihood_tables(
    thetas: &[Vec<f64>],
    scores: &[f64],
    space: &ParameterSpace,
    cfg: &KdeConfig,
) -> Result<Vec<Vec<f64>>> {
    if thetas.len() != scores.len() {
        return Err(Error::LengthMismatch {
            left: thetas.len(),
            right: scores.len(),
        });
    }
    if let Some(bad) = thetas.iter().find(|t| t.len() != space.len()) {
        return Err(Error::DimensionMismatch {
            expected: space.len(),
            actual: bad.len(),
        });
    }
    let tables = space
        .dims
        .iter()
        .enumerate()
        .map(|(d, dim)| {
            let weighted: Vec<WeightedSample> = thetas
                .iter()
                .zip(scores)
                .map(|(t, s)| WeightedSample {
                    theta_value: dim.normalize(t[d]),
                    weight: *s,
                })
                .collect();
            let h = match cfg.bandwidth {
                Bandwidth::Fixed(h) => h,
                Bandwidth::Silverman => silverman_bandwidth(&weighted),
            };
            let grid = dim.normalized_centers();
            let numerator = weighted_kde(&weighted, h, &grid);
            match cfg.estimator {
                LikelihoodEstimator::WeightedSum => numerator,
                LikelihoodEstimator::ScoreRegression => {
                    let unweighted: Vec<WeightedSample> = weighted
                        .iter()
                        .map(|s| WeightedSample {
                            weight: 1.0,
                            ..*s
                        })
                        .collect();
                    let density = weighted_kde(&unweighted, h, &grid);
                    numerator
                        .iter()
                        .zip(&density)
                        .map(|(n, d)| if *d > f64::MIN_POSITIVE { n / d } else { 0.0 })
                        .collect()
                }
            }
        })
        .collect();
    Ok(tables)
}
