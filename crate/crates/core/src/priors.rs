//! Discretized, factorized prior tables over the scene-parameter space.
//!
//! Each dimension carries a table of bin weights that is kept max-normalized
//! (largest entry exactly 1). Because the initial uniform table dominates
//! every such table, a uniform proposal accepted with probability
//! `table[bin]` is a valid rejection sampler with no envelope constant.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scene::{SceneParameters, PARAMETER_RANGES};

pub const DEFAULT_BINS: usize = 32;

/// Smoothing mass added to every bin of the reference distribution in KL.
pub const KL_EPSILON: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Dimension {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
    pub bins: usize,
}

impl Dimension {
    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    /// Bin index of `value`; values on or beyond the bounds go to the edge bins.
    pub fn bin_of(&self, value: f64) -> usize {
        let t = (value - self.lower) / self.width();
        ((t * self.bins as f64).floor().max(0.0) as usize).min(self.bins - 1)
    }

    /// Maps `value` to `[0, 1]` by the dimension's range.
    pub fn normalize(&self, value: f64) -> f64 {
        (value - self.lower) / self.width()
    }

    /// Bin centres in range-normalized coordinates.
    pub fn normalized_centers(&self) -> Vec<f64> {
        (0..self.bins)
            .map(|i| (i as f64 + 0.5) / self.bins as f64)
            .collect()
    }

    pub fn bin_bounds(&self, bin: usize) -> (f64, f64) {
        let w = self.width() / self.bins as f64;
        (self.lower + w * bin as f64, self.lower + w * (bin + 1) as f64)
    }
}

/// Ordered list of dimensions matching the [`SceneParameters`] vector order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParameterSpace {
    pub dims: Vec<Dimension>,
}

impl ParameterSpace {
    /// The full scene-parameter space with `bins` bins per dimension.
    pub fn scene(bins: usize) -> Self {
        ParameterSpace {
            dims: PARAMETER_RANGES
                .iter()
                .map(|r| Dimension {
                    name: r.name.to_string(),
                    lower: r.lower,
                    upper: r.upper,
                    bins,
                })
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.dims.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dims.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.dims.iter().position(|d| d.name == name)
    }

    pub fn validate(&self) -> Result<()> {
        for d in &self.dims {
            if !(d.lower.is_finite() && d.upper.is_finite() && d.lower < d.upper) {
                return Err(Error::Config(format!(
                    "dimension {} needs finite lower < upper, got [{}, {}]",
                    d.name, d.lower, d.upper
                )));
            }
            if d.bins < 2 {
                return Err(Error::Config(format!(
                    "dimension {} needs at least 2 bins, got {}",
                    d.name, d.bins
                )));
            }
        }
        Ok(())
    }

    /// Like [`validate`](Self::validate), and additionally requires the
    /// dimensions to be the scene parameters in serialization order, with
    /// bounds inside the permissible ranges.
    pub fn validate_scene(&self) -> Result<()> {
        self.validate()?;
        if self.dims.len() != SceneParameters::DIM {
            return Err(Error::DimensionMismatch {
                expected: SceneParameters::DIM,
                actual: self.dims.len(),
            });
        }
        for (d, r) in self.dims.iter().zip(PARAMETER_RANGES.iter()) {
            if d.name != r.name {
                return Err(Error::Config(format!(
                    "dimension order mismatch: expected {}, found {}",
                    r.name, d.name
                )));
            }
            if d.lower < r.lower || d.upper > r.upper {
                return Err(Error::Config(format!(
                    "{} bounds [{}, {}] exceed permissible range [{}, {}]",
                    d.name, d.lower, d.upper, r.lower, r.upper
                )));
            }
        }
        Ok(())
    }
}

/// Bin weights for one dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorTable {
    pub dim: usize,
    pub values: Vec<f64>,
}

impl PriorTable {
    pub fn uniform(dim: usize, bins: usize) -> Self {
        PriorTable {
            dim,
            values: vec![1.0; bins],
        }
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// The table as a probability vector.
    pub fn to_distribution(&self) -> Vec<f64> {
        sum_normalize(&self.values)
    }

    /// Total-variation distance between this table and the uniform
    /// distribution, both sum-normalized.
    pub fn tv_from_uniform(&self) -> f64 {
        let n = self.values.len() as f64;
        0.5 * self
            .to_distribution()
            .iter()
            .map(|p| (p - 1.0 / n).abs())
            .sum::<f64>()
    }

    fn is_valid(&self) -> bool {
        self.values.iter().all(|v| (0.0..=1.0).contains(v)) && self.max() == 1.0
    }
}

/// Divides every entry by the largest one.
pub fn max_normalize(table: &PriorTable) -> Result<PriorTable> {
    let max = table.max();
    if !(max > 0.0) || !max.is_finite() {
        return Err(Error::DegenerateTable { dim: table.dim });
    }
    Ok(PriorTable {
        dim: table.dim,
        values: table.values.iter().map(|v| v / max).collect(),
    })
}

pub fn sum_normalize(values: &[f64]) -> Vec<f64> {
    let total: f64 = values.iter().sum();
    if total > 0.0 {
        values.iter().map(|v| v / total).collect()
    } else {
        vec![0.0; values.len()]
    }
}

/// Product-factorized prior over a [`ParameterSpace`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JointPrior {
    pub space: ParameterSpace,
    pub tables: Vec<PriorTable>,
    pub iteration: usize,
}

pub fn uniform_prior(space: &ParameterSpace) -> JointPrior {
    JointPrior {
        tables: space
            .dims
            .iter()
            .enumerate()
            .map(|(i, d)| PriorTable::uniform(i, d.bins))
            .collect(),
        space: space.clone(),
        iteration: 0,
    }
}

impl JointPrior {
    /// Builds a prior from raw tables, max-normalizing each one.
    pub fn from_tables(space: ParameterSpace, raw: Vec<Vec<f64>>) -> Result<Self> {
        space.validate()?;
        if raw.len() != space.len() {
            return Err(Error::DimensionMismatch {
                expected: space.len(),
                actual: raw.len(),
            });
        }
        let mut tables = Vec::with_capacity(raw.len());
        for (i, (values, d)) in raw.into_iter().zip(&space.dims).enumerate() {
            if values.len() != d.bins {
                return Err(Error::DimensionMismatch {
                    expected: d.bins,
                    actual: values.len(),
                });
            }
            if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "table for {} has negative or non-finite entries",
                    d.name
                )));
            }
            tables.push(max_normalize(&PriorTable { dim: i, values })?);
        }
        Ok(JointPrior {
            space,
            tables,
            iteration: 0,
        })
    }

    /// Checks shape and the max-normalization invariant.
    pub fn validate(&self) -> Result<()> {
        self.space.validate()?;
        if self.tables.len() != self.space.len() {
            return Err(Error::DimensionMismatch {
                expected: self.space.len(),
                actual: self.tables.len(),
            });
        }
        for (i, (t, d)) in self.tables.iter().zip(&self.space.dims).enumerate() {
            if t.dim != i || t.values.len() != d.bins {
                return Err(Error::DimensionMismatch {
                    expected: d.bins,
                    actual: t.values.len(),
                });
            }
            if !t.is_valid() {
                return Err(Error::InvalidArgument(format!(
                    "table for {} is not max-normalized within [0, 1]",
                    d.name
                )));
            }
        }
        Ok(())
    }

    /// Draws one value per dimension by uniform proposal and table-weighted
    /// acceptance. The accepted value is uniform within its bin.
    pub fn sample_vector<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.space
            .dims
            .iter()
            .zip(&self.tables)
            .map(|(d, t)| loop {
                let u = rng.gen_range(d.lower..d.upper);
                let accept = t.values[d.bin_of(u)];
                if accept >= 1.0 || rng.gen::<f64>() < accept {
                    break u;
                }
            })
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let prior: JointPrior = serde_json::from_str(text)?;
        prior.validate()?;
        Ok(prior)
    }
}

/// Samples a full [`SceneParameters`] point; the prior's space must be the
/// scene space.
pub fn sample_theta<R: Rng + ?Sized>(prior: &JointPrior, rng: &mut R) -> Result<SceneParameters> {
    SceneParameters::from_vector(&prior.sample_vector(rng))
}

/// Elementwise product with per-dimension likelihood tables followed by
/// max-normalization.
pub fn bayes_update(prior: &JointPrior, likelihood: &[Vec<f64>]) -> Result<JointPrior> {
    if likelihood.len() != prior.tables.len() {
        return Err(Error::DimensionMismatch {
            expected: prior.tables.len(),
            actual: likelihood.len(),
        });
    }
    let mut tables = Vec::with_capacity(prior.tables.len());
    for (table, lik) in prior.tables.iter().zip(likelihood) {
        if lik.len() != table.values.len() {
            return Err(Error::DimensionMismatch {
                expected: table.values.len(),
                actual: lik.len(),
            });
        }
        if lik.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "likelihood for dimension {} has negative or non-finite entries",
                table.dim
            )));
        }
        let product = PriorTable {
            dim: table.dim,
            values: table.values.iter().zip(lik).map(|(p, l)| p * l).collect(),
        };
        tables.push(max_normalize(&product)?);
    }
    Ok(JointPrior {
        space: prior.space.clone(),
        tables,
        iteration: prior.iteration + 1,
    })
}

/// `sum p_i ln(p_i / q_i)` after sum-normalizing both inputs, adding
/// [`KL_EPSILON`] to every bin and renormalizing. Equal inputs give exactly 0.
pub fn table_kl(p: &[f64], q: &[f64]) -> f64 {
    debug_assert_eq!(p.len(), q.len());
    let p = smoothed(p);
    let q = smoothed(q);
    p.iter()
        .zip(&q)
        .map(|(pi, qi)| pi * (pi / qi).ln())
        .sum::<f64>()
        .max(0.0)
}

fn smoothed(t: &[f64]) -> Vec<f64> {
    let s: Vec<f64> = sum_normalize(t).iter().map(|v| v + KL_EPSILON).collect();
    let total: f64 = s.iter().sum();
    s.iter().map(|v| v / total).collect()
}
