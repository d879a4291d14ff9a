//! The adversarial tuning loop.
//!
//! One iteration draws `n_v` parameter vectors from the current prior, lays
//! out and renders a scene for each, trains a fresh discriminator against a
//! subsample of the target set, scores the generated batch, turns the scores
//! into per-dimension likelihood tables by weighted KDE and multiplies them
//! into the prior.

use std::time::{Duration, Instant};

use rand::seq::index::sample as sample_indices;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::discriminator::{self, TrainConfig, DEFAULT_HIDDEN};
use crate::error::{Error, Result};
use crate::kde::{likelihood_tables, KdeConfig};
use crate::priors::{bayes_update, table_kl, uniform_prior, JointPrior, ParameterSpace, DEFAULT_BINS};
use crate::renderer::{render_pair, FeatureImage, LabelImage, RenderConfig};
use crate::scene::{sample_layout, GibbsConfig, LayoutConfig, Region, SceneLayout, SceneParameters};
use crate::seed::{derive_seed, rng_for, stream};

/// Everything needed to turn a prior into rendered samples.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Generator {
    pub region: Region,
    pub gibbs: GibbsConfig,
    pub layout: LayoutConfig,
    pub render: RenderConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedSample {
    pub theta: Vec<f64>,
    pub layout: SceneLayout,
    pub features: FeatureImage,
    pub labels: LabelImage,
}

impl Generator {
    pub fn validate(&self) -> Result<()> {
        self.region.validate()?;
        self.gibbs.validate()?;
        self.layout.validate()?;
        self.render.validate()
    }

    /// Sample `index` of the stream `(seed, stream_tag)`; independent of any
    /// other index, so batches can be generated in parallel.
    pub fn sample(&self, prior: &JointPrior, seed: u64, stream_tag: u64, index: u64) -> Result<GeneratedSample> {
        let mut rng = rng_for(seed, stream_tag, index);
        let theta = prior.sample_vector(&mut rng);
        let params = SceneParameters::from_vector(&theta)?;
        let layout = sample_layout(&params, &self.region, &self.gibbs, &self.layout, &mut rng)?;
        let (features, labels) = render_pair(&params, &layout, &self.region, &self.render);
        Ok(GeneratedSample {
            theta,
            layout,
            features,
            labels,
        })
    }

    pub fn sample_batch(&self, prior: &JointPrior, seed: u64, stream_tag: u64, count: usize) -> Result<Vec<GeneratedSample>> {
        (0..count as u64)
            .into_par_iter()
            .map(|i| self.sample(prior, seed, stream_tag, i))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LoopConfig {
    /// Generated samples per iteration.
    pub n_v: usize,
    pub max_iterations: usize,
    /// Stop once held-out accuracy is at most `0.5 + convergence_epsilon`.
    pub convergence_epsilon: f64,
    pub held_out_fraction: f64,
}

impl Default for LoopConfig {
    fn default() -> Self {
        LoopConfig {
            n_v: 1000,
            max_iterations: 6,
            convergence_epsilon: 0.05,
            held_out_fraction: 0.2,
        }
    }
}

impl LoopConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_v < 10 {
            return Err(Error::Config(format!("n_v must be at least 10, got {}", self.n_v)));
        }
        if self.max_iterations > 100 {
            return Err(Error::Config(format!(
                "max_iterations must be at most 100, got {}",
                self.max_iterations
            )));
        }
        if !(0.0..0.5).contains(&self.convergence_epsilon) {
            return Err(Error::Config("convergence_epsilon must lie in [0, 0.5)".into()));
        }
        if !(self.held_out_fraction > 0.0 && self.held_out_fraction < 1.0) {
            return Err(Error::Config("held_out_fraction must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiscriminatorConfig {
    pub hidden: Vec<usize>,
    pub train: TrainConfig,
}

impl Default for DiscriminatorConfig {
    fn default() -> Self {
        DiscriminatorConfig {
            hidden: DEFAULT_HIDDEN.to_vec(),
            train: TrainConfig::default(),
        }
    }
}

/// Full configuration of a tuning run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TuningConfig {
    pub seed: u64,
    pub space: ParameterSpace,
    pub generator: Generator,
    pub discriminator: DiscriminatorConfig,
    pub kde: KdeConfig,
    pub tuning: LoopConfig,
}

impl Default for TuningConfig {
    fn default() -> Self {
        TuningConfig {
            seed: 0,
            space: ParameterSpace::scene(DEFAULT_BINS),
            generator: Generator::default(),
            discriminator: DiscriminatorConfig::default(),
            kde: KdeConfig::default(),
            tuning: LoopConfig::default(),
        }
    }
}

impl TuningConfig {
    pub fn validate(&self) -> Result<()> {
        self.space.validate_scene()?;
        self.generator.validate()?;
        self.discriminator.train.validate()?;
        if self.discriminator.hidden.contains(&0) {
            return Err(Error::Config("hidden layer sizes must be positive".into()));
        }
        self.kde.validate()?;
        self.tuning.validate()
    }
}

/// Target-domain feature vectors, plus the generating tables when the
/// target is synthetic.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetSet {
    pub features: Vec<Vec<f64>>,
    pub known_prior: Option<JointPrior>,
}

impl TargetSet {
    /// Renders `count` samples from the known prior `q`.
    pub fn synthetic(q: &JointPrior, generator: &Generator, count: usize, seed: u64) -> Result<Self> {
        let samples = generator.sample_batch(q, seed, stream::TARGET, count)?;
        Ok(TargetSet {
            features: samples.into_iter().map(|s| s.features.data).collect(),
            known_prior: Some(q.clone()),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    MaxIterations,
    Converged,
    Degenerate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub held_out_accuracy: f64,
    pub epochs_run: usize,
    pub final_train_loss: f64,
    pub mean_generated_score: f64,
    pub likelihood: Vec<Vec<f64>>,
    /// Prior tables after this iteration's update.
    pub posterior: Vec<Vec<f64>>,
    /// Whether `posterior` was carried into the next iteration; false on the
    /// iteration that detected convergence.
    pub applied: bool,
    /// Per-dimension `KL(P || Q)` of the prior in effect after this
    /// iteration, when the target tables are known.
    pub kl_to_target: Option<Vec<f64>>,
    #[serde(skip)]
    pub elapsed: Duration,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningReport {
    pub initial_kl_to_target: Option<Vec<f64>>,
    pub iterations: Vec<IterationRecord>,
    pub stop_reason: StopReason,
    /// Set when the loop stopped on an error.
    pub stop_message: Option<String>,
    pub final_prior: JointPrior,
}

pub fn kl_to_target(prior: &JointPrior, target: &JointPrior) -> Vec<f64> {
    prior
        .tables
        .iter()
        .zip(&target.tables)
        .map(|(p, q)| table_kl(&p.values, &q.values))
        .collect()
}

/// One pass of sample, render, train, score, estimate and update.
/// `iteration` keys all randomness of the pass.
pub fn run_iteration(
    prior: &JointPrior,
    target: &TargetSet,
    cfg: &TuningConfig,
    iteration: usize,
) -> Result<(JointPrior, IterationRecord)> {
    if target.features.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let started = Instant::now();
    let loop_cfg = &cfg.tuning;
    let iter_seed = derive_seed(cfg.seed, stream::ITERATION, iteration as u64);

    let generated = cfg
        .generator
        .sample_batch(prior, iter_seed, stream::GENERATED, loop_cfg.n_v)?;
    let fake: Vec<Vec<f64>> = generated.iter().map(|s| s.features.data.clone()).collect();
    let thetas: Vec<Vec<f64>> = generated.into_iter().map(|s| s.theta).collect();

    let take = loop_cfg.n_v.min(target.features.len());
    let mut sub_rng = rng_for(iter_seed, stream::TARGET_SUBSAMPLE, 0);
    let mut picked = sample_indices(&mut sub_rng, target.features.len(), take).into_vec();
    picked.sort_unstable();
    let real: Vec<&Vec<f64>> = picked.iter().map(|&i| &target.features[i]).collect();

    let mut split_rng = rng_for(iter_seed, stream::SPLIT, 0);
    let (real_train, real_held) = discriminator::split_indices(real.len(), loop_cfg.held_out_fraction, &mut split_rng);
    let (fake_train, fake_held) = discriminator::split_indices(fake.len(), loop_cfg.held_out_fraction, &mut split_rng);
    let real_train: Vec<Vec<f64>> = real_train.iter().map(|&i| real[i].clone()).collect();
    let fake_train: Vec<Vec<f64>> = fake_train.iter().map(|&i| fake[i].clone()).collect();

    let model_seed = derive_seed(iter_seed, stream::DISCRIMINATOR, cfg.discriminator.train.seed);
    let input_dim = cfg.generator.render.feature_len();
    let model = discriminator::init_model(input_dim, &cfg.discriminator.hidden, model_seed);
    let train_cfg = TrainConfig {
        seed: model_seed,
        ..cfg.discriminator.train
    };
    let (model, history) = discriminator::train(&model, &real_train, &fake_train, &train_cfg)?;

    let mut held: Vec<Vec<f64>> = real_held.iter().map(|&i| real[i].clone()).collect();
    let mut labels = vec![true; held.len()];
    held.extend(fake_held.iter().map(|&i| fake[i].clone()));
    labels.resize(held.len(), false);
    let held_out_accuracy = discriminator::accuracy(&model, &held, &labels)?;

    let scores = discriminator::score_batch(&model, &fake)?;
    let likelihood = likelihood_tables(&thetas, &scores, &prior.space, &cfg.kde)?;
    let posterior = bayes_update(prior, &likelihood)?;

    let kl = target.known_prior.as_ref().map(|q| kl_to_target(&posterior, q));
    let record = IterationRecord {
        iteration,
        held_out_accuracy,
        epochs_run: history.len(),
        final_train_loss: history.last().copied().unwrap_or(f64::NAN),
        mean_generated_score: scores.iter().sum::<f64>() / scores.len() as f64,
        likelihood,
        posterior: posterior.tables.iter().map(|t| t.values.clone()).collect(),
        applied: true,
        kl_to_target: kl,
        elapsed: started.elapsed(),
    };
    Ok((posterior, record))
}

/// Iterates from the uniform prior until the discriminator is at chance,
/// the iteration cap is reached, or a likelihood table degenerates.
pub fn run(cfg: &TuningConfig, target: &TargetSet) -> Result<TuningReport> {
    cfg.validate()?;
    if target.features.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if let Some(bad) = target.features.iter().find(|f| f.len() != cfg.generator.render.feature_len()) {
        return Err(Error::DimensionMismatch {
            expected: cfg.generator.render.feature_len(),
            actual: bad.len(),
        });
    }
    let mut prior = uniform_prior(&cfg.space);
    let initial_kl = target.known_prior.as_ref().map(|q| kl_to_target(&prior, q));
    let mut iterations = Vec::new();
    let mut stop_reason = StopReason::MaxIterations;
    let mut stop_message = None;

    for i in 0..cfg.tuning.max_iterations {
        match run_iteration(&prior, target, cfg, i) {
            Ok((posterior, mut record)) => {
                if record.held_out_accuracy <= 0.5 + cfg.tuning.convergence_epsilon {
                    record.applied = false;
                    record.kl_to_target = target.known_prior.as_ref().map(|q| kl_to_target(&prior, q));
                    iterations.push(record);
                    stop_reason = StopReason::Converged;
                    break;
                }
                prior = posterior;
                iterations.push(record);
            }
            Err(err @ Error::DegenerateTable { .. }) => {
                stop_reason = StopReason::Degenerate;
                stop_message = Some(err.to_string());
                break;
            }
            Err(err) => return Err(err),
        }
    }

    Ok(TuningReport {
        initial_kl_to_target: initial_kl,
        iterations,
        stop_reason,
        stop_message,
        final_prior: prior,
    })
}
