//! Dataset-level statistics: pooled intensity histograms, histogram KL
//! divergence and per-class pixel proportions.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::priors::table_kl;
use crate::renderer::{FeatureImage, LabelImage};
use crate::scene::ObjectClass;

pub const DEFAULT_HISTOGRAM_BINS: usize = 64;

/// Equal-width histogram over `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    /// Raw counts per bin.
    pub counts: Vec<f64>,
    /// `counts / max(counts)`, or all zeros for an empty histogram.
    pub frequencies: Vec<f64>,
    pub max_normalized: bool,
}

impl Histogram {
    pub fn bins(&self) -> usize {
        self.counts.len()
    }

    pub fn edges(&self, bin: usize) -> (f64, f64) {
        let n = self.bins() as f64;
        (bin as f64 / n, (bin + 1) as f64 / n)
    }

    pub fn from_counts(counts: Vec<f64>) -> Self {
        let max = counts.iter().copied().fold(0.0, f64::max);
        let frequencies = if max > 0.0 {
            counts.iter().map(|c| c / max).collect()
        } else {
            vec![0.0; counts.len()]
        };
        Histogram {
            max_normalized: max > 0.0,
            counts,
            frequencies,
        }
    }

    /// CSV with header `bin_left,bin_right,frequency`.
    pub fn write_csv<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        writeln!(out, "bin_left,bin_right,frequency")?;
        for (i, f) in self.frequencies.iter().enumerate() {
            let (l, r) = self.edges(i);
            writeln!(out, "{l},{r},{f}")?;
        }
        Ok(())
    }
}

fn bin_of(value: f64, bins: usize) -> usize {
    ((value.clamp(0.0, 1.0) * bins as f64) as usize).min(bins - 1)
}

/// Pools the intensity cells of every image into one max-normalized histogram.
pub fn intensity_histogram(images: &[FeatureImage], bins: usize) -> Result<Histogram> {
    if bins < 2 {
        return Err(Error::InvalidArgument(format!("histogram needs at least 2 bins, got {bins}")));
    }
    if images.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut counts = vec![0.0; bins];
    for img in images {
        for v in img.intensity() {
            counts[bin_of(*v, bins)] += 1.0;
        }
    }
    Ok(Histogram::from_counts(counts))
}

/// `KL(p || q)` of the sum-normalized histograms, with the same smoothing as
/// the prior-table KL. Not symmetric.
pub fn histogram_kl(p: &Histogram, q: &Histogram) -> Result<f64> {
    if p.bins() != q.bins() {
        return Err(Error::BinningMismatch {
            left: p.bins(),
            right: q.bins(),
        });
    }
    Ok(table_kl(&p.counts, &q.counts))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassProportions {
    /// Fraction of labelled (non-background) cells per class id.
    pub fractions: [f64; ObjectClass::COUNT],
    /// Set when no cell in the dataset carries a class label.
    pub all_background: bool,
}

pub fn class_pixel_proportions(labels: &[LabelImage]) -> Result<ClassProportions> {
    if labels.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut counts = [0u64; ObjectClass::COUNT];
    for img in labels {
        for &l in &img.labels {
            if let Some(slot) = counts.get_mut(l as usize) {
                *slot += 1;
            }
        }
    }
    let total: u64 = counts.iter().sum();
    let mut fractions = [0.0; ObjectClass::COUNT];
    if total > 0 {
        for (f, c) in fractions.iter_mut().zip(counts) {
            *f = c as f64 / total as f64;
        }
    }
    Ok(ClassProportions {
        fractions,
        all_background: total == 0,
    })
}
