//! Generator for the controlled bias-removal experiment: two concentric
//! circles (a binary task a linear model cannot solve), class-correlated
//! Gaussian bias features injected into a fraction of each class (making the
//! task linearly solvable), pure-noise features elsewhere, and optional
//! label flipping at the widest separation.
//!
//! Flipped instances keep their circle position but carry the bias
//! signature of their new label, so they stay linearly predictable (and
//! removable by the filter) while contradicting the circle geometry that a
//! non-linear model relies on.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dataset::EmbeddedDataset;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::seeding::derive_seed;

/// Inner circle radius; the outer radius is this plus the separation gap.
const INNER_RADIUS: f64 = 1.0;
/// Gaussian jitter applied to each point's radius.
const RADIAL_JITTER: f64 = 0.1;

/// Full parameterization of the generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    /// Points per class.
    pub n_points: usize,
    /// Gap widths between the circle radii, largest first by convention.
    pub separations: Vec<f64>,
    /// Fraction of each class that receives bias features.
    pub bias_fraction: f64,
    /// Number of appended bias/noise columns.
    pub bias_dims: usize,
    /// Per-class means of the bias features (class 0, class 1).
    pub bias_means: (Vec<f64>, Vec<f64>),
    pub bias_stddev: f64,
    /// Stddev of the appended columns for non-biased instances.
    pub noise_stddev: f64,
    /// Fraction of biased instances whose labels are flipped, applied only
    /// at the largest separation.
    pub flip_fraction: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            n_points: 300,
            separations: vec![1.5, 1.0, 0.6, 0.3],
            bias_fraction: 0.75,
            bias_dims: 2,
            bias_means: (vec![0.3, 0.3], vec![-0.3, -0.3]),
            bias_stddev: 0.05,
            noise_stddev: 0.01,
            flip_fraction: 0.1,
            seed: 7,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_points == 0 {
            return Err(Error::InvalidSpec("n_points must be >= 1".into()));
        }
        if self.separations.is_empty() {
            return Err(Error::InvalidSpec("at least one separation level required".into()));
        }
        if let Some(&gap) = self.separations.iter().find(|&&g| !(g > 0.0) || !g.is_finite()) {
            return Err(Error::InvalidSpec(format!(
                "separation gap {gap} gives overlapping annuli; gaps must be positive"
            )));
        }
        if !(0.0..=1.0).contains(&self.bias_fraction) {
            return Err(Error::InvalidSpec("bias_fraction must lie in [0, 1]".into()));
        }
        if !(0.0..=1.0).contains(&self.flip_fraction) {
            return Err(Error::InvalidSpec("flip_fraction must lie in [0, 1]".into()));
        }
        if self.bias_dims == 0 {
            return Err(Error::InvalidSpec("bias_dims must be >= 1".into()));
        }
        if self.bias_means.0.len() != self.bias_dims || self.bias_means.1.len() != self.bias_dims {
            return Err(Error::InvalidSpec(format!(
                "bias means must have {} entries each",
                self.bias_dims
            )));
        }
        if self.bias_means.0 == self.bias_means.1 {
            return Err(Error::InvalidSpec(
                "the two bias means must differ, otherwise the bias is uninformative".into(),
            ));
        }
        if !(self.bias_stddev > 0.0) || !(self.noise_stddev > 0.0) {
            return Err(Error::InvalidSpec("stddevs must be positive".into()));
        }
        Ok(())
    }
}

/// Generated dataset plus the ground-truth masks used to measure removal
/// quality.
#[derive(Debug, Clone)]
pub struct SyntheticDataset {
    pub dataset: EmbeddedDataset,
    /// True where the instance carries bias features.
    pub bias_mask: Vec<bool>,
    /// True where the label was flipped; always a subset of `bias_mask`.
    pub flip_mask: Vec<bool>,
}

/// Generates the dataset for one separation level. Class 0 lies on the
/// inner circle, class 1 on the outer one. Deterministic per
/// (spec, separation_index).
pub fn generate(spec: &SyntheticSpec, separation_index: usize) -> Result<SyntheticDataset> {
    spec.validate()?;
    let Some(&gap) = spec.separations.get(separation_index) else {
        return Err(Error::InvalidSpec(format!(
            "separation index {separation_index} out of range for {} levels",
            spec.separations.len()
        )));
    };
    let largest = spec
        .separations
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    let apply_flips = gap == largest && spec.flip_fraction > 0.0;

    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, separation_index as u64, 0));
    let total = 2 * spec.n_points;

    // Circle coordinates, class 0 block then class 1 block.
    let mut coords = Vec::with_capacity(total);
    let mut labels = Vec::with_capacity(total);
    for class in 0..2usize {
        let radius = if class == 0 { INNER_RADIUS } else { INNER_RADIUS + gap };
        for _ in 0..spec.n_points {
            let theta = rng.random_range(0.0..std::f64::consts::TAU);
            let jitter: f64 = rng.sample(StandardNormal);
            let r = radius + RADIAL_JITTER * jitter;
            coords.push((r * theta.cos(), r * theta.sin()));
            labels.push(class);
        }
    }

    // Bias carriers, drawn per class.
    let mut bias_mask = vec![false; total];
    let n_biased_per_class = (spec.bias_fraction * spec.n_points as f64).round() as usize;
    for class in 0..2usize {
        let offset = class * spec.n_points;
        let mut order: Vec<usize> = (offset..offset + spec.n_points).collect();
        use rand::seq::SliceRandom;
        order.shuffle(&mut rng);
        for &i in order.iter().take(n_biased_per_class) {
            bias_mask[i] = true;
        }
    }

    // Label flips among biased instances, only at the widest separation.
    let mut flip_mask = vec![false; total];
    if apply_flips {
        for class in 0..2usize {
            let offset = class * spec.n_points;
            let mut biased: Vec<usize> = (offset..offset + spec.n_points)
                .filter(|&i| bias_mask[i])
                .collect();
            use rand::seq::SliceRandom;
            biased.shuffle(&mut rng);
            let n_flips = (spec.flip_fraction * biased.len() as f64).round() as usize;
            for &i in biased.iter().take(n_flips) {
                flip_mask[i] = true;
                labels[i] = 1 - labels[i];
            }
        }
    }

    // Appended columns: bias features follow the (possibly flipped) label;
    // non-biased instances get shared zero-mean noise.
    let d = 2 + spec.bias_dims;
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(total);
    for i in 0..total {
        let mut row = Vec::with_capacity(d);
        row.push(coords[i].0);
        row.push(coords[i].1);
        if bias_mask[i] {
            let mean = if labels[i] == 0 { &spec.bias_means.0 } else { &spec.bias_means.1 };
            for m in mean {
                let g: f64 = rng.sample(StandardNormal);
                row.push(m + spec.bias_stddev * g);
            }
        } else {
            for _ in 0..spec.bias_dims {
                let g: f64 = rng.sample(StandardNormal);
                row.push(spec.noise_stddev * g);
            }
        }
        rows.push(row);
    }

    let ids = (0..total).map(|i| format!("s{i:05}")).collect();
    let dataset = EmbeddedDataset::new(ids, Matrix::from_rows(&rows)?, labels)?;
    Ok(SyntheticDataset {
        dataset,
        bias_mask,
        flip_mask,
    })
}
