//! Before/after evaluation harness: holds out a stratified fraction of the
//! full dataset, trains linear and RBF probes on the full pool, the retained
//! pool, and a size-matched random control, and reports holdout accuracies
//! plus mask-based removal fractions for synthetic runs.

use std::collections::{BTreeMap, HashMap, HashSet};

use anyhow::{bail, Context};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use aflite::classifiers::{
    accuracy, rbf_gamma_heuristic, train_linear, train_rbf, TrainConfig,
};
use aflite::dataset::{EmbeddedDataset, FilterResult};
use aflite::matrix::Matrix;
use aflite::seeding::derive_seed;

const HOLDOUT_STREAM: u64 = 101;
const CONTROL_STREAM: u64 = 102;
const LINEAR_STREAM: u64 = 103;
const RBF_STREAM: u64 = 104;
const RBF_REGULARIZATION: f64 = 1e-3;
/// The linear probe is regularized harder than the filtering adversary so
/// the before/after comparison reflects the bulk signal in each training
/// set rather than a handful of high-leverage instances.
const LINEAR_PROBE_L2: f64 = 5e-2;

#[derive(Debug, Clone, Copy, Serialize)]
pub struct DatasetSizes {
    pub original: usize,
    pub retained: usize,
    /// Size of the random-control training set, matched to the retained
    /// training pool.
    pub control: usize,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct AccuracyTriple {
    /// Trained on everything outside the holdout.
    pub before: f64,
    /// Trained on the retained instances outside the holdout.
    pub after: f64,
    /// Trained on a uniformly random subset of the same size.
    pub random_control: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct EvaluationReport {
    pub dataset_sizes: DatasetSizes,
    pub linear_accuracy: AccuracyTriple,
    /// Present only for binary tasks.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rbf_accuracy: Option<AccuracyTriple>,
    /// Fraction of bias-masked instances removed (synthetic runs only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bias_removal: Option<f64>,
    /// Fraction of flip-masked instances removed (synthetic runs only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub flip_removal: Option<f64>,
    pub holdout_fraction: f64,
    /// Seed all evaluation randomness derives from; together with the
    /// retained ids this makes every number in the report recomputable.
    pub seed: u64,
}

fn mask_removal_fraction(mask: &[bool], removed: &[bool]) -> Option<f64> {
    let total = mask.iter().filter(|&&m| m).count();
    if total == 0 {
        return None;
    }
    let hit = mask
        .iter()
        .zip(removed)
        .filter(|&(&m, &r)| m && r)
        .count();
    Some(hit as f64 / total as f64)
}

struct Probe<'a> {
    dataset: &'a EmbeddedDataset,
    holdout_x: Matrix,
    holdout_y: Vec<usize>,
    seed: u64,
}

impl Probe<'_> {
    fn linear(&self, train: &[usize], which: u64) -> anyhow::Result<f64> {
        let x = self.dataset.features().select_rows(train);
        let y: Vec<usize> = train.iter().map(|&i| self.dataset.label(i)).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(self.seed, LINEAR_STREAM, which));
        let config = TrainConfig {
            l2_penalty: LINEAR_PROBE_L2,
            ..TrainConfig::default()
        };
        let model = train_linear(&x, &y, &config, &mut rng).context("training linear probe")?;
        Ok(accuracy(&model, &self.holdout_x, &self.holdout_y)?)
    }

    fn rbf(&self, train: &[usize], which: u64) -> anyhow::Result<f64> {
        let x = self.dataset.features().select_rows(train);
        let y: Vec<usize> = train.iter().map(|&i| self.dataset.label(i)).collect();
        let gamma = rbf_gamma_heuristic(&x);
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(self.seed, RBF_STREAM, which));
        let model = train_rbf(&x, &y, gamma, RBF_REGULARIZATION, &mut rng)
            .context("training rbf probe")?;
        Ok(accuracy(&model, &self.holdout_x, &self.holdout_y)?)
    }
}

/// Evaluates a filtering result against the full dataset.
pub fn evaluate(
    dataset: &EmbeddedDataset,
    result: &FilterResult,
    bias_mask: Option<&[bool]>,
    flip_mask: Option<&[bool]>,
    holdout_fraction: f64,
    seed: u64,
) -> anyhow::Result<EvaluationReport> {
    if !(holdout_fraction > 0.0 && holdout_fraction < 1.0) {
        bail!("holdout fraction {holdout_fraction} must lie strictly between 0 and 1");
    }
    for (name, mask) in [("bias", bias_mask), ("flip", flip_mask)] {
        if let Some(m) = mask {
            if m.len() != dataset.len() {
                bail!("{name} mask covers {} instances, dataset has {}", m.len(), dataset.len());
            }
        }
    }

    let id_index: HashMap<&str, usize> = dataset
        .ids()
        .iter()
        .enumerate()
        .map(|(i, id)| (id.as_str(), i))
        .collect();
    let mut retained = vec![false; dataset.len()];
    for id in &result.retained_ids {
        let Some(&i) = id_index.get(id.as_str()) else {
            bail!("retained id {id:?} does not occur in the dataset");
        };
        retained[i] = true;
    }
    let removed: Vec<bool> = retained.iter().map(|&r| !r).collect();

    // Stratified holdout over the full dataset.
    let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in 0..dataset.len() {
        by_class.entry(dataset.label(i)).or_default().push(i);
    }
    let mut holdout_rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, HOLDOUT_STREAM, 0));
    let mut in_holdout = vec![false; dataset.len()];
    for members in by_class.values() {
        let mut order = members.clone();
        order.shuffle(&mut holdout_rng);
        let take = ((holdout_fraction * members.len() as f64).round() as usize)
            .min(members.len().saturating_sub(1));
        for &i in order.iter().take(take) {
            in_holdout[i] = true;
        }
    }
    let holdout: Vec<usize> = (0..dataset.len()).filter(|&i| in_holdout[i]).collect();
    let pool: Vec<usize> = (0..dataset.len()).filter(|&i| !in_holdout[i]).collect();
    if holdout.is_empty() {
        bail!("holdout fraction {holdout_fraction} selects no instances");
    }

    let retained_pool: Vec<usize> = pool.iter().copied().filter(|&i| retained[i]).collect();
    let retained_classes: HashSet<usize> =
        retained_pool.iter().map(|&i| dataset.label(i)).collect();
    if retained_pool.len() < 2 || retained_classes.len() < 2 {
        bail!(
            "retained set too small to train: {} trainable instances across {} classes",
            retained_pool.len(),
            retained_classes.len()
        );
    }

    // Random control of the same training size, drawn from the same pool.
    let mut control_rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, CONTROL_STREAM, 0));
    let mut control = pool.clone();
    control.shuffle(&mut control_rng);
    control.truncate(retained_pool.len());
    control.sort_unstable();

    let probe = Probe {
        dataset,
        holdout_x: dataset.features().select_rows(&holdout),
        holdout_y: holdout.iter().map(|&i| dataset.label(i)).collect(),
        seed,
    };

    let linear_accuracy = AccuracyTriple {
        before: probe.linear(&pool, 0)?,
        after: probe.linear(&retained_pool, 1)?,
        random_control: probe.linear(&control, 2)?,
    };
    let rbf_accuracy = if dataset.n_classes() == 2 {
        Some(AccuracyTriple {
            before: probe.rbf(&pool, 0)?,
            after: probe.rbf(&retained_pool, 1)?,
            random_control: probe.rbf(&control, 2)?,
        })
    } else {
        None
    };

    Ok(EvaluationReport {
        dataset_sizes: DatasetSizes {
            original: dataset.len(),
            retained: result.retained_ids.len(),
            control: control.len(),
        },
        linear_accuracy,
        rbf_accuracy,
        bias_removal: bias_mask.and_then(|m| mask_removal_fraction(m, &removed)),
        flip_removal: flip_mask.and_then(|m| mask_removal_fraction(m, &removed)),
        holdout_fraction,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use aflite::dataset::FilterResult;

    fn toy_dataset(n: usize) -> EmbeddedDataset {
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|i| vec![if i % 2 == 0 { -3.0 } else { 3.0 } + (i as f64) * 0.01])
            .collect();
        let labels: Vec<usize> = (0..n).map(|i| i % 2).collect();
        EmbeddedDataset::new(
            (0..n).map(|i| format!("i{i}")).collect(),
            Matrix::from_rows(&rows).unwrap(),
            labels,
        )
        .unwrap()
    }

    fn retain_all(dataset: &EmbeddedDataset) -> FilterResult {
        FilterResult {
            retained_ids: dataset.ids().to_vec(),
            phases: vec![],
        }
    }

    #[test]
    fn retaining_everything_gives_equal_before_and_after() {
        let dataset = toy_dataset(40);
        let result = retain_all(&dataset);
        let report = evaluate(&dataset, &result, None, None, 0.2, 5).unwrap();
        assert_eq!(report.linear_accuracy.before, report.linear_accuracy.after);
        assert_eq!(report.dataset_sizes.original, 40);
        assert_eq!(report.dataset_sizes.retained, 40);
        // control is drawn at the same size as the retained training pool
        assert_eq!(report.dataset_sizes.control, 32);
        assert!(report.bias_removal.is_none());
    }

    #[test]
    fn removal_fractions_follow_masks() {
        let dataset = toy_dataset(10);
        // drop i0 and i2
        let result = FilterResult {
            retained_ids: dataset
                .ids()
                .iter()
                .filter(|id| id.as_str() != "i0" && id.as_str() != "i2")
                .cloned()
                .collect(),
            phases: vec![],
        };
        let mut bias = vec![false; 10];
        bias[0] = true;
        bias[2] = true;
        bias[4] = true;
        bias[5] = true;
        let mut flip = vec![false; 10];
        flip[2] = true;
        let report = evaluate(&dataset, &result, Some(&bias), Some(&flip), 0.2, 9).unwrap();
        assert_eq!(report.bias_removal, Some(0.5));
        assert_eq!(report.flip_removal, Some(1.0));
    }

    #[test]
    fn too_small_retained_set_is_an_error() {
        let dataset = toy_dataset(10);
        let result = FilterResult {
            retained_ids: vec!["i0".to_string()],
            phases: vec![],
        };
        let err = evaluate(&dataset, &result, None, None, 0.2, 1).unwrap_err();
        assert!(err.to_string().contains("too small"), "{err}");
    }

    #[test]
    fn unknown_retained_id_is_an_error() {
        let dataset = toy_dataset(10);
        let result = FilterResult {
            retained_ids: vec!["nope".to_string()],
            phases: vec![],
        };
        let err = evaluate(&dataset, &result, None, None, 0.2, 1).unwrap_err();
        assert!(err.to_string().contains("nope"), "{err}");
    }

    #[test]
    fn invalid_holdout_fraction_rejected() {
        let dataset = toy_dataset(10);
        let result = retain_all(&dataset);
        assert!(evaluate(&dataset, &result, None, None, 0.0, 1).is_err());
        assert!(evaluate(&dataset, &result, None, None, 1.0, 1).is_err());
    }

    #[test]
    fn evaluation_is_deterministic_per_seed() {
        let dataset = toy_dataset(30);
        let result = retain_all(&dataset);
        let a = evaluate(&dataset, &result, None, None, 0.25, 11).unwrap();
        let b = evaluate(&dataset, &result, None, None, 0.25, 11).unwrap();
        assert_eq!(a.linear_accuracy.before, b.linear_accuracy.before);
        assert_eq!(
            a.rbf_accuracy.unwrap().after.to_bits(),
            b.rbf_accuracy.unwrap().after.to_bits()
        );
    }
}
