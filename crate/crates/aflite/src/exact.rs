//! Exact, exponential-time reference implementations of representation bias
//! and optimum bias reduction for tiny datasets. These serve as the
//! correctness oracle for the iterative filter: the factored per-instance
//! sum must reproduce the direct split-average exactly, and exhaustive
//! subset search gives the true optimum the heuristics are measured against.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::classifiers::{train_linear, Classifier, LinearModel, TrainConfig};
use crate::dataset::EmbeddedDataset;
use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Default cap on the number of enumerated train/test splits.
pub const DEFAULT_SPLIT_BUDGET: u64 = 50_000;
/// Exhaustive subset search is capped at 2^14 subsets.
pub const SEARCH_SIZE_CAP: usize = 14;
/// Fixed trainer seed inside enumeration, so the exact oracle is a pure
/// function of its inputs.
const EXACT_TRAIN_SEED: u64 = 0x0E2A_C75E;

/// Exact representation bias of a subset.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactBiasReport {
    /// Indices of the evaluated subset, ascending.
    pub subset: Vec<usize>,
    /// Expected out-of-sample accuracy over all size-t train splits, in [0,1].
    pub bias: f64,
    pub evaluated_splits: u64,
}

/// Both algebraic routes to the representation bias, from one enumeration.
#[derive(Debug, Clone, PartialEq)]
pub struct BiasEnumeration {
    /// Direct form: mean over splits of the per-split test accuracy.
    pub split_mean_accuracy: f64,
    /// Factored form: sum over instances of the simplified predictability
    /// score (per-instance accuracy divided by |S|).
    pub factored_sum: f64,
    /// Per-instance conditional accuracy E[correct(i) | i in test], in [0,1].
    /// This is |S| times the simplified predictability score, i.e. the exact
    /// counterpart of the correct/total ratio the filter estimates.
    pub instance_accuracy: Vec<f64>,
    pub evaluated_splits: u64,
}

pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc
}

/// Visits every size-k subset of 0..n in lexicographic order.
fn for_each_combination<F>(n: usize, k: usize, mut f: F) -> Result<()>
where
    F: FnMut(&[usize]) -> Result<()>,
{
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        f(&idx)?;
        // advance to the next combination
        let mut i = k;
        loop {
            if i == 0 {
                return Ok(());
            }
            i -= 1;
            if idx[i] != i + n - k {
                idx[i] += 1;
                for j in (i + 1)..k {
                    idx[j] = idx[j - 1] + 1;
                }
                break;
            }
        }
    }
}

/// Trains on the given split; a single-class split yields the constant
/// predictor of that class, which is itself a member of the linear family.
fn train_split(features: &Matrix, labels: &[usize], n_classes: usize) -> Result<LinearModel> {
    let first = labels[0];
    if labels.iter().all(|&y| y == first) {
        return Ok(LinearModel::constant(first, n_classes, features.cols()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(EXACT_TRAIN_SEED);
    train_linear(features, labels, &TrainConfig::default(), &mut rng)
}

/// Enumerates every size-t train subset of the given instances, trains on
/// each, and scores the complement. Returns the bias through both algebraic
/// routes plus the exact per-instance accuracies.
pub fn enumerate_bias(
    features: &Matrix,
    labels: &[usize],
    t: usize,
    budget: u64,
) -> Result<BiasEnumeration> {
    let n = features.rows();
    if n != labels.len() {
        return Err(Error::Contract(format!(
            "{n} feature rows but {} labels",
            labels.len()
        )));
    }
    if t == 0 || t >= n {
        return Err(Error::InvalidPartition { train: t, working_set: n });
    }
    let required = binomial(n, t);
    if required > u128::from(budget) {
        return Err(Error::BudgetExceeded { required, budget });
    }
    let n_classes = labels.iter().copied().max().unwrap() + 1;

    let mut split_acc_sum = 0.0;
    let mut splits = 0u64;
    let mut correct = vec![0u32; n];
    let mut counted = vec![0u32; n];
    let mut in_train = vec![false; n];

    for_each_combination(n, t, |train| {
        in_train.fill(false);
        for &i in train {
            in_train[i] = true;
        }
        let train_x = features.select_rows(train);
        let train_y: Vec<usize> = train.iter().map(|&i| labels[i]).collect();
        let model = train_split(&train_x, &train_y, n_classes)?;

        let mut split_correct = 0u32;
        let mut split_total = 0u32;
        for i in 0..n {
            if in_train[i] {
                continue;
            }
            let hit = model.predict(features.row(i))? == labels[i];
            counted[i] += 1;
            split_total += 1;
            if hit {
                correct[i] += 1;
                split_correct += 1;
            }
        }
        split_acc_sum += f64::from(split_correct) / f64::from(split_total);
        splits += 1;
        Ok(())
    })?;

    let instance_accuracy: Vec<f64> = (0..n)
        .map(|i| f64::from(correct[i]) / f64::from(counted[i]))
        .collect();
    let split_mean_accuracy = split_acc_sum / splits as f64;
    let factored_sum = instance_accuracy.iter().sum::<f64>() / n as f64;
    debug_assert!(
        (split_mean_accuracy - factored_sum).abs() <= 1e-9 * split_mean_accuracy.abs().max(1.0),
        "refactoring identity violated: {split_mean_accuracy} vs {factored_sum}"
    );
    Ok(BiasEnumeration {
        split_mean_accuracy,
        factored_sum,
        instance_accuracy,
        evaluated_splits: splits,
    })
}

/// Exact representation bias of the given instances under the default split
/// budget.
pub fn exact_representation_bias(
    features: &Matrix,
    labels: &[usize],
    t: usize,
) -> Result<ExactBiasReport> {
    let enumeration = enumerate_bias(features, labels, t, DEFAULT_SPLIT_BUDGET)?;
    Ok(ExactBiasReport {
        subset: (0..features.rows()).collect(),
        bias: enumeration.split_mean_accuracy,
        evaluated_splits: enumeration.evaluated_splits,
    })
}

/// Exact per-instance conditional accuracies (the enumeration counterpart of
/// the filter's correct/total scores).
pub fn exact_predictability(features: &Matrix, labels: &[usize], t: usize) -> Result<Vec<f64>> {
    Ok(enumerate_bias(features, labels, t, DEFAULT_SPLIT_BUDGET)?.instance_accuracy)
}

/// Exhaustive optimum bias reduction: enumerates every subset of size >= n,
/// evaluates its exact bias, and returns the minimizer. Ties go to the
/// lexicographically smallest index set.
pub fn afopt_search(dataset: &EmbeddedDataset, n: usize, t: usize) -> Result<ExactBiasReport> {
    let size = dataset.len();
    if size > SEARCH_SIZE_CAP {
        return Err(Error::SearchCapExceeded { size, cap: SEARCH_SIZE_CAP });
    }
    if n == 0 || n > size {
        return Err(Error::InvalidConfig(format!(
            "target size n = {n} must satisfy 1 <= n <= {size}"
        )));
    }
    if t >= n {
        return Err(Error::InvalidConfig(format!(
            "train size t = {t} must be smaller than the minimum subset size n = {n}"
        )));
    }

    let masks: Vec<u32> = (1u32..(1u32 << size))
        .filter(|m| m.count_ones() as usize >= n)
        .collect();

    let candidates: Vec<ExactBiasReport> = masks
        .into_par_iter()
        .map(|mask| -> Result<ExactBiasReport> {
            let subset: Vec<usize> = (0..size).filter(|i| mask & (1 << i) != 0).collect();
            let features = dataset.features().select_rows(&subset);
            let labels: Vec<usize> = subset.iter().map(|&i| dataset.label(i)).collect();
            let enumeration = enumerate_bias(&features, &labels, t, DEFAULT_SPLIT_BUDGET)?;
            Ok(ExactBiasReport {
                subset,
                bias: enumeration.split_mean_accuracy,
                evaluated_splits: enumeration.evaluated_splits,
            })
        })
        .collect::<Result<_>>()?;

    let best = candidates
        .into_iter()
        .min_by(|a, b| a.bias.total_cmp(&b.bias).then_with(|| a.subset.cmp(&b.subset)))
        .expect("at least one subset of size >= n exists");
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn gaussian_features(n: usize, d: usize, seed: u64) -> Matrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect())
            .collect();
        Matrix::from_rows(&rows).unwrap()
    }

    #[test]
    fn uninformative_features_give_chance_bias() {
        let features = gaussian_features(8, 2, 40);
        let labels = vec![0, 1, 0, 1, 0, 1, 0, 1];
        let report = exact_representation_bias(&features, &labels, 4).unwrap();
        assert_eq!(report.evaluated_splits, 70); // C(8,4)
        assert!(
            (report.bias - 0.5).abs() <= 0.1,
            "chance-level bias {}",
            report.bias
        );
    }

    #[test]
    fn threshold_labels_give_high_bias() {
        // wide-margin threshold of feature 0: every split with both classes
        // present separates the test side perfectly
        let values = [-4.0, -3.0, -2.0, -1.0, 1.0, 2.0, 3.0, 4.0];
        let rows: Vec<Vec<f64>> = values.iter().map(|&v| vec![v]).collect();
        let features = Matrix::from_rows(&rows).unwrap();
        let labels: Vec<usize> = values.iter().map(|&v| usize::from(v > 0.0)).collect();
        let report = exact_representation_bias(&features, &labels, 4).unwrap();
        assert!(report.bias >= 0.95, "separable bias {}", report.bias);
    }

    #[test]
    fn both_bias_forms_agree_to_machine_precision() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for &(n, t) in &[(5usize, 2usize), (7, 3), (8, 4), (9, 2)] {
            let features = gaussian_features(n, 2, 100 + n as u64);
            let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..2)).collect();
            if labels.iter().all(|&y| y == labels[0]) {
                continue;
            }
            let e = enumerate_bias(&features, &labels, t, DEFAULT_SPLIT_BUDGET).unwrap();
            let rel = (e.split_mean_accuracy - e.factored_sum).abs()
                / e.split_mean_accuracy.abs().max(1.0);
            assert!(rel <= 1e-9, "forms diverge by {rel}");
        }
    }

    #[test]
    fn budget_refusal_names_required_splits() {
        let features = gaussian_features(30, 1, 5);
        let labels: Vec<usize> = (0..30).map(|i| i % 2).collect();
        let err = enumerate_bias(&features, &labels, 15, DEFAULT_SPLIT_BUDGET).unwrap_err();
        match err {
            Error::BudgetExceeded { required, budget } => {
                assert_eq!(required, binomial(30, 15));
                assert_eq!(budget, DEFAULT_SPLIT_BUDGET);
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn search_cap_refusal() {
        let features = gaussian_features(15, 1, 6);
        let labels: Vec<usize> = (0..15).map(|i| i % 2).collect();
        let ids = (0..15).map(|i| format!("i{i}")).collect();
        let dataset = EmbeddedDataset::new(ids, features, labels).unwrap();
        let err = afopt_search(&dataset, 5, 3).unwrap_err();
        assert!(matches!(err, Error::SearchCapExceeded { size: 15, cap: 14 }));
    }

    #[test]
    fn identical_instances_resolve_ties_lexicographically() {
        let rows: Vec<Vec<f64>> = (0..6).map(|_| vec![1.0, -1.0]).collect();
        let features = Matrix::from_rows(&rows).unwrap();
        let labels = vec![1; 6];
        let ids = (0..6).map(|i| format!("i{i}")).collect();
        let dataset = EmbeddedDataset::new(ids, features, labels).unwrap();
        let report = afopt_search(&dataset, 3, 2).unwrap();
        // every subset is equally (perfectly) biased; the tie rule picks the
        // lexicographically smallest size-3 subset
        assert_eq!(report.subset, vec![0, 1, 2]);
        assert_eq!(report.bias, 1.0);
    }

    #[test]
    fn no_enumerated_subset_beats_the_returned_minimum() {
        let features = gaussian_features(7, 2, 8);
        let labels = vec![0, 1, 0, 1, 0, 1, 1];
        let ids = (0..7).map(|i| format!("i{i}")).collect();
        let dataset = EmbeddedDataset::new(ids, features, labels).unwrap();
        let best = afopt_search(&dataset, 4, 2).unwrap();
        // spot-check against a handful of explicit subsets
        for subset in [vec![0, 1, 2, 3], vec![3, 4, 5, 6], vec![0, 2, 4, 6], vec![0, 1, 2, 3, 4, 5, 6]] {
            let f = dataset.features().select_rows(&subset);
            let l: Vec<usize> = subset.iter().map(|&i| dataset.label(i)).collect();
            let bias = exact_representation_bias(&f, &l, 2).unwrap().bias;
            assert!(bias >= best.bias - 1e-12, "subset {subset:?} bias {bias} beats {}", best.bias);
        }
    }

    #[test]
    fn binomial_small_values() {
        assert_eq!(binomial(10, 0), 1);
        assert_eq!(binomial(10, 1), 10);
        assert_eq!(binomial(10, 4), 210);
        assert_eq!(binomial(12, 6), 924);
        assert_eq!(binomial(4, 5), 0);
    }
}
