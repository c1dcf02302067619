//! Dataset representation, random train/test partitioning, and
//! predictability-score bookkeeping shared by all filtering strategies.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// A dataset with precomputed feature embeddings: stable string ids, a dense
/// |D| x d feature matrix, and integer class labels.
#[derive(Debug, Clone)]
pub struct EmbeddedDataset {
    ids: Vec<String>,
    features: Matrix,
    labels: Vec<usize>,
}

impl EmbeddedDataset {
    pub fn new(ids: Vec<String>, features: Matrix, labels: Vec<usize>) -> Result<Self> {
        if ids.is_empty() {
            return Err(Error::InvalidDataset("dataset is empty".into()));
        }
        if ids.len() != features.rows() || ids.len() != labels.len() {
            return Err(Error::InvalidDataset(format!(
                "{} ids, {} feature rows, {} labels",
                ids.len(),
                features.rows(),
                labels.len()
            )));
        }
        if features.cols() == 0 {
            return Err(Error::InvalidDataset("feature dimension is zero".into()));
        }
        if let Some((row, col)) = features.first_non_finite() {
            return Err(Error::NonFiniteFeature { row, col });
        }
        let mut seen = HashSet::with_capacity(ids.len());
        for (i, id) in ids.iter().enumerate() {
            if !seen.insert(id.as_str()) {
                return Err(Error::InvalidDataset(format!(
                    "duplicate id {id:?} at position {i}"
                )));
            }
        }
        Ok(EmbeddedDataset { ids, features, labels })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Feature dimensionality d.
    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn id(&self, i: usize) -> &str {
        &self.ids[i]
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    /// Number of classes, as max label + 1.
    pub fn n_classes(&self) -> usize {
        self.labels.iter().copied().max().map_or(0, |m| m + 1)
    }

    pub fn distinct_labels(&self) -> usize {
        self.labels.iter().collect::<HashSet<_>>().len()
    }

    /// Materializes the subset with the given indices, preserving order.
    pub fn subset(&self, indices: &[usize]) -> Result<EmbeddedDataset> {
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.len()) {
            return Err(Error::Contract(format!(
                "subset index {bad} out of range for dataset of {}",
                self.len()
            )));
        }
        EmbeddedDataset::new(
            indices.iter().map(|&i| self.ids[i].clone()).collect(),
            self.features.select_rows(indices),
            indices.iter().map(|&i| self.labels[i]).collect(),
        )
    }
}

/// Disjoint train/test split of the current working set, by dense index.
#[derive(Debug, Clone)]
pub struct Partition {
    train: Vec<usize>,
    test: Vec<usize>,
}

impl Partition {
    pub fn train(&self) -> &[usize] {
        &self.train
    }

    pub fn test(&self) -> &[usize] {
        &self.test
    }
}

/// Draws a uniformly random size-`t` train subset of `0..working_set_size`;
/// the test set is its complement. Sampling is a seeded full shuffle, so the
/// same RNG stream always yields the same partition.
pub fn random_partition(
    working_set_size: usize,
    t: usize,
    rng: &mut impl Rng,
) -> Result<Partition> {
    if t == 0 || t >= working_set_size {
        return Err(Error::InvalidPartition {
            train: t,
            working_set: working_set_size,
        });
    }
    let mut indices: Vec<usize> = (0..working_set_size).collect();
    indices.shuffle(rng);
    let mut train = indices[..t].to_vec();
    let mut test = indices[t..].to_vec();
    train.sort_unstable();
    test.sort_unstable();
    Ok(Partition { train, test })
}

/// Per-instance correct/total prediction counts and the derived
/// predictability score.
///
/// The score of instance `i` is `correct[i] / total[i]`; an instance never
/// seen in any test set scores 0 so that absence of evidence cannot cause
/// removal.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictabilityTable {
    correct: Vec<u32>,
    total: Vec<u32>,
}

impl PredictabilityTable {
    pub fn new(n: usize) -> Self {
        PredictabilityTable {
            correct: vec![0; n],
            total: vec![0; n],
        }
    }

    pub fn from_counts(correct: Vec<u32>, total: Vec<u32>) -> Result<Self> {
        if correct.len() != total.len() {
            return Err(Error::Contract(format!(
                "{} correct counts but {} totals",
                correct.len(),
                total.len()
            )));
        }
        if let Some(i) = (0..correct.len()).find(|&i| correct[i] > total[i]) {
            return Err(Error::Contract(format!(
                "instance {i}: correct {} exceeds total {}",
                correct[i], total[i]
            )));
        }
        Ok(PredictabilityTable { correct, total })
    }

    pub fn len(&self) -> usize {
        self.total.len()
    }

    pub fn is_empty(&self) -> bool {
        self.total.is_empty()
    }

    pub fn correct(&self, i: usize) -> u32 {
        self.correct[i]
    }

    pub fn total(&self, i: usize) -> u32 {
        self.total[i]
    }

    pub fn score(&self, i: usize) -> f64 {
        if self.total[i] == 0 {
            0.0
        } else {
            f64::from(self.correct[i]) / f64::from(self.total[i])
        }
    }

    pub fn scores(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.score(i)).collect()
    }

    pub fn mean_score(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        (0..self.len()).map(|i| self.score(i)).sum::<f64>() / self.len() as f64
    }

    pub fn max_score(&self) -> f64 {
        (0..self.len()).map(|i| self.score(i)).fold(0.0, f64::max)
    }

    /// Records one ensemble member's predictions on the partition's test
    /// set. `predictions[j]` is the predicted label for test index
    /// `partition.test()[j]`.
    pub fn update(
        &mut self,
        partition: &Partition,
        predictions: &[usize],
        truth: &[usize],
    ) -> Result<()> {
        if truth.len() != self.len() {
            return Err(Error::Contract(format!(
                "truth has {} labels, table covers {}",
                truth.len(),
                self.len()
            )));
        }
        if predictions.is_empty() || predictions.len() != partition.test().len() {
            return Err(Error::Contract(format!(
                "predictions must cover exactly the test set: got {}, test set has {}",
                predictions.len(),
                partition.test().len()
            )));
        }
        if let Some(&bad) = partition.test().iter().find(|&&i| i >= self.len()) {
            return Err(Error::Contract(format!(
                "test index {bad} outside the working set of {}",
                self.len()
            )));
        }
        for (&i, &pred) in partition.test().iter().zip(predictions) {
            self.total[i] += 1;
            if pred == truth[i] {
                self.correct[i] += 1;
            }
        }
        Ok(())
    }

    /// Adds another table's counts into this one. Merging is commutative and
    /// associative, so concurrently accumulated tables can be combined in
    /// any order.
    pub fn merge(&mut self, other: &PredictabilityTable) -> Result<()> {
        if other.len() != self.len() {
            return Err(Error::Contract(format!(
                "cannot merge table of {} into table of {}",
                other.len(),
                self.len()
            )));
        }
        for i in 0..self.len() {
            self.correct[i] += other.correct[i];
            self.total[i] += other.total[i];
        }
        Ok(())
    }
}

/// One filtering phase: which instances were removed and the score
/// statistics of the working set at scoring time.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseRecord {
    pub phase_index: usize,
    pub removed_ids: Vec<String>,
    pub mean_score: f64,
    pub max_score: f64,
    /// Working-set size after this phase's removals.
    pub remaining_count: usize,
}

/// Outcome of a full filtering run: the retained ids (in input order) plus
/// the per-phase removal history.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterResult {
    pub retained_ids: Vec<String>,
    pub phases: Vec<PhaseRecord>,
}

impl FilterResult {
    /// Ids removed across all phases, in removal order.
    pub fn removed_ids(&self) -> Vec<&str> {
        self.phases
            .iter()
            .flat_map(|p| p.removed_ids.iter().map(String::as_str))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn dataset(n: usize) -> EmbeddedDataset {
        let ids = (0..n).map(|i| format!("i{i}")).collect();
        let features = Matrix::from_rows(&(0..n).map(|i| vec![i as f64]).collect::<Vec<_>>()).unwrap();
        let labels = (0..n).map(|i| i % 2).collect();
        EmbeddedDataset::new(ids, features, labels).unwrap()
    }

    #[test]
    fn dataset_rejects_duplicate_ids() {
        let ids = vec!["a".to_string(), "a".to_string()];
        let features = Matrix::from_rows(&[vec![0.0], vec![1.0]]).unwrap();
        let err = EmbeddedDataset::new(ids, features, vec![0, 1]).unwrap_err();
        assert!(matches!(err, Error::InvalidDataset(_)));
    }

    #[test]
    fn dataset_rejects_non_finite() {
        let ids = vec!["a".to_string(), "b".to_string()];
        let features = Matrix::from_rows(&[vec![0.0], vec![f64::INFINITY]]).unwrap();
        let err = EmbeddedDataset::new(ids, features, vec![0, 1]).unwrap_err();
        assert!(matches!(err, Error::NonFiniteFeature { row: 1, col: 0 }));
    }

    #[test]
    fn partition_sizes_disjoint_and_cover() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let p = random_partition(10, 6, &mut rng).unwrap();
        assert_eq!(p.train().len(), 6);
        assert_eq!(p.test().len(), 4);
        let mut all: Vec<usize> = p.train().iter().chain(p.test()).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn partition_with_empty_test_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let err = random_partition(5, 5, &mut rng).unwrap_err();
        assert!(matches!(
            err,
            Error::InvalidPartition { train: 5, working_set: 5 }
        ));
    }

    #[test]
    fn test_inclusion_marginal_matches_uniform_q() {
        // q(i) = |T|/|S| = (10-6)/10 = 0.4 for every index. 10k draws here;
        // the acceptance suite repeats this at 100k draws.
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let draws = 10_000;
        let mut hits = vec![0u32; 10];
        for _ in 0..draws {
            let p = random_partition(10, 6, &mut rng).unwrap();
            for &i in p.test() {
                hits[i] += 1;
            }
        }
        for &h in &hits {
            let freq = f64::from(h) / draws as f64;
            assert!((freq - 0.4).abs() < 0.03, "frequency {freq}");
        }
    }

    #[test]
    fn score_is_ratio_of_counts() {
        let mut table = PredictabilityTable::new(1);
        let partition = Partition { train: vec![], test: vec![0] };
        let truth = vec![1];
        for round in 0..64 {
            let pred = if round < 48 { 1 } else { 0 };
            table.update(&partition, &[pred], &truth).unwrap();
        }
        assert_eq!(table.total(0), 64);
        assert_eq!(table.correct(0), 48);
        assert!((table.score(0) - 0.75).abs() < 1e-15);
    }

    #[test]
    fn unseen_instance_scores_zero() {
        let table = PredictabilityTable::new(3);
        assert_eq!(table.score(2), 0.0);
    }

    #[test]
    fn empty_predictions_violate_contract() {
        let mut table = PredictabilityTable::new(2);
        let partition = Partition { train: vec![0], test: vec![1] };
        let err = table.update(&partition, &[], &[0, 1]).unwrap_err();
        assert!(matches!(err, Error::Contract(_)));
    }

    #[test]
    fn merge_adds_counts() {
        let partition = Partition { train: vec![1], test: vec![0] };
        let truth = vec![0, 1];
        let mut a = PredictabilityTable::new(2);
        a.update(&partition, &[0], &truth).unwrap();
        let mut b = PredictabilityTable::new(2);
        b.update(&partition, &[1], &truth).unwrap();
        a.merge(&b).unwrap();
        assert_eq!(a.total(0), 2);
        assert_eq!(a.correct(0), 1);
    }

    #[test]
    fn subset_preserves_order_and_ids() {
        let d = dataset(5);
        let s = d.subset(&[4, 1]).unwrap();
        assert_eq!(s.ids(), &["i4".to_string(), "i1".to_string()]);
        assert_eq!(s.labels(), &[0, 1]);
        assert_eq!(s.features().row(0), &[4.0]);
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn partition_always_disjoint_and_complete(
                size in 2usize..40,
                t_frac in 0.01f64..0.99,
                seed in 0u64..1000,
            ) {
                let t = ((size as f64 * t_frac) as usize).clamp(1, size - 1);
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let p = random_partition(size, t, &mut rng).unwrap();
                prop_assert_eq!(p.train().len(), t);
                let train: HashSet<_> = p.train().iter().collect();
                for i in p.test() {
                    prop_assert!(!train.contains(i));
                }
                prop_assert_eq!(p.train().len() + p.test().len(), size);
            }

            #[test]
            fn merge_is_order_independent(seed in 0u64..200) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let truth: Vec<usize> = (0..6).map(|_| rng.random_range(0..2)).collect();
                let mut tables = Vec::new();
                for _ in 0..4 {
                    let p = random_partition(6, 3, &mut rng).unwrap();
                    let preds: Vec<usize> =
                        p.test().iter().map(|_| rng.random_range(0..2)).collect();
                    let mut t = PredictabilityTable::new(6);
                    t.update(&p, &preds, &truth).unwrap();
                    tables.push(t);
                }
                let mut forward = PredictabilityTable::new(6);
                for t in &tables {
                    forward.merge(t).unwrap();
                }
                let mut backward = PredictabilityTable::new(6);
                for t in tables.iter().rev() {
                    backward.merge(t).unwrap();
                }
                prop_assert_eq!(forward, backward);
            }

            #[test]
            fn totals_never_decrease(seed in 0u64..200) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let truth: Vec<usize> = (0..5).map(|_| rng.random_range(0..2)).collect();
                let mut table = PredictabilityTable::new(5);
                let mut prev: Vec<u32> = vec![0; 5];
                for _ in 0..8 {
                    let p = random_partition(5, 2, &mut rng).unwrap();
                    let preds: Vec<usize> =
                        p.test().iter().map(|_| rng.random_range(0..2)).collect();
                    table.update(&p, &preds, &truth).unwrap();
                    for i in 0..5 {
                        prop_assert!(table.total(i) >= prev[i]);
                        prev[i] = table.total(i);
                    }
                }
            }
        }
    }
}
