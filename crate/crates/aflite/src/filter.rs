//! The filtering engine: one scoring phase trains an ensemble of linear
//! classifiers on random partitions and turns out-of-sample correctness into
//! per-instance predictability scores; a removal strategy then drops the
//! most predictable instances, and the whole process repeats on the
//! surviving set until the early-stopping threshold or the minimum size is
//! reached.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifiers::{train_linear, Classifier, TrainConfig};
use crate::dataset::{
    random_partition, EmbeddedDataset, FilterResult, PhaseRecord, PredictabilityTable,
};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::seeding::derive_seed;

/// How a phase turns predictability scores into removals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// Remove the single highest-scoring instance; identical to
    /// `GreedySlicing` with k = 1.
    Greedy,
    /// Remove the k highest-scoring instances per phase.
    GreedySlicing,
    /// Sample k instances without replacement with probability proportional
    /// to their scores, via Gumbel-perturbed log-scores.
    GumbelSampling,
}

impl std::str::FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "greedy" => Ok(Strategy::Greedy),
            "greedy_slicing" => Ok(Strategy::GreedySlicing),
            "gumbel_sampling" => Ok(Strategy::GumbelSampling),
            other => Err(Error::InvalidConfig(format!(
                "unknown strategy {other:?}; expected greedy, greedy_slicing or gumbel_sampling"
            ))),
        }
    }
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Strategy::Greedy => "greedy",
            Strategy::GreedySlicing => "greedy_slicing",
            Strategy::GumbelSampling => "gumbel_sampling",
        };
        f.write_str(s)
    }
}

/// Filtering hyperparameters.
///
/// Defaults are the synthetic-experiment settings: m = 128 partitions per
/// phase, train size t = 100, slice size k = 1, threshold tau = 0.75.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterConfig {
    /// Minimum retained size; filtering never drops the working set below n.
    pub n: usize,
    /// Partitions (ensemble members) per phase.
    pub m: usize,
    /// Train-split size per partition.
    pub t: usize,
    /// Slice size removed per phase.
    pub k: usize,
    /// Early-stopping threshold: only instances with score >= tau are
    /// removable.
    pub tau: f64,
    pub strategy: Strategy,
    pub seed: u64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig {
            n: 110,
            m: 128,
            t: 100,
            k: 1,
            tau: 0.75,
            strategy: Strategy::GreedySlicing,
            seed: 42,
        }
    }
}

impl FilterConfig {
    pub fn validate(&self, dataset_len: usize) -> Result<()> {
        if self.m == 0 {
            return Err(Error::InvalidConfig("m must be >= 1".into()));
        }
        if self.k == 0 {
            return Err(Error::InvalidConfig("k must be >= 1".into()));
        }
        if self.t == 0 || self.t >= self.n {
            return Err(Error::InvalidConfig(format!(
                "train size t = {} must satisfy 1 <= t < n = {}",
                self.t, self.n
            )));
        }
        if self.n > dataset_len {
            return Err(Error::InvalidConfig(format!(
                "target size n = {} exceeds dataset size {}",
                self.n, dataset_len
            )));
        }
        // tau above 1 is allowed: no score can reach it, so nothing is
        // removed, which is a legitimate no-op configuration.
        if !self.tau.is_finite() || self.tau < 0.0 {
            return Err(Error::InvalidConfig(format!(
                "tau = {} must be finite and >= 0",
                self.tau
            )));
        }
        Ok(())
    }
}

const PARTITION_RETRIES: usize = 10;
/// Stream coordinate for the per-phase selection RNG, outside the range of
/// partition indices.
const SELECTION_STREAM: u64 = u64::MAX;

/// Runs one scoring phase over the current working set: m random partitions,
/// one linear classifier per partition trained on its train split, and
/// out-of-sample predictions accumulated into a predictability table.
///
/// Partition jobs are independent; each derives its own RNG from
/// (seed, phase_index, partition_index), so the merged table is identical
/// regardless of worker count. A partition whose train split is
/// single-class is resampled up to 10 times before the phase fails.
pub fn score_phase(
    features: &Matrix,
    labels: &[usize],
    config: &FilterConfig,
    phase_index: usize,
) -> Result<PredictabilityTable> {
    let size = features.rows();
    if size != labels.len() {
        return Err(Error::Contract(format!(
            "{size} feature rows but {} labels",
            labels.len()
        )));
    }
    if config.t >= size {
        return Err(Error::InvalidPartition {
            train: config.t,
            working_set: size,
        });
    }
    let train_config = TrainConfig::default();
    (0..config.m)
        .into_par_iter()
        .map(|j| -> Result<PredictabilityTable> {
            let seed = derive_seed(config.seed, phase_index as u64, j as u64);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut table = PredictabilityTable::new(size);
            for attempt in 0.. {
                let partition = random_partition(size, config.t, &mut rng)?;
                let train_x = features.select_rows(partition.train());
                let train_y: Vec<usize> =
                    partition.train().iter().map(|&i| labels[i]).collect();
                match train_linear(&train_x, &train_y, &train_config, &mut rng) {
                    Ok(model) => {
                        let predictions = partition
                            .test()
                            .iter()
                            .map(|&i| model.predict(features.row(i)))
                            .collect::<Result<Vec<usize>>>()?;
                        table.update(&partition, &predictions, labels)?;
                        return Ok(table);
                    }
                    Err(Error::DegenerateTraining) if attempt + 1 < PARTITION_RETRIES => {}
                    Err(e) => return Err(e),
                }
            }
            unreachable!("retry loop either returns or errors")
        })
        .try_reduce(
            || PredictabilityTable::new(size),
            |mut acc, t| {
                acc.merge(&t)?;
                Ok(acc)
            },
        )
}

/// Samples up to k indices without replacement with probability proportional
/// to their scores, by taking the k largest Gumbel-perturbed log-scores.
/// Returned indices are ordered by decreasing perturbed value, so the first
/// element is distributed as one categorical draw over the scores.
///
/// Zero or negative scores have no sampling mass and are excluded; if fewer
/// than k candidates remain, all of them are returned.
pub fn gumbel_topk(scores: &[f64], k: usize, rng: &mut impl Rng) -> Vec<usize> {
    let mut perturbed: Vec<(usize, f64)> = scores
        .iter()
        .enumerate()
        .filter(|(_, &s)| s > 0.0 && s.is_finite())
        .map(|(i, &s)| {
            let u: f64 = rng.sample(rand::distr::Open01);
            let gumbel = -(-u.ln()).ln();
            (i, s.ln() + gumbel)
        })
        .collect();
    perturbed.sort_unstable_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    perturbed.truncate(k);
    perturbed.into_iter().map(|(i, _)| i).collect()
}

/// Picks the indices to remove this phase: only instances with score >= tau
/// are candidates, and at most k are returned. Greedy strategies take the
/// highest scores (ties to the lower index); Gumbel sampling draws
/// proportionally to score. An empty return signals early stopping.
pub fn select_removals(
    table: &PredictabilityTable,
    config: &FilterConfig,
    rng: &mut impl Rng,
) -> Vec<usize> {
    let mut candidates: Vec<(usize, f64)> = (0..table.len())
        .map(|i| (i, table.score(i)))
        .filter(|&(_, s)| s >= config.tau)
        .collect();
    match config.strategy {
        Strategy::Greedy | Strategy::GreedySlicing => {
            let k = if config.strategy == Strategy::Greedy { 1 } else { config.k };
            candidates.sort_unstable_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
            candidates.truncate(k);
            candidates.into_iter().map(|(i, _)| i).collect()
        }
        Strategy::GumbelSampling => {
            let scores: Vec<f64> = candidates.iter().map(|&(_, s)| s).collect();
            let picks = gumbel_topk(&scores, config.k, rng);
            picks.into_iter().map(|p| candidates[p].0).collect()
        }
    }
}

/// Runs the full iterative filter.
///
/// Each phase scores the surviving working set from scratch and removes the
/// selected instances. The run stops when
/// - no instance reaches tau (empty selection),
/// - greedy slicing fills less than a whole slice (the paper's "fewer than
///   k pass tau" rule) — the partial slice is still removed, or
/// - a full removal would drop the set below n, in which case only the
///   highest-scoring instances are removed to land exactly on n.
pub fn run_filter(dataset: &EmbeddedDataset, config: &FilterConfig) -> Result<FilterResult> {
    config.validate(dataset.len())?;
    if dataset.distinct_labels() < 2 {
        return Err(Error::InvalidDataset(
            "filtering requires at least 2 distinct labels".into(),
        ));
    }

    let mut working: Vec<usize> = (0..dataset.len()).collect();
    let mut phases: Vec<PhaseRecord> = Vec::new();
    let mut phase_index = 0usize;

    loop {
        let budget = working.len() - config.n;
        if budget == 0 {
            break;
        }

        let features = dataset.features().select_rows(&working);
        let labels: Vec<usize> = working.iter().map(|&i| dataset.label(i)).collect();
        let table = score_phase(&features, &labels, config, phase_index).map_err(|e| {
            Error::PhaseFailed {
                phase: phase_index,
                source: Box::new(e),
            }
        })?;

        let mut selection_rng = ChaCha8Rng::seed_from_u64(derive_seed(
            config.seed,
            phase_index as u64,
            SELECTION_STREAM,
        ));
        let mut selection = select_removals(&table, config, &mut selection_rng);
        if selection.is_empty() {
            break;
        }

        let partial_slice =
            config.strategy == Strategy::GreedySlicing && selection.len() < config.k;
        let mut capped = false;
        if selection.len() > budget {
            // Keep the highest-scoring part of the slice so the run lands
            // exactly on n.
            selection.sort_unstable_by(|&a, &b| {
                table.score(b).total_cmp(&table.score(a)).then(a.cmp(&b))
            });
            selection.truncate(budget);
            capped = true;
        }

        let removed_ids: Vec<String> = selection
            .iter()
            .map(|&local| dataset.id(working[local]).to_string())
            .collect();
        let removed_set: std::collections::HashSet<usize> =
            selection.iter().map(|&local| working[local]).collect();
        working.retain(|i| !removed_set.contains(i));

        phases.push(PhaseRecord {
            phase_index,
            removed_ids,
            mean_score: table.mean_score(),
            max_score: table.max_score(),
            remaining_count: working.len(),
        });

        if partial_slice || capped {
            break;
        }
        phase_index += 1;
    }

    Ok(FilterResult {
        retained_ids: working.iter().map(|&i| dataset.id(i).to_string()).collect(),
        phases,
    })
}
