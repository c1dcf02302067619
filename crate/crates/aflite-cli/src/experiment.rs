//! Pipeline orchestration: executes the selected mode inside a sized thread
//! pool and writes all artifacts only after the computation has finished.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{bail, Context};
use serde::Serialize;

use aflite::dataset::FilterResult;
use aflite::exact::{afopt_search, exact_representation_bias};
use aflite::filter::{run_filter, FilterConfig};
use aflite::synthetic::{generate, SyntheticDataset};

use crate::config::{Mode, RunConfig};
use crate::eval::{evaluate, EvaluationReport};
use crate::io;

/// Thread count: explicit config, then AFLITE_THREADS, then the number of
/// available cores.
pub fn resolve_threads(config: &RunConfig) -> anyhow::Result<usize> {
    if let Some(n) = config.threads {
        if n == 0 {
            bail!("threads must be >= 1");
        }
        return Ok(n);
    }
    if let Ok(value) = std::env::var("AFLITE_THREADS") {
        let n: usize = value
            .parse()
            .with_context(|| format!("AFLITE_THREADS={value:?} is not a thread count"))?;
        if n == 0 {
            bail!("AFLITE_THREADS must be >= 1");
        }
        return Ok(n);
    }
    Ok(std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Runs the configured pipeline and writes its artifacts under
/// `config.out_dir`. Returns the paths written.
pub fn run_experiment(config: &RunConfig) -> anyhow::Result<Vec<std::path::PathBuf>> {
    let threads = resolve_threads(config)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .context("building worker pool")?;
    pool.install(|| match config.mode {
        Mode::Filter => filter_mode(config),
        Mode::SyntheticSweep => synthetic_sweep_mode(config),
        Mode::AfoptCheck => afopt_check_mode(config),
    })
}

fn write_file(path: &Path, content: &str) -> anyhow::Result<()> {
    fs::write(path, content).with_context(|| format!("cannot write {}", path.display()))
}

fn to_json<T: Serialize>(value: &T) -> anyhow::Result<String> {
    let mut s = serde_json::to_string_pretty(value).context("serializing report")?;
    s.push('\n');
    Ok(s)
}

fn filter_mode(config: &RunConfig) -> anyhow::Result<Vec<std::path::PathBuf>> {
    let Some(path) = &config.embeddings else {
        bail!("filter mode requires an embeddings path (config key \"embeddings\" or --embeddings)");
    };
    let dataset = io::load_embeddings(path)?;
    let result = run_filter(&dataset, &config.filter).context("filtering failed")?;
    let report = evaluate(
        &dataset,
        &result,
        None,
        None,
        config.holdout_fraction,
        config.filter.seed,
    )
    .context("evaluation failed")?;

    fs::create_dir_all(&config.out_dir)
        .with_context(|| format!("cannot create {}", config.out_dir.display()))?;
    let retained_path = config.out_dir.join("retained_ids.txt");
    let history_path = config.out_dir.join("history.csv");
    let report_path = config.out_dir.join("report.json");
    write_file(&retained_path, &io::format_retained_ids(&result))?;
    write_file(&history_path, &io::format_history_csv(&result))?;
    write_file(&report_path, &to_json(&report)?)?;

    println!(
        "filtered {} -> {} instances over {} phases",
        dataset.len(),
        result.retained_ids.len(),
        result.phases.len()
    );
    println!(
        "linear holdout accuracy: before {:.3}, after {:.3}, control {:.3}",
        report.linear_accuracy.before,
        report.linear_accuracy.after,
        report.linear_accuracy.random_control
    );
    Ok(vec![retained_path, history_path, report_path])
}

struct LevelRun {
    level: usize,
    separation: f64,
    synth: SyntheticDataset,
    result: FilterResult,
    report: EvaluationReport,
}

fn synthetic_sweep_mode(config: &RunConfig) -> anyhow::Result<Vec<std::path::PathBuf>> {
    let levels = config.synthetic.separations.len();
    let mut runs = Vec::with_capacity(levels);
    for level in 0..levels {
        let synth = generate(&config.synthetic, level)
            .with_context(|| format!("generating separation level {level}"))?;
        let result = run_filter(&synth.dataset, &config.filter)
            .with_context(|| format!("filtering separation level {level}"))?;
        let report = evaluate(
            &synth.dataset,
            &result,
            Some(&synth.bias_mask),
            Some(&synth.flip_mask),
            config.holdout_fraction,
            config.filter.seed,
        )
        .with_context(|| format!("evaluating separation level {level}"))?;
        runs.push(LevelRun {
            level,
            separation: config.synthetic.separations[level],
            synth,
            result,
            report,
        });
    }

    // All levels computed; only now touch the filesystem.
    let mut written = Vec::new();
    let mut summary = String::from(
        "level,separation,original,retained,bias_removal,flip_removal,\
         linear_before,linear_after,linear_control,rbf_before,rbf_after,rbf_control\n",
    );
    for run in &runs {
        let dir = config.out_dir.join(format!("separation_{}", run.level));
        fs::create_dir_all(&dir).with_context(|| format!("cannot create {}", dir.display()))?;
        let files = [
            ("embeddings.csv", io::format_embeddings(&run.synth.dataset)),
            ("retained_ids.txt", io::format_retained_ids(&run.result)),
            ("history.csv", io::format_history_csv(&run.result)),
            ("report.json", to_json(&run.report)?),
        ];
        for (name, content) in files {
            let path = dir.join(name);
            write_file(&path, &content)?;
            written.push(path);
        }
        if config.emit_plot_data {
            let path = dir.join("plot_data.csv");
            write_file(&path, &io::format_plot_data(&run.synth, &run.result))?;
            written.push(path);
        }

        let fmt_opt = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:.6}"));
        let rbf = run.report.rbf_accuracy.as_ref();
        let _ = writeln!(
            summary,
            "{},{},{},{},{},{},{:.6},{:.6},{:.6},{},{},{}",
            run.level,
            run.separation,
            run.report.dataset_sizes.original,
            run.report.dataset_sizes.retained,
            fmt_opt(run.report.bias_removal),
            fmt_opt(run.report.flip_removal),
            run.report.linear_accuracy.before,
            run.report.linear_accuracy.after,
            run.report.linear_accuracy.random_control,
            fmt_opt(rbf.map(|a| a.before)),
            fmt_opt(rbf.map(|a| a.after)),
            fmt_opt(rbf.map(|a| a.random_control)),
        );
    }
    let summary_path = config.out_dir.join("summary.csv");
    write_file(&summary_path, &summary)?;
    written.push(summary_path);

    for run in &runs {
        println!(
            "separation {} (gap {}): retained {}/{}, bias removal {}, linear {:.3}->{:.3}, rbf {}->{}",
            run.level,
            run.separation,
            run.report.dataset_sizes.retained,
            run.report.dataset_sizes.original,
            run.report
                .bias_removal
                .map_or("-".into(), |v| format!("{v:.3}")),
            run.report.linear_accuracy.before,
            run.report.linear_accuracy.after,
            run.report
                .rbf_accuracy
                .as_ref()
                .map_or("-".into(), |a| format!("{:.3}", a.before)),
            run.report
                .rbf_accuracy
                .as_ref()
                .map_or("-".into(), |a| format!("{:.3}", a.after)),
        );
    }
    Ok(written)
}

#[derive(Debug, Serialize)]
struct SubsetBias {
    ids: Vec<String>,
    bias: f64,
    evaluated_splits: u64,
}

#[derive(Debug, Serialize)]
struct AfoptCheckReport {
    optimum: SubsetBias,
    heuristic: SubsetBias,
    /// heuristic bias minus optimum bias; non-negative up to training noise.
    gap: f64,
}

fn afopt_check_mode(config: &RunConfig) -> anyhow::Result<Vec<std::path::PathBuf>> {
    let Some(path) = &config.embeddings else {
        bail!("afopt-check mode requires an embeddings path (config key \"embeddings\" or --embeddings)");
    };
    let dataset = io::load_embeddings(path)?;
    let n = config.afopt.n;
    let t = config.afopt.t;

    let optimum = afopt_search(&dataset, n, t).context("exhaustive search failed")?;
    let heuristic_config = FilterConfig {
        n,
        t,
        ..config.filter.clone()
    };
    let result = run_filter(&dataset, &heuristic_config).context("heuristic filtering failed")?;

    let id_index: HashMap<&str, usize> = dataset
        .ids()
        .iter()
        .enumerate()
        .map(|(i, id)| (id.as_str(), i))
        .collect();
    let mut retained_indices: Vec<usize> = result
        .retained_ids
        .iter()
        .map(|id| id_index[id.as_str()])
        .collect();
    retained_indices.sort_unstable();
    let retained_features = dataset.features().select_rows(&retained_indices);
    let retained_labels: Vec<usize> = retained_indices
        .iter()
        .map(|&i| dataset.label(i))
        .collect();
    let heuristic_bias = exact_representation_bias(&retained_features, &retained_labels, t)
        .context("scoring the retained subset")?;

    let report = AfoptCheckReport {
        optimum: SubsetBias {
            ids: optimum
                .subset
                .iter()
                .map(|&i| dataset.id(i).to_string())
                .collect(),
            bias: optimum.bias,
            evaluated_splits: optimum.evaluated_splits,
        },
        heuristic: SubsetBias {
            ids: result.retained_ids.clone(),
            bias: heuristic_bias.bias,
            evaluated_splits: heuristic_bias.evaluated_splits,
        },
        gap: heuristic_bias.bias - optimum.bias,
    };

    fs::create_dir_all(&config.out_dir)
        .with_context(|| format!("cannot create {}", config.out_dir.display()))?;
    let report_path = config.out_dir.join("afopt_report.json");
    write_file(&report_path, &to_json(&report)?)?;

    println!(
        "optimum bias {:.4} (subset {:?}), heuristic bias {:.4}, gap {:.4}",
        report.optimum.bias, report.optimum.ids, report.heuristic.bias, report.gap
    );
    Ok(vec![report_path])
}
