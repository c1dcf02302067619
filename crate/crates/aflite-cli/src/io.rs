//! Embeddings file format and output writers.
//!
//! Embeddings are UTF-8 comma-separated text with header
//! `id,f0,...,f{d-1},label`: ids are unquoted tokens without commas,
//! features are decimal floating point (written with enough digits to
//! round-trip exactly), labels are non-negative integers.

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;
use std::path::Path;

use anyhow::{bail, Context};

use aflite::dataset::{EmbeddedDataset, FilterResult};
use aflite::matrix::Matrix;
use aflite::synthetic::SyntheticDataset;

pub fn load_embeddings(path: &Path) -> anyhow::Result<EmbeddedDataset> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read embeddings file {}", path.display()))?;
    let name = path.display();
    let mut lines = text.lines().enumerate();

    let Some((_, header)) = lines.next() else {
        bail!("{name}:1: empty file, expected header id,f0,...,label");
    };
    let columns: Vec<&str> = header.split(',').collect();
    if columns.len() < 3 || columns[0] != "id" || columns[columns.len() - 1] != "label" {
        bail!("{name}:1: malformed header {header:?}, expected id,f0,...,f{{d-1}},label");
    }
    let d = columns.len() - 2;

    let mut ids = Vec::new();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut labels = Vec::new();
    let mut seen: HashMap<String, usize> = HashMap::new();

    for (idx, line) in lines {
        let line_no = idx + 1;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != d + 2 {
            bail!(
                "{name}:{line_no}: expected {} comma-separated fields, got {}",
                d + 2,
                fields.len()
            );
        }
        let id = fields[0];
        if id.is_empty() {
            bail!("{name}:{line_no}: empty id");
        }
        if let Some(first) = seen.insert(id.to_string(), line_no) {
            bail!("{name}:{line_no}: duplicate id {id:?} (first seen on line {first})");
        }
        let mut row = Vec::with_capacity(d);
        for (j, field) in fields[1..=d].iter().enumerate() {
            let value: f64 = field.parse().map_err(|_| {
                anyhow::anyhow!("{name}:{line_no}: feature f{j} is not numeric: {field:?}")
            })?;
            if !value.is_finite() {
                bail!("{name}:{line_no}: feature f{j} is not finite: {field:?}");
            }
            row.push(value);
        }
        let label: usize = fields[d + 1]
            .parse()
            .map_err(|_| {
                anyhow::anyhow!(
                    "{name}:{line_no}: label is not a non-negative integer: {:?}",
                    fields[d + 1]
                )
            })?;
        ids.push(id.to_string());
        rows.push(row);
        labels.push(label);
    }

    let features = Matrix::from_rows(&rows).context("assembling feature matrix")?;
    EmbeddedDataset::new(ids, features, labels)
        .with_context(|| format!("{name}: dataset invariants violated"))
}

pub fn format_embeddings(dataset: &EmbeddedDataset) -> String {
    let d = dataset.dim();
    let mut out = String::from("id");
    for j in 0..d {
        let _ = write!(out, ",f{j}");
    }
    out.push_str(",label\n");
    for i in 0..dataset.len() {
        out.push_str(dataset.id(i));
        for v in dataset.features().row(i) {
            // shortest decimal representation that round-trips exactly
            let _ = write!(out, ",{v}");
        }
        let _ = writeln!(out, ",{}", dataset.label(i));
    }
    out
}

pub fn save_embeddings(path: &Path, dataset: &EmbeddedDataset) -> anyhow::Result<()> {
    std::fs::write(path, format_embeddings(dataset))
        .with_context(|| format!("cannot write embeddings to {}", path.display()))
}

pub fn format_retained_ids(result: &FilterResult) -> String {
    let mut out = String::new();
    for id in &result.retained_ids {
        out.push_str(id);
        out.push('\n');
    }
    out
}

pub fn format_history_csv(result: &FilterResult) -> String {
    let mut out = String::from("phase,removed_count,mean_score,max_score,remaining\n");
    for phase in &result.phases {
        let _ = writeln!(
            out,
            "{},{},{:.6},{:.6},{}",
            phase.phase_index,
            phase.removed_ids.len(),
            phase.mean_score,
            phase.max_score,
            phase.remaining_count
        );
    }
    out
}

/// Per-instance tuples for external plotting: circle coordinates, label,
/// masks, and whether the instance survived filtering.
pub fn format_plot_data(synth: &SyntheticDataset, result: &FilterResult) -> String {
    let retained: HashSet<&str> = result.retained_ids.iter().map(String::as_str).collect();
    let mut out = String::from("id,x,y,label,biased,flipped,retained\n");
    for i in 0..synth.dataset.len() {
        let row = synth.dataset.features().row(i);
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            synth.dataset.id(i),
            row[0],
            row[1],
            synth.dataset.label(i),
            u8::from(synth.bias_mask[i]),
            u8::from(synth.flip_mask[i]),
            u8::from(retained.contains(synth.dataset.id(i)))
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_temp(content: &str) -> tempfile::NamedTempFile {
        use std::io::Write;
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn well_formed_file_loads() {
        let f = write_temp("id,f0,f1,label\na,0.5,-1.25,0\nb,1.0,2.0,1\nc,3,4,0\n");
        let d = load_embeddings(f.path()).unwrap();
        assert_eq!(d.len(), 3);
        assert_eq!(d.dim(), 2);
        assert_eq!(d.features().row(0), &[0.5, -1.25]);
        assert_eq!(d.labels(), &[0, 1, 0]);
    }

    #[test]
    fn ragged_row_names_the_line() {
        let f = write_temp("id,f0,f1,label\na,0.5,-1.25,0\nb,1.0,1\n");
        let err = load_embeddings(f.path()).unwrap_err().to_string();
        assert!(err.contains(":3:"), "error should name line 3: {err}");
    }

    #[test]
    fn non_numeric_feature_names_the_line() {
        let f = write_temp("id,f0,label\na,0.5,0\nb,oops,1\n");
        let err = load_embeddings(f.path()).unwrap_err().to_string();
        assert!(err.contains(":3:") && err.contains("f0"), "{err}");
    }

    #[test]
    fn duplicate_id_names_both_lines() {
        let f = write_temp("id,f0,label\na,0.5,0\na,1.5,1\n");
        let err = load_embeddings(f.path()).unwrap_err().to_string();
        assert!(err.contains(":3:") && err.contains("line 2"), "{err}");
    }

    #[test]
    fn bad_label_names_the_line() {
        let f = write_temp("id,f0,label\na,0.5,-1\n");
        let err = load_embeddings(f.path()).unwrap_err().to_string();
        assert!(err.contains(":2:"), "{err}");
    }

    #[test]
    fn missing_header_rejected() {
        let f = write_temp("a,0.5,0\nb,1.5,1\n");
        let err = load_embeddings(f.path()).unwrap_err().to_string();
        assert!(err.contains(":1:"), "{err}");
    }

    #[test]
    fn save_then_load_round_trips_exactly() {
        let values = [
            0.1,
            -1.0 / 3.0,
            f64::MIN_POSITIVE,
            1.2345678901234567e15,
            -9.87654321e-7,
            2.0_f64.sqrt(),
        ];
        let rows: Vec<Vec<f64>> = values.iter().map(|&v| vec![v, v * 7.0]).collect();
        let dataset = EmbeddedDataset::new(
            (0..values.len()).map(|i| format!("r{i}")).collect(),
            Matrix::from_rows(&rows).unwrap(),
            (0..values.len()).map(|i| i % 2).collect(),
        )
        .unwrap();
        let f = tempfile::NamedTempFile::new().unwrap();
        save_embeddings(f.path(), &dataset).unwrap();
        let loaded = load_embeddings(f.path()).unwrap();
        assert_eq!(loaded.features().data(), dataset.features().data());
        assert_eq!(loaded.ids(), dataset.ids());
        assert_eq!(loaded.labels(), dataset.labels());
    }
}
