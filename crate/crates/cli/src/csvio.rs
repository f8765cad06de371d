//! CSV serialization: per-step trajectory logs (fixed column set) and
//! dataset export/import. All floats are written with Rust's shortest
//! round-trip formatting so written files re-read bit-for-bit.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};

use rg_optim_core::Dataset;

use crate::runner::TrajectoryRecord;

/// The fixed trajectory-log column set, in order.
pub const TRAJECTORY_HEADER: &str =
    "step,loss,scale,lr,grad_norm_sq,curvature_term,accuracy,wall_clock_ms";

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|v| format!("{v}")).unwrap_or_default()
}

/// Render records as CSV text with the fixed header.
pub fn records_to_csv(records: &[TrajectoryRecord]) -> String {
    let mut out = String::from(TRAJECTORY_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.step,
            r.loss,
            fmt_opt(r.scale),
            fmt_opt(r.lr),
            fmt_opt(r.grad_norm_sq),
            fmt_opt(r.curvature_term),
            fmt_opt(r.accuracy),
            r.wall_clock_ms,
        ));
    }
    out
}

pub fn write_records(path: &Path, records: &[TrajectoryRecord]) -> Result<()> {
    fs::write(path, records_to_csv(records))
        .with_context(|| format!("writing trajectory log {}", path.display()))
}

fn parse_opt(field: &str, what: &str, line: usize) -> Result<Option<f64>> {
    if field.is_empty() {
        return Ok(None);
    }
    field
        .parse::<f64>()
        .map(Some)
        .with_context(|| format!("bad {what} value {field:?} on line {line}"))
}

pub fn read_records(path: &Path) -> Result<Vec<TrajectoryRecord>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut lines = text.lines();
    match lines.next() {
        Some(header) if header == TRAJECTORY_HEADER => {}
        other => bail!(
            "{}: expected header {TRAJECTORY_HEADER:?}, found {other:?}",
            path.display()
        ),
    }
    let mut records = Vec::new();
    for (i, line) in lines.enumerate() {
        let line_no = i + 2;
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 8 {
            bail!(
                "{}: line {line_no} has {} fields, expected 8",
                path.display(),
                fields.len()
            );
        }
        records.push(TrajectoryRecord {
            step: fields[0]
                .parse()
                .with_context(|| format!("bad step on line {line_no}"))?,
            loss: fields[1]
                .parse()
                .with_context(|| format!("bad loss on line {line_no}"))?,
            scale: parse_opt(fields[2], "scale", line_no)?,
            lr: parse_opt(fields[3], "lr", line_no)?,
            grad_norm_sq: parse_opt(fields[4], "grad_norm_sq", line_no)?,
            curvature_term: parse_opt(fields[5], "curvature_term", line_no)?,
            accuracy: parse_opt(fields[6], "accuracy", line_no)?,
            wall_clock_ms: fields[7]
                .parse()
                .with_context(|| format!("bad wall_clock_ms on line {line_no}"))?,
        });
    }
    Ok(records)
}

/// Strip the informational wall-clock column (always last), leaving the
/// deterministic semantic columns used for golden-file comparison.
pub fn semantic_view(csv_text: &str) -> String {
    let mut out = String::with_capacity(csv_text.len());
    for line in csv_text.lines() {
        match line.rfind(',') {
            Some(cut) => out.push_str(&line[..cut]),
            None => out.push_str(line),
        }
        out.push('\n');
    }
    out
}

pub fn read_semantic(path: &Path) -> Result<String> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(semantic_view(&text))
}

/// Export a dataset with header `feature_0..feature_{d-1},label`.
pub fn write_dataset(path: &Path, dataset: &Dataset) -> Result<()> {
    let mut out = String::new();
    for j in 0..dataset.dim() {
        out.push_str(&format!("feature_{j},"));
    }
    out.push_str("label\n");
    for i in 0..dataset.n() {
        for v in dataset.feature_row(i) {
            out.push_str(&format!("{v},"));
        }
        out.push_str(&format!("{}\n", dataset.label(i)));
    }
    fs::write(path, out).with_context(|| format!("writing dataset {}", path.display()))
}

/// Import a dataset CSV written by [`write_dataset`]. Imported datasets carry
/// generator seed 0 and no center information.
pub fn read_dataset(path: &Path) -> Result<Dataset> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .with_context(|| format!("{}: empty dataset file", path.display()))?;
    let columns: Vec<&str> = header.split(',').collect();
    let dim = columns.len().saturating_sub(1);
    if dim == 0 || columns[dim] != "label" {
        bail!(
            "{}: expected header feature_0..feature_{{d-1}},label, found {header:?}",
            path.display()
        );
    }
    for (j, name) in columns[..dim].iter().enumerate() {
        if *name != format!("feature_{j}") {
            bail!("{}: feature column {j} is named {name:?}", path.display());
        }
    }
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for (i, line) in lines.enumerate() {
        let line_no = i + 2;
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != dim + 1 {
            bail!(
                "{}: line {line_no} has {} fields, expected {}",
                path.display(),
                fields.len(),
                dim + 1
            );
        }
        for field in &fields[..dim] {
            features.push(
                field
                    .parse::<f64>()
                    .with_context(|| format!("bad feature {field:?} on line {line_no}"))?,
            );
        }
        labels.push(
            fields[dim]
                .parse::<usize>()
                .with_context(|| format!("bad label {:?} on line {line_no}", fields[dim]))?,
        );
    }
    let classes = labels.iter().copied().max().map_or(2, |m| (m + 1).max(2));
    Dataset::from_parts(features, labels, dim, classes, 0)
        .map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rg_optim_core::gen_blobs;
    use tempfile::tempdir;

    fn sample_records() -> Vec<TrajectoryRecord> {
        vec![
            TrajectoryRecord {
                step: 0,
                loss: std::f64::consts::LN_2,
                scale: None,
                lr: None,
                grad_norm_sq: None,
                curvature_term: None,
                accuracy: Some(0.5),
                wall_clock_ms: 0,
            },
            TrajectoryRecord {
                step: 1,
                loss: 0.64,
                scale: Some(0.37454011),
                lr: Some(0.1),
                grad_norm_sq: Some(1.25e-3),
                curvature_term: Some(2.0),
                accuracy: None,
                wall_clock_ms: 3,
            },
        ]
    }

    #[test]
    fn records_round_trip_identically() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("log.csv");
        let records = sample_records();
        write_records(&path, &records).unwrap();
        let back = read_records(&path).unwrap();
        assert_eq!(back, records);
        // A second write of the re-read records is byte-identical.
        let rewritten = records_to_csv(&back);
        assert_eq!(rewritten, records_to_csv(&records));
    }

    #[test]
    fn header_and_empty_cells_match_contract() {
        let text = records_to_csv(&sample_records());
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "step,loss,scale,lr,grad_norm_sq,curvature_term,accuracy,wall_clock_ms"
        );
        assert_eq!(lines.next().unwrap(), "0,0.6931471805599453,,,,,0.5,0");
    }

    #[test]
    fn semantic_view_drops_only_wall_clock() {
        let text = records_to_csv(&sample_records());
        let semantic = semantic_view(&text);
        assert!(semantic.starts_with("step,loss,scale,lr,grad_norm_sq,curvature_term,accuracy\n"));
        assert!(!semantic.contains("wall_clock"));
        assert_eq!(semantic.lines().count(), text.lines().count());
    }

    #[test]
    fn dataset_round_trips_bitwise() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("blobs.csv");
        let data = gen_blobs(24, 3, 2, 4.0, 99).unwrap();
        write_dataset(&path, &data).unwrap();
        let back = read_dataset(&path).unwrap();
        assert_eq!(back.n(), data.n());
        assert_eq!(back.dim(), data.dim());
        assert_eq!(back.classes(), data.classes());
        assert_eq!(back.generator_seed(), 0);
        assert!(back.centers().is_none());
        for i in 0..data.n() {
            assert_eq!(back.label(i), data.label(i));
            for (a, b) in back.feature_row(i).iter().zip(data.feature_row(i)) {
                assert_eq!(a.to_bits(), b.to_bits(), "feature drift at sample {i}");
            }
        }
    }

    #[test]
    fn dataset_bad_header_rejected() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "a,b,label\n1,2,0\n").unwrap();
        let err = format!("{:#}", read_dataset(&path).unwrap_err());
        assert!(err.contains("feature column"), "{err}");
    }

    #[test]
    fn failure_rows_with_nan_loss_round_trip() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("diverged.csv");
        let records = vec![TrajectoryRecord {
            step: 12,
            loss: f64::NAN,
            scale: None,
            lr: None,
            grad_norm_sq: None,
            curvature_term: None,
            accuracy: None,
            wall_clock_ms: 1,
        }];
        write_records(&path, &records).unwrap();
        let back = read_records(&path).unwrap();
        assert_eq!(back.len(), 1);
        assert!(back[0].loss.is_nan());
        assert_eq!(back[0].step, 12);
    }
}
