//! Dataset and reach-box CSV formats. Hand-rolled on purpose: the schemas
//! are fixed, and emitting floats through the shortest round-trip
//! formatter keeps files byte-stable across runs and platforms.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::reach::Dataset;

pub const DATASET_HEADER: &str = "theta1,theta2,x,y";
pub const BOXES_HEADER: &str = "center_x,center_y,rad_x,rad_y";

/// Writes a joint-angle dataset as `theta1,theta2,x,y` rows.
pub fn write_dataset_csv(path: &Path, data: &Dataset) -> Result<()> {
    if data.inputs.ncols() != 2 || data.targets.ncols() != 2 {
        return Err(Error::dims(
            "write_dataset_csv",
            "2 input and 2 target columns".to_string(),
            format!("{} and {}", data.inputs.ncols(), data.targets.ncols()),
        ));
    }
    let mut out = String::from(DATASET_HEADER);
    out.push('\n');
    for i in 0..data.n_samples() {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            data.inputs[(i, 0)],
            data.inputs[(i, 1)],
            data.targets[(i, 0)],
            data.targets[(i, 1)],
        );
    }
    fs::write(path, out)?;
    Ok(())
}

/// Reads a dataset written by [`write_dataset_csv`].
pub fn read_dataset_csv(path: &Path) -> Result<Dataset> {
    let text = fs::read_to_string(path)?;
    let display = path.display().to_string();
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim_end() == DATASET_HEADER => {}
        Some((_, header)) => {
            return Err(Error::DataFormat {
                path: display,
                line: 1,
                msg: format!("expected header {DATASET_HEADER:?}, got {header:?}"),
            })
        }
        None => {
            return Err(Error::DataFormat {
                path: display,
                line: 1,
                msg: "empty file".into(),
            })
        }
    }
    let mut rows: Vec<[f64; 4]> = Vec::new();
    for (idx, line) in lines {
        let line = line.trim_end();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(Error::DataFormat {
                path: display,
                line: idx + 1,
                msg: format!("expected 4 fields, got {}", fields.len()),
            });
        }
        let mut row = [0.0; 4];
        for (k, f) in fields.iter().enumerate() {
            row[k] = f.trim().parse().map_err(|_| Error::DataFormat {
                path: display.clone(),
                line: idx + 1,
                msg: format!("unreadable number {f:?}"),
            })?;
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::EmptyData("dataset file has no rows"));
    }
    let inputs = DMatrix::from_fn(rows.len(), 2, |r, c| rows[r][c]);
    let targets = DMatrix::from_fn(rows.len(), 2, |r, c| rows[r][2 + c]);
    Dataset::new(inputs, targets)
}

/// Writes per-sample output boxes as `center_x,center_y,rad_x,rad_y`.
pub fn write_boxes_csv(path: &Path, rows: &[[f64; 4]]) -> Result<()> {
    let mut out = String::from(BOXES_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(out, "{},{},{},{}", r[0], r[1], r[2], r[3]);
    }
    fs::write(path, out)?;
    Ok(())
}

/// Reads a whitespace-separated list of per-coordinate radii.
pub fn read_delta_file(path: &Path) -> Result<Vec<f64>> {
    let text = fs::read_to_string(path)?;
    let mut out = Vec::new();
    for tok in text.split_whitespace() {
        let v: f64 = tok.parse().map_err(|_| Error::DataFormat {
            path: path.display().to_string(),
            line: 0,
            msg: format!("unreadable radius {tok:?}"),
        })?;
        if !v.is_finite() || v < 0.0 {
            return Err(Error::InvalidArgument {
                name: "delta-file",
                reason: format!("radii must be finite and non-negative, got {v}"),
            });
        }
        out.push(v);
    }
    if out.is_empty() {
        return Err(Error::EmptyData("delta file has no entries"));
    }
    Ok(out)
}
