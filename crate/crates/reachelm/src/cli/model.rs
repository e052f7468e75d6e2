//! Plain-text model files.
//!
//! The format is line oriented and versioned:
//!
//! ```text
//! reachelm-model 1
//! dims 2 10 2
//! activation sigmoid
//! seed 42
//! method robust
//! delta 1.00000000000000002e-2
//! gamma 4.51593795100000011e0
//! W1 10 2
//! <one row per line, entries space separated>
//! b1 10
//! ...
//! ```
//!
//! Floats are written with 17 fractional digits in scientific notation,
//! which round-trips every f64 exactly; saving a loaded model reproduces
//! the original file byte for byte. The `gamma` line is present only for
//! robust models. The output activation is always identity, matching what
//! the trainers produce, so it is not stored.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::interval::Activation;
use crate::reach::ShallowNet;

pub const MODEL_FORMAT_VERSION: u32 = 1;

/// How the output layer of a saved model was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrainMethod {
    Elm,
    Robust,
}

impl TrainMethod {
    pub fn name(self) -> &'static str {
        match self {
            TrainMethod::Elm => "elm",
            TrainMethod::Robust => "robust",
        }
    }
}

impl FromStr for TrainMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "elm" => Ok(TrainMethod::Elm),
            "robust" => Ok(TrainMethod::Robust),
            other => Err(Error::InvalidArgument {
                name: "method",
                reason: format!("unknown method {other:?}, expected elm or robust"),
            }),
        }
    }
}

impl std::fmt::Display for TrainMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Training provenance stored alongside the weights.
#[derive(Debug, Clone)]
pub struct ModelMeta {
    pub seed: u64,
    pub method: TrainMethod,
    /// Largest per-coordinate input radius assumed during training.
    pub delta: f64,
    /// Certified worst-case squared residual; robust models only.
    pub gamma: Option<f64>,
}

/// A trained network plus its metadata, as stored on disk.
#[derive(Debug, Clone)]
pub struct ModelFile {
    pub net: ShallowNet,
    pub meta: ModelMeta,
}

impl ModelFile {
    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<ModelFile> {
        let text = fs::read_to_string(path)?;
        Self::from_text(&text)
    }

    pub fn to_text(&self) -> String {
        let net = &self.net;
        let mut out = String::new();
        let _ = writeln!(out, "reachelm-model {MODEL_FORMAT_VERSION}");
        let _ = writeln!(out, "dims {} {} {}", net.n0(), net.n1(), net.n2());
        let _ = writeln!(out, "activation {}", net.hidden_activation().name());
        let _ = writeln!(out, "seed {}", self.meta.seed);
        let _ = writeln!(out, "method {}", self.meta.method);
        let _ = writeln!(out, "delta {:.17e}", self.meta.delta);
        if let Some(g) = self.meta.gamma {
            let _ = writeln!(out, "gamma {g:.17e}");
        }
        write_matrix(&mut out, "W1", net.w1());
        write_vector(&mut out, "b1", net.b1());
        write_matrix(&mut out, "W2", net.w2());
        write_vector(&mut out, "b2", net.b2());
        out
    }

    pub fn from_text(text: &str) -> Result<ModelFile> {
        let mut lines = text.lines();

        let version: u32 = tagged(&mut lines, "reachelm-model")?
            .parse()
            .map_err(|_| bad("unreadable format version".into()))?;
        if version != MODEL_FORMAT_VERSION {
            return Err(bad(format!(
                "unsupported format version {version}, this build reads {MODEL_FORMAT_VERSION}"
            )));
        }

        let dims: Vec<usize> = parse_numbers(tagged(&mut lines, "dims")?, "dims")?;
        if dims.len() != 3 {
            return Err(bad(format!("dims needs 3 entries, got {}", dims.len())));
        }
        let activation = Activation::from_str(tagged(&mut lines, "activation")?)
            .map_err(|e| bad(e.to_string()))?;
        let seed: u64 = tagged(&mut lines, "seed")?
            .parse()
            .map_err(|_| bad("unreadable seed".into()))?;
        let method =
            TrainMethod::from_str(tagged(&mut lines, "method")?).map_err(|e| bad(e.to_string()))?;
        let delta: f64 = tagged(&mut lines, "delta")?
            .parse()
            .map_err(|_| bad("unreadable delta".into()))?;

        // The gamma line is optional, so the line after delta is either
        // "gamma <v>" or the W1 header.
        let mut gamma = None;
        let next = next_line(&mut lines, "W1 header")?;
        let w1_header = if let Some(rest) = next.strip_prefix("gamma ") {
            gamma = Some(rest.parse().map_err(|_| bad("unreadable gamma".into()))?);
            next_line(&mut lines, "W1 header")?
        } else {
            next
        };
        if method == TrainMethod::Robust && gamma.is_none() {
            return Err(bad("robust model is missing its gamma line".into()));
        }

        let w1 = read_matrix(w1_header, &mut lines, "W1", dims[1], dims[0])?;
        let b1 = read_vector(&mut lines, "b1", dims[1])?;
        let w2_header = next_line(&mut lines, "W2 header")?;
        let w2 = read_matrix(w2_header, &mut lines, "W2", dims[2], dims[1])?;
        let b2 = read_vector(&mut lines, "b2", dims[2])?;
        if let Some(extra) = lines.next() {
            if !extra.trim().is_empty() {
                return Err(bad(format!("trailing content {extra:?}")));
            }
        }

        let net = ShallowNet::new(w1, b1, w2, b2, activation, Activation::Identity)?;
        Ok(ModelFile {
            net,
            meta: ModelMeta {
                seed,
                method,
                delta,
                gamma,
            },
        })
    }
}

fn bad(msg: String) -> Error {
    Error::ModelFormat(msg)
}

fn next_line<'a>(lines: &mut impl Iterator<Item = &'a str>, what: &str) -> Result<&'a str> {
    lines.next().ok_or_else(|| bad(format!("missing {what}")))
}

fn tagged<'a>(lines: &mut impl Iterator<Item = &'a str>, name: &'static str) -> Result<&'a str> {
    let line = next_line(lines, name)?;
    line.strip_prefix(name)
        .and_then(|rest| rest.strip_prefix(' '))
        .ok_or_else(|| bad(format!("expected {name} line, got {line:?}")))
}

fn parse_numbers<T: FromStr>(s: &str, what: &str) -> Result<Vec<T>> {
    s.split_whitespace()
        .map(|tok| {
            tok.parse()
                .map_err(|_| bad(format!("unreadable number {tok:?} in {what}")))
        })
        .collect()
}

fn write_matrix(out: &mut String, name: &str, m: &DMatrix<f64>) {
    let _ = writeln!(out, "{name} {} {}", m.nrows(), m.ncols());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            if j > 0 {
                out.push(' ');
            }
            let _ = write!(out, "{:.17e}", m[(i, j)]);
        }
        out.push('\n');
    }
}

fn write_vector(out: &mut String, name: &str, v: &DVector<f64>) {
    let _ = writeln!(out, "{name} {}", v.len());
    for (j, x) in v.iter().enumerate() {
        if j > 0 {
            out.push(' ');
        }
        let _ = write!(out, "{x:.17e}");
    }
    out.push('\n');
}

fn read_matrix<'a>(
    header: &str,
    lines: &mut impl Iterator<Item = &'a str>,
    name: &str,
    rows: usize,
    cols: usize,
) -> Result<DMatrix<f64>> {
    let parts: Vec<&str> = header.split_whitespace().collect();
    if parts.len() != 3 || parts[0] != name {
        return Err(bad(format!("expected {name} header, got {header:?}")));
    }
    let (r, c): (usize, usize) = (
        parts[1].parse().map_err(|_| bad(format!("bad {name} rows")))?,
        parts[2].parse().map_err(|_| bad(format!("bad {name} cols")))?,
    );
    if (r, c) != (rows, cols) {
        return Err(bad(format!(
            "{name} is {r}x{c} but dims require {rows}x{cols}"
        )));
    }
    let mut m = DMatrix::zeros(rows, cols);
    for i in 0..rows {
        let line = lines
            .next()
            .ok_or_else(|| bad(format!("{name} row {i} is missing")))?;
        let vals: Vec<f64> = parse_numbers(line, name)?;
        if vals.len() != cols {
            return Err(bad(format!(
                "{name} row {i} has {} entries, expected {cols}",
                vals.len()
            )));
        }
        for (j, v) in vals.into_iter().enumerate() {
            m[(i, j)] = v;
        }
    }
    Ok(m)
}

fn read_vector<'a>(
    lines: &mut impl Iterator<Item = &'a str>,
    name: &str,
    len: usize,
) -> Result<DVector<f64>> {
    let header = lines
        .next()
        .ok_or_else(|| bad(format!("missing {name} header")))?;
    let parts: Vec<&str> = header.split_whitespace().collect();
    if parts.len() != 2 || parts[0] != name {
        return Err(bad(format!("expected {name} header, got {header:?}")));
    }
    let n: usize = parts[1].parse().map_err(|_| bad(format!("bad {name} length")))?;
    if n != len {
        return Err(bad(format!("{name} has {n} entries but dims require {len}")));
    }
    let line = lines
        .next()
        .ok_or_else(|| bad(format!("{name} values are missing")))?;
    let vals: Vec<f64> = parse_numbers(line, name)?;
    if vals.len() != len {
        return Err(bad(format!(
            "{name} line has {} entries, expected {len}",
            vals.len()
        )));
    }
    Ok(DVector::from_vec(vals))
}
