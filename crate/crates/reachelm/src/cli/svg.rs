//! Tiny SVG writer for reachable-set figures: one axis-aligned box per
//! sample plus a dot at each nominal target. Coordinates are formatted
//! with fixed precision so repeated runs emit identical files.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

const CANVAS: f64 = 640.0;
const MARGIN: f64 = 24.0;

/// Renders boxes (`[cx, cy, rx, ry]` per sample) and target points into
/// an SVG file with a y-up world frame.
pub fn write_boxes_svg(path: &Path, boxes: &[[f64; 4]], targets: &[[f64; 2]]) -> Result<()> {
    if boxes.is_empty() {
        return Err(Error::EmptyData("no boxes to draw"));
    }

    let mut xmin = f64::INFINITY;
    let mut xmax = f64::NEG_INFINITY;
    let mut ymin = f64::INFINITY;
    let mut ymax = f64::NEG_INFINITY;
    let mut grow = |x: f64, y: f64| {
        xmin = xmin.min(x);
        xmax = xmax.max(x);
        ymin = ymin.min(y);
        ymax = ymax.max(y);
    };
    for b in boxes {
        grow(b[0] - b[2], b[1] - b[3]);
        grow(b[0] + b[2], b[1] + b[3]);
    }
    for t in targets {
        grow(t[0], t[1]);
    }

    // Uniform scale keeps the boxes' aspect ratio honest.
    let span = (xmax - xmin).max(ymax - ymin).max(1e-9);
    let scale = (CANVAS - 2.0 * MARGIN) / span;
    let px = |x: f64| MARGIN + (x - xmin) * scale;
    let py = |y: f64| CANVAS - MARGIN - (y - ymin) * scale;

    let mut out = String::new();
    let _ = writeln!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{CANVAS}\" height=\"{CANVAS}\" \
         viewBox=\"0 0 {CANVAS} {CANVAS}\">"
    );
    let _ = writeln!(
        out,
        "  <rect width=\"{CANVAS}\" height=\"{CANVAS}\" fill=\"white\"/>"
    );
    for b in boxes {
        let _ = writeln!(
            out,
            "  <rect x=\"{:.3}\" y=\"{:.3}\" width=\"{:.3}\" height=\"{:.3}\" \
             fill=\"#4878b0\" fill-opacity=\"0.25\" stroke=\"#28507f\" stroke-width=\"0.8\"/>",
            px(b[0] - b[2]),
            py(b[1] + b[3]),
            2.0 * b[2] * scale,
            2.0 * b[3] * scale,
        );
    }
    for t in targets {
        let _ = writeln!(
            out,
            "  <circle cx=\"{:.3}\" cy=\"{:.3}\" r=\"2.5\" fill=\"#c23b3b\"/>",
            px(t[0]),
            py(t[1]),
        );
    }
    out.push_str("</svg>\n");
    fs::write(path, out)?;
    Ok(())
}
