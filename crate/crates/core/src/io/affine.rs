//! Affine text files: 16 whitespace-separated numbers, row-major, target world to
//! source world in mm. Text after `#` on a line is ignored.

use std::path::Path;

use nalgebra::Matrix4;

use crate::error::{Error, Result};
use crate::transform::AffineTransform;

const BOTTOM_ROW_TOL: f64 = 1e-9;

pub fn parse_affine(text: &str) -> Result<AffineTransform> {
    let mut values = Vec::with_capacity(16);
    let mut end = (1, 1);
    for (l, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("");
        let mut col = 0;
        for token in line.split_whitespace() {
            let start = col + line[col..].find(token).expect("token comes from line");
            col = start + token.len();
            let pos = (l + 1, start + 1);
            let v: f64 = token.parse().map_err(|_| Error::Parse {
                line: pos.0,
                column: pos.1,
                message: format!("'{token}' is not a number"),
            })?;
            if values.len() == 16 {
                return Err(Error::Parse {
                    line: pos.0,
                    column: pos.1,
                    message: "more than 16 numbers".into(),
                });
            }
            values.push(v);
        }
        end = (l + 1, raw.len() + 1);
    }
    if values.len() != 16 {
        return Err(Error::Parse {
            line: end.0,
            column: end.1,
            message: format!("expected 16 numbers, found {}", values.len()),
        });
    }
    let mut m = Matrix4::from_row_slice(&values);
    for (c, want) in [0.0, 0.0, 0.0, 1.0].into_iter().enumerate() {
        if (m[(3, c)] - want).abs() > BOTTOM_ROW_TOL {
            return Err(Error::InvalidAffine(format!(
                "bottom row must be (0, 0, 0, 1), entry {} is {}",
                c + 1,
                m[(3, c)]
            )));
        }
        m[(3, c)] = want;
    }
    AffineTransform::new(m)
}

/// Shortest representation that parses back to the same `f64`.
pub fn format_affine(t: &AffineTransform) -> String {
    let m = t.matrix();
    let mut out = String::new();
    for r in 0..4 {
        let row: Vec<String> = (0..4).map(|c| format!("{:?}", m[(r, c)])).collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
    out
}

pub fn read_affine(path: impl AsRef<Path>) -> Result<AffineTransform> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_affine(&text)
}

pub fn write_affine(t: &AffineTransform, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, format_affine(t)).map_err(|e| Error::io(path, e))
}
