//! Text checkpoint format.
//!
//! ```text
//! asis-ckpt v1
//! encoder.0.weight 2 9 32
//! 0.01 -0.2 ...
//! ```
//!
//! Values are written with Rust's shortest round-trip float formatting, so
//! reading a checkpoint back reproduces every value bit for bit.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use thiserror::Error;

use super::Tensor;

pub const CHECKPOINT_HEADER: &str = "asis-ckpt v1";

#[derive(Clone, Debug, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub tensor: Tensor,
}

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("checkpoint I/O: {0}")]
    Io(#[from] io::Error),
    #[error("checkpoint line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

pub fn format_checkpoint(tensors: &[NamedTensor]) -> String {
    let mut out = String::new();
    out.push_str(CHECKPOINT_HEADER);
    out.push('\n');
    for nt in tensors {
        let _ = write!(out, "{} {}", nt.name, nt.tensor.shape().len());
        for d in nt.tensor.shape() {
            let _ = write!(out, " {d}");
        }
        out.push('\n');
        let mut first = true;
        for v in nt.tensor.data() {
            if !first {
                out.push(' ');
            }
            first = false;
            let _ = write!(out, "{v:?}");
        }
        out.push('\n');
    }
    out
}

pub fn write_checkpoint(path: &Path, tensors: &[NamedTensor]) -> Result<(), CheckpointError> {
    fs::write(path, format_checkpoint(tensors))?;
    Ok(())
}

pub fn parse_checkpoint(text: &str) -> Result<Vec<NamedTensor>, CheckpointError> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == CHECKPOINT_HEADER => {}
        _ => {
            return Err(CheckpointError::Parse {
                line: 1,
                msg: format!("expected header `{CHECKPOINT_HEADER}`"),
            })
        }
    }
    let mut out = Vec::new();
    while let Some((i, head)) = lines.next() {
        if head.trim().is_empty() {
            continue;
        }
        let line = i + 1;
        let bad = |msg: String| CheckpointError::Parse { line, msg };
        let mut parts = head.split_whitespace();
        let name = parts.next().ok_or_else(|| bad("missing tensor name".into()))?.to_string();
        let ndim: usize = parts
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| bad("missing or invalid rank".into()))?;
        let shape: Vec<usize> = parts
            .map(|s| s.parse::<usize>().map_err(|e| bad(format!("extent `{s}`: {e}"))))
            .collect::<Result<_, _>>()?;
        if shape.len() != ndim {
            return Err(bad(format!("rank {ndim} but {} extents", shape.len())));
        }
        let (vi, values_line) = lines
            .next()
            .ok_or_else(|| bad(format!("tensor `{name}` has no value line")))?;
        let values: Vec<f64> = values_line
            .split_whitespace()
            .map(|s| {
                s.parse::<f64>().map_err(|e| CheckpointError::Parse {
                    line: vi + 1,
                    msg: format!("value `{s}`: {e}"),
                })
            })
            .collect::<Result<_, _>>()?;
        let tensor = Tensor::new(shape, values)
            .map_err(|e| CheckpointError::Parse { line: vi + 1, msg: e.to_string() })?;
        out.push(NamedTensor { name, tensor });
    }
    Ok(out)
}

pub fn read_checkpoint(path: &Path) -> Result<Vec<NamedTensor>, CheckpointError> {
    parse_checkpoint(&fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn layout_matches_format() {
        let t = NamedTensor {
            name: "w".into(),
            tensor: Tensor::from_rows(&[[1.0, 0.5], [-2.0, 3.0]]).unwrap(),
        };
        assert_eq!(format_checkpoint(&[t]), "asis-ckpt v1\nw 2 2 2\n1.0 0.5 -2.0 3.0\n");
    }

    #[test]
    fn rejects_missing_header_and_bad_values() {
        assert!(parse_checkpoint("w 1 1\n1.0\n").is_err());
        let err = parse_checkpoint("asis-ckpt v1\nw 1 2\n1.0 zz\n").unwrap_err();
        assert!(matches!(err, CheckpointError::Parse { line: 3, .. }));
        let err = parse_checkpoint("asis-ckpt v1\nw 1 3\n1.0 2.0\n").unwrap_err();
        assert!(matches!(err, CheckpointError::Parse { line: 3, .. }));
    }

    proptest! {
        #[test]
        fn round_trip_is_bit_exact(values in prop::collection::vec(any::<f64>().prop_filter("finite", |v| v.is_finite()), 1..40)) {
            let n = values.len();
            let t = NamedTensor { name: "p".into(), tensor: Tensor::new(vec![n], values).unwrap() };
            let back = parse_checkpoint(&format_checkpoint(std::slice::from_ref(&t))).unwrap();
            prop_assert_eq!(back, vec![t]);
        }
    }
}
