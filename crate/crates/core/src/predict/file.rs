//! Plain-text predictions format:
//!
//! ```text
//! #lscp v1 dim=<D> cutoff=<YYYY-MM> tag=<string>
//! <D space-separated floats>
//! ...
//! ```

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::month::YearMonth;
use crate::scoring::PredictionSet;

pub const PREDICTIONS_EXT: &str = "lscp";

const MAGIC: &str = "#lscp v1";

pub fn write_predictions(set: &PredictionSet, dim: usize, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if set.predictor_tag.contains('\n') {
        return Err(Error::InvalidParam("predictor tag must be a single line".into()));
    }
    let mut out = format!("{MAGIC} dim={dim} cutoff={} tag={}\n", set.cutoff, set.predictor_tag);
    for (i, p) in set.coords.iter().enumerate() {
        if p.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: p.len(),
                context: format!("prediction {i}"),
            });
        }
        if p.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidParam(format!("prediction {i} has a non-finite coordinate")));
        }
        let row: Vec<String> = p.iter().map(|x| x.to_string()).collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
}

/// Parses a predictions file, checking rows against `expected_dim` when given.
pub fn load_predictions(path: impl AsRef<Path>, expected_dim: Option<usize>) -> Result<PredictionSet> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let err = |line: usize, detail: String| Error::PredictionsFormat {
        path: path.to_path_buf(),
        line,
        detail,
    };
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| err(1, "missing header".into()))?;
    let rest = header
        .strip_prefix(MAGIC)
        .and_then(|r| r.strip_prefix(' '))
        .ok_or_else(|| err(1, format!("header must start with {MAGIC:?}")))?;

    let (fields, tag) = rest
        .split_once("tag=")
        .ok_or_else(|| err(1, "header lacks tag=".into()))?;
    let (mut dim, mut cutoff) = (None, None);
    for tok in fields.split_whitespace() {
        match tok.split_once('=') {
            Some(("dim", v)) => dim = Some(v.parse::<usize>().map_err(|e| err(1, format!("dim: {e}")))?),
            Some(("cutoff", v)) => cutoff = Some(v.parse::<YearMonth>().map_err(|e| err(1, e.to_string()))?),
            _ => return Err(err(1, format!("unexpected header field {tok:?}"))),
        }
    }
    let dim = dim.ok_or_else(|| err(1, "header lacks dim=".into()))?;
    let cutoff = cutoff.ok_or_else(|| err(1, "header lacks cutoff=".into()))?;
    if let Some(expected) = expected_dim {
        if expected != dim {
            return Err(err(1, format!("file dimension {dim} does not match corpus dimension {expected}")));
        }
    }

    let mut set = PredictionSet::new(cutoff, tag.trim_end());
    for (i, line) in lines.enumerate() {
        let lineno = i + 2;
        if line.trim().is_empty() {
            continue;
        }
        let row = line
            .split_whitespace()
            .map(|v| v.parse::<f32>())
            .collect::<std::result::Result<Vec<f32>, _>>()
            .map_err(|e| err(lineno, format!("{e}: {line:?}")))?;
        if row.len() != dim {
            return Err(err(lineno, format!("row has {} values, expected {dim}", row.len())));
        }
        if row.iter().any(|x| !x.is_finite()) {
            return Err(err(lineno, "non-finite value".into()));
        }
        set.coords.push(row);
    }
    Ok(set)
}
