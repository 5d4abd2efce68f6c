//! Small helpers shared by the CSV and JSON writers.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

/// Significant digits kept in every serialized number.
pub const SIGNIFICANT_DIGITS: usize = 12;

/// Rounds `x` to [`SIGNIFICANT_DIGITS`] significant digits.
pub fn round_sig(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{:.*e}", SIGNIFICANT_DIGITS - 1, x).parse().unwrap_or(x)
}

/// Formats a number for output: 12 significant digits, shortest form.
pub fn fmt_num(x: f64) -> String {
    format!("{:?}", round_sig(x))
}

pub(crate) fn io_error(path: &Path) -> impl Fn(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub(crate) fn csv_error(path: &Path) -> impl Fn(csv::Error) -> Error + '_ {
    move |e| {
        let line = e.position().map(|p| p.line()).unwrap_or(0);
        match e.into_kind() {
            csv::ErrorKind::Io(source) => Error::Io {
                path: path.to_path_buf(),
                source,
            },
            kind => Error::Parse {
                path: path.to_path_buf(),
                line,
                message: format!("{kind:?}"),
            },
        }
    }
}

/// Runs `write` against a buffered file at `path`.
pub fn write_file(path: impl AsRef<Path>, write: impl FnOnce(&mut dyn Write) -> std::io::Result<()>) -> Result<()> {
    let path = path.as_ref();
    let err = io_error(path);
    let file = File::create(path).map_err(&err)?;
    let mut buf = BufWriter::new(file);
    write(&mut buf).map_err(&err)?;
    buf.flush().map_err(err)
}

/// Serializes `value` as pretty JSON into `path`.
pub fn write_json(path: impl AsRef<Path>, value: &serde_json::Value) -> Result<()> {
    write_file(path, |out| {
        serde_json::to_writer_pretty(&mut *out, value)?;
        writeln!(out)
    })
}

/// Path of the metadata sidecar written next to `path`.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".meta.json");
    PathBuf::from(name)
}
