//! Text formats used by the command-line tool.
//!
//! * Series files: a `MATSERIES v1 T p1 p2` header followed by `T` blocks of
//!   `p1` lines with `p2` space-separated numbers, each written with 17
//!   significant digits so that every finite double survives a round trip.
//! * Matrix CSV: one matrix row per line, no header.
//! * Block CSV: a stack of equally shaped matrices, one row per line, the
//!   first column holding the (0-based) block index.
//! * Run manifest: flat `key=value` lines.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::{Array2, Array3, ArrayView2, ArrayView3};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::types::MatrixSeries;

pub const SERIES_MAGIC: &str = "MATSERIES";
pub const SERIES_VERSION: &str = "v1";

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| io_err(path, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| io_err(path, e))
}

/// Format used inside series files: 17 significant digits.
fn series_number(v: f64) -> String {
    format!("{v:.16e}")
}

/// Shortest representation that parses back to the same double.
pub fn csv_number(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 || (1e-5..1e16).contains(&a) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

/// Render a series in the series-file format.
///
/// ```
/// use ndarray::array;
/// use tedfam::{io, MatrixSeries};
/// let s = MatrixSeries::from_blocks(&[array![[1.0, 0.0], [0.0, 0.5]]]).unwrap();
/// let text = io::series_to_string(&s);
/// assert!(text.starts_with("MATSERIES v1 1 2 2\n"));
/// assert_eq!(io::series_from_str(&text, "mem".as_ref()).unwrap(), s);
/// ```
pub fn series_to_string(series: &MatrixSeries) -> String {
    let (t, p1, p2) = series.dims();
    let mut out = String::with_capacity(24 * t * p1 * p2 + 32);
    writeln!(out, "{SERIES_MAGIC} {SERIES_VERSION} {t} {p1} {p2}").unwrap();
    for x in series.iter() {
        for row in x.rows() {
            let mut first = true;
            for &v in row {
                if !first {
                    out.push(' ');
                }
                first = false;
                out.push_str(&series_number(v));
            }
            out.push('\n');
        }
    }
    out
}

/// Parse the series-file format. `path` is only used in error messages.
pub fn series_from_str(text: &str, path: &Path) -> Result<MatrixSeries> {
    let body = text.strip_suffix('\n').unwrap_or(text);
    let mut lines = body.split('\n').enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| parse_err(path, 1, "empty file"))?;
    let header = header.trim_end_matches('\r');
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() != 5 || fields[0] != SERIES_MAGIC {
        return Err(parse_err(
            path,
            1,
            format!("expected header '{SERIES_MAGIC} {SERIES_VERSION} T p1 p2', found '{header}'"),
        ));
    }
    if fields[1] != SERIES_VERSION {
        return Err(parse_err(
            path,
            1,
            format!("unsupported version '{}'", fields[1]),
        ));
    }
    let dim = |s: &str, name: &str| -> Result<usize> {
        s.parse::<usize>().map_err(|_| {
            parse_err(
                path,
                1,
                format!("{name} must be a nonnegative integer, found '{s}'"),
            )
        })
    };
    let t = dim(fields[2], "T")?;
    let p1 = dim(fields[3], "p1")?;
    let p2 = dim(fields[4], "p2")?;
    let expected_lines = t
        .checked_mul(p1)
        .filter(|n| n.checked_mul(p2).is_some())
        .ok_or_else(|| parse_err(path, 1, "dimensions overflow"))?;

    let mut data = Vec::with_capacity(expected_lines * p2);
    let mut seen = 0;
    for (idx, raw) in lines {
        let line_no = idx + 1;
        let line = raw.trim_end_matches('\r');
        if seen == expected_lines {
            if line.trim().is_empty() {
                continue;
            }
            return Err(parse_err(
                path,
                line_no,
                format!("extra data after {t} blocks of {p1} lines"),
            ));
        }
        let before = data.len();
        for tok in line.split_whitespace() {
            let v: f64 = tok
                .parse()
                .map_err(|_| parse_err(path, line_no, format!("not a number: '{tok}'")))?;
            if !v.is_finite() {
                return Err(parse_err(
                    path,
                    line_no,
                    format!("non-finite value '{tok}'"),
                ));
            }
            data.push(v);
        }
        let got = data.len() - before;
        if got != p2 {
            return Err(parse_err(
                path,
                line_no,
                format!("expected {p2} values, found {got}"),
            ));
        }
        seen += 1;
    }
    if seen != expected_lines {
        return Err(parse_err(
            path,
            seen + 2,
            format!("expected {expected_lines} data lines ({t} blocks of {p1}), found {seen}"),
        ));
    }
    let arr = Array3::from_shape_vec((t, p1, p2), data).expect("length checked");
    MatrixSeries::new(arr)
}

pub fn read_series(path: &Path) -> Result<MatrixSeries> {
    series_from_str(&read_text(path)?, path)
}

pub fn write_series(path: &Path, series: &MatrixSeries) -> Result<()> {
    write_text(path, &series_to_string(series))
}

pub fn matrix_to_csv(m: ArrayView2<f64>) -> String {
    let mut out = String::new();
    for row in m.rows() {
        let cells: Vec<String> = row.iter().map(|&v| csv_number(v)).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

fn parse_csv_row(line: &str, path: &Path, line_no: usize) -> Result<Vec<f64>> {
    line.split(',')
        .map(|tok| {
            let tok = tok.trim();
            tok.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| parse_err(path, line_no, format!("not a finite number: '{tok}'")))
        })
        .collect()
}

pub fn matrix_from_csv(text: &str, path: &Path) -> Result<Array2<f64>> {
    let mut data = Vec::new();
    let mut ncols = None;
    let mut nrows = 0;
    for (idx, raw) in text.lines().enumerate() {
        if raw.trim().is_empty() {
            continue;
        }
        let row = parse_csv_row(raw, path, idx + 1)?;
        match ncols {
            None => ncols = Some(row.len()),
            Some(n) if n != row.len() => {
                return Err(parse_err(
                    path,
                    idx + 1,
                    format!("expected {n} columns, found {}", row.len()),
                ))
            }
            _ => {}
        }
        data.extend(row);
        nrows += 1;
    }
    let ncols = ncols.ok_or_else(|| parse_err(path, 1, "empty matrix file"))?;
    Ok(Array2::from_shape_vec((nrows, ncols), data).expect("rectangular"))
}

pub fn read_matrix_csv(path: &Path) -> Result<Array2<f64>> {
    matrix_from_csv(&read_text(path)?, path)
}

pub fn write_matrix_csv(path: &Path, m: ArrayView2<f64>) -> Result<()> {
    write_text(path, &matrix_to_csv(m))
}

/// Stack of matrices, one row per line prefixed by the block index.
pub fn blocks_to_csv(blocks: ArrayView3<f64>) -> String {
    let mut out = String::new();
    for (t, block) in blocks.outer_iter().enumerate() {
        for row in block.rows() {
            out.push_str(&t.to_string());
            for &v in row {
                out.push(',');
                out.push_str(&csv_number(v));
            }
            out.push('\n');
        }
    }
    out
}

/// Inverse of [`blocks_to_csv`]; blocks must be contiguous and equally tall.
pub fn blocks_from_csv(text: &str, path: &Path) -> Result<Array3<f64>> {
    let mut rows: Vec<(usize, Vec<f64>)> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        if raw.trim().is_empty() {
            continue;
        }
        let (head, rest) = raw
            .split_once(',')
            .ok_or_else(|| parse_err(path, idx + 1, "missing block index"))?;
        let t: usize = head
            .trim()
            .parse()
            .map_err(|_| parse_err(path, idx + 1, format!("bad block index '{head}'")))?;
        let expected = rows.last().map_or(0, |(last, _)| *last);
        if t != expected && t != expected + 1 {
            return Err(parse_err(
                path,
                idx + 1,
                format!("block index {t} out of sequence"),
            ));
        }
        rows.push((t, parse_csv_row(rest, path, idx + 1)?));
    }
    let Some((last, _)) = rows.last() else {
        return Err(parse_err(path, 1, "empty block file"));
    };
    let nblocks = last + 1;
    if !rows.len().is_multiple_of(nblocks) {
        return Err(parse_err(path, rows.len(), "blocks have unequal heights"));
    }
    let height = rows.len() / nblocks;
    let width = rows[0].1.len();
    let mut data = Vec::with_capacity(rows.len() * width);
    for (i, (t, row)) in rows.into_iter().enumerate() {
        if t != i / height || row.len() != width {
            return Err(parse_err(path, i + 1, "inconsistent block layout"));
        }
        data.extend(row);
    }
    Ok(Array3::from_shape_vec((nblocks, height, width), data).expect("layout checked"))
}

pub fn write_blocks_csv(path: &Path, blocks: ArrayView3<f64>) -> Result<()> {
    write_text(path, &blocks_to_csv(blocks))
}

pub fn read_blocks_csv(path: &Path) -> Result<Array3<f64>> {
    blocks_from_csv(&read_text(path)?, path)
}

/// Hex SHA-256 of a file's bytes.
pub fn file_digest(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    let digest = Sha256::digest(&bytes);
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

pub const MANIFEST_FILE: &str = "manifest.txt";

/// Record of one command invocation, written beside its outputs.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct RunManifest {
    pub command: String,
    pub flags: BTreeMap<String, String>,
    pub seed: Option<u64>,
    /// Input label → hex SHA-256.
    pub inputs: BTreeMap<String, String>,
    pub version: String,
}

impl RunManifest {
    pub fn new(command: &str) -> Self {
        Self {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            ..Self::default()
        }
    }

    pub fn flag(&mut self, name: &str, value: impl ToString) -> &mut Self {
        self.flags.insert(name.to_string(), value.to_string());
        self
    }

    pub fn input(&mut self, label: &str, path: &Path) -> Result<&mut Self> {
        self.inputs.insert(label.to_string(), file_digest(path)?);
        Ok(self)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(out, "command={}", self.command).unwrap();
        writeln!(out, "version={}", self.version).unwrap();
        if let Some(seed) = self.seed {
            writeln!(out, "seed={seed}").unwrap();
        }
        for (k, v) in &self.flags {
            writeln!(out, "flag.{k}={v}").unwrap();
        }
        for (k, v) in &self.inputs {
            writeln!(out, "input.{k}.sha256={v}").unwrap();
        }
        out
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut m = Self::default();
        for (idx, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| parse_err(path, idx + 1, "expected key=value"))?;
            match k {
                "command" => m.command = v.to_string(),
                "version" => m.version = v.to_string(),
                "seed" => {
                    m.seed = Some(
                        v.parse()
                            .map_err(|_| parse_err(path, idx + 1, format!("bad seed '{v}'")))?,
                    )
                }
                _ => {
                    if let Some(name) = k.strip_prefix("flag.") {
                        m.flags.insert(name.to_string(), v.to_string());
                    } else if let Some(label) = k
                        .strip_prefix("input.")
                        .and_then(|s| s.strip_suffix(".sha256"))
                    {
                        m.inputs.insert(label.to_string(), v.to_string());
                    } else {
                        return Err(parse_err(path, idx + 1, format!("unknown key '{k}'")));
                    }
                }
            }
        }
        Ok(m)
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join(MANIFEST_FILE);
        write_text(&path, &self.to_text())?;
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn p() -> &'static Path {
        Path::new("test.mser")
    }

    #[test]
    fn series_round_trip_is_bit_exact() {
        let vals = [
            0.1,
            -0.0,
            1.0 / 3.0,
            f64::MIN_POSITIVE,
            5e-324,
            f64::MAX,
            -1.234_567_890_123_456_7e-200,
            std::f64::consts::PI,
        ];
        let arr = Array3::from_shape_vec((2, 2, 2), vals.to_vec()).unwrap();
        let s = MatrixSeries::new(arr).unwrap();
        let text = series_to_string(&s);
        let back = series_from_str(&text, p()).unwrap();
        for (a, b) in s.as_slice().iter().zip(back.as_slice()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        assert_eq!(series_to_string(&back), text);
    }

    #[test]
    fn series_layout() {
        let s = MatrixSeries::from_blocks(&[
            array![[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]],
            array![[0.0, 0.0, 0.0], [0.0, 0.0, -1.0]],
        ])
        .unwrap();
        let text = series_to_string(&s);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "MATSERIES v1 2 2 3");
        assert_eq!(lines.len(), 5);
        assert_eq!(lines[1].split(' ').count(), 3);
        assert!(text.ends_with('\n') && !text.contains('\r'));
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let bad_header = "MATRIX v1 1 2 2\n1 2\n3 4\n";
        match series_from_str(bad_header, p()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 1),
            other => panic!("{other:?}"),
        }
        let bad_value = "MATSERIES v1 1 2 2\n1 2\n3 x\n";
        match series_from_str(bad_value, p()) {
            Err(Error::Parse { line, message, .. }) => {
                assert_eq!(line, 3);
                assert!(message.contains("'x'"));
            }
            other => panic!("{other:?}"),
        }
        let short_row = "MATSERIES v1 1 2 2\n1 2\n3\n";
        assert!(matches!(
            series_from_str(short_row, p()),
            Err(Error::Parse { line: 3, .. })
        ));
        let missing = "MATSERIES v1 2 2 2\n1 2\n3 4\n";
        match series_from_str(missing, p()) {
            Err(Error::Parse { line, message, .. }) => {
                assert_eq!(line, 4);
                assert!(message.contains("expected 4 data lines"), "{message}");
            }
            other => panic!("{other:?}"),
        }
        let extra = "MATSERIES v1 1 2 2\n1 2\n3 4\n5 6\n";
        assert!(matches!(
            series_from_str(extra, p()),
            Err(Error::Parse { line: 4, .. })
        ));
        let nan = "MATSERIES v1 1 2 2\n1 NaN\n3 4\n";
        assert!(matches!(
            series_from_str(nan, p()),
            Err(Error::Parse { line: 2, .. })
        ));
        let version = "MATSERIES v2 1 2 2\n1 2\n3 4\n";
        assert!(matches!(
            series_from_str(version, p()),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn shape_violations_are_validation_errors() {
        let thin = "MATSERIES v1 1 1 2\n1 2\n";
        assert!(matches!(
            series_from_str(thin, p()),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn csv_round_trips() {
        let m = array![[std::f64::consts::SQRT_2, 0.0], [-1e-300, 12345.5]];
        let text = matrix_to_csv(m.view());
        assert!(text.starts_with("1.4142135623730951,0\n"));
        let back = matrix_from_csv(&text, p()).unwrap();
        assert_eq!(back, m);
        assert!(matches!(
            matrix_from_csv("1,2\n3\n", p()),
            Err(Error::Parse { line: 2, .. })
        ));

        let blocks = Array3::from_shape_fn((3, 2, 2), |(t, i, j)| (t * 4 + i * 2 + j) as f64 * 0.1);
        let text = blocks_to_csv(blocks.view());
        assert!(text.starts_with("0,0,0.1\n"));
        assert_eq!(blocks_from_csv(&text, p()).unwrap(), blocks);
        assert!(blocks_from_csv("0,1\n2,3\n", p()).is_err());
    }

    #[test]
    fn manifest_round_trip() {
        let mut m = RunManifest::new("simulate");
        m.seed = Some(42);
        m.flag("scenario", "I").flag("t", 100);
        m.inputs.insert("input".into(), "ab".repeat(32));
        let text = m.to_text();
        assert!(text.contains("command=simulate\n") && text.contains("flag.t=100\n"));
        assert_eq!(RunManifest::parse(&text, p()).unwrap(), m);
        assert!(RunManifest::parse("nonsense\n", p()).is_err());
    }

    #[test]
    fn digest_of_known_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let f = dir.path().join("abc");
        std::fs::write(&f, b"abc").unwrap();
        assert_eq!(
            file_digest(&f).unwrap(),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
        assert!(matches!(
            file_digest(&dir.path().join("missing")),
            Err(Error::Io { .. })
        ));
    }
}
