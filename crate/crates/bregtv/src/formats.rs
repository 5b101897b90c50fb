//! On-disk formats: PGM images, float CSV images, sinogram CSV and run traces.
//!
//! - PGM: binary `P5` or plain `P2`, written with maxval 65535 and read at any
//!   maxval up to 65535. Pixel values map linearly from `[0, scale]` onto
//!   `[0, maxval]`, where `scale = max(1, max pixel)`.
//! - Image CSV: one image row per line, comma-separated floats.
//! - Sinogram CSV: a header row `n_angles,n_detectors`, a row with the two
//!   counts, then one line per angle.
//! - Trace CSV: header `iter,alpha,discrepancy,rel_error,tv,bregman,fp_residual,objective,ms_elapsed`,
//!   one row per outer step, unknown values as `nan`, and a closing
//!   `# termination: <reason>` comment.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use bregtv_core::solver::{RunTrace, TraceRecord};
use bregtv_core::{Grid, ImageVector, Sinogram};

use crate::error::{Error, Result};

pub const PGM_MAXVAL: u32 = 65535;

pub const TRACE_COLUMNS: [&str; 9] = [
    "iter",
    "alpha",
    "discrepancy",
    "rel_error",
    "tv",
    "bregman",
    "fp_residual",
    "objective",
    "ms_elapsed",
];

pub const SINOGRAM_HEADER: &str = "n_angles,n_detectors";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PgmEncoding {
    /// `P5`, 16-bit big-endian samples.
    #[default]
    Binary,
    /// `P2`, decimal samples.
    Plain,
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn encode_pgm(img: &ImageVector, encoding: PgmEncoding) -> Vec<u8> {
    let scale = img.data().iter().copied().fold(1.0_f64, f64::max);
    let samples: Vec<u16> = img
        .data()
        .iter()
        .map(|&v| {
            let q = (v.max(0.0) / scale * PGM_MAXVAL as f64).round();
            q.clamp(0.0, PGM_MAXVAL as f64) as u16
        })
        .collect();
    let (w, h) = (img.width(), img.height());
    match encoding {
        PgmEncoding::Binary => {
            let mut out = format!("P5\n{w} {h}\n{PGM_MAXVAL}\n").into_bytes();
            for s in samples {
                out.extend_from_slice(&s.to_be_bytes());
            }
            out
        }
        PgmEncoding::Plain => {
            let mut out = format!("P2\n{w} {h}\n{PGM_MAXVAL}\n");
            for row in samples.chunks(w) {
                let line: Vec<String> = row.iter().map(u16::to_string).collect();
                out.push_str(&line.join(" "));
                out.push('\n');
            }
            out.into_bytes()
        }
    }
}

pub fn write_pgm(path: &Path, img: &ImageVector, encoding: PgmEncoding) -> Result<()> {
    write_file(path, &encode_pgm(img, encoding))
}

/// Parses a P2/P5 image into values in `[0, 1]`.
pub fn decode_pgm(bytes: &[u8]) -> Result<ImageVector> {
    let mut pos = 0;
    let mut tokens = Vec::with_capacity(4);
    while tokens.len() < 4 {
        // skip whitespace and comments
        while pos < bytes.len() && (bytes[pos].is_ascii_whitespace() || bytes[pos] == b'#') {
            if bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                pos += 1;
            }
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::format("pgm", "truncated header"));
        }
        tokens.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| Error::format("pgm", "non-ascii header"))?);
    }
    let magic = tokens[0];
    let parse = |t: &str, what: &str| -> Result<usize> {
        t.parse().map_err(|_| Error::format("pgm", format!("bad {what} `{t}`")))
    };
    let (w, h, maxval) = (
        parse(tokens[1], "width")?,
        parse(tokens[2], "height")?,
        parse(tokens[3], "maxval")?,
    );
    if maxval == 0 || maxval > PGM_MAXVAL as usize {
        return Err(Error::format("pgm", format!("maxval {maxval} out of range")));
    }
    let n = w * h;
    let samples: Vec<u32> = match magic {
        "P5" => {
            pos += 1; // single whitespace after maxval
            let wide = maxval > 255;
            let need = if wide { 2 * n } else { n };
            let body = bytes
                .get(pos..pos + need)
                .ok_or_else(|| Error::format("pgm", "truncated pixel data"))?;
            if wide {
                body.chunks_exact(2)
                    .map(|c| u16::from_be_bytes([c[0], c[1]]) as u32)
                    .collect()
            } else {
                body.iter().map(|&b| b as u32).collect()
            }
        }
        "P2" => {
            let text = std::str::from_utf8(&bytes[pos..]).map_err(|_| Error::format("pgm", "non-ascii body"))?;
            let vals: std::result::Result<Vec<u32>, _> =
                text.split_ascii_whitespace().take(n).map(str::parse).collect();
            let vals = vals.map_err(|_| Error::format("pgm", "bad sample"))?;
            if vals.len() != n {
                return Err(Error::format("pgm", "truncated pixel data"));
            }
            vals
        }
        other => return Err(Error::format("pgm", format!("unsupported magic `{other}`"))),
    };
    if samples.iter().any(|&s| s as usize > maxval) {
        return Err(Error::format("pgm", "sample exceeds maxval"));
    }
    let data = samples.iter().map(|&s| s as f64 / maxval as f64).collect();
    Ok(ImageVector::new(Grid::new(w, h)?, data)?)
}

pub fn read_pgm(path: &Path) -> Result<ImageVector> {
    decode_pgm(&read_file(path)?)
}

pub fn encode_image_csv(img: &ImageVector) -> String {
    let mut out = String::new();
    for row in img.data().chunks(img.width()) {
        let line: Vec<String> = row.iter().map(f64::to_string).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

pub fn decode_image_csv(text: &str) -> Result<ImageVector> {
    let rows = parse_float_rows(text, "image csv")?;
    let width = rows.first().map_or(0, Vec::len);
    if width == 0 || rows.iter().any(|r| r.len() != width) {
        return Err(Error::format("image csv", "rows must be non-empty and of equal length"));
    }
    let height = rows.len();
    Ok(ImageVector::from_dims(width, height, rows.concat())?)
}

fn parse_float_rows(text: &str, kind: &'static str) -> Result<Vec<Vec<f64>>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            l.split(',')
                .map(|t| {
                    t.trim()
                        .parse::<f64>()
                        .map_err(|_| Error::format(kind, format!("line {}: bad number `{}`", i + 1, t.trim())))
                })
                .collect()
        })
        .collect()
}

pub fn write_image_csv(path: &Path, img: &ImageVector) -> Result<()> {
    write_file(path, encode_image_csv(img).as_bytes())
}

pub fn read_image_csv(path: &Path) -> Result<ImageVector> {
    decode_image_csv(&read_text(path)?)
}

pub fn encode_sinogram(s: &Sinogram) -> String {
    let mut out = format!("{SINOGRAM_HEADER}\n{},{}\n", s.n_angles, s.n_detectors);
    for a in 0..s.n_angles {
        let line: Vec<String> = s.row(a).iter().map(f64::to_string).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

pub fn decode_sinogram(text: &str) -> Result<Sinogram> {
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some(SINOGRAM_HEADER) {
        return Err(Error::format(
            "sinogram",
            format!("expected header `{SINOGRAM_HEADER}`"),
        ));
    }
    let dims = lines
        .next()
        .ok_or_else(|| Error::format("sinogram", "missing dimensions row"))?;
    let dims: Vec<usize> = dims
        .split(',')
        .map(|t| t.trim().parse())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::format("sinogram", "bad dimensions row"))?;
    if dims.len() != 2 {
        return Err(Error::format("sinogram", "dimensions row needs two values"));
    }
    let rest: Vec<&str> = lines.collect();
    let rows = parse_float_rows(&rest.join("\n"), "sinogram")?;
    if rows.len() != dims[0] || rows.iter().any(|r| r.len() != dims[1]) {
        return Err(Error::format("sinogram", "data does not match the declared dimensions"));
    }
    Ok(Sinogram::new(dims[0], dims[1], rows.concat())?)
}

pub fn write_sinogram(path: &Path, s: &Sinogram) -> Result<()> {
    write_file(path, encode_sinogram(s).as_bytes())
}

pub fn read_sinogram(path: &Path) -> Result<Sinogram> {
    decode_sinogram(&read_text(path)?)
}

fn opt(v: Option<f64>) -> f64 {
    v.unwrap_or(f64::NAN)
}

/// Header plus one row per record, without the termination comment.
pub fn encode_trace_rows(records: &[TraceRecord]) -> String {
    let mut out = TRACE_COLUMNS.join(",");
    out.push('\n');
    for r in records {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.iter,
            r.alpha,
            r.discrepancy,
            opt(r.rel_error),
            r.tv,
            opt(r.bregman),
            r.fp_residual,
            r.objective,
            r.ms_elapsed
        );
    }
    out
}

pub fn encode_trace(trace: &RunTrace) -> String {
    let mut out = encode_trace_rows(&trace.records);
    let _ = write!(out, "# termination: {}", trace.termination.label());
    if let bregtv_core::Termination::Diverged { iteration, reason } = &trace.termination {
        let _ = write!(out, " at iteration {iteration} ({reason})");
    }
    out.push('\n');
    out
}

pub fn write_trace(path: &Path, trace: &RunTrace) -> Result<()> {
    write_file(path, encode_trace(trace).as_bytes())
}

/// Trace rows read back from CSV, with the termination comment if present.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedTrace {
    pub records: Vec<TraceRecord>,
    pub termination: Option<String>,
}

fn nan_to_none(v: f64) -> Option<f64> {
    if v.is_nan() {
        None
    } else {
        Some(v)
    }
}

pub fn decode_trace(text: &str) -> Result<ParsedTrace> {
    let mut lines = text.lines().enumerate();
    let header = lines.next().map(|(_, l)| l.trim()).unwrap_or_default();
    if header != TRACE_COLUMNS.join(",") {
        return Err(Error::format("trace", format!("unexpected header `{header}`")));
    }
    let mut records = Vec::new();
    let mut termination = None;
    for (i, line) in lines {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(c) = line.strip_prefix('#') {
            if let Some(t) = c.trim().strip_prefix("termination:") {
                termination = Some(t.trim().to_string());
            }
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != TRACE_COLUMNS.len() {
            return Err(Error::format(
                "trace",
                format!("line {}: expected {} columns", i + 1, TRACE_COLUMNS.len()),
            ));
        }
        let num = |k: usize| -> Result<f64> {
            cells[k]
                .trim()
                .parse::<f64>()
                .map_err(|_| Error::format("trace", format!("line {}: bad `{}`", i + 1, cells[k])))
        };
        records.push(TraceRecord {
            iter: cells[0]
                .trim()
                .parse()
                .map_err(|_| Error::format("trace", format!("line {}: bad iteration", i + 1)))?,
            alpha: num(1)?,
            discrepancy: num(2)?,
            rel_error: nan_to_none(num(3)?),
            tv: num(4)?,
            bregman: nan_to_none(num(5)?),
            fp_residual: num(6)?,
            objective: num(7)?,
            ms_elapsed: num(8)?,
        });
    }
    Ok(ParsedTrace { records, termination })
}

pub fn read_trace(path: &Path) -> Result<ParsedTrace> {
    decode_trace(&read_text(path)?)
}
