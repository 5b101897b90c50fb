//! Gnuplot profiles of a run trace: relative error and discrepancy against
//! the outer iteration on a log scale.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::formats::{self, ParsedTrace};

pub const DATA_FILE: &str = "profile.dat";
pub const SCRIPT_FILE: &str = "profile.gp";
/// Trace columns drawn by the script, referenced by header name.
pub const PLOTTED: [&str; 2] = ["rel_error", "discrepancy"];

/// The data block: the trace header followed by its numeric rows.
pub fn data_block(trace: &ParsedTrace) -> String {
    formats::encode_trace_rows(&trace.records)
}

pub fn script(data_file: &str) -> String {
    let series: Vec<String> = PLOTTED
        .iter()
        .enumerate()
        .map(|(i, col)| {
            let src = if i == 0 {
                format!("'{data_file}'")
            } else {
                "''".to_string()
            };
            format!("{src} using (column(\"iter\")):(column(\"{col}\")) with linespoints title '{col}'")
        })
        .collect();
    format!(
        "set datafile separator ','\n\
         set datafile missing 'NaN'\n\
         set terminal pngcairo size 900,600\n\
         set output 'profile.png'\n\
         set logscale y\n\
         set xlabel 'outer iteration'\n\
         set grid\n\
         plot {}\n",
        series.join(", \\\n     ")
    )
}

/// Writes `profile.dat` and `profile.gp` into `out_dir`.
pub fn emit_profile_plots(trace_csv: &Path, out_dir: &Path) -> Result<(PathBuf, PathBuf)> {
    let trace = formats::read_trace(trace_csv)?;
    if trace.records.is_empty() {
        return Err(Error::Usage(format!("{}: trace has no rows", trace_csv.display())));
    }
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let data = out_dir.join(DATA_FILE);
    let gp = out_dir.join(SCRIPT_FILE);
    fs::write(&data, data_block(&trace)).map_err(|e| Error::io(&data, e))?;
    fs::write(&gp, script(DATA_FILE)).map_err(|e| Error::io(&gp, e))?;
    Ok((data, gp))
}
