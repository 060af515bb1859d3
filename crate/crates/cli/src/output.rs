//! CSV writers. Numbers use 17 significant digits so files reload exactly.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::failure::Failure;

pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

/// Writes `header` then one line per row.
pub fn write_csv<I>(path: &Path, header: &str, rows: I) -> Result<(), Failure>
where
    I: IntoIterator<Item = Vec<String>>,
{
    let file = File::create(path).map_err(|e| Failure::io(format!("{}: {e}", path.display())))?;
    let mut out = BufWriter::new(file);
    let io = |e: std::io::Error| Failure::io(format!("{}: {e}", path.display()));
    writeln!(out, "{header}").map_err(io)?;
    for row in rows {
        writeln!(out, "{}", row.join(",")).map_err(io)?;
    }
    out.flush().map_err(io)
}

/// Equal-width histogram over the data range; the last bin is closed, so
/// counts sum to the number of values.
pub fn histogram(values: &[f64], bins: usize) -> Vec<(f64, f64, usize)> {
    if values.is_empty() {
        return Vec::new();
    }
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi <= lo {
        return vec![(lo, hi, values.len())];
    }
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0usize; bins];
    for v in values {
        let i = (((v - lo) / width) as usize).min(bins - 1);
        counts[i] += 1;
    }
    counts
        .into_iter()
        .enumerate()
        .map(|(i, c)| {
            let b_lo = lo + width * i as f64;
            let b_hi = if i + 1 == bins { hi } else { lo + width * (i + 1) as f64 };
            (b_lo, b_hi, c)
        })
        .collect()
}

pub fn write_histogram(path: &Path, values: &[f64], bins: usize) -> Result<(), Failure> {
    write_csv(
        path,
        "bin_lo,bin_hi,count",
        histogram(values, bins)
            .into_iter()
            .map(|(lo, hi, c)| vec![num(lo), num(hi), c.to_string()]),
    )
}
