use super::runner::{MseRecord, SweepResult};
use crate::error::Result;
use std::io::Write;
use std::path::{Path, PathBuf};

pub const CSV_HEADER: &str = "sweep,value,trial,mse_g,mse_beta,mse_upsilon,mse_hno,runtime_ms";

pub fn write_csv<W: Write>(records: &[MseRecord], mut w: W) -> Result<()> {
    writeln!(w, "{CSV_HEADER}")?;
    for r in records {
        writeln!(
            w,
            "{},{:.8e},{},{:.8e},{:.8e},{:.8e},{:.8e},{:.8e}",
            r.sweep, r.value, r.trial, r.mse_g, r.mse_beta, r.mse_upsilon, r.mse_hno, r.runtime_ms
        )?;
    }
    Ok(())
}

/// Writes `results.csv` and `summary.json` into `dir`, creating it if needed.
pub fn write_outputs(dir: &Path, result: &SweepResult) -> Result<(PathBuf, PathBuf)> {
    std::fs::create_dir_all(dir)?;
    let csv = dir.join("results.csv");
    let json = dir.join("summary.json");
    let mut f = std::io::BufWriter::new(std::fs::File::create(&csv)?);
    write_csv(&result.records, &mut f)?;
    f.flush()?;
    std::fs::write(&json, serde_json::to_string_pretty(&result.summary)?)?;
    Ok((csv, json))
}
