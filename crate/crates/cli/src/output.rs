use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use parseq_core::Trajectory;
use serde::Serialize;

use crate::error::CliError;

/// File at `path`, or stdout.
pub fn sink(path: Option<&Path>) -> Result<Box<dyn Write>, CliError> {
    Ok(match path {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)?;
            }
            Box::new(BufWriter::new(File::create(p)?))
        }
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

/// Writes rows in the given order with a header taken from the row type.
pub fn write_csv<T: Serialize>(rows: &[T], path: Option<&Path>) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(sink(path)?);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

/// `schema_version,t,x0,...` with `s_0` as the `t=0` row; values carry 17
/// significant digits.
pub fn write_trajectory_csv(
    traj: &Trajectory,
    version: u32,
    path: Option<&Path>,
) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(sink(path)?);
    let mut header = vec!["schema_version".to_string(), "t".to_string()];
    header.extend((0..traj.dim()).map(|i| format!("x{i}")));
    w.write_record(&header)?;
    for t in 0..=traj.len() {
        let mut rec = vec![version.to_string(), t.to_string()];
        rec.extend(traj.state(t).iter().map(|v| format!("{v:.16e}")));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize>(value: &T, path: Option<&Path>) -> Result<(), CliError> {
    let mut w = sink(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

/// `runs/twowell.csv` -> `runs/twowell_lle.csv`.
pub fn sibling_path(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let name = match path.extension() {
        Some(ext) => format!("{stem}_{suffix}.{}", ext.to_string_lossy()),
        None => format!("{stem}_{suffix}"),
    };
    path.with_file_name(name)
}
