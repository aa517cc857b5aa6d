//! Stable CSV schemas for the experiment outputs.
//!
//! Metrics:  step,elapsed_ms,<score>,nll,lengthscale_0..,outputscale,noise
//! BO trace: iteration,elapsed_ms,best_value
//! AL trace: acquisitions,rmse
//! Bench:    step,elapsed_ms,rmse,nll

use std::io::Write;
use std::path::Path;

use wiski::loops::active::AlTrace;
use wiski::loops::bayesopt::BoTrace;
use wiski::loops::{BenchRow, MetricsRow};

use crate::CliError;

fn writer(out: Option<&Path>) -> Result<Box<dyn Write>, CliError> {
    match out {
        Some(path) => Ok(Box::new(std::io::BufWriter::new(std::fs::File::create(path)?))),
        None => Ok(Box::new(std::io::stdout().lock())),
    }
}

/// `score_name` is `rmse` for regression and `accuracy` for classification.
pub fn write_metrics(
    out: Option<&Path>,
    rows: &[MetricsRow<f64>],
    score_name: &str,
) -> Result<(), CliError> {
    let mut w = writer(out)?;
    let d = rows.first().map_or(0, |r| r.params.log_lengthscales.len());
    let ls_cols: Vec<String> = (0..d).map(|i| format!("lengthscale_{i}")).collect();
    writeln!(
        w,
        "step,elapsed_ms,{score_name},nll,{},outputscale,noise",
        ls_cols.join(",")
    )?;
    for row in rows {
        let ls: Vec<String> = row
            .params
            .log_lengthscales
            .iter()
            .map(|v| format!("{:.9e}", v.exp()))
            .collect();
        writeln!(
            w,
            "{},{:.4},{:.9e},{:.9e},{},{:.9e},{:.9e}",
            row.step,
            row.elapsed_ms,
            row.rmse,
            row.nll,
            ls.join(","),
            row.params.outputscale(),
            row.params.noise_variance()
        )?;
    }
    w.flush()?;
    Ok(())
}

/// Per-seed output path `<stem>_seed<k>.<ext>` next to the merged file.
pub fn per_seed_path(out: Option<&Path>, seed: u64) -> Option<std::path::PathBuf> {
    let out = out?;
    let stem = out.file_stem()?.to_string_lossy();
    let ext = out.extension().map(|e| e.to_string_lossy().into_owned());
    let name = match ext {
        Some(e) => format!("{stem}_seed{seed}.{e}"),
        None => format!("{stem}_seed{seed}"),
    };
    Some(out.with_file_name(name))
}

/// Merged multi-trial metrics with a leading seed column.
pub fn write_merged_metrics(
    out: Option<&Path>,
    seeds: &[u64],
    per_seed: &[Vec<MetricsRow<f64>>],
    score_name: &str,
) -> Result<(), CliError> {
    let mut w = writer(out)?;
    let d = per_seed
        .first()
        .and_then(|rows| rows.first())
        .map_or(0, |r| r.params.log_lengthscales.len());
    let ls_cols: Vec<String> = (0..d).map(|i| format!("lengthscale_{i}")).collect();
    writeln!(
        w,
        "seed,step,elapsed_ms,{score_name},nll,{},outputscale,noise",
        ls_cols.join(",")
    )?;
    for (seed, rows) in seeds.iter().zip(per_seed.iter()) {
        for row in rows {
            let ls: Vec<String> = row
                .params
                .log_lengthscales
                .iter()
                .map(|v| format!("{:.9e}", v.exp()))
                .collect();
            writeln!(
                w,
                "{},{},{:.4},{:.9e},{:.9e},{},{:.9e},{:.9e}",
                seed,
                row.step,
                row.elapsed_ms,
                row.rmse,
                row.nll,
                ls.join(","),
                row.params.outputscale(),
                row.params.noise_variance()
            )?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_bo_trace(out: Option<&Path>, trace: &BoTrace<f64>) -> Result<(), CliError> {
    let mut w = writer(out)?;
    writeln!(w, "iteration,elapsed_ms,best_value")?;
    for (i, (best, ms)) in trace.best_values.iter().zip(trace.iter_ms.iter()).enumerate() {
        writeln!(w, "{},{:.4},{:.9e}", i + 1, ms, best)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_al_trace(out: Option<&Path>, trace: &AlTrace<f64>) -> Result<(), CliError> {
    let mut w = writer(out)?;
    writeln!(w, "acquisitions,rmse")?;
    for (count, rmse) in trace.counts.iter().zip(trace.rmse.iter()) {
        writeln!(w, "{},{:.9e}", count, rmse)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_bench(out: Option<&Path>, rows: &[BenchRow<f64>]) -> Result<(), CliError> {
    let mut w = writer(out)?;
    writeln!(w, "step,elapsed_ms,rmse,nll")?;
    for row in rows {
        writeln!(w, "{},{:.4},{:.9e},{:.9e}", row.step, row.elapsed_ms, row.rmse, row.nll)?;
    }
    w.flush()?;
    Ok(())
}
