//! CSV output of convergence curves and run summaries.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::trainer::{CrossValidation, EpochRecord, RunSummary};

/// `x` with 10 significant digits in plain decimal notation.
pub fn sig10(x: f64) -> String {
    if !x.is_finite() {
        return format!("{x}");
    }
    if x == 0.0 {
        return "0".to_string();
    }
    let magnitude = x.abs().log10().floor() as i32;
    if !(-30..=30).contains(&magnitude) {
        return format!("{x:.9e}");
    }
    let decimals = (9 - magnitude).max(0) as usize;
    let s = format!("{x:.decimals$}");
    // rounding can carry into a new leading digit (9.99999999999 -> 10.000000000)
    let rounded: f64 = s.parse().unwrap_or(x);
    if decimals > 0 && rounded.abs().log10().floor() as i32 > magnitude {
        let decimals = decimals - 1;
        return format!("{x:.decimals$}");
    }
    s
}

pub const CURVE_HEADER: &str = "epoch,train_rmse,valid_rmse,seconds";
pub const SUMMARY_HEADER: &str =
    "optimizer,best_valid_rmse,best_epoch,test_rmse,epochs,total_seconds,termination";

pub fn write_curve<W: Write>(mut out: W, records: &[EpochRecord]) -> std::io::Result<()> {
    let with_fitness = records.iter().any(|r| r.best_fitness.is_some());
    if with_fitness {
        writeln!(out, "{CURVE_HEADER},best_fitness")?;
    } else {
        writeln!(out, "{CURVE_HEADER}")?;
    }
    for r in records {
        write!(
            out,
            "{},{},{},{}",
            r.epoch,
            sig10(r.train_rmse),
            sig10(r.valid_rmse),
            sig10(r.seconds)
        )?;
        if with_fitness {
            write!(out, ",{}", r.best_fitness.map(sig10).unwrap_or_default())?;
        }
        writeln!(out)?;
    }
    Ok(())
}

pub fn write_summary<'a, W, I>(mut out: W, summaries: I) -> std::io::Result<()>
where
    W: Write,
    I: IntoIterator<Item = &'a RunSummary>,
{
    writeln!(out, "{SUMMARY_HEADER}")?;
    for s in summaries {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            s.optimizer,
            sig10(s.best_valid_rmse),
            s.best_epoch,
            sig10(s.test_rmse),
            s.epochs,
            sig10(s.total_seconds),
            s.termination
        )?;
    }
    Ok(())
}

/// Writes `curve.csv` and a one-row `summary.csv` into `out_dir`.
pub fn emit_csv(
    records: &[EpochRecord],
    summary: &RunSummary,
    out_dir: &Path,
) -> std::io::Result<()> {
    fs::create_dir_all(out_dir)?;
    write_curve(fs::File::create(out_dir.join("curve.csv"))?, records)?;
    write_summary(fs::File::create(out_dir.join("summary.csv"))?, [summary])?;
    Ok(())
}

pub const AGGREGATE_HEADER: &str = "optimizer,splits,completed,valid_rmse_mean,valid_rmse_std,test_rmse_mean,test_rmse_std,seconds_mean,seconds_std";

pub fn write_aggregate<W: Write>(mut out: W, cv: &CrossValidation) -> std::io::Result<()> {
    writeln!(out, "{AGGREGATE_HEADER}")?;
    writeln!(
        out,
        "{},{},{},{},{},{},{},{},{}",
        cv.optimizer,
        cv.folds.len(),
        cv.completed(),
        sig10(cv.best_valid_rmse.mean),
        sig10(cv.best_valid_rmse.std),
        sig10(cv.test_rmse.mean),
        sig10(cv.test_rmse.std),
        sig10(cv.seconds.mean),
        sig10(cv.seconds.std)
    )
}
