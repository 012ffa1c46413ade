//! The fixed optimizer comparison run by `npalf bench`.

use std::fs::{self, File};
use std::path::Path;

use crate::config::{OptimizerTag, RunConfig};
use crate::data::{DataSplit, HdiDataset};
use crate::error::TrainError;
use crate::report::{write_curve, write_summary};
use crate::trainer::{train_split_with, RunSummary};

/// Trains every optimizer in [`OptimizerTag::BENCH`] on the same split, with
/// the same seed and initial factors. Writes `<out>/<tag>/curve.csv` per
/// optimizer and one `<out>/summary.csv`.
///
/// A diverged optimizer still gets a curve and a summary row.
pub fn bench(
    config: &RunConfig,
    dataset: &HdiDataset,
    split: &DataSplit,
    out_dir: &Path,
) -> Result<Vec<RunSummary>, TrainError> {
    fs::create_dir_all(out_dir)?;
    let mut summaries = Vec::with_capacity(OptimizerTag::BENCH.len());
    for tag in OptimizerTag::BENCH {
        let kind = config.kind_for(tag)?;
        let run = train_split_with(config, &kind, dataset, split)?;
        let dir = out_dir.join(tag.as_str());
        fs::create_dir_all(&dir)?;
        write_curve(File::create(dir.join("curve.csv"))?, &run.records)?;
        summaries.push(run.summary);
    }
    write_summary(File::create(out_dir.join("summary.csv"))?, &summaries)?;
    Ok(summaries)
}
