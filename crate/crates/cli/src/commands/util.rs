use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use airgrad_core::grid::DatasetSplit;
use airgrad_core::health::{load_demography, DemographyTable};
use airgrad_core::model::ResCnn;
use airgrad_core::train::{evaluate, predict_subset, EvalMetrics, SampleSet};
use airgrad_core::{CoreError, Result};

use crate::manifest::Manifest;

/// Writes one artifact into the run directory and records it.
pub fn write_artifact(
    out_dir: &Path,
    name: &str,
    text: &str,
    manifest: &mut Manifest,
) -> Result<()> {
    std::fs::create_dir_all(out_dir).map_err(|e| CoreError::io(out_dir, e))?;
    let path = out_dir.join(name);
    std::fs::write(&path, text).map_err(|e| CoreError::io(&path, e))?;
    manifest.output(name);
    Ok(())
}

/// Loads the demography table named by flag or config and hashes it.
pub fn load_demography_input(
    flag: Option<&PathBuf>,
    config: Option<&PathBuf>,
    manifest: &mut Manifest,
) -> Result<DemographyTable> {
    let path = crate::config::require_path(flag, config, "mortality table", "mortality")?;
    manifest.input_file(&path)?;
    load_demography(&path)
}

/// Five-metric evaluation on each split subset, in train/val/test order.
pub fn split_metrics(
    model: &mut ResCnn,
    samples: &SampleSet,
    split: &DatasetSplit,
    weights: &[f64],
) -> Result<Vec<(&'static str, EvalMetrics)>> {
    let mut rows = Vec::with_capacity(3);
    for (name, idx) in [
        ("train", &split.train),
        ("val", &split.val),
        ("test", &split.test),
    ] {
        let preds = predict_subset(model, samples, idx)?;
        let targets: Vec<f64> = idx.iter().map(|i| samples.targets[*i]).collect();
        let w: Vec<f64> = idx.iter().map(|i| weights[*i]).collect();
        rows.push((name, evaluate(&targets, &preds, &w)?));
    }
    Ok(rows)
}

pub fn metrics_csv(rows: &[(&str, EvalMetrics)]) -> String {
    let mut out =
        String::from("split,n_used,n_excluded,mfb,mfe,mpe,pearson,r2,r2_correlation\n");
    for (name, m) in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            name, m.n_used, m.n_excluded, m.mfb, m.mfe, m.mpe, m.pearson, m.r2, m.r2_correlation
        );
    }
    out
}

/// The split comparison table printed by `train` and `evaluate`.
pub fn print_metrics(rows: &[(&str, EvalMetrics)]) {
    println!(
        "{:<6} {:>5}  {:>9} {:>9} {:>9} {:>9} {:>9}",
        "split", "n", "MFB", "MFE", "MPE", "pearson", "R2"
    );
    for (name, m) in rows {
        println!(
            "{:<6} {:>5}  {:>9.4} {:>9.4} {:>9.4} {:>9.4} {:>9.4}",
            name, m.n_used, m.mfb, m.mfe, m.mpe, m.pearson, m.r2
        );
    }
}
