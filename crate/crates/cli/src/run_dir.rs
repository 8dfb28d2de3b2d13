//! Run-directory layout: `config.json` (resolved echo), `loss.csv`,
//! `params.bin`, `manifest.json`, and `prior.json`.

use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use kpdiff_core::config::Config;
use kpdiff_core::model::checkpoint::{load_params, save_params};
use kpdiff_core::model::gradcheck::GradCheckReport;
use kpdiff_core::model::{encode, ModelConfig, ParamStore};
use kpdiff_core::pipeline::{
    check, fit_prior, loss_csv, make_synthetic_dataset, train, KeypointPrior,
};

#[derive(Serialize, Deserialize)]
struct Manifest {
    version: u32,
    config_hash: String,
    seed: u64,
    model: ModelConfig,
    tensors: Vec<TensorInfo>,
}

#[derive(Serialize, Deserialize)]
struct TensorInfo {
    name: String,
    rows: usize,
    cols: usize,
}

/// Trains on the synthetic category, fits the keypoint prior, and writes
/// the run directory.
pub fn train_into(cfg: &Config, out: &Path) -> Result<()> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let dataset: Vec<_> = make_synthetic_dataset(cfg.train.shapes, cfg.train.points, cfg.train.seed)
        .into_iter()
        .map(|s| s.cloud.cloud())
        .collect();
    let output = train(&dataset, cfg)?;

    // keypoint prior from the trained encoder over the training set
    let mut keypoint_sets = Vec::with_capacity(dataset.len());
    let mut mean_mu = vec![0.0f64; cfg.model.latent_aux];
    for cloud in &dataset {
        let enc = encode(cloud, &output.params)?;
        for (m, v) in mean_mu.iter_mut().zip(&enc.mu) {
            *m += v;
        }
        keypoint_sets.push(enc.keypoints);
    }
    mean_mu.iter_mut().for_each(|m| *m /= dataset.len() as f64);
    let prior = fit_prior(
        &keypoint_sets,
        mean_mu,
        cfg.metrics.prior_variance,
        cfg.metrics.prior_bandwidth,
    )?;

    fs::write(out.join("config.json"), cfg.to_json())?;
    fs::write(out.join("loss.csv"), loss_csv(&output.epochs))?;
    save_params(&output.params, &out.join("params.bin"))?;
    fs::write(out.join("prior.json"), serde_json::to_string_pretty(&prior)?)?;
    let manifest = Manifest {
        version: 1,
        config_hash: cfg.hash(),
        seed: cfg.train.seed,
        model: cfg.model.clone(),
        tensors: output
            .params
            .iter()
            .map(|(name, t)| TensorInfo {
                name: name.clone(),
                rows: t.rows,
                cols: t.cols,
            })
            .collect(),
    };
    fs::write(
        out.join("manifest.json"),
        serde_json::to_string_pretty(&manifest)?,
    )?;
    Ok(())
}

pub struct LoadedRun {
    pub config: Config,
    pub params: ParamStore,
    pub prior: KeypointPrior,
}

pub fn load(run: &Path) -> Result<LoadedRun> {
    let config_text = fs::read_to_string(run.join("config.json"))
        .with_context(|| format!("reading {}", run.join("config.json").display()))?;
    let config =
        Config::from_json(&config_text).map_err(|e| anyhow::anyhow!("run config invalid: {e}"))?;
    let params = load_params(&run.join("params.bin"), &config.model)
        .with_context(|| "loading params.bin")?;
    let prior_text = fs::read_to_string(run.join("prior.json"))
        .with_context(|| format!("reading {}", run.join("prior.json").display()))?;
    let prior: KeypointPrior = serde_json::from_str(&prior_text).context("parsing prior.json")?;
    Ok(LoadedRun {
        config,
        params,
        prior,
    })
}

pub fn gradcheck(cfg: &Config, tol: f64) -> Result<GradCheckReport> {
    match check::composed_gradcheck(cfg, tol, 32) {
        Ok(report) => Ok(report),
        // a failed check still prints a report (pass=false) with the error
        // details on stderr handled by the caller
        Err(kpdiff_core::pipeline::PipelineError::Model(
            kpdiff_core::model::ModelError::GradMismatch { max_rel_error, worst },
        )) => {
            eprintln!("gradient mismatches: {worst:?}");
            Ok(GradCheckReport {
                max_rel_error,
                checked_coords: 0,
                worst: Vec::new(),
            })
        }
        Err(e) => Err(e.into()),
    }
}
