//! Seeded end-to-end training loop.
//!
//! Per optimizer step: every batch sample gets a derived RNG, a sampled
//! deformation pair, a curriculum noise draw, and its own tape; samples run
//! in parallel and their gradients are accumulated in index order, so runs
//! are bit-reproducible from `(seed, config)` at any thread count.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::config::Config;
use crate::deform::sample_chain;
use crate::edm::{curriculum_params, sample_sigma};
use crate::geometry::vec3::Point3;
use crate::geometry::{fps, KeypointSet, PointCloud, Rng};
use crate::losses::{effective_lambdas, LossBreakdown, LossTerms, LossWeights};
use crate::model::loss_graph::{sample_loss_graph, SampleInputs, SampleLossNodes};
use crate::model::{ModelError, ModelGraph, ParamStore, Tensor};
use crate::parallel;

use super::adam::Adam;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("invalid configuration: {0}")]
    BadConfig(String),
    #[error("non-finite loss at optimizer step {step}: {diagnostic}")]
    NonFiniteLoss { step: usize, diagnostic: String },
    #[error("prior needs at least 2 keypoint sets, got {n}")]
    TooFewSamples { n: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Trained weights plus the per-epoch mean loss breakdown.
pub struct TrainOutput {
    pub params: ParamStore,
    pub epochs: Vec<LossBreakdown>,
}

struct SampleResult {
    terms: LossTerms,
    total: f64,
    grads: BTreeMap<String, Tensor>,
}

/// Per-shape FPS anchors, computed once; anchor seeds derive from the run
/// seed and the shape index.
fn anchor_sets(
    dataset: &[PointCloud],
    count: usize,
    seed: u64,
) -> Result<Vec<KeypointSet>, PipelineError> {
    dataset
        .iter()
        .enumerate()
        .map(|(i, pc)| {
            let anchor_seed = Rng::derive(seed, i as u64, 0xA1C).next_u64();
            fps(pc, count.min(pc.len()), anchor_seed)
                .map(|r| r.keypoints)
                .map_err(|e| PipelineError::BadConfig(e.to_string()))
        })
        .collect()
}

fn run_sample(
    store: &ParamStore,
    original: &PointCloud,
    anchors: &KeypointSet,
    weights: &LossWeights,
    lambdas: [f64; 5],
    cfg: &Config,
    mu_n: f64,
    sigma_n: f64,
    sample_seed: u64,
) -> Result<SampleResult, ModelError> {
    let mut rng = Rng::seed_from_u64(sample_seed);
    let chain = sample_chain(&mut rng, &cfg.deform);
    let deformed = chain.apply(original);
    let sigma = sample_sigma(&mut rng, mu_n, sigma_n, cfg.edm.sigma_min, cfg.edm.sigma_max);
    let noise: Vec<Point3> = (0..original.len())
        .map(|_| [rng.normal(), rng.normal(), rng.normal()])
        .collect();
    let reparam_eps: Vec<f64> = (0..cfg.model.latent_aux).map(|_| rng.normal()).collect();

    let mut g = ModelGraph::new(store);
    let nodes: SampleLossNodes = sample_loss_graph(
        &mut g,
        &SampleInputs {
            original,
            deformed: &deformed,
            chain: &chain,
            anchors,
            sigma,
            noise: &noise,
            reparam_eps: &reparam_eps,
            stop_latent: true,
        },
        weights,
        lambdas,
        &cfg.edm,
    )?;
    let grads = g.tape.backward(nodes.total);
    let named = g.named_grads(&grads);
    Ok(SampleResult {
        terms: LossTerms {
            fps: g.tape.value(nodes.fps).scalar_value(),
            diff: g.tape.value(nodes.diff).scalar_value(),
            chamfer: g.tape.value(nodes.chamfer).scalar_value(),
            mse: g.tape.value(nodes.mse).scalar_value(),
            kl: g.tape.value(nodes.kl).scalar_value(),
        },
        total: g.tape.value(nodes.total).scalar_value(),
        grads: named,
    })
}

/// Trains on normalized clouds. Returns the final parameters and one mean
/// breakdown per epoch.
pub fn train(dataset: &[PointCloud], cfg: &Config) -> Result<TrainOutput, PipelineError> {
    if dataset.is_empty() {
        return Err(PipelineError::EmptyDataset);
    }
    cfg.validate().map_err(PipelineError::BadConfig)?;
    let seed = cfg.train.seed;
    let total_epochs = cfg.train.epochs;
    let batch = cfg.train.batch_size.min(dataset.len());
    let micro = (batch / cfg.train.accum_steps).max(1);

    let anchors = anchor_sets(dataset, cfg.loss.fps_anchor_count, seed)?;
    let mut store = ParamStore::init(&cfg.model, seed);
    let mut adam = Adam::new(cfg.train.learning_rate, &store);

    let steps_per_epoch = (dataset.len() / batch).max(1);
    let mut epoch_logs = Vec::with_capacity(total_epochs);
    let mut global_step = 0usize;

    for epoch in 0..total_epochs {
        let (mu_n, sigma_n) = curriculum_params(epoch, total_epochs, &cfg.edm);
        let mut order: Vec<usize> = (0..dataset.len()).collect();
        Rng::derive(seed, 0xE70C, epoch as u64).shuffle(&mut order);

        let mut epoch_terms = LossTerms::default();
        let mut epoch_total = 0.0;
        let mut epoch_lambdas = [0.0; 5];

        for step in 0..steps_per_epoch {
            let lambdas = effective_lambdas(&cfg.loss, global_step, epoch, total_epochs);
            epoch_lambdas = lambdas;
            let batch_ids = &order[step * batch..(step + 1) * batch];

            let mut accum = store.zeros_like();
            let mut step_terms = LossTerms::default();
            let mut step_total = 0.0;
            for chunk in batch_ids.chunks(micro) {
                let results = parallel::map_slice(chunk, |&shape_idx| {
                    let sample_seed = Rng::derive(
                        seed,
                        global_step as u64,
                        shape_idx as u64 ^ 0x5A11,
                    )
                    .next_u64();
                    run_sample(
                        &store,
                        &dataset[shape_idx],
                        &anchors[shape_idx],
                        &cfg.loss,
                        lambdas,
                        cfg,
                        mu_n,
                        sigma_n,
                        sample_seed,
                    )
                });
                for result in results {
                    let r = result?;
                    for (name, g) in &r.grads {
                        accum.get_mut(name).expect("known tensor").add_assign(g);
                    }
                    step_terms.fps += r.terms.fps;
                    step_terms.diff += r.terms.diff;
                    step_terms.chamfer += r.terms.chamfer;
                    step_terms.mse += r.terms.mse;
                    step_terms.kl += r.terms.kl;
                    step_total += r.total;
                }
            }
            let inv = 1.0 / batch as f64;
            for g in accum.values_mut() {
                g.scale_assign(inv);
            }
            step_total *= inv;
            if !step_total.is_finite() {
                return Err(PipelineError::NonFiniteLoss {
                    step: global_step,
                    diagnostic: format!(
                        "fps {} diff {} chamfer {} mse {} kl {}",
                        step_terms.fps,
                        step_terms.diff,
                        step_terms.chamfer,
                        step_terms.mse,
                        step_terms.kl
                    ),
                });
            }
            adam.step(&mut store, &accum);

            epoch_terms.fps += step_terms.fps * inv;
            epoch_terms.diff += step_terms.diff * inv;
            epoch_terms.chamfer += step_terms.chamfer * inv;
            epoch_terms.mse += step_terms.mse * inv;
            epoch_terms.kl += step_terms.kl * inv;
            epoch_total += step_total;
            global_step += 1;
        }

        let inv_steps = 1.0 / steps_per_epoch as f64;
        epoch_logs.push(LossBreakdown {
            fps: epoch_terms.fps * inv_steps,
            diff: epoch_terms.diff * inv_steps,
            chamfer: epoch_terms.chamfer * inv_steps,
            mse: epoch_terms.mse * inv_steps,
            kl: epoch_terms.kl * inv_steps,
            lambdas: epoch_lambdas,
            total: epoch_total * inv_steps,
        });
    }

    Ok(TrainOutput {
        params: store,
        epochs: epoch_logs,
    })
}

/// Loss CSV rendering shared by the CLI and tests; fixed 12-significant-
/// digit floats keep the file byte-stable across runs.
pub fn loss_csv(epochs: &[LossBreakdown]) -> String {
    let mut out = String::from("epoch,fps,diff,chamfer,mse,kl,total\n");
    for (e, b) in epochs.iter().enumerate() {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            e,
            fmt_sig12(b.fps),
            fmt_sig12(b.diff),
            fmt_sig12(b.chamfer),
            fmt_sig12(b.mse),
            fmt_sig12(b.kl),
            fmt_sig12(b.total),
        ));
    }
    out
}

/// Fixed 12-significant-digit scientific rendering.
pub fn fmt_sig12(x: f64) -> String {
    if x == 0.0 {
        return "0.0".to_string();
    }
    if !x.is_finite() {
        return "null".to_string();
    }
    format!("{x:.11e}")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::synth::make_synthetic_dataset;

    fn tiny_config() -> Config {
        let mut cfg = Config::default();
        cfg.model = crate::model::ModelConfig::tiny();
        cfg.train.epochs = 2;
        cfg.train.batch_size = 4;
        cfg.train.accum_steps = 2;
        cfg.train.shapes = 8;
        cfg.train.points = 48;
        cfg
    }

    fn tiny_dataset(cfg: &Config) -> Vec<PointCloud> {
        make_synthetic_dataset(cfg.train.shapes, cfg.train.points, 3)
            .into_iter()
            .map(|s| s.cloud.cloud())
            .collect()
    }

    #[test]
    fn zero_learning_rate_keeps_parameters_bit_exact() {
        let mut cfg = tiny_config();
        cfg.train.learning_rate = 0.0;
        cfg.train.epochs = 1;
        let dataset = tiny_dataset(&cfg);
        let out = train(&dataset, &cfg).unwrap();
        let fresh = ParamStore::init(&cfg.model, cfg.train.seed);
        for (name, t) in out.params.iter() {
            for (a, b) in t.data.iter().zip(&fresh.get(name).data) {
                assert_eq!(a.to_bits(), b.to_bits(), "{name}");
            }
        }
    }

    #[test]
    fn same_seed_identical_loss_logs() {
        let cfg = tiny_config();
        let dataset = tiny_dataset(&cfg);
        let a = train(&dataset, &cfg).unwrap();
        let b = train(&dataset, &cfg).unwrap();
        assert_eq!(loss_csv(&a.epochs), loss_csv(&b.epochs));
    }

    #[test]
    fn loss_decreases_on_tiny_run() {
        let mut cfg = tiny_config();
        cfg.train.epochs = 6;
        let dataset = tiny_dataset(&cfg);
        let out = train(&dataset, &cfg).unwrap();
        let first = out.epochs.first().unwrap().total;
        let last = out.epochs.last().unwrap().total;
        assert!(last < first, "first {first} last {last}");
    }

    #[test]
    fn gradient_accumulation_grouping_matches_single_batch() {
        // mean gradient over 12 samples equals the mean of 4 micro-batch
        // means of 3, up to summation reassociation
        let cfg = tiny_config();
        let dataset = tiny_dataset(&cfg);
        let store = ParamStore::init(&cfg.model, 0);
        let anchors = anchor_sets(&dataset, cfg.loss.fps_anchor_count, 0).unwrap();
        let lambdas = [1.0, 3.0, 1.0, 1.0, 0.5];
        let ids: Vec<usize> = (0..12).map(|i| i % dataset.len()).collect();
        let run = |idx: usize| {
            run_sample(
                &store,
                &dataset[ids[idx]],
                &anchors[ids[idx]],
                &cfg.loss,
                lambdas,
                &cfg,
                -1.2,
                0.8,
                1000 + idx as u64,
            )
            .unwrap()
        };

        // single pass over all 12
        let mut whole = store.zeros_like();
        for i in 0..12 {
            let r = run(i);
            for (name, g) in &r.grads {
                whole.get_mut(name).unwrap().add_assign(g);
            }
        }
        for g in whole.values_mut() {
            g.scale_assign(1.0 / 12.0);
        }

        // four accumulated micro-batches of 3
        let mut grouped = store.zeros_like();
        for chunk in 0..4 {
            let mut micro = store.zeros_like();
            for i in 0..3 {
                let r = run(chunk * 3 + i);
                for (name, g) in &r.grads {
                    micro.get_mut(name).unwrap().add_assign(g);
                }
            }
            for g in micro.values_mut() {
                g.scale_assign(1.0 / 3.0);
            }
            for (name, g) in &micro {
                grouped.get_mut(name).unwrap().add_assign(g);
            }
        }
        for g in grouped.values_mut() {
            g.scale_assign(1.0 / 4.0);
        }

        for (name, a) in &whole {
            let b = &grouped[name];
            for (x, y) in a.data.iter().zip(&b.data) {
                assert!((x - y).abs() <= 1e-10 * x.abs().max(1.0), "{name}");
            }
        }
    }
}
