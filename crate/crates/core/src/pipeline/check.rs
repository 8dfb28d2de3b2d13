//! Composed-model gradient verification: the full per-sample objective
//! (both encoder passes, soft projection, denoiser, and all five terms)
//! checked against central differences.

use crate::config::Config;
use crate::deform::sample_chain;
use crate::geometry::vec3::Point3;
use crate::geometry::{fps, Rng};
use crate::model::gradcheck::{grad_check, GradCheckReport};
use crate::model::loss_graph::{sample_loss_graph, SampleInputs};
use crate::model::{ModelGraph, ParamStore};

use super::synth::make_synthetic_dataset;
use super::train::PipelineError;

/// Builds one deterministic training sample on a `points`-point synthetic
/// shape and verifies the tape gradient of the weighted total against
/// finite differences, subsampling to at most 200 coordinates per tensor.
pub fn composed_gradcheck(
    cfg: &Config,
    tol: f64,
    points: usize,
) -> Result<GradCheckReport, PipelineError> {
    let seed = cfg.train.seed;
    let shape = make_synthetic_dataset(1, points, seed).remove(0);
    let original = shape.cloud.cloud();

    let mut rng = Rng::derive(seed, 0xC11EC, 0);
    let chain = sample_chain(&mut rng, &cfg.deform);
    let deformed = chain.apply(&original);
    let anchors = fps(
        &original,
        cfg.loss.fps_anchor_count.min(original.len()),
        rng.next_u64(),
    )
    .map_err(|e| PipelineError::BadConfig(e.to_string()))?
    .keypoints;
    let sigma = 0.4;
    let noise: Vec<Point3> = (0..original.len())
        .map(|_| [rng.normal(), rng.normal(), rng.normal()])
        .collect();
    let reparam_eps: Vec<f64> = (0..cfg.model.latent_aux).map(|_| rng.normal()).collect();
    // nonzero KL weight so the posterior head is exercised too
    let lambdas = [1.0, 3.0, 1.0, 1.0, 0.5];

    let store = ParamStore::init(&cfg.model, seed);
    // the stop-gradient is off here so the differentiated function matches
    // the evaluated one; the detach contract has its own exact-zero test
    let inputs = SampleInputs {
        original: &original,
        deformed: &deformed,
        chain: &chain,
        anchors: &anchors,
        sigma,
        noise: &noise,
        reparam_eps: &reparam_eps,
        stop_latent: false,
    };

    fn build<'s>(
        s: &'s ParamStore,
        inputs: &SampleInputs,
        weights: &crate::losses::LossWeights,
        lambdas: [f64; 5],
        edm: &crate::edm::EdmConfig,
    ) -> Result<(ModelGraph<'s>, crate::model::tape::NodeId), PipelineError> {
        let mut g = ModelGraph::new(s);
        let nodes = sample_loss_graph(&mut g, inputs, weights, lambdas, edm)?;
        Ok((g, nodes.total))
    }

    let (base_graph, total) = build(&store, &inputs, &cfg.loss, lambdas, &cfg.edm)?;
    let grads = base_graph.tape.backward(total);
    let analytic = base_graph.named_grads(&grads);

    let eval = |s: &ParamStore| {
        let (g, total) = build(s, &inputs, &cfg.loss, lambdas, &cfg.edm).expect("loss graph builds");
        g.tape.value(total).scalar_value()
    };
    grad_check(&store, eval, &analytic, tol, 200, seed).map_err(PipelineError::Model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;

    #[test]
    fn tiny_composed_model_passes() {
        let mut cfg = Config::default();
        cfg.model = ModelConfig::tiny();
        let report = composed_gradcheck(&cfg, 1e-4, 16).unwrap();
        assert!(report.max_rel_error < 1e-4, "{}", report.max_rel_error);
        assert!(report.checked_coords > 500);
    }
}
