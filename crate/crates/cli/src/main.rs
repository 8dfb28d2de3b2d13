//! `kpdiff`: command-line front end for the keypoint-diffusion pipeline.
//!
//! Metric commands print one JSON object on stdout; generative commands
//! write files under `--out` and print a small JSON receipt. Every command
//! echoes the resolved config hash. Exit codes: 0 success, 1 runtime error
//! (diagnostic JSON on stderr), 2 usage error.

mod files;
mod jsonout;
mod run_dir;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use kpdiff_core::config::Config;
use kpdiff_core::deform::sample_chain;
use kpdiff_core::edm::{curriculum_params, sigma_ladder};
use kpdiff_core::geometry::{fps, write_ply, write_xyz, KeypointSet, Rng};
use kpdiff_core::losses::{self, effective_lambdas, LossTerms};
use kpdiff_core::metrics::{
    chamfer_symmetric, das_mean_over_pairs, emd, keypoint_correlation, mmd_cd, CorrelationInputs,
    DasShape,
};
use kpdiff_core::model::encode;
use kpdiff_core::pipeline::{fmt_sig12, interpolate, make_synthetic_dataset};

use jsonout::{render, Val};

#[derive(Parser)]
#[command(name = "kpdiff", version, about = "Unsupervised 3D keypoint discovery with a diffusion decoder")]
struct Cli {
    /// JSON configuration file; omitted fields take documented defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output file or directory, per command.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Caps the worker thread count (falls back to KPDIFF_THREADS).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Apply a seeded deformation chain to a cloud.
    Deform {
        #[arg(long = "in")]
        input: PathBuf,
        /// Where to dump the sampled chain (kind, params, matrix) as JSON.
        #[arg(long)]
        chain_json: Option<PathBuf>,
    },
    /// Farthest point sampling.
    Fps {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        k: usize,
    },
    /// Evaluation metrics.
    Metrics {
        #[command(subcommand)]
        metric: MetricCmd,
    },
    /// Emit the per-epoch curriculum parameters and the sigma ladder as CSV.
    ScheduleDump {
        #[arg(long)]
        epochs: usize,
    },
    /// Train on the synthetic category and write a run directory.
    Train,
    /// Generate shapes from a trained run directory.
    Sample {
        #[arg(long)]
        run: PathBuf,
        /// Defaults to the training-set size (matching reference counts).
        #[arg(long)]
        count: Option<usize>,
        #[arg(long)]
        points: Option<usize>,
    },
    /// Decode a linear keypoint interpolation between two shapes.
    Interpolate {
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        #[arg(long, default_value_t = 5)]
        steps: usize,
    },
    /// Finite-difference check of the full composed loss gradient.
    Gradcheck {
        #[arg(long, default_value_t = 1e-4)]
        tol: f64,
    },
    /// Write a synthetic labeled dataset with annotations.
    Synth {
        #[arg(long, default_value_t = 20)]
        count: usize,
        #[arg(long, default_value_t = 256)]
        points: usize,
    },
}

#[derive(Subcommand)]
enum MetricCmd {
    /// Symmetric Chamfer distance between two clouds.
    Cd {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
    },
    /// Exact earth mover's distance between equal-size clouds.
    Emd {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
    },
    /// Mean DAS over ordered pairs of shapes.
    Das {
        /// Directory of per-shape predicted keypoint files (<id>.xyz).
        #[arg(long)]
        keypoints_dir: PathBuf,
        /// Annotations JSON ({shape_id: [{xyz, label}]}).
        #[arg(long)]
        anno: PathBuf,
        /// Relaxed distance window; defaults to the configured value.
        #[arg(long)]
        window: Option<f64>,
    },
    /// Keypoint-part correlation over labeled clouds.
    Corr {
        #[arg(long)]
        keypoints_dir: PathBuf,
        /// Directory of labeled clouds (<id>.xyz with a 4th column).
        #[arg(long)]
        clouds_dir: PathBuf,
        #[arg(long)]
        tau: Option<f64>,
    },
    /// Minimum matching distance between generated and reference sets.
    Mmd {
        #[arg(long)]
        gen_dir: PathBuf,
        #[arg(long)]
        ref_dir: PathBuf,
    },
    /// Reconstruction-side loss breakdown for a prediction/target pair.
    Loss {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        target: PathBuf,
        /// Noise level entering w(sigma) and the repulsion attenuation.
        #[arg(long, default_value_t = 0.0)]
        sigma: f64,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!(
                "{}",
                render(&[
                    ("error", Val::S(format!("{err:#}"))),
                ])
            );
            ExitCode::FAILURE
        }
    }
}


/// Writes one line to stdout, exiting quietly when the consumer (e.g. a
/// `head` pipe) has gone away.
fn print_line(line: &str) {
    use std::io::Write;
    let mut out = std::io::stdout().lock();
    if writeln!(out, "{line}").is_err() {
        std::process::exit(0);
    }
}

fn load_config(cli: &Cli) -> Result<Config> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .with_context(|| format!("reading config {}", path.display()))?;
            Config::from_json(&text).map_err(|e| anyhow::anyhow!("invalid config: {e}"))?
        }
        None => Config::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.train.seed = seed;
    }
    Ok(cfg)
}

fn init_threads(cli: &Cli) {
    let threads = cli.threads.or_else(|| {
        std::env::var("KPDIFF_THREADS")
            .ok()
            .and_then(|v| v.parse().ok())
    });
    if let Some(n) = threads {
        // fails when a pool already exists, which only happens in-process
        let _ = kpdiff_core::parallel::set_thread_cap(n.max(1));
    }
}

fn require_out(cli: &Cli) -> Result<PathBuf> {
    cli.out
        .clone()
        .context("this command needs --out")
}

fn run(cli: Cli) -> Result<()> {
    init_threads(&cli);
    let cfg = load_config(&cli)?;
    let hash = cfg.hash();

    match &cli.command {
        Command::Deform { input, chain_json } => {
            let out = require_out(&cli)?;
            let pc = files::read_plain_cloud(input)?;
            let mut rng = Rng::seed_from_u64(cfg.train.seed);
            let chain = sample_chain(&mut rng, &cfg.deform);
            let deformed = chain.apply(&pc);
            write_cloud(&out, &deformed.points, None)?;
            if let Some(path) = chain_json {
                let matrix = chain.resolve(&pc);
                let dump = serde_json::json!({
                    "config_hash": hash,
                    "seed": cfg.train.seed,
                    "chain": chain,
                    "matrix": matrix,
                });
                fs::write(path, serde_json::to_string_pretty(&dump)?)?;
            }
            print_line(
                &render(&[
                    ("out", Val::S(out.display().to_string())),
                    ("points", Val::U(deformed.len() as u64)),
                    ("config_hash", Val::S(hash)),
                ])
            );
        }
        Command::Fps { input, k } => {
            let pc = files::read_plain_cloud(input)?;
            let result = fps(&pc, *k, cfg.train.seed)?;
            if let Some(out) = &cli.out {
                write_cloud(out, &result.keypoints.keypoints, None)?;
            }
            print_line(
                &render(&[
                    ("k", Val::U(*k as u64)),
                    ("indices", Val::ListU(result.indices.clone())),
                    ("config_hash", Val::S(hash)),
                ])
            );
        }
        Command::Metrics { metric } => run_metric(metric, &cfg, &hash)?,
        Command::ScheduleDump { epochs } => {
            print_line(&format!("# config_hash={hash}"));
            print_line("kind,index,value_a,value_b");
            for e in 0..*epochs {
                let (mu, sigma_n) = curriculum_params(e, *epochs, &cfg.edm);
                print_line(&format!(
                    "curriculum,{e},{},{}",
                    fmt_sig12(mu),
                    fmt_sig12(sigma_n)
                ));
            }
            for (i, sigma) in sigma_ladder(&cfg.edm).iter().enumerate() {
                print_line(&format!("ladder,{i},{},", fmt_sig12(*sigma)));
            }
        }
        Command::Train => {
            let out = require_out(&cli)?;
            run_dir::train_into(&cfg, &out)?;
            print_line(
                &render(&[
                    ("out", Val::S(out.display().to_string())),
                    ("epochs", Val::U(cfg.train.epochs as u64)),
                    ("config_hash", Val::S(hash)),
                ])
            );
        }
        Command::Sample { run, count, points } => {
            let out = require_out(&cli)?;
            let loaded = run_dir::load(run)?;
            let count = count.unwrap_or(loaded.config.train.shapes);
            let points = points.unwrap_or(loaded.config.train.points);
            let shapes = kpdiff_core::pipeline::generate(
                &loaded.prior,
                &loaded.params,
                points,
                count,
                &loaded.config.edm,
                cfg.train.seed,
            );
            fs::create_dir_all(&out)?;
            for (i, shape) in shapes.iter().enumerate() {
                let path = out.join(format!("gen_{i:04}.ply"));
                fs::write(&path, write_ply(shape, None))?;
            }
            print_line(
                &render(&[
                    ("count", Val::U(count as u64)),
                    ("points", Val::U(points as u64)),
                    ("out", Val::S(out.display().to_string())),
                    ("config_hash", Val::S(hash)),
                ])
            );
        }
        Command::Interpolate { run, a, b, steps } => {
            let out = require_out(&cli)?;
            let loaded = run_dir::load(run)?;
            let cloud_a = files::read_plain_cloud(a)?.normalize()?.0;
            let cloud_b = files::read_plain_cloud(b)?.normalize()?.0;
            let enc_a = encode(&cloud_a, &loaded.params)?;
            let enc_b = encode(&cloud_b, &loaded.params)?;
            // shared auxiliary latent isolates the keypoint effect
            let z_aux: Vec<f64> = enc_a
                .mu
                .iter()
                .zip(&enc_b.mu)
                .map(|(x, y)| 0.5 * (x + y))
                .collect();
            let shapes = interpolate(
                &enc_a.keypoints,
                &enc_b.keypoints,
                &z_aux,
                *steps,
                &loaded.params,
                loaded.config.train.points,
                &loaded.config.edm,
                cfg.train.seed,
            )?;
            fs::create_dir_all(&out)?;
            for (i, shape) in shapes.iter().enumerate() {
                fs::write(out.join(format!("interp_{i:03}.ply")), write_ply(shape, None))?;
            }
            print_line(
                &render(&[
                    ("steps", Val::U(*steps as u64)),
                    ("out", Val::S(out.display().to_string())),
                    ("config_hash", Val::S(hash)),
                ])
            );
        }
        Command::Gradcheck { tol } => {
            let report = run_dir::gradcheck(&cfg, *tol)?;
            print_line(
                &render(&[
                    ("max_rel_error", Val::F(report.max_rel_error)),
                    ("checked_coords", Val::U(report.checked_coords as u64)),
                    ("tol", Val::F(*tol)),
                    ("pass", Val::U(u64::from(report.max_rel_error <= *tol))),
                    ("config_hash", Val::S(hash)),
                ])
            );
        }
        Command::Synth { count, points } => {
            let out = require_out(&cli)?;
            fs::create_dir_all(&out)?;
            let dataset = make_synthetic_dataset(*count, *points, cfg.train.seed);
            let mut annotations = BTreeMap::new();
            for (i, shape) in dataset.iter().enumerate() {
                let id = format!("shape_{i:04}");
                let cloud = shape.cloud.cloud();
                fs::write(
                    out.join(format!("{id}.xyz")),
                    write_xyz(&cloud, Some(&shape.cloud.labels)),
                )?;
                annotations.insert(id, shape.annotations.clone());
            }
            files::write_annotations(&out.join("annotations.json"), &annotations)?;
            print_line(
                &render(&[
                    ("count", Val::U(*count as u64)),
                    ("points", Val::U(*points as u64)),
                    ("out", Val::S(out.display().to_string())),
                    ("config_hash", Val::S(hash)),
                ])
            );
        }
    }
    Ok(())
}

fn write_cloud(path: &Path, points: &[[f64; 3]], labels: Option<&[usize]>) -> Result<()> {
    let pc = kpdiff_core::geometry::PointCloud {
        points: points.to_vec(),
    };
    let text = match files::format_of(path)? {
        kpdiff_core::geometry::CloudFormat::XyzText => write_xyz(&pc, labels),
        kpdiff_core::geometry::CloudFormat::PlyAscii => write_ply(&pc, labels),
    };
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn run_metric(metric: &MetricCmd, cfg: &Config, hash: &str) -> Result<()> {
    match metric {
        MetricCmd::Cd { a, b } => {
            let ca = files::read_plain_cloud(a)?;
            let cb = files::read_plain_cloud(b)?;
            let cd = chamfer_symmetric(&ca, &cb)?;
            print_line(
                &render(&[("cd", Val::F(cd)), ("config_hash", Val::S(hash.into()))])
            );
        }
        MetricCmd::Emd { a, b } => {
            let ca = files::read_plain_cloud(a)?;
            let cb = files::read_plain_cloud(b)?;
            let value = emd(&ca, &cb)?;
            print_line(
                &render(&[("emd", Val::F(value)), ("config_hash", Val::S(hash.into()))])
            );
        }
        MetricCmd::Das {
            keypoints_dir,
            anno,
            window,
        } => {
            let annotations = files::read_annotations(anno)?;
            let mut shapes = Vec::new();
            for (stem, path) in files::cloud_files(keypoints_dir)? {
                let Some(annos) = annotations.get(&stem) else {
                    bail!("no annotations for shape {stem:?}");
                };
                shapes.push(DasShape {
                    predicted: files::read_keypoints(&path)?,
                    annotations: annos.clone(),
                });
            }
            let w = window.unwrap_or(cfg.metrics.das_window);
            let value = das_mean_over_pairs(&shapes, w)?;
            print_line(
                &render(&[
                    ("das", Val::F(value)),
                    ("window", Val::F(w)),
                    ("shapes", Val::U(shapes.len() as u64)),
                    ("config_hash", Val::S(hash.into())),
                ])
            );
        }
        MetricCmd::Corr {
            keypoints_dir,
            clouds_dir,
            tau,
        } => {
            let kp_files = files::cloud_files(keypoints_dir)?;
            let mut keypoint_sets = Vec::new();
            let mut clouds = Vec::new();
            for (stem, path) in &kp_files {
                let cloud_path = ["xyz", "ply"]
                    .iter()
                    .map(|ext| clouds_dir.join(format!("{stem}.{ext}")))
                    .find(|p| p.exists())
                    .with_context(|| format!("no cloud for shape {stem:?} in {}", clouds_dir.display()))?;
                keypoint_sets.push(files::read_keypoints(path)?);
                clouds.push(files::read_labeled_cloud(&cloud_path)?);
            }
            let t = tau.unwrap_or(cfg.metrics.correlation_tau);
            let value = keypoint_correlation(&CorrelationInputs {
                keypoint_sets: &keypoint_sets,
                clouds: &clouds,
                threshold: t,
            })?;
            print_line(
                &render(&[
                    ("correlation", Val::F(value)),
                    ("tau", Val::F(t)),
                    ("samples", Val::U(keypoint_sets.len() as u64)),
                    ("config_hash", Val::S(hash.into())),
                ])
            );
        }
        MetricCmd::Mmd { gen_dir, ref_dir } => {
            let generated: Vec<_> = files::cloud_files(gen_dir)?
                .iter()
                .map(|(_, p)| files::read_plain_cloud(p))
                .collect::<Result<_>>()?;
            let reference: Vec<_> = files::cloud_files(ref_dir)?
                .iter()
                .map(|(_, p)| files::read_plain_cloud(p))
                .collect::<Result<_>>()?;
            let value = mmd_cd(&generated, &reference)?;
            print_line(
                &render(&[
                    ("mmd_cd", Val::F(value)),
                    ("generated", Val::U(generated.len() as u64)),
                    ("reference", Val::U(reference.len() as u64)),
                    ("config_hash", Val::S(hash.into())),
                ])
            );
        }
        MetricCmd::Loss {
            pred,
            target,
            sigma,
        } => {
            let pred = files::read_plain_cloud(pred)?;
            let target = files::read_plain_cloud(target)?;
            let w = &cfg.loss;
            // reconstruction-side terms; the deformation and KL terms need
            // a training context and report zero here
            let anchors = fps(
                &target,
                w.fps_anchor_count.min(target.len()),
                cfg.train.seed,
            )?
            .keypoints;
            let pred_kp = KeypointSet {
                keypoints: pred.points.clone(),
            };
            let terms = LossTerms {
                fps: losses::fps_anchor_loss(&pred_kp, &anchors, w.fps_direction)?,
                diff: kpdiff_core::edm::loss_weight(*sigma, cfg.edm.sigma_data)
                    * losses::chamfer_asym(&pred, &target, w.alpha, w.beta)?
                    + w.rho
                        * losses::gamma_weight(*sigma, cfg.edm.sigma_data)
                        * losses::repulsion(&pred, w.k_nn.min(pred.len() - 1).max(1), w.margin)?,
                chamfer: losses::chamfer_oneway(&pred, &target)?,
                mse: 0.0,
                kl: 0.0,
            };
            let lambdas = effective_lambdas(w, w.t_warmup, cfg.train.epochs, cfg.train.epochs);
            let breakdown = losses::total_loss(
                &terms,
                w,
                w.t_warmup,
                cfg.train.epochs,
                cfg.train.epochs,
            );
            print_line(
                &render(&[
                    ("fps", Val::F(breakdown.fps)),
                    ("diff", Val::F(breakdown.diff)),
                    ("chamfer", Val::F(breakdown.chamfer)),
                    ("mse", Val::F(breakdown.mse)),
                    ("kl", Val::F(breakdown.kl)),
                    ("lambdas", Val::ListF(lambdas.to_vec())),
                    ("total", Val::F(breakdown.total)),
                    ("sigma", Val::F(*sigma)),
                    ("config_hash", Val::S(hash.into())),
                ])
            );
        }
    }
    Ok(())
}
