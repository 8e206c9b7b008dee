//! Command-line pipeline: scene/dataset generation, training, scenario
//! evaluation, single-placement prediction, and PNG export.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context, Result};
use clap::{Args, Parser, Subcommand};

use wisva::eval::{
    scenario_denoising, scenario_extrapolation, scenario_fewshot, scenario_validation,
    EvalReport, Scenario, ScenarioOutcome, TrainedScenarioConfig,
};
use wisva::io::{self, config_hash, RunConfig};
use wisva::models::{Model, ModelKind};
use wisva::scene::{generate_layout, ApPlacement, LayoutSpec, WarehouseScene};
use wisva::tensors::{self, DatasetConfig, Quadrant, SampleMeta, Split};
use wisva::training::{fit, TrainError};

#[derive(Parser)]
#[command(name = "wisva", about = "Warehouse SINR heatmap laboratory", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// JSON run configuration; missing fields take pinned defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Global seed override.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "runs")]
    out: PathBuf,
    /// Worker thread cap (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate warehouse scenes, sweep AP placements, and write a dataset.
    Gen {
        #[command(flatten)]
        common: CommonArgs,
        /// Number of generated layouts.
        #[arg(long)]
        scenes: Option<usize>,
        /// AP sweep spacing in meters.
        #[arg(long)]
        spacing: Option<f64>,
        /// Output tensor resolution in cells.
        #[arg(long)]
        out_res: Option<usize>,
        /// Training fraction of the split.
        #[arg(long)]
        train_frac: Option<f64>,
        /// Cap/extend the sample count by generating extra layouts and
        /// truncating.
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Train a model on a generated dataset.
    Train {
        #[command(flatten)]
        common: CommonArgs,
        /// Dataset container written by `gen`.
        #[arg(long)]
        dataset: PathBuf,
        /// Model kind: vae or ae.
        #[arg(long, default_value = "vae")]
        model: ModelKind,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        batch_size: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        beta_kl: Option<f64>,
        #[arg(long)]
        checkpoint_every: Option<usize>,
    },
    /// Run one of the evaluation scenarios and write a report directory.
    Eval {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        scenario: Scenario,
        /// VAE checkpoint (validation).
        #[arg(long)]
        vae: Option<PathBuf>,
        /// AE checkpoint (validation).
        #[arg(long)]
        ae: Option<PathBuf>,
        /// Model checkpoint (denoising, fewshot).
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Dataset container (validation).
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// Error maps to export per report.
        #[arg(long)]
        error_maps: Option<usize>,
        /// Denoising resolutions.
        #[arg(long)]
        hi_res: Option<usize>,
        #[arg(long)]
        lo_res: Option<usize>,
        /// AP position "x,y" in meters (denoising).
        #[arg(long)]
        ap: Option<String>,
        /// Held-out quadrant (extrapolation).
        #[arg(long)]
        test_quadrant: Option<Quadrant>,
        /// Training epochs for scenario-internal fits.
        #[arg(long)]
        epochs: Option<usize>,
        /// Few-shot ladder, e.g. "4,16,64".
        #[arg(long)]
        shots: Option<String>,
        /// Layout seed for the held-out scene (fewshot) or the scene
        /// (denoising); defaults to seed + 1000.
        #[arg(long)]
        scene_seed: Option<u64>,
        /// Sweep spacing for the held-out scene (fewshot).
        #[arg(long)]
        fewshot_spacing: Option<f64>,
    },
    /// Predict the heatmap for a single AP placement in a scene.
    Predict {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Layout spec JSON; omitted means the configured layout.
        #[arg(long)]
        scene_spec: Option<PathBuf>,
        /// AP position "x,y" in meters.
        #[arg(long)]
        ap: String,
        /// Output PNG path; raw dB values land next to it as `.raw`.
        #[arg(long, default_value = "prediction.png")]
        png: PathBuf,
    },
    /// Export a dataset channel or target as a PNG heatmap.
    Export {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        dataset: PathBuf,
        /// Sample index.
        #[arg(long, default_value_t = 0)]
        sample: usize,
        /// Channel: target, distance, permittivity, ap, los, shelf_dist.
        #[arg(long, default_value = "target")]
        channel: String,
    },
}

/// User/input error (exit 2) as opposed to internal failure (exit 1).
#[derive(Debug)]
struct UserError(anyhow::Error);

impl std::fmt::Display for UserError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        self.0.fmt(f)
    }
}

impl std::error::Error for UserError {}

fn user<E: Into<anyhow::Error>>(e: E) -> anyhow::Error {
    anyhow::Error::new(UserError(e.into()))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().filter_or("WISVA_LOG", "error"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.chain().any(|c| c.is::<UserError>()) {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

fn load_config(common: &CommonArgs) -> Result<RunConfig> {
    let mut cfg: RunConfig = match &common.config {
        Some(path) => {
            let bytes = std::fs::read(path)
                .with_context(|| format!("reading config {}", path.display()))
                .map_err(user)?;
            serde_json::from_slice(&bytes).context("parsing config JSON").map_err(user)?
        }
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
        cfg.train.seed = seed;
    }
    Ok(cfg)
}

fn prepare_out(common: &CommonArgs, cfg: &RunConfig) -> Result<()> {
    std::fs::create_dir_all(&common.out)
        .with_context(|| format!("creating output dir {}", common.out.display()))
        .map_err(user)?;
    let echo = common.out.join("effective_config.json");
    std::fs::write(&echo, serde_json::to_vec_pretty(cfg)?).map_err(user)?;
    Ok(())
}

fn setup_threads(common: &CommonArgs) -> Result<()> {
    if let Some(n) = common.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("building thread pool")?;
    }
    Ok(())
}

fn build_scenes(cfg: &RunConfig) -> Result<Vec<WarehouseScene>> {
    (0..cfg.scenes)
        .map(|i| {
            generate_layout(cfg.seed.wrapping_add(i as u64), &cfg.layout)
                .map_err(|e| user(anyhow!("scene {i}: {e}")))
        })
        .collect()
}

fn parse_ap(scene: &WarehouseScene, text: &str) -> Result<ApPlacement> {
    let parts: Vec<&str> = text.split(',').map(str::trim).collect();
    if parts.len() != 2 {
        return Err(user(anyhow!("expected --ap \"x,y\", got {text:?}")));
    }
    let x: f64 = parts[0].parse().map_err(|e| user(anyhow!("bad AP x: {e}")))?;
    let y: f64 = parts[1].parse().map_err(|e| user(anyhow!("bad AP y: {e}")))?;
    if !scene.contains(x, y) {
        return Err(user(anyhow!(
            "AP ({x}, {y}) lies outside the {}x{} m floor",
            scene.width_m,
            scene.depth_m
        )));
    }
    Ok(ApPlacement::new(x, y, &scene.ap))
}

fn classify_train_err(e: TrainError) -> anyhow::Error {
    match e {
        TrainError::NonFiniteLoss { .. } => anyhow!(e), // internal: exit 1
        other => user(anyhow!(other)),
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Gen { common, scenes, spacing, out_res, train_frac, samples } => {
            setup_threads(&common)?;
            let mut cfg = load_config(&common)?;
            if let Some(v) = scenes {
                cfg.scenes = v;
            }
            if let Some(v) = spacing {
                cfg.dataset.sweep_spacing_m = v;
            }
            if let Some(v) = out_res {
                cfg.dataset.out_res = v;
            }
            if let Some(v) = train_frac {
                cfg.dataset.train_frac = v;
            }
            cmd_gen(&common, &cfg, samples)
        }
        Command::Train { common, dataset, model, epochs, batch_size, lr, beta_kl, checkpoint_every } => {
            setup_threads(&common)?;
            let mut cfg = load_config(&common)?;
            if let Some(v) = epochs {
                cfg.train.epochs = v;
            }
            if let Some(v) = batch_size {
                cfg.train.batch_size = v;
            }
            if let Some(v) = lr {
                cfg.train.lr = v;
            }
            if let Some(v) = beta_kl {
                cfg.train.beta_kl = v;
            }
            if let Some(v) = checkpoint_every {
                cfg.train.checkpoint_every = v;
            }
            cmd_train(&common, &cfg, &dataset, model)
        }
        Command::Eval {
            common,
            scenario,
            vae,
            ae,
            checkpoint,
            dataset,
            error_maps,
            hi_res,
            lo_res,
            ap,
            test_quadrant,
            epochs,
            shots,
            scene_seed,
            fewshot_spacing,
        } => {
            setup_threads(&common)?;
            let mut cfg = load_config(&common)?;
            if let Some(v) = error_maps {
                cfg.eval.error_maps = v;
            }
            if let Some(v) = hi_res {
                cfg.eval.hi_res = v;
            }
            if let Some(v) = lo_res {
                cfg.eval.lo_res = v;
            }
            if let Some(v) = epochs {
                cfg.train.epochs = v;
            }
            if let Some(text) = &shots {
                cfg.eval.shots = text
                    .split(',')
                    .map(|t| t.trim().parse::<usize>())
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(|e| user(anyhow!("bad --shots: {e}")))?;
            }
            cmd_eval(
                &common,
                &cfg,
                scenario,
                vae,
                ae,
                checkpoint,
                dataset,
                ap,
                test_quadrant,
                scene_seed,
                fewshot_spacing,
            )
        }
        Command::Predict { common, checkpoint, scene_spec, ap, png } => {
            setup_threads(&common)?;
            let cfg = load_config(&common)?;
            cmd_predict(&common, &cfg, &checkpoint, scene_spec.as_deref(), &ap, &png)
        }
        Command::Export { common, dataset, sample, channel } => {
            setup_threads(&common)?;
            let cfg = load_config(&common)?;
            cmd_export(&common, &cfg, &dataset, sample, &channel)
        }
    }
}

fn cmd_gen(common: &CommonArgs, cfg: &RunConfig, samples: Option<usize>) -> Result<()> {
    prepare_out(common, cfg)?;
    let mut effective = cfg.clone();
    let mut scenes = build_scenes(&effective)?;

    if let Some(n) = samples {
        // Extend with additional layouts until the sweep covers n samples,
        // then truncate and re-split.
        let per_scene = tensors::build_dataset(
            &scenes[..1],
            &DatasetConfig { train_frac: 0.5, out_res: 8, ..effective.dataset.clone() },
            &effective.propagation,
            effective.seed,
        )
        .map_err(user)?
        .samples
        .len();
        if per_scene == 0 {
            return Err(user(anyhow!("sweep produces no samples")));
        }
        let needed = n.div_ceil(per_scene);
        while scenes.len() < needed {
            let i = scenes.len();
            scenes.push(
                generate_layout(effective.seed.wrapping_add(i as u64), &effective.layout)
                    .map_err(user)?,
            );
        }
        effective.scenes = scenes.len();
    }

    let mut ds = tensors::build_dataset(
        &scenes,
        &effective.dataset,
        &effective.propagation,
        effective.seed,
    )
    .map_err(user)?;
    if let Some(n) = samples {
        if n > ds.samples.len() {
            return Err(user(anyhow!(
                "requested {n} samples but the sweep yields only {}",
                ds.samples.len()
            )));
        }
        ds.samples.truncate(n);
        tensors::assign_split(&mut ds.samples, effective.dataset.train_frac, effective.seed);
    }

    let path = common.out.join("dataset.wsv");
    io::write_dataset(&ds, &path, effective.seed, &config_hash(&effective)).map_err(user)?;
    let (train, val, _) = ds.split_counts();
    println!(
        "{} samples, {} train / {} val -> {}",
        ds.samples.len(),
        train,
        val,
        path.display()
    );
    Ok(())
}

fn cmd_train(common: &CommonArgs, cfg: &RunConfig, dataset: &Path, kind: ModelKind) -> Result<()> {
    prepare_out(common, cfg)?;
    let (ds, manifest) = io::read_dataset(dataset).map_err(user)?;
    let mut model_cfg = cfg.model;
    model_cfg.input_res = ds.resolution;
    model_cfg.aux_channels = ds.samples.first().map(|s| s.aux.is_some()).unwrap_or(true);
    let mut model = Model::init(kind, model_cfg, cfg.train.seed).map_err(user)?;

    let t0 = std::time::Instant::now();
    let (trace, adam) = fit(&mut model, &ds, &cfg.train, Some(&common.out))
        .map_err(classify_train_err)?;

    let ckpt = io::Checkpoint::snapshot(
        &model,
        &adam,
        &cfg.train,
        cfg.train.epochs as u32,
        &trace,
        manifest.payload_sha256.clone(),
    );
    let ckpt_path = common.out.join(format!("model_{kind}.wsc"));
    io::write_checkpoint(&ckpt, &ckpt_path)?;
    let csv_path = common.out.join(format!("loss_{kind}.csv"));
    trace.write_csv(&csv_path)?;
    println!(
        "trained {kind} for {} epochs in {:.1}s; final val_mae={:.5} -> {}",
        trace.len(),
        t0.elapsed().as_secs_f64(),
        trace.val_mae.last().unwrap_or(&f64::NAN),
        ckpt_path.display()
    );
    Ok(())
}

fn load_model(path: &Path, expect: Option<ModelKind>) -> Result<Model> {
    let ckpt = io::read_checkpoint(path)
        .with_context(|| format!("reading checkpoint {}", path.display()))
        .map_err(user)?;
    match expect {
        Some(kind) => ckpt.build_model_expecting(kind).map_err(user),
        None => ckpt.build_model().map_err(user),
    }
}

fn report_dir(common: &CommonArgs, cfg: &RunConfig, scenario: Scenario) -> PathBuf {
    common.out.join(format!("{scenario}_s{}_{}", cfg.seed, config_hash(cfg)))
}

#[allow(clippy::too_many_arguments)]
fn cmd_eval(
    common: &CommonArgs,
    cfg: &RunConfig,
    scenario: Scenario,
    vae: Option<PathBuf>,
    ae: Option<PathBuf>,
    checkpoint: Option<PathBuf>,
    dataset: Option<PathBuf>,
    ap: Option<String>,
    test_quadrant: Option<Quadrant>,
    scene_seed: Option<u64>,
    fewshot_spacing: Option<f64>,
) -> Result<()> {
    prepare_out(common, cfg)?;
    let dir = report_dir(common, cfg, scenario);
    let report: EvalReport = match scenario {
        Scenario::Validation => {
            let vae_path = vae.ok_or_else(|| user(anyhow!("validation needs --vae")))?;
            let ae_path = ae.ok_or_else(|| user(anyhow!("validation needs --ae")))?;
            let ds_path = dataset.ok_or_else(|| user(anyhow!("validation needs --dataset")))?;
            let (ds, _) = io::read_dataset(&ds_path).map_err(user)?;
            let vae_model = load_model(&vae_path, Some(ModelKind::Vae))?;
            let ae_model = load_model(&ae_path, Some(ModelKind::Ae))?;
            scenario_validation(&vae_model, &ae_model, &ds, cfg.seed, cfg.eval.error_maps, Some(&dir))
                .map_err(user)?
        }
        Scenario::Denoising => {
            let ckpt = checkpoint.ok_or_else(|| user(anyhow!("denoising needs --checkpoint")))?;
            let model = load_model(&ckpt, None)?;
            let seed = scene_seed.unwrap_or(cfg.seed);
            let scene = generate_layout(seed, &cfg.layout).map_err(user)?;
            let ap = match &ap {
                Some(text) => parse_ap(&scene, text)?,
                None => ApPlacement::new(scene.width_m / 2.0 + 2.5, scene.depth_m / 2.0 + 2.5, &scene.ap),
            };
            scenario_denoising(
                &model,
                &scene,
                &ap,
                cfg.eval.hi_res,
                cfg.eval.lo_res,
                &cfg.dataset,
                &cfg.propagation,
                cfg.seed,
                Some(&dir),
            )
            .map_err(user)?
        }
        Scenario::Extrapolation => {
            let test_q = test_quadrant.unwrap_or(Quadrant::IV);
            let train_q: Vec<Quadrant> =
                Quadrant::ALL.into_iter().filter(|q| *q != test_q).collect();
            let scenes = build_scenes(cfg)?;
            let scen_cfg = TrainedScenarioConfig {
                dataset: cfg.dataset.clone(),
                propagation: cfg.propagation,
                model: model_cfg_for(cfg),
                train: cfg.train,
                seed: cfg.seed,
            };
            scenario_extrapolation(&train_q, test_q, &scenes, &scen_cfg, Some(&dir)).map_err(user)?
        }
        Scenario::Fewshot => {
            let ckpt = checkpoint.ok_or_else(|| user(anyhow!("fewshot needs --checkpoint")))?;
            let model = load_model(&ckpt, None)?;
            let seed = scene_seed.unwrap_or(cfg.seed.wrapping_add(1000));
            let scene = generate_layout(seed, &cfg.layout).map_err(user)?;
            let mut ds_cfg = cfg.dataset.clone();
            ds_cfg.out_res = model.cfg().input_res;
            if let Some(sp) = fewshot_spacing {
                ds_cfg.sweep_spacing_m = sp;
            }
            let scen_cfg = TrainedScenarioConfig {
                dataset: ds_cfg,
                propagation: cfg.propagation,
                model: *model.cfg(),
                train: cfg.train,
                seed: cfg.seed,
            };
            scenario_fewshot(&model, &scene, &cfg.eval.shots, &scen_cfg, Some(&dir)).map_err(user)?
        }
    };
    report.save(&dir)?;
    print_report(&report);
    println!("report -> {}", dir.display());
    Ok(())
}

fn model_cfg_for(cfg: &RunConfig) -> wisva::models::ModelConfig {
    let mut m = cfg.model;
    m.input_res = cfg.dataset.out_res;
    m.aux_channels = cfg.dataset.include_aux;
    m
}

fn print_report(report: &EvalReport) {
    match &report.outcome {
        ScenarioOutcome::Validation { vae, ae, mean_predictor } => {
            println!(
                "validation MAE dB: vae={:.4} ae={:.4} mean_predictor={:.4}",
                vae.mae_db, ae.mae_db, mean_predictor.mae_db
            );
        }
        ScenarioOutcome::Denoising { noisy_vs_truth, pred_vs_truth, degenerate } => {
            if *degenerate {
                println!("degenerate: lo_res equals hi_res");
            }
            println!(
                "denoising MSE dB^2: noisy={:.4} pred={:.4}; MAE dB: noisy={:.4} pred={:.4}",
                noisy_vs_truth.mse_db2.unwrap_or(f64::NAN),
                pred_vs_truth.mse_db2.unwrap_or(f64::NAN),
                noisy_vs_truth.mae_db,
                pred_vs_truth.mae_db
            );
        }
        ScenarioOutcome::Extrapolation {
            vae_in_dist,
            vae_held_out,
            ae_in_dist,
            ae_held_out,
            train_samples,
            held_out_samples,
        } => {
            println!(
                "extrapolation MAE dB: vae in={:.4} held-out={:.4}; ae in={:.4} held-out={:.4} ({} train, {} held out)",
                vae_in_dist.mae_db,
                vae_held_out.mae_db,
                ae_in_dist.mae_db,
                ae_held_out.mae_db,
                train_samples,
                held_out_samples
            );
        }
        ScenarioOutcome::Fewshot { rows } => {
            for r in rows {
                println!("k={}: mae={:.4} dB, peak={:.4} dB", r.shots, r.mae_db, r.peak_db);
            }
        }
    }
}

fn cmd_predict(
    common: &CommonArgs,
    cfg: &RunConfig,
    checkpoint: &Path,
    scene_spec: Option<&Path>,
    ap_text: &str,
    png: &Path,
) -> Result<()> {
    prepare_out(common, cfg)?;
    let model = load_model(checkpoint, None)?;
    let spec: LayoutSpec = match scene_spec {
        Some(path) => serde_json::from_slice(&std::fs::read(path).map_err(user)?)
            .context("parsing scene spec")
            .map_err(user)?,
        None => cfg.layout.clone(),
    };
    let scene = generate_layout(spec.seed, &spec).map_err(user)?;
    let ap = parse_ap(&scene, ap_text)?;

    let res = model.cfg().input_res;
    let fine = wisva::scene::rasterize_materials(&scene);
    let coarse = tensors::permittivity_tensor(&wisva::scene::rasterize_at(
        &scene,
        scene.width_m / res as f64,
    ));
    let mut ds_cfg = cfg.dataset.clone();
    ds_cfg.out_res = res;
    ds_cfg.include_aux = model.cfg().aux_channels;
    let meta = SampleMeta {
        scene_idx: 0,
        ap_idx: 0,
        ap_x_m: ap.x_m,
        ap_y_m: ap.y_m,
        quadrant: Quadrant::of(ap.x_m, ap.y_m, scene.width_m / 2.0, scene.depth_m / 2.0),
        split: Split::Test,
    };
    let sample =
        tensors::build_sample(&scene, &fine, &coarse, &ap, &cfg.propagation, &ds_cfg, meta)
            .map_err(user)?;
    let pred = model.predict(&sample).map_err(|e| anyhow!(e))?;

    let norm = (ds_cfg.norm_lo_db, ds_cfg.norm_hi_db);
    let pred_db = tensors::denormalize_sinr(&pred, norm.0, norm.1);
    let png_path = common.out.join(png);
    io::export_heatmap_png(&pred_db, norm, &png_path)?;

    let raw_path = png_path.with_extension("raw");
    let mut raw = Vec::with_capacity(4 + pred_db.len() * 4);
    raw.extend_from_slice(&(pred_db.h() as u16).to_le_bytes());
    raw.extend_from_slice(&(pred_db.w() as u16).to_le_bytes());
    for &v in pred_db.values() {
        raw.extend_from_slice(&v.to_le_bytes());
    }
    std::fs::write(&raw_path, raw)?;
    println!("prediction -> {} (+ {})", png_path.display(), raw_path.display());
    Ok(())
}

fn cmd_export(
    common: &CommonArgs,
    cfg: &RunConfig,
    dataset: &Path,
    sample: usize,
    channel: &str,
) -> Result<()> {
    prepare_out(common, cfg)?;
    let (ds, manifest) = io::read_dataset(dataset).map_err(user)?;
    let s = ds
        .samples
        .get(sample)
        .ok_or_else(|| user(anyhow!("sample {sample} out of range ({})", ds.samples.len())))?;

    let (grid, range) = if channel == "target" {
        let norm = manifest.normalization;
        (tensors::denormalize_sinr(&s.target, norm.0, norm.1), norm)
    } else {
        let grid = s
            .channels()
            .into_iter()
            .find(|(name, _)| *name == channel)
            .map(|(_, g)| g.clone())
            .ok_or_else(|| {
                user(anyhow!(
                    "unknown channel {channel:?}; available: target, {}",
                    s.channels().iter().map(|(n, _)| *n).collect::<Vec<_>>().join(", ")
                ))
            })?;
        let lo = grid.values().iter().copied().fold(f32::INFINITY, f32::min) as f64;
        let hi = grid.values().iter().copied().fold(f32::NEG_INFINITY, f32::max) as f64;
        let hi = if hi > lo { hi } else { lo + 1.0 };
        (grid, (lo, hi))
    };
    let path = common.out.join(format!("sample{sample:04}_{channel}.png"));
    io::export_heatmap_png(&grid, range, &path)?;
    println!("exported -> {}", path.display());
    Ok(())
}
