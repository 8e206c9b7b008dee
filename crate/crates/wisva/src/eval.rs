//! The four evaluation scenarios: validation against held-out APs (with AE
//! and mean-predictor baselines), denoising of pixelated heatmaps,
//! quadrant-holdout extrapolation, and few-shot adaptation to an unseen
//! layout. Reports carry dB-domain per-pixel errors.

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::Grid2;
use crate::io::IoFormatError;
use crate::models::{Model, ModelConfig, ModelError, ModelKind};
use crate::oracle::{self, OracleError, PropagationParams};
use crate::scene::{ApPlacement, WarehouseScene};
use crate::tensors::{
    self, build_sample, resize, DatasetConfig, Quadrant, ResizeMode, SampleMeta, SampleTensors,
    Split, TensorError,
};
use crate::training::{fit, TrainConfig, TrainError};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("empty split: {0}")]
    EmptySplit(String),
    #[error("invalid resolutions: lo {lo} vs hi {hi}")]
    InvalidResolution { lo: usize, hi: usize },
    #[error("requested {requested} shots but only {available} samples exist")]
    InsufficientSamples { requested: usize, available: usize },
    #[error("test quadrant {0} must not appear in the training quadrants")]
    QuadrantOverlap(Quadrant),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Io(#[from] IoFormatError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    Validation,
    Denoising,
    Extrapolation,
    Fewshot,
}

impl std::fmt::Display for Scenario {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Scenario::Validation => "validation",
            Scenario::Denoising => "denoising",
            Scenario::Extrapolation => "extrapolation",
            Scenario::Fewshot => "fewshot",
        })
    }
}

impl std::str::FromStr for Scenario {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "validation" => Ok(Scenario::Validation),
            "denoising" => Ok(Scenario::Denoising),
            "extrapolation" => Ok(Scenario::Extrapolation),
            "fewshot" | "few-shot" => Ok(Scenario::Fewshot),
            other => Err(format!("unknown scenario {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMetrics {
    pub mae_db: f64,
    pub max_pixel_error_db: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mse_db2: Option<f64>,
    pub error_map_paths: Vec<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FewShotRow {
    pub shots: usize,
    pub mae_db: f64,
    pub peak_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ScenarioOutcome {
    Validation {
        vae: ModelMetrics,
        ae: ModelMetrics,
        mean_predictor: ModelMetrics,
    },
    Denoising {
        noisy_vs_truth: ModelMetrics,
        pred_vs_truth: ModelMetrics,
        degenerate: bool,
    },
    Extrapolation {
        vae_in_dist: ModelMetrics,
        vae_held_out: ModelMetrics,
        ae_in_dist: ModelMetrics,
        ae_held_out: ModelMetrics,
        train_samples: usize,
        held_out_samples: usize,
    },
    Fewshot {
        rows: Vec<FewShotRow>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub scenario: Scenario,
    pub seed: u64,
    pub config_hash: String,
    pub config: serde_json::Value,
    pub outcome: ScenarioOutcome,
}

impl EvalReport {
    pub fn save(&self, dir: &Path) -> Result<(), IoFormatError> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("report.json"), serde_json::to_vec_pretty(self)?)?;
        std::fs::write(dir.join("metrics.csv"), self.metrics_csv())?;
        Ok(())
    }

    pub fn metrics_csv(&self) -> String {
        let mut out = String::from("metric,value\n");
        let mut push = |k: &str, v: f64| out.push_str(&format!("{k},{v}\n"));
        match &self.outcome {
            ScenarioOutcome::Validation { vae, ae, mean_predictor } => {
                push("vae_mae_db", vae.mae_db);
                push("vae_max_db", vae.max_pixel_error_db);
                push("ae_mae_db", ae.mae_db);
                push("ae_max_db", ae.max_pixel_error_db);
                push("mean_predictor_mae_db", mean_predictor.mae_db);
                push("mean_predictor_max_db", mean_predictor.max_pixel_error_db);
            }
            ScenarioOutcome::Denoising { noisy_vs_truth, pred_vs_truth, .. } => {
                push("noisy_mae_db", noisy_vs_truth.mae_db);
                push("noisy_mse_db2", noisy_vs_truth.mse_db2.unwrap_or(f64::NAN));
                push("pred_mae_db", pred_vs_truth.mae_db);
                push("pred_mse_db2", pred_vs_truth.mse_db2.unwrap_or(f64::NAN));
            }
            ScenarioOutcome::Extrapolation {
                vae_in_dist,
                vae_held_out,
                ae_in_dist,
                ae_held_out,
                ..
            } => {
                push("vae_in_dist_mae_db", vae_in_dist.mae_db);
                push("vae_held_out_mae_db", vae_held_out.mae_db);
                push("ae_in_dist_mae_db", ae_in_dist.mae_db);
                push("ae_held_out_mae_db", ae_held_out.mae_db);
            }
            ScenarioOutcome::Fewshot { rows } => {
                for r in rows {
                    push(&format!("k{}_mae_db", r.shots), r.mae_db);
                    push(&format!("k{}_peak_db", r.shots), r.peak_db);
                }
            }
        }
        out
    }
}

/// Per-pixel absolute error in dB between two normalized heatmaps.
pub fn error_heatmap(target: &Grid2<f32>, pred: &Grid2<f32>, norm: (f64, f64)) -> Grid2<f32> {
    assert_eq!(target.shape(), pred.shape(), "error map over mismatched shapes");
    let span = norm.1 - norm.0;
    Grid2::from_fn(target.h(), target.w(), |i, j| {
        ((target.get(i, j) as f64 - pred.get(i, j) as f64) * span).abs() as f32
    })
}

/// dB-domain aggregates of predictions over a sample set. The aggregate MAE
/// is the mean of the per-sample error maps.
fn metrics_over<F>(
    samples: &[&SampleTensors],
    norm: (f64, f64),
    predict: F,
    map_export: &[(usize, PathBuf)],
) -> Result<ModelMetrics, EvalError>
where
    F: Fn(&SampleTensors) -> Result<Grid2<f32>, EvalError> + Sync,
{
    if samples.is_empty() {
        return Err(EvalError::EmptySplit("metrics over zero samples".into()));
    }
    let span = norm.1 - norm.0;
    let maps: Result<Vec<Grid2<f32>>, EvalError> = samples
        .par_iter()
        .map(|s| Ok(error_heatmap(&s.target, &predict(s)?, norm)))
        .collect();
    let maps = maps?;
    let mut mae_sum = 0.0;
    let mut max_err = 0.0f64;
    let mut mse_sum = 0.0;
    for m in &maps {
        mae_sum += m.mean();
        mse_sum += m.values().iter().map(|&e| (e as f64) * (e as f64)).sum::<f64>()
            / m.len() as f64;
        max_err = max_err.max(m.values().iter().copied().fold(0.0f32, f32::max) as f64);
    }
    let mut paths = Vec::new();
    for (idx, path) in map_export {
        crate::io::export_heatmap_png(&maps[*idx], (0.0, span), path)?;
        paths.push(path.clone());
    }
    Ok(ModelMetrics {
        mae_db: mae_sum / maps.len() as f64,
        max_pixel_error_db: max_err,
        mse_db2: Some(mse_sum / maps.len() as f64),
        error_map_paths: paths,
    })
}

/// Seeded choice of which sample indices get exported error maps.
fn map_export_plan(
    n: usize,
    count: usize,
    seed: u64,
    out_dir: Option<&Path>,
    tag: &str,
) -> Result<Vec<(usize, PathBuf)>, IoFormatError> {
    let Some(dir) = out_dir else {
        return Ok(vec![]);
    };
    let maps_dir = dir.join("maps");
    std::fs::create_dir_all(&maps_dir)?;
    let mut indices: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6d61_7073);
    indices.shuffle(&mut rng);
    indices.truncate(count.min(n));
    indices.sort_unstable();
    Ok(indices
        .into_iter()
        .map(|i| (i, maps_dir.join(format!("{tag}_sample{i:04}.png"))))
        .collect())
}

fn scenario_config_hash<T: Serialize>(cfg: &T) -> (String, serde_json::Value) {
    let value = serde_json::to_value(cfg).expect("config serializes");
    (crate::io::config_hash(&value), value)
}

/// Evaluates trained VAE and AE models plus the mean-predictor baseline on
/// the validation split.
pub fn scenario_validation(
    vae: &Model,
    ae: &Model,
    ds: &tensors::Dataset,
    seed: u64,
    error_maps: usize,
    out_dir: Option<&Path>,
) -> Result<EvalReport, EvalError> {
    let val_idx = ds.indices_of(Split::Val);
    if val_idx.is_empty() {
        return Err(EvalError::EmptySplit("validation".into()));
    }
    let train_idx = ds.indices_of(Split::Train);
    if train_idx.is_empty() {
        return Err(EvalError::EmptySplit("train (mean predictor needs it)".into()));
    }
    let val: Vec<&SampleTensors> = val_idx.iter().map(|&i| &ds.samples[i]).collect();

    // Per-pixel mean of the training targets.
    let (h, w) = ds.samples[train_idx[0]].target.shape();
    let mut mean = vec![0.0f64; h * w];
    for &i in &train_idx {
        for (m, &t) in mean.iter_mut().zip(ds.samples[i].target.values()) {
            *m += t as f64;
        }
    }
    let inv = 1.0 / train_idx.len() as f64;
    let mean_grid = Grid2::from_vec(h, w, mean.iter().map(|&v| (v * inv) as f32).collect());

    let plan_vae = map_export_plan(val.len(), error_maps, seed, out_dir, "vae")?;
    let plan_ae = map_export_plan(val.len(), error_maps, seed, out_dir, "ae")?;
    let plan_mean = map_export_plan(val.len(), error_maps, seed, out_dir, "mean")?;

    let vae_metrics = metrics_over(&val, ds.normalization, |s| Ok(vae.predict(s)?), &plan_vae)?;
    let ae_metrics = metrics_over(&val, ds.normalization, |s| Ok(ae.predict(s)?), &plan_ae)?;
    let mean_metrics =
        metrics_over(&val, ds.normalization, |_| Ok(mean_grid.clone()), &plan_mean)?;

    let (config_hash, config) = scenario_config_hash(&serde_json::json!({
        "scenario": "validation",
        "seed": seed,
        "val_samples": val.len(),
        "normalization": ds.normalization,
    }));
    Ok(EvalReport {
        scenario: Scenario::Validation,
        seed,
        config_hash,
        config,
        outcome: ScenarioOutcome::Validation {
            vae: vae_metrics,
            ae: ae_metrics,
            mean_predictor: mean_metrics,
        },
    })
}

/// Compares a pixelated low-resolution heatmap against the model's
/// prediction from physics tensors, both versus the high-resolution oracle
/// ground truth.
#[allow(clippy::too_many_arguments)]
pub fn scenario_denoising(
    model: &Model,
    scene: &WarehouseScene,
    ap: &ApPlacement,
    hi_res: usize,
    lo_res: usize,
    dataset_cfg: &DatasetConfig,
    params: &PropagationParams,
    seed: u64,
    out_dir: Option<&Path>,
) -> Result<EvalReport, EvalError> {
    if lo_res > hi_res || lo_res == 0 {
        return Err(EvalError::InvalidResolution { lo: lo_res, hi: hi_res });
    }
    let degenerate = lo_res == hi_res;
    let norm = (dataset_cfg.norm_lo_db, dataset_cfg.norm_hi_db);

    let fine = crate::scene::rasterize_materials(scene);
    let coarse_perm =
        tensors::permittivity_tensor(&crate::scene::rasterize_at(scene, scene.width_m / hi_res as f64));
    let cfg_hi = DatasetConfig { out_res: hi_res, ..dataset_cfg.clone() };
    let meta = SampleMeta {
        scene_idx: 0,
        ap_idx: 0,
        ap_x_m: ap.x_m,
        ap_y_m: ap.y_m,
        quadrant: Quadrant::of(ap.x_m, ap.y_m, scene.width_m / 2.0, scene.depth_m / 2.0),
        split: Split::Test,
    };
    let sample = build_sample(scene, &fine, &coarse_perm, ap, params, &cfg_hi, meta)?;

    // Pixelated input: the oracle at lo_res, nearest-neighbor upsampled.
    let lo_map = oracle::sinr_heatmap_on_grid(scene, &fine, ap, &[], params, lo_res.max(8))?;
    let lo_norm = tensors::normalize_sinr(&lo_map, norm.0, norm.1)?;
    let lo_at_requested = if lo_res >= 8 {
        lo_norm
    } else {
        // Resolutions below the oracle floor are first downsampled to the
        // requested pixelation.
        resize(&lo_norm, lo_res, ResizeMode::Nearest)
    };
    let noisy = resize(&lo_at_requested, hi_res, ResizeMode::Nearest);
    let pred = model.predict(&sample)?;

    let refs = [&sample];
    let plan_noisy = map_export_plan(1, 1, seed, out_dir, "noisy")?;
    let plan_pred = map_export_plan(1, 1, seed, out_dir, "pred")?;
    let noisy_metrics = metrics_over(&refs, norm, |_| Ok(noisy.clone()), &plan_noisy)?;
    let pred_metrics = metrics_over(&refs, norm, |_| Ok(pred.clone()), &plan_pred)?;

    let (config_hash, config) = scenario_config_hash(&serde_json::json!({
        "scenario": "denoising",
        "seed": seed,
        "hi_res": hi_res,
        "lo_res": lo_res,
        "ap": [ap.x_m, ap.y_m],
        "normalization": norm,
    }));
    Ok(EvalReport {
        scenario: Scenario::Denoising,
        seed,
        config_hash,
        config,
        outcome: ScenarioOutcome::Denoising {
            noisy_vs_truth: noisy_metrics,
            pred_vs_truth: pred_metrics,
            degenerate,
        },
    })
}

/// Shared knobs for the scenarios that train models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedScenarioConfig {
    pub dataset: DatasetConfig,
    pub propagation: PropagationParams,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub seed: u64,
}

/// Trains fresh VAE and AE models on AP placements inside
/// `train_quadrants` and evaluates both on the held-out quadrant.
pub fn scenario_extrapolation(
    train_quadrants: &[Quadrant],
    test_quadrant: Quadrant,
    scenes: &[WarehouseScene],
    cfg: &TrainedScenarioConfig,
    out_dir: Option<&Path>,
) -> Result<EvalReport, EvalError> {
    if train_quadrants.contains(&test_quadrant) {
        return Err(EvalError::QuadrantOverlap(test_quadrant));
    }
    let mut ds = tensors::build_dataset(scenes, &cfg.dataset, &cfg.propagation, cfg.seed)?;
    // Quadrant filter: samples outside the training quadrants move to the
    // test split; the seeded train/val assignment inside them is kept.
    let mut held_out = 0usize;
    for s in &mut ds.samples {
        if s.meta.quadrant == test_quadrant {
            held_out += 1;
        }
        if !train_quadrants.contains(&s.meta.quadrant) {
            s.meta.split = Split::Test;
        }
    }
    let train_count = ds.indices_of(Split::Train).len();
    if train_count == 0 {
        return Err(EvalError::EmptySplit("training quadrants".into()));
    }
    if held_out == 0 {
        return Err(EvalError::EmptySplit(format!("quadrant {test_quadrant}")));
    }

    let mut vae = Model::init(ModelKind::Vae, cfg.model, cfg.seed)?;
    let mut ae = Model::init(ModelKind::Ae, cfg.model, cfg.seed)?;
    fit(&mut vae, &ds, &cfg.train, None)?;
    fit(&mut ae, &ds, &cfg.train, None)?;

    let in_dist: Vec<&SampleTensors> =
        ds.indices_of(Split::Val).iter().map(|&i| &ds.samples[i]).collect();
    let held: Vec<&SampleTensors> = ds
        .samples
        .iter()
        .filter(|s| s.meta.quadrant == test_quadrant)
        .collect();

    let plan_held = map_export_plan(held.len(), 4, cfg.seed, out_dir, "vae_heldout")?;
    let none = [];
    let vae_in = metrics_over(&in_dist, ds.normalization, |s| Ok(vae.predict(s)?), &none)?;
    let vae_out = metrics_over(&held, ds.normalization, |s| Ok(vae.predict(s)?), &plan_held)?;
    let ae_in = metrics_over(&in_dist, ds.normalization, |s| Ok(ae.predict(s)?), &none)?;
    let ae_out = metrics_over(&held, ds.normalization, |s| Ok(ae.predict(s)?), &none)?;

    let (config_hash, config) = scenario_config_hash(&serde_json::json!({
        "scenario": "extrapolation",
        "train_quadrants": train_quadrants,
        "test_quadrant": test_quadrant,
        "cfg": cfg,
    }));
    Ok(EvalReport {
        scenario: Scenario::Extrapolation,
        seed: cfg.seed,
        config_hash,
        config,
        outcome: ScenarioOutcome::Extrapolation {
            vae_in_dist: vae_in,
            vae_held_out: vae_out,
            ae_in_dist: ae_in,
            ae_held_out: ae_out,
            train_samples: train_count,
            held_out_samples: held_out,
        },
    })
}

/// Fine-tunes a copy of `pretrained` on k seeded samples of an unseen scene
/// for each k in `shots`, evaluating on a fixed held-out remainder.
pub fn scenario_fewshot(
    pretrained: &Model,
    new_scene: &WarehouseScene,
    shots: &[usize],
    cfg: &TrainedScenarioConfig,
    out_dir: Option<&Path>,
) -> Result<EvalReport, EvalError> {
    let mut shots = shots.to_vec();
    shots.sort_unstable();
    let ds = tensors::build_dataset(
        std::slice::from_ref(new_scene),
        &cfg.dataset,
        &cfg.propagation,
        cfg.seed,
    )?;
    let n = ds.samples.len();
    let max_shot = shots.last().copied().unwrap_or(0);
    if max_shot >= n {
        return Err(EvalError::InsufficientSamples { requested: max_shot, available: n });
    }

    // One seeded permutation: the first k entries are the k-shot train set,
    // everything beyond max_shot is the shared evaluation remainder.
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x6673_686f);
    order.shuffle(&mut rng);
    let eval_idx: Vec<usize> = order[max_shot..].to_vec();
    if eval_idx.is_empty() {
        return Err(EvalError::EmptySplit("few-shot evaluation remainder".into()));
    }

    let mut rows = Vec::with_capacity(shots.len());
    for (row_idx, &k) in shots.iter().enumerate() {
        let model = if k == 0 {
            pretrained.clone()
        } else {
            let mut tuned = pretrained.clone();
            let mut tune_ds = ds.clone();
            for (pos, idx) in order.iter().enumerate() {
                tune_ds.samples[*idx].meta.split = if pos < k {
                    Split::Train
                } else if pos >= max_shot && pos < max_shot + 8 {
                    // Small fixed validation subset for the training loop's
                    // per-epoch trace; final metrics use the full remainder.
                    Split::Val
                } else {
                    Split::Test
                };
            }
            fit(&mut tuned, &tune_ds, &cfg.train, None)?;
            tuned
        };
        let eval_refs: Vec<&SampleTensors> = eval_idx.iter().map(|&i| &ds.samples[i]).collect();
        let plan = map_export_plan(
            eval_refs.len(),
            if row_idx + 1 == shots.len() { 2 } else { 0 },
            cfg.seed,
            out_dir,
            &format!("k{k}"),
        )?;
        let metrics = metrics_over(&eval_refs, ds.normalization, |s| Ok(model.predict(s)?), &plan)?;
        rows.push(FewShotRow { shots: k, mae_db: metrics.mae_db, peak_db: metrics.max_pixel_error_db });
    }

    let (config_hash, config) = scenario_config_hash(&serde_json::json!({
        "scenario": "fewshot",
        "shots": shots,
        "cfg": cfg,
    }));
    Ok(EvalReport {
        scenario: Scenario::Fewshot,
        seed: cfg.seed,
        config_hash,
        config,
        outcome: ScenarioOutcome::Fewshot { rows },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{generate_layout, LayoutSpec};

    fn small_scene(seed: u64) -> WarehouseScene {
        generate_layout(
            seed,
            &LayoutSpec {
                width_m: 20.0,
                depth_m: 20.0,
                min_shelves: 3,
                shelf_size_range: crate::scene::ShelfSizeRange {
                    width_m: (2.0, 5.0),
                    depth_m: (1.0, 2.0),
                },
                ..LayoutSpec::default()
            },
        )
        .unwrap()
    }

    fn small_ds() -> tensors::Dataset {
        tensors::build_dataset(
            &[small_scene(1), small_scene(2)],
            &DatasetConfig { out_res: 16, ..DatasetConfig::default() },
            &PropagationParams::default(),
            4,
        )
        .unwrap()
    }

    fn tiny_model_cfg() -> ModelConfig {
        ModelConfig { input_res: 16, latent_dim: 8, ..ModelConfig::default() }
    }

    #[test]
    fn error_heatmap_cases() {
        let t = Grid2::filled(4, 4, 0.5f32);
        let same = error_heatmap(&t, &t, (-10.0, 60.0));
        assert!(same.values().iter().all(|&v| v == 0.0));

        let shifted = Grid2::filled(4, 4, 0.6f32);
        let m = error_heatmap(&t, &shifted, (-10.0, 60.0));
        for &v in m.values() {
            assert!((v - 7.0).abs() < 1e-4, "expected uniform 7 dB, got {v}");
        }
        assert!((m.mean() - 7.0).abs() < 1e-4);
    }

    #[test]
    fn validation_report_shapes_and_mean_baseline() {
        let ds = small_ds();
        let vae = Model::init(ModelKind::Vae, tiny_model_cfg(), 1).unwrap();
        let ae = Model::init(ModelKind::Ae, tiny_model_cfg(), 2).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let report =
            scenario_validation(&vae, &ae, &ds, 7, 2, Some(dir.path())).unwrap();
        match &report.outcome {
            ScenarioOutcome::Validation { vae, ae, mean_predictor } => {
                assert!(vae.mae_db >= 0.0 && ae.mae_db >= 0.0 && mean_predictor.mae_db >= 0.0);
                assert_eq!(vae.error_map_paths.len(), 2);
                for p in &vae.error_map_paths {
                    assert!(p.exists());
                }
            }
            other => panic!("wrong outcome {other:?}"),
        }
        report.save(dir.path()).unwrap();
        assert!(dir.path().join("report.json").exists());
        assert!(dir.path().join("metrics.csv").exists());
    }

    #[test]
    fn mean_predictor_on_identical_targets_scores_zero() {
        let mut ds = small_ds();
        let constant = Grid2::filled(16, 16, 0.25f32);
        for s in &mut ds.samples {
            s.target = constant.clone();
        }
        let vae = Model::init(ModelKind::Vae, tiny_model_cfg(), 1).unwrap();
        let ae = Model::init(ModelKind::Ae, tiny_model_cfg(), 2).unwrap();
        let report = scenario_validation(&vae, &ae, &ds, 7, 0, None).unwrap();
        match report.outcome {
            ScenarioOutcome::Validation { mean_predictor, .. } => {
                assert_eq!(mean_predictor.mae_db, 0.0);
            }
            other => panic!("wrong outcome {other:?}"),
        }
    }

    #[test]
    fn denoising_degenerate_and_pixelated() {
        let scene = small_scene(3);
        let ap = ApPlacement::new(10.0, 10.0, &scene.ap);
        let cfg = DatasetConfig { out_res: 16, ..DatasetConfig::default() };
        let model = Model::init(ModelKind::Vae, tiny_model_cfg(), 1).unwrap();
        let p = PropagationParams::default();

        let same =
            scenario_denoising(&model, &scene, &ap, 16, 16, &cfg, &p, 1, None).unwrap();
        match same.outcome {
            ScenarioOutcome::Denoising { noisy_vs_truth, degenerate, .. } => {
                assert!(degenerate);
                assert_eq!(noisy_vs_truth.mse_db2.unwrap(), 0.0);
            }
            other => panic!("wrong outcome {other:?}"),
        }

        let pixelated =
            scenario_denoising(&model, &scene, &ap, 16, 8, &cfg, &p, 1, None).unwrap();
        match pixelated.outcome {
            ScenarioOutcome::Denoising { noisy_vs_truth, degenerate, .. } => {
                assert!(!degenerate);
                assert!(noisy_vs_truth.mse_db2.unwrap() > 0.0);
            }
            other => panic!("wrong outcome {other:?}"),
        }

        assert!(matches!(
            scenario_denoising(&model, &scene, &ap, 16, 32, &cfg, &p, 1, None),
            Err(EvalError::InvalidResolution { .. })
        ));
    }

    #[test]
    fn extrapolation_filters_quadrants() {
        let cfg = TrainedScenarioConfig {
            dataset: DatasetConfig { out_res: 16, ..DatasetConfig::default() },
            propagation: PropagationParams::default(),
            model: tiny_model_cfg(),
            train: TrainConfig { epochs: 1, batch_size: 8, seed: 3, ..TrainConfig::default() },
            seed: 3,
        };
        let scenes = vec![small_scene(1), small_scene(2)];
        let report = scenario_extrapolation(
            &[Quadrant::I, Quadrant::II, Quadrant::III],
            Quadrant::IV,
            &scenes,
            &cfg,
            None,
        )
        .unwrap();
        match report.outcome {
            ScenarioOutcome::Extrapolation { train_samples, held_out_samples, .. } => {
                // 16 APs per scene, 4 per quadrant: 8 held out of 32.
                assert_eq!(held_out_samples, 8);
                assert!(train_samples <= 24, "train set leaked into quadrant IV");
            }
            other => panic!("wrong outcome {other:?}"),
        }

        assert!(matches!(
            scenario_extrapolation(&[Quadrant::I, Quadrant::IV], Quadrant::IV, &scenes, &cfg, None),
            Err(EvalError::QuadrantOverlap(Quadrant::IV))
        ));
    }

    #[test]
    fn fewshot_zero_shot_and_selection_determinism() {
        let cfg = TrainedScenarioConfig {
            dataset: DatasetConfig { out_res: 16, ..DatasetConfig::default() },
            propagation: PropagationParams::default(),
            model: tiny_model_cfg(),
            train: TrainConfig { epochs: 1, batch_size: 4, seed: 5, ..TrainConfig::default() },
            seed: 5,
        };
        let pretrained = Model::init(ModelKind::Vae, tiny_model_cfg(), 5).unwrap();
        let scene = small_scene(9);
        let a = scenario_fewshot(&pretrained, &scene, &[0, 2], &cfg, None).unwrap();
        let b = scenario_fewshot(&pretrained, &scene, &[0, 2], &cfg, None).unwrap();
        assert_eq!(a.outcome, b.outcome);
        match a.outcome {
            ScenarioOutcome::Fewshot { rows } => {
                assert_eq!(rows.len(), 2);
                assert_eq!(rows[0].shots, 0);
            }
            other => panic!("wrong outcome {other:?}"),
        }

        // 16 samples in the sweep: 16 shots cannot leave a remainder.
        assert!(matches!(
            scenario_fewshot(&pretrained, &scene, &[16], &cfg, None),
            Err(EvalError::InsufficientSamples { .. })
        ));
    }
}
