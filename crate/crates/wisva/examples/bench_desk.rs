use std::time::Instant;

use wisva::eval::{scenario_denoising, scenario_validation, ScenarioOutcome};
use wisva::models::{Model, ModelConfig, ModelKind};
use wisva::oracle::PropagationParams;
use wisva::scene::{generate_layout, ApPlacement, LayoutSpec};
use wisva::tensors::{build_dataset, DatasetConfig};
use wisva::training::{fit, TrainConfig};

fn main() {
    let t0 = Instant::now();
    let scenes: Vec<_> = (0..5)
        .map(|i| {
            generate_layout(
                42 + i,
                &LayoutSpec { width_m: 30.0, depth_m: 30.0, ..LayoutSpec::default() },
            )
            .unwrap()
        })
        .collect();
    let ds = build_dataset(
        &scenes,
        &DatasetConfig::default(),
        &PropagationParams::default(),
        42,
    )
    .unwrap();
    println!(
        "dataset: {} samples ({:?}) in {:.1}s",
        ds.samples.len(),
        ds.split_counts(),
        t0.elapsed().as_secs_f64()
    );

    let cfg = TrainConfig { epochs: 100, batch_size: 16, seed: 42, ..TrainConfig::default() };
    let t1 = Instant::now();
    let mut vae = Model::init(ModelKind::Vae, ModelConfig::default(), 42).unwrap();
    let (vt, _) = fit(&mut vae, &ds, &cfg, None).unwrap();
    println!(
        "vae: {:.1} min, val_mae first={:.5} last={:.5}, kl last={:.3}",
        t1.elapsed().as_secs_f64() / 60.0,
        vt.val_mae[0],
        vt.val_mae.last().unwrap(),
        vt.train_kl.last().unwrap()
    );

    let t2 = Instant::now();
    let mut ae = Model::init(ModelKind::Ae, ModelConfig::default(), 42).unwrap();
    let (at, _) = fit(&mut ae, &ds, &cfg, None).unwrap();
    println!(
        "ae: {:.1} min, val_mae last={:.5}",
        t2.elapsed().as_secs_f64() / 60.0,
        at.val_mae.last().unwrap()
    );

    let report = scenario_validation(&vae, &ae, &ds, 42, 0, None).unwrap();
    if let ScenarioOutcome::Validation { vae: v, ae: a, mean_predictor: m } = &report.outcome {
        println!(
            "validation dB: vae={:.4} ae={:.4} mean={:.4}; vae/mean={:.3} vae/ae={:.3}",
            v.mae_db,
            a.mae_db,
            m.mae_db,
            v.mae_db / m.mae_db,
            v.mae_db / a.mae_db
        );
    }

    let ap = ApPlacement::new(12.5, 17.5, &scenes[0].ap);
    let den = scenario_denoising(
        &vae,
        &scenes[0],
        &ap,
        64,
        16,
        &DatasetConfig::default(),
        &PropagationParams::default(),
        42,
        None,
    )
    .unwrap();
    if let ScenarioOutcome::Denoising { noisy_vs_truth, pred_vs_truth, .. } = &den.outcome {
        println!(
            "denoising MSE dB^2: noisy={:.4} pred={:.4} ratio={:.3}",
            noisy_vs_truth.mse_db2.unwrap(),
            pred_vs_truth.mse_db2.unwrap(),
            pred_vs_truth.mse_db2.unwrap() / noisy_vs_truth.mse_db2.unwrap()
        );
    }
    println!("total: {:.1} min", t0.elapsed().as_secs_f64() / 60.0);
}
