//! Input tensor stack for one AP placement: distance, permittivity, AP
//! location, optional LOS/nearest-shelf channels, and the normalized SINR
//! target, assembled into train/validation datasets.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::Grid2;
use crate::oracle::{self, OracleError, PropagationParams, SinrHeatmap};
use crate::scene::{ApPlacement, PermittivityGrid, SceneError, WarehouseScene};

#[derive(Debug, Error)]
pub enum TensorError {
    #[error("degenerate normalization range [{lo}, {hi}]")]
    DegenerateRange { lo: f64, hi: f64 },
    #[error("train fraction {0} outside (0, 1)")]
    InvalidTrainFrac(f64),
    #[error("dataset requires at least one scene")]
    NoScenes,
    #[error(transparent)]
    Scene(#[from] SceneError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
}

/// Floor quadrant of an AP placement, relative to the floor center:
/// I = (x >= cx, y >= cy), II = (x < cx, y >= cy), III = (x < cx, y < cy),
/// IV = (x >= cx, y < cy).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Quadrant {
    I,
    II,
    III,
    IV,
}

impl Quadrant {
    pub fn of(x: f64, y: f64, center_x: f64, center_y: f64) -> Self {
        match (x >= center_x, y >= center_y) {
            (true, true) => Quadrant::I,
            (false, true) => Quadrant::II,
            (false, false) => Quadrant::III,
            (true, false) => Quadrant::IV,
        }
    }

    pub const ALL: [Quadrant; 4] = [Quadrant::I, Quadrant::II, Quadrant::III, Quadrant::IV];
}

impl std::str::FromStr for Quadrant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "I" | "1" => Ok(Quadrant::I),
            "II" | "2" => Ok(Quadrant::II),
            "III" | "3" => Ok(Quadrant::III),
            "IV" | "4" => Ok(Quadrant::IV),
            other => Err(format!("unknown quadrant {other:?}")),
        }
    }
}

impl std::fmt::Display for Quadrant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Quadrant::I => "I",
            Quadrant::II => "II",
            Quadrant::III => "III",
            Quadrant::IV => "IV",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

/// Output grid geometry: `h` x `w` cells covering the floor, with per-axis
/// metric resolution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OutGrid {
    pub h: usize,
    pub w: usize,
    pub res_x_m: f64,
    pub res_y_m: f64,
}

impl OutGrid {
    pub fn square(scene: &WarehouseScene, out_res: usize) -> Self {
        Self {
            h: out_res,
            w: out_res,
            res_x_m: scene.width_m / out_res as f64,
            res_y_m: scene.depth_m / out_res as f64,
        }
    }

    #[inline]
    pub fn cell_center(&self, i: usize, j: usize) -> (f64, f64) {
        ((j as f64 + 0.5) * self.res_x_m, (i as f64 + 0.5) * self.res_y_m)
    }

    #[inline]
    pub fn cell_of(&self, x: f64, y: f64) -> (usize, usize) {
        let j = ((x / self.res_x_m).floor() as isize).clamp(0, self.w as isize - 1) as usize;
        let i = ((y / self.res_y_m).floor() as isize).clamp(0, self.h as isize - 1) as usize;
        (i, j)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleMeta {
    pub scene_idx: usize,
    pub ap_idx: usize,
    pub ap_x_m: f64,
    pub ap_y_m: f64,
    pub quadrant: Quadrant,
    pub split: Split,
}

/// Stacked input channels plus the normalized target heatmap for one AP
/// placement.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleTensors {
    pub distance: Grid2<f32>,
    pub permittivity: Grid2<f32>,
    pub ap_map: Grid2<f32>,
    /// (LOS mask in {0,1}, nearest-shelf distance in meters).
    pub aux: Option<(Grid2<f32>, Grid2<f32>)>,
    /// Normalized SINR in [0, 1].
    pub target: Grid2<f32>,
    pub meta: SampleMeta,
}

impl SampleTensors {
    pub fn channel_count(&self) -> usize {
        3 + if self.aux.is_some() { 2 } else { 0 }
    }

    /// Input channels in serialization order.
    pub fn channels(&self) -> Vec<(&'static str, &Grid2<f32>)> {
        let mut out = vec![
            ("distance", &self.distance),
            ("permittivity", &self.permittivity),
            ("ap", &self.ap_map),
        ];
        if let Some((los, shelf)) = &self.aux {
            out.push(("los", los));
            out.push(("shelf_dist", shelf));
        }
        out
    }

    pub fn resolution(&self) -> usize {
        self.target.h()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetConfig {
    pub sweep_spacing_m: f64,
    pub out_res: usize,
    pub train_frac: f64,
    pub include_aux: bool,
    pub ap_map_scale: f32,
    pub norm_lo_db: f64,
    pub norm_hi_db: f64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            sweep_spacing_m: 5.0,
            out_res: 64,
            train_frac: 0.75,
            include_aux: true,
            ap_map_scale: 12.0,
            norm_lo_db: oracle::SINR_CLAMP_DB.0,
            norm_hi_db: oracle::SINR_CLAMP_DB.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub samples: Vec<SampleTensors>,
    pub resolution: usize,
    /// (lo_db, hi_db) affine map behind every normalized target.
    pub normalization: (f64, f64),
}

impl Dataset {
    pub fn indices_of(&self, split: Split) -> Vec<usize> {
        self.samples
            .iter()
            .enumerate()
            .filter(|(_, s)| s.meta.split == split)
            .map(|(k, _)| k)
            .collect()
    }

    pub fn split_counts(&self) -> (usize, usize, usize) {
        let mut c = (0, 0, 0);
        for s in &self.samples {
            match s.meta.split {
                Split::Train => c.0 += 1,
                Split::Val => c.1 += 1,
                Split::Test => c.2 += 1,
            }
        }
        c
    }
}

/// Planar Euclidean distance from every cell center to the AP, meters.
pub fn distance_tensor(ap: &ApPlacement, out: &OutGrid) -> Grid2<f32> {
    Grid2::from_fn(out.h, out.w, |i, j| {
        let (cx, cy) = out.cell_center(i, j);
        let dx = cx - ap.x_m;
        let dy = cy - ap.y_m;
        ((dx * dx + dy * dy).sqrt()) as f32
    })
}

/// Relative permittivity min-max scaled to [0, 1] over the material table
/// (air maps to 0).
pub fn permittivity_tensor(grid: &PermittivityGrid) -> Grid2<f32> {
    let (lo, hi) = grid.eps_range();
    let span = hi - lo;
    Grid2::from_fn(grid.h(), grid.w(), |i, j| {
        if span > 0.0 {
            ((grid.eps(i, j) - lo) / span) as f32
        } else {
            0.0
        }
    })
}

/// Delta-style AP location map: `scale` at the cell containing the AP, zero
/// elsewhere.
pub fn ap_location_tensor(ap: &ApPlacement, out: &OutGrid, scale: f32) -> Grid2<f32> {
    let mut t = Grid2::filled(out.h, out.w, 0f32);
    let (i, j) = out.cell_of(ap.x_m, ap.y_m);
    t.set(i, j, scale);
    t
}

/// LOS mask (1 where the direct path to the AP is clear) and nearest-shelf
/// distance in meters (0 inside shelves).
pub fn aux_channels(
    scene: &WarehouseScene,
    fine_grid: &PermittivityGrid,
    ap: &ApPlacement,
    out: &OutGrid,
) -> (Grid2<f32>, Grid2<f32>) {
    let mut los = Grid2::filled(out.h, out.w, 0f32);
    let mut shelf = Grid2::filled(out.h, out.w, 0f32);
    let ap_cell = out.cell_of(ap.x_m, ap.y_m);
    let mut runs = Vec::new();
    for i in 0..out.h {
        for j in 0..out.w {
            let (cx, cy) = out.cell_center(i, j);
            // The AP's own cell sees itself: the receiver point and the AP
            // coincide at this resolution.
            let clear = if (i, j) == ap_cell {
                true
            } else {
                oracle::ap_path_crossings_into(fine_grid, (cx, cy), (ap.x_m, ap.y_m), &mut runs);
                runs.is_empty()
            };
            los.set(i, j, if clear { 1.0 } else { 0.0 });
            shelf.set(i, j, scene.nearest_shelf_distance(cx, cy) as f32);
        }
    }
    (los, shelf)
}

/// Maps SINR dB values onto [0, 1] with the affine map `(s - lo) / (hi - lo)`,
/// clamped.
pub fn normalize_sinr(h: &SinrHeatmap, lo_db: f64, hi_db: f64) -> Result<Grid2<f32>, TensorError> {
    if !(lo_db < hi_db) {
        return Err(TensorError::DegenerateRange { lo: lo_db, hi: hi_db });
    }
    let span = hi_db - lo_db;
    Ok(h.values.map(|v| (((v as f64 - lo_db) / span).clamp(0.0, 1.0)) as f32))
}

/// Inverse of [`normalize_sinr`] for values inside the range.
pub fn denormalize_sinr(values: &Grid2<f32>, lo_db: f64, hi_db: f64) -> Grid2<f32> {
    let span = hi_db - lo_db;
    values.map(|v| (v as f64 * span + lo_db) as f32)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResizeMode {
    /// Corner-aligned bilinear interpolation.
    Bilinear,
    /// Pixel-area nearest neighbor; used to build pixelated inputs.
    Nearest,
}

/// Resamples a grid to `out` x `out`.
pub fn resize(t: &Grid2<f32>, out: usize, mode: ResizeMode) -> Grid2<f32> {
    assert!(out >= 1, "resize target must be at least 1 cell");
    match mode {
        ResizeMode::Bilinear => {
            let map = |k: usize, dst: usize, src: usize| -> f64 {
                if dst <= 1 {
                    0.0
                } else {
                    k as f64 * (src as f64 - 1.0) / (dst as f64 - 1.0)
                }
            };
            Grid2::from_fn(out, out, |i, j| {
                let sy = map(i, out, t.h());
                let sx = map(j, out, t.w());
                let y0 = sy.floor() as usize;
                let x0 = sx.floor() as usize;
                let y1 = (y0 + 1).min(t.h() - 1);
                let x1 = (x0 + 1).min(t.w() - 1);
                let fy = sy - y0 as f64;
                let fx = sx - x0 as f64;
                let v00 = t.get(y0, x0) as f64;
                let v01 = t.get(y0, x1) as f64;
                let v10 = t.get(y1, x0) as f64;
                let v11 = t.get(y1, x1) as f64;
                let top = v00 + (v01 - v00) * fx;
                let bot = v10 + (v11 - v10) * fx;
                (top + (bot - top) * fy) as f32
            })
        }
        ResizeMode::Nearest => Grid2::from_fn(out, out, |i, j| {
            let sy = (((i as f64 + 0.5) * t.h() as f64 / out as f64).floor() as usize).min(t.h() - 1);
            let sx = (((j as f64 + 0.5) * t.w() as f64 / out as f64).floor() as usize).min(t.w() - 1);
            t.get(sy, sx)
        }),
    }
}

/// Builds the full tensor stack for one placement on a pre-rasterized scene.
pub fn build_sample(
    scene: &WarehouseScene,
    fine_grid: &PermittivityGrid,
    coarse_perm: &Grid2<f32>,
    ap: &ApPlacement,
    params: &PropagationParams,
    cfg: &DatasetConfig,
    meta: SampleMeta,
) -> Result<SampleTensors, TensorError> {
    let out = OutGrid::square(scene, cfg.out_res);
    let heatmap = oracle::sinr_heatmap_on_grid(scene, fine_grid, ap, &[], params, cfg.out_res)?;
    let target = normalize_sinr(&heatmap, cfg.norm_lo_db, cfg.norm_hi_db)?;
    let aux = if cfg.include_aux {
        Some(aux_channels(scene, fine_grid, ap, &out))
    } else {
        None
    };
    Ok(SampleTensors {
        distance: distance_tensor(ap, &out),
        permittivity: coarse_perm.clone(),
        ap_map: ap_location_tensor(ap, &out, cfg.ap_map_scale),
        aux,
        target,
        meta,
    })
}

/// Seeded shuffle split: round(n * train_frac) samples train, the rest
/// validate, never leaving either side empty.
pub fn split_assignment(n: usize, train_frac: f64, seed: u64) -> Vec<Split> {
    let n_train =
        ((n as f64 * train_frac).round() as usize).clamp(1, n.saturating_sub(1).max(1));
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let mut splits = vec![Split::Val; n];
    for &k in order.iter().take(n_train) {
        splits[k] = Split::Train;
    }
    splits
}

/// Re-tags samples with a fresh seeded split (used after truncating a
/// sample list).
pub fn assign_split(samples: &mut [SampleTensors], train_frac: f64, seed: u64) {
    let splits = split_assignment(samples.len(), train_frac, seed);
    for (s, split) in samples.iter_mut().zip(splits) {
        s.meta.split = split;
    }
}

/// Generates oracle heatmaps and tensor stacks for every (scene, sweep AP)
/// pair, tags quadrants, and assigns a seeded train/val split. Deterministic
/// in (scenes, cfg, params, seed); sample order is (scene index, AP index).
pub fn build_dataset(
    scenes: &[WarehouseScene],
    cfg: &DatasetConfig,
    params: &PropagationParams,
    seed: u64,
) -> Result<Dataset, TensorError> {
    if scenes.is_empty() {
        return Err(TensorError::NoScenes);
    }
    if !(cfg.train_frac > 0.0 && cfg.train_frac < 1.0) {
        return Err(TensorError::InvalidTrainFrac(cfg.train_frac));
    }
    if !(cfg.norm_lo_db < cfg.norm_hi_db) {
        return Err(TensorError::DegenerateRange { lo: cfg.norm_lo_db, hi: cfg.norm_hi_db });
    }

    // Plan all (scene, ap) jobs first so splits can be assigned up front.
    let mut jobs: Vec<(usize, usize, ApPlacement)> = Vec::new();
    for (si, scene) in scenes.iter().enumerate() {
        let sweep = crate::scene::ap_sweep_positions(scene, cfg.sweep_spacing_m)?;
        for (ai, ap) in sweep.into_iter().enumerate() {
            jobs.push((si, ai, ap));
        }
    }

    let splits = split_assignment(jobs.len(), cfg.train_frac, seed);

    let fine_grids: Vec<PermittivityGrid> =
        scenes.iter().map(crate::scene::rasterize_materials).collect();
    let coarse_perms: Vec<Grid2<f32>> = scenes
        .iter()
        .map(|s| permittivity_tensor(&crate::scene::rasterize_at(s, s.width_m / cfg.out_res as f64)))
        .collect();

    let samples: Result<Vec<SampleTensors>, TensorError> = jobs
        .par_iter()
        .enumerate()
        .map(|(k, (si, ai, ap))| {
            let scene = &scenes[*si];
            let meta = SampleMeta {
                scene_idx: *si,
                ap_idx: *ai,
                ap_x_m: ap.x_m,
                ap_y_m: ap.y_m,
                quadrant: Quadrant::of(ap.x_m, ap.y_m, scene.width_m / 2.0, scene.depth_m / 2.0),
                split: splits[k],
            };
            build_sample(scene, &fine_grids[*si], &coarse_perms[*si], ap, params, cfg, meta)
        })
        .collect();

    Ok(Dataset {
        samples: samples?,
        resolution: cfg.out_res,
        normalization: (cfg.norm_lo_db, cfg.norm_hi_db),
    })
}
