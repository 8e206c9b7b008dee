//! Warehouse layouts: floor extent, shelf obstacles with materials, AP
//! placements, and rasterization onto occupancy/permittivity grids.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Free-space permittivity, F/m.
pub const EPS0_F_PER_M: f64 = 8.854e-12;

/// Relative permittivity of air (empty cells).
pub const EPS_AIR: f64 = 1.0;

/// Shelf placement is rejection-sampled; this caps total attempts per layout.
pub const PLACEMENT_ATTEMPT_BUDGET: usize = 10_000;

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("placed {placed} of {requested} shelves before exhausting {budget} attempts")]
    PlacementExhausted { placed: usize, requested: usize, budget: usize },
    #[error("sweep spacing {spacing_m} m exceeds floor extent {width_m}x{depth_m} m")]
    EmptySweep { spacing_m: f64, width_m: f64, depth_m: f64 },
    #[error("invalid layout spec: {0}")]
    InvalidSpec(String),
}

/// A shelf construction material. Crossing loss is derived from the relative
/// permittivity unless `fixed_crossing_loss_db` overrides it (used for metal,
/// where the dielectric model does not apply).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Material {
    pub name: String,
    #[serde(rename = "eps_r")]
    pub rel_permittivity: f64,
    #[serde(rename = "fixed_loss_db", default, skip_serializing_if = "Option::is_none")]
    pub fixed_crossing_loss_db: Option<f64>,
}

impl Material {
    pub fn new(name: &str, rel_permittivity: f64) -> Self {
        Self { name: name.to_string(), rel_permittivity, fixed_crossing_loss_db: None }
    }

    pub fn with_fixed_loss(name: &str, rel_permittivity: f64, loss_db: f64) -> Self {
        Self { name: name.to_string(), rel_permittivity, fixed_crossing_loss_db: Some(loss_db) }
    }

    fn validate(&self) -> Result<(), SceneError> {
        if !(self.rel_permittivity >= 1.0) {
            return Err(SceneError::InvalidSpec(format!(
                "material {}: eps_r {} < 1",
                self.name, self.rel_permittivity
            )));
        }
        if let Some(l) = self.fixed_crossing_loss_db {
            if !(l >= 0.0) {
                return Err(SceneError::InvalidSpec(format!(
                    "material {}: fixed crossing loss {} dB < 0",
                    self.name, l
                )));
            }
        }
        Ok(())
    }
}

/// Default material table. The permittivities are representative dielectric
/// constants; metal uses a fixed 15 dB crossing loss (its eps_r only feeds
/// the permittivity input channel).
pub fn default_materials() -> Vec<Material> {
    vec![
        Material::with_fixed_loss("metal-shelf", 8.0, 15.0),
        Material::new("wood", 1.99),
        Material::new("concrete", 5.24),
    ]
}

/// Axis-aligned shelf footprint. `material` indexes the scene's table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Shelf {
    pub x_m: f64,
    pub y_m: f64,
    pub width_m: f64,
    pub depth_m: f64,
    pub material: usize,
}

impl Shelf {
    /// Point-in-footprint test with closed lower/left and open upper/right
    /// edges, so a point on a shared boundary belongs to exactly one side.
    #[inline]
    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.x_m && x < self.x_m + self.width_m && y >= self.y_m && y < self.y_m + self.depth_m
    }

    /// Planar distance from (x, y) to the footprint boundary; 0 inside.
    pub fn distance_to(&self, x: f64, y: f64) -> f64 {
        let dx = (self.x_m - x).max(0.0).max(x - (self.x_m + self.width_m));
        let dy = (self.y_m - y).max(0.0).max(y - (self.y_m + self.depth_m));
        (dx * dx + dy * dy).sqrt()
    }

    fn overlaps(&self, other: &Shelf) -> bool {
        self.x_m < other.x_m + other.width_m
            && other.x_m < self.x_m + self.width_m
            && self.y_m < other.y_m + other.depth_m
            && other.y_m < self.y_m + self.depth_m
    }
}

/// Transmitter parameters shared by every AP of a scene.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ApConfig {
    pub height_m: f64,
    pub tx_power_dbm: f64,
    pub carrier_hz: f64,
}

impl Default for ApConfig {
    fn default() -> Self {
        Self { height_m: 15.0, tx_power_dbm: 20.0, carrier_hz: 60e9 }
    }
}

/// One access-point placement. The antenna is omnidirectional and mounted
/// `height_m` above the floor; propagation uses the 3D slant distance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ApPlacement {
    pub x_m: f64,
    pub y_m: f64,
    pub height_m: f64,
    pub tx_power_dbm: f64,
    pub carrier_hz: f64,
    pub omnidirectional: bool,
}

impl ApPlacement {
    pub fn new(x_m: f64, y_m: f64, cfg: &ApConfig) -> Self {
        Self {
            x_m,
            y_m,
            height_m: cfg.height_m,
            tx_power_dbm: cfg.tx_power_dbm,
            carrier_hz: cfg.carrier_hz,
            omnidirectional: true,
        }
    }
}

/// Requested shelf footprint size range, sampled per shelf. Orientation is
/// randomized by swapping the two spans half the time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShelfSizeRange {
    pub width_m: (f64, f64),
    pub depth_m: (f64, f64),
}

impl Default for ShelfSizeRange {
    fn default() -> Self {
        Self { width_m: (4.0, 12.0), depth_m: (1.0, 2.5) }
    }
}

/// JSON-facing layout request; see `generate_layout`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LayoutSpec {
    pub width_m: f64,
    pub depth_m: f64,
    pub grid_res_m: f64,
    pub seed: u64,
    pub min_shelves: usize,
    /// Upper bound for the sampled shelf count; defaults to `min_shelves`
    /// (exact count).
    pub max_shelves: Option<usize>,
    pub materials: Vec<Material>,
    pub shelf_size_range: ShelfSizeRange,
    pub ap: ApConfig,
}

impl Default for LayoutSpec {
    fn default() -> Self {
        Self {
            width_m: 60.0,
            depth_m: 60.0,
            grid_res_m: 0.11,
            seed: 0,
            min_shelves: 19,
            max_shelves: None,
            materials: default_materials(),
            shelf_size_range: ShelfSizeRange::default(),
            ap: ApConfig::default(),
        }
    }
}

impl LayoutSpec {
    fn validate(&self) -> Result<(), SceneError> {
        if !(self.width_m > 0.0 && self.depth_m > 0.0 && self.grid_res_m > 0.0) {
            return Err(SceneError::InvalidSpec("floor extent and resolution must be positive".into()));
        }
        if (self.width_m / self.grid_res_m) < 8.0 || (self.depth_m / self.grid_res_m) < 8.0 {
            return Err(SceneError::InvalidSpec("grid must span at least 8 cells per axis".into()));
        }
        if self.materials.is_empty() && self.min_shelves > 0 {
            return Err(SceneError::InvalidSpec("shelves requested but no materials declared".into()));
        }
        for m in &self.materials {
            m.validate()?;
        }
        let r = &self.shelf_size_range;
        let fits = |lo: f64, hi: f64, extent: f64| lo > 0.0 && hi >= lo && lo <= extent;
        if self.min_shelves > 0
            && !(fits(r.width_m.0, r.width_m.1, self.width_m)
                && fits(r.depth_m.0, r.depth_m.1, self.depth_m))
        {
            return Err(SceneError::InvalidSpec("shelf size range does not fit the floor".into()));
        }
        if let Some(max) = self.max_shelves {
            if max < self.min_shelves {
                return Err(SceneError::InvalidSpec("max_shelves < min_shelves".into()));
            }
        }
        Ok(())
    }
}

/// One warehouse layout: floor, material table, shelves, and the AP
/// transmitter parameters used when sweeping placements over it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WarehouseScene {
    pub width_m: f64,
    pub depth_m: f64,
    pub grid_res_m: f64,
    pub shelves: Vec<Shelf>,
    pub materials: Vec<Material>,
    pub ap: ApConfig,
    pub rng_seed: u64,
}

impl WarehouseScene {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= 0.0 && x <= self.width_m && y >= 0.0 && y <= self.depth_m
    }

    /// Planar distance from a point to the nearest shelf boundary (0 inside
    /// a shelf). Falls back to the floor diagonal on shelf-free scenes so the
    /// value stays finite.
    pub fn nearest_shelf_distance(&self, x: f64, y: f64) -> f64 {
        self.shelves
            .iter()
            .map(|s| s.distance_to(x, y))
            .fold(f64::INFINITY, f64::min)
            .min((self.width_m * self.width_m + self.depth_m * self.depth_m).sqrt())
    }
}

/// Deterministic procedural layout. Shelf origins, sizes, orientations, and
/// materials are drawn from a ChaCha stream seeded by `seed`; placements that
/// would overlap an earlier shelf are rejected until the attempt budget runs
/// out.
pub fn generate_layout(seed: u64, spec: &LayoutSpec) -> Result<WarehouseScene, SceneError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let max = spec.max_shelves.unwrap_or(spec.min_shelves).max(spec.min_shelves);
    let target = if max > spec.min_shelves {
        rng.gen_range(spec.min_shelves..=max)
    } else {
        spec.min_shelves
    };

    let mut shelves: Vec<Shelf> = Vec::with_capacity(target);
    let mut attempts = 0usize;
    while shelves.len() < target {
        if attempts >= PLACEMENT_ATTEMPT_BUDGET {
            return Err(SceneError::PlacementExhausted {
                placed: shelves.len(),
                requested: target,
                budget: PLACEMENT_ATTEMPT_BUDGET,
            });
        }
        attempts += 1;

        let r = &spec.shelf_size_range;
        let mut w = rng.gen_range(r.width_m.0..=r.width_m.1);
        let mut d = rng.gen_range(r.depth_m.0..=r.depth_m.1);
        if rng.gen_bool(0.5) {
            std::mem::swap(&mut w, &mut d);
        }
        if w > spec.width_m || d > spec.depth_m {
            continue;
        }
        let x = rng.gen_range(0.0..=(spec.width_m - w));
        let y = rng.gen_range(0.0..=(spec.depth_m - d));
        let material = rng.gen_range(0..spec.materials.len());
        let candidate = Shelf { x_m: x, y_m: y, width_m: w, depth_m: d, material };
        if shelves.iter().all(|s| !s.overlaps(&candidate)) {
            shelves.push(candidate);
        }
    }

    Ok(WarehouseScene {
        width_m: spec.width_m,
        depth_m: spec.depth_m,
        grid_res_m: spec.grid_res_m,
        shelves,
        materials: spec.materials.clone(),
        ap: spec.ap,
        rng_seed: seed,
    })
}

/// Rasterized scene: per-cell relative permittivity plus the covering
/// material index (`None` for air). Also carries the eps range of the
/// material table for min-max scaling downstream.
#[derive(Debug, Clone, PartialEq)]
pub struct PermittivityGrid {
    h: usize,
    w: usize,
    res_m: f64,
    eps: Vec<f64>,
    /// 0 = air, k+1 = material index k.
    material: Vec<u16>,
    eps_min: f64,
    eps_max: f64,
}

impl PermittivityGrid {
    #[inline]
    pub fn h(&self) -> usize {
        self.h
    }

    #[inline]
    pub fn w(&self) -> usize {
        self.w
    }

    #[inline]
    pub fn res_m(&self) -> f64 {
        self.res_m
    }

    #[inline]
    pub fn eps(&self, i: usize, j: usize) -> f64 {
        self.eps[i * self.w + j]
    }

    pub fn eps_values(&self) -> &[f64] {
        &self.eps
    }

    /// Material index covering the cell, or `None` for air.
    #[inline]
    pub fn material(&self, i: usize, j: usize) -> Option<usize> {
        match self.material[i * self.w + j] {
            0 => None,
            k => Some(k as usize - 1),
        }
    }

    /// (min, max) relative permittivity over the material table plus air.
    pub fn eps_range(&self) -> (f64, f64) {
        (self.eps_min, self.eps_max)
    }

    /// Cell index of a point, clamped to the grid.
    #[inline]
    pub fn cell_of(&self, x: f64, y: f64) -> (usize, usize) {
        let j = ((x / self.res_m).floor() as isize).clamp(0, self.w as isize - 1) as usize;
        let i = ((y / self.res_m).floor() as isize).clamp(0, self.h as isize - 1) as usize;
        (i, j)
    }

    /// Center coordinates of cell (i, j), meters.
    #[inline]
    pub fn cell_center(&self, i: usize, j: usize) -> (f64, f64) {
        ((j as f64 + 0.5) * self.res_m, (i as f64 + 0.5) * self.res_m)
    }
}

/// Rasterizes at the scene's native grid resolution.
pub fn rasterize_materials(scene: &WarehouseScene) -> PermittivityGrid {
    rasterize_at(scene, scene.grid_res_m)
}

/// Rasterizes shelf materials onto a grid of the given resolution. A cell is
/// covered when its center lies inside a footprint (closed lower/left, open
/// upper/right edges); later shelves never overlap earlier ones by
/// construction.
pub fn rasterize_at(scene: &WarehouseScene, res_m: f64) -> PermittivityGrid {
    let w = (scene.width_m / res_m).ceil() as usize;
    let h = (scene.depth_m / res_m).ceil() as usize;
    let mut eps = vec![EPS_AIR; h * w];
    let mut material = vec![0u16; h * w];

    for shelf in &scene.shelves {
        let eps_r = scene.materials[shelf.material].rel_permittivity;
        // Candidate cell range; the exact center-in-footprint test decides.
        let j0 = (shelf.x_m / res_m).floor().max(0.0) as usize;
        let j1 = (((shelf.x_m + shelf.width_m) / res_m).ceil() as usize).min(w);
        let i0 = (shelf.y_m / res_m).floor().max(0.0) as usize;
        let i1 = (((shelf.y_m + shelf.depth_m) / res_m).ceil() as usize).min(h);
        for i in i0..i1 {
            let cy = (i as f64 + 0.5) * res_m;
            for j in j0..j1 {
                let cx = (j as f64 + 0.5) * res_m;
                if shelf.contains(cx, cy) {
                    eps[i * w + j] = eps_r;
                    material[i * w + j] = shelf.material as u16 + 1;
                }
            }
        }
    }

    let eps_min = EPS_AIR;
    let eps_max = scene
        .materials
        .iter()
        .map(|m| m.rel_permittivity)
        .fold(EPS_AIR, f64::max);
    PermittivityGrid { h, w, res_m, eps, material, eps_min, eps_max }
}

/// Regular AP sweep: positions at half-spacing insets from the walls,
/// stepping `spacing_m` along both axes, row-major (x fastest).
pub fn ap_sweep_positions(
    scene: &WarehouseScene,
    spacing_m: f64,
) -> Result<Vec<ApPlacement>, SceneError> {
    if !(spacing_m > 0.0) {
        return Err(SceneError::InvalidSpec(format!("sweep spacing {spacing_m} must be > 0")));
    }
    let nx = (scene.width_m / spacing_m).floor() as usize;
    let ny = (scene.depth_m / spacing_m).floor() as usize;
    if nx == 0 || ny == 0 {
        return Err(SceneError::EmptySweep {
            spacing_m,
            width_m: scene.width_m,
            depth_m: scene.depth_m,
        });
    }
    let mut out = Vec::with_capacity(nx * ny);
    for jy in 0..ny {
        let y = spacing_m / 2.0 + jy as f64 * spacing_m;
        for jx in 0..nx {
            let x = spacing_m / 2.0 + jx as f64 * spacing_m;
            out.push(ApPlacement::new(x, y, &scene.ap));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec_30m(seed: u64, min_shelves: usize) -> LayoutSpec {
        LayoutSpec {
            width_m: 30.0,
            depth_m: 30.0,
            seed,
            min_shelves,
            ..LayoutSpec::default()
        }
    }

    #[test]
    fn layout_is_deterministic_and_meets_count() {
        let spec = LayoutSpec { seed: 7, ..LayoutSpec::default() };
        let a = generate_layout(7, &spec).unwrap();
        let b = generate_layout(7, &spec).unwrap();
        assert_eq!(a, b);
        assert!(a.shelves.len() >= 19);
        for s in &a.shelves {
            assert!(s.x_m >= 0.0 && s.x_m + s.width_m <= a.width_m);
            assert!(s.y_m >= 0.0 && s.y_m + s.depth_m <= a.depth_m);
        }
    }

    #[test]
    fn zero_shelves_requested_gives_empty_floor() {
        let scene = generate_layout(7, &spec_30m(7, 0)).unwrap();
        assert!(scene.shelves.is_empty());
    }

    #[test]
    fn different_seeds_differ() {
        let spec = LayoutSpec::default();
        let a = generate_layout(1, &spec).unwrap();
        let b = generate_layout(2, &spec).unwrap();
        let differing = a
            .shelves
            .iter()
            .zip(&b.shelves)
            .filter(|(s, t)| (s.x_m, s.y_m) != (t.x_m, t.y_m))
            .count();
        assert!(differing >= 1, "seeds 1 and 2 produced identical shelf origins");
    }

    #[test]
    fn shelves_do_not_overlap() {
        let scene = generate_layout(3, &LayoutSpec::default()).unwrap();
        for (k, a) in scene.shelves.iter().enumerate() {
            for b in &scene.shelves[k + 1..] {
                assert!(!a.overlaps(b), "{a:?} overlaps {b:?}");
            }
        }
    }

    #[test]
    fn placement_exhausted_when_floor_too_small() {
        let spec = LayoutSpec {
            width_m: 10.0,
            depth_m: 10.0,
            min_shelves: 100,
            shelf_size_range: ShelfSizeRange { width_m: (4.0, 8.0), depth_m: (1.0, 2.5) },
            ..LayoutSpec::default()
        };
        match generate_layout(1, &spec) {
            Err(SceneError::PlacementExhausted { .. }) => {}
            other => panic!("expected PlacementExhausted, got {other:?}"),
        }
    }

    #[test]
    fn rasterize_empty_scene_is_all_air() {
        let scene = generate_layout(1, &spec_30m(1, 0)).unwrap();
        let grid = rasterize_materials(&scene);
        assert!(grid.eps_values().iter().all(|&e| e == EPS_AIR));
        assert_eq!(grid.material(0, 0), None);
    }

    #[test]
    fn rasterize_one_shelf_covers_exact_cells() {
        // 4x4 m floor at 0.5 m cells; 1x1 m shelf centered at (2, 2) covers
        // centers 1.75 and 2.25 on both axes: exactly 4 cells.
        let scene = WarehouseScene {
            width_m: 4.0,
            depth_m: 4.0,
            grid_res_m: 0.5,
            shelves: vec![Shelf { x_m: 1.5, y_m: 1.5, width_m: 1.0, depth_m: 1.0, material: 0 }],
            materials: vec![Material::new("test", 4.0)],
            ap: ApConfig::default(),
            rng_seed: 0,
        };
        let grid = rasterize_materials(&scene);
        let covered: Vec<f64> = grid.eps_values().iter().copied().filter(|&e| e == 4.0).collect();
        assert_eq!(covered.len(), 4);
        assert!(grid.eps_values().iter().all(|&e| e == 1.0 || e == 4.0));
    }

    #[test]
    fn rasterize_edge_cells_follow_closed_open_convention() {
        // Shelf edge exactly on a cell center: closed lower/left edge claims
        // it, open upper/right does not.
        let scene = WarehouseScene {
            width_m: 4.0,
            depth_m: 4.0,
            grid_res_m: 1.0,
            shelves: vec![Shelf { x_m: 0.5, y_m: 0.5, width_m: 2.0, depth_m: 2.0, material: 0 }],
            materials: vec![Material::new("test", 2.0)],
            ap: ApConfig::default(),
            rng_seed: 0,
        };
        let grid = rasterize_materials(&scene);
        // Centers at 0.5 and 1.5 are inside [0.5, 2.5); center 2.5 is not.
        assert_eq!(grid.eps(0, 0), 2.0);
        assert_eq!(grid.eps(1, 1), 2.0);
        assert_eq!(grid.eps(2, 2), 1.0);
    }

    #[test]
    fn rasterized_values_come_from_material_table() {
        let scene = generate_layout(11, &LayoutSpec::default()).unwrap();
        let grid = rasterize_materials(&scene);
        let mut allowed: Vec<f64> = scene.materials.iter().map(|m| m.rel_permittivity).collect();
        allowed.push(EPS_AIR);
        assert!(grid
            .eps_values()
            .iter()
            .all(|e| allowed.iter().any(|a| a == e)));
    }

    #[test]
    fn sweep_counts_and_positions() {
        let scene = generate_layout(1, &spec_30m(1, 0)).unwrap();
        let scene60 = WarehouseScene { width_m: 60.0, depth_m: 60.0, ..scene.clone() };
        assert_eq!(ap_sweep_positions(&scene60, 5.0).unwrap().len(), 144);

        let scene10 = WarehouseScene { width_m: 10.0, depth_m: 10.0, ..scene.clone() };
        let sweep = ap_sweep_positions(&scene10, 5.0).unwrap();
        let got: Vec<(f64, f64)> = sweep.iter().map(|p| (p.x_m, p.y_m)).collect();
        assert_eq!(got, vec![(2.5, 2.5), (7.5, 2.5), (2.5, 7.5), (7.5, 7.5)]);

        match ap_sweep_positions(&scene10, 20.0) {
            Err(SceneError::EmptySweep { .. }) => {}
            other => panic!("expected EmptySweep, got {other:?}"),
        }
    }

    #[test]
    fn sweep_count_equals_floor_product() {
        let scene = generate_layout(1, &spec_30m(1, 0)).unwrap();
        for (wm, dm, sp) in [(30.0, 30.0, 5.0), (37.0, 23.0, 4.0), (60.0, 60.0, 7.5)] {
            let s = WarehouseScene { width_m: wm, depth_m: dm, ..scene.clone() };
            let n = ap_sweep_positions(&s, sp).unwrap().len();
            assert_eq!(n, ((wm / sp).floor() * (dm / sp).floor()) as usize);
        }
    }
}
