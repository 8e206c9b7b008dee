//! Deterministic ground-truth SINR generator: free-space path loss plus
//! per-obstacle penetration losses from an exact grid ray traversal, an
//! extra distance exponent once the direct path is obstructed, and a thermal
//! noise floor. Interference from other APs enters the denominator in linear
//! power.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::Grid2;
use crate::scene::{ApPlacement, Material, PermittivityGrid, WarehouseScene};

pub const SPEED_OF_LIGHT_M_S: f64 = 299_792_458.0;

/// Path-loss distances are clamped below this to keep the near field finite.
pub const FSPL_MIN_DISTANCE_M: f64 = 0.1;

/// Heatmap values are clamped to this range; it also fixes the normalization
/// used for learning targets.
pub const SINR_CLAMP_DB: (f64, f64) = (-10.0, 60.0);

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("heatmap resolution {0} is below the 8-cell minimum")]
    InvalidResolution(usize),
    #[error("AP at ({x}, {y}) lies outside the {w}x{d} m floor")]
    ApOutsideScene { x: f64, y: f64, w: f64, d: f64 },
}

/// Channel parameters the paper delegates to its simulator; declared config
/// here, not ground truth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PropagationParams {
    pub carrier_hz: f64,
    pub bandwidth_hz: f64,
    pub noise_figure_db: f64,
    /// Extra path-loss exponent applied once the direct ray is obstructed.
    pub nlos_exponent_bonus: f64,
    pub tx_power_dbm: f64,
}

impl Default for PropagationParams {
    fn default() -> Self {
        Self {
            carrier_hz: 60e9,
            bandwidth_hz: 100e6,
            noise_figure_db: 7.0,
            nlos_exponent_bonus: 1.0,
            tx_power_dbm: 20.0,
        }
    }
}

/// Ground-truth SINR grid in dB for one AP placement.
#[derive(Debug, Clone, PartialEq)]
pub struct SinrHeatmap {
    pub values: Grid2<f32>,
    pub res_x_m: f64,
    pub res_y_m: f64,
    pub ap: ApPlacement,
}

/// Free-space path loss, dB: `20*log10(4*pi*d*f/c)` with d clamped to
/// [`FSPL_MIN_DISTANCE_M`].
pub fn fspl_db(carrier_hz: f64, distance_m: f64) -> f64 {
    let d = distance_m.max(FSPL_MIN_DISTANCE_M);
    20.0 * (4.0 * std::f64::consts::PI * d * carrier_hz / SPEED_OF_LIGHT_M_S).log10()
}

/// Thermal noise floor, dBm: `-174 + 10*log10(B) + NF`.
pub fn noise_floor_dbm(p: &PropagationParams) -> f64 {
    -174.0 + 10.0 * p.bandwidth_hz.log10() + p.noise_figure_db
}

/// Power penetration loss for one obstacle crossing. Uses the declared fixed
/// loss when present, otherwise the Fresnel slab at normal incidence:
/// `r = (1-sqrt(eps))/(1+sqrt(eps))`, two interfaces each transmitting
/// `t = 1-r^2`, so the loss is `-10*log10(t^2)`.
pub fn crossing_loss_db(material: &Material) -> f64 {
    if let Some(fixed) = material.fixed_crossing_loss_db {
        return fixed;
    }
    let sq = material.rel_permittivity.sqrt();
    let r = (1.0 - sq) / (1.0 + sq);
    let t = 1.0 - r * r;
    -10.0 * (t * t).log10()
}

#[inline]
fn dbm_to_mw(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0)
}

/// Walks every grid cell the open segment from `a` to `b` (meters) passes
/// through with positive length, in order. Exact corner hits step both axes
/// at once, so zero-length corner touches are not visited. Calls `visit` for
/// each cell including the first.
fn traverse_cells(grid: &PermittivityGrid, a: (f64, f64), b: (f64, f64), mut visit: impl FnMut(usize, usize)) {
    let res = grid.res_m();
    let (ax, ay) = (a.0 / res, a.1 / res);
    let (bx, by) = (b.0 / res, b.1 / res);
    let dx = bx - ax;
    let dy = by - ay;

    let clamp_i = |v: f64, n: usize| (v.floor() as isize).clamp(0, n as isize - 1);
    let mut cx = clamp_i(ax, grid.w());
    let mut cy = clamp_i(ay, grid.h());
    let end_x = clamp_i(bx, grid.w());
    let end_y = clamp_i(by, grid.h());

    let step_x: isize = if dx > 0.0 { 1 } else { -1 };
    let step_y: isize = if dy > 0.0 { 1 } else { -1 };
    let mut t_max_x = if dx != 0.0 {
        let next = if dx > 0.0 { cx as f64 + 1.0 } else { cx as f64 };
        (next - ax) / dx
    } else {
        f64::INFINITY
    };
    let mut t_max_y = if dy != 0.0 {
        let next = if dy > 0.0 { cy as f64 + 1.0 } else { cy as f64 };
        (next - ay) / dy
    } else {
        f64::INFINITY
    };
    let t_delta_x = if dx != 0.0 { 1.0 / dx.abs() } else { f64::INFINITY };
    let t_delta_y = if dy != 0.0 { 1.0 / dy.abs() } else { f64::INFINITY };

    visit(cx as usize, cy as usize);
    while cx != end_x || cy != end_y {
        if t_max_x < t_max_y {
            if t_max_x > 1.0 {
                break;
            }
            cx += step_x;
            t_max_x += t_delta_x;
        } else if t_max_y < t_max_x {
            if t_max_y > 1.0 {
                break;
            }
            cy += step_y;
            t_max_y += t_delta_y;
        } else {
            // Exact corner: step diagonally through it.
            if t_max_x > 1.0 || !t_max_x.is_finite() {
                break;
            }
            cx += step_x;
            cy += step_y;
            t_max_x += t_delta_x;
            t_max_y += t_delta_y;
        }
        if cx < 0 || cy < 0 || cx >= grid.w() as isize || cy >= grid.h() as isize {
            break;
        }
        visit(cx as usize, cy as usize);
    }
}

/// Collects contiguous obstacle runs along the segment into `runs` as
/// (material index, run count) in first-encounter order. Returns the material
/// of the run still active at the segment's end, if any.
fn collect_runs(
    grid: &PermittivityGrid,
    a: (f64, f64),
    b: (f64, f64),
    runs: &mut Vec<(usize, u32)>,
) -> Option<usize> {
    runs.clear();
    if a == b {
        return None;
    }
    let mut current: Option<usize> = None;
    traverse_cells(grid, a, b, |j, i| {
        let mat = grid.material(i, j);
        if let Some(m) = mat {
            if current != Some(m) {
                match runs.iter_mut().find(|(rm, _)| *rm == m) {
                    Some((_, n)) => *n += 1,
                    None => runs.push((m, 1)),
                }
            }
        }
        current = mat;
    });
    current
}

/// Obstacle runs crossed by the segment from `a` to `b` (meters), aggregated
/// per material in first-encounter order. An empty result means the path is
/// line-of-sight.
pub fn ray_crossings(grid: &PermittivityGrid, a: (f64, f64), b: (f64, f64)) -> Vec<(usize, u32)> {
    let mut runs = Vec::new();
    collect_runs(grid, a, b, &mut runs);
    runs
}

/// Crossings between a receiver point and the AP, excluding the obstacle run
/// covering the AP's own cell: the AP mounts above that rack, so the direct
/// path clears it.
pub fn ap_path_crossings_into(
    grid: &PermittivityGrid,
    from: (f64, f64),
    ap_xy: (f64, f64),
    runs: &mut Vec<(usize, u32)>,
) {
    let trailing = collect_runs(grid, from, ap_xy, runs);
    if let Some(m) = trailing {
        if let Some(pos) = runs.iter().position(|(rm, _)| *rm == m) {
            if runs[pos].1 <= 1 {
                runs.remove(pos);
            } else {
                runs[pos].1 -= 1;
            }
        }
    }
}

/// Allocating convenience wrapper around [`ap_path_crossings_into`].
pub fn ap_path_crossings(
    grid: &PermittivityGrid,
    from: (f64, f64),
    ap_xy: (f64, f64),
) -> Vec<(usize, u32)> {
    let mut runs = Vec::new();
    ap_path_crossings_into(grid, from, ap_xy, &mut runs);
    runs
}

/// Received power at a point from one transmitter, dBm.
fn rx_power_dbm(
    grid: &PermittivityGrid,
    crossing_losses: &[f64],
    tx: &ApPlacement,
    nlos_exponent_bonus: f64,
    x: f64,
    y: f64,
    runs: &mut Vec<(usize, u32)>,
) -> f64 {
    let dx = x - tx.x_m;
    let dy = y - tx.y_m;
    let slant = (dx * dx + dy * dy + tx.height_m * tx.height_m).sqrt();
    let mut power = tx.tx_power_dbm - fspl_db(tx.carrier_hz, slant);
    ap_path_crossings_into(grid, (x, y), (tx.x_m, tx.y_m), runs);
    if !runs.is_empty() {
        for &(m, n) in runs.iter() {
            power -= crossing_losses[m] * n as f64;
        }
        // Obstructed paths decay with an extra exponent; the reference
        // distance is clamped to 1 m so the term never turns into a gain.
        power -= nlos_exponent_bonus * 10.0 * slant.max(1.0).log10();
    }
    power
}

/// SINR heatmap on a pre-rasterized scene. See [`sinr_heatmap`].
pub fn sinr_heatmap_on_grid(
    scene: &WarehouseScene,
    grid: &PermittivityGrid,
    ap: &ApPlacement,
    others: &[ApPlacement],
    p: &PropagationParams,
    out_res: usize,
) -> Result<SinrHeatmap, OracleError> {
    if out_res < 8 {
        return Err(OracleError::InvalidResolution(out_res));
    }
    if !scene.contains(ap.x_m, ap.y_m) {
        return Err(OracleError::ApOutsideScene {
            x: ap.x_m,
            y: ap.y_m,
            w: scene.width_m,
            d: scene.depth_m,
        });
    }

    let losses: Vec<f64> = scene.materials.iter().map(crossing_loss_db).collect();
    let res_x = scene.width_m / out_res as f64;
    let res_y = scene.depth_m / out_res as f64;
    let noise_mw = dbm_to_mw(noise_floor_dbm(p));
    let (clamp_lo, clamp_hi) = SINR_CLAMP_DB;

    let mut values = Grid2::filled(out_res, out_res, 0f32);
    let mut runs = Vec::new();
    for i in 0..out_res {
        let cy = (i as f64 + 0.5) * res_y;
        for j in 0..out_res {
            let cx = (j as f64 + 0.5) * res_x;
            let signal = rx_power_dbm(grid, &losses, ap, p.nlos_exponent_bonus, cx, cy, &mut runs);
            let mut denom_mw = noise_mw;
            for other in others {
                let interf =
                    rx_power_dbm(grid, &losses, other, p.nlos_exponent_bonus, cx, cy, &mut runs);
                denom_mw += dbm_to_mw(interf);
            }
            let s_db = signal - 10.0 * denom_mw.log10();
            values.set(i, j, s_db.clamp(clamp_lo, clamp_hi) as f32);
        }
    }

    Ok(SinrHeatmap { values, res_x_m: res_x, res_y_m: res_y, ap: *ap })
}

/// Generates the ground-truth SINR heatmap for one AP over an `out_res` x
/// `out_res` grid covering the floor. Per cell, received power is
/// `tx - fspl(slant) - sum(crossing losses) - nlos bonus`, and SINR divides
/// it by noise plus interference from `others` in linear power. Values are
/// clamped to [`SINR_CLAMP_DB`].
pub fn sinr_heatmap(
    scene: &WarehouseScene,
    ap: &ApPlacement,
    others: &[ApPlacement],
    p: &PropagationParams,
    out_res: usize,
) -> Result<SinrHeatmap, OracleError> {
    let grid = crate::scene::rasterize_materials(scene);
    sinr_heatmap_on_grid(scene, &grid, ap, others, p, out_res)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{ApConfig, Material, Shelf, WarehouseScene};

    fn empty_scene(width: f64, depth: f64, res: f64) -> WarehouseScene {
        WarehouseScene {
            width_m: width,
            depth_m: depth,
            grid_res_m: res,
            shelves: vec![],
            materials: crate::scene::default_materials(),
            ap: ApConfig::default(),
            rng_seed: 0,
        }
    }

    fn scene_with_shelves(width: f64, res: f64, shelves: Vec<Shelf>, materials: Vec<Material>) -> WarehouseScene {
        WarehouseScene {
            width_m: width,
            depth_m: width,
            grid_res_m: res,
            shelves,
            materials,
            ap: ApConfig::default(),
            rng_seed: 0,
        }
    }

    #[test]
    fn fspl_reference_values() {
        assert!((fspl_db(60e9, 1.0) - 68.0).abs() < 0.05);
        for (f, d) in [(60e9, 1.0), (2.4e9, 3.7), (5.8e9, 11.0)] {
            let delta = fspl_db(f, 2.0 * d) - fspl_db(f, d);
            assert!((delta - 6.02).abs() < 0.01, "doubling at f={f} d={d} gave {delta}");
        }
        assert_eq!(fspl_db(60e9, 0.01), fspl_db(60e9, 0.1));
    }

    #[test]
    fn noise_floor_reference_values() {
        let p = PropagationParams::default();
        assert!((noise_floor_dbm(&p) - (-87.0)).abs() < 0.01);
        let unit = PropagationParams { bandwidth_hz: 1.0, noise_figure_db: 0.0, ..p };
        assert!((noise_floor_dbm(&unit) - (-174.0)).abs() < 1e-9);
        let nf0 = PropagationParams { noise_figure_db: 0.0, ..p };
        assert!((noise_floor_dbm(&nf0) - (-94.0)).abs() < 0.01);
    }

    #[test]
    fn crossing_loss_values() {
        assert_eq!(crossing_loss_db(&Material::new("air", 1.0)), 0.0);
        let glass = Material::new("eps4", 4.0);
        assert!((crossing_loss_db(&glass) - 1.02).abs() < 0.01);
        let metal = Material::with_fixed_loss("metal", 8.0, 15.0);
        assert_eq!(crossing_loss_db(&metal), 15.0);
    }

    #[test]
    fn ray_zero_length_is_empty() {
        let scene = scene_with_shelves(
            8.0,
            1.0,
            vec![Shelf { x_m: 2.0, y_m: 2.0, width_m: 4.0, depth_m: 4.0, material: 0 }],
            vec![Material::new("wood", 2.0)],
        );
        let grid = crate::scene::rasterize_materials(&scene);
        assert!(ray_crossings(&grid, (4.0, 4.0), (4.0, 4.0)).is_empty());
    }

    #[test]
    fn ray_through_one_shelf_counts_once() {
        // 8x8 grid at 1 m cells, shelf spanning x in [2, 6) on row y=4.
        let scene = scene_with_shelves(
            8.0,
            1.0,
            vec![Shelf { x_m: 2.0, y_m: 4.0, width_m: 4.0, depth_m: 1.0, material: 0 }],
            vec![Material::new("wood", 2.0)],
        );
        let grid = crate::scene::rasterize_materials(&scene);
        // Axis-parallel ray along y=4.5 crosses the 4-cell run once.
        let runs = ray_crossings(&grid, (0.5, 4.5), (7.5, 4.5));
        assert_eq!(runs, vec![(0, 1)]);
        // Perpendicular ray that never meets the shelf.
        assert!(ray_crossings(&grid, (0.5, 0.5), (7.5, 0.5)).is_empty());
    }

    #[test]
    fn ray_through_two_separated_shelves_counts_twice() {
        let scene = scene_with_shelves(
            8.0,
            1.0,
            vec![
                Shelf { x_m: 1.0, y_m: 3.0, width_m: 2.0, depth_m: 1.0, material: 0 },
                Shelf { x_m: 4.0, y_m: 3.0, width_m: 2.0, depth_m: 1.0, material: 0 },
            ],
            vec![Material::new("wood", 2.0)],
        );
        let grid = crate::scene::rasterize_materials(&scene);
        let runs = ray_crossings(&grid, (0.5, 3.5), (7.5, 3.5));
        assert_eq!(runs, vec![(0, 2)]);
    }

    #[test]
    fn adjacent_runs_of_different_materials_count_separately() {
        let scene = scene_with_shelves(
            8.0,
            1.0,
            vec![
                Shelf { x_m: 2.0, y_m: 3.0, width_m: 2.0, depth_m: 1.0, material: 0 },
                Shelf { x_m: 4.0, y_m: 3.0, width_m: 2.0, depth_m: 1.0, material: 1 },
            ],
            vec![Material::new("wood", 2.0), Material::new("concrete", 5.24)],
        );
        let grid = crate::scene::rasterize_materials(&scene);
        let runs = ray_crossings(&grid, (0.5, 3.5), (7.5, 3.5));
        assert_eq!(runs, vec![(0, 1), (1, 1)]);
    }

    #[test]
    fn ap_path_excludes_run_over_the_ap() {
        let scene = scene_with_shelves(
            8.0,
            1.0,
            vec![Shelf { x_m: 3.0, y_m: 3.0, width_m: 2.0, depth_m: 2.0, material: 0 }],
            vec![Material::new("wood", 2.0)],
        );
        let grid = crate::scene::rasterize_materials(&scene);
        let ap = (4.0, 4.0); // inside the shelf footprint
        assert!(ap_path_crossings(&grid, (0.5, 4.0), ap).is_empty());
        // Plain ray_crossings still sees the run.
        assert_eq!(ray_crossings(&grid, (0.5, 4.0), ap), vec![(0, 1)]);
        // A second, separated shelf still counts on the AP path.
        let scene2 = scene_with_shelves(
            8.0,
            1.0,
            vec![
                Shelf { x_m: 3.0, y_m: 3.0, width_m: 2.0, depth_m: 2.0, material: 0 },
                Shelf { x_m: 0.9, y_m: 3.0, width_m: 1.0, depth_m: 2.0, material: 0 },
            ],
            vec![Material::new("wood", 2.0)],
        );
        let grid2 = crate::scene::rasterize_materials(&scene2);
        assert_eq!(ap_path_crossings(&grid2, (0.25, 4.0), ap), vec![(0, 1)]);
    }

    #[test]
    fn sinr_composes_fspl_and_noise() {
        // Height-0 AP so the slant equals the planar 1 m offset; cell centers
        // land 1 m from the AP on a 16-cell, 8 m floor.
        let mut scene = empty_scene(8.0, 8.0, 0.5);
        scene.ap = ApConfig { height_m: 0.0, tx_power_dbm: 20.0, carrier_hz: 60e9 };
        let ap = ApPlacement::new(3.75, 3.75, &scene.ap);
        let p = PropagationParams::default();
        let h = sinr_heatmap(&scene, &ap, &[], &p, 16).unwrap();
        // Cell (7, 5) center = (2.75, 3.75): exactly 1 m away.
        let got = h.values.get(7, 5);
        assert!((got - 39.0).abs() < 0.1, "expected ~39 dB, got {got}");
    }

    #[test]
    fn shelf_shadow_costs_crossing_loss_plus_nlos_bonus() {
        // AP at the center; one eps=4 shelf west of it. Compare the shadowed
        // west cell with its mirror east cell at the same distance.
        let shelf = Shelf { x_m: 4.0, y_m: 7.0, width_m: 2.0, depth_m: 2.0, material: 0 };
        let scene = scene_with_shelves(16.0, 0.5, vec![shelf], vec![Material::new("eps4", 4.0)]);
        let mut scene = scene;
        scene.ap = ApConfig { height_m: 0.0, tx_power_dbm: 20.0, carrier_hz: 60e9 };
        let ap = ApPlacement::new(8.25, 8.25, &scene.ap);
        let p = PropagationParams::default();
        let h = sinr_heatmap(&scene, &ap, &[], &p, 32).unwrap();
        // Row 16 has centers at y = 8.25: cell (16, 2) at x = 1.25 (behind the
        // shelf), cell (16, 30) at x = 15.25 (mirror, clear).
        let shadowed = h.values.get(16, 2) as f64;
        let clear = h.values.get(16, 30) as f64;
        let eps4 = Material::new("eps4", 4.0);
        let d = 7.0f64; // planar offset of both cells
        let expected_gap = crossing_loss_db(&eps4) + 1.0 * 10.0 * d.max(1.0).log10();
        assert!(
            (clear - shadowed - expected_gap).abs() < 1e-3,
            "gap {} vs expected {expected_gap}",
            clear - shadowed
        );
    }

    #[test]
    fn interference_strictly_lowers_sinr() {
        let mut scene = empty_scene(16.0, 16.0, 0.5);
        scene.ap = ApConfig { height_m: 0.0, tx_power_dbm: 20.0, carrier_hz: 60e9 };
        let ap = ApPlacement::new(4.25, 8.25, &scene.ap);
        let other = ApPlacement::new(12.25, 8.25, &scene.ap);
        let p = PropagationParams::default();
        let quiet = sinr_heatmap(&scene, &ap, &[], &p, 16).unwrap();
        let noisy = sinr_heatmap(&scene, &ap, &[other], &p, 16).unwrap();
        let mut lowered = 0;
        for (a, b) in quiet.values.values().iter().zip(noisy.values.values()) {
            assert!(b <= a);
            if b < a {
                lowered += 1;
            }
        }
        assert!(lowered > 0);
        let mid = noisy.values.get(8, 8);
        let mid_quiet = quiet.values.get(8, 8);
        assert!(mid < mid_quiet);
    }

    #[test]
    fn empty_scene_sinr_non_increasing_with_distance() {
        let scene = empty_scene(30.0, 30.0, 0.5);
        let ap = ApPlacement::new(15.2, 15.2, &scene.ap);
        let p = PropagationParams::default();
        let h = sinr_heatmap(&scene, &ap, &[], &p, 32).unwrap();
        let res = 30.0 / 32.0;
        let mut cells: Vec<(f64, f32)> = Vec::new();
        for i in 0..32 {
            for j in 0..32 {
                let cx = (j as f64 + 0.5) * res;
                let cy = (i as f64 + 0.5) * res;
                let d = ((cx - ap.x_m).powi(2) + (cy - ap.y_m).powi(2)).sqrt();
                cells.push((d, h.values.get(i, j)));
            }
        }
        cells.sort_by(|a, b| a.0.total_cmp(&b.0));
        for w in cells.windows(2) {
            assert!(w[1].1 <= w[0].1 + 1e-4, "SINR increased with distance: {w:?}");
        }
    }

    #[test]
    fn mirrored_scene_mirrors_heatmap_exactly() {
        // Dyadic geometry so mirrored coordinates are exact.
        let width = 16.0;
        let shelf = Shelf { x_m: 2.0, y_m: 6.0, width_m: 3.0, depth_m: 2.0, material: 0 };
        let mirrored_shelf = Shelf { x_m: width - 2.0 - 3.0, ..shelf.clone() };
        let materials = vec![Material::new("wood", 2.0)];
        let scene = scene_with_shelves(width, 0.5, vec![shelf], materials.clone());
        let mirror = scene_with_shelves(width, 0.5, vec![mirrored_shelf], materials);
        let ap = ApPlacement::new(5.25, 8.25, &scene.ap);
        let ap_m = ApPlacement::new(width - 5.25, 8.25, &scene.ap);
        let p = PropagationParams::default();
        let out = 32;
        let h = sinr_heatmap(&scene, &ap, &[], &p, out).unwrap();
        let hm = sinr_heatmap(&mirror, &ap_m, &[], &p, out).unwrap();
        for i in 0..out {
            for j in 0..out {
                assert_eq!(
                    h.values.get(i, j),
                    hm.values.get(i, out - 1 - j),
                    "mismatch at ({i}, {j})"
                );
            }
        }
    }

    #[test]
    fn nlos_cells_sit_strictly_below_the_clear_value() {
        let shelf = Shelf { x_m: 6.0, y_m: 2.0, width_m: 1.5, depth_m: 8.0, material: 0 };
        let scene = scene_with_shelves(16.0, 0.25, vec![shelf], vec![Material::new("wood", 2.0)]);
        let ap = ApPlacement::new(3.3, 7.3, &scene.ap);
        let p = PropagationParams::default();
        let out = 32;
        let h = sinr_heatmap(&scene, &ap, &[], &p, out).unwrap();
        let grid = crate::scene::rasterize_materials(&scene);
        let res = 16.0 / out as f64;
        let (lo, hi) = SINR_CLAMP_DB;
        for i in 0..out {
            for j in 0..out {
                let cx = (j as f64 + 0.5) * res;
                let cy = (i as f64 + 0.5) * res;
                let slant = ((cx - ap.x_m).powi(2) + (cy - ap.y_m).powi(2) + ap.height_m.powi(2)).sqrt();
                let clear = ap.tx_power_dbm - fspl_db(ap.carrier_hz, slant) - noise_floor_dbm(&p);
                let clear = clear.clamp(lo, hi) as f32;
                let got = h.values.get(i, j);
                let obstructed = !ap_path_crossings(&grid, (cx, cy), (ap.x_m, ap.y_m)).is_empty();
                if obstructed {
                    assert!(got < clear, "NLOS cell ({i},{j}) not below clear value");
                } else {
                    assert_eq!(got, clear, "LOS cell ({i},{j}) deviates from clear value");
                }
            }
        }
    }

    #[test]
    fn heatmaps_are_deterministic() {
        let spec = crate::scene::LayoutSpec {
            width_m: 20.0,
            depth_m: 20.0,
            min_shelves: 5,
            ..Default::default()
        };
        let scene = crate::scene::generate_layout(9, &spec).unwrap();
        let ap = ApPlacement::new(10.1, 9.9, &scene.ap);
        let p = PropagationParams::default();
        let a = sinr_heatmap(&scene, &ap, &[], &p, 16).unwrap();
        let b = sinr_heatmap(&scene, &ap, &[], &p, 16).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_small_resolution_and_outside_ap() {
        let scene = empty_scene(8.0, 8.0, 0.5);
        let ap = ApPlacement::new(4.0, 4.0, &scene.ap);
        let p = PropagationParams::default();
        assert!(matches!(
            sinr_heatmap(&scene, &ap, &[], &p, 4),
            Err(OracleError::InvalidResolution(4))
        ));
        let outside = ApPlacement::new(9.0, 4.0, &scene.ap);
        assert!(matches!(
            sinr_heatmap(&scene, &outside, &[], &p, 16),
            Err(OracleError::ApOutsideScene { .. })
        ));
    }
}
