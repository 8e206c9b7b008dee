//! Independent brute-force oracles used by the acceptance and equivalence
//! suites. Everything here recomputes results from first principles and must
//! stay free of the implementation paths it checks.

#![allow(dead_code)]

use wisva::grid::Grid2;
use wisva::scene::{ApPlacement, PermittivityGrid, WarehouseScene};

/// Dense point-sampling replacement for the grid ray traversal: walks the
/// segment at 1/20-cell steps, collapses consecutive duplicates, and counts
/// contiguous non-air runs per material in first-encounter order.
pub fn sampled_ray_crossings(
    grid: &PermittivityGrid,
    a: (f64, f64),
    b: (f64, f64),
) -> Vec<(usize, u32)> {
    if a == b {
        return vec![];
    }
    let res = grid.res_m();
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let cells_spanned = (dx.abs().max(dy.abs()) / res).ceil().max(1.0);
    let steps = (cells_spanned * 20.0) as usize;

    let mut runs: Vec<(usize, u32)> = Vec::new();
    let mut current: Option<usize> = None;
    let mut last_cell = None;
    for k in 0..=steps {
        let t = k as f64 / steps as f64;
        let x = a.0 + dx * t;
        let y = a.1 + dy * t;
        let cell = grid.cell_of(x, y);
        if Some(cell) == last_cell {
            continue;
        }
        last_cell = Some(cell);
        let mat = grid.material(cell.0, cell.1);
        if let Some(m) = mat {
            if current != Some(m) {
                match runs.iter_mut().find(|(rm, _)| *rm == m) {
                    Some((_, n)) => *n += 1,
                    None => runs.push((m, 1)),
                }
            }
        }
        current = mat;
    }
    runs
}

/// Per-cell brute-force distance tensor: plain Pythagoras at cell centers.
pub fn brute_distance(ap: &ApPlacement, h: usize, w: usize, res_x: f64, res_y: f64) -> Grid2<f32> {
    Grid2::from_fn(h, w, |i, j| {
        let cx = (j as f64 + 0.5) * res_x;
        let cy = (i as f64 + 0.5) * res_y;
        let dx = cx - ap.x_m;
        let dy = cy - ap.y_m;
        ((dx * dx + dy * dy).sqrt()) as f32
    })
}

/// Per-cell brute-force permittivity channel: point-in-rectangle lookups and
/// min-max scaling over air plus the declared materials.
pub fn brute_permittivity(scene: &WarehouseScene, h: usize, w: usize, res_x: f64, res_y: f64) -> Grid2<f32> {
    let eps_min = 1.0f64;
    let eps_max = scene.materials.iter().map(|m| m.rel_permittivity).fold(1.0, f64::max);
    let span = eps_max - eps_min;
    Grid2::from_fn(h, w, |i, j| {
        let cx = (j as f64 + 0.5) * res_x;
        let cy = (i as f64 + 0.5) * res_y;
        let mut eps = 1.0;
        for s in &scene.shelves {
            if cx >= s.x_m && cx < s.x_m + s.width_m && cy >= s.y_m && cy < s.y_m + s.depth_m {
                eps = scene.materials[s.material].rel_permittivity;
            }
        }
        if span > 0.0 {
            ((eps - eps_min) / span) as f32
        } else {
            0.0
        }
    })
}

/// Per-cell brute-force AP map.
pub fn brute_ap_map(
    ap: &ApPlacement,
    h: usize,
    w: usize,
    res_x: f64,
    res_y: f64,
    scale: f32,
) -> Grid2<f32> {
    let mut t = Grid2::filled(h, w, 0f32);
    let j = ((ap.x_m / res_x).floor() as isize).clamp(0, w as isize - 1) as usize;
    let i = ((ap.y_m / res_y).floor() as isize).clamp(0, h as isize - 1) as usize;
    t.set(i, j, scale);
    t
}

/// Brute-force nearest-shelf distance via per-rectangle clamped distance.
pub fn brute_shelf_distance(scene: &WarehouseScene, h: usize, w: usize, res_x: f64, res_y: f64) -> Grid2<f32> {
    let diag = (scene.width_m * scene.width_m + scene.depth_m * scene.depth_m).sqrt();
    Grid2::from_fn(h, w, |i, j| {
        let cx = (j as f64 + 0.5) * res_x;
        let cy = (i as f64 + 0.5) * res_y;
        let mut best = diag;
        for s in &scene.shelves {
            let dx = (s.x_m - cx).max(0.0).max(cx - (s.x_m + s.width_m));
            let dy = (s.y_m - cy).max(0.0).max(cy - (s.y_m + s.depth_m));
            best = best.min((dx * dx + dy * dy).sqrt());
        }
        best as f32
    })
}
