//! Fraction of the frame top covered by the projected sheet.

use super::WorldState;

/// Sheet triangles projected onto the frame top plane, frame-local `(x, y)`.
pub fn sheet_triangles_local(world: &WorldState) -> Vec<[[f64; 2]; 3]> {
    let local: Vec<[f64; 2]> = world
        .sheet
        .positions
        .iter()
        .map(|p| {
            let l = world.frame.to_local(p);
            [l.x, l.y]
        })
        .collect();
    world
        .sheet
        .triangles()
        .iter()
        .map(|t| [local[t[0]], local[t[1]], local[t[2]]])
        .collect()
}

/// Union area of the projected sheet inside the top rectangle, divided by
/// the rectangle's area. Cells of roughly `cell` metres are marked when
/// their centre falls in any triangle, so overlapping layers count once.
pub fn coverage(world: &WorldState, cell: f64) -> f64 {
    let grid = coverage_grid(world, cell);
    let hits = grid.cells.iter().filter(|&&c| c).count();
    hits as f64 / grid.cells.len() as f64
}

pub struct CoverageGrid {
    pub nx: usize,
    pub ny: usize,
    pub cells: Vec<bool>,
}

pub fn coverage_grid(world: &WorldState, cell: f64) -> CoverageGrid {
    assert!(cell > 0.0);
    let rect = world.frame.top_rect();
    let nx = (rect.width() / cell).ceil().max(1.0) as usize;
    let ny = (rect.height() / cell).ceil().max(1.0) as usize;
    let cw = rect.width() / nx as f64;
    let ch = rect.height() / ny as f64;
    let mut cells = vec![false; nx * ny];
    for tri in sheet_triangles_local(world) {
        let [a, b, c] = tri;
        let area2 = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]);
        if area2.abs() < 1e-14 {
            continue;
        }
        let min_x = a[0].min(b[0]).min(c[0]);
        let max_x = a[0].max(b[0]).max(c[0]);
        let min_y = a[1].min(b[1]).min(c[1]);
        let max_y = a[1].max(b[1]).max(c[1]);
        // cell centres are at (i + 0.5) * cw
        let i0 = (((min_x - rect.min[0]) / cw - 0.5).ceil().max(0.0)) as usize;
        let j0 = (((min_y - rect.min[1]) / ch - 0.5).ceil().max(0.0)) as usize;
        let i1 = ((max_x - rect.min[0]) / cw - 0.5).floor();
        let j1 = ((max_y - rect.min[1]) / ch - 0.5).floor();
        if i1 < 0.0 || j1 < 0.0 {
            continue;
        }
        let i1 = (i1 as usize).min(nx - 1);
        let j1 = (j1 as usize).min(ny - 1);
        if i0 > i1 || j0 > j1 {
            continue;
        }
        let eps = 1e-12 * area2.abs().max(1.0);
        for j in j0..=j1 {
            let y = rect.min[1] + (j as f64 + 0.5) * ch;
            for i in i0..=i1 {
                let x = rect.min[0] + (i as f64 + 0.5) * cw;
                if point_in_triangle([x, y], a, b, c, area2, eps) {
                    cells[j * nx + i] = true;
                }
            }
        }
    }
    CoverageGrid { nx, ny, cells }
}

fn point_in_triangle(p: [f64; 2], a: [f64; 2], b: [f64; 2], c: [f64; 2], area2: f64, eps: f64) -> bool {
    let s = area2.signum();
    let e0 = ((b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0])) * s;
    let e1 = ((c[0] - b[0]) * (p[1] - b[1]) - (c[1] - b[1]) * (p[0] - b[0])) * s;
    let e2 = ((a[0] - c[0]) * (p[1] - c[1]) - (a[1] - c[1]) * (p[0] - c[0])) * s;
    e0 >= -eps && e1 >= -eps && e2 >= -eps
}
