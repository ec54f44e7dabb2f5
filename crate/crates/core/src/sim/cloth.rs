//! Inextensible-cloth constraint projection and the wrist-force proxy.
//!
//! Edges act like strings: a projection only fires when an edge is longer
//! than its rest length, so the sheet is free to fold and bunch.

use super::SheetState;

/// Relative extensions below this are round-off and count as slack.
const STRAIN_EPS: f64 = 1e-9;

fn edge_strain(len: f64, rest: f64) -> f64 {
    let s = (len - rest) / rest;
    if s > STRAIN_EPS {
        s
    } else {
        0.0
    }
}

/// Runs `iterations` Gauss-Seidel sweeps over all edges. Pinned and
/// anchored particles never move.
pub fn relax_constraints(sheet: &SheetState, iterations: usize) -> SheetState {
    relax_with_held(sheet, iterations, &[])
}

/// Same as [`relax_constraints`] but additionally treats `held` particles
/// (e.g. one in the gripper) as immovable.
pub fn relax_with_held(sheet: &SheetState, iterations: usize, held: &[usize]) -> SheetState {
    relax_weighted(sheet, iterations, held, 1.0)
}

/// Gauss-Seidel with every correction scaled by `omega`. Values in
/// (1, 2) over-relax, which speeds up straightening of an almost taut
/// sheet. Overshoot only shortens edges, and shortened edges are slack.
pub fn relax_weighted(sheet: &SheetState, iterations: usize, held: &[usize], omega: f64) -> SheetState {
    assert!(omega > 0.0 && omega < 2.0, "relaxation weight must be in (0, 2)");
    assert!(iterations >= 1, "relaxation needs at least one sweep");
    let mut out = sheet.clone();
    let inv_mass: Vec<f64> = (0..sheet.len())
        .map(|i| {
            if sheet.pinned[i] || sheet.anchored[i] || held.contains(&i) {
                0.0
            } else {
                1.0
            }
        })
        .collect();
    let edges = sheet.edges();
    for _ in 0..iterations {
        for e in &edges {
            let wa = inv_mass[e.a];
            let wb = inv_mass[e.b];
            let wsum = wa + wb;
            if wsum == 0.0 {
                continue;
            }
            let d = out.positions[e.b] - out.positions[e.a];
            let len = d.norm();
            if len <= e.rest || len == 0.0 {
                continue;
            }
            let corr = d * (omega * (len - e.rest) / len);
            out.positions[e.a] += corr * (wa / wsum);
            out.positions[e.b] -= corr * (wb / wsum);
        }
    }
    out
}

/// Simulated wrist force at a particle: `k * sum(max(0, len - rest) / rest)`
/// over incident edges.
pub fn tension_force(sheet: &SheetState, particle: usize, k_tension: f64) -> f64 {
    sheet
        .incident_edges(particle)
        .iter()
        .map(|e| {
            edge_strain((sheet.positions[e.b] - sheet.positions[e.a]).norm(), e.rest)
        })
        .sum::<f64>()
        * k_tension
}

/// Largest relative over-extension of any edge (0 when all edges are slack).
pub fn max_strain(sheet: &SheetState) -> f64 {
    sheet
        .edges()
        .iter()
        .map(|e| {
            edge_strain((sheet.positions[e.b] - sheet.positions[e.a]).norm(), e.rest)
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Vec3;
    use crate::sim::{SimConfig, WorldState};

    fn flat() -> SheetState {
        WorldState::spread(&SimConfig::default()).sheet
    }

    #[test]
    fn feasible_sheet_is_a_fixed_point() {
        let s = flat();
        let r = relax_constraints(&s, 30);
        for (a, b) in s.positions.iter().zip(&r.positions) {
            assert!((a - b).norm() < 1e-9);
        }
    }

    #[test]
    fn displaced_particle_relaxes_below_five_percent() {
        let s0 = flat();
        let mut s = s0.clone();
        let p = s.index(4, 4);
        s.positions[p].x += s.rest_u / 2.0;
        assert!(max_strain(&s) > 0.4);
        let r = relax_constraints(&s, 30);
        assert!(max_strain(&r) <= 0.05, "strain {}", max_strain(&r));
        for i in 0..s.cols {
            assert_eq!(r.positions[i], s0.positions[i]);
        }
    }

    #[test]
    fn zero_force_at_rest() {
        let s = flat();
        for i in 0..s.len() {
            assert_eq!(tension_force(&s, i, 40.0), 0.0);
        }
    }

    #[test]
    fn one_edge_at_double_rest_gives_k() {
        let mut s = flat();
        let corner = s.index(s.rows - 1, 0);
        let neighbour = s.positions[corner + 1];
        s.positions[corner] = neighbour - Vec3::new(2.0 * s.rest_u, 0.0, 0.0);
        // keep the length-wise edge slack so only one edge is extended
        s.positions[corner - s.cols] = s.positions[corner] - Vec3::new(0.0, 0.5 * s.rest_v, 0.0);
        assert!((tension_force(&s, corner, 40.0) - 40.0).abs() < 1e-9);
    }
}
