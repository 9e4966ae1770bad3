//! Marching cubes on unsigned distances.
//!
//! A UDF has no sign to march on, so each cell gets pseudo-signs from
//! gradient agreement: corner 0 is the anchor, and corner `c` is negative
//! when `g_0 · g_c < 0`. An edge only counts as crossing when one of its
//! endpoints is inside the `surface_eps` band, and a table triangle is kept
//! only if all three of its edges cross. Cells near an open boundary lose
//! triangles this way, which leaves the mesh open there.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::grid::ScalarGrid;
use super::mesh::{TriangleMesh, MIN_TRIANGLE_AREA};
use super::tables::{CORNER_OFFSETS, EDGE_CORNERS, TRIANGLE_TABLE};
use crate::error::{Error, Result};

const MIN_GRADIENT_NORM: f64 = 1e-12;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ExtractionReport {
    pub cells_visited: usize,
    /// Cells with at least one corner inside the band.
    pub cells_in_band: usize,
    /// Band cells skipped because a corner gradient vanished.
    pub cells_skipped_degenerate: usize,
    /// Table triangles discarded because an edge failed the band gate.
    pub triangles_gated: usize,
    pub triangles_degenerate: usize,
    pub vertex_count: usize,
    pub triangle_count: usize,
    pub boundary_edge_count: usize,
    pub watertight: bool,
    pub surface_eps: f64,
}

/// Default band width: twice the smallest node spacing.
pub fn default_surface_eps(grid: &ScalarGrid) -> f64 {
    2.0 * grid.min_spacing()
}

pub fn udf_marching_cubes(grid: &ScalarGrid, surface_eps: f64) -> Result<(TriangleMesh, ExtractionReport)> {
    if !(surface_eps > 0.0 && surface_eps.is_finite()) {
        return Err(Error::Contract(format!("surface_eps must be positive, got {surface_eps}")));
    }
    if grid.values.len() != grid.node_count() || grid.gradients.len() != grid.node_count() {
        return Err(Error::Contract("grid storage does not match its resolution".into()));
    }
    let [nx, ny, nz] = grid.resolution;
    let mut mesh = TriangleMesh::default();
    let mut report = ExtractionReport { surface_eps, ..Default::default() };
    let mut edge_vertex: HashMap<(usize, usize), u32> = HashMap::new();

    for k in 0..nz - 1 {
        for j in 0..ny - 1 {
            for i in 0..nx - 1 {
                report.cells_visited += 1;
                let nodes: [usize; 8] = CORNER_OFFSETS.map(|o| grid.index(i + o[0], j + o[1], k + o[2]));
                let u = nodes.map(|n| grid.values[n]);
                if u.iter().all(|&v| v >= surface_eps) {
                    continue;
                }
                report.cells_in_band += 1;
                let g = nodes.map(|n| grid.gradients[n]);
                if g.iter().any(|v| v.norm() < MIN_GRADIENT_NORM) {
                    report.cells_skipped_degenerate += 1;
                    continue;
                }
                let mut case = 0usize;
                for c in 1..8 {
                    if g[0].dot(g[c]) < 0.0 {
                        case |= 1 << c;
                    }
                }
                let row = &TRIANGLE_TABLE[case];
                for tri in row.chunks_exact(3).take_while(|t| t[0] >= 0) {
                    let edges = [tri[0] as usize, tri[1] as usize, tri[2] as usize];
                    let crossing = edges.iter().all(|&e| {
                        let [a, b] = EDGE_CORNERS[e];
                        u[a].min(u[b]) < surface_eps
                    });
                    if !crossing {
                        report.triangles_gated += 1;
                        continue;
                    }
                    let idx = edges.map(|e| {
                        let [a, b] = EDGE_CORNERS[e];
                        let key = (nodes[a].min(nodes[b]), nodes[a].max(nodes[b]));
                        *edge_vertex.entry(key).or_insert_with(|| {
                            let (ua, ub) = (u[a], u[b]);
                            let t = if ua + ub > 0.0 { ua / (ua + ub) } else { 0.5 };
                            let pa = grid.position(i + CORNER_OFFSETS[a][0], j + CORNER_OFFSETS[a][1], k + CORNER_OFFSETS[a][2]);
                            let pb = grid.position(i + CORNER_OFFSETS[b][0], j + CORNER_OFFSETS[b][1], k + CORNER_OFFSETS[b][2]);
                            mesh.vertices.push(pa + t * (pb - pa));
                            (mesh.vertices.len() - 1) as u32
                        })
                    });
                    let [p0, p1, p2] = idx.map(|v| mesh.vertices[v as usize]);
                    if 0.5 * (p1 - p0).cross(p2 - p0).norm() <= MIN_TRIANGLE_AREA {
                        report.triangles_degenerate += 1;
                        continue;
                    }
                    mesh.triangles.push(idx);
                }
            }
        }
    }
    compact(&mut mesh);
    report.vertex_count = mesh.vertices.len();
    report.triangle_count = mesh.triangles.len();
    report.boundary_edge_count = mesh.boundary_edge_count();
    report.watertight = mesh.is_watertight();
    Ok((mesh, report))
}

/// Drops vertices that ended up in no triangle, keeping first-use order.
fn compact(mesh: &mut TriangleMesh) {
    let mut remap = vec![u32::MAX; mesh.vertices.len()];
    let mut verts = Vec::with_capacity(mesh.vertices.len());
    for tri in &mut mesh.triangles {
        for v in tri.iter_mut() {
            if remap[*v as usize] == u32::MAX {
                remap[*v as usize] = verts.len() as u32;
                verts.push(mesh.vertices[*v as usize]);
            }
            *v = remap[*v as usize];
        }
    }
    mesh.vertices = verts;
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::extraction::grid::{sample_grid, sample_grid_batch};
    use crate::fields::{AnalyticShape, DistanceField};
    use crate::geometry::{Point3, Vec3};

    fn cube(res: usize) -> ([usize; 3], Point3, Point3) {
        ([res; 3], Vec3::new(-1.0, -1.0, -1.0), Vec3::new(1.0, 1.0, 1.0))
    }

    #[test]
    fn constant_field_gives_empty_mesh() {
        let (r, a, b) = cube(8);
        let g = sample_grid_batch(r, a, b, |p| Ok(vec![(1.0, Vec3::Z); p.len()])).unwrap();
        let (m, rep) = udf_marching_cubes(&g, 0.01).unwrap();
        assert!(m.is_empty() && m.vertices.is_empty());
        assert_eq!(rep.cells_visited, 7 * 7 * 7);
        assert_eq!(rep.cells_in_band, 0);
        assert!(udf_marching_cubes(&g, 0.0).is_err());
    }

    #[test]
    fn sphere_is_watertight_and_in_band() {
        let f = AnalyticShape::sphere(Vec3::ZERO, 0.5).unwrap();
        let (r, a, b) = cube(32);
        let g = sample_grid(&f, r, a, b).unwrap();
        let eps = default_surface_eps(&g);
        let (m, rep) = udf_marching_cubes(&g, eps).unwrap();
        assert!(rep.watertight, "{rep:?}");
        assert_eq!(m.non_manifold_edge_count(), 0);
        m.validate().unwrap();
        for v in &m.vertices {
            assert!(f.distance(*v) < 2.0 * eps);
        }
        assert!((m.total_area() - std::f64::consts::PI).abs() < 0.05 * std::f64::consts::PI);
    }

    #[test]
    fn disc_is_open_with_rim_boundary() {
        let f = AnalyticShape::open_disc(Vec3::ZERO, Vec3::Z, 0.5).unwrap();
        let (r, a, b) = cube(32);
        let g = sample_grid(&f, r, a, b).unwrap();
        let (m, rep) = udf_marching_cubes(&g, default_surface_eps(&g)).unwrap();
        assert!(!rep.watertight);
        assert!(rep.boundary_edge_count > 0);
        let sp = g.min_spacing();
        for (p, q) in m.boundary_edges() {
            let mid = 0.5 * (m.vertices[p as usize] + m.vertices[q as usize]);
            let rim = ((mid.x * mid.x + mid.y * mid.y).sqrt() - 0.5).hypot(mid.z);
            assert!(rim < 2.0 * sp, "boundary midpoint {mid:?} is {rim} from the rim");
        }
    }

    #[test]
    fn deterministic() {
        let f = AnalyticShape::union(vec![
            AnalyticShape::sphere(Vec3::new(0.2, 0.0, 0.0), 0.3).unwrap(),
            AnalyticShape::open_disc(Vec3::new(-0.3, 0.0, 0.1), Vec3::new(0.6, 0.0, 0.8), 0.3).unwrap(),
        ])
        .unwrap();
        let (r, a, b) = cube(24);
        let g = sample_grid(&f, r, a, b).unwrap();
        let eps = default_surface_eps(&g);
        assert_eq!(udf_marching_cubes(&g, eps).unwrap(), udf_marching_cubes(&g, eps).unwrap());
    }
}
