//! Field sampling, marching cubes and pose deformation of cloth meshes.

mod table;

use std::collections::HashMap;

use rayon::prelude::*;

use crate::body::{pose_attached_points, pose_body, PoseParams, TPoseBody};
use crate::clothfield::{ClothField, ClothState, ClothType, DistanceFieldBackend, Side};
use crate::constants::APOSE_ABDUCTION_DEG;
use crate::error::{Error, Result};
use crate::geometry::{Aabb, Point, Vec3};
use crate::mesh::Mesh;
use crate::supervision::{cloth_query_box, LossWeights, QueryBox};

pub use crate::grid::ScalarGrid;

const CORNERS: [[usize; 3]; 8] = [
    [0, 0, 0],
    [1, 0, 0],
    [1, 1, 0],
    [0, 1, 0],
    [0, 0, 1],
    [1, 0, 1],
    [1, 1, 1],
    [0, 1, 1],
];
const EDGES: [[usize; 2]; 12] = [
    [0, 1],
    [1, 2],
    [2, 3],
    [3, 0],
    [4, 5],
    [5, 6],
    [6, 7],
    [7, 4],
    [0, 4],
    [1, 5],
    [2, 6],
    [3, 7],
];

fn region_of(b: &QueryBox) -> Aabb {
    Aabb {
        min: b.min(),
        max: b.max(),
    }
}

/// Field values on an `n^3` lattice spanning `region`.
pub fn sample_field(
    backend: &DistanceFieldBackend,
    state: &ClothState,
    cloth: ClothType,
    body: &TPoseBody,
    region: &QueryBox,
    resolution: usize,
) -> Result<ScalarGrid> {
    backend.check_body(body)?;
    region.validate()?;
    let field = backend.field(state.latent(cloth))?;
    sample_region(&field, region.side, &region_of(region), resolution)
}

fn sample_region(
    field: &ClothField,
    side: Option<Side>,
    region: &Aabb,
    resolution: usize,
) -> Result<ScalarGrid> {
    if resolution < 2 {
        return Err(Error::validation(
            "sampling resolution must be at least 2 per axis",
        ));
    }
    let mut grid = ScalarGrid::spanning(region, [resolution; 3])?;
    let nodes = grid.nodes();
    grid.samples = nodes
        .par_iter()
        .map(|p| field.eval_side(p, f64::INFINITY, side))
        .collect();
    Ok(grid)
}

/// Cloth query box grown by `2 d_max` on every side.
pub fn default_region(
    body: &TPoseBody,
    cloth: ClothType,
    side: Option<Side>,
    weights: &LossWeights,
) -> Result<QueryBox> {
    let mut b = cloth_query_box(body, cloth, side, APOSE_ABDUCTION_DEG)?;
    let pad = 2.0 * weights.d_max[cloth.index()];
    for a in 0..3 {
        b.corners[a] -= pad;
        b.corners[a + 3] += pad;
    }
    Ok(b)
}

/// Shared lattice description for the polygoniser.
struct Lattice {
    origin: Point,
    cell: Vec3,
    dims: [usize; 3],
}

impl Lattice {
    fn node(&self, n: [usize; 3]) -> Point {
        Point::new(
            self.origin.x + n[0] as f64 * self.cell.x,
            self.origin.y + n[1] as f64 * self.cell.y,
            self.origin.z + n[2] as f64 * self.cell.z,
        )
    }

    fn node_index(&self, n: [usize; 3]) -> usize {
        n[0] + self.dims[0] * (n[1] + self.dims[1] * n[2])
    }
}

fn cube_case(values: &[f64; 8], iso: f64) -> usize {
    let mut case = 0;
    for (i, v) in values.iter().enumerate() {
        if *v < iso {
            case |= 1 << i;
        }
    }
    case
}

/// Triangulate the given cells (ascending global order) with the corner
/// values supplied by `corners`. Vertices on shared edges are merged.
fn polygonize(
    lat: &Lattice,
    iso: f64,
    cells: &[[usize; 3]],
    corners: impl Fn([usize; 3]) -> [f64; 8],
) -> Mesh {
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    let mut edge_vertex: HashMap<(usize, u8), usize> = HashMap::new();
    for &c in cells {
        let vals = corners(c);
        let case = cube_case(&vals, iso);
        if case == 0 || case == 255 {
            continue;
        }
        let mut ids = [usize::MAX; 12];
        let row = &table::TRI_TABLE[case];
        for &e in row.iter().take_while(|&&e| e >= 0) {
            let e = e as usize;
            if ids[e] != usize::MAX {
                continue;
            }
            let [a, b] = EDGES[e];
            let na = [
                c[0] + CORNERS[a][0],
                c[1] + CORNERS[a][1],
                c[2] + CORNERS[a][2],
            ];
            let nb = [
                c[0] + CORNERS[b][0],
                c[1] + CORNERS[b][1],
                c[2] + CORNERS[b][2],
            ];
            // key the edge by its lower endpoint and axis
            let (lo, axis) = if lat.node_index(na) < lat.node_index(nb) {
                (na, (0..3).find(|&k| na[k] != nb[k]).unwrap())
            } else {
                (nb, (0..3).find(|&k| na[k] != nb[k]).unwrap())
            };
            let key = (lat.node_index(lo), axis as u8);
            ids[e] = *edge_vertex.entry(key).or_insert_with(|| {
                let (pa, pb) = (lat.node(na), lat.node(nb));
                let (va, vb) = (vals[a], vals[b]);
                let t = (iso - va) / (vb - va);
                vertices.push(pa + (pb - pa) * t);
                vertices.len() - 1
            });
        }
        for tri in row.chunks(3).take_while(|t| t[0] >= 0) {
            let f = [
                ids[tri[0] as usize],
                ids[tri[1] as usize],
                ids[tri[2] as usize],
            ];
            if f[0] != f[1] && f[1] != f[2] && f[0] != f[2] {
                faces.push(f);
            }
        }
    }
    Mesh::new(vertices, faces)
}

/// Level set `C = iso` of a sampled grid.
pub fn marching_cubes(grid: &ScalarGrid, iso: f64) -> Mesh {
    let lat = Lattice {
        origin: grid.origin,
        cell: grid.cell,
        dims: grid.dims,
    };
    let [nx, ny, nz] = grid.dims;
    let corners = |c: [usize; 3]| {
        std::array::from_fn(|i| {
            grid.get(
                c[0] + CORNERS[i][0],
                c[1] + CORNERS[i][1],
                c[2] + CORNERS[i][2],
            )
        })
    };
    let mut cells = Vec::new();
    for k in 0..nz - 1 {
        for j in 0..ny - 1 {
            for i in 0..nx - 1 {
                let case = cube_case(&corners([i, j, k]), iso);
                if case != 0 && case != 255 {
                    cells.push([i, j, k]);
                }
            }
        }
    }
    polygonize(&lat, iso, &cells, corners)
}

const BLOCK: usize = 4;

/// Marching cubes over an `n^3` lattice of a 1-Lipschitz field, sampling only
/// blocks that can reach the level set. `eval(p, cap)` must return
/// `min(C(p), cap)`. The result equals dense sampling followed by
/// `marching_cubes`.
pub fn extract_narrow_band(
    eval: impl Fn(&Point, f64) -> f64 + Sync,
    region: &Aabb,
    resolution: usize,
    iso: f64,
) -> Result<Mesh> {
    let grid = ScalarGrid::spanning(region, [resolution; 3])?;
    let lat = Lattice {
        origin: grid.origin,
        cell: grid.cell,
        dims: grid.dims,
    };
    let nb = [0, 1, 2].map(|a| (lat.dims[a] - 1).div_ceil(BLOCK));
    // values above this never move a vertex: an edge crossing the level has
    // its far end within one cell of iso
    let value_cap = iso + 2.0 * lat.cell.max();
    let blocks: Vec<[usize; 3]> = (0..nb[2])
        .flat_map(|k| (0..nb[1]).flat_map(move |j| (0..nb[0]).map(move |i| [i, j, k])))
        .collect();
    let sampled: Vec<Option<(Vec<f64>, [usize; 3])>> = blocks
        .par_iter()
        .map(|&b| {
            let lo = [0, 1, 2].map(|a| b[a] * BLOCK);
            let hi = [0, 1, 2].map(|a| (lo[a] + BLOCK).min(lat.dims[a] - 1));
            let (pl, ph) = (lat.node(lo), lat.node(hi));
            let center = Point::from((pl.coords + ph.coords) * 0.5);
            let half_diag = 0.5 * (ph - pl).norm();
            let reach = iso + half_diag;
            if eval(&center, reach * (1.0 + 1e-12)) >= reach * (1.0 + 1e-12) {
                return None;
            }
            let n = [0, 1, 2].map(|a| hi[a] - lo[a] + 1);
            let mut vals = Vec::with_capacity(n[0] * n[1] * n[2]);
            for k in 0..n[2] {
                for j in 0..n[1] {
                    for i in 0..n[0] {
                        vals.push(eval(
                            &lat.node([lo[0] + i, lo[1] + j, lo[2] + k]),
                            value_cap,
                        ));
                    }
                }
            }
            Some((vals, n))
        })
        .collect();
    let block_of = |c: [usize; 3]| [0, 1, 2].map(|a| c[a] / BLOCK);
    let block_index = |b: [usize; 3]| b[0] + nb[0] * (b[1] + nb[1] * b[2]);
    let corners = |c: [usize; 3]| -> [f64; 8] {
        let b = block_of(c);
        let (vals, n) = sampled[block_index(b)]
            .as_ref()
            .expect("cell in a sampled block");
        let l = [0, 1, 2].map(|a| c[a] - b[a] * BLOCK);
        std::array::from_fn(|i| {
            let q = [
                l[0] + CORNERS[i][0],
                l[1] + CORNERS[i][1],
                l[2] + CORNERS[i][2],
            ];
            vals[q[0] + n[0] * (q[1] + n[1] * q[2])]
        })
    };
    let mut cells = Vec::new();
    for (bi, s) in sampled.iter().enumerate() {
        if s.is_none() {
            continue;
        }
        let b = blocks[bi];
        for k in b[2] * BLOCK..((b[2] + 1) * BLOCK).min(lat.dims[2] - 1) {
            for j in b[1] * BLOCK..((b[1] + 1) * BLOCK).min(lat.dims[1] - 1) {
                for i in b[0] * BLOCK..((b[0] + 1) * BLOCK).min(lat.dims[0] - 1) {
                    let case = cube_case(&corners([i, j, k]), iso);
                    if case != 0 && case != 255 {
                        cells.push([i, j, k]);
                    }
                }
            }
        }
    }
    cells.sort_unstable_by_key(|c| (c[2], c[1], c[0]));
    Ok(polygonize(&lat, iso, &cells, corners))
}

/// One extracted garment component.
#[derive(Debug, Clone, PartialEq)]
pub struct ClothMesh {
    pub cloth_type: ClothType,
    pub side: Option<Side>,
    pub mesh: Mesh,
}

impl ClothMesh {
    /// File-name friendly identifier, e.g. `shoes_left`.
    pub fn name(&self) -> String {
        match self.side {
            Some(Side::Left) => format!("{}_left", self.cloth_type),
            Some(Side::Right) => format!("{}_right", self.cloth_type),
            None => self.cloth_type.to_string(),
        }
    }
}

/// The garment components in output order: one per type, shoes split by side.
pub fn cloth_components() -> Vec<(ClothType, Option<Side>)> {
    let mut out = Vec::new();
    for c in ClothType::ALL {
        if c == ClothType::Shoes {
            out.push((c, Some(Side::Left)));
            out.push((c, Some(Side::Right)));
        } else {
            out.push((c, None));
        }
    }
    out
}

/// Canonical cloth meshes of every component; components of garments below
/// the existence gate come back empty.
pub fn extract_cloth_meshes(
    state: &ClothState,
    backend: &DistanceFieldBackend,
    body: &TPoseBody,
    resolution: usize,
    iso: f64,
) -> Result<Vec<ClothMesh>> {
    if !(iso.is_finite() && iso > 0.0) {
        return Err(Error::Config(format!(
            "iso level must be positive, got {iso}"
        )));
    }
    backend.check_body(body)?;
    state.validate()?;
    let weights = LossWeights::default();
    let mut out = Vec::new();
    for (cloth, side) in cloth_components() {
        if !state.is_gated(cloth) {
            out.push(ClothMesh {
                cloth_type: cloth,
                side,
                mesh: Mesh::default(),
            });
            continue;
        }
        let region = region_of(&default_region(body, cloth, side, &weights)?);
        let field = backend.field(state.latent(cloth))?;
        let mesh = match &field {
            ClothField::Procedural(_) => extract_narrow_band(
                |p, cap| field.eval_side(p, cap, side),
                &region,
                resolution,
                iso,
            )?,
            ClothField::Grid(_) => {
                marching_cubes(&sample_region(&field, side, &region, resolution)?, iso)
            }
        };
        out.push(ClothMesh {
            cloth_type: cloth,
            side,
            mesh,
        });
    }
    Ok(out)
}

/// Pose the body and carry every cloth vertex along with its nearest body
/// vertex. Attachments are stored on the returned cloth meshes.
pub fn pose_deform(
    tpose: &TPoseBody,
    cloth_meshes: &[Mesh],
    theta: &PoseParams,
) -> Result<(Mesh, Vec<Mesh>)> {
    let body = pose_body(tpose, theta)?;
    let mut out = Vec::with_capacity(cloth_meshes.len());
    for m in cloth_meshes {
        let (posed, attach) = pose_attached_points(tpose, theta, &m.vertices)?;
        out.push(Mesh {
            vertices: posed,
            faces: m.faces.clone(),
            attachment: Some(attach),
        });
    }
    Ok((body, out))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sphere_grid(r: f64, n: usize, origin: Point) -> ScalarGrid {
        let region = Aabb {
            min: origin + Vec3::repeat(-0.5),
            max: origin + Vec3::repeat(0.5),
        };
        let mut g = ScalarGrid::spanning(&region, [n; 3]).unwrap();
        let nodes = g.nodes();
        g.samples = nodes
            .iter()
            .map(|p| ((p - origin).norm() - r).abs())
            .collect();
        g
    }

    fn edge_use(m: &Mesh) -> HashMap<(usize, usize), usize> {
        let mut count = HashMap::new();
        for f in &m.faces {
            for k in 0..3 {
                let (a, b) = (f[k], f[(k + 1) % 3]);
                *count.entry((a.min(b), a.max(b))).or_insert(0) += 1;
            }
        }
        count
    }

    #[test]
    fn sphere_shells_and_watertight() {
        let g = sphere_grid(0.3, 64, Point::origin());
        let m = marching_cubes(&g, 0.02);
        assert!(!m.faces.is_empty());
        let cell = g.cell.max();
        for v in &m.vertices {
            let r = v.coords.norm();
            assert!(
                (r - 0.28).abs() <= cell || (r - 0.32).abs() <= cell,
                "radius {r}"
            );
        }
        assert!(edge_use(&m).values().all(|&n| n == 2));
    }

    #[test]
    fn empty_when_above_level() {
        let mut flat = sphere_grid(0.3, 16, Point::origin());
        flat.samples.iter_mut().for_each(|s| *s = 1.0);
        assert!(marching_cubes(&flat, 0.5).is_empty());
    }

    #[test]
    fn translation_equivariance() {
        let a = marching_cubes(&sphere_grid(0.3, 24, Point::origin()), 0.05);
        let shift = Vec3::new(1.25, -0.5, 3.0);
        let b = marching_cubes(&sphere_grid(0.3, 24, Point::from(shift)), 0.05);
        assert_eq!(a.faces, b.faces);
        for (p, q) in a.vertices.iter().zip(&b.vertices) {
            assert!((p + shift - q).norm() < 1e-12);
        }
    }

    #[test]
    fn narrow_band_equals_dense() {
        let c = Point::new(0.1, -0.05, 0.02);
        let f = |p: &Point, cap: f64| ((p - c).norm() - 0.25).abs().min(cap);
        let region = Aabb {
            min: Point::new(-0.5, -0.5, -0.45),
            max: Point::new(0.52, 0.5, 0.5),
        };
        for n in [17, 30, 41] {
            let sparse = extract_narrow_band(f, &region, n, 0.03).unwrap();
            let mut g = ScalarGrid::spanning(&region, [n; 3]).unwrap();
            let nodes = g.nodes();
            g.samples = nodes.iter().map(|p| f(p, f64::INFINITY)).collect();
            let dense = marching_cubes(&g, 0.03);
            assert_eq!(sparse.faces, dense.faces);
            assert_eq!(sparse.vertices, dense.vertices);
        }
    }
}
