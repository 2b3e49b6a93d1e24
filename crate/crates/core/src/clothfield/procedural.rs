//! Procedural garment fields built from the body surface.
//!
//! Each garment owns a subset of body triangles. Every vertex carries a
//! coverage function `phi(params)`; the garment is the part of those
//! triangles where the linearly interpolated `phi` is non-positive, pushed
//! outward by the decoded thickness along vertex normals. Clipping happens
//! per query so the boundary moves continuously with the coverage values.
//! The skirt additionally owns a flared elliptic band around both legs.

use crate::body::{joint, BodyPart, TPoseBody};
use crate::error::{Error, Result};
use crate::geometry::{
    closest_point_on_segment, point_triangle_distance_sq, Aabb, Bvh, Point, Vec3,
};

use super::{
    decode_latent, ClothLatent, ClothParams, ClothType, Side, MIN_THICKNESS, N_CLOTHES,
    THICKNESS_RANGE,
};

const BAND_RINGS: usize = 16;
const BAND_SEGMENTS: usize = 32;
const BAND_FLARE: f64 = 0.15;

#[derive(Debug, Clone, Copy)]
enum Cover {
    Always,
    Never,
    /// Covered while `arc <= scale * coverage[dim]`.
    UpTo {
        arc: f64,
        dim: usize,
        scale: f64,
    },
    /// Covered while `arc >= 1 - scale * coverage[dim]`.
    From {
        arc: f64,
        dim: usize,
        scale: f64,
    },
}

impl Cover {
    fn phi(self, coverage: &[f64; 2]) -> f64 {
        match self {
            Cover::Always => -1.0,
            Cover::Never => 1.0,
            Cover::UpTo { arc, dim, scale } => arc - scale * coverage[dim],
            Cover::From { arc, dim, scale } => 1.0 - scale * coverage[dim] - arc,
        }
    }
}

#[derive(Debug, Clone)]
struct RegionPart {
    side: Option<Side>,
    tris: Vec<[usize; 3]>,
    bvh: Bvh,
}

#[derive(Debug, Clone)]
struct Region {
    cover: Vec<Cover>,
    parts: Vec<RegionPart>,
}

/// Procedural stand-in for a learned garment decoder, bound to one shaped body.
#[derive(Debug, Clone)]
pub struct ProceduralBackend {
    vertices: Vec<Point>,
    normals: Vec<Vec3>,
    regions: Vec<Region>,
    pelvis: Point,
    hip_y: f64,
    ankle_y: f64,
    skirt_radii: [f64; 2],
}

/// Arc position of `p` along a joint polyline, 0 at the first joint and 1
/// at the last, extrapolated linearly past either end.
fn chain_arc(p: &Point, chain: &[Point]) -> f64 {
    let lens: Vec<f64> = chain.windows(2).map(|w| (w[1] - w[0]).norm()).collect();
    let total: f64 = lens.iter().sum();
    let mut best = (f64::INFINITY, 0.0);
    let mut before = 0.0;
    for (s, w) in chain.windows(2).enumerate() {
        let d = w[1] - w[0];
        let len2 = d.norm_squared();
        let mut u = if len2 > 0.0 {
            (p - w[0]).dot(&d) / len2
        } else {
            0.0
        };
        let first = s == 0;
        let last = s + 2 == chain.len();
        let clamped = u.clamp(0.0, 1.0);
        let dist = (closest_point_on_segment(p, &w[0], &w[1]) - p).norm_squared();
        if !((first && u < 0.0) || (last && u > 1.0)) {
            u = clamped;
        }
        if dist < best.0 {
            best = (dist, (before + u * lens[s]) / total);
        }
        before += lens[s];
    }
    best.1
}

fn side_of(part: BodyPart) -> Option<Side> {
    match part {
        BodyPart::LeftArm | BodyPart::LeftLeg | BodyPart::LeftFoot => Some(Side::Left),
        BodyPart::RightArm | BodyPart::RightLeg | BodyPart::RightFoot => Some(Side::Right),
        _ => None,
    }
}

impl ProceduralBackend {
    pub fn new(body: &TPoseBody) -> Result<Self> {
        let model = &body.model;
        let mesh = body.mesh();
        mesh.validate()?;
        let normals = mesh.vertex_normals();
        let parts = model.vertex_parts();
        let j = &body.joints;

        let chest_y = j[joint::CHEST].y;
        let torso_min = body
            .vertices
            .iter()
            .zip(&parts)
            .filter(|(_, p)| **p == BodyPart::Torso)
            .map(|(v, _)| v.y)
            .fold(f64::INFINITY, f64::min);
        if !(torso_min < chest_y) {
            return Err(Error::Degenerate(
                "torso has no vertices below the chest joint".into(),
            ));
        }
        let torso_down = |v: &Point| (chest_y - v.y) / (chest_y - torso_min);
        let arm = |side: Side| match side {
            Side::Left => [j[joint::L_SHOULDER], j[joint::L_ELBOW], j[joint::L_WRIST]],
            Side::Right => [j[joint::R_SHOULDER], j[joint::R_ELBOW], j[joint::R_WRIST]],
        };
        let leg = |side: Side| match side {
            Side::Left => [j[joint::L_HIP], j[joint::L_KNEE], j[joint::L_ANKLE]],
            Side::Right => [j[joint::R_HIP], j[joint::R_KNEE], j[joint::R_ANKLE]],
        };

        let mut covers: Vec<Vec<Cover>> = vec![Vec::with_capacity(body.vertices.len()); N_CLOTHES];
        for (v, part) in body.vertices.iter().zip(&parts) {
            let side = side_of(*part);
            let arm_arc = side.map(|s| chain_arc(v, &arm(s)));
            let leg_arc = side.map(|s| chain_arc(v, &leg(s)));
            let down = torso_down(v);
            let up = 1.0 - down;
            use Cover::*;
            let (upper, coat, pants, skirt, shoes) = match part {
                BodyPart::Head => (Never, Never, Never, Never, Never),
                BodyPart::Torso => (
                    UpTo {
                        arc: down,
                        dim: 1,
                        scale: 1.0,
                    },
                    Always,
                    UpTo {
                        arc: up,
                        dim: 1,
                        scale: 1.0,
                    },
                    UpTo {
                        arc: up,
                        dim: 1,
                        scale: 1.0,
                    },
                    Never,
                ),
                BodyPart::LeftArm | BodyPart::RightArm => {
                    let arc = arm_arc.unwrap();
                    let sleeve = UpTo {
                        arc,
                        dim: 0,
                        scale: 1.0,
                    };
                    (sleeve, sleeve, Never, Never, Never)
                }
                BodyPart::LeftLeg | BodyPart::RightLeg => {
                    let arc = leg_arc.unwrap();
                    (
                        Never,
                        UpTo {
                            arc,
                            dim: 1,
                            scale: 0.5,
                        },
                        UpTo {
                            arc,
                            dim: 0,
                            scale: 1.0,
                        },
                        Never,
                        From {
                            arc,
                            dim: 0,
                            scale: 0.3,
                        },
                    )
                }
                BodyPart::LeftFoot | BodyPart::RightFoot => {
                    let arc = leg_arc.unwrap();
                    (
                        Never,
                        Never,
                        UpTo {
                            arc,
                            dim: 0,
                            scale: 1.0,
                        },
                        Never,
                        Always,
                    )
                }
            };
            for (c, cover) in [upper, coat, pants, skirt, shoes].into_iter().enumerate() {
                covers[c].push(cover);
            }
        }

        let inflate = MIN_THICKNESS + THICKNESS_RANGE + 1e-9;
        let regions = ClothType::ALL
            .iter()
            .zip(covers)
            .map(|(&cloth, cover)| {
                let mut by_side: Vec<(Option<Side>, Vec<[usize; 3]>)> = Vec::new();
                for f in &model.faces {
                    if f.iter().all(|&i| matches!(cover[i], Cover::Never)) {
                        continue;
                    }
                    let side = if cloth == ClothType::Shoes {
                        side_of(parts[f[0]])
                    } else {
                        None
                    };
                    match by_side.iter_mut().find(|(s, _)| *s == side) {
                        Some((_, tris)) => tris.push(*f),
                        None => by_side.push((side, vec![*f])),
                    }
                }
                let parts = by_side
                    .into_iter()
                    .map(|(side, tris)| {
                        let boxes: Vec<Aabb> = tris
                            .iter()
                            .map(|t| {
                                Aabb::from_points(t.iter().map(|&i| &body.vertices[i]))
                                    .inflate(inflate)
                            })
                            .collect();
                        RegionPart {
                            side,
                            bvh: Bvh::build(&boxes),
                            tris,
                        }
                    })
                    .collect();
                Region { cover, parts }
            })
            .collect();

        let pelvis = j[joint::PELVIS];
        let hip_y = 0.5 * (j[joint::L_HIP].y + j[joint::R_HIP].y);
        let ankle_y = 0.5 * (j[joint::L_ANKLE].y + j[joint::R_ANKLE].y);
        let mut skirt_radii = [0.0f64; 2];
        for (v, part) in body.vertices.iter().zip(&parts) {
            let in_band = match part {
                BodyPart::LeftLeg | BodyPart::RightLeg | BodyPart::Torso => {
                    v.y <= hip_y && v.y >= ankle_y
                }
                _ => false,
            };
            if in_band {
                skirt_radii[0] = skirt_radii[0].max((v.x - pelvis.x).abs());
                skirt_radii[1] = skirt_radii[1].max((v.z - pelvis.z).abs());
            }
        }

        Ok(ProceduralBackend {
            vertices: body.vertices.clone(),
            normals,
            regions,
            pelvis,
            hip_y,
            ankle_y,
            skirt_radii,
        })
    }

    pub fn check_body(&self, body: &TPoseBody) -> Result<()> {
        if body.vertices != self.vertices {
            return Err(Error::validation(
                "procedural backend was built for a different body",
            ));
        }
        Ok(())
    }

    pub fn prepare(&self, latent: &ClothLatent) -> Result<ProceduralField<'_>> {
        let params = decode_latent(latent)?;
        Ok(self.prepare_params(latent.cloth_type, params))
    }

    pub fn prepare_params(&self, cloth: ClothType, params: ClothParams) -> ProceduralField<'_> {
        let region = &self.regions[cloth.index()];
        let phi: Vec<f64> = region
            .cover
            .iter()
            .map(|c| c.phi(&params.coverage))
            .collect();
        let t = params.thickness;
        let offset: Vec<Point> = self
            .vertices
            .iter()
            .zip(&self.normals)
            .map(|(v, n)| v + n * t)
            .collect();
        let band = (cloth == ClothType::Skirt).then(|| self.skirt_band(&params));
        ProceduralField {
            backend: self,
            cloth,
            params,
            phi,
            offset,
            band,
        }
    }

    fn skirt_band(&self, params: &ClothParams) -> Band {
        let top = self.hip_y;
        let drop = params.coverage[0] * (self.hip_y - self.ankle_y);
        let mut vertices = Vec::with_capacity((BAND_RINGS + 1) * BAND_SEGMENTS);
        for m in 0..=BAND_RINGS {
            let fall = drop * m as f64 / BAND_RINGS as f64;
            let y = top - fall;
            let rx = self.skirt_radii[0] + BAND_FLARE * fall + params.thickness;
            let rz = self.skirt_radii[1] + BAND_FLARE * fall + params.thickness;
            for k in 0..BAND_SEGMENTS {
                let th = 2.0 * std::f64::consts::PI * k as f64 / BAND_SEGMENTS as f64;
                vertices.push(Point::new(
                    self.pelvis.x + rx * th.cos(),
                    y,
                    self.pelvis.z + rz * th.sin(),
                ));
            }
        }
        let mut tris = Vec::with_capacity(2 * BAND_RINGS * BAND_SEGMENTS);
        for m in 0..BAND_RINGS {
            for k in 0..BAND_SEGMENTS {
                let k1 = (k + 1) % BAND_SEGMENTS;
                let a = m * BAND_SEGMENTS;
                let b = a + BAND_SEGMENTS;
                tris.push([a + k, b + k1, a + k1]);
                tris.push([a + k, b + k, b + k1]);
            }
        }
        let boxes: Vec<Aabb> = tris
            .iter()
            .map(|t| Aabb::from_points(t.iter().map(|&i| &vertices[i])))
            .collect();
        Band {
            bvh: Bvh::build(&boxes),
            vertices,
            tris,
        }
    }
}

#[derive(Debug, Clone)]
struct Band {
    vertices: Vec<Point>,
    tris: Vec<[usize; 3]>,
    bvh: Bvh,
}

/// Garment surface for one set of decoded parameters.
pub struct ProceduralField<'a> {
    backend: &'a ProceduralBackend,
    cloth: ClothType,
    params: ClothParams,
    phi: Vec<f64>,
    offset: Vec<Point>,
    band: Option<Band>,
}

/// Portion of a triangle where the interpolated coverage value is <= 0, as
/// a convex polygon of at most four vertices.
fn clip(p: [Point; 3], f: [f64; 3]) -> ([Point; 4], usize) {
    let mut out = [Point::origin(); 4];
    let mut n = 0;
    for i in 0..3 {
        let j = (i + 1) % 3;
        let (a, b) = (f[i], f[j]);
        if a <= 0.0 {
            out[n] = p[i];
            n += 1;
        }
        if (a <= 0.0) != (b <= 0.0) {
            let u = a / (a - b);
            out[n] = p[i] + (p[j] - p[i]) * u;
            n += 1;
        }
    }
    (out, n)
}

impl ProceduralField<'_> {
    pub fn cloth(&self) -> ClothType {
        self.cloth
    }

    pub fn params(&self) -> ClothParams {
        self.params
    }

    fn tri_dist_sq(&self, p: &Point, t: &[usize; 3]) -> f64 {
        let f = [self.phi[t[0]], self.phi[t[1]], self.phi[t[2]]];
        let q = [self.offset[t[0]], self.offset[t[1]], self.offset[t[2]]];
        let inside = f.iter().filter(|&&x| x <= 0.0).count();
        match inside {
            3 => point_triangle_distance_sq(p, &q[0], &q[1], &q[2]),
            0 => f64::INFINITY,
            _ => {
                let (poly, n) = clip(q, f);
                (1..n - 1)
                    .map(|k| point_triangle_distance_sq(p, &poly[0], &poly[k], &poly[k + 1]))
                    .fold(f64::INFINITY, f64::min)
            }
        }
    }

    /// `min(C(p), cap)`, optionally restricted to one foot's triangles.
    pub fn eval_capped(&self, p: &Point, cap: f64, side: Option<Side>) -> f64 {
        let mut best = if cap.is_finite() {
            cap * cap
        } else {
            f64::INFINITY
        };
        let mut found = false;
        let region = &self.backend.regions[self.cloth.index()];
        for part in &region.parts {
            if side.is_some() && part.side.is_some() && part.side != side {
                continue;
            }
            if let Some((d2, _)) = part
                .bvh
                .nearest(p, best, |i| self.tri_dist_sq(p, &part.tris[i]))
            {
                best = d2;
                found = true;
            }
        }
        if let Some(band) = &self.band {
            let hit = band.bvh.nearest(p, best, |i| {
                let [a, b, c] = band.tris[i];
                point_triangle_distance_sq(
                    p,
                    &band.vertices[a],
                    &band.vertices[b],
                    &band.vertices[c],
                )
            });
            if let Some((d2, _)) = hit {
                best = d2;
                found = true;
            }
        }
        if found {
            best.sqrt().min(cap)
        } else {
            cap
        }
    }

    pub fn eval(&self, p: &Point) -> f64 {
        self.eval_capped(p, f64::INFINITY, None)
    }

    /// Explicit triangles of the garment surface (clipped body triangles
    /// followed by band triangles).
    pub fn surface_triangles(&self, side: Option<Side>) -> Vec<[Point; 3]> {
        let mut out = Vec::new();
        let region = &self.backend.regions[self.cloth.index()];
        for part in &region.parts {
            if side.is_some() && part.side.is_some() && part.side != side {
                continue;
            }
            for t in &part.tris {
                let f = [self.phi[t[0]], self.phi[t[1]], self.phi[t[2]]];
                let q = [self.offset[t[0]], self.offset[t[1]], self.offset[t[2]]];
                let (poly, n) = clip(q, f);
                for k in 1..n.saturating_sub(1) {
                    out.push([poly[0], poly[k], poly[k + 1]]);
                }
            }
        }
        if let Some(band) = &self.band {
            out.extend(band.tris.iter().map(|t| t.map(|i| band.vertices[i])));
        }
        out
    }

    /// Offset positions of body vertices that lie on the garment.
    pub fn covered_vertices(&self) -> Vec<Point> {
        let region = &self.backend.regions[self.cloth.index()];
        let mut seen = vec![false; self.phi.len()];
        let mut out = Vec::new();
        for part in &region.parts {
            for t in &part.tris {
                for &i in t {
                    if !seen[i] && self.phi[i] <= 0.0 {
                        seen[i] = true;
                        out.push(self.offset[i]);
                    }
                }
            }
        }
        out
    }

    /// Whether body vertex `v` lies inside the decoded coverage region.
    pub fn covers_vertex(&self, v: usize) -> bool {
        self.phi[v] <= 0.0
    }
}
