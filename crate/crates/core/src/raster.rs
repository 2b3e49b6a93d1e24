//! Orthographic z-buffer rasterizer producing per-pixel face index,
//! barycentric and depth maps.

use std::io::{Read, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::mesh::Mesh;

/// Orthographic camera looking along -z. Pixel `(u, v)` has its centre at
/// `(u + 0.5, v + 0.5)`; image rows grow downward.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    pub width: usize,
    pub height: usize,
    /// World units per pixel.
    pub scale: f64,
    /// Image position of the world origin, in pixels.
    pub principal: [f64; 2],
}

impl Camera {
    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::validation("camera image must have positive size"));
        }
        if !(self.scale.is_finite() && self.scale > 0.0) {
            return Err(Error::validation("camera scale must be positive"));
        }
        if !self.principal.iter().all(|c| c.is_finite()) {
            return Err(Error::validation("camera principal point must be finite"));
        }
        Ok(())
    }

    /// `(u, v, depth)`; depth grows away from the viewer.
    pub fn project(&self, p: &Point) -> (f64, f64, f64) {
        (
            self.principal[0] + p.x / self.scale,
            self.principal[1] - p.y / self.scale,
            -p.z,
        )
    }

    pub fn unproject(&self, u: f64, v: f64, depth: f64) -> Point {
        Point::new(
            (u - self.principal[0]) * self.scale,
            (self.principal[1] - v) * self.scale,
            -depth,
        )
    }

    /// Pixel containing the projection of `p`, if inside the image.
    pub fn pixel_of(&self, p: &Point) -> Option<(usize, usize)> {
        let (u, v, _) = self.project(p);
        let (fu, fv) = (u.floor(), v.floor());
        if fu >= 0.0 && fv >= 0.0 && (fu as usize) < self.width && (fv as usize) < self.height {
            Some((fu as usize, fv as usize))
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FaceIndexMap {
    pub width: usize,
    pub height: usize,
    /// Face per pixel, -1 where empty.
    pub face: Vec<i32>,
    pub bary: Vec<[f64; 3]>,
    /// Depth per pixel, +inf where empty.
    pub depth: Vec<f64>,
}

impl FaceIndexMap {
    pub fn empty(width: usize, height: usize) -> Self {
        let n = width * height;
        FaceIndexMap {
            width,
            height,
            face: vec![-1; n],
            bary: vec![[0.0; 3]; n],
            depth: vec![f64::INFINITY; n],
        }
    }

    pub fn index(&self, x: usize, y: usize) -> usize {
        y * self.width + x
    }

    pub fn face_at(&self, x: usize, y: usize) -> Option<usize> {
        let f = self.face[self.index(x, y)];
        (f >= 0).then_some(f as usize)
    }

    pub fn covered(&self) -> usize {
        self.face.iter().filter(|&&f| f >= 0).count()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.width * self.height;
        if self.face.len() != n || self.bary.len() != n || self.depth.len() != n {
            return Err(Error::validation(
                "face index map buffers do not match its size",
            ));
        }
        for i in 0..n {
            if self.face[i] >= 0 {
                let b = self.bary[i];
                if b.iter().any(|w| *w < -1e-6)
                    || (b.iter().sum::<f64>() - 1.0).abs() > 1e-6
                    || !self.depth[i].is_finite()
                {
                    return Err(Error::validation(format!(
                        "pixel {i} has invalid barycentrics or depth"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Write the `DPM1` little-endian encoding.
    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        let mut buf = Vec::with_capacity(12 + self.face.len() * 20);
        buf.extend_from_slice(b"DPM1");
        buf.extend_from_slice(&(self.width as u32).to_le_bytes());
        buf.extend_from_slice(&(self.height as u32).to_le_bytes());
        for i in 0..self.face.len() {
            buf.extend_from_slice(&self.face[i].to_le_bytes());
            for b in self.bary[i] {
                buf.extend_from_slice(&(b as f32).to_le_bytes());
            }
            buf.extend_from_slice(&(self.depth[i] as f32).to_le_bytes());
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn read_from(mut r: impl Read) -> Result<Self> {
        let mut buf = Vec::new();
        r.read_to_end(&mut buf)?;
        if buf.len() < 12 || &buf[..4] != b"DPM1" {
            return Err(Error::format("missing DPM1 header"));
        }
        let word = |o: usize| u32::from_le_bytes(buf[o..o + 4].try_into().unwrap());
        let (width, height) = (word(4) as usize, word(8) as usize);
        let n = width * height;
        if buf.len() != 12 + n * 20 {
            return Err(Error::format(format!(
                "DPM1 body has {} bytes, expected {}",
                buf.len() - 12,
                n * 20
            )));
        }
        let mut map = FaceIndexMap::empty(width, height);
        for i in 0..n {
            let o = 12 + i * 20;
            let f32_at =
                |k: usize| f32::from_le_bytes(buf[o + k..o + k + 4].try_into().unwrap()) as f64;
            map.face[i] = i32::from_le_bytes(buf[o..o + 4].try_into().unwrap());
            map.bary[i] = [f32_at(4), f32_at(8), f32_at(12)];
            map.depth[i] = f32_at(16);
        }
        Ok(map)
    }

    pub fn write_file(&self, path: &Path) -> Result<()> {
        self.write_to(std::io::BufWriter::new(std::fs::File::create(path)?))
    }

    pub fn read_file(path: &Path) -> Result<Self> {
        Self::read_from(std::io::BufReader::new(std::fs::File::open(path)?))
    }
}

struct ScreenTri {
    p: [[f64; 3]; 3],
    area: f64,
}

fn edge(a: &[f64; 3], b: &[f64; 3], x: f64, y: f64) -> f64 {
    (b[0] - a[0]) * (y - a[1]) - (b[1] - a[1]) * (x - a[0])
}

/// Z-buffered rasterization with pixel-centre sampling. Equal depths keep
/// the lower face index; zero-area triangles are skipped.
pub fn rasterize(mesh: &Mesh, camera: &Camera) -> Result<FaceIndexMap> {
    camera.validate()?;
    mesh.validate()?;
    let (w, h) = (camera.width, camera.height);
    let screen: Vec<Option<ScreenTri>> = mesh
        .faces
        .iter()
        .map(|f| {
            let p = f.map(|i| {
                let (u, v, d) = camera.project(&mesh.vertices[i]);
                [u, v, d]
            });
            let area = edge(&p[0], &p[1], p[2][0], p[2][1]);
            (area != 0.0 && area.is_finite()).then_some(ScreenTri { p, area })
        })
        .collect();

    // bin faces by the rows whose pixel centres they may cover
    let mut rows: Vec<Vec<u32>> = vec![Vec::new(); h];
    for (fi, t) in screen.iter().enumerate() {
        let Some(t) = t else { continue };
        let lo = t.p.iter().map(|q| q[1]).fold(f64::INFINITY, f64::min);
        let hi = t.p.iter().map(|q| q[1]).fold(f64::NEG_INFINITY, f64::max);
        let r0 = (lo - 0.5).ceil().max(0.0);
        let r1 = (hi - 0.5).floor().min(h as f64 - 1.0);
        if r0 > r1 {
            continue;
        }
        for r in r0 as usize..=r1 as usize {
            rows[r].push(fi as u32);
        }
    }

    let mut map = FaceIndexMap::empty(w, h);
    let results: Vec<(Vec<i32>, Vec<[f64; 3]>, Vec<f64>)> = rows
        .par_iter()
        .enumerate()
        .map(|(r, faces)| {
            let mut face = vec![-1i32; w];
            let mut bary = vec![[0.0; 3]; w];
            let mut depth = vec![f64::INFINITY; w];
            let y = r as f64 + 0.5;
            for &fi in faces {
                let t = screen[fi as usize].as_ref().unwrap();
                let lo = t.p.iter().map(|q| q[0]).fold(f64::INFINITY, f64::min);
                let hi = t.p.iter().map(|q| q[0]).fold(f64::NEG_INFINITY, f64::max);
                let c0 = (lo - 0.5).ceil().max(0.0);
                let c1 = (hi - 0.5).floor().min(w as f64 - 1.0);
                if c0 > c1 {
                    continue;
                }
                for c in c0 as usize..=c1 as usize {
                    let x = c as f64 + 0.5;
                    let b0 = edge(&t.p[1], &t.p[2], x, y) / t.area;
                    let b1 = edge(&t.p[2], &t.p[0], x, y) / t.area;
                    let b2 = edge(&t.p[0], &t.p[1], x, y) / t.area;
                    if b0 < 0.0 || b1 < 0.0 || b2 < 0.0 {
                        continue;
                    }
                    let d = b0 * t.p[0][2] + b1 * t.p[1][2] + b2 * t.p[2][2];
                    let fi = fi as i32;
                    if d < depth[c] || (d == depth[c] && fi < face[c]) {
                        depth[c] = d;
                        face[c] = fi;
                        let s = b0 + b1 + b2;
                        bary[c] = [b0 / s, b1 / s, b2 / s];
                    }
                }
            }
            (face, bary, depth)
        })
        .collect();
    for (r, (face, bary, depth)) in results.into_iter().enumerate() {
        let o = r * w;
        map.face[o..o + w].copy_from_slice(&face);
        map.bary[o..o + w].copy_from_slice(&bary);
        map.depth[o..o + w].copy_from_slice(&depth);
    }
    Ok(map)
}

/// 3D point a covered pixel's (face, barycentric) pair refers to on `mesh`.
pub fn surface_point(mesh: &Mesh, face: usize, bary: &[f64; 3]) -> Point {
    let [a, b, c] = mesh.faces[face];
    Point::from(
        mesh.vertices[a].coords * bary[0]
            + mesh.vertices[b].coords * bary[1]
            + mesh.vertices[c].coords * bary[2],
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn camera(n: usize) -> Camera {
        Camera {
            width: n,
            height: n,
            scale: 0.01,
            principal: [n as f64 / 2.0, n as f64 / 2.0],
        }
    }

    fn uv_sphere(r: f64, rings: usize, segs: usize) -> Mesh {
        let mut v = vec![Point::new(0.0, r, 0.0)];
        for i in 1..rings {
            let th = std::f64::consts::PI * i as f64 / rings as f64;
            for k in 0..segs {
                let ph = 2.0 * std::f64::consts::PI * k as f64 / segs as f64;
                v.push(Point::new(
                    r * th.sin() * ph.cos(),
                    r * th.cos(),
                    r * th.sin() * ph.sin(),
                ));
            }
        }
        v.push(Point::new(0.0, -r, 0.0));
        let mut f = Vec::new();
        let last = v.len() - 1;
        for k in 0..segs {
            let k1 = (k + 1) % segs;
            f.push([0, 1 + k1, 1 + k]);
            for i in 0..rings - 2 {
                let a = 1 + i * segs;
                let b = a + segs;
                f.push([a + k, a + k1, b + k1]);
                f.push([a + k, b + k1, b + k]);
            }
            let a = 1 + (rings - 2) * segs;
            f.push([last, a + k, a + k1]);
        }
        Mesh::new(v, f)
    }

    #[test]
    fn single_triangle_covers_centre() {
        let cam = camera(10);
        let m = Mesh::new(
            vec![
                Point::new(-0.04, -0.04, 0.0),
                Point::new(0.04, -0.04, 0.0),
                Point::new(0.0, 0.04, 0.0),
            ],
            vec![[0, 1, 2]],
        );
        let map = rasterize(&m, &cam).unwrap();
        let i = map.index(5, 5);
        assert_eq!(map.face[i], 0);
        assert!((map.bary[i].iter().sum::<f64>() - 1.0).abs() < 1e-12);
        map.validate().unwrap();
    }

    #[test]
    fn nearer_face_wins() {
        let cam = camera(16);
        let quad = |z: f64| {
            vec![
                Point::new(-0.05, -0.05, z),
                Point::new(0.05, -0.05, z),
                Point::new(0.0, 0.05, z),
            ]
        };
        // depth = -z, so z = -1 is nearer than z = -2
        let mut v = quad(-2.0);
        v.extend(quad(-1.0));
        let m = Mesh::new(v, vec![[0, 1, 2], [3, 4, 5]]);
        let map = rasterize(&m, &cam).unwrap();
        assert!(map.covered() > 0);
        for (f, d) in map.face.iter().zip(&map.depth) {
            if *f >= 0 {
                assert_eq!(*f, 1);
                assert!((*d - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn equal_depth_prefers_lower_index() {
        let cam = camera(8);
        let v = vec![
            Point::new(-0.03, -0.03, 0.0),
            Point::new(0.03, -0.03, 0.0),
            Point::new(0.0, 0.03, 0.0),
        ];
        let m = Mesh::new(v, vec![[0, 1, 2], [0, 1, 2]]);
        let map = rasterize(&m, &cam).unwrap();
        assert!(map.face.iter().all(|&f| f <= 0));
    }

    #[test]
    fn sphere_silhouette_area() {
        let n = 200;
        let cam = camera(n);
        let r = 0.7;
        let map = rasterize(&uv_sphere(r, 96, 192), &cam).unwrap();
        let want = std::f64::consts::PI * (r / cam.scale).powi(2);
        let got = map.covered() as f64;
        assert!((got - want).abs() / want < 0.03, "{got} vs {want}");
    }

    #[test]
    fn lifted_points_project_into_their_pixel() {
        let cam = camera(64);
        let m = uv_sphere(0.25, 12, 24);
        let map = rasterize(&m, &cam).unwrap();
        for y in 0..64 {
            for x in 0..64 {
                if let Some(f) = map.face_at(x, y) {
                    let p = surface_point(&m, f, &map.bary[map.index(x, y)]);
                    assert_eq!(cam.pixel_of(&p), Some((x, y)));
                }
            }
        }
    }

    #[test]
    fn far_geometry_changes_nothing() {
        let cam = camera(48);
        let m = uv_sphere(0.15, 10, 20);
        let base = rasterize(&m, &cam).unwrap();
        let behind = uv_sphere(0.1, 10, 20).map_vertices(|p| Point::new(p.x, p.y, p.z - 5.0));
        let both = Mesh::merge([&m, &behind]);
        assert_eq!(rasterize(&both, &cam).unwrap(), base);
    }

    #[test]
    fn degenerate_triangles_skipped() {
        let cam = camera(8);
        let m = Mesh::new(
            vec![
                Point::origin(),
                Point::new(0.01, 0.0, 0.0),
                Point::new(0.02, 0.0, 0.0),
            ],
            vec![[0, 1, 2]],
        );
        assert_eq!(rasterize(&m, &cam).unwrap().covered(), 0);
    }

    #[test]
    fn dpm1_round_trip() {
        let cam = camera(32);
        let map = rasterize(&uv_sphere(0.1, 8, 16), &cam).unwrap();
        let mut bytes = Vec::new();
        map.write_to(&mut bytes).unwrap();
        assert_eq!(&bytes[..4], b"DPM1");
        let back = FaceIndexMap::read_from(&bytes[..]).unwrap();
        assert_eq!(back.face, map.face);
        for (a, b) in back.bary.iter().zip(&map.bary) {
            for k in 0..3 {
                assert_eq!(a[k], b[k] as f32 as f64);
            }
        }
    }
}
