//! Indexed triangle meshes and their ASCII OBJ encoding.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::{Point, TriangleSurface};

/// Indexed triangle mesh. `attachment`, when present, holds the nearest body
/// vertex of every mesh vertex (set by pose deformation).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Mesh {
    pub vertices: Vec<Point>,
    pub faces: Vec<[usize; 3]>,
    pub attachment: Option<Vec<usize>>,
}

impl Mesh {
    pub fn new(vertices: Vec<Point>, faces: Vec<[usize; 3]>) -> Self {
        Mesh {
            vertices,
            faces,
            attachment: None,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.faces.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.vertices.len();
        if let Some(bad) = self.faces.iter().flatten().find(|&&i| i >= n) {
            return Err(Error::validation(format!(
                "face index {bad} out of range for {n} vertices"
            )));
        }
        if self
            .vertices
            .iter()
            .any(|v| !v.iter().all(|c| c.is_finite()))
        {
            return Err(Error::validation("mesh has non-finite vertices"));
        }
        if let Some(a) = &self.attachment {
            if a.len() != n {
                return Err(Error::validation(
                    "attachment length differs from vertex count",
                ));
            }
        }
        Ok(())
    }

    pub fn face_centroid(&self, f: usize) -> Point {
        let [a, b, c] = self.faces[f];
        Point::from(
            (self.vertices[a].coords + self.vertices[b].coords + self.vertices[c].coords) / 3.0,
        )
    }

    /// Concatenate meshes, re-indexing faces. Attachments are kept only when
    /// every part carries one.
    pub fn merge<'a>(parts: impl IntoIterator<Item = &'a Mesh>) -> Mesh {
        let mut out = Mesh::default();
        let mut attach: Option<Vec<usize>> = Some(Vec::new());
        for m in parts {
            let off = out.vertices.len();
            out.vertices.extend_from_slice(&m.vertices);
            out.faces
                .extend(m.faces.iter().map(|f| [f[0] + off, f[1] + off, f[2] + off]));
            match (&mut attach, &m.attachment) {
                (Some(acc), Some(a)) => acc.extend_from_slice(a),
                _ => attach = None,
            }
        }
        if !out.vertices.is_empty() {
            out.attachment = attach;
        }
        out
    }

    pub fn map_vertices(&self, f: impl Fn(&Point) -> Point) -> Mesh {
        Mesh {
            vertices: self.vertices.iter().map(f).collect(),
            faces: self.faces.clone(),
            attachment: self.attachment.clone(),
        }
    }

    pub fn surface(&self) -> TriangleSurface {
        TriangleSurface::new(self.vertices.clone(), self.faces.clone())
    }

    /// Area-weighted vertex normals; isolated vertices get a zero normal.
    pub fn vertex_normals(&self) -> Vec<nalgebra::Vector3<f64>> {
        let mut n = vec![nalgebra::Vector3::zeros(); self.vertices.len()];
        for f in &self.faces {
            let [a, b, c] = *f;
            let fnrm =
                (self.vertices[b] - self.vertices[a]).cross(&(self.vertices[c] - self.vertices[a]));
            for &i in f {
                n[i] += fnrm;
            }
        }
        for v in &mut n {
            let len = v.norm();
            if len > 0.0 {
                *v /= len;
            }
        }
        n
    }

    pub fn to_obj(&self) -> String {
        let mut s = String::new();
        for v in &self.vertices {
            let _ = writeln!(s, "v {} {} {}", v.x, v.y, v.z);
        }
        for f in &self.faces {
            let _ = writeln!(s, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1);
        }
        if let Some(a) = &self.attachment {
            for (i, j) in a.iter().enumerate() {
                let _ = writeln!(s, "# attach {i} {j}");
            }
        }
        s
    }

    pub fn from_obj(text: &str) -> Result<Mesh> {
        let mut vertices = Vec::new();
        let mut faces = Vec::new();
        let mut attach: Vec<(usize, usize)> = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let bad = || Error::format(format!("obj line {}: {line:?}", lineno + 1));
            let mut it = line.split_whitespace();
            match it.next() {
                Some("v") => {
                    let mut c = [0.0; 3];
                    for x in &mut c {
                        *x = it.next().ok_or_else(bad)?.parse().map_err(|_| bad())?;
                    }
                    vertices.push(Point::new(c[0], c[1], c[2]));
                }
                Some("f") => {
                    let idx: Vec<usize> = it
                        .map(|tok| {
                            let head = tok.split('/').next().unwrap_or("");
                            head.parse::<usize>()
                                .ok()
                                .filter(|&i| i >= 1)
                                .map(|i| i - 1)
                        })
                        .collect::<Option<_>>()
                        .ok_or_else(bad)?;
                    if idx.len() < 3 {
                        return Err(bad());
                    }
                    for k in 1..idx.len() - 1 {
                        faces.push([idx[0], idx[k], idx[k + 1]]);
                    }
                }
                Some("#") => {
                    if it.next() == Some("attach") {
                        let i = it.next().and_then(|t| t.parse().ok()).ok_or_else(bad)?;
                        let j = it.next().and_then(|t| t.parse().ok()).ok_or_else(bad)?;
                        attach.push((i, j));
                    }
                }
                _ => {}
            }
        }
        let mut mesh = Mesh::new(vertices, faces);
        if !attach.is_empty() {
            let mut a = vec![usize::MAX; mesh.vertices.len()];
            for (i, j) in attach {
                *a.get_mut(i)
                    .ok_or_else(|| Error::format(format!("attach index {i} out of range")))? = j;
            }
            if a.contains(&usize::MAX) {
                return Err(Error::format(
                    "attachment block does not cover every vertex",
                ));
            }
            mesh.attachment = Some(a);
        }
        mesh.validate()?;
        Ok(mesh)
    }

    pub fn write_obj(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_obj())?;
        Ok(())
    }

    pub fn read_obj(path: &Path) -> Result<Mesh> {
        Mesh::from_obj(&std::fs::read_to_string(path)?)
    }
}
