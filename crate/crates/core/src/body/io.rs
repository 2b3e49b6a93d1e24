//! Body model files: a JSON manifest next to little-endian binary blobs.
//!
//! ```text
//! model.json                 manifest (see `Manifest`)
//! model.vertices.bin         f64 x 3 per template vertex
//! model.faces.bin            u32 x 3 per face
//! model.skin_weights.bin     f64 x joint_count per vertex
//! model.joint_regressor.bin  f64 x vertex_count per joint
//! model.shape_basis.bin      f64 x 3 per vertex, per shape direction
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{BodyModel, Gender};
use crate::error::{Error, Result};
use crate::geometry::{Point, Vec3};

const FORMAT: &str = "body-model/1";

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    format: String,
    gender: Gender,
    vertex_count: usize,
    face_count: usize,
    joint_count: usize,
    shape_dim: usize,
    joint_names: Vec<String>,
    /// Parent index per joint, -1 for the root.
    joint_parents: Vec<i64>,
    files: Blobs,
}

#[derive(Debug, Serialize, Deserialize)]
struct Blobs {
    vertices: String,
    faces: String,
    skin_weights: String,
    joint_regressor: String,
    shape_basis: String,
}

fn f64_bytes(values: impl IntoIterator<Item = f64>) -> Vec<u8> {
    values.into_iter().flat_map(f64::to_le_bytes).collect()
}

fn read_f64(path: &Path, expected: usize) -> Result<Vec<f64>> {
    let bytes = std::fs::read(path)?;
    if bytes.len() != expected * 8 {
        return Err(Error::format(format!(
            "{}: expected {} float64 values, found {} bytes",
            path.display(),
            expected,
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

fn sidecar(manifest: &Path, kind: &str) -> (String, PathBuf) {
    let stem = manifest
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("body");
    let name = format!("{stem}.{kind}.bin");
    let path = manifest.with_file_name(&name);
    (name, path)
}

/// Write `model` as a manifest at `path` plus sidecar blobs in the same directory.
pub fn write_body_model(model: &BodyModel, path: &Path) -> Result<()> {
    model.validate()?;
    let kinds = [
        "vertices",
        "faces",
        "skin_weights",
        "joint_regressor",
        "shape_basis",
    ];
    let [v, f, w, r, s] = kinds.map(|k| sidecar(path, k));

    std::fs::write(
        &v.1,
        f64_bytes(model.template_vertices.iter().flat_map(|p| [p.x, p.y, p.z])),
    )?;
    let faces: Vec<u8> = model
        .faces
        .iter()
        .flatten()
        .flat_map(|&i| (i as u32).to_le_bytes())
        .collect();
    std::fs::write(&f.1, faces)?;
    std::fs::write(&w.1, f64_bytes(model.skin_weights.iter().copied()))?;
    std::fs::write(&r.1, f64_bytes(model.joint_regressor.iter().copied()))?;
    std::fs::write(
        &s.1,
        f64_bytes(
            model
                .shape_basis
                .iter()
                .flatten()
                .flat_map(|d| [d.x, d.y, d.z]),
        ),
    )?;

    let manifest = Manifest {
        format: FORMAT.to_string(),
        gender: model.gender,
        vertex_count: model.vertex_count(),
        face_count: model.faces.len(),
        joint_count: model.joint_count(),
        shape_dim: model.shape_basis.len(),
        joint_names: model.joint_names.clone(),
        joint_parents: model
            .joint_parents
            .iter()
            .map(|p| p.map_or(-1, |p| p as i64))
            .collect(),
        files: Blobs {
            vertices: v.0,
            faces: f.0,
            skin_weights: w.0,
            joint_regressor: r.0,
            shape_basis: s.0,
        },
    };
    std::fs::write(path, serde_json::to_string_pretty(&manifest)?)?;
    Ok(())
}

pub fn read_body_model(path: &Path) -> Result<BodyModel> {
    let manifest: Manifest = serde_json::from_str(&std::fs::read_to_string(path)?)?;
    if manifest.format != FORMAT {
        return Err(Error::format(format!(
            "unsupported body model format {:?}",
            manifest.format
        )));
    }
    let dir = path.parent().unwrap_or(Path::new("."));
    let (nv, nf, nj, ns) = (
        manifest.vertex_count,
        manifest.face_count,
        manifest.joint_count,
        manifest.shape_dim,
    );

    let coords = read_f64(&dir.join(&manifest.files.vertices), nv * 3)?;
    let template_vertices = coords
        .chunks_exact(3)
        .map(|c| Point::new(c[0], c[1], c[2]))
        .collect();

    let face_path = dir.join(&manifest.files.faces);
    let bytes = std::fs::read(&face_path)?;
    if bytes.len() != nf * 12 {
        return Err(Error::format(format!(
            "{}: expected {} faces",
            face_path.display(),
            nf
        )));
    }
    let idx: Vec<usize> = bytes
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes(c.try_into().unwrap()) as usize)
        .collect();
    let faces = idx.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect();

    let skin_weights = read_f64(&dir.join(&manifest.files.skin_weights), nv * nj)?;
    let joint_regressor = read_f64(&dir.join(&manifest.files.joint_regressor), nj * nv)?;
    let basis = read_f64(&dir.join(&manifest.files.shape_basis), ns * nv * 3)?;
    let shape_basis = basis
        .chunks_exact(nv * 3)
        .map(|dir| {
            dir.chunks_exact(3)
                .map(|c| Vec3::new(c[0], c[1], c[2]))
                .collect()
        })
        .collect();

    if manifest.joint_parents.len() != nj {
        return Err(Error::format(
            "joint_parents length differs from joint_count",
        ));
    }
    let joint_parents = manifest
        .joint_parents
        .iter()
        .map(|&p| if p < 0 { None } else { Some(p as usize) })
        .collect();

    let model = BodyModel {
        template_vertices,
        faces,
        joint_names: manifest.joint_names,
        joint_parents,
        joint_regressor,
        skin_weights,
        shape_basis,
        gender: manifest.gender,
    };
    model.validate()?;
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::body::{make_procedural_body, BodySpec};

    #[test]
    fn round_trip_is_exact() {
        let spec = BodySpec {
            segments: 8,
            ring_spacing: 0.08,
            ..BodySpec::default()
        };
        let model = make_procedural_body(&spec, Gender::Female).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("body.json");
        write_body_model(&model, &path).unwrap();
        let back = read_body_model(&path).unwrap();
        assert_eq!(back, model);
        for v in 0..back.vertex_count() {
            assert!((back.weights(v).iter().sum::<f64>() - 1.0).abs() <= 1e-6);
        }
    }

    #[test]
    fn truncated_blob_is_rejected() {
        let spec = BodySpec {
            segments: 6,
            ring_spacing: 0.1,
            ..BodySpec::default()
        };
        let model = make_procedural_body(&spec, Gender::Neutral).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        write_body_model(&model, &path).unwrap();
        let blob = dir.path().join("m.faces.bin");
        let bytes = std::fs::read(&blob).unwrap();
        std::fs::write(&blob, &bytes[..bytes.len() - 4]).unwrap();
        assert!(matches!(read_body_model(&path), Err(Error::Format(_))));
    }
}
