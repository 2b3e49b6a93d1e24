//! Scene manifest: the list of files one synthetic scene consists of.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use clothrecon::body::{read_body_model, shape_body, Gender, PoseParams, ShapeParams, TPoseBody};
use clothrecon::clothfield::N_CLOTHES;
use clothrecon::densepose::{ClothSegmentation, Existence, ObservationSet};
use clothrecon::mesh::Mesh;
use clothrecon::raster::{Camera, FaceIndexMap};

use crate::{read_json, CliError};

/// Paths are relative to the manifest's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneManifest {
    pub seed: u64,
    pub body_model: String,
    pub body_params: String,
    pub camera: String,
    pub segmentation: String,
    pub densepose: String,
    pub existence: String,
    pub gt_state: String,
    /// Canonical garment components by name, e.g. `shoes_left`.
    pub gt_meshes: BTreeMap<String, String>,
    /// Posed, clothed ground-truth surface.
    pub gt_posed: String,
    pub resolution: usize,
    pub iso: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BodyParams {
    pub shape: ShapeParams,
    pub pose: PoseParams,
    pub gender: Gender,
}

/// A manifest with its body and observation loaded.
pub struct LoadedScene {
    pub dir: PathBuf,
    pub manifest: SceneManifest,
    pub tpose: TPoseBody,
    pub observation: ObservationSet,
}

impl LoadedScene {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let manifest: SceneManifest = read_json(path)?;
        let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let file = |rel: &str| -> Result<PathBuf, CliError> {
            let p = dir.join(rel);
            if p.is_file() {
                Ok(p)
            } else {
                Err(CliError::Missing(format!(
                    "manifest refers to missing file {}",
                    p.display()
                )))
            }
        };
        let model = read_body_model(&file(&manifest.body_model)?)?;
        let params: BodyParams = read_json(&file(&manifest.body_params)?)?;
        let tpose = shape_body(&Arc::new(model), &params.shape)?;
        let camera: Camera = read_json(&file(&manifest.camera)?)?;
        let segmentation = ClothSegmentation::read_file(&file(&manifest.segmentation)?)?;
        let densepose = FaceIndexMap::read_file(&file(&manifest.densepose)?)?;
        let existence: [Existence; N_CLOTHES] = read_json(&file(&manifest.existence)?)?;
        let observation = ObservationSet {
            segmentation,
            densepose,
            camera,
            pose: params.pose,
            gender: params.gender,
            existence,
        };
        observation.validate()?;
        for rel in manifest
            .gt_meshes
            .values()
            .chain([&manifest.gt_state, &manifest.gt_posed])
        {
            file(rel)?;
        }
        Ok(LoadedScene {
            dir,
            manifest,
            tpose,
            observation,
        })
    }

    pub fn gt_posed(&self) -> Result<Mesh, CliError> {
        Ok(Mesh::read_obj(&self.dir.join(&self.manifest.gt_posed))?)
    }
}
