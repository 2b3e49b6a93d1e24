use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clothrecon::body::write_body_model;
use clothrecon::clothfield::{ClothState, DistanceFieldBackend, ProceduralBackend};
use clothrecon::evaluation::MetricReport;
use clothrecon::fitting::{fit_clothes, FitConfig, FitTrace};
use clothrecon::mesh::Mesh;
use clothrecon::meshing::{cloth_components, ClothMesh};
use clothrecon::scene::{generate_scene, posed_clothed_body, reconstruct, score, SceneConfig};

use crate::manifest::{BodyParams, LoadedScene, SceneManifest};
use crate::{read_json, write_json, CliError};

pub const MANIFEST: &str = "scene.json";

fn create_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

/// Writes one OBJ per non-empty component; returns name to file name.
fn write_components(dir: &Path, cloth: &[ClothMesh]) -> Result<BTreeMap<String, String>, CliError> {
    create_dir(dir)?;
    let mut out = BTreeMap::new();
    for c in cloth.iter().filter(|c| !c.mesh.faces.is_empty()) {
        let name = format!("{}.obj", c.name());
        c.mesh.write_obj(&dir.join(&name))?;
        out.insert(c.name(), name);
    }
    Ok(out)
}

/// Component meshes found in `dir`; `Missing` when there are none.
pub fn read_components(dir: &Path) -> Result<Vec<ClothMesh>, CliError> {
    if !dir.is_dir() {
        return Err(CliError::Missing(format!(
            "no reconstruction directory at {}",
            dir.display()
        )));
    }
    let mut out = Vec::new();
    for (cloth_type, side) in cloth_components() {
        let mut c = ClothMesh {
            cloth_type,
            side,
            mesh: Mesh::default(),
        };
        let path = dir.join(format!("{}.obj", c.name()));
        if path.is_file() {
            c.mesh = Mesh::read_obj(&path)?;
            out.push(c);
        }
    }
    if out.is_empty() {
        return Err(CliError::Missing(format!(
            "no garment meshes in {}",
            dir.display()
        )));
    }
    Ok(out)
}

pub fn synth(config: &SceneConfig, out: &Path) -> Result<PathBuf, CliError> {
    let scene = generate_scene(config)?;
    create_dir(out)?;
    create_dir(&out.join("body"))?;
    write_body_model(&scene.model, &out.join("body/body.json"))?;
    write_json(
        &out.join("body_params.json"),
        &BodyParams {
            shape: scene.shape,
            pose: scene.pose,
            gender: scene.observation.gender,
        },
    )?;
    write_json(&out.join("camera.json"), &scene.observation.camera)?;
    scene
        .observation
        .segmentation
        .write_file(&out.join("segmentation.pgm"))?;
    scene
        .observation
        .densepose
        .write_file(&out.join("densepose.dpm"))?;
    write_json(&out.join("existence.json"), &scene.observation.existence)?;
    write_json(&out.join("gt_state.json"), &scene.state)?;
    let gt_meshes = write_components(&out.join("gt"), &scene.cloth_meshes)?
        .into_iter()
        .map(|(k, v)| (k, format!("gt/{v}")))
        .collect();
    scene.posed.write_obj(&out.join("gt_posed.obj"))?;
    let manifest = SceneManifest {
        seed: config.seed,
        body_model: "body/body.json".into(),
        body_params: "body_params.json".into(),
        camera: "camera.json".into(),
        segmentation: "segmentation.pgm".into(),
        densepose: "densepose.dpm".into(),
        existence: "existence.json".into(),
        gt_state: "gt_state.json".into(),
        gt_meshes,
        gt_posed: "gt_posed.obj".into(),
        resolution: config.resolution,
        iso: config.iso,
    };
    let path = out.join(MANIFEST);
    write_json(&path, &manifest)?;
    Ok(path)
}

pub fn fit(manifest: &Path, config: &FitConfig, out: &Path) -> Result<FitTrace, CliError> {
    let scene = LoadedScene::load(manifest)?;
    let backend = DistanceFieldBackend::Procedural(ProceduralBackend::new(&scene.tpose)?);
    let trace = fit_clothes(&scene.observation, &scene.tpose, &backend, config)?;
    create_dir(out)?;
    write_json(&out.join("state.json"), &trace.final_state)?;
    std::fs::write(out.join("trace.jsonl"), trace.to_jsonl()?).map_err(|e| CliError::io(out, e))?;
    Ok(trace)
}

/// Canonical components of `state` plus the posed clothed body.
pub fn reconstruct_state(
    manifest: &Path,
    state: &Path,
    resolution: usize,
    iso: f64,
    out: &Path,
) -> Result<Vec<ClothMesh>, CliError> {
    let scene = LoadedScene::load(manifest)?;
    if !state.is_file() {
        return Err(CliError::Missing(format!(
            "no state file at {}",
            state.display()
        )));
    }
    let state: ClothState = read_json(state)?;
    state.validate()?;
    let backend = DistanceFieldBackend::Procedural(ProceduralBackend::new(&scene.tpose)?);
    let (cloth, posed) = reconstruct(
        &state,
        &backend,
        &scene.tpose,
        &scene.observation.pose,
        resolution,
        iso,
    )?;
    write_components(out, &cloth)?;
    posed.write_obj(&out.join("posed.obj"))?;
    Ok(cloth)
}

pub fn eval(manifest: &Path, recon: &Path, out: &Path) -> Result<MetricReport, CliError> {
    let scene = LoadedScene::load(manifest)?;
    let cloth = read_components(recon)?;
    let posed = posed_clothed_body(&scene.tpose, &scene.observation.pose, &cloth)?;
    let report = score(
        &cloth,
        &posed,
        &scene.gt_posed()?,
        &scene.observation,
        &scene.tpose,
    )?;
    create_dir(out)?;
    write_json(&out.join("report.json"), &report)?;
    Ok(report)
}
