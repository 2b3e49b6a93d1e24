//! Tabulated distance fields: one sampled lattice per garment type.

use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::{Point, Vec3};
use crate::grid::{decode_samples_f32, encode_samples_f32, GridHeader, ScalarGrid};

use super::{ClothType, N_CLOTHES};

/// Grid-backed fields. Each garment stores samples for a single latent; the
/// latent passed at evaluation time is only validated.
#[derive(Debug, Clone, Default)]
pub struct GridBackend {
    grids: [Option<ScalarGrid>; N_CLOTHES],
    latents: [Option<Vec<f64>>; N_CLOTHES],
}

impl GridBackend {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, cloth: ClothType, grid: ScalarGrid, latent: Vec<f64>) -> Result<()> {
        grid.validate()?;
        self.grids[cloth.index()] = Some(grid);
        self.latents[cloth.index()] = Some(latent);
        Ok(())
    }

    pub fn grid(&self, cloth: ClothType) -> Result<&ScalarGrid> {
        self.grids[cloth.index()]
            .as_ref()
            .ok_or_else(|| Error::Config(format!("no grid field loaded for {cloth}")))
    }

    /// Latent the stored samples were generated from.
    pub fn latent(&self, cloth: ClothType) -> Option<&[f64]> {
        self.latents[cloth.index()].as_deref()
    }
}

/// Write a grid field as `path` (JSON header) plus `<stem>.f32` samples.
pub fn write_grid_field(
    path: &Path,
    cloth: ClothType,
    latent: &[f64],
    grid: &ScalarGrid,
) -> Result<()> {
    grid.validate()?;
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("field");
    let blob = format!("{stem}.f32");
    let header = GridHeader {
        origin: [grid.origin.x, grid.origin.y, grid.origin.z],
        cell_size: [grid.cell.x, grid.cell.y, grid.cell.z],
        dims: grid.dims,
        cloth_type: cloth.name().to_string(),
        latent: latent.to_vec(),
        samples: blob.clone(),
    };
    std::fs::write(
        path.with_file_name(&blob),
        encode_samples_f32(&grid.samples),
    )?;
    std::fs::write(path, serde_json::to_string_pretty(&header)?)?;
    Ok(())
}

pub fn read_grid_field(path: &Path) -> Result<(ClothType, Vec<f64>, ScalarGrid)> {
    let header: GridHeader = serde_json::from_str(&std::fs::read_to_string(path)?)?;
    let cloth = ClothType::from_name(&header.cloth_type)
        .ok_or_else(|| Error::format(format!("unknown cloth type {:?}", header.cloth_type)))?;
    let dir = path.parent().unwrap_or(Path::new("."));
    let n = header.dims.iter().product();
    let samples = decode_samples_f32(&std::fs::read(dir.join(&header.samples))?, n)?;
    let grid = ScalarGrid::new(
        Point::from(header.origin),
        Vec3::from(header.cell_size),
        header.dims,
        samples,
    )?;
    Ok((cloth, header.latent, grid))
}
