//! Latent-coded unsigned distance fields, one per garment type.
//!
//! A field maps a canonical (T-pose) query point to its distance from the
//! garment surface. Two backends share the interface: a procedural one that
//! decodes the latent into coverage extents and a thickness and measures
//! exact distance to the offset body surface, and a tabulated grid.

mod grid_backend;
mod procedural;

use serde::{Deserialize, Serialize};

use crate::body::TPoseBody;
use crate::error::{Error, Result};
use crate::geometry::Point;

pub use grid_backend::{read_grid_field, write_grid_field, GridBackend};
pub use procedural::{ProceduralBackend, ProceduralField};

pub use crate::constants::{EXISTENCE_THRESHOLD, N_CLOTHES};
pub const MIN_THICKNESS: f64 = 0.005;
pub const THICKNESS_RANGE: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClothType {
    UpperCloth,
    Coat,
    Pants,
    Skirt,
    Shoes,
}

impl ClothType {
    pub const ALL: [ClothType; N_CLOTHES] = [
        ClothType::UpperCloth,
        ClothType::Coat,
        ClothType::Pants,
        ClothType::Skirt,
        ClothType::Shoes,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<ClothType> {
        Self::ALL.get(i).copied()
    }

    pub fn latent_dim(self) -> usize {
        match self {
            ClothType::Shoes => crate::constants::LATENT_DIM_SHOES,
            _ => crate::constants::LATENT_DIM,
        }
    }

    /// Segmentation label code.
    pub fn label(self) -> u8 {
        self as u8 + 1
    }

    pub fn from_label(label: u8) -> Option<ClothType> {
        label
            .checked_sub(1)
            .and_then(|i| Self::from_index(i as usize))
    }

    pub fn name(self) -> &'static str {
        match self {
            ClothType::UpperCloth => "upper_cloth",
            ClothType::Coat => "coat",
            ClothType::Pants => "pants",
            ClothType::Skirt => "skirt",
            ClothType::Shoes => "shoes",
        }
    }

    pub fn from_name(name: &str) -> Option<ClothType> {
        Self::ALL.into_iter().find(|c| c.name() == name)
    }
}

impl std::fmt::Display for ClothType {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Left/right selector for per-foot garments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClothLatent {
    pub cloth_type: ClothType,
    pub z: Vec<f64>,
}

impl ClothLatent {
    pub fn zeros(cloth_type: ClothType) -> Self {
        ClothLatent {
            cloth_type,
            z: vec![0.0; cloth_type.latent_dim()],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let want = self.cloth_type.latent_dim();
        if self.z.len() != want {
            return Err(Error::validation(format!(
                "{} latent must have {} entries, got {}",
                self.cloth_type,
                want,
                self.z.len()
            )));
        }
        if self.z.iter().any(|v| !v.is_finite()) {
            return Err(Error::validation(format!(
                "{} latent has non-finite entries",
                self.cloth_type
            )));
        }
        Ok(())
    }
}

/// Existence scores, latent codes and gender for all garment types.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClothState {
    pub existence: [f64; N_CLOTHES],
    pub latents: Vec<ClothLatent>,
    /// `(g_m, g_f)`.
    pub gender: [f64; 2],
}

impl ClothState {
    /// Every garment at the mean latent with the given existence scores.
    pub fn mean(existence: [f64; N_CLOTHES]) -> Self {
        ClothState {
            existence,
            latents: ClothType::ALL
                .iter()
                .map(|&c| ClothLatent::zeros(c))
                .collect(),
            gender: [0.5, 0.5],
        }
    }

    pub fn latent(&self, cloth: ClothType) -> &ClothLatent {
        &self.latents[cloth.index()]
    }

    pub fn is_gated(&self, cloth: ClothType) -> bool {
        existence_gate(self.existence[cloth.index()])
    }

    pub fn gated(&self) -> Vec<ClothType> {
        ClothType::ALL
            .into_iter()
            .filter(|&c| self.is_gated(c))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        for (i, s) in self.existence.iter().enumerate() {
            if !(0.0..=1.0).contains(s) {
                return Err(Error::validation(format!(
                    "existence score {i} = {s} outside [0, 1]"
                )));
            }
        }
        if self.latents.len() != N_CLOTHES {
            return Err(Error::validation(format!(
                "expected {N_CLOTHES} latents, got {}",
                self.latents.len()
            )));
        }
        for (c, l) in ClothType::ALL.iter().zip(&self.latents) {
            if l.cloth_type != *c {
                return Err(Error::validation(format!(
                    "latent slot {} holds {}",
                    c, l.cloth_type
                )));
            }
            l.validate()?;
        }
        let [m, f] = self.gender;
        if !((0.0..=1.0).contains(&m) && (0.0..=1.0).contains(&f) && (m + f - 1.0).abs() <= 1e-9) {
            return Err(Error::validation(format!(
                "gender ({m}, {f}) is not a probability pair"
            )));
        }
        Ok(())
    }
}

/// A garment is decoded only when its existence score exceeds the threshold.
pub fn existence_gate(score: f64) -> bool {
    score > EXISTENCE_THRESHOLD
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Surface parameters decoded from a latent code.
///
/// `coverage[0]` runs along the limbs (sleeves, trouser legs, boot shafts),
/// `coverage[1]` along the torso or hem length. Shoes use only `coverage[0]`;
/// their `coverage[1]` is fixed at 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClothParams {
    pub coverage: [f64; 2],
    pub thickness: f64,
}

impl ClothParams {
    /// Bit pattern usable as a cache key.
    pub fn key(&self) -> [u64; 3] {
        [
            self.coverage[0].to_bits(),
            self.coverage[1].to_bits(),
            self.thickness.to_bits(),
        ]
    }
}

pub fn decode_latent(latent: &ClothLatent) -> Result<ClothParams> {
    latent.validate()?;
    let z = &latent.z;
    Ok(match latent.cloth_type {
        ClothType::Shoes => ClothParams {
            coverage: [sigmoid(z[0]), 0.0],
            thickness: MIN_THICKNESS + THICKNESS_RANGE * sigmoid(z[1]),
        },
        _ => ClothParams {
            coverage: [sigmoid(z[0]), sigmoid(z[1])],
            thickness: MIN_THICKNESS + THICKNESS_RANGE * sigmoid(z[2]),
        },
    })
}

/// Evaluator realising `C(x, z, g, beta)`.
#[derive(Debug, Clone)]
pub enum DistanceFieldBackend {
    Procedural(ProceduralBackend),
    Grid(GridBackend),
}

/// A field with its latent already decoded, ready for repeated queries.
pub enum ClothField<'a> {
    Procedural(ProceduralField<'a>),
    Grid(&'a crate::grid::ScalarGrid),
}

impl ClothField<'_> {
    pub fn eval(&self, p: &Point) -> f64 {
        self.eval_capped(p, f64::INFINITY)
    }

    /// `min(C(p), cap)`; cheaper than `eval` for small caps.
    pub fn eval_capped(&self, p: &Point, cap: f64) -> f64 {
        match self {
            ClothField::Procedural(f) => f.eval_capped(p, cap, None),
            ClothField::Grid(g) => g.interpolate(p).max(0.0).min(cap),
        }
    }

    /// Like `eval_capped` but restricted to one foot for shoes.
    pub fn eval_side(&self, p: &Point, cap: f64, side: Option<Side>) -> f64 {
        match self {
            ClothField::Procedural(f) => f.eval_capped(p, cap, side),
            ClothField::Grid(g) => g.interpolate(p).max(0.0).min(cap),
        }
    }
}

impl DistanceFieldBackend {
    pub fn field(&self, latent: &ClothLatent) -> Result<ClothField<'_>> {
        match self {
            DistanceFieldBackend::Procedural(b) => Ok(ClothField::Procedural(b.prepare(latent)?)),
            DistanceFieldBackend::Grid(g) => {
                latent.validate()?;
                g.grid(latent.cloth_type).map(ClothField::Grid)
            }
        }
    }

    /// Field decoded from explicit surface parameters (procedural only).
    pub fn field_from_params(
        &self,
        cloth: ClothType,
        params: ClothParams,
    ) -> Result<ClothField<'_>> {
        match self {
            DistanceFieldBackend::Procedural(b) => {
                Ok(ClothField::Procedural(b.prepare_params(cloth, params)))
            }
            DistanceFieldBackend::Grid(g) => g.grid(cloth).map(ClothField::Grid),
        }
    }

    pub fn check_body(&self, body: &TPoseBody) -> Result<()> {
        match self {
            DistanceFieldBackend::Procedural(b) => b.check_body(body),
            DistanceFieldBackend::Grid(_) => Ok(()),
        }
    }
}

/// Single-point convenience wrapper; prefer `DistanceFieldBackend::field`
/// for batches.
pub fn udf_eval(
    backend: &DistanceFieldBackend,
    x: &Point,
    state: &ClothState,
    cloth: ClothType,
    body: &TPoseBody,
) -> Result<f64> {
    backend.check_body(body)?;
    Ok(backend.field(state.latent(cloth))?.eval(x))
}
