//! Cloth segmentations and their lifting onto the T-pose body surface
//! through per-pixel body correspondences.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::body::{BodyPart, Gender, PoseParams, TPoseBody};
use crate::clothfield::{ClothType, N_CLOTHES};
use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::raster::{Camera, FaceIndexMap};

pub const LABEL_BACKGROUND: u8 = 255;
pub const LABEL_NON_CLOTH: u8 = 0;
/// Pixels a body part needs before it counts as visible.
pub const PART_VISIBILITY_PIXELS: usize = 50;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClothSegmentation {
    pub width: usize,
    pub height: usize,
    pub labels: Vec<u8>,
}

fn valid_label(l: u8) -> bool {
    l == LABEL_BACKGROUND || l <= N_CLOTHES as u8
}

impl ClothSegmentation {
    pub fn background(width: usize, height: usize) -> Self {
        ClothSegmentation {
            width,
            height,
            labels: vec![LABEL_BACKGROUND; width * height],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.labels.len() != self.width * self.height {
            return Err(Error::validation("segmentation size mismatch"));
        }
        if let Some(l) = self.labels.iter().find(|&&l| !valid_label(l)) {
            return Err(Error::validation(format!("invalid segmentation label {l}")));
        }
        Ok(())
    }

    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.labels[y * self.width + x]
    }

    pub fn contains(&self, label: u8) -> bool {
        self.labels.contains(&label)
    }

    pub fn count(&self, label: u8) -> usize {
        self.labels.iter().filter(|&&l| l == label).count()
    }

    /// Binary PGM (P5) encoding.
    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.labels);
        out
    }

    pub fn from_pgm(bytes: &[u8]) -> Result<Self> {
        let mut pos = 0;
        let mut fields = Vec::with_capacity(4);
        while fields.len() < 4 {
            while pos < bytes.len() && (bytes[pos].is_ascii_whitespace() || bytes[pos] == b'#') {
                if bytes[pos] == b'#' {
                    while pos < bytes.len() && bytes[pos] != b'\n' {
                        pos += 1;
                    }
                } else {
                    pos += 1;
                }
            }
            let start = pos;
            while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if start == pos {
                return Err(Error::format("truncated PGM header"));
            }
            fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
        }
        if fields[0] != "P5" {
            return Err(Error::format(format!(
                "expected P5 PGM, found {:?}",
                fields[0]
            )));
        }
        let num = |s: &str| {
            s.parse::<usize>()
                .map_err(|_| Error::format(format!("bad PGM header field {s:?}")))
        };
        let (width, height, maxval) = (num(&fields[1])?, num(&fields[2])?, num(&fields[3])?);
        if maxval != 255 {
            return Err(Error::format("segmentation PGM must be 8-bit"));
        }
        pos += 1; // single whitespace before the raster
        let data = bytes
            .get(pos..pos + width * height)
            .ok_or_else(|| Error::format("truncated PGM raster"))?;
        let seg = ClothSegmentation {
            width,
            height,
            labels: data.to_vec(),
        };
        seg.validate().map_err(|e| Error::format(e.to_string()))?;
        Ok(seg)
    }

    pub fn write_file(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_pgm())?;
        Ok(())
    }

    pub fn read_file(path: &Path) -> Result<Self> {
        Self::from_pgm(&std::fs::read(path)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Existence {
    True,
    False,
    Unsupervised,
}

/// Segmentation, body correspondences and camera for one image.
#[derive(Debug, Clone)]
pub struct ObservationSet {
    pub segmentation: ClothSegmentation,
    /// Rasterized posed body; face indices refer to the body topology.
    pub densepose: FaceIndexMap,
    pub camera: Camera,
    /// Body pose accompanying the image; places canonical points in it.
    pub pose: PoseParams,
    pub gender: Gender,
    pub existence: [Existence; N_CLOTHES],
}

impl ObservationSet {
    pub fn validate(&self) -> Result<()> {
        self.segmentation.validate()?;
        self.camera.validate()?;
        let (w, h) = (self.segmentation.width, self.segmentation.height);
        if self.densepose.width != w || self.densepose.height != h {
            return Err(Error::validation("segmentation and densepose sizes differ"));
        }
        if self.camera.width != w || self.camera.height != h {
            return Err(Error::validation("camera and segmentation sizes differ"));
        }
        Ok(())
    }

    /// Row-major indices of pixels with a body correspondence and a
    /// non-background label.
    pub fn eligible_pixels(&self) -> Vec<usize> {
        (0..self.densepose.face.len())
            .filter(|&i| {
                self.densepose.face[i] >= 0 && self.segmentation.labels[i] != LABEL_BACKGROUND
            })
            .collect()
    }
}

/// A segmentation pixel lifted onto the T-pose surface.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MappedClothPoint {
    pub position: Point,
    pub label: u8,
    pub pixel: (usize, usize),
}

fn lift(obs: &ObservationSet, tpose: &TPoseBody, i: usize) -> Result<MappedClothPoint> {
    let f = obs.densepose.face[i] as usize;
    let face = tpose
        .model
        .faces
        .get(f)
        .ok_or_else(|| Error::validation(format!("densepose face {f} not in body topology")))?;
    let b = obs.densepose.bary[i];
    let p = tpose.vertices[face[0]].coords * b[0]
        + tpose.vertices[face[1]].coords * b[1]
        + tpose.vertices[face[2]].coords * b[2];
    let w = obs.segmentation.width;
    Ok(MappedClothPoint {
        position: Point::from(p),
        label: obs.segmentation.labels[i],
        pixel: (i % w, i / w),
    })
}

/// Lift up to `n_points` eligible pixels, drawn uniformly without
/// replacement, to the T-pose surface. Output follows pixel order.
pub fn cloth_to_body_map(
    obs: &ObservationSet,
    tpose: &TPoseBody,
    n_points: usize,
    seed: u64,
) -> Result<Vec<MappedClothPoint>> {
    obs.validate()?;
    if n_points == 0 {
        return Err(Error::validation("need at least one sample point"));
    }
    let eligible = obs.eligible_pixels();
    let chosen: Vec<usize> = if eligible.len() <= n_points {
        eligible
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut idx = rand::seq::index::sample(&mut rng, eligible.len(), n_points).into_vec();
        idx.sort_unstable();
        idx.into_iter().map(|k| eligible[k]).collect()
    };
    chosen.into_iter().map(|i| lift(obs, tpose, i)).collect()
}

/// Every eligible pixel lifted, in pixel order.
pub fn map_all_pixels(obs: &ObservationSet, tpose: &TPoseBody) -> Result<Vec<MappedClothPoint>> {
    obs.validate()?;
    obs.eligible_pixels()
        .into_iter()
        .map(|i| lift(obs, tpose, i))
        .collect()
}

/// Body parts whose visibility decides whether a garment can be supervised.
fn parts_of(cloth: ClothType) -> fn(BodyPart) -> bool {
    match cloth {
        ClothType::UpperCloth | ClothType::Coat => |p| p == BodyPart::Torso || p.is_arm(),
        ClothType::Pants | ClothType::Skirt => |p| p.is_leg(),
        ClothType::Shoes => |p| p.is_foot(),
    }
}

/// Per garment, whether its body parts cover at least
/// `PART_VISIBILITY_PIXELS` pixels of the correspondence map. A pixel's part
/// is that of the face vertex with the largest barycentric weight.
pub fn part_visibility(obs: &ObservationSet, tpose: &TPoseBody) -> [bool; N_CLOTHES] {
    let parts = tpose.model.vertex_parts();
    let mut counts = [0usize; N_CLOTHES];
    for (i, &f) in obs.densepose.face.iter().enumerate() {
        if f < 0 {
            continue;
        }
        let Some(face) = tpose.model.faces.get(f as usize) else {
            continue;
        };
        let b = obs.densepose.bary[i];
        let k = if b[0] >= b[1] && b[0] >= b[2] {
            0
        } else if b[1] >= b[2] {
            1
        } else {
            2
        };
        let part = parts[face[k]];
        for c in ClothType::ALL {
            if parts_of(c)(part) {
                counts[c.index()] += 1;
            }
        }
    }
    counts.map(|n| n >= PART_VISIBILITY_PIXELS)
}

/// Tri-state existence supervision: present label is true; absent label
/// with visible parts is false; otherwise unsupervised.
pub fn existence_labels(
    obs: &ObservationSet,
    part_visibility: &[bool; N_CLOTHES],
) -> [Existence; N_CLOTHES] {
    let mut present = [false; N_CLOTHES];
    for &l in &obs.segmentation.labels {
        if let Some(c) = ClothType::from_label(l) {
            present[c.index()] = true;
        }
    }
    std::array::from_fn(|i| {
        if present[i] {
            Existence::True
        } else if part_visibility[i] {
            Existence::False
        } else {
            Existence::Unsupervised
        }
    })
}
