//! Chamfer distance after projection-paired similarity alignment, and the
//! body-cloth correspondence score.

use nalgebra::{Matrix3, SVD};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::body::{skin_vertices, vertex_transforms, PoseParams, TPoseBody};
use crate::clothfield::ClothType;
use crate::constants::BCC_THRESHOLD;
use crate::densepose::{map_all_pixels, ObservationSet, LABEL_NON_CLOTH};
use crate::error::{Error, Result};
use crate::geometry::{Point, TriangleSurface, Vec3};
use crate::mesh::Mesh;
use crate::meshing::ClothMesh;
use crate::raster::{rasterize, Camera};

/// Posed ground-truth surface from a registered mesh in the body's topology.
pub fn build_gt_surface(registered: &Mesh, tpose: &TPoseBody, theta: &PoseParams) -> Result<Mesh> {
    theta.validate()?;
    let nb = tpose.model.vertex_count();
    if registered.vertices.len() == nb && registered.attachment.is_none() {
        return Ok(Mesh::new(
            skin_vertices(tpose, &registered.vertices, theta),
            registered.faces.clone(),
        ));
    }
    // other topologies follow the body vertex each point is attached to
    let attach = registered.attachment.as_ref().ok_or_else(|| {
        Error::validation(format!(
            "registered mesh has {} vertices and no attachment, body topology has {nb}",
            registered.vertices.len()
        ))
    })?;
    if attach.len() != registered.vertices.len() || attach.iter().any(|&a| a >= nb) {
        return Err(Error::validation("attachment does not index body vertices"));
    }
    let tr = vertex_transforms(tpose, theta);
    Ok(Mesh {
        vertices: registered
            .vertices
            .iter()
            .zip(attach)
            .map(|(p, &a)| tr[a].apply(p))
            .collect(),
        faces: registered.faces.clone(),
        attachment: registered.attachment.clone(),
    })
}

/// `(recon, gt)` face-centroid pairs at every pixel both meshes cover.
pub fn match_vertex_pairs(recon: &Mesh, gt: &Mesh, camera: &Camera) -> Result<Vec<(Point, Point)>> {
    if recon.faces.is_empty() || gt.faces.is_empty() {
        return Err(Error::validation(
            "vertex pairing needs two non-empty meshes",
        ));
    }
    let ra = rasterize(recon, camera)?;
    let ga = rasterize(gt, camera)?;
    Ok(ra
        .face
        .iter()
        .zip(&ga.face)
        .filter(|(r, g)| **r >= 0 && **g >= 0)
        .map(|(&r, &g)| {
            (
                recon.face_centroid(r as usize),
                gt.face_centroid(g as usize),
            )
        })
        .collect())
}

/// `x -> s R x + t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimilarityTransform {
    pub scale: f64,
    pub rotation: Matrix3<f64>,
    pub translation: Vec3,
}

impl SimilarityTransform {
    pub fn identity() -> Self {
        SimilarityTransform {
            scale: 1.0,
            rotation: Matrix3::identity(),
            translation: Vec3::zeros(),
        }
    }

    pub fn apply(&self, p: &Point) -> Point {
        Point::from(self.rotation * p.coords * self.scale + self.translation)
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        SimilarityTransform {
            scale: 1.0 / self.scale,
            rotation: rt,
            translation: -(rt * self.translation) / self.scale,
        }
    }

    pub fn apply_mesh(&self, m: &Mesh) -> Mesh {
        m.map_vertices(|p| self.apply(p))
    }
}

/// Least-squares similarity taking the first point of each pair onto the
/// second (closed form via SVD of the cross-covariance).
pub fn estimate_similarity(pairs: &[(Point, Point)]) -> Result<SimilarityTransform> {
    if pairs.len() < 3 {
        return Err(Error::Degenerate(format!(
            "need at least 3 pairs, got {}",
            pairs.len()
        )));
    }
    let n = pairs.len() as f64;
    let mu_a = pairs.iter().fold(Vec3::zeros(), |s, (a, _)| s + a.coords) / n;
    let mu_b = pairs.iter().fold(Vec3::zeros(), |s, (_, b)| s + b.coords) / n;
    let mut cov = Matrix3::zeros();
    let mut scatter = Matrix3::zeros();
    let mut var_a = 0.0;
    for (a, b) in pairs {
        let da = a.coords - mu_a;
        let db = b.coords - mu_b;
        cov += db * da.transpose();
        scatter += da * da.transpose();
        var_a += da.norm_squared();
    }
    cov /= n;
    var_a /= n;
    let sv = scatter.singular_values();
    let mut s = [sv[0], sv[1], sv[2]];
    s.sort_by(|x, y| y.total_cmp(x));
    if !(var_a > 0.0) || s[1] <= 1e-12 * s[0] {
        return Err(Error::Degenerate(
            "source points are coincident or collinear".into(),
        ));
    }
    let svd = SVD::new(cov, true, true);
    let (u, v_t) = (svd.u.unwrap(), svd.v_t.unwrap());
    // reflection fix-up on the weakest direction; nalgebra leaves the
    // singular values unsorted
    let mut d = Matrix3::identity();
    if (u * v_t).determinant() < 0.0 {
        let k = (0..3)
            .min_by(|&i, &j| svd.singular_values[i].total_cmp(&svd.singular_values[j]))
            .unwrap();
        d[(k, k)] = -1.0;
    }
    let rotation = u * d * v_t;
    let trace: f64 = (0..3).map(|i| svd.singular_values[i] * d[(i, i)]).sum();
    let scale = trace / var_a;
    if !(scale.is_finite() && scale > 0.0) {
        return Err(Error::Degenerate(
            "target points do not determine a positive scale".into(),
        ));
    }
    let translation = mu_b - rotation * mu_a * scale;
    Ok(SimilarityTransform {
        scale,
        rotation,
        translation,
    })
}

fn mean_distance(points: &[Point], surface: &TriangleSurface) -> f64 {
    let d: Vec<f64> = points.par_iter().map(|p| surface.distance(p)).collect();
    d.iter().sum::<f64>() / d.len() as f64
}

/// Symmetric mean vertex-to-surface distance in millimeters.
pub fn chamfer_distance(a: &Mesh, b: &Mesh) -> Result<f64> {
    if a.faces.is_empty() || b.faces.is_empty() {
        return Err(Error::validation(
            "chamfer distance needs two non-empty meshes",
        ));
    }
    let da = mean_distance(&a.vertices, &b.surface());
    let db = mean_distance(&b.vertices, &a.surface());
    Ok(500.0 * (da + db))
}

/// Pair by projection, align the reconstruction, then measure.
pub fn evaluate_cd(
    recon: &Mesh,
    gt: &Mesh,
    camera: &Camera,
) -> Result<(f64, SimilarityTransform, usize)> {
    let pairs = match_vertex_pairs(recon, gt, camera)?;
    let t = estimate_similarity(&pairs)?;
    let cd = chamfer_distance(&t.apply_mesh(recon), gt)?;
    Ok((cd, t, pairs.len()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BccClass {
    UpperBody,
    LowerBody,
    NonCloth,
}

impl BccClass {
    pub const ALL: [BccClass; 3] = [BccClass::UpperBody, BccClass::LowerBody, BccClass::NonCloth];

    /// Class of a segmentation label; shoes and background have none.
    pub fn of_label(label: u8) -> Option<BccClass> {
        if label == LABEL_NON_CLOTH {
            return Some(BccClass::NonCloth);
        }
        ClothType::from_label(label).and_then(BccClass::of_cloth)
    }

    pub fn of_cloth(c: ClothType) -> Option<BccClass> {
        match c {
            ClothType::UpperCloth | ClothType::Coat => Some(BccClass::UpperBody),
            ClothType::Pants | ClothType::Skirt => Some(BccClass::LowerBody),
            ClothType::Shoes => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BccReport {
    /// Per class: proportion correct, `None` when the class has no points.
    pub upper_body: Option<f64>,
    pub lower_body: Option<f64>,
    pub non_cloth: Option<f64>,
    pub average: f64,
    pub counts: [usize; 3],
    /// Classes omitted from the average for lack of points.
    pub missing: Vec<BccClass>,
}

/// Body-cloth correspondence of canonical cloth meshes against the
/// observation's segmentation lifted to the T-pose surface.
pub fn evaluate_bcc(
    recon_cloths: &[ClothMesh],
    obs: &ObservationSet,
    tpose: &TPoseBody,
) -> Result<BccReport> {
    let points = map_all_pixels(obs, tpose)?;
    let surfaces: Vec<(Option<BccClass>, TriangleSurface)> = recon_cloths
        .iter()
        .filter(|c| !c.mesh.faces.is_empty())
        .map(|c| (BccClass::of_cloth(c.cloth_type), c.mesh.surface()))
        .collect();
    let near = |p: &Point, class: Option<BccClass>| {
        surfaces
            .iter()
            .filter(|(c, _)| class.is_none() || *c == class)
            .any(|(_, s)| s.distance_capped(p, BCC_THRESHOLD) < BCC_THRESHOLD)
    };
    let verdicts: Vec<Option<(usize, bool)>> = points
        .par_iter()
        .map(|m| {
            let class = BccClass::of_label(m.label)?;
            let ok = match class {
                BccClass::NonCloth => !near(&m.position, None),
                c => near(&m.position, Some(c)),
            };
            Some((class as usize, ok))
        })
        .collect();
    let mut counts = [0usize; 3];
    let mut correct = [0usize; 3];
    for (k, ok) in verdicts.into_iter().flatten() {
        counts[k] += 1;
        correct[k] += ok as usize;
    }
    let score = |k: usize| (counts[k] > 0).then(|| correct[k] as f64 / counts[k] as f64);
    let present: Vec<f64> = (0..3).filter_map(score).collect();
    let missing = BccClass::ALL
        .into_iter()
        .filter(|c| counts[*c as usize] == 0)
        .collect();
    let average = if present.is_empty() {
        0.0
    } else {
        present.iter().sum::<f64>() / present.len() as f64
    };
    Ok(BccReport {
        upper_body: score(0),
        lower_body: score(1),
        non_cloth: score(2),
        average,
        counts,
        missing,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub cd_mm: f64,
    pub bcc: BccReport,
    pub matched_pairs: usize,
    pub alignment: SimilarityTransform,
}
