//! Parametric T-posed body: shape blendshapes, joint regression and linear
//! blend skinning over a 24-joint SMPL-style skeleton.

mod attach;
mod io;
mod procedural;

use std::sync::Arc;

use nalgebra::{Matrix3, Rotation3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Point, Vec3};
use crate::mesh::Mesh;

pub use attach::{nearest_vertex_brute, pose_attached_points, VertexLocator};
pub use procedural::{make_procedural_body, nominal_joints, BodySpec};

pub const JOINT_COUNT: usize = 24;
pub const SHAPE_DIM: usize = 10;

pub const JOINT_NAMES: [&str; JOINT_COUNT] = [
    "pelvis",
    "L_hip",
    "R_hip",
    "spine1",
    "L_knee",
    "R_knee",
    "spine2",
    "L_ankle",
    "R_ankle",
    "chest",
    "L_toe",
    "R_toe",
    "neck",
    "L_collar",
    "R_collar",
    "head",
    "L_shoulder",
    "R_shoulder",
    "L_elbow",
    "R_elbow",
    "L_wrist",
    "R_wrist",
    "L_hand",
    "R_hand",
];

pub const JOINT_PARENTS: [Option<usize>; JOINT_COUNT] = [
    None,
    Some(0),
    Some(0),
    Some(0),
    Some(1),
    Some(2),
    Some(3),
    Some(4),
    Some(5),
    Some(6),
    Some(7),
    Some(8),
    Some(9),
    Some(9),
    Some(9),
    Some(12),
    Some(13),
    Some(14),
    Some(16),
    Some(17),
    Some(18),
    Some(19),
    Some(20),
    Some(21),
];

/// Joint indices by name.
pub mod joint {
    pub const PELVIS: usize = 0;
    pub const L_HIP: usize = 1;
    pub const R_HIP: usize = 2;
    pub const SPINE1: usize = 3;
    pub const L_KNEE: usize = 4;
    pub const R_KNEE: usize = 5;
    pub const SPINE2: usize = 6;
    pub const L_ANKLE: usize = 7;
    pub const R_ANKLE: usize = 8;
    pub const CHEST: usize = 9;
    pub const L_TOE: usize = 10;
    pub const R_TOE: usize = 11;
    pub const NECK: usize = 12;
    pub const L_COLLAR: usize = 13;
    pub const R_COLLAR: usize = 14;
    pub const HEAD: usize = 15;
    pub const L_SHOULDER: usize = 16;
    pub const R_SHOULDER: usize = 17;
    pub const L_ELBOW: usize = 18;
    pub const R_ELBOW: usize = 19;
    pub const L_WRIST: usize = 20;
    pub const R_WRIST: usize = 21;
    pub const L_HAND: usize = 22;
    pub const R_HAND: usize = 23;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gender {
    Male,
    Female,
    Neutral,
}

/// Coarse body region a vertex belongs to, from its dominant skinning joint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BodyPart {
    Head,
    Torso,
    LeftArm,
    RightArm,
    LeftLeg,
    RightLeg,
    LeftFoot,
    RightFoot,
}

impl BodyPart {
    pub fn of_joint(j: usize) -> BodyPart {
        use joint::*;
        match j {
            NECK | HEAD => BodyPart::Head,
            L_SHOULDER | L_ELBOW | L_WRIST | L_HAND => BodyPart::LeftArm,
            R_SHOULDER | R_ELBOW | R_WRIST | R_HAND => BodyPart::RightArm,
            L_HIP | L_KNEE => BodyPart::LeftLeg,
            R_HIP | R_KNEE => BodyPart::RightLeg,
            L_ANKLE | L_TOE => BodyPart::LeftFoot,
            R_ANKLE | R_TOE => BodyPart::RightFoot,
            _ => BodyPart::Torso,
        }
    }

    pub fn is_arm(self) -> bool {
        matches!(self, BodyPart::LeftArm | BodyPart::RightArm)
    }

    pub fn is_leg(self) -> bool {
        matches!(self, BodyPart::LeftLeg | BodyPart::RightLeg)
    }

    pub fn is_foot(self) -> bool {
        matches!(self, BodyPart::LeftFoot | BodyPart::RightFoot)
    }
}

/// SMPL-compatible body model.
#[derive(Debug, Clone, PartialEq)]
pub struct BodyModel {
    pub template_vertices: Vec<Point>,
    pub faces: Vec<[usize; 3]>,
    pub joint_names: Vec<String>,
    pub joint_parents: Vec<Option<usize>>,
    /// Row-major `joint_count x vertex_count`; each row is an affine combination.
    pub joint_regressor: Vec<f64>,
    /// Row-major `vertex_count x joint_count`.
    pub skin_weights: Vec<f64>,
    /// `SHAPE_DIM` displacement fields, one vector per vertex each.
    pub shape_basis: Vec<Vec<Vec3>>,
    pub gender: Gender,
}

impl BodyModel {
    pub fn vertex_count(&self) -> usize {
        self.template_vertices.len()
    }

    pub fn joint_count(&self) -> usize {
        self.joint_parents.len()
    }

    pub fn weights(&self, v: usize) -> &[f64] {
        let j = self.joint_count();
        &self.skin_weights[v * j..(v + 1) * j]
    }

    pub fn joint_index(&self, name: &str) -> Result<usize> {
        self.joint_names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::Config(format!("body model has no joint named {name:?}")))
    }

    pub fn validate(&self) -> Result<()> {
        let nv = self.vertex_count();
        let nj = self.joint_count();
        if nj != JOINT_COUNT {
            return Err(Error::validation(format!(
                "expected {JOINT_COUNT} joints, found {nj}"
            )));
        }
        if self.joint_names.len() != nj {
            return Err(Error::validation(
                "joint name count differs from joint count",
            ));
        }
        if self.joint_parents[0].is_some() {
            return Err(Error::validation("joint 0 (pelvis) must be the root"));
        }
        for (j, p) in self.joint_parents.iter().enumerate().skip(1) {
            match p {
                Some(p) if *p < j => {}
                _ => {
                    return Err(Error::validation(format!(
                        "joint {j} parent must precede it"
                    )))
                }
            }
        }
        if let Some(f) = self.faces.iter().flatten().find(|&&i| i >= nv) {
            return Err(Error::validation(format!("face index {f} out of range")));
        }
        if self.skin_weights.len() != nv * nj {
            return Err(Error::validation("skin weight table has wrong size"));
        }
        for v in 0..nv {
            let w = self.weights(v);
            if w.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
                return Err(Error::validation(format!(
                    "vertex {v} has a negative skin weight"
                )));
            }
            let s: f64 = w.iter().sum();
            if (s - 1.0).abs() > 1e-6 {
                return Err(Error::validation(format!(
                    "vertex {v} skin weights sum to {s}"
                )));
            }
        }
        if self.joint_regressor.len() != nv * nj {
            return Err(Error::validation("joint regressor has wrong size"));
        }
        for j in 0..nj {
            let s: f64 = self.joint_regressor[j * nv..(j + 1) * nv].iter().sum();
            if (s - 1.0).abs() > 1e-6 {
                return Err(Error::validation(format!(
                    "regressor row {j} sums to {s}, not 1"
                )));
            }
        }
        if self.shape_basis.len() != SHAPE_DIM {
            return Err(Error::validation(format!(
                "shape basis must have {SHAPE_DIM} directions"
            )));
        }
        if self.shape_basis.iter().any(|b| b.len() != nv) {
            return Err(Error::validation(
                "shape basis direction has wrong vertex count",
            ));
        }
        if self
            .template_vertices
            .iter()
            .any(|v| !v.iter().all(|c| c.is_finite()))
        {
            return Err(Error::validation("template has non-finite vertices"));
        }
        Ok(())
    }

    pub fn regress_joints(&self, vertices: &[Point]) -> Vec<Point> {
        let nv = self.vertex_count();
        (0..self.joint_count())
            .map(|j| {
                let row = &self.joint_regressor[j * nv..(j + 1) * nv];
                let mut acc = Vec3::zeros();
                for (w, v) in row.iter().zip(vertices) {
                    if *w != 0.0 {
                        acc += v.coords * *w;
                    }
                }
                Point::from(acc)
            })
            .collect()
    }

    /// Joint with the largest skinning weight per vertex (lowest index on ties).
    pub fn dominant_joints(&self) -> Vec<usize> {
        (0..self.vertex_count())
            .map(|v| {
                let w = self.weights(v);
                let mut best = 0;
                for j in 1..w.len() {
                    if w[j] > w[best] {
                        best = j;
                    }
                }
                best
            })
            .collect()
    }

    pub fn vertex_parts(&self) -> Vec<BodyPart> {
        self.dominant_joints()
            .into_iter()
            .map(BodyPart::of_joint)
            .collect()
    }

    pub fn template_mesh(&self) -> Mesh {
        Mesh::new(self.template_vertices.clone(), self.faces.clone())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShapeParams {
    pub beta: [f64; SHAPE_DIM],
}

impl Default for ShapeParams {
    fn default() -> Self {
        ShapeParams {
            beta: [0.0; SHAPE_DIM],
        }
    }
}

impl ShapeParams {
    pub fn validate(&self) -> Result<()> {
        for (k, b) in self.beta.iter().enumerate() {
            if !b.is_finite() || b.abs() > 5.0 {
                return Err(Error::validation(format!(
                    "beta[{k}] = {b} outside [-5, 5]"
                )));
            }
        }
        Ok(())
    }
}

/// Per-joint axis-angle rotations relative to the rest pose.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseParams {
    pub theta: [[f64; 3]; JOINT_COUNT],
}

impl Default for PoseParams {
    fn default() -> Self {
        PoseParams {
            theta: [[0.0; 3]; JOINT_COUNT],
        }
    }
}

impl PoseParams {
    pub fn validate(&self) -> Result<()> {
        for (j, aa) in self.theta.iter().enumerate() {
            let n = Vec3::from(*aa).norm();
            if !n.is_finite() || n > std::f64::consts::PI + 1e-12 {
                return Err(Error::validation(format!(
                    "joint {j} rotation angle {n} exceeds pi"
                )));
            }
        }
        Ok(())
    }

    pub fn is_identity(&self) -> bool {
        self.theta.iter().all(|a| a.iter().all(|&x| x == 0.0))
    }

    pub fn rotation(&self, j: usize) -> Matrix3<f64> {
        *Rotation3::from_scaled_axis(Vec3::from(self.theta[j])).matrix()
    }

    pub fn set_rotation(&mut self, j: usize, r: &Matrix3<f64>) {
        let rot = Rotation3::from_matrix_unchecked(*r);
        let aa = rot.scaled_axis();
        self.theta[j] = [aa.x, aa.y, aa.z];
    }
}

/// Shaped T-pose body.
#[derive(Debug, Clone)]
pub struct TPoseBody {
    pub vertices: Vec<Point>,
    pub joints: Vec<Point>,
    pub model: Arc<BodyModel>,
}

impl TPoseBody {
    pub fn mesh(&self) -> Mesh {
        Mesh::new(self.vertices.clone(), self.model.faces.clone())
    }

    /// `(v_min^z, v_max^z)` over the T-pose vertices.
    pub fn z_extent(&self) -> (f64, f64) {
        self.vertices
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                (lo.min(v.z), hi.max(v.z))
            })
    }

    pub fn joint(&self, name: &str) -> Result<Point> {
        Ok(self.joints[self.model.joint_index(name)?])
    }
}

pub fn shape_body(model: &Arc<BodyModel>, beta: &ShapeParams) -> Result<TPoseBody> {
    beta.validate()?;
    let mut vertices = model.template_vertices.clone();
    for (b, dirs) in beta.beta.iter().zip(&model.shape_basis) {
        if *b == 0.0 {
            continue;
        }
        for (v, d) in vertices.iter_mut().zip(dirs) {
            *v += d * *b;
        }
    }
    let joints = model.regress_joints(&vertices);
    Ok(TPoseBody {
        vertices,
        joints,
        model: Arc::clone(model),
    })
}

/// Affine per-joint skinning transform `x -> m x + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointTransform {
    pub m: Matrix3<f64>,
    pub t: Vec3,
}

impl JointTransform {
    pub fn apply(&self, p: &Point) -> Point {
        Point::from(self.m * p.coords + self.t)
    }
}

/// World skinning transforms composed down the hierarchy: each joint rotates
/// its subtree about its own rest location.
pub fn joint_transforms(tpose: &TPoseBody, theta: &PoseParams) -> Vec<JointTransform> {
    let model = &tpose.model;
    let mut out: Vec<JointTransform> = Vec::with_capacity(model.joint_count());
    for j in 0..model.joint_count() {
        let r = theta.rotation(j);
        let jp = tpose.joints[j].coords;
        // local: x -> r (x - J) + J
        let local_t = jp - r * jp;
        let tr = match model.joint_parents[j] {
            None => JointTransform { m: r, t: local_t },
            Some(p) => {
                let parent = out[p];
                JointTransform {
                    m: parent.m * r,
                    t: parent.m * local_t + parent.t,
                }
            }
        };
        out.push(tr);
    }
    out
}

/// Blend the joint transforms with one vertex's skinning weights.
pub fn blend_transform(weights: &[f64], transforms: &[JointTransform]) -> JointTransform {
    let mut m = Matrix3::zeros();
    let mut t = Vec3::zeros();
    for (w, tr) in weights.iter().zip(transforms) {
        if *w != 0.0 {
            m += tr.m * *w;
            t += tr.t * *w;
        }
    }
    JointTransform { m, t }
}

/// Per-vertex blended skinning transforms for the body.
pub fn vertex_transforms(tpose: &TPoseBody, theta: &PoseParams) -> Vec<JointTransform> {
    let transforms = joint_transforms(tpose, theta);
    (0..tpose.model.vertex_count())
        .map(|v| blend_transform(tpose.model.weights(v), &transforms))
        .collect()
}

/// Linear blend skinning of an arbitrary vertex set sharing the body topology.
pub fn skin_vertices(tpose: &TPoseBody, vertices: &[Point], theta: &PoseParams) -> Vec<Point> {
    if theta.is_identity() {
        return vertices.to_vec();
    }
    let per_vertex = vertex_transforms(tpose, theta);
    vertices
        .iter()
        .zip(&per_vertex)
        .map(|(v, tr)| tr.apply(v))
        .collect()
}

pub fn pose_body(tpose: &TPoseBody, theta: &PoseParams) -> Result<Mesh> {
    theta.validate()?;
    Ok(Mesh::new(
        skin_vertices(tpose, &tpose.vertices, theta),
        tpose.model.faces.clone(),
    ))
}

pub use io::{read_body_model, write_body_model};
