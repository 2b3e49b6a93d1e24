//! Capsule humanoid used in place of SMPL assets.
//!
//! Every limb is a tube of elliptical rings swept along a straight axis and
//! closed with hemispherical caps. Joints sit at the centres of dedicated
//! rings, so the regressor is an average over ring vertices and reproduces
//! the nominal joint positions. Skinning is rigid: each ring is bound to a
//! single joint. The right side is the exact mirror image of the left.

use serde::{Deserialize, Serialize};

use super::{joint, BodyModel, Gender, JOINT_COUNT, JOINT_NAMES, JOINT_PARENTS, SHAPE_DIM};
use crate::error::{Error, Result};
use crate::geometry::{Point, Vec3};

/// Proportions (meters) and tessellation of the procedural body.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BodySpec {
    pub pelvis_height: f64,
    pub hip_drop: f64,
    pub hip_half_width: f64,
    pub knee_height: f64,
    pub ankle_height: f64,
    /// Heights of spine1, spine2 and chest above the pelvis.
    pub spine_offsets: [f64; 3],
    pub shoulder_height: f64,
    pub neck_height: f64,
    pub head_height: f64,
    pub collar_half_width: f64,
    pub shoulder_half_width: f64,
    pub upper_arm: f64,
    pub forearm: f64,
    pub palm: f64,
    pub finger: f64,
    pub heel_back: f64,
    pub toe_forward: f64,
    pub toe_tip: f64,
    pub foot_height: f64,
    pub torso_bottom: f64,
    /// Torso half-extents along x and z.
    pub torso_radii: [f64; 2],
    pub neck_radius: f64,
    pub head_radius: f64,
    /// Arm radius at the shoulder, elbow and wrist.
    pub arm_radii: [f64; 3],
    /// Hand half-thickness (y) and half-width (z).
    pub hand_radii: [f64; 2],
    /// Leg radius at the hip, knee and ankle.
    pub leg_radii: [f64; 3],
    /// Foot half-width (x) and half-height (y).
    pub foot_radii: [f64; 2],
    /// Vertices per ring.
    pub segments: usize,
    /// Maximum spacing between consecutive rings.
    pub ring_spacing: f64,
    /// Latitude rings per hemispherical cap.
    pub cap_rings: usize,
}

impl Default for BodySpec {
    fn default() -> Self {
        BodySpec {
            pelvis_height: 0.95,
            hip_drop: 0.07,
            hip_half_width: 0.09,
            knee_height: 0.50,
            ankle_height: 0.09,
            spine_offsets: [0.10, 0.22, 0.35],
            shoulder_height: 1.43,
            neck_height: 1.50,
            head_height: 1.64,
            collar_half_width: 0.07,
            shoulder_half_width: 0.18,
            upper_arm: 0.27,
            forearm: 0.25,
            palm: 0.08,
            finger: 0.08,
            heel_back: 0.05,
            toe_forward: 0.13,
            toe_tip: 0.05,
            foot_height: 0.035,
            torso_bottom: 0.80,
            torso_radii: [0.15, 0.10],
            neck_radius: 0.055,
            head_radius: 0.095,
            arm_radii: [0.05, 0.042, 0.035],
            hand_radii: [0.02, 0.045],
            leg_radii: [0.075, 0.05, 0.045],
            foot_radii: [0.045, 0.03],
            segments: 24,
            ring_spacing: 0.02,
            cap_rings: 3,
        }
    }
}

impl BodySpec {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("pelvis_height", self.pelvis_height),
            ("hip_drop", self.hip_drop),
            ("hip_half_width", self.hip_half_width),
            ("knee_height", self.knee_height),
            ("ankle_height", self.ankle_height),
            ("shoulder_height", self.shoulder_height),
            ("neck_height", self.neck_height),
            ("head_height", self.head_height),
            ("collar_half_width", self.collar_half_width),
            ("shoulder_half_width", self.shoulder_half_width),
            ("upper_arm", self.upper_arm),
            ("forearm", self.forearm),
            ("palm", self.palm),
            ("finger", self.finger),
            ("heel_back", self.heel_back),
            ("toe_forward", self.toe_forward),
            ("toe_tip", self.toe_tip),
            ("foot_height", self.foot_height),
            ("torso_bottom", self.torso_bottom),
            ("torso_radii[0]", self.torso_radii[0]),
            ("torso_radii[1]", self.torso_radii[1]),
            ("neck_radius", self.neck_radius),
            ("head_radius", self.head_radius),
            ("arm_radii[0]", self.arm_radii[0]),
            ("arm_radii[1]", self.arm_radii[1]),
            ("arm_radii[2]", self.arm_radii[2]),
            ("hand_radii[0]", self.hand_radii[0]),
            ("hand_radii[1]", self.hand_radii[1]),
            ("leg_radii[0]", self.leg_radii[0]),
            ("leg_radii[1]", self.leg_radii[1]),
            ("leg_radii[2]", self.leg_radii[2]),
            ("foot_radii[0]", self.foot_radii[0]),
            ("foot_radii[1]", self.foot_radii[1]),
            ("ring_spacing", self.ring_spacing),
            ("spine_offsets[0]", self.spine_offsets[0]),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::validation(format!(
                    "body dimension {name} must be positive, got {v}"
                )));
            }
        }
        if self.segments < 4 {
            return Err(Error::validation(format!(
                "need at least 4 segments per ring, got {}",
                self.segments
            )));
        }
        let hip = self.pelvis_height - self.hip_drop;
        let [s1, s2, s3] = self.spine_offsets;
        let ordered = [
            self.ankle_height,
            self.knee_height,
            hip,
            self.pelvis_height,
            self.pelvis_height + s1,
            self.pelvis_height + s2,
            self.pelvis_height + s3,
            self.shoulder_height,
            self.neck_height,
            self.head_height,
        ];
        if ordered.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::validation(
                "joint heights must increase from ankle to head",
            ));
        }
        if self.torso_bottom >= self.pelvis_height {
            return Err(Error::validation("torso must start below the pelvis"));
        }
        if self.collar_half_width >= self.shoulder_half_width {
            return Err(Error::validation("collar must be inside the shoulder"));
        }
        if self.foot_height >= self.ankle_height {
            return Err(Error::validation("foot axis must lie below the ankle"));
        }
        Ok(())
    }
}

struct Key {
    offset: f64,
    radii: [f64; 2],
}

struct Tube {
    origin: Point,
    axis: Vec3,
    u: Vec3,
    v: Vec3,
    keys: Vec<Key>,
    /// Joint owning rings in `[keys[i], keys[i + 1])`; the final key uses the last entry.
    joints: Vec<usize>,
    cap_scale: f64,
}

#[derive(Default)]
struct Builder {
    vertices: Vec<Point>,
    faces: Vec<[usize; 3]>,
    joint_of: Vec<usize>,
    axis_point: Vec<Point>,
}

impl Builder {
    /// Adds a tube and returns the vertex range of the ring at every key.
    fn add_tube(
        &mut self,
        tube: &Tube,
        segments: usize,
        spacing: f64,
        cap_rings: usize,
    ) -> Vec<std::ops::Range<usize>> {
        struct Ring {
            offset: f64,
            radii: [f64; 2],
            joint: usize,
            key: Option<usize>,
        }
        let mut rings: Vec<Ring> = Vec::new();
        for (i, pair) in tube.keys.windows(2).enumerate() {
            let (a, b) = (&pair[0], &pair[1]);
            let gap = b.offset - a.offset;
            let n = (gap / spacing).ceil().max(1.0) as usize;
            for m in 0..n {
                let s = m as f64 / n as f64;
                rings.push(Ring {
                    offset: a.offset + gap * s,
                    radii: [
                        a.radii[0] + (b.radii[0] - a.radii[0]) * s,
                        a.radii[1] + (b.radii[1] - a.radii[1]) * s,
                    ],
                    joint: tube.joints[i],
                    key: (m == 0).then_some(i),
                });
            }
        }
        let last = tube.keys.last().expect("tube needs keys");
        rings.push(Ring {
            offset: last.offset,
            radii: last.radii,
            joint: *tube.joints.last().expect("tube needs joints"),
            key: Some(tube.keys.len() - 1),
        });

        let first = &rings[0];
        let start_len = tube.cap_scale * first.radii[0].min(first.radii[1]);
        let end = rings.last().unwrap();
        let end_len = tube.cap_scale * end.radii[0].min(end.radii[1]);
        let (start_joint, start_radii, start_offset) = (first.joint, first.radii, first.offset);
        let (end_joint, end_radii, end_offset) = (end.joint, end.radii, end.offset);

        // Full ring list including cap latitudes, ordered along the axis.
        let mut all: Vec<(f64, [f64; 2], usize, Option<usize>)> = Vec::new();
        for k in (1..=cap_rings).rev() {
            let phi = k as f64 / (cap_rings + 1) as f64 * std::f64::consts::FRAC_PI_2;
            all.push((
                start_offset - start_len * phi.sin(),
                [start_radii[0] * phi.cos(), start_radii[1] * phi.cos()],
                start_joint,
                None,
            ));
        }
        for r in &rings {
            all.push((r.offset, r.radii, r.joint, r.key));
        }
        for k in 1..=cap_rings {
            let phi = k as f64 / (cap_rings + 1) as f64 * std::f64::consts::FRAC_PI_2;
            all.push((
                end_offset + end_len * phi.sin(),
                [end_radii[0] * phi.cos(), end_radii[1] * phi.cos()],
                end_joint,
                None,
            ));
        }

        let mut key_ranges = vec![0..0; tube.keys.len()];
        let start_pole = self.push_vertex(
            tube.origin + tube.axis * (start_offset - start_len),
            tube.origin + tube.axis * (start_offset - start_len),
            start_joint,
        );
        let mut ring_starts = Vec::with_capacity(all.len());
        for (offset, radii, joint, key) in &all {
            let centre = tube.origin + tube.axis * *offset;
            let base = self.vertices.len();
            for k in 0..segments {
                let theta = 2.0 * std::f64::consts::PI * k as f64 / segments as f64;
                let p =
                    centre + tube.u * (radii[0] * theta.cos()) + tube.v * (radii[1] * theta.sin());
                self.push_vertex(p, centre, *joint);
            }
            if let Some(k) = key {
                key_ranges[*k] = base..base + segments;
            }
            ring_starts.push(base);
        }
        let end_pole = self.push_vertex(
            tube.origin + tube.axis * (end_offset + end_len),
            tube.origin + tube.axis * (end_offset + end_len),
            end_joint,
        );

        for k in 0..segments {
            let k1 = (k + 1) % segments;
            let r0 = ring_starts[0];
            self.faces.push([start_pole, r0 + k1, r0 + k]);
            for w in ring_starts.windows(2) {
                let (a, b) = (w[0], w[1]);
                self.faces.push([a + k, a + k1, b + k1]);
                self.faces.push([a + k, b + k1, b + k]);
            }
            let rl = *ring_starts.last().unwrap();
            self.faces.push([end_pole, rl + k, rl + k1]);
        }
        key_ranges
    }

    fn push_vertex(&mut self, p: Point, axis_point: Point, joint: usize) -> usize {
        self.vertices.push(p);
        self.axis_point.push(axis_point);
        self.joint_of.push(joint);
        self.vertices.len() - 1
    }

    /// Appends the x-mirror of vertices `range`, remapping joints, and returns the index offset.
    fn mirror(
        &mut self,
        range: std::ops::Range<usize>,
        face_range: std::ops::Range<usize>,
    ) -> usize {
        let offset = self.vertices.len() - range.start;
        for i in range.clone() {
            let p = self.vertices[i];
            let a = self.axis_point[i];
            let j = mirror_joint(self.joint_of[i]);
            self.vertices.push(Point::new(-p.x, p.y, p.z));
            self.axis_point.push(Point::new(-a.x, a.y, a.z));
            self.joint_of.push(j);
        }
        for f in face_range {
            let [a, b, c] = self.faces[f];
            self.faces.push([a + offset, c + offset, b + offset]);
        }
        offset
    }
}

fn mirror_joint(j: usize) -> usize {
    use joint::*;
    match j {
        L_HIP => R_HIP,
        L_KNEE => R_KNEE,
        L_ANKLE => R_ANKLE,
        L_TOE => R_TOE,
        L_COLLAR => R_COLLAR,
        L_SHOULDER => R_SHOULDER,
        L_ELBOW => R_ELBOW,
        L_WRIST => R_WRIST,
        L_HAND => R_HAND,
        R_HIP => L_HIP,
        R_KNEE => L_KNEE,
        R_ANKLE => L_ANKLE,
        R_TOE => L_TOE,
        R_COLLAR => L_COLLAR,
        R_SHOULDER => L_SHOULDER,
        R_ELBOW => L_ELBOW,
        R_WRIST => L_WRIST,
        R_HAND => L_HAND,
        other => other,
    }
}

fn key(offset: f64, a: f64, b: f64) -> Key {
    Key {
        offset,
        radii: [a, b],
    }
}

/// Build the capsule humanoid for `spec`. The gender label is recorded on
/// the model; all variants share the same template.
pub fn make_procedural_body(spec: &BodySpec, gender: Gender) -> Result<BodyModel> {
    spec.validate()?;
    let s = spec;
    let x = Vec3::x();
    let y = Vec3::y();
    let z = Vec3::z();
    let mut b = Builder::default();
    let seg = s.segments;
    let sp = s.ring_spacing;
    let cr = s.cap_rings;

    let pelvis_y = s.pelvis_height;
    let [s1, s2, s3] = s.spine_offsets;
    let [tx, tz] = s.torso_radii;

    // torso: ring keys at pelvis, spine1, spine2, chest and shoulder height
    let torso = Tube {
        origin: Point::new(0.0, s.torso_bottom, 0.0),
        axis: y,
        u: x,
        v: -z,
        keys: vec![
            key(0.0, tx, tz),
            key(pelvis_y - s.torso_bottom, tx, tz),
            key(pelvis_y + s1 - s.torso_bottom, tx, tz),
            key(pelvis_y + s2 - s.torso_bottom, tx, tz),
            key(pelvis_y + s3 - s.torso_bottom, tx, tz),
            key(s.shoulder_height - s.torso_bottom, tx, tz),
            key(s.shoulder_height + 0.02 - s.torso_bottom, tx, tz),
        ],
        joints: vec![
            joint::PELVIS,
            joint::PELVIS,
            joint::SPINE1,
            joint::SPINE2,
            joint::CHEST,
            joint::CHEST,
        ],
        cap_scale: 0.5,
    };
    let torso_keys = b.add_tube(&torso, seg, sp, cr);

    let neck_top = s.head_height - 0.6 * s.head_radius;
    let neck = Tube {
        origin: Point::new(0.0, s.shoulder_height, 0.0),
        axis: y,
        u: x,
        v: -z,
        keys: vec![
            key(0.0, s.neck_radius, s.neck_radius),
            key(
                s.neck_height - s.shoulder_height,
                s.neck_radius,
                s.neck_radius,
            ),
            key(
                (neck_top - s.shoulder_height).max(s.neck_height - s.shoulder_height + 0.01),
                s.neck_radius,
                s.neck_radius,
            ),
        ],
        joints: vec![joint::NECK, joint::NECK],
        cap_scale: 0.5,
    };
    let neck_keys = b.add_tube(&neck, seg, sp, cr);

    let hr = s.head_radius;
    let head = Tube {
        origin: Point::new(0.0, s.head_height - 0.04, 0.0),
        axis: y,
        u: x,
        v: -z,
        keys: vec![key(0.0, hr, hr), key(0.04, hr, hr), key(0.08, hr, hr)],
        joints: vec![joint::HEAD, joint::HEAD],
        cap_scale: 0.9,
    };
    let head_keys = b.add_tube(&head, seg, sp, cr);

    let left_start = b.vertices.len();
    let left_face_start = b.faces.len();

    let [ra0, ra1, ra2] = s.arm_radii;
    let [hy, hz] = s.hand_radii;
    let arm = Tube {
        origin: Point::new(s.shoulder_half_width, s.shoulder_height, 0.0),
        axis: x,
        u: y,
        v: z,
        keys: vec![
            key(0.0, ra0, ra0),
            key(s.upper_arm, ra1, ra1),
            key(s.upper_arm + s.forearm, ra2, ra2),
            key(s.upper_arm + s.forearm + s.palm, hy, hz),
            key(
                s.upper_arm + s.forearm + s.palm + s.finger,
                0.6 * hy,
                0.75 * hz,
            ),
        ],
        joints: vec![
            joint::L_SHOULDER,
            joint::L_ELBOW,
            joint::L_WRIST,
            joint::L_HAND,
            joint::L_HAND,
        ],
        cap_scale: 0.5,
    };
    let arm_keys = b.add_tube(&arm, seg, sp, cr);

    let hip_y = pelvis_y - s.hip_drop;
    let [rl0, rl1, rl2] = s.leg_radii;
    let leg = Tube {
        origin: Point::new(s.hip_half_width, hip_y, 0.0),
        axis: -y,
        u: x,
        v: z,
        keys: vec![
            key(0.0, rl0, rl0),
            key(hip_y - s.knee_height, rl1, rl1),
            key(hip_y - s.ankle_height, rl2, rl2),
        ],
        joints: vec![joint::L_HIP, joint::L_KNEE, joint::L_ANKLE],
        cap_scale: 0.5,
    };
    let leg_keys = b.add_tube(&leg, seg, sp, cr);

    let [fx, fy] = s.foot_radii;
    let foot = Tube {
        origin: Point::new(s.hip_half_width, s.foot_height, -s.heel_back),
        axis: z,
        u: x,
        v: -y,
        keys: vec![
            key(0.0, fx, fy),
            key(s.heel_back, fx, fy),
            key(s.heel_back + s.toe_forward, fx, fy),
            key(s.heel_back + s.toe_forward + s.toe_tip, 0.8 * fx, 0.7 * fy),
        ],
        joints: vec![joint::L_ANKLE, joint::L_ANKLE, joint::L_TOE, joint::L_TOE],
        cap_scale: 0.5,
    };
    let foot_keys = b.add_tube(&foot, seg, sp, cr);

    let left_end = b.vertices.len();
    let left_face_end = b.faces.len();
    let mirror_offset = b.mirror(left_start..left_end, left_face_start..left_face_end);

    let nv = b.vertices.len();
    let mut regressor = vec![0.0; JOINT_COUNT * nv];
    let mut set_ring = |j: usize, range: &std::ops::Range<usize>, weight: f64| {
        let n = range.len() as f64;
        for v in range.clone() {
            regressor[j * nv + v] += weight / n;
        }
    };
    let shift = |r: &std::ops::Range<usize>| r.start + mirror_offset..r.end + mirror_offset;

    set_ring(joint::PELVIS, &torso_keys[1], 1.0);
    set_ring(joint::SPINE1, &torso_keys[2], 1.0);
    set_ring(joint::SPINE2, &torso_keys[3], 1.0);
    set_ring(joint::CHEST, &torso_keys[4], 1.0);
    set_ring(joint::NECK, &neck_keys[1], 1.0);
    set_ring(joint::HEAD, &head_keys[1], 1.0);
    let collar_frac = s.collar_half_width / s.shoulder_half_width;
    let sided = [
        (joint::L_HIP, joint::R_HIP, &leg_keys[0]),
        (joint::L_KNEE, joint::R_KNEE, &leg_keys[1]),
        (joint::L_ANKLE, joint::R_ANKLE, &leg_keys[2]),
        (joint::L_TOE, joint::R_TOE, &foot_keys[2]),
        (joint::L_SHOULDER, joint::R_SHOULDER, &arm_keys[0]),
        (joint::L_ELBOW, joint::R_ELBOW, &arm_keys[1]),
        (joint::L_WRIST, joint::R_WRIST, &arm_keys[2]),
        (joint::L_HAND, joint::R_HAND, &arm_keys[3]),
    ];
    for (l, r, range) in sided {
        set_ring(l, range, 1.0);
        set_ring(r, &shift(range), 1.0);
    }
    // collar: affine blend of the torso shoulder ring and the shoulder ring
    set_ring(joint::L_COLLAR, &torso_keys[5], 1.0 - collar_frac);
    set_ring(joint::L_COLLAR, &arm_keys[0], collar_frac);
    set_ring(joint::R_COLLAR, &torso_keys[5], 1.0 - collar_frac);
    set_ring(joint::R_COLLAR, &shift(&arm_keys[0]), collar_frac);

    let mut skin_weights = vec![0.0; nv * JOINT_COUNT];
    for (v, &j) in b.joint_of.iter().enumerate() {
        skin_weights[v * JOINT_COUNT + j] = 1.0;
    }

    let mut shape_basis = vec![vec![Vec3::zeros(); nv]; SHAPE_DIM];
    for v in 0..nv {
        let p = b.vertices[v];
        shape_basis[0][v] = Vec3::new(0.0, 0.05 * p.y, 0.0);
        shape_basis[1][v] = (p - b.axis_point[v]) * 0.1;
    }

    let model = BodyModel {
        template_vertices: b.vertices,
        faces: b.faces,
        joint_names: JOINT_NAMES.iter().map(|s| s.to_string()).collect(),
        joint_parents: JOINT_PARENTS.to_vec(),
        joint_regressor: regressor,
        skin_weights,
        shape_basis,
        gender,
    };
    model.validate()?;
    Ok(model)
}

/// Nominal joint positions of `spec` in SMPL joint order.
pub fn nominal_joints(spec: &BodySpec) -> Vec<Point> {
    let s = spec;
    let hip_y = s.pelvis_height - s.hip_drop;
    let arm_y = s.shoulder_height;
    let mut j = vec![Point::origin(); JOINT_COUNT];
    let [s1, s2, s3] = s.spine_offsets;
    j[joint::PELVIS] = Point::new(0.0, s.pelvis_height, 0.0);
    j[joint::SPINE1] = Point::new(0.0, s.pelvis_height + s1, 0.0);
    j[joint::SPINE2] = Point::new(0.0, s.pelvis_height + s2, 0.0);
    j[joint::CHEST] = Point::new(0.0, s.pelvis_height + s3, 0.0);
    j[joint::NECK] = Point::new(0.0, s.neck_height, 0.0);
    j[joint::HEAD] = Point::new(0.0, s.head_height, 0.0);
    let left = [
        (joint::L_HIP, Point::new(s.hip_half_width, hip_y, 0.0)),
        (
            joint::L_KNEE,
            Point::new(s.hip_half_width, s.knee_height, 0.0),
        ),
        (
            joint::L_ANKLE,
            Point::new(s.hip_half_width, s.ankle_height, 0.0),
        ),
        (
            joint::L_TOE,
            Point::new(s.hip_half_width, s.foot_height, s.toe_forward),
        ),
        (joint::L_COLLAR, Point::new(s.collar_half_width, arm_y, 0.0)),
        (
            joint::L_SHOULDER,
            Point::new(s.shoulder_half_width, arm_y, 0.0),
        ),
        (
            joint::L_ELBOW,
            Point::new(s.shoulder_half_width + s.upper_arm, arm_y, 0.0),
        ),
        (
            joint::L_WRIST,
            Point::new(s.shoulder_half_width + s.upper_arm + s.forearm, arm_y, 0.0),
        ),
        (
            joint::L_HAND,
            Point::new(
                s.shoulder_half_width + s.upper_arm + s.forearm + s.palm,
                arm_y,
                0.0,
            ),
        ),
    ];
    for (l, p) in left {
        j[l] = p;
        j[mirror_joint(l)] = Point::new(-p.x, p.y, p.z);
    }
    j
}
