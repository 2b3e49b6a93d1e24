//! Query-point selection inside per-garment boxes and the weak-supervision
//! losses built on it.

use serde::{Deserialize, Serialize};

use crate::body::{
    joint_transforms, pose_attached_points, Gender, PoseParams, TPoseBody, VertexLocator,
};
use crate::clothfield::{ClothField, ClothState, ClothType, DistanceFieldBackend, Side, N_CLOTHES};
use crate::constants::*;
use crate::densepose::{ClothSegmentation, Existence, MappedClothPoint, ObservationSet};
use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::raster::Camera;

/// Loss weights and per-garment constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub dp: f64,
    pub reg: f64,
    pub exist: f64,
    pub gender: f64,
    /// 2D projection term; off unless requested.
    pub silhouette: f64,
    pub alpha: [f64; N_CLOTHES],
    pub d_max: [f64; N_CLOTHES],
    pub tau: [f64; N_CLOTHES],
}

impl Default for LossWeights {
    fn default() -> Self {
        let per = |c: ClothType, shoes: f64, other: f64| {
            if c == ClothType::Shoes {
                shoes
            } else {
                other
            }
        };
        LossWeights {
            dp: LAMBDA_DP,
            reg: LAMBDA_REG,
            exist: LAMBDA_EXIST,
            gender: LAMBDA_GENDER,
            silhouette: 0.0,
            alpha: ClothType::ALL.map(|c| per(c, ALPHA_SHOES, ALPHA_OTHER)),
            d_max: ClothType::ALL.map(|c| per(c, D_MAX_SHOES, D_MAX_OTHER)),
            tau: ClothType::ALL.map(|c| {
                if c == ClothType::Coat {
                    TAU_COAT
                } else {
                    TAU_OTHER
                }
            }),
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let scalars = [self.dp, self.reg, self.exist, self.gender, self.silhouette];
        if scalars.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::Config(
                "loss weights must be finite and non-negative".into(),
            ));
        }
        for arr in [&self.alpha, &self.d_max, &self.tau] {
            if arr.iter().any(|w| !w.is_finite() || *w < 0.0) {
                return Err(Error::Config(
                    "per-garment constants must be finite and non-negative".into(),
                ));
            }
        }
        if self.d_max.iter().any(|&d| d <= 0.0) {
            return Err(Error::Config("d_max must be positive".into()));
        }
        Ok(())
    }
}

/// Axis-aligned query region `[x_min, y_min, z_min, x_max, y_max, z_max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QueryBox {
    pub cloth_type: ClothType,
    pub side: Option<Side>,
    pub corners: [f64; 6],
}

impl QueryBox {
    pub fn min(&self) -> Point {
        Point::new(self.corners[0], self.corners[1], self.corners[2])
    }

    pub fn max(&self) -> Point {
        Point::new(self.corners[3], self.corners[4], self.corners[5])
    }

    pub fn validate(&self) -> Result<()> {
        if self.corners.iter().any(|c| !c.is_finite())
            || (0..3).any(|a| self.corners[a] > self.corners[a + 3])
        {
            return Err(Error::validation(format!(
                "invalid query box {:?}",
                self.corners
            )));
        }
        Ok(())
    }

    pub fn contains(&self, p: &Point) -> bool {
        (0..3).all(|a| p[a] >= self.corners[a] && p[a] <= self.corners[a + 3])
    }

    /// `n^3` lattice spanning the box corner to corner, x fastest.
    pub fn lattice(&self, n: usize) -> Vec<Point> {
        let (lo, hi) = (self.min(), self.max());
        let coord = |a: usize, i: usize| {
            let t = if n > 1 {
                i as f64 / (n - 1) as f64
            } else {
                0.0
            };
            lo[a] * (1.0 - t) + hi[a] * t
        };
        let mut out = Vec::with_capacity(n * n * n);
        for k in 0..n {
            for j in 0..n {
                for i in 0..n {
                    out.push(Point::new(coord(0, i), coord(1, j), coord(2, k)));
                }
            }
        }
        out
    }
}

/// Box corners from named joint lookups on the T-pose and the A-pose body.
pub fn query_box_from_joints(
    cloth: ClothType,
    side: Option<Side>,
    tpose_joint: impl Fn(&str) -> Result<Point>,
    apose_joint: impl Fn(&str) -> Result<Point>,
    z_extent: (f64, f64),
) -> Result<QueryBox> {
    let (vmin, vmax) = z_extent;
    let z_lo = 1.25 * vmin - 0.25 * vmax;
    let z_hi = 1.25 * vmax - 0.25 * vmin;
    let corners = match cloth {
        ClothType::UpperCloth | ClothType::Coat => {
            let (rh, lh) = (tpose_joint("R_hand")?, tpose_joint("L_hand")?);
            let (pelvis, chest) = (tpose_joint("pelvis")?, tpose_joint("chest")?);
            [
                rh.x,
                2.0 * pelvis.y - chest.y,
                z_lo,
                lh.x,
                3.0 * chest.y - 2.0 * pelvis.y,
                z_hi,
            ]
        }
        ClothType::Shoes => {
            let (ankle, knee, toe) = match side {
                Some(Side::Left) => ("L_ankle", "L_knee", "L_toe"),
                Some(Side::Right) => ("R_ankle", "R_knee", "R_toe"),
                None => return Err(Error::Config("shoe query boxes need a side".into())),
            };
            let (a, k, t) = (tpose_joint(ankle)?, tpose_joint(knee)?, tpose_joint(toe)?);
            let zc = 0.5 * a.z + 0.5 * t.z;
            [
                a.x - 0.15,
                1.75 * a.y - 0.75 * k.y,
                zc - 0.25,
                a.x + 0.15,
                0.25 * a.y + 0.75 * k.y,
                zc + 0.25,
            ]
        }
        ClothType::Pants | ClothType::Skirt => {
            let (ra, p) = (apose_joint("R_ankle")?, apose_joint("pelvis")?);
            let (lo, hi) = if cloth == ClothType::Pants {
                (2.3, 3.3)
            } else {
                (3.0, 4.0)
            };
            [
                lo * ra.x - (lo - 1.0) * p.x,
                1.1 * ra.y - 0.1 * p.y,
                z_lo,
                hi * p.x - (hi - 1.0) * ra.x,
                1.1 * p.y - 0.1 * ra.y,
                z_hi,
            ]
        }
    };
    let side = if cloth == ClothType::Shoes {
        side
    } else {
        None
    };
    let b = QueryBox {
        cloth_type: cloth,
        side,
        corners,
    };
    b.validate()?;
    Ok(b)
}

/// Joint locations with both hips abducted by `degrees` about the view axis.
pub fn apose_joints(tpose: &TPoseBody, degrees: f64) -> Result<Vec<Point>> {
    let th = degrees.to_radians();
    let mut pose = PoseParams::default();
    pose.theta[tpose.model.joint_index("L_hip")?] = [0.0, 0.0, th];
    pose.theta[tpose.model.joint_index("R_hip")?] = [0.0, 0.0, -th];
    pose.validate()?;
    let tr = joint_transforms(tpose, &pose);
    Ok(tpose
        .joints
        .iter()
        .zip(&tr)
        .map(|(j, t)| t.apply(j))
        .collect())
}

pub fn cloth_query_box(
    tpose: &TPoseBody,
    cloth: ClothType,
    side: Option<Side>,
    abduction_deg: f64,
) -> Result<QueryBox> {
    let apose = apose_joints(tpose, abduction_deg)?;
    let model = &tpose.model;
    query_box_from_joints(
        cloth,
        side,
        |n| tpose.joint(n),
        |n| Ok(apose[model.joint_index(n)?]),
        tpose.z_extent(),
    )
}

/// Query boxes of a garment: one per foot for shoes, otherwise one.
pub fn cloth_query_boxes(
    tpose: &TPoseBody,
    cloth: ClothType,
    abduction_deg: f64,
) -> Result<Vec<QueryBox>> {
    if cloth == ClothType::Shoes {
        Ok(vec![
            cloth_query_box(tpose, cloth, Some(Side::Left), abduction_deg)?,
            cloth_query_box(tpose, cloth, Some(Side::Right), abduction_deg)?,
        ])
    } else {
        Ok(vec![cloth_query_box(tpose, cloth, None, abduction_deg)?])
    }
}

/// Kept query points of one garment and the label of each point's nearest
/// lifted cloth point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuerySet {
    pub cloth_type: ClothType,
    pub points: Vec<Point>,
    pub labels: Vec<u8>,
}

impl QuerySet {
    pub fn empty(cloth_type: ClothType) -> Self {
        QuerySet {
            cloth_type,
            points: Vec::new(),
            labels: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// `S_i(x_j)`: whether point `j` is nearest to a pixel of this garment.
    pub fn on_cloth(&self, j: usize) -> bool {
        self.labels[j] == self.cloth_type.label()
    }

    fn extend(&mut self, other: QuerySet) {
        self.points.extend(other.points);
        self.labels.extend(other.labels);
    }
}

pub fn select_query_points(
    qbox: &QueryBox,
    mapped: &[MappedClothPoint],
    tau: f64,
) -> Result<QuerySet> {
    qbox.validate()?;
    let mut out = QuerySet::empty(qbox.cloth_type);
    if mapped.is_empty() {
        return Ok(out);
    }
    let positions: Vec<Point> = mapped.iter().map(|m| m.position).collect();
    let locator = VertexLocator::new(&positions);
    for p in qbox.lattice(QUERY_GRID) {
        let k = locator.nearest(&p).expect("non-empty");
        if (positions[k] - p).norm_squared() <= tau * tau {
            out.points.push(p);
            out.labels.push(mapped[k].label);
        }
    }
    Ok(out)
}

/// One query set per garment type, in `ClothType::ALL` order.
pub fn build_query_sets(
    tpose: &TPoseBody,
    mapped: &[MappedClothPoint],
    weights: &LossWeights,
    abduction_deg: f64,
) -> Result<Vec<QuerySet>> {
    ClothType::ALL
        .iter()
        .map(|&c| {
            let mut qs = QuerySet::empty(c);
            for b in cloth_query_boxes(tpose, c, abduction_deg)? {
                qs.extend(select_query_points(&b, mapped, weights.tau[c.index()])?);
            }
            Ok(qs)
        })
        .collect()
}

/// Mean over the set's points of the per-point residual, without the
/// garment-count normalisation.
pub fn dp_cloth_term(field: &ClothField, qs: &QuerySet, d_max: f64) -> f64 {
    if qs.is_empty() {
        return 0.0;
    }
    let mut sum = 0.0;
    for (j, p) in qs.points.iter().enumerate() {
        let c = field.eval_capped(p, d_max);
        sum += if qs.on_cloth(j) { c } else { d_max - c };
    }
    sum / qs.len() as f64
}

pub fn densepose_loss(
    querysets: &[QuerySet],
    state: &ClothState,
    backend: &DistanceFieldBackend,
    body: &TPoseBody,
    weights: &LossWeights,
) -> Result<f64> {
    backend.check_body(body)?;
    let mut total = 0.0;
    for qs in querysets {
        let c = qs.cloth_type;
        if qs.is_empty() || !state.is_gated(c) {
            continue;
        }
        let field = backend.field(state.latent(c))?;
        total += dp_cloth_term(&field, qs, weights.d_max[c.index()]);
    }
    Ok(total / N_CLOTHES as f64)
}

pub fn reg_loss(state: &ClothState, weights: &LossWeights) -> f64 {
    ClothType::ALL
        .iter()
        .filter(|&&c| state.is_gated(c))
        .map(|&c| {
            let z = &state.latent(c).z;
            weights.alpha[c.index()] * z.iter().map(|v| v * v).sum::<f64>().sqrt()
        })
        .sum()
}

fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_EPS, 1.0 - PROB_EPS)
}

pub fn existence_loss(scores: &[f64; N_CLOTHES], truth: &[Existence; N_CLOTHES]) -> f64 {
    let mut sum = 0.0;
    for (&s, t) in scores.iter().zip(truth) {
        let c = clamp_prob(s);
        sum += match t {
            Existence::True => -c.ln(),
            Existence::False => -(1.0 - c).ln(),
            Existence::Unsupervised => 0.0,
        };
    }
    sum / N_CLOTHES as f64
}

/// Cross-entropy of `(g_m, g_f)` against a gender label; a neutral label
/// carries no supervision.
pub fn gender_loss(g: [f64; 2], truth: Gender) -> f64 {
    match truth {
        Gender::Male => -clamp_prob(g[0]).ln(),
        Gender::Female => -clamp_prob(g[1]).ln(),
        Gender::Neutral => 0.0,
    }
}

/// Precomputed image-space footprint of one garment's query lattice.
#[derive(Debug, Clone)]
pub struct SilhouetteTarget {
    pub cloth_type: ClothType,
    /// Canonical lattice points.
    pub points: Vec<Point>,
    /// Pixel index of each posed point, if it lands in the image.
    pub pixels: Vec<Option<usize>>,
    /// Pixels carrying the garment's label.
    pub labeled: Vec<usize>,
    width: usize,
    height: usize,
    on_label: Vec<bool>,
}

impl SilhouetteTarget {
    pub fn new(
        cloth: ClothType,
        points: Vec<Point>,
        posed: &[Point],
        camera: &Camera,
        seg: &ClothSegmentation,
    ) -> Self {
        let label = cloth.label();
        let on_label: Vec<bool> = seg.labels.iter().map(|&l| l == label).collect();
        let labeled = (0..on_label.len()).filter(|&i| on_label[i]).collect();
        let pixels = posed
            .iter()
            .map(|p| camera.pixel_of(p).map(|(x, y)| y * seg.width + x))
            .collect();
        SilhouetteTarget {
            cloth_type: cloth,
            points,
            pixels,
            labeled,
            width: seg.width,
            height: seg.height,
            on_label,
        }
    }

    /// Symmetric coverage penalty of the points where `C < iso`.
    pub fn loss(&self, field: &ClothField, iso: f64) -> f64 {
        let mut hit = vec![false; self.width * self.height];
        let (mut n, mut off) = (0usize, 0usize);
        for (p, px) in self.points.iter().zip(&self.pixels) {
            if field.eval_capped(p, iso) >= iso {
                continue;
            }
            n += 1;
            match px {
                Some(i) if self.on_label[*i] => hit[*i] = true,
                Some(i) => {
                    hit[*i] = true;
                    off += 1;
                }
                None => off += 1,
            }
        }
        let a = if n == 0 { 1.0 } else { off as f64 / n as f64 };
        let b = if self.labeled.is_empty() {
            0.0
        } else {
            let (w, h) = (self.width as isize, self.height as isize);
            let missed = self
                .labeled
                .iter()
                .filter(|&&i| {
                    let (x, y) = ((i % self.width) as isize, (i / self.width) as isize);
                    !(-1..=1).any(|dy| {
                        (-1..=1).any(|dx| {
                            let (xx, yy) = (x + dx, y + dy);
                            xx >= 0 && yy >= 0 && xx < w && yy < h && hit[(yy * w + xx) as usize]
                        })
                    })
                })
                .count();
            missed as f64 / self.labeled.len() as f64
        };
        0.5 * (a + b)
    }
}

/// Silhouette targets of all garments for one observation.
pub fn silhouette_targets(
    tpose: &TPoseBody,
    obs: &ObservationSet,
    abduction_deg: f64,
) -> Result<Vec<SilhouetteTarget>> {
    obs.validate()?;
    ClothType::ALL
        .iter()
        .map(|&c| {
            let mut pts = Vec::new();
            for b in cloth_query_boxes(tpose, c, abduction_deg)? {
                pts.extend(b.lattice(QUERY_GRID));
            }
            let (posed, _) = pose_attached_points(tpose, &obs.pose, &pts)?;
            Ok(SilhouetteTarget::new(
                c,
                pts,
                &posed,
                &obs.camera,
                &obs.segmentation,
            ))
        })
        .collect()
}

/// Mean over gated garments of the per-garment silhouette penalty.
pub fn silhouette_loss_with(
    targets: &[SilhouetteTarget],
    state: &ClothState,
    backend: &DistanceFieldBackend,
    iso: f64,
) -> Result<f64> {
    let mut sum = 0.0;
    let mut n = 0usize;
    for t in targets {
        if !state.is_gated(t.cloth_type) {
            continue;
        }
        sum += t.loss(&backend.field(state.latent(t.cloth_type))?, iso);
        n += 1;
    }
    Ok(if n == 0 { 0.0 } else { sum / n as f64 })
}

pub fn silhouette_loss(
    state: &ClothState,
    backend: &DistanceFieldBackend,
    body: &TPoseBody,
    obs: &ObservationSet,
    iso: f64,
) -> Result<f64> {
    backend.check_body(body)?;
    let targets = silhouette_targets(body, obs, APOSE_ABDUCTION_DEG)?;
    silhouette_loss_with(&targets, state, backend, iso)
}

/// Unweighted loss terms.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossComponents {
    pub dp: f64,
    pub reg: f64,
    pub exist: f64,
    pub gender: f64,
    pub silhouette: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub dp: f64,
    pub reg: f64,
    pub exist: f64,
    pub gender: f64,
    pub silhouette: f64,
    pub total: f64,
    pub weights: LossWeights,
}

pub fn total_loss(c: &LossComponents, w: &LossWeights) -> LossBreakdown {
    let total = w.dp * c.dp
        + w.reg * c.reg
        + w.exist * c.exist
        + w.gender * c.gender
        + w.silhouette * c.silhouette;
    LossBreakdown {
        dp: c.dp,
        reg: c.reg,
        exist: c.exist,
        gender: c.gender,
        silhouette: c.silhouette,
        total,
        weights: *w,
    }
}
