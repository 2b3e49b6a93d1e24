use std::collections::HashMap;
use std::sync::Arc;

use clothrecon::body::{make_procedural_body, shape_body, BodySpec, Gender, ShapeParams};
use clothrecon::clothfield::{ClothState, ClothType, DistanceFieldBackend, GridBackend, Side};
use clothrecon::densepose::{ClothSegmentation, MappedClothPoint};
use clothrecon::geometry::{Aabb, Point};
use clothrecon::grid::ScalarGrid;
use clothrecon::raster::Camera;
use clothrecon::supervision::*;
use clothrecon::Error;
use proptest::prelude::*;

#[derive(serde::Deserialize)]
struct Fixture {
    joints: HashMap<String, [f64; 3]>,
    v_min_z: f64,
    v_max_z: f64,
    abduction_deg: f64,
    apose_r_ankle: [f64; 3],
    expected: HashMap<String, [f64; 6]>,
}

fn fixture() -> Fixture {
    let text =
        include_str!("fixtures/canonical_joints.json").replace("apose_R_ankle", "apose_r_ankle");
    serde_json::from_str(&text).unwrap()
}

fn lookup(map: &HashMap<String, [f64; 3]>) -> impl Fn(&str) -> clothrecon::Result<Point> + '_ {
    move |n| {
        map.get(n)
            .map(|p| Point::from(*p))
            .ok_or_else(|| Error::Config(format!("missing joint {n}")))
    }
}

fn assert_corners(got: &[f64; 6], want: &[f64; 6]) {
    for (g, w) in got.iter().zip(want) {
        assert!((g - w).abs() < 1e-12, "{got:?} vs {want:?}");
    }
}

/// Fixture joints with an A-pose computed by the library's skinning chain.
fn fixture_apose(fx: &Fixture) -> HashMap<String, [f64; 3]> {
    let model = Arc::new(make_procedural_body(&BodySpec::default(), Gender::Neutral).unwrap());
    let mut tp = shape_body(&model, &ShapeParams::default()).unwrap();
    for (j, name) in model.joint_names.iter().enumerate() {
        tp.joints[j] = Point::from(fx.joints[name]);
    }
    let posed = apose_joints(&tp, fx.abduction_deg).unwrap();
    model
        .joint_names
        .iter()
        .cloned()
        .zip(posed.iter().map(|p| [p.x, p.y, p.z]))
        .collect()
}

#[test]
fn fixture_boxes_match_hand_evaluation() {
    let fx = fixture();
    let apose = fixture_apose(&fx);
    let ra = apose["R_ankle"];
    for a in 0..3 {
        assert!((ra[a] - fx.apose_r_ankle[a]).abs() < 1e-12);
    }
    let z = (fx.v_min_z, fx.v_max_z);
    let cases = [
        (ClothType::UpperCloth, None, "upper_cloth"),
        (ClothType::Coat, None, "coat"),
        (ClothType::Shoes, Some(Side::Left), "shoes_left"),
        (ClothType::Shoes, Some(Side::Right), "shoes_right"),
        (ClothType::Pants, None, "pants"),
        (ClothType::Skirt, None, "skirt"),
    ];
    for (cloth, side, key) in cases {
        let b = query_box_from_joints(cloth, side, lookup(&fx.joints), lookup(&apose), z).unwrap();
        assert_corners(&b.corners, &fx.expected[key]);
    }
}

#[test]
fn missing_joint_is_config_error() {
    let fx = fixture();
    let mut joints = fx.joints.clone();
    joints.remove("chest");
    let r = query_box_from_joints(
        ClothType::Coat,
        None,
        lookup(&joints),
        lookup(&joints),
        (0.0, 0.1),
    );
    assert!(matches!(r, Err(Error::Config(_))));
}

fn constant_backend(cloth: ClothType, value: f64) -> DistanceFieldBackend {
    let region = Aabb {
        min: Point::new(-5.0, -5.0, -5.0),
        max: Point::new(5.0, 5.0, 5.0),
    };
    let mut g = ScalarGrid::spanning(&region, [2, 2, 2]).unwrap();
    g.samples.iter_mut().for_each(|s| *s = value);
    let mut gb = GridBackend::new();
    gb.insert(cloth, g, vec![0.0; cloth.latent_dim()]).unwrap();
    DistanceFieldBackend::Grid(gb)
}

fn tpose() -> clothrecon::body::TPoseBody {
    let model = Arc::new(make_procedural_body(&BodySpec::default(), Gender::Neutral).unwrap());
    shape_body(&model, &ShapeParams::default()).unwrap()
}

#[test]
fn dp_single_point_values() {
    let body = tpose();
    let w = LossWeights::default();
    let state = ClothState::mean([1.0, 0.0, 0.0, 0.0, 0.0]);
    let p = Point::new(0.0, 1.0, 0.0);
    let on = vec![QuerySet {
        cloth_type: ClothType::UpperCloth,
        points: vec![p],
        labels: vec![1],
    }];
    let off = vec![QuerySet {
        cloth_type: ClothType::UpperCloth,
        points: vec![p],
        labels: vec![0],
    }];
    let l = densepose_loss(
        &on,
        &state,
        &constant_backend(ClothType::UpperCloth, 0.05),
        &body,
        &w,
    )
    .unwrap();
    assert!((l - 0.01).abs() < 1e-12);
    let l = densepose_loss(
        &off,
        &state,
        &constant_backend(ClothType::UpperCloth, 0.02),
        &body,
        &w,
    )
    .unwrap();
    assert!((l - 0.016).abs() < 1e-12);
    // perfect field: zero on cloth, beyond the cut-off elsewhere
    let b0 = constant_backend(ClothType::UpperCloth, 0.0);
    assert_eq!(densepose_loss(&on, &state, &b0, &body, &w).unwrap(), 0.0);
    let far = constant_backend(ClothType::UpperCloth, 0.3);
    assert_eq!(densepose_loss(&off, &state, &far, &body, &w).unwrap(), 0.0);
    let empty = vec![QuerySet::empty(ClothType::UpperCloth)];
    assert_eq!(densepose_loss(&empty, &state, &b0, &body, &w).unwrap(), 0.0);
}

fn sil_target(points: Vec<Point>, labels: Vec<u8>) -> SilhouetteTarget {
    let n = labels.len();
    let seg = ClothSegmentation {
        width: n,
        height: 1,
        labels,
    };
    let cam = Camera {
        width: n,
        height: 1,
        scale: 1.0,
        principal: [0.0, 1.0],
    };
    SilhouetteTarget::new(ClothType::Pants, points.clone(), &points, &cam, &seg)
}

#[test]
fn silhouette_values() {
    let zero = constant_backend(ClothType::Pants, 0.0);
    let field = zero
        .field(&clothrecon::clothfield::ClothLatent::zeros(
            ClothType::Pants,
        ))
        .unwrap();
    let pts = vec![Point::new(0.5, 0.5, 0.0), Point::new(1.5, 0.5, 0.0)];
    // both pixels labelled and hit
    assert_eq!(sil_target(pts.clone(), vec![3, 3]).loss(&field, 0.01), 0.0);
    // one point off-label, the labelled pixel covered
    assert!((sil_target(pts.clone(), vec![3, 255]).loss(&field, 0.01) - 0.25).abs() < 1e-12);
    // nothing below the level set
    let far = constant_backend(ClothType::Pants, 1.0);
    let ffar = far
        .field(&clothrecon::clothfield::ClothLatent::zeros(
            ClothType::Pants,
        ))
        .unwrap();
    assert_eq!(sil_target(pts, vec![3, 3]).loss(&ffar, 0.01), 1.0);
}

#[test]
fn query_sets_respect_box_and_radius() {
    let body = tpose();
    let w = LossWeights::default();
    let mapped: Vec<MappedClothPoint> = body
        .vertices
        .iter()
        .step_by(37)
        .enumerate()
        .map(|(i, v)| MappedClothPoint {
            position: *v,
            label: (i % 6) as u8,
            pixel: (i, 0),
        })
        .collect();
    let sets = build_query_sets(&body, &mapped, &w, 10.0).unwrap();
    for qs in &sets {
        let c = qs.cloth_type;
        let boxes = cloth_query_boxes(&body, c, 10.0).unwrap();
        let tau = w.tau[c.index()];
        for p in &qs.points {
            assert!(boxes.iter().any(|b| b.contains(p)));
            assert!(mapped.iter().any(|m| (m.position - p).norm() <= tau));
        }
        assert!(!qs.is_empty(), "{c}");
    }
    // the coat radius is wider, so it keeps more of the same lattice
    assert!(sets[ClothType::Coat.index()].len() > sets[ClothType::UpperCloth.index()].len());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn reg_is_positively_homogeneous(z in prop::collection::vec(-3.0f64..3.0, 18), s in 0.0f64..10.0) {
        let w = LossWeights::default();
        let mut a = ClothState::mean([1.0, 0.0, 0.0, 0.0, 0.0]);
        a.latents[0].z = z.clone();
        let mut b = a.clone();
        b.latents[0].z = z.iter().map(|v| v * s).collect();
        prop_assert!((reg_loss(&b, &w) - s * reg_loss(&a, &w)).abs() <= 1e-9 * (1.0 + s * reg_loss(&a, &w)));
    }

    #[test]
    fn breakdown_recombines(dp in 0.0f64..1.0, reg in 0.0f64..10.0, ex in 0.0f64..5.0, g in 0.0f64..5.0, sil in 0.0f64..1.0) {
        let w = LossWeights { silhouette: 0.7, ..LossWeights::default() };
        let b = total_loss(&LossComponents { dp, reg, exist: ex, gender: g, silhouette: sil }, &w);
        let again = w.dp * b.dp + w.reg * b.reg + w.exist * b.exist + w.gender * b.gender + w.silhouette * b.silhouette;
        prop_assert!((b.total - again).abs() <= 1e-12);
    }

    #[test]
    fn selection_ignores_order_without_ties(seed in 0u64..1000) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let b = QueryBox { cloth_type: ClothType::Pants, side: None, corners: [0.0, 0.0, 0.0, 1.0, 1.0, 1.0] };
        let mut m: Vec<MappedClothPoint> = (0..40)
            .map(|i| MappedClothPoint {
                position: Point::new(rng.gen(), rng.gen(), rng.gen()),
                label: (i % 6) as u8,
                pixel: (i, 0),
            })
            .collect();
        let a = select_query_points(&b, &m, 0.06).unwrap();
        m.reverse();
        let r = select_query_points(&b, &m, 0.06).unwrap();
        prop_assert_eq!(a, r);
    }

    #[test]
    fn dp_loss_is_bounded(c in 0.0f64..1.0, label in 0u8..6) {
        let body = tpose();
        let w = LossWeights::default();
        let state = ClothState::mean([0.0, 0.0, 0.0, 0.0, 1.0]);
        let qs = vec![QuerySet { cloth_type: ClothType::Shoes, points: vec![Point::origin(); 3], labels: vec![label; 3] }];
        let l = densepose_loss(&qs, &state, &constant_backend(ClothType::Shoes, c), &body, &w).unwrap();
        prop_assert!((0.0..=0.1).contains(&l));
    }
}
