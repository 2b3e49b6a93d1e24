//! Recovering a `ClothState` from one observation by Adam on the total loss
//! with central-difference gradients.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::body::TPoseBody;
use crate::clothfield::{
    decode_latent, sigmoid, ClothLatent, ClothState, ClothType, DistanceFieldBackend,
    MIN_THICKNESS, N_CLOTHES, THICKNESS_RANGE,
};
use crate::constants::{APOSE_ABDUCTION_DEG, N_SAMPLE_POINTS};
use crate::densepose::{cloth_to_body_map, Existence, ObservationSet};
use crate::error::{Error, Result};
use crate::supervision::{
    build_query_sets, dp_cloth_term, existence_loss, gender_loss, silhouette_targets, total_loss,
    LossBreakdown, LossComponents, LossWeights, QuerySet, SilhouetteTarget,
};

/// Loss configurations compared in the ablation study.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Ablation {
    #[default]
    None,
    NoReg,
    NoDp,
    SilhouetteForDp,
}

impl Ablation {
    pub fn parse(s: &str) -> Option<Ablation> {
        match s {
            "none" => Some(Ablation::None),
            "no-reg" => Some(Ablation::NoReg),
            "no-dp" => Some(Ablation::NoDp),
            "silhouette-for-dp" => Some(Ablation::SilhouetteForDp),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Ablation::None => "none",
            Ablation::NoReg => "no-reg",
            Ablation::NoDp => "no-dp",
            Ablation::SilhouetteForDp => "silhouette-for-dp",
        }
    }

    /// Weights with the ablated terms switched off or swapped.
    pub fn apply(self, w: &LossWeights) -> LossWeights {
        let mut w = *w;
        match self {
            Ablation::None => {}
            Ablation::NoReg => w.reg = 0.0,
            Ablation::NoDp => w.dp = 0.0,
            Ablation::SilhouetteForDp => {
                w.silhouette = w.dp;
                w.dp = 0.0;
            }
        }
        w
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub max_iterations: usize,
    /// Central-difference step in latent units.
    pub fd_step: f64,
    /// Stop once the loss moved less than this over `patience` iterations.
    pub tolerance: f64,
    pub patience: usize,
    pub seed: u64,
    pub weights: LossWeights,
    pub ablation: Ablation,
    pub sample_points: usize,
    pub abduction_deg: f64,
    /// Level below which a lattice point counts as cloth for the silhouette term.
    pub silhouette_iso: f64,
    /// Starting point; the mean garment with even existence odds otherwise.
    pub init: Option<ClothState>,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            learning_rate: 1e-2,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            max_iterations: 300,
            fd_step: 1e-3,
            tolerance: 1e-6,
            patience: 10,
            seed: 0,
            weights: LossWeights::default(),
            ablation: Ablation::None,
            sample_points: N_SAMPLE_POINTS,
            abduction_deg: APOSE_ABDUCTION_DEG,
            silhouette_iso: 0.04,
            init: None,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        let pos = [
            self.learning_rate,
            self.fd_step,
            self.epsilon,
            self.silhouette_iso,
        ];
        if pos.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::Config(
                "learning rate, fd step, epsilon and iso must be positive".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::Config("Adam betas must lie in [0, 1)".into()));
        }
        if self.sample_points == 0 || self.patience == 0 {
            return Err(Error::Config(
                "sample count and patience must be positive".into(),
            ));
        }
        self.weights.validate()?;
        if let Some(s) = &self.init {
            s.validate()?;
        }
        Ok(())
    }

    /// Weights after the ablation is applied.
    pub fn effective_weights(&self) -> LossWeights {
        self.ablation.apply(&self.weights)
    }
}

/// Central differences: `(f(x + h e_k) - f(x - h e_k)) / 2h`.
pub fn fd_gradient(mut f: impl FnMut(&[f64]) -> f64, x: &[f64], h: f64) -> Result<Vec<f64>> {
    let mut probe = x.to_vec();
    let mut g = Vec::with_capacity(x.len());
    for k in 0..x.len() {
        probe[k] = x[k] + h;
        let fp = f(&probe);
        probe[k] = x[k] - h;
        let fm = f(&probe);
        probe[k] = x[k];
        if !(fp.is_finite() && fm.is_finite()) {
            return Err(Error::NonFinite { component: k });
        }
        g.push((fp - fm) / (2.0 * h));
    }
    Ok(g)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        AdamState {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }
}

/// One bias-corrected Adam update.
pub fn adam_step(
    params: &[f64],
    state: &AdamState,
    grad: &[f64],
    config: &FitConfig,
) -> (Vec<f64>, AdamState) {
    let t = state.t + 1;
    let (b1, b2) = (config.beta1, config.beta2);
    let c1 = 1.0 - b1.powi(t as i32);
    let c2 = 1.0 - b2.powi(t as i32);
    let mut next = AdamState {
        m: state.m.clone(),
        v: state.v.clone(),
        t,
    };
    let mut out = params.to_vec();
    for k in 0..params.len() {
        next.m[k] = b1 * state.m[k] + (1.0 - b1) * grad[k];
        next.v[k] = b2 * state.v[k] + (1.0 - b2) * grad[k] * grad[k];
        let mh = next.m[k] / c1;
        let vh = next.v[k] / c2;
        out[k] -= config.learning_rate * mh / (vh.sqrt() + config.epsilon);
    }
    (out, next)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitRecord {
    pub iteration: usize,
    pub loss: LossBreakdown,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitTrace {
    /// Loss before each update.
    pub records: Vec<FitRecord>,
    /// Lowest-loss state visited.
    pub final_state: ClothState,
    pub final_loss: LossBreakdown,
    pub iterations: usize,
    pub converged: bool,
    /// Set when no query point survived selection.
    pub no_supervision: bool,
}

impl FitTrace {
    pub fn to_jsonl(&self) -> Result<String> {
        let mut s = String::new();
        for r in &self.records {
            s.push_str(&serde_json::to_string(r)?);
            s.push('\n');
        }
        Ok(s)
    }
}

/// Index ranges of the flat parameter vector: existence logits, one latent
/// block per garment, then the gender logit.
struct Layout {
    latent_start: [usize; N_CLOTHES],
    gender: usize,
    len: usize,
}

impl Layout {
    fn new() -> Self {
        let mut latent_start = [0; N_CLOTHES];
        let mut at = N_CLOTHES;
        for c in ClothType::ALL {
            latent_start[c.index()] = at;
            at += c.latent_dim();
        }
        Layout {
            latent_start,
            gender: at,
            len: at + 1,
        }
    }

    fn latent(&self, c: ClothType) -> std::ops::Range<usize> {
        let s = self.latent_start[c.index()];
        s..s + c.latent_dim()
    }
}

fn logit(p: f64) -> f64 {
    let p = p.clamp(1e-6, 1.0 - 1e-6);
    (p / (1.0 - p)).ln()
}

fn params_of(state: &ClothState, layout: &Layout) -> Vec<f64> {
    let mut x = vec![0.0; layout.len];
    for c in ClothType::ALL {
        x[c.index()] = logit(state.existence[c.index()]);
        x[layout.latent(c)].copy_from_slice(&state.latent(c).z);
    }
    x[layout.gender] = logit(state.gender[0]);
    x
}

fn state_of(x: &[f64], layout: &Layout) -> ClothState {
    let gm = sigmoid(x[layout.gender]);
    ClothState {
        existence: std::array::from_fn(|i| sigmoid(x[i])),
        latents: ClothType::ALL
            .iter()
            .map(|&c| ClothLatent {
                cloth_type: c,
                z: x[layout.latent(c)].to_vec(),
            })
            .collect(),
        gender: [gm, 1.0 - gm],
    }
}

fn norm(z: &[f64]) -> f64 {
    z.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Per-garment data terms, memoised on the decoded surface parameters since
/// most latent dimensions leave the field unchanged.
struct TermCache<'a> {
    backend: &'a DistanceFieldBackend,
    querysets: &'a [QuerySet],
    targets: Option<&'a [SilhouetteTarget]>,
    weights: LossWeights,
    iso: f64,
    dp: HashMap<(usize, [u64; 3]), f64>,
    sil: HashMap<(usize, [u64; 3]), f64>,
}

impl TermCache<'_> {
    fn terms(&mut self, c: ClothType, z: &[f64]) -> Result<(f64, f64)> {
        let latent = ClothLatent {
            cloth_type: c,
            z: z.to_vec(),
        };
        let key = (c.index(), decode_latent(&latent)?.key());
        if self.dp.len() > 50_000 {
            self.dp.clear();
            self.sil.clear();
        }
        let need_dp = self.weights.dp > 0.0
            && !self.querysets[c.index()].is_empty()
            && !self.dp.contains_key(&key);
        let need_sil = self.targets.is_some() && !self.sil.contains_key(&key);
        if need_dp || need_sil {
            let field = self.backend.field(&latent)?;
            if need_dp {
                let d = dp_cloth_term(
                    &field,
                    &self.querysets[c.index()],
                    self.weights.d_max[c.index()],
                );
                self.dp.insert(key, d);
            }
            if need_sil {
                let s = self.targets.unwrap()[c.index()].loss(&field, self.iso);
                self.sil.insert(key, s);
            }
        }
        Ok((
            self.dp.get(&key).copied().unwrap_or(0.0),
            self.sil.get(&key).copied().unwrap_or(0.0),
        ))
    }
}

struct Objective<'a> {
    layout: Layout,
    cache: TermCache<'a>,
    truth_exist: [Existence; N_CLOTHES],
    truth_gender: crate::body::Gender,
    weights: LossWeights,
    ablation: Ablation,
}

impl Objective<'_> {
    fn components(&mut self, x: &[f64]) -> Result<LossComponents> {
        let state = state_of(x, &self.layout);
        let gated = state.gated();
        let mut c = LossComponents::default();
        for &cl in &gated {
            let z = &x[self.layout.latent(cl)];
            let (dp, sil) = self.cache.terms(cl, z)?;
            c.dp += dp;
            c.silhouette += sil;
            c.reg += self.weights.alpha[cl.index()] * norm(z);
        }
        c.dp /= N_CLOTHES as f64;
        if !gated.is_empty() {
            c.silhouette /= gated.len() as f64;
        }
        match self.ablation {
            Ablation::NoReg => c.reg = 0.0,
            Ablation::NoDp | Ablation::SilhouetteForDp => c.dp = 0.0,
            Ablation::None => {}
        }
        if self.cache.targets.is_none() {
            c.silhouette = 0.0;
        }
        c.exist = existence_loss(&state.existence, &self.truth_exist);
        c.gender = gender_loss(state.gender, self.truth_gender);
        Ok(c)
    }

    /// Gradient assembled block by block. With the gate held fixed the total
    /// is a sum of terms that each depend on one block, so this equals the
    /// central-difference gradient of the whole objective.
    fn gradient(&mut self, x: &[f64], h: f64) -> Result<Vec<f64>> {
        let w = self.weights;
        let mut g = vec![0.0; x.len()];
        let state = state_of(x, &self.layout);
        let gated = state.gated();
        let n_gated = gated.len().max(1) as f64;
        let use_reg = self.ablation != Ablation::NoReg;
        for &cl in &gated {
            let range = self.layout.latent(cl);
            let alpha = w.alpha[cl.index()];
            let mut err = None;
            let cache = &mut self.cache;
            let block = fd_gradient(
                |z| match cache.terms(cl, z) {
                    Ok((dp, sil)) => {
                        let reg = if use_reg {
                            w.reg * alpha * norm(z)
                        } else {
                            0.0
                        };
                        w.dp * dp / N_CLOTHES as f64 + w.silhouette * sil / n_gated + reg
                    }
                    Err(e) => {
                        err.get_or_insert(e);
                        f64::NAN
                    }
                },
                &x[range.clone()],
                h,
            );
            if let Some(e) = err {
                return Err(e);
            }
            let block = block.map_err(|e| match e {
                Error::NonFinite { component } => Error::NonFinite {
                    component: range.start + component,
                },
                e => e,
            })?;
            g[range].copy_from_slice(&block);
        }
        let truth = self.truth_exist;
        let ge = fd_gradient(
            |l| w.exist * existence_loss(&std::array::from_fn(|i| sigmoid(l[i])), &truth),
            &x[..N_CLOTHES],
            h,
        )?;
        g[..N_CLOTHES].copy_from_slice(&ge);
        let tg = self.truth_gender;
        let gg = fd_gradient(
            |l| {
                let m = sigmoid(l[0]);
                w.gender * gender_loss([m, 1.0 - m], tg)
            },
            &x[self.layout.gender..],
            h,
        )?;
        g[self.layout.gender] = gg[0];
        Ok(g)
    }
}

/// Fit garment latents, existence and gender to one observation.
pub fn fit_clothes(
    obs: &ObservationSet,
    body: &TPoseBody,
    backend: &DistanceFieldBackend,
    config: &FitConfig,
) -> Result<FitTrace> {
    config.validate()?;
    obs.validate()?;
    backend.check_body(body)?;
    let weights = config.effective_weights();
    let mapped = cloth_to_body_map(obs, body, config.sample_points, config.seed)?;
    let querysets = build_query_sets(body, &mapped, &weights, config.abduction_deg)?;
    let targets = if weights.silhouette > 0.0 {
        let mut t = silhouette_targets(body, obs, config.abduction_deg)?;
        if let DistanceFieldBackend::Procedural(_) = backend {
            prune_far_points(&mut t, body, config.silhouette_iso);
        }
        Some(t)
    } else {
        None
    };
    let init = config
        .init
        .clone()
        .unwrap_or_else(|| ClothState::mean([0.5; N_CLOTHES]));
    let layout = Layout::new();
    let mut x = params_of(&init, &layout);
    let mut obj = Objective {
        layout,
        cache: TermCache {
            backend,
            querysets: &querysets,
            targets: targets.as_deref(),
            weights,
            iso: config.silhouette_iso,
            dp: HashMap::new(),
            sil: HashMap::new(),
        },
        truth_exist: obs.existence,
        truth_gender: obs.gender,
        weights,
        ablation: config.ablation,
    };

    let first = total_loss(&obj.components(&x)?, &weights);
    let no_query_points = querysets.iter().all(|q| q.is_empty());
    if no_query_points && targets.is_none() {
        return Ok(FitTrace {
            records: Vec::new(),
            final_state: state_of(&x, &obj.layout),
            final_loss: first,
            iterations: 0,
            converged: false,
            no_supervision: true,
        });
    }

    let mut adam = AdamState::new(x.len());
    let mut records = Vec::with_capacity(config.max_iterations);
    let mut best = (first.total, x.clone(), first);
    let mut converged = false;
    for it in 0..config.max_iterations {
        let loss = total_loss(&obj.components(&x)?, &weights);
        if !loss.total.is_finite() {
            return Err(Error::NonFinite {
                component: usize::MAX,
            });
        }
        if loss.total < best.0 {
            best = (loss.total, x.clone(), loss);
        }
        records.push(FitRecord {
            iteration: it,
            loss,
        });
        if it >= config.patience {
            let before = records[it - config.patience].loss.total;
            if (before - loss.total).abs() < config.tolerance {
                converged = true;
                break;
            }
        }
        let g = obj.gradient(&x, config.fd_step)?;
        let (nx, na) = adam_step(&x, &adam, &g, config);
        x = nx;
        adam = na;
    }
    if !converged {
        let loss = total_loss(&obj.components(&x)?, &weights);
        if loss.total < best.0 {
            best = (loss.total, x.clone(), loss);
        }
    }
    Ok(FitTrace {
        iterations: records.len(),
        records,
        final_state: state_of(&best.1, &obj.layout),
        final_loss: best.2,
        converged,
        no_supervision: no_query_points,
    })
}

/// Drop lattice points that no procedural garment can reach: the surface
/// stays within the maximal thickness of the body, except for the skirt band.
fn prune_far_points(targets: &mut [SilhouetteTarget], body: &TPoseBody, iso: f64) {
    let surface = body.mesh().surface();
    let reach = MIN_THICKNESS + THICKNESS_RANGE + iso + 1e-9;
    for t in targets.iter_mut() {
        if t.cloth_type == ClothType::Skirt {
            continue;
        }
        let keep: Vec<bool> = t
            .points
            .iter()
            .map(|p| surface.distance_capped(p, reach) < reach)
            .collect();
        let mut k = keep.iter();
        t.points.retain(|_| *k.next().unwrap());
        let mut k = keep.iter();
        t.pixels.retain(|_| *k.next().unwrap());
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fd_on_known_functions() {
        let g = fd_gradient(|z| z.iter().map(|v| v * v).sum(), &[1.0, 0.0], 1e-3).unwrap();
        assert!((g[0] - 2.0).abs() < 1e-6 && g[1].abs() < 1e-6);
        let g = fd_gradient(|_| 3.0, &[1.0, 2.0, 3.0], 1e-3).unwrap();
        assert_eq!(g, vec![0.0; 3]);
        let g = fd_gradient(|z| z[0].sin(), &[0.3], 1e-3).unwrap();
        assert!((g[0] - 0.3f64.cos()).abs() < 1e-5);
    }

    #[test]
    fn fd_reports_non_finite_component() {
        let r = fd_gradient(
            |z| if z[1] > 0.5 { f64::NAN } else { z[0] },
            &[0.0, 0.5],
            1e-3,
        );
        assert!(matches!(r, Err(Error::NonFinite { component: 1 })));
    }

    #[test]
    fn fd_error_is_second_order() {
        // the h and h/2 estimates of a smooth function agree to O(h^2)
        let f = |z: &[f64]| (z[0] * 1.3).exp() + z[1].powi(3);
        let x = [0.2, -0.7];
        let h = 1e-2;
        let a = fd_gradient(f, &x, h).unwrap();
        let b = fd_gradient(f, &x, h / 2.0).unwrap();
        for k in 0..2 {
            assert!((a[k] - b[k]).abs() < 10.0 * h * h);
        }
    }

    #[test]
    fn adam_first_step() {
        let cfg = FitConfig {
            learning_rate: 0.1,
            ..FitConfig::default()
        };
        let (x, st) = adam_step(&[1.0], &AdamState::new(1), &[2.0], &cfg);
        assert!((x[0] - 0.9).abs() < 1e-4);
        assert_eq!(st.t, 1);
        let (x0, _) = adam_step(&[1.0, -2.0], &AdamState::new(2), &[0.0, 0.0], &cfg);
        assert_eq!(x0, vec![1.0, -2.0]);
        let again = adam_step(&[1.0], &AdamState::new(1), &[2.0], &cfg);
        assert_eq!(again, (x, st));
    }

    #[test]
    fn parameter_round_trip() {
        let layout = Layout::new();
        assert_eq!(layout.len, 5 + 4 * 18 + 4 + 1);
        let mut s = ClothState::mean([0.9, 0.1, 0.7, 0.2, 0.6]);
        s.latents[2].z[1] = 0.4;
        s.gender = [0.3, 0.7];
        let back = state_of(&params_of(&s, &layout), &layout);
        for i in 0..5 {
            assert!((back.existence[i] - s.existence[i]).abs() < 1e-12);
        }
        assert_eq!(back.latents, s.latents);
        assert!((back.gender[0] - 0.3).abs() < 1e-12);
    }

    #[test]
    fn ablation_weights() {
        let w = LossWeights::default();
        assert_eq!(Ablation::NoReg.apply(&w).reg, 0.0);
        assert_eq!(Ablation::NoDp.apply(&w).dp, 0.0);
        let s = Ablation::SilhouetteForDp.apply(&w);
        assert_eq!((s.dp, s.silhouette), (0.0, 1.0));
        for a in [
            Ablation::None,
            Ablation::NoReg,
            Ablation::NoDp,
            Ablation::SilhouetteForDp,
        ] {
            assert_eq!(Ablation::parse(a.name()), Some(a));
        }
    }
}
