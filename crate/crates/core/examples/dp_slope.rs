//! Prints the DensePose loss along the first two latent directions of each
//! ground-truth garment, starting from the mean garment.

use clothrecon::clothfield::{ClothType, DistanceFieldBackend, ProceduralBackend};
use clothrecon::densepose::cloth_to_body_map;
use clothrecon::scene::{generate_scene, SceneConfig};
use clothrecon::supervision::{build_query_sets, densepose_loss, LossWeights};

fn main() {
    for seed in 0..3u64 {
        let s = generate_scene(&SceneConfig {
            seed,
            resolution: 96,
            ..Default::default()
        })
        .unwrap();
        let backend = DistanceFieldBackend::Procedural(ProceduralBackend::new(&s.tpose).unwrap());
        let w = LossWeights::default();
        let mapped = cloth_to_body_map(&s.observation, &s.tpose, 196, 0).unwrap();
        let qs = build_query_sets(&s.tpose, &mapped, &w, 10.0).unwrap();
        let mut st = s.state.clone();
        for l in st.latents.iter_mut() {
            l.z.iter_mut().for_each(|v| *v = 0.0);
        }
        for c in ClothType::ALL {
            if !s.state.is_gated(c) {
                continue;
            }
            let zs: Vec<f64> = s.state.latents[c.index()].z[..3].to_vec();
            println!("seed {seed} {c} n_q {} z* {:.2?}", qs[c.index()].len(), zs);
            for d in 0..2 {
                let mut line = String::new();
                for k in -6..=6 {
                    let mut t = st.clone();
                    t.latents[c.index()].z[d] = k as f64 * 0.5;
                    let l = densepose_loss(&qs, &t, &backend, &s.tpose, &w).unwrap();
                    line += &format!("{:.5} ", l);
                }
                println!("  dim {d}: {line}");
            }
        }
    }
}
