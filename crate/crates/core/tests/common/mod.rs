#![allow(dead_code)]

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rr_core::synth::{gen_scene, Motion, SceneParams, SyntheticScene};

pub fn scene(seed: u64) -> SyntheticScene {
    scene_with(seed, Motion::ConjugateTranslation, None)
}

pub fn scene_with(seed: u64, motion: Motion, lambda: Option<f64>) -> SyntheticScene {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    gen_scene(&mut rng, &SceneParams { motion, lambda, ..SceneParams::default() }).unwrap()
}

pub fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}
