//! Runs the training protocol on a simulated study and prints the sweep.
//!
//! cargo run --release -p prosody-core --example synthetic_sweep [seed]

use std::time::Instant;

use prosody_core::agreement::{evaluate_agreement, PairwiseScorer};
use prosody_core::similarity::cosine_similarity;
use prosody_core::simulate::{generate_latent_study, LatentStudyConfig};
use prosody_core::trainer::{run_protocol, sweep_csv, InputKind, TrainConfig};

fn main() {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(17);
    let start = Instant::now();
    let study = generate_latent_study(&LatentStudyConfig { seed, ..Default::default() });
    println!("consensus triads: {} of {}", study.consensus.len(), study.triads.len());
    let cfg = TrainConfig {
        latent_dims: vec![2, 8, 16, 64],
        seed,
        ..Default::default()
    };
    let kind = InputKind::EmbeddingLayer { model: "synthetic".into(), layer: 0 };
    let result = run_protocol(&study.consensus, &study.inputs, &kind, &cfg).expect("protocol runs");
    let holdout: Vec<_> = result.split.holdout.iter().map(|&i| study.consensus[i].clone()).collect();
    let raw = evaluate_agreement(
        &holdout,
        &PairwiseScorer(|a: &str, b: &str| cosine_similarity(&study.inputs[a], &study.inputs[b]).ok()),
    )
    .expect("holdout evaluable");
    println!("raw cosine on holdout: {:.2}", raw.percent());
    print!("{}", sweep_csv(&result.reports));
    println!("elapsed: {:.1}s", start.elapsed().as_secs_f64());
}
