//! Regenerates the frozen mini dataset under `tests/data/mini`.
//!
//! ```text
//! cargo run -p prosody-cli --example make_mini_dataset
//! ```
//!
//! Clips are harmonic tones with known pitch contours. Three scripted
//! raters pick the pair closest in contour shape; the third one answers
//! differently on every fourth triad, so those triads drop out of the
//! consensus. Model `toy` has five layers and carries the contour
//! parameters in layer 3 only.
//!
//! After regenerating, refresh the pinned report with `prosody eval` as
//! shown in the repository README.

use std::collections::BTreeMap;
use std::path::PathBuf;

use prosody_core::audio::write_wav;
use prosody_core::embedding::{stack_file_name, write_stack, EmbeddingStack};
use prosody_core::features::compute_features;
use prosody_core::jsonl::write_jsonl;
use prosody_core::manifest::{Dataset, ManifestEntry};
use prosody_core::pitch::PitchConfig;
use prosody_core::synth::{concat, contour_tone, silence};
use prosody_core::triad::{consensus_filter, sample_triads, Judgment, PairChoice};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

const SR: u32 = 16_000;
const LAYERS: usize = 5;
const SIGNAL_LAYER: usize = 3;
const DIM: usize = 6;

#[derive(Clone, Copy)]
struct Shape {
    height: f64,
    slope: f64,
    bend: f64,
}

impl Shape {
    fn f0(&self, u: f64) -> f64 {
        let x = 2.0 * u - 1.0;
        self.height + self.slope * x + self.bend * (x * x - 1.0 / 3.0)
    }

    fn coords(&self) -> [f64; 3] {
        [self.height / 60.0, self.slope / 25.0, self.bend / 25.0]
    }
}

fn dist(a: &Shape, b: &Shape) -> f64 {
    a.coords().iter().zip(b.coords()).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

fn main() {
    let root = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data/mini");
    let _ = std::fs::remove_dir_all(&root);
    for d in ["clips", "emb"] {
        std::fs::create_dir_all(root.join(d)).unwrap();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let noise = Normal::new(0.0, 1.0).unwrap();

    let mut entries = Vec::new();
    let mut shapes = BTreeMap::new();
    for dataset in [Dataset::FiCa, Dataset::Fisher] {
        for form in ["yeah", "mhm"] {
            for i in 0..6 {
                let id = format!("{}-{form}-{i}", dataset.as_str().to_lowercase());
                let shape = Shape {
                    height: rng.random_range(110.0..230.0),
                    slope: rng.random_range(-40.0..40.0),
                    bend: rng.random_range(-30.0..30.0),
                };
                let dur = rng.random_range(0.25..0.45);
                let tone = contour_tone(|u| shape.f0(u), dur, SR, 0.5);
                let mut w = concat(&[silence(0.05, SR), tone, silence(0.05, SR)]);
                w.clip_id = id.clone();
                let wav = format!("clips/{id}.wav");
                write_wav(root.join(&wav), &w).unwrap();
                shapes.insert(id.clone(), shape);
                entries.push(ManifestEntry {
                    clip_id: id.clone(),
                    dataset,
                    lexical_form: form.into(),
                    speaker_id: format!("spk{}", i % 3),
                    wav_path: wav,
                    emb_paths: BTreeMap::from([("toy".to_string(), format!("emb/{}", stack_file_name(&id, "toy")))]),
                });
            }
        }
    }
    for (id, shape) in &shapes {
        let mut v = Vec::with_capacity(LAYERS * DIM);
        for layer in 0..LAYERS {
            for k in 0..DIM {
                let x = match (layer == SIGNAL_LAYER, k) {
                    (true, 0..=2) => shape.coords()[k] + 0.02 * noise.sample(&mut rng),
                    (true, _) => 0.02 * noise.sample(&mut rng),
                    (false, _) => noise.sample(&mut rng),
                };
                v.push(x as f32);
            }
        }
        let stack = EmbeddingStack::new(id.clone(), "toy", LAYERS, DIM, v).unwrap();
        write_stack(&stack, root.join("emb").join(stack_file_name(id, "toy"))).unwrap();
    }

    let triads = sample_triads(&entries, 20, 7).unwrap();
    let mut judgments = Vec::new();
    for (n, t) in triads.iter().enumerate() {
        let mut ranked: Vec<(f64, PairChoice)> = [PairChoice::AB, PairChoice::AC, PairChoice::BC]
            .into_iter()
            .map(|p| {
                let (a, b) = t.pair(p);
                (dist(&shapes[a], &shapes[b]), p)
            })
            .collect();
        ranked.sort_by(|x, y| x.0.total_cmp(&y.0));
        for (r, rater) in ["r1", "r2", "r3"].iter().enumerate() {
            let pick = if r == 2 && n % 4 == 0 { ranked[1].1 } else { ranked[0].1 };
            judgments.push(Judgment {
                triad_id: t.triad_id.clone(),
                rater_id: rater.to_string(),
                chosen_pair: pick,
                is_attention_check: false,
                timestamp: 1_700_000_000_000 + (n * 3 + r) as u64,
            });
        }
    }
    let consensus = consensus_filter(&judgments, &triads, 3);

    let cfg = PitchConfig::default();
    let features: Vec<_> = entries
        .iter()
        .map(|e| {
            let w = prosody_core::audio::load_wav(root.join(&e.wav_path)).unwrap();
            compute_features(&e.clip_id, e.dataset, &e.lexical_form, &w, &cfg)
        })
        .collect();

    let save = |name: &str| -> PathBuf { root.join(name) };
    write_jsonl(save("manifest.jsonl"), &entries).unwrap();
    write_jsonl(save("triads.jsonl"), &triads).unwrap();
    write_jsonl(save("judgments.jsonl"), &judgments).unwrap();
    write_jsonl(save("consensus.jsonl"), &consensus).unwrap();
    write_jsonl(save("features.jsonl"), &features).unwrap();
    println!(
        "{} clips, {} triads, {} consensus -> {}",
        entries.len(),
        triads.len(),
        consensus.len(),
        root.display()
    );
}
