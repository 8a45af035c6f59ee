//! Simulated listening studies with a known ground truth.
//!
//! Each clip has a hidden 2-D prosody latent (think slope and duration).
//! Observed inputs mix that latent with nuisance noise through a fixed
//! random linear map. Simulated raters pick the pair whose latents are
//! closest in angle, with independent perceptual noise per rater, and only
//! unanimous triads survive, exactly as with human raters.

use std::collections::HashMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::embedding::EmbeddingStack;
use crate::manifest::{Dataset, ManifestEntry};
use crate::triad::{consensus_filter, sample_triads, ConsensusTriad, Judgment, PairChoice, Triad};

#[derive(Debug, Clone, PartialEq)]
pub struct LatentStudyConfig {
    pub n_clips: usize,
    pub n_triads: usize,
    pub input_dim: usize,
    /// Signal power over noise power, both summed over dimensions.
    pub snr: f64,
    /// Standard deviation of each rater's noise on the angular distances.
    pub rater_noise: f64,
    pub n_raters: usize,
    pub seed: u64,
}

impl Default for LatentStudyConfig {
    fn default() -> Self {
        Self {
            n_clips: 500,
            n_triads: 3500,
            input_dim: 64,
            snr: 1.0,
            rater_noise: 0.15,
            n_raters: 3,
            seed: 17,
        }
    }
}

pub const LATENT_DIM: usize = 2;

#[derive(Debug, Clone)]
pub struct LatentStudy {
    pub entries: Vec<ManifestEntry>,
    pub latent: HashMap<String, [f64; LATENT_DIM]>,
    pub inputs: HashMap<String, Vec<f64>>,
    pub triads: Vec<Triad>,
    pub judgments: Vec<Judgment>,
    pub consensus: Vec<ConsensusTriad>,
}

/// `1 - cos` between two latents.
pub fn angular_distance(a: &[f64; LATENT_DIM], b: &[f64; LATENT_DIM]) -> f64 {
    let dot = a[0] * b[0] + a[1] * b[1];
    let na = (a[0] * a[0] + a[1] * a[1]).sqrt();
    let nb = (b[0] * b[0] + b[1] * b[1]).sqrt();
    1.0 - dot / (na * nb).max(1e-300)
}

/// Pair with the smallest `distances[pair]`; ties go to the earlier pair.
fn closest_pair(distances: [f64; 3]) -> PairChoice {
    let mut best = 0;
    for i in 1..3 {
        if distances[i] < distances[best] {
            best = i;
        }
    }
    PairChoice::from_index(best).expect("index < 3")
}

pub fn generate_latent_study(cfg: &LatentStudyConfig) -> LatentStudy {
    assert!(cfg.input_dim > LATENT_DIM, "input_dim must exceed the latent size");
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
    let noise_dims = cfg.input_dim - LATENT_DIM;
    let noise = Normal::new(0.0, (LATENT_DIM as f64 / noise_dims as f64 / cfg.snr).sqrt())
        .expect("positive noise scale");
    let d = cfg.input_dim;
    let mixing: Vec<f64> = (0..d * d)
        .map(|_| std_normal.sample(&mut rng) / (d as f64).sqrt())
        .collect();

    let mut entries = Vec::with_capacity(cfg.n_clips);
    let mut latent = HashMap::new();
    let mut inputs = HashMap::new();
    for i in 0..cfg.n_clips {
        let id = format!("syn{i:04}");
        let z = [std_normal.sample(&mut rng), std_normal.sample(&mut rng)];
        let mut raw = Vec::with_capacity(d);
        raw.extend_from_slice(&z);
        raw.extend((0..noise_dims).map(|_| noise.sample(&mut rng)));
        let x: Vec<f64> = (0..d)
            .map(|r| mixing[r * d..(r + 1) * d].iter().zip(&raw).map(|(m, v)| m * v).sum())
            .collect();
        entries.push(ManifestEntry {
            clip_id: id.clone(),
            dataset: Dataset::Synthetic,
            lexical_form: "yeah".into(),
            speaker_id: format!("spk{}", i % 20),
            wav_path: format!("{id}.wav"),
            emb_paths: Default::default(),
        });
        latent.insert(id.clone(), z);
        inputs.insert(id, x);
    }

    let triads = sample_triads(&entries, cfg.n_triads, cfg.seed).expect("enough clips for the requested triads");
    let perception = Normal::new(0.0, cfg.rater_noise.max(0.0)).expect("finite rater noise");
    let mut judgments = Vec::with_capacity(triads.len() * cfg.n_raters);
    for t in &triads {
        let z = t.clips.clone().map(|c| latent[&c]);
        let dist = PairChoice::ALL.map(|p| {
            let (i, j) = p.positions();
            angular_distance(&z[i], &z[j])
        });
        for r in 0..cfg.n_raters {
            let noisy = dist.map(|v| v + perception.sample(&mut rng));
            judgments.push(Judgment {
                triad_id: t.triad_id.clone(),
                rater_id: format!("rater{r}"),
                chosen_pair: closest_pair(noisy),
                is_attention_check: false,
                timestamp: 0,
            });
        }
    }
    let consensus = consensus_filter(&judgments, &triads, cfg.n_raters);
    LatentStudy {
        entries,
        latent,
        inputs,
        triads,
        judgments,
        consensus,
    }
}

/// Stacks whose layer `signal_layer` carries the clip latent (plus a little
/// noise) and whose other layers are pure noise.
pub fn planted_stacks(
    latent: &HashMap<String, [f64; LATENT_DIM]>,
    model_name: &str,
    n_layers: usize,
    dim: usize,
    signal_layer: usize,
    seed: u64,
) -> HashMap<String, EmbeddingStack> {
    assert!(dim > LATENT_DIM && signal_layer < n_layers);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    let faint = Normal::new(0.0, 0.05).expect("small noise");
    let mut ids: Vec<&String> = latent.keys().collect();
    ids.sort();
    ids.into_iter()
        .map(|id| {
            let z = latent[id];
            let mut vectors = Vec::with_capacity(n_layers * dim);
            for layer in 0..n_layers {
                for k in 0..dim {
                    let v = if layer != signal_layer {
                        unit.sample(&mut rng)
                    } else if k < LATENT_DIM {
                        z[k]
                    } else {
                        faint.sample(&mut rng)
                    };
                    vectors.push(v as f32);
                }
            }
            let stack = EmbeddingStack::new(id.clone(), model_name, n_layers, dim, vectors)
                .expect("finite stack of the declared shape");
            (id.clone(), stack)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_study_shapes() {
        let cfg = LatentStudyConfig {
            n_clips: 40,
            n_triads: 100,
            input_dim: 8,
            ..Default::default()
        };
        let s = generate_latent_study(&cfg);
        assert_eq!(s.triads.len(), 100);
        assert_eq!(s.judgments.len(), 300);
        assert!(!s.consensus.is_empty() && s.consensus.len() <= 100);
        assert!(s.inputs.values().all(|v| v.len() == 8));
        let again = generate_latent_study(&cfg);
        assert_eq!(again.consensus, s.consensus);
    }

    #[test]
    fn noiseless_raters_always_agree() {
        let cfg = LatentStudyConfig {
            n_clips: 30,
            n_triads: 50,
            input_dim: 4,
            rater_noise: 0.0,
            ..Default::default()
        };
        assert_eq!(generate_latent_study(&cfg).consensus.len(), 50);
    }

    #[test]
    fn angular_distance_basics() {
        assert!(angular_distance(&[1.0, 0.0], &[2.0, 0.0]).abs() < 1e-12);
        assert!((angular_distance(&[1.0, 0.0], &[0.0, 3.0]) - 1.0).abs() < 1e-12);
        assert!((angular_distance(&[1.0, 0.0], &[-1.0, 0.0]) - 2.0).abs() < 1e-12);
    }
}
