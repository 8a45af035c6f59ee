//! Assembling the agreement table from per-clip data.

use std::collections::{BTreeMap, HashMap};

use crate::agreement::{
    evaluate_agreement, feature_scorer, probe_layers, AgreementReport, Cell, ConsensusOracle, LayerCurve,
    RandomScorer, TriadScorer,
};
use crate::audio::{mel_spectrogram, AudioError, MelConfig, Waveform};
use crate::embedding::EmbeddingStack;
use crate::features::ClipFeatures;
use crate::manifest::Dataset;
use crate::similarity::{
    cosine_similarity, resample_frames, scalar_similarity, spectral_convergence_flat, SimilarityMetric,
    SPECTROGRAM_FRAMES,
};
use crate::triad::{ConsensusTriad, TriadError};

/// Everything the table rows are computed from, keyed by clip id.
#[derive(Debug, Clone, Default)]
pub struct ClipData {
    pub features: HashMap<String, ClipFeatures>,
    /// Mel spectrograms resampled to a fixed frame count and flattened.
    pub spectrograms: HashMap<String, Vec<f64>>,
    /// Model name to clip id to stack.
    pub stacks: BTreeMap<String, HashMap<String, EmbeddingStack>>,
}

/// The fixed-size spectrogram every spectral row compares.
pub fn spectrogram_signature(w: &Waveform) -> Result<Vec<f64>, AudioError> {
    let mel = mel_spectrogram(w, &MelConfig::default())?;
    Ok(resample_frames(&mel, SPECTROGRAM_FRAMES))
}

fn cell_of(result: Result<crate::agreement::Agreement, TriadError>, n: usize) -> Cell {
    match result {
        Ok(a) => Cell::from_agreement(&a),
        Err(_) => Cell::unavailable(n),
    }
}

fn score(consensus: &[ConsensusTriad], scorer: &impl TriadScorer) -> Cell {
    cell_of(evaluate_agreement(consensus, scorer), consensus.len())
}

/// Agreement of one metric on one set of triads. Embedding metrics also
/// return their per-layer curve.
pub fn evaluate_metric(
    metric: &SimilarityMetric,
    consensus: &[ConsensusTriad],
    data: &ClipData,
) -> (Cell, Option<LayerCurve>) {
    let cell = match metric {
        SimilarityMetric::Scalar(f) => score(
            consensus,
            &feature_scorer(&data.features, |a: &ClipFeatures, b: &ClipFeatures| {
                Some(scalar_similarity(a.scalar(*f)?, b.scalar(*f)?))
            }),
        ),
        SimilarityMetric::LpCombined => score(
            consensus,
            &feature_scorer(&data.features, |a: &ClipFeatures, b: &ClipFeatures| {
                cosine_similarity(&a.lp_vector()?, &b.lp_vector()?).ok()
            }),
        ),
        SimilarityMetric::SpectrogramCosine => score(
            consensus,
            &feature_scorer(&data.spectrograms, |a: &Vec<f64>, b: &Vec<f64>| cosine_similarity(a, b).ok()),
        ),
        SimilarityMetric::SpectralConvergence => score(
            consensus,
            &feature_scorer(&data.spectrograms, |a: &Vec<f64>, b: &Vec<f64>| {
                spectral_convergence_flat(a, b).ok().map(|sc| -sc)
            }),
        ),
        SimilarityMetric::ConsensusOracle => score(consensus, &ConsensusOracle),
        SimilarityMetric::RandomScores(seed) => score(consensus, &RandomScorer { seed: *seed }),
        SimilarityMetric::Embedding(model) => {
            let empty = HashMap::new();
            let stacks = data.stacks.get(model).unwrap_or(&empty);
            return match probe_layers(consensus, stacks, model) {
                Ok(curve) => (Cell::from_curve(&curve), Some(curve)),
                Err(_) => (Cell::unavailable(consensus.len()), None),
            };
        }
    };
    (cell, None)
}

/// Splits triads by dataset, in column order.
pub fn by_dataset(consensus: &[ConsensusTriad]) -> BTreeMap<Dataset, Vec<ConsensusTriad>> {
    let mut out: BTreeMap<Dataset, Vec<ConsensusTriad>> = BTreeMap::new();
    for c in consensus {
        out.entry(c.triad.dataset).or_default().push(c.clone());
    }
    out
}

/// One cell per (metric, dataset present in `consensus`), plus the layer
/// curves of embedding rows.
pub fn build_report(
    consensus: &[ConsensusTriad],
    data: &ClipData,
    metrics: &[SimilarityMetric],
) -> (AgreementReport, Vec<(Dataset, LayerCurve)>) {
    let mut report = AgreementReport::default();
    let mut curves = Vec::new();
    for (dataset, triads) in by_dataset(consensus) {
        for m in metrics {
            let (cell, curve) = evaluate_metric(m, &triads, data);
            report.set(m.clone(), dataset, cell);
            if let Some(c) = curve {
                curves.push((dataset, c));
            }
        }
    }
    (report, curves)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agreement::CellValue;
    use crate::pitch::{LegendreCoeffs, PitchStats};
    use crate::similarity::ScalarFeature;
    use crate::triad::{PairChoice, Triad};

    fn feats(id: &str, mean: f64) -> ClipFeatures {
        ClipFeatures {
            clip_id: id.into(),
            dataset: Dataset::FiCa,
            lexical_form: "yeah".into(),
            n_frames: 10,
            voiced_len: 10,
            pitch: Some(PitchStats {
                mean_hz: mean,
                min_hz: mean,
                max_hz: mean,
                range_hz: 0.0,
                voiced_len: 10,
            }),
            lp: Some(LegendreCoeffs {
                c0: mean,
                c1: 0.0,
                c2: 0.0,
                c3: 0.0,
            }),
            reason: None,
        }
    }

    #[test]
    fn mean_pitch_row_and_controls() {
        let mut data = ClipData::default();
        for (id, m) in [("a", 100.0), ("b", 110.0), ("c", 300.0), ("d", 120.0)] {
            data.features.insert(id.into(), feats(id, m));
        }
        let t = |id: &str, clips: [&str; 3], pair, dataset| ConsensusTriad {
            triad: Triad {
                triad_id: id.into(),
                dataset,
                lexical_form: "yeah".into(),
                clips: clips.map(String::from),
            },
            consensus_pair: pair,
            n_raters: 3,
        };
        let consensus = vec![
            t("1", ["a", "b", "c"], PairChoice::AB, Dataset::FiCa),
            t("2", ["a", "c", "b"], PairChoice::AB, Dataset::FiCa),
            t("3", ["a", "b", "x"], PairChoice::AB, Dataset::Fisher),
        ];
        let metrics = [
            SimilarityMetric::Scalar(ScalarFeature::MeanPitch),
            SimilarityMetric::LpCombined,
            SimilarityMetric::ConsensusOracle,
        ];
        let (report, curves) = build_report(&consensus, &data, &metrics);
        assert!(curves.is_empty());
        let row = |m: &SimilarityMetric| report.rows.iter().find(|r| r.metric == *m).unwrap();
        let mean = row(&metrics[0]);
        assert_eq!(mean.cells[&Dataset::FiCa].value, CellValue::Percent(50.0));
        assert_eq!(mean.cells[&Dataset::Fisher].value, CellValue::Unavailable);
        // All LP vectors are parallel, so every pair ties and misses.
        assert_eq!(row(&metrics[1]).cells[&Dataset::FiCa].value, CellValue::Percent(0.0));
        assert_eq!(row(&metrics[2]).cells[&Dataset::Fisher].value, CellValue::Percent(100.0));
    }
}
