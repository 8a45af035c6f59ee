//! Scoring representations against human consensus.
//!
//! For each consensus triad a representation scores the three pairings; the
//! triad is a hit when the best-scoring pairing is the consensus pair. Exact
//! ties for the top score are misses.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::embedding::EmbeddingStack;
use crate::manifest::Dataset;
use crate::similarity::{cosine_similarity, SimilarityMetric};
use crate::triad::{ConsensusTriad, PairChoice, TriadError};

/// Chance agreement for a three-way choice.
pub const RANDOM_BASELINE: f64 = 100.0 / 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Agreement {
    pub hits: usize,
    pub evaluated: usize,
    /// Triads without usable features for this representation.
    pub skipped: usize,
}

impl Agreement {
    pub fn percent(&self) -> f64 {
        if self.evaluated == 0 {
            0.0
        } else {
            100.0 * self.hits as f64 / self.evaluated as f64
        }
    }
}

/// Produces similarity scores for the pairings `[AB, AC, BC]` of a triad,
/// or `None` when the representation is unavailable for one of its clips.
pub trait TriadScorer: Sync {
    fn score_pairs(&self, triad: &ConsensusTriad) -> Option<[f64; 3]>;
}

/// Adapts a symmetric clip-pair similarity.
pub struct PairwiseScorer<F>(pub F);

impl<F> TriadScorer for PairwiseScorer<F>
where
    F: Fn(&str, &str) -> Option<f64> + Sync,
{
    fn score_pairs(&self, t: &ConsensusTriad) -> Option<[f64; 3]> {
        let mut out = [0.0; 3];
        for p in PairChoice::ALL {
            let (a, b) = t.triad.pair(p);
            out[p.index()] = (self.0)(a, b)?;
        }
        Some(out)
    }
}

/// Scores pairs from per-clip features with `sim`; clips missing from
/// `features` make the triad unevaluable.
pub fn feature_scorer<'a, T, S>(
    features: &'a HashMap<String, T>,
    sim: S,
) -> PairwiseScorer<impl Fn(&str, &str) -> Option<f64> + Sync + 'a>
where
    T: Sync,
    S: Fn(&T, &T) -> Option<f64> + Sync + 'a,
{
    PairwiseScorer(move |a: &str, b: &str| sim(features.get(a)?, features.get(b)?))
}

/// Reads the answer off the consensus; agreement is 100% by construction.
pub struct ConsensusOracle;

impl TriadScorer for ConsensusOracle {
    fn score_pairs(&self, t: &ConsensusTriad) -> Option<[f64; 3]> {
        let mut s = [0.0; 3];
        s[t.consensus_pair.index()] = 1.0;
        Some(s)
    }
}

/// Ranks the consensus pair last; agreement is 0%.
pub struct AntiOracle;

impl TriadScorer for AntiOracle {
    fn score_pairs(&self, t: &ConsensusTriad) -> Option<[f64; 3]> {
        let mut s = [1.0; 3];
        s[t.consensus_pair.index()] = 0.0;
        Some(s)
    }
}

/// Fixed pseudo-random pair scores derived from a hash of the seed and the
/// unordered clip pair, so they are symmetric and reproducible.
pub struct RandomScorer {
    pub seed: u64,
}

impl RandomScorer {
    pub fn score(&self, a: &str, b: &str) -> f64 {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let mut h = Sha256::new();
        h.update(self.seed.to_le_bytes());
        h.update(lo.as_bytes());
        h.update([0u8]);
        h.update(hi.as_bytes());
        let digest = h.finalize();
        let bits = u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"));
        (bits >> 11) as f64 / (1u64 << 53) as f64
    }
}

impl TriadScorer for RandomScorer {
    fn score_pairs(&self, t: &ConsensusTriad) -> Option<[f64; 3]> {
        PairwiseScorer(|a: &str, b: &str| Some(self.score(a, b))).score_pairs(t)
    }
}

/// Hit iff the consensus pair has the unique maximum score.
pub fn is_hit(scores: [f64; 3], consensus: PairChoice) -> bool {
    let target = scores[consensus.index()];
    scores
        .iter()
        .enumerate()
        .all(|(i, &s)| i == consensus.index() || s < target)
}

pub fn evaluate_agreement(
    consensus: &[ConsensusTriad],
    scorer: &impl TriadScorer,
) -> Result<Agreement, TriadError> {
    let outcomes: Vec<Option<bool>> = consensus
        .par_iter()
        .map(|t| {
            scorer
                .score_pairs(t)
                .filter(|s| s.iter().all(|v| v.is_finite()))
                .map(|s| is_hit(s, t.consensus_pair))
        })
        .collect();
    let mut a = Agreement::default();
    for o in outcomes {
        match o {
            Some(hit) => {
                a.evaluated += 1;
                a.hits += usize::from(hit);
            }
            None => a.skipped += 1,
        }
    }
    if a.evaluated == 0 {
        return Err(TriadError::NoEvaluableTriads);
    }
    Ok(a)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerPoint {
    pub layer: usize,
    pub agreement: Agreement,
}

/// Agreement of each layer's pooled vectors, layer 0 (input embedding)
/// first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerCurve {
    pub model: String,
    pub points: Vec<LayerPoint>,
}

impl LayerCurve {
    /// Layer with the highest agreement (earliest on ties).
    pub fn peak_layer(&self) -> Option<usize> {
        self.points
            .iter()
            .fold(None::<&LayerPoint>, |best, p| match best {
                Some(b) if b.agreement.percent() >= p.agreement.percent() => Some(b),
                _ => Some(p),
            })
            .map(|p| p.layer)
    }

    pub fn range(&self) -> Option<(f64, f64)> {
        let mut it = self.points.iter().map(|p| p.agreement.percent());
        let first = it.next()?;
        Some(it.fold((first, first), |(lo, hi), v| (lo.min(v), hi.max(v))))
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("model,layer,agreement,hits,evaluated,skipped\n");
        for p in &self.points {
            let _ = writeln!(
                s,
                "{},{},{:.2},{},{},{}",
                csv_field(&self.model),
                p.layer,
                p.agreement.percent(),
                p.agreement.hits,
                p.agreement.evaluated,
                p.agreement.skipped
            );
        }
        s
    }
}

/// Evaluates every layer of `model_name` with cosine similarity.
pub fn probe_layers(
    consensus: &[ConsensusTriad],
    stacks: &HashMap<String, EmbeddingStack>,
    model_name: &str,
) -> Result<LayerCurve, TriadError> {
    let mut n_layers = None;
    let mut vectors: HashMap<String, Vec<Vec<f64>>> = HashMap::new();
    for t in consensus {
        for clip in &t.triad.clips {
            if vectors.contains_key(clip) {
                continue;
            }
            let stack = stacks.get(clip).ok_or_else(|| TriadError::MissingStack {
                clip_id: clip.clone(),
                model: model_name.to_string(),
            })?;
            match n_layers {
                None => n_layers = Some(stack.n_layers),
                Some(n) if n != stack.n_layers => {
                    return Err(TriadError::LayerCountMismatch(n, stack.n_layers))
                }
                _ => {}
            }
            let layers = stack
                .vectors
                .chunks_exact(stack.dim)
                .map(|v| v.iter().map(|&x| f64::from(x)).collect())
                .collect();
            vectors.insert(clip.clone(), layers);
        }
    }
    let n_layers = n_layers.ok_or(TriadError::NoEvaluableTriads)?;
    let points = (0..n_layers)
        .map(|layer| {
            let scorer = PairwiseScorer(|a: &str, b: &str| {
                cosine_similarity(&vectors.get(a)?[layer], &vectors.get(b)?[layer]).ok()
            });
            evaluate_agreement(consensus, &scorer).map(|agreement| LayerPoint { layer, agreement })
        })
        .collect::<Result<_, _>>()?;
    Ok(LayerCurve {
        model: model_name.to_string(),
        points,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum CellValue {
    Percent(f64),
    /// Min and max across layers.
    Range(f64, f64),
    /// Nothing could be evaluated.
    Unavailable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub value: CellValue,
    pub evaluated: usize,
    pub skipped: usize,
}

impl Cell {
    pub fn percent(p: f64) -> Self {
        Self {
            value: CellValue::Percent(p),
            evaluated: 0,
            skipped: 0,
        }
    }

    pub fn from_agreement(a: &Agreement) -> Self {
        Self {
            value: CellValue::Percent(a.percent()),
            evaluated: a.evaluated,
            skipped: a.skipped,
        }
    }

    pub fn from_curve(c: &LayerCurve) -> Self {
        let evaluated = c.points.first().map_or(0, |p| p.agreement.evaluated);
        let skipped = c.points.first().map_or(0, |p| p.agreement.skipped);
        match c.range() {
            Some((lo, hi)) => Self {
                value: CellValue::Range(lo, hi),
                evaluated,
                skipped,
            },
            None => Self::unavailable(0),
        }
    }

    pub fn unavailable(skipped: usize) -> Self {
        Self {
            value: CellValue::Unavailable,
            evaluated: 0,
            skipped,
        }
    }

    fn render(&self) -> String {
        match self.value {
            CellValue::Percent(p) => format!("{p:.2}"),
            CellValue::Range(lo, hi) => format!("{lo:.2} -- {hi:.2}"),
            CellValue::Unavailable => "n/a".to_string(),
        }
    }

    fn bounds(&self) -> (String, String) {
        match self.value {
            CellValue::Percent(p) => (format!("{p:.2}"), format!("{p:.2}")),
            CellValue::Range(lo, hi) => (format!("{lo:.2}"), format!("{hi:.2}")),
            CellValue::Unavailable => (String::new(), String::new()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub metric: SimilarityMetric,
    pub cells: BTreeMap<Dataset, Cell>,
}

/// Agreement table: one row per representation, one column per dataset,
/// plus the chance baseline.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    pub rows: Vec<ReportRow>,
}

impl AgreementReport {
    pub fn set(&mut self, metric: SimilarityMetric, dataset: Dataset, cell: Cell) {
        match self.rows.iter_mut().find(|r| r.metric == metric) {
            Some(row) => {
                row.cells.insert(dataset, cell);
            }
            None => self.rows.push(ReportRow {
                metric,
                cells: BTreeMap::from([(dataset, cell)]),
            }),
        }
    }

    /// Datasets with at least one cell, in fixed column order.
    pub fn datasets(&self) -> Vec<Dataset> {
        Dataset::ALL
            .into_iter()
            .filter(|d| self.rows.iter().any(|r| r.cells.contains_key(d)))
            .collect()
    }

    /// Rows in table order: pitch rows, LP rows, embedding rows (in the
    /// order they were added), spectral rows, then reference rows.
    pub fn ordered_rows(&self) -> Vec<&ReportRow> {
        let mut rows: Vec<&ReportRow> = self.rows.iter().collect();
        rows.sort_by_key(|r| row_rank(&r.metric));
        rows
    }
}

fn row_rank(m: &SimilarityMetric) -> usize {
    let standard = SimilarityMetric::standard_rows();
    let lp = standard
        .iter()
        .position(|s| *s == SimilarityMetric::LpCombined)
        .expect("LP row is standard");
    match m {
        SimilarityMetric::Embedding(_) => lp + 1,
        SimilarityMetric::ConsensusOracle | SimilarityMetric::RandomScores(_) => standard.len() + 1,
        other => {
            let pos = standard.iter().position(|s| s == other).expect("standard row");
            if pos > lp {
                pos + 1
            } else {
                pos
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderedReport {
    pub csv: String,
    pub text: String,
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Renders the table as long-format CSV and as an aligned text table.
/// The chance baseline row is always last.
pub fn emit_table(report: &AgreementReport) -> RenderedReport {
    let datasets = report.datasets();
    let rows = report.ordered_rows();
    let baseline = Cell::percent(RANDOM_BASELINE);

    let mut csv = String::from("metric,dataset,agreement_low,agreement_high,evaluated,skipped\n");
    for row in &rows {
        for d in &datasets {
            if let Some(cell) = row.cells.get(d) {
                let (lo, hi) = cell.bounds();
                let _ = writeln!(
                    csv,
                    "{},{},{},{},{},{}",
                    csv_field(&row.metric.name()),
                    d,
                    lo,
                    hi,
                    cell.evaluated,
                    cell.skipped
                );
            }
        }
    }
    for d in &datasets {
        let (lo, hi) = baseline.bounds();
        let _ = writeln!(csv, "random baseline,{d},{lo},{hi},,");
    }

    let mut table: Vec<Vec<String>> = Vec::new();
    table.push(
        std::iter::once("Metric".to_string())
            .chain(datasets.iter().map(|d| d.to_string()))
            .collect(),
    );
    for row in &rows {
        table.push(
            std::iter::once(row.metric.name())
                .chain(datasets.iter().map(|d| {
                    row.cells.get(d).map_or_else(|| "-".to_string(), Cell::render)
                }))
                .collect(),
        );
    }
    let baseline_row: Vec<String> = std::iter::once("random baseline".to_string())
        .chain(datasets.iter().map(|_| baseline.render()))
        .collect();

    let n_cols = datasets.len() + 1;
    let widths: Vec<usize> = (0..n_cols)
        .map(|c| {
            table
                .iter()
                .chain(std::iter::once(&baseline_row))
                .map(|r| r[c].chars().count())
                .max()
                .unwrap_or(0)
        })
        .collect();
    let render_line = |r: &[String]| -> String {
        let mut line = format!("{:<w$}", r[0], w = widths[0]);
        for c in 1..n_cols {
            let _ = write!(line, "  {:>w$}", r[c], w = widths[c]);
        }
        line.trim_end().to_string()
    };
    let rule = "-".repeat(widths.iter().sum::<usize>() + 2 * (n_cols - 1));
    let mut text = String::new();
    let _ = writeln!(text, "{}", render_line(&table[0]));
    let _ = writeln!(text, "{rule}");
    for r in &table[1..] {
        let _ = writeln!(text, "{}", render_line(r));
    }
    let _ = writeln!(text, "{rule}");
    let _ = writeln!(text, "{}", render_line(&baseline_row));
    RenderedReport { csv, text }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::similarity::ScalarFeature;
    use crate::triad::Triad;

    fn ct(id: usize, pair: PairChoice) -> ConsensusTriad {
        ConsensusTriad {
            triad: Triad {
                triad_id: format!("t{id}"),
                dataset: Dataset::Synthetic,
                lexical_form: "yeah".into(),
                clips: [format!("a{id}"), format!("b{id}"), format!("c{id}")],
            },
            consensus_pair: pair,
            n_raters: 3,
        }
    }

    #[test]
    fn oracle_and_anti_oracle() {
        let cs: Vec<_> = (0..30).map(|i| ct(i, PairChoice::ALL[i % 3])).collect();
        let a = evaluate_agreement(&cs, &ConsensusOracle).unwrap();
        assert_eq!(a.percent(), 100.0);
        assert_eq!(evaluate_agreement(&cs, &AntiOracle).unwrap().percent(), 0.0);
    }

    #[test]
    fn two_of_three_hits() {
        let cs = vec![ct(0, PairChoice::AB), ct(1, PairChoice::AB), ct(2, PairChoice::BC)];
        let a = evaluate_agreement(&cs, &PairwiseScorer(|x: &str, y: &str| {
            Some(if x.starts_with('a') && y.starts_with('b') { 1.0 } else { 0.0 })
        }))
        .unwrap();
        assert_eq!((a.hits, a.evaluated), (2, 3));
        assert_eq!(format!("{:.2}", a.percent()), "66.67");
    }

    #[test]
    fn ties_are_misses_and_missing_features_skip() {
        assert!(!is_hit([1.0, 1.0, 0.0], PairChoice::AB));
        assert!(is_hit([1.0, 0.5, 0.0], PairChoice::AB));
        let cs = vec![ct(0, PairChoice::AB), ct(1, PairChoice::AB)];
        let feats: HashMap<String, f64> =
            [("a0", 1.0), ("b0", 1.1), ("c0", 5.0)].iter().map(|(k, v)| (k.to_string(), *v)).collect();
        let a = evaluate_agreement(&cs, &feature_scorer(&feats, |x: &f64, y: &f64| Some(-(x - y).abs()))).unwrap();
        assert_eq!((a.hits, a.evaluated, a.skipped), (1, 1, 1));
        let none: HashMap<String, f64> = HashMap::new();
        assert_eq!(
            evaluate_agreement(&cs, &feature_scorer(&none, |x: &f64, y: &f64| Some(x - y))),
            Err(TriadError::NoEvaluableTriads)
        );
    }

    #[test]
    fn random_scorer_is_symmetric_and_uniformish() {
        let r = RandomScorer { seed: 17 };
        assert_eq!(r.score("x", "y"), r.score("y", "x"));
        let mean = (0..2000).map(|i| r.score(&i.to_string(), "z")).sum::<f64>() / 2000.0;
        assert!((mean - 0.5).abs() < 0.03);
    }

    #[test]
    fn flat_curve_for_identical_layers() {
        let cs: Vec<_> = (0..12).map(|i| ct(i, PairChoice::ALL[i % 3])).collect();
        let mut stacks = HashMap::new();
        for t in &cs {
            for (k, c) in t.triad.clips.iter().enumerate() {
                let v = [1.0 + k as f32, (c.len() * k) as f32 * 0.3, 0.5];
                let vectors: Vec<f32> = (0..5).flat_map(|_| v).collect();
                stacks.insert(c.clone(), EmbeddingStack::new(c.clone(), "m", 5, 3, vectors).unwrap());
            }
        }
        let curve = probe_layers(&cs, &stacks, "m").unwrap();
        assert_eq!(curve.points.len(), 5);
        let first = curve.points[0].agreement;
        assert!(curve.points.iter().all(|p| p.agreement == first));

        stacks.remove("a3");
        assert!(matches!(probe_layers(&cs, &stacks, "m"), Err(TriadError::MissingStack { .. })));
    }

    #[test]
    fn table_layout() {
        let mut r = AgreementReport::default();
        r.set(SimilarityMetric::SpectralConvergence, Dataset::FiCa, Cell::percent(66.26));
        r.set(SimilarityMetric::Embedding("HuBERT".into()), Dataset::FiCa, Cell {
            value: CellValue::Range(60.70, 72.63),
            evaluated: 486,
            skipped: 0,
        });
        r.set(SimilarityMetric::Scalar(ScalarFeature::MeanPitch), Dataset::FiCa, Cell::percent(46.91));
        r.set(SimilarityMetric::Scalar(ScalarFeature::MeanPitch), Dataset::Fisher, Cell::percent(48.73));
        let out = emit_table(&r);
        let lines: Vec<&str> = out.text.lines().collect();
        assert_eq!(lines[0].split_whitespace().collect::<Vec<_>>(), ["Metric", "FiCa", "Fisher"]);
        assert!(lines[2].starts_with("mean pitch") && lines[2].ends_with("46.91   48.73"), "{}", lines[2]);
        assert!(lines[3].contains("60.70 -- 72.63"));
        assert!(lines[4].starts_with("spectral convergence"));
        assert!(lines.last().unwrap().starts_with("random baseline"));
        assert!(lines.last().unwrap().ends_with("33.33   33.33"));
        assert!(out.csv.contains("mean pitch,Fisher,48.73,48.73,0,0\n"));
        assert!(out.csv.ends_with("random baseline,FiCa,33.33,33.33,,\nrandom baseline,Fisher,33.33,33.33,,\n"));
        assert!(!out.text.contains("synthetic"));
    }
}
