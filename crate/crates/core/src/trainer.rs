//! Linear projections learned from consensus triads with a triplet margin
//! loss, and the holdout plus k-fold protocol around them.
//!
//! Inputs are z-normalized with statistics of the clips in the training
//! triads. The projection has no bias: pairwise distances cannot see one.
//! With `normalize_latent` the projected vectors are scaled to unit length
//! before the Euclidean triplet distance, which makes training agree with
//! the cosine similarity used at evaluation time.

use std::borrow::Borrow;
use std::collections::{BTreeSet, HashMap};
use std::hash::Hash;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agreement::{evaluate_agreement, PairwiseScorer};
use crate::embedding::EmbeddingStack;
use crate::features::ClipFeatures;
use crate::similarity::cosine_similarity;
use crate::triad::ConsensusTriad;

#[derive(Debug, Error, PartialEq)]
pub enum TrainError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("no input vector for clip {0}")]
    MissingFeature(String),
    #[error("every input dimension has zero variance over the training clips")]
    DegenerateInput,
    #[error("need at least {needed} consensus triads, found {found}")]
    TooFewTriads { found: usize, needed: usize },
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
}

/// What each clip is represented by before projection.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InputKind {
    EmbeddingLayer { model: String, layer: usize },
    /// Legendre height, slope and convexity.
    Lp3,
    /// `Lp3` plus the voiced frame count.
    Lp3VoicedLen,
}

impl InputKind {
    pub fn label(&self) -> String {
        match self {
            Self::EmbeddingLayer { model, layer } => format!("{model}-layer{layer}"),
            Self::Lp3 => "lp3".into(),
            Self::Lp3VoicedLen => "lp3+voiced_len".into(),
        }
    }

    pub fn fixed_dim(&self) -> Option<usize> {
        match self {
            Self::EmbeddingLayer { .. } => None,
            Self::Lp3 => Some(3),
            Self::Lp3VoicedLen => Some(4),
        }
    }

    pub fn default_latent_dims(&self) -> Vec<usize> {
        match self {
            Self::EmbeddingLayer { .. } => (1..=10).map(|n| 1 << n).collect(),
            _ => vec![2, 4, 8],
        }
    }

    pub fn from_features(&self, f: &ClipFeatures) -> Option<Vec<f64>> {
        let lp = f.lp_vector()?;
        match self {
            Self::Lp3 => Some(lp.to_vec()),
            Self::Lp3VoicedLen => Some(vec![lp[0], lp[1], lp[2], f.voiced_len as f64]),
            Self::EmbeddingLayer { .. } => None,
        }
    }

    pub fn from_stack(&self, s: &EmbeddingStack) -> Option<Vec<f64>> {
        match self {
            Self::EmbeddingLayer { layer, .. } => s
                .layer_vector(*layer)
                .ok()
                .map(|v| v.iter().map(|&x| f64::from(x)).collect()),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub margin: f64,
    pub latent_dims: Vec<usize>,
    pub folds: usize,
    pub holdout_frac: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    /// Epochs without a validation improvement before stopping.
    pub patience: usize,
    pub normalize_latent: bool,
    /// Train `latent_dim > input_dim` instead of skipping it.
    pub allow_rank_deficient: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            margin: 0.5,
            latent_dims: (1..=10).map(|n| 1 << n).collect(),
            folds: 5,
            holdout_frac: 0.2,
            epochs: 200,
            batch_size: 32,
            learning_rate: 1e-3,
            seed: 17,
            patience: 20,
            normalize_latent: true,
            allow_rank_deficient: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::InvalidConfig(m.into()));
        if !(self.margin > 0.0) {
            return bad("margin must be positive");
        }
        if !(self.holdout_frac > 0.0 && self.holdout_frac < 1.0) {
            return bad("holdout_frac must lie in (0, 1)");
        }
        if self.folds < 2 {
            return bad("folds must be at least 2");
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return bad("batch_size and epochs must be positive");
        }
        if !(self.learning_rate > 0.0) {
            return bad("learning_rate must be positive");
        }
        if self.latent_dims.is_empty() || self.latent_dims.contains(&0) {
            return bad("latent_dims must be nonempty and positive");
        }
        Ok(())
    }
}

fn dist(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
}

/// Mean over the batch of `max(d(a,p) - d(a,n) + margin, 0)`.
pub fn triplet_loss(a: &[Vec<f64>], p: &[Vec<f64>], n: &[Vec<f64>], margin: f64) -> Result<f64, TrainError> {
    if a.len() != p.len() || a.len() != n.len() {
        return Err(TrainError::ShapeMismatch(format!(
            "batch sizes {}, {}, {}",
            a.len(),
            p.len(),
            n.len()
        )));
    }
    if a.is_empty() {
        return Err(TrainError::ShapeMismatch("empty batch".into()));
    }
    let mut total = 0.0;
    for ((a, p), n) in a.iter().zip(p).zip(n) {
        if a.len() != p.len() || a.len() != n.len() {
            return Err(TrainError::ShapeMismatch(format!(
                "vector lengths {}, {}, {}",
                a.len(),
                p.len(),
                n.len()
            )));
        }
        total += (dist(a, p) - dist(a, n) + margin).max(0.0);
    }
    Ok(total / a.len() as f64)
}

/// Row-major `rows × cols` matrix times vector.
fn matvec(w: &[f64], rows: usize, x: &[f64]) -> Vec<f64> {
    let cols = x.len();
    (0..rows)
        .map(|r| w[r * cols..(r + 1) * cols].iter().zip(x).map(|(a, b)| a * b).sum())
        .collect()
}

fn add_outer(g: &mut [f64], scale: f64, y: &[f64], x: &[f64]) {
    let cols = x.len();
    for (r, &yr) in y.iter().enumerate() {
        let k = scale * yr;
        if k == 0.0 {
            continue;
        }
        for (gv, &xv) in g[r * cols..(r + 1) * cols].iter_mut().zip(x) {
            *gv += k * xv;
        }
    }
}

fn unit(y: &[f64]) -> (Vec<f64>, f64) {
    let norm = y.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
    (y.iter().map(|v| v / norm).collect(), norm)
}

/// Mean triplet loss of projected inputs and its gradient with respect to
/// the row-major `latent_dim × input_dim` weights.
pub fn projected_loss_and_grad(
    w: &[f64],
    latent_dim: usize,
    triplets: &[(&[f64], &[f64], &[f64])],
    margin: f64,
    normalize_latent: bool,
) -> (f64, Vec<f64>) {
    let mut grad = vec![0.0; w.len()];
    if triplets.is_empty() {
        return (0.0, grad);
    }
    let mut loss = 0.0;
    for &(a, p, n) in triplets {
        if normalize_latent {
            let (za, ra) = unit(&matvec(w, latent_dim, a));
            let (zp, rp) = unit(&matvec(w, latent_dim, p));
            let (zn, rn) = unit(&matvec(w, latent_dim, n));
            let dap = dist(&za, &zp);
            let dan = dist(&za, &zn);
            let h = dap - dan + margin;
            if h <= 0.0 {
                continue;
            }
            loss += h;
            let dp: Vec<f64> = za.iter().zip(&zp).map(|(x, y)| (x - y) / dap.max(1e-12)).collect();
            let dn: Vec<f64> = za.iter().zip(&zn).map(|(x, y)| (x - y) / dan.max(1e-12)).collect();
            let ga: Vec<f64> = dp.iter().zip(&dn).map(|(x, y)| x - y).collect();
            let gp: Vec<f64> = dp.iter().map(|x| -x).collect();
            for (g, z, r, x) in [(ga, &za, ra, a), (gp, &zp, rp, p), (dn, &zn, rn, n)] {
                let gz: f64 = g.iter().zip(z).map(|(u, v)| u * v).sum();
                let gy: Vec<f64> = g.iter().zip(z).map(|(u, v)| u - v * gz).collect();
                add_outer(&mut grad, 1.0 / r, &gy, x);
            }
        } else {
            let u: Vec<f64> = a.iter().zip(p).map(|(x, y)| x - y).collect();
            let v: Vec<f64> = a.iter().zip(n).map(|(x, y)| x - y).collect();
            let wu = matvec(w, latent_dim, &u);
            let wv = matvec(w, latent_dim, &v);
            let dap = wu.iter().map(|x| x * x).sum::<f64>().sqrt();
            let dan = wv.iter().map(|x| x * x).sum::<f64>().sqrt();
            let h = dap - dan + margin;
            if h <= 0.0 {
                continue;
            }
            loss += h;
            add_outer(&mut grad, 1.0 / dap.max(1e-12), &wu, &u);
            add_outer(&mut grad, -1.0 / dan.max(1e-12), &wv, &v);
        }
    }
    let k = triplets.len() as f64;
    grad.iter_mut().for_each(|g| *g /= k);
    (loss / k, grad)
}

/// Anchor, positive and negative clip ids of one training instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Triplet<'a> {
    pub anchor: &'a str,
    pub positive: &'a str,
    pub negative: &'a str,
}

/// The consensus pair supplies anchor and positive in random order; the
/// third clip is the negative.
pub fn make_triplets<'a, K, V>(
    t: &'a ConsensusTriad,
    inputs: &HashMap<K, V>,
    rng: &mut impl Rng,
) -> Result<Triplet<'a>, TrainError>
where
    K: Borrow<str> + Hash + Eq,
{
    if let Some(missing) = t.triad.clips.iter().find(|c| !inputs.contains_key(c.as_str())) {
        return Err(TrainError::MissingFeature(missing.clone()));
    }
    let (i, j) = t.consensus_pair.positions();
    let k = t.consensus_pair.odd_one_out();
    let (i, j) = if rng.random_bool(0.5) { (j, i) } else { (i, j) };
    Ok(Triplet {
        anchor: &t.triad.clips[i],
        positive: &t.triad.clips[j],
        negative: &t.triad.clips[k],
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionModel {
    pub input_kind: InputKind,
    pub input_dim: usize,
    pub latent_dim: usize,
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
    /// Row-major `latent_dim × input_dim`.
    pub weights: Vec<f64>,
    pub normalize_latent: bool,
    pub rank_deficient: bool,
}

impl ProjectionModel {
    pub fn normalize_input(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.means)
            .zip(&self.stds)
            .map(|((v, m), s)| (v - m) / s)
            .collect()
    }

    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        let y = matvec(&self.weights, self.latent_dim, &self.normalize_input(x));
        if self.normalize_latent {
            unit(&y).0
        } else {
            y
        }
    }
}

/// Per-dimension mean and standard deviation over `clips`. Constant
/// dimensions get unit scale so they normalize to zero.
pub fn fit_normalizer(
    clips: &BTreeSet<&str>,
    inputs: &HashMap<String, Vec<f64>>,
) -> Result<(Vec<f64>, Vec<f64>), TrainError> {
    let rows: Vec<&Vec<f64>> = clips
        .iter()
        .map(|c| inputs.get(*c).ok_or_else(|| TrainError::MissingFeature(c.to_string())))
        .collect::<Result<_, _>>()?;
    let dim = rows.first().map(|r| r.len()).ok_or(TrainError::DegenerateInput)?;
    if let Some(r) = rows.iter().find(|r| r.len() != dim) {
        return Err(TrainError::ShapeMismatch(format!("input dim {} vs {dim}", r.len())));
    }
    let n = rows.len() as f64;
    let means: Vec<f64> = (0..dim).map(|d| rows.iter().map(|r| r[d]).sum::<f64>() / n).collect();
    let stds: Vec<f64> = (0..dim)
        .map(|d| (rows.iter().map(|r| (r[d] - means[d]).powi(2)).sum::<f64>() / n).sqrt())
        .collect();
    if stds.iter().all(|&s| !(s > 1e-12)) {
        return Err(TrainError::DegenerateInput);
    }
    let stds = stds.into_iter().map(|s| if s > 1e-12 { s } else { 1.0 }).collect();
    Ok((means, stds))
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
    lr: f64,
}

impl Adam {
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(n: usize, lr: f64) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
            lr,
        }
    }

    fn step(&mut self, w: &mut [f64], g: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - Self::B1.powi(self.t);
        let c2 = 1.0 - Self::B2.powi(self.t);
        for i in 0..w.len() {
            self.m[i] = Self::B1 * self.m[i] + (1.0 - Self::B1) * g[i];
            self.v[i] = Self::B2 * self.v[i] + (1.0 - Self::B2) * g[i] * g[i];
            w[i] -= self.lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + Self::EPS);
        }
    }
}

/// Cosine agreement of a model's latent space on `triads`; `None` when no
/// triad is evaluable.
pub fn latent_agreement(
    model: &ProjectionModel,
    triads: &[ConsensusTriad],
    inputs: &HashMap<String, Vec<f64>>,
) -> Option<f64> {
    let clips: BTreeSet<&str> = triads.iter().flat_map(|t| t.triad.clips.iter().map(String::as_str)).collect();
    let latent: HashMap<&str, Vec<f64>> = clips
        .into_iter()
        .filter_map(|c| Some((c, model.project(inputs.get(c)?))))
        .collect();
    let scorer = PairwiseScorer(|a: &str, b: &str| cosine_similarity(latent.get(a)?, latent.get(b)?).ok());
    evaluate_agreement(triads, &scorer).ok().map(|a| a.percent())
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub model: ProjectionModel,
    /// Validation agreement of the returned weights.
    pub val_agreement: Option<f64>,
    /// Mean training loss of the returned weights, both anchor orders.
    pub final_loss: f64,
    pub epochs_run: usize,
}

/// Mini-batch Adam on the triplet loss. Early stopping keeps the weights
/// with the best validation agreement; with no validation triads the last
/// weights are kept.
#[allow(clippy::too_many_arguments)]
pub fn train_projection(
    train: &[ConsensusTriad],
    val: &[ConsensusTriad],
    inputs: &HashMap<String, Vec<f64>>,
    input_kind: &InputKind,
    latent_dim: usize,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<TrainOutcome, TrainError> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(TrainError::TooFewTriads { found: 0, needed: 1 });
    }
    let train_clips: BTreeSet<&str> = train.iter().flat_map(|t| t.triad.clips.iter().map(String::as_str)).collect();
    let (means, stds) = fit_normalizer(&train_clips, inputs)?;
    let input_dim = means.len();
    let mut model = ProjectionModel {
        input_kind: input_kind.clone(),
        input_dim,
        latent_dim,
        means,
        stds,
        weights: Vec::new(),
        normalize_latent: cfg.normalize_latent,
        rank_deficient: latent_dim > input_dim,
    };
    let normalized: HashMap<&str, Vec<f64>> = train_clips
        .iter()
        .map(|&c| (c, model.normalize_input(&inputs[c])))
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let init = Normal::new(0.0, 1.0 / (input_dim as f64).sqrt()).expect("positive scale");
    model.weights = (0..latent_dim * input_dim).map(|_| init.sample(&mut rng)).collect();

    let mut adam = Adam::new(model.weights.len(), cfg.learning_rate);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut since_best = 0;
    let mut epochs_run = 0;
    for _ in 0..cfg.epochs {
        epochs_run += 1;
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            let mut triplets = Vec::with_capacity(batch.len());
            for &i in batch {
                let t = make_triplets(&train[i], &normalized, &mut rng)?;
                triplets.push((
                    normalized[t.anchor].as_slice(),
                    normalized[t.positive].as_slice(),
                    normalized[t.negative].as_slice(),
                ));
            }
            let (_, g) = projected_loss_and_grad(&model.weights, latent_dim, &triplets, cfg.margin, cfg.normalize_latent);
            adam.step(&mut model.weights, &g);
        }
        if val.is_empty() {
            continue;
        }
        let score = latent_agreement(&model, val, inputs).unwrap_or(0.0);
        if best.as_ref().is_none_or(|(b, _)| score > *b) {
            best = Some((score, model.weights.clone()));
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                break;
            }
        }
    }
    let val_agreement = best.as_ref().map(|(s, _)| *s);
    if let Some((_, w)) = best {
        model.weights = w;
    }
    if model.weights.iter().any(|w| !w.is_finite()) {
        return Err(TrainError::InvalidConfig("training diverged to non-finite weights".into()));
    }

    let mut both = Vec::with_capacity(2 * train.len());
    for t in train {
        let (i, j) = t.consensus_pair.positions();
        let k = t.consensus_pair.odd_one_out();
        let c = &t.triad.clips;
        for (a, p) in [(i, j), (j, i)] {
            both.push((
                normalized[c[a].as_str()].as_slice(),
                normalized[c[p].as_str()].as_slice(),
                normalized[c[k].as_str()].as_slice(),
            ));
        }
    }
    let (final_loss, _) = projected_loss_and_grad(&model.weights, latent_dim, &both, cfg.margin, cfg.normalize_latent);
    Ok(TrainOutcome {
        model,
        val_agreement,
        final_loss,
        epochs_run,
    })
}

/// Triad indices of a fixed holdout and k folds over the remainder.
#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub holdout: Vec<usize>,
    pub folds: Vec<Vec<usize>>,
}

impl Split {
    /// Training indices of fold `k`: every other fold.
    pub fn train(&self, k: usize) -> Vec<usize> {
        self.folds
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != k)
            .flat_map(|(_, f)| f.iter().copied())
            .collect()
    }
}

/// Seeded triad-level split; depends only on `n` and the seed, never on
/// labels.
pub fn split_triads(n: usize, cfg: &TrainConfig) -> Result<Split, TrainError> {
    cfg.validate()?;
    let n_holdout = (n as f64 * cfg.holdout_frac).round() as usize;
    if n < cfg.folds + 1 || n_holdout == 0 || n - n_holdout < cfg.folds {
        return Err(TrainError::TooFewTriads {
            found: n,
            needed: (cfg.folds + 1).max((1.0 / cfg.holdout_frac).ceil() as usize),
        });
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(cfg.seed));
    let (holdout, rest) = idx.split_at(n_holdout);
    let (base, extra) = (rest.len() / cfg.folds, rest.len() % cfg.folds);
    let mut folds = Vec::with_capacity(cfg.folds);
    let mut start = 0;
    for k in 0..cfg.folds {
        let len = base + usize::from(k < extra);
        folds.push(rest[start..start + len].to_vec());
        start += len;
    }
    Ok(Split {
        holdout: holdout.to_vec(),
        folds,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub fold: usize,
    pub latent_dim: usize,
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    pub val_agreement: Option<f64>,
    pub test_agreement: Option<f64>,
    pub final_loss: Option<f64>,
    pub epochs_run: usize,
    pub rank_deficient: bool,
    /// Not trained because `latent_dim > input_dim` and that was not
    /// allowed.
    pub skipped: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolResult {
    pub split: Split,
    pub reports: Vec<FoldReport>,
    /// Trained models keyed like `reports`; `None` for skipped jobs.
    pub models: Vec<Option<ProjectionModel>>,
}

fn job_seed(seed: u64, latent_dim: usize, fold: usize) -> u64 {
    seed ^ ((latent_dim as u64) << 32) ^ (fold as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Holdout split, k-fold training for every latent size, and evaluation of
/// each fold model on the holdout. Jobs run in parallel; results keep the
/// order (latent_dim, fold).
pub fn run_protocol(
    consensus: &[ConsensusTriad],
    inputs: &HashMap<String, Vec<f64>>,
    input_kind: &InputKind,
    cfg: &TrainConfig,
) -> Result<ProtocolResult, TrainError> {
    let split = split_triads(consensus.len(), cfg)?;
    let pick = |ix: &[usize]| -> Vec<ConsensusTriad> { ix.iter().map(|&i| consensus[i].clone()).collect() };
    let holdout = pick(&split.holdout);
    let input_dim = consensus
        .iter()
        .flat_map(|t| t.triad.clips.iter())
        .find_map(|c| inputs.get(c))
        .map(|v| v.len())
        .ok_or(TrainError::DegenerateInput)?;

    let jobs: Vec<(usize, usize)> = cfg
        .latent_dims
        .iter()
        .flat_map(|&d| (0..cfg.folds).map(move |k| (d, k)))
        .collect();
    let results: Vec<Result<(FoldReport, Option<ProjectionModel>), TrainError>> = jobs
        .par_iter()
        .map(|&(dim, k)| {
            let train = pick(&split.train(k));
            let val = pick(&split.folds[k]);
            let mut report = FoldReport {
                fold: k,
                latent_dim: dim,
                n_train: train.len(),
                n_val: val.len(),
                n_test: holdout.len(),
                val_agreement: None,
                test_agreement: None,
                final_loss: None,
                epochs_run: 0,
                rank_deficient: dim > input_dim,
                skipped: false,
            };
            if report.rank_deficient && !cfg.allow_rank_deficient {
                report.skipped = true;
                return Ok((report, None));
            }
            let out = train_projection(&train, &val, inputs, input_kind, dim, cfg, job_seed(cfg.seed, dim, k))?;
            report.val_agreement = out.val_agreement;
            report.test_agreement = latent_agreement(&out.model, &holdout, inputs);
            report.final_loss = Some(out.final_loss);
            report.epochs_run = out.epochs_run;
            Ok((report, Some(out.model)))
        })
        .collect();
    let mut reports = Vec::with_capacity(results.len());
    let mut models = Vec::with_capacity(results.len());
    for r in results {
        let (rep, m) = r?;
        reports.push(rep);
        models.push(m);
    }
    Ok(ProtocolResult { split, reports, models })
}

/// Mean holdout agreement across folds for one latent size.
pub fn mean_test_agreement(reports: &[FoldReport], latent_dim: usize) -> Option<f64> {
    let vals: Vec<f64> = reports
        .iter()
        .filter(|r| r.latent_dim == latent_dim)
        .filter_map(|r| r.test_agreement)
        .collect();
    (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
}

/// One row per latent size: mean, population standard deviation and the
/// per-fold holdout agreements.
pub fn sweep_csv(reports: &[FoldReport]) -> String {
    let folds = reports.iter().map(|r| r.fold + 1).max().unwrap_or(0);
    let mut s = String::from("latent_dim,status,mean_test,std_test");
    for k in 0..folds {
        let _ = write!(s, ",fold{k}");
    }
    s.push('\n');
    let dims: BTreeSet<usize> = reports.iter().map(|r| r.latent_dim).collect();
    for d in dims {
        let rows: Vec<&FoldReport> = reports.iter().filter(|r| r.latent_dim == d).collect();
        let status = if rows.iter().any(|r| r.skipped) {
            "invalid-rank-deficient"
        } else if rows.iter().any(|r| r.rank_deficient) {
            "rank-deficient"
        } else {
            "ok"
        };
        let vals: Vec<f64> = rows.iter().filter_map(|r| r.test_agreement).collect();
        let (mean, std) = if vals.is_empty() {
            (String::new(), String::new())
        } else {
            let m = vals.iter().sum::<f64>() / vals.len() as f64;
            let v = vals.iter().map(|x| (x - m).powi(2)).sum::<f64>() / vals.len() as f64;
            (format!("{m:.2}"), format!("{:.2}", v.sqrt()))
        };
        let _ = write!(s, "{d},{status},{mean},{std}");
        for k in 0..folds {
            let v = rows.iter().find(|r| r.fold == k).and_then(|r| r.test_agreement);
            let _ = write!(s, ",{}", v.map(|x| format!("{x:.2}")).unwrap_or_default());
        }
        s.push('\n');
    }
    s
}
