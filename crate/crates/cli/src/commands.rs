//! One function per subcommand. Each reads its inputs, writes its outputs
//! and a run record, and maps failures to exit codes.

use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use prosody_core::agreement::{emit_table, AgreementReport};
use prosody_core::audio::load_wav;
use prosody_core::corpus::{
    approved_clips, cut_clip, extract_feedback, parse_alignment, write_review_csv, CorpusError, ExtractConfig,
    FeedbackClip,
};
use prosody_core::embedding::{read_stack, stack_file_name, EmbeddingStack};
use prosody_core::features::{compute_features, ClipFeatures};
use prosody_core::jsonl::{read_jsonl, write_jsonl};
use prosody_core::manifest::{Dataset, Manifest};
use prosody_core::report::{build_report, spectrogram_signature, ClipData};
use prosody_core::similarity::SimilarityMetric;
use prosody_core::trainer::{run_protocol, sweep_csv, InputKind, TrainConfig};
use prosody_core::triad::{consensus_filter, sample_triads, ConsensusTriad, Triad};
use prosody_study::data::LOG_FILE;
use prosody_study::{load_study_data, Study, StudyError};
use rayon::prelude::*;
use serde::Serialize;

use crate::args::*;
use crate::config::FileConfig;
use crate::run::{record_path, RunRecorder};
use crate::{CliError, CliResult};

pub const DEFAULT_SEED: u64 = 17;

/// Settings shared by every command.
#[derive(Debug, Clone)]
pub struct Context {
    pub seed: u64,
    pub file: FileConfig,
}

pub fn run(cli: Cli) -> CliResult<()> {
    let file = crate::config::load(cli.config.as_deref())?;
    let seed = cli.seed.or(file.seed).unwrap_or(DEFAULT_SEED);
    if let Some(jobs) = cli.jobs.or(file.jobs) {
        // Fails only if a pool already exists, which is harmless.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build_global();
    }
    let ctx = Context { seed, file };
    match cli.command {
        Command::Extract(a) => extract(&ctx, a),
        Command::Features(a) => features(&ctx, a),
        Command::SampleTriads(a) => sample(&ctx, a),
        Command::Serve(a) => serve(&ctx, a),
        Command::Export(a) => export(&ctx, a),
        Command::Eval(a) => eval(&ctx, a),
        Command::ProbeLayers(a) => probe(&ctx, a),
        Command::Train(a) => train(&ctx, a),
        Command::Report(a) => report(&ctx, a),
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::failed(format!("{}: {e}", path.display()))
}

fn create_dir(path: &Path) -> CliResult<()> {
    std::fs::create_dir_all(path).map_err(|e| io_err(path, e))
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    std::fs::write(path, text).map_err(|e| io_err(path, e))
}

fn save_jsonl<T: Serialize>(path: &Path, records: &[T]) -> CliResult<()> {
    write_jsonl(path, records).map_err(|e| CliError::failed(e.to_string()))
}

fn load_manifest(path: &Path) -> CliResult<Manifest> {
    Manifest::load(path).map_err(|e| CliError::input(format!("manifest: {e}")))
}

fn load_consensus(paths: &[PathBuf]) -> CliResult<Vec<ConsensusTriad>> {
    let mut out = Vec::new();
    for p in paths {
        out.extend(read_jsonl::<ConsensusTriad>(p).map_err(|e| CliError::input(format!("consensus: {e}")))?);
    }
    if out.is_empty() {
        return Err(CliError::input("no consensus triads given"));
    }
    Ok(out)
}

fn load_features(path: &Path) -> CliResult<HashMap<String, ClipFeatures>> {
    let rows: Vec<ClipFeatures> = read_jsonl(path).map_err(|e| CliError::input(format!("features: {e}")))?;
    Ok(rows.into_iter().map(|f| (f.clip_id.clone(), f)).collect())
}

fn clips_of(consensus: &[ConsensusTriad]) -> BTreeSet<String> {
    consensus.iter().flat_map(|t| t.triad.clips.iter().cloned()).collect()
}

/// Stacks of `model` for `clips`, from `emb_dir` if given, otherwise from
/// the manifest paths. Absent files are left out; unreadable ones fail.
fn load_stacks(
    model: &str,
    clips: &BTreeSet<String>,
    manifest: Option<&Manifest>,
    emb_dir: Option<&Path>,
    rec: &mut RunRecorder,
) -> CliResult<HashMap<String, EmbeddingStack>> {
    let by_id = manifest.map(|m| m.by_id());
    let paths: Vec<(String, PathBuf)> = clips
        .iter()
        .filter_map(|c| {
            let path = match (emb_dir, manifest, &by_id) {
                (Some(dir), _, _) => Some(dir.join(stack_file_name(c, model))),
                (None, Some(m), Some(ids)) => ids.get(c.as_str()).and_then(|e| m.emb_path(e, model)),
                _ => None,
            }?;
            Some((c.clone(), path))
        })
        .collect();
    if emb_dir.is_none() && manifest.is_none() {
        return Err(CliError::input(format!("model {model}: give --emb-dir or --manifest")));
    }
    let loaded: Vec<(String, PathBuf, Option<EmbeddingStack>)> = paths
        .into_par_iter()
        .map(|(c, p)| {
            if !p.is_file() {
                return Ok((c, p, None));
            }
            let s = read_stack(&p).map_err(|e| CliError::input(format!("{}: {e}", p.display())))?;
            if s.clip_id != c || s.model_name != model {
                return Err(CliError::input(format!(
                    "{}: holds {}/{} instead of {c}/{model}",
                    p.display(),
                    s.clip_id,
                    s.model_name
                )));
            }
            Ok((c, p, Some(s)))
        })
        .collect::<CliResult<_>>()?;
    let mut out = HashMap::new();
    let mut missing = 0;
    for (c, p, s) in loaded {
        match s {
            Some(s) => {
                rec.input(&p)?;
                out.insert(c, s);
            }
            None => missing += 1,
        }
    }
    if missing > 0 {
        log::warn!("model {model}: {missing} of {} clips have no stack", clips.len());
    }
    Ok(out)
}

fn extract(ctx: &Context, a: ExtractArgs) -> CliResult<()> {
    let dataset: Dataset = a.dataset.parse().map_err(CliError::input)?;
    let mut cfg: ExtractConfig = ctx.file.extract.clone();
    if let Some(g) = a.isolation_gap_s {
        cfg.isolation_gap_s = g;
    }
    if let Some(p) = a.pad_s {
        cfg.pad_s = p;
    }
    let mut files: Vec<PathBuf> = std::fs::read_dir(&a.alignments)
        .map_err(|e| CliError::input(format!("{}: {e}", a.alignments.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_file()
                && p.extension()
                    .and_then(|x| x.to_str())
                    .is_some_and(|x| matches!(x.to_ascii_lowercase().as_str(), "tsv" | "txt" | "textgrid"))
        })
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(CliError::input(format!("no alignment files in {}", a.alignments.display())));
    }
    let clip_dir = a.out.join("clips");
    create_dir(&clip_dir)?;

    let per_file: Vec<Result<(Vec<FeedbackClip>, PathBuf), CorpusError>> = files
        .par_iter()
        .map(|path| {
            let alignment = parse_alignment(path)?;
            for w in &alignment.warnings {
                log::warn!("{w}");
            }
            let conv = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            let audio = a.audio.join(format!("{conv}.wav"));
            if !audio.is_file() {
                return Err(CorpusError::AudioMissing(audio));
            }
            let mut clips = Vec::new();
            for cand in extract_feedback(&alignment.words, &cfg) {
                match cut_clip(&audio, &cand, cfg.pad_s, dataset, &clip_dir) {
                    Ok(mut c) => {
                        c.wav_path = format!("clips/{}", c.wav_path);
                        clips.push(c);
                    }
                    Err(e @ CorpusError::OutOfBounds { .. }) => log::warn!("{}: {e}", path.display()),
                    Err(e) => return Err(e),
                }
            }
            Ok((clips, audio))
        })
        .collect();

    let mut rec = RunRecorder::new("extract", &cfg, ctx.seed);
    let mut clips = Vec::new();
    for (path, r) in files.iter().zip(per_file) {
        match r {
            Ok((c, audio)) => {
                rec.input(path)?;
                rec.input(&audio)?;
                clips.extend(c);
            }
            Err(e @ CorpusError::Parse { .. }) => return Err(CliError::input(e.to_string())),
            Err(e) => return Err(CliError::failed(e.to_string())),
        }
    }

    let review = a.out.join("review.csv");
    if !review.exists() {
        write_review_csv(&review, &clips).map_err(|e| CliError::failed(e.to_string()))?;
    }
    if let Some(approved) = &a.approved {
        let keep = approved_clips(approved).map_err(|e| CliError::input(e.to_string()))?;
        clips.retain(|c| keep.contains(&c.clip_id));
        rec.input(approved)?;
    }
    let clips_path = a.out.join("clips.jsonl");
    save_jsonl(&clips_path, &clips)?;
    let entries: Vec<_> = clips.iter().map(FeedbackClip::manifest_entry).collect();
    let manifest_path = a.out.join("manifest.jsonl");
    save_jsonl(&manifest_path, &entries)?;
    rec.output(&manifest_path)?;
    rec.output(&clips_path)?;
    rec.finish(&record_path(&a.out, true))?;
    println!("{} clips from {} conversations -> {}", clips.len(), files.len(), manifest_path.display());
    Ok(())
}

fn features(ctx: &Context, a: FeaturesArgs) -> CliResult<()> {
    let mut cfg = ctx.file.pitch;
    if let Some(f) = a.floor_hz {
        cfg.floor_hz = f;
    }
    if let Some(c) = a.ceil_hz {
        cfg.ceil_hz = c;
    }
    let manifest = load_manifest(&a.manifest)?;
    let rows: Vec<ClipFeatures> = manifest
        .entries
        .par_iter()
        .map(|e| match load_wav(manifest.wav_path(e)) {
            Ok(w) => compute_features(&e.clip_id, e.dataset, &e.lexical_form, &w, &cfg),
            Err(err) => ClipFeatures {
                clip_id: e.clip_id.clone(),
                dataset: e.dataset,
                lexical_form: e.lexical_form.clone(),
                n_frames: 0,
                voiced_len: 0,
                pitch: None,
                lp: None,
                reason: Some(format!("audio: {err}")),
            },
        })
        .collect();
    let failed = rows.iter().filter(|r| r.reason.is_some()).count();
    if let Some(parent) = a.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    save_jsonl(&a.out, &rows)?;
    let mut rec = RunRecorder::new("features", cfg, ctx.seed);
    rec.input(&a.manifest)?;
    rec.output(&a.out)?;
    rec.finish(&record_path(&a.out, false))?;
    println!("{} clips, {failed} with missing features -> {}", rows.len(), a.out.display());
    Ok(())
}

fn sample(ctx: &Context, a: SampleArgs) -> CliResult<()> {
    let manifest = load_manifest(&a.manifest)?;
    let triads = sample_triads(&manifest.entries, a.count, ctx.seed).map_err(|e| CliError::input(e.to_string()))?;
    save_jsonl(&a.out, &triads)?;
    let mut rec = RunRecorder::new("sample-triads", serde_json::json!({ "count": a.count }), ctx.seed);
    rec.input(&a.manifest)?;
    rec.output(&a.out)?;
    rec.finish(&record_path(&a.out, false))?;
    println!("{} triads -> {}", triads.len(), a.out.display());
    Ok(())
}

fn study_err(e: StudyError) -> CliError {
    match e {
        StudyError::MissingData(_) | StudyError::CorruptLog { .. } => CliError::input(e.to_string()),
        other => CliError::failed(other.to_string()),
    }
}

fn serve(ctx: &Context, a: ServeArgs) -> CliResult<()> {
    let data = load_study_data(&a.data_dir).map_err(study_err)?;
    let mut cfg = ctx.file.study.clone().unwrap_or(data.config);
    if let Some(r) = a.raters_per_triad {
        cfg.raters_per_triad = r;
    }
    let addr: SocketAddr = format!("{}:{}", a.host, a.port)
        .parse()
        .map_err(|e| CliError::input(format!("address {}:{}: {e}", a.host, a.port)))?;
    let app = prosody_study::open_app(&a.data_dir, Some(cfg.clone()), a.static_dir.clone()).map_err(study_err)?;
    let rec = RunRecorder::new("serve", &cfg, ctx.seed);
    rec.finish(&a.data_dir.join("serve.run.json"))?;
    let rt = tokio::runtime::Runtime::new().map_err(|e| CliError::failed(e.to_string()))?;
    rt.block_on(prosody_study::serve(app, addr)).map_err(|e| {
        if e.kind() == std::io::ErrorKind::AddrInUse {
            CliError::failed(format!("port {} is already in use", a.port))
        } else {
            CliError::failed(format!("server: {e}"))
        }
    })
}

fn export(ctx: &Context, a: ExportArgs) -> CliResult<()> {
    let data = load_study_data(&a.data_dir).map_err(study_err)?;
    let log = a.data_dir.join(LOG_FILE);
    if !log.is_file() {
        return Err(CliError::input(format!("no event log at {}", log.display())));
    }
    let triads: Vec<Triad> = data.triads.clone();
    let study = Study::open(data.triads, data.config, &log).map_err(study_err)?;
    let judgments = study.export_judgments();
    save_jsonl(&a.out, &judgments)?;
    let mut rec = RunRecorder::new("export", serde_json::json!({ "required": a.required }), ctx.seed);
    rec.input(&log)?;
    rec.output(&a.out)?;
    let mut summary = format!("{} judgments -> {}", judgments.len(), a.out.display());
    if let Some(path) = &a.consensus {
        let consensus = consensus_filter(&judgments, &triads, a.required);
        save_jsonl(path, &consensus)?;
        rec.output(path)?;
        let _ = write!(summary, "\n{} consensus triads -> {}", consensus.len(), path.display());
    }
    rec.finish(&record_path(&a.out, false))?;
    println!("{summary}");
    Ok(())
}

fn write_curve(out_dir: &Path, dataset: Option<Dataset>, curve: &prosody_core::agreement::LayerCurve) -> CliResult<PathBuf> {
    let name = match dataset {
        Some(d) => format!("layers-{d}-{}.csv", curve.model),
        None => format!("layers-{}.csv", curve.model),
    };
    let path = out_dir.join(name);
    write_text(&path, &curve.to_csv())?;
    Ok(path)
}

fn eval(ctx: &Context, a: EvalArgs) -> CliResult<()> {
    let consensus = load_consensus(&a.consensus)?;
    let clips = clips_of(&consensus);
    let manifest = a.manifest.as_deref().map(load_manifest).transpose()?;
    let mut rec = RunRecorder::new(
        "eval",
        serde_json::json!({ "models": a.models, "controls": a.controls, "spectral": !a.no_spectral }),
        ctx.seed,
    );
    for p in &a.consensus {
        rec.input(p)?;
    }

    let mut data = ClipData::default();
    let mut metrics = Vec::new();
    if let Some(path) = &a.features {
        data.features = load_features(path)?;
        rec.input(path)?;
        metrics.extend(
            SimilarityMetric::standard_rows()
                .into_iter()
                .filter(|m| matches!(m, SimilarityMetric::Scalar(_) | SimilarityMetric::LpCombined)),
        );
    }
    for model in &a.models {
        let stacks = load_stacks(model, &clips, manifest.as_ref(), a.emb_dir.as_deref(), &mut rec)?;
        data.stacks.insert(model.clone(), stacks);
        metrics.push(SimilarityMetric::Embedding(model.clone()));
    }
    if !a.no_spectral {
        if let Some(m) = &manifest {
            let by_id = m.by_id();
            let sigs: Vec<(String, Option<Vec<f64>>)> = clips
                .par_iter()
                .map(|c| {
                    let sig = by_id.get(c.as_str()).and_then(|e| {
                        let w = load_wav(m.wav_path(e)).map_err(|err| log::warn!("clip {c}: {err}")).ok()?;
                        spectrogram_signature(&w).map_err(|err| log::warn!("clip {c}: {err}")).ok()
                    });
                    (c.clone(), sig)
                })
                .collect();
            data.spectrograms = sigs.into_iter().filter_map(|(c, s)| Some((c, s?))).collect();
            rec.input(a.manifest.as_deref().expect("manifest given"))?;
            metrics.push(SimilarityMetric::SpectrogramCosine);
            metrics.push(SimilarityMetric::SpectralConvergence);
        }
    }
    if a.controls {
        metrics.push(SimilarityMetric::ConsensusOracle);
        metrics.push(SimilarityMetric::RandomScores(ctx.seed));
    }
    if metrics.is_empty() {
        return Err(CliError::input("nothing to evaluate: give --features, --model, --manifest or --controls"));
    }

    let (report, curves) = build_report(&consensus, &data, &metrics);
    create_dir(&a.out_dir)?;
    let written = write_report(&a.out_dir, &report)?;
    for p in &written {
        rec.output(p)?;
    }
    for (d, curve) in &curves {
        let p = write_curve(&a.out_dir, Some(*d), curve)?;
        rec.output(&p)?;
    }
    rec.finish(&record_path(&a.out_dir, true))?;
    print!("{}", emit_table(&report).text);
    Ok(())
}

/// Writes report.csv, report.txt and report.json.
fn write_report(out_dir: &Path, report: &AgreementReport) -> CliResult<Vec<PathBuf>> {
    let rendered = emit_table(report);
    let csv = out_dir.join("report.csv");
    let txt = out_dir.join("report.txt");
    let json = out_dir.join("report.json");
    write_text(&csv, &rendered.csv)?;
    write_text(&txt, &rendered.text)?;
    let body = serde_json::to_string_pretty(report).map_err(|e| CliError::failed(e.to_string()))?;
    write_text(&json, &(body + "\n"))?;
    Ok(vec![csv, txt, json])
}

fn probe(ctx: &Context, a: ProbeArgs) -> CliResult<()> {
    let consensus = load_consensus(&a.consensus)?;
    let manifest = a.manifest.as_deref().map(load_manifest).transpose()?;
    let mut rec = RunRecorder::new("probe-layers", serde_json::json!({ "model": a.model }), ctx.seed);
    for p in &a.consensus {
        rec.input(p)?;
    }
    let stacks = load_stacks(&a.model, &clips_of(&consensus), manifest.as_ref(), a.emb_dir.as_deref(), &mut rec)?;
    let curve = prosody_core::agreement::probe_layers(&consensus, &stacks, &a.model)
        .map_err(|e| CliError::input(e.to_string()))?;
    create_dir(&a.out_dir)?;
    let path = write_curve(&a.out_dir, None, &curve)?;
    rec.output(&path)?;
    rec.finish(&record_path(&a.out_dir, true))?;
    print!("{}", curve.to_csv());
    if let Some(peak) = curve.peak_layer() {
        println!("peak layer: {peak}");
    }
    Ok(())
}

pub fn parse_input_kind(s: &str) -> CliResult<InputKind> {
    match s {
        "lp3" => Ok(InputKind::Lp3),
        "lp3+voiced_len" => Ok(InputKind::Lp3VoicedLen),
        other => {
            let parts: Vec<&str> = other.splitn(3, ':').collect();
            match parts.as_slice() {
                ["emb", model, layer] if !model.is_empty() => Ok(InputKind::EmbeddingLayer {
                    model: model.to_string(),
                    layer: layer
                        .parse()
                        .map_err(|_| CliError::input(format!("bad layer in --input {other:?}")))?,
                }),
                _ => Err(CliError::input(format!(
                    "unknown --input {other:?} (expected lp3, lp3+voiced_len or emb:<model>:<layer>)"
                ))),
            }
        }
    }
}

fn train_config(ctx: &Context, a: &TrainArgs, kind: &InputKind) -> CliResult<TrainConfig> {
    let t = &ctx.file.train;
    let d = TrainConfig::default();
    let cfg = TrainConfig {
        margin: t.margin.unwrap_or(d.margin),
        latent_dims: a
            .dims
            .clone()
            .or_else(|| t.latent_dims.clone())
            .unwrap_or_else(|| kind.default_latent_dims()),
        folds: t.folds.unwrap_or(d.folds),
        holdout_frac: t.holdout_frac.unwrap_or(d.holdout_frac),
        epochs: a.epochs.or(t.epochs).unwrap_or(d.epochs),
        batch_size: t.batch_size.unwrap_or(d.batch_size),
        learning_rate: t.learning_rate.unwrap_or(d.learning_rate),
        seed: ctx.seed,
        patience: t.patience.unwrap_or(d.patience),
        normalize_latent: t.normalize_latent.unwrap_or(d.normalize_latent),
        allow_rank_deficient: a.allow_rank_deficient || t.allow_rank_deficient.unwrap_or(false),
    };
    cfg.validate().map_err(|e| CliError::input(e.to_string()))?;
    Ok(cfg)
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.4}")).unwrap_or_default()
}

fn train(ctx: &Context, a: TrainArgs) -> CliResult<()> {
    let kind = parse_input_kind(&a.input)?;
    let cfg = train_config(ctx, &a, &kind)?;
    let consensus = load_consensus(&a.consensus)?;
    let mut rec = RunRecorder::new("train", serde_json::json!({ "input": kind, "train": cfg }), ctx.seed);
    for p in &a.consensus {
        rec.input(p)?;
    }
    let inputs: HashMap<String, Vec<f64>> = match &kind {
        InputKind::EmbeddingLayer { model, .. } => {
            let manifest = a.manifest.as_deref().map(load_manifest).transpose()?;
            let stacks = load_stacks(model, &clips_of(&consensus), manifest.as_ref(), a.emb_dir.as_deref(), &mut rec)?;
            let mut out = HashMap::new();
            for (c, s) in &stacks {
                let v = kind
                    .from_stack(s)
                    .ok_or_else(|| CliError::input(format!("clip {c}: layer out of range ({} layers)", s.n_layers)))?;
                out.insert(c.clone(), v);
            }
            out
        }
        _ => {
            let path = a
                .features
                .as_deref()
                .ok_or_else(|| CliError::input("--features is required for LP inputs"))?;
            rec.input(path)?;
            load_features(path)?
                .iter()
                .filter_map(|(c, f)| Some((c.clone(), kind.from_features(f)?)))
                .collect()
        }
    };
    let usable: Vec<ConsensusTriad> = consensus
        .iter()
        .filter(|t| t.triad.clips.iter().all(|c| inputs.contains_key(c)))
        .cloned()
        .collect();
    if usable.len() < consensus.len() {
        log::warn!("{} of {} triads dropped for missing inputs", consensus.len() - usable.len(), consensus.len());
    }
    let result = run_protocol(&usable, &inputs, &kind, &cfg).map_err(|e| CliError::input(e.to_string()))?;

    let model_dir = a.out_dir.join("models");
    create_dir(&model_dir)?;
    let label = kind.label();
    for (r, m) in result.reports.iter().zip(&result.models) {
        if let Some(m) = m {
            let path = model_dir.join(format!("{label}-d{}-f{}.json", r.latent_dim, r.fold));
            let body = serde_json::to_string_pretty(m).map_err(|e| CliError::failed(e.to_string()))?;
            write_text(&path, &(body + "\n"))?;
            rec.output(&path)?;
        }
    }
    let mut folds = String::from(
        "latent_dim,fold,n_train,n_val,n_test,val_agreement,test_agreement,final_loss,epochs_run,rank_deficient,skipped\n",
    );
    for r in &result.reports {
        let _ = writeln!(
            folds,
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.latent_dim,
            r.fold,
            r.n_train,
            r.n_val,
            r.n_test,
            opt(r.val_agreement),
            opt(r.test_agreement),
            opt(r.final_loss),
            r.epochs_run,
            r.rank_deficient,
            r.skipped
        );
    }
    let folds_path = a.out_dir.join("folds.csv");
    write_text(&folds_path, &folds)?;
    let sweep = sweep_csv(&result.reports);
    let sweep_path = a.out_dir.join("sweep.csv");
    write_text(&sweep_path, &sweep)?;
    rec.output(&folds_path)?;
    rec.output(&sweep_path)?;
    rec.finish(&record_path(&a.out_dir, true))?;
    println!(
        "{label}: {} triads (holdout {}, {} folds)",
        usable.len(),
        result.split.holdout.len(),
        result.split.folds.len()
    );
    print!("{sweep}");
    Ok(())
}

fn report(ctx: &Context, a: ReportArgs) -> CliResult<()> {
    let mut merged = AgreementReport::default();
    let mut rec = RunRecorder::new("report", serde_json::Value::Null, ctx.seed);
    for p in &a.inputs {
        let text = std::fs::read_to_string(p).map_err(|e| CliError::input(format!("{}: {e}", p.display())))?;
        let r: AgreementReport =
            serde_json::from_str(&text).map_err(|e| CliError::input(format!("{}: {e}", p.display())))?;
        for row in r.rows {
            for (d, cell) in row.cells {
                merged.set(row.metric.clone(), d, cell);
            }
        }
        rec.input(p)?;
    }
    create_dir(&a.out_dir)?;
    for p in write_report(&a.out_dir, &merged)? {
        rec.output(&p)?;
    }
    rec.finish(&record_path(&a.out_dir, true))?;
    print!("{}", emit_table(&merged).text);
    Ok(())
}
