//! End-to-end acceptance checks. Prints one PASS/FAIL line per check and
//! exits nonzero if any fails.
//!
//! cargo test -p prosody-cli --test acceptance

use std::collections::HashMap;
use std::path::PathBuf;
use std::process::Command;
use std::time::Instant;

use prosody_core::agreement::{
    evaluate_agreement, is_hit, probe_layers, AntiOracle, ConsensusOracle, PairwiseScorer, RandomScorer, TriadScorer,
};
use prosody_core::embedding::{read_stack, write_stack, EmbeddingError, EmbeddingStack};
use prosody_core::manifest::Dataset;
use prosody_core::pitch::{fit_legendre_points, pitch_stats, track_pitch, PitchConfig};
use prosody_core::similarity::cosine_similarity;
use prosody_core::simulate::{generate_latent_study, planted_stacks, LatentStudyConfig};
use prosody_core::synth::{concat, sawtooth, silence, sine, white_noise};
use prosody_core::trainer::{
    mean_test_agreement, projected_loss_and_grad, run_protocol, triplet_loss, InputKind, TrainConfig,
};
use prosody_core::triad::{ConsensusTriad, PairChoice, Triad};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

type Check = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn triplet_identities() -> Check {
    let z = vec![0.0, 0.0];
    let cases = [
        (vec![z.clone()], vec![z.clone()], vec![z.clone()], 0.5),
        (vec![z.clone()], vec![z.clone()], vec![vec![2.0, 0.0]], 0.0),
        (vec![z.clone()], vec![vec![1.0, 0.0]], vec![vec![0.0, 1.0]], 0.5),
    ];
    for (i, (a, p, n, want)) in cases.iter().enumerate() {
        let got = triplet_loss(a, p, n, 0.5).map_err(|e| e.to_string())?;
        ensure((got - want).abs() <= 1e-9, || format!("case {i}: {got} != {want}"))?;
    }
    Ok("3 cases within 1e-9".into())
}

fn latent(w: &[f64], k: usize, x: &[f64]) -> Vec<f64> {
    let y: Vec<f64> = w.chunks(x.len()).take(k).map(|r| r.iter().zip(x).map(|(a, b)| a * b).sum()).collect();
    let n = y.iter().map(|v| v * v).sum::<f64>().sqrt();
    y.iter().map(|v| v / n).collect()
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

fn gradient_check() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (margin, h) = (0.5, 1e-6);
    let mut done = 0;
    let mut worst: f64 = 0.0;
    while done < 100 {
        let (d, k, b) = (rng.random_range(2..7), rng.random_range(1..5), rng.random_range(1..6));
        let w: Vec<f64> = (0..k * d).map(|_| normal(&mut rng)).collect();
        let xs: Vec<Vec<f64>> = (0..3 * b).map(|_| (0..d).map(|_| normal(&mut rng)).collect()).collect();
        let trips: Vec<(&[f64], &[f64], &[f64])> =
            (0..b).map(|i| (&xs[3 * i][..], &xs[3 * i + 1][..], &xs[3 * i + 2][..])).collect();
        let slacks: Vec<f64> = trips
            .iter()
            .map(|(a, p, n)| {
                let (a, p, n) = (latent(&w, k, a), latent(&w, k, p), latent(&w, k, n));
                euclid(&a, &p) - euclid(&a, &n) + margin
            })
            .collect();
        if slacks.iter().any(|s| s.abs() < 1e-2) || slacks.iter().all(|&s| s < 0.0) {
            continue;
        }
        let own_loss = slacks.iter().map(|s| s.max(0.0)).sum::<f64>() / b as f64;
        let (loss, grad) = projected_loss_and_grad(&w, k, &trips, margin, true);
        ensure((loss - own_loss).abs() <= 1e-9, || format!("loss {loss} vs {own_loss}"))?;
        let mut fd = vec![0.0; w.len()];
        for i in 0..w.len() {
            let (mut up, mut dn) = (w.clone(), w.clone());
            up[i] += h;
            dn[i] -= h;
            fd[i] = (projected_loss_and_grad(&up, k, &trips, margin, true).0
                - projected_loss_and_grad(&dn, k, &trips, margin, true).0)
                / (2.0 * h);
        }
        let scale = fd.iter().chain(&grad).fold(0.0f64, |m, v| m.max(v.abs())).max(1e-8);
        let err = grad.iter().zip(&fd).fold(0.0f64, |m, (g, f)| m.max((g - f).abs())) / scale;
        worst = worst.max(err);
        ensure(err <= 1e-4, || format!("instance {done}: relative error {err:e}"))?;
        done += 1;
    }
    Ok(format!("100 instances, worst relative error {worst:.1e}"))
}

fn legendre_value(c: &[f64; 4], u: f64) -> f64 {
    c[0] + c[1] * u + c[2] * (1.5 * u * u - 0.5) + c[3] * (2.5 * u * u * u - 1.5 * u)
}

fn legendre_recovery() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut cases: Vec<([f64; 4], Box<dyn Fn(f64) -> f64>)> = vec![
        ([150.0, 0.0, 0.0, 0.0], Box::new(|_| 150.0)),
        ([100.0, 50.0, 0.0, 0.0], Box::new(|u| 100.0 + 50.0 * u)),
        ([1.0 / 3.0, 0.0, 2.0 / 3.0, 0.0], Box::new(|u| u * u)),
    ];
    for _ in 0..20 {
        let c = [
            rng.random_range(80.0..300.0),
            rng.random_range(-60.0..60.0),
            rng.random_range(-40.0..40.0),
            rng.random_range(-20.0..20.0),
        ];
        cases.push((c, Box::new(move |u| legendre_value(&c, u))));
    }
    for (c, f) in &cases {
        let n = 41;
        let pts: Vec<(f64, f64)> = (0..n)
            .map(|i| {
                let t = 0.5 + 0.01 * i as f64;
                (t, f(2.0 * i as f64 / (n - 1) as f64 - 1.0))
            })
            .collect();
        let got = fit_legendre_points(&pts).map_err(|e| e.to_string())?.as_array();
        for k in 0..4 {
            ensure((got[k] - c[k]).abs() <= 1e-6, || format!("{c:?}: got {got:?}"))?;
        }
    }
    for trial in 0..1000 {
        let n = rng.random_range(4..80);
        let vals: Vec<f64> = (0..n).map(|_| rng.random_range(75.0..400.0)).collect();
        let fwd: Vec<(f64, f64)> = vals.iter().enumerate().map(|(i, &v)| (i as f64 * 0.01, v)).collect();
        let rev: Vec<(f64, f64)> = vals.iter().rev().enumerate().map(|(i, &v)| (i as f64 * 0.01, v)).collect();
        let a = fit_legendre_points(&fwd).map_err(|e| e.to_string())?.as_array();
        let b = fit_legendre_points(&rev).map_err(|e| e.to_string())?.as_array();
        let tol = 1e-6 * (1.0 + a.iter().fold(0.0f64, |m, v| m.max(v.abs())));
        let ok = (a[0] - b[0]).abs() <= tol
            && (a[1] + b[1]).abs() <= tol
            && (a[2] - b[2]).abs() <= tol
            && (a[3] + b[3]).abs() <= tol;
        ensure(ok, || format!("parity fails on contour {trial}: {a:?} vs {b:?}"))?;
    }
    Ok(format!("{} known contours, 1000 parity checks", cases.len()))
}

fn pitch_tracking() -> Check {
    let sr = 16_000;
    let cfg = PitchConfig::default();
    let (lead, tone_s) = (0.2, 0.6);
    let mut notes = Vec::new();
    for f in [120.0, 200.0, 350.0] {
        for (kind, tone) in [("sine", sine(f, tone_s, sr, 0.8)), ("sawtooth", sawtooth(f, tone_s, sr, 0.8))] {
            let w = concat(&[silence(lead, sr), tone, silence(lead, sr)]);
            let c = track_pitch(&w, &cfg).map_err(|e| format!("{kind} {f}: {e}"))?;
            // frames centered inside the tone
            let oracle = c.frames.iter().filter(|fr| fr.time_s >= lead && fr.time_s <= lead + tone_s).count();
            let s = pitch_stats(&c).map_err(|e| format!("{kind} {f}: {e}"))?;
            ensure((s.mean_hz - f).abs() <= 2.0, || format!("{kind} {f}: mean {:.2}", s.mean_hz))?;
            let dv = s.voiced_len as i64 - oracle as i64;
            ensure(dv.abs() <= 3, || format!("{kind} {f}: voiced {} vs {oracle}", s.voiced_len))?;
            notes.push(format!("{kind}{f}:{:+.2}Hz/{dv:+}fr", s.mean_hz - f));
        }
    }
    let quiet = track_pitch(&silence(1.0, sr), &cfg).map_err(|e| e.to_string())?;
    ensure(quiet.voiced_fraction() <= 0.1, || format!("silence voiced {}", quiet.voiced_fraction()))?;
    for seed in [1, 2, 3] {
        let noise = track_pitch(&white_noise(1.0, sr, 0.5, seed), &cfg).map_err(|e| e.to_string())?;
        ensure(noise.voiced_fraction() <= 0.1, || format!("noise seed {seed} voiced {}", noise.voiced_fraction()))?;
    }
    Ok(notes.join(" "))
}

fn random_consensus(n: usize, pool: usize, seed: u64) -> Vec<ConsensusTriad> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ids: Vec<String> = (0..pool).map(|i| format!("c{i:05}")).collect();
    (0..n)
        .map(|i| {
            let picks: Vec<&String> = ids.choose_multiple(&mut rng, 3).collect();
            ConsensusTriad {
                triad: Triad {
                    triad_id: format!("t{i:05}"),
                    dataset: Dataset::Synthetic,
                    lexical_form: "yeah".into(),
                    clips: [picks[0].clone(), picks[1].clone(), picks[2].clone()],
                },
                consensus_pair: PairChoice::from_index(rng.random_range(0..3)).expect("index < 3"),
                n_raters: 3,
            }
        })
        .collect()
}

fn agreement_protocol() -> Check {
    let triads = random_consensus(10_000, 3_000, 1);
    let oracle = evaluate_agreement(&triads, &ConsensusOracle).map_err(|e| e.to_string())?;
    ensure(oracle.hits == 10_000 && oracle.evaluated == 10_000, || format!("oracle {oracle:?}"))?;
    let anti = evaluate_agreement(&triads, &AntiOracle).map_err(|e| e.to_string())?;
    ensure(anti.hits == 0, || format!("anti-oracle {anti:?}"))?;
    let random = evaluate_agreement(&triads, &RandomScorer { seed: 17 }).map_err(|e| e.to_string())?;
    ensure((random.percent() - 100.0 / 3.0).abs() <= 1.5, || format!("random {:.2}", random.percent()))?;

    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let value: HashMap<String, f64> = triads
        .iter()
        .flat_map(|t| t.triad.clips.iter())
        .map(|c| (c.clone(), 0.0))
        .collect::<HashMap<_, _>>()
        .into_keys()
        .map(|c| (c, rng.random_range(0.0..1.0)))
        .collect();
    let scorer = PairwiseScorer(|a: &str, b: &str| Some(-(value[a] - value[b]).abs()));
    for t in triads.iter().take(1000) {
        let mut perm = [0usize, 1, 2];
        perm.shuffle(&mut rng);
        let mut moved = t.clone();
        for (new, &old) in perm.iter().enumerate() {
            moved.triad.clips[new] = t.triad.clips[old].clone();
        }
        let (i, j) = t.consensus_pair.positions();
        let at = |old: usize| perm.iter().position(|&p| p == old).expect("permutation");
        moved.consensus_pair = PairChoice::from_positions(at(i), at(j)).expect("distinct positions");
        let before = is_hit(scorer.score_pairs(t).expect("scored"), t.consensus_pair);
        let after = is_hit(scorer.score_pairs(&moved).expect("scored"), moved.consensus_pair);
        ensure(before == after, || format!("triad {} changes hit status under {perm:?}", t.triad.triad_id))?;
    }
    Ok(format!("oracle 100.00, anti-oracle 0.00, random {:.2}, 1000 relabelings", random.percent()))
}

fn synthetic_end_to_end() -> Check {
    let start = Instant::now();
    let study = generate_latent_study(&LatentStudyConfig::default());
    let cfg = TrainConfig {
        latent_dims: vec![8, 16, 64],
        ..Default::default()
    };
    let kind = InputKind::EmbeddingLayer { model: "synthetic".into(), layer: 0 };
    let result = run_protocol(&study.consensus, &study.inputs, &kind, &cfg).map_err(|e| e.to_string())?;
    let holdout: Vec<ConsensusTriad> = result.split.holdout.iter().map(|&i| study.consensus[i].clone()).collect();
    let raw = evaluate_agreement(
        &holdout,
        &PairwiseScorer(|a: &str, b: &str| cosine_similarity(&study.inputs[a], &study.inputs[b]).ok()),
    )
    .map_err(|e| e.to_string())?
    .percent();
    let mean = |d| mean_test_agreement(&result.reports, d).ok_or(format!("no result for dim {d}"));
    let (d8, d16, d64) = (mean(8)?, mean(16)?, mean(64)?);
    let secs = start.elapsed().as_secs_f64();
    let summary = format!("dim8 {d8:.2}, raw {raw:.2}, dim16 {d16:.2}, dim64 {d64:.2}, {secs:.0}s");
    ensure(d8 >= 85.0, || format!("dim 8 below 85: {summary}"))?;
    ensure(d8 - raw >= 10.0, || format!("gain over raw below 10: {summary}"))?;
    ensure((d16 - d64).abs() <= 5.0, || format!("dim 16 vs 64 gap above 5: {summary}"))?;
    ensure(secs <= 300.0, || format!("too slow: {summary}"))?;
    Ok(summary)
}

fn layer_probe() -> Check {
    let study = generate_latent_study(&LatentStudyConfig {
        n_clips: 200,
        n_triads: 800,
        input_dim: 8,
        seed: 3,
        ..Default::default()
    });
    let n_layers = 25;
    let stacks = planted_stacks(&study.latent, "planted", n_layers, 16, 12, 9);
    let curve = probe_layers(&study.consensus, &stacks, "planted").map_err(|e| e.to_string())?;
    ensure(curve.points.len() == n_layers, || format!("{} points", curve.points.len()))?;
    let peak = curve.peak_layer();
    ensure(peak == Some(12), || format!("peak at {peak:?}"))?;
    let (lo, hi) = curve.range().expect("nonempty curve");
    Ok(format!("{n_layers} points, peak 12, range {lo:.2} -- {hi:.2}"))
}

fn protocol_arithmetic() -> Check {
    let study = generate_latent_study(&LatentStudyConfig {
        n_clips: 120,
        n_triads: 300,
        input_dim: 6,
        seed: 4,
        ..Default::default()
    });
    ensure(study.consensus.len() >= 100, || "not enough consensus triads".into())?;
    let consensus: Vec<ConsensusTriad> = study.consensus[..100].to_vec();
    let cfg = TrainConfig {
        latent_dims: vec![2, 4],
        epochs: 15,
        ..Default::default()
    };
    let kind = InputKind::EmbeddingLayer { model: "synthetic".into(), layer: 0 };
    let a = run_protocol(&consensus, &study.inputs, &kind, &cfg).map_err(|e| e.to_string())?;
    ensure(a.split.holdout.len() == 20 && a.split.folds.len() == 5, || {
        format!("holdout {} folds {}", a.split.holdout.len(), a.split.folds.len())
    })?;
    for r in &a.reports {
        ensure((r.n_test, r.n_train, r.n_val) == (20, 64, 16), || {
            format!("fold {}: test {} train {} val {}", r.fold, r.n_test, r.n_train, r.n_val)
        })?;
    }
    let mut relabeled = consensus.clone();
    for &i in &a.split.holdout {
        let c = &mut relabeled[i].consensus_pair;
        *c = PairChoice::from_index((c.index() + 1) % 3).expect("index < 3");
    }
    let b = run_protocol(&relabeled, &study.inputs, &kind, &cfg).map_err(|e| e.to_string())?;
    ensure(a.split == b.split, || "split changed".into())?;
    for (ma, mb) in a.models.iter().zip(&b.models) {
        let (ma, mb) = (ma.as_ref().expect("trained"), mb.as_ref().expect("trained"));
        let same = ma.weights.iter().zip(&mb.weights).all(|(x, y)| x.to_bits() == y.to_bits())
            && ma.means == mb.means
            && ma.stds == mb.stds;
        ensure(same, || "holdout labels changed the trained weights".into())?;
    }
    Ok(format!("20/64/16 over 5 folds, {} models unchanged by holdout relabeling", a.models.len()))
}

fn pemb_round_trip() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for i in 0..1000 {
        let (n_layers, dim) = (rng.random_range(1..30), rng.random_range(1..80));
        let vectors: Vec<f32> = (0..n_layers * dim)
            .map(|_| loop {
                let x = f32::from_bits(rng.random());
                if x.is_finite() {
                    break x;
                }
            })
            .collect();
        let clip = format!("clip{i:04}");
        let s = EmbeddingStack::new(clip.clone(), "m", n_layers, dim, vectors).map_err(|e| e.to_string())?;
        let path = dir.path().join(format!("{clip}.m.pemb"));
        write_stack(&s, &path).map_err(|e| e.to_string())?;
        let back = read_stack(&path).map_err(|e| e.to_string())?;
        let exact = back.clip_id == clip
            && back.model_name == "m"
            && (back.n_layers, back.dim) == (n_layers, dim)
            && back.vectors.iter().zip(&s.vectors).all(|(a, b)| a.to_bits() == b.to_bits());
        ensure(exact, || format!("stack {i} differs after round trip"))?;
    }

    let header = |magic: &[u8; 4], version: u32, n: u32, d: u32| -> Vec<u8> {
        let mut b = magic.to_vec();
        for w in [version, n, d] {
            b.extend_from_slice(&w.to_le_bytes());
        }
        b
    };
    let mut good = header(b"PEMB", 1, 2, 3);
    good.extend(std::iter::repeat_n(0u8, 24));
    let mut bad_magic = good.clone();
    bad_magic[..4].copy_from_slice(b"XXXX");
    let mut bad_version = good.clone();
    bad_version[4..8].copy_from_slice(&9u32.to_le_bytes());
    let cut = &good[..good.len() - 5];
    let cases: Vec<(&str, Vec<u8>, fn(&EmbeddingError) -> bool)> = vec![
        ("bad magic", bad_magic, |e| matches!(e, EmbeddingError::BadMagic(_))),
        ("bad version", bad_version, |e| matches!(e, EmbeddingError::VersionMismatch(9))),
        ("truncated payload", cut.to_vec(), |e| matches!(e, EmbeddingError::Truncated { .. })),
        ("truncated header", good[..10].to_vec(), |e| matches!(e, EmbeddingError::Truncated { .. })),
    ];
    for (name, bytes, want) in cases {
        let path = dir.path().join(format!("bad-{}.m.pemb", name.replace(' ', "-")));
        std::fs::write(&path, &bytes).map_err(|e| e.to_string())?;
        match read_stack(&path) {
            Err(e) if want(&e) => {}
            other => return Err(format!("{name}: got {other:?}")),
        }
    }
    let again = EmbeddingStack::new("clip0000", "m", 1, 1, vec![0.0]).map_err(|e| e.to_string())?;
    ensure(
        matches!(write_stack(&again, dir.path().join("clip0000.m.pemb")), Err(EmbeddingError::AlreadyExists(_))),
        || "existing file was overwritten".into(),
    )?;
    Ok("1000 stacks bit-exact, 4 malformed files rejected".into())
}

fn report_fidelity() -> Check {
    let mini = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data/mini");
    let pinned = ["report.csv", "report.txt", "report.json", "layers-FiCa-toy.csv", "layers-Fisher-toy.csv"];
    for run in 0..2 {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let arg = |p: &str| mini.join(p).to_string_lossy().into_owned();
        let out = Command::new(env!("CARGO_BIN_EXE_prosody"))
            .args(["eval", "--consensus", &arg("consensus.jsonl"), "--features", &arg("features.jsonl")])
            .args(["--manifest", &arg("manifest.jsonl"), "--model", "toy", "--emb-dir", &arg("emb")])
            .args(["--controls", "--out-dir"])
            .arg(dir.path())
            .output()
            .map_err(|e| e.to_string())?;
        ensure(out.status.success(), || String::from_utf8_lossy(&out.stderr).into_owned())?;
        for name in pinned {
            let got = std::fs::read(dir.path().join(name)).map_err(|e| e.to_string())?;
            let want = std::fs::read(mini.join("expected").join(name)).map_err(|e| e.to_string())?;
            ensure(got == want, || format!("run {run}: {name} differs from the pinned copy"))?;
        }
    }
    Ok(format!("{} files byte-identical over 2 runs", pinned.len()))
}

fn main() {
    let checks: [(&str, fn() -> Check); 10] = [
        ("triplet-loss identities", triplet_identities),
        ("gradient correctness", gradient_check),
        ("legendre recovery", legendre_recovery),
        ("pitch tracking", pitch_tracking),
        ("agreement protocol", agreement_protocol),
        ("synthetic end-to-end", synthetic_end_to_end),
        ("layer-probe curve shape", layer_probe),
        ("protocol arithmetic and leakage", protocol_arithmetic),
        ("PEMB round trip", pemb_round_trip),
        ("table/report fidelity", report_fidelity),
    ];
    let mut failed = 0;
    for (name, check) in checks {
        match check() {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL  {name}: {why}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", checks.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
