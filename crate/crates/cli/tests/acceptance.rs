//! Acceptance checks: one PASS/FAIL line per criterion.
//!
//! `TEXTSEP_ACCEPTANCE_ONLY=AC1,AC4` runs a subset.

mod common;

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;
use textsep::corpus::{default_classes, split_seen_unseen, Corpus, CorpusConfig, KnowledgeMode};
use textsep::dsp::wav::{read_wav, write_wav, WavFormat};
use textsep::dsp::{istft, snr_db, stft, StftConfig, Waveform};
use textsep::metrics::{best_match_permutation, decompose, exhaustive_assignment, hungarian_assignment, sdr, sir};
use textsep::mixer::{build_mixture_tree, GainPolicy, SourceClip};
use textsep::separator::{
    check_gradients, mean_sdr, score_case, separate, train, two_source_cases, Checkpoint, ClipPart, ClipPool,
    LossExample, Objective, OracleMasks, SeparatorConfig, SeparatorModel, TrainConfig,
};
use textsep::text::{build_fewshot_prompt, caption_audio, parse_sources, Caption, CaptionRegistry, MockCaptioner, MockLlm, Task};

const SEEDS: u64 = 5;
const TEST_CASES: usize = 50;
const DIRECTIONAL_TEST_CASES: usize = 30;

struct Outcome {
    id: &'static str,
    pass: bool,
}

fn report(id: &'static str, title: &str, pass: bool, detail: String) -> Outcome {
    println!("{id:<6} {} {title} | {detail}", if pass { "PASS" } else { "FAIL" });
    Outcome { id, pass }
}

fn selected(id: &str) -> bool {
    match std::env::var("TEXTSEP_ACCEPTANCE_ONLY") {
        Ok(list) if !list.trim().is_empty() => list.split(',').any(|s| s.trim().eq_ignore_ascii_case(id)),
        _ => true,
    }
}

fn noise(len: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

fn ac1() -> Outcome {
    let cfg = StftConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let t = Instant::now();
    let mut worst = f64::INFINITY;
    for _ in 0..100 {
        let x = Waveform::new(noise(16_000, &mut rng), 16_000).unwrap();
        let y = istft(&stft(&x, &cfg).unwrap()).unwrap();
        worst = worst.min(snr_db(x.samples(), y.samples()));
    }
    let secs = t.elapsed().as_secs_f64();
    report(
        "AC1",
        "STFT round trip (100 clips, 1 s @ 16 kHz, 1022/256)",
        worst >= 60.0 && secs < 10.0,
        format!("min SNR {worst:.1} dB (>= 60), {secs:.2} s (< 10)"),
    )
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `v` with its components along each of `basis` removed.
fn orthogonalize(mut v: Vec<f64>, basis: &[&[f64]]) -> Vec<f64> {
    for _ in 0..2 {
        for b in basis {
            let c = dot(&v, b) / dot(b, b);
            v.iter_mut().zip(b.iter()).for_each(|(x, y)| *x -= c * y);
        }
    }
    v
}

fn scaled_to_energy(v: &[f64], energy: f64) -> Vec<f64> {
    let k = (energy / dot(v, v)).sqrt();
    v.iter().map(|x| x * k).collect()
}

fn brute_force_best(score: &[Vec<f64>]) -> f64 {
    fn go(score: &[Vec<f64>], row: usize, used: &mut Vec<bool>, acc: f64, best: &mut f64) {
        if row == score.len() {
            *best = best.max(acc);
            return;
        }
        for c in 0..used.len() {
            if !used[c] {
                used[c] = true;
                go(score, row + 1, used, acc + score[row][c], best);
                used[c] = false;
            }
        }
    }
    let mut best = f64::NEG_INFINITY;
    go(score, 0, &mut vec![false; score[0].len()], 0.0, &mut best);
    best
}

fn total(score: &[Vec<f64>], assignment: &[(usize, usize)]) -> f64 {
    assignment.iter().map(|&(e, r)| score[e][r]).sum()
}

fn ac2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let n = 4096;
    let wave = |v: Vec<f64>| Waveform::new(v, 16_000).unwrap();
    let s = noise(n, &mut rng);
    let other = orthogonalize(noise(n, &mut rng), &[&s]);
    let refs = [wave(s.clone()), wave(other.clone())];
    let es = dot(&s, &s);
    let mut worst = 0.0f64;
    for (ratio, want) in [(10.0, 10.0), (100.0, 20.0), (1000.0, 30.0)] {
        let artifact = scaled_to_energy(&orthogonalize(noise(n, &mut rng), &[&s, &other]), es / ratio);
        let est = wave(s.iter().zip(&artifact).map(|(a, b)| a + b).collect());
        worst = worst.max((sdr(&decompose(&est, &refs, 0).unwrap()) - want).abs());
        let interf = scaled_to_energy(&other, es / ratio);
        let est = wave(s.iter().zip(&interf).map(|(a, b)| a + b).collect());
        let d = decompose(&est, &refs, 0).unwrap();
        worst = worst.max((sir(&d) - want).abs()).max((sdr(&d) - want).abs());
    }
    let mut mismatches = 0;
    for size in 1..=4usize {
        for case in 0..50u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(1000 * size as u64 + case);
            let score: Vec<Vec<f64>> = (0..size).map(|_| (0..size).map(|_| rng.gen_range(-20.0..40.0)).collect()).collect();
            let best = brute_force_best(&score);
            for a in [hungarian_assignment(&score), exhaustive_assignment(&score)] {
                if (total(&score, &a) - best).abs() > 1e-9 {
                    mismatches += 1;
                }
            }
            // Waveform-level: the reported assignment maximizes total SDR.
            let srcs: Vec<Waveform> = (0..size).map(|_| wave(noise(512, &mut rng))).collect();
            let perm: Vec<usize> = {
                let mut p: Vec<usize> = (0..size).collect();
                for i in (1..size).rev() {
                    p.swap(i, rng.gen_range(0..=i));
                }
                p
            };
            let ests: Vec<Waveform> = perm
                .iter()
                .map(|&j| {
                    let mut v = srcs[j].samples().to_vec();
                    v.iter_mut().for_each(|x| *x += 0.3 * rng.gen_range(-1.0..1.0));
                    wave(v)
                })
                .collect();
            let m = best_match_permutation(&ests, &srcs).unwrap();
            let sdrs: Vec<Vec<f64>> = ests
                .iter()
                .map(|e| (0..size).map(|r| sdr(&decompose(e, &srcs, r).unwrap())).collect())
                .collect();
            if (total(&sdrs, &m.assignment) - brute_force_best(&sdrs)).abs() > 1e-9 {
                mismatches += 1;
            }
        }
    }
    report(
        "AC2",
        "metric oracles (10/20/30 dB) and assignment vs exhaustive search",
        worst < 1e-6 && mismatches == 0,
        format!("max |error| {worst:.2e} dB (< 1e-6); {mismatches} assignment mismatches over 4x50 cases"),
    )
}

fn disjoint_band_classes() -> Vec<String> {
    ["tone_low", "chirp_up", "tone_high", "beep", "noise_high", "whistle"].map(String::from).to_vec()
}

fn ac3(corpus: &Corpus) -> Outcome {
    let pool = ClipPool::from_corpus(corpus, &disjoint_band_classes(), KnowledgeMode::Enriched, ClipPart::Test).unwrap();
    let cfg = StftConfig::default();
    let cases = two_source_cases(&pool, &GainPolicy::default(), TEST_CASES, 3).unwrap();
    let mut sdrs = Vec::new();
    let mut sirs = Vec::new();
    for c in &cases {
        let mags: Vec<_> = c.sources.iter().map(|s| stft(s, &cfg).unwrap().magnitude()).collect();
        let prompts = c.prompts.to_vec();
        let oracle = OracleMasks::from_sources(&prompts, &mags).unwrap();
        let est = separate(&c.mix, &prompts, &oracle, &cfg).unwrap();
        let m = best_match_permutation(&est, &c.sources).unwrap();
        sdrs.extend(m.pairs.iter().map(|p| p.sdr));
        sirs.extend(m.pairs.iter().map(|p| p.sir));
    }
    let (msdr, msir) = (mean(&sdrs), mean(&sirs));
    report(
        "AC3",
        "oracle ratio-mask ceiling (50 disjoint-band two-source mixtures)",
        msdr >= 25.0 && msir >= 30.0,
        format!("mean SDR {msdr:.2} dB (>= 25), mean SIR {msir:.2} dB (>= 30)"),
    )
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len().max(1) as f64
}

fn micro_clip(label: &str, seed: u64) -> SourceClip {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    SourceClip {
        audio: Waveform::new((0..60).map(|_| rng.gen_range(-0.5..0.5)).collect(), 16_000).unwrap(),
        class_label: label.into(),
        clip_id: format!("{label}_0"),
        descriptor: None,
    }
}

fn ac4() -> Outcome {
    let t = Instant::now();
    let cfg = SeparatorConfig::micro();
    let mut model = SeparatorModel::new(cfg).unwrap();
    for name in model.names().to_vec() {
        if name.ends_with(".o.w") {
            model.param_mut(&name).unwrap().mapv_inplace(|v| v * 10.0);
        }
    }
    let clips = [
        micro_clip("dog barking at 500 Hz", 3),
        micro_clip("a low hum", 4),
        micro_clip("rushing wind", 5),
        micro_clip("a bell near 2-4 kHz", 6),
    ];
    let tree = build_mixture_tree(clips, &GainPolicy::default().with_seed(3), &cfg.stft).unwrap();
    let examples = vec![LossExample::from_tree(&tree, Objective::MultiLevel)];
    let checks = check_gradients(&model, &examples, 1e-3, 48, 0).unwrap();
    let worst = checks.iter().max_by(|a, b| a.rel_error.total_cmp(&b.rel_error)).unwrap();
    let secs = t.elapsed().as_secs_f64();
    report(
        "AC4",
        "gradient check, micro config, every parameter group",
        worst.rel_error < 1e-4 && secs < 120.0,
        format!("{} groups, worst {} at {:.2e} (< 1e-4), {secs:.1} s (< 120)", checks.len(), worst.name, worst.rel_error),
    )
}

/// The default toy run shared by AC5, the two trained-model invariants and AC9.
fn ac5(corpus: &Corpus, out_dir: &Path) -> (Vec<Outcome>, Option<PathBuf>) {
    let ids = corpus.class_ids();
    let pool = ClipPool::from_corpus(corpus, &ids, KnowledgeMode::Enriched, ClipPart::Train).unwrap();
    let test = ClipPool::from_corpus(corpus, &ids, KnowledgeMode::Enriched, ClipPart::Test).unwrap();
    let tc = TrainConfig::toy();
    let cfg = SeparatorConfig::default();
    let t = Instant::now();
    let (state, logs) = train(SeparatorModel::new(cfg).unwrap(), &pool, &tc).unwrap();
    let train_secs = t.elapsed().as_secs_f64();
    let ckpt = out_dir.join("toy-default.ckpt");
    Checkpoint::from_state(&state).save(&ckpt).unwrap();
    let (first, last) = (logs[0].mean_loss, logs[logs.len() - 1].mean_loss);

    let cases = two_source_cases(&test, &GainPolicy::default(), TEST_CASES, 777).unwrap();
    let scores: Vec<_> = cases.iter().map(|c| score_case(&state.model, c, &cfg.stft, true).unwrap()).collect();
    let (model_sdr, mix_sdr) = mean_sdr(&scores);
    let swaps = scores.iter().filter(|s| s.swap_follows_prompt() == Some(true)).count();

    let mut out = vec![report(
        "AC5",
        "default toy training: time, loss halving, gain over mixture on 50 held-out mixtures",
        train_secs < 1800.0 && last <= 0.5 * first && model_sdr - mix_sdr >= 3.0,
        format!(
            "{} epochs in {:.0} s (< 1800); loss {first:.4} -> {last:.4} (ratio {:.3} <= 0.5); SDR {model_sdr:.2} vs mixture {mix_sdr:.2} dB (gain {:.2} >= 3)",
            logs.len(),
            train_secs,
            last / first,
            model_sdr - mix_sdr
        ),
    )];
    out.push(report(
        "INV-S",
        "swapping the two prompts swaps the best-matching source",
        swaps * 10 >= TEST_CASES * 9,
        format!("{swaps}/{TEST_CASES} (>= 90%)"),
    ));

    // Low-band check on a low-tone + high-tone mixture.
    let low = &test.clips_of("tone_low")[0].audio;
    let high = &test.clips_of("tone_high")[0].audio;
    let mix = Waveform::sum(&[low, high]).unwrap().scaled(0.5);
    let mag = stft(&mix, &cfg.stft).unwrap().magnitude();
    let prompt = corpus.prompt_for("tone_low", KnowledgeMode::Enriched).unwrap();
    let mask = state.model.predict_mask(&mag, &prompt).unwrap();
    let split = (1000.0 * cfg.stft.fft_length as f64 / cfg.sample_rate as f64) as usize;
    let b = mask.bins();
    let band_mean = |rows: std::ops::Range<usize>| {
        let n = rows.len() * b.ncols();
        rows.map(|f| b.row(f).sum()).sum::<f64>() / n as f64
    };
    let low_mean = band_mean(0..split);
    let high_mean = band_mean(split..b.nrows());
    out.push(report(
        "INV-L",
        "trained model, low-tone prompt on low+high tone mixture: low band > high band",
        low_mean > high_mean,
        format!("mean mask below 1 kHz {low_mean:.3}, above {high_mean:.3}"),
    ));
    (out, Some(ckpt))
}

/// Short small-preset schedule for the multi-seed comparisons.
fn directional_schedule(seed: u64, objective: Objective) -> TrainConfig {
    TrainConfig { epochs: 6, steps_per_epoch: 25, lr_decay_every: 4, objective, rng_seed: seed, ..TrainConfig::toy() }
}

fn small_model(seed: u64) -> SeparatorModel {
    SeparatorModel::new(SeparatorConfig { init_seed: seed, ..SeparatorConfig::small() }).unwrap()
}

fn test_sdr(model: &SeparatorModel, pool: &ClipPool, seed: u64) -> f64 {
    let cases = two_source_cases(pool, &GainPolicy::default(), DIRECTIONAL_TEST_CASES, seed).unwrap();
    let scores: Vec<_> = cases.iter().map(|c| score_case(model, c, &model.config.stft, false).unwrap()).collect();
    mean_sdr(&scores).0
}

fn ac6(corpus: &Corpus) -> Outcome {
    let ids = corpus.class_ids();
    let pool = ClipPool::from_corpus(corpus, &ids, KnowledgeMode::Enriched, ClipPart::Train).unwrap();
    let test = ClipPool::from_corpus(corpus, &ids, KnowledgeMode::Enriched, ClipPart::Test).unwrap();
    let mut multi = Vec::new();
    let mut single = Vec::new();
    for seed in 0..SEEDS {
        for (objective, acc) in [(Objective::MultiLevel, &mut multi), (Objective::SingleLevel, &mut single)] {
            let (state, _) = train(small_model(seed), &pool, &directional_schedule(seed, objective)).unwrap();
            acc.push(test_sdr(&state.model, &test, 900 + seed));
        }
    }
    let gap = mean(&multi) - mean(&single);
    report(
        "AC6",
        "six-prompt objective vs single-source prompts (5 seeds)",
        gap >= 0.0,
        format!(
            "mean SDR multi {:.2} dB, single {:.2} dB, gap {gap:+.2} dB (>= 0); per seed multi {:?} single {:?}",
            mean(&multi),
            mean(&single),
            rounded(&multi),
            rounded(&single)
        ),
    )
}

fn rounded(v: &[f64]) -> Vec<f64> {
    v.iter().map(|x| (x * 100.0).round() / 100.0).collect()
}

fn ac7(corpus: &Corpus) -> Outcome {
    let mut enriched = Vec::new();
    let mut class_only = Vec::new();
    for seed in 0..SEEDS {
        let split = split_seen_unseen(&corpus.class_ids(), seed).unwrap();
        for (mode, acc) in [(KnowledgeMode::Enriched, &mut enriched), (KnowledgeMode::ClassOnly, &mut class_only)] {
            let pool = ClipPool::from_corpus(corpus, &split.seen, mode, ClipPart::Train).unwrap();
            let unseen = ClipPool::from_corpus(corpus, &split.unseen, mode, ClipPart::Test).unwrap();
            let (state, _) = train(small_model(seed), &pool, &directional_schedule(seed, Objective::MultiLevel)).unwrap();
            acc.push(test_sdr(&state.model, &unseen, 1900 + seed));
        }
    }
    let gap = mean(&enriched) - mean(&class_only);
    report(
        "AC7",
        "enriched vs class-only prompts on unseen classes (5 seeds, 4/4 split)",
        gap >= 0.0,
        format!(
            "mean unseen SDR enriched {:.2} dB, class-only {:.2} dB, gap {gap:+.2} dB (>= 0); per seed enriched {:?} class-only {:?}",
            mean(&enriched),
            mean(&class_only),
            rounded(&enriched),
            rounded(&class_only)
        ),
    )
}

#[derive(Deserialize)]
struct Golden {
    caption: String,
    sources: Vec<String>,
}

fn ac8() -> Outcome {
    let goldens: Vec<Golden> =
        serde_json::from_str(include_str!("../../core/tests/fixtures/source_parse_goldens.json")).unwrap();
    let llm = MockLlm::default();
    let prompt = build_fewshot_prompt(Task::SourceParse, 5).unwrap();
    let wrong: Vec<&str> = goldens
        .iter()
        .filter(|g| {
            let caption = Caption { text: g.caption.clone(), source_backend: "fixture".into() };
            parse_sources(&caption, &prompt, &llm).unwrap().sources != g.sources
        })
        .map(|g| g.caption.as_str())
        .collect();
    // Captioner path: a clip whose caption repeats one source.
    let x = Waveform::new((0..160).map(|n| (n as f64 * 0.05).sin() * 0.5).collect(), 16_000).unwrap();
    let mut registry = CaptionRegistry::default();
    registry.register(&x, vec!["cat meows".into(), "cat meows".into()]);
    let caption = caption_audio(&x, &MockCaptioner::new(registry)).unwrap();
    let saw_cat = caption.text == "A cat meows and a cat meows."
        && parse_sources(&caption, &prompt, &llm).unwrap().sources == ["A cat meows"];
    let mut fewshot_ok = true;
    for task in [Task::SourceParse, Task::KnowledgeParse] {
        let mut prev: Vec<_> = Vec::new();
        for k in [1, 2, 3, 5] {
            let p = build_fewshot_prompt(task, k).unwrap();
            fewshot_ok &= p.exemplars.len() == k && p.exemplars[..prev.len()] == prev[..];
            prev = p.exemplars;
        }
    }
    report(
        "AC8",
        "parsing goldens with mock captioner + LLM; few-shot k in {1,2,3,5}",
        wrong.is_empty() && saw_cat && fewshot_ok,
        format!(
            "{}/{} goldens exact, duplicate collapse {}, few-shot counts and prefixes {}",
            goldens.len() - wrong.len(),
            goldens.len(),
            if saw_cat { "ok" } else { "missing" },
            if fewshot_ok { "ok" } else { "wrong" }
        ),
    )
}

fn ac9(corpus: &Corpus, ckpt: &Path, dir: &Path) -> Outcome {
    let low = &corpus.clips_of("tone_low")[9].audio;
    let high = &corpus.clips_of("noise_high")[9].audio;
    let mix = Waveform::sum(&[low, high]).unwrap().scaled(0.5);
    let wav = dir.join("toy_pair.wav");
    write_wav(&wav, &mix, WavFormat::Float32).unwrap();
    let mut reg = CaptionRegistry::default();
    reg.register(&read_wav(&wav, None).unwrap(), vec!["low steady tone".into(), "high airy hiss".into()]);
    let reg_path = dir.join("captions.json");
    reg.save(&reg_path).unwrap();
    let run = |out: &str| {
        let t = Instant::now();
        let o = Command::new(common::bin())
            .args(["separate", wav.to_str().unwrap(), "--checkpoint", ckpt.to_str().unwrap()])
            .args(["--captions", reg_path.to_str().unwrap(), "--out", out])
            .current_dir(dir)
            .env("RUST_LOG", "warn")
            .output()
            .unwrap();
        (o, t.elapsed().as_secs_f64())
    };
    let wavs = |m: &serde_json::Value| -> Vec<Vec<u8>> {
        m["outputs"]
            .as_array()
            .map(|v| v.iter().map(|o| std::fs::read(dir.join("sep").join(o["path"].as_str().unwrap())).unwrap_or_default()).collect())
            .unwrap_or_default()
    };
    let manifest = dir.join("sep/toy_pair.manifest.json");
    let (o1, s1) = run("sep");
    let m1 = common::read_json(&manifest);
    let w1 = wavs(&m1);
    let (o2, s2) = run("sep");
    let m2 = common::read_json(&manifest);
    let schema_errors = common::violations("run_manifest.schema.json", &m1);
    let n = m1["outputs"].as_array().map_or(0, Vec::len);
    let same = m1["content_hash"] == m2["content_hash"] && w1 == wavs(&m2);
    report(
        "AC9",
        "end-to-end separate: 2 WAVs + schema-valid manifest, deterministic, < 30 s",
        o1.status.success() && o2.status.success() && n == 2 && schema_errors.is_empty() && same && s1.max(s2) < 30.0,
        format!(
            "{n} outputs, schema errors {}, identical reruns {same}, wall {s1:.2} s / {s2:.2} s (< 30)",
            schema_errors.len()
        ),
    )
}

fn main() {
    // libtest flags such as --nocapture are accepted and ignored.
    let dir = tempfile::tempdir().unwrap();
    let corpus = Corpus::generate(&default_classes(), &CorpusConfig::default()).unwrap();
    let mut results = Vec::new();
    let t = Instant::now();
    if selected("AC1") {
        results.push(ac1());
    }
    if selected("AC2") {
        results.push(ac2());
    }
    if selected("AC3") {
        results.push(ac3(&corpus));
    }
    if selected("AC4") {
        results.push(ac4());
    }
    let mut ckpt = None;
    if selected("AC5") {
        let (r, c) = ac5(&corpus, dir.path());
        results.extend(r);
        ckpt = c;
    }
    if selected("AC6") {
        results.push(ac6(&corpus));
    }
    if selected("AC7") {
        results.push(ac7(&corpus));
    }
    if selected("AC8") {
        results.push(ac8());
    }
    if selected("AC9") {
        let ckpt = ckpt.unwrap_or_else(|| common::untrained_checkpoint(dir.path()));
        results.push(ac9(&corpus, &ckpt, dir.path()));
    }
    let failed: Vec<&str> = results.iter().filter(|r| !r.pass).map(|r| r.id).collect();
    println!(
        "acceptance: {}/{} passed in {:.0} s{}",
        results.len() - failed.len(),
        results.len(),
        t.elapsed().as_secs_f64(),
        if failed.is_empty() { String::new() } else { format!("; failed: {}", failed.join(", ")) }
    );
    if !failed.is_empty() {
        std::process::exit(1);
    }
}
