mod common;

use std::path::Path;

use common::*;
use textsep::corpus::{default_classes, Corpus, CorpusConfig, KnowledgeMode};
use textsep::dsp::wav::{read_wav, write_wav, WavFormat};
use textsep::dsp::{snr_db, Waveform};
use textsep::mixer::{GainPolicy, MixtureManifest};
use textsep::separator::Checkpoint;
use textsep::text::CaptionRegistry;
use textsep_cli::config::read_document;
use textsep_cli::pipeline::{output_name, slug};
use textsep_cli::{run_mixgen, run_train, CliError, MixgenOptions, PipelineConfig, Preset, TrainJob};

fn opts(count: usize, seed: u64) -> MixgenOptions {
    MixgenOptions { count, seed, knowledge_mode: KnowledgeMode::Enriched, held_out: false, gain: GainPolicy::default() }
}

#[test]
fn mixgen_hashes_repeat_across_runs() {
    let corpus = small_corpus(3);
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let (_, ia) = run_mixgen(&corpus, &opts(100, 7), a.path()).unwrap();
    let (pb, ib) = run_mixgen(&corpus, &opts(100, 7), b.path()).unwrap();
    assert_eq!(ia.manifests.len(), 100);
    assert_eq!(ia.manifests, ib.manifests);
    assert!(violations("mixtures.schema.json", &read_json(&pb)).is_empty());
    let (_, ic) = run_mixgen(&corpus, &opts(100, 8), b.path()).unwrap();
    assert_ne!(ia.manifests, ic.manifests);
}

#[test]
fn mixgen_needs_four_classes() {
    let three: Vec<_> = default_classes().into_iter().take(3).collect();
    let corpus = Corpus::generate(&three, &CorpusConfig { clips_per_class: 2, ..CorpusConfig::default() }).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let err = run_mixgen(&corpus, &opts(1, 0), dir.path()).unwrap_err();
    assert!(err.to_string().contains("invalid input"), "{err}");
    assert_eq!(err.exit_code(), 1);
}

#[test]
fn generated_trees_replay_from_disk() {
    let corpus = small_corpus(3);
    let dir = tempfile::tempdir().unwrap();
    run_mixgen(&corpus, &opts(5, 3), dir.path()).unwrap();
    for i in 0..5 {
        let m = MixtureManifest::read(&dir.path().join(format!("mix_{i:04}.json"))).unwrap();
        let load = |f: &str| read_wav(dir.path().join(f), None).unwrap();
        let leaves = m.scaled_leaves(dir.path()).unwrap();
        let mids = [load(&m.mid_wavs[0]), load(&m.mid_wavs[1])];
        let root = load(&m.root_wav);
        let sum = Waveform::sum(&[&mids[0], &mids[1]]).unwrap();
        assert!(snr_db(root.samples(), sum.samples()) > 120.0);
        for k in 0..2 {
            let pair = Waveform::sum(&[&leaves[2 * k], &leaves[2 * k + 1]]).unwrap();
            assert!(snr_db(mids[k].samples(), pair.samples()) > 120.0);
        }
        let mut classes = m.leaf_classes.to_vec();
        classes.sort();
        classes.dedup();
        assert_eq!(classes.len(), 4, "leaf classes drawn without replacement");
    }
}

fn smoke_job() -> TrainJob {
    let mut job = TrainJob { preset: Preset::Small, ..TrainJob::default() };
    job.train.epochs = 2;
    job.train.steps_per_epoch = 2;
    job.train.rng_seed = 5;
    job
}

#[test]
fn default_train_job_runs_eighty_epochs() {
    assert_eq!(TrainJob::default().train.epochs, 80);
    assert_eq!(TrainJob::default().train.lr, 1e-3);
}

#[test]
fn train_smoke_writes_csv_and_exact_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("m.ckpt");
    let res = run_train(&smoke_job(), &out, None).unwrap();
    let csv = std::fs::read_to_string(&res.csv).unwrap();
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows[0], "epoch,lr,mean_loss,wall_seconds");
    assert_eq!(rows.len(), 3);
    let bytes = std::fs::read(&out).unwrap();
    let ck = Checkpoint::from_bytes(&bytes).unwrap();
    assert_eq!(ck.epoch, 2);
    assert_eq!(ck.to_bytes().unwrap(), bytes);
}

#[test]
fn resume_matches_uninterrupted_run() {
    let dir = tempfile::tempdir().unwrap();
    let full = dir.path().join("full.ckpt");
    run_train(&smoke_job(), &full, None).unwrap();
    let mut first = smoke_job();
    first.train.epochs = 1;
    let half = dir.path().join("half.ckpt");
    run_train(&first, &half, None).unwrap();
    let resumed = dir.path().join("resumed.ckpt");
    let res = run_train(&smoke_job(), &resumed, Some(&half)).unwrap();
    assert_eq!(res.logs.len(), 2);
    let a = Checkpoint::load(&full).unwrap();
    let b = Checkpoint::load(&resumed).unwrap();
    assert_eq!(a.model.params, b.model.params);
    assert_eq!(a.adam, b.adam);
    assert_eq!(std::fs::read(&full).unwrap(), std::fs::read(&resumed).unwrap());
}

#[test]
fn train_binary_smoke() {
    let dir = tempfile::tempdir().unwrap();
    let o = textsep(&["train", "--preset", "small", "--epochs", "2", "--steps-per-epoch", "1", "--out", "m.ckpt"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(dir.path().join("m.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
}

fn pipeline_toml(dir: &Path, ckpt: &Path, registry: &Path) -> std::path::PathBuf {
    let path = dir.join("pipeline.toml");
    let text = format!(
        "schema_version = 1\ncheckpoint = {:?}\noutput_dir = \"out\"\nparallelism = 2\n\n[captioner]\nkind = \"mock-registry\"\nregistry = {:?}\n\n[fewshot]\nsource_parse_k = 3\nknowledge_parse_k = 2\n",
        ckpt.display().to_string(),
        registry.display().to_string()
    );
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn separate_writes_one_wav_per_source_and_repeats() {
    let corpus = small_corpus(1);
    let dir = tempfile::tempdir().unwrap();
    let ckpt = untrained_checkpoint(dir.path());
    let (wav, reg) = toy_mixture(&corpus, &["tone_low", "tone_high"], dir.path(), "two");
    let cfg = pipeline_toml(dir.path(), &ckpt, &reg);
    let args = ["separate", wav.to_str().unwrap(), "--config", cfg.to_str().unwrap()];
    let o1 = textsep(&args, dir.path());
    assert!(o1.status.success(), "{}", String::from_utf8_lossy(&o1.stderr));
    let mpath = dir.path().join("out/two.manifest.json");
    let m1 = read_json(&mpath);
    assert_eq!(violations("run_manifest.schema.json", &m1), Vec::<String>::new());
    assert_eq!(m1["status"], "ok");
    let outputs = m1["outputs"].as_array().unwrap();
    assert_eq!(outputs.len(), 2);
    assert_eq!(m1["sources"].as_array().unwrap().len(), 2);
    for o in outputs {
        let p = dir.path().join("out").join(o["path"].as_str().unwrap());
        assert_eq!(read_wav(&p, None).unwrap().len(), read_wav(&wav, None).unwrap().len());
    }
    assert_eq!(outputs[0]["path"], "two.src1.a-low-steady-tone.wav");

    let wav_bytes = std::fs::read(dir.path().join("out/two.src1.a-low-steady-tone.wav")).unwrap();
    let o2 = textsep(&args, dir.path());
    assert!(o2.status.success());
    let m2 = read_json(&mpath);
    assert_eq!(m1["content_hash"], m2["content_hash"]);
    assert_eq!(wav_bytes, std::fs::read(dir.path().join("out/two.src1.a-low-steady-tone.wav")).unwrap());

    let loaded: PipelineConfig = read_document(&cfg).unwrap();
    assert_eq!(m1["config_hash"], loaded.hash());
}

#[test]
fn enriched_card_matches_training_prompt() {
    let corpus = small_corpus(1);
    let dir = tempfile::tempdir().unwrap();
    let (wav, reg) = toy_mixture(&corpus, &["hum"], dir.path(), "one");
    let o = textsep(&["parse", wav.to_str().unwrap(), "--captions", reg.to_str().unwrap(), "--out", "p"], dir.path());
    assert!(o.status.success());
    let m = read_json(&dir.path().join("p/one.manifest.json"));
    assert_eq!(m["knowledge"][0]["full_text"].as_str().unwrap(), corpus.prompt_for("hum", KnowledgeMode::Enriched).unwrap());
    assert!(m["outputs"].as_array().unwrap().is_empty());
}

#[test]
fn output_count_equals_parsed_sources() {
    let corpus = small_corpus(1);
    let dir = tempfile::tempdir().unwrap();
    let ckpt = untrained_checkpoint(dir.path());
    let sets: [&[&str]; 3] = [&["whistle"], &["tone_low", "noise_high", "beep"], &["hum", "chirp_up", "tone_high", "whistle"]];
    for (i, classes) in sets.iter().enumerate() {
        let (wav, reg) = toy_mixture(&corpus, classes, dir.path(), &format!("case{i}"));
        let o = textsep(
            &["separate", wav.to_str().unwrap(), "--checkpoint", ckpt.to_str().unwrap(), "--captions", reg.to_str().unwrap(), "--out", "o"],
            dir.path(),
        );
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        let m = read_json(&dir.path().join(format!("o/case{i}.manifest.json")));
        assert_eq!(m["sources"].as_array().unwrap().len(), classes.len());
        assert_eq!(m["outputs"].as_array().unwrap().len(), classes.len());
    }
}

#[test]
fn unreachable_llm_fails_at_source_parsing() {
    let corpus = small_corpus(1);
    let dir = tempfile::tempdir().unwrap();
    let ckpt = untrained_checkpoint(dir.path());
    let (wav, reg) = toy_mixture(&corpus, &["hum", "beep"], dir.path(), "mix");
    let cfg = dir.path().join("c.toml");
    std::fs::write(
        &cfg,
        "schema_version = 1\n[llm]\nkind = \"http-chat\"\nendpoint = \"http://127.0.0.1:9/v1/chat/completions\"\n[llm.retry]\nmax_retries = 1\nbase_delay_ms = 1\n",
    )
    .unwrap();
    let o = std::process::Command::new(bin())
        .args(["separate", wav.to_str().unwrap(), "--config", cfg.to_str().unwrap()])
        .args(["--checkpoint", ckpt.to_str().unwrap(), "--captions", reg.to_str().unwrap(), "--out", "o"])
        .current_dir(dir.path())
        .env("TEXTSEP_LLM_API_KEY", "test-key")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
    let m = read_json(&dir.path().join("o/mix.manifest.json"));
    assert_eq!(m["status"], "failed");
    assert_eq!(m["failed_stage"], "parse_sources");
    // earlier stages stay recorded
    assert_eq!(m["caption"]["text"], "A buzzing harmonic hum and a pulsing beep.");
    assert!(m["timings"]["caption"].as_f64().is_some());
    let raw = std::fs::read_to_string(dir.path().join("o/mix.manifest.json")).unwrap();
    assert!(!raw.contains("test-key"));
    assert!(violations("run_manifest.schema.json", &m).is_empty());
}

#[test]
fn silent_input_gives_empty_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = untrained_checkpoint(dir.path());
    let silence = Waveform::zeros(16_000, 16_000);
    let wav = dir.path().join("quiet.wav");
    write_wav(&wav, &silence, WavFormat::Float32).unwrap();
    let mut reg = CaptionRegistry::default();
    reg.register(&silence, Vec::new());
    let reg_path = dir.path().join("captions.json");
    reg.save(&reg_path).unwrap();
    let o = textsep(
        &["separate", "quiet.wav", "--checkpoint", ckpt.to_str().unwrap(), "--captions", reg_path.to_str().unwrap(), "--out", "o"],
        dir.path(),
    );
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("warning"));
    let m = read_json(&dir.path().join("o/quiet.manifest.json"));
    assert_eq!(m["status"], "empty");
    assert!(m["outputs"].as_array().unwrap().is_empty());
    assert_eq!(m["warnings"].as_array().unwrap().len(), 1);
}

#[test]
fn unreadable_input_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = untrained_checkpoint(dir.path());
    let o = textsep(&["separate", "absent.wav", "--checkpoint", ckpt.to_str().unwrap(), "--out", "o"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    let m = read_json(&dir.path().join("o/absent.manifest.json"));
    assert_eq!(m["failed_stage"], "load_input");
}

#[test]
fn evaluate_identity_hits_the_cap() {
    let corpus = small_corpus(1);
    let dir = tempfile::tempdir().unwrap();
    for case in ["a", "b"] {
        let d = dir.path().join("refs").join(case);
        std::fs::create_dir_all(&d).unwrap();
        for (k, c) in ["tone_low", "whistle"].iter().enumerate() {
            write_wav(d.join(format!("s{k}.wav")), &corpus.clips_of(c)[0].audio, WavFormat::Float32).unwrap();
        }
    }
    let o = textsep(&["evaluate", "--estimates", "refs", "--references", "refs", "--out", "r/report.json"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r = read_json(&dir.path().join("r/report.json"));
    assert_eq!(violations("eval_report.schema.json", &r), Vec::<String>::new());
    assert_eq!(r["mean_sdr"].as_f64().unwrap(), textsep::metrics::SDR_CAP_DB);
    assert_eq!(r["std_sdr"].as_f64().unwrap(), 0.0);
    assert!(dir.path().join("r/report.csv").exists());

    let o = textsep(&["evaluate", "--estimates", "nowhere", "--references", "refs", "--out", "r2.json"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("nowhere"));
}

#[test]
fn oracle_evaluation_of_toy_trees() {
    let dir = tempfile::tempdir().unwrap();
    let o = textsep(&["mixgen", "--count", "50", "--seed", "11", "--out", "m"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let o = textsep(&["evaluate", "--manifests", "m", "--oracle", "--out", "oracle.json"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r = read_json(&dir.path().join("oracle.json"));
    assert!(violations("eval_report.schema.json", &r).is_empty());
    assert_eq!(r["cases"].as_array().unwrap().len(), 50);
    let mean = r["mean_sdr"].as_f64().unwrap();
    assert!(mean >= 25.0, "oracle mean SDR {mean}");
}

#[test]
fn config_formats_agree_and_validate() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = untrained_checkpoint(dir.path());
    let reg = dir.path().join("captions.json");
    CaptionRegistry::default().save(&reg).unwrap();
    let toml_path = pipeline_toml(dir.path(), &ckpt, &reg);
    let from_toml = PipelineConfig::load(&toml_path).unwrap();
    let json_path = dir.path().join("pipeline.json");
    std::fs::write(&json_path, serde_json::to_string(&from_toml).unwrap()).unwrap();
    let from_json = PipelineConfig::load(&json_path).unwrap();
    assert_eq!(from_toml, from_json);
    assert_eq!(from_toml.hash(), from_json.hash());
    let doc = serde_json::to_value(&from_toml).unwrap();
    assert_eq!(violations("pipeline_config.schema.json", &doc), Vec::<String>::new());
    assert!(violations("pipeline_config.schema.json", &serde_json::to_value(PipelineConfig::default()).unwrap()).is_empty());

    let mut bad = from_toml.clone();
    bad.schema_version = 2;
    assert!(matches!(bad.validate(), Err(CliError::Config(_))));
    let mut bad = from_toml.clone();
    bad.fewshot.source_parse_k = 99;
    assert!(matches!(bad.validate(), Err(CliError::Config(_))));
    let mut bad = from_toml.clone();
    bad.checkpoint = Some(dir.path().join("missing.ckpt"));
    assert_eq!(bad.validate().unwrap_err().exit_code(), 2);
    std::fs::write(dir.path().join("typo.toml"), "schema_version = 1\nparalelism = 3\n").unwrap();
    assert!(PipelineConfig::load(&dir.path().join("typo.toml")).is_err());
}

#[test]
fn output_names_follow_the_pattern() {
    assert_eq!(slug("A low steady tone"), "a-low-steady-tone");
    assert_eq!(slug("  ?! "), "source");
    assert!(slug(&"word ".repeat(30)).len() <= 40);
    assert_eq!(output_name("take1", 2, "Dog barking!"), "take1.src2.dog-barking.wav");
}
