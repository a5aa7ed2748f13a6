use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use polygan_core::image_io::{png_read, png_read_mask, png_read_rgb, png_write};
use polygan_core::metrics::{ssim, SsimParams};
use polygan_core::pipeline::{PipelineInputs, OUTPUT_FILES};
use polygan_core::synth::{
    condition_channels, load_split, stage1_from_scene, Manifest, PoseParams, Scene, Split, HOLE_FRACTION, MANIFEST_FILE,
};
use polygan_core::train::{train_to_dir, Checkpoint, TrainConfig, TrainPair, Trainer, CHECKPOINT_FILE, LOSS_CSV_HEADER, LOSS_FILE};
use polygan_core::{RngState, Tensor};
use tempfile::TempDir;

fn polygan(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_polygan"));
    cmd.args(args).env_remove("PGAN_SEED").env("RUST_LOG", "warn");
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn sets(pairs: &[(&str, String)]) -> Vec<String> {
    pairs.iter().flat_map(|(k, v)| ["--set".to_string(), format!("{k}={v}")]).collect()
}

fn run_ok(sub: &[&str], pairs: &[(&str, String)]) -> Output {
    run_env(sub, pairs, &[], 0)
}

fn run_env(sub: &[&str], pairs: &[(&str, String)], env: &[(&str, &str)], code: i32) -> Output {
    let args: Vec<String> = sets(pairs).into_iter().chain(sub.iter().map(|s| s.to_string())).collect();
    let refs: Vec<&str> = args.iter().map(String::as_str).collect();
    let out = polygan(&refs, env);
    assert_eq!(
        out.status.code(),
        Some(code),
        "polygan {args:?}\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn p(path: &Path) -> String {
    path.display().to_string()
}

fn gen_stage(stage: u8, dir: &Path, seed: u64, train: usize, test: usize) {
    run_ok(
        &["gen-data"],
        &[
            ("stage", stage.to_string()),
            ("seed", seed.to_string()),
            ("image_size", "32".into()),
            ("train_count", train.to_string()),
            ("test_count", test.to_string()),
            ("out_dir", p(dir)),
        ],
    );
}

fn small_train(stage: u8, data: &Path, out: &Path) -> Vec<(&'static str, String)> {
    vec![
        ("stage", stage.to_string()),
        ("image_size", "32".into()),
        ("data_dir", p(data)),
        ("out_dir", p(out)),
        ("base_width", "4".into()),
        ("disc_width", "4".into()),
        ("disc_hidden", "16".into()),
    ]
}

#[test]
fn gen_data_is_deterministic_and_counted() {
    let tmp = TempDir::new().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    gen_stage(1, &a, 7, 6, 3);
    gen_stage(1, &b, 7, 6, 3);
    let ma = fs::read(a.join(MANIFEST_FILE)).unwrap();
    assert_eq!(ma, fs::read(b.join(MANIFEST_FILE)).unwrap());
    let m = Manifest::read(&a).unwrap();
    assert_eq!(m.count(Split::Train), 6);
    assert_eq!(m.count(Split::Test), 3);
    for row in &m.rows {
        assert_eq!(fs::read(a.join(&row.file)).unwrap(), fs::read(b.join(&row.file)).unwrap(), "{}", row.file);
    }
}

#[test]
fn stage3_dataset_passes_hole_audit() {
    let tmp = TempDir::new().unwrap();
    gen_stage(3, tmp.path(), 2, 30, 10);
    for split in [Split::Train, Split::Test] {
        for s in load_split(tmp.path(), 3, split).unwrap() {
            let holes = s.mask("hole_mask").unwrap();
            let sil = s.mask("silhouette").unwrap();
            let f = holes.sum() as f64 / sil.sum() as f64;
            assert!((HOLE_FRACTION.0..=HOLE_FRACTION.1).contains(&f), "seed {}: {f}", s.seed);
            let holed = s.condition("holed").unwrap();
            let plane = holes.len();
            for i in 0..plane {
                if holes.data()[i] > 0.5 {
                    assert!(sil.data()[i] > 0.5, "hole outside the silhouette");
                    assert!((0..3).all(|c| holed.data()[c * plane + i] == 0.0));
                }
            }
        }
    }
}

#[test]
fn validation_failures_exit_1() {
    let tmp = TempDir::new().unwrap();
    let out = p(tmp.path());
    for bad in [
        vec![("stage", "1".to_string()), ("out_dir", out.clone()), ("colour", "red".into())],
        vec![("stage", "1".into()), ("out_dir", out.clone()), ("lambda2", "-0.5".into())],
        vec![("stage", "1".into()), ("out_dir", out.clone()), ("image_size", "48".into())],
        vec![("out_dir", out.clone())],
        vec![("stage", "1".into())],
    ] {
        let o = run_env(&["gen-data"], &bad, &[], 1);
        assert!(String::from_utf8_lossy(&o.stderr).contains("error:"));
    }
    let cfg = tmp.path().join("run.cfg");
    fs::write(&cfg, "# comment\nstage = 1\nunknown_key = 3\n").unwrap();
    let o = polygan(&["--config", cfg.to_str().unwrap(), "gen-data"], &[]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn missing_dataset_exits_2() {
    let tmp = TempDir::new().unwrap();
    run_env(&["train"], &small_train(1, &tmp.path().join("nowhere"), &tmp.path().join("run")), &[], 2);
}

#[test]
fn diverging_training_exits_3() {
    let tmp = TempDir::new().unwrap();
    let data = tmp.path().join("data");
    gen_stage(1, &data, 1, 4, 1);
    let mut cfg = small_train(1, &data, &tmp.path().join("run"));
    cfg.extend([("lr", "1e30".to_string()), ("epochs", "5".into())]);
    let o = run_env(&["train"], &cfg, &[], 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("error:"));
}

#[test]
fn zero_epochs_emit_initial_checkpoint() {
    let tmp = TempDir::new().unwrap();
    let data = tmp.path().join("data");
    gen_stage(2, &data, 3, 2, 1);
    let run = tmp.path().join("run");
    let mut cfg = small_train(2, &data, &run);
    cfg.push(("epochs", "0".into()));
    run_ok(&["train"], &cfg);
    let csv = fs::read_to_string(run.join(LOSS_FILE)).unwrap();
    assert_eq!(csv, format!("{LOSS_CSV_HEADER}\n"));
    let ckpt = Checkpoint::load(&run.join(CHECKPOINT_FILE), Default::default()).unwrap();
    assert_eq!(ckpt.step, 0);
    assert_eq!(ckpt.echo("lr"), Some("0.0002"));
    assert_eq!(ckpt.echo("beta1"), Some("0.5"));
    assert_eq!(ckpt.echo("beta2"), Some("0.999"));
    assert_eq!(ckpt.echo("batch_size"), Some("1"));
    assert_eq!(ckpt.echo("stage"), Some("2"));
}

#[test]
fn resume_reproduces_uninterrupted_run() {
    let tmp = TempDir::new().unwrap();
    let data = tmp.path().join("data");
    gen_stage(1, &data, 4, 6, 1);
    let (full, split) = (tmp.path().join("full"), tmp.path().join("split"));
    let with = |out: &Path, steps: &str| {
        let mut c = small_train(1, &data, out);
        c.extend([("epochs", "3".to_string()), ("max_steps", steps.to_string())]);
        c
    };
    run_ok(&["train"], &with(&full, "14"));
    run_ok(&["train"], &with(&split, "5"));
    let partial = fs::read_to_string(split.join(LOSS_FILE)).unwrap();
    assert_eq!(partial.lines().count(), 6);
    run_ok(&["train", "--resume"], &with(&split, "14"));
    for f in [LOSS_FILE, CHECKPOINT_FILE] {
        assert_eq!(fs::read(full.join(f)).unwrap(), fs::read(split.join(f)).unwrap(), "{f} differs");
    }
    assert_eq!(fs::read_to_string(full.join(LOSS_FILE)).unwrap().lines().count(), 15);
}

#[test]
fn resume_rejects_a_different_stage() {
    let tmp = TempDir::new().unwrap();
    let data1 = tmp.path().join("d1");
    let data2 = tmp.path().join("d2");
    gen_stage(1, &data1, 1, 2, 1);
    gen_stage(2, &data2, 1, 2, 1);
    let run = tmp.path().join("run");
    let mut c = small_train(1, &data1, &run);
    c.push(("epochs", "0".into()));
    run_ok(&["train"], &c);
    let mut c = small_train(2, &data2, &run);
    c.push(("epochs", "0".into()));
    run_env(&["train", "--resume"], &c, &[], 1);
}

#[test]
fn seed_env_sits_between_file_and_overrides() {
    let tmp = TempDir::new().unwrap();
    let data = tmp.path().join("data");
    gen_stage(1, &data, 1, 2, 1);
    let seed_of = |env: &[(&str, &str)], extra: Option<&str>| {
        let run = tmp.path().join(format!("run{}", extra.unwrap_or("-")));
        let mut c = small_train(1, &data, &run);
        c.push(("epochs", "0".into()));
        if let Some(s) = extra {
            c.push(("seed", s.into()));
        }
        let cfg = tmp.path().join("seed.cfg");
        fs::write(&cfg, "seed = 11\n").unwrap();
        let mut args = vec!["--config".to_string(), p(&cfg)];
        args.extend(sets(&c));
        args.push("train".into());
        let refs: Vec<&str> = args.iter().map(String::as_str).collect();
        assert_eq!(polygan(&refs, env).status.code(), Some(0));
        let ckpt = Checkpoint::load(&run.join(CHECKPOINT_FILE), Default::default()).unwrap();
        ckpt.echo("seed").unwrap().to_string()
    };
    assert_eq!(seed_of(&[], None), "11");
    assert_eq!(seed_of(&[("PGAN_SEED", "5")], None), "5");
    assert_eq!(seed_of(&[("PGAN_SEED", "5")], Some("6")), "6");
}

fn write_images(dir: &Path, n: usize, seed: u64) {
    fs::create_dir_all(dir).unwrap();
    let mut rng = RngState::new(seed);
    for i in 0..n {
        let t = Tensor::from_fn(&[3, 16, 16], |_| rng.uniform() as f32).unwrap();
        png_write(&dir.join(format!("img_{i:03}.png")), &t).unwrap();
    }
}

#[test]
fn eval_identical_dirs_is_one_and_stable() {
    let tmp = TempDir::new().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    write_images(&a, 7, 1);
    write_images(&b, 7, 1);
    let report = tmp.path().join("report");
    let args = ["eval", "--generated", a.to_str().unwrap(), "--target", b.to_str().unwrap()];
    let first = run_ok(&args, &[("out_dir", p(&report))]);
    let csv = String::from_utf8(first.stdout.clone()).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "file,ssim");
    assert_eq!(lines.len(), 1 + 7 + 1);
    assert_eq!(*lines.last().unwrap(), "mean,1.00000000");
    assert_eq!(fs::read_to_string(report.join("ssim.csv")).unwrap(), csv);
    let second = run_ok(&args, &[]);
    assert_eq!(first.stdout, second.stdout);
}

#[test]
fn eval_reports_unpaired_files() {
    let tmp = TempDir::new().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    write_images(&a, 3, 1);
    write_images(&b, 2, 1);
    let o = run_env(&["eval", "--generated", a.to_str().unwrap(), "--target", b.to_str().unwrap()], &[], &[], 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("img_002.png"));
}

/// Untrained stage model with a small generator.
fn stage_checkpoint(dir: &Path, stage: u8) -> PathBuf {
    let cfg = TrainConfig {
        image_size: 32,
        base_width: 4,
        disc_width: 4,
        disc_hidden: 8,
        ..TrainConfig::default()
    };
    let mut ckpt = Trainer::new(cfg, condition_channels(stage).unwrap()).unwrap().checkpoint();
    ckpt.config_echo.push(("stage".into(), stage.to_string()));
    let path = dir.join(format!("stage{stage}.pgan"));
    ckpt.save(&path).unwrap();
    path
}

/// Bit depth and colour type from the IHDR chunk.
fn png_format(path: &Path) -> (u8, u8) {
    let bytes = fs::read(path).unwrap();
    assert_eq!(&bytes[..8], b"\x89PNG\r\n\x1a\n");
    assert_eq!(&bytes[12..16], b"IHDR");
    (bytes[24], bytes[25])
}

fn run_pipeline(ckpts: &[PathBuf], inputs: &Path, out: &Path) {
    run_ok(
        &[
            "pipeline",
            "--stage1",
            ckpts[0].to_str().unwrap(),
            "--stage2",
            ckpts[1].to_str().unwrap(),
            "--stage3",
            ckpts[2].to_str().unwrap(),
            "--inputs",
            inputs.to_str().unwrap(),
        ],
        &[("out_dir", p(out))],
    );
}

#[test]
fn pipeline_writes_all_stages_as_rgb_pngs() {
    let tmp = TempDir::new().unwrap();
    let ckpts: Vec<PathBuf> = (1..=3).map(|s| stage_checkpoint(tmp.path(), s)).collect();
    let cases = tmp.path().join("cases");
    run_ok(
        &["gen-data"],
        &[("stage", "4".into()), ("image_size", "32".into()), ("test_count", "2".into()), ("out_dir", p(&cases))],
    );
    let mut dirs: Vec<PathBuf> = fs::read_dir(&cases).unwrap().map(|e| e.unwrap().path()).collect();
    dirs.sort();
    assert_eq!(dirs.len(), 2);
    let out = tmp.path().join("out");
    run_pipeline(&ckpts, &dirs[0], &out);
    for f in OUTPUT_FILES {
        assert_eq!(png_format(&out.join(f)), (8, 2), "{f}");
        let t = png_read(&out.join(f)).unwrap();
        assert_eq!(t.shape(), &[3, 32, 32]);
    }
    let first: Vec<Vec<u8>> = OUTPUT_FILES.iter().map(|f| fs::read(out.join(f)).unwrap()).collect();
    run_pipeline(&ckpts, &dirs[0], &out);
    let again: Vec<Vec<u8>> = OUTPUT_FILES.iter().map(|f| fs::read(out.join(f)).unwrap()).collect();
    assert_eq!(first, again);

    // A stage-2 model in the stage-1 slot is refused.
    let o = polygan(
        &[
            "--set",
            &format!("out_dir={}", p(&out)),
            "pipeline",
            "--stage1",
            ckpts[1].to_str().unwrap(),
            "--stage2",
            ckpts[1].to_str().unwrap(),
            "--stage3",
            ckpts[2].to_str().unwrap(),
            "--inputs",
            dirs[0].to_str().unwrap(),
        ],
        &[],
    );
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn empty_difference_mask_keeps_stage2_body() {
    let tmp = TempDir::new().unwrap();
    let ckpts: Vec<PathBuf> = (1..=3).map(|s| stage_checkpoint(tmp.path(), s)).collect();
    let case = polygan_core::synth::pipeline_case(9, 32).unwrap();
    let mut inputs = PipelineInputs::from(&case);
    inputs.silhouette = Tensor::zeros(&[1, 32, 32]).unwrap();
    let dir = tmp.path().join("inputs");
    inputs.write_dir(&dir).unwrap();
    let out = tmp.path().join("out");
    run_pipeline(&ckpts, &dir, &out);
    let diff = png_read_mask(&out.join("diff_mask.png")).unwrap();
    assert_eq!(diff.sum(), 0.0);
    let stage2 = png_read_rgb(&out.join("stage2.png")).unwrap();
    let fin = png_read_rgb(&out.join("final.png")).unwrap();
    let hm = &case.head_mask;
    let plane = hm.len();
    let body_pixels = (0..plane).filter(|&i| hm.data()[i] == 0.0).count();
    assert!(body_pixels > plane / 2);
    for i in 0..fin.len() {
        if hm.data()[i % plane] == 0.0 {
            assert_eq!(fin.data()[i], stage2.data()[i], "pixel {i}");
        }
    }
}

#[test]
fn selfcheck_subcommand_passes() {
    let o = polygan(&["selfcheck"], &[]);
    let text = String::from_utf8_lossy(&o.stdout);
    assert_eq!(o.status.code(), Some(0), "{text}");
    assert!(!text.contains("FAIL"));
    assert!(text.lines().filter(|l| l.starts_with("PASS")).count() >= 10);
}

/// Stage 1 trained only on canonical poses has to learn to pass the garment
/// through; the pipeline's stage-1 output should then reproduce it.
#[test]
fn identity_smoke() {
    let size = 32;
    let canonical = |seed: u64| {
        let mut scene = Scene::random(&mut RngState::new(seed));
        scene.pose = PoseParams::CANONICAL;
        scene
    };
    let data: Vec<TrainPair> = (0..500)
        .map(|i| stage1_from_scene(&canonical(i), i, size).unwrap().train_pair().unwrap())
        .collect();
    let cfg = TrainConfig {
        image_size: size,
        epochs: 10,
        max_steps: 5000,
        ..TrainConfig::default()
    };
    let tmp = TempDir::new().unwrap();
    let run = tmp.path().join("stage1");
    let outcome = train_to_dir(cfg, condition_channels(1).unwrap(), &data, &run, None, &[("stage".into(), "1".into())]).unwrap();
    assert_eq!(outcome.trainer.step, 5000);
    let ckpts = vec![
        outcome.checkpoint,
        stage_checkpoint(tmp.path(), 2),
        stage_checkpoint(tmp.path(), 3),
    ];

    let params = SsimParams::default();
    let mut scores = Vec::new();
    for seed in 100_000..100_005 {
        let scene = canonical(seed);
        let im = scene.render(size).unwrap();
        let inputs = PipelineInputs {
            skeleton: im.skeleton,
            garment: im.garment.clone(),
            body: im.blanked,
            silhouette: im.silhouette,
            head: im.head,
            head_mask: im.head_mask,
        };
        let dir = tmp.path().join(format!("in{seed}"));
        inputs.write_dir(&dir).unwrap();
        let out = tmp.path().join(format!("out{seed}"));
        run_pipeline(&ckpts, &dir, &out);
        let stage1 = png_read_rgb(&out.join("stage1.png")).unwrap();
        let reference = png_read_rgb(&dir.join("garment.png")).unwrap();
        scores.push(ssim(&stage1, &reference, &params).unwrap());
    }
    let mean = scores.iter().sum::<f64>() / scores.len() as f64;
    println!("identity smoke SSIM per case {scores:.4?}, mean {mean:.4}");
    assert!(mean > 0.9, "identity smoke mean SSIM {mean:.4} <= 0.9 ({scores:?})");
}
