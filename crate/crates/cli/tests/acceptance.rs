//! End-to-end acceptance run. Prints one `PASS`/`FAIL` line per criterion
//! and exits non-zero if any fails. The two efficacy criteria train real
//! models at 32x32 and dominate the runtime (a few minutes on one core).

use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use polygan_cli::{commands, RunConfig};
use polygan_core::autodiff::Graph;
use polygan_core::gradcheck::gradient_suite;
use polygan_core::image_io::{png_read_mask, png_read_rgb, png_write, quantize_8bit};
use polygan_core::losses::{discriminator_loss, generator_gan_loss, identity_loss, LossConfig};
use polygan_core::metrics::{masked_ssim, ssim, SsimParams};
use polygan_core::net::{ConditionSet, Generator, GeneratorSpec};
use polygan_core::pipeline::{generator_from_checkpoint, PipelineInputs};
use polygan_core::synth::{composite_stage4, condition_channels, load_split, Split, StageSample};
use polygan_core::train::{to_unit, Checkpoint, ImageBuffer, Trainer, CHECKPOINT_FILE, LOSS_FILE};
use polygan_core::{RngState, Tensor};
use tempfile::TempDir;

// Pinned tolerances and budgets.
const GRAD_TOL: f64 = 1e-5;
const GRAD_INSTANCES: usize = 20;
const GRAD_BUDGET: Duration = Duration::from_secs(120);
const LOSS_TOL: f64 = 1e-9;
const SSIM_SELF_TOL: f64 = 1e-9;
const SSIM_CONST_TOL: f64 = 1e-8;
const SSIM_DIRECT_TOL: f64 = 1e-7;
const SSIM_SEEDS: u64 = 50;
const BUFFER_CALLS: usize = 10_000;
const BUFFER_BAND: (f64, f64) = (0.45, 0.55);
const RESUME_STEPS: u64 = 200;
const RESUME_BUDGET: Duration = Duration::from_secs(600);
const EFFICACY_SIZE: usize = 32;
const EFFICACY_TRAIN: usize = 2000;
const EFFICACY_TEST: usize = 200;
const EFFICACY_STEPS: u64 = 2000;
const EFFICACY_BUDGET: Duration = Duration::from_secs(2 * 3600);
const STAGE1_MIN_GAIN: f64 = 0.15;
const STAGE3_MIN_GAIN: f64 = 0.1;
const PIPELINE_CASES: usize = 20;
const EVAL_PAIRS: usize = 200;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

/// Artifacts shared between criteria.
#[derive(Default)]
struct Shared {
    /// `(stage, checkpoint)` of trained stage models.
    checkpoints: Vec<(u8, PathBuf)>,
    /// Stage-1 generated test images and their targets, same file names.
    stage1_eval: Option<(PathBuf, PathBuf)>,
}

fn config(pairs: &[(&str, String)]) -> RunConfig {
    let sets: Vec<String> = pairs.iter().map(|(k, v)| format!("{k}={v}")).collect();
    RunConfig::load(None, &sets, None).expect("valid acceptance config")
}

fn p(path: &Path) -> String {
    path.display().to_string()
}

// 1 ------------------------------------------------------------------------

fn gradient_suite_check() -> Outcome {
    let start = Instant::now();
    let reports = gradient_suite(GRAD_INSTANCES, 2024).expect("suite runs");
    let elapsed = start.elapsed();
    let names: Vec<&str> = reports.iter().map(|r| r.name).collect();
    let required = [
        "conv2d",
        "conv_transpose2d",
        "instance_norm",
        "relu",
        "leaky_relu",
        "avg_pool",
        "discriminator_loss",
        "generator_gan_loss",
        "identity_loss",
    ];
    let covered = required.iter().all(|r| names.contains(r));
    let counts = reports.iter().all(|r| r.instances == GRAD_INSTANCES);
    let worst = reports.iter().map(|r| (r.name, r.worst)).fold(("", 0.0), |a, b| if b.1 > a.1 { b } else { a });
    outcome(
        covered && counts && worst.1 < GRAD_TOL && elapsed < GRAD_BUDGET,
        format!(
            "{} ops x {GRAD_INSTANCES} instances, worst {} {:.2e} (< {GRAD_TOL:.0e}), {:.1}s",
            reports.len(),
            worst.0,
            worst.1,
            elapsed.as_secs_f64()
        ),
    )
}

// 2 ------------------------------------------------------------------------

fn structural_audit_check() -> Outcome {
    let mut notes = Vec::new();
    let mut ok = true;
    for size in [32usize, 64, 128] {
        let cc = condition_channels(2).unwrap();
        let g = Generator::<f32>::build(GeneratorSpec::for_image(size, cc, 2).unwrap(), &mut RngState::new(size as u64)).unwrap();
        let mut rng = RngState::new(7);
        let conditions = Tensor::from_fn(&[1, cc, size, size], |_| rng.range(-1.0, 1.0) as f32).unwrap();
        let (out, trace) = g.forward_traced(&ConditionSet::new(vec![conditions]).unwrap()).unwrap();

        // Resolutions the encoder actually visited, read off the trace.
        let mut available: Vec<usize> = trace.encoder_features.iter().map(|f| f[1]).collect();
        available.sort_unstable();
        available.dedup();
        let mut expected: Vec<usize> = [4, 8, 16].into_iter().filter(|r| available.contains(r)).collect();
        let mut skips = trace.skip_edges.clone();
        skips.sort_unstable();
        expected.sort_unstable();

        let injections = trace.condition_injections.len() == g.encoder().len()
            && trace.condition_injections.len() == trace.encoder_features.len();
        let shape = out.shape() == [1, 3, size, size];
        let range = out.data().iter().all(|v| (-1.0..=1.0).contains(v));
        ok &= injections && skips == expected && shape && range;
        notes.push(format!(
            "{size}px: {}/{} injections, skips {skips:?}",
            trace.condition_injections.len(),
            g.encoder().len()
        ));
    }
    outcome(ok, notes.join("; "))
}

// 3 ------------------------------------------------------------------------

fn loss_check() -> Outcome {
    let cfg = LossConfig::default();
    let mut g = Graph::<f64>::new();
    let ones = g.constant(Tensor::full(&[3, 1], 1.0).unwrap());
    let zeros = g.constant(Tensor::zeros(&[3, 1]).unwrap());
    let x = g.constant(Tensor::from_fn(&[2, 3, 4, 4], |i| (i as f64 * 0.37).cos()).unwrap());
    let x_shift = g.constant(Tensor::from_fn(&[2, 3, 4, 4], |i| (i as f64 * 0.37).cos() + 0.5).unwrap());

    let zero_points = [
        discriminator_loss(&mut g, ones, zeros, &cfg).unwrap(),
        generator_gan_loss(&mut g, ones, &cfg).unwrap(),
        identity_loss(&mut g, x, x, &cfg).unwrap(),
    ];
    // lambda1 = lambda2 = 0.5, lambda3 = 1, lambda4 = 10.
    let hand = [
        (discriminator_loss(&mut g, zeros, ones, &cfg).unwrap(), 1.0),
        (generator_gan_loss(&mut g, zeros, &cfg).unwrap(), 1.0),
        (identity_loss(&mut g, x_shift, x, &cfg).unwrap(), 5.0),
    ];
    let zp: Vec<f64> = zero_points.iter().map(|&v| g.value(v).data()[0]).collect();
    let hv: Vec<(f64, f64)> = hand.iter().map(|&(v, e)| (g.value(v).data()[0], e)).collect();
    let ok = zp.iter().all(|&v| v == 0.0) && hv.iter().all(|(v, e)| (v - e).abs() < LOSS_TOL);
    outcome(ok, format!("zero points {zp:?}, hand values {:?}", hv.iter().map(|h| h.0).collect::<Vec<_>>()))
}

// 4 ------------------------------------------------------------------------

fn gaussian(window: usize, sigma: f64) -> Vec<f64> {
    let half = (window / 2) as f64;
    let w: Vec<f64> = (0..window).map(|i| (-(i as f64 - half).powi(2) / (2.0 * sigma * sigma)).exp()).collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|v| v / s).collect()
}

/// Mean over channels and over every fully contained window position,
/// evaluated with a full 2-D window sum.
fn ssim_direct(a: &Tensor, b: &Tensor, p: &SsimParams) -> f64 {
    let [c, h, w] = [a.shape()[0], a.shape()[1], a.shape()[2]];
    let k = gaussian(p.window, p.sigma);
    let (c1, c2) = (p.c1(), p.c2());
    let mut total = 0.0;
    let mut n = 0usize;
    for ch in 0..c {
        let at = |t: &Tensor, y: usize, x: usize| t.data()[ch * h * w + y * w + x] as f64;
        for y0 in 0..=h - p.window {
            for x0 in 0..=w - p.window {
                let (mut ma, mut mb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
                for dy in 0..p.window {
                    for dx in 0..p.window {
                        let wt = k[dy] * k[dx];
                        let (va, vb) = (at(a, y0 + dy, x0 + dx), at(b, y0 + dy, x0 + dx));
                        ma += wt * va;
                        mb += wt * vb;
                        saa += wt * va * va;
                        sbb += wt * vb * vb;
                        sab += wt * va * vb;
                    }
                }
                let (va, vb, cov) = (saa - ma * ma, sbb - mb * mb, sab - ma * mb);
                total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
                n += 1;
            }
        }
    }
    total / n as f64
}

fn random_image(seed: u64, lo: f64, hi: f64) -> Tensor {
    let mut rng = RngState::new(seed);
    Tensor::from_fn(&[3, 20, 20], |_| rng.range(lo, hi) as f32).unwrap()
}

fn ssim_check() -> Outcome {
    let p = SsimParams::default();
    let x = random_image(1, 0.0, 1.0);
    let self_sim = ssim(&x, &x, &p).unwrap();
    let zeros = Tensor::zeros(&[3, 16, 16]).unwrap();
    let ones = Tensor::full(&[3, 16, 16], 1.0).unwrap();
    let constant = ssim(&zeros, &ones, &p).unwrap();
    let expected_constant = p.c1() / (1.0 + p.c1());

    let mut direct_err: f64 = 0.0;
    let mut symmetric = true;
    let mut monotone = true;
    for seed in 0..SSIM_SEEDS {
        let a = random_image(100 + seed, 0.2, 0.8);
        let b = random_image(10_000 + seed, 0.2, 0.8);
        let ab = ssim(&a, &b, &p).unwrap();
        symmetric &= ab == ssim(&b, &a, &p).unwrap();
        if seed < 5 {
            direct_err = direct_err.max((ab - ssim_direct(&a, &b, &p)).abs());
        }
        let noise = random_image(20_000 + seed, 0.0, 1.0);
        let mut last = f64::INFINITY;
        for t in [0.0f32, 0.25, 0.5, 1.0] {
            let degraded = a.zip_map(&noise, "degrade", |v, n| (1.0 - t) * v + t * n).unwrap();
            let s = ssim(&a, &degraded, &p).unwrap();
            monotone &= s <= last;
            last = s;
        }
    }
    let ok = (self_sim - 1.0).abs() <= SSIM_SELF_TOL
        && (constant - expected_constant).abs() <= SSIM_CONST_TOL
        && direct_err <= SSIM_DIRECT_TOL
        && symmetric
        && monotone;
    outcome(
        ok,
        format!(
            "ssim(x,x)={self_sim}, ssim(0,1)={constant:.6e} (C1/(1+C1)={expected_constant:.6e}), direct-window err {direct_err:.1e}, symmetric={symmetric}, monotone={monotone} over {SSIM_SEEDS} seeds"
        ),
    )
}

// 5 ------------------------------------------------------------------------

fn buffer_check() -> Outcome {
    let mut buf = ImageBuffer::<f32>::new(ImageBuffer::<f32>::DEFAULT_CAPACITY, RngState::new(99));
    let mut next = 0.0f32;
    let mut image = || {
        next += 1.0;
        Tensor::full(&[1, 3, 2, 2], next).unwrap()
    };
    let mut bounded = true;
    for _ in 0..buf.capacity() {
        buf.query(image());
        bounded &= buf.len() <= buf.capacity();
    }
    let mut stored = 0usize;
    for _ in 0..BUFFER_CALLS {
        let incoming = image();
        let tag = incoming.data()[0];
        let draw = buf.query(incoming);
        // A stored draw hands back an older image, never the incoming one.
        if draw.is_stored() {
            stored += 1;
            bounded &= draw.image().data()[0] < tag;
        } else {
            bounded &= draw.image().data()[0] == tag;
        }
        bounded &= buf.len() <= buf.capacity();
    }
    let frac = stored as f64 / BUFFER_CALLS as f64;
    outcome(
        (BUFFER_BAND.0..=BUFFER_BAND.1).contains(&frac) && bounded,
        format!("stored fraction {frac:.4} over {BUFFER_CALLS} calls, capacity respected: {bounded}"),
    )
}

// 6 ------------------------------------------------------------------------

fn desk_scale(stage: u8, data: &Path, out: &Path, extra: &[(&str, String)]) -> RunConfig {
    let mut pairs = vec![
        ("stage", stage.to_string()),
        ("image_size", EFFICACY_SIZE.to_string()),
        ("data_dir", p(data)),
        ("out_dir", p(out)),
        ("base_width", "16".into()),
        ("disc_width", "16".into()),
        ("disc_hidden", "1024".into()),
    ];
    pairs.extend(extra.iter().cloned());
    config(&pairs)
}

fn resume_check(root: &Path) -> Outcome {
    let start = Instant::now();
    let data = root.join("resume_data");
    commands::gen_data(&config(&[
        ("stage", "1".into()),
        ("seed", "5".into()),
        ("image_size", EFFICACY_SIZE.to_string()),
        ("train_count", RESUME_STEPS.to_string()),
        ("test_count", "1".into()),
        ("out_dir", p(&data)),
    ]))
    .unwrap();
    let run = |name: &str, steps: u64, resume: bool| {
        let out = root.join(name);
        let cfg = desk_scale(1, &data, &out, &[("max_steps", steps.to_string()), ("seed", "3".into())]);
        commands::train(&cfg, resume).unwrap();
        out
    };
    let a = run("resume_a", RESUME_STEPS, false);
    let b = run("resume_b", RESUME_STEPS, false);
    run("resume_c", RESUME_STEPS / 2, false);
    let c = run("resume_c", RESUME_STEPS, true);
    let elapsed = start.elapsed();
    let same = |x: &Path, y: &Path, f: &str| fs::read(x.join(f)).unwrap() == fs::read(y.join(f)).unwrap();
    let deterministic = same(&a, &b, LOSS_FILE) && same(&a, &b, CHECKPOINT_FILE);
    let resumed = same(&a, &c, LOSS_FILE) && same(&a, &c, CHECKPOINT_FILE);
    let rows = fs::read_to_string(a.join(LOSS_FILE)).unwrap().lines().count() - 1;
    outcome(
        deterministic && resumed && rows as u64 == RESUME_STEPS && elapsed < RESUME_BUDGET,
        format!(
            "{rows} steps: repeat identical={deterministic}, {}+{} resume identical={resumed}, {:.1}s",
            RESUME_STEPS / 2,
            RESUME_STEPS / 2,
            elapsed.as_secs_f64()
        ),
    )
}

// 7, 8 ---------------------------------------------------------------------

fn efficacy_data(root: &Path, stage: u8) -> PathBuf {
    let data = root.join(format!("stage{stage}_data"));
    commands::gen_data(&config(&[
        ("stage", stage.to_string()),
        ("seed", "1".into()),
        ("image_size", EFFICACY_SIZE.to_string()),
        ("train_count", EFFICACY_TRAIN.to_string()),
        ("test_count", EFFICACY_TEST.to_string()),
        ("out_dir", p(&data)),
    ]))
    .unwrap();
    data
}

fn efficacy_config(stage: u8, data: &Path, out: &Path) -> RunConfig {
    desk_scale(stage, data, out, &[("max_steps", EFFICACY_STEPS.to_string())])
}

/// Generator output for a dataset sample, as it would be written to PNG.
fn generate(g: &Generator, s: &StageSample) -> Tensor {
    let pair = s.train_pair().unwrap();
    let out = g.forward(&ConditionSet::new(vec![pair.conditions]).unwrap()).unwrap();
    quantize_8bit(&to_unit(&out.index_first(0).unwrap()))
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = v.collect();
    v.iter().sum::<f64>() / v.len() as f64
}

fn train_stage(root: &Path, stage: u8, shared: &mut Shared) -> (PathBuf, Generator, Generator, Duration) {
    let data = efficacy_data(root, stage);
    let out = root.join(format!("stage{stage}_run"));
    let cfg = efficacy_config(stage, &data, &out);
    let untrained = Trainer::new(cfg.train_config(), condition_channels(stage).unwrap()).unwrap().generator;
    let start = Instant::now();
    let outcome = commands::train(&cfg, false).unwrap();
    let elapsed = start.elapsed();
    assert_eq!(outcome.trainer.step, EFFICACY_STEPS);
    shared.checkpoints.push((stage, outcome.checkpoint.clone()));
    (data, untrained, outcome.trainer.generator, elapsed)
}

fn stage1_check(root: &Path, shared: &mut Shared) -> Outcome {
    let (data, untrained, trained, elapsed) = train_stage(root, 1, shared);
    let test = load_split(&data, 1, Split::Test).unwrap();
    let p = SsimParams::default();
    let (gen_dir, tgt_dir) = (root.join("stage1_generated"), root.join("stage1_targets"));
    fs::create_dir_all(&gen_dir).unwrap();
    fs::create_dir_all(&tgt_dir).unwrap();
    for s in &test {
        png_write(&gen_dir.join(format!("{}.png", s.seed)), &generate(&trained, s)).unwrap();
        png_write(&tgt_dir.join(format!("{}.png", s.seed)), &s.target).unwrap();
    }
    let report = commands::eval(&config(&[]), &gen_dir, &tgt_dir).unwrap();
    shared.stage1_eval = Some((gen_dir, tgt_dir));
    let base = mean(test.iter().map(|s| ssim(&generate(&untrained, s), &s.target, &p).unwrap()));
    let copy = mean(test.iter().map(|s| ssim(s.condition("garment").unwrap(), &s.target, &p).unwrap()));
    let trained_ssim = report.mean;
    outcome(
        trained_ssim >= base + STAGE1_MIN_GAIN && trained_ssim > copy && elapsed < EFFICACY_BUDGET,
        format!(
            "test SSIM {trained_ssim:.4} vs untrained {base:.4} (need +{STAGE1_MIN_GAIN}) and copy-input {copy:.4}; {} samples, {EFFICACY_STEPS} steps in {:.0}s",
            test.len(),
            elapsed.as_secs_f64()
        ),
    )
}

fn stage3_check(root: &Path, shared: &mut Shared) -> Outcome {
    let (data, _, trained, elapsed) = train_stage(root, 3, shared);
    let test = load_split(&data, 3, Split::Test).unwrap();
    let p = SsimParams::default();
    let mut filled = Vec::new();
    let mut black = Vec::new();
    for s in &test {
        let m = s.mask("hole_mask").unwrap();
        let holed = s.condition("holed").unwrap();
        let g = generate(&trained, s);
        let plane = m.len();
        let comp = Tensor::from_fn(g.shape(), |i| {
            let mi = m.data()[i % plane];
            mi * g.data()[i] + (1.0 - mi) * holed.data()[i]
        })
        .unwrap();
        filled.push(masked_ssim(&comp, &s.target, m, &p).unwrap());
        black.push(masked_ssim(holed, &s.target, m, &p).unwrap());
    }
    let (f, b) = (mean(filled.into_iter()), mean(black.into_iter()));
    outcome(
        f - b >= STAGE3_MIN_GAIN && elapsed < EFFICACY_BUDGET,
        format!(
            "hole-masked SSIM {f:.4} vs holes-left-black {b:.4} (gain {:.4}, need {STAGE3_MIN_GAIN}); {EFFICACY_STEPS} steps in {:.0}s",
            f - b,
            elapsed.as_secs_f64()
        ),
    )
}

// 9 ------------------------------------------------------------------------

fn pipeline_check(root: &Path, shared: &mut Shared) -> Outcome {
    // Stage 2 gets the same budget as the stages measured above.
    train_stage(root, 2, shared);
    let ckpt = |stage: u8| shared.checkpoints.iter().find(|(s, _)| *s == stage).map(|(_, p)| p.clone()).unwrap();
    let ckpts = [ckpt(1), ckpt(2), ckpt(3)];
    for (i, c) in ckpts.iter().enumerate() {
        let loaded = Checkpoint::load(c, Default::default()).unwrap();
        generator_from_checkpoint(&loaded, i as u8 + 1).unwrap();
    }

    let cases = root.join("pipeline_cases");
    commands::gen_data(&config(&[
        ("stage", "4".into()),
        ("seed", "77".into()),
        ("image_size", EFFICACY_SIZE.to_string()),
        ("test_count", PIPELINE_CASES.to_string()),
        ("out_dir", p(&cases)),
    ]))
    .unwrap();
    let mut dirs: Vec<PathBuf> = fs::read_dir(&cases).unwrap().map(|e| e.unwrap().path()).collect();
    dirs.sort();

    let (mut in_range, mut exact, mut diff_pixels) = (true, true, 0.0f64);
    for (i, dir) in dirs.iter().enumerate() {
        let out = root.join(format!("pipeline_out_{i}"));
        let cfg = config(&[("out_dir", p(&out)), ("tau_diff", "0.06".into())]);
        let result = commands::pipeline(&cfg, [&ckpts[0], &ckpts[1], &ckpts[2]], dir).unwrap();
        for t in [&result.stage1, &result.stage2, &result.stage3, &result.final_image, &result.diff_mask] {
            in_range &= t.data().iter().all(|v| (0.0..=1.0).contains(v));
        }
        diff_pixels += result.diff_mask.sum() as f64;

        // Recompute the final composite from the files alone.
        let read = |f: &str| png_read_rgb(&out.join(f)).unwrap();
        let inputs = PipelineInputs::read_dir(dir).unwrap();
        let diff = png_read_mask(&out.join("diff_mask.png")).unwrap();
        let expected = composite_stage4(&read("stage2.png"), &read("stage3.png"), &diff, &inputs.head, &inputs.head_mask).unwrap();
        exact &= read("final.png") == expected;
    }
    outcome(
        dirs.len() == PIPELINE_CASES && in_range && exact,
        format!(
            "{} cases: outputs in [0,1]={in_range}, final == composite(stage2, stage3, diff, head)={exact}, mean difference-mask pixels {:.1}",
            dirs.len(),
            diff_pixels / dirs.len().max(1) as f64
        ),
    )
}

// 10 -----------------------------------------------------------------------

fn eval_protocol_check(root: &Path, shared: &Shared) -> Outcome {
    let (gen_dir, tgt_dir) = shared.stage1_eval.clone().expect("stage-1 outputs from criterion 7");
    let out = root.join("eval_report");
    let report = commands::eval(&config(&[("out_dir", p(&out))]), &gen_dir, &tgt_dir).unwrap();
    let csv = fs::read_to_string(out.join(commands::EVAL_FILE)).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    let rows = lines.iter().filter(|l| l.ends_with(".png") || l.contains(".png,")).count();
    let mean_line = lines.last().is_some_and(|l| l.starts_with("mean,"));
    let again = commands::eval(&config(&[]), &gen_dir, &tgt_dir).unwrap();
    outcome(
        report.count() == EVAL_PAIRS && rows == EVAL_PAIRS && lines.len() == EVAL_PAIRS + 2 && mean_line && again.to_csv() == csv,
        format!("{rows} rows + mean ({}), header {:?}, stable={}", lines.last().unwrap_or(&""), lines.first().unwrap_or(&""), again.to_csv() == csv),
    )
}

fn main() -> ExitCode {
    let tmp = TempDir::new().expect("temp dir");
    let root = tmp.path();
    let mut shared = Shared::default();
    let criteria: Vec<(&str, Box<dyn FnMut(&mut Shared) -> Outcome + '_>)> = vec![
        ("1 gradient suite", Box::new(|_: &mut Shared| gradient_suite_check())),
        ("2 structural audits", Box::new(|_: &mut Shared| structural_audit_check())),
        ("3 loss zero points", Box::new(|_: &mut Shared| loss_check())),
        ("4 SSIM oracle", Box::new(|_: &mut Shared| ssim_check())),
        ("5 image buffer statistics", Box::new(|_: &mut Shared| buffer_check())),
        ("6 determinism and resume", Box::new(|_: &mut Shared| resume_check(root))),
        ("7 stage-1 training efficacy", Box::new(|s: &mut Shared| stage1_check(root, s))),
        ("8 stage-3 inpainting efficacy", Box::new(|s: &mut Shared| stage3_check(root, s))),
        ("9 pipeline integrity", Box::new(|s: &mut Shared| pipeline_check(root, s))),
        ("10 evaluation protocol", Box::new(|s: &mut Shared| eval_protocol_check(root, s))),
    ];
    let mut failed = 0;
    for (name, mut check) in criteria {
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(|| check(&mut shared))).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            outcome(false, format!("panicked: {msg}"))
        });
        if !result.passed {
            failed += 1;
        }
        println!(
            "{} criterion {name}: {} [{:.1}s]",
            if result.passed { "PASS" } else { "FAIL" },
            result.detail,
            start.elapsed().as_secs_f64()
        );
    }
    println!("acceptance: {} passed, {failed} failed", 10 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
