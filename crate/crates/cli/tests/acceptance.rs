//! Acceptance suite. Each test prints one `[PASS]` or `[FAIL]` line straight
//! to stdout (visible without `--nocapture`) and then asserts.
//!
//! The heavy tests share one lock so that timings are not inflated by
//! concurrently running tests on small machines.

use std::io::Write as _;
use std::path::PathBuf;
use std::sync::Mutex;
use std::time::Instant;

use rand::Rng as _;
use rand_distr_free::normal;

use fencenet::dataset::{
    normalize_window, prepare_samples, stride_window_count, window_offsets, Dataset, Joint,
    Point, Preprocessing, SamplingConfig, SynthConfig, NUM_JOINTS,
};
use fencenet::evaluation::{run_cv_pi, Experiment, Variant};
use fencenet::models::{presets, Direction, Model, ModelConfig};
use fencenet::rng::{rng_from_seed, Rng};
use fencenet::tcn::{Mode, TcnBlock, TcnBlockConfig};
use fencenet::tensor::{Padding, ParamStore, Tape, Tensor, Var};
use fencenet::training::{TrainConfig, Trainer};
use fencenet_cli::cmd_synth;

static HEAVY: Mutex<()> = Mutex::new(());

fn heavy() -> std::sync::MutexGuard<'static, ()> {
    HEAVY.lock().unwrap_or_else(|e| e.into_inner())
}

fn verdict(criterion: &str, pass: bool, detail: &str) {
    let tag = if pass { "PASS" } else { "FAIL" };
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "[{tag}] {criterion}: {detail}");
    let _ = out.flush();
    assert!(pass, "{criterion}: {detail}");
}

/// Box-Muller normal draws without an extra dependency.
mod rand_distr_free {
    use rand::Rng as _;

    pub fn normal(rng: &mut fencenet::rng::Rng) -> f64 {
        let u1: f64 = rng.random_range(f64::EPSILON..1.0);
        let u2: f64 = rng.random();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }
}

fn random_tensor(shape: &[usize], rng: &mut Rng) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| normal(rng))
}

/// Values in `±[0.1, 1]`, away from the ReLU kink.
fn off_kink(shape: &[usize], rng: &mut Rng) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| {
        let m = rng.random_range(0.1..1.0);
        if rng.random_bool(0.5) { m } else { -m }
    })
}

// ---------------------------------------------------------------- gradients

const FD_EPS: f64 = 1e-4;

fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

/// Reduce any output to a scalar with fixed random weights.
fn scalarize<'a>(tape: &mut Tape<'a, f64>, out: Var) -> Var {
    let shape = tape.value(out).shape().to_vec();
    if shape.is_empty() {
        return out;
    }
    let mut rng = rng_from_seed(shape.iter().product::<usize>() as u64);
    let r = tape.input(random_tensor(&shape, &mut rng));
    let prod = tape.mul(out, r).expect("same shape");
    tape.sum(prod)
}

type Graph = dyn for<'a> Fn(&mut Tape<'a, f64>, &[Var]) -> fencenet::Result<Var>;

/// Max relative error between reverse-mode and central-difference gradients
/// with respect to every element of every leaf.
fn check_leaves(leaves: &[Tensor<f64>], graph: &Graph) -> f64 {
    let loss = |ts: &[Tensor<f64>]| {
        let mut tape = Tape::new();
        let vars: Vec<Var> = ts.iter().map(|t| tape.leaf(t)).collect();
        let out = graph(&mut tape, &vars).expect("graph builds");
        let l = scalarize(&mut tape, out);
        tape.value(l).data()[0]
    };
    let leaves: Vec<Tensor<f64>> = leaves.iter().map(|t| t.clone().with_requires_grad(true)).collect();
    let analytic: Vec<Tensor<f64>> = {
        let mut tape = Tape::new();
        let vars: Vec<Var> = leaves.iter().map(|t| tape.leaf(t)).collect();
        let out = graph(&mut tape, &vars).expect("graph builds");
        let l = scalarize(&mut tape, out);
        let grads = tape.backward(l).expect("scalar loss");
        vars.iter().map(|&v| grads.wrt(v)).collect()
    };
    let mut worst: f64 = 0.0;
    for (i, leaf) in leaves.iter().enumerate() {
        for j in 0..leaf.numel() {
            let mut plus = leaves.clone();
            plus[i].data_mut()[j] += FD_EPS;
            let mut minus = leaves.clone();
            minus[i].data_mut()[j] -= FD_EPS;
            let numeric = (loss(&plus) - loss(&minus)) / (2.0 * FD_EPS);
            worst = worst.max(rel_err(analytic[i].data()[j], numeric));
        }
    }
    worst
}

/// Same check for a two-block TCN stack, over the input and every parameter.
fn check_tcn_stack(rng: &mut Rng) -> f64 {
    let mut store = ParamStore::<f64>::new();
    let configs = [
        TcnBlockConfig { in_channels: 3, out_channels: 5, kernel_size: 3, dilation: 1, dropout_rate: 0.0 },
        TcnBlockConfig { in_channels: 5, out_channels: 5, kernel_size: 3, dilation: 2, dropout_rate: 0.0 },
    ];
    let blocks: Vec<TcnBlock> = configs
        .iter()
        .enumerate()
        .map(|(i, c)| TcnBlock::new(&mut store, &format!("b{i}"), c.clone(), rng).unwrap())
        .collect();
    // a random parameter point: zero-initialized biases put ReLU inputs
    // exactly on the kink wherever a column of activations is all zero
    let ids: Vec<_> = store.iter().map(|(id, _)| id).collect();
    for &id in &ids {
        for v in store.get_mut(id).data_mut() {
            *v = normal(rng);
        }
    }
    let x = random_tensor(&[2, 3, 12], rng).with_requires_grad(true);

    let forward = |store: &ParamStore<f64>, x: &Tensor<f64>, want_grads: bool| {
        let mut tape = Tape::new();
        let bound = store.bind(&mut tape);
        let xv = tape.leaf(x);
        let mut h = xv;
        let mut drop_rng = rng_from_seed(0);
        for b in &blocks {
            h = b.forward(&mut tape, &bound, h, Padding::Causal, Mode::Eval, &mut drop_rng).unwrap();
        }
        let l = scalarize(&mut tape, h);
        let value = tape.value(l).data()[0];
        let grads = want_grads.then(|| {
            let g = tape.backward(l).unwrap();
            let mut all = vec![g.wrt(xv)];
            all.extend(store.iter().map(|(id, _)| g.wrt(bound.var(id))));
            all
        });
        (value, grads)
    };

    let analytic = forward(&store, &x, true).1.unwrap();
    let mut worst: f64 = 0.0;
    for j in 0..x.numel() {
        let (mut p, mut m) = (x.clone(), x.clone());
        p.data_mut()[j] += FD_EPS;
        m.data_mut()[j] -= FD_EPS;
        let numeric = (forward(&store, &p, false).0 - forward(&store, &m, false).0) / (2.0 * FD_EPS);
        worst = worst.max(rel_err(analytic[0].data()[j], numeric));
    }
    for (k, id) in ids.into_iter().enumerate() {
        for j in 0..store.get(id).numel() {
            let orig = store.get(id).data()[j];
            store.get_mut(id).data_mut()[j] = orig + FD_EPS;
            let lp = forward(&store, &x, false).0;
            store.get_mut(id).data_mut()[j] = orig - FD_EPS;
            let lm = forward(&store, &x, false).0;
            store.get_mut(id).data_mut()[j] = orig;
            worst = worst.max(rel_err(analytic[k + 1].data()[j], (lp - lm) / (2.0 * FD_EPS)));
        }
    }
    worst
}

#[test]
fn gradient_correctness() {
    let _guard = heavy();
    let started = Instant::now();
    let mut rng = rng_from_seed(20);
    let r = &mut rng;
    let mut results: Vec<(&str, f64)> = Vec::new();
    let mut push = |name, err| results.push((name, err));

    push("conv1d causal", check_leaves(
        &[random_tensor(&[2, 3, 12], r), random_tensor(&[4, 3, 3], r), random_tensor(&[4], r)],
        &|t, v| t.conv1d(v[0], v[1], Some(v[2]), 2, Padding::Causal),
    ));
    push("conv1d centered", check_leaves(
        &[random_tensor(&[3, 10], r), random_tensor(&[2, 3, 4], r), random_tensor(&[2], r)],
        &|t, v| t.conv1d(v[0], v[1], Some(v[2]), 1, Padding::Centered),
    ));
    push("weight_norm", check_leaves(
        &[random_tensor(&[4, 3, 3], r), random_tensor(&[4], r)],
        &|t, v| t.weight_norm(v[0], v[1]),
    ));
    push("relu", check_leaves(&[off_kink(&[3, 5], r)], &|t, v| Ok(t.relu(v[0]))));
    push("add", check_leaves(
        &[random_tensor(&[3, 5], r), random_tensor(&[3, 5], r)],
        &|t, v| t.add(v[0], v[1]),
    ));
    push("mul", check_leaves(
        &[random_tensor(&[3, 5], r), random_tensor(&[3, 5], r)],
        &|t, v| t.mul(v[0], v[1]),
    ));
    push("sum", check_leaves(&[random_tensor(&[3, 5], r)], &|t, v| Ok(t.sum(v[0]))));
    let scale: Vec<f64> = (0..6).map(|i| [0.0, 1.25, 2.0][i % 3]).collect();
    push("channel_scale", check_leaves(
        &[random_tensor(&[2, 3, 5], r)],
        &move |t, v| t.channel_scale(v[0], scale.clone()),
    ));
    push("last_step", check_leaves(&[random_tensor(&[2, 3, 6], r)], &|t, v| t.last_step(v[0])));
    push("flatten", check_leaves(&[random_tensor(&[2, 3, 4], r)], &|t, v| t.flatten(v[0])));
    push("reverse_time", check_leaves(&[random_tensor(&[3, 7], r)], &|t, v| t.reverse_time(v[0])));
    push("concat", check_leaves(
        &[random_tensor(&[2, 3], r), random_tensor(&[2, 4], r)],
        &|t, v| t.concat(v[0], v[1]),
    ));
    push("dense batch", check_leaves(
        &[random_tensor(&[3, 5], r), random_tensor(&[4, 5], r), random_tensor(&[4], r)],
        &|t, v| t.dense(v[0], v[1], Some(v[2])),
    ));
    push("dense vector", check_leaves(
        &[random_tensor(&[5], r), random_tensor(&[4, 5], r)],
        &|t, v| t.dense(v[0], v[1], None),
    ));
    push("softmax_cross_entropy", check_leaves(
        &[random_tensor(&[4, 6], r)],
        &|t, v| t.softmax_cross_entropy(v[0], &[0, 3, 5, 3]),
    ));
    push("two-block TCN stack", check_tcn_stack(r));

    let worst = results.iter().map(|(_, e)| *e).fold(0.0, f64::max);
    let failing: Vec<String> = results
        .iter()
        .filter(|(_, e)| *e > 1e-3)
        .map(|(n, e)| format!("{n} ({e:.2e})"))
        .collect();
    let secs = started.elapsed().as_secs_f64();
    verdict(
        "gradient correctness",
        failing.is_empty() && secs < 60.0,
        &format!(
            "{} graphs, max relative error {worst:.2e} (limit 1e-3), {secs:.1}s{}",
            results.len(),
            if failing.is_empty() { String::new() } else { format!(", failing: {}", failing.join(", ")) }
        ),
    );
}

// ---------------------------------------------------------------- causality

fn features(model: &Model, x: &Tensor<f32>) -> Tensor<f32> {
    let mut tape = Tape::new();
    let bound = model.params().bind(&mut tape);
    let xv = tape.leaf(x);
    let mut rng = rng_from_seed(0);
    let f = model
        .stack_output(&mut tape, &bound, xv, Direction::Forward, Mode::Eval, &mut rng)
        .unwrap();
    tape.value(f).clone()
}

fn random_window(channels: usize, len: usize, rng: &mut Rng) -> Tensor<f32> {
    Tensor::from_fn(&[channels, len], |_| normal(rng) as f32)
}

/// `(triples with any change before t', triples with a change at or after t')`.
fn probe_causality(model: &Model, triples: usize, seed: u64) -> (usize, usize) {
    let (c, t) = (model.config().input_channels, model.config().input_length);
    let mut rng = rng_from_seed(seed);
    let (mut leaks, mut reacts) = (0, 0);
    for _ in 0..triples {
        let x = random_window(c, t, &mut rng);
        let cut = rng.random_range(1..t);
        let mut y = x.clone();
        for ch in 0..c {
            for s in cut..t {
                y.data_mut()[ch * t + s] += normal(&mut rng) as f32;
            }
        }
        let (fx, fy) = (features(model, &x), features(model, &y));
        let channels = fx.shape()[0];
        let changed = |s: usize| (0..channels).any(|ch| fx.data()[ch * t + s].to_bits() != fy.data()[ch * t + s].to_bits());
        leaks += usize::from((0..cut).any(changed));
        reacts += usize::from((cut..t).any(changed));
    }
    (leaks, reacts)
}

#[test]
fn causality_suite() {
    let _guard = heavy();
    let started = Instant::now();
    let causal: Model = Model::build(&presets::fencenet(18), 3).unwrap();
    let (leaks, reacts) = probe_causality(&causal, 100, 11);
    let acausal: Model = Model::build(&presets::regular_conv1d(18), 3).unwrap();
    let (acausal_leaks, _) = probe_causality(&acausal, 100, 11);
    let secs = started.elapsed().as_secs_f64();
    verdict(
        "causality",
        leaks == 0 && reacts == 100 && acausal_leaks >= 1 && secs < 60.0,
        &format!(
            "default FenceNet: {leaks}/100 triples change features before t' ({reacts}/100 react at or after t'); \
             acausal variant: {acausal_leaks}/100 triples leak; {secs:.1}s"
        ),
    );
}

// ----------------------------------------------------------- receptive field

#[test]
fn receptive_field_by_probing() {
    let _guard = heavy();
    let len = 128;
    let cfg = presets::fencenet(18).with_input_length(len);
    let analytic: usize = 1 + cfg
        .blocks
        .iter()
        .map(|b| 2 * (b.kernel_size - 1) * b.dilation)
        .sum::<usize>();
    let model: Model = Model::build(&cfg, 5).unwrap();
    let mut rng = rng_from_seed(6);
    let x = random_window(18, len, &mut rng);
    let base = features(&model, &x);
    let channels = base.shape()[0];
    let mut influencing = Vec::new();
    for s in 0..len {
        let mut y = x.clone();
        for ch in 0..18 {
            y.data_mut()[ch * len + s] += 1.0 + normal(&mut rng).abs() as f32;
        }
        let f = features(&model, &y);
        if (0..channels).any(|ch| f.data()[ch * len + len - 1] != base.data()[ch * len + len - 1]) {
            influencing.push(s);
        }
    }
    let measured = len - influencing.first().copied().unwrap_or(len);
    let contiguous = influencing.len() == measured;
    verdict(
        "receptive field",
        measured == analytic && contiguous && cfg.receptive_field() == analytic && measured >= 28,
        &format!("measured {measured} (contiguous: {contiguous}), analytic 1 + sum 2(k-1)d = {analytic}, window 28"),
    );
}

// ------------------------------------------------------------- normalization

#[test]
fn normalization_properties() {
    let mut rng = rng_from_seed(9);
    let nose = Joint::Nose.index();
    let ankle = Joint::LAnkle.index();
    let (mut origin_ok, mut translation_ok, mut scale_ok) = (0, 0, 0);
    let close = |a: &[Vec<Point>], b: &[Vec<Point>]| {
        a.iter().flatten().zip(b.iter().flatten()).all(|(p, q)| {
            (p[0] - q[0]).abs() <= 1e-9 * p[0].abs().max(1.0) && (p[1] - q[1]).abs() <= 1e-9 * p[1].abs().max(1.0)
        })
    };
    for _ in 0..1000 {
        let frames: Vec<Vec<Point>> = (0..28)
            .map(|_| {
                (0..NUM_JOINTS)
                    .map(|j| {
                        let y = if j == nose {
                            rng.random_range(0.0..150.0)
                        } else if j == ankle {
                            rng.random_range(250.0..480.0)
                        } else {
                            rng.random_range(0.0..480.0)
                        };
                        [rng.random_range(0.0..640.0), y]
                    })
                    .collect()
            })
            .collect();
        let out = normalize_window(&frames, nose, ankle, "w").unwrap();
        origin_ok += usize::from(out[0][nose] == [0.0, 0.0]);

        let (dx, dy) = (rng.random_range(-500.0..500.0), rng.random_range(-500.0..500.0));
        let moved: Vec<Vec<Point>> = frames
            .iter()
            .map(|f| f.iter().map(|p| [p[0] + dx, p[1] + dy]).collect())
            .collect();
        translation_ok += usize::from(close(&out, &normalize_window(&moved, nose, ankle, "w").unwrap()));

        let s = rng.random_range(0.1..10.0);
        let c = [rng.random_range(-100.0..100.0), rng.random_range(-100.0..100.0)];
        let scaled: Vec<Vec<Point>> = frames
            .iter()
            .map(|f| f.iter().map(|p| [c[0] + s * (p[0] - c[0]), c[1] + s * (p[1] - c[1])]).collect())
            .collect();
        scale_ok += usize::from(close(&out, &normalize_window(&scaled, nose, ankle, "w").unwrap()));
    }
    verdict(
        "normalization",
        origin_ok == 1000 && translation_ok == 1000 && scale_ok == 1000,
        &format!("nose at origin {origin_ok}/1000, translation invariant {translation_ok}/1000, scale invariant {scale_ok}/1000"),
    );
}

// ------------------------------------------------------------------ sampling

#[test]
fn sampling_counts() {
    let mut rng = rng_from_seed(1);
    let lens = [28, 33, 46, 47];
    let formula: Vec<usize> = lens.iter().map(|&t| stride_window_count(t)).collect();
    let emitted: Vec<usize> = lens
        .iter()
        .map(|&t| window_offsets(t, &SamplingConfig::default(), &mut rng).len())
        .collect();
    verdict(
        "sampling counts",
        formula == [1, 3, 10, 10] && emitted == formula,
        &format!("T=28/33/46/47 give {formula:?} by formula, {emitted:?} emitted"),
    );
}

// ------------------------------------------------------ synthetic end-to-end

fn synthetic_experiment() -> Experiment {
    Experiment {
        model: presets::fencenet_small(18),
        train: TrainConfig {
            epochs: 10,
            batch_size: 32,
            learning_rate: 3e-3,
            ..TrainConfig::default()
        },
        preprocessing: Preprocessing::default(),
        seed: 2024,
    }
}

#[test]
fn synthetic_end_to_end() {
    let _guard = heavy();
    let dir = tempfile::tempdir().unwrap();
    let manifest: PathBuf = dir.path().join("synth.jsonl");
    let written = cmd_synth(&SynthConfig::default(), 2024, &manifest).unwrap();
    let dataset = Dataset::load_manifest(&manifest).unwrap();

    let forward = synthetic_experiment();
    let params = forward.model.num_params();
    let started = Instant::now();
    let report = run_cv_pi(&dataset, &forward, "forward", 1).unwrap();
    let secs = started.elapsed().as_secs_f64();
    verdict(
        "synthetic PI cross validation",
        written == 600
            && report.folds.len() == 10
            && params <= 300_000
            && forward.train.epochs <= 20
            && report.accuracy >= 0.95
            && secs <= 600.0,
        &format!(
            "{written} videos, {} folds, {params} parameters, {} epochs/fold, video accuracy {:.1}% (need 95%), {secs:.0}s (limit 600s)",
            report.folds.len(),
            forward.train.epochs,
            100.0 * report.accuracy
        ),
    );

    let (model, preprocessing) = Variant::Shuffled
        .apply(forward.model.clone(), forward.preprocessing.clone())
        .unwrap();
    let shuffled = Experiment { model, preprocessing, ..forward.clone() };
    let shuffled_report = run_cv_pi(&dataset, &shuffled, "shuffled", 1).unwrap();
    let gap = 100.0 * (report.accuracy - shuffled_report.accuracy);
    verdict(
        "shuffled below forward",
        gap >= 5.0,
        &format!(
            "forward {:.1}%, shuffled {:.1}%, gap {gap:.1} points (need 5)",
            100.0 * report.accuracy,
            100.0 * shuffled_report.accuracy
        ),
    );
}

// ------------------------------------------------------------------- overfit

#[test]
fn overfit_oracle() {
    let _guard = heavy();
    let dataset = fencenet::dataset::synth_generate(
        &SynthConfig { num_fencers: 2, reps_per_action: 2, ..SynthConfig::default() },
        77,
    );
    let all = prepare_samples(&dataset, &Preprocessing::default(), 1, 28).unwrap();
    let step = all.len() / 32;
    let windows: Vec<_> = all.iter().step_by(step).take(32).cloned().collect();
    let model: Model = Model::build(&presets::fencenet(18), 4).unwrap();
    let cfg = TrainConfig { epochs: 200, batch_size: 8, ..TrainConfig::default() };
    let mut trainer = Trainer::new(model, &cfg).unwrap();
    let labels: Vec<usize> = windows.iter().map(|w| w.label).collect();
    let mut reached = None;
    for epoch in 1..=200 {
        trainer.run_epoch(&windows).unwrap();
        let predicted = fencenet::evaluation::predict_windows(trainer.model(), &windows).unwrap();
        if predicted == labels {
            reached = Some(epoch);
            break;
        }
    }
    verdict(
        "overfit",
        windows.len() == 32 && reached.is_some(),
        &match reached {
            Some(e) => format!("default FenceNet memorizes 32 windows (6 classes) after {e} epochs (limit 200)"),
            None => "32 windows not memorized within 200 epochs".to_string(),
        },
    );
}

// ---------------------------------------------------------------- symmetry

#[test]
fn bifencenet_symmetry() {
    let _guard = heavy();
    let cfg = presets::bifencenet(18);
    let a: Model = Model::build(&cfg, 12).unwrap();
    let mut b = a.clone();
    for (f, g) in a.paired_stack_params() {
        *b.params_mut().get_mut(f) = a.params().get(g).clone();
        *b.params_mut().get_mut(g) = a.params().get(f).clone();
    }
    let (c, t) = (cfg.input_channels, cfg.input_length);
    let half = cfg.feature_channels();
    let mut rng = rng_from_seed(13);
    let mut identical = 0;
    for _ in 0..100 {
        let x = random_window(c, t, &mut rng);
        let reversed = Tensor::from_fn(&[c, t], |i| x.data()[(i / t) * t + (t - 1 - i % t)]);
        let expected = a.logits(&x).unwrap();

        let embedding = {
            let mut tape = Tape::new();
            let bound = b.params().bind(&mut tape);
            let xv = tape.leaf(&reversed);
            let e = b.embedding(&mut tape, &bound, xv, Mode::Eval, &mut rng_from_seed(0)).unwrap();
            tape.value(e).clone()
        };
        let swapped = Tensor::from_fn(&[2 * half], |i| embedding.data()[(i + half) % (2 * half)]);
        let mut tape = Tape::new();
        let bound = a.params().bind(&mut tape);
        let ev = tape.leaf(&swapped);
        let out = a.head_forward(&mut tape, &bound, ev).unwrap();
        let got = tape.value(out);
        identical += usize::from(
            got.shape() == expected.shape()
                && got.data().iter().zip(expected.data()).all(|(p, q)| p.to_bits() == q.to_bits()),
        );
    }
    verdict(
        "BiFenceNet symmetry",
        identical == 100,
        &format!("{identical}/100 random inputs reproduce logits bitwise after swapping stacks, reversing input and swapping halves"),
    );
}

// --------------------------------------------------------- parameter counts

#[test]
fn parameter_counts() {
    let count = |cfg: &ModelConfig, seed| Model::<f32>::build(cfg, seed).unwrap().num_params();
    let fencenet = presets::fencenet(18);
    let bi = presets::bifencenet(18);
    let (f1, f2) = (count(&fencenet, 1), count(&fencenet, 2));
    let (b1, b2) = (count(&bi, 1), count(&bi, 2));
    verdict(
        "parameter counts",
        (2_000_000..=3_200_000).contains(&f1)
            && (4_200_000..=6_600_000).contains(&b1)
            && f1 == f2
            && b1 == b2
            && f1 == fencenet.num_params()
            && b1 == bi.num_params(),
        &format!("FenceNet {f1} (range 2.0e6..3.2e6), BiFenceNet {b1} (range 4.2e6..6.6e6), stable across seeds"),
    );
}

// ---------------------------------------------------------- full-scale data

/// Needs the converted Fencing Footwork Dataset; set `FFD_MANIFEST` and run
/// with `--ignored`. Takes hours on a CPU.
#[test]
#[ignore]
fn ffd_reproduction() {
    let Ok(path) = std::env::var("FFD_MANIFEST") else {
        let _ = writeln!(std::io::stdout(), "[SKIP] FFD reproduction: FFD_MANIFEST not set");
        return;
    };
    let dataset = Dataset::load_manifest(std::path::Path::new(&path)).unwrap();
    let suite = fencenet::evaluation::SuiteConfig::full(0);
    let jobs = std::thread::available_parallelism().map_or(1, |n| n.get());
    let fencenet = run_cv_pi(&dataset, &Variant::Fencenet.experiment(&suite).unwrap(), "fencenet", jobs).unwrap();
    let bi = run_cv_pi(&dataset, &Variant::Bifencenet.experiment(&suite).unwrap(), "bifencenet", jobs).unwrap();
    let random = fencenet::evaluation::run_random_split(
        &dataset,
        0.2,
        &Variant::Fencenet.experiment(&suite).unwrap(),
        "fencenet-random",
    )
    .unwrap();
    let steps_ok = |r: &fencenet::evaluation::EvaluationReport| r.per_class_accuracy[4] >= 95.0 && r.per_class_accuracy[5] >= 95.0;
    verdict(
        "FFD reproduction",
        fencenet.accuracy >= 0.80
            && bi.accuracy >= 0.82
            && steps_ok(&fencenet)
            && steps_ok(&bi)
            && random.accuracy >= 0.92,
        &format!(
            "FenceNet PI {:.1}% (need 80), BiFenceNet PI {:.1}% (need 82), random split {:.1}% (need 92), SF/SB FenceNet {:.0}/{:.0}, BiFenceNet {:.0}/{:.0}",
            100.0 * fencenet.accuracy,
            100.0 * bi.accuracy,
            100.0 * random.accuracy,
            fencenet.per_class_accuracy[4],
            fencenet.per_class_accuracy[5],
            bi.per_class_accuracy[4],
            bi.per_class_accuracy[5]
        ),
    );
}
