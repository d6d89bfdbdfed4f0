//! Acceptance checks. Prints one PASS/FAIL line per criterion.
//!
//! Run a subset by number: `cargo test -p polsar-core --test acceptance -- 1 4 8`.

use std::collections::BTreeSet;
use std::panic::{self, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::Instant;

use polsar_core::cvnn::{
    apply_mask, conv3d, conv3d_backward, crelu, crelu_backward, cross_entropy, dense, dense_backward, dropout_mask,
    head_backward, magnitude_softmax, one_hot, se_block, se_block_backward,
};
use polsar_core::eval::{classify_image, compute_metrics, median_filter_classmap};
use polsar_core::io::checkpoint::encode_checkpoint;
use polsar_core::model::{parse_branches, Attention, ModelConfig, Network};
use polsar_core::oracle::{
    brute_conv3d, central_difference, random_tensor, relative_error, relative_error_floor, NETWORK_FLOOR,
};
use polsar_core::pipeline::{run_experiment, sweep, train_network, ExperimentConfig, SweepMode};
use polsar_core::preprocess::{normalize_channels, stratified_split};
use polsar_core::rng::{self, Rng};
use polsar_core::synth::{default_class_models, generate_scene, Layout, DEFAULT_LOOKS};
use polsar_core::train::TrainConfig;
use polsar_core::{CoherencyImage, ComplexTensor, LabelMap};
use rand::Rng as _;

#[global_allocator]
static ALLOC: mimalloc::MiMalloc = mimalloc::MiMalloc;

struct Verdict {
    pass: bool,
    /// Failure that follows from inconsistent reference numbers, not from
    /// the implementation.
    known: bool,
    detail: String,
}

impl Verdict {
    fn check(pass: bool, detail: String) -> Self {
        Self {
            pass,
            known: false,
            detail,
        }
    }
}

type Check = fn() -> Verdict;

const CRITERIA: [(u32, &str, Check); 10] = [
    (1, "metric oracle on reference confusion matrices", metrics),
    (2, "conv3d vs loop-nest oracle", convolution),
    (3, "finite-difference gradients", gradients),
    (4, "default intermediate shapes", shapes),
    (5, "end-to-end learning on synthetic scene", learning),
    (6, "median filter removes label noise", median_filter),
    (7, "branch and attention ablations", ablations),
    (8, "stratified split train counts", split_counts),
    (9, "bitwise reproducibility", reproducibility),
    (10, "training-fraction trend", fraction_trend),
];

fn main() -> ExitCode {
    let selected: BTreeSet<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut unexpected = 0;
    for (id, name, check) in CRITERIA {
        if !selected.is_empty() && !selected.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let verdict = panic::catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Verdict::check(false, format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        let tag = if verdict.pass { "PASS" } else { "FAIL" };
        println!("{tag} {id:>2} {name} ({secs:.1} s): {}", verdict.detail);
        if !verdict.pass && !verdict.known {
            unexpected += 1;
        }
    }
    if unexpected == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn scene(size: usize, seed: u64) -> (CoherencyImage, LabelMap) {
    let classes = default_class_models(3, DEFAULT_LOOKS).unwrap();
    generate_scene(&classes, Layout::Stripes, size, size, seed).unwrap()
}

fn experiment(ratio: f64, seed: u64, max_epochs: usize) -> ExperimentConfig {
    ExperimentConfig {
        model: ModelConfig::new(3),
        train: TrainConfig {
            max_epochs,
            ..TrainConfig::default()
        },
        ratio,
        seed,
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

/// Prediction and reference maps whose confusion matrix
/// (`[predicted][reference]`) is `counts`.
fn maps_from_confusion(counts: &[[u64; 3]; 3]) -> (LabelMap, LabelMap) {
    let mut pred = Vec::new();
    let mut reference = Vec::new();
    for (p, row) in counts.iter().enumerate() {
        for (r, &n) in row.iter().enumerate() {
            pred.extend(std::iter::repeat_n(p as u16 + 1, n as usize));
            reference.extend(std::iter::repeat_n(r as u16 + 1, n as usize));
        }
    }
    let n = pred.len();
    (
        LabelMap::new(1, n, 3, pred).unwrap(),
        LabelMap::new(1, n, 3, reference).unwrap(),
    )
}

fn metrics() -> Verdict {
    let before = [[297932, 6808, 22640], [6376, 238968, 1536], [23776, 436, 712400]];
    let after = [[306268, 4420, 15780], [6132, 238212, 1264], [22576, 296, 710360]];
    let score = |counts| {
        let (p, r) = maps_from_confusion(counts);
        let m = compute_metrics(&p, &r).unwrap();
        (100.0 * m.oa, 100.0 * m.aa, 100.0 * m.kappa)
    };
    let (oa8, aa8, k8) = score(&before);
    let (oa9, aa9, k9) = score(&after);
    let near = |x: f64, y: f64, tol: f64| (x - y).abs() <= tol;
    let core = near(oa8, 95.30, 0.01)
        && near(aa8, 94.84, 0.01)
        && near(k8, 91.99, 0.01)
        && near(oa9, 96.13, 0.02)
        && near(k9, 93.42, 0.02);
    let aa_ok = near(aa9, 95.49, 0.02);
    let mut detail =
        format!("unfiltered OA {oa8:.3} AA {aa8:.3} kappa {k8:.3}; filtered OA {oa9:.3} AA {aa9:.3} kappa {k9:.3}");
    if core && !aa_ok {
        // Column-wise (producer) averaging does not reach it either.
        let col = (0..3)
            .map(|j| after[j][j] as f64 / (0..3).map(|i| after[i][j]).sum::<u64>() as f64)
            .sum::<f64>()
            / 3.0;
        detail.push_str(&format!(
            "; expected filtered AA 95.49 is not reachable from the given counts (row mean {aa9:.3}, column mean {:.3})",
            100.0 * col
        ));
        return Verdict {
            pass: false,
            known: true,
            detail,
        };
    }
    Verdict::check(core && aa_ok, detail)
}

fn convolution() -> Verdict {
    let mut rng = rng::rng(2024);
    let mut worst = 0.0f64;
    let shapes = 60;
    for _ in 0..shapes {
        let b = rng.random_range(1..=2);
        let (h, w, d) = (
            rng.random_range(1..=6),
            rng.random_range(1..=6),
            rng.random_range(1..=6),
        );
        let (ci, co) = (rng.random_range(1..=3), rng.random_range(1..=4));
        let mut k = || [1, 3, 5][rng.random_range(0..3)];
        let (kh, kw, kd) = (k(), k(), k());
        let x = random_tensor(&[b, h, w, d, ci], &mut rng);
        let wt = random_tensor(&[kh, kw, kd, ci, co], &mut rng);
        let bias = random_tensor(&[co], &mut rng);
        let y = conv3d(&x, &wt, &bias).unwrap();
        worst = worst.max(y.max_abs_diff(&brute_conv3d(&x, &wt, &bias)));
    }
    Verdict::check(worst < 1e-10, format!("{shapes} shapes, max abs error {worst:.2e}"))
}

const H: f64 = 1e-6;
const COORDS: usize = 20;

fn probe(y: &ComplexTensor, p: &ComplexTensor) -> f64 {
    y.re().iter().zip(p.re()).map(|(a, b)| a * b).sum::<f64>()
        + y.im().iter().zip(p.im()).map(|(a, b)| a * b).sum::<f64>()
}

/// Largest relative error between `analytic` and central differences of
/// `loss` over random coordinates of `target`.
fn layer_error(
    target: &mut ComplexTensor,
    analytic: &ComplexTensor,
    rng: &mut Rng,
    real_only: bool,
    loss: &dyn Fn(&ComplexTensor) -> f64,
) -> f64 {
    let mut worst = 0.0f64;
    for _ in 0..COORDS {
        let i = rng.random_range(0..target.len());
        let imag = !real_only && rng.random::<bool>();
        let expected = if imag { analytic.im()[i] } else { analytic.re()[i] };
        let cell = std::cell::RefCell::new(&mut *target);
        let numeric = central_difference(
            || loss(&cell.borrow()),
            |d| {
                let mut t = cell.borrow_mut();
                if imag {
                    t.im_mut()[i] += d
                } else {
                    t.re_mut()[i] += d
                }
            },
            H,
        );
        worst = worst.max(relative_error(expected, numeric));
    }
    worst
}

fn layer_errors() -> Vec<(&'static str, f64)> {
    let mut rng = rng::rng(300);
    let mut out = Vec::new();

    let mut x = random_tensor(&[2, 5, 4, 6, 3], &mut rng);
    let mut w = random_tensor(&[3, 3, 3, 3, 4], &mut rng);
    let mut b = random_tensor(&[4], &mut rng);
    let p = random_tensor(&[2, 5, 4, 6, 4], &mut rng);
    let g = conv3d_backward(&x, &w, &p, true).unwrap();
    let (xc, wc, bc) = (x.clone(), w.clone(), b.clone());
    out.push((
        "conv.x",
        layer_error(&mut x, g.input.as_ref().unwrap(), &mut rng, false, &|x| {
            probe(&conv3d(x, &wc, &bc).unwrap(), &p)
        }),
    ));
    out.push((
        "conv.w",
        layer_error(&mut w, &g.weight, &mut rng, false, &|w| {
            probe(&conv3d(&xc, w, &bc).unwrap(), &p)
        }),
    ));
    out.push((
        "conv.b",
        layer_error(&mut b, &g.bias, &mut rng, false, &|b| {
            probe(&conv3d(&xc, &wc, b).unwrap(), &p)
        }),
    ));

    let mut x = random_tensor(&[7, 30], &mut rng);
    let mut w = random_tensor(&[30, 6], &mut rng);
    let mut b = random_tensor(&[6], &mut rng);
    let p = random_tensor(&[7, 6], &mut rng);
    let g = dense_backward(&x, &w, &p, true).unwrap();
    let (xc, wc, bc) = (x.clone(), w.clone(), b.clone());
    out.push((
        "dense.x",
        layer_error(&mut x, g.input.as_ref().unwrap(), &mut rng, false, &|x| {
            probe(&dense(x, &wc, &bc).unwrap(), &p)
        }),
    ));
    out.push((
        "dense.w",
        layer_error(&mut w, &g.weight, &mut rng, false, &|w| {
            probe(&dense(&xc, w, &bc).unwrap(), &p)
        }),
    ));
    out.push((
        "dense.b",
        layer_error(&mut b, &g.bias, &mut rng, false, &|b| {
            probe(&dense(&xc, &wc, b).unwrap(), &p)
        }),
    ));

    let mut x = random_tensor(&[60], &mut rng);
    let p = random_tensor(&[60], &mut rng);
    let g = crelu_backward(&x, &p);
    out.push((
        "crelu",
        layer_error(&mut x, &g, &mut rng, false, &|x| probe(&crelu(x), &p)),
    ));

    let mut u = random_tensor(&[2, 3, 3, 2, 8], &mut rng);
    let mut real = |rows: usize, cols: usize| {
        let v = (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect();
        ComplexTensor::from_real(&[rows, cols], v).unwrap()
    };
    let (mut w1, mut w2) = (real(2, 8), real(8, 2));
    let p = random_tensor(u.shape(), &mut rng);
    let (_, cache) = se_block(&u, &w1, &w2).unwrap();
    let g = se_block_backward(&u, &w1, &w2, &cache, &p).unwrap();
    let (uc, w1c, w2c) = (u.clone(), w1.clone(), w2.clone());
    out.push((
        "se.u",
        layer_error(&mut u, &g.input, &mut rng, false, &|u| {
            probe(&se_block(u, &w1c, &w2c).unwrap().0, &p)
        }),
    ));
    out.push((
        "se.w1",
        layer_error(&mut w1, &g.w1, &mut rng, true, &|w| {
            probe(&se_block(&uc, w, &w2c).unwrap().0, &p)
        }),
    ));
    out.push((
        "se.w2",
        layer_error(&mut w2, &g.w2, &mut rng, true, &|w| {
            probe(&se_block(&uc, &w1c, w).unwrap().0, &p)
        }),
    ));

    let mut x = random_tensor(&[60], &mut rng);
    let mask = dropout_mask(60, 0.25, &mut rng::rng(9));
    let p = random_tensor(&[60], &mut rng);
    let g = apply_mask(&p, &mask);
    out.push((
        "dropout",
        layer_error(&mut x, &g, &mut rng, false, &|x| probe(&apply_mask(x, &mask), &p)),
    ));

    let mut z = random_tensor(&[6, 5], &mut rng).map(|v| v * 2.0);
    let y = one_hot(&[0, 4, 2, 2, 1, 3], 5);
    let probs = magnitude_softmax(&z).unwrap();
    let g = head_backward(&z, &probs, &y).unwrap();
    out.push((
        "head",
        layer_error(&mut z, &g, &mut rng, false, &|z| {
            cross_entropy(&magnitude_softmax(z).unwrap(), &y, 5)
        }),
    ));
    out
}

/// Gap between one-sided differences above which a coordinate is taken to
/// straddle a CReLU kink within `H`. Smooth coordinates stay near `H * f''`.
const KINK_GAP: f64 = 1e-5;

struct NetworkCheck {
    worst: f64,
    tensors: usize,
    redrawn: usize,
}

/// Worst relative error over every parameter tensor of the default network,
/// dropout off. Coordinates whose loss is not differentiable at scale `H`
/// are redrawn.
fn network_error() -> NetworkCheck {
    let cfg = ModelConfig::new(3);
    let mut net = Network::build(&cfg, 31).unwrap();
    let mut rng = rng::rng(32);
    // Zero-initialized biases would put CReLU inputs exactly on the kink.
    for p in net.params_mut().iter_mut().filter(|p| p.name.ends_with(".bias")) {
        p.value = random_tensor(p.value.shape(), &mut rng).map(|z| z * 0.1);
    }
    let x = random_tensor(&cfg.input_shape(2), &mut rng);
    let labels = [1u16, 3];
    let (base, grads) = net.loss_and_grads(&x, &labels, None).unwrap();
    let mut check = NetworkCheck {
        worst: 0.0,
        tensors: grads.len(),
        redrawn: 0,
    };
    for (pi, grad) in grads.iter().enumerate() {
        let mut done = 0;
        while done < COORDS {
            let i = rng.random_range(0..grad.len());
            let imag = net.params()[pi].complex && rng.random::<bool>();
            let analytic = if imag { grad.im()[i] } else { grad.re()[i] };
            let mut at = |d: f64| {
                let t = &mut net.params_mut()[pi].value;
                let slot = if imag { &mut t.im_mut()[i] } else { &mut t.re_mut()[i] };
                let orig = *slot;
                *slot = orig + d;
                let loss = net.loss(&x, &labels).unwrap();
                let t = &mut net.params_mut()[pi].value;
                if imag {
                    t.im_mut()[i] = orig
                } else {
                    t.re_mut()[i] = orig
                }
                loss
            };
            let (plus, minus) = (at(H), at(-H));
            if ((plus - base) / H - (base - minus) / H).abs() > KINK_GAP {
                check.redrawn += 1;
                continue;
            }
            let numeric = (plus - minus) / (2.0 * H);
            check.worst = check.worst.max(relative_error_floor(analytic, numeric, NETWORK_FLOOR));
            done += 1;
        }
    }
    check
}

fn gradients() -> Verdict {
    let layers = layer_errors();
    let (layer_name, layer_worst) = layers.iter().copied().max_by(|a, b| a.1.total_cmp(&b.1)).unwrap();
    let net = network_error();
    Verdict::check(
        layer_worst < 1e-6 && net.worst < 1e-5,
        format!(
            "{} layer checks, worst {layer_worst:.2e} ({layer_name}); network {} tensors x {COORDS} coords, worst {:.2e}, {} kink coordinates redrawn",
            layers.len(),
            net.tensors,
            net.worst,
            net.redrawn
        ),
    )
}

fn shapes() -> Verdict {
    let cfg = ModelConfig::new(3);
    let net = Network::build(&cfg, 1).unwrap();
    let pass = net
        .forward_pass(&ComplexTensor::zeros(&cfg.input_shape(1)), None)
        .unwrap();
    let branch_ok = pass.branch_shapes().len() == 3 && pass.branch_shapes().iter().all(|s| s == &[1, 13, 13, 6, 16]);
    let fused_ok = pass.fused_shape() == [1, 13, 13, 6, 48];
    let flat_ok = pass.flatten_len() == 48672 && cfg.flatten_len() == 48672;
    Verdict::check(
        branch_ok && fused_ok && flat_ok,
        format!(
            "branches {:?}, fused {:?}, flatten {}",
            pass.branch_shapes(),
            pass.fused_shape(),
            pass.flatten_len()
        ),
    )
}

fn learning() -> Verdict {
    let mut oas = Vec::new();
    let mut epochs = Vec::new();
    for seed in 0..3 {
        let (image, labels) = scene(64, seed);
        let e = run_experiment(&image, &labels, &experiment(0.01, seed, 50)).unwrap();
        oas.push(e.report.oa);
        epochs.push(e.log.epochs.len());
    }
    let m = median(oas.clone());
    let pct: Vec<String> = oas.iter().map(|v| format!("{:.2}", 100.0 * v)).collect();
    Verdict::check(
        m >= 0.95,
        format!(
            "test OA per seed [{}] %, epochs run {epochs:?}, median {:.2} %",
            pct.join(", "),
            100.0 * m
        ),
    )
}

fn median_filter() -> Verdict {
    let (_, truth) = scene(64, 0);
    let mut rng = rng::rng(66);
    let mut gains = Vec::new();
    for _ in 0..5 {
        let mut noisy = truth.clone();
        for r in 0..truth.height() {
            for c in 0..truth.width() {
                if rng.random::<f64>() < 0.02 {
                    let shift = rng.random_range(1..3u16);
                    noisy.set(r, c, (truth.get(r, c) - 1 + shift) % 3 + 1);
                }
            }
        }
        let before = compute_metrics(&noisy, &truth).unwrap().oa;
        let after = compute_metrics(&median_filter_classmap(&noisy), &truth).unwrap().oa;
        gains.push((before, after));
    }
    let pass = gains.iter().all(|(b, a)| a > b);
    let shown: Vec<String> = gains
        .iter()
        .map(|(b, a)| format!("{:.2}->{:.2}", 100.0 * b, 100.0 * a))
        .collect();
    Verdict::check(
        pass,
        format!("OA % before->after over 5 noise draws: {}", shown.join(", ")),
    )
}

fn ablations() -> Verdict {
    let (image, labels) = scene(64, 0);
    let train = |branches: &str, attention: Attention| {
        let mut cfg = experiment(0.01, 5, 2);
        cfg.model.branches = parse_branches(branches).unwrap();
        cfg.model.attention = attention;
        cfg.train.patience = 2;
        let (net, log, _) = train_network(&image, &labels, &cfg, |_| {}).unwrap();
        assert_eq!(
            log.epochs.len(),
            2,
            "{branches} {attention} ran {} epochs",
            log.epochs.len()
        );
        net.param_names().into_iter().map(String::from).collect::<Vec<_>>()
    };
    let combos = ["S", "M", "D", "S,M", "S,D", "M,D", "S,M,D"];
    let branch_sets: BTreeSet<_> = combos.iter().map(|b| train(b, Attention::AfterFusion)).collect();
    let placements = [Attention::None, Attention::BeforeFusion, Attention::AfterFusion];
    let attention_sets: BTreeSet<_> = placements.iter().map(|&a| train("S,M,D", a)).collect();
    Verdict::check(
        branch_sets.len() == 7 && attention_sets.len() == 3,
        format!(
            "{} distinct parameter sets over 7 branch subsets, {} over 3 attention placements",
            branch_sets.len(),
            attention_sets.len()
        ),
    )
}

/// Label map with `counts[k]` pixels of class `k + 1`, in one row.
fn map_with_counts(counts: &[usize]) -> LabelMap {
    let labels: Vec<u16> = counts
        .iter()
        .enumerate()
        .flat_map(|(k, &n)| std::iter::repeat_n(k as u16 + 1, n))
        .collect();
    LabelMap::new(1, labels.len(), counts.len() as u16, labels).unwrap()
}

fn split_counts() -> Verdict {
    let flevoland = [
        29249, 15855, 11200, 10201, 21855, 14707, 21344, 10396, 8471, 6317, 17639, 10629, 22022, 7369, 578,
    ];
    let flevoland_train = [292, 159, 112, 102, 219, 147, 213, 104, 85, 63, 176, 106, 220, 74, 6];
    let san_francisco = [13701, 62731, 329566, 342795, 53509];
    let san_francisco_train = [137, 627, 3295, 3428, 535];
    let mut worst = 0i64;
    for (counts, expected) in [
        (&flevoland[..], &flevoland_train[..]),
        (&san_francisco[..], &san_francisco_train[..]),
    ] {
        let split = stratified_split(&map_with_counts(counts), 0.01, 7).unwrap();
        for (k, &e) in expected.iter().enumerate() {
            worst = worst.max((split.train[k].len() as i64 - e).abs());
            assert_eq!(split.train[k].len() + split.test[k].len(), counts[k]);
        }
    }
    Verdict::check(
        worst <= 1,
        format!("20 classes, largest deviation from expected train counts {worst}"),
    )
}

fn reproducibility() -> Verdict {
    let (image, labels) = scene(32, 9);
    let cfg = experiment(0.05, 9, 3);
    let run = || {
        let (net, log, _) = train_network(&image, &labels, &cfg, |_| {}).unwrap();
        let map = classify_image(&net, &normalize_channels(&image), cfg.model.window, 256).unwrap();
        (encode_checkpoint(&net), log.to_csv(), map)
    };
    let (a, b) = (run(), run());
    Verdict::check(
        a.0 == b.0 && a.1 == b.1 && a.2 == b.2,
        format!(
            "checkpoint {} bytes equal: {}, log equal: {}, class map equal: {}",
            a.0.len(),
            a.0 == b.0,
            a.1 == b.1,
            a.2 == b.2
        ),
    )
}

fn fraction_trend() -> Verdict {
    let (image, labels) = scene(64, 0);
    let ratios = [0.01, 0.02, 0.05];
    let rows = sweep(&image, &labels, &experiment(0.01, 0, 10), SweepMode::Ratio, &ratios, 3).unwrap();
    let pass = rows
        .windows(2)
        .all(|w| w[1].mean_oa + w[0].std_oa.max(w[1].std_oa) >= w[0].mean_oa);
    let shown: Vec<String> = rows
        .iter()
        .map(|r| format!("{}: {:.2}±{:.2}", r.value, 100.0 * r.mean_oa, 100.0 * r.std_oa))
        .collect();
    Verdict::check(
        pass,
        format!("mean OA % by ratio (3 trials, 10 epochs) {}", shown.join(", ")),
    )
}
