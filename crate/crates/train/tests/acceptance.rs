//! Acceptance checks. Prints one PASS/FAIL line per criterion.
//!
//! Exits 0 once every check has run, so the report lands in the normal test
//! log. Set `ABYSS_ACCEPTANCE_STRICT=1` to exit 1 when any check fails.

use std::time::{Duration, Instant};

use abyss_core::metrics::{mse, psnr_from_mse, ssim};
use abyss_core::tracker::{argmin_block_size, block_size_mse_stationary};
use abyss_core::{
    block_mse_decomposition, partition, upsample, DepthGrid, InterpMethod, TrackerConfig, TrackerState,
};
use abyss_nn::{quantize, total_loss, Graph, Model, ModelConfig, ModelKind, ParamId, Scalar, Tensor};
use abyss_train::batch::{hr_batch, lr_batch};
use abyss_train::eval::OVERALL;
use abyss_train::pipeline::{self, train_and_calibrate};
use abyss_train::report::rows_to_csv;
use abyss_train::sweep::block_size_sweep;
use abyss_train::train::Trained;
use abyss_train::{ExperimentConfig, Method, Report};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;

struct Outcome {
    id: usize,
    name: &'static str,
    passed: bool,
    detail: String,
    elapsed: Duration,
    budget: Duration,
}

fn record(id: usize, name: &'static str, budget_s: u64, elapsed: Duration, res: Check) -> Outcome {
    let budget = Duration::from_secs(budget_s);
    let (mut passed, mut detail) = match res {
        Ok(d) => (true, d),
        Err(d) => (false, d),
    };
    if elapsed > budget {
        passed = false;
        detail = format!("{detail}; over the {budget_s} s budget");
    }
    let o = Outcome { id, name, passed, detail, elapsed, budget };
    println!(
        "{} [{:>2}] {}: {} ({:.1} s / {} s)",
        if o.passed { "PASS" } else { "FAIL" },
        o.id,
        o.name,
        o.detail,
        o.elapsed.as_secs_f64(),
        o.budget.as_secs()
    );
    o
}

fn timed<R>(f: impl FnOnce() -> R) -> (R, Duration) {
    let t = Instant::now();
    let r = f();
    (r, t.elapsed())
}

fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn random_grid(rng: &mut ChaCha8Rng, h: usize, w: usize) -> DepthGrid {
    DepthGrid::from_fn(h, w, |_, _| rng.gen::<f64>()).unwrap()
}

fn naive_ssim(a: &DepthGrid, b: &DepthGrid) -> f64 {
    const N: usize = 11;
    let (c1, c2) = (1e-4, 9e-4);
    let mut win = [[0.0; N]; N];
    let mut total = 0.0;
    for (i, row) in win.iter_mut().enumerate() {
        for (j, w) in row.iter_mut().enumerate() {
            let d2 = (i as f64 - 5.0).powi(2) + (j as f64 - 5.0).powi(2);
            *w = (-d2 / 4.5).exp();
            total += *w;
        }
    }
    let (oh, ow) = (a.height() - N + 1, a.width() - N + 1);
    let mut acc = 0.0;
    for oy in 0..oh {
        for ox in 0..ow {
            let at = |g: &DepthGrid, i: usize, j: usize| g.get(oy + i, ox + j);
            let (mut mx, mut my) = (0.0, 0.0);
            for i in 0..N {
                for j in 0..N {
                    mx += win[i][j] / total * at(a, i, j);
                    my += win[i][j] / total * at(b, i, j);
                }
            }
            let (mut vx, mut vy, mut cxy) = (0.0, 0.0, 0.0);
            for i in 0..N {
                for j in 0..N {
                    let w = win[i][j] / total;
                    let (dx, dy) = (at(a, i, j) - mx, at(b, i, j) - my);
                    vx += w * dx * dx;
                    vy += w * dy * dy;
                    cxy += w * dx * dy;
                }
            }
            acc += (2.0 * mx * my + c1) * (2.0 * cxy + c2) / ((mx * mx + my * my + c1) * (vx + vy + c2));
        }
    }
    acc / (oh * ow) as f64
}

fn metric_correctness() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let a = random_grid(&mut rng, 16, 16);
    let self_err = (ssim(&a, &a).unwrap() - 1.0).abs();
    ensure(self_err <= 1e-9, format!("SSIM(x,x) off by {self_err:e}"))?;
    let c = ssim(&DepthGrid::filled(11, 11, 0.5).unwrap(), &DepthGrid::filled(11, 11, 0.25).unwrap()).unwrap();
    ensure((c - 0.80007).abs() <= 1e-4, format!("constant SSIM {c}"))?;
    let p = psnr_from_mse(0.01, 1.0);
    ensure((p - 20.0).abs() <= 1e-9, format!("PSNR {p}"))?;
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let x = random_grid(&mut rng, 16, 16);
        let y = random_grid(&mut rng, 16, 16);
        let mut direct = 0.0;
        for i in 0..16 {
            for j in 0..16 {
                direct += (x.get(i, j) - y.get(i, j)).powi(2);
            }
        }
        direct /= 256.0;
        worst = worst.max((ssim(&x, &y).unwrap() - naive_ssim(&x, &y)).abs());
        worst = worst.max((mse(&x, &y).unwrap() - direct).abs());
    }
    ensure(worst <= 1e-9, format!("oracle mismatch {worst:e}"))?;
    Ok(format!("constant SSIM {c:.5}, worst oracle gap {worst:.1e}"))
}

fn interpolation_exactness() -> Check {
    let lr = DepthGrid::from_fn(6, 9, |y, x| 2.0 - 0.5 * x as f64 + 1.25 * y as f64).unwrap();
    let hr = upsample(&lr, 3, InterpMethod::Bilinear).unwrap();
    let mut affine: f64 = 0.0;
    for y in 0..hr.height() {
        for x in 0..hr.width() {
            let (py, px) = (y as f64 * 5.0 / 17.0, x as f64 * 8.0 / 26.0);
            affine = affine.max((hr.get(y, x) - (2.0 - 0.5 * px + 1.25 * py)).abs());
        }
    }
    ensure(affine <= 1e-12, format!("bilinear affine gap {affine:e}"))?;
    let n = 10;
    let p = |x: f64| x * x * x - 3.0 * x + 2.0;
    let lr = DepthGrid::from_fn(1, n, |_, x| p(x as f64)).unwrap();
    let hr = upsample(&lr, 2, InterpMethod::Bicubic).unwrap();
    let mut cubic: f64 = 0.0;
    for x in 0..hr.width() {
        let src = x as f64 * (n - 1) as f64 / (2 * n - 1) as f64;
        let j = src.floor() as usize;
        if j >= 1 && j + 2 < n {
            cubic = cubic.max((hr.get(0, x) - p(src)).abs());
        }
    }
    ensure(cubic <= 1e-9, format!("bicubic cubic gap {cubic:e}"))?;
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let g = random_grid(&mut rng, 5, 7);
    for m in InterpMethod::ALL {
        ensure(upsample(&g, 1, m).unwrap() == g, format!("{m} is not the identity at s=1"))?;
    }
    Ok(format!("affine gap {affine:.1e}, cubic gap {cubic:.1e}"))
}

fn block_decomposition() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let k = [1, 2, 4, 8][rng.gen_range(0..4)];
        let (h, w) = (k * rng.gen_range(1..5), k * rng.gen_range(1..5));
        let (a, b) = (random_grid(&mut rng, h, w), random_grid(&mut rng, h, w));
        let part = partition(h, w, k).unwrap();
        let d = block_mse_decomposition(&a, &b, &part).unwrap();
        worst = worst.max((d.weighted_sum(&part) - mse(&a, &b).unwrap()).abs());
    }
    ensure(worst <= 1e-12, format!("gap {worst:e}"))?;
    Ok(format!("worst gap {worst:.1e} over 100 cases"))
}

fn ema_recurrence() -> Check {
    let one_block = |decay| {
        TrackerState::new(TrackerConfig { block_size: 4, decay, ..Default::default() }, 4, 4).unwrap()
    };
    let mut worst: f64 = 0.0;
    for (alpha, e0, target) in [(0.99, 1.0, 0.2), (0.9, 0.0, 2.0)] {
        let mut t = one_block(alpha);
        t.observe(&[e0]).unwrap();
        for step in 1..=300 {
            t.observe(&[target]).unwrap();
            let got = (t.blocks()[0].ema - target).abs();
            worst = worst.max((got - alpha.powi(step) * (e0 - target).abs()).abs());
        }
    }
    ensure(worst <= 1e-12, format!("contraction gap {worst:e}"))?;
    let bound = 3.0 * (1.0f64 / 12.0).sqrt() * (0.01f64 / 1.99).sqrt();
    let mut passes = 0;
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let mut t = one_block(0.99);
        for _ in 0..2000 {
            t.observe(&[rng.gen::<f64>()]).unwrap();
        }
        passes += usize::from((t.blocks()[0].ema - 0.5).abs() < bound);
    }
    ensure(passes >= 19, format!("consistency {passes}/20"))?;
    Ok(format!("contraction gap {worst:.1e}, consistency {passes}/20"))
}

/// Ratio of per-block reconstruction gradients under tracker weights and a
/// global weight, on the trained model's predictions for real tiles.
fn gradient_ratio(trained: &Trained, ds: &abyss_core::Dataset) -> Check {
    let cfg = trained.model.config().clone();
    let model: Model<f64> = Model::from_parts(cfg.clone(), trained.model.params().cast()).map_err(|e| e.to_string())?;
    let batch: Vec<&abyss_core::TilePair> = ds.val.iter().take(4).collect();
    let lr: Tensor<f64> = lr_batch(&batch).unwrap().cast();
    let hr: Tensor<f64> = hr_batch(&batch).unwrap().cast();
    let preds = abyss_train::train::predict_tiles(&trained.model, &ds.val[..4]).unwrap();
    let tracker = &trained.tracker;
    let (by, bx) = tracker.block_dims();
    let mut u = Vec::new();
    for (t, p) in batch.iter().zip(&preds) {
        u.extend(tracker.loss_weights(tracker.block_errors(&t.hr, p).unwrap().values()).unwrap());
    }
    let u_g = u.iter().sum::<f64>() / u.len() as f64;
    let grad = |w: Tensor<f64>| {
        let mut g = Graph::new();
        let bound = model.params().bind_frozen(&mut g);
        let out = model.forward(&mut g, &bound, &lr).unwrap();
        let frozen = g.value(out.pred).clone();
        let pred = g.leaf(frozen, true);
        let terms = total_loss(&mut g, pred, &hr, &w, None, None, &cfg).unwrap();
        g.backward(terms.recon).wrt(pred).unwrap().clone()
    };
    let n = batch.len();
    let blocked = grad(Tensor::new(&[n, by, bx], u.clone()).unwrap());
    let global = grad(Tensor::full(&[n, by, bx], u_g));
    let side = ds.manifest.tile_size;
    let k = side / by;
    let mut worst: f64 = 0.0;
    for (i, ui) in u.iter().enumerate() {
        let (b, rest) = (i / (by * bx), i % (by * bx));
        let (yb, xb) = (rest / bx, rest % bx);
        let norm = |t: &Tensor<f64>| {
            let mut s = 0.0;
            for y in yb * k..(yb + 1) * k {
                for x in xb * k..(xb + 1) * k {
                    s += t.data()[b * side * side + y * side + x].powi(2);
                }
            }
            s.sqrt()
        };
        let (nb, ng) = (norm(&blocked), norm(&global));
        if ng > 0.0 {
            worst = worst.max((nb / ng / (ui / u_g) - 1.0).abs());
        }
    }
    ensure(worst <= 1e-6, format!("relative gap {worst:e}"))?;
    Ok(format!("{} blocks, worst relative gap {worst:.1e}", u.len()))
}

struct FdProblem {
    lr: Tensor<f64>,
    hr: Tensor<f64>,
    weights: Tensor<f64>,
}

fn loss_grads<T: Scalar>(model: &Model<T>, p: &FdProblem) -> (f64, Vec<Option<Tensor<T>>>) {
    let mut g = Graph::new();
    let bound = model.params().bind(&mut g);
    let out = model.forward(&mut g, &bound, &p.lr.cast()).unwrap();
    let (vq, div) = out.quant.as_ref().map_or((None, None), |q| (Some(q.l_vq), Some(q.l_div)));
    let terms = total_loss(&mut g, out.pred, &p.hr.cast(), &p.weights.cast(), vq, div, model.config()).unwrap();
    let grads = g.backward(terms.total);
    (terms.total_value(&g), bound.grads(&grads).into_iter().map(|o| o.cloned()).collect())
}

fn fd_relative_error(kind: ModelKind) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let cfg = ModelConfig {
        kind,
        hidden_dims: vec![4, 8],
        n_residual_blocks: 2,
        srcnn_channels: 4,
        codebook_size: 8,
        embed_dim: 4,
        seed: 5,
        ..ModelConfig::default()
    };
    let mut model: Model<f64> = Model::new(cfg).unwrap();
    for name in ["out.weight", "out.bias"] {
        let id = model.params().find(name).unwrap();
        model.params_mut().get_mut(id).data_mut().iter_mut().for_each(|v| *v = rng.gen_range(-0.3..0.3));
    }
    let mut tensor = |shape: &[usize], lo: f64, hi: f64| {
        let n = shape.iter().product();
        Tensor::new(shape, (0..n).map(|_| rng.gen_range(lo..hi)).collect()).unwrap()
    };
    let p = FdProblem {
        lr: tensor(&[2, 1, 8, 8], 0.1, 0.9),
        hr: tensor(&[2, 1, 16, 16], 0.1, 0.9),
        weights: tensor(&[2, 4, 4], 0.1, 10.0),
    };
    // Encoder and codebook gradients are straight-through / surrogate
    // gradients by design, so only decoder parameters are compared there.
    let decoder = model.decoder_param_names();
    let mut coords: Vec<(ParamId, usize)> = Vec::new();
    for (id, name, t) in model.params().iter() {
        if kind == ModelKind::UaSrcnn || decoder.iter().any(|d| d == name) {
            coords.extend((0..t.numel()).map(|j| (id, j)));
        }
    }
    coords.shuffle(&mut ChaCha8Rng::seed_from_u64(7));
    coords.truncate(16);
    let h = 1e-5;
    let fd: Vec<f64> = coords
        .iter()
        .map(|&(id, j)| {
            let mut m = model.clone();
            m.params_mut().get_mut(id).data_mut()[j] += h;
            let plus = loss_grads(&m, &p).0;
            m.params_mut().get_mut(id).data_mut()[j] -= 2.0 * h;
            (plus - loss_grads(&m, &p).0) / (2.0 * h)
        })
        .collect();
    let m32: Model<f32> = Model::from_parts(model.config().clone(), model.params().cast()).unwrap();
    let (_, g32) = loss_grads(&m32, &p);
    let a32: Vec<f64> = coords.iter().map(|&(id, j)| g32[id.0].as_ref().unwrap().data()[j] as f64).collect();
    let diff: f64 = a32.iter().zip(&fd).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    diff / fd.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn autodiff_fidelity() -> Check {
    let e_srcnn = fd_relative_error(ModelKind::UaSrcnn);
    let e_vq = fd_relative_error(ModelKind::UaVqvae);
    ensure(e_srcnn < 1e-3 && e_vq < 1e-3, format!("relative errors {e_srcnn:e} / {e_vq:e}"))?;

    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let cb = Tensor::new(&[6, 3], (0..18).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
    let z = Tensor::new(&[10, 3], (0..30).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
    let mut g: Graph<f32> = Graph::new();
    let cbv = g.leaf(cb, false);
    let zv = g.leaf(z, true);
    let q = quantize(&mut g, cbv, zv, 0.25, 1.0).unwrap();
    let s = g.sigmoid(q.z_q);
    let sq = g.square(s);
    let loss = g.mean(sq);
    let grads = g.backward(loss);
    let same = grads.wrt(zv).unwrap().data() == grads.wrt(q.z_q).unwrap().data();
    ensure(same, "straight-through gradient differs from the z_q gradient")?;
    Ok(format!("f32 vs FD: srcnn {e_srcnn:.1e}, vqvae decoder {e_vq:.1e}; straight-through exact"))
}

fn overall_row<'a>(report: &'a Report, method: &str) -> &'a abyss_core::MetricsRow {
    report.rows.iter().find(|r| r.method == method && r.region == OVERALL).unwrap()
}

fn calibration_coverage(report: &Report) -> Check {
    let c = report
        .metadata
        .coverage
        .iter()
        .find(|c| c.method == "ua_vqvae" && c.region == OVERALL)
        .ok_or("no coverage record")?;
    let ok = (0.85..=0.95).contains(&c.coverage) && c.block_observations >= 2000;
    let detail = format!("coverage {:.4} over {} block observations", c.coverage, c.block_observations);
    ensure(ok, detail.clone())?;
    Ok(detail)
}

fn block_size_trend(trained: &Trained, ds: &abyss_core::Dataset, cfg: &ExperimentConfig) -> Check {
    let mut cfg = cfg.clone();
    cfg.sweep.block_sizes = vec![1, 2, 4, 8, 16];
    cfg.sweep.retrain = false;
    let outcome = block_size_sweep(ds, &cfg, ModelKind::UaVqvae, Some(trained)).map_err(|e| e.to_string())?;
    let u = outcome.uwidths();
    let listing = u.iter().map(|(k, w)| format!("k={k}:{w:.5}")).collect::<Vec<_>>().join(" ");
    let inversions = u.windows(2).filter(|p| p[1].1 > p[0].1).count();
    let ok = u.last().unwrap().1 < u[0].1 && inversions <= 1;
    ensure(ok, format!("UWidth {listing}; {inversions} increases"))?;
    Ok(format!("UWidth {listing}"))
}

fn reconstruction_ordering(report: &Report) -> Check {
    let (vq, bc) = (overall_row(report, "ua_vqvae"), overall_row(report, "bicubic"));
    let detail = format!(
        "SSIM {:.4} vs bicubic {:.4} (gap {:.4}), MSE {:.3e} vs {:.3e}",
        vq.ssim,
        bc.ssim,
        vq.ssim - bc.ssim,
        vq.mse,
        bc.mse
    );
    ensure(vq.ssim - bc.ssim >= 0.03 && vq.mse < bc.mse, detail.clone())?;
    Ok(detail)
}

fn block_size_oracle(report: &Report) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let step = 1e-3;
    let grid: Vec<f64> = (1..=10_000).map(|i| i as f64 * step).collect();
    for _ in 0..20 {
        let k = rng.gen_range(0.1..5.0);
        let lambda = 10f64.powf(rng.gen_range(-2.0..0.5));
        let sigma2 = (k * k * lambda).powi(2);
        let numeric = argmin_block_size(sigma2, lambda, &grid).map_err(|e| e.to_string())?;
        let exact = block_size_mse_stationary(sigma2, lambda).map_err(|e| e.to_string())?;
        ensure((numeric - exact).abs() <= step, format!("argmin {numeric} vs {exact}"))?;
    }
    let a = report.metadata.block_size_analysis.as_ref().ok_or("report lacks the block-size analysis")?;
    let ratio_ok = (a.closed_form_ratio - 2f64.powf(-0.25)).abs() < 1e-12;
    ensure(ratio_ok, format!("recorded ratio {}", a.closed_form_ratio))?;
    Ok(format!(
        "20/20 within one grid step; desk closed form {:.3}, stationary {:.3}, ratio {:.6}",
        a.closed_form, a.stationary_point, a.closed_form_ratio
    ))
}

fn determinism() -> Check {
    let mut cfg = ExperimentConfig::default();
    cfg.train.epochs = 2;
    cfg.eval.methods = vec![Method::Bicubic, Method::UaVqvae];
    let cfg = cfg.resolve().map_err(|e| e.to_string())?;
    let run = || rows_to_csv(&pipeline::run_experiment(&cfg).unwrap().0.rows).unwrap();
    let (a, b) = (run(), run());
    ensure(a == b, "report.csv differs between runs")?;
    Ok(format!("{} identical CSV bytes (2-epoch runs)", a.len()))
}

fn main() {
    let mut outcomes = Vec::new();
    let (r, t) = timed(metric_correctness);
    outcomes.push(record(1, "metric correctness", 5, t, r));
    let (r, t) = timed(interpolation_exactness);
    outcomes.push(record(2, "interpolation exactness", 5, t, r));
    let (r, t) = timed(block_decomposition);
    outcomes.push(record(3, "block decomposition identity", 5, t, r));
    let (r, t) = timed(ema_recurrence);
    outcomes.push(record(4, "EMA recurrence", 10, t, r));

    let cfg = ExperimentConfig { eval: abyss_train::EvalConfig { methods: vec![Method::Bicubic, Method::UaVqvae], ..Default::default() }, ..Default::default() }
        .resolve()
        .unwrap();
    let ds = pipeline::synthesize(&cfg).unwrap().normalized().unwrap();
    let (trained, t_train) = timed(|| train_and_calibrate(&ds, &cfg, ModelKind::UaVqvae, None).unwrap());
    let (report, t_eval) =
        timed(|| pipeline::evaluate_methods(&ds, &cfg, &[(ModelKind::UaVqvae, &trained)]).unwrap());
    let desk_time = t_train + t_eval;

    let (r, t) = timed(|| gradient_ratio(&trained, &ds));
    outcomes.push(record(5, "gradient ratio", 30, t, r));
    let (r, t) = timed(autodiff_fidelity);
    outcomes.push(record(6, "autodiff fidelity", 60, t, r));
    outcomes.push(record(7, "calibration coverage", 900, desk_time, calibration_coverage(&report)));
    let (r, t) = timed(|| block_size_trend(&trained, &ds, &cfg));
    outcomes.push(record(8, "block-size trend", 2700, t, r));
    outcomes.push(record(9, "reconstruction ordering", 900, desk_time, reconstruction_ordering(&report)));
    let (r, t) = timed(|| block_size_oracle(&report));
    outcomes.push(record(10, "block-size optimality oracle", 5, t, r));
    let (r, t) = timed(determinism);
    outcomes.push(record(11, "determinism", 2 * desk_time.as_secs().max(1), t, r));

    let passed = outcomes.iter().filter(|o| o.passed).count();
    println!("acceptance: {passed}/{} PASS", outcomes.len());
    if passed < outcomes.len() && std::env::var("ABYSS_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1") {
        std::process::exit(1);
    }
}
