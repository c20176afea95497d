use abyss_core::metrics::{
    calibration_error, coverage, mae, mse, psnr, psnr_from_mse, ssim, uncertainty_width,
};
use abyss_core::{Bounds, DepthGrid};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_grid(rng: &mut ChaCha8Rng, h: usize, w: usize) -> DepthGrid {
    DepthGrid::from_fn(h, w, |_, _| rng.gen::<f64>()).unwrap()
}

fn naive_mse(a: &DepthGrid, b: &DepthGrid) -> f64 {
    let mut s = 0.0;
    for y in 0..a.height() {
        for x in 0..a.width() {
            let d = a.get(y, x) - b.get(y, x);
            s += d * d;
        }
    }
    s / (a.height() * a.width()) as f64
}

fn naive_mae(a: &DepthGrid, b: &DepthGrid) -> f64 {
    let mut s = 0.0;
    for y in 0..a.height() {
        for x in 0..a.width() {
            s += (a.get(y, x) - b.get(y, x)).abs();
        }
    }
    s / (a.height() * a.width()) as f64
}

/// Direct per-window evaluation with a 2-D Gaussian built from scratch.
fn naive_ssim(a: &DepthGrid, b: &DepthGrid) -> f64 {
    const N: usize = 11;
    let (c1, c2) = (0.01f64.powi(2), 0.03f64.powi(2));
    let mut win = [[0.0; N]; N];
    let mut total = 0.0;
    for (i, row) in win.iter_mut().enumerate() {
        for (j, w) in row.iter_mut().enumerate() {
            let (di, dj) = (i as f64 - 5.0, j as f64 - 5.0);
            *w = (-(di * di + dj * dj) / (2.0 * 1.5 * 1.5)).exp();
            total += *w;
        }
    }
    let (oh, ow) = (a.height() - N + 1, a.width() - N + 1);
    let mut acc = 0.0;
    for oy in 0..oh {
        for ox in 0..ow {
            let (mut mx, mut my) = (0.0, 0.0);
            for i in 0..N {
                for j in 0..N {
                    let w = win[i][j] / total;
                    mx += w * a.get(oy + i, ox + j);
                    my += w * b.get(oy + i, ox + j);
                }
            }
            let (mut vx, mut vy, mut cxy) = (0.0, 0.0, 0.0);
            for i in 0..N {
                for j in 0..N {
                    let w = win[i][j] / total;
                    let dx = a.get(oy + i, ox + j) - mx;
                    let dy = b.get(oy + i, ox + j) - my;
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

#[test]
fn metrics_match_double_loop_oracles() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..50 {
        let a = random_grid(&mut rng, 16, 16);
        let b = random_grid(&mut rng, 16, 16);
        assert!((ssim(&a, &b).unwrap() - naive_ssim(&a, &b)).abs() < 1e-9);
        assert!((mse(&a, &b).unwrap() - naive_mse(&a, &b)).abs() < 1e-12);
        assert!((mae(&a, &b).unwrap() - naive_mae(&a, &b)).abs() < 1e-12);
        let expect = 10.0 * (1.0 / naive_mse(&a, &b)).log10();
        assert!((psnr(&a, &b, 1.0).unwrap() - expect).abs() < 1e-9);
    }
}

#[test]
fn ssim_identity_and_constants() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let a = random_grid(&mut rng, 20, 13);
    assert!((ssim(&a, &a).unwrap() - 1.0).abs() < 1e-9);
    let x = DepthGrid::filled(11, 11, 0.5).unwrap();
    let y = DepthGrid::filled(11, 11, 0.25).unwrap();
    assert!((ssim(&x, &y).unwrap() - 0.80007).abs() < 1e-4);
    assert!((psnr_from_mse(0.01, 1.0) - 20.0).abs() < 1e-9);
}

#[test]
fn uniform_truth_coverage_monte_carlo() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let truth = random_grid(&mut rng, 100, 100);
    let bounds = Bounds::new(
        DepthGrid::filled(100, 100, 0.25).unwrap(),
        DepthGrid::filled(100, 100, 0.75).unwrap(),
    )
    .unwrap();
    let c = coverage(&truth, &bounds).unwrap();
    assert!((c - 0.5).abs() < 0.02, "{c}");
    assert!((calibration_error(c, 0.9) - 0.4).abs() < 0.02);
    assert!((uncertainty_width(&bounds.lower, &bounds.upper).unwrap() - 0.5).abs() < 1e-12);
}

fn grid_pair(h: usize, w: usize) -> impl Strategy<Value = (DepthGrid, DepthGrid)> {
    (prop::collection::vec(-2.0f64..2.0, h * w), prop::collection::vec(-2.0f64..2.0, h * w))
        .prop_map(move |(a, b)| (DepthGrid::new(h, w, a).unwrap(), DepthGrid::new(h, w, b).unwrap()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn ssim_is_symmetric((a, b) in grid_pair(12, 14)) {
        prop_assert!((ssim(&a, &b).unwrap() - ssim(&b, &a).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn metrics_are_transpose_invariant((a, b) in grid_pair(12, 15)) {
        let (at, bt) = (a.transpose(), b.transpose());
        prop_assert!((ssim(&a, &b).unwrap() - ssim(&at, &bt).unwrap()).abs() < 1e-12);
        prop_assert!((mse(&a, &b).unwrap() - mse(&at, &bt).unwrap()).abs() < 1e-12);
        prop_assert!((mae(&a, &b).unwrap() - mae(&at, &bt).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn psnr_decreases_with_mse(m1 in 1e-6f64..10.0, m2 in 1e-6f64..10.0) {
        prop_assume!(m1 < m2);
        prop_assert!(psnr_from_mse(m1, 1.0) > psnr_from_mse(m2, 1.0));
    }

    #[test]
    fn widening_bounds_never_lowers_coverage(
        (truth, pred) in grid_pair(6, 6),
        h in 0.0f64..1.0,
        extra in 0.0f64..1.0,
    ) {
        let band = |hw: f64| Bounds::new(pred.map(|v| v - hw).unwrap(), pred.map(|v| v + hw).unwrap()).unwrap();
        let narrow = coverage(&truth, &band(h)).unwrap();
        let wide = coverage(&truth, &band(h + extra)).unwrap();
        prop_assert!((0.0..=1.0).contains(&narrow));
        prop_assert!(wide >= narrow);
    }
}
