use abyss_core::grid::{block_mse_decomposition, denormalize, normalize, partition, NormalizationParams};
use abyss_core::synth::{degrade, generate_bathymetry, read_tile, write_tile};
use abyss_core::{build_manifest, DataConfig, Dataset, DepthGrid, SyntheticSpec};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn decomposition_identity_on_random_cases() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..100 {
        let k = [1, 2, 4, 8][rng.gen_range(0..4)];
        let (h, w) = (k * rng.gen_range(1..6), k * rng.gen_range(1..6));
        let a = DepthGrid::from_fn(h, w, |_, _| rng.gen::<f64>()).unwrap();
        let b = DepthGrid::from_fn(h, w, |_, _| rng.gen::<f64>()).unwrap();
        let part = partition(h, w, k).unwrap();
        let d = block_mse_decomposition(&a, &b, &part).unwrap();
        let mut direct = 0.0;
        for y in 0..h {
            for x in 0..w {
                direct += (a.get(y, x) - b.get(y, x)).powi(2);
            }
        }
        direct /= (h * w) as f64;
        assert!((d.weighted_sum(&part) - direct).abs() < 1e-12);
        assert!((d.global - direct).abs() < 1e-12);
    }
}

fn spec(seed: u64) -> SyntheticSpec {
    SyntheticSpec {
        seed,
        size: 32,
        base_depth: -3800.0,
        relief_amplitude: 600.0,
        n_seamounts: 8,
        n_ridges: 4,
        n_trenches: 2,
        noise_sigma: 5.0,
    }
}

#[test]
fn mean_pooling_preserves_the_mean() {
    for seed in 0..5 {
        let hr = generate_bathymetry(&spec(seed)).unwrap();
        for s in [2, 4] {
            let lr = degrade(&hr, s).unwrap();
            assert!((lr.mean() - hr.mean()).abs() <= 1e-9 * hr.mean().abs());
        }
    }
}

#[test]
fn different_seeds_differ() {
    let a = generate_bathymetry(&spec(1)).unwrap();
    let b = generate_bathymetry(&spec(2)).unwrap();
    let differing = a.values().iter().zip(b.values()).filter(|(x, y)| x != y).count();
    assert!(differing * 100 >= a.len());
    assert_eq!(a, generate_bathymetry(&spec(1)).unwrap());
}

#[test]
fn manifest_splits_and_normalization() {
    let cfg = DataConfig { tile_size: 32, max_block_size: 8, ..DataConfig::default() };
    let ds = build_manifest(&cfg).unwrap();
    for (r, rc) in ds.manifest.regions.iter().zip(&cfg.regions) {
        let want = rc.tiles as f64 * 0.8;
        assert!((r.train_count as f64 - want).abs() <= 1.0, "{}", r.name);
        assert_eq!(r.train_count + r.val_count, rc.tiles);
    }
    let p = &ds.manifest.normalization;
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for t in &ds.train {
        for &v in t.hr.values() {
            let u = (p.z_score(v) - p.z_min) / (p.z_max - p.z_min);
            lo = lo.min(u);
            hi = hi.max(u);
        }
    }
    assert!(lo.abs() < 1e-12 && (hi - 1.0).abs() < 1e-12, "{lo} {hi}");
    let unit = ds.normalized().unwrap();
    for t in unit.train.iter().chain(&unit.val) {
        assert!(t.hr.values().iter().chain(t.lr.values()).all(|v| (0.0..=1.0).contains(v)));
    }
}

#[test]
fn constant_tiles_hit_the_std_floor() {
    let tiles = vec![DepthGrid::filled(4, 4, -100.0).unwrap(); 3];
    let p = NormalizationParams::fit(tiles.iter()).unwrap();
    assert_eq!(p.mean, -100.0);
    assert!(p.std > 0.0 && p.std < 1e-3);
}

#[test]
fn dataset_round_trips_through_disk() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = DataConfig { tile_size: 16, max_block_size: 4, ..DataConfig::default() };
    cfg.regions.truncate(2);
    cfg.regions.iter_mut().for_each(|r| r.tiles = 5);
    let ds = build_manifest(&cfg).unwrap();
    ds.save(dir.path()).unwrap();
    let back = Dataset::load(dir.path()).unwrap();
    assert_eq!(back.manifest, ds.manifest);
    for (a, b) in back.train.iter().chain(&back.val).zip(ds.train.iter().chain(&ds.val)) {
        assert_eq!(a.region, b.region);
        for (x, y) in a.hr.values().iter().zip(b.hr.values()) {
            assert_eq!(*x, *y as f32 as f64);
        }
    }
    let missing = dir.path().join("none.f32");
    let err = read_tile(&missing).unwrap_err().to_string();
    assert!(err.contains("none.f32"), "{err}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn partition_covers_every_pixel_once(kb in 1usize..6, by in 1usize..6, bx in 1usize..6) {
        let p = partition(kb * by, kb * bx, kb).unwrap();
        let mut hits = vec![0u8; kb * by * kb * bx];
        let mut total = 0;
        for i in 0..p.n_blocks {
            for (y, x) in p.pixels(i) {
                hits[y * kb * bx + x] += 1;
                total += 1;
            }
        }
        prop_assert_eq!(total, kb * by * kb * bx);
        prop_assert!(hits.iter().all(|h| *h == 1));
    }

    #[test]
    fn normalization_round_trip_and_monotone(
        values in prop::collection::vec(-8000.0f64..-10.0, 16),
        a in -8000.0f64..-10.0,
        b in -8000.0f64..-10.0,
    ) {
        let g = DepthGrid::new(4, 4, values).unwrap();
        let p = NormalizationParams::fit(std::iter::once(&g)).unwrap();
        let back = denormalize(&normalize(&g, &p).unwrap(), &p).unwrap();
        for (x, y) in g.values().iter().zip(back.values()) {
            prop_assert!((x - y).abs() <= 1e-9 * x.abs());
        }
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(p.normalize_value(lo) <= p.normalize_value(hi));
    }

    #[test]
    fn tile_files_keep_f32_values(values in prop::collection::vec(-1e4f64..1e4, 12)) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.f32");
        let g = DepthGrid::new(3, 4, values).unwrap();
        write_tile(&path, &g).unwrap();
        let back = read_tile(&path).unwrap();
        prop_assert_eq!(back.dims(), (3, 4));
        for (x, y) in g.values().iter().zip(back.values()) {
            prop_assert_eq!(*x as f32 as f64, *y);
        }
    }
}
