use abyss_nn::quantizer::{nearest_entry, usage_divergence};
use abyss_nn::{quantize, Graph, Tensor};
use proptest::prelude::*;

fn rows(d: usize, data: &[f64]) -> Tensor<f64> {
    Tensor::new(&[data.len() / d, d], data.to_vec()).unwrap()
}

fn run(codebook: &Tensor<f64>, z: &Tensor<f64>) -> (Vec<usize>, Vec<f64>, f64, f64) {
    let mut g = Graph::new();
    let cb = g.leaf(codebook.clone(), true);
    let zv = g.leaf(z.clone(), true);
    let q = quantize(&mut g, cb, zv, 0.25, 1.0).unwrap();
    (q.indices, g.value(q.z_q).data().to_vec(), g.value(q.l_vq).item(), g.value(q.l_div).item())
}

#[test]
fn picks_nearest_entry() {
    let cb = rows(2, &[0.0, 0.0, 1.0, 1.0]);
    let (idx, zq, _, _) = run(&cb, &rows(2, &[0.9, 0.8]));
    assert_eq!(idx, vec![1]);
    assert_eq!(zq, vec![1.0, 1.0]);
}

#[test]
fn exact_match_has_zero_vq_loss() {
    let cb = rows(2, &[0.0, 0.0, 1.0, 1.0]);
    let (idx, _, l_vq, _) = run(&cb, &rows(2, &[0.0, 0.0]));
    assert_eq!(idx, vec![0]);
    assert_eq!(l_vq, 0.0);
}

#[test]
fn ties_go_to_lowest_index() {
    let cb = rows(2, &[0.0, 0.0, 1.0, 1.0]);
    assert_eq!(run(&cb, &rows(2, &[0.5, 0.5])).0, vec![0]);
    let dup = rows(1, &[3.0, 3.0, 3.0]);
    assert_eq!(nearest_entry(&dup, &[2.0]), 0);
}

#[test]
fn vq_loss_is_mean_squared_norm_with_commitment() {
    let cb = rows(2, &[0.0, 0.0, 4.0, 4.0]);
    // Squared distances 0.25 and 1.0; mean 0.625, times (1 + 0.25).
    let (_, _, l_vq, _) = run(&cb, &rows(2, &[0.5, 0.0, 0.0, 1.0]));
    assert!((l_vq - 0.625 * 1.25).abs() < 1e-12);
}

#[test]
fn rejects_dimension_mismatch() {
    let mut g: Graph<f64> = Graph::new();
    let cb = g.leaf(rows(2, &[0.0, 0.0, 1.0, 1.0]), true);
    let z = g.leaf(rows(3, &[0.0, 0.0, 1.0]), true);
    assert!(quantize(&mut g, cb, z, 0.25, 1.0).is_err());
}

#[test]
fn straight_through_passes_gradients_unchanged() {
    let cb = rows(3, &[0.1, -0.2, 0.3, 0.9, 0.4, -0.5, -0.7, 0.2, 0.8]);
    let z = rows(3, &[0.2, -0.1, 0.1, 0.5, 0.5, -0.2, -0.9, 0.0, 0.9, 0.3, 0.3, 0.3]);
    let downstream = |g: &mut Graph<f64>, x| {
        let s = g.sigmoid(x);
        let sq = g.square(s);
        g.mean(sq)
    };
    let mut g = Graph::new();
    let cbv = g.leaf(cb.clone(), false);
    let zv = g.leaf(z, true);
    let q = quantize(&mut g, cbv, zv, 0.25, 1.0).unwrap();
    let loss = downstream(&mut g, q.z_q);
    let grads = g.backward(loss);

    let mut h = Graph::new();
    let zq = h.leaf(g.value(q.z_q).clone(), true);
    let loss2 = downstream(&mut h, zq);
    let grads2 = h.backward(loss2);
    assert_eq!(grads.wrt(zv).unwrap().data(), grads2.wrt(zq).unwrap().data());
    assert_eq!(grads.wrt(q.z_q).unwrap().data(), grads.wrt(zv).unwrap().data());
}

#[test]
fn diversity_gradient_reaches_codebook_only() {
    let cb = rows(2, &[0.0, 0.0, 1.0, 1.0, 2.0, 0.0]);
    let z = rows(2, &[0.1, 0.0, 0.2, 0.1, 0.9, 1.0]);
    let mut g = Graph::new();
    let cbv = g.leaf(cb, true);
    let zv = g.leaf(z, true);
    let q = quantize(&mut g, cbv, zv, 0.25, 1.0).unwrap();
    let grads = g.backward(q.l_div);
    assert!(grads.wrt(zv).is_none());
    assert!(grads.wrt(cbv).unwrap().data().iter().any(|v| *v != 0.0));
    assert_eq!(g.value(q.l_div).item(), usage_divergence(&q.usage));
}

#[test]
fn diversity_is_zero_exactly_at_uniform_usage() {
    assert_eq!(usage_divergence(&[3, 3, 3, 3]), 0.0);
    let cb = rows(1, &[0.0, 1.0]);
    let (_, _, _, l_div) = run(&cb, &rows(1, &[0.1, 0.9]));
    assert_eq!(l_div, 0.0);
    let (_, _, _, l_div) = run(&cb, &rows(1, &[0.1, 0.2]));
    assert!((l_div - 2f64.ln()).abs() < 1e-12);
}

proptest! {
    #[test]
    fn diversity_bounds(usage in prop::collection::vec(0usize..20, 2..16)) {
        prop_assume!(usage.iter().sum::<usize>() > 0);
        let d = usage_divergence(&usage);
        let k = usage.len() as f64;
        prop_assert!(d >= 0.0 && d <= k.ln() + 1e-12);
        let uniform = usage.iter().all(|&c| c == usage[0]);
        if !uniform {
            prop_assert!(d > 0.0);
        }
    }

    #[test]
    fn permuting_codebook_permutes_indices(
        entries in prop::collection::vec(-1.0f64..1.0, 18),
        zs in prop::collection::vec(-1.0f64..1.0, 15),
        perm_seed in any::<u64>(),
    ) {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let cb = rows(3, &entries);
        let z = rows(3, &zs);
        let mut perm: Vec<usize> = (0..6).collect();
        perm.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(perm_seed));
        // Row r of the permuted codebook is row perm[r] of the original.
        let permuted: Vec<f64> = perm.iter().flat_map(|&r| entries[r * 3..r * 3 + 3].to_vec()).collect();
        let (idx_a, zq_a, vq_a, _) = run(&cb, &z);
        let (idx_b, zq_b, vq_b, _) = run(&rows(3, &permuted), &z);
        for (a, b) in idx_a.iter().zip(&idx_b) {
            prop_assert_eq!(perm[*b], *a);
        }
        prop_assert_eq!(zq_a, zq_b);
        prop_assert_eq!(vq_a, vq_b);
    }
}
