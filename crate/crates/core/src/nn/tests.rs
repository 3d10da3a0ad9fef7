use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;

fn random(shape: &[usize], rng: &mut impl Rng) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

#[test]
fn linear_examples() {
    let x = Tensor::from_rows(&[vec![1.0, 2.0]]).unwrap();
    let w = Tensor::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
    assert_eq!(linear(&x, &w, None).unwrap().data(), &[1.0, 2.0]);

    let x = Tensor::from_rows(&[vec![1.0, 1.0]]).unwrap();
    let w = Tensor::from_rows(&[vec![2.0], vec![3.0]]).unwrap();
    let b = Tensor::vector(vec![1.0]);
    assert_eq!(linear(&x, &w, Some(&b)).unwrap().data(), &[6.0]);

    assert!(linear(&x, &Tensor::zeros(&[3, 1]), None).is_err());
}

#[test]
fn linear_matches_triple_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x = random(&[3, 4], &mut rng);
    let w = random(&[4, 2], &mut rng);
    let b = random(&[2], &mut rng);
    let y = linear(&x, &w, Some(&b)).unwrap();
    for i in 0..3 {
        for j in 0..2 {
            let mut acc = b.data()[j];
            for k in 0..4 {
                acc += x.data()[i * 4 + k] * w.data()[k * 2 + j];
            }
            assert!((y.data()[i * 2 + j] - acc).abs() < 1e-12);
        }
    }
}

#[test]
fn activation_examples() {
    let s = softmax(&Tensor::vector(vec![0.0, 0.0]));
    assert_eq!(s.data(), &[0.5, 0.5]);
    assert_eq!(swish(&Tensor::vector(vec![0.0])).data(), &[0.0]);

    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let x = random(&[5, 17], &mut rng);
    let sm = softmax(&x);
    for r in 0..5 {
        assert!(sm.row(r).iter().all(|&p| p >= 0.0));
        assert!((sm.row(r).iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
    let ln = layer_norm(&x);
    for r in 0..5 {
        let row = ln.row(r);
        let mean = row.iter().sum::<f64>() / row.len() as f64;
        let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / row.len() as f64;
        assert!(mean.abs() < 1e-10);
        assert!((var - 1.0).abs() < 1e-8);
    }
    let gn = group_norm(&random(&[2, 12], &mut rng), 3).unwrap();
    for g in gn.data().chunks(4) {
        assert!(g.iter().sum::<f64>().abs() < 1e-10);
    }
    assert!(group_norm(&x, 4).is_err());
}

/// Central finite-difference check of `f(params) = sum_i w_i out_i` against the tape.
fn check_gradient(
    store: &ParameterStore,
    build: &dyn Fn(&mut Graph, &ParameterStore) -> Var,
    seed: u64,
) {
    let mut g = Graph::new();
    let out = build(&mut g, store);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = random(&[g.value(out).len()], &mut rng);
    let grads = g.backward(&[(out, w.clone())], store).unwrap();
    let analytic = grads.flatten();

    let f = |flat: &[f64]| {
        let mut s = store.clone();
        s.set_flat(flat).unwrap();
        let mut g = Graph::new();
        let out = build(&mut g, &s);
        g.value(out).data().iter().zip(w.data()).map(|(a, b)| a * b).sum::<f64>()
    };
    let base = store.to_flat();
    let h = 1e-4;
    for i in 0..base.len() {
        let mut p = base.clone();
        p[i] += h;
        let fp = f(&p);
        p[i] -= 2.0 * h;
        let fm = f(&p);
        let fd = (fp - fm) / (2.0 * h);
        let err = (fd - analytic[i]).abs();
        let scale = fd.abs().max(analytic[i].abs()).max(1e-3);
        assert!(err / scale <= 1e-4, "param {i}: fd {fd} vs tape {}", analytic[i]);
    }
}

#[test]
fn single_linear_gradient_is_outer_product() {
    let mut store = ParameterStore::new();
    let w = store.add("w", Tensor::zeros(&[3, 2]));
    let x = Tensor::from_rows(&[vec![1.0, -2.0, 0.5]]).unwrap();
    let mut g = Graph::new();
    let xv = g.constant(x.clone());
    let wv = g.param(&store, w);
    let y = g.matmul(xv, wv).unwrap();
    let grads = g.backward(&[(y, Tensor::vector(vec![1.0, 1.0]))], &store).unwrap();
    assert_eq!(grads.get(w).data(), &[1.0, 1.0, -2.0, -2.0, 0.5, 0.5]);

    let grads = g.backward(&[(y, Tensor::vector(vec![0.0, 0.0]))], &store).unwrap();
    assert!(grads.get(w).data().iter().all(|&v| v == 0.0));
}

#[test]
fn dense_ops_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut store = ParameterStore::new();
    let x = store.add("x", random(&[6, 4], &mut rng));
    let w = store.add("w", random(&[4, 4], &mut rng));
    let b = store.add("b", random(&[4], &mut rng));
    let gain = store.add("g", random(&[4], &mut rng));
    let build = move |g: &mut Graph, s: &ParameterStore| {
        let xv = g.param(s, x);
        let wv = g.param(s, w);
        let bv = g.param(s, b);
        let gv = g.param(s, gain);
        let h = g.matmul(xv, wv).unwrap();
        let h = g.add_row(h, bv).unwrap();
        let n = g.row_norm(h, 2).unwrap();
        let n = g.mul_row(n, gv).unwrap();
        let a = g.unary(n, Activation::Gelu);
        let s1 = g.unary(h, Activation::Swish);
        let t = g.unary(xv, Activation::Tanh);
        let sg = g.unary(t, Activation::Sigmoid);
        let m = g.mul(a, s1).unwrap();
        let m = g.add(m, sg).unwrap();
        let m = g.scale(m, 0.7);
        let left = g.slice_cols(m, 0, 1).unwrap();
        let right = g.slice_cols(m, 1, 4).unwrap();
        g.concat_cols(&[right, left]).unwrap()
    };
    check_gradient(&store, &build, 10);
}

#[test]
fn sequence_ops_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut store = ParameterStore::new();
    let seq = 3;
    let q = store.add("q", random(&[2 * seq, 4], &mut rng));
    let k = store.add("k", random(&[2 * seq, 4], &mut rng));
    let v = store.add("v", random(&[2 * seq, 2], &mut rng));
    let table = store.add("emb", random(&[5, 4], &mut rng));
    let build = move |g: &mut Graph, s: &ParameterStore| {
        let qv = g.param(s, q);
        let kv = g.param(s, k);
        let vv = g.param(s, v);
        let tv = g.param(s, table);
        let e = g.gather(tv, &[4, 0, 1, 4, 3, 3]).unwrap();
        let qv = g.add(qv, e).unwrap();
        let qr = g.rotate(qv, seq, &[0.3, 1.1]).unwrap();
        let kr = g.rotate(kv, seq, &[0.3, 1.1]).unwrap();
        let r = g.retention(qr, kr, vv, seq, 0.8).unwrap();
        let a = g.attention(qv, kv, vv, seq).unwrap();
        let o = g.add(r, a).unwrap();
        let flat = g.reshape(o, vec![12]).unwrap();
        g.segment_sum(flat, 3, 0.5).unwrap()
    };
    check_gradient(&store, &build, 11);
}

#[test]
fn token_log_prob_gradient_and_masking() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut store = ParameterStore::new();
    let logits = store.add("l", random(&[3, 4], &mut rng));
    let masks = [[true; 4], [true, false, true, false], [false, false, false, true]];
    let targets = [1u8, 2, 3];
    let build = move |g: &mut Graph, s: &ParameterStore| {
        let l = g.param(s, logits);
        g.token_log_prob(l, &targets, &masks).unwrap()
    };
    check_gradient(&store, &build, 12);

    let mut g = Graph::new();
    let l = g.param(&store, logits);
    let lp = g.token_log_prob(l, &targets, &masks).unwrap();
    // a single allowed entry has probability one
    assert_eq!(g.value(lp).data()[2], 0.0);
    assert!(g.token_log_prob(l, &[1, 1, 3], &masks).is_err());
}

#[test]
fn rotation_preserves_row_norms() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let x = random(&[8, 6], &mut rng);
    let mut g = Graph::new();
    let xv = g.constant(x.clone());
    let r = g.rotate(xv, 4, &[0.1, 0.01, 0.001]).unwrap();
    for row in 0..8 {
        let a: f64 = x.row(row).iter().map(|v| v * v).sum();
        let b: f64 = g.value(r).row(row).iter().map(|v| v * v).sum();
        assert!((a - b).abs() < 1e-12);
    }
}
