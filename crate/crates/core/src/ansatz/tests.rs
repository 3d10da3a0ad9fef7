use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::nn::{dot, Tensor};

fn random(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Tensor {
    Tensor::matrix(rows, cols, (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

fn head(d: usize, dh: usize, rng: &mut ChaCha8Rng) -> RetentionHead {
    RetentionHead {
        wq: random(d, dh, rng),
        wk: random(d, dh, rng),
        wv: random(d, dh, rng),
    }
}

#[test]
fn decays_and_frequencies() {
    assert_eq!(head_decays(2), vec![1.0 - 1.0 / 32.0, 1.0 - 1.0 / 64.0]);
    let th = rotary_thetas(8);
    assert_eq!(th.len(), 4);
    assert_eq!(th[0], 1.0);
    assert!((th[2] - 0.01).abs() < 1e-15);
}

#[test]
fn unit_decay_mask_sums_history() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x = random(2, 4, &mut rng);
    let h = head(4, 2, &mut rng);
    let out = parallel_retention(&x, &h, 1.0).unwrap();
    // with D = [[1,0],[1,1]] the second row sees both positions
    let (o0, s0) = recurrent_retention_step(x.row(0), &HeadState::zeros(2), &h, 1.0).unwrap();
    let (o1, s1) = recurrent_retention_step(x.row(1), &s0, &h, 1.0).unwrap();
    for c in 0..2 {
        assert!((out.row(0)[c] - o0[c]).abs() < 1e-12);
        assert!((out.row(1)[c] - o1[c]).abs() < 1e-12);
    }
    assert_eq!(s1.position, 2);
}

#[test]
fn zero_decay_attends_to_self() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let x = random(3, 4, &mut rng);
    let h = head(4, 4, &mut rng);
    let out = parallel_retention(&x, &h, 0.0).unwrap();
    let mut st = HeadState::zeros(4);
    for t in 0..3 {
        // fresh state at the same position isolates position t
        let fresh = HeadState { s: vec![0.0; 16], position: t };
        let (own, _) = recurrent_retention_step(x.row(t), &fresh, &h, 0.0).unwrap();
        let (o, s) = recurrent_retention_step(x.row(t), &st, &h, 0.0).unwrap();
        st = s;
        for c in 0..4 {
            assert!((out.row(t)[c] - own[c]).abs() < 1e-12);
            assert!((o[c] - own[c]).abs() < 1e-12);
        }
    }
}

#[test]
fn first_step_is_outer_product() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x = random(1, 4, &mut rng);
    let h = head(4, 2, &mut rng);
    let (o, s) = recurrent_retention_step(x.row(0), &HeadState::zeros(2), &h, 0.9).unwrap();
    // at position 0 the rotation is the identity
    let q = x.matmul(&h.wq).unwrap();
    let k = x.matmul(&h.wk).unwrap().map(|v| v / 2f64.sqrt());
    let v = x.matmul(&h.wv).unwrap();
    let qk = dot(q.data(), k.data());
    for c in 0..2 {
        assert!((o[c] - qk * v.data()[c]).abs() < 1e-12);
    }
    assert!((s.s[1] - k.data()[0] * v.data()[1]).abs() < 1e-15);
}

#[test]
fn negative_decay_rejected() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let x = random(2, 4, &mut rng);
    let h = head(4, 2, &mut rng);
    assert!(parallel_retention(&x, &h, -0.1).is_err());
    assert!(recurrent_retention_step(x.row(0), &HeadState::zeros(2), &h, 1.5).is_err());
}

#[test]
fn multiscale_forms_agree() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for n_heads in [1, 2, 4] {
        let (d, dh, n) = (8, 4, 6);
        let msr = MultiScaleRetention {
            heads: (0..n_heads).map(|_| head(d, dh, &mut rng)).collect(),
            gammas: head_decays(n_heads),
            wg: random(d, dh * n_heads, &mut rng),
            wo: random(dh * n_heads, d, &mut rng),
        };
        let x = random(n, d, &mut rng);
        let par = multiscale_retention(&x, &msr).unwrap();
        assert_eq!(par.shape(), &[n, d]);
        let mut st = msr.zero_state();
        for t in 0..n {
            let (o, s) = msr.step(x.row(t), &st).unwrap();
            st = s;
            for c in 0..d {
                assert!((par.row(t)[c] - o[c]).abs() < 1e-10);
            }
        }
    }
}

#[test]
fn kind_names_round_trip() {
    for k in AnsatzKind::ALL {
        assert_eq!(k.name().parse::<AnsatzKind>().unwrap(), k);
    }
    assert!("rnn".parse::<AnsatzKind>().is_err());
}

#[test]
fn config_validation() {
    let mut c = AnsatzConfig::default();
    assert!(c.validate().is_ok());
    c.n_heads = 3;
    assert!(c.validate().is_err());
    c.n_heads = 8;
    // head width 2 is even
    assert!(c.validate().is_ok());
    c.n_heads = 16;
    assert!(c.validate().is_err());
}

#[test]
fn log_amplitude_sentinel() {
    let z = LogAmplitude::ZERO;
    assert!(z.is_zero());
    assert_eq!(z.probability(), 0.0);
    assert_eq!(z.amplitude().norm(), 0.0);
    let a = LogAmplitude::new(-0.5, 0.3);
    assert!(a.ratio(&z).is_none());
    assert_eq!(z.ratio(&a).unwrap().norm(), 0.0);
    assert!((a.ratio(&a).unwrap().re - 1.0).abs() < 1e-15);
    assert!((wrap_phase(std::f64::consts::PI) + std::f64::consts::PI).abs() < 1e-15);
}
