mod common;

use std::f64::consts::PI;

use proptest::prelude::*;

use common::{random_ansatz, small_config};
use nqs_core::ansatz::{decode, encode, Ansatz, AnsatzConfig, AnsatzKind, Mode};
use nqs_core::basis::{all_configs, Sector, SpinConfig};
use nqs_core::flops::{param_count, ModelDims};
use nqs_core::oracle::fd_gradient;
use nqs_core::NqsError;

#[test]
fn probabilities_are_normalised_in_sector() {
    for kind in AnsatzKind::ALL {
        for seed in 0..3 {
            let a = random_ansatz(small_config(kind), 8, Some(Sector::new(2, 1)), seed, 0.8);
            let amps = a.log_amplitudes(&all_configs(8), Mode::Parallel).unwrap();
            let mut total = 0.0;
            for (x, amp) in all_configs(8).into_iter().zip(&amps) {
                let p = amp.probability();
                if x.n_up() != 2 || x.n_down() != 1 {
                    assert_eq!(p, 0.0);
                    assert!(amp.is_zero());
                }
                total += p;
            }
            assert!((total - 1.0).abs() < 1e-10, "{kind}: {total}");
        }
    }
}

#[test]
fn unconstrained_probabilities_are_normalised() {
    for kind in AnsatzKind::ALL {
        let a = random_ansatz(small_config(kind), 6, None, 7, 0.8);
        let total: f64 = a
            .log_amplitudes(&all_configs(6), Mode::Parallel)
            .unwrap()
            .iter()
            .map(|v| v.probability())
            .sum();
        assert!((total - 1.0).abs() < 1e-10);
    }
}

#[test]
fn single_orbital_log_modulus_is_half_log_conditional() {
    for kind in AnsatzKind::ALL {
        let a = Ansatz::new(small_config(kind), 2, None, 3).unwrap();
        let probs = a.conditionals(&[SpinConfig(0)], Mode::Parallel).unwrap()[0];
        let amps = a.log_amplitudes(&all_configs(2), Mode::Parallel).unwrap();
        for x in all_configs(2) {
            let t = encode(x, 2).unwrap()[0] as usize;
            assert!((amps[x.0 as usize].log_modulus - 0.5 * probs[t].ln()).abs() < 1e-12);
        }
        assert!(probs.iter().all(|&p| (p - 0.25).abs() < 1e-12), "{kind}: {probs:?}");
    }
}

#[test]
fn conditionals_are_distributions_with_exact_zeros() {
    let s = Sector::new(2, 2);
    for kind in AnsatzKind::ALL {
        let a = random_ansatz(small_config(kind), 8, Some(s), 11, 1.0);
        let xs = s.configs(8);
        let probs = a.conditionals(&xs, Mode::Parallel).unwrap();
        for (x, rows) in xs.iter().zip(probs.chunks(4)) {
            let toks = encode(*x, 8).unwrap();
            let mut up = 0;
            for (row, &t) in rows.iter().zip(&toks) {
                assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                assert!(row.iter().all(|&p| p >= 0.0));
                if up == 2 {
                    assert_eq!(row[2], 0.0);
                    assert_eq!(row[3], 0.0);
                }
                up += (t >> 1) as usize;
            }
        }
    }
}

#[test]
fn retnet_forms_agree() {
    for (seed, n_heads) in [(1, 1), (2, 2), (3, 4)] {
        let cfg = AnsatzConfig { n_heads, n_block: 2, ..small_config(AnsatzKind::Retnet) };
        let a = random_ansatz(cfg, 10, Some(Sector::new(2, 3)), seed, 0.7);
        let xs = Sector::new(2, 3).configs(10);
        let p = a.conditionals(&xs, Mode::Parallel).unwrap();
        let r = a.conditionals(&xs, Mode::Recurrent).unwrap();
        for (a, b) in p.iter().zip(&r) {
            for c in 0..4 {
                assert!((a[c] - b[c]).abs() < 1e-10);
            }
        }
        let lp = a.log_amplitudes(&xs, Mode::Parallel).unwrap();
        let lr = a.log_amplitudes(&xs, Mode::Recurrent).unwrap();
        for (a, b) in lp.iter().zip(&lr) {
            assert!((a.log_modulus - b.log_modulus).abs() < 1e-10);
            assert_eq!(a.phase, b.phase);
        }
    }
}

#[test]
fn recurrent_mode_is_retnet_only_and_not_differentiable() {
    let t = Ansatz::new(small_config(AnsatzKind::Transformer), 4, None, 0).unwrap();
    assert!(matches!(t.conditionals(&[SpinConfig(0)], Mode::Recurrent), Err(NqsError::Usage(_))));
    let r = Ansatz::new(small_config(AnsatzKind::Retnet), 4, None, 0).unwrap();
    let trace = r.forward(&[SpinConfig(0)], Mode::Recurrent).unwrap();
    assert!(!trace.is_differentiable());
    assert!(matches!(trace.grad(&r, &[1.0], &[1.0]), Err(NqsError::Usage(_))));
}

#[test]
fn conditionals_are_causal() {
    for kind in AnsatzKind::ALL {
        let a = random_ansatz(small_config(kind), 10, None, 5, 0.8);
        let base = SpinConfig(0b10_01_11_00_10);
        let pb = a.conditionals(&[base], Mode::Parallel).unwrap();
        for j in 0..5 {
            // sequence position j holds orbital 4 - j
            let p = 4 - j;
            let moved = SpinConfig(base.0 ^ (0b11 << (2 * p)));
            let pm = a.conditionals(&[moved], Mode::Parallel).unwrap();
            for pos in 0..=j {
                assert_eq!(pb[pos], pm[pos], "{kind}: token {j} leaked into {pos}");
            }
            if j < 4 && kind != AnsatzKind::Made {
                assert_ne!(pb[j + 1], pm[j + 1]);
            }
        }
    }
}

#[test]
fn trunk_matches_parameter_formula() {
    for (n_block, d_model, d_retn, d_ff) in [(1, 16, 16, 64), (2, 8, 16, 32), (3, 12, 6, 10)] {
        let cfg = AnsatzConfig { n_block, d_model, d_retn, d_ff, n_heads: 1, ..AnsatzConfig::default() };
        let a = Ansatz::new(cfg, 6, None, 0).unwrap();
        let dims = ModelDims {
            n_block: n_block as u64,
            d_model: d_model as u64,
            d_retn: d_retn as u64,
            d_ff: d_ff as u64,
            n_seq: 3,
        };
        assert_eq!(a.trunk_param_count() as u64, param_count(&dims));
    }
}

#[test]
fn zero_phase_weights_give_zero_phase() {
    let mut a = Ansatz::new(small_config(AnsatzKind::Retnet), 6, None, 0).unwrap();
    let names: Vec<String> = a.params().names().iter().filter(|n| n.starts_with("phase.")).cloned().collect();
    for n in names {
        let shape = a.params().get(a.params().id(&n).unwrap()).shape().to_vec();
        a.params_mut().set(&n, nqs_core::nn::Tensor::zeros(&shape)).unwrap();
    }
    assert!(a.phase(&all_configs(6)).unwrap().iter().all(|&p| p == 0.0));
}

#[test]
fn phase_stays_in_range() {
    let a = random_ansatz(small_config(AnsatzKind::Made), 8, None, 9, 5.0);
    for p in a.phase(&all_configs(8)).unwrap() {
        assert!((-PI..PI).contains(&p));
    }
}

fn fd_check(kind: AnsatzKind, phase: bool) {
    let s = Sector::new(2, 1);
    let a = random_ansatz(small_config(kind), 6, Some(s), 21, 0.6);
    let xs = s.configs(6);
    let w: Vec<f64> = (0..xs.len()).map(|i| ((i * 7 % 5) as f64 - 2.0) / 3.0).collect();
    let zeros = vec![0.0; xs.len()];
    let trace = a.forward(&xs, Mode::Parallel).unwrap();
    let grad = if phase { trace.grad(&a, &zeros, &w) } else { trace.grad(&a, &w, &zeros) }
        .unwrap()
        .flatten();
    let f = |p: &[f64]| {
        let mut b = a.clone();
        b.params_mut().set_flat(p).unwrap();
        let v = b.forward(&xs, Mode::Parallel).unwrap().values;
        v.iter().zip(&w).map(|(v, w)| w * if phase { v.phase } else { v.log_modulus }).sum()
    };
    let fd = fd_gradient(f, &a.params().to_flat(), 1e-4);
    let scale = fd.iter().map(|v| v.abs()).fold(0.0, f64::max);
    for (i, (g, d)) in grad.iter().zip(&fd).enumerate() {
        let err = (g - d).abs() / scale.max(1e-8);
        assert!(err < 1e-4, "{kind} param {i}: {g} vs {d}");
    }
}

#[test]
fn log_modulus_gradients_match_finite_differences() {
    for kind in AnsatzKind::ALL {
        fd_check(kind, false);
    }
}

#[test]
fn phase_gradients_match_finite_differences() {
    fd_check(AnsatzKind::Retnet, true);
}

#[test]
fn checkpoint_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    for kind in AnsatzKind::ALL {
        let a = random_ansatz(small_config(kind), 6, Some(Sector::new(1, 1)), 4, 0.5);
        let path = dir.path().join(format!("{kind}.json"));
        a.save(&path, 17).unwrap();
        let (b, step) = Ansatz::load(&path).unwrap();
        assert_eq!(step, 17);
        assert_eq!(a.params().to_flat(), b.params().to_flat());
        let xs = Sector::new(1, 1).configs(6);
        assert_eq!(
            a.log_amplitudes(&xs, Mode::Parallel).unwrap(),
            b.log_amplitudes(&xs, Mode::Parallel).unwrap()
        );
    }
}

#[test]
fn checkpoint_rejects_bad_shapes() {
    let a = Ansatz::new(small_config(AnsatzKind::Retnet), 4, None, 0).unwrap();
    let mut c = a.to_checkpoint(0);
    c.params[0].shape = vec![1, c.params[0].data.len()];
    assert!(Ansatz::from_checkpoint(&c).is_err());
    let mut c = a.to_checkpoint(0);
    c.params.pop();
    assert!(Ansatz::from_checkpoint(&c).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]
    #[test]
    fn encoding_round_trips(bits in 0u64..(1 << 14)) {
        let t = encode(SpinConfig(bits), 14).unwrap();
        prop_assert_eq!(t.len(), 7);
        prop_assert!(t.iter().all(|&v| v < 4));
        prop_assert_eq!(decode(&t), SpinConfig(bits));
    }
}
