//! Acceptance gate. Each test prints one `[PASS]`/`[FAIL]` line with the
//! measured quantity and its tolerance, then asserts.
//!
//! The long training criteria are `#[ignore]`d; run them with
//! `cargo test --release --test acceptance -- --include-ignored --nocapture`.

mod common;

use std::io::Write;
use std::time::Instant;

use common::{hamiltonian, random_ansatz, reference_energy, small_config};
use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use nqs_core::ansatz::{Ansatz, AnsatzConfig, AnsatzKind, LogAmplitude, Mode};
use nqs_core::basis::{all_configs, Sector, SpinConfig};
use nqs_core::flops::{crossover_seq_len, flops_per_token, param_count, Form, ModelDims};
use nqs_core::hamiltonian::QubitHamiltonian;
use nqs_core::oracle::{self, DenseState};
use nqs_core::sampler::{sample, SampleOptions};
use nqs_core::vmc::{local_energies, local_energies_with, train, vna_gradient, TrainConfig};

/// Written to the raw stderr handle so the line survives output capture.
fn report(id: &str, name: &str, ok: bool, detail: String) {
    let line = format!("[{}] {id} {name}: {detail}\n", if ok { "PASS" } else { "FAIL" });
    let _ = std::io::stderr().write_all(line.as_bytes());
    assert!(ok, "{id} {name} failed: {detail}");
}

fn dense_state(a: &Ansatz) -> DenseState {
    oracle::enumerate_state(a.n_qubits(), a.sector(), |b| {
        a.log_amplitudes(b, Mode::Parallel).unwrap().iter().map(|l| l.amplitude()).collect()
    })
    .unwrap()
}

fn with_params(a: &Ansatz, p: &[f64]) -> Ansatz {
    let mut b = a.clone();
    b.params_mut().set_flat(p).unwrap();
    b
}

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let d = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    d / b.iter().map(|y| y * y).sum::<f64>().sqrt()
}

/// Enumeration-weighted estimator of the annealed gradient.
fn enumerated_gradient(h: &QubitHamiltonian, a: &Ansatz, beta: f64, baseline: f64) -> Vec<f64> {
    let psi = dense_state(a);
    let (mut xs, mut ws) = (vec![], vec![]);
    for (&x, p) in psi.basis.iter().zip(psi.probabilities()) {
        if p > 0.0 {
            xs.push(x);
            ws.push(p);
        }
    }
    let l = local_energies(h, &xs, a, 8).unwrap().values;
    vna_gradient(a, &xs, &ws, &l, beta, baseline).unwrap().flatten()
}

#[test]
fn c1_dual_form_identity() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut worst, mut draws) = (0.0f64, 0);
    for &d_model in &[8, 16, 32] {
        for &n_seq in &[4usize, 8, 16] {
            let cfg = AnsatzConfig { d_model, d_retn: d_model, d_ff: 2 * d_model, n_heads: 2, ..small_config(AnsatzKind::Retnet) };
            let per_cell = if d_model == 8 && n_seq == 4 { 24 } else { 22 };
            for _ in 0..per_cell {
                let a = random_ansatz(cfg.clone(), 2 * n_seq, None, rng.random(), 0.5);
                let xs: Vec<SpinConfig> = (0..4).map(|_| SpinConfig(rng.random::<u64>() >> (64 - 2 * n_seq))).collect();
                let par = a.conditionals(&xs, Mode::Parallel).unwrap();
                let rec = a.conditionals(&xs, Mode::Recurrent).unwrap();
                for (p, r) in par.iter().zip(&rec) {
                    for c in 0..4 {
                        worst = worst.max((p[c] - r[c]).abs());
                    }
                }
                let lp = a.log_amplitudes(&xs, Mode::Parallel).unwrap();
                let lr = a.log_amplitudes(&xs, Mode::Recurrent).unwrap();
                for (p, r) in lp.iter().zip(&lr) {
                    worst = worst.max((p.log_modulus - r.log_modulus).abs());
                }
                draws += 1;
            }
        }
    }
    report(
        "C1",
        "dual-form identity",
        draws == 200 && worst <= 1e-10,
        format!("{draws} draws, max |parallel - recurrent| = {worst:.2e} (tol 1e-10), {:.1?}", start.elapsed()),
    );
}

#[test]
fn c2_jordan_wigner_correctness() {
    let mut worst = (0.0f64, 0.0f64, 0.0f64);
    for name in ["h2", "lih_cas3"] {
        let h = hamiltonian(name);
        let jw = oracle::dense_hamiltonian(&h).unwrap();
        let fermi = oracle::dense_fermionic_hamiltonian(&common::integrals(name)).unwrap();
        let fermi = fermi.map(|v| Complex64::new(v, 0.0));
        let n: DMatrix<Complex64> = oracle::number_operator(h.n_qubits()).map(|v| Complex64::new(v, 0.0));
        worst.0 = worst.0.max((&jw - &fermi).camax());
        worst.1 = worst.1.max((&jw - jw.adjoint()).camax());
        worst.2 = worst.2.max((&jw * &n - &n * &jw).camax());
    }
    let ok = worst.0 <= 1e-10 && worst.1 <= 1e-10 && worst.2 <= 1e-10;
    report(
        "C2",
        "Jordan-Wigner correctness",
        ok,
        format!("|JW - fermionic| {:.1e}, |H - H^dag| {:.1e}, |[H, N]| {:.1e} (tol 1e-10)", worst.0, worst.1, worst.2),
    );
}

#[test]
fn c3_normalization_and_support() {
    let h = hamiltonian("lih");
    let sector = h.sector();
    let configs = all_configs(12);
    let (mut worst_norm, mut leaked) = (0.0f64, 0.0f64);
    for (i, kind) in AnsatzKind::ALL.into_iter().enumerate() {
        for constrained in [true, false] {
            let s = constrained.then_some(sector);
            let a = random_ansatz(small_config(kind), 12, s, 30 + i as u64, 0.5);
            let amps = a.log_amplitudes(&configs, Mode::Parallel).unwrap();
            let total: f64 = amps.iter().map(LogAmplitude::probability).sum();
            worst_norm = worst_norm.max((total - 1.0).abs());
            if constrained {
                leaked += configs.iter().zip(&amps).filter(|(x, _)| !sector.contains(**x)).map(|(_, a)| a.probability()).sum::<f64>();
            }
        }
    }
    report(
        "C3",
        "normalization and support",
        worst_norm <= 1e-10 && leaked == 0.0,
        format!("max |sum p - 1| = {worst_norm:.1e} (tol 1e-10), mass outside sector = {leaked:e} (want 0), 12 qubits"),
    );
}

#[test]
fn c4_gradient_oracles() {
    let start = Instant::now();
    let mut energy_err = 0.0f64;
    for (name, kind) in [("h2", AnsatzKind::Retnet), ("lih_cas3", AnsatzKind::Retnet), ("lih_cas3", AnsatzKind::Transformer), ("h2", AnsatzKind::Made)] {
        let h = hamiltonian(name);
        let a = random_ansatz(small_config(kind), h.n_qubits(), Some(h.sector()), 7, 0.4);
        let g = enumerated_gradient(&h, &a, 0.0, 0.0);
        let fd = oracle::fd_gradient(|p| oracle::exact_expectation(&h, &dense_state(&with_params(&a, p))), &a.params().to_flat(), 1e-5);
        energy_err = energy_err.max(rel_err(&g, &fd));
    }
    let zero = QubitHamiltonian::from_terms(6, Sector::new(1, 1), 0.0, []).unwrap();
    let mut entropy_err = 0.0f64;
    for kind in AnsatzKind::ALL {
        let a = random_ansatz(small_config(kind), 6, Some(zero.sector()), 8, 0.5);
        let g = enumerated_gradient(&zero, &a, 1.0, 0.0);
        let fd = oracle::fd_gradient(|p| -oracle::exact_entropy(&dense_state(&with_params(&a, p))), &a.params().to_flat(), 1e-5);
        entropy_err = entropy_err.max(rel_err(&g, &fd));
    }
    let h = hamiltonian("lih_cas3");
    let a = random_ansatz(small_config(AnsatzKind::Retnet), 6, Some(h.sector()), 9, 0.4);
    let mut shift = 0.0f64;
    for beta in [0.0, 0.5] {
        let g0 = enumerated_gradient(&h, &a, beta, -7.0);
        let g1 = enumerated_gradient(&h, &a, beta, 93.0);
        let scale = g0.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        shift = shift.max(g0.iter().zip(&g1).map(|(x, y)| (x - y).abs() / scale).fold(0.0, f64::max));
    }
    report(
        "C4",
        "gradient oracles",
        energy_err <= 1e-4 && entropy_err <= 1e-4 && shift <= 1e-10,
        format!(
            "energy FD rel {energy_err:.1e}, entropy FD rel {entropy_err:.1e} (tol 1e-4), baseline shift {shift:.1e} (tol 1e-10), {:.1?}",
            start.elapsed()
        ),
    );
}

#[test]
fn c5_sampler_exactness() {
    let start = Instant::now();
    let h = hamiltonian("lih_cas5");
    let sector = h.sector();
    let mut ps = vec![];
    let mut infeasible = 0usize;
    for seed in 0..3 {
        let a = random_ansatz(small_config(AnsatzKind::Retnet), 10, Some(sector), 100 + seed, 0.6);
        let psi = dense_state(&a);
        let s = sample(&a, 1_000_000, seed, SampleOptions::default()).unwrap();
        infeasible += s.configs.iter().filter(|x| !sector.contains(**x)).count();
        ps.push(common::chi_square_p(&s, &psi.basis, &psi.probabilities()));
    }
    let min_p = ps.iter().copied().fold(1.0, f64::min);
    report(
        "C5",
        "sampler exactness",
        min_p > 0.01 && infeasible == 0,
        format!("chi-square p = {ps:.3?} (need > 0.01), infeasible samples {infeasible}, 10^6 draws x 3, {:.1?}", start.elapsed()),
    );
}

fn train_fixture(name: &str, ansatz: AnsatzConfig, cfg: &TrainConfig) -> (f64, f64, f64) {
    let h = hamiltonian(name);
    let (e0, _) = oracle::ground_state(&h, Some(h.sector())).unwrap();
    let mut a = Ansatz::new(ansatz, h.n_qubits(), Some(h.sector()), cfg.seed).unwrap();
    let state = train(&h, &mut a, cfg, |_| {}).unwrap();
    let best = state.best.unwrap();
    (best.mean, best.standard_error(), e0)
}

#[test]
fn c6_h2_energy() {
    let start = Instant::now();
    let mut cfg = TrainConfig { seed: 1, ..Default::default() };
    cfg.schedule.total_steps = 2000;
    cfg.sampling.n_end = 100_000;
    let (best, se, e0) = train_fixture("h2", AnsatzConfig::default(), &cfg);
    let err = (best - e0).abs();
    report(
        "C6a",
        "H2 energy",
        err <= 1.6e-3 && best >= e0 - 3.0 * se,
        format!("best {best:.6} vs exact {e0:.6}, |diff| {:.3} mHa (tol 1.6), {:.1?}", err * 1e3, start.elapsed()),
    );
}

#[test]
#[ignore = "slow: LiH training"]
fn c6_lih_energy() {
    let start = Instant::now();
    let mut cfg = TrainConfig { seed: 1, ..Default::default() };
    cfg.schedule.total_steps = 5000;
    let (best, se, e0) = train_fixture("lih", AnsatzConfig::default(), &cfg);
    let err = (best - e0).abs();
    report(
        "C6b",
        "LiH energy",
        err <= 1.6e-3 && best >= e0 - 3.0 * se,
        format!("best {best:.6} vs exact {e0:.6}, |diff| {:.3} mHa (tol 1.6), {:.1?}", err * 1e3, start.elapsed()),
    );
}

/// Schedule used for the water runs: 25,000 Adam steps, warmup and
/// annealing from 4%, quartic decay, 10^4 to 10^12 draws.
fn h2o_config(seed: u64, vna: bool) -> TrainConfig {
    let mut cfg = TrainConfig { seed, vna, ..Default::default() };
    cfg.schedule.total_steps = 25_000;
    cfg.sampling.n_start = 10_000;
    cfg.sampling.n_end = 1_000_000_000_000;
    cfg
}

const H2O_TARGET: f64 = -75.0155;

#[test]
#[ignore = "slow: 25,000-step water run"]
fn c6_h2o_energy() {
    let start = Instant::now();
    let (best, se, e0) = train_fixture("h2o", AnsatzConfig::default(), &h2o_config(1, true));
    assert!((reference_energy("h2o") - e0).abs() < 1e-7);
    let err = (best - H2O_TARGET).abs();
    report(
        "C6c",
        "H2O energy",
        err <= 2e-3 && best >= e0 - 3.0 * se,
        format!("best {best:.6} vs target {H2O_TARGET}, |diff| {:.3} mHa (tol 2), exact {e0:.6}, {:.1?}", err * 1e3, start.elapsed()),
    );
}

#[test]
#[ignore = "slow: ten 25,000-step water runs"]
fn c7_annealing_ablation() {
    let start = Instant::now();
    let median = |mut v: Vec<f64>| {
        v.sort_by(f64::total_cmp);
        v[v.len() / 2]
    };
    let mut with = vec![];
    let mut without = vec![];
    for seed in 1..=5 {
        with.push(train_fixture("h2o", AnsatzConfig::default(), &h2o_config(seed, true)).0);
        without.push(train_fixture("h2o", AnsatzConfig::default(), &h2o_config(seed, false)).0);
        eprintln!("seed {seed}: with {:.6} without {:.6}", with.last().unwrap(), without.last().unwrap());
    }
    let (m_with, m_without) = (median(with), median(without));
    let gap = m_without - m_with;
    report(
        "C7",
        "annealing ablation",
        m_with < m_without && gap > 5e-3,
        format!("median with {m_with:.6}, without {m_without:.6}, gap {:.3} mHa (need > 5), {:.1?}", gap * 1e3, start.elapsed()),
    );
}

/// Cost-table totals in floating point, summed row by row.
fn table_rows(d: &ModelDims) -> (f64, [f64; 3]) {
    let [nb, m, r, ff, n] = [d.n_block, d.d_model, d.d_retn, d.d_ff, d.n_seq].map(|v| v as f64);
    let params = 3.0 * nb * m * r + 2.0 * nb * m * r + 2.0 * nb * m * ff;
    let shared = 6.0 * nb * m * r + 4.0 * nb * m * r + 4.0 * nb * m * ff;
    let parallel = shared + 4.0 * nb * n * r;
    let recurrent = shared + 5.0 * nb * r * r;
    (params, [parallel, recurrent, parallel - 2.0 * nb * m * r])
}

#[test]
fn c8_flop_model() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut mismatches = 0;
    for _ in 0..100 {
        let d = ModelDims {
            n_block: rng.random_range(1..=8),
            d_model: rng.random_range(1..=512),
            d_retn: rng.random_range(1..=512),
            d_ff: rng.random_range(1..=2048),
            n_seq: rng.random_range(1..=256),
        };
        let (params, flops) = table_rows(&d);
        mismatches += usize::from(param_count(&d) as f64 != params);
        mismatches += Form::ALL.iter().zip(flops).filter(|(f, want)| flops_per_token(&d, **f) as f64 != *want).count();
    }
    let mut crossover = 0.0f64;
    for m in 1..=256u64 {
        let d = ModelDims { n_block: 1, d_model: m, d_retn: m, d_ff: 4 * m, n_seq: 1 };
        crossover = crossover.max((crossover_seq_len(&d) - 1.75 * m as f64).abs());
    }
    report(
        "C8",
        "FLOP model",
        mismatches == 0 && crossover <= 1e-9,
        format!("{mismatches} mismatches over 100 grid points, max |crossover - 1.75 d_model| = {crossover:.1e}"),
    );
}

#[test]
fn c9_zero_variance() {
    let mut spread = vec![];
    for name in ["h2", "lih"] {
        let h = hamiltonian(name);
        let (_, psi) = oracle::ground_state(&h, Some(h.sector())).unwrap();
        let support: Vec<SpinConfig> = psi.basis.iter().zip(&psi.amplitudes).filter(|(_, a)| a.norm() > 1e-6).map(|(x, _)| *x).collect();
        let amp = |b: &[SpinConfig]| {
            Ok(b.iter()
                .map(|&x| {
                    let c = psi.amplitude(x);
                    if c.norm() == 0.0 { LogAmplitude::ZERO } else { LogAmplitude::new(c.norm().ln(), c.arg()) }
                })
                .collect())
        };
        let l = local_energies_with(&h, &support, amp, 8).unwrap().values;
        let (lo, hi) = l.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v.re), hi.max(v.re)));
        spread.push((name, support.len(), hi - lo));
    }
    let worst = spread.iter().map(|s| s.2).fold(0.0, f64::max);
    report("C9", "zero-variance property", worst <= 1e-8, format!("max - min local energy {spread:?} (tol 1e-8)"));
}
