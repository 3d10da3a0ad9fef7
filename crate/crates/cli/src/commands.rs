use std::fs::File;
use std::io::{BufWriter, Write};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use log::{info, warn};
use nqs_core::ansatz::Ansatz;
use nqs_core::flops::{crossover_seq_len, flops_per_token, param_count, FlopReport, Form, ModelDims};
use nqs_core::hamiltonian::{parse_fcidump, QubitHamiltonian};
use nqs_core::oracle::{self, MAX_LANCZOS_DIM};
use nqs_core::sampler::{sample as draw, SampleOptions};
use nqs_core::{vmc, NqsError, Sector};
use serde::Serialize;
use serde_json::json;

use crate::config::{ConfigError, RunConfig};
use crate::{ConvertArgs, DiagArgs, FlopsArgs, SampleArgs, TrainArgs};

#[derive(Serialize)]
struct Summary {
    best_energy: Option<f64>,
    best_stderr: Option<f64>,
    oracle_energy: Option<f64>,
    n_params: usize,
    steps: u64,
    ansatz: String,
    vna: bool,
    seed: u64,
    wall_time: f64,
}

fn parse_sector(s: &str) -> Result<Sector> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    let [up, down] = parts[..] else {
        return Err(NqsError::Usage(format!("sector must be `n_up,n_down`, got `{s}`")).into());
    };
    let parse = |v: &str| v.parse::<usize>().map_err(|_| NqsError::Usage(format!("bad electron count `{v}`")));
    Ok(Sector::new(parse(up)?, parse(down)?))
}

fn oracle_energy(h: &QubitHamiltonian) -> Option<f64> {
    let dim = oracle::basis(h.n_qubits(), Some(h.sector())).len();
    if dim > MAX_LANCZOS_DIM {
        return None;
    }
    match oracle::ground_state(h, Some(h.sector())) {
        Ok((e, _)) => Some(e),
        Err(e) => {
            warn!("exact diagonalisation failed: {e}");
            None
        }
    }
}

pub fn train(args: &TrainArgs) -> Result<()> {
    let mut cfg = RunConfig::load(&args.config)?;
    if let Some(kind) = args.ansatz {
        cfg.ansatz.kind = kind;
    }
    if args.no_vna {
        cfg.train.vna = false;
    }
    if let Some(steps) = args.steps {
        cfg.train.schedule.total_steps = steps;
    }
    if let Some(seed) = args.seed {
        cfg.train.seed = seed;
    }
    if let Some(out) = &args.output {
        cfg.output_dir = out.clone();
    }
    cfg.validate()?;

    let h = QubitHamiltonian::load(&cfg.hamiltonian)
        .with_context(|| format!("loading {}", cfg.hamiltonian.display()))?;
    std::fs::create_dir_all(&cfg.output_dir)?;
    let resolved = toml::to_string(&cfg).context("serialising resolved config")?;
    std::fs::write(cfg.output_dir.join("config.toml"), resolved)?;
    if cfg.train.checkpoint_dir.is_none() {
        cfg.train.checkpoint_dir = Some(cfg.output_dir.clone());
    }

    let mut ansatz = Ansatz::new(cfg.ansatz.clone(), h.n_qubits(), Some(h.sector()), cfg.train.seed)?;
    info!(
        "{} ansatz, {} parameters, {} qubits, {} Pauli terms",
        cfg.ansatz.kind,
        ansatz.n_params(),
        h.n_qubits(),
        h.n_terms()
    );
    let mut log = BufWriter::new(File::create(cfg.output_dir.join("train.jsonl"))?);
    let mut io_err = None;
    let every = (cfg.train.total_steps() / 20).max(1);
    let start = Instant::now();
    let state = vmc::train(&h, &mut ansatz, &cfg.train, |r| {
        if io_err.is_none() {
            if let Err(e) = serde_json::to_writer(&mut log, r).map_err(std::io::Error::from).and_then(|_| log.write_all(b"\n")) {
                io_err = Some(e);
            }
        }
        if r.step % every == 0 {
            info!("step {:>6} energy {:.6} best {:.6} beta {:.3e} lr {:.2e} unique {}", r.step, r.energy, r.best_energy, r.beta, r.lr, r.n_unique);
        }
    })?;
    if let Some(e) = io_err {
        return Err(e).context("writing training log");
    }
    log.flush()?;
    ansatz.save(cfg.output_dir.join("checkpoint.json"), state.step)?;

    let summary = Summary {
        best_energy: state.best.map(|b| b.mean),
        best_stderr: state.best.map(|b| b.standard_error()),
        oracle_energy: if args.no_oracle { None } else { oracle_energy(&h) },
        n_params: ansatz.n_params(),
        steps: state.step,
        ansatz: cfg.ansatz.kind.to_string(),
        vna: cfg.train.vna,
        seed: cfg.train.seed,
        wall_time: start.elapsed().as_secs_f64(),
    };
    let text = serde_json::to_string_pretty(&summary)?;
    std::fs::write(cfg.output_dir.join("summary.json"), &text)?;
    println!("{text}");
    Ok(())
}

pub fn diag(args: &DiagArgs) -> Result<()> {
    let h = QubitHamiltonian::load(&args.hamiltonian)
        .with_context(|| format!("loading {}", args.hamiltonian.display()))?;
    let sector = match (&args.sector, args.full) {
        (_, true) => None,
        (Some(s), _) => Some(parse_sector(s)?),
        (None, _) => Some(h.sector()),
    };
    let dim = oracle::basis(h.n_qubits(), sector).len();
    let (e, _) = oracle::ground_state(&h, sector)?;
    let sector_text = sector.map(|s| format!("{},{}", s.n_up, s.n_down)).unwrap_or_else(|| "all".into());
    println!("qubits         {}", h.n_qubits());
    println!("pauli_terms    {}", h.n_terms());
    println!("sector         {sector_text}");
    println!("dimension      {dim}");
    println!("ground_energy  {e:.10}");
    Ok(())
}

pub fn flops(args: &FlopsArgs) -> Result<()> {
    let d = ModelDims {
        n_block: args.n_block,
        d_model: args.d_model,
        d_retn: args.d_retn.unwrap_or(args.d_model),
        d_ff: args.d_ff,
        n_seq: args.n_seq,
    };
    d.validate()?;
    if args.json {
        let mut v = json!({ "dims": d, "params": param_count(&d), "crossover_n_seq": crossover_seq_len(&d) });
        for form in Form::ALL {
            v[form.name()] = json!(flops_per_token(&d, form));
        }
        println!("{}", serde_json::to_string_pretty(&v)?);
    } else {
        println!("{}", FlopReport(d));
    }
    Ok(())
}

pub fn sample(args: &SampleArgs) -> Result<()> {
    let (ansatz, step) = Ansatz::load(&args.checkpoint)
        .with_context(|| format!("loading {}", args.checkpoint.display()))?;
    let s = draw(&ansatz, args.draws, args.seed, SampleOptions { prune_singletons: args.prune_singletons })?;
    info!("checkpoint step {step}: {} unique of {} draws", s.len(), s.total_draws);
    match &args.out {
        Some(p) => s.write_dump(BufWriter::new(File::create(p)?), ansatz.n_qubits())?,
        None => s.write_dump(std::io::stdout().lock(), ansatz.n_qubits())?,
    }
    Ok(())
}

pub fn convert(args: &ConvertArgs) -> Result<()> {
    if args.input == args.output {
        bail!(ConfigError("input and output are the same file".into()));
    }
    let mi = parse_fcidump(&args.input).with_context(|| format!("reading {}", args.input.display()))?;
    let h = QubitHamiltonian::from_integrals(&mi)?;
    h.save_text(&args.output)?;
    info!("{} qubits, {} Pauli terms written to {}", h.n_qubits(), h.n_terms(), args.output.display());
    Ok(())
}
