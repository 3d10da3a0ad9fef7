use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::encoding::{self, START_TOKEN, VOCAB};
use super::recurrent::RecurrentNet;
use super::retention::{head_decays, rotary_thetas};
use super::{AnsatzConfig, AnsatzKind, LogAmplitude};
use crate::basis::{Sector, SpinConfig};
use crate::error::{NqsError, Result};
use crate::nn::{masked_softmax_into, Activation, Gradients, Graph, ParamId, ParameterStore, Tensor, Var};
use crate::par;

/// Configurations per tape when evaluating large batches.
const CHUNK: usize = 128;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// Whole sequences at once on the tape; differentiable.
    Parallel,
    /// Token-by-token retention recurrence; RetNet only, inference only.
    Recurrent,
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct NormIds {
    pub gain: ParamId,
    pub bias: ParamId,
}

#[derive(Clone, Debug)]
pub(crate) struct BlockIds {
    pub wq: ParamId,
    pub wk: ParamId,
    pub wv: ParamId,
    pub wg: Option<ParamId>,
    pub wo: ParamId,
    pub ln1: NormIds,
    pub w1: ParamId,
    pub w2: ParamId,
    pub ln2: NormIds,
}

#[derive(Clone, Debug)]
pub(crate) enum Trunk {
    Sequence {
        embed: ParamId,
        pos: ParamId,
        blocks: Vec<BlockIds>,
        head_w: ParamId,
        head_b: ParamId,
    },
    Made {
        layers: Vec<(ParamId, ParamId)>,
        masks: Vec<Tensor>,
    },
}

/// An autoregressive wavefunction with its parameters.
#[derive(Clone, Debug)]
pub struct Ansatz {
    config: AnsatzConfig,
    n_qubits: usize,
    sector: Option<Sector>,
    store: ParameterStore,
    pub(crate) trunk: Trunk,
    phase: Vec<(ParamId, ParamId)>,
}

fn made_masks(l: usize, widths: &[usize]) -> Vec<Tensor> {
    let io: Vec<usize> = (0..VOCAB * l).map(|u| u / VOCAB + 1).collect();
    let hidden = |w: usize| -> Vec<usize> { (0..w).map(|k| k % l.saturating_sub(1).max(1) + 1).collect() };
    let mut degrees = vec![io.clone()];
    degrees.extend(widths.iter().map(|&w| hidden(w)));
    degrees.push(io);
    let last = degrees.len() - 2;
    (0..degrees.len() - 1)
        .map(|i| {
            let (din, dout) = (&degrees[i], &degrees[i + 1]);
            let data = din
                .iter()
                .flat_map(|&a| {
                    dout.iter()
                        .map(move |&b| if (i == last && b > a) || (i != last && b >= a) { 1.0 } else { 0.0 })
                })
                .collect();
            Tensor::matrix(din.len(), dout.len(), data).unwrap()
        })
        .collect()
}

impl Ansatz {
    /// Fresh parameters: Xavier-uniform matrices, zero biases, unit gains and
    /// a zero output layer.
    pub fn new(config: AnsatzConfig, n_qubits: usize, sector: Option<Sector>, seed: u64) -> Result<Self> {
        config.validate()?;
        let l = encoding::n_orbitals(n_qubits)?;
        if let Some(s) = sector {
            if s.n_up > l || s.n_down > l {
                return Err(NqsError::Config(format!("sector {s:?} does not fit {l} orbitals")));
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParameterStore::new();
        let (dm, dr, df) = (config.d_model, config.d_retn, config.d_ff);
        let zeros = |n: usize| Tensor::zeros(&[n]);
        let ones = |n: usize| Tensor::full(&[n], 1.0);

        let trunk = match config.kind {
            AnsatzKind::Retnet | AnsatzKind::Transformer => {
                let embed = store.add_xavier("embed", VOCAB + 1, dm, &mut rng);
                let pos = store.add_xavier("pos", l, dm, &mut rng);
                let blocks = (0..config.n_block)
                    .map(|b| {
                        let p = |s: &str| format!("block{b}.{s}");
                        let wq = store.add_xavier(p("wq"), dm, dr, &mut rng);
                        let wk = store.add_xavier(p("wk"), dm, dr, &mut rng);
                        let wv = store.add_xavier(p("wv"), dm, dr, &mut rng);
                        let wg = (config.kind == AnsatzKind::Retnet)
                            .then(|| store.add_xavier(p("wg"), dm, dr, &mut rng));
                        let wo = store.add_xavier(p("wo"), dr, dm, &mut rng);
                        let ln1 = NormIds {
                            gain: store.add(p("ln1.gain"), ones(dm)),
                            bias: store.add(p("ln1.bias"), zeros(dm)),
                        };
                        let w1 = store.add_xavier(p("w1"), dm, df, &mut rng);
                        let w2 = store.add_xavier(p("w2"), df, dm, &mut rng);
                        let ln2 = NormIds {
                            gain: store.add(p("ln2.gain"), ones(dm)),
                            bias: store.add(p("ln2.bias"), zeros(dm)),
                        };
                        BlockIds { wq, wk, wv, wg, wo, ln1, w1, w2, ln2 }
                    })
                    .collect();
                // zero output layer: uniform initial conditionals
                let head_w = store.add("head.w", Tensor::zeros(&[dm, VOCAB]));
                let head_b = store.add("head.b", zeros(VOCAB));
                Trunk::Sequence { embed, pos, blocks, head_w, head_b }
            }
            AnsatzKind::Made => {
                let masks = made_masks(l, &config.made_hidden);
                let layers = masks
                    .iter()
                    .enumerate()
                    .map(|(i, m)| {
                        let name = format!("made.w{i}");
                        let w = if i + 1 == masks.len() {
                            store.add(name, Tensor::zeros(&[m.rows(), m.cols()]))
                        } else {
                            store.add_xavier(name, m.rows(), m.cols(), &mut rng)
                        };
                        let b = store.add(format!("made.b{i}"), zeros(m.cols()));
                        (w, b)
                    })
                    .collect();
                Trunk::Made { layers, masks }
            }
        };

        let mut widths = vec![n_qubits];
        widths.extend(&config.phase_hidden);
        widths.push(1);
        let phase = widths
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let wi = store.add_xavier(format!("phase.w{i}"), w[0], w[1], &mut rng);
                let bi = store.add(format!("phase.b{i}"), zeros(w[1]));
                (wi, bi)
            })
            .collect();

        Ok(Ansatz { config, n_qubits, sector, store, trunk, phase })
    }

    pub fn config(&self) -> &AnsatzConfig {
        &self.config
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn seq_len(&self) -> usize {
        self.n_qubits / 2
    }

    pub fn sector(&self) -> Option<Sector> {
        self.sector
    }

    pub fn params(&self) -> &ParameterStore {
        &self.store
    }

    pub fn params_mut(&mut self) -> &mut ParameterStore {
        &mut self.store
    }

    pub fn n_params(&self) -> usize {
        self.store.n_scalars()
    }

    /// Scalars in the trunk projection and feedforward matrices.
    pub fn trunk_param_count(&self) -> usize {
        self.store
            .iter()
            .filter(|(n, _)| {
                n.starts_with("block") && n.rsplit('.').next().is_some_and(|s| s.starts_with('w'))
            })
            .map(|(_, t)| t.len())
            .sum()
    }

    pub fn is_feasible(&self, x: SpinConfig) -> bool {
        match self.sector {
            Some(s) => s.contains(x) && x.0 >> self.n_qubits == 0,
            None => self.n_qubits == 64 || x.0 >> self.n_qubits == 0,
        }
    }

    fn tokens(&self, x: SpinConfig) -> Vec<u8> {
        encoding::encode_unchecked(x, self.seq_len())
    }

    fn check_mode(&self, mode: Mode) -> Result<()> {
        if mode == Mode::Recurrent && self.config.kind != AnsatzKind::Retnet {
            return Err(NqsError::Usage(format!(
                "recurrent evaluation needs a retnet ansatz, not {}",
                self.config.kind
            )));
        }
        Ok(())
    }

    fn param(&self, g: &mut Graph, id: ParamId) -> Var {
        g.param(&self.store, id)
    }

    fn layer_norm(&self, g: &mut Graph, x: Var, ids: NormIds) -> Result<Var> {
        let n = g.row_norm(x, self.config.d_model)?;
        let gain = self.param(g, ids.gain);
        let bias = self.param(g, ids.bias);
        let s = g.mul_row(n, gain)?;
        g.add_row(s, bias)
    }

    fn retention_mixer(&self, g: &mut Graph, x: Var, blk: &BlockIds) -> Result<Var> {
        let (l, nh) = (self.seq_len(), self.config.n_heads);
        let dh = self.config.d_retn / nh;
        let gammas = head_decays(nh);
        let thetas: Vec<f64> = (0..nh).flat_map(|_| rotary_thetas(dh)).collect();
        let (wq, wk, wv) = (self.param(g, blk.wq), self.param(g, blk.wk), self.param(g, blk.wv));
        let q = g.matmul(x, wq)?;
        let q = g.rotate(q, l, &thetas)?;
        let k = g.matmul(x, wk)?;
        let k = g.scale(k, 1.0 / (dh as f64).sqrt());
        let k = g.rotate(k, l, &thetas)?;
        let v = g.matmul(x, wv)?;
        let y = if nh == 1 {
            g.retention(q, k, v, l, gammas[0])?
        } else {
            let mut outs = Vec::with_capacity(nh);
            for (h, &gamma) in gammas.iter().enumerate() {
                let (a, b) = (h * dh, (h + 1) * dh);
                let qh = g.slice_cols(q, a, b)?;
                let kh = g.slice_cols(k, a, b)?;
                let vh = g.slice_cols(v, a, b)?;
                outs.push(g.retention(qh, kh, vh, l, gamma)?);
            }
            g.concat_cols(&outs)?
        };
        let y = g.row_norm(y, dh)?;
        let wg = self.param(g, blk.wg.expect("retnet block has a gate"));
        let gate = g.matmul(x, wg)?;
        let gate = g.unary(gate, Activation::Swish);
        let y = g.mul(gate, y)?;
        let wo = self.param(g, blk.wo);
        g.matmul(y, wo)
    }

    fn attention_mixer(&self, g: &mut Graph, x: Var, blk: &BlockIds) -> Result<Var> {
        let (l, nh) = (self.seq_len(), self.config.n_heads);
        let dh = self.config.d_retn / nh;
        let (wq, wk, wv) = (self.param(g, blk.wq), self.param(g, blk.wk), self.param(g, blk.wv));
        let q = g.matmul(x, wq)?;
        let k = g.matmul(x, wk)?;
        let v = g.matmul(x, wv)?;
        let y = if nh == 1 {
            g.attention(q, k, v, l)?
        } else {
            let mut outs = Vec::with_capacity(nh);
            for h in 0..nh {
                let (a, b) = (h * dh, (h + 1) * dh);
                let qh = g.slice_cols(q, a, b)?;
                let kh = g.slice_cols(k, a, b)?;
                let vh = g.slice_cols(v, a, b)?;
                outs.push(g.attention(qh, kh, vh, l)?);
            }
            g.concat_cols(&outs)?
        };
        let wo = self.param(g, blk.wo);
        g.matmul(y, wo)
    }

    /// Four-way logits for every position of every sequence, `[B*L x 4]`.
    /// Row `j` of a sequence depends only on tokens before `j`.
    pub(crate) fn logits(&self, g: &mut Graph, seqs: &[Vec<u8>]) -> Result<Var> {
        let l = self.seq_len();
        let b = seqs.len();
        match &self.trunk {
            Trunk::Sequence { embed, pos, blocks, head_w, head_b } => {
                let idx: Vec<usize> = seqs
                    .iter()
                    .flat_map(|s| std::iter::once(START_TOKEN).chain(s[..l - 1].iter().map(|&t| t as usize)))
                    .collect();
                let e = self.param(g, *embed);
                let x = g.gather(e, &idx)?;
                let p = self.param(g, *pos);
                let pidx: Vec<usize> = (0..b).flat_map(|_| 0..l).collect();
                let p = g.gather(p, &pidx)?;
                let mut x = g.add(x, p)?;
                for blk in blocks {
                    let a = match self.config.kind {
                        AnsatzKind::Retnet => self.retention_mixer(g, x, blk)?,
                        _ => self.attention_mixer(g, x, blk)?,
                    };
                    let s = g.add(x, a)?;
                    x = self.layer_norm(g, s, blk.ln1)?;
                    let w1 = self.param(g, blk.w1);
                    let h = g.matmul(x, w1)?;
                    let h = g.unary(h, Activation::Gelu);
                    let w2 = self.param(g, blk.w2);
                    let f = g.matmul(h, w2)?;
                    let s = g.add(x, f)?;
                    x = self.layer_norm(g, s, blk.ln2)?;
                }
                let hw = self.param(g, *head_w);
                let hb = self.param(g, *head_b);
                let y = g.matmul(x, hw)?;
                g.add_row(y, hb)
            }
            Trunk::Made { layers, masks } => {
                let mut onehot = vec![0.0; b * VOCAB * l];
                for (r, s) in seqs.iter().enumerate() {
                    for (j, &t) in s.iter().enumerate() {
                        onehot[r * VOCAB * l + VOCAB * j + t as usize] = 1.0;
                    }
                }
                let mut h = g.constant(Tensor::matrix(b, VOCAB * l, onehot)?);
                for (i, ((w, bias), m)) in layers.iter().zip(masks).enumerate() {
                    let w = self.param(g, *w);
                    let m = g.constant(m.clone());
                    let w = g.mul(w, m)?;
                    let bias = self.param(g, *bias);
                    let y = g.matmul(h, w)?;
                    h = g.add_row(y, bias)?;
                    if i + 1 < layers.len() {
                        h = g.unary(h, Activation::Gelu);
                    }
                }
                g.reshape(h, vec![b * l, VOCAB])
            }
        }
    }

    /// Phase `pi * tanh(f(s))` of a feedforward network on spins `s = 2x - 1`.
    pub(crate) fn phase_var(&self, g: &mut Graph, xs: &[SpinConfig]) -> Result<Var> {
        let n = self.n_qubits;
        let spins: Vec<f64> = xs.iter().flat_map(|x| x.spins(n)).collect();
        let mut h = g.constant(Tensor::matrix(xs.len(), n, spins)?);
        for (i, (w, b)) in self.phase.iter().enumerate() {
            let w = self.param(g, *w);
            let b = self.param(g, *b);
            let y = g.matmul(h, w)?;
            h = g.add_row(y, b)?;
            if i + 1 < self.phase.len() {
                h = g.unary(h, Activation::Gelu);
            }
        }
        let t = g.unary(h, Activation::Tanh);
        Ok(g.scale(t, PI))
    }

    /// Phase of each configuration.
    pub fn phase(&self, xs: &[SpinConfig]) -> Result<Vec<f64>> {
        if xs.is_empty() {
            return Ok(Vec::new());
        }
        let mut g = Graph::new();
        let p = self.phase_var(&mut g, xs)?;
        Ok(g.value(p).data().iter().map(|&v| super::wrap_phase(v)).collect())
    }

    fn masks_for(&self, xs: &[SpinConfig]) -> Result<(Vec<Vec<u8>>, Vec<[bool; 4]>)> {
        let mut seqs = Vec::with_capacity(xs.len());
        let mut masks = Vec::with_capacity(xs.len() * self.seq_len());
        for &x in xs {
            if !self.is_feasible(x) {
                return Err(NqsError::Domain(format!(
                    "configuration {} lies outside the ansatz support",
                    x.to_bitstring(self.n_qubits)
                )));
            }
            let t = self.tokens(x);
            masks.extend(encoding::sequence_masks(self.sector, &t).expect("feasible sequence"));
            seqs.push(t);
        }
        Ok((seqs, masks))
    }

    /// Differentiable parallel pass (or a recurrent, inference-only pass) over
    /// configurations that all lie in the support.
    pub fn forward(&self, xs: &[SpinConfig], mode: Mode) -> Result<Trace> {
        self.check_mode(mode)?;
        if xs.is_empty() {
            return Err(NqsError::Empty("no configurations to evaluate".into()));
        }
        let (seqs, masks) = self.masks_for(xs)?;
        match mode {
            Mode::Parallel => {
                let mut g = Graph::new();
                let logits = self.logits(&mut g, &seqs)?;
                let targets: Vec<u8> = seqs.concat();
                let lp = g.token_log_prob(logits, &targets, &masks)?;
                let logmod = g.segment_sum(lp, self.seq_len(), 0.5)?;
                let phase = self.phase_var(&mut g, xs)?;
                let values = g
                    .value(logmod)
                    .data()
                    .iter()
                    .zip(g.value(phase).data())
                    .map(|(&m, &p)| LogAmplitude::new(m, p))
                    .collect();
                Ok(Trace { graph: Some(g), log_modulus: Some(logmod), phase: Some(phase), values })
            }
            Mode::Recurrent => {
                let net = RecurrentNet::new(self)?;
                let phases = self.phase(xs)?;
                let mut values = Vec::with_capacity(xs.len());
                for ((s, m), p) in seqs.iter().zip(masks.chunks(self.seq_len())).zip(phases) {
                    let lp: f64 = net
                        .sequence_logits(s)?
                        .iter()
                        .zip(m)
                        .zip(s)
                        .map(|((lg, mk), &t)| {
                            let mut probs = [0.0; 4];
                            lg[t as usize] - masked_softmax_into(lg, mk, &mut probs)
                        })
                        .sum();
                    values.push(LogAmplitude::new(0.5 * lp, p));
                }
                Ok(Trace { graph: None, log_modulus: None, phase: None, values })
            }
        }
    }

    /// Log-amplitudes of arbitrary configurations; those outside the support
    /// get [`LogAmplitude::ZERO`]. Work is split into chunks across threads.
    pub fn log_amplitudes(&self, xs: &[SpinConfig], mode: Mode) -> Result<Vec<LogAmplitude>> {
        self.check_mode(mode)?;
        let feasible: Vec<SpinConfig> = xs.iter().copied().filter(|&x| self.is_feasible(x)).collect();
        let chunks = par::map_chunks(&feasible, CHUNK, |c| self.forward(c, mode).map(|t| t.values));
        let mut vals = Vec::with_capacity(feasible.len());
        for c in chunks {
            vals.extend(c?);
        }
        let mut it = vals.into_iter();
        Ok(xs
            .iter()
            .map(|&x| if self.is_feasible(x) { it.next().unwrap() } else { LogAmplitude::ZERO })
            .collect())
    }

    /// Masked conditional distributions at every position, `L` rows per
    /// configuration.
    pub fn conditionals(&self, xs: &[SpinConfig], mode: Mode) -> Result<Vec<[f64; 4]>> {
        self.check_mode(mode)?;
        let (seqs, masks) = self.masks_for(xs)?;
        let logits: Vec<[f64; 4]> = match mode {
            Mode::Parallel => {
                let mut g = Graph::new();
                let v = self.logits(&mut g, &seqs)?;
                g.value(v).data().chunks(4).map(|c| [c[0], c[1], c[2], c[3]]).collect()
            }
            Mode::Recurrent => {
                let net = RecurrentNet::new(self)?;
                let mut out = Vec::new();
                for s in &seqs {
                    out.extend(net.sequence_logits(s)?);
                }
                out
            }
        };
        logits.iter().zip(&masks).map(|(lg, m)| masked_probs(lg, m)).collect()
    }

    /// Logits at position `prefixes[i].len()` for prefixes of equal length,
    /// from a parallel pass over zero-padded sequences.
    pub fn prefix_logits(&self, prefixes: &[Vec<u8>]) -> Result<Vec<[f64; 4]>> {
        let l = self.seq_len();
        let j = prefixes.first().map_or(0, |p| p.len());
        if j >= l || prefixes.iter().any(|p| p.len() != j) {
            return Err(NqsError::Dimension(format!("prefixes must share a length below {l}")));
        }
        let seqs: Vec<Vec<u8>> = prefixes
            .iter()
            .map(|p| {
                let mut s = p.clone();
                s.resize(l, 0);
                s
            })
            .collect();
        let mut g = Graph::new();
        let v = self.logits(&mut g, &seqs)?;
        let t = g.value(v);
        Ok((0..prefixes.len())
            .map(|b| {
                let r = t.row(b * l + j);
                [r[0], r[1], r[2], r[3]]
            })
            .collect())
    }
}

/// Softmax of four logits restricted to `mask`.
pub fn masked_probs(logits: &[f64; 4], mask: &[bool; 4]) -> Result<[f64; 4]> {
    if !mask.iter().any(|&m| m) {
        return Err(NqsError::Domain("no feasible continuation".into()));
    }
    let mut p = [0.0; 4];
    masked_softmax_into(logits, mask, &mut p);
    Ok(p)
}

/// Record of a forward pass. Parallel traces can be differentiated.
#[derive(Debug)]
pub struct Trace {
    graph: Option<Graph>,
    log_modulus: Option<Var>,
    phase: Option<Var>,
    pub values: Vec<LogAmplitude>,
}

impl Trace {
    pub fn is_differentiable(&self) -> bool {
        self.graph.is_some()
    }

    /// Gradient of `sum_i w_mod[i] * logmod_i + w_phase[i] * phase_i`.
    pub fn grad(&self, ansatz: &Ansatz, w_mod: &[f64], w_phase: &[f64]) -> Result<Gradients> {
        let (Some(g), Some(m), Some(p)) = (&self.graph, self.log_modulus, self.phase) else {
            return Err(NqsError::Usage("gradient requested from a recurrent trace".into()));
        };
        let n = self.values.len();
        if w_mod.len() != n || w_phase.len() != n {
            return Err(NqsError::Dimension(format!(
                "{} / {} weights for {n} configurations",
                w_mod.len(),
                w_phase.len()
            )));
        }
        g.backward(
            &[(m, Tensor::vector(w_mod.to_vec())), (p, Tensor::vector(w_phase.to_vec()))],
            ansatz.params(),
        )
    }
}
