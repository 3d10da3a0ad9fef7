use super::encoding::{START_TOKEN, VOCAB};
use super::network::{Ansatz, Trunk};
use super::retention::{head_decays, HeadState, MultiScaleRetention, RetentionHead};
use super::AnsatzKind;
use crate::error::{NqsError, Result};
use crate::nn::{normalize_groups, Activation, ParamId, Tensor, NORM_EPS};

/// Retention state of every head in every block, plus the position of the
/// next input token.
#[derive(Clone, Debug, PartialEq)]
pub struct RetentionState {
    pub blocks: Vec<Vec<HeadState>>,
    pub position: usize,
}

#[derive(Clone, Debug)]
struct Block {
    msr: MultiScaleRetention,
    ln1: (Tensor, Tensor),
    w1: Tensor,
    w2: Tensor,
    ln2: (Tensor, Tensor),
}

/// Weights of a RetNet ansatz arranged for token-by-token inference.
#[derive(Clone, Debug)]
pub struct RecurrentNet {
    embed: Tensor,
    pos: Tensor,
    blocks: Vec<Block>,
    head_w: Tensor,
    head_b: Tensor,
}

fn cols(t: &Tensor, a: usize, b: usize) -> Tensor {
    let data = (0..t.rows()).flat_map(|r| t.row(r)[a..b].to_vec()).collect();
    Tensor::matrix(t.rows(), b - a, data).unwrap()
}

fn row_times(x: &[f64], w: &Tensor) -> Vec<f64> {
    Tensor::matrix(1, x.len(), x.to_vec()).unwrap().matmul(w).unwrap().into_data()
}

fn layer_norm(x: &mut [f64], (gain, bias): &(Tensor, Tensor)) {
    let n = x.len();
    normalize_groups(x, n, NORM_EPS);
    for ((v, g), b) in x.iter_mut().zip(gain.data()).zip(bias.data()) {
        *v = *v * g + b;
    }
}

impl RecurrentNet {
    pub fn new(ansatz: &Ansatz) -> Result<Self> {
        let cfg = ansatz.config();
        let Trunk::Sequence { embed, pos, blocks, head_w, head_b } = &ansatz.trunk else {
            return Err(NqsError::Usage("recurrent inference needs a retnet ansatz".into()));
        };
        if cfg.kind != AnsatzKind::Retnet {
            return Err(NqsError::Usage(format!("recurrent inference needs a retnet ansatz, not {}", cfg.kind)));
        }
        let p = |id: ParamId| ansatz.params().get(id).clone();
        let dh = cfg.d_retn / cfg.n_heads;
        let blocks = blocks
            .iter()
            .map(|b| {
                let (wq, wk, wv) = (p(b.wq), p(b.wk), p(b.wv));
                let heads = (0..cfg.n_heads)
                    .map(|h| RetentionHead {
                        wq: cols(&wq, h * dh, (h + 1) * dh),
                        wk: cols(&wk, h * dh, (h + 1) * dh),
                        wv: cols(&wv, h * dh, (h + 1) * dh),
                    })
                    .collect();
                Block {
                    msr: MultiScaleRetention {
                        heads,
                        gammas: head_decays(cfg.n_heads),
                        wg: p(b.wg.expect("retnet block has a gate")),
                        wo: p(b.wo),
                    },
                    ln1: (p(b.ln1.gain), p(b.ln1.bias)),
                    w1: p(b.w1),
                    w2: p(b.w2),
                    ln2: (p(b.ln2.gain), p(b.ln2.bias)),
                }
            })
            .collect();
        Ok(RecurrentNet {
            embed: p(*embed),
            pos: p(*pos),
            blocks,
            head_w: p(*head_w),
            head_b: p(*head_b),
        })
    }

    pub fn seq_len(&self) -> usize {
        self.pos.rows()
    }

    pub fn initial_state(&self) -> RetentionState {
        RetentionState {
            blocks: self.blocks.iter().map(|b| b.msr.zero_state()).collect(),
            position: 0,
        }
    }

    /// Consume one input token and return the logits for the token at the
    /// same position.
    pub fn step(&self, state: &RetentionState, token: usize) -> Result<(RetentionState, [f64; 4])> {
        let t = state.position;
        if t >= self.seq_len() || token > VOCAB {
            return Err(NqsError::Domain(format!("token {token} at position {t}")));
        }
        let mut x: Vec<f64> = self.embed.row(token).iter().zip(self.pos.row(t)).map(|(a, b)| a + b).collect();
        let mut next = Vec::with_capacity(self.blocks.len());
        for (b, st) in self.blocks.iter().zip(&state.blocks) {
            let (a, s) = b.msr.step(&x, st)?;
            next.push(s);
            x.iter_mut().zip(&a).for_each(|(v, d)| *v += d);
            layer_norm(&mut x, &b.ln1);
            let h: Vec<f64> = row_times(&x, &b.w1).into_iter().map(|v| Activation::Gelu.eval(v)).collect();
            let f = row_times(&h, &b.w2);
            x.iter_mut().zip(&f).for_each(|(v, d)| *v += d);
            layer_norm(&mut x, &b.ln2);
        }
        let y = row_times(&x, &self.head_w);
        let hb = self.head_b.data();
        Ok((
            RetentionState { blocks: next, position: t + 1 },
            [y[0] + hb[0], y[1] + hb[1], y[2] + hb[2], y[3] + hb[3]],
        ))
    }

    /// Logits at every position of `seq`, feeding the start token and then
    /// all but the last token.
    pub fn sequence_logits(&self, seq: &[u8]) -> Result<Vec<[f64; 4]>> {
        let mut state = self.initial_state();
        let mut out = Vec::with_capacity(seq.len());
        for j in 0..seq.len() {
            let input = if j == 0 { START_TOKEN } else { seq[j - 1] as usize };
            let (s, lg) = self.step(&state, input)?;
            state = s;
            out.push(lg);
        }
        Ok(out)
    }
}
