//! Exact autoregressive sampling with unique-prefix bookkeeping.
//!
//! Draws are split breadth-first: every unique prefix carries a count that is
//! divided multinomially among its children using the masked conditional at
//! the next position. Each prefix draws from its own random stream derived
//! from (seed, position, prefix), so results do not depend on thread count.

use std::io::Write;

use log::warn;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::ansatz::{decode, feasible_tokens, masked_probs, token_down, token_up, Ansatz, AnsatzKind, RecurrentNet, RetentionState, START_TOKEN};
use crate::basis::SpinConfig;
use crate::error::{NqsError, Result};
use crate::par;

/// Sample-count ramp, unique-sample cap and singleton pruning.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SampleScheduleConfig {
    pub n_start: u64,
    pub n_end: u64,
    pub unique_cap: usize,
    pub prune_singletons: bool,
}

impl Default for SampleScheduleConfig {
    fn default() -> Self {
        SampleScheduleConfig {
            n_start: 1_000,
            n_end: 1_000_000,
            unique_cap: 8000,
            prune_singletons: true,
        }
    }
}

impl SampleScheduleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_start == 0 || self.n_start > self.n_end {
            return Err(NqsError::Config(format!(
                "sample counts need 1 <= n_start <= n_end, got {} and {}",
                self.n_start, self.n_end
            )));
        }
        if self.unique_cap == 0 {
            return Err(NqsError::Config("unique_cap must be at least 1".into()));
        }
        Ok(())
    }
}

/// Fraction of training over which the sample count ramps up.
pub const RAMP_FRAC: f64 = 0.9;

/// Geometric ramp from `n_start` at `t = 0` to `n_end` at `0.9 T`, then flat.
pub fn sample_count_at(cfg: &SampleScheduleConfig, t: u64, total: u64) -> u64 {
    let end = RAMP_FRAC * total as f64;
    if t as f64 >= end {
        return cfg.n_end;
    }
    let f = t as f64 / end;
    let (a, b) = (cfg.n_start as f64, cfg.n_end as f64);
    (a * (b / a).powf(f)).round().max(1.0) as u64
}

/// Unique configurations with occurrence counts. `total_draws` is the sum of
/// `counts`; `raw_draws` is the number of draws originally requested.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleSet {
    pub configs: Vec<SpinConfig>,
    pub counts: Vec<u64>,
    pub total_draws: u64,
    pub raw_draws: u64,
    pub rng_seed: u64,
}

impl SampleSet {
    fn from_pairs(mut pairs: Vec<(SpinConfig, u64)>, raw_draws: u64, rng_seed: u64) -> Self {
        pairs.sort_unstable_by_key(|p| p.0);
        let total_draws = pairs.iter().map(|p| p.1).sum();
        let (configs, counts) = pairs.into_iter().unzip();
        SampleSet { configs, counts, total_draws, raw_draws, rng_seed }
    }

    pub fn len(&self) -> usize {
        self.configs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.configs.is_empty()
    }

    /// `count / total_draws` per configuration.
    pub fn weights(&self) -> Vec<f64> {
        let n = self.total_draws as f64;
        self.counts.iter().map(|&c| c as f64 / n).collect()
    }

    /// Text dump, one `bitstring count` line per configuration.
    pub fn write_dump(&self, mut w: impl Write, n_qubits: usize) -> Result<()> {
        for (x, c) in self.configs.iter().zip(&self.counts) {
            writeln!(w, "{} {c}", x.to_bitstring(n_qubits))?;
        }
        Ok(())
    }
}

pub(crate) fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Independent stream for the prefix `tokens` at `position`.
fn stream(seed: u64, position: usize, tokens: &[u8]) -> ChaCha8Rng {
    let code = tokens.iter().fold(1u64, |acc, &t| (acc << 2) | t as u64);
    let s = splitmix(splitmix(seed) ^ splitmix(position as u64 + 1).rotate_left(17) ^ splitmix(code).rotate_left(41));
    ChaCha8Rng::seed_from_u64(s)
}

/// Split `n` draws among the allowed tokens according to `p`.
fn multinomial(n: u64, p: &[f64; 4], rng: &mut ChaCha8Rng) -> [u64; 4] {
    let mut out = [0u64; 4];
    let allowed: Vec<usize> = (0..4).filter(|&t| p[t] > 0.0).collect();
    let mut left = n;
    let mut mass: f64 = allowed.iter().map(|&t| p[t]).sum();
    for (i, &t) in allowed.iter().enumerate() {
        if left == 0 {
            break;
        }
        if i + 1 == allowed.len() {
            out[t] = left;
            break;
        }
        let q = (p[t] / mass).clamp(0.0, 1.0);
        let k = Binomial::new(left, q).expect("valid binomial").sample(rng);
        out[t] = k;
        left -= k;
        mass -= p[t];
    }
    out
}

#[derive(Clone)]
struct Node {
    tokens: Vec<u8>,
    count: u64,
    up: usize,
    down: usize,
    recurrent: Option<(RetentionState, [f64; 4])>,
}

/// Options for a single call to [`sample`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SampleOptions {
    /// Drop prefixes drawn exactly once at each stage.
    pub prune_singletons: bool,
}

/// Draw `n_draws` configurations from `|psi|^2`.
pub fn sample(ansatz: &Ansatz, n_draws: u64, seed: u64, opts: SampleOptions) -> Result<SampleSet> {
    if n_draws == 0 {
        return Err(NqsError::Empty("sample needs at least one draw".into()));
    }
    let l = ansatz.seq_len();
    let sector = ansatz.sector();
    let net = match ansatz.config().kind {
        AnsatzKind::Retnet => Some(RecurrentNet::new(ansatz)?),
        _ => None,
    };
    let root_state = match &net {
        Some(n) => Some(n.step(&n.initial_state(), START_TOKEN)?),
        None => None,
    };
    let mut frontier = vec![Node { tokens: Vec::new(), count: n_draws, up: 0, down: 0, recurrent: root_state }];

    for j in 0..l {
        let logits: Vec<[f64; 4]> = match &net {
            Some(_) => frontier.iter().map(|n| n.recurrent.as_ref().unwrap().1).collect(),
            None => {
                let prefixes: Vec<Vec<u8>> = frontier.iter().map(|n| n.tokens.clone()).collect();
                let parts = par::map_chunks(&prefixes, 64, |c| ansatz.prefix_logits(c));
                let mut v = Vec::with_capacity(prefixes.len());
                for p in parts {
                    v.extend(p?);
                }
                v
            }
        };
        let splits: Vec<Result<Vec<(Node, u8)>>> = par::map_range(frontier.len(), |i| {
            let node = &frontier[i];
            let mask = feasible_tokens(sector, l, j, node.up, node.down);
            let p = masked_probs(&logits[i], &mask)?;
            let mut rng = stream(seed, j, &node.tokens);
            let counts = multinomial(node.count, &p, &mut rng);
            Ok((0..4u8)
                .filter(|&t| counts[t as usize] > 0)
                .map(|t| {
                    let mut tokens = node.tokens.clone();
                    tokens.push(t);
                    let child = Node {
                        tokens,
                        count: counts[t as usize],
                        up: node.up + token_up(t),
                        down: node.down + token_down(t),
                        recurrent: None,
                    };
                    (child, t)
                })
                .collect())
        });
        let mut children: Vec<(usize, Node, u8)> = Vec::new();
        for (i, s) in splits.into_iter().enumerate() {
            children.extend(s?.into_iter().map(|(c, t)| (i, c, t)));
        }
        if opts.prune_singletons {
            if children.iter().all(|c| c.1.count == 1) {
                warn!("singleton pruning would empty the frontier at position {j}; keeping all prefixes");
            } else {
                children.retain(|c| c.1.count > 1);
            }
        }
        if let Some(n) = &net {
            if j + 1 < l {
                let stepped = par::map(&children, |(i, _, t)| {
                    let (state, _) = frontier[*i].recurrent.as_ref().unwrap();
                    n.step(state, *t as usize)
                });
                for (c, s) in children.iter_mut().zip(stepped) {
                    c.1.recurrent = Some(s?);
                }
            }
        }
        frontier = children.into_iter().map(|c| c.1).collect();
    }

    let pairs = frontier.into_iter().map(|n| (decode(&n.tokens), n.count)).collect();
    Ok(SampleSet::from_pairs(pairs, n_draws, seed))
}

/// Reference sampler: one draw at a time, re-evaluating every prefix.
pub fn sample_sequential(ansatz: &Ansatz, n_draws: u64, seed: u64) -> Result<SampleSet> {
    if n_draws == 0 {
        return Err(NqsError::Empty("sample needs at least one draw".into()));
    }
    let l = ansatz.seq_len();
    let net = match ansatz.config().kind {
        AnsatzKind::Retnet => Some(RecurrentNet::new(ansatz)?),
        _ => None,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let unit = Uniform::new(0.0, 1.0).expect("unit interval");
    let mut hist = std::collections::BTreeMap::new();
    for _ in 0..n_draws {
        let mut tokens: Vec<u8> = Vec::with_capacity(l);
        let (mut up, mut down) = (0, 0);
        let mut state = net.as_ref().map(|n| n.initial_state());
        let mut input = START_TOKEN;
        for j in 0..l {
            let logits = match (&net, &mut state) {
                (Some(n), Some(s)) => {
                    let (next, lg) = n.step(s, input)?;
                    *s = next;
                    lg
                }
                _ => ansatz.prefix_logits(&[tokens.clone()])?[0],
            };
            let p = masked_probs(&logits, &feasible_tokens(ansatz.sector(), l, j, up, down))?;
            let u: f64 = unit.sample(&mut rng);
            let mut acc = 0.0;
            let mut pick = (0..4).rev().find(|&t| p[t] > 0.0).unwrap();
            for (t, &pt) in p.iter().enumerate() {
                acc += pt;
                if u < acc && pt > 0.0 {
                    pick = t;
                    break;
                }
            }
            let t = pick as u8;
            tokens.push(t);
            up += token_up(t);
            down += token_down(t);
            input = t as usize;
        }
        *hist.entry(decode(&tokens)).or_insert(0u64) += 1;
    }
    Ok(SampleSet::from_pairs(hist.into_iter().collect(), n_draws, seed))
}

/// Drop singletons (unless that would leave nothing) and keep at most
/// `unique_cap` configurations by count, ties broken by bit value.
pub fn prune_and_cap(s: &SampleSet, cfg: &SampleScheduleConfig) -> SampleSet {
    let mut pairs: Vec<(SpinConfig, u64)> = s.configs.iter().copied().zip(s.counts.iter().copied()).collect();
    if cfg.prune_singletons {
        if pairs.iter().all(|p| p.1 == 1) {
            warn!("singleton pruning would remove every sample; keeping the unpruned set");
        } else {
            pairs.retain(|p| p.1 > 1);
        }
    }
    if pairs.len() > cfg.unique_cap {
        pairs.sort_unstable_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        pairs.truncate(cfg.unique_cap);
    }
    SampleSet::from_pairs(pairs, s.raw_draws, s.rng_seed)
}
