use serde::{Deserialize, Serialize};

use super::PolicyError;
use crate::rng::StreamRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub vocab: usize,
    pub embed: usize,
    pub hidden: usize,
}

/// Named parameter blocks, in storage order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Block {
    Emb,
    Wc,
    Wa,
    Bh,
    Wo,
    Bo,
}

impl Block {
    pub const ALL: [Block; 6] = [Self::Emb, Self::Wc, Self::Wa, Self::Bh, Self::Wo, Self::Bo];

    pub fn name(self) -> &'static str {
        match self {
            Self::Emb => "emb",
            Self::Wc => "wc",
            Self::Wa => "wa",
            Self::Bh => "bh",
            Self::Wo => "wo",
            Self::Bo => "bo",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|b| b.name() == name)
    }

    /// `(rows, cols)`; vectors are `(n, 1)`.
    pub fn shape(self, d: Dims) -> (usize, usize) {
        match self {
            Self::Emb => (d.vocab, d.embed),
            Self::Wc | Self::Wa => (d.hidden, d.embed),
            Self::Bh => (d.hidden, 1),
            Self::Wo => (d.vocab, d.hidden),
            Self::Bo => (d.vocab, 1),
        }
    }

    pub fn len(self, d: Dims) -> usize {
        let (r, c) = self.shape(d);
        r * c
    }
}

/// Parameters of the mean-pooled one-hidden-layer policy, stored as one flat
/// row-major buffer in [`Block::ALL`] order. Also used for gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyPolicyParams {
    dims: Dims,
    data: Vec<f64>,
}

impl ToyPolicyParams {
    pub fn param_count(dims: Dims) -> usize {
        Block::ALL.iter().map(|b| b.len(dims)).sum()
    }

    pub fn zeros(dims: Dims) -> Self {
        Self {
            dims,
            data: vec![0.0; Self::param_count(dims)],
        }
    }

    pub fn from_data(dims: Dims, data: Vec<f64>) -> Result<Self, PolicyError> {
        if data.len() != Self::param_count(dims) {
            return Err(PolicyError::Shape(format!(
                "{} values for {dims:?}, need {}",
                data.len(),
                Self::param_count(dims)
            )));
        }
        let p = Self { dims, data };
        if let Some(b) = p.non_finite_block() {
            return Err(PolicyError::Shape(format!("non-finite value in block {}", b.name())));
        }
        Ok(p)
    }

    /// Uniform init: embeddings in `±0.5`, weights in `±1/sqrt(fan_in)`, biases zero.
    /// Each block draws from its own stream keyed by `(seed, block name)`.
    pub fn init(dims: Dims, seed: u64) -> Self {
        let mut p = Self::zeros(dims);
        for b in Block::ALL {
            let scale = match b {
                Block::Emb => 0.5,
                Block::Wc | Block::Wa => 1.0 / (dims.embed as f64).sqrt(),
                Block::Wo => 1.0 / (dims.hidden as f64).sqrt(),
                Block::Bh | Block::Bo => continue,
            };
            let mut rng = StreamRng::new(seed, "toy-policy-init", b.name());
            for v in p.block_mut(b) {
                *v = scale * (2.0 * rng.unit_f64() - 1.0);
            }
        }
        p
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn offset(&self, block: Block) -> usize {
        Block::ALL
            .iter()
            .take_while(|b| **b != block)
            .map(|b| b.len(self.dims))
            .sum()
    }

    pub fn block(&self, block: Block) -> &[f64] {
        let o = self.offset(block);
        &self.data[o..o + block.len(self.dims)]
    }

    pub fn block_mut(&mut self, block: Block) -> &mut [f64] {
        let o = self.offset(block);
        let n = block.len(self.dims);
        &mut self.data[o..o + n]
    }

    /// First block holding a NaN or infinity.
    pub fn non_finite_block(&self) -> Option<Block> {
        Block::ALL
            .into_iter()
            .find(|b| self.block(*b).iter().any(|v| !v.is_finite()))
    }

    /// `self += scale * other`.
    pub fn add_scaled(&mut self, other: &Self, scale: f64) {
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += scale * b;
        }
    }
}

/// Trainable policy and its frozen initialization.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyPair {
    pub theta: ToyPolicyParams,
    reference: ToyPolicyParams,
}

impl PolicyPair {
    pub fn new(init: ToyPolicyParams) -> Self {
        Self {
            theta: init.clone(),
            reference: init,
        }
    }

    /// Explicit pair, for tests that need `theta != reference` from the start.
    pub fn with_reference(theta: ToyPolicyParams, reference: ToyPolicyParams) -> Self {
        assert_eq!(theta.dims, reference.dims, "theta and reference dims differ");
        Self { theta, reference }
    }

    pub fn reference(&self) -> &ToyPolicyParams {
        &self.reference
    }
}

fn check_tokens(dims: Dims, tokens: &[u32], what: &'static str) -> Result<(), PolicyError> {
    if tokens.is_empty() {
        return Err(PolicyError::EmptySequence(what));
    }
    if let Some(t) = tokens.iter().find(|t| **t as usize >= dims.vocab) {
        return Err(PolicyError::OutOfVocab {
            token: format!("id {t} (vocab size {})", dims.vocab),
        });
    }
    Ok(())
}

/// `log pi(answer | context)`.
pub fn log_prob(params: &ToyPolicyParams, context: &[u32], answer: &[u32]) -> Result<f64, PolicyError> {
    run(params, context, answer, None)
}

/// `log pi(answer | context)`, accumulating `upstream * d log pi / d params` into `grad`.
pub fn log_prob_backward(
    params: &ToyPolicyParams,
    context: &[u32],
    answer: &[u32],
    upstream: f64,
    grad: &mut ToyPolicyParams,
) -> Result<f64, PolicyError> {
    assert_eq!(params.dims, grad.dims, "gradient dims differ");
    run(params, context, answer, Some((upstream, grad)))
}

fn run(
    params: &ToyPolicyParams,
    context: &[u32],
    answer: &[u32],
    mut grad: Option<(f64, &mut ToyPolicyParams)>,
) -> Result<f64, PolicyError> {
    let dims = params.dims;
    check_tokens(dims, context, "context")?;
    check_tokens(dims, answer, "answer")?;
    let (v, d, m) = (dims.vocab, dims.embed, dims.hidden);
    let emb = params.block(Block::Emb);
    let wc = params.block(Block::Wc);
    let wa = params.block(Block::Wa);
    let bh = params.block(Block::Bh);
    let wo = params.block(Block::Wo);
    let bo = params.block(Block::Bo);

    let mut h_ctx = vec![0.0; d];
    for &c in context {
        for k in 0..d {
            h_ctx[k] += emb[c as usize * d + k];
        }
    }
    let nc = context.len() as f64;
    h_ctx.iter_mut().for_each(|x| *x /= nc);
    // Context pre-activation is shared by every position.
    let mut u_ctx = bh.to_vec();
    for j in 0..m {
        for k in 0..d {
            u_ctx[j] += wc[j * d + k] * h_ctx[k];
        }
    }

    let mut prefix = vec![0.0; d];
    let mut h_t = vec![0.0; d];
    let mut z = vec![0.0; m];
    let mut logits = vec![0.0; v];
    let mut d_h_ctx = vec![0.0; d];
    // d_prefix[s][k]: gradient reaching emb[answer[s]] through later positions' prefix means.
    let mut d_prefix = vec![vec![0.0; d]; answer.len()];
    let mut total = 0.0;

    for (t, &y) in answer.iter().enumerate() {
        if t > 0 {
            for k in 0..d {
                h_t[k] = prefix[k] / t as f64;
            }
        }
        for j in 0..m {
            let mut u = u_ctx[j];
            if t > 0 {
                for k in 0..d {
                    u += wa[j * d + k] * h_t[k];
                }
            }
            z[j] = u.tanh();
        }
        for (r, l) in logits.iter_mut().enumerate() {
            *l = bo[r] + (0..m).map(|j| wo[r * m + j] * z[j]).sum::<f64>();
        }
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum_exp: f64 = logits.iter().map(|l| (l - max).exp()).sum();
        let lse = max + sum_exp.ln();
        total += logits[y as usize] - lse;

        if let Some((g, grad)) = grad.as_mut() {
            let g = *g;
            let mut dl = vec![0.0; v];
            for r in 0..v {
                let p = (logits[r] - lse).exp();
                dl[r] = g * (f64::from(r == y as usize) - p);
            }
            let mut du = vec![0.0; m];
            {
                let gwo = grad.block_mut(Block::Wo);
                for r in 0..v {
                    for j in 0..m {
                        gwo[r * m + j] += dl[r] * z[j];
                    }
                }
            }
            {
                let gbo = grad.block_mut(Block::Bo);
                for r in 0..v {
                    gbo[r] += dl[r];
                }
            }
            for j in 0..m {
                let dz: f64 = (0..v).map(|r| wo[r * m + j] * dl[r]).sum();
                du[j] = dz * (1.0 - z[j] * z[j]);
            }
            {
                let gbh = grad.block_mut(Block::Bh);
                for j in 0..m {
                    gbh[j] += du[j];
                }
            }
            {
                let gwc = grad.block_mut(Block::Wc);
                for j in 0..m {
                    for k in 0..d {
                        gwc[j * d + k] += du[j] * h_ctx[k];
                    }
                }
            }
            for k in 0..d {
                d_h_ctx[k] += (0..m).map(|j| wc[j * d + k] * du[j]).sum::<f64>();
            }
            if t > 0 {
                let gwa = grad.block_mut(Block::Wa);
                let mut d_h_t = vec![0.0; d];
                for j in 0..m {
                    for k in 0..d {
                        gwa[j * d + k] += du[j] * h_t[k];
                        d_h_t[k] += wa[j * d + k] * du[j];
                    }
                }
                for dp in d_prefix.iter_mut().take(t) {
                    for k in 0..d {
                        dp[k] += d_h_t[k] / t as f64;
                    }
                }
            }
        }

        for k in 0..d {
            prefix[k] += emb[y as usize * d + k];
        }
    }

    if let Some((_, grad)) = grad {
        let gemb = grad.block_mut(Block::Emb);
        for &c in context {
            for k in 0..d {
                gemb[c as usize * d + k] += d_h_ctx[k] / nc;
            }
        }
        for (s, &y) in answer.iter().enumerate() {
            for k in 0..d {
                gemb[y as usize * d + k] += d_prefix[s][k];
            }
        }
    }
    if !total.is_finite() {
        return Err(PolicyError::NonFinite {
            term: "log_prob".into(),
        });
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Every sequence of `len` tokens over `vocab`, in lexicographic order.
    fn all_sequences(vocab: usize, len: usize) -> Vec<Vec<u32>> {
        let mut out = vec![vec![]];
        for _ in 0..len {
            out = out
                .into_iter()
                .flat_map(|s| {
                    (0..vocab as u32).map(move |t| {
                        let mut s = s.clone();
                        s.push(t);
                        s
                    })
                })
                .collect();
        }
        out
    }

    #[test]
    fn zero_params_are_uniform() {
        let dims = Dims {
            vocab: 2,
            embed: 3,
            hidden: 2,
        };
        let lp = log_prob(&ToyPolicyParams::zeros(dims), &[0], &[1, 0]).unwrap();
        assert!((lp - 2.0 * 0.5f64.ln()).abs() < 1e-15);
        assert!((lp + 1.386294).abs() < 1e-6);
    }

    #[test]
    fn enumeration_oracle_normalizes() {
        // Oracle: an independent per-position softmax over explicitly built logits.
        for seed in 0..5 {
            for (vocab, len) in [(2, 1), (2, 3), (3, 2), (3, 3)] {
                let dims = Dims {
                    vocab,
                    embed: 3,
                    hidden: 4,
                };
                let mut p = ToyPolicyParams::init(dims, seed);
                let mut rng = StreamRng::unscoped(seed, "bias");
                for b in [Block::Bh, Block::Bo] {
                    for x in p.block_mut(b) {
                        *x = rng.unit_f64() - 0.5;
                    }
                }
                let ctx = [0u32, (vocab - 1) as u32, 1];
                let seqs = all_sequences(vocab, len);
                let total: f64 = seqs
                    .iter()
                    .map(|s| log_prob(&p, &ctx, s).unwrap().exp())
                    .sum();
                assert!((total - 1.0).abs() < 1e-12, "sum {total}");
                for s in &seqs {
                    let lp = log_prob(&p, &ctx, s).unwrap();
                    assert!(lp <= 0.0);
                    assert!((lp - oracle(&p, &ctx, s)).abs() < 1e-12);
                }
            }
        }
    }

    fn oracle(p: &ToyPolicyParams, ctx: &[u32], ans: &[u32]) -> f64 {
        let Dims { vocab, embed, hidden } = p.dims();
        let row = |b: Block, r: usize| {
            let (_, cols) = b.shape(p.dims());
            p.block(b)[r * cols..(r + 1) * cols].to_vec()
        };
        let mean = |toks: &[u32]| -> Vec<f64> {
            let mut acc = vec![0.0; embed];
            for t in toks {
                for (a, e) in acc.iter_mut().zip(row(Block::Emb, *t as usize)) {
                    *a += e;
                }
            }
            if !toks.is_empty() {
                acc.iter_mut().for_each(|a| *a /= toks.len() as f64);
            }
            acc
        };
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
        let hc = mean(ctx);
        let mut lp = 0.0;
        for t in 0..ans.len() {
            let ht = mean(&ans[..t]);
            let z: Vec<f64> = (0..hidden)
                .map(|j| {
                    (dot(&row(Block::Wc, j), &hc) + dot(&row(Block::Wa, j), &ht) + p.block(Block::Bh)[j])
                        .tanh()
                })
                .collect();
            let logits: Vec<f64> = (0..vocab)
                .map(|r| dot(&row(Block::Wo, r), &z) + p.block(Block::Bo)[r])
                .collect();
            let denom: f64 = logits.iter().map(|l| l.exp()).sum();
            lp += (logits[ans[t] as usize].exp() / denom).ln();
        }
        lp
    }

    #[test]
    fn out_of_vocab_and_empty() {
        let dims = Dims {
            vocab: 3,
            embed: 2,
            hidden: 2,
        };
        let p = ToyPolicyParams::zeros(dims);
        assert!(matches!(log_prob(&p, &[0], &[3]), Err(PolicyError::OutOfVocab { .. })));
        assert!(matches!(log_prob(&p, &[], &[1]), Err(PolicyError::EmptySequence(_))));
    }

    #[test]
    fn block_layout() {
        let dims = Dims {
            vocab: 5,
            embed: 3,
            hidden: 2,
        };
        let p = ToyPolicyParams::zeros(dims);
        assert_eq!(ToyPolicyParams::param_count(dims), 15 + 6 + 6 + 2 + 10 + 5);
        assert_eq!(p.offset(Block::Bo), 39);
        assert_eq!(Block::from_name("wa"), Some(Block::Wa));
    }
}
