use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::policy::{log_prob, log_prob_backward, PolicyPair, ToyPolicyParams};
use super::PolicyError;

/// Numerically stable `ln(1 + e^x)`.
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Logistic function without overflow for large `|x|`.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `softplus(-z)` with `z = beta * ((theta_a - ref_a) - (theta_b - ref_b))`; returns `(loss, z)`.
pub fn dpo_term(theta_a: f64, ref_a: f64, theta_b: f64, ref_b: f64, beta: f64) -> (f64, f64) {
    let z = beta * ((theta_a - ref_a) - (theta_b - ref_b));
    (softplus(-z), z)
}

/// One tokenized preference example. Contexts put video tokens before question tokens.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PanoExample {
    pub video: Vec<u32>,
    pub rejected_video: Option<Vec<u32>>,
    pub question: Vec<u32>,
    pub perturbation: Option<Vec<u32>>,
    pub chosen: Vec<u32>,
    pub rejected: Vec<u32>,
}

impl PanoExample {
    /// `v_w ++ x_w`.
    pub fn context(&self) -> Vec<u32> {
        [self.video.as_slice(), &self.question].concat()
    }

    /// `v_l ++ x_w`.
    pub fn rejected_context(&self) -> Option<Vec<u32>> {
        self.rejected_video
            .as_ref()
            .map(|v| [v.as_slice(), &self.question].concat())
    }

    /// `v_w ++ x_w ++ c`.
    pub fn perturbed_context(&self) -> Option<Vec<u32>> {
        self.perturbation
            .as_ref()
            .map(|c| [self.video.as_slice(), &self.question, c].concat())
    }

    /// Checks the response pair; with `pano`, also requires `v_l` and a non-empty `c`.
    pub fn validate(&self, pano: bool) -> Result<(), PolicyError> {
        if self.video.is_empty() && self.question.is_empty() {
            return Err(PolicyError::EmptySequence("context"));
        }
        if self.chosen.is_empty() || self.rejected.is_empty() {
            return Err(PolicyError::EmptySequence("answer"));
        }
        if self.chosen == self.rejected {
            return Err(PolicyError::Precondition("chosen and rejected answers are identical".into()));
        }
        if pano {
            if self.rejected_video.as_ref().is_none_or(|v| v.is_empty()) {
                return Err(PolicyError::Precondition("rejected video is missing".into()));
            }
            if self.perturbation.as_ref().is_none_or(|c| c.is_empty()) {
                return Err(PolicyError::Precondition("perturbation is empty".into()));
            }
        }
        Ok(())
    }

    /// Soft violations that still allow evaluation.
    pub fn warnings(&self) -> Vec<&'static str> {
        let mut w = Vec::new();
        if self.rejected_video.as_ref() == Some(&self.video) {
            w.push("rejected video equals chosen video; dpo_v is ln 2 by construction");
        }
        w
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    /// Response-conditioned term only.
    Dpo,
    /// `dpo_m + dpo_v + dpo_t`.
    #[serde(rename = "panodpo")]
    PanoDpo,
}

impl std::str::FromStr for LossKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "dpo" => Ok(Self::Dpo),
            "panodpo" => Ok(Self::PanoDpo),
            _ => Err(format!("unknown loss {s:?} (expected dpo or panodpo)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub dpo_m: f64,
    pub dpo_v: f64,
    pub dpo_t: f64,
    /// `dpo_m + dpo_v + dpo_t`, added in that order.
    pub total: f64,
    pub beta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Term {
    M,
    V,
    T { flip: bool },
}

impl Term {
    fn name(self) -> &'static str {
        match self {
            Self::M => "dpo_m",
            Self::V => "dpo_v",
            Self::T { .. } => "dpo_t",
        }
    }
}

/// Preferred and dispreferred `(context, answer)` for one term.
fn term_sides(ex: &PanoExample, term: Term) -> Result<[(Vec<u32>, &[u32]); 2], PolicyError> {
    let ctx = ex.context();
    Ok(match term {
        Term::M => [(ctx.clone(), &ex.chosen[..]), (ctx, &ex.rejected[..])],
        Term::V => {
            let ctx_l = ex
                .rejected_context()
                .ok_or_else(|| PolicyError::Precondition("rejected video is missing".into()))?;
            [(ctx, &ex.chosen[..]), (ctx_l, &ex.chosen[..])]
        }
        Term::T { flip } => {
            let ctx_c = ex
                .perturbed_context()
                .filter(|_| ex.perturbation.as_ref().is_some_and(|c| !c.is_empty()))
                .ok_or_else(|| PolicyError::Precondition("perturbation is empty".into()))?;
            // As printed, the perturbed question is the preferred side.
            if flip {
                [(ctx, &ex.chosen[..]), (ctx_c, &ex.chosen[..])]
            } else {
                [(ctx_c, &ex.chosen[..]), (ctx, &ex.chosen[..])]
            }
        }
    })
}

/// Loss of one term; with `grad`, accumulates `scale * dloss/dtheta`.
fn term_loss(
    pair: &PolicyPair,
    ex: &PanoExample,
    term: Term,
    beta: f64,
    grad: Option<(&mut ToyPolicyParams, f64)>,
) -> Result<f64, PolicyError> {
    let [(ctx_a, ans_a), (ctx_b, ans_b)] = term_sides(ex, term)?;
    let ref_a = log_prob(pair.reference(), &ctx_a, ans_a)?;
    let ref_b = log_prob(pair.reference(), &ctx_b, ans_b)?;
    let (theta_a, theta_b) = match grad {
        None => (
            log_prob(&pair.theta, &ctx_a, ans_a)?,
            log_prob(&pair.theta, &ctx_b, ans_b)?,
        ),
        Some((g, scale)) => {
            // d softplus(-z)/dz = -sigmoid(-z); z is linear in both theta log-probs.
            let (theta_a, theta_b) = (
                log_prob(&pair.theta, &ctx_a, ans_a)?,
                log_prob(&pair.theta, &ctx_b, ans_b)?,
            );
            let (_, z) = dpo_term(theta_a, ref_a, theta_b, ref_b, beta);
            let dz = -sigmoid(-z) * scale;
            log_prob_backward(&pair.theta, &ctx_a, ans_a, dz * beta, g)?;
            log_prob_backward(&pair.theta, &ctx_b, ans_b, -dz * beta, g)?;
            (theta_a, theta_b)
        }
    };
    let (loss, z) = dpo_term(theta_a, ref_a, theta_b, ref_b, beta);
    if !loss.is_finite() || !z.is_finite() {
        return Err(PolicyError::NonFinite {
            term: format!("{} (z = {z})", term.name()),
        });
    }
    Ok(loss)
}

pub fn loss_dpo_m(pair: &PolicyPair, ex: &PanoExample, beta: f64) -> Result<f64, PolicyError> {
    term_loss(pair, ex, Term::M, beta, None)
}

pub fn loss_dpo_v(pair: &PolicyPair, ex: &PanoExample, beta: f64) -> Result<f64, PolicyError> {
    term_loss(pair, ex, Term::V, beta, None)
}

/// `flip` swaps which question variant is preferred.
pub fn loss_dpo_t(
    pair: &PolicyPair,
    ex: &PanoExample,
    beta: f64,
    flip: bool,
) -> Result<f64, PolicyError> {
    term_loss(pair, ex, Term::T { flip }, beta, None)
}

/// Batch-mean value of each term and of the objective, with optional gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub dpo_m: f64,
    /// Present when every example carries a rejected video.
    pub dpo_v: Option<f64>,
    /// Present when every example carries a perturbation.
    pub dpo_t: Option<f64>,
    pub objective: f64,
    pub grad: Option<ToyPolicyParams>,
}

impl Evaluation {
    pub fn breakdown(&self, beta: f64) -> Option<LossBreakdown> {
        let (v, t) = (self.dpo_v?, self.dpo_t?);
        Some(LossBreakdown {
            dpo_m: self.dpo_m,
            dpo_v: v,
            dpo_t: t,
            total: self.dpo_m + v + t,
            beta,
        })
    }
}

/// Evaluates a batch. Examples run in parallel; results are reduced in batch order.
pub fn evaluate(
    pair: &PolicyPair,
    batch: &[PanoExample],
    beta: f64,
    kind: LossKind,
    flip_dpo_t: bool,
    with_grad: bool,
) -> Result<Evaluation, PolicyError> {
    if batch.is_empty() {
        return Err(PolicyError::Precondition("empty batch".into()));
    }
    if !(beta >= 0.0 && beta.is_finite()) {
        return Err(PolicyError::Precondition(format!("beta must be finite and >= 0, got {beta}")));
    }
    let pano = kind == LossKind::PanoDpo;
    for ex in batch {
        ex.validate(pano)?;
    }
    let has_v = batch.iter().all(|e| e.rejected_video.is_some());
    let has_t = batch.iter().all(|e| e.perturbation.as_ref().is_some_and(|c| !c.is_empty()));
    let scale = 1.0 / batch.len() as f64;
    let dims = pair.theta.dims();
    let t_term = Term::T { flip: flip_dpo_t };

    let per_example = batch
        .par_iter()
        .map(|ex| {
            let mut g = with_grad.then(|| ToyPolicyParams::zeros(dims));
            let mut eval = |term: Term, optimized: bool| match (&mut g, optimized) {
                (Some(g), true) => term_loss(pair, ex, term, beta, Some((g, scale))),
                _ => term_loss(pair, ex, term, beta, None),
            };
            let m = eval(Term::M, true)?;
            let v = if has_v { Some(eval(Term::V, pano)?) } else { None };
            let t = if has_t { Some(eval(t_term, pano)?) } else { None };
            Ok::<_, PolicyError>((m, v, t, g))
        })
        .collect::<Result<Vec<_>, _>>()?;

    let mut out = Evaluation {
        dpo_m: 0.0,
        dpo_v: has_v.then_some(0.0),
        dpo_t: has_t.then_some(0.0),
        objective: 0.0,
        grad: with_grad.then(|| ToyPolicyParams::zeros(dims)),
    };
    for (m, v, t, g) in per_example {
        out.dpo_m += m;
        if let (Some(acc), Some(v)) = (out.dpo_v.as_mut(), v) {
            *acc += v;
        }
        if let (Some(acc), Some(t)) = (out.dpo_t.as_mut(), t) {
            *acc += t;
        }
        if let (Some(acc), Some(g)) = (out.grad.as_mut(), g) {
            acc.add_scaled(&g, 1.0);
        }
    }
    out.dpo_m *= scale;
    out.dpo_v = out.dpo_v.map(|v| v * scale);
    out.dpo_t = out.dpo_t.map(|t| t * scale);
    out.objective = match kind {
        LossKind::Dpo => out.dpo_m,
        LossKind::PanoDpo => out.dpo_m + out.dpo_v.unwrap_or(0.0) + out.dpo_t.unwrap_or(0.0),
    };
    if let Some(b) = out.grad.as_ref().and_then(ToyPolicyParams::non_finite_block) {
        return Err(PolicyError::NonFiniteGradient { block: b.name() });
    }
    Ok(out)
}

/// Batch-mean PanoDPO loss.
pub fn loss_pano(
    pair: &PolicyPair,
    batch: &[PanoExample],
    beta: f64,
    flip_dpo_t: bool,
) -> Result<LossBreakdown, PolicyError> {
    let e = evaluate(pair, batch, beta, LossKind::PanoDpo, flip_dpo_t, false)?;
    Ok(e.breakdown(beta).expect("pano batches carry every term"))
}

/// Gradient of the batch-mean PanoDPO total with respect to theta. The reference gets none.
pub fn backward(
    pair: &PolicyPair,
    batch: &[PanoExample],
    beta: f64,
    flip_dpo_t: bool,
) -> Result<(LossBreakdown, ToyPolicyParams), PolicyError> {
    let e = evaluate(pair, batch, beta, LossKind::PanoDpo, flip_dpo_t, true)?;
    let breakdown = e.breakdown(beta).expect("pano batches carry every term");
    Ok((breakdown, e.grad.expect("requested")))
}

/// Mean of `log pi(chosen | v_w, x) - log pi(rejected | v_w, x)` under `params`.
pub fn mean_gap(params: &ToyPolicyParams, examples: &[PanoExample]) -> Result<f64, PolicyError> {
    if examples.is_empty() {
        return Err(PolicyError::Precondition("no examples for the gap".into()));
    }
    let gaps = examples
        .par_iter()
        .map(|ex| {
            let ctx = ex.context();
            Ok(log_prob(params, &ctx, &ex.chosen)? - log_prob(params, &ctx, &ex.rejected)?)
        })
        .collect::<Result<Vec<f64>, PolicyError>>()?;
    Ok(gaps.iter().sum::<f64>() / gaps.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::panodpo::policy::{Block, Dims};
    use crate::rng::StreamRng;
    use proptest::prelude::*;

    const LN2: f64 = std::f64::consts::LN_2;

    /// Closed form evaluated directly from probabilities, independent of `dpo_term`.
    fn closed_form(pw: f64, rw: f64, pl: f64, rl: f64, beta: f64) -> f64 {
        let z = beta * ((pw / rw).ln() - (pl / rl).ln());
        -(1.0 / (1.0 + (-z).exp())).ln()
    }

    /// `|V| = 2`, `d = m = 1`: pi(token 0 | context mean h) is 0.8 at `h_pref`, 0.2 at `h_disp`.
    fn two_point(h_pref: f64, h_disp: f64) -> ToyPolicyParams {
        let dims = Dims {
            vocab: 2,
            embed: 1,
            hidden: 1,
        };
        let mut p = ToyPolicyParams::zeros(dims);
        p.block_mut(Block::Emb).copy_from_slice(&[1.0, -1.0]);
        p.block_mut(Block::Wc)[0] = 1.0;
        p.block_mut(Block::Bh)[0] = -(h_pref + h_disp) / 2.0;
        let s = 4f64.ln() / (2.0 * ((h_pref - h_disp) / 2.0).tanh());
        p.block_mut(Block::Wo).copy_from_slice(&[s, -s]);
        p
    }

    fn spot_pair(theta: ToyPolicyParams) -> PolicyPair {
        let dims = theta.dims();
        PolicyPair::with_reference(theta, ToyPolicyParams::zeros(dims))
    }

    #[test]
    fn spot_value_through_the_policy() {
        let oracle = closed_form(0.8, 0.5, 0.2, 0.5, 0.1);
        assert!((oracle - 0.626_232_806_408_696).abs() < 1e-12);

        // dpo_m: one context, answers [0] vs [1].
        let ex_m = PanoExample {
            video: vec![0],
            rejected_video: None,
            question: vec![0],
            perturbation: None,
            chosen: vec![0],
            rejected: vec![1],
        };
        let pair = spot_pair(two_point(1.0, -1.0));
        assert!((log_prob(&pair.theta, &ex_m.context(), &[0]).unwrap().exp() - 0.8).abs() < 1e-12);
        assert!((loss_dpo_m(&pair, &ex_m, 0.1).unwrap() - oracle).abs() < 1e-12);

        // dpo_v: v_w = [0] gives mean 1, v_l = [1] gives mean -1.
        let ex_v = PanoExample {
            rejected_video: Some(vec![1]),
            question: vec![0, 1],
            ..ex_m.clone()
        };
        let pair = spot_pair(two_point(1.0 / 3.0, -1.0 / 3.0));
        assert!((loss_dpo_v(&pair, &ex_v, 0.1).unwrap() - oracle).abs() < 1e-12);

        // dpo_t: x = [1] with v = [1] has mean -1; appending c = [0, 0, 0, 0] gives mean 1/3.
        let ex_t = PanoExample {
            video: vec![1],
            question: vec![1],
            perturbation: Some(vec![0, 0, 0, 0]),
            ..ex_m.clone()
        };
        let pair = spot_pair(two_point(1.0 / 3.0, -1.0));
        assert!((loss_dpo_t(&pair, &ex_t, 0.1, false).unwrap() - oracle).abs() < 1e-12);
        // Flipped, the same probabilities land on the other side of zero.
        let flipped = closed_form(0.2, 0.5, 0.8, 0.5, 0.1);
        assert!((loss_dpo_t(&pair, &ex_t, 0.1, true).unwrap() - flipped).abs() < 1e-12);
    }

    #[test]
    fn closed_form_total_of_three_spot_terms() {
        let (l, _) = dpo_term(0.8f64.ln(), 0.5f64.ln(), 0.2f64.ln(), 0.5f64.ln(), 0.1);
        let oracle = closed_form(0.8, 0.5, 0.2, 0.5, 0.1);
        assert!((l - oracle).abs() < 1e-12);
        assert!((3.0 * l - 1.878_698_419_226_088).abs() < 1e-9);
    }

    fn random_example(rng: &mut StreamRng, vocab: usize) -> PanoExample {
        let mut seq = |min: usize| -> Vec<u32> {
            let n = rng.in_range(min, 4);
            (0..n).map(|_| rng.below(vocab) as u32).collect()
        };
        let video = seq(1);
        let question = seq(1);
        let perturbation = Some(seq(1));
        let mut rejected_video = seq(1);
        if rejected_video == video {
            rejected_video.push(0);
        }
        let chosen = seq(1);
        let mut rejected = seq(1);
        if rejected == chosen {
            rejected.push(1);
        }
        PanoExample {
            video,
            rejected_video: Some(rejected_video),
            question,
            perturbation,
            chosen,
            rejected,
        }
    }

    fn random_setup(seed: u64) -> (PolicyPair, Vec<PanoExample>) {
        let mut rng = StreamRng::unscoped(seed, "loss-test");
        let dims = Dims {
            vocab: rng.in_range(2, 8),
            embed: rng.in_range(1, 4),
            hidden: rng.in_range(1, 4),
        };
        let pair = PolicyPair::new(ToyPolicyParams::init(dims, seed));
        let batch = (0..rng.in_range(1, 3)).map(|_| random_example(&mut rng, dims.vocab)).collect();
        (pair, batch)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn fixed_point_is_ln2(seed: u64, beta in 0.0f64..2.0) {
            let (pair, batch) = random_setup(seed);
            for ex in &batch {
                prop_assert!((loss_dpo_m(&pair, ex, beta).unwrap() - LN2).abs() < 1e-12);
                prop_assert!((loss_dpo_v(&pair, ex, beta).unwrap() - LN2).abs() < 1e-12);
                prop_assert!((loss_dpo_t(&pair, ex, beta, false).unwrap() - LN2).abs() < 1e-12);
            }
            let b = loss_pano(&pair, &batch, beta, false).unwrap();
            prop_assert!((b.total - 3.0 * LN2).abs() < 1e-12);
        }

        #[test]
        fn terms_positive_and_total_dominates(seed: u64, beta in 0.01f64..5.0) {
            let (mut pair, batch) = random_setup(seed);
            let mut rng = StreamRng::unscoped(seed, "perturb-theta");
            for x in pair.theta.data_mut() {
                *x += rng.unit_f64() - 0.5;
            }
            let b = loss_pano(&pair, &batch, beta, false).unwrap();
            prop_assert!(b.dpo_m > 0.0 && b.dpo_v > 0.0 && b.dpo_t > 0.0);
            prop_assert_eq!(b.total, b.dpo_m + b.dpo_v + b.dpo_t);
            prop_assert!(b.total >= b.dpo_m.max(b.dpo_v).max(b.dpo_t));
        }

        #[test]
        fn softplus_decreasing_in_z(z in -50.0f64..50.0, dz in 1e-3f64..5.0) {
            prop_assert!(softplus(-z) > 0.0);
            prop_assert!(softplus(-(z + dz)) < softplus(-z));
        }
    }

    #[test]
    fn beta_zero_and_identical_videos_give_ln2() {
        let (mut pair, batch) = random_setup(3);
        for x in pair.theta.data_mut() {
            *x *= 1.7;
        }
        let ex = &batch[0];
        assert!((loss_dpo_m(&pair, ex, 0.0).unwrap() - LN2).abs() < 1e-15);
        let same = PanoExample {
            rejected_video: Some(ex.video.clone()),
            ..ex.clone()
        };
        assert!((loss_dpo_v(&pair, &same, 0.1).unwrap() - LN2).abs() < 1e-15);
        assert_eq!(same.warnings().len(), 1);
    }

    #[test]
    fn empty_perturbation_is_a_precondition_error() {
        let (pair, batch) = random_setup(5);
        let ex = PanoExample {
            perturbation: Some(vec![]),
            ..batch[0].clone()
        };
        assert!(matches!(
            loss_dpo_t(&pair, &ex, 0.1, false),
            Err(PolicyError::Precondition(_))
        ));
        let same_answers = PanoExample {
            rejected: batch[0].chosen.clone(),
            ..batch[0].clone()
        };
        assert!(loss_pano(&pair, &[same_answers], 0.1, false).is_err());
    }

    #[test]
    fn doubling_beta_at_reference_doubles_gradient() {
        for seed in 0..5 {
            let (pair, batch) = random_setup(seed);
            let (_, g1) = backward(&pair, &batch, 0.1, false).unwrap();
            let (_, g2) = backward(&pair, &batch, 0.2, false).unwrap();
            for (a, b) in g1.data().iter().zip(g2.data()) {
                assert!((2.0 * a - b).abs() <= 1e-15 + 1e-12 * b.abs());
            }
            let (_, gm) = {
                let e = evaluate(&pair, &batch, 0.1, LossKind::Dpo, false, true).unwrap();
                (e.objective, e.grad.unwrap())
            };
            assert!(gm.data().iter().any(|x| *x != 0.0));
        }
    }
}
