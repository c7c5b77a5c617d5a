//! The three preference terms on a tiny policy: at the reference, and after theta moves.
//!
//! Run: `cargo run --example panodpo_losses`

use temrob::panodpo::{
    backward, dpo_term, loss_dpo_m, loss_dpo_t, loss_dpo_v, loss_pano, Dims, PanoExample,
    PolicyPair, ToyPolicyParams,
};

fn main() -> anyhow::Result<()> {
    // Ids index a 10-token vocabulary; the policy never needs the strings.
    let ex = PanoExample {
        video: vec![4, 5, 6, 7],
        rejected_video: Some(vec![4, 5, 8, 7]),
        question: vec![3, 9],
        perturbation: Some(vec![8, 9]),
        chosen: vec![6, 2],
        rejected: vec![8, 2],
    };
    for w in ex.warnings() {
        println!("warning: {w}");
    }
    let dims = Dims {
        vocab: 10,
        embed: 6,
        hidden: 8,
    };
    let beta = 0.1;
    let mut pair = PolicyPair::new(ToyPolicyParams::init(dims, 3));
    let report = |pair: &PolicyPair, label: &str| -> anyhow::Result<()> {
        let m = loss_dpo_m(pair, &ex, beta)?;
        let v = loss_dpo_v(pair, &ex, beta)?;
        let t = loss_dpo_t(pair, &ex, beta, false)?;
        let t_flip = loss_dpo_t(pair, &ex, beta, true)?;
        let total = loss_pano(pair, std::slice::from_ref(&ex), beta, false)?.total;
        println!(
            "{label:<22} m {m:.6}  v {v:.6}  t {t:.6} (flipped {t_flip:.6})  total {total:.6}"
        );
        Ok(())
    };
    report(&pair, "theta = reference")?;
    println!("{:<22} every term is ln 2 = {:.6}", "", std::f64::consts::LN_2);

    // A few plain gradient steps on the summed objective.
    for step in 1..=30 {
        let (_, grad) = backward(&pair, std::slice::from_ref(&ex), beta, false)?;
        pair.theta.add_scaled(&grad, -2.0);
        if step % 10 == 0 {
            report(&pair, &format!("after {step} steps"))?;
        }
    }

    // The scalar form: log-probabilities in, loss and margin out.
    let (loss, z) = dpo_term(0.8f64.ln(), 0.5f64.ln(), 0.2f64.ln(), 0.5f64.ln(), beta);
    println!("\np_w 0.8 vs ref 0.5, p_l 0.2 vs ref 0.5, beta 0.1: margin {z:.6}, loss {loss:.9}");
    Ok(())
}
