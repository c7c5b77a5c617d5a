//! Hand-written backward pass against central finite differences, block by block.
//!
//! Run: `cargo run --example gradient_check [SEED]`

use temrob::panodpo::{backward, loss_pano, Block, Dims, PanoExample, PolicyPair, ToyPolicyParams};
use temrob::rng::StreamRng;

const STEP: f64 = 1e-5;

fn main() -> anyhow::Result<()> {
    let seed: u64 = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(0);
    let mut rng = StreamRng::unscoped(seed, "gradient-check-example");
    let dims = Dims {
        vocab: 7,
        embed: 3,
        hidden: 4,
    };
    let mut random = || {
        let mut p = ToyPolicyParams::zeros(dims);
        for v in p.data_mut() {
            *v = rng.unit_f64() * 2.0 - 1.0;
        }
        p
    };
    let pair = PolicyPair::with_reference(random(), random());
    let batch = vec![
        PanoExample {
            video: vec![1, 2, 3],
            rejected_video: Some(vec![1, 3, 2]),
            question: vec![4],
            perturbation: Some(vec![5, 6]),
            chosen: vec![3, 2],
            rejected: vec![6],
        },
        PanoExample {
            video: vec![6],
            rejected_video: Some(vec![0]),
            question: vec![5, 4, 3],
            perturbation: Some(vec![1]),
            chosen: vec![2, 2, 2],
            rejected: vec![1, 2],
        },
    ];
    let beta = 0.5;
    let (breakdown, grad) = backward(&pair, &batch, beta, false)?;
    println!("loss {:.6} (m {:.6}, v {:.6}, t {:.6})", breakdown.total, breakdown.dpo_m, breakdown.dpo_v, breakdown.dpo_t);

    let total = |theta: ToyPolicyParams| -> anyhow::Result<f64> {
        let p = PolicyPair::with_reference(theta, pair.reference().clone());
        Ok(loss_pano(&p, &batch, beta, false)?.total)
    };
    for block in Block::ALL {
        let offset = pair.theta.offset(block);
        let mut worst: f64 = 0.0;
        for i in offset..offset + block.len(dims) {
            let mut plus = pair.theta.clone();
            plus.data_mut()[i] += STEP;
            let mut minus = pair.theta.clone();
            minus.data_mut()[i] -= STEP;
            let numeric = (total(plus)? - total(minus)?) / (2.0 * STEP);
            let analytic = grad.data()[i];
            // Floor the scale so near-zero entries are compared absolutely.
            let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6);
            worst = worst.max(rel);
        }
        println!("{:<4} {:>3} params  max relative error {worst:.2e}", block.name(), block.len(dims));
    }
    Ok(())
}
