//! Fixtures and independent oracles shared by the integration tests.
#![allow(dead_code)]

use temrob::annotations::{EventAnnotation, VideoRecord};
use temrob::metrics::{ParsedRole, SelectionRecord};
use temrob::panodpo::{
    backward, loss_pano, Dims, PanoExample, PolicyPair, ToyPolicyParams,
};
use temrob::perturb::{build_item, BenchmarkItem, Setting, Severity};
use temrob::rng::StreamRng;

const DESCRIPTIONS: [&str; 8] = [
    "unpack the ingredients",
    "rinse the vegetables",
    "chop the onions",
    "heat the oil",
    "fry the onions",
    "add the sauce",
    "simmer the pot",
    "plate the dish",
];

/// A video with `n` evenly spaced, distinctly described events.
pub fn video(id: &str, n: usize) -> VideoRecord {
    VideoRecord {
        video_id: id.into(),
        duration: 10.0 * n as f64,
        events: (0..n)
            .map(|i| EventAnnotation {
                event_id: format!("{}", i + 1),
                description: DESCRIPTIONS[i].into(),
                start: 10.0 * i as f64,
                end: 10.0 * i as f64 + 8.0,
            })
            .collect(),
    }
}

pub fn manifest(videos: usize) -> Vec<VideoRecord> {
    (0..videos).map(|i| video(&format!("vid{i:02}"), 3 + i % 5)).collect()
}

/// Clean and adversarial items for every severity of every video.
pub fn bench(videos: usize, seed: u64) -> Vec<BenchmarkItem> {
    let mut out = Vec::new();
    for record in manifest(videos) {
        for s in Severity::ALL {
            let pair = build_item(&record, s, seed).expect("fixture videos build");
            out.push(pair.clean);
            out.push(pair.adversarial);
        }
    }
    out
}

/// One item of a synthetic paired log.
#[derive(Debug, Clone)]
pub struct SynthItem {
    pub id: String,
    pub severity: Severity,
    pub clean: ParsedRole,
    /// Adversarial outcome per round; round 0 is the plain evaluation.
    pub adv: [ParsedRole; 4],
}

const ROLES: [ParsedRole; 4] = [
    ParsedRole::Correct,
    ParsedRole::Shortcut,
    ParsedRole::Incorrect,
    ParsedRole::Unparsable,
];

/// Up to 50 items with random outcomes, and their log records in shuffled order.
pub fn random_log(seed: u64) -> (Vec<SynthItem>, Vec<SelectionRecord>) {
    let mut rng = StreamRng::unscoped(seed, "acceptance-log");
    let n = rng.in_range(1, 50);
    // Skewing towards correct keeps FR/WFR denominators non-empty most of the time.
    let role = |rng: &mut StreamRng| {
        if rng.below(3) == 0 {
            ParsedRole::Correct
        } else {
            ROLES[rng.below(4)]
        }
    };
    let items: Vec<SynthItem> = (0..n)
        .map(|i| SynthItem {
            id: format!("item{i}"),
            severity: Severity::ALL[rng.below(4)],
            clean: role(&mut rng),
            adv: [role(&mut rng), role(&mut rng), role(&mut rng), role(&mut rng)],
        })
        .collect();
    let record = |item: &SynthItem, setting, round: u8, role| SelectionRecord {
        item_id: item.id.clone(),
        setting,
        round,
        raw_text: String::new(),
        parsed_letter: None,
        parsed_role: role,
        error: None,
        severity: Some(item.severity),
    };
    let mut records = Vec::new();
    for item in &items {
        records.push(record(item, Setting::Clean, 0, item.clean));
        for (r, &role) in item.adv.iter().enumerate() {
            records.push(record(item, Setting::Adversarial, r as u8, role));
        }
    }
    rng.shuffle(&mut records);
    (items, records)
}

/// Metrics recomputed from the definitions by counting.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleMetrics {
    pub acc_clean: Option<f64>,
    pub acc_adv: Option<f64>,
    pub fr: Option<f64>,
    pub wfr: Option<f64>,
    pub t_acc: Option<f64>,
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    if den == 0 {
        None
    } else {
        Some(num as f64 / den as f64)
    }
}

pub fn oracle_metrics(items: &[SynthItem]) -> OracleMetrics {
    let n = items.len();
    let mut clean_ok = 0;
    let mut adv_ok = 0;
    let mut base = 0;
    let mut flips = 0;
    let mut weak_flips = 0;
    let mut truly = 0;
    for it in items {
        if it.clean == ParsedRole::Correct {
            clean_ok += 1;
            base += 1;
            if it.adv[0] == ParsedRole::Shortcut {
                flips += 1;
            }
            if it.adv[0] != ParsedRole::Correct {
                weak_flips += 1;
            }
        }
        if it.adv[0] == ParsedRole::Correct {
            adv_ok += 1;
        }
        let mut rounds_ok = 0;
        for r in it.adv {
            if r == ParsedRole::Correct {
                rounds_ok += 1;
            }
        }
        if rounds_ok >= 3 {
            truly += 1;
        }
    }
    OracleMetrics {
        acc_clean: ratio(clean_ok, n),
        acc_adv: ratio(adv_ok, n),
        fr: ratio(flips, base),
        wfr: ratio(weak_flips, base),
        t_acc: ratio(truly, n),
    }
}

/// A random small problem for gradient checking.
pub struct GradProblem {
    pub pair: PolicyPair,
    pub batch: Vec<PanoExample>,
    pub beta: f64,
    pub flip: bool,
}

fn random_params(dims: Dims, rng: &mut StreamRng) -> ToyPolicyParams {
    let mut p = ToyPolicyParams::zeros(dims);
    for v in p.data_mut() {
        *v = rng.unit_f64() * 2.0 - 1.0;
    }
    p
}

/// `|V| <= 8`, `d, m <= 4`, sequences of 1 to 5 tokens, 1 to 3 examples.
pub fn grad_problem(seed: u64) -> GradProblem {
    let mut rng = StreamRng::unscoped(seed, "gradcheck-problem");
    let dims = Dims {
        vocab: rng.in_range(2, 8),
        embed: rng.in_range(1, 4),
        hidden: rng.in_range(1, 4),
    };
    let theta = random_params(dims, &mut rng);
    let reference = random_params(dims, &mut rng);
    let seq = |rng: &mut StreamRng| -> Vec<u32> {
        let len = rng.in_range(1, 5);
        (0..len).map(|_| rng.below(dims.vocab) as u32).collect()
    };
    let batch = (0..rng.in_range(1, 3))
        .map(|_| {
            let video = seq(&mut rng);
            let mut rejected_video = seq(&mut rng);
            if rejected_video == video {
                rejected_video.reverse();
                rejected_video.push(0);
            }
            let chosen = seq(&mut rng);
            let mut rejected = seq(&mut rng);
            if rejected == chosen {
                rejected.push(1);
            }
            PanoExample {
                video,
                rejected_video: Some(rejected_video),
                question: seq(&mut rng),
                perturbation: Some(seq(&mut rng)),
                chosen,
                rejected,
            }
        })
        .collect();
    GradProblem {
        pair: PolicyPair::with_reference(theta, reference),
        batch,
        beta: 0.1 + 0.9 * rng.unit_f64(),
        flip: rng.below(2) == 1,
    }
}

/// Relative error with a floor on the scale, so entries near zero are judged
/// against `GRAD_SCALE_FLOOR` instead of their own tiny magnitude.
pub const GRAD_SCALE_FLOOR: f64 = 1e-6;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(GRAD_SCALE_FLOOR)
}

/// Max relative error of the PanoDPO gradient against central differences with step `h`.
pub fn gradcheck(problem: &GradProblem, h: f64) -> (f64, usize) {
    let GradProblem {
        pair,
        batch,
        beta,
        flip,
    } = problem;
    let (_, grad) = backward(pair, batch, *beta, *flip).expect("backward");
    let total = |theta: ToyPolicyParams| {
        let p = PolicyPair::with_reference(theta, pair.reference().clone());
        loss_pano(&p, batch, *beta, *flip).expect("loss").total
    };
    let n = pair.theta.data().len();
    let mut worst = 0.0f64;
    for i in 0..n {
        let mut plus = pair.theta.clone();
        plus.data_mut()[i] += h;
        let mut minus = pair.theta.clone();
        minus.data_mut()[i] -= h;
        let numeric = (total(plus) - total(minus)) / (2.0 * h);
        worst = worst.max(relative_error(grad.data()[i], numeric));
    }
    (worst, n)
}
