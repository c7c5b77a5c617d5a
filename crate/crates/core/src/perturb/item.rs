use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::{
    absolute_disorder_with, light_disorder_with, relative_disorder_with, require_events,
    severe_disorder_with, DisorderedText, EditPlan, Modality, Permutation, PerturbError, Setting,
    Severity,
};
use crate::annotations::VideoRecord;
use crate::rng::StreamRng;

pub const OPTION_LETTERS: [char; 4] = ['A', 'B', 'C', 'D'];

pub const INTRINSIC_QUESTION: &str = "What is the correct sequence of events in the video?";

/// Incorrect options for two-event order questions; both leave the order space.
pub const EXTRINSIC_DISTRACTORS: [&str; 2] = [
    "The two events occur simultaneously.",
    "Neither event appears in the video.",
];

// Draws per item before giving up on distinguishable option texts.
const PERTURBATION_ATTEMPTS: usize = 64;
const DISTRACTOR_ATTEMPTS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptionRole {
    Correct,
    Shortcut,
    Incorrect,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnswerOption {
    pub text: String,
    pub role: OptionRole,
}

/// One QA instance. Option letters are positional: `options[i]` is `OPTION_LETTERS[i]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BenchRecord", into = "BenchRecord")]
pub struct BenchmarkItem {
    pub item_id: String,
    pub video_id: String,
    pub severity: Severity,
    pub setting: Setting,
    pub question: String,
    pub options: Vec<AnswerOption>,
    /// Event descriptions in true temporal order.
    pub event_descriptions: Vec<String>,
    pub edit_plan: Option<EditPlan>,
    pub disordered_text: Option<DisorderedText>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ItemPair {
    pub clean: BenchmarkItem,
    pub adversarial: BenchmarkItem,
}

impl BenchmarkItem {
    pub fn modality(&self) -> Modality {
        self.severity.modality()
    }

    pub fn correct_index(&self) -> Option<usize> {
        self.options.iter().position(|o| o.role == OptionRole::Correct)
    }

    pub fn correct_letter(&self) -> Option<char> {
        self.correct_index().map(|i| OPTION_LETTERS[i])
    }

    pub fn letter_of(&self, role: OptionRole) -> Option<char> {
        self.options
            .iter()
            .position(|o| o.role == role)
            .map(|i| OPTION_LETTERS[i])
    }

    /// Descriptions in the order the prompt shows them (extrinsic items only).
    pub fn context_descriptions(&self) -> Option<Vec<&str>> {
        self.disordered_text.as_ref().map(|t| {
            t.order
                .iter()
                .map(|&i| self.event_descriptions[i].as_str())
                .collect()
        })
    }

    fn check_options(&self) -> Result<(), PerturbError> {
        let count = |r| self.options.iter().filter(|o| o.role == r).count();
        let texts: HashSet<&str> = self.options.iter().map(|o| o.text.as_str()).collect();
        if self.options.len() != 4
            || count(OptionRole::Correct) != 1
            || count(OptionRole::Shortcut) != 1
            || count(OptionRole::Incorrect) != 2
            || texts.len() != 4
        {
            return Err(PerturbError::MalformedOptions(self.item_id.clone()));
        }
        Ok(())
    }
}

fn join_order(descriptions: &[String], order: &[usize]) -> String {
    order
        .iter()
        .map(|&i| descriptions[i].as_str())
        .collect::<Vec<_>>()
        .join(", ")
}

fn before(a: &str, b: &str) -> String {
    format!("{a} occurs before {b}")
}

fn stream_tag(severity: Severity) -> &'static str {
    match severity {
        Severity::Light => "intrinsic-light",
        Severity::Severe => "intrinsic-severe",
        Severity::Absolute => "extrinsic-absolute",
        Severity::Relative => "extrinsic-relative",
    }
}

/// Builds the clean and adversarial variants of one item.
///
/// Both variants share `item_id`, question and option letters. For intrinsic
/// items the clean video is unedited, so the original sequence is the correct
/// option there and the edited sequence takes the shortcut role; extrinsic
/// items keep identical roles because the video order never changes.
pub fn build_item(
    record: &VideoRecord,
    severity: Severity,
    seed: u64,
) -> Result<ItemPair, PerturbError> {
    let n = record.events.len();
    require_events(n)?;
    let descriptions: Vec<String> = record.events.iter().map(|e| e.description.clone()).collect();
    let mut rng = StreamRng::new(seed, &record.video_id, stream_tag(severity));
    let item_id = format!("{}/{}", record.video_id, stream_tag(severity));

    let skeleton = |setting, question: String, options, edit_plan, disordered_text| BenchmarkItem {
        item_id: item_id.clone(),
        video_id: record.video_id.clone(),
        severity,
        setting,
        question,
        options,
        event_descriptions: descriptions.clone(),
        edit_plan,
        disordered_text,
        seed,
    };

    let pair = match severity.modality() {
        Modality::Intrinsic => {
            let original = join_order(&descriptions, Permutation::identity(n).as_slice());
            let mut edited = None;
            for _ in 0..PERTURBATION_ATTEMPTS {
                let perm = match severity {
                    Severity::Light => light_disorder_with(n, &mut rng)?,
                    _ => severe_disorder_with(n, &mut rng)?,
                };
                let text = join_order(&descriptions, perm.as_slice());
                if text != original {
                    edited = Some((perm, text));
                    break;
                }
            }
            let (perm, edited_text) = edited
                .ok_or_else(|| PerturbError::IndistinguishableEvents(record.video_id.clone()))?;

            let mut taken: HashSet<String> = [original.clone(), edited_text.clone()].into();
            let mut incorrect = Vec::with_capacity(2);
            let mut attempts = 0;
            while incorrect.len() < 2 {
                attempts += 1;
                if attempts > DISTRACTOR_ATTEMPTS {
                    return Err(PerturbError::TooFewDistinctOrders(record.video_id.clone()));
                }
                let mut order: Vec<usize> = (0..n).collect();
                rng.shuffle(&mut order);
                let text = join_order(&descriptions, &order);
                if taken.insert(text.clone()) {
                    incorrect.push(text);
                }
            }

            // Same letter for the same text in both variants; only roles differ.
            let texts = [edited_text.clone(), original.clone(), incorrect[0].clone(), incorrect[1].clone()];
            let layout = option_layout(&mut rng);
            let arrange = |roles: [OptionRole; 4]| {
                layout
                    .iter()
                    .map(|&i| AnswerOption {
                        text: texts[i].clone(),
                        role: roles[i],
                    })
                    .collect::<Vec<_>>()
            };
            use OptionRole::{Correct, Incorrect, Shortcut};
            let q = INTRINSIC_QUESTION.to_string();
            ItemPair {
                clean: skeleton(
                    Setting::Clean,
                    q.clone(),
                    arrange([Shortcut, Correct, Incorrect, Incorrect]),
                    Some(EditPlan::from_permutation(record, &Permutation::identity(n))),
                    None,
                ),
                adversarial: skeleton(
                    Setting::Adversarial,
                    q,
                    arrange([Correct, Shortcut, Incorrect, Incorrect]),
                    Some(EditPlan::from_permutation(record, &perm)),
                    None,
                ),
            }
        }
        Modality::Extrinsic => {
            let mut chosen = None;
            for _ in 0..PERTURBATION_ATTEMPTS {
                let text = match severity {
                    Severity::Absolute => absolute_disorder_with(n, &mut rng)?,
                    _ => relative_disorder_with(n, &mut rng)?,
                };
                // The contradicted pair, in true video order.
                let (first, second) = match text.inserted {
                    Some(k) => (text.target_pair.1, k),
                    None => text.target_pair,
                };
                if descriptions[first] != descriptions[second] {
                    chosen = Some((text, first, second));
                    break;
                }
            }
            let (text, first, second) = chosen
                .ok_or_else(|| PerturbError::IndistinguishableEvents(record.video_id.clone()))?;
            let (a, b) = (&descriptions[first], &descriptions[second]);
            let (x, y) = if rng.below(2) == 0 { (a, b) } else { (b, a) };
            let question = format!(
                "According to the video, what is the actual order of the events \"{x}\" and \"{y}\"?"
            );
            let roles = [
                (before(a, b), OptionRole::Correct),
                (before(b, a), OptionRole::Shortcut),
                (EXTRINSIC_DISTRACTORS[0].to_string(), OptionRole::Incorrect),
                (EXTRINSIC_DISTRACTORS[1].to_string(), OptionRole::Incorrect),
            ];
            let layout = option_layout(&mut rng);
            let options: Vec<AnswerOption> = layout
                .iter()
                .map(|&i| AnswerOption {
                    text: roles[i].0.clone(),
                    role: roles[i].1,
                })
                .collect();
            let clean_text = DisorderedText {
                order: (0..n).collect(),
                ..text.clone()
            };
            ItemPair {
                clean: skeleton(
                    Setting::Clean,
                    question.clone(),
                    options.clone(),
                    None,
                    Some(clean_text),
                ),
                adversarial: skeleton(Setting::Adversarial, question, options, None, Some(text)),
            }
        }
    };
    pair.clean.check_options()?;
    pair.adversarial.check_options()?;
    Ok(pair)
}

fn option_layout(rng: &mut StreamRng) -> [usize; 4] {
    let mut layout = [0, 1, 2, 3];
    rng.shuffle(&mut layout);
    layout
}

/// Four copies of `item` with the correct option rotated through A, B, C, D.
///
/// Round `r` puts the correct option at letter `r`; the other three options
/// are shuffled into the remaining letters from a stream keyed by
/// `(seed, item_id)`, so clean and adversarial variants get the same layouts.
pub fn shuffle_option_rounds(
    item: &BenchmarkItem,
    seed: u64,
) -> Result<[BenchmarkItem; 4], PerturbError> {
    item.check_options()?;
    let correct = item.correct_index().expect("checked");
    let mut rng = StreamRng::new(seed, &item.item_id, "option-rounds");
    let rounds = std::array::from_fn(|r| {
        let mut others: Vec<AnswerOption> = item
            .options
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != correct)
            .map(|(_, o)| o.clone())
            .collect();
        rng.shuffle(&mut others);
        others.insert(r, item.options[correct].clone());
        BenchmarkItem {
            options: others,
            ..item.clone()
        }
    });
    Ok(rounds)
}

/// Wire form of a benchmark JSONL line.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct BenchRecord {
    item_id: String,
    video_id: String,
    modality: Modality,
    severity: Severity,
    setting: Setting,
    question: String,
    options: Vec<LetteredOption>,
    edit_plan: Option<Vec<(f64, f64)>>,
    text_order: Option<Vec<usize>>,
    seed: u64,
    event_descriptions: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    target_pair: Option<(usize, usize)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    inserted: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct LetteredOption {
    letter: char,
    text: String,
    role: OptionRole,
}

impl From<BenchmarkItem> for BenchRecord {
    fn from(item: BenchmarkItem) -> Self {
        let (text_order, target_pair, inserted) = match item.disordered_text {
            Some(t) => (Some(t.order), Some(t.target_pair), t.inserted),
            None => (None, None, None),
        };
        Self {
            modality: item.severity.modality(),
            item_id: item.item_id,
            video_id: item.video_id,
            severity: item.severity,
            setting: item.setting,
            question: item.question,
            options: item
                .options
                .into_iter()
                .zip(OPTION_LETTERS)
                .map(|(o, letter)| LetteredOption {
                    letter,
                    text: o.text,
                    role: o.role,
                })
                .collect(),
            edit_plan: item.edit_plan.map(|p| p.segments),
            text_order,
            seed: item.seed,
            event_descriptions: item.event_descriptions,
            target_pair,
            inserted,
        }
    }
}

impl TryFrom<BenchRecord> for BenchmarkItem {
    type Error = String;

    fn try_from(r: BenchRecord) -> Result<Self, Self::Error> {
        if r.modality != r.severity.modality() {
            return Err(format!("{}: severity {:?} is not {:?}", r.item_id, r.severity, r.modality));
        }
        for (o, expected) in r.options.iter().zip(OPTION_LETTERS) {
            if o.letter != expected {
                return Err(format!("{}: option letters must run A..D in order", r.item_id));
            }
        }
        let disordered_text = match (r.modality, r.text_order) {
            (Modality::Extrinsic, Some(order)) => Some(DisorderedText {
                order,
                target_pair: r
                    .target_pair
                    .ok_or_else(|| format!("{}: extrinsic item lacks target_pair", r.item_id))?,
                inserted: r.inserted,
            }),
            (Modality::Extrinsic, None) => {
                return Err(format!("{}: extrinsic item lacks text_order", r.item_id))
            }
            (Modality::Intrinsic, _) => None,
        };
        let edit_plan = match (r.modality, r.edit_plan) {
            (Modality::Intrinsic, Some(segments)) => Some(EditPlan {
                video_id: r.video_id.clone(),
                segments,
            }),
            (Modality::Intrinsic, None) => {
                return Err(format!("{}: intrinsic item lacks edit_plan", r.item_id))
            }
            (Modality::Extrinsic, _) => None,
        };
        Ok(Self {
            item_id: r.item_id,
            video_id: r.video_id,
            severity: r.severity,
            setting: r.setting,
            question: r.question,
            options: r
                .options
                .into_iter()
                .map(|o| AnswerOption {
                    text: o.text,
                    role: o.role,
                })
                .collect(),
            event_descriptions: r.event_descriptions,
            edit_plan,
            disordered_text,
            seed: r.seed,
        })
    }
}
