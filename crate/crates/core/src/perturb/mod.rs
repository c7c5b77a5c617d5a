//! Temporal perturbations and four-option QA items.
//!
//! Intrinsic perturbations reorder a video's clips ([`light_disorder`],
//! [`severe_disorder`]) and are emitted as an [`EditPlan`] for an external
//! editor. Extrinsic perturbations reorder the event descriptions shown in the
//! prompt ([`absolute_disorder`], [`relative_disorder`]). [`build_item`] turns
//! either into a paired clean/adversarial [`BenchmarkItem`].

mod disorder;
mod item;

pub use disorder::{
    absolute_disorder, absolute_disorder_from_choices, absolute_disorder_with, light_disorder,
    light_disorder_at, light_disorder_with, relative_disorder, relative_disorder_from_choices,
    relative_disorder_with, severe_disorder, severe_disorder_swap_count, severe_disorder_with,
};
pub use item::{
    build_item, shuffle_option_rounds, AnswerOption, BenchmarkItem, ItemPair, OptionRole,
    EXTRINSIC_DISTRACTORS, INTRINSIC_QUESTION, OPTION_LETTERS,
};

use serde::{Deserialize, Serialize};

use crate::annotations::{VideoRecord, MIN_EVENTS};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum PerturbError {
    #[error("need at least {MIN_EVENTS} events, got {0}")]
    TooFewEvents(usize),
    #[error("mapping is not a bijection over 0..{0}")]
    NotBijective(usize),
    #[error("invalid construction choice: {0}")]
    InvalidChoice(String),
    #[error("video {0}: event descriptions cannot distinguish the perturbed order from the original")]
    IndistinguishableEvents(String),
    #[error("video {0}: fewer than 4 distinct orderings can be rendered as option text")]
    TooFewDistinctOrders(String),
    #[error("item {0}: expected 4 options with exactly one correct")]
    MalformedOptions(String),
}

pub(crate) fn require_events(n: usize) -> Result<(), PerturbError> {
    if n < MIN_EVENTS {
        Err(PerturbError::TooFewEvents(n))
    } else {
        Ok(())
    }
}

/// A bijection over `0..n`. `mapping[i]` is the original index shown at position `i`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct Permutation(Vec<usize>);

impl Permutation {
    pub fn identity(n: usize) -> Self {
        Self((0..n).collect())
    }

    pub fn new(mapping: Vec<usize>) -> Result<Self, PerturbError> {
        let n = mapping.len();
        let mut seen = vec![false; n];
        for &m in &mapping {
            if m >= n || std::mem::replace(&mut seen[m], true) {
                return Err(PerturbError::NotBijective(n));
            }
        }
        Ok(Self(mapping))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn is_identity(&self) -> bool {
        self.0.iter().enumerate().all(|(i, &m)| i == m)
    }

    /// If this is the identity with one adjacent transposition applied, its left position.
    pub fn adjacent_swap_position(&self) -> Option<usize> {
        let moved: Vec<usize> = (0..self.len()).filter(|&i| self.0[i] != i).collect();
        match moved.as_slice() {
            [a, b] if *b == a + 1 && self.0[*a] == *b && self.0[*b] == *a => Some(*a),
            _ => None,
        }
    }

    /// Items reordered for playback: `out[i] = items[mapping[i]]`.
    pub fn apply<T: Clone>(&self, items: &[T]) -> Vec<T> {
        self.0.iter().map(|&m| items[m].clone()).collect()
    }
}

impl TryFrom<Vec<usize>> for Permutation {
    type Error = PerturbError;

    fn try_from(v: Vec<usize>) -> Result<Self, Self::Error> {
        Self::new(v)
    }
}

impl From<Permutation> for Vec<usize> {
    fn from(p: Permutation) -> Self {
        p.0
    }
}

/// Clip segments of the source video in playback order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EditPlan {
    pub video_id: String,
    pub segments: Vec<(f64, f64)>,
}

impl EditPlan {
    pub fn from_permutation(record: &VideoRecord, order: &Permutation) -> Self {
        let spans: Vec<(f64, f64)> = record.events.iter().map(|e| (e.start, e.end)).collect();
        Self {
            video_id: record.video_id.clone(),
            segments: order.apply(&spans),
        }
    }
}

/// Event descriptions reordered for the prompt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DisorderedText {
    pub order: Vec<usize>,
    /// The adjacent true pair `(p, q)` the perturbation was built around.
    pub target_pair: (usize, usize),
    /// Relative disorder only: the event moved between `p` and `q`.
    pub inserted: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Intrinsic,
    Extrinsic,
}

/// Perturbation class. Light/severe apply to video clips, absolute/relative to text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Light,
    Severe,
    Absolute,
    Relative,
}

impl Severity {
    pub const ALL: [Severity; 4] = [Self::Light, Self::Severe, Self::Absolute, Self::Relative];

    pub fn modality(self) -> Modality {
        match self {
            Self::Light | Self::Severe => Modality::Intrinsic,
            Self::Absolute | Self::Relative => Modality::Extrinsic,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Light => "light",
            Self::Severe => "severe",
            Self::Absolute => "absolute",
            Self::Relative => "relative",
        }
    }
}

impl std::str::FromStr for Severity {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| format!("unknown severity {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Setting {
    Clean,
    Adversarial,
}

impl Setting {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Clean => "clean",
            Self::Adversarial => "adversarial",
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn permutation_rejects_non_bijection() {
        assert!(Permutation::new(vec![0, 0, 1]).is_err());
        assert!(Permutation::new(vec![0, 3, 1]).is_err());
        assert!(Permutation::new(vec![2, 0, 1]).is_ok());
    }

    #[test]
    fn adjacent_swap_detection() {
        assert_eq!(Permutation::new(vec![1, 0, 2]).unwrap().adjacent_swap_position(), Some(0));
        assert_eq!(Permutation::new(vec![0, 2, 1]).unwrap().adjacent_swap_position(), Some(1));
        assert_eq!(Permutation::new(vec![2, 1, 0]).unwrap().adjacent_swap_position(), None);
        assert_eq!(Permutation::identity(4).adjacent_swap_position(), None);
    }

    #[test]
    fn permutation_serde_validates() {
        let p: Permutation = serde_json::from_str("[1,0,2]").unwrap();
        assert_eq!(p.as_slice(), &[1, 0, 2]);
        assert!(serde_json::from_str::<Permutation>("[1,1,2]").is_err());
    }

    #[test]
    fn edit_plan_follows_playback_order() {
        let record = crate::annotations::sample_record("v", &["a", "b", "c"]);
        let plan = EditPlan::from_permutation(&record, &Permutation::new(vec![1, 0, 2]).unwrap());
        assert_eq!(plan.segments, vec![(10.0, 18.0), (0.0, 8.0), (20.0, 28.0)]);
    }
}
