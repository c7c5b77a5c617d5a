//! Robustness metrics over evaluation logs.
//!
//! A response is scored by parsing which option it selected ([`score_match`]).
//! Over a log, with `D+` the items answered correctly in the clean setting:
//!
//! ```text
//! Acc   = (1/N) * sum_i Score_i                       (round-0 records of one setting)
//! FR    = |{i in D+ : adversarial pick is the shortcut}| / |D+|
//! WFR   = |{i in D+ : adversarial pick is not correct}| / |D+|
//! T-Acc = |{i : correct in >= 3 of 4 rotated rounds}| / N
//! ```
//!
//! Zero denominators yield `None`, which serializes as JSON `null`.

mod gap;
mod report;

pub use gap::{gap_stats, GapStats};
pub use report::{build_report, MetricReport, ReportCounts, SeverityReport};

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::perturb::{AnswerOption, OptionRole, Setting, Severity, OPTION_LETTERS};

/// Rounds per item for true accuracy, and the vote threshold.
pub const TRUE_ACCURACY_ROUNDS: usize = 4;
pub const TRUE_ACCURACY_MIN_CORRECT: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParsedRole {
    Correct,
    Shortcut,
    Incorrect,
    Unparsable,
}

impl From<OptionRole> for ParsedRole {
    fn from(r: OptionRole) -> Self {
        match r {
            OptionRole::Correct => Self::Correct,
            OptionRole::Shortcut => Self::Shortcut,
            OptionRole::Incorrect => Self::Incorrect,
        }
    }
}

/// One model response, as stored in the evaluation log JSONL.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionRecord {
    pub item_id: String,
    pub setting: Setting,
    pub round: u8,
    pub raw_text: String,
    pub parsed_letter: Option<char>,
    pub parsed_role: ParsedRole,
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub severity: Option<Severity>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Match {
    pub score: u8,
    pub letter: Option<char>,
    pub role: ParsedRole,
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum MetricError {
    #[error("items without {expected} rounds: {}", item_ids.join(", "))]
    IncompleteRounds {
        expected: usize,
        item_ids: Vec<String>,
    },
}

/// First option letter standing alone in `text` (not touching another letter or digit).
fn first_standalone_letter(text: &str, letters: &[char]) -> Option<char> {
    let chars: Vec<char> = text.chars().collect();
    chars.iter().enumerate().find_map(|(i, &c)| {
        let alone_before = i == 0 || !chars[i - 1].is_alphanumeric();
        let alone_after = i + 1 == chars.len() || !chars[i + 1].is_alphanumeric();
        (letters.contains(&c) && alone_before && alone_after).then_some(c)
    })
}

/// Index of the longest option text contained in `text`, if that longest match is unique.
fn longest_contained_option(text: &str, options: &[AnswerOption]) -> Option<usize> {
    let haystack = text.to_lowercase();
    let mut best: Option<(usize, usize)> = None;
    let mut tied = false;
    for (i, o) in options.iter().enumerate() {
        let needle = o.text.trim().trim_end_matches('.').to_lowercase();
        if needle.is_empty() || !haystack.contains(&needle) {
            continue;
        }
        match best {
            Some((_, len)) if needle.len() < len => {}
            Some((_, len)) if needle.len() == len => tied = true,
            _ => {
                best = Some((i, needle.len()));
                tied = false;
            }
        }
    }
    if tied {
        None
    } else {
        best.map(|(i, _)| i)
    }
}

/// Scores one response: letter first, then option-text containment.
pub fn score_match(correct_letter: char, response: &str, options: &[AnswerOption]) -> Match {
    let letters = &OPTION_LETTERS[..options.len().min(OPTION_LETTERS.len())];
    let index = first_standalone_letter(response, letters)
        .and_then(|c| letters.iter().position(|&l| l == c))
        .or_else(|| longest_contained_option(response, options));
    match index {
        Some(i) => {
            let letter = letters[i];
            Match {
                score: u8::from(letter == correct_letter),
                letter: Some(letter),
                role: options[i].role.into(),
            }
        }
        None => Match {
            score: 0,
            letter: None,
            role: ParsedRole::Unparsable,
        },
    }
}

/// First record per `(item_id, round)` for one setting, in log order.
fn dedup<'a>(
    records: &'a [SelectionRecord],
    setting: Setting,
) -> impl Iterator<Item = &'a SelectionRecord> {
    let mut seen = std::collections::HashSet::new();
    records
        .iter()
        .filter(move |r| r.setting == setting && seen.insert((r.item_id.as_str(), r.round)))
}

/// Acc over the round-0 records of `setting`; `None` when there are none.
pub fn accuracy(records: &[SelectionRecord], setting: Setting) -> Option<f64> {
    let (mut n, mut correct) = (0usize, 0usize);
    for r in dedup(records, setting).filter(|r| r.round == 0) {
        n += 1;
        correct += usize::from(r.parsed_role == ParsedRole::Correct);
    }
    (n > 0).then(|| correct as f64 / n as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairedItem {
    pub item_id: String,
    pub severity: Option<Severity>,
    pub clean: ParsedRole,
    pub adversarial: ParsedRole,
}

/// Round-0 clean and adversarial outcomes joined by item.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PairedEvalLog {
    pub items: Vec<PairedItem>,
    /// Items present in only one setting; excluded from FR/WFR.
    pub unpaired: usize,
}

impl PairedEvalLog {
    pub fn build(records: &[SelectionRecord]) -> Self {
        let clean: HashMap<&str, &SelectionRecord> = dedup(records, Setting::Clean)
            .filter(|r| r.round == 0)
            .map(|r| (r.item_id.as_str(), r))
            .collect();
        let mut matched = 0;
        let mut items = Vec::new();
        for adv in dedup(records, Setting::Adversarial).filter(|r| r.round == 0) {
            if let Some(c) = clean.get(adv.item_id.as_str()) {
                matched += 1;
                items.push(PairedItem {
                    item_id: adv.item_id.clone(),
                    severity: adv.severity.or(c.severity),
                    clean: c.parsed_role,
                    adversarial: adv.parsed_role,
                });
            }
        }
        let adv_count = dedup(records, Setting::Adversarial)
            .filter(|r| r.round == 0)
            .count();
        Self {
            unpaired: clean.len() + adv_count - 2 * matched,
            items,
        }
    }

    pub fn clean_correct(&self) -> impl Iterator<Item = &PairedItem> {
        self.items
            .iter()
            .filter(|i| i.clean == ParsedRole::Correct)
    }

    fn rate(&self, flipped: impl Fn(ParsedRole) -> bool) -> Option<f64> {
        let (mut denom, mut num) = (0usize, 0usize);
        for item in self.clean_correct() {
            denom += 1;
            num += usize::from(flipped(item.adversarial));
        }
        (denom > 0).then(|| num as f64 / denom as f64)
    }
}

/// Share of clean-correct items whose adversarial pick is the curated shortcut.
pub fn flip_rate(paired: &PairedEvalLog) -> Option<f64> {
    paired.rate(|r| r == ParsedRole::Shortcut)
}

/// Share of clean-correct items whose adversarial pick is anything but correct.
pub fn weak_flip_rate(paired: &PairedEvalLog) -> Option<f64> {
    paired.rate(|r| r != ParsedRole::Correct)
}

/// Items correct in at least 3 of their 4 rounds, over all items of `setting`.
pub fn true_accuracy(
    records: &[SelectionRecord],
    setting: Setting,
) -> Result<Option<f64>, MetricError> {
    let mut per_item: BTreeMap<&str, [Option<bool>; TRUE_ACCURACY_ROUNDS]> = BTreeMap::new();
    for r in dedup(records, setting) {
        let slots = per_item.entry(r.item_id.as_str()).or_default();
        if let Some(slot) = slots.get_mut(r.round as usize) {
            *slot = Some(r.parsed_role == ParsedRole::Correct);
        }
    }
    let incomplete: Vec<String> = per_item
        .iter()
        .filter(|(_, s)| s.iter().any(Option::is_none))
        .map(|(id, _)| id.to_string())
        .collect();
    if !incomplete.is_empty() {
        return Err(MetricError::IncompleteRounds {
            expected: TRUE_ACCURACY_ROUNDS,
            item_ids: incomplete,
        });
    }
    if per_item.is_empty() {
        return Ok(None);
    }
    let truly_correct = per_item
        .values()
        .filter(|s| s.iter().filter(|c| **c == Some(true)).count() >= TRUE_ACCURACY_MIN_CORRECT)
        .count();
    Ok(Some(truly_correct as f64 / per_item.len() as f64))
}

#[cfg(test)]
pub(crate) fn record(item: &str, setting: Setting, round: u8, role: ParsedRole) -> SelectionRecord {
    SelectionRecord {
        item_id: item.into(),
        setting,
        round,
        raw_text: String::new(),
        parsed_letter: None,
        parsed_role: role,
        error: None,
        severity: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use ParsedRole::*;

    fn options() -> Vec<AnswerOption> {
        let o = |t: &str, role| AnswerOption { text: t.into(), role };
        vec![
            o("pour water, stir", OptionRole::Incorrect),
            o("stir, pour water", OptionRole::Correct),
            o("The two events occur simultaneously.", OptionRole::Shortcut),
            o("stir", OptionRole::Incorrect),
        ]
    }

    #[test]
    fn letter_match() {
        let m = score_match('B', "The answer is B.", &options());
        assert_eq!((m.score, m.role, m.letter), (1, Correct, Some('B')));
    }

    #[test]
    fn letter_in_parentheses() {
        let m = score_match('B', "I choose (C) because the order is clear", &options());
        assert_eq!((m.score, m.role, m.letter), (0, Shortcut, Some('C')));
    }

    #[test]
    fn unparsable_response() {
        let m = score_match('A', "the sky is blue", &options());
        assert_eq!((m.score, m.role, m.letter), (0, Unparsable, None));
        assert_eq!(score_match('A', "", &options()).role, Unparsable);
    }

    #[test]
    fn letters_inside_words_are_ignored() {
        // "CD" and "Bob" carry letters but none stand alone.
        let m = score_match('D', "Bob put the CD down. Answer: D", &options());
        assert_eq!(m.letter, Some('D'));
    }

    #[test]
    fn text_fallback_prefers_longest_unique() {
        let m = score_match('B', "I think it is stir, pour water", &options());
        assert_eq!((m.score, m.letter), (1, Some('B')));
        let m = score_match('B', "they occur simultaneously", &options());
        assert_eq!(m.role, Unparsable);
        let m = score_match('B', "the two events occur simultaneously", &options());
        assert_eq!(m.letter, Some('C'));
    }

    #[test]
    fn accuracy_examples() {
        let all: Vec<_> = (0..4).map(|i| record(&format!("i{i}"), Setting::Clean, 0, Correct)).collect();
        assert_eq!(accuracy(&all, Setting::Clean), Some(1.0));
        let mut three = all.clone();
        three[2].parsed_role = Shortcut;
        assert_eq!(accuracy(&three, Setting::Clean), Some(0.75));
        assert_eq!(accuracy(&three, Setting::Adversarial), None);
    }

    fn paired(clean: &[(u32, ParsedRole)], adv: &[(u32, ParsedRole)]) -> Vec<SelectionRecord> {
        clean
            .iter()
            .map(|(i, r)| record(&i.to_string(), Setting::Clean, 0, *r))
            .chain(adv.iter().map(|(i, r)| record(&i.to_string(), Setting::Adversarial, 0, *r)))
            .collect()
    }

    #[test]
    fn flip_rates_hand_enumerated() {
        // D+ = {1, 2, 4, 5}; item 3 fails clean and item 6 has no adversarial record.
        let log = paired(
            &[(1, Correct), (2, Correct), (3, Incorrect), (4, Correct), (5, Correct), (6, Correct)],
            &[(1, Shortcut), (2, Correct), (3, Shortcut), (4, Incorrect), (5, Shortcut)],
        );
        let p = PairedEvalLog::build(&log);
        assert_eq!(p.unpaired, 1);
        assert_eq!(flip_rate(&p), Some(0.5));
        assert_eq!(weak_flip_rate(&p), Some(0.75));
    }

    #[test]
    fn flip_rate_edge_cases() {
        let all_correct = paired(&[(1, Correct), (2, Correct)], &[(1, Correct), (2, Correct)]);
        let p = PairedEvalLog::build(&all_correct);
        assert_eq!((flip_rate(&p), weak_flip_rate(&p)), (Some(0.0), Some(0.0)));
        let none = paired(&[(1, Incorrect)], &[(1, Correct)]);
        let p = PairedEvalLog::build(&none);
        assert_eq!((flip_rate(&p), weak_flip_rate(&p)), (None, None));
    }

    #[test]
    fn unparsable_counts_for_wfr_only() {
        let log = paired(&[(1, Correct)], &[(1, Unparsable)]);
        let p = PairedEvalLog::build(&log);
        assert_eq!((flip_rate(&p), weak_flip_rate(&p)), (Some(0.0), Some(1.0)));
    }

    fn rounds(item: &str, correct: &[bool]) -> Vec<SelectionRecord> {
        correct
            .iter()
            .enumerate()
            .map(|(r, c)| record(item, Setting::Adversarial, r as u8, if *c { Correct } else { Incorrect }))
            .collect()
    }

    #[test]
    fn true_accuracy_votes() {
        let one = rounds("x", &[true, true, true, false]);
        assert_eq!(true_accuracy(&one, Setting::Adversarial), Ok(Some(1.0)));
        let mut log = rounds("a", &[true; 4]);
        log.extend(rounds("b", &[true, false, true, true]));
        log.extend(rounds("c", &[true, false, false, true]));
        assert_eq!(true_accuracy(&log, Setting::Adversarial), Ok(Some(2.0 / 3.0)));
    }

    #[test]
    fn true_accuracy_incomplete() {
        let mut log = rounds("a", &[true; 4]);
        log.extend(rounds("b", &[true, true]));
        assert_eq!(
            true_accuracy(&log, Setting::Adversarial),
            Err(MetricError::IncompleteRounds { expected: 4, item_ids: vec!["b".into()] })
        );
        assert_eq!(true_accuracy(&[], Setting::Adversarial), Ok(None));
    }

    fn role() -> impl Strategy<Value = ParsedRole> {
        prop_oneof![Just(Correct), Just(Shortcut), Just(Incorrect), Just(Unparsable)]
    }

    proptest! {
        #[test]
        fn fr_bounded_by_wfr(roles in prop::collection::vec((role(), role()), 0..50)) {
            let clean: Vec<_> = roles.iter().enumerate().map(|(i, r)| (i as u32, r.0)).collect();
            let adv: Vec<_> = roles.iter().enumerate().map(|(i, r)| (i as u32, r.1)).collect();
            let p = PairedEvalLog::build(&paired(&clean, &adv));
            match (flip_rate(&p), weak_flip_rate(&p)) {
                (Some(fr), Some(wfr)) => prop_assert!(0.0 <= fr && fr <= wfr && wfr <= 1.0),
                (None, None) => {}
                other => prop_assert!(false, "definedness mismatch {:?}", other),
            }
        }

        #[test]
        fn items_outside_d_plus_do_not_move_rates(
            roles in prop::collection::vec((role(), role()), 1..30),
            extra_adv in role(),
            extra_clean in prop_oneof![Just(Shortcut), Just(Incorrect), Just(Unparsable)],
        ) {
            let clean: Vec<_> = roles.iter().enumerate().map(|(i, r)| (i as u32, r.0)).collect();
            let adv: Vec<_> = roles.iter().enumerate().map(|(i, r)| (i as u32, r.1)).collect();
            let base = PairedEvalLog::build(&paired(&clean, &adv));
            let mut clean2 = clean.clone();
            let mut adv2 = adv.clone();
            clean2.push((999, extra_clean));
            adv2.push((999, extra_adv));
            let more = PairedEvalLog::build(&paired(&clean2, &adv2));
            prop_assert_eq!(flip_rate(&base), flip_rate(&more));
            prop_assert_eq!(weak_flip_rate(&base), weak_flip_rate(&more));
        }

        #[test]
        fn order_does_not_matter(roles in prop::collection::vec((role(), role()), 1..30), rot in 0usize..30) {
            let clean: Vec<_> = roles.iter().enumerate().map(|(i, r)| (i as u32, r.0)).collect();
            let adv: Vec<_> = roles.iter().enumerate().map(|(i, r)| (i as u32, r.1)).collect();
            let log = paired(&clean, &adv);
            let mut shuffled = log.clone();
            shuffled.rotate_left(rot % log.len());
            shuffled.reverse();
            let (a, b) = (PairedEvalLog::build(&log), PairedEvalLog::build(&shuffled));
            prop_assert_eq!(flip_rate(&a), flip_rate(&b));
            prop_assert_eq!(weak_flip_rate(&a), weak_flip_rate(&b));
            prop_assert_eq!(accuracy(&log, Setting::Clean), accuracy(&shuffled, Setting::Clean));
        }
    }
}
