use serde::{Deserialize, Serialize};

use super::PrefError;
use crate::evalclient::{backoff_delay, ChatMessage, ContentPart, HttpResponder, RetryPolicy};

/// Versioned prompt template for remote perturbation generation.
pub const PERTURBATION_PROMPT_V1: &str = include_str!("../../assets/perturbation_prompt_v1.txt");
pub const PERTURBATION_PROMPT_VERSION: &str = "perturbation_prompt_v1";

/// A perturbation clause `c` and, for remote generators, the exact prompt that produced it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Perturbation {
    pub text: String,
    pub prompt: Option<String>,
}

/// `(caption, question, answer) -> c`.
pub trait TextGenerator {
    fn generate(&self, caption: &str, question: &str, answer: &str)
        -> Result<Perturbation, PrefError>;
}

pub fn render_perturbation_prompt(caption: &str, question: &str, answer: &str) -> String {
    PERTURBATION_PROMPT_V1
        .replace("{caption}", caption.trim())
        .replace("{question}", question.trim())
        .replace("{answer}", answer.trim())
}

fn check_inputs(caption: &str, question: &str, answer: &str) -> Result<(), PrefError> {
    for (name, v) in [("caption", caption), ("question", question), ("answer", answer)] {
        if v.trim().is_empty() {
            return Err(PrefError::Generation(format!("{name} is empty")));
        }
    }
    Ok(())
}

/// Template generator: `Note that in the video, {negated answer}.`
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StubGenerator;

impl TextGenerator for StubGenerator {
    fn generate(
        &self,
        caption: &str,
        question: &str,
        answer: &str,
    ) -> Result<Perturbation, PrefError> {
        check_inputs(caption, question, answer)?;
        Ok(Perturbation {
            text: format!("Note that in the video, {}.", negate_claim(answer)),
            prompt: None,
        })
    }
}

const AUXILIARIES: [&str; 17] = [
    "is", "are", "was", "were", "am", "can", "could", "will", "would", "shall", "should", "may",
    "might", "must", "does", "do", "did",
];

const DETERMINERS: [&str; 14] = [
    "the", "a", "an", "this", "that", "these", "those", "his", "her", "their", "its", "my",
    "our", "your",
];

fn is_third_person_verb(word: &str) -> bool {
    word.len() > 2
        && word.ends_with('s')
        && !word.ends_with("ss")
        && !word.ends_with("us")
        && !word.ends_with("'s")
        && word.chars().all(|c| c.is_ascii_alphabetic())
}

/// Base form of a third-person singular verb.
fn verb_lemma(word: &str) -> String {
    if let Some(stem) = word.strip_suffix("ies") {
        return format!("{stem}y");
    }
    if let Some(stem) = word.strip_suffix("es") {
        if ["sh", "ch", "x", "z", "ss", "o"].iter().any(|s| stem.ends_with(s)) {
            return stem.to_string();
        }
    }
    word.strip_suffix('s').unwrap_or(word).to_string()
}

/// Rule-based negation of the first clause of `answer`.
///
/// Auxiliaries take `not` after them (or lose an existing one), `has`/`have`
/// become `does/do not have`, and the first third-person `-s` verb after the
/// subject becomes `does not` plus its base form. Anything else falls back to
/// `it is not the case that ...`.
pub fn negate_claim(answer: &str) -> String {
    let trimmed = answer.trim().trim_end_matches(['.', '!', '?']).trim();
    let mut words: Vec<String> = trimmed.split_whitespace().map(str::to_string).collect();
    if let Some(first) = words.first_mut() {
        let mut chars = first.chars();
        let second_upper = first.chars().nth(1).is_some_and(|c| c.is_uppercase());
        if let Some(c) = chars.next().filter(|_| !second_upper) {
            *first = c.to_lowercase().chain(chars).collect();
        }
    }
    let lower: Vec<String> = words.iter().map(|w| w.to_ascii_lowercase()).collect();

    if let Some(i) = lower.iter().position(|w| AUXILIARIES.contains(&w.as_str())) {
        if lower.get(i + 1).map(String::as_str) == Some("not") {
            words.remove(i + 1);
        } else {
            words.insert(i + 1, "not".into());
        }
        return words.join(" ");
    }
    if let Some(i) = lower.iter().position(|w| w == "has" || w == "have") {
        let aux = if lower[i] == "has" { "does" } else { "do" };
        words.splice(i..=i, [aux.to_string(), "not".into(), "have".into()]);
        return words.join(" ");
    }
    let verb = (1..lower.len()).find(|&i| {
        is_third_person_verb(&lower[i]) && !DETERMINERS.contains(&lower[i - 1].as_str())
    });
    if let Some(i) = verb {
        let lemma = verb_lemma(&lower[i]);
        words.splice(i..=i, ["does".to_string(), "not".into(), lemma]);
        return words.join(" ");
    }
    format!("it is not the case that {}", words.join(" "))
}

/// Generator backed by a chat-completions endpoint, using [`PERTURBATION_PROMPT_V1`].
#[derive(Debug)]
pub struct RemoteGenerator {
    responder: HttpResponder,
    retry: RetryPolicy,
}

impl RemoteGenerator {
    pub fn new(responder: HttpResponder, retry: RetryPolicy) -> Self {
        Self { responder, retry }
    }
}

impl TextGenerator for RemoteGenerator {
    fn generate(
        &self,
        caption: &str,
        question: &str,
        answer: &str,
    ) -> Result<Perturbation, PrefError> {
        check_inputs(caption, question, answer)?;
        let prompt = render_perturbation_prompt(caption, question, answer);
        let messages = [ChatMessage {
            role: "user".into(),
            content: vec![ContentPart::Text {
                text: prompt.clone(),
            }],
        }];
        let mut last = String::new();
        for attempt in 1..=self.retry.max_attempts.max(1) {
            match self.responder.complete(&messages) {
                Ok(text) if !text.trim().is_empty() => {
                    return Ok(Perturbation {
                        text: text.trim().to_string(),
                        prompt: Some(prompt),
                    })
                }
                Ok(_) => last = "generator returned empty text".into(),
                Err(e) if e.retryable => last = e.message,
                Err(e) => return Err(PrefError::Generation(e.message)),
            }
            if attempt < self.retry.max_attempts {
                std::thread::sleep(backoff_delay(&self.retry, attempt, 1.0));
            }
        }
        Err(PrefError::Generation(format!(
            "{last} (after {} attempt(s))",
            self.retry.max_attempts.max(1)
        )))
    }
}
