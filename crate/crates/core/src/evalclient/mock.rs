use std::fmt;
use std::str::FromStr;

use super::{ResponseRequest, Responder, TransportError};
use crate::perturb::{OptionRole, OPTION_LETTERS};
use crate::rng::StreamRng;

/// Deterministic stand-in for a model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum MockPolicy {
    AlwaysCorrect,
    AlwaysShortcut,
    FixedLetter(char),
    /// Uniform letter keyed by `(seed, item_id, setting, round)`.
    SeededUniform(u64),
}

impl MockPolicy {
    pub fn letter_for(&self, request: &ResponseRequest<'_>) -> char {
        let item = request.item;
        match *self {
            Self::AlwaysCorrect => item.letter_of(OptionRole::Correct).unwrap_or('A'),
            Self::AlwaysShortcut => item.letter_of(OptionRole::Shortcut).unwrap_or('A'),
            Self::FixedLetter(l) => l,
            Self::SeededUniform(seed) => {
                let purpose = format!("mock:{}:{}", item.setting.as_str(), request.round);
                let mut rng = StreamRng::new(seed, &item.item_id, &purpose);
                OPTION_LETTERS[rng.below(OPTION_LETTERS.len())]
            }
        }
    }
}

impl Responder for MockPolicy {
    fn respond(&self, request: &ResponseRequest<'_>) -> Result<String, TransportError> {
        Ok(format!("The answer is {}.", self.letter_for(request)))
    }
}

impl fmt::Display for MockPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::AlwaysCorrect => write!(f, "always-correct"),
            Self::AlwaysShortcut => write!(f, "always-shortcut"),
            Self::FixedLetter(l) => write!(f, "fixed-letter:{l}"),
            Self::SeededUniform(s) => write!(f, "seeded-uniform:{s}"),
        }
    }
}

impl From<MockPolicy> for String {
    fn from(m: MockPolicy) -> Self {
        m.to_string()
    }
}

impl TryFrom<String> for MockPolicy {
    type Error = String;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl FromStr for MockPolicy {
    type Err = String;

    /// `always-correct`, `always-shortcut`, `fixed-letter:L`, `seeded-uniform:SEED`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (head, arg) = s.split_once(':').map_or((s, None), |(h, a)| (h, Some(a)));
        match (head.replace('_', "-").as_str(), arg) {
            ("always-correct", None) => Ok(Self::AlwaysCorrect),
            ("always-shortcut", None) => Ok(Self::AlwaysShortcut),
            ("fixed-letter", Some(l)) => match l.chars().collect::<Vec<_>>().as_slice() {
                [c] if OPTION_LETTERS.contains(&c.to_ascii_uppercase()) => {
                    Ok(Self::FixedLetter(c.to_ascii_uppercase()))
                }
                _ => Err(format!("fixed-letter needs one of A-D, got {l:?}")),
            },
            ("seeded-uniform", Some(seed)) => seed
                .parse()
                .map(Self::SeededUniform)
                .map_err(|e| format!("bad seed {seed:?}: {e}")),
            _ => Err(format!(
                "unknown mock mode {s:?} (expected always-correct, always-shortcut, fixed-letter:L, seeded-uniform:SEED)"
            )),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_round_trip() {
        for m in [
            MockPolicy::AlwaysCorrect,
            MockPolicy::AlwaysShortcut,
            MockPolicy::FixedLetter('C'),
            MockPolicy::SeededUniform(17),
        ] {
            assert_eq!(m.to_string().parse::<MockPolicy>().unwrap(), m);
        }
        assert_eq!("fixed-letter:a".parse::<MockPolicy>().unwrap(), MockPolicy::FixedLetter('A'));
        assert!("fixed-letter:E".parse::<MockPolicy>().is_err());
        assert!("sometimes".parse::<MockPolicy>().is_err());
    }
}
