use std::path::{Path, PathBuf};

use base64::Engine;
use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::metrics::{score_match, SelectionRecord};
use crate::perturb::{BenchmarkItem, Modality, OPTION_LETTERS};

const SYSTEM_PROMPT: &str = "You are a careful assistant answering multiple-choice questions about a video. \
Base every answer on what actually happens in the video.";

const ANSWER_INSTRUCTION: &str =
    "Answer with the option's letter from the given choices directly.";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageUrl {
    pub url: String,
}

/// One content part in the chat-completions wire format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ContentPart {
    Text { text: String },
    ImageUrl { image_url: ImageUrl },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: Vec<ContentPart>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptPayload {
    pub messages: Vec<ChatMessage>,
}

impl PromptPayload {
    /// Concatenated text parts of the user message.
    pub fn user_text(&self) -> String {
        self.messages
            .iter()
            .filter(|m| m.role == "user")
            .flat_map(|m| &m.content)
            .filter_map(|p| match p {
                ContentPart::Text { text } => Some(text.as_str()),
                ContentPart::ImageUrl { .. } => None,
            })
            .collect::<Vec<_>>()
            .join("\n")
    }

    pub fn image_count(&self) -> usize {
        self.messages
            .iter()
            .flat_map(|m| &m.content)
            .filter(|p| matches!(p, ContentPart::ImageUrl { .. }))
            .count()
    }
}

fn mime_for(path: &Path) -> &'static str {
    match path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase)
        .as_deref()
    {
        Some("png") => "image/png",
        Some("jpg" | "jpeg") => "image/jpeg",
        Some("webp") => "image/webp",
        Some("pgm") => "image/x-portable-graymap",
        _ => "application/octet-stream",
    }
}

/// Renders the chat messages for one item round.
///
/// Extrinsic items carry their event descriptions (in the order the item's
/// text perturbation dictates) as a context block. Frame files, when given,
/// are attached as base64 data URLs before the text part.
pub fn render_prompt(
    item: &BenchmarkItem,
    frame_files: Option<&[PathBuf]>,
) -> Result<PromptPayload, EvalError> {
    let mut parts = Vec::new();
    if let Some(files) = frame_files {
        let missing: Vec<PathBuf> = files.iter().filter(|p| !p.is_file()).cloned().collect();
        if !missing.is_empty() {
            return Err(EvalError::MissingFrames(missing));
        }
        let engine = base64::engine::general_purpose::STANDARD;
        for path in files {
            let bytes = std::fs::read(path).map_err(|source| EvalError::Io {
                path: path.clone(),
                source,
            })?;
            parts.push(ContentPart::ImageUrl {
                image_url: ImageUrl {
                    url: format!("data:{};base64,{}", mime_for(path), engine.encode(bytes)),
                },
            });
        }
    }

    let mut text = String::new();
    match item.modality() {
        Modality::Extrinsic => {
            text.push_str("Event descriptions for this video:\n");
            for (i, d) in item.context_descriptions().unwrap_or_default().iter().enumerate() {
                text.push_str(&format!("{}. {}\n", i + 1, d));
            }
            text.push('\n');
        }
        Modality::Intrinsic if frame_files.is_some_and(|f| !f.is_empty()) => {
            text.push_str("The attached frames are sampled from the video in playback order.\n\n");
        }
        Modality::Intrinsic => {}
    }
    text.push_str(&format!("Question: {}\nOptions:\n", item.question));
    for (letter, option) in OPTION_LETTERS.iter().zip(&item.options) {
        text.push_str(&format!("{letter}. {}\n", option.text));
    }
    text.push_str(ANSWER_INSTRUCTION);
    parts.push(ContentPart::Text { text });

    Ok(PromptPayload {
        messages: vec![
            ChatMessage {
                role: "system".into(),
                content: vec![ContentPart::Text {
                    text: SYSTEM_PROMPT.into(),
                }],
            },
            ChatMessage {
                role: "user".into(),
                content: parts,
            },
        ],
    })
}

/// Parses a raw response against the item's options; the raw text is kept verbatim.
pub fn parse_selection(response_text: &str, item: &BenchmarkItem, round: u8) -> SelectionRecord {
    let correct = item.correct_letter().unwrap_or('A');
    let m = score_match(correct, response_text, &item.options);
    SelectionRecord {
        item_id: item.item_id.clone(),
        setting: item.setting,
        round,
        raw_text: response_text.to_string(),
        parsed_letter: m.letter,
        parsed_role: m.role,
        error: None,
        severity: Some(item.severity),
    }
}
