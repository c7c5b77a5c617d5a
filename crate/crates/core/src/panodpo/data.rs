use super::loss::PanoExample;
use super::vocab::{tokenize_text, Vocab};
use super::PolicyError;
use crate::prefdata::{PreferenceTuple, VideoMode};
use crate::rng::StreamRng;

const SYNTH_TOPICS: usize = 6;
const SYNTH_FILLERS: usize = 8;
const SYNTH_FRAMES: usize = 4;

/// Vocabulary over every token the tuples use, in first-seen order.
pub fn build_vocab(tuples: &[PreferenceTuple]) -> Vocab {
    let mut v = Vocab::new();
    for t in tuples {
        for tok in t.video_tokens.iter().chain(&t.rejected_video_tokens).flatten() {
            v.add(tok);
        }
        for text in [Some(&t.question), t.perturbation.as_ref(), Some(&t.chosen), Some(&t.rejected)]
            .into_iter()
            .flatten()
        {
            for w in tokenize_text(text) {
                v.add(&w);
            }
        }
    }
    v
}

/// Tokenizes a tuple. Answers end with `<eos>`. With `lossy`, unknown words map to `<unk>`.
pub fn encode_tuple(
    t: &PreferenceTuple,
    vocab: &Vocab,
    lossy: bool,
) -> Result<PanoExample, PolicyError> {
    let enc = |words: Vec<String>| {
        if lossy {
            Ok(vocab.encode_lossy(&words))
        } else {
            vocab.encode_strict(&words)
        }
    };
    let video = t.video_tokens.clone().ok_or_else(|| {
        PolicyError::Precondition(format!("tuple {} has no video_tokens", t.tuple_id))
    })?;
    let answer = |text: &str| -> Result<Vec<u32>, PolicyError> {
        let mut ids = enc(tokenize_text(text))?;
        ids.push(vocab.eos());
        Ok(ids)
    };
    Ok(PanoExample {
        video: enc(video)?,
        rejected_video: t.rejected_video_tokens.clone().map(enc).transpose()?,
        question: enc(tokenize_text(&t.question))?,
        perturbation: t
            .perturbation
            .as_deref()
            .map(|c| enc(tokenize_text(c)))
            .transpose()?,
        chosen: answer(&t.chosen)?,
        rejected: answer(&t.rejected)?,
    })
}

pub fn encode_tuples(
    tuples: &[PreferenceTuple],
    vocab: &Vocab,
    lossy: bool,
) -> Result<Vec<PanoExample>, PolicyError> {
    tuples.iter().map(|t| encode_tuple(t, vocab, lossy)).collect()
}

/// Which synthetic distribution to draw from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SyntheticSplit {
    /// The question hint agrees with the chosen answer.
    Train,
    /// The question hint points at the rejected answer.
    Shortcut,
}

impl SyntheticSplit {
    fn as_str(self) -> &'static str {
        match self {
            Self::Train => "train",
            Self::Shortcut => "shortcut",
        }
    }
}

/// Seeded synthetic preference tuples with a planted signal and a text shortcut.
///
/// Tuple `i` picks a topic `k` and a different decoy topic `j`.
/// - `v_w`: four frame tokens `vf*`, one of them replaced by the signal `sig{k}`.
/// - `v_l`: `v_w` with the signal swapped back to a filler.
/// - question: two fillers `q*` and a hint, `hint{k}` in [`SyntheticSplit::Train`]
///   and `hint{j}` in [`SyntheticSplit::Shortcut`].
/// - `c`: `note hint{j}`, a decoy hint for the rejected answer.
/// - chosen `ans{k} done`, rejected `ans{j} done`.
///
/// On the training split the hint alone predicts the chosen answer, so a
/// policy can fit the preferences without reading the video. The shortcut
/// split breaks that hint, and only the video signal still identifies the
/// chosen answer; its likelihood gap measures reliance on the video.
pub fn synthetic_tuples(n: usize, seed: u64, split: SyntheticSplit) -> Vec<PreferenceTuple> {
    (0..n)
        .map(|i| {
            let id = format!("synthetic-{}-{i:05}", split.as_str());
            let mut rng = StreamRng::new(seed, &id, "synthetic-tuple");
            let k = rng.below(SYNTH_TOPICS);
            let j = (k + 1 + rng.below(SYNTH_TOPICS - 1)) % SYNTH_TOPICS;
            let mut video: Vec<String> = (0..SYNTH_FRAMES)
                .map(|_| format!("vf{}", rng.below(SYNTH_FILLERS)))
                .collect();
            let slot = rng.below(SYNTH_FRAMES);
            let mut rejected_video = video.clone();
            rejected_video[slot] = format!("vf{}", rng.below(SYNTH_FILLERS));
            video[slot] = format!("sig{k}");
            let hint = match split {
                SyntheticSplit::Train => k,
                SyntheticSplit::Shortcut => j,
            };
            let question = format!(
                "q{} q{} hint{hint}",
                rng.below(SYNTH_FILLERS),
                rng.below(SYNTH_FILLERS)
            );
            PreferenceTuple {
                tuple_id: id.clone(),
                video_path: format!("synthetic/{id}"),
                rejected_video_path: None,
                question,
                perturbation: Some(format!("note hint{j}")),
                chosen: format!("ans{k} done"),
                rejected: format!("ans{j} done"),
                video_mode: VideoMode::Replace,
                seed,
                perturbation_prompt: None,
                video_tokens: Some(video),
                rejected_video_tokens: Some(rejected_video),
            }
        })
        .collect()
}
