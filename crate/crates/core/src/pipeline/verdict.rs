use serde::{Deserialize, Serialize};

use crate::prompts::Mode;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VerdictValue {
    Yes,
    No,
    Abstain,
}

impl VerdictValue {
    pub fn as_str(self) -> &'static str {
        match self {
            VerdictValue::Yes => "yes",
            VerdictValue::No => "no",
            VerdictValue::Abstain => "abstain",
        }
    }

    /// Anything other than a clean "no" counts as flagging false information.
    pub fn predicts_false(self) -> bool {
        !matches!(self, VerdictValue::No)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub value: VerdictValue,
    /// The text the yes/no rule was applied to.
    pub raw_answer_span: String,
}

const ANSWER_MARKER: &str = "answer:";

fn normalize(span: &str) -> String {
    span.trim()
        .to_lowercase()
        .trim_end_matches(|c: char| c.is_ascii_punctuation() || c.is_whitespace())
        .trim()
        .to_string()
}

fn plain_rule(span: &str) -> VerdictValue {
    match normalize(span).as_str() {
        "yes" => VerdictValue::Yes,
        "no" => VerdictValue::No,
        _ => VerdictValue::Abstain,
    }
}

fn last_nonempty_line(text: &str) -> &str {
    text.lines().rev().find(|l| !l.trim().is_empty()).unwrap_or("")
}

/// Extracts the yes/no/abstain verdict from raw model output.
///
/// Plain mode matches the whole output after trimming, lowercasing and
/// stripping trailing punctuation. Chain-of-thought mode applies the same rule
/// to the text after the last `Answer:` marker (first non-empty line of it),
/// or to the last non-empty line when there is no marker.
pub fn parse_verdict(raw: &str, mode: Mode) -> Verdict {
    let span = match mode {
        Mode::Plain => raw.trim(),
        Mode::Cot => match raw.to_lowercase().rfind(ANSWER_MARKER) {
            // Lowercasing can shift byte offsets for some scripts; fall back
            // to the last line when the offset is not a boundary of `raw`.
            Some(pos) if raw.is_char_boundary(pos + ANSWER_MARKER.len()) => {
                let rest = &raw[pos + ANSWER_MARKER.len()..];
                rest.lines().find(|l| !l.trim().is_empty()).unwrap_or("").trim()
            }
            _ => last_nonempty_line(raw).trim(),
        },
    };
    Verdict { value: plain_rule(span), raw_answer_span: span.to_string() }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn plain_examples() {
        assert_eq!(parse_verdict("Yes.", Mode::Plain).value, VerdictValue::Yes);
        assert_eq!(parse_verdict("  no\n", Mode::Plain).value, VerdictValue::No);
        assert_eq!(parse_verdict("It cannot be determined.", Mode::Plain).value, VerdictValue::Abstain);
        assert_eq!(parse_verdict("", Mode::Plain).value, VerdictValue::Abstain);
    }

    #[test]
    fn cot_examples() {
        let trace = "The sentence breaks into clusters.\nEach cluster checks out.\nAnswer: no";
        assert_eq!(parse_verdict(trace, Mode::Cot).value, VerdictValue::No);
        assert_eq!(parse_verdict("Answer: maybe\nthen\nAnswer: Yes.", Mode::Cot).value, VerdictValue::Yes);
        assert_eq!(parse_verdict("reasoning\nno", Mode::Cot).value, VerdictValue::No);
        assert_eq!(parse_verdict("Answer:\n yes \n", Mode::Cot).value, VerdictValue::Yes);
        let v = parse_verdict("x\nAnswer: cannot be determined", Mode::Cot);
        assert_eq!(v.value, VerdictValue::Abstain);
        assert_eq!(v.raw_answer_span, "cannot be determined");
    }

    #[test]
    fn abstain_counts_as_detection() {
        assert!(VerdictValue::Yes.predicts_false());
        assert!(VerdictValue::Abstain.predicts_false());
        assert!(!VerdictValue::No.predicts_false());
    }

    proptest! {
        #[test]
        fn total_and_idempotent(raw in "\\PC{0,80}", cot in any::<bool>()) {
            let mode = if cot { Mode::Cot } else { Mode::Plain };
            let v = parse_verdict(&raw, mode);
            let again = parse_verdict(&v.raw_answer_span, Mode::Plain);
            prop_assert_eq!(again.value, v.value);
            prop_assert_eq!(parse_verdict(v.value.as_str(), mode).value == v.value, true);
        }
    }
}
