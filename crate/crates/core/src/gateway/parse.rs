//! Turn free-text model answers into structured choices.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParsedChoice {
    First,
    Second,
    /// The model declined to pick: both bad, both similar, cannot tell.
    Reject,
    Yes,
    No,
    Unparseable,
}

fn words(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_string)
        .collect()
}

const REJECT_WORDS: &[&str] = &["both", "similar", "neither", "cannot", "cant"];
const POINTERS: &[&str] = &[
    "image",
    "label",
    "option",
    "overlay",
    "annotation",
    "candidate",
];

/// Comparison-mode answer: first or second image, a rejection, or
/// unparseable. Rejection phrases take precedence over positions; naming
/// both positions is ambiguous.
pub fn parse_choice(text: &str) -> ParsedChoice {
    let raw = text.to_lowercase();
    let w = words(text);
    let has_pair = |a: &str, b: &str| w.windows(2).any(|p| p[0] == a && p[1] == b);
    let rejected = w.iter().any(|x| REJECT_WORDS.contains(&x.as_str()))
        || has_pair("can", "not")
        || raw.contains("can't")
        || raw.contains("can’t");
    if rejected {
        return ParsedChoice::Reject;
    }
    let pointer_to = |n: &str| {
        w.windows(2)
            .any(|p| POINTERS.contains(&p[0].as_str()) && p[1] == n)
    };
    let whole = w.len() == 1;
    let first = w.iter().any(|x| x == "first") || pointer_to("1") || (whole && w[0] == "1");
    let second = w.iter().any(|x| x == "second") || pointer_to("2") || (whole && w[0] == "2");
    match (first, second) {
        (true, false) => ParsedChoice::First,
        (false, true) => ParsedChoice::Second,
        _ => ParsedChoice::Unparseable,
    }
}

fn polarity(w: &[String], positive: &[&str], negative: &[&str]) -> ParsedChoice {
    let is_pos = |x: &String| positive.contains(&x.as_str());
    let is_neg = |x: &String| negative.contains(&x.as_str());
    if let Some(head) = w.first() {
        if is_pos(head) {
            return ParsedChoice::Yes;
        }
        if is_neg(head) {
            return ParsedChoice::No;
        }
    }
    let mut pos = false;
    let mut neg = false;
    for (i, x) in w.iter().enumerate() {
        let negated = i > 0 && w[i - 1] == "not";
        if is_pos(x) {
            if negated {
                neg = true;
            } else {
                pos = true;
            }
        } else if is_neg(x) {
            neg = true;
        }
    }
    match (pos, neg) {
        (true, false) => ParsedChoice::Yes,
        (false, true) => ParsedChoice::No,
        _ => ParsedChoice::Unparseable,
    }
}

/// Presence answer: yes / no.
pub fn parse_presence(text: &str) -> ParsedChoice {
    polarity(&words(text), &["yes"], &["no"])
}

/// Single-label summary: correct (Yes) / incorrect (No).
pub fn parse_correctness(text: &str) -> ParsedChoice {
    polarity(
        &words(text),
        &["correct", "yes", "acceptable", "accurate"],
        &["incorrect", "no", "wrong", "unacceptable", "inaccurate"],
    )
}
