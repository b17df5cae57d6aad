use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Answer {
    Yes,
    No,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParsedAnswer {
    Yes,
    No,
    Unparseable,
}

impl ParsedAnswer {
    pub fn answer(self) -> Option<Answer> {
        match self {
            ParsedAnswer::Yes => Some(Answer::Yes),
            ParsedAnswer::No => Some(Answer::No),
            ParsedAnswer::Unparseable => None,
        }
    }

    /// Unparseable answers are never correct.
    pub fn matches(self, gold: Answer) -> bool {
        self.answer() == Some(gold)
    }
}

fn words(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphabetic())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
}

/// Reads a yes/no answer: the first word decides; failing that, the first
/// sentence must contain exactly one of "yes" and "no".
pub fn parse_yes_no(text: &str) -> ParsedAnswer {
    match words(text).next().as_deref() {
        Some("yes") => return ParsedAnswer::Yes,
        Some("no") => return ParsedAnswer::No,
        _ => {}
    }
    let first_sentence = text.split(['.', '!', '?', '\n']).next().unwrap_or("");
    let (mut yes, mut no) = (false, false);
    for w in words(first_sentence) {
        yes |= w == "yes";
        no |= w == "no";
    }
    match (yes, no) {
        (true, false) => ParsedAnswer::Yes,
        (false, true) => ParsedAnswer::No,
        _ => ParsedAnswer::Unparseable,
    }
}
