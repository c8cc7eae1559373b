use std::fmt;

use super::{Action, Verb};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParseError {
    pub text: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "unparseable action `{}`", self.text)
    }
}

impl std::error::Error for ParseError {}

/// Parse agent text against the canonical grammar. Case-insensitive;
/// whitespace runs collapse to one space.
pub fn parse_action(text: &str) -> Result<Action, ParseError> {
    let lowered = text.to_ascii_lowercase();
    let words: Vec<&str> = lowered.split_whitespace().collect();
    parse_words(&words).ok_or_else(|| ParseError { text: text.to_string() })
}

fn parse_words(w: &[&str]) -> Option<Action> {
    match w {
        ["look"] => Some(Action::look()),
        ["inventory"] => Some(Action::inventory()),
        ["done"] => Some(Action::done()),
        ["go", "to", rest @ ..] => Some(Action::goto(entity(rest)?)),
        ["open", rest @ ..] => Some(Action::open(entity(rest)?)),
        ["close", rest @ ..] => Some(Action::close(entity(rest)?)),
        ["examine", rest @ ..] => Some(Action::examine(entity(rest)?)),
        ["take", rest @ ..] => binary(Verb::Take, rest, "from"),
        ["move", rest @ ..] => binary(Verb::Move, rest, "to"),
        ["heat", rest @ ..] => binary(Verb::Heat, rest, "with"),
        ["cool", rest @ ..] => binary(Verb::Cool, rest, "with"),
        ["clean", rest @ ..] => binary(Verb::Clean, rest, "with"),
        _ => None,
    }
}

fn binary(verb: Verb, rest: &[&str], sep: &str) -> Option<Action> {
    let at = rest.iter().position(|t| *t == sep)?;
    let a = entity(&rest[..at])?;
    let b = entity(&rest[at + 1..])?;
    Some(Action::binary(verb, a, b))
}

/// An entity id is exactly `<name> <number>`.
fn entity(tokens: &[&str]) -> Option<String> {
    match tokens {
        [name, num] if name.chars().all(|c| c.is_ascii_lowercase()) && num.parse::<u32>().is_ok() => {
            Some(format!("{name} {num}"))
        }
        _ => None,
    }
}
