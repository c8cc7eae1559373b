//! Parsing of the engine's own observation templates. Agents and the
//! summarizer only ever see text, so everything they know comes through here.

const OVERVIEW: &str = "You are in the middle of a room. Looking quickly around you, you see ";

/// What an observation reveals about one location.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Sighting {
    pub location: String,
    /// Known open/closed status; `None` for plain surfaces.
    pub open: Option<bool>,
    /// Visible contents, or `None` when hidden by a closed container.
    pub contents: Option<Vec<String>>,
}

/// `"a x 1, a y 2, and a z 3"` → ids; `"nothing"` → empty.
pub fn parse_list(s: &str) -> Vec<String> {
    let s = s.trim();
    if s == "nothing" || s.is_empty() {
        return Vec::new();
    }
    s.split(", ")
        .map(|p| {
            let p = p.strip_prefix("and ").unwrap_or(p);
            p.strip_prefix("a ").unwrap_or(p).to_string()
        })
        .collect()
}

/// Receptacles listed by the reset overview, in listing order.
pub fn parse_overview(obs: &str) -> Option<Vec<String>> {
    let rest = obs.strip_prefix(OVERVIEW)?;
    Some(parse_list(rest.strip_suffix('.')?))
}

fn parse_description(desc: &str) -> Option<Sighting> {
    if let Some(rest) = desc.strip_prefix("On the ") {
        let (loc, list) = rest.split_once(", you see ")?;
        return Some(Sighting {
            location: loc.to_string(),
            open: None,
            contents: Some(parse_list(list.strip_suffix('.')?)),
        });
    }
    let rest = desc.strip_prefix("The ")?;
    if let Some(loc) = rest.strip_suffix(" is closed.") {
        return Some(Sighting { location: loc.to_string(), open: Some(false), contents: None });
    }
    let (loc, list) = rest.split_once(" is open. In it, you see ")?;
    Some(Sighting { location: loc.to_string(), open: Some(true), contents: Some(parse_list(list.strip_suffix('.')?)) })
}

/// Location view carried by an arrival, look or open observation.
pub fn parse_sighting(obs: &str) -> Option<Sighting> {
    for prefix in ["You arrive at ", "You are at ", "You open the "] {
        if let Some(rest) = obs.strip_prefix(prefix) {
            let (_, desc) = rest.split_once(". ")?;
            return parse_description(desc);
        }
    }
    None
}
