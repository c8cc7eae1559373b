//! Rule-based summary of an exploration trajectory.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::io::{from_versioned_json, versioned_json};
use crate::observe::parse_sighting;
use crate::world::{Affordance, Outcome, Trajectory, Verb};
use crate::Result;

pub const KNOWLEDGE_SCHEMA: &str = "eccl-knowledge/v1";
pub const KNOWLEDGE_BEGIN: &str = "### KNOWLEDGE BEGIN ###";
pub const KNOWLEDGE_END: &str = "### KNOWLEDGE END ###";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Constraint {
    SingleItemInventory,
    ProximityRequired,
    ContainerGating,
    ExamineRequiresHolding,
    NoopErrorSignal,
}

impl Constraint {
    pub fn tag(self) -> &'static str {
        match self {
            Constraint::SingleItemInventory => "single_item_inventory",
            Constraint::ProximityRequired => "proximity_required",
            Constraint::ContainerGating => "container_gating",
            Constraint::ExamineRequiresHolding => "examine_requires_holding",
            Constraint::NoopErrorSignal => "noop_error_signal",
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct KnowledgeSummary {
    pub visited_locations: BTreeSet<String>,
    /// Locations whose contents were actually seen.
    pub inspected_locations: BTreeSet<String>,
    pub object_placements: BTreeMap<String, String>,
    pub verified_affordances: BTreeSet<Affordance>,
    pub open_states: BTreeMap<String, bool>,
    pub discovered_constraints: BTreeSet<Constraint>,
    pub failure_log: Vec<(String, String)>,
    /// Fact key → 1-based index of the supporting step.
    pub evidence: BTreeMap<String, usize>,
}

impl KnowledgeSummary {
    pub fn is_empty(&self) -> bool {
        self.visited_locations.is_empty()
            && self.object_placements.is_empty()
            && self.verified_affordances.is_empty()
            && self.open_states.is_empty()
            && self.discovered_constraints.is_empty()
            && self.failure_log.is_empty()
    }

    pub fn to_json(&self) -> String {
        versioned_json(KNOWLEDGE_SCHEMA, self)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        from_versioned_json(KNOWLEDGE_SCHEMA, s)
    }

    /// Canonical text block for injection into an agent prompt.
    pub fn render(&self) -> String {
        let mut out = String::new();
        out.push_str(KNOWLEDGE_BEGIN);
        out.push('\n');
        let join = |it: &mut dyn Iterator<Item = String>| it.collect::<Vec<_>>().join("; ");
        out.push_str(&format!("Visited: {}\n", join(&mut self.visited_locations.iter().cloned())));
        out.push_str(&format!(
            "Objects: {}\n",
            join(&mut self.object_placements.iter().map(|(o, l)| format!("{o} @ {l}")))
        ));
        out.push_str(&format!(
            "Containers: {}\n",
            join(&mut self.open_states.iter().map(|(l, o)| format!("{l} {}", if *o { "open" } else { "closed" })))
        ));
        out.push_str(&format!(
            "Verified actions: {}\n",
            join(&mut self.verified_affordances.iter().map(|a| format!("{} {}", a.verb.name(), a.target)))
        ));
        out.push_str(&format!(
            "Constraints: {}\n",
            join(&mut self.discovered_constraints.iter().map(|c| c.tag().to_string()))
        ));
        out.push_str(KNOWLEDGE_END);
        out
    }
}

/// Deterministic extraction of locations, placements, affordances and
/// constraints. Every entry cites the step it came from.
pub fn summarize(traj: &Trajectory) -> KnowledgeSummary {
    let mut k = KnowledgeSummary::default();
    let mut at: Option<String> = None;
    let mut carrying: Option<String> = None;
    // Closed-container take failures waiting for an open + take to confirm gating.
    let mut gated: Vec<(String, String)> = Vec::new();
    let mut opened: BTreeSet<String> = BTreeSet::new();

    for rec in &traj.steps {
        let i = rec.index;
        let a = rec.action.as_ref();
        if rec.outcome == Outcome::Noop {
            k.discovered_constraints.insert(Constraint::NoopErrorSignal);
            k.evidence.entry("constraint:noop_error_signal".into()).or_insert(i);
            let tag = a.and_then(|a| {
                let here = at.as_deref();
                match a.verb {
                    Verb::Take if carrying.is_some() => Some(Constraint::SingleItemInventory),
                    Verb::Examine if carrying.as_deref() != a.arg1() => Some(Constraint::ExamineRequiresHolding),
                    Verb::Take | Verb::Move | Verb::Heat | Verb::Cool | Verb::Clean if here != a.arg2() => {
                        Some(Constraint::ProximityRequired)
                    }
                    Verb::Open | Verb::Close if here != a.arg1() => Some(Constraint::ProximityRequired),
                    Verb::Take if a.arg2().is_some_and(|l| k.open_states.get(l) == Some(&false)) => {
                        gated.push((a.arg1()?.to_string(), a.arg2()?.to_string()));
                        None
                    }
                    _ => None,
                }
            });
            match tag {
                Some(c) => {
                    k.discovered_constraints.insert(c);
                    k.evidence.entry(format!("constraint:{}", c.tag())).or_insert(i);
                    k.failure_log.push((rec.action_text.clone(), c.tag().to_string()));
                }
                None => k.failure_log.push((rec.action_text.clone(), "untyped".to_string())),
            }
            continue;
        }
        if rec.outcome != Outcome::Ok {
            continue;
        }
        let Some(a) = a else { continue };
        if let Some(aff) = Affordance::of_action(a) {
            if aff.verb != Verb::Goto {
                k.evidence.entry(format!("affordance:{}:{}", aff.verb.name(), aff.target)).or_insert(i);
                k.verified_affordances.insert(aff);
            }
        }
        match a.verb {
            Verb::Goto => {
                let l = a.arg1().unwrap_or_default().to_string();
                k.evidence.entry(format!("location:{l}")).or_insert(i);
                k.visited_locations.insert(l.clone());
                at = Some(l);
            }
            Verb::Open => {
                opened.insert(a.arg1().unwrap_or_default().to_string());
            }
            Verb::Close => {
                let l = a.arg1().unwrap_or_default().to_string();
                k.evidence.insert(format!("open:{l}"), i);
                k.open_states.insert(l, false);
            }
            Verb::Take => {
                carrying = a.arg1().map(str::to_string);
                let hit = gated.iter().any(|(o, l)| Some(o.as_str()) == a.arg1() && Some(l.as_str()) == a.arg2() && opened.contains(l));
                if hit {
                    k.discovered_constraints.insert(Constraint::ContainerGating);
                    k.evidence.entry("constraint:container_gating".into()).or_insert(i);
                }
            }
            Verb::Move => {
                if let (Some(o), Some(l)) = (a.arg1(), a.arg2()) {
                    k.object_placements.insert(o.to_string(), l.to_string());
                    k.evidence.insert(format!("object:{o}"), i);
                }
                carrying = None;
            }
            _ => {}
        }
        if let Some(s) = parse_sighting(&rec.observation) {
            if let Some(open) = s.open {
                k.evidence.insert(format!("open:{}", s.location), i);
                k.open_states.insert(s.location.clone(), open);
            }
            if let Some(items) = s.contents {
                k.inspected_locations.insert(s.location.clone());
                for o in items {
                    k.evidence.insert(format!("object:{o}"), i);
                    k.object_placements.insert(o, s.location.clone());
                }
            }
        }
    }
    k
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::{parse_action, sample_bedroom, EnvState, EpisodeMode, World};

    fn trace(actions: &[&str]) -> Trajectory {
        let w = World::new(sample_bedroom()).unwrap();
        let (mut s, obs) = EnvState::reset(&w);
        let mut t = Trajectory::new(w.id(), EpisodeMode::Explore, 0, obs);
        for a in actions {
            t.steps.push(s.step(&parse_action(a).unwrap()));
        }
        t
    }

    #[test]
    fn sample_trace_summary() {
        let t = trace(&[
            "look",
            "go to bed 1",
            "examine book 1",
            "take book 1 from bed 1",
            "inventory",
            "examine book 1",
            "take laptop 1 from bed 1",
            "move book 1 to bed 1",
            "go to diningtable 1",
            "go to drawer 1",
            "take pencil 2 from drawer 1",
            "open drawer 1",
            "take pencil 2 from drawer 1",
        ]);
        let k = summarize(&t);
        assert_eq!(k.object_placements["book 1"], "bed 1");
        assert_eq!(k.object_placements["laptop 1"], "bed 1");
        assert_eq!(k.object_placements["mug 1"], "diningtable 1");
        assert_eq!(k.object_placements["pencil 2"], "drawer 1");
        for c in [
            Constraint::SingleItemInventory,
            Constraint::ExamineRequiresHolding,
            Constraint::ContainerGating,
            Constraint::NoopErrorSignal,
        ] {
            assert!(k.discovered_constraints.contains(&c), "{c:?}");
        }
        assert!(k.verified_affordances.contains(&Affordance::new(Verb::Open, "drawer 1")));
        assert!(k.open_states["drawer 1"]);
        for key in k.evidence.keys() {
            assert!(k.evidence[key] >= 1 && k.evidence[key] <= t.len());
        }
        let text = k.render();
        assert!(text.starts_with(KNOWLEDGE_BEGIN) && text.ends_with(KNOWLEDGE_END));
        assert!(text.contains("pencil 2 @ drawer 1"));
        assert_eq!(KnowledgeSummary::from_json(&k.to_json()).unwrap(), k);
    }

    #[test]
    fn empty_and_done_only() {
        assert!(summarize(&trace(&[])).is_empty());
        let k = summarize(&trace(&["done"]));
        assert!(k.is_empty());
    }

    #[test]
    fn prefix_monotone() {
        let t = trace(&["go to bed 1", "take book 1 from bed 1", "go to drawer 1", "open drawer 1", "go to sidetable 1"]);
        let mut prev = summarize(&t.prefix(0));
        for n in 1..=t.len() {
            let k = summarize(&t.prefix(n));
            assert!(prev.object_placements.keys().all(|o| k.object_placements.contains_key(o)));
            assert!(prev.verified_affordances.is_subset(&k.verified_affordances));
            prev = k;
        }
    }
}
