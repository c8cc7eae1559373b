use std::collections::{HashMap, HashSet};

use crate::observe::{parse_overview, parse_sighting};
use crate::world::{entity_name, DeviceVerb, LocationKind, ObjState, Outcome, RoomKind, StateSet, StepRecord, Verb};

/// What an agent can infer from its own episode so far. Built purely from
/// observation text and action outcomes, never from simulator state.
#[derive(Clone, Debug, Default)]
pub struct Belief {
    pub locations: Vec<String>,
    pub kinds: Vec<Option<LocationKind>>,
    loc_pos: HashMap<String, usize>,
    pub at: Option<usize>,
    pub carrying: Option<String>,
    /// Objects in first-seen order with their last seen location.
    pub objects: Vec<String>,
    pub last_seen: HashMap<String, usize>,
    pub states: HashMap<String, StateSet>,
    pub open: Vec<Option<bool>>,
    pub visited: Vec<bool>,
    /// Last observed contents; `None` until the inside has been seen.
    pub contents: Vec<Option<Vec<String>>>,
    pub tried: HashSet<String>,
    pub nooped: HashSet<String>,
    pub prev: Option<String>,
    pub steps: usize,
}

impl Belief {
    pub fn new(initial_observation: &str) -> Self {
        let locations = parse_overview(initial_observation).unwrap_or_default();
        let n = locations.len();
        Belief {
            kinds: locations.iter().map(|l| LocationKind::from_name(entity_name(l))).collect(),
            loc_pos: locations.iter().enumerate().map(|(i, l)| (l.clone(), i)).collect(),
            locations,
            open: vec![None; n],
            visited: vec![false; n],
            contents: vec![None; n],
            ..Default::default()
        }
    }

    pub fn loc(&self, id: &str) -> Option<usize> {
        self.loc_pos.get(id).copied()
    }

    pub fn room(&self) -> RoomKind {
        if self.kinds.contains(&Some(LocationKind::Bed)) {
            RoomKind::Bedroom
        } else {
            RoomKind::Kitchen
        }
    }

    pub fn is_container(&self, l: usize) -> bool {
        self.kinds[l].is_some_and(LocationKind::is_container)
    }

    pub fn known_closed(&self, l: usize) -> bool {
        self.open[l] == Some(false)
    }

    pub fn state_of(&self, obj: &str) -> StateSet {
        self.states.get(obj).copied().unwrap_or_default()
    }

    fn see(&mut self, obj: &str, l: usize) {
        if !self.last_seen.contains_key(obj) {
            self.objects.push(obj.to_string());
        }
        self.last_seen.insert(obj.to_string(), l);
    }

    pub fn observe(&mut self, rec: &StepRecord) {
        self.steps += 1;
        self.tried.insert(rec.action_text.clone());
        if rec.outcome == Outcome::Noop {
            self.nooped.insert(rec.action_text.clone());
        }
        self.prev = Some(rec.action_text.clone());
        if rec.outcome != Outcome::Ok {
            return;
        }
        let Some(a) = &rec.action else { return };
        match a.verb {
            Verb::Goto => {
                if let Some(l) = a.arg1().and_then(|x| self.loc(x)) {
                    self.at = Some(l);
                    self.visited[l] = true;
                }
            }
            Verb::Close => {
                if let Some(l) = a.arg1().and_then(|x| self.loc(x)) {
                    self.open[l] = Some(false);
                }
            }
            Verb::Take => {
                self.carrying = a.arg1().map(str::to_string);
                if let (Some(o), Some(l)) = (a.arg1(), a.arg2().and_then(|x| self.loc(x))) {
                    if let Some(c) = self.contents[l].as_mut() {
                        c.retain(|x| x != o);
                    }
                }
            }
            Verb::Move => {
                if let (Some(o), Some(l)) = (a.arg1(), a.arg2().and_then(|x| self.loc(x))) {
                    self.see(o, l);
                    if let Some(c) = self.contents[l].as_mut() {
                        c.push(o.to_string());
                    }
                }
                self.carrying = None;
            }
            Verb::Heat | Verb::Cool | Verb::Clean => {
                if let (Some(dv), Some(o)) = (DeviceVerb::from_verb(a.verb), a.arg1()) {
                    self.states.entry(o.to_string()).or_default().insert(dv.resulting_state());
                }
            }
            Verb::Examine => {
                if let Some(o) = a.arg1() {
                    let st = self.states.entry(o.to_string()).or_default();
                    for s in [ObjState::Hot, ObjState::Cold, ObjState::Clean, ObjState::Sliced] {
                        if rec.observation.contains(&format!(" {}", s.word())) {
                            st.insert(s);
                        }
                    }
                }
            }
            _ => {}
        }
        if let Some(s) = parse_sighting(&rec.observation) {
            if let Some(l) = self.loc(&s.location) {
                if s.open.is_some() {
                    self.open[l] = s.open;
                }
                if let Some(items) = &s.contents {
                    for o in items {
                        self.see(o, l);
                    }
                }
                if s.contents.is_some() {
                    self.contents[l] = s.contents;
                }
            }
        }
    }

    /// Objects believed to sit at `l` right now.
    pub fn objects_at(&self, l: usize) -> impl Iterator<Item = &str> + '_ {
        self.objects
            .iter()
            .filter(move |o| self.last_seen.get(*o) == Some(&l) && self.carrying.as_deref() != Some(o.as_str()))
            .map(String::as_str)
    }
}
