//! Action semantics and observation rendering.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{
    entity_name, instance_number, Action, DeviceVerb, ObjState, Outcome, StateSet, StepRecord, Verb, World,
};

pub const NOTHING_HAPPENS: &str = "Nothing happens.";

/// Mutable simulation state over a shared [`World`].
///
/// Objects are either placed (`object_loc[i] = Some(loc)`) or carried
/// (`carrying == Some(i)`, `object_loc[i] = None`), never both.
#[derive(Clone, Debug)]
pub struct EnvState {
    world: Arc<World>,
    agent_at: Option<usize>,
    carrying: Option<usize>,
    object_loc: Vec<Option<usize>>,
    open: Vec<bool>,
    object_state: Vec<StateSet>,
    step_count: usize,
    terminal: bool,
}

/// Equality of the simulated configuration. The step counter is bookkeeping
/// and is not compared, so a no-op step leaves the state equal to itself.
impl PartialEq for EnvState {
    fn eq(&self, other: &Self) -> bool {
        (Arc::ptr_eq(&self.world, &other.world) || self.world.spec == other.world.spec)
            && self.agent_at == other.agent_at
            && self.carrying == other.carrying
            && self.object_loc == other.object_loc
            && self.open == other.open
            && self.object_state == other.object_state
            && self.terminal == other.terminal
    }
}

/// Serializable snapshot of an [`EnvState`] keyed by ids.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnvSnapshot {
    pub schema: String,
    pub world_id: String,
    pub agent_location: Option<String>,
    pub carrying: Option<String>,
    pub object_locations: BTreeMap<String, String>,
    pub container_open: BTreeMap<String, bool>,
    pub object_state: BTreeMap<String, Vec<ObjState>>,
    pub step_count: usize,
}

impl EnvState {
    /// Fresh state at the world's initial placements, plus the room overview.
    pub fn reset(world: &Arc<World>) -> (EnvState, String) {
        let spec = &world.spec;
        let object_loc = spec
            .objects
            .iter()
            .map(|o| Some(world.loc(&o.initial_location).expect("validated world")))
            .collect();
        let open = spec.locations.iter().map(|l| !l.container || l.initially_open).collect();
        let state = EnvState {
            world: Arc::clone(world),
            agent_at: None,
            carrying: None,
            object_loc,
            open,
            object_state: vec![StateSet::default(); spec.objects.len()],
            step_count: 0,
            terminal: false,
        };
        let obs = state.room_overview();
        (state, obs)
    }

    pub fn world(&self) -> &Arc<World> {
        &self.world
    }

    pub fn step_count(&self) -> usize {
        self.step_count
    }

    pub fn is_terminal(&self) -> bool {
        self.terminal
    }

    pub fn agent_location(&self) -> Option<&str> {
        self.agent_at.map(|i| self.world.spec.locations[i].id.as_str())
    }

    pub fn carrying(&self) -> Option<&str> {
        self.carrying.map(|i| self.world.spec.objects[i].id.as_str())
    }

    pub fn object_location(&self, object: &str) -> Option<&str> {
        let i = self.world.obj(object)?;
        self.object_loc[i].map(|l| self.world.spec.locations[l].id.as_str())
    }

    pub fn object_states(&self, object: &str) -> StateSet {
        self.world.obj(object).map(|i| self.object_state[i]).unwrap_or_default()
    }

    pub fn is_open(&self, location: &str) -> bool {
        self.world.loc(location).map(|i| self.open[i]).unwrap_or(false)
    }

    /// Ids of objects currently placed at `location`, in world order.
    pub fn contents(&self, location: &str) -> Vec<&str> {
        match self.world.loc(location) {
            Some(l) => self.contents_of(l).map(|o| self.world.spec.objects[o].id.as_str()).collect(),
            None => Vec::new(),
        }
    }

    fn contents_of(&self, loc: usize) -> impl Iterator<Item = usize> + '_ {
        self.object_loc.iter().enumerate().filter(move |(_, l)| **l == Some(loc)).map(|(i, _)| i)
    }

    /// Placed objects in world order, with the carried object last (as `None`).
    pub fn placements(&self) -> impl Iterator<Item = (&str, Option<&str>)> + '_ {
        self.world.spec.objects.iter().zip(&self.object_loc).map(move |(o, l)| {
            (o.id.as_str(), l.map(|l| self.world.spec.locations[l].id.as_str()))
        })
    }

    /// Objects of `class` with their location (`None` when carried) and states.
    pub fn objects_of_class<'a>(&'a self, class: &'a str) -> impl Iterator<Item = (usize, Option<usize>, StateSet)> + 'a {
        self.world
            .spec
            .objects
            .iter()
            .enumerate()
            .filter(move |(_, o)| o.class == class)
            .map(move |(i, _)| (i, self.object_loc[i], self.object_state[i]))
    }

    pub fn snapshot(&self) -> EnvSnapshot {
        let spec = &self.world.spec;
        EnvSnapshot {
            schema: "eccl-envstate/v1".into(),
            world_id: spec.world_id.clone(),
            agent_location: self.agent_location().map(str::to_string),
            carrying: self.carrying().map(str::to_string),
            object_locations: self
                .placements()
                .filter_map(|(o, l)| l.map(|l| (o.to_string(), l.to_string())))
                .collect(),
            container_open: spec
                .locations
                .iter()
                .zip(&self.open)
                .filter(|(l, _)| l.container)
                .map(|(l, o)| (l.id.clone(), *o))
                .collect(),
            object_state: spec
                .objects
                .iter()
                .zip(&self.object_state)
                .filter(|(_, s)| !s.is_empty())
                .map(|(o, s)| (o.id.clone(), s.iter().collect()))
                .collect(),
            step_count: self.step_count,
        }
    }

    /// Apply one action. Violated preconditions leave the configuration
    /// untouched and yield [`NOTHING_HAPPENS`].
    pub fn step(&mut self, action: &Action) -> StepRecord {
        self.step_count += 1;
        let (observation, outcome) = if self.terminal {
            (NOTHING_HAPPENS.to_string(), Outcome::Noop)
        } else {
            match self.apply(action) {
                Some(obs) if action.verb == Verb::Done => (obs, Outcome::Terminal),
                Some(obs) => (obs, Outcome::Ok),
                None => (NOTHING_HAPPENS.to_string(), Outcome::Noop),
            }
        };
        StepRecord {
            index: self.step_count,
            action_text: action.to_string(),
            action: Some(action.clone()),
            observation,
            outcome,
        }
    }

    /// Record for an agent reply that did not parse: a no-op that still
    /// consumes a step.
    pub fn step_unparsed(&mut self, raw: &str) -> StepRecord {
        self.step_count += 1;
        StepRecord {
            index: self.step_count,
            action_text: raw.trim().to_string(),
            action: None,
            observation: NOTHING_HAPPENS.to_string(),
            outcome: Outcome::Noop,
        }
    }

    fn apply(&mut self, action: &Action) -> Option<String> {
        let w = Arc::clone(&self.world);
        let loc = |id: Option<&str>| id.and_then(|s| w.loc(s));
        let obj = |id: Option<&str>| id.and_then(|s| w.obj(s));
        match action.verb {
            Verb::Look => Some(match self.agent_at {
                None => self.room_overview(),
                Some(l) => format!("You are at {}. {}", w.spec.locations[l].id, self.describe(l)),
            }),
            Verb::Inventory => Some(match self.carrying {
                Some(o) => format!("You are carrying: a {}.", w.spec.objects[o].id),
                None => "You are not carrying anything.".to_string(),
            }),
            Verb::Done => Some("You end the episode.".to_string()),
            Verb::Goto => {
                let l = loc(action.arg1())?;
                if self.agent_at == Some(l) {
                    return None;
                }
                self.agent_at = Some(l);
                Some(format!("You arrive at {}. {}", w.spec.locations[l].id, self.describe(l)))
            }
            Verb::Open => {
                let l = loc(action.arg1())?;
                let spec = &w.spec.locations[l];
                if self.agent_at != Some(l) || !spec.container || self.open[l] {
                    return None;
                }
                self.open[l] = true;
                Some(format!("You open the {}. {}", spec.id, self.describe(l)))
            }
            Verb::Close => {
                let l = loc(action.arg1())?;
                let spec = &w.spec.locations[l];
                if self.agent_at != Some(l) || !spec.container || !self.open[l] {
                    return None;
                }
                self.open[l] = false;
                Some(format!("You close the {}.", spec.id))
            }
            Verb::Take => {
                let o = obj(action.arg1())?;
                let l = loc(action.arg2())?;
                if self.agent_at != Some(l) || self.object_loc[o] != Some(l) || !self.open[l] || self.carrying.is_some() {
                    return None;
                }
                self.object_loc[o] = None;
                self.carrying = Some(o);
                Some(format!("You pick up the {} from the {}.", w.spec.objects[o].id, w.spec.locations[l].id))
            }
            Verb::Move => {
                let o = obj(action.arg1())?;
                let l = loc(action.arg2())?;
                if self.carrying != Some(o) || self.agent_at != Some(l) || !self.open[l] {
                    return None;
                }
                if w.spec.locations[l].requires_clear && self.contents_of(l).next().is_some() {
                    return None;
                }
                self.carrying = None;
                self.object_loc[o] = Some(l);
                Some(format!("You move the {} to the {}.", w.spec.objects[o].id, w.spec.locations[l].id))
            }
            Verb::Examine => {
                let o = obj(action.arg1())?;
                if self.carrying != Some(o) {
                    return None;
                }
                let id = &w.spec.objects[o].id;
                let states: Vec<&str> = self.object_state[o].iter().map(ObjState::word).collect();
                Some(if states.is_empty() {
                    format!("There's nothing special about {id}.")
                } else {
                    format!("The {id} is {}.", states.join(" and "))
                })
            }
            Verb::Heat | Verb::Cool | Verb::Clean => {
                let dv = DeviceVerb::from_verb(action.verb)?;
                let o = obj(action.arg1())?;
                let l = loc(action.arg2())?;
                if self.carrying != Some(o) || self.agent_at != Some(l) || w.device_location(dv) != Some(l) {
                    return None;
                }
                self.object_state[o].insert(dv.resulting_state());
                Some(format!(
                    "You {} the {} using the {}.",
                    action.verb.name(),
                    w.spec.objects[o].id,
                    w.spec.locations[l].id
                ))
            }
        }
        .inspect(|_| {
            if action.verb == Verb::Done {
                self.terminal = true;
            }
        })
    }

    fn room_overview(&self) -> String {
        let mut ids: Vec<&str> = self.world.spec.locations.iter().map(|l| l.id.as_str()).collect();
        ids.sort_by(|a, b| {
            entity_name(a)
                .cmp(entity_name(b))
                .then_with(|| instance_number(b).cmp(&instance_number(a)))
        });
        format!(
            "You are in the middle of a room. Looking quickly around you, you see {}.",
            list_phrase(&ids)
        )
    }

    /// Visible contents of a location (or its closed status).
    fn describe(&self, l: usize) -> String {
        let spec = &self.world.spec.locations[l];
        let items: Vec<&str> = self.contents_of(l).map(|o| self.world.spec.objects[o].id.as_str()).collect();
        if spec.container {
            if self.open[l] {
                format!("The {} is open. In it, you see {}.", spec.id, list_phrase(&items))
            } else {
                format!("The {} is closed.", spec.id)
            }
        } else {
            format!("On the {}, you see {}.", spec.id, list_phrase(&items))
        }
    }
}

/// `["a", "b", "c"]` → `"a a, a b, and a c"`; empty → `"nothing"`.
pub(crate) fn list_phrase(items: &[&str]) -> String {
    match items {
        [] => "nothing".to_string(),
        [one] => format!("a {one}"),
        [init @ .., last] => {
            let mut s = String::new();
            for i in init {
                s.push_str("a ");
                s.push_str(i);
                s.push_str(", ");
            }
            s.push_str("and a ");
            s.push_str(last);
            s
        }
    }
}
