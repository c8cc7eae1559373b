use std::collections::BTreeSet;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{Action, EnvState, Outcome, Verb, World};

/// An executable `(verb, target)` pair. The target is a location id for
/// goto/open/close and device verbs, an object id for take.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Affordance {
    pub verb: Verb,
    pub target: String,
}

impl Affordance {
    pub fn new(verb: Verb, target: impl Into<String>) -> Self {
        Affordance { verb, target: target.into() }
    }

    /// The affordance an executed action demonstrates, if it is one of the
    /// enumerated kinds.
    pub fn of_action(a: &Action) -> Option<Affordance> {
        match a.verb {
            Verb::Goto | Verb::Open | Verb::Close | Verb::Take => Some(Affordance::new(a.verb, a.arg1()?)),
            Verb::Heat | Verb::Cool | Verb::Clean => Some(Affordance::new(a.verb, a.arg2()?)),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reachable {
    pub locations: BTreeSet<String>,
    pub objects: BTreeSet<String>,
    pub affordances: BTreeSet<Affordance>,
}

/// Closure over agent positions and legal interactions from the initial
/// state. Every fact is established by actually executing the enabling
/// actions on a fresh simulation, so the result agrees with the engine.
pub fn enumerate_reachable(world: &Arc<World>) -> Reachable {
    let mut out = Reachable::default();
    let record = |out: &mut Reachable, s: &mut EnvState, a: Action| -> bool {
        let r = s.step(&a);
        if r.outcome == Outcome::Ok {
            if let Some(aff) = Affordance::of_action(&a) {
                out.affordances.insert(aff);
            }
            true
        } else {
            false
        }
    };

    let mut any_takeable: Option<(String, String)> = None;
    for l in &world.spec.locations {
        let (mut s, _) = EnvState::reset(world);
        if !record(&mut out, &mut s, Action::goto(&l.id)) {
            continue;
        }
        out.locations.insert(l.id.clone());
        if l.container {
            // Exercise both transitions whatever the starting state.
            let first = if s.is_open(&l.id) { Action::close(&l.id) } else { Action::open(&l.id) };
            let second = if s.is_open(&l.id) { Action::open(&l.id) } else { Action::close(&l.id) };
            record(&mut out, &mut s, first);
            record(&mut out, &mut s, second);
            if !s.is_open(&l.id) {
                record(&mut out, &mut s, Action::open(&l.id));
            }
        }
        let contents: Vec<String> = s.contents(&l.id).into_iter().map(str::to_string).collect();
        for o in contents {
            let mut probe = s.clone();
            if record(&mut out, &mut probe, Action::take(&o, &l.id)) {
                out.objects.insert(o.clone());
                any_takeable.get_or_insert((o, l.id.clone()));
            } else if s.is_open(&l.id) {
                out.objects.insert(o);
            }
        }
    }

    if let Some((o, at)) = any_takeable {
        for (verb, device) in world.spec.applicable_device_verbs() {
            let (mut s, _) = EnvState::reset(world);
            s.step(&Action::goto(&at));
            if !s.is_open(&at) {
                s.step(&Action::open(&at));
            }
            s.step(&Action::take(&o, &at));
            if s.agent_location() != Some(device.as_str()) {
                s.step(&Action::goto(&device));
            }
            record(&mut out, &mut s, Action::device(verb, &o, &device));
        }
    }
    out
}
