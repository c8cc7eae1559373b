//! Checkpoint construction and coverage verification.
//!
//! A checkpoint is a verifiable fact about a world: a location reached, an
//! object observed, or an interaction executed successfully. Verification
//! is plain string/structural matching against step records.

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::io::{check_schema, versioned_json};
use crate::world::{enumerate_reachable, Affordance, StepRecord, Trajectory, Verb, World};
use crate::{Error, Result};

pub const CHECKPOINTS_SCHEMA: &str = "eccl-checkpoints/v1";

/// Verbs whose successful observation can reveal an object.
pub const REVEALING_VERBS: [Verb; 5] = [Verb::Goto, Verb::Open, Verb::Examine, Verb::Take, Verb::Look];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Category {
    Location,
    Object,
    Affordance,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum MatchSpec {
    Location { location: String, arrival: String },
    Object { object: String },
    Affordance { verb: Verb, target: String },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub id: String,
    pub category: Category,
    pub match_spec: MatchSpec,
}

impl Checkpoint {
    pub fn location(id: &str) -> Self {
        Checkpoint {
            id: format!("location:{id}"),
            category: Category::Location,
            match_spec: MatchSpec::Location { location: id.to_string(), arrival: format!("You arrive at {id}.") },
        }
    }

    pub fn object(id: &str) -> Self {
        Checkpoint {
            id: format!("object:{id}"),
            category: Category::Object,
            match_spec: MatchSpec::Object { object: id.to_string() },
        }
    }

    pub fn affordance(a: &Affordance) -> Self {
        Checkpoint {
            id: format!("affordance:{}:{}", a.verb.name(), a.target),
            category: Category::Affordance,
            match_spec: MatchSpec::Affordance { verb: a.verb, target: a.target.clone() },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckpointSet {
    pub world_id: String,
    pub checkpoints: Vec<Checkpoint>,
}

impl CheckpointSet {
    pub fn new(world_id: impl Into<String>, mut checkpoints: Vec<Checkpoint>) -> Result<Self> {
        let mut seen = std::collections::HashSet::new();
        checkpoints.retain(|c| seen.insert(c.id.clone()));
        if checkpoints.is_empty() {
            return Err(Error::Empty("checkpoint set"));
        }
        Ok(CheckpointSet { world_id: world_id.into(), checkpoints })
    }

    pub fn m(&self) -> usize {
        self.checkpoints.len()
    }

    pub fn count(&self, cat: Category) -> usize {
        self.checkpoints.iter().filter(|c| c.category == cat).count()
    }

    pub fn to_json(&self) -> String {
        versioned_json(CHECKPOINTS_SCHEMA, self)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let v: serde_json::Value = serde_json::from_str(s)?;
        check_schema(&v, CHECKPOINTS_SCHEMA)?;
        #[derive(Deserialize)]
        struct Doc {
            world_id: String,
            checkpoints: Vec<Checkpoint>,
        }
        let d: Doc = serde_json::from_value(v)?;
        CheckpointSet::new(d.world_id, d.checkpoints)
    }
}

/// Locations, then objects, then affordances (open/close per container,
/// take per object, one per applicable device verb), each in world order
/// and restricted to what is actually reachable.
pub fn build_checkpoints(world: &Arc<World>) -> CheckpointSet {
    let reach = enumerate_reachable(world);
    let spec = &world.spec;
    let mut cps = Vec::new();
    for l in &spec.locations {
        if reach.locations.contains(&l.id) {
            cps.push(Checkpoint::location(&l.id));
        }
    }
    for o in &spec.objects {
        if reach.objects.contains(&o.id) {
            cps.push(Checkpoint::object(&o.id));
        }
    }
    let mut affs = Vec::new();
    for l in spec.locations.iter().filter(|l| l.container) {
        affs.push(Affordance::new(Verb::Open, &l.id));
        affs.push(Affordance::new(Verb::Close, &l.id));
    }
    for o in &spec.objects {
        affs.push(Affordance::new(Verb::Take, &o.id));
    }
    for (v, d) in spec.applicable_device_verbs() {
        affs.push(Affordance::new(v.verb(), d));
    }
    cps.extend(affs.iter().filter(|a| reach.affordances.contains(a)).map(Checkpoint::affordance));
    CheckpointSet::new(world.id(), cps).expect("every world has a reachable location")
}

/// Case-insensitive containment with alphanumeric boundaries on both sides,
/// so `book 1` matches neither `notebook 1` nor `book 12`.
pub fn contains_word(haystack: &str, needle: &str) -> bool {
    let h = haystack.to_ascii_lowercase();
    contains_word_lower(&h, &needle.to_ascii_lowercase())
}

fn contains_word_lower(h: &str, n: &str) -> bool {
    if n.is_empty() {
        return false;
    }
    let bytes = h.as_bytes();
    let mut from = 0;
    while let Some(pos) = h[from..].find(n) {
        let start = from + pos;
        let end = start + n.len();
        let before_ok = start == 0 || !bytes[start - 1].is_ascii_alphanumeric();
        let after_ok = end == bytes.len() || !bytes[end].is_ascii_alphanumeric();
        if before_ok && after_ok {
            return true;
        }
        from = start + 1;
    }
    false
}

/// Whether `rec` verifies `cp`.
pub fn match_step(cp: &Checkpoint, rec: &StepRecord) -> bool {
    match &cp.match_spec {
        MatchSpec::Location { arrival, .. } => {
            rec.observation.to_ascii_lowercase().contains(&arrival.to_ascii_lowercase())
        }
        MatchSpec::Object { object } => {
            rec.is_ok()
                && rec.verb().is_some_and(|v| REVEALING_VERBS.contains(&v))
                && contains_word(&rec.observation, object)
        }
        MatchSpec::Affordance { verb, target } => {
            rec.is_ok()
                && rec.action.as_ref().and_then(Affordance::of_action).is_some_and(|a| a.verb == *verb && a.target == *target)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoverageRecord {
    /// Checkpoint id → 1-based index of the first step that verified it.
    pub hits: BTreeMap<String, Option<usize>>,
    pub covered_count: usize,
    pub m: usize,
}

impl CoverageRecord {
    pub fn ecc(&self) -> f64 {
        ecc(self)
    }
}

pub fn ecc(cov: &CoverageRecord) -> f64 {
    cov.covered_count as f64 / cov.m as f64
}

/// Batch coverage: first-hit scan of every checkpoint over every step.
pub fn coverage(traj: &Trajectory, cps: &CheckpointSet) -> Result<CoverageRecord> {
    if traj.world_id != cps.world_id {
        return Err(Error::WorldMismatch { expected: cps.world_id.clone(), found: traj.world_id.clone() });
    }
    let mut hits = BTreeMap::new();
    let mut covered = 0;
    for cp in &cps.checkpoints {
        let first = traj.steps.iter().find(|r| match_step(cp, r)).map(|r| r.index);
        covered += first.is_some() as usize;
        hits.insert(cp.id.clone(), first);
    }
    Ok(CoverageRecord { hits, covered_count: covered, m: cps.m() })
}

/// Streaming coverage. Indexes checkpoints by what can trigger them so each
/// observed record costs roughly one pass over its own text.
#[derive(Clone, Debug)]
pub struct Tracker {
    cps: Arc<CheckpointSet>,
    hits: Vec<Option<usize>>,
    covered: usize,
    locations: Vec<(usize, String)>,
    objects: Vec<(usize, String)>,
    affordances: HashMap<(Verb, String), usize>,
}

pub fn incremental_tracker(cps: Arc<CheckpointSet>) -> Tracker {
    Tracker::new(cps)
}

impl Tracker {
    pub fn new(cps: Arc<CheckpointSet>) -> Self {
        let mut locations = Vec::new();
        let mut objects = Vec::new();
        let mut affordances = HashMap::new();
        for (i, cp) in cps.checkpoints.iter().enumerate() {
            match &cp.match_spec {
                MatchSpec::Location { arrival, .. } => locations.push((i, arrival.to_ascii_lowercase())),
                MatchSpec::Object { object } => objects.push((i, object.to_ascii_lowercase())),
                MatchSpec::Affordance { verb, target } => {
                    affordances.insert((*verb, target.clone()), i);
                }
            }
        }
        let n = cps.m();
        Tracker { cps, hits: vec![None; n], covered: 0, locations, objects, affordances }
    }

    pub fn checkpoints(&self) -> &Arc<CheckpointSet> {
        &self.cps
    }

    fn hit(&mut self, i: usize, step: usize) -> bool {
        if self.hits[i].is_none() {
            self.hits[i] = Some(step);
            self.covered += 1;
            true
        } else {
            false
        }
    }

    /// Feed the next record; returns how many checkpoints it newly covered.
    pub fn observe(&mut self, rec: &StepRecord) -> usize {
        let before = self.covered;
        let obs = rec.observation.to_ascii_lowercase();
        for k in 0..self.locations.len() {
            let (i, ref arrival) = self.locations[k];
            if self.hits[i].is_none() && obs.contains(arrival.as_str()) {
                self.hit(i, rec.index);
            }
        }
        if rec.is_ok() {
            if rec.verb().is_some_and(|v| REVEALING_VERBS.contains(&v)) {
                for k in 0..self.objects.len() {
                    let (i, ref id) = self.objects[k];
                    if self.hits[i].is_none() && contains_word_lower(&obs, id) {
                        self.hit(i, rec.index);
                    }
                }
            }
            if let Some(a) = rec.action.as_ref().and_then(Affordance::of_action) {
                if let Some(&i) = self.affordances.get(&(a.verb, a.target)) {
                    self.hit(i, rec.index);
                }
            }
        }
        self.covered - before
    }

    pub fn covered_count(&self) -> usize {
        self.covered
    }

    pub fn current_ecc(&self) -> f64 {
        self.covered as f64 / self.cps.m() as f64
    }

    pub fn record(&self) -> CoverageRecord {
        CoverageRecord {
            hits: self.cps.checkpoints.iter().zip(&self.hits).map(|(c, h)| (c.id.clone(), *h)).collect(),
            covered_count: self.covered,
            m: self.cps.m(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::{sample_bedroom, Action, EnvState, EpisodeMode, LocationKind, LocationSpec, ObjectSpec, Outcome, WorldSpec};

    fn bedroom() -> Arc<World> {
        World::new(sample_bedroom()).unwrap()
    }

    /// Hand enumeration for the sample bedroom: 9 receptacles, 12 objects,
    /// 4 closed drawers, no devices.
    #[test]
    fn bedroom_has_41() {
        let cps = build_checkpoints(&bedroom());
        assert_eq!(cps.count(Category::Location), 9);
        assert_eq!(cps.count(Category::Object), 12);
        assert_eq!(cps.count(Category::Affordance), 2 * 4 + 12);
        assert_eq!(cps.m(), 41);
        assert_eq!(build_checkpoints(&bedroom()), cps);
    }

    #[test]
    fn minimal_world_has_three() {
        let spec = WorldSpec {
            world_id: "tiny".into(),
            seed: 0,
            room_kind: crate::world::RoomKind::Bedroom,
            locations: vec![LocationSpec {
                id: "bed 1".into(),
                kind: LocationKind::Bed,
                container: false,
                initially_open: true,
                requires_clear: false,
            }],
            objects: vec![ObjectSpec {
                id: "book 1".into(),
                class: "book".into(),
                initial_location: "bed 1".into(),
                properties: Default::default(),
            }],
            device_map: Default::default(),
        };
        let cps = build_checkpoints(&World::new(spec).unwrap());
        let ids: Vec<_> = cps.checkpoints.iter().map(|c| c.id.as_str()).collect();
        assert_eq!(ids, ["location:bed 1", "object:book 1", "affordance:take:book 1"]);
    }

    #[test]
    fn word_boundaries() {
        assert!(contains_word("On the bed 1, you see a Book 1.", "book 1"));
        assert!(!contains_word("you see a notebook 1.", "book 1"));
        assert!(!contains_word("you see a book 12.", "book 1"));
        assert!(contains_word("book 1", "book 1"));
    }

    fn run(world: &Arc<World>, actions: &[Action]) -> Trajectory {
        let (mut s, obs) = EnvState::reset(world);
        let mut t = Trajectory::new(world.id(), EpisodeMode::Explore, 0, obs);
        for a in actions {
            t.steps.push(s.step(a));
        }
        t
    }

    #[test]
    fn step_matching_rules() {
        let w = bedroom();
        let cps = build_checkpoints(&w);
        let find = |id: &str| cps.checkpoints.iter().find(|c| c.id == id).unwrap().clone();
        let t = run(
            &w,
            &[
                Action::goto("bed 1"),
                Action::take("book 1", "bed 1"),
                Action::take("laptop 1", "bed 1"),
                Action::goto("drawer 1"),
                Action::open("drawer 1"),
            ],
        );
        assert!(match_step(&find("object:book 1"), &t.steps[0]));
        assert!(match_step(&find("location:bed 1"), &t.steps[0]));
        assert!(match_step(&find("affordance:take:book 1"), &t.steps[1]));
        assert_eq!(t.steps[2].outcome, Outcome::Noop);
        assert!(!match_step(&find("affordance:take:laptop 1"), &t.steps[2]));
        // Closed drawer: arrival only, contents hidden until opened.
        assert!(!match_step(&find("object:pencil 2"), &t.steps[3]));
        assert!(match_step(&find("affordance:open:drawer 1"), &t.steps[4]));
        assert!(match_step(&find("object:pencil 2"), &t.steps[4]));
    }

    #[test]
    fn done_first_scores_zero_and_empty_scores_zero() {
        let w = bedroom();
        let cps = build_checkpoints(&w);
        assert_eq!(coverage(&run(&w, &[]), &cps).unwrap().covered_count, 0);
        assert_eq!(coverage(&run(&w, &[Action::done()]), &cps).unwrap().ecc(), 0.0);
    }

    #[test]
    fn ecc_is_a_fraction() {
        let mut cov = CoverageRecord { hits: BTreeMap::new(), covered_count: 4, m: 10 };
        assert_eq!(ecc(&cov), 0.4);
        cov.covered_count = 10;
        assert_eq!(ecc(&cov), 1.0);
        cov.covered_count = 0;
        assert_eq!(ecc(&cov), 0.0);
    }

    #[test]
    fn mismatched_world_rejected() {
        let w = bedroom();
        let cps = build_checkpoints(&w);
        let mut t = run(&w, &[]);
        t.world_id = "other".into();
        assert!(matches!(coverage(&t, &cps), Err(Error::WorldMismatch { .. })));
    }

    #[test]
    fn json_round_trip() {
        let cps = build_checkpoints(&bedroom());
        let text = cps.to_json();
        assert_eq!(CheckpointSet::from_json(&text).unwrap(), cps);
        assert!(CheckpointSet::from_json(&text.replace("eccl-checkpoints/v1", "x")).is_err());
    }

    #[test]
    fn tracker_feeding_nothing_is_zero() {
        let t = Tracker::new(Arc::new(build_checkpoints(&bedroom())));
        assert_eq!(t.current_ecc(), 0.0);
    }
}
