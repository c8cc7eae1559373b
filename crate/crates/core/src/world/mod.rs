//! Deterministic household text world: declarative world specs, the action
//! grammar, simulation state and observation rendering.

mod catalog;
mod engine;
mod fixtures;
mod gen;
mod goal;
mod parse;
mod reach;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use catalog::{class_info, placement_prior, task_classes, ObjectClassInfo, CATALOG};
pub use engine::{EnvSnapshot, EnvState, NOTHING_HAPPENS};
pub use fixtures::{sample_bedroom, sample_kitchen};
pub use gen::{generate_world, GenParams};
pub use goal::{check_task_success, generate_goal, TaskGoal, TaskTemplate};
pub use parse::{parse_action, ParseError};
pub use reach::{enumerate_reachable, Affordance, Reachable};

pub const WORLD_SCHEMA: &str = "eccl-world/v1";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RoomKind {
    Bedroom,
    Kitchen,
}

impl RoomKind {
    pub fn name(self) -> &'static str {
        match self {
            RoomKind::Bedroom => "bedroom",
            RoomKind::Kitchen => "kitchen",
        }
    }
}

impl std::str::FromStr for RoomKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bedroom" => Ok(RoomKind::Bedroom),
            "kitchen" => Ok(RoomKind::Kitchen),
            other => Err(Error::range("room_kind", format!("unknown room kind `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LocationKind {
    Bed,
    Diningtable,
    Drawer,
    Sidetable,
    Cabinet,
    Countertop,
    Fridge,
    Garbagecan,
    Coffeemachine,
    Sinkbasin,
    Microwave,
}

impl LocationKind {
    pub const ALL: [LocationKind; 11] = [
        LocationKind::Bed,
        LocationKind::Diningtable,
        LocationKind::Drawer,
        LocationKind::Sidetable,
        LocationKind::Cabinet,
        LocationKind::Countertop,
        LocationKind::Fridge,
        LocationKind::Garbagecan,
        LocationKind::Coffeemachine,
        LocationKind::Sinkbasin,
        LocationKind::Microwave,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LocationKind::Bed => "bed",
            LocationKind::Diningtable => "diningtable",
            LocationKind::Drawer => "drawer",
            LocationKind::Sidetable => "sidetable",
            LocationKind::Cabinet => "cabinet",
            LocationKind::Countertop => "countertop",
            LocationKind::Fridge => "fridge",
            LocationKind::Garbagecan => "garbagecan",
            LocationKind::Coffeemachine => "coffeemachine",
            LocationKind::Sinkbasin => "sinkbasin",
            LocationKind::Microwave => "microwave",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.iter().copied().find(|k| k.name() == s)
    }

    /// Kinds that gate their contents behind open/close.
    pub fn is_container(self) -> bool {
        matches!(
            self,
            LocationKind::Drawer | LocationKind::Cabinet | LocationKind::Fridge | LocationKind::Microwave
        )
    }

    pub fn ordinal(self) -> usize {
        self as usize
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Property {
    Heatable,
    Coolable,
    Cleanable,
    Sliceable,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObjState {
    Hot,
    Cold,
    Clean,
    Sliced,
}

impl ObjState {
    pub fn word(self) -> &'static str {
        match self {
            ObjState::Hot => "hot",
            ObjState::Cold => "cold",
            ObjState::Clean => "clean",
            ObjState::Sliced => "sliced",
        }
    }

    fn bit(self) -> u8 {
        1 << (self as u8)
    }
}

/// Compact set of [`ObjState`] flags.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct StateSet(u8);

impl StateSet {
    pub fn contains(self, s: ObjState) -> bool {
        self.0 & s.bit() != 0
    }
    pub fn insert(&mut self, s: ObjState) {
        self.0 |= s.bit();
    }
    pub fn is_superset(self, other: StateSet) -> bool {
        self.0 & other.0 == other.0
    }
    pub fn is_empty(self) -> bool {
        self.0 == 0
    }
    pub fn iter(self) -> impl Iterator<Item = ObjState> {
        [ObjState::Hot, ObjState::Cold, ObjState::Clean, ObjState::Sliced]
            .into_iter()
            .filter(move |s| self.contains(*s))
    }
}

impl FromIterator<ObjState> for StateSet {
    fn from_iter<I: IntoIterator<Item = ObjState>>(iter: I) -> Self {
        let mut s = StateSet::default();
        for x in iter {
            s.insert(x);
        }
        s
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DeviceVerb {
    Heat,
    Cool,
    Clean,
}

impl DeviceVerb {
    pub const ALL: [DeviceVerb; 3] = [DeviceVerb::Heat, DeviceVerb::Cool, DeviceVerb::Clean];

    pub fn resulting_state(self) -> ObjState {
        match self {
            DeviceVerb::Heat => ObjState::Hot,
            DeviceVerb::Cool => ObjState::Cold,
            DeviceVerb::Clean => ObjState::Clean,
        }
    }

    pub fn verb(self) -> Verb {
        match self {
            DeviceVerb::Heat => Verb::Heat,
            DeviceVerb::Cool => Verb::Cool,
            DeviceVerb::Clean => Verb::Clean,
        }
    }

    pub fn from_verb(v: Verb) -> Option<Self> {
        match v {
            Verb::Heat => Some(DeviceVerb::Heat),
            Verb::Cool => Some(DeviceVerb::Cool),
            Verb::Clean => Some(DeviceVerb::Clean),
            _ => None,
        }
    }
}

pub fn default_device_map() -> BTreeMap<DeviceVerb, LocationKind> {
    BTreeMap::from([
        (DeviceVerb::Heat, LocationKind::Microwave),
        (DeviceVerb::Cool, LocationKind::Fridge),
        (DeviceVerb::Clean, LocationKind::Sinkbasin),
    ])
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LocationSpec {
    pub id: String,
    pub kind: LocationKind,
    pub container: bool,
    pub initially_open: bool,
    /// A non-empty receptacle with this flag refuses new objects until cleared.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub requires_clear: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObjectSpec {
    pub id: String,
    pub class: String,
    pub initial_location: String,
    #[serde(default)]
    pub properties: BTreeSet<Property>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorldSpec {
    pub world_id: String,
    pub seed: u64,
    pub room_kind: RoomKind,
    pub locations: Vec<LocationSpec>,
    pub objects: Vec<ObjectSpec>,
    pub device_map: BTreeMap<DeviceVerb, LocationKind>,
}

/// Versioned on-disk form of a [`WorldSpec`].
#[derive(Serialize, Deserialize)]
struct WorldDoc {
    schema: String,
    #[serde(flatten)]
    world: WorldSpec,
}

impl WorldSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |reason: String| Error::InvalidWorld { world_id: self.world_id.clone(), reason };
        let mut ids = BTreeSet::new();
        for l in &self.locations {
            if !ids.insert(l.id.as_str()) {
                return Err(bad(format!("duplicate location id `{}`", l.id)));
            }
            if !l.container && !l.initially_open {
                return Err(bad(format!("non-container `{}` must be initially open", l.id)));
            }
            if instance_number(&l.id).is_none() {
                return Err(bad(format!("location id `{}` is not `<name> <n>`", l.id)));
            }
        }
        let mut oids = BTreeSet::new();
        for o in &self.objects {
            if !oids.insert(o.id.as_str()) || ids.contains(o.id.as_str()) {
                return Err(bad(format!("duplicate object id `{}`", o.id)));
            }
            if !ids.contains(o.initial_location.as_str()) {
                return Err(bad(format!(
                    "object `{}` placed at unknown location `{}`",
                    o.id, o.initial_location
                )));
            }
            if instance_number(&o.id).is_none() {
                return Err(bad(format!("object id `{}` is not `<name> <n>`", o.id)));
            }
        }
        if self.locations.is_empty() {
            return Err(bad("world has no locations".into()));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let doc = WorldDoc { schema: WORLD_SCHEMA.to_string(), world: self.clone() };
        serde_json::to_string_pretty(&doc).expect("world serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let v: serde_json::Value = serde_json::from_str(s)?;
        crate::io::check_schema(&v, WORLD_SCHEMA)?;
        let doc: WorldDoc = serde_json::from_value(v)?;
        doc.world.validate()?;
        Ok(doc.world)
    }

    pub fn location(&self, id: &str) -> Option<&LocationSpec> {
        self.locations.iter().find(|l| l.id == id)
    }

    pub fn object(&self, id: &str) -> Option<&ObjectSpec> {
        self.objects.iter().find(|o| o.id == id)
    }

    /// Device verbs whose device receptacle exists in this world.
    pub fn applicable_device_verbs(&self) -> Vec<(DeviceVerb, String)> {
        self.device_map
            .iter()
            .filter_map(|(verb, kind)| {
                self.locations.iter().find(|l| l.kind == *kind).map(|l| (*verb, l.id.clone()))
            })
            .collect()
    }
}

/// `"drawer 12"` → `Some(12)`.
pub fn instance_number(id: &str) -> Option<u32> {
    let (name, num) = id.rsplit_once(' ')?;
    if name.is_empty() || !name.chars().all(|c| c.is_ascii_lowercase()) {
        return None;
    }
    num.parse().ok()
}

/// `"drawer 12"` → `"drawer"`.
pub fn entity_name(id: &str) -> &str {
    id.rsplit_once(' ').map(|(n, _)| n).unwrap_or(id)
}

/// Immutable, indexed view of a [`WorldSpec`] shared by every simulation
/// running on it.
#[derive(Debug)]
pub struct World {
    pub spec: WorldSpec,
    loc_index: HashMap<String, usize>,
    obj_index: HashMap<String, usize>,
    device_for: [Option<usize>; 3],
}

impl World {
    pub fn new(spec: WorldSpec) -> Result<Arc<World>> {
        spec.validate()?;
        let loc_index = spec.locations.iter().enumerate().map(|(i, l)| (l.id.clone(), i)).collect();
        let obj_index = spec.objects.iter().enumerate().map(|(i, o)| (o.id.clone(), i)).collect();
        let mut device_for = [None; 3];
        for (verb, kind) in &spec.device_map {
            device_for[*verb as usize] = spec.locations.iter().position(|l| l.kind == *kind);
        }
        Ok(Arc::new(World { spec, loc_index, obj_index, device_for }))
    }

    pub fn id(&self) -> &str {
        &self.spec.world_id
    }

    pub fn loc(&self, id: &str) -> Option<usize> {
        self.loc_index.get(id).copied()
    }

    pub fn obj(&self, id: &str) -> Option<usize> {
        self.obj_index.get(id).copied()
    }

    pub fn n_locations(&self) -> usize {
        self.spec.locations.len()
    }

    pub fn n_objects(&self) -> usize {
        self.spec.objects.len()
    }

    pub fn device_location(&self, verb: DeviceVerb) -> Option<usize> {
        self.device_for[verb as usize]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verb {
    Look,
    Inventory,
    Goto,
    Open,
    Close,
    Take,
    Move,
    Examine,
    Heat,
    Cool,
    Clean,
    Done,
}

impl Verb {
    pub const ALL: [Verb; 12] = [
        Verb::Look,
        Verb::Inventory,
        Verb::Goto,
        Verb::Open,
        Verb::Close,
        Verb::Take,
        Verb::Move,
        Verb::Examine,
        Verb::Heat,
        Verb::Cool,
        Verb::Clean,
        Verb::Done,
    ];

    pub fn arity(self) -> usize {
        match self {
            Verb::Look | Verb::Inventory | Verb::Done => 0,
            Verb::Goto | Verb::Open | Verb::Close | Verb::Examine => 1,
            Verb::Take | Verb::Move | Verb::Heat | Verb::Cool | Verb::Clean => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Verb::Look => "look",
            Verb::Inventory => "inventory",
            Verb::Goto => "goto",
            Verb::Open => "open",
            Verb::Close => "close",
            Verb::Take => "take",
            Verb::Move => "move",
            Verb::Examine => "examine",
            Verb::Heat => "heat",
            Verb::Cool => "cool",
            Verb::Clean => "clean",
            Verb::Done => "done",
        }
    }

    pub fn ordinal(self) -> usize {
        self as usize
    }

    pub fn is_info_seeking(self) -> bool {
        matches!(self, Verb::Look | Verb::Examine | Verb::Inventory)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Action {
    pub verb: Verb,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub arg1: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub arg2: Option<String>,
}

impl Action {
    pub fn new(verb: Verb, arg1: Option<String>, arg2: Option<String>) -> Result<Self> {
        let given = arg1.is_some() as usize + arg2.is_some() as usize;
        if given != verb.arity() || (arg1.is_none() && arg2.is_some()) {
            return Err(Error::range(
                "action",
                format!("`{}` takes {} argument(s), got {given}", verb.name(), verb.arity()),
            ));
        }
        Ok(Action { verb, arg1, arg2 })
    }

    pub fn nullary(verb: Verb) -> Self {
        debug_assert_eq!(verb.arity(), 0);
        Action { verb, arg1: None, arg2: None }
    }

    pub fn unary(verb: Verb, a: impl Into<String>) -> Self {
        debug_assert_eq!(verb.arity(), 1);
        Action { verb, arg1: Some(a.into()), arg2: None }
    }

    pub fn binary(verb: Verb, a: impl Into<String>, b: impl Into<String>) -> Self {
        debug_assert_eq!(verb.arity(), 2);
        Action { verb, arg1: Some(a.into()), arg2: Some(b.into()) }
    }

    pub fn look() -> Self {
        Self::nullary(Verb::Look)
    }
    pub fn inventory() -> Self {
        Self::nullary(Verb::Inventory)
    }
    pub fn done() -> Self {
        Self::nullary(Verb::Done)
    }
    pub fn goto(r: impl Into<String>) -> Self {
        Self::unary(Verb::Goto, r)
    }
    pub fn open(r: impl Into<String>) -> Self {
        Self::unary(Verb::Open, r)
    }
    pub fn close(r: impl Into<String>) -> Self {
        Self::unary(Verb::Close, r)
    }
    pub fn examine(o: impl Into<String>) -> Self {
        Self::unary(Verb::Examine, o)
    }
    pub fn take(o: impl Into<String>, r: impl Into<String>) -> Self {
        Self::binary(Verb::Take, o, r)
    }
    pub fn put(o: impl Into<String>, r: impl Into<String>) -> Self {
        Self::binary(Verb::Move, o, r)
    }
    pub fn device(v: DeviceVerb, o: impl Into<String>, r: impl Into<String>) -> Self {
        Self::binary(v.verb(), o, r)
    }

    pub fn arg1(&self) -> Option<&str> {
        self.arg1.as_deref()
    }
    pub fn arg2(&self) -> Option<&str> {
        self.arg2.as_deref()
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let a = self.arg1.as_deref().unwrap_or("");
        let b = self.arg2.as_deref().unwrap_or("");
        match self.verb {
            Verb::Look | Verb::Inventory | Verb::Done => f.write_str(self.verb.name()),
            Verb::Goto => write!(f, "go to {a}"),
            Verb::Open | Verb::Close | Verb::Examine => write!(f, "{} {a}", self.verb.name()),
            Verb::Take => write!(f, "take {a} from {b}"),
            Verb::Move => write!(f, "move {a} to {b}"),
            Verb::Heat | Verb::Cool | Verb::Clean => write!(f, "{} {a} with {b}", self.verb.name()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Ok,
    Noop,
    Terminal,
}

impl Outcome {
    pub fn name(self) -> &'static str {
        match self {
            Outcome::Ok => "ok",
            Outcome::Noop => "noop",
            Outcome::Terminal => "terminal",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepRecord {
    /// 1-based step number.
    pub index: usize,
    pub action_text: String,
    /// `None` when the raw text did not parse; such steps are always no-ops.
    pub action: Option<Action>,
    pub observation: String,
    pub outcome: Outcome,
}

impl StepRecord {
    pub fn verb(&self) -> Option<Verb> {
        self.action.as_ref().map(|a| a.verb)
    }

    pub fn is_ok(&self) -> bool {
        self.outcome == Outcome::Ok
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EpisodeMode {
    Explore,
    Act,
}

impl EpisodeMode {
    pub fn name(self) -> &'static str {
        match self {
            EpisodeMode::Explore => "explore",
            EpisodeMode::Act => "act",
        }
    }
}

/// An episode: the reset observation followed by one record per step.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trajectory {
    pub world_id: String,
    pub mode: EpisodeMode,
    pub seed: u64,
    pub initial_observation: String,
    pub steps: Vec<StepRecord>,
}

impl Trajectory {
    pub fn new(world_id: impl Into<String>, mode: EpisodeMode, seed: u64, initial_observation: String) -> Self {
        Trajectory { world_id: world_id.into(), mode, seed, initial_observation, steps: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// The first `k` steps as a new trajectory.
    pub fn prefix(&self, k: usize) -> Trajectory {
        Trajectory {
            world_id: self.world_id.clone(),
            mode: self.mode,
            seed: self.seed,
            initial_observation: self.initial_observation.clone(),
            steps: self.steps[..k.min(self.steps.len())].to_vec(),
        }
    }

    pub fn last_observation(&self) -> &str {
        self.steps.last().map(|s| s.observation.as_str()).unwrap_or(&self.initial_observation)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn action_text_is_canonical() {
        assert_eq!(Action::take("mug 1", "countertop 1").to_string(), "take mug 1 from countertop 1");
        assert_eq!(Action::put("book 1", "bed 1").to_string(), "move book 1 to bed 1");
        assert_eq!(Action::goto("drawer 1").to_string(), "go to drawer 1");
        assert_eq!(
            Action::device(DeviceVerb::Cool, "mug 1", "fridge 1").to_string(),
            "cool mug 1 with fridge 1"
        );
        assert_eq!(Action::done().to_string(), "done");
    }

    #[test]
    fn arity_is_enforced() {
        assert!(Action::new(Verb::Take, Some("mug 1".into()), None).is_err());
        assert!(Action::new(Verb::Look, Some("mug 1".into()), None).is_err());
        assert!(Action::new(Verb::Goto, None, Some("bed 1".into())).is_err());
        assert!(Action::new(Verb::Goto, Some("bed 1".into()), None).is_ok());
    }

    #[test]
    fn world_validation_catches_bad_specs() {
        let mut w = sample_bedroom();
        w.objects[0].initial_location = "shelf 9".into();
        assert!(matches!(w.validate(), Err(Error::InvalidWorld { .. })));

        let mut w = sample_bedroom();
        let dup = w.locations[0].clone();
        w.locations.push(dup);
        assert!(w.validate().is_err());

        let mut w = sample_bedroom();
        let bed = w.locations.iter_mut().find(|l| !l.container).unwrap();
        bed.initially_open = false;
        assert!(w.validate().is_err());
    }

    #[test]
    fn world_json_round_trip_and_schema_check() {
        let w = sample_kitchen();
        let text = w.to_json();
        assert!(text.contains("\"schema\": \"eccl-world/v1\""));
        assert_eq!(WorldSpec::from_json(&text).unwrap(), w);
        let wrong = text.replace("eccl-world/v1", "eccl-world/v0");
        assert!(matches!(WorldSpec::from_json(&wrong), Err(Error::Schema { .. })));
    }

    #[test]
    fn ids_split() {
        assert_eq!(instance_number("drawer 12"), Some(12));
        assert_eq!(entity_name("drawer 12"), "drawer");
        assert_eq!(instance_number("drawer"), None);
        assert_eq!(instance_number("Drawer 1"), None);
    }
}
