//! Perturbed world families — object relocation, precondition changes and
//! distractor injection — each editing exactly one aspect of a base world.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::seq::{IteratorRandom, SliceRandom};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::io::{check_schema, versioned_json, write_atomic};
use crate::rng::SeedStream;
use crate::world::{
    check_task_success, class_info, instance_number, Action, EnvState, ObjectSpec, TaskGoal, World, WorldSpec,
};
use crate::{Error, Result};

pub const SUITE_SCHEMA: &str = "eccl-suite/v1";
pub const DEFAULT_PER_VARIANT: usize = 274;
pub const DEFAULT_DISTRACTORS: usize = 2;
const MAX_RESEEDS: u64 = 100;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VariantKind {
    Original,
    ObjectRelocation,
    PreconditionChange,
    DistractorInjection,
}

impl VariantKind {
    pub const PERTURBED: [VariantKind; 3] =
        [VariantKind::ObjectRelocation, VariantKind::PreconditionChange, VariantKind::DistractorInjection];

    pub fn name(self) -> &'static str {
        match self {
            VariantKind::Original => "original",
            VariantKind::ObjectRelocation => "object_relocation",
            VariantKind::PreconditionChange => "precondition_change",
            VariantKind::DistractorInjection => "distractor_injection",
        }
    }

    fn tag(self) -> &'static str {
        match self {
            VariantKind::Original => "orig",
            VariantKind::ObjectRelocation => "reloc",
            VariantKind::PreconditionChange => "precond",
            VariantKind::DistractorInjection => "distract",
        }
    }

    /// The only structural aspect this kind may change.
    pub fn axis(self) -> Option<Axis> {
        match self {
            VariantKind::Original => None,
            VariantKind::ObjectRelocation => Some(Axis::Placements),
            VariantKind::PreconditionChange => Some(Axis::Flags),
            VariantKind::DistractorInjection => Some(Axis::ObjectList),
        }
    }
}

impl std::str::FromStr for VariantKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        [VariantKind::Original]
            .into_iter()
            .chain(VariantKind::PERTURBED)
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown variant kind `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VariantSpec {
    pub kind: VariantKind,
    pub seed: u64,
    pub base_world_id: String,
    pub perturbation_log: Vec<String>,
}

fn variant_id(base: &WorldSpec, kind: VariantKind, seed: u64) -> String {
    format!("{}~{}-s{}", base.world_id, kind.tag(), seed)
}

fn rng_for(base: &WorldSpec, kind: VariantKind, seed: u64) -> crate::rng::Rng {
    SeedStream::root(seed).child(kind.name()).child(&base.world_id).rng()
}

/// Move every goal-class object to a different receptacle. The goal
/// receptacle is excluded too, so a relocation can never solve the task.
pub fn relocate_objects(world: &WorldSpec, goal: &TaskGoal, seed: u64) -> Result<(WorldSpec, VariantSpec)> {
    let kind = VariantKind::ObjectRelocation;
    let mut rng = rng_for(world, kind, seed);
    let mut out = world.clone();
    out.world_id = variant_id(world, kind, seed);
    let mut log = Vec::new();
    for o in out.objects.iter_mut().filter(|o| o.class == goal.target_object_class) {
        let choice = world
            .locations
            .iter()
            .filter(|l| l.id != o.initial_location && l.id != goal.target_receptacle)
            .choose(&mut rng)
            .ok_or_else(|| Error::Variant(format!("no alternative receptacle for {}", o.id)))?;
        log.push(format!("moved {} from {} to {}", o.id, o.initial_location, choice.id));
        o.initial_location = choice.id.clone();
    }
    if log.is_empty() {
        return Err(Error::Variant(format!("world has no {} to relocate", goal.target_object_class)));
    }
    Ok((out, VariantSpec { kind, seed, base_world_id: world.world_id.clone(), perturbation_log: log }))
}

/// Flip the initial open state of a random nonempty subset of containers,
/// and sometimes make a singly-occupied receptacle demand clearing first.
pub fn perturb_preconditions(world: &WorldSpec, seed: u64) -> Result<(WorldSpec, VariantSpec)> {
    let kind = VariantKind::PreconditionChange;
    let mut rng = rng_for(world, kind, seed);
    let containers: Vec<usize> = (0..world.locations.len()).filter(|&i| world.locations[i].container).collect();
    if containers.is_empty() {
        return Err(Error::Variant(format!("{} has no container to perturb", world.world_id)));
    }
    let mut out = world.clone();
    out.world_id = variant_id(world, kind, seed);
    let mut log = Vec::new();
    let k = rng.gen_range(1..=containers.len());
    let mut picked: Vec<usize> = containers.choose_multiple(&mut rng, k).copied().collect();
    picked.sort_unstable();
    for i in picked {
        let l = &mut out.locations[i];
        l.initially_open = !l.initially_open;
        log.push(format!("{} now starts {}", l.id, if l.initially_open { "open" } else { "closed" }));
    }
    if rng.gen_bool(0.5) {
        let single: Vec<usize> = (0..world.locations.len())
            .filter(|&i| world.objects.iter().filter(|o| o.initial_location == world.locations[i].id).count() == 1)
            .collect();
        if let Some(&i) = single.choose(&mut rng) {
            out.locations[i].requires_clear = true;
            log.push(format!("{} must be cleared before anything new is placed on it", out.locations[i].id));
        }
    }
    Ok((out, VariantSpec { kind, seed, base_world_id: world.world_id.clone(), perturbation_log: log }))
}

/// Add `count` extra objects of the goal class away from the goal
/// receptacle, numbered after the existing instances.
pub fn inject_distractors(world: &WorldSpec, goal: &TaskGoal, seed: u64, count: usize) -> Result<(WorldSpec, VariantSpec)> {
    if count == 0 {
        return Err(Error::range("count", "must be at least 1"));
    }
    let kind = VariantKind::DistractorInjection;
    let mut rng = rng_for(world, kind, seed);
    let class = &goal.target_object_class;
    let mut out = world.clone();
    out.world_id = variant_id(world, kind, seed);
    let next = world
        .objects
        .iter()
        .filter(|o| &o.class == class)
        .filter_map(|o| instance_number(&o.id))
        .max()
        .unwrap_or(0)
        + 1;
    let mut spots: Vec<&str> =
        world.locations.iter().map(|l| l.id.as_str()).filter(|l| *l != goal.target_receptacle).collect();
    spots.shuffle(&mut rng);
    if spots.is_empty() {
        return Err(Error::Variant("no receptacle besides the goal receptacle".into()));
    }
    let properties: BTreeSet<_> = class_info(class).map(|c| c.properties.iter().copied().collect()).unwrap_or_default();
    let mut log = Vec::new();
    for (i, n) in (next..next + count as u32).enumerate() {
        let at = spots[i % spots.len()];
        let id = format!("{class} {n}");
        log.push(format!("added {id} on {at}"));
        out.objects.push(ObjectSpec {
            id,
            class: class.clone(),
            initial_location: at.to_string(),
            properties: properties.clone(),
        });
    }
    Ok((out, VariantSpec { kind, seed, base_world_id: world.world_id.clone(), perturbation_log: log }))
}

/// Whether a planner with full knowledge of the initial state can finish
/// the task on a fresh simulation.
pub fn check_solvable(world: &WorldSpec, goal: &TaskGoal) -> bool {
    let Ok(w) = World::new(world.clone()) else { return false };
    if goal.validate().is_err() || w.loc(&goal.target_receptacle).is_none() {
        return false;
    }
    let device = match goal.template.device_verb() {
        Some(v) => match w.device_location(v) {
            Some(d) => Some((v, world.locations[d].id.clone())),
            None => return false,
        },
        None => None,
    };
    let target = goal.target_receptacle.as_str();
    let candidates: Vec<&ObjectSpec> = world.objects.iter().filter(|o| o.class == goal.target_object_class).collect();
    candidates.into_iter().any(|o| {
        let (mut s, _) = EnvState::reset(&w);
        let closed = |s: &EnvState, l: &str| world.location(l).is_some_and(|l| l.container) && !s.is_open(l);
        let go = |s: &mut EnvState, a: Action| s.step(&a).is_ok();
        let fetch = |s: &mut EnvState, obj: &str, from: &str| -> bool {
            if s.agent_location() != Some(from) && !s.step(&Action::goto(from)).is_ok() {
                return false;
            }
            if closed(s, from) && !s.step(&Action::open(from)).is_ok() {
                return false;
            }
            s.step(&Action::take(obj, from)).is_ok()
        };
        // Clear a blocking receptacle first.
        if world.location(target).is_some_and(|l| l.requires_clear) {
            let blockers: Vec<String> = s.contents(target).into_iter().map(str::to_string).collect();
            for b in blockers {
                let Some(dump) = world.locations.iter().find(|l| l.id != target && !l.requires_clear) else {
                    return false;
                };
                if !fetch(&mut s, &b, target) || !go(&mut s, Action::goto(&dump.id)) {
                    return false;
                }
                if closed(&s, &dump.id) && !go(&mut s, Action::open(&dump.id)) {
                    return false;
                }
                if !go(&mut s, Action::put(&b, &dump.id)) {
                    return false;
                }
            }
        }
        let Some(from) = s.object_location(&o.id).map(str::to_string) else { return false };
        if !fetch(&mut s, &o.id, &from) {
            return false;
        }
        if let Some((v, d)) = &device {
            if s.agent_location() != Some(d.as_str()) && !go(&mut s, Action::goto(d)) {
                return false;
            }
            if !go(&mut s, Action::device(*v, &o.id, d)) {
                return false;
            }
        }
        if s.agent_location() != Some(target) && !go(&mut s, Action::goto(target)) {
            return false;
        }
        if closed(&s, target) && !go(&mut s, Action::open(target)) {
            return false;
        }
        go(&mut s, Action::put(&o.id, target)) && check_task_success(&s, goal)
    })
}

/// Structural aspects in which two worlds can differ.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    Layout,
    Flags,
    ObjectList,
    Placements,
    Other,
}

pub fn structural_diff(base: &WorldSpec, variant: &WorldSpec) -> BTreeSet<Axis> {
    let mut out = BTreeSet::new();
    let layout = |w: &WorldSpec| w.locations.iter().map(|l| (l.id.clone(), l.kind, l.container)).collect::<Vec<_>>();
    if layout(base) != layout(variant) {
        out.insert(Axis::Layout);
    } else if base
        .locations
        .iter()
        .zip(&variant.locations)
        .any(|(a, b)| a.initially_open != b.initially_open || a.requires_clear != b.requires_clear)
    {
        out.insert(Axis::Flags);
    }
    let by_id = |w: &WorldSpec| w.objects.iter().map(|o| (o.id.clone(), o.clone())).collect::<BTreeMap<_, _>>();
    let (a, b) = (by_id(base), by_id(variant));
    if a.keys().ne(b.keys()) {
        out.insert(Axis::ObjectList);
    }
    for (id, oa) in &a {
        if let Some(ob) = b.get(id) {
            if oa.initial_location != ob.initial_location {
                out.insert(Axis::Placements);
            }
            if oa.class != ob.class || oa.properties != ob.properties {
                out.insert(Axis::Other);
            }
        }
    }
    if base.device_map != variant.device_map || base.room_kind != variant.room_kind {
        out.insert(Axis::Other);
    }
    out
}

fn make_variant(kind: VariantKind, world: &WorldSpec, goal: &TaskGoal, seed: u64) -> Result<(WorldSpec, VariantSpec)> {
    match kind {
        VariantKind::Original => Ok((
            world.clone(),
            VariantSpec { kind, seed, base_world_id: world.world_id.clone(), perturbation_log: vec!["unmodified".into()] },
        )),
        VariantKind::ObjectRelocation => relocate_objects(world, goal, seed),
        VariantKind::PreconditionChange => perturb_preconditions(world, seed),
        VariantKind::DistractorInjection => inject_distractors(world, goal, seed, DEFAULT_DISTRACTORS),
    }
}

/// First seed (from `seed` on) whose variant is solvable.
pub fn solvable_variant(kind: VariantKind, world: &WorldSpec, goal: &TaskGoal, seed: u64) -> Result<(WorldSpec, VariantSpec)> {
    let mut last = None;
    for k in 0..MAX_RESEEDS {
        match make_variant(kind, world, goal, seed.wrapping_add(k)) {
            Ok((w, v)) if check_solvable(&w, goal) => return Ok((w, v)),
            Ok(_) => last = Some(format!("unsolvable after reseed {k}")),
            Err(e) => return Err(e),
        }
    }
    Err(Error::Variant(format!("{} on {}: {}", kind.name(), world.world_id, last.unwrap_or_default())))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteEntry {
    pub id: String,
    pub variant: VariantSpec,
    pub world_file: String,
    pub goal: TaskGoal,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Suite {
    pub entries: Vec<(SuiteEntry, WorldSpec)>,
    pub skipped: Vec<String>,
}

impl Suite {
    pub fn of_kind(&self, kind: VariantKind) -> impl Iterator<Item = &(SuiteEntry, WorldSpec)> + '_ {
        self.entries.iter().filter(move |(e, _)| e.variant.kind == kind)
    }

    pub fn manifest_json(&self) -> String {
        #[derive(Serialize)]
        struct Manifest<'a> {
            entries: Vec<&'a SuiteEntry>,
            skipped: &'a [String],
        }
        versioned_json(SUITE_SCHEMA, &Manifest { entries: self.entries.iter().map(|(e, _)| e).collect(), skipped: &self.skipped })
    }

    /// `manifest.json` plus one world file per entry under `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        for (e, w) in &self.entries {
            write_atomic(&dir.join(&e.world_file), w.to_json().as_bytes())?;
        }
        write_atomic(&dir.join("manifest.json"), self.manifest_json().as_bytes())
    }

    pub fn load(dir: &Path) -> Result<Suite> {
        let text = std::fs::read_to_string(dir.join("manifest.json"))?;
        let v: serde_json::Value = serde_json::from_str(&text)?;
        check_schema(&v, SUITE_SCHEMA)?;
        #[derive(Deserialize)]
        struct Manifest {
            entries: Vec<SuiteEntry>,
            skipped: Vec<String>,
        }
        let m: Manifest = serde_json::from_value(v)?;
        let mut entries = Vec::with_capacity(m.entries.len());
        for e in m.entries {
            let w = WorldSpec::from_json(&std::fs::read_to_string(dir.join(&e.world_file))?)?;
            entries.push((e, w));
        }
        Ok(Suite { entries, skipped: m.skipped })
    }
}

/// Original plus the three perturbed sets, `per_variant` instances each.
/// A base pair whose variants cannot all be made solvable is skipped.
pub fn build_suite(bases: &[(WorldSpec, TaskGoal)], per_variant: usize, seed: u64) -> Result<Suite> {
    let mut entries = Vec::with_capacity(per_variant * 4);
    let mut skipped = Vec::new();
    let mut used = 0;
    for (i, (world, goal)) in bases.iter().enumerate() {
        if used == per_variant {
            break;
        }
        if !check_solvable(world, goal) {
            skipped.push(format!("{}: base pair unsolvable", world.world_id));
            continue;
        }
        let s = SeedStream::root(seed).index(i as u64).seed();
        let mut group = Vec::with_capacity(4);
        let mut failed = None;
        for kind in [VariantKind::Original].into_iter().chain(VariantKind::PERTURBED) {
            match solvable_variant(kind, world, goal, s) {
                Ok((w, v)) => group.push((w, v)),
                Err(e) => {
                    failed = Some(e.to_string());
                    break;
                }
            }
        }
        if let Some(reason) = failed {
            skipped.push(format!("{}: {reason}", world.world_id));
            continue;
        }
        for (w, v) in group {
            let id = format!("{:04}-{}", used, v.kind.name());
            entries.push((
                SuiteEntry { world_file: format!("worlds/{id}.json"), id, variant: v, goal: goal.clone() },
                w,
            ));
        }
        used += 1;
    }
    if used < per_variant {
        return Err(Error::range("per_variant", format!("only {used} usable base pairs, {per_variant} requested")));
    }
    Ok(Suite { entries, skipped })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::checkpoints::{build_checkpoints, Category};
    use crate::world::{generate_goal, generate_world, sample_bedroom, sample_kitchen, GenParams, RoomKind, TaskTemplate, Verb};

    fn bedroom_goal() -> TaskGoal {
        TaskGoal::new(TaskTemplate::PickAndPlaceSimple, "mug", "sidetable 1")
    }

    #[test]
    fn relocation_moves_only_goal_objects() {
        let base = sample_bedroom();
        let (v, spec) = relocate_objects(&base, &bedroom_goal(), 3).unwrap();
        let mug = v.object("mug 1").unwrap();
        assert_ne!(mug.initial_location, "diningtable 1");
        assert_ne!(mug.initial_location, "sidetable 1");
        assert_eq!(structural_diff(&base, &v), BTreeSet::from([Axis::Placements]));
        assert_eq!(relocate_objects(&base, &bedroom_goal(), 3).unwrap().0, v);
        assert!(!spec.perturbation_log.is_empty());
    }

    #[test]
    fn preconditions_flip_flags_only() {
        let base = sample_bedroom();
        let (v, spec) = perturb_preconditions(&base, 11).unwrap();
        assert_eq!(structural_diff(&base, &v), BTreeSet::from([Axis::Flags]));
        assert!(spec.perturbation_log.iter().any(|l| l.contains("now starts open")));
        let cps = build_checkpoints(&World::new(v.clone()).unwrap());
        for l in v.locations.iter().filter(|l| l.container) {
            assert!(cps.checkpoints.iter().any(|c| c.id == format!("affordance:open:{}", l.id)));
        }
        let mut plain = base.clone();
        plain.locations.retain(|l| !l.container);
        plain.objects.retain(|o| !o.initial_location.starts_with("drawer"));
        assert!(perturb_preconditions(&plain, 0).is_err());
    }

    #[test]
    fn distractors_extend_numbering() {
        let base = sample_bedroom();
        let goal = TaskGoal::new(TaskTemplate::PickAndPlaceSimple, "book", "sidetable 1");
        let (v, _) = inject_distractors(&base, &goal, 5, 2).unwrap();
        let added: Vec<_> = v.objects.iter().filter(|o| o.class == "book").map(|o| (o.id.clone(), o.initial_location.clone())).collect();
        assert_eq!(added.len(), 3);
        assert_eq!(added[1].0, "book 2");
        assert_eq!(added[2].0, "book 3");
        assert_ne!(added[1].1, added[2].1);
        assert!(added.iter().all(|(_, l)| l != "sidetable 1"));
        assert_eq!(structural_diff(&base, &v), BTreeSet::from([Axis::ObjectList]));
        let m0 = build_checkpoints(&World::new(base).unwrap());
        let m1 = build_checkpoints(&World::new(v).unwrap());
        assert_eq!(m1.m(), m0.m() + 4);
        assert_eq!(m1.count(Category::Object), m0.count(Category::Object) + 2);
    }

    #[test]
    fn solvability() {
        let k = sample_kitchen();
        assert!(check_solvable(&k, &TaskGoal::new(TaskTemplate::PickCoolThenPlaceInRecep, "mug", "coffeemachine 1")));
        assert!(!check_solvable(&k, &TaskGoal::new(TaskTemplate::PickAndPlaceSimple, "book", "diningtable 1")));
        let b = sample_bedroom();
        assert!(!check_solvable(&b, &TaskGoal::new(TaskTemplate::PickCoolThenPlaceInRecep, "mug", "sidetable 1")));
    }

    #[test]
    fn requires_clear_is_handled() {
        let mut b = sample_bedroom();
        b.locations.iter_mut().find(|l| l.id == "sidetable 1").unwrap().requires_clear = true;
        assert!(check_solvable(&b, &bedroom_goal()));
    }

    #[test]
    fn generated_pairs_are_solvable() {
        for i in 0..500u64 {
            let room = if i % 2 == 0 { RoomKind::Bedroom } else { RoomKind::Kitchen };
            let w = generate_world(i, GenParams::new(room, 4 + (i as usize % 9), 4 + (i as usize % 17))).unwrap();
            let g = generate_goal(&w, i).unwrap();
            assert!(check_solvable(&w, &g), "{} {:?}", w.world_id, g);
        }
    }

    #[test]
    fn small_suite() {
        let bases: Vec<_> = (0..3u64)
            .map(|i| {
                let w = generate_world(i, GenParams::new(RoomKind::Kitchen, 8, 8)).unwrap();
                let g = generate_goal(&w, i).unwrap();
                (w, g)
            })
            .collect();
        let s = build_suite(&bases, 1, 0).unwrap();
        assert_eq!(s.entries.len(), 4);
        let dir = tempfile::tempdir().unwrap();
        s.write(dir.path()).unwrap();
        assert_eq!(Suite::load(dir.path()).unwrap(), s);
        let _ = Verb::Open;
    }
}
