//! Seeded procedural world generation.

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::catalog::{class_info, room_classes, task_classes};
use super::{default_device_map, placement_prior, LocationKind, LocationSpec, ObjectSpec, RoomKind, WorldSpec};
use crate::error::{Error, Result};
use crate::rng::SeedStream;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenParams {
    pub n_locations: usize,
    pub n_objects: usize,
    pub room_kind: RoomKind,
}

impl GenParams {
    pub fn new(room_kind: RoomKind, n_locations: usize, n_objects: usize) -> Self {
        GenParams { n_locations, n_objects, room_kind }
    }

    pub fn validate(&self) -> Result<()> {
        if !(4..=12).contains(&self.n_locations) {
            return Err(Error::range("n_locations", format!("{} not in [4, 12]", self.n_locations)));
        }
        if !(4..=20).contains(&self.n_objects) {
            return Err(Error::range("n_objects", format!("{} not in [4, 20]", self.n_objects)));
        }
        Ok(())
    }
}

// Receptacle kinds in the order they are added as the room grows. The first
// four slots of the kitchen hold the fridge, sink basin and coffee machine.
const BEDROOM_SLOTS: [LocationKind; 12] = {
    use LocationKind::*;
    [Bed, Drawer, Sidetable, Garbagecan, Diningtable, Drawer, Drawer, Drawer, Sidetable, Cabinet, Cabinet, Countertop]
};
const KITCHEN_SLOTS: [LocationKind; 12] = {
    use LocationKind::*;
    [
        Countertop, Fridge, Sinkbasin, Coffeemachine, Cabinet, Microwave, Drawer, Countertop, Cabinet, Cabinet,
        Diningtable, Garbagecan,
    ]
};

const OPEN_CONTAINER_PROB: f64 = 0.25;

/// Generate a world. A pure function of `(seed, params)`.
pub fn generate_world(seed: u64, params: GenParams) -> Result<WorldSpec> {
    params.validate()?;
    let mut rng = SeedStream::root(seed)
        .child("world")
        .child(params.room_kind.name())
        .index((params.n_locations * 100 + params.n_objects) as u64)
        .rng();

    let slots = match params.room_kind {
        RoomKind::Bedroom => &BEDROOM_SLOTS,
        RoomKind::Kitchen => &KITCHEN_SLOTS,
    };
    let mut kinds: Vec<LocationKind> = slots[..params.n_locations].to_vec();
    kinds.sort();
    let mut locations = Vec::with_capacity(kinds.len());
    let mut counter = [0u32; LocationKind::ALL.len()];
    for kind in kinds {
        counter[kind.ordinal()] += 1;
        let container = kind.is_container();
        let initially_open = !container
            || (matches!(kind, LocationKind::Drawer | LocationKind::Cabinet) && rng.gen_bool(OPEN_CONTAINER_PROB));
        locations.push(LocationSpec {
            id: format!("{} {}", kind.name(), counter[kind.ordinal()]),
            kind,
            container,
            initially_open,
            requires_clear: false,
        });
    }

    let required = task_classes(params.room_kind);
    let pool: Vec<&str> = room_classes(params.room_kind).map(|c| c.class).collect();
    let mut classes: Vec<&str> = required.to_vec();
    while classes.len() < params.n_objects {
        classes.push(pool.choose(&mut rng).expect("non-empty class pool"));
    }

    let mut objects: Vec<ObjectSpec> = Vec::with_capacity(classes.len());
    for class in classes {
        let n = objects.iter().filter(|o| o.class == class).count() + 1;
        let prior = placement_prior(params.room_kind, class);
        let candidates: Vec<&LocationSpec> = locations.iter().filter(|l| prior.contains(&l.kind)).collect();
        let at = if candidates.is_empty() {
            locations.choose(&mut rng).expect("at least four locations")
        } else {
            candidates.choose(&mut rng).expect("non-empty")
        };
        objects.push(ObjectSpec {
            id: format!("{class} {n}"),
            class: class.to_string(),
            initial_location: at.id.clone(),
            properties: class_info(class).map(|c| c.properties.iter().copied().collect()).unwrap_or_default(),
        });
    }

    let spec = WorldSpec {
        world_id: format!("{}-l{}-o{}-s{}", params.room_kind.name(), params.n_locations, params.n_objects, seed),
        seed,
        room_kind: params.room_kind,
        locations,
        objects,
        device_map: default_device_map(),
    };
    spec.validate()?;
    Ok(spec)
}
