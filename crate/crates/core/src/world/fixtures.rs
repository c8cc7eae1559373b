//! Two hand-built reference worlds: a bedroom and a kitchen laid out like the
//! household case studies the engine is modelled on.

use std::collections::BTreeSet;

use super::catalog::class_info;
use super::{default_device_map, LocationKind, LocationSpec, ObjectSpec, RoomKind, WorldSpec};

fn loc(kind: LocationKind, n: u32, open: bool) -> LocationSpec {
    LocationSpec {
        id: format!("{} {n}", kind.name()),
        kind,
        container: kind.is_container(),
        initially_open: !kind.is_container() || open,
        requires_clear: false,
    }
}

fn obj(id: &str, at: &str) -> ObjectSpec {
    let class = super::entity_name(id).to_string();
    let properties: BTreeSet<_> = class_info(&class).map(|c| c.properties.iter().copied().collect()).unwrap_or_default();
    ObjectSpec { id: id.to_string(), class, initial_location: at.to_string(), properties }
}

/// Nine receptacles (four closed drawers) and twelve objects.
pub fn sample_bedroom() -> WorldSpec {
    use LocationKind::*;
    WorldSpec {
        world_id: "sample-bedroom".into(),
        seed: 0,
        room_kind: RoomKind::Bedroom,
        locations: vec![
            loc(Bed, 1, true),
            loc(Diningtable, 1, true),
            loc(Drawer, 1, false),
            loc(Drawer, 2, false),
            loc(Drawer, 3, false),
            loc(Drawer, 4, false),
            loc(Sidetable, 1, true),
            loc(Sidetable, 2, true),
            loc(Garbagecan, 1, true),
        ],
        objects: vec![
            obj("book 1", "bed 1"),
            obj("laptop 1", "bed 1"),
            obj("pillow 2", "bed 1"),
            obj("pillow 1", "bed 1"),
            obj("cd 2", "diningtable 1"),
            obj("cellphone 3", "diningtable 1"),
            obj("cellphone 1", "diningtable 1"),
            obj("mug 1", "diningtable 1"),
            obj("keychain 1", "diningtable 1"),
            obj("pencil 2", "drawer 1"),
            obj("cd 1", "sidetable 1"),
            obj("pencil 1", "sidetable 2"),
        ],
        device_map: default_device_map(),
    }
}

/// Twelve receptacles including fridge, microwave, sink basin and coffee
/// machine; the mug starts on countertop 1.
pub fn sample_kitchen() -> WorldSpec {
    use LocationKind::*;
    WorldSpec {
        world_id: "sample-kitchen".into(),
        seed: 0,
        room_kind: RoomKind::Kitchen,
        locations: vec![
            loc(Drawer, 1, false),
            loc(Cabinet, 1, false),
            loc(Cabinet, 2, false),
            loc(Cabinet, 3, true),
            loc(Cabinet, 4, false),
            loc(Countertop, 1, true),
            loc(Countertop, 2, true),
            loc(Fridge, 1, false),
            loc(Garbagecan, 1, true),
            loc(Coffeemachine, 1, true),
            loc(Sinkbasin, 1, true),
            loc(Microwave, 1, false),
        ],
        objects: vec![
            obj("glassbottle 2", "countertop 1"),
            obj("mug 1", "countertop 1"),
            obj("cellphone 1", "countertop 1"),
            obj("apple 1", "fridge 1"),
            obj("bowl 1", "fridge 1"),
            obj("egg 1", "fridge 1"),
            obj("plate 1", "cabinet 1"),
            obj("glassbottle 1", "cabinet 2"),
            obj("plate 2", "cabinet 3"),
            obj("potato 1", "countertop 2"),
        ],
        device_map: default_device_map(),
    }
}
