//! Object classes known to the generator, with their properties and the
//! receptacle kinds they are usually found on. The placement table doubles as
//! the "prior" that knowledge-free executors search by.

use super::{LocationKind, Property, RoomKind};
use LocationKind::*;
use Property::*;

#[derive(Debug)]
pub struct ObjectClassInfo {
    pub class: &'static str,
    pub properties: &'static [Property],
    pub bedroom: &'static [LocationKind],
    pub kitchen: &'static [LocationKind],
}

pub const CATALOG: &[ObjectClassInfo] = &[
    ObjectClassInfo { class: "book", properties: &[], bedroom: &[Bed, Sidetable, Diningtable], kitchen: &[] },
    ObjectClassInfo { class: "laptop", properties: &[], bedroom: &[Bed, Diningtable], kitchen: &[] },
    ObjectClassInfo { class: "pillow", properties: &[], bedroom: &[Bed], kitchen: &[] },
    ObjectClassInfo { class: "cd", properties: &[], bedroom: &[Drawer, Sidetable, Diningtable], kitchen: &[] },
    ObjectClassInfo {
        class: "cellphone",
        properties: &[],
        bedroom: &[Sidetable, Bed, Diningtable],
        kitchen: &[Countertop],
    },
    ObjectClassInfo { class: "keychain", properties: &[], bedroom: &[Drawer, Sidetable], kitchen: &[] },
    ObjectClassInfo { class: "pencil", properties: &[], bedroom: &[Drawer, Diningtable, Sidetable], kitchen: &[] },
    ObjectClassInfo {
        class: "mug",
        properties: &[Heatable, Coolable, Cleanable],
        bedroom: &[Diningtable, Sidetable],
        kitchen: &[Countertop, Cabinet, Sinkbasin],
    },
    ObjectClassInfo {
        class: "glassbottle",
        properties: &[Coolable, Cleanable],
        bedroom: &[],
        kitchen: &[Countertop, Cabinet, Fridge],
    },
    ObjectClassInfo {
        class: "apple",
        properties: &[Heatable, Coolable, Cleanable, Sliceable],
        bedroom: &[],
        kitchen: &[Fridge, Countertop, Diningtable],
    },
    ObjectClassInfo {
        class: "plate",
        properties: &[Heatable, Coolable, Cleanable],
        bedroom: &[],
        kitchen: &[Cabinet, Countertop, Diningtable],
    },
    ObjectClassInfo {
        class: "bowl",
        properties: &[Heatable, Coolable, Cleanable],
        bedroom: &[],
        kitchen: &[Cabinet, Countertop, Fridge],
    },
    ObjectClassInfo { class: "egg", properties: &[Heatable, Coolable], bedroom: &[], kitchen: &[Fridge, Countertop] },
    ObjectClassInfo {
        class: "potato",
        properties: &[Heatable, Coolable, Cleanable, Sliceable],
        bedroom: &[],
        kitchen: &[Fridge, Countertop, Garbagecan],
    },
];

pub fn class_info(class: &str) -> Option<&'static ObjectClassInfo> {
    CATALOG.iter().find(|c| c.class == class)
}

/// Classes that can appear in the given room.
pub fn room_classes(room: RoomKind) -> impl Iterator<Item = &'static ObjectClassInfo> {
    CATALOG.iter().filter(move |c| !placement_prior(room, c.class).is_empty())
}

/// Classes every generated world of this room kind contains at least once.
pub fn task_classes(room: RoomKind) -> &'static [&'static str] {
    match room {
        RoomKind::Bedroom => &["book", "cellphone", "pencil", "mug"],
        RoomKind::Kitchen => &["mug", "apple", "plate"],
    }
}

/// Receptacle kinds a class is usually found on, most likely first.
pub fn placement_prior(room: RoomKind, class: &str) -> &'static [LocationKind] {
    match class_info(class) {
        Some(info) => match room {
            RoomKind::Bedroom => info.bedroom,
            RoomKind::Kitchen => info.kitchen,
        },
        None => &[],
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn task_classes_are_placeable() {
        for room in [RoomKind::Bedroom, RoomKind::Kitchen] {
            for c in task_classes(room) {
                assert!(!placement_prior(room, c).is_empty(), "{c} has no prior in {room:?}");
            }
        }
    }

    #[test]
    fn kitchen_task_classes_support_every_device() {
        for c in task_classes(RoomKind::Kitchen) {
            let info = class_info(c).unwrap();
            assert!(info.properties.contains(&Coolable));
        }
    }
}
