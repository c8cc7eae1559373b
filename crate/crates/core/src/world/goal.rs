use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{task_classes, DeviceVerb, EnvState, ObjState, Property, StateSet, WorldSpec};
use crate::error::{Error, Result};
use crate::rng::SeedStream;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskTemplate {
    PickAndPlaceSimple,
    PickCoolThenPlaceInRecep,
    PickHeatThenPlaceInRecep,
    PickCleanThenPlaceInRecep,
}

impl TaskTemplate {
    pub const ALL: [TaskTemplate; 4] = [
        TaskTemplate::PickAndPlaceSimple,
        TaskTemplate::PickCoolThenPlaceInRecep,
        TaskTemplate::PickHeatThenPlaceInRecep,
        TaskTemplate::PickCleanThenPlaceInRecep,
    ];

    pub fn device_verb(self) -> Option<DeviceVerb> {
        match self {
            TaskTemplate::PickAndPlaceSimple => None,
            TaskTemplate::PickCoolThenPlaceInRecep => Some(DeviceVerb::Cool),
            TaskTemplate::PickHeatThenPlaceInRecep => Some(DeviceVerb::Heat),
            TaskTemplate::PickCleanThenPlaceInRecep => Some(DeviceVerb::Clean),
        }
    }

    fn required_property(self) -> Option<Property> {
        self.device_verb().map(|v| match v {
            DeviceVerb::Heat => Property::Heatable,
            DeviceVerb::Cool => Property::Coolable,
            DeviceVerb::Clean => Property::Cleanable,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskGoal {
    pub template: TaskTemplate,
    pub target_object_class: String,
    pub target_receptacle: String,
    pub required_state: BTreeSet<ObjState>,
}

impl TaskGoal {
    pub fn new(template: TaskTemplate, class: impl Into<String>, receptacle: impl Into<String>) -> Self {
        TaskGoal {
            template,
            target_object_class: class.into(),
            target_receptacle: receptacle.into(),
            required_state: template.device_verb().map(|v| v.resulting_state()).into_iter().collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let expected: BTreeSet<ObjState> = self.template.device_verb().map(|v| v.resulting_state()).into_iter().collect();
        if self.required_state != expected {
            return Err(Error::Config(format!(
                "goal required_state {:?} inconsistent with template {:?}",
                self.required_state, self.template
            )));
        }
        Ok(())
    }

    pub fn required(&self) -> StateSet {
        self.required_state.iter().copied().collect()
    }

    /// Instruction text. Never names object instances.
    pub fn text(&self) -> String {
        match self.template.device_verb() {
            None => format!("put a {} on {}", self.target_object_class, self.target_receptacle),
            Some(v) => format!(
                "put a {} {} on {}",
                v.resulting_state().word(),
                self.target_object_class,
                self.target_receptacle
            ),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&GoalDoc { schema: GOAL_SCHEMA.into(), goal: self.clone() }).expect("goal serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let v: serde_json::Value = serde_json::from_str(s)?;
        crate::io::check_schema(&v, GOAL_SCHEMA)?;
        let doc: GoalDoc = serde_json::from_value(v)?;
        doc.goal.validate()?;
        Ok(doc.goal)
    }
}

pub const GOAL_SCHEMA: &str = "eccl-goal/v1";

#[derive(Serialize, Deserialize)]
struct GoalDoc {
    schema: String,
    #[serde(flatten)]
    goal: TaskGoal,
}

/// True iff some object of the goal class sits at the target receptacle with
/// every required state flag.
pub fn check_task_success(state: &EnvState, goal: &TaskGoal) -> bool {
    let Some(target) = state.world().loc(&goal.target_receptacle) else {
        return false;
    };
    let required = goal.required();
    state
        .objects_of_class(&goal.target_object_class)
        .any(|(_, loc, st)| loc == Some(target) && st.is_superset(required))
}

/// Sample a goal that is not already satisfied in the world's initial state.
/// Returns `None` only for worlds with no eligible class.
pub fn generate_goal(world: &WorldSpec, seed: u64) -> Option<TaskGoal> {
    let mut rng = SeedStream::root(seed).child("goal").child(&world.world_id).rng();
    let present: Vec<&str> = task_classes(world.room_kind)
        .iter()
        .copied()
        .filter(|c| world.objects.iter().any(|o| o.class == *c))
        .collect();
    let device_at = |v: DeviceVerb| {
        let kind = world.device_map.get(&v)?;
        world.locations.iter().find(|l| l.kind == *kind).map(|l| l.id.as_str())
    };

    let mut options: Vec<(TaskTemplate, &str, &str)> = Vec::new();
    for template in TaskTemplate::ALL {
        let device = match template.device_verb() {
            Some(v) => match device_at(v) {
                Some(d) => Some(d),
                None => continue,
            },
            None => None,
        };
        for class in &present {
            if let Some(p) = template.required_property() {
                if !world.objects.iter().any(|o| o.class == *class && o.properties.contains(&p)) {
                    continue;
                }
            }
            for l in &world.locations {
                if Some(l.id.as_str()) == device {
                    continue;
                }
                let occupied = world.objects.iter().any(|o| o.class == *class && o.initial_location == l.id);
                if template == TaskTemplate::PickAndPlaceSimple && occupied {
                    continue;
                }
                options.push((template, class, l.id.as_str()));
            }
        }
    }
    // Pick the template first so state-changing tasks are not drowned out by
    // the many simple placements.
    let templates: BTreeSet<TaskTemplate> = options.iter().map(|o| o.0).collect();
    let templates: Vec<TaskTemplate> = templates.into_iter().collect();
    let template = *templates.choose(&mut rng)?;
    let pick: Vec<_> = options.into_iter().filter(|o| o.0 == template).collect();
    let (t, class, recep) = *pick.choose(&mut rng)?;
    Some(TaskGoal::new(t, class, recep))
}
