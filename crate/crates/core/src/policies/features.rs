//! Binary feature map for the linear softmax policy.
//!
//! Layout (all features are 0/1):
//!
//! | block | size | meaning |
//! |---|---|---|
//! | verb × target kind | 12 × 12 | target location kind, or "none" |
//! | verb × context | 12 × 8 | history-derived bits, see [`CONTEXT_BITS`] |
//! | explore verb | 12 | verb indicator, explore mode only |
//! | goal | 8 | act mode only, see [`GOAL_BITS`] |

use super::{class_of, device_kind, Belief, PolicyContext};
use crate::world::{placement_prior, Action, EpisodeMode, LocationKind, Verb};

pub const FEATURE_SCHEMA: &str = "eccl-features/v1";

const N_VERBS: usize = 12;
const N_KINDS: usize = 12;
const KIND_NONE: usize = 11;

pub const CONTEXT_BITS: [&str; 8] = [
    "repeats_previous",
    "nooped_before",
    "tried_before",
    "at_target",
    "carrying",
    "target_visited",
    "target_closed",
    "holds_argument",
];

pub const GOAL_BITS: [&str; 8] = [
    "take_goal_class",
    "goto_goal_located",
    "goto_known_empty",
    "device_needed",
    "goto_device_needed",
    "goto_target_ready",
    "move_goal_to_target_ready",
    "goto_prior_kind",
];

const KIND_BASE: usize = 0;
const CTX_BASE: usize = KIND_BASE + N_VERBS * N_KINDS;
const EXPLORE_BASE: usize = CTX_BASE + N_VERBS * CONTEXT_BITS.len();
const GOAL_BASE: usize = EXPLORE_BASE + N_VERBS;

pub const FEATURE_DIM: usize = GOAL_BASE + GOAL_BITS.len();

#[cfg(test)]
pub(crate) fn context_index(verb: Verb, bit: usize) -> usize {
    CTX_BASE + verb.ordinal() * CONTEXT_BITS.len() + bit
}

pub(crate) fn goal_index(bit: usize) -> usize {
    GOAL_BASE + bit
}

/// Sorted indices of the active features.
pub type FeatureVector = Vec<u16>;

/// Human-readable name for every index.
pub fn feature_names() -> Vec<String> {
    let kind_name = |k: usize| if k == KIND_NONE { "none" } else { LocationKind::ALL[k].name() };
    let mut names = Vec::with_capacity(FEATURE_DIM);
    for v in Verb::ALL {
        for k in 0..N_KINDS {
            names.push(format!("{}@{}", v.name(), kind_name(k)));
        }
    }
    for v in Verb::ALL {
        for b in CONTEXT_BITS {
            names.push(format!("{}:{b}", v.name()));
        }
    }
    for v in Verb::ALL {
        names.push(format!("explore:{}", v.name()));
    }
    for b in GOAL_BITS {
        names.push(format!("goal:{b}"));
    }
    names
}

fn target_location(a: &Action) -> Option<&str> {
    match a.verb {
        Verb::Goto | Verb::Open | Verb::Close => a.arg1(),
        Verb::Take | Verb::Move | Verb::Heat | Verb::Cool | Verb::Clean => a.arg2(),
        _ => None,
    }
}

/// Goal facts shared by every candidate at one decision point.
struct GoalView<'a> {
    class: &'a str,
    target: &'a str,
    device_verb: Option<Verb>,
    carrying_goal: bool,
    ready: bool,
    located: Vec<bool>,
    known_empty: Vec<bool>,
    prior: &'static [LocationKind],
}

impl<'a> GoalView<'a> {
    fn new(ctx: &'a PolicyContext<'a>) -> Option<Self> {
        if ctx.mode != EpisodeMode::Act {
            return None;
        }
        let g = ctx.goal?;
        let b = ctx.belief;
        let class = g.target_object_class.as_str();
        let required = g.required();
        let carrying_goal = b.carrying.as_deref().is_some_and(|c| class_of(c) == class);
        let ready = carrying_goal && b.state_of(b.carrying.as_deref().unwrap()).is_superset(required);
        let located = goal_locations(b, ctx.knowledge, class);
        let known_empty = (0..b.locations.len())
            .map(|l| {
                !located[l]
                    && (b.contents[l].is_some()
                        || ctx.knowledge.is_some_and(|k| k.inspected_locations.contains(&b.locations[l])))
            })
            .collect();
        Some(GoalView {
            class,
            target: &g.target_receptacle,
            device_verb: g.template.device_verb().map(|d| d.verb()),
            carrying_goal,
            ready,
            located,
            known_empty,
            prior: placement_prior(b.room(), class),
        })
    }
}

/// Per location: is some goal-class object believed to be there? The
/// episode's own observations take precedence over the summary.
pub(crate) fn goal_locations(b: &Belief, k: Option<&crate::knowledge::KnowledgeSummary>, class: &str) -> Vec<bool> {
    let mut located = vec![false; b.locations.len()];
    for o in b.objects.iter().filter(|o| class_of(o) == class) {
        if b.carrying.as_deref() == Some(o.as_str()) {
            continue;
        }
        if let Some(&l) = b.last_seen.get(o) {
            located[l] = true;
        }
    }
    if let Some(k) = k {
        for (o, l) in &k.object_placements {
            if class_of(o) != class || b.last_seen.contains_key(o) || b.carrying.as_deref() == Some(o.as_str()) {
                continue;
            }
            if let Some(l) = b.loc(l) {
                // Stale if this episode has already looked inside and not seen it.
                if b.contents[l].is_none() {
                    located[l] = true;
                }
            }
        }
    }
    located
}

/// Feature vectors for every candidate at one decision point.
pub fn candidate_features(ctx: &PolicyContext<'_>, candidates: &[Action], texts: &[String]) -> Vec<FeatureVector> {
    let b = ctx.belief;
    let goal = GoalView::new(ctx);
    let explore = ctx.mode == EpisodeMode::Explore;
    candidates
        .iter()
        .zip(texts)
        .map(|(a, text)| {
            let v = a.verb.ordinal();
            let mut f: FeatureVector = Vec::with_capacity(12);
            let tloc = target_location(a).and_then(|l| b.loc(l));
            let kind = tloc.and_then(|l| b.kinds[l]).map(|k| k.ordinal()).unwrap_or(KIND_NONE);
            f.push((KIND_BASE + v * N_KINDS + kind) as u16);

            let bits = [
                b.prev.as_deref() == Some(text.as_str()),
                b.nooped.contains(text),
                b.tried.contains(text),
                tloc.is_some() && tloc == b.at,
                b.carrying.is_some(),
                tloc.is_some_and(|l| b.visited[l]),
                tloc.is_some_and(|l| b.known_closed(l)),
                b.carrying.is_some() && b.carrying.as_deref() == a.arg1(),
            ];
            for (i, on) in bits.iter().enumerate() {
                if *on {
                    f.push((CTX_BASE + v * CONTEXT_BITS.len() + i) as u16);
                }
            }
            if explore {
                f.push((EXPLORE_BASE + v) as u16);
            }
            if let Some(g) = &goal {
                let goal_obj = a.arg1().is_some_and(|o| class_of(o) == g.class);
                let gbits = [
                    a.verb == Verb::Take && goal_obj,
                    a.verb == Verb::Goto && !g.carrying_goal && tloc.is_some_and(|l| g.located[l]),
                    a.verb == Verb::Goto && !g.carrying_goal && tloc.is_some_and(|l| g.known_empty[l]),
                    Some(a.verb) == g.device_verb && g.carrying_goal && !g.ready && goal_obj,
                    a.verb == Verb::Goto
                        && g.carrying_goal
                        && !g.ready
                        && tloc.is_some_and(|l| b.kinds[l].is_some() && b.kinds[l] == g.device_verb.and_then(device_kind)),
                    a.verb == Verb::Goto && g.ready && a.arg1() == Some(g.target),
                    a.verb == Verb::Move && g.ready && goal_obj && a.arg2() == Some(g.target),
                    a.verb == Verb::Goto
                        && !g.carrying_goal
                        && tloc.is_some_and(|l| b.kinds[l].is_some_and(|k| g.prior.contains(&k))),
                ];
                for (i, on) in gbits.iter().enumerate() {
                    if *on {
                        f.push(goal_index(i) as u16);
                    }
                }
            }
            f
        })
        .collect()
}
