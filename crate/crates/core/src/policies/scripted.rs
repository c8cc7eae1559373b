//! Deterministic reference agents. Both recompute their next move from the
//! episode so far, so they replan naturally after any surprise.

use std::collections::HashSet;

use super::{class_of, device_kind, Belief, Decision, Policy, PolicyContext};
use crate::rng::Rng;
use crate::world::{default_device_map, placement_prior, Action, DeviceVerb, Outcome, Verb};
use crate::Result;

/// Systematic sweep: every receptacle, every container opened and closed,
/// every object picked up and put back, one probe per device, then done.
#[derive(Clone, Debug, Default)]
pub struct ScriptedExplorer;

/// Goal-directed executor: plans from known placements, otherwise searches
/// receptacles where the goal class usually lives, and gives up after that.
#[derive(Clone, Debug, Default)]
pub struct ScriptedExecutor;

impl Policy for ScriptedExplorer {
    fn name(&self) -> &str {
        "scripted-explorer"
    }

    fn decide(&mut self, ctx: &PolicyContext<'_>, _rng: &mut Rng) -> Result<Decision> {
        Ok(Decision::scripted(explore_next(ctx)))
    }
}

impl Policy for ScriptedExecutor {
    fn name(&self) -> &str {
        "scripted-executor"
    }

    fn decide(&mut self, ctx: &PolicyContext<'_>, _rng: &mut Rng) -> Result<Decision> {
        Ok(Decision::scripted(execute_next(ctx)))
    }
}

fn device_locations(b: &Belief) -> Vec<(DeviceVerb, usize)> {
    let mut out = Vec::new();
    for (verb, kind) in default_device_map() {
        for l in 0..b.locations.len() {
            if b.kinds[l] == Some(kind) {
                out.push((verb, l));
            }
        }
    }
    out
}

pub(crate) fn explore_next(ctx: &PolicyContext<'_>) -> Action {
    let b = ctx.belief;
    let mut took: HashSet<&str> = HashSet::new();
    let mut origin: Option<&str> = None;
    let (mut examined, mut inventoried, mut probed) = (false, false, false);
    let mut done_aff: HashSet<(Verb, &str)> = HashSet::new();
    for r in &ctx.history.steps {
        let Some(a) = &r.action else { continue };
        match r.outcome {
            Outcome::Ok => match a.verb {
                Verb::Take => {
                    took.insert(a.arg1().unwrap_or_default());
                    origin = a.arg2();
                }
                Verb::Examine => examined = true,
                Verb::Inventory => inventoried = true,
                Verb::Open | Verb::Close => {
                    done_aff.insert((a.verb, a.arg1().unwrap_or_default()));
                }
                Verb::Heat | Verb::Cool | Verb::Clean => {
                    done_aff.insert((a.verb, a.arg2().unwrap_or_default()));
                }
                _ => {}
            },
            Outcome::Noop if a.verb == Verb::Take => probed = true,
            _ => {}
        }
    }
    let loc = |l: usize| b.locations[l].as_str();
    let pending_devices: Vec<(DeviceVerb, usize)> = device_locations(b)
        .into_iter()
        .filter(|(v, l)| !done_aff.contains(&(v.verb(), loc(*l))))
        .filter(|(v, l)| match &b.carrying {
            Some(c) => !b.tried.contains(&Action::device(*v, c, loc(*l)).to_string()),
            None => true,
        })
        .collect();

    if let Some(c) = &b.carrying {
        if !examined {
            return Action::examine(c);
        }
        if !inventoried {
            return Action::inventory();
        }
        if !probed {
            if let Some(here) = b.at {
                if let Some(o) = b.objects_at(here).next() {
                    return Action::take(o, loc(here));
                }
            }
        }
        if let Some(&(v, l)) = pending_devices.first() {
            return if b.at == Some(l) { Action::device(v, c, loc(l)) } else { Action::goto(loc(l)) };
        }
        let back = origin.and_then(|o| b.loc(o)).or(b.at);
        return match back {
            Some(l) if b.at == Some(l) => Action::put(c, loc(l)),
            Some(l) => Action::goto(loc(l)),
            None => Action::done(),
        };
    }

    for l in 0..b.locations.len() {
        let here = b.at == Some(l);
        if !b.visited[l] {
            return Action::goto(loc(l));
        }
        let container = b.is_container(l);
        if container && !done_aff.contains(&(Verb::Open, loc(l))) {
            if !here {
                return Action::goto(loc(l));
            }
            return if b.open[l] == Some(true) { Action::close(loc(l)) } else { Action::open(loc(l)) };
        }
        let fresh: Option<&str> = b.objects_at(l).find(|o| !took.contains(o));
        if let Some(o) = fresh {
            if !here {
                return Action::goto(loc(l));
            }
            if b.known_closed(l) {
                return Action::open(loc(l));
            }
            return Action::take(o, loc(l));
        }
        if container && !done_aff.contains(&(Verb::Close, loc(l))) {
            if !here {
                return Action::goto(loc(l));
            }
            return Action::close(loc(l));
        }
    }

    // Devices still untested (nothing was carried yet): borrow any object.
    if !pending_devices.is_empty() {
        if let Some((o, l)) = b.objects.iter().find_map(|o| b.last_seen.get(o).map(|&l| (o, l))) {
            if b.at != Some(l) {
                return Action::goto(loc(l));
            }
            if b.known_closed(l) {
                return Action::open(loc(l));
            }
            let take = Action::take(o, loc(l));
            if !b.nooped.contains(&take.to_string()) {
                return take;
            }
        }
    }
    Action::done()
}

pub(crate) fn execute_next(ctx: &PolicyContext<'_>) -> Action {
    let b = ctx.belief;
    let Some(g) = ctx.goal else { return Action::done() };
    let class = g.target_object_class.as_str();
    let loc = |l: usize| b.locations[l].as_str();
    let Some(target) = b.loc(&g.target_receptacle) else { return Action::done() };
    let device = g.template.device_verb().map(|dv| {
        let kind = device_kind(dv.verb());
        (dv, (0..b.locations.len()).find(|&l| b.kinds[l].is_some() && b.kinds[l] == kind))
    });
    let needs_state = |o: &str| !b.state_of(o).is_superset(g.required());

    // A receptacle that refused a placement must be cleared first.
    let suffix = format!(" to {}", loc(target));
    let blocked = b.nooped.iter().any(|t| t.starts_with("move ") && t.ends_with(&suffix))
        && b.contents[target].as_ref().is_some_and(|c| !c.is_empty());
    let elsewhere = || (0..b.locations.len()).find(|&l| l != target && !b.known_closed(l));

    if let Some(c) = &b.carrying {
        if class_of(c) != class || blocked {
            return match b.at {
                Some(l) if l == target => elsewhere().map(|e| Action::goto(loc(e))).unwrap_or_else(Action::done),
                Some(l) => Action::put(c, loc(l)),
                None => Action::done(),
            };
        }
        if needs_state(c) {
            let Some((dv, Some(d))) = device else { return Action::done() };
            if b.at != Some(d) {
                return Action::goto(loc(d));
            }
            let act = Action::device(dv, c, loc(d));
            return if b.nooped.contains(&act.to_string()) { Action::done() } else { act };
        }
        if b.at != Some(target) {
            return Action::goto(loc(target));
        }
        if b.known_closed(target) {
            return Action::open(loc(target));
        }
        return Action::put(c, loc(target));
    }
    if blocked {
        if b.at != Some(target) {
            return Action::goto(loc(target));
        }
        if let Some(o) = b.objects_at(target).next() {
            return Action::take(o, loc(target));
        }
    }

    // Known goal objects: this episode's sightings first, then the summary.
    let mut cands: Vec<(String, usize)> = Vec::new();
    for o in b.objects.iter().filter(|o| class_of(o) == class) {
        if let Some(&l) = b.last_seen.get(o) {
            cands.push((o.clone(), l));
        }
    }
    if let Some(k) = ctx.knowledge {
        for (o, l) in &k.object_placements {
            if class_of(o) != class || b.last_seen.contains_key(o) {
                continue;
            }
            if let Some(l) = b.loc(l) {
                if b.contents[l].is_none() {
                    cands.push((o.clone(), l));
                }
            }
        }
    }
    let closed = |l: usize| {
        b.open[l] == Some(false)
            || (b.open[l].is_none() && ctx.knowledge.is_some_and(|k| k.open_states.get(loc(l)) == Some(&false)))
    };
    let cost = |o: &str, l: usize| {
        let mut c = usize::from(b.at != Some(l)) + usize::from(closed(l)) + 1;
        if needs_state(o) {
            if let Some((_, Some(d))) = device {
                c += usize::from(d != l) + 1;
            }
        }
        c + 2
    };
    let best = cands
        .iter()
        .filter(|(o, l)| !b.nooped.contains(&Action::take(o, loc(*l)).to_string()) || b.contents[*l].is_none())
        .min_by_key(|(o, l)| cost(o, *l));
    if let Some((o, l)) = best {
        let l = *l;
        if b.at != Some(l) {
            return Action::goto(loc(l));
        }
        if b.known_closed(l) {
            return Action::open(loc(l));
        }
        return Action::take(o, loc(l));
    }

    let prior = placement_prior(b.room(), class);
    let searched = |l: usize| {
        b.contents[l].is_some()
            || ctx.knowledge.is_some_and(|k| {
                k.inspected_locations.contains(loc(l))
                    && !k.object_placements.iter().any(|(o, at)| at == loc(l) && class_of(o) == class)
            })
    };
    for l in 0..b.locations.len() {
        let kind_ok = prior.is_empty() || b.kinds[l].is_some_and(|k| prior.contains(&k));
        if !kind_ok || searched(l) {
            continue;
        }
        if b.at != Some(l) {
            return Action::goto(loc(l));
        }
        let open = Action::open(loc(l));
        if !b.nooped.contains(&open.to_string()) {
            return open;
        }
    }
    Action::done()
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::super::{run_episode, EpisodeConfig};
    use super::*;
    use crate::checkpoints::{build_checkpoints, coverage};
    use crate::knowledge::summarize;
    use crate::rng::SeedStream;
    use crate::world::{sample_bedroom, sample_kitchen, EpisodeMode, TaskGoal, TaskTemplate, World};

    fn explore(w: &Arc<World>, budget: usize) -> crate::policies::Episode {
        let cfg = EpisodeConfig { mode: EpisodeMode::Explore, goal: None, knowledge: None, max_steps: budget, seed: 0, checkpoints: None, start: None };
        run_episode(w, &mut ScriptedExplorer, &cfg, &mut SeedStream::root(0).rng())
    }

    #[test]
    fn bedroom_full_coverage() {
        let w = World::new(sample_bedroom()).unwrap();
        let ep = explore(&w, 100);
        let cps = build_checkpoints(&w);
        let cov = coverage(&ep.trajectory, &cps).unwrap();
        assert_eq!(cov.covered_count, 41, "{:?}", cov.hits.iter().filter(|h| h.1.is_none()).collect::<Vec<_>>());
        assert!(ep.trajectory.len() < 60);
        assert_eq!(ep.trajectory.steps.last().unwrap().action_text, "done");
        assert_eq!(explore(&w, 100).trajectory, ep.trajectory);
    }

    #[test]
    fn kitchen_full_coverage() {
        let w = World::new(sample_kitchen()).unwrap();
        let ep = explore(&w, 100);
        let cov = coverage(&ep.trajectory, &build_checkpoints(&w)).unwrap();
        assert_eq!(cov.covered_count, cov.m);
    }

    #[test]
    fn tiny_budget_stays_in_grammar() {
        let w = World::new(sample_bedroom()).unwrap();
        let ep = explore(&w, 3);
        assert_eq!(ep.trajectory.len(), 3);
        assert!(ep.trajectory.steps.iter().all(|s| s.action.is_some()));
    }

    fn act(w: &Arc<World>, goal: &TaskGoal, k: Option<&crate::knowledge::KnowledgeSummary>) -> crate::policies::Episode {
        let cfg = EpisodeConfig { mode: EpisodeMode::Act, goal: Some(goal), knowledge: k, max_steps: 50, seed: 0, checkpoints: None, start: None };
        run_episode(w, &mut ScriptedExecutor, &cfg, &mut SeedStream::root(0).rng())
    }

    #[test]
    fn cool_mug_with_knowledge() {
        let w = World::new(sample_kitchen()).unwrap();
        let k = summarize(&explore(&w, 100).trajectory);
        let goal = TaskGoal::new(TaskTemplate::PickCoolThenPlaceInRecep, "mug", "coffeemachine 1");
        let ep = act(&w, &goal, Some(&k));
        assert!(ep.success);
        let texts: Vec<&str> = ep.trajectory.steps.iter().map(|s| s.action_text.as_str()).collect();
        assert_eq!(
            texts,
            ["go to countertop 1", "take mug 1 from countertop 1", "go to fridge 1", "cool mug 1 with fridge 1", "go to coffeemachine 1", "move mug 1 to coffeemachine 1"]
        );
        let direct = act(&w, &goal, None);
        assert!(direct.success);
        assert!(ep.trajectory.len() <= direct.trajectory.len());
    }

    #[test]
    fn stale_knowledge_falls_back() {
        let w = World::new(sample_kitchen()).unwrap();
        let goal = TaskGoal::new(TaskTemplate::PickAndPlaceSimple, "mug", "coffeemachine 1");
        let mut k = crate::knowledge::KnowledgeSummary::default();
        k.object_placements.insert("mug 1".into(), "garbagecan 1".into());
        let ep = act(&w, &goal, Some(&k));
        assert_eq!(ep.trajectory.steps[0].action_text, "go to garbagecan 1");
        assert!(ep.success);
        assert!(ep.trajectory.len() < 50);
    }

    #[test]
    fn relocated_object_defeats_prior_search() {
        let mut spec = sample_bedroom();
        spec.objects.iter_mut().find(|o| o.id == "mug 1").unwrap().initial_location = "drawer 2".into();
        let w = World::new(spec).unwrap();
        let goal = TaskGoal::new(TaskTemplate::PickAndPlaceSimple, "mug", "sidetable 1");
        let direct = act(&w, &goal, None);
        let k = summarize(&explore(&w, 100).trajectory);
        let eta = act(&w, &goal, Some(&k));
        assert!(eta.success);
        assert!(!direct.success || direct.trajectory.len() > eta.trajectory.len());
    }
}
