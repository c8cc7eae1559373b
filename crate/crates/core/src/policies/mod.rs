//! Policies over the text world: a trainable featurized softmax, scripted
//! oracles for exploring and executing, and a remote agent.

mod belief;
mod external;
mod features;
mod scripted;
mod softmax;

use std::sync::Arc;

pub use belief::Belief;
pub use external::{echo_agent, obs_message, parse_reply, ExternalPolicy, WireChannel, DEFAULT_TIMEOUT};
pub use features::{candidate_features, feature_names, FeatureVector, FEATURE_DIM, FEATURE_SCHEMA};
pub use scripted::{ScriptedExecutor, ScriptedExplorer};
pub use softmax::{
    action_distribution, log_softmax, sample_action, DecisionRecord, PolicyParameters, SoftmaxPolicy, PARAMS_SCHEMA,
};

use crate::checkpoints::{coverage, CheckpointSet};
use crate::knowledge::KnowledgeSummary;
use crate::rng::Rng;
use crate::world::{
    check_task_success, default_device_map, entity_name, parse_action, Action, EnvState, EpisodeMode, LocationKind,
    Outcome, TaskGoal, Trajectory, Verb, World,
};
use crate::Result;

/// Everything a policy may condition on at one decision point.
pub struct PolicyContext<'a> {
    pub mode: EpisodeMode,
    pub history: &'a Trajectory,
    pub belief: &'a Belief,
    pub goal: Option<&'a TaskGoal>,
    pub knowledge: Option<&'a KnowledgeSummary>,
    pub budget_left: usize,
}

/// A policy's reply: a structured action, or raw text from an agent that
/// may not parse.
#[derive(Clone, Debug, PartialEq)]
pub enum Choice {
    Action(Action),
    Text(String),
    /// A reply that was not even a well-formed message; always a no-op.
    Malformed(String),
}

#[derive(Clone, Debug)]
pub struct Decision {
    pub choice: Choice,
    pub log_prob: f64,
    pub record: Option<DecisionRecord>,
}

impl Decision {
    pub fn scripted(a: Action) -> Self {
        Decision { choice: Choice::Action(a), log_prob: 0.0, record: None }
    }
}

pub trait Policy {
    fn name(&self) -> &str;

    /// Errors are transport failures; they abort the episode as invalid.
    fn decide(&mut self, ctx: &PolicyContext<'_>, rng: &mut Rng) -> Result<Decision>;

    /// Called once when an episode ends.
    fn finish(&mut self, _success: bool, _ecc: Option<f64>) -> Result<()> {
        Ok(())
    }
}

/// Candidate actions derivable from what the agent has seen, in a fixed order.
pub fn legal_actions(b: &Belief) -> Vec<Action> {
    let mut out = vec![Action::look(), Action::inventory()];
    for l in &b.locations {
        out.push(Action::goto(l));
    }
    for (i, l) in b.locations.iter().enumerate() {
        if b.is_container(i) {
            out.push(Action::open(l));
            out.push(Action::close(l));
        }
    }
    for o in &b.objects {
        if b.carrying.as_deref() == Some(o.as_str()) {
            continue;
        }
        if let Some(&l) = b.last_seen.get(o) {
            out.push(Action::take(o, &b.locations[l]));
        }
    }
    if let Some(c) = &b.carrying {
        for l in &b.locations {
            out.push(Action::put(c, l));
        }
        out.push(Action::examine(c));
    }
    if let Some(here) = b.at {
        for o in b.objects_at(here) {
            out.push(Action::examine(o));
        }
    }
    if let Some(c) = &b.carrying {
        let devices = default_device_map();
        for (verb, kind) in &devices {
            for (i, l) in b.locations.iter().enumerate() {
                if b.kinds[i] == Some(*kind) {
                    out.push(Action::device(*verb, c, l));
                }
            }
        }
    }
    out.push(Action::done());
    out
}

/// Device location kind for a verb under the conventional mapping.
pub(crate) fn device_kind(verb: Verb) -> Option<LocationKind> {
    let dv = crate::world::DeviceVerb::from_verb(verb)?;
    default_device_map().get(&dv).copied()
}

pub(crate) fn class_of(obj: &str) -> &str {
    entity_name(obj)
}

#[derive(Clone, Debug)]
pub struct EpisodeConfig<'a> {
    pub mode: EpisodeMode,
    pub goal: Option<&'a TaskGoal>,
    pub knowledge: Option<&'a KnowledgeSummary>,
    pub max_steps: usize,
    pub seed: u64,
    /// When set, the episode's coverage is reported to the policy at the end.
    pub checkpoints: Option<Arc<CheckpointSet>>,
    /// Continue from this state (with the overview to show the agent)
    /// instead of a fresh reset.
    pub start: Option<(EnvState, String)>,
}

#[derive(Clone, Debug)]
pub struct Episode {
    pub trajectory: Trajectory,
    pub final_state: EnvState,
    pub success: bool,
    pub sum_log_prob: f64,
    pub decisions: Vec<DecisionRecord>,
    /// Set when the policy's transport failed; such episodes are not scored.
    pub invalid: Option<String>,
}

/// Roll a policy out for one episode. Act-mode episodes stop at task
/// success; every episode stops at `done` or after `max_steps`.
pub fn run_episode(world: &Arc<World>, policy: &mut dyn Policy, cfg: &EpisodeConfig<'_>, rng: &mut Rng) -> Episode {
    let (mut state, obs) = match &cfg.start {
        Some((s, obs)) => (s.clone(), obs.clone()),
        None => EnvState::reset(world),
    };
    let mut traj = Trajectory::new(world.id(), cfg.mode, cfg.seed, obs);
    let mut belief = Belief::new(&traj.initial_observation);
    let mut sum_log_prob = 0.0;
    let mut decisions = Vec::new();
    let mut success = false;
    let mut invalid = None;
    let base = state.step_count();
    for t in 0..cfg.max_steps {
        let ctx = PolicyContext {
            mode: cfg.mode,
            history: &traj,
            belief: &belief,
            goal: cfg.goal,
            knowledge: cfg.knowledge,
            budget_left: cfg.max_steps - t,
        };
        let d = match policy.decide(&ctx, rng) {
            Ok(d) => d,
            Err(e) => {
                invalid = Some(e.to_string());
                break;
            }
        };
        sum_log_prob += d.log_prob;
        if let Some(r) = d.record {
            decisions.push(r);
        }
        let mut rec = match d.choice {
            Choice::Action(a) => state.step(&a),
            Choice::Text(text) => match parse_action(&text) {
                Ok(a) => state.step(&a),
                Err(_) => state.step_unparsed(&text),
            },
            Choice::Malformed(raw) => state.step_unparsed(&raw),
        };
        rec.index -= base;
        belief.observe(&rec);
        let terminal = rec.outcome == Outcome::Terminal;
        traj.steps.push(rec);
        if cfg.mode == EpisodeMode::Act {
            if let Some(g) = cfg.goal {
                if check_task_success(&state, g) {
                    success = true;
                    break;
                }
            }
        }
        if terminal {
            break;
        }
    }
    if invalid.is_none() {
        let ecc = cfg.checkpoints.as_ref().and_then(|c| coverage(&traj, c).ok()).map(|c| c.ecc());
        if let Err(e) = policy.finish(success, ecc) {
            invalid = Some(e.to_string());
        }
    }
    Episode { trajectory: traj, final_state: state, success, sum_log_prob, decisions, invalid }
}
