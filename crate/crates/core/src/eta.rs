//! Explore-then-act: a goal-free exploration phase, a summary of what was
//! found, then goal-directed acting with that summary available.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::checkpoints::{build_checkpoints, coverage, CheckpointSet};
use crate::knowledge::{summarize, KnowledgeSummary};
use crate::par::Exec;
use crate::policies::{run_episode, Episode, EpisodeConfig, Policy};
use crate::rng::SeedStream;
use crate::world::{EpisodeMode, TaskGoal, Trajectory, World};
use crate::{Error, Result};

pub const DEFAULT_BUDGET: usize = 100;
pub const DEFAULT_MAX_STEPS: usize = 50;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EtaResult {
    pub exploration_traj: Trajectory,
    pub ecc_at_budget: f64,
    pub knowledge: KnowledgeSummary,
    pub acting_traj: Trajectory,
    pub success: bool,
    pub steps_to_success: Option<usize>,
    /// Transport failure that voids this result, if any.
    pub invalid: Option<String>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EtaOptions {
    /// Act from the post-exploration state instead of a fresh reset.
    pub continue_in_place: bool,
}

fn stream(seed: u64, label: &str) -> crate::rng::Rng {
    SeedStream::root(seed).child(label).rng()
}

pub fn explore_phase(world: &Arc<World>, policy: &mut dyn Policy, budget: usize, seed: u64) -> Result<Episode> {
    explore_with(world, policy, budget, seed, None)
}

fn explore_with(
    world: &Arc<World>,
    policy: &mut dyn Policy,
    budget: usize,
    seed: u64,
    cps: Option<Arc<CheckpointSet>>,
) -> Result<Episode> {
    if budget == 0 {
        return Err(Error::range("budget", "must be at least 1"));
    }
    let cfg = EpisodeConfig {
        mode: EpisodeMode::Explore,
        goal: None,
        knowledge: None,
        max_steps: budget,
        seed,
        checkpoints: cps,
        start: None,
    };
    Ok(run_episode(world, policy, &cfg, &mut stream(seed, "explore")))
}

pub fn act_phase(
    world: &Arc<World>,
    policy: &mut dyn Policy,
    goal: &TaskGoal,
    knowledge: Option<&KnowledgeSummary>,
    max_steps: usize,
    seed: u64,
) -> Episode {
    let cfg = EpisodeConfig {
        mode: EpisodeMode::Act,
        goal: Some(goal),
        knowledge,
        max_steps,
        seed,
        checkpoints: None,
        start: None,
    };
    run_episode(world, policy, &cfg, &mut stream(seed, "act"))
}

pub fn run_direct(world: &Arc<World>, policy: &mut dyn Policy, goal: &TaskGoal, max_steps: usize, seed: u64) -> Episode {
    act_phase(world, policy, goal, None, max_steps, seed)
}

#[allow(clippy::too_many_arguments)]
pub fn run_eta(
    world: &Arc<World>,
    explorer: &mut dyn Policy,
    executor: &mut dyn Policy,
    goal: &TaskGoal,
    budget: usize,
    max_steps: usize,
    seed: u64,
    opts: EtaOptions,
) -> Result<EtaResult> {
    let cps = Arc::new(build_checkpoints(world));
    let ex = explore_with(world, explorer, budget, seed, Some(cps.clone()))?;
    let ecc_at_budget = coverage(&ex.trajectory, &cps)?.ecc();
    let knowledge = summarize(&ex.trajectory);
    let start = opts.continue_in_place.then(|| (ex.final_state.clone(), ex.trajectory.last_observation().to_string()));
    let cfg = EpisodeConfig {
        mode: EpisodeMode::Act,
        goal: Some(goal),
        knowledge: Some(&knowledge),
        max_steps,
        seed,
        checkpoints: None,
        start,
    };
    let act = run_episode(world, executor, &cfg, &mut stream(seed, "act"));
    Ok(EtaResult {
        ecc_at_budget,
        success: act.success,
        steps_to_success: act.success.then_some(act.trajectory.len()),
        invalid: ex.invalid.or(act.invalid),
        exploration_traj: ex.trajectory,
        knowledge,
        acting_traj: act.trajectory,
    })
}

/// One (world, goal) evaluation instance.
#[derive(Clone, Debug)]
pub struct Instance {
    pub world: Arc<World>,
    pub goal: TaskGoal,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceOutcome {
    pub world_id: String,
    pub direct_success: bool,
    pub direct_steps: usize,
    pub eta_success: bool,
    pub eta_steps: usize,
    pub ecc: f64,
    pub exploration_steps: usize,
    pub invalid: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteSummary {
    pub n: usize,
    pub n_invalid: usize,
    pub success_dir: f64,
    pub success_eta: f64,
    pub delta: f64,
    pub ecc_mean: f64,
    pub exploration_steps_mean: f64,
}

impl SuiteSummary {
    /// Aggregates valid outcomes only; invalid ones are counted separately.
    pub fn from_outcomes(outcomes: &[InstanceOutcome]) -> Self {
        let valid: Vec<&InstanceOutcome> = outcomes.iter().filter(|o| !o.invalid).collect();
        let n = valid.len();
        let frac = |f: &dyn Fn(&InstanceOutcome) -> f64| {
            if n == 0 {
                0.0
            } else {
                valid.iter().map(|o| f(o)).sum::<f64>() / n as f64
            }
        };
        let success_dir = frac(&|o| o.direct_success as u8 as f64);
        let success_eta = frac(&|o| o.eta_success as u8 as f64);
        SuiteSummary {
            n,
            n_invalid: outcomes.len() - n,
            success_dir,
            success_eta,
            delta: crate::diagnostics::delta_task(success_eta, success_dir),
            ecc_mean: frac(&|o| o.ecc),
            exploration_steps_mean: frac(&|o| o.exploration_steps as f64),
        }
    }
}

pub type PolicyFactory<'a> = dyn Fn() -> Box<dyn Policy> + Sync + 'a;

/// Direct and explore-then-act on every instance with fresh policies from
/// the factories. Instances are independent and evaluated with `exec`.
pub fn evaluate_suite(
    instances: &[Instance],
    explorer: &PolicyFactory<'_>,
    executor: &PolicyFactory<'_>,
    budget: usize,
    max_steps: usize,
    exec: Exec,
) -> Result<Vec<InstanceOutcome>> {
    exec.map(instances, |_, inst| -> Result<InstanceOutcome> {
        let direct = run_direct(&inst.world, executor().as_mut(), &inst.goal, max_steps, inst.seed);
        let eta = run_eta(
            &inst.world,
            explorer().as_mut(),
            executor().as_mut(),
            &inst.goal,
            budget,
            max_steps,
            inst.seed,
            EtaOptions::default(),
        )?;
        Ok(InstanceOutcome {
            world_id: inst.world.id().to_string(),
            direct_success: direct.success,
            direct_steps: direct.trajectory.len(),
            eta_success: eta.success,
            eta_steps: eta.acting_traj.len(),
            ecc: eta.ecc_at_budget,
            exploration_steps: eta.exploration_traj.len(),
            invalid: direct.invalid.is_some() || eta.invalid.is_some(),
        })
    })
    .into_iter()
    .collect()
}
