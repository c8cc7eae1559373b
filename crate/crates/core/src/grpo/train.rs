use std::sync::Arc;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{exploration_reward, schedule_kind, task_reward, update_step, Rollout, RolloutGroup, RolloutKind};
use crate::checkpoints::{build_checkpoints, CheckpointSet};
use crate::eta::{run_direct, run_eta, EtaOptions, InstanceOutcome};
use crate::io::{check_schema, versioned_json};
use crate::par::Exec;
use crate::policies::{run_episode, EpisodeConfig, PolicyParameters, SoftmaxPolicy};
use crate::rng::SeedStream;
use crate::world::{generate_goal, generate_world, EpisodeMode, GenParams, RoomKind, TaskGoal, Trajectory, World, WorldSpec};
use crate::{Error, Result};

pub const CHECKPOINT_SCHEMA: &str = "eccl-train-ckpt/v1";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainMode {
    TaskOnly,
    ExploreOnly,
    Interleaved,
}

/// Whether one optimisation step uses a single rollout kind (alternating
/// between steps) or mixes kinds across the contexts of a batch.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Interleave {
    #[default]
    Step,
    Rollout,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorldSampler {
    pub room_kinds: Vec<RoomKind>,
    pub min_locations: usize,
    pub max_locations: usize,
    pub min_objects: usize,
    pub max_objects: usize,
}

impl Default for WorldSampler {
    fn default() -> Self {
        WorldSampler {
            room_kinds: vec![RoomKind::Bedroom, RoomKind::Kitchen],
            min_locations: 4,
            max_locations: 6,
            min_objects: 4,
            max_objects: 8,
        }
    }
}

impl WorldSampler {
    fn validate(&self) -> Result<()> {
        if self.room_kinds.is_empty() {
            return Err(Error::Config("worlds.room_kinds is empty".into()));
        }
        if self.min_locations > self.max_locations || self.min_objects > self.max_objects {
            return Err(Error::Config("worlds: min exceeds max".into()));
        }
        GenParams::new(RoomKind::Bedroom, self.min_locations, self.min_objects).validate()?;
        GenParams::new(RoomKind::Bedroom, self.max_locations, self.max_objects).validate()
    }

    /// A world (and, if asked, a goal) drawn from `stream`. Worlds without
    /// an admissible goal are redrawn.
    fn draw(&self, stream: SeedStream, need_goal: bool) -> Result<(WorldSpec, Option<TaskGoal>)> {
        for attempt in 0..64u64 {
            let mut rng = stream.index(attempt).rng();
            let room = *self.room_kinds.choose(&mut rng).expect("validated non-empty");
            let n_loc = rng.gen_range(self.min_locations..=self.max_locations);
            let n_obj = rng.gen_range(self.min_objects..=self.max_objects);
            let seed: u64 = rng.gen();
            let w = generate_world(seed, GenParams::new(room, n_loc, n_obj))?;
            if !need_goal {
                return Ok((w, None));
            }
            if let Some(g) = generate_goal(&w, seed) {
                return Ok((w, Some(g)));
            }
        }
        Err(Error::Config("world sampler produced no world with a goal in 64 draws".into()))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub mode: TrainMode,
    /// `(task, explore)` steps per cycle; used in interleaved mode.
    pub schedule_ratio: (u32, u32),
    pub interleave: Interleave,
    pub group_size: usize,
    /// 1e-6 suits billion-parameter models; a linear softmax needs far more.
    pub learning_rate: f64,
    pub beta_kl: f64,
    pub epsilon: f64,
    pub max_steps: usize,
    /// Informational; must equal `batch_size * group_size` when set.
    pub rollouts_per_step: Option<usize>,
    pub batch_size: usize,
    pub exploration_budget: usize,
    pub act_max_steps: usize,
    /// Copy θ into the reference every this many steps; frozen when unset.
    pub ref_refresh: Option<usize>,
    pub record_wall_time: bool,
    pub worlds: WorldSampler,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            mode: TrainMode::Interleaved,
            schedule_ratio: (5, 1),
            interleave: Interleave::Step,
            group_size: 8,
            learning_rate: 0.05,
            beta_kl: super::DEFAULT_BETA,
            epsilon: super::DEFAULT_EPSILON,
            max_steps: 300,
            rollouts_per_step: None,
            batch_size: 16,
            exploration_budget: crate::eta::DEFAULT_BUDGET,
            act_max_steps: crate::eta::DEFAULT_MAX_STEPS,
            ref_refresh: None,
            record_wall_time: false,
            worlds: WorldSampler::default(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn ratio(&self) -> (u32, u32) {
        match self.mode {
            TrainMode::TaskOnly => (1, 0),
            TrainMode::ExploreOnly => (0, 1),
            TrainMode::Interleaved => self.schedule_ratio,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.mode == TrainMode::Interleaved && (self.schedule_ratio.0 == 0 || self.schedule_ratio.1 == 0) {
            return Err(Error::Config("interleaved mode needs positive task and explore ratios".into()));
        }
        if self.group_size < 2 {
            return Err(Error::Config("group_size must be at least 2".into()));
        }
        if self.batch_size == 0 || self.exploration_budget == 0 || self.act_max_steps == 0 {
            return Err(Error::Config("batch_size, exploration_budget and act_max_steps must be positive".into()));
        }
        if let Some(r) = self.rollouts_per_step {
            if r != self.batch_size * self.group_size {
                return Err(Error::Config(format!(
                    "rollouts_per_step {r} != batch_size {} x group_size {}",
                    self.batch_size, self.group_size
                )));
            }
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if !(self.beta_kl >= 0.0 && self.epsilon > 0.0) {
            return Err(Error::Config("beta_kl must be >= 0 and epsilon > 0".into()));
        }
        if self.ref_refresh == Some(0) {
            return Err(Error::Config("ref_refresh must be positive".into()));
        }
        self.worlds.validate()
    }

    /// TOML or JSON, chosen by content.
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: TrainConfig = if text.trim_start().starts_with('{') {
            serde_json::from_str(text)?
        } else {
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub step: usize,
    pub kind: String,
    pub mean_reward: f64,
    pub mean_ecc: f64,
    pub kl: f64,
    pub grad_norm: f64,
    pub wall_ms: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aborted: Option<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub records: Vec<LogRecord>,
}

impl TrainingLog {
    pub fn to_jsonl(&self) -> String {
        self.records.iter().map(|r| serde_json::to_string(r).expect("log record serializes") + "\n").collect()
    }

    pub fn from_jsonl(text: &str) -> Result<Self> {
        let records = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| serde_json::from_str(l).map_err(|e| Error::Line { line: i + 1, msg: e.to_string() }))
            .collect::<Result<_>>()?;
        Ok(TrainingLog { records })
    }

    /// Mean of `f` over the records of `kind` with step in `range`.
    pub fn window_mean(&self, kind: &str, range: std::ops::Range<usize>, f: impl Fn(&LogRecord) -> f64) -> Option<f64> {
        let xs: Vec<f64> = self.records.iter().filter(|r| r.kind == kind && range.contains(&r.step)).map(f).collect();
        (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
    }
}

/// Everything needed to continue a run: all randomness is derived from
/// `(config.seed, next_step)`, so that pair is the generator state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainCheckpoint {
    pub config: TrainConfig,
    pub next_step: usize,
    pub params: PolicyParameters,
    pub reference: PolicyParameters,
    pub log: TrainingLog,
}

impl TrainCheckpoint {
    pub fn initial(cfg: &TrainConfig) -> Self {
        TrainCheckpoint {
            config: cfg.clone(),
            next_step: 0,
            params: PolicyParameters::zeros(),
            reference: PolicyParameters::zeros(),
            log: TrainingLog::default(),
        }
    }

    pub fn to_json(&self) -> String {
        versioned_json(CHECKPOINT_SCHEMA, self)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let v: serde_json::Value = serde_json::from_str(s)?;
        check_schema(&v, CHECKPOINT_SCHEMA)?;
        let c: TrainCheckpoint = serde_json::from_value(v)?;
        c.config.validate()?;
        c.params.validate()?;
        c.reference.validate()?;
        Ok(c)
    }
}

struct Context {
    world: Arc<World>,
    cps: Arc<CheckpointSet>,
    goal: Option<TaskGoal>,
    kind: RolloutKind,
}

/// Training or evaluation context `index` under `stream`.
pub fn sample_context(sampler: &WorldSampler, stream: SeedStream, need_goal: bool) -> Result<(Arc<World>, Option<TaskGoal>)> {
    let (spec, goal) = sampler.draw(stream, need_goal)?;
    Ok((World::new(spec)?, goal))
}

fn rollout(cfg: &TrainConfig, ctx: &Context, params: &Arc<PolicyParameters>, seed: SeedStream) -> Rollout {
    let mut policy = SoftmaxPolicy::new(params.clone(), true);
    let (mode, max_steps) = match ctx.kind {
        RolloutKind::Exploration => (EpisodeMode::Explore, cfg.exploration_budget),
        RolloutKind::Task => (EpisodeMode::Act, cfg.act_max_steps),
    };
    let ecfg = EpisodeConfig {
        mode,
        goal: if ctx.kind == RolloutKind::Task { ctx.goal.as_ref() } else { None },
        knowledge: None,
        max_steps,
        seed: seed.seed(),
        checkpoints: None,
        start: None,
    };
    let ep = run_episode(&ctx.world, &mut policy, &ecfg, &mut seed.rng());
    let ecc = exploration_reward(&ep.trajectory, &ctx.cps).expect("same world");
    let reward = match (ctx.kind, &ctx.goal) {
        (RolloutKind::Exploration, _) => ecc,
        (RolloutKind::Task, Some(g)) => task_reward(&ep.final_state, g),
        (RolloutKind::Task, None) => 0.0,
    };
    Rollout { trajectory: ep.trajectory, sum_log_prob: ep.sum_log_prob, reward, ecc, decisions: ep.decisions }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub params: PolicyParameters,
    pub log: TrainingLog,
}

pub fn train(cfg: &TrainConfig, exec: Exec) -> Result<TrainOutcome> {
    cfg.validate()?;
    train_from(TrainCheckpoint::initial(cfg), exec, cfg.max_steps, |_| Ok(()))
}

/// Continue from `state` until `stop_at` steps are done, calling
/// `on_step` with the state after every step.
pub fn train_from(
    mut state: TrainCheckpoint,
    exec: Exec,
    stop_at: usize,
    mut on_step: impl FnMut(&TrainCheckpoint) -> Result<()>,
) -> Result<TrainOutcome> {
    let cfg = state.config.clone();
    cfg.validate()?;
    let root = SeedStream::root(cfg.seed);
    let ratio = cfg.ratio();
    while state.next_step < stop_at.min(cfg.max_steps) {
        let step = state.next_step;
        let started = Instant::now();
        let kinds: Vec<RolloutKind> = (0..cfg.batch_size)
            .map(|b| match cfg.interleave {
                Interleave::Step => schedule_kind(step, ratio),
                Interleave::Rollout => schedule_kind(step * cfg.batch_size + b, ratio),
            })
            .collect();
        let contexts = exec
            .map(&kinds, |b, &kind| -> Result<Context> {
                let stream = root.child("context").index(step as u64).index(b as u64);
                let (world, goal) = sample_context(&cfg.worlds, stream, kind == RolloutKind::Task)?;
                let cps = Arc::new(build_checkpoints(&world));
                Ok(Context { world, cps, goal, kind })
            })
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
        let params = Arc::new(state.params.clone());
        let g = cfg.group_size;
        let rollouts = exec.map_range(contexts.len() * g, |k| {
            let stream = root.child("rollout").index(step as u64).index(k as u64);
            rollout(&cfg, &contexts[k / g], &params, stream)
        });
        let mut rollouts = rollouts.into_iter();
        let groups = contexts
            .iter()
            .enumerate()
            .map(|(b, c)| RolloutGroup::new(format!("{step:06}-{b:04}"), c.kind, rollouts.by_ref().take(g).collect()))
            .collect::<Result<Vec<_>>>()?;

        let n = (groups.len() * g) as f64;
        let mean_reward = groups.iter().flat_map(|gr| &gr.rollouts).map(|r| r.reward).sum::<f64>() / n;
        let mean_ecc = groups.iter().flat_map(|gr| &gr.rollouts).map(|r| r.ecc).sum::<f64>() / n;
        let out = update_step(&state.params, &state.reference, &groups, cfg.epsilon, cfg.beta_kl, cfg.learning_rate)?;
        let kind = if kinds.iter().all(|k| *k == kinds[0]) { kinds[0].name() } else { "mixed" };
        state.log.records.push(LogRecord {
            step,
            kind: kind.to_string(),
            mean_reward,
            mean_ecc,
            kl: out.kl,
            grad_norm: out.grad_norm,
            wall_ms: if cfg.record_wall_time { started.elapsed().as_millis() as u64 } else { 0 },
            aborted: out.aborted,
        });
        state.params = out.params;
        state.next_step += 1;
        if cfg.ref_refresh.is_some_and(|n| state.next_step.is_multiple_of(n)) {
            state.reference = state.params.clone();
        }
        on_step(&state)?;
    }
    Ok(TrainOutcome { params: state.params, log: state.log })
}

/// Direct and explore-then-act outcomes of the softmax policy under
/// `params` on held-out contexts, plus each direct trajectory.
pub fn evaluate_params(
    params: &PolicyParameters,
    sampler: &WorldSampler,
    n: usize,
    seed: u64,
    budget: usize,
    max_steps: usize,
    exec: Exec,
) -> Result<Vec<(InstanceOutcome, Trajectory)>> {
    let params = Arc::new(params.clone());
    let root = SeedStream::root(seed).child("eval");
    exec.map_range(n, |i| -> Result<(InstanceOutcome, Trajectory)> {
        let (world, goal) = sample_context(sampler, root.child("context").index(i as u64), true)?;
        let goal = goal.expect("goal requested");
        let s = root.child("episode").index(i as u64).seed();
        let direct = run_direct(&world, &mut SoftmaxPolicy::new(params.clone(), false), &goal, max_steps, s);
        let eta = run_eta(
            &world,
            &mut SoftmaxPolicy::new(params.clone(), false),
            &mut SoftmaxPolicy::new(params.clone(), false),
            &goal,
            budget,
            max_steps,
            s,
            EtaOptions::default(),
        )?;
        let outcome = InstanceOutcome {
            world_id: world.id().to_string(),
            direct_success: direct.success,
            direct_steps: direct.trajectory.len(),
            eta_success: eta.success,
            eta_steps: eta.acting_traj.len(),
            ecc: eta.ecc_at_budget,
            exploration_steps: eta.exploration_traj.len(),
            invalid: false,
        };
        Ok((outcome, direct.trajectory))
    })
    .into_iter()
    .collect()
}
