//! Subcommand definitions and their pipelines.

use std::net::{TcpListener, TcpStream};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use eccl_core::checkpoints::{build_checkpoints, coverage, CheckpointSet};
use eccl_core::diagnostics::{coverage_curve, diagnose, DiagnosticsReport};
use eccl_core::eta::{run_direct, run_eta, EtaOptions, EtaResult, InstanceOutcome, SuiteSummary};
use eccl_core::grpo::{
    evaluate_params, sample_context, train_from, TrainCheckpoint, TrainConfig, TrainMode, WorldSampler,
};
use eccl_core::io::{load_trajectory, persist_trajectory, versioned_json, write_atomic};
use eccl_core::knowledge::summarize;
use eccl_core::par::Exec;
use eccl_core::policies::{
    echo_agent, ExternalPolicy, Policy, PolicyParameters, ScriptedExecutor, ScriptedExplorer, SoftmaxPolicy,
    WireChannel,
};
use eccl_core::rng::SeedStream;
use eccl_core::variants::{build_suite, Suite, VariantKind};
use eccl_core::world::{
    generate_goal, generate_world, sample_bedroom, sample_kitchen, GenParams, RoomKind, TaskGoal, Trajectory, World,
    WorldSpec,
};
use eccl_core::{Error, Result};

use crate::report::{build_report, ReportRow, ResultFile};
use crate::serve::{run_jobs, Job, JobKind};

#[derive(Parser, Debug)]
#[command(name = "eccl", version, about = "Exploration-coverage laboratory")]
pub struct Cli {
    /// Run batch work on the calling thread only.
    #[arg(long, global = true)]
    pub sequential: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a world and a goal for it.
    GenWorld(GenWorldArgs),
    /// Build the checkpoint set of a world.
    Checkpoints(CheckpointsArgs),
    /// Run one goal-free exploration episode.
    Explore(ExploreArgs),
    /// Run one goal-directed episode without prior exploration.
    Direct(DirectArgs),
    /// Explore, summarise, then act; on one instance or a whole suite.
    Eta(EtaArgs),
    /// Train the softmax policy.
    Train(TrainArgs),
    /// Build a perturbed variant suite.
    Variants(VariantsArgs),
    /// Coverage and diagnostics of an existing trajectory.
    Score(ScoreArgs),
    /// Tables from result files.
    Report(ReportArgs),
    /// Serve episodes to an external agent.
    Serve(ServeArgs),
}

#[derive(Args, Debug)]
pub struct GenWorldArgs {
    #[arg(long)]
    pub seed: u64,
    #[arg(long, value_enum, default_value = "bedroom")]
    pub room: Room,
    #[arg(long, default_value_t = 6)]
    pub locations: usize,
    #[arg(long, default_value_t = 8)]
    pub objects: usize,
    /// Emit a fixed sample world instead of generating one.
    #[arg(long, value_enum)]
    pub sample: Option<Room>,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum Room {
    Bedroom,
    Kitchen,
}

impl From<Room> for RoomKind {
    fn from(r: Room) -> Self {
        match r {
            Room::Bedroom => RoomKind::Bedroom,
            Room::Kitchen => RoomKind::Kitchen,
        }
    }
}

#[derive(Args, Debug)]
pub struct CheckpointsArgs {
    #[arg(long)]
    pub world: PathBuf,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct ExploreArgs {
    #[arg(long)]
    pub world: PathBuf,
    /// scripted | random | softmax:PARAMS.json | external:HOST:PORT
    #[arg(long, default_value = "scripted")]
    pub explorer: String,
    #[arg(long, default_value_t = eccl_core::eta::DEFAULT_BUDGET)]
    pub budget: usize,
    #[arg(long)]
    pub seed: u64,
    #[arg(long, default_value_t = 60)]
    pub timeout: u64,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct DirectArgs {
    #[arg(long)]
    pub world: PathBuf,
    #[arg(long)]
    pub goal: PathBuf,
    #[arg(long, default_value = "scripted")]
    pub executor: String,
    #[arg(long, default_value_t = eccl_core::eta::DEFAULT_MAX_STEPS)]
    pub max_steps: usize,
    #[arg(long)]
    pub seed: u64,
    #[arg(long, default_value_t = 60)]
    pub timeout: u64,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct EtaArgs {
    #[arg(long, required_unless_present = "suite")]
    pub world: Option<PathBuf>,
    #[arg(long, requires = "world")]
    pub goal: Option<PathBuf>,
    /// Evaluate every instance of a suite directory instead.
    #[arg(long, conflicts_with = "world")]
    pub suite: Option<PathBuf>,
    /// Restrict a suite run to one variant kind.
    #[arg(long)]
    pub variant: Option<String>,
    /// Evaluate at most this many instances per variant kind.
    #[arg(long)]
    pub limit: Option<usize>,
    #[arg(long, default_value = "scripted")]
    pub explorer: String,
    #[arg(long, default_value = "scripted")]
    pub executor: String,
    #[arg(long, default_value_t = eccl_core::eta::DEFAULT_BUDGET)]
    pub budget: usize,
    #[arg(long, default_value_t = eccl_core::eta::DEFAULT_MAX_STEPS)]
    pub max_steps: usize,
    /// Act in the state exploration left behind instead of a fresh reset.
    #[arg(long)]
    pub continue_in_place: bool,
    #[arg(long)]
    pub seed: u64,
    #[arg(long, default_value = "eta")]
    pub label: String,
    #[arg(long, default_value_t = 60)]
    pub timeout: u64,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// TOML or JSON training configuration; defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long, value_enum)]
    pub mode: Option<Mode>,
    /// task:explore, e.g. 5:1
    #[arg(long)]
    pub ratio: Option<String>,
    #[arg(long)]
    pub lr: Option<f64>,
    /// Continue from a checkpoint file; `--steps` may extend the run.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    #[arg(long, default_value_t = 50)]
    pub checkpoint_every: usize,
    /// Held-out instances to evaluate after training (0 = skip).
    #[arg(long, default_value_t = 0)]
    pub eval: usize,
    #[arg(long, default_value_t = eccl_core::eta::DEFAULT_BUDGET)]
    pub eval_budget: usize,
    #[arg(long, default_value_t = eccl_core::eta::DEFAULT_MAX_STEPS)]
    pub eval_max_steps: usize,
    /// Location range of evaluation worlds, e.g. 8-12; defaults to the training range.
    #[arg(long)]
    pub eval_locations: Option<String>,
    #[arg(long)]
    pub label: Option<String>,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum Mode {
    TaskOnly,
    ExploreOnly,
    Interleaved,
}

#[derive(Args, Debug)]
pub struct VariantsArgs {
    #[arg(long)]
    pub seed: u64,
    #[arg(long, default_value_t = eccl_core::variants::DEFAULT_PER_VARIANT)]
    pub per_variant: usize,
    /// Candidate base pairs; defaults to 5/4 of per-variant plus 16.
    #[arg(long)]
    pub bases: Option<usize>,
    #[arg(long, default_value_t = 4)]
    pub min_locations: usize,
    #[arg(long, default_value_t = 12)]
    pub max_locations: usize,
    #[arg(long, default_value_t = 4)]
    pub min_objects: usize,
    #[arg(long, default_value_t = 16)]
    pub max_objects: usize,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct ScoreArgs {
    #[arg(long)]
    pub traj: PathBuf,
    #[arg(long)]
    pub checkpoints: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ReportArgs {
    #[arg(long)]
    pub results: PathBuf,
    /// Conditions that must be present; missing ones produce warnings.
    #[arg(long, value_delimiter = ',')]
    pub expect: Vec<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ServeArgs {
    #[arg(long)]
    pub world: PathBuf,
    #[arg(long)]
    pub goal: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "explore")]
    pub mode: ServeMode,
    #[arg(long, default_value_t = 1)]
    pub episodes: usize,
    #[arg(long, default_value_t = eccl_core::eta::DEFAULT_BUDGET)]
    pub budget: usize,
    #[arg(long, default_value_t = eccl_core::eta::DEFAULT_MAX_STEPS)]
    pub max_steps: usize,
    /// Accept one agent connection on this TCP address.
    #[arg(long, conflicts_with = "echo")]
    pub listen: Option<String>,
    /// Use the built-in agent that always sends this action.
    #[arg(long)]
    pub echo: Option<String>,
    /// Episodes in flight at once.
    #[arg(long, default_value_t = 1)]
    pub concurrency: usize,
    #[arg(long, default_value_t = 60)]
    pub timeout: u64,
    #[arg(long)]
    pub seed: u64,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ServeMode {
    Explore,
    Direct,
    Eta,
}

/// Runs the command; returns the one-line summary to print, if any.
pub fn run(cli: Cli) -> Result<Option<String>> {
    let exec = if cli.sequential { Exec::Sequential } else { Exec::default() };
    match cli.command {
        Command::GenWorld(a) => gen_world(a).map(Some),
        Command::Checkpoints(a) => checkpoints(a).map(Some),
        Command::Explore(a) => explore(a).map(Some),
        Command::Direct(a) => direct(a).map(Some),
        Command::Eta(a) => eta(a, exec).map(Some),
        Command::Train(a) => train(a, exec).map(Some),
        Command::Variants(a) => variants(a).map(Some),
        Command::Score(a) => score(a).map(Some),
        Command::Report(a) => report(a).map(Some),
        Command::Serve(a) => serve(a),
    }
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn load_world(path: &Path) -> Result<Arc<World>> {
    World::new(WorldSpec::from_json(&read(path)?)?)
}

fn load_goal(path: &Path, world: &World) -> Result<TaskGoal> {
    let g = TaskGoal::from_json(&read(path)?)?;
    if world.loc(&g.target_receptacle).is_none() {
        return Err(Error::Unsatisfiable { world_id: world.id().into(), goal: g.text() });
    }
    Ok(g)
}

fn write_json(path: &Path, schema: &str, v: &impl serde::Serialize) -> Result<()> {
    write_atomic(path, versioned_json(schema, v).as_bytes())
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Role {
    Explore,
    Act,
}

/// A policy named on the command line.
enum PolicySpec {
    Scripted,
    Random,
    Softmax(Arc<PolicyParameters>),
    External(Arc<WireChannel>),
}

impl PolicySpec {
    fn parse(s: &str, timeout: Duration) -> Result<Self> {
        if s == "scripted" {
            return Ok(PolicySpec::Scripted);
        }
        if s == "random" {
            return Ok(PolicySpec::Random);
        }
        if let Some(p) = s.strip_prefix("softmax:") {
            return Ok(PolicySpec::Softmax(Arc::new(PolicyParameters::from_json(&read(Path::new(p))?)?)));
        }
        if let Some(addr) = s.strip_prefix("external:") {
            let stream = TcpStream::connect(addr).map_err(|e| Error::Transport(format!("connect {addr}: {e}")))?;
            let reader = stream.try_clone()?;
            return Ok(PolicySpec::External(WireChannel::new(reader, Box::new(stream), timeout)));
        }
        Err(Error::Config(format!("unknown policy `{s}`; expected scripted, random, softmax:PATH or external:ADDR")))
    }

    fn make(&self, role: Role, episode: &str) -> Box<dyn Policy> {
        match (self, role) {
            (PolicySpec::Scripted, Role::Explore) => Box::new(ScriptedExplorer),
            (PolicySpec::Scripted, Role::Act) => Box::new(ScriptedExecutor),
            (PolicySpec::Random, _) => Box::new(SoftmaxPolicy::uniform()),
            (PolicySpec::Softmax(p), _) => Box::new(SoftmaxPolicy::new(p.clone(), false)),
            (PolicySpec::External(c), _) => Box::new(ExternalPolicy::new(c.clone(), episode)),
        }
    }

    fn is_external(&self) -> bool {
        matches!(self, PolicySpec::External(_))
    }
}

fn gen_world(a: GenWorldArgs) -> Result<String> {
    let spec = match a.sample {
        Some(Room::Bedroom) => sample_bedroom(),
        Some(Room::Kitchen) => sample_kitchen(),
        None => generate_world(a.seed, GenParams::new(a.room.into(), a.locations, a.objects))?,
    };
    let world = World::new(spec.clone())?;
    write_atomic(&a.out.join("world.json"), spec.to_json().as_bytes())?;
    let goal = generate_goal(&spec, a.seed);
    if let Some(g) = &goal {
        write_atomic(&a.out.join("goal.json"), g.to_json().as_bytes())?;
    }
    Ok(format!(
        "world {}: {} locations, {} objects; goal: {}",
        world.id(),
        world.n_locations(),
        world.n_objects(),
        goal.map(|g| g.text()).unwrap_or_else(|| "none".into())
    ))
}

fn checkpoints(a: CheckpointsArgs) -> Result<String> {
    use eccl_core::checkpoints::Category;
    let world = load_world(&a.world)?;
    let cps = build_checkpoints(&world);
    write_atomic(&a.out.join("checkpoints.json"), cps.to_json().as_bytes())?;
    Ok(format!(
        "{} checkpoints for {} ({} location, {} object, {} affordance)",
        cps.m(),
        world.id(),
        cps.count(Category::Location),
        cps.count(Category::Object),
        cps.count(Category::Affordance)
    ))
}

fn explore(a: ExploreArgs) -> Result<String> {
    let world = load_world(&a.world)?;
    let spec = PolicySpec::parse(&a.explorer, Duration::from_secs(a.timeout))?;
    let cps = Arc::new(build_checkpoints(&world));
    let mut policy = spec.make(Role::Explore, "explore-0");
    let ep = eccl_core::eta::explore_phase(&world, policy.as_mut(), a.budget, a.seed)?;
    if let Some(why) = ep.invalid {
        return Err(Error::Transport(format!("episode invalid: {why}")));
    }
    let cov = coverage(&ep.trajectory, &cps)?;
    persist_trajectory(&ep.trajectory, &a.out.join("exploration.jsonl"))?;
    write_atomic(&a.out.join("knowledge.json"), summarize(&ep.trajectory).to_json().as_bytes())?;
    write_json(&a.out.join("coverage.json"), "eccl-coverage/v1", &cov)?;
    Ok(format!("ECC {:.3} ({}/{}) in {} steps", cov.ecc(), cov.covered_count, cov.m, ep.trajectory.len()))
}

#[derive(serde::Serialize)]
struct DirectOut {
    world_id: String,
    goal: String,
    success: bool,
    steps: usize,
}

fn direct(a: DirectArgs) -> Result<String> {
    let world = load_world(&a.world)?;
    let goal = load_goal(&a.goal, &world)?;
    let spec = PolicySpec::parse(&a.executor, Duration::from_secs(a.timeout))?;
    let ep = run_direct(&world, spec.make(Role::Act, "direct-0").as_mut(), &goal, a.max_steps, a.seed);
    if let Some(why) = ep.invalid {
        return Err(Error::Transport(format!("episode invalid: {why}")));
    }
    persist_trajectory(&ep.trajectory, &a.out.join("direct.jsonl"))?;
    let out = DirectOut { world_id: world.id().into(), goal: goal.text(), success: ep.success, steps: ep.trajectory.len() };
    write_json(&a.out.join("direct.json"), "eccl-direct/v1", &out)?;
    Ok(format!("{} in {} steps", if ep.success { "success" } else { "failure" }, out.steps))
}

#[derive(serde::Serialize)]
struct EtaOut<'a> {
    world_id: &'a str,
    goal: String,
    ecc_at_budget: f64,
    success: bool,
    steps_to_success: Option<usize>,
    exploration_steps: usize,
    acting_steps: usize,
    invalid: &'a Option<String>,
}

const CURVE_BUDGETS: [usize; 6] = [5, 10, 25, 50, 75, 100];

fn eta(a: EtaArgs, exec: Exec) -> Result<String> {
    let timeout = Duration::from_secs(a.timeout);
    let explorer = PolicySpec::parse(&a.explorer, timeout)?;
    let executor = PolicySpec::parse(&a.executor, timeout)?;
    let opts = EtaOptions { continue_in_place: a.continue_in_place };
    if let Some(dir) = &a.suite {
        return eta_suite(&a, dir, &explorer, &executor, opts, exec);
    }
    let world = load_world(a.world.as_deref().expect("clap requires world"))?;
    let goal = match &a.goal {
        Some(p) => load_goal(p, &world)?,
        None => generate_goal(&world.spec, a.seed).ok_or_else(|| Error::Config("world admits no goal".into()))?,
    };
    let mut ex = explorer.make(Role::Explore, "eta-0/explore");
    let mut ac = executor.make(Role::Act, "eta-0/act");
    let r = run_eta(&world, ex.as_mut(), ac.as_mut(), &goal, a.budget, a.max_steps, a.seed, opts)?;
    persist_trajectory(&r.exploration_traj, &a.out.join("exploration.jsonl"))?;
    persist_trajectory(&r.acting_traj, &a.out.join("acting.jsonl"))?;
    write_atomic(&a.out.join("knowledge.json"), r.knowledge.to_json().as_bytes())?;
    let out = EtaOut {
        world_id: world.id(),
        goal: goal.text(),
        ecc_at_budget: r.ecc_at_budget,
        success: r.success,
        steps_to_success: r.steps_to_success,
        exploration_steps: r.exploration_traj.len(),
        acting_steps: r.acting_traj.len(),
        invalid: &r.invalid,
    };
    write_json(&a.out.join("eta_result.json"), "eccl-eta/v1", &out)?;
    Ok(format!(
        "ECC {:.3} after {} steps; {} in {} acting steps",
        r.ecc_at_budget,
        out.exploration_steps,
        if r.success { "success" } else { "failure" },
        out.acting_steps
    ))
}

struct Evaluated {
    outcome: InstanceOutcome,
    direct: Trajectory,
    eta: EtaResult,
}

fn eta_suite(a: &EtaArgs, dir: &Path, explorer: &PolicySpec, executor: &PolicySpec, opts: EtaOptions, exec: Exec) -> Result<String> {
    let suite = Suite::load(dir)?;
    let only = a.variant.as_deref().map(str::parse::<VariantKind>).transpose()?;
    let exec = if explorer.is_external() || executor.is_external() { Exec::Sequential } else { exec };
    let mut lines = Vec::new();
    for kind in [VariantKind::Original].into_iter().chain(VariantKind::PERTURBED) {
        if only.is_some_and(|k| k != kind) {
            continue;
        }
        let mut entries: Vec<_> = suite.of_kind(kind).collect();
        if let Some(n) = a.limit {
            entries.truncate(n);
        }
        if entries.is_empty() {
            continue;
        }
        let root = SeedStream::root(a.seed).child(kind.name());
        let results = exec
            .map(&entries, |i, (e, w)| -> Result<Evaluated> {
                let world = World::new(w.clone())?;
                let seed = root.index(i as u64).seed();
                let id = format!("{}-{}", kind.name(), e.id);
                let d = run_direct(&world, executor.make(Role::Act, &format!("{id}/direct")).as_mut(), &e.goal, a.max_steps, seed);
                let mut ex = explorer.make(Role::Explore, &format!("{id}/explore"));
                let mut ac = executor.make(Role::Act, &format!("{id}/act"));
                let r = run_eta(&world, ex.as_mut(), ac.as_mut(), &e.goal, a.budget, a.max_steps, seed, opts)?;
                let outcome = InstanceOutcome {
                    world_id: world.id().to_string(),
                    direct_success: d.success,
                    direct_steps: d.trajectory.len(),
                    eta_success: r.success,
                    eta_steps: r.acting_traj.len(),
                    ecc: r.ecc_at_budget,
                    exploration_steps: r.exploration_traj.len(),
                    invalid: d.invalid.is_some() || r.invalid.is_some(),
                };
                Ok(Evaluated { outcome, direct: d.trajectory, eta: r })
            })
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
        let out_dir = a.out.join(kind.name());
        let outcomes: Vec<InstanceOutcome> = results.iter().map(|r| r.outcome.clone()).collect();
        let jsonl: String = outcomes.iter().map(|o| serde_json::to_string(o).expect("serializes") + "\n").collect();
        write_atomic(&out_dir.join("outcomes.jsonl"), jsonl.as_bytes())?;
        let summary = SuiteSummary::from_outcomes(&outcomes);
        let curve = budget_curve(&results, &entries.iter().map(|(_, w)| w).collect::<Vec<_>>(), a.budget)?;
        let diagnostics = failure_diagnostics(results.iter().filter(|r| !r.outcome.invalid).map(|r| (&r.direct, r.outcome.direct_success)));
        let condition = format!("{}/{}", a.label, kind.name());
        let file = ResultFile {
            row: ReportRow::from_summary(&condition, &summary, diagnostics),
            ratio: None,
            variant: Some(kind),
            budget_curve: Some(curve),
        };
        file.write(&out_dir)?;
        lines.push(format!("{}: dir {:.3} eta {:.3} Δ {:+.3} (n={})", kind.name(), summary.success_dir, summary.success_eta, summary.delta, summary.n));
    }
    if lines.is_empty() {
        return Err(Error::Empty("suite instances"));
    }
    Ok(lines.join("; "))
}

/// Mean exploration coverage at each step budget up to `budget`.
fn budget_curve(results: &[Evaluated], worlds: &[&WorldSpec], budget: usize) -> Result<Vec<(usize, f64)>> {
    let ks: Vec<usize> = CURVE_BUDGETS.iter().copied().filter(|&k| k < budget).chain([budget]).collect();
    let mut sums = vec![0.0; ks.len()];
    for (r, w) in results.iter().zip(worlds) {
        let cps = Arc::new(build_checkpoints(&World::new((*w).clone())?));
        let c = coverage_curve(&r.eta.exploration_traj, &cps, &ks)?;
        for (s, (_, v)) in sums.iter_mut().zip(c.points) {
            *s += v;
        }
    }
    let n = results.len().max(1) as f64;
    Ok(ks.into_iter().zip(sums).map(|(k, s)| (k, s / n)).collect())
}

/// Diagnostics over failed episodes; `None` when nothing failed.
fn failure_diagnostics<'a>(eps: impl Iterator<Item = (&'a Trajectory, bool)>) -> Option<DiagnosticsReport> {
    let (trajs, succ): (Vec<Trajectory>, Vec<bool>) = eps.map(|(t, s)| (t.clone(), s)).unzip();
    diagnose(&trajs, &succ, true).ok()
}

fn parse_ratio(s: &str) -> Result<(u32, u32)> {
    let bad = || Error::Config(format!("ratio `{s}` is not TASK:EXPLORE"));
    let (t, e) = s.split_once(':').ok_or_else(bad)?;
    Ok((t.trim().parse().map_err(|_| bad())?, e.trim().parse().map_err(|_| bad())?))
}

fn parse_range(s: &str) -> Result<(usize, usize)> {
    let bad = || Error::Config(format!("range `{s}` is not MIN-MAX"));
    let (a, b) = s.split_once('-').ok_or_else(bad)?;
    Ok((a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?))
}

fn train(a: TrainArgs, exec: Exec) -> Result<String> {
    let (state, cfg) = match &a.resume {
        Some(p) => {
            let mut s = TrainCheckpoint::from_json(&read(p)?)?;
            if let Some(n) = a.steps {
                s.config.max_steps = n;
            }
            let c = s.config.clone();
            (s, c)
        }
        None => {
            let mut cfg = match &a.config {
                Some(p) => TrainConfig::parse(&read(p)?)?,
                None => TrainConfig::default(),
            };
            cfg.seed = a.seed;
            if let Some(n) = a.steps {
                cfg.max_steps = n;
            }
            if let Some(m) = a.mode {
                cfg.mode = match m {
                    Mode::TaskOnly => TrainMode::TaskOnly,
                    Mode::ExploreOnly => TrainMode::ExploreOnly,
                    Mode::Interleaved => TrainMode::Interleaved,
                };
            }
            if let Some(r) = &a.ratio {
                cfg.schedule_ratio = parse_ratio(r)?;
            }
            if let Some(lr) = a.lr {
                cfg.learning_rate = lr;
            }
            cfg.validate()?;
            (TrainCheckpoint::initial(&cfg), cfg)
        }
    };
    if a.resume.is_some() && cfg.seed != a.seed {
        return Err(Error::Config(format!("--seed {} differs from the checkpoint's seed {}", a.seed, cfg.seed)));
    }
    let ckpt_path = a.out.join("checkpoint.json");
    let every = a.checkpoint_every.max(1);
    let out = train_from(state, exec, cfg.max_steps, |s| {
        if s.next_step % every == 0 || s.next_step == cfg.max_steps {
            write_atomic(&ckpt_path, s.to_json().as_bytes())?;
        }
        Ok(())
    })?;
    write_atomic(&a.out.join("training_log.jsonl"), out.log.to_jsonl().as_bytes())?;
    write_atomic(&a.out.join("params.json"), out.params.to_json().as_bytes())?;
    let first = out.log.records.first();
    let last = out.log.records.last();
    let mut summary = format!(
        "trained {} steps ({:?}, ratio {:?}); reward {:.3} -> {:.3}",
        out.log.records.len(),
        cfg.mode,
        cfg.ratio(),
        first.map_or(0.0, |r| r.mean_reward),
        last.map_or(0.0, |r| r.mean_reward)
    );
    if a.eval > 0 {
        let mut sampler = cfg.worlds.clone();
        if let Some(r) = &a.eval_locations {
            (sampler.min_locations, sampler.max_locations) = parse_range(r)?;
        }
        let ev = evaluate_params(&out.params, &sampler, a.eval, cfg.seed, a.eval_budget, a.eval_max_steps, exec)?;
        let outcomes: Vec<InstanceOutcome> = ev.iter().map(|(o, _)| o.clone()).collect();
        let s = SuiteSummary::from_outcomes(&outcomes);
        let label = a.label.clone().unwrap_or_else(|| match cfg.ratio() {
            (0, _) => "explore-only".into(),
            (_, 0) => "task-only".into(),
            (t, e) => format!("interleaved-{t}-{e}"),
        });
        let diagnostics = failure_diagnostics(ev.iter().map(|(o, t)| (t, o.direct_success)));
        ResultFile { row: ReportRow::from_summary(label, &s, diagnostics), ratio: Some(cfg.ratio()), variant: None, budget_curve: None }
            .write(&a.out)?;
        summary.push_str(&format!("; eval dir {:.3} eta {:.3}", s.success_dir, s.success_eta));
    }
    Ok(summary)
}

fn variants(a: VariantsArgs) -> Result<String> {
    let sampler = WorldSampler {
        min_locations: a.min_locations,
        max_locations: a.max_locations,
        min_objects: a.min_objects,
        max_objects: a.max_objects,
        ..WorldSampler::default()
    };
    let n_bases = a.bases.unwrap_or(a.per_variant + a.per_variant / 4 + 16);
    let root = SeedStream::root(a.seed).child("bases");
    let bases = (0..n_bases)
        .map(|i| {
            let (w, g) = sample_context(&sampler, root.index(i as u64), true)?;
            Ok((w.spec.clone(), g.expect("goal requested")))
        })
        .collect::<Result<Vec<_>>>()?;
    let suite = build_suite(&bases, a.per_variant, a.seed)?;
    suite.write(&a.out)?;
    Ok(format!("{} instances ({} per variant), {} base pairs skipped", suite.entries.len(), a.per_variant, suite.skipped.len()))
}

#[derive(serde::Serialize)]
struct ScoreOut {
    world_id: String,
    ecc: f64,
    covered: usize,
    m: usize,
    steps: usize,
    diagnostics: DiagnosticsReport,
}

fn score(a: ScoreArgs) -> Result<String> {
    let traj = load_trajectory(&a.traj)?;
    let cps = CheckpointSet::from_json(&read(&a.checkpoints)?)?;
    let cov = coverage(&traj, &cps)?;
    let diagnostics = diagnose(std::slice::from_ref(&traj), &[false], false)?;
    let out = ScoreOut { world_id: traj.world_id.clone(), ecc: cov.ecc(), covered: cov.covered_count, m: cov.m, steps: traj.len(), diagnostics };
    if let Some(dir) = &a.out {
        write_json(&dir.join("score.json"), "eccl-score/v1", &out)?;
    }
    Ok(serde_json::to_string(&out)?)
}

fn report(a: ReportArgs) -> Result<String> {
    let rep = build_report(&a.results, &a.expect)?;
    let out = a.out.clone().unwrap_or_else(|| a.results.clone());
    rep.write(&out)?;
    for w in &rep.warnings {
        eprintln!("{}", serde_json::json!({"warning": w}));
    }
    Ok(format!(
        "{} conditions, {} sweep rows, {} variant rows, {} warnings",
        rep.rows.len(),
        rep.ratio_sweep.len(),
        rep.variants.len(),
        rep.warnings.len()
    ))
}

#[derive(serde::Serialize)]
struct ServeOut<'a> {
    n: usize,
    n_invalid: usize,
    success_rate: Option<f64>,
    ecc_mean: Option<f64>,
    jobs: &'a [crate::serve::JobResult],
}

fn serve(a: ServeArgs) -> Result<Option<String>> {
    let world = load_world(&a.world)?;
    let goal = match (&a.goal, a.mode) {
        (Some(p), _) => Some(load_goal(p, &world)?),
        (None, ServeMode::Explore) => None,
        (None, _) => Some(generate_goal(&world.spec, a.seed).ok_or_else(|| Error::Config("world admits no goal".into()))?),
    };
    let kind = match a.mode {
        ServeMode::Explore => JobKind::Explore { budget: a.budget },
        ServeMode::Direct => JobKind::Direct { max_steps: a.max_steps },
        ServeMode::Eta => JobKind::Eta { budget: a.budget, max_steps: a.max_steps },
    };
    let root = SeedStream::root(a.seed).child("serve");
    let jobs: Vec<Job> = (0..a.episodes)
        .map(|i| Job { id: format!("ep-{i:04}"), world: world.clone(), goal: goal.clone(), kind, seed: root.index(i as u64).seed() })
        .collect();
    let timeout = Duration::from_secs(a.timeout);
    let stdio = a.listen.is_none() && a.echo.is_none();
    let chan = if let Some(action) = &a.echo {
        let (server, agent) = std::os::unix::net::UnixStream::pair()?;
        let a2 = agent.try_clone()?;
        let action = action.clone();
        std::thread::spawn(move || echo_agent(agent, a2, &action));
        WireChannel::new(server.try_clone()?, Box::new(server), timeout)
    } else if let Some(addr) = &a.listen {
        let listener = TcpListener::bind(addr).map_err(|e| Error::Transport(format!("bind {addr}: {e}")))?;
        let (stream, _) = listener.accept()?;
        WireChannel::new(stream.try_clone()?, Box::new(stream), timeout)
    } else {
        WireChannel::new(std::io::stdin(), Box::new(std::io::stdout()), timeout)
    };
    let results = run_jobs(&chan, &jobs, a.concurrency);
    for r in &results {
        let dir = a.out.join(&r.id);
        for (phase, t) in &r.trajectories {
            persist_trajectory(t, &dir.join(format!("{phase}.jsonl")))?;
        }
        let transcript: String = r.transcript.iter().map(|l| format!("{l}\n")).collect();
        write_atomic(&dir.join("transcript.jsonl"), transcript.as_bytes())?;
    }
    let valid: Vec<_> = results.iter().filter(|r| r.invalid.is_none()).collect();
    let mean = |f: &dyn Fn(&crate::serve::JobResult) -> Option<f64>| {
        let xs: Vec<f64> = valid.iter().filter_map(|r| f(r)).collect();
        (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
    };
    let out = ServeOut {
        n: valid.len(),
        n_invalid: results.len() - valid.len(),
        success_rate: mean(&|r| r.success.map(|s| s as u8 as f64)),
        ecc_mean: mean(&|r| r.ecc),
        jobs: &results,
    };
    write_json(&a.out.join("serve.json"), "eccl-serve/v1", &out)?;
    let summary = format!(
        "{} episodes served ({} invalid); ecc {}; success {}",
        results.len(),
        out.n_invalid,
        out.ecc_mean.map_or("n/a".into(), |x| format!("{x:.3}")),
        out.success_rate.map_or("n/a".into(), |x| format!("{x:.3}"))
    );
    if stdio {
        // stdout carries the protocol.
        eprintln!("{summary}");
        return Ok(None);
    }
    Ok(Some(summary))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ratio_and_range_parsing() {
        assert_eq!(parse_ratio("5:1").unwrap(), (5, 1));
        assert!(parse_ratio("5/1").is_err());
        assert_eq!(parse_range("8-12").unwrap(), (8, 12));
        assert!(parse_range("x").is_err());
    }

    #[test]
    fn unknown_policy_rejected() {
        assert!(PolicySpec::parse("oracle", Duration::from_secs(1)).is_err());
        assert!(PolicySpec::parse("softmax:/nonexistent.json", Duration::from_secs(1)).is_err());
    }
}
