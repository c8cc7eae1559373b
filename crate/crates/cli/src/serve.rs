//! Runs environment episodes for an external agent over the wire protocol.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;

use eccl_core::checkpoints::build_checkpoints;
use eccl_core::eta::{run_direct, run_eta, EtaOptions};
use eccl_core::policies::{run_episode, EpisodeConfig, ExternalPolicy, WireChannel};
use eccl_core::rng::SeedStream;
use eccl_core::world::{EpisodeMode, TaskGoal, Trajectory, World};
use serde::Serialize;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum JobKind {
    Explore { budget: usize },
    Direct { max_steps: usize },
    Eta { budget: usize, max_steps: usize },
}

#[derive(Clone, Debug)]
pub struct Job {
    pub id: String,
    pub world: Arc<World>,
    pub goal: Option<TaskGoal>,
    pub kind: JobKind,
    pub seed: u64,
}

#[derive(Clone, Debug, Serialize)]
pub struct JobResult {
    pub id: String,
    pub invalid: Option<String>,
    pub success: Option<bool>,
    pub ecc: Option<f64>,
    #[serde(skip)]
    pub trajectories: Vec<(String, Trajectory)>,
    #[serde(skip)]
    pub transcript: Vec<String>,
}

fn run_job(chan: &Arc<WireChannel>, job: &Job) -> JobResult {
    let mut res = JobResult {
        id: job.id.clone(),
        invalid: None,
        success: None,
        ecc: None,
        trajectories: Vec::new(),
        transcript: Vec::new(),
    };
    let missing_goal = || "job needs a goal".to_string();
    match job.kind {
        JobKind::Explore { budget } => {
            let cps = Arc::new(build_checkpoints(&job.world));
            let mut p = ExternalPolicy::new(chan.clone(), job.id.clone());
            let cfg = EpisodeConfig {
                mode: EpisodeMode::Explore,
                goal: None,
                knowledge: None,
                max_steps: budget,
                seed: job.seed,
                checkpoints: Some(cps.clone()),
                start: None,
            };
            let ep = run_episode(&job.world, &mut p, &cfg, &mut SeedStream::root(job.seed).rng());
            res.ecc = eccl_core::checkpoints::coverage(&ep.trajectory, &cps).ok().map(|c| c.ecc());
            res.invalid = ep.invalid;
            res.trajectories.push(("explore".into(), ep.trajectory));
            res.transcript = p.transcript;
        }
        JobKind::Direct { max_steps } => {
            let Some(goal) = &job.goal else {
                res.invalid = Some(missing_goal());
                return res;
            };
            let mut p = ExternalPolicy::new(chan.clone(), job.id.clone());
            let ep = run_direct(&job.world, &mut p, goal, max_steps, job.seed);
            res.success = Some(ep.success);
            res.invalid = ep.invalid;
            res.trajectories.push(("direct".into(), ep.trajectory));
            res.transcript = p.transcript;
        }
        JobKind::Eta { budget, max_steps } => {
            let Some(goal) = &job.goal else {
                res.invalid = Some(missing_goal());
                return res;
            };
            let mut ex = ExternalPolicy::new(chan.clone(), format!("{}/explore", job.id));
            let mut ac = ExternalPolicy::new(chan.clone(), format!("{}/act", job.id));
            match run_eta(&job.world, &mut ex, &mut ac, goal, budget, max_steps, job.seed, EtaOptions::default()) {
                Ok(r) => {
                    res.success = Some(r.success);
                    res.ecc = Some(r.ecc_at_budget);
                    res.invalid = r.invalid;
                    res.trajectories.push(("explore".into(), r.exploration_traj));
                    res.trajectories.push(("act".into(), r.acting_traj));
                }
                Err(e) => res.invalid = Some(e.to_string()),
            }
            res.transcript = ex.transcript;
            res.transcript.extend(ac.transcript);
        }
    }
    res
}

/// Run `jobs` with up to `concurrency` episodes in flight on one
/// connection. Results come back in job order.
pub fn run_jobs(chan: &Arc<WireChannel>, jobs: &[Job], concurrency: usize) -> Vec<JobResult> {
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<JobResult>>> = Mutex::new(vec![None; jobs.len()]);
    thread::scope(|s| {
        for _ in 0..concurrency.clamp(1, jobs.len().max(1)) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(job) = jobs.get(i) else { break };
                let r = run_job(chan, job);
                slots.lock().unwrap_or_else(|p| p.into_inner())[i] = Some(r);
            });
        }
    });
    slots.into_inner().unwrap_or_else(|p| p.into_inner()).into_iter().map(|r| r.expect("every job ran")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use eccl_core::policies::echo_agent;
    use eccl_core::world::{sample_bedroom, sample_kitchen, EnvState, TaskTemplate};
    use std::os::unix::net::UnixStream;
    use std::time::Duration;

    fn echo(action: &'static str) -> Arc<WireChannel> {
        let (server, agent) = UnixStream::pair().unwrap();
        let a2 = agent.try_clone().unwrap();
        thread::spawn(move || echo_agent(agent, a2, action));
        WireChannel::new(server.try_clone().unwrap(), Box::new(server), Duration::from_secs(60))
    }

    #[test]
    fn look_agent_scores_reset_visible_fraction() {
        let chan = echo("look");
        let w = World::new(sample_bedroom()).unwrap();
        let jobs: Vec<Job> = (0..3)
            .map(|i| Job { id: format!("e{i}"), world: w.clone(), goal: None, kind: JobKind::Explore { budget: 100 }, seed: i })
            .collect();
        let res = run_jobs(&chan, &jobs, 3);
        let cps = build_checkpoints(&w);
        let (_, obs) = EnvState::reset(&w);
        let mut reset_only = Trajectory::new(w.id(), EpisodeMode::Explore, 0, obs);
        reset_only.steps.clear();
        let expected = eccl_core::checkpoints::coverage(&reset_only, &cps).unwrap().ecc();
        for r in &res {
            assert!(r.invalid.is_none());
            assert_eq!(r.trajectories[0].1.len(), 100);
            assert_eq!(r.ecc, Some(expected));
        }
    }

    #[test]
    fn knowledge_only_in_acting_phase() {
        let chan = echo("look");
        let w = World::new(sample_kitchen()).unwrap();
        let goal = TaskGoal::new(TaskTemplate::PickCoolThenPlaceInRecep, "mug", "coffeemachine 1");
        let job = Job { id: "k".into(), world: w, goal: Some(goal), kind: JobKind::Eta { budget: 5, max_steps: 3 }, seed: 0 };
        let r = run_jobs(&chan, &[job], 1).remove(0);
        assert_eq!(r.success, Some(false));
        for line in &r.transcript {
            let v: serde_json::Value = serde_json::from_str(line).unwrap();
            if v["type"] == "obs" {
                // Only looks were explored, so the summary is empty and never sent.
                assert!(v.get("knowledge").is_none());
                assert_eq!(v.get("goal").is_some(), v["mode"] == "act");
            }
        }
    }

    #[test]
    fn acting_observations_carry_knowledge_after_exploration() {
        let chan = echo("go to countertop 1");
        let w = World::new(sample_kitchen()).unwrap();
        let goal = TaskGoal::new(TaskTemplate::PickCoolThenPlaceInRecep, "mug", "coffeemachine 1");
        let job = Job { id: "k".into(), world: w, goal: Some(goal), kind: JobKind::Eta { budget: 3, max_steps: 2 }, seed: 0 };
        let r = run_jobs(&chan, &[job], 1).remove(0);
        let obs: Vec<serde_json::Value> = r
            .transcript
            .iter()
            .map(|l| serde_json::from_str::<serde_json::Value>(l).unwrap())
            .filter(|v| v["type"] == "obs")
            .collect();
        assert!(obs.iter().filter(|v| v["mode"] == "explore").all(|v| v.get("knowledge").is_none()));
        let act: Vec<_> = obs.iter().filter(|v| v["mode"] == "act").collect();
        assert!(!act.is_empty());
        assert!(act.iter().all(|v| v.get("knowledge").is_some()));
    }
}
