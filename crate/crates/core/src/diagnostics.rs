//! Behavioral diagnostics over trajectories and coverage-vs-budget curves.
//!
//! Rates aggregate counts across episodes before dividing, so the result
//! does not depend on evaluation order.

use std::collections::HashMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::checkpoints::{CheckpointSet, Tracker};
use crate::world::{Outcome, Trajectory};
use crate::{Error, Result};

/// Loop detection considers repeated blocks up to this length.
pub const LOOP_MAX_LEN: usize = 4;
/// A block must occur this many times back to back to count as a loop.
pub const LOOP_REPEATS: usize = 3;
/// A failure counts as recovered if a different successful action follows
/// within this many steps.
pub const RECOVERY_WINDOW: usize = 3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub repeated_action_rate: f64,
    pub loop_rate: f64,
    pub info_seeking_rate: f64,
    pub error_recovery_rate: f64,
    /// Set when no no-op step was present and recovery is vacuously 1.
    pub recovery_vacuous: bool,
    pub n_episodes: usize,
    pub n_steps: usize,
}

impl DiagnosticsReport {
    pub const CSV_HEADER: &'static str =
        "repeated_action_rate,loop_rate,info_seeking_rate,error_recovery_rate,recovery_vacuous,n_episodes,n_steps";

    pub fn csv_row(&self) -> String {
        format!(
            "{:.6},{:.6},{:.6},{:.6},{},{},{}",
            self.repeated_action_rate,
            self.loop_rate,
            self.info_seeking_rate,
            self.error_recovery_rate,
            self.recovery_vacuous,
            self.n_episodes,
            self.n_steps
        )
    }
}

fn nonempty(trajs: &[Trajectory]) -> Result<()> {
    if trajs.is_empty() {
        return Err(Error::Empty("trajectory list"));
    }
    Ok(())
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn repeated_counts(t: &Trajectory) -> usize {
    let mut seen: HashMap<(&str, &str), ()> = HashMap::new();
    let mut n = 0;
    for s in &t.steps {
        if seen.insert((&s.action_text, &s.observation), ()).is_some() {
            n += 1;
        }
    }
    n
}

/// Steps that repeat an earlier action of the same episode which produced
/// the identical observation, over all steps.
pub fn repeated_action_rate(trajs: &[Trajectory]) -> Result<f64> {
    nonempty(trajs)?;
    let num = trajs.iter().map(repeated_counts).sum();
    let den = trajs.iter().map(Trajectory::len).sum();
    Ok(ratio(num, den))
}

/// Whether some block of 1..=4 action texts occurs three times in a row.
pub fn has_loop(t: &Trajectory) -> bool {
    let a: Vec<&str> = t.steps.iter().map(|s| s.action_text.as_str()).collect();
    for l in 1..=LOOP_MAX_LEN {
        let span = l * LOOP_REPEATS;
        if a.len() < span {
            break;
        }
        for start in 0..=a.len() - span {
            if (1..LOOP_REPEATS).all(|k| a[start..start + l] == a[start + k * l..start + (k + 1) * l]) {
                return true;
            }
        }
    }
    false
}

pub fn loop_rate(trajs: &[Trajectory]) -> Result<f64> {
    nonempty(trajs)?;
    Ok(ratio(trajs.iter().filter(|t| has_loop(t)).count(), trajs.len()))
}

pub fn info_seeking_rate(trajs: &[Trajectory]) -> Result<f64> {
    nonempty(trajs)?;
    let num = trajs.iter().flat_map(|t| &t.steps).filter(|s| s.verb().is_some_and(|v| v.is_info_seeking())).count();
    let den = trajs.iter().map(Trajectory::len).sum();
    Ok(ratio(num, den))
}

fn recovery_counts(t: &Trajectory) -> (usize, usize) {
    let mut failures = 0;
    let mut recovered = 0;
    for (i, s) in t.steps.iter().enumerate() {
        if s.outcome != Outcome::Noop {
            continue;
        }
        failures += 1;
        let window = &t.steps[i + 1..(i + 1 + RECOVERY_WINDOW).min(t.steps.len())];
        if window.iter().any(|n| n.outcome == Outcome::Ok && n.action_text != s.action_text) {
            recovered += 1;
        }
    }
    (recovered, failures)
}

/// Returns the rate and whether it is vacuous (no failures at all).
pub fn error_recovery_rate(trajs: &[Trajectory]) -> Result<(f64, bool)> {
    nonempty(trajs)?;
    let (r, f) = trajs.iter().map(recovery_counts).fold((0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
    if f == 0 {
        return Ok((1.0, true));
    }
    Ok((ratio(r, f), false))
}

/// All four rates. With `failures_only`, episodes flagged successful are
/// dropped first; `success` must be aligned with `trajs`.
pub fn diagnose(trajs: &[Trajectory], success: &[bool], failures_only: bool) -> Result<DiagnosticsReport> {
    let picked: Vec<Trajectory> = if failures_only {
        trajs.iter().zip(success).filter(|(_, ok)| !**ok).map(|(t, _)| t.clone()).collect()
    } else {
        trajs.to_vec()
    };
    nonempty(&picked)?;
    let (error_recovery_rate, recovery_vacuous) = error_recovery_rate(&picked)?;
    Ok(DiagnosticsReport {
        repeated_action_rate: repeated_action_rate(&picked)?,
        loop_rate: loop_rate(&picked)?,
        info_seeking_rate: info_seeking_rate(&picked)?,
        error_recovery_rate,
        recovery_vacuous,
        n_episodes: picked.len(),
        n_steps: picked.iter().map(Trajectory::len).sum(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BudgetCurve {
    pub points: Vec<(usize, f64)>,
}

/// ECC of each `k`-step prefix, computed in one streaming pass.
pub fn coverage_curve(traj: &Trajectory, cps: &Arc<CheckpointSet>, budgets: &[usize]) -> Result<BudgetCurve> {
    if traj.world_id != cps.world_id {
        return Err(Error::WorldMismatch { expected: cps.world_id.clone(), found: traj.world_id.clone() });
    }
    if budgets.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config("budgets must be strictly increasing".into()));
    }
    let mut tracker = Tracker::new(cps.clone());
    let mut fed = 0;
    let mut points = Vec::with_capacity(budgets.len());
    for &k in budgets {
        while fed < k.min(traj.len()) {
            tracker.observe(&traj.steps[fed]);
            fed += 1;
        }
        points.push((k, tracker.current_ecc()));
    }
    Ok(BudgetCurve { points })
}

/// Success with knowledge minus direct success.
pub fn delta_task(success_eta: f64, success_dir: f64) -> f64 {
    success_eta - success_dir
}
