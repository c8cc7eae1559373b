//! Group-relative policy optimisation for the linear softmax policy:
//! group-normalised advantages, an exact per-state KL penalty to a frozen
//! reference, and plain gradient ascent.

mod train;

pub use train::{
    evaluate_params, sample_context, train, train_from, Interleave, LogRecord, TrainCheckpoint, TrainConfig, TrainMode,
    TrainOutcome, TrainingLog, WorldSampler, CHECKPOINT_SCHEMA,
};

use serde::{Deserialize, Serialize};

use crate::checkpoints::{coverage, CheckpointSet};
use crate::policies::{log_softmax, DecisionRecord, PolicyParameters};
use crate::world::{check_task_success, EnvState, TaskGoal, Trajectory};
use crate::{Error, Result};

pub const DEFAULT_EPSILON: f64 = 1e-6;
pub const DEFAULT_BETA: f64 = 0.01;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RolloutKind {
    Task,
    Exploration,
}

impl RolloutKind {
    pub fn name(self) -> &'static str {
        match self {
            RolloutKind::Task => "task",
            RolloutKind::Exploration => "exploration",
        }
    }
}

#[derive(Clone, Debug)]
pub struct Rollout {
    pub trajectory: Trajectory,
    pub sum_log_prob: f64,
    pub reward: f64,
    pub ecc: f64,
    pub decisions: Vec<DecisionRecord>,
}

#[derive(Clone, Debug)]
pub struct RolloutGroup {
    pub context_id: String,
    pub kind: RolloutKind,
    pub rollouts: Vec<Rollout>,
}

impl RolloutGroup {
    pub fn new(context_id: impl Into<String>, kind: RolloutKind, rollouts: Vec<Rollout>) -> Result<Self> {
        if rollouts.len() < 2 {
            return Err(Error::range("G", format!("group of {} rollouts; need at least 2", rollouts.len())));
        }
        Ok(RolloutGroup { context_id: context_id.into(), kind, rollouts })
    }

    pub fn g(&self) -> usize {
        self.rollouts.len()
    }

    pub fn rewards(&self) -> Vec<f64> {
        self.rollouts.iter().map(|r| r.reward).collect()
    }
}

/// ECC of an exploration trajectory.
pub fn exploration_reward(traj: &Trajectory, cps: &CheckpointSet) -> Result<f64> {
    Ok(coverage(traj, cps)?.ecc())
}

/// 1 if the final state satisfies the goal.
pub fn task_reward(state_final: &EnvState, goal: &TaskGoal) -> f64 {
    if check_task_success(state_final, goal) {
        1.0
    } else {
        0.0
    }
}

/// `(r - mean) / (std + eps)` with the population standard deviation.
/// Rewards are centred on the first one before averaging, so a constant
/// shift leaves the result bit-identical whenever the shifted rewards are
/// exactly representable.
pub fn group_advantages(rewards: &[f64], epsilon: f64) -> Vec<f64> {
    let Some(&pivot) = rewards.first() else { return Vec::new() };
    let n = rewards.len() as f64;
    let d: Vec<f64> = rewards.iter().map(|r| r - pivot).collect();
    let mean = d.iter().sum::<f64>() / n;
    let var = d.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    let denom = var.sqrt() + epsilon;
    d.iter().map(|x| (x - mean) / denom).collect()
}

/// Cyclic schedule: the first `task` indices of each period are task steps.
pub fn schedule_kind(step_index: usize, ratio: (u32, u32)) -> RolloutKind {
    let (task, explore) = ratio;
    let period = (task + explore).max(1) as usize;
    if (step_index % period) < task as usize {
        RolloutKind::Task
    } else {
        RolloutKind::Exploration
    }
}

fn probs(logp: &[f64]) -> Vec<f64> {
    logp.iter().map(|x| x.exp()).collect()
}

/// Exact categorical KL(p‖q) at one recorded decision point.
pub fn decision_kl(theta: &[f64], reference: &[f64], d: &DecisionRecord) -> f64 {
    let lp = log_softmax(&d.logits(theta));
    let lq = log_softmax(&d.logits(reference));
    lp.iter().zip(&lq).map(|(a, b)| a.exp() * (a - b)).sum::<f64>().max(0.0)
}

/// Mean per-decision KL over every decision in the group.
pub fn kl_estimate(params: &PolicyParameters, reference: &PolicyParameters, group: &RolloutGroup) -> Result<f64> {
    if params.feature_schema_version != reference.feature_schema_version {
        return Err(Error::Schema {
            expected: reference.feature_schema_version.clone(),
            found: params.feature_schema_version.clone(),
        });
    }
    let (sum, n) = group
        .rollouts
        .iter()
        .flat_map(|r| &r.decisions)
        .fold((0.0, 0usize), |(s, n), d| (s + decision_kl(&params.theta, &reference.theta, d), n + 1));
    Ok(if n == 0 { 0.0 } else { sum / n as f64 })
}

/// Per-group objective `(1/G) Σ A_i Σ_t log π(a_t) − β·KL`. When `grad` is
/// given, the gradient is added into it (scaled by `weight`, as is the value).
pub fn group_objective(
    theta: &[f64],
    reference: &[f64],
    group: &RolloutGroup,
    advantages: &[f64],
    beta: f64,
    weight: f64,
    mut grad: Option<&mut [f64]>,
) -> f64 {
    let g = group.g() as f64;
    let mut pg = 0.0;
    for (r, &a) in group.rollouts.iter().zip(advantages) {
        let w = weight * a / g;
        for d in &r.decisions {
            let lp = log_softmax(&d.logits(theta));
            let c = d.chosen as usize;
            pg += a * lp[c];
            if let Some(grad) = grad.as_deref_mut() {
                if w != 0.0 {
                    // ∇ log π(c) = φ_c − E_p[φ]
                    for &j in d.features(c) {
                        grad[j as usize] += w;
                    }
                    for (i, p) in probs(&lp).iter().enumerate() {
                        for &j in d.features(i) {
                            grad[j as usize] -= w * p;
                        }
                    }
                }
            }
        }
    }
    let mut value = pg / g;

    let n_dec: usize = group.rollouts.iter().map(|r| r.decisions.len()).sum();
    if beta != 0.0 && n_dec > 0 {
        let scale = beta / n_dec as f64;
        let mut kl_sum = 0.0;
        for d in group.rollouts.iter().flat_map(|r| &r.decisions) {
            let lp = log_softmax(&d.logits(theta));
            let lq = log_softmax(&d.logits(reference));
            let kl: f64 = lp.iter().zip(&lq).map(|(a, b)| a.exp() * (a - b)).sum();
            kl_sum += kl;
            if let Some(grad) = grad.as_deref_mut() {
                // dKL/dz_i = p_i (log p_i − log q_i − KL)
                for i in 0..d.n_candidates() {
                    let dz = lp[i].exp() * (lp[i] - lq[i] - kl);
                    for &j in d.features(i) {
                        grad[j as usize] -= weight * scale * dz;
                    }
                }
            }
        }
        value -= scale * kl_sum;
    }
    weight * value
}

/// Batch objective: mean of the per-group objectives. Groups are visited in
/// `(context_id, index)` order so the floating-point sum is reproducible.
pub fn objective_and_gradient(
    theta: &[f64],
    reference: &[f64],
    groups: &[RolloutGroup],
    advantages: &[Vec<f64>],
    beta: f64,
    mut grad: Option<&mut [f64]>,
) -> f64 {
    let mut order: Vec<usize> = (0..groups.len()).collect();
    order.sort_by(|&a, &b| groups[a].context_id.cmp(&groups[b].context_id).then(a.cmp(&b)));
    let w = 1.0 / groups.len().max(1) as f64;
    let mut total = 0.0;
    for i in order {
        total += group_objective(theta, reference, &groups[i], &advantages[i], beta, w, grad.as_deref_mut());
    }
    total
}

#[derive(Clone, Debug)]
pub struct UpdateOutcome {
    pub params: PolicyParameters,
    pub objective: f64,
    pub kl: f64,
    pub grad_norm: f64,
    /// Set when the step was rejected; `params` is then the input unchanged.
    pub aborted: Option<String>,
}

/// One ascent step `θ ← θ + lr·∇J`.
pub fn update_step(
    params: &PolicyParameters,
    reference: &PolicyParameters,
    groups: &[RolloutGroup],
    epsilon: f64,
    beta: f64,
    lr: f64,
) -> Result<UpdateOutcome> {
    if groups.is_empty() {
        return Err(Error::Empty("rollout groups"));
    }
    params.validate()?;
    reference.validate()?;
    let advantages: Vec<Vec<f64>> = groups.iter().map(|g| group_advantages(&g.rewards(), epsilon)).collect();
    let mut grad = vec![0.0; params.theta.len()];
    let objective = objective_and_gradient(&params.theta, &reference.theta, groups, &advantages, beta, Some(&mut grad));
    let kl = groups.iter().map(|g| kl_estimate(params, reference, g)).sum::<Result<f64>>()? / groups.len() as f64;
    let grad_norm = grad.iter().map(|x| x * x).sum::<f64>().sqrt();
    if !grad_norm.is_finite() || !objective.is_finite() {
        return Ok(UpdateOutcome {
            params: params.clone(),
            objective,
            kl,
            grad_norm,
            aborted: Some("non-finite gradient; step skipped".into()),
        });
    }
    let mut next = params.clone();
    for (t, g) in next.theta.iter_mut().zip(&grad) {
        *t += lr * g;
    }
    Ok(UpdateOutcome { params: next, objective, kl, grad_norm, aborted: None })
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::policies::{run_episode, EpisodeConfig, SoftmaxPolicy, FEATURE_DIM};
    use crate::rng::SeedStream;
    use crate::world::{sample_bedroom, EpisodeMode, World};
    use proptest::prelude::*;
    use rand::Rng as _;
    use std::sync::Arc;

    /// Small random group from real softmax rollouts on the bedroom.
    pub(crate) fn random_group(seed: u64, g: usize, steps: usize) -> (PolicyParameters, PolicyParameters, RolloutGroup) {
        let mut rng = SeedStream::root(seed).child("fd").rng();
        let mut rand_params = |scale: f64| {
            let mut p = PolicyParameters::zeros();
            for t in p.theta.iter_mut() {
                *t = rng.gen_range(-scale..scale);
            }
            p
        };
        let params = rand_params(0.5);
        let reference = rand_params(0.5);
        let w = World::new(sample_bedroom()).unwrap();
        let rollouts = (0..g)
            .map(|i| {
                let mut pol = SoftmaxPolicy::new(Arc::new(params.clone()), true);
                let cfg = EpisodeConfig {
                    mode: EpisodeMode::Explore,
                    goal: None,
                    knowledge: None,
                    max_steps: steps,
                    seed: i as u64,
                    checkpoints: None,
                    start: None,
                };
                let ep = run_episode(&w, &mut pol, &cfg, &mut SeedStream::root(seed).index(i as u64).rng());
                Rollout {
                    reward: (i as f64 * 0.37 + seed as f64).sin(),
                    ecc: 0.0,
                    sum_log_prob: ep.sum_log_prob,
                    trajectory: ep.trajectory,
                    decisions: ep.decisions,
                }
            })
            .collect();
        (params, reference, RolloutGroup::new(format!("ctx{seed}"), RolloutKind::Exploration, rollouts).unwrap())
    }

    #[test]
    fn advantage_examples() {
        assert_eq!(group_advantages(&[1.0; 8], 1e-6), vec![0.0; 8]);
        let a = group_advantages(&[0.0, 1.0], 1e-6);
        assert!((a[0] + 0.999998).abs() < 1e-6 && (a[1] - 0.999998).abs() < 1e-6);
        assert_eq!(a[0], -a[1]);
    }

    proptest! {
        #[test]
        fn advantage_moments(rs in proptest::collection::vec(-5.0f64..5.0, 2..17), shift in -3.0f64..3.0) {
            let a = group_advantages(&rs, 1e-6);
            let mean = a.iter().sum::<f64>() / a.len() as f64;
            prop_assert!(mean.abs() < 1e-9);
            let n = rs.len() as f64;
            let m = rs.iter().sum::<f64>() / n;
            let sd = (rs.iter().map(|r| (r - m).powi(2)).sum::<f64>() / n).sqrt();
            let out_sd = (a.iter().map(|x| x * x).sum::<f64>() / n).sqrt();
            prop_assert!((out_sd - sd / (sd + 1e-6)).abs() < 1e-9);
            let shifted: Vec<f64> = rs.iter().map(|r| r + shift).collect();
            let b = group_advantages(&shifted, 1e-6);
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn dyadic_shift_is_exact() {
        let rs = [0.25, -1.5, 3.0, 0.125, 0.0, 2.75, -0.5];
        let a = group_advantages(&rs, 1e-6);
        for c in [-3.0, 0.375, 17.0] {
            let shifted: Vec<f64> = rs.iter().map(|r| r + c).collect();
            assert_eq!(group_advantages(&shifted, 1e-6), a);
        }
        assert!(group_advantages(&[], 1e-6).is_empty());
    }

    #[test]
    fn schedule_examples() {
        let k: Vec<_> = (0..7).map(|i| schedule_kind(i, (5, 1))).collect();
        assert_eq!(&k[..5], &[RolloutKind::Task; 5]);
        assert_eq!(k[5], RolloutKind::Exploration);
        assert_eq!(k[6], RolloutKind::Task);
        assert!((0..20).all(|i| schedule_kind(i, (0, 1)) == RolloutKind::Exploration));
        assert!((0..20).all(|i| schedule_kind(i, (1, 0)) == RolloutKind::Task));
        for start in 0..12 {
            let n = (start..start + 6).filter(|&i| schedule_kind(i, (5, 1)) == RolloutKind::Task).count();
            assert_eq!(n, 5);
        }
    }

    #[test]
    fn kl_identity_and_closed_form() {
        let (p, _, g) = random_group(1, 3, 8);
        assert_eq!(kl_estimate(&p, &p, &g).unwrap(), 0.0);
        // Two candidates with disjoint features: uniform vs (σ(z), 1−σ(z)).
        let d = DecisionRecord::new(&[vec![0], vec![1]], 0);
        let mut t = vec![0.0; FEATURE_DIM];
        t[0] = 4.0;
        let r = vec![0.0; FEATURE_DIM];
        let p0 = 1.0 / (1.0 + (-4.0f64).exp());
        let exact = p0 * (2.0 * p0).ln() + (1.0 - p0) * (2.0 * (1.0 - p0)).ln();
        assert!((decision_kl(&t, &r, &d) - exact).abs() < 1e-12);
    }

    #[test]
    fn kl_nonnegative() {
        for s in 0..50 {
            let (p, q, g) = random_group(s, 2, 5);
            assert!(kl_estimate(&p, &q, &g).unwrap() >= 0.0);
        }
    }

    #[test]
    fn zero_advantages_no_kl_is_fixed_point() {
        let (p, q, mut g) = random_group(2, 4, 6);
        for r in &mut g.rollouts {
            r.reward = 1.0;
        }
        let out = update_step(&p, &q, &[g], 1e-6, 0.0, 0.1).unwrap();
        assert_eq!(out.params, p);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        for s in 0..5 {
            let (p, q, g) = random_group(100 + s, 3, 6);
            let adv = vec![group_advantages(&g.rewards(), 1e-6)];
            let groups = [g];
            let mut grad = vec![0.0; FEATURE_DIM];
            objective_and_gradient(&p.theta, &q.theta, &groups, &adv, 0.3, Some(&mut grad));
            let h = 1e-5;
            let mut t = p.theta.clone();
            for k in 0..FEATURE_DIM {
                let x = t[k];
                t[k] = x + h;
                let up = objective_and_gradient(&t, &q.theta, &groups, &adv, 0.3, None);
                t[k] = x - h;
                let dn = objective_and_gradient(&t, &q.theta, &groups, &adv, 0.3, None);
                t[k] = x;
                let fd = (up - dn) / (2.0 * h);
                let rel = (fd - grad[k]).abs() / fd.abs().max(grad[k].abs()).max(1e-6);
                assert!(rel < 1e-4, "coord {k}: fd {fd} analytic {}", grad[k]);
            }
        }
    }

    #[test]
    fn positive_advantage_raises_probabilities() {
        let joint = |theta: &[f64], r: &Rollout| -> f64 {
            r.decisions.iter().map(|d| log_softmax(&d.logits(theta))[d.chosen as usize]).sum()
        };
        for s in 0..10 {
            let (p, q, mut g) = random_group(7 + s, 2, 5);
            g.rollouts[0].reward = 1.0;
            g.rollouts[1].reward = 0.0;
            g.rollouts[1].decisions.clear();
            let out = update_step(&p, &q, std::slice::from_ref(&g), 1e-6, 0.0, 1e-3).unwrap();
            assert!(joint(&out.params.theta, &g.rollouts[0]) > joint(&p.theta, &g.rollouts[0]));
            g.rollouts[0].decisions.truncate(1);
            let out = update_step(&p, &q, std::slice::from_ref(&g), 1e-6, 0.0, 1e-3).unwrap();
            let d = &g.rollouts[0].decisions[0];
            let before = log_softmax(&d.logits(&p.theta))[d.chosen as usize];
            let after = log_softmax(&d.logits(&out.params.theta))[d.chosen as usize];
            assert!(after > before);
        }
    }

    #[test]
    fn non_finite_gradient_aborts() {
        let (p, q, mut g) = random_group(3, 2, 4);
        g.rollouts[0].reward = f64::NAN;
        let out = update_step(&p, &q, &[g], 1e-6, 0.01, 0.1).unwrap();
        assert!(out.aborted.is_some());
        assert_eq!(out.params, p);
    }

    #[test]
    fn singleton_group_rejected() {
        let (_, _, g) = random_group(4, 2, 3);
        let one = vec![g.rollouts[0].clone()];
        assert!(RolloutGroup::new("x", RolloutKind::Task, one).is_err());
    }
}
