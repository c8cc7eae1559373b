use std::sync::Arc;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{candidate_features, legal_actions, Choice, Decision, FeatureVector, Policy, PolicyContext, FEATURE_DIM, FEATURE_SCHEMA};
use crate::io::{from_versioned_json, versioned_json};
use crate::rng::Rng;
use crate::world::Action;
use crate::{Error, Result};

pub const PARAMS_SCHEMA: &str = "eccl-params/v1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyParameters {
    pub theta: Vec<f64>,
    pub feature_schema_version: String,
}

impl PolicyParameters {
    pub fn zeros() -> Self {
        PolicyParameters { theta: vec![0.0; FEATURE_DIM], feature_schema_version: FEATURE_SCHEMA.to_string() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.feature_schema_version != FEATURE_SCHEMA {
            return Err(Error::Schema { expected: FEATURE_SCHEMA.into(), found: self.feature_schema_version.clone() });
        }
        if self.theta.len() != FEATURE_DIM {
            return Err(Error::range("theta", format!("length {} != {FEATURE_DIM}", self.theta.len())));
        }
        if !self.theta.iter().all(|x| x.is_finite()) {
            return Err(Error::range("theta", "non-finite entry"));
        }
        Ok(())
    }

    pub fn score(&self, f: &[u16]) -> f64 {
        f.iter().map(|&i| self.theta[i as usize]).sum()
    }

    pub fn to_json(&self) -> String {
        versioned_json(PARAMS_SCHEMA, self)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let p: PolicyParameters = from_versioned_json(PARAMS_SCHEMA, s)?;
        p.validate()?;
        Ok(p)
    }
}

/// Candidate features at one decision point plus the index taken; enough to
/// recompute log-probabilities and their gradient under any parameters.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DecisionRecord {
    offsets: Vec<u32>,
    idx: Vec<u16>,
    pub chosen: u32,
}

impl DecisionRecord {
    pub fn new(feats: &[FeatureVector], chosen: usize) -> Self {
        let mut offsets = Vec::with_capacity(feats.len() + 1);
        let mut idx = Vec::new();
        offsets.push(0);
        for f in feats {
            idx.extend_from_slice(f);
            offsets.push(idx.len() as u32);
        }
        DecisionRecord { offsets, idx, chosen: chosen as u32 }
    }

    pub fn n_candidates(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn features(&self, i: usize) -> &[u16] {
        &self.idx[self.offsets[i] as usize..self.offsets[i + 1] as usize]
    }

    pub fn logits(&self, theta: &[f64]) -> Vec<f64> {
        (0..self.n_candidates()).map(|i| self.features(i).iter().map(|&j| theta[j as usize]).sum()).collect()
    }
}

/// Numerically stable log-softmax.
pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + logits.iter().map(|z| (z - m).exp()).sum::<f64>().ln();
    logits.iter().map(|z| z - lse).collect()
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|z| (z - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|x| x / s).collect()
}

/// Candidates, their features and probabilities under `params`.
pub fn action_distribution(params: &PolicyParameters, ctx: &PolicyContext<'_>) -> (Vec<Action>, Vec<FeatureVector>, Vec<f64>) {
    let cands = legal_actions(ctx.belief);
    let texts: Vec<String> = cands.iter().map(|a| a.to_string()).collect();
    let feats = candidate_features(ctx, &cands, &texts);
    let logits: Vec<f64> = feats.iter().map(|f| params.score(f)).collect();
    let p = softmax(&logits);
    (cands, feats, p)
}

fn draw(p: &[f64], rng: &mut Rng) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, x) in p.iter().enumerate() {
        acc += x;
        if u < acc {
            return i;
        }
    }
    p.len() - 1
}

/// Categorical draw; returns the action, its log-probability and the record
/// needed for training.
pub fn sample_action(params: &PolicyParameters, ctx: &PolicyContext<'_>, rng: &mut Rng) -> (Action, f64, DecisionRecord) {
    let (cands, feats, _) = action_distribution(params, ctx);
    let logits: Vec<f64> = feats.iter().map(|f| params.score(f)).collect();
    let lp = log_softmax(&logits);
    let p: Vec<f64> = lp.iter().map(|x| x.exp()).collect();
    let i = draw(&p, rng);
    let rec = DecisionRecord::new(&feats, i);
    (cands[i].clone(), lp[i], rec)
}

/// Linear softmax policy over [`legal_actions`].
pub struct SoftmaxPolicy {
    pub params: Arc<PolicyParameters>,
    pub record: bool,
    name: String,
}

impl SoftmaxPolicy {
    pub fn new(params: Arc<PolicyParameters>, record: bool) -> Self {
        SoftmaxPolicy { params, record, name: "softmax".into() }
    }

    /// θ = 0: uniform over candidates.
    pub fn uniform() -> Self {
        SoftmaxPolicy { params: Arc::new(PolicyParameters::zeros()), record: false, name: "random".into() }
    }
}

impl Policy for SoftmaxPolicy {
    fn name(&self) -> &str {
        &self.name
    }

    fn decide(&mut self, ctx: &PolicyContext<'_>, rng: &mut Rng) -> Result<Decision> {
        let (a, lp, rec) = sample_action(&self.params, ctx, rng);
        Ok(Decision { choice: Choice::Action(a), log_prob: lp, record: self.record.then_some(rec) })
    }
}

#[cfg(test)]
mod tests {
    use super::super::features::context_index;
    use super::super::Belief;
    use super::*;
    use crate::rng::SeedStream;
    use crate::world::{parse_action, sample_bedroom, EnvState, EpisodeMode, Trajectory, Verb, World};
    use proptest::prelude::*;

    fn parts(actions: &[&str]) -> (Trajectory, Belief) {
        let w = World::new(sample_bedroom()).unwrap();
        let (mut s, obs) = EnvState::reset(&w);
        let mut b = Belief::new(&obs);
        let mut t = Trajectory::new(w.id(), EpisodeMode::Explore, 0, obs);
        for a in actions {
            let r = s.step(&parse_action(a).unwrap());
            b.observe(&r);
            t.steps.push(r);
        }
        (t, b)
    }

    fn ctx<'a>(t: &'a Trajectory, b: &'a Belief) -> PolicyContext<'a> {
        PolicyContext { mode: EpisodeMode::Explore, history: t, belief: b, goal: None, knowledge: None, budget_left: 10 }
    }

    #[test]
    fn zero_theta_is_uniform() {
        let (t, b) = parts(&["go to bed 1"]);
        let (c, _, p) = action_distribution(&PolicyParameters::zeros(), &ctx(&t, &b));
        for x in &p {
            assert_eq!(*x, 1.0 / c.len() as f64);
        }
    }

    #[test]
    fn repeat_weight_dominates() {
        let (t, b) = parts(&["go to bed 1", "look"]);
        let mut params = PolicyParameters::zeros();
        params.theta[context_index(Verb::Look, 0)] = 10.0;
        let (c, _, p) = action_distribution(&params, &ctx(&t, &b));
        let i = c.iter().position(|a| a.verb == Verb::Look).unwrap();
        assert!(p[i] > 0.99, "{}", p[i]);
    }

    #[test]
    fn single_candidate_has_zero_log_prob() {
        assert_eq!(log_softmax(&[3.7]), vec![0.0]);
    }

    #[test]
    fn seeded_sampling_reproducible() {
        let (t, b) = parts(&["go to bed 1"]);
        let p = PolicyParameters::zeros();
        let run = || {
            let mut rng = SeedStream::root(5).rng();
            (0..20).map(|_| sample_action(&p, &ctx(&t, &b), &mut rng).0).collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn frequencies_match_distribution() {
        let (t, b) = parts(&["go to bed 1"]);
        let mut params = PolicyParameters::zeros();
        let mut r = SeedStream::root(9).rng();
        for x in params.theta.iter_mut() {
            *x = r.gen_range(-1.0..1.0);
        }
        let c = ctx(&t, &b);
        let (cands, _, p) = action_distribution(&params, &c);
        let n = 100_000;
        let mut counts = vec![0usize; cands.len()];
        let mut rng = SeedStream::root(11).rng();
        for _ in 0..n {
            let (a, _, rec) = sample_action(&params, &c, &mut rng);
            assert_eq!(cands[rec.chosen as usize], a);
            counts[rec.chosen as usize] += 1;
        }
        for (k, pi) in counts.iter().zip(&p) {
            let sigma = (n as f64 * pi * (1.0 - pi)).sqrt();
            assert!((*k as f64 - n as f64 * pi).abs() <= 3.0 * sigma + 1.0, "{k} vs {}", n as f64 * pi);
        }
    }

    #[test]
    fn params_json_round_trip() {
        let mut p = PolicyParameters::zeros();
        p.theta[3] = 0.25;
        assert_eq!(PolicyParameters::from_json(&p.to_json()).unwrap(), p);
    }

    proptest! {
        #[test]
        fn normalized_and_shift_invariant(theta in proptest::collection::vec(-5.0f64..5.0, FEATURE_DIM), shift in -50.0f64..50.0) {
            let (t, b) = parts(&["go to drawer 1", "open drawer 1", "take pencil 2 from drawer 1"]);
            let params = PolicyParameters { theta, feature_schema_version: FEATURE_SCHEMA.into() };
            let c = ctx(&t, &b);
            let (_, feats, p) = action_distribution(&params, &c);
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(p.iter().all(|x| *x > 0.0));
            let logits: Vec<f64> = feats.iter().map(|f| params.score(f) + shift).collect();
            let q = softmax(&logits);
            for (a, b) in p.iter().zip(&q) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }
    }
}
