//! Minimal decision-flipping word sets.
//!
//! Two solvers share one reward definition. The exact solver enumerates
//! subsets in order of increasing size and returns the first deletion set
//! that changes the model's label, which is affordable only for short
//! inputs. The
//! learned solver trains a per-token keep/remove policy with the
//! likelihood-ratio (REINFORCE) estimator against a frozen classifier:
//! a flip scores `1/|D|` (fewer removals score higher), minus a
//! within-sentence transition penalty that favors erasing contiguous
//! phrases, with a learned per-example baseline cutting estimator
//! variance.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::{Dataset, Example, TaskKind};
use crate::erasure::ErasureSpec;
use crate::error::{Error, Result};
use crate::models::io::{read_document, write_document, Document};
use crate::models::{Adam, Head, Params, TrainedModel};
use crate::tensor::{softplus, Tape, Tensor};

/// Largest input length the exact solver accepts by default.
pub const DEFAULT_MAX_BRUTE_FORCE: usize = 14;

/// Training configuration for the erasure policy.
#[derive(Clone, Debug)]
pub struct RlConfig {
    /// Weight of the within-sentence transition penalty.
    pub gamma: f64,
    /// Rollouts sampled per example and update step.
    pub rollouts_per_example: usize,
    pub policy_lr: f64,
    pub baseline_lr: f64,
    pub epochs: usize,
    /// Width of the policy's tanh layer (0 = plain linear readout).
    pub policy_hidden: usize,
    pub baseline_hidden: usize,
    pub seed: u64,
}

impl Default for RlConfig {
    fn default() -> Self {
        RlConfig {
            gamma: 0.01,
            rollouts_per_example: 4,
            policy_lr: 0.01,
            baseline_lr: 0.01,
            epochs: 30,
            policy_hidden: 16,
            baseline_hidden: 32,
            seed: 0,
        }
    }
}

impl RlConfig {
    pub fn validate(&self) -> Result<()> {
        if self.gamma < 0.0 {
            return Err(Error::Config(format!("gamma must be >= 0, got {}", self.gamma)));
        }
        if self.rollouts_per_example < 1 {
            return Err(Error::Config("need at least one rollout per example".into()));
        }
        Ok(())
    }
}

/// One sampled erase/keep decision sequence with its reward breakdown.
#[derive(Clone, Debug, PartialEq)]
pub struct Rollout {
    /// `z[t]` is true when token `t` is removed.
    pub z: Vec<bool>,
    /// Removed positions, ascending (the set `D`).
    pub removed: Vec<usize>,
    pub label_before: usize,
    pub label_after: usize,
    /// `1(flip) / |D|`, zero for the empty and the full set.
    pub l_term: f64,
    pub omega_term: f64,
    /// `l_term - omega_term`.
    pub reward: f64,
}

impl Rollout {
    pub fn flipped(&self) -> bool {
        self.l_term > 0.0
    }
}

/// A rollout plus the log-probability the policy assigned to it.
#[derive(Clone, Debug)]
pub struct SampledRollout {
    pub rollout: Rollout,
    pub log_prob: f64,
}

/// Within-sentence transition penalty: for each sentence span, the count
/// of adjacent `z` disagreements, scaled by `gamma`. No cross-sentence
/// terms, and no term for a sentence's first token.
pub fn omega(z: &[bool], sentence_spans: &[(usize, usize)], gamma: f64) -> Result<f64> {
    let mut cursor = 0usize;
    for (start, end) in sentence_spans {
        if *start != cursor || end <= start {
            return Err(Error::Contract(format!(
                "sentence spans must partition the token range; bad span ({start}, {end})"
            )));
        }
        cursor = *end;
    }
    if cursor != z.len() {
        return Err(Error::Contract(format!(
            "spans cover {cursor} of {} positions",
            z.len()
        )));
    }
    let mut transitions = 0usize;
    for (start, end) in sentence_spans {
        for t in (start + 1)..*end {
            if z[t] != z[t - 1] {
                transitions += 1;
            }
        }
    }
    Ok(gamma * transitions as f64)
}

fn transition_count(z: &[bool], spans: &[(usize, usize)]) -> usize {
    let mut transitions = 0usize;
    for (start, end) in spans {
        for t in (start + 1)..*end {
            if z[t] != z[t - 1] {
                transitions += 1;
            }
        }
    }
    transitions
}

/// View of one example as the policy sees it: tokens, sentence spans, and
/// the fixed model's own label on the intact input.
#[derive(Clone, Debug)]
pub struct RlExample<'a> {
    pub id: &'a str,
    pub tokens: &'a [String],
    pub spans: &'a [(usize, usize)],
    pub label_before: usize,
}

/// Computes the model's label once so rollouts can reuse it.
pub fn prepare_example<'a>(model: &TrainedModel, example: &'a Example) -> Result<RlExample<'a>> {
    let label_before = model.label_of(&example.tokens)?;
    Ok(RlExample {
        id: &example.id,
        tokens: &example.tokens,
        spans: &example.sentence_spans,
        label_before,
    })
}

/// Scores one erase/keep assignment. The empty set cannot flip anything
/// and the full set leaves nothing to classify; both earn a zero label
/// term.
pub fn reward(
    model: &TrainedModel,
    example: &RlExample,
    z: &[bool],
    gamma: f64,
) -> Result<Rollout> {
    if z.len() != example.tokens.len() {
        return Err(Error::Contract(format!(
            "z has {} entries for {} tokens",
            z.len(),
            example.tokens.len()
        )));
    }
    let removed: Vec<usize> = z
        .iter()
        .enumerate()
        .filter(|(_, zi)| **zi)
        .map(|(i, _)| i)
        .collect();
    let omega_term = omega(z, example.spans, gamma)?;
    let (l_term, label_after) = if removed.is_empty() || removed.len() == z.len() {
        (0.0, example.label_before)
    } else {
        let spec = ErasureSpec::word_positions(removed.iter().copied().collect());
        let label_after = model
            .forward_sequence(example.tokens, Some(&spec))?
            .into_prediction()?
            .label;
        let flipped = label_after != example.label_before;
        let l = if flipped {
            1.0 / removed.len() as f64
        } else {
            0.0
        };
        (l, label_after)
    };
    Ok(Rollout {
        z: z.to_vec(),
        removed,
        label_before: example.label_before,
        label_after,
        l_term,
        omega_term,
        reward: l_term - omega_term,
    })
}

// ---------------------------------------------------------------------------
// Policy and baseline

/// Per-token removal policy: a projection of the classifier's token
/// representation to a Bernoulli logit. `hidden == 0` is the plain
/// linear readout; a positive value inserts one tanh layer, which is
/// needed when the remove/keep rule couples the token's polarity with
/// the document-level prediction.
#[derive(Clone, Debug, PartialEq)]
pub struct PolicyParams {
    params: Params,
    pub rep_dim: usize,
    pub hidden: usize,
    pub seed: u64,
}

impl PolicyParams {
    pub fn init(rep_dim: usize, hidden: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Params::default();
        let mat = |rng: &mut ChaCha8Rng, rows: usize, cols: usize| {
            let bound = 1.0 / (cols as f64).sqrt();
            let values = (0..rows * cols).map(|_| rng.gen_range(-bound..bound)).collect();
            Tensor::matrix(rows, cols, values).unwrap()
        };
        // A positive output bias starts the policy removal-happy, so early
        // rollouts explore enough joint removals to find flips before the
        // 1/|D| pressure sparsifies the behavior.
        if hidden == 0 {
            params.insert("policy.w", mat(&mut rng, 1, rep_dim));
            params.insert("policy.b", Tensor::vector(vec![1.0]));
        } else {
            params.insert("policy.w1", mat(&mut rng, hidden, rep_dim));
            params.insert("policy.b1", Tensor::zeros(vec![hidden]));
            params.insert("policy.w2", mat(&mut rng, 1, hidden));
            params.insert("policy.b2", Tensor::vector(vec![1.0]));
        }
        PolicyParams {
            params,
            rep_dim,
            hidden,
            seed,
        }
    }

    pub fn params(&self) -> &Params {
        &self.params
    }

    pub fn set_params(&mut self, params: Params) -> Result<()> {
        if !params.all_finite() {
            return Err(Error::Contract("policy parameters must be finite".into()));
        }
        self.params = params;
        Ok(())
    }

    pub fn logit(&self, rep: &Tensor) -> f64 {
        if self.hidden == 0 {
            let w = self.params.get("policy.w");
            let b = self.params.get("policy.b");
            w.matvec(rep).expect("rep width").values()[0] + b.values()[0]
        } else {
            let h = self
                .params
                .get("policy.w1")
                .matvec(rep)
                .expect("rep width")
                .add(self.params.get("policy.b1"))
                .unwrap()
                .tanh();
            self.params
                .get("policy.w2")
                .matvec(&h)
                .unwrap()
                .add(self.params.get("policy.b2"))
                .unwrap()
                .values()[0]
        }
    }

    /// Removal probabilities for each token representation.
    pub fn probabilities(&self, reps: &[Tensor]) -> Vec<f64> {
        reps.iter()
            .map(|r| 1.0 / (1.0 + (-self.logit(r)).exp()))
            .collect()
    }
}

/// Reward estimator `b(e)`: a small tanh regression network over the
/// mean-pooled token representations.
#[derive(Clone, Debug, PartialEq)]
pub struct BaselineParams {
    params: Params,
    pub rep_dim: usize,
    pub hidden: usize,
}

impl BaselineParams {
    pub fn init(rep_dim: usize, hidden: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Params::default();
        let mat = |rng: &mut ChaCha8Rng, rows: usize, cols: usize| {
            let bound = 1.0 / (cols as f64).sqrt();
            let values = (0..rows * cols).map(|_| rng.gen_range(-bound..bound)).collect();
            Tensor::matrix(rows, cols, values).unwrap()
        };
        params.insert("baseline.w1", mat(&mut rng, hidden, rep_dim));
        params.insert("baseline.b1", Tensor::zeros(vec![hidden]));
        params.insert("baseline.w2", mat(&mut rng, 1, hidden));
        params.insert("baseline.b2", Tensor::zeros(vec![1]));
        BaselineParams {
            params,
            rep_dim,
            hidden,
        }
    }

    pub fn params(&self) -> &Params {
        &self.params
    }

    pub fn value(&self, pooled: &Tensor) -> f64 {
        let h = self
            .params
            .get("baseline.w1")
            .matvec(pooled)
            .expect("rep width")
            .add(self.params.get("baseline.b1"))
            .unwrap()
            .tanh();
        self.params
            .get("baseline.w2")
            .matvec(&h)
            .unwrap()
            .add(self.params.get("baseline.b2"))
            .unwrap()
            .values()[0]
    }
}

/// Mean of the per-token representations.
pub fn pooled_representation(reps: &[Tensor]) -> Tensor {
    let dim = reps[0].numel();
    let mut values = vec![0.0; dim];
    for r in reps {
        for (acc, v) in values.iter_mut().zip(r.values()) {
            *acc += v;
        }
    }
    for v in &mut values {
        *v /= reps.len() as f64;
    }
    Tensor::vector(values)
}

/// Draws one erase/keep assignment from the policy and scores it.
pub fn sample_rollout(
    policy: &PolicyParams,
    model: &TrainedModel,
    example: &RlExample,
    reps: &[Tensor],
    gamma: f64,
    rng: &mut ChaCha8Rng,
) -> Result<SampledRollout> {
    let mut z = Vec::with_capacity(reps.len());
    let mut log_prob = 0.0;
    for rep in reps {
        let l = policy.logit(rep);
        let p = 1.0 / (1.0 + (-l).exp());
        let zi = rng.gen::<f64>() < p;
        let zf = if zi { 1.0 } else { 0.0 };
        log_prob += zf * l - softplus(l);
        z.push(zi);
    }
    let rollout = reward(model, example, &z, gamma)?;
    Ok(SampledRollout { rollout, log_prob })
}

/// The rollouts of one example, sharing one baseline value.
pub struct RolloutGroup<'a> {
    pub reps: &'a [Tensor],
    pub baseline_value: f64,
    pub rollouts: &'a [SampledRollout],
}

#[derive(Clone, Debug)]
pub struct StepDiagnostics {
    pub mean_advantage: f64,
    pub grad_norm: f64,
    pub mean_reward: f64,
}

/// Likelihood-ratio gradient of the expected reward with respect to the
/// policy parameters, averaged over the given rollouts:
/// `mean( grad log pi(z) * (R - b(e)) )`. The caller ascends it.
pub fn policy_objective_gradient(
    policy: &PolicyParams,
    groups: &[RolloutGroup],
) -> Result<(BTreeMap<String, Tensor>, StepDiagnostics)> {
    let total_rollouts: usize = groups.iter().map(|g| g.rollouts.len()).sum();
    if total_rollouts == 0 {
        return Err(Error::Contract("need at least one rollout".into()));
    }
    let mut tape = Tape::new();
    let mut param_ids = BTreeMap::new();
    for (name, tensor) in policy.params.iter() {
        param_ids.insert(name.clone(), tape.leaf(tensor.clone()));
    }
    let traced_logit = |tape: &mut Tape, rep: crate::tensor::NodeId| -> Result<crate::tensor::NodeId> {
        if policy.hidden == 0 {
            let wr = tape.matvec(param_ids["policy.w"], rep)?;
            tape.add(wr, param_ids["policy.b"])
        } else {
            let z1 = tape.matvec(param_ids["policy.w1"], rep)?;
            let z1b = tape.add(z1, param_ids["policy.b1"])?;
            let h = tape.tanh(z1b);
            let z2 = tape.matvec(param_ids["policy.w2"], h)?;
            tape.add(z2, param_ids["policy.b2"])
        }
    };

    let mut objective = None;
    let mut advantage_sum = 0.0;
    let mut reward_sum = 0.0;
    for group in groups {
        let rep_nodes: Vec<_> = group
            .reps
            .iter()
            .map(|r| tape.leaf(r.clone()))
            .collect();
        for sampled in group.rollouts {
            let advantage = sampled.rollout.reward - group.baseline_value;
            advantage_sum += advantage;
            reward_sum += sampled.rollout.reward;
            let mut log_pi = None;
            for (t, rep) in rep_nodes.iter().enumerate() {
                let logit = traced_logit(&mut tape, *rep)?;
                let lp = tape.bernoulli_log_prob(logit, sampled.rollout.z[t])?;
                log_pi = Some(match log_pi {
                    None => lp,
                    Some(acc) => tape.add(acc, lp)?,
                });
            }
            let weighted = tape.scale(log_pi.expect("non-empty sequence"), advantage);
            objective = Some(match objective {
                None => weighted,
                Some(acc) => tape.add(acc, weighted)?,
            });
        }
    }
    let mean = tape.scale(objective.unwrap(), 1.0 / total_rollouts as f64);
    let grads = tape.backward(mean)?;
    let mut by_name = BTreeMap::new();
    let mut norm_sq = 0.0;
    for (name, id) in &param_ids {
        let g = grads.get_or_zeros(*id, tape.value(*id).shape());
        norm_sq += g.values().iter().map(|v| v * v).sum::<f64>();
        by_name.insert(name.clone(), g);
    }
    if by_name.values().any(|g| !g.is_finite()) {
        return Err(Error::Diverged {
            epoch: 0,
            batch: 0,
            message: "non-finite policy gradient".into(),
        });
    }
    Ok((
        by_name,
        StepDiagnostics {
            mean_advantage: advantage_sum / total_rollouts as f64,
            grad_norm: norm_sq.sqrt(),
            mean_reward: reward_sum / total_rollouts as f64,
        },
    ))
}

/// Gradient of the baseline's squared-error fit to the observed rewards.
/// Returns the gradient (to descend) and the mean squared error.
pub fn baseline_gradient(
    baseline: &BaselineParams,
    groups: &[RolloutGroup],
) -> Result<(BTreeMap<String, Tensor>, f64)> {
    let total_rollouts: usize = groups.iter().map(|g| g.rollouts.len()).sum();
    if total_rollouts == 0 {
        return Err(Error::Contract("need at least one rollout".into()));
    }
    let mut tape = Tape::new();
    let mut param_ids = BTreeMap::new();
    for (name, tensor) in baseline.params.iter() {
        param_ids.insert(name.clone(), tape.leaf(tensor.clone()));
    }
    let mut loss = None;
    for group in groups {
        let pooled = tape.leaf(pooled_representation(group.reps));
        let z1 = tape.matvec(param_ids["baseline.w1"], pooled)?;
        let z1b = tape.add(z1, param_ids["baseline.b1"])?;
        let h = tape.tanh(z1b);
        let z2 = tape.matvec(param_ids["baseline.w2"], h)?;
        let value = tape.add(z2, param_ids["baseline.b2"])?;
        for sampled in group.rollouts {
            let err = tape.mse(value, sampled.rollout.reward)?;
            loss = Some(match loss {
                None => err,
                Some(acc) => tape.add(acc, err)?,
            });
        }
    }
    let mean = tape.scale(loss.unwrap(), 1.0 / total_rollouts as f64);
    let mse = tape.value(mean).item();
    let grads = tape.backward(mean)?;
    let mut by_name = BTreeMap::new();
    for (name, id) in &param_ids {
        by_name.insert(name.clone(), grads.get_or_zeros(*id, tape.value(*id).shape()));
    }
    Ok((by_name, mse))
}

/// One REINFORCE update: ascend the policy objective, then refit the
/// baseline to the observed rewards.
pub struct PolicyTrainer {
    pub policy: PolicyParams,
    pub baseline: BaselineParams,
    adam_policy: Adam,
    adam_baseline: Adam,
}

impl PolicyTrainer {
    pub fn new(policy: PolicyParams, baseline: BaselineParams, config: &RlConfig) -> Self {
        PolicyTrainer {
            adam_policy: Adam::new(config.policy_lr),
            adam_baseline: Adam::new(config.baseline_lr),
            policy,
            baseline,
        }
    }

    pub fn step(&mut self, groups: &[RolloutGroup]) -> Result<StepDiagnostics> {
        let (grads, diag) = policy_objective_gradient(&self.policy, groups)?;
        // Adam descends, the objective is ascended.
        let neg: BTreeMap<String, Tensor> =
            grads.into_iter().map(|(n, g)| (n, g.scale(-1.0))).collect();
        self.adam_policy.step(&mut self.policy.params, &neg, 5.0);

        let (bgrads, _) = baseline_gradient(&self.baseline, groups)?;
        self.adam_baseline.step(&mut self.baseline.params, &bgrads, 5.0);
        Ok(diag)
    }
}

#[derive(Clone, Debug)]
pub struct EpochStats {
    pub epoch: usize,
    pub mean_reward: f64,
    pub flip_rate: f64,
    pub mean_removed: f64,
}

/// Trains the erasure policy against a frozen sequence classifier.
pub fn train_policy(
    model: &TrainedModel,
    dataset: &Dataset,
    config: &RlConfig,
) -> Result<(PolicyParams, BaselineParams, Vec<EpochStats>)> {
    config.validate()?;
    if !model.config().architecture.is_sequence() {
        return Err(Error::Config("the erasure policy needs a sequence model".into()));
    }
    if !matches!(model.config().head, Head::Classifier(_)) {
        return Err(Error::Config("the erasure policy needs a classifier".into()));
    }
    if dataset.task_kind == TaskKind::Tagging || dataset.is_empty() {
        return Err(Error::Config("policy training needs labeled text examples".into()));
    }

    struct Prepared<'a> {
        example: RlExample<'a>,
        reps: Vec<Tensor>,
    }
    let mut prepared = Vec::with_capacity(dataset.len());
    for ex in &dataset.examples {
        let example = prepare_example(model, ex)?;
        let reps = model.token_representations(&ex.tokens)?;
        prepared.push(Prepared { example, reps });
    }

    let rep_dim = model.config().rep_dim();
    let mut trainer = PolicyTrainer::new(
        PolicyParams::init(rep_dim, config.policy_hidden, config.seed),
        BaselineParams::init(rep_dim, config.baseline_hidden, config.seed.wrapping_add(1)),
        config,
    );
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(2));
    let mut order: Vec<usize> = (0..prepared.len()).collect();
    let mut curve = Vec::with_capacity(config.epochs);

    // Several examples share one update step: the likelihood-ratio
    // estimator is noisy, and per-example steps destabilize training.
    const EXAMPLES_PER_STEP: usize = 8;

    for epoch in 1..=config.epochs {
        use rand::seq::SliceRandom;
        order.shuffle(&mut rng);
        let mut reward_sum = 0.0;
        let mut flips = 0usize;
        let mut removed_sum = 0usize;
        let mut rollout_count = 0usize;
        for batch in order.chunks(EXAMPLES_PER_STEP) {
            let mut sampled_by_example = Vec::with_capacity(batch.len());
            for &pi in batch {
                let p = &prepared[pi];
                let mut sampled = Vec::with_capacity(config.rollouts_per_example);
                for _ in 0..config.rollouts_per_example {
                    let s = sample_rollout(
                        &trainer.policy,
                        model,
                        &p.example,
                        &p.reps,
                        config.gamma,
                        &mut rng,
                    )?;
                    reward_sum += s.rollout.reward;
                    removed_sum += s.rollout.removed.len();
                    if s.rollout.flipped() {
                        flips += 1;
                    }
                    rollout_count += 1;
                    sampled.push(s);
                }
                sampled_by_example.push((pi, sampled));
            }
            let groups: Vec<RolloutGroup> = sampled_by_example
                .iter()
                .map(|(pi, sampled)| {
                    let p = &prepared[*pi];
                    RolloutGroup {
                        reps: &p.reps,
                        baseline_value: trainer.baseline.value(&pooled_representation(&p.reps)),
                        rollouts: sampled,
                    }
                })
                .collect();
            trainer.step(&groups)?;
        }
        curve.push(EpochStats {
            epoch,
            mean_reward: reward_sum / rollout_count as f64,
            flip_rate: flips as f64 / rollout_count as f64,
            mean_removed: removed_sum as f64 / rollout_count as f64,
        });
    }
    Ok((trainer.policy, trainer.baseline, curve))
}

// ---------------------------------------------------------------------------
// Applying the policy

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ApplyMode {
    /// Remove every token whose removal probability exceeds 1/2.
    Greedy,
    /// Draw `k` rollouts and keep the best flipping one (fewest removals,
    /// then fewest transitions, then lexicographically smallest set).
    SampleBest(usize),
}

#[derive(Clone, Debug)]
pub struct PolicyApplication {
    pub rollout: Rollout,
    pub flipped: bool,
}

/// Runs the trained policy on one example. A non-flipping outcome is
/// reported, not an error.
pub fn apply_policy(
    policy: &PolicyParams,
    model: &TrainedModel,
    example: &RlExample,
    mode: ApplyMode,
    gamma: f64,
    rng: &mut ChaCha8Rng,
) -> Result<PolicyApplication> {
    let reps = model.token_representations(example.tokens)?;
    match mode {
        ApplyMode::Greedy => {
            let z: Vec<bool> = policy
                .probabilities(&reps)
                .into_iter()
                .map(|p| p > 0.5)
                .collect();
            let rollout = reward(model, example, &z, gamma)?;
            Ok(PolicyApplication {
                flipped: rollout.flipped(),
                rollout,
            })
        }
        ApplyMode::SampleBest(k) => {
            if k == 0 {
                return Err(Error::Config("sample_best needs k >= 1".into()));
            }
            let mut best_flip: Option<Rollout> = None;
            let mut best_any: Option<Rollout> = None;
            for _ in 0..k {
                let s = sample_rollout(policy, model, example, &reps, gamma, rng)?;
                let r = s.rollout;
                if best_any
                    .as_ref()
                    .map(|b| r.reward > b.reward)
                    .unwrap_or(true)
                {
                    best_any = Some(r.clone());
                }
                if r.flipped() {
                    let better = match &best_flip {
                        None => true,
                        Some(b) => {
                            let key_new = (
                                r.removed.len(),
                                transition_count(&r.z, example.spans),
                                r.removed.clone(),
                            );
                            let key_old = (
                                b.removed.len(),
                                transition_count(&b.z, example.spans),
                                b.removed.clone(),
                            );
                            key_new < key_old
                        }
                    };
                    if better {
                        best_flip = Some(r);
                    }
                }
            }
            let rollout = best_flip.or(best_any).expect("k >= 1 rollouts drawn");
            Ok(PolicyApplication {
                flipped: rollout.flipped(),
                rollout,
            })
        }
    }
}

/// The exact solver's answer: a canonical minimal flipping deletion set.
#[derive(Clone, Debug, PartialEq)]
pub struct MinimalSet {
    pub removed: Vec<usize>,
    pub label_before: usize,
    pub label_after: usize,
}

fn next_combination(idx: &mut [usize], n: usize) -> bool {
    let k = idx.len();
    let mut i = k;
    while i > 0 {
        i -= 1;
        if idx[i] < n - (k - i) {
            idx[i] += 1;
            for j in i + 1..k {
                idx[j] = idx[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Enumerates proper deletion subsets in order of increasing size (and
/// lexicographic index order within a size) and returns the first one
/// that changes the model's label. Returns `None` when no proper subset
/// flips.
pub fn brute_force_minimal(
    model: &TrainedModel,
    example: &RlExample,
    max_n: usize,
) -> Result<Option<MinimalSet>> {
    let n = example.tokens.len();
    if n > max_n {
        return Err(Error::Budget(format!(
            "{n} tokens exceed the exact-search budget of {max_n}; use the policy instead"
        )));
    }
    for size in 1..n {
        let mut idx: Vec<usize> = (0..size).collect();
        loop {
            let spec = ErasureSpec::word_positions(idx.iter().copied().collect());
            let label_after = model
                .forward_sequence(example.tokens, Some(&spec))?
                .into_prediction()?
                .label;
            if label_after != example.label_before {
                return Ok(Some(MinimalSet {
                    removed: idx.clone(),
                    label_before: example.label_before,
                    label_after,
                }));
            }
            if !next_combination(&mut idx, n) {
                break;
            }
        }
    }
    Ok(None)
}

// ---------------------------------------------------------------------------
// Serialization

/// Writes the policy and its baseline into one versioned model-format
/// file.
pub fn save_policy(
    path: &std::path::Path,
    policy: &PolicyParams,
    baseline: &BaselineParams,
    config: &RlConfig,
) -> Result<()> {
    let mut params: Vec<(String, Tensor)> = Vec::new();
    for (n, t) in policy.params.iter() {
        params.push((n.clone(), t.clone()));
    }
    for (n, t) in baseline.params.iter() {
        params.push((n.clone(), t.clone()));
    }
    let doc = Document {
        kind: "policy".into(),
        config: vec![
            ("rep_dim".into(), policy.rep_dim.to_string()),
            ("policy_hidden".into(), policy.hidden.to_string()),
            ("seed".into(), policy.seed.to_string()),
            ("baseline_hidden".into(), baseline.hidden.to_string()),
            ("gamma".into(), format!("{:.16e}", config.gamma)),
        ],
        vocab: None,
        embedding: None,
        params,
    };
    write_document(path, &doc)
}

/// Loads a file written by [`save_policy`].
pub fn load_policy(path: &std::path::Path) -> Result<(PolicyParams, BaselineParams, f64)> {
    let doc = read_document(path, "policy")?;
    let get = |key: &str| -> Result<&str> {
        doc.config
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
            .ok_or_else(|| Error::ModelFile(format!("missing config key {key:?}")))
    };
    let rep_dim: usize = get("rep_dim")?
        .parse()
        .map_err(|_| Error::ModelFile("bad rep_dim".into()))?;
    let seed: u64 = get("seed")?
        .parse()
        .map_err(|_| Error::ModelFile("bad seed".into()))?;
    let policy_hidden: usize = get("policy_hidden")?
        .parse()
        .map_err(|_| Error::ModelFile("bad policy_hidden".into()))?;
    let hidden: usize = get("baseline_hidden")?
        .parse()
        .map_err(|_| Error::ModelFile("bad baseline_hidden".into()))?;
    let gamma: f64 = get("gamma")?
        .parse()
        .map_err(|_| Error::ModelFile("bad gamma".into()))?;
    let mut policy_params = Params::default();
    let mut baseline_params = Params::default();
    for (name, tensor) in doc.params {
        if name.starts_with("policy.") {
            policy_params.insert(&name, tensor);
        } else if name.starts_with("baseline.") {
            baseline_params.insert(&name, tensor);
        } else {
            return Err(Error::ModelFile(format!("unexpected parameter {name:?}")));
        }
    }
    Ok((
        PolicyParams {
            params: policy_params,
            rep_dim,
            hidden: policy_hidden,
            seed,
        },
        BaselineParams {
            params: baseline_params,
            rep_dim,
            hidden,
        },
        gamma,
    ))
}

#[cfg(test)]
mod tests;
