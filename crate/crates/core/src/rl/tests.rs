use super::*;
use crate::embeddings::EmbeddingTable;
use crate::models::{Architecture, Head, ModelConfig, TrainedModel};

fn toks(s: &str) -> Vec<String> {
    s.split_whitespace().map(|t| t.to_string()).collect()
}

fn tiny_table(dim: usize) -> EmbeddingTable {
    let words = ["alpha", "beta", "gamma", "delta"];
    let pairs = words
        .iter()
        .enumerate()
        .map(|(i, w)| {
            let v: Vec<f64> = (0..dim)
                .map(|j| ((i * dim + j + 1) as f64 * 0.61).sin())
                .collect();
            (w.to_string(), v)
        })
        .collect();
    EmbeddingTable::from_vectors(pairs, false).unwrap()
}

fn random_lstm(dim: usize, hidden: usize, k: usize, seed: u64) -> TrainedModel {
    let mut config = ModelConfig::new(Architecture::Lstm, dim, Head::Classifier(k));
    config.hidden_size = hidden;
    config.seed = seed;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = Params::default();
    let mat = |rng: &mut ChaCha8Rng, rows: usize, cols: usize| {
        let bound = 1.0 / (cols as f64).sqrt();
        let values = (0..rows * cols).map(|_| rng.gen_range(-bound..bound)).collect();
        Tensor::matrix(rows, cols, values).unwrap()
    };
    for gate in ["i", "f", "o", "c"] {
        params.insert(&format!("lstm.{gate}.wx"), mat(&mut rng, hidden, dim));
        params.insert(&format!("lstm.{gate}.wh"), mat(&mut rng, hidden, hidden));
        params.insert(&format!("lstm.{gate}.b"), Tensor::zeros(vec![hidden]));
    }
    params.insert("head.w", mat(&mut rng, k, hidden));
    params.insert("head.b", Tensor::zeros(vec![k]));
    TrainedModel::from_parts(config, params, tiny_table(dim)).unwrap()
}

fn zero_lstm(dim: usize, hidden: usize, k: usize) -> TrainedModel {
    let mut model = random_lstm(dim, hidden, k, 0);
    let config = model.config().clone();
    let mut params = Params::default();
    for (name, t) in model.params().iter() {
        params.insert(name, Tensor::zeros(t.shape().to_vec()));
    }
    model = TrainedModel::from_parts(config, params, tiny_table(dim)).unwrap();
    model
}

#[test]
fn omega_of_all_zeros_is_zero() {
    let z = vec![false; 5];
    assert_eq!(omega(&z, &[(0, 5)], 0.1).unwrap(), 0.0);
}

#[test]
fn omega_counts_within_sentence_transitions() {
    // z = [0,1,1,0,0], one sentence: transitions at t=1 and t=3.
    let z = vec![false, true, true, false, false];
    let got = omega(&z, &[(0, 5)], 0.1).unwrap();
    assert!((got - 0.2).abs() < 1e-15, "{got}");
}

#[test]
fn omega_drops_the_cross_sentence_boundary_term() {
    // Same z split as [0,1,1] and [0,0]: the sentence-initial comparison
    // at t=3 disappears.
    let z = vec![false, true, true, false, false];
    let got = omega(&z, &[(0, 3), (3, 5)], 0.1).unwrap();
    assert!((got - 0.1).abs() < 1e-15, "{got}");
}

#[test]
fn omega_rejects_bad_spans() {
    let z = vec![false; 4];
    assert!(matches!(omega(&z, &[(0, 2), (3, 4)], 0.1), Err(Error::Contract(_))));
    assert!(matches!(omega(&z, &[(0, 2), (1, 4)], 0.1), Err(Error::Contract(_))));
    assert!(matches!(omega(&z, &[(0, 3)], 0.1), Err(Error::Contract(_))));
}

#[test]
fn omega_is_invariant_under_complement() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..50 {
        let n = rng.gen_range(2..12usize);
        let z: Vec<bool> = (0..n).map(|_| rng.gen()).collect();
        let not_z: Vec<bool> = z.iter().map(|b| !b).collect();
        let cut = rng.gen_range(1..=n);
        let spans = if cut == n {
            vec![(0, n)]
        } else {
            vec![(0, cut), (cut, n)]
        };
        let a = omega(&z, &spans, 0.37).unwrap();
        let b = omega(&not_z, &spans, 0.37).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
    }
}

#[test]
fn reward_of_empty_set_is_zero() {
    let model = random_lstm(3, 4, 2, 1);
    let tokens = toks("alpha beta gamma");
    let spans = vec![(0, 3)];
    let example = RlExample {
        id: "e0",
        tokens: &tokens,
        spans: &spans,
        label_before: model.label_of(&tokens).unwrap(),
    };
    let r = reward(&model, &example, &[false, false, false], 0.1).unwrap();
    assert_eq!(r.l_term, 0.0);
    assert_eq!(r.reward, 0.0);
    assert_eq!(r.label_after, r.label_before);
}

#[test]
fn reward_of_full_set_is_zero_label_term() {
    let model = random_lstm(3, 4, 2, 1);
    let tokens = toks("alpha beta gamma");
    let spans = vec![(0, 3)];
    let example = RlExample {
        id: "e0",
        tokens: &tokens,
        spans: &spans,
        label_before: model.label_of(&tokens).unwrap(),
    };
    let r = reward(&model, &example, &[true, true, true], 0.0).unwrap();
    assert_eq!(r.l_term, 0.0);
    assert_eq!(r.removed, vec![0, 1, 2]);
}

/// Finds flipping deletion sets of the requested sizes on a seeded
/// untrained model, then pins the exact `1/|D|` arithmetic.
#[test]
fn flipped_rewards_scale_inversely_with_set_size() {
    let tokens = toks("alpha beta gamma delta alpha beta");
    let spans = vec![(0, 6)];
    let mut found: Option<(TrainedModel, Vec<usize>, Vec<usize>)> = None;
    for seed in 0..50u64 {
        let model = random_lstm(3, 5, 2, seed);
        let label = model.label_of(&tokens).unwrap();
        let example = RlExample {
            id: "e0",
            tokens: &tokens,
            spans: &spans,
            label_before: label,
        };
        let flip_of_size = |size: usize| -> Option<Vec<usize>> {
            let mut idx: Vec<usize> = (0..size).collect();
            loop {
                let mut z = vec![false; 6];
                for &i in &idx {
                    z[i] = true;
                }
                let r = reward(&model, &example, &z, 0.0).unwrap();
                if r.flipped() {
                    return Some(idx);
                }
                if !next_combination(&mut idx, 6) {
                    return None;
                }
            }
        };
        if let (Some(two), Some(four)) = (flip_of_size(2), flip_of_size(4)) {
            found = Some((model, two, four));
            break;
        }
    }
    let (model, two, four) = found.expect("no seed produced flips of size 2 and 4");
    let label = model.label_of(&tokens).unwrap();
    let example = RlExample {
        id: "e0",
        tokens: &tokens,
        spans: &spans,
        label_before: label,
    };
    let as_z = |idx: &[usize]| {
        let mut z = vec![false; 6];
        for &i in idx {
            z[i] = true;
        }
        z
    };
    let r2 = reward(&model, &example, &as_z(&two), 0.0).unwrap();
    let r4 = reward(&model, &example, &as_z(&four), 0.0).unwrap();
    assert_eq!(r2.reward, 0.5);
    assert_eq!(r4.reward, 0.25);
    assert!(r2.reward > r4.reward);
}

#[test]
fn constant_model_has_no_flipping_subset() {
    let model = zero_lstm(3, 4, 3);
    let tokens = toks("alpha beta gamma delta");
    let spans = vec![(0, 4)];
    let example = RlExample {
        id: "e0",
        tokens: &tokens,
        spans: &spans,
        label_before: model.label_of(&tokens).unwrap(),
    };
    assert_eq!(brute_force_minimal(&model, &example, 14).unwrap(), None);
}

#[test]
fn brute_force_respects_the_size_budget() {
    let model = random_lstm(3, 4, 2, 3);
    let tokens: Vec<String> = (0..15).map(|i| ["alpha", "beta"][i % 2].to_string()).collect();
    let spans = vec![(0, tokens.len())];
    let example = RlExample {
        id: "e0",
        tokens: &tokens,
        spans: &spans,
        label_before: 0,
    };
    assert!(matches!(
        brute_force_minimal(&model, &example, 14),
        Err(Error::Budget(_))
    ));
}

#[test]
fn brute_force_returns_a_true_minimum_in_canonical_order() {
    let tokens = toks("alpha beta gamma delta alpha");
    let spans = vec![(0, 5)];
    let mut checked = 0;
    for seed in 0..30u64 {
        let model = random_lstm(3, 5, 2, seed);
        let example = RlExample {
            id: "e0",
            tokens: &tokens,
            spans: &spans,
            label_before: model.label_of(&tokens).unwrap(),
        };
        let Some(min) = brute_force_minimal(&model, &example, 14).unwrap() else {
            continue;
        };
        checked += 1;
        // No strictly smaller subset flips, and no lexicographically
        // earlier subset of the same size flips.
        let k = min.removed.len();
        for size in 1..=k {
            let mut idx: Vec<usize> = (0..size).collect();
            loop {
                if size == k && idx == min.removed {
                    break;
                }
                let spec = ErasureSpec::word_positions(idx.iter().copied().collect());
                let label = model
                    .forward_sequence(&tokens, Some(&spec))
                    .unwrap()
                    .into_prediction()
                    .unwrap()
                    .label;
                assert_eq!(
                    label, example.label_before,
                    "seed {seed}: subset {idx:?} flips before {:?}",
                    min.removed
                );
                if !next_combination(&mut idx, 5) {
                    break;
                }
            }
        }
        if checked >= 5 {
            break;
        }
    }
    assert!(checked >= 3, "too few flippable seeds ({checked})");
}

#[test]
fn sampled_log_prob_matches_per_token_probabilities() {
    let model = random_lstm(3, 4, 2, 9);
    let tokens = toks("alpha beta gamma");
    let spans = vec![(0, 3)];
    let example = RlExample {
        id: "e0",
        tokens: &tokens,
        spans: &spans,
        label_before: model.label_of(&tokens).unwrap(),
    };
    let reps = model.token_representations(&tokens).unwrap();
    let policy = PolicyParams::init(model.config().rep_dim(), 0, 4);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let s = sample_rollout(&policy, &model, &example, &reps, 0.01, &mut rng).unwrap();
    let probs = policy.probabilities(&reps);
    let mut expect = 0.0f64;
    for (t, p) in probs.iter().enumerate() {
        expect += if s.rollout.z[t] { p.ln() } else { (1.0 - p).ln() };
    }
    assert!((s.log_prob - expect).abs() < 1e-12);
}

#[test]
fn zero_advantage_means_zero_policy_gradient() {
    let model = random_lstm(3, 4, 2, 11);
    let tokens = toks("alpha beta gamma");
    let spans = vec![(0, 3)];
    let example = RlExample {
        id: "e0",
        tokens: &tokens,
        spans: &spans,
        label_before: model.label_of(&tokens).unwrap(),
    };
    let reps = model.token_representations(&tokens).unwrap();
    let policy = PolicyParams::init(model.config().rep_dim(), 0, 4);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let rollouts: Vec<SampledRollout> = (0..6)
        .map(|_| sample_rollout(&policy, &model, &example, &reps, 0.0, &mut rng).unwrap())
        .collect();
    // Force R == b(e) by using each rollout's own reward as baseline in a
    // degenerate single-rollout group.
    for s in &rollouts {
        let group = RolloutGroup {
            reps: &reps,
            baseline_value: s.rollout.reward,
            rollouts: std::slice::from_ref(s),
        };
        let (grads, diag) = policy_objective_gradient(&policy, &[group]).unwrap();
        assert_eq!(diag.mean_advantage, 0.0);
        for g in grads.values() {
            assert!(g.values().iter().all(|v| *v == 0.0));
        }
    }
}

#[test]
fn single_token_bandit_probability_increases_monotonically() {
    // Reward 1 for removing the lone token, 0 for keeping it. Plain
    // gradient ascent on the production estimator must push the removal
    // probability up at every step.
    let rep = Tensor::vector(vec![0.5, -0.3]);
    let reps = vec![rep];
    let mut policy = PolicyParams::init(2, 0, 7);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut last_p = policy.probabilities(&reps)[0];
    let mut increased = 0;
    for _ in 0..40 {
        let p = policy.probabilities(&reps)[0];
        let mut rollouts = Vec::new();
        for _ in 0..16 {
            let z = rng.gen::<f64>() < p;
            let l = policy.logit(&reps[0]);
            let zf = if z { 1.0 } else { 0.0 };
            let log_prob = zf * l - (l.max(0.0) + (-l.abs()).exp().ln_1p());
            rollouts.push(SampledRollout {
                rollout: Rollout {
                    z: vec![z],
                    removed: if z { vec![0] } else { vec![] },
                    label_before: 0,
                    label_after: usize::from(z),
                    l_term: zf,
                    omega_term: 0.0,
                    reward: zf,
                },
                log_prob,
            });
        }
        let group = RolloutGroup {
            reps: &reps,
            baseline_value: 0.0,
            rollouts: &rollouts,
        };
        let (grads, _) = policy_objective_gradient(&policy, &[group]).unwrap();
        // plain ascent step
        let mut params = policy.params().clone();
        for (name, g) in &grads {
            let p = params.get_mut(name);
            for (v, gv) in p.values_mut().iter_mut().zip(g.values()) {
                *v += 0.5 * gv;
            }
        }
        policy.set_params(params).unwrap();
        let new_p = policy.probabilities(&reps)[0];
        if new_p > last_p {
            increased += 1;
        }
        assert!(new_p >= last_p - 1e-12, "probability decreased: {last_p} -> {new_p}");
        last_p = new_p;
    }
    assert!(increased >= 30, "only {increased} increases");
    assert!(last_p > 0.9, "final removal probability {last_p}");
}

#[test]
fn baseline_fits_a_constant_reward() {
    let rep = Tensor::vector(vec![0.2, -0.7, 0.4]);
    let reps = vec![rep];
    let mut baseline = BaselineParams::init(3, 8, 5);
    let constant = 0.625;
    let rollout = SampledRollout {
        rollout: Rollout {
            z: vec![true],
            removed: vec![0],
            label_before: 0,
            label_after: 1,
            l_term: constant,
            omega_term: 0.0,
            reward: constant,
        },
        log_prob: 0.0,
    };
    let mut adam = Adam::new(0.02);
    for _ in 0..600 {
        let group = RolloutGroup {
            reps: &reps,
            baseline_value: 0.0,
            rollouts: std::slice::from_ref(&rollout),
        };
        let (grads, _) = baseline_gradient(&baseline, &[group]).unwrap();
        let mut params = baseline.params().clone();
        adam.step(&mut params, &grads, 5.0);
        baseline = BaselineParams {
            params,
            rep_dim: baseline.rep_dim,
            hidden: baseline.hidden,
        };
    }
    let fitted = baseline.value(&pooled_representation(&reps));
    assert!(
        (fitted - constant).abs() < 1e-3,
        "baseline {fitted} vs {constant}"
    );
}

#[test]
fn policy_file_round_trips() {
    let policy = PolicyParams::init(6, 8, 11);
    let baseline = BaselineParams::init(6, 16, 12);
    let config = RlConfig::default();
    let path = std::env::temp_dir().join(format!("el-policy-{}.elp", std::process::id()));
    save_policy(&path, &policy, &baseline, &config).unwrap();
    let (p2, b2, gamma) = load_policy(&path).unwrap();
    assert_eq!(policy, p2);
    assert_eq!(baseline, b2);
    assert_eq!(gamma, config.gamma);
    std::fs::remove_file(path).ok();
}
