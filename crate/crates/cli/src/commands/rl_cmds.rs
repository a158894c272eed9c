//! `rl-train`, `rl-apply`, and `oracle`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use erasure_lab_core::error::Error;
use erasure_lab_core::models::TrainedModel;
use erasure_lab_core::report::{
    fmt9, render_erasure_svg, write_erasure_records, ErasureRecord,
};
use erasure_lab_core::rl::{
    apply_policy, brute_force_minimal, load_policy, prepare_example, save_policy, train_policy,
    ApplyMode, RlConfig, DEFAULT_MAX_BRUTE_FORCE,
};

use crate::commands::{
    ensure_parent_dir, label_name, load_dataset, output_meta, select_split, DATA_KEYS,
};
use crate::config::{CliResult, RunConfig};

/// Trains the minimal-erasure policy against a frozen classifier.
pub fn rl_train_cmd(cfg: &RunConfig) -> CliResult<()> {
    let mut allowed = vec![
        "config",
        "model",
        "out",
        "gamma",
        "rollouts",
        "epochs",
        "policy-lr",
        "baseline-lr",
        "policy-hidden",
        "baseline-hidden",
        "seed",
    ];
    allowed.extend_from_slice(DATA_KEYS);
    cfg.restrict(&allowed)?;

    let model = TrainedModel::load(&cfg.path("model")?)?;
    let dataset = load_dataset(cfg)?;
    // Policies learn on the training split unless told otherwise.
    let selected = if cfg.get("split").is_some() {
        select_split(cfg, &dataset)?
    } else {
        let seed = cfg.u64_or("split-seed", crate::commands::DEFAULT_SPLIT_SEED)?;
        erasure_lab_core::data::split(&dataset, crate::commands::SPLIT_RATIOS, seed)?.0
    };

    let rl = RlConfig {
        gamma: cfg.f64_or("gamma", 0.01)?,
        rollouts_per_example: cfg.usize_or("rollouts", 4)?,
        policy_lr: cfg.f64_or("policy-lr", 0.01)?,
        baseline_lr: cfg.f64_or("baseline-lr", 0.01)?,
        epochs: cfg.usize_or("epochs", 30)?,
        policy_hidden: cfg.usize_or("policy-hidden", 16)?,
        baseline_hidden: cfg.usize_or("baseline-hidden", 32)?,
        seed: cfg.u64_or("seed", 0)?,
    };
    let (policy, baseline, curve) = train_policy(&model, &selected, &rl)?;
    for stat in &curve {
        println!(
            "epoch {:>3}: reward {:>12} flip-rate {:.3} mean-removed {:.2}",
            stat.epoch,
            fmt9(stat.mean_reward),
            stat.flip_rate,
            stat.mean_removed
        );
    }
    let out = cfg.path("out")?;
    ensure_parent_dir(&out)?;
    save_policy(&out, &policy, &baseline, &rl)?;
    println!("rl-train: policy -> {}", out.display());
    Ok(())
}

/// Applies a trained policy, writing erased-word records and optionally
/// an SVG rendering.
pub fn rl_apply_cmd(cfg: &RunConfig) -> CliResult<()> {
    let mut allowed = vec!["config", "policy", "model", "out", "svg", "mode", "k", "seed"];
    allowed.extend_from_slice(DATA_KEYS);
    cfg.restrict(&allowed)?;

    let model = TrainedModel::load(&cfg.path("model")?)?;
    let (policy, _baseline, gamma) = load_policy(&cfg.path("policy")?)?;
    let dataset = load_dataset(cfg)?;
    let selected = select_split(cfg, &dataset)?;
    let mode = match cfg.str_or("mode", "sample-best") {
        "greedy" => ApplyMode::Greedy,
        "sample-best" => ApplyMode::SampleBest(cfg.usize_or("k", 64)?),
        other => return Err(Error::Config(format!("unknown apply mode {other:?}")).into()),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.u64_or("seed", 0)?);

    let mut records = Vec::new();
    let mut flips = 0usize;
    for ex in &selected.examples {
        let view = prepare_example(&model, ex)?;
        let app = apply_policy(&policy, &model, &view, mode, gamma, &mut rng)?;
        if app.flipped {
            flips += 1;
        }
        records.push(ErasureRecord {
            example_id: ex.id.clone(),
            tokens: ex.tokens.clone(),
            removed: app.rollout.removed.clone(),
            label_before: label_name(&selected, app.rollout.label_before),
            label_after: label_name(&selected, app.rollout.label_after),
            reward: app.rollout.reward,
        });
    }
    let meta = output_meta("rl-apply", cfg);
    let out = cfg.path("out")?;
    ensure_parent_dir(&out)?;
    write_erasure_records(&out, &records, &meta)?;
    if let Some(svg) = cfg.opt_path("svg") {
        ensure_parent_dir(&svg)?;
        render_erasure_svg(&svg, &records, &meta)?;
    }
    println!(
        "rl-apply: flipped {flips} of {} examples -> {}",
        records.len(),
        out.display()
    );
    Ok(())
}

/// Exact minimal flipping sets by subset enumeration.
pub fn oracle_cmd(cfg: &RunConfig) -> CliResult<()> {
    let mut allowed = vec!["config", "model", "out", "max-n", "seed"];
    allowed.extend_from_slice(DATA_KEYS);
    cfg.restrict(&allowed)?;

    let model = TrainedModel::load(&cfg.path("model")?)?;
    let dataset = load_dataset(cfg)?;
    let selected = select_split(cfg, &dataset)?;
    let max_n = cfg.usize_or("max-n", DEFAULT_MAX_BRUTE_FORCE)?;

    let meta = output_meta("oracle", cfg);
    let mut body = meta.comment_block("# ");
    let mut found = 0usize;
    let mut skipped = 0usize;
    for ex in &selected.examples {
        if ex.tokens.len() > max_n {
            body.push_str(&format!(
                "{}: skipped ({} tokens exceed --max-n {max_n})\n",
                ex.id,
                ex.tokens.len()
            ));
            skipped += 1;
            continue;
        }
        let view = prepare_example(&model, ex)?;
        match brute_force_minimal(&model, &view, max_n)? {
            Some(min) => {
                found += 1;
                let toks: Vec<&str> = min.removed.iter().map(|i| ex.tokens[*i].as_str()).collect();
                let idx: Vec<String> = min.removed.iter().map(|i| i.to_string()).collect();
                body.push_str(&format!(
                    "{}: size {} indices [{}] tokens [{}] label {} -> {}\n",
                    ex.id,
                    min.removed.len(),
                    idx.join(" "),
                    toks.join(" "),
                    label_name(&selected, min.label_before),
                    label_name(&selected, min.label_after),
                ));
            }
            None => body.push_str(&format!("{}: none\n", ex.id)),
        }
    }
    let out = cfg.path("out")?;
    ensure_parent_dir(&out)?;
    std::fs::write(&out, body).map_err(Error::Io)?;
    println!(
        "oracle: minimal sets for {found} of {} examples ({} skipped) -> {}",
        selected.len(),
        skipped,
        out.display()
    );
    Ok(())
}
