//! `synth`, `train`, and `eval`.

use erasure_lab_core::data::{
    gen_frequency_task, gen_planted_dims, gen_synthetic_sentiment, write_labeled_text, SynthKind,
    SyntheticSpec,
};
use erasure_lab_core::embeddings::load_text_embeddings;
use erasure_lab_core::error::Error;
use erasure_lab_core::models::{
    evaluate, train, Architecture, Head, ModelConfig, TrainedModel,
};

use crate::commands::{
    ensure_parent_dir, load_dataset, output_meta, select_split, DATA_KEYS, DEFAULT_SPLIT_SEED,
    SPLIT_RATIOS,
};
use crate::config::{CliResult, RunConfig};

/// Generates a synthetic task: an embeddings file plus a labeled dataset.
pub fn synth(cfg: &RunConfig) -> CliResult<()> {
    cfg.restrict(&[
        "config",
        "kind",
        "out",
        "vocab-size",
        "dim",
        "docs",
        "noise-sigma",
        "seed",
        "planted",
        "planted-dim",
        "negation-rate",
        "scoped-fraction",
        "five-class",
        "zipf-exponent",
    ])?;
    let kind = cfg.require("kind")?.to_string();
    let out_dir = cfg.path("out")?;
    let seed = cfg.u64_or("seed", 0)?;
    let dim = cfg.usize_or("dim", 50)?;

    let spec = match kind.as_str() {
        "planted_dims" => {
            let raw = cfg.str_or("planted", "31,26");
            let parts: Vec<usize> = raw
                .split(',')
                .map(|p| p.trim().parse())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| Error::Config(format!("bad --planted value {raw:?}")))?;
            if parts.len() != 2 {
                return Err(Error::Config("--planted needs two dimensions".into()).into());
            }
            let mut spec = SyntheticSpec::planted_dims(
                cfg.usize_or("vocab-size", 2000)?,
                dim,
                (parts[0], parts[1]),
                seed,
            );
            spec.noise_sigma = cfg.f64_or("noise-sigma", spec.noise_sigma)?;
            spec
        }
        "sentiment" => {
            let mut spec = SyntheticSpec::sentiment(cfg.usize_or("docs", 1200)?, dim, seed);
            spec.vocab_size = cfg.usize_or("vocab-size", spec.vocab_size)?;
            spec.noise_sigma = cfg.f64_or("noise-sigma", 0.25)?;
            if let SynthKind::Sentiment {
                negation_rate,
                scoped_fraction,
                five_class,
                ..
            } = &mut spec.kind
            {
                *negation_rate = cfg.f64_or("negation-rate", *negation_rate)?;
                *scoped_fraction = cfg.f64_or("scoped-fraction", *scoped_fraction)?;
                *five_class = cfg.bool_or("five-class", *five_class)?;
            }
            spec
        }
        "frequency" => {
            let mut spec = SyntheticSpec::frequency(
                cfg.usize_or("vocab-size", 2000)?,
                dim,
                cfg.usize_or("planted-dim", 7)?,
                seed,
            );
            spec.noise_sigma = cfg.f64_or("noise-sigma", spec.noise_sigma)?;
            if let SynthKind::Frequency { zipf_exponent, .. } = &mut spec.kind {
                *zipf_exponent = cfg.f64_or("zipf-exponent", *zipf_exponent)?;
            }
            spec
        }
        other => return Err(Error::Config(format!("unknown synth kind {other:?}")).into()),
    };

    let (table, dataset) = match &spec.kind {
        SynthKind::PlantedDims { .. } => gen_planted_dims(&spec)?,
        SynthKind::Sentiment { .. } => gen_synthetic_sentiment(&spec)?,
        SynthKind::Frequency { .. } => gen_frequency_task(&spec)?,
    };

    std::fs::create_dir_all(&out_dir).map_err(Error::Io)?;
    table.save_text(&out_dir.join("embeddings.txt"))?;
    write_labeled_text(&dataset, &out_dir.join("data.tsv"))?;
    let meta = output_meta("synth", cfg);
    erasure_lab_core::report::write_report_text(
        &out_dir.join("meta.txt"),
        &format!(
            "synthetic {kind}: {} examples, vocabulary {}, dim {}",
            dataset.len(),
            table.vocab().len(),
            table.dim()
        ),
        &[],
        &meta,
    )?;
    println!(
        "synth: wrote {} examples to {}",
        dataset.len(),
        out_dir.display()
    );
    Ok(())
}

fn parse_architecture(name: &str) -> CliResult<Architecture> {
    Ok(name.parse::<Architecture>()?)
}

/// Trains a model on the train split and reports dev/test metrics.
pub fn train_cmd(cfg: &RunConfig) -> CliResult<()> {
    let mut allowed = vec![
        "config",
        "embeddings",
        "arch",
        "task",
        "out",
        "hidden",
        "window",
        "layers",
        "dropout",
        "seed",
        "epochs",
        "batch",
        "lr",
        "patience",
        "clip",
        "trainable-embeddings",
    ];
    allowed.extend_from_slice(DATA_KEYS);
    cfg.restrict(&allowed)?;

    let mut table = load_text_embeddings(&cfg.path("embeddings")?, None)?;
    table.trainable = cfg.bool_or("trainable-embeddings", false)?;
    let dataset = load_dataset(cfg)?;
    let seed = cfg.u64_or("split-seed", DEFAULT_SPLIT_SEED)?;
    let (train_s, dev_s, test_s) = erasure_lab_core::data::split(&dataset, SPLIT_RATIOS, seed)?;

    let arch = parse_architecture(cfg.str_or("arch", "window_mlp"))?;
    let head = match cfg.str_or("task", "classification") {
        "classification" => Head::Classifier(dataset.num_classes()),
        "regression" => Head::Regressor,
        other => return Err(Error::Config(format!("unknown task {other:?}")).into()),
    };
    let mut config = ModelConfig::new(arch, table.dim(), head);
    config.hidden_size = cfg.usize_or("hidden", 50)?;
    config.intermediate_layers = cfg.usize_or("layers", 2)?;
    config.window = cfg.usize_or("window", 5)?;
    config.dropout_prob = cfg.f64_or("dropout", 0.0)?;
    config.seed = cfg.u64_or("seed", 0)?;
    config.optimizer.step_size = cfg.f64_or("lr", config.optimizer.step_size)?;
    config.optimizer.batch_size = cfg.usize_or("batch", config.optimizer.batch_size)?;
    config.optimizer.max_epochs = cfg.usize_or("epochs", config.optimizer.max_epochs)?;
    config.optimizer.patience = cfg.usize_or("patience", config.optimizer.patience)?;
    config.optimizer.clip_norm = cfg.f64_or("clip", config.optimizer.clip_norm)?;

    let model = train(&config, &table, &train_s, &dev_s)?;
    let dev = evaluate(&model, &dev_s)?;
    let test = evaluate(&model, &test_s)?;
    let out = cfg.path("out")?;
    ensure_parent_dir(&out)?;
    model.save(&out)?;
    let fmt = |r: &erasure_lab_core::models::EvalReport| match (r.accuracy, r.mse) {
        (Some(a), _) => format!("accuracy {a:.4}"),
        (_, Some(m)) => format!("mse {m:.6}"),
        _ => "n/a".into(),
    };
    println!(
        "train: {} dev {} test {} -> {}",
        arch.as_str(),
        fmt(&dev),
        fmt(&test),
        out.display()
    );
    Ok(())
}

/// Prints (and optionally writes) metrics on a chosen split.
pub fn eval_cmd(cfg: &RunConfig) -> CliResult<()> {
    let mut allowed = vec!["config", "model", "out"];
    allowed.extend_from_slice(DATA_KEYS);
    cfg.restrict(&allowed)?;

    let model = TrainedModel::load(&cfg.path("model")?)?;
    let dataset = load_dataset(cfg)?;
    let selected = select_split(cfg, &dataset)?;
    let report = evaluate(&model, &selected)?;
    let line = match (report.accuracy, report.mse) {
        (Some(a), _) => format!("eval: n {} accuracy {a:.6}", report.n),
        (_, Some(m)) => format!("eval: n {} mse {m:.6}", report.n),
        _ => unreachable!(),
    };
    println!("{line}");
    if let Some(out) = cfg.opt_path("out") {
        ensure_parent_dir(&out)?;
        let meta = output_meta("eval", cfg);
        erasure_lab_core::report::write_report_text(&out, &line, &[], &meta)?;
    }
    Ok(())
}
