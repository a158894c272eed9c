//! `importance`, `layer-importance`, `word-ranking`, `histogram`,
//! `freq-corr`, and `render`.

use erasure_lab_core::embeddings::load_text_embeddings;
use erasure_lab_core::erasure::{
    frequency_correlation, hidden_unit_importances, importance_histogram, input_dim_importances,
    layer_importance, word_type_ranking, word_type_reports, RankingSign, WordMode,
};
use erasure_lab_core::error::Error;
use erasure_lab_core::models::TrainedModel;
use erasure_lab_core::report::{
    emit_svg_heatmap, fmt9, read_matrix_csv, write_histogram_csv, write_importance_csv,
    write_matrix_csv, write_report_text, HeatmapData, Scale,
};

use crate::commands::{ensure_parent_dir, load_dataset, output_meta, select_split, DATA_KEYS};
use crate::config::{CliResult, RunConfig};

fn parse_scale(cfg: &RunConfig) -> CliResult<Scale> {
    match cfg.str_or("scale", "linear") {
        "linear" => Ok(Scale::Linear),
        "signed-log" => Ok(Scale::SignedLog),
        other => Err(Error::Config(format!("unknown scale {other:?}")).into()),
    }
}

fn parse_word_mode(cfg: &RunConfig) -> CliResult<WordMode> {
    match cfg.str_or("mode", "delete") {
        "delete" => Ok(WordMode::Delete),
        "zero" => Ok(WordMode::Zero),
        other => Err(Error::Config(format!("unknown word mode {other:?}")).into()),
    }
}

fn parse_bounds(cfg: &RunConfig) -> CliResult<Option<(f64, f64)>> {
    match (cfg.get("vmin"), cfg.get("vmax")) {
        (None, None) => Ok(None),
        (Some(lo), Some(hi)) => {
            let lo: f64 = lo
                .parse()
                .map_err(|_| Error::Config("bad --vmin".into()))?;
            let hi: f64 = hi
                .parse()
                .map_err(|_| Error::Config("bad --vmax".into()))?;
            Ok(Some((lo, hi)))
        }
        _ => Err(Error::Config("--vmin and --vmax go together".into()).into()),
    }
}

/// Importance of every input dimension (or every unit of one layer).
pub fn importance_cmd(cfg: &RunConfig, threads: usize) -> CliResult<()> {
    let mut allowed = vec![
        "config", "model", "level", "layer", "out", "detail", "report", "heatmap", "matrix",
        "scale", "vmin", "vmax", "seed",
    ];
    allowed.extend_from_slice(DATA_KEYS);
    cfg.restrict(&allowed)?;

    let model = TrainedModel::load(&cfg.path("model")?)?;
    let dataset = load_dataset(cfg)?;
    let selected = select_split(cfg, &dataset)?;
    let reports = match cfg.str_or("level", "dim") {
        "dim" => input_dim_importances(&model, &selected, threads)?,
        "unit" => {
            let layer = cfg.usize_or("layer", 1)?;
            hidden_unit_importances(&model, &selected, layer, threads)?
        }
        other => return Err(Error::Config(format!("unknown level {other:?}")).into()),
    };

    let meta = output_meta("importance", cfg);
    let out = cfg.path("out")?;
    ensure_parent_dir(&out)?;
    write_importance_csv(&out, &reports, &meta)?;
    if let Some(detail) = cfg.opt_path("detail") {
        ensure_parent_dir(&detail)?;
        erasure_lab_core::report::write_detail_csv(&detail, &reports, &meta)?;
    }
    if let Some(report) = cfg.opt_path("report") {
        ensure_parent_dir(&report)?;
        write_report_text(&report, "importance by erasure", &reports, &meta)?;
    }
    let data = HeatmapData {
        row_labels: vec![model.config().architecture.as_str().to_string()],
        col_labels: reports.iter().map(|r| r.target.clone()).collect(),
        matrix: vec![reports.iter().map(|r| r.importance).collect()],
        scale: parse_scale(cfg)?,
    };
    if let Some(svg) = cfg.opt_path("heatmap") {
        ensure_parent_dir(&svg)?;
        emit_svg_heatmap(&data, &svg, &meta, parse_bounds(cfg)?)?;
    }
    if let Some(matrix) = cfg.opt_path("matrix") {
        ensure_parent_dir(&matrix)?;
        write_matrix_csv(&matrix, &data, &meta)?;
    }
    println!("importance: {} targets over {} examples", reports.len(), selected.len());
    Ok(())
}

/// Importance scans of every layer: input dimensions plus each hidden layer.
pub fn layer_importance_cmd(cfg: &RunConfig, threads: usize) -> CliResult<()> {
    let mut allowed = vec![
        "config", "model", "out", "heatmap", "matrix", "scale", "vmin", "vmax", "seed",
    ];
    allowed.extend_from_slice(DATA_KEYS);
    cfg.restrict(&allowed)?;

    let model = TrainedModel::load(&cfg.path("model")?)?;
    let dataset = load_dataset(cfg)?;
    let selected = select_split(cfg, &dataset)?;
    let layers = layer_importance(&model, &selected, threads)?;

    let meta = output_meta("layer-importance", cfg);
    let out = cfg.path("out")?;
    ensure_parent_dir(&out)?;
    let flat: Vec<erasure_lab_core::erasure::ImportanceReport> = layers
        .iter()
        .flat_map(|l| {
            l.reports.iter().cloned().map(|mut r| {
                r.target = format!("{}:{}", l.layer, r.target);
                r
            })
        })
        .collect();
    write_importance_csv(&out, &flat, &meta)?;

    let width = layers.iter().map(|l| l.reports.len()).max().unwrap_or(0);
    let padded: Vec<Vec<f64>> = layers
        .iter()
        .map(|l| {
            let mut row = l.values();
            row.resize(width, 0.0);
            row
        })
        .collect();
    let data = HeatmapData {
        row_labels: layers.iter().map(|l| l.layer.clone()).collect(),
        col_labels: (0..width).map(|i| format!("u{i}")).collect(),
        matrix: padded,
        scale: parse_scale(cfg)?,
    };
    if let Some(svg) = cfg.opt_path("heatmap") {
        ensure_parent_dir(&svg)?;
        emit_svg_heatmap(&data, &svg, &meta, parse_bounds(cfg)?)?;
    }
    if let Some(matrix) = cfg.opt_path("matrix") {
        ensure_parent_dir(&matrix)?;
        write_matrix_csv(&matrix, &data, &meta)?;
    }
    println!(
        "layer-importance: {} layers over {} examples",
        layers.len(),
        selected.len()
    );
    Ok(())
}

/// Word types ranked by mean importance.
pub fn word_ranking_cmd(cfg: &RunConfig, threads: usize) -> CliResult<()> {
    let mut allowed = vec![
        "config",
        "model",
        "out",
        "top",
        "sign",
        "min-support",
        "mode",
        "seed",
    ];
    allowed.extend_from_slice(DATA_KEYS);
    cfg.restrict(&allowed)?;

    let model = TrainedModel::load(&cfg.path("model")?)?;
    let dataset = load_dataset(cfg)?;
    let selected = select_split(cfg, &dataset)?;
    let sign = match cfg.str_or("sign", "positive") {
        "positive" => RankingSign::Positive,
        "negative" => RankingSign::Negative,
        other => return Err(Error::Config(format!("unknown sign {other:?}")).into()),
    };
    let ranked = word_type_ranking(
        &model,
        &selected,
        cfg.usize_or("top", 10)?,
        sign,
        cfg.usize_or("min-support", 1)?,
        parse_word_mode(cfg)?,
        threads,
    )?;

    let meta = output_meta("word-ranking", cfg);
    let out = cfg.path("out")?;
    ensure_parent_dir(&out)?;
    let mut body = meta.comment_block("# ");
    body.push_str("rank,token,I,support\n");
    for (i, r) in ranked.iter().enumerate() {
        body.push_str(&format!(
            "{},{},{},{}\n",
            i + 1,
            r.token,
            fmt9(r.importance),
            r.support
        ));
    }
    std::fs::write(&out, body).map_err(Error::Io)?;
    for (i, r) in ranked.iter().enumerate() {
        println!("{:>3}  {:<16} {:>14}  n={}", i + 1, r.token, fmt9(r.importance), r.support);
    }
    Ok(())
}

/// Histogram of word-type importances.
pub fn histogram_cmd(cfg: &RunConfig, threads: usize) -> CliResult<()> {
    let mut allowed = vec!["config", "model", "out", "edges", "mode", "min-support", "seed"];
    allowed.extend_from_slice(DATA_KEYS);
    cfg.restrict(&allowed)?;

    let model = TrainedModel::load(&cfg.path("model")?)?;
    let dataset = load_dataset(cfg)?;
    let selected = select_split(cfg, &dataset)?;
    let raw = cfg.str_or("edges", "-2,-1,-0.5,0,0.5,1,2");
    let edges: Vec<f64> = raw
        .split(',')
        .map(|p| p.trim().parse())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::Config(format!("bad --edges value {raw:?}")))?;
    let min_support = cfg.usize_or("min-support", 1)?;
    let reports: Vec<_> = word_type_reports(&model, &selected, parse_word_mode(cfg)?, threads)?
        .into_iter()
        .filter(|r| r.n_examples >= min_support)
        .collect();
    let counts = importance_histogram(&reports, &edges)?;

    let meta = output_meta("histogram", cfg);
    let out = cfg.path("out")?;
    ensure_parent_dir(&out)?;
    write_histogram_csv(&out, &edges, &counts, &meta)?;
    println!(
        "histogram: {} word types into {} buckets",
        reports.len(),
        counts.len()
    );
    Ok(())
}

/// Least-squares fit of log frequency against one embedding dimension.
pub fn freq_corr_cmd(cfg: &RunConfig) -> CliResult<()> {
    let mut allowed = vec!["config", "embeddings", "dim", "out", "seed"];
    allowed.extend_from_slice(DATA_KEYS);
    cfg.restrict(&allowed)?;

    let table = load_text_embeddings(&cfg.path("embeddings")?, None)?;
    let dataset = load_dataset(cfg)?;
    let mut log_frequencies = Vec::new();
    for ex in &dataset.examples {
        if let (Some(erasure_lab_core::data::Gold::Value(v)), 1) = (ex.gold, ex.tokens.len()) {
            log_frequencies.push((ex.tokens[0].clone(), v));
        }
    }
    let dim = cfg.usize_or("dim", 0)?;
    let fit = frequency_correlation(&table, dim, &log_frequencies)?;
    let line = format!(
        "freq-corr: dim {dim} slope {} intercept {} r_squared {} n {}",
        fmt9(fit.slope),
        fmt9(fit.intercept),
        fmt9(fit.r_squared),
        fit.n
    );
    println!("{line}");
    if let Some(out) = cfg.opt_path("out") {
        ensure_parent_dir(&out)?;
        write_report_text(&out, &line, &[], &output_meta("freq-corr", cfg))?;
    }
    Ok(())
}

/// Re-renders a matrix CSV as an SVG heatmap.
pub fn render_cmd(cfg: &RunConfig) -> CliResult<()> {
    cfg.restrict(&["config", "csv", "svg", "scale", "vmin", "vmax", "seed"])?;
    let data = read_matrix_csv(&cfg.path("csv")?, parse_scale(cfg)?)?;
    let svg = cfg.path("svg")?;
    ensure_parent_dir(&svg)?;
    emit_svg_heatmap(&data, &svg, &output_meta("render", cfg), parse_bounds(cfg)?)?;
    println!(
        "render: {}x{} matrix -> {}",
        data.row_labels.len(),
        data.col_labels.len(),
        svg.display()
    );
    Ok(())
}
