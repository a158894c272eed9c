//! The importance engine: how much does the model's score for the
//! correct label degrade when a piece of the representation is erased?
//!
//! For an example `e` with gold label `c`, let `S(e,c)` be the negative
//! log-likelihood the model assigns to `c` and `S(e,c,!t)` the same after
//! erasing target `t`. The importance of `t` is the mean over examples of
//!
//! ```text
//! (S(e,c,!t) - S(e,c)) / max(S(e,c), 1e-6)
//! ```
//!
//! so a representation the model relies on gets a positive score (erasing
//! it hurts), and a representation that misleads the model gets a
//! negative score (erasing it helps). Targets are input dimensions,
//! hidden units, word positions, or word types.

use std::collections::{BTreeMap, BTreeSet};

use crate::data::Dataset;
use crate::embeddings::EmbeddingTable;
use crate::error::{Error, Result};
use crate::models::{dataset_instances, InstanceRef, TrainedModel};
use crate::parallel::map_ordered;

/// Denominator floor guarding examples the model is almost certain about.
pub const IMPORTANCE_EPS: f64 = 1e-6;

/// Small constant in the concentration statistic's denominator.
pub const CONCENTRATION_EPS: f64 = 1e-6;

/// How word erasure is realized in the forward pass.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum WordMode {
    /// Remove the tokens from the sequence before unrolling.
    #[default]
    Delete,
    /// Keep the positions but feed zero vectors.
    Zero,
}

/// What to erase.
#[derive(Clone, Debug, PartialEq)]
pub enum ErasureLevel {
    /// Zero one dimension of every word vector feeding the model.
    InputDim(usize),
    /// Force one hidden unit's activation to zero (1-based layer).
    HiddenUnit { layer: usize, unit: usize },
    /// Erase explicit token positions.
    WordPositions(BTreeSet<usize>),
    /// Erase every occurrence of a token.
    WordType(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ErasureSpec {
    pub level: ErasureLevel,
    pub word_mode: WordMode,
}

impl ErasureSpec {
    pub fn input_dim(d: usize) -> Self {
        ErasureSpec {
            level: ErasureLevel::InputDim(d),
            word_mode: WordMode::default(),
        }
    }

    pub fn hidden_unit(layer: usize, unit: usize) -> Self {
        ErasureSpec {
            level: ErasureLevel::HiddenUnit { layer, unit },
            word_mode: WordMode::default(),
        }
    }

    pub fn word_positions(positions: BTreeSet<usize>) -> Self {
        ErasureSpec {
            level: ErasureLevel::WordPositions(positions),
            word_mode: WordMode::default(),
        }
    }

    pub fn word_type(token: impl Into<String>) -> Self {
        ErasureSpec {
            level: ErasureLevel::WordType(token.into()),
            word_mode: WordMode::default(),
        }
    }

    pub fn with_mode(mut self, mode: WordMode) -> Self {
        self.word_mode = mode;
        self
    }

    /// Human-readable target descriptor used in reports.
    pub fn describe(&self) -> String {
        match &self.level {
            ErasureLevel::InputDim(d) => format!("dim:{d}"),
            ErasureLevel::HiddenUnit { layer, unit } => format!("unit:{layer}:{unit}"),
            ErasureLevel::WordPositions(p) => {
                let parts: Vec<String> = p.iter().map(|i| i.to_string()).collect();
                format!("positions:{}", parts.join("+"))
            }
            ErasureLevel::WordType(t) => format!("word:{t}"),
        }
    }
}

/// One example's contribution to an importance score.
#[derive(Clone, Debug, PartialEq)]
pub struct ExampleContribution {
    pub id: String,
    pub s: f64,
    pub s_erased: f64,
    pub contribution: f64,
}

/// Importance of one target with its per-example evidence.
#[derive(Clone, Debug, PartialEq)]
pub struct ImportanceReport {
    pub target: String,
    /// Mean relative score over the scored examples.
    pub importance: f64,
    pub per_example: Vec<ExampleContribution>,
    pub n_examples: usize,
    pub skipped_examples: usize,
}

fn finalize_report(
    target: String,
    mut entries: Vec<ExampleContribution>,
    skipped: usize,
) -> Result<ImportanceReport> {
    if entries.is_empty() {
        return Err(Error::EmptyPopulation(format!(
            "no scorable examples for target {target}"
        )));
    }
    // Summation in id order makes the mean independent of dataset order.
    entries.sort_by(|a, b| a.id.cmp(&b.id));
    let sum: f64 = entries.iter().map(|e| e.contribution).sum();
    let n = entries.len();
    Ok(ImportanceReport {
        target,
        importance: sum / n as f64,
        n_examples: n,
        skipped_examples: skipped,
        per_example: entries,
    })
}

fn contribution(s: f64, s_erased: f64) -> f64 {
    (s_erased - s) / s.max(IMPORTANCE_EPS)
}

/// Would delete-mode word erasure leave this instance with no tokens?
fn erasure_empties(inst: &InstanceRef, spec: &ErasureSpec) -> bool {
    if spec.word_mode != WordMode::Delete {
        return false;
    }
    let n = inst.example.tokens.len();
    match &spec.level {
        ErasureLevel::WordPositions(p) => (0..n).all(|i| p.contains(&i)),
        ErasureLevel::WordType(t) => inst.example.tokens.iter().all(|tok| tok == t),
        _ => false,
    }
}

/// Importance of one target over a gold-labeled dataset.
///
/// Word-type specs score only the examples containing the token and
/// erase every occurrence; examples that would become empty under
/// delete-mode erasure are skipped and counted.
pub fn importance(
    model: &TrainedModel,
    dataset: &Dataset,
    spec: &ErasureSpec,
    threads: usize,
) -> Result<ImportanceReport> {
    if dataset.is_empty() {
        return Err(Error::EmptyPopulation("dataset is empty".into()));
    }
    let instances = dataset_instances(model.config().architecture, dataset)?;
    let filtered: Vec<InstanceRef> = match &spec.level {
        ErasureLevel::WordType(token) => {
            let kept: Vec<InstanceRef> = instances
                .into_iter()
                .filter(|i| i.example.contains_token(token))
                .collect();
            if kept.is_empty() {
                return Err(Error::EmptyPopulation(format!(
                    "no examples contain token {token:?}"
                )));
            }
            kept
        }
        _ => instances,
    };

    let outcomes = map_ordered(
        &filtered,
        threads,
        |_, inst| -> Result<Option<ExampleContribution>> {
            if erasure_empties(inst, spec) {
                return Ok(None);
            }
            let s = model.instance_nll(inst, None)?;
            let s_erased = model.instance_nll(inst, Some(spec))?;
            Ok(Some(ExampleContribution {
                id: inst.id.clone(),
                s,
                s_erased,
                contribution: contribution(s, s_erased),
            }))
        },
    );

    let mut entries = Vec::new();
    let mut skipped = 0usize;
    for o in outcomes {
        match o? {
            Some(e) => entries.push(e),
            None => skipped += 1,
        }
    }
    finalize_report(spec.describe(), entries, skipped)
}

/// Shared-`S` scan over many targets: the unerased score is computed once
/// per instance and reused for every target.
fn importance_scan(
    model: &TrainedModel,
    dataset: &Dataset,
    specs: &[ErasureSpec],
    threads: usize,
) -> Result<Vec<ImportanceReport>> {
    if dataset.is_empty() {
        return Err(Error::EmptyPopulation("dataset is empty".into()));
    }
    let instances = dataset_instances(model.config().architecture, dataset)?;
    let rows = map_ordered(
        &instances,
        threads,
        |_, inst| -> Result<(String, f64, Vec<f64>)> {
            let s = model.instance_nll(inst, None)?;
            let mut erased = Vec::with_capacity(specs.len());
            for spec in specs {
                erased.push(model.instance_nll(inst, Some(spec))?);
            }
            Ok((inst.id.clone(), s, erased))
        },
    );

    let mut per_spec: Vec<Vec<ExampleContribution>> = vec![Vec::new(); specs.len()];
    for row in rows {
        let (id, s, erased) = row?;
        for (k, s_erased) in erased.into_iter().enumerate() {
            per_spec[k].push(ExampleContribution {
                id: id.clone(),
                s,
                s_erased,
                contribution: contribution(s, s_erased),
            });
        }
    }
    specs
        .iter()
        .zip(per_spec)
        .map(|(spec, entries)| finalize_report(spec.describe(), entries, 0))
        .collect()
}

/// Importance of every input dimension, in dimension order.
pub fn input_dim_importances(
    model: &TrainedModel,
    dataset: &Dataset,
    threads: usize,
) -> Result<Vec<ImportanceReport>> {
    let specs: Vec<ErasureSpec> = (0..model.config().embedding_dim)
        .map(ErasureSpec::input_dim)
        .collect();
    importance_scan(model, dataset, &specs, threads)
}

/// Importance of every unit of one hidden layer, in unit order.
pub fn hidden_unit_importances(
    model: &TrainedModel,
    dataset: &Dataset,
    layer: usize,
    threads: usize,
) -> Result<Vec<ImportanceReport>> {
    let specs: Vec<ErasureSpec> = (0..model.config().hidden_size)
        .map(|u| ErasureSpec::hidden_unit(layer, u))
        .collect();
    importance_scan(model, dataset, &specs, threads)
}

/// Which target family a cross-task matrix scans.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MatrixLevel {
    InputDims,
    HiddenUnits { layer: usize },
}

/// Importance matrix: one row per task, one column per dimension/unit.
#[derive(Clone, Debug)]
pub struct ImportanceMatrix {
    pub row_labels: Vec<String>,
    pub col_labels: Vec<String>,
    pub values: Vec<Vec<f64>>,
}

/// Scans the same target family across several task models so the scores
/// can be compared side by side.
pub fn importance_matrix(
    tasks: &[(String, &TrainedModel, &Dataset)],
    level: MatrixLevel,
    threads: usize,
) -> Result<ImportanceMatrix> {
    if tasks.is_empty() {
        return Err(Error::EmptyPopulation("no tasks given".into()));
    }
    let width = match level {
        MatrixLevel::InputDims => {
            let d = tasks[0].1.config().embedding_dim;
            for (name, model, _) in tasks {
                if model.config().embedding_dim != d {
                    return Err(Error::Dimension(format!(
                        "task {name} has embedding dim {}, expected {d}",
                        model.config().embedding_dim
                    )));
                }
            }
            d
        }
        MatrixLevel::HiddenUnits { .. } => {
            let h = tasks[0].1.config().hidden_size;
            for (name, model, _) in tasks {
                if model.config().hidden_size != h {
                    return Err(Error::Dimension(format!(
                        "task {name} has {} hidden units, expected {h}",
                        model.config().hidden_size
                    )));
                }
            }
            h
        }
    };
    let col_labels: Vec<String> = match level {
        MatrixLevel::InputDims => (0..width).map(|d| format!("d{d}")).collect(),
        MatrixLevel::HiddenUnits { .. } => (0..width).map(|u| format!("u{u}")).collect(),
    };
    let mut row_labels = Vec::new();
    let mut values = Vec::new();
    for (name, model, dataset) in tasks {
        let reports = match level {
            MatrixLevel::InputDims => input_dim_importances(model, dataset, threads)?,
            MatrixLevel::HiddenUnits { layer } => {
                hidden_unit_importances(model, dataset, layer, threads)?
            }
        };
        row_labels.push(name.clone());
        values.push(reports.iter().map(|r| r.importance).collect());
    }
    Ok(ImportanceMatrix {
        row_labels,
        col_labels,
        values,
    })
}

/// Importance reports of one identifiable layer.
#[derive(Clone, Debug)]
pub struct LayerImportance {
    pub layer: String,
    pub reports: Vec<ImportanceReport>,
}

impl LayerImportance {
    pub fn values(&self) -> Vec<f64> {
        self.reports.iter().map(|r| r.importance).collect()
    }
}

/// Per-layer unit importances: the input embedding dimensions first, then
/// each hidden layer the architecture exposes. Raw values; log-space
/// projection is a rendering choice.
pub fn layer_importance(
    model: &TrainedModel,
    dataset: &Dataset,
    threads: usize,
) -> Result<Vec<LayerImportance>> {
    use crate::models::Architecture;
    let mut out = Vec::new();
    out.push(LayerImportance {
        layer: "input".into(),
        reports: input_dim_importances(model, dataset, threads)?,
    });
    let layers = match model.config().architecture {
        Architecture::WindowMlp => model.config().intermediate_layers,
        Architecture::Rnn | Architecture::Lstm => 1,
        Architecture::BiLstm => 2,
    };
    for layer in 1..=layers {
        out.push(LayerImportance {
            layer: format!("layer{layer}"),
            reports: hidden_unit_importances(model, dataset, layer, threads)?,
        });
    }
    Ok(out)
}

/// Concentration statistic over a layer's importances: the maximum score
/// relative to the mean absolute score. Large values mean a few targets
/// dominate.
pub fn concentration(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mean_abs = values.iter().map(|v| v.abs()).sum::<f64>() / values.len() as f64;
    max / (mean_abs + CONCENTRATION_EPS)
}

/// Per-word-type importance over every example containing the type.
/// Reports come back in token order.
pub fn word_type_reports(
    model: &TrainedModel,
    dataset: &Dataset,
    word_mode: WordMode,
    threads: usize,
) -> Result<Vec<ImportanceReport>> {
    if dataset.is_empty() {
        return Err(Error::EmptyPopulation("dataset is empty".into()));
    }
    let instances = dataset_instances(model.config().architecture, dataset)?;
    type RowEntry = (String, Option<(f64, f64)>);
    let rows = map_ordered(
        &instances,
        threads,
        |_, inst| -> Result<(String, Vec<RowEntry>)> {
            let s = model.instance_nll(inst, None)?;
            let distinct: BTreeSet<&String> = inst.example.tokens.iter().collect();
            let mut entries: Vec<RowEntry> = Vec::with_capacity(distinct.len());
            for token in distinct {
                let spec = ErasureSpec::word_type(token.clone()).with_mode(word_mode);
                if erasure_empties(inst, &spec) {
                    entries.push((token.clone(), None));
                    continue;
                }
                let s_erased = model.instance_nll(inst, Some(&spec))?;
                entries.push((token.clone(), Some((s, s_erased))));
            }
            Ok((inst.id.clone(), entries))
        },
    );

    let mut by_token: BTreeMap<String, (Vec<ExampleContribution>, usize)> = BTreeMap::new();
    for row in rows {
        let (id, entries) = row?;
        for (token, outcome) in entries {
            let slot = by_token.entry(token).or_default();
            match outcome {
                Some((s, s_erased)) => slot.0.push(ExampleContribution {
                    id: id.clone(),
                    s,
                    s_erased,
                    contribution: contribution(s, s_erased),
                }),
                None => slot.1 += 1,
            }
        }
    }
    by_token
        .into_iter()
        .filter(|(_, (entries, _))| !entries.is_empty())
        .map(|(token, (entries, skipped))| finalize_report(format!("word:{token}"), entries, skipped))
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RankingSign {
    Positive,
    Negative,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RankedWord {
    pub token: String,
    pub importance: f64,
    /// Number of examples the token was scored in.
    pub support: usize,
}

/// Ranks word types by mean importance: descending for
/// [`RankingSign::Positive`], ascending for [`RankingSign::Negative`].
/// Ties break lexicographically.
pub fn word_type_ranking(
    model: &TrainedModel,
    dataset: &Dataset,
    top_k: usize,
    sign: RankingSign,
    min_support: usize,
    word_mode: WordMode,
    threads: usize,
) -> Result<Vec<RankedWord>> {
    let reports = word_type_reports(model, dataset, word_mode, threads)?;
    let mut ranked: Vec<RankedWord> = reports
        .into_iter()
        .filter(|r| r.n_examples >= min_support)
        .map(|r| RankedWord {
            token: r.target.strip_prefix("word:").unwrap_or(&r.target).to_string(),
            importance: r.importance,
            support: r.n_examples,
        })
        .collect();
    ranked.sort_by(|a, b| {
        let ord = match sign {
            RankingSign::Positive => b.importance.partial_cmp(&a.importance).unwrap(),
            RankingSign::Negative => a.importance.partial_cmp(&b.importance).unwrap(),
        };
        ord.then_with(|| a.token.cmp(&b.token))
    });
    ranked.truncate(top_k);
    Ok(ranked)
}

/// Histogram of report scores over half-open buckets `[lo, hi)`, with
/// clamp buckets below the first and above the last edge. The returned
/// counts have length `edges.len() + 1`.
pub fn importance_histogram(reports: &[ImportanceReport], edges: &[f64]) -> Result<Vec<usize>> {
    if edges.is_empty() {
        return Err(Error::Config("histogram needs at least one edge".into()));
    }
    if edges.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config(
            "histogram edges must be strictly increasing".into(),
        ));
    }
    let mut counts = vec![0usize; edges.len() + 1];
    for r in reports {
        let v = r.importance;
        let bucket = edges.iter().position(|e| v < *e).unwrap_or(edges.len());
        counts[bucket] += 1;
    }
    Ok(counts)
}

/// Ordinary least squares fit of log frequency against one embedding
/// dimension's value per word.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FreqFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub n: usize,
}

/// Regresses `log_frequency` on the dimension's per-word value over all
/// words present in both the table and the frequency list.
pub fn frequency_correlation(
    table: &EmbeddingTable,
    dim: usize,
    log_frequencies: &[(String, f64)],
) -> Result<FreqFit> {
    if dim >= table.dim() {
        return Err(Error::Index(format!(
            "dimension {dim} out of range for embedding dim {}",
            table.dim()
        )));
    }
    let mut points: Vec<(f64, f64)> = Vec::new();
    for (token, logf) in log_frequencies {
        if let Some(idx) = table.vocab().index_of(token) {
            if idx >= 2 {
                points.push((table.vector_at(idx).values()[dim], *logf));
            }
        }
    }
    if points.len() < 3 {
        return Err(Error::Config(format!(
            "need at least 3 words with known frequency, found {}",
            points.len()
        )));
    }
    let n = points.len() as f64;
    let mean_x = points.iter().map(|(x, _)| x).sum::<f64>() / n;
    let mean_y = points.iter().map(|(_, y)| y).sum::<f64>() / n;
    let var_x: f64 = points.iter().map(|(x, _)| (x - mean_x) * (x - mean_x)).sum();
    let var_y: f64 = points.iter().map(|(_, y)| (y - mean_y) * (y - mean_y)).sum();
    if var_x == 0.0 || var_y == 0.0 {
        return Err(Error::DegenerateFit(
            "zero variance in regression variable".into(),
        ));
    }
    let cov: f64 = points
        .iter()
        .map(|(x, y)| (x - mean_x) * (y - mean_y))
        .sum();
    let slope = cov / var_x;
    let intercept = mean_y - slope * mean_x;
    let ss_res: f64 = points
        .iter()
        .map(|(x, y)| {
            let pred = slope * x + intercept;
            (y - pred) * (y - pred)
        })
        .sum();
    Ok(FreqFit {
        slope,
        intercept,
        r_squared: 1.0 - ss_res / var_y,
        n: points.len(),
    })
}
