//! The model zoo: window-MLP tagger and RNN / LSTM / Bi-LSTM sequence
//! classifiers, each with a classifier or regression head, plus training
//! with early stopping and erasure-aware forward passes.
//!
//! A [`TrainedModel`] is immutable: analyses evaluate it concurrently
//! without synchronization.

mod forward;
pub(crate) mod io;

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::{Dataset, Example, Gold, TaskKind};
use crate::embeddings::{erase_dimension, EmbeddingTable, PAD_INDEX};
use crate::erasure::{ErasureLevel, ErasureSpec, WordMode};
use crate::error::{Error, Result};
use crate::tensor::{softmax_nll_value, NodeId, Tape, Tensor, PROB_FLOOR};

use forward::{mlp_output, seq_output, unit_mask, Ctx, DropoutSampler, PlainCtx, TapeCtx, UnitMasks};

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Architecture {
    WindowMlp,
    Rnn,
    Lstm,
    BiLstm,
}

impl Architecture {
    pub fn as_str(&self) -> &'static str {
        match self {
            Architecture::WindowMlp => "window_mlp",
            Architecture::Rnn => "rnn",
            Architecture::Lstm => "lstm",
            Architecture::BiLstm => "bilstm",
        }
    }

    pub fn is_sequence(&self) -> bool {
        !matches!(self, Architecture::WindowMlp)
    }
}

impl std::str::FromStr for Architecture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "window_mlp" => Ok(Architecture::WindowMlp),
            "rnn" => Ok(Architecture::Rnn),
            "lstm" => Ok(Architecture::Lstm),
            "bilstm" => Ok(Architecture::BiLstm),
            other => Err(Error::Config(format!("unknown architecture {other:?}"))),
        }
    }
}

/// Output head: `K` softmax logits or a single scalar.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Head {
    Classifier(usize),
    Regressor,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerConfig {
    pub step_size: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub clip_norm: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            step_size: 1e-3,
            batch_size: 32,
            max_epochs: 50,
            patience: 5,
            clip_norm: 5.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub architecture: Architecture,
    pub embedding_dim: usize,
    pub hidden_size: usize,
    /// Number of tanh layers between input and head (window model only).
    pub intermediate_layers: usize,
    /// Window width in tokens (window model only). Must be odd.
    pub window: usize,
    pub head: Head,
    pub dropout_prob: f64,
    pub seed: u64,
    pub optimizer: OptimizerConfig,
}

impl ModelConfig {
    pub fn new(architecture: Architecture, embedding_dim: usize, head: Head) -> Self {
        ModelConfig {
            architecture,
            embedding_dim,
            hidden_size: 50,
            intermediate_layers: 2,
            window: 5,
            head,
            dropout_prob: 0.0,
            seed: 0,
            optimizer: OptimizerConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden_size < 1 {
            return Err(Error::Config("hidden_size must be at least 1".into()));
        }
        if self.embedding_dim < 1 {
            return Err(Error::Config("embedding_dim must be at least 1".into()));
        }
        if let Head::Classifier(k) = self.head {
            if k < 2 {
                return Err(Error::Config(format!("classifier needs K >= 2, got {k}")));
            }
        }
        if !(0.0..1.0).contains(&self.dropout_prob) {
            return Err(Error::Config(format!(
                "dropout_prob must lie in [0, 1), got {}",
                self.dropout_prob
            )));
        }
        if self.architecture == Architecture::WindowMlp {
            if self.window.is_multiple_of(2) || self.window == 0 {
                return Err(Error::Config(format!("window must be odd, got {}", self.window)));
            }
            if self.intermediate_layers < 1 {
                return Err(Error::Config("need at least one intermediate layer".into()));
            }
        }
        Ok(())
    }

    /// Width of the representation the head consumes.
    pub fn rep_dim(&self) -> usize {
        match self.architecture {
            Architecture::BiLstm => 2 * self.hidden_size,
            Architecture::WindowMlp | Architecture::Rnn | Architecture::Lstm => self.hidden_size,
        }
    }

    fn head_width(&self) -> usize {
        match self.head {
            Head::Classifier(k) => k,
            Head::Regressor => 1,
        }
    }
}

/// Named parameter tensors with deterministic iteration order.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct Params {
    map: BTreeMap<String, Tensor>,
}

impl Params {
    pub fn insert(&mut self, name: &str, t: Tensor) {
        self.map.insert(name.to_string(), t);
    }

    pub fn get(&self, name: &str) -> &Tensor {
        self.map
            .get(name)
            .unwrap_or_else(|| panic!("missing parameter {name}"))
    }

    pub fn get_mut(&mut self, name: &str) -> &mut Tensor {
        self.map
            .get_mut(name)
            .unwrap_or_else(|| panic!("missing parameter {name}"))
    }

    pub fn remove(&mut self, name: &str) -> Option<Tensor> {
        self.map.remove(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.map.contains_key(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.map.iter()
    }

    pub fn names(&self) -> Vec<String> {
        self.map.keys().cloned().collect()
    }

    pub fn all_finite(&self) -> bool {
        self.map.values().all(|t| t.is_finite())
    }
}

/// Classifier output: label plus the full probability simplex.
#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub label: usize,
    pub probabilities: Vec<f64>,
}

impl Prediction {
    fn from_logits(logits: &Tensor) -> Prediction {
        let probs = logits.softmax();
        Prediction {
            label: probs.argmax(),
            probabilities: probs.values().to_vec(),
        }
    }

    /// Negative log-probability the model assigns to `class`.
    pub fn nll_of(&self, class: usize) -> Result<f64> {
        let p = self.probabilities.get(class).ok_or_else(|| {
            Error::Index(format!(
                "class {class} out of range for {} classes",
                self.probabilities.len()
            ))
        })?;
        Ok(-(p.max(PROB_FLOOR)).ln())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ModelOutput {
    Classification(Prediction),
    Regression(f64),
}

impl ModelOutput {
    pub fn into_prediction(self) -> Result<Prediction> {
        match self {
            ModelOutput::Classification(p) => Ok(p),
            ModelOutput::Regression(_) => {
                Err(Error::Contract("expected a classifier output".into()))
            }
        }
    }
}

/// Architecture config, trained parameters, and the vocabulary binding.
/// Immutable once training completes.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainedModel {
    config: ModelConfig,
    params: Params,
    embedding: EmbeddingTable,
    format_version: u32,
}

/// One scorable unit: a full sequence, or one window position of a
/// tagging sentence.
#[derive(Clone, Debug)]
pub struct InstanceRef<'a> {
    pub id: String,
    pub example: &'a Example,
    /// Window center; `None` for sequence instances.
    pub center: Option<usize>,
    pub gold: Gold,
}

/// Expands a dataset into the instances a given architecture consumes.
pub fn dataset_instances<'a>(
    architecture: Architecture,
    dataset: &'a Dataset,
) -> Result<Vec<InstanceRef<'a>>> {
    let mut out = Vec::new();
    match (architecture, dataset.task_kind) {
        (Architecture::WindowMlp, TaskKind::Tagging) => {
            for ex in &dataset.examples {
                let tags = ex.per_token_tags.as_ref().ok_or_else(|| {
                    Error::Contract(format!("tagging example {} has no tags", ex.id))
                })?;
                for (pos, tag) in tags.iter().enumerate() {
                    out.push(InstanceRef {
                        id: format!("{}#{pos}", ex.id),
                        example: ex,
                        center: Some(pos),
                        gold: Gold::Class(*tag),
                    });
                }
            }
        }
        (Architecture::WindowMlp, TaskKind::WordClassification)
        | (Architecture::WindowMlp, TaskKind::WordRegression) => {
            for ex in &dataset.examples {
                let gold = ex.gold.ok_or_else(|| {
                    Error::Contract(format!("example {} has no gold target", ex.id))
                })?;
                out.push(InstanceRef {
                    id: ex.id.clone(),
                    example: ex,
                    center: Some(0),
                    gold,
                });
            }
        }
        (Architecture::WindowMlp, TaskKind::TextClassification) => {
            return Err(Error::Config(
                "the window model does not consume text classification data; use a sequence architecture".into(),
            ));
        }
        (_, TaskKind::Tagging) => {
            return Err(Error::Config(
                "sequence architectures do not consume tagging data; use the window model".into(),
            ));
        }
        (_, _) => {
            for ex in &dataset.examples {
                let gold = ex.gold.ok_or_else(|| {
                    Error::Contract(format!("example {} has no gold target", ex.id))
                })?;
                out.push(InstanceRef {
                    id: ex.id.clone(),
                    example: ex,
                    center: None,
                    gold,
                });
            }
        }
    }
    Ok(out)
}

/// Word erasure resolved against one concrete token sequence.
enum WordErasure {
    None,
    Delete(BTreeSet<usize>),
    Zero(BTreeSet<usize>),
}

struct ResolvedErasure {
    input_dims: BTreeSet<usize>,
    unit_masks: UnitMasks,
    words: WordErasure,
}

impl TrainedModel {
    /// Assembles a model from parts (used by loading and by tests that
    /// need hand-built weights).
    pub fn from_parts(
        config: ModelConfig,
        params: Params,
        embedding: EmbeddingTable,
    ) -> Result<TrainedModel> {
        config.validate()?;
        if embedding.dim() != config.embedding_dim {
            return Err(Error::Dimension(format!(
                "embedding table dim {} differs from config dim {}",
                embedding.dim(),
                config.embedding_dim
            )));
        }
        if !params.all_finite() {
            return Err(Error::Contract("model parameters must be finite".into()));
        }
        Ok(TrainedModel {
            config,
            params,
            embedding,
            format_version: MODEL_FORMAT_VERSION,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &Params {
        &self.params
    }

    pub fn embedding(&self) -> &EmbeddingTable {
        &self.embedding
    }

    pub fn format_version(&self) -> u32 {
        self.format_version
    }

    fn resolve(&self, tokens: &[String], erasure: Option<&ErasureSpec>) -> Result<ResolvedErasure> {
        let mut resolved = ResolvedErasure {
            input_dims: BTreeSet::new(),
            unit_masks: UnitMasks::new(),
            words: WordErasure::None,
        };
        let Some(spec) = erasure else {
            return Ok(resolved);
        };
        match &spec.level {
            ErasureLevel::InputDim(d) => {
                if *d >= self.config.embedding_dim {
                    return Err(Error::Index(format!(
                        "input dimension {d} out of range for embedding dim {}",
                        self.config.embedding_dim
                    )));
                }
                resolved.input_dims.insert(*d);
            }
            ErasureLevel::HiddenUnit { layer, unit } => {
                let max_layer = match self.config.architecture {
                    Architecture::WindowMlp => self.config.intermediate_layers,
                    Architecture::Rnn | Architecture::Lstm => 1,
                    Architecture::BiLstm => 2,
                };
                if *layer < 1 || *layer > max_layer {
                    return Err(Error::Index(format!(
                        "layer {layer} out of range 1..={max_layer} for {}",
                        self.config.architecture.as_str()
                    )));
                }
                if *unit >= self.config.hidden_size {
                    return Err(Error::Index(format!(
                        "unit {unit} out of range for hidden size {}",
                        self.config.hidden_size
                    )));
                }
                resolved
                    .unit_masks
                    .insert(*layer, unit_mask(self.config.hidden_size, *unit));
            }
            ErasureLevel::WordPositions(positions) => {
                if self.config.architecture == Architecture::WindowMlp {
                    return Err(Error::Config(
                        "word erasure requires a sequence architecture".into(),
                    ));
                }
                for p in positions {
                    if *p >= tokens.len() {
                        return Err(Error::Index(format!(
                            "word position {p} out of range for {} tokens",
                            tokens.len()
                        )));
                    }
                }
                resolved.words = match spec.word_mode {
                    WordMode::Delete => WordErasure::Delete(positions.clone()),
                    WordMode::Zero => WordErasure::Zero(positions.clone()),
                };
            }
            ErasureLevel::WordType(token) => {
                if self.config.architecture == Architecture::WindowMlp {
                    return Err(Error::Config(
                        "word erasure requires a sequence architecture".into(),
                    ));
                }
                let positions: BTreeSet<usize> = tokens
                    .iter()
                    .enumerate()
                    .filter(|(_, t)| *t == token)
                    .map(|(i, _)| i)
                    .collect();
                resolved.words = match spec.word_mode {
                    WordMode::Delete => WordErasure::Delete(positions),
                    WordMode::Zero => WordErasure::Zero(positions),
                };
            }
        }
        Ok(resolved)
    }

    fn sequence_inputs(
        &self,
        tokens: &[String],
        resolved: &ResolvedErasure,
    ) -> Result<Vec<Tensor>> {
        let dim = self.config.embedding_dim;
        let mut inputs = Vec::with_capacity(tokens.len());
        for (pos, token) in tokens.iter().enumerate() {
            match &resolved.words {
                WordErasure::Delete(gone) if gone.contains(&pos) => continue,
                WordErasure::Zero(zeroed) if zeroed.contains(&pos) => {
                    inputs.push(Tensor::zeros(vec![dim]));
                    continue;
                }
                _ => {}
            }
            let v = self.embedding.vector_of(token);
            inputs.push(if resolved.input_dims.is_empty() {
                v
            } else {
                erase_dimension(&v, &resolved.input_dims, dim)?
            });
        }
        if inputs.is_empty() {
            return Err(Error::Contract(
                "sequence is empty after word deletion".into(),
            ));
        }
        Ok(inputs)
    }

    /// Erasure-aware forward pass for sequence architectures.
    pub fn forward_sequence(
        &self,
        tokens: &[String],
        erasure: Option<&ErasureSpec>,
    ) -> Result<ModelOutput> {
        if !self.config.architecture.is_sequence() {
            return Err(Error::Config(
                "forward_sequence requires a sequence architecture".into(),
            ));
        }
        if tokens.is_empty() {
            return Err(Error::Contract("cannot classify an empty sequence".into()));
        }
        let resolved = self.resolve(tokens, erasure)?;
        let inputs = self.sequence_inputs(tokens, &resolved)?;
        let mut ctx = PlainCtx { params: &self.params };
        let handles: Vec<_> = inputs.into_iter().map(|t| ctx.constant(t)).collect();
        let mut dropout = DropoutSampler::inference();
        let out = seq_output(
            &mut ctx,
            &self.config,
            &handles,
            &resolved.unit_masks,
            &mut dropout,
            false,
        );
        let logits = ctx.tensor(&out.head_out);
        self.output_from_logits(&logits)
    }

    /// Erasure-aware forward pass for the window model at one position.
    pub fn forward_window(
        &self,
        tokens: &[String],
        center: usize,
        erasure: Option<&ErasureSpec>,
    ) -> Result<ModelOutput> {
        if self.config.architecture != Architecture::WindowMlp {
            return Err(Error::Config(
                "forward_window requires the window architecture".into(),
            ));
        }
        let resolved = self.resolve(tokens, erasure)?;
        let ids: Vec<usize> = tokens
            .iter()
            .map(|t| self.embedding.vocab().index_or_unknown(t))
            .collect();
        let mut feature = self
            .embedding
            .window_features(&ids, center, self.config.window)?;
        if !resolved.input_dims.is_empty() {
            feature = erase_dimension(&feature, &resolved.input_dims, self.config.embedding_dim)?;
        }
        let mut ctx = PlainCtx { params: &self.params };
        let fh = ctx.constant(feature);
        let mut dropout = DropoutSampler::inference();
        let out = mlp_output(&mut ctx, &self.config, fh, &resolved.unit_masks, &mut dropout);
        let logits = ctx.tensor(&out);
        self.output_from_logits(&logits)
    }

    fn output_from_logits(&self, logits: &Tensor) -> Result<ModelOutput> {
        Ok(match self.config.head {
            Head::Classifier(_) => ModelOutput::Classification(Prediction::from_logits(logits)),
            Head::Regressor => ModelOutput::Regression(logits.item()),
        })
    }

    /// Forward pass for one instance (window or sequence as appropriate).
    pub fn instance_output(
        &self,
        inst: &InstanceRef,
        erasure: Option<&ErasureSpec>,
    ) -> Result<ModelOutput> {
        match inst.center {
            Some(c) => self.forward_window(&inst.example.tokens, c, erasure),
            None => self.forward_sequence(&inst.example.tokens, erasure),
        }
    }

    /// The per-example score `S`: the negative log-likelihood of the gold
    /// label for classifiers, the squared error for regressors. Both are
    /// nonnegative and drop to zero as the model gets the answer right.
    pub fn instance_nll(&self, inst: &InstanceRef, erasure: Option<&ErasureSpec>) -> Result<f64> {
        let resolved_logits = match inst.center {
            Some(c) => self.raw_logits_window(&inst.example.tokens, c, erasure)?,
            None => self.raw_logits_sequence(&inst.example.tokens, erasure)?,
        };
        match (self.config.head, inst.gold) {
            (Head::Classifier(_), Gold::Class(c)) => softmax_nll_value(&resolved_logits, c),
            (Head::Regressor, Gold::Value(v)) => {
                let d = resolved_logits.item() - v;
                Ok(d * d)
            }
            (head, gold) => Err(Error::Contract(format!(
                "gold target {gold:?} does not match head {head:?}"
            ))),
        }
    }

    fn raw_logits_sequence(
        &self,
        tokens: &[String],
        erasure: Option<&ErasureSpec>,
    ) -> Result<Tensor> {
        if tokens.is_empty() {
            return Err(Error::Contract("cannot score an empty sequence".into()));
        }
        let resolved = self.resolve(tokens, erasure)?;
        let inputs = self.sequence_inputs(tokens, &resolved)?;
        let mut ctx = PlainCtx { params: &self.params };
        let handles: Vec<_> = inputs.into_iter().map(|t| ctx.constant(t)).collect();
        let mut dropout = DropoutSampler::inference();
        let out = seq_output(
            &mut ctx,
            &self.config,
            &handles,
            &resolved.unit_masks,
            &mut dropout,
            false,
        );
        Ok(ctx.tensor(&out.head_out))
    }

    fn raw_logits_window(
        &self,
        tokens: &[String],
        center: usize,
        erasure: Option<&ErasureSpec>,
    ) -> Result<Tensor> {
        let resolved = self.resolve(tokens, erasure)?;
        let ids: Vec<usize> = tokens
            .iter()
            .map(|t| self.embedding.vocab().index_or_unknown(t))
            .collect();
        let mut feature = self
            .embedding
            .window_features(&ids, center, self.config.window)?;
        if !resolved.input_dims.is_empty() {
            feature = erase_dimension(&feature, &resolved.input_dims, self.config.embedding_dim)?;
        }
        let mut ctx = PlainCtx { params: &self.params };
        let fh = ctx.constant(feature);
        let mut dropout = DropoutSampler::inference();
        let out = mlp_output(&mut ctx, &self.config, fh, &resolved.unit_masks, &mut dropout);
        Ok(ctx.tensor(&out))
    }

    /// The model's own label for a sequence (no erasure).
    pub fn label_of(&self, tokens: &[String]) -> Result<usize> {
        Ok(self.forward_sequence(tokens, None)?.into_prediction()?.label)
    }

    /// The representation the head consumes: the final hidden state, or
    /// the concatenation of the final forward and backward states.
    pub fn sequence_representation(&self, tokens: &[String]) -> Result<Tensor> {
        let reps = self.token_representations(tokens)?;
        match self.config.architecture {
            Architecture::BiLstm => {
                // final forward state || final backward state
                let n = reps.len();
                let h = self.config.hidden_size;
                let fwd_last = &reps[n - 1].values()[..h];
                let bwd_last = &reps[0].values()[h..];
                let mut values = Vec::with_capacity(2 * h);
                values.extend_from_slice(fwd_last);
                values.extend_from_slice(bwd_last);
                Ok(Tensor::vector(values))
            }
            _ => Ok(reps.last().unwrap().clone()),
        }
    }

    /// Per-token representations for sequence models: the hidden state at
    /// each step, or the concatenated directional states for the Bi-LSTM.
    pub fn token_representations(&self, tokens: &[String]) -> Result<Vec<Tensor>> {
        if !self.config.architecture.is_sequence() {
            return Err(Error::Config(
                "token representations require a sequence architecture".into(),
            ));
        }
        if tokens.is_empty() {
            return Err(Error::Contract("empty sequence".into()));
        }
        let resolved = ResolvedErasure {
            input_dims: BTreeSet::new(),
            unit_masks: UnitMasks::new(),
            words: WordErasure::None,
        };
        let inputs = self.sequence_inputs(tokens, &resolved)?;
        let mut ctx = PlainCtx { params: &self.params };
        let handles: Vec<_> = inputs.into_iter().map(|t| ctx.constant(t)).collect();
        let mut dropout = DropoutSampler::inference();
        let out = seq_output(
            &mut ctx,
            &self.config,
            &handles,
            &resolved.unit_masks,
            &mut dropout,
            true,
        );
        Ok(out.reps.iter().map(|h| ctx.tensor(h)).collect())
    }
}

// ---------------------------------------------------------------------------
// Parameter initialization

pub(crate) fn init_params(config: &ModelConfig, rng: &mut ChaCha8Rng) -> Params {
    let mut params = Params::default();
    let mut init_matrix = |params: &mut Params, rng: &mut ChaCha8Rng, name: &str, rows: usize, cols: usize| {
        let bound = 1.0 / (cols as f64).sqrt();
        let values = (0..rows * cols)
            .map(|_| rng.gen_range(-bound..bound))
            .collect();
        params.insert(name, Tensor::matrix(rows, cols, values).unwrap());
    };
    let h = config.hidden_size;
    let d = config.embedding_dim;
    match config.architecture {
        Architecture::WindowMlp => {
            let mut fan_in = config.window * d;
            for layer in 1..=config.intermediate_layers {
                init_matrix(&mut params, rng, &format!("mlp.w{layer}"), h, fan_in);
                params.insert(&format!("mlp.b{layer}"), Tensor::zeros(vec![h]));
                fan_in = h;
            }
        }
        Architecture::Rnn => {
            init_matrix(&mut params, rng, "rnn.wx", h, d);
            init_matrix(&mut params, rng, "rnn.wh", h, h);
            params.insert("rnn.b", Tensor::zeros(vec![h]));
        }
        Architecture::Lstm => init_lstm_params(&mut init_matrix, &mut params, rng, "lstm", h, d),
        Architecture::BiLstm => {
            init_lstm_params(&mut init_matrix, &mut params, rng, "fwd", h, d);
            init_lstm_params(&mut init_matrix, &mut params, rng, "bwd", h, d);
        }
    }
    init_matrix(&mut params, rng, "head.w", config.head_width(), config.rep_dim());
    params.insert("head.b", Tensor::zeros(vec![config.head_width()]));
    params
}

fn init_lstm_params(
    init_matrix: &mut impl FnMut(&mut Params, &mut ChaCha8Rng, &str, usize, usize),
    params: &mut Params,
    rng: &mut ChaCha8Rng,
    prefix: &str,
    h: usize,
    d: usize,
) {
    for gate in ["i", "f", "o", "c"] {
        init_matrix(params, rng, &format!("{prefix}.{gate}.wx"), h, d);
        init_matrix(params, rng, &format!("{prefix}.{gate}.wh"), h, h);
        // Forget gate opens at init so gradients flow through long sequences.
        let bias = if gate == "f" { 1.0 } else { 0.0 };
        params.insert(
            &format!("{prefix}.{gate}.b"),
            Tensor::vector(vec![bias; h]),
        );
    }
}

// ---------------------------------------------------------------------------
// Traced loss (training and gradient checks share this path)

#[allow(clippy::too_many_arguments)]
fn traced_instance_loss(
    tape: &mut Tape,
    param_ids: &BTreeMap<String, NodeId>,
    config: &ModelConfig,
    embedding: &EmbeddingTable,
    tokens: &[String],
    center: Option<usize>,
    gold: Gold,
    dropout: &mut DropoutSampler,
) -> Result<NodeId> {
    let trainable = param_ids.contains_key("embedding");
    let head_out = {
        let mut ctx = TapeCtx { tape, params: param_ids };
        match center {
            Some(c) => {
                let ids: Vec<usize> = tokens
                    .iter()
                    .map(|t| embedding.vocab().index_or_unknown(t))
                    .collect();
                let feature = if trainable {
                    let emb = ctx.param("embedding");
                    let half = (config.window / 2) as isize;
                    let mut slots = Vec::with_capacity(config.window);
                    for off in -half..=half {
                        let pos = c as isize + off;
                        let idx = if pos < 0 || pos as usize >= ids.len() {
                            PAD_INDEX
                        } else {
                            ids[pos as usize]
                        };
                        slots.push(ctx.row(&emb, idx));
                    }
                    ctx.concat(&slots)
                } else {
                    let f = embedding.window_features(&ids, c, config.window)?;
                    ctx.constant(f)
                };
                mlp_output(&mut ctx, config, feature, &UnitMasks::new(), dropout)
            }
            None => {
                if tokens.is_empty() {
                    return Err(Error::Contract("cannot train on an empty sequence".into()));
                }
                let inputs: Vec<NodeId> = if trainable {
                    let emb = ctx.param("embedding");
                    tokens
                        .iter()
                        .map(|t| ctx.row(&emb, embedding.vocab().index_or_unknown(t)))
                        .collect()
                } else {
                    tokens
                        .iter()
                        .map(|t| ctx.constant(embedding.vector_of(t)))
                        .collect()
                };
                seq_output(&mut ctx, config, &inputs, &UnitMasks::new(), dropout, false).head_out
            }
        }
    };
    match gold {
        Gold::Class(c) => tape.softmax_nll(head_out, c),
        Gold::Value(v) => tape.mse(head_out, v),
    }
}

/// Builds the training loss of one instance on a caller-provided tape
/// whose leaves carry the parameter values. This is the hook gradient
/// checks use to compare the analytic path against finite differences.
#[allow(clippy::too_many_arguments)]
pub fn instance_loss_on_tape(
    config: &ModelConfig,
    embedding: &EmbeddingTable,
    names: &[String],
    tape: &mut Tape,
    leaves: &[NodeId],
    tokens: &[String],
    center: Option<usize>,
    gold: Gold,
) -> Result<NodeId> {
    if names.len() != leaves.len() {
        return Err(Error::Contract("names and leaves differ in length".into()));
    }
    let param_ids: BTreeMap<String, NodeId> = names
        .iter()
        .cloned()
        .zip(leaves.iter().copied())
        .collect();
    let mut dropout = DropoutSampler::inference();
    traced_instance_loss(
        tape,
        &param_ids,
        config,
        embedding,
        tokens,
        center,
        gold,
        &mut dropout,
    )
}

// ---------------------------------------------------------------------------
// Training

pub(crate) struct Adam {
    step_size: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: i32,
    m: BTreeMap<String, Vec<f64>>,
    v: BTreeMap<String, Vec<f64>>,
}

impl Adam {
    pub(crate) fn new(step_size: f64) -> Self {
        Adam {
            step_size,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: BTreeMap::new(),
            v: BTreeMap::new(),
        }
    }

    pub(crate) fn step(
        &mut self,
        params: &mut Params,
        grads: &BTreeMap<String, Tensor>,
        clip_norm: f64,
    ) {
        let total: f64 = grads.values().map(|g| g.values().iter().map(|v| v * v).sum::<f64>()).sum();
        let norm = total.sqrt();
        let scale = if clip_norm > 0.0 && norm > clip_norm {
            clip_norm / norm
        } else {
            1.0
        };
        self.t += 1;
        let bias1 = 1.0 - self.beta1.powi(self.t);
        let bias2 = 1.0 - self.beta2.powi(self.t);
        for (name, grad) in grads {
            let p = params.get_mut(name);
            let m = self
                .m
                .entry(name.clone())
                .or_insert_with(|| vec![0.0; grad.numel()]);
            let v = self
                .v
                .entry(name.clone())
                .or_insert_with(|| vec![0.0; grad.numel()]);
            for (i, g) in grad.values().iter().enumerate() {
                let g = g * scale;
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g;
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g * g;
                let m_hat = m[i] / bias1;
                let v_hat = v[i] / bias2;
                p.values_mut()[i] -= self.step_size * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
    }
}

/// Accuracy (classifiers) or mean squared error (regressors) over a
/// dataset.
#[derive(Clone, Debug)]
pub struct EvalReport {
    pub accuracy: Option<f64>,
    pub mse: Option<f64>,
    pub n: usize,
}

pub fn evaluate(model: &TrainedModel, dataset: &Dataset) -> Result<EvalReport> {
    let instances = dataset_instances(model.config.architecture, dataset)?;
    if instances.is_empty() {
        return Err(Error::EmptyPopulation("evaluation set has no instances".into()));
    }
    match model.config.head {
        Head::Classifier(_) => {
            let mut correct = 0usize;
            for inst in &instances {
                let got = model.instance_output(inst, None)?.into_prediction()?.label;
                let Gold::Class(want) = inst.gold else {
                    return Err(Error::Contract("classifier needs class golds".into()));
                };
                if got == want {
                    correct += 1;
                }
            }
            Ok(EvalReport {
                accuracy: Some(correct as f64 / instances.len() as f64),
                mse: None,
                n: instances.len(),
            })
        }
        Head::Regressor => {
            let mut total = 0.0;
            for inst in &instances {
                let ModelOutput::Regression(pred) = model.instance_output(inst, None)? else {
                    unreachable!()
                };
                let Gold::Value(want) = inst.gold else {
                    return Err(Error::Contract("regressor needs value golds".into()));
                };
                total += (pred - want) * (pred - want);
            }
            Ok(EvalReport {
                accuracy: None,
                mse: Some(total / instances.len() as f64),
                n: instances.len(),
            })
        }
    }
}

/// Mini-batch training with early stopping on the dev metric.
///
/// Deterministic given the config seed; dropout (when enabled) draws from
/// the same seeded stream.
pub fn train(
    config: &ModelConfig,
    embedding: &EmbeddingTable,
    train_set: &Dataset,
    dev_set: &Dataset,
) -> Result<TrainedModel> {
    config.validate()?;
    if embedding.dim() != config.embedding_dim {
        return Err(Error::Dimension(format!(
            "embedding table dim {} differs from config dim {}",
            embedding.dim(),
            config.embedding_dim
        )));
    }
    if train_set.is_empty() || dev_set.is_empty() {
        return Err(Error::Config("training and dev sets must be non-empty".into()));
    }
    if let Head::Classifier(k) = config.head {
        if !train_set.task_kind.is_classification() {
            return Err(Error::Config("classifier head on a regression dataset".into()));
        }
        if k != train_set.num_classes() {
            return Err(Error::Config(format!(
                "classifier has {k} classes but the dataset defines {}",
                train_set.num_classes()
            )));
        }
    }
    let instances = dataset_instances(config.architecture, train_set)?;
    if instances.is_empty() {
        return Err(Error::Config("training set produced no instances".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut params = init_params(config, &mut rng);
    let table = embedding.clone();
    if table.trainable {
        params.insert("embedding", table.matrix().clone());
    }

    let mut adam = Adam::new(config.optimizer.step_size);
    let mut order: Vec<usize> = (0..instances.len()).collect();
    let mut best: Option<(f64, Params)> = None;
    let mut epochs_since_improvement = 0usize;

    for epoch in 1..=config.optimizer.max_epochs {
        order.shuffle(&mut rng);
        for (batch_idx, batch) in order.chunks(config.optimizer.batch_size).enumerate() {
            let mut tape = Tape::new();
            let mut param_ids = BTreeMap::new();
            for (name, tensor) in params.iter() {
                param_ids.insert(name.clone(), tape.leaf(tensor.clone()));
            }
            let mut batch_loss: Option<NodeId> = None;
            for &ii in batch {
                let inst = &instances[ii];
                let mut dropout = DropoutSampler::training(config.dropout_prob, &mut rng);
                let loss = traced_instance_loss(
                    &mut tape,
                    &param_ids,
                    config,
                    &table,
                    &inst.example.tokens,
                    inst.center,
                    inst.gold,
                    &mut dropout,
                )?;
                batch_loss = Some(match batch_loss {
                    None => loss,
                    Some(acc) => tape.add(acc, loss)?,
                });
            }
            let total = batch_loss.expect("non-empty batch");
            let mean = tape.scale(total, 1.0 / batch.len() as f64);
            let loss_value = tape.value(mean).item();
            if !loss_value.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    batch: batch_idx,
                    message: format!("loss {loss_value}"),
                });
            }
            let grads = tape.backward(mean)?;
            let mut by_name: BTreeMap<String, Tensor> = BTreeMap::new();
            for (name, id) in &param_ids {
                let mut g = grads.get_or_zeros(*id, tape.value(*id).shape());
                if name == "embedding" {
                    // Padding must remain a true null signal.
                    let dim = config.embedding_dim;
                    for v in &mut g.values_mut()[PAD_INDEX * dim..(PAD_INDEX + 1) * dim] {
                        *v = 0.0;
                    }
                }
                by_name.insert(name.clone(), g);
            }
            adam.step(&mut params, &by_name, config.optimizer.clip_norm);
        }

        // Dev metric with the current parameters (dropout inactive).
        let candidate = model_from_training_state(config, &params, &table)?;
        let report = evaluate(&candidate, dev_set)?;
        let metric = match config.head {
            Head::Classifier(_) => report.accuracy.unwrap(),
            Head::Regressor => -report.mse.unwrap(),
        };
        let improved = best.as_ref().map(|(b, _)| metric > *b).unwrap_or(true);
        if improved {
            best = Some((metric, params.clone()));
            epochs_since_improvement = 0;
        } else {
            epochs_since_improvement += 1;
            if epochs_since_improvement >= config.optimizer.patience {
                break;
            }
        }
    }

    let (_, best_params) = best.expect("at least one epoch ran");
    model_from_training_state(config, &best_params, &table)
}

/// Folds a live parameter set back into an immutable model, moving any
/// fine-tuned embedding matrix into the table.
fn model_from_training_state(
    config: &ModelConfig,
    params: &Params,
    table: &EmbeddingTable,
) -> Result<TrainedModel> {
    let mut params = params.clone();
    let table = match params.remove("embedding") {
        Some(matrix) => table.with_matrix(matrix)?,
        None => table.clone(),
    };
    if !params.all_finite() {
        return Err(Error::Contract("parameters became non-finite".into()));
    }
    TrainedModel::from_parts(config.clone(), params, table)
}
