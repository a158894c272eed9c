//! Corpus loaders, synthetic task generators, splits, and sentence
//! segmentation.
//!
//! The generators plant recoverable structure (label-determining
//! dimensions, polarity lexicons with negation scopes, frequency-coded
//! dimensions) so downstream analyses can be validated against a known
//! ground truth instead of full-scale benchmark corpora.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::embeddings::EmbeddingTable;
use crate::error::{Error, Result};

/// Gold target of an example: a class index or a regression value.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Gold {
    Class(usize),
    Value(f64),
}

/// One input unit: a token sequence with its gold target, optional
/// per-token tags, and sentence spans covering the tokens.
#[derive(Clone, Debug, PartialEq)]
pub struct Example {
    pub id: String,
    pub tokens: Vec<String>,
    pub gold: Option<Gold>,
    pub per_token_tags: Option<Vec<usize>>,
    /// Half-open `[start, end)` spans partitioning the token range.
    pub sentence_spans: Vec<(usize, usize)>,
}

impl Example {
    pub fn contains_token(&self, token: &str) -> bool {
        self.tokens.iter().any(|t| t == token)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TaskKind {
    Tagging,
    TextClassification,
    WordClassification,
    WordRegression,
}

impl TaskKind {
    pub fn is_classification(&self) -> bool {
        !matches!(self, TaskKind::WordRegression)
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            TaskKind::Tagging => "tagging",
            TaskKind::TextClassification => "text_classification",
            TaskKind::WordClassification => "word_classification",
            TaskKind::WordRegression => "word_regression",
        }
    }
}

/// A set of examples plus label metadata.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub examples: Vec<Example>,
    pub label_names: Vec<String>,
    pub task_kind: TaskKind,
}

impl Dataset {
    /// Validates the structural invariants before accepting the data.
    pub fn new(
        examples: Vec<Example>,
        label_names: Vec<String>,
        task_kind: TaskKind,
    ) -> Result<Self> {
        let k = label_names.len();
        for ex in &examples {
            let mut cursor = 0;
            for (s, e) in &ex.sentence_spans {
                if *s != cursor || e <= s {
                    return Err(Error::Contract(format!(
                        "example {}: spans do not partition the token range",
                        ex.id
                    )));
                }
                cursor = *e;
            }
            if cursor != ex.tokens.len() {
                return Err(Error::Contract(format!(
                    "example {}: spans cover {cursor} of {} tokens",
                    ex.id,
                    ex.tokens.len()
                )));
            }
            if let Some(tags) = &ex.per_token_tags {
                if tags.len() != ex.tokens.len() {
                    return Err(Error::Contract(format!(
                        "example {}: {} tags for {} tokens",
                        ex.id,
                        tags.len(),
                        ex.tokens.len()
                    )));
                }
                if let Some(bad) = tags.iter().find(|t| **t >= k) {
                    return Err(Error::Contract(format!(
                        "example {}: tag {bad} out of range for {k} labels",
                        ex.id
                    )));
                }
            }
            match (ex.gold, task_kind.is_classification()) {
                (Some(Gold::Class(c)), true) if c >= k => {
                    return Err(Error::Contract(format!(
                        "example {}: label {c} out of range for {k} labels",
                        ex.id
                    )));
                }
                (Some(Gold::Value(_)), true) if task_kind != TaskKind::Tagging => {
                    return Err(Error::Contract(format!(
                        "example {}: regression target in a classification dataset",
                        ex.id
                    )));
                }
                _ => {}
            }
        }
        Ok(Dataset {
            examples,
            label_names,
            task_kind,
        })
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.label_names.len()
    }

    /// New dataset holding the chosen examples (ids preserved).
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            examples: indices.iter().map(|i| self.examples[*i].clone()).collect(),
            label_names: self.label_names.clone(),
            task_kind: self.task_kind,
        }
    }
}

/// Sentence spans for a token sequence: a boundary falls after each
/// terminal punctuation token (`.`, `!`, `?`); any trailing tokens form a
/// final span.
pub fn segment_spans(tokens: &[String]) -> Vec<(usize, usize)> {
    let mut spans = Vec::new();
    let mut start = 0;
    for (i, t) in tokens.iter().enumerate() {
        if t == "." || t == "!" || t == "?" {
            spans.push((start, i + 1));
            start = i + 1;
        }
    }
    if start < tokens.len() {
        spans.push((start, tokens.len()));
    }
    spans
}

// ---------------------------------------------------------------------------
// Loaders

/// Loads a column-format tagging corpus: whitespace-separated columns,
/// one token per line, blank line between sentences.
pub fn load_conll(path: &Path, token_col: usize, tag_col: usize) -> Result<Dataset> {
    let file = std::fs::File::open(path)?;
    let reader = BufReader::new(file);

    let mut sentences: Vec<(Vec<String>, Vec<String>)> = Vec::new();
    let mut tokens: Vec<String> = Vec::new();
    let mut tags: Vec<String> = Vec::new();

    for (lineno, line) in reader.lines().enumerate() {
        let lineno = lineno + 1;
        let line = line?;
        if line.trim().is_empty() {
            if !tokens.is_empty() {
                sentences.push((std::mem::take(&mut tokens), std::mem::take(&mut tags)));
            }
            continue;
        }
        let cols: Vec<&str> = line.split_whitespace().collect();
        let needed = token_col.max(tag_col);
        if cols.len() <= needed {
            return Err(Error::Parse {
                line: lineno,
                message: format!("row has {} columns, need at least {}", cols.len(), needed + 1),
            });
        }
        tokens.push(cols[token_col].to_string());
        tags.push(cols[tag_col].to_string());
    }
    if !tokens.is_empty() {
        sentences.push((tokens, tags));
    }

    let mut label_names: Vec<String> = sentences
        .iter()
        .flat_map(|(_, tags)| tags.iter().cloned())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    label_names.sort();

    let examples = sentences
        .into_iter()
        .enumerate()
        .map(|(i, (tokens, tags))| {
            let tag_ids = tags
                .iter()
                .map(|t| label_names.iter().position(|l| l == t).unwrap())
                .collect();
            Example {
                id: format!("e{i:05}"),
                sentence_spans: vec![(0, tokens.len())],
                tokens,
                gold: None,
                per_token_tags: Some(tag_ids),
            }
        })
        .collect();

    Dataset::new(examples, label_names, TaskKind::Tagging)
}

/// Writes a tagging dataset in the two-column format `token tag`.
pub fn write_conll(dataset: &Dataset, path: &Path) -> Result<()> {
    if dataset.task_kind != TaskKind::Tagging {
        return Err(Error::Config("write_conll expects a tagging dataset".into()));
    }
    let mut out = String::new();
    for ex in &dataset.examples {
        let tags = ex
            .per_token_tags
            .as_ref()
            .ok_or_else(|| Error::Contract(format!("example {} has no tags", ex.id)))?;
        for (tok, tag) in ex.tokens.iter().zip(tags) {
            out.push_str(tok);
            out.push(' ');
            out.push_str(&dataset.label_names[*tag]);
            out.push('\n');
        }
        out.push('\n');
    }
    std::fs::File::create(path)?.write_all(out.as_bytes())?;
    Ok(())
}

/// Loads `label<TAB>text` rows as a classification dataset. Text is
/// whitespace-tokenized; a file whose rows are all single tokens becomes
/// a word-classification dataset.
pub fn load_labeled_text(path: &Path) -> Result<Dataset> {
    let rows = read_labeled_rows(path)?;
    let mut label_names: Vec<String> = rows
        .iter()
        .map(|(l, _)| l.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    label_names.sort();

    let all_single = rows.iter().all(|(_, toks)| toks.len() == 1);
    let examples = rows
        .into_iter()
        .enumerate()
        .map(|(i, (label, tokens))| {
            let gold = label_names.iter().position(|l| *l == label).unwrap();
            Example {
                id: format!("e{i:05}"),
                sentence_spans: segment_spans(&tokens),
                tokens,
                gold: Some(Gold::Class(gold)),
                per_token_tags: None,
            }
        })
        .collect();
    let kind = if all_single {
        TaskKind::WordClassification
    } else {
        TaskKind::TextClassification
    };
    Dataset::new(examples, label_names, kind)
}

/// Loads `target<TAB>text` rows with real-valued targets (regression).
pub fn load_labeled_regression(path: &Path) -> Result<Dataset> {
    let rows = read_labeled_rows(path)?;
    let examples = rows
        .into_iter()
        .enumerate()
        .map(|(i, (label, tokens))| {
            let value: f64 = label.parse().map_err(|_| Error::Parse {
                line: i + 1,
                message: format!("bad regression target {label:?}"),
            })?;
            Ok(Example {
                id: format!("e{i:05}"),
                sentence_spans: segment_spans(&tokens),
                tokens,
                gold: Some(Gold::Value(value)),
                per_token_tags: None,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(examples, Vec::new(), TaskKind::WordRegression)
}

fn read_labeled_rows(path: &Path) -> Result<Vec<(String, Vec<String>)>> {
    let file = std::fs::File::open(path)?;
    let reader = BufReader::new(file);
    let mut rows = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let lineno = lineno + 1;
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let (label, text) = line.split_once('\t').ok_or_else(|| Error::Parse {
            line: lineno,
            message: "expected label<TAB>text".into(),
        })?;
        let tokens: Vec<String> = text.split_whitespace().map(|s| s.to_string()).collect();
        if tokens.is_empty() {
            return Err(Error::Parse {
                line: lineno,
                message: "row has no tokens".into(),
            });
        }
        rows.push((label.to_string(), tokens));
    }
    Ok(rows)
}

/// Writes a dataset in the `label<TAB>text` format.
pub fn write_labeled_text(dataset: &Dataset, path: &Path) -> Result<()> {
    let mut out = String::new();
    for ex in &dataset.examples {
        match ex.gold {
            Some(Gold::Class(c)) => out.push_str(&dataset.label_names[c]),
            Some(Gold::Value(v)) => {
                write!(out, "{v:.16e}").unwrap();
            }
            None => {
                return Err(Error::Contract(format!(
                    "example {} has no gold target",
                    ex.id
                )))
            }
        }
        out.push('\t');
        out.push_str(&ex.tokens.join(" "));
        out.push('\n');
    }
    std::fs::File::create(path)?.write_all(out.as_bytes())?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Synthetic generators

/// What a generator should plant; carries the kind-specific parameters.
#[derive(Clone, Debug)]
pub enum SynthKind {
    /// Word labels decided by the XOR of the signs of two embedding
    /// dimensions, with a margin keeping those dimensions away from zero.
    /// The first planted dimension is drawn at a larger scale, so models
    /// trained without regularization over-rely on it and read the second
    /// one conservatively.
    PlantedDims { planted: (usize, usize), margin: f64 },
    /// Sentiment documents over a polarity lexicon with negation scopes.
    Sentiment {
        docs: usize,
        negation_rate: f64,
        /// Fraction of documents that receive one planted "misleading"
        /// pair: a negated positive word whose evidence runs against the
        /// document's label under either a naive or a negation-aware
        /// reading (half the scoped vocabulary goes to each placement).
        scoped_fraction: f64,
        five_class: bool,
    },
    /// Zipfian word frequencies with one dimension coding log frequency.
    Frequency { planted_dim: usize, zipf_exponent: f64 },
}

/// Generator request: kind plus the shared knobs.
#[derive(Clone, Debug)]
pub struct SyntheticSpec {
    pub kind: SynthKind,
    pub vocab_size: usize,
    pub dim: usize,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn planted_dims(vocab_size: usize, dim: usize, planted: (usize, usize), seed: u64) -> Self {
        SyntheticSpec {
            kind: SynthKind::PlantedDims {
                planted,
                margin: 0.5,
            },
            vocab_size,
            dim,
            noise_sigma: 0.0,
            seed,
        }
    }

    pub fn sentiment(docs: usize, dim: usize, seed: u64) -> Self {
        SyntheticSpec {
            kind: SynthKind::Sentiment {
                docs,
                negation_rate: 0.10,
                scoped_fraction: 0.35,
                five_class: false,
            },
            vocab_size: 48,
            dim,
            noise_sigma: 0.1,
            seed,
        }
    }

    pub fn frequency(vocab_size: usize, dim: usize, planted_dim: usize, seed: u64) -> Self {
        SyntheticSpec {
            kind: SynthKind::Frequency {
                planted_dim,
                zipf_exponent: 1.0,
            },
            vocab_size,
            dim,
            noise_sigma: 0.3,
            seed,
        }
    }
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// Word-classification task whose labels depend on exactly two embedding
/// dimensions: label = sign(v[p1]) XOR sign(v[p2]). Every other dimension
/// is independent noise.
pub fn gen_planted_dims(spec: &SyntheticSpec) -> Result<(EmbeddingTable, Dataset)> {
    let SynthKind::PlantedDims { planted, margin } = spec.kind else {
        return Err(Error::Config("spec kind is not planted_dims".into()));
    };
    let (p1, p2) = planted;
    if p1 >= spec.dim || p2 >= spec.dim {
        return Err(Error::Config(format!(
            "planted dimensions ({p1}, {p2}) out of range for dim {}",
            spec.dim
        )));
    }
    if p1 == p2 {
        return Err(Error::Config("planted dimensions must differ".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut pairs = Vec::with_capacity(spec.vocab_size);
    let mut examples = Vec::with_capacity(spec.vocab_size);
    for i in 0..spec.vocab_size {
        let token = format!("w{i:05}");
        let mut v: Vec<f64> = (0..spec.dim).map(|_| normal(&mut rng)).collect();
        for (p, scale) in [(p1, 3.0), (p2, 1.0)] {
            let mut x = normal(&mut rng);
            while x.abs() < margin {
                x = normal(&mut rng);
            }
            v[p] = scale * x;
        }
        let label = usize::from((v[p1] > 0.0) != (v[p2] > 0.0));
        examples.push(Example {
            id: format!("e{i:05}"),
            tokens: vec![token.clone()],
            gold: Some(Gold::Class(label)),
            per_token_tags: None,
            sentence_spans: vec![(0, 1)],
        });
        pairs.push((token, v));
    }
    let table = EmbeddingTable::from_vectors(pairs, false)?;
    let dataset = Dataset::new(
        examples,
        vec!["same_sign".into(), "opposite_sign".into()],
        TaskKind::WordClassification,
    )?;
    Ok((table, dataset))
}

/// Token roles in the synthetic sentiment vocabulary, recoverable from
/// the token name prefix.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SentimentRole {
    Positive,
    Negative,
    Negation,
    Filler,
    /// Positive-polarity word that only ever appears inside a negation
    /// scope (the planted "misleading token" family).
    ScopedPositive,
    Punctuation,
}

/// Recovers a sentiment token's role from its name.
pub fn sentiment_role(token: &str) -> Option<SentimentRole> {
    if token == "." || token == "!" || token == "?" {
        return Some(SentimentRole::Punctuation);
    }
    if token.starts_with("scpos") {
        return Some(SentimentRole::ScopedPositive);
    }
    if token.starts_with("pos") {
        return Some(SentimentRole::Positive);
    }
    if token.starts_with("neg") {
        return Some(SentimentRole::Negative);
    }
    if token.starts_with("not") {
        return Some(SentimentRole::Negation);
    }
    if token.starts_with("fill") {
        return Some(SentimentRole::Filler);
    }
    None
}

/// Scores a synthetic sentiment document with the generator's labeling
/// rule: +1 per positive token, -1 per negative, a negation token flips
/// the next polarity token in the same sentence.
pub fn sentiment_net_score(tokens: &[String]) -> i64 {
    let mut net = 0i64;
    let mut pending_negation = false;
    for t in tokens {
        match sentiment_role(t) {
            Some(SentimentRole::Positive) | Some(SentimentRole::ScopedPositive) => {
                net += if pending_negation { -1 } else { 1 };
                pending_negation = false;
            }
            Some(SentimentRole::Negative) => {
                net += if pending_negation { 1 } else { -1 };
                pending_negation = false;
            }
            Some(SentimentRole::Negation) => pending_negation = true,
            Some(SentimentRole::Punctuation) => pending_negation = false,
            _ => {}
        }
    }
    net
}

fn sentiment_label(net: i64, five_class: bool) -> usize {
    if five_class {
        match net {
            n if n <= -3 => 0,
            n if n < 0 => 1,
            0 => 2,
            n if n < 3 => 3,
            _ => 4,
        }
    } else {
        usize::from(net > 0)
    }
}

/// Sentiment documents of one to three sentences over a planted polarity
/// lexicon. Embeddings carry the polarity and negation signal in two
/// dedicated dimensions (plus per-token noise), so a frozen-embedding
/// model must read polarity from the vectors, not token identity.
pub fn gen_synthetic_sentiment(spec: &SyntheticSpec) -> Result<(EmbeddingTable, Dataset)> {
    let SynthKind::Sentiment {
        docs,
        negation_rate,
        scoped_fraction,
        five_class,
    } = spec.kind
    else {
        return Err(Error::Config("spec kind is not sentiment".into()));
    };
    if spec.dim < 3 {
        return Err(Error::Config("sentiment embeddings need dim >= 3".into()));
    }
    // Fixed lexicon layout within the requested vocabulary budget.
    let n_pos = (spec.vocab_size / 4).max(2);
    let n_neg = n_pos;
    // One scoped token per placement (positive-labeled and
    // negative-labeled documents).
    let n_scoped = 2;
    let n_not = 2;
    let n_fill = spec
        .vocab_size
        .saturating_sub(n_pos + n_neg + n_scoped + n_not)
        .max(4);
    if n_pos == 0 || n_neg == 0 || n_fill == 0 {
        return Err(Error::Config(
            "sentiment vocabulary partition has an empty class".into(),
        ));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let positives: Vec<String> = (0..n_pos).map(|i| format!("pos{i:02}")).collect();
    let negatives: Vec<String> = (0..n_neg).map(|i| format!("neg{i:02}")).collect();
    let scoped: Vec<String> = (0..n_scoped).map(|i| format!("scpos{i:02}")).collect();
    let negations: Vec<String> = (0..n_not).map(|i| format!("not{i}")).collect();
    let fillers: Vec<String> = (0..n_fill).map(|i| format!("fill{i:02}")).collect();
    let puncts = [".", "!", "?"];

    let mut pairs: Vec<(String, Vec<f64>)> = Vec::new();
    let push = |pairs: &mut Vec<(String, Vec<f64>)>,
                    rng: &mut ChaCha8Rng,
                    token: &str,
                    polarity: f64,
                    negation: f64| {
        let mut v: Vec<f64> = (0..spec.dim).map(|_| 0.4 * normal(rng)).collect();
        v[0] = polarity + spec.noise_sigma * normal(rng);
        v[1] = negation + spec.noise_sigma * normal(rng);
        pairs.push((token.to_string(), v));
    };
    for t in &positives {
        push(&mut pairs, &mut rng, t, 1.0, 0.0);
    }
    // Scoped tokens are near-clones of regular positive words: the model
    // must read them as positive vocabulary, not memorize them as label
    // markers for the documents they are planted in.
    for (i, t) in scoped.iter().enumerate() {
        let v: Vec<f64> = pairs[i % n_pos]
            .1
            .iter()
            .map(|x| x + 0.05 * normal(&mut rng))
            .collect();
        pairs.push((t.clone(), v));
    }
    for t in &negatives {
        push(&mut pairs, &mut rng, t, -1.0, 0.0);
    }
    for t in &negations {
        push(&mut pairs, &mut rng, t, 0.0, 1.0);
    }
    for t in &fillers {
        push(&mut pairs, &mut rng, t, 0.0, 0.0);
    }
    for t in puncts {
        push(&mut pairs, &mut rng, t, 0.0, 0.0);
    }

    let mut examples = Vec::with_capacity(docs);
    let mut id = 0usize;
    while examples.len() < docs {
        let n_sent = rng.gen_range(1..=3usize);
        let mut tokens: Vec<String> = Vec::new();
        for _ in 0..n_sent {
            let content = rng.gen_range(4..=6usize);
            let mut placed = 0;
            while placed < content {
                let r: f64 = rng.gen();
                if r < negation_rate && placed + 2 <= content {
                    tokens.push(negations.choose(&mut rng).unwrap().clone());
                    if rng.gen::<bool>() {
                        tokens.push(positives.choose(&mut rng).unwrap().clone());
                    } else {
                        tokens.push(negatives.choose(&mut rng).unwrap().clone());
                    }
                    placed += 2;
                } else if r < negation_rate + 0.35 {
                    if rng.gen::<bool>() {
                        tokens.push(positives.choose(&mut rng).unwrap().clone());
                    } else {
                        tokens.push(negatives.choose(&mut rng).unwrap().clone());
                    }
                    placed += 1;
                } else {
                    tokens.push(fillers.choose(&mut rng).unwrap().clone());
                    placed += 1;
                }
            }
            // Occasional unconsumed sentence-final negation: the labeling
            // rule ignores it, and seeing it in training keeps the model
            // calibrated on inputs where a negated word was deleted.
            if rng.gen::<f64>() < 0.10 {
                tokens.push(negations.choose(&mut rng).unwrap().clone());
            }
            tokens.push(puncts[rng.gen_range(0..puncts.len())].to_string());
        }
        let net = sentiment_net_score(&tokens);
        if net == 0 && !five_class {
            continue; // binary labels need a nonzero net; redraw
        }
        // Planted misleading pair: a negated positive token whose evidence
        // opposes the document label. scpos00 goes into documents that
        // stay positive after the pair (its true contribution of -1 fights
        // the positive label); scpos01 goes into negative documents (its
        // surface positivity fights the negative label).
        if rng.gen::<f64>() < scoped_fraction {
            // Both placements sit one flipped token away from the decision
            // boundary, where a single word still moves the model.
            let tok = if net == 2 {
                Some(&scoped[0])
            } else if net == -1 {
                Some(&scoped[1 % scoped.len()])
            } else {
                None
            };
            if let Some(tok) = tok {
                // The pair sits right before a sentence's terminal
                // punctuation: deleting the scoped token then leaves the
                // dangling negation facing the boundary, where it cannot
                // re-scope onto a following polarity word.
                let spans = segment_spans(&tokens);
                let (_, end) = spans[rng.gen_range(0..spans.len())];
                let at = end - 1; // the punct index
                tokens.insert(at, tok.clone());
                tokens.insert(at, negations.choose(&mut rng).unwrap().clone());
            }
        }
        let net = sentiment_net_score(&tokens);
        if net == 0 && !five_class {
            continue;
        }
        let label = sentiment_label(net, five_class);
        examples.push(Example {
            id: format!("e{id:05}"),
            sentence_spans: segment_spans(&tokens),
            tokens,
            gold: Some(Gold::Class(label)),
            per_token_tags: None,
        });
        id += 1;
    }

    let label_names: Vec<String> = if five_class {
        ["strong_negative", "negative", "neutral", "positive", "strong_positive"]
            .iter()
            .map(|s| s.to_string())
            .collect()
    } else {
        vec!["negative".into(), "positive".into()]
    };
    let table = EmbeddingTable::from_vectors(pairs, false)?;
    let dataset = Dataset::new(examples, label_names, TaskKind::TextClassification)?;
    Ok((table, dataset))
}

/// Word-frequency regression task: Zipfian frequencies, target = log
/// frequency, one embedding dimension equal to the target plus noise.
pub fn gen_frequency_task(spec: &SyntheticSpec) -> Result<(EmbeddingTable, Dataset)> {
    let SynthKind::Frequency {
        planted_dim,
        zipf_exponent,
    } = spec.kind
    else {
        return Err(Error::Config("spec kind is not frequency".into()));
    };
    if planted_dim >= spec.dim {
        return Err(Error::Config(format!(
            "planted dimension {planted_dim} out of range for dim {}",
            spec.dim
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let scale = 1.0e6;
    let mut pairs = Vec::with_capacity(spec.vocab_size);
    let mut examples = Vec::with_capacity(spec.vocab_size);
    for i in 0..spec.vocab_size {
        let rank = (i + 1) as f64;
        let log_freq = (scale / rank.powf(zipf_exponent)).ln();
        let token = format!("w{i:05}");
        let mut v: Vec<f64> = (0..spec.dim).map(|_| normal(&mut rng)).collect();
        v[planted_dim] = log_freq + spec.noise_sigma * normal(&mut rng);
        pairs.push((token.clone(), v));
        examples.push(Example {
            id: format!("e{i:05}"),
            tokens: vec![token],
            gold: Some(Gold::Value(log_freq)),
            per_token_tags: None,
            sentence_spans: vec![(0, 1)],
        });
    }
    let table = EmbeddingTable::from_vectors(pairs, false)?;
    let dataset = Dataset::new(examples, Vec::new(), TaskKind::WordRegression)?;
    Ok((table, dataset))
}

// ---------------------------------------------------------------------------
// Splits

/// Seeded shuffle followed by a contiguous three-way cut. The splits are
/// disjoint and exhaustive.
pub fn split(
    dataset: &Dataset,
    ratios: (f64, f64, f64),
    seed: u64,
) -> Result<(Dataset, Dataset, Dataset)> {
    let (r0, r1, r2) = ratios;
    if r0 <= 0.0 || r1 <= 0.0 || r2 <= 0.0 {
        return Err(Error::Config("split ratios must be positive".into()));
    }
    if (r0 + r1 + r2 - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!(
            "split ratios sum to {}, expected 1",
            r0 + r1 + r2
        )));
    }
    let n = dataset.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);

    let n_dev = (r1 * n as f64).floor() as usize;
    let n_test = (r2 * n as f64).floor() as usize;
    let n_train = n - n_dev - n_test;

    let train = dataset.subset(&order[..n_train]);
    let dev = dataset.subset(&order[n_train..n_train + n_dev]);
    let test = dataset.subset(&order[n_train + n_dev..]);
    Ok((train, dev, test))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(|t| t.to_string()).collect()
    }

    #[test]
    fn segmentation_splits_after_terminal_punctuation() {
        let spans = segment_spans(&toks("a b . c d ! e"));
        assert_eq!(spans, vec![(0, 3), (3, 6), (6, 7)]);
        assert_eq!(segment_spans(&toks("a b c")), vec![(0, 3)]);
        assert!(segment_spans(&[]).is_empty());
    }

    #[test]
    fn conll_two_sentences() {
        let path = std::env::temp_dir().join(format!("el-conll-{}", std::process::id()));
        std::fs::write(&path, "the DT\ncat NN\n\nruns VBZ\n\n").unwrap();
        let ds = load_conll(&path, 0, 1).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.examples[0].tokens, toks("the cat"));
        assert_eq!(ds.label_names, vec!["DT", "NN", "VBZ"]);
        // token counts in == token counts stored
        let total: usize = ds.examples.iter().map(|e| e.tokens.len()).sum();
        assert_eq!(total, 3);
        std::fs::remove_file(path).ok();
    }

    #[test]
    fn conll_blank_only_file_is_empty_dataset() {
        let path = std::env::temp_dir().join(format!("el-conll-empty-{}", std::process::id()));
        std::fs::write(&path, "\n\n\n").unwrap();
        let ds = load_conll(&path, 0, 1).unwrap();
        assert!(ds.is_empty());
        std::fs::remove_file(path).ok();
    }

    #[test]
    fn conll_ragged_row_reports_line() {
        let path = std::env::temp_dir().join(format!("el-conll-ragged-{}", std::process::id()));
        std::fs::write(&path, "the DT\ncat\n").unwrap();
        match load_conll(&path, 0, 1) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
        std::fs::remove_file(path).ok();
    }

    #[test]
    fn conll_round_trip() {
        let path = std::env::temp_dir().join(format!("el-conll-rt-{}", std::process::id()));
        let original = "the DT\ncat NN\n\nruns VBZ\n\n";
        std::fs::write(&path, original).unwrap();
        let ds = load_conll(&path, 0, 1).unwrap();
        let path2 = std::env::temp_dir().join(format!("el-conll-rt2-{}", std::process::id()));
        write_conll(&ds, &path2).unwrap();
        let written = std::fs::read_to_string(&path2).unwrap();
        assert_eq!(written.trim_end(), original.trim_end());
        std::fs::remove_file(path).ok();
        std::fs::remove_file(path2).ok();
    }

    #[test]
    fn labeled_text_missing_tab() {
        let path = std::env::temp_dir().join(format!("el-lt-{}", std::process::id()));
        std::fs::write(&path, "pos nice movie\n").unwrap();
        match load_labeled_text(&path) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 1),
            other => panic!("expected parse error, got {other:?}"),
        }
        std::fs::remove_file(path).ok();
    }

    #[test]
    fn labeled_text_single_tokens_become_word_classification() {
        let path = std::env::temp_dir().join(format!("el-lt2-{}", std::process::id()));
        std::fs::write(&path, "a\tx\nb\ty\n").unwrap();
        let ds = load_labeled_text(&path).unwrap();
        assert_eq!(ds.task_kind, TaskKind::WordClassification);
        std::fs::remove_file(path).ok();
    }

    #[test]
    fn planted_dims_deterministic_and_margined() {
        let spec = SyntheticSpec::planted_dims(50, 10, (3, 7), 9);
        let (t1, d1) = gen_planted_dims(&spec).unwrap();
        let (t2, d2) = gen_planted_dims(&spec).unwrap();
        assert_eq!(t1, t2);
        assert_eq!(d1, d2);
        for ex in &d1.examples {
            let v = t1.vector_of(&ex.tokens[0]);
            assert!(v.values()[3].abs() >= 0.5);
            assert!(v.values()[7].abs() >= 0.5);
            let expect = usize::from((v.values()[3] > 0.0) != (v.values()[7] > 0.0));
            assert_eq!(ex.gold, Some(Gold::Class(expect)));
        }
    }

    #[test]
    fn planted_dims_rejects_bad_indices() {
        let spec = SyntheticSpec::planted_dims(10, 5, (3, 9), 0);
        assert!(matches!(gen_planted_dims(&spec), Err(Error::Config(_))));
    }

    #[test]
    fn sentiment_labels_match_rule_scorer_everywhere() {
        let spec = SyntheticSpec::sentiment(300, 12, 21);
        let (_, ds) = gen_synthetic_sentiment(&spec).unwrap();
        assert_eq!(ds.len(), 300);
        for ex in &ds.examples {
            let net = sentiment_net_score(&ex.tokens);
            assert_ne!(net, 0, "binary labels exclude net == 0");
            assert_eq!(ex.gold, Some(Gold::Class(usize::from(net > 0))), "{:?}", ex.tokens);
            // every token has a role
            for t in &ex.tokens {
                assert!(sentiment_role(t).is_some(), "unknown token {t}");
            }
        }
    }

    #[test]
    fn sentiment_scoped_tokens_only_under_negation() {
        let spec = SyntheticSpec::sentiment(400, 12, 5);
        let (_, ds) = gen_synthetic_sentiment(&spec).unwrap();
        let mut seen = 0;
        for ex in &ds.examples {
            for (i, t) in ex.tokens.iter().enumerate() {
                if sentiment_role(t) == Some(SentimentRole::ScopedPositive) {
                    seen += 1;
                    assert!(i > 0, "scoped token at sentence start");
                    assert_eq!(
                        sentiment_role(&ex.tokens[i - 1]),
                        Some(SentimentRole::Negation),
                        "scoped token not preceded by negation in {:?}",
                        ex.tokens
                    );
                }
            }
        }
        assert!(seen > 10, "scoped tokens too rare to test ({seen})");
    }

    #[test]
    fn sentiment_deterministic() {
        let spec = SyntheticSpec::sentiment(50, 8, 33);
        let a = gen_synthetic_sentiment(&spec).unwrap();
        let b = gen_synthetic_sentiment(&spec).unwrap();
        assert_eq!(a.0, b.0);
        assert_eq!(a.1, b.1);
    }

    #[test]
    fn frequency_task_planted_dimension_tracks_log_frequency() {
        let spec = SyntheticSpec::frequency(500, 10, 7, 4);
        let (table, ds) = gen_frequency_task(&spec).unwrap();
        for ex in ds.examples.iter().step_by(97) {
            let Some(Gold::Value(target)) = ex.gold else {
                panic!()
            };
            let v = table.vector_of(&ex.tokens[0]);
            assert!((v.values()[7] - target).abs() < 4.0 * 0.3 + 1e-9);
        }
        // ranks are Zipfian: first word much more frequent than last
        let Some(Gold::Value(first)) = ds.examples[0].gold else {
            panic!()
        };
        let Some(Gold::Value(last)) = ds.examples[499].gold else {
            panic!()
        };
        assert!(first > last);
    }

    #[test]
    fn split_sizes_and_exhaustiveness() {
        let spec = SyntheticSpec::planted_dims(10, 4, (0, 1), 2);
        let (_, ds) = gen_planted_dims(&spec).unwrap();
        let (train, dev, test) = split(&ds, (0.8, 0.1, 0.1), 7).unwrap();
        assert_eq!((train.len(), dev.len(), test.len()), (8, 1, 1));

        let mut ids: Vec<&str> = train
            .examples
            .iter()
            .chain(&dev.examples)
            .chain(&test.examples)
            .map(|e| e.id.as_str())
            .collect();
        ids.sort();
        let mut orig: Vec<&str> = ds.examples.iter().map(|e| e.id.as_str()).collect();
        orig.sort();
        assert_eq!(ids, orig);

        // same seed, same split
        let again = split(&ds, (0.8, 0.1, 0.1), 7).unwrap();
        assert_eq!(again.0, train);
        assert_eq!(again.1, dev);
        assert_eq!(again.2, test);
    }

    #[test]
    fn split_rejects_bad_ratios() {
        let spec = SyntheticSpec::planted_dims(10, 4, (0, 1), 2);
        let (_, ds) = gen_planted_dims(&spec).unwrap();
        assert!(matches!(
            split(&ds, (0.8, 0.1, 0.2), 7),
            Err(Error::Config(_))
        ));
    }
}
