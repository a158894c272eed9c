//! Vocabulary and dense word-vector storage.
//!
//! Tables load from plain text embedding files (`token v1 v2 ... vd` per
//! line, optional `count dim` header). Two reserved rows are always
//! present: an unknown-word vector (mean of all loaded vectors) and a
//! padding vector pinned at zero so window padding is a true null signal.

use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const UNKNOWN_TOKEN: &str = "<unk>";
pub const PAD_TOKEN: &str = "<pad>";
pub const UNKNOWN_INDEX: usize = 0;
pub const PAD_INDEX: usize = 1;

/// Bijective token <-> index mapping with reserved unknown/padding slots
/// at indices 0 and 1.
#[derive(Clone, Debug, PartialEq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    /// Builds a vocabulary from regular tokens; the reserved tokens are
    /// prepended automatically and may not appear in the input.
    pub fn new<I, S>(tokens: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut all = vec![UNKNOWN_TOKEN.to_string(), PAD_TOKEN.to_string()];
        let mut index = HashMap::new();
        index.insert(UNKNOWN_TOKEN.to_string(), UNKNOWN_INDEX);
        index.insert(PAD_TOKEN.to_string(), PAD_INDEX);
        for t in tokens {
            let t = t.into();
            if index.contains_key(&t) {
                return Err(Error::Config(format!("duplicate token {t:?} in vocabulary")));
            }
            index.insert(t.clone(), all.len());
            all.push(t);
        }
        Ok(Vocabulary { tokens: all, index })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false // reserved tokens always present
    }

    pub fn index_of(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    /// Index for `token`, falling back to the unknown slot for
    /// out-of-vocabulary words.
    pub fn index_or_unknown(&self, token: &str) -> usize {
        self.index_of(token).unwrap_or(UNKNOWN_INDEX)
    }

    pub fn token_at(&self, index: usize) -> Option<&str> {
        self.tokens.get(index).map(|s| s.as_str())
    }

    /// Regular tokens in index order (reserved slots excluded).
    pub fn regular_tokens(&self) -> impl Iterator<Item = &str> {
        self.tokens.iter().skip(2).map(|s| s.as_str())
    }
}

/// Vocabulary-indexed dense word vectors; the erasable input
/// representation.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingTable {
    vocab: Vocabulary,
    dim: usize,
    /// `|V| x dim`, row per vocabulary index.
    matrix: Tensor,
    pub trainable: bool,
}

impl EmbeddingTable {
    /// Builds a table from `(token, vector)` pairs. The unknown row is
    /// the mean of the given vectors; the padding row is zero.
    pub fn from_vectors(pairs: Vec<(String, Vec<f64>)>, trainable: bool) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::Config("cannot build an embedding table from zero vectors".into()));
        }
        let dim = pairs[0].1.len();
        if dim == 0 {
            return Err(Error::Config("embedding dimension must be positive".into()));
        }
        let mut mean = vec![0.0; dim];
        for (t, v) in &pairs {
            if v.len() != dim {
                return Err(Error::Dimension(format!(
                    "vector for {t:?} has width {}, expected {dim}",
                    v.len()
                )));
            }
            for (m, x) in mean.iter_mut().zip(v) {
                *m += x;
            }
        }
        for m in &mut mean {
            *m /= pairs.len() as f64;
        }
        let vocab = Vocabulary::new(pairs.iter().map(|(t, _)| t.clone()))?;
        let mut values = Vec::with_capacity(vocab.len() * dim);
        values.extend_from_slice(&mean); // <unk>
        values.extend(std::iter::repeat_n(0.0, dim)); // <pad>
        for (_, v) in &pairs {
            values.extend_from_slice(v);
        }
        let matrix = Tensor::matrix(vocab.len(), dim, values)?;
        Ok(EmbeddingTable {
            vocab,
            dim,
            matrix,
            trainable,
        })
    }

    /// Rebuilds a table from an explicit full matrix (all rows including
    /// the reserved ones), as stored in model files.
    pub fn from_full_matrix(vocab: Vocabulary, matrix: Tensor, trainable: bool) -> Result<Self> {
        if matrix.shape().len() != 2 || matrix.shape()[0] != vocab.len() {
            return Err(Error::Dimension(format!(
                "embedding matrix shape {:?} does not match vocabulary of {} entries",
                matrix.shape(),
                vocab.len()
            )));
        }
        let dim = matrix.shape()[1];
        Ok(EmbeddingTable {
            vocab,
            dim,
            matrix,
            trainable,
        })
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn matrix(&self) -> &Tensor {
        &self.matrix
    }

    /// Replaces the matrix (used when training fine-tunes embeddings).
    /// The padding row must still be zero.
    pub fn with_matrix(&self, matrix: Tensor) -> Result<Self> {
        let t = EmbeddingTable::from_full_matrix(self.vocab.clone(), matrix, self.trainable)?;
        let pad = t.vector_at(PAD_INDEX);
        if pad.values().iter().any(|v| *v != 0.0) {
            return Err(Error::Contract("padding row must stay zero".into()));
        }
        Ok(t)
    }

    pub fn vector_at(&self, index: usize) -> Tensor {
        self.matrix.row(index).expect("vocabulary index in range")
    }

    pub fn vector_of(&self, token: &str) -> Tensor {
        self.vector_at(self.vocab.index_or_unknown(token))
    }

    /// Concatenation of the vectors in a `window`-wide span centered at
    /// `center`, padding beyond the sentence bounds.
    pub fn window_features(
        &self,
        token_indices: &[usize],
        center: usize,
        window: usize,
    ) -> Result<Tensor> {
        if window.is_multiple_of(2) {
            return Err(Error::Config(format!("window must be odd, got {window}")));
        }
        if center >= token_indices.len() {
            return Err(Error::Index(format!(
                "center {center} outside sentence of {} tokens",
                token_indices.len()
            )));
        }
        let half = (window / 2) as isize;
        let mut values = Vec::with_capacity(window * self.dim);
        for off in -half..=half {
            let pos = center as isize + off;
            let idx = if pos < 0 || pos as usize >= token_indices.len() {
                PAD_INDEX
            } else {
                token_indices[pos as usize]
            };
            values.extend_from_slice(self.vector_at(idx).values());
        }
        Ok(Tensor::vector(values))
    }

    /// Writes the regular rows in the text format read by
    /// [`load_text_embeddings`], with enough digits for a bit-exact
    /// round-trip.
    pub fn save_text(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        for (i, token) in self.vocab.regular_tokens().enumerate() {
            out.push_str(token);
            let row = self.matrix.row(i + 2).unwrap();
            for v in row.values() {
                write!(out, " {v:.16e}").unwrap();
            }
            out.push('\n');
        }
        let mut f = std::fs::File::create(path)?;
        f.write_all(out.as_bytes())?;
        Ok(())
    }
}

/// Loads a text embedding file: one `token v1 v2 ... vd` line per word,
/// with an optional `count dim` header line (detected as a line of
/// exactly two integer fields).
pub fn load_text_embeddings(path: &Path, expected_dim: Option<usize>) -> Result<EmbeddingTable> {
    let file = std::fs::File::open(path)?;
    let reader = BufReader::new(file);
    let mut pairs: Vec<(String, Vec<f64>)> = Vec::new();
    let mut dim: Option<usize> = None;

    for (lineno, line) in reader.lines().enumerate() {
        let lineno = lineno + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if lineno == 1 && fields.len() == 2 && fields.iter().all(|f| f.parse::<u64>().is_ok()) {
            continue; // header
        }
        if fields.len() < 2 {
            return Err(Error::Parse {
                line: lineno,
                message: "expected a token followed by vector components".into(),
            });
        }
        let token = fields[0].to_string();
        let mut vector = Vec::with_capacity(fields.len() - 1);
        for f in &fields[1..] {
            let v: f64 = f.parse().map_err(|_| Error::Parse {
                line: lineno,
                message: format!("bad float {f:?}"),
            })?;
            vector.push(v);
        }
        match dim {
            None => dim = Some(vector.len()),
            Some(d) if d != vector.len() => {
                return Err(Error::Parse {
                    line: lineno,
                    message: format!("vector width {} differs from first line's {d}", vector.len()),
                })
            }
            _ => {}
        }
        pairs.push((token, vector));
    }

    let dim = dim.ok_or_else(|| Error::Parse {
        line: 1,
        message: "no embedding rows found".into(),
    })?;
    if let Some(expected) = expected_dim {
        if expected != dim {
            return Err(Error::Dimension(format!(
                "file has dimension {dim}, expected {expected}"
            )));
        }
    }
    EmbeddingTable::from_vectors(pairs, false)
}

/// Copy of `input` with dimension `d` zeroed inside every `word_dim`-wide
/// slot, for each `d` in `dims`. A plain word vector is a single slot;
/// window features are `window` slots.
pub fn erase_dimension(input: &Tensor, dims: &BTreeSet<usize>, word_dim: usize) -> Result<Tensor> {
    if input.shape().len() != 1 || !input.numel().is_multiple_of(word_dim) {
        return Err(Error::Dimension(format!(
            "input of shape {:?} is not a multiple of word width {word_dim}",
            input.shape()
        )));
    }
    for &d in dims {
        if d >= word_dim {
            return Err(Error::Index(format!(
                "dimension {d} out of range for word width {word_dim}"
            )));
        }
    }
    let mut out = input.clone();
    let slots = input.numel() / word_dim;
    for s in 0..slots {
        for &d in dims {
            out.values_mut()[s * word_dim + d] = 0.0;
        }
    }
    Ok(out)
}
