//! Versioned structured-text file format shared by models, policies, and
//! baselines. Floats are written with 17 significant digits so a
//! save/load round trip is bit-exact, and the body is checksummed.

use std::fmt::Write as _;
use std::path::Path;

use crate::embeddings::{EmbeddingTable, Vocabulary, PAD_TOKEN, UNKNOWN_TOKEN};
use crate::error::{Error, Result};
use crate::models::{
    Head, ModelConfig, OptimizerConfig, Params, TrainedModel, MODEL_FORMAT_VERSION,
};
use crate::tensor::Tensor;

const MAGIC: &str = "erasure-lab-file v1";

pub(crate) struct EmbeddingBlock {
    pub dim: usize,
    pub trainable: bool,
    pub matrix: Tensor,
}

/// In-memory form of a model-format file.
pub(crate) struct Document {
    pub kind: String,
    pub config: Vec<(String, String)>,
    /// Full token list including the reserved slots, in index order.
    pub vocab: Option<Vec<String>>,
    pub embedding: Option<EmbeddingBlock>,
    pub params: Vec<(String, Tensor)>,
}

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash = 0xcbf2_9ce4_8422_2325u64;
    for b in bytes {
        hash ^= *b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

fn write_tensor(out: &mut String, t: &Tensor) {
    match t.shape() {
        [n] => {
            for (i, v) in t.values().iter().enumerate() {
                if i > 0 {
                    out.push(' ');
                }
                write!(out, "{v:.16e}").unwrap();
            }
            out.push('\n');
            let _ = n;
        }
        [r, c] => {
            for row in 0..*r {
                for col in 0..*c {
                    if col > 0 {
                        out.push(' ');
                    }
                    write!(out, "{:.16e}", t.values()[row * c + col]).unwrap();
                }
                out.push('\n');
            }
        }
        other => panic!("unsupported tensor rank {other:?} in model file"),
    }
}

pub(crate) fn write_document(path: &Path, doc: &Document) -> Result<()> {
    let mut body = String::new();
    body.push_str("[config]\n");
    for (k, v) in &doc.config {
        writeln!(body, "{k} {v}").unwrap();
    }
    if let Some(vocab) = &doc.vocab {
        body.push_str("[vocabulary]\n");
        writeln!(body, "count {}", vocab.len()).unwrap();
        for t in vocab {
            body.push_str(t);
            body.push('\n');
        }
    }
    if let Some(emb) = &doc.embedding {
        body.push_str("[embedding]\n");
        writeln!(body, "dim {}", emb.dim).unwrap();
        writeln!(body, "trainable {}", emb.trainable).unwrap();
        writeln!(body, "rows {}", emb.matrix.shape()[0]).unwrap();
        write_tensor(&mut body, &emb.matrix);
    }
    for (name, tensor) in &doc.params {
        body.push_str("[param]\n");
        writeln!(body, "name {name}").unwrap();
        let shape: Vec<String> = tensor.shape().iter().map(|d| d.to_string()).collect();
        writeln!(body, "shape {}", shape.join(" ")).unwrap();
        write_tensor(&mut body, tensor);
    }
    body.push_str("[end]\n");

    let mut out = String::new();
    writeln!(out, "{MAGIC}").unwrap();
    writeln!(out, "kind {}", doc.kind).unwrap();
    writeln!(out, "checksum fnv1a64 {:016x}", fnv1a64(body.as_bytes())).unwrap();
    out.push_str(&body);
    std::fs::write(path, out.as_bytes())?;
    Ok(())
}

struct Reader<'a> {
    lines: Vec<&'a str>,
    pos: usize,
}

impl<'a> Reader<'a> {
    fn next(&mut self) -> Result<&'a str> {
        let line = self
            .lines
            .get(self.pos)
            .ok_or_else(|| Error::ModelFile("unexpected end of file".into()))?;
        self.pos += 1;
        Ok(line)
    }

    fn peek(&self) -> Option<&'a str> {
        self.lines.get(self.pos).copied()
    }
}

fn parse_floats(line: &str, expect: usize) -> Result<Vec<f64>> {
    let values: Vec<f64> = line
        .split(' ')
        .map(|f| f.parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::ModelFile(format!("bad float row: {e}")))?;
    if values.len() != expect {
        return Err(Error::ModelFile(format!(
            "row has {} values, expected {expect}",
            values.len()
        )));
    }
    Ok(values)
}

fn read_tensor(reader: &mut Reader, shape: &[usize]) -> Result<Tensor> {
    match shape {
        [n] => Tensor::new(vec![*n], parse_floats(reader.next()?, *n)?)
            .map_err(|e| Error::ModelFile(e.to_string())),
        [r, c] => {
            let mut values = Vec::with_capacity(r * c);
            for _ in 0..*r {
                values.extend(parse_floats(reader.next()?, *c)?);
            }
            Tensor::new(vec![*r, *c], values).map_err(|e| Error::ModelFile(e.to_string()))
        }
        other => Err(Error::ModelFile(format!("unsupported shape {other:?}"))),
    }
}

pub(crate) fn read_document(path: &Path, expected_kind: &str) -> Result<Document> {
    let text = std::fs::read_to_string(path)?;
    let mut reader = Reader {
        lines: text.lines().collect(),
        pos: 0,
    };

    let magic = reader.next()?;
    if magic != MAGIC {
        return Err(Error::ModelFile(format!(
            "version mismatch: expected {MAGIC:?}, found {magic:?}"
        )));
    }
    let kind_line = reader.next()?;
    let kind = kind_line
        .strip_prefix("kind ")
        .ok_or_else(|| Error::ModelFile("missing kind line".into()))?
        .to_string();
    if kind != expected_kind {
        return Err(Error::ModelFile(format!(
            "file holds a {kind:?}, expected a {expected_kind:?}"
        )));
    }
    let checksum_line = reader.next()?;
    let stored = checksum_line
        .strip_prefix("checksum fnv1a64 ")
        .ok_or_else(|| Error::ModelFile("missing checksum line".into()))?;
    let body_start = text
        .match_indices('\n')
        .nth(2)
        .map(|(i, _)| i + 1)
        .ok_or_else(|| Error::ModelFile("truncated file".into()))?;
    let actual = format!("{:016x}", fnv1a64(&text.as_bytes()[body_start..]));
    if stored != actual {
        return Err(Error::ModelFile(format!(
            "checksum failure: stored {stored}, computed {actual}"
        )));
    }

    if reader.next()? != "[config]" {
        return Err(Error::ModelFile("expected [config] section".into()));
    }
    let mut config = Vec::new();
    while let Some(line) = reader.peek() {
        if line.starts_with('[') {
            break;
        }
        let line = reader.next()?;
        let (k, v) = line
            .split_once(' ')
            .ok_or_else(|| Error::ModelFile(format!("bad config line {line:?}")))?;
        config.push((k.to_string(), v.to_string()));
    }

    let mut vocab = None;
    let mut embedding = None;
    let mut params = Vec::new();
    loop {
        let section = reader.next()?;
        match section {
            "[vocabulary]" => {
                let count_line = reader.next()?;
                let count: usize = count_line
                    .strip_prefix("count ")
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| Error::ModelFile("bad vocabulary count".into()))?;
                let mut tokens = Vec::with_capacity(count);
                for _ in 0..count {
                    tokens.push(reader.next()?.to_string());
                }
                vocab = Some(tokens);
            }
            "[embedding]" => {
                let dim: usize = field(&mut reader, "dim")?;
                let trainable: bool = field(&mut reader, "trainable")?;
                let rows: usize = field(&mut reader, "rows")?;
                let matrix = read_tensor(&mut reader, &[rows, dim])?;
                embedding = Some(EmbeddingBlock {
                    dim,
                    trainable,
                    matrix,
                });
            }
            "[param]" => {
                let name_line = reader.next()?;
                let name = name_line
                    .strip_prefix("name ")
                    .ok_or_else(|| Error::ModelFile("missing param name".into()))?
                    .to_string();
                let shape_line = reader.next()?;
                let shape: Vec<usize> = shape_line
                    .strip_prefix("shape ")
                    .ok_or_else(|| Error::ModelFile("missing param shape".into()))?
                    .split(' ')
                    .map(|d| d.parse::<usize>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|e| Error::ModelFile(format!("bad shape: {e}")))?;
                let tensor = read_tensor(&mut reader, &shape)?;
                params.push((name, tensor));
            }
            "[end]" => break,
            other => return Err(Error::ModelFile(format!("unknown section {other:?}"))),
        }
    }

    Ok(Document {
        kind,
        config,
        vocab,
        embedding,
        params,
    })
}

fn field<T: std::str::FromStr>(reader: &mut Reader, key: &str) -> Result<T> {
    let line = reader.next()?;
    line.strip_prefix(key)
        .and_then(|s| s.strip_prefix(' '))
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::ModelFile(format!("expected field {key:?}, found {line:?}")))
}

fn config_value<'a>(config: &'a [(String, String)], key: &str) -> Result<&'a str> {
    config
        .iter()
        .find(|(k, _)| k == key)
        .map(|(_, v)| v.as_str())
        .ok_or_else(|| Error::ModelFile(format!("missing config key {key:?}")))
}

fn parse_config_value<T: std::str::FromStr>(config: &[(String, String)], key: &str) -> Result<T> {
    config_value(config, key)?
        .parse()
        .map_err(|_| Error::ModelFile(format!("bad value for config key {key:?}")))
}

impl TrainedModel {
    /// Writes the model to a versioned, checksummed text file.
    pub fn save(&self, path: &Path) -> Result<()> {
        let cfg = &self.config;
        let head = match cfg.head {
            Head::Classifier(k) => format!("classifier {k}"),
            Head::Regressor => "regressor".to_string(),
        };
        let config = vec![
            ("format_version".into(), MODEL_FORMAT_VERSION.to_string()),
            ("architecture".into(), cfg.architecture.as_str().to_string()),
            ("embedding_dim".into(), cfg.embedding_dim.to_string()),
            ("hidden_size".into(), cfg.hidden_size.to_string()),
            ("intermediate_layers".into(), cfg.intermediate_layers.to_string()),
            ("window".into(), cfg.window.to_string()),
            ("head".into(), head),
            ("dropout_prob".into(), format!("{:.16e}", cfg.dropout_prob)),
            ("seed".into(), cfg.seed.to_string()),
            ("optimizer.step_size".into(), format!("{:.16e}", cfg.optimizer.step_size)),
            ("optimizer.batch_size".into(), cfg.optimizer.batch_size.to_string()),
            ("optimizer.max_epochs".into(), cfg.optimizer.max_epochs.to_string()),
            ("optimizer.patience".into(), cfg.optimizer.patience.to_string()),
            ("optimizer.clip_norm".into(), format!("{:.16e}", cfg.optimizer.clip_norm)),
        ];
        let vocab: Vec<String> = (0..self.embedding.vocab().len())
            .map(|i| self.embedding.vocab().token_at(i).unwrap().to_string())
            .collect();
        let doc = Document {
            kind: "model".into(),
            config,
            vocab: Some(vocab),
            embedding: Some(EmbeddingBlock {
                dim: self.embedding.dim(),
                trainable: self.embedding.trainable,
                matrix: self.embedding.matrix().clone(),
            }),
            params: self
                .params
                .iter()
                .map(|(n, t)| (n.clone(), t.clone()))
                .collect(),
        };
        write_document(path, &doc)
    }

    /// Loads a model saved by [`TrainedModel::save`], verifying version
    /// and checksum.
    pub fn load(path: &Path) -> Result<TrainedModel> {
        let doc = read_document(path, "model")?;
        let version: u32 = parse_config_value(&doc.config, "format_version")?;
        if version != MODEL_FORMAT_VERSION {
            return Err(Error::ModelFile(format!(
                "format_version {version} unsupported (expected {MODEL_FORMAT_VERSION})"
            )));
        }
        let head_raw = config_value(&doc.config, "head")?;
        let head = if head_raw == "regressor" {
            Head::Regressor
        } else if let Some(k) = head_raw.strip_prefix("classifier ") {
            Head::Classifier(
                k.parse()
                    .map_err(|_| Error::ModelFile("bad classifier arity".into()))?,
            )
        } else {
            return Err(Error::ModelFile(format!("bad head {head_raw:?}")));
        };
        let config = ModelConfig {
            architecture: config_value(&doc.config, "architecture")?.parse()?,
            embedding_dim: parse_config_value(&doc.config, "embedding_dim")?,
            hidden_size: parse_config_value(&doc.config, "hidden_size")?,
            intermediate_layers: parse_config_value(&doc.config, "intermediate_layers")?,
            window: parse_config_value(&doc.config, "window")?,
            head,
            dropout_prob: parse_config_value(&doc.config, "dropout_prob")?,
            seed: parse_config_value(&doc.config, "seed")?,
            optimizer: OptimizerConfig {
                step_size: parse_config_value(&doc.config, "optimizer.step_size")?,
                batch_size: parse_config_value(&doc.config, "optimizer.batch_size")?,
                max_epochs: parse_config_value(&doc.config, "optimizer.max_epochs")?,
                patience: parse_config_value(&doc.config, "optimizer.patience")?,
                clip_norm: parse_config_value(&doc.config, "optimizer.clip_norm")?,
            },
        };

        let tokens = doc
            .vocab
            .ok_or_else(|| Error::ModelFile("model file lacks a vocabulary".into()))?;
        if tokens.len() < 2 || tokens[0] != UNKNOWN_TOKEN || tokens[1] != PAD_TOKEN {
            return Err(Error::ModelFile("vocabulary lacks reserved tokens".into()));
        }
        let vocab = Vocabulary::new(tokens[2..].iter().cloned())
            .map_err(|e| Error::ModelFile(e.to_string()))?;
        let emb = doc
            .embedding
            .ok_or_else(|| Error::ModelFile("model file lacks an embedding block".into()))?;
        let table = EmbeddingTable::from_full_matrix(vocab, emb.matrix, emb.trainable)
            .map_err(|e| Error::ModelFile(e.to_string()))?;

        let mut params = Params::default();
        for (name, tensor) in doc.params {
            params.insert(&name, tensor);
        }
        TrainedModel::from_parts(config, params, table)
    }
}
