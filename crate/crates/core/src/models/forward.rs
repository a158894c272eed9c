//! Architecture forward passes, written once against a small compute
//! abstraction so the plain (inference) and taped (training/gradient)
//! paths cannot drift apart.

use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::models::{Architecture, ModelConfig, Params};
use crate::tensor::{NodeId, Tape, Tensor};

/// Compute context: either raw tensor math or tape-recorded operations.
///
/// Shapes are validated by the callers before a forward starts, so the
/// methods themselves are infallible; a shape mismatch inside a forward
/// is a bug, not an input error.
pub(crate) trait Ctx {
    type H: Clone;
    fn constant(&mut self, t: Tensor) -> Self::H;
    fn param(&mut self, name: &str) -> Self::H;
    fn matvec(&mut self, w: &Self::H, x: &Self::H) -> Self::H;
    fn add(&mut self, a: &Self::H, b: &Self::H) -> Self::H;
    fn mul(&mut self, a: &Self::H, b: &Self::H) -> Self::H;
    fn tanh(&mut self, x: &Self::H) -> Self::H;
    fn sigmoid(&mut self, x: &Self::H) -> Self::H;
    fn concat(&mut self, parts: &[Self::H]) -> Self::H;
    fn mask(&mut self, x: &Self::H, m: &Tensor) -> Self::H;
    fn row(&mut self, m: &Self::H, r: usize) -> Self::H;
    fn tensor(&self, h: &Self::H) -> Tensor;
}

/// Handle used by the plain path: parameters are borrowed, computed
/// values are owned.
#[derive(Clone)]
pub(crate) enum PlainH<'a> {
    Owned(Tensor),
    Borrowed(&'a Tensor),
}

impl PlainH<'_> {
    fn get(&self) -> &Tensor {
        match self {
            PlainH::Owned(t) => t,
            PlainH::Borrowed(t) => t,
        }
    }
}

/// Direct tensor evaluation against a parameter collection.
pub(crate) struct PlainCtx<'a> {
    pub params: &'a Params,
}

impl<'a> Ctx for PlainCtx<'a> {
    type H = PlainH<'a>;

    fn constant(&mut self, t: Tensor) -> Self::H {
        PlainH::Owned(t)
    }

    fn param(&mut self, name: &str) -> Self::H {
        PlainH::Borrowed(self.params.get(name))
    }

    fn matvec(&mut self, w: &Self::H, x: &Self::H) -> Self::H {
        PlainH::Owned(w.get().matvec(x.get()).expect("matvec shape"))
    }

    fn add(&mut self, a: &Self::H, b: &Self::H) -> Self::H {
        PlainH::Owned(a.get().add(b.get()).expect("add shape"))
    }

    fn mul(&mut self, a: &Self::H, b: &Self::H) -> Self::H {
        PlainH::Owned(a.get().mul(b.get()).expect("mul shape"))
    }

    fn tanh(&mut self, x: &Self::H) -> Self::H {
        PlainH::Owned(x.get().tanh())
    }

    fn sigmoid(&mut self, x: &Self::H) -> Self::H {
        PlainH::Owned(x.get().sigmoid())
    }

    fn concat(&mut self, parts: &[Self::H]) -> Self::H {
        let tensors: Vec<&Tensor> = parts.iter().map(|p| p.get()).collect();
        PlainH::Owned(Tensor::concat(&tensors).expect("concat shape"))
    }

    fn mask(&mut self, x: &Self::H, m: &Tensor) -> Self::H {
        PlainH::Owned(x.get().mask(m).expect("mask shape"))
    }

    fn row(&mut self, m: &Self::H, r: usize) -> Self::H {
        PlainH::Owned(m.get().row(r).expect("row index"))
    }

    fn tensor(&self, h: &Self::H) -> Tensor {
        h.get().clone()
    }
}

/// Tape-recording evaluation; parameters were registered as leaves.
pub(crate) struct TapeCtx<'a> {
    pub tape: &'a mut Tape,
    pub params: &'a BTreeMap<String, NodeId>,
}

impl Ctx for TapeCtx<'_> {
    type H = NodeId;

    fn constant(&mut self, t: Tensor) -> Self::H {
        self.tape.leaf(t)
    }

    fn param(&mut self, name: &str) -> Self::H {
        *self
            .params
            .get(name)
            .unwrap_or_else(|| panic!("parameter {name} not registered on tape"))
    }

    fn matvec(&mut self, w: &Self::H, x: &Self::H) -> Self::H {
        self.tape.matvec(*w, *x).expect("matvec shape")
    }

    fn add(&mut self, a: &Self::H, b: &Self::H) -> Self::H {
        self.tape.add(*a, *b).expect("add shape")
    }

    fn mul(&mut self, a: &Self::H, b: &Self::H) -> Self::H {
        self.tape.mul(*a, *b).expect("mul shape")
    }

    fn tanh(&mut self, x: &Self::H) -> Self::H {
        self.tape.tanh(*x)
    }

    fn sigmoid(&mut self, x: &Self::H) -> Self::H {
        self.tape.sigmoid(*x)
    }

    fn concat(&mut self, parts: &[Self::H]) -> Self::H {
        self.tape.concat(parts).expect("concat shape")
    }

    fn mask(&mut self, x: &Self::H, m: &Tensor) -> Self::H {
        self.tape.mask(*x, m).expect("mask shape")
    }

    fn row(&mut self, m: &Self::H, r: usize) -> Self::H {
        self.tape.row(*m, r).expect("row index")
    }

    fn tensor(&self, h: &Self::H) -> Tensor {
        self.tape.value(*h).clone()
    }
}

/// Inverted-dropout mask source. Inactive at inference: with no rng or a
/// zero probability, `sample` never yields a mask, so the erasure-capable
/// forward is exactly the plain forward.
pub(crate) struct DropoutSampler<'r> {
    prob: f64,
    rng: Option<&'r mut ChaCha8Rng>,
}

impl<'r> DropoutSampler<'r> {
    pub fn training(prob: f64, rng: &'r mut ChaCha8Rng) -> Self {
        DropoutSampler {
            prob,
            rng: Some(rng),
        }
    }

    pub fn inference() -> Self {
        DropoutSampler { prob: 0.0, rng: None }
    }

    fn sample(&mut self, width: usize) -> Option<Tensor> {
        let rng = self.rng.as_deref_mut()?;
        if self.prob <= 0.0 {
            return None;
        }
        let keep = 1.0 - self.prob;
        let values = (0..width)
            .map(|_| {
                if rng.gen::<f64>() < keep {
                    1.0 / keep
                } else {
                    0.0
                }
            })
            .collect();
        Some(Tensor::vector(values))
    }
}

/// Hidden-unit erasure masks keyed by layer index (1-based).
pub(crate) type UnitMasks = BTreeMap<usize, Tensor>;

/// Builds the all-ones-except-`unit` mask for a layer of `width` units.
pub(crate) fn unit_mask(width: usize, unit: usize) -> Tensor {
    let mut values = vec![1.0; width];
    values[unit] = 0.0;
    Tensor::vector(values)
}

fn affine<C: Ctx>(ctx: &mut C, w: &str, b: &str, x: &C::H) -> C::H {
    let w = ctx.param(w);
    let b = ctx.param(b);
    let wx = ctx.matvec(&w, x);
    ctx.add(&wx, &b)
}

fn head_out<C: Ctx>(ctx: &mut C, rep: &C::H) -> C::H {
    affine(ctx, "head.w", "head.b", rep)
}

/// Window-MLP: feature -> [linear -> tanh] x layers -> linear head.
/// Dropout applies to the embedding-layer output (the feature itself)
/// and to each intermediate activation.
pub(crate) fn mlp_output<C: Ctx>(
    ctx: &mut C,
    cfg: &ModelConfig,
    feature: C::H,
    unit_masks: &UnitMasks,
    dropout: &mut DropoutSampler,
) -> C::H {
    let mut h = feature;
    if let Some(m) = dropout.sample(cfg.window * cfg.embedding_dim) {
        h = ctx.mask(&h, &m);
    }
    for layer in 1..=cfg.intermediate_layers {
        let z = affine(ctx, &format!("mlp.w{layer}"), &format!("mlp.b{layer}"), &h);
        h = ctx.tanh(&z);
        if let Some(m) = unit_masks.get(&layer) {
            h = ctx.mask(&h, m);
        }
        if let Some(m) = dropout.sample(cfg.hidden_size) {
            h = ctx.mask(&h, &m);
        }
    }
    head_out(ctx, &h)
}

pub(crate) struct SeqOut<H> {
    pub head_out: H,
    /// Per-token representation at each time step (forward/backward
    /// concatenation for the bidirectional model). Empty unless requested.
    pub reps: Vec<H>,
}

fn rnn_chain<C: Ctx>(
    ctx: &mut C,
    cfg: &ModelConfig,
    inputs: &[C::H],
    erase: Option<&Tensor>,
) -> Vec<C::H> {
    let mut h = ctx.constant(Tensor::zeros(vec![cfg.hidden_size]));
    let mut states = Vec::with_capacity(inputs.len());
    for x in inputs {
        let wx = affine(ctx, "rnn.wx", "rnn.b", x);
        let whp = ctx.param("rnn.wh");
        let wh = ctx.matvec(&whp, &h);
        let z = ctx.add(&wx, &wh);
        h = ctx.tanh(&z);
        if let Some(m) = erase {
            h = ctx.mask(&h, m);
        }
        states.push(h.clone());
    }
    states
}

fn lstm_chain<C: Ctx>(
    ctx: &mut C,
    cfg: &ModelConfig,
    prefix: &str,
    inputs: &[C::H],
    erase: Option<&Tensor>,
) -> Vec<C::H> {
    let mut h = ctx.constant(Tensor::zeros(vec![cfg.hidden_size]));
    let mut c = ctx.constant(Tensor::zeros(vec![cfg.hidden_size]));
    let mut states = Vec::with_capacity(inputs.len());
    let gate = |ctx: &mut C, name: &str, x: &C::H, h: &C::H| {
        let zx = affine(ctx, &format!("{name}.wx"), &format!("{name}.b"), x);
        let whp = ctx.param(&format!("{name}.wh"));
        let zh = ctx.matvec(&whp, h);
        ctx.add(&zx, &zh)
    };
    for x in inputs {
        let zi = gate(ctx, &format!("{prefix}.i"), x, &h);
        let i = ctx.sigmoid(&zi);
        let zf = gate(ctx, &format!("{prefix}.f"), x, &h);
        let f = ctx.sigmoid(&zf);
        let zo = gate(ctx, &format!("{prefix}.o"), x, &h);
        let o = ctx.sigmoid(&zo);
        let zc = gate(ctx, &format!("{prefix}.c"), x, &h);
        let cand = ctx.tanh(&zc);
        let fc = ctx.mul(&f, &c);
        let ic = ctx.mul(&i, &cand);
        c = ctx.add(&fc, &ic);
        let tc = ctx.tanh(&c);
        h = ctx.mul(&o, &tc);
        if let Some(m) = erase {
            h = ctx.mask(&h, m);
        }
        states.push(h.clone());
    }
    states
}

/// Sequence models: unroll, classify (or regress) from the final
/// representation. Dropout applies to the representation fed to the head.
pub(crate) fn seq_output<C: Ctx>(
    ctx: &mut C,
    cfg: &ModelConfig,
    inputs: &[C::H],
    unit_masks: &UnitMasks,
    dropout: &mut DropoutSampler,
    collect_reps: bool,
) -> SeqOut<C::H> {
    assert!(!inputs.is_empty(), "sequence forward needs at least one token");
    let (mut rep, reps) = match cfg.architecture {
        Architecture::Rnn => {
            let states = rnn_chain(ctx, cfg, inputs, unit_masks.get(&1));
            let rep = states.last().unwrap().clone();
            (rep, if collect_reps { states } else { Vec::new() })
        }
        Architecture::Lstm => {
            let states = lstm_chain(ctx, cfg, "lstm", inputs, unit_masks.get(&1));
            let rep = states.last().unwrap().clone();
            (rep, if collect_reps { states } else { Vec::new() })
        }
        Architecture::BiLstm => {
            let fwd = lstm_chain(ctx, cfg, "fwd", inputs, unit_masks.get(&1));
            let reversed: Vec<C::H> = inputs.iter().rev().cloned().collect();
            let bwd_rev = lstm_chain(ctx, cfg, "bwd", &reversed, unit_masks.get(&2));
            // bwd_rev[i] is the state after consuming position n-1-i;
            // the state at position t is bwd_rev[n-1-t].
            let n = inputs.len();
            let rep = ctx.concat(&[fwd[n - 1].clone(), bwd_rev[n - 1].clone()]);
            let reps = if collect_reps {
                (0..n)
                    .map(|t| ctx.concat(&[fwd[t].clone(), bwd_rev[n - 1 - t].clone()]))
                    .collect()
            } else {
                Vec::new()
            };
            (rep, reps)
        }
        Architecture::WindowMlp => unreachable!("window model is not a sequence model"),
    };
    let rep_width = match cfg.architecture {
        Architecture::BiLstm => 2 * cfg.hidden_size,
        _ => cfg.hidden_size,
    };
    if let Some(m) = dropout.sample(rep_width) {
        rep = ctx.mask(&rep, &m);
    }
    let head_out = head_out(ctx, &rep);
    SeqOut { head_out, reps }
}
