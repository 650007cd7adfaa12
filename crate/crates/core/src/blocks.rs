//! Strongly convex scalar blocks and the gradient chain they form.
//!
//! Each block is a fully input-convex network
//!
//! ```text
//! z_1 = L⁺_1 x + c_1
//! z_k = F_k x + L⁺_k s(z_{k-1}) + c_k        k = 2..=M+1
//! g(x) = s(w_0) s(z_{M+1}) + s(w_1) ‖x‖² / 2
//! ```
//!
//! where `s` is softplus, the `L⁺` matrices are softplus images of
//! unconstrained storage (so strictly positive), layers `1..=M` have `H`
//! outputs and layer `M+1` has one. The quadratic term makes every block
//! `s(w_1)`-strongly convex, so `∇g` is a strictly monotone bijection.
//!
//! A [`GradientChain`] composes block gradients as
//! `∇g_1 ∘ ∇g_2 ∘ … ∘ ∇g_B`: the last block is applied first.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{softplus, Arith, Plain, Tape, Var};
use crate::error::{Error, Result};

/// Sizes of one block: input dimension `C-1`, hidden width `H`, depth `M`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockShape {
    pub input_dim: usize,
    pub hidden: usize,
    pub layers: usize,
}

/// Offsets of one layer's parameters inside the flat block vector.
#[derive(Debug, Clone, Copy)]
struct LayerSpan {
    out: usize,
    inputs: usize,
    /// `out × inputs` unconstrained storage of the positive weights.
    pos: usize,
    /// `out × input_dim` free weights on `x`; absent for the first layer.
    free: Option<usize>,
    bias: usize,
}

impl BlockShape {
    pub fn new(input_dim: usize, hidden: usize, layers: usize) -> Result<Self> {
        if input_dim == 0 || hidden == 0 || layers == 0 {
            return Err(Error::Config(format!(
                "block sizes must be positive (input_dim {input_dim}, hidden {hidden}, layers {layers})"
            )));
        }
        Ok(Self {
            input_dim,
            hidden,
            layers,
        })
    }

    fn spans(&self) -> Vec<LayerSpan> {
        let (d, h, m) = (self.input_dim, self.hidden, self.layers);
        let mut spans = Vec::with_capacity(m + 1);
        let mut off = 0;
        for k in 0..=m {
            let out = if k == m { 1 } else { h };
            let inputs = if k == 0 { d } else { h };
            let pos = off;
            off += out * inputs;
            let free = (k > 0).then(|| {
                let f = off;
                off += out * d;
                f
            });
            let bias = off;
            off += out;
            spans.push(LayerSpan {
                out,
                inputs,
                pos,
                free,
                bias,
            });
        }
        spans
    }

    /// Number of scalars in the flat parameter vector.
    pub fn param_count(&self) -> usize {
        let (d, h, m) = (self.input_dim, self.hidden, self.layers);
        // first layer, M-1 hidden layers, scalar output layer, w0 and w1
        (h * d + h) + (m - 1) * (h * h + h * d + h) + (h + d + 1) + 2
    }

    fn w0_index(&self) -> usize {
        self.param_count() - 2
    }

    fn w1_index(&self) -> usize {
        self.param_count() - 1
    }
}

/// Serialized form of one layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerParams {
    /// Unconstrained storage; the weights used are `softplus` of these.
    pub raw_pos_weights: Vec<Vec<f64>>,
    /// Free weights on the block input (empty for the first layer).
    pub free_weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
}

/// Serialized form of a block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockParams {
    pub layers: Vec<LayerParams>,
    pub raw_w0: f64,
    pub raw_w1: f64,
}

/// One input-convex block `g`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvexBlock {
    shape: BlockShape,
    params: Vec<f64>,
}

/// Evaluates `g(x)` for the block described by `shape` with flat
/// parameters `theta`, on any arithmetic.
pub fn block_forward<A: Arith>(shape: &BlockShape, ar: &mut A, theta: &[A::S], x: &[A::S]) -> A::S {
    let spans = shape.spans();
    let mut z: Vec<A::S> = Vec::new();
    for (k, span) in spans.iter().enumerate() {
        let input: Vec<A::S> = if k == 0 {
            x.to_vec()
        } else {
            z.iter().map(|&v| ar.softplus(v)).collect()
        };
        let mut next = Vec::with_capacity(span.out);
        for r in 0..span.out {
            let mut acc = theta[span.bias + r];
            if let Some(free) = span.free {
                let row = &theta[free + r * shape.input_dim..free + (r + 1) * shape.input_dim];
                acc = ar.affine_row(row, x, acc);
            }
            let raw = &theta[span.pos + r * span.inputs..span.pos + (r + 1) * span.inputs];
            let pos: Vec<A::S> = raw.iter().map(|&w| ar.softplus(w)).collect();
            acc = ar.affine_row(&pos, &input, acc);
            next.push(acc);
        }
        z = next;
    }
    let h = ar.softplus(z[0]);
    let s0 = ar.softplus(theta[shape.w0_index()]);
    let s1 = ar.softplus(theta[shape.w1_index()]);
    let convex_part = ar.mul(s0, h);
    let quad = ar.half_sq_norm(x);
    let quad = ar.mul(s1, quad);
    ar.add(convex_part, quad)
}

impl ConvexBlock {
    /// Random block: positive-path storage and free weights uniform on
    /// `[-a, a]` with `a = 1/√fan_in`, biases likewise with the layer's input
    /// width, `w_0 = w_1 = 0`.
    pub fn init<R: Rng + ?Sized>(shape: BlockShape, rng: &mut R) -> Self {
        let mut params = vec![0.0; shape.param_count()];
        for span in shape.spans() {
            let a_pos = 1.0 / (span.inputs as f64).sqrt();
            for v in &mut params[span.pos..span.pos + span.out * span.inputs] {
                *v = rng.random_range(-a_pos..=a_pos);
            }
            if let Some(free) = span.free {
                let a = 1.0 / (shape.input_dim as f64).sqrt();
                for v in &mut params[free..free + span.out * shape.input_dim] {
                    *v = rng.random_range(-a..=a);
                }
            }
            for v in &mut params[span.bias..span.bias + span.out] {
                *v = rng.random_range(-a_pos..=a_pos);
            }
        }
        Self { shape, params }
    }

    pub fn from_flat(shape: BlockShape, params: Vec<f64>) -> Result<Self> {
        if params.len() != shape.param_count() {
            return Err(Error::Dimension {
                expected: shape.param_count(),
                found: params.len(),
            });
        }
        Ok(Self { shape, params })
    }

    pub fn shape(&self) -> BlockShape {
        self.shape
    }

    pub fn input_dim(&self) -> usize {
        self.shape.input_dim
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn raw_w0(&self) -> f64 {
        self.params[self.shape.w0_index()]
    }

    pub fn raw_w1(&self) -> f64 {
        self.params[self.shape.w1_index()]
    }

    pub fn set_raw_w1(&mut self, v: f64) {
        let i = self.shape.w1_index();
        self.params[i] = v;
    }

    /// Strong-convexity modulus `softplus(w_1)`.
    pub fn strong_convexity(&self) -> f64 {
        softplus(self.raw_w1())
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.shape.input_dim {
            return Err(Error::Dimension {
                expected: self.shape.input_dim,
                found: x.len(),
            });
        }
        Ok(())
    }

    /// `g(x)`.
    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        Ok(block_forward(&self.shape, &mut Plain, &self.params, x))
    }

    /// `∇g(x)` by a reverse pass over the recorded forward evaluation.
    pub fn grad(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        let mut tape = Tape::with_capacity(8 * self.params.len() + 64);
        let theta = tape.constants(&self.params);
        let xs = tape.vars(x);
        let out = block_forward(&self.shape, &mut tape, &theta, &xs);
        let adj = tape.backward(out)?;
        Ok(xs.iter().map(|&v| adj.value(v)).collect())
    }

    /// Records `∇g(x)` on `tape` so the result can be differentiated again
    /// (with respect to both `x` and the parameters `theta`).
    pub fn grad_on_tape(&self, tape: &mut Tape, theta: &[Var], x: &[Var]) -> Result<Vec<Var>> {
        if x.len() != self.shape.input_dim {
            return Err(Error::Dimension {
                expected: self.shape.input_dim,
                found: x.len(),
            });
        }
        if theta.len() != self.params.len() {
            return Err(Error::Dimension {
                expected: self.params.len(),
                found: theta.len(),
            });
        }
        let out = block_forward(&self.shape, tape, theta, x);
        tape.grad(out, x)
    }

    pub fn to_params(&self) -> BlockParams {
        let d = self.shape.input_dim;
        let layers = self
            .shape
            .spans()
            .iter()
            .map(|span| {
                let matrix = |start: usize, cols: usize| -> Vec<Vec<f64>> {
                    (0..span.out)
                        .map(|r| self.params[start + r * cols..start + (r + 1) * cols].to_vec())
                        .collect()
                };
                LayerParams {
                    raw_pos_weights: matrix(span.pos, span.inputs),
                    free_weights: span.free.map(|f| matrix(f, d)).unwrap_or_default(),
                    bias: self.params[span.bias..span.bias + span.out].to_vec(),
                }
            })
            .collect();
        BlockParams {
            layers,
            raw_w0: self.raw_w0(),
            raw_w1: self.raw_w1(),
        }
    }

    pub fn from_params(shape: BlockShape, p: &BlockParams) -> Result<Self> {
        let spans = shape.spans();
        let corrupt = |what: String| Error::CorruptModel(what);
        if p.layers.len() != spans.len() {
            return Err(corrupt(format!(
                "block has {} layers, shape needs {}",
                p.layers.len(),
                spans.len()
            )));
        }
        let mut params = vec![0.0; shape.param_count()];
        let d = shape.input_dim;
        for (k, (span, layer)) in spans.iter().zip(&p.layers).enumerate() {
            let mut fill = |start: usize, rows: &[Vec<f64>], cols: usize, name: &str| {
                if rows.len() != span.out || rows.iter().any(|r| r.len() != cols) {
                    return Err(corrupt(format!(
                        "layer {k} {name} must be {}×{cols}",
                        span.out
                    )));
                }
                for (r, row) in rows.iter().enumerate() {
                    params[start + r * cols..start + (r + 1) * cols].copy_from_slice(row);
                }
                Ok(())
            };
            fill(span.pos, &layer.raw_pos_weights, span.inputs, "raw_pos_weights")?;
            match span.free {
                Some(f) => fill(f, &layer.free_weights, d, "free_weights")?,
                None if !layer.free_weights.is_empty() => {
                    return Err(corrupt("first layer has no free weights".into()))
                }
                None => {}
            }
            if layer.bias.len() != span.out {
                return Err(corrupt(format!("layer {k} bias must have {} entries", span.out)));
            }
            params[span.bias..span.bias + span.out].copy_from_slice(&layer.bias);
        }
        params[shape.w0_index()] = p.raw_w0;
        params[shape.w1_index()] = p.raw_w1;
        if params.iter().any(|v| !v.is_finite()) {
            return Err(corrupt("non-finite block parameter".into()));
        }
        Ok(Self { shape, params })
    }
}

/// `v⁻¹ = ∇g_1 ∘ … ∘ ∇g_B`; empty means the identity.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GradientChain {
    blocks: Vec<ConvexBlock>,
}

impl GradientChain {
    pub fn identity() -> Self {
        Self::default()
    }

    pub fn new(blocks: Vec<ConvexBlock>) -> Result<Self> {
        if let Some(first) = blocks.first() {
            let d = first.input_dim();
            if let Some(b) = blocks.iter().find(|b| b.input_dim() != d) {
                return Err(Error::Dimension {
                    expected: d,
                    found: b.input_dim(),
                });
            }
        }
        Ok(Self { blocks })
    }

    pub fn init<R: Rng + ?Sized>(count: usize, shape: BlockShape, rng: &mut R) -> Self {
        Self {
            blocks: (0..count).map(|_| ConvexBlock::init(shape, rng)).collect(),
        }
    }

    pub fn blocks(&self) -> &[ConvexBlock] {
        &self.blocks
    }

    pub fn blocks_mut(&mut self) -> &mut [ConvexBlock] {
        &mut self.blocks
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn param_count(&self) -> usize {
        self.blocks.iter().map(|b| b.params.len()).sum()
    }

    /// Applies `∇g_B` first and `∇g_1` last.
    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut y = x.to_vec();
        for block in self.blocks.iter().rev() {
            y = block.grad(&y)?;
        }
        Ok(y)
    }

    /// Records the chain on `tape`. `thetas[i]` are the parameter variables
    /// of block `i`.
    pub fn apply_on_tape(&self, tape: &mut Tape, thetas: &[Vec<Var>], x: &[Var]) -> Result<Vec<Var>> {
        let mut y = x.to_vec();
        for (block, theta) in self.blocks.iter().zip(thetas).rev() {
            y = block.grad_on_tape(tape, theta, &y)?;
        }
        Ok(y)
    }
}
