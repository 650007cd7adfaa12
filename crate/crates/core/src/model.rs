//! The link model `x ↦ Π⁻¹(softmax⁺(v⁻¹(Wx + b)))` and its model file.

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Arith, GradEntry, ParamGradient, Plain, Tape};
use crate::blocks::{BlockParams, BlockShape, ConvexBlock, GradientChain};
use crate::data::SparseVector;
use crate::error::{Error, Result};
use crate::simplex::{argmax, log_probs_plus, softmax_plus_slice, unproject, SimplexPoint};

/// Version written to and required from model files.
pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Linear predictor plus learned inverse link.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkModel {
    n_classes: usize,
    n_features: usize,
    hidden: usize,
    layers: usize,
    /// `(C−1) × p`, row-major.
    w: Vec<f64>,
    b: Vec<f64>,
    chain: GradientChain,
}

impl LinkModel {
    /// Zero `W` and `b`, `blocks` randomly initialized blocks of width
    /// `hidden` and depth `layers`.
    pub fn new<R: Rng + ?Sized>(
        n_classes: usize,
        n_features: usize,
        blocks: usize,
        hidden: usize,
        layers: usize,
        rng: &mut R,
    ) -> Result<Self> {
        if n_classes < 2 {
            return Err(Error::TooFewClasses {
                min: 2,
                found: n_classes,
            });
        }
        let shape = BlockShape::new(n_classes - 1, hidden, layers)?;
        let d = n_classes - 1;
        Ok(Self {
            n_classes,
            n_features,
            hidden,
            layers,
            w: vec![0.0; d * n_features],
            b: vec![0.0; d],
            chain: GradientChain::init(blocks, shape, rng),
        })
    }

    pub fn from_parts(
        n_classes: usize,
        n_features: usize,
        w: Vec<f64>,
        b: Vec<f64>,
        chain: GradientChain,
    ) -> Result<Self> {
        if n_classes < 2 {
            return Err(Error::TooFewClasses {
                min: 2,
                found: n_classes,
            });
        }
        let d = n_classes - 1;
        if w.len() != d * n_features {
            return Err(Error::Dimension {
                expected: d * n_features,
                found: w.len(),
            });
        }
        if b.len() != d {
            return Err(Error::Dimension {
                expected: d,
                found: b.len(),
            });
        }
        let (hidden, layers) = match chain.blocks().first() {
            Some(block) => {
                if block.input_dim() != d {
                    return Err(Error::Dimension {
                        expected: d,
                        found: block.input_dim(),
                    });
                }
                let s = block.shape();
                if chain.blocks().iter().any(|b| b.shape() != s) {
                    return Err(Error::Config("all blocks must share one shape".into()));
                }
                (s.hidden, s.layers)
            }
            None => (1, 1),
        };
        Ok(Self {
            n_classes,
            n_features,
            hidden,
            layers,
            w,
            b,
            chain,
        })
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    /// Logit dimension `C − 1`.
    pub fn link_dim(&self) -> usize {
        self.n_classes - 1
    }

    pub fn n_blocks(&self) -> usize {
        self.chain.len()
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn layers(&self) -> usize {
        self.layers
    }

    pub fn weights(&self) -> &[f64] {
        &self.w
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.w
    }

    pub fn bias(&self) -> &[f64] {
        &self.b
    }

    pub fn bias_mut(&mut self) -> &mut [f64] {
        &mut self.b
    }

    pub fn chain(&self) -> &GradientChain {
        &self.chain
    }

    pub fn chain_mut(&mut self) -> &mut GradientChain {
        &mut self.chain
    }

    /// Total number of trainable scalars.
    pub fn param_count(&self) -> usize {
        self.w.len() + self.b.len() + self.chain.param_count()
    }

    /// Parameter groups in gradient order: `W`, `b`, then each block.
    pub fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = vec![&mut self.w, &mut self.b];
        for block in self.chain.blocks_mut() {
            out.push(block.params_mut());
        }
        out
    }

    /// All parameters flattened in gradient order.
    pub fn params_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        out.extend_from_slice(&self.w);
        out.extend_from_slice(&self.b);
        for block in self.chain.blocks() {
            out.extend_from_slice(block.params());
        }
        out
    }

    pub fn set_params_flat(&mut self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.param_count() {
            return Err(Error::Dimension {
                expected: self.param_count(),
                found: theta.len(),
            });
        }
        let mut off = 0;
        for slice in self.param_slices_mut() {
            let n = slice.len();
            slice.copy_from_slice(&theta[off..off + n]);
            off += n;
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.params_flat().iter().all(|v| v.is_finite())
    }

    fn check_row(&self, x: &SparseVector) -> Result<()> {
        if x.dim_hint() > self.n_features {
            return Err(Error::Dimension {
                expected: self.n_features,
                found: x.dim_hint(),
            });
        }
        Ok(())
    }

    fn check_link_input(&self, z: &[f64]) -> Result<()> {
        if z.len() != self.link_dim() {
            return Err(Error::Dimension {
                expected: self.link_dim(),
                found: z.len(),
            });
        }
        Ok(())
    }

    /// `Wx + b`.
    pub fn logits(&self, x: &SparseVector) -> Result<Vec<f64>> {
        self.check_row(x)?;
        let p = self.n_features;
        let mut z = self.b.clone();
        for (i, zi) in z.iter_mut().enumerate() {
            let row = &self.w[i * p..(i + 1) * p];
            for (j, v) in x.iter() {
                *zi += row[j] * v;
            }
        }
        Ok(z)
    }

    pub fn logits_dense(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.n_features {
            return Err(Error::Dimension {
                expected: self.n_features,
                found: x.len(),
            });
        }
        self.logits(&SparseVector::from_dense(x))
    }

    /// `v⁻¹(z)`, the chain output fed to `softmax⁺`.
    pub fn transform(&self, z: &[f64]) -> Result<Vec<f64>> {
        self.check_link_input(z)?;
        self.chain.apply(z)
    }

    /// The inverse link `softmax⁺ ∘ v⁻¹` on logit space, giving the first
    /// `C − 1` probabilities.
    pub fn inverse_link(&self, z: &[f64]) -> Result<Vec<f64>> {
        Ok(softmax_plus_slice(&self.transform(z)?).into_vec())
    }

    /// Log-probabilities of all `C` classes from logits `z`.
    pub fn log_probs_from_logits(&self, z: &[f64]) -> Result<Vec<f64>> {
        let t = self.transform(z)?;
        Ok(log_probs_plus(&mut Plain, &t))
    }

    pub fn log_probs(&self, x: &SparseVector) -> Result<Vec<f64>> {
        self.log_probs_from_logits(&self.logits(x)?)
    }

    pub fn predict_probs(&self, x: &SparseVector) -> Result<SimplexPoint> {
        let t = self.transform(&self.logits(x)?)?;
        unproject(&softmax_plus_slice(&t))
    }

    pub fn predict_probs_dense(&self, x: &[f64]) -> Result<SimplexPoint> {
        let t = self.transform(&self.logits_dense(x)?)?;
        unproject(&softmax_plus_slice(&t))
    }

    /// Most probable class in `1..=C`; ties go to the smallest index.
    pub fn predict_class(&self, x: &SparseVector) -> Result<usize> {
        Ok(self.predict_probs(x)?.argmax() + 1)
    }

    /// Adds `scale · ∇_θ nll(x, y)` to `grad` (flat gradient order) and
    /// returns `nll(x, y)`. `tape` is scratch space and is cleared first.
    ///
    /// `z = Wx + b` enters the tape as leaves; the gradients for `W` and `b`
    /// follow from `∂/∂z` by the chain rule outside the tape.
    pub fn accumulate_loss_grad(
        &self,
        tape: &mut Tape,
        x: &SparseVector,
        y: usize,
        scale: f64,
        grad: &mut [f64],
    ) -> Result<f64> {
        if y == 0 || y > self.n_classes {
            return Err(Error::LabelOutOfRange {
                label: y,
                classes: self.n_classes,
            });
        }
        if grad.len() != self.param_count() {
            return Err(Error::Dimension {
                expected: self.param_count(),
                found: grad.len(),
            });
        }
        let z = self.logits(x)?;
        tape.clear();
        let thetas: Vec<Vec<_>> = self.chain.blocks().iter().map(|b| tape.vars(b.params())).collect();
        let zv = tape.vars(&z);
        let t = self.chain.apply_on_tape(tape, &thetas, &zv)?;
        let lp = log_probs_plus(tape, &t);
        let loss = tape.neg(lp[y - 1]);
        let adj = tape.backward(loss)?;

        let (p, d) = (self.n_features, self.link_dim());
        let (gw, rest) = grad.split_at_mut(d * p);
        let (gb, gblocks) = rest.split_at_mut(d);
        for (i, &zi) in zv.iter().enumerate() {
            let dz = scale * adj.value(zi);
            gb[i] += dz;
            let row = &mut gw[i * p..(i + 1) * p];
            for (j, v) in x.iter() {
                row[j] += dz * v;
            }
        }
        let mut off = 0;
        for theta in &thetas {
            for (k, &v) in theta.iter().enumerate() {
                gblocks[off + k] += scale * adj.value(v);
            }
            off += theta.len();
        }
        Ok(tape.value(loss))
    }

    /// Gradient of `nll(x, y)` with every parameter (including `W` and `b`)
    /// recorded as a tape leaf. Slower than [`Self::accumulate_loss_grad`];
    /// reports parameters the loss cannot reach as structural zeros.
    pub fn loss_param_gradient(&self, x: &SparseVector, y: usize) -> Result<(f64, ParamGradient)> {
        self.check_row(x)?;
        if y == 0 || y > self.n_classes {
            return Err(Error::LabelOutOfRange {
                label: y,
                classes: self.n_classes,
            });
        }
        let mut tape = Tape::new();
        let wv = tape.vars(&self.w);
        let bv = tape.vars(&self.b);
        let thetas: Vec<Vec<_>> = self.chain.blocks().iter().map(|b| tape.vars(b.params())).collect();
        let p = self.n_features;
        let entries: Vec<(usize, f64)> = x.iter().collect();
        let z: Vec<_> = (0..self.link_dim())
            .map(|i| {
                let ws: Vec<_> = entries.iter().map(|&(j, _)| wv[i * p + j]).collect();
                let xs: Vec<_> = entries.iter().map(|&(_, v)| tape.constant(v)).collect();
                tape.affine_row(&ws, &xs, bv[i])
            })
            .collect();
        let t = self.chain.apply_on_tape(&mut tape, &thetas, &z)?;
        let lp = log_probs_plus(&mut tape, &t);
        let loss = tape.neg(lp[y - 1]);
        let mut all = wv;
        all.extend(bv);
        for theta in thetas {
            all.extend(theta);
        }
        let g = tape.param_gradient(loss, &all)?;
        Ok((tape.value(loss), g))
    }

    /// Flat gradient of `nll(x, y)` via [`Self::accumulate_loss_grad`].
    pub fn loss_grad(&self, x: &SparseVector, y: usize) -> Result<(f64, Vec<f64>)> {
        let mut grad = vec![0.0; self.param_count()];
        let loss = self.accumulate_loss_grad(&mut Tape::new(), x, y, 1.0, &mut grad)?;
        Ok((loss, grad))
    }

    pub fn save(&self, path: impl AsRef<Path>, manifest: Option<serde_json::Value>) -> Result<()> {
        let path = path.as_ref();
        let text = self.to_json(manifest)?;
        std::fs::write(path, text).map_err(|e| Error::file(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self, manifest: Option<serde_json::Value>) -> Result<String> {
        let p = self.n_features;
        let file = ModelFile {
            format_version: MODEL_FORMAT_VERSION,
            classes: self.n_classes,
            features: p,
            blocks: self.n_blocks(),
            hidden: self.hidden,
            layers: self.layers,
            weights: (0..self.link_dim()).map(|i| self.w[i * p..(i + 1) * p].to_vec()).collect(),
            bias: self.b.clone(),
            chain: self.chain.blocks().iter().map(ConvexBlock::to_params).collect(),
            manifest,
        };
        serde_json::to_string_pretty(&file).map_err(|e| Error::CorruptModel(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Version {
            format_version: u32,
        }
        let v: Version = serde_json::from_str(text).map_err(|e| Error::CorruptModel(e.to_string()))?;
        if v.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::ModelVersion {
                found: v.format_version,
                expected: MODEL_FORMAT_VERSION,
            });
        }
        let file: ModelFile = serde_json::from_str(text).map_err(|e| Error::CorruptModel(e.to_string()))?;
        file.into_model()
    }

    /// The manifest embedded in a model file, if any.
    pub fn manifest_of(text: &str) -> Result<Option<serde_json::Value>> {
        let file: ModelFile = serde_json::from_str(text).map_err(|e| Error::CorruptModel(e.to_string()))?;
        Ok(file.manifest)
    }
}

/// On-disk model layout (JSON).
#[derive(Debug, Serialize, Deserialize)]
struct ModelFile {
    format_version: u32,
    classes: usize,
    features: usize,
    blocks: usize,
    hidden: usize,
    layers: usize,
    /// `C − 1` rows of `p` weights.
    weights: Vec<Vec<f64>>,
    bias: Vec<f64>,
    chain: Vec<BlockParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    manifest: Option<serde_json::Value>,
}

impl ModelFile {
    fn into_model(self) -> Result<LinkModel> {
        if self.classes < 2 {
            return Err(Error::TooFewClasses {
                min: 2,
                found: self.classes,
            });
        }
        let d = self.classes - 1;
        let dim = |expected: usize, found: usize| Error::Dimension { expected, found };
        if self.weights.len() != d {
            return Err(dim(d, self.weights.len()));
        }
        if let Some(row) = self.weights.iter().find(|r| r.len() != self.features) {
            return Err(dim(self.features, row.len()));
        }
        if self.bias.len() != d {
            return Err(dim(d, self.bias.len()));
        }
        if self.chain.len() != self.blocks {
            return Err(dim(self.blocks, self.chain.len()));
        }
        let shape = BlockShape::new(d, self.hidden, self.layers)
            .map_err(|e| Error::CorruptModel(e.to_string()))?;
        let blocks = self
            .chain
            .iter()
            .map(|p| ConvexBlock::from_params(shape, p))
            .collect::<Result<Vec<_>>>()?;
        let w: Vec<f64> = self.weights.into_iter().flatten().collect();
        if w.iter().chain(&self.bias).any(|v| !v.is_finite()) {
            return Err(Error::CorruptModel("non-finite weight".into()));
        }
        let mut model = LinkModel::from_parts(self.classes, self.features, w, self.bias, GradientChain::new(blocks)?)?;
        model.hidden = self.hidden;
        model.layers = self.layers;
        Ok(model)
    }
}

/// Class index (`1..=C`) with the largest value; ties go to the smallest.
pub fn argmax_class(v: &[f64]) -> usize {
    argmax(v) + 1
}

/// Convenience: the structural-zero mask of a gradient.
pub fn structural_zeros(g: &ParamGradient) -> Vec<bool> {
    g.entries().iter().map(|e| matches!(e, GradEntry::StructuralZero)).collect()
}
