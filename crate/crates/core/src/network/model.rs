use crate::error::{Error, Result};
use crate::layers::{
    bridge_backward, bridge_forward, complex_avg_pool2d, complex_avg_pool2d_backward, complex_global_avg_pool,
    complex_global_avg_pool_backward, complex_relu, complex_relu_backward, init_linear, linear_real,
    linear_real_backward, LinearParams,
};
use crate::rng::stream;
use crate::tensor::{ComplexTensor, Real, Shape, Tensor};

use super::arch::ArchitectureSpec;
use super::block::{BlockCache, ConvBn, ConvBnCache, ResidualBlock, BUFFER_NAMES, PARAM_NAMES};

/// Complex residual classifier over spectral input.
#[derive(Debug, Clone, PartialEq)]
pub struct Model<T> {
    arch: ArchitectureSpec,
    input_channels: usize,
    pub stem: ConvBn<T>,
    /// Blocks grouped by stage.
    pub stages: Vec<Vec<ResidualBlock<T>>>,
    pub head: LinearParams<T>,
}

/// Activations recorded by a forward pass for the matching backward.
#[derive(Debug, Clone)]
pub struct Tape<T> {
    stem: ConvBnCache<T>,
    stem_out: ComplexTensor<T>,
    pool_input: Option<Shape>,
    blocks: Vec<BlockCache<T>>,
    features_shape: Shape,
    pooled: ComplexTensor<T>,
    bridged: Tensor<T>,
}

impl<T: Real> Model<T> {
    /// Deterministic initialization from `seed`.
    pub fn build(arch: &ArchitectureSpec, input_channels: usize, seed: u64) -> Result<Self> {
        arch.validate()?;
        if input_channels == 0 {
            return Err(Error::Config("model needs at least one input channel".into()));
        }
        let mut rng = stream(seed, "init", &[]);
        let stem = ConvBn::init(arch.stem.channels, input_channels, arch.stem.kernel, arch.stem.stride, &mut rng);
        let mut cin = arch.stem.channels;
        let mut stages = Vec::with_capacity(arch.stages.len());
        for s in &arch.stages {
            let mut blocks = Vec::with_capacity(s.blocks);
            for b in 0..s.blocks {
                let stride = if b == 0 { s.stride } else { 1 };
                blocks.push(ResidualBlock::init(cin, s.channels, stride, &mut rng));
                cin = s.channels;
            }
            stages.push(blocks);
        }
        let features = arch.head.bridge.out_features(cin);
        let head = init_linear(arch.head.classes, features, &mut rng);
        Ok(Self {
            arch: arch.clone(),
            input_channels,
            stem,
            stages,
            head,
        })
    }

    pub fn arch(&self) -> &ArchitectureSpec {
        &self.arch
    }

    pub fn input_channels(&self) -> usize {
        self.input_channels
    }

    pub fn classes(&self) -> usize {
        self.arch.head.classes
    }

    fn blocks(&self) -> impl Iterator<Item = &ResidualBlock<T>> {
        self.stages.iter().flatten()
    }

    pub fn forward(&self, x: &ComplexTensor<T>, training: bool) -> Result<(Tensor<T>, Tape<T>)> {
        let (_, c, _, _) = x.shape().nchw()?;
        if c != self.input_channels {
            return Err(Error::Config(format!(
                "input has {c} channels but the model expects {}; check the patch count and layout",
                self.input_channels
            )));
        }
        let (stem_out, stem) = self.stem.forward(x, training)?;
        let mut h = complex_relu(&stem_out);
        let pool_input = if self.arch.stem.pool {
            let s = h.shape().clone();
            h = complex_avg_pool2d(&h, 2)?;
            Some(s)
        } else {
            None
        };
        let mut blocks = Vec::new();
        for block in self.blocks() {
            let (out, cache) = block.forward(&h, training)?;
            blocks.push(cache);
            h = out;
        }
        let features_shape = h.shape().clone();
        let pooled = complex_global_avg_pool(&h)?;
        let bridged = bridge_forward(&pooled, self.arch.head.bridge)?;
        let logits = linear_real(&bridged, &self.head)?;
        Ok((
            logits,
            Tape {
                stem,
                stem_out,
                pool_input,
                blocks,
                features_shape,
                pooled,
                bridged,
            },
        ))
    }

    /// Eval-mode logits.
    pub fn logits(&self, x: &ComplexTensor<T>) -> Result<Tensor<T>> {
        Ok(self.forward(x, false)?.0)
    }

    /// Gradients of every parameter, in [`Model::params`] order.
    pub fn backward(&self, tape: &Tape<T>, grad_logits: &Tensor<T>) -> Result<Vec<Tensor<T>>> {
        let head = linear_real_backward(&tape.bridged, &self.head, grad_logits)?;
        let g_pooled = bridge_backward(&tape.pooled, self.arch.head.bridge, &head.input)?;
        let mut g = complex_global_avg_pool_backward(&tape.features_shape, &g_pooled)?;
        let blocks: Vec<&ResidualBlock<T>> = self.blocks().collect();
        let mut block_grads = Vec::with_capacity(blocks.len());
        for (block, cache) in blocks.iter().zip(&tape.blocks).rev() {
            let (gx, grad) = block.backward(cache, &g)?;
            block_grads.push(grad);
            g = gx;
        }
        block_grads.reverse();
        if let Some(s) = &tape.pool_input {
            g = complex_avg_pool2d_backward(s, 2, &g)?;
        }
        let g = complex_relu_backward(&tape.stem_out, &g)?;
        let (_, stem) = self.stem.backward(&tape.stem, &g)?;

        let mut out = Vec::new();
        out.extend(stem.into_array());
        for grad in block_grads {
            for unit in grad.into_units() {
                out.extend(unit.into_array());
            }
        }
        out.push(head.weight);
        out.push(head.bias);
        Ok(out)
    }

    /// Folds the batch statistics of a training-mode tape into the
    /// running BN statistics.
    pub fn apply_stats(&mut self, tape: &Tape<T>) {
        self.stem.apply_stats(&tape.stem);
        for (block, cache) in self.stages.iter_mut().flatten().zip(&tape.blocks) {
            block.apply_stats(cache);
        }
    }

    fn named_units(&self) -> Vec<(String, &ConvBn<T>)> {
        let mut v = vec![("stem".to_string(), &self.stem)];
        for (s, stage) in self.stages.iter().enumerate() {
            for (b, block) in stage.iter().enumerate() {
                for (name, unit) in block.units() {
                    v.push((format!("stages.{s}.{b}.{name}"), unit));
                }
            }
        }
        v
    }

    fn units_mut(&mut self) -> Vec<&mut ConvBn<T>> {
        units_of(&mut self.stem, &mut self.stages)
    }

    /// Learnable tensors with stable names.
    pub fn params(&self) -> Vec<(String, &Tensor<T>)> {
        let mut v = Vec::new();
        for (prefix, unit) in self.named_units() {
            for (name, t) in PARAM_NAMES.iter().zip(unit.params()) {
                v.push((format!("{prefix}.{name}"), t));
            }
        }
        v.push(("head.weight".into(), &self.head.weight));
        v.push(("head.bias".into(), &self.head.bias));
        v
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let Model { stem, stages, head, .. } = self;
        let mut v: Vec<&mut Tensor<T>> = units_of(stem, stages).into_iter().flat_map(ConvBn::params_mut).collect();
        v.push(&mut head.weight);
        v.push(&mut head.bias);
        v
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|(_, t)| t.len()).sum()
    }

    /// Every stored tensor, learnable or not, in checkpoint order: per
    /// unit its parameters then its running statistics, then the head.
    pub fn state(&self) -> Vec<(String, &Tensor<T>)> {
        let mut v = Vec::new();
        for (prefix, unit) in self.named_units() {
            for (name, t) in PARAM_NAMES.iter().zip(unit.params()) {
                v.push((format!("{prefix}.{name}"), t));
            }
            for (name, t) in BUFFER_NAMES.iter().zip(unit.buffers()) {
                v.push((format!("{prefix}.{name}"), t));
            }
        }
        v.push(("head.weight".into(), &self.head.weight));
        v.push(("head.bias".into(), &self.head.bias));
        v
    }

    pub fn state_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let Model { stem, stages, head, .. } = self;
        let mut v = Vec::new();
        for unit in units_of(stem, stages) {
            let ConvBn { conv, bn } = unit;
            v.extend([&mut conv.kernel_re, &mut conv.kernel_im, &mut bn.gamma, &mut bn.beta]);
            v.extend([&mut bn.running_mean, &mut bn.running_cov]);
        }
        v.push(&mut head.weight);
        v.push(&mut head.bias);
        v
    }

    /// Checks every BN gamma is PSD within `tol`.
    pub fn check_gamma_psd(&self, tol: f64) -> Result<()> {
        for (name, unit) in self.named_units() {
            unit.bn.check_gamma_psd(tol).map_err(|e| Error::Numeric(format!("{name}: {e}")))?;
        }
        Ok(())
    }

    pub fn cast<U: Real>(&self) -> Model<U> {
        let mut out = Model::<U>::build(&self.arch, self.input_channels, 0).expect("architecture already validated");
        for (dst, (_, src)) in out.state_mut().into_iter().zip(self.state()) {
            *dst = src.cast();
        }
        let (mut m, mut e) = (Vec::new(), Vec::new());
        for (_, unit) in self.named_units() {
            m.push(unit.bn.momentum);
            e.push(unit.bn.eps);
        }
        for ((unit, momentum), eps) in out.units_mut().into_iter().zip(m).zip(e) {
            unit.bn.momentum = momentum;
            unit.bn.eps = eps;
        }
        out
    }
}

fn units_of<'a, T: Real>(stem: &'a mut ConvBn<T>, stages: &'a mut [Vec<ResidualBlock<T>>]) -> Vec<&'a mut ConvBn<T>> {
    let mut v = vec![stem];
    for block in stages.iter_mut().flatten() {
        v.extend(block.units_mut());
    }
    v
}
