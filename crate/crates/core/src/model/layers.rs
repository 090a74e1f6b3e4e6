//! Parameter groups shared by the two networks.

use nf_autograd::{uniform_fan_in, BatchNormConfig, BufferId, ParamId, ParamStore, Scalar, Tape, Tensor, Var};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::ForwardCtx;
use crate::data::FEATURE_DIMS;
use crate::error::{Error, Result};

/// Two stride-1 convolutions with ReLU, flatten, dense `a1` with ReLU.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvBranchConfig {
    pub feature_dims: [usize; 3],
    pub conv1_channels: usize,
    pub conv2_channels: usize,
    pub kernel: usize,
    pub padding: usize,
    pub a1_width: usize,
}

impl Default for ConvBranchConfig {
    fn default() -> Self {
        ConvBranchConfig {
            feature_dims: FEATURE_DIMS,
            conv1_channels: 64,
            conv2_channels: 32,
            kernel: 3,
            padding: 1,
            a1_width: 512,
        }
    }
}

impl ConvBranchConfig {
    fn out_hw(&self) -> Result<(usize, usize)> {
        let [_, h, w] = self.feature_dims;
        let shrink = |d: usize| (d + 4 * self.padding + 2).checked_sub(2 * self.kernel).filter(|&v| v > 0);
        match (shrink(h), shrink(w)) {
            (Some(a), Some(b)) => Ok((a, b)),
            _ => Err(Error::Config(format!("kernel {} too large for {:?}", self.kernel, self.feature_dims))),
        }
    }

    /// Width of the flattened second convolution output.
    pub fn flat_len(&self) -> Result<usize> {
        let (h, w) = self.out_hw()?;
        Ok(self.conv2_channels * h * w)
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Dense {
    w: ParamId,
    b: ParamId,
}

impl Dense {
    pub fn register<T: Scalar, R: Rng>(
        store: &mut ParamStore<T>,
        name: &str,
        inputs: usize,
        outputs: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let w = store.add(format!("{name}.weight"), uniform_fan_in(vec![outputs, inputs], inputs, rng))?;
        let b = store.add(format!("{name}.bias"), uniform_fan_in(vec![outputs], inputs, rng))?;
        Ok(Dense { w, b })
    }

    pub fn forward<T: Scalar>(&self, tape: &mut Tape<T>, store: &ParamStore<T>, x: Var) -> Result<Var> {
        let w = tape.param(store, self.w);
        let b = tape.param(store, self.b);
        Ok(tape.dense(x, w, Some(b))?)
    }
}

#[derive(Debug, Clone)]
pub(crate) struct BatchNorm {
    gamma: ParamId,
    beta: ParamId,
    running: BufferId,
}

impl BatchNorm {
    pub fn register<T: Scalar>(store: &mut ParamStore<T>, name: &str, width: usize) -> Result<Self> {
        let gamma = store.add(format!("{name}.gamma"), Tensor::full(vec![width], T::one()))?;
        let beta = store.add(format!("{name}.beta"), Tensor::zeros(vec![width]))?;
        let mut stats = vec![T::zero(); 2 * width];
        stats[width..].iter_mut().for_each(|v| *v = T::one());
        let running = store.add_buffer(format!("{name}.running"), Tensor::new(vec![2, width], stats)?)?;
        Ok(BatchNorm { gamma, beta, running })
    }

    pub fn forward<T: Scalar>(
        &self,
        tape: &mut Tape<T>,
        store: &ParamStore<T>,
        x: Var,
        ctx: &mut ForwardCtx<'_, T>,
    ) -> Result<Var> {
        let g = tape.param(store, self.gamma);
        let b = tape.param(store, self.beta);
        let mut running = store.buffer(self.running).clone();
        let y = tape.batch_norm(x, g, b, &mut running, ctx.batch_stats, BatchNormConfig::default())?;
        if ctx.batch_stats {
            ctx.updates.push((self.running, running));
        }
        Ok(y)
    }
}

pub(crate) fn dropout<T: Scalar>(tape: &mut Tape<T>, x: Var, rate: f64, ctx: &mut ForwardCtx<'_, T>) -> Result<Var> {
    match ctx.rng.as_deref_mut() {
        Some(rng) => Ok(tape.dropout(x, rate, true, rng)?),
        None => Ok(x),
    }
}

/// Dense + batch norm + dropout + ReLU.
#[derive(Debug, Clone)]
pub(crate) struct HiddenBlock {
    dense: Dense,
    bn: BatchNorm,
}

impl HiddenBlock {
    pub fn register<T: Scalar, R: Rng>(
        store: &mut ParamStore<T>,
        name: &str,
        inputs: usize,
        outputs: usize,
        rng: &mut R,
    ) -> Result<Self> {
        Ok(HiddenBlock {
            dense: Dense::register(store, name, inputs, outputs, rng)?,
            bn: BatchNorm::register(store, &format!("{name}.bn"), outputs)?,
        })
    }

    pub fn forward<T: Scalar>(
        &self,
        tape: &mut Tape<T>,
        store: &ParamStore<T>,
        x: Var,
        rate: f64,
        ctx: &mut ForwardCtx<'_, T>,
    ) -> Result<Var> {
        let h = self.dense.forward(tape, store, x)?;
        let h = self.bn.forward(tape, store, h, ctx)?;
        let h = dropout(tape, h, rate, ctx)?;
        Ok(tape.relu(h))
    }
}

#[derive(Debug, Clone)]
pub(crate) struct ConvBranch {
    conv1_w: ParamId,
    conv1_b: ParamId,
    conv2_w: ParamId,
    conv2_b: ParamId,
    a1: Dense,
    padding: usize,
}

impl ConvBranch {
    pub fn register<T: Scalar, R: Rng>(store: &mut ParamStore<T>, cfg: &ConvBranchConfig, rng: &mut R) -> Result<Self> {
        let [c, _, _] = cfg.feature_dims;
        let k = cfg.kernel;
        let fan1 = c * k * k;
        let conv1_w = store.add("conv1.weight", uniform_fan_in(vec![cfg.conv1_channels, c, k, k], fan1, rng))?;
        let conv1_b = store.add("conv1.bias", uniform_fan_in(vec![cfg.conv1_channels], fan1, rng))?;
        let fan2 = cfg.conv1_channels * k * k;
        let conv2_w = store.add(
            "conv2.weight",
            uniform_fan_in(vec![cfg.conv2_channels, cfg.conv1_channels, k, k], fan2, rng),
        )?;
        let conv2_b = store.add("conv2.bias", uniform_fan_in(vec![cfg.conv2_channels], fan2, rng))?;
        let a1 = Dense::register(store, "a1", cfg.flat_len()?, cfg.a1_width, rng)?;
        Ok(ConvBranch { conv1_w, conv1_b, conv2_w, conv2_b, a1, padding: cfg.padding })
    }

    /// `relu(a1(flatten(relu(conv2(relu(conv1(x)))))))`
    pub fn forward<T: Scalar>(&self, tape: &mut Tape<T>, store: &ParamStore<T>, x: Var) -> Result<Var> {
        let (w1, b1) = (tape.param(store, self.conv1_w), tape.param(store, self.conv1_b));
        let h = tape.conv2d(x, w1, Some(b1), self.padding)?;
        let h = tape.relu(h);
        let (w2, b2) = (tape.param(store, self.conv2_w), tape.param(store, self.conv2_b));
        let h = tape.conv2d(h, w2, Some(b2), self.padding)?;
        let h = tape.relu(h);
        let h = tape.flatten(h)?;
        let h = self.a1.forward(tape, store, h)?;
        Ok(tape.relu(h))
    }
}
