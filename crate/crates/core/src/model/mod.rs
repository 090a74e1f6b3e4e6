//! Trainable networks over the conv feature branch and the shared training loop.

pub mod baseline;
mod layers;
pub mod neurofuzzy;

use std::io::Write;
use std::path::Path;

use nf_autograd::{Adam, AdamConfig, AutogradError, BufferId, ParamStore, Scalar, Tape, Tensor, Var};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{AisVector, Dataset};
use crate::error::{Error, Result};

pub use baseline::{BaselineConfig, BilinearBaseline, BASELINE_KIND};
pub use layers::ConvBranchConfig;
pub use neurofuzzy::{FuzzyVars, NeuroFuzzyConfig, NeuroFuzzyModel, Prediction, SlopeMode, NEUROFUZZY_KIND};

/// Optimisation schedule shared by both networks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { epochs: 100, batch_size: 32, adam: AdamConfig::default(), seed: 0 }
    }
}

/// Rows of a dataset materialised as engine inputs.
pub struct Batch<T: Scalar> {
    /// `[B, C, H, W]`
    pub features: Tensor<T>,
    pub ais: Vec<AisVector>,
    pub labels: Vec<usize>,
}

impl<T: Scalar> Batch<T> {
    pub fn from_rows(ds: &Dataset, rows: &[usize]) -> Result<Self> {
        let mut data = Vec::with_capacity(rows.len() * ds.feature_len());
        for &r in rows {
            data.extend(ds.feature(r).iter().map(|&v| T::of(v as f64)));
        }
        let [c, h, w] = ds.feature_dims;
        Ok(Batch {
            features: Tensor::new(vec![rows.len(), c, h, w], data)?,
            ais: rows.iter().map(|&r| ds.rows[r].ais).collect(),
            labels: rows.iter().map(|&r| ds.rows[r].label).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Mode of one forward pass.
pub struct ForwardCtx<'a, T: Scalar> {
    /// Normalise with batch statistics and record running-stat updates.
    pub batch_stats: bool,
    /// Dropout is active when a generator is supplied.
    pub rng: Option<&'a mut ChaCha8Rng>,
    pub(crate) updates: Vec<(BufferId, Tensor<T>)>,
}

impl<'a, T: Scalar> ForwardCtx<'a, T> {
    /// Running statistics, no dropout.
    pub fn eval() -> Self {
        ForwardCtx { batch_stats: false, rng: None, updates: Vec::new() }
    }

    pub fn train(rng: &'a mut ChaCha8Rng) -> Self {
        ForwardCtx { batch_stats: true, rng: Some(rng), updates: Vec::new() }
    }

    /// Batch statistics without dropout: deterministic, used for gradient checks.
    pub fn batch_stats_only() -> Self {
        ForwardCtx { batch_stats: true, rng: None, updates: Vec::new() }
    }
}

/// A classifier producing pre-softmax class scores.
pub trait Network<T: Scalar> {
    fn store(&self) -> &ParamStore<T>;
    fn store_mut(&mut self) -> &mut ParamStore<T>;
    fn n_classes(&self) -> usize;
    /// `[B, m]` scores whose softmax is the predicted distribution. Parameters are
    /// read from `store`, which need not be the network's own.
    fn class_scores(
        &self,
        store: &ParamStore<T>,
        tape: &mut Tape<T>,
        batch: &Batch<T>,
        ctx: &mut ForwardCtx<'_, T>,
    ) -> Result<Var>;
}

/// Mean cross-entropy graph for one batch.
pub fn loss_graph<T: Scalar, N: Network<T> + ?Sized>(
    net: &N,
    store: &ParamStore<T>,
    batch: &Batch<T>,
    ctx: &mut ForwardCtx<'_, T>,
) -> Result<(Tape<T>, Var)> {
    let mut tape = Tape::new();
    let scores = net.class_scores(store, &mut tape, batch, ctx)?;
    let loss = tape.softmax_cross_entropy(scores, &batch.labels)?;
    Ok((tape, loss))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    pub loss: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct StepInfo {
    pub epoch: usize,
    pub batch: usize,
    pub step: u64,
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub losses: Vec<EpochLoss>,
    pub steps: u64,
}

/// Shuffled mini-batches. A trailing batch of one row joins the previous batch,
/// since batch normalisation needs two samples.
fn epoch_batches(n: usize, batch_size: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut batches: Vec<Vec<usize>> = order.chunks(batch_size.max(1)).map(|c| c.to_vec()).collect();
    if batches.len() > 1 && batches.last().is_some_and(|b| b.len() == 1) {
        let last = batches.pop().unwrap();
        batches.last_mut().unwrap().extend(last);
    }
    batches
}

/// Adam on mean cross-entropy. `on_step` runs after every parameter update.
pub fn fit<T, N>(
    net: &mut N,
    ds: &Dataset,
    cfg: &TrainConfig,
    mut on_step: impl FnMut(&StepInfo, &N) -> Result<()>,
) -> Result<TrainReport>
where
    T: Scalar,
    N: Network<T>,
{
    if ds.len() < 2 {
        return Err(Error::EmptyDataset(format!("training needs at least 2 rows, got {}", ds.len())));
    }
    if ds.n_classes() != net.n_classes() {
        return Err(Error::Config(format!("dataset has {} classes, model has {}", ds.n_classes(), net.n_classes())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    let mut adam = Adam::new(cfg.adam, net.store());
    net.store_mut().set_training(true);
    let mut losses = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let mut total = 0.0;
        for (bi, rows) in epoch_batches(ds.len(), cfg.batch_size, &mut rng).iter().enumerate() {
            let batch = Batch::<T>::from_rows(ds, rows)?;
            let mut ctx = ForwardCtx::train(&mut rng);
            let (tape, loss) = loss_graph(&*net, net.store(), &batch, &mut ctx)?;
            let updates = std::mem::take(&mut ctx.updates);
            let value = tape.value(loss).data()[0].as_f64();
            if !value.is_finite() {
                return Err(Error::NonFiniteLoss { epoch: epoch + 1, batch: bi });
            }
            let grads = tape.backward(loss)?;
            let store = net.store_mut();
            store.zero_grad();
            tape.accumulate_param_grads(&grads, store);
            drop(tape);
            adam.step(store).map_err(|e| match e {
                AutogradError::NonFiniteGradient(p) => {
                    Error::Config(format!("non-finite gradient for {p} at epoch {}, batch {bi}", epoch + 1))
                }
                other => other.into(),
            })?;
            for (id, t) in updates {
                *store.buffer_mut(id) = t;
            }
            total += value * rows.len() as f64;
            on_step(&StepInfo { epoch: epoch + 1, batch: bi, step: adam.steps(), loss: value }, net)?;
        }
        let loss = total / ds.len() as f64;
        log::debug!("epoch {} loss {loss:.6}", epoch + 1);
        losses.push(EpochLoss { epoch: epoch + 1, loss });
    }
    net.store_mut().set_training(false);
    Ok(TrainReport { losses, steps: adam.steps() })
}

/// Copy parameter and buffer values from `src` into `dst` by name.
pub(crate) fn restore_store<T: Scalar>(dst: &mut ParamStore<T>, src: &ParamStore<T>) -> Result<()> {
    let names: Vec<String> = dst.params().map(|(_, p)| p.name.clone()).collect();
    for name in names {
        let (d, s) = (dst.id(&name).unwrap(), src.id(&name));
        let s = s.ok_or_else(|| Error::Config(format!("checkpoint has no parameter {name}")))?;
        if dst.value(d).shape() != src.value(s).shape() {
            return Err(Error::Config(format!(
                "parameter {name}: checkpoint shape {:?}, model shape {:?}",
                src.value(s).shape(),
                dst.value(d).shape()
            )));
        }
        *dst.value_mut(d) = src.value(s).clone();
    }
    let names: Vec<String> = dst.buffers().map(|b| b.name.clone()).collect();
    for name in names {
        let d = dst.buffer_id(&name).unwrap();
        let s = src.buffer_id(&name).ok_or_else(|| Error::Config(format!("checkpoint has no buffer {name}")))?;
        if dst.buffer(d).shape() != src.buffer(s).shape() {
            return Err(Error::Config(format!("buffer {name} has a different shape in the checkpoint")));
        }
        *dst.buffer_mut(d) = src.buffer(s).clone();
    }
    if src.len() != dst.len() {
        return Err(Error::Config(format!("checkpoint holds {} parameters, model {}", src.len(), dst.len())));
    }
    Ok(())
}

/// Model kind recorded in a checkpoint manifest.
pub fn checkpoint_kind(path: &Path) -> Result<String> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let v: serde_json::Value = serde_json::from_str(&text)?;
    v.pointer("/model/kind")
        .and_then(|k| k.as_str())
        .map(str::to_string)
        .ok_or_else(|| Error::format(path.display().to_string(), "no model kind in checkpoint manifest"))
}

/// Eval-mode class distributions for every row, in batches of `chunk`.
pub fn predict_proba<T: Scalar, N: Network<T> + ?Sized>(net: &N, ds: &Dataset, chunk: usize) -> Result<Vec<Vec<f64>>> {
    let mut out = Vec::with_capacity(ds.len());
    let rows: Vec<usize> = (0..ds.len()).collect();
    for part in rows.chunks(chunk.max(1)) {
        let batch = Batch::<T>::from_rows(ds, part)?;
        let mut tape = Tape::new();
        let scores = net.class_scores(net.store(), &mut tape, &batch, &mut ForwardCtx::eval())?;
        let probs = tape.softmax(scores)?;
        tape.ensure_finite(probs, "softmax output")?;
        let pv = tape.value(probs);
        out.extend((0..part.len()).map(|i| pv.row(i).iter().map(|v| v.as_f64()).collect()));
    }
    Ok(out)
}

/// `epoch,loss` CSV.
pub fn write_loss_csv<W: Write>(out: W, losses: &[EpochLoss]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["epoch", "loss"])?;
    for l in losses {
        w.write_record([l.epoch.to_string(), l.loss.to_string()])?;
    }
    w.flush().map_err(|e| Error::io("<loss csv>", e))?;
    Ok(())
}

pub fn read_loss_csv(path: &Path) -> Result<Vec<EpochLoss>> {
    let mut r = csv::Reader::from_path(path)?;
    let h = r.headers()?.clone();
    if h.iter().collect::<Vec<_>>() != ["epoch", "loss"] {
        return Err(Error::format(path.display().to_string(), "expected header epoch,loss"));
    }
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let bad = || Error::format(path.display().to_string(), format!("bad row {:?}", rec));
        out.push(EpochLoss {
            epoch: rec[0].parse().map_err(|_| bad())?,
            loss: rec[1].parse().map_err(|_| bad())?,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn batches_cover_rows_and_avoid_singletons() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let b = epoch_batches(65, 32, &mut rng);
        assert_eq!(b.iter().map(|x| x.len()).collect::<Vec<_>>(), vec![32, 33]);
        let mut all: Vec<usize> = b.concat();
        all.sort_unstable();
        assert_eq!(all, (0..65).collect::<Vec<_>>());
    }

    #[test]
    fn loss_csv_round_trip() {
        let l = vec![EpochLoss { epoch: 1, loss: 1.5 }, EpochLoss { epoch: 2, loss: 0.25 }];
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("l.csv");
        write_loss_csv(std::fs::File::create(&p).unwrap(), &l).unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap(), "epoch,loss\n1,1.5\n2,0.25\n");
        assert_eq!(read_loss_csv(&p).unwrap(), l);
    }
}
