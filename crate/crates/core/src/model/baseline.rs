//! Image + AIS baseline: the conv branch and an AIS MLP fused by a bilinear layer.

use std::path::Path;

use nf_autograd::{checkpoint, uniform_fan_in, ParamId, ParamStore, Scalar, Tape, Var};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layers::{dropout, BatchNorm, ConvBranch, ConvBranchConfig, Dense, HiddenBlock};
use super::{fit, restore_store, Batch, ForwardCtx, Network, StepInfo, TrainConfig, TrainReport};
use crate::data::{Dataset, N_FIELDS};
use crate::error::{Error, Result};
use crate::provenance::Provenance;

pub const BASELINE_KIND: &str = "bilinear-baseline";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaselineConfig {
    pub branch: ConvBranchConfig,
    /// Width of the three AIS layers.
    pub ais_width: usize,
    /// Output width of the bilinear fusion.
    pub fusion_width: usize,
    pub dropout: f64,
    pub train: TrainConfig,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        BaselineConfig {
            branch: ConvBranchConfig::default(),
            ais_width: 256,
            fusion_width: 256,
            dropout: 0.5,
            train: TrainConfig::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct BilinearBaseline<T: Scalar = f32> {
    cfg: BaselineConfig,
    class_names: Vec<String>,
    branch: ConvBranch,
    b1: Dense,
    b2: HiddenBlock,
    b3: HiddenBlock,
    fusion_w: ParamId,
    fusion_b: ParamId,
    fusion_bn: BatchNorm,
    out: Dense,
    store: ParamStore<T>,
}

impl<T: Scalar> BilinearBaseline<T> {
    pub fn build(class_names: Vec<String>, cfg: BaselineConfig) -> Result<Self> {
        if class_names.len() < 2 {
            return Err(Error::Config("at least two classes required".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.train.seed);
        let mut store = ParamStore::new();
        let branch = ConvBranch::register(&mut store, &cfg.branch, &mut rng)?;
        let w = cfg.ais_width;
        let b1 = Dense::register(&mut store, "b1", N_FIELDS, w, &mut rng)?;
        let b2 = HiddenBlock::register(&mut store, "b2", w, w, &mut rng)?;
        let b3 = HiddenBlock::register(&mut store, "b3", w, w, &mut rng)?;
        let a = cfg.branch.a1_width;
        let fan = a * w;
        let fusion_w = store.add("fusion.weight", uniform_fan_in(vec![cfg.fusion_width, a, w], fan, &mut rng))?;
        let fusion_b = store.add("fusion.bias", uniform_fan_in(vec![cfg.fusion_width], fan, &mut rng))?;
        let fusion_bn = BatchNorm::register(&mut store, "fusion.bn", cfg.fusion_width)?;
        let out = Dense::register(&mut store, "out", cfg.fusion_width, class_names.len(), &mut rng)?;
        Ok(BilinearBaseline { cfg, class_names, branch, b1, b2, b3, fusion_w, fusion_b, fusion_bn, out, store })
    }

    pub fn config(&self) -> &BaselineConfig {
        &self.cfg
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn cast<U: Scalar>(&self) -> BilinearBaseline<U> {
        BilinearBaseline {
            cfg: self.cfg,
            class_names: self.class_names.clone(),
            branch: self.branch.clone(),
            b1: self.b1.clone(),
            b2: self.b2.clone(),
            b3: self.b3.clone(),
            fusion_w: self.fusion_w,
            fusion_b: self.fusion_b,
            fusion_bn: self.fusion_bn.clone(),
            out: self.out.clone(),
            store: self.store.cast(),
        }
    }

    pub fn train(
        &mut self,
        ds: &Dataset,
        on_step: impl FnMut(&StepInfo, &Self) -> Result<()>,
    ) -> Result<TrainReport> {
        if ds.label_map.names() != self.class_names.as_slice() {
            return Err(Error::Config(format!(
                "dataset classes {:?} differ from model classes {:?}",
                ds.label_map.names(),
                self.class_names
            )));
        }
        let cfg = self.cfg.train;
        fit(self, ds, &cfg, on_step)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let meta = serde_json::json!({
            "kind": BASELINE_KIND,
            "config": self.cfg,
            "classes": self.class_names,
            "provenance": Provenance::new(Some(self.cfg.train.seed), &(&self.cfg, &self.class_names)),
        });
        checkpoint::save(path, &self.store, meta)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (store, manifest) = checkpoint::load::<T>(path)?;
        let meta = &manifest.model;
        if meta.get("kind").and_then(|k| k.as_str()) != Some(BASELINE_KIND) {
            return Err(Error::Config(format!("{} is not a baseline checkpoint", path.display())));
        }
        let cfg: BaselineConfig = serde_json::from_value(meta["config"].clone())?;
        let classes: Vec<String> = serde_json::from_value(meta["classes"].clone())?;
        let mut model = Self::build(classes, cfg)?;
        restore_store(&mut model.store, &store)?;
        Ok(model)
    }
}

impl<T: Scalar> Network<T> for BilinearBaseline<T> {
    fn store(&self) -> &ParamStore<T> {
        &self.store
    }

    fn store_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.store
    }

    fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    fn class_scores(
        &self,
        store: &ParamStore<T>,
        tape: &mut Tape<T>,
        batch: &Batch<T>,
        ctx: &mut ForwardCtx<'_, T>,
    ) -> Result<Var> {
        let x = tape.input(batch.features.clone());
        let image = self.branch.forward(tape, store, x)?;
        let ais: Vec<f64> = batch.ais.iter().flatten().copied().collect();
        let ais = tape.input(nf_autograd::Tensor::from_f64(vec![batch.len(), N_FIELDS], &ais)?);
        let h = self.b1.forward(tape, store, ais)?;
        let h = tape.relu(h);
        let h = self.b2.forward(tape, store, h, self.cfg.dropout, ctx)?;
        let h = self.b3.forward(tape, store, h, self.cfg.dropout, ctx)?;
        let (w, b) = (tape.param(store, self.fusion_w), tape.param(store, self.fusion_b));
        let f = tape.bilinear(image, h, w, Some(b))?;
        let f = self.fusion_bn.forward(tape, store, f, ctx)?;
        let f = dropout(tape, f, self.cfg.dropout, ctx)?;
        let f = tape.relu(f);
        self.out.forward(tape, store, f)
    }
}
