//! Two-stage training with deterministic batch reduction.

use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::body_model::BodyModel;
use crate::dataio::SyntheticSequence;
use crate::error::{Error, Result};
use crate::networks::{encode_sequence, is_encoder_param};
use crate::objectives::{sample_surface, total_loss, LossOutputs, LossTargets, LossWeights, Mesh};
use crate::tensorcore::init::rng_for;
use crate::tensorcore::params::accumulate_grads;
use crate::tensorcore::{AdamState, GradMap, Graph, Tensor};

use super::checkpoint::Checkpoint;
use super::decode::{decode_graph, Bound, CodeInputs, DecodeParts, DecodedVars};

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub stage: u8,
    pub lr: f32,
    /// Iteration from which `lr_after_drop` replaces `lr`.
    pub lr_drop_at: Option<usize>,
    pub lr_after_drop: f32,
    pub batch_size: usize,
    pub iterations: usize,
    pub seed: u64,
    /// Draw fresh point clouds every iteration instead of one fixed cloud
    /// per sequence.
    pub resample_points: bool,
}

impl TrainConfig {
    /// Published schedule for `full`; shorter budgets and a larger step for
    /// the scaled-down presets.
    pub fn preset(preset: &str, stage: u8, seed: u64) -> Result<Self> {
        let (lr, batch, iterations, drop) = match (preset, stage) {
            ("full", 1) => (1e-4, 16, 200_000, None),
            ("full", 2) => (1e-4, 4, 400_000, Some((200_000, 1e-5))),
            ("desk", 1) => (1e-3, 8, 50_000, None),
            ("desk", 2) => (1e-3, 4, 50_000, Some((40_000, 1e-4))),
            ("micro", 1) => (3e-3, 8, 2_000, Some((1_000, 3e-4))),
            ("micro", 2) => (3e-3, 8, 2_000, Some((1_000, 3e-4))),
            (p, 1 | 2) => return Err(Error::Config(format!("unknown preset {p:?}"))),
            (_, s) => return Err(Error::Config(format!("stage must be 1 or 2, got {s}"))),
        };
        Ok(Self {
            stage,
            lr,
            lr_drop_at: drop.map(|d| d.0),
            lr_after_drop: drop.map_or(lr, |d| d.1),
            batch_size: batch,
            iterations,
            seed,
            resample_points: false,
        })
    }

    pub fn lr_at(&self, iteration: usize) -> f32 {
        match self.lr_drop_at {
            Some(d) if iteration >= d => self.lr_after_drop,
            _ => self.lr,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.stage != 1 && self.stage != 2 {
            return Err(Error::Config(format!("stage must be 1 or 2, got {}", self.stage)));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if !(self.lr >= 0.0) || !(self.lr_after_drop >= 0.0) {
            return Err(Error::Config("learning rates must be nonnegative".into()));
        }
        Ok(())
    }
}

/// Supervision for one training sequence.
#[derive(Clone, Debug)]
pub struct TrainItem {
    pub beta: Tensor,
    /// `[L,V,3]`
    pub body: Tensor,
    /// `[L,V,3]` canonical offsets repeated per frame.
    pub offsets: Tensor,
    pub clothed: Vec<Mesh>,
}

impl TrainItem {
    pub fn from_sequence(model: &BodyModel, s: &SyntheticSequence) -> Result<Self> {
        let l = s.seq_len();
        let clothed_t = s.clothed_meshes(model)?;
        let frame = model.num_vertices() * 3;
        let clothed = (0..l)
            .map(|t| {
                let v = Tensor::new(&[model.num_vertices(), 3], clothed_t.data()[t * frame..(t + 1) * frame].to_vec())?;
                Mesh::new(v, model.faces.clone())
            })
            .collect::<Result<_>>()?;
        let mut off = Vec::with_capacity(l * frame);
        for _ in 0..l {
            off.extend_from_slice(s.offsets.data());
        }
        Ok(Self {
            beta: s.beta.clone(),
            body: s.body_meshes(model)?,
            offsets: Tensor::new(&[l, model.num_vertices(), 3], off)?,
            clothed,
        })
    }

    /// One point cloud per frame.
    pub fn sample_points(&self, n: usize, seed: u64) -> Result<Vec<Tensor>> {
        self.clothed
            .iter()
            .enumerate()
            .map(|(t, m)| sample_surface(m, n, seed.wrapping_mul(1_000_003).wrapping_add(t as u64)))
            .collect()
    }
}

pub fn prepare_items(model: &BodyModel, seqs: &[SyntheticSequence]) -> Result<Vec<TrainItem>> {
    seqs.par_iter().map(|s| TrainItem::from_sequence(model, s)).collect()
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainReport {
    /// Mean batch loss per iteration.
    pub losses: Vec<f64>,
    pub lrs: Vec<f32>,
}

/// Loss and parameter gradients for one sequence.
pub fn item_loss(ck: &Checkpoint, item: &TrainItem, points: &[Tensor], stage: u8, want_grads: bool) -> Result<(f64, GradMap)> {
    let mut g = Graph::new();
    let trainable = |n: &str| want_grads && (stage == 2 || is_encoder_param(n));
    let b = Bound::new(&mut g, ck, trainable)?;
    let codes = encode_sequence(&mut g, &b.params, &ck.cfg, points)?;
    let inputs = CodeInputs { c_s: codes.c_s, c_p: codes.c_p, c_m: codes.c_m, c_a_motion: codes.c_a, c_a_shape: codes.c_a };
    let parts = if stage == 1 { DecodeParts::STAGE1 } else { DecodeParts::FULL };
    let d = decode_graph(&mut g, ck, &b, &inputs, parts)?;
    let tgt = LossTargets {
        shape_code: g.constant(item.beta.clone()),
        y_body: g.constant(item.body.clone()),
        y_offset: Some(g.constant(item.offsets.clone())),
    };
    let out = if stage == 1 {
        LossOutputs { shape_code: Some(codes.c_s), x_linear: Some(DecodedVars::stack(&mut g, &d.linear)?), ..Default::default() }
    } else {
        LossOutputs {
            shape_code: Some(codes.c_s),
            x_linear: None,
            x_motion: Some(DecodedVars::stack(&mut g, &d.body)?),
            x_shape: Some(DecodedVars::stack(&mut g, &d.offsets)?),
        }
    };
    let loss = total_loss(&mut g, stage, &out, &tgt, &LossWeights::for_stage(stage)?)?;
    let value = g.value(loss).item() as f64;
    if !want_grads {
        return Ok((value, GradMap::new()));
    }
    let grads = g.backward(loss)?;
    Ok((value, b.params.gradients(&grads)))
}

/// Seed of the fixed cloud of item `i`.
pub fn item_seed(seed: u64, i: usize) -> u64 {
    seed.wrapping_add(0x9E37_79B9_7F4A_7C15u64.wrapping_mul(i as u64 + 1))
}

fn sample_seed(seed: u64, iteration: usize, slot: usize) -> u64 {
    seed ^ ((iteration as u64) << 20) ^ slot as u64
}

/// Optimizes the checkpoint in place. Batch items are evaluated in parallel
/// and reduced in index order, so results do not depend on the thread count.
pub fn train(ck: &mut Checkpoint, items: &[TrainItem], cfg: &TrainConfig, mut log: impl FnMut(usize, f64, f32)) -> Result<TrainReport> {
    cfg.validate()?;
    if items.is_empty() {
        return Err(Error::InvalidArgument("training set is empty".into()));
    }
    if cfg.stage == 2 && ck.stage < 1 {
        return Err(Error::Config("stage 2 requires a stage-1 checkpoint".into()));
    }
    let n = items.len();
    // A batch never holds the same sequence twice.
    let batch_size = cfg.batch_size.min(n);
    let mut adam = AdamState::new(cfg.lr);
    let mut report = TrainReport::default();
    let fixed: Vec<Vec<Tensor>> = if cfg.resample_points {
        Vec::new()
    } else {
        items
            .par_iter()
            .enumerate()
            .map(|(i, item)| item.sample_points(ck.cfg.n_points, item_seed(cfg.seed, i)))
            .collect::<Result<_>>()?
    };
    let mut epoch_order: (usize, Vec<usize>) = (usize::MAX, Vec::new());
    for it in 0..cfg.iterations {
        let batch: Vec<usize> = (0..batch_size)
            .map(|k| {
                let pos = it * batch_size + k;
                let epoch = pos / n;
                if epoch_order.0 != epoch {
                    let mut order: Vec<usize> = (0..n).collect();
                    order.shuffle(&mut rng_for(cfg.seed, &format!("epoch{epoch}")));
                    epoch_order = (epoch, order);
                }
                epoch_order.1[pos % n]
            })
            .collect();
        let ck_ref: &Checkpoint = ck;
        let results: Vec<Result<(f64, GradMap)>> = batch
            .par_iter()
            .enumerate()
            .map(|(slot, &i)| {
                if cfg.resample_points {
                    let pts = items[i].sample_points(ck_ref.cfg.n_points, sample_seed(cfg.seed, it, slot))?;
                    item_loss(ck_ref, &items[i], &pts, cfg.stage, true)
                } else {
                    item_loss(ck_ref, &items[i], &fixed[i], cfg.stage, true)
                }
            })
            .collect();
        let mut acc = GradMap::new();
        let mut loss = 0.0;
        for r in results {
            let (l, gm) = r?;
            loss += l;
            accumulate_grads(&mut acc, &gm);
        }
        let inv = 1.0 / batch.len() as f32;
        for t in acc.values_mut() {
            *t = t.scale(inv);
        }
        loss /= batch.len() as f64;
        if !loss.is_finite() {
            return Err(Error::Divergence { iteration: it, detail: format!("stage {} loss is {loss}", cfg.stage) });
        }
        adam.lr = cfg.lr_at(it);
        adam.update(&mut ck.params, &acc).map_err(|e| Error::Divergence { iteration: it, detail: e.to_string() })?;
        report.losses.push(loss);
        report.lrs.push(adam.lr);
        log(it, loss, adam.lr);
    }
    ck.stage = ck.stage.max(cfg.stage);
    Ok(report)
}

pub fn train_stage1(ck: &mut Checkpoint, items: &[TrainItem], cfg: &TrainConfig, log: impl FnMut(usize, f64, f32)) -> Result<TrainReport> {
    if cfg.stage != 1 {
        return Err(Error::Config("train_stage1 needs stage = 1".into()));
    }
    train(ck, items, cfg, log)
}

pub fn train_stage2(ck: &mut Checkpoint, items: &[TrainItem], cfg: &TrainConfig, log: impl FnMut(usize, f64, f32)) -> Result<TrainReport> {
    if cfg.stage != 2 {
        return Err(Error::Config("train_stage2 needs stage = 2".into()));
    }
    train(ck, items, cfg, log)
}
