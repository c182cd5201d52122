//! Auto-decoding: frozen networks, codes optimized against observations.

use rand_distr::{Distribution, Normal};

use crate::error::{dim_err, Error, Result};
use crate::networks::encode_sequence;
use crate::objectives::{
    chamfer_var, point_to_surface_var, prior_terms_var, surface_samples_var, vertex_l1_var, Mesh, PriorWeights,
    SamplePattern,
};
use crate::tensorcore::init::rng_for;
use crate::tensorcore::{AdamState, BoundParams, Graph, ParamSet, Tensor, Var};

use super::checkpoint::{Checkpoint, LatentTuple};
use super::decode::{decode_codes, decode_graph, posed_joints_var, Bound, CodeInputs, DecodeParts, Reconstruction};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FitLoss {
    Chamfer,
    PointToSurface,
    VertexL1,
    Keypoint,
}

impl FitLoss {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "chamfer" => Ok(Self::Chamfer),
            "p2s" | "point-to-surface" => Ok(Self::PointToSurface),
            "vertex-l1" => Ok(Self::VertexL1),
            "keypoint" => Ok(Self::Keypoint),
            _ => Err(Error::Config(format!("unknown fit loss {s:?} (chamfer, p2s, vertex-l1, keypoint)"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Chamfer => "chamfer",
            Self::PointToSurface => "p2s",
            Self::VertexL1 => "vertex-l1",
            Self::Keypoint => "keypoint",
        }
    }
}

/// Per-frame observations.
#[derive(Clone, Debug, PartialEq)]
pub enum Observations {
    /// One (possibly partial, possibly empty) cloud `[n_t,3]` per frame.
    Points(Vec<Tensor>),
    /// Registered meshes `[L,V,3]`.
    Vertices(Tensor),
    /// Joint positions `[L,J,3]`.
    Joints(Tensor),
}

#[derive(Clone, Debug, PartialEq)]
pub struct FitConfig {
    pub lr: f32,
    pub iterations: usize,
    /// Surface samples per predicted frame for the Chamfer loss.
    pub n_sample: usize,
    pub loss: FitLoss,
    pub prior: PriorWeights,
    /// Observed frames; missing trailing entries count as unobserved.
    pub frame_mask: Option<Vec<bool>>,
    pub seed: u64,
    /// Standard deviation of the Gaussian code initialization.
    pub init_std: f32,
    /// Revert and halve the step whenever the loss increases.
    pub safeguard: bool,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            lr: 3e-2,
            iterations: 500,
            n_sample: 8192,
            loss: FitLoss::Chamfer,
            prior: PriorWeights::default(),
            frame_mask: None,
            seed: 0,
            init_std: 0.01,
            safeguard: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FitResult {
    /// Best-loss iterate.
    pub codes: LatentTuple,
    /// Loss of the accepted iterate at every iteration.
    pub losses: Vec<f64>,
    pub best_loss: f64,
    pub final_lr: f32,
}

pub fn random_codes(ck: &Checkpoint, std: f32, seed: u64) -> Result<LatentTuple> {
    let normal = Normal::new(0.0f32, std).map_err(|e| Error::InvalidArgument(format!("init_std: {e}")))?;
    let draw = |name: &str, n: usize| {
        let mut rng = rng_for(seed, name);
        Tensor::vector((0..n).map(|_| normal.sample(&mut rng)).collect())
    };
    let cfg = &ck.cfg;
    Ok(LatentTuple {
        c_s: draw("fit.c_s", cfg.shape_dims),
        c_p: draw("fit.c_p", cfg.pose_dims()),
        c_m: draw("fit.c_m", cfg.motion_dims),
        c_a: draw("fit.c_a", cfg.aux_dims),
    })
}

fn resolve_mask(mask: Option<&[bool]>, l: usize) -> Result<Vec<bool>> {
    let mut m = vec![true; l];
    if let Some(given) = mask {
        if given.len() > l {
            return Err(Error::InvalidArgument(format!("frame mask has {} entries for {l} frames", given.len())));
        }
        m = (0..l).map(|t| given.get(t).copied().unwrap_or(false)).collect();
    }
    if !m.iter().any(|&b| b) {
        return Err(Error::InvalidArgument("frame mask selects no frames".into()));
    }
    Ok(m)
}

/// Observation tensors checked against the checkpoint.
struct Prepared {
    mask: Vec<bool>,
    frames: Vec<Option<Tensor>>,
    pattern: Option<SamplePattern>,
}

fn prepare(obs: &Observations, cfg: &FitConfig, ck: &Checkpoint) -> Result<Prepared> {
    let (l, v, j) = (ck.cfg.seq_len, ck.cfg.verts, ck.cfg.joints);
    let mask = resolve_mask(cfg.frame_mask.as_deref(), l)?;
    let split = |t: &Tensor, rows: usize, what: &str| -> Result<Vec<Option<Tensor>>> {
        if t.shape() != [l, rows, 3] {
            return dim_err("autodecode_fit", format!("{what} {:?}, expected [{l},{rows},3]", t.shape()));
        }
        (0..l)
            .map(|f| Ok(mask[f].then(|| Tensor::new(&[rows, 3], t.data()[f * rows * 3..(f + 1) * rows * 3].to_vec())).transpose()?))
            .collect()
    };
    let frames = match (obs, cfg.loss) {
        (Observations::Points(p), FitLoss::Chamfer | FitLoss::PointToSurface) => {
            if p.len() != l {
                return dim_err("autodecode_fit", format!("{} frames of points, expected {l}", p.len()));
            }
            p.iter()
                .zip(&mask)
                .enumerate()
                .map(|(f, (t, &m))| {
                    if !m {
                        return Ok(None);
                    }
                    if t.rank() != 2 || t.dim(1) != 3 || t.dim(0) == 0 {
                        return Err(Error::InvalidArgument(format!("observed frame {f} has points {:?}", t.shape())));
                    }
                    Ok(Some(t.clone()))
                })
                .collect::<Result<_>>()?
        }
        (Observations::Vertices(t), FitLoss::VertexL1) => split(t, v, "vertices")?,
        (Observations::Joints(t), FitLoss::Keypoint) => split(t, j, "joints")?,
        (_, loss) => return Err(Error::Config(format!("{} loss does not match the observation kind", loss.name()))),
    };
    let pattern = if cfg.loss == FitLoss::Chamfer {
        if cfg.n_sample == 0 {
            return Err(Error::Config("n_sample must be positive".into()));
        }
        let template = Mesh::new(ck.model.template.clone(), ck.model.faces.clone())?;
        Some(SamplePattern::draw(&template, cfg.n_sample, cfg.seed)?)
    } else {
        None
    };
    Ok(Prepared { mask, frames, pattern })
}

/// Data term plus priors at `codes`, with gradients w.r.t. the codes.
fn fit_objective(ck: &Checkpoint, prep: &Prepared, cfg: &FitConfig, codes: &ParamSet) -> Result<(f64, ParamSet)> {
    let mut g = Graph::new();
    let b = Bound::frozen(&mut g, ck)?;
    let leaves = BoundParams::bind(&mut g, codes, true);
    let c_a = leaves.get("c_a")?;
    let inputs = CodeInputs { c_s: leaves.get("c_s")?, c_p: leaves.get("c_p")?, c_m: leaves.get("c_m")?, c_a_motion: c_a, c_a_shape: c_a };
    let parts = if cfg.loss == FitLoss::Keypoint {
        DecodeParts { linear: false, motion_comp: true, shape_comp: false }
    } else {
        DecodeParts::FULL
    };
    let d = decode_graph(&mut g, ck, &b, &inputs, parts)?;
    let mut terms: Vec<Var> = Vec::new();
    for (t, obs) in prep.frames.iter().enumerate() {
        let Some(obs) = obs else { continue };
        let target = g.constant(obs.clone());
        let term = match cfg.loss {
            FitLoss::Chamfer => {
                let pattern = prep.pattern.as_ref().expect("drawn for chamfer");
                let s = surface_samples_var(&mut g, d.clothed[t], &ck.model.faces, pattern)?;
                chamfer_var(&mut g, s, target)?
            }
            FitLoss::PointToSurface => point_to_surface_var(&mut g, target, d.clothed[t], &ck.model.faces)?,
            FitLoss::VertexL1 => vertex_l1_var(&mut g, d.clothed[t], target)?,
            FitLoss::Keypoint => {
                let jp = posed_joints_var(&mut g, ck, d.rest_joints, d.poses, t)?;
                vertex_l1_var(&mut g, jp, target)?
            }
        };
        terms.push(term);
    }
    let n_obs = prep.mask.iter().filter(|&&m| m).count();
    let mut data = terms[0];
    for &t in &terms[1..] {
        data = g.add(data, t)?;
    }
    let data = g.scale(data, 1.0 / n_obs as f32);
    let prior = prior_terms_var(&mut g, inputs.c_s, inputs.c_m, c_a, &ck.basis.code_variances(), &cfg.prior)?;
    let loss = g.add(data, prior)?;
    let value = g.value(loss).item() as f64;
    let grads = g.backward(loss)?;
    let gm = leaves.gradients(&grads).into_iter().collect();
    Ok((value, gm))
}

/// Optimizes all four codes with Adam. With the safeguard on, a step that
/// raises the loss is undone and retried from the last accepted iterate at
/// half the learning rate, so the accepted losses never increase.
pub fn autodecode_fit(obs: &Observations, cfg: &FitConfig, ck: &Checkpoint) -> Result<FitResult> {
    if !(cfg.lr >= 0.0) {
        return Err(Error::Config("lr must be nonnegative".into()));
    }
    let prep = prepare(obs, cfg, ck)?;
    let init = random_codes(ck, cfg.init_std, cfg.seed)?;
    let mut codes = init.to_params();
    let mut adam = AdamState::new(cfg.lr);
    let mut best: Option<(f64, ParamSet)> = None;
    // Last accepted iterate, its optimizer state and gradient.
    let mut accepted: Option<(f64, ParamSet, AdamState, ParamSet)> = None;
    let mut losses = Vec::with_capacity(cfg.iterations);
    for it in 0..cfg.iterations {
        let (loss, grads) = fit_objective(ck, &prep, cfg, &codes)?;
        let rejected = match &accepted {
            Some((prev, ..)) => cfg.safeguard && !(loss <= *prev),
            None => !loss.is_finite(),
        };
        if rejected {
            if accepted.is_none() {
                return Err(Error::Divergence { iteration: it, detail: format!("initial fit loss is {loss}") });
            }
            let (_, prev_codes, prev_adam, prev_grads) = accepted.as_ref().expect("checked");
            let lr = adam.lr * 0.5;
            codes = prev_codes.clone();
            adam = prev_adam.clone();
            adam.lr = lr;
            let grads: crate::tensorcore::GradMap = prev_grads.iter().map(|(k, v)| (k.clone(), v.clone())).collect();
            adam.update(&mut codes, &grads)?;
            losses.push(accepted.as_ref().expect("checked").0);
            continue;
        }
        if !loss.is_finite() {
            return Err(Error::Divergence { iteration: it, detail: format!("fit loss is {loss}") });
        }
        if best.as_ref().is_none_or(|(b, _)| loss < *b) {
            best = Some((loss, codes.clone()));
        }
        accepted = Some((loss, codes.clone(), adam.clone(), grads.clone()));
        losses.push(loss);
        let gm: crate::tensorcore::GradMap = grads.iter().map(|(k, v)| (k.clone(), v.clone())).collect();
        adam.update(&mut codes, &gm)?;
    }
    let (best_loss, best_codes) = match best {
        Some(b) => b,
        None => (f64::NAN, init.to_params()),
    };
    Ok(FitResult { codes: LatentTuple::from_params(&best_codes)?, losses, best_loss, final_lr: adam.lr })
}

/// Codes from the encoders for a point-cloud sequence.
pub fn encode(points: &[Tensor], ck: &Checkpoint) -> Result<LatentTuple> {
    if points.len() != ck.cfg.seq_len {
        return Err(Error::InvalidArgument(format!("{} frames, checkpoint expects {}", points.len(), ck.cfg.seq_len)));
    }
    let mut g = Graph::new();
    let p = BoundParams::bind(&mut g, &ck.params, false);
    let c = encode_sequence(&mut g, &p, &ck.cfg, points)?;
    Ok(LatentTuple {
        c_s: g.value(c.c_s).clone(),
        c_p: g.value(c.c_p).clone(),
        c_m: g.value(c.c_m).clone(),
        c_a: g.value(c.c_a).clone(),
    })
}

/// Encoders followed by the full decoder.
pub fn reconstruct(points: &[Tensor], ck: &Checkpoint) -> Result<Reconstruction> {
    decode_codes(ck, &encode(points, ck)?, None)
}

/// Identity shape and clothing from one sequence, motion from another. Two
/// auxiliary codes are used: the motion sequence's for Motion-Comp and the
/// identity sequence's for Shape-Comp.
pub fn retarget(identity: &[Tensor], motion: &[Tensor], ck: &Checkpoint) -> Result<Reconstruction> {
    let id = encode(identity, ck)?;
    let mo = encode(motion, ck)?;
    let codes = LatentTuple { c_s: id.c_s, c_p: mo.c_p, c_m: mo.c_m, c_a: mo.c_a };
    decode_codes(ck, &codes, Some(&id.c_a))
}

#[derive(Clone, Debug, PartialEq)]
pub struct Completion {
    pub fit: FitResult,
    pub recon: Reconstruction,
    pub mask: Vec<bool>,
}

fn fit_and_decode(obs: &Observations, cfg: &FitConfig, ck: &Checkpoint) -> Result<Completion> {
    let fit = autodecode_fit(obs, cfg, ck)?;
    let recon = decode_codes(ck, &fit.codes, None)?;
    let mask = resolve_mask(cfg.frame_mask.as_deref(), ck.cfg.seq_len)?;
    Ok(Completion { fit, recon, mask })
}

/// Fit on the observed frames of a point sequence and decode all frames.
pub fn complete_temporal(points: &[Tensor], mask: &[bool], cfg: &FitConfig, ck: &Checkpoint) -> Result<Completion> {
    let cfg = FitConfig { frame_mask: Some(mask.to_vec()), ..cfg.clone() };
    fit_and_decode(&Observations::Points(points.to_vec()), &cfg, ck)
}

/// Fit partial clouds with the one-directional point-to-surface loss; frames
/// left empty are masked out.
pub fn complete_spatial(partial: &[Tensor], cfg: &FitConfig, ck: &Checkpoint) -> Result<Completion> {
    let mask: Vec<bool> = partial.iter().map(|p| !p.is_empty()).collect();
    let cfg = FitConfig { frame_mask: Some(mask), loss: FitLoss::PointToSurface, ..cfg.clone() };
    fit_and_decode(&Observations::Points(partial.to_vec()), &cfg, ck)
}

/// Fit the first `observed` frames and decode the whole sequence.
pub fn predict_future(points: &[Tensor], observed: usize, cfg: &FitConfig, ck: &Checkpoint) -> Result<Completion> {
    if observed == 0 {
        return Err(Error::InvalidArgument("need at least one observed frame".into()));
    }
    let mask: Vec<bool> = (0..points.len()).map(|t| t < observed).collect();
    complete_temporal(points, &mask, cfg, ck)
}

/// Depth-camera stand-in: keep the samples on the camera side of the plane
/// through the frame centroid. The camera orbits once per sequence starting at
/// `phase`.
pub fn half_space_cull(frames: &[Tensor], phase: f32) -> Vec<Tensor> {
    let l = frames.len().max(1);
    frames
        .iter()
        .enumerate()
        .map(|(t, pts)| {
            let n = pts.len() / 3;
            if n == 0 {
                return Tensor::zeros(&[0, 3]);
            }
            let angle = phase + 2.0 * std::f32::consts::PI * t as f32 / l as f32;
            let dir = [angle.cos(), 0.0, angle.sin()];
            let mut c = [0.0f64; 3];
            for p in pts.data().chunks(3) {
                for k in 0..3 {
                    c[k] += p[k] as f64 / n as f64;
                }
            }
            let kept: Vec<f32> = pts
                .data()
                .chunks(3)
                .filter(|p| (0..3).map(|k| (p[k] as f64 - c[k]) * dir[k] as f64).sum::<f64>() >= 0.0)
                .flatten()
                .copied()
                .collect();
            Tensor::new(&[kept.len() / 3, 3], kept).expect("rows of 3")
        })
        .collect()
}

/// Random mask with exactly `observed` true entries.
pub fn random_mask(len: usize, observed: usize, seed: u64) -> Vec<bool> {
    use rand::seq::SliceRandom;
    let mut idx: Vec<usize> = (0..len).collect();
    idx.shuffle(&mut rng_for(seed, "mask"));
    let mut m = vec![false; len];
    for &i in idx.iter().take(observed.min(len)) {
        m[i] = true;
    }
    m
}

/// Mean per-joint error over the frames of `[L,J,3]` joint tensors where
/// `select` is true; `None` when no frame is selected.
pub fn frames_mpjpe(pred: &Tensor, gt: &Tensor, select: &[bool]) -> Result<Option<f64>> {
    if pred.shape() != gt.shape() || pred.rank() != 3 || pred.dim(2) != 3 || select.len() != pred.dim(0) {
        return dim_err("frames_mpjpe", format!("{:?} vs {:?} with {} mask entries", pred.shape(), gt.shape(), select.len()));
    }
    let j = pred.dim(1);
    let frames: Vec<usize> = (0..select.len()).filter(|&t| select[t]).collect();
    if frames.is_empty() {
        return Ok(None);
    }
    let mut total = 0.0;
    for &t in &frames {
        for i in 0..j {
            let o = (t * j + i) * 3;
            let d: f64 = (0..3).map(|k| (pred.data()[o + k] as f64 - gt.data()[o + k] as f64).powi(2)).sum();
            total += d.sqrt();
        }
    }
    Ok(Some(total / (frames.len() * j) as f64))
}
