//! Procedural motion corpus standing in for registered scan sequences.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::body_model::{BodyModel, Pose};
use crate::error::{dim_err, Error, Result};
use crate::tensorcore::init::rng_for;
use crate::tensorcore::Tensor;

/// Curve families. Training and test splits use disjoint families.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum MotionFamily {
    Gait,
    ArmSwing,
    Squat,
    Twist,
    Wave,
    JumpingJack,
}

impl MotionFamily {
    pub const ALL: [MotionFamily; 6] = [
        MotionFamily::Gait,
        MotionFamily::ArmSwing,
        MotionFamily::Squat,
        MotionFamily::Twist,
        MotionFamily::Wave,
        MotionFamily::JumpingJack,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MotionFamily::Gait => "gait",
            MotionFamily::ArmSwing => "arm_swing",
            MotionFamily::Squat => "squat",
            MotionFamily::Twist => "twist",
            MotionFamily::Wave => "wave",
            MotionFamily::JumpingJack => "jumping_jack",
        }
    }

    pub fn index(self) -> usize {
        Self::ALL.iter().position(|&f| f == self).expect("listed")
    }

    pub fn from_index(i: usize) -> Result<Self> {
        Self::ALL.get(i).copied().ok_or_else(|| Error::InvalidArgument(format!("unknown motion family {i}")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn families(self) -> &'static [MotionFamily] {
        match self {
            Split::Train => &MotionFamily::ALL[..4],
            Split::Test => &MotionFamily::ALL[4..],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SynthConfig {
    pub seq_len: usize,
    /// Bound on every non-root joint angle component (radians).
    pub max_angle: f32,
    /// Bound on the root yaw drift over one sequence (radians).
    pub max_yaw_drift: f32,
    /// Bound on the canonical offset norm (meters).
    pub max_offset: f32,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self { seq_len: 30, max_angle: 1.2, max_yaw_drift: 0.4, max_offset: 0.02 }
    }
}

/// One synthetic sequence; meshes are derived by decoding, so they are
/// reproduced exactly from these fields.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticSequence {
    pub family: MotionFamily,
    pub beta: Tensor,
    /// `[L, 3J]`
    pub poses: Tensor,
    /// `[V,3]` pose-independent canonical "clothing" displacement.
    pub offsets: Tensor,
}

impl SyntheticSequence {
    pub fn seq_len(&self) -> usize {
        self.poses.dim(0)
    }

    fn frames(&self, model: &BodyModel, offsets: Option<&Tensor>) -> Result<Tensor> {
        let (l, v) = (self.seq_len(), model.num_vertices());
        let mut out = Vec::with_capacity(l * v * 3);
        for t in 0..l {
            let pose = Pose::from_flat(&Tensor::vector(self.poses.row(t).to_vec()))?;
            out.extend_from_slice(model.skin_lbs(&self.beta, &pose, offsets)?.data());
        }
        Tensor::new(&[l, v, 3], out)
    }

    /// Unclothed body meshes `[L,V,3]`.
    pub fn body_meshes(&self, model: &BodyModel) -> Result<Tensor> {
        self.frames(model, None)
    }

    /// Clothed meshes `[L,V,3]`.
    pub fn clothed_meshes(&self, model: &BodyModel) -> Result<Tensor> {
        self.frames(model, Some(&self.offsets))
    }

    /// Posed joint positions `[L,J,3]`.
    pub fn joints(&self, model: &BodyModel) -> Result<Tensor> {
        posed_joints(model, &self.beta, &self.poses)
    }
}

/// Joint positions `[L,J,3]` for a pose sequence.
pub fn posed_joints(model: &BodyModel, beta: &Tensor, poses: &Tensor) -> Result<Tensor> {
    let j = model.num_joints();
    if poses.rank() != 2 || poses.dim(1) != 3 * j {
        return dim_err("posed_joints", format!("poses {:?} for {j} joints", poses.shape()));
    }
    let rest = model.regress_joints(&model.shape_vertices(beta)?)?;
    let mut out = Vec::with_capacity(poses.dim(0) * j * 3);
    for t in 0..poses.dim(0) {
        let pose = Pose::from_flat(&Tensor::vector(poses.row(t).to_vec()))?;
        let g = crate::body_model::forward_kinematics(&pose, &rest, &model.parents)?;
        for k in 0..j {
            let m = &g.data()[16 * k..16 * k + 16];
            out.extend_from_slice(&[m[3], m[7], m[11]]);
        }
    }
    Tensor::new(&[poses.dim(0), j, 3], out)
}

struct Curve {
    amp: f32,
    freq: f32,
    phase: f32,
}

impl Curve {
    fn angle(&self, t: usize, len: usize, harmonic: f32) -> f32 {
        2.0 * std::f32::consts::PI * self.freq * harmonic * t as f32 / len as f32 + self.phase
    }

    /// Oscillation in [−1, 1].
    fn s(&self, t: usize, len: usize) -> f32 {
        self.angle(t, len, 1.0).sin()
    }

    /// Smooth pulse in [0, 1].
    fn u(&self, t: usize, len: usize) -> f32 {
        0.5 * (1.0 - self.angle(t, len, 1.0).cos())
    }
}

// Joint indices of the 24-joint layout.
const L_HIP: usize = 1;
const R_HIP: usize = 2;
const SPINE1: usize = 3;
const L_KNEE: usize = 4;
const R_KNEE: usize = 5;
const SPINE2: usize = 6;
const L_ANKLE: usize = 7;
const R_ANKLE: usize = 8;
const SPINE3: usize = 9;
const NECK: usize = 12;
const L_COLLAR: usize = 13;
const R_COLLAR: usize = 14;
const L_SHOULDER: usize = 16;
const R_SHOULDER: usize = 17;
const L_ELBOW: usize = 18;
const R_ELBOW: usize = 19;

const X: usize = 0;
const Y: usize = 1;
const Z: usize = 2;

fn humanoid_frame(family: MotionFamily, c: &Curve, t: usize, len: usize, pose: &mut [f32]) {
    let a = c.amp;
    let s = c.s(t, len);
    let u = c.u(t, len);
    let mut set = |j: usize, axis: usize, v: f32| pose[3 * j + axis] += v;
    match family {
        MotionFamily::Gait => {
            let opp = (c.angle(t, len, 1.0) + std::f32::consts::PI).cos();
            set(L_HIP, X, 0.5 * a * s);
            set(R_HIP, X, -0.5 * a * s);
            set(L_KNEE, X, 0.6 * a * u);
            set(R_KNEE, X, 0.6 * a * 0.5 * (1.0 - opp));
            set(L_SHOULDER, X, -0.4 * a * s);
            set(R_SHOULDER, X, 0.4 * a * s);
            set(L_ELBOW, Y, 0.3 * a + 0.1 * s);
            set(R_ELBOW, Y, -0.3 * a + 0.1 * s);
            set(SPINE1, Y, 0.1 * a * s);
        }
        MotionFamily::ArmSwing => {
            set(L_SHOULDER, Z, 0.3 + 0.6 * a * s);
            set(R_SHOULDER, Z, -0.3 - 0.6 * a * s);
            set(L_ELBOW, Y, 0.5 * a * u);
            set(R_ELBOW, Y, -0.5 * a * u);
            set(L_COLLAR, Z, 0.1 * s);
            set(R_COLLAR, Z, -0.1 * s);
        }
        MotionFamily::Squat => {
            set(L_HIP, X, -0.9 * a * u);
            set(R_HIP, X, -0.9 * a * u);
            set(L_KNEE, X, 1.1 * a * u);
            set(R_KNEE, X, 1.1 * a * u);
            set(L_ANKLE, X, -0.3 * a * u);
            set(R_ANKLE, X, -0.3 * a * u);
            set(SPINE1, X, 0.3 * a * u);
            set(L_SHOULDER, X, -0.5 * a * u);
            set(R_SHOULDER, X, -0.5 * a * u);
        }
        MotionFamily::Twist => {
            set(SPINE1, Y, 0.3 * a * s);
            set(SPINE2, Y, 0.3 * a * s);
            set(SPINE3, Y, 0.3 * a * s);
            set(NECK, Y, -0.2 * a * s);
            set(L_SHOULDER, Z, 0.2);
            set(R_SHOULDER, Z, -0.2);
        }
        MotionFamily::Wave => {
            set(R_SHOULDER, Z, 1.0 + 0.2 * a * s);
            set(R_ELBOW, Y, -0.4 * a);
            set(R_ELBOW, Z, 0.5 * a * c.angle(t, len, 2.0).sin());
            set(L_SHOULDER, Z, -0.2);
        }
        MotionFamily::JumpingJack => {
            set(L_SHOULDER, Z, 1.2 * a * u);
            set(R_SHOULDER, Z, -1.2 * a * u);
            set(L_HIP, Z, 0.4 * a * u);
            set(R_HIP, Z, -0.4 * a * u);
            set(L_KNEE, X, 0.2 * u);
            set(R_KNEE, X, 0.2 * u);
        }
    }
}

/// Three-chain skeletons (up, down-left, down-right from the root).
fn chain_frame(family: MotionFamily, c: &Curve, t: usize, len: usize, joints: usize, pose: &mut [f32]) {
    let a = c.amp;
    let s = c.s(t, len);
    let u = c.u(t, len);
    for j in 1..joints {
        let chain = (j - 1) % 3;
        let p = &mut pose[3 * j..3 * j + 3];
        match (family, chain) {
            (MotionFamily::Gait, 1) => p[X] += 0.5 * a * s,
            (MotionFamily::Gait, 2) => p[X] -= 0.5 * a * s,
            (MotionFamily::Gait, _) => p[Y] += 0.1 * s,
            (MotionFamily::ArmSwing, 0) => p[Z] += 0.6 * a * s,
            (MotionFamily::Squat, 1 | 2) => p[X] += 0.8 * a * u,
            (MotionFamily::Twist, 0) => p[Y] += 0.6 * a * s,
            (MotionFamily::Wave, 0) => p[Z] += 0.5 * a * c.angle(t, len, 2.0).sin(),
            (MotionFamily::Wave, 1) => p[X] += 0.2 * u,
            (MotionFamily::JumpingJack, 1) => p[Z] += 0.6 * a * u,
            (MotionFamily::JumpingJack, 2) => p[Z] -= 0.6 * a * u,
            _ => {}
        }
    }
}

fn generate_sequence(model: &BodyModel, family: MotionFamily, cfg: &SynthConfig, rng: &mut impl Rng) -> Result<SyntheticSequence> {
    let (j, v, len) = (model.num_joints(), model.num_vertices(), cfg.seq_len);
    let curve = Curve {
        amp: rng.random_range(0.6..1.0),
        freq: rng.random_range(0.6..1.4),
        phase: rng.random_range(0.0..2.0 * std::f32::consts::PI),
    };
    let yaw0: f32 = rng.random_range(-1.0..1.0);
    let drift: f32 = rng.random_range(-cfg.max_yaw_drift..=cfg.max_yaw_drift);
    let tilt: f32 = rng.random_range(-0.05..0.05);
    let style: Vec<f32> = (0..3 * j).map(|_| rng.random_range(-0.1..0.1)).collect();

    let mut poses = Vec::with_capacity(len * 3 * j);
    for t in 0..len {
        let mut p = vec![0.0f32; 3 * j];
        p[3..].copy_from_slice(&style[3..]);
        if j == 24 {
            humanoid_frame(family, &curve, t, len, &mut p);
        } else {
            chain_frame(family, &curve, t, len, j, &mut p);
        }
        for x in &mut p[3..] {
            *x = x.clamp(-cfg.max_angle, cfg.max_angle);
        }
        let frac = if len > 1 { t as f32 / (len - 1) as f32 } else { 0.0 };
        p[0] = tilt * curve.s(t, len);
        p[1] = yaw0 + drift * frac;
        p[2] = 0.0;
        poses.extend_from_slice(&p);
    }

    let s = model.shape_dims();
    let beta: Vec<f32> = (0..s).map(|_| rng.sample::<f32, _>(StandardNormal).clamp(-2.5, 2.5)).collect();

    // Sum of three low-frequency plane waves, rescaled to a bounded norm.
    let waves: Vec<([f32; 3], f32, [f32; 3])> = (0..3)
        .map(|_| {
            let dir: [f32; 3] = [rng.sample(StandardNormal), rng.sample(StandardNormal), rng.sample(StandardNormal)];
            let n = (dir[0] * dir[0] + dir[1] * dir[1] + dir[2] * dir[2]).sqrt().max(1e-6);
            let k: f32 = rng.random_range(2.0..5.0);
            let freq = [k * dir[0] / n, k * dir[1] / n, k * dir[2] / n];
            let phase = rng.random_range(0.0..2.0 * std::f32::consts::PI);
            let amp = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
            (freq, phase, amp)
        })
        .collect();
    let target: f32 = cfg.max_offset * rng.random_range(0.5..1.0);
    let mut off = vec![0.0f32; v * 3];
    for i in 0..v {
        let x = &model.template.data()[3 * i..3 * i + 3];
        for (f, ph, a) in &waves {
            let w = (f[0] * x[0] + f[1] * x[1] + f[2] * x[2] + ph).sin();
            for k in 0..3 {
                off[3 * i + k] += a[k] * w;
            }
        }
    }
    let peak = off.chunks(3).map(|o| (o[0] * o[0] + o[1] * o[1] + o[2] * o[2]).sqrt()).fold(0.0f32, f32::max);
    if peak > 0.0 {
        for o in &mut off {
            *o *= target / peak;
        }
    }

    Ok(SyntheticSequence {
        family,
        beta: Tensor::vector(beta),
        poses: Tensor::new(&[len, 3 * j], poses)?,
        offsets: Tensor::new(&[v, 3], off)?,
    })
}

/// Deterministic corpus; families cycle through the split's list.
pub fn gen_synthetic_dataset(
    model: &BodyModel,
    n_seqs: usize,
    cfg: &SynthConfig,
    split: Split,
    seed: u64,
) -> Result<Vec<SyntheticSequence>> {
    if n_seqs == 0 {
        return Err(Error::InvalidArgument("n_seqs must be at least 1".into()));
    }
    if cfg.seq_len == 0 {
        return Err(Error::InvalidArgument("seq_len must be at least 1".into()));
    }
    let fams = split.families();
    (0..n_seqs)
        .map(|i| {
            let mut rng = rng_for(seed, &format!("synthetic.{}.{i}", split.name()));
            generate_sequence(model, fams[i % fams.len()], cfg, &mut rng)
        })
        .collect()
}

/// Sliding windows of `len` frames at `stride`.
pub fn slice_subsequences(seq: &Tensor, len: usize, stride: usize) -> Result<Vec<Tensor>> {
    if seq.rank() != 2 {
        return dim_err("slice_subsequences", format!("{:?}", seq.shape()));
    }
    if len == 0 || stride == 0 {
        return Err(Error::InvalidArgument("window length and stride must be positive".into()));
    }
    let (n, p) = (seq.dim(0), seq.dim(1));
    if n < len {
        return Err(Error::InvalidArgument(format!("sequence of {n} frames is shorter than {len}")));
    }
    (0..=n - len)
        .step_by(stride)
        .map(|s| Tensor::new(&[len, p], seq.data()[s * p..(s + len) * p].to_vec()))
        .collect()
}
