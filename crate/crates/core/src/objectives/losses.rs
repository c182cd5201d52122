use crate::error::{dim_err, Error, Result};
use crate::tensorcore::{Graph, Tensor, Var};

/// Per-vertex L1 reconstruction error: sum of absolute coordinate differences
/// per vertex, averaged over frames and vertices.
pub fn vertex_l1(x: &Tensor, y: &Tensor) -> Result<f64> {
    check_vertices("vertex_l1", x.shape(), y.shape())?;
    let s: f64 = x.data().iter().zip(y.data()).map(|(a, b)| (a - b).abs() as f64).sum();
    Ok(s / (x.len() / 3) as f64)
}

fn check_vertices(op: &'static str, a: &[usize], b: &[usize]) -> Result<()> {
    if a != b || a.last() != Some(&3) {
        return dim_err(op, format!("{a:?} vs {b:?}"));
    }
    Ok(())
}

pub fn vertex_l1_var(g: &mut Graph, x: Var, y: Var) -> Result<Var> {
    check_vertices("vertex_l1", g.shape(x), g.shape(y))?;
    let n = g.value(x).len() / 3;
    let d = g.sub(x, y)?;
    let a = g.abs(d);
    let s = g.sum(a);
    Ok(g.scale(s, 1.0 / n as f32))
}

/// Squared L2 distance between shape codes.
pub fn shape_l2(c: &Tensor, c_star: &Tensor) -> Result<f64> {
    if c.len() != c_star.len() {
        return dim_err("shape_l2", format!("{:?} vs {:?}", c.shape(), c_star.shape()));
    }
    Ok(c.data().iter().zip(c_star.data()).map(|(a, b)| ((a - b) as f64).powi(2)).sum())
}

pub fn shape_l2_var(g: &mut Graph, c: Var, c_star: Var) -> Result<Var> {
    if g.value(c).len() != g.value(c_star).len() {
        return dim_err("shape_l2", format!("{:?} vs {:?}", g.shape(c), g.shape(c_star)));
    }
    let c2 = g.reshape(c_star, g.shape(c).to_vec().as_slice())?;
    let d = g.sub(c, c2)?;
    let sq = g.square(d);
    Ok(g.sum(sq))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossWeights {
    pub lambda_s: f32,
    /// LMM-only reconstruction vs the body mesh.
    pub lambda_r1: f32,
    /// Motion-compensated reconstruction vs the body mesh.
    pub lambda_r2: f32,
    /// Predicted canonical offsets vs ground-truth offsets.
    pub lambda_r3: f32,
}

impl LossWeights {
    pub fn stage1() -> Self {
        Self { lambda_s: 1.0, lambda_r1: 1.0, lambda_r2: 0.0, lambda_r3: 0.0 }
    }

    pub fn stage2() -> Self {
        Self { lambda_s: 1.0, lambda_r1: 0.0, lambda_r2: 1.0, lambda_r3: 30.0 }
    }

    pub fn for_stage(stage: u8) -> Result<Self> {
        match stage {
            1 => Ok(Self::stage1()),
            2 => Ok(Self::stage2()),
            s => Err(Error::InvalidArgument(format!("stage must be 1 or 2, got {s}"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.lambda_s, self.lambda_r1, self.lambda_r2, self.lambda_r3];
        if all.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::InvalidArgument(format!("loss weights must be nonnegative: {self:?}")));
        }
        Ok(())
    }
}

/// Network outputs entering the training loss.
#[derive(Clone, Copy, Debug, Default)]
pub struct LossOutputs {
    pub shape_code: Option<Var>,
    /// `[L,V,3]` body decoded from LMM poses.
    pub x_linear: Option<Var>,
    /// `[L,V,3]` body decoded from motion-compensated poses.
    pub x_motion: Option<Var>,
    /// `[L,V,3]` predicted canonical offsets.
    pub x_shape: Option<Var>,
}

#[derive(Clone, Copy, Debug)]
pub struct LossTargets {
    pub shape_code: Var,
    pub y_body: Var,
    pub y_offset: Option<Var>,
}

/// Weighted training objective; zero-weight terms are not recorded at all, so
/// they contribute exactly zero gradient.
pub fn total_loss(g: &mut Graph, stage: u8, out: &LossOutputs, tgt: &LossTargets, w: &LossWeights) -> Result<Var> {
    w.validate()?;
    let missing = |what: &str| Error::InvalidArgument(format!("stage {stage} loss needs {what}"));
    match stage {
        1 if out.x_linear.is_none() => return Err(missing("X_linear")),
        2 if out.x_motion.is_none() || out.x_shape.is_none() => return Err(missing("X_motion and X_shape")),
        2 if tgt.y_offset.is_none() => return Err(missing("Y_offset")),
        1 | 2 => {}
        s => return Err(Error::InvalidArgument(format!("stage must be 1 or 2, got {s}"))),
    }
    let mut terms = Vec::new();
    if w.lambda_s > 0.0 {
        let c = out.shape_code.ok_or_else(|| missing("a shape code"))?;
        let t = shape_l2_var(g, c, tgt.shape_code)?;
        terms.push(g.scale(t, w.lambda_s));
    }
    let pairs = [
        (w.lambda_r1, out.x_linear, Some(tgt.y_body)),
        (w.lambda_r2, out.x_motion, Some(tgt.y_body)),
        (w.lambda_r3, out.x_shape, tgt.y_offset),
    ];
    for (lambda, x, y) in pairs {
        if lambda > 0.0 {
            let (x, y) = match (x, y) {
                (Some(x), Some(y)) => (x, y),
                _ => return Err(missing("every output with a nonzero weight")),
            };
            let t = vertex_l1_var(g, x, y)?;
            terms.push(g.scale(t, lambda));
        }
    }
    let mut acc = match terms.first() {
        Some(&t) => t,
        None => return Ok(g.constant(Tensor::scalar(0.0))),
    };
    for &t in &terms[1..] {
        acc = g.add(acc, t)?;
    }
    Ok(acc)
}

/// Regularizers on fitted codes.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PriorWeights {
    pub shape: f32,
    pub motion: f32,
    pub aux: f32,
}

impl Default for PriorWeights {
    fn default() -> Self {
        Self { shape: 1e-2, motion: 1e-3, aux: 1e-3 }
    }
}

/// Per-coefficient Mahalanobis weights `1/λ`, zero where `λ` is zero.
pub fn precision(eigvals: &[f32]) -> Vec<f32> {
    eigvals.iter().map(|&l| if l > 0.0 { 1.0 / l } else { 0.0 }).collect()
}

/// `w_s‖c_s‖² + w_m Σ α²/λ + w_a‖c_a‖²`.
pub fn prior_terms(c_s: &Tensor, c_m: &Tensor, c_a: &Tensor, eigvals: &[f32], w: &PriorWeights) -> Result<f64> {
    if c_m.len() != eigvals.len() {
        return dim_err("prior_terms", format!("c_m {:?} vs {} eigenvalues", c_m.shape(), eigvals.len()));
    }
    let sq = |t: &Tensor| t.data().iter().map(|&v| (v as f64).powi(2)).sum::<f64>();
    let maha: f64 = c_m
        .data()
        .iter()
        .zip(precision(eigvals))
        .map(|(&a, p)| (a as f64).powi(2) * p as f64)
        .sum();
    Ok(w.shape as f64 * sq(c_s) + w.motion as f64 * maha + w.aux as f64 * sq(c_a))
}

pub fn prior_terms_var(g: &mut Graph, c_s: Var, c_m: Var, c_a: Var, eigvals: &[f32], w: &PriorWeights) -> Result<Var> {
    if g.value(c_m).len() != eigvals.len() {
        return dim_err("prior_terms", format!("c_m {:?} vs {} eigenvalues", g.shape(c_m), eigvals.len()));
    }
    let s2 = g.square(c_s);
    let s = g.sum(s2);
    let s = g.scale(s, w.shape);
    let a2 = g.square(c_a);
    let a = g.sum(a2);
    let a = g.scale(a, w.aux);
    let mut total = g.add(s, a)?;
    if !eigvals.is_empty() {
        let prec = g.constant(Tensor::new(g.shape(c_m), precision(eigvals))?);
        let m2 = g.square(c_m);
        let m = g.mul(m2, prec)?;
        let m = g.sum(m);
        let m = g.scale(m, w.motion);
        total = g.add(total, m)?;
    }
    Ok(total)
}
