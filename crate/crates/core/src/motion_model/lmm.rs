use crate::error::{dim_err, Error, Result};
use crate::tensorcore::{Graph, ParamSet, Tensor, Var};

use super::pca::{fit_pca, Pca};

/// PCA over per-frame pose deltas from the first frame, split into the root
/// orientation block and the remaining joints.
#[derive(Clone, Debug, PartialEq)]
pub struct MotionBasis {
    pub seq_len: usize,
    pub pose_dims: usize,
    pub global: Pca,
    pub body: Pca,
    /// Scale codes by `√λ` so that unit coefficients mean one standard
    /// deviation. Off by default.
    pub whiten: bool,
}

/// Delta matrices `[N, 3(L−1)]` and `[N, (P−3)(L−1)]`, frame-major.
pub fn build_delta_matrix(pose_seqs: &[Tensor]) -> Result<(Tensor, Tensor)> {
    let first = pose_seqs.first().ok_or_else(|| Error::InvalidArgument("no sequences".into()))?;
    if first.rank() != 2 || first.dim(1) < 3 || first.dim(1) % 3 != 0 || first.dim(0) < 2 {
        return dim_err("build_delta_matrix", format!("sequence shape {:?}", first.shape()));
    }
    let (l, p) = (first.dim(0), first.dim(1));
    let n = pose_seqs.len();
    let mut global = Vec::with_capacity(n * 3 * (l - 1));
    let mut body = Vec::with_capacity(n * (p - 3) * (l - 1));
    for s in pose_seqs {
        if s.shape() != [l, p] {
            return dim_err("build_delta_matrix", format!("{:?} vs [{l},{p}]", s.shape()));
        }
        let d = s.data();
        for t in 1..l {
            for k in 0..p {
                let delta = d[t * p + k] - d[k];
                if k < 3 {
                    global.push(delta);
                } else {
                    body.push(delta);
                }
            }
        }
    }
    Ok((Tensor::new(&[n, 3 * (l - 1)], global)?, Tensor::new(&[n, (p - 3) * (l - 1)], body)?))
}

/// Fit both blocks at the same variance fraction.
pub fn fit_motion_basis(pose_seqs: &[Tensor], q_target: f64) -> Result<MotionBasis> {
    if pose_seqs.len() < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 sequences, got {}", pose_seqs.len())));
    }
    let (g, b) = build_delta_matrix(pose_seqs)?;
    Ok(MotionBasis {
        seq_len: pose_seqs[0].dim(0),
        pose_dims: pose_seqs[0].dim(1),
        global: fit_pca(&g, q_target)?,
        body: fit_pca(&b, q_target)?,
        whiten: false,
    })
}

/// Basis tensors placed on a graph as constants.
#[derive(Clone, Copy, Debug)]
pub struct BasisVars {
    mean_global: Var,
    mean_body: Var,
    /// `[K_g, 3(L−1)]`, `None` when the block has no components.
    comps_global_t: Option<Var>,
    comps_body_t: Option<Var>,
    scale_global: Option<Var>,
    scale_body: Option<Var>,
}

impl MotionBasis {
    pub fn k_global(&self) -> usize {
        self.global.num_components()
    }

    pub fn k_body(&self) -> usize {
        self.body.num_components()
    }

    pub fn code_dims(&self) -> usize {
        self.k_global() + self.k_body()
    }

    /// Eigenvalues of both blocks in code order.
    pub fn eigenvalues(&self) -> Vec<f32> {
        self.global.eigvals.data().iter().chain(self.body.eigvals.data()).copied().collect()
    }

    /// Prior variance of each code entry: the eigenvalues, or one per retained
    /// component when codes are whitened.
    pub fn code_variances(&self) -> Vec<f32> {
        let eig = self.eigenvalues();
        if self.whiten {
            eig.iter().map(|&l| if l > 0.0 { 1.0 } else { 0.0 }).collect()
        } else {
            eig
        }
    }

    fn whitening_scale(eig: &Tensor) -> Tensor {
        eig.map(|l| l.max(0.0).sqrt())
    }

    pub fn bind(&self, g: &mut Graph) -> Result<BasisVars> {
        let mut comps = |p: &Pca| -> Result<Option<Var>> {
            Ok(if p.num_components() == 0 { None } else { Some(g.constant(p.comps.transpose()?)) })
        };
        let comps_global_t = comps(&self.global)?;
        let comps_body_t = comps(&self.body)?;
        let mut scale = |p: &Pca| {
            (self.whiten && p.num_components() > 0).then(|| g.constant(Self::whitening_scale(&p.eigvals)))
        };
        let scale_global = scale(&self.global);
        let scale_body = scale(&self.body);
        Ok(BasisVars {
            mean_global: g.constant(self.global.mean.clone()),
            mean_body: g.constant(self.body.mean.clone()),
            comps_global_t,
            comps_body_t,
            scale_global,
            scale_body,
        })
    }

    /// Sequence `[L,P]` from initial pose `c_p [P]` and motion code `c_m [K]`.
    pub fn decode_var(&self, g: &mut Graph, bv: &BasisVars, c_p: Var, c_m: Var) -> Result<Var> {
        let (l, p) = (self.seq_len, self.pose_dims);
        let (kg, kb) = (self.k_global(), self.k_body());
        if g.value(c_p).len() != p || g.value(c_m).len() != kg + kb {
            return dim_err(
                "lmm_decode",
                format!("c_p {:?}, c_m {:?} vs P={p}, K={}", g.shape(c_p), g.shape(c_m), kg + kb),
            );
        }
        let code = g.reshape(c_m, &[1, kg + kb])?;
        let block = |g: &mut Graph, lo: usize, hi: usize, mean: Var, comps: Option<Var>, scale: Option<Var>, w: usize| {
            let flat = match comps {
                None => mean,
                Some(ct) => {
                    let mut a = g.slice_cols(code, lo, hi)?;
                    if let Some(s) = scale {
                        a = g.mul_row(a, s)?;
                    }
                    let disp = g.matmul(a, ct)?;
                    let disp = g.reshape(disp, &[(l - 1) * w])?;
                    g.add(disp, mean)?
                }
            };
            g.reshape(flat, &[l - 1, w])
        };
        let glob = block(g, 0, kg, bv.mean_global, bv.comps_global_t, bv.scale_global, 3)?;
        let body = block(g, kg, kg + kb, bv.mean_body, bv.comps_body_t, bv.scale_body, p - 3)?;
        let deltas = g.concat_cols(&[glob, body])?;
        let cp_row = g.reshape(c_p, &[1, p])?;
        let rest = g.add_row(deltas, cp_row)?;
        g.concat_rows(&[cp_row, rest])
    }

    pub fn decode(&self, c_p: &Tensor, c_m: &Tensor) -> Result<Tensor> {
        let mut g = Graph::new();
        let bv = self.bind(&mut g)?;
        let (a, b) = (g.constant(c_p.clone()), g.constant(c_m.clone()));
        let out = self.decode_var(&mut g, &bv, a, b)?;
        Ok(g.value(out).clone())
    }

    /// Analytic projection: `c_p = θ₁`, `α = Cᵀ(Ψ − μ)` per block.
    pub fn encode(&self, seq: &Tensor) -> Result<(Tensor, Tensor)> {
        if seq.shape() != [self.seq_len, self.pose_dims] {
            return dim_err("lmm_encode", format!("{:?} vs [{},{}]", seq.shape(), self.seq_len, self.pose_dims));
        }
        let (g, b) = build_delta_matrix(std::slice::from_ref(seq))?;
        let mut code = project(&self.global, g.data(), self.whiten);
        code.extend(project(&self.body, b.data(), self.whiten));
        Ok((Tensor::vector(seq.row(0).to_vec()), Tensor::vector(code)))
    }

    pub fn store(&self, params: &mut ParamSet) {
        params.insert("lmm.mean_global", self.global.mean.clone());
        params.insert("lmm.comps_global", self.global.comps.clone());
        params.insert("lmm.eig_global", self.global.eigvals.clone());
        params.insert("lmm.spectrum_global", spectrum_tensor(&self.global.spectrum));
        params.insert("lmm.mean_body", self.body.mean.clone());
        params.insert("lmm.comps_body", self.body.comps.clone());
        params.insert("lmm.eig_body", self.body.eigvals.clone());
        params.insert("lmm.spectrum_body", spectrum_tensor(&self.body.spectrum));
        params.insert("lmm.L", Tensor::scalar(self.seq_len as f32));
        params.insert("lmm.whiten", Tensor::scalar(if self.whiten { 1.0 } else { 0.0 }));
    }

    pub fn load(params: &ParamSet) -> Result<Self> {
        let block = |tag: &str| -> Result<Pca> {
            let spectrum = match params.get(&format!("lmm.spectrum_{tag}")) {
                Ok(t) => t.data().iter().map(|&v| v as f64).collect(),
                Err(_) => params.get(&format!("lmm.eig_{tag}"))?.data().iter().map(|&v| v as f64).collect(),
            };
            Ok(Pca {
                mean: params.get(&format!("lmm.mean_{tag}"))?.clone(),
                comps: params.get(&format!("lmm.comps_{tag}"))?.clone(),
                eigvals: params.get(&format!("lmm.eig_{tag}"))?.clone(),
                spectrum,
            })
        };
        let global = block("global")?;
        let body = block("body")?;
        let seq_len = params.get("lmm.L")?.item() as usize;
        let whiten = params.get("lmm.whiten").map(|t| t.item() != 0.0).unwrap_or(false);
        if seq_len < 2 || global.mean.len() != 3 * (seq_len - 1) || body.mean.len() % (seq_len - 1) != 0 {
            return Err(Error::InvalidArgument("inconsistent lmm entries".into()));
        }
        let pose_dims = 3 + body.mean.len() / (seq_len - 1);
        for p in [&global, &body] {
            let m = p.eigvals.len();
            if p.comps.shape() != [p.mean.len(), m] {
                return dim_err("MotionBasis::load", format!("comps {:?}", p.comps.shape()));
            }
        }
        Ok(Self { seq_len, pose_dims, global, body, whiten })
    }
}

fn spectrum_tensor(s: &[f64]) -> Tensor {
    Tensor::vector(s.iter().map(|&v| v as f32).collect())
}

fn project(p: &Pca, row: &[f32], whiten: bool) -> Vec<f32> {
    let (d, m) = (p.mean.len(), p.num_components());
    (0..m)
        .map(|c| {
            let mut acc = 0.0f64;
            for r in 0..d {
                acc += p.comps.data()[r * m + c] as f64 * (row[r] - p.mean.data()[r]) as f64;
            }
            if whiten {
                let s = (p.eigvals.data()[c].max(0.0) as f64).sqrt();
                if s > 0.0 {
                    acc /= s;
                }
            }
            acc as f32
        })
        .collect()
}

pub fn lmm_decode(basis: &MotionBasis, c_p: &Tensor, c_m: &Tensor) -> Result<Tensor> {
    basis.decode(c_p, c_m)
}

pub fn lmm_encode(basis: &MotionBasis, seq: &Tensor) -> Result<(Tensor, Tensor)> {
    basis.encode(seq)
}
