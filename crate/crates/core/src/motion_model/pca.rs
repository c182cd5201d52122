use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::tensorcore::Tensor;

/// Mean-centered PCA of a row matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Pca {
    /// `[D]`
    pub mean: Tensor,
    /// `[D,m]` orthonormal columns, sorted by decreasing eigenvalue.
    pub comps: Tensor,
    /// `[m]`
    pub eigvals: Tensor,
    /// Every covariance eigenvalue the factorization produced (`min(N,D)`),
    /// nonincreasing and clipped at zero; used for `Q(m)` reporting.
    pub spectrum: Vec<f64>,
}

impl Pca {
    pub fn num_components(&self) -> usize {
        self.eigvals.len()
    }

    /// Explained-variance fraction of the retained components.
    pub fn explained(&self) -> f64 {
        explained_fraction(&self.spectrum, self.num_components())
    }
}

/// `Q(m) = Σ_{i<m} λ_i / Σ λ_i`; zero total variance counts as fully explained.
pub fn explained_fraction(spectrum: &[f64], m: usize) -> f64 {
    let total: f64 = spectrum.iter().sum();
    if total <= 0.0 {
        return 1.0;
    }
    spectrum[..m.min(spectrum.len())].iter().sum::<f64>() / total
}

/// Smallest `m` with `Q(m) > q`. For `q = 1` that test can fail to rounding,
/// so every eigenvalue above a relative noise floor is kept instead.
pub fn select_components(spectrum: &[f64], q: f64) -> usize {
    let lmax = spectrum.first().copied().unwrap_or(0.0);
    if lmax <= 0.0 {
        return 0;
    }
    if q >= 1.0 {
        return spectrum.iter().take_while(|&&l| l > 1e-10 * lmax).count();
    }
    (1..=spectrum.len())
        .find(|&m| explained_fraction(spectrum, m) > q)
        .unwrap_or(spectrum.len())
}

/// PCA of `rows [N,D]` keeping the minimal component count whose explained
/// variance exceeds `q_target`.
pub fn fit_pca(rows: &Tensor, q_target: f64) -> Result<Pca> {
    if rows.rank() != 2 {
        return Err(Error::Dimension { op: "fit_pca", detail: format!("rows {:?}", rows.shape()) });
    }
    let (n, d) = (rows.dim(0), rows.dim(1));
    if n < 2 {
        return Err(Error::InvalidArgument(format!("fit_pca needs at least 2 rows, got {n}")));
    }
    if !(q_target > 0.0 && q_target <= 1.0) {
        return Err(Error::InvalidArgument(format!("q_target {q_target} outside (0,1]")));
    }
    rows.check_finite("fit_pca rows")?;

    let x = DMatrix::from_row_slice(n, d, &rows.data().iter().map(|&v| v as f64).collect::<Vec<_>>());
    let mean = x.row_mean();
    let mut xc = x;
    for mut r in xc.row_iter_mut() {
        r -= &mean;
    }
    let denom = (n - 1) as f64;

    // Factor whichever of the covariance or Gram matrix is smaller; both share
    // their nonzero spectrum.
    let (eigvals, vectors) = if d <= n {
        let cov = xc.transpose() * &xc / denom;
        let eig = SymmetricEigen::new(cov);
        let order = sorted_desc(eig.eigenvalues.as_slice());
        let vals: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i].max(0.0)).collect();
        let vecs: Vec<Vec<f64>> = order.iter().map(|&i| eig.eigenvectors.column(i).iter().copied().collect()).collect();
        (vals, vecs)
    } else {
        let gram = &xc * xc.transpose() / denom;
        let eig = SymmetricEigen::new(gram);
        let order = sorted_desc(eig.eigenvalues.as_slice());
        let vals: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i].max(0.0)).collect();
        let lmax = vals.first().copied().unwrap_or(0.0);
        let vecs: Vec<Vec<f64>> = order
            .iter()
            .zip(&vals)
            .map(|(&i, &l)| {
                if l <= 1e-12 * lmax || l == 0.0 {
                    return vec![0.0; d];
                }
                let v = xc.transpose() * eig.eigenvectors.column(i);
                let nv = v.norm();
                v.iter().map(|x| x / nv).collect()
            })
            .collect();
        (vals, vecs)
    };

    let m = select_components(&eigvals, q_target);
    let mut comps = vec![0.0f32; d * m];
    for (c, v) in vectors.iter().take(m).enumerate() {
        let sign = sign_of_largest(v);
        for r in 0..d {
            comps[r * m + c] = (sign * v[r]) as f32;
        }
    }
    Ok(Pca {
        mean: Tensor::vector(mean.iter().map(|&v| v as f32).collect()),
        comps: Tensor::new(&[d, m], comps)?,
        eigvals: Tensor::vector(eigvals[..m].iter().map(|&v| v as f32).collect()),
        // Rounded like every persisted value so a save/load round trip is exact.
        spectrum: eigvals.iter().map(|&v| v as f32 as f64).collect(),
    })
}

fn sorted_desc(vals: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..vals.len()).collect();
    idx.sort_by(|&a, &b| vals[b].total_cmp(&vals[a]).then(a.cmp(&b)));
    idx
}

/// +1 if the largest-magnitude entry (first on ties) is nonnegative.
pub fn sign_of_largest(v: &[f64]) -> f64 {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if v.get(best).copied().unwrap_or(0.0) < 0.0 {
        -1.0
    } else {
        1.0
    }
}
