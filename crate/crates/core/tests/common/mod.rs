#![allow(dead_code)]

pub mod oracles;

use h4d::tensorcore::init::rng_for;
use h4d::tensorcore::Tensor;
use rand::Rng;

pub fn random(shape: &[usize], scale: f32, seed: u64, name: &str) -> Tensor {
    let mut rng = rng_for(seed, name);
    Tensor::from_fn(shape, |_| rng.random_range(-scale..scale))
}

/// Cyclic Jacobi eigensolver for a dense symmetric matrix. Returns eigenvalues
/// sorted descending with matching unit eigenvectors (as columns, row-major).
pub fn jacobi_eigen(a: &[f64], n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut a = a.to_vec();
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    for _sweep in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| a[i * n + j].powi(2)).sum();
        let diag: f64 = (0..n).map(|i| a[i * n + i].powi(2)).sum();
        if off <= 1e-30 * diag.max(1e-300) {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p * n + q];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k * n + p], a[k * n + q]);
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p * n + k], a[q * n + k]);
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let (vkp, vkq) = (v[k * n + p], v[k * n + q]);
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| a[y * n + y].total_cmp(&a[x * n + x]));
    let vals = order.iter().map(|&i| a[i * n + i]).collect();
    let mut vecs = vec![0.0; n * n];
    for (c, &i) in order.iter().enumerate() {
        for r in 0..n {
            vecs[r * n + c] = v[r * n + i];
        }
    }
    (vals, vecs)
}

/// Sample covariance (1/(N−1)) of a row-major `[n,d]` matrix.
pub fn covariance(x: &[f32], n: usize, d: usize) -> Vec<f64> {
    let mut mean = vec![0.0; d];
    for i in 0..n {
        for j in 0..d {
            mean[j] += x[i * d + j] as f64 / n as f64;
        }
    }
    let mut c = vec![0.0; d * d];
    for i in 0..n {
        for a in 0..d {
            for b in 0..d {
                c[a * d + b] += (x[i * d + a] as f64 - mean[a]) * (x[i * d + b] as f64 - mean[b]) / (n - 1) as f64;
            }
        }
    }
    c
}

pub fn micro_setup(n: usize, seed: u64) -> (h4d::pipeline::Checkpoint, Vec<h4d::dataio::SyntheticSequence>) {
    use h4d::dataio::{gen_synthetic_dataset, Split};
    use h4d::pipeline::{build_checkpoint, preset_model, preset_synth};
    let model = preset_model("micro", 0).unwrap();
    let seqs = gen_synthetic_dataset(&model, n, &preset_synth("micro").unwrap(), Split::Train, seed).unwrap();
    let poses: Vec<Tensor> = seqs.iter().map(|s| s.poses.clone()).collect();
    let basis = h4d::motion_model::fit_motion_basis(&poses, 0.9).unwrap();
    let ck = build_checkpoint("micro", model, basis, seed).unwrap();
    (ck, seqs)
}
