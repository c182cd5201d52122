mod common;

use common::{covariance, jacobi_eigen, random};
use h4d::motion_model::{build_delta_matrix, explained_fraction, fit_motion_basis, fit_pca, MotionBasis};
use h4d::tensorcore::{ParamSet, Tensor};

#[test]
fn pca_matches_jacobi_oracle() {
    let dims = [(50, 8), (10, 30), (64, 64), (20, 5), (7, 12)];
    for (seed, &(n, d)) in dims.iter().cycle().take(20).enumerate() {
        let x = random(&[n, d], 1.0, seed as u64, "pca");
        let p = fit_pca(&x, 1.0).unwrap();
        let (vals, vecs) = jacobi_eigen(&covariance(x.data(), n, d), d);
        let m = p.num_components();
        assert_eq!(m, (n - 1).min(d));
        for c in 0..m {
            assert!((p.eigvals.data()[c] as f64 - vals[c]).abs() < 1e-5 * vals[0].max(1.0));
            // Align the oracle vector's sign by the same convention.
            let col: Vec<f64> = (0..d).map(|r| vecs[r * d + c]).collect();
            let big = col.iter().cloned().fold(0.0f64, |acc, v| if v.abs() > acc.abs() { v } else { acc });
            let s = big.signum();
            for r in 0..d {
                assert!((p.comps.data()[r * m + c] as f64 - s * col[r]).abs() < 1e-5, "seed {seed} comp {c}");
            }
        }
    }
}

#[test]
fn components_orthonormal_and_spectrum_sorted() {
    let x = random(&[40, 12], 1.0, 3, "orth");
    let p = fit_pca(&x, 1.0).unwrap();
    let m = p.num_components();
    let ctc = p.comps.transpose().unwrap().matmul(&p.comps).unwrap();
    for i in 0..m {
        for j in 0..m {
            let want = if i == j { 1.0 } else { 0.0 };
            assert!((ctc.data()[i * m + j] - want).abs() < 1e-4);
        }
    }
    assert!(p.spectrum.windows(2).all(|w| w[0] >= w[1]));
    assert!(p.spectrum.iter().all(|&l| l >= 0.0));
    let q: Vec<f64> = (0..=p.spectrum.len()).map(|m| explained_fraction(&p.spectrum, m)).collect();
    assert!(q.windows(2).all(|w| w[0] <= w[1]));
}

#[test]
fn variance_selector_is_minimal() {
    for seed in 0..10 {
        let x = random(&[30, 10], 1.0, seed, "sel");
        let p = fit_pca(&x, 0.9).unwrap();
        let m = p.num_components();
        assert!(explained_fraction(&p.spectrum, m) > 0.9);
        assert!(explained_fraction(&p.spectrum, m - 1) <= 0.9);
    }
}

fn corpus(n: usize, l: usize, p: usize, seed: u64) -> Vec<Tensor> {
    (0..n).map(|i| random(&[l, p], 0.5, seed * 1000 + i as u64, "seq")).collect()
}

#[test]
fn delta_matrix_shapes_and_values() {
    let seqs = corpus(5, 30, 72, 1);
    let (g, b) = build_delta_matrix(&seqs).unwrap();
    assert_eq!(g.shape(), &[5, 87]);
    assert_eq!(b.shape(), &[5, 2001]);

    let constant = Tensor::from_fn(&[4, 72], |i| (i % 72) as f32 * 0.01);
    let (g, b) = build_delta_matrix(&[constant]).unwrap();
    assert!(g.data().iter().chain(b.data()).all(|&v| v == 0.0));

    let mut two = Tensor::zeros(&[2, 6]);
    two.data_mut()[6..].copy_from_slice(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
    let (g, b) = build_delta_matrix(&[two]).unwrap();
    assert_eq!(g.data(), &[1.0, 2.0, 3.0]);
    assert_eq!(b.data(), &[4.0, 5.0, 6.0]);

    assert!(build_delta_matrix(&[Tensor::zeros(&[3, 6]), Tensor::zeros(&[4, 6])]).is_err());
}

#[test]
fn complete_basis_round_trip() {
    let seqs = corpus(12, 5, 12, 2);
    let basis = fit_motion_basis(&seqs, 1.0).unwrap();
    for s in &seqs {
        let (cp, cm) = basis.encode(s).unwrap();
        let back = basis.decode(&cp, &cm).unwrap();
        for (a, b) in back.data().iter().zip(s.data()) {
            assert!((a - b).abs() < 1e-4);
        }
    }
}

#[test]
fn decode_special_cases() {
    let seqs = corpus(8, 4, 9, 3);
    let basis = fit_motion_basis(&seqs, 0.9).unwrap();
    let cp = random(&[9], 0.5, 0, "cp");
    let out = basis.decode(&cp, &Tensor::zeros(&[basis.code_dims()])).unwrap();
    assert_eq!(out.row(0), cp.data());
    let mean: Vec<f32> = (0..3)
        .flat_map(|t| {
            let g = &basis.global.mean.data()[3 * t..3 * t + 3];
            let b = &basis.body.mean.data()[6 * t..6 * t + 6];
            g.iter().chain(b).copied().collect::<Vec<_>>()
        })
        .collect();
    for t in 1..4 {
        for k in 0..9 {
            assert!((out.row(t)[k] - (cp.data()[k] + mean[9 * (t - 1) + k])).abs() < 1e-6);
        }
    }
    assert!(basis.decode(&Tensor::zeros(&[8]), &Tensor::zeros(&[basis.code_dims()])).is_err());
    assert!(basis.decode(&cp, &Tensor::zeros(&[basis.code_dims() + 1])).is_err());
}

#[test]
fn degenerate_corpus_gives_empty_blocks() {
    let s = random(&[5, 9], 0.5, 9, "rep");
    let basis = fit_motion_basis(&[s.clone(), s.clone(), s.clone()], 0.9).unwrap();
    assert_eq!(basis.code_dims(), 0);
    let (cp, cm) = basis.encode(&s).unwrap();
    let back = basis.decode(&cp, &cm).unwrap();
    for (a, b) in back.data().iter().zip(s.data()) {
        assert!((a - b).abs() < 1e-6);
    }
}

#[test]
fn encode_is_linear_projection() {
    let seqs = corpus(20, 5, 12, 4);
    let basis = fit_motion_basis(&seqs, 0.9).unwrap();
    let (a, b) = (random(&[5, 12], 0.5, 1, "a"), random(&[5, 12], 0.5, 2, "b"));
    let sum = a.zip_map(&b, |x, y| x + y).unwrap();
    let (_, ca) = basis.encode(&a).unwrap();
    let (_, cb) = basis.encode(&b).unwrap();
    let (_, cs) = basis.encode(&sum).unwrap();
    // Encoding is affine in the deltas: enc(a+b) = enc(a) + enc(b) + Cᵀμ.
    let (_, c0) = basis.encode(&Tensor::zeros(&[5, 12])).unwrap();
    for k in 0..basis.code_dims() {
        let want = ca.data()[k] + cb.data()[k] - c0.data()[k];
        assert!((cs.data()[k] - want).abs() < 1e-5);
    }
    // Constant sequence: alpha = -Cᵀμ.
    let mut cmean = vec![0.0f64; basis.code_dims()];
    for (off, p) in [(0, &basis.global), (basis.k_global(), &basis.body)] {
        let m = p.num_components();
        for c in 0..m {
            for r in 0..p.mean.len() {
                cmean[off + c] -= p.comps.data()[r * m + c] as f64 * p.mean.data()[r] as f64;
            }
        }
    }
    for k in 0..basis.code_dims() {
        assert!((c0.data()[k] as f64 - cmean[k]).abs() < 1e-5);
    }

    // Idempotence and least-squares optimality of decode∘encode.
    let (cp, cm) = basis.encode(&a).unwrap();
    let rec = basis.decode(&cp, &cm).unwrap();
    let (_, cm2) = basis.encode(&rec).unwrap();
    for (x, y) in cm.data().iter().zip(cm2.data()) {
        assert!((x - y).abs() < 1e-5);
    }
    let err = |r: &Tensor| -> f64 { r.data().iter().zip(a.data()).map(|(x, y)| ((x - y) as f64).powi(2)).sum() };
    let e0 = err(&rec);
    for k in 0..basis.code_dims() {
        let mut pert = cm.clone();
        pert.data_mut()[k] += 1e-2;
        assert!(err(&basis.decode(&cp, &pert).unwrap()) >= e0);
    }
}

#[test]
fn reconstruction_error_shrinks_with_more_components() {
    let seqs = corpus(30, 5, 12, 5);
    let mut last = f64::INFINITY;
    for q in [0.3, 0.5, 0.7, 0.9, 0.99, 1.0] {
        let basis = fit_motion_basis(&seqs, q).unwrap();
        let mut e = 0.0;
        for s in &seqs {
            let (cp, cm) = basis.encode(s).unwrap();
            let r = basis.decode(&cp, &cm).unwrap();
            e += r.data().iter().zip(s.data()).map(|(x, y)| ((x - y) as f64).powi(2)).sum::<f64>();
        }
        assert!(e <= last + 1e-6);
        last = e;
    }
}

#[test]
fn whitening_round_trip_and_persistence() {
    let seqs = corpus(12, 4, 9, 6);
    let mut basis = fit_motion_basis(&seqs, 1.0).unwrap();
    basis.whiten = true;
    let (cp, cm) = basis.encode(&seqs[0]).unwrap();
    let back = basis.decode(&cp, &cm).unwrap();
    for (a, b) in back.data().iter().zip(seqs[0].data()) {
        assert!((a - b).abs() < 1e-4);
    }
    let mut params = ParamSet::new();
    basis.store(&mut params);
    assert_eq!(MotionBasis::load(&params).unwrap(), basis);
}

mod pca_unit {
    use h4d::motion_model::{fit_pca, select_components};
    use h4d::tensorcore::Tensor;

    #[test]
    fn selector_is_minimal() {
        let s = [5.0, 3.0, 1.0, 1.0];
        assert_eq!(select_components(&s, 0.49), 1);
        // Strict inequality: Q(1) = 0.5 does not exceed 0.5.
        assert_eq!(select_components(&s, 0.5), 2);
        assert_eq!(select_components(&s, 0.8), 3);
        assert_eq!(select_components(&s, 0.95), 4);
        assert_eq!(select_components(&s, 1.0), 4);
        assert_eq!(select_components(&[0.0, 0.0], 0.9), 0);
    }

    #[test]
    fn rank_one_data() {
        let v = [0.6f32, -0.8, 0.0];
        let mean = [1.0f32, 2.0, 3.0];
        let rows = Tensor::from_fn(&[6, 3], |i| {
            let s = (i / 3) as f32 - 2.5;
            mean[i % 3] + s * v[i % 3]
        });
        let p = fit_pca(&rows, 0.9).unwrap();
        assert_eq!(p.num_components(), 1);
        assert!((p.comps.data()[0] - 0.6).abs() < 1e-6 || (p.comps.data()[0] + 0.6).abs() < 1e-6);
        // Sign convention: the largest-magnitude entry (-0.8) is flipped positive.
        assert!((p.comps.data()[1] - 0.8).abs() < 1e-6);
    }

    #[test]
    fn bad_arguments() {
        assert!(fit_pca(&Tensor::zeros(&[1, 3]), 0.9).is_err());
        assert!(fit_pca(&Tensor::zeros(&[3, 3]), 0.0).is_err());
        assert!(fit_pca(&Tensor::zeros(&[3, 3]), 1.5).is_err());
        let p = fit_pca(&Tensor::ones(&[3, 3]), 0.9).unwrap();
        assert_eq!(p.num_components(), 0);
    }
}
