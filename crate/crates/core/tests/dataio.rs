mod common;

use h4d::body_model::{make_toy_model, Pose};
use h4d::dataio::{
    export_obj_sequence, gen_synthetic_dataset, model_from_archive, model_to_archive, obj_string, slice_subsequences,
    Dataset, Split, SynthConfig, TensorArchive,
};
use h4d::tensorcore::Tensor;
use h4d::Error;
use proptest::prelude::*;
use sha2::{Digest, Sha256};

fn entry_set() -> impl Strategy<Value = Vec<(String, Vec<usize>, Vec<u32>)>> {
    prop::collection::vec(
        (prop::collection::vec(0usize..4, 0..4), "[a-z.]{0,6}", any::<u64>()),
        0..12,
    )
    .prop_map(|items| {
        items
            .into_iter()
            .enumerate()
            .map(|(i, (shape, stem, seed))| {
                let n: usize = shape.iter().product();
                let mut x = seed;
                let bits = (0..n)
                    .map(|_| {
                        x = x.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                        (x >> 32) as u32
                    })
                    .collect();
                (format!("{i}{stem}"), shape, bits)
            })
            .collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]
    #[test]
    fn archive_round_trip_is_bit_exact(entries in entry_set()) {
        let mut a = TensorArchive::new();
        for (name, shape, bits) in &entries {
            let t = Tensor::new(shape, bits.iter().map(|&b| f32::from_bits(b)).collect()).unwrap();
            a.push(name.clone(), t).unwrap();
        }
        let bytes = a.to_bytes();
        let b = TensorArchive::from_bytes(&bytes).unwrap();
        prop_assert_eq!(b.len(), entries.len());
        for ((name, shape, bits), (n2, t2)) in entries.iter().zip(b.entries()) {
            prop_assert_eq!(name, n2);
            prop_assert_eq!(shape.as_slice(), t2.shape());
            let got: Vec<u32> = t2.data().iter().map(|x| x.to_bits()).collect();
            prop_assert_eq!(bits, &got);
        }
        prop_assert_eq!(b.to_bytes(), bytes);
    }
}

fn small_archive() -> TensorArchive {
    let mut a = TensorArchive::new();
    a.push("alpha", Tensor::scalar(1.5)).unwrap();
    a.push("beta", common::random(&[2, 3], 1.0, 1, "b")).unwrap();
    a.push("gamma", Tensor::new(&[0, 4], vec![]).unwrap()).unwrap();
    a
}

#[test]
fn every_truncation_is_a_parse_error() {
    let bytes = small_archive().to_bytes();
    for cut in 0..bytes.len() {
        match TensorArchive::from_bytes(&bytes[..cut]) {
            Err(Error::Parse { offset, .. }) => assert!(offset <= cut),
            other => panic!("prefix of {cut} bytes gave {other:?}"),
        }
    }
}

#[test]
fn corrupt_magic_and_trailing_bytes_are_rejected() {
    let mut bytes = small_archive().to_bytes();
    bytes[0] = b'X';
    assert!(matches!(TensorArchive::from_bytes(&bytes), Err(Error::Parse { offset: 0, .. })));
    let mut bytes = small_archive().to_bytes();
    bytes.push(0);
    assert!(matches!(TensorArchive::from_bytes(&bytes), Err(Error::Parse { .. })));
}

#[test]
fn duplicate_names_are_rejected() {
    let mut a = TensorArchive::new();
    a.push("x", Tensor::scalar(0.0)).unwrap();
    assert!(a.push("x", Tensor::scalar(1.0)).is_err());
}

#[test]
fn empty_and_large_archives_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let empty = TensorArchive::new();
    empty.write(dir.path().join("e.hta")).unwrap();
    assert_eq!(TensorArchive::read(dir.path().join("e.hta")).unwrap(), empty);

    let mut big = TensorArchive::new();
    for i in 0..1000 {
        big.push(format!("entry.{i}"), common::random(&[i % 5 + 1, 3], 10.0, i as u64, "big")).unwrap();
    }
    let path = dir.path().join("big.hta");
    big.write(&path).unwrap();
    let on_disk = std::fs::read(&path).unwrap();
    let again = TensorArchive::read(&path).unwrap().to_bytes();
    assert_eq!(Sha256::digest(&on_disk), Sha256::digest(&again));
    assert_eq!(Sha256::digest(&on_disk), Sha256::digest(big.to_bytes()));
}

#[test]
fn body_model_survives_archive() {
    let model = make_toy_model(24, 600, 10, 3).unwrap();
    let back = model_from_archive(&TensorArchive::from_bytes(&model_to_archive(&model).to_bytes()).unwrap()).unwrap();
    assert_eq!(back.parents, model.parents);
    assert_eq!(back.faces, model.faces);
    assert_eq!(back.template, model.template);
    assert_eq!(back.skin_weights, model.skin_weights);
}

#[test]
fn synthetic_data_is_deterministic_and_decodes_exactly() {
    let model = make_toy_model(24, 600, 10, 0).unwrap();
    let cfg = SynthConfig::default();
    let a = gen_synthetic_dataset(&model, 6, &cfg, Split::Train, 11).unwrap();
    let b = gen_synthetic_dataset(&model, 6, &cfg, Split::Train, 11).unwrap();
    assert_eq!(a, b);
    let c = gen_synthetic_dataset(&model, 6, &cfg, Split::Train, 12).unwrap();
    assert_ne!(a[0].poses, c[0].poses);

    for s in &a {
        assert_eq!(s.poses.shape(), &[30, 72]);
        let clothed = s.clothed_meshes(&model).unwrap();
        let v = model.num_vertices() * 3;
        for t in 0..s.seq_len() {
            let pose = Pose::from_flat(&Tensor::vector(s.poses.row(t).to_vec())).unwrap();
            let direct = model.skin_lbs(&s.beta, &pose, Some(&s.offsets)).unwrap();
            assert_eq!(&clothed.data()[t * v..(t + 1) * v], direct.data());
        }
        for t in 0..s.seq_len() {
            assert!(s.poses.row(t)[3..].iter().all(|x| x.abs() <= cfg.max_angle));
        }
        let peak = s.offsets.data().chunks(3).map(|o| (o[0] * o[0] + o[1] * o[1] + o[2] * o[2]).sqrt()).fold(0.0f32, f32::max);
        assert!(peak <= cfg.max_offset * 1.0001 && peak > 0.0);
    }
}

#[test]
fn split_families_are_disjoint() {
    let model = make_toy_model(24, 600, 10, 0).unwrap();
    let cfg = SynthConfig::default();
    let train = gen_synthetic_dataset(&model, 8, &cfg, Split::Train, 1).unwrap();
    let test = gen_synthetic_dataset(&model, 4, &cfg, Split::Test, 1).unwrap();
    for s in &train {
        assert!(test.iter().all(|t| t.family != s.family));
    }
}

#[test]
fn generic_skeletons_generate() {
    let model = make_toy_model(4, 24, 4, 0).unwrap();
    let seqs = gen_synthetic_dataset(&model, 3, &SynthConfig { seq_len: 3, ..Default::default() }, Split::Test, 5).unwrap();
    assert_eq!(seqs[0].poses.shape(), &[3, 12]);
    assert!(seqs.iter().all(|s| s.clothed_meshes(&model).unwrap().is_finite()));
}

#[test]
fn dataset_directory_round_trips() {
    let model = make_toy_model(24, 600, 10, 0).unwrap();
    let cfg = SynthConfig::default();
    let ds = Dataset {
        train: gen_synthetic_dataset(&model, 3, &cfg, Split::Train, 1).unwrap(),
        test: gen_synthetic_dataset(&model, 2, &cfg, Split::Test, 1).unwrap(),
        model,
    };
    let dir = tempfile::tempdir().unwrap();
    ds.save(dir.path()).unwrap();
    let back = Dataset::load(dir.path()).unwrap();
    assert_eq!(back.train, ds.train);
    assert_eq!(back.test, ds.test);
    assert_eq!(back.model.template, ds.model.template);
}

#[test]
fn slicing_windows() {
    let long = Tensor::from_fn(&[32, 2], |i| i as f32);
    assert_eq!(slice_subsequences(&Tensor::from_fn(&[30, 2], |i| i as f32), 30, 1).unwrap().len(), 1);
    let w = slice_subsequences(&long, 30, 1).unwrap();
    assert_eq!(w.len(), 3);
    for (k, win) in w.iter().enumerate() {
        for t in 0..30 {
            assert_eq!(win.row(t), long.row(t + k));
        }
    }
    assert_eq!(slice_subsequences(&long, 10, 11).unwrap().len(), 3);
    assert!(slice_subsequences(&long, 33, 1).is_err());
}

/// Naive reader: `v` and `f` lines only.
fn read_obj(text: &str) -> (Vec<f32>, Vec<[usize; 3]>) {
    let (mut v, mut f) = (Vec::new(), Vec::new());
    for line in text.lines() {
        let mut it = line.split_whitespace();
        match it.next() {
            Some("v") => v.extend(it.map(|x| x.parse::<f32>().unwrap())),
            Some("f") => {
                let idx: Vec<usize> = it.map(|x| x.parse::<usize>().unwrap() - 1).collect();
                f.push([idx[0], idx[1], idx[2]]);
            }
            _ => {}
        }
    }
    (v, f)
}

#[test]
fn obj_single_triangle() {
    let s = obj_string(&[0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0], &[[0, 1, 2]]).unwrap();
    assert_eq!(s.lines().filter(|l| l.starts_with("v ")).count(), 3);
    assert_eq!(s.lines().filter(|l| l.starts_with("f ")).count(), 1);
    assert!(s.contains("f 1 2 3"));
    assert!(obj_string(&[0.0; 9], &[[0, 1, 3]]).is_err());
}

#[test]
fn obj_sequence_round_trips() {
    let model = make_toy_model(24, 600, 10, 0).unwrap();
    let seq = &gen_synthetic_dataset(&model, 1, &SynthConfig::default(), Split::Train, 4).unwrap()[0];
    let meshes = seq.clothed_meshes(&model).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let files = export_obj_sequence(&meshes, &model.faces, dir.path()).unwrap();
    assert_eq!(files.len(), 30);
    assert!(files[29].ends_with("frame_0029.obj"));
    let frame = model.num_vertices() * 3;
    for (t, path) in files.iter().enumerate() {
        let (v, f) = read_obj(&std::fs::read_to_string(path).unwrap());
        assert_eq!(f, model.faces);
        for (a, b) in v.iter().zip(&meshes.data()[t * frame..(t + 1) * frame]) {
            assert!((a - b).abs() <= 5e-7 + 1e-6 * b.abs());
        }
    }
}
