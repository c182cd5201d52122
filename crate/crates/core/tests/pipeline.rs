mod common;

use common::micro_setup;
use h4d::dataio::SyntheticSequence;
use h4d::pipeline::{
    autodecode_fit, complete_spatial, complete_temporal, content_hash, decode_codes, decode_graph, encode, frames_mpjpe,
    half_space_cull, item_loss, predict_future, prepare_items, random_codes, random_mask, reconstruct, retarget, train,
    write_run_meta, Bound, Checkpoint, CodeInputs, DecodeParts, DecodedVars, FitConfig, FitLoss, LatentTuple,
    Observations, TrainConfig,
};
use h4d::tensorcore::{Graph, Tensor};

fn points_of(ck: &Checkpoint, s: &SyntheticSequence, seed: u64) -> Vec<Tensor> {
    let items = prepare_items(&ck.model, std::slice::from_ref(s)).unwrap();
    items[0].sample_points(ck.cfg.n_points, seed).unwrap()
}

fn quick_fit(loss: FitLoss, iterations: usize) -> FitConfig {
    FitConfig { iterations, n_sample: 64, loss, seed: 5, ..FitConfig::default() }
}

#[test]
fn zero_heads_make_full_decoder_equal_linear_decoder() {
    let (ck, _) = micro_setup(4, 1);
    let codes = random_codes(&ck, 0.3, 9).unwrap();
    let mut g = Graph::new();
    let b = Bound::frozen(&mut g, &ck).unwrap();
    let inputs = CodeInputs::constants(&mut g, &codes);
    let lin = decode_graph(&mut g, &ck, &b, &inputs, DecodeParts::STAGE1).unwrap();
    let full = decode_graph(&mut g, &ck, &b, &inputs, DecodeParts::FULL).unwrap();
    let stack = |g: &mut Graph, v: &[h4d::tensorcore::Var]| {
        let s = DecodedVars::stack(g, v).unwrap();
        g.value(s).clone()
    };
    let (x_lin, x_body, x_cloth) = (stack(&mut g, &lin.linear), stack(&mut g, &full.body), stack(&mut g, &full.clothed));
    assert_eq!(g.value(full.poses), g.value(lin.poses_lmm));
    assert_eq!(x_body, x_lin);
    assert_eq!(x_cloth, x_lin);
    assert!(stack(&mut g, &full.offsets).data().iter().all(|&o| o == 0.0));
}

#[test]
fn self_retarget_equals_reconstruction() {
    let (mut ck, seqs) = micro_setup(4, 2);
    // Nonzero heads so both auxiliary codes matter.
    let names: Vec<String> = ck.params.names().filter(|n| n.starts_with("comp.")).cloned().collect();
    for name in names {
        let t = ck.params.get_mut(&name).unwrap();
        *t = common::random(t.shape(), 0.2, 3, &name);
    }
    let pts = points_of(&ck, &seqs[0], 4);
    let other = points_of(&ck, &seqs[1], 5);
    let rec = reconstruct(&pts, &ck).unwrap();
    assert_eq!(retarget(&pts, &pts, &ck).unwrap(), rec);
    let crossed = retarget(&other, &pts, &ck).unwrap();
    assert_ne!(crossed.clothed, rec.clothed);
    assert_eq!(crossed.codes.c_m, rec.codes.c_m);
}

#[test]
fn reconstruction_ignores_point_order() {
    let (ck, seqs) = micro_setup(3, 3);
    let pts = points_of(&ck, &seqs[0], 1);
    let reversed: Vec<Tensor> = pts
        .iter()
        .map(|p| {
            let rows: Vec<f32> = (0..p.dim(0)).rev().flat_map(|i| p.row(i).to_vec()).collect();
            Tensor::new(p.shape(), rows).unwrap()
        })
        .collect();
    assert_eq!(reconstruct(&reversed, &ck).unwrap(), reconstruct(&pts, &ck).unwrap());
    assert!(reconstruct(&pts[..2], &ck).is_err());
}

#[test]
fn zero_learning_rate_leaves_weights_unchanged() {
    let (ck, seqs) = micro_setup(3, 4);
    let items = prepare_items(&ck.model, &seqs).unwrap();
    let mut trained = ck.clone();
    let cfg = TrainConfig { lr: 0.0, lr_after_drop: 0.0, iterations: 3, ..TrainConfig::preset("micro", 1, 1).unwrap() };
    train(&mut trained, &items, &cfg, |_, _, _| {}).unwrap();
    assert_eq!(trained.params, ck.params);
    assert_eq!(trained.stage, 1);

    let mut fresh = ck.clone();
    let stage2 = TrainConfig { iterations: 1, ..TrainConfig::preset("micro", 2, 1).unwrap() };
    assert!(train(&mut fresh, &items, &stage2, |_, _, _| {}).is_err());
}

#[test]
fn training_is_deterministic_and_thread_independent() {
    let (ck, seqs) = micro_setup(4, 5);
    let items = prepare_items(&ck.model, &seqs).unwrap();
    let cfg = TrainConfig { iterations: 5, batch_size: 3, ..TrainConfig::preset("micro", 1, 8).unwrap() };
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| {
            let mut c = ck.clone();
            let r = train(&mut c, &items, &cfg, |_, _, _| {}).unwrap();
            (r.losses, c.params)
        })
    };
    let a = run(1);
    assert_eq!(a, run(1));
    assert_eq!(a, run(3));
}

#[test]
fn learning_rate_drops_at_configured_iteration() {
    let cfg = TrainConfig::preset("micro", 2, 0).unwrap();
    assert_eq!(cfg.lr_at(999), 3e-3);
    assert_eq!(cfg.lr_at(1000), 3e-4);
    let full = TrainConfig::preset("full", 2, 0).unwrap();
    assert_eq!((full.lr_at(199_999), full.lr_at(200_000), full.batch_size), (1e-4, 1e-5, 4));
    assert_eq!(TrainConfig::preset("full", 1, 0).unwrap().batch_size, 16);
    assert!(TrainConfig::preset("micro", 3, 0).is_err());

    let (mut ck, seqs) = micro_setup(2, 6);
    ck.stage = 1;
    let items = prepare_items(&ck.model, &seqs).unwrap();
    let short = TrainConfig { iterations: 4, lr_drop_at: Some(2), lr_after_drop: 1e-5, ..cfg };
    let r = train(&mut ck, &items, &short, |_, _, _| {}).unwrap();
    assert_eq!(r.lrs, vec![3e-3, 3e-3, 1e-5, 1e-5]);
    assert_eq!(ck.stage, 2);
}

#[test]
fn stage1_loss_halves_on_micro_set() {
    let (mut ck, seqs) = micro_setup(8, 7);
    let items = prepare_items(&ck.model, &seqs).unwrap();
    let cfg = TrainConfig { iterations: 500, ..TrainConfig::preset("micro", 1, 3).unwrap() };
    let r = train(&mut ck, &items, &cfg, |_, _, _| {}).unwrap();
    let epoch_mean = |from: usize| r.losses[from..from + 20].iter().sum::<f64>() / 20.0;
    let (early, late) = (epoch_mean(10), epoch_mean(480));
    assert!(late <= 0.5 * early, "stage-1 loss {early} -> {late}");
}

#[test]
fn stage2_loss_at_init_matches_linear_terms() {
    let (ck, seqs) = micro_setup(3, 8);
    let items = prepare_items(&ck.model, &seqs).unwrap();
    let pts = items[0].sample_points(ck.cfg.n_points, 1).unwrap();
    let (l2, _) = item_loss(&ck, &items[0], &pts, 2, false).unwrap();
    let (l1, _) = item_loss(&ck, &items[0], &pts, 1, false).unwrap();
    // At init X_motion = X_linear, so stage 2 adds only λ_r3·L1(0, Y_offset).
    let offsets = h4d::objectives::vertex_l1(&Tensor::zeros(items[0].offsets.shape()), &items[0].offsets).unwrap();
    let expect = l1 + 30.0 * offsets;
    assert!((l2 - expect).abs() <= 1e-6 * l2.abs(), "{l2} vs {expect}");
}

#[test]
fn zero_iteration_fit_returns_seeded_init() {
    let (ck, seqs) = micro_setup(3, 9);
    let obs = Observations::Points(points_of(&ck, &seqs[0], 2));
    let r = autodecode_fit(&obs, &quick_fit(FitLoss::Chamfer, 0), &ck).unwrap();
    assert_eq!(r.codes, random_codes(&ck, 0.01, 5).unwrap());
    assert!(r.losses.is_empty());
    let again = autodecode_fit(&obs, &quick_fit(FitLoss::Chamfer, 0), &ck).unwrap();
    assert_eq!(again.codes, r.codes);
}

#[test]
fn safeguarded_fit_loss_never_increases() {
    let (ck, seqs) = micro_setup(3, 10);
    let obs = Observations::Points(points_of(&ck, &seqs[0], 3));
    let cfg = FitConfig { lr: 0.3, ..quick_fit(FitLoss::Chamfer, 60) };
    let r = autodecode_fit(&obs, &cfg, &ck).unwrap();
    assert_eq!(r.losses.len(), 60);
    assert!(r.losses.windows(2).all(|w| w[1] <= w[0]));
    assert!(r.losses[59] < r.losses[0]);
    assert_eq!(r.best_loss, r.losses[59]);
    assert_eq!(r, autodecode_fit(&obs, &cfg, &ck).unwrap());
}

#[test]
fn masked_frames_do_not_influence_the_fit() {
    let (ck, seqs) = micro_setup(3, 11);
    let mut pts = points_of(&ck, &seqs[0], 3);
    let mask = vec![true, false, true];
    let cfg = FitConfig { frame_mask: Some(mask.clone()), ..quick_fit(FitLoss::Chamfer, 10) };
    let a = autodecode_fit(&Observations::Points(pts.clone()), &cfg, &ck).unwrap();
    pts[1] = pts[1].scale(5.0);
    let b = autodecode_fit(&Observations::Points(pts.clone()), &cfg, &ck).unwrap();
    assert_eq!(a, b);
    pts[1] = Tensor::zeros(&[0, 3]);
    assert_eq!(complete_temporal(&pts, &mask, &quick_fit(FitLoss::Chamfer, 10), &ck).unwrap().fit, a);

    let none = FitConfig { frame_mask: Some(vec![false; 3]), ..cfg.clone() };
    assert!(autodecode_fit(&Observations::Points(pts.clone()), &none, &ck).is_err());
    let long = FitConfig { frame_mask: Some(vec![true; 4]), ..cfg.clone() };
    assert!(autodecode_fit(&Observations::Points(pts.clone()), &long, &ck).is_err());
    let wrong = FitConfig { loss: FitLoss::VertexL1, ..cfg };
    assert!(autodecode_fit(&Observations::Points(pts), &wrong, &ck).is_err());
}

#[test]
fn vertex_fit_recovers_micro_meshes() {
    let (ck, _) = micro_setup(4, 12);
    let truth = LatentTuple { c_a: Tensor::zeros(&[ck.cfg.aux_dims]), ..random_codes(&ck, 0.2, 77).unwrap() };
    let target = decode_codes(&ck, &truth, None).unwrap();
    let cfg = FitConfig { lr: 3e-2, ..quick_fit(FitLoss::VertexL1, 300) };
    let r = autodecode_fit(&Observations::Vertices(target.clothed.clone()), &cfg, &ck).unwrap();
    let fit = decode_codes(&ck, &r.codes, None).unwrap();
    let init = decode_codes(&ck, &random_codes(&ck, 0.01, 5).unwrap(), None).unwrap();
    let (e_fit, e_init) = (
        h4d::objectives::pve(&fit.clothed, &target.clothed).unwrap(),
        h4d::objectives::pve(&init.clothed, &target.clothed).unwrap(),
    );
    let ys: Vec<f32> = ck.model.template.data().iter().skip(1).step_by(3).copied().collect();
    let height = ys.iter().cloned().fold(f32::MIN, f32::max) - ys.iter().cloned().fold(f32::MAX, f32::min);
    assert!(e_fit < 0.05 * height as f64 && e_fit < 0.5 * e_init, "pve {e_fit} vs init {e_init}, height {height}");

    let kp = autodecode_fit(&Observations::Joints(target.joints.clone()), &quick_fit(FitLoss::Keypoint, 100), &ck).unwrap();
    let kp_joints = decode_codes(&ck, &kp.codes, None).unwrap().joints;
    let all = vec![true; 3];
    let e_kp = frames_mpjpe(&kp_joints, &target.joints, &all).unwrap().unwrap();
    let e_kp0 = frames_mpjpe(&init.joints, &target.joints, &all).unwrap().unwrap();
    assert!(e_kp < 0.5 * e_kp0, "keypoint mpjpe {e_kp} vs init {e_kp0}");
}

#[test]
fn completion_and_prediction_reduce_to_full_fitting() {
    let (ck, seqs) = micro_setup(3, 13);
    let pts = points_of(&ck, &seqs[0], 6);
    let cfg = quick_fit(FitLoss::Chamfer, 8);
    let full = complete_temporal(&pts, &[true; 3], &cfg, &ck).unwrap();
    assert_eq!(predict_future(&pts, 3, &cfg, &ck).unwrap(), full);
    assert!(predict_future(&pts, 0, &cfg, &ck).is_err());
    let prefix = predict_future(&pts, 2, &cfg, &ck).unwrap();
    assert_eq!(prefix.mask, vec![true, true, false]);

    let p2s = FitConfig { loss: FitLoss::PointToSurface, ..cfg.clone() };
    assert_eq!(complete_spatial(&pts, &cfg, &ck).unwrap(), complete_temporal(&pts, &[true; 3], &p2s, &ck).unwrap());
    let mut partial = half_space_cull(&pts, 0.3);
    partial[2] = Tensor::zeros(&[0, 3]);
    let c = complete_spatial(&partial, &cfg, &ck).unwrap();
    assert_eq!(c.mask, vec![true, true, false]);
    assert_eq!(c.recon.clothed.shape(), &[3, ck.cfg.verts, 3]);
}

#[test]
fn half_space_cull_keeps_the_camera_side() {
    let pts = common::random(&[400, 3], 1.0, 1, "cloud");
    let frames = vec![pts.clone(), pts.clone(), pts.clone(), pts.clone()];
    let culled = half_space_cull(&frames, 0.0);
    let centroid: Vec<f64> = (0..3).map(|k| (0..400).map(|i| pts.row(i)[k] as f64).sum::<f64>() / 400.0).collect();
    for (t, c) in culled.iter().enumerate() {
        let a = std::f64::consts::FRAC_PI_2 * t as f64;
        let dir = [a.cos(), 0.0, a.sin()];
        let expected = (0..400)
            .filter(|&i| (0..3).map(|k| (pts.row(i)[k] as f64 - centroid[k]) * dir[k]).sum::<f64>() >= -1e-6)
            .count();
        assert!(c.dim(0).abs_diff(expected) <= 1, "frame {t}: {} vs {expected}", c.dim(0));
        assert!(c.dim(0) > 120 && c.dim(0) < 280);
    }
    assert_eq!(half_space_cull(&[Tensor::zeros(&[0, 3])], 0.0)[0].dim(0), 0);
}

#[test]
fn random_mask_has_requested_count() {
    let m = random_mask(30, 15, 4);
    assert_eq!(m.iter().filter(|&&b| b).count(), 15);
    assert_eq!(m, random_mask(30, 15, 4));
    assert_ne!(m, random_mask(30, 15, 5));
}

#[test]
fn checkpoint_round_trips_through_archive() {
    let (mut ck, seqs) = micro_setup(3, 14);
    ck.stage = 2;
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ck.hta");
    ck.save(&path).unwrap();
    let back = Checkpoint::load(&path).unwrap();
    assert_eq!(back, ck);
    let pts = points_of(&ck, &seqs[0], 1);
    assert_eq!(encode(&pts, &back).unwrap(), encode(&pts, &ck).unwrap());
}

#[test]
fn run_meta_hashes_inputs_git_style() {
    assert_eq!(content_hash(b""), "473a0f4c3be8a93681a267e3b1e9a7dcda1185436fe141f7749120a303721813");
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in.txt");
    std::fs::write(&input, b"abc").unwrap();
    let meta = dir.path().join("run.meta");
    write_run_meta(&meta, "eval", &[("seed".into(), "3".into())], &[input.as_path()]).unwrap();
    let text = std::fs::read_to_string(meta).unwrap();
    assert!(text.contains("command=eval\n"));
    assert!(text.contains("config.seed=3\n"));
    assert!(text.contains(&format!("={}\n", content_hash(b"abc"))));
}
