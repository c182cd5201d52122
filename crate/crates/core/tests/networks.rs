mod common;

use common::random;
use h4d::body_model::make_toy_model;
use h4d::networks::{
    encode_sequence, init_weights, motion_comp, param_count, shape_comp, spatial_encode, temporal_encode, NetConfig,
};
use h4d::tensorcore::gradcheck::{finite_difference, max_relative_error, piecewise_check};
use h4d::tensorcore::{BoundParams, Graph, ParamSet, Tensor, Var};

fn micro() -> NetConfig {
    let model = make_toy_model(4, 24, 10, 0).unwrap();
    NetConfig::micro(5, &model.parents)
}

fn permute_rows(t: &Tensor, seed: u64) -> Tensor {
    let n = t.dim(0);
    let keys = random(&[n], 1.0, seed, "perm");
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| keys.data()[a].total_cmp(&keys.data()[b]));
    Tensor::new(t.shape(), idx.iter().flat_map(|&i| t.row(i).to_vec()).collect()).unwrap()
}

fn spatial_eval(params: &ParamSet, prefix: &str, pts: &Tensor) -> Tensor {
    let mut g = Graph::new();
    let p = BoundParams::bind(&mut g, params, false);
    let x = g.constant(pts.clone());
    let out = spatial_encode(&mut g, &p, prefix, x).unwrap();
    g.value(out).clone()
}

fn codes_eval(params: &ParamSet, cfg: &NetConfig, frames: &[Tensor]) -> (Tensor, Tensor) {
    let mut g = Graph::new();
    let p = BoundParams::bind(&mut g, params, false);
    let vars: Vec<Var> = frames.iter().map(|f| g.constant(f.clone())).collect();
    let (m, a) = temporal_encode(&mut g, &p, cfg, &vars).unwrap();
    (g.value(m).clone(), g.value(a).clone())
}

#[test]
fn spatial_encoder_is_symmetric_in_points() {
    let cfg = micro();
    let params = init_weights(&cfg, 3).unwrap();
    let pts = random(&[64, 3], 1.0, 1, "pts");
    let base = spatial_eval(&params, "enc.pose", &pts);
    assert_eq!(base.shape(), &[12]);
    assert_eq!(spatial_eval(&params, "enc.pose", &permute_rows(&pts, 2)), base);
    let mut doubled = pts.data().to_vec();
    doubled.extend_from_slice(pts.data());
    assert_eq!(spatial_eval(&params, "enc.pose", &Tensor::new(&[128, 3], doubled).unwrap()), base);
    assert_eq!(spatial_eval(&params, "enc.shape", &pts).shape(), &[10]);

    let mut g = Graph::new();
    let p = BoundParams::bind(&mut g, &params, false);
    let empty = g.constant(Tensor::zeros(&[0, 3]));
    assert!(spatial_encode(&mut g, &p, "enc.shape", empty).is_err());
}

fn probe_loss(params: &ParamSet, name: &str, pts: &Tensor, probe: &Tensor) -> (f64, Tensor) {
    let mut g = Graph::new();
    let p = BoundParams::bind_with(&mut g, params, |n| n == name);
    let x = g.constant(pts.clone());
    let out = spatial_encode(&mut g, &p, "enc.pose", x).unwrap();
    let w = g.constant(probe.clone());
    let prod = g.mul(out, w).unwrap();
    let loss = g.sum(prod);
    let grads = g.backward(loss).unwrap();
    (g.value(loss).item() as f64, grads.wrt(p.get(name).unwrap()))
}

#[test]
fn spatial_encoder_gradients_match_finite_differences() {
    let cfg = micro();
    let params = init_weights(&cfg, 5).unwrap();
    let pts = random(&[16, 3], 1.0, 4, "pts");
    let probe = random(&[12], 1.0, 9, "probe");
    for name in ["enc.pose.fc_pos.w", "enc.pose.block2.fc0.w", "enc.pose.block3.fc1.w", "enc.pose.fc_out.b"] {
        let analytic = probe_loss(&params, name, &pts, &probe).1;
        let check = piecewise_check(
            &analytic,
            |w| {
                let mut q = params.clone();
                q.insert(name, w.clone());
                probe_loss(&q, name, &pts, &probe).0
            },
            params.get(name).unwrap(),
            1e-2,
            1e-3,
            5e-2,
        );
        assert!(check.max_rel_err < 1e-2 && check.smooth_fraction() >= 0.9, "{name}: {check:?}");
    }
}

#[test]
fn temporal_encoder_symmetries() {
    let cfg = micro();
    let params = init_weights(&cfg, 7).unwrap();
    let frames: Vec<Tensor> = (0..3).map(|t| random(&[16, 3], 1.0, t, "frame")).collect();
    let (m, a) = codes_eval(&params, &cfg, &frames);
    assert_eq!(m.shape(), &[5]);
    assert_eq!(a.shape(), &[8]);
    let shuffled: Vec<Tensor> = frames.iter().enumerate().map(|(i, f)| permute_rows(f, 10 + i as u64)).collect();
    assert_eq!(codes_eval(&params, &cfg, &shuffled), (m.clone(), a.clone()));
    let reversed: Vec<Tensor> = frames.iter().rev().cloned().collect();
    let (mr, ar) = codes_eval(&params, &cfg, &reversed);
    assert!(mr != m && ar != a);
    let (m1, a1) = codes_eval(&params, &cfg, &frames[..1]);
    assert!(m1.is_finite() && a1.is_finite());
    // Clouds of different sizes per frame are allowed.
    let ragged = vec![random(&[5, 3], 1.0, 1, "r"), random(&[9, 3], 1.0, 2, "r")];
    assert!(codes_eval(&params, &cfg, &ragged).0.is_finite());
}

#[test]
fn resampling_moves_codes_boundedly() {
    let model = make_toy_model(4, 24, 10, 0).unwrap();
    let cfg = NetConfig::micro(5, &model.parents);
    let params = init_weights(&cfg, 2).unwrap();
    let mesh = h4d::objectives::Mesh::new(model.template.clone(), model.faces.clone()).unwrap();
    let sample = |seed: u64| -> Vec<Tensor> {
        (0..3).map(|t| h4d::objectives::sample_surface(&mesh, 16, seed * 10 + t as u64).unwrap()).collect()
    };
    let (m0, _) = codes_eval(&params, &cfg, &sample(1));
    let (m1, _) = codes_eval(&params, &cfg, &sample(2));
    // Reference perturbation: a small jitter of a fixed sampling.
    let jittered: Vec<Tensor> = sample(1)
        .iter()
        .enumerate()
        .map(|(i, f)| f.zip_map(&random(f.shape(), 0.01, i as u64, "jit"), |a, b| a + b).unwrap())
        .collect();
    let (mj, _) = codes_eval(&params, &cfg, &jittered);
    let d = |a: &Tensor, b: &Tensor| a.zip_map(b, |x, y| x - y).unwrap().max_abs();
    assert!(d(&m0, &m1) < 10.0 * d(&m0, &mj).max(1e-3), "{} vs {}", d(&m0, &m1), d(&m0, &mj));
}

#[test]
fn compensation_networks_are_identity_at_init() {
    let cfg = micro();
    let params = init_weights(&cfg, 1).unwrap();
    let mut g = Graph::new();
    let p = BoundParams::bind(&mut g, &params, false);
    let poses = g.constant(random(&[3, 12], 0.5, 1, "poses"));
    let c_m = g.constant(random(&[5], 1.0, 2, "cm"));
    let c_a = g.constant(random(&[8], 1.0, 3, "ca"));
    let out = motion_comp(&mut g, &p, &cfg, poses, c_m, c_a).unwrap();
    assert_eq!(g.value(out), g.value(poses));
    let offs = shape_comp(&mut g, &p, &cfg, c_a, out).unwrap();
    assert_eq!(offs.len(), 3);
    for o in offs {
        assert_eq!(g.value(o), &Tensor::zeros(&[24, 3]));
    }
    let bad = g.constant(Tensor::zeros(&[3, 11]));
    assert!(motion_comp(&mut g, &p, &cfg, bad, c_m, c_a).is_err());
}

fn randomize_heads(params: &mut ParamSet) {
    for (i, name) in ["comp.motion.head.w", "comp.motion.head.b", "comp.shape.dec1.w", "comp.shape.dec1.b"].iter().enumerate() {
        let shape = params.get(name).unwrap().shape().to_vec();
        params.insert(*name, random(&shape, 0.5, 40 + i as u64, "head"));
    }
}

#[test]
fn compensation_gradients_wrt_aux_code() {
    let cfg = micro();
    let mut params = init_weights(&cfg, 4).unwrap();
    randomize_heads(&mut params);
    let poses = random(&[3, 12], 0.5, 1, "poses");
    let c_m = random(&[5], 1.0, 2, "cm");
    let c_a0 = random(&[8], 1.0, 3, "ca");
    let probe = random(&[3, 12], 1.0, 5, "probe");

    let motion = |c_a: &Tensor| -> (f64, Tensor) {
        let mut g = Graph::new();
        let p = BoundParams::bind(&mut g, &params, false);
        let (x, m, a) = (g.constant(poses.clone()), g.constant(c_m.clone()), g.leaf(c_a.clone()));
        let out = motion_comp(&mut g, &p, &cfg, x, m, a).unwrap();
        let w = g.constant(probe.clone());
        let prod = g.mul(out, w).unwrap();
        let loss = g.sum(prod);
        (g.value(loss).item() as f64, g.backward(loss).unwrap().wrt(a))
    };
    let num = finite_difference(|c| motion(c).0, &c_a0, 1e-3);
    let err = max_relative_error(&motion(&c_a0).1, &num, 1e-2);
    assert!(err < 1e-2, "motion_comp: {err}");

    let offsets = |c_a: &Tensor| -> (f64, Tensor) {
        let mut g = Graph::new();
        let p = BoundParams::bind(&mut g, &params, false);
        let (x, a) = (g.constant(poses.clone()), g.leaf(c_a.clone()));
        let offs = shape_comp(&mut g, &p, &cfg, a, x).unwrap();
        let all = g.concat_rows(&offs).unwrap();
        let loss = g.mean(all).unwrap();
        (g.value(loss).item() as f64, g.backward(loss).unwrap().wrt(a))
    };
    let num = finite_difference(|c| offsets(c).0, &c_a0, 1e-3);
    let err = max_relative_error(&offsets(&c_a0).1, &num, 1e-2);
    assert!(err < 1e-2, "shape_comp: {err}");
}

/// Independent tally of the architecture's parameter shapes.
fn expected_count(cfg: &NetConfig) -> usize {
    let dense = |i: usize, o: usize| i * o + o;
    let gru = |i: usize, h: usize, layers: usize| (0..layers).map(|l| 3 * h * (if l == 0 { i } else { h } + h + 2)).sum::<usize>();
    let spatial = |out: usize| {
        let w = cfg.spatial_widths;
        let mut n = dense(3, w[0]);
        for i in 0..5 {
            let d_in = if i == 0 { w[0] } else { 2 * w[i - 1] };
            n += dense(d_in, w[i]) + dense(w[i], w[i]) + if d_in != w[i] { d_in * w[i] } else { 0 };
        }
        n + dense(w[4], out)
    };
    let (h, p) = (cfg.gru_hidden, cfg.pose_dims());
    let feat = dense(3, cfg.feat_hidden) + (cfg.feat_layers - 1) * dense(cfg.feat_hidden, cfg.feat_hidden);
    let masked = cfg.joint_mask.iter().filter(|&&m| m).count();
    spatial(cfg.shape_dims)
        + spatial(p)
        + feat
        + 2 * gru(cfg.feat_hidden, h, cfg.gru_layers)
        + dense(h, cfg.motion_dims)
        + dense(h, cfg.aux_dims)
        + gru(p + cfg.motion_dims + cfg.aux_dims, h, cfg.gru_layers)
        + dense(h, p)
        + gru(cfg.aux_dims + 9 * masked, h, cfg.gru_layers)
        + dense(h, cfg.shape_latent)
        + cfg.verts * cfg.vertex_embed
        + dense(cfg.shape_latent + cfg.vertex_embed, cfg.decoder_hidden)
        + dense(cfg.decoder_hidden, 3)
}

#[test]
fn initialization_is_deterministic_with_stable_size() {
    let cfg = micro();
    let a = init_weights(&cfg, 11).unwrap();
    assert_eq!(a, init_weights(&cfg, 11).unwrap());
    assert_ne!(a, init_weights(&cfg, 12).unwrap());
    assert_eq!(param_count(&a), expected_count(&cfg));
    assert_eq!(param_count(&a), 8402);

    let model = make_toy_model(24, 600, 10, 0).unwrap();
    let desk = NetConfig::desk(40, &model.parents);
    assert_eq!(param_count(&init_weights(&desk, 0).unwrap()), expected_count(&desk));
    let full = NetConfig::full(90, &model.parents);
    assert_eq!(expected_count(&full), 12_740_247);
}

#[test]
fn config_round_trips_through_params() {
    let model = make_toy_model(24, 600, 10, 0).unwrap();
    let cfg = NetConfig::desk(33, &model.parents);
    let mut p = ParamSet::new();
    cfg.store(&mut p);
    assert_eq!(NetConfig::load(&p).unwrap(), cfg);
    assert_eq!(cfg.joint_mask.iter().filter(|&&m| !m).count(), 5);
    assert!(NetConfig::preset("huge", 3, &model.parents).is_err());
}

#[test]
fn full_sequence_encoding_has_expected_dims() {
    let cfg = micro();
    let params = init_weights(&cfg, 0).unwrap();
    let frames: Vec<Tensor> = (0..3).map(|t| random(&[16, 3], 1.0, t, "f")).collect();
    let mut g = Graph::new();
    let p = BoundParams::bind(&mut g, &params, false);
    let c = encode_sequence(&mut g, &p, &cfg, &frames).unwrap();
    assert_eq!(g.shape(c.c_s), &[10]);
    assert_eq!(g.shape(c.c_p), &[12]);
    assert_eq!(g.shape(c.c_m), &[5]);
    assert_eq!(g.shape(c.c_a), &[8]);
}



