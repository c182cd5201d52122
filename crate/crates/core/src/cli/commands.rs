use std::io::Write;
use std::path::{Path, PathBuf};

use crate::dataio::{
    export_obj_sequence, gen_synthetic_dataset, Dataset, Split, SynthConfig, SyntheticSequence, TensorArchive,
};
use crate::error::{Error, Result};
use crate::motion_model::{fit_motion_basis, MotionBasis};
use crate::objectives::{chamfer, mpjpe_family, pve, volumetric_iou, Mesh, MetricReport, PriorWeights};
use crate::pipeline::{
    build_checkpoint, complete_spatial, complete_temporal, frames_mpjpe, half_space_cull, predict_future,
    preset_model, preset_synth, random_mask, reconstruct, retarget, train, write_run_meta, Checkpoint, Completion,
    FitConfig, FitLoss, Reconstruction, TrainConfig, TrainItem,
};
use crate::tensorcore::{ParamSet, Tensor};

use super::{Command, Common, CompleteMode, SeqSource, Settings};

fn log(out: &mut dyn Write, line: String) -> Result<()> {
    writeln!(out, "{line}")?;
    Ok(())
}

fn settings(common: &Common, defaults: &[(&str, &str)]) -> Result<Settings> {
    let mut s = Settings::with_defaults(defaults);
    if let Some(path) = &common.config {
        s.apply_file(path)?;
    }
    for kv in &common.set {
        s.apply_assignment(kv)?;
    }
    Ok(s)
}

fn meta_path(out: &Path) -> PathBuf {
    if out.is_dir() {
        out.join("run.meta")
    } else {
        let mut name = out.as_os_str().to_owned();
        name.push(".run.meta");
        PathBuf::from(name)
    }
}

fn finish(out_path: &Path, command: &str, seed: Option<u64>, s: &Settings, args: &[(&str, String)], inputs: &[&Path]) -> Result<()> {
    let mut echo = s.echo();
    if let Some(seed) = seed {
        echo.insert(0, ("seed".into(), seed.to_string()));
    }
    echo.extend(args.iter().map(|(k, v)| (format!("arg.{k}"), v.clone())));
    write_run_meta(meta_path(out_path), command, &echo, inputs)
}

pub fn dispatch(cmd: &Command, out: &mut (dyn Write + Send)) -> Result<()> {
    match cmd {
        Command::GenData { seed, out: dir, common } => gen_data(*seed, dir, common, out),
        Command::FitLmm { data, q, out: path, common } => fit_lmm(data, *q, path, common, out),
        Command::Train { stage, data, basis, init, out: path, seed, common } => {
            train_cmd(*stage, data, basis.as_deref(), init.as_deref(), path, *seed, common, out)
        }
        Command::Reconstruct { ckpt, seq, out: path, seed, source, common } => {
            reconstruct_cmd(ckpt, seq, path, *seed, source, common, out)
        }
        Command::Retarget { ckpt, identity, motion, out: path, seed, source, common } => {
            retarget_cmd(ckpt, identity, motion, path, *seed, source, common, out)
        }
        Command::Complete { mode, ckpt, seq, out: path, seed, source, common } => {
            let name = match mode {
                CompleteMode::Temporal => "complete-temporal",
                CompleteMode::Spatial => "complete-spatial",
            };
            fitting_cmd(name, ckpt, seq, path, *seed, source, common, out)
        }
        Command::Predict { ckpt, seq, out: path, seed, source, common } => {
            fitting_cmd("predict", ckpt, seq, path, *seed, source, common, out)
        }
        Command::Eval { pred, gt, out: path, common } => eval_cmd(pred, gt, path.as_deref(), common, out),
        Command::ExportObj { input, out: dir, common } => export_obj(input, dir, common, out),
    }
}

fn gen_data(seed: u64, dir: &Path, common: &Common, out: &mut dyn Write) -> Result<()> {
    let s = settings(
        common,
        &[
            ("preset", "desk"),
            ("n_train", "200"),
            ("n_test", "40"),
            ("max_angle", "1.2"),
            ("max_yaw_drift", "0.4"),
            ("max_offset", "0.02"),
        ],
    )?;
    let preset = s.get_str("preset")?;
    let model = preset_model(preset, seed)?;
    let cfg = SynthConfig {
        max_angle: s.get("max_angle")?,
        max_yaw_drift: s.get("max_yaw_drift")?,
        max_offset: s.get("max_offset")?,
        ..preset_synth(preset)?
    };
    let train = gen_synthetic_dataset(&model, s.get("n_train")?, &cfg, Split::Train, seed)?;
    let test = gen_synthetic_dataset(&model, s.get("n_test")?, &cfg, Split::Test, seed)?;
    log(out, format!("event=gen-data preset={preset} joints={} verts={} train={} test={} seq_len={}", model.num_joints(), model.num_vertices(), train.len(), test.len(), cfg.seq_len))?;
    Dataset { model, train, test }.save(dir)?;
    finish(dir, "gen-data", Some(seed), &s, &[("out", dir.display().to_string())], &[])
}

fn fit_lmm(data: &Path, q: Option<f64>, path: &Path, common: &Common, out: &mut dyn Write) -> Result<()> {
    let mut s = settings(common, &[("q", "0.9"), ("whiten", "false")])?;
    if let Some(q) = q {
        s.set("q", &q.to_string())?;
    }
    let q: f64 = s.get("q")?;
    if !(q > 0.0 && q <= 1.0) {
        return Err(Error::Config(format!("q must lie in (0, 1], got {q}")));
    }
    let ds = Dataset::load(data)?;
    let poses: Vec<Tensor> = ds.train.iter().map(|s| s.poses.clone()).collect();
    let mut basis = fit_motion_basis(&poses, q)?;
    basis.whiten = s.get("whiten")?;
    log(
        out,
        format!(
            "event=fit-lmm sequences={} k_global={} k_body={} q_global={:.6} q_body={:.6}",
            poses.len(),
            basis.k_global(),
            basis.k_body(),
            basis.global.explained(),
            basis.body.explained()
        ),
    )?;
    let mut p = ParamSet::new();
    basis.store(&mut p);
    TensorArchive::from_params(&p).write(path)?;
    finish(path, "fit-lmm", None, &s, &[("data", data.display().to_string()), ("out", path.display().to_string())], &[data])
}

fn load_basis(path: &Path) -> Result<MotionBasis> {
    MotionBasis::load(&TensorArchive::read(path)?.to_params())
}

#[allow(clippy::too_many_arguments)]
fn train_cmd(stage: u8, data: &Path, basis: Option<&Path>, init: Option<&Path>, path: &Path, seed: u64, common: &Common, out: &mut dyn Write) -> Result<()> {
    let s = settings(
        common,
        &[
            ("preset", "desk"),
            ("lr", "preset"),
            ("lr_drop_at", "preset"),
            ("lr_after_drop", "preset"),
            ("batch_size", "preset"),
            ("iterations", "preset"),
            ("n_items", "all"),
            ("log_every", "100"),
        ],
    )?;
    let preset = s.get_str("preset")?;
    let mut cfg = TrainConfig::preset(preset, stage, seed)?;
    let pick = |key: &str| -> Option<&str> { s.get_str(key).ok().filter(|v| *v != "preset") };
    if let Some(v) = pick("lr") {
        cfg.lr = parse(key_val("lr", v))?;
        if cfg.lr_drop_at.is_none() {
            cfg.lr_after_drop = cfg.lr;
        }
    }
    if let Some(v) = pick("lr_drop_at") {
        cfg.lr_drop_at = if v == "none" { None } else { Some(parse(key_val("lr_drop_at", v))?) };
    }
    if let Some(v) = pick("lr_after_drop") {
        cfg.lr_after_drop = parse(key_val("lr_after_drop", v))?;
    }
    if let Some(v) = pick("batch_size") {
        cfg.batch_size = parse(key_val("batch_size", v))?;
    }
    if let Some(v) = pick("iterations") {
        cfg.iterations = parse(key_val("iterations", v))?;
    }
    let log_every: usize = s.get("log_every")?;
    let ds = Dataset::load(data)?;
    let mut ck = match (stage, basis, init) {
        (1, Some(b), None) => build_checkpoint(preset, ds.model.clone(), load_basis(b)?, seed)?,
        (2, None, Some(i)) => Checkpoint::load(i)?,
        (1, _, _) => return Err(Error::Config("stage 1 takes --basis and no --init".into())),
        _ => return Err(Error::Config("stage 2 takes --init and no --basis".into())),
    };
    if ck.model != ds.model {
        return Err(Error::Config("dataset body model differs from the checkpoint's".into()));
    }
    let n_items = match s.get_str("n_items")? {
        "all" => ds.train.len(),
        v => parse::<usize>(key_val("n_items", v))?.min(ds.train.len()),
    };
    let items = crate::pipeline::prepare_items(&ck.model, &ds.train[..n_items])?;
    let mut io_err = None;
    let report = train(&mut ck, &items, &cfg, |it, loss, lr| {
        if io_err.is_none() && (log_every > 0 && it % log_every == 0 || it + 1 == cfg.iterations) {
            if let Err(e) = writeln!(out, "event=train stage={stage} iter={it} loss={loss:.6e} lr={lr:e}") {
                io_err = Some(e);
            }
        }
    })?;
    if let Some(e) = io_err {
        return Err(e.into());
    }
    log(out, format!("event=train-done stage={stage} iterations={} final_loss={:.6e}", report.losses.len(), report.losses.last().copied().unwrap_or(f64::NAN)))?;
    ck.save(path)?;
    let mut inputs: Vec<&Path> = vec![data];
    inputs.extend(basis.iter().chain(init.iter()).copied());
    finish(path, "train", Some(seed), &s, &[("stage", stage.to_string()), ("out", path.display().to_string())], &inputs)
}

fn key_val<'a>(k: &'a str, v: &'a str) -> (&'a str, &'a str) {
    (k, v)
}

fn parse<T: std::str::FromStr>((k, v): (&str, &str)) -> Result<T> {
    v.parse().map_err(|_| Error::Config(format!("{k}={v:?} is not valid")))
}

/// A sequence named on the command line: dataset `split:index` or a points
/// archive with one `frameNNNN` entry per frame.
struct Source {
    points: Vec<Tensor>,
    truth: Option<SyntheticSequence>,
    input: PathBuf,
}

fn load_source(spec: &str, src: &SeqSource, ck: &Checkpoint, seed: u64) -> Result<Source> {
    if let Some((split, idx)) = spec.split_once(':') {
        let data = src.data.as_deref().ok_or_else(|| Error::Config(format!("--seq {spec} needs --data")))?;
        let ds = Dataset::load(data)?;
        if ds.model != ck.model {
            return Err(Error::Config("dataset body model differs from the checkpoint's".into()));
        }
        let seqs = match split {
            "train" => &ds.train,
            "test" => &ds.test,
            _ => return Err(Error::Config(format!("unknown split {split:?} (train, test)"))),
        };
        let i: usize = parse(("sequence index", idx))?;
        let seq = seqs.get(i).ok_or_else(|| Error::InvalidArgument(format!("{split} has {} sequences, no index {i}", seqs.len())))?.clone();
        let points = TrainItem::from_sequence(&ck.model, &seq)?.sample_points(ck.cfg.n_points, seed)?;
        Ok(Source { points, truth: Some(seq), input: data.to_path_buf() })
    } else {
        let path = PathBuf::from(spec);
        let a = TensorArchive::read(&path)?;
        let points = (0..ck.cfg.seq_len).map(|t| a.get(&format!("frame{t:04}")).cloned()).collect::<Result<_>>()?;
        Ok(Source { points, truth: None, input: path })
    }
}

fn faces_tensor(faces: &[[usize; 3]]) -> Tensor {
    Tensor::new(&[faces.len(), 3], faces.iter().flat_map(|f| f.iter().map(|&i| i as f32)).collect()).expect("rows of 3")
}

fn faces_from(t: &Tensor) -> Result<Vec<[usize; 3]>> {
    if t.rank() != 2 || t.dim(1) != 3 {
        return Err(Error::InvalidArgument(format!("faces shape {:?}", t.shape())));
    }
    Ok(t.data().chunks(3).map(|f| [f[0] as usize, f[1] as usize, f[2] as usize]).collect())
}

fn recon_archive(ck: &Checkpoint, r: &Reconstruction, mask: Option<&[bool]>) -> Result<TensorArchive> {
    let mut a = TensorArchive::new();
    a.push("clothed", r.clothed.clone())?;
    a.push("body", r.body.clone())?;
    a.push("offsets", r.offsets.clone())?;
    a.push("poses", r.poses.clone())?;
    a.push("poses_lmm", r.poses_lmm.clone())?;
    a.push("joints", r.joints.clone())?;
    a.push("faces", faces_tensor(&ck.model.faces))?;
    a.push("code.c_s", r.codes.c_s.clone())?;
    a.push("code.c_p", r.codes.c_p.clone())?;
    a.push("code.c_m", r.codes.c_m.clone())?;
    a.push("code.c_a", r.codes.c_a.clone())?;
    if let Some(m) = mask {
        a.push("mask", Tensor::vector(m.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect()))?;
    }
    Ok(a)
}

fn truth_archive(ck: &Checkpoint, s: &SyntheticSequence) -> Result<TensorArchive> {
    let mut a = TensorArchive::new();
    a.push("clothed", s.clothed_meshes(&ck.model)?)?;
    a.push("body", s.body_meshes(&ck.model)?)?;
    a.push("poses", s.poses.clone())?;
    a.push("joints", s.joints(&ck.model)?)?;
    a.push("faces", faces_tensor(&ck.model.faces))?;
    a.push("beta", s.beta.clone())?;
    Ok(a)
}

fn write_truth(src: &SeqSource, ck: &Checkpoint, truth: Option<&SyntheticSequence>) -> Result<()> {
    if let Some(path) = &src.truth {
        let s = truth.ok_or_else(|| Error::Config("--truth needs a dataset sequence".into()))?;
        truth_archive(ck, s)?.write(path)?;
    }
    Ok(())
}

fn reconstruct_cmd(ckpt: &Path, seq: &str, path: &Path, seed: u64, src: &SeqSource, common: &Common, out: &mut dyn Write) -> Result<()> {
    let s = settings(common, &[])?;
    let ck = Checkpoint::load(ckpt)?;
    let source = load_source(seq, src, &ck, seed)?;
    let r = reconstruct(&source.points, &ck)?;
    if let Some(t) = &source.truth {
        log(out, format!("event=reconstruct pve_mm={:.6}", pve(&r.clothed, &t.clothed_meshes(&ck.model)?)? * 1e3))?;
    }
    recon_archive(&ck, &r, None)?.write(path)?;
    write_truth(src, &ck, source.truth.as_ref())?;
    finish(path, "reconstruct", Some(seed), &s, &[("seq", seq.into())], &[ckpt, &source.input])
}

#[allow(clippy::too_many_arguments)]
fn retarget_cmd(ckpt: &Path, identity: &str, motion: &str, path: &Path, seed: u64, src: &SeqSource, common: &Common, out: &mut dyn Write) -> Result<()> {
    let s = settings(common, &[])?;
    let ck = Checkpoint::load(ckpt)?;
    let id = load_source(identity, src, &ck, seed)?;
    let mo = load_source(motion, src, &ck, seed.wrapping_add(1))?;
    let r = retarget(&id.points, &mo.points, &ck)?;
    if let (Some(ti), Some(tm)) = (&id.truth, &mo.truth) {
        let all = vec![true; ck.cfg.seq_len];
        let to_motion = frames_mpjpe(&r.joints, &tm.joints(&ck.model)?, &all)?.unwrap_or(f64::NAN);
        let to_identity = frames_mpjpe(&r.joints, &ti.joints(&ck.model)?, &all)?.unwrap_or(f64::NAN);
        log(out, format!("event=retarget mpjpe_to_motion_mm={:.6} mpjpe_to_identity_mm={:.6}", to_motion * 1e3, to_identity * 1e3))?;
    }
    recon_archive(&ck, &r, None)?.write(path)?;
    write_truth(src, &ck, mo.truth.as_ref())?;
    finish(path, "retarget", Some(seed), &s, &[("identity", identity.into()), ("motion", motion.into())], &[ckpt, &id.input, &mo.input])
}

fn fit_config(s: &Settings, seed: u64) -> Result<FitConfig> {
    Ok(FitConfig {
        lr: s.get("lr")?,
        iterations: s.get("iterations")?,
        n_sample: s.get("n_sample")?,
        loss: FitLoss::parse(s.get_str("loss")?)?,
        prior: PriorWeights { shape: s.get("prior.shape")?, motion: s.get("prior.motion")?, aux: s.get("prior.aux")? },
        frame_mask: None,
        seed,
        init_std: s.get("init_std")?,
        safeguard: s.get("safeguard")?,
    })
}

#[allow(clippy::too_many_arguments)]
fn fitting_cmd(name: &str, ckpt: &Path, seq: &str, path: &Path, seed: u64, src: &SeqSource, common: &Common, out: &mut dyn Write) -> Result<()> {
    let observed_default = if name == "predict" { "20" } else { "15" };
    let s = settings(
        common,
        &[
            ("lr", "0.03"),
            ("iterations", "500"),
            ("n_sample", "8192"),
            ("loss", "chamfer"),
            ("prior.shape", "0.01"),
            ("prior.motion", "0.001"),
            ("prior.aux", "0.001"),
            ("init_std", "0.01"),
            ("safeguard", "true"),
            ("observed", observed_default),
            ("phase", "0"),
        ],
    )?;
    let cfg = fit_config(&s, seed)?;
    let ck = Checkpoint::load(ckpt)?;
    let source = load_source(seq, src, &ck, seed)?;
    let l = ck.cfg.seq_len;
    let observed: usize = s.get("observed")?;
    let c: Completion = match name {
        "complete-temporal" => complete_temporal(&source.points, &random_mask(l, observed, seed), &cfg, &ck)?,
        "complete-spatial" => complete_spatial(&half_space_cull(&source.points, s.get("phase")?), &cfg, &ck)?,
        _ => predict_future(&source.points, observed.min(l), &cfg, &ck)?,
    };
    log(out, format!("event={name} iterations={} best_loss={:.6e} final_lr={:e} observed_frames={}", c.fit.losses.len(), c.fit.best_loss, c.fit.final_lr, c.mask.iter().filter(|&&m| m).count()))?;
    if let Some(t) = &source.truth {
        let gt = t.joints(&ck.model)?;
        let held: Vec<bool> = c.mask.iter().map(|&m| !m).collect();
        let fmt = |v: Option<f64>| v.map_or("none".to_string(), |x| format!("{:.6}", x * 1e3));
        log(
            out,
            format!(
                "event={name}-metrics mpjpe_observed_mm={} mpjpe_heldout_mm={} pve_mm={:.6}",
                fmt(frames_mpjpe(&c.recon.joints, &gt, &c.mask)?),
                fmt(frames_mpjpe(&c.recon.joints, &gt, &held)?),
                pve(&c.recon.clothed, &t.clothed_meshes(&ck.model)?)? * 1e3
            ),
        )?;
    }
    recon_archive(&ck, &c.recon, Some(&c.mask))?.write(path)?;
    write_truth(src, &ck, source.truth.as_ref())?;
    finish(path, name, Some(seed), &s, &[("seq", seq.into())], &[ckpt, &source.input])
}

fn frames(t: &Tensor, what: &str) -> Result<Vec<Tensor>> {
    if t.rank() != 3 || t.dim(2) != 3 {
        return Err(Error::InvalidArgument(format!("{what} has shape {:?}, expected [L,N,3]", t.shape())));
    }
    let n = t.dim(1) * 3;
    (0..t.dim(0)).map(|f| Tensor::new(&[t.dim(1), 3], t.data()[f * n..(f + 1) * n].to_vec())).collect()
}

fn eval_cmd(pred: &Path, gt: &Path, path: Option<&Path>, common: &Common, out: &mut dyn Write) -> Result<()> {
    let s = settings(common, &[("iou_resolution", "64"), ("fps", "none")])?;
    let (p, g) = (TensorArchive::read(pred)?, TensorArchive::read(gt)?);
    let (pc, gc) = (p.get("clothed")?, g.get("clothed")?);
    let joints = mpjpe_family(p.get("joints")?, g.get("joints")?)?;
    let fps = match s.get_str("fps")? {
        "none" => None,
        v => Some(parse::<f64>(("fps", v))?),
    };
    let mut report = MetricReport::from_joints(&joints, pve(pc, gc)?, fps);
    let faces = faces_from(g.get("faces")?)?;
    let (pf, gf) = (frames(pc, "pred clothed")?, frames(gc, "gt clothed")?);
    let res: usize = s.get("iou_resolution")?;
    let (mut cd, mut iou, mut tight) = (0.0, 0.0, true);
    for (a, b) in pf.iter().zip(&gf) {
        cd += chamfer(a, b)?;
        let r = volumetric_iou(&Mesh::new(a.clone(), faces.clone())?, &Mesh::new(b.clone(), faces.clone())?, res)?;
        iou += r.iou;
        tight &= r.watertight;
    }
    report.chamfer = Some(cd / pf.len() as f64);
    report.iou = Some(iou / pf.len() as f64);
    report.watertight = Some(tight);
    let kv = report.to_kv();
    write!(out, "{kv}")?;
    let inputs: [&Path; 2] = [pred, gt];
    match path {
        Some(path) => {
            std::fs::write(path, &kv)?;
            finish(path, "eval", None, &s, &[], &inputs)
        }
        None => finish(Path::new("eval"), "eval", None, &s, &[], &inputs),
    }
}

fn export_obj(input: &Path, dir: &Path, common: &Common, out: &mut dyn Write) -> Result<()> {
    let s = settings(common, &[("entry", "clothed")])?;
    let a = TensorArchive::read(input)?;
    let entry = s.get_str("entry")?;
    let files = export_obj_sequence(a.get(entry)?, &faces_from(a.get("faces")?)?, dir)?;
    log(out, format!("event=export-obj entry={entry} files={}", files.len()))?;
    finish(dir, "export-obj", None, &s, &[("input", input.display().to_string())], &[input])
}
