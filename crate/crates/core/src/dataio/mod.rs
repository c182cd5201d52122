//! On-disk formats, the synthetic corpus and mesh export.

mod archive;
mod model_io;
mod obj;
mod synthetic;

use std::path::Path;

pub use archive::{read_archive, write_archive, TensorArchive, MAGIC};
pub use model_io::{load_body_model, store_body_model};
pub use obj::{export_obj_sequence, obj_string};
pub use synthetic::{
    gen_synthetic_dataset, posed_joints, slice_subsequences, MotionFamily, Split, SynthConfig, SyntheticSequence,
};

use crate::body_model::BodyModel;
use crate::error::{Error, Result};
use crate::tensorcore::{ParamSet, Tensor};

pub const MANIFEST: &str = "manifest.txt";

/// Stores sequences as `seqNNNN.{family,beta,poses,offsets}` entries.
pub fn sequences_to_archive(seqs: &[SyntheticSequence]) -> Result<TensorArchive> {
    let mut a = TensorArchive::new();
    for (i, s) in seqs.iter().enumerate() {
        a.push(format!("seq{i:04}.family"), Tensor::scalar(s.family.index() as f32))?;
        a.push(format!("seq{i:04}.beta"), s.beta.clone())?;
        a.push(format!("seq{i:04}.poses"), s.poses.clone())?;
        a.push(format!("seq{i:04}.offsets"), s.offsets.clone())?;
    }
    Ok(a)
}

pub fn sequences_from_archive(a: &TensorArchive) -> Result<Vec<SyntheticSequence>> {
    let mut out = Vec::new();
    for i in 0.. {
        let key = format!("seq{i:04}.family");
        if a.get(&key).is_err() {
            break;
        }
        let fam = a.get(&key)?.item();
        if fam < 0.0 || fam.fract() != 0.0 {
            return Err(Error::InvalidArgument(format!("{key}: {fam} is not a family index")));
        }
        out.push(SyntheticSequence {
            family: MotionFamily::from_index(fam as usize)?,
            beta: a.get(&format!("seq{i:04}.beta"))?.clone(),
            poses: a.get(&format!("seq{i:04}.poses"))?.clone(),
            offsets: a.get(&format!("seq{i:04}.offsets"))?.clone(),
        });
    }
    Ok(out)
}

pub fn model_to_archive(model: &BodyModel) -> TensorArchive {
    let mut p = ParamSet::default();
    store_body_model(model, &mut p, "");
    TensorArchive::from_params(&p)
}

pub fn model_from_archive(a: &TensorArchive) -> Result<BodyModel> {
    load_body_model(&a.to_params(), "")
}

/// Line-delimited `name=path` pairs.
pub fn write_manifest(path: impl AsRef<Path>, items: &[(&str, &str)]) -> Result<()> {
    let mut s = String::new();
    for (k, v) in items {
        if k.contains('=') || k.contains('\n') || v.contains('\n') {
            return Err(Error::InvalidArgument(format!("manifest entry {k:?}={v:?}")));
        }
        s.push_str(&format!("{k}={v}\n"));
    }
    std::fs::write(path, s)?;
    Ok(())
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<Vec<(String, String)>> {
    let text = std::fs::read_to_string(path)?;
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| {
            l.split_once('=')
                .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
                .ok_or_else(|| Error::Config(format!("manifest line without '=': {l}")))
        })
        .collect()
}

/// A dataset directory: `model.hta`, `train.hta`, `test.hta` and a manifest.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub model: BodyModel,
    pub train: Vec<SyntheticSequence>,
    pub test: Vec<SyntheticSequence>,
}

impl Dataset {
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        model_to_archive(&self.model).write(dir.join("model.hta"))?;
        sequences_to_archive(&self.train)?.write(dir.join("train.hta"))?;
        sequences_to_archive(&self.test)?.write(dir.join("test.hta"))?;
        write_manifest(dir.join(MANIFEST), &[("model", "model.hta"), ("train", "train.hta"), ("test", "test.hta")])
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let manifest = read_manifest(dir.join(MANIFEST))?;
        let find = |k: &str| {
            manifest
                .iter()
                .find(|(n, _)| n == k)
                .map(|(_, p)| dir.join(p))
                .ok_or_else(|| Error::MissingEntry(format!("manifest key {k}")))
        };
        Ok(Self {
            model: model_from_archive(&TensorArchive::read(find("model")?)?)?,
            train: sequences_from_archive(&TensorArchive::read(find("train")?)?)?,
            test: sequences_from_archive(&TensorArchive::read(find("test")?)?)?,
        })
    }
}
