use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{dim_err, Error, Result};
use crate::tensorcore::Tensor;

/// One Wavefront OBJ document: `v` lines (6 decimals) then 1-based `f` lines.
pub fn obj_string(vertices: &[f32], faces: &[[usize; 3]]) -> Result<String> {
    if vertices.len() % 3 != 0 {
        return dim_err("obj_string", format!("{} coordinates", vertices.len()));
    }
    let nv = vertices.len() / 3;
    let mut s = String::with_capacity(vertices.len() * 12 + faces.len() * 16);
    for v in vertices.chunks(3) {
        writeln!(s, "v {:.6} {:.6} {:.6}", v[0], v[1], v[2]).expect("string write");
    }
    for f in faces {
        if f.iter().any(|&i| i >= nv) {
            return Err(Error::InvalidArgument(format!("face {f:?} references a vertex beyond {nv}")));
        }
        writeln!(s, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1).expect("string write");
    }
    Ok(s)
}

/// Writes `frame_0000.obj`, `frame_0001.obj`, … for meshes `[L,V,3]`.
pub fn export_obj_sequence(meshes: &Tensor, faces: &[[usize; 3]], dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    if meshes.rank() != 3 || meshes.dim(2) != 3 {
        return dim_err("export_obj_sequence", format!("meshes {:?}", meshes.shape()));
    }
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let frame = meshes.dim(1) * 3;
    (0..meshes.dim(0))
        .map(|t| {
            let path = dir.join(format!("frame_{t:04}.obj"));
            std::fs::write(&path, obj_string(&meshes.data()[t * frame..(t + 1) * frame], faces)?)?;
            Ok(path)
        })
        .collect()
}
