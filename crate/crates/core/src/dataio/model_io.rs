use crate::body_model::BodyModel;
use crate::error::{dim_err, Error, Result};
use crate::tensorcore::{ParamSet, Tensor};

/// Body model entries under `prefix` (e.g. `""` or `"model."`). Integer
/// fields are stored as exactly representable floats; the root parent is −1.
pub fn store_body_model(model: &BodyModel, params: &mut ParamSet, prefix: &str) {
    params.insert(format!("{prefix}template"), model.template.clone());
    params.insert(format!("{prefix}shape_basis"), model.shape_basis.clone());
    params.insert(format!("{prefix}joint_regressor"), model.joint_regressor.clone());
    params.insert(format!("{prefix}skin_weights"), model.skin_weights.clone());
    params.insert(
        format!("{prefix}parents"),
        Tensor::vector(model.parents.iter().map(|p| p.map_or(-1.0, |i| i as f32)).collect()),
    );
    let faces: Vec<f32> = model.faces.iter().flat_map(|f| f.iter().map(|&i| i as f32)).collect();
    params.insert(
        format!("{prefix}faces"),
        Tensor::new(&[model.faces.len(), 3], faces).expect("F×3"),
    );
}

fn as_index(v: f32, what: &str) -> Result<usize> {
    if v < 0.0 || v.fract() != 0.0 || v > 16_777_216.0 {
        return Err(Error::InvalidArgument(format!("{what}: {v} is not an index")));
    }
    Ok(v as usize)
}

pub fn load_body_model(params: &ParamSet, prefix: &str) -> Result<BodyModel> {
    let get = |n: &str| params.get(&format!("{prefix}{n}")).cloned();
    let parents = get("parents")?
        .data()
        .iter()
        .map(|&p| if p == -1.0 { Ok(None) } else { as_index(p, "parents").map(Some) })
        .collect::<Result<Vec<_>>>()?;
    let faces_t = get("faces")?;
    if faces_t.len() % 3 != 0 {
        return dim_err("load_body_model", format!("faces {:?}", faces_t.shape()));
    }
    let faces = faces_t
        .data()
        .chunks(3)
        .map(|c| Ok([as_index(c[0], "faces")?, as_index(c[1], "faces")?, as_index(c[2], "faces")?]))
        .collect::<Result<Vec<_>>>()?;
    let model = BodyModel {
        template: get("template")?,
        shape_basis: get("shape_basis")?,
        joint_regressor: get("joint_regressor")?,
        skin_weights: get("skin_weights")?,
        parents,
        faces,
    };
    model.validate()?;
    Ok(model)
}
