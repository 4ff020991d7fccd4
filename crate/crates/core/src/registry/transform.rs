//! Observation transforms, built by name.

use crate::error::{Error, Result};
use crate::registry::domain::split_call;
use crate::types::{keys, Information};
use crate::value::{DType, Tensor, Tree, Value};

pub const TRANSFORMS: [&str; 3] = ["resize(<h>x<w>)", "to-float", "normalize(<lo>,<hi>)"];

#[derive(Clone, Debug, PartialEq)]
pub enum Transform {
    /// Nearest-neighbour resize of `(H,W)` and `(H,W,C)` tensors.
    Resize { height: usize, width: usize },
    /// Cast to f32, keeping values.
    ToFloat,
    /// Maps `[0, 255]` onto `[lo, hi]`, as f32.
    Normalize { lo: f32, hi: f32 },
}

fn unknown(name: &str) -> Error {
    Error::registry("transform", name, TRANSFORMS.iter().map(|s| s.to_string()))
}

pub fn build_transform(name: &str) -> Result<Transform> {
    let (head, args) = split_call(name.trim());
    match (head, args) {
        ("resize", Some(a)) => {
            let (h, w) = a.split_once('x').ok_or_else(|| unknown(name))?;
            let (height, width) = (h.trim().parse().map_err(|_| unknown(name))?, w.trim().parse().map_err(|_| unknown(name))?);
            if height == 0 || width == 0 {
                return Err(Error::Config(format!("`{name}` needs positive sizes")));
            }
            Ok(Transform::Resize { height, width })
        }
        ("to-float", None) => Ok(Transform::ToFloat),
        ("normalize", Some(a)) => {
            let (lo, hi) = a.split_once(',').ok_or_else(|| unknown(name))?;
            let lo: f32 = lo.trim().parse().map_err(|_| unknown(name))?;
            let hi: f32 = hi.trim().parse().map_err(|_| unknown(name))?;
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(Error::Config(format!("`{name}` needs finite lo <= hi")));
            }
            Ok(Transform::Normalize { lo, hi })
        }
        _ => Err(unknown(name)),
    }
}

/// Nearest-neighbour resize over the leading two axes.
pub fn resize_nearest(t: &Tensor, height: usize, width: usize) -> Result<Tensor> {
    let shape = t.shape();
    if !(shape.len() == 2 || shape.len() == 3) {
        return Err(Error::Tensor(format!("resize expects (H,W) or (H,W,C), got {shape:?}")));
    }
    let (h, w) = (shape[0], shape[1]);
    let c = shape.get(2).copied().unwrap_or(1);
    if h == 0 || w == 0 {
        return Err(Error::Tensor("cannot resize an empty image".into()));
    }
    let size = t.dtype().size();
    let src = t.to_le_bytes();
    let pixel = c * size;
    let mut out = Vec::with_capacity(height * width * pixel);
    for y in 0..height {
        let sy = y * h / height;
        for x in 0..width {
            let sx = x * w / width;
            let o = (sy * w + sx) * pixel;
            out.extend_from_slice(&src[o..o + pixel]);
        }
    }
    let mut new_shape = vec![height, width];
    new_shape.extend(shape.get(2));
    Tensor::from_le_bytes(t.dtype(), new_shape, &out)
}

impl Transform {
    pub fn apply_tensor(&self, t: &Tensor) -> Result<Tensor> {
        match *self {
            Transform::Resize { height, width } => resize_nearest(t, height, width),
            Transform::ToFloat => Ok(t.cast(DType::F32)),
            Transform::Normalize { lo, hi } => {
                let f = t.cast(DType::F32);
                let data = f.as_f32().expect("cast to f32").iter().map(|&x| lo + (hi - lo) * x / 255.0).collect();
                Tensor::from_f32(f.shape().to_vec(), data)
            }
        }
    }

    fn apply_tree(&self, tree: &Tree) -> Result<Tree> {
        tree.iter()
            .map(|(k, v)| {
                let v = match v {
                    Value::Tensor(t) => Value::Tensor(self.apply_tensor(t)?),
                    Value::Tree(sub) => Value::Tree(self.apply_tree(sub)?),
                    other => other.clone(),
                };
                Ok((k.to_string(), v))
            })
            .collect()
    }

    /// Applies the transform to every tensor under "observation".
    pub fn apply(&self, info: &Information) -> Result<Information> {
        let mut out = info.clone();
        if let Some(obs) = info.observation() {
            out.tree_mut().insert(keys::OBSERVATION, self.apply_tree(obs)?);
        }
        Ok(out)
    }
}
