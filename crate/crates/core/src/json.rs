//! JSON encoding of [`Value`]s.
//!
//! Tensors are wrapped as `{"$tensor": {"dtype", "shape", "data"}}` so they can be
//! told apart from trees on the way back. Large tensors may be summarized by a
//! checksum instead of inlined; a summary decodes to a plain tree.

use serde_json::{json, Map, Number};

use crate::error::{Error, Result};
use crate::value::{DType, Tensor, TensorData, Tree, Value};

pub const TENSOR_TAG: &str = "$tensor";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TensorPolicy {
    Inline,
    /// Inline tensors with fewer than this many elements, checksum the rest.
    SummarizeFrom(usize),
}

pub fn checksum(t: &Tensor) -> String {
    format!("crc32:{:08x}", crc32fast::hash(&t.to_le_bytes()))
}

fn number(x: f64, path: &str) -> Result<serde_json::Value> {
    Number::from_f64(x).map(serde_json::Value::Number).ok_or_else(|| Error::Serialization {
        path: path.to_string(),
        reason: format!("non-finite number {x}"),
    })
}

fn join(path: &str, key: &str) -> String {
    if path.is_empty() {
        key.to_string()
    } else {
        format!("{path}.{key}")
    }
}

pub fn tensor_to_json(t: &Tensor, path: &str, policy: TensorPolicy) -> Result<serde_json::Value> {
    let mut body = Map::new();
    body.insert("dtype".into(), json!(t.dtype().as_str()));
    body.insert("shape".into(), json!(t.shape()));
    let inline = match policy {
        TensorPolicy::Inline => true,
        TensorPolicy::SummarizeFrom(limit) => t.len() < limit,
    };
    if inline {
        let data = match t.data() {
            TensorData::F32(v) => v.iter().map(|&x| number(x as f64, path)).collect::<Result<Vec<_>>>()?,
            TensorData::I64(v) => v.iter().map(|&x| json!(x)).collect(),
            TensorData::U8(v) => v.iter().map(|&x| json!(x)).collect(),
        };
        body.insert("data".into(), serde_json::Value::Array(data));
    } else {
        body.insert("checksum".into(), json!(checksum(t)));
    }
    Ok(json!({ TENSOR_TAG: body }))
}

pub fn to_json(value: &Value, path: &str, policy: TensorPolicy) -> Result<serde_json::Value> {
    Ok(match value {
        Value::Tensor(t) => tensor_to_json(t, path, policy)?,
        Value::Scalar(x) => number(*x, path)?,
        Value::Text(s) => json!(s),
        Value::Flag(b) => json!(b),
        Value::Tree(t) => tree_to_json(t, path, policy)?,
        Value::List(items) => serde_json::Value::Array(
            items
                .iter()
                .enumerate()
                .map(|(i, v)| to_json(v, &format!("{path}[{i}]"), policy))
                .collect::<Result<_>>()?,
        ),
        Value::Handle(_) => {
            return Err(Error::Serialization {
                path: path.to_string(),
                reason: "oracle handles are process-local".into(),
            })
        }
    })
}

pub fn tree_to_json(tree: &Tree, path: &str, policy: TensorPolicy) -> Result<serde_json::Value> {
    let mut map = Map::new();
    for (k, v) in tree.iter() {
        map.insert(k.to_string(), to_json(v, &join(path, k), policy)?);
    }
    Ok(serde_json::Value::Object(map))
}

fn tensor_from_json(body: &serde_json::Value) -> Result<Value> {
    let bad = |m: &str| Error::Serialization { path: TENSOR_TAG.into(), reason: m.to_string() };
    let dtype: DType = body["dtype"].as_str().ok_or_else(|| bad("missing dtype"))?.parse()?;
    let shape = body["shape"]
        .as_array()
        .ok_or_else(|| bad("missing shape"))?
        .iter()
        .map(|d| d.as_u64().map(|d| d as usize).ok_or_else(|| bad("bad dimension")))
        .collect::<Result<Vec<_>>>()?;
    let Some(data) = body.get("data").and_then(|d| d.as_array()) else {
        // Summary only: keep it as a descriptive tree.
        let mut t = Tree::new().with("dtype", dtype.as_str()).with(
            "shape",
            Value::List(shape.iter().map(|&d| Value::Scalar(d as f64)).collect()),
        );
        if let Some(c) = body["checksum"].as_str() {
            t.insert("checksum", c);
        }
        return Ok(Value::Tree(t));
    };
    let data = match dtype {
        DType::F32 => TensorData::F32(
            data.iter().map(|x| x.as_f64().map(|x| x as f32).ok_or_else(|| bad("bad f32"))).collect::<Result<_>>()?,
        ),
        DType::I64 => TensorData::I64(data.iter().map(|x| x.as_i64().ok_or_else(|| bad("bad i64"))).collect::<Result<_>>()?),
        DType::U8 => TensorData::U8(
            data.iter()
                .map(|x| x.as_u64().filter(|&x| x <= 255).map(|x| x as u8).ok_or_else(|| bad("bad u8")))
                .collect::<Result<_>>()?,
        ),
    };
    Ok(Value::Tensor(Tensor::new(shape, data)?))
}

pub fn from_json(json: &serde_json::Value) -> Result<Value> {
    Ok(match json {
        serde_json::Value::Null => {
            return Err(Error::Serialization { path: String::new(), reason: "null has no value equivalent".into() })
        }
        serde_json::Value::Bool(b) => Value::Flag(*b),
        serde_json::Value::Number(n) => Value::Scalar(n.as_f64().unwrap_or(f64::NAN)),
        serde_json::Value::String(s) => Value::Text(s.clone()),
        serde_json::Value::Array(items) => Value::List(items.iter().map(from_json).collect::<Result<_>>()?),
        serde_json::Value::Object(map) => {
            if map.len() == 1 {
                if let Some(body) = map.get(TENSOR_TAG) {
                    return tensor_from_json(body);
                }
            }
            let mut t = Tree::new();
            for (k, v) in map {
                if k.is_empty() {
                    return Err(Error::Serialization { path: String::new(), reason: "empty key".into() });
                }
                t.insert(k.clone(), from_json(v)?);
            }
            Value::Tree(t)
        }
    })
}

pub fn tree_from_json(json: &serde_json::Value) -> Result<Tree> {
    match from_json(json)? {
        Value::Tree(t) => Ok(t),
        _ => Err(Error::Serialization { path: String::new(), reason: "expected an object".into() }),
    }
}
