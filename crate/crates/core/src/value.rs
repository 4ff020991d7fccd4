//! The value model shared by arenas, agents, loggers and the trajectory store.
//!
//! Everything that crosses a component boundary is a [`Value`]: dense tensors,
//! scalars, text, flags, nested [`Tree`]s and lists. An [`OracleHandle`] is the
//! one process-local variant; it carries a read-only snapshot of an arena's
//! true state for oracle agents and is never serialized.

use std::any::Any;
use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DType {
    F32,
    I64,
    U8,
}

impl DType {
    pub fn size(self) -> usize {
        match self {
            DType::F32 => 4,
            DType::I64 => 8,
            DType::U8 => 1,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            DType::F32 => "f32",
            DType::I64 => "i64",
            DType::U8 => "u8",
        }
    }
}

impl fmt::Display for DType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for DType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "f32" => Ok(DType::F32),
            "i64" => Ok(DType::I64),
            "u8" => Ok(DType::U8),
            other => Err(Error::Tensor(format!("unknown dtype `{other}` (expected f32, i64 or u8)"))),
        }
    }
}

/// Flat row-major element buffer.
#[derive(Clone, Debug)]
pub enum TensorData {
    F32(Vec<f32>),
    I64(Vec<i64>),
    U8(Vec<u8>),
}

impl TensorData {
    pub fn dtype(&self) -> DType {
        match self {
            TensorData::F32(_) => DType::F32,
            TensorData::I64(_) => DType::I64,
            TensorData::U8(_) => DType::U8,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            TensorData::F32(v) => v.len(),
            TensorData::I64(v) => v.len(),
            TensorData::U8(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

// Equality is bitwise: NaN payloads compare equal to themselves, 0.0 and -0.0 differ.
impl PartialEq for TensorData {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (TensorData::F32(a), TensorData::F32(b)) => {
                a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
            }
            (TensorData::I64(a), TensorData::I64(b)) => a == b,
            (TensorData::U8(a), TensorData::U8(b)) => a == b,
            _ => false,
        }
    }
}

/// A dense tensor with an explicit dtype and shape.
///
/// The element count always equals the product of the shape; a scalar tensor has
/// an empty shape and exactly one element.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: TensorData,
}

pub fn element_count(shape: &[usize]) -> usize {
    shape.iter().product()
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: TensorData) -> Result<Self> {
        let expected = element_count(&shape);
        if data.len() != expected {
            return Err(Error::Tensor(format!(
                "shape {shape:?} needs {expected} elements, buffer has {}",
                data.len()
            )));
        }
        Ok(Tensor { shape, data })
    }

    pub fn from_f32(shape: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        Tensor::new(shape, TensorData::F32(data))
    }

    pub fn from_i64(shape: Vec<usize>, data: Vec<i64>) -> Result<Self> {
        Tensor::new(shape, TensorData::I64(data))
    }

    pub fn from_u8(shape: Vec<usize>, data: Vec<u8>) -> Result<Self> {
        Tensor::new(shape, TensorData::U8(data))
    }

    pub fn scalar_f32(v: f32) -> Self {
        Tensor { shape: vec![], data: TensorData::F32(vec![v]) }
    }

    pub fn scalar_i64(v: i64) -> Self {
        Tensor { shape: vec![], data: TensorData::I64(vec![v]) }
    }

    pub fn vector_f32(values: &[f32]) -> Self {
        Tensor { shape: vec![values.len()], data: TensorData::F32(values.to_vec()) }
    }

    pub fn zeros(dtype: DType, shape: Vec<usize>) -> Self {
        let n = element_count(&shape);
        let data = match dtype {
            DType::F32 => TensorData::F32(vec![0.0; n]),
            DType::I64 => TensorData::I64(vec![0; n]),
            DType::U8 => TensorData::U8(vec![0; n]),
        };
        Tensor { shape, data }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn dtype(&self) -> DType {
        self.data.dtype()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &TensorData {
        &self.data
    }

    pub fn as_f32(&self) -> Option<&[f32]> {
        match &self.data {
            TensorData::F32(v) => Some(v),
            _ => None,
        }
    }

    pub fn as_i64(&self) -> Option<&[i64]> {
        match &self.data {
            TensorData::I64(v) => Some(v),
            _ => None,
        }
    }

    pub fn as_u8(&self) -> Option<&[u8]> {
        match &self.data {
            TensorData::U8(v) => Some(v),
            _ => None,
        }
    }

    /// Element `i` widened to f64, whatever the dtype.
    pub fn get_f64(&self, i: usize) -> Option<f64> {
        match &self.data {
            TensorData::F32(v) => v.get(i).map(|&x| x as f64),
            TensorData::I64(v) => v.get(i).map(|&x| x as f64),
            TensorData::U8(v) => v.get(i).map(|&x| x as f64),
        }
    }

    pub fn iter_f64(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.len()).map(|i| self.get_f64(i).unwrap_or_default())
    }

    pub fn is_finite(&self) -> bool {
        match &self.data {
            TensorData::F32(v) => v.iter().all(|x| x.is_finite()),
            _ => true,
        }
    }

    pub fn reshape(&self, shape: Vec<usize>) -> Result<Tensor> {
        if element_count(&shape) != self.len() {
            return Err(Error::Tensor(format!(
                "cannot reshape {:?} ({} elements) into {shape:?}",
                self.shape,
                self.len()
            )));
        }
        Ok(Tensor { shape, data: self.data.clone() })
    }

    /// Element-wise conversion; floats are rounded and saturated when narrowing.
    pub fn cast(&self, dtype: DType) -> Tensor {
        if dtype == self.dtype() {
            return self.clone();
        }
        let data = match dtype {
            DType::F32 => TensorData::F32(self.iter_f64().map(|x| x as f32).collect()),
            DType::I64 => TensorData::I64(self.iter_f64().map(|x| x.round() as i64).collect()),
            DType::U8 => TensorData::U8(self.iter_f64().map(|x| x.round().clamp(0.0, 255.0) as u8).collect()),
        };
        Tensor { shape: self.shape.clone(), data }
    }

    pub fn to_le_bytes(&self) -> Vec<u8> {
        match &self.data {
            TensorData::F32(v) => v.iter().flat_map(|x| x.to_le_bytes()).collect(),
            TensorData::I64(v) => v.iter().flat_map(|x| x.to_le_bytes()).collect(),
            TensorData::U8(v) => v.clone(),
        }
    }

    pub fn from_le_bytes(dtype: DType, shape: Vec<usize>, bytes: &[u8]) -> Result<Tensor> {
        let n = element_count(&shape);
        if bytes.len() != n * dtype.size() {
            return Err(Error::Tensor(format!(
                "{} bytes cannot hold {n} {dtype} elements",
                bytes.len()
            )));
        }
        let data = match dtype {
            DType::F32 => TensorData::F32(
                bytes.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect(),
            ),
            DType::I64 => TensorData::I64(
                bytes.chunks_exact(8).map(|c| i64::from_le_bytes(c.try_into().unwrap())).collect(),
            ),
            DType::U8 => TensorData::U8(bytes.to_vec()),
        };
        Tensor::new(shape, data)
    }

    /// Stacks equally shaped tensors along a new leading axis.
    ///
    /// `item_shape` and `dtype` fix the result for an empty input.
    pub fn stack(items: &[Tensor], dtype: DType, item_shape: &[usize]) -> Result<Tensor> {
        let mut shape = vec![items.len()];
        shape.extend_from_slice(item_shape);
        let mut bytes = Vec::with_capacity(element_count(&shape) * dtype.size());
        for (i, t) in items.iter().enumerate() {
            if t.dtype() != dtype || t.shape() != item_shape {
                return Err(Error::Tensor(format!(
                    "item {i} is {} {:?}, expected {dtype} {item_shape:?}",
                    t.dtype(),
                    t.shape()
                )));
            }
            bytes.extend(t.to_le_bytes());
        }
        Tensor::from_le_bytes(dtype, shape, &bytes)
    }

    /// Rows `start..start + len` of the leading axis.
    pub fn slice_rows(&self, start: usize, len: usize) -> Result<Tensor> {
        let rows = *self.shape.first().ok_or_else(|| Error::Tensor("cannot slice a scalar".into()))?;
        if start + len > rows {
            return Err(Error::Tensor(format!("rows {start}..{} exceed {rows}", start + len)));
        }
        let row = element_count(&self.shape[1..]);
        let (a, b) = (start * row, (start + len) * row);
        let data = match &self.data {
            TensorData::F32(v) => TensorData::F32(v[a..b].to_vec()),
            TensorData::I64(v) => TensorData::I64(v[a..b].to_vec()),
            TensorData::U8(v) => TensorData::U8(v[a..b].to_vec()),
        };
        let mut shape = self.shape.clone();
        shape[0] = len;
        Tensor::new(shape, data)
    }

    /// Concatenates along the leading axis.
    pub fn concat_rows(parts: &[Tensor]) -> Result<Tensor> {
        let first = parts.first().ok_or_else(|| Error::Tensor("nothing to concatenate".into()))?;
        let tail = first.shape().get(1..).unwrap_or_default().to_vec();
        let mut rows = 0;
        let mut bytes = Vec::new();
        for p in parts {
            if p.dtype() != first.dtype() || p.shape().len() != tail.len() + 1 || p.shape()[1..] != tail[..] {
                return Err(Error::Tensor("mismatched parts in concatenation".into()));
            }
            rows += p.shape()[0];
            bytes.extend(p.to_le_bytes());
        }
        let mut shape = vec![rows];
        shape.extend(tail);
        Tensor::from_le_bytes(first.dtype(), shape, &bytes)
    }
}

/// Read-only arena state that oracle agents may inspect.
pub trait OracleState: Any + Send + Sync + fmt::Debug {
    fn as_any(&self) -> &dyn Any;
    fn state_eq(&self, other: &dyn OracleState) -> bool;
}

impl<T: Any + Send + Sync + fmt::Debug + PartialEq> OracleState for T {
    fn as_any(&self) -> &dyn Any {
        self
    }

    fn state_eq(&self, other: &dyn OracleState) -> bool {
        other.as_any().downcast_ref::<T>().is_some_and(|o| o == self)
    }
}

/// Opaque, process-local reference to an arena state snapshot.
#[derive(Clone)]
pub struct OracleHandle(Arc<dyn OracleState>);

impl OracleHandle {
    pub fn new<T: OracleState>(state: T) -> Self {
        OracleHandle(Arc::new(state))
    }

    pub fn downcast_ref<T: 'static>(&self) -> Option<&T> {
        self.0.as_any().downcast_ref::<T>()
    }
}

impl fmt::Debug for OracleHandle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "OracleHandle({:?})", self.0)
    }
}

impl PartialEq for OracleHandle {
    fn eq(&self, other: &Self) -> bool {
        self.0.state_eq(other.0.as_ref())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Value {
    Tensor(Tensor),
    Scalar(f64),
    Text(String),
    Flag(bool),
    Tree(Tree),
    List(Vec<Value>),
    Handle(OracleHandle),
}

impl Value {
    pub fn as_tensor(&self) -> Option<&Tensor> {
        match self {
            Value::Tensor(t) => Some(t),
            _ => None,
        }
    }

    pub fn as_scalar(&self) -> Option<f64> {
        match self {
            Value::Scalar(x) => Some(*x),
            _ => None,
        }
    }

    pub fn as_text(&self) -> Option<&str> {
        match self {
            Value::Text(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_flag(&self) -> Option<bool> {
        match self {
            Value::Flag(b) => Some(*b),
            _ => None,
        }
    }

    pub fn as_tree(&self) -> Option<&Tree> {
        match self {
            Value::Tree(t) => Some(t),
            _ => None,
        }
    }

    pub fn as_list(&self) -> Option<&[Value]> {
        match self {
            Value::List(l) => Some(l),
            _ => None,
        }
    }

    pub fn as_handle(&self) -> Option<&OracleHandle> {
        match self {
            Value::Handle(h) => Some(h),
            _ => None,
        }
    }
}

impl From<Tensor> for Value {
    fn from(t: Tensor) -> Self {
        Value::Tensor(t)
    }
}

impl From<f64> for Value {
    fn from(x: f64) -> Self {
        Value::Scalar(x)
    }
}

impl From<bool> for Value {
    fn from(b: bool) -> Self {
        Value::Flag(b)
    }
}

impl From<&str> for Value {
    fn from(s: &str) -> Self {
        Value::Text(s.to_string())
    }
}

impl From<String> for Value {
    fn from(s: String) -> Self {
        Value::Text(s)
    }
}

impl From<Tree> for Value {
    fn from(t: Tree) -> Self {
        Value::Tree(t)
    }
}

impl From<Vec<Value>> for Value {
    fn from(l: Vec<Value>) -> Self {
        Value::List(l)
    }
}

impl From<OracleHandle> for Value {
    fn from(h: OracleHandle) -> Self {
        Value::Handle(h)
    }
}

/// String-keyed map of values. Keys are non-empty.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Tree(BTreeMap<String, Value>);

impl Tree {
    pub fn new() -> Self {
        Tree::default()
    }

    /// Inserts `value` under `key`, returning the previous value.
    ///
    /// Panics on an empty key.
    pub fn insert(&mut self, key: impl Into<String>, value: impl Into<Value>) -> Option<Value> {
        let key = key.into();
        assert!(!key.is_empty(), "tree keys must be non-empty");
        self.0.insert(key, value.into())
    }

    pub fn with(mut self, key: impl Into<String>, value: impl Into<Value>) -> Self {
        self.insert(key, value);
        self
    }

    pub fn get(&self, key: &str) -> Option<&Value> {
        self.0.get(key)
    }

    pub fn get_mut(&mut self, key: &str) -> Option<&mut Value> {
        self.0.get_mut(key)
    }

    pub fn remove(&mut self, key: &str) -> Option<Value> {
        self.0.remove(key)
    }

    pub fn contains_key(&self, key: &str) -> bool {
        self.0.contains_key(key)
    }

    /// Nested lookup; absent when any segment is missing or not a tree.
    pub fn get_path<S: AsRef<str>>(&self, path: &[S]) -> Option<&Value> {
        let (last, parents) = path.split_last()?;
        let mut node = self;
        for seg in parents {
            node = node.get(seg.as_ref())?.as_tree()?;
        }
        node.get(last.as_ref())
    }

    pub fn get_tree(&self, key: &str) -> Option<&Tree> {
        self.get(key).and_then(Value::as_tree)
    }

    pub fn get_tensor(&self, key: &str) -> Option<&Tensor> {
        self.get(key).and_then(Value::as_tensor)
    }

    pub fn get_scalar(&self, key: &str) -> Option<f64> {
        self.get(key).and_then(Value::as_scalar)
    }

    pub fn get_flag(&self, key: &str) -> Option<bool> {
        self.get(key).and_then(Value::as_flag)
    }

    pub fn get_text(&self, key: &str) -> Option<&str> {
        self.get(key).and_then(Value::as_text)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.0.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Value)> {
        self.0.iter().map(|(k, v)| (k.as_str(), v))
    }

    /// A tree of scalars from a metric map.
    pub fn from_scalars<'a>(map: impl IntoIterator<Item = (&'a String, &'a f64)>) -> Tree {
        let mut t = Tree::new();
        for (k, v) in map {
            t.insert(k.clone(), *v);
        }
        t
    }
}

impl FromIterator<(String, Value)> for Tree {
    fn from_iter<I: IntoIterator<Item = (String, Value)>>(iter: I) -> Self {
        let mut t = Tree::new();
        for (k, v) in iter {
            t.insert(k, v);
        }
        t
    }
}

/// Looks up a nested path in `root`.
pub fn value_get<'a, S: AsRef<str>>(root: &'a Tree, path: &[S]) -> Option<&'a Value> {
    root.get_path(path)
}
