//! Action-space descriptors with uniform sampling and membership tests.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use rand::{Rng as _, RngCore};

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::types::Action;
use crate::value::{DType, Tensor, Tree, Value};

#[derive(Clone, Debug, PartialEq)]
pub enum ActionSpace {
    /// Element-wise bounded f32 box; `low` and `high` share a shape.
    Box { low: Tensor, high: Tensor },
    /// Integers in `[0, n)`.
    Discrete(u64),
    Composite(BTreeMap<String, ActionSpace>),
}

impl ActionSpace {
    pub fn bounded(low: Tensor, high: Tensor) -> Result<Self> {
        let space = ActionSpace::Box { low, high };
        space.validate()?;
        Ok(space)
    }

    /// A box of the given shape with identical bounds on every element.
    pub fn uniform_box(shape: Vec<usize>, low: f32, high: f32) -> Result<Self> {
        let n = shape.iter().product();
        ActionSpace::bounded(
            Tensor::from_f32(shape.clone(), vec![low; n])?,
            Tensor::from_f32(shape, vec![high; n])?,
        )
    }

    pub fn discrete(n: u64) -> Result<Self> {
        let space = ActionSpace::Discrete(n);
        space.validate()?;
        Ok(space)
    }

    pub fn composite(children: impl IntoIterator<Item = (String, ActionSpace)>) -> Result<Self> {
        let space = ActionSpace::Composite(children.into_iter().collect());
        space.validate()?;
        Ok(space)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ActionSpace::Box { low, high } => {
                let (Some(lo), Some(hi)) = (low.as_f32(), high.as_f32()) else {
                    return Err(Error::Usage("box bounds must be f32 tensors".into()));
                };
                if low.shape() != high.shape() {
                    return Err(Error::Usage(format!(
                        "box bounds disagree on shape: {:?} vs {:?}",
                        low.shape(),
                        high.shape()
                    )));
                }
                if lo.iter().zip(hi).any(|(l, h)| !matches!(l.partial_cmp(h), Some(Ordering::Less | Ordering::Equal))) {
                    return Err(Error::Usage("box requires low <= high element-wise".into()));
                }
                Ok(())
            }
            ActionSpace::Discrete(0) => Err(Error::Usage("discrete space needs n > 0".into())),
            ActionSpace::Discrete(_) => Ok(()),
            ActionSpace::Composite(children) => {
                if children.is_empty() {
                    return Err(Error::Usage("composite space must be non-empty".into()));
                }
                children.values().try_for_each(ActionSpace::validate)
            }
        }
    }

    /// Draws uniformly: box elements in `[low, high]`, discrete in `[0, n)`.
    pub fn sample(&self, rng: &mut Rng) -> Value {
        match self {
            ActionSpace::Box { low, high } => {
                let lo = low.as_f32().unwrap_or_default();
                let hi = high.as_f32().unwrap_or_default();
                let data = lo
                    .iter()
                    .zip(hi)
                    .map(|(&l, &h)| {
                        let u: f32 = rng.random();
                        (l + (h - l) * u).clamp(l, h)
                    })
                    .collect();
                Value::Tensor(Tensor::from_f32(low.shape().to_vec(), data).expect("bounds share a shape"))
            }
            ActionSpace::Discrete(n) => Value::Tensor(Tensor::scalar_i64((rng.next_u64() % n) as i64)),
            ActionSpace::Composite(children) => {
                Value::Tree(children.iter().map(|(k, s)| (k.clone(), s.sample(rng))).collect())
            }
        }
    }

    /// Samples an [`Action`]; only composites of boxes and discretes qualify.
    pub fn sample_action(&self, rng: &mut Rng) -> Result<Action> {
        match self {
            ActionSpace::Composite(children) if children.values().all(|c| !matches!(c, ActionSpace::Composite(_))) => {
                Action::from_value(&self.sample(rng))
            }
            _ => Err(Error::Usage("only a flat composite space maps onto an action".into())),
        }
    }

    pub fn contains(&self, value: &Value) -> bool {
        match (self, value) {
            (ActionSpace::Box { low, high }, Value::Tensor(t)) => {
                let (Some(lo), Some(hi), Some(v)) = (low.as_f32(), high.as_f32(), t.as_f32()) else {
                    return false;
                };
                t.shape() == low.shape()
                    && v.iter().zip(lo.iter().zip(hi)).all(|(x, (l, h))| x.is_finite() && l <= x && x <= h)
            }
            (ActionSpace::Discrete(n), Value::Tensor(t)) => {
                t.len() == 1 && t.as_i64().is_some_and(|v| v[0] >= 0 && (v[0] as u64) < *n)
            }
            (ActionSpace::Discrete(n), Value::Scalar(x)) => {
                x.fract() == 0.0 && *x >= 0.0 && *x < *n as f64
            }
            (ActionSpace::Composite(children), Value::Tree(tree)) => {
                tree.len() == children.len()
                    && children.iter().all(|(k, s)| tree.get(k).is_some_and(|v| s.contains(v)))
            }
            _ => false,
        }
    }

    pub fn contains_action(&self, action: &Action) -> bool {
        self.contains(&action.to_value())
    }

    /// Serializable descriptor, carried in reset information.
    pub fn to_value(&self) -> Value {
        let tree = match self {
            ActionSpace::Box { low, high } => Tree::new()
                .with("kind", "box")
                .with("low", low.clone())
                .with("high", high.clone()),
            ActionSpace::Discrete(n) => Tree::new().with("kind", "discrete").with("n", *n as f64),
            ActionSpace::Composite(children) => Tree::new().with("kind", "composite").with(
                "spaces",
                children.iter().map(|(k, s)| (k.clone(), s.to_value())).collect::<Tree>(),
            ),
        };
        Value::Tree(tree)
    }

    pub fn from_value(value: &Value) -> Result<Self> {
        let bad = || Error::Usage("malformed action-space descriptor".into());
        let tree = value.as_tree().ok_or_else(bad)?;
        let space = match tree.get_text("kind").ok_or_else(bad)? {
            "box" => ActionSpace::Box {
                low: tree.get_tensor("low").ok_or_else(bad)?.clone(),
                high: tree.get_tensor("high").ok_or_else(bad)?.clone(),
            },
            "discrete" => ActionSpace::Discrete(tree.get_scalar("n").ok_or_else(bad)? as u64),
            "composite" => ActionSpace::Composite(
                tree.get_tree("spaces")
                    .ok_or_else(bad)?
                    .iter()
                    .map(|(k, v)| Ok((k.to_string(), ActionSpace::from_value(v)?)))
                    .collect::<Result<_>>()?,
            ),
            _ => return Err(bad()),
        };
        space.validate()?;
        Ok(space)
    }

    /// Shape of a box space.
    pub fn box_shape(&self) -> Option<&[usize]> {
        match self {
            ActionSpace::Box { low, .. } => Some(low.shape()),
            _ => None,
        }
    }

    pub fn child(&self, key: &str) -> Option<&ActionSpace> {
        match self {
            ActionSpace::Composite(c) => c.get(key),
            _ => None,
        }
    }
}

/// The value a discrete sample carries.
pub fn discrete_index(value: &Value) -> Option<u64> {
    match value {
        Value::Tensor(t) if t.dtype() == DType::I64 && t.len() == 1 => t.as_i64().map(|v| v[0] as u64),
        Value::Scalar(x) if x.fract() == 0.0 && *x >= 0.0 => Some(*x as u64),
        _ => None,
    }
}
