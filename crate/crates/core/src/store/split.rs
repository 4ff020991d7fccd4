//! Trajectory-level train/val/eval partitions.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::hash_words;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub train: f64,
    pub val: f64,
    pub eval: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        SplitRatios { train: 0.8, val: 0.1, eval: 0.1 }
    }
}

impl SplitRatios {
    pub fn new(train: f64, val: f64, eval: f64) -> Result<Self> {
        let r = SplitRatios { train, val, eval };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<()> {
        let parts = [self.train, self.val, self.eval];
        if parts.iter().any(|r| !r.is_finite() || *r < 0.0) {
            return Err(Error::Config(format!("split ratios {parts:?} must be finite and non-negative")));
        }
        let sum: f64 = parts.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("split ratios {parts:?} sum to {sum}, not 1")));
        }
        Ok(())
    }

    fn as_array(&self) -> [f64; 3] {
        [self.train, self.val, self.eval]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Eval,
    All,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Eval => "eval",
            Split::All => "all",
        })
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "eval" => Ok(Split::Eval),
            "all" => Ok(Split::All),
            other => Err(Error::Usage(format!("unknown split `{other}` (train, val, eval, all)"))),
        }
    }
}

/// Partition sizes: floor of `ratio * n`, then the remaining units go to the
/// largest fractional parts (ties to the earlier partition).
pub fn split_sizes(n: usize, ratios: &SplitRatios) -> [usize; 3] {
    let exact = ratios.as_array().map(|r| r * n as f64);
    let mut sizes = exact.map(|x| x.floor() as usize);
    let assigned: usize = sizes.iter().sum();
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| (exact[b] - exact[b].floor()).total_cmp(&(exact[a] - exact[a].floor())).then(a.cmp(&b)));
    for &i in order.iter().cycle().take(n.saturating_sub(assigned)) {
        sizes[i] += 1;
    }
    sizes
}

/// Train, val and eval index lists (each ascending). Indices are ordered by
/// a seeded hash and dealt out by [`split_sizes`].
pub fn assign(n: usize, ratios: &SplitRatios, seed: u64) -> [Vec<usize>; 3] {
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&i| (hash_words(&[seed, i as u64]), i));
    let [a, b, _] = split_sizes(n, ratios);
    let mut parts = [order[..a].to_vec(), order[a..a + b].to_vec(), order[a + b..].to_vec()];
    for p in &mut parts {
        p.sort_unstable();
    }
    parts
}
