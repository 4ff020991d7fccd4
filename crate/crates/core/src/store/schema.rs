use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::store::chunk::Compression;
use crate::store::split::SplitRatios;
use crate::value::DType;

pub const FORMAT_VERSION: u32 = 1;

/// One stored array: its saved name, per-step shape, dtype and the key it is
/// returned under.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchemaEntry {
    pub saved_key: String,
    pub shape: Vec<usize>,
    pub dtype: DType,
    pub output_key: String,
}

impl SchemaEntry {
    pub fn new(saved_key: impl Into<String>, shape: Vec<usize>, dtype: DType) -> Result<Self> {
        let saved_key = saved_key.into();
        check_key(&saved_key)?;
        Ok(SchemaEntry { output_key: saved_key.clone(), saved_key, shape, dtype })
    }

    pub fn with_output_key(mut self, key: impl Into<String>) -> Result<Self> {
        let key = key.into();
        if key.is_empty() {
            return Err(Error::Schema("empty output key".into()));
        }
        self.output_key = key;
        Ok(self)
    }

    /// Parses `key:HxWxC:dtype` with an optional `->output_key` suffix.
    /// A scalar per-step shape is written as `-`.
    pub fn parse(s: &str) -> Result<Self> {
        let bad = |why: &str| Error::Schema(format!("`{s}`: {why} (expected key:DIMS:dtype[->output])"));
        let (body, output) = match s.split_once("->") {
            Some((b, o)) => (b, Some(o)),
            None => (s, None),
        };
        let mut parts = body.rsplitn(3, ':');
        let (dtype, dims, key) = match (parts.next(), parts.next(), parts.next()) {
            (Some(d), Some(s), Some(k)) => (d, s, k),
            _ => return Err(bad("missing fields")),
        };
        let dtype: DType = dtype.parse().map_err(|_| bad("unknown dtype"))?;
        let shape = if dims == "-" {
            Vec::new()
        } else {
            dims.split('x').map(|d| d.parse::<usize>().map_err(|_| bad("bad dimension"))).collect::<Result<_>>()?
        };
        let entry = SchemaEntry::new(key, shape, dtype)?;
        match output {
            Some(o) => entry.with_output_key(o),
            None => Ok(entry),
        }
    }
}

impl fmt::Display for SchemaEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let dims = if self.shape.is_empty() {
            "-".to_string()
        } else {
            self.shape.iter().map(usize::to_string).collect::<Vec<_>>().join("x")
        };
        write!(f, "{}:{dims}:{}", self.saved_key, self.dtype)?;
        if self.output_key != self.saved_key {
            write!(f, "->{}", self.output_key)?;
        }
        Ok(())
    }
}

impl FromStr for SchemaEntry {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SchemaEntry::parse(s)
    }
}

/// Saved keys become directory names.
fn check_key(key: &str) -> Result<()> {
    if key.is_empty() || key == "." || key == ".." || key.contains(['/', '\\', '\0']) {
        return Err(Error::Schema(format!("`{key}` cannot be used as a saved key")));
    }
    Ok(())
}

/// Whether a trajectory of T actions stores T or T+1 observations.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum ObsLayout {
    #[default]
    #[serde(rename = "T")]
    PerAction,
    /// Includes the terminal observation.
    #[serde(rename = "T+1")]
    WithTerminal,
}

impl ObsLayout {
    pub fn observations(self, actions: usize) -> usize {
        match self {
            ObsLayout::PerAction => actions,
            ObsLayout::WithTerminal => actions + 1,
        }
    }
}

/// What a new store is created with.
#[derive(Clone, Debug, PartialEq)]
pub struct StoreSchema {
    pub obs: Vec<SchemaEntry>,
    pub act: Vec<SchemaEntry>,
    /// One tensor per trajectory for each entry.
    pub goal: Vec<SchemaEntry>,
    pub obs_layout: ObsLayout,
    pub compression: Compression,
    pub split_ratios: SplitRatios,
    pub split_seed: u64,
}

impl StoreSchema {
    pub fn new(obs: Vec<SchemaEntry>, act: Vec<SchemaEntry>) -> Self {
        StoreSchema {
            obs,
            act,
            goal: Vec::new(),
            obs_layout: ObsLayout::default(),
            compression: Compression::default(),
            split_ratios: SplitRatios::default(),
            split_seed: 0,
        }
    }

    pub fn with_goals(mut self, goal: Vec<SchemaEntry>) -> Self {
        self.goal = goal;
        self
    }

    pub fn with_layout(mut self, layout: ObsLayout) -> Self {
        self.obs_layout = layout;
        self
    }

    pub fn with_compression(mut self, compression: Compression) -> Self {
        self.compression = compression;
        self
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StoreManifest {
    pub format_version: u32,
    pub obs_config: Vec<SchemaEntry>,
    pub act_config: Vec<SchemaEntry>,
    pub goal_config: Vec<SchemaEntry>,
    /// Always "trajectory": goals are stored once per trajectory.
    pub goal_scope: String,
    pub obs_layout: ObsLayout,
    pub compression: Compression,
    pub num_trajectories: usize,
    pub lengths: Vec<usize>,
    pub split_ratios: SplitRatios,
    pub split_seed: u64,
}

impl StoreManifest {
    pub fn create(schema: &StoreSchema) -> Result<Self> {
        let m = StoreManifest {
            format_version: FORMAT_VERSION,
            obs_config: schema.obs.clone(),
            act_config: schema.act.clone(),
            goal_config: schema.goal.clone(),
            goal_scope: "trajectory".into(),
            obs_layout: schema.obs_layout,
            compression: schema.compression,
            num_trajectories: 0,
            lengths: Vec::new(),
            split_ratios: schema.split_ratios,
            split_seed: schema.split_seed,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        let raw: serde_json::Value =
            serde_json::from_slice(bytes).map_err(|e| Error::Corrupt(format!("manifest.json: {e}")))?;
        let found = raw.get("format_version").and_then(serde_json::Value::as_u64);
        match found {
            Some(v) if v == FORMAT_VERSION as u64 => {}
            Some(v) => return Err(Error::Version { found: v as u32, expected: FORMAT_VERSION }),
            None => return Err(Error::Corrupt("manifest.json lacks format_version".into())),
        }
        let m: StoreManifest =
            serde_json::from_value(raw).map_err(|e| Error::Corrupt(format!("manifest.json: {e}")))?;
        m.validate()?;
        Ok(m)
    }

    pub fn to_json(&self) -> Result<Vec<u8>> {
        Ok(serde_json::to_vec_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.lengths.len() != self.num_trajectories {
            return Err(Error::Corrupt(format!(
                "{} lengths recorded for {} trajectories",
                self.lengths.len(),
                self.num_trajectories
            )));
        }
        self.split_ratios.validate()?;
        if self.act_config.is_empty() && self.obs_config.is_empty() {
            return Err(Error::Schema("a store needs at least one observation or action entry".into()));
        }
        let mut saved = std::collections::BTreeSet::new();
        let mut outputs = std::collections::BTreeSet::new();
        for (group, e) in self.entries() {
            check_key(&e.saved_key)?;
            if !saved.insert((group, &e.saved_key)) {
                return Err(Error::Schema(format!("{group} key `{}` declared twice", e.saved_key)));
            }
            if !outputs.insert(&e.output_key) {
                return Err(Error::Schema(format!("output key `{}` declared twice", e.output_key)));
            }
        }
        Ok(())
    }

    /// Every entry with its group directory name.
    pub fn entries(&self) -> impl Iterator<Item = (&'static str, &SchemaEntry)> {
        let tag = |g: &'static str| move |e| (g, e);
        self.obs_config
            .iter()
            .map(tag("obs"))
            .chain(self.act_config.iter().map(tag("act")))
            .chain(self.goal_config.iter().map(tag("goal")))
    }

    /// Whether `schema` describes the same stored arrays.
    pub fn matches(&self, schema: &StoreSchema) -> std::result::Result<(), String> {
        let groups = [
            ("observation", &self.obs_config, &schema.obs),
            ("action", &self.act_config, &schema.act),
            ("goal", &self.goal_config, &schema.goal),
        ];
        for (name, stored, given) in groups {
            if stored != given {
                let show = |v: &Vec<SchemaEntry>| v.iter().map(ToString::to_string).collect::<Vec<_>>().join(", ");
                return Err(format!("{name} schema [{}] differs from stored [{}]", show(given), show(stored)));
            }
        }
        if self.obs_layout != schema.obs_layout {
            return Err(format!("observation layout {:?} differs from stored {:?}", schema.obs_layout, self.obs_layout));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compact_syntax() {
        let e = SchemaEntry::parse("rgb:128x128x3:u8").unwrap();
        assert_eq!((e.saved_key.as_str(), e.shape.as_slice(), e.dtype), ("rgb", &[128, 128, 3][..], DType::U8));
        assert_eq!(e.output_key, "rgb");
        let a = SchemaEntry::parse("norm-pixel-pick-and-place:2x2:f32->default").unwrap();
        assert_eq!(a.output_key, "default");
        assert_eq!(a.shape, [2, 2]);
        assert_eq!(a.to_string().parse::<SchemaEntry>().unwrap(), a);
        assert_eq!(SchemaEntry::parse("r:-:f32").unwrap().shape, Vec::<usize>::new());
        for bad in ["rgb:128x128", "rgb:12xq:u8", "rgb:2:f64", ":2:u8", "a/b:2:u8", "a:2:u8->"] {
            assert!(SchemaEntry::parse(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn manifest_versions_are_checked() {
        let schema = StoreSchema::new(vec![SchemaEntry::parse("rgb:2x2:u8").unwrap()], vec![]);
        let m = StoreManifest::create(&schema).unwrap();
        let mut v: serde_json::Value = serde_json::from_slice(&m.to_json().unwrap()).unwrap();
        assert_eq!(v["obs_layout"], "T");
        assert_eq!(StoreManifest::from_json(&m.to_json().unwrap()).unwrap(), m);
        v["format_version"] = 2.into();
        let err = StoreManifest::from_json(&serde_json::to_vec(&v).unwrap()).unwrap_err();
        assert!(matches!(err, Error::Version { found: 2, expected: 1 }));
    }

    #[test]
    fn output_keys_must_be_unique() {
        let obs = vec![SchemaEntry::parse("rgb:2:u8->x").unwrap()];
        let act = vec![SchemaEntry::parse("a:2:f32->x").unwrap()];
        assert!(StoreManifest::create(&StoreSchema::new(obs, act)).is_err());
    }
}
