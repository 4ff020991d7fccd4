use std::env;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::registry::domain::{AgentSpec, DomainSpec};
use crate::value::{Tree, Value};

pub const CONFIG_DIR_VAR: &str = "ARENA_KIT_CONFIG_DIR";

/// Hyper-parameters loaded from YAML, addressed by dotted paths.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Config(pub Tree);

fn yaml_key(k: &serde_yaml::Value) -> Result<String> {
    let key = match k {
        serde_yaml::Value::String(s) => s.clone(),
        serde_yaml::Value::Number(n) => n.to_string(),
        serde_yaml::Value::Bool(b) => b.to_string(),
        other => return Err(Error::Config(format!("unsupported mapping key {other:?}"))),
    };
    if key.is_empty() {
        return Err(Error::Config("empty mapping key".into()));
    }
    Ok(key)
}

fn from_yaml(v: &serde_yaml::Value, path: &str) -> Result<Value> {
    Ok(match v {
        serde_yaml::Value::Bool(b) => Value::Flag(*b),
        serde_yaml::Value::Number(n) => Value::Scalar(n.as_f64().unwrap_or(f64::NAN)),
        serde_yaml::Value::String(s) => Value::Text(s.clone()),
        serde_yaml::Value::Sequence(items) => Value::List(
            items.iter().enumerate().map(|(i, x)| from_yaml(x, &format!("{path}[{i}]"))).collect::<Result<_>>()?,
        ),
        serde_yaml::Value::Mapping(m) => {
            let mut t = Tree::new();
            for (k, x) in m {
                let key = yaml_key(k)?;
                let child = if path.is_empty() { key.clone() } else { format!("{path}.{key}") };
                t.insert(key, from_yaml(x, &child)?);
            }
            Value::Tree(t)
        }
        serde_yaml::Value::Tagged(t) => from_yaml(&t.value, path)?,
        serde_yaml::Value::Null => return Err(Error::Config(format!("`{path}` has no value"))),
    })
}

impl Config {
    pub fn empty() -> Self {
        Config(Tree::new())
    }

    pub fn from_yaml_str(text: &str) -> Result<Self> {
        let doc: serde_yaml::Value = serde_yaml::from_str(text)?;
        match doc {
            serde_yaml::Value::Null => Ok(Config::empty()),
            doc => match from_yaml(&doc, "")? {
                Value::Tree(t) => Ok(Config(t)),
                _ => Err(Error::Config("a config document must be a mapping".into())),
            },
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::ConfigNotFound(path.to_path_buf()),
            _ => Error::Io(e),
        })?;
        Config::from_yaml_str(&text)
    }

    pub fn tree(&self) -> &Tree {
        &self.0
    }

    pub fn into_tree(self) -> Tree {
        self.0
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Value at a dotted path such as `optimizer.lr`.
    pub fn get(&self, path: &str) -> Option<&Value> {
        let parts: Vec<&str> = path.split('.').collect();
        self.0.get_path(&parts)
    }

    pub fn get_f64(&self, path: &str) -> Option<f64> {
        self.get(path).and_then(Value::as_scalar)
    }

    pub fn get_str(&self, path: &str) -> Option<&str> {
        self.get(path).and_then(Value::as_text)
    }

    /// Sets a value, creating intermediate trees.
    pub fn set(&mut self, path: &str, value: impl Into<Value>) -> Result<()> {
        let parts: Vec<&str> = path.split('.').collect();
        if parts.iter().any(|p| p.is_empty()) {
            return Err(Error::Config(format!("invalid config path `{path}`")));
        }
        let mut node = &mut self.0;
        for part in &parts[..parts.len() - 1] {
            if !matches!(node.get(part), Some(Value::Tree(_))) {
                node.insert(*part, Tree::new());
            }
            node = match node.get_mut(part) {
                Some(Value::Tree(t)) => t,
                _ => unreachable!("just inserted a tree"),
            };
        }
        node.insert(parts[parts.len() - 1], value);
        Ok(())
    }
}

/// `$ARENA_KIT_CONFIG_DIR`, or the `configs/` directory shipped with the crate.
pub fn config_root() -> PathBuf {
    match env::var_os(CONFIG_DIR_VAR) {
        Some(dir) if !dir.is_empty() => PathBuf::from(dir),
        _ => Path::new(env!("CARGO_MANIFEST_DIR")).join("configs"),
    }
}

pub fn config_path(root: &Path, agent_name: &str, arena_name: &str, config_name: &str) -> Result<PathBuf> {
    let agent = AgentSpec::parse(agent_name)?;
    let arena = DomainSpec::parse(arena_name)?;
    Ok(root.join(agent.base).join(arena.base).join(format!("{config_name}.yaml")))
}

/// Loads `<root>/<agent_base>/<arena_base>/<config_name>.yaml`; an empty
/// name yields an empty config.
pub fn retrieve_config(agent_name: &str, arena_name: &str, config_name: &str) -> Result<Config> {
    retrieve_config_from(&config_root(), agent_name, arena_name, config_name)
}

pub fn retrieve_config_from(root: &Path, agent_name: &str, arena_name: &str, config_name: &str) -> Result<Config> {
    if config_name.is_empty() {
        return Ok(Config::empty());
    }
    Config::load(config_path(root, agent_name, arena_name, config_name)?)
}
