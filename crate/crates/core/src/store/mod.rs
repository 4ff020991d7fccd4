//! Chunked trajectory storage.
//!
//! A store is a directory holding `manifest.json` and one chunk file per
//! trajectory and array: `<group>/<saved_key>/t<index>.bin`, where group is
//! `obs`, `act` or `goal`. Chunks are written first (temp file, then
//! rename) and the manifest last, so a trajectory exists once the manifest
//! that counts it is in place. Opening in append mode drops trailing
//! trajectories whose chunks fail verification and deletes orphan chunks.
//!
//! Many readers may share a store; at most one writer may hold it.

pub mod chunk;
pub mod sample;
pub mod schema;
pub mod split;

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::value::Tensor;

pub use chunk::Compression;
pub use sample::{Location, SampleMode, SampleRequest};
pub use schema::{ObsLayout, SchemaEntry, StoreManifest, StoreSchema, FORMAT_VERSION};
pub use split::{Split, SplitRatios};

pub const MANIFEST: &str = "manifest.json";
/// The manifest being committed; authoritative only when [`MANIFEST`] is gone.
const MANIFEST_NEXT: &str = "manifest.json.next";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum IoMode {
    Read,
    /// Create a new store; fails if one exists.
    Write,
    /// Open or create, resuming after the last complete trajectory.
    Append,
}

impl FromStr for IoMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "r" => Ok(IoMode::Read),
            "w" => Ok(IoMode::Write),
            "a" => Ok(IoMode::Append),
            other => Err(Error::Usage(format!("unknown io mode `{other}` (r, w, a)"))),
        }
    }
}

/// A stored trial keyed by output keys.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub observations: BTreeMap<String, Tensor>,
    pub actions: BTreeMap<String, Tensor>,
    pub goals: BTreeMap<String, Tensor>,
}

impl Trajectory {
    /// All arrays in one map.
    pub fn flatten(self) -> BTreeMap<String, Tensor> {
        let mut out = self.observations;
        out.extend(self.actions);
        out.extend(self.goals);
        out
    }
}

/// One sampled item. Per-step arrays have a leading time axis except in
/// step mode, which returns single-step tensors and `next_observations`.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub location: Location,
    pub observations: BTreeMap<String, Tensor>,
    pub actions: BTreeMap<String, Tensor>,
    pub next_observations: BTreeMap<String, Tensor>,
    /// Trajectory mode only.
    pub goals: BTreeMap<String, Tensor>,
    /// Sequence modes: true where a trial starts inside the window.
    pub is_first: Vec<bool>,
}

/// How hard writes try to reach the disk.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Durability {
    /// fsync every chunk, its directory and the manifest. Survives power loss.
    #[default]
    Sync,
    /// Atomic renames only. Survives a killed process, not a lost machine.
    Flush,
}

#[derive(Debug)]
pub struct Store {
    root: PathBuf,
    mode: IoMode,
    manifest: StoreManifest,
    dropped: usize,
    durability: Durability,
}

fn sync_dir(dir: &Path) {
    // Best effort: not every platform can open a directory for syncing.
    if let Ok(f) = fs::File::open(dir) {
        let _ = f.sync_all();
    }
}

/// Bytes of the committed manifest, `None` if there is no store.
///
/// A commit unlinks the old manifest before moving the pending one into
/// place, so a reader racing it retries across the two names.
fn read_manifest(root: &Path) -> Result<Option<Vec<u8>>> {
    let (live, next) = (root.join(MANIFEST), root.join(MANIFEST_NEXT));
    let mut missing = false;
    for _ in 0..64 {
        for path in [&live, &next] {
            match fs::read(path) {
                Ok(bytes) => return Ok(Some(bytes)),
                Err(e) if e.kind() == std::io::ErrorKind::NotFound => {}
                Err(e) => return Err(e.into()),
            }
        }
        // Both names absent on two passes in a row: no commit is in flight.
        if !live.exists() && !next.exists() {
            if missing {
                return Ok(None);
            }
            missing = true;
        } else {
            missing = false;
        }
    }
    Err(Error::Usage(format!("`{}` keeps changing under a concurrent writer", root.display())))
}

fn chunk_index(name: &str) -> Option<usize> {
    name.strip_prefix('t')?.strip_suffix(".bin")?.parse().ok()
}

impl Store {
    pub fn open(path: impl AsRef<Path>, mode: IoMode, schema: Option<&StoreSchema>) -> Result<Store> {
        Store::open_with(path, mode, schema, Durability::Sync)
    }

    pub fn open_with(
        path: impl AsRef<Path>,
        mode: IoMode,
        schema: Option<&StoreSchema>,
        durability: Durability,
    ) -> Result<Store> {
        let root = path.as_ref().to_path_buf();
        let committed = read_manifest(&root)?;
        let exists = committed.is_some();
        let manifest = match (mode, committed) {
            (IoMode::Read, None) => {
                return Err(Error::Usage(format!("no trajectory store at `{}`", root.display())));
            }
            (IoMode::Write, Some(_)) => {
                return Err(Error::Usage(format!(
                    "a store already exists at `{}`; open it in append mode",
                    root.display()
                )));
            }
            (_, Some(bytes)) => {
                let m = StoreManifest::from_json(&bytes)?;
                if let (IoMode::Append, Some(s)) = (mode, schema) {
                    m.matches(s).map_err(Error::Schema)?;
                }
                m
            }
            (_, None) => {
                let s = schema.ok_or_else(|| Error::Usage("creating a store needs a schema".into()))?;
                StoreManifest::create(s)?
            }
        };
        let mut store = Store { root, mode, manifest, dropped: 0, durability };
        if mode != IoMode::Read {
            fs::create_dir_all(&store.root)?;
            if !exists {
                store.commit()?;
            }
            store.repair()?;
        }
        Ok(store)
    }

    pub fn set_durability(&mut self, durability: Durability) {
        self.durability = durability;
    }

    pub fn durability(&self) -> Durability {
        self.durability
    }

    fn sync(&self) -> bool {
        self.durability == Durability::Sync
    }

    pub fn path(&self) -> &Path {
        &self.root
    }

    pub fn io_mode(&self) -> IoMode {
        self.mode
    }

    pub fn manifest(&self) -> &StoreManifest {
        &self.manifest
    }

    pub fn num_trajectories(&self) -> usize {
        self.manifest.num_trajectories
    }

    /// Actions per trajectory.
    pub fn lengths(&self) -> &[usize] {
        &self.manifest.lengths
    }

    /// Trailing trajectories discarded as incomplete when this handle opened.
    pub fn dropped(&self) -> usize {
        self.dropped
    }

    fn chunk_path(&self, group: &str, key: &str, index: usize) -> PathBuf {
        self.root.join(group).join(key).join(format!("t{index}.bin"))
    }

    // Renaming over an existing file makes ext4 flush it synchronously. That
    // is free next to the fsyncs of `Sync`, but dominates `Flush`, which
    // instead unlinks the old manifest and moves the new one into a free
    // name; `read_manifest` covers the gap in between.
    fn commit(&self) -> Result<()> {
        let (live, next) = (self.root.join(MANIFEST), self.root.join(MANIFEST_NEXT));
        let bytes = self.manifest.to_json()?;
        if self.sync() {
            chunk::write_atomic(&live, &bytes, true)?;
            sync_dir(&self.root);
            return Ok(());
        }
        let _ = fs::remove_file(&next);
        chunk::write_atomic(&next, &bytes, false)?;
        match fs::remove_file(&live) {
            Err(e) if e.kind() != std::io::ErrorKind::NotFound => return Err(e.into()),
            _ => {}
        }
        fs::rename(&next, &live)?;
        Ok(())
    }

    fn writable(&self) -> Result<()> {
        match self.mode {
            IoMode::Read => Err(Error::Mode(format!("store `{}` is open read-only", self.root.display()))),
            _ => Ok(()),
        }
    }

    fn repair(&mut self) -> Result<()> {
        let before = self.manifest.num_trajectories;
        let mut n = before;
        while n > 0 && self.verify_trajectory(n - 1).is_err() {
            n -= 1;
        }
        if n < before {
            self.manifest.lengths.truncate(n);
            self.manifest.num_trajectories = n;
            self.commit()?;
            self.dropped = before - n;
        }
        let _ = fs::remove_file(self.root.join(format!("{MANIFEST_NEXT}.tmp")));
        let _ = fs::remove_file(self.root.join(MANIFEST_NEXT));
        if !self.root.join(MANIFEST).exists() {
            self.commit()?;
        }
        let dirs: Vec<PathBuf> = self.manifest.entries().map(|(g, e)| self.root.join(g).join(&e.saved_key)).collect();
        for dir in dirs {
            let Ok(listing) = fs::read_dir(&dir) else { continue };
            for entry in listing.flatten() {
                let name = entry.file_name().to_string_lossy().into_owned();
                let orphan = name.ends_with(".tmp") || chunk_index(&name).is_some_and(|i| i >= n);
                if orphan {
                    fs::remove_file(entry.path())?;
                }
            }
        }
        Ok(())
    }

    /// Appends one trajectory and returns its index. `observations` and
    /// `actions` are keyed by saved key; observation lists hold T or T+1
    /// entries for T actions, as the store's layout says.
    pub fn add_trajectory(
        &mut self,
        observations: &BTreeMap<String, Vec<Tensor>>,
        actions: &BTreeMap<String, Vec<Tensor>>,
        goals: Option<&BTreeMap<String, Tensor>>,
    ) -> Result<usize> {
        self.writable()?;
        let m = &self.manifest;
        check_keys("observation", &m.obs_config, observations.keys())?;
        check_keys("action", &m.act_config, actions.keys())?;
        let empty = BTreeMap::new();
        let goals = goals.unwrap_or(&empty);
        check_keys("goal", &m.goal_config, goals.keys())?;

        let steps = match m.act_config.first() {
            Some(e) => actions[&e.saved_key].len(),
            None => {
                let first = &observations[&m.obs_config[0].saved_key];
                match m.obs_layout {
                    ObsLayout::PerAction => first.len(),
                    ObsLayout::WithTerminal => first.len().checked_sub(1).ok_or_else(|| {
                        Error::Schema("a terminal-observation store needs at least one observation".into())
                    })?,
                }
            }
        };
        let mut arrays = Vec::new();
        for (group, entries, lists, want) in [
            ("act", &m.act_config, actions, steps),
            ("obs", &m.obs_config, observations, m.obs_layout.observations(steps)),
        ] {
            for e in entries {
                let list = &lists[&e.saved_key];
                if list.len() != want {
                    return Err(Error::Schema(format!(
                        "`{}` has {} entries, expected {want} for {steps} actions ({:?} layout)",
                        e.saved_key,
                        list.len(),
                        m.obs_layout
                    )));
                }
                let stacked = Tensor::stack(list, e.dtype, &e.shape)
                    .map_err(|err| Error::Schema(format!("`{}`: {err}, schema says {} {:?}", e.saved_key, e.dtype, e.shape)))?;
                arrays.push((group, e, stacked));
            }
        }
        for e in &m.goal_config {
            let g = &goals[&e.saved_key];
            if g.dtype() != e.dtype || g.shape() != e.shape.as_slice() {
                return Err(Error::Schema(format!(
                    "goal `{}` is {} {:?}, schema says {} {:?}",
                    e.saved_key,
                    g.dtype(),
                    g.shape(),
                    e.dtype,
                    e.shape
                )));
            }
            arrays.push(("goal", e, g.clone()));
        }

        let index = m.num_trajectories;
        let compression = m.compression;
        for (group, e, t) in &arrays {
            let path = self.chunk_path(group, &e.saved_key, index);
            let dir = path.parent().expect("chunk path has a parent");
            fs::create_dir_all(dir)?;
            chunk::write_atomic(&path, &chunk::encode(t, compression)?, self.sync())?;
            if self.sync() {
                sync_dir(dir);
            }
        }
        self.manifest.lengths.push(steps);
        self.manifest.num_trajectories += 1;
        if let Err(e) = self.commit() {
            self.manifest.lengths.pop();
            self.manifest.num_trajectories -= 1;
            return Err(e);
        }
        Ok(index)
    }

    fn check_index(&self, index: usize) -> Result<()> {
        if index >= self.num_trajectories() {
            return Err(Error::Range { index, len: self.num_trajectories() });
        }
        Ok(())
    }

    fn read_entry(&self, group: &str, e: &SchemaEntry, index: usize) -> Result<Tensor> {
        let t = chunk::read(&self.chunk_path(group, &e.saved_key, index))
            .map_err(|why| Error::Corrupt(format!("trajectory {index}: {group}/{}: {why}", e.saved_key)))?;
        let steps = self.manifest.lengths[index];
        let rows = match group {
            "obs" => Some(self.manifest.obs_layout.observations(steps)),
            "act" => Some(steps),
            _ => None,
        };
        let mut want = rows.into_iter().collect::<Vec<_>>();
        want.extend_from_slice(&e.shape);
        if t.dtype() != e.dtype || t.shape() != want.as_slice() {
            return Err(Error::Corrupt(format!(
                "trajectory {index}: {group}/{} holds {} {:?}, expected {} {want:?}",
                e.saved_key,
                t.dtype(),
                t.shape(),
                e.dtype
            )));
        }
        Ok(t)
    }

    /// Reads every array of one trajectory.
    pub fn read_trajectory(&self, index: usize) -> Result<Trajectory> {
        self.check_index(index)?;
        let read = |group: &str, entries: &[SchemaEntry]| -> Result<BTreeMap<String, Tensor>> {
            entries.iter().map(|e| Ok((e.output_key.clone(), self.read_entry(group, e, index)?))).collect()
        };
        Ok(Trajectory {
            observations: read("obs", &self.manifest.obs_config)?,
            actions: read("act", &self.manifest.act_config)?,
            goals: read("goal", &self.manifest.goal_config)?,
        })
    }

    /// Arrays of one trajectory keyed by output key, each `[T(+1), *shape]`.
    pub fn get_trajectory(&self, index: usize) -> Result<BTreeMap<String, Tensor>> {
        Ok(self.read_trajectory(index)?.flatten())
    }

    /// Checks every chunk of one trajectory.
    pub fn verify_trajectory(&self, index: usize) -> Result<()> {
        self.check_index(index)?;
        for (group, e) in self.manifest.entries() {
            self.read_entry(group, e, index)?;
        }
        Ok(())
    }

    /// Checks every chunk of every trajectory.
    pub fn verify(&self) -> Result<()> {
        (0..self.num_trajectories()).try_for_each(|i| self.verify_trajectory(i))
    }

    /// Re-partitions with new ratios, keeping the stored seed.
    pub fn split_assign(&mut self, ratios: SplitRatios) -> Result<()> {
        self.writable()?;
        ratios.validate()?;
        let old = self.manifest.split_ratios;
        self.manifest.split_ratios = ratios;
        if let Err(e) = self.commit() {
            self.manifest.split_ratios = old;
            return Err(e);
        }
        Ok(())
    }

    /// Ascending trajectory indices of a split.
    pub fn split_indices(&self, split: Split) -> Vec<usize> {
        let n = self.num_trajectories();
        if split == Split::All {
            return (0..n).collect();
        }
        let [train, val, eval] = split::assign(n, &self.manifest.split_ratios, self.manifest.split_seed);
        match split {
            Split::Train => train,
            Split::Val => val,
            _ => eval,
        }
    }

    pub fn sample_location(&self, request: &SampleRequest, rng: &mut Rng) -> Result<Location> {
        let trials = self.split_indices(request.split);
        sample::locate(request, &trials, self.lengths(), self.manifest.obs_layout, rng)
    }

    pub fn sample(&self, request: &SampleRequest, rng: &mut Rng) -> Result<Sample> {
        let loc = self.sample_location(request, rng)?;
        self.materialize(request, loc)
    }

    /// Reads the data behind a location.
    pub fn materialize(&self, request: &SampleRequest, location: Location) -> Result<Sample> {
        let mut out = Sample {
            location,
            observations: BTreeMap::new(),
            actions: BTreeMap::new(),
            next_observations: BTreeMap::new(),
            goals: BTreeMap::new(),
            is_first: Vec::new(),
        };
        match location {
            Location::Trajectory(i) => {
                let t = self.read_trajectory(i)?;
                (out.observations, out.actions, out.goals) = (t.observations, t.actions, t.goals);
            }
            Location::Step { trajectory, t } => {
                let traj = self.read_trajectory(trajectory)?;
                for (k, v) in &traj.observations {
                    out.observations.insert(k.clone(), row(v, t)?);
                    out.next_observations.insert(k.clone(), row(v, t + 1)?);
                }
                for (k, v) in &traj.actions {
                    out.actions.insert(k.clone(), row(v, t)?);
                }
            }
            Location::Window { trajectory, start } => {
                let len = request.sequence_length.unwrap_or(1);
                let traj = self.read_trajectory(trajectory)?;
                for (k, v) in traj.observations {
                    out.observations.insert(k, v.slice_rows(start, len)?);
                }
                for (k, v) in traj.actions {
                    out.actions.insert(k, v.slice_rows(start, len)?);
                }
                out.is_first = (0..len).map(|j| start + j == 0).collect();
            }
            Location::Stream { offset } => {
                let len = request.sequence_length.unwrap_or(1);
                let trials = self.split_indices(request.split);
                let mut obs: BTreeMap<String, Vec<Tensor>> = BTreeMap::new();
                let mut act: BTreeMap<String, Vec<Tensor>> = BTreeMap::new();
                for seg in sample::stream_segments(&trials, self.lengths(), offset, len) {
                    let traj = self.read_trajectory(seg.trajectory)?;
                    for (k, v) in traj.observations {
                        obs.entry(k).or_default().push(v.slice_rows(seg.start, seg.len)?);
                    }
                    for (k, v) in traj.actions {
                        act.entry(k).or_default().push(v.slice_rows(seg.start, seg.len)?);
                    }
                    out.is_first.push(seg.is_first);
                    out.is_first.extend(std::iter::repeat_n(false, seg.len - 1));
                }
                for (k, parts) in obs {
                    out.observations.insert(k, Tensor::concat_rows(&parts)?);
                }
                for (k, parts) in act {
                    out.actions.insert(k, Tensor::concat_rows(&parts)?);
                }
            }
        }
        Ok(out)
    }
}

/// Row `t` of the leading axis, without that axis.
fn row(t: &Tensor, i: usize) -> Result<Tensor> {
    t.slice_rows(i, 1)?.reshape(t.shape()[1..].to_vec())
}

fn check_keys<'a>(what: &str, entries: &[SchemaEntry], given: impl Iterator<Item = &'a String>) -> Result<()> {
    let given: BTreeSet<&str> = given.map(String::as_str).collect();
    let expected: BTreeSet<&str> = entries.iter().map(|e| e.saved_key.as_str()).collect();
    if let Some(missing) = expected.difference(&given).next() {
        return Err(Error::Schema(format!("missing {what} key `{missing}`")));
    }
    if let Some(extra) = given.difference(&expected).next() {
        return Err(Error::Schema(format!("unexpected {what} key `{extra}`")));
    }
    Ok(())
}
