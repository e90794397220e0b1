//! Binary checkpoint container.
//!
//! Layout: magic `S2MCKPT1`, `u32` entry count, then per entry a `u16`
//! name length, the UTF-8 name, a `u8` rank, `u32` dims and float32 data.
//! All integers and floats are little-endian. Adam moments are stored
//! under `<name>.m1` / `<name>.m2` and the step counter under `__step`.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{NnError, Result};
use crate::store::ParamStore;
use crate::tensor::Tensor;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"S2MCKPT1";
pub const STEP_ENTRY: &str = "__step";
pub const CONFIG_ENTRY: &str = "__config";

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Checkpoint {
    entries: BTreeMap<String, Tensor>,
}

fn ckpt_err(msg: impl Into<String>) -> NnError {
    NnError::Checkpoint(msg.into())
}

impl Checkpoint {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor) {
        self.entries.insert(name.into(), value);
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.entries.get(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.entries.keys()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Record a 64-bit config hash as four exactly representable 16-bit chunks.
    pub fn set_config_hash(&mut self, hash: u64) {
        let parts = (0..4).map(|i| ((hash >> (16 * i)) & 0xffff) as f64).collect();
        self.insert(CONFIG_ENTRY, Tensor::new(vec![4], parts).expect("4 elements"));
    }

    pub fn config_hash(&self) -> Option<u64> {
        let t = self.get(CONFIG_ENTRY)?;
        if t.len() != 4 {
            return None;
        }
        Some(
            t.data()
                .iter()
                .enumerate()
                .fold(0u64, |h, (i, v)| h | ((*v as u64) << (16 * i))),
        )
    }

    /// Add every parameter, moment, buffer and the step counter of
    /// `store`, each name prefixed with `prefix`.
    pub fn add_store(&mut self, prefix: &str, store: &ParamStore) {
        for (name, p) in store.params() {
            self.insert(format!("{prefix}{name}"), p.value.clone());
            self.insert(format!("{prefix}{name}.m1"), p.m1.clone());
            self.insert(format!("{prefix}{name}.m2"), p.m2.clone());
        }
        for (name, b) in store.buffers() {
            self.insert(format!("{prefix}{name}"), b.clone());
        }
        self.insert(format!("{prefix}{STEP_ENTRY}"), Tensor::scalar(store.step_count as f64));
    }

    /// Restore several stores at once. Every store entry must be present
    /// with an identical shape and every checkpoint entry must be consumed.
    pub fn restore_stores(&self, targets: &mut [(&str, &mut ParamStore)]) -> Result<()> {
        let mut used = std::collections::BTreeSet::new();
        used.insert(CONFIG_ENTRY.to_string());
        for (prefix, store) in targets.iter_mut() {
            let take = |name: String, shape: &[usize], used: &mut std::collections::BTreeSet<String>| -> Result<Tensor> {
                let t = self
                    .get(&name)
                    .ok_or_else(|| ckpt_err(format!("missing entry `{name}`")))?;
                if t.shape() != shape {
                    return Err(ckpt_err(format!(
                        "entry `{name}` has shape {:?}, model expects {shape:?}",
                        t.shape()
                    )));
                }
                used.insert(name);
                Ok(t.clone())
            };
            let names: Vec<String> = store.params().map(|(n, _)| n.clone()).collect();
            for name in names {
                let shape = store.value(&name)?.shape().to_vec();
                let value = take(format!("{prefix}{name}"), &shape, &mut used)?;
                let m1 = take(format!("{prefix}{name}.m1"), &shape, &mut used)?;
                let m2 = take(format!("{prefix}{name}.m2"), &shape, &mut used)?;
                let p = store.param_mut(&name)?;
                p.value = value;
                p.m1 = m1;
                p.m2 = m2;
            }
            let buffers: Vec<(String, Vec<usize>)> =
                store.buffers().map(|(n, t)| (n.clone(), t.shape().to_vec())).collect();
            for (name, shape) in buffers {
                let value = take(format!("{prefix}{name}"), &shape, &mut used)?;
                store.set_buffer(&name, value)?;
            }
            let step = take(format!("{prefix}{STEP_ENTRY}"), &[1], &mut used)?;
            store.step_count = step.item() as u64;
        }
        if let Some(extra) = self.entries.keys().find(|k| !used.contains(*k)) {
            return Err(ckpt_err(format!("unexpected entry `{extra}` for this model configuration")));
        }
        Ok(())
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(CHECKPOINT_MAGIC)?;
        w.write_all(&(self.entries.len() as u32).to_le_bytes())?;
        for (name, t) in &self.entries {
            let bytes = name.as_bytes();
            let len = u16::try_from(bytes.len()).map_err(|_| ckpt_err(format!("name too long: {name}")))?;
            w.write_all(&len.to_le_bytes())?;
            w.write_all(bytes)?;
            w.write_all(&[t.rank() as u8])?;
            for &d in t.shape() {
                w.write_all(&(d as u32).to_le_bytes())?;
            }
            for &v in t.data() {
                w.write_all(&(v as f32).to_le_bytes())?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(ckpt_err("bad magic bytes"));
        }
        let count = read_u32(&mut r)?;
        let mut entries = BTreeMap::new();
        for _ in 0..count {
            let mut len = [0u8; 2];
            r.read_exact(&mut len)?;
            let mut name = vec![0u8; u16::from_le_bytes(len) as usize];
            r.read_exact(&mut name)?;
            let name = String::from_utf8(name).map_err(|_| ckpt_err("entry name is not UTF-8"))?;
            let mut rank = [0u8; 1];
            r.read_exact(&mut rank)?;
            let mut shape = Vec::with_capacity(rank[0] as usize);
            for _ in 0..rank[0] {
                shape.push(read_u32(&mut r)? as usize);
            }
            let n: usize = shape.iter().product();
            let mut raw = vec![0u8; 4 * n];
            r.read_exact(&mut raw)?;
            let data = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
                .collect();
            let t = Tensor::new(shape, data).map_err(|e| ckpt_err(format!("entry `{name}`: {e}")))?;
            if entries.insert(name.clone(), t).is_some() {
                return Err(ckpt_err(format!("duplicate entry `{name}`")));
            }
        }
        Ok(Self { entries })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_to(BufWriter::new(File::create(path)?))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_from(BufReader::new(File::open(path)?))
    }
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}
