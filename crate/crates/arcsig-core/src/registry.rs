//! Persistent store for mechanism records.
//!
//! One structured text file per record under
//! `<root>/<model>/<task>/<split>/record.v<version>.toml`, plus an index
//! file mapping record ids to paths. Record ids are content digests, so
//! re-storing identical content is detected rather than duplicated, and a
//! corrupted file no longer matches its own id. Records are append-only:
//! a revalidation stores a new version carrying a lineage pointer to its
//! predecessor.
//!
//! Writers take an advisory lock file at the root; readers never lock.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cfs::{CfsSummary, ComponentCfs};
use crate::circuit::{ModelSkeleton, Provenance, StructuralFacts};
use crate::clause::HornClause;
use crate::signature::{extract_signature, IlpSignature};
use crate::validate::ValidationStats;

#[derive(Debug, thiserror::Error)]
pub enum RegistryError {
    #[error("io error at {0}: {1}")]
    Io(PathBuf, std::io::Error),
    #[error("record {0} already stored")]
    Duplicate(String),
    #[error("no record with id {0}")]
    UnknownId(String),
    #[error("record file {0} is corrupt: {1}")]
    Corrupt(PathBuf, String),
    #[error("registry is locked by another writer")]
    Locked,
    #[error("record invariant violated: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordStatus {
    Provisional,
    Validated,
}

/// The full logical record for one characterised circuit: structure,
/// functional summary, learned clause, clause summary, and validation
/// stats, plus provenance and versioning.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MechanismRecord {
    pub circuit_id: String,
    pub provenance: Provenance,
    pub skeleton: ModelSkeleton,
    pub structural_facts: StructuralFacts,
    pub cfs: Vec<ComponentCfs>,
    pub cfs_summary: CfsSummary,
    pub clause: HornClause,
    pub signature: IlpSignature,
    pub validation: ValidationStats,
    pub status: RecordStatus,
    pub version: u32,
    /// Id of the record this one revises.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub lineage: Option<String>,
}

impl MechanismRecord {
    /// Canonical serialised form; the record id is its digest.
    pub fn canonical_bytes(&self) -> Result<Vec<u8>, RegistryError> {
        toml::to_string(self)
            .map(String::into_bytes)
            .map_err(|e| RegistryError::Invalid(format!("cannot encode record: {e}")))
    }

    pub fn content_id(&self) -> Result<String, RegistryError> {
        Ok(digest_hex(&self.canonical_bytes()?))
    }

    fn check_invariants(&self) -> Result<(), RegistryError> {
        let re = extract_signature(&self.clause)
            .map_err(|e| RegistryError::Invalid(e.to_string()))?;
        if re != self.signature {
            return Err(RegistryError::Invalid(
                "stored signature does not match its clause".to_string(),
            ));
        }
        if self.status == RecordStatus::Validated && !self.validation.is_valid {
            return Err(RegistryError::Invalid(
                "validated status requires passing validation stats".to_string(),
            ));
        }
        Ok(())
    }
}

fn digest_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let out = hasher.finalize();
    out.iter().map(|b| format!("{b:02x}")).collect()
}

fn path_component(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.' {
            c
        } else {
            '_'
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
struct IndexEntry {
    id: String,
    model: String,
    task: String,
    split: String,
    version: u32,
    path: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RecordFilter {
    pub task: Option<String>,
    pub model: Option<String>,
    pub family: Option<String>,
}

pub struct Registry {
    root: PathBuf,
}

struct LockGuard {
    path: PathBuf,
}

impl Drop for LockGuard {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

impl Registry {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, RegistryError> {
        let root = root.into();
        fs::create_dir_all(&root).map_err(|e| RegistryError::Io(root.clone(), e))?;
        Ok(Registry { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn index_path(&self) -> PathBuf {
        self.root.join("index.tsv")
    }

    fn lock(&self) -> Result<LockGuard, RegistryError> {
        let path = self.root.join(".lock");
        match fs::OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(_) => Ok(LockGuard { path }),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                Err(RegistryError::Locked)
            }
            Err(e) => Err(RegistryError::Io(path, e)),
        }
    }

    fn read_index(&self) -> Result<Vec<IndexEntry>, RegistryError> {
        let path = self.index_path();
        let text = match fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(RegistryError::Io(path, e)),
        };
        let mut entries = Vec::new();
        for line in text.lines().filter(|l| !l.is_empty()) {
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 6 {
                return Err(RegistryError::Corrupt(
                    path.clone(),
                    format!("index line with {} fields", fields.len()),
                ));
            }
            let version = fields[4].parse::<u32>().map_err(|e| {
                RegistryError::Corrupt(path.clone(), format!("bad version: {e}"))
            })?;
            entries.push(IndexEntry {
                id: fields[0].to_string(),
                model: fields[1].to_string(),
                task: fields[2].to_string(),
                split: fields[3].to_string(),
                version,
                path: fields[5].to_string(),
            });
        }
        Ok(entries)
    }

    pub fn contains(&self, id: &str) -> Result<bool, RegistryError> {
        Ok(self.read_index()?.iter().any(|e| e.id == id))
    }

    /// Next free version number for a (model, task, split) slot.
    pub fn next_version(
        &self,
        model: &str,
        task: &str,
        split: &str,
    ) -> Result<u32, RegistryError> {
        Ok(self
            .read_index()?
            .iter()
            .filter(|e| e.model == model && e.task == task && e.split == split)
            .map(|e| e.version)
            .max()
            .map_or(1, |v| v + 1))
    }

    /// Store a record; returns its content id. Identical content is a
    /// duplicate, not a new version.
    pub fn store(&self, record: &MechanismRecord) -> Result<String, RegistryError> {
        record.check_invariants()?;
        let bytes = record.canonical_bytes()?;
        let id = digest_hex(&bytes);
        let _guard = self.lock()?;
        if self.read_index()?.iter().any(|e| e.id == id) {
            return Err(RegistryError::Duplicate(id));
        }
        let model = path_component(&record.provenance.model_id);
        let task = path_component(&record.provenance.task);
        let split = path_component(&record.provenance.split);
        let dir = self.root.join(&model).join(&task).join(&split);
        fs::create_dir_all(&dir).map_err(|e| RegistryError::Io(dir.clone(), e))?;
        let file = dir.join(format!("record.v{}.toml", record.version));
        fs::write(&file, &bytes).map_err(|e| RegistryError::Io(file.clone(), e))?;
        let rel = format!("{model}/{task}/{split}/record.v{}.toml", record.version);
        let line = format!(
            "{id}\t{}\t{}\t{}\t{}\t{rel}\n",
            record.provenance.model_id,
            record.provenance.task,
            record.provenance.split,
            record.version,
        );
        let index = self.index_path();
        let mut handle = fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(&index)
            .map_err(|e| RegistryError::Io(index.clone(), e))?;
        handle
            .write_all(line.as_bytes())
            .map_err(|e| RegistryError::Io(index.clone(), e))?;
        Ok(id)
    }

    fn load(&self, entry: &IndexEntry) -> Result<MechanismRecord, RegistryError> {
        let path = self.root.join(&entry.path);
        let bytes = fs::read(&path).map_err(|e| RegistryError::Io(path.clone(), e))?;
        if digest_hex(&bytes) != entry.id {
            return Err(RegistryError::Corrupt(
                path,
                "content does not match record id".to_string(),
            ));
        }
        let text = String::from_utf8(bytes)
            .map_err(|e| RegistryError::Corrupt(path.clone(), e.to_string()))?;
        toml::from_str(&text).map_err(|e| RegistryError::Corrupt(path, e.to_string()))
    }

    pub fn retrieve(&self, id: &str) -> Result<MechanismRecord, RegistryError> {
        let entries = self.read_index()?;
        let entry = entries
            .iter()
            .find(|e| e.id == id)
            .ok_or_else(|| RegistryError::UnknownId(id.to_string()))?;
        self.load(entry)
    }

    /// All records matching the filter, ordered by model, task, split and
    /// version.
    pub fn query(&self, filter: &RecordFilter) -> Result<Vec<MechanismRecord>, RegistryError> {
        let mut entries = self.read_index()?;
        entries.sort_by(|a, b| {
            (&a.model, &a.task, &a.split, a.version).cmp(&(
                &b.model,
                &b.task,
                &b.split,
                b.version,
            ))
        });
        let mut out = Vec::new();
        for entry in &entries {
            if let Some(task) = &filter.task {
                if &entry.task != task {
                    continue;
                }
            }
            if let Some(model) = &filter.model {
                if &entry.model != model {
                    continue;
                }
            }
            let record = self.load(entry)?;
            if let Some(family) = &filter.family {
                if &record.skeleton.family != family {
                    continue;
                }
            }
            out.push(record);
        }
        Ok(out)
    }

    /// Latest version per (model, task, split) slot under the filter.
    pub fn query_latest(
        &self,
        filter: &RecordFilter,
    ) -> Result<Vec<MechanismRecord>, RegistryError> {
        let all = self.query(filter)?;
        let mut latest: BTreeMap<(String, String, String), MechanismRecord> = BTreeMap::new();
        for record in all {
            let key = (
                record.provenance.model_id.clone(),
                record.provenance.task.clone(),
                record.provenance.split.clone(),
            );
            match latest.get(&key) {
                Some(existing) if existing.version >= record.version => {}
                _ => {
                    latest.insert(key, record);
                }
            }
        }
        Ok(latest.into_values().collect())
    }
}
