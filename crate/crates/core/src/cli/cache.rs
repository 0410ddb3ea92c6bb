//! On-disk cache of mode tables and Bessel zeros.
//!
//! The whole file is replaced on every write. A file with another schema
//! version, or one that fails to parse, is discarded and rebuilt.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::DomainSpec;
use crate::spectral::{enumerate_modes, ModeRecord, ModeTable, MultiIndex};
use crate::special::{BesselZero, BesselZeroTable};

pub const SCHEMA_VERSION: u32 = 1;
pub const CACHE_ENV: &str = "OBSERVALAB_CACHE";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheFile {
    pub schema_version: u32,
    pub bessel_zeros: Vec<BesselZero>,
    pub tables: BTreeMap<String, Vec<ModeRecord>>,
}

impl Default for CacheFile {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            bessel_zeros: Vec::new(),
            tables: BTreeMap::new(),
        }
    }
}

/// How the cache was found on load.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CacheState {
    Missing,
    Loaded,
    Rebuilt,
}

pub struct Cache {
    path: PathBuf,
    file: CacheFile,
    pub state: CacheState,
    dirty: bool,
}

fn key(domain: &DomainSpec, n: usize) -> String {
    format!("{}#N={n}", domain.kind.label())
}

/// `OBSERVALAB_CACHE`, else the configured path, else `<out>/cache.json`.
pub fn resolve_path(configured: Option<&Path>, out: &Path) -> PathBuf {
    match std::env::var_os(CACHE_ENV) {
        Some(p) if !p.is_empty() => PathBuf::from(p),
        _ => configured
            .map(Path::to_path_buf)
            .unwrap_or_else(|| out.join("cache.json")),
    }
}

impl Cache {
    pub fn open(path: PathBuf) -> Result<Self> {
        let (file, state) = match std::fs::read_to_string(&path) {
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => (CacheFile::default(), CacheState::Missing),
            Err(e) => return Err(Error::io(&path, e)),
            Ok(text) => match serde_json::from_str::<CacheFile>(&text) {
                Ok(f) if f.schema_version == SCHEMA_VERSION => (f, CacheState::Loaded),
                _ => (CacheFile::default(), CacheState::Rebuilt),
            },
        };
        Ok(Self {
            path,
            dirty: state == CacheState::Rebuilt,
            file,
            state,
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn file(&self) -> &CacheFile {
        &self.file
    }

    pub fn bessel_zeros(&self) -> BesselZeroTable {
        BesselZeroTable::from_entries(self.file.bessel_zeros.clone())
    }

    /// Mode table for `(domain, n)`, from the cache when present.
    pub fn table(&mut self, domain: &DomainSpec, n: usize) -> Result<ModeTable> {
        let k = key(domain, n);
        if let Some(records) = self.file.tables.get(&k) {
            if let Ok(t) = ModeTable::from_records(domain, records) {
                if t.len() == n {
                    return Ok(t);
                }
            }
        }
        let table = enumerate_modes(domain, n)?;
        let mut zeros = self.bessel_zeros();
        if let crate::geometry::DomainKind::Disk { radius } = domain.kind {
            for m in table.modes() {
                if let MultiIndex::Disk { m: order, k: rank, .. } = m.index {
                    zeros.insert(order, rank, m.lambda * radius);
                }
            }
        }
        self.file.bessel_zeros = zeros.entries().to_vec();
        self.file.tables.insert(k, table.records());
        self.dirty = true;
        Ok(table)
    }

    /// Writes through a temporary file and a rename.
    pub fn save(&mut self) -> Result<()> {
        if !self.dirty {
            return Ok(());
        }
        if let Some(dir) = self.path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let text = serde_json::to_string(&self.file).map_err(|e| Error::Json {
            path: self.path.clone(),
            source: e,
        })?;
        let tmp = self.path.with_extension("json.tmp");
        std::fs::write(&tmp, text).map_err(|e| Error::io(&tmp, e))?;
        std::fs::rename(&tmp, &self.path).map_err(|e| Error::io(&self.path, e))?;
        self.dirty = false;
        Ok(())
    }
}
