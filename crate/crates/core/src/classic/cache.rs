//! Tab-separated cache of Monte Carlo critical values.
//!
//! One record per line: `method a b alpha replications seed critical_value`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use super::calibration::MonteCarloCritical;
use super::Method;
use crate::error::{AdditivityError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CacheKey {
    pub method: Method,
    pub a: usize,
    pub b: usize,
    alpha_bits: u64,
    pub replications: usize,
    pub seed: u64,
}

impl CacheKey {
    pub fn new(
        method: Method,
        a: usize,
        b: usize,
        alpha: f64,
        replications: usize,
        seed: u64,
    ) -> Self {
        CacheKey {
            method,
            a,
            b,
            alpha_bits: alpha.to_bits(),
            replications,
            seed,
        }
    }

    pub fn alpha(&self) -> f64 {
        f64::from_bits(self.alpha_bits)
    }

    pub fn of(cal: &MonteCarloCritical) -> Self {
        CacheKey::new(
            cal.method,
            cal.a,
            cal.b,
            cal.alpha_level,
            cal.replications,
            cal.seed,
        )
    }
}

#[derive(Debug, Clone, Default)]
pub struct CriticalValueCache {
    path: Option<PathBuf>,
    entries: BTreeMap<CacheKey, f64>,
}

fn parse_field<T: std::str::FromStr>(field: Option<&str>, line: usize, column: usize) -> Result<T> {
    let text = field.ok_or_else(|| AdditivityError::Parse {
        line,
        column,
        message: "missing field".into(),
    })?;
    text.trim().parse().map_err(|_| AdditivityError::Parse {
        line,
        column,
        message: format!("cannot parse '{text}'"),
    })
}

impl CriticalValueCache {
    /// Loads the cache at `path`; a missing file gives an empty cache.
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let text = match fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => String::new(),
            Err(e) => return Err(e.into()),
        };
        let mut cache = CriticalValueCache::parse(&text)?;
        cache.path = Some(path);
        Ok(cache)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut cache = CriticalValueCache::default();
        for (n, line) in text.lines().enumerate() {
            let line_no = n + 1;
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let mut f = line.split('\t');
            let method: String = parse_field(f.next(), line_no, 1)?;
            let method: Method = method.parse().map_err(|_| AdditivityError::Parse {
                line: line_no,
                column: 1,
                message: format!("unknown method '{method}'"),
            })?;
            let a = parse_field(f.next(), line_no, 2)?;
            let b = parse_field(f.next(), line_no, 3)?;
            let alpha = parse_field(f.next(), line_no, 4)?;
            let reps = parse_field(f.next(), line_no, 5)?;
            let seed = parse_field(f.next(), line_no, 6)?;
            let value: f64 = parse_field(f.next(), line_no, 7)?;
            cache.insert(MonteCarloCritical {
                method,
                a,
                b,
                alpha_level: alpha,
                replications: reps,
                critical_value: value,
                seed,
            })?;
        }
        Ok(cache)
    }

    pub fn get(&self, key: &CacheKey) -> Option<MonteCarloCritical> {
        self.entries
            .get(key)
            .map(|&critical_value| MonteCarloCritical {
                method: key.method,
                a: key.a,
                b: key.b,
                alpha_level: key.alpha(),
                replications: key.replications,
                critical_value,
                seed: key.seed,
            })
    }

    /// Adds a record. Returns `true` if it was new; an existing key with a
    /// different value is treated as corruption.
    pub fn insert(&mut self, cal: MonteCarloCritical) -> Result<bool> {
        let key = CacheKey::of(&cal);
        match self.entries.get(&key) {
            Some(&old) if old.to_bits() == cal.critical_value.to_bits() => Ok(false),
            Some(&old) => Err(AdditivityError::CacheCollision(format!(
                "{} {}x{} alpha {} reps {} seed {}: cached {:e}, computed {:e}",
                cal.method,
                cal.a,
                cal.b,
                cal.alpha_level,
                cal.replications,
                cal.seed,
                old,
                cal.critical_value
            ))),
            None => {
                self.entries.insert(key, cal.critical_value);
                Ok(true)
            }
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.entries {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\t{}\t{:.16e}\n",
                k.method,
                k.a,
                k.b,
                k.alpha(),
                k.replications,
                k.seed,
                v
            ));
        }
        out
    }

    /// Writes the cache back to the file it was opened from.
    pub fn save(&self) -> Result<()> {
        let path = self
            .path
            .as_ref()
            .ok_or_else(|| AdditivityError::Io("cache has no backing file".into()))?;
        let tmp = path.with_extension("tmp");
        fs::write(&tmp, self.to_tsv())?;
        fs::rename(&tmp, path)?;
        Ok(())
    }
}
