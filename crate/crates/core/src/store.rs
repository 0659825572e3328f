//! The sample database shared by the engine, updater and controller.
//!
//! Records are kept in production order. That order is what the weighted
//! batch-means estimator relies on to see the chain's dependence structure,
//! so every read path iterates it unchanged.

use std::collections::{HashMap, VecDeque};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::{Arc, RwLock, RwLockReadGuard, RwLockWriteGuard};

use crate::error::{contract, Error, Result};
use crate::target::{check_weight, effective_sample_size};

/// One stored sample.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SampleRecord {
    pub value: Vec<f64>,
    pub weight: f64,
    /// Logical production date; unique and increasing.
    pub production_seq: u64,
    /// Index of the target the chain was sampling when this record was made.
    pub info_cutoff: u64,
}

impl SampleRecord {
    /// A freshly produced record. New samples always enter with weight 1.
    pub fn fresh(value: Vec<f64>, production_seq: u64, info_cutoff: u64) -> Self {
        Self {
            value,
            weight: 1.0,
            production_seq,
            info_cutoff,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SampleDatabase {
    records: VecDeque<SampleRecord>,
    n_max: usize,
    n_min: usize,
    target: u64,
}

impl SampleDatabase {
    pub fn new(n_min: usize, n_max: usize) -> Result<Self> {
        if n_min == 0 || n_max < n_min {
            return Err(Error::Config(format!(
                "need 1 <= n_min <= n_max, got n_min={n_min}, n_max={n_max}"
            )));
        }
        Ok(Self {
            records: VecDeque::new(),
            n_max,
            n_min,
            target: 0,
        })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn n_min(&self) -> usize {
        self.n_min
    }

    pub fn set_n_max(&mut self, n_max: usize) -> Result<()> {
        if n_max < self.n_min {
            return Err(contract(format!(
                "n_max {n_max} below n_min {}",
                self.n_min
            )));
        }
        self.n_max = n_max;
        Ok(())
    }

    /// Index of the target the stored weights currently refer to.
    pub fn target(&self) -> u64 {
        self.target
    }

    pub fn set_target(&mut self, n: u64) {
        self.target = n;
    }

    pub fn records(&self) -> impl ExactSizeIterator<Item = &SampleRecord> + '_ {
        self.records.iter()
    }

    pub fn weights(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.weight).collect()
    }

    pub fn total_weight(&self) -> f64 {
        self.records.iter().map(|r| r.weight).sum()
    }

    /// ESS over all weights, or 0 when every weight is zero.
    pub fn ess(&self) -> f64 {
        effective_sample_size(&self.weights()).unwrap_or(0.0)
    }

    pub fn last_seq(&self) -> Option<u64> {
        self.records.back().map(|r| r.production_seq)
    }

    /// Dimension shared by all records, if any are stored.
    pub fn dimension(&self) -> Option<usize> {
        self.records.front().map(|r| r.value.len())
    }

    /// Appends freshly produced records. The store may exceed `n_max` until
    /// the next deletion pass.
    pub fn insert_batch(&mut self, batch: Vec<SampleRecord>) -> Result<()> {
        let mut last = self.last_seq();
        for r in &batch {
            if r.weight != 1.0 {
                return Err(contract(format!(
                    "record {} enters with weight {} instead of 1",
                    r.production_seq, r.weight
                )));
            }
            if last.is_some_and(|l| r.production_seq <= l) {
                return Err(contract(format!(
                    "production_seq {} does not follow {}",
                    r.production_seq,
                    last.unwrap_or_default()
                )));
            }
            last = Some(r.production_seq);
        }
        self.records.extend(batch);
        Ok(())
    }

    /// Removes the oldest records until `N <= N_MAX` and returns them.
    pub fn drain_overflow(&mut self) -> Vec<SampleRecord> {
        let excess = self.records.len().saturating_sub(self.n_max);
        self.records.drain(..excess).collect()
    }

    /// Deletion pass: drops the `N - N_MAX` earliest-produced records.
    pub fn delete_overflow(&mut self) -> usize {
        self.drain_overflow().len()
    }

    fn positions(&self, keys: &[u64]) -> Result<Vec<usize>> {
        if keys.len() != self.records.len() {
            return Err(contract(format!(
                "{} keys for {} live records",
                keys.len(),
                self.records.len()
            )));
        }
        if keys
            .iter()
            .zip(&self.records)
            .all(|(k, r)| *k == r.production_seq)
        {
            return Ok((0..keys.len()).collect());
        }
        let index: HashMap<u64, usize> = self
            .records
            .iter()
            .enumerate()
            .map(|(i, r)| (r.production_seq, i))
            .collect();
        let mut seen = vec![false; keys.len()];
        keys.iter()
            .map(|k| {
                let i = *index
                    .get(k)
                    .ok_or_else(|| contract(format!("unknown production_seq {k}")))?;
                if std::mem::replace(&mut seen[i], true) {
                    return Err(contract(format!("duplicate production_seq {k}")));
                }
                Ok(i)
            })
            .collect()
    }

    /// Replaces every weight at once. Either all weights change or none do.
    pub fn set_weights(&mut self, new_weights: &[(u64, f64)]) -> Result<()> {
        let keys: Vec<u64> = new_weights.iter().map(|(k, _)| *k).collect();
        let pos = self.positions(&keys)?;
        for (_, w) in new_weights {
            check_weight(*w)?;
        }
        for (&i, (_, w)) in pos.iter().zip(new_weights) {
            self.records[i].weight = *w;
        }
        Ok(())
    }

    /// Replaces every value, leaving weights and production metadata alone.
    pub fn replace_values(&mut self, transformed: Vec<(u64, Vec<f64>)>) -> Result<()> {
        let keys: Vec<u64> = transformed.iter().map(|(k, _)| *k).collect();
        let pos = self.positions(&keys)?;
        for (i, (_, v)) in pos.into_iter().zip(transformed) {
            self.records[i].value = v;
        }
        Ok(())
    }

    /// Consistent copy of the current contents.
    pub fn snapshot(&self) -> Snapshot {
        Snapshot {
            records: self.records.iter().cloned().collect(),
            n_max: self.n_max,
            target: self.target,
        }
    }

    /// Writes the store in the flat little-endian record format:
    /// header `(dimension: u64, target: u64)` followed by one
    /// `(production_seq: u64, info_cutoff: u64, weight: f64, value: [f64; dimension])`
    /// per record.
    pub fn save(&self, path: &Path, dimension: usize) -> Result<()> {
        let mut out = BufWriter::new(File::create(path)?);
        out.write_all(&(dimension as u64).to_le_bytes())?;
        out.write_all(&self.target.to_le_bytes())?;
        for r in &self.records {
            if r.value.len() != dimension {
                return Err(Error::DimensionMismatch {
                    expected: dimension,
                    got: r.value.len(),
                });
            }
            out.write_all(&r.production_seq.to_le_bytes())?;
            out.write_all(&r.info_cutoff.to_le_bytes())?;
            out.write_all(&r.weight.to_le_bytes())?;
            for x in &r.value {
                out.write_all(&x.to_le_bytes())?;
            }
        }
        out.flush()?;
        Ok(())
    }

    /// Reads a file written by [`SampleDatabase::save`] into this store,
    /// replacing its records and target.
    pub fn load(&mut self, path: &Path, expected_dimension: usize) -> Result<()> {
        let mut bytes = Vec::new();
        BufReader::new(File::open(path)?).read_to_end(&mut bytes)?;
        if bytes.len() < 16 {
            return Err(Error::Corrupt(format!(
                "{}: truncated header",
                path.display()
            )));
        }
        let word = |i: usize| -> [u8; 8] { bytes[i..i + 8].try_into().expect("8 bytes") };
        let dimension = u64::from_le_bytes(word(0)) as usize;
        if dimension != expected_dimension {
            return Err(Error::Corrupt(format!(
                "{}: dimension {dimension} in header, expected {expected_dimension}",
                path.display()
            )));
        }
        let target = u64::from_le_bytes(word(8));
        let stride = 8 * (3 + dimension);
        let body = bytes.len() - 16;
        if body % stride != 0 {
            return Err(Error::Corrupt(format!(
                "{}: {body} record bytes is not a multiple of {stride}",
                path.display()
            )));
        }
        let mut records = VecDeque::with_capacity(body / stride);
        let mut last: Option<u64> = None;
        for start in (16..bytes.len()).step_by(stride) {
            let production_seq = u64::from_le_bytes(word(start));
            let info_cutoff = u64::from_le_bytes(word(start + 8));
            let weight = f64::from_le_bytes(word(start + 16));
            if check_weight(weight).is_err() || last.is_some_and(|l| production_seq <= l) {
                return Err(Error::Corrupt(format!(
                    "{}: bad record with production_seq {production_seq}",
                    path.display()
                )));
            }
            last = Some(production_seq);
            let value = (0..dimension)
                .map(|j| f64::from_le_bytes(word(start + 24 + 8 * j)))
                .collect();
            records.push_back(SampleRecord {
                value,
                weight,
                production_seq,
                info_cutoff,
            });
        }
        self.records = records;
        self.target = target;
        Ok(())
    }
}

/// Immutable view of the store at one instant.
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub records: Vec<SampleRecord>,
    pub n_max: usize,
    pub target: u64,
}

impl Snapshot {
    pub fn weights(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.weight).collect()
    }
}

/// A [`SampleDatabase`] behind a reader-writer lock. Every mutation and every
/// snapshot holds the lock for its whole duration, so readers see either the
/// state before or after a mutation and never a mix.
#[derive(Debug, Clone)]
pub struct SharedStore(Arc<RwLock<SampleDatabase>>);

impl SharedStore {
    pub fn new(db: SampleDatabase) -> Self {
        Self(Arc::new(RwLock::new(db)))
    }

    pub fn read(&self) -> RwLockReadGuard<'_, SampleDatabase> {
        self.0.read().unwrap_or_else(|e| e.into_inner())
    }

    pub fn write(&self) -> RwLockWriteGuard<'_, SampleDatabase> {
        self.0.write().unwrap_or_else(|e| e.into_inner())
    }

    pub fn snapshot(&self) -> Snapshot {
        self.read().snapshot()
    }
}
