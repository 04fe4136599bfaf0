//! Episodic memory: a fixed Gaussian random projection of state-action pairs
//! and an append-only table of `(key, Monte-Carlo return)` records queried by
//! exhaustive K-nearest-neighbour search.

use std::io::{Read, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The matrix `M ∈ R^{u×v}` of `x ↦ Mx`, entries `N(0, 1/u)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ProjectionMatrix {
    rows: usize,
    cols: usize,
    /// row-major `rows × cols`
    data: Vec<f64>,
    seed: u64,
}

impl ProjectionMatrix {
    pub fn new(projected_dim: usize, input_dim: usize, seed: u64) -> Result<Self> {
        if projected_dim == 0 || input_dim == 0 {
            return Err(Error::InvalidArgument(
                "projection dimensions must be non-zero".into(),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, 1.0 / (projected_dim as f64).sqrt())
            .expect("positive standard deviation");
        let data = (0..projected_dim * input_dim)
            .map(|_| normal.sample(&mut rng))
            .collect();
        Ok(Self {
            rows: projected_dim,
            cols: input_dim,
            data,
            seed,
        })
    }

    pub fn projected_dim(&self) -> usize {
        self.rows
    }

    pub fn input_dim(&self) -> usize {
        self.cols
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn entries(&self) -> &[f64] {
        &self.data
    }

    /// Writes `Mx` into `out`.
    pub fn project_into(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        if x.len() != self.cols {
            return Err(Error::DimensionMismatch {
                context: "projection input",
                expected: self.cols,
                got: x.len(),
            });
        }
        if out.len() != self.rows {
            return Err(Error::DimensionMismatch {
                context: "projection output",
                expected: self.rows,
                got: out.len(),
            });
        }
        for (row, o) in self.data.chunks_exact(self.cols).zip(out.iter_mut()) {
            *o = row.iter().zip(x).map(|(m, xi)| m * xi).sum();
        }
        Ok(())
    }

    pub fn project(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.rows];
        self.project_into(x, &mut out)?;
        Ok(out)
    }

    /// Projects the concatenation `[state, action]` without allocating it.
    pub fn project_pair(&self, state: &[f64], action: &[f64]) -> Result<Vec<f64>> {
        if state.len() + action.len() != self.cols {
            return Err(Error::DimensionMismatch {
                context: "projection input",
                expected: self.cols,
                got: state.len() + action.len(),
            });
        }
        let out = self
            .data
            .chunks_exact(self.cols)
            .map(|row| {
                let (rs, ra) = row.split_at(state.len());
                rs.iter().zip(state).map(|(m, x)| m * x).sum::<f64>()
                    + ra.iter().zip(action).map(|(m, x)| m * x).sum::<f64>()
            })
            .collect();
        Ok(out)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OverflowPolicy {
    /// Adding past capacity is an error.
    #[default]
    Error,
    /// Overwrite the oldest record.
    Ring,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MemoryRecord {
    pub key: Vec<f64>,
    pub value: f64,
}

/// Result of one K-NN lookup.
#[derive(Clone, Debug, PartialEq)]
pub struct Lookup {
    /// Weighted episodic return `Σ w_k q_k`.
    pub value: f64,
    /// Table indices of the neighbours, nearest first.
    pub indices: Vec<usize>,
    /// Softmax weights aligned with `indices`.
    pub weights: Vec<f64>,
    /// `‖z − z_k‖² + ε` aligned with `indices`.
    pub distances: Vec<f64>,
}

/// Append-only key/value table.
#[derive(Clone, Debug)]
pub struct MemoryTable {
    key_dim: usize,
    capacity: usize,
    epsilon: f64,
    overflow: OverflowPolicy,
    /// row-major `len × key_dim`
    keys: Vec<f64>,
    /// the same keys column-major, one vector per dimension, for scanning
    columns: Vec<Vec<f64>>,
    values: Vec<f64>,
    /// next slot to overwrite once a ring table is full
    cursor: usize,
}

impl MemoryTable {
    pub fn new(key_dim: usize, capacity: usize, epsilon: f64) -> Result<Self> {
        if key_dim == 0 || capacity == 0 {
            return Err(Error::InvalidArgument(
                "memory key dimension and capacity must be non-zero".into(),
            ));
        }
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "epsilon must be > 0, got {epsilon}"
            )));
        }
        Ok(Self {
            key_dim,
            capacity,
            epsilon,
            overflow: OverflowPolicy::Error,
            keys: Vec::new(),
            columns: vec![Vec::new(); key_dim],
            values: Vec::new(),
            cursor: 0,
        })
    }

    pub fn with_overflow(mut self, policy: OverflowPolicy) -> Self {
        self.overflow = policy;
        self
    }

    pub fn key_dim(&self) -> usize {
        self.key_dim
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn key(&self, index: usize) -> &[f64] {
        &self.keys[index * self.key_dim..(index + 1) * self.key_dim]
    }

    pub fn value(&self, index: usize) -> f64 {
        self.values[index]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn record(&self, index: usize) -> MemoryRecord {
        MemoryRecord {
            key: self.key(index).to_vec(),
            value: self.values[index],
        }
    }

    /// Appends a record. No duplicate search is performed.
    pub fn add(&mut self, key: &[f64], value: f64) -> Result<()> {
        if key.len() != self.key_dim {
            return Err(Error::DimensionMismatch {
                context: "memory key",
                expected: self.key_dim,
                got: key.len(),
            });
        }
        if !value.is_finite() || !key.iter().all(|k| k.is_finite()) {
            return Err(Error::NonFinite("memory record"));
        }
        if self.len() < self.capacity {
            self.keys.extend_from_slice(key);
            for (column, &x) in self.columns.iter_mut().zip(key) {
                column.push(x);
            }
            self.values.push(value);
            return Ok(());
        }
        match self.overflow {
            OverflowPolicy::Error => Err(Error::CapacityExceeded {
                capacity: self.capacity,
            }),
            OverflowPolicy::Ring => {
                let slot = self.cursor;
                self.keys[slot * self.key_dim..(slot + 1) * self.key_dim].copy_from_slice(key);
                for (column, &x) in self.columns.iter_mut().zip(key) {
                    column[slot] = x;
                }
                self.values[slot] = value;
                self.cursor = (slot + 1) % self.capacity;
                Ok(())
            }
        }
    }

    fn check_query(&self, query: &[f64], k: usize) -> Result<()> {
        if self.is_empty() {
            return Err(Error::EmptyMemory);
        }
        if k == 0 || k > self.len() {
            return Err(Error::KOutOfRange {
                k,
                size: self.len(),
            });
        }
        if query.len() != self.key_dim {
            return Err(Error::DimensionMismatch {
                context: "memory query",
                expected: self.key_dim,
                got: query.len(),
            });
        }
        Ok(())
    }

    /// K nearest records under `d(z, z_i) = ‖z − z_i‖² + ε`, weighted by a
    /// softmax of the negative distances over the retrieved set. Ties keep the
    /// lower table index.
    pub fn lookup(&self, query: &[f64], k: usize) -> Result<Lookup> {
        self.check_query(query, k)?;
        let best = nearest(&self.columns, query, k);
        let distances: Vec<f64> = best.iter().map(|&(d, _)| d + self.epsilon).collect();
        let indices: Vec<usize> = best.iter().map(|&(_, i)| i).collect();
        // shift by the smallest distance; the softmax is unchanged
        let nearest = distances[0];
        let exps: Vec<f64> = distances.iter().map(|d| (nearest - d).exp()).collect();
        let total: f64 = exps.iter().sum();
        let weights: Vec<f64> = exps.iter().map(|e| e / total).collect();
        let value = weights
            .iter()
            .zip(&indices)
            .map(|(w, &i)| w * self.values[i])
            .sum();
        Ok(Lookup {
            value,
            indices,
            weights,
            distances,
        })
    }

    /// `lookup(..).value` for each row of a row-major `B × key_dim` matrix.
    pub fn batch_lookup(&self, queries: &[f64], k: usize) -> Result<Vec<f64>> {
        if !queries.len().is_multiple_of(self.key_dim) {
            return Err(Error::DimensionMismatch {
                context: "batched memory queries",
                expected: self.key_dim,
                got: queries.len() % self.key_dim,
            });
        }
        queries
            .chunks_exact(self.key_dim)
            .map(|q| self.lookup(q, k).map(|l| l.value))
            .collect()
    }

    /// Snapshot layout, little-endian: `u64 key_dim`, `u64 count`, then
    /// `count × key_dim` f64 keys row-major, then `count` f64 values.
    pub fn write_snapshot<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(&(self.key_dim as u64).to_le_bytes())?;
        w.write_all(&(self.len() as u64).to_le_bytes())?;
        for v in self.keys.iter().chain(&self.values) {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    /// Reads a snapshot into a table of the given capacity and ε.
    pub fn read_snapshot<R: Read>(mut r: R, capacity: usize, epsilon: f64) -> Result<Self> {
        let mut word = [0u8; 8];
        r.read_exact(&mut word)?;
        let key_dim = u64::from_le_bytes(word) as usize;
        r.read_exact(&mut word)?;
        let count = u64::from_le_bytes(word) as usize;
        if count > capacity {
            return Err(Error::CapacityExceeded { capacity });
        }
        let mut table = Self::new(key_dim, capacity, epsilon)?;
        let mut read_f64 = |r: &mut R| -> Result<f64> {
            r.read_exact(&mut word)?;
            Ok(f64::from_le_bytes(word))
        };
        let keys = (0..count * key_dim)
            .map(|_| read_f64(&mut r))
            .collect::<Result<Vec<_>>>()?;
        let values = (0..count)
            .map(|_| read_f64(&mut r))
            .collect::<Result<Vec<_>>>()?;
        for (key, value) in keys.chunks_exact(key_dim.max(1)).zip(values) {
            table.add(key, value)?;
        }
        Ok(table)
    }
}

const SCAN_BLOCK: usize = 256;

/// Exhaustive scan for the `k` smallest squared distances, ascending, ties
/// to the lower index.
fn nearest(columns: &[Vec<f64>], query: &[f64], k: usize) -> Vec<(f64, usize)> {
    #[cfg(target_arch = "x86_64")]
    {
        if is_x86_feature_detected!("avx512f") {
            // SAFETY: the CPU supports the enabled features.
            return unsafe { nearest_avx512(columns, query, k) };
        }
        if is_x86_feature_detected!("avx2") {
            // SAFETY: as above.
            return unsafe { nearest_avx2(columns, query, k) };
        }
    }
    nearest_scan(columns, query, k)
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2,avx512f")]
unsafe fn nearest_avx512(columns: &[Vec<f64>], query: &[f64], k: usize) -> Vec<(f64, usize)> {
    nearest_scan(columns, query, k)
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2")]
unsafe fn nearest_avx2(columns: &[Vec<f64>], query: &[f64], k: usize) -> Vec<(f64, usize)> {
    nearest_scan(columns, query, k)
}

#[inline(always)]
fn nearest_scan(columns: &[Vec<f64>], query: &[f64], k: usize) -> Vec<(f64, usize)> {
    let n = columns.first().map_or(0, Vec::len);
    let mut best: Vec<(f64, usize)> = Vec::with_capacity(k + 1);
    let mut worst = f64::INFINITY;
    let mut block = [0.0f64; SCAN_BLOCK];
    let mut start = 0;
    while start < n {
        let len = SCAN_BLOCK.min(n - start);
        let dist = &mut block[..len];
        dist.fill(0.0);
        for (column, &q) in columns.iter().zip(query) {
            for (d, &x) in dist.iter_mut().zip(&column[start..start + len]) {
                let t = q - x;
                *d += t * t;
            }
        }
        if dist.iter().fold(false, |hit, &d| hit | (d < worst)) {
            for (j, &d) in dist.iter().enumerate() {
                if d >= worst {
                    continue;
                }
                let pos = best.partition_point(|&(bd, _)| bd <= d);
                best.insert(pos, (d, start + j));
                best.truncate(k);
                if best.len() == k {
                    worst = best[k - 1].0;
                }
            }
        }
        start += len;
    }
    best
}

/// Projection plus table, advanced in lockstep with the replay buffer.
#[derive(Clone, Debug)]
pub struct EpisodicMemory {
    pub projection: ProjectionMatrix,
    pub table: MemoryTable,
}

impl EpisodicMemory {
    pub fn new(projection: ProjectionMatrix, table: MemoryTable) -> Result<Self> {
        if projection.projected_dim() != table.key_dim() {
            return Err(Error::ShapeMismatch(format!(
                "projection produces {} dims, table keys have {}",
                projection.projected_dim(),
                table.key_dim()
            )));
        }
        Ok(Self { projection, table })
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }

    pub fn add(&mut self, state: &[f64], action: &[f64], mc_return: f64) -> Result<()> {
        let key = self.projection.project_pair(state, action)?;
        self.table.add(&key, mc_return)
    }

    /// Episodic estimate `Q_M` for each `(state, action)` row pair.
    pub fn estimate(
        &self,
        states: ndarray::ArrayView2<f64>,
        actions: ndarray::ArrayView2<f64>,
        k: usize,
    ) -> Result<Vec<f64>> {
        let u = self.projection.projected_dim();
        let mut queries = Vec::with_capacity(states.nrows() * u);
        for (s, a) in states.rows().into_iter().zip(actions.rows()) {
            let s = s.to_vec();
            let a = a.to_vec();
            queries.extend(self.projection.project_pair(&s, &a)?);
        }
        self.table.batch_lookup(&queries, k)
    }
}
