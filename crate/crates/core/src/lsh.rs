//! Multi-table LSH index over gradient feature vectors.
//!
//! Each hash function is `floor((alpha . v + beta) / r)` with `alpha` drawn
//! from a 1-stable (Cauchy) distribution, so collision probability decays
//! with the l1 distance between vectors. `k` functions are concatenated into
//! one bucket key per table, and `L` independent tables are built. A query
//! keeps only IDs that collide in at least `t` tables and stops once
//! `max_candidates` such IDs have been found.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, WriteBytesExt};
use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::codec::{write_f64s, OffsetReader};
use crate::error::{param, Result};
use crate::features::feature_energy;

/// Unique integer ID of a training patch pair.
pub type PatchId = u64;

pub const INDEX_MAGIC: &[u8; 6] = b"PZLSH1";

/// Lower bound on `|b|` when sampling `a / b` Cauchy variates.
pub const CAUCHY_EPSILON: f64 = 1e-6;

/// Draws `dim` standard Cauchy variates as ratios of two standard normals,
/// rejecting denominators smaller than `epsilon` in magnitude.
pub fn sample_cauchy<R: Rng + ?Sized>(dim: usize, epsilon: f64, rng: &mut R) -> Vec<f64> {
    (0..dim)
        .map(|_| {
            let a: f64 = rng.sample(StandardNormal);
            let b: f64 = loop {
                let b: f64 = rng.sample(StandardNormal);
                if b.abs() >= epsilon {
                    break b;
                }
            };
            a / b
        })
        .collect()
}

#[inline]
fn dot<T: Copy + Into<f64>>(a: &[f64], v: &[T]) -> f64 {
    a.iter().zip(v).map(|(&x, &y)| x * y.into()).sum()
}

/// One p-stable projection hash.
#[derive(Debug, Clone, PartialEq)]
pub struct HashFunction {
    alpha: Vec<f64>,
    beta: f64,
    r: f64,
}

impl HashFunction {
    pub fn new(alpha: Vec<f64>, beta: f64, r: f64) -> Result<Self> {
        if !(r > 0.0) || !r.is_finite() {
            return param(format!("bucket width r must be positive, got {r}"));
        }
        if !(0.0..=r).contains(&beta) {
            return param(format!("beta {beta} outside [0, {r}]"));
        }
        if alpha.iter().any(|a| !a.is_finite()) {
            return param("projection vector has non-finite entries");
        }
        Ok(Self { alpha, beta, r })
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    pub fn dim(&self) -> usize {
        self.alpha.len()
    }

    #[inline]
    fn hash_unchecked<T: Copy + Into<f64>>(&self, v: &[T]) -> i64 {
        ((dot(&self.alpha, v) + self.beta) / self.r).floor() as i64
    }

    /// `floor((alpha . v + beta) / r)`.
    pub fn hash<T: Copy + Into<f64>>(&self, v: &[T]) -> Result<i64> {
        if v.len() != self.alpha.len() {
            return param(format!(
                "feature dimension {} does not match hash dimension {}",
                v.len(),
                self.alpha.len()
            ));
        }
        Ok(self.hash_unchecked(v))
    }
}

pub fn hash_one<T: Copy + Into<f64>>(h: &HashFunction, v: &[T]) -> Result<i64> {
    h.hash(v)
}

/// `k` concatenated hash functions and the buckets they induce.
#[derive(Debug, Clone, PartialEq)]
pub struct HashTable {
    functions: Vec<HashFunction>,
    buckets: HashMap<Vec<i64>, Vec<PatchId>>,
}

impl HashTable {
    pub fn functions(&self) -> &[HashFunction] {
        &self.functions
    }

    pub fn key<T: Copy + Into<f64>>(&self, v: &[T]) -> Vec<i64> {
        self.functions.iter().map(|h| h.hash_unchecked(v)).collect()
    }

    pub fn bucket(&self, key: &[i64]) -> &[PatchId] {
        self.buckets.get(key).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn bucket_count(&self) -> usize {
        self.buckets.len()
    }

    pub fn len(&self) -> usize {
        self.buckets.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.buckets.is_empty()
    }

    /// Buckets in ascending key order.
    pub fn sorted_buckets(&self) -> Vec<(&Vec<i64>, &Vec<PatchId>)> {
        let mut v: Vec<_> = self.buckets.iter().collect();
        v.sort_unstable_by(|a, b| a.0.cmp(b.0));
        v
    }

    /// Base-2 Shannon entropy of the bucket occupancy distribution.
    pub fn entropy(&self) -> f64 {
        table_entropy(self)
    }
}

pub fn table_entropy(table: &HashTable) -> f64 {
    let n = table.len() as f64;
    if n == 0.0 {
        return 0.0;
    }
    let h: f64 = table
        .buckets
        .values()
        .map(|b| {
            let p = b.len() as f64 / n;
            -p * p.log2()
        })
        .sum();
    h.max(0.0)
}

/// Energy gate for gradient features of `[0, 1]` images: one 8-bit
/// quantization step.
pub const DEFAULT_MIN_ENERGY: f64 = 1.0 / 255.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LshParams {
    /// Hash functions concatenated per table.
    pub k: usize,
    /// Number of tables.
    pub l: usize,
    /// Minimum number of tables an ID must collide in.
    pub t: usize,
    /// Bucket width.
    pub r: f64,
    /// Query stops after this many qualifying IDs.
    pub max_candidates: usize,
    pub seed: u64,
    /// Features whose mean absolute value is below this are neither indexed
    /// nor searched. Zero disables the gate.
    pub min_energy: f64,
}

impl Default for LshParams {
    fn default() -> Self {
        Self {
            k: 3,
            l: 30,
            t: 2,
            r: 1.0,
            max_candidates: 90,
            seed: 42,
            min_energy: 0.0,
        }
    }
}

impl LshParams {
    /// Defaults with `L` tables and the `3 L` candidate cap.
    pub fn with_tables(l: usize) -> Self {
        Self {
            l,
            max_candidates: 3 * l,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k < 1 {
            return param("k must be >= 1");
        }
        if self.t < 1 || self.t > self.l {
            return param(format!("need L >= t >= 1, got L={} t={}", self.l, self.t));
        }
        if !(self.r > 0.0) || !self.r.is_finite() {
            return param(format!("bucket width r must be positive, got {}", self.r));
        }
        if self.max_candidates < 1 {
            return param("max_candidates must be >= 1");
        }
        if !(self.min_energy >= 0.0) || !self.min_energy.is_finite() {
            return param(format!("min_energy must be finite and >= 0, got {}", self.min_energy));
        }
        Ok(())
    }

    /// True if a feature is too flat to be indexed or searched.
    pub fn gated<T: Copy + Into<f64>>(&self, v: &[T]) -> bool {
        self.min_energy > 0.0 && feature_energy(v) < self.min_energy
    }
}

/// IDs returned by a query and the number of bucket entries examined to
/// produce them (the similarity-operation count).
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct QueryResult {
    pub ids: Vec<PatchId>,
    pub touched: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LshIndex {
    params: LshParams,
    dim: usize,
    tables: Vec<HashTable>,
}

/// Builds the index; all `L * k` hash functions come from one stream seeded
/// with `params.seed`, drawn table by table.
pub fn build_index<T, V>(features: &[(PatchId, V)], params: &LshParams) -> Result<LshIndex>
where
    T: Copy + Into<f64> + Sync,
    V: AsRef<[T]> + Sync,
{
    params.validate()?;
    let Some(first) = features.first() else {
        return param("cannot build an index from an empty feature set");
    };
    let dim = first.1.as_ref().len();
    if dim == 0 {
        return param("feature vectors are empty");
    }
    if let Some((id, _)) = features.iter().find(|(_, v)| v.as_ref().len() != dim) {
        return param(format!("feature for patch {id} does not have dimension {dim}"));
    }

    let features: Vec<&(PatchId, V)> = features.iter().filter(|(_, v)| !params.gated(v.as_ref())).collect();
    if features.is_empty() {
        return param("no feature passes the energy gate");
    }

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut function_sets = Vec::with_capacity(params.l);
    for _ in 0..params.l {
        let mut fs = Vec::with_capacity(params.k);
        for _ in 0..params.k {
            let alpha = sample_cauchy(dim, CAUCHY_EPSILON, &mut rng);
            let beta = rng.random::<f64>() * params.r;
            fs.push(HashFunction::new(alpha, beta, params.r)?);
        }
        function_sets.push(fs);
    }

    let tables = function_sets
        .into_par_iter()
        .map(|functions| {
            let mut table = HashTable {
                functions,
                buckets: HashMap::new(),
            };
            for &(id, v) in &features {
                let key = table.key(v.as_ref());
                table.buckets.entry(key).or_default().push(*id);
            }
            table
        })
        .collect();

    Ok(LshIndex {
        params: *params,
        dim,
        tables,
    })
}

impl LshIndex {
    pub fn params(&self) -> &LshParams {
        &self.params
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn tables(&self) -> &[HashTable] {
        &self.tables
    }

    /// Distinct IDs stored in the first table (every table holds all of them).
    pub fn len(&self) -> usize {
        self.tables.first().map_or(0, HashTable::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Walks the matching bucket of each table in table order, counting how
    /// many tables each ID collides in. An ID is emitted the moment its count
    /// reaches `t`; the walk ends once `max_candidates` IDs were emitted.
    pub fn query<T: Copy + Into<f64>>(&self, v: &[T]) -> Result<QueryResult> {
        if v.len() != self.dim {
            return param(format!(
                "query dimension {} does not match index dimension {}",
                v.len(),
                self.dim
            ));
        }
        let t = self.params.t as u32;
        let cap = self.params.max_candidates;
        let mut counts: HashMap<PatchId, u32> = HashMap::new();
        let mut out = QueryResult::default();
        'tables: for table in &self.tables {
            let key = table.key(v);
            for &id in table.bucket(&key) {
                out.touched += 1;
                let c = counts.entry(id).or_insert(0);
                *c += 1;
                if *c == t {
                    out.ids.push(id);
                    if out.ids.len() >= cap {
                        break 'tables;
                    }
                }
            }
        }
        Ok(out)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_from(BufReader::new(File::open(path)?))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to a Vec cannot fail");
        buf
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        let p = &self.params;
        w.write_all(INDEX_MAGIC)?;
        w.write_u32::<LittleEndian>(self.dim as u32)?;
        w.write_u32::<LittleEndian>(p.k as u32)?;
        w.write_u32::<LittleEndian>(p.l as u32)?;
        w.write_f64::<LittleEndian>(p.r)?;
        w.write_u32::<LittleEndian>(p.t as u32)?;
        w.write_u64::<LittleEndian>(p.seed)?;
        w.write_u32::<LittleEndian>(p.max_candidates as u32)?;
        w.write_f64::<LittleEndian>(p.min_energy)?;
        for table in &self.tables {
            for h in &table.functions {
                write_f64s(w, &h.alpha)?;
                w.write_f64::<LittleEndian>(h.beta)?;
            }
            let buckets = table.sorted_buckets();
            w.write_u64::<LittleEndian>(buckets.len() as u64)?;
            for (key, ids) in buckets {
                for &k in key {
                    w.write_i64::<LittleEndian>(k)?;
                }
                w.write_u64::<LittleEndian>(ids.len() as u64)?;
                for &id in ids {
                    w.write_u64::<LittleEndian>(id)?;
                }
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(reader: R) -> Result<Self> {
        let mut r = OffsetReader::new(reader);
        let magic = r.bytes("magic", INDEX_MAGIC.len())?;
        if magic != INDEX_MAGIC {
            return Err(crate::Error::Format {
                offset: 0,
                message: "bad magic, not an LSH index file".into(),
            });
        }
        let dim = r.u32("feature dim")? as usize;
        let k = r.u32("k")? as usize;
        let l = r.u32("L")? as usize;
        let rw = r.f64("r")?;
        let t = r.u32("t")? as usize;
        let seed = r.u64("seed")?;
        let max_candidates = r.u32("max candidates")? as usize;
        let min_energy = r.f64("min energy")?;
        let params = LshParams {
            k,
            l,
            t,
            r: rw,
            max_candidates,
            seed,
            min_energy,
        };
        if let Err(e) = params.validate() {
            return r.fail(format!("invalid header: {e}"));
        }
        if dim == 0 {
            return r.fail("invalid header: zero feature dimension");
        }

        let mut tables = Vec::with_capacity(l);
        for _ in 0..l {
            let mut functions = Vec::with_capacity(k);
            for _ in 0..k {
                let mut alpha = vec![0.0; dim];
                r.f64_into("projection", &mut alpha)?;
                let beta = r.f64("beta")?;
                match HashFunction::new(alpha, beta, rw) {
                    Ok(h) => functions.push(h),
                    Err(e) => return r.fail(format!("invalid hash function: {e}")),
                }
            }
            let n_buckets = r.u64("bucket count")?;
            let mut buckets = HashMap::new();
            for _ in 0..n_buckets {
                let mut key = Vec::with_capacity(k);
                for _ in 0..k {
                    key.push(r.i64("bucket key")?);
                }
                let count = r.u64("bucket size")?;
                let mut ids = Vec::new();
                for _ in 0..count {
                    ids.push(r.u64("patch id")?);
                }
                if buckets.insert(key, ids).is_some() {
                    return r.fail("duplicate bucket key");
                }
            }
            tables.push(HashTable { functions, buckets });
        }
        r.expect_end()?;
        Ok(LshIndex {
            params,
            dim,
            tables,
        })
    }
}

/// Outcome of bucket-width tuning.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TunedR {
    pub r: f64,
    /// Mean occupancy of non-empty buckets at the returned `r`.
    pub mean_occupancy: f64,
    /// Projections carried no spread; `r` fell back to 1.0.
    pub degenerate: bool,
}

/// Picks `r` so that one Cauchy projection of `samples` gives a mean
/// non-empty bucket occupancy within 50% of `target_mean_bucket`.
pub fn tune_r<V: AsRef<[f64]>>(samples: &[V], target_mean_bucket: usize, seed: u64) -> Result<TunedR> {
    tune_r_for_table(samples, 1, target_mean_bucket, seed)
}

/// Same as [`tune_r`] but occupancy is measured on the joint key of
/// `functions` concatenated projections, i.e. a whole table.
pub fn tune_r_for_table<V: AsRef<[f64]>>(
    samples: &[V],
    functions: usize,
    target_mean_bucket: usize,
    seed: u64,
) -> Result<TunedR> {
    if samples.len() < 100 {
        return param(format!("r tuning needs at least 100 samples, got {}", samples.len()));
    }
    if functions < 1 || target_mean_bucket < 1 {
        return param("functions and target occupancy must be >= 1");
    }
    let dim = samples[0].as_ref().len();
    if samples.iter().any(|s| s.as_ref().len() != dim) {
        return param("samples have inconsistent dimensions");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let projections: Vec<Vec<f64>> = (0..functions)
        .map(|_| {
            let alpha = sample_cauchy(dim, CAUCHY_EPSILON, &mut rng);
            samples.iter().map(|s| dot(&alpha, s.as_ref())).collect()
        })
        .collect();
    Ok(r_for_projections(&projections, target_mean_bucket))
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

fn mean_occupancy(projections: &[Vec<f64>], r: f64) -> f64 {
    let n = projections[0].len();
    let mut keys: Vec<Vec<i64>> = (0..n)
        .map(|i| projections.iter().map(|p| (p[i] / r).floor() as i64).collect())
        .collect();
    keys.sort_unstable();
    keys.dedup();
    n as f64 / keys.len() as f64
}

/// Bucket width for precomputed projections (`functions x samples`).
///
/// Starts from `2 IQR / B`, where `B` is the number of buckets per function
/// that would give the target mean occupancy, then brackets and bisects in
/// log space. Scaling every projection by a power of two scales the result by
/// the same factor exactly.
pub fn r_for_projections(projections: &[Vec<f64>], target_mean_bucket: usize) -> TunedR {
    let n = projections[0].len();
    let target = target_mean_bucket as f64;

    let spreads: Vec<f64> = projections
        .iter()
        .map(|p| {
            let mut s = p.clone();
            s.sort_unstable_by(f64::total_cmp);
            let iqr = quantile(&s, 0.75) - quantile(&s, 0.25);
            if iqr > 0.0 {
                iqr
            } else {
                s[s.len() - 1] - s[0]
            }
        })
        .collect();
    let spread = spreads.iter().sum::<f64>() / spreads.len() as f64;
    if !(spread > 0.0) || !spread.is_finite() {
        warn!("projections have no spread; using r = 1.0");
        return TunedR {
            r: 1.0,
            mean_occupancy: n as f64,
            degenerate: true,
        };
    }

    let buckets_per_fn = (n as f64 / target).max(1.0).powf(1.0 / projections.len() as f64);
    let within = |occ: f64| occ >= 0.5 * target && occ <= 1.5 * target;

    let mut r = 2.0 * spread / buckets_per_fn;
    let mut occ = mean_occupancy(projections, r);
    let mut best = (r, occ);
    let closer = |best: (f64, f64), cand: (f64, f64)| {
        if (cand.1.ln() - target.ln()).abs() < (best.1.ln() - target.ln()).abs() {
            cand
        } else {
            best
        }
    };
    if within(occ) {
        return TunedR {
            r,
            mean_occupancy: occ,
            degenerate: false,
        };
    }

    // Bracket.
    let (mut lo, mut hi);
    let mut steps = 0;
    if occ < target {
        lo = r;
        loop {
            r *= 2.0;
            occ = mean_occupancy(projections, r);
            best = closer(best, (r, occ));
            steps += 1;
            if occ >= target || steps > 64 {
                hi = r;
                break;
            }
            lo = r;
        }
    } else {
        hi = r;
        loop {
            r *= 0.5;
            occ = mean_occupancy(projections, r);
            best = closer(best, (r, occ));
            steps += 1;
            if occ <= target || steps > 64 {
                lo = r;
                break;
            }
            hi = r;
        }
    }
    if within(best.1) {
        return TunedR {
            r: best.0,
            mean_occupancy: best.1,
            degenerate: false,
        };
    }

    for _ in 0..60 {
        let mid = (lo * hi).sqrt();
        let o = mean_occupancy(projections, mid);
        best = closer(best, (mid, o));
        if within(o) {
            break;
        }
        if o < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    TunedR {
        r: best.0,
        mean_occupancy: best.1,
        degenerate: false,
    }
}
