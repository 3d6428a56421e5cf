//! Real-basis Clebsch-Gordan coupling tables.
//!
//! Complex coefficients come from the Racah formula; they are conjugated with
//! the complex→real change of basis that matches [`super::sh`]. The result is
//! either purely real or purely imaginary, and is rescaled to a real matrix
//! `Q` of shape `(2J+1) × (2ℓ+1)(2k+1)` with orthonormal rows.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const ZERO_TOL: f64 = 1e-14;

/// Sparse coupling table for `ℓ ⊗ k → J`.
#[derive(Debug, Clone, PartialEq)]
pub struct CgTable {
    pub l: usize,
    pub k: usize,
    pub j: usize,
    /// `(m₁ index, m₂ index, m index, coefficient)`, indices in `0..2·deg+1`.
    pub entries: Vec<(usize, usize, usize, f64)>,
}

impl CgTable {
    pub fn rows(&self) -> usize {
        2 * self.j + 1
    }

    pub fn cols(&self) -> usize {
        (2 * self.l + 1) * (2 * self.k + 1)
    }

    /// Dense row-major `Q[m, m₁·(2k+1) + m₂]`.
    pub fn to_dense(&self) -> Vec<f64> {
        let cols = self.cols();
        let dk = 2 * self.k + 1;
        let mut q = vec![0.0; self.rows() * cols];
        for &(m1, m2, m, c) in &self.entries {
            q[m * cols + m1 * dk + m2] = c;
        }
        q
    }

    fn from_dense(l: usize, k: usize, j: usize, q: &[f64]) -> Self {
        let dk = 2 * k + 1;
        let cols = (2 * l + 1) * dk;
        let mut entries = Vec::new();
        for m in 0..(2 * j + 1) {
            for m1 in 0..(2 * l + 1) {
                for m2 in 0..dk {
                    let c = q[m * cols + m1 * dk + m2];
                    if c.abs() > ZERO_TOL {
                        entries.push((m1, m2, m, c));
                    }
                }
            }
        }
        Self { l, k, j, entries }
    }
}

pub fn triangle_ok(l: usize, k: usize, j: usize) -> bool {
    l.abs_diff(k) <= j && j <= l + k
}

/// Real coupling coefficients for `ℓ ⊗ k → J`.
pub fn cg_table(l: usize, k: usize, j: usize) -> Result<CgTable> {
    if !triangle_ok(l, k, j) {
        return Err(Error::domain(format!(
            "J={j} violates the triangle inequality for ℓ={l}, k={k}"
        )));
    }
    let dl = 2 * l + 1;
    let dk = 2 * k + 1;
    let dj = 2 * j + 1;
    let ul = real_from_complex(l);
    let uk = real_from_complex(k);
    let uj = real_from_complex(j);

    let mut q = vec![Complex64::new(0.0, 0.0); dj * dl * dk];
    for mr in 0..dj {
        for &(mc, u_j) in &uj[mr] {
            for m1r in 0..dl {
                for &(m1c, u_l) in &ul[m1r] {
                    for m2r in 0..dk {
                        for &(m2c, u_k) in &uk[m2r] {
                            let (m1, m2, m) = (
                                m1c as i64 - l as i64,
                                m2c as i64 - k as i64,
                                mc as i64 - j as i64,
                            );
                            if m1 + m2 != m {
                                continue;
                            }
                            let c = complex_cg(l, m1, k, m2, j, m);
                            q[mr * dl * dk + m1r * dk + m2r] += u_j * c * u_l.conj() * u_k.conj();
                        }
                    }
                }
            }
        }
    }

    let re_max = q.iter().map(|z| z.re.abs()).fold(0.0, f64::max);
    let im_max = q.iter().map(|z| z.im.abs()).fold(0.0, f64::max);
    let (mut real, residual): (Vec<f64>, f64) = if re_max >= im_max {
        (q.iter().map(|z| z.re).collect(), im_max)
    } else {
        (q.iter().map(|z| z.im).collect(), re_max)
    };
    debug_assert!(
        residual < 1e-12,
        "real CG ({l},{k},{j}) has mixed phase {residual:e}"
    );

    // Fix the arbitrary overall sign: first significant entry positive.
    if let Some(first) = real.iter().find(|c| c.abs() > 1e-12) {
        if *first < 0.0 {
            real.iter_mut().for_each(|c| *c = -*c);
        }
    }
    Ok(CgTable::from_dense(l, k, j, &real))
}

/// Rows of the unitary `U` with `Y_real = U · Y_complex`, as sparse
/// `(complex index, value)` lists. Complex harmonics carry the Condon-Shortley
/// phase.
fn real_from_complex(l: usize) -> Vec<Vec<(usize, Complex64)>> {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let li = l as i64;
    let idx = |m: i64| (m + li) as usize;
    (-li..=li)
        .map(|m| {
            if m == 0 {
                vec![(idx(0), Complex64::new(1.0, 0.0))]
            } else if m > 0 {
                let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
                vec![
                    (idx(m), Complex64::new(sign * s, 0.0)),
                    (idx(-m), Complex64::new(s, 0.0)),
                ]
            } else {
                let mu = -m;
                let sign = if mu % 2 == 0 { 1.0 } else { -1.0 };
                vec![
                    (idx(-mu), Complex64::new(0.0, s)),
                    (idx(mu), Complex64::new(0.0, -sign * s)),
                ]
            }
        })
        .collect()
}

fn factorial(n: i64) -> f64 {
    debug_assert!(n >= 0);
    (1..=n).fold(1.0, |acc, t| acc * t as f64)
}

/// `⟨j₁ m₁ j₂ m₂ | J M⟩` (Condon-Shortley convention) via the Racah formula.
pub fn complex_cg(j1: usize, m1: i64, j2: usize, m2: i64, j: usize, m: i64) -> f64 {
    let (j1, j2, j) = (j1 as i64, j2 as i64, j as i64);
    if m1 + m2 != m || m1.abs() > j1 || m2.abs() > j2 || m.abs() > j {
        return 0.0;
    }
    if j < (j1 - j2).abs() || j > j1 + j2 {
        return 0.0;
    }
    let pref = ((2 * j + 1) as f64
        * factorial(j + j1 - j2)
        * factorial(j - j1 + j2)
        * factorial(j1 + j2 - j)
        / factorial(j1 + j2 + j + 1))
    .sqrt()
        * (factorial(j + m)
            * factorial(j - m)
            * factorial(j1 - m1)
            * factorial(j1 + m1)
            * factorial(j2 - m2)
            * factorial(j2 + m2))
        .sqrt();
    let kmin = 0.max(j2 - j - m1).max(j1 + m2 - j);
    let kmax = (j1 + j2 - j).min(j1 - m1).min(j2 + m2);
    let mut sum = 0.0;
    for t in kmin..=kmax {
        let denom = factorial(t)
            * factorial(j1 + j2 - j - t)
            * factorial(j1 - m1 - t)
            * factorial(j2 + m2 - t)
            * factorial(j - j2 + m1 + t)
            * factorial(j - j1 - m2 + t);
        let sign = if t % 2 == 0 { 1.0 } else { -1.0 };
        sum += sign / denom;
    }
    pref * sum
}

/// All coupling tables with input degrees `≤ max_in` and output degree
/// `≤ max_out`, immutable once built.
#[derive(Debug, Clone)]
pub struct CgCache {
    max_in: usize,
    max_out: usize,
    tables: BTreeMap<(usize, usize, usize), CgTable>,
}

#[derive(Debug, Serialize, Deserialize)]
struct CacheIndex {
    max_in: usize,
    max_out: usize,
    tables: Vec<CacheEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct CacheEntry {
    l: usize,
    k: usize,
    j: usize,
    rows: usize,
    cols: usize,
    file: String,
}

const INDEX_FILE: &str = "cg_index.json";

impl CgCache {
    pub fn build(max_in: usize, max_out: usize) -> Self {
        let mut tables = BTreeMap::new();
        for l in 0..=max_in {
            for k in 0..=max_in {
                for j in l.abs_diff(k)..=(l + k).min(max_out) {
                    let t = cg_table(l, k, j).expect("triangle checked");
                    tables.insert((l, k, j), t);
                }
            }
        }
        Self {
            max_in,
            max_out,
            tables,
        }
    }

    pub fn max_in(&self) -> usize {
        self.max_in
    }

    pub fn max_out(&self) -> usize {
        self.max_out
    }

    pub fn get(&self, l: usize, k: usize, j: usize) -> Result<&CgTable> {
        self.tables
            .get(&(l, k, j))
            .ok_or_else(|| Error::domain(format!("no cached coupling table for ({l}, {k}, {j})")))
    }

    /// Writes one little-endian f64 blob per table plus a JSON index.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut entries = Vec::with_capacity(self.tables.len());
        for (&(l, k, j), table) in &self.tables {
            let file = format!("cg_{l}_{k}_{j}.bin");
            let path = dir.join(&file);
            let mut bytes = Vec::with_capacity(table.rows() * table.cols() * 8);
            for v in table.to_dense() {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
            fs::File::create(&path)
                .and_then(|mut f| f.write_all(&bytes))
                .map_err(|e| Error::io(&path, e))?;
            entries.push(CacheEntry {
                l,
                k,
                j,
                rows: table.rows(),
                cols: table.cols(),
                file,
            });
        }
        let index = CacheIndex {
            max_in: self.max_in,
            max_out: self.max_out,
            tables: entries,
        };
        let path = dir.join(INDEX_FILE);
        fs::write(&path, serde_json::to_vec_pretty(&index)?).map_err(|e| Error::io(&path, e))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let index_path = dir.join(INDEX_FILE);
        let raw = fs::read(&index_path).map_err(|e| Error::io(&index_path, e))?;
        let index: CacheIndex = serde_json::from_slice(&raw)?;
        let mut tables = BTreeMap::new();
        for e in index.tables {
            let path = dir.join(&e.file);
            let bytes = fs::read(&path).map_err(|err| Error::io(&path, err))?;
            let expected_cols = (2 * e.l + 1) * (2 * e.k + 1);
            if e.rows != 2 * e.j + 1
                || e.cols != expected_cols
                || bytes.len() != e.rows * e.cols * 8
            {
                return Err(Error::Corrupt {
                    path,
                    message: format!("table ({}, {}, {}) has inconsistent shape", e.l, e.k, e.j),
                });
            }
            let dense: Vec<f64> = bytes
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            tables.insert((e.l, e.k, e.j), CgTable::from_dense(e.l, e.k, e.j, &dense));
        }
        Ok(Self {
            max_in: index.max_in,
            max_out: index.max_out,
            tables,
        })
    }

    /// Loads the cache from `dir` when it covers the requested degrees,
    /// otherwise rebuilds and rewrites it.
    pub fn load_or_build(dir: &Path, max_in: usize, max_out: usize) -> Result<Self> {
        if let Ok(cache) = Self::load(dir) {
            if cache.max_in >= max_in && cache.max_out >= max_out {
                return Ok(cache);
            }
        }
        let cache = Self::build(max_in, max_out);
        cache.save(dir)?;
        Ok(cache)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_coupling_is_one() {
        let t = cg_table(0, 0, 0).unwrap();
        assert_eq!(t.entries, vec![(0, 0, 0, 1.0)]);
    }

    #[test]
    fn triangle_violation_is_rejected() {
        assert!(cg_table(1, 1, 3).is_err());
        assert!(cg_table(3, 1, 1).is_err());
    }

    #[test]
    fn racah_known_values() {
        // ⟨1 1 1 -1 | 0 0⟩ = 1/√3, ⟨1/2 ...⟩ not representable; use integer spins.
        assert!((complex_cg(1, 1, 1, -1, 0, 0) - 1.0 / 3f64.sqrt()).abs() < 1e-15);
        assert!((complex_cg(1, 0, 1, 0, 0, 0) + 1.0 / 3f64.sqrt()).abs() < 1e-15);
        assert!((complex_cg(1, 1, 1, 0, 2, 1) - (0.5f64).sqrt()).abs() < 1e-15);
        assert!((complex_cg(2, 0, 1, 0, 1, 0) + (2.0f64 / 5.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn dot_product_coupling() {
        let t = cg_table(1, 1, 0).unwrap();
        assert_eq!(t.entries.len(), 3);
        for &(m1, m2, m, c) in &t.entries {
            assert_eq!(m1, m2);
            assert_eq!(m, 0);
            assert!((c.abs() - 1.0 / 3f64.sqrt()).abs() < 1e-14);
        }
        let signs: Vec<f64> = t.entries.iter().map(|e| e.3.signum()).collect();
        assert!(signs.iter().all(|s| *s == signs[0]));
    }

    #[test]
    fn cache_round_trips_through_disk() {
        let dir = tempfile::tempdir().unwrap();
        let built = CgCache::build(2, 2);
        built.save(dir.path()).unwrap();
        let loaded = CgCache::load(dir.path()).unwrap();
        assert_eq!(built.tables, loaded.tables);
        let again = CgCache::load_or_build(dir.path(), 2, 2).unwrap();
        assert_eq!(again.tables.len(), built.tables.len());
    }

    #[test]
    fn truncated_cache_blob_is_corrupt() {
        let dir = tempfile::tempdir().unwrap();
        CgCache::build(1, 1).save(dir.path()).unwrap();
        let blob = dir.path().join("cg_1_1_1.bin");
        let bytes = fs::read(&blob).unwrap();
        fs::write(&blob, &bytes[..bytes.len() - 8]).unwrap();
        assert!(matches!(
            CgCache::load(dir.path()),
            Err(Error::Corrupt { .. })
        ));
        // regenerated when the stored copy is unusable
        let rebuilt = CgCache::load_or_build(dir.path(), 1, 1).unwrap();
        assert!(rebuilt.get(1, 1, 1).is_ok());
    }
}
