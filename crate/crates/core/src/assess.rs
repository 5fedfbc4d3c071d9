//! Monte Carlo driver, evaluation cache and the validation metrics comparing
//! surrogates with the simulator.

use std::collections::{BTreeMap, HashMap};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::quadrature::Family;
use crate::simulator::{hex, SimRecord, Simulator};
use crate::surrogates::Surrogate;

/// Random inputs for Monte Carlo, drawn from the basis family's measure.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleSet {
    pub draws: Vec<Vec<f64>>,
    pub seed: u64,
    pub family: Family,
}

impl SampleSet {
    pub fn generate(n: usize, dim: usize, family: Family, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let draws = (0..n)
            .map(|_| {
                (0..dim)
                    .map(|_| match family {
                        Family::Hermite => rng.sample(StandardNormal),
                        Family::Legendre => rng.random_range(-1.0..1.0),
                    })
                    .collect()
            })
            .collect();
        Self { draws, seed, family }
    }

    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }

    /// SHA-256 of the draws, identifying the sample set in reports.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for x in &self.draws {
            for v in x {
                h.update(v.to_le_bytes());
            }
        }
        hex(&h.finalize())
    }

    pub fn to_csv(&self) -> String {
        let dim = self.draws.first().map_or(0, |d| d.len());
        let mut out = (1..=dim).map(|j| format!("xi{j}")).collect::<Vec<_>>().join(",");
        out.push('\n');
        for x in &self.draws {
            out.push_str(&x.iter().map(|v| format!("{v:.17e}")).collect::<Vec<_>>().join(","));
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str, family: Family, seed: u64) -> Result<Self> {
        let draws = crate::surrogates::read_points_csv(text.as_bytes())?;
        Ok(Self { draws, seed, family })
    }
}

/// Cache key for a simulator call: hash of the input bytes and the simulator
/// fingerprint.
pub fn cache_key(xi: &[f64], fingerprint: &str) -> String {
    let mut h = Sha256::new();
    for v in xi {
        h.update(v.to_le_bytes());
    }
    h.update(fingerprint.as_bytes());
    hex(&h.finalize())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub key: String,
    pub fingerprint: String,
    pub xi: Vec<f64>,
    pub record: SimRecord,
}

/// Append-only JSON-lines store of simulator records.
pub struct EvalCache {
    path: Option<PathBuf>,
    map: Mutex<HashMap<String, CacheEntry>>,
    file: Mutex<Option<File>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CacheSummary {
    pub path: PathBuf,
    pub entries: usize,
    pub failed: usize,
    pub unreadable_lines: usize,
    /// Entry counts per fingerprint.
    pub fingerprints: BTreeMap<String, usize>,
}

fn read_entries(path: &Path) -> Result<(Vec<CacheEntry>, usize)> {
    if !path.exists() {
        return Ok((Vec::new(), 0));
    }
    let mut entries = Vec::new();
    let mut bad = 0;
    for line in BufReader::new(File::open(path)?).lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<CacheEntry>(&line) {
            Ok(e) => entries.push(e),
            Err(_) => bad += 1,
        }
    }
    Ok((entries, bad))
}

impl EvalCache {
    /// In-memory cache that is never written to disk.
    pub fn in_memory() -> Self {
        Self {
            path: None,
            map: Mutex::new(HashMap::new()),
            file: Mutex::new(None),
        }
    }

    pub fn open(path: &Path) -> Result<Self> {
        let (entries, _) = read_entries(path)?;
        let map = entries.into_iter().map(|e| (e.key.clone(), e)).collect();
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(Self {
            path: Some(path.to_path_buf()),
            map: Mutex::new(map),
            file: Mutex::new(Some(file)),
        })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn len(&self) -> usize {
        self.map.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Stored record for `xi`, only if it was produced under `fingerprint`.
    pub fn get(&self, xi: &[f64], fingerprint: &str) -> Option<SimRecord> {
        let key = cache_key(xi, fingerprint);
        let map = self.map.lock().unwrap();
        map.get(&key)
            .filter(|e| e.fingerprint == fingerprint && e.xi == xi)
            .map(|e| e.record.clone())
    }

    pub fn insert(&self, xi: &[f64], fingerprint: &str, record: &SimRecord) -> Result<()> {
        let entry = CacheEntry {
            key: cache_key(xi, fingerprint),
            fingerprint: fingerprint.to_string(),
            xi: xi.to_vec(),
            record: record.clone(),
        };
        if let Some(f) = self.file.lock().unwrap().as_mut() {
            writeln!(f, "{}", serde_json::to_string(&entry)?)?;
            f.flush()?;
        }
        self.map.lock().unwrap().insert(entry.key.clone(), entry);
        Ok(())
    }

    /// Adds an entry verbatim, bypassing key derivation.
    pub fn insert_raw(&self, entry: CacheEntry) {
        self.map.lock().unwrap().insert(entry.key.clone(), entry);
    }

    pub fn inspect(path: &Path) -> Result<CacheSummary> {
        let (entries, bad) = read_entries(path)?;
        let mut fingerprints = BTreeMap::new();
        for e in &entries {
            *fingerprints.entry(e.fingerprint.clone()).or_insert(0) += 1;
        }
        Ok(CacheSummary {
            path: path.to_path_buf(),
            entries: entries.len(),
            failed: entries.iter().filter(|e| !e.record.ok()).count(),
            unreadable_lines: bad,
            fingerprints,
        })
    }

    /// Deletes the cache file; returns whether one existed.
    pub fn clear(path: &Path) -> Result<bool> {
        if path.exists() {
            std::fs::remove_file(path)?;
            Ok(true)
        } else {
            Ok(false)
        }
    }
}

/// Simulator call through the cache.
pub fn run_simulator(sim: &Simulator, cache: &EvalCache, xi: &[f64]) -> Result<SimRecord> {
    if let Some(r) = cache.get(xi, sim.fingerprint()) {
        return Ok(r);
    }
    let r = sim.run(xi);
    cache.insert(xi, sim.fingerprint(), &r)?;
    Ok(r)
}

/// Simulator records for every point, in input order, computed in parallel.
pub fn evaluate_points(sim: &Simulator, cache: &EvalCache, points: &[Vec<f64>]) -> Result<Vec<SimRecord>> {
    points.par_iter().map(|x| run_simulator(sim, cache, x)).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct McResult {
    pub records: Vec<SimRecord>,
    /// Indices of successful samples.
    pub ok: Vec<usize>,
    /// `Re(lambda)` at the successful samples.
    pub values: Vec<f64>,
    pub failed: usize,
}

pub fn monte_carlo(sim: &Simulator, cache: &EvalCache, samples: &SampleSet) -> Result<McResult> {
    let records = evaluate_points(sim, cache, &samples.draws)?;
    let ok: Vec<usize> = (0..records.len()).filter(|&i| records[i].ok()).collect();
    let values = ok.iter().map(|&i| records[i].re).collect();
    let failed = records.len() - ok.len();
    Ok(McResult {
        records,
        ok,
        values,
        failed,
    })
}

pub fn rmse(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "rmse of vectors with different lengths");
    (a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len() as f64).sqrt()
}

/// Mean and population standard deviation.
pub fn moments(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mu = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / n;
    (mu, var.sqrt())
}

pub fn prob_nonneg(x: &[f64]) -> f64 {
    x.iter().filter(|v| **v >= 0.0).count() as f64 / x.len() as f64
}

/// Silverman's rule `1.06 s n^(-1/5)` with the sample standard deviation;
/// a small positive width is used for degenerate samples.
pub fn silverman_bandwidth(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mu = x.iter().sum::<f64>() / n;
    let s = (x.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / (n - 1.0).max(1.0)).sqrt();
    let h = 1.06 * s * n.powf(-0.2);
    if h > 0.0 {
        h
    } else {
        1e-6 * mu.abs().max(1e-6)
    }
}

/// Gaussian-kernel density estimate at `abscissae`.
pub fn kde(x: &[f64], abscissae: &[f64], bandwidth: f64) -> Vec<f64> {
    let norm = 1.0 / (x.len() as f64 * bandwidth * (2.0 * std::f64::consts::PI).sqrt());
    abscissae
        .par_iter()
        .map(|&t| {
            clear_upper_vector_state();
            x.iter().map(|v| (-0.5 * ((t - v) / bandwidth).powi(2)).exp()).sum::<f64>() * norm
        })
        .collect()
}

/// Dense linear algebra kernels can return with dirty upper vector
/// registers, which makes later SSE code on that thread (including libm
/// `exp`) run an order of magnitude slower.
#[inline]
fn clear_upper_vector_state() {
    #[cfg(target_arch = "x86_64")]
    if std::arch::is_x86_feature_detected!("avx") {
        // SAFETY: vzeroupper only zeroes the upper halves of the vector
        // registers, none of which hold live values at this point.
        unsafe { std::arch::asm!("vzeroupper", options(nomem, nostack, preserves_flags)) };
    }
}

/// Evenly spaced abscissae covering every sample with a margin of four
/// bandwidths.
pub fn kde_window(samples: &[&[f64]], bandwidth: f64, n: usize) -> Vec<f64> {
    let lo = samples.iter().flat_map(|s| s.iter()).fold(f64::INFINITY, |a, b| a.min(*b)) - 4.0 * bandwidth;
    let hi = samples.iter().flat_map(|s| s.iter()).fold(f64::NEG_INFINITY, |a, b| a.max(*b)) + 4.0 * bandwidth;
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

pub fn trapezoid(x: &[f64], y: &[f64]) -> f64 {
    x.windows(2).zip(y.windows(2)).map(|(a, b)| 0.5 * (a[1] - a[0]) * (b[0] + b[1])).sum()
}

/// Two-sample Kolmogorov–Smirnov statistic.
pub fn ks_distance(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        let t = a[i].min(b[j]);
        while i < a.len() && a[i] <= t {
            i += 1;
        }
        while j < b.len() && b[j] <= t {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColumnMetrics {
    pub name: String,
    /// RMSE against the simulator; absent for the simulator column.
    pub rmse: Option<f64>,
    pub mu: f64,
    pub sigma: f64,
    pub pr_nonneg: f64,
    #[serde(default)]
    pub ks: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KdeCurve {
    pub name: String,
    pub bandwidth: f64,
    pub x: Vec<f64>,
    pub density: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub cov: f64,
    pub n_mc: usize,
    pub n_failed: usize,
    pub sample_seed: u64,
    pub sample_hash: String,
    pub columns: Vec<ColumnMetrics>,
    pub kde: Vec<KdeCurve>,
}

/// Points on each KDE curve.
pub const KDE_POINTS: usize = 401;

/// Metrics for the simulator column ("mc") and each surrogate, all on the
/// successful samples of `mc`. Every KDE curve uses the Silverman bandwidth
/// of the simulator sample.
pub fn build_report(cov: f64, samples: &SampleSet, mc: &McResult, surrogates: &[(&str, &Surrogate)]) -> Result<Report> {
    if mc.values.is_empty() {
        return Err(Error::Parameter("no successful Monte Carlo samples".into()));
    }
    let points: Vec<Vec<f64>> = mc.ok.iter().map(|&i| samples.draws[i].clone()).collect();
    let mut series: Vec<(String, Vec<f64>)> = vec![("mc".into(), mc.values.clone())];
    for (name, s) in surrogates {
        series.push((name.to_string(), s.eval_batch(&points)?));
    }
    let columns = series
        .iter()
        .enumerate()
        .map(|(c, (name, v))| {
            let (mu, sigma) = moments(v);
            ColumnMetrics {
                name: name.clone(),
                rmse: (c > 0).then(|| rmse(v, &mc.values)),
                mu,
                sigma,
                pr_nonneg: prob_nonneg(v),
                ks: (c > 0).then(|| ks_distance(v, &mc.values)),
            }
        })
        .collect();
    let h = silverman_bandwidth(&mc.values);
    let refs: Vec<&[f64]> = series.iter().map(|(_, v)| v.as_slice()).collect();
    let x = kde_window(&refs, h, KDE_POINTS);
    let kde = series
        .iter()
        .map(|(name, v)| KdeCurve {
            name: name.clone(),
            bandwidth: h,
            density: kde(v, &x, h),
            x: x.clone(),
        })
        .collect();
    Ok(Report {
        cov,
        n_mc: samples.len(),
        n_failed: mc.failed,
        sample_seed: samples.seed,
        sample_hash: samples.hash(),
        columns,
        kde,
    })
}

impl Report {
    /// Rows RMSE, mu, sigma, Pr(lambda >= 0); one column per method.
    pub fn table_csv(&self) -> String {
        let mut out = String::from("metric");
        for c in &self.columns {
            out.push(',');
            out.push_str(&c.name);
        }
        out.push('\n');
        let rows: [(&str, Box<dyn Fn(&ColumnMetrics) -> String>); 4] = [
            ("rmse", Box::new(|c| c.rmse.map_or(String::new(), |v| format!("{v:.6e}")))),
            ("mu", Box::new(|c| format!("{:.6e}", c.mu))),
            ("sigma", Box::new(|c| format!("{:.6e}", c.sigma))),
            ("pr_nonneg", Box::new(|c| format!("{:.6}", c.pr_nonneg))),
        ];
        for (name, f) in rows.iter() {
            out.push_str(name);
            for c in &self.columns {
                out.push(',');
                out.push_str(&f(c));
            }
            out.push('\n');
        }
        out
    }

    /// Columns `x` then one density column per method.
    pub fn kde_csv(&self) -> String {
        let mut out = String::from("x");
        for k in &self.kde {
            out.push(',');
            out.push_str(&k.name);
        }
        out.push('\n');
        if let Some(first) = self.kde.first() {
            for (i, x) in first.x.iter().enumerate() {
                out.push_str(&format!("{x:.9e}"));
                for k in &self.kde {
                    out.push_str(&format!(",{:.9e}", k.density[i]));
                }
                out.push('\n');
            }
        }
        out
    }

    pub fn column(&self, name: &str) -> Option<&ColumnMetrics> {
        self.columns.iter().find(|c| c.name == name)
    }
}
