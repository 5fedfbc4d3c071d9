//! Train and assess runs driven by an [`ExperimentConfig`].
//!
//! Each coefficient of variation gets its own simulator, output directory
//! and set of surrogate files. Simulator calls go through an [`EvalCache`].

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::assess::{build_report, evaluate_points, monte_carlo, EvalCache, McResult, Report, SampleSet};
use crate::config::{ExperimentConfig, SurrogateKind};
use crate::error::{Error, Result};
use crate::quadrature::{smolyak, SparseGrid};
use crate::simulator::{SimRecord, Simulator};
use crate::surrogates::{
    gp_train, nn_train, sc_train, subsample_training, Provenance, Surrogate, TrainingSet,
};
use crate::viscosity::GpcBasis;

/// Wall-clock seconds spent in each phase.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub simulator_total: f64,
    /// Simulator seconds divided by the number of points requested.
    pub simulator_per_sample: f64,
    pub train: Vec<(String, f64)>,
    pub eval: Vec<(String, f64)>,
}

impl Timings {
    pub fn lines(&self) -> Vec<String> {
        let mut out = vec![format!(
            "simulator: {:.3} s total, {:.4} s per sample",
            self.simulator_total, self.simulator_per_sample
        )];
        out.extend(self.train.iter().map(|(k, t)| format!("train {k}: {t:.4} s")));
        out.extend(self.eval.iter().map(|(k, t)| format!("eval {k}: {t:.6} s")));
        out
    }
}

pub struct TrainedModels {
    pub cov: f64,
    pub grid: SparseGrid,
    pub records: Vec<SimRecord>,
    pub models: Vec<(Surrogate, Provenance)>,
    pub timings: Timings,
}

impl TrainedModels {
    pub fn get(&self, name: &str) -> Option<&Surrogate> {
        self.models.iter().map(|(s, _)| s).find(|s| s.name() == name)
    }

    pub fn named(&self) -> Vec<(&str, &Surrogate)> {
        self.models.iter().map(|(s, _)| (s.name(), s)).collect()
    }
}

/// Runs `f` on a pool of `workers` threads; 0 means all logical cores.
pub fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    Ok(pool.install(f))
}

pub fn collocation_grid(cfg: &ExperimentConfig) -> Result<SparseGrid> {
    smolyak(cfg.viscosity.m, cfg.level, cfg.family())
}

fn provenance(cfg: &ExperimentConfig, sim: &Simulator, grid: &SparseGrid, stride: usize, seed: Option<u64>) -> Result<Provenance> {
    Ok(Provenance {
        grid: Some(format!(
            "smolyak dim={} level={} family={:?} n_q={}",
            grid.dim,
            grid.level,
            grid.family,
            grid.len()
        )),
        stride: Some(stride),
        seed,
        viscosity: Some(serde_json::to_value(sim.model.description())?),
        config: Some(serde_json::to_value(cfg)?),
    })
}

/// Simulator at every grid node, then the requested surrogates. SC always
/// uses the full grid; GP and NN use every `stride`-th node.
pub fn train(
    cfg: &ExperimentConfig,
    sim: &Simulator,
    cache: &EvalCache,
    kinds: &[SurrogateKind],
    stride: usize,
) -> Result<TrainedModels> {
    let grid = collocation_grid(cfg)?;
    let t0 = Instant::now();
    let records = evaluate_points(sim, cache, &grid.nodes)?;
    let sim_time = t0.elapsed().as_secs_f64();
    if let Some((i, r)) = records.iter().enumerate().find(|(_, r)| !r.ok()) {
        return Err(Error::Training(format!(
            "simulator failed at grid node {i}: {}",
            r.failure.as_deref().unwrap_or("")
        )));
    }
    let re: Vec<f64> = records.iter().map(|r| r.re).collect();
    let im: Vec<f64> = records.iter().map(|r| r.im).collect();

    let mut timings = Timings {
        simulator_total: sim_time,
        simulator_per_sample: sim_time / grid.len() as f64,
        ..Timings::default()
    };
    let mut models = Vec::new();
    let mut sub: Option<TrainingSet> = None;
    for kind in kinds {
        let t = Instant::now();
        let (model, prov) = match kind {
            SurrogateKind::Sc => {
                let basis = GpcBasis::new(cfg.family(), cfg.viscosity.m, cfg.viscosity.p);
                let s = sc_train(&grid, &re, Some(&im), &basis)?;
                (Surrogate::Sc(s), provenance(cfg, sim, &grid, 1, None)?)
            }
            SurrogateKind::Gp => {
                let set = match &sub {
                    Some(s) => s,
                    None => sub.insert(subsample_training(&grid, &re, stride)?),
                };
                let g = gp_train(set, &cfg.surrogates.gp)?;
                (Surrogate::Gp(g), provenance(cfg, sim, &grid, stride, None)?)
            }
            SurrogateKind::Nn => {
                let set = match &sub {
                    Some(s) => s,
                    None => sub.insert(subsample_training(&grid, &re, stride)?),
                };
                let n = nn_train(set, &cfg.surrogates.nn)?;
                let seed = cfg.surrogates.nn.seed;
                (Surrogate::Nn(n), provenance(cfg, sim, &grid, stride, Some(seed))?)
            }
        };
        timings.train.push((model.name().to_string(), t.elapsed().as_secs_f64()));
        models.push((model, prov));
    }
    Ok(TrainedModels {
        cov: sim.spec.cov,
        grid,
        records,
        models,
        timings,
    })
}

pub fn surrogate_path(dir: &Path, kind: SurrogateKind) -> PathBuf {
    dir.join(format!("{}.json", kind_name(kind)))
}

fn kind_name(kind: SurrogateKind) -> &'static str {
    match kind {
        SurrogateKind::Sc => "sc",
        SurrogateKind::Gp => "gp",
        SurrogateKind::Nn => "nn",
    }
}

fn write_config(cfg: &ExperimentConfig, dir: &Path) -> Result<()> {
    std::fs::write(dir.join("config.toml"), cfg.to_toml()?)?;
    Ok(())
}

/// Writes one JSON file per surrogate plus `training.csv` (nodes, weights
/// and simulator outputs) and the resolved `config.toml`.
pub fn write_models(cfg: &ExperimentConfig, trained: &TrainedModels, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    write_config(cfg, dir)?;
    let mut written = Vec::new();
    for (model, prov) in &trained.models {
        let path = dir.join(format!("{}.json", model.name()));
        model.save(&path, prov)?;
        written.push(path);
    }
    let g = &trained.grid;
    let mut csv = String::new();
    let cols: Vec<String> = (1..=g.dim).map(|j| format!("xi{j}")).collect();
    let _ = writeln!(csv, "{},weight,re,im", cols.join(","));
    for ((x, w), r) in g.nodes.iter().zip(&g.weights).zip(&trained.records) {
        let row: Vec<String> = x.iter().map(|v| format!("{v:.17e}")).collect();
        let _ = writeln!(csv, "{},{w:.17e},{:.17e},{:.17e}", row.join(","), r.re, r.im);
    }
    let path = dir.join("training.csv");
    std::fs::write(&path, csv)?;
    written.push(path);
    Ok(written)
}

/// Loads the surrogate files for `kinds` from `dir`.
pub fn load_models(dir: &Path, kinds: &[SurrogateKind]) -> Result<Vec<Surrogate>> {
    kinds
        .iter()
        .map(|k| {
            let path = surrogate_path(dir, *k);
            if !path.exists() {
                return Err(Error::Config(format!("missing surrogate file {}", path.display())));
            }
            Surrogate::load(&path).map(|(s, _)| s)
        })
        .collect()
}

pub struct Assessment {
    pub report: Report,
    pub samples: SampleSet,
    pub mc: McResult,
    pub timings: Timings,
}

/// Monte Carlo reference on the configured sample set and the metrics of
/// every surrogate in `models` on the same draws.
pub fn assess(cfg: &ExperimentConfig, sim: &Simulator, cache: &EvalCache, models: &[Surrogate]) -> Result<Assessment> {
    let mc_cfg = &cfg.monte_carlo;
    let samples = SampleSet::generate(mc_cfg.n, cfg.viscosity.m, cfg.family(), mc_cfg.seed);
    let t0 = Instant::now();
    let mc = monte_carlo(sim, cache, &samples)?;
    let sim_time = t0.elapsed().as_secs_f64();
    let mut timings = Timings {
        simulator_total: sim_time,
        simulator_per_sample: sim_time / samples.len() as f64,
        ..Timings::default()
    };
    for m in models {
        let t = Instant::now();
        m.eval_batch(&samples.draws)?;
        timings.eval.push((m.name().to_string(), t.elapsed().as_secs_f64()));
    }
    let named: Vec<(&str, &Surrogate)> = models.iter().map(|m| (m.name(), m)).collect();
    let report = build_report(sim.spec.cov, &samples, &mc, &named)?;
    Ok(Assessment {
        report,
        samples,
        mc,
        timings,
    })
}

#[derive(Serialize)]
struct ReportDocument<'a> {
    config: &'a ExperimentConfig,
    report: &'a Report,
}

/// Writes `report.json` (with the resolved config), `table.csv`, `kde.csv`,
/// `samples.csv` and `config.toml` into `dir`.
pub fn write_assessment(cfg: &ExperimentConfig, a: &Assessment, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    write_config(cfg, dir)?;
    let doc = ReportDocument {
        config: cfg,
        report: &a.report,
    };
    let files = [
        ("report.json", serde_json::to_string_pretty(&doc)?),
        ("table.csv", a.report.table_csv()),
        ("kde.csv", a.report.kde_csv()),
        ("samples.csv", a.samples.to_csv()),
    ];
    let mut written = Vec::new();
    for (name, text) in files {
        let path = dir.join(name);
        std::fs::write(&path, text)?;
        written.push(path);
    }
    Ok(written)
}

/// Cache at the configured path, or in memory when `path` is `None`.
pub fn open_cache(path: Option<&Path>) -> Result<EvalCache> {
    match path {
        Some(p) => {
            if let Some(parent) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(parent)?;
            }
            EvalCache::open(p)
        }
        None => Ok(EvalCache::in_memory()),
    }
}
