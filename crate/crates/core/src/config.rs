//! Experiment configuration (TOML) with fail-closed parsing.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::PressureSpace;
use crate::mesh::{Mesh, ObstacleGeometry, StepGeometry};
use crate::ns::SolverSettings;
use crate::quadrature::Family;
use crate::stability::{EigenSettings, DEFAULT_DELTA};
use crate::surrogates::{GpSettings, NnSettings};
use crate::viscosity::ViscosityKind;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Benchmark {
    Obstacle,
    Step,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshConfig {
    pub nx: usize,
    pub ny: usize,
    /// Obstacle channel length.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub length: Option<f64>,
    /// Obstacle box `[x0, x1, y0, y1]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub obstacle: Option<[f64; 4]>,
    /// Geometric grading ratio of the obstacle grid.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stretch: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inlet_length: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outlet_length: Option<f64>,
}

impl MeshConfig {
    pub fn build(&self, benchmark: Benchmark) -> Result<Mesh> {
        match benchmark {
            Benchmark::Obstacle => {
                if self.inlet_length.is_some() || self.outlet_length.is_some() {
                    return Err(Error::Config("inlet_length/outlet_length apply to the step benchmark only".into()));
                }
                let d = ObstacleGeometry::default();
                ObstacleGeometry {
                    length: self.length.unwrap_or(d.length),
                    obstacle: self.obstacle.unwrap_or(d.obstacle),
                    nx: self.nx,
                    ny: self.ny,
                    stretch: self.stretch,
                }
                .build()
            }
            Benchmark::Step => {
                if self.length.is_some() || self.obstacle.is_some() || self.stretch.is_some() {
                    return Err(Error::Config("length/obstacle/stretch apply to the obstacle benchmark only".into()));
                }
                let d = StepGeometry::default();
                StepGeometry {
                    inlet_length: self.inlet_length.unwrap_or(d.inlet_length),
                    outlet_length: self.outlet_length.unwrap_or(d.outlet_length),
                    nx: self.nx,
                    ny: self.ny,
                }
                .build()
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ViscosityConfig {
    pub kind: ViscosityKind,
    pub nu1: f64,
    /// Coefficients of variation; train and assess run once per entry.
    pub cov: Vec<f64>,
    /// Stochastic dimension.
    pub m: usize,
    /// Total degree of the solution expansion.
    pub p: usize,
    /// Correlation lengths as fractions of the domain width and height.
    pub correlation: [f64; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EigenConfig {
    pub k: usize,
    pub shifts: Vec<[f64; 2]>,
    pub seed: u64,
    pub tol: f64,
    pub max_restarts: usize,
    /// Mass shift on the constraint block.
    #[serde(default = "default_delta")]
    pub delta: f64,
}

fn default_delta() -> f64 {
    DEFAULT_DELTA
}

impl EigenConfig {
    pub fn settings(&self) -> EigenSettings {
        EigenSettings {
            k: self.k,
            shifts: self.shifts.clone(),
            seed: self.seed,
            tol: self.tol,
            max_restarts: self.max_restarts,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SurrogateKind {
    Sc,
    Gp,
    Nn,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurrogateConfig {
    pub kinds: Vec<SurrogateKind>,
    /// Keep every `stride`-th grid node for GP and NN training.
    #[serde(default = "one")]
    pub stride: usize,
    #[serde(default)]
    pub gp: GpSettings,
    #[serde(default)]
    pub nn: NnSettings,
}

fn one() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonteCarloConfig {
    pub n: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub cache: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub benchmark: Benchmark,
    pub pressure: PressureSpace,
    pub mesh: MeshConfig,
    pub viscosity: ViscosityConfig,
    pub solver: SolverSettings,
    pub eigen: EigenConfig,
    /// Smolyak level of the collocation grid.
    pub level: usize,
    pub surrogates: SurrogateConfig,
    pub monte_carlo: MonteCarloConfig,
    pub output: OutputConfig,
    /// Worker threads; 0 uses all logical cores.
    #[serde(default)]
    pub workers: usize,
}

/// Everything a simulator run depends on, for one coefficient of variation.
/// Its serialization is the cache fingerprint input.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulatorSpec {
    pub benchmark: Benchmark,
    pub pressure: PressureSpace,
    pub mesh: MeshConfig,
    pub kind: ViscosityKind,
    pub nu1: f64,
    pub cov: f64,
    pub m: usize,
    pub p: usize,
    pub correlation: [f64; 2],
    pub solver: SolverSettings,
    pub eigen: EigenConfig,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn family(&self) -> Family {
        self.viscosity.kind.family()
    }

    pub fn validate(&self) -> Result<()> {
        let v = &self.viscosity;
        let expected = match self.benchmark {
            Benchmark::Obstacle => ViscosityKind::Lognormal,
            Benchmark::Step => ViscosityKind::Affine,
        };
        if v.kind != expected {
            return Err(Error::Config(format!(
                "{:?} benchmark uses a {:?} viscosity",
                self.benchmark, expected
            )));
        }
        if !(v.nu1 > 0.0) {
            return Err(Error::Config("nu1 must be positive".into()));
        }
        if v.cov.is_empty() || v.cov.iter().any(|c| !(*c >= 0.0)) {
            return Err(Error::Config("cov must be a nonempty list of nonnegative values".into()));
        }
        if v.m == 0 || v.p == 0 {
            return Err(Error::Config("m and p must be at least 1".into()));
        }
        if v.correlation.iter().any(|c| !(*c > 0.0)) {
            return Err(Error::Config("correlation fractions must be positive".into()));
        }
        self.solver.validate()?;
        if self.eigen.k < 2 || self.eigen.shifts.is_empty() {
            return Err(Error::Config("eigen.k must be at least 2 and shifts nonempty".into()));
        }
        if !(self.eigen.delta < 0.0) {
            return Err(Error::Config("eigen.delta must be negative".into()));
        }
        if self.level == 0 {
            return Err(Error::Config("level must be at least 1".into()));
        }
        if self.surrogates.stride == 0 {
            return Err(Error::Config("surrogates.stride must be at least 1".into()));
        }
        if self.monte_carlo.n == 0 {
            return Err(Error::Config("monte_carlo.n must be at least 1".into()));
        }
        Ok(())
    }

    pub fn simulator_spec(&self, cov: f64) -> SimulatorSpec {
        SimulatorSpec {
            benchmark: self.benchmark,
            pressure: self.pressure,
            mesh: self.mesh.clone(),
            kind: self.viscosity.kind,
            nu1: self.viscosity.nu1,
            cov,
            m: self.viscosity.m,
            p: self.viscosity.p,
            correlation: self.viscosity.correlation,
            solver: self.solver,
            eigen: self.eigen.clone(),
        }
    }

    /// Output directory for one coefficient of variation.
    pub fn cov_dir(&self, cov: f64) -> PathBuf {
        self.output.dir.join(format!("cov-{}", cov_label(cov)))
    }
}

/// `0.01 -> "1%"`-style label without the percent sign, e.g. `"1"`, `"10"`.
pub fn cov_label(cov: f64) -> String {
    let pct = cov * 100.0;
    if (pct - pct.round()).abs() < 1e-9 {
        format!("{}", pct.round() as i64)
    } else {
        format!("{pct}")
    }
}
