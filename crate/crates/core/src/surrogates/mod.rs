//! Emulators of the rightmost eigenvalue `xi -> Re(lambda)`.
//!
//! Three surrogates share a [`TrainingSet`]: stochastic collocation
//! ([`ScSurrogate`]), Gaussian-process regression ([`GpSurrogate`]) and a
//! shallow neural network ([`NnSurrogate`]).

pub mod gp;
pub mod nn;
pub mod sc;

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::SparseGrid;
pub use gp::{gp_train, GpSettings, GpSurrogate};
pub use nn::{nn_train, NnSettings, NnSurrogate};
pub use sc::{sc_train, ScSurrogate};

/// Format version of serialized surrogate documents.
pub const FORMAT_VERSION: u32 = 1;

/// Standardization `(lambda - mean) / std` of targets.
///
/// When all targets are equal the mean is the common value and `std` is 1,
/// so scaled targets are exactly zero.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub mean: f64,
    pub std: f64,
    pub enabled: bool,
}

impl Scaler {
    pub fn identity() -> Self {
        Self {
            mean: 0.0,
            std: 1.0,
            enabled: false,
        }
    }

    pub fn fit(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 || values.iter().all(|v| *v == values[0]) {
            return Self {
                mean: values.first().copied().unwrap_or(0.0),
                std: 1.0,
                enabled: false,
            };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0).max(1.0);
        Self {
            mean,
            std: var.sqrt(),
            enabled: true,
        }
    }

    pub fn scale(&self, v: f64) -> f64 {
        (v - self.mean) / self.std
    }

    pub fn descale(&self, v: f64) -> f64 {
        self.std * v + self.mean
    }
}

/// Inputs and targets used to build a surrogate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingSet {
    pub inputs: Vec<Vec<f64>>,
    /// Real part of the rightmost eigenvalue.
    pub targets: Vec<f64>,
    /// Optional imaginary channel (Im >= 0 member of a conjugate pair).
    #[serde(default)]
    pub imag: Option<Vec<f64>>,
    /// Quadrature weights when the inputs are a sparse grid.
    #[serde(default)]
    pub weights: Option<Vec<f64>>,
    pub scaler: Scaler,
}

impl TrainingSet {
    pub fn new(inputs: Vec<Vec<f64>>, targets: Vec<f64>) -> Result<Self> {
        if inputs.len() != targets.len() {
            return Err(Error::Dimension(format!(
                "{} inputs but {} targets",
                inputs.len(),
                targets.len()
            )));
        }
        if inputs.len() < 2 {
            return Err(Error::Parameter("a training set needs at least 2 points".into()));
        }
        let dim = inputs[0].len();
        if dim == 0 || inputs.iter().any(|x| x.len() != dim) {
            return Err(Error::Dimension("training inputs have inconsistent dimension".into()));
        }
        if targets.iter().chain(inputs.iter().flatten()).any(|v| !v.is_finite()) {
            return Err(Error::Training("training data contains non-finite values".into()));
        }
        let scaler = Scaler::fit(&targets);
        Ok(Self {
            inputs,
            targets,
            imag: None,
            weights: None,
            scaler,
        })
    }

    /// Training set on the nodes of a sparse grid, keeping its weights.
    pub fn from_grid(grid: &SparseGrid, targets: Vec<f64>) -> Result<Self> {
        let mut set = Self::new(grid.nodes.clone(), targets)?;
        set.weights = Some(grid.weights.clone());
        Ok(set)
    }

    pub fn with_imag(mut self, imag: Vec<f64>) -> Result<Self> {
        if imag.len() != self.len() {
            return Err(Error::Dimension("imaginary channel length mismatch".into()));
        }
        self.imag = Some(imag);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.inputs[0].len()
    }

    pub fn scaled_targets(&self) -> Vec<f64> {
        self.targets.iter().map(|v| self.scaler.scale(*v)).collect()
    }

    /// Every `stride`-th point in index order, starting with the first.
    /// Grid weights are dropped since the subset is no longer a rule.
    pub fn subsample(&self, stride: usize) -> Result<Self> {
        if stride == 0 {
            return Err(Error::Parameter("stride must be at least 1".into()));
        }
        let idx: Vec<usize> = (0..self.len()).step_by(stride).collect();
        let mut set = Self::new(
            idx.iter().map(|&i| self.inputs[i].clone()).collect(),
            idx.iter().map(|&i| self.targets[i]).collect(),
        )?;
        if stride == 1 {
            set.weights = self.weights.clone();
        }
        if let Some(im) = &self.imag {
            set.imag = Some(idx.iter().map(|&i| im[i]).collect());
        }
        Ok(set)
    }
}

/// Stride that keeps roughly `ratio` of the points.
pub fn stride_for_ratio(ratio: f64) -> Result<usize> {
    if !(ratio > 0.0 && ratio <= 1.0) {
        return Err(Error::Parameter(format!("training ratio {ratio} must lie in (0, 1]")));
    }
    Ok((1.0 / ratio).round().max(1.0) as usize)
}

/// Number of points kept by [`TrainingSet::subsample`].
pub fn subsample_count(n: usize, stride: usize) -> usize {
    n.div_ceil(stride)
}

/// Grid training set reduced by stride, for GP and NN training.
pub fn subsample_training(grid: &SparseGrid, targets: &[f64], stride: usize) -> Result<TrainingSet> {
    TrainingSet::from_grid(grid, targets.to_vec())?.subsample(stride)
}

/// Where a surrogate's training data came from.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    #[serde(default)]
    pub grid: Option<String>,
    #[serde(default)]
    pub stride: Option<usize>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub viscosity: Option<serde_json::Value>,
    /// Resolved experiment configuration.
    #[serde(default)]
    pub config: Option<serde_json::Value>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Surrogate {
    Sc(ScSurrogate),
    Gp(GpSurrogate),
    Nn(NnSurrogate),
}

#[derive(Serialize, Deserialize)]
struct Document {
    version: u32,
    #[serde(default)]
    provenance: Provenance,
    surrogate: Surrogate,
}

impl Surrogate {
    pub fn name(&self) -> &'static str {
        match self {
            Surrogate::Sc(_) => "sc",
            Surrogate::Gp(_) => "gp",
            Surrogate::Nn(_) => "nn",
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Surrogate::Sc(s) => s.basis.dim,
            Surrogate::Gp(g) => g.design[0].len(),
            Surrogate::Nn(n) => n.dim(),
        }
    }

    pub fn eval(&self, xi: &[f64]) -> f64 {
        match self {
            Surrogate::Sc(s) => s.eval(xi),
            Surrogate::Gp(g) => g.eval(xi),
            Surrogate::Nn(n) => n.eval(xi),
        }
    }

    pub fn eval_batch(&self, xs: &[Vec<f64>]) -> Result<Vec<f64>> {
        let d = self.dim();
        if let Some(bad) = xs.iter().find(|x| x.len() != d) {
            return Err(Error::Dimension(format!("point of dimension {} for a {d}-dimensional surrogate", bad.len())));
        }
        Ok(xs.iter().map(|x| self.eval(x)).collect())
    }

    pub fn to_json(&self, provenance: &Provenance) -> Result<String> {
        let doc = Document {
            version: FORMAT_VERSION,
            provenance: provenance.clone(),
            surrogate: self.clone(),
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    pub fn from_json(text: &str) -> Result<(Self, Provenance)> {
        let doc: Document = serde_json::from_str(text)?;
        if doc.version != FORMAT_VERSION {
            return Err(Error::Config(format!(
                "surrogate format version {} is not supported (expected {FORMAT_VERSION})",
                doc.version
            )));
        }
        let mut s = doc.surrogate;
        if let Surrogate::Gp(g) = &mut s {
            g.refactor()?;
        }
        Ok((s, doc.provenance))
    }

    pub fn save(&self, path: &Path, provenance: &Provenance) -> Result<()> {
        std::fs::write(path, self.to_json(provenance)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<(Self, Provenance)> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Rows of comma-separated numbers; blank lines and a non-numeric header
/// line are skipped.
pub fn read_points_csv(reader: impl Read) -> Result<Vec<Vec<f64>>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(reader);
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Config(format!("csv: {e}")))?;
        if rec.iter().all(|f| f.is_empty()) {
            continue;
        }
        let parsed: std::result::Result<Vec<f64>, _> = rec.iter().map(|f| f.parse::<f64>()).collect();
        match parsed {
            Ok(v) => rows.push(v),
            Err(_) if i == 0 => continue,
            Err(e) => return Err(Error::Config(format!("csv row {}: {e}", i + 1))),
        }
    }
    Ok(rows)
}

pub fn write_values_csv(mut writer: impl Write, header: &str, values: &[f64]) -> Result<()> {
    writeln!(writer, "{header}")?;
    for v in values {
        writeln!(writer, "{v:.17e}")?;
    }
    Ok(())
}
