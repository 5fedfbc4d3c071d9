//! The simulator `xi -> rightmost eigenvalue`: viscosity realization, steady
//! Navier–Stokes solve, stability pencil and shift-invert eigensolve.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::SimulatorSpec;
use crate::error::{Error, Result};
use crate::fem::{MixedSpace, SpatialField};
use crate::ns::{NavierStokes, SteadySolution};
use crate::stability::{build_problem, rightmost, EigenResult, EigenSettings};
use crate::viscosity::{
    build_affine, build_lognormal_cov, kl_decompose, KernelParams, ViscosityKind, ViscosityModel,
};

/// Outcome of one simulator call. Failed runs keep the error text; their
/// numeric fields are zero and must not be used.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimRecord {
    pub re: f64,
    pub im: f64,
    pub paired: bool,
    #[serde(default)]
    pub failure: Option<String>,
    /// Nonlinear steps taken, including the Stokes start.
    pub steps: usize,
    pub final_ratio: f64,
    /// Digest of the nonlinear residual history.
    pub trace_digest: String,
}

impl SimRecord {
    pub fn ok(&self) -> bool {
        self.failure.is_none()
    }

    fn failed(err: &Error) -> Self {
        Self {
            re: 0.0,
            im: 0.0,
            paired: false,
            failure: Some(err.to_string()),
            steps: 0,
            final_ratio: 0.0,
            trace_digest: String::new(),
        }
    }
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub struct Simulator {
    pub spec: SimulatorSpec,
    pub space: MixedSpace,
    pub model: ViscosityModel,
    fingerprint: String,
}

impl Simulator {
    pub fn new(spec: SimulatorSpec) -> Result<Self> {
        let mesh = spec.mesh.build(spec.benchmark)?;
        let space = MixedSpace::new(mesh, spec.pressure)?;
        let [x0, x1, y0, y1] = space.mesh.bounding_box();
        let params = KernelParams {
            sigma_g: 1.0,
            lx: spec.correlation[0] * (x1 - x0),
            ly: spec.correlation[1] * (y1 - y0),
        };
        let kl = kl_decompose(&space, &params, spec.m)?;
        let model = match spec.kind {
            ViscosityKind::Lognormal => {
                let probe = [0.5 * (x0 + x1), 0.5 * (y0 + y1)];
                build_lognormal_cov(&space, spec.nu1, spec.cov, &kl, spec.m, spec.p, probe)?
            }
            ViscosityKind::Affine => build_affine(&space, spec.nu1, spec.cov, &kl, spec.m)?,
        };
        let json = serde_json::to_vec(&spec)?;
        let fingerprint = hex(&Sha256::digest(&json));
        Ok(Self {
            spec,
            space,
            model,
            fingerprint,
        })
    }

    /// Hash of the resolved simulator specification.
    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    pub fn dim(&self) -> usize {
        self.spec.m
    }

    pub fn mean_point(&self) -> Vec<f64> {
        vec![0.0; self.dim()]
    }

    pub fn viscosity(&self, xi: &[f64]) -> Result<SpatialField> {
        self.model.evaluate(&self.space, xi)
    }

    pub fn solve(&self, xi: &[f64]) -> Result<SteadySolution> {
        let nu = self.viscosity(xi)?;
        NavierStokes::new(&self.space, &nu)?.solve_steady(&self.spec.solver)
    }

    /// Steady solution and rightmost eigenpair at `xi`.
    pub fn eigen(&self, xi: &[f64]) -> Result<(SteadySolution, EigenResult)> {
        self.eigen_for_field(&self.viscosity(xi)?, &self.spec.eigen.settings())
    }

    /// Same pipeline for an arbitrary viscosity field.
    pub fn eigen_for_field(&self, nu: &SpatialField, settings: &EigenSettings) -> Result<(SteadySolution, EigenResult)> {
        let ns = NavierStokes::new(&self.space, nu)?;
        let sol = ns.solve_steady(&self.spec.solver)?;
        let problem = build_problem(&ns, &sol.state, self.spec.eigen.delta)?;
        let res = rightmost(&problem, settings)?;
        Ok((sol, res))
    }

    /// Deterministic problem at the constant mean viscosity `nu1`.
    pub fn mean_viscosity(&self) -> Result<SpatialField> {
        SpatialField::constant(&self.space, self.spec.nu1)
    }

    /// Simulator call with failures recorded instead of raised.
    pub fn run(&self, xi: &[f64]) -> SimRecord {
        match self.eigen(xi) {
            Ok((sol, res)) => {
                let mut h = Sha256::new();
                for t in &sol.trace {
                    h.update(t.residual.to_le_bytes());
                }
                SimRecord {
                    re: res.lambda.re,
                    im: res.lambda.im,
                    paired: res.paired,
                    failure: None,
                    steps: sol.trace.len(),
                    final_ratio: sol.trace.last().map_or(f64::NAN, |t| t.ratio),
                    trace_digest: hex(&h.finalize()[..8]),
                }
            }
            Err(e) => SimRecord::failed(&e),
        }
    }
}
