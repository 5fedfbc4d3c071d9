//! Steady Navier-Stokes solver: Stokes start, Picard steps, then Newton.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::{
    assemble_convection, assemble_diffusion, assemble_divergence, assemble_newton_derivative, MixedSpace,
    SpatialField,
};
use crate::linalg::{norm2, BlockAssembler, SparseLu, SparseMatrix};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowState {
    /// Full velocity vector including Dirichlet values.
    pub u: Vec<f64>,
    pub p: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSettings {
    pub picard_steps: usize,
    pub max_newton_steps: usize,
    pub rel_tol: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            picard_steps: 6,
            max_newton_steps: 15,
            rel_tol: 1e-8,
        }
    }
}

impl SolverSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0 && self.rel_tol < 1.0) {
            return Err(Error::Config(format!("rel_tol must lie in (0, 1), got {}", self.rel_tol)));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StepKind {
    Stokes,
    Picard,
    Newton,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub kind: StepKind,
    /// `||[R; r]||` after the step.
    pub residual: f64,
    pub ratio: f64,
}

#[derive(Clone, Debug)]
pub struct SteadySolution {
    pub state: FlowState,
    pub trace: Vec<TraceEntry>,
}

/// Free-row residual `R` and continuity residual `r`.
#[derive(Clone, Debug, PartialEq)]
pub struct Residual {
    pub momentum: Vec<f64>,
    pub continuity: Vec<f64>,
}

impl Residual {
    pub fn norm(&self) -> f64 {
        norm2(&self.momentum).hypot(norm2(&self.continuity))
    }
}

/// Discrete steady problem at one viscosity realization.
pub struct NavierStokes<'a> {
    pub space: &'a MixedSpace,
    pub a: SparseMatrix,
    pub b: SparseMatrix,
    /// Body-force load on all velocity DOFs.
    pub body: Vec<f64>,
    b_free: SparseMatrix,
    rhs_norm: f64,
}

impl<'a> NavierStokes<'a> {
    pub fn new(space: &'a MixedSpace, nu: &SpatialField) -> Result<Self> {
        Self::with_body_force(space, nu, vec![0.0; space.n_u])
    }

    pub fn with_body_force(space: &'a MixedSpace, nu: &SpatialField, body: Vec<f64>) -> Result<Self> {
        if body.len() != space.n_u {
            return Err(Error::Dimension("body force length must equal n_u".into()));
        }
        let a = assemble_diffusion(space, nu)?;
        let b = assemble_divergence(space);
        let all_p: Vec<usize> = (0..space.n_p).collect();
        let b_free = b.select(&all_p, &space.free);
        let mut ns = Self {
            space,
            a,
            b,
            body,
            b_free,
            rhs_norm: 0.0,
        };
        // ||[f; g]|| of the lifted linear system
        ns.rhs_norm = ns.residual_with(&ns.initial_state(), false).norm();
        Ok(ns)
    }

    /// Dirichlet data with zero interior velocity and zero pressure.
    pub fn initial_state(&self) -> FlowState {
        FlowState {
            u: self.space.dirichlet_vector(),
            p: vec![0.0; self.space.n_p],
        }
    }

    pub fn rhs_norm(&self) -> f64 {
        self.rhs_norm
    }

    fn residual_with(&self, state: &FlowState, convection: bool) -> Residual {
        let s = self.space;
        let mut full = self.body.clone();
        self.a.mul_vec_acc(-1.0, &state.u, &mut full);
        if convection {
            let n = assemble_convection(s, &state.u).expect("state length checked");
            n.mul_vec_acc(-1.0, &state.u, &mut full);
        }
        let bt_p = self.b.transpose().mul_vec(&state.p);
        let momentum = s.free.iter().map(|&i| full[i] - bt_p[i]).collect();
        let continuity = self.b.mul_vec(&state.u).into_iter().map(|v| -v).collect();
        Residual { momentum, continuity }
    }

    fn check_state(&self, state: &FlowState) -> Result<()> {
        if state.u.len() != self.space.n_u || state.p.len() != self.space.n_p {
            return Err(Error::Dimension("flow state does not match the mixed space".into()));
        }
        if state.u.iter().chain(&state.p).any(|v| !v.is_finite()) {
            return Err(Error::Domain("flow state has non-finite entries".into()));
        }
        Ok(())
    }

    /// `[R; r] = [f; g] - [A + N(u), B^T; B, 0] [u; p]` on free rows.
    pub fn residual(&self, state: &FlowState) -> Result<Residual> {
        self.check_state(state)?;
        Ok(self.residual_with(state, true))
    }

    /// Linearized velocity operator at `u`: `A + N(u)` for Picard, plus
    /// `W(u)` for Newton.
    pub fn linearized_operator(&self, u: &[f64], kind: StepKind) -> Result<SparseMatrix> {
        Ok(match kind {
            StepKind::Stokes => self.a.clone(),
            StepKind::Picard => self.a.add(&assemble_convection(self.space, u)?),
            StepKind::Newton => self
                .a
                .add(&assemble_convection(self.space, u)?)
                .add(&assemble_newton_derivative(self.space, u)?),
        })
    }

    /// Saddle-point matrix `[F_ff, B_f^T; B_f, 0]` on free velocity DOFs.
    pub fn block_system(&self, f: &SparseMatrix) -> SparseMatrix {
        let nf = self.space.free.len();
        let f_ff = f.select(&self.space.free, &self.space.free);
        let mut asm = BlockAssembler::new(nf + self.space.n_p);
        asm.add(&f_ff, 0, 0, 1.0);
        asm.add_transpose(&self.b_free, 0, nf, 1.0);
        asm.add(&self.b_free, nf, 0, 1.0);
        asm.finish()
    }

    fn apply_increment(&self, state: &FlowState, delta: &[f64]) -> FlowState {
        let nf = self.space.free.len();
        let mut next = state.clone();
        for (k, &i) in self.space.free.iter().enumerate() {
            next.u[i] += delta[k];
        }
        for (k, p) in next.p.iter_mut().enumerate() {
            *p += delta[nf + k];
        }
        next
    }

    /// One linearized update `x <- x + dx` with `K(x) dx = [R; r]`.
    pub fn nonlinear_step(&self, state: &FlowState, kind: StepKind) -> Result<FlowState> {
        self.check_state(state)?;
        let res = self.residual_with(state, kind != StepKind::Stokes);
        let f = self.linearized_operator(&state.u, kind)?;
        let k = self.block_system(&f);
        let rhs: Vec<f64> = res.momentum.iter().chain(&res.continuity).copied().collect();
        let delta = SparseLu::factor(&k)?.solve(&rhs)?;
        Ok(self.apply_increment(state, &delta))
    }

    /// Solves the Stokes system from the Dirichlet data.
    pub fn solve_stokes(&self) -> Result<FlowState> {
        self.nonlinear_step(&self.initial_state(), StepKind::Stokes).map_err(|e| match e {
            Error::Singular(msg) => Error::Rank(format!("Stokes system is singular: {msg}")),
            other => other,
        })
    }

    pub fn solve_steady(&self, settings: &SolverSettings) -> Result<SteadySolution> {
        settings.validate()?;
        let mut state = self.solve_stokes()?;
        let scale = self.rhs_norm;
        let mut trace = Vec::new();
        let record = |kind, state: &FlowState, trace: &mut Vec<TraceEntry>| -> f64 {
            let residual = self.residual_with(state, true).norm();
            let ratio = if scale > 0.0 { residual / scale } else { 0.0 };
            trace.push(TraceEntry { kind, residual, ratio });
            ratio
        };
        if record(StepKind::Stokes, &state, &mut trace) <= settings.rel_tol {
            return Ok(SteadySolution { state, trace });
        }
        let fail = |trace: Vec<TraceEntry>| Error::Convergence {
            iterations: trace.len() - 1,
            last_ratio: trace.last().map_or(f64::NAN, |t| t.ratio),
            trace: trace.iter().map(|t| t.residual).collect(),
        };
        let mut growth = 0;
        let schedule = std::iter::repeat_n(StepKind::Picard, settings.picard_steps)
            .chain(std::iter::repeat_n(StepKind::Newton, settings.max_newton_steps));
        for (it, kind) in schedule.enumerate() {
            state = match self.nonlinear_step(&state, kind) {
                Ok(s) => s,
                Err(Error::Singular(msg)) => {
                    return Err(Error::Singular(format!("{kind:?} iterate {}: {msg}", it + 1)));
                }
                Err(e) => return Err(e),
            };
            let prev = trace.last().map_or(f64::INFINITY, |t: &TraceEntry| t.ratio);
            let ratio = record(kind, &state, &mut trace);
            if !ratio.is_finite() {
                return Err(fail(trace));
            }
            if ratio <= settings.rel_tol {
                return Ok(SteadySolution { state, trace });
            }
            if kind == StepKind::Newton {
                growth = if ratio > prev { growth + 1 } else { 0 };
                if growth >= 5 {
                    return Err(fail(trace));
                }
            }
        }
        Err(fail(trace))
    }
}

/// Stokes solution at viscosity `nu`.
pub fn solve_stokes(space: &MixedSpace, nu: &SpatialField) -> Result<FlowState> {
    NavierStokes::new(space, nu)?.solve_stokes()
}

/// Hybrid steady solve at viscosity `nu`.
pub fn solve_steady(space: &MixedSpace, nu: &SpatialField, settings: &SolverSettings) -> Result<SteadySolution> {
    NavierStokes::new(space, nu)?.solve_steady(settings)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::PressureSpace;
    use crate::mesh::{build_channel_mesh, build_obstacle_mesh};

    fn channel() -> MixedSpace {
        MixedSpace::new(build_channel_mesh(4.0, 4, 3).unwrap(), PressureSpace::Q1).unwrap()
    }

    /// Poiseuille flow `u = 1 - y^2`, `p = 2 nu (L - x)` solves both the
    /// Stokes and the Navier-Stokes equations under the natural outflow
    /// condition, which forces zero pressure at the outlet.
    fn poiseuille(s: &MixedSpace, nu: f64) -> FlowState {
        let u = s.interpolate(|_, y| [1.0 - y * y, 0.0]);
        let p = match s.pressure {
            PressureSpace::Q1 => {
                let mut p = vec![0.0; s.n_p];
                for (el, e) in s.mesh.elements.iter().enumerate() {
                    for (k, &c) in crate::fem::reference::CORNERS.iter().enumerate() {
                        p[s.pressure_dofs[el][k]] = 2.0 * nu * (4.0 - s.mesh.nodes[e[c]][0]);
                    }
                }
                p
            }
            PressureSpace::P1Disc => unreachable!(),
        };
        FlowState { u, p }
    }

    #[test]
    fn stokes_reproduces_poiseuille() {
        let s = channel();
        let nu = 0.1;
        let field = SpatialField::constant(&s, nu).unwrap();
        let ns = NavierStokes::new(&s, &field).unwrap();
        let st = ns.solve_stokes().unwrap();
        let exact = poiseuille(&s, nu);
        let err_u = st.u.iter().zip(&exact.u).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let err_p = st.p.iter().zip(&exact.p).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err_u < 1e-10, "{err_u}");
        assert!(err_p < 1e-10, "{err_p}");
        // convection of unidirectional parabolic flow vanishes: full residual is zero
        let r = ns.residual(&exact).unwrap();
        assert!(r.norm() < 1e-12 * ns.rhs_norm(), "{}", r.norm());
    }

    #[test]
    fn newton_from_poiseuille_converges_in_one_step() {
        let s = channel();
        let field = SpatialField::constant(&s, 0.05).unwrap();
        let ns = NavierStokes::new(&s, &field).unwrap();
        let exact = poiseuille(&s, 0.05);
        let next = ns.nonlinear_step(&exact, StepKind::Newton).unwrap();
        let inc = next.u.iter().zip(&exact.u).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(inc < 1e-12);
        let sol = ns
            .solve_steady(&SolverSettings {
                picard_steps: 0,
                max_newton_steps: 1,
                rel_tol: 1e-8,
            })
            .unwrap();
        assert!(sol.trace.len() <= 2);
    }

    #[test]
    fn zero_inflow_gives_zero_state() {
        let mut mesh = build_channel_mesh(2.0, 2, 2).unwrap();
        mesh.inflow.u_max = 0.0;
        let s = MixedSpace::new(mesh, PressureSpace::Q1).unwrap();
        let field = SpatialField::constant(&s, 1.0).unwrap();
        let st = solve_stokes(&s, &field).unwrap();
        assert!(st.u.iter().chain(&st.p).all(|v| *v == 0.0));
    }

    #[test]
    fn stokes_residual_certificate() {
        let s = MixedSpace::new(build_obstacle_mesh(8.0, false, 2, 2).unwrap(), PressureSpace::Q1).unwrap();
        let field = SpatialField::constant(&s, 0.02).unwrap();
        let ns = NavierStokes::new(&s, &field).unwrap();
        let st = ns.solve_stokes().unwrap();
        assert!(ns.residual_with(&st, false).norm() <= 1e-10 * ns.rhs_norm());
    }

    #[test]
    fn obstacle_toy_converges_with_monotone_newton_phase() {
        let s = MixedSpace::new(build_obstacle_mesh(8.0, true, 2, 2).unwrap(), PressureSpace::Q1).unwrap();
        let field = SpatialField::constant(&s, 5.36193e-3).unwrap();
        let sol = solve_steady(&s, &field, &SolverSettings::default()).unwrap();
        let last = sol.trace.last().unwrap();
        assert!(last.ratio <= 1e-8);
        let newton: Vec<f64> = sol.trace.iter().filter(|t| t.kind == StepKind::Newton).map(|t| t.ratio).collect();
        assert!(newton.windows(2).all(|w| w[1] < w[0]), "{newton:?}");
    }

    #[test]
    fn newton_step_solves_its_linear_model() {
        let s = MixedSpace::new(build_obstacle_mesh(8.0, false, 2, 2).unwrap(), PressureSpace::Q1).unwrap();
        let field = SpatialField::constant(&s, 0.01).unwrap();
        let ns = NavierStokes::new(&s, &field).unwrap();
        let x0 = ns.solve_stokes().unwrap();
        let x1 = ns.nonlinear_step(&x0, StepKind::Newton).unwrap();
        let res = ns.residual(&x0).unwrap();
        let k = ns.block_system(&ns.linearized_operator(&x0.u, StepKind::Newton).unwrap());
        let delta: Vec<f64> = s
            .free
            .iter()
            .map(|&i| x1.u[i] - x0.u[i])
            .chain(x1.p.iter().zip(&x0.p).map(|(a, b)| a - b))
            .collect();
        let kd = k.mul_vec(&delta);
        let rhs: Vec<f64> = res.momentum.iter().chain(&res.continuity).copied().collect();
        let mismatch: Vec<f64> = rhs.iter().zip(&kd).map(|(a, b)| a - b).collect();
        assert!(norm2(&mismatch) <= 1e-10 * norm2(&rhs));
    }

    #[test]
    fn picard_equals_newton_from_stokes_start_of_zero_state() {
        // W(u) vanishes for u = 0, so both linearizations coincide there.
        let mut mesh = build_channel_mesh(2.0, 2, 2).unwrap();
        mesh.inflow.u_max = 0.0;
        let s = MixedSpace::new(mesh, PressureSpace::Q1).unwrap();
        let body = crate::fem::assemble_body_force(&s, |x, y| [y.sin(), x * 0.1]);
        let field = SpatialField::constant(&s, 0.3).unwrap();
        let ns = NavierStokes::with_body_force(&s, &field, body).unwrap();
        let x0 = ns.initial_state();
        let a = ns.nonlinear_step(&x0, StepKind::Picard).unwrap();
        let b = ns.nonlinear_step(&x0, StepKind::Newton).unwrap();
        let scale = a.u.iter().chain(&a.p).map(|v| v.abs()).fold(0.0, f64::max);
        assert!(scale > 0.0);
        let diff = a.u.iter().chain(&a.p).zip(b.u.iter().chain(&b.p)).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        assert!(diff <= 1e-12 * scale, "{diff}");
    }

    #[test]
    fn converged_state_is_independent_of_split() {
        let s = MixedSpace::new(build_obstacle_mesh(8.0, false, 2, 2).unwrap(), PressureSpace::Q1).unwrap();
        let field = SpatialField::constant(&s, 0.02).unwrap();
        let ns = NavierStokes::new(&s, &field).unwrap();
        let tight = |picard| SolverSettings {
            picard_steps: picard,
            max_newton_steps: 20,
            rel_tol: 1e-12,
        };
        let a = ns.solve_steady(&tight(2)).unwrap().state;
        let b = ns.solve_steady(&tight(8)).unwrap().state;
        let diff = a.u.iter().zip(&b.u).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        assert!(diff < 1e-8, "{diff}");
    }

    #[test]
    fn quadratic_newton_contraction() {
        let s = MixedSpace::new(build_obstacle_mesh(8.0, true, 2, 2).unwrap(), PressureSpace::Q1).unwrap();
        let field = SpatialField::constant(&s, 0.01).unwrap();
        let ns = NavierStokes::new(&s, &field).unwrap();
        let reference = ns
            .solve_steady(&SolverSettings {
                picard_steps: 6,
                max_newton_steps: 20,
                rel_tol: 1e-13,
            })
            .unwrap()
            .state;
        let err = |x: &FlowState| {
            x.u.iter().zip(&reference.u).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt()
        };
        let mut x = ns.solve_stokes().unwrap();
        for _ in 0..4 {
            x = ns.nonlinear_step(&x, StepKind::Picard).unwrap();
        }
        let mut errs = vec![err(&x)];
        for _ in 0..3 {
            x = ns.nonlinear_step(&x, StepKind::Newton).unwrap();
            errs.push(err(&x));
        }
        for w in errs.windows(2) {
            if w[1] > 1e-11 {
                assert!(w[1] / (w[0] * w[0]) < 1e2, "{errs:?}");
            }
        }
        assert!(errs[errs.len() - 1] < 1e-9, "{errs:?}");
    }
}
