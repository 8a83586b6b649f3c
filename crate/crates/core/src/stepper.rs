//! Semi-implicit time stepping of the coupled `(mu, rho)` system.
//!
//! One step advances `rho` first,
//!
//! ```text
//! delta (rho' - rho)/dt - Δ_h rho' + f1'(rho') = mu - f2'(rho)
//! ```
//!
//! and then `mu` through the conservative variable `u = (eps + 2 rho) mu`:
//!
//! ```text
//! (u' - u)/dt - Δ_h mu' = mu' (rho' - rho)/dt
//!   <=>  ((eps + rho' + rho)/dt) mu' - Δ_h mu' = u/dt
//! ```
//!
//! The `mu` coefficient is at least `2 r*/dt > 0` even for `eps = 0`, so the
//! update is an M-matrix solve and `mu' >= 0` follows from `mu >= 0`. The
//! `rho` update obeys a discrete maximum principle that keeps `rho' >= r*`.

use thiserror::Error;

use crate::grid::{solve_helmholtz, Field, Grid, GridError};
use crate::newton::{InteriorNewton, NewtonError};
use crate::potential::{PotentialError, PotentialSpec};

pub const DEFAULT_NEWTON_TOL: f64 = 1e-10;
pub const DEFAULT_NEWTON_MAX_ITER: usize = 50;
pub const DEFAULT_LINEAR_TOL: f64 = 1e-10;

/// Tolerance on `min(mu) >= 0` after a step.
pub const POSITIVITY_TOL: f64 = 1e-12;
/// Tolerance on `min(rho) >= r*` after a step.
pub const BARRIER_TOL: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum StepError {
    #[error("invalid step parameters: {0}")]
    Params(String),
    #[error("invalid state: {0}")]
    State(String),
    #[error("rho update failed at t = {time}: {source}")]
    Rho { time: f64, source: NewtonError },
    #[error("mu update failed at t = {time}: {source}")]
    Mu { time: f64, source: GridError },
    #[error("invariant violated at t = {time}: {what}\n{dump}")]
    Invariant { time: f64, what: String, dump: String },
    #[error(transparent)]
    Potential(#[from] PotentialError),
    #[error(transparent)]
    Grid(#[from] GridError),
}

/// The pair `(mu, rho)` at one time instant.
#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub mu: Field,
    pub rho: Field,
    pub time: f64,
}

impl State {
    pub fn new(mu: Field, rho: Field, time: f64) -> Result<Self, StepError> {
        if mu.grid() != rho.grid() {
            return Err(StepError::Grid(GridError::GridMismatch));
        }
        Ok(Self { mu, rho, time })
    }

    pub fn grid(&self) -> &Grid {
        self.mu.grid()
    }

    /// Auxiliary variable `u = (eps + 2 rho) mu`.
    pub fn aux_u(&self, eps: f64) -> Field {
        self.rho.zip_map(&self.mu, |r, m| (eps + 2.0 * r) * m)
    }

    /// Checks the admissibility conditions on initial data: `mu >= 0`,
    /// `0 < rho < 1`, and `inf rho > 0` (always implied on a grid, but
    /// reported separately because the limit problem relies on it).
    pub fn validate_initial(&self) -> Result<(), StepError> {
        if !self.mu.is_finite() || !self.rho.is_finite() {
            return Err(StepError::State("non-finite initial data".into()));
        }
        if self.mu.min() < 0.0 {
            return Err(StepError::State(format!("mu0 must be >= 0, min is {}", self.mu.min())));
        }
        if !(self.rho.min() > 0.0 && self.rho.max() < 1.0) {
            return Err(StepError::State(format!(
                "rho0 must lie in (0, 1), range is [{}, {}]",
                self.rho.min(),
                self.rho.max()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepParams {
    /// Viscosity on `mu`; `0` selects the limit problem.
    pub eps: f64,
    /// Viscosity on `rho`.
    pub delta: f64,
    pub dt: f64,
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    pub linear_tol: f64,
}

impl StepParams {
    pub fn new(eps: f64, delta: f64, dt: f64) -> Result<Self, StepError> {
        let p = Self {
            eps,
            delta,
            dt,
            newton_tol: DEFAULT_NEWTON_TOL,
            newton_max_iter: DEFAULT_NEWTON_MAX_ITER,
            linear_tol: DEFAULT_LINEAR_TOL,
        };
        p.validate()?;
        Ok(p)
    }

    /// Default step `delta / (4 lambda)`, keeping the explicit `f2'` stable.
    pub fn default_dt(delta: f64, spec: &PotentialSpec) -> f64 {
        let m = spec.sup_abs_f2_prime().max(spec.lambda);
        if m > 0.0 {
            delta / (4.0 * m)
        } else {
            delta / 4.0
        }
    }

    pub fn with_eps(mut self, eps: f64) -> Self {
        self.eps = eps;
        self
    }

    pub fn with_dt(mut self, dt: f64) -> Self {
        self.dt = dt;
        self
    }

    pub fn validate(&self) -> Result<(), StepError> {
        let mut bad = Vec::new();
        if !(0.0..=1.0).contains(&self.eps) {
            bad.push(format!("eps = {} not in [0, 1]", self.eps));
        }
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            bad.push(format!("delta = {} must be positive", self.delta));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            bad.push(format!("dt = {} must be positive", self.dt));
        }
        if !(self.newton_tol > 0.0) || !(self.linear_tol > 0.0) {
            bad.push("tolerances must be positive".into());
        }
        if self.newton_max_iter == 0 {
            bad.push("newton_max_iter must be at least 1".into());
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(StepError::Params(bad.join("; ")))
        }
    }
}

/// Source terms added to the right-hand sides, evaluated at the new time
/// level. Used for manufactured-solution verification.
pub trait Forcing: Sync {
    fn mu_source(&self, grid: &Grid, time: f64) -> Field;
    fn rho_source(&self, grid: &Grid, time: f64) -> Field;
}

/// Time stepper bound to a potential, step parameters and the lower barrier
/// `r*` computed once from the initial data.
#[derive(Debug, Clone)]
pub struct Stepper {
    spec: PotentialSpec,
    params: StepParams,
    barrier: f64,
}

impl Stepper {
    pub fn new(spec: PotentialSpec, params: StepParams, initial: &State) -> Result<Self, StepError> {
        params.validate()?;
        initial.validate_initial()?;
        let barrier = spec.lower_barrier(initial.rho.min())?;
        Ok(Self { spec, params, barrier })
    }

    pub fn spec(&self) -> &PotentialSpec {
        &self.spec
    }

    pub fn params(&self) -> &StepParams {
        &self.params
    }

    /// The lower barrier `r*`; independent of `eps` by construction.
    pub fn barrier(&self) -> f64 {
        self.barrier
    }

    pub fn step_rho(&self, state: &State) -> Result<Field, StepError> {
        self.step_rho_forced(state, None)
    }

    fn step_rho_forced(&self, state: &State, forcing: Option<&dyn Forcing>) -> Result<Field, StepError> {
        let p = &self.params;
        let mut rhs = state.mu.zip_map(&state.rho, |m, r| m - self.spec.f2_prime_raw(r));
        if let Some(f) = forcing {
            rhs = rhs.add(&f.rho_source(state.grid(), state.time + p.dt));
        }
        let newton = InteriorNewton {
            spec: &self.spec,
            shift: p.delta / p.dt,
            anchor: Some(&state.rho),
            rhs: &rhs,
            implicit_smooth: false,
            tol: p.newton_tol,
            max_iter: p.newton_max_iter,
            linear_tol: p.linear_tol,
        };
        newton
            .solve(state.rho.clone())
            .map(|(rho, _)| rho)
            .map_err(|source| StepError::Rho { time: state.time, source })
    }

    pub fn step_mu(&self, state: &State, rho_next: &Field) -> Result<Field, StepError> {
        self.step_mu_forced(state, rho_next, None)
    }

    fn step_mu_forced(
        &self,
        state: &State,
        rho_next: &Field,
        forcing: Option<&dyn Forcing>,
    ) -> Result<Field, StepError> {
        let p = &self.params;
        let inv_dt = 1.0 / p.dt;
        let a = rho_next.zip_map(&state.rho, |rn, r| (p.eps + rn + r) * inv_dt);
        let mut rhs = state.aux_u(p.eps).scale(inv_dt);
        if let Some(f) = forcing {
            rhs = rhs.add(&f.mu_source(state.grid(), state.time + p.dt));
        }
        solve_helmholtz(&a, &rhs, p.linear_tol)
            .map(|(mu, _)| mu)
            .map_err(|source| StepError::Mu { time: state.time, source })
    }

    /// One full step, `rho` first, with the invariants checked on the result.
    pub fn step(&self, state: &State) -> Result<State, StepError> {
        let next = self.step_unchecked(state, None)?;
        self.check_invariants(&next)?;
        Ok(next)
    }

    /// One step with source terms. Invariants are not asserted since forced
    /// solutions need not satisfy them.
    pub fn step_forced(&self, state: &State, forcing: &dyn Forcing) -> Result<State, StepError> {
        self.step_unchecked(state, Some(forcing))
    }

    fn step_unchecked(&self, state: &State, forcing: Option<&dyn Forcing>) -> Result<State, StepError> {
        let rho = self.step_rho_forced(state, forcing)?;
        let mu = self.step_mu_forced(state, &rho, forcing)?;
        Ok(State { mu, rho, time: state.time + self.params.dt })
    }

    pub fn check_invariants(&self, state: &State) -> Result<(), StepError> {
        let (min_mu, min_rho, max_rho) = (state.mu.min(), state.rho.min(), state.rho.max());
        let dump = || {
            format!(
                "  min(mu) = {min_mu:.17e}\n  min(rho) = {min_rho:.17e}\n  max(rho) = {max_rho:.17e}\n  r* = {:.17e}\n  params = {:?}",
                self.barrier, self.params
            )
        };
        let fail = |what: String| StepError::Invariant { time: state.time, what, dump: dump() };
        if !state.mu.is_finite() || !state.rho.is_finite() {
            return Err(fail("non-finite values".into()));
        }
        if min_mu < -POSITIVITY_TOL {
            return Err(fail("positivity of mu".into()));
        }
        if min_rho < self.barrier - BARRIER_TOL {
            return Err(fail("lower barrier on rho".into()));
        }
        if max_rho > 1.0 - self.spec.singular_floor {
            return Err(fail("upper bound on rho".into()));
        }
        Ok(())
    }
}

/// Regularizes raw initial data by solving
/// `(x - rho0)/eps - Δ_h x + f1'(x) = 0` with Neumann conditions.
pub fn mollify_initial_rho(rho0_raw: &Field, eps: f64, spec: &PotentialSpec) -> Result<Field, StepError> {
    if !(eps > 0.0) {
        return Err(StepError::Params(format!("mollifier needs eps > 0, got {eps}")));
    }
    if !(rho0_raw.min() > 0.0 && rho0_raw.max() < 1.0) {
        return Err(StepError::State("raw rho0 must lie in (0, 1)".into()));
    }
    let zero = Field::zeros(*rho0_raw.grid());
    let newton = InteriorNewton {
        spec,
        shift: 1.0 / eps,
        anchor: Some(rho0_raw),
        rhs: &zero,
        implicit_smooth: false,
        tol: DEFAULT_NEWTON_TOL,
        max_iter: DEFAULT_NEWTON_MAX_ITER,
        linear_tol: DEFAULT_LINEAR_TOL,
    };
    newton
        .solve(rho0_raw.clone())
        .map(|(x, _)| x)
        .map_err(|source| StepError::Rho { time: 0.0, source })
}
