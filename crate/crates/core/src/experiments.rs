//! Batch studies built on the stepper: the `eps -> 0` sweep, long-time
//! relaxation towards a steady state, and manufactured-solution convergence.

use std::f64::consts::PI;

use rayon::prelude::*;

use crate::config::SimConfig;
use crate::diagnostics::{steady_residual, tail_sums, DiagnosticsRecord};
use crate::grid::{Field, Grid};
use crate::newton::InteriorNewton;
use crate::potential::PotentialSpec;
use crate::simulation::Simulation;
use crate::stepper::{Forcing, State, StepParams, Stepper, DEFAULT_LINEAR_TOL};
use crate::Error;

pub const STEADY_TOL: f64 = 1e-10;
const STEADY_MAX_ITER: usize = 200;

#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    pub eps_values: Vec<f64>,
    pub mu_errors: Vec<f64>,
    pub rho_errors: Vec<f64>,
    /// `log2(e[k-1] / e[k])` for the `mu` errors; `None` for the first entry
    /// and wherever an error vanishes.
    pub empirical_rates: Vec<Option<f64>>,
}

impl SweepReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("eps,mu_error,rho_error,rate\n");
        for k in 0..self.eps_values.len() {
            let rate = self.empirical_rates[k].map(|r| format!("{r:.16e}")).unwrap_or_default();
            s.push_str(&format!(
                "{:.16e},{:.16e},{:.16e},{rate}\n",
                self.eps_values[k], self.mu_errors[k], self.rho_errors[k]
            ));
        }
        s
    }
}

/// Runs `base` with every `eps` in `eps_list` and with `eps = 0` on the same
/// grid, time step and initial data, and measures the discrete
/// `L²(0,T; L²)` distance of each run to the `eps = 0` reference.
pub fn eps_sweep(base: &SimConfig, eps_list: &[f64]) -> Result<SweepReport, Error> {
    if eps_list.is_empty() {
        return Err(Error::Invalid("eps list is empty".into()));
    }
    if eps_list.iter().any(|&e| !(0.0..=1.0).contains(&e)) {
        return Err(Error::Invalid("eps values must lie in [0, 1]".into()));
    }
    if eps_list.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::Invalid("eps list must be strictly decreasing".into()));
    }
    let with_eps = |eps: f64| {
        let mut c = base.clone();
        c.physics.eps = eps;
        c
    };
    let reference = trajectory(&with_eps(0.0))?;
    let dt = base.time.dt;

    let errors: Vec<(f64, f64)> = eps_list
        .par_iter()
        .map(|&eps| {
            if eps == 0.0 {
                return Ok((0.0, 0.0));
            }
            let mut sim = Simulation::from_config(&with_eps(eps))?;
            let (mut emu, mut erho) = (0.0, 0.0);
            for r in &reference[1..] {
                sim.advance()?;
                let s = sim.state();
                emu += dt * s.mu.sub(&r.mu).l2_norm().powi(2);
                erho += dt * s.rho.sub(&r.rho).l2_norm().powi(2);
            }
            Ok((emu.sqrt(), erho.sqrt()))
        })
        .collect::<Result<_, Error>>()?;

    let mu_errors: Vec<f64> = errors.iter().map(|e| e.0).collect();
    let empirical_rates = (0..mu_errors.len())
        .map(|k| {
            (k > 0 && mu_errors[k] > 0.0 && mu_errors[k - 1] > 0.0)
                .then(|| (mu_errors[k - 1] / mu_errors[k]).log2())
        })
        .collect();
    Ok(SweepReport {
        eps_values: eps_list.to_vec(),
        mu_errors,
        rho_errors: errors.iter().map(|e| e.1).collect(),
        empirical_rates,
    })
}

/// All states of a run of `config`, the initial one included.
pub fn trajectory(config: &SimConfig) -> Result<Vec<State>, Error> {
    let mut sim = Simulation::from_config(config)?;
    let n = config.num_steps();
    let mut states = Vec::with_capacity(n + 1);
    states.push(sim.state().clone());
    for _ in 0..n {
        sim.advance()?;
        states.push(sim.state().clone());
    }
    Ok(states)
}

/// Solves `-Δ_h rho + f'(rho) = mu_s` by damped Newton from `initial_guess`.
/// With a nonconvex `f` the guess selects the branch.
pub fn solve_steady(
    mu_s: f64,
    spec: &PotentialSpec,
    grid: &Grid,
    initial_guess: &Field,
) -> Result<Field, Error> {
    if !(mu_s >= 0.0 && mu_s.is_finite()) {
        return Err(Error::Invalid(format!("mu_s must be nonnegative, got {mu_s}")));
    }
    if initial_guess.grid() != grid {
        return Err(Error::Invalid("initial guess lives on a different grid".into()));
    }
    let rhs = Field::constant(*grid, mu_s);
    let newton = InteriorNewton {
        spec,
        shift: 0.0,
        anchor: None,
        rhs: &rhs,
        implicit_smooth: true,
        tol: STEADY_TOL,
        max_iter: STEADY_MAX_ITER,
        linear_tol: DEFAULT_LINEAR_TOL * 1e-2,
    };
    let (rho, _) = newton.solve(initial_guess.clone()).map_err(Error::Steady)?;
    Ok(rho)
}

#[derive(Debug, Clone)]
pub struct OmegaReport {
    pub probe_times: Vec<f64>,
    pub steady_residuals: Vec<f64>,
    pub grad_mu_norms: Vec<f64>,
    pub dt_rho_norms: Vec<f64>,
    pub mu_s: f64,
    pub rho_s: Field,
    /// `‖rho(T) - solve_steady(mu_s, guess = rho(T))‖`.
    pub match_error: f64,
    pub stalled: bool,
    pub final_time: f64,
    pub spatial_var_mu: f64,
    pub steady_residual: f64,
    /// `Σ dt ‖∇mu‖²` and `Σ dt ‖∂t rho‖²` over the last quarter of the steps.
    pub tail_grad_mu_sum: f64,
    pub tail_dt_rho_sum: f64,
    pub final_state: State,
    pub penultimate_state: Option<State>,
    pub records: Vec<DiagnosticsRecord>,
}

impl OmegaReport {
    pub fn summary(&self) -> String {
        format!(
            "stalled = {}\nfinal_time = {:.16e}\nmu_s = {:.16e}\nspatial_var_mu = {:.16e}\nsteady_residual = {:.16e}\nmatch_error = {:.16e}\ntail_grad_mu_sum = {:.16e}\ntail_dt_rho_sum = {:.16e}\n",
            self.stalled,
            self.final_time,
            self.mu_s,
            self.spatial_var_mu,
            self.steady_residual,
            self.match_error,
            self.tail_grad_mu_sum,
            self.tail_dt_rho_sum
        )
    }

    pub fn probes_csv(&self) -> String {
        let mut s = String::from("time,steady_residual,grad_mu_l2,dt_rho_l2\n");
        for k in 0..self.probe_times.len() {
            s.push_str(&format!(
                "{:.16e},{:.16e},{:.16e},{:.16e}\n",
                self.probe_times[k], self.steady_residuals[k], self.grad_mu_norms[k], self.dt_rho_norms[k]
            ));
        }
        s
    }
}

/// Runs `config` until `t_max` or until `grad_mu_l2 + dt_rho_l2 < stall_tol`,
/// probing at the dyadic times `2^n dt`, and compares the final profile with
/// the steady state for `mu_s = mean(mu(T))`.
pub fn long_time(config: &SimConfig, t_max: f64, stall_tol: f64) -> Result<OmegaReport, Error> {
    if !(t_max > 0.0) || !(stall_tol > 0.0) {
        return Err(Error::Invalid("t_max and stall_tol must be positive".into()));
    }
    let mut sim = Simulation::from_config(config)?;
    let dt = config.time.dt;
    let max_steps = ((t_max / dt) - 1e-9).ceil().max(1.0) as usize;

    let mut records = vec![sim.record(None)];
    let (mut probe_times, mut steady_residuals, mut grad_mu_norms, mut dt_rho_norms) =
        (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    let mut next_probe = 1usize;
    let mut stalled = false;
    let mut penultimate = None;

    for k in 1..=max_steps {
        let prev = sim.advance()?;
        let rec = sim.record(Some(&prev));
        records.push(rec);
        penultimate = Some(prev);
        if k == next_probe {
            probe_times.push(rec.time);
            steady_residuals.push(rec.steady_residual);
            grad_mu_norms.push(rec.grad_mu_l2);
            dt_rho_norms.push(rec.dt_rho_l2);
            next_probe *= 2;
        }
        if rec.grad_mu_l2 + rec.dt_rho_l2 < stall_tol {
            stalled = true;
            break;
        }
    }
    let last = *records.last().expect("at least one step");
    if probe_times.last() != Some(&last.time) {
        probe_times.push(last.time);
        steady_residuals.push(last.steady_residual);
        grad_mu_norms.push(last.grad_mu_l2);
        dt_rho_norms.push(last.dt_rho_l2);
    }

    let state = sim.state().clone();
    let mu_s = state.mu.mean().max(0.0);
    let rho_s = solve_steady(mu_s, sim.stepper().spec(), state.grid(), &state.rho)?;
    let match_error = state.rho.sub(&rho_s).l2_norm();
    let (tail_grad_mu_sum, tail_dt_rho_sum) = tail_sums(&records, 0.25);
    Ok(OmegaReport {
        probe_times,
        steady_residuals,
        grad_mu_norms,
        dt_rho_norms,
        mu_s,
        rho_s,
        match_error,
        stalled,
        final_time: state.time,
        spatial_var_mu: state.mu.spatial_variance(),
        steady_residual: steady_residual(&state, sim.stepper().spec()),
        tail_grad_mu_sum,
        tail_dt_rho_sum,
        final_state: state,
        penultimate_state: penultimate,
        records,
    })
}

/// `mu* = 2 + cos(pi x) e^{-t}`, `rho* = 1/2 + cos(pi x) e^{-t} / 4` on a
/// domain of unit length along the first axis, with the source terms that
/// make them solve the forced system.
#[derive(Debug, Clone)]
pub struct Manufactured {
    pub eps: f64,
    pub delta: f64,
    pub spec: PotentialSpec,
}

impl Manufactured {
    pub fn mu(x: f64, t: f64) -> f64 {
        2.0 + (PI * x).cos() * (-t).exp()
    }

    pub fn rho(x: f64, t: f64) -> f64 {
        0.5 + 0.25 * (PI * x).cos() * (-t).exp()
    }

    pub fn exact(grid: Grid, t: f64) -> State {
        State {
            mu: Field::from_fn(grid, |[x, _]| Self::mu(x, t)),
            rho: Field::from_fn(grid, |[x, _]| Self::rho(x, t)),
            time: t,
        }
    }
}

impl Forcing for Manufactured {
    fn mu_source(&self, grid: &Grid, t: f64) -> Field {
        Field::from_fn(*grid, |[x, _]| {
            let c = (PI * x).cos() * (-t).exp();
            let (mu, rho) = (2.0 + c, 0.5 + 0.25 * c);
            let (mu_t, rho_t, lap_mu) = (-c, -0.25 * c, -PI * PI * c);
            (self.eps + 2.0 * rho) * mu_t + mu * rho_t - lap_mu
        })
    }

    fn rho_source(&self, grid: &Grid, t: f64) -> Field {
        Field::from_fn(*grid, |[x, _]| {
            let c = (PI * x).cos() * (-t).exp();
            let (mu, rho) = (2.0 + c, 0.5 + 0.25 * c);
            let (rho_t, lap_rho) = (-0.25 * c, -0.25 * PI * PI * c);
            self.delta * rho_t - lap_rho + self.spec.f_prime_raw(rho) - mu
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MmsSetup {
    pub eps: f64,
    pub delta: f64,
    /// Cells of the coarsest level of the space study; doubled per level.
    pub space_base_cells: usize,
    pub space_dt: f64,
    pub space_t_final: f64,
    pub time_cells: usize,
    /// Largest step of the time study; halved per level.
    pub time_base_dt: f64,
    pub time_t_final: f64,
}

impl Default for MmsSetup {
    fn default() -> Self {
        Self {
            eps: 0.1,
            delta: 1.0,
            space_base_cells: 8,
            space_dt: 1e-6,
            space_t_final: 0.05,
            time_cells: 512,
            time_base_dt: 0.04,
            time_t_final: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceStudy {
    /// Mesh width or time step per level.
    pub sizes: Vec<f64>,
    pub mu_errors: Vec<f64>,
    pub rho_errors: Vec<f64>,
    pub mu_order: f64,
    pub rho_order: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MmsReport {
    pub space: ConvergenceStudy,
    pub time: ConvergenceStudy,
}

impl MmsReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("study,size,mu_error,rho_error\n");
        for (name, st) in [("space", &self.space), ("time", &self.time)] {
            for k in 0..st.sizes.len() {
                s.push_str(&format!(
                    "{name},{:.16e},{:.16e},{:.16e}\n",
                    st.sizes[k], st.mu_errors[k], st.rho_errors[k]
                ));
            }
        }
        s
    }
}

/// Least-squares slope of `log(errors)` against `log(sizes)`.
pub fn fitted_order(sizes: &[f64], errors: &[f64]) -> f64 {
    let xs: Vec<f64> = sizes.iter().map(|s| s.ln()).collect();
    let ys: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

/// Final-time `L²` errors of one forced run against the manufactured solution.
pub fn mms_errors(
    spec: &PotentialSpec,
    eps: f64,
    delta: f64,
    cells: usize,
    dt: f64,
    t_final: f64,
) -> Result<(f64, f64), Error> {
    let grid = Grid::new_1d(cells, 1.0)?;
    let forcing = Manufactured { eps, delta, spec: spec.clone() };
    let mut state = Manufactured::exact(grid, 0.0);
    let stepper = Stepper::new(spec.clone(), StepParams::new(eps, delta, dt)?, &state)?;
    let n = ((t_final / dt) - 1e-9).ceil() as usize;
    for k in 1..=n {
        state = stepper.step_forced(&state, &forcing)?;
        state.time = k as f64 * dt;
    }
    let exact = Manufactured::exact(grid, state.time);
    Ok((state.mu.sub(&exact.mu).l2_norm(), state.rho.sub(&exact.rho).l2_norm()))
}

pub fn mms_convergence(spec: &PotentialSpec, refinement_levels: usize) -> Result<MmsReport, Error> {
    mms_convergence_with(spec, refinement_levels, &MmsSetup::default())
}

pub fn mms_convergence_with(
    spec: &PotentialSpec,
    refinement_levels: usize,
    setup: &MmsSetup,
) -> Result<MmsReport, Error> {
    if refinement_levels < 3 {
        return Err(Error::Invalid(format!("need at least 3 refinement levels, got {refinement_levels}")));
    }
    let study = |sizes: Vec<f64>, errors: Vec<(f64, f64)>| {
        let mu_errors: Vec<f64> = errors.iter().map(|e| e.0).collect();
        let rho_errors: Vec<f64> = errors.iter().map(|e| e.1).collect();
        ConvergenceStudy {
            mu_order: fitted_order(&sizes, &mu_errors),
            rho_order: fitted_order(&sizes, &rho_errors),
            sizes,
            mu_errors,
            rho_errors,
        }
    };

    let cells: Vec<usize> = (0..refinement_levels).map(|k| setup.space_base_cells << k).collect();
    let space = cells
        .par_iter()
        .map(|&n| mms_errors(spec, setup.eps, setup.delta, n, setup.space_dt, setup.space_t_final))
        .collect::<Result<Vec<_>, Error>>()?;
    let dts: Vec<f64> = (0..refinement_levels).map(|k| setup.time_base_dt / (1u64 << k) as f64).collect();
    let time = dts
        .par_iter()
        .map(|&dt| mms_errors(spec, setup.eps, setup.delta, setup.time_cells, dt, setup.time_t_final))
        .collect::<Result<Vec<_>, Error>>()?;

    Ok(MmsReport {
        space: study(cells.iter().map(|&n| 1.0 / n as f64).collect(), space),
        time: study(dts, time),
    })
}
