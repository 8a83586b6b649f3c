//! Per-step energy diagnostics and trajectory-level balance checks.
//!
//! Two functionals are monitored:
//!
//! * `E = ∫ (eps/2) mu² + rho mu²`, dissipated at rate `‖∇mu‖²`;
//! * `F = ½‖∇rho‖² + ∫ f(rho)`, whose change balances `delta ‖∂t rho‖²`
//!   against the work `∫ mu ∂t rho`.
//!
//! Time derivatives are backward differences of consecutive states.

use crate::grid::Field;
use crate::potential::PotentialSpec;
use crate::stepper::State;

pub const CSV_HEADER: &str =
    "time,E,F,grad_mu_l2,dt_rho_l2,min_mu,min_rho,max_rho,mean_mu,var_mu,steady_residual";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiagnosticsRecord {
    pub time: f64,
    pub lyapunov_e: f64,
    pub free_energy_f: f64,
    pub grad_mu_l2: f64,
    pub dt_rho_l2: f64,
    pub min_mu: f64,
    pub min_rho: f64,
    pub max_rho: f64,
    pub mean_mu: f64,
    pub spatial_var_mu: f64,
    pub steady_residual: f64,
    /// `∫ mu_old (rho - rho_old)/dt`, the work term driving `F`. Zero for the
    /// initial record.
    pub work: f64,
}

impl DiagnosticsRecord {
    /// Evaluates all quantities at `state`; `prev` supplies the backward
    /// difference (absent for the initial record).
    pub fn evaluate(state: &State, prev: Option<&State>, eps: f64, spec: &PotentialSpec) -> Self {
        let (dt_rho_l2, work) = match prev {
            Some(p) => {
                let dt = state.time - p.time;
                let dt_rho = state.rho.sub(&p.rho).scale(1.0 / dt);
                (dt_rho.l2_norm(), p.mu.dot(&dt_rho))
            }
            None => (0.0, 0.0),
        };
        Self {
            time: state.time,
            lyapunov_e: lyapunov_e(state, eps),
            free_energy_f: free_energy_f(state, spec),
            grad_mu_l2: state.mu.h1_seminorm(),
            dt_rho_l2,
            min_mu: state.mu.min(),
            min_rho: state.rho.min(),
            max_rho: state.rho.max(),
            mean_mu: state.mu.mean(),
            spatial_var_mu: state.mu.spatial_variance(),
            steady_residual: steady_residual(state, spec),
            work,
        }
    }

    pub fn csv_row(&self) -> String {
        [
            self.time,
            self.lyapunov_e,
            self.free_energy_f,
            self.grad_mu_l2,
            self.dt_rho_l2,
            self.min_mu,
            self.min_rho,
            self.max_rho,
            self.mean_mu,
            self.spatial_var_mu,
            self.steady_residual,
        ]
        .iter()
        .map(|v| format!("{v:.16e}"))
        .collect::<Vec<_>>()
        .join(",")
    }
}

pub fn lyapunov_e(state: &State, eps: f64) -> f64 {
    state.rho.zip_map(&state.mu, |r, m| (0.5 * eps + r) * m * m).integrate()
}

pub fn free_energy_f(state: &State, spec: &PotentialSpec) -> f64 {
    let grad = state.rho.h1_seminorm();
    0.5 * grad * grad + state.rho.map(|r| spec.f_raw(r)).integrate()
}

/// `‖-Δ_h rho + f'(rho) - mean(mu)‖ + ‖∇_h mu‖`; zero exactly at a discrete
/// steady state with spatially constant `mu`.
pub fn steady_residual(state: &State, spec: &PotentialSpec) -> f64 {
    let mean_mu = state.mu.mean();
    let lap = state.rho.laplacian();
    let res = state.rho.zip_map(&lap, |r, l| -l + spec.f_prime_raw(r) - mean_mu);
    res.l2_norm() + state.mu.h1_seminorm()
}

fn steps(records: &[DiagnosticsRecord]) -> impl Iterator<Item = (f64, &DiagnosticsRecord)> {
    records.windows(2).map(|w| (w[1].time - w[0].time, &w[1]))
}

/// `|E(t_n) + Σ dt ‖∇mu(t_k)‖² - E(0)|` over the given records.
pub fn dissipation_residual(records: &[DiagnosticsRecord]) -> f64 {
    let (Some(first), Some(last)) = (records.first(), records.last()) else {
        return 0.0;
    };
    let dissipated: f64 = steps(records).map(|(dt, r)| dt * r.grad_mu_l2 * r.grad_mu_l2).sum();
    (last.lyapunov_e + dissipated - first.lyapunov_e).abs()
}

/// `|F(t_n) + delta Σ dt ‖∂t rho‖² - F(0) - Σ dt ∫ mu ∂t rho|`.
pub fn free_energy_balance_residual(records: &[DiagnosticsRecord], delta: f64) -> f64 {
    let (Some(first), Some(last)) = (records.first(), records.last()) else {
        return 0.0;
    };
    let (viscous, work) = steps(records).fold((0.0, 0.0), |(v, w), (dt, r)| {
        (v + dt * r.dt_rho_l2 * r.dt_rho_l2, w + dt * r.work)
    });
    (last.free_energy_f + delta * viscous - first.free_energy_f - work).abs()
}

/// Largest single-step increase of `E` (negative when `E` strictly decays).
pub fn lyapunov_max_increase(records: &[DiagnosticsRecord]) -> f64 {
    records
        .windows(2)
        .map(|w| w[1].lyapunov_e - w[0].lyapunov_e)
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Contributions of the last `fraction` of the steps to
/// `Σ dt ‖∇mu‖²` and `Σ dt ‖∂t rho‖²`.
pub fn tail_sums(records: &[DiagnosticsRecord], fraction: f64) -> (f64, f64) {
    let n_steps = records.len().saturating_sub(1);
    let tail = ((n_steps as f64) * fraction).ceil() as usize;
    let start = records.len().saturating_sub(tail + 1);
    steps(&records[start..]).fold((0.0, 0.0), |(g, d), (dt, r)| {
        (g + dt * r.grad_mu_l2 * r.grad_mu_l2, d + dt * r.dt_rho_l2 * r.dt_rho_l2)
    })
}

/// Discrete `L²(0,T; L²)` distance between two equally sampled trajectories.
pub fn space_time_l2(a: &[Field], b: &[Field], dt: f64) -> f64 {
    a.iter()
        .zip(b)
        .skip(1)
        .map(|(x, y)| {
            let d = x.sub(y).l2_norm();
            dt * d * d
        })
        .sum::<f64>()
        .sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;

    fn state(mu: Vec<f64>, rho: Vec<f64>, len: f64, t: f64) -> State {
        let g = Grid::new_1d(mu.len(), len).unwrap();
        State::new(Field::new(g, mu).unwrap(), Field::new(g, rho).unwrap(), t).unwrap()
    }

    #[test]
    fn lyapunov_examples() {
        let s = state(vec![0.0; 4], vec![0.3; 4], 1.0, 0.0);
        assert_eq!(lyapunov_e(&s, 0.5), 0.0);
        let s = state(vec![1.0; 4], vec![0.5; 4], 1.0, 0.0);
        assert!((lyapunov_e(&s, 0.0) - 0.5).abs() < 1e-15);

        let (mu, rho, eps, h) = ([0.7, 1.9, 0.2], [0.11, 0.52, 0.93], 0.3, 0.4);
        let s = state(mu.to_vec(), rho.to_vec(), 3.0 * h, 0.0);
        let mut oracle = 0.0;
        for k in 0..3 {
            oracle += h * (eps / 2.0 * mu[k] * mu[k] + rho[k] * mu[k] * mu[k]);
        }
        assert!((lyapunov_e(&s, eps) - oracle).abs() <= 1e-12 * oracle);
    }

    #[test]
    fn free_energy_examples() {
        let spec = PotentialSpec::logarithmic(3.0);
        let s = state(vec![0.0; 5], vec![0.5; 5], 1.0, 0.0);
        let f = free_energy_f(&s, &spec);
        assert!((f - 0.056_852_819_440_054_69).abs() < 1e-14);
        assert_eq!(s.rho.h1_seminorm(), 0.0);

        let rho = [0.2, 0.45, 0.8];
        let h = 0.5;
        let s = state(vec![0.0; 3], rho.to_vec(), 1.5, 0.0);
        let mut oracle = 0.0;
        for k in 0..3 {
            let r: f64 = rho[k];
            oracle += h * (r * r.ln() + (1.0 - r) * (1.0 - r).ln() + 3.0 * r * (1.0 - r));
        }
        for k in 0..2 {
            let d = (rho[k + 1] - rho[k]) / h;
            oracle += 0.5 * h * d * d;
        }
        assert!((free_energy_f(&s, &spec) - oracle).abs() <= 1e-12 * oracle.abs());
    }

    #[test]
    fn steady_residual_examples() {
        let spec = PotentialSpec::logarithmic(3.0);
        let s = state(vec![0.0; 4], vec![0.5; 4], 1.0, 0.0);
        assert_eq!(steady_residual(&s, &spec), 0.0);
        let s = state(vec![0.0; 4], vec![0.3; 4], 1.0, 0.0);
        assert!((steady_residual(&s, &spec) - 0.352_702_139_612_796_56).abs() < 1e-14);
    }

    #[test]
    fn residuals_vanish_for_trivial_trajectories() {
        let spec = PotentialSpec::logarithmic(3.0);
        let recs: Vec<_> = (0..5)
            .map(|k| {
                let s = state(vec![0.0; 4], vec![0.3; 4], 1.0, k as f64 * 0.1);
                DiagnosticsRecord::evaluate(&s, None, 0.1, &spec)
            })
            .collect();
        assert_eq!(dissipation_residual(&recs), 0.0);

        let rho = 0.4;
        let mu = spec.f_prime(rho).unwrap();
        let recs: Vec<_> = (0..5)
            .map(|k| {
                let s = state(vec![mu; 4], vec![rho; 4], 1.0, k as f64 * 0.1);
                DiagnosticsRecord::evaluate(&s, None, 0.1, &spec)
            })
            .collect();
        assert_eq!(dissipation_residual(&recs), 0.0);
        assert_eq!(free_energy_balance_residual(&recs, 1.0), 0.0);
    }

    #[test]
    fn csv_row_has_header_arity() {
        let spec = PotentialSpec::default();
        let s = state(vec![1.0; 3], vec![0.5; 3], 1.0, 0.0);
        let row = DiagnosticsRecord::evaluate(&s, None, 0.0, &spec).csv_row();
        assert_eq!(row.split(',').count(), CSV_HEADER.split(',').count());
    }

    #[test]
    fn tail_sums_pick_last_quarter() {
        let spec = PotentialSpec::default();
        let mut recs = Vec::new();
        for k in 0..9 {
            let mu: Vec<f64> = (0..3).map(|i| (i * k) as f64).collect();
            let s = state(mu, vec![0.5; 3], 3.0, k as f64);
            recs.push(DiagnosticsRecord::evaluate(&s, None, 0.0, &spec));
        }
        // 8 steps, last quarter = steps ending at records 7 and 8
        let (g, d) = tail_sums(&recs, 0.25);
        let expect: f64 = recs[7..].iter().map(|r| r.grad_mu_l2.powi(2)).sum();
        assert!((g - expect).abs() < 1e-12);
        assert_eq!(d, 0.0);
    }
}
