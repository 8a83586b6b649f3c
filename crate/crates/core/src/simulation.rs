//! Driving the stepper over a time interval.

use crate::config::SimConfig;
use crate::diagnostics::DiagnosticsRecord;
use crate::potential::PotentialSpec;
use crate::stepper::{State, StepError, StepParams, Stepper};
use crate::Error;

/// A stepper with its current state. Times are kept as exact multiples of
/// `dt` from the start so repeated runs agree bit for bit.
#[derive(Debug, Clone)]
pub struct Simulation {
    stepper: Stepper,
    state: State,
    start: f64,
    steps: usize,
}

impl Simulation {
    pub fn new(spec: PotentialSpec, params: StepParams, initial: State) -> Result<Self, StepError> {
        let stepper = Stepper::new(spec, params, &initial)?;
        Ok(Self { stepper, start: initial.time, state: initial, steps: 0 })
    }

    pub fn from_config(config: &SimConfig) -> Result<Self, Error> {
        let initial = config.initial_state()?;
        Ok(Self::new(config.potential(), config.step_params(), initial)?)
    }

    pub fn state(&self) -> &State {
        &self.state
    }

    pub fn stepper(&self) -> &Stepper {
        &self.stepper
    }

    pub fn steps_taken(&self) -> usize {
        self.steps
    }

    /// Advances one step and returns the state it replaced.
    pub fn advance(&mut self) -> Result<State, StepError> {
        let mut next = self.stepper.step(&self.state)?;
        self.steps += 1;
        next.time = self.start + self.steps as f64 * self.stepper.params().dt;
        Ok(std::mem::replace(&mut self.state, next))
    }

    pub fn record(&self, prev: Option<&State>) -> DiagnosticsRecord {
        DiagnosticsRecord::evaluate(&self.state, prev, self.stepper.params().eps, self.stepper.spec())
    }
}

pub enum RunEvent<'a> {
    Record(&'a DiagnosticsRecord),
    Snapshot { step: usize, state: &'a State },
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub records: Vec<DiagnosticsRecord>,
    pub final_state: State,
    pub steps: usize,
    pub barrier: f64,
}

/// Runs `config` to `t_final`. The observer sees every diagnostics record
/// (the initial one included) and a snapshot every `snapshot_stride` steps
/// and at the final time.
pub fn run(config: &SimConfig, mut observer: impl FnMut(RunEvent<'_>)) -> Result<RunSummary, Error> {
    let mut sim = Simulation::from_config(config)?;
    let n = config.num_steps();
    let stride = config.time.snapshot_stride.max(1);

    let first = sim.record(None);
    observer(RunEvent::Record(&first));
    observer(RunEvent::Snapshot { step: 0, state: sim.state() });
    let mut records = Vec::with_capacity(n + 1);
    records.push(first);

    for k in 1..=n {
        let prev = sim.advance()?;
        let rec = sim.record(Some(&prev));
        observer(RunEvent::Record(&rec));
        records.push(rec);
        if k % stride == 0 || k == n {
            observer(RunEvent::Snapshot { step: k, state: sim.state() });
        }
    }
    Ok(RunSummary {
        records,
        barrier: sim.stepper().barrier(),
        final_state: sim.state,
        steps: n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Preset;

    #[test]
    fn run_hits_final_time_exactly() {
        let mut c = SimConfig::homogeneous_preset();
        c.time.dt = 0.1;
        c.time.t_final = 0.95;
        c.time.snapshot_stride = 4;
        let mut snaps = Vec::new();
        let summary = run(&c, |e| {
            if let RunEvent::Snapshot { step, .. } = e {
                snaps.push(step)
            }
        })
        .unwrap();
        assert_eq!(summary.steps, 10);
        assert_eq!(summary.records.len(), 11);
        assert_eq!(summary.final_state.time, 10.0 * 0.1);
        assert_eq!(snaps, vec![0, 4, 8, 10]);
    }

    #[test]
    fn zero_mu_stays_zero() {
        let mut c = SimConfig::tanh_preset();
        c.grid.cells = vec![32];
        c.initial.mu0 = Preset::Homogeneous(0.0);
        c.time.t_final = 0.05;
        let summary = run(&c, |_| {}).unwrap();
        assert!(summary.records.iter().all(|r| r.mean_mu == 0.0 && r.min_mu == 0.0));
    }

    #[test]
    fn runs_are_deterministic() {
        let mut c = SimConfig::default();
        c.grid.cells = vec![12, 10];
        c.grid.extent = vec![1.0, 0.8];
        c.initial.rho0 = Preset::RandomBand { seed: 5, lo: 0.2, hi: 0.7 };
        c.time.dt = 0.01;
        c.time.t_final = 0.05;
        let a = run(&c, |_| {}).unwrap();
        let b = run(&c, |_| {}).unwrap();
        assert_eq!(a.records, b.records);
        assert_eq!(a.final_state, b.final_state);
    }
}
