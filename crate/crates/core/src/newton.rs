//! Damped Newton iteration for cell-coupled problems of the form
//!
//! ```text
//! c (x - x_ref) - Δ_h x + f1'(x) [+ f2'(x)] = g,   0 < x < 1
//! ```
//!
//! Every accepted iterate lies in `[floor, 1 - floor]`: the Newton update is
//! halved until it does, at most [`MAX_HALVINGS`] times.

use thiserror::Error;

use crate::grid::{solve_helmholtz, solve_shifted, Field, GridError};
use crate::potential::{f1_prime_raw, f1_second_raw, PotentialSpec};

pub const MAX_HALVINGS: usize = 60;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NewtonError {
    #[error("Newton did not converge: sup residual {residual:.3e} after {iterations} iterations")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("Newton iterate left (0, 1) even after {MAX_HALVINGS} halvings (iteration {iteration}); time step too large?")]
    Escape { iteration: usize },
    #[error("initial guess outside the open interval (0, 1)")]
    GuessOutside,
    #[error(transparent)]
    Linear(#[from] GridError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonStats {
    pub iterations: usize,
    pub residual: f64,
}

#[derive(Debug, Clone)]
pub(crate) struct InteriorNewton<'a> {
    pub spec: &'a PotentialSpec,
    /// Coefficient `c` of the zeroth-order term; 0 for the steady problem.
    pub shift: f64,
    pub anchor: Option<&'a Field>,
    pub rhs: &'a Field,
    /// Whether `f2'` is part of the unknown's nonlinearity.
    pub implicit_smooth: bool,
    pub tol: f64,
    pub max_iter: usize,
    pub linear_tol: f64,
}

impl InteriorNewton<'_> {
    pub fn residual(&self, x: &Field) -> Field {
        let lap = x.laplacian();
        let xs = x.values();
        let values = (0..xs.len())
            .map(|k| {
                let r = xs[k];
                let mut v = f1_prime_raw(r) - lap.values()[k] - self.rhs.values()[k];
                if let Some(anchor) = self.anchor {
                    v += self.shift * (r - anchor.values()[k]);
                } else {
                    v += self.shift * r;
                }
                if self.implicit_smooth {
                    v += self.spec.f2_prime_raw(r);
                }
                v
            })
            .collect();
        Field::from_vec(*x.grid(), values)
    }

    fn jacobian_diagonal(&self, x: &Field) -> Field {
        x.map(|r| {
            let mut d = self.shift + f1_second_raw(r);
            if self.implicit_smooth {
                d += self.spec.f2_second_raw(r);
            }
            d
        })
    }

    fn direction(&self, x: &Field, residual: &Field) -> Result<Field, GridError> {
        let diag = self.jacobian_diagonal(x);
        let neg = residual.scale(-1.0);
        if diag.min() > 0.0 {
            solve_helmholtz(&diag, &neg, self.linear_tol).map(|(d, _)| d)
        } else {
            let d = solve_shifted(x.grid(), diag.values(), neg.values())?;
            Ok(Field::from_vec(*x.grid(), d))
        }
    }

    pub fn solve(&self, guess: Field) -> Result<(Field, NewtonStats), NewtonError> {
        let (lo, hi) = (self.spec.singular_floor, 1.0 - self.spec.singular_floor);
        if guess.values().iter().any(|&r| !(r > 0.0 && r < 1.0)) {
            return Err(NewtonError::GuessOutside);
        }
        let mut x = guess.map(|r| self.spec.clamp_interior(r));
        let mut res = self.residual(&x);
        let mut res_norm = res.sup_norm();
        for iteration in 0..self.max_iter {
            if res_norm <= self.tol {
                return Ok((x, NewtonStats { iterations: iteration, residual: res_norm }));
            }
            let d = self.direction(&x, &res)?;
            let mut theta = 1.0;
            let mut fallback = None;
            let mut accepted = None;
            for _ in 0..=MAX_HALVINGS {
                let trial = x.zip_map(&d, |a, b| a + theta * b);
                if trial.values().iter().all(|&r| r >= lo && r <= hi) {
                    let trial_res = self.residual(&trial);
                    let trial_norm = trial_res.sup_norm();
                    if trial_norm <= (1.0 - 1e-4 * theta) * res_norm {
                        accepted = Some((trial, trial_res, trial_norm));
                        break;
                    }
                    if fallback.is_none() {
                        fallback = Some((trial, trial_res, trial_norm));
                    }
                }
                theta *= 0.5;
            }
            let Some((nx, nres, nnorm)) = accepted.or(fallback) else {
                return Err(NewtonError::Escape { iteration });
            };
            x = nx;
            res = nres;
            res_norm = nnorm;
        }
        if res_norm <= self.tol {
            return Ok((x, NewtonStats { iterations: self.max_iter, residual: res_norm }));
        }
        Err(NewtonError::NoConvergence { iterations: self.max_iter, residual: res_norm })
    }
}
