//! Linear solvers for `diag(a) - Δ_h`.
//!
//! With `a > 0` the matrix is a symmetric M-matrix; nonnegative right-hand
//! sides give nonnegative solutions. The direct paths (dense elimination for
//! tiny grids, the Thomas sweep in 1D) keep that sign property exactly in
//! floating point because every update adds nonnegative terms. The CG path
//! only reaches it up to the tolerance, so it is followed by a Gauss-Seidel
//! polish from the clipped iterate, which stays nonnegative sweep by sweep.

use super::{Field, Grid, GridError};

/// Grids up to this many cells use dense elimination.
pub const DENSE_MAX_CELLS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverPath {
    Dense,
    Tridiagonal,
    ConjugateGradient,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HelmholtzInfo {
    pub path: SolverPath,
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Solves `a ⊙ v - Δ_h v = rhs` with homogeneous Neumann conditions.
pub fn solve_helmholtz(a: &Field, rhs: &Field, tol: f64) -> Result<(Field, HelmholtzInfo), GridError> {
    let grid = *a.grid();
    if grid.cells() != rhs.grid().cells() {
        return Err(GridError::GridMismatch);
    }
    if let Some((index, &value)) = a.values().iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
        return Err(GridError::NonPositiveCoefficient { index, value });
    }
    if let Some((index, &value)) = rhs.values().iter().enumerate().find(|(_, v)| !v.is_finite()) {
        return Err(GridError::NonFinite { index, value });
    }
    let rhs_norm = l2(rhs.values());
    if rhs_norm == 0.0 {
        let info = HelmholtzInfo { path: SolverPath::Dense, iterations: 0, relative_residual: 0.0 };
        return Ok((Field::zeros(grid), info));
    }
    let (v, path, iterations) = if grid.len() <= DENSE_MAX_CELLS {
        (dense_elimination(&grid, a.values(), rhs.values())?, SolverPath::Dense, 1)
    } else if grid.dim() == 1 {
        (thomas(&grid, a.values(), rhs.values())?, SolverPath::Tridiagonal, 1)
    } else {
        let (v, it) = pcg(&grid, a.values(), rhs.values(), tol)?;
        (v, SolverPath::ConjugateGradient, it)
    };
    let v = Field::from_vec(grid, v);
    let residual = l2(v.apply_helmholtz(a).sub(rhs).values()) / rhs_norm;
    if path == SolverPath::ConjugateGradient && residual > tol {
        return Err(GridError::NoConvergence { iterations, residual });
    }
    Ok((v, HelmholtzInfo { path, iterations, relative_residual: residual }))
}

/// Solves `diag(d) - Δ_h` for arbitrary (possibly negative) `d`, by banded
/// LU with partial pivoting. Used where the operator may be indefinite.
pub fn solve_shifted(grid: &Grid, d: &[f64], rhs: &[f64]) -> Result<Vec<f64>, GridError> {
    let n = grid.len();
    if d.len() != n || rhs.len() != n {
        return Err(GridError::Length { expected: n, got: d.len().min(rhs.len()) });
    }
    let band = if grid.dim() == 2 { grid.cells()[1] } else { 1 };
    let mut m = BandMatrix::new(n, band);
    let diag = grid.neg_laplacian_diagonal();
    for p in 0..n {
        m.set(p, p, d[p] + diag[p]);
    }
    grid.for_each_face(|p, q, w| {
        m.set(p, q, -w);
        m.set(q, p, -w);
    });
    m.solve(rhs.to_vec())
}

fn l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dense_elimination(grid: &Grid, a: &[f64], rhs: &[f64]) -> Result<Vec<f64>, GridError> {
    let n = grid.len();
    let mut m = vec![0.0; n * n];
    let diag = grid.neg_laplacian_diagonal();
    for p in 0..n {
        m[p * n + p] = a[p] + diag[p];
    }
    grid.for_each_face(|p, q, w| {
        m[p * n + q] = -w;
        m[q * n + p] = -w;
    });
    let mut b = rhs.to_vec();
    // No pivoting: Schur complements of an M-matrix stay M-matrices.
    for k in 0..n {
        let pivot = m[k * n + k];
        if !(pivot > 0.0) {
            return Err(GridError::Singular(k));
        }
        for r in k + 1..n {
            let l = m[r * n + k] / pivot;
            if l == 0.0 {
                continue;
            }
            for c in k + 1..n {
                m[r * n + c] -= l * m[k * n + c];
            }
            b[r] -= l * b[k];
        }
    }
    let mut x = vec![0.0; n];
    for k in (0..n).rev() {
        let s: f64 = (k + 1..n).map(|c| m[k * n + c] * x[c]).sum();
        x[k] = (b[k] - s) / m[k * n + k];
    }
    Ok(x)
}

fn thomas(grid: &Grid, a: &[f64], rhs: &[f64]) -> Result<Vec<f64>, GridError> {
    let n = grid.len();
    let h = grid.spacing(0);
    let w = 1.0 / (h * h);
    let mut c_prime = vec![0.0; n];
    let mut d_prime = vec![0.0; n];
    for i in 0..n {
        let neighbours = (i > 0) as usize + (i + 1 < n) as usize;
        let b = a[i] + neighbours as f64 * w;
        let (denom, carry) = if i == 0 {
            (b, 0.0)
        } else {
            (b - w * c_prime[i - 1], w * d_prime[i - 1])
        };
        if !(denom > 0.0) {
            return Err(GridError::Singular(i));
        }
        c_prime[i] = if i + 1 < n { w / denom } else { 0.0 };
        d_prime[i] = (rhs[i] + carry) / denom;
    }
    // c_prime holds -(super-diagonal)/denom, so back substitution adds.
    let mut x = d_prime;
    for i in (0..n - 1).rev() {
        x[i] += c_prime[i] * x[i + 1];
    }
    Ok(x)
}

fn apply(grid: &Grid, diag: &[f64], a: &[f64], v: &[f64], out: &mut [f64]) {
    for p in 0..v.len() {
        out[p] = (a[p] + diag[p]) * v[p];
    }
    grid.for_each_face(|p, q, w| {
        out[p] -= w * v[q];
        out[q] -= w * v[p];
    });
}

fn pcg(grid: &Grid, a: &[f64], rhs: &[f64], tol: f64) -> Result<(Vec<f64>, usize), GridError> {
    let n = grid.len();
    let diag = grid.neg_laplacian_diagonal();
    let inv_diag: Vec<f64> = (0..n).map(|p| 1.0 / (a[p] + diag[p])).collect();
    let target = tol * l2(rhs);
    let max_iter = 10 * n;

    let mut x = vec![0.0; n];
    let mut r = vec![0.0; n];
    let mut z = vec![0.0; n];
    let mut ap = vec![0.0; n];
    let mut iterations = 0;
    // The recursive residual drifts from the true one, so CG is restarted
    // from the true residual until that meets the target.
    loop {
        apply(grid, &diag, a, &x, &mut ap);
        for k in 0..n {
            r[k] = rhs[k] - ap[k];
        }
        if l2(&r) <= target {
            break;
        }
        if iterations >= max_iter {
            return Err(GridError::NoConvergence { iterations, residual: l2(&r) / l2(rhs) });
        }
        for k in 0..n {
            z[k] = r[k] * inv_diag[k];
        }
        let mut p = z.clone();
        let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        while l2(&r) > 0.5 * target && iterations < max_iter {
            apply(grid, &diag, a, &p, &mut ap);
            let alpha = rz / p.iter().zip(&ap).map(|(a, b)| a * b).sum::<f64>();
            for k in 0..n {
                x[k] += alpha * p[k];
                r[k] -= alpha * ap[k];
                z[k] = r[k] * inv_diag[k];
            }
            let rz_next: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
            let beta = rz_next / rz;
            rz = rz_next;
            for k in 0..n {
                p[k] = z[k] + beta * p[k];
            }
            iterations += 1;
        }
    }

    if rhs.iter().all(|&b| b >= 0.0) && x.iter().any(|&v| v < 0.0) {
        iterations += polish_nonnegative(grid, &diag, a, rhs, &mut x, target, max_iter)?;
    }
    Ok((x, iterations))
}

/// Gauss-Seidel sweeps from the clipped iterate. Each update is a nonnegative
/// combination of nonnegative values, so the iterate never turns negative.
fn polish_nonnegative(
    grid: &Grid,
    diag: &[f64],
    a: &[f64],
    rhs: &[f64],
    x: &mut [f64],
    target: f64,
    max_sweeps: usize,
) -> Result<usize, GridError> {
    let n = x.len();
    for v in x.iter_mut() {
        *v = v.max(0.0);
    }
    let mut neighbours: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    grid.for_each_face(|p, q, w| {
        neighbours[p].push((q, w));
        neighbours[q].push((p, w));
    });
    let mut ax = vec![0.0; n];
    for sweep in 0..max_sweeps {
        apply(grid, diag, a, x, &mut ax);
        let res = ax.iter().zip(rhs).map(|(u, b)| (u - b) * (u - b)).sum::<f64>().sqrt();
        if res <= target {
            return Ok(sweep);
        }
        for order in [false, true] {
            for k in 0..n {
                let p = if order { n - 1 - k } else { k };
                let s: f64 = neighbours[p].iter().map(|&(q, w)| w * x[q]).sum();
                x[p] = (rhs[p] + s) / (a[p] + diag[p]);
            }
        }
    }
    Err(GridError::NoConvergence { iterations: max_sweeps, residual: f64::NAN })
}

/// Square band matrix with lower bandwidth `kl` and room for the fill-in of
/// partial pivoting (upper bandwidth `2 kl`).
struct BandMatrix {
    n: usize,
    kl: usize,
    width: usize,
    data: Vec<f64>,
}

impl BandMatrix {
    fn new(n: usize, kl: usize) -> Self {
        let width = 3 * kl + 1;
        Self { n, kl, width, data: vec![0.0; n * width] }
    }

    #[inline]
    fn idx(&self, r: usize, c: usize) -> usize {
        debug_assert!(c + self.kl >= r && c <= r + 2 * self.kl);
        r * self.width + (c + self.kl - r)
    }

    fn set(&mut self, r: usize, c: usize, v: f64) {
        let i = self.idx(r, c);
        self.data[i] = v;
    }

    fn get(&self, r: usize, c: usize) -> f64 {
        self.data[self.idx(r, c)]
    }

    fn solve(mut self, mut b: Vec<f64>) -> Result<Vec<f64>, GridError> {
        let (n, kl) = (self.n, self.kl);
        for k in 0..n {
            let last_row = (k + kl).min(n - 1);
            let (mut piv, mut best) = (k, self.get(k, k).abs());
            for r in k + 1..=last_row {
                let v = self.get(r, k).abs();
                if v > best {
                    piv = r;
                    best = v;
                }
            }
            if best == 0.0 {
                return Err(GridError::Singular(k));
            }
            let last_col = (k + 2 * kl).min(n - 1);
            if piv != k {
                for c in k..=last_col {
                    let (i, j) = (self.idx(k, c), self.idx(piv, c));
                    self.data.swap(i, j);
                }
                b.swap(k, piv);
            }
            let pivot = self.get(k, k);
            for r in k + 1..=last_row {
                let l = self.get(r, k) / pivot;
                if l == 0.0 {
                    continue;
                }
                for c in k + 1..=last_col {
                    let v = self.get(k, c);
                    let i = self.idx(r, c);
                    self.data[i] -= l * v;
                }
                b[r] -= l * b[k];
            }
        }
        let mut x = vec![0.0; n];
        for k in (0..n).rev() {
            let last_col = (k + 2 * kl).min(n - 1);
            let s: f64 = (k + 1..=last_col).map(|c| self.get(k, c) * x[c]).sum();
            x[k] = (b[k] - s) / self.get(k, k);
        }
        Ok(x)
    }
}
