//! Double-well potential `f = f1 + f2` on the open interval (0, 1).
//!
//! `f1` is the singular convex part (logarithmic), `f2` the smooth part with
//! bounded curvature. The singular part blows down at both ends:
//! `f1'(r) -> -inf` as `r -> 0+` and `f1'(r) -> +inf` as `r -> 1-`.

use thiserror::Error;

/// Default weight of the smooth well `f2(r) = lambda * r * (1 - r)`.
pub const DEFAULT_LAMBDA: f64 = 3.0;
/// Default clamp distance from {0, 1} used inside Newton line searches.
pub const DEFAULT_SINGULAR_FLOOR: f64 = 1e-12;

const BISECTION_REL_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum PotentialError {
    #[error("argument {0} outside the open interval (0, 1)")]
    Domain(f64),
    #[error("lower barrier needs a positive infimum of rho0, got {0}")]
    NonPositiveInfimum(f64),
    #[error("invalid potential table: {0}")]
    Table(&'static str),
}

/// Tabulated smooth part, given by nodes `(r_k, f2'(r_k))` spanning [0, 1].
///
/// `f2'` is piecewise linear between nodes, `f2` is its exact antiderivative
/// with `f2(0) = 0`, and `f2''` is piecewise constant.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothTable {
    nodes: Vec<(f64, f64)>,
    /// `f2` at each node, accumulated by the trapezoid rule (exact here).
    integral: Vec<f64>,
}

impl SmoothTable {
    pub fn new(nodes: Vec<(f64, f64)>) -> Result<Self, PotentialError> {
        if nodes.len() < 2 {
            return Err(PotentialError::Table("need at least two nodes"));
        }
        if nodes.iter().any(|(r, v)| !r.is_finite() || !v.is_finite()) {
            return Err(PotentialError::Table("non-finite node"));
        }
        if nodes.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(PotentialError::Table("node positions must strictly increase"));
        }
        if nodes[0].0 != 0.0 || nodes[nodes.len() - 1].0 != 1.0 {
            return Err(PotentialError::Table("nodes must start at 0 and end at 1"));
        }
        let mut integral = Vec::with_capacity(nodes.len());
        integral.push(0.0);
        for w in nodes.windows(2) {
            let last = *integral.last().unwrap();
            integral.push(last + 0.5 * (w[1].0 - w[0].0) * (w[0].1 + w[1].1));
        }
        Ok(Self { nodes, integral })
    }

    pub fn nodes(&self) -> &[(f64, f64)] {
        &self.nodes
    }

    fn segment(&self, r: f64) -> usize {
        let k = self.nodes.partition_point(|(x, _)| *x <= r);
        k.clamp(1, self.nodes.len() - 1) - 1
    }

    fn value(&self, r: f64) -> f64 {
        let k = self.segment(r);
        let (x0, v0) = self.nodes[k];
        let slope = self.slope(k);
        let s = r - x0;
        self.integral[k] + v0 * s + 0.5 * slope * s * s
    }

    fn derivative(&self, r: f64) -> f64 {
        let k = self.segment(r);
        let (x0, v0) = self.nodes[k];
        v0 + self.slope(k) * (r - x0)
    }

    fn curvature(&self, r: f64) -> f64 {
        self.slope(self.segment(r))
    }

    fn slope(&self, k: usize) -> f64 {
        let (x0, v0) = self.nodes[k];
        let (x1, v1) = self.nodes[k + 1];
        (v1 - v0) / (x1 - x0)
    }

    /// Piecewise linear, so the supremum sits at a node.
    fn sup_abs_derivative(&self) -> f64 {
        self.nodes.iter().map(|(_, v)| v.abs()).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub enum PotentialKind {
    /// `f2(r) = lambda r (1 - r)`.
    #[default]
    Logarithmic,
    /// Logarithmic singular part with a tabulated smooth part.
    CustomTable(SmoothTable),
}

/// The split potential `f = f1 + f2`, with `f1(r) = r ln r + (1-r) ln(1-r)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PotentialSpec {
    pub kind: PotentialKind,
    pub lambda: f64,
    pub singular_floor: f64,
}

impl Default for PotentialSpec {
    fn default() -> Self {
        Self::logarithmic(DEFAULT_LAMBDA)
    }
}

fn check_open_unit(r: f64) -> Result<f64, PotentialError> {
    if r > 0.0 && r < 1.0 {
        Ok(r)
    } else {
        Err(PotentialError::Domain(r))
    }
}

impl PotentialSpec {
    pub fn logarithmic(lambda: f64) -> Self {
        Self {
            kind: PotentialKind::Logarithmic,
            lambda,
            singular_floor: DEFAULT_SINGULAR_FLOOR,
        }
    }

    pub fn custom_table(table: SmoothTable) -> Self {
        Self {
            kind: PotentialKind::CustomTable(table),
            lambda: 0.0,
            singular_floor: DEFAULT_SINGULAR_FLOOR,
        }
    }

    pub fn f1(&self, r: f64) -> Result<f64, PotentialError> {
        check_open_unit(r).map(f1_raw)
    }

    pub fn f1_prime(&self, r: f64) -> Result<f64, PotentialError> {
        check_open_unit(r).map(f1_prime_raw)
    }

    pub fn f2(&self, r: f64) -> Result<f64, PotentialError> {
        check_open_unit(r).map(|r| self.f2_raw(r))
    }

    pub fn f2_prime(&self, r: f64) -> Result<f64, PotentialError> {
        check_open_unit(r).map(|r| self.f2_prime_raw(r))
    }

    pub fn f(&self, r: f64) -> Result<f64, PotentialError> {
        check_open_unit(r).map(|r| self.f_raw(r))
    }

    pub fn f_prime(&self, r: f64) -> Result<f64, PotentialError> {
        check_open_unit(r).map(|r| self.f_prime_raw(r))
    }

    /// `M = sup |f2'|` over (0, 1).
    pub fn sup_abs_f2_prime(&self) -> f64 {
        match &self.kind {
            PotentialKind::Logarithmic => self.lambda.abs(),
            PotentialKind::CustomTable(t) => t.sup_abs_derivative(),
        }
    }

    /// Uniform lower barrier `r* = min(rho0_min, r_M)` with `f1'(r_M) = -M`.
    ///
    /// Any trajectory started with `rho0 >= rho0_min` and `mu >= 0` stays
    /// above the returned value, whatever the viscosity `eps`.
    pub fn lower_barrier(&self, rho0_min: f64) -> Result<f64, PotentialError> {
        if !(rho0_min > 0.0) {
            return Err(PotentialError::NonPositiveInfimum(rho0_min));
        }
        let m = self.sup_abs_f2_prime();
        Ok(rho0_min.min(self.f1_prime_root_below_half(-m)))
    }

    /// Root of `f1'(r) = target` for `target <= 0`, by bisection on (0, 1/2].
    ///
    /// Returns the left bracket end, so `f1'(result) <= target` always holds.
    fn f1_prime_root_below_half(&self, target: f64) -> f64 {
        let mut hi = 0.5;
        if f1_prime_raw(hi) <= target {
            return hi;
        }
        let mut lo = hi;
        while f1_prime_raw(lo) > target {
            lo *= 0.5;
            if lo < f64::MIN_POSITIVE {
                return f64::MIN_POSITIVE;
            }
        }
        while hi - lo > BISECTION_REL_TOL * hi {
            let mid = 0.5 * (lo + hi);
            if f1_prime_raw(mid) <= target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    }

    /// Clamp into `[floor, 1 - floor]`.
    pub fn clamp_interior(&self, r: f64) -> f64 {
        r.clamp(self.singular_floor, 1.0 - self.singular_floor)
    }

    // Unchecked evaluations for hot loops whose callers already keep r in (0, 1).

    pub(crate) fn f2_raw(&self, r: f64) -> f64 {
        match &self.kind {
            PotentialKind::Logarithmic => self.lambda * r * (1.0 - r),
            PotentialKind::CustomTable(t) => t.value(r),
        }
    }

    pub(crate) fn f2_prime_raw(&self, r: f64) -> f64 {
        match &self.kind {
            PotentialKind::Logarithmic => self.lambda * (1.0 - 2.0 * r),
            PotentialKind::CustomTable(t) => t.derivative(r),
        }
    }

    pub(crate) fn f2_second_raw(&self, r: f64) -> f64 {
        match &self.kind {
            PotentialKind::Logarithmic => -2.0 * self.lambda,
            PotentialKind::CustomTable(t) => t.curvature(r),
        }
    }

    pub(crate) fn f_raw(&self, r: f64) -> f64 {
        f1_raw(r) + self.f2_raw(r)
    }

    pub(crate) fn f_prime_raw(&self, r: f64) -> f64 {
        f1_prime_raw(r) + self.f2_prime_raw(r)
    }
}

pub(crate) fn f1_raw(r: f64) -> f64 {
    r * r.ln() + (1.0 - r) * (1.0 - r).ln()
}

pub(crate) fn f1_prime_raw(r: f64) -> f64 {
    r.ln() - (1.0 - r).ln()
}

pub(crate) fn f1_second_raw(r: f64) -> f64 {
    1.0 / (r * (1.0 - r))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(lambda: f64) -> PotentialSpec {
        PotentialSpec::logarithmic(lambda)
    }

    /// Scalar bisection on an increasing function, kept separate from the
    /// library's own root finder.
    fn bisect(g: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if g(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn f1_values() {
        let p = spec(3.0);
        assert!((p.f1(0.5).unwrap() - 0.5f64.ln()).abs() < 1e-15);
        assert!((p.f1(0.3).unwrap() - p.f1(0.7).unwrap()).abs() < 1e-15);
        // 0.25 ln 0.25 + 0.75 ln 0.75 at 30 digits
        assert!((p.f1(0.25).unwrap() - (-0.562_335_144_618_808_35)).abs() < 1e-15);
    }

    #[test]
    fn derivative_values() {
        let p = spec(3.0);
        assert_eq!(p.f1_prime(0.5).unwrap(), 0.0);
        assert!((p.f1_prime(0.9).unwrap() + p.f1_prime(0.1).unwrap()).abs() < 1e-14);
        let r = bisect(|r| p.f1_prime(r).unwrap() + 3.0, 1e-9, 0.5);
        let analytic = 1.0 / (1.0 + 3f64.exp());
        assert!((r - analytic).abs() < 1e-14);
        assert!((r - 0.047_425_873_177_566_78).abs() < 1e-14);
        assert!((p.f1_prime(r).unwrap() + 3.0).abs() < 1e-12);
        assert!((p.f2(0.25).unwrap() - 3.0 * 0.25 * 0.75).abs() < 1e-15);
        assert!((p.f2_prime(0.25).unwrap() - 1.5).abs() < 1e-15);
        let fp = p.f_prime(0.3).unwrap();
        assert!((fp - (p.f1_prime(0.3).unwrap() + p.f2_prime(0.3).unwrap())).abs() < 1e-15);
    }

    #[test]
    fn domain_errors() {
        let p = spec(3.0);
        for r in [0.0, 1.0, -0.1, 1.5, f64::NAN] {
            assert!(p.f1(r).is_err());
            assert!(p.f1_prime(r).is_err());
            assert!(p.f2(r).is_err());
            assert!(p.f_prime(r).is_err());
        }
    }

    #[test]
    fn singular_limits() {
        let p = spec(3.0);
        assert!(p.f1_prime(1e-6).unwrap() < -10.0);
        assert!(p.f1_prime(1.0 - 1e-6).unwrap() > 10.0);
    }

    #[test]
    fn sup_abs_f2_prime_is_lambda() {
        assert_eq!(spec(3.0).sup_abs_f2_prime(), 3.0);
        assert_eq!(spec(0.0).sup_abs_f2_prime(), 0.0);
        assert_eq!(spec(1.0).sup_abs_f2_prime(), 1.0);
        // brute-force supremum over a fine sample
        let p = spec(3.0);
        let sampled = (1..100_000)
            .map(|k| p.f2_prime(k as f64 / 100_000.0).unwrap().abs())
            .fold(0.0, f64::max);
        assert!(sampled <= 3.0 && sampled > 3.0 - 1e-3);
    }

    #[test]
    fn lower_barrier_examples() {
        let p = spec(3.0);
        let oracle = bisect(|r| p.f1_prime(r).unwrap() + 3.0, 1e-12, 0.5);
        let r = p.lower_barrier(0.2).unwrap();
        assert!((r - oracle).abs() <= 1e-12 * oracle);
        assert!((r - 0.047_425_873_177_566_78).abs() < 1e-13);

        assert_eq!(spec(0.0).lower_barrier(0.4).unwrap(), 0.4);

        // tie: rho0_min equals r_M
        let r_m = p.lower_barrier(0.49).unwrap();
        assert_eq!(p.lower_barrier(r_m).unwrap(), r_m);

        assert!(p.lower_barrier(0.0).is_err());
        assert!(p.lower_barrier(-0.1).is_err());
    }

    #[test]
    fn convexity_on_sample() {
        let p = spec(3.0);
        let h = 1e-5;
        for k in 0..1000 {
            let r = 0.001 + 0.998 * (k as f64 + 0.5) / 1000.0;
            let d2 = p.f1(r + h).unwrap() - 2.0 * p.f1(r).unwrap() + p.f1(r - h).unwrap();
            assert!(d2 > 0.0, "f1 not convex at {r}");
        }
    }

    #[test]
    fn central_difference_is_second_order() {
        let p = spec(3.0);
        let r = 0.3;
        let err = |h: f64| {
            ((p.f1(r + h).unwrap() - p.f1(r - h).unwrap()) / (2.0 * h) - p.f1_prime(r).unwrap())
                .abs()
        };
        let ratio = err(1e-3) / err(5e-4);
        assert!((3.5..=4.5).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn f2_curvature_bounded() {
        let p = spec(3.0);
        for k in 1..1000 {
            let r = k as f64 / 1000.0;
            assert!(p.f2_second_raw(r).abs() <= 2.0 * p.lambda);
        }
    }

    #[test]
    fn custom_table_matches_logarithmic_for_linear_derivative() {
        // f2'(r) = 3 (1 - 2 r) is linear, so a two-node table is exact.
        let table = SmoothTable::new(vec![(0.0, 3.0), (1.0, -3.0)]).unwrap();
        let custom = PotentialSpec::custom_table(table);
        let log = spec(3.0);
        for r in [0.01, 0.2, 0.5, 0.77, 0.99] {
            assert!((custom.f2(r).unwrap() - log.f2(r).unwrap()).abs() < 1e-14);
            assert!((custom.f2_prime(r).unwrap() - log.f2_prime(r).unwrap()).abs() < 1e-14);
        }
        assert_eq!(custom.sup_abs_f2_prime(), 3.0);
        assert_eq!(custom.lower_barrier(0.3).unwrap(), log.lower_barrier(0.3).unwrap());
    }

    #[test]
    fn custom_table_piecewise() {
        let table = SmoothTable::new(vec![(0.0, 1.0), (0.5, -2.0), (1.0, 0.5)]).unwrap();
        let p = PotentialSpec::custom_table(table);
        assert_eq!(p.sup_abs_f2_prime(), 2.0);
        // f2(1) = integral of the piecewise linear derivative
        let expect = 0.25 * (1.0 - 2.0) + 0.25 * (-2.0 + 0.5);
        assert!((p.f2_raw(1.0) - expect).abs() < 1e-15);
        // derivative consistency by central differences inside a segment
        let h = 1e-6;
        let r = 0.7;
        let fd = (p.f2(r + h).unwrap() - p.f2(r - h).unwrap()) / (2.0 * h);
        assert!((fd - p.f2_prime(r).unwrap()).abs() < 1e-8);
        assert!(SmoothTable::new(vec![(0.0, 1.0)]).is_err());
        assert!(SmoothTable::new(vec![(0.1, 1.0), (1.0, 0.0)]).is_err());
        assert!(SmoothTable::new(vec![(0.0, 1.0), (0.0, 0.0), (1.0, 0.0)]).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn barrier_dominates_smooth_force(lambda in 0.0f64..20.0, m in 1e-6f64..0.999) {
                let p = spec(lambda);
                let r = p.lower_barrier(m).unwrap();
                prop_assert!(r <= m);
                prop_assert!(p.f1_prime(r).unwrap() <= -p.sup_abs_f2_prime() + 1e-12);
            }

            #[test]
            fn potential_is_symmetric(lambda in 0.0f64..10.0, r in 1e-6f64..0.999_999) {
                let p = spec(lambda);
                let a = p.f(r).unwrap();
                let b = p.f(1.0 - r).unwrap();
                prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
            }
        }
    }
}
