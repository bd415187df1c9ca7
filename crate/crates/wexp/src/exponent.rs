//! Order calculus for multilinear Wiener forms.
//!
//! A [`ChaosForm`] records how a sequence of Wiener functionals is written:
//! a scale `n^α` in front of an m-fold sum over cells of products of
//! multiple integrals of orders `q_1..q_m`. Its exponent `e` bounds the
//! `L^p` rate, `‖I_n‖_p = O(n^e)`. The bound combinators below transform
//! exponents under projections, derivatives, polynomial powers and
//! integration over localized windows.

use std::cmp::Ordering;
use std::fmt;

use num_rational::Ratio;

use crate::error::{Error, Result};
use crate::stats::{weighted_line, LineFit};

pub type Rational = Ratio<i64>;

fn half() -> Rational {
    Rational::new(1, 2)
}

/// Description of a multilinear form of multiple Wiener integrals.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChaosForm {
    pub alpha: Rational,
    pub orders: Vec<i64>,
    pub label: String,
}

impl ChaosForm {
    pub fn new(alpha: Rational, orders: Vec<i64>, label: impl Into<String>) -> Result<Self> {
        if orders.is_empty() {
            return Err(Error::InvalidParameter(
                "a form needs at least one factor".into(),
            ));
        }
        Ok(Self {
            alpha,
            orders,
            label: label.into(),
        })
    }

    /// Number of factors `m`.
    pub fn m(&self) -> i64 {
        self.orders.len() as i64
    }

    /// Total order `q̄(m)`.
    pub fn total_order(&self) -> i64 {
        self.orders.iter().sum()
    }

    /// Number of factors with positive order.
    pub fn m1(&self) -> i64 {
        self.orders.iter().filter(|&&q| q > 0).count() as i64
    }

    /// Number of factors of order zero.
    pub fn m0(&self) -> i64 {
        self.orders.iter().filter(|&&q| q == 0).count() as i64
    }
}

/// A rational exponent or `-∞`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExponentValue {
    NegInfinity,
    Finite(Rational),
}

impl ExponentValue {
    pub fn finite(self) -> Option<Rational> {
        match self {
            ExponentValue::Finite(r) => Some(r),
            ExponentValue::NegInfinity => None,
        }
    }

    /// Shift by a finite amount; `-∞` absorbs.
    pub fn shift(self, by: Rational) -> Self {
        match self {
            ExponentValue::Finite(r) => ExponentValue::Finite(r + by),
            ExponentValue::NegInfinity => ExponentValue::NegInfinity,
        }
    }

    pub fn to_f64(self) -> f64 {
        match self {
            ExponentValue::Finite(r) => *r.numer() as f64 / *r.denom() as f64,
            ExponentValue::NegInfinity => f64::NEG_INFINITY,
        }
    }
}

impl PartialOrd for ExponentValue {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for ExponentValue {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (ExponentValue::NegInfinity, ExponentValue::NegInfinity) => Ordering::Equal,
            (ExponentValue::NegInfinity, _) => Ordering::Less,
            (_, ExponentValue::NegInfinity) => Ordering::Greater,
            (ExponentValue::Finite(a), ExponentValue::Finite(b)) => a.cmp(b),
        }
    }
}

impl fmt::Display for ExponentValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExponentValue::NegInfinity => write!(f, "-inf"),
            ExponentValue::Finite(r) => write!(f, "{r}"),
        }
    }
}

/// `e = α − q̄/2 + m − m1/2`, or `-∞` when some order is negative.
pub fn exponent(form: &ChaosForm) -> ExponentValue {
    if form.orders.iter().any(|&q| q < 0) {
        return ExponentValue::NegInfinity;
    }
    let e =
        form.alpha - half() * form.total_order() + Rational::from(form.m()) - half() * form.m1();
    ExponentValue::Finite(e)
}

/// Upper bound on the exponent of the projection of `form` along the
/// integrand of order `q`.
///
/// Without refinement the bound drops by ½ only when no factor has order
/// `q`; with `refine` it drops by ½ as soon as one factor differs from `q`.
pub fn project_un(
    form: &ChaosForm,
    q: i64,
    order_set: &[i64],
    refine: bool,
) -> Result<ExponentValue> {
    if q < 2 {
        return Err(Error::InvalidIntegrandOrder(q));
    }
    if !order_set.contains(&q) {
        return Err(Error::OrderNotInSet(q as u32));
    }
    let e = exponent(form);
    let drop = if refine {
        form.orders.iter().any(|&qi| qi != q)
    } else {
        !form.orders.contains(&q)
    };
    Ok(if drop { e.shift(-half()) } else { e })
}

/// Bound for the `i`-th Malliavin derivative: derivatives do not worsen the
/// order.
pub fn project_d(form: &ChaosForm, _i: u32) -> ExponentValue {
    exponent(form)
}

/// Rate `−ξ/2` of a polynomial form with powers `p` of multiple integrals of
/// orders `q`, where `ξ = p·q − m − #{i: p_i ≥ 2 and p_i q_i even}`.
pub fn power_exponent(p: &[i64], q: &[i64]) -> Result<Rational> {
    if p.len() != q.len() {
        return Err(Error::LengthMismatch(p.len(), q.len()));
    }
    if p.iter().chain(q).any(|&v| v < 1) {
        return Err(Error::InvalidParameter(
            "powers and orders must be at least 1".into(),
        ));
    }
    let dot: i64 = p.iter().zip(q).map(|(a, b)| a * b).sum();
    let even = p
        .iter()
        .zip(q)
        .filter(|(&a, &b)| a >= 2 && (a * b) % 2 == 0)
        .count() as i64;
    let xi = dot - p.len() as i64 - even;
    Ok(Rational::new(-xi, 2))
}

/// Rate `−(q̄ − m)/2` of the unscaled m-fold sum; `k` only affects the
/// constant. The scale `n^α` of the form is not included.
pub fn multilinear_bound(k: u32, form: &ChaosForm) -> Result<Rational> {
    if k < 1 {
        return Err(Error::InvalidParameter("k must be at least 1".into()));
    }
    if form.orders.iter().any(|&q| q <= 0) {
        return Err(Error::NonPositiveOrder);
    }
    Ok(Rational::new(-(form.total_order() - form.m()), 2))
}

/// Rate of an integrated functional: the inner rate plus the exponents of
/// the localization window measures.
pub fn integrated_bound(inner_rate: Rational, window_measures: &[Rational]) -> Rational {
    window_measures.iter().fold(inner_rate, |acc, w| acc + w)
}

/// One point of a measured rate curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatePoint {
    pub n: usize,
    pub norm: f64,
    pub se: f64,
}

/// Result of [`measure_rate`].
#[derive(Debug, Clone, PartialEq)]
pub struct RateEstimate {
    pub points: Vec<RatePoint>,
    pub slope: f64,
    pub slope_se: f64,
    pub warnings: Vec<String>,
}

/// Sample `L^p` norm `(mean |x|^p)^{1/p}` with a delta-method standard error.
pub fn lp_norm(xs: &[f64], p: u32) -> (f64, f64) {
    let pw: Vec<f64> = xs.iter().map(|x| x.abs().powi(p as i32)).collect();
    let s = crate::stats::summarize(&pw);
    let norm = s.mean.powf(1.0 / p as f64);
    // d/dm m^{1/p} = m^{1/p - 1} / p
    let se = if s.mean > 0.0 {
        norm / (p as f64 * s.mean) * s.se
    } else {
        0.0
    };
    (norm, se)
}

/// Least-squares slope of `log ‖·‖_p` against `log n`.
///
/// `sampler(n, rep)` returns one replication of the functional at grid size
/// `n`; replications are evaluated in parallel and merged in index order.
/// Points are weighted by the inverse variance of `log ‖·‖_p`.
pub fn measure_rate<F>(sampler: F, n_grid: &[usize], reps: u64, p: u32) -> Result<RateEstimate>
where
    F: Fn(usize, u64) -> Result<f64> + Sync + Send,
{
    if n_grid.len() < 3 {
        return Err(Error::InvalidParameter(
            "n grid needs at least 3 points".into(),
        ));
    }
    if n_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidParameter(
            "n grid must be strictly increasing".into(),
        ));
    }
    if p == 0 || p % 2 == 1 {
        return Err(Error::InvalidParameter(
            "p must be a positive even integer".into(),
        ));
    }
    let mut warnings = Vec::new();
    if reps < 1000 {
        warnings.push(format!("only {reps} replications; rate estimate is noisy"));
    }
    let mut points = Vec::with_capacity(n_grid.len());
    for &n in n_grid {
        let xs = crate::parallel::try_par_map(reps, |rep| sampler(n, rep))?;
        let (norm, se) = lp_norm(&xs, p);
        points.push(RatePoint { n, norm, se });
    }
    let x: Vec<f64> = points.iter().map(|pt| (pt.n as f64).ln()).collect();
    let y: Vec<f64> = points.iter().map(|pt| pt.norm.ln()).collect();
    let w: Vec<f64> = points
        .iter()
        .map(|pt| {
            let rel = pt.se / pt.norm;
            if rel > 0.0 && rel.is_finite() {
                1.0 / (rel * rel)
            } else {
                1.0
            }
        })
        .collect();
    let LineFit {
        slope, slope_se, ..
    } = weighted_line(&x, &y, &w);
    Ok(RateEstimate {
        points,
        slope,
        slope_se,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(a: i64, b: i64) -> Rational {
        Rational::new(a, b)
    }

    fn form(alpha: Rational, orders: &[i64]) -> ChaosForm {
        ChaosForm::new(alpha, orders.to_vec(), "t").unwrap()
    }

    #[test]
    fn exponent_examples() {
        assert_eq!(
            exponent(&form(r(1, 2), &[2])),
            ExponentValue::Finite(r(0, 1))
        );
        assert_eq!(exponent(&form(r(0, 1), &[-1])), ExponentValue::NegInfinity);
        // α = (q1+q2)/2 − 3 with q1 = q2 = 2 and factor orders q − 1.
        assert_eq!(
            exponent(&form(r(-1, 1), &[1, 1])),
            ExponentValue::Finite(r(-1, 1))
        );
    }

    #[test]
    fn exponent_equivalent_forms() {
        let f = form(r(3, 2), &[0, 2, 1, 0]);
        let alt = f.alpha - r(1, 2) * (f.total_order() - f.m1()) + Rational::from(f.m0());
        assert_eq!(exponent(&f), ExponentValue::Finite(alt));
    }

    #[test]
    fn projection_examples() {
        let f2 = form(r(1, 2), &[2]);
        let e2 = exponent(&f2);
        assert_eq!(project_un(&f2, 2, &[2], false).unwrap(), e2);
        let f3 = form(r(1, 2), &[3]);
        assert_eq!(
            project_un(&f3, 2, &[2], false).unwrap(),
            exponent(&f3).shift(r(-1, 2))
        );
        let f1 = form(r(0, 1), &[1]);
        assert_eq!(
            project_un(&f1, 2, &[2], false).unwrap(),
            exponent(&f1).shift(r(-1, 2))
        );
        assert_eq!(
            project_un(&f1, 1, &[2], false),
            Err(Error::InvalidIntegrandOrder(1))
        );
        let mixed = form(r(0, 1), &[2, 3]);
        assert_eq!(
            project_un(&mixed, 2, &[2], false).unwrap(),
            exponent(&mixed)
        );
        assert_eq!(
            project_un(&mixed, 2, &[2], true).unwrap(),
            exponent(&mixed).shift(r(-1, 2))
        );
        assert_eq!(project_d(&f2, 0), e2);
        assert_eq!(project_d(&f2, 1), ExponentValue::Finite(r(0, 1)));
        assert_eq!(project_d(&f3, 3), exponent(&f3));
    }

    #[test]
    fn power_examples() {
        assert_eq!(power_exponent(&[2], &[2]).unwrap(), r(-1, 1));
        assert_eq!(power_exponent(&[1], &[2]).unwrap(), r(-1, 2));
        assert_eq!(power_exponent(&[2, 2], &[1, 1]).unwrap(), r(0, 1));
        assert!(power_exponent(&[1, 2], &[1]).is_err());
    }

    #[test]
    fn multilinear_examples() {
        assert_eq!(
            multilinear_bound(1, &form(r(0, 1), &[2])).unwrap(),
            r(-1, 2)
        );
        assert_eq!(
            multilinear_bound(3, &form(r(0, 1), &[2, 2, 2])).unwrap(),
            r(-3, 2)
        );
        assert_eq!(
            multilinear_bound(1, &form(r(0, 1), &[1, 1])).unwrap(),
            r(0, 1)
        );
        assert_eq!(
            multilinear_bound(1, &form(r(0, 1), &[0, 1])),
            Err(Error::NonPositiveOrder)
        );
    }

    #[test]
    fn integrated_examples() {
        assert_eq!(integrated_bound(r(1, 1), &[r(-1, 1), r(-1, 1)]), r(-1, 1));
        assert_eq!(integrated_bound(r(0, 1), &[]), r(0, 1));
        assert_eq!(integrated_bound(r(1, 2), &[r(-1, 1)]), r(-1, 2));
    }

    #[test]
    fn ordering_with_infinity() {
        assert!(ExponentValue::NegInfinity < ExponentValue::Finite(r(-100, 1)));
        assert_eq!(
            ExponentValue::NegInfinity.shift(r(5, 1)),
            ExponentValue::NegInfinity
        );
    }
}
