//! Wiener-chaos algebra on indicator kernels.
//!
//! On the kernel `1_j` of a cell of length `h` the q-fold multiple integral
//! is a scaled Hermite polynomial of the normalized increment,
//! `I_q(1_j^{⊗q}) = h^{q/2} He_q(Δ/√h)`. Products of such integrals on the
//! same cell linearize into a finite Hermite sum whose integer coefficients
//! are computed here exactly.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

/// Largest order accepted by the public coefficient functions.
pub const MAX_ORDER: u32 = 20;

/// Probabilists' Hermite polynomials `He_0..He_max_order`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HermiteBasis {
    pub max_order: usize,
}

impl HermiteBasis {
    pub fn new(max_order: usize) -> Self {
        Self { max_order }
    }

    /// All values `He_0(x), ..., He_max_order(x)` by the three-term recurrence.
    pub fn eval_all(&self, x: f64) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.max_order + 1);
        out.push(1.0);
        if self.max_order >= 1 {
            out.push(x);
        }
        for q in 1..self.max_order {
            let next = x * out[q] - q as f64 * out[q - 1];
            out.push(next);
        }
        out
    }
}

/// `He_q(x)` for a single order.
pub fn hermite(q: usize, x: f64) -> f64 {
    match q {
        0 => 1.0,
        1 => x,
        _ => {
            let (mut prev, mut cur) = (1.0, x);
            for k in 1..q {
                let next = x * cur - k as f64 * prev;
                prev = cur;
                cur = next;
            }
            cur
        }
    }
}

/// `I_q(1_j^{⊗q})` from the cell increment and the cell length.
///
/// Negative orders give 0 and order 0 gives 1.
pub fn eval_multiple_integral(q: i32, cell_increment: f64, cell_length: f64) -> Result<f64> {
    if !cell_increment.is_finite() {
        return Err(Error::InvalidPathValue);
    }
    if !(cell_length > 0.0) || !cell_length.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "cell length must be positive, got {cell_length}"
        )));
    }
    if q < 0 {
        return Ok(0.0);
    }
    if q == 0 {
        return Ok(1.0);
    }
    let s = cell_length.sqrt();
    Ok(s.powi(q) * hermite(q as usize, cell_increment / s))
}

fn factorial(k: u32) -> Option<u128> {
    (1..=k as u128).try_fold(1u128, |acc, x| acc.checked_mul(x))
}

fn binomial(n: u32, k: u32) -> Option<u128> {
    if k > n {
        return Some(0);
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        // acc * (n - i) / (i + 1) stays integral at every step.
        acc = acc.checked_mul((n - i) as u128)? / (i as u128 + 1);
    }
    Some(acc)
}

/// `ν! C(q1,ν) C(q2,ν)` without the order cap; `None` on overflow.
fn pair_coeff(q1: u32, q2: u32, nu: u32) -> Option<u128> {
    if nu > q1.min(q2) {
        return Some(0);
    }
    factorial(nu)?
        .checked_mul(binomial(q1, nu)?)?
        .checked_mul(binomial(q2, nu)?)
}

fn check_orders(orders: &[u32]) -> Result<()> {
    match orders.iter().find(|&&q| q > MAX_ORDER) {
        Some(&q) => Err(Error::OrderTooLarge(q)),
        None => Ok(()),
    }
}

/// Two-factor product coefficient
/// `c_ν(q1,q2) = 1{0≤ν≤q1∧q2} ν! C(q1,ν) C(q2,ν)`.
pub fn coeff2(q1: u32, q2: u32, nu: u32) -> Result<u128> {
    check_orders(&[q1, q2])?;
    pair_coeff(q1, q2, nu).ok_or(Error::Overflow)
}

/// Three-factor product coefficient as a sum over the number `ν1` of
/// contractions between the second and third factor.
pub fn coeff3(q1: u32, q2: u32, q3: u32, nu: u32) -> Result<u128> {
    check_orders(&[q1, q2, q3])?;
    if 2 * nu > q1 + q2 + q3 {
        return Ok(0);
    }
    let mut total: u128 = 0;
    for nu1 in 0..=q2.min(q3) {
        let upper = (q1 + nu1).min(q2 + q3 - nu1);
        if nu < nu1 || nu > upper {
            continue;
        }
        let inner = pair_coeff(q2, q3, nu1).ok_or(Error::Overflow)?;
        let outer = pair_coeff(q1, q2 + q3 - 2 * nu1, nu - nu1).ok_or(Error::Overflow)?;
        let term = inner.checked_mul(outer).ok_or(Error::Overflow)?;
        total = total.checked_add(term).ok_or(Error::Overflow)?;
    }
    Ok(total)
}

/// True when each order is at most the sum of the other two.
pub fn triangular(q1: u32, q2: u32, q3: u32) -> bool {
    q1 <= q2 + q3 && q2 <= q1 + q3 && q3 <= q1 + q2
}

/// Closed form of the fully contracted coefficient `c_{q̄/2}(q1,q2,q3)`;
/// zero when `q̄` is odd or the triangular condition fails.
pub fn coeff3_top(q1: u32, q2: u32, q3: u32) -> Result<u128> {
    check_orders(&[q1, q2, q3])?;
    if (q1 + q2 + q3) % 2 == 1 || !triangular(q1, q2, q3) {
        return Ok(0);
    }
    let num = factorial(q1)
        .and_then(|a| a.checked_mul(factorial(q2)?))
        .and_then(|a| a.checked_mul(factorial(q3)?))
        .ok_or(Error::Overflow)?;
    let den = factorial((q1 + q2 - q3) / 2)
        .and_then(|a| a.checked_mul(factorial((q2 + q3 - q1) / 2)?))
        .and_then(|a| a.checked_mul(factorial((q1 + q3 - q2) / 2)?))
        .ok_or(Error::Overflow)?;
    Ok(num / den)
}

/// One surviving term `coef · n^{-nu} · I_order` of a linearized product.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LinearTerm {
    pub coef: u128,
    pub nu: u32,
}

/// Linearization of `∏ I_{q_i}(1_j^{⊗q_i})` on one cell of length `1/n` as
/// `Σ coef · n^{-ν} · I_{Σq-2ν}`, built by a left fold of the two-factor rule.
///
/// The result is keyed by the surviving order `Σq - 2ν`.
pub fn linearize_product(orders: &[u32]) -> Result<BTreeMap<u32, LinearTerm>> {
    let (&first, rest) = orders
        .split_first()
        .ok_or_else(|| Error::InvalidParameter("empty order list".into()))?;
    check_orders(orders)?;
    let mut acc: BTreeMap<u32, LinearTerm> = BTreeMap::new();
    acc.insert(first, LinearTerm { coef: 1, nu: 0 });
    for &q in rest {
        let mut next: BTreeMap<u32, LinearTerm> = BTreeMap::new();
        for (&r, term) in &acc {
            for mu in 0..=r.min(q) {
                let c = pair_coeff(r, q, mu).ok_or(Error::Overflow)?;
                let c = c.checked_mul(term.coef).ok_or(Error::Overflow)?;
                let order = r + q - 2 * mu;
                let entry = next.entry(order).or_insert(LinearTerm {
                    coef: 0,
                    nu: term.nu + mu,
                });
                entry.coef = entry.coef.checked_add(c).ok_or(Error::Overflow)?;
            }
        }
        acc = next;
    }
    acc.retain(|_, t| t.coef != 0);
    Ok(acc)
}

/// Evaluate a linearization at a concrete cell increment; used to check the
/// algebra against the direct product of Hermite values.
pub fn eval_linearization(
    terms: &BTreeMap<u32, LinearTerm>,
    cell_increment: f64,
    cell_length: f64,
) -> Result<f64> {
    let mut sum = 0.0;
    for (&order, t) in terms {
        let i = eval_multiple_integral(order as i32, cell_increment, cell_length)?;
        sum += t.coef as f64 * cell_length.powi(t.nu as i32) * i;
    }
    Ok(sum)
}

/// One row of a coefficient table.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CoeffRow {
    pub q1: u32,
    pub q2: u32,
    pub q3: u32,
    pub nu: u32,
    pub c: u128,
}

/// All non-zero three-factor coefficients with orders up to `max_q`.
pub fn coeff_table(max_q: u32) -> Result<Vec<CoeffRow>> {
    let mut rows = Vec::new();
    for q1 in 0..=max_q {
        for q2 in 0..=max_q {
            for q3 in 0..=max_q {
                for nu in 0..=(q1 + q2 + q3) / 2 {
                    let c = coeff3(q1, q2, q3, nu)?;
                    if c != 0 {
                        rows.push(CoeffRow { q1, q2, q3, nu, c });
                    }
                }
            }
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hermite_low_orders() {
        let x = 0.7;
        assert_eq!(hermite(0, x), 1.0);
        assert_eq!(hermite(1, x), x);
        assert!((hermite(2, x) - (x * x - 1.0)).abs() < 1e-15);
        assert!((hermite(3, x) - (x * x * x - 3.0 * x)).abs() < 1e-15);
        let all = HermiteBasis::new(6).eval_all(x);
        for (q, v) in all.iter().enumerate() {
            assert!((v - hermite(q, x)).abs() < 1e-12);
        }
    }

    #[test]
    fn multiple_integral_examples() {
        let (d, h) = (0.3, 0.01);
        assert_eq!(eval_multiple_integral(0, d, h).unwrap(), 1.0);
        assert!((eval_multiple_integral(1, d, h).unwrap() - d).abs() < 1e-15);
        assert!((eval_multiple_integral(2, d, h).unwrap() - (d * d - h)).abs() < 1e-15);
        assert_eq!(eval_multiple_integral(-1, d, h).unwrap(), 0.0);
        assert_eq!(
            eval_multiple_integral(2, f64::NAN, h),
            Err(Error::InvalidPathValue)
        );
    }

    #[test]
    fn coeff_examples() {
        assert_eq!(coeff2(3, 5, 0).unwrap(), 1);
        assert_eq!(coeff2(1, 1, 1).unwrap(), 1);
        assert_eq!(coeff2(2, 2, 1).unwrap(), 4);
        assert_eq!(coeff2(2, 2, 2).unwrap(), 2);
        assert_eq!(coeff2(2, 2, 3).unwrap(), 0);
        assert_eq!(coeff3(2, 2, 2, 3).unwrap(), 8);
        assert_eq!(coeff3(1, 1, 1, 2).unwrap(), 0);
        assert_eq!(coeff3(4, 1, 1, 3).unwrap(), 0);
        assert_eq!(coeff3_top(2, 2, 2).unwrap(), 8);
        assert_eq!(coeff3_top(2, 1, 1).unwrap(), 2);
        assert_eq!(coeff3(2, 1, 1, 2).unwrap(), 2);
        assert_eq!(coeff3_top(5, 1, 1).unwrap(), 0);
        assert_eq!(coeff2(21, 1, 0), Err(Error::OrderTooLarge(21)));
    }

    #[test]
    fn linearize_examples() {
        let one = linearize_product(&[2]).unwrap();
        assert_eq!(one.len(), 1);
        assert_eq!(one[&2], LinearTerm { coef: 1, nu: 0 });
        let sq = linearize_product(&[1, 1]).unwrap();
        assert_eq!(sq[&2], LinearTerm { coef: 1, nu: 0 });
        assert_eq!(sq[&0], LinearTerm { coef: 1, nu: 1 });
        let cube = linearize_product(&[2, 2, 2]).unwrap();
        assert_eq!(cube[&0], LinearTerm { coef: 8, nu: 3 });
    }

    #[test]
    fn linearization_evaluates_to_product() {
        let h = 1.0 / 64.0;
        for &d in &[-0.4, -0.05, 0.0, 0.13, 0.37] {
            for orders in [vec![2, 3], vec![1, 4, 2], vec![3, 3, 1, 2]] {
                let lin = linearize_product(&orders).unwrap();
                let direct: f64 = orders
                    .iter()
                    .map(|&q| eval_multiple_integral(q as i32, d, h).unwrap())
                    .product();
                let via = eval_linearization(&lin, d, h).unwrap();
                assert!((direct - via).abs() < 1e-12 * (1.0 + direct.abs()));
            }
        }
    }

    #[test]
    fn overflow_is_reported() {
        assert!(coeff3(20, 20, 20, 20).is_ok());
        assert_eq!(linearize_product(&[20; 8]), Err(Error::Overflow));
    }
}
