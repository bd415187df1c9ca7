//! Random symbols: polynomials in the formal variables `(iz, ix)` whose
//! coefficients are functionals of one Brownian path.
//!
//! The first-order correction of the expansion is
//! `E[S(∂_z, ∂_x) f(G_∞^{1/2} ζ, X_∞)]`, where `S` is the sum of three
//! symbols: a cubic-type part `S30`, a part `S11` carrying the reference
//! variable, and a part `S10` coming from the perturbation term. The
//! quasi-tangent symbol vanishes when no two orders are adjacent and is not
//! represented.
//!
//! Double integrals `∫∫ F(t) H(s) 1{t ≤ c(s)} ds dt` are evaluated as
//! `∫ H(s) C_F(c(s)) ds` with the running integral `C_F`, which is exact
//! along the indicator because every cutoff `c(s)` is a grid node.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::Add;

use crate::chaos::coeff3_top;
use crate::error::{Error, Result};
use crate::paths::WienerGrid;
use crate::quad;
use crate::weights::{factorial_f64, FamilyKind, LimitFields, WeightFamily, WeightFn};

/// `Σ c_{a,b} (iz)^a (ix)^b`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RandomSymbol {
    terms: BTreeMap<(u32, u32), f64>,
}

impl RandomSymbol {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_terms<I: IntoIterator<Item = ((u32, u32), f64)>>(it: I) -> Self {
        let mut s = Self::new();
        for ((a, b), c) in it {
            s.add_term(a, b, c);
        }
        s
    }

    pub fn add_term(&mut self, a: u32, b: u32, c: f64) {
        *self.terms.entry((a, b)).or_insert(0.0) += c;
    }

    /// Coefficient of `(iz)^a (ix)^b`, zero if absent.
    pub fn coef(&self, a: u32, b: u32) -> f64 {
        self.terms.get(&(a, b)).copied().unwrap_or(0.0)
    }

    pub fn terms(&self) -> impl Iterator<Item = ((u32, u32), f64)> + '_ {
        self.terms.iter().map(|(k, v)| (*k, *v))
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Drop exact zeros.
    pub fn pruned(mut self) -> Self {
        self.terms.retain(|_, c| *c != 0.0);
        self
    }

    pub fn scaled(&self, k: f64) -> Self {
        Self {
            terms: self.terms.iter().map(|(m, c)| (*m, c * k)).collect(),
        }
    }
}

impl Add for RandomSymbol {
    type Output = RandomSymbol;

    fn add(mut self, rhs: RandomSymbol) -> RandomSymbol {
        for ((a, b), c) in rhs.terms {
            self.add_term(a, b, c);
        }
        self
    }
}

impl fmt::Display for RandomSymbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        for (i, ((a, b), c)) in self.terms.iter().enumerate() {
            if i > 0 {
                write!(f, " + ")?;
            }
            write!(f, "{c}·(iz)^{a}(ix)^{b}")?;
        }
        Ok(())
    }
}

/// Which statistic the expansion describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SymbolTarget {
    /// The weighted variation `V_n` itself.
    Variation,
    /// `√n (Σ_j a(w_{1-t_j}) (Δ_j w)^2 - ∫ a(w_{1-t}) dt)`, whose
    /// centring adds three terms to `S10`.
    CenteredQuadratic,
}

impl SymbolTarget {
    /// The centred quadratic error for anticipative `Q = {2}` families, the
    /// plain variation otherwise.
    pub fn for_family(fam: &WeightFamily) -> Self {
        if fam.is_quadratic_anticipative() {
            SymbolTarget::CenteredQuadratic
        } else {
            SymbolTarget::Variation
        }
    }
}

/// Running and reverse running integrals needed by the symbols.
struct Tables<'a> {
    lf: &'a LimitFields,
    half: usize,
    /// Index of `q = 2` in the order list.
    two: Option<usize>,
}

impl<'a> Tables<'a> {
    fn new(lf: &'a LimitFields) -> Self {
        Self {
            lf,
            half: quad::node_of(0.5, lf.cells),
            two: lf.order_index(2),
        }
    }

    /// `∫_s ȧ(t_k, s, q) a(s, q) ds` for every node `t_k`.
    fn adot_a_inner(&self, qi: usize) -> Vec<f64> {
        let lf = self.lf;
        let n = lf.cells;
        let prod: Vec<f64> = lf.da[qi]
            .iter()
            .zip(&lf.a[qi])
            .map(|(x, y)| x * y)
            .collect();
        match lf.kind {
            FamilyKind::Anticipative => {
                let c = quad::cumulative(&prod, lf.dt);
                (0..=n).map(|k| c[n - k]).collect()
            }
            FamilyKind::Predictable => quad::tail(&prod, lf.dt),
            FamilyKind::Constant => vec![0.0; n + 1],
        }
    }
}

/// `⅓ Σ_{q1,q2,q3} 1{q̄ even} (q1+q2)(q1-1) c(q1-2,q2-1,q3-1) ∫ a a a`,
/// the triple-product part of the `(iz)^3` coefficient.
fn triple_product_coefficient(lf: &LimitFields) -> Result<f64> {
    let mut total = 0.0;
    let m = lf.orders.len();
    for i1 in 0..m {
        for i2 in 0..m {
            for i3 in 0..m {
                let (q1, q2, q3) = (lf.orders[i1], lf.orders[i2], lf.orders[i3]);
                if (q1 + q2 + q3) % 2 == 1 {
                    continue;
                }
                let c = coeff3_top(q1 - 2, q2 - 1, q3 - 1)?;
                if c == 0 {
                    continue;
                }
                let prod: Vec<f64> = (0..=lf.cells)
                    .map(|k| lf.a[i1][k] * lf.a[i2][k] * lf.a[i3][k])
                    .collect();
                let w = f64::from((q1 + q2) * (q1 - 1)) * c as f64 / 3.0;
                total += w * quad::trapezoid(&prod, lf.dt);
            }
        }
    }
    Ok(total)
}

/// `∫∫ a^{(3,0)}(t,s,q,q) ds dt` for the order at position `qi`.
fn a30_integral(tab: &Tables, qi: usize, two: usize) -> f64 {
    let lf = tab.lf;
    let n = lf.cells;
    let c_a2 = quad::cumulative(&lf.a[two], lf.dt);
    // ȧ(t,2) = a'(anchor of t)·1{t ≤ ½}: its running integral saturates at ½.
    let c_da2 = quad::cumulative(&lf.da[two], lf.dt);
    let diag = lf.kind == FamilyKind::Anticipative;
    let integrand: Vec<f64> = (0..=n)
        .map(|i| {
            let c = lf.cutoff(i);
            let first = (lf.d2a[qi][i] * lf.a[qi][i] + lf.da[qi][i] * lf.da[qi][i]) * c_a2[c];
            let third = if diag {
                lf.da[qi][i] * lf.a[qi][i] * c_da2[c.min(tab.half)]
            } else {
                0.0
            };
            first + third
        })
        .collect();
    quad::trapezoid(&integrand, lf.dt)
}

/// `S30` from precomputed limit fields.
pub fn s30_from_fields(lf: &LimitFields) -> Result<RandomSymbol> {
    let tab = Tables::new(lf);
    let mut s = RandomSymbol::new();
    s.add_term(3, 0, triple_product_coefficient(lf)?);
    let Some(two) = tab.two else {
        return Ok(s);
    };
    let (mut c3, mut c5, mut c31) = (0.0, 0.0, 0.0);
    for (qi, &q) in lf.orders.iter().enumerate() {
        let fact = factorial_f64(q);
        c3 += fact * a30_integral(&tab, qi, two);
        let inner = tab.adot_a_inner(qi);
        let g5: Vec<f64> = (0..=lf.cells)
            .map(|k| 0.5 * lf.dtg[k] * inner[k] * lf.a[two][k])
            .collect();
        let g31: Vec<f64> = (0..=lf.cells)
            .map(|k| lf.dtx(k) * inner[k] * lf.a[two][k])
            .collect();
        c5 += fact * quad::trapezoid(&g5, lf.dt);
        c31 += fact * quad::trapezoid(&g31, lf.dt);
    }
    s.add_term(3, 0, c3);
    s.add_term(5, 0, c5);
    s.add_term(3, 1, c31);
    Ok(s)
}

/// Integral of the diagonal field `ȧ(t,2)` (or `ä(t,2)`) times `weight`.
fn diag_integral(tab: &Tables, field: &[f64], weight: impl Fn(usize) -> f64) -> f64 {
    let lf = tab.lf;
    if lf.kind != FamilyKind::Anticipative {
        return 0.0;
    }
    let v: Vec<f64> = (0..=tab.half).map(|k| field[k] * weight(k)).collect();
    quad::trapezoid(&v, lf.dt)
}

/// `S11` from precomputed limit fields.
pub fn s11_from_fields(lf: &LimitFields) -> RandomSymbol {
    let tab = Tables::new(lf);
    let mut s = RandomSymbol::new();
    let Some(two) = tab.two else {
        return s;
    };
    let a2 = &lf.a[two];
    let xdd: Vec<f64> = (0..=lf.cells).map(|k| lf.xddot(k) * a2[k]).collect();
    let c11 = quad::trapezoid(&xdd, lf.dt) + diag_integral(&tab, &lf.da[two], |k| lf.dtx(k));
    let g31: Vec<f64> = (0..=lf.cells)
        .map(|k| 0.5 * lf.dtg[k] * lf.dtx(k) * a2[k])
        .collect();
    let g12: Vec<f64> = (0..=lf.cells).map(|k| lf.dtx(k).powi(2) * a2[k]).collect();
    s.add_term(1, 1, c11);
    s.add_term(3, 1, quad::trapezoid(&g31, lf.dt));
    s.add_term(1, 2, quad::trapezoid(&g12, lf.dt));
    s
}

/// `S10` from precomputed limit fields, with the centring terms of the
/// quadratic error when requested.
pub fn s10_from_fields(
    lf: &LimitFields,
    fam: &WeightFamily,
    grid: &WienerGrid,
    target: SymbolTarget,
) -> Result<RandomSymbol> {
    let tab = Tables::new(lf);
    let mut s = RandomSymbol::new();
    let Some(two) = tab.two else {
        return Ok(s);
    };
    s.add_term(3, 0, diag_integral(&tab, &lf.da[two], |k| 0.5 * lf.dtg[k]));
    s.add_term(1, 1, diag_integral(&tab, &lf.da[two], |k| lf.dtx(k)));
    s.add_term(1, 0, diag_integral(&tab, &lf.d2a[two], |_| 1.0));
    if target == SymbolTarget::CenteredQuadratic {
        if !fam.is_quadratic_anticipative() {
            return Err(Error::Unsupported(format!(
                "centred quadratic symbol needs an anticipative family with Q = {{2}}, got {fam}"
            )));
        }
        // Centring terms read the weight at w_t, not at the mirrored time.
        let f = fam.weight_fn(2)?;
        let d1: Vec<f64> = grid.values.iter().map(|&x| f.d1(x)).collect();
        let d2: Vec<f64> = grid.values.iter().map(|&x| f.d2(x)).collect();
        let g3: Vec<f64> = d1.iter().zip(&lf.dtg).map(|(a, g)| a * g).collect();
        s.add_term(3, 0, -0.25 * quad::trapezoid(&g3, lf.dt));
        s.add_term(1, 1, -0.5 * quad::trapezoid(&d1, lf.dt));
        s.add_term(1, 0, -0.25 * quad::trapezoid(&d2, lf.dt));
    }
    Ok(s)
}

pub fn symbol_s30(fam: &WeightFamily, grid: &WienerGrid) -> Result<RandomSymbol> {
    s30_from_fields(&fam.limit_fields(grid))
}

pub fn symbol_s11(fam: &WeightFamily, grid: &WienerGrid) -> RandomSymbol {
    s11_from_fields(&fam.limit_fields(grid))
}

pub fn symbol_s10(
    fam: &WeightFamily,
    grid: &WienerGrid,
    target: SymbolTarget,
) -> Result<RandomSymbol> {
    s10_from_fields(&fam.limit_fields(grid), fam, grid, target)
}

/// `S30 + S11 + S10` together with `G_∞`, sharing one set of limit fields.
pub fn full_symbol_with_variance(
    fam: &WeightFamily,
    grid: &WienerGrid,
    target: SymbolTarget,
) -> Result<(RandomSymbol, f64)> {
    let lf = fam.limit_fields(grid);
    let s = s30_from_fields(&lf)? + s11_from_fields(&lf) + s10_from_fields(&lf, fam, grid, target)?;
    Ok((s, fam.g_infinity(grid)))
}

pub fn full_symbol(
    fam: &WeightFamily,
    grid: &WienerGrid,
    target: SymbolTarget,
) -> Result<RandomSymbol> {
    Ok(full_symbol_with_variance(fam, grid, target)?.0)
}

/// `∫∫ a^{(3,0)}(t,s,q,q) ds dt` by a tensor-product trapezoid on every
/// `stride`-th fine node, evaluating the three-term integrand pointwise.
pub fn a30_integral_tensor(
    fam: &WeightFamily,
    grid: &WienerGrid,
    q: u32,
    stride: usize,
) -> Result<f64> {
    let lf = fam.limit_fields(grid);
    let qi = lf.order_index(q).ok_or(Error::OrderNotInSet(q))?;
    let two = lf.order_index(2).ok_or(Error::OrderNotInSet(2))?;
    if stride == 0 || lf.cells % stride != 0 {
        return Err(Error::InvalidParameter(format!(
            "stride {stride} does not divide {} fine cells",
            lf.cells
        )));
    }
    let m = lf.cells / stride;
    let h = stride as f64 * lf.dt;
    let w = |k: usize| if k == 0 || k == m { 0.5 } else { 1.0 };
    let mut total = 0.0;
    for kt in 0..=m {
        let t = kt * stride;
        let mut row = 0.0;
        for ks in 0..=m {
            let s = ks * stride;
            let v = lf.aring(t, s, qi) * lf.a[qi][s] * lf.a[two][t]
                + lf.adot(t, s, qi) * lf.adot(t, s, qi) * lf.a[two][t]
                + lf.adot(t, s, qi) * lf.a[qi][s] * lf.adot_diag(t, two);
            row += w(ks) * v;
        }
        total += w(kt) * row;
    }
    Ok(total * h * h)
}

/// Stride keeping the tensor grid at no more than `256^2` nodes.
pub fn default_stride(fine_cells: usize) -> usize {
    let mut s = 1;
    while fine_cells / s > 256 || fine_cells % s != 0 {
        s += 1;
        if s > fine_cells {
            return fine_cells;
        }
    }
    s
}

/// The three symbols of the quadratic error written out directly in terms
/// of the path, for `a(w_{1-t_j})` weights with `Q = {2}`.
///
/// Inner integrals are recomputed for every outer node, so the cost is
/// quadratic in the number of fine nodes; used as an independent check of
/// the general assembly.
pub fn quadratic_symbols_direct(f: &WeightFn, grid: &WienerGrid) -> [RandomSymbol; 3] {
    let n = grid.fine_len();
    let dt = grid.dt();
    let w = &grid.values;
    // Fields as functions of t on the nodes t_k: plain (at w_t) and
    // mirrored (at w_{1-t}).
    let plain = |g: &dyn Fn(f64) -> f64| -> Vec<f64> { w.iter().map(|&x| g(x)).collect() };
    let mirror = |g: &dyn Fn(f64) -> f64| -> Vec<f64> { (0..=n).map(|k| g(w[n - k])).collect() };
    let a_m = mirror(&|x| f.value(x));
    let d1_m = mirror(&|x| f.d1(x));
    let aa1 = plain(&|x| f.value(x) * f.d1(x));
    let t = |k: usize| k as f64 * dt;
    let dtg: Vec<f64> = (0..=n)
        .map(|k| 4.0 * quad::integrate_between(&aa1, dt, t(k), 1.0))
        .collect();
    let prod_m =
        |x: &[f64], y: &[f64]| -> Vec<f64> { x.iter().zip(y).map(|(p, q)| p * q).collect() };
    let d2_m = mirror(&|x| f.d2(x));
    let aa1_m = prod_m(&d1_m, &a_m);
    let first_m: Vec<f64> = (0..=n)
        .map(|k| d2_m[k] * a_m[k] + d1_m[k] * d1_m[k])
        .collect();
    // [∫_0^{1-t} a'_{1-s} a_{1-s} ds] and the companion inner integral.
    let inner_aa1: Vec<f64> = (0..=n)
        .map(|k| quad::integrate_between(&aa1_m, dt, 0.0, 1.0 - t(k)))
        .collect();
    let inner_first: Vec<f64> = (0..=n)
        .map(|k| quad::integrate_between(&first_m, dt, 0.0, 1.0 - t(k)))
        .collect();

    let a3: Vec<f64> = a_m.iter().map(|x| x * x * x).collect();
    let without: Vec<f64> = (0..=n).map(|k| inner_first[k] * a_m[k]).collect();
    let with: Vec<f64> = (0..=n)
        .map(|k| inner_first[k] * a_m[k] + inner_aa1[k] * d1_m[k])
        .collect();
    let double = quad::integrate_between(&with, dt, 0.0, 0.5)
        + quad::integrate_between(&without, dt, 0.5, 1.0);
    let five: Vec<f64> = (0..=n).map(|k| dtg[k] * inner_aa1[k] * a_m[k]).collect();
    let mixed: Vec<f64> = (0..=n).map(|k| inner_aa1[k] * a_m[k]).collect();
    let s30 = RandomSymbol::from_terms([
        ((3, 0), 4.0 / 3.0 * quad::trapezoid(&a3, dt) + 2.0 * double),
        ((5, 0), quad::trapezoid(&five, dt)),
        ((3, 1), 2.0 * quad::trapezoid(&mixed, dt)),
    ]);

    let dtg_a: Vec<f64> = (0..=n).map(|k| dtg[k] * a_m[k]).collect();
    let s11 = RandomSymbol::from_terms([
        ((1, 1), quad::integrate_between(&d1_m, dt, 0.0, 0.5)),
        ((3, 1), 0.5 * quad::trapezoid(&dtg_a, dt)),
        ((1, 2), quad::trapezoid(&a_m, dt)),
    ]);

    let d1_p = plain(&|x| f.d1(x));
    let d2_p = plain(&|x| f.d2(x));
    let dtg_d1_m: Vec<f64> = (0..=n).map(|k| dtg[k] * d1_m[k]).collect();
    let dtg_d1_p: Vec<f64> = (0..=n).map(|k| dtg[k] * d1_p[k]).collect();
    let s10 = RandomSymbol::from_terms([
        (
            (3, 0),
            0.5 * quad::integrate_between(&dtg_d1_m, dt, 0.0, 0.5)
                - 0.25 * quad::trapezoid(&dtg_d1_p, dt),
        ),
        (
            (1, 1),
            quad::integrate_between(&d1_m, dt, 0.0, 0.5) - 0.5 * quad::trapezoid(&d1_p, dt),
        ),
        (
            (1, 0),
            quad::integrate_between(&d2_m, dt, 0.0, 0.5) - 0.25 * quad::trapezoid(&d2_p, dt),
        ),
    ]);
    [s30, s11, s10]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::paths::sample_wiener;

    fn fam(f: WeightFn) -> WeightFamily {
        WeightFamily::anticipative_quadratic(f).unwrap()
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * b.abs().max(1.0)
    }

    #[test]
    fn unit_weight_symbols() {
        let g = sample_wiener(32, 4, 1, 0).unwrap();
        let one = fam(WeightFn::Const(1.0));
        let s30 = symbol_s30(&one, &g).unwrap().pruned();
        assert_eq!(s30.len(), 1);
        assert!(close(s30.coef(3, 0), 4.0 / 3.0, 1e-14));
        let s11 = symbol_s11(&one, &g).pruned();
        assert_eq!(s11.len(), 1);
        assert!(close(s11.coef(1, 2), 1.0, 1e-14));
        let s10 = symbol_s10(&one, &g, SymbolTarget::CenteredQuadratic)
            .unwrap()
            .pruned();
        assert!(s10.is_empty());
        let full = full_symbol(&one, &g, SymbolTarget::CenteredQuadratic)
            .unwrap()
            .pruned();
        assert_eq!(full.len(), 2);
    }

    #[test]
    fn constant_weight_scales_cubically() {
        let g = sample_wiener(32, 4, 1, 0).unwrap();
        let c = 1.7;
        let s = full_symbol(
            &fam(WeightFn::Const(c)),
            &g,
            SymbolTarget::CenteredQuadratic,
        )
        .unwrap()
        .pruned();
        assert!(close(s.coef(3, 0), 4.0 / 3.0 * c * c * c, 1e-13));
        assert!(close(s.coef(1, 2), c, 1e-13));
        assert_eq!(s.len(), 2);
    }

    #[test]
    fn s10_examples() {
        let g = sample_wiener(32, 4, 2, 0).unwrap();
        let lin = symbol_s10(&fam(WeightFn::Linear), &g, SymbolTarget::CenteredQuadratic).unwrap();
        assert!(lin.coef(1, 0).abs() < 1e-14);
        assert!(lin.coef(1, 1).abs() < 1e-14);
        let sq = symbol_s10(
            &fam(WeightFn::Poly(vec![0.0, 0.0, 1.0])),
            &g,
            SymbolTarget::CenteredQuadratic,
        )
        .unwrap();
        assert!(close(sq.coef(1, 0), 0.5, 1e-14));
    }

    #[test]
    fn no_two_means_no_s11() {
        let g = sample_wiener(16, 2, 2, 0).unwrap();
        let f = WeightFamily::new(FamilyKind::Anticipative, vec![(4, WeightFn::Sin2)]).unwrap();
        assert!(symbol_s11(&f, &g).is_empty());
        assert!(symbol_s10(&f, &g, SymbolTarget::Variation)
            .unwrap()
            .is_empty());
        let s30 = symbol_s30(&f, &g).unwrap();
        assert_eq!(s30.coef(5, 0), 0.0);
    }

    #[test]
    fn general_assembly_matches_direct_formulas() {
        for (seed, f) in [
            (3, WeightFn::Sin2),
            (4, WeightFn::Poly(vec![1.0, 0.3, -0.2, 0.05])),
            (5, WeightFn::Linear),
        ] {
            let g = sample_wiener(16, 16, seed, 0).unwrap();
            let fm = fam(f.clone());
            let lf = fm.limit_fields(&g);
            let general = [
                s30_from_fields(&lf).unwrap(),
                s11_from_fields(&lf),
                s10_from_fields(&lf, &fm, &g, SymbolTarget::CenteredQuadratic).unwrap(),
            ];
            let direct = quadratic_symbols_direct(&f, &g);
            for (x, y) in general.iter().zip(&direct) {
                for ((a, b), c) in y.terms() {
                    assert!(
                        close(x.coef(a, b), c, 1e-4),
                        "{f} ({a},{b}): {} vs {c}",
                        x.coef(a, b)
                    );
                }
            }
        }
    }

    #[test]
    fn tensor_cross_check() {
        let g = sample_wiener(64, 8, 9, 0).unwrap();
        let fm = fam(WeightFn::Sin2);
        let lf = fm.limit_fields(&g);
        let tab = Tables::new(&lf);
        let fast = a30_integral(&tab, 0, 0);
        let slow = a30_integral_tensor(&fm, &g, 2, 1).unwrap();
        assert!(close(slow, fast, 5e-3), "{slow} vs {fast}");
        let coarse = a30_integral_tensor(&fm, &g, 2, default_stride(512)).unwrap();
        assert!(close(coarse, fast, 2e-2), "{coarse} vs {fast}");
    }

    #[test]
    fn refinement_stability() {
        let coarse = sample_wiener(32, 16, 6, 0).unwrap();
        let mut dw = Vec::with_capacity(coarse.dw.len() * 2);
        // Brownian bridge refinement of each fine cell keeps the same path.
        let mut rng = crate::rng::seed_stream(6, 0, crate::rng::Purpose::Custom(1)).rng();
        let sd = (coarse.dt() / 4.0).sqrt();
        for d in &coarse.dw {
            let z = crate::rng::normal(&mut rng) * sd;
            dw.push(0.5 * d + z);
            dw.push(0.5 * d - z);
        }
        let fine = WienerGrid::from_increments(32, 32, dw).unwrap();
        let fm = fam(WeightFn::Sin2);
        let a = full_symbol(&fm, &coarse, SymbolTarget::CenteredQuadratic).unwrap();
        let b = full_symbol(&fm, &fine, SymbolTarget::CenteredQuadratic).unwrap();
        for ((m, k), c) in b.terms() {
            assert!(
                close(a.coef(m, k), c, 1e-3),
                "({m},{k}) {} vs {c}",
                a.coef(m, k)
            );
        }
    }

    #[test]
    fn symbol_arithmetic() {
        let a = RandomSymbol::from_terms([((3, 0), 1.0), ((1, 2), 2.0)]);
        let b = RandomSymbol::from_terms([((3, 0), 0.5)]);
        let s = a.clone() + b;
        assert_eq!(s.coef(3, 0), 1.5);
        assert_eq!(s.coef(1, 2), 2.0);
        assert_eq!(s.coef(5, 0), 0.0);
        assert_eq!(a.scaled(2.0).coef(1, 2), 4.0);
    }
}
