//! Random weights `a_j(q)` attached to the cells of the variation, and the
//! continuous-time fields they converge to.
//!
//! Three families are supported:
//!
//! * `Anticipative`: `a_j(q) = a_q(w_{1-t_j})`, looking at the path at the
//!   mirrored time `1 - t_j`;
//! * `Predictable`: `a_j(q) = a_q(w_{t_{j-1}})`;
//! * `Constant`: deterministic constants per order.

use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::chaos::MAX_ORDER;
use crate::error::{Error, Result};
use crate::paths::{parse_list, poly_eval, WienerGrid};
use crate::quad;
use crate::rng::{seed_stream, Purpose};

/// A weight function with closed-form derivatives up to order three.
#[derive(Debug, Clone, PartialEq)]
pub enum WeightFn {
    /// `c`
    Const(f64),
    /// `x`
    Linear,
    /// `2 + sin x`
    Sin2,
    /// `Σ c_k x^k`
    Poly(Vec<f64>),
}

pub const WEIGHT_CATALOG: &str =
    "const:c (a=c), linear (a=x), sin2 (a=2+sin x), poly:c0,c1,... (a=Σ c_k x^k)";

impl WeightFn {
    /// `a^{(k)}(x)` for `k ≤ 3`.
    pub fn deriv(&self, k: u32, x: f64) -> f64 {
        match self {
            WeightFn::Const(c) => {
                if k == 0 {
                    *c
                } else {
                    0.0
                }
            }
            WeightFn::Linear => match k {
                0 => x,
                1 => 1.0,
                _ => 0.0,
            },
            WeightFn::Sin2 => match k % 4 {
                0 if k == 0 => 2.0 + x.sin(),
                0 => x.sin(),
                1 => x.cos(),
                2 => -x.sin(),
                _ => -x.cos(),
            },
            WeightFn::Poly(c) => poly_eval(c, x, k),
        }
    }

    pub fn value(&self, x: f64) -> f64 {
        self.deriv(0, x)
    }

    pub fn d1(&self, x: f64) -> f64 {
        self.deriv(1, x)
    }

    pub fn d2(&self, x: f64) -> f64 {
        self.deriv(2, x)
    }

    pub fn is_constant(&self) -> bool {
        match self {
            WeightFn::Const(_) => true,
            WeightFn::Poly(c) => c.iter().skip(1).all(|x| *x == 0.0),
            _ => false,
        }
    }
}

impl fmt::Display for WeightFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WeightFn::Const(c) => write!(f, "const:{c}"),
            WeightFn::Linear => write!(f, "linear"),
            WeightFn::Sin2 => write!(f, "sin2"),
            WeightFn::Poly(c) => {
                let s: Vec<String> = c.iter().map(|x| x.to_string()).collect();
                write!(f, "poly:{}", s.join(","))
            }
        }
    }
}

impl FromStr for WeightFn {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let unknown = || Error::UnknownName {
            kind: "weight",
            name: s.to_string(),
            catalog: WEIGHT_CATALOG,
        };
        let (head, args) = s.split_once(':').unwrap_or((s, ""));
        match head {
            "linear" if args.is_empty() => Ok(WeightFn::Linear),
            "sin2" if args.is_empty() => Ok(WeightFn::Sin2),
            "const" => {
                let v = parse_list(args)?;
                if v.len() == 1 {
                    Ok(WeightFn::Const(v[0]))
                } else {
                    Err(unknown())
                }
            }
            "poly" if !args.is_empty() => Ok(WeightFn::Poly(parse_list(args)?)),
            _ => Err(unknown()),
        }
    }
}

/// Where the weight of cell `j` reads the path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FamilyKind {
    Anticipative,
    Predictable,
    Constant,
}

impl FamilyKind {
    pub fn name(self) -> &'static str {
        match self {
            FamilyKind::Anticipative => "anticipative",
            FamilyKind::Predictable => "predictable",
            FamilyKind::Constant => "constant",
        }
    }
}

impl FromStr for FamilyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "anticipative" => Ok(FamilyKind::Anticipative),
            "predictable" => Ok(FamilyKind::Predictable),
            "constant" => Ok(FamilyKind::Constant),
            _ => Err(Error::UnknownName {
                kind: "family",
                name: s.to_string(),
                catalog: "anticipative, predictable, constant",
            }),
        }
    }
}

/// Compare a derivative handle with a central difference of the function
/// at ten pseudo-random points of `[-2, 2]`.
pub fn check_derivative<F, G>(f: F, df: G, label: &str) -> Result<()>
where
    F: Fn(f64) -> f64,
    G: Fn(f64) -> f64,
{
    let mut rng = seed_stream(0x5eed, 0, Purpose::Custom(7)).rng();
    let eps = 1e-4;
    for _ in 0..10 {
        let x: f64 = rng.random_range(-2.0..2.0);
        let fd = (f(x + eps) - f(x - eps)) / (2.0 * eps);
        let exact = df(x);
        if (fd - exact).abs() > 1e-6 * exact.abs().max(1.0) {
            return Err(Error::DerivativeMismatch(format!(
                "{label} at x={x}: handle {exact}, difference quotient {fd}"
            )));
        }
    }
    Ok(())
}

pub(crate) fn factorial_f64(q: u32) -> f64 {
    (1..=q).map(f64::from).product()
}

/// A weight family: one weight function per order `q ∈ Q`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightFamily {
    pub kind: FamilyKind,
    /// `(q, a_q)` sorted by `q`.
    pub terms: Vec<(u32, WeightFn)>,
}

impl WeightFamily {
    pub fn new(kind: FamilyKind, mut terms: Vec<(u32, WeightFn)>) -> Result<Self> {
        if terms.is_empty() {
            return Err(Error::InvalidParameter("the order set Q is empty".into()));
        }
        terms.sort_by_key(|(q, _)| *q);
        for (q, f) in &terms {
            if *q < 2 {
                return Err(Error::InvalidParameter(format!(
                    "orders must be at least 2, got {q}"
                )));
            }
            if *q > MAX_ORDER {
                return Err(Error::OrderTooLarge(*q));
            }
            if kind == FamilyKind::Constant && !f.is_constant() {
                return Err(Error::InvalidParameter(format!(
                    "constant family needs constant weights, got {f}"
                )));
            }
            check_derivative(|x| f.value(x), |x| f.d1(x), &format!("a_{q}'"))?;
            check_derivative(|x| f.d1(x), |x| f.d2(x), &format!("a_{q}''"))?;
        }
        for w in terms.windows(2) {
            let (q0, q1) = (w[0].0, w[1].0);
            if q0 == q1 {
                return Err(Error::InvalidParameter(format!("order {q0} listed twice")));
            }
            if q1 == q0 + 1 {
                return Err(Error::AdjacentOrders(q0, q1));
            }
        }
        Ok(Self { kind, terms })
    }

    /// The quadratic-variation family `a(w_{1-t_j})` with `Q = {2}`.
    pub fn anticipative_quadratic(f: WeightFn) -> Result<Self> {
        Self::new(FamilyKind::Anticipative, vec![(2, f)])
    }

    pub fn orders(&self) -> Vec<u32> {
        self.terms.iter().map(|(q, _)| *q).collect()
    }

    pub fn contains(&self, q: u32) -> bool {
        self.terms.iter().any(|(p, _)| *p == q)
    }

    pub fn weight_fn(&self, q: u32) -> Result<&WeightFn> {
        self.terms
            .iter()
            .find(|(p, _)| *p == q)
            .map(|(_, f)| f)
            .ok_or(Error::OrderNotInSet(q))
    }

    /// `Q = {2}` with an anticipative weight.
    pub fn is_quadratic_anticipative(&self) -> bool {
        self.kind == FamilyKind::Anticipative && self.terms.len() == 1 && self.terms[0].0 == 2
    }

    fn check_cell(grid: &WienerGrid, j: usize) -> Result<()> {
        if j == 0 || j > grid.n {
            return Err(Error::IndexOutOfRange {
                index: j,
                n: grid.n,
            });
        }
        Ok(())
    }

    /// Fine node where the weight of cell `j` reads the path.
    pub fn anchor_node(&self, grid: &WienerGrid, j: usize) -> usize {
        match self.kind {
            FamilyKind::Anticipative => (grid.n - j) * grid.r,
            FamilyKind::Predictable => (j - 1) * grid.r,
            FamilyKind::Constant => 0,
        }
    }

    /// `(a_j(q), a_q'(anchor), a_q''(anchor))`.
    pub fn weight_derivs_at(&self, grid: &WienerGrid, j: usize, q: u32) -> Result<[f64; 3]> {
        Self::check_cell(grid, j)?;
        let f = self.weight_fn(q)?;
        let x = grid.values[self.anchor_node(grid, j)];
        Ok([f.value(x), f.d1(x), f.d2(x)])
    }

    /// `a_j(q)`.
    pub fn weight_at(&self, grid: &WienerGrid, j: usize, q: u32) -> Result<f64> {
        Ok(self.weight_derivs_at(grid, j, q)?[0])
    }

    /// Length of `I_k ∩ [0, anchor time of cell j]`, which is the
    /// Malliavin derivative of the anchor value in direction `1_k`.
    pub fn overlap(&self, n: usize, j: usize, k: usize) -> f64 {
        let h = 1.0 / n as f64;
        match self.kind {
            FamilyKind::Anticipative if k + j <= n => h,
            FamilyKind::Predictable if k < j => h,
            _ => 0.0,
        }
    }

    /// `D_{1_k} a_j(q)`.
    pub fn gap_dweight(&self, grid: &WienerGrid, j: usize, k: usize, q: u32) -> Result<f64> {
        Self::check_cell(grid, k)?;
        let [_, d1, _] = self.weight_derivs_at(grid, j, q)?;
        Ok(d1 * self.overlap(grid.n, j, k))
    }

    /// `D_{1_i} D_{1_k} a_j(q)`.
    pub fn gap_d2weight(
        &self,
        grid: &WienerGrid,
        j: usize,
        k: usize,
        i: usize,
        q: u32,
    ) -> Result<f64> {
        Self::check_cell(grid, k)?;
        Self::check_cell(grid, i)?;
        let [_, _, d2] = self.weight_derivs_at(grid, j, q)?;
        Ok(d2 * self.overlap(grid.n, j, k) * self.overlap(grid.n, j, i))
    }

    /// `G_∞ = Σ_q q! ∫_0^1 a(t,q)^2 dt`.
    pub fn g_infinity(&self, grid: &WienerGrid) -> f64 {
        let dt = grid.dt();
        self.terms
            .iter()
            .map(|(q, f)| {
                let sq: Vec<f64> = grid.values.iter().map(|&x| f.value(x).powi(2)).collect();
                factorial_f64(*q) * quad::trapezoid(&sq, dt)
            })
            .sum()
    }

    fn chain_integrand(&self, grid: &WienerGrid) -> Vec<f64> {
        let mut out = vec![0.0; grid.values.len()];
        if self.kind == FamilyKind::Constant {
            return out;
        }
        for (q, f) in &self.terms {
            let c = 2.0 * factorial_f64(*q);
            for (o, &x) in out.iter_mut().zip(&grid.values) {
                *o += c * f.value(x) * f.d1(x);
            }
        }
        out
    }

    /// `D_t G_∞ = 2 Σ_q q! ∫_t^1 a_q a_q'(w_s) ds` at time `t`.
    pub fn dt_g_infinity(&self, grid: &WienerGrid, t: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::InvalidParameter(format!("time {t} outside [0,1]")));
        }
        let g = self.chain_integrand(grid);
        Ok(quad::integrate_between(&g, grid.dt(), t, 1.0))
    }

    /// `D_t G_∞` at every fine node.
    pub fn dt_g_profile(&self, grid: &WienerGrid) -> Vec<f64> {
        quad::tail(&self.chain_integrand(grid), grid.dt())
    }

    /// Limit fields of this family along one path.
    pub fn limit_fields(&self, grid: &WienerGrid) -> LimitFields {
        LimitFields::new(self, grid)
    }
}

impl fmt::Display for WeightFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}[", self.kind.name())?;
        for (i, (q, a)) in self.terms.iter().enumerate() {
            if i > 0 {
                write!(f, ";")?;
            }
            write!(f, "{q}:{a}")?;
        }
        write!(f, "]")
    }
}

/// Continuous-time limits of the weights and their derivatives along one
/// path, tabulated on the fine nodes `s_i = i/N`, `N = nR`.
///
/// Two-time fields such as `ȧ(t,s,q)` factor into a value at `s` times the
/// indicator `t ≤ c(s)`, with cutoff `c(s) = 1 - s` for the anticipative
/// family and `c(s) = s` for the predictable one. Cutoffs are grid nodes.
#[derive(Debug, Clone)]
pub struct LimitFields {
    pub kind: FamilyKind,
    pub cells: usize,
    pub dt: f64,
    pub orders: Vec<u32>,
    /// `a(s_i, q)` per order.
    pub a: Vec<Vec<f64>>,
    /// `a_q'` read at the anchor of `s_i`.
    pub da: Vec<Vec<f64>>,
    /// `a_q''` read at the anchor of `s_i`.
    pub d2a: Vec<Vec<f64>>,
    /// `D_{s_i} G_∞`.
    pub dtg: Vec<f64>,
    /// `X_∞ = w_1`.
    pub xinf: f64,
}

impl LimitFields {
    pub fn new(fam: &WeightFamily, grid: &WienerGrid) -> Self {
        let cells = grid.fine_len();
        let anchor = |i: usize| match fam.kind {
            FamilyKind::Anticipative => grid.values[cells - i],
            FamilyKind::Predictable => grid.values[i],
            FamilyKind::Constant => 0.0,
        };
        let mut a = Vec::new();
        let mut da = Vec::new();
        let mut d2a = Vec::new();
        let moving = fam.kind != FamilyKind::Constant;
        for (_, f) in &fam.terms {
            let xs: Vec<f64> = (0..=cells).map(anchor).collect();
            a.push(xs.iter().map(|&x| f.value(x)).collect());
            if moving {
                da.push(xs.iter().map(|&x| f.d1(x)).collect());
                d2a.push(xs.iter().map(|&x| f.d2(x)).collect());
            } else {
                da.push(vec![0.0; cells + 1]);
                d2a.push(vec![0.0; cells + 1]);
            }
        }
        Self {
            kind: fam.kind,
            cells,
            dt: grid.dt(),
            orders: fam.orders(),
            a,
            da,
            d2a,
            dtg: fam.dt_g_profile(grid),
            xinf: grid.terminal(),
        }
    }

    pub fn order_index(&self, q: u32) -> Option<usize> {
        self.orders.iter().position(|&p| p == q)
    }

    /// Last node `t` with `t ≤ c(s_i)`.
    pub fn cutoff(&self, i: usize) -> usize {
        match self.kind {
            FamilyKind::Anticipative => self.cells - i,
            _ => i,
        }
    }

    /// `ȧ(t_k, s_i, q)` for the order at position `qi`.
    pub fn adot(&self, k: usize, i: usize, qi: usize) -> f64 {
        if k <= self.cutoff(i) {
            self.da[qi][i]
        } else {
            0.0
        }
    }

    /// `å(t_k, s_i, q)`.
    pub fn aring(&self, k: usize, i: usize, qi: usize) -> f64 {
        if k <= self.cutoff(i) {
            self.d2a[qi][i]
        } else {
            0.0
        }
    }

    fn on_diagonal(&self, k: usize) -> bool {
        self.kind == FamilyKind::Anticipative && 2 * k <= self.cells
    }

    /// `ȧ(t_k, 2)`, the limit of `n·D_{1_j} a_j(2)`.
    pub fn adot_diag(&self, k: usize, qi: usize) -> f64 {
        if self.on_diagonal(k) {
            self.da[qi][k]
        } else {
            0.0
        }
    }

    /// `ä(t_k, 2)`, the limit of `n^2·D_{1_j}^2 a_j(2)`.
    pub fn addot_diag(&self, k: usize, qi: usize) -> f64 {
        if self.on_diagonal(k) {
            self.d2a[qi][k]
        } else {
            0.0
        }
    }

    /// `D_t X_∞` for `X_∞ = w_1`.
    pub fn dtx(&self, _k: usize) -> f64 {
        1.0
    }

    /// `Ẍ_∞(t)`.
    pub fn xddot(&self, _k: usize) -> f64 {
        0.0
    }

    /// `∫ Σ_q q! ȧ(t,s,q) a(s,q) ds` at node `t_k`.
    ///
    /// Offered as a comparison value for `D_t G_∞`; for the families here
    /// it equals exactly one half of the chain-rule derivative.
    pub fn dtg_identity(&self, k: usize) -> f64 {
        let mut total = 0.0;
        for (qi, &q) in self.orders.iter().enumerate() {
            let integrand: Vec<f64> = (0..=self.cells)
                .map(|i| self.adot(k, i, qi) * self.a[qi][i])
                .collect();
            total += factorial_f64(q) * integrate_indicator(&integrand, self.dt, k, self);
        }
        total
    }
}

/// Trapezoid over the nodes `s_i` whose cutoff admits `t_k`, i.e. the
/// contiguous range where the integrand is switched on.
fn integrate_indicator(v: &[f64], dt: f64, k: usize, lf: &LimitFields) -> f64 {
    let n = lf.cells;
    match lf.kind {
        FamilyKind::Anticipative => quad::trapezoid(&v[..=n - k], dt),
        _ => quad::trapezoid(&v[k..], dt),
    }
}
