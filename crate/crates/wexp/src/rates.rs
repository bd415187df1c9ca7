//! Built-in Wiener functionals with known exponents, used to check the order
//! calculus against Monte Carlo `L^p` norms.

use std::fmt;
use std::str::FromStr;

use crate::chaos::eval_multiple_integral;
use crate::error::{Error, Result};
use crate::estimators::variation;
use crate::exponent::{exponent, measure_rate, ChaosForm, ExponentValue, RateEstimate, Rational};
use crate::paths::{sample_wiener, WienerGrid};
use crate::stats::Kahan;
use crate::weights::{FamilyKind, WeightFamily, WeightFn};

/// A functional of the Brownian path with a representation as a
/// multilinear form.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RateForm {
    /// `n^{1/2} Σ_j I_2(1_j^{⊗2})`, the unit-weight quadratic variation error.
    Variation,
    /// `Σ_j I_2(1_j^{⊗2})`.
    SecondChaos,
    /// `−n Σ_{j,k} (D_{1_k}D_{1_j}a_j) a_k I_1(1_j) I_1(1_k)` for the
    /// anticipative weight `a(x) = 2 + sin x`.
    DoubleDerivative,
    /// `n^{-1/2} (Σ_j I_2(1_j^{⊗2}))²`.
    Square,
    /// `n^{-1} Σ_j A(w_{1−t_j}) − ∫_0^1 A(w_{1−t}) dt` with `A = 2 + sin`.
    RiemannGap,
}

pub const RATE_CATALOG: &str = "vn, chaos2, i4, square, riemann";

/// The four forms whose exponents span `{0, −½, −1, −3/2}`.
pub const ACCEPTANCE_FORMS: [RateForm; 4] = [
    RateForm::Variation,
    RateForm::SecondChaos,
    RateForm::DoubleDerivative,
    RateForm::Square,
];

/// Fine steps per cell for the Riemann gap, whose integral is taken on the
/// fine grid.
pub const RIEMANN_REFINE: usize = 8;

impl RateForm {
    /// Representation fed to the order calculus.
    pub fn chaos_form(&self) -> ChaosForm {
        let r = Rational::new;
        let (alpha, orders) = match self {
            RateForm::Variation => (r(1, 2), vec![2]),
            RateForm::SecondChaos => (r(0, 1), vec![2]),
            // n^{(q1+q2)/2 − 3} Σ (n² DDa) a I_{q1−1} I_{q2−1} with q1 = q2 = 2.
            RateForm::DoubleDerivative => (r(-1, 1), vec![1, 1]),
            RateForm::Square => (r(-1, 2), vec![2, 2]),
            // n^{-1} Σ_j n ∫_{I_j} (A(w_{1−t_j}) − A(w_{1−t})) dt, each summand
            // of the first chaos at leading order.
            RateForm::RiemannGap => (r(-1, 1), vec![1]),
        };
        ChaosForm::new(alpha, orders, self.to_string()).expect("catalog forms are valid")
    }

    pub fn exponent(&self) -> ExponentValue {
        exponent(&self.chaos_form())
    }

    pub fn refine(&self) -> usize {
        match self {
            RateForm::RiemannGap => RIEMANN_REFINE,
            _ => 1,
        }
    }

    /// Value of the functional on one path.
    pub fn evaluate(&self, grid: &WienerGrid) -> Result<f64> {
        let n = grid.n;
        let nf = n as f64;
        let h = grid.h();
        let second_chaos = || -> Result<f64> {
            let mut acc = Kahan::new();
            for d in grid.coarse_increments() {
                acc.add(eval_multiple_integral(2, d, h)?);
            }
            Ok(acc.value())
        };
        match self {
            RateForm::Variation => {
                let fam = WeightFamily::new(FamilyKind::Constant, vec![(2, WeightFn::Const(1.0))])?;
                Ok(variation(&fam, grid)?.v_n)
            }
            RateForm::SecondChaos => second_chaos(),
            RateForm::Square => {
                let s = second_chaos()?;
                Ok(s * s / nf.sqrt())
            }
            RateForm::DoubleDerivative => {
                let fam = WeightFamily::anticipative_quadratic(WeightFn::Sin2)?;
                double_derivative_term(&fam, grid)
            }
            RateForm::RiemannGap => {
                let a = WeightFn::Sin2;
                let fine: Vec<f64> = grid.values.iter().rev().map(|&w| a.value(w)).collect();
                let integral = crate::quad::trapezoid(&fine, grid.dt());
                let mut sum = Kahan::new();
                for j in 1..=n {
                    sum.add(a.value(grid.at_coarse(n - j)));
                }
                Ok(sum.value() / nf - integral)
            }
        }
    }
}

/// `−n Σ_{j,k} (D_{1_k}D_{1_j}a_j) a_k I_1(1_j) I_1(1_k)` for a single-order
/// family with `Q = {2}`, in O(n) through prefix sums of `a_k Δ_k`.
pub fn double_derivative_term(fam: &WeightFamily, grid: &WienerGrid) -> Result<f64> {
    let n = grid.n;
    let q = *fam
        .orders()
        .first()
        .ok_or_else(|| Error::InvalidParameter("empty family".into()))?;
    let dw = grid.coarse_increments();
    let mut derivs = Vec::with_capacity(n);
    let mut prefix = Vec::with_capacity(n + 1);
    prefix.push(0.0);
    let mut acc = Kahan::new();
    for j in 1..=n {
        let d = fam.weight_derivs_at(grid, j, q)?;
        acc.add(d[0] * dw[j - 1]);
        prefix.push(acc.value());
        derivs.push(d);
    }
    // Σ_k overlap(j, k) a_k Δ_k = h · prefix[reach(j)].
    let reach = |j: usize| match fam.kind {
        FamilyKind::Anticipative => n - j,
        FamilyKind::Predictable => j - 1,
        FamilyKind::Constant => 0,
    };
    let h = grid.h();
    let mut total = Kahan::new();
    for j in 1..=n {
        let self_overlap = fam.overlap(n, j, j);
        if self_overlap == 0.0 {
            continue;
        }
        total.add(derivs[j - 1][2] * self_overlap * dw[j - 1] * h * prefix[reach(j)]);
    }
    Ok(-(n as f64) * total.value())
}

impl fmt::Display for RateForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            RateForm::Variation => "vn",
            RateForm::SecondChaos => "chaos2",
            RateForm::DoubleDerivative => "i4",
            RateForm::Square => "square",
            RateForm::RiemannGap => "riemann",
        };
        f.write_str(s)
    }
}

impl FromStr for RateForm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "vn" => Ok(RateForm::Variation),
            "chaos2" => Ok(RateForm::SecondChaos),
            "i4" => Ok(RateForm::DoubleDerivative),
            "square" => Ok(RateForm::Square),
            "riemann" => Ok(RateForm::RiemannGap),
            _ => Err(Error::UnknownName {
                kind: "rate form",
                name: s.to_string(),
                catalog: RATE_CATALOG,
            }),
        }
    }
}

/// Measured `L^p` rate of a catalog form over `n_grid`.
pub fn measure_form_rate(
    form: RateForm,
    n_grid: &[usize],
    reps: u64,
    p: u32,
    seed: u64,
) -> Result<RateEstimate> {
    let r = form.refine();
    measure_rate(
        |n, rep| form.evaluate(&sample_wiener(n, r, seed, rep)?),
        n_grid,
        reps,
        p,
    )
}

/// `64, 128, …, max`.
pub fn dyadic_grid(min: usize, max: usize) -> Vec<usize> {
    std::iter::successors(Some(min), |&n| Some(n * 2))
        .take_while(|&n| n <= max)
        .collect()
}
