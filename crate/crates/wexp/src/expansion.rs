//! Zeroth- and first-order approximations of the law of the statistic and
//! their Monte Carlo comparison with simulated values.
//!
//! The zeroth-order approximation is the mixed normal law of
//! `G_∞^{1/2} ζ` jointly with `X_∞ = w_1`; the first-order one adds
//! `n^{-1/2} E[S(∂_z, ∂_x) f(G_∞^{1/2} ζ, X_∞)]`. Expectations over `ζ` are
//! taken by Gauss-Hermite quadrature conditionally on the path, and the
//! outer expectation by Monte Carlo over paths. The approximation does not
//! depend on `n`, so one set of approximation paths serves every `n`.

use std::fmt;
use std::num::NonZeroUsize;
use std::str::FromStr;
use std::sync::OnceLock;

use gauss_quad::hermite::GaussHermite;

use crate::chaos::hermite;
use crate::error::{Error, Result};
use crate::estimators::{quadratic_error, variation};
use crate::parallel::try_par_map;
use crate::paths::{sample_wiener_with, WienerGrid};
use crate::rng::{seed_stream, Purpose};
use crate::stats::{normal_cdf, normal_pdf, summarize, Kahan};
use crate::symbols::{full_symbol_with_variance, RandomSymbol, SymbolTarget};
use crate::weights::WeightFamily;

/// Monomials `(iz)^a (ix)^b` that the implemented symbols can produce.
pub const MONOMIALS: [(u32, u32); 6] = [(1, 0), (1, 1), (1, 2), (3, 0), (3, 1), (5, 0)];

/// Test functions `f(z, x)` with closed-form partial derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TestFunction {
    /// `z`
    Z,
    /// `z^2`
    Z2,
    /// `z^3`
    Z3,
    /// `sin z`
    SinZ,
    /// `z·x`
    ZX,
    /// `1{z ≤ c}`
    Cdf(f64),
}

pub const TEST_FUNCTION_CATALOG: &str = "z, z2, z3, sinz, zx, cdf[:c]";

fn binomial_f64(n: u32, k: u32) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * f64::from(n - i) / f64::from(i + 1))
}

impl TestFunction {
    pub fn value(&self, z: f64, x: f64) -> f64 {
        match self {
            TestFunction::Cdf(c) => {
                if z <= *c {
                    1.0
                } else {
                    0.0
                }
            }
            _ => self.partial(0, 0, z, x),
        }
    }

    /// `∂_z^a ∂_x^b f(z, x)`; indicator test functions have no pointwise
    /// derivatives and return 0 for `a + b > 0`.
    pub fn partial(&self, a: u32, b: u32, z: f64, x: f64) -> f64 {
        let pow = |k: u32| -> f64 {
            if a > k {
                0.0
            } else {
                (0..a).map(|i| f64::from(k - i)).product::<f64>() * z.powi((k - a) as i32)
            }
        };
        match self {
            TestFunction::Z if b == 0 => pow(1),
            TestFunction::Z2 if b == 0 => pow(2),
            TestFunction::Z3 if b == 0 => pow(3),
            TestFunction::SinZ if b == 0 => match a % 4 {
                0 => z.sin(),
                1 => z.cos(),
                2 => -z.sin(),
                _ => -z.cos(),
            },
            TestFunction::ZX => match b {
                0 => pow(1) * x,
                1 => pow(1),
                _ => 0.0,
            },
            TestFunction::Cdf(_) if a == 0 && b == 0 => self.value(z, x),
            _ => 0.0,
        }
    }

    /// `E[∂_z^a ∂_x^b f(g^{1/2} ζ, x)]` for `ζ ~ N(0,1)`.
    pub fn gaussian_mean(&self, a: u32, b: u32, g: f64, x: f64) -> f64 {
        let sd = g.sqrt();
        match self {
            TestFunction::Cdf(c) => {
                if b > 0 {
                    return 0.0;
                }
                let u = c / sd;
                if a == 0 {
                    normal_cdf(u)
                } else {
                    // ∫ 1{z ≤ c} (-∂)^a φ_g(z) dz
                    -g.powf(-0.5 * (a as f64 - 1.0)) * hermite(a as usize - 1, u) * normal_pdf(u)
                        / sd
                }
            }
            _ => standard_normal_rule()
                .iter()
                .map(|(u, w)| w * self.partial(a, b, sd * u, x))
                .sum(),
        }
    }

    /// Closed forms of [`Self::gaussian_mean`] for the smooth catalog.
    pub fn gaussian_mean_exact(&self, a: u32, b: u32, g: f64, x: f64) -> f64 {
        // E[ζ^k] for the power derivative z^{k-a}
        let moment = |k: u32| -> f64 {
            if k % 2 == 1 {
                0.0
            } else {
                (1..=k).step_by(2).map(f64::from).product::<f64>() * g.powi(k as i32 / 2)
            }
        };
        let pow = |k: u32| -> f64 {
            if a > k {
                0.0
            } else {
                (0..a).map(|i| f64::from(k - i)).product::<f64>() * moment(k - a)
            }
        };
        match self {
            TestFunction::Z if b == 0 => pow(1),
            TestFunction::Z2 if b == 0 => pow(2),
            TestFunction::Z3 if b == 0 => pow(3),
            TestFunction::SinZ if b == 0 => {
                let damp = (-0.5 * g).exp();
                match a % 4 {
                    1 => damp,
                    3 => -damp,
                    _ => 0.0,
                }
            }
            TestFunction::ZX => match b {
                0 => pow(1) * x,
                1 => pow(1),
                _ => 0.0,
            },
            TestFunction::Cdf(_) => self.gaussian_mean(a, b, g, x),
            _ => 0.0,
        }
    }

    pub fn depends_on_x(&self) -> bool {
        matches!(self, TestFunction::ZX)
    }
}

impl fmt::Display for TestFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TestFunction::Z => write!(f, "z"),
            TestFunction::Z2 => write!(f, "z2"),
            TestFunction::Z3 => write!(f, "z3"),
            TestFunction::SinZ => write!(f, "sinz"),
            TestFunction::ZX => write!(f, "zx"),
            TestFunction::Cdf(c) => write!(f, "cdf:{c}"),
        }
    }
}

impl FromStr for TestFunction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "z" => Ok(TestFunction::Z),
            "z2" => Ok(TestFunction::Z2),
            "z3" => Ok(TestFunction::Z3),
            "sinz" => Ok(TestFunction::SinZ),
            "zx" => Ok(TestFunction::ZX),
            "cdf" => Ok(TestFunction::Cdf(0.0)),
            _ => match s.strip_prefix("cdf:").map(str::parse::<f64>) {
                Some(Ok(c)) => Ok(TestFunction::Cdf(c)),
                _ => Err(Error::UnknownName {
                    kind: "test function",
                    name: s.to_string(),
                    catalog: TEST_FUNCTION_CATALOG,
                }),
            },
        }
    }
}

/// Central-difference estimate of `∂_z^a ∂_x^b f` with step
/// `ε^{1/(a+b+2)} (|z| + 1)` in both directions.
pub fn fd_partial<F: Fn(f64, f64) -> f64>(f: F, a: u32, b: u32, z: f64, x: f64) -> f64 {
    let order = a + b;
    let h = f64::EPSILON.powf(1.0 / f64::from(order + 2)) * (z.abs() + 1.0);
    let mut total = 0.0;
    for i in 0..=a {
        let cz = binomial_f64(a, i) * if i % 2 == 0 { 1.0 } else { -1.0 };
        let zz = z + (0.5 * a as f64 - i as f64) * h;
        for k in 0..=b {
            let cx = binomial_f64(b, k) * if k % 2 == 0 { 1.0 } else { -1.0 };
            let xx = x + (0.5 * b as f64 - k as f64) * h;
            total += cz * cx * f(zz, xx);
        }
    }
    total / h.powi(order as i32)
}

/// Nodes and weights for `E[g(ζ)]`, `ζ ~ N(0,1)`.
fn standard_normal_rule() -> &'static [(f64, f64)] {
    static RULE: OnceLock<Vec<(f64, f64)>> = OnceLock::new();
    RULE.get_or_init(|| {
        let deg = NonZeroUsize::new(48).expect("non-zero degree");
        let gh = GaussHermite::new(deg);
        let scale = std::f64::consts::PI.sqrt().recip();
        gh.nodes()
            .zip(gh.weights())
            .map(|(x, w)| (std::f64::consts::SQRT_2 * x, w * scale))
            .collect()
    })
}

/// Monte Carlo settings for the expansion experiments.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpansionConfig {
    /// Simulated replications of the statistic, per `n`.
    pub reps: u64,
    /// Refinement of the simulated paths.
    pub target_refine: usize,
    /// Paths for the approximation side.
    pub approx_reps: u64,
    /// Coarse cells and refinement of the approximation paths; only their
    /// product, the quadrature resolution of the symbols, matters.
    pub approx_n: usize,
    pub approx_refine: usize,
    pub seed: u64,
}

impl Default for ExpansionConfig {
    fn default() -> Self {
        Self {
            reps: 100_000,
            target_refine: 32,
            approx_reps: 100_000,
            approx_n: 64,
            approx_refine: 32,
            seed: 1,
        }
    }
}

/// Per-path ingredients of the approximation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ApproxSample {
    pub g: f64,
    pub x: f64,
    /// Symbol coefficients in the order of [`MONOMIALS`].
    pub coefs: [f64; 6],
}

fn pack_symbol(s: &RandomSymbol) -> Result<[f64; 6]> {
    let mut out = [0.0; 6];
    for ((a, b), c) in s.terms() {
        match MONOMIALS.iter().position(|m| *m == (a, b)) {
            Some(i) => out[i] = c,
            None if c == 0.0 => {}
            None => {
                return Err(Error::Unsupported(format!(
                    "symbol monomial (iz)^{a}(ix)^{b}"
                )));
            }
        }
    }
    Ok(out)
}

/// `(G_∞, X_∞, symbol)` along approximation path `rep`.
pub fn approx_sample(fam: &WeightFamily, cfg: &ExpansionConfig, rep: u64) -> Result<ApproxSample> {
    let key = seed_stream(cfg.seed, rep, Purpose::Path);
    let grid = sample_wiener_with(cfg.approx_n, cfg.approx_refine, key)?;
    approx_from_grid(fam, &grid)
}

pub fn approx_from_grid(fam: &WeightFamily, grid: &WienerGrid) -> Result<ApproxSample> {
    let (sym, g) = full_symbol_with_variance(fam, grid, SymbolTarget::for_family(fam))?;
    if !(g > 0.0) || !g.is_finite() {
        return Err(Error::DegenerateVariance);
    }
    Ok(ApproxSample {
        g,
        x: grid.terminal(),
        coefs: pack_symbol(&sym)?,
    })
}

pub fn approx_samples(fam: &WeightFamily, cfg: &ExpansionConfig) -> Result<Vec<ApproxSample>> {
    try_par_map(cfg.approx_reps, |rep| approx_sample(fam, cfg, rep))
}

/// `(Z_n, X_∞)` for simulated replication `rep`: the centred quadratic
/// error for anticipative `Q = {2}` families, the variation otherwise.
pub fn target_sample(
    fam: &WeightFamily,
    n: usize,
    cfg: &ExpansionConfig,
    rep: u64,
) -> Result<(f64, f64)> {
    let key = seed_stream(cfg.seed, rep, Purpose::TargetPath);
    let grid = sample_wiener_with(n, cfg.target_refine, key)?;
    let z = match SymbolTarget::for_family(fam) {
        SymbolTarget::CenteredQuadratic => quadratic_error(fam, &grid)?.sample.z_n,
        SymbolTarget::Variation => variation(fam, &grid)?.v_n,
    };
    Ok((z, grid.terminal()))
}

pub fn target_samples(
    fam: &WeightFamily,
    n: usize,
    cfg: &ExpansionConfig,
) -> Result<Vec<(f64, f64)>> {
    try_par_map(cfg.reps, |rep| target_sample(fam, n, cfg, rep))
}

/// `E_ζ[f(√G ζ, X)]` and `E_ζ[S(∂_z,∂_x) f(√G ζ, X)]` along one path.
pub fn conditional_terms(f: &TestFunction, s: &ApproxSample) -> (f64, f64) {
    let zeroth = f.gaussian_mean(0, 0, s.g, s.x);
    let mut corr = 0.0;
    for (c, (a, b)) in s.coefs.iter().zip(MONOMIALS) {
        if *c != 0.0 {
            corr += c * f.gaussian_mean(a, b, s.g, s.x);
        }
    }
    (zeroth, corr)
}

/// Monte Carlo comparison of the statistic with its approximations.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpansionReport {
    pub n: usize,
    pub function: String,
    pub reps: u64,
    pub approx_reps: u64,
    pub target: f64,
    pub se_target: f64,
    pub zeroth: f64,
    pub se_zeroth: f64,
    /// `E[S(∂_z,∂_x) f]`, the correction per unit `n^{-1/2}`.
    pub correction: f64,
    pub se_correction: f64,
    pub first: f64,
    pub se_first: f64,
    pub err0: f64,
    pub se_err0: f64,
    pub err1: f64,
    pub se_err1: f64,
    pub warnings: Vec<String>,
}

impl ExpansionReport {
    pub fn scaled_err0(&self) -> f64 {
        (self.n as f64).sqrt() * self.err0
    }

    pub fn scaled_err1(&self) -> f64 {
        (self.n as f64).sqrt() * self.err1
    }
}

/// Combine simulated values and approximation samples into a report.
pub fn assemble(
    f: &TestFunction,
    n: usize,
    targets: &[(f64, f64)],
    approx: &[ApproxSample],
) -> Result<ExpansionReport> {
    if targets.len() < 2 || approx.len() < 2 {
        return Err(Error::InvalidParameter(
            "at least two replications are needed".into(),
        ));
    }
    let scale = (n as f64).sqrt().recip();
    let tv: Vec<f64> = targets.iter().map(|(z, x)| f.value(*z, *x)).collect();
    let mut zv = Vec::with_capacity(approx.len());
    let mut cv = Vec::with_capacity(approx.len());
    let mut fv = Vec::with_capacity(approx.len());
    for s in approx {
        let (z0, c) = conditional_terms(f, s);
        zv.push(z0);
        cv.push(c);
        fv.push(z0 + scale * c);
    }
    let (t, z0, c, f1) = (
        summarize(&tv),
        summarize(&zv),
        summarize(&cv),
        summarize(&fv),
    );
    let mut warnings = Vec::new();
    if targets.len() < 1000 {
        warnings.push(format!("only {} replications", targets.len()));
    }
    Ok(ExpansionReport {
        n,
        function: f.to_string(),
        reps: targets.len() as u64,
        approx_reps: approx.len() as u64,
        target: t.mean,
        se_target: t.se,
        zeroth: z0.mean,
        se_zeroth: z0.se,
        correction: c.mean,
        se_correction: c.se,
        first: f1.mean,
        se_first: f1.se,
        err0: (t.mean - z0.mean).abs(),
        se_err0: t.se.hypot(z0.se),
        err1: (t.mean - f1.mean).abs(),
        se_err1: t.se.hypot(f1.se),
        warnings,
    })
}

/// Expansion of `E[f(Z_n, X_∞)]` with fresh simulations on both sides.
pub fn expand_expectation(
    fam: &WeightFamily,
    f: &TestFunction,
    n: usize,
    cfg: &ExpansionConfig,
) -> Result<ExpansionReport> {
    let approx = approx_samples(fam, cfg)?;
    let targets = target_samples(fam, n, cfg)?;
    assemble(f, n, &targets, &approx)
}

/// `φ(z; 0, G)(1 + n^{-1/2} Σ_a c_{a,0} G^{-a/2} He_a(z/√G))` for one path.
pub fn conditional_density(s: &ApproxSample, n: f64, z: f64) -> (f64, f64) {
    let sd = s.g.sqrt();
    let u = z / sd;
    let base = normal_pdf(u) / sd;
    let mut corr = 0.0;
    for (c, (a, b)) in s.coefs.iter().zip(MONOMIALS) {
        if b == 0 && *c != 0.0 {
            corr += c * s.g.powf(-0.5 * a as f64) * hermite(a as usize, u);
        }
    }
    (base, base * (1.0 + corr / n.sqrt()))
}

/// Zeroth- and first-order marginal densities on `z_grid`.
pub fn expansion_density(
    approx: &[ApproxSample],
    n: usize,
    z_grid: &[f64],
) -> Vec<(f64, f64, f64)> {
    let nf = n as f64;
    z_grid
        .iter()
        .map(|&z| {
            let (mut p0, mut p1) = (Kahan::new(), Kahan::new());
            for s in approx {
                let (a, b) = conditional_density(s, nf, z);
                p0.add(a);
                p1.add(b);
            }
            let m = approx.len() as f64;
            (z, p0.value() / m, p1.value() / m)
        })
        .collect()
}

/// Zeroth- and first-order distribution functions at `z`.
pub fn expansion_cdf(approx: &[ApproxSample], n: usize, z: f64) -> (f64, f64) {
    let f = TestFunction::Cdf(z);
    let scale = (n as f64).sqrt().recip();
    let (mut c0, mut c1) = (Kahan::new(), Kahan::new());
    for s in approx {
        let (a, b) = conditional_terms(&f, s);
        c0.add(a);
        c1.add(a + scale * b);
    }
    let m = approx.len() as f64;
    (c0.value() / m, c1.value() / m)
}

/// Sup distances between the empirical distribution function of the
/// simulated values and the two approximations over `z_grid`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CdfComparison {
    pub n: usize,
    pub sup0: f64,
    pub sup1: f64,
}

pub fn compare_cdf(
    targets: &[(f64, f64)],
    approx: &[ApproxSample],
    n: usize,
    z_grid: &[f64],
) -> CdfComparison {
    let mut zs: Vec<f64> = targets.iter().map(|(z, _)| *z).collect();
    zs.sort_by(f64::total_cmp);
    let m = zs.len() as f64;
    let (mut sup0, mut sup1) = (0.0_f64, 0.0_f64);
    for &z in z_grid {
        let emp = zs.partition_point(|v| *v <= z) as f64 / m;
        let (c0, c1) = expansion_cdf(approx, n, z);
        sup0 = sup0.max((emp - c0).abs());
        sup1 = sup1.max((emp - c1).abs());
    }
    CdfComparison { n, sup0, sup1 }
}

/// Expansion reports for every `(n, f)` pair, sharing one approximation
/// sample across `n` and one target sample across `f`.
pub fn compare_distributions(
    fam: &WeightFamily,
    n_grid: &[usize],
    functions: &[TestFunction],
    cfg: &ExpansionConfig,
) -> Result<Vec<ExpansionReport>> {
    if n_grid.len() < 3 {
        return Err(Error::InvalidParameter(
            "the n grid needs at least 3 points".into(),
        ));
    }
    if cfg.reps == 0 || cfg.approx_reps == 0 {
        return Err(Error::InvalidParameter(
            "replication counts must be positive".into(),
        ));
    }
    let approx = approx_samples(fam, cfg)?;
    let mut out = Vec::new();
    for &n in n_grid {
        let targets = target_samples(fam, n, cfg)?;
        for f in functions {
            out.push(assemble(f, n, &targets, &approx)?);
        }
    }
    Ok(out)
}

/// Evenly spaced grid `lo, ..., hi` with `steps` intervals.
pub fn linspace(lo: f64, hi: f64, steps: usize) -> Vec<f64> {
    (0..=steps)
        .map(|k| lo + (hi - lo) * k as f64 / steps.max(1) as f64)
        .collect()
}
