//! Realized volatility with a global jump filter.
//!
//! The filtered estimator is `𝕍_n = Σ_j Φ(U_n, L_{n,j}) (Δ_j X)²`, where
//! `U_n` is the plain realized volatility and `L_{n,j}` a local realized
//! volatility over a moving window of about `2nλ` increments. Its target in
//! simulation is the filtered integrated volatility
//! `V̄_n = Σ_j Φ(U_n, L_{n,j}) ∫_{I_j} σ²(X_t) dt`, computed from the latent
//! fine path.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::parallel::try_par_map;
use crate::paths::{
    contaminate, parse_list, sample_jumps, sample_wiener, solve, CoefFn, DiffusionPath, JumpSize,
    Scheme, WienerGrid,
};
use crate::quad::{trapezoid, Antiderivative};
use crate::rng::{seed_stream, Purpose};
use crate::stats::{summarize, Kahan};
use crate::symbols::RandomSymbol;

/// Smallest `G_∞` accepted before the mixed normal limit is declared degenerate.
pub const VARIANCE_FLOOR: f64 = 1e-12;

/// `C^∞` step rising from 0 at `t ≤ 0` to 1 at `t ≥ 1`, with its derivative.
fn smooth_step(t: f64) -> (f64, f64) {
    if t <= 0.0 {
        return (0.0, 0.0);
    }
    if t >= 1.0 {
        return (1.0, 0.0);
    }
    let g = 1.0 / t - 1.0 / (1.0 - t);
    let s = 1.0 / (1.0 + g.exp());
    let w = s * (1.0 - s);
    let ds = if w == 0.0 {
        0.0
    } else {
        w * (1.0 / (t * t) + 1.0 / ((1.0 - t) * (1.0 - t)))
    };
    (s, ds)
}

/// Smooth cutoff equal to 1 on `[0, c]` and 0 on `[2c, ∞)`, with derivative.
fn cutoff(u: f64, c: f64) -> (f64, f64) {
    let (s, ds) = smooth_step((u - c) / c);
    (1.0 - s, -ds / c)
}

/// The filter function `Φ(x, y)` applied to `(U, L)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Filter {
    /// `Φ ≡ 1`: no filtering, `𝕍_n = U_n`.
    One,
    /// `Φ ≡ c`.
    Const(f64),
    /// `Φ(x, y) = x`.
    Linear,
    /// `Φ(x, y) = ψ(1/|x|) φ(|y|/|x|)`, with `φ` a smooth cutoff from 1 on
    /// `[0, c]` to 0 beyond `2c` and `ψ` the guard that is 1 on
    /// `[0, 1/c0]` and 0 beyond `2/c0`.
    SmoothCut { c: f64, c0: f64 },
    /// `Φ(x, y) = φ(|y|/|x|)` without the guard on `U`.
    Cut { c: f64 },
    /// `Φ(x, y) = 1{|y| ≤ c|x|}`. Not smooth; its partials are set to zero.
    HardCut { c: f64 },
}

pub const FILTER_CATALOG: &str = "one, const:c, linear, smoothcut:C[,c0], cut:C, hardcut:C";

/// Default guard level for `smoothcut:C`, suited to `inf σ² ≥ 1`.
pub const DEFAULT_GUARD: f64 = 0.5;

impl Filter {
    /// `[Φ, ∂₁Φ, ∂₂Φ]` at `(x, y)`.
    pub fn eval(&self, x: f64, y: f64) -> [f64; 3] {
        match *self {
            Filter::One => [1.0, 0.0, 0.0],
            Filter::Const(c) => [c, 0.0, 0.0],
            Filter::Linear => [x, 1.0, 0.0],
            Filter::Cut { c } => {
                let (ax, ay) = (x.abs(), y.abs());
                let (p, dp) = cutoff(ay / ax, c);
                [p, -dp * ay * x.signum() / (ax * ax), dp * y.signum() / ax]
            }
            Filter::SmoothCut { c, c0 } => {
                let (ax, ay) = (x.abs(), y.abs());
                let (p, dp) = cutoff(ay / ax, c);
                let (s, ds) = smooth_step(c0 / ax - 1.0);
                let (g, dg) = (1.0 - s, -c0 * ds);
                let dx = -x.signum() / (ax * ax);
                [
                    g * p,
                    dg * dx * p + g * dp * ay * dx,
                    g * dp * y.signum() / ax,
                ]
            }
            Filter::HardCut { c } => {
                let v = if y.abs() <= c * x.abs() { 1.0 } else { 0.0 };
                [v, 0.0, 0.0]
            }
        }
    }

    pub fn value(&self, x: f64, y: f64) -> f64 {
        self.eval(x, y)[0]
    }

    /// False for filters outside the smooth class, whose partials are not
    /// meaningful.
    pub fn is_smooth(&self) -> bool {
        !matches!(self, Filter::HardCut { .. })
    }

    /// Compare the analytic partials with central differences at a few
    /// points of the positive quadrant.
    pub fn check_partials(&self) -> Result<()> {
        if !self.is_smooth() {
            return Ok(());
        }
        let eps = 1e-5;
        for &x in &[0.3, 0.7, 1.0, 1.4, 2.5] {
            for &y in &[0.2, 0.9, 1.6, 2.3, 3.1, 4.4, 6.0] {
                let [_, d1, d2] = self.eval(x, y);
                let f1 = (self.value(x + eps, y) - self.value(x - eps, y)) / (2.0 * eps);
                let f2 = (self.value(x, y + eps) - self.value(x, y - eps)) / (2.0 * eps);
                if (f1 - d1).abs() > 1e-6 * d1.abs().max(1.0)
                    || (f2 - d2).abs() > 1e-6 * d2.abs().max(1.0)
                {
                    return Err(Error::DerivativeMismatch(format!("{self} at ({x}, {y})")));
                }
            }
        }
        Ok(())
    }
}

impl fmt::Display for Filter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Filter::One => write!(f, "one"),
            Filter::Const(c) => write!(f, "const:{c}"),
            Filter::Linear => write!(f, "linear"),
            Filter::SmoothCut { c, c0 } => write!(f, "smoothcut:{c},{c0}"),
            Filter::Cut { c } => write!(f, "cut:{c}"),
            Filter::HardCut { c } => write!(f, "hardcut:{c}"),
        }
    }
}

impl FromStr for Filter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let unknown = || Error::UnknownName {
            kind: "filter",
            name: s.to_string(),
            catalog: FILTER_CATALOG,
        };
        let (head, args) = s.split_once(':').unwrap_or((s, ""));
        let v = if args.is_empty() {
            Vec::new()
        } else {
            parse_list(args)?
        };
        let positive = |x: f64| {
            if x > 0.0 && x.is_finite() {
                Ok(x)
            } else {
                Err(Error::InvalidParameter(format!(
                    "filter parameters must be positive: '{s}'"
                )))
            }
        };
        match (head, v.len()) {
            ("one", 0) => Ok(Filter::One),
            ("const", 1) => Ok(Filter::Const(v[0])),
            ("linear", 0) => Ok(Filter::Linear),
            ("smoothcut", 1) => Ok(Filter::SmoothCut {
                c: positive(v[0])?,
                c0: DEFAULT_GUARD,
            }),
            ("smoothcut", 2) => Ok(Filter::SmoothCut {
                c: positive(v[0])?,
                c0: positive(v[1])?,
            }),
            ("cut", 1) => Ok(Filter::Cut { c: positive(v[0])? }),
            ("hardcut", 1) => Ok(Filter::HardCut { c: positive(v[0])? }),
            _ => Err(unknown()),
        }
    }
}

/// A filter together with the locality parameter `λ` of the local windows.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterSpec {
    pub phi: Filter,
    pub lambda: f64,
}

impl FilterSpec {
    pub fn new(phi: Filter, lambda: f64) -> Result<Self> {
        check_lambda(lambda)?;
        Ok(Self { phi, lambda })
    }
}

fn check_lambda(lambda: f64) -> Result<()> {
    if lambda > 0.0 && lambda < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "lambda must lie in (0, 1), got {lambda}"
        )))
    }
}

/// `⌊nλ⌋`, tolerant to the binary rounding of `λ`.
pub fn window_half_width(n: usize, lambda: f64) -> usize {
    (n as f64 * lambda + 1e-9).floor() as usize
}

/// Window `K_j = [(j − m + 1) ∨ 1, (j + m − 1) ∧ n]` for `m = ⌊nλ⌋`, 1-based.
pub fn window_bounds(n: usize, m: usize, j: usize) -> (usize, usize) {
    let lo = if j + 1 > m { j + 1 - m } else { 1 };
    ((lo).max(1), (j + m - 1).min(n))
}

/// Realized volatility and local realized volatilities of one path.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalStats {
    pub u_n: f64,
    /// `L_{n,j}` for `j = 1..=n`.
    pub l: Vec<f64>,
    /// `η_{n,j} = #K_j / n`.
    pub eta: Vec<f64>,
    /// `(K̲_j, K̄_j)`.
    pub bounds: Vec<(usize, usize)>,
    /// `⌊nλ⌋`.
    pub half_width: usize,
}

/// `U_n` and `L_{n,j}` from observed increments.
pub fn local_stats(increments: &[f64], lambda: f64) -> Result<LocalStats> {
    check_lambda(lambda)?;
    let n = increments.len();
    let m = window_half_width(n, lambda);
    if m < 2 {
        return Err(Error::InvalidParameter(format!(
            "n·lambda must be at least 2, got {}",
            n as f64 * lambda
        )));
    }
    let mut prefix = Vec::with_capacity(n + 1);
    prefix.push(0.0);
    let mut acc = Kahan::new();
    for d in increments {
        acc.add(d * d);
        prefix.push(acc.value());
    }
    let mut l = Vec::with_capacity(n);
    let mut eta = Vec::with_capacity(n);
    let mut bounds = Vec::with_capacity(n);
    for j in 1..=n {
        let (lo, hi) = window_bounds(n, m, j);
        let count = hi + 1 - lo;
        let e = count as f64 / n as f64;
        l.push((prefix[hi] - prefix[lo - 1]) / e);
        eta.push(e);
        bounds.push((lo, hi));
    }
    Ok(LocalStats {
        u_n: prefix[n],
        l,
        eta,
        bounds,
        half_width: m,
    })
}

/// Limit quantities `U_∞`, `L_{∞,t}` built from the latent path on the fine
/// grid, with `β_t = σ(X_t)²`.
#[derive(Debug, Clone)]
pub struct LatentVolatility {
    pub lambda: f64,
    pub dt: f64,
    pub beta: Vec<f64>,
    pub u_inf: f64,
    prim: Antiderivative,
}

impl LatentVolatility {
    pub fn new(path: &DiffusionPath, lambda: f64) -> Result<Self> {
        check_lambda(lambda)?;
        let beta: Vec<f64> = path
            .x
            .iter()
            .map(|&x| path.sigma.value(x).powi(2))
            .collect();
        let dt = path.grid.dt();
        let prim = Antiderivative::new(&beta, dt);
        Ok(Self {
            lambda,
            dt,
            u_inf: prim.total(),
            beta,
            prim,
        })
    }

    /// `[(t − λ) ∨ 0, (t + λ) ∧ 1]`.
    pub fn window(&self, t: f64) -> (f64, f64) {
        ((t - self.lambda).max(0.0), (t + self.lambda).min(1.0))
    }

    /// `(L_{∞,t}, η_{∞,t})`.
    pub fn l_inf(&self, t: f64) -> (f64, f64) {
        let (a, b) = self.window(t);
        let eta = b - a;
        (self.prim.between(a, b) / eta, eta)
    }

    /// `∫_a^b β`.
    pub fn integrated(&self, a: f64, b: f64) -> f64 {
        self.prim.between(a, b)
    }

    /// `[Φ, ∂₁Φ, ∂₂Φ]` at `(U_∞, L_{∞,t})`, with `η_{∞,t}`.
    pub fn filter_at(&self, phi: &Filter, t: f64) -> Result<([f64; 3], f64)> {
        let (l, eta) = self.l_inf(t);
        let v = phi.eval(self.u_inf, l);
        if v.iter().all(|x| x.is_finite()) {
            Ok((v, eta))
        } else {
            Err(Error::NonFiniteFilter)
        }
    }

    /// `G_∞ = ∫_0^1 2 𝕒_t² dt` with `𝕒_t = Φ(U_∞, L_{∞,t}) β_t`, by the
    /// trapezoid rule on every `stride`-th fine node.
    pub fn g_inf(&self, phi: &Filter, stride: usize) -> Result<f64> {
        let nodes = self.strided_nodes(stride)?;
        let ds = self.dt * stride as f64;
        let mut a2 = Vec::with_capacity(nodes.len());
        for &i in &nodes {
            let t = i as f64 * self.dt;
            let (v, _) = self.filter_at(phi, t)?;
            a2.push(2.0 * (v[0] * self.beta[i]).powi(2));
        }
        Ok(trapezoid(&a2, ds))
    }

    fn strided_nodes(&self, stride: usize) -> Result<Vec<usize>> {
        let cells = self.beta.len() - 1;
        if stride == 0 || cells % stride != 0 {
            return Err(Error::InvalidParameter(format!(
                "stride {stride} does not divide {cells} fine cells"
            )));
        }
        Ok((0..=cells / stride).map(|i| i * stride).collect())
    }
}

fn check_finite(v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFiniteFilter)
    }
}

/// Filtered estimator and its target on one path.
#[derive(Debug, Clone, PartialEq)]
pub struct RVSample {
    pub n: usize,
    pub u_n: f64,
    pub l: Vec<f64>,
    pub v_robust: f64,
    pub v_target: f64,
    pub z_n: f64,
    pub g_inf: f64,
    /// Latent integrated volatility `U_∞ = ∫σ²`.
    pub u_inf: f64,
}

/// [`robust_rv_with`] on the path's own increments.
pub fn robust_rv(path: &DiffusionPath, filt: &FilterSpec) -> Result<RVSample> {
    robust_rv_with(path, &path.coarse_increments(), filt)
}

/// Filtered estimator from observed increments (possibly contaminated), with
/// targets and limit variance from the latent path.
pub fn robust_rv_with(
    path: &DiffusionPath,
    increments: &[f64],
    filt: &FilterSpec,
) -> Result<RVSample> {
    let n = path.grid.n;
    if increments.len() != n {
        return Err(Error::LengthMismatch(increments.len(), n));
    }
    let ls = local_stats(increments, filt.lambda)?;
    let lat = LatentVolatility::new(path, filt.lambda)?;
    let h = 1.0 / n as f64;
    let mut v = Kahan::new();
    let mut vt = Kahan::new();
    for j in 1..=n {
        let w = check_finite(filt.phi.value(ls.u_n, ls.l[j - 1]))?;
        let d = increments[j - 1];
        v.add(w * d * d);
        vt.add(w * lat.integrated((j - 1) as f64 * h, j as f64 * h));
    }
    let (v_robust, v_target) = (v.value(), vt.value());
    Ok(RVSample {
        n,
        u_n: ls.u_n,
        l: ls.l,
        v_robust,
        v_target,
        z_n: (n as f64).sqrt() * (v_robust - v_target),
        g_inf: lat.g_inf(&filt.phi, 1)?,
        u_inf: lat.u_inf,
    })
}

/// How Malliavin derivatives `D_{1_j}` of path functionals are computed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Derivative {
    /// Exact derivative of the discretized functional through the first
    /// variation of the scheme, O(nR) per path.
    Tangent,
    /// Central difference of the functional under the bump
    /// `w ↦ w + ε∫_0^· 1_{I_j}`, O(n²R) per path.
    Bump { eps: f64 },
}

/// Terms of the decomposition `Z_n = M_n + n^{-1/2}(N_n^o + N_n^x) + remainder`.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorTerms {
    pub n: usize,
    pub z_n: f64,
    pub m_n: f64,
    pub n_o: f64,
    pub n_x: f64,
    /// `Z_n − M_n − n^{-1/2}(N_n^o + N_n^x)`.
    pub residual: f64,
    /// `Θ_j = Φ(U_∞, L_{∞,t_{j−1}})`.
    pub theta: Vec<f64>,
    /// `F_j = β_{t_{j−1}} I_2(1_j^{⊗2})`.
    pub f: Vec<f64>,
    /// `S_j`, the `O(h^{3/2})` part of `(Δ_j X)² − ∫_{I_j} β`.
    pub s: Vec<f64>,
    /// `D_{1_j}(Θ_j β_{t_{j−1}})`.
    pub d_theta_beta: Vec<f64>,
}

/// Itô-Taylor coefficients at a point: `[b¹, b², b^{[1,1]}, b^{[1,2]}, b^{[2,1]}]`.
fn ito_taylor(sigma: &CoefFn, drift: &CoefFn, x: f64) -> [f64; 5] {
    let (s, s1, s2) = (sigma.value(x), sigma.d1(x), sigma.d2(x));
    let (b, b1) = (drift.value(x), drift.d1(x));
    [s, b, s * s1, 0.5 * s * s * s2 + b * s1, s * b1]
}

/// `S_j` from the state at `t_{j−1}`, the Brownian increment over `I_j` and
/// `I_1(g_j) = n∫_{I_j}(w_t − w_{t_{j−1}})dt`.
fn remainder_term(c: [f64; 5], h: f64, dw: f64, i1g: f64) -> f64 {
    let [b1, b2, b11, b12, b21] = c;
    let beta1 = 2.0 * b1 * b11;
    let beta2 = b11 * b11 + 2.0 * b1 * b12;
    let i3 = dw * dw * dw - 3.0 * h * dw;
    b1 * b11 * i3
        + 2.0 * h * b1 * b11 * dw
        + 2.0 * h * b1 * b2 * dw
        + h * h * b1 * b12
        + h * h * b1 * b21
        + h * h * b2 * b2
        + 0.5 * h * h * b11 * b11
        - h * beta1 * i1g
        - 0.5 * h * h * beta2
}

/// `D_{1_j} U_∞` and `D_{1_j} L_{∞,t_{j−1}}` for every `j`, through the first
/// variation of the scheme.
fn tangent_derivatives(path: &DiffusionPath, lat: &LatentVolatility) -> Result<Vec<(f64, f64)>> {
    let grid = &path.grid;
    let (n, r, dt) = (grid.n, grid.r, grid.dt());
    let (sig, dr) = (&path.sigma, &path.drift);
    let milstein = path.scheme == Scheme::Milstein;
    let fine = grid.dw.len();
    // One-step sensitivities: to the previous state and to the increment.
    let mut mu = Vec::with_capacity(fine);
    let mut kappa = Vec::with_capacity(fine);
    for (k, &dw) in grid.dw.iter().enumerate() {
        let x = path.x[k];
        let (s, s1, s2) = (sig.value(x), sig.d1(x), sig.d2(x));
        let mut m = 1.0 + dr.d1(x) * dt + s1 * dw;
        let mut kp = s;
        if milstein {
            m += 0.5 * (s1 * s1 + s * s2) * (dw * dw - dt);
            kp += s * s1 * dw;
        }
        mu.push(m);
        kappa.push(kp);
    }
    let mut y = Vec::with_capacity(fine + 1);
    y.push(1.0);
    for k in 0..fine {
        let next = y[k] * mu[k];
        if !next.is_finite() || next == 0.0 {
            return Err(Error::Unsupported("degenerate first variation".into()));
        }
        y.push(next);
    }
    let dbeta = |x: f64| 2.0 * sig.value(x) * sig.d1(x);
    let p: Vec<f64> = path
        .x
        .iter()
        .zip(&y)
        .map(|(&x, &yy)| dbeta(x) * yy)
        .collect();
    let prim = Antiderivative::new(&p, dt);
    let mut out = Vec::with_capacity(n);
    let mut cell = vec![0.0; r + 1];
    for j in 1..=n {
        let start = (j - 1) * r;
        let mut d = 0.0;
        cell[0] = 0.0;
        for i in 0..r {
            let k = start + i;
            d = mu[k] * d + kappa[k] * dt;
            cell[i + 1] = dbeta(path.x[k + 1]) * d;
        }
        let inside = trapezoid(&cell, dt);
        let scale = d / y[start + r];
        let tj = j as f64 / n as f64;
        let du = inside + scale * prim.between(tj, 1.0);
        let t0 = (j - 1) as f64 / n as f64;
        let (_, b) = lat.window(t0);
        let (_, eta) = lat.l_inf(t0);
        let dl = (inside + scale * prim.between(tj, b)) / eta;
        out.push((du, dl));
    }
    Ok(out)
}

/// `D_{1_j}(Θ_j β_{t_{j−1}})` by central differences of the re-solved path.
fn bump_derivatives(path: &DiffusionPath, phi: &Filter, lambda: f64, eps: f64) -> Result<Vec<f64>> {
    let grid = &path.grid;
    let (n, r, dt) = (grid.n, grid.r, grid.dt());
    let functional = |dw: Vec<f64>, j: usize| -> Result<f64> {
        let g = WienerGrid::from_increments(n, r, dw)?;
        let p = solve(g, &path.sigma, &path.drift, path.x0, path.scheme)?;
        let lat = LatentVolatility::new(&p, lambda)?;
        let t0 = (j - 1) as f64 / n as f64;
        let (v, _) = lat.filter_at(phi, t0)?;
        Ok(v[0] * lat.beta[(j - 1) * r])
    };
    let mut out = Vec::with_capacity(n);
    for j in 1..=n {
        let bumped = |sign: f64| {
            let mut dw = grid.dw.clone();
            for v in &mut dw[(j - 1) * r..j * r] {
                *v += sign * eps * dt;
            }
            dw
        };
        let up = functional(bumped(1.0), j)?;
        let down = functional(bumped(-1.0), j)?;
        out.push((up - down) / (2.0 * eps));
    }
    Ok(out)
}

/// Per-path terms of the stochastic expansion of `Z_n` on a clean path.
pub fn error_expansion_terms(
    path: &DiffusionPath,
    filt: &FilterSpec,
    method: Derivative,
) -> Result<ErrorTerms> {
    let grid = &path.grid;
    let (n, r) = (grid.n, grid.r);
    let h = grid.h();
    let sn = (n as f64).sqrt();
    let sample = robust_rv(path, filt)?;
    let lat = LatentVolatility::new(path, filt.lambda)?;
    let incs = local_stats(&path.coarse_increments(), filt.lambda)?;
    let dw = grid.coarse_increments();

    let mut theta = Vec::with_capacity(n);
    let mut partials = Vec::with_capacity(n);
    let mut f = Vec::with_capacity(n);
    let mut s = Vec::with_capacity(n);
    for j in 1..=n {
        let t0 = (j - 1) as f64 * h;
        let x = path.at_coarse(j - 1);
        let c = ito_taylor(&path.sigma, &path.drift, x);
        let beta = c[0] * c[0];
        let base = grid.values[(j - 1) * r];
        let rel: Vec<f64> = grid.values[(j - 1) * r..=j * r]
            .iter()
            .map(|w| w - base)
            .collect();
        let i1g = n as f64 * trapezoid(&rel, grid.dt());
        let d = dw[j - 1];
        f.push(beta * (d * d - h));
        s.push(remainder_term(c, h, d, i1g));
        let (v, eta) = lat.filter_at(&filt.phi, t0)?;
        theta.push(v[0]);
        partials.push((v[1], v[2], eta));
    }

    let d_theta_beta: Vec<f64> = match method {
        Derivative::Tangent => {
            let dd = tangent_derivatives(path, &lat)?;
            (0..n)
                .map(|i| {
                    let (p1, p2, _) = partials[i];
                    lat.beta[i * r] * (p1 * dd[i].0 + p2 * dd[i].1)
                })
                .collect()
        }
        Derivative::Bump { eps } => bump_derivatives(path, &filt.phi, filt.lambda, eps)?,
    };

    let mut principal = Kahan::new();
    let mut correction = Kahan::new();
    let mut drift_part = Kahan::new();
    for j in 0..n {
        principal.add(theta[j] * f[j]);
        correction.add(d_theta_beta[j] * dw[j]);
        drift_part.add(theta[j] * s[j]);
    }
    let m_n = sn * (principal.value() - correction.value());
    let n_o = n as f64 * (correction.value() + drift_part.value());

    let mut prefix = Vec::with_capacity(n + 1);
    prefix.push(0.0);
    let mut acc = Kahan::new();
    for v in &f {
        acc.add(*v);
        prefix.push(acc.value());
    }
    let total = prefix[n];
    let mut cross = Kahan::new();
    for j in 1..=n {
        let (p1, p2, _) = partials[j - 1];
        let (lo, hi) = incs.bounds[j - 1];
        let local = prefix[hi] - prefix[lo - 1];
        cross.add(f[j - 1] * (p1 * total + p2 * local / incs.eta[j - 1]));
    }
    let n_x = n as f64 * cross.value();
    let z_n = sample.z_n;
    Ok(ErrorTerms {
        n,
        z_n,
        m_n,
        n_o,
        n_x,
        residual: z_n - m_n - (n_o + n_x) / sn,
        theta,
        f,
        s,
        d_theta_beta,
    })
}

/// The adjustment symbol `𝔊 = 𝔠₃G_∞²(iz)³ + 𝔠₁(iz)` contributed by the
/// cross term `N_n^x`, with its ingredients.
#[derive(Debug, Clone, PartialEq)]
pub struct Adjustment {
    pub c1: f64,
    pub c3: f64,
    pub g_inf: f64,
    pub symbol: RandomSymbol,
}

/// Adjustment symbol of one path, by quadrature on every `stride`-th fine
/// node. With `Λ_{s,t} = β_sβ_t(∂₁Φ_s + 1{t ∈ window(s)} η_{∞,s}^{-1} ∂₂Φ_s)`,
/// `𝔠₁ = ∫2Λ_{s,s}ds` and `𝔠₃ = 4G_∞^{-2} ∫∫ 𝕒_s Λ_{s,t} 𝕒_t ds dt`.
pub fn adjustment_symbol(
    path: &DiffusionPath,
    filt: &FilterSpec,
    stride: usize,
) -> Result<Adjustment> {
    let lat = LatentVolatility::new(path, filt.lambda)?;
    let nodes = lat.strided_nodes(stride)?;
    let ds = lat.dt * stride as f64;
    let m = nodes.len();
    let mut a = Vec::with_capacity(m);
    let mut diag = Vec::with_capacity(m);
    let mut parts = Vec::with_capacity(m);
    for &i in &nodes {
        let t = i as f64 * lat.dt;
        let beta = lat.beta[i];
        let (v, eta) = lat.filter_at(&filt.phi, t)?;
        a.push(v[0] * beta);
        diag.push(2.0 * beta * beta * (v[1] + v[2] / eta));
        parts.push((v[1], v[2] / eta));
    }
    let a2: Vec<f64> = a.iter().map(|x| 2.0 * x * x).collect();
    let g_inf = trapezoid(&a2, ds);
    if !(g_inf >= VARIANCE_FLOOR) {
        return Err(Error::DegenerateVariance);
    }
    let c1 = trapezoid(&diag, ds);
    let ab: Vec<f64> = a
        .iter()
        .zip(&nodes)
        .map(|(x, &i)| x * lat.beta[i])
        .collect();
    let prim = Antiderivative::new(&ab, ds);
    let total = prim.total();
    let inner: Vec<f64> = (0..m)
        .map(|k| {
            let t = nodes[k] as f64 * lat.dt;
            let (lo, hi) = lat.window(t);
            let (p1, p2) = parts[k];
            ab[k] * (p1 * total + p2 * prim.between(lo, hi))
        })
        .collect();
    let c3 = 4.0 / (g_inf * g_inf) * trapezoid(&inner, ds);
    let symbol = RandomSymbol::from_terms([((3, 0), c3 * g_inf * g_inf), ((1, 0), c1)]).pruned();
    Ok(Adjustment {
        c1,
        c3,
        g_inf,
        symbol,
    })
}

/// Monte Carlo setup of the robust volatility experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct RobustVolConfig {
    pub sigma: CoefFn,
    pub drift: CoefFn,
    pub x0: f64,
    pub filter: FilterSpec,
    pub n: usize,
    pub refine: usize,
    pub reps: u64,
    /// Jump intensity per unit time.
    pub jump_rate: f64,
    /// Jump sizes are `N(0, jump_scale / n)`.
    pub jump_scale: f64,
    pub seed: u64,
}

impl Default for RobustVolConfig {
    fn default() -> Self {
        Self {
            sigma: CoefFn::Const(1.0),
            drift: CoefFn::Const(0.0),
            x0: 0.0,
            filter: FilterSpec {
                phi: Filter::SmoothCut {
                    c: 3.0,
                    c0: DEFAULT_GUARD,
                },
                lambda: 0.005,
            },
            n: 1024,
            refine: 4,
            reps: 1000,
            jump_rate: 0.0,
            jump_scale: 10.0,
            seed: 1,
        }
    }
}

/// One replication: contaminated and clean statistics of the same path.
#[derive(Debug, Clone, PartialEq)]
pub struct RobustVolRow {
    pub rep: u64,
    pub u_n: f64,
    pub v_robust: f64,
    pub v_target: f64,
    pub z_n: f64,
    pub g_inf: f64,
    /// `∫σ²` of the latent path.
    pub iv: f64,
    pub clean_u_n: f64,
    pub clean_v_robust: f64,
}

pub fn robustvol_row(cfg: &RobustVolConfig, rep: u64) -> Result<RobustVolRow> {
    let grid = sample_wiener(cfg.n, cfg.refine, cfg.seed, rep)?;
    let path = solve(grid, &cfg.sigma, &cfg.drift, cfg.x0, Scheme::Milstein)?;
    let sd = (cfg.jump_scale / cfg.n as f64).sqrt();
    let overlay = sample_jumps(
        cfg.jump_rate,
        JumpSize::Normal { sd },
        seed_stream(cfg.seed, rep, Purpose::Jumps),
    )?;
    let observed = contaminate(&path, &overlay);
    let dirty = robust_rv_with(&path, &observed, &cfg.filter)?;
    let clean_inc = path.coarse_increments();
    let clean = local_stats(&clean_inc, cfg.filter.lambda)?;
    let mut cv = Kahan::new();
    for (j, d) in clean_inc.iter().enumerate() {
        cv.add(check_finite(cfg.filter.phi.value(clean.u_n, clean.l[j]))? * d * d);
    }
    Ok(RobustVolRow {
        rep,
        u_n: dirty.u_n,
        v_robust: dirty.v_robust,
        v_target: dirty.v_target,
        z_n: dirty.z_n,
        g_inf: dirty.g_inf,
        iv: dirty.u_inf,
        clean_u_n: clean.u_n,
        clean_v_robust: cv.value(),
    })
}

pub fn simulate_robust(cfg: &RobustVolConfig) -> Result<Vec<RobustVolRow>> {
    if cfg.reps == 0 {
        return Err(Error::InvalidParameter("reps must be positive".into()));
    }
    try_par_map(cfg.reps, |rep| robustvol_row(cfg, rep))
}

/// Bias and RMSE of `U_n` and `𝕍_n` against the latent integrated volatility.
#[derive(Debug, Clone, PartialEq)]
pub struct RobustVolSummary {
    pub reps: usize,
    pub bias_u: f64,
    pub se_bias_u: f64,
    pub bias_v: f64,
    pub se_bias_v: f64,
    pub rmse_u: f64,
    pub rmse_v: f64,
    /// Share of replications with `|𝕍_n − U_n| / U_n < pass_band` on clean data.
    pub pass_rate: f64,
    pub pass_band: f64,
}

pub fn summarize_robust(rows: &[RobustVolRow], pass_band: f64) -> RobustVolSummary {
    let eu: Vec<f64> = rows.iter().map(|r| r.u_n - r.iv).collect();
    let ev: Vec<f64> = rows.iter().map(|r| r.v_robust - r.iv).collect();
    let (su, sv) = (summarize(&eu), summarize(&ev));
    let rmse = |e: &[f64]| (e.iter().map(|x| x * x).sum::<f64>() / e.len() as f64).sqrt();
    let pass = rows
        .iter()
        .filter(|r| ((r.clean_v_robust - r.clean_u_n) / r.clean_u_n).abs() < pass_band)
        .count();
    RobustVolSummary {
        reps: rows.len(),
        bias_u: su.mean,
        se_bias_u: su.se,
        bias_v: sv.mean,
        se_bias_v: sv.se,
        rmse_u: rmse(&eu),
        rmse_v: rmse(&ev),
        pass_rate: pass as f64 / rows.len().max(1) as f64,
        pass_band,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::paths::{euler_path, milstein_path, sample_wiener};

    fn unit_path(n: usize, r: usize, seed: u64, rep: u64) -> DiffusionPath {
        let g = sample_wiener(n, r, seed, rep).unwrap();
        euler_path(g, &CoefFn::Const(1.0), &CoefFn::Const(0.0), 0.0).unwrap()
    }

    fn tanh_path(n: usize, r: usize, rep: u64) -> DiffusionPath {
        let g = sample_wiener(n, r, 17, rep).unwrap();
        let sigma = CoefFn::Tanh {
            base: 1.0,
            amp: 0.3,
        };
        milstein_path(g, &sigma, &CoefFn::Linear(0.1, -0.2), 0.2).unwrap()
    }

    #[test]
    fn catalog_round_trips() {
        for s in [
            "one",
            "const:0.5",
            "linear",
            "smoothcut:3,0.5",
            "cut:2",
            "hardcut:4",
        ] {
            let f: Filter = s.parse().unwrap();
            assert_eq!(f.to_string(), s);
        }
        assert_eq!(
            "smoothcut:2".parse::<Filter>().unwrap(),
            Filter::SmoothCut {
                c: 2.0,
                c0: DEFAULT_GUARD
            }
        );
        assert!(matches!(
            "tophat".parse::<Filter>(),
            Err(Error::UnknownName { .. })
        ));
        assert!("cut:-1".parse::<Filter>().is_err());
    }

    #[test]
    fn partials_match_finite_differences() {
        for s in [
            "one",
            "const:0.5",
            "linear",
            "smoothcut:2",
            "smoothcut:1.5,1.2",
            "cut:0.8",
        ] {
            s.parse::<Filter>().unwrap().check_partials().unwrap();
        }
    }

    #[test]
    fn smooth_cut_shape() {
        let f = Filter::SmoothCut { c: 2.0, c0: 0.5 };
        assert_eq!(f.value(1.0, 1.9), 1.0);
        assert_eq!(f.value(1.0, 4.1), 0.0);
        assert_eq!(f.value(0.2, 0.1), 0.0);
        let mid = f.value(1.0, 3.0);
        assert!(mid > 0.0 && mid < 1.0);
    }

    #[test]
    fn lambda_is_validated() {
        assert!(FilterSpec::new(Filter::One, 0.0).is_err());
        assert!(FilterSpec::new(Filter::One, 1.0).is_err());
        assert!(local_stats(&[0.1; 10], 0.1).is_err());
        assert!(local_stats(&[0.1; 10], 0.2).is_ok());
    }

    #[test]
    fn window_arithmetic() {
        let (n, lambda) = (100, 0.05);
        let ls = local_stats(&vec![0.3; n], lambda).unwrap();
        let m = 5;
        assert_eq!(ls.half_width, m);
        assert_eq!(ls.bounds[0], (1, m));
        assert!((ls.eta[0] - m as f64 / n as f64).abs() < 1e-15);
        assert_eq!(ls.bounds[n - 1], (n - m + 1, n));
        for j in m..=n - m + 1 {
            assert_eq!(ls.bounds[j - 1], (j - m + 1, j + m - 1));
            let expect = n as f64 * 0.09;
            assert!((ls.l[j - 1] - expect).abs() < 1e-12 * expect);
        }
        assert!((ls.u_n - 9.0).abs() < 1e-12);
    }

    #[test]
    fn identity_filter_is_plain_rv() {
        let p = tanh_path(64, 4, 3);
        let spec = FilterSpec::new(Filter::One, 0.1).unwrap();
        let s = robust_rv(&p, &spec).unwrap();
        assert_eq!(s.v_robust, s.u_n);
        assert!((s.v_target - s.u_inf).abs() < 1e-12);
    }

    #[test]
    fn unit_volatility_rv_is_near_one() {
        let spec = FilterSpec::new(Filter::One, 0.05).unwrap();
        let us: Vec<f64> = (0..400)
            .map(|k| robust_rv(&unit_path(128, 1, 5, k), &spec).unwrap().u_n)
            .collect();
        let s = summarize(&us);
        assert!((s.mean - 1.0).abs() < 5.0 * s.se, "{} ± {}", s.mean, s.se);
    }

    #[test]
    fn constant_volatility_variance() {
        let sigma0: f64 = 1.3;
        let spec = FilterSpec::new(Filter::SmoothCut { c: 3.0, c0: 0.5 }, 0.05).unwrap();
        let zs: Vec<f64> = (0..3000)
            .map(|k| {
                let g = sample_wiener(256, 1, 9, k).unwrap();
                let p = euler_path(g, &CoefFn::Const(sigma0), &CoefFn::Const(0.0), 0.0).unwrap();
                let s = robust_rv(&p, &spec).unwrap();
                assert!((s.g_inf - 2.0 * sigma0.powi(4)).abs() < 1e-12);
                s.z_n
            })
            .collect();
        let s = summarize(&zs);
        let target = 2.0 * sigma0.powi(4);
        let se_var = s.var * (2.0 / zs.len() as f64).sqrt();
        assert!(s.mean.abs() < 5.0 * s.se);
        assert!(
            (s.var - target).abs() < 5.0 * se_var,
            "{} vs {target}",
            s.var
        );
    }

    #[test]
    fn hard_cut_removes_the_jump_window() {
        let (n, lambda) = (1024, 4.5 / 1024.0);
        let spec = FilterSpec::new(Filter::HardCut { c: 4.0 }, lambda).unwrap();
        let m = window_half_width(n, lambda);
        let cell = 300;
        let mut diffs = Vec::new();
        for rep in 0..50 {
            let p = unit_path(n, 1, 21, rep);
            let mut inc = p.coarse_increments();
            inc[cell - 1] += 1.0;
            let ls = local_stats(&inc, lambda).unwrap();
            for j in 1..=n {
                let keep = spec.phi.value(ls.u_n, ls.l[j - 1]);
                let covers = j + m > cell && j < cell + m;
                assert_eq!(keep == 0.0, covers, "rep {rep}, j {j}");
            }
            let s = robust_rv_with(&p, &inc, &spec).unwrap();
            let clean = robust_rv(&p, &FilterSpec::new(Filter::One, lambda).unwrap()).unwrap();
            diffs.push(s.v_robust - clean.u_n);
        }
        let d = summarize(&diffs);
        let rv_se = (2.0 / n as f64).sqrt();
        assert!(d.mean.abs() < 3.0 * rv_se, "{}", d.mean);
    }

    #[test]
    fn unit_coefficients_expand_exactly() {
        let p = unit_path(64, 4, 2, 0);
        let spec = FilterSpec::new(Filter::One, 0.1).unwrap();
        let e = error_expansion_terms(&p, &spec, Derivative::Tangent).unwrap();
        assert!(e.s.iter().all(|&v| v == 0.0));
        assert!(e.theta.iter().all(|&v| v == 1.0));
        assert_eq!(e.n_x, 0.0);
        assert!(e.d_theta_beta.iter().all(|&v| v == 0.0));
        assert!(e.residual.abs() < 1e-12, "{}", e.residual);
    }

    #[test]
    fn linear_filter_cross_term_is_squared_sum() {
        let p = tanh_path(64, 4, 1);
        let spec = FilterSpec::new(Filter::Linear, 0.1).unwrap();
        let e = error_expansion_terms(&p, &spec, Derivative::Tangent).unwrap();
        let sum: f64 = e.f.iter().sum();
        let expect = 64.0 * sum * sum;
        assert!((e.n_x - expect).abs() < 1e-10 * expect.abs().max(1.0));
    }

    #[test]
    fn tangent_derivative_matches_bump() {
        for phi in [Filter::Linear, Filter::SmoothCut { c: 0.9, c0: 0.5 }] {
            let p = tanh_path(32, 4, 6);
            let spec = FilterSpec::new(phi, 0.1).unwrap();
            let a = error_expansion_terms(&p, &spec, Derivative::Tangent).unwrap();
            let b = error_expansion_terms(&p, &spec, Derivative::Bump { eps: 1e-4 }).unwrap();
            let scale = a.d_theta_beta.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
            assert!(scale > 1e-3, "{phi}: derivative vanishes");
            for (x, y) in a.d_theta_beta.iter().zip(&b.d_theta_beta) {
                assert!((x - y).abs() < 1e-6 * scale.max(1.0), "{phi}: {x} vs {y}");
            }
        }
    }

    #[test]
    fn remainder_term_matches_squared_increment() {
        // For a one-cell expansion the squared increment minus the integrated
        // variance is F + S up to O(h^{5/2}).
        let sigma = CoefFn::Tanh {
            base: 1.0,
            amp: 0.4,
        };
        let drift = CoefFn::Linear(0.3, -0.5);
        let err = |n: usize| {
            let mut acc = 0.0;
            let reps = 400;
            for rep in 0..reps {
                let g = sample_wiener(n, 256, 33, rep).unwrap();
                let p = milstein_path(g, &sigma, &drift, 0.1).unwrap();
                let spec = FilterSpec::new(Filter::One, 0.5).unwrap();
                let e = error_expansion_terms(&p, &spec, Derivative::Tangent).unwrap();
                let lat = LatentVolatility::new(&p, 0.5).unwrap();
                let d = p.at_coarse(1) - p.at_coarse(0);
                let exact = d * d - lat.integrated(0.0, 1.0 / n as f64);
                acc += (exact - e.f[0] - e.s[0]).powi(2);
            }
            (acc / reps as f64).sqrt()
        };
        let (a, b) = (err(4), err(16));
        let slope = (b / a).ln() / 4f64.ln();
        assert!(slope < -2.2, "slope {slope}");
    }

    #[test]
    fn adjustment_symbol_for_linear_filter() {
        let p = unit_path(64, 4, 1, 0);
        let spec = FilterSpec::new(Filter::Linear, 0.1).unwrap();
        let a = adjustment_symbol(&p, &spec, 1).unwrap();
        assert!((a.g_inf - 2.0).abs() < 1e-12);
        assert!((a.c1 - 2.0).abs() < 1e-12);
        assert!((a.c3 - 1.0).abs() < 1e-12);
        assert!((a.symbol.coef(3, 0) - 4.0).abs() < 1e-12);
        assert!((a.symbol.coef(1, 0) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn constant_filter_has_no_adjustment() {
        let p = tanh_path(64, 4, 2);
        let spec = FilterSpec::new(Filter::Const(0.7), 0.1).unwrap();
        let a = adjustment_symbol(&p, &spec, 1).unwrap();
        assert!(a.symbol.is_empty());
    }

    #[test]
    fn zero_filter_is_degenerate() {
        let p = tanh_path(64, 4, 2);
        let spec = FilterSpec::new(Filter::Const(0.0), 0.1).unwrap();
        assert_eq!(
            adjustment_symbol(&p, &spec, 1).unwrap_err(),
            Error::DegenerateVariance
        );
    }

    #[test]
    fn adjustment_symbol_is_stable_under_refinement() {
        let p = tanh_path(128, 32, 4);
        let spec = FilterSpec::new(Filter::Linear, 0.1).unwrap();
        let fine = adjustment_symbol(&p, &spec, 1).unwrap();
        let coarse = adjustment_symbol(&p, &spec, 2).unwrap();
        for (x, y) in [(fine.c1, coarse.c1), (fine.c3, coarse.c3)] {
            assert!((x - y).abs() < 1e-3 * x.abs(), "{x} vs {y}");
        }
    }

    #[test]
    fn adjustment_symbol_matches_double_integral() {
        // Midpoint rule over the triangle s < t with the symmetrized kernel.
        // The two partials of a cut filter nearly cancel, so the comparison
        // is scaled by the integral of the absolute integrand.
        let p = tanh_path(64, 8, 5);
        for phi in [Filter::Linear, Filter::SmoothCut { c: 0.7, c0: 0.5 }] {
            let spec = FilterSpec::new(phi, 0.15).unwrap();
            let lat = LatentVolatility::new(&p, spec.lambda).unwrap();
            let a = adjustment_symbol(&p, &spec, 1).unwrap();
            let m = 600;
            let beta_at = |t: f64| {
                let x = t / lat.dt;
                let k = (x.floor() as usize).min(lat.beta.len() - 2);
                let fr = x - k as f64;
                lat.beta[k] * (1.0 - fr) + lat.beta[k + 1] * fr
            };
            let fields: Vec<([f64; 3], f64, f64, (f64, f64))> = (0..m)
                .map(|i| {
                    let t = (i as f64 + 0.5) / m as f64;
                    let (v, eta) = lat.filter_at(&spec.phi, t).unwrap();
                    (v, eta, beta_at(t), lat.window(t))
                })
                .collect();
            let mid = |i: usize| (i as f64 + 0.5) / m as f64;
            let lam = |s: usize, t: usize| {
                let (v, eta, bs, (lo, hi)) = fields[s];
                let inside = if mid(t) >= lo && mid(t) <= hi {
                    1.0
                } else {
                    0.0
                };
                bs * fields[t].2 * (v[1] + inside * v[2] / eta)
            };
            let (mut acc, mut scale) = (0.0, 0.0);
            for it in 0..m {
                let at = fields[it].0[0] * fields[it].2;
                for is in 0..it {
                    let as_ = fields[is].0[0] * fields[is].2;
                    let sym = 0.5 * (lam(is, it) + lam(it, is));
                    acc += 8.0 * at * sym * as_;
                    scale += 8.0 * (at * as_).abs() * 0.5 * (lam(is, it).abs() + lam(it, is).abs());
                }
                acc += 4.0 * at * lam(it, it) * at;
                scale += 4.0 * (at * lam(it, it) * at).abs();
            }
            let norm = (m * m) as f64 * a.g_inf * a.g_inf;
            let (c3, scale) = (acc / norm, scale / norm);
            assert!(
                (c3 - a.c3).abs() < 5e-3 * scale,
                "{phi}: {c3} vs {} (scale {scale})",
                a.c3
            );
        }
    }
}
