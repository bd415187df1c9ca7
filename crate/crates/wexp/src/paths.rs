//! Brownian paths on refined uniform grids, diffusion paths driven by them
//! and additive jump contamination of observed increments.
//!
//! The coarse grid is `t_j = j/n`; every coarse cell is split into `R` fine
//! cells used for time integrals and for the diffusion scheme.

use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Poisson};

use crate::error::{Error, Result};
use crate::rng::{fill_normals, normal, seed_stream, Purpose, StreamKey};

/// Largest number of fine nodes a single grid may hold.
pub const MAX_NODES: usize = 1 << 26;

/// A Brownian path sampled at `k/(nR)`, `k = 0..=nR`.
#[derive(Debug, Clone, PartialEq)]
pub struct WienerGrid {
    pub n: usize,
    pub r: usize,
    /// Fine increments, `nR` of them.
    pub dw: Vec<f64>,
    /// Path values, `nR + 1` of them, starting at 0.
    pub values: Vec<f64>,
    pub seed: u64,
    pub rep_index: u64,
}

impl WienerGrid {
    /// Number of fine cells.
    pub fn fine_len(&self) -> usize {
        self.n * self.r
    }

    /// Fine step `1/(nR)`.
    pub fn dt(&self) -> f64 {
        1.0 / self.fine_len() as f64
    }

    /// Coarse step `1/n`.
    pub fn h(&self) -> f64 {
        1.0 / self.n as f64
    }

    /// Path value at coarse node `t_j`.
    pub fn at_coarse(&self, j: usize) -> f64 {
        self.values[j * self.r]
    }

    /// `w_1`.
    pub fn terminal(&self) -> f64 {
        self.values[self.fine_len()]
    }

    /// Build a grid from given fine increments (used by tests and by callers
    /// that construct paths by hand).
    pub fn from_increments(n: usize, r: usize, dw: Vec<f64>) -> Result<Self> {
        if dw.len() != n * r {
            return Err(Error::LengthMismatch(dw.len(), n * r));
        }
        if dw.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidPathValue);
        }
        let mut values = Vec::with_capacity(dw.len() + 1);
        values.push(0.0);
        let mut acc = 0.0;
        for d in &dw {
            acc += d;
            values.push(acc);
        }
        Ok(Self {
            n,
            r,
            dw,
            values,
            seed: 0,
            rep_index: 0,
        })
    }

    /// `Δ_j w`, the sum of the `R` fine increments of coarse cell `j`.
    pub fn coarse_increment(&self, j: usize) -> Result<f64> {
        if j == 0 || j > self.n {
            return Err(Error::IndexOutOfRange {
                index: j,
                n: self.n,
            });
        }
        Ok(self.coarse_increment_unchecked(j))
    }

    #[inline]
    pub(crate) fn coarse_increment_unchecked(&self, j: usize) -> f64 {
        self.dw[(j - 1) * self.r..j * self.r].iter().sum()
    }

    /// All coarse increments `Δ_1 w, ..., Δ_n w`.
    pub fn coarse_increments(&self) -> Vec<f64> {
        (1..=self.n)
            .map(|j| self.coarse_increment_unchecked(j))
            .collect()
    }
}

fn check_grid(n: usize, r: usize) -> Result<()> {
    if n < 2 {
        return Err(Error::InvalidParameter(format!(
            "n must be at least 2, got {n}"
        )));
    }
    if r < 1 {
        return Err(Error::InvalidParameter(
            "refinement must be at least 1".into(),
        ));
    }
    let nodes = n.checked_mul(r).and_then(|x| x.checked_add(1));
    match nodes {
        Some(k) if k <= MAX_NODES => Ok(()),
        Some(k) => Err(Error::GridTooLarge(k)),
        None => Err(Error::GridTooLarge(usize::MAX)),
    }
}

/// Brownian path from the stream `(seed, rep_index, purpose)`.
pub fn sample_wiener_with(n: usize, r: usize, key: StreamKey) -> Result<WienerGrid> {
    check_grid(n, r)?;
    let len = n * r;
    let sd = (1.0 / len as f64).sqrt();
    let mut rng = key.rng();
    let mut dw = vec![0.0; len];
    fill_normals(&mut rng, &mut dw);
    let mut values = Vec::with_capacity(len + 1);
    values.push(0.0);
    let mut acc = 0.0;
    for d in dw.iter_mut() {
        *d *= sd;
        acc += *d;
        values.push(acc);
    }
    Ok(WienerGrid {
        n,
        r,
        dw,
        values,
        seed: key.seed,
        rep_index: key.rep_index,
    })
}

/// Brownian path from the default path stream of `(seed, rep_index)`.
pub fn sample_wiener(n: usize, r: usize, seed: u64, rep_index: u64) -> Result<WienerGrid> {
    sample_wiener_with(n, r, seed_stream(seed, rep_index, Purpose::Path))
}

/// A scalar coefficient with its first three derivatives.
#[derive(Debug, Clone, PartialEq)]
pub enum CoefFn {
    /// `c`
    Const(f64),
    /// `c0 + c1·x`
    Linear(f64, f64),
    /// `base + amp·tanh(x)`
    Tanh { base: f64, amp: f64 },
    /// `Σ c_k x^k`
    Poly(Vec<f64>),
}

pub(crate) fn poly_eval(c: &[f64], x: f64, deriv: u32) -> f64 {
    let mut acc = 0.0;
    for (k, &ck) in c.iter().enumerate().rev() {
        let k = k as u32;
        if k < deriv {
            break;
        }
        let fall: f64 = (0..deriv).map(|i| (k - i) as f64).product();
        acc = acc * x + ck * fall;
    }
    acc
}

impl CoefFn {
    /// `f^{(k)}(x)` for `k ≤ 3`.
    pub fn deriv(&self, k: u32, x: f64) -> f64 {
        match self {
            CoefFn::Const(c) => {
                if k == 0 {
                    *c
                } else {
                    0.0
                }
            }
            CoefFn::Linear(c0, c1) => match k {
                0 => c0 + c1 * x,
                1 => *c1,
                _ => 0.0,
            },
            CoefFn::Tanh { base, amp } => {
                let t = x.tanh();
                let s = 1.0 - t * t;
                match k {
                    0 => base + amp * t,
                    1 => amp * s,
                    2 => -2.0 * amp * t * s,
                    3 => amp * s * (6.0 * t * t - 2.0),
                    _ => unimplemented!("derivatives above order 3"),
                }
            }
            CoefFn::Poly(c) => poly_eval(c, x, k),
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

    pub fn name(&self) -> String {
        fn list(v: &[f64]) -> String {
            v.iter()
                .map(|x| x.to_string())
                .collect::<Vec<_>>()
                .join(",")
        }
        match self {
            CoefFn::Const(c) => format!("const:{c}"),
            CoefFn::Linear(a, b) => format!("linear:{a},{b}"),
            CoefFn::Tanh { base, amp } => format!("tanh:{base},{amp}"),
            CoefFn::Poly(c) => format!("poly:{}", list(c)),
        }
    }
}

pub const COEF_CATALOG: &str = "const:c, linear:c0,c1, tanh:base,amp, poly:c0,c1,...";

pub(crate) fn parse_list(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|p| {
            p.trim()
                .parse::<f64>()
                .map_err(|_| Error::InvalidParameter(format!("not a number: '{p}'")))
        })
        .collect()
}

impl FromStr for CoefFn {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let unknown = || Error::UnknownName {
            kind: "coefficient",
            name: s.to_string(),
            catalog: COEF_CATALOG,
        };
        let (head, args) = s.split_once(':').unwrap_or((s, ""));
        let v = if args.is_empty() {
            Vec::new()
        } else {
            parse_list(args)?
        };
        match (head, v.len()) {
            ("const", 1) => Ok(CoefFn::Const(v[0])),
            ("linear", 2) => Ok(CoefFn::Linear(v[0], v[1])),
            ("tanh", 2) => Ok(CoefFn::Tanh {
                base: v[0],
                amp: v[1],
            }),
            ("poly", k) if k >= 1 => Ok(CoefFn::Poly(v)),
            _ => Err(unknown()),
        }
    }
}

/// Time-stepping rule for the diffusion on the fine grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    Euler,
    /// Euler plus the `½σσ'((Δw)² − Δt)` correction.
    Milstein,
}

/// Solution of `dX = σ(X)dw + b(X)dt` on the fine grid of a Brownian path.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionPath {
    pub grid: WienerGrid,
    pub x: Vec<f64>,
    pub x0: f64,
    pub sigma: CoefFn,
    pub drift: CoefFn,
    pub scheme: Scheme,
}

impl DiffusionPath {
    /// `X_{t_j}`.
    pub fn at_coarse(&self, j: usize) -> f64 {
        self.x[j * self.grid.r]
    }

    /// Coarse increments `Δ_j X`.
    pub fn coarse_increments(&self) -> Vec<f64> {
        (1..=self.grid.n)
            .map(|j| self.at_coarse(j) - self.at_coarse(j - 1))
            .collect()
    }
}

/// Solve the SDE with the given scheme.
pub fn solve(
    grid: WienerGrid,
    sigma: &CoefFn,
    drift: &CoefFn,
    x0: f64,
    scheme: Scheme,
) -> Result<DiffusionPath> {
    let dt = grid.dt();
    let mut x = Vec::with_capacity(grid.dw.len() + 1);
    x.push(x0);
    let mut cur = x0;
    for (k, &dw) in grid.dw.iter().enumerate() {
        let s = sigma.value(cur);
        let mut next = cur + s * dw + drift.value(cur) * dt;
        if scheme == Scheme::Milstein {
            next += 0.5 * s * sigma.d1(cur) * (dw * dw - dt);
        }
        if !next.is_finite() {
            return Err(Error::Explosion(k));
        }
        x.push(next);
        cur = next;
    }
    Ok(DiffusionPath {
        grid,
        x,
        x0,
        sigma: sigma.clone(),
        drift: drift.clone(),
        scheme,
    })
}

/// Euler-Maruyama on the fine grid.
pub fn euler_path(
    grid: WienerGrid,
    sigma: &CoefFn,
    drift: &CoefFn,
    x0: f64,
) -> Result<DiffusionPath> {
    solve(grid, sigma, drift, x0, Scheme::Euler)
}

/// Milstein on the fine grid.
pub fn milstein_path(
    grid: WienerGrid,
    sigma: &CoefFn,
    drift: &CoefFn,
    x0: f64,
) -> Result<DiffusionPath> {
    solve(grid, sigma, drift, x0, Scheme::Milstein)
}

/// Law of jump sizes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum JumpSize {
    /// Centered normal with the given standard deviation.
    Normal { sd: f64 },
    /// Every jump has the same size.
    Fixed(f64),
}

/// Realized compound-Poisson jumps on `[0,1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct JumpOverlay {
    pub rate: f64,
    pub size: JumpSize,
    /// `(time, size)` pairs sorted by time.
    pub jumps: Vec<(f64, f64)>,
}

impl JumpOverlay {
    /// An overlay with no jumps.
    pub fn none() -> Self {
        Self {
            rate: 0.0,
            size: JumpSize::Fixed(0.0),
            jumps: Vec::new(),
        }
    }

    /// An overlay with the given jumps.
    pub fn fixed(jumps: Vec<(f64, f64)>) -> Self {
        Self {
            rate: 0.0,
            size: JumpSize::Fixed(0.0),
            jumps,
        }
    }
}

/// Draw a compound-Poisson overlay with intensity `rate` per unit time.
pub fn sample_jumps(rate: f64, size: JumpSize, key: StreamKey) -> Result<JumpOverlay> {
    if !(rate >= 0.0) || !rate.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "jump rate must be >= 0, got {rate}"
        )));
    }
    let mut jumps = Vec::new();
    if rate > 0.0 {
        let mut rng = key.rng();
        let count = Poisson::new(rate)
            .map_err(|e| Error::InvalidParameter(e.to_string()))?
            .sample(&mut rng) as usize;
        for _ in 0..count {
            let t: f64 = rng.random();
            let s = match size {
                JumpSize::Normal { sd } => sd * normal(&mut rng),
                JumpSize::Fixed(j) => j,
            };
            jumps.push((t, s));
        }
        jumps.sort_by(|a, b| a.0.total_cmp(&b.0));
    }
    Ok(JumpOverlay { rate, size, jumps })
}

/// Coarse cell `j ∈ 1..=n` containing time `t`, with `t_{j-1} < t ≤ t_j`.
pub fn cell_of(t: f64, n: usize) -> usize {
    ((t * n as f64).ceil() as usize).clamp(1, n)
}

/// Observed coarse increments: the latent `Δ_j X` plus the jumps falling in
/// each cell. The latent path is not modified.
pub fn contaminate(path: &DiffusionPath, overlay: &JumpOverlay) -> Vec<f64> {
    let n = path.grid.n;
    let mut inc = path.coarse_increments();
    for &(t, s) in &overlay.jumps {
        inc[cell_of(t, n) - 1] += s;
    }
    inc
}
