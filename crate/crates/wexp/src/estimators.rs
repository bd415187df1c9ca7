//! Path-wise statistics of the weighted variation: the variation itself,
//! its Skorohod principal part and perturbation term, the error of the
//! anticipatively weighted quadratic variation, and the first projection
//! of the principal part onto its own integrand.

use crate::chaos::{eval_linearization, eval_multiple_integral, linearize_product};
use crate::error::{Error, Result};
use crate::paths::WienerGrid;
use crate::quad;
use crate::stats::Kahan;
use crate::weights::{FamilyKind, WeightFamily};

/// One replication of `Z_n = M_n + n^{-1/2} N_n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VariationSample {
    pub n: usize,
    /// The raw statistic.
    pub v_n: f64,
    /// The centred and scaled statistic; equal to `v_n` for the general
    /// variation, which needs no centring.
    pub z_n: f64,
    /// Skorohod integral `δ(u_n)`.
    pub m_n: f64,
    /// Perturbation term.
    pub n_n: f64,
}

/// `V_n = Σ_q n^{(q-1)/2} Σ_j a_j(q) I_q(1_j^{⊗q})` with its split into
/// `M_n` and `N_n = Σ_q n^{q/2} Σ_j (D_{1_j} a_j(q)) I_{q-1}(1_j^{⊗(q-1)})`.
pub fn variation(fam: &WeightFamily, grid: &WienerGrid) -> Result<VariationSample> {
    let n = grid.n;
    let h = grid.h();
    let dw = grid.coarse_increments();
    let mut v = Kahan::new();
    let mut corr = Kahan::new();
    for &q in &fam.orders() {
        let scale_v = (n as f64).powf(0.5 * (q as f64 - 1.0));
        let scale_n = (n as f64).powf(0.5 * q as f64);
        for j in 1..=n {
            let [a, d1, _] = fam.weight_derivs_at(grid, j, q)?;
            let d = dw[j - 1];
            v.add(scale_v * a * eval_multiple_integral(q as i32, d, h)?);
            let da = d1 * fam.overlap(n, j, j);
            if da != 0.0 {
                corr.add(scale_n * da * eval_multiple_integral(q as i32 - 1, d, h)?);
            }
        }
    }
    let v_n = v.value();
    let n_n = corr.value();
    Ok(VariationSample {
        n,
        v_n,
        z_n: v_n,
        m_n: v_n - n_n / (n as f64).sqrt(),
        n_n,
    })
}

/// `M_n` assembled term by term from the Skorohod integral of `u_n`.
pub fn principal_part(fam: &WeightFamily, grid: &WienerGrid) -> Result<f64> {
    let n = grid.n;
    let h = grid.h();
    let mut m = Kahan::new();
    for &q in &fam.orders() {
        let scale = (n as f64).powf(0.5 * (q as f64 - 1.0));
        for j in 1..=n {
            let d = grid.coarse_increment(j)?;
            let a = fam.weight_at(grid, j, q)?;
            let da = fam.gap_dweight(grid, j, j, q)?;
            m.add(scale * a * eval_multiple_integral(q as i32, d, h)?);
            m.add(-scale * da * eval_multiple_integral(q as i32 - 1, d, h)?);
        }
    }
    Ok(m.value())
}

/// Error of the anticipatively weighted quadratic variation with its
/// exact split.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadraticError {
    /// `v_n = Σ_j a(w_{1-t_j}) (Δ_j w)^2`, `z_n = √n (v_n - V_∞)`,
    /// `n_n = N^{(1)} + N^{(2)}`.
    pub sample: VariationSample,
    /// `V_∞ = ∫_0^1 a(w_{1-t}) dt`.
    pub v_inf: f64,
    /// `n Σ_j (D_{1_j} a_j) I_1(1_j)`.
    pub n1: f64,
    /// `n Σ_j ∫_{I_j} (a_j - a(w_{1-t})) dt`.
    pub n2: f64,
}

/// `Z_n = √n (V_n - V_∞) = M_n + n^{-1/2}(N^{(1)} + N^{(2)})`.
pub fn quadratic_error(fam: &WeightFamily, grid: &WienerGrid) -> Result<QuadraticError> {
    if !fam.is_quadratic_anticipative() {
        return Err(Error::Unsupported(format!(
            "the quadratic error needs an anticipative family with Q = {{2}}, got {fam}"
        )));
    }
    let f = fam.weight_fn(2)?;
    let n = grid.n;
    let nf = n as f64;
    let h = grid.h();
    let path_a: Vec<f64> = grid.values.iter().map(|&x| f.value(x)).collect();
    let v_inf = quad::trapezoid(&path_a, grid.dt());
    let mut v = Kahan::new();
    let mut sum_a = Kahan::new();
    let mut n1 = Kahan::new();
    for j in 1..=n {
        let [a, d1, _] = fam.weight_derivs_at(grid, j, 2)?;
        let d = grid.coarse_increment(j)?;
        v.add(a * d * d);
        sum_a.add(a);
        n1.add(nf * d1 * fam.overlap(n, j, j) * d);
    }
    let v_n = v.value();
    let z_n = nf.sqrt() * (v_n - v_inf);
    let n1 = n1.value();
    let n2 = nf * (h * sum_a.value() - v_inf);
    let n_n = n1 + n2;
    Ok(QuadraticError {
        sample: VariationSample {
            n,
            v_n,
            z_n,
            m_n: z_n - n_n / nf.sqrt(),
            n_n,
        },
        v_inf,
        n1,
        n2,
    })
}

/// The four pieces of `D_{u_n} M_n` for `Q = {2}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FirstProjection {
    pub i1: f64,
    pub i2: f64,
    pub i3: f64,
    pub i4: f64,
}

impl FirstProjection {
    pub fn total(&self) -> f64 {
        self.i1 + self.i2 + self.i3 + self.i4
    }
}

/// `D_{u_n} M_n` split into its four contributions, for `Q = {2}`.
///
/// With `Q = {2}` the inner products `⟨1_j,1_k⟩` keep only the diagonal,
/// and `D_{1_k} a_j` is `a'_j · h` on a contiguous range of `k`, so every
/// double sum reduces to a prefix sum of `a_k Δ_k w`.
pub fn first_projection(fam: &WeightFamily, grid: &WienerGrid) -> Result<FirstProjection> {
    if fam.orders() != [2] {
        return Err(Error::Unsupported(format!(
            "the first projection is implemented for Q = {{2}}, got {fam}"
        )));
    }
    let n = grid.n;
    let nf = n as f64;
    let h = grid.h();
    let dw = grid.coarse_increments();
    let mut a = Vec::with_capacity(n);
    let mut d1 = Vec::with_capacity(n);
    let mut d2 = Vec::with_capacity(n);
    for j in 1..=n {
        let [x, y, z] = fam.weight_derivs_at(grid, j, 2)?;
        a.push(x);
        d1.push(y);
        d2.push(z);
    }
    // prefix[m] = Σ_{k ≤ m} a_k Δ_k w
    let mut prefix = vec![0.0; n + 1];
    for k in 1..=n {
        prefix[k] = prefix[k - 1] + a[k - 1] * dw[k - 1];
    }
    let reach = |j: usize| match fam.kind {
        FamilyKind::Anticipative => n - j,
        FamilyKind::Predictable => j - 1,
        FamilyKind::Constant => 0,
    };
    // I_1(1_j)^2 = I_2(1_j) + h
    let square = linearize_product(&[1, 1])?;
    let (mut i1, mut i2, mut i3, mut i4) = (Kahan::new(), Kahan::new(), Kahan::new(), Kahan::new());
    for j in 1..=n {
        let d = dw[j - 1];
        let aj = a[j - 1];
        let ov_self = fam.overlap(n, j, j);
        i1.add(2.0 * aj * aj * eval_linearization(&square, d, h)?);
        let s = prefix[reach(j)];
        if fam.kind != FamilyKind::Constant {
            i2.add(d1[j - 1] * eval_multiple_integral(2, d, h)? * s);
        }
        i3.add(-d1[j - 1] * ov_self * aj * d);
        i4.add(-nf * d2[j - 1] * ov_self * d * h * s);
    }
    Ok(FirstProjection {
        i1: i1.value(),
        i2: i2.value(),
        i3: i3.value(),
        i4: i4.value(),
    })
}

/// Un-scaled quasi-tangent `D_{u_n} M_n - G_∞`.
pub fn qtan_diagnostic(fam: &WeightFamily, grid: &WienerGrid) -> Result<f64> {
    Ok(first_projection(fam, grid)?.total() - fam.g_infinity(grid))
}
