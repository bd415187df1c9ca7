//! Composite trapezoid rules on uniform grids.

use crate::stats::Kahan;

/// `∫_0^1 f` from `f` sampled at `k·dt`, `k = 0..=N`.
pub fn trapezoid(values: &[f64], dt: f64) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let mut k = Kahan::new();
    k.add(0.5 * values[0]);
    for v in &values[1..n - 1] {
        k.add(*v);
    }
    k.add(0.5 * values[n - 1]);
    k.value() * dt
}

/// Running integrals `C_k = ∫_0^{k·dt} f`, with `C_0 = 0`.
pub fn cumulative(values: &[f64], dt: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(values.len());
    out.push(0.0);
    let mut acc = Kahan::new();
    for w in values.windows(2) {
        acc.add(0.5 * (w[0] + w[1]) * dt);
        out.push(acc.value());
    }
    out
}

/// Reverse running integrals `T_k = ∫_{k·dt}^{1} f`, with `T_N = 0`.
pub fn tail(values: &[f64], dt: f64) -> Vec<f64> {
    let n = values.len();
    let mut out = vec![0.0; n];
    let mut acc = Kahan::new();
    for k in (0..n.saturating_sub(1)).rev() {
        acc.add(0.5 * (values[k] + values[k + 1]) * dt);
        out[k] = acc.value();
    }
    out
}

/// Index of the grid node nearest to `t ∈ [0,1]` on a grid of `n_cells`
/// cells. Exact when `t` is a node.
pub fn node_of(t: f64, n_cells: usize) -> usize {
    ((t * n_cells as f64).round() as usize).min(n_cells)
}

/// `∫_a^b f` for `0 ≤ a ≤ b ≤ 1` with linear interpolation of `f` inside
/// partially covered cells.
pub fn integrate_between(values: &[f64], dt: f64, a: f64, b: f64) -> f64 {
    let cells = values.len() - 1;
    if b <= a {
        return 0.0;
    }
    let lerp = |t: f64| {
        let x = (t / dt).clamp(0.0, cells as f64);
        let k = (x.floor() as usize).min(cells - 1);
        let frac = x - k as f64;
        values[k] * (1.0 - frac) + values[k + 1] * frac
    };
    let ka = ((a / dt).ceil() as usize).min(cells);
    let kb = ((b / dt).floor() as usize).min(cells);
    if ka > kb {
        return 0.5 * (lerp(a) + lerp(b)) * (b - a);
    }
    let mut acc = Kahan::new();
    let ta = ka as f64 * dt;
    acc.add(0.5 * (lerp(a) + values[ka]) * (ta - a));
    for k in ka..kb {
        acc.add(0.5 * (values[k] + values[k + 1]) * dt);
    }
    let tb = kb as f64 * dt;
    acc.add(0.5 * (values[kb] + lerp(b)) * (b - tb));
    acc.value()
}

/// Antiderivative `F(t) = ∫_0^t f` of the piecewise linear interpolant of
/// node values, evaluated in O(1) after an O(N) setup.
#[derive(Debug, Clone)]
pub struct Antiderivative {
    values: Vec<f64>,
    cum: Vec<f64>,
    dt: f64,
}

impl Antiderivative {
    pub fn new(values: &[f64], dt: f64) -> Self {
        Self {
            values: values.to_vec(),
            cum: cumulative(values, dt),
            dt,
        }
    }

    pub fn at(&self, t: f64) -> f64 {
        let cells = self.values.len() - 1;
        let x = (t / self.dt).clamp(0.0, cells as f64);
        let k = (x.floor() as usize).min(cells - 1);
        let frac = x - k as f64;
        let v = self.values[k] * (1.0 - frac) + self.values[k + 1] * frac;
        self.cum[k] + 0.5 * (self.values[k] + v) * frac * self.dt
    }

    /// `∫_a^b f`.
    pub fn between(&self, a: f64, b: f64) -> f64 {
        self.at(b) - self.at(a)
    }

    pub fn total(&self) -> f64 {
        *self.cum.last().unwrap_or(&0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn antiderivative_matches_integrate_between() {
        let dt = 1.0 / 40.0;
        let v: Vec<f64> = (0..=40)
            .map(|k| (3.0 * k as f64 * dt).sin() + 2.0)
            .collect();
        let f = Antiderivative::new(&v, dt);
        for &(a, b) in &[
            (0.0, 1.0),
            (0.013, 0.77),
            (0.3, 0.31),
            (0.5, 0.5),
            (0.25, 0.75),
        ] {
            let d = f.between(a, b) - integrate_between(&v, dt, a, b);
            assert!(d.abs() < 1e-13, "({a},{b}): {d}");
        }
        assert!((f.total() - trapezoid(&v, dt)).abs() < 1e-13);
    }

    #[test]
    fn linear_is_exact() {
        let dt = 0.125;
        let v: Vec<f64> = (0..=8).map(|k| 2.0 + 3.0 * k as f64 * dt).collect();
        assert!((trapezoid(&v, dt) - 3.5).abs() < 1e-14);
        let c = cumulative(&v, dt);
        let t = tail(&v, dt);
        for k in 0..=8 {
            let x = k as f64 * dt;
            assert!((c[k] - (2.0 * x + 1.5 * x * x)).abs() < 1e-14);
            assert!((c[k] + t[k] - 3.5).abs() < 1e-14);
        }
        let part = integrate_between(&v, dt, 0.1, 0.93);
        let f = |x: f64| 2.0 * x + 1.5 * x * x;
        assert!((part - (f(0.93) - f(0.1))).abs() < 1e-13);
        let inside = integrate_between(&v, dt, 0.13, 0.2);
        assert!((inside - (f(0.2) - f(0.13))).abs() < 1e-13);
    }

    #[test]
    fn quadratic_converges_at_second_order() {
        let err = |n: usize| {
            let dt = 1.0 / n as f64;
            let v: Vec<f64> = (0..=n).map(|k| (k as f64 * dt).powi(2)).collect();
            (trapezoid(&v, dt) - 1.0 / 3.0).abs()
        };
        let ratio = err(64) / err(128);
        assert!((ratio - 4.0).abs() < 1e-6);
    }
}
