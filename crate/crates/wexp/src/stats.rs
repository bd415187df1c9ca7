//! Small statistical helpers: compensated sums, sample moments, the
//! Kolmogorov-Smirnov statistic against a normal law and weighted
//! least-squares slopes.

use libm::erfc;

/// Kahan-compensated running sum. Results depend only on the order in which
/// values are added.
#[derive(Debug, Clone, Copy, Default)]
pub struct Kahan {
    sum: f64,
    comp: f64,
}

impl Kahan {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let y = x - self.comp;
        let t = self.sum + y;
        self.comp = (t - self.sum) - y;
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum
    }
}

pub fn kahan_sum<I: IntoIterator<Item = f64>>(it: I) -> f64 {
    let mut k = Kahan::new();
    for x in it {
        k.add(x);
    }
    k.value()
}

/// Sample mean, unbiased variance and the standard error of the mean.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub count: usize,
    pub mean: f64,
    pub var: f64,
    pub se: f64,
}

pub fn summarize(xs: &[f64]) -> Summary {
    let count = xs.len();
    if count == 0 {
        return Summary {
            count,
            mean: f64::NAN,
            var: f64::NAN,
            se: f64::NAN,
        };
    }
    let mean = kahan_sum(xs.iter().copied()) / count as f64;
    let var = if count > 1 {
        kahan_sum(xs.iter().map(|x| (x - mean) * (x - mean))) / (count - 1) as f64
    } else {
        0.0
    };
    Summary {
        count,
        mean,
        var,
        se: (var / count as f64).sqrt(),
    }
}

/// Sample covariance of two equally long samples.
pub fn covariance(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len();
    if n < 2 {
        return 0.0;
    }
    let mx = kahan_sum(xs.iter().copied()) / n as f64;
    let my = kahan_sum(ys.iter().copied()) / n as f64;
    kahan_sum(xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my))) / (n - 1) as f64
}

/// Standard normal distribution function.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Standard normal density.
pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Kolmogorov-Smirnov distance between the empirical law of `xs` and
/// `N(mean, sd²)`.
pub fn ks_normal(xs: &[f64], mean: f64, sd: f64) -> f64 {
    let mut v: Vec<f64> = xs.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len() as f64;
    let mut d: f64 = 0.0;
    for (i, x) in v.iter().enumerate() {
        let f = normal_cdf((x - mean) / sd);
        let lo = i as f64 / n;
        let hi = (i + 1) as f64 / n;
        d = d.max((f - lo).abs()).max((hi - f).abs());
    }
    d
}

/// Asymptotic p-value of the one-sample KS statistic `d` with `n` points,
/// using Stephens' small-sample correction of the Kolmogorov series.
pub fn ks_pvalue(d: f64, n: usize) -> f64 {
    let sn = (n as f64).sqrt();
    let lambda = (sn + 0.12 + 0.11 / sn) * d;
    if lambda < 0.2 {
        return 1.0;
    }
    let mut p = 0.0;
    for k in 1..=100 {
        let k = k as f64;
        let term = 2.0 * (-1f64).powf(k - 1.0) * (-2.0 * k * k * lambda * lambda).exp();
        p += term;
        if term.abs() < 1e-16 {
            break;
        }
    }
    p.clamp(0.0, 1.0)
}

/// Weighted least-squares line `y ≈ intercept + slope·x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    /// Standard error of the slope implied by the weights (weights are
    /// inverse variances of the `y` values).
    pub slope_se: f64,
}

pub fn weighted_line(x: &[f64], y: &[f64], w: &[f64]) -> LineFit {
    assert!(x.len() == y.len() && y.len() == w.len());
    let sw = kahan_sum(w.iter().copied());
    let mx = kahan_sum(x.iter().zip(w).map(|(a, b)| a * b)) / sw;
    let my = kahan_sum(y.iter().zip(w).map(|(a, b)| a * b)) / sw;
    let sxx = kahan_sum(x.iter().zip(w).map(|(a, b)| b * (a - mx) * (a - mx)));
    let sxy = kahan_sum(
        x.iter()
            .zip(y)
            .zip(w)
            .map(|((a, c), b)| b * (a - mx) * (c - my)),
    );
    let slope = sxy / sxx;
    LineFit {
        slope,
        intercept: my - slope * mx,
        slope_se: (1.0 / sxx).sqrt(),
    }
}
