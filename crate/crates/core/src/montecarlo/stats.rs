use serde::Serialize;

use crate::error::{Error, Result};

/// 97.5% standard normal quantile.
const Z975: f64 = 1.959_963_984_540_054;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McEstimate {
    pub estimate: f64,
    pub n: usize,
    /// Half-width of the 95% normal confidence interval.
    pub half_width: f64,
    pub ess: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub acceptance_rate: Option<f64>,
}

impl McEstimate {
    /// Plain sample mean.
    pub fn mean_of(values: impl Iterator<Item = f64>) -> Result<Self> {
        let (mut n, mut mean, mut m2) = (0usize, 0.0, 0.0);
        for v in values {
            n += 1;
            let d = v - mean;
            mean += d / n as f64;
            m2 += d * (v - mean);
        }
        if n < 2 {
            return Err(Error::Estimator(format!("need at least two samples, got {n}")));
        }
        let var = m2 / (n - 1) as f64;
        Ok(Self { estimate: mean, n, half_width: Z975 * (var / n as f64).sqrt(), ess: n as f64, acceptance_rate: None })
    }

    pub fn contains(&self, target: f64, widths: f64) -> bool {
        (self.estimate - target).abs() <= widths * self.half_width
    }
}

/// Draws with optional importance weights.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedSample {
    pub values: Vec<f64>,
    pub weights: Option<Vec<f64>>,
}

impl WeightedSample {
    pub fn unweighted(values: Vec<f64>) -> Self {
        Self { values, weights: None }
    }

    pub fn weighted(values: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if values.len() != weights.len() {
            return Err(Error::Estimator("values and weights differ in length".into()));
        }
        if weights.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
            return Err(Error::Estimator("weights must be finite and nonnegative".into()));
        }
        Ok(Self { values, weights: Some(weights) })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Kish effective sample size.
    pub fn ess(&self) -> f64 {
        match &self.weights {
            None => self.values.len() as f64,
            Some(w) => {
                let s: f64 = w.iter().sum();
                let s2: f64 = w.iter().map(|x| x * x).sum();
                if s2 > 0.0 {
                    s * s / s2
                } else {
                    0.0
                }
            }
        }
    }

    /// `E[g(Z)]`, self-normalized when weighted, with a delta-method half-width.
    pub fn expect<G: Fn(f64) -> f64>(&self, g: G) -> Result<McEstimate> {
        let Some(w) = &self.weights else {
            return McEstimate::mean_of(self.values.iter().map(|&z| g(z)));
        };
        let n = self.values.len();
        let sw: f64 = w.iter().sum();
        if !(sw > 0.0) {
            return Err(Error::Estimator("all importance weights vanish".into()));
        }
        let est = self.values.iter().zip(w).map(|(&z, &wi)| wi * g(z)).sum::<f64>() / sw;
        let var = self.values.iter().zip(w).map(|(&z, &wi)| (wi * (g(z) - est)).powi(2)).sum::<f64>() / (sw * sw);
        Ok(McEstimate { estimate: est, n, half_width: Z975 * var.sqrt(), ess: self.ess(), acceptance_rate: None })
    }

    pub fn laplace(&self, lambda: f64) -> Result<McEstimate> {
        self.expect(|z| (-lambda * z).exp())
    }

    pub fn mean(&self) -> Result<McEstimate> {
        self.expect(|z| z)
    }

    /// Kolmogorov–Smirnov distance to a continuous CDF.
    pub fn ks(&self, cdf: impl Fn(f64) -> f64) -> f64 {
        match &self.weights {
            None => ks_one_sample(&self.values, cdf),
            Some(w) => ks_weighted(&self.values, w, cdf),
        }
    }

    /// `(x, F_n(x))` at `points` evenly spaced empirical quantiles.
    pub fn ecdf(&self, points: usize) -> Vec<(f64, f64)> {
        let mut idx: Vec<usize> = (0..self.values.len()).collect();
        idx.sort_by(|&a, &b| self.values[a].total_cmp(&self.values[b]));
        let w = |i: usize| self.weights.as_ref().map_or(1.0, |w| w[i]);
        let total: f64 = idx.iter().map(|&i| w(i)).sum();
        let n = idx.len();
        let mut out = Vec::with_capacity(points);
        let mut cum = 0.0;
        let mut next = 1;
        for (rank, &i) in idx.iter().enumerate() {
            cum += w(i);
            if points > 0 && (rank + 1) * points >= next * n {
                out.push((self.values[i], cum / total));
                next += 1;
            }
        }
        out
    }
}

/// `sup |F_n - F|` for unweighted draws.
pub fn ks_one_sample(values: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    v.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            ((i + 1) as f64 / n - f).max(f - i as f64 / n)
        })
        .fold(0.0, f64::max)
}

/// `sup |F_w - F|` for the self-normalized weighted empirical CDF.
pub fn ks_weighted(values: &[f64], weights: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let total: f64 = weights.iter().sum();
    let mut cum = 0.0;
    let mut d: f64 = 0.0;
    for &i in &idx {
        let f = cdf(values[i]);
        d = d.max(f - cum / total);
        cum += weights[i];
        d = d.max(cum / total - f);
    }
    d
}

/// Two-sample Kolmogorov–Smirnov distance.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}
