//! Small statistical helpers for the comparison suites.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Mean with its standard error and sample size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanSe {
    pub n: usize,
    pub mean: f64,
    pub se: f64,
}

pub fn mean_se(xs: &[f64]) -> MeanSe {
    let n = xs.len();
    if n == 0 {
        return MeanSe { n, mean: f64::NAN, se: f64::NAN };
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    let se = if n > 1 {
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        (var / n as f64).sqrt()
    } else {
        f64::NAN
    };
    MeanSe { n, mean, se }
}

/// Linear-interpolated sample quantile (type 7).
pub fn quantile(xs: &[f64], p: f64) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let h = (v.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    v[lo] + (h - lo as f64) * (v[hi] - v[lo])
}

/// Median, quartiles and mean/SE of a sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub n: usize,
    pub median: f64,
    pub q25: f64,
    pub q75: f64,
    pub mean: f64,
    pub se: f64,
}

impl Summary {
    pub fn of(xs: &[f64]) -> Self {
        let m = mean_se(xs);
        Self {
            n: xs.len(),
            median: quantile(xs, 0.5),
            q25: quantile(xs, 0.25),
            q75: quantile(xs, 0.75),
            mean: m.mean,
            se: m.se,
        }
    }

    pub fn iqr(&self) -> f64 {
        self.q75 - self.q25
    }
}

/// Proportion of successes with its binomial standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Proportion {
    pub n: usize,
    pub successes: usize,
    pub fraction: f64,
    pub se: f64,
}

impl Proportion {
    /// `None` for an empty sample.
    pub fn new(successes: usize, n: usize) -> Option<Self> {
        if n == 0 {
            return None;
        }
        let p = successes as f64 / n as f64;
        Some(Self { n, successes, fraction: p, se: (p * (1.0 - p) / n as f64).sqrt() })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChiSquareResult {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
    /// Categories after pooling sparse ones.
    pub categories: usize,
}

/// Two-sample chi-square test of homogeneity over shared categories.
///
/// Categories whose combined count is below `min_pooled` are merged into a
/// single residual category before testing.
pub fn chi_square_homogeneity(a: &[u64], b: &[u64], min_pooled: u64) -> ChiSquareResult {
    assert_eq!(a.len(), b.len());
    let mut cells: Vec<(f64, f64)> = Vec::new();
    let (mut ra, mut rb) = (0u64, 0u64);
    for (&x, &y) in a.iter().zip(b) {
        if x + y >= min_pooled {
            cells.push((x as f64, y as f64));
        } else {
            ra += x;
            rb += y;
        }
    }
    if ra + rb > 0 {
        cells.push((ra as f64, rb as f64));
    }
    let na: f64 = cells.iter().map(|c| c.0).sum();
    let nb: f64 = cells.iter().map(|c| c.1).sum();
    let total = na + nb;
    let mut stat = 0.0;
    for &(x, y) in &cells {
        let col = x + y;
        let ea = na * col / total;
        let eb = nb * col / total;
        if ea > 0.0 {
            stat += (x - ea).powi(2) / ea;
        }
        if eb > 0.0 {
            stat += (y - eb).powi(2) / eb;
        }
    }
    let dof = cells.len().saturating_sub(1);
    let p_value = if dof == 0 { 1.0 } else { ChiSquared::new(dof as f64).map(|d| d.sf(stat)).unwrap_or(f64::NAN) };
    ChiSquareResult { statistic: stat, dof, p_value, categories: cells.len() }
}

/// Weighted least-squares fit of `y = c0 + c1 x + c2 x^2`.
/// Returns `None` if fewer than three distinct abscissae carry weight.
pub fn fit_quadratic(points: &[(f64, f64, f64)]) -> Option<[f64; 3]> {
    // normal equations, solved by Gaussian elimination with partial pivoting
    let mut a = [[0.0f64; 4]; 3];
    for &(x, y, w) in points {
        let basis = [1.0, x, x * x];
        for r in 0..3 {
            for c in 0..3 {
                a[r][c] += w * basis[r] * basis[c];
            }
            a[r][3] += w * basis[r] * y;
        }
    }
    let mut distinct: Vec<f64> = points.iter().filter(|p| p.2 > 0.0).map(|p| p.0).collect();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() < 3 {
        return None;
    }
    for col in 0..3 {
        let piv = (col..3).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        a.swap(col, piv);
        if a[col][col].abs() < 1e-300 {
            return None;
        }
        for r in 0..3 {
            if r != col {
                let f = a[r][col] / a[col][col];
                let pivot_row = a[col];
                for (x, p) in a[r].iter_mut().zip(pivot_row).skip(col) {
                    *x -= f * p;
                }
            }
        }
    }
    Some([a[0][3] / a[0][0], a[1][3] / a[1][1], a[2][3] / a[2][2]])
}

/// Ordinary least-squares line `y = intercept + slope x` with the slope's SE.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    pub n: usize,
    pub intercept: f64,
    pub slope: f64,
    pub slope_se: f64,
}

pub fn fit_line(points: &[(f64, f64)]) -> Option<LineFit> {
    let n = points.len();
    if n < 3 {
        return None;
    }
    let nf = n as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / nf;
    let my = points.iter().map(|p| p.1).sum::<f64>() / nf;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx <= 0.0 {
        return None;
    }
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = points.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
    let slope_se = (rss / (nf - 2.0) / sxx).sqrt();
    Some(LineFit { n, intercept, slope, slope_se })
}
