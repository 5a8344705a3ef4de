//! Limit curves for the front lead and the mean.
//!
//! `q` solves the delay equation
//!
//! ```text
//! q(t) = e^t                     0 <= t < 1
//! q(t) = integral_{t-1}^t q(u) du    t >= 1
//! ```
//!
//! and `m(t) = 1 + integral_0^{t-1} q` for `t >= 1` (zero before). Both jump
//! at `t = 1`; grids store the right limit there.
//!
//! The same functions arise from a renewal process with Uniform(0,1) gaps:
//! `q = U'` and `m(t) = 1 + U(t-1)` where `U(t)` is the mean renewal count.
//! [`renewal_oracle`] estimates them by Monte Carlo as an independent check
//! on the quadrature.

use std::io::Write;

use rand::Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::rng::{seed_for_replicate, stream};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RenewalError {
    #[error("grid step {0} does not divide 1")]
    InvalidGrid(f64),
    #[error("t_max must be at least 1, got {0}")]
    InvalidHorizon(f64),
    #[error("t = {t} outside the solved range [0, {t_max}]")]
    OutOfRange { t: f64, t_max: f64 },
}

/// `q` and `m` on the uniform grid `t_i = i h`, `i = 0 ..= t_max / h`.
#[derive(Debug, Clone, PartialEq)]
pub struct TheoryCurves {
    h: f64,
    steps_per_unit: usize,
    q: Vec<f64>,
    m: Vec<f64>,
}

impl TheoryCurves {
    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn t_max(&self) -> f64 {
        (self.q.len() - 1) as f64 * self.h
    }

    pub fn len(&self) -> usize {
        self.q.len()
    }

    pub fn is_empty(&self) -> bool {
        self.q.is_empty()
    }

    pub fn grid_time(&self, i: usize) -> f64 {
        i as f64 / self.steps_per_unit as f64
    }

    pub fn q_values(&self) -> &[f64] {
        &self.q
    }

    pub fn m_values(&self) -> &[f64] {
        &self.m
    }

    /// Value of `q` just left of the discontinuity at `t = 1`.
    pub fn q_left_limit_at_one(&self) -> f64 {
        std::f64::consts::E
    }

    /// Value of `m` just left of `t = 1`.
    pub fn m_left_limit_at_one(&self) -> f64 {
        0.0
    }

    fn interpolate(&self, values: &[f64], t: f64) -> Result<f64, RenewalError> {
        let t_max = self.t_max();
        if !(0.0..=t_max).contains(&t) {
            return Err(RenewalError::OutOfRange { t, t_max });
        }
        let x = t * self.steps_per_unit as f64;
        let i = (x.floor() as usize).min(values.len() - 1);
        if i + 1 >= values.len() {
            return Ok(values[i]);
        }
        let frac = x - i as f64;
        Ok(values[i] + frac * (values[i + 1] - values[i]))
    }

    /// `q(t)`; exact on `[0, 1)`, linear interpolation elsewhere. Right
    /// continuous at 1.
    pub fn q_at(&self, t: f64) -> Result<f64, RenewalError> {
        if (0.0..1.0).contains(&t) {
            return Ok(t.exp());
        }
        self.interpolate(&self.q, t)
    }

    /// `m(t)`; zero on `[0, 1)`, linear interpolation elsewhere.
    pub fn m_at(&self, t: f64) -> Result<f64, RenewalError> {
        if (0.0..1.0).contains(&t) {
            return Ok(0.0);
        }
        self.interpolate(&self.m, t)
    }

    /// Writes `t,q,m` rows with 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "t,q,m")?;
        for i in 0..self.q.len() {
            writeln!(out, "{:.16e},{:.16e},{:.16e}", self.grid_time(i), self.q[i], self.m[i])?;
        }
        Ok(())
    }
}

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    #[inline]
    pub(crate) fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub(crate) fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

fn steps_per_unit(h: f64) -> Result<usize, RenewalError> {
    if !(h > 0.0 && h <= 1.0) {
        return Err(RenewalError::InvalidGrid(h));
    }
    let k = (1.0 / h).round();
    if (k * h - 1.0).abs() > 1e-9 {
        return Err(RenewalError::InvalidGrid(h));
    }
    Ok(k as usize)
}

/// Marches `q` across `[0, t_max]` by the method of steps.
///
/// The part of each window `[t - 1, t]` lying in `[0, 1)` is integrated in
/// closed form (`q = e^u` there). The rest is a composite trapezoid over the
/// grid, which makes the update at the new point implicit but linear:
/// `q_i (1 - h/2) = h (q_{i-K}/2 + interior sum)` when the window sits
/// entirely beyond 1.
pub fn solve_q(h: f64, t_max: f64) -> Result<TheoryCurves, RenewalError> {
    let k = steps_per_unit(h)?;
    if !(t_max >= 1.0 && t_max.is_finite()) {
        return Err(RenewalError::InvalidHorizon(t_max));
    }
    let h = 1.0 / k as f64;
    let last = (t_max * k as f64 + 1e-9).floor() as usize;
    let mut q = Vec::with_capacity(last + 1);
    for i in 0..k.min(last + 1) {
        q.push((i as f64 * h).exp());
    }
    let e = std::f64::consts::E;
    // prefix[j] = q_0 + ... + q_{j-1}
    let mut prefix = Vec::with_capacity(last + 2);
    let mut acc = CompensatedSum::default();
    prefix.push(0.0);
    for &v in &q {
        acc.add(v);
        prefix.push(acc.value());
    }
    for i in k..=last {
        let t = i as f64 * h;
        let qi = if i == k {
            e - 1.0
        } else if i < 2 * k {
            // [t-1, 1) exactly, then trapezoid over grid K ..= i
            let exact = e - (t - 1.0).exp();
            let interior = prefix[i] - prefix[k + 1];
            (exact + h * (0.5 * q[k] + interior)) / (1.0 - 0.5 * h)
        } else {
            let interior = prefix[i] - prefix[i - k + 1];
            h * (0.5 * q[i - k] + interior) / (1.0 - 0.5 * h)
        };
        q.push(qi);
        acc.add(qi);
        prefix.push(acc.value());
    }
    let m = integrate_m(&q, k);
    Ok(TheoryCurves { h, steps_per_unit: k, q, m })
}

/// `m_i = 1 + integral_0^{t_i - 1} q` on the grid, zero before index K.
fn integrate_m(q: &[f64], k: usize) -> Vec<f64> {
    let h = 1.0 / k as f64;
    let mut m = vec![0.0; q.len()];
    // cumulative integral of q from 0 to grid index j
    let mut cum = vec![0.0; q.len().saturating_sub(k)];
    let mut acc = CompensatedSum::default();
    for (j, slot) in cum.iter_mut().enumerate() {
        if j <= k {
            *slot = (j as f64 * h).exp() - 1.0;
            if j == k {
                acc = CompensatedSum::default();
                acc.add(*slot);
            }
        } else {
            acc.add(0.5 * h * (q[j - 1] + q[j]));
            *slot = acc.value();
        }
    }
    for i in k..q.len() {
        m[i] = 1.0 + cum[i - k];
    }
    m
}

/// Solves `q` then `m` (convenience for [`solve_q`], which fills both).
pub fn solve_m(curves: &TheoryCurves) -> Vec<f64> {
    integrate_m(&curves.q, curves.steps_per_unit)
}

/// Monte Carlo estimates of `U`, `q = U'` and `m` from renewal processes with
/// Uniform(0,1) gaps, evaluated on the grid `t_k = k delta`.
#[derive(Debug, Clone)]
pub struct OracleEstimate {
    pub delta: f64,
    pub n_paths: u64,
    /// Mean renewal count and its standard error at each grid point.
    pub u_mean: Vec<f64>,
    pub u_se: Vec<f64>,
    centered: Vec<(f64, f64)>,
    forward: Vec<(f64, f64)>,
}

/// One estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub se: f64,
}

impl OracleEstimate {
    fn index(&self, t: f64) -> Option<usize> {
        let x = t / self.delta;
        let k = x.round();
        ((x - k).abs() < 1e-6 && k >= 0.0 && (k as usize) < self.u_mean.len()).then_some(k as usize)
    }

    pub fn u(&self, t: f64) -> Option<Estimate> {
        let k = self.index(t)?;
        Some(Estimate { value: self.u_mean[k], se: self.u_se[k] })
    }

    /// Estimate of the right derivative `U'(t) = q(t)`.
    ///
    /// Uses the centered difference away from integers; at integers the
    /// derivatives of `q` jump, so a one-sided second-order forward
    /// difference is used instead.
    pub fn q(&self, t: f64) -> Option<Estimate> {
        let k = self.index(t)?;
        let near_integer = (t - t.round()).abs() < 0.5 * self.delta;
        let (value, se) = if near_integer || k == 0 { self.forward[k] } else { self.centered[k] };
        value.is_finite().then_some(Estimate { value, se })
    }

    /// `m(t) = 1 + U(t - 1)` for `t >= 1`, zero before.
    pub fn m(&self, t: f64) -> Option<Estimate> {
        if t < 1.0 {
            return Some(Estimate { value: 0.0, se: 0.0 });
        }
        let u = self.u(t - 1.0)?;
        Some(Estimate { value: 1.0 + u.value, se: u.se })
    }
}

const ORACLE_BLOCK: u64 = 4096;

/// Simulates `n_paths` renewal processes with Uniform(0,1) gaps up to
/// `t_max + 2 delta` and estimates `U`, `q`, `m` on the `delta` grid.
///
/// Paths are processed in fixed blocks, each with its own derived stream,
/// and block results are combined in index order, so the estimate does not
/// depend on the number of threads.
pub fn renewal_oracle(t_max: f64, delta: f64, n_paths: u64, seed: u64) -> OracleEstimate {
    assert!(n_paths >= 1, "renewal_oracle needs at least one path");
    assert!(delta > 0.0 && t_max >= 0.0);
    let points = (t_max / delta).round() as usize + 3;
    let horizon = (points - 1) as f64 * delta;
    let blocks = n_paths.div_ceil(ORACLE_BLOCK);

    struct Acc {
        u: Vec<f64>,
        u2: Vec<f64>,
        c: Vec<f64>,
        c2: Vec<f64>,
        f: Vec<f64>,
        f2: Vec<f64>,
    }
    let zero = || Acc {
        u: vec![0.0; points],
        u2: vec![0.0; points],
        c: vec![0.0; points],
        c2: vec![0.0; points],
        f: vec![0.0; points],
        f2: vec![0.0; points],
    };

    let partials: Vec<Acc> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut rng = stream(seed_for_replicate(seed, b));
            let mut acc = zero();
            let mut counts = vec![0u32; points];
            let start = b * ORACLE_BLOCK;
            let end = (start + ORACLE_BLOCK).min(n_paths);
            for _ in start..end {
                counts.iter_mut().for_each(|c| *c = 0);
                // renewal epochs bucketed by the first grid point at or after them
                let mut t = 0.0;
                loop {
                    t += rng.random::<f64>();
                    if t > horizon {
                        break;
                    }
                    let k = (t / delta).ceil() as usize;
                    counts[k.min(points - 1)] += 1;
                }
                let mut running = 0u32;
                for c in counts.iter_mut() {
                    running += *c;
                    *c = running;
                }
                for k in 0..points {
                    let n = counts[k] as f64;
                    acc.u[k] += n;
                    acc.u2[k] += n * n;
                    if k >= 1 && k + 1 < points {
                        let d = (counts[k + 1] as f64 - counts[k - 1] as f64) / (2.0 * delta);
                        acc.c[k] += d;
                        acc.c2[k] += d * d;
                    }
                    if k + 2 < points {
                        let d = (-3.0 * n + 4.0 * counts[k + 1] as f64 - counts[k + 2] as f64) / (2.0 * delta);
                        acc.f[k] += d;
                        acc.f2[k] += d * d;
                    }
                }
            }
            acc
        })
        .collect();

    let mut total = zero();
    for p in &partials {
        for k in 0..points {
            total.u[k] += p.u[k];
            total.u2[k] += p.u2[k];
            total.c[k] += p.c[k];
            total.c2[k] += p.c2[k];
            total.f[k] += p.f[k];
            total.f2[k] += p.f2[k];
        }
    }
    let n = n_paths as f64;
    let mean_se = |sum: f64, sum2: f64| {
        let mean = sum / n;
        let var = if n > 1.0 { ((sum2 - n * mean * mean) / (n - 1.0)).max(0.0) } else { 0.0 };
        (mean, (var / n).sqrt())
    };
    let mut u_mean = Vec::with_capacity(points);
    let mut u_se = Vec::with_capacity(points);
    let mut centered = Vec::with_capacity(points);
    let mut forward = Vec::with_capacity(points);
    for k in 0..points {
        let (m, se) = mean_se(total.u[k], total.u2[k]);
        u_mean.push(m);
        u_se.push(se);
        centered.push(if k >= 1 && k + 1 < points { mean_se(total.c[k], total.c2[k]) } else { (f64::NAN, f64::NAN) });
        forward.push(if k + 2 < points { mean_se(total.f[k], total.f2[k]) } else { (f64::NAN, f64::NAN) });
    }
    OracleEstimate { delta, n_paths, u_mean, u_se, centered, forward }
}
