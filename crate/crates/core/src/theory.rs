//! Closed-form scales and predictions derived from `(N, mu, s)`.

use serde::{Deserialize, Serialize};

use crate::model::{ModelError, ModelParams};

/// Asymptotic-assumption diagnostics at finite `N`.
///
/// A1 should be large, A2 and A3 small; the flags only record which side of
/// one each ratio falls on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AssumptionRatios {
    /// `ln N / (ln(s/mu) ln(1/s))`.
    pub a1: f64,
    /// `ln N / ln(s/mu)^2 * ln(ln N / ln(s/mu))`.
    pub a2: f64,
    /// `s ln N / ln(s/mu)`.
    pub a3: f64,
}

impl AssumptionRatios {
    pub fn a1_large(&self) -> bool {
        self.a1 > 1.0
    }

    pub fn a2_small(&self) -> bool {
        self.a2 < 1.0
    }

    pub fn a3_small(&self) -> bool {
        self.a3 < 1.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scales {
    /// Time scale `a_N = ln(s/mu) / s`.
    pub a_n: f64,
    /// Type scale `k_N = ln N / ln(s/mu)`.
    pub k_n: f64,
    pub k_n_minus: f64,
    pub k_n_plus: f64,
    /// Largest integer strictly below `k_N^+` (at least 0).
    pub k_star: u32,
    pub t_star: f64,
    pub assumptions: AssumptionRatios,
}

pub fn scales(params: &ModelParams) -> Result<Scales, ModelError> {
    let (n, mu, s) = (params.n() as f64, params.mu(), params.s());
    if !(mu > 0.0 && mu < s) {
        return Err(ModelError::InvalidParams(format!("scales need 0 < mu < s, got mu = {mu}, s = {s}")));
    }
    let log_ratio = (s / mu).ln();
    let log_n = n.ln();
    let k_n = log_n / log_ratio;
    let spread = log_n / (log_ratio * log_ratio) * k_n.ln();
    let k_n_minus = k_n - spread;
    let k_n_plus = k_n + 2.0 * spread;
    let k_star = (k_n_plus.ceil() - 1.0).max(0.0) as u32;
    let lowest_above_minus = k_n_minus.floor() + 1.0;
    let t_star = if lowest_above_minus < k_n_plus { 4.0 / s * k_n.ln() } else { 2.0 / s * k_n.ln() };
    Ok(Scales {
        a_n: log_ratio / s,
        k_n,
        k_n_minus,
        k_n_plus,
        k_star,
        t_star,
        assumptions: AssumptionRatios {
            a1: log_n / (log_ratio * (1.0 / s).ln()),
            a2: spread,
            a3: s * log_n / log_ratio,
        },
    })
}

/// `ln j!` as a sum of logarithms (exact to rounding for the small `j` used here).
pub fn ln_factorial(j: u32) -> f64 {
    (2..=j).map(|k| (k as f64).ln()).sum()
}

/// Early-phase mean profile `x_j(t) = N mu^j (e^{st} - 1)^j / (s^j j!)`,
/// evaluated in log space.
pub fn early_curve(j: u32, t: f64, params: &ModelParams) -> f64 {
    let n = params.n() as f64;
    if j == 0 {
        return n;
    }
    let growth = (params.s() * t).exp_m1();
    if growth <= 0.0 || params.mu() == 0.0 {
        return 0.0;
    }
    let jf = j as f64;
    (n.ln() + jf * (params.mu().ln() + growth.ln() - params.s().ln()) - ln_factorial(j)).exp()
}

/// Earlier predictions for the wave width and speed, plus the limit speed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Predictions {
    /// Lead of the fittest type over the mean, `2 ln(N s) / ln(s/mu)`.
    pub df_width: f64,
    /// Speed `2 s ln(N s) / ln(s/mu)^2`.
    pub df_speed: f64,
    /// Speed `2 s ln(N sqrt(s mu)) / ln((s/mu) ln(N sqrt(s mu)))^2`.
    pub rbw_speed: f64,
    /// Limit speed `2 s ln N / ln(s/mu)^2`.
    pub speed: f64,
}

pub fn predictions(params: &ModelParams) -> Result<Predictions, ModelError> {
    let (n, mu, s) = (params.n() as f64, params.mu(), params.s());
    if !(mu > 0.0 && mu < s) {
        return Err(ModelError::InvalidParams(format!("predictions need 0 < mu < s, got mu = {mu}, s = {s}")));
    }
    let log_ratio = (s / mu).ln();
    let log_ns = (n * s).ln();
    let log_geo = (n * (s * mu).sqrt()).ln();
    Ok(Predictions {
        df_width: 2.0 * log_ns / log_ratio,
        df_speed: 2.0 * s * log_ns / (log_ratio * log_ratio),
        rbw_speed: 2.0 * s * log_geo / ((s / mu) * log_geo).ln().powi(2),
        speed: 2.0 * s * n.ln() / (log_ratio * log_ratio),
    })
}

/// Variance of the fitness profile at scaled time `t`, given `q(t - 1)`:
/// `q(t-1) ln N / ln(s/mu)^2`.
pub fn sigma_sq(q_tm1: f64, params: &ModelParams) -> f64 {
    let log_ratio = (params.s() / params.mu()).ln();
    q_tm1 * (params.n() as f64).ln() / (log_ratio * log_ratio)
}

/// Heuristic spacing between successive establishment times, `a_N / Q`.
pub fn tau_gap(scales: &Scales, front_lead: f64) -> f64 {
    scales.a_n / front_lead
}

/// Predicted `ln(X_{j(t)+ell} / X_{j(t)})`:
/// `-ln(s/mu)^2 (ell^2 - 2 ell d) / (2 q(t-1) ln N)`.
pub fn gauss_log_ratio(ell: i64, d: f64, q_tm1: f64, params: &ModelParams) -> f64 {
    let log_ratio = (params.s() / params.mu()).ln();
    let l = ell as f64;
    -(log_ratio * log_ratio) * (l * l - 2.0 * l * d) / (2.0 * q_tm1 * (params.n() as f64).ln())
}

/// Predicted `ell^2` coefficient of `ln X_{j(t)+ell}`.
pub fn predicted_curvature(q_tm1: f64, params: &ModelParams) -> f64 {
    gauss_log_ratio(1, 0.0, q_tm1, params)
}
