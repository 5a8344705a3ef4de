//! Statistical comparisons of ensembles against the limit theory.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{Snapshot, TauRecord, Trajectory};
use crate::model::ModelParams;
use crate::observables::{self, ObservableError};
use crate::renewal::{RenewalError, TheoryCurves};
use crate::stats::{self, ChiSquareResult, LineFit, MeanSe, Proportion, Summary};
use crate::theory::{self, Scales};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CompareError {
    #[error("no snapshot at time {0}")]
    MissingSnapshot(f64),
    #[error(transparent)]
    Curves(#[from] RenewalError),
    #[error(transparent)]
    Observable(#[from] ObservableError),
    #[error("empty ensemble")]
    Empty,
}

/// Distribution over replicates of a per-replicate sup-norm deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupNormStatistic {
    pub probes: Vec<f64>,
    pub per_replicate: Vec<f64>,
    pub summary: Summary,
}

fn snapshot_at(traj: &Trajectory, time: f64) -> Result<&Snapshot, CompareError> {
    traj.snapshot_at(time).ok_or(CompareError::MissingSnapshot(time))
}

fn sup_norm_statistic<'a>(
    trajs: impl IntoIterator<Item = &'a Trajectory>,
    scales: &Scales,
    probes: &[f64],
    observed: impl Fn(&Snapshot) -> f64,
    limit: impl Fn(f64) -> Result<f64, RenewalError>,
) -> Result<SupNormStatistic, CompareError> {
    let limits = probes.iter().map(|&t| limit(t)).collect::<Result<Vec<_>, _>>()?;
    let mut per_replicate = Vec::new();
    for traj in trajs {
        let mut sup = 0.0f64;
        for (&t, &lim) in probes.iter().zip(&limits) {
            let snap = snapshot_at(traj, scales.a_n * t)?;
            sup = sup.max((observed(snap) / scales.k_n - lim).abs());
        }
        per_replicate.push(sup);
    }
    if per_replicate.is_empty() {
        return Err(CompareError::Empty);
    }
    Ok(SupNormStatistic { probes: probes.to_vec(), summary: Summary::of(&per_replicate), per_replicate })
}

/// Per replicate `sup_{t in probes} |Q(a_N t) / k_N - q(t)|`.
pub fn compare_theorem1<'a>(
    trajs: impl IntoIterator<Item = &'a Trajectory>,
    scales: &Scales,
    curves: &TheoryCurves,
    probes: &[f64],
) -> Result<SupNormStatistic, CompareError> {
    sup_norm_statistic(trajs, scales, probes, Snapshot::front_lead, |t| curves.q_at(t))
}

/// Per replicate `sup_{t in probes} |M(a_N t) / k_N - m(t)|`.
pub fn compare_theorem2<'a>(
    trajs: impl IntoIterator<Item = &'a Trajectory>,
    scales: &Scales,
    curves: &TheoryCurves,
    probes: &[f64],
) -> Result<SupNormStatistic, CompareError> {
    sup_norm_statistic(trajs, scales, probes, Snapshot::mean, |t| curves.m_at(t))
}

/// Quadratic fit `ln X_{j+l} ~ c0 + c1 l + c2 l^2`, weighted by `X_{j+l}`.
pub fn fit_log_profile(points: &[(i64, f64)]) -> Option<[f64; 3]> {
    let pts: Vec<(f64, f64, f64)> = points.iter().filter(|p| p.1 > 0.0).map(|&(l, x)| (l as f64, x.ln(), x)).collect();
    stats::fit_quadratic(&pts)
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProfileError {
    #[error("j(t) undefined at scaled time {0}")]
    NoIndex(f64),
    #[error("only {0} usable types, need 3")]
    TooFewTypes(usize),
    #[error(transparent)]
    Compare(#[from] CompareError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileFit {
    pub j: u32,
    pub d: Option<f64>,
    pub ells: Vec<i64>,
    pub counts: Vec<u64>,
    pub intercept: f64,
    pub slope: f64,
    pub curvature: f64,
    pub predicted_curvature: f64,
    /// `ln(s/mu)^2 d / (q ln N)`, when `d(t)` is defined.
    pub predicted_slope: Option<f64>,
    /// `ln(X_{j+l} / X_j)` minus the predicted log ratio, per entry of `ells`.
    pub residuals: Option<Vec<f64>>,
}

/// Fits the profile of `snap` around type `j`, using types with at least
/// `min_count` individuals and `|l| <= ell_max`.
pub fn fit_profile(
    snap: &Snapshot,
    j: u32,
    d: Option<f64>,
    q_tm1: f64,
    params: &ModelParams,
    ell_max: Option<u32>,
    min_count: u64,
) -> Result<ProfileFit, ProfileError> {
    let (ells, counts): (Vec<i64>, Vec<u64>) = (snap.j_min..=snap.j_max())
        .map(|k| (k as i64 - j as i64, snap.count(k)))
        .filter(|&(l, c)| c >= min_count && ell_max.is_none_or(|m| l.unsigned_abs() <= m as u64))
        .unzip();
    if ells.len() < 3 {
        return Err(ProfileError::TooFewTypes(ells.len()));
    }
    let points: Vec<(i64, f64)> = ells.iter().zip(&counts).map(|(&l, &c)| (l, c as f64)).collect();
    let [intercept, slope, curvature] = fit_log_profile(&points).ok_or(ProfileError::TooFewTypes(ells.len()))?;
    let log_ratio = (params.s() / params.mu()).ln();
    let predicted_slope = d.map(|d| log_ratio * log_ratio * d / (q_tm1 * (params.n() as f64).ln()));
    let x_j = snap.count(j);
    let residuals = match (d, x_j > 0) {
        (Some(d), true) => Some(
            ells.iter()
                .zip(&counts)
                .map(|(&l, &c)| {
                    let observed = if l == 0 { 0.0 } else { (c as f64 / x_j as f64).ln() };
                    observed - theory::gauss_log_ratio(l, d, q_tm1, params)
                })
                .collect(),
        ),
        _ => None,
    };
    Ok(ProfileFit {
        j,
        d,
        ells,
        counts,
        intercept,
        slope,
        curvature,
        predicted_curvature: theory::predicted_curvature(q_tm1, params),
        predicted_slope,
        residuals,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Theorem3Statistic {
    pub t: f64,
    pub replicates: usize,
    /// Replicates whose fit failed, with the reason.
    pub failures: Vec<(usize, String)>,
    pub fits: Vec<ProfileFit>,
    pub curvature: Summary,
    pub predicted_curvature: f64,
    /// Median fitted over predicted curvature.
    pub median_ratio: f64,
    pub negative: Option<Proportion>,
}

pub fn compare_theorem3<'a>(
    trajs: impl IntoIterator<Item = &'a Trajectory>,
    scales: &Scales,
    curves: &TheoryCurves,
    t: f64,
    ell_max: Option<u32>,
    min_count: u64,
) -> Result<Theorem3Statistic, CompareError> {
    let q_tm1 = curves.q_at(t - 1.0)?;
    let mut fits = Vec::new();
    let mut failures = Vec::new();
    let mut params = None;
    let mut replicates = 0;
    for (i, traj) in trajs.into_iter().enumerate() {
        replicates += 1;
        params = Some(traj.params);
        let rec = observables::wave_observables(traj, scales, &[t])?;
        let query = rec.queries[0];
        let fit = query
            .j
            .ok_or(ProfileError::NoIndex(t))
            .and_then(|j| fit_profile(snapshot_at(traj, scales.a_n * t)?, j, query.d, q_tm1, &traj.params, ell_max, min_count));
        match fit {
            Ok(f) => fits.push(f),
            Err(e) => failures.push((i, e.to_string())),
        }
    }
    let params = params.ok_or(CompareError::Empty)?;
    let predicted_curvature = theory::predicted_curvature(q_tm1, &params);
    let curv: Vec<f64> = fits.iter().map(|f| f.curvature).collect();
    let summary = Summary::of(&curv);
    Ok(Theorem3Statistic {
        t,
        replicates,
        failures,
        // replicates without a usable fit count as not negative
        negative: Proportion::new(curv.iter().filter(|&&c| c < 0.0).count(), replicates),
        median_ratio: summary.median / predicted_curvature,
        curvature: summary,
        predicted_curvature,
        fits,
    })
}

/// Gaps `tau_{j+1} - tau_j` for `j >= k* + 1` with both times recorded,
/// paired with `Q(tau_j)`.
pub fn spacing_gaps(tau: &[Option<TauRecord>], k_star: u32) -> Vec<(f64, f64)> {
    tau.windows(2)
        .filter_map(|w| match (w[0], w[1]) {
            (Some(a), Some(b)) if a.j > k_star => Some((b.tau - a.tau, a.front_lead)),
            _ => None,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpacingStatistic {
    pub lower: f64,
    pub upper: f64,
    pub gaps: usize,
    /// Share of gaps inside `[lower, upper]`; absent without gaps.
    pub within: Option<Proportion>,
    /// Gap regressed on `a_N / Q(tau_j)` over gaps with `Q > 0`.
    pub regression: Option<LineFit>,
}

pub fn spacing_statistic(gaps: &[(f64, f64)], scales: &Scales) -> SpacingStatistic {
    let lower = scales.a_n / (3.0 * scales.k_n);
    let upper = 2.0 * scales.a_n / scales.k_n;
    let inside = gaps.iter().filter(|g| g.0 >= lower && g.0 <= upper).count();
    let points: Vec<(f64, f64)> =
        gaps.iter().filter(|g| g.1 > 0.0).map(|&(gap, q)| (theory::tau_gap(scales, q), gap)).collect();
    SpacingStatistic { lower, upper, gaps: gaps.len(), within: Proportion::new(inside, gaps.len()), regression: stats::fit_line(&points) }
}

pub fn compare_spacings<'a>(trajs: impl IntoIterator<Item = &'a Trajectory>, scales: &Scales) -> SpacingStatistic {
    let gaps: Vec<(f64, f64)> = trajs.into_iter().flat_map(|t| spacing_gaps(&t.tau, scales.k_star)).collect();
    spacing_statistic(&gaps, scales)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MartingaleCell {
    pub j: u32,
    pub t: f64,
    pub z: MeanSe,
    /// `|mean Z| <= 3 SE`.
    pub z_ok: bool,
    pub y: MeanSe,
    pub y0: f64,
    /// `mean Y(t) <= Y(0) + 3 SE`.
    pub y_ok: bool,
}

pub fn compare_martingale<'a>(
    trajs: impl IntoIterator<Item = &'a Trajectory>,
    types: &[u32],
    times: &[f64],
) -> Result<Vec<MartingaleCell>, CompareError> {
    let mut all_times = vec![0.0];
    all_times.extend_from_slice(times);
    let cols = all_times.len();
    let mut z = vec![Vec::new(); types.len() * cols];
    let mut y = vec![Vec::new(); types.len() * cols];
    for traj in trajs {
        for (k, v) in observables::martingale_values(traj, types, &all_times)?.into_iter().enumerate() {
            z[k].push(v.z);
            y[k].push(v.y);
        }
    }
    if z.first().is_none_or(|c| c.is_empty()) {
        return Err(CompareError::Empty);
    }
    let mut cells = Vec::new();
    for (a, &j) in types.iter().enumerate() {
        let y0 = stats::mean_se(&y[a * cols]).mean;
        for (b, &t) in times.iter().enumerate() {
            let zs = stats::mean_se(&z[a * cols + b + 1]);
            let ys = stats::mean_se(&y[a * cols + b + 1]);
            cells.push(MartingaleCell {
                j,
                t,
                z_ok: zs.mean.abs() <= 3.0 * zs.se || zs.mean == 0.0,
                y_ok: ys.mean <= y0 + 3.0 * ys.se || ys.mean <= y0,
                z: zs,
                y: ys,
                y0,
            });
        }
    }
    Ok(cells)
}

/// Final-state histogram over `(X_0 decile, j_max)`.
pub fn engine_histogram<'a>(trajs: impl IntoIterator<Item = &'a Trajectory>) -> BTreeMap<(u32, u32), u64> {
    let mut h = BTreeMap::new();
    for t in trajs {
        let st = &t.final_state;
        let decile = ((10 * st.count(0)) / st.n()).min(9) as u32;
        *h.entry((decile, st.j_max())).or_insert(0) += 1;
    }
    h
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngineStatistic {
    pub replicates: [usize; 2],
    pub cells: usize,
    pub test: ChiSquareResult,
}

/// Chi-square homogeneity of the two histograms; cells with fewer than five
/// combined observations are pooled.
pub fn compare_engines<'a>(
    a: impl IntoIterator<Item = &'a Trajectory>,
    b: impl IntoIterator<Item = &'a Trajectory>,
) -> EngineStatistic {
    let ha = engine_histogram(a);
    let hb = engine_histogram(b);
    let keys: std::collections::BTreeSet<_> = ha.keys().chain(hb.keys()).copied().collect();
    let ca: Vec<u64> = keys.iter().map(|k| ha.get(k).copied().unwrap_or(0)).collect();
    let cb: Vec<u64> = keys.iter().map(|k| hb.get(k).copied().unwrap_or(0)).collect();
    EngineStatistic {
        replicates: [ca.iter().sum::<u64>() as usize, cb.iter().sum::<u64>() as usize],
        cells: keys.len(),
        test: stats::chi_square_homogeneity(&ca, &cb, 5),
    }
}

pub fn strictly_decreasing(xs: &[f64]) -> bool {
    xs.windows(2).all(|w| w[1] < w[0])
}

pub fn nondecreasing(xs: &[f64]) -> bool {
    xs.windows(2).all(|w| w[1] >= w[0])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{run, EngineKind, NoHook, RunSchedule};
    use crate::renewal::solve_q;
    use crate::theory::AssumptionRatios;

    fn unit_scales(k_star: u32) -> Scales {
        Scales {
            a_n: 10.0,
            k_n: 2.0,
            k_n_minus: 1.5,
            k_n_plus: 2.5,
            k_star,
            t_star: 1.0,
            assumptions: AssumptionRatios { a1: 1.0, a2: 1.0, a3: 1.0 },
        }
    }

    fn frozen_runs(reps: u64) -> Vec<Trajectory> {
        let p = ModelParams::new(50, 0.0, 0.1).unwrap();
        let sched = RunSchedule::new(30.0, (0..=30).map(|i| i as f64).collect()).unwrap();
        (0..reps).map(|i| run(&p, &sched, EngineKind::Effective, i, &mut NoHook).unwrap()).collect()
    }

    #[test]
    fn mutation_free_statistic_is_sup_of_limit() {
        let curves = solve_q(1e-3, 4.0).unwrap();
        let runs = frozen_runs(3);
        let sc = unit_scales(1);
        let probes = [0.5, 2.0, 3.0];
        let s1 = compare_theorem1(&runs, &sc, &curves, &probes).unwrap();
        let sup_q = probes.iter().map(|&t| curves.q_at(t).unwrap()).fold(0.0, f64::max);
        assert!(s1.per_replicate.iter().all(|&v| v == sup_q));
        assert_eq!(s1.summary.iqr(), 0.0);
        let s2 = compare_theorem2(&runs, &sc, &curves, &probes).unwrap();
        let sup_m = probes.iter().map(|&t| curves.m_at(t).unwrap()).fold(0.0, f64::max);
        assert!(s2.per_replicate.iter().all(|&v| v == sup_m));
    }

    #[test]
    fn missing_snapshot_is_reported() {
        let curves = solve_q(1e-3, 4.0).unwrap();
        let runs = frozen_runs(1);
        let r = compare_theorem1(&runs, &unit_scales(1), &curves, &[0.55]);
        assert_eq!(r, Err(CompareError::MissingSnapshot(5.5)));
    }

    #[test]
    fn exact_gaussian_curvature_recovered() {
        let (d, sigma) = (0.3, 1.7);
        let pts: Vec<(i64, f64)> =
            (-4..=4).map(|l: i64| (l, 1e5 * (-((l as f64 - d).powi(2)) / (2.0 * sigma * sigma)).exp())).collect();
        let c = fit_log_profile(&pts).unwrap();
        assert!((c[2] + 1.0 / (2.0 * sigma * sigma)).abs() < 1e-10);
        assert!((c[1] - d / (sigma * sigma)).abs() < 1e-10);
    }

    #[test]
    fn profile_residual_at_zero_vanishes() {
        let snap = Snapshot { time: 1.0, j_min: 3, counts: vec![40, 300, 1000, 500, 60, 3], mutation_sum: 0 };
        let params = ModelParams::new(1903, 1e-3, 0.1).unwrap();
        let fit = fit_profile(&snap, 5, Some(0.1), 2.0, &params, None, 10).unwrap();
        assert_eq!(fit.ells, vec![-2, -1, 0, 1, 2]);
        let zero = fit.ells.iter().position(|&l| l == 0).unwrap();
        assert_eq!(fit.residuals.unwrap()[zero], 0.0);
        assert!(fit.curvature < 0.0);
        let narrow = fit_profile(&snap, 5, None, 2.0, &params, Some(0), 10);
        assert_eq!(narrow, Err(ProfileError::TooFewTypes(1)));
    }

    fn taus(times: &[f64]) -> Vec<Option<TauRecord>> {
        times.iter().enumerate().map(|(j, &tau)| Some(TauRecord { j: j as u32, tau, front_lead: 1.0 })).collect()
    }

    #[test]
    fn spacing_examples() {
        let sc = unit_scales(1);
        let single = compare_spacings(&[], &sc);
        assert_eq!(single.within, None);
        assert!(spacing_gaps(&taus(&[0.0]), 1).is_empty());
        let gap = sc.a_n / sc.k_n;
        let uniform: Vec<f64> = (0..8).map(|j| j as f64 * gap).collect();
        let g = spacing_gaps(&taus(&uniform), sc.k_star);
        assert_eq!(g.len(), 5);
        assert_eq!(spacing_statistic(&g, &sc).within.unwrap().fraction, 1.0);
        // a hole in the records breaks the pair
        let mut holes = taus(&uniform);
        holes[4] = None;
        assert_eq!(spacing_gaps(&holes, sc.k_star).len(), 3);
    }

    #[test]
    fn trends() {
        assert!(strictly_decreasing(&[3.0, 2.0, 1.0]));
        assert!(!strictly_decreasing(&[3.0, 3.0]));
        assert!(nondecreasing(&[0.5, 0.5, 0.7]));
    }

    #[test]
    fn identical_ensembles_are_homogeneous() {
        let p = ModelParams::new(100, 0.01, 0.1).unwrap();
        let sched = RunSchedule::uniform(3.0, 2).unwrap();
        let runs: Vec<_> = (0..200).map(|i| run(&p, &sched, EngineKind::Effective, i, &mut NoHook).unwrap()).collect();
        let st = compare_engines(&runs, &runs);
        assert_eq!(st.test.statistic, 0.0);
        assert_eq!(st.replicates, [200, 200]);
    }
}
