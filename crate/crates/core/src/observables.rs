//! Wave observables and martingale diagnostics computed from trajectories.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{Snapshot, Trajectory};
use crate::model::raw_weight;
use crate::renewal::CompensatedSum;
use crate::theory::Scales;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ObservableError {
    #[error("query time {t} outside the recorded range [0, {t_end}]")]
    QueryOutOfRange { t: f64, t_end: f64 },
    #[error("trajectory has no event log; rerun with the event log enabled")]
    InsufficientResolution,
}

/// Observables of one snapshot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaveRow {
    pub time: f64,
    pub mean: f64,
    /// `Q = j_max - M`.
    pub front_lead: f64,
    pub r: u32,
    pub j_min: u32,
    pub j_max: u32,
    pub counts: Vec<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TauRow {
    pub j: u32,
    pub tau: f64,
    pub gamma: f64,
}

/// `j(t)` and `d(t)` at one scaled time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaveQuery {
    /// Scaled time; the physical time is `a_N t`.
    pub t: f64,
    pub j: Option<u32>,
    /// Absent when `gamma_{j(t)+1}` was never recorded.
    pub d: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaveRecord {
    pub rows: Vec<WaveRow>,
    pub tau: Vec<TauRow>,
    pub queries: Vec<WaveQuery>,
}

/// `R(t) = k* 1{t < a_N} + #{j >= k* + 1 : t - a_N < tau_j <= t}`.
pub fn count_recent(tau: &[TauRow], scales: &Scales, t: f64) -> u32 {
    let k = scales.k_star;
    let base = if t < scales.a_n { k } else { 0 };
    let recent = tau.iter().filter(|r| r.j > k && r.tau > t - scales.a_n && r.tau <= t).count() as u32;
    base + recent
}

/// `j(t) = max{j : gamma_j <= a_N t}` over recorded types.
pub fn index_at(tau: &[TauRow], scales: &Scales, t: f64) -> Option<u32> {
    let x = scales.a_n * t;
    tau.iter().filter(|r| r.gamma <= x).map(|r| r.j).max()
}

/// Solves `a_N t = (1/2 - d) gamma_j + (1/2 + d) gamma_{j+1}` for `d`.
pub fn offset_at(gamma_j: f64, gamma_next: f64, x: f64) -> f64 {
    (x - 0.5 * (gamma_j + gamma_next)) / (gamma_next - gamma_j)
}

pub fn tau_rows(traj: &Trajectory, scales: &Scales) -> Vec<TauRow> {
    traj.tau_records().map(|r| TauRow { j: r.j, tau: r.tau, gamma: r.tau + scales.a_n }).collect()
}

pub fn wave_row(snap: &Snapshot, tau: &[TauRow], scales: &Scales) -> WaveRow {
    WaveRow {
        time: snap.time,
        mean: snap.mean(),
        front_lead: snap.front_lead(),
        r: count_recent(tau, scales, snap.time),
        j_min: snap.j_min,
        j_max: snap.j_max(),
        counts: snap.counts.clone(),
    }
}

/// Wave observables at every snapshot plus `j(t)`, `d(t)` at the scaled
/// query times.
pub fn wave_observables(traj: &Trajectory, scales: &Scales, t_query: &[f64]) -> Result<WaveRecord, ObservableError> {
    let tau = tau_rows(traj, scales);
    let mut queries = Vec::with_capacity(t_query.len());
    for &t in t_query {
        let x = scales.a_n * t;
        if !(x >= 0.0 && x <= traj.t_end) {
            return Err(ObservableError::QueryOutOfRange { t: x, t_end: traj.t_end });
        }
        let j = index_at(&tau, scales, t);
        let d = j.and_then(|j| {
            let gj = tau.iter().find(|r| r.j == j)?.gamma;
            let gn = tau.iter().find(|r| r.j == j + 1)?.gamma;
            Some(offset_at(gj, gn, x))
        });
        queries.push(WaveQuery { t, j, d });
    }
    let rows = traj.snapshots.iter().map(|s| wave_row(s, &tau, scales)).collect();
    Ok(WaveRecord { rows, tau, queries })
}

/// Martingale `Z_j` and supermartingale `Y_j` for one type at one time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MartingaleValue {
    pub j: u32,
    pub t: f64,
    pub z: f64,
    pub y: f64,
}

/// `int_0^dt e^{-g u} du`.
fn exp_integral(g: f64, dt: f64) -> f64 {
    if g == 0.0 {
        dt
    } else {
        -(-g * dt).exp_m1() / g
    }
}

struct Accum {
    /// `int G*_j`.
    lambda: CompensatedSum,
    /// `int G~_j`.
    lambda_tilde: CompensatedSum,
    /// `int mu X_{j-1}(u) e^{-int_0^u G*_j} du`.
    inflow: CompensatedSum,
}

/// Evaluates `Z_j(t)` and `Y_j(t)` for every pair in `types x times` by
/// replaying the event log once.
///
/// `G*_j = N F_j - 1 - mu` and `G~_j = max_{l <= j}(N F_l - 1 - mu 1{l = j})`
/// are constant between events, so every time integral is an exact sum over
/// inter-event intervals. Exponents are accumulated with compensated sums
/// and exponentiated only when combined with a count.
pub fn martingale_values(traj: &Trajectory, types: &[u32], times: &[f64]) -> Result<Vec<MartingaleValue>, ObservableError> {
    let log = traj.log.as_ref().ok_or(ObservableError::InsufficientResolution)?;
    for &t in times {
        if !(t >= 0.0 && t <= traj.t_end) {
            return Err(ObservableError::QueryOutOfRange { t, t_end: traj.t_end });
        }
    }
    let (s, mu) = (traj.params.s(), traj.params.mu());
    let n = traj.params.n() as f64;
    let mut order: Vec<usize> = (0..times.len()).collect();
    order.sort_by(|&a, &b| times[a].total_cmp(&times[b]));

    let mut state = log.initial.clone();
    let x0: Vec<f64> = types.iter().map(|&j| state.count(j) as f64).collect();
    let mut acc: Vec<Accum> = types
        .iter()
        .map(|_| Accum { lambda: CompensatedSum::default(), lambda_tilde: CompensatedSum::default(), inflow: CompensatedSum::default() })
        .collect();
    let mut now = state.time();
    let mut events = log.events.iter().peekable();
    let mut out = vec![MartingaleValue { j: 0, t: 0.0, z: 0.0, y: 0.0 }; types.len() * times.len()];

    let advance = |state: &crate::model::PopulationState, acc: &mut [Accum], dt: f64| {
        if dt <= 0.0 {
            return;
        }
        let fit = state.fitness(s);
        let nf = |l: u32| n * raw_weight(l, fit.mean, s) / fit.total;
        for (a, &j) in acc.iter_mut().zip(types) {
            let g = nf(j) - 1.0 - mu;
            // weights are nondecreasing in l, so the max over l < j sits at j - 1
            let g_tilde = if j == 0 { g } else { g.max(nf(j - 1) - 1.0) };
            if j > 0 {
                let feed = mu * state.count(j - 1) as f64;
                if feed > 0.0 {
                    let lam = a.lambda.value();
                    a.inflow.add(feed * (-lam).exp() * exp_integral(g, dt));
                }
            }
            a.lambda.add(g * dt);
            a.lambda_tilde.add(g_tilde * dt);
        }
    };

    for &qi in &order {
        let tq = times[qi];
        while let Some(e) = events.next_if(|e| e.time <= tq) {
            advance(&state, &mut acc, e.time - now);
            now = e.time;
            match e.kind {
                crate::engine::EventKind::Mutation { from } => state.apply_mutation_unchecked(from),
                crate::engine::EventKind::Replacement { dying, parent } => state.apply_replacement_unchecked(dying, parent),
            }
        }
        advance(&state, &mut acc, tq - now);
        now = tq;
        for (k, (a, &j)) in acc.iter().zip(types).enumerate() {
            let x = state.count(j) as f64;
            let decayed = x * (-a.lambda.value()).exp();
            let z = decayed - a.inflow.value() - x0[k];
            let sj = state.cumulative(j) as f64;
            let y = sj * (-a.lambda_tilde.value()).exp();
            out[k * times.len() + qi] = MartingaleValue { j, t: tq, z, y };
        }
    }
    Ok(out)
}

pub fn martingale_z(traj: &Trajectory, j: u32, t: f64) -> Result<f64, ObservableError> {
    Ok(martingale_values(traj, &[j], &[t])?[0].z)
}

pub fn supermartingale_y(traj: &Trajectory, j: u32, t: f64) -> Result<f64, ObservableError> {
    Ok(martingale_values(traj, &[j], &[t])?[0].y)
}

pub fn write_wave_csv<W: Write>(rows: &[WaveRow], mut out: W) -> std::io::Result<()> {
    writeln!(out, "time,M,Q,R,jmin,jmax")?;
    for r in rows {
        writeln!(out, "{:.16e},{:.16e},{:.16e},{},{},{}", r.time, r.mean, r.front_lead, r.r, r.j_min, r.j_max)?;
    }
    Ok(())
}

pub fn write_tau_csv<W: Write>(rows: &[TauRow], mut out: W) -> std::io::Result<()> {
    writeln!(out, "j,tau,gamma")?;
    for r in rows {
        writeln!(out, "{},{:.16e},{:.16e}", r.j, r.tau, r.gamma)?;
    }
    Ok(())
}

fn bad(msg: String) -> std::io::Error {
    std::io::Error::new(std::io::ErrorKind::InvalidData, msg)
}

fn read_fields<R: BufRead>(input: R, header: &str) -> std::io::Result<Vec<Vec<String>>> {
    let mut lines = input.lines();
    let first = lines.next().transpose()?;
    if first.as_deref().map(str::trim) != Some(header) {
        return Err(bad(format!("expected header {header}")));
    }
    let mut rows = Vec::new();
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        rows.push(line.split(',').map(|f| f.trim().to_string()).collect());
    }
    Ok(rows)
}

fn field<T: std::str::FromStr>(f: &[String], i: usize) -> std::io::Result<T> {
    f.get(i).and_then(|v| v.parse().ok()).ok_or_else(|| bad(format!("bad field {i} in {f:?}")))
}

/// Reads back the columns written by [`write_wave_csv`]; counts are not stored.
pub fn read_wave_csv<R: BufRead>(input: R) -> std::io::Result<Vec<WaveRow>> {
    read_fields(input, "time,M,Q,R,jmin,jmax")?
        .iter()
        .map(|f| {
            Ok(WaveRow {
                time: field(f, 0)?,
                mean: field(f, 1)?,
                front_lead: field(f, 2)?,
                r: field(f, 3)?,
                j_min: field(f, 4)?,
                j_max: field(f, 5)?,
                counts: Vec::new(),
            })
        })
        .collect()
}

pub fn read_tau_csv<R: BufRead>(input: R) -> std::io::Result<Vec<TauRow>> {
    read_fields(input, "j,tau,gamma")?
        .iter()
        .map(|f| Ok(TauRow { j: field(f, 0)?, tau: field(f, 1)?, gamma: field(f, 2)? }))
        .collect()
}
