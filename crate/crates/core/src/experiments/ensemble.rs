//! Seeded ensembles of independent replicates.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ConfigError, ExperimentConfig, Target};
use crate::engine::{run, EngineKind, NoHook, RunSchedule, Trajectory};
use crate::model::ModelParams;
use crate::rng::seed_for_replicate;
use crate::theory;

#[derive(Debug, Clone)]
pub struct Replicate {
    pub index: u64,
    pub seed: u64,
    pub trajectory: Trajectory,
}

#[derive(Debug, Clone)]
pub struct Ensemble {
    pub config: ExperimentConfig,
    pub params: ModelParams,
    pub t_end: f64,
    pub replicates: Vec<Replicate>,
}

impl Ensemble {
    pub fn trajectories(&self) -> impl Iterator<Item = &Trajectory> {
        self.replicates.iter().map(|r| &r.trajectory)
    }

    pub fn summaries(&self) -> Vec<ReplicateSummary> {
        self.replicates.iter().map(ReplicateSummary::of).collect()
    }
}

/// Compact description of one replicate for reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateSummary {
    pub index: u64,
    pub seed: u64,
    pub events: u64,
    pub mutations: u64,
    pub replacements: u64,
    pub null_replacements: u64,
    pub clamped_events: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub degenerate_at: Option<f64>,
    pub final_mean: f64,
    pub final_front_lead: f64,
    pub max_front_lead: f64,
    pub final_j_max: u32,
    /// Number of recorded establishment times, `tau_0` included.
    pub established: usize,
    /// Whether the recorded `tau_j` are nondecreasing in `j`; this holds
    /// only with high probability, so it is reported rather than enforced.
    pub tau_ordered: bool,
}

impl ReplicateSummary {
    pub fn of(rep: &Replicate) -> Self {
        let traj = &rep.trajectory;
        let c = traj.counters;
        let max_front_lead = traj.snapshots.iter().map(|s| s.front_lead()).fold(traj.final_state.front_lead(), f64::max);
        Self {
            index: rep.index,
            seed: rep.seed,
            events: c.total,
            mutations: c.mutations,
            replacements: c.replacements,
            null_replacements: c.null_replacements,
            clamped_events: c.clamped,
            degenerate_at: traj.degenerate_at,
            final_mean: traj.final_state.mean(),
            final_front_lead: traj.final_state.front_lead(),
            max_front_lead,
            final_j_max: traj.final_state.j_max(),
            established: traj.tau_records().count(),
            tau_ordered: traj.tau_ordered(),
        }
    }
}

/// Evenly spaced snapshots on `[0, t_end]` plus the physical times of every
/// scaled probe the configured targets evaluate.
pub fn snapshot_times(config: &ExperimentConfig, params: &ModelParams, t_end: f64) -> Vec<f64> {
    let k = config.run.resolution;
    let mut times: Vec<f64> = (0..k).map(|i| if i + 1 == k { t_end } else { t_end * i as f64 / (k - 1) as f64 }).collect();
    if let Ok(sc) = theory::scales(params) {
        let v = &config.verify;
        times.extend(v.probes.iter().chain(std::iter::once(&v.profile_time)).map(|&t| t * sc.a_n).filter(|&t| t <= t_end));
    }
    times.sort_by(f64::total_cmp);
    times.dedup();
    times
}

fn schedule_for(config: &ExperimentConfig, params: &ModelParams, t_end: f64) -> Result<RunSchedule, ConfigError> {
    let keep_log = config.run.event_log || config.verify.targets.contains(&Target::Martingale);
    Ok(RunSchedule::new(t_end, snapshot_times(config, params, t_end))
        .map_err(|e| ConfigError::Invalid(e.to_string()))?
        .with_threshold_watch(true)
        .with_event_log(keep_log))
}

/// Runs replicates `indices` in parallel on `workers` threads (0 = all cores).
///
/// Each replicate uses the stream `seed_for_replicate(master, index)` and
/// results come back ordered by index, so the output does not depend on the
/// number of workers.
pub fn run_replicates(
    params: &ModelParams,
    schedule: &RunSchedule,
    engine: EngineKind,
    master: u64,
    indices: std::ops::Range<u64>,
    workers: usize,
) -> Result<Vec<Replicate>, ConfigError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| ConfigError::Invalid(format!("cannot start worker pool: {e}")))?;
    pool.install(|| {
        indices
            .into_par_iter()
            .map(|index| {
                let seed = seed_for_replicate(master, index);
                let trajectory =
                    run(params, schedule, engine, seed, &mut NoHook).map_err(|e| ConfigError::Invalid(e.to_string()))?;
                Ok(Replicate { index, seed, trajectory })
            })
            .collect()
    })
}

pub fn run_ensemble(config: &ExperimentConfig) -> Result<Ensemble, ConfigError> {
    config.validate()?;
    let params = config.params()?;
    let t_end = config.t_end()?;
    let schedule = schedule_for(config, &params, t_end)?;
    let replicates =
        run_replicates(&params, &schedule, config.run.engine, config.run.seed, 0..config.run.replicates, config.run.workers)?;
    Ok(Ensemble { config: config.clone(), params, t_end, replicates })
}

/// Ensemble with the other engine on fresh streams: replicate `i` uses
/// index `replicates + i` under the same master seed.
pub fn run_twin_ensemble(config: &ExperimentConfig, engine: EngineKind) -> Result<Ensemble, ConfigError> {
    let params = config.params()?;
    let t_end = config.t_end()?;
    let schedule = schedule_for(config, &params, t_end)?;
    let r = config.run.replicates;
    let replicates = run_replicates(&params, &schedule, engine, config.run.seed, r..2 * r, config.run.workers)?;
    let mut cfg = config.clone();
    cfg.run.engine = engine;
    Ok(Ensemble { config: cfg, params, t_end, replicates })
}
