//! Exact continuous-time simulation of the model.
//!
//! Two samplers produce the same law on state paths:
//!
//! * the **faithful** scheme fires every death and every mutation at the
//!   constant total rate `N (1 + mu)`, including deaths where the offspring
//!   has the same type as the individual it replaces;
//! * the **effective** scheme thins those self-replacements away and only
//!   draws events that change the type profile.
//!
//! When one type dominates the population most faithful events are no-ops,
//! so the effective scheme is the default.

use std::str::FromStr;

use rand::Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{raw_weight, Fitness, ModelError, ModelParams, PopulationState};
use crate::rng::{stream, SimRng};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EngineError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EngineKind {
    Faithful,
    #[default]
    Effective,
}

impl FromStr for EngineKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "faithful" => Ok(Self::Faithful),
            "effective" => Ok(Self::Effective),
            other => Err(format!("unknown engine '{other}' (expected faithful or effective)")),
        }
    }
}

impl std::fmt::Display for EngineKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Faithful => "faithful",
            Self::Effective => "effective",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EventKind {
    /// A type `from` individual gains a mutation and becomes type `from + 1`.
    Mutation { from: u32 },
    /// A type `dying` individual is replaced by offspring of a type `parent`
    /// individual. `dying == parent` leaves the profile unchanged.
    Replacement { dying: u32, parent: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub time: f64,
    pub kind: EventKind,
}

#[inline]
fn exp_wait(rng: &mut SimRng, rate: f64) -> f64 {
    let e: f64 = rng.sample(Exp1);
    e / rate
}

/// Type of a uniformly chosen individual.
#[inline]
fn pick_individual(state: &PopulationState, rng: &mut SimRng) -> u32 {
    let mut target = rng.random_range(0..state.n());
    for (j, c) in state.band() {
        if target < c {
            return j;
        }
        target -= c;
    }
    state.j_max()
}

/// Type `j` with probability proportional to `X_j w_j`, skipping `skip`.
/// `mass` is the total weight of the eligible types.
#[inline]
fn pick_parent(state: &PopulationState, fit: &Fitness, s: f64, skip: Option<u32>, mass: f64, rng: &mut SimRng) -> u32 {
    let target = rng.random::<f64>() * mass;
    let mut acc = 0.0;
    let mut last = None;
    for (j, c) in state.band() {
        if c == 0 || Some(j) == skip {
            continue;
        }
        let w = c as f64 * raw_weight(j, fit.mean, s);
        if w <= 0.0 {
            continue;
        }
        acc += w;
        last = Some(j);
        if target < acc {
            return j;
        }
    }
    // rounding can leave the target just past the accumulated mass
    last.unwrap_or(state.j_max())
}

/// One step of the faithful scheme: waiting time and event.
pub fn next_event_faithful(
    state: &PopulationState,
    params: &ModelParams,
    rng: &mut SimRng,
) -> Result<(f64, EventKind), ModelError> {
    let n = state.n() as f64;
    let dt = exp_wait(rng, n * (1.0 + params.mu()));
    if rng.random::<f64>() * (1.0 + params.mu()) < 1.0 {
        let fit = state.fitness(params.s());
        if !(fit.total > 0.0) {
            return Err(ModelError::DegeneratePopulation { time: state.time() });
        }
        let dying = pick_individual(state, rng);
        let parent = pick_parent(state, &fit, params.s(), None, fit.total, rng);
        Ok((dt, EventKind::Replacement { dying, parent }))
    } else {
        Ok((dt, EventKind::Mutation { from: pick_individual(state, rng) }))
    }
}

/// Total rate of profile-changing events: `(mutation rate, replacement rate)`.
///
/// The replacement rate is `N (1 - sum_j (X_j/N)(X_j F_j))`, the death rate
/// minus the mass of deaths where the offspring copies the dying type.
pub fn effective_rates(state: &PopulationState, params: &ModelParams, fit: &Fitness) -> (f64, f64) {
    let n = state.n() as f64;
    let replacement = (n - fit.self_mass / fit.total).max(0.0);
    (params.mu() * n, replacement)
}

/// One step of the thinned scheme. `None` when no profile-changing event
/// can ever occur (a homogeneous population with `mu = 0`).
pub fn next_event_effective(
    state: &PopulationState,
    params: &ModelParams,
    rng: &mut SimRng,
) -> Result<Option<(f64, EventKind)>, ModelError> {
    let s = params.s();
    let fit = state.fitness(s);
    if !(fit.total > 0.0) {
        return Err(ModelError::DegeneratePopulation { time: state.time() });
    }
    let (mutation, replacement) = effective_rates(state, params, &fit);
    let total = mutation + replacement;
    if !(total > 0.0) {
        return Ok(None);
    }
    let dt = exp_wait(rng, total);
    if rng.random::<f64>() * total < mutation {
        return Ok(Some((dt, EventKind::Mutation { from: pick_individual(state, rng) })));
    }

    // Joint law of (dying i, parent j) is X_i/N * X_j w_j/W conditioned on
    // i != j. Draw i from its marginal X_i (W - X_i w_i), then j given i.
    let n = state.n() as f64;
    let dying_mass = n * fit.total - fit.self_mass;
    let target = rng.random::<f64>() * dying_mass;
    let mut acc = 0.0;
    let mut dying = None;
    let mut last = state.j_max();
    for (j, c) in state.band() {
        if c == 0 {
            continue;
        }
        let x = c as f64;
        let m = x * (fit.total - x * raw_weight(j, fit.mean, s));
        if m <= 0.0 {
            continue;
        }
        acc += m;
        last = j;
        if target < acc {
            dying = Some(j);
            break;
        }
    }
    let dying = dying.unwrap_or(last);
    let own = state.count(dying) as f64 * raw_weight(dying, fit.mean, s);
    let parent = pick_parent(state, &fit, s, Some(dying), fit.total - own, rng);
    Ok(Some((dt, EventKind::Replacement { dying, parent })))
}

/// Horizon, snapshot times and what to record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSchedule {
    pub t_end: f64,
    pub snapshot_times: Vec<f64>,
    /// Record `tau_j`, the first time `X_{j-1} >= s/mu`.
    pub threshold_watch: bool,
    /// Keep every profile-changing event (needed by the martingale
    /// diagnostics; memory grows with the event count).
    pub event_log: bool,
}

impl RunSchedule {
    pub fn new(t_end: f64, snapshot_times: Vec<f64>) -> Result<Self, EngineError> {
        let sched = Self { t_end, snapshot_times, threshold_watch: true, event_log: false };
        sched.validate()?;
        Ok(sched)
    }

    /// Snapshots at `0, step, 2 step, ...` up to `t_end`.
    pub fn uniform(t_end: f64, points: usize) -> Result<Self, EngineError> {
        let times = if points < 2 {
            vec![t_end]
        } else {
            (0..points).map(|k| if k + 1 == points { t_end } else { t_end * k as f64 / (points - 1) as f64 }).collect()
        };
        Self::new(t_end, times)
    }

    pub fn with_event_log(mut self, on: bool) -> Self {
        self.event_log = on;
        self
    }

    pub fn with_threshold_watch(mut self, on: bool) -> Self {
        self.threshold_watch = on;
        self
    }

    pub fn validate(&self) -> Result<(), EngineError> {
        if !(self.t_end.is_finite() && self.t_end >= 0.0) {
            return Err(EngineError::InvalidSchedule(format!("t_end must be finite and >= 0, got {}", self.t_end)));
        }
        if self.snapshot_times.iter().any(|&t| !(0.0..=self.t_end).contains(&t)) {
            return Err(EngineError::InvalidSchedule("snapshot times must lie in [0, t_end]".into()));
        }
        if self.snapshot_times.windows(2).any(|w| w[0] > w[1]) {
            return Err(EngineError::InvalidSchedule("snapshot times must be sorted".into()));
        }
        Ok(())
    }
}

/// Type profile at a scheduled time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub time: f64,
    pub j_min: u32,
    /// Counts for types `j_min ..= j_max`.
    pub counts: Vec<u64>,
    pub mutation_sum: u128,
}

impl Snapshot {
    fn of(state: &PopulationState, time: f64) -> Self {
        Self {
            time,
            j_min: state.j_min(),
            counts: state.band_counts().to_vec(),
            mutation_sum: state.mutation_sum(),
        }
    }

    pub fn n(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn j_max(&self) -> u32 {
        self.j_min + self.counts.len() as u32 - 1
    }

    pub fn count(&self, j: u32) -> u64 {
        if j < self.j_min {
            return 0;
        }
        self.counts.get((j - self.j_min) as usize).copied().unwrap_or(0)
    }

    pub fn mean(&self) -> f64 {
        self.mutation_sum as f64 / self.n() as f64
    }

    /// `Q = j_max - M`, computed from the exact mutation sum.
    pub fn front_lead(&self) -> f64 {
        let n = self.n() as u128;
        (self.j_max() as u128 * n - self.mutation_sum) as f64 / n as f64
    }
}

/// First time the count of type `j - 1` reached the establishment count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TauRecord {
    pub j: u32,
    pub tau: f64,
    /// `Q(tau_j)`, the lead of the fittest type over the mean at `tau_j`.
    pub front_lead: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventCounters {
    /// Every event drawn, including no-op replacements.
    pub total: u64,
    pub mutations: u64,
    /// Replacements that changed the profile.
    pub replacements: u64,
    /// Replacements of an individual by offspring of its own type.
    pub null_replacements: u64,
    /// Events after which some occupied type had its fitness clamped at 0.
    pub clamped: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EventLog {
    pub initial: PopulationState,
    /// Profile-changing events in time order.
    pub events: Vec<Event>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub params: ModelParams,
    pub engine: EngineKind,
    pub seed: u64,
    pub t_end: f64,
    pub snapshots: Vec<Snapshot>,
    /// `tau[j]`; `tau[0] = 0` by convention.
    pub tau: Vec<Option<TauRecord>>,
    pub counters: EventCounters,
    /// Time at which the run stopped on a zero-fitness population.
    pub degenerate_at: Option<f64>,
    pub final_state: PopulationState,
    pub log: Option<EventLog>,
}

impl Trajectory {
    pub fn tau(&self, j: u32) -> Option<f64> {
        self.tau.get(j as usize).copied().flatten().map(|r| r.tau)
    }

    pub fn tau_records(&self) -> impl Iterator<Item = &TauRecord> {
        self.tau.iter().flatten()
    }

    /// The snapshot taken at `time` (to within a relative 1e-12).
    pub fn snapshot_at(&self, time: f64) -> Option<&Snapshot> {
        let tol = 1e-12 * time.abs().max(1.0);
        self.snapshots.iter().find(|s| (s.time - time).abs() <= tol)
    }

    /// Whether `tau_j` is nondecreasing in `j` over recorded values.
    pub fn tau_ordered(&self) -> bool {
        let recorded: Vec<f64> = self.tau_records().map(|r| r.tau).collect();
        recorded.windows(2).all(|w| w[0] <= w[1])
    }
}

/// Observer invoked after every event is applied.
pub trait RunHook {
    fn on_event(&mut self, event: &Event, state: &PopulationState);
}

pub struct NoHook;

impl RunHook for NoHook {
    #[inline]
    fn on_event(&mut self, _: &Event, _: &PopulationState) {}
}

/// Adapts a closure into a [`RunHook`].
pub struct FnHook<F>(pub F);

impl<F: FnMut(&Event, &PopulationState)> RunHook for FnHook<F> {
    fn on_event(&mut self, event: &Event, state: &PopulationState) {
        (self.0)(event, state)
    }
}

/// Runs one replicate from the all-type-0 population.
pub fn run<H: RunHook>(
    params: &ModelParams,
    schedule: &RunSchedule,
    engine: EngineKind,
    seed: u64,
    hook: &mut H,
) -> Result<Trajectory, EngineError> {
    run_from(PopulationState::homogeneous(params.n(), 0), params, schedule, engine, seed, hook)
}

/// Runs one replicate from an arbitrary initial profile.
pub fn run_from<H: RunHook>(
    initial: PopulationState,
    params: &ModelParams,
    schedule: &RunSchedule,
    engine: EngineKind,
    seed: u64,
    hook: &mut H,
) -> Result<Trajectory, EngineError> {
    schedule.validate()?;
    if initial.n() != params.n() {
        return Err(ModelError::InvalidParams(format!(
            "initial population has {} individuals, parameters say {}",
            initial.n(),
            params.n()
        ))
        .into());
    }
    let mut rng = stream(seed);
    let mut state = initial;
    let threshold = if schedule.threshold_watch { params.establishment_count() } else { None };
    let mut tau: Vec<Option<TauRecord>> = vec![Some(TauRecord { j: 0, tau: 0.0, front_lead: state.front_lead() })];
    let record_tau = |tau: &mut Vec<Option<TauRecord>>, state: &PopulationState, c: u32| {
        if let Some(thr) = threshold {
            let j = c as usize + 1;
            if state.count(c) >= thr && tau.get(j).is_none_or(|r| r.is_none()) {
                if tau.len() <= j {
                    tau.resize(j + 1, None);
                }
                tau[j] = Some(TauRecord { j: j as u32, tau: state.time(), front_lead: state.front_lead() });
            }
        }
    };
    let occupied: Vec<u32> = state.band().filter(|&(_, c)| c > 0).map(|(j, _)| j).collect();
    for c in occupied {
        record_tau(&mut tau, &state, c);
    }

    let mut log = schedule.event_log.then(|| EventLog { initial: state.clone(), events: Vec::new() });
    let mut snapshots = Vec::with_capacity(schedule.snapshot_times.len());
    let mut next_snap = 0;
    let mut counters = EventCounters::default();
    let mut degenerate_at = None;
    let s = params.s();

    loop {
        let step = match engine {
            EngineKind::Faithful => next_event_faithful(&state, params, &mut rng).map(Some),
            EngineKind::Effective => next_event_effective(&state, params, &mut rng),
        };
        let (dt, kind) = match step {
            Ok(Some(step)) => step,
            Ok(None) => break,
            Err(ModelError::DegeneratePopulation { time }) => {
                degenerate_at = Some(time);
                break;
            }
            Err(e) => return Err(e.into()),
        };
        let t_new = state.time() + dt;
        if t_new > schedule.t_end {
            break;
        }
        while next_snap < schedule.snapshot_times.len() && schedule.snapshot_times[next_snap] < t_new {
            snapshots.push(Snapshot::of(&state, schedule.snapshot_times[next_snap]));
            next_snap += 1;
        }
        state.set_time(t_new);
        counters.total += 1;
        let grown = match kind {
            EventKind::Mutation { from } => {
                state.apply_mutation_unchecked(from);
                counters.mutations += 1;
                Some(from + 1)
            }
            EventKind::Replacement { dying, parent } if dying != parent => {
                state.apply_replacement_unchecked(dying, parent);
                counters.replacements += 1;
                Some(parent)
            }
            EventKind::Replacement { .. } => {
                counters.null_replacements += 1;
                None
            }
        };
        let event = Event { time: t_new, kind };
        if let Some(c) = grown {
            record_tau(&mut tau, &state, c);
            if state.is_clamped(s) {
                counters.clamped += 1;
            }
            if let Some(log) = log.as_mut() {
                log.events.push(event);
            }
        }
        hook.on_event(&event, &state);
    }

    if degenerate_at.is_none() {
        while next_snap < schedule.snapshot_times.len() {
            snapshots.push(Snapshot::of(&state, schedule.snapshot_times[next_snap]));
            next_snap += 1;
        }
    }

    Ok(Trajectory {
        params: *params,
        engine,
        seed,
        t_end: schedule.t_end,
        snapshots,
        tau,
        counters,
        degenerate_at,
        final_state: state,
        log,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(n: u64, mu: f64, s: f64) -> ModelParams {
        ModelParams::new(n, mu, s).unwrap()
    }

    #[test]
    fn schedule_validation() {
        assert!(RunSchedule::new(10.0, vec![0.0, 5.0, 10.0]).is_ok());
        assert!(RunSchedule::new(10.0, vec![5.0, 1.0]).is_err());
        assert!(RunSchedule::new(10.0, vec![11.0]).is_err());
        assert!(RunSchedule::new(f64::INFINITY, vec![]).is_err());
    }

    #[test]
    fn uniform_grid_never_overshoots() {
        for i in 1..2000 {
            let t_end = 0.37 * i as f64 + 1.0 / 3.0;
            for points in [2, 7, 26, 301] {
                let s = RunSchedule::uniform(t_end, points).unwrap();
                assert_eq!(*s.snapshot_times.last().unwrap(), t_end);
            }
        }
    }

    #[test]
    fn engine_kind_parses() {
        assert_eq!("faithful".parse::<EngineKind>().unwrap(), EngineKind::Faithful);
        assert_eq!("effective".parse::<EngineKind>().unwrap(), EngineKind::Effective);
        assert!("tau-leap".parse::<EngineKind>().is_err());
    }

    #[test]
    fn mutation_free_homogeneous_effective_jumps_to_end() {
        let p = params(100, 0.0, 0.1);
        let sched = RunSchedule::uniform(50.0, 6).unwrap();
        let traj = run(&p, &sched, EngineKind::Effective, 1, &mut NoHook).unwrap();
        assert_eq!(traj.counters.total, 0);
        assert_eq!(traj.snapshots.len(), 6);
        assert!(traj.snapshots.iter().all(|s| s.counts == vec![100] && s.front_lead() == 0.0));
    }

    #[test]
    fn mutation_free_faithful_only_null_events() {
        let p = params(50, 0.0, 0.1);
        let sched = RunSchedule::uniform(5.0, 3).unwrap();
        let traj = run(&p, &sched, EngineKind::Faithful, 3, &mut NoHook).unwrap();
        assert!(traj.counters.total > 0);
        assert_eq!(traj.counters.total, traj.counters.null_replacements);
        assert_eq!(traj.final_state.band_counts(), PopulationState::homogeneous(50, 0).band_counts());
    }

    #[test]
    fn first_tau_at_time_zero_when_threshold_met() {
        let p = params(1000, 0.01, 0.1);
        let sched = RunSchedule::uniform(1.0, 2).unwrap();
        let traj = run(&p, &sched, EngineKind::Effective, 9, &mut NoHook).unwrap();
        assert_eq!(traj.tau(0), Some(0.0));
        assert_eq!(traj.tau(1), Some(0.0));
    }

    #[test]
    fn identical_inputs_give_identical_trajectories() {
        let p = params(300, 0.01, 0.1);
        let sched = RunSchedule::uniform(20.0, 11).unwrap().with_event_log(true);
        for engine in [EngineKind::Faithful, EngineKind::Effective] {
            let a = run(&p, &sched, engine, 77, &mut NoHook).unwrap();
            let b = run(&p, &sched, engine, 77, &mut NoHook).unwrap();
            assert_eq!(a, b);
            let c = run(&p, &sched, engine, 78, &mut NoHook).unwrap();
            assert_ne!(a.final_state, c.final_state);
        }
    }

    #[test]
    fn event_times_strictly_increase() {
        let p = params(200, 0.01, 0.1);
        let sched = RunSchedule::uniform(10.0, 2).unwrap();
        let mut last = 0.0;
        let mut ok = true;
        let mut hook = FnHook(|e: &Event, _: &PopulationState| {
            ok &= e.time > last;
            last = e.time;
        });
        run(&p, &sched, EngineKind::Effective, 5, &mut hook).unwrap();
        assert!(ok);
    }

    #[test]
    fn snapshot_is_state_after_last_event_before_it() {
        let p = params(200, 0.02, 0.1);
        let sched = RunSchedule::uniform(8.0, 9).unwrap().with_event_log(true);
        let traj = run(&p, &sched, EngineKind::Effective, 11, &mut NoHook).unwrap();
        let log = traj.log.as_ref().unwrap();
        for snap in &traj.snapshots {
            let mut st = log.initial.clone();
            for ev in log.events.iter().take_while(|e| e.time <= snap.time) {
                match ev.kind {
                    EventKind::Mutation { from } => st.apply_mutation(from).unwrap(),
                    EventKind::Replacement { dying, parent } => st.apply_replacement(dying, parent).unwrap(),
                }
            }
            assert_eq!(st.band_counts(), &snap.counts[..]);
            assert_eq!(st.mutation_sum(), snap.mutation_sum);
        }
    }

    #[test]
    fn effective_rate_small_profile_by_enumeration() {
        // {X_0: N-1, X_1: 1}: enumerate the 2x2 joint law of (dying, parent).
        let n = 50u64;
        let p = params(n, 0.01, 0.1);
        let st = PopulationState::from_counts(&[(0, n - 1), (1, 1)]).unwrap();
        let mean = 1.0 / n as f64;
        let w = [1.0 + 0.1 * (0.0 - mean), 1.0 + 0.1 * (1.0 - mean)];
        let x = [(n - 1) as f64, 1.0];
        let big_w = x[0] * w[0] + x[1] * w[1];
        let mut null_mass = 0.0;
        for i in 0..2 {
            for j in 0..2 {
                if i == j {
                    null_mass += (x[i] / n as f64) * (x[j] * w[j] / big_w);
                }
            }
        }
        let fit = st.fitness(0.1);
        let (mutation, replacement) = effective_rates(&st, &p, &fit);
        let nf = n as f64;
        assert!((mutation + replacement - (nf * 1.01 - nf * null_mass)).abs() < 1e-10);
        assert!((replacement - nf * (1.0 - null_mass)).abs() < 1e-10);
    }
}
