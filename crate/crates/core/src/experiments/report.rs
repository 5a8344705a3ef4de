//! Verification targets and the JSON report.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::compare::{self, CompareError};
use super::config::{ConfigError, ExperimentConfig, Target};
use super::ensemble::{run_ensemble, run_twin_ensemble, Ensemble, ReplicateSummary};
use crate::engine::EngineKind;
use crate::observables;
use crate::renewal::{solve_q, TheoryCurves};
use crate::theory::{self, Predictions, Scales};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Compare(#[from] CompareError),
    #[error("cannot write output: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetReport {
    pub target: Target,
    pub passed: bool,
    /// The pass rule in words.
    pub criterion: String,
    pub detail: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: u32,
    pub code_version: String,
    pub config: ExperimentConfig,
    pub master_seed: u64,
    pub seeds: Vec<u64>,
    pub t_end: f64,
    pub scales: Option<Scales>,
    pub predictions: Option<Predictions>,
    pub replicates: Vec<ReplicateSummary>,
    pub targets: Vec<TargetReport>,
}

impl Report {
    pub fn passed(&self) -> bool {
        self.targets.iter().all(|t| t.passed)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// The ensemble of a config plus, lazily, the companion ensembles that
/// some targets need.
pub struct Session {
    pub base: Ensemble,
    by_n: BTreeMap<u64, Ensemble>,
    curves: Option<TheoryCurves>,
}

fn to_value<T: Serialize>(v: &T) -> serde_json::Value {
    serde_json::to_value(v).expect("statistics serialize")
}

impl Session {
    pub fn new(config: &ExperimentConfig) -> Result<Self, ExperimentError> {
        Ok(Self::from_ensemble(run_ensemble(config)?))
    }

    pub fn from_ensemble(base: Ensemble) -> Self {
        Self { base, by_n: BTreeMap::new(), curves: None }
    }

    fn config(&self) -> &ExperimentConfig {
        &self.base.config
    }

    fn scales_for(config: &ExperimentConfig) -> Result<Scales, ExperimentError> {
        theory::scales(&config.params()?)
            .map_err(|_| ConfigError::Invalid("comparison targets need 0 < mu < s".into()).into())
    }

    fn curves(&mut self) -> Result<&TheoryCurves, ExperimentError> {
        if self.curves.is_none() {
            let v = &self.config().verify;
            let mut t_max = v.probes.iter().copied().fold(v.profile_time, f64::max);
            t_max = t_max.max(self.config().run.t_mult) + 1.0;
            let curves = solve_q(v.h, t_max).map_err(|e| ConfigError::Invalid(e.to_string()))?;
            self.curves = Some(curves);
        }
        Ok(self.curves.as_ref().expect("just filled"))
    }

    /// Ensembles for every population size of the trend checks, in
    /// increasing `N`; just the base ensemble when no sizes are configured.
    fn trend_ensembles(&mut self) -> Result<Vec<&Ensemble>, ExperimentError> {
        let base_n = self.config().model.n;
        let ns: Vec<u64> = self.config().verify.n_values.clone();
        for &n in &ns {
            if n != base_n && !self.by_n.contains_key(&n) {
                let e = run_ensemble(&self.config().with_n(n))?;
                self.by_n.insert(n, e);
            }
        }
        let mut sizes = ns;
        if sizes.is_empty() {
            sizes.push(base_n);
        }
        sizes.sort_unstable();
        sizes.dedup();
        Ok(sizes.iter().map(|n| if *n == base_n { &self.base } else { &self.by_n[n] }).collect())
    }

    pub fn evaluate(&mut self, target: Target) -> Result<TargetReport, ExperimentError> {
        match target {
            Target::Theorem1 | Target::Theorem2 => self.sup_norm_target(target),
            Target::Theorem3 => self.theorem3_target(),
            Target::Spacings => self.spacings_target(),
            Target::Martingale => self.martingale_target(),
            Target::Engines => self.engines_target(),
        }
    }

    fn sup_norm_target(&mut self, target: Target) -> Result<TargetReport, ExperimentError> {
        let probes = self.config().verify.probes.clone();
        self.curves()?;
        let curves = self.curves.take().expect("filled above");
        let result = (|| {
            let mut rows = Vec::new();
            let mut medians = Vec::new();
            let mut finite = true;
            for e in self.trend_ensembles()? {
                let sc = Self::scales_for(&e.config)?;
                let st = if target == Target::Theorem1 {
                    compare::compare_theorem1(e.trajectories(), &sc, &curves, &probes)?
                } else {
                    compare::compare_theorem2(e.trajectories(), &sc, &curves, &probes)?
                };
                finite &= st.per_replicate.iter().all(|v| v.is_finite());
                medians.push(st.summary.median);
                rows.push(serde_json::json!({ "N": e.config.model.n, "statistic": to_value(&st) }));
            }
            let (passed, criterion) = if medians.len() > 1 {
                (finite && compare::strictly_decreasing(&medians), "median sup-norm strictly decreasing in N")
            } else {
                (finite, "sup-norm statistic finite for every replicate")
            };
            Ok(TargetReport { target, passed, criterion: criterion.into(), detail: serde_json::json!({ "by_N": rows, "medians": medians }) })
        })();
        self.curves = Some(curves);
        result
    }

    fn theorem3_target(&mut self) -> Result<TargetReport, ExperimentError> {
        let sc = Self::scales_for(self.config())?;
        let v = self.config().verify.clone();
        self.curves()?;
        let curves = self.curves.as_ref().expect("filled above");
        let st = compare::compare_theorem3(self.base.trajectories(), &sc, curves, v.profile_time, v.ell_max, v.min_count)?;
        let sign_ok = st.negative.is_some_and(|p| p.fraction >= v.curvature_sign_fraction);
        let ratio_ok = st.median_ratio >= 1.0 / v.curvature_factor && st.median_ratio <= v.curvature_factor;
        Ok(TargetReport {
            target: Target::Theorem3,
            passed: sign_ok && ratio_ok,
            criterion: format!(
                "curvature negative in at least {} of replicates and median within a factor {} of the prediction",
                v.curvature_sign_fraction, v.curvature_factor
            ),
            detail: to_value(&st),
        })
    }

    fn spacings_target(&mut self) -> Result<TargetReport, ExperimentError> {
        let threshold = self.config().verify.spacing_fraction;
        let mut rows = Vec::new();
        let mut fractions = Vec::new();
        let mut last = None;
        for e in self.trend_ensembles()? {
            let sc = Self::scales_for(&e.config)?;
            let st = compare::compare_spacings(e.trajectories(), &sc);
            let f = st.within.map(|p| p.fraction);
            fractions.push(f.unwrap_or(f64::NAN));
            last = f;
            rows.push(serde_json::json!({ "N": e.config.model.n, "statistic": to_value(&st) }));
        }
        let trend_ok = fractions.len() < 2 || compare::nondecreasing(&fractions);
        Ok(TargetReport {
            target: Target::Spacings,
            passed: last.is_some_and(|f| f >= threshold) && trend_ok,
            criterion: format!("at largest N at least {threshold} of gaps within bounds; share nondecreasing in N"),
            detail: serde_json::json!({ "by_N": rows, "fractions": fractions }),
        })
    }

    fn martingale_target(&mut self) -> Result<TargetReport, ExperimentError> {
        let v = &self.config().verify;
        let t_end = self.base.t_end;
        let times: Vec<f64> = v.martingale_times.iter().copied().filter(|&t| t <= t_end).collect();
        let cells = compare::compare_martingale(self.base.trajectories(), &v.martingale_types, &times)?;
        Ok(TargetReport {
            target: Target::Martingale,
            passed: !cells.is_empty() && cells.iter().all(|c| c.z_ok && c.y_ok),
            criterion: "|mean Z_j(t)| <= 3 SE and mean Y_j(t) <= Y_j(0) + 3 SE for every cell".into(),
            detail: to_value(&cells),
        })
    }

    fn engines_target(&mut self) -> Result<TargetReport, ExperimentError> {
        let other = match self.config().run.engine {
            EngineKind::Effective => EngineKind::Faithful,
            EngineKind::Faithful => EngineKind::Effective,
        };
        let twin = run_twin_ensemble(self.config(), other)?;
        let st = compare::compare_engines(self.base.trajectories(), twin.trajectories());
        let alpha = self.config().verify.alpha;
        Ok(TargetReport {
            target: Target::Engines,
            passed: st.test.p_value >= alpha,
            criterion: format!("chi-square homogeneity of (X_0 decile, j_max) not rejected at p = {alpha}"),
            detail: to_value(&st),
        })
    }

    pub fn report(&mut self, targets: &[Target]) -> Result<Report, ExperimentError> {
        let mut reports = Vec::with_capacity(targets.len());
        for &t in targets {
            reports.push(self.evaluate(t)?);
        }
        let params = self.base.params;
        Ok(Report {
            schema_version: SCHEMA_VERSION,
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            config: self.config().clone(),
            master_seed: self.config().run.seed,
            seeds: self.base.replicates.iter().map(|r| r.seed).collect(),
            t_end: self.base.t_end,
            scales: theory::scales(&params).ok(),
            predictions: theory::predictions(&params).ok(),
            replicates: self.base.summaries(),
            targets: reports,
        })
    }
}

/// Writes `wave.csv` and `tau.csv` for every replicate: directly into `dir`
/// for a single replicate, otherwise into `dir/replicate_NNNN`.
pub fn write_trajectories(ensemble: &Ensemble, dir: &Path) -> Result<(), ExperimentError> {
    // without mutation there is no time scale; R then counts nothing
    let sc = theory::scales(&ensemble.params).unwrap_or(Scales {
        a_n: f64::INFINITY,
        k_n: 0.0,
        k_n_minus: 0.0,
        k_n_plus: 0.0,
        k_star: 0,
        t_star: 0.0,
        assumptions: theory::AssumptionRatios { a1: 0.0, a2: 0.0, a3: 0.0 },
    });
    std::fs::create_dir_all(dir)?;
    let single = ensemble.replicates.len() == 1;
    for r in &ensemble.replicates {
        let sub = if single { dir.to_path_buf() } else { dir.join(format!("replicate_{:04}", r.index)) };
        std::fs::create_dir_all(&sub)?;
        let rec = observables::wave_observables(&r.trajectory, &sc, &[]).map_err(CompareError::from)?;
        let wave = std::io::BufWriter::new(std::fs::File::create(sub.join("wave.csv"))?);
        observables::write_wave_csv(&rec.rows, wave)?;
        let tau = std::io::BufWriter::new(std::fs::File::create(sub.join("tau.csv"))?);
        observables::write_tau_csv(&rec.tau, tau)?;
    }
    Ok(())
}
