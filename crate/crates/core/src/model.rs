//! Population state, fitness weights and per-type event rates.
//!
//! The population is a profile of type counts `X_j`, where the type of an
//! individual is the number of mutations it carries. Counts and the total
//! mutation load are kept as integers so that the mean `M` entering every
//! fitness weight is exact; only the weights themselves are floating point.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("invalid event: {0}")]
    InvalidEvent(String),
    /// Every occupied type has fitness zero, so no parent can be chosen.
    #[error("degenerate population at t = {time}: total fitness is zero")]
    DegeneratePopulation { time: f64 },
}

/// Population size, per-individual mutation rate and selection increment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    n: u64,
    mu: f64,
    s: f64,
}

impl ModelParams {
    /// Requires `N >= 2` and `0 <= mu < s < 1`.
    ///
    /// `mu = 0` is accepted as the mutation-free limit, which is useful for
    /// checking the engines, but has no time scale `a_N`.
    pub fn new(n: u64, mu: f64, s: f64) -> Result<Self, ModelError> {
        if n < 2 {
            return Err(ModelError::InvalidParams(format!("N must be at least 2, got {n}")));
        }
        if !(mu.is_finite() && mu >= 0.0) {
            return Err(ModelError::InvalidParams(format!("mu must be nonnegative, got {mu}")));
        }
        if !(s.is_finite() && s > 0.0 && s < 1.0) {
            return Err(ModelError::InvalidParams(format!("s must lie in (0, 1), got {s}")));
        }
        if mu >= s {
            return Err(ModelError::InvalidParams(format!("mu ({mu}) must be smaller than s ({s})")));
        }
        Ok(Self { n, mu, s })
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn s(&self) -> f64 {
        self.s
    }

    /// Smallest integer count `c` with `c >= s/mu`, i.e. the count of type
    /// `j-1` at which `tau_j` is recorded. `None` when `mu = 0`.
    pub fn establishment_count(&self) -> Option<u64> {
        if self.mu == 0.0 {
            return None;
        }
        let ratio = self.s / self.mu;
        let mut c = ratio.ceil() as u64;
        // ceil of a rounded quotient can land one off; settle it against
        // the floating comparison the threshold is defined by.
        while c > 0 && (c - 1) as f64 >= ratio {
            c -= 1;
        }
        while (c as f64) < ratio {
            c += 1;
        }
        Some(c)
    }
}

/// `M = mutation_sum / N` kept as an exact fraction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MeanMutations {
    pub numer: u128,
    pub denom: u64,
}

impl MeanMutations {
    fn reduced(numer: u128, denom: u64) -> Self {
        let g = gcd(numer, denom as u128);
        if g == 0 {
            return Self { numer: 0, denom: 1 };
        }
        Self { numer: numer / g, denom: (denom as u128 / g) as u64 }
    }

    pub fn to_f64(self) -> f64 {
        self.numer as f64 / self.denom as f64
    }
}

impl fmt::Display for MeanMutations {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.numer, self.denom)
    }
}

fn gcd(mut a: u128, mut b: u128) -> u128 {
    while b != 0 {
        let r = a % b;
        a = b;
        b = r;
    }
    a
}

/// Fitness of a type `j` individual when the population mean is `mean`:
/// `max{0, 1 + s (j - M)}`.
#[inline]
pub fn raw_weight(j: u32, mean: f64, s: f64) -> f64 {
    (1.0 + s * (j as f64 - mean)).max(0.0)
}

/// Population-level fitness quantities derived from one state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Fitness {
    pub mean: f64,
    /// `W = sum_j X_j w_j`; exactly `N` when no occupied type is clamped.
    pub total: f64,
    /// `sum_j X_j^2 w_j`, the mass of self-replacements times `W`.
    pub self_mass: f64,
    /// Some occupied type has weight clamped at zero.
    pub clamped: bool,
}

/// Birth, loss and net growth rates of a single type `j` individual.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TypeRates {
    /// `B_j = (N - X_j) F_j`.
    pub birth: f64,
    /// `D_j = mu + 1 - X_j F_j`.
    pub death: f64,
    /// `G_j = s (j - M) - mu`.
    pub growth: f64,
}

/// Sparse type-count profile with exact mutation bookkeeping.
///
/// Counts are stored densely from type 0 up to the largest type ever seen;
/// all iteration is restricted to the occupied band `[j_min, j_max]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PopulationState {
    n: u64,
    counts: Vec<u64>,
    j_min: u32,
    j_max: u32,
    mutation_sum: u128,
    sum_sq: u128,
    sum_j_sq: u128,
    time: f64,
}

impl PopulationState {
    /// All `n` individuals carry exactly `j` mutations.
    pub fn homogeneous(n: u64, j: u32) -> Self {
        let mut counts = vec![0; j as usize + 1];
        counts[j as usize] = n;
        let n2 = n as u128 * n as u128;
        Self {
            n,
            counts,
            j_min: j,
            j_max: j,
            mutation_sum: j as u128 * n as u128,
            sum_sq: n2,
            sum_j_sq: j as u128 * n2,
            time: 0.0,
        }
    }

    /// Builds a state from `(type, count)` pairs; zero counts are ignored.
    pub fn from_counts(pairs: &[(u32, u64)]) -> Result<Self, ModelError> {
        let occupied: Vec<_> = pairs.iter().copied().filter(|&(_, c)| c > 0).collect();
        let Some(top) = occupied.iter().map(|&(j, _)| j).max() else {
            return Err(ModelError::InvalidParams("population is empty".into()));
        };
        let mut counts = vec![0u64; top as usize + 1];
        for &(j, c) in &occupied {
            counts[j as usize] += c;
        }
        let n: u64 = counts.iter().sum();
        if n < 2 {
            return Err(ModelError::InvalidParams(format!("population size must be at least 2, got {n}")));
        }
        let mut state = Self {
            n,
            counts,
            j_min: 0,
            j_max: top,
            mutation_sum: 0,
            sum_sq: 0,
            sum_j_sq: 0,
            time: 0.0,
        };
        state.j_min = state.counts.iter().position(|&c| c > 0).unwrap() as u32;
        state.recompute_sums();
        Ok(state)
    }

    fn recompute_sums(&mut self) {
        let (mut m, mut q, mut qj) = (0u128, 0u128, 0u128);
        for (j, c) in self.band() {
            let c = c as u128;
            m += j as u128 * c;
            q += c * c;
            qj += j as u128 * c * c;
        }
        self.mutation_sum = m;
        self.sum_sq = q;
        self.sum_j_sq = qj;
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub(crate) fn set_time(&mut self, t: f64) {
        self.time = t;
    }

    pub fn j_min(&self) -> u32 {
        self.j_min
    }

    pub fn j_max(&self) -> u32 {
        self.j_max
    }

    pub fn mutation_sum(&self) -> u128 {
        self.mutation_sum
    }

    #[inline]
    pub fn count(&self, j: u32) -> u64 {
        self.counts.get(j as usize).copied().unwrap_or(0)
    }

    /// Counts over the occupied band, starting at `j_min`.
    pub fn band_counts(&self) -> &[u64] {
        &self.counts[self.j_min as usize..=self.j_max as usize]
    }

    /// `(j, X_j)` over the occupied band; interior zeros included.
    pub fn band(&self) -> impl Iterator<Item = (u32, u64)> + '_ {
        self.band_counts().iter().enumerate().map(move |(i, &c)| (self.j_min + i as u32, c))
    }

    /// Number of individuals with at most `j` mutations.
    pub fn cumulative(&self, j: u32) -> u64 {
        if j < self.j_min {
            return 0;
        }
        let hi = j.min(self.j_max) as usize;
        self.counts[self.j_min as usize..=hi].iter().sum()
    }

    /// Mean number of mutations as an exact fraction.
    pub fn mean_mutations(&self) -> MeanMutations {
        MeanMutations::reduced(self.mutation_sum, self.n)
    }

    #[inline]
    pub fn mean(&self) -> f64 {
        self.mutation_sum as f64 / self.n as f64
    }

    /// `Q = j_max - M`.
    pub fn front_lead(&self) -> f64 {
        let lead = self.j_max as u128 * self.n as u128 - self.mutation_sum;
        lead as f64 / self.n as f64
    }

    /// True when the least-fit occupied type has weight `<= 0`.
    #[inline]
    pub fn is_clamped(&self, s: f64) -> bool {
        // s (M - j_min) >= 1, with M - j_min evaluated exactly.
        let lag = self.mutation_sum - self.j_min as u128 * self.n as u128;
        s * lag as f64 >= self.n as f64
    }

    /// Total and self-replacement fitness mass.
    ///
    /// Without clamping the identity `W = N` holds exactly and `sum X_j^2 w_j`
    /// follows from the maintained integer moments in O(1); otherwise both
    /// are summed over the band.
    pub fn fitness(&self, s: f64) -> Fitness {
        let mean = self.mean();
        if !self.is_clamped(s) {
            let n = self.n as i128;
            let skew = n * self.sum_j_sq as i128 - self.mutation_sum as i128 * self.sum_sq as i128;
            let self_mass = self.sum_sq as f64 + s * (skew as f64 / self.n as f64);
            return Fitness { mean, total: self.n as f64, self_mass, clamped: false };
        }
        let (mut total, mut self_mass) = (0.0, 0.0);
        for (j, c) in self.band() {
            let w = raw_weight(j, mean, s);
            let x = c as f64;
            total += x * w;
            self_mass += x * x * w;
        }
        Fitness { mean, total, self_mass, clamped: true }
    }

    /// Recomputes every maintained quantity from the counts and reports the
    /// first disagreement.
    pub fn check_invariants(&self) -> Result<(), String> {
        let total: u64 = self.counts.iter().sum();
        if total != self.n {
            return Err(format!("sum of counts {total} != N {}", self.n));
        }
        if self.count(self.j_min) == 0 || self.count(self.j_max) == 0 {
            return Err(format!("band ends [{}, {}] not occupied", self.j_min, self.j_max));
        }
        if self.counts[..self.j_min as usize].iter().any(|&c| c > 0)
            || self.counts[self.j_max as usize + 1..].iter().any(|&c| c > 0)
        {
            return Err("occupied type outside the band".into());
        }
        let mut fresh = self.clone();
        fresh.recompute_sums();
        if fresh.mutation_sum != self.mutation_sum {
            return Err(format!("mutation sum {} != recomputed {}", self.mutation_sum, fresh.mutation_sum));
        }
        if fresh.sum_sq != self.sum_sq || fresh.sum_j_sq != self.sum_j_sq {
            return Err("square moments drifted".into());
        }
        Ok(())
    }

    #[inline]
    fn increment(&mut self, j: u32) {
        let idx = j as usize;
        if idx >= self.counts.len() {
            self.counts.resize(idx + 1, 0);
        }
        let c = self.counts[idx] as u128;
        self.counts[idx] += 1;
        let d = 2 * c + 1;
        self.sum_sq += d;
        self.sum_j_sq += j as u128 * d;
        if j > self.j_max {
            self.j_max = j;
        }
        if j < self.j_min {
            self.j_min = j;
        }
    }

    #[inline]
    fn decrement(&mut self, j: u32) {
        let idx = j as usize;
        let c = self.counts[idx] as u128;
        self.counts[idx] -= 1;
        let d = 2 * c - 1;
        self.sum_sq -= d;
        self.sum_j_sq -= j as u128 * d;
        if c == 1 {
            if j == self.j_min {
                while self.counts[self.j_min as usize] == 0 {
                    self.j_min += 1;
                }
            }
            if j == self.j_max {
                while self.counts[self.j_max as usize] == 0 {
                    self.j_max -= 1;
                }
            }
        }
    }

    /// A type `j` individual acquires one more mutation.
    pub fn apply_mutation(&mut self, j: u32) -> Result<(), ModelError> {
        if self.count(j) == 0 {
            return Err(ModelError::InvalidEvent(format!("mutation from unoccupied type {j}")));
        }
        self.apply_mutation_unchecked(j);
        Ok(())
    }

    #[inline]
    pub(crate) fn apply_mutation_unchecked(&mut self, j: u32) {
        // increment first so the band never empties when X_j = N
        self.increment(j + 1);
        self.decrement(j);
        self.mutation_sum += 1;
    }

    /// A type `dying` individual dies and is replaced by the offspring of a
    /// type `parent` individual. Both types must be occupied before the death.
    pub fn apply_replacement(&mut self, dying: u32, parent: u32) -> Result<(), ModelError> {
        if self.count(dying) == 0 || self.count(parent) == 0 {
            return Err(ModelError::InvalidEvent(format!(
                "replacement of type {dying} by type {parent} needs both occupied"
            )));
        }
        self.apply_replacement_unchecked(dying, parent);
        Ok(())
    }

    #[inline]
    pub(crate) fn apply_replacement_unchecked(&mut self, dying: u32, parent: u32) {
        if dying == parent {
            return;
        }
        self.increment(parent);
        self.decrement(dying);
        self.mutation_sum = self.mutation_sum + parent as u128 - dying as u128;
    }
}

/// Probability `F_j` that one particular type `j` individual is chosen as
/// the parent at a death.
pub fn selection_prob(j: u32, state: &PopulationState, s: f64) -> Result<f64, ModelError> {
    let fit = state.fitness(s);
    if !(fit.total > 0.0) {
        return Err(ModelError::DegeneratePopulation { time: state.time() });
    }
    Ok(raw_weight(j, fit.mean, s) / fit.total)
}

pub fn per_type_rates(j: u32, state: &PopulationState, params: &ModelParams) -> Result<TypeRates, ModelError> {
    let f = selection_prob(j, state, params.s())?;
    let n = state.n() as f64;
    let x = state.count(j) as f64;
    Ok(TypeRates {
        birth: (n - x) * f,
        death: params.mu() + 1.0 - x * f,
        growth: params.s() * (j as f64 - state.mean()) - params.mu(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn params_validation() {
        assert!(ModelParams::new(1, 1e-4, 0.05).is_err());
        assert!(ModelParams::new(100, 0.1, 0.05).is_err());
        assert!(ModelParams::new(100, 1e-4, 1.0).is_err());
        assert!(ModelParams::new(100, -1e-4, 0.05).is_err());
        assert!(ModelParams::new(100, 0.0, 0.05).is_ok());
    }

    #[test]
    fn establishment_count_matches_ratio() {
        let p = ModelParams::new(100, 1e-4, 0.05).unwrap();
        assert_eq!(p.establishment_count(), Some(500));
        let p = ModelParams::new(100, 0.03, 0.1).unwrap();
        assert_eq!(p.establishment_count(), Some(4));
        let p = ModelParams::new(100, 0.0, 0.1).unwrap();
        assert_eq!(p.establishment_count(), None);
    }

    #[test]
    fn mean_mutations_examples() {
        let st = PopulationState::from_counts(&[(0, 999), (3, 1)]).unwrap();
        let m = st.mean_mutations();
        assert_eq!((m.numer, m.denom), (3, 1000));
        assert_eq!(m.to_f64(), 0.003);

        let st = PopulationState::homogeneous(1000, 0);
        assert_eq!(st.mean_mutations().to_f64(), 0.0);

        let st = PopulationState::from_counts(&[(2, 5)]).unwrap();
        let m = st.mean_mutations();
        assert_eq!((m.numer, m.denom), (2, 1));
    }

    #[test]
    fn raw_weight_examples() {
        // j - M = -15, s = 0.1
        assert_eq!(raw_weight(0, 15.0, 0.1), 0.0);
        assert_eq!(raw_weight(4, 4.0, 0.3), 1.0);
        assert!(close(raw_weight(5, 3.0, 0.05), 1.1, 1e-15));
    }

    #[test]
    fn selection_prob_unclamped_and_homogeneous() {
        let st = PopulationState::from_counts(&[(1, 10), (2, 10)]).unwrap();
        // M = 1.5; w_1 = 0.95, w_2 = 1.05
        let f1 = selection_prob(1, &st, 0.1).unwrap();
        assert!(close(f1, 0.95 / 20.0, 1e-15));
        let hom = PopulationState::homogeneous(50, 0);
        assert_eq!(selection_prob(0, &hom, 0.1).unwrap(), 1.0 / 50.0);
    }

    #[test]
    fn selection_prob_clamped_profile() {
        let st = PopulationState::from_counts(&[(0, 1), (40, 999)]).unwrap();
        assert!(st.is_clamped(0.1));
        let mean = 39.96;
        // brute-force W over the support
        let w: f64 = st.band().map(|(j, c)| c as f64 * (1.0 + 0.1 * (j as f64 - mean)).max(0.0)).sum();
        assert!(close(w, 999.0 * (1.0 + 0.1 * 0.04), 1e-9));
        assert_eq!(selection_prob(0, &st, 0.1).unwrap(), 0.0);
        let f40 = selection_prob(40, &st, 0.1).unwrap();
        assert!(close(999.0 * f40, 1.0, 1e-12));
    }

    #[test]
    fn per_type_rates_examples() {
        let p = ModelParams::new(1000, 1e-4, 0.05).unwrap();
        // j - M = 2 with M = 1
        let st = PopulationState::from_counts(&[(0, 500), (2, 500)]).unwrap();
        let r = per_type_rates(3, &st, &p).unwrap();
        assert!(close(r.growth, 0.0999, 1e-15));
        assert!(close(r.birth - r.death, r.growth, 1e-12));

        let hom = PopulationState::homogeneous(1000, 0);
        let r = per_type_rates(0, &hom, &p).unwrap();
        assert_eq!(r.birth, 0.0);
        assert!(close(r.death, 1e-4, 1e-15));

        let r = per_type_rates(1, &st, &p).unwrap();
        assert!(close(r.birth - r.death, -1e-4, 1e-12));
    }

    #[test]
    fn replacement_and_mutation_examples() {
        let mut st = PopulationState::from_counts(&[(0, 3), (1, 2)]).unwrap();
        assert_eq!(st.mean(), 0.4);
        st.apply_replacement(0, 1).unwrap();
        assert_eq!(st.band_counts(), &[2, 3]);
        assert_eq!(st.mean(), 0.6);

        let mut st = PopulationState::homogeneous(5, 0);
        st.apply_mutation(0).unwrap();
        assert_eq!(st.band_counts(), &[4, 1]);
        assert_eq!(st.mutation_sum(), 1);

        let mut st = PopulationState::from_counts(&[(0, 3), (1, 2)]).unwrap();
        let before = st.clone();
        st.apply_replacement(1, 1).unwrap();
        assert_eq!(st, before);
    }

    #[test]
    fn invalid_events_rejected() {
        let mut st = PopulationState::homogeneous(5, 0);
        assert!(matches!(st.apply_mutation(1), Err(ModelError::InvalidEvent(_))));
        assert!(matches!(st.apply_replacement(0, 2), Err(ModelError::InvalidEvent(_))));
        assert!(matches!(st.apply_replacement(3, 0), Err(ModelError::InvalidEvent(_))));
    }

    #[test]
    fn band_tracks_extinction_at_both_ends() {
        let mut st = PopulationState::from_counts(&[(0, 1), (1, 3), (2, 1)]).unwrap();
        st.apply_replacement(0, 1).unwrap();
        assert_eq!(st.j_min(), 1);
        st.apply_replacement(2, 1).unwrap();
        assert_eq!(st.j_max(), 1);
        assert_eq!(st.band_counts(), &[5]);
        st.check_invariants().unwrap();
    }

    #[test]
    fn front_lead_is_exact() {
        let st = PopulationState::from_counts(&[(0, 999), (3, 1)]).unwrap();
        assert_eq!(st.front_lead(), 2.997);
    }
}
