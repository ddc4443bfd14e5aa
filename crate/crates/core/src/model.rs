//! Domain types shared by the engine, the generators, the statistics and the
//! experiment controller.
//!
//! All times are hours stored as `f64`.

use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("sequence has no spans")]
    EmptySequence,
    #[error("span {index} has non-positive or non-finite duration {value}")]
    BadDuration { index: usize, value: f64 },
    #[error(
        "arrival times must be finite, strictly increasing and below the horizon (index {index})"
    )]
    BadArrival { index: usize },
    #[error("horizon must be positive and finite, got {0}")]
    BadHorizon(f64),
    #[error("mean inter-arrival time must be positive and finite, got {0}")]
    BadInterarrival(f64),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

/// State of the tool during one span of the calendar.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum ToolState {
    Up,
    Down,
}

impl ToolState {
    pub fn flip(self) -> Self {
        match self {
            ToolState::Up => ToolState::Down,
            ToolState::Down => ToolState::Up,
        }
    }
}

impl fmt::Display for ToolState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ToolState::Up => "UP",
            ToolState::Down => "DOWN",
        })
    }
}

/// Correctly rounded sum of `values` (Shewchuk's partials algorithm, as in
/// Python's `math.fsum`). The result is the exact sum rounded once, so it
/// does not depend on the order of the inputs.
pub(crate) fn exact_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut partials: Vec<f64> = Vec::new();
    for mut x in values {
        let mut i = 0;
        for j in 0..partials.len() {
            let mut y = partials[j];
            if x.abs() < y.abs() {
                std::mem::swap(&mut x, &mut y);
            }
            let hi = x + y;
            let lo = y - (hi - x);
            if lo != 0.0 {
                partials[i] = lo;
                i += 1;
            }
            x = hi;
        }
        partials.truncate(i);
        partials.push(x);
    }
    let Some(mut hi) = partials.pop() else {
        return 0.0;
    };
    let mut lo = 0.0;
    while let Some(y) = partials.pop() {
        let x = hi;
        hi = x + y;
        lo = y - (hi - x);
        if lo != 0.0 {
            break;
        }
    }
    // half-way case: round toward the sign of the remaining partials
    if let Some(&next) = partials.last() {
        if (lo < 0.0 && next < 0.0) || (lo > 0.0 && next > 0.0) {
            let y = lo * 2.0;
            let x = hi + y;
            if y == x - hi {
                hi = x;
            }
        }
    }
    hi
}

/// Alternating up/down durations of one tool, starting in `initial_state`.
///
/// Totals are correctly rounded sums, so any permutation of the spans keeps
/// `total_duration` and `availability` bit-identical.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSequence", into = "RawSequence")]
pub struct UpDownSequence {
    initial_state: ToolState,
    durations: Vec<f64>,
    total_duration: f64,
    up_duration: f64,
}

#[derive(Serialize, Deserialize)]
struct RawSequence {
    initial_state: ToolState,
    durations: Vec<f64>,
}

impl TryFrom<RawSequence> for UpDownSequence {
    type Error = ModelError;

    fn try_from(raw: RawSequence) -> Result<Self, Self::Error> {
        UpDownSequence::new(raw.initial_state, raw.durations)
    }
}

impl From<UpDownSequence> for RawSequence {
    fn from(seq: UpDownSequence) -> Self {
        RawSequence {
            initial_state: seq.initial_state,
            durations: seq.durations,
        }
    }
}

impl UpDownSequence {
    pub fn new(initial_state: ToolState, durations: Vec<f64>) -> Result<Self, ModelError> {
        if durations.is_empty() {
            return Err(ModelError::EmptySequence);
        }
        if let Some((index, &value)) = durations
            .iter()
            .enumerate()
            .find(|(_, d)| !(d.is_finite() && **d > 0.0))
        {
            return Err(ModelError::BadDuration { index, value });
        }
        let total_duration = exact_sum(durations.iter().copied());
        let up_duration = exact_sum(
            durations
                .iter()
                .enumerate()
                .filter(|(k, _)| state_at(initial_state, *k) == ToolState::Up)
                .map(|(_, d)| *d),
        );
        Ok(Self {
            initial_state,
            durations,
            total_duration,
            up_duration,
        })
    }

    /// A calendar that is UP for the whole horizon.
    pub fn always_up(horizon: f64) -> Result<Self, ModelError> {
        Self::new(ToolState::Up, vec![horizon])
    }

    pub fn initial_state(&self) -> ToolState {
        self.initial_state
    }

    pub fn durations(&self) -> &[f64] {
        &self.durations
    }

    pub fn len(&self) -> usize {
        self.durations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.durations.is_empty()
    }

    pub fn total_duration(&self) -> f64 {
        self.total_duration
    }

    /// Fraction of the horizon spent UP.
    pub fn availability(&self) -> f64 {
        self.up_duration / self.total_duration
    }

    /// `(state, duration)` for every span, in calendar order.
    pub fn spans(&self) -> impl Iterator<Item = (ToolState, f64)> + '_ {
        self.durations
            .iter()
            .enumerate()
            .map(move |(k, d)| (state_at(self.initial_state, k), *d))
    }

    pub fn up_durations(&self) -> Vec<f64> {
        self.durations_in(ToolState::Up)
    }

    pub fn down_durations(&self) -> Vec<f64> {
        self.durations_in(ToolState::Down)
    }

    fn durations_in(&self, state: ToolState) -> Vec<f64> {
        self.spans()
            .filter(|(s, _)| *s == state)
            .map(|(_, d)| d)
            .collect()
    }

    pub fn state_of_span(&self, index: usize) -> ToolState {
        state_at(self.initial_state, index)
    }

    /// Rebuilds the sequence from its up and down durations, interleaving them
    /// in the same alternation pattern as `self`.
    pub(crate) fn interleave(
        initial_state: ToolState,
        ups: &[f64],
        downs: &[f64],
    ) -> Result<Self, ModelError> {
        let mut durations = Vec::with_capacity(ups.len() + downs.len());
        let (first, second) = match initial_state {
            ToolState::Up => (ups, downs),
            ToolState::Down => (downs, ups),
        };
        for k in 0..first.len().max(second.len()) {
            if let Some(d) = first.get(k) {
                durations.push(*d);
            }
            if let Some(d) = second.get(k) {
                durations.push(*d);
            }
        }
        Self::new(initial_state, durations)
    }
}

fn state_at(initial: ToolState, index: usize) -> ToolState {
    if index.is_multiple_of(2) {
        initial
    } else {
        initial.flip()
    }
}

/// One seeded draw of arrival times over `[0, horizon)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrivalScenario {
    pub scenario_id: u32,
    /// `None` when the times were supplied explicitly rather than generated.
    pub seed: Option<u64>,
    pub mean_interarrival: Option<f64>,
    pub horizon: f64,
    arrival_times: Vec<f64>,
}

impl ArrivalScenario {
    /// Exponential inter-arrival times with the given mean, truncated at the
    /// horizon. Regenerating from the same arguments reproduces the times
    /// exactly.
    pub fn generate(
        scenario_id: u32,
        seed: u64,
        mean_interarrival: f64,
        horizon: f64,
    ) -> Result<Self, ModelError> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(ModelError::BadHorizon(horizon));
        }
        if !(mean_interarrival.is_finite() && mean_interarrival > 0.0) {
            return Err(ModelError::BadInterarrival(mean_interarrival));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let gap = Exp::new(1.0 / mean_interarrival).expect("positive rate");
        let expected = (horizon / mean_interarrival).ceil() as usize;
        let mut times = Vec::with_capacity(expected + expected / 8 + 4);
        let mut t = 0.0f64;
        loop {
            t += gap.sample(&mut rng);
            if t >= horizon {
                break;
            }
            // zero-length gaps would break strict monotonicity
            if times.last().is_some_and(|last| t <= *last) {
                continue;
            }
            times.push(t);
        }
        Ok(Self {
            scenario_id,
            seed: Some(seed),
            mean_interarrival: Some(mean_interarrival),
            horizon,
            arrival_times: times,
        })
    }

    pub fn from_times(scenario_id: u32, horizon: f64, times: Vec<f64>) -> Result<Self, ModelError> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(ModelError::BadHorizon(horizon));
        }
        for (index, t) in times.iter().enumerate() {
            let ordered = index == 0 || *t > times[index - 1];
            if !(t.is_finite() && *t >= 0.0 && *t < horizon && ordered) {
                return Err(ModelError::BadArrival { index });
            }
        }
        Ok(Self {
            scenario_id,
            seed: None,
            mean_interarrival: None,
            horizon,
            arrival_times: times,
        })
    }

    pub fn arrival_times(&self) -> &[f64] {
        &self.arrival_times
    }

    pub fn len(&self) -> usize {
        self.arrival_times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.arrival_times.is_empty()
    }
}

/// How permuted sequences are built from the historical one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShuffleMode {
    /// UP durations and DOWN durations are permuted independently.
    #[default]
    Independent,
    /// Consecutive (first, second) span pairs are permuted as units.
    Paired,
}

/// Capacity that the target utilization is measured against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UtilizationBasis {
    /// `u = λ·p / A`: fraction of the UP time consumed by arriving work.
    #[default]
    Uptime,
    /// `u = λ·p`: fraction of wall-clock time.
    Wallclock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub process_time: f64,
    pub utilization: f64,
    pub max_budget: u64,
    pub min_sequences: usize,
    pub min_scenarios: usize,
    /// Multiplier of σ in the i.i.d. band (default 2).
    pub alpha_scale: f64,
    /// Significance level of the per-scenario t-tests.
    pub ttest_alpha: f64,
    pub shuffle_mode: ShuffleMode,
    pub utilization_basis: UtilizationBasis,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            process_time: 1.0,
            utilization: 0.8,
            max_budget: 10_000,
            min_sequences: 20,
            min_scenarios: 20,
            alpha_scale: 2.0,
            ttest_alpha: 0.05,
            shuffle_mode: ShuffleMode::Independent,
            utilization_basis: UtilizationBasis::Uptime,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |msg: String| Err(ModelError::InvalidConfig(msg));
        if !(self.process_time.is_finite() && self.process_time > 0.0) {
            return bad(format!(
                "process_time must be > 0, got {}",
                self.process_time
            ));
        }
        if !(self.utilization > 0.0 && self.utilization < 1.0) {
            return bad(format!(
                "utilization must be in (0,1), got {}",
                self.utilization
            ));
        }
        if self.min_sequences < 2 || self.min_scenarios < 2 {
            return bad("minimum grid must be at least 2x2".into());
        }
        if !(self.alpha_scale.is_finite() && self.alpha_scale > 0.0) {
            return bad(format!("alpha_scale must be > 0, got {}", self.alpha_scale));
        }
        if !(self.ttest_alpha > 0.0 && self.ttest_alpha < 1.0) {
            return bad(format!(
                "ttest_alpha must be in (0,1), got {}",
                self.ttest_alpha
            ));
        }
        let initial = (self.min_sequences as u64 + 1) * self.min_scenarios as u64;
        if initial > self.max_budget {
            return bad(format!(
                "initial grid needs {initial} runs but max_budget is {}",
                self.max_budget
            ));
        }
        Ok(())
    }
}

/// Outcome of one simulation: sequence `i` against arrival scenario `j`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    /// 0 is the historical sequence; permutations are numbered from 1.
    pub sequence_id: u32,
    pub scenario_id: u32,
    pub mean_cycle_time: f64,
    pub agent_count: usize,
}

/// Closed interval `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub fn centered(center: f64, half_width: f64) -> Self {
        Self {
            lo: center - half_width,
            hi: center + half_width,
        }
    }

    pub fn is_well_formed(&self) -> bool {
        !self.lo.is_nan() && !self.hi.is_nan() && self.lo <= self.hi
    }

    pub fn contains_interval(&self, other: &Interval) -> bool {
        self.lo <= other.lo && other.hi <= self.hi
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn scale(&self, factor: f64) -> Self {
        Self {
            lo: self.lo * factor,
            hi: self.hi * factor,
        }
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}]", self.lo, self.hi)
    }
}

/// Effect of the historical sequence and the band of i.i.d. effects, with
/// the uncertainty intervals around both.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectEstimate {
    pub ct0_bar: f64,
    pub sigma0: f64,
    pub m: usize,
    pub mu: f64,
    pub sigma: f64,
    pub n: usize,
    pub ct0_interval: Interval,
    pub i95: Interval,
    pub i95_inner: Interval,
    pub i95_outer: Interval,
}

impl EffectEstimate {
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            ct0_bar: self.ct0_bar * factor,
            sigma0: self.sigma0 * factor,
            m: self.m,
            mu: self.mu * factor,
            sigma: self.sigma * factor,
            n: self.n,
            ct0_interval: self.ct0_interval.scale(factor),
            i95: self.i95.scale(factor),
            i95_inner: self.i95_inner.scale(factor),
            i95_outer: self.i95_outer.scale(factor),
        }
    }

    /// Band shown next to the historical effect: the outer limit when the
    /// effect falls outside it, the inner limit otherwise.
    pub fn i95_star(&self) -> Interval {
        if self.i95_outer.contains(self.ct0_bar) {
            self.i95_inner
        } else {
            self.i95_outer
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Verdict {
    SignificantNegative,
    NotSignificant,
    SignificantPositive,
    /// The uncertainty regions still overlap; only reported once the
    /// simulation budget is spent.
    Undecided,
}

impl Verdict {
    pub fn is_significant(self) -> bool {
        matches!(
            self,
            Verdict::SignificantNegative | Verdict::SignificantPositive
        )
    }

    /// YES / NO / NA, as in a results table.
    pub fn short(self) -> &'static str {
        match self {
            Verdict::SignificantNegative | Verdict::SignificantPositive => "YES",
            Verdict::NotSignificant => "NO",
            Verdict::Undecided => "NA",
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::SignificantNegative => "SIGNIFICANT_NEGATIVE",
            Verdict::NotSignificant => "NOT_SIGNIFICANT",
            Verdict::SignificantPositive => "SIGNIFICANT_POSITIVE",
            Verdict::Undecided => "UNDECIDED",
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Verdict {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "SIGNIFICANT_NEGATIVE" => Ok(Verdict::SignificantNegative),
            "NOT_SIGNIFICANT" => Ok(Verdict::NotSignificant),
            "SIGNIFICANT_POSITIVE" => Ok(Verdict::SignificantPositive),
            "UNDECIDED" => Ok(Verdict::Undecided),
            other => Err(format!("unknown verdict `{other}`")),
        }
    }
}

/// Per-scenario t-test counts: historical run smaller / not different /
/// higher than the permuted population on the same scenario.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TTestTriplet {
    pub lower: usize,
    pub nondiff: usize,
    pub higher: usize,
}

impl TTestTriplet {
    pub fn total(&self) -> usize {
        self.lower + self.nondiff + self.higher
    }
}

impl fmt::Display for TTestTriplet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}-{}-{})", self.lower, self.nondiff, self.higher)
    }
}

/// Values rescaled so that μ = 100.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizedView {
    pub ct0: f64,
    pub delta_pct: f64,
    pub i95_star: Interval,
    pub ct0_interval: Interval,
}

impl NormalizedView {
    pub fn from_effect(effect: &EffectEstimate) -> Option<Self> {
        if !(effect.mu > 0.0 && effect.mu.is_finite()) {
            return None;
        }
        let factor = 100.0 / effect.mu;
        let ct0 = effect.ct0_bar * factor;
        Some(Self {
            ct0,
            delta_pct: ct0 - 100.0,
            i95_star: effect.i95_star().scale(factor),
            ct0_interval: effect.ct0_interval.scale(factor),
        })
    }
}

/// Seeds and derived inputs needed to reproduce a report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedEcho {
    pub master_seed: u64,
    pub mean_interarrival: f64,
    pub horizon: f64,
    pub availability: f64,
    pub scenario_seeds: Vec<u64>,
    pub sequence_seeds: Vec<u64>,
    /// SHA-256 over every arrival time of every scenario, in scenario order.
    pub scenario_fingerprint: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub effect: EffectEstimate,
    pub verdict: Verdict,
    pub triplet: TTestTriplet,
    pub normalized: NormalizedView,
    pub runs_used: u64,
    pub config: SimConfig,
    pub seeds: SeedEcho,
    pub caveat: String,
}

impl ExperimentReport {
    /// One results-table row: `CT0  Δ  I95*  [CT0]  s  triplet  verdict`.
    pub fn table_row(&self, label: &str) -> String {
        let nv = &self.normalized;
        format!(
            "{label}\t{:.0}\t{:+.0}%\t{:.0}-{:.0}\t{:.0}-{:.0}\t{}\t{}\t{}",
            nv.ct0,
            nv.delta_pct,
            nv.i95_star.lo,
            nv.i95_star.hi,
            nv.ct0_interval.lo,
            nv.ct0_interval.hi,
            self.verdict.short(),
            self.triplet,
            self.verdict
        )
    }
}
