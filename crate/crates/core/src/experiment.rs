//! Orchestration of one test: the (sequences × scenarios) simulation grid with
//! common random numbers, adaptive growth of the grid until the verdict is
//! decisive or the budget is spent, and utilization sweeps.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{simulate_on, Calendar, EngineError};
use crate::model::{
    ArrivalScenario, EffectEstimate, ExperimentReport, Interval, ModelError, NormalizedView,
    SeedEcho, SimConfig, UpDownSequence, UtilizationBasis, Verdict,
};
use crate::seeds::{derive_seed, fingerprint, TAG_ARRIVAL, TAG_PERMUTATION, TAG_RATE};
use crate::sequences::shuffle_with;
use crate::stats::{self, StatsError};

pub const GAUSSIAN_CAVEAT: &str = "mean cycle times are assumed Gaussian across sequences and \
scenarios; no normality test is performed";

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("sequence has zero availability; no utilization can be reached")]
    ZeroAvailability,
    #[error("utilization must be in (0,1), got {0}")]
    InvalidUtilization(f64),
    #[error("could not build worker pool: {0}")]
    Pool(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Stats(#[from] StatsError),
}

/// Mean inter-arrival time that loads the tool at utilization `u`.
///
/// On the uptime basis `u = λ·p / A`, so the result is `p / (u·A)`; on the
/// wall-clock basis it is `p / u`.
pub fn interarrival_for_utilization(
    u: f64,
    seq: &UpDownSequence,
    process_time: f64,
    basis: UtilizationBasis,
) -> Result<f64, ExperimentError> {
    if !(u > 0.0 && u < 1.0) {
        return Err(ExperimentError::InvalidUtilization(u));
    }
    match basis {
        UtilizationBasis::Uptime => {
            let a = seq.availability();
            if a <= 0.0 {
                return Err(ExperimentError::ZeroAvailability);
            }
            Ok(process_time / (u * a))
        }
        UtilizationBasis::Wallclock => Ok(process_time / u),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BudgetState {
    /// Permuted sequences (excluding the historical one).
    pub n: usize,
    /// Arrival scenarios.
    pub m: usize,
    pub runs_used: u64,
    pub max_budget: u64,
}

impl BudgetState {
    pub fn new(n: usize, m: usize, max_budget: u64) -> Self {
        Self {
            n,
            m,
            runs_used: ((n + 1) * m) as u64,
            max_budget,
        }
    }

    pub fn remaining(&self) -> u64 {
        self.max_budget.saturating_sub(self.runs_used)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum BudgetAction {
    /// One more arrival scenario, simulated on every sequence: costs `n + 1`.
    AddScenario,
    /// One more permuted sequence, simulated on every scenario: costs `m`.
    AddSequence,
    Stop,
}

/// Width reduction of the uncertainty regions per simulation run, for each
/// way of growing the grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BudgetGains {
    pub scenario_per_run: f64,
    pub sequence_per_run: f64,
}

pub fn budget_gains(state: &BudgetState, sigma: f64, sigma0: f64, k: f64) -> BudgetGains {
    let m = state.m as f64;
    let gain_scenario = 2.0 * k * sigma0 * (1.0 / m.sqrt() - 1.0 / (m + 1.0).sqrt());
    let gain_sequence = 2.0
        * (stats::band_uncertainty(sigma, state.n, k)
            - stats::band_uncertainty(sigma, state.n + 1, k));
    BudgetGains {
        scenario_per_run: gain_scenario / (state.n + 1) as f64,
        sequence_per_run: gain_sequence / state.m as f64,
    }
}

/// Picks the affordable grid extension with the larger uncertainty reduction
/// per run; ties go to a new sequence.
pub fn next_budget_action(state: &BudgetState, sigma: f64, sigma0: f64, k: f64) -> BudgetAction {
    let remaining = state.remaining();
    let scenario_cost = (state.n + 1) as u64;
    let sequence_cost = state.m as u64;
    let can_scenario = scenario_cost <= remaining;
    let can_sequence = sequence_cost <= remaining;
    match (can_scenario, can_sequence) {
        (false, false) => BudgetAction::Stop,
        (true, false) => BudgetAction::AddScenario,
        (false, true) => BudgetAction::AddSequence,
        (true, true) => {
            let g = budget_gains(state, sigma, sigma0, k);
            if g.scenario_per_run > g.sequence_per_run {
                BudgetAction::AddScenario
            } else {
                BudgetAction::AddSequence
            }
        }
    }
}

/// Progress snapshot passed to observers after every grid step.
#[derive(Debug, Clone, Copy)]
pub struct Progress {
    pub runs_used: u64,
    pub max_budget: u64,
    pub n: usize,
    pub m: usize,
    pub verdict: Verdict,
}

type ProgressFn = dyn Fn(&Progress) + Send + Sync;

/// Runs experiments, optionally on a bounded worker pool.
///
/// Results are keyed by `(sequence, scenario)` and reduced in a fixed order,
/// so reports do not depend on the number of workers.
#[derive(Default)]
pub struct Runner {
    jobs: Option<usize>,
    progress: Option<Box<ProgressFn>>,
}

impl Runner {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn jobs(mut self, jobs: usize) -> Self {
        self.jobs = Some(jobs.max(1));
        self
    }

    pub fn on_progress(mut self, f: impl Fn(&Progress) + Send + Sync + 'static) -> Self {
        self.progress = Some(Box::new(f));
        self
    }

    fn in_pool<T: Send>(&self, work: impl FnOnce() -> T + Send) -> Result<T, ExperimentError> {
        match self.jobs {
            None => Ok(work()),
            Some(jobs) => {
                let pool = rayon::ThreadPoolBuilder::new()
                    .num_threads(jobs)
                    .build()
                    .map_err(|e| ExperimentError::Pool(e.to_string()))?;
                Ok(pool.install(work))
            }
        }
    }

    pub fn run(
        &self,
        s0: &UpDownSequence,
        config: &SimConfig,
        master_seed: u64,
    ) -> Result<ExperimentReport, ExperimentError> {
        config.validate()?;
        let mean_interarrival = interarrival_for_utilization(
            config.utilization,
            s0,
            config.process_time,
            config.utilization_basis,
        )?;
        self.in_pool(|| {
            let mut grid = Grid::new(s0, config, master_seed, mean_interarrival)?;
            grid.extend_scenarios(config.min_scenarios)?;
            grid.extend_sequences(config.min_sequences)?;
            loop {
                let est = grid.estimate(config.alpha_scale)?;
                let verdict = stats::classify(est.ct0_interval, est.i95_inner, est.i95_outer)?;
                let state = grid.budget(config.max_budget);
                if let Some(cb) = &self.progress {
                    cb(&Progress {
                        runs_used: state.runs_used,
                        max_budget: state.max_budget,
                        n: state.n,
                        m: state.m,
                        verdict,
                    });
                }
                if verdict != Verdict::Undecided {
                    return grid.report(est, verdict, config, master_seed, mean_interarrival);
                }
                match next_budget_action(&state, est.sigma, est.sigma0, config.alpha_scale) {
                    BudgetAction::AddScenario => grid.extend_scenarios(1)?,
                    BudgetAction::AddSequence => grid.extend_sequences(1)?,
                    BudgetAction::Stop => {
                        return grid.report(est, verdict, config, master_seed, mean_interarrival)
                    }
                }
            }
        })?
    }

    /// One experiment per utilization rate, each with its own derived seed.
    pub fn sweep(
        &self,
        s0: &UpDownSequence,
        rates: &[f64],
        config: &SimConfig,
        master_seed: u64,
    ) -> Result<Vec<ExperimentReport>, ExperimentError> {
        if let Some(bad) = rates.iter().find(|u| !(**u > 0.0 && **u < 1.0)) {
            return Err(ExperimentError::InvalidUtilization(*bad));
        }
        rates
            .iter()
            .enumerate()
            .map(|(k, &u)| {
                let cfg = SimConfig {
                    utilization: u,
                    ..config.clone()
                };
                self.run(s0, &cfg, sweep_seed(master_seed, k))
            })
            .collect()
    }
}

/// Seed of the `index`-th rate of a sweep.
pub fn sweep_seed(master_seed: u64, index: usize) -> u64 {
    derive_seed(master_seed, TAG_RATE, index as u64)
}

pub fn run_experiment(
    s0: &UpDownSequence,
    config: &SimConfig,
    master_seed: u64,
) -> Result<ExperimentReport, ExperimentError> {
    Runner::new().run(s0, config, master_seed)
}

pub fn sweep(
    s0: &UpDownSequence,
    rates: &[f64],
    config: &SimConfig,
    master_seed: u64,
) -> Result<Vec<ExperimentReport>, ExperimentError> {
    Runner::new().sweep(s0, rates, config, master_seed)
}

/// Default sweep rates 0.1, 0.2, …, 0.9.
pub fn default_rates() -> Vec<f64> {
    (1..=9).map(|k| k as f64 / 10.0).collect()
}

/// One point of an operational curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub utilization: f64,
    pub mu: f64,
    pub i95: Interval,
    pub ct0_bar: f64,
    pub ct0_interval: Interval,
    pub verdict: Verdict,
}

impl SweepRow {
    pub fn from_report(report: &ExperimentReport) -> Self {
        Self {
            utilization: report.config.utilization,
            mu: report.effect.mu,
            i95: report.effect.i95,
            ct0_bar: report.effect.ct0_bar,
            ct0_interval: report.effect.ct0_interval,
            verdict: report.verdict,
        }
    }
}

/// Simulation results `ct[i][j]`: sequence `i` (0 = historical) on scenario `j`.
struct Grid<'a> {
    s0: &'a UpDownSequence,
    config: &'a SimConfig,
    master_seed: u64,
    mean_interarrival: f64,
    calendars: Vec<Calendar>,
    sequence_seeds: Vec<u64>,
    scenarios: Vec<ArrivalScenario>,
    scenario_seeds: Vec<u64>,
    ct: Vec<Vec<f64>>,
}

impl<'a> Grid<'a> {
    fn new(
        s0: &'a UpDownSequence,
        config: &'a SimConfig,
        master_seed: u64,
        mean_interarrival: f64,
    ) -> Result<Self, ExperimentError> {
        Ok(Self {
            s0,
            config,
            master_seed,
            mean_interarrival,
            calendars: vec![Calendar::new(s0)],
            sequence_seeds: Vec::new(),
            scenarios: Vec::new(),
            scenario_seeds: Vec::new(),
            ct: vec![Vec::new()],
        })
    }

    fn n(&self) -> usize {
        self.calendars.len() - 1
    }

    fn m(&self) -> usize {
        self.scenarios.len()
    }

    fn budget(&self, max_budget: u64) -> BudgetState {
        BudgetState::new(self.n(), self.m(), max_budget)
    }

    fn run_cells(&self, cells: &[(usize, usize)]) -> Result<Vec<f64>, EngineError> {
        let p = self.config.process_time;
        cells
            .par_iter()
            .map(|&(i, j)| {
                simulate_on(i as u32, &self.calendars[i], &self.scenarios[j], p)
                    .map(|r| r.mean_cycle_time)
            })
            .collect()
    }

    /// Adds permuted sequences; scenarios must already exist.
    fn extend_sequences(&mut self, count: usize) -> Result<(), ExperimentError> {
        debug_assert!(self.m() > 0);
        let first = self.calendars.len();
        for i in first..first + count {
            let seed = derive_seed(self.master_seed, TAG_PERMUTATION, i as u64);
            let seq = shuffle_with(self.s0, seed, self.config.shuffle_mode);
            self.calendars.push(Calendar::new(&seq));
            self.sequence_seeds.push(seed);
        }
        let m = self.m();
        let cells: Vec<(usize, usize)> = (first..first + count)
            .flat_map(|i| (0..m).map(move |j| (i, j)))
            .collect();
        let values = self.run_cells(&cells)?;
        self.ct.extend(values.chunks(m).map(<[f64]>::to_vec));
        Ok(())
    }

    fn extend_scenarios(&mut self, count: usize) -> Result<(), ExperimentError> {
        let first = self.scenarios.len();
        let horizon = self.s0.total_duration();
        for j in first..first + count {
            let seed = derive_seed(self.master_seed, TAG_ARRIVAL, j as u64);
            self.scenarios.push(ArrivalScenario::generate(
                j as u32,
                seed,
                self.mean_interarrival,
                horizon,
            )?);
            self.scenario_seeds.push(seed);
        }
        let rows = self.calendars.len();
        let cells: Vec<(usize, usize)> = (0..rows)
            .flat_map(|i| (first..first + count).map(move |j| (i, j)))
            .collect();
        let values = self.run_cells(&cells)?;
        for (i, new) in values.chunks(count).enumerate() {
            self.ct[i].extend_from_slice(new);
        }
        Ok(())
    }

    fn estimate(&self, k: f64) -> Result<EffectEstimate, ExperimentError> {
        let h = stats::effect_of_s0(&self.ct[0], k)?;
        let ct_bars: Vec<f64> = self.ct[1..].iter().map(|row| stats::mean(row)).collect();
        let band = stats::iid_band(&ct_bars, k)?;
        Ok(EffectEstimate {
            ct0_bar: h.ct0_bar,
            sigma0: h.sigma0,
            m: h.m,
            mu: band.mu,
            sigma: band.sigma,
            n: band.n,
            ct0_interval: h.interval,
            i95: band.i95,
            i95_inner: band.inner,
            i95_outer: band.outer,
        })
    }

    fn report(
        &self,
        effect: EffectEstimate,
        verdict: Verdict,
        config: &SimConfig,
        master_seed: u64,
        mean_interarrival: f64,
    ) -> Result<ExperimentReport, ExperimentError> {
        let populations: Vec<Vec<f64>> = (0..self.m())
            .map(|j| self.ct[1..].iter().map(|row| row[j]).collect())
            .collect();
        let triplet = stats::ttest_triplet(&populations, &self.ct[0], config.ttest_alpha)?;
        let normalized = NormalizedView::from_effect(&effect)
            .expect("mean cycle times are at least the process time");
        Ok(ExperimentReport {
            runs_used: self.budget(config.max_budget).runs_used,
            normalized,
            effect,
            verdict,
            triplet,
            config: config.clone(),
            seeds: SeedEcho {
                master_seed,
                mean_interarrival,
                horizon: self.s0.total_duration(),
                availability: self.s0.availability(),
                scenario_seeds: self.scenario_seeds.clone(),
                sequence_seeds: self.sequence_seeds.clone(),
                scenario_fingerprint: scenario_fingerprint(&self.scenarios),
            },
            caveat: GAUSSIAN_CAVEAT.to_string(),
        })
    }
}

pub fn scenario_fingerprint(scenarios: &[ArrivalScenario]) -> String {
    fingerprint(scenarios.iter().map(|s| s.arrival_times()))
}

/// Regenerates the scenario set a report was computed on.
pub fn regenerate_scenarios(report: &ExperimentReport) -> Result<Vec<ArrivalScenario>, ModelError> {
    report
        .seeds
        .scenario_seeds
        .iter()
        .enumerate()
        .map(|(j, seed)| {
            ArrivalScenario::generate(
                j as u32,
                *seed,
                report.seeds.mean_interarrival,
                report.seeds.horizon,
            )
        })
        .collect()
}
