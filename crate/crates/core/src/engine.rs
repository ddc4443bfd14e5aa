//! Single-tool queue driven by a wall-clock up/down calendar.
//!
//! Agents arrive at the times of an [`ArrivalScenario`], wait in an infinite
//! FIFO queue and are served one at a time with a constant process time.
//! A DOWN transition interrupts the agent in service; it keeps its remaining
//! work and resumes when the tool comes back UP. Arrivals stop at the horizon
//! and, once the calendar is exhausted, the tool stays UP until the queue has
//! drained.
//!
//! Events sharing a timestamp are processed in the fixed order: calendar
//! transition, service completion, arrival. A service whose completion falls
//! exactly on a DOWN transition completes at that instant.

use std::collections::VecDeque;

use thiserror::Error;

use crate::model::{ArrivalScenario, RunResult, ToolState, UpDownSequence};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EngineError {
    #[error("arrival scenario is empty; the mean cycle time is undefined")]
    EmptyScenario,
    #[error("arrival horizon {arrivals} differs from sequence duration {sequence}")]
    HorizonMismatch { arrivals: f64, sequence: f64 },
    #[error("process time must be positive and finite, got {0}")]
    BadProcessTime(f64),
}

/// Absolute transition times of an [`UpDownSequence`], ready to be replayed.
#[derive(Debug, Clone)]
pub struct Calendar {
    initial_state: ToolState,
    /// `(time, state entered)`; ends with a final switch to UP when the
    /// sequence ends DOWN.
    transitions: Vec<(f64, ToolState)>,
    horizon: f64,
}

impl Calendar {
    pub fn new(sequence: &UpDownSequence) -> Self {
        let mut transitions = Vec::with_capacity(sequence.len());
        let mut t = 0.0;
        let mut last_state = sequence.initial_state();
        for (k, (state, d)) in sequence.spans().enumerate() {
            if k > 0 {
                transitions.push((t, state));
            }
            t += d;
            last_state = state;
        }
        if last_state == ToolState::Down {
            transitions.push((t, ToolState::Up));
        }
        Self {
            initial_state: sequence.initial_state(),
            transitions,
            horizon: sequence.total_duration(),
        }
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }
}

#[derive(Debug, Clone, Copy)]
struct InService {
    arrival: f64,
    /// Work left as of `resumed_at`; always in `(0, process_time]`.
    remaining: f64,
    resumed_at: f64,
}

#[derive(Debug)]
struct EngineState {
    clock: f64,
    state: ToolState,
    queue: VecDeque<f64>,
    in_service: Option<InService>,
    next_transition: usize,
}

impl EngineState {
    fn completion_time(&self) -> f64 {
        match (self.state, self.in_service) {
            (ToolState::Up, Some(s)) => s.resumed_at + s.remaining,
            _ => f64::INFINITY,
        }
    }

    fn start_next(&mut self, process_time: f64) {
        debug_assert!(self.in_service.is_none() && self.state == ToolState::Up);
        if let Some(arrival) = self.queue.pop_front() {
            self.in_service = Some(InService {
                arrival,
                remaining: process_time,
                resumed_at: self.clock,
            });
        }
    }

    fn audit(&self, process_time: f64) {
        if let Some(s) = self.in_service {
            debug_assert!(s.remaining > 0.0 && s.remaining <= process_time);
        }
        // non-idling: never UP with a waiting queue and nobody in service
        debug_assert!(
            !(self.state == ToolState::Up && self.in_service.is_none() && !self.queue.is_empty())
        );
    }
}

fn check_inputs(
    calendar: &Calendar,
    arrivals: &ArrivalScenario,
    process_time: f64,
) -> Result<(), EngineError> {
    if !(process_time.is_finite() && process_time > 0.0) {
        return Err(EngineError::BadProcessTime(process_time));
    }
    if arrivals.horizon != calendar.horizon {
        return Err(EngineError::HorizonMismatch {
            arrivals: arrivals.horizon,
            sequence: calendar.horizon,
        });
    }
    if arrivals.is_empty() {
        return Err(EngineError::EmptyScenario);
    }
    Ok(())
}

/// Replays the queue and calls `on_exit(arrival, exit)` for every agent, in
/// FIFO order.
fn replay(
    calendar: &Calendar,
    arrivals: &[f64],
    process_time: f64,
    mut on_exit: impl FnMut(f64, f64),
) {
    let mut st = EngineState {
        clock: 0.0,
        state: calendar.initial_state,
        queue: VecDeque::new(),
        in_service: None,
        next_transition: 0,
    };
    let mut next_arrival = 0usize;

    loop {
        let t_transition = calendar
            .transitions
            .get(st.next_transition)
            .map_or(f64::INFINITY, |(t, _)| *t);
        let t_completion = st.completion_time();
        let t_arrival = arrivals.get(next_arrival).copied().unwrap_or(f64::INFINITY);

        if t_transition <= t_completion && t_transition <= t_arrival {
            if t_transition == f64::INFINITY {
                break;
            }
            debug_assert!(t_transition >= st.clock);
            st.clock = t_transition;
            let new_state = calendar.transitions[st.next_transition].1;
            st.next_transition += 1;
            match new_state {
                ToolState::Down => {
                    st.state = ToolState::Down;
                    if let Some(mut s) = st.in_service.take() {
                        s.remaining -= st.clock - s.resumed_at;
                        if s.remaining > 0.0 {
                            st.in_service = Some(s);
                        } else {
                            on_exit(s.arrival, st.clock);
                        }
                    }
                }
                ToolState::Up => {
                    st.state = ToolState::Up;
                    match st.in_service.as_mut() {
                        Some(s) => s.resumed_at = st.clock,
                        None => st.start_next(process_time),
                    }
                }
            }
        } else if t_completion <= t_arrival {
            debug_assert!(t_completion >= st.clock);
            st.clock = t_completion;
            let done = st.in_service.take().expect("completion without service");
            on_exit(done.arrival, st.clock);
            st.start_next(process_time);
        } else {
            debug_assert!(t_arrival >= st.clock);
            st.clock = t_arrival;
            next_arrival += 1;
            st.queue.push_back(t_arrival);
            if st.state == ToolState::Up && st.in_service.is_none() {
                st.start_next(process_time);
            }
        }
        st.audit(process_time);
    }
    debug_assert!(st.queue.is_empty() && st.in_service.is_none());
}

/// Mean cycle time of all agents of `arrivals` on a prepared calendar.
pub fn simulate_on(
    sequence_id: u32,
    calendar: &Calendar,
    arrivals: &ArrivalScenario,
    process_time: f64,
) -> Result<RunResult, EngineError> {
    check_inputs(calendar, arrivals, process_time)?;
    let mut total = 0.0;
    let mut count = 0usize;
    replay(calendar, arrivals.arrival_times(), process_time, |a, e| {
        total += e - a;
        count += 1;
    });
    debug_assert_eq!(count, arrivals.len());
    Ok(RunResult {
        sequence_id,
        scenario_id: arrivals.scenario_id,
        mean_cycle_time: total / count as f64,
        agent_count: count,
    })
}

/// Runs one simulation of `sequence` against `arrivals`.
pub fn simulate_run(
    sequence: &UpDownSequence,
    arrivals: &ArrivalScenario,
    process_time: f64,
) -> Result<RunResult, EngineError> {
    simulate_on(0, &Calendar::new(sequence), arrivals, process_time)
}

/// Exit time of every agent, in arrival order.
pub fn exit_times(
    sequence: &UpDownSequence,
    arrivals: &ArrivalScenario,
    process_time: f64,
) -> Result<Vec<f64>, EngineError> {
    let calendar = Calendar::new(sequence);
    check_inputs(&calendar, arrivals, process_time)?;
    let mut exits = Vec::with_capacity(arrivals.len());
    replay(&calendar, arrivals.arrival_times(), process_time, |_, e| {
        exits.push(e)
    });
    Ok(exits)
}
