use proptest::prelude::*;
use seqvar_core::engine::exit_times;
use seqvar_core::{simulate_run, ArrivalScenario, ToolState, UpDownSequence};

/// Exit times computed directly: agent `k` starts at `max(a_k, e_{k-1})` and
/// leaves once it has accumulated `p` hours of UP time, the tool being UP
/// forever after the calendar ends.
fn oracle_exits(seq: &UpDownSequence, arrivals: &[f64], p: f64) -> Vec<f64> {
    let mut up = Vec::new();
    let mut t = 0.0;
    for (state, d) in seq.spans() {
        if state == ToolState::Up {
            up.push((t, t + d));
        }
        t += d;
    }
    up.push((t, f64::INFINITY));

    let mut exits = Vec::with_capacity(arrivals.len());
    let mut free_at = 0.0f64;
    for &a in arrivals {
        let start = a.max(free_at);
        let mut need = p;
        let mut exit = f64::NAN;
        for &(u0, u1) in &up {
            if u1 <= start {
                continue;
            }
            let begin = u0.max(start);
            if u1 - begin >= need {
                exit = begin + need;
                break;
            }
            need -= u1 - begin;
        }
        exits.push(exit);
        free_at = exit;
    }
    exits
}

/// Calendar and arrivals on a quarter-hour grid, so that every sum is exact
/// and ties between events actually occur.
fn dyadic_case() -> impl Strategy<Value = (UpDownSequence, Vec<f64>, f64)> {
    (
        any::<bool>(),
        prop::collection::vec(1u32..40, 1..30),
        prop::collection::vec(0u32..400, 1..60),
        1u32..12,
    )
        .prop_map(|(starts_up, spans, raw_arrivals, p)| {
            let initial = if starts_up {
                ToolState::Up
            } else {
                ToolState::Down
            };
            let durations: Vec<f64> = spans.iter().map(|q| *q as f64 / 4.0).collect();
            let seq = UpDownSequence::new(initial, durations).unwrap();
            let h = seq.total_duration();
            let mut arrivals: Vec<f64> = raw_arrivals
                .iter()
                .map(|q| *q as f64 / 4.0)
                .filter(|t| *t < h)
                .collect();
            arrivals.sort_by(f64::total_cmp);
            arrivals.dedup();
            if arrivals.is_empty() {
                arrivals.push(0.0);
            }
            (seq, arrivals, p as f64 / 4.0)
        })
}

proptest! {
    #[test]
    fn engine_matches_uptime_oracle_exactly((seq, arrivals, p) in dyadic_case()) {
        let scenario = ArrivalScenario::from_times(0, seq.total_duration(), arrivals.clone()).unwrap();
        let exits = exit_times(&seq, &scenario, p).unwrap();
        prop_assert_eq!(exits, oracle_exits(&seq, &arrivals, p));
    }

    #[test]
    fn engine_matches_uptime_oracle_on_random_times(
        spans in prop::collection::vec(0.01f64..50.0, 1..40),
        seed in any::<u64>(),
        p in 0.1f64..5.0,
    ) {
        let seq = UpDownSequence::new(ToolState::Up, spans).unwrap();
        let scenario = ArrivalScenario::generate(0, seed, 2.0 * p, seq.total_duration()).unwrap();
        prop_assume!(!scenario.is_empty());
        let exits = exit_times(&seq, &scenario, p).unwrap();
        let expected = oracle_exits(&seq, scenario.arrival_times(), p);
        for (e, o) in exits.iter().zip(&expected) {
            prop_assert!((e - o).abs() <= 1e-9 * o.max(1.0), "{} vs {}", e, o);
        }
    }

    #[test]
    fn cycle_times_are_at_least_the_process_time((seq, arrivals, p) in dyadic_case()) {
        let scenario = ArrivalScenario::from_times(0, seq.total_duration(), arrivals.clone()).unwrap();
        let exits = exit_times(&seq, &scenario, p).unwrap();
        prop_assert_eq!(exits.len(), arrivals.len());
        for (e, a) in exits.iter().zip(&arrivals) {
            prop_assert!(e - a >= p);
        }
        prop_assert!(exits.windows(2).all(|w| w[0] < w[1]));
        let r = simulate_run(&seq, &scenario, p).unwrap();
        prop_assert_eq!(r.agent_count, arrivals.len());
    }

    /// Turning part of an UP span into a DOWN span can only delay exits.
    #[test]
    fn extra_downtime_never_speeds_anyone_up(
        (seq, arrivals, p) in dyadic_case(),
        which in any::<prop::sample::Index>(),
        cut in 1u32..4,
    ) {
        let ups: Vec<usize> = (0..seq.len()).filter(|k| seq.state_of_span(*k) == ToolState::Up).collect();
        prop_assume!(!ups.is_empty());
        let k = ups[which.index(ups.len())];
        let d = seq.durations()[k];
        prop_assume!(d > 0.75);
        // split UP d into UP a, DOWN b, UP c with a + b + c = d
        let b = 0.25 * cut as f64;
        let a = ((d - b) / 2.0 * 4.0).floor() / 4.0;
        let c = d - a - b;
        prop_assume!(a > 0.0 && c > 0.0);
        let mut durations = seq.durations()[..k].to_vec();
        durations.extend([a, b, c]);
        durations.extend_from_slice(&seq.durations()[k + 1..]);
        let worse = UpDownSequence::new(seq.initial_state(), durations).unwrap();
        prop_assert_eq!(worse.total_duration(), seq.total_duration());

        let scenario = ArrivalScenario::from_times(0, seq.total_duration(), arrivals).unwrap();
        let before = exit_times(&seq, &scenario, p).unwrap();
        let after = exit_times(&worse, &scenario, p).unwrap();
        for (x, y) in before.iter().zip(&after) {
            prop_assert!(y >= x);
        }
    }
}

#[test]
fn md1_matches_pollaczek_khinchine() {
    let (p, rho, horizon) = (1.0, 0.5, 50_000.0);
    let seq = UpDownSequence::always_up(horizon).unwrap();
    let ct: f64 = (0..20)
        .map(|j| {
            let a = ArrivalScenario::generate(j, 1000 + j as u64, p / rho, horizon).unwrap();
            simulate_run(&seq, &a, p).unwrap().mean_cycle_time
        })
        .sum::<f64>()
        / 20.0;
    let expected = p * (1.0 + rho / (2.0 * (1.0 - rho)));
    assert!((ct - expected).abs() / expected < 0.02, "ct = {ct}");
}

#[test]
fn more_load_means_longer_cycle_times() {
    let seq = UpDownSequence::new(ToolState::Up, [40.0, 4.0].repeat(100)).unwrap();
    let h = seq.total_duration();
    let ct = |mean: f64| {
        let a = ArrivalScenario::generate(0, 5, mean, h).unwrap();
        simulate_run(&seq, &a, 1.0).unwrap().mean_cycle_time
    };
    assert!(ct(4.0) < ct(2.0));
    assert!(ct(2.0) < ct(1.3));
}
