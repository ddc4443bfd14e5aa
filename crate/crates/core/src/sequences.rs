//! Permutations of a historical sequence and synthetic sequence generators.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Exp, LogNormal};
use thiserror::Error;

use crate::model::{exact_sum, ModelError, ShuffleMode, ToolState, UpDownSequence};
use crate::seeds::{derive_seed, rng_from_seed};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SequenceError {
    #[error("invalid law parameters: {0}")]
    InvalidLawParams(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

fn invalid(msg: impl Into<String>) -> SequenceError {
    SequenceError::InvalidLawParams(msg.into())
}

/// Distribution of a span duration.
///
/// Written as `exp:<mean>`, `lognorm:<median>:<shape>` or `fixed:<value>`.
/// Inside colon-separated generator specs the compact forms `exp0.5`,
/// `lognorm5:0.8` and `fixed3` are also accepted.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DurationLaw {
    Exponential { mean: f64 },
    LogNormal { median: f64, shape: f64 },
    Fixed { value: f64 },
}

impl DurationLaw {
    pub fn validate(&self) -> Result<(), SequenceError> {
        let positive = |x: f64| x.is_finite() && x > 0.0;
        match *self {
            DurationLaw::Exponential { mean } if !positive(mean) => {
                Err(invalid(format!("exponential mean must be > 0, got {mean}")))
            }
            DurationLaw::LogNormal { median, shape }
                if !positive(median) || !(shape.is_finite() && shape >= 0.0) =>
            {
                Err(invalid(format!(
                    "lognormal needs median > 0 and shape >= 0, got {median}, {shape}"
                )))
            }
            DurationLaw::Fixed { value } if !positive(value) => {
                Err(invalid(format!("fixed value must be > 0, got {value}")))
            }
            _ => Ok(()),
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            DurationLaw::Exponential { mean } => mean,
            DurationLaw::LogNormal { median, shape } => median * (shape * shape / 2.0).exp(),
            DurationLaw::Fixed { value } => value,
        }
    }

    /// Strictly positive draw. Assumes `validate` passed.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        loop {
            let x = match *self {
                DurationLaw::Exponential { mean } => {
                    Exp::new(1.0 / mean).expect("validated").sample(rng)
                }
                DurationLaw::LogNormal { median, shape } => LogNormal::new(median.ln(), shape)
                    .expect("validated")
                    .sample(rng),
                DurationLaw::Fixed { value } => value,
            };
            if x > 0.0 && x.is_finite() {
                return x;
            }
        }
    }

    /// Parses one law from the front of a colon-split token stream.
    pub fn parse_tokens<'a, I>(tokens: &mut I) -> Result<Self, SequenceError>
    where
        I: Iterator<Item = &'a str>,
    {
        let head = tokens.next().ok_or_else(|| invalid("missing law"))?;
        let cut = head
            .find(|c: char| !c.is_ascii_alphabetic())
            .unwrap_or(head.len());
        let (name, inline) = head.split_at(cut);
        let arity = match name {
            "exp" | "fixed" => 1,
            "lognorm" => 2,
            other => return Err(invalid(format!("unknown law `{other}`"))),
        };
        let mut raw: Vec<&str> = Vec::with_capacity(arity);
        if !inline.is_empty() {
            raw.push(inline);
        }
        while raw.len() < arity {
            raw.push(
                tokens
                    .next()
                    .ok_or_else(|| invalid(format!("law `{name}` needs {arity} parameter(s)")))?,
            );
        }
        let args = raw
            .iter()
            .map(|r| {
                r.parse::<f64>()
                    .map_err(|_| invalid(format!("bad parameter `{r}` for law `{name}`")))
            })
            .collect::<Result<Vec<f64>, _>>()?;
        let law = match name {
            "exp" => DurationLaw::Exponential { mean: args[0] },
            "fixed" => DurationLaw::Fixed { value: args[0] },
            _ => DurationLaw::LogNormal {
                median: args[0],
                shape: args[1],
            },
        };
        law.validate()?;
        Ok(law)
    }
}

impl FromStr for DurationLaw {
    type Err = SequenceError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut tokens = s.split(':');
        let law = Self::parse_tokens(&mut tokens)?;
        match tokens.next() {
            None => Ok(law),
            Some(extra) => Err(invalid(format!("unexpected `{extra}` after law in `{s}`"))),
        }
    }
}

impl fmt::Display for DurationLaw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            DurationLaw::Exponential { mean } => write!(f, "exp:{mean}"),
            DurationLaw::LogNormal { median, shape } => write!(f, "lognorm:{median}:{shape}"),
            DurationLaw::Fixed { value } => write!(f, "fixed:{value}"),
        }
    }
}

/// Uniform random permutation of the UP durations and, independently, of the
/// DOWN durations. Initial state and alternation are kept.
pub fn shuffle(seq: &UpDownSequence, seed: u64) -> UpDownSequence {
    shuffle_with(seq, seed, ShuffleMode::Independent)
}

pub fn shuffle_with(seq: &UpDownSequence, seed: u64, mode: ShuffleMode) -> UpDownSequence {
    let mut rng = rng_from_seed(seed);
    match mode {
        ShuffleMode::Independent => {
            let mut ups = seq.up_durations();
            let mut downs = seq.down_durations();
            ups.shuffle(&mut rng);
            downs.shuffle(&mut rng);
            UpDownSequence::interleave(seq.initial_state(), &ups, &downs)
                .expect("a permutation of valid durations is valid")
        }
        ShuffleMode::Paired => {
            let d = seq.durations();
            let mut pairs: Vec<&[f64]> = d.chunks_exact(2).collect();
            pairs.shuffle(&mut rng);
            // a trailing unpaired span stays last so the alternation holds
            let mut out: Vec<f64> = pairs.concat();
            out.extend_from_slice(d.chunks_exact(2).remainder());
            UpDownSequence::new(seq.initial_state(), out)
                .expect("a permutation of valid durations is valid")
        }
    }
}

fn check_horizon(horizon: f64) -> Result<(), SequenceError> {
    if horizon.is_finite() && horizon > 0.0 {
        Ok(())
    } else {
        Err(invalid(format!("horizon must be > 0, got {horizon}")))
    }
}

/// Adjusts the last span so that the order-free total equals `horizon` bit
/// for bit. The total is monotone in the last span, so the value is found by
/// galloping then bisecting over the bit patterns of positive floats.
fn fit_to_horizon(
    initial: ToolState,
    mut durations: Vec<f64>,
    horizon: f64,
) -> Result<UpDownSequence, SequenceError> {
    let last = durations.len() - 1;
    let current = durations[last];
    let mut total_with = |x: f64| {
        durations[last] = x;
        exact_sum(durations.iter().copied())
    };
    let start = {
        let guess = current + (horizon - total_with(current));
        if guess > 0.0 {
            guess
        } else {
            current
        }
    };
    let f0 = total_with(start);
    let chosen = if f0 == horizon {
        start
    } else {
        let up = f0 < horizon;
        let step_from = |bits: u64, step: u64| {
            if up {
                bits.saturating_add(step)
            } else {
                bits.saturating_sub(step).max(1)
            }
        };
        // gallop until the target is bracketed
        let mut near = start.to_bits();
        let mut step = 1u64;
        let mut far = step_from(near, step);
        while (total_with(f64::from_bits(far)) < horizon) == up && step < (1 << 52) {
            near = far;
            step *= 2;
            far = step_from(near, step);
        }
        let (mut lo, mut hi) = if up { (near, far) } else { (far, near) };
        // invariant: total(lo) <= horizon <= total(hi)
        while hi - lo > 1 {
            let mid = lo + (hi - lo) / 2;
            if total_with(f64::from_bits(mid)) < horizon {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        if total_with(f64::from_bits(hi)) == horizon {
            f64::from_bits(hi)
        } else {
            f64::from_bits(lo)
        }
    };
    total_with(chosen);
    Ok(UpDownSequence::new(initial, durations)?)
}

/// Alternating raw draws, starting UP, until the horizon is covered; the
/// final span is cut at the horizon.
fn draw_alternating<R: Rng + ?Sized>(
    up: &DurationLaw,
    down: &DurationLaw,
    horizon: f64,
    rng: &mut R,
) -> Vec<f64> {
    let mut durations = Vec::new();
    let mut acc = 0.0;
    let mut state = ToolState::Up;
    while acc < horizon {
        let d = match state {
            ToolState::Up => up.sample(rng),
            ToolState::Down => down.sample(rng),
        };
        if acc + d >= horizon {
            durations.push(horizon - acc);
            break;
        }
        durations.push(d);
        acc += d;
        state = state.flip();
    }
    durations
}

/// i.i.d. up and down spans covering exactly `horizon`, starting UP.
pub fn gen_iid(
    up_law: &DurationLaw,
    down_law: &DurationLaw,
    horizon: f64,
    seed: u64,
) -> Result<UpDownSequence, SequenceError> {
    up_law.validate()?;
    down_law.validate()?;
    check_horizon(horizon)?;
    let mut rng = rng_from_seed(seed);
    let mut durations = draw_alternating(up_law, down_law, horizon, &mut rng);
    // guard against a zero-length final cut caused by rounding
    if durations.len() > 1 && *durations.last().unwrap() <= 0.0 {
        durations.pop();
    }
    fit_to_horizon(ToolState::Up, durations, horizon)
}

/// Sorts `values` ascending, cuts them into consecutive blocks of
/// `block_size`, and lays the blocks out in a random order.
pub fn arrange_in_blocks<R: Rng + ?Sized>(
    values: &[f64],
    block_size: usize,
    rng: &mut R,
) -> Vec<f64> {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut blocks: Vec<&[f64]> = sorted.chunks(block_size.max(1)).collect();
    blocks.shuffle(rng);
    blocks.concat()
}

/// Same draws as [`gen_iid`] with the DOWN durations regrouped into blocks of
/// `block_size` similar values, which clusters long failures together.
pub fn gen_autocorrelated(
    up_law: &DurationLaw,
    down_law: &DurationLaw,
    block_size: usize,
    horizon: f64,
    seed: u64,
) -> Result<UpDownSequence, SequenceError> {
    if block_size == 0 {
        return Err(invalid("block_size must be >= 1"));
    }
    let base = gen_iid(up_law, down_law, horizon, seed)?;
    let mut rng = rng_from_seed(derive_seed(seed, "blocks", 0));
    let downs = arrange_in_blocks(&base.down_durations(), block_size, &mut rng);
    Ok(UpDownSequence::interleave(
        base.initial_state(),
        &base.up_durations(),
        &downs,
    )?)
}

/// Periodic maintenance of `maint_duration` at the end of every `period`,
/// plus random failures arriving as a Poisson process of rate `noise_rate`
/// with durations from `noise_down_law`. Overlapping DOWN spans are merged.
pub fn gen_periodic_maintenance(
    period: f64,
    maint_duration: f64,
    noise_down_law: &DurationLaw,
    noise_rate: f64,
    horizon: f64,
    seed: u64,
) -> Result<UpDownSequence, SequenceError> {
    check_horizon(horizon)?;
    if !(maint_duration.is_finite()
        && maint_duration > 0.0
        && period.is_finite()
        && period > maint_duration)
    {
        return Err(invalid(format!(
            "need period > maint_duration > 0, got {period} and {maint_duration}"
        )));
    }
    if !(noise_rate.is_finite() && noise_rate >= 0.0) {
        return Err(invalid(format!(
            "noise rate must be >= 0, got {noise_rate}"
        )));
    }
    noise_down_law.validate()?;

    let mut downs: Vec<(f64, f64)> = Vec::new();
    let mut k = 0u64;
    loop {
        let start = k as f64 * period + (period - maint_duration);
        if start >= horizon {
            break;
        }
        downs.push((start, (start + maint_duration).min(horizon)));
        k += 1;
    }
    if noise_rate > 0.0 {
        let mut rng = rng_from_seed(seed);
        let gap = Exp::new(noise_rate).expect("positive rate");
        let mut t = 0.0;
        loop {
            t += gap.sample(&mut rng);
            if t >= horizon {
                break;
            }
            let d = noise_down_law.sample(&mut rng);
            downs.push((t, (t + d).min(horizon)));
        }
    }
    downs.sort_by(|a, b| a.0.total_cmp(&b.0));

    let mut merged: Vec<(f64, f64)> = Vec::with_capacity(downs.len());
    for (s, e) in downs {
        match merged.last_mut() {
            Some(last) if s <= last.1 => last.1 = last.1.max(e),
            _ => merged.push((s, e)),
        }
    }

    let initial = if merged.first().is_some_and(|(s, _)| *s <= 0.0) {
        ToolState::Down
    } else {
        ToolState::Up
    };
    let mut durations = Vec::with_capacity(2 * merged.len() + 1);
    let mut cursor = 0.0;
    for (s, e) in merged {
        if s > cursor {
            durations.push(s - cursor);
        }
        durations.push(e - s);
        cursor = e;
    }
    if cursor < horizon {
        durations.push(horizon - cursor);
    }
    fit_to_horizon(initial, durations, horizon)
}

/// Synthetic sequence recipe, as written on the command line.
///
/// * `iid:<up law>:<down law>`
/// * `autocorr:<up law>:<down law>:<block size>`
/// * `periodic:<period>:<maint>:<noise law>:<noise rate>`
#[derive(Debug, Clone, PartialEq)]
pub enum SynthSpec {
    Iid {
        up: DurationLaw,
        down: DurationLaw,
    },
    Autocorrelated {
        up: DurationLaw,
        down: DurationLaw,
        block_size: usize,
    },
    Periodic {
        period: f64,
        maint_duration: f64,
        noise: DurationLaw,
        noise_rate: f64,
    },
}

impl SynthSpec {
    pub fn generate(&self, horizon: f64, seed: u64) -> Result<UpDownSequence, SequenceError> {
        match self {
            SynthSpec::Iid { up, down } => gen_iid(up, down, horizon, seed),
            SynthSpec::Autocorrelated {
                up,
                down,
                block_size,
            } => gen_autocorrelated(up, down, *block_size, horizon, seed),
            SynthSpec::Periodic {
                period,
                maint_duration,
                noise,
                noise_rate,
            } => gen_periodic_maintenance(
                *period,
                *maint_duration,
                noise,
                *noise_rate,
                horizon,
                seed,
            ),
        }
    }
}

impl fmt::Display for SynthSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SynthSpec::Iid { up, down } => write!(f, "iid:{up}:{down}"),
            SynthSpec::Autocorrelated {
                up,
                down,
                block_size,
            } => write!(f, "autocorr:{up}:{down}:{block_size}"),
            SynthSpec::Periodic {
                period,
                maint_duration,
                noise,
                noise_rate,
            } => write!(f, "periodic:{period}:{maint_duration}:{noise}:{noise_rate}"),
        }
    }
}

impl FromStr for SynthSpec {
    type Err = SequenceError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut tokens = s.split(':');
        let num =
            |tokens: &mut std::str::Split<'_, char>, label: &str| -> Result<f64, SequenceError> {
                let raw = tokens
                    .next()
                    .ok_or_else(|| invalid(format!("`{s}` is missing the {label}")))?;
                raw.parse::<f64>()
                    .map_err(|_| invalid(format!("bad {label} `{raw}` in `{s}`")))
            };
        let spec = match tokens.next() {
            Some("iid") => SynthSpec::Iid {
                up: DurationLaw::parse_tokens(&mut tokens)?,
                down: DurationLaw::parse_tokens(&mut tokens)?,
            },
            Some("autocorr") => {
                let up = DurationLaw::parse_tokens(&mut tokens)?;
                let down = DurationLaw::parse_tokens(&mut tokens)?;
                let block = num(&mut tokens, "block size")?;
                if !(block >= 1.0 && block.fract() == 0.0) {
                    return Err(invalid(format!(
                        "block size must be a positive integer in `{s}`"
                    )));
                }
                SynthSpec::Autocorrelated {
                    up,
                    down,
                    block_size: block as usize,
                }
            }
            Some("periodic") => {
                let period = num(&mut tokens, "period")?;
                let maint_duration = num(&mut tokens, "maintenance duration")?;
                let noise = DurationLaw::parse_tokens(&mut tokens)?;
                let noise_rate = num(&mut tokens, "noise rate")?;
                SynthSpec::Periodic {
                    period,
                    maint_duration,
                    noise,
                    noise_rate,
                }
            }
            Some(other) => return Err(invalid(format!("unknown generator `{other}` in `{s}`"))),
            None => return Err(invalid("empty generator spec")),
        };
        if let Some(extra) = tokens.next() {
            return Err(invalid(format!("unexpected `{extra}` in `{s}`")));
        }
        Ok(spec)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sorted(mut v: Vec<f64>) -> Vec<f64> {
        v.sort_by(f64::total_cmp);
        v
    }

    #[test]
    fn synth_spec_display_round_trip() {
        for text in [
            "iid:exp:50:lognorm:5:0.8",
            "autocorr:exp:50:fixed:2:8",
            "periodic:168:8:exp:0.5:0.02",
        ] {
            let spec: SynthSpec = text.parse().unwrap();
            assert_eq!(spec.to_string(), text);
        }
    }

    #[test]
    fn law_parsing() {
        assert_eq!(
            "exp:10".parse::<DurationLaw>().unwrap(),
            DurationLaw::Exponential { mean: 10.0 }
        );
        assert_eq!(
            "lognorm:5:0.8".parse::<DurationLaw>().unwrap(),
            DurationLaw::LogNormal {
                median: 5.0,
                shape: 0.8
            }
        );
        assert_eq!(
            "fixed:3".parse::<DurationLaw>().unwrap(),
            DurationLaw::Fixed { value: 3.0 }
        );
        assert_eq!(
            "exp0.5".parse::<DurationLaw>().unwrap(),
            DurationLaw::Exponential { mean: 0.5 }
        );
        assert_eq!(
            "lognorm5:0.8".parse::<DurationLaw>().unwrap(),
            DurationLaw::LogNormal {
                median: 5.0,
                shape: 0.8
            }
        );
        for bad in [
            "",
            "exp",
            "exp:-1",
            "exp:abc",
            "gamma:2",
            "fixed:0",
            "exp:1:2",
            "lognorm:0:1",
        ] {
            assert!(bad.parse::<DurationLaw>().is_err(), "{bad}");
        }
    }

    #[test]
    fn law_display_parses_back() {
        for law in [
            DurationLaw::Exponential { mean: 2.5 },
            DurationLaw::LogNormal {
                median: 4.0,
                shape: 1.25,
            },
            DurationLaw::Fixed { value: 0.125 },
        ] {
            assert_eq!(law.to_string().parse::<DurationLaw>().unwrap(), law);
        }
    }

    #[test]
    fn synth_spec_parsing() {
        let p: SynthSpec = "periodic:168:8:exp0.5:0.02".parse().unwrap();
        assert_eq!(
            p,
            SynthSpec::Periodic {
                period: 168.0,
                maint_duration: 8.0,
                noise: DurationLaw::Exponential { mean: 0.5 },
                noise_rate: 0.02
            }
        );
        let a: SynthSpec = "autocorr:exp:50:lognorm:4:1:8".parse().unwrap();
        assert!(matches!(a, SynthSpec::Autocorrelated { block_size: 8, .. }));
        let i: SynthSpec = "iid:exp50:fixed2".parse().unwrap();
        assert!(matches!(i, SynthSpec::Iid { .. }));
        for bad in [
            "",
            "walk:1",
            "iid:exp:1",
            "autocorr:exp:1:exp:1:0",
            "periodic:8:8:exp:1:0",
            "iid:exp:1:exp:1:9",
        ] {
            let r = bad.parse::<SynthSpec>().and_then(|s| s.generate(100.0, 1));
            assert!(r.is_err(), "{bad}");
        }
    }

    #[test]
    fn shuffle_single_pair_is_identity() {
        let s = UpDownSequence::new(ToolState::Up, vec![7.0, 3.0]).unwrap();
        assert_eq!(shuffle(&s, 1), s);
        assert_eq!(shuffle_with(&s, 1, ShuffleMode::Paired), s);
    }

    #[test]
    fn shuffle_preserves_multisets() {
        let s = UpDownSequence::new(ToolState::Up, vec![1.0, 4.0, 2.0, 5.0, 3.0]).unwrap();
        for seed in 0..20 {
            let p = shuffle(&s, seed);
            assert_eq!(sorted(p.up_durations()), vec![1.0, 2.0, 3.0]);
            assert_eq!(sorted(p.down_durations()), vec![4.0, 5.0]);
            assert_eq!(p.total_duration(), 15.0);
            assert_eq!(p.initial_state(), ToolState::Up);
        }
        assert_eq!(shuffle(&s, 9), shuffle(&s, 9));
    }

    #[test]
    fn paired_shuffle_moves_pairs_together() {
        let s =
            UpDownSequence::new(ToolState::Up, vec![1.0, 10.0, 2.0, 20.0, 3.0, 30.0, 4.0]).unwrap();
        for seed in 0..20 {
            let p = shuffle_with(&s, seed, ShuffleMode::Paired);
            let d = p.durations();
            assert_eq!(d[6], 4.0);
            for pair in d[..6].chunks(2) {
                assert_eq!(pair[1], pair[0] * 10.0);
            }
        }
    }

    #[test]
    fn iid_fixed_laws() {
        let f = DurationLaw::Fixed { value: 5.0 };
        let s = gen_iid(&f, &f, 20.0, 0).unwrap();
        assert_eq!(s.durations(), &[5.0, 5.0, 5.0, 5.0]);
        assert_eq!(s.initial_state(), ToolState::Up);
        let t = gen_iid(&f, &f, 12.0, 0).unwrap();
        assert_eq!(t.durations(), &[5.0, 5.0, 2.0]);
    }

    #[test]
    fn iid_availability_matches_law_means() {
        let s = gen_iid(
            &DurationLaw::Exponential { mean: 10.0 },
            &DurationLaw::Exponential { mean: 1.0 },
            10_000.0,
            17,
        )
        .unwrap();
        assert!(
            (s.availability() - 10.0 / 11.0).abs() < 0.02,
            "{}",
            s.availability()
        );
    }

    #[test]
    fn generators_reject_bad_input() {
        let e = DurationLaw::Exponential { mean: 1.0 };
        assert!(matches!(
            gen_iid(&e, &e, 0.0, 1),
            Err(SequenceError::InvalidLawParams(_))
        ));
        assert!(gen_iid(&DurationLaw::Fixed { value: -1.0 }, &e, 10.0, 1).is_err());
        assert!(gen_autocorrelated(&e, &e, 0, 10.0, 1).is_err());
        assert!(gen_periodic_maintenance(5.0, 5.0, &e, 0.0, 10.0, 1).is_err());
        assert!(gen_periodic_maintenance(5.0, 1.0, &e, -0.1, 10.0, 1).is_err());
    }

    #[test]
    fn generators_hit_horizon_exactly() {
        let up = DurationLaw::Exponential { mean: 37.3 };
        let down = DurationLaw::LogNormal {
            median: 2.1,
            shape: 1.1,
        };
        for seed in 0..30 {
            let h = 1000.0 + seed as f64 * 13.7;
            assert_eq!(gen_iid(&up, &down, h, seed).unwrap().total_duration(), h);
            assert_eq!(
                gen_autocorrelated(&up, &down, 4, h, seed)
                    .unwrap()
                    .total_duration(),
                h
            );
            assert_eq!(
                gen_periodic_maintenance(97.1, 5.3, &down, 0.05, h, seed)
                    .unwrap()
                    .total_duration(),
                h
            );
        }
    }

    #[test]
    fn blocks_are_sorted_runs() {
        let mut rng = rng_from_seed(0);
        let mut seen = std::collections::HashSet::new();
        for _ in 0..50 {
            let out = arrange_in_blocks(&[1.0, 9.0, 2.0, 8.0], 2, &mut rng);
            assert!(
                out == [1.0, 2.0, 8.0, 9.0] || out == [8.0, 9.0, 1.0, 2.0],
                "{out:?}"
            );
            seen.insert(out.iter().map(|x| *x as i64).collect::<Vec<_>>());
        }
        assert!(seen.contains(&vec![1, 2, 8, 9]));
    }

    #[test]
    fn block_size_one_keeps_iid_multisets() {
        let up = DurationLaw::Exponential { mean: 20.0 };
        let down = DurationLaw::Exponential { mean: 3.0 };
        let a = gen_iid(&up, &down, 2000.0, 5).unwrap();
        let b = gen_autocorrelated(&up, &down, 1, 2000.0, 5).unwrap();
        assert_eq!(a.up_durations(), b.up_durations());
        assert_eq!(sorted(a.down_durations()), sorted(b.down_durations()));
    }

    fn lag1_autocorrelation(x: &[f64]) -> f64 {
        let n = x.len() as f64;
        let mean = x.iter().sum::<f64>() / n;
        let var: f64 = x.iter().map(|v| (v - mean).powi(2)).sum();
        let cov: f64 = x.windows(2).map(|w| (w[0] - mean) * (w[1] - mean)).sum();
        cov / var
    }

    #[test]
    fn blocking_creates_autocorrelation() {
        let up = DurationLaw::Exponential { mean: 10.0 };
        for down in [
            DurationLaw::Exponential { mean: 2.0 },
            DurationLaw::LogNormal {
                median: 2.0,
                shape: 0.5,
            },
        ] {
            for block in [4, 8] {
                // ~200 spans, ~100 downs per sequence
                let r: Vec<f64> = (0..50)
                    .map(|seed| {
                        let s = gen_autocorrelated(&up, &down, block, 1100.0, seed).unwrap();
                        assert!(s.len() >= 150, "{}", s.len());
                        lag1_autocorrelation(&s.down_durations())
                    })
                    .collect();
                let avg = r.iter().sum::<f64>() / r.len() as f64;
                assert!(avg > 0.5, "{down} block {block}: mean lag-1 {avg}");
                let iid: f64 = (0..50)
                    .map(|seed| {
                        lag1_autocorrelation(
                            &gen_iid(&up, &down, 1100.0, seed).unwrap().down_durations(),
                        )
                    })
                    .sum::<f64>()
                    / 50.0;
                assert!(iid.abs() < 0.1, "i.i.d. lag-1 {iid}");
            }
        }
    }

    #[test]
    fn periodic_without_noise_is_regular() {
        let e = DurationLaw::Exponential { mean: 1.0 };
        let s = gen_periodic_maintenance(10.0, 1.0, &e, 0.0, 100.0, 3).unwrap();
        assert_eq!(s.down_durations(), vec![1.0; 10]);
        assert_eq!(s.up_durations(), vec![9.0; 10]);
        assert_eq!(s.initial_state(), ToolState::Up);
        assert_eq!(s.total_duration(), 100.0);

        // irregular spacing after shuffling needs unequal up spans
        let s = gen_periodic_maintenance(10.0, 1.0, &e, 0.0, 95.0, 3).unwrap();
        let p = shuffle(&s, 11);
        assert_eq!(sorted(p.up_durations()), sorted(s.up_durations()));
        assert_eq!(sorted(p.down_durations()), sorted(s.down_durations()));
        assert_ne!(p.durations(), s.durations());
    }

    #[test]
    fn periodic_noise_merges_overlaps() {
        let noise = DurationLaw::Fixed { value: 30.0 };
        let s = gen_periodic_maintenance(168.0, 8.0, &noise, 0.05, 2000.0, 1).unwrap();
        assert_eq!(s.total_duration(), 2000.0);
        // every DOWN span is a maintenance or a merged noise window, so none is
        // shorter than the maintenance unless clipped by the horizon
        let downs = s.down_durations();
        assert!(
            downs[..downs.len() - 1].iter().all(|d| *d >= 8.0),
            "{downs:?}"
        );
        let n_maint = 2000.0_f64.div_euclid(168.0) as usize + 1;
        assert!(downs.len() < n_maint + (0.05 * 2000.0) as usize);
    }
}
