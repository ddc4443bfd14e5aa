//! Detection fixtures shared by the integration and acceptance tests.
#![allow(dead_code)]

use seqvar_core::{SynthSpec, UpDownSequence};

pub const YEAR: f64 = 8760.0;

/// Exponential up times, heavy lognormal repairs clustered in blocks of 8.
pub const POSITIVE: &str = "autocorr:exp:20:lognorm:4:1:8";
/// Weekly 8 h maintenance plus sparse short random failures.
pub const NEGATIVE: &str = "periodic:168:8:exp0.5:0.02";
/// Same laws as the positive fixture without the clustering.
pub const IID: &str = "iid:exp:20:lognorm:4:1";

pub fn fixture(spec: &str, horizon: f64, seed: u64) -> UpDownSequence {
    spec.parse::<SynthSpec>()
        .expect("fixture spec parses")
        .generate(horizon, seed)
        .expect("fixture generates")
}
