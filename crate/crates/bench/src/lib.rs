//! Inputs shared by the benchmarks.

use bdproc_core::inference::{ObservationSet, ObservedSeries};
use bdproc_core::simulate::{equidistant_times, replicate_rng, simulate_counts};
use bdproc_core::Rates;

/// `replicates` series of `intervals` equidistant samples over `[0, 10]`.
pub fn simulated_set(
    n0: u64,
    intervals: usize,
    replicates: usize,
    rates: Rates,
    seed: u64,
) -> ObservationSet {
    let times = equidistant_times(10.0, intervals);
    let series = (0..replicates)
        .map(|r| {
            let counts =
                simulate_counts(&mut replicate_rng(seed, r as u64), n0, &times, &rates).unwrap();
            ObservedSeries::new(times.clone(), counts).unwrap()
        })
        .collect();
    ObservationSet::new(series).unwrap()
}
