//! Exact event-by-event simulation of the linear birth-death process.
//!
//! Replicate `r` of a run seeded with `seed` draws from
//! `ChaCha8Rng::seed_from_u64(seed)` switched to stream `r`, so replicates
//! are independent and can be generated in any order.

use rand::distr::OpenClosed01;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{domain, Error, Result};
use crate::inference::{ObservedSeries, SufficientStats};
use crate::kernel::Rates;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EventKind {
    Birth,
    Death,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event {
    pub time: f64,
    pub kind: EventKind,
}

/// A continuously observed trajectory on `[0, horizon]`.
#[derive(Debug, Clone, PartialEq)]
pub struct EventHistory {
    initial: u64,
    events: Vec<Event>,
    horizon: f64,
}

impl EventHistory {
    pub fn new(initial: u64, events: Vec<Event>, horizon: f64) -> Result<Self> {
        if !(horizon.is_finite() && horizon >= 0.0) {
            return domain(format!("horizon must be finite and >= 0, got {horizon}"));
        }
        let mut size = initial;
        let mut last = None;
        for e in &events {
            if !(e.time >= 0.0 && e.time <= horizon) {
                return Err(Error::InvalidData(format!(
                    "event at {} lies outside [0, {horizon}]",
                    e.time
                )));
            }
            if last.is_some_and(|t| e.time <= t) {
                return Err(Error::InvalidData(format!(
                    "event times must be strictly increasing at {}",
                    e.time
                )));
            }
            if size == 0 {
                return Err(Error::InvalidData(format!(
                    "event at {} after extinction",
                    e.time
                )));
            }
            size = match e.kind {
                EventKind::Birth => size + 1,
                EventKind::Death => size - 1,
            };
            last = Some(e.time);
        }
        Ok(Self {
            initial,
            events,
            horizon,
        })
    }

    pub fn initial(&self) -> u64 {
        self.initial
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn final_size(&self) -> u64 {
        self.size_after(self.events.len())
    }

    /// Size after the first `k` events.
    fn size_after(&self, k: usize) -> u64 {
        let births = self.events[..k]
            .iter()
            .filter(|e| e.kind == EventKind::Birth)
            .count() as u64;
        self.initial + births - (k as u64 - births)
    }

    /// Population size at `t`, counting an event at exactly `t`.
    pub fn size_at(&self, t: f64) -> Result<u64> {
        if !(t >= 0.0 && t <= self.horizon) {
            return domain(format!("time {t} lies outside [0, {}]", self.horizon));
        }
        Ok(self.size_after(self.events.partition_point(|e| e.time <= t)))
    }

    /// The pieces on `[0, t]` and `[t, horizon]`, the second shifted to start
    /// at zero.
    pub fn split_at(&self, t: f64) -> Result<(Self, Self)> {
        let n = self.size_at(t)?;
        let k = self.events.partition_point(|e| e.time <= t);
        let head = Self {
            initial: self.initial,
            events: self.events[..k].to_vec(),
            horizon: t,
        };
        let tail = self.events[k..]
            .iter()
            .map(|e| Event {
                time: e.time - t,
                kind: e.kind,
            })
            .collect();
        Ok((
            head,
            Self {
                initial: n,
                events: tail,
                horizon: self.horizon - t,
            },
        ))
    }
}

/// Generator for replicate `replicate` of a run seeded with `seed`.
pub fn replicate_rng(seed: u64, replicate: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replicate);
    rng
}

fn check_inputs(horizon: f64, rates: &Rates) -> Result<()> {
    rates.validate()?;
    if !(horizon.is_finite() && horizon >= 0.0) {
        return domain(format!("horizon must be finite and >= 0, got {horizon}"));
    }
    Ok(())
}

/// Runs the jump chain from `n` at time `t0`, calling `on_event` for each
/// event before `until`. Returns the size at `until`.
fn advance<R: Rng>(
    rng: &mut R,
    rates: &Rates,
    mut n: u64,
    t0: f64,
    until: f64,
    mut on_event: impl FnMut(Event),
) -> u64 {
    let total = rates.lambda + rates.mu;
    if total == 0.0 {
        return n;
    }
    let p_birth = rates.lambda / total;
    let mut t = t0;
    while n > 0 {
        let u: f64 = rng.sample(OpenClosed01);
        t += -(-u).ln_1p() / (n as f64 * total);
        if t > until {
            break;
        }
        let kind = if rng.random::<f64>() < p_birth {
            EventKind::Birth
        } else {
            EventKind::Death
        };
        n = match kind {
            EventKind::Birth => n + 1,
            EventKind::Death => n - 1,
        };
        on_event(Event { time: t, kind });
    }
    n
}

/// One trajectory with a caller-supplied generator.
pub fn simulate_with<R: Rng>(
    rng: &mut R,
    i0: u64,
    horizon: f64,
    rates: &Rates,
) -> Result<EventHistory> {
    check_inputs(horizon, rates)?;
    let mut events = Vec::new();
    advance(rng, rates, i0, 0.0, horizon, |e| events.push(e));
    Ok(EventHistory {
        initial: i0,
        events,
        horizon,
    })
}

/// One trajectory, replicate 0 of `seed`.
pub fn simulate_history(i0: u64, horizon: f64, rates: &Rates, seed: u64) -> Result<EventHistory> {
    simulate_with(&mut replicate_rng(seed, 0), i0, horizon, rates)
}

/// Sizes at `times` (starting at 0) without storing the events.
pub fn simulate_counts<R: Rng>(
    rng: &mut R,
    i0: u64,
    times: &[f64],
    rates: &Rates,
) -> Result<Vec<u64>> {
    check_sample_times(times, f64::INFINITY)?;
    check_inputs(*times.last().unwrap(), rates)?;
    let mut counts = vec![i0];
    let mut n = i0;
    for w in times.windows(2) {
        n = advance(rng, rates, n, w[0], w[1], |_| {});
        counts.push(n);
    }
    Ok(counts)
}

fn check_sample_times(times: &[f64], horizon: f64) -> Result<()> {
    if times.first() != Some(&0.0) {
        return domain("sampling times must start at 0");
    }
    // also rejects NaN
    if let Some(w) = times
        .windows(2)
        .find(|w| w[1].partial_cmp(&w[0]) != Some(std::cmp::Ordering::Greater))
    {
        return domain(format!(
            "sampling times must be strictly increasing, got {} then {}",
            w[0], w[1]
        ));
    }
    let last = *times.last().unwrap();
    if !(last <= horizon && last.is_finite()) {
        return domain(format!(
            "sampling time {last} lies beyond the horizon {horizon}"
        ));
    }
    Ok(())
}

/// Right-continuous sizes of `h` at `times`.
pub fn sample_at_times(h: &EventHistory, times: &[f64]) -> Result<ObservedSeries> {
    check_sample_times(times, h.horizon)?;
    let counts = times
        .iter()
        .map(|&t| h.size_at(t))
        .collect::<Result<Vec<_>>>()?;
    ObservedSeries::new(times.to_vec(), counts)
}

/// `S + 1` equally spaced times from 0 to `horizon`.
pub fn equidistant_times(horizon: f64, intervals: usize) -> Vec<f64> {
    (0..=intervals)
        .map(|s| horizon * s as f64 / intervals as f64)
        .collect()
}

/// Births, deaths and the exact integral of the size over `[0, horizon]`.
pub fn sufficient_stats(h: &EventHistory) -> SufficientStats {
    let (mut births, mut deaths, mut exposure) = (0, 0, 0.0);
    let (mut n, mut t) = (h.initial, 0.0);
    for e in &h.events {
        exposure += n as f64 * (e.time - t);
        t = e.time;
        match e.kind {
            EventKind::Birth => {
                births += 1;
                n += 1;
            }
            EventKind::Death => {
                deaths += 1;
                n -= 1;
            }
        }
    }
    exposure += n as f64 * (h.horizon - t);
    SufficientStats {
        births,
        deaths,
        exposure,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(time: f64, kind: EventKind) -> Event {
        Event { time, kind }
    }

    #[test]
    fn history_validation() {
        use EventKind::*;
        assert!(EventHistory::new(1, vec![ev(0.5, Death), ev(0.7, Birth)], 1.0).is_err());
        assert!(EventHistory::new(1, vec![ev(0.5, Birth), ev(0.5, Birth)], 1.0).is_err());
        assert!(EventHistory::new(1, vec![ev(1.5, Birth)], 1.0).is_err());
        assert!(EventHistory::new(1, vec![ev(0.5, Birth), ev(0.6, Death)], 1.0).is_ok());
    }

    #[test]
    fn frozen_process() {
        let r = Rates::new(0.0, 0.0).unwrap();
        let h = simulate_history(7, 5.0, &r, 1).unwrap();
        assert!(h.events().is_empty());
        let s = sample_at_times(&h, &[0.0, 2.5, 5.0]).unwrap();
        assert_eq!(s.counts(), &[7, 7, 7]);
    }

    #[test]
    fn right_continuous_sampling() {
        let h = EventHistory::new(3, vec![ev(0.5, EventKind::Birth)], 1.0).unwrap();
        assert_eq!(sample_at_times(&h, &[0.0, 1.0]).unwrap().counts(), &[3, 4]);
        assert_eq!(h.size_at(0.5).unwrap(), 4);
        assert_eq!(h.size_at(0.4999).unwrap(), 3);
        assert!(sample_at_times(&h, &[0.0, 2.0]).is_err());
        assert!(sample_at_times(&h, &[0.1, 0.5]).is_err());
    }

    #[test]
    fn statistics_of_small_histories() {
        let quiet = EventHistory::new(2, vec![], 3.0).unwrap();
        assert_eq!(
            sufficient_stats(&quiet),
            SufficientStats {
                births: 0,
                deaths: 0,
                exposure: 6.0
            }
        );
        let death = EventHistory::new(1, vec![ev(1.0, EventKind::Death)], 3.0).unwrap();
        assert_eq!(
            sufficient_stats(&death),
            SufficientStats {
                births: 0,
                deaths: 1,
                exposure: 1.0
            }
        );
    }

    #[test]
    fn seeded_runs_repeat() {
        let r = Rates::new(0.9, 0.7).unwrap();
        let a = simulate_history(5, 4.0, &r, 99).unwrap();
        assert_eq!(a, simulate_history(5, 4.0, &r, 99).unwrap());
        assert_ne!(a, simulate_history(5, 4.0, &r, 100).unwrap());
        let mut r1 = replicate_rng(99, 0);
        let mut r2 = replicate_rng(99, 0);
        let times = equidistant_times(4.0, 4);
        assert_eq!(
            simulate_counts(&mut r1, 5, &times, &r).unwrap(),
            simulate_counts(&mut r2, 5, &times, &r).unwrap()
        );
    }

    #[test]
    fn extinct_histories_stop() {
        let r = Rates::new(0.1, 2.0).unwrap();
        for seed in 0..50 {
            let h = simulate_history(2, 20.0, &r, seed).unwrap();
            let mut n = h.initial() as i64;
            for e in h.events() {
                assert!(n > 0);
                n += if e.kind == EventKind::Birth { 1 } else { -1 };
            }
        }
    }

    #[test]
    fn split_preserves_statistics() {
        let r = Rates::new(0.6, 0.5).unwrap();
        let h = simulate_history(10, 6.0, &r, 3).unwrap();
        let whole = sufficient_stats(&h);
        for t in [0.0, 1.3, 3.0, 6.0] {
            let (a, b) = h.split_at(t).unwrap();
            let (sa, sb) = (sufficient_stats(&a), sufficient_stats(&b));
            assert_eq!(sa.births + sb.births, whole.births);
            assert_eq!(sa.deaths + sb.deaths, whole.deaths);
            assert!((sa.exposure + sb.exposure - whole.exposure).abs() <= 1e-12 * whole.exposure);
            assert_eq!(b.final_size(), h.final_size());
        }
    }
}
