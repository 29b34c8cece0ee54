//! Flow-based congestion delay.

use std::collections::VecDeque;

use crate::time::{Duration, SimTime};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VdfParams {
    pub alpha: f64,
    pub beta: f64,
    /// Trailing window for the flow estimate.
    pub window: Duration,
}

impl Default for VdfParams {
    fn default() -> Self {
        VdfParams { alpha: 0.15, beta: 4.0, window: Duration::from_secs(300) }
    }
}

/// BPR delay: `t_f * (1 + alpha * (q / C)^beta)` seconds.
pub fn congestion_delay(freespeed_time: f64, flow_vph: f64, capacity_vph: f64, p: &VdfParams) -> f64 {
    freespeed_time * (1.0 + p.alpha * (flow_vph / capacity_vph).powf(p.beta))
}

/// Recent link entry times, for the trailing-window flow estimate.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FlowWindow {
    entries: VecDeque<SimTime>,
}

impl FlowWindow {
    pub fn record(&mut self, t: SimTime) {
        self.entries.push_back(t);
    }

    /// Entries in `(now - window, now]` scaled to vehicles per hour.
    pub fn estimate(&mut self, now: SimTime, window: Duration) -> f64 {
        let floor = now - window;
        while self.entries.front().is_some_and(|&t| t <= floor) {
            self.entries.pop_front();
        }
        let count = self.entries.iter().filter(|&&t| t <= now).count();
        count as f64 * 3600.0 / window.as_secs_f64()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn zero_flow_is_freespeed() {
        assert_eq!(congestion_delay(100.0, 0.0, 900.0, &VdfParams::default()), 100.0);
    }

    #[test]
    fn at_and_above_capacity() {
        let p = VdfParams::default();
        assert!((congestion_delay(100.0, 900.0, 900.0, &p) - 115.0).abs() < 1e-12);
        assert!((congestion_delay(100.0, 1800.0, 900.0, &p) - 340.0).abs() < 1e-12);
    }

    #[test]
    fn empty_window_is_zero_and_counts_scale_to_hourly() {
        let w = Duration::from_secs(300);
        let mut f = FlowWindow::default();
        assert_eq!(f.estimate(SimTime::from_secs(1000), w), 0.0);
        for i in 0..25 {
            f.record(SimTime::from_secs(712 + i * 12));
        }
        assert_eq!(f.estimate(SimTime::from_secs(1000), w), 300.0);
        // the entry at 712 s drops out once it is a full window old
        assert_eq!(f.estimate(SimTime::from_secs(1012) - Duration::from_micros(1), w), 300.0);
        assert_eq!(f.estimate(SimTime::from_secs(1012), w), 288.0);
    }

    proptest! {
        #[test]
        fn delay_is_monotone_and_at_least_freespeed(tf in 0.1f64..1000.0, q1 in 0.0f64..5000.0, dq in 0.0f64..5000.0, cap in 100.0f64..4000.0) {
            let p = VdfParams::default();
            let a = congestion_delay(tf, q1, cap, &p);
            let b = congestion_delay(tf, q1 + dq, cap, &p);
            prop_assert!(a >= tf);
            prop_assert!(b >= a);
        }

        /// Oracle: recount the raw entry log at probe times.
        #[test]
        fn estimate_matches_recount(gaps in proptest::collection::vec(0i64..200_000_000, 1..60), probes in proptest::collection::vec(0i64..400_000_000, 1..10)) {
            let window = Duration::from_secs(300);
            let mut times = Vec::new();
            let mut t = 0;
            for g in gaps { t += g; times.push(SimTime::from_micros(t)); }
            let mut probe_times: Vec<SimTime> = probes.into_iter().map(|p| SimTime::from_micros(t + p - 200_000_000)).collect();
            probe_times.sort();
            let mut f = FlowWindow::default();
            let mut next = 0;
            for now in probe_times {
                while next < times.len() && times[next] <= now {
                    f.record(times[next]);
                    next += 1;
                }
                let expected = times[..next].iter().filter(|&&e| e > now - window && e <= now).count() as f64 * 12.0;
                let q = f.estimate(now, window);
                prop_assert!(q >= 0.0);
                prop_assert_eq!(q, expected);
            }
        }
    }
}
