//! Window-based load monitoring.
//!
//! A server profiles its load by the average queuing time of requests in
//! the pending queue, aggregated over a compound window that closes after a
//! fixed interval or a maximum number of samples, whichever comes first. A
//! response-time variant exists as an experimental foil; it uses the same
//! window mechanics against a different threshold.

use serde::{Deserialize, Serialize};

use crate::time::{SimDuration, SimTime};

/// Which measurement the monitor aggregates.
#[derive(Copy, Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectorMode {
    /// Average wait between request arrival and processing start.
    QueuingTime,
    /// Average span between request arrival and response send.
    ResponseTime,
}

/// Window configuration.
#[derive(Copy, Clone, Debug, Serialize, Deserialize)]
pub struct WindowConfig {
    /// Window length in simulated time.
    pub interval: SimDuration,
    /// Sample-count bound; the window also closes when this many samples
    /// have been recorded.
    pub max_samples: u64,
    /// Overload threshold against the windowed average in queuing mode.
    pub queuing_threshold: SimDuration,
    pub mode: DetectorMode,
    /// Overload threshold in response-time mode.
    pub response_threshold: SimDuration,
}

impl Default for WindowConfig {
    fn default() -> Self {
        WindowConfig {
            interval: SimDuration::from_secs(1),
            max_samples: 2000,
            queuing_threshold: SimDuration::from_millis(20),
            mode: DetectorMode::QueuingTime,
            response_threshold: SimDuration::from_millis(250),
        }
    }
}

impl WindowConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.interval == SimDuration::ZERO {
            return Err("window.interval_ms: must be > 0".into());
        }
        if self.max_samples == 0 {
            return Err("window.max_samples: must be > 0".into());
        }
        if self.queuing_threshold == SimDuration::ZERO {
            return Err("window.queuing_threshold_ms: must be > 0".into());
        }
        if self.response_threshold == SimDuration::ZERO {
            return Err("window.response_threshold_ms: must be > 0".into());
        }
        Ok(())
    }

    fn active_threshold(&self) -> SimDuration {
        match self.mode {
            DetectorMode::QueuingTime => self.queuing_threshold,
            DetectorMode::ResponseTime => self.response_threshold,
        }
    }
}

/// Result of one closed window.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub struct WindowReport {
    pub avg_wait: SimDuration,
    pub samples: u64,
    pub overloaded: bool,
}

/// Per-server accumulator of wait samples.
///
/// Owned by exactly one server; all calls are sequential in simulation
/// time. Wait samples are unsigned by construction, so negative waits are
/// unrepresentable rather than checked at run time.
#[derive(Clone, Debug)]
pub struct LoadMonitor {
    config: WindowConfig,
    window_start: SimTime,
    sample_count: u64,
    sample_sum: SimDuration,
}

impl LoadMonitor {
    pub fn new(config: WindowConfig, now: SimTime) -> Self {
        LoadMonitor {
            config,
            window_start: now,
            sample_count: 0,
            sample_sum: SimDuration::ZERO,
        }
    }

    pub fn config(&self) -> &WindowConfig {
        &self.config
    }

    /// Adds one wait sample, closing the window if either bound is hit.
    pub fn record_sample(&mut self, wait: SimDuration, now: SimTime) -> Option<WindowReport> {
        self.sample_count += 1;
        self.sample_sum += wait;
        if now.saturating_since(self.window_start) >= self.config.interval
            || self.sample_count >= self.config.max_samples
        {
            Some(self.close(now))
        } else {
            None
        }
    }

    /// Closes a time-expired window without adding a sample. Lets idle
    /// servers report empty windows.
    pub fn poll_window(&mut self, now: SimTime) -> Option<WindowReport> {
        if now.saturating_since(self.window_start) >= self.config.interval {
            Some(self.close(now))
        } else {
            None
        }
    }

    fn close(&mut self, now: SimTime) -> WindowReport {
        let samples = self.sample_count;
        let avg_wait = if samples == 0 {
            SimDuration::ZERO
        } else {
            self.sample_sum.checked_div(samples).unwrap()
        };
        // Empty windows never report overload: an idle server must relax.
        let overloaded = samples > 0 && avg_wait > self.config.active_threshold();
        self.sample_count = 0;
        self.sample_sum = SimDuration::ZERO;
        self.window_start = now;
        WindowReport {
            avg_wait,
            samples,
            overloaded,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn monitor() -> LoadMonitor {
        LoadMonitor::new(WindowConfig::default(), SimTime::ZERO)
    }

    #[test]
    fn sample_bound_closes_before_interval() {
        // 2000 samples of 25 ms arriving within 0.5 s close on the count
        // criterion with the average above the 20 ms threshold.
        let mut m = monitor();
        let mut report = None;
        for i in 0..2000u64 {
            let now = SimTime::from_nanos(i * 250_000); // 0.25 ms apart
            let r = m.record_sample(SimDuration::from_millis(25), now);
            if i < 1999 {
                assert!(r.is_none());
            } else {
                report = r;
            }
        }
        let report = report.expect("2000th sample closes the window");
        assert_eq!(report.samples, 2000);
        assert_eq!(report.avg_wait, SimDuration::from_millis(25));
        assert!(report.overloaded);
    }

    #[test]
    fn interval_close_reports_quiet_window() {
        let mut m = monitor();
        for i in 0..10u64 {
            let now = SimTime::from_nanos(i * 1_000_000);
            assert!(m.record_sample(SimDuration::from_millis(1), now).is_none());
        }
        let report = m.poll_window(SimTime::from_nanos(1_000_000_000)).unwrap();
        assert_eq!(report.samples, 10);
        assert_eq!(report.avg_wait, SimDuration::from_millis(1));
        assert!(!report.overloaded);
    }

    #[test]
    fn empty_window_poll() {
        let mut m = monitor();
        assert!(m.poll_window(SimTime::from_nanos(999_999_999)).is_none());
        let report = m.poll_window(SimTime::from_nanos(1_000_000_000)).unwrap();
        assert_eq!(report.samples, 0);
        assert_eq!(report.avg_wait, SimDuration::ZERO);
        assert!(!report.overloaded);
    }

    #[test]
    fn late_sample_lands_in_next_window() {
        // Hand-stepped: the empty window [0, 1s) closes at the 1 s poll;
        // a 5 ms sample at 1.2 s then belongs to the next window, which
        // reports quiet at its own boundary.
        let mut m = monitor();
        let first = m.poll_window(SimTime::from_nanos(1_000_000_000)).unwrap();
        assert_eq!(first.samples, 0);
        assert!(!first.overloaded);

        assert!(m
            .record_sample(SimDuration::from_millis(5), SimTime::from_nanos(1_200_000_000))
            .is_none());
        let second = m.poll_window(SimTime::from_nanos(2_000_000_000)).unwrap();
        assert_eq!(second.samples, 1);
        assert_eq!(second.avg_wait, SimDuration::from_millis(5));
        assert!(!second.overloaded);
    }

    #[test]
    fn pending_overload_reported_on_poll() {
        let mut m = monitor();
        for i in 0..5u64 {
            let now = SimTime::from_nanos(i * 1_000_000);
            assert!(m.record_sample(SimDuration::from_millis(30), now).is_none());
        }
        let report = m.poll_window(SimTime::from_nanos(1_000_000_000)).unwrap();
        assert!(report.overloaded);
        assert_eq!(report.avg_wait, SimDuration::from_millis(30));
    }

    #[test]
    fn response_mode_uses_its_own_threshold() {
        let cfg = WindowConfig {
            mode: DetectorMode::ResponseTime,
            ..WindowConfig::default()
        };
        let mut m = LoadMonitor::new(cfg, SimTime::ZERO);
        // 100 ms responses: far above the 20 ms queuing threshold but
        // below the 250 ms response threshold.
        for i in 0..10u64 {
            m.record_sample(SimDuration::from_millis(100), SimTime::from_nanos(i));
        }
        let report = m.poll_window(SimTime::from_nanos(1_000_000_000)).unwrap();
        assert!(!report.overloaded);

        for i in 0..10u64 {
            m.record_sample(
                SimDuration::from_millis(300),
                SimTime::from_nanos(1_000_000_000 + i),
            );
        }
        let report = m.poll_window(SimTime::from_nanos(2_000_000_000)).unwrap();
        assert!(report.overloaded);
    }
}
