//! Alternative admission policies behind the same decision surface.
//!
//! These exist for comparative experiments: random shedding under
//! overload, a CoDel-style drop-front queue law, and a SEDA-style adaptive
//! token-rate throttle. All of them ignore request priorities.

use serde::{Deserialize, Serialize};

use crate::detector::{LoadMonitor, WindowConfig};
use crate::time::{SimDuration, SimTime};

/// Policy selection and parameters as they appear in scenario config.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ControllerPolicy {
    /// Priority admission with queuing-time detection.
    DagorQ(DagorParams),
    /// Same gate, response-time detection. Only the window mode and
    /// threshold differ.
    DagorR(DagorParams),
    /// Random shedding while overloaded.
    Random,
    /// CoDel drop-front on the pending queue.
    Codel(CodelParams),
    /// SEDA-style adaptive rate throttle.
    Seda(SedaParams),
    /// No admission control at all.
    None,
}

impl ControllerPolicy {
    pub fn name(&self) -> &'static str {
        match self {
            ControllerPolicy::DagorQ(_) => "dagor_q",
            ControllerPolicy::DagorR(_) => "dagor_r",
            ControllerPolicy::Random => "random",
            ControllerPolicy::Codel(_) => "codel",
            ControllerPolicy::Seda(_) => "seda",
            ControllerPolicy::None => "none",
        }
    }

    pub fn dagor_q() -> Self {
        ControllerPolicy::DagorQ(DagorParams::default())
    }

    pub fn dagor_r(response_threshold_ms: f64) -> Self {
        ControllerPolicy::DagorR(DagorParams {
            response_threshold_ms: Some(response_threshold_ms),
            ..DagorParams::default()
        })
    }
}

/// Optional per-service overrides of the global window thresholds.
#[derive(Clone, Debug, Default, Serialize, Deserialize, PartialEq)]
pub struct DagorParams {
    #[serde(default)]
    pub queuing_threshold_ms: Option<f64>,
    #[serde(default)]
    pub response_threshold_ms: Option<f64>,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
pub struct CodelParams {
    #[serde(default = "default_codel_target_ms")]
    pub target_ms: f64,
    #[serde(default = "default_codel_interval_ms")]
    pub interval_ms: f64,
}

fn default_codel_target_ms() -> f64 {
    5.0
}

fn default_codel_interval_ms() -> f64 {
    100.0
}

impl Default for CodelParams {
    fn default() -> Self {
        CodelParams {
            target_ms: default_codel_target_ms(),
            interval_ms: default_codel_interval_ms(),
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
pub struct SedaParams {
    /// 90th-percentile response-time target per window.
    #[serde(default = "default_seda_target_ms")]
    pub target_p90_ms: f64,
    /// Additive increase per quiet window, requests/second.
    #[serde(default = "default_seda_step")]
    pub additive_step: f64,
    /// Multiplicative decrease on a slow window.
    #[serde(default = "default_seda_decrease")]
    pub decrease_factor: f64,
    /// Starting token rate per replica, requests/second.
    #[serde(default = "default_seda_initial")]
    pub initial_rate: f64,
    #[serde(default = "default_seda_min")]
    pub min_rate: f64,
    #[serde(default = "default_seda_max")]
    pub max_rate: f64,
}

fn default_seda_target_ms() -> f64 {
    100.0
}

fn default_seda_step() -> f64 {
    2.0
}

fn default_seda_decrease() -> f64 {
    0.9
}

fn default_seda_initial() -> f64 {
    500.0
}

fn default_seda_min() -> f64 {
    10.0
}

fn default_seda_max() -> f64 {
    100_000.0
}

impl Default for SedaParams {
    fn default() -> Self {
        SedaParams {
            target_p90_ms: default_seda_target_ms(),
            additive_step: default_seda_step(),
            decrease_factor: default_seda_decrease(),
            initial_rate: default_seda_initial(),
            min_rate: default_seda_min(),
            max_rate: default_seda_max(),
        }
    }
}

/// Dequeue verdict under the CoDel law.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum CodelVerdict {
    Deliver,
    Drop,
}

/// CoDel control-law state.
///
/// Dropping begins once the head-of-queue sojourn has stayed above
/// `target` for a full `interval`; while dropping, the spacing between
/// drops shrinks with the inverse square root of the drop count.
#[derive(Clone, Debug)]
pub struct CodelState {
    target: SimDuration,
    interval: SimDuration,
    first_above_time: Option<SimTime>,
    drop_next: SimTime,
    drop_count: u64,
    dropping: bool,
}

impl CodelState {
    pub fn new(params: CodelParams) -> Self {
        CodelState {
            target: SimDuration::from_millis_f64(params.target_ms),
            interval: SimDuration::from_millis_f64(params.interval_ms),
            first_above_time: None,
            drop_next: SimTime::ZERO,
            drop_count: 0,
            dropping: false,
        }
    }

    pub fn drop_count(&self) -> u64 {
        self.drop_count
    }

    fn spacing(&self, count: u64) -> SimDuration {
        let ns = self.interval.as_nanos() as f64 / (count.max(1) as f64).sqrt();
        SimDuration::from_nanos(ns.round() as u64)
    }

    /// Applies the drop law to the request at the queue front.
    pub fn on_dequeue(&mut self, sojourn: SimDuration, now: SimTime) -> CodelVerdict {
        if sojourn < self.target {
            self.first_above_time = None;
            self.dropping = false;
            return CodelVerdict::Deliver;
        }
        let first_above = match self.first_above_time {
            Some(t) => t,
            None => {
                self.first_above_time = Some(now);
                return CodelVerdict::Deliver;
            }
        };
        if !self.dropping {
            if now.saturating_since(first_above) >= self.interval {
                self.dropping = true;
                self.drop_count = 1;
                self.drop_next = now + self.spacing(self.drop_count);
                return CodelVerdict::Drop;
            }
            return CodelVerdict::Deliver;
        }
        if now >= self.drop_next {
            self.drop_count += 1;
            self.drop_next = self.drop_next + self.spacing(self.drop_count);
            return CodelVerdict::Drop;
        }
        CodelVerdict::Deliver
    }
}

/// SEDA-style throttle: a token bucket whose rate adapts to the windowed
/// 90th-percentile response time.
#[derive(Clone, Debug)]
pub struct SedaThrottle {
    params: SedaParams,
    admit_rate: f64,
    tokens: f64,
    last_refill: SimTime,
    window_samples: Vec<SimDuration>,
}

impl SedaThrottle {
    pub fn new(params: SedaParams, now: SimTime) -> Self {
        SedaThrottle {
            params,
            admit_rate: params.initial_rate,
            tokens: 1.0,
            last_refill: now,
            window_samples: Vec::new(),
        }
    }

    pub fn admit_rate(&self) -> f64 {
        self.admit_rate
    }

    /// One token per request; refill is continuous at the current rate
    /// with a burst allowance of 100 ms worth of tokens.
    pub fn try_admit(&mut self, now: SimTime) -> bool {
        let elapsed = now.saturating_since(self.last_refill).as_secs_f64();
        let burst = (self.admit_rate * 0.1).max(1.0);
        self.tokens = (self.tokens + elapsed * self.admit_rate).min(burst);
        self.last_refill = now;
        if self.tokens >= 1.0 {
            self.tokens -= 1.0;
            true
        } else {
            false
        }
    }

    pub fn record_response(&mut self, span: SimDuration) {
        self.window_samples.push(span);
    }

    /// Closes the observation window: additive increase below target,
    /// multiplicative decrease above.
    pub fn on_window_close(&mut self) -> f64 {
        let p90 = percentile_90(&mut self.window_samples);
        self.window_samples.clear();
        self.admit_rate = self.apply(p90);
        self.admit_rate
    }

    fn apply(&self, observed_90p: Option<SimDuration>) -> f64 {
        let target = SimDuration::from_millis_f64(self.params.target_p90_ms);
        let next = match observed_90p {
            Some(p90) if p90 > target => self.admit_rate * self.params.decrease_factor,
            _ => self.admit_rate + self.params.additive_step,
        };
        next.clamp(self.params.min_rate, self.params.max_rate)
    }
}

fn percentile_90(samples: &mut [SimDuration]) -> Option<SimDuration> {
    if samples.is_empty() {
        return None;
    }
    samples.sort_unstable();
    let rank = ((samples.len() as f64) * 0.9).ceil() as usize;
    Some(samples[rank.saturating_sub(1).min(samples.len() - 1)])
}

/// Arrival verdict for the random policy.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum RandomVerdict {
    Admit,
    Reject,
}

/// Random shedding: while the queuing-time monitor says overloaded, reject
/// with a probability estimated from the previous window's excess load.
#[derive(Clone, Debug)]
pub struct RandomShed {
    monitor: LoadMonitor,
    overloaded: bool,
    shed_probability: f64,
    window_arrivals: u64,
    window_served: u64,
}

impl RandomShed {
    pub fn new(window: WindowConfig, now: SimTime) -> Self {
        RandomShed {
            monitor: LoadMonitor::new(window, now),
            overloaded: false,
            shed_probability: 0.0,
            window_arrivals: 0,
            window_served: 0,
        }
    }

    pub fn shed_probability(&self) -> f64 {
        self.shed_probability
    }

    /// `roll` is a uniform draw in `[0, 1)` supplied by the caller.
    pub fn on_arrival(&mut self, roll: f64) -> RandomVerdict {
        self.window_arrivals += 1;
        if self.overloaded && roll < self.shed_probability {
            RandomVerdict::Reject
        } else {
            RandomVerdict::Admit
        }
    }

    pub fn on_processing_start(&mut self, wait: SimDuration, now: SimTime) {
        self.window_served += 1;
        if let Some(report) = self.monitor.record_sample(wait, now) {
            self.close_window(report.overloaded);
        }
    }

    pub fn poll_window(&mut self, now: SimTime) {
        if let Some(report) = self.monitor.poll_window(now) {
            self.close_window(report.overloaded);
        }
    }

    fn close_window(&mut self, overloaded: bool) {
        self.overloaded = overloaded;
        self.shed_probability = if overloaded && self.window_arrivals > 0 {
            (1.0 - self.window_served as f64 / self.window_arrivals as f64).max(0.0)
        } else {
            0.0
        };
        self.window_arrivals = 0;
        self.window_served = 0;
    }
}
