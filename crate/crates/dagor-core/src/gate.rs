//! Per-server admission gate.
//!
//! The gate ties the pieces together for one server: every arriving
//! request is counted in the histogram and checked against the current
//! cursor; queuing samples feed the load monitor; window closes move the
//! cursor; responses piggyback the current level so upstream servers can
//! shed doomed requests before sending them.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::admission::{AdmissionConfig, AdmissionController};
use crate::detector::{DetectorMode, LoadMonitor, WindowConfig, WindowReport};
use crate::priority::{AdmissionLevel, RequestEnvelope, ServerId, TaskId};
use crate::time::SimTime;

/// Gate tuning. `early_shed_passthrough` is the fraction of requests that
/// the stored downstream level would reject which are sent anyway. Zero
/// means the stored level is mirrored exactly; a small positive fraction
/// keeps the downstream's histogram populated above its own cursor, which
/// the relaxation walk needs to stop gradually instead of snapping fully
/// open. Production systems get this leakage for free from staleness and
/// partial upstream coverage; a two-service loop has to model it.
#[derive(Copy, Clone, Debug, Serialize, Deserialize)]
pub struct GateConfig {
    pub window: WindowConfig,
    pub admission: AdmissionConfig,
    pub early_shed_passthrough: f64,
}

impl Default for GateConfig {
    fn default() -> Self {
        GateConfig {
            window: WindowConfig::default(),
            admission: AdmissionConfig::default(),
            early_shed_passthrough: 0.0,
        }
    }
}

/// Inbound decision for one arriving request.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ArrivalDecision {
    Enqueue,
    /// Rejected at admission; the response carrying the current level goes
    /// straight back.
    RejectBusy { piggyback: AdmissionLevel },
}

/// Outbound decision for a request about to be sent downstream.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum SendDecision {
    Send,
    /// Shed locally: the stored level for the target would reject it.
    ShedLocal,
}

/// How an invocation ended, as seen by the caller.
#[derive(Copy, Clone, Debug, PartialEq)]
pub enum ResponseOutcome {
    Success { piggyback: Option<AdmissionLevel> },
    RejectedBusy { piggyback: Option<AdmissionLevel> },
    /// A downstream dependency of the responder failed; not retryable.
    Failed { piggyback: Option<AdmissionLevel> },
    /// Synthesized by the caller when no response arrived in time.
    Timeout,
}

impl ResponseOutcome {
    pub fn piggyback(&self) -> Option<AdmissionLevel> {
        match self {
            ResponseOutcome::Success { piggyback }
            | ResponseOutcome::RejectedBusy { piggyback }
            | ResponseOutcome::Failed { piggyback } => *piggyback,
            ResponseOutcome::Timeout => None,
        }
    }

    pub fn is_success(&self) -> bool {
        matches!(self, ResponseOutcome::Success { .. })
    }

    pub fn is_rejection(&self) -> bool {
        matches!(self, ResponseOutcome::RejectedBusy { .. })
    }
}

/// One response message travelling back up the call path.
#[derive(Clone, Debug)]
pub struct ResponseEnvelope {
    pub task_id: TaskId,
    pub responder: ServerId,
    pub requester: ServerId,
    pub outcome: ResponseOutcome,
}

/// The per-server gate.
pub struct Gate {
    monitor: LoadMonitor,
    controller: AdmissionController,
    downstream_levels: HashMap<ServerId, AdmissionLevel>,
    passthrough: f64,
    level_changes: u64,
}

impl Gate {
    pub fn new(config: GateConfig, now: SimTime) -> Self {
        Gate {
            monitor: LoadMonitor::new(config.window, now),
            controller: AdmissionController::new(config.admission),
            downstream_levels: HashMap::new(),
            passthrough: config.early_shed_passthrough,
            level_changes: 0,
        }
    }

    pub fn level(&self) -> AdmissionLevel {
        self.controller.level()
    }

    pub fn level_changes(&self) -> u64 {
        self.level_changes
    }

    pub fn stored_level(&self, target: ServerId) -> Option<AdmissionLevel> {
        self.downstream_levels.get(&target).copied()
    }

    pub fn mode(&self) -> DetectorMode {
        self.monitor.config().mode
    }

    /// Inbound admission: count the arrival, then admit or reject against
    /// the current cursor.
    pub fn on_request_arrival(&mut self, req: &RequestEnvelope) -> ArrivalDecision {
        self.controller.update_histogram(req);
        if self.controller.admits(req) {
            ArrivalDecision::Enqueue
        } else {
            ArrivalDecision::RejectBusy {
                piggyback: self.controller.level(),
            }
        }
    }

    /// Records the queuing-time sample when a request leaves the pending
    /// queue. Returns the new level when this sample closed a window.
    pub fn on_processing_start(
        &mut self,
        req: &RequestEnvelope,
        now: SimTime,
    ) -> Option<AdmissionLevel> {
        if self.monitor.config().mode != DetectorMode::QueuingTime {
            return None;
        }
        let wait = now.saturating_since(req.arrival_time);
        let report = self.monitor.record_sample(wait, now)?;
        Some(self.apply_report(report))
    }

    /// Records the response-time sample when a response leaves the server.
    /// Only meaningful in response-time mode.
    pub fn on_response_sent(
        &mut self,
        arrival_time: SimTime,
        now: SimTime,
    ) -> Option<AdmissionLevel> {
        if self.monitor.config().mode != DetectorMode::ResponseTime {
            return None;
        }
        let span = now.saturating_since(arrival_time);
        let report = self.monitor.record_sample(span, now)?;
        Some(self.apply_report(report))
    }

    /// Closes a time-expired window without a sample.
    pub fn poll_window(&mut self, now: SimTime) -> Option<AdmissionLevel> {
        let report = self.monitor.poll_window(now)?;
        Some(self.apply_report(report))
    }

    /// Outbound local admission against the stored level of the target
    /// replica. `roll` is a caller-supplied uniform draw in `[0, 1)` used
    /// for the passthrough fraction; pass 0.0 sheds, values below the
    /// passthrough send.
    pub fn before_send_downstream(
        &self,
        target: ServerId,
        req: &RequestEnvelope,
        roll: f64,
    ) -> SendDecision {
        match self.downstream_levels.get(&target) {
            Some(stored) if !stored.admits(req.business, req.user) => {
                if roll < self.passthrough {
                    SendDecision::Send
                } else {
                    SendDecision::ShedLocal
                }
            }
            _ => SendDecision::Send,
        }
    }

    /// Learns the responder's level from a piggybacked response.
    /// Last-writer-wins; timeouts carry no level and change nothing.
    pub fn on_response_receive(&mut self, target: ServerId, resp: &ResponseEnvelope) {
        if let Some(level) = resp.outcome.piggyback() {
            self.downstream_levels.insert(target, level);
        }
    }

    fn apply_report(&mut self, report: WindowReport) -> AdmissionLevel {
        let before = self.controller.level();
        let level = self.controller.update_admit_level(report.overloaded);
        self.controller.reset_histogram();
        if level != before {
            self.level_changes += 1;
        }
        level
    }
}
