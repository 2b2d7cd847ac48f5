//! Histogram-driven adaptation of the compound admission level.
//!
//! Each server counts incoming requests per compound level over the
//! detection window. At window close the cursor steps down (shedding about
//! an `alpha` fraction of what was admitted) when the window was
//! overloaded, or steps up (re-admitting about a `beta` fraction of the
//! incoming load) otherwise. Movement is one user-priority notch at a
//! time, wrapping across business levels, and the stopping rule compares
//! the walked prefix against the fractional expectation exactly — no
//! rounding.

use serde::{Deserialize, Serialize};

use crate::priority::{
    AdmissionLevel, BusinessPriority, RequestEnvelope, UserPriority, USER_LEVELS, USER_MAX,
    USER_MIN,
};

/// Tuning knobs for the adaptive controller.
#[derive(Copy, Clone, Debug, Serialize, Deserialize)]
pub struct AdmissionConfig {
    /// Fraction of admitted load to shed after an overloaded window.
    pub alpha: f64,
    /// Fraction of incoming load to re-admit after a quiet window.
    pub beta: f64,
    /// Lowest business priority in use; the histogram covers
    /// `[0, business_max] x [0, 127]`.
    pub business_max: u8,
}

impl Default for AdmissionConfig {
    fn default() -> Self {
        AdmissionConfig {
            alpha: 0.05,
            beta: 0.01,
            business_max: crate::priority::DEFAULT_BUSINESS_MAX,
        }
    }
}

impl AdmissionConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err("admission.alpha: must be in (0, 1)".into());
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err("admission.beta: must be in (0, 1)".into());
        }
        Ok(())
    }
}

/// Per-window counters over the compound level grid.
#[derive(Clone, Debug)]
pub struct RequestHistogram {
    counters: Vec<u64>,
    business_max: u8,
    incoming: u64,
    admitted: u64,
}

impl RequestHistogram {
    pub fn new(business_max: u8) -> Self {
        let cells = (business_max as usize + 1) * USER_LEVELS as usize;
        RequestHistogram {
            counters: vec![0; cells],
            business_max,
            incoming: 0,
            admitted: 0,
        }
    }

    pub fn incoming(&self) -> u64 {
        self.incoming
    }

    pub fn admitted(&self) -> u64 {
        self.admitted
    }

    pub fn count_at(&self, b: BusinessPriority, u: UserPriority) -> u64 {
        self.counters[self.cell(b, u)]
    }

    fn cell(&self, b: BusinessPriority, u: UserPriority) -> usize {
        debug_assert!(b.0 <= self.business_max);
        b.0 as usize * USER_LEVELS as usize + u.0 as usize
    }

    fn reset(&mut self) {
        self.counters.fill(0);
        self.incoming = 0;
        self.admitted = 0;
    }
}

/// The admission cursor plus the histogram that drives it.
#[derive(Clone, Debug)]
pub struct AdmissionController {
    level: AdmissionLevel,
    config: AdmissionConfig,
    histogram: RequestHistogram,
}

impl AdmissionController {
    /// Starts fully open: nothing is shed until an overloaded window.
    pub fn new(config: AdmissionConfig) -> Self {
        AdmissionController {
            level: AdmissionLevel::fully_open(config.business_max),
            config,
            histogram: RequestHistogram::new(config.business_max),
        }
    }

    pub fn level(&self) -> AdmissionLevel {
        self.level
    }

    pub fn config(&self) -> &AdmissionConfig {
        &self.config
    }

    pub fn histogram(&self) -> &RequestHistogram {
        &self.histogram
    }

    /// True when the request's priorities pass the current cursor.
    pub fn admits(&self, req: &RequestEnvelope) -> bool {
        self.level.admits(req.business, req.user)
    }

    /// Zeroes the window counters; the cursor itself is untouched.
    pub fn reset_histogram(&mut self) {
        self.histogram.reset();
    }

    /// Counts one arriving request, admitted or not.
    pub fn update_histogram(&mut self, req: &RequestEnvelope) {
        debug_assert!(req.business.0 <= self.config.business_max);
        self.histogram.incoming += 1;
        let cell = self.histogram.cell(req.business, req.user);
        self.histogram.counters[cell] += 1;
        if self.level.admits(req.business, req.user) {
            self.histogram.admitted += 1;
        }
    }

    /// Moves the cursor once per window according to the overload flag and
    /// returns the new level. The caller resets the histogram afterwards.
    pub fn update_admit_level(&mut self, overloaded: bool) -> AdmissionLevel {
        let admitted = self.histogram.admitted as f64;
        let mut prefix = admitted;
        let mut b = self.level.business.0;
        let mut u = self.level.user.0;
        let b_max = self.config.business_max;

        if overloaded {
            let expected = (1.0 - self.config.alpha) * admitted;
            while prefix > expected && (b, u) > (0, USER_MIN) {
                if u == USER_MIN {
                    b -= 1;
                    u = USER_MAX;
                } else {
                    u -= 1;
                }
                let cell = b as usize * USER_LEVELS as usize + u as usize;
                prefix -= self.histogram.counters[cell] as f64;
            }
        } else {
            let expected = admitted + self.config.beta * self.histogram.incoming as f64;
            while prefix < expected && (b, u) < (b_max, USER_MAX) {
                if u == USER_MAX {
                    b += 1;
                    u = USER_MIN;
                } else {
                    u += 1;
                }
                let cell = b as usize * USER_LEVELS as usize + u as usize;
                prefix += self.histogram.counters[cell] as f64;
            }
        }

        self.level = AdmissionLevel::new(b, u);
        self.level
    }

    #[cfg(test)]
    pub(crate) fn set_level(&mut self, level: AdmissionLevel) {
        self.level = level;
    }
}
