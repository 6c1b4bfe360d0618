//! Sliding-window counters for connection rates and outbound bytes.
//!
//! Checks are split from charges so a denied packet never leaves a
//! trace in the window: `would_allow` is pure, `commit` records the
//! event after the whole verdict has come out as an allow.

use alloc::collections::VecDeque;

use crate::types::{BandwidthSpec, RateSpec};

/// Exact sliding-window limiter over event timestamps: at most `count`
/// events in any trailing window `(now - period, now]`.
#[derive(Debug, Clone)]
pub struct RateWindow {
    limit: u32,
    period_us: u64,
    events: VecDeque<u64>,
}

impl RateWindow {
    pub fn new(spec: RateSpec) -> Self {
        RateWindow {
            limit: spec.count,
            period_us: spec.unit.period_us(),
            events: VecDeque::new(),
        }
    }

    pub fn would_allow(&self, now_us: u64) -> bool {
        let live = self
            .events
            .iter()
            .filter(|&&e| now_us.saturating_sub(e) < self.period_us)
            .count();
        (live as u32) < self.limit
    }

    pub fn commit(&mut self, now_us: u64) {
        while let Some(&oldest) = self.events.front() {
            if now_us.saturating_sub(oldest) >= self.period_us {
                self.events.pop_front();
            } else {
                break;
            }
        }
        self.events.push_back(now_us);
    }
}

/// Outcome of charging a packet against a byte budget.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChargeOutcome {
    Ok,
    Exceeded,
}

/// Trailing-window byte budget: the sum of charged bytes in the window,
/// including the candidate packet, may not exceed the limit.
#[derive(Debug, Clone)]
pub struct BandwidthWindow {
    limit_bytes: u64,
    period_us: u64,
    events: VecDeque<(u64, u64)>,
}

impl BandwidthWindow {
    pub fn new(spec: BandwidthSpec) -> Self {
        BandwidthWindow {
            limit_bytes: spec.bytes,
            period_us: spec.unit.period_us(),
            events: VecDeque::new(),
        }
    }

    fn live_sum(&self, now_us: u64) -> u64 {
        self.events
            .iter()
            .filter(|(ts, _)| now_us.saturating_sub(*ts) < self.period_us)
            .map(|(_, bytes)| *bytes)
            .sum()
    }

    pub fn would_allow(&self, now_us: u64, bytes: u64) -> bool {
        self.live_sum(now_us) + bytes <= self.limit_bytes
    }

    pub fn commit(&mut self, now_us: u64, bytes: u64) {
        while let Some(&(ts, _)) = self.events.front() {
            if now_us.saturating_sub(ts) >= self.period_us {
                self.events.pop_front();
            } else {
                break;
            }
        }
        self.events.push_back((now_us, bytes));
    }

    /// Charge in one step: on `Ok` the bytes are recorded, on
    /// `Exceeded` nothing changes.
    pub fn charge(&mut self, now_us: u64, bytes: u64) -> ChargeOutcome {
        if self.would_allow(now_us, bytes) {
            self.commit(now_us, bytes);
            ChargeOutcome::Ok
        } else {
            ChargeOutcome::Exceeded
        }
    }
}
