//! Per-question failure-response counting. The count lives for one
//! resolution transaction and escalation fires when it reaches the
//! threshold of defense.

use std::collections::BTreeMap;
use std::fmt;

use crate::dns_model::QuestionKey;
use crate::SimTime;

pub const DEFAULT_TOD: u32 = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct DetectorConfig {
    /// Threshold of defense; at least 1.
    pub tod: u32,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig { tod: DEFAULT_TOD }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FailureCounter {
    pub question: QuestionKey,
    pub count: u32,
    pub window_started_at: SimTime,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DetectorError {
    /// record_failure without an active transaction for the question.
    NoActiveTransaction(String),
}

impl fmt::Display for DetectorError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DetectorError::NoActiveTransaction(q) => {
                write!(f, "no active transaction for {q}")
            }
        }
    }
}

impl std::error::Error for DetectorError {}

#[derive(Debug, Clone)]
pub struct Detector {
    config: DetectorConfig,
    counters: BTreeMap<QuestionKey, FailureCounter>,
}

impl Detector {
    pub fn new(config: DetectorConfig) -> Self {
        assert!(config.tod >= 1, "tod must be at least 1");
        Detector {
            config,
            counters: BTreeMap::new(),
        }
    }

    pub fn tod(&self) -> u32 {
        self.config.tod
    }

    /// Opens a fresh counting window when a transaction starts.
    pub fn begin_transaction(&mut self, question: &QuestionKey, now: SimTime) {
        self.counters.insert(
            question.clone(),
            FailureCounter {
                question: question.clone(),
                count: 0,
                window_started_at: now,
            },
        );
    }

    /// Counts one failure response. The caller must have classified the
    /// response via `match_response` first; a question without an active
    /// transaction is rejected.
    pub fn record_failure(
        &mut self,
        question: &QuestionKey,
        _now: SimTime,
    ) -> Result<u32, DetectorError> {
        match self.counters.get_mut(question) {
            Some(counter) => {
                counter.count += 1;
                Ok(counter.count)
            }
            None => Err(DetectorError::NoActiveTransaction(question.to_string())),
        }
    }

    /// True once the count has reached the threshold.
    pub fn should_escalate(&self, question: &QuestionKey) -> bool {
        self.count(question) >= self.config.tod
    }

    pub fn count(&self, question: &QuestionKey) -> u32 {
        self.counters.get(question).map_or(0, |c| c.count)
    }

    /// Ends the transaction and resets the count to zero.
    pub fn end_transaction(&mut self, question: &QuestionKey) {
        self.counters.remove(question);
    }
}
