//! Two-tier cache: a priority tier for validated records and a normal tier
//! for unsigned ones. Validated entries overwrite conflicting unsigned
//! entries, cannot be overwritten by them, and end their life cycle at TTL
//! expiry or on replacement by a newer validated insert.

use std::collections::BTreeMap;
use std::fmt;

use crate::dns_model::{validation, QName, QuestionKey, RecordType, ResourceRecord, ResponseMsg};
use crate::SimTime;

pub type CacheKey = (QName, RecordType);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ValidatedSource {
    FreshValidating,
    ProactiveUpdate,
}

impl fmt::Display for ValidatedSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ValidatedSource::FreshValidating => f.write_str("fresh_validating"),
            ValidatedSource::ProactiveUpdate => f.write_str("proactive_update"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CachedValidatedRecord {
    pub record: ResourceRecord,
    pub inserted_at: SimTime,
    pub expires_at: SimTime,
    pub source: ValidatedSource,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CachedNormalRecord {
    pub record: ResourceRecord,
    pub inserted_at: SimTime,
    pub expires_at: SimTime,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormalInsert {
    Inserted,
    /// An unexpired priority entry for the same key holds a different value.
    BlockedByPriority,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Consistency {
    Consistent,
    Conflict(Vec<CacheKey>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CacheError {
    /// insert_validated with a record the oracle does not validate.
    Unvalidated,
}

impl fmt::Display for CacheError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CacheError::Unvalidated => f.write_str("record is not oracle-validated"),
        }
    }
}

impl std::error::Error for CacheError {}

#[derive(Debug, Clone, Default)]
pub struct TwoTierCache {
    priority: BTreeMap<CacheKey, CachedValidatedRecord>,
    normal: BTreeMap<CacheKey, CachedNormalRecord>,
}

impl TwoTierCache {
    pub fn new() -> Self {
        TwoTierCache::default()
    }

    /// Inserts an oracle-validated record into the priority tier. Evicts a
    /// conflicting normal entry for the same key and replaces any existing
    /// priority entry (life-cycle end by replacement).
    pub fn insert_validated(
        &mut self,
        rec: ResourceRecord,
        now: SimTime,
        source: ValidatedSource,
    ) -> Result<(), CacheError> {
        if !validation::record_validates(&rec) {
            return Err(CacheError::Unvalidated);
        }
        let key = rec.key();
        if let Some(normal) = self.normal.get(&key) {
            if normal.record.value != rec.value {
                self.normal.remove(&key);
            }
        }
        let entry = CachedValidatedRecord {
            expires_at: now + rec.ttl,
            inserted_at: now,
            record: rec,
            source,
        };
        self.priority.insert(key, entry);
        Ok(())
    }

    /// Inserts an unsigned record into the normal tier unless an unexpired
    /// priority entry for the same key holds a different value.
    pub fn insert_normal(&mut self, rec: ResourceRecord, now: SimTime) -> NormalInsert {
        let key = rec.key();
        if let Some(p) = self.live_priority(&key, now) {
            if p.record.value != rec.value {
                return NormalInsert::BlockedByPriority;
            }
        }
        let entry = CachedNormalRecord {
            expires_at: now + rec.ttl,
            inserted_at: now,
            record: rec,
        };
        self.normal.insert(key, entry);
        NormalInsert::Inserted
    }

    /// Compares a response against the priority tier. Conflict lists every
    /// key whose response value differs from an unexpired priority entry.
    pub fn check_consistency(&self, resp: &ResponseMsg, now: SimTime) -> Consistency {
        let mut conflicts = Vec::new();
        for rec in &resp.records {
            let key = rec.key();
            if let Some(p) = self.live_priority(&key, now) {
                if p.record.value != rec.value {
                    conflicts.push(key);
                }
            }
        }
        if conflicts.is_empty() {
            Consistency::Consistent
        } else {
            Consistency::Conflict(conflicts)
        }
    }

    /// Removes entries of both tiers whose expiry is at or before `now`.
    pub fn expire(&mut self, now: SimTime) -> usize {
        let before = self.priority.len() + self.normal.len();
        self.priority.retain(|_, e| e.expires_at > now);
        self.normal.retain(|_, e| e.expires_at > now);
        before - (self.priority.len() + self.normal.len())
    }

    /// Lookup for answering clients: priority tier first, then normal.
    pub fn lookup(&self, q: &QuestionKey, now: SimTime) -> Option<&ResourceRecord> {
        let key = (q.qname.clone(), q.qtype);
        if let Some(p) = self.live_priority(&key, now) {
            return Some(&p.record);
        }
        self.normal
            .get(&key)
            .filter(|e| e.expires_at > now)
            .map(|e| &e.record)
    }

    pub fn priority_entry(&self, key: &CacheKey) -> Option<&CachedValidatedRecord> {
        self.priority.get(key)
    }

    /// Expiry of the unexpired priority entry for a key, if any.
    pub fn priority_expiry(&self, key: &CacheKey, now: SimTime) -> Option<SimTime> {
        self.live_priority(key, now).map(|e| e.expires_at)
    }

    pub fn priority_iter(&self) -> impl Iterator<Item = (&CacheKey, &CachedValidatedRecord)> {
        self.priority.iter()
    }

    pub fn normal_iter(&self) -> impl Iterator<Item = (&CacheKey, &CachedNormalRecord)> {
        self.normal.iter()
    }

    pub fn is_empty(&self) -> bool {
        self.priority.is_empty() && self.normal.is_empty()
    }

    fn live_priority(&self, key: &CacheKey, now: SimTime) -> Option<&CachedValidatedRecord> {
        self.priority.get(key).filter(|e| e.expires_at > now)
    }
}
