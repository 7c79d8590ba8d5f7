//! The two-mode defense state machine. A question resolves DNSSEC-oblivious
//! until its failure count reaches the threshold or a response contradicts
//! the priority cache; then the question runs DNSSEC-aware: candidate
//! responses are held, a validating request chain is issued, and the first
//! held response consistent with the validated records wins.

use std::collections::BTreeMap;
use std::mem;

use rand_chacha::ChaCha12Rng;

use crate::cache::{Consistency, TwoTierCache, ValidatedSource};
use crate::detector::{Detector, DetectorConfig};
use crate::dns_model::{
    match_response, validation, IdentitySpace, MatchResult, OutstandingQuery, QueryId,
    QueryIdentity, QuestionKey, RecordType, ResourceRecord, ResponseMsg, ServerAddr,
};
use crate::SimTime;

pub type ClientId = u64;
pub type TxId = u64;

pub const DEFAULT_OUTSTANDING_CAP: u32 = 20;
pub const DEFAULT_TRANSACTION_TIMEOUT: f64 = 1.0;
pub const DEFAULT_CHAIN_DEPTH: u32 = 1;
pub const DEFAULT_UPSTREAM_QPS: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Oblivious,
    Aware,
}

/// What pushed a transaction into the aware mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EscalationCause {
    /// Failure count reached the threshold of defense.
    FailureThreshold,
    /// A response conflicted with the priority cache and the transaction
    /// timed out suspecting staleness.
    PriorityConflict,
}

#[derive(Debug, Clone)]
pub struct ResolverConfig {
    /// Cap on identical outstanding queries per question.
    pub max_identical_outstanding: u32,
    /// Transaction deadline, seconds after creation. A proactive update
    /// extends it once by the same amount.
    pub transaction_timeout: f64,
    pub detector: DetectorConfig,
    pub identity_space: IdentitySpace,
    /// Extra DNSSEC round trips needed to complete a validation chain.
    pub chain_depth: u32,
    /// Upstream dispatch rate limit, queries per second.
    pub upstream_qps: f64,
}

impl Default for ResolverConfig {
    fn default() -> Self {
        ResolverConfig {
            max_identical_outstanding: DEFAULT_OUTSTANDING_CAP,
            transaction_timeout: DEFAULT_TRANSACTION_TIMEOUT,
            detector: DetectorConfig::default(),
            identity_space: IdentitySpace::default(),
            chain_depth: DEFAULT_CHAIN_DEPTH,
            upstream_qps: DEFAULT_UPSTREAM_QPS,
        }
    }
}

/// Per-question defense state.
#[derive(Debug, Clone)]
pub struct ResolutionTransaction {
    pub tx_id: TxId,
    pub question: QuestionKey,
    pub mode: Mode,
    pub outstanding: Vec<OutstandingQuery>,
    /// Held responses in arrival order.
    pub holdon: Vec<ResponseMsg>,
    pub validating_request_sent: bool,
    pub validating_hops_done: u32,
    /// Records of a completed validation, the yardstick for late arrivals.
    pub validated_records: Option<Vec<ResourceRecord>>,
    pub deadline: SimTime,
    pub clients: Vec<ClientId>,
    pub priority_conflict: bool,
    pub proactive_attempted: bool,
    pub escalation_cause: Option<EscalationCause>,
    pub created_at: SimTime,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ClientQueryAction {
    AnswerFromCache(Vec<ResourceRecord>),
    NewOutstandingQuery,
    JoinExistingTransaction,
    Rejected,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ResponseAction {
    Accepted(Vec<ResourceRecord>),
    HeldOn,
    CountedAsFailure { escalated: bool },
    Discarded,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ValidatingAction {
    /// Required signatures absent; a follow-up chain transaction was issued.
    NeedsChainQuery(QuestionKey),
    Resolved(Vec<ResourceRecord>),
    /// Validation done but no held response matched; waiting for more.
    AwaitMore,
    /// The oracle rejected the response; it was discarded and a fresh
    /// validating request issued.
    RejectedAndReissued,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TimeoutAction {
    ServFailToClient,
    ProactiveUpdate,
}

/// Why a validating request went out; drives query-load accounting.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DnssecCause {
    FailureThreshold,
    PriorityConflict,
    ChainStep,
    Reissue,
}

/// Outbound work for the simulation engine.
#[derive(Debug, Clone)]
pub enum ResolverEffect {
    /// Send an upstream query; the engine delivers the genuine response.
    DispatchUpstream {
        query: OutstandingQuery,
        dispatch_at: SimTime,
    },
    /// Send a DNSSEC-aware query for the question.
    SendValidating {
        tx_id: TxId,
        question: QuestionKey,
        hop: u32,
        cause: DnssecCause,
    },
    AnswerClients {
        clients: Vec<ClientId>,
        records: Vec<ResourceRecord>,
    },
    ServFailClients {
        clients: Vec<ClientId>,
    },
    ScheduleTimeout {
        tx_id: TxId,
        question: QuestionKey,
        at: SimTime,
    },
}

#[derive(Debug)]
pub struct Resolver {
    config: ResolverConfig,
    detector: Detector,
    cache: TwoTierCache,
    transactions: BTreeMap<QuestionKey, ResolutionTransaction>,
    effects: Vec<ResolverEffect>,
    identity_rng: ChaCha12Rng,
    auth_servers: Vec<ServerAddr>,
    next_query_id: u64,
    next_tx_id: u64,
    next_upstream_slot: SimTime,
}

impl Resolver {
    pub fn new(
        config: ResolverConfig,
        auth_servers: Vec<ServerAddr>,
        identity_rng: ChaCha12Rng,
    ) -> Self {
        assert!(!auth_servers.is_empty(), "at least one auth server");
        assert!(config.max_identical_outstanding >= 1);
        Resolver {
            detector: Detector::new(config.detector.clone()),
            config,
            cache: TwoTierCache::new(),
            transactions: BTreeMap::new(),
            effects: Vec::new(),
            identity_rng,
            auth_servers,
            next_query_id: 0,
            next_tx_id: 0,
            next_upstream_slot: 0.0,
        }
    }

    pub fn config(&self) -> &ResolverConfig {
        &self.config
    }

    pub fn cache(&self) -> &TwoTierCache {
        &self.cache
    }

    pub fn transaction(&self, q: &QuestionKey) -> Option<&ResolutionTransaction> {
        self.transactions.get(q)
    }

    pub fn live_transactions(&self) -> impl Iterator<Item = &ResolutionTransaction> {
        self.transactions.values()
    }

    pub fn failure_count(&self, q: &QuestionKey) -> u32 {
        self.detector.count(q)
    }

    pub fn drain_effects(&mut self) -> Vec<ResolverEffect> {
        mem::take(&mut self.effects)
    }

    pub fn expire_caches(&mut self, now: SimTime) -> usize {
        self.cache.expire(now)
    }

    /// Client query entry point: cache answer, join, or open a transaction
    /// with a fresh outstanding upstream query.
    pub fn on_client_query(
        &mut self,
        client: ClientId,
        q: &QuestionKey,
        now: SimTime,
    ) -> ClientQueryAction {
        self.cache.expire(now);
        if let Some(rec) = self.cache.lookup(q, now) {
            let records = vec![rec.clone()];
            self.effects.push(ResolverEffect::AnswerClients {
                clients: vec![client],
                records: records.clone(),
            });
            return ClientQueryAction::AnswerFromCache(records);
        }
        if let Some(tx) = self.transactions.get_mut(q) {
            tx.clients.push(client);
            if (tx.outstanding.len() as u32) < self.config.max_identical_outstanding {
                let oq = Self::fresh_outstanding(
                    &mut self.identity_rng,
                    &self.config.identity_space,
                    &self.auth_servers,
                    &mut self.next_query_id,
                    tx,
                    now,
                );
                tx.outstanding.push(oq.clone());
                let dispatch_at = self.take_upstream_slot(now);
                self.effects.push(ResolverEffect::DispatchUpstream {
                    query: oq,
                    dispatch_at,
                });
                ClientQueryAction::NewOutstandingQuery
            } else {
                // Cap reached: no new upstream query.
                ClientQueryAction::JoinExistingTransaction
            }
        } else {
            let tx_id = self.next_tx_id;
            self.next_tx_id += 1;
            let mut tx = ResolutionTransaction {
                tx_id,
                question: q.clone(),
                mode: Mode::Oblivious,
                outstanding: Vec::new(),
                holdon: Vec::new(),
                validating_request_sent: false,
                validating_hops_done: 0,
                validated_records: None,
                deadline: now + self.config.transaction_timeout,
                clients: vec![client],
                priority_conflict: false,
                proactive_attempted: false,
                escalation_cause: None,
                created_at: now,
            };
            self.detector.begin_transaction(q, now);
            let oq = Self::fresh_outstanding(
                &mut self.identity_rng,
                &self.config.identity_space,
                &self.auth_servers,
                &mut self.next_query_id,
                &mut tx,
                now,
            );
            tx.outstanding.push(oq.clone());
            let deadline = tx.deadline;
            self.transactions.insert(q.clone(), tx);
            let dispatch_at = self.take_upstream_slot(now);
            self.effects.push(ResolverEffect::DispatchUpstream {
                query: oq,
                dispatch_at,
            });
            self.effects.push(ResolverEffect::ScheduleTimeout {
                tx_id,
                question: q.clone(),
                at: deadline,
            });
            ClientQueryAction::NewOutstandingQuery
        }
    }

    /// Non-validating response entry point.
    pub fn on_response(&mut self, resp: &ResponseMsg, now: SimTime) -> ResponseAction {
        self.cache.expire(now);
        let Some(tx) = self.transactions.get_mut(&resp.question) else {
            return ResponseAction::Discarded;
        };
        match match_response(resp, &tx.outstanding) {
            MatchResult::Unrelated => ResponseAction::Discarded,
            MatchResult::GenuineMatch(_) => {
                // A completed validation judges late arrivals directly.
                if let Some(validated) = tx.validated_records.clone() {
                    return if records_consistent(&resp.records, &validated) {
                        self.accept(resp.question.clone(), resp.records.clone(), now)
                    } else {
                        ResponseAction::Discarded
                    };
                }
                match self.cache.check_consistency(resp, now) {
                    Consistency::Conflict(_) => {
                        let tx = self.transactions.get_mut(&resp.question).unwrap();
                        tx.priority_conflict = true;
                        tx.holdon.push(resp.clone());
                        ResponseAction::HeldOn
                    }
                    Consistency::Consistent => {
                        let tx = self.transactions.get_mut(&resp.question).unwrap();
                        if tx.mode == Mode::Aware {
                            tx.holdon.push(resp.clone());
                            ResponseAction::HeldOn
                        } else {
                            self.accept(resp.question.clone(), resp.records.clone(), now)
                        }
                    }
                }
            }
            MatchResult::FailureAttempt => {
                let count = self
                    .detector
                    .record_failure(&resp.question, now)
                    .expect("transaction exists for counted failure");
                let tod = self.detector.tod();
                let tx = self.transactions.get_mut(&resp.question).unwrap();
                let mut escalated = false;
                if count >= tod && tx.mode == Mode::Oblivious && !tx.validating_request_sent {
                    tx.mode = Mode::Aware;
                    tx.escalation_cause = Some(EscalationCause::FailureThreshold);
                    tx.validating_request_sent = true;
                    tx.validating_hops_done = 0;
                    let tx_id = tx.tx_id;
                    let question = tx.question.clone();
                    self.effects.push(ResolverEffect::SendValidating {
                        tx_id,
                        question,
                        hop: 0,
                        cause: DnssecCause::FailureThreshold,
                    });
                    escalated = true;
                }
                ResponseAction::CountedAsFailure { escalated }
            }
        }
    }

    /// Validating (DNSSEC-aware) response entry point. Returns None when the
    /// transaction is gone (stale in-flight chain).
    pub fn on_validating_response(
        &mut self,
        resp: &ResponseMsg,
        now: SimTime,
    ) -> Option<ValidatingAction> {
        debug_assert!(resp.is_validating);
        self.cache.expire(now);
        let tx = self.transactions.get_mut(&resp.question)?;
        if !tx.validating_request_sent {
            return None;
        }
        if tx.validating_hops_done < self.config.chain_depth {
            // Signatures over the contested data are still missing; walk one
            // more chain step.
            tx.validating_hops_done += 1;
            let hop = tx.validating_hops_done;
            let tx_id = tx.tx_id;
            let question = tx.question.clone();
            let chain_q = chain_question(resp).unwrap_or_else(|| question.clone());
            self.effects.push(ResolverEffect::SendValidating {
                tx_id,
                question,
                hop,
                cause: DnssecCause::ChainStep,
            });
            return Some(ValidatingAction::NeedsChainQuery(chain_q));
        }
        if !validation::validates(&resp.records) {
            // Bogus validating response: discard and solicit a fresh one.
            tx.validating_hops_done = 0;
            let tx_id = tx.tx_id;
            let question = tx.question.clone();
            self.effects.push(ResolverEffect::SendValidating {
                tx_id,
                question,
                hop: 0,
                cause: DnssecCause::Reissue,
            });
            return Some(ValidatingAction::RejectedAndReissued);
        }
        // Validation complete: bank the records, then judge the hold-on list
        // in arrival order.
        let source = match tx.escalation_cause {
            Some(EscalationCause::PriorityConflict) => ValidatedSource::ProactiveUpdate,
            _ => ValidatedSource::FreshValidating,
        };
        let validated = resp.records.clone();
        let question = resp.question.clone();
        for rec in &validated {
            self.cache
                .insert_validated(rec.clone(), now, source)
                .expect("oracle-validated records insert cleanly");
        }
        let tx = self.transactions.get_mut(&question).unwrap();
        tx.validated_records = Some(validated.clone());
        let holdon = mem::take(&mut tx.holdon);
        let winner = holdon
            .into_iter()
            .find(|h| records_consistent(&h.records, &validated));
        match winner {
            Some(h) => {
                let ResponseAction::Accepted(records) = self.accept(question, h.records, now)
                else {
                    unreachable!("accept of a validated winner");
                };
                Some(ValidatingAction::Resolved(records))
            }
            None => Some(ValidatingAction::AwaitMore),
        }
    }

    /// Deadline handler. None when the transaction is gone or the deadline
    /// was extended past `now`.
    pub fn on_timeout(&mut self, tx_id: TxId, now: SimTime) -> Option<TimeoutAction> {
        self.cache.expire(now);
        let question = self
            .transactions
            .values()
            .find(|tx| tx.tx_id == tx_id)
            .map(|tx| tx.question.clone())?;
        let tx = self.transactions.get_mut(&question).unwrap();
        if now < tx.deadline {
            return None;
        }
        if tx.priority_conflict && !tx.proactive_attempted {
            // Stale-cache suspicion: fetch a fresh validating response. Its
            // result both judges the held responses and replaces the cached
            // validating records.
            tx.proactive_attempted = true;
            tx.mode = Mode::Aware;
            tx.escalation_cause
                .get_or_insert(EscalationCause::PriorityConflict);
            // A chain still in flight is already fetching exactly that;
            // extend the deadline and let it finish rather than doubling
            // the chain.
            let chain_in_flight = tx.validating_request_sent && tx.validated_records.is_none();
            if !chain_in_flight {
                tx.validating_request_sent = true;
                tx.validating_hops_done = 0;
                tx.validated_records = None;
            }
            tx.deadline = now + self.config.transaction_timeout;
            let deadline = tx.deadline;
            let cause = match tx.escalation_cause {
                Some(EscalationCause::FailureThreshold) => DnssecCause::FailureThreshold,
                _ => DnssecCause::PriorityConflict,
            };
            if !chain_in_flight {
                self.effects.push(ResolverEffect::SendValidating {
                    tx_id,
                    question: question.clone(),
                    hop: 0,
                    cause,
                });
            }
            self.effects.push(ResolverEffect::ScheduleTimeout {
                tx_id,
                question,
                at: deadline,
            });
            Some(TimeoutAction::ProactiveUpdate)
        } else {
            let clients = tx.clients.clone();
            self.effects
                .push(ResolverEffect::ServFailClients { clients });
            self.end_transaction(&question);
            Some(TimeoutAction::ServFailToClient)
        }
    }

    /// Ends every live transaction with a servfail; used when a run is cut
    /// off at its horizon so each client query still terminates.
    pub fn abort_all(&mut self) -> usize {
        let questions: Vec<QuestionKey> = self.transactions.keys().cloned().collect();
        let n = questions.len();
        for q in questions {
            let clients = self.transactions[&q].clients.clone();
            self.effects
                .push(ResolverEffect::ServFailClients { clients });
            self.end_transaction(&q);
        }
        n
    }

    fn accept(
        &mut self,
        question: QuestionKey,
        records: Vec<ResourceRecord>,
        now: SimTime,
    ) -> ResponseAction {
        for rec in &records {
            if !rec.signed {
                // Blocked inserts cannot happen here: conflicting responses
                // were held, not accepted.
                let _ = self.cache.insert_normal(rec.clone(), now);
            }
        }
        let tx = self.transactions.get_mut(&question).unwrap();
        let clients = mem::take(&mut tx.clients);
        self.effects.push(ResolverEffect::AnswerClients {
            clients,
            records: records.clone(),
        });
        self.end_transaction(&question);
        ResponseAction::Accepted(records)
    }

    fn end_transaction(&mut self, question: &QuestionKey) {
        self.detector.end_transaction(question);
        self.transactions.remove(question);
    }

    fn take_upstream_slot(&mut self, now: SimTime) -> SimTime {
        let at = now.max(self.next_upstream_slot);
        self.next_upstream_slot = at + 1.0 / self.config.upstream_qps;
        at
    }

    /// Draws an identity distinct from the transaction's live outstanding
    /// ones. When the space is smaller than the outstanding count the
    /// distinctness requirement is dropped after a bounded number of tries.
    fn fresh_outstanding(
        rng: &mut ChaCha12Rng,
        space: &IdentitySpace,
        servers: &[ServerAddr],
        next_query_id: &mut u64,
        tx: &mut ResolutionTransaction,
        now: SimTime,
    ) -> OutstandingQuery {
        use rand::Rng;
        let server = servers[rng.gen_range(0..servers.len())].clone();
        let mut identity: QueryIdentity = space.sample(rng, server.clone());
        let mut tries = 0;
        while tx.outstanding.iter().any(|o| o.identity == identity) && tries < 64 {
            identity = space.sample(rng, server.clone());
            tries += 1;
        }
        let id = QueryId(*next_query_id);
        *next_query_id += 1;
        OutstandingQuery {
            id,
            question: tx.question.clone(),
            identity,
            sent_at: now,
        }
    }
}

/// Hold-on consistency: the candidate agrees with the validated set on every
/// shared (owner, rtype) key and shares at least one.
fn records_consistent(candidate: &[ResourceRecord], validated: &[ResourceRecord]) -> bool {
    let mut overlap = false;
    for c in candidate {
        for v in validated {
            if c.owner == v.owner && c.rtype == v.rtype {
                overlap = true;
                if c.value != v.value {
                    return false;
                }
            }
        }
    }
    overlap
}

/// Follow-up question for a chain step: the contested record's owner and
/// type, soliciting the missing signatures.
fn chain_question(resp: &ResponseMsg) -> Option<QuestionKey> {
    resp.records
        .first()
        .map(|r| QuestionKey::new(r.owner.clone(), RecordType::A))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dns_model::QName;
    use crate::rng;

    fn test_resolver(tod: u32, chain_depth: u32) -> Resolver {
        let config = ResolverConfig {
            detector: DetectorConfig { tod },
            chain_depth,
            upstream_qps: 1e9,
            ..ResolverConfig::default()
        };
        Resolver::new(
            config,
            vec![ServerAddr::new("ns1")],
            rng::derive(1, rng::stream::RESOLVER_IDENTITIES),
        )
    }

    fn q() -> QuestionKey {
        QuestionKey::a("asq50pn.foo.com").unwrap()
    }

    fn ns_record(value: &str, signed: bool, authentic: bool) -> ResourceRecord {
        ResourceRecord::new(
            QName::parse("ns.foo.com").unwrap(),
            RecordType::A,
            value,
            600.0,
            signed,
            authentic,
        )
    }

    fn genuine_resp(res: &Resolver, question: &QuestionKey, value: &str) -> ResponseMsg {
        let tx = res.transaction(question).unwrap();
        ResponseMsg {
            question: question.clone(),
            identity: tx.outstanding[0].identity.clone(),
            records: vec![ns_record(value, false, true)],
            is_validating: false,
        }
    }

    fn forged_resp(res: &Resolver, question: &QuestionKey, value: &str) -> ResponseMsg {
        let tx = res.transaction(question).unwrap();
        let mut identity = tx.outstanding[0].identity.clone();
        identity.txid ^= 1;
        ResponseMsg {
            question: question.clone(),
            identity,
            records: vec![ResourceRecord::new(
                QName::parse("ns.foo.com").unwrap(),
                RecordType::A,
                value,
                600.0,
                false,
                false,
            )],
            is_validating: false,
        }
    }

    fn validating_resp(question: &QuestionKey, value: &str) -> ResponseMsg {
        ResponseMsg {
            question: question.clone(),
            identity: QueryIdentity {
                txid: 0,
                port: 1024,
                server: ServerAddr::new("ns1"),
            },
            records: vec![ns_record(value, true, true)],
            is_validating: true,
        }
    }

    #[test]
    fn fresh_question_opens_outstanding_query() {
        let mut res = test_resolver(3, 0);
        assert_eq!(
            res.on_client_query(1, &q(), 0.0),
            ClientQueryAction::NewOutstandingQuery
        );
        let effects = res.drain_effects();
        assert!(effects
            .iter()
            .any(|e| matches!(e, ResolverEffect::DispatchUpstream { .. })));
        assert!(effects
            .iter()
            .any(|e| matches!(e, ResolverEffect::ScheduleTimeout { .. })));
    }

    #[test]
    fn cap_reached_joins_existing_transaction() {
        let mut res = test_resolver(3, 0);
        for c in 0..20 {
            assert_eq!(
                res.on_client_query(c, &q(), 0.0),
                ClientQueryAction::NewOutstandingQuery
            );
        }
        assert_eq!(
            res.on_client_query(20, &q(), 0.0),
            ClientQueryAction::JoinExistingTransaction
        );
        let tx = res.transaction(&q()).unwrap();
        assert_eq!(tx.outstanding.len(), 20);
        assert_eq!(tx.clients.len(), 21);
        // Concurrent outstanding identities are pairwise distinct.
        for (i, a) in tx.outstanding.iter().enumerate() {
            for b in &tx.outstanding[i + 1..] {
                assert_ne!(a.identity, b.identity);
            }
        }
    }

    #[test]
    fn priority_cache_hit_answers_immediately() {
        let mut res = test_resolver(3, 0);
        res.cache
            .insert_validated(
                ResourceRecord::new(q().qname, RecordType::A, "X.X.X.X", 600.0, true, true),
                0.0,
                ValidatedSource::FreshValidating,
            )
            .unwrap();
        match res.on_client_query(1, &q(), 1.0) {
            ClientQueryAction::AnswerFromCache(records) => {
                assert_eq!(records[0].value, "X.X.X.X")
            }
            other => panic!("expected cache answer, got {other:?}"),
        }
    }

    #[test]
    fn oblivious_genuine_response_is_accepted_and_cached() {
        let mut res = test_resolver(3, 0);
        res.on_client_query(1, &q(), 0.0);
        let resp = genuine_resp(&res, &q(), "X.X.X.X");
        match res.on_response(&resp, 0.02) {
            ResponseAction::Accepted(records) => assert_eq!(records[0].value, "X.X.X.X"),
            other => panic!("expected accept, got {other:?}"),
        }
        assert!(res.transaction(&q()).is_none());
        let key = (QName::parse("ns.foo.com").unwrap(), RecordType::A);
        assert!(res.cache.normal_iter().any(|(k, _)| k == &key));
    }

    #[test]
    fn escalation_fires_on_exactly_the_tod_th_failure() {
        let mut res = test_resolver(3, 0);
        res.on_client_query(1, &q(), 0.0);
        for i in 1..=2 {
            let resp = forged_resp(&res, &q(), "Y.Y.Y.Y");
            assert_eq!(
                res.on_response(&resp, 0.001 * i as f64),
                ResponseAction::CountedAsFailure { escalated: false }
            );
        }
        assert_eq!(res.transaction(&q()).unwrap().mode, Mode::Oblivious);
        let resp = forged_resp(&res, &q(), "Y.Y.Y.Y");
        assert_eq!(
            res.on_response(&resp, 0.003),
            ResponseAction::CountedAsFailure { escalated: true }
        );
        let tx = res.transaction(&q()).unwrap();
        assert_eq!(tx.mode, Mode::Aware);
        assert!(tx.validating_request_sent);
        let validating: Vec<_> = res
            .drain_effects()
            .into_iter()
            .filter(|e| matches!(e, ResolverEffect::SendValidating { .. }))
            .collect();
        assert_eq!(validating.len(), 1);
        // Further failures never re-escalate: one chain per transaction.
        let resp = forged_resp(&res, &q(), "Y.Y.Y.Y");
        assert_eq!(
            res.on_response(&resp, 0.004),
            ResponseAction::CountedAsFailure { escalated: false }
        );
        assert!(res
            .drain_effects()
            .iter()
            .all(|e| !matches!(e, ResolverEffect::SendValidating { .. })));
    }

    #[test]
    fn aware_mode_holds_matching_responses() {
        let mut res = test_resolver(1, 0);
        res.on_client_query(1, &q(), 0.0);
        let bogus = forged_resp(&res, &q(), "Y.Y.Y.Y");
        res.on_response(&bogus, 0.01); // tod=1: escalates immediately
        assert_eq!(res.transaction(&q()).unwrap().mode, Mode::Aware);
        let genuine = genuine_resp(&res, &q(), "X.X.X.X");
        assert_eq!(res.on_response(&genuine, 0.02), ResponseAction::HeldOn);
        // A lucky full-identity forgery is held too, not accepted.
        let mut lucky = forged_resp(&res, &q(), "Y.Y.Y.Y");
        lucky.identity = res.transaction(&q()).unwrap().outstanding[0]
            .identity
            .clone();
        assert_eq!(res.on_response(&lucky, 0.03), ResponseAction::HeldOn);
        assert_eq!(res.transaction(&q()).unwrap().holdon.len(), 2);
    }

    #[test]
    fn priority_conflict_holds_even_in_oblivious_mode() {
        let mut res = test_resolver(3, 0);
        res.cache
            .insert_validated(
                ns_record("X.X.X.X", true, true),
                0.0,
                ValidatedSource::FreshValidating,
            )
            .unwrap();
        res.on_client_query(1, &q(), 1.0);
        let resp = genuine_resp(&res, &q(), "Z.Z.Z.Z");
        assert_eq!(res.on_response(&resp, 1.02), ResponseAction::HeldOn);
        let tx = res.transaction(&q()).unwrap();
        assert_eq!(tx.mode, Mode::Oblivious);
        assert!(tx.priority_conflict);
    }

    #[test]
    fn validation_resolves_first_consistent_holdon_in_arrival_order() {
        let mut res = test_resolver(1, 0);
        res.on_client_query(1, &q(), 0.0);
        let bogus_trigger = forged_resp(&res, &q(), "Y.Y.Y.Y");
        res.on_response(&bogus_trigger, 0.01);
        // Bogus lucky guess arrives first, genuine second.
        let mut lucky = forged_resp(&res, &q(), "Y.Y.Y.Y");
        lucky.identity = res.transaction(&q()).unwrap().outstanding[0]
            .identity
            .clone();
        res.on_response(&lucky, 0.02);
        let genuine = genuine_resp(&res, &q(), "X.X.X.X");
        res.on_response(&genuine, 0.03);
        res.drain_effects();
        let action = res
            .on_validating_response(&validating_resp(&q(), "X.X.X.X"), 0.04)
            .unwrap();
        match action {
            ValidatingAction::Resolved(records) => assert_eq!(records[0].value, "X.X.X.X"),
            other => panic!("expected resolution, got {other:?}"),
        }
        // The validated record is in the priority cache.
        let key = (QName::parse("ns.foo.com").unwrap(), RecordType::A);
        assert_eq!(
            res.cache.priority_entry(&key).unwrap().record.value,
            "X.X.X.X"
        );
        assert!(res.transaction(&q()).is_none());
    }

    #[test]
    fn arrival_order_breaks_ties_between_matching_holdons() {
        let mut res = test_resolver(1, 0);
        res.on_client_query(1, &q(), 0.0);
        let trigger = forged_resp(&res, &q(), "Y.Y.Y.Y");
        res.on_response(&trigger, 0.01);
        let mut first = genuine_resp(&res, &q(), "X.X.X.X");
        first.records[0].ttl = 111.0;
        res.on_response(&first, 0.02);
        let mut second = genuine_resp(&res, &q(), "X.X.X.X");
        second.records[0].ttl = 222.0;
        res.on_response(&second, 0.03);
        let action = res
            .on_validating_response(&validating_resp(&q(), "X.X.X.X"), 0.04)
            .unwrap();
        match action {
            ValidatingAction::Resolved(records) => assert_eq!(records[0].ttl, 111.0),
            other => panic!("expected resolution, got {other:?}"),
        }
    }

    #[test]
    fn empty_holdon_awaits_more_then_accepts_consistent_late_arrival() {
        let mut res = test_resolver(1, 0);
        res.on_client_query(1, &q(), 0.0);
        let trigger = forged_resp(&res, &q(), "Y.Y.Y.Y");
        res.on_response(&trigger, 0.01);
        assert_eq!(
            res.on_validating_response(&validating_resp(&q(), "X.X.X.X"), 0.02),
            Some(ValidatingAction::AwaitMore)
        );
        // Late bogus arrival is discarded against the validated records.
        let mut bogus = forged_resp(&res, &q(), "Y.Y.Y.Y");
        bogus.identity = res.transaction(&q()).unwrap().outstanding[0]
            .identity
            .clone();
        assert_eq!(res.on_response(&bogus, 0.03), ResponseAction::Discarded);
        // Late genuine arrival is checked and accepted.
        let genuine = genuine_resp(&res, &q(), "X.X.X.X");
        assert!(matches!(
            res.on_response(&genuine, 0.04),
            ResponseAction::Accepted(_)
        ));
    }

    #[test]
    fn chain_step_issues_follow_up_transaction() {
        let mut res = test_resolver(1, 1);
        res.on_client_query(1, &q(), 0.0);
        let trigger = forged_resp(&res, &q(), "Y.Y.Y.Y");
        res.on_response(&trigger, 0.01);
        let genuine = genuine_resp(&res, &q(), "X.X.X.X");
        res.on_response(&genuine, 0.02);
        res.drain_effects();
        // First validating response lacks the signature chain.
        let action = res
            .on_validating_response(&validating_resp(&q(), "X.X.X.X"), 0.03)
            .unwrap();
        assert_eq!(
            action,
            ValidatingAction::NeedsChainQuery(QuestionKey::a("ns.foo.com").unwrap())
        );
        let effects = res.drain_effects();
        assert!(effects.iter().any(|e| matches!(
            e,
            ResolverEffect::SendValidating {
                hop: 1,
                cause: DnssecCause::ChainStep,
                ..
            }
        )));
        // Second one completes the chain and resolves.
        let action = res
            .on_validating_response(&validating_resp(&q(), "X.X.X.X"), 0.05)
            .unwrap();
        assert!(matches!(action, ValidatingAction::Resolved(_)));
    }

    #[test]
    fn bogus_validating_response_is_rejected_and_reissued() {
        let mut res = test_resolver(1, 0);
        res.on_client_query(1, &q(), 0.0);
        let trigger = forged_resp(&res, &q(), "Y.Y.Y.Y");
        res.on_response(&trigger, 0.01);
        res.drain_effects();
        let mut bogus_validating = validating_resp(&q(), "Y.Y.Y.Y");
        bogus_validating.records = vec![ns_record("Y.Y.Y.Y", true, false)];
        let action = res.on_validating_response(&bogus_validating, 0.02).unwrap();
        assert_eq!(action, ValidatingAction::RejectedAndReissued);
        let effects = res.drain_effects();
        assert!(effects.iter().any(|e| matches!(
            e,
            ResolverEffect::SendValidating {
                cause: DnssecCause::Reissue,
                ..
            }
        )));
        // Nothing unauthentic reached the priority cache.
        assert!(res.cache.priority_iter().next().is_none());
    }

    #[test]
    fn timeout_without_conflict_servfails() {
        let mut res = test_resolver(3, 0);
        res.on_client_query(1, &q(), 0.0);
        let tx_id = res.transaction(&q()).unwrap().tx_id;
        res.drain_effects();
        assert_eq!(
            res.on_timeout(tx_id, 1.0),
            Some(TimeoutAction::ServFailToClient)
        );
        assert!(res.transaction(&q()).is_none());
        assert!(res
            .drain_effects()
            .iter()
            .any(|e| matches!(e, ResolverEffect::ServFailClients { .. })));
    }

    #[test]
    fn timeout_with_conflict_runs_proactive_update_once() {
        let mut res = test_resolver(3, 0);
        res.cache
            .insert_validated(
                ns_record("X.X.X.X", true, true),
                0.0,
                ValidatedSource::FreshValidating,
            )
            .unwrap();
        res.on_client_query(1, &q(), 1.0);
        // Genuine response carries the post-update value: conflict, held.
        let resp = genuine_resp(&res, &q(), "X2.X2.X2.X2");
        assert_eq!(res.on_response(&resp, 1.02), ResponseAction::HeldOn);
        let tx_id = res.transaction(&q()).unwrap().tx_id;
        res.drain_effects();
        assert_eq!(
            res.on_timeout(tx_id, 2.0),
            Some(TimeoutAction::ProactiveUpdate)
        );
        let effects = res.drain_effects();
        assert!(effects.iter().any(|e| matches!(
            e,
            ResolverEffect::SendValidating {
                cause: DnssecCause::PriorityConflict,
                ..
            }
        )));
        // Fresh validating response revalidates the held answer and
        // replaces the cached entry.
        let action = res
            .on_validating_response(&validating_resp(&q(), "X2.X2.X2.X2"), 2.02)
            .unwrap();
        match action {
            ValidatingAction::Resolved(records) => assert_eq!(records[0].value, "X2.X2.X2.X2"),
            other => panic!("expected resolution, got {other:?}"),
        }
        let key = (QName::parse("ns.foo.com").unwrap(), RecordType::A);
        let entry = res.cache.priority_entry(&key).unwrap();
        assert_eq!(entry.record.value, "X2.X2.X2.X2");
        assert_eq!(entry.source, ValidatedSource::ProactiveUpdate);
    }

    #[test]
    fn second_timeout_after_proactive_update_servfails_and_keeps_entry() {
        let mut res = test_resolver(3, 0);
        res.cache
            .insert_validated(
                ns_record("X.X.X.X", true, true),
                0.0,
                ValidatedSource::FreshValidating,
            )
            .unwrap();
        res.on_client_query(1, &q(), 1.0);
        let resp = genuine_resp(&res, &q(), "X2.X2.X2.X2");
        res.on_response(&resp, 1.02);
        let tx_id = res.transaction(&q()).unwrap().tx_id;
        assert_eq!(
            res.on_timeout(tx_id, 2.0),
            Some(TimeoutAction::ProactiveUpdate)
        );
        assert_eq!(
            res.on_timeout(tx_id, 3.0),
            Some(TimeoutAction::ServFailToClient)
        );
        // Stale entry retained until its TTL expiry.
        let key = (QName::parse("ns.foo.com").unwrap(), RecordType::A);
        assert_eq!(
            res.cache.priority_entry(&key).unwrap().record.value,
            "X.X.X.X"
        );
    }

    #[test]
    fn stale_timeout_before_extended_deadline_is_ignored() {
        let mut res = test_resolver(3, 0);
        res.cache
            .insert_validated(
                ns_record("X.X.X.X", true, true),
                0.0,
                ValidatedSource::FreshValidating,
            )
            .unwrap();
        res.on_client_query(1, &q(), 1.0);
        let resp = genuine_resp(&res, &q(), "X2.X2.X2.X2");
        res.on_response(&resp, 1.02);
        let tx_id = res.transaction(&q()).unwrap().tx_id;
        res.on_timeout(tx_id, 2.0);
        // Old timeout event firing again before the new deadline: no-op.
        assert_eq!(res.on_timeout(tx_id, 2.5), None);
    }

    #[test]
    fn timeout_during_inflight_chain_extends_without_second_chain() {
        // Threshold escalation starts a chain; a conflicting response then
        // marks the transaction. A deadline hitting before the chain
        // completes must not issue a second chain, only extend.
        let mut res = test_resolver(1, 1);
        res.cache
            .insert_validated(
                ns_record("X.X.X.X", true, true),
                0.0,
                ValidatedSource::FreshValidating,
            )
            .unwrap();
        res.on_client_query(1, &q(), 1.0);
        let trigger = forged_resp(&res, &q(), "Y.Y.Y.Y");
        assert_eq!(
            res.on_response(&trigger, 1.01),
            ResponseAction::CountedAsFailure { escalated: true }
        );
        // Genuine response carrying the post-update value conflicts with
        // the stale entry and is held.
        let updated = genuine_resp(&res, &q(), "X2.X2.X2.X2");
        assert_eq!(res.on_response(&updated, 1.02), ResponseAction::HeldOn);
        assert!(res.transaction(&q()).unwrap().priority_conflict);
        res.drain_effects();

        let tx_id = res.transaction(&q()).unwrap().tx_id;
        assert_eq!(
            res.on_timeout(tx_id, 2.0),
            Some(TimeoutAction::ProactiveUpdate)
        );
        let effects = res.drain_effects();
        assert!(
            effects
                .iter()
                .all(|e| !matches!(e, ResolverEffect::SendValidating { .. })),
            "no second chain while one is in flight"
        );
        assert!(effects
            .iter()
            .any(|e| matches!(e, ResolverEffect::ScheduleTimeout { .. })));
        // The original chain finishes and resolves against the held answer.
        assert_eq!(
            res.on_validating_response(&validating_resp(&q(), "X2.X2.X2.X2"), 2.01),
            Some(ValidatingAction::NeedsChainQuery(
                QuestionKey::a("ns.foo.com").unwrap()
            ))
        );
        let action = res
            .on_validating_response(&validating_resp(&q(), "X2.X2.X2.X2"), 2.03)
            .unwrap();
        match action {
            ValidatingAction::Resolved(records) => assert_eq!(records[0].value, "X2.X2.X2.X2"),
            other => panic!("expected resolution, got {other:?}"),
        }
    }
}
