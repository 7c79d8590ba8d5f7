//! Deterministic discrete-event simulation connecting the resolver, a
//! Kaminsky-class attacker, clients, and an authoritative server model.
//! Continuous time in double-precision seconds; the event queue orders by
//! (time, insertion sequence), so ties resolve FIFO and an identical
//! scenario (seed included) replays an identical trace.
//!
//! Responses to questions under the attacked domain all carry the contested
//! record: the address of the target's name server. That is the value the
//! attacker tries to poison and the one the priority cache shields across
//! rounds.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap};
use std::fmt;

use rand_chacha::ChaCha12Rng;

use crate::analytics::TtlDistribution;
use crate::attacker::{contested_key, AttackConfig, Attacker};
use crate::cache::CacheKey;
use crate::dns_model::{
    validation, QName, QueryId, QuestionKey, RecordType, ResourceRecord, ResponseMsg, ServerAddr,
};
use crate::exec;
use crate::resolver::{
    ClientId, ClientQueryAction, DnssecCause, Mode, Resolver, ResolverConfig, ResolverEffect,
    ResponseAction, TimeoutAction, TxId, ValidatingAction,
};
use crate::rng;
use crate::SimTime;

/// How recurring sources space their events.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArrivalKind {
    /// Fixed gaps of 1/rate.
    Deterministic,
    /// Exponential gaps of mean 1/rate.
    Poisson,
}

/// Authoritative update model.
#[derive(Debug, Clone, PartialEq)]
pub enum UpdateProcess {
    None,
    Exponential { mean: f64 },
    Scripted(Vec<SimTime>),
}

/// The authoritative side: zone contents, service timing, update process.
#[derive(Debug, Clone)]
pub struct AuthServerModel {
    /// Ground-truth zone values per (owner, rtype).
    pub zone: BTreeMap<CacheKey, String>,
    /// Seconds from query dispatch to response delivery (the attacker's
    /// window of opportunity).
    pub response_time: f64,
    /// Responses per second the servers sustain.
    pub respond_rate: f64,
    pub update_process: UpdateProcess,
    /// In-flight queries beyond this are dropped silently.
    pub outstanding_cap: u32,
    pub servers: Vec<ServerAddr>,
    /// TTL stamped on validating (DNSSEC) responses: the life cycle of
    /// validating records.
    pub lifecycle: f64,
}

impl AuthServerModel {
    pub fn table_defaults() -> Self {
        AuthServerModel {
            zone: BTreeMap::new(),
            response_time: 0.02,
            respond_rate: 100.0,
            update_process: UpdateProcess::None,
            outstanding_cap: 10_000,
            servers: vec![
                ServerAddr::new("ns-a.example"),
                ServerAddr::new("ns-b.example"),
            ],
            lifecycle: 36_000.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub resolver: ResolverConfig,
    pub attacker: Option<AttackConfig>,
    pub auth: AuthServerModel,
    pub target_domain: QName,
    pub seed: u64,
    pub duration: f64,
    /// TTL model for normal (unsigned) records.
    pub ttl_dist: TtlDistribution,
    pub arrivals: ArrivalKind,
    /// Benign client load on unrelated domains, queries per second.
    pub benign_other_qps: f64,
    /// Benign client load on fresh subdomains of the target, queries per
    /// second; this is the traffic that exposes stale priority-cache
    /// entries after authoritative updates.
    pub benign_target_qps: f64,
    /// Background rate of malformed (failure-classified) responses from
    /// negligent users, events per second.
    pub negligent_failure_rate: f64,
    pub log_events: bool,
}

impl Scenario {
    /// The reference parameterization: id/port spaces 65536/64000, cap 20,
    /// window 0.02 s, resolver and auth at 100 qps, attacker at 1000 qps
    /// with 100 forgeries/s, threshold 3, validating life cycle 10 h.
    pub fn table_defaults() -> Scenario {
        let target = QName::parse("foo.com").unwrap();
        Scenario {
            resolver: ResolverConfig::default(),
            attacker: Some(AttackConfig::new(target.clone())),
            auth: AuthServerModel::table_defaults(),
            target_domain: target,
            seed: 1,
            duration: 3600.0,
            ttl_dist: TtlDistribution::Constant(1000.0),
            arrivals: ArrivalKind::Deterministic,
            benign_other_qps: 0.0,
            benign_target_qps: 0.0,
            negligent_failure_rate: 0.0,
            log_events: true,
        }
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.duration <= 0.0 {
            return Err(ScenarioError("duration must be positive".into()));
        }
        if self.auth.response_time <= 0.0 || self.auth.respond_rate <= 0.0 {
            return Err(ScenarioError("auth timing must be positive".into()));
        }
        if self.auth.lifecycle <= 0.0 {
            return Err(ScenarioError("lifecycle must be positive".into()));
        }
        if self.auth.servers.is_empty() {
            return Err(ScenarioError("at least one auth server".into()));
        }
        if self.resolver.upstream_qps <= 0.0 {
            return Err(ScenarioError("resolver qps must be positive".into()));
        }
        self.ttl_dist.validate().map_err(ScenarioError)?;
        if let Some(att) = &self.attacker {
            att.validate().map_err(ScenarioError)?;
            if att.target_domain != self.target_domain {
                return Err(ScenarioError(
                    "attacker target differs from scenario target".into(),
                ));
            }
        }
        if self.benign_other_qps < 0.0
            || self.benign_target_qps < 0.0
            || self.negligent_failure_rate < 0.0
        {
            return Err(ScenarioError("rates must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScenarioError(pub String);

impl fmt::Display for ScenarioError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid scenario: {}", self.0)
    }
}

impl std::error::Error for ScenarioError {}

/// A forged record was accepted, cached, or served.
#[derive(Debug, Clone, PartialEq)]
pub struct PoisonEvent {
    pub at: SimTime,
    /// Transaction was in the aware mode when the record got through.
    pub mode_aware: bool,
    /// Transaction was blocked by a priority-cache conflict.
    pub conflict_blocked: bool,
    /// Failure count of the transaction at acceptance time.
    pub failures_at_accept: u32,
    /// Served from cache rather than accepted from the wire.
    pub via_cache_hit: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundOutcome {
    pub round: u64,
    pub qname: String,
    pub started_at: SimTime,
    pub ended_at: SimTime,
    pub success: bool,
    pub forgeries_delivered: u64,
    /// Forgeries delivered strictly before the escalation of this round's
    /// transaction (the free, unvalidated guesses).
    pub forgeries_before_escalation: u64,
    pub escalated: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Metrics {
    pub duration: f64,
    pub client_queries: u64,
    pub answered: u64,
    pub servfail: u64,
    pub cache_hits: u64,
    pub dnssec_queries_issued: u64,
    pub dnssec_query_times: Vec<SimTime>,
    /// DNSSEC transactions triggered by the failure threshold after cache
    /// expiry vs by priority-cache conflicts (stale after updates).
    pub ttl_triggered: u64,
    pub update_triggered: u64,
    pub updates_applied: u64,
    pub poisoning_attempts: u64,
    pub poisoning_successes: u64,
    pub first_success_time: Option<SimTime>,
    pub poison_events: Vec<PoisonEvent>,
    pub rounds: Vec<RoundOutcome>,
    pub mode_transitions: u64,
    pub held_on: u64,
    pub discarded: u64,
    pub failures_counted: u64,
    /// Transactions cut off unresolved at the horizon (counted as servfail).
    pub aborted_at_horizon: u64,
}

impl Metrics {
    pub fn dnssec_query_intervals(&self) -> Vec<f64> {
        self.dnssec_query_times
            .windows(2)
            .map(|w| w[1] - w[0])
            .collect()
    }

    pub fn mean_dnssec_interval(&self) -> Option<f64> {
        let iv = self.dnssec_query_intervals();
        if iv.is_empty() {
            None
        } else {
            Some(iv.iter().sum::<f64>() / iv.len() as f64)
        }
    }

    /// Key-value export, stable order.
    pub fn to_kv(&self) -> Vec<(String, String)> {
        let mut kv: Vec<(String, String)> = vec![
            ("duration_s".into(), format!("{:.6}", self.duration)),
            ("client_queries".into(), self.client_queries.to_string()),
            ("answered".into(), self.answered.to_string()),
            ("servfail".into(), self.servfail.to_string()),
            ("cache_hits".into(), self.cache_hits.to_string()),
            (
                "dnssec_queries_issued".into(),
                self.dnssec_queries_issued.to_string(),
            ),
            ("ttl_triggered".into(), self.ttl_triggered.to_string()),
            ("update_triggered".into(), self.update_triggered.to_string()),
            ("updates_applied".into(), self.updates_applied.to_string()),
            (
                "poisoning_attempts".into(),
                self.poisoning_attempts.to_string(),
            ),
            (
                "poisoning_successes".into(),
                self.poisoning_successes.to_string(),
            ),
            (
                "first_success_time_s".into(),
                self.first_success_time
                    .map_or("-".into(), |t| format!("{t:.6}")),
            ),
            (
                "aware_path_poisonings".into(),
                self.aware_path_poisonings().to_string(),
            ),
            ("rounds".into(), self.rounds.len().to_string()),
            (
                "round_successes".into(),
                self.rounds.iter().filter(|r| r.success).count().to_string(),
            ),
            ("mode_transitions".into(), self.mode_transitions.to_string()),
            ("held_on".into(), self.held_on.to_string()),
            ("discarded".into(), self.discarded.to_string()),
            ("failures_counted".into(), self.failures_counted.to_string()),
            (
                "aborted_at_horizon".into(),
                self.aborted_at_horizon.to_string(),
            ),
        ];
        kv.push((
            "mean_dnssec_interval_s".into(),
            self.mean_dnssec_interval()
                .map_or("-".into(), |v| format!("{v:.6}")),
        ));
        kv
    }

    /// Forged records that got through while the transaction was aware or
    /// conflict-blocked. The central safety claim keeps this at zero.
    pub fn aware_path_poisonings(&self) -> u64 {
        self.poison_events
            .iter()
            .filter(|e| e.mode_aware || e.conflict_blocked)
            .count() as u64
    }
}

/// One event-log line: time, kind, question, verdict.
#[derive(Debug, Clone, PartialEq)]
pub struct LogRecord {
    pub at: SimTime,
    pub kind: &'static str,
    pub question: String,
    pub verdict: String,
}

impl fmt::Display for LogRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:.6} {} {} {}",
            self.at, self.kind, self.question, self.verdict
        )
    }
}

/// Renders the whole log, one record per line.
pub fn event_log_text(log: &[LogRecord]) -> String {
    let mut out = String::new();
    for rec in log {
        out.push_str(&rec.to_string());
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone)]
enum Event {
    BenignQuery {
        under_target: bool,
    },
    AttackerClientQuery {
        round: u64,
    },
    AttackerForgery {
        round: u64,
    },
    RoundStart,
    UpstreamDispatch {
        query_id: QueryId,
        question: QuestionKey,
    },
    UpstreamResponse {
        resp: ResponseMsg,
    },
    ValidatingResponse {
        tx_id: TxId,
        question: QuestionKey,
    },
    Timeout {
        tx_id: TxId,
        question: QuestionKey,
    },
    AuthUpdate,
    TtlExpiry,
    NegligentResponse,
}

struct Scheduled {
    at: SimTime,
    seq: u64,
    event: Event,
}

impl PartialEq for Scheduled {
    fn eq(&self, other: &Self) -> bool {
        self.at == other.at && self.seq == other.seq
    }
}

impl Eq for Scheduled {}

impl PartialOrd for Scheduled {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Scheduled {
    fn cmp(&self, other: &Self) -> Ordering {
        // BinaryHeap is a max-heap; reverse to pop earliest (time, seq).
        other
            .at
            .total_cmp(&self.at)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

/// Read-only view of caches and live transactions.
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub at: SimTime,
    pub priority: Vec<(CacheKey, String, SimTime)>,
    pub normal: Vec<(CacheKey, String, SimTime)>,
    pub transactions: Vec<TxView>,
}

#[derive(Debug, Clone)]
pub struct TxView {
    pub question: QuestionKey,
    pub mode: Mode,
    pub outstanding: usize,
    pub holdon: usize,
    pub conflict: bool,
}

pub struct RunOutput {
    pub metrics: Metrics,
    pub log: Vec<LogRecord>,
}

pub struct Sim {
    scenario: Scenario,
    resolver: Resolver,
    attacker: Option<Attacker>,
    queue: BinaryHeap<Scheduled>,
    next_seq: u64,
    now: SimTime,
    zone: BTreeMap<CacheKey, String>,
    contested: CacheKey,
    zone_version: u64,
    auth_inflight: u32,
    auth_last_emit: SimTime,
    scripted_update_idx: usize,
    scheduled_ttl_expiry: Option<SimTime>,
    next_client_id: ClientId,
    benign_other_count: u64,
    benign_target_count: u64,
    // Attack-round bookkeeping.
    round_active: bool,
    round_question: Option<QuestionKey>,
    round_started_at: SimTime,
    round_poisoned: bool,
    round_escalated: bool,
    round_forgeries_delivered: u64,
    round_forgeries_before_escalation: u64,
    // Derived rng streams.
    ttl_rng: ChaCha12Rng,
    update_rng: ChaCha12Rng,
    benign_rng: ChaCha12Rng,
    arrivals_rng: ChaCha12Rng,
    negligent_rng: ChaCha12Rng,
    metrics: Metrics,
    log: Vec<LogRecord>,
}

impl Sim {
    pub fn new(scenario: Scenario) -> Result<Sim, ScenarioError> {
        scenario.validate()?;
        let contested = (contested_key(&scenario.target_domain), RecordType::A);
        let mut zone = scenario.auth.zone.clone();
        zone.entry(contested.clone())
            .or_insert_with(|| "X.X.X.X".to_string());
        let resolver = Resolver::new(
            scenario.resolver.clone(),
            scenario.auth.servers.clone(),
            rng::derive(scenario.seed, rng::stream::RESOLVER_IDENTITIES),
        );
        let attacker = scenario.attacker.clone().map(|cfg| {
            Attacker::new(
                cfg,
                scenario.resolver.identity_space.clone(),
                scenario.auth.servers.clone(),
                rng::derive(scenario.seed, rng::stream::ATTACKER_LABELS),
                rng::derive(scenario.seed, rng::stream::ATTACKER_GUESSES),
            )
        });
        let mut sim = Sim {
            resolver,
            attacker,
            queue: BinaryHeap::new(),
            next_seq: 0,
            now: 0.0,
            zone,
            contested,
            zone_version: 0,
            auth_inflight: 0,
            auth_last_emit: f64::NEG_INFINITY,
            scripted_update_idx: 0,
            scheduled_ttl_expiry: None,
            next_client_id: 0,
            benign_other_count: 0,
            benign_target_count: 0,
            round_active: false,
            round_question: None,
            round_started_at: 0.0,
            round_poisoned: false,
            round_escalated: false,
            round_forgeries_delivered: 0,
            round_forgeries_before_escalation: 0,
            ttl_rng: rng::derive(scenario.seed, rng::stream::TTL_DRAWS),
            update_rng: rng::derive(scenario.seed, rng::stream::AUTH_UPDATES),
            benign_rng: rng::derive(scenario.seed, rng::stream::BENIGN_CLIENTS),
            arrivals_rng: rng::derive(scenario.seed, rng::stream::ARRIVALS),
            negligent_rng: rng::derive(scenario.seed, rng::stream::NEGLIGENT),
            metrics: Metrics {
                duration: scenario.duration,
                ..Metrics::default()
            },
            log: Vec::new(),
            scenario,
        };
        sim.seed_initial_events();
        Ok(sim)
    }

    fn seed_initial_events(&mut self) {
        if self.attacker.is_some() {
            self.schedule(0.0, Event::RoundStart);
        }
        if self.scenario.benign_other_qps > 0.0 {
            let gap = self.source_gap(self.scenario.benign_other_qps, SourceRng::Benign);
            self.schedule(
                gap,
                Event::BenignQuery {
                    under_target: false,
                },
            );
        }
        if self.scenario.benign_target_qps > 0.0 {
            let gap = self.source_gap(self.scenario.benign_target_qps, SourceRng::Benign);
            self.schedule(gap, Event::BenignQuery { under_target: true });
        }
        if self.scenario.negligent_failure_rate > 0.0 {
            let gap = rng::exp_sample(
                &mut self.negligent_rng,
                1.0 / self.scenario.negligent_failure_rate,
            );
            self.schedule(gap, Event::NegligentResponse);
        }
        match &self.scenario.auth.update_process {
            UpdateProcess::None => {}
            UpdateProcess::Exponential { mean } => {
                let gap = rng::exp_sample(&mut self.update_rng, *mean);
                self.schedule(gap, Event::AuthUpdate);
            }
            UpdateProcess::Scripted(times) => {
                if let Some(t) = times.first() {
                    self.schedule(*t, Event::AuthUpdate);
                }
            }
        }
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn resolver(&self) -> &Resolver {
        &self.resolver
    }

    pub fn metrics(&self) -> &Metrics {
        &self.metrics
    }

    /// Processes every event at or before `t` (capped at the scenario
    /// duration).
    pub fn run_until(&mut self, t: SimTime) {
        let bound = t.min(self.scenario.duration);
        while let Some(head) = self.queue.peek() {
            if head.at > bound {
                break;
            }
            let Scheduled { at, event, .. } = self.queue.pop().unwrap();
            self.now = at;
            self.dispatch(event);
        }
        self.now = self.now.max(bound.min(self.scenario.duration));
    }

    /// Runs to the horizon, fails over still-open transactions so every
    /// client query terminates, and returns metrics plus the event log.
    pub fn finish(mut self) -> RunOutput {
        self.run_until(self.scenario.duration);
        self.now = self.scenario.duration;
        if self.round_active {
            self.finalize_round();
        }
        let aborted = self.resolver.abort_all();
        self.metrics.aborted_at_horizon = aborted as u64;
        self.process_effects();
        RunOutput {
            metrics: self.metrics,
            log: self.log,
        }
    }

    /// Read-only cache and transaction view at the current time.
    pub fn snapshot(&self) -> Snapshot {
        Snapshot {
            at: self.now,
            priority: self
                .resolver
                .cache()
                .priority_iter()
                .filter(|(_, e)| e.expires_at > self.now)
                .map(|(k, e)| (k.clone(), e.record.value.clone(), e.expires_at))
                .collect(),
            normal: self
                .resolver
                .cache()
                .normal_iter()
                .filter(|(_, e)| e.expires_at > self.now)
                .map(|(k, e)| (k.clone(), e.record.value.clone(), e.expires_at))
                .collect(),
            transactions: self
                .resolver
                .live_transactions()
                .map(|tx| TxView {
                    question: tx.question.clone(),
                    mode: tx.mode,
                    outstanding: tx.outstanding.len(),
                    holdon: tx.holdon.len(),
                    conflict: tx.priority_conflict,
                })
                .collect(),
        }
    }

    fn schedule(&mut self, at: SimTime, event: Event) {
        let seq = self.next_seq;
        self.next_seq += 1;
        self.queue.push(Scheduled { at, seq, event });
    }

    fn log(&mut self, kind: &'static str, question: String, verdict: String) {
        if self.scenario.log_events {
            self.log.push(LogRecord {
                at: self.now,
                kind,
                question,
                verdict,
            });
        }
    }

    fn source_gap(&mut self, rate: f64, which: SourceRng) -> f64 {
        match self.scenario.arrivals {
            ArrivalKind::Deterministic => 1.0 / rate,
            ArrivalKind::Poisson => {
                let rng = match which {
                    SourceRng::Benign => &mut self.benign_rng,
                    SourceRng::Attack => &mut self.arrivals_rng,
                };
                rng::exp_sample(rng, 1.0 / rate)
            }
        }
    }

    fn dispatch(&mut self, event: Event) {
        match event {
            Event::BenignQuery { under_target } => self.on_benign_query(under_target),
            Event::AttackerClientQuery { round } => self.on_attacker_client_query(round),
            Event::AttackerForgery { round } => self.on_attacker_forgery(round),
            Event::RoundStart => self.on_round_start(),
            Event::UpstreamDispatch { query_id, question } => {
                self.on_upstream_dispatch(query_id, question)
            }
            Event::UpstreamResponse { resp } => self.on_upstream_response(resp),
            Event::ValidatingResponse { tx_id, question } => {
                self.on_validating_response(tx_id, question)
            }
            Event::Timeout { tx_id, question } => self.on_timeout(tx_id, question),
            Event::AuthUpdate => self.on_auth_update(),
            Event::TtlExpiry => self.on_ttl_expiry(),
            Event::NegligentResponse => self.on_negligent_response(),
        }
    }

    fn on_benign_query(&mut self, under_target: bool) {
        let qname = if under_target {
            self.benign_target_count += 1;
            self.scenario
                .target_domain
                .child(&format!("u{}", self.benign_target_count))
                .unwrap()
        } else {
            self.benign_other_count += 1;
            QName::parse(&format!("c{}.other.example", self.benign_other_count)).unwrap()
        };
        let q = QuestionKey::new(qname, RecordType::A);
        self.handle_client_query(&q);
        let rate = if under_target {
            self.scenario.benign_target_qps
        } else {
            self.scenario.benign_other_qps
        };
        let gap = self.source_gap(rate, SourceRng::Benign);
        self.schedule(self.now + gap, Event::BenignQuery { under_target });
    }

    fn on_attacker_client_query(&mut self, round: u64) {
        let Some(att) = &self.attacker else { return };
        if !self.round_active || att.state.current_round != round {
            return;
        }
        let q = QuestionKey::new(att.state.current_qname.clone().unwrap(), RecordType::A);
        let rate = att.config.client_query_rate;
        self.handle_client_query(&q);
        self.check_round_end();
        if self.round_active {
            let gap = self.source_gap(rate, SourceRng::Attack);
            self.schedule(self.now + gap, Event::AttackerClientQuery { round });
        }
    }

    fn on_attacker_forgery(&mut self, round: u64) {
        let active = match &self.attacker {
            Some(att) => self.round_active && att.state.current_round == round,
            None => false,
        };
        if !active {
            return;
        }
        let att = self.attacker.as_mut().unwrap();
        let rate = att.config.bogus_response_rate;
        let resp = att.forge_response();
        self.metrics.poisoning_attempts += 1;
        self.round_forgeries_delivered += 1;
        let was_escalated = self.round_escalated;
        self.deliver_response(resp, "forged_response");
        // Free guesses: forgeries delivered strictly before the escalation
        // (the triggering one is not free).
        if !was_escalated && !self.round_escalated {
            self.round_forgeries_before_escalation += 1;
        }
        self.check_round_end();
        if self.round_active {
            let gap = self.source_gap(rate, SourceRng::Attack);
            self.schedule(self.now + gap, Event::AttackerForgery { round });
        }
    }

    fn on_round_start(&mut self) {
        let Some(att) = &mut self.attacker else {
            return;
        };
        if self.round_active || !att.rounds_remaining() {
            return;
        }
        // Cached validating records shield the target: wait out their life
        // cycle (pushed further whenever an update renewed the entry).
        if let Some(expiry) = self
            .resolver
            .cache()
            .priority_expiry(&self.contested, self.now)
        {
            let at = Attacker::schedule_next_round(self.now, Some(expiry));
            self.log(
                "round",
                self.contested.0.to_string(),
                format!("deferred_until={at:.6}"),
            );
            self.schedule(at, Event::RoundStart);
            return;
        }
        let att = self.attacker.as_mut().unwrap();
        let q = att.begin_round();
        let round = att.state.current_round;
        let bogus_rate = att.config.bogus_response_rate;
        self.round_active = true;
        self.round_question = Some(q.clone());
        self.round_started_at = self.now;
        self.round_poisoned = false;
        self.round_escalated = false;
        self.round_forgeries_delivered = 0;
        self.round_forgeries_before_escalation = 0;
        self.log("round", q.qname.to_string(), format!("start round={round}"));
        self.schedule(self.now, Event::AttackerClientQuery { round });
        let gap = self.source_gap(bogus_rate, SourceRng::Attack);
        self.schedule(self.now + gap, Event::AttackerForgery { round });
    }

    fn on_upstream_dispatch(&mut self, query_id: QueryId, question: QuestionKey) {
        // The transaction may have resolved before the dispatch slot.
        let Some(tx) = self.resolver.transaction(&question) else {
            return;
        };
        let Some(oq) = tx.outstanding.iter().find(|o| o.id == query_id) else {
            return;
        };
        if self.auth_inflight >= self.scenario.auth.outstanding_cap {
            // Over the server's limit: dropped silently.
            self.log(
                "upstream_dispatch",
                question.to_string(),
                "dropped_over_cap".into(),
            );
            return;
        }
        self.auth_inflight += 1;
        let identity = oq.identity.clone();
        let records = self.answer_records(&question);
        let resp = ResponseMsg {
            question,
            identity,
            records,
            is_validating: false,
        };
        let earliest = self.now + self.scenario.auth.response_time;
        let spaced = self.auth_last_emit + 1.0 / self.scenario.auth.respond_rate;
        let deliver_at = earliest.max(spaced);
        self.auth_last_emit = deliver_at;
        self.schedule(deliver_at, Event::UpstreamResponse { resp });
    }

    /// Records the authoritative servers put in a normal answer. Questions
    /// under the target domain answer with the contested name-server
    /// record; others with their own address record.
    fn answer_records(&mut self, question: &QuestionKey) -> Vec<ResourceRecord> {
        let ttl = self.scenario.ttl_dist.sample(&mut self.ttl_rng);
        if question.qname.is_under(&self.scenario.target_domain) {
            let value = self.zone[&self.contested].clone();
            vec![ResourceRecord::new(
                self.contested.0.clone(),
                RecordType::A,
                &value,
                ttl,
                false,
                true,
            )]
        } else {
            let key = (question.qname.clone(), question.qtype);
            let value = self
                .zone
                .get(&key)
                .cloned()
                .unwrap_or_else(|| derived_address(question.qname.as_str()));
            vec![ResourceRecord::new(
                question.qname.clone(),
                question.qtype,
                &value,
                ttl,
                false,
                true,
            )]
        }
    }

    fn on_upstream_response(&mut self, resp: ResponseMsg) {
        self.auth_inflight = self.auth_inflight.saturating_sub(1);
        self.deliver_response(resp, "upstream_response");
        self.check_round_end();
    }

    /// Runs a non-validating response through the resolver and accounts for
    /// the outcome.
    fn deliver_response(&mut self, resp: ResponseMsg, kind: &'static str) {
        let question = resp.question.clone();
        let (mode_aware, conflict, failures) = match self.resolver.transaction(&question) {
            Some(tx) => (
                tx.mode == Mode::Aware,
                tx.priority_conflict,
                self.resolver.failure_count(&question),
            ),
            None => (false, false, 0),
        };
        let action = self.resolver.on_response(&resp, self.now);
        let verdict = match &action {
            ResponseAction::Accepted(records) => {
                if records
                    .iter()
                    .any(|r| !validation::ground_truth_authentic(r))
                {
                    self.record_poison(mode_aware, conflict, failures, false);
                }
                "accepted"
            }
            ResponseAction::HeldOn => {
                self.metrics.held_on += 1;
                "held_on"
            }
            ResponseAction::CountedAsFailure { escalated } => {
                self.metrics.failures_counted += 1;
                if *escalated {
                    self.metrics.mode_transitions += 1;
                    if self
                        .round_question
                        .as_ref()
                        .is_some_and(|rq| *rq == question)
                    {
                        self.round_escalated = true;
                    }
                    "failure_escalated"
                } else {
                    "failure"
                }
            }
            ResponseAction::Discarded => {
                self.metrics.discarded += 1;
                "discarded"
            }
        };
        self.log(kind, question.to_string(), verdict.into());
        self.process_effects();
    }

    fn on_validating_response(&mut self, _tx_id: TxId, question: QuestionKey) {
        // Build the validating response from the zone as of delivery; the
        // oracle marks it signed and authentic, with the validating-record
        // life cycle as TTL.
        let records = if question.qname.is_under(&self.scenario.target_domain) {
            let value = self.zone[&self.contested].clone();
            vec![ResourceRecord::new(
                self.contested.0.clone(),
                RecordType::A,
                &value,
                self.scenario.auth.lifecycle,
                true,
                true,
            )]
        } else {
            let key = (question.qname.clone(), question.qtype);
            let value = self
                .zone
                .get(&key)
                .cloned()
                .unwrap_or_else(|| derived_address(question.qname.as_str()));
            vec![ResourceRecord::new(
                question.qname.clone(),
                question.qtype,
                &value,
                self.scenario.auth.lifecycle,
                true,
                true,
            )]
        };
        let resp = ResponseMsg {
            question: question.clone(),
            identity: crate::dns_model::QueryIdentity {
                txid: 0,
                port: 0,
                server: self.scenario.auth.servers[0].clone(),
            },
            records,
            is_validating: true,
        };
        let action = self.resolver.on_validating_response(&resp, self.now);
        let verdict = match &action {
            None => "stale".to_string(),
            Some(ValidatingAction::NeedsChainQuery(chain_q)) => {
                format!("chain_step {chain_q}")
            }
            Some(ValidatingAction::Resolved(records)) => {
                if records
                    .iter()
                    .any(|r| !validation::ground_truth_authentic(r))
                {
                    self.record_poison(true, false, 0, false);
                }
                "resolved".to_string()
            }
            Some(ValidatingAction::AwaitMore) => "await_more".to_string(),
            Some(ValidatingAction::RejectedAndReissued) => "rejected_reissued".to_string(),
        };
        self.log("validating_response", question.to_string(), verdict);
        self.process_effects();
        self.check_round_end();
    }

    fn on_timeout(&mut self, tx_id: TxId, question: QuestionKey) {
        let action = self.resolver.on_timeout(tx_id, self.now);
        let verdict = match action {
            None => return, // transaction gone or deadline extended
            Some(TimeoutAction::ServFailToClient) => "servfail",
            Some(TimeoutAction::ProactiveUpdate) => "proactive_update",
        };
        self.log("timeout", question.to_string(), verdict.into());
        self.process_effects();
        self.check_round_end();
    }

    fn on_auth_update(&mut self) {
        self.zone_version += 1;
        let value = format!("X.X.X.X/u{}", self.zone_version);
        self.zone.insert(self.contested.clone(), value);
        self.metrics.updates_applied += 1;
        self.log(
            "auth_update",
            self.contested.0.to_string(),
            format!("version={}", self.zone_version),
        );
        match &self.scenario.auth.update_process {
            UpdateProcess::Exponential { mean } => {
                let mean = *mean;
                let gap = rng::exp_sample(&mut self.update_rng, mean);
                self.schedule(self.now + gap, Event::AuthUpdate);
            }
            UpdateProcess::Scripted(times) => {
                self.scripted_update_idx += 1;
                if let Some(t) = times.get(self.scripted_update_idx) {
                    let t = *t;
                    self.schedule(t, Event::AuthUpdate);
                }
            }
            UpdateProcess::None => {}
        }
    }

    fn on_ttl_expiry(&mut self) {
        let evicted = self.resolver.expire_caches(self.now);
        if evicted > 0 {
            self.log("ttl_expiry", "-".into(), format!("evicted={evicted}"));
        }
        self.scheduled_ttl_expiry = None;
        self.maybe_schedule_ttl_expiry();
    }

    fn on_negligent_response(&mut self) {
        // A malformed response from a negligent user: matches some live
        // question but never the full identity.
        let target = self
            .resolver
            .live_transactions()
            .next()
            .map(|tx| (tx.question.clone(), tx.outstanding.first().cloned()));
        if let Some((question, Some(oq))) = target {
            let mut identity = oq.identity.clone();
            identity.txid ^= 1;
            // A flipped txid could still hit a sibling outstanding query;
            // nudge until it misses them all.
            while self
                .resolver
                .transaction(&question)
                .map(|tx| tx.outstanding.iter().any(|o| o.identity == identity))
                .unwrap_or(false)
            {
                identity.txid =
                    identity.txid.wrapping_add(1) % self.scenario.resolver.identity_space.id_space;
            }
            let resp = ResponseMsg {
                question,
                identity,
                records: vec![ResourceRecord::new(
                    QName::parse("malformed.invalid").unwrap(),
                    RecordType::A,
                    "0.0.0.0",
                    1.0,
                    false,
                    false,
                )],
                is_validating: false,
            };
            self.deliver_response(resp, "negligent_response");
        }
        let gap = rng::exp_sample(
            &mut self.negligent_rng,
            1.0 / self.scenario.negligent_failure_rate,
        );
        self.schedule(self.now + gap, Event::NegligentResponse);
    }

    fn handle_client_query(&mut self, q: &QuestionKey) {
        let client = self.next_client_id;
        self.next_client_id += 1;
        self.metrics.client_queries += 1;
        let action = self.resolver.on_client_query(client, q, self.now);
        let verdict = match &action {
            ClientQueryAction::AnswerFromCache(records) => {
                self.metrics.cache_hits += 1;
                if records
                    .iter()
                    .any(|r| !validation::ground_truth_authentic(r))
                {
                    self.record_poison(false, false, 0, true);
                }
                "cache_hit"
            }
            ClientQueryAction::NewOutstandingQuery => "new_outstanding",
            ClientQueryAction::JoinExistingTransaction => "joined",
            ClientQueryAction::Rejected => "rejected",
        };
        self.log("client_query", q.to_string(), verdict.into());
        self.process_effects();
    }

    fn process_effects(&mut self) {
        let effects = self.resolver.drain_effects();
        for effect in effects {
            match effect {
                ResolverEffect::DispatchUpstream { query, dispatch_at } => {
                    self.schedule(
                        dispatch_at,
                        Event::UpstreamDispatch {
                            query_id: query.id,
                            question: query.question,
                        },
                    );
                }
                ResolverEffect::SendValidating {
                    tx_id,
                    question,
                    hop,
                    cause,
                } => {
                    self.metrics.dnssec_queries_issued += 1;
                    self.metrics.dnssec_query_times.push(self.now);
                    match cause {
                        DnssecCause::FailureThreshold => self.metrics.ttl_triggered += 1,
                        DnssecCause::PriorityConflict => self.metrics.update_triggered += 1,
                        DnssecCause::ChainStep | DnssecCause::Reissue => {}
                    }
                    self.log(
                        "validating_query",
                        question.to_string(),
                        format!("hop={hop} cause={cause:?}"),
                    );
                    self.schedule(
                        self.now + self.scenario.auth.response_time,
                        Event::ValidatingResponse { tx_id, question },
                    );
                }
                ResolverEffect::AnswerClients { clients, .. } => {
                    self.metrics.answered += clients.len() as u64;
                }
                ResolverEffect::ServFailClients { clients } => {
                    self.metrics.servfail += clients.len() as u64;
                }
                ResolverEffect::ScheduleTimeout {
                    tx_id,
                    question,
                    at,
                } => {
                    self.schedule(at, Event::Timeout { tx_id, question });
                }
            }
        }
        self.maybe_schedule_ttl_expiry();
    }

    fn maybe_schedule_ttl_expiry(&mut self) {
        if let Some(expiry) = self
            .resolver
            .cache()
            .priority_expiry(&self.contested, self.now)
        {
            if self.scheduled_ttl_expiry != Some(expiry) {
                self.scheduled_ttl_expiry = Some(expiry);
                self.schedule(expiry, Event::TtlExpiry);
            }
        }
    }

    fn record_poison(
        &mut self,
        mode_aware: bool,
        conflict_blocked: bool,
        failures_at_accept: u32,
        via_cache_hit: bool,
    ) {
        self.metrics.poisoning_successes += 1;
        if self.metrics.first_success_time.is_none() {
            self.metrics.first_success_time = Some(self.now);
        }
        self.metrics.poison_events.push(PoisonEvent {
            at: self.now,
            mode_aware,
            conflict_blocked,
            failures_at_accept,
            via_cache_hit,
        });
        if self.round_active && !via_cache_hit {
            self.round_poisoned = true;
        }
    }

    fn check_round_end(&mut self) {
        if !self.round_active {
            return;
        }
        let q = self.round_question.as_ref().unwrap();
        if self.resolver.transaction(q).is_none() {
            self.finalize_round();
            // Schedule the next attempt: immediately on a bare failure, at
            // the validating-record expiry when the cache now shields the
            // target.
            let next = Attacker::schedule_next_round(
                self.now,
                self.resolver
                    .cache()
                    .priority_expiry(&self.contested, self.now),
            );
            self.schedule(next, Event::RoundStart);
        }
    }

    fn finalize_round(&mut self) {
        let att = self.attacker.as_mut().expect("round implies attacker");
        if self.round_poisoned {
            att.state.successes += 1;
        }
        let outcome = RoundOutcome {
            round: att.state.current_round,
            qname: self
                .round_question
                .as_ref()
                .map(|q| q.qname.to_string())
                .unwrap_or_default(),
            started_at: self.round_started_at,
            ended_at: self.now,
            success: self.round_poisoned,
            forgeries_delivered: self.round_forgeries_delivered,
            forgeries_before_escalation: self.round_forgeries_before_escalation,
            escalated: self.round_escalated,
        };
        self.log(
            "round",
            outcome.qname.clone(),
            format!(
                "end round={} {}",
                outcome.round,
                if outcome.success {
                    "success"
                } else {
                    "failure"
                }
            ),
        );
        self.metrics.rounds.push(outcome);
        self.round_active = false;
        self.round_question = None;
    }
}

enum SourceRng {
    Benign,
    Attack,
}

/// Stable fake address for a benign name, so reruns agree byte for byte.
fn derived_address(qname: &str) -> String {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in qname.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x1000_0000_01b3);
    }
    format!("10.{}.{}.{}", (h >> 16) & 0xff, (h >> 8) & 0xff, h & 0xff)
}

/// Builds and runs a scenario to completion.
pub fn run(scenario: Scenario) -> Result<RunOutput, ScenarioError> {
    Ok(Sim::new(scenario)?.finish())
}

/// Runs `n` independent replications (seed offset by the replication index,
/// logging off), in parallel when the `parallel` feature is on. Results are
/// ordered by replication index.
pub fn run_replications(scenario: &Scenario, n: usize) -> Result<Vec<Metrics>, ScenarioError> {
    scenario.validate()?;
    Ok(exec::run_jobs(n, |i| replicate_one(scenario, i)))
}

/// Sequential twin of `run_replications`.
pub fn run_replications_seq(scenario: &Scenario, n: usize) -> Result<Vec<Metrics>, ScenarioError> {
    scenario.validate()?;
    Ok(exec::run_jobs_seq(n, |i| replicate_one(scenario, i)))
}

fn replicate_one(scenario: &Scenario, i: usize) -> Metrics {
    let mut sc = scenario.clone();
    sc.seed = scenario.seed.wrapping_add(i as u64);
    sc.log_events = false;
    Sim::new(sc).expect("validated scenario").finish().metrics
}

#[cfg(test)]
mod tests {
    use super::*;

    fn attack_free_scenario() -> Scenario {
        let mut sc = Scenario::table_defaults();
        sc.attacker = None;
        sc.benign_other_qps = 2.0;
        sc.duration = 600.0;
        sc
    }

    #[test]
    fn rejects_malformed_scenarios_before_running() {
        let mut sc = Scenario::table_defaults();
        sc.duration = 0.0;
        assert!(Sim::new(sc).is_err());
        let mut sc = Scenario::table_defaults();
        sc.auth.response_time = -1.0;
        assert!(Sim::new(sc).is_err());
        let mut sc = Scenario::table_defaults();
        sc.ttl_dist = TtlDistribution::Uniform {
            lo: 500.0,
            hi: 100.0,
        };
        assert!(Sim::new(sc).is_err());
    }

    #[test]
    fn empty_snapshot_before_any_event() {
        let sim = Sim::new(attack_free_scenario()).unwrap();
        let snap = sim.snapshot();
        assert_eq!(snap.at, 0.0);
        assert!(snap.priority.is_empty());
        assert!(snap.normal.is_empty());
        assert!(snap.transactions.is_empty());
    }

    #[test]
    fn attack_free_run_issues_no_dnssec_queries() {
        let out = run(attack_free_scenario()).unwrap();
        assert!(out.metrics.client_queries > 1000);
        assert_eq!(out.metrics.dnssec_queries_issued, 0);
        assert_eq!(out.metrics.poisoning_successes, 0);
    }

    #[test]
    fn every_client_query_terminates() {
        let mut sc = attack_free_scenario();
        sc.benign_target_qps = 1.0;
        sc.arrivals = ArrivalKind::Poisson;
        let out = run(sc).unwrap();
        assert_eq!(
            out.metrics.client_queries,
            out.metrics.answered + out.metrics.servfail
        );
    }

    #[test]
    fn same_seed_gives_byte_identical_logs() {
        let mut sc = Scenario::table_defaults();
        sc.duration = 120.0;
        sc.benign_other_qps = 3.0;
        sc.arrivals = ArrivalKind::Poisson;
        sc.auth.update_process = UpdateProcess::Exponential { mean: 40.0 };
        let a = run(sc.clone()).unwrap();
        let b = run(sc.clone()).unwrap();
        assert_eq!(event_log_text(&a.log), event_log_text(&b.log));
        assert_eq!(a.metrics, b.metrics);
        // A different seed gives a different trace.
        sc.seed = 2;
        let c = run(sc).unwrap();
        assert_ne!(event_log_text(&a.log), event_log_text(&c.log));
    }

    #[test]
    fn responses_respect_causality() {
        let mut sc = Scenario::table_defaults();
        sc.duration = 30.0;
        let out = run(sc).unwrap();
        // Every upstream response follows the first client query for its
        // question by at least the response time.
        let mut first_query: std::collections::BTreeMap<String, f64> = Default::default();
        let mut checked = 0;
        for rec in &out.log {
            match rec.kind {
                "client_query" => {
                    first_query.entry(rec.question.clone()).or_insert(rec.at);
                }
                "upstream_response" => {
                    let q_at = first_query[&rec.question];
                    assert!(
                        rec.at >= q_at + 0.02 - 1e-9,
                        "response at {} for question first asked at {q_at}",
                        rec.at
                    );
                    checked += 1;
                }
                _ => {}
            }
        }
        assert!(checked > 0);
        assert!(out.metrics.poisoning_attempts > 0);
    }

    #[test]
    fn benign_cache_hits_after_first_resolution() {
        // Two queries for the same benign name: the second hits the cache.
        let mut sc = attack_free_scenario();
        sc.benign_other_qps = 0.0;
        sc.duration = 10.0;
        let mut sim = Sim::new(sc).unwrap();
        let q = QuestionKey::a("host.other.example").unwrap();
        sim.handle_client_query(&q);
        sim.run_until(1.0);
        sim.handle_client_query(&q);
        assert_eq!(sim.metrics().cache_hits, 1);
        assert_eq!(sim.metrics().answered, 2);
    }

    #[test]
    fn replications_are_order_deterministic() {
        let mut sc = Scenario::table_defaults();
        sc.duration = 20.0;
        let par = run_replications(&sc, 8).unwrap();
        let seq = run_replications_seq(&sc, 8).unwrap();
        assert_eq!(par, seq);
    }
}
