//! Kaminsky-class attacker driver: random-subdomain queries to force cache
//! misses, forged responses racing the genuine one, and round scheduling
//! against the cached-validating-record window.

use std::collections::HashSet;

use rand::Rng;
use rand_chacha::ChaCha12Rng;

use crate::dns_model::{
    IdentitySpace, QName, QueryIdentity, QuestionKey, RecordType, ResourceRecord, ResponseMsg,
    ServerAddr,
};
use crate::SimTime;

pub const DEFAULT_CLIENT_QUERY_RATE: f64 = 1000.0;
pub const DEFAULT_BOGUS_RESPONSE_RATE: f64 = 100.0;
pub const DEFAULT_FORGED_VALUE: &str = "Y.Y.Y.Y";
/// TTL the attacker stamps on forged records.
pub const FORGED_TTL: f64 = 86_400.0;
const LABEL_LEN: usize = 7;
const LABEL_ALPHABET: &[u8] = b"abcdefghijklmnopqrstuvwxyz0123456789";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GuessStrategy {
    UniformRandom,
    SequentialSweep,
}

#[derive(Debug, Clone)]
pub struct AttackConfig {
    pub target_domain: QName,
    /// Queries per second from the attacker's client, eliciting outstanding
    /// requests.
    pub client_query_rate: f64,
    /// Forged responses per second.
    pub bogus_response_rate: f64,
    pub guess_strategy: GuessStrategy,
    /// None runs unbounded rounds.
    pub rounds: Option<u64>,
    pub forged_value: String,
}

impl AttackConfig {
    pub fn new(target_domain: QName) -> Self {
        AttackConfig {
            target_domain,
            client_query_rate: DEFAULT_CLIENT_QUERY_RATE,
            bogus_response_rate: DEFAULT_BOGUS_RESPONSE_RATE,
            guess_strategy: GuessStrategy::UniformRandom,
            rounds: None,
            forged_value: DEFAULT_FORGED_VALUE.to_string(),
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.client_query_rate <= 0.0 || self.bogus_response_rate <= 0.0 {
            return Err("attacker rates must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default)]
pub struct AttackState {
    pub current_round: u64,
    pub current_qname: Option<QName>,
    pub attempts_this_round: u64,
    pub successes: u64,
}

/// The window-bounded outstanding-query count: the minimum of the resolver's
/// cap and the queries a constant send rate fits into one response time.
pub fn effective_outstanding(resolver_cap: u32, send_rate: f64, response_time: f64) -> u32 {
    assert!(resolver_cap >= 1 && send_rate > 0.0 && response_time > 0.0);
    let window_bound = (send_rate * response_time).floor() as u32;
    resolver_cap.min(window_bound)
}

#[derive(Debug)]
pub struct Attacker {
    pub config: AttackConfig,
    pub state: AttackState,
    identity_space: IdentitySpace,
    servers: Vec<ServerAddr>,
    used_labels: HashSet<String>,
    sweep_cursor: u64,
    label_rng: ChaCha12Rng,
    guess_rng: ChaCha12Rng,
}

impl Attacker {
    pub fn new(
        config: AttackConfig,
        identity_space: IdentitySpace,
        servers: Vec<ServerAddr>,
        label_rng: ChaCha12Rng,
        guess_rng: ChaCha12Rng,
    ) -> Self {
        Attacker {
            config,
            state: AttackState::default(),
            identity_space,
            servers,
            used_labels: HashSet::new(),
            sweep_cursor: 0,
            label_rng,
            guess_rng,
        }
    }

    /// Fresh random subdomain of the target, never issued before in this
    /// simulation, guaranteeing a cache miss.
    pub fn next_round_qname(&mut self) -> QName {
        loop {
            let label: String = (0..LABEL_LEN)
                .map(|_| {
                    let i = self.label_rng.gen_range(0..LABEL_ALPHABET.len());
                    LABEL_ALPHABET[i] as char
                })
                .collect();
            if self.used_labels.insert(label.clone()) {
                return self
                    .config
                    .target_domain
                    .child(&label)
                    .expect("generated label is well formed");
            }
        }
    }

    /// Starts a round: picks the qname, resets per-round counters.
    pub fn begin_round(&mut self) -> QuestionKey {
        self.state.current_round += 1;
        self.state.attempts_this_round = 0;
        let qname = self.next_round_qname();
        self.state.current_qname = Some(qname.clone());
        QuestionKey::new(qname, RecordType::A)
    }

    /// One forged response for the active round's question: guessed identity,
    /// forged record, unsigned, not authentic.
    pub fn forge_response(&mut self) -> ResponseMsg {
        let qname = self.state.current_qname.clone().expect("a round is active");
        self.state.attempts_this_round += 1;
        let identity = self.guess_identity();
        let contested = contested_key(&self.config.target_domain);
        ResponseMsg {
            question: QuestionKey::new(qname, RecordType::A),
            identity,
            records: vec![ResourceRecord::new(
                contested,
                RecordType::A,
                &self.config.forged_value,
                FORGED_TTL,
                false,
                false,
            )],
            is_validating: false,
        }
    }

    fn guess_identity(&mut self) -> QueryIdentity {
        match self.config.guess_strategy {
            GuessStrategy::UniformRandom => {
                let server = self.servers[self.guess_rng.gen_range(0..self.servers.len())].clone();
                self.identity_space.sample(&mut self.guess_rng, server)
            }
            GuessStrategy::SequentialSweep => {
                let plane = self.identity_space.plane_size();
                let server_idx = ((self.sweep_cursor / plane) as usize) % self.servers.len();
                let identity = self
                    .identity_space
                    .at_index(self.sweep_cursor, self.servers[server_idx].clone());
                self.sweep_cursor += 1;
                identity
            }
        }
    }

    /// Next round start after a failed round: immediately, unless cached
    /// validating records still shield the target, in which case at their
    /// expiry. Authoritative updates that refreshed the entry push the start
    /// accordingly, because the expiry passed in reflects the renewed TTL.
    pub fn schedule_next_round(now: SimTime, priority_cache_expiry: Option<SimTime>) -> SimTime {
        match priority_cache_expiry {
            Some(expiry) => now.max(expiry),
            None => now,
        }
    }

    /// True while the configured round budget is not exhausted.
    pub fn rounds_remaining(&self) -> bool {
        match self.config.rounds {
            Some(n) => self.state.current_round < n,
            None => true,
        }
    }
}

/// The record every response for a target-domain question carries: the
/// address of the target's name server, the value poisoning fights over.
pub fn contested_key(target_domain: &QName) -> QName {
    target_domain
        .child("ns")
        .expect("target domain accepts an ns label")
}
