//! Simplified DNS message and identity model: enough structure to express
//! question matching, identity guessing, and validation flags. No wire
//! format.

use std::fmt;

use rand::Rng;

use crate::SimTime;

/// Default transaction-id space size.
pub const DEFAULT_ID_SPACE: u32 = 65_536;
/// Default usable source-port count (ports below 1024 are unavailable).
pub const DEFAULT_PORT_SPACE: u32 = 64_000;
/// First usable source port.
pub const PORT_MIN: u32 = 1024;
/// Default authoritative-server multiplier for the guess space.
pub const DEFAULT_N_AUTH: f64 = 2.5;

/// A canonical domain name: lowercase labels, trailing dot.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct QName(String);

/// Rejected domain-name input.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum NameError {
    Empty,
    EmptyLabel,
}

impl fmt::Display for NameError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NameError::Empty => write!(f, "empty domain name"),
            NameError::EmptyLabel => write!(f, "domain name contains an empty label"),
        }
    }
}

impl std::error::Error for NameError {}

impl QName {
    pub fn parse(raw: &str) -> Result<QName, NameError> {
        normalize_qname(raw)
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// Prefixes a label: `child("www")` on `foo.com.` gives `www.foo.com.`.
    pub fn child(&self, label: &str) -> Result<QName, NameError> {
        normalize_qname(&format!("{}.{}", label, self.0))
    }

    /// True when `self` equals or is a subdomain of `ancestor`.
    pub fn is_under(&self, ancestor: &QName) -> bool {
        self.0 == ancestor.0 || self.0.ends_with(&format!(".{}", ancestor.0))
    }
}

impl fmt::Display for QName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Debug for QName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "QName({})", self.0)
    }
}

/// Canonicalizes a raw name: lowercase, single trailing dot. Idempotent.
/// Empty labels (`a..com`) and empty input are rejected.
pub fn normalize_qname(raw: &str) -> Result<QName, NameError> {
    if raw.is_empty() {
        return Err(NameError::Empty);
    }
    let lower = raw.to_ascii_lowercase();
    let trimmed = lower.strip_suffix('.').unwrap_or(&lower);
    if trimmed.is_empty() {
        return Err(NameError::Empty);
    }
    if trimmed.split('.').any(|label| label.is_empty()) {
        return Err(NameError::EmptyLabel);
    }
    Ok(QName(format!("{trimmed}.")))
}

/// Record/question type. The same enum serves as qtype and rtype; `Rrsig`
/// marks a signature-soliciting chain query.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RecordType {
    A,
    Ns,
    Dnskey,
    Rrsig,
}

impl fmt::Display for RecordType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            RecordType::A => "A",
            RecordType::Ns => "NS",
            RecordType::Dnskey => "DNSKEY",
            RecordType::Rrsig => "RRSIG",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum QClass {
    In,
}

/// The triple identifying a resolution question.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct QuestionKey {
    pub qname: QName,
    pub qtype: RecordType,
    pub qclass: QClass,
}

impl QuestionKey {
    pub fn new(qname: QName, qtype: RecordType) -> Self {
        QuestionKey {
            qname,
            qtype,
            qclass: QClass::In,
        }
    }

    /// Convenience constructor for an A question.
    pub fn a(name: &str) -> Result<Self, NameError> {
        Ok(QuestionKey::new(QName::parse(name)?, RecordType::A))
    }
}

impl fmt::Display for QuestionKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.qname, self.qtype)
    }
}

/// Opaque server address identifier. No routing semantics.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ServerAddr(pub String);

impl ServerAddr {
    pub fn new(s: &str) -> Self {
        ServerAddr(s.to_string())
    }
}

impl fmt::Display for ServerAddr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// The guessable secrets of an outstanding query.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QueryIdentity {
    pub txid: u32,
    pub port: u32,
    pub server: ServerAddr,
}

/// The space identities are drawn from. Reduced-size spaces make guessing
/// succeed often enough to observe at desk scale.
#[derive(Debug, Clone, PartialEq)]
pub struct IdentitySpace {
    pub id_space: u32,
    pub port_space: u32,
    pub port_min: u32,
}

impl Default for IdentitySpace {
    fn default() -> Self {
        IdentitySpace {
            id_space: DEFAULT_ID_SPACE,
            port_space: DEFAULT_PORT_SPACE,
            port_min: PORT_MIN,
        }
    }
}

impl IdentitySpace {
    /// Uniformly random identity against the given server.
    pub fn sample<R: Rng>(&self, rng: &mut R, server: ServerAddr) -> QueryIdentity {
        QueryIdentity {
            txid: rng.gen_range(0..self.id_space),
            port: self.port_min + rng.gen_range(0..self.port_space),
            server,
        }
    }

    /// Identity at sweep index `k`; enumerates the whole (txid, port) plane
    /// before repeating.
    pub fn at_index(&self, k: u64, server: ServerAddr) -> QueryIdentity {
        let plane = self.id_space as u64 * self.port_space as u64;
        let k = k % plane;
        QueryIdentity {
            txid: (k % self.id_space as u64) as u32,
            port: self.port_min + (k / self.id_space as u64) as u32,
            server,
        }
    }

    /// Size of the (txid, port) plane per server.
    pub fn plane_size(&self) -> u64 {
        self.id_space as u64 * self.port_space as u64
    }
}

/// How the scalar guess space G is formed from id space I, port space P and
/// server count N. `AdditiveTimesServers` is (I+P)*N; `Product` is I*P*N.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GuessSpaceForm {
    AdditiveTimesServers,
    Product,
}

/// Scalar guess-space model used by the closed-form analytics.
#[derive(Debug, Clone, PartialEq)]
pub struct GuessSpace {
    pub id_space: u32,
    pub port_space: u32,
    pub n_auth: f64,
    pub form: GuessSpaceForm,
}

impl Default for GuessSpace {
    fn default() -> Self {
        GuessSpace {
            id_space: DEFAULT_ID_SPACE,
            port_space: DEFAULT_PORT_SPACE,
            n_auth: DEFAULT_N_AUTH,
            form: GuessSpaceForm::AdditiveTimesServers,
        }
    }
}

impl GuessSpace {
    pub fn size(&self) -> f64 {
        match self.form {
            GuessSpaceForm::AdditiveTimesServers => {
                (self.id_space as f64 + self.port_space as f64) * self.n_auth
            }
            GuessSpaceForm::Product => self.id_space as f64 * self.port_space as f64 * self.n_auth,
        }
    }

    pub fn size_rounded(&self) -> u64 {
        self.size().round() as u64
    }
}

/// A simulated resource record. `authentic` is ground truth set by the zone
/// owner; it is private so resolver logic cannot branch on it. Only the
/// `validation` oracle (and through it, metrics and tests) reads it.
#[derive(Debug, Clone, PartialEq)]
pub struct ResourceRecord {
    pub owner: QName,
    pub rtype: RecordType,
    pub value: String,
    pub ttl: f64,
    pub signed: bool,
    authentic: bool,
}

impl ResourceRecord {
    pub fn new(
        owner: QName,
        rtype: RecordType,
        value: &str,
        ttl: f64,
        signed: bool,
        authentic: bool,
    ) -> Self {
        assert!(ttl > 0.0, "record ttl must be positive");
        ResourceRecord {
            owner,
            rtype,
            value: value.to_string(),
            ttl,
            signed,
            authentic,
        }
    }

    pub fn key(&self) -> (QName, RecordType) {
        (self.owner.clone(), self.rtype)
    }
}

/// The DNSSEC validation oracle. Stands in for signature verification:
/// a record validates iff it is signed and carries the zone owner's
/// ground-truth flag.
pub mod validation {
    use super::ResourceRecord;

    /// Whether a full record set validates.
    pub fn validates(records: &[ResourceRecord]) -> bool {
        !records.is_empty() && records.iter().all(record_validates)
    }

    /// Whether one record validates.
    pub fn record_validates(rec: &ResourceRecord) -> bool {
        rec.signed && rec.authentic
    }

    /// Ground-truth authenticity. For metrics and test assertions only;
    /// never a resolver decision input.
    pub fn ground_truth_authentic(rec: &ResourceRecord) -> bool {
        rec.authentic
    }
}

/// A response as delivered to the resolver; possibly forged. The identity
/// carries the values the responder claims/echoes.
#[derive(Debug, Clone, PartialEq)]
pub struct ResponseMsg {
    pub question: QuestionKey,
    pub identity: QueryIdentity,
    pub records: Vec<ResourceRecord>,
    pub is_validating: bool,
}

/// Handle for one sent-and-unanswered query.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct QueryId(pub u64);

/// A query in the wait-for-response list.
#[derive(Debug, Clone, PartialEq)]
pub struct OutstandingQuery {
    pub id: QueryId,
    pub question: QuestionKey,
    pub identity: QueryIdentity,
    pub sent_at: SimTime,
}

/// Classification of a response against the outstanding set.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatchResult {
    /// Question, txid, port and server address all equal for some
    /// outstanding query.
    GenuineMatch(QueryId),
    /// Question equal, but every such query mismatches at least one of
    /// txid, port, server address.
    FailureAttempt,
    /// No outstanding query shares the question.
    Unrelated,
}

/// Classifies a response. Total, deterministic, and order-independent over
/// the outstanding set (the lowest matching query id wins on a multi-hit).
pub fn match_response(resp: &ResponseMsg, outstanding: &[OutstandingQuery]) -> MatchResult {
    let mut saw_question = false;
    let mut hit: Option<QueryId> = None;
    for oq in outstanding {
        if oq.question != resp.question {
            continue;
        }
        saw_question = true;
        if oq.identity == resp.identity {
            hit = Some(match hit {
                Some(prev) if prev <= oq.id => prev,
                _ => oq.id,
            });
        }
    }
    match (hit, saw_question) {
        (Some(id), _) => MatchResult::GenuineMatch(id),
        (None, true) => MatchResult::FailureAttempt,
        (None, false) => MatchResult::Unrelated,
    }
}
