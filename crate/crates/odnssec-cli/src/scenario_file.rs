//! Scenario file format: INI-style sections `[resolver]`, `[attacker]`,
//! `[auth]`, `[experiment]` with key=value lines. Unknown sections or keys
//! are rejected with the offending line number; absent keys fall back to
//! the reference defaults.
//!
//! Keys by section:
//!
//! ```text
//! [resolver]   id_space, port_space, outstanding_cap, tod, resolver_qps
//! [attacker]   attacker_qps (0 disables the attacker), bogus_qps
//! [auth]       n_auth, window_s, auth_qps, lifecycle_s,
//!              ttl = constant:X | uniform:LO:HI,
//!              update = none | exp:MEAN | scripted:FILE
//! [experiment] seed, duration_s
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;

use odnssec::analytics::TtlDistribution;
use odnssec::attacker::AttackConfig;
use odnssec::detector::DetectorConfig;
use odnssec::dns_model::IdentitySpace;
use odnssec::resolver::ResolverConfig;
use odnssec::sim::{Scenario, UpdateProcess};

#[derive(Debug, Clone, PartialEq)]
pub struct ParseError {
    pub line: usize,
    pub msg: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.line, self.msg)
    }
}

const SECTIONS: [&str; 4] = ["resolver", "attacker", "auth", "experiment"];

fn section_of(key: &str) -> Option<&'static str> {
    match key {
        "id_space" | "port_space" | "outstanding_cap" | "tod" | "resolver_qps" => Some("resolver"),
        "attacker_qps" | "bogus_qps" => Some("attacker"),
        "n_auth" | "window_s" | "auth_qps" | "lifecycle_s" | "ttl" | "update" => Some("auth"),
        "seed" | "duration_s" => Some("experiment"),
        _ => None,
    }
}

/// Parsed key/value pairs, still strings, keyed by name.
#[derive(Debug, Clone, Default)]
pub struct RawScenario {
    values: BTreeMap<String, String>,
}

pub fn parse(text: &str) -> Result<RawScenario, ParseError> {
    let mut raw = RawScenario::default();
    let mut section: Option<String> = None;
    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
            let name = name.trim();
            if !SECTIONS.contains(&name) {
                return Err(ParseError {
                    line: lineno,
                    msg: format!("unknown section `[{name}]`"),
                });
            }
            section = Some(name.to_string());
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(ParseError {
                line: lineno,
                msg: format!("expected `key = value`, got `{line}`"),
            });
        };
        let key = key.trim();
        let value = value.trim();
        let Some(expected_section) = section_of(key) else {
            return Err(ParseError {
                line: lineno,
                msg: format!("unknown key `{key}`"),
            });
        };
        match &section {
            Some(s) if s == expected_section => {}
            Some(s) => {
                return Err(ParseError {
                    line: lineno,
                    msg: format!("key `{key}` belongs in [{expected_section}], not [{s}]"),
                })
            }
            None => {
                return Err(ParseError {
                    line: lineno,
                    msg: format!("key `{key}` appears before any section header"),
                })
            }
        }
        if raw
            .values
            .insert(key.to_string(), value.to_string())
            .is_some()
        {
            return Err(ParseError {
                line: lineno,
                msg: format!("duplicate key `{key}`"),
            });
        }
    }
    Ok(raw)
}

impl RawScenario {
    /// Applies a `key=value` override after file parsing.
    pub fn apply_override(&mut self, ov: &str) -> Result<(), String> {
        let Some((key, value)) = ov.split_once('=') else {
            return Err("expected key=value".into());
        };
        let key = key.trim();
        if section_of(key).is_none() {
            return Err(format!("unknown key `{key}`"));
        }
        self.values
            .insert(key.to_string(), value.trim().to_string());
        Ok(())
    }

    fn num<T: std::str::FromStr>(&self, key: &str, default: T) -> Result<T, String>
    where
        T::Err: fmt::Display,
    {
        match self.values.get(key) {
            None => Ok(default),
            Some(v) => v.parse().map_err(|e| format!("key `{key}`: {e}")),
        }
    }

    /// Resolves defaults and builds the library scenario. `base_dir` anchors
    /// a scripted-update file path.
    pub fn into_scenario(self, base_dir: &Path) -> Result<Scenario, String> {
        let mut sc = Scenario::table_defaults();
        let identity_space = IdentitySpace {
            id_space: self.num("id_space", 65_536u32)?,
            port_space: self.num("port_space", 64_000u32)?,
            port_min: 1024,
        };
        sc.resolver = ResolverConfig {
            max_identical_outstanding: self.num("outstanding_cap", 20u32)?,
            detector: DetectorConfig {
                tod: self.num("tod", 3u32)?,
            },
            identity_space,
            upstream_qps: self.num("resolver_qps", 100.0f64)?,
            ..ResolverConfig::default()
        };
        let attacker_qps = self.num("attacker_qps", 1000.0f64)?;
        sc.attacker = if attacker_qps > 0.0 {
            let mut att = AttackConfig::new(sc.target_domain.clone());
            att.client_query_rate = attacker_qps;
            att.bogus_response_rate = self.num("bogus_qps", 100.0f64)?;
            Some(att)
        } else {
            None
        };
        sc.auth.response_time = self.num("window_s", 0.02f64)?;
        sc.auth.respond_rate = self.num("auth_qps", 100.0f64)?;
        sc.auth.lifecycle = self.num("lifecycle_s", 36_000.0f64)?;
        sc.seed = self.num("seed", 1u64)?;
        sc.duration = self.num("duration_s", 3600.0f64)?;
        // n_auth has no event-level meaning; it scales the analytic guess
        // space only. Accept and range-check it.
        let n_auth = self.num("n_auth", 2.5f64)?;
        if n_auth <= 0.0 {
            return Err("key `n_auth`: must be positive".into());
        }
        if let Some(ttl) = self.values.get("ttl") {
            sc.ttl_dist = parse_ttl(ttl)?;
        }
        if let Some(update) = self.values.get("update") {
            sc.auth.update_process = parse_update(update, base_dir)?;
        }
        sc.validate().map_err(|e| e.to_string())?;
        Ok(sc)
    }
}

fn parse_ttl(value: &str) -> Result<TtlDistribution, String> {
    let parts: Vec<&str> = value.split(':').collect();
    match parts.as_slice() {
        ["constant", v] => {
            let v: f64 = v.parse().map_err(|e| format!("key `ttl`: {e}"))?;
            Ok(TtlDistribution::Constant(v))
        }
        ["uniform", lo, hi] => {
            let lo: f64 = lo.parse().map_err(|e| format!("key `ttl`: {e}"))?;
            let hi: f64 = hi.parse().map_err(|e| format!("key `ttl`: {e}"))?;
            Ok(TtlDistribution::Uniform { lo, hi })
        }
        _ => Err(format!(
            "key `ttl`: expected `constant:X` or `uniform:LO:HI`, got `{value}`"
        )),
    }
}

fn parse_update(value: &str, base_dir: &Path) -> Result<UpdateProcess, String> {
    if value == "none" {
        return Ok(UpdateProcess::None);
    }
    let parts: Vec<&str> = value.splitn(2, ':').collect();
    match parts.as_slice() {
        ["exp", mean] => {
            let mean: f64 = mean.parse().map_err(|e| format!("key `update`: {e}"))?;
            if mean <= 0.0 {
                return Err("key `update`: exp mean must be positive".into());
            }
            Ok(UpdateProcess::Exponential { mean })
        }
        ["scripted", file] => {
            let path = base_dir.join(file);
            let text = fs::read_to_string(&path)
                .map_err(|e| format!("key `update`: cannot read {}: {e}", path.display()))?;
            let mut times = Vec::new();
            for (i, line) in text.lines().enumerate() {
                let line = line.trim();
                if line.is_empty() || line.starts_with('#') {
                    continue;
                }
                let t: f64 = line
                    .parse()
                    .map_err(|e| format!("key `update`: {}:{}: {e}", path.display(), i + 1))?;
                times.push(t);
            }
            if times.windows(2).any(|w| w[0] > w[1]) {
                return Err("key `update`: scripted times must be sorted".into());
            }
            Ok(UpdateProcess::Scripted(times))
        }
        _ => Err(format!(
            "key `update`: expected `none`, `exp:MEAN` or `scripted:FILE`, got `{value}`"
        )),
    }
}

/// Human-readable summary of a resolved scenario (for validate-config).
pub fn describe(sc: &Scenario) -> Vec<String> {
    let mut lines = vec![
        format!("target_domain = {}", sc.target_domain),
        format!("seed = {}", sc.seed),
        format!("duration_s = {}", sc.duration),
        format!(
            "resolver: id_space={} port_space={} outstanding_cap={} tod={} resolver_qps={}",
            sc.resolver.identity_space.id_space,
            sc.resolver.identity_space.port_space,
            sc.resolver.max_identical_outstanding,
            sc.resolver.detector.tod,
            sc.resolver.upstream_qps
        ),
        format!(
            "auth: window_s={} auth_qps={} lifecycle_s={} ttl={} update={:?}",
            sc.auth.response_time,
            sc.auth.respond_rate,
            sc.auth.lifecycle,
            sc.ttl_dist,
            sc.auth.update_process
        ),
    ];
    match &sc.attacker {
        Some(att) => lines.push(format!(
            "attacker: attacker_qps={} bogus_qps={}",
            att.client_query_rate, att.bogus_response_rate
        )),
        None => lines.push("attacker: disabled".into()),
    }
    lines
}

#[cfg(test)]
mod tests {
    use super::*;

    const GOOD: &str = "\
# reference settings
[resolver]
id_space = 65536
port_space = 64000
outstanding_cap = 20
tod = 3
resolver_qps = 100

[attacker]
attacker_qps = 1000
bogus_qps = 100

[auth]
n_auth = 2.5
window_s = 0.02
auth_qps = 100
lifecycle_s = 36000
ttl = constant:1000
update = none

[experiment]
seed = 7
duration_s = 60
";

    #[test]
    fn parses_reference_file() {
        let raw = parse(GOOD).unwrap();
        let sc = raw.into_scenario(Path::new(".")).unwrap();
        assert_eq!(sc.seed, 7);
        assert_eq!(sc.duration, 60.0);
        assert_eq!(sc.resolver.detector.tod, 3);
        assert!(sc.attacker.is_some());
    }

    #[test]
    fn defaults_fill_absent_keys() {
        let raw = parse("[experiment]\nseed = 9\n").unwrap();
        let sc = raw.into_scenario(Path::new(".")).unwrap();
        assert_eq!(sc.seed, 9);
        assert_eq!(sc.resolver.max_identical_outstanding, 20);
        assert_eq!(sc.auth.lifecycle, 36_000.0);
        assert_eq!(sc.ttl_dist, TtlDistribution::Constant(1000.0));
    }

    #[test]
    fn unknown_key_reports_line_number() {
        let err = parse("[resolver]\nid_space = 10\nbogus_key = 1\n").unwrap_err();
        assert_eq!(err.line, 3);
        assert!(err.msg.contains("bogus_key"));
    }

    #[test]
    fn misplaced_key_rejected() {
        let err = parse("[auth]\ntod = 3\n").unwrap_err();
        assert_eq!(err.line, 2);
        assert!(err.msg.contains("[resolver]"));
    }

    #[test]
    fn duplicate_key_rejected() {
        let err = parse("[resolver]\ntod = 3\ntod = 4\n").unwrap_err();
        assert_eq!(err.line, 3);
    }

    #[test]
    fn ttl_and_update_forms() {
        let raw = parse("[auth]\nttl = uniform:500:1500\nupdate = exp:1000\n").unwrap();
        let sc = raw.into_scenario(Path::new(".")).unwrap();
        assert_eq!(
            sc.ttl_dist,
            TtlDistribution::Uniform {
                lo: 500.0,
                hi: 1500.0
            }
        );
        assert_eq!(
            sc.auth.update_process,
            UpdateProcess::Exponential { mean: 1000.0 }
        );
    }

    #[test]
    fn attacker_qps_zero_disables_attacker() {
        let raw = parse("[attacker]\nattacker_qps = 0\n").unwrap();
        let sc = raw.into_scenario(Path::new(".")).unwrap();
        assert!(sc.attacker.is_none());
    }

    #[test]
    fn overrides_apply_after_parsing() {
        let mut raw = parse(GOOD).unwrap();
        raw.apply_override("tod=5").unwrap();
        raw.apply_override("lifecycle_s=7200").unwrap();
        assert!(raw.apply_override("nope=1").is_err());
        let sc = raw.into_scenario(Path::new(".")).unwrap();
        assert_eq!(sc.resolver.detector.tod, 5);
        assert_eq!(sc.auth.lifecycle, 7200.0);
    }
}
