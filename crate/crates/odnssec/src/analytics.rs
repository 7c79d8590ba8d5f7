//! Closed-form and Monte Carlo analysis of the defense: the DNSSEC
//! query-event renewal process (queries fire at residual-TTL expiry and at
//! every authoritative update, either of which renews the residual TTL),
//! query-interval statistics, and poisoning success-rate curves.

use std::fmt;

use rand::Rng;

use crate::rng;
use crate::SimTime;

/// TTL model for the records in question.
#[derive(Debug, Clone, PartialEq)]
pub enum TtlDistribution {
    Constant(f64),
    Uniform { lo: f64, hi: f64 },
}

impl TtlDistribution {
    pub fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        match self {
            TtlDistribution::Constant(v) => *v,
            TtlDistribution::Uniform { lo, hi } => rng::uniform_sample(rng, *lo, *hi),
        }
    }

    pub fn mean(&self) -> f64 {
        match self {
            TtlDistribution::Constant(v) => *v,
            TtlDistribution::Uniform { lo, hi } => 0.5 * (lo + hi),
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        match self {
            TtlDistribution::Constant(v) if *v > 0.0 => Ok(()),
            TtlDistribution::Uniform { lo, hi } if *lo > 0.0 && hi >= lo => Ok(()),
            _ => Err("ttl distribution must be positive (and hi >= lo)".into()),
        }
    }
}

impl fmt::Display for TtlDistribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TtlDistribution::Constant(v) => write!(f, "constant:{v}"),
            TtlDistribution::Uniform { lo, hi } => write!(f, "uniform:{lo}:{hi}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QueryTrigger {
    TtlExpiry,
    AuthUpdate,
}

/// The DNSSEC query events of one trace: strictly increasing times with
/// their triggers.
#[derive(Debug, Clone, Default)]
pub struct QueryEventTrace {
    pub query_times: Vec<SimTime>,
    pub triggers: Vec<QueryTrigger>,
}

impl QueryEventTrace {
    pub fn len(&self) -> usize {
        self.query_times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.query_times.is_empty()
    }

    pub fn intervals(&self) -> Vec<f64> {
        let mut prev = 0.0;
        self.query_times
            .iter()
            .map(|t| {
                let dt = t - prev;
                prev = *t;
                dt
            })
            .collect()
    }

    pub fn count(&self, trigger: QueryTrigger) -> u64 {
        self.triggers.iter().filter(|t| **t == trigger).count() as u64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum AnalyticsError {
    /// d exceeds the guess space size.
    OutstandingExceedsSpace {
        d: u64,
        g: u64,
    },
    /// Target probability outside (0, 1).
    BadTargetProbability(f64),
    /// Per-round failure probability is exactly 1; the target is unreachable.
    UnreachableTarget,
    BadParameter(&'static str),
}

impl fmt::Display for AnalyticsError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AnalyticsError::OutstandingExceedsSpace { d, g } => {
                write!(f, "outstanding count {d} exceeds guess space {g}")
            }
            AnalyticsError::BadTargetProbability(p) => {
                write!(f, "target probability {p} outside (0, 1)")
            }
            AnalyticsError::UnreachableTarget => {
                write!(f, "per-round failure probability is 1; target unreachable")
            }
            AnalyticsError::BadParameter(what) => write!(f, "bad parameter: {what}"),
        }
    }
}

impl std::error::Error for AnalyticsError {}

/// Simulates the residual-TTL clock: a query fires and the clock resets to a
/// fresh TTL draw when it reaches zero (TtlExpiry) or when an authoritative
/// update occurs (AuthUpdate). Updates are never suppressed; a TTL expiry
/// coinciding exactly with an update yields a single AuthUpdate query.
/// Events up to and including `horizon` are reported.
pub fn query_event_process<R: Rng>(
    ttl: &TtlDistribution,
    update_times: &[SimTime],
    horizon: SimTime,
    rng: &mut R,
) -> QueryEventTrace {
    debug_assert!(horizon > 0.0);
    debug_assert!(update_times.windows(2).all(|w| w[0] <= w[1]));
    let mut trace = QueryEventTrace::default();
    let mut t = 0.0;
    let mut residual = ttl.sample(rng);
    let mut next_update_idx = 0;
    loop {
        let ttl_fire = t + residual;
        let update_fire = update_times
            .get(next_update_idx)
            .copied()
            .unwrap_or(f64::INFINITY);
        if update_fire <= ttl_fire {
            if update_fire > horizon {
                break;
            }
            t = update_fire;
            next_update_idx += 1;
            trace.query_times.push(t);
            trace.triggers.push(QueryTrigger::AuthUpdate);
        } else {
            if ttl_fire > horizon {
                break;
            }
            t = ttl_fire;
            trace.query_times.push(t);
            trace.triggers.push(QueryTrigger::TtlExpiry);
        }
        residual = ttl.sample(rng);
    }
    trace
}

/// Monte Carlo estimate of DNSSEC query intervals under exponential
/// authoritative updates.
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalEstimate {
    pub mean_interval: f64,
    /// 95% normal-approximation half-width of the mean interval.
    pub ci_halfwidth: f64,
    pub ttl_triggered_ratio: f64,
    /// 95% half-width of the ratio.
    pub ratio_ci_halfwidth: f64,
    pub ttl_triggered: u64,
    pub update_triggered: u64,
}

/// Generates `n_updates` exponential inter-update times (mean `update_mean`)
/// and runs the query-event process over the same span.
pub fn mc_query_intervals(
    ttl: &TtlDistribution,
    update_mean: f64,
    n_updates: u64,
    seed: u64,
) -> IntervalEstimate {
    assert!(update_mean > 0.0 && n_updates >= 1);
    let mut update_rng = rng::derive(seed, rng::stream::AUTH_UPDATES);
    let mut ttl_rng = rng::derive(seed, rng::stream::TTL_DRAWS);
    let mut update_times = Vec::with_capacity(n_updates as usize);
    let mut t = 0.0;
    for _ in 0..n_updates {
        t += rng::exp_sample(&mut update_rng, update_mean);
        update_times.push(t);
    }
    let horizon = t;
    let trace = query_event_process(ttl, &update_times, horizon, &mut ttl_rng);
    let intervals = trace.intervals();
    let n = intervals.len() as f64;
    let mean = intervals.iter().sum::<f64>() / n;
    let var = intervals
        .iter()
        .map(|x| (x - mean) * (x - mean))
        .sum::<f64>()
        / n;
    let ttl_triggered = trace.count(QueryTrigger::TtlExpiry);
    let update_triggered = trace.count(QueryTrigger::AuthUpdate);
    let ratio = ttl_triggered as f64 / n;
    IntervalEstimate {
        mean_interval: mean,
        ci_halfwidth: 1.96 * (var / n).sqrt(),
        ttl_triggered_ratio: ratio,
        ratio_ci_halfwidth: 1.96 * (ratio * (1.0 - ratio) / n).sqrt(),
        ttl_triggered,
        update_triggered,
    }
}

/// Mean query interval if TTL expiry and updates were independent renewal
/// processes superposed: the lower bound on the true interval.
pub fn independence_bound(i_update: f64, i_ttl: f64) -> f64 {
    assert!(i_update > 0.0 && i_ttl > 0.0);
    i_update * i_ttl / (i_update + i_ttl)
}

/// Probability that all of `h` guessing attempts miss, given `d` identical
/// outstanding queries in a guess space of size `g`: (1 - d/g)^h.
pub fn p_round_fail(h: u32, d: u64, g: u64) -> Result<f64, AnalyticsError> {
    if g == 0 {
        return Err(AnalyticsError::BadParameter("g must be positive"));
    }
    if d > g {
        return Err(AnalyticsError::OutstandingExceedsSpace { d, g });
    }
    Ok((1.0 - d as f64 / g as f64).powi(h as i32))
}

/// Cumulative success probability within `i` rounds: 1 - P^i.
pub fn success_within_rounds(p_fail_per_round: f64, rounds: u64) -> f64 {
    1.0 - p_fail_per_round.powf(rounds as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeToSuccess {
    pub rounds: u64,
    pub seconds: f64,
    pub round_period: f64,
}

/// Smallest number of rounds (and the wall time they take) reaching the
/// target cumulative success probability. Attempts per round is the
/// threshold of defense minus one. A positive `lifecycle` means cached
/// validating records gate rounds, so one round lasts a full life cycle;
/// `lifecycle == 0` means caching is off and one round takes two response
/// times.
pub fn time_to_success(
    target_prob: f64,
    lifecycle: f64,
    tod: u32,
    d: u64,
    g: u64,
    response_time: f64,
) -> Result<TimeToSuccess, AnalyticsError> {
    if !(target_prob > 0.0 && target_prob < 1.0) {
        return Err(AnalyticsError::BadTargetProbability(target_prob));
    }
    if tod < 1 {
        return Err(AnalyticsError::BadParameter("tod must be at least 1"));
    }
    let h = tod - 1;
    let p_fail = p_round_fail(h, d, g)?;
    if p_fail >= 1.0 {
        return Err(AnalyticsError::UnreachableTarget);
    }
    let rounds = if p_fail == 0.0 {
        1
    } else {
        // Smallest i with 1 - p^i >= target, i.e. p^i <= 1 - target.
        let raw = (1.0 - target_prob).ln() / p_fail.ln();
        let mut i = raw.ceil() as u64;
        while i > 1 && success_within_rounds(p_fail, i - 1) >= target_prob {
            i -= 1;
        }
        while success_within_rounds(p_fail, i) < target_prob {
            i += 1;
        }
        i
    };
    let round_period = if lifecycle > 0.0 {
        lifecycle
    } else {
        2.0 * response_time
    };
    Ok(TimeToSuccess {
        rounds,
        seconds: rounds as f64 * round_period,
        round_period,
    })
}

/// Cumulative poisoning success probability over time: a right-continuous
/// stair-step, one step per round, step k at k * round_period with value
/// 1 - P^k.
#[derive(Debug, Clone, PartialEq)]
pub struct SuccessCurve {
    pub points: Vec<(SimTime, f64)>,
    pub round_period: f64,
}

impl SuccessCurve {
    /// Curve value at time t (right-continuous).
    pub fn at(&self, t: SimTime) -> f64 {
        let mut v = 0.0;
        for (pt, pv) in &self.points {
            if *pt <= t {
                v = *pv;
            } else {
                break;
            }
        }
        v
    }
}

/// Stair-step success curve out to `horizon` with rounds gated by the
/// life cycle of cached validating records.
pub fn success_curve(
    horizon: f64,
    lifecycle: f64,
    tod: u32,
    d: u64,
    g: u64,
) -> Result<SuccessCurve, AnalyticsError> {
    if horizon <= 0.0 || lifecycle <= 0.0 {
        return Err(AnalyticsError::BadParameter(
            "horizon and lifecycle must be positive",
        ));
    }
    if tod < 1 {
        return Err(AnalyticsError::BadParameter("tod must be at least 1"));
    }
    let p_fail = p_round_fail(tod - 1, d, g)?;
    let steps = (horizon / lifecycle).floor() as u64;
    let mut points = Vec::with_capacity(steps as usize + 1);
    points.push((0.0, 0.0));
    for k in 1..=steps {
        points.push((k as f64 * lifecycle, success_within_rounds(p_fail, k)));
    }
    Ok(SuccessCurve {
        points,
        round_period: lifecycle,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    const TABLE_G: u64 = ((65_536 + 64_000) as f64 * 2.5) as u64; // 323840

    #[test]
    fn pure_renewal_fires_at_ttl_multiples() {
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        let trace = query_event_process(&TtlDistribution::Constant(1000.0), &[], 3000.0, &mut rng);
        assert_eq!(trace.query_times, vec![1000.0, 2000.0, 3000.0]);
        assert!(trace.triggers.iter().all(|t| *t == QueryTrigger::TtlExpiry));
    }

    #[test]
    fn update_renews_residual_ttl() {
        // Hand trace: update at 500 fires a query and resets the clock, so
        // the next TTL expiry lands at 1500, not 1000.
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        let trace = query_event_process(
            &TtlDistribution::Constant(1000.0),
            &[500.0],
            1600.0,
            &mut rng,
        );
        assert_eq!(trace.query_times, vec![500.0, 1500.0]);
        assert_eq!(
            trace.triggers,
            vec![QueryTrigger::AuthUpdate, QueryTrigger::TtlExpiry]
        );
    }

    #[test]
    fn frequent_updates_leave_no_ttl_expiries() {
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        let updates: Vec<f64> = (1..=30).map(|k| k as f64 * 100.0).collect();
        let trace = query_event_process(
            &TtlDistribution::Constant(1000.0),
            &updates,
            3000.0,
            &mut rng,
        );
        assert_eq!(trace.count(QueryTrigger::TtlExpiry), 0);
        assert_eq!(trace.count(QueryTrigger::AuthUpdate), 30);
    }

    #[test]
    fn every_update_fires_a_query() {
        // Updates are never suppressed, whatever the TTL draws do.
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let mut update_rng = ChaCha12Rng::seed_from_u64(6);
        let mut t = 0.0;
        let mut updates = Vec::new();
        for _ in 0..500 {
            t += crate::rng::exp_sample(&mut update_rng, 700.0);
            updates.push(t);
        }
        let trace = query_event_process(
            &TtlDistribution::Uniform {
                lo: 500.0,
                hi: 1500.0,
            },
            &updates,
            t,
            &mut rng,
        );
        assert_eq!(trace.count(QueryTrigger::AuthUpdate), 500);
    }

    #[test]
    fn ttl_ratio_matches_exponential_survival() {
        // With constant TTL T and exponential updates of mean m, an interval
        // ends in TTL expiry iff the next update is later than T, so the
        // ratio converges to exp(-T/m): the analytic oracle behind the
        // "about 36%" observation at T = m = 1000.
        let est = mc_query_intervals(&TtlDistribution::Constant(1000.0), 1000.0, 100_000, 9);
        let expected = (-1.0f64).exp();
        assert!(
            (est.ttl_triggered_ratio - expected).abs() < 0.01,
            "ratio {} vs {expected}",
            est.ttl_triggered_ratio
        );
        // Frequent updates starve TTL expiry almost completely.
        let est = mc_query_intervals(&TtlDistribution::Constant(1000.0), 100.0, 100_000, 9);
        assert!(
            est.ttl_triggered_ratio < 0.001,
            "{}",
            est.ttl_triggered_ratio
        );
    }

    #[test]
    fn mean_interval_matches_min_exp_ttl_closed_form() {
        // Each inter-query interval is min(Exp(m), TTL); for constant TTL
        // the mean is m(1 - e^{-T/m}) = 632.12 at T = m = 1000, and for
        // uniform TTL on [500, 1500] it is m(1 - (e^{-1/2} - e^{-3/2})) =
        // 616.60. The uniform mean sits below the constant one: min(X, t)
        // is concave in t, so a TTL spread can only lower the mean.
        let est_c = mc_query_intervals(&TtlDistribution::Constant(1000.0), 1000.0, 200_000, 10);
        let expected_c = 1000.0 * (1.0 - (-1.0f64).exp());
        assert!(
            (est_c.mean_interval - expected_c).abs() < 3.0,
            "constant mean {} vs {expected_c}",
            est_c.mean_interval
        );
        let est_u = mc_query_intervals(
            &TtlDistribution::Uniform {
                lo: 500.0,
                hi: 1500.0,
            },
            1000.0,
            200_000,
            10,
        );
        let expected_u = 1000.0 * (1.0 - ((-0.5f64).exp() - (-1.5f64).exp()));
        assert!(
            (est_u.mean_interval - expected_u).abs() < 3.0,
            "uniform mean {} vs {expected_u}",
            est_u.mean_interval
        );
        assert!(est_u.mean_interval < est_c.mean_interval);
    }

    #[test]
    fn interval_never_beats_independence_bound() {
        for (ttl, mean) in [
            (TtlDistribution::Constant(1000.0), 100.0),
            (TtlDistribution::Constant(1000.0), 1000.0),
            (
                TtlDistribution::Uniform {
                    lo: 500.0,
                    hi: 1500.0,
                },
                700.0,
            ),
            (
                TtlDistribution::Uniform {
                    lo: 500.0,
                    hi: 1500.0,
                },
                1400.0,
            ),
        ] {
            let est = mc_query_intervals(&ttl, mean, 60_000, 11);
            let bound = independence_bound(mean, ttl.mean());
            assert!(
                est.mean_interval >= bound * 0.99,
                "{ttl:?} mean {mean}: interval {} < bound {bound}",
                est.mean_interval
            );
        }
    }

    #[test]
    fn independence_bound_values() {
        assert_eq!(independence_bound(1000.0, 1000.0), 500.0);
        assert!((independence_bound(1e12, 1000.0) - 1000.0).abs() < 1e-6);
        assert!((independence_bound(1400.0, 1000.0) - 583.3333333333334).abs() < 1e-9);
    }

    #[test]
    fn p_round_fail_edges_and_value() {
        assert_eq!(p_round_fail(0, 20, 323_840).unwrap(), 1.0);
        assert_eq!(p_round_fail(1, 64, 64).unwrap(), 0.0);
        let p = p_round_fail(2, 20, TABLE_G).unwrap();
        assert!((p - 0.9998764867).abs() < 1e-9, "p = {p}");
        assert!(p_round_fail(1, 65, 64).is_err());
    }

    #[test]
    fn time_to_success_reproduces_table_parameters() {
        // tod=3, d=20, G=(65536+64000)*2.5, life cycle 10 h: 5612 rounds,
        // about 6.4 years, comfortably above two years.
        let tts = time_to_success(0.5, 36_000.0, 3, 20, TABLE_G, 0.02).unwrap();
        assert_eq!(tts.rounds, 5612);
        assert_eq!(tts.seconds, 5612.0 * 36_000.0);
        let years = tts.seconds / (365.25 * 86_400.0);
        assert!(years > 6.3 && years < 6.5, "{years} years");
        assert!(tts.seconds >= 2.0 * 365.25 * 86_400.0);
    }

    #[test]
    fn time_to_success_scales_linearly_with_lifecycle() {
        let base = time_to_success(0.5, 36_000.0, 3, 20, TABLE_G, 0.02).unwrap();
        let doubled = time_to_success(0.5, 72_000.0, 3, 20, TABLE_G, 0.02).unwrap();
        let ratio = doubled.seconds / base.seconds;
        assert!((1.99..=2.01).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn caching_disabled_round_period_is_two_response_times() {
        let tts = time_to_success(0.5, 0.0, 3, 20, TABLE_G, 0.02).unwrap();
        assert_eq!(tts.round_period, 0.04);
        assert_eq!(tts.rounds, 5612);
    }

    #[test]
    fn smaller_tod_means_longer_time_to_success() {
        let t2 = time_to_success(0.5, 36_000.0, 2, 20, TABLE_G, 0.02).unwrap();
        let t3 = time_to_success(0.5, 36_000.0, 3, 20, TABLE_G, 0.02).unwrap();
        let t5 = time_to_success(0.5, 36_000.0, 5, 20, TABLE_G, 0.02).unwrap();
        assert!(t2.seconds >= t3.seconds && t3.seconds >= t5.seconds);
    }

    #[test]
    fn unreachable_and_degenerate_targets_error() {
        assert!(matches!(
            time_to_success(0.5, 36_000.0, 1, 20, TABLE_G, 0.02),
            Err(AnalyticsError::UnreachableTarget)
        ));
        assert!(matches!(
            time_to_success(0.5, 36_000.0, 3, 0, TABLE_G, 0.02),
            Err(AnalyticsError::UnreachableTarget)
        ));
        assert!(time_to_success(1.5, 36_000.0, 3, 20, TABLE_G, 0.02).is_err());
    }

    #[test]
    fn success_curve_shape() {
        let curve = success_curve(10.0 * 36_000.0, 36_000.0, 3, 20, TABLE_G).unwrap();
        // Non-decreasing, bounded by 1, zero before the first round
        // completes, steps spaced one life cycle apart.
        assert_eq!(curve.at(35_999.0), 0.0);
        let mut prev = -1.0;
        for (t, v) in &curve.points {
            assert!(*v >= prev && *v <= 1.0);
            prev = *v;
            if *t > 0.0 {
                assert_eq!(t % 36_000.0, 0.0);
            }
        }
        assert_eq!(curve.points.len(), 11);
        // Larger ToD lies pointwise above: more free attempts per round.
        let curve5 = success_curve(10.0 * 36_000.0, 36_000.0, 5, 20, TABLE_G).unwrap();
        for ((_, v3), (_, v5)) in curve.points.iter().zip(&curve5.points) {
            assert!(v5 >= v3);
        }
    }

    #[test]
    fn sweep_enumeration_matches_product_form() {
        // Exhaustive enumeration of without-replacement guess sequences for
        // tiny parameters, against the product form prod (g-d-j)/(g-j), and
        // both against the with-replacement closed form (1-d/g)^h.
        fn enumerate_miss_fraction(g: u64, d: u64, h: u32) -> f64 {
            // Defenders occupy identities 0..d. Count ordered sequences of
            // h distinct guesses avoiding all of them.
            fn rec(
                g: u64,
                d: u64,
                left: u32,
                used: &mut Vec<u64>,
                misses: &mut u64,
                total: &mut u64,
            ) {
                if left == 0 {
                    *total += 1;
                    if used.iter().all(|x| *x >= d) {
                        *misses += 1;
                    }
                    return;
                }
                for guess in 0..g {
                    if used.contains(&guess) {
                        continue;
                    }
                    used.push(guess);
                    rec(g, d, left - 1, used, misses, total);
                    used.pop();
                }
            }
            let (mut misses, mut total) = (0u64, 0u64);
            rec(g, d, h, &mut Vec::new(), &mut misses, &mut total);
            misses as f64 / total as f64
        }

        for (g, d, h) in [(8u64, 2u64, 2u32), (8, 2, 3), (10, 3, 2)] {
            let enumerated = enumerate_miss_fraction(g, d, h);
            let product: f64 = (0..h as u64)
                .map(|j| (g - d - j) as f64 / (g - j) as f64)
                .product();
            assert!((enumerated - product).abs() < 1e-12);
            // The with-replacement form is an upper bound and close for
            // small h/g.
            let closed = p_round_fail(h, d, g).unwrap();
            assert!(product <= closed + 1e-12);
            assert!((closed - product) < 0.08, "g={g} d={d} h={h}");
        }
        // At the top of the reduced-space range the sweep's product form and
        // the with-replacement form are practically indistinguishable.
        for (g, d, h) in [(4096u64, 16u64, 5u32), (4096, 4, 2)] {
            let product: f64 = (0..h as u64)
                .map(|j| (g - d - j) as f64 / (g - j) as f64)
                .product();
            let closed = p_round_fail(h, d, g).unwrap();
            assert!(product <= closed + 1e-15);
            assert!((closed - product) < 1e-4, "g={g} d={d} h={h}");
        }
    }

    mod curve_properties {
        use super::super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn success_curve_monotone_bounded_and_evenly_stepped(
                tod in 1u32..=8,
                d in 0u64..=64,
                g in 64u64..=100_000,
                lifecycle in 60.0f64..36_000.0,
                steps in 1u64..=40,
            ) {
                prop_assume!(d <= g);
                let horizon = lifecycle * steps as f64;
                let curve = success_curve(horizon, lifecycle, tod, d, g).unwrap();
                let mut prev = -1.0;
                for (i, (t, v)) in curve.points.iter().enumerate() {
                    prop_assert!(*v >= prev && *v <= 1.0);
                    prop_assert!((t - i as f64 * lifecycle).abs() < 1e-6 * lifecycle);
                    prev = *v;
                }
                // Right-continuity: the value at a step time is the stepped
                // value, and just before it is the previous one.
                if curve.points.len() > 1 {
                    let (t1, v1) = curve.points[1];
                    prop_assert_eq!(curve.at(t1), v1);
                    prop_assert_eq!(curve.at(t1 - 1e-9 * lifecycle), curve.points[0].1);
                }
            }

            #[test]
            fn p_round_fail_is_a_probability(h in 0u32..=16, d in 0u64..=512, g in 1u64..=100_000) {
                prop_assume!(d <= g);
                let p = p_round_fail(h, d, g).unwrap();
                prop_assert!((0.0..=1.0).contains(&p));
                // More attempts never raise the failure probability.
                let p_more = p_round_fail(h + 1, d, g).unwrap();
                prop_assert!(p_more <= p + 1e-15);
            }
        }
    }
}
