//! CSV reproductions of the query-load and success-rate experiments. No
//! plotting here; each function returns a header row plus data rows with
//! fixed six-decimal formatting so reruns are byte-identical.

use std::fmt;

use crate::analytics::{
    independence_bound, mc_query_intervals, success_curve, time_to_success, TtlDistribution,
};
use crate::attacker::effective_outstanding;
use crate::dns_model::GuessSpace;
use crate::exec;

/// Update-interval sweep shared by the query-load figures.
pub const UPDATE_MEANS: [f64; 8] = [100.0, 300.0, 500.0, 700.0, 900.0, 1100.0, 1300.0, 1400.0];
/// Life-cycle sweep (hours) for the time-to-success figures.
pub const LIFECYCLE_HOURS: std::ops::RangeInclusive<u32> = 1..=20;
/// Outstanding-query series for the time-to-success figures.
pub const OUTSTANDING_SERIES: [u64; 3] = [5, 20, 80];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FigureName {
    Fig5,
    Fig6,
    Fig7,
    Fig8,
    Fig9,
    Fig10,
    Fig11,
}

impl FigureName {
    pub fn parse(s: &str) -> Option<FigureName> {
        match s {
            "fig5" => Some(FigureName::Fig5),
            "fig6" => Some(FigureName::Fig6),
            "fig7" => Some(FigureName::Fig7),
            "fig8" => Some(FigureName::Fig8),
            "fig9" => Some(FigureName::Fig9),
            "fig10" => Some(FigureName::Fig10),
            "fig11" => Some(FigureName::Fig11),
            _ => None,
        }
    }

    pub fn all() -> [FigureName; 7] {
        [
            FigureName::Fig5,
            FigureName::Fig6,
            FigureName::Fig7,
            FigureName::Fig8,
            FigureName::Fig9,
            FigureName::Fig10,
            FigureName::Fig11,
        ]
    }
}

impl fmt::Display for FigureName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            FigureName::Fig5 => "fig5",
            FigureName::Fig6 => "fig6",
            FigureName::Fig7 => "fig7",
            FigureName::Fig8 => "fig8",
            FigureName::Fig9 => "fig9",
            FigureName::Fig10 => "fig10",
            FigureName::Fig11 => "fig11",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone)]
pub struct FigOptions {
    pub seed: u64,
    /// Authoritative updates per Monte Carlo estimate.
    pub n_updates: u64,
    pub tod: u32,
    /// Identical outstanding queries for the success-rate closed forms.
    pub d: u64,
    /// Scalar guess-space size.
    pub g: u64,
    pub lifecycle_s: f64,
    /// Success-curve horizon.
    pub horizon_s: f64,
}

impl Default for FigOptions {
    fn default() -> Self {
        FigOptions {
            seed: 1,
            n_updates: 100_000,
            tod: 3,
            d: effective_outstanding(20, 1000.0, 0.02) as u64,
            g: GuessSpace::default().size_rounded(),
            lifecycle_s: 36_000.0,
            horizon_s: 365.25 * 86_400.0,
        }
    }
}

impl FigOptions {
    /// Applies one `key=value` override.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        let bad = |e: &dyn fmt::Display| format!("bad value for {key}: {e}");
        match key {
            "seed" => self.seed = value.parse().map_err(|e| bad(&e))?,
            "n_updates" => self.n_updates = value.parse().map_err(|e| bad(&e))?,
            "tod" => self.tod = value.parse().map_err(|e| bad(&e))?,
            "d" => self.d = value.parse().map_err(|e| bad(&e))?,
            "g" => self.g = value.parse().map_err(|e| bad(&e))?,
            "lifecycle_s" => self.lifecycle_s = value.parse().map_err(|e| bad(&e))?,
            "horizon_s" => self.horizon_s = value.parse().map_err(|e| bad(&e))?,
            _ => return Err(format!("unknown figure override key `{key}`")),
        }
        Ok(())
    }
}

/// Renders the named figure; returns (file name, CSV contents).
pub fn generate(name: FigureName, opts: &FigOptions) -> Result<(String, String), String> {
    let csv = match name {
        FigureName::Fig5 => query_interval_sweep_csv(opts, IntervalColumn::MeanInterval),
        FigureName::Fig6 => query_interval_sweep_csv(opts, IntervalColumn::TtlRatio),
        FigureName::Fig7 => fig7_csv(opts),
        FigureName::Fig8 => time_to_success_csv(opts, opts.tod)?,
        FigureName::Fig9 => time_to_success_csv(opts, 2)?,
        FigureName::Fig10 => success_curve_csv(opts, opts.tod)?,
        FigureName::Fig11 => success_curve_csv(opts, 5)?,
    };
    Ok((format!("{name}.csv"), csv))
}

enum IntervalColumn {
    MeanInterval,
    TtlRatio,
}

fn ttl_series() -> [TtlDistribution; 2] {
    [
        TtlDistribution::Constant(1000.0),
        TtlDistribution::Uniform {
            lo: 500.0,
            hi: 1500.0,
        },
    ]
}

fn query_interval_sweep_csv(opts: &FigOptions, column: IntervalColumn) -> String {
    let mut out = String::from(match column {
        IntervalColumn::MeanInterval => {
            "update_mean_s,ttl_dist,mean_interval_s,ci_halfwidth_s,ttl_triggered,update_triggered,eq3_bound_s\n"
        }
        IntervalColumn::TtlRatio => {
            "update_mean_s,ttl_dist,ttl_triggered_ratio,ratio_ci_halfwidth,ttl_triggered,update_triggered\n"
        }
    });
    let points: Vec<(usize, &f64, TtlDistribution)> = UPDATE_MEANS
        .iter()
        .enumerate()
        .flat_map(|(i, m)| ttl_series().into_iter().map(move |t| (i, m, t)))
        .collect();
    let rows = exec::run_jobs(points.len(), |idx| {
        let (i, mean, ttl) = &points[idx];
        let est = mc_query_intervals(
            ttl,
            **mean,
            opts.n_updates,
            opts.seed.wrapping_add(*i as u64),
        );
        let bound = independence_bound(**mean, ttl.mean());
        match column {
            IntervalColumn::MeanInterval => format!(
                "{:.6},{},{:.6},{:.6},{},{},{:.6}\n",
                mean,
                ttl,
                est.mean_interval,
                est.ci_halfwidth,
                est.ttl_triggered,
                est.update_triggered,
                bound
            ),
            IntervalColumn::TtlRatio => format!(
                "{:.6},{},{:.6},{:.6},{},{}\n",
                mean,
                ttl,
                est.ttl_triggered_ratio,
                est.ratio_ci_halfwidth,
                est.ttl_triggered,
                est.update_triggered
            ),
        }
    });
    for row in rows {
        out.push_str(&row);
    }
    out
}

/// Single-point ratio at constant TTL 1000 s and update mean 1000 s.
fn fig7_csv(opts: &FigOptions) -> String {
    let ttl = TtlDistribution::Constant(1000.0);
    let est = mc_query_intervals(&ttl, 1000.0, opts.n_updates, opts.seed);
    format!(
        "update_mean_s,ttl_dist,ttl_triggered_ratio,ratio_ci_halfwidth,ttl_triggered,update_triggered\n{:.6},{},{:.6},{:.6},{},{}\n",
        1000.0, ttl, est.ttl_triggered_ratio, est.ratio_ci_halfwidth, est.ttl_triggered,
        est.update_triggered
    )
}

fn time_to_success_csv(opts: &FigOptions, tod: u32) -> Result<String, String> {
    let mut out = String::from("lifecycle_s,outstanding_d,tod,rounds,time_to_50pct_s\n");
    for hours in LIFECYCLE_HOURS {
        let lifecycle = hours as f64 * 3600.0;
        for d in OUTSTANDING_SERIES {
            let tts =
                time_to_success(0.5, lifecycle, tod, d, opts.g, 0.02).map_err(|e| e.to_string())?;
            out.push_str(&format!(
                "{:.6},{},{},{},{:.6}\n",
                lifecycle, d, tod, tts.rounds, tts.seconds
            ));
        }
    }
    Ok(out)
}

fn success_curve_csv(opts: &FigOptions, tod: u32) -> Result<String, String> {
    let curve = success_curve(opts.horizon_s, opts.lifecycle_s, tod, opts.d, opts.g)
        .map_err(|e| e.to_string())?;
    let mut out = String::from("step,time_s,success_prob\n");
    for (k, (t, p)) in curve.points.iter().enumerate() {
        out.push_str(&format!("{},{:.6},{:.9}\n", k, t, p));
    }
    Ok(out)
}
