//! Aggregation across seed batches and scaling-law fits.

use crate::checks::RunCheck;
use crate::simnet::RunMetrics;
use serde::Serialize;
use thiserror::Error;

#[derive(Error, Debug, PartialEq, Eq)]
pub enum StatsError {
    #[error("scaling fit needs at least {needed} distinct sizes, got {got}")]
    InsufficientPoints { needed: usize, got: usize },
}

/// Least-squares slope of `ln y` against `ln x`. The exponent of a power
/// law `y = c * x^k` comes back as `k`.
pub fn log_log_slope(points: &[(f64, f64)]) -> Result<f64, StatsError> {
    let mut xs: Vec<f64> = points.iter().map(|(x, _)| *x).collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    if xs.len() < 3 {
        return Err(StatsError::InsufficientPoints {
            needed: 3,
            got: xs.len(),
        });
    }
    let n = points.len() as f64;
    let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
    for (x, y) in points {
        let lx = x.ln();
        let ly = y.ln();
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
    }
    Ok((n * sxy - sx * sy) / (n * sxx - sx * sx))
}

/// Roll-up of one batch of runs over seeds.
#[derive(Debug, Serialize)]
pub struct Summary {
    pub runs: usize,
    pub violations: usize,
    pub runs_with_violations: usize,
    pub budget_exhausted: usize,
    pub words_mean: f64,
    pub words_max: u64,
    pub decided_view_mean: Option<f64>,
    pub decided_view_p90: Option<u64>,
    pub decided_view_max: Option<u64>,
    pub unanimous_frac: Option<f64>,
    pub honest_value_frac: Option<f64>,
}

impl Summary {
    pub fn from_runs(runs: &[(RunMetrics, RunCheck)]) -> Summary {
        let violations = runs.iter().map(|(_, c)| c.violations.len()).sum();
        let mut views: Vec<u64> = runs.iter().filter_map(|(_, c)| c.decided_view).collect();
        views.sort_unstable();
        let frac = |pick: fn(&RunCheck) -> Option<bool>| {
            let flags: Vec<bool> = runs.iter().filter_map(|(_, c)| pick(c)).collect();
            if flags.is_empty() {
                None
            } else {
                Some(flags.iter().filter(|b| **b).count() as f64 / flags.len() as f64)
            }
        };
        Summary {
            runs: runs.len(),
            violations,
            runs_with_violations: runs
                .iter()
                .filter(|(_, c)| !c.violations.is_empty())
                .count(),
            budget_exhausted: runs.iter().filter(|(m, _)| m.budget_exhausted).count(),
            words_mean: if runs.is_empty() {
                0.0
            } else {
                runs.iter().map(|(m, _)| m.words_total as f64).sum::<f64>() / runs.len() as f64
            },
            words_max: runs.iter().map(|(m, _)| m.words_total).max().unwrap_or(0),
            decided_view_mean: if views.is_empty() {
                None
            } else {
                Some(views.iter().sum::<u64>() as f64 / views.len() as f64)
            },
            decided_view_p90: if views.is_empty() {
                None
            } else {
                Some(views[(views.len() * 9 / 10).min(views.len() - 1)])
            },
            decided_view_max: views.last().copied(),
            unanimous_frac: frac(|c| c.unanimous),
            honest_value_frac: frac(|c| c.honest_value),
        }
    }
}
