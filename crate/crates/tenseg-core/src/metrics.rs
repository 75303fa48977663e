//! Scoring detection output: scaled Hausdorff distance between change-point
//! sets, the frequency distribution of the estimation-count error, and
//! timing aggregation across Monte Carlo replications.

use crate::error::{Result, TensegError};

/// What to do when exactly one of the two change-point sets is empty.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmptyPolicy {
    /// Replace the empty side by the boundary points {0, T}, so total misses
    /// are penalized proportionally to the segment geometry.
    Anchor,
    /// Report the distance as undefined.
    Undefined,
}

fn check_sorted(name: &str, cps: &[usize], t_len: usize) -> Result<()> {
    for w in cps.windows(2) {
        if w[1] < w[0] {
            return Err(TensegError::invalid_argument(format!(
                "{name} change-points must be sorted"
            )));
        }
    }
    if cps.iter().any(|&c| c > t_len) {
        return Err(TensegError::invalid_argument(format!(
            "{name} change-points must lie within [0, {t_len}]"
        )));
    }
    Ok(())
}

/// Longest segment induced by the true change-points on [0, T].
fn largest_segment(truth: &[usize], t_len: usize) -> usize {
    let mut prev = 0usize;
    let mut best = 0usize;
    for &c in truth.iter().chain(std::iter::once(&t_len)) {
        best = best.max(c.saturating_sub(prev));
        prev = c;
    }
    best.max(1)
}

fn directed_max_min(from: &[usize], to: &[usize]) -> f64 {
    let mut worst = 0.0f64;
    for &a in from {
        let mut nearest = f64::INFINITY;
        for &b in to {
            nearest = nearest.min((a as f64 - b as f64).abs());
        }
        worst = worst.max(nearest);
    }
    worst
}

/// Scaled Hausdorff distance between the true and estimated change-point
/// sets: the larger of the two directed max-min gap distances, divided by
/// the longest true segment on [0, T]. Both sets empty scores 0; exactly one
/// empty side follows `policy` ([`EmptyPolicy::Anchor`] substitutes {0, T}).
pub fn hausdorff_with_policy(
    truth: &[usize],
    estimate: &[usize],
    t_len: usize,
    policy: EmptyPolicy,
) -> Result<Option<f64>> {
    if t_len < 2 {
        return Err(TensegError::invalid_argument("series length must be at least 2"));
    }
    check_sorted("true", truth, t_len)?;
    check_sorted("estimated", estimate, t_len)?;
    if truth.is_empty() && estimate.is_empty() {
        return Ok(Some(0.0));
    }
    let n_s = largest_segment(truth, t_len) as f64;
    let anchors = [0usize, t_len];
    let (a, b): (&[usize], &[usize]) = match (truth.is_empty(), estimate.is_empty()) {
        (false, false) => (truth, estimate),
        (true, false) | (false, true) => match policy {
            EmptyPolicy::Undefined => return Ok(None),
            EmptyPolicy::Anchor => {
                if truth.is_empty() {
                    (&anchors, estimate)
                } else {
                    (truth, &anchors)
                }
            }
        },
        (true, true) => unreachable!(),
    };
    let d = directed_max_min(a, b).max(directed_max_min(b, a));
    Ok(Some(d / n_s))
}

/// [`hausdorff_with_policy`] under the boundary-anchoring convention.
pub fn hausdorff(truth: &[usize], estimate: &[usize], t_len: usize) -> Result<f64> {
    Ok(hausdorff_with_policy(truth, estimate, t_len, EmptyPolicy::Anchor)?
        .expect("anchoring always yields a value"))
}

/// One Monte Carlo replication's outcome.
#[derive(Debug, Clone)]
pub struct EvalRecord {
    pub true_cps: Vec<usize>,
    pub est_cps: Vec<usize>,
    pub t_len: usize,
    /// Scaled Hausdorff distance under the anchoring convention.
    pub d_h: f64,
    /// Estimated minus true change-point count.
    pub n_hat_minus_n: i64,
    pub elapsed_secs: f64,
}

impl EvalRecord {
    pub fn new(
        true_cps: Vec<usize>,
        est_cps: Vec<usize>,
        t_len: usize,
        elapsed_secs: f64,
    ) -> Result<EvalRecord> {
        let d_h = hausdorff(&true_cps, &est_cps, t_len)?;
        let n_hat_minus_n = est_cps.len() as i64 - true_cps.len() as i64;
        Ok(EvalRecord {
            true_cps,
            est_cps,
            t_len,
            d_h,
            n_hat_minus_n,
            elapsed_secs,
        })
    }
}

pub const BIN_LABELS: [&str; 7] = ["<=-3", "-2", "-1", "0", "1", "2", ">=3"];

/// Aggregated scores of a batch of replications.
#[derive(Debug, Clone, PartialEq)]
pub struct Tabulation {
    /// Frequency of `N̂ - N` in the bins `<=-3, -2, -1, 0, 1, 2, >=3`.
    pub bins: [usize; 7],
    /// Mean scaled Hausdorff distance; `None` when every record had an empty
    /// truth (the distance is vacuous without true change-points).
    pub mean_d_h: Option<f64>,
    pub mean_secs: f64,
    pub records: usize,
    /// Largest true change-point count seen; drives impossible-bin dashes.
    pub max_true: usize,
}

/// Bins `N̂ - N` over the records and averages distance and runtime.
pub fn tabulate(records: &[EvalRecord]) -> Tabulation {
    let mut bins = [0usize; 7];
    let mut d_sum = 0.0;
    let mut t_sum = 0.0;
    let mut max_true = 0usize;
    for r in records {
        let idx = match r.n_hat_minus_n {
            i64::MIN..=-3 => 0,
            -2 => 1,
            -1 => 2,
            0 => 3,
            1 => 4,
            2 => 5,
            _ => 6,
        };
        bins[idx] += 1;
        d_sum += r.d_h;
        t_sum += r.elapsed_secs;
        max_true = max_true.max(r.true_cps.len());
    }
    let n = records.len();
    let all_truth_empty = !records.is_empty() && records.iter().all(|r| r.true_cps.is_empty());
    Tabulation {
        bins,
        mean_d_h: if n == 0 || all_truth_empty {
            None
        } else {
            Some(d_sum / n as f64)
        },
        mean_secs: if n == 0 { 0.0 } else { t_sum / n as f64 },
        records: n,
        max_true,
    }
}

impl Tabulation {
    pub fn csv_header() -> &'static str {
        "method,model,components,le_m3,m2,m1,zero,p1,p2,ge_p3,d_h,time_s"
    }

    /// One benchmark-table row. Bins whose whole range is unreachable
    /// (below `-max_true`) print as `-`, as does the distance when the truth
    /// had no change-points.
    pub fn csv_row(&self, method: &str, model: &str, components: &str) -> String {
        // Upper edge of each bin; a bin is impossible when even its upper
        // edge is below -max_true.
        let upper = [-3i64, -2, -1, 0, 1, 2, 3];
        let mut cells = Vec::with_capacity(12);
        cells.push(method.to_string());
        cells.push(model.to_string());
        cells.push(components.to_string());
        for (i, &count) in self.bins.iter().enumerate() {
            if upper[i] < -(self.max_true as i64) {
                cells.push("-".to_string());
            } else {
                cells.push(count.to_string());
            }
        }
        match self.mean_d_h {
            Some(d) => cells.push(format!("{d:.3}")),
            None => cells.push("-".to_string()),
        }
        cells.push(format!("{:.3}", self.mean_secs));
        cells.join(",")
    }
}
