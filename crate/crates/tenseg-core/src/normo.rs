//! Rank selection for CP models by detecting redundant components.
//!
//! A fitted rank is "redundant" when two components correlate strongly in
//! every mode on average: `c(r1,r2)` is the mean over modes of the absolute
//! Pearson correlation between the paired factor columns. The selector sweeps
//! ranks upward and keeps the last rank before redundancy first appears.

use std::io::Write;

use crate::decompose::{cp_als, AlsConfig, CpModel};
use crate::error::{Result, TensegError};
use crate::seed;
use crate::tensor::Tensor;

/// Settings for [`normo_select`]. Each candidate rank R is fitted with a
/// seed derived from `(seed, R)`.
#[derive(Debug, Clone)]
pub struct NormoConfig {
    pub r_max: usize,
    /// Redundancy threshold on the mean absolute correlation.
    pub delta: f64,
    pub max_iters: usize,
    pub rel_tol: f64,
    pub restarts: usize,
    pub seed: u64,
}

impl NormoConfig {
    pub fn new(r_max: usize) -> Self {
        NormoConfig {
            r_max,
            delta: 0.7,
            max_iters: 100,
            rel_tol: 1e-6,
            restarts: 1,
            seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_delta(mut self, delta: f64) -> Self {
        self.delta = delta;
        self
    }
}

/// Absolute Pearson correlation; a constant column has no direction and is
/// treated as correlation 0.
fn abs_pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    let mut sxy = 0.0;
    for (&a, &b) in x.iter().zip(y) {
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
        sxy += (a - mx) * (b - my);
    }
    if sxx <= 0.0 || syy <= 0.0 {
        log::warn!("constant factor column in correlation; treating as 0");
        return 0.0;
    }
    (sxy / (sxx * syy).sqrt()).abs().min(1.0)
}

/// Mean over modes of the absolute Pearson correlation between factor
/// columns `a` and `b`; symmetric in `a`, `b` and always in `[0, 1]`.
pub fn component_correlation(model: &CpModel, a: usize, b: usize) -> Result<f64> {
    let r = model.rank();
    if a >= r || b >= r {
        return Err(TensegError::invalid_argument(format!(
            "component pair ({a},{b}) out of range for rank {r}"
        )));
    }
    if a == b {
        return Err(TensegError::invalid_argument(
            "component pair must be distinct",
        ));
    }
    let mut acc = 0.0;
    for f in &model.factors {
        let ca: Vec<f64> = f.column(a).iter().copied().collect();
        let cb: Vec<f64> = f.column(b).iter().copied().collect();
        acc += abs_pearson(&ca, &cb);
    }
    Ok(acc / model.order() as f64)
}

/// Largest pairwise [`component_correlation`]; 0 for rank-1 models.
pub fn max_component_correlation(model: &CpModel) -> Result<f64> {
    let mut max = 0.0f64;
    for a in 0..model.rank() {
        for b in (a + 1)..model.rank() {
            max = max.max(component_correlation(model, a, b)?);
        }
    }
    Ok(max)
}

/// One audit line of the rank sweep.
#[derive(Debug, Clone)]
pub struct NormoRow {
    pub rank: usize,
    pub max_correlation: f64,
    pub redundant: bool,
}

/// Outcome of the sweep: the selected rank plus one audit row per fitted rank.
#[derive(Debug, Clone)]
pub struct NormoReport {
    pub selected: usize,
    pub rows: Vec<NormoRow>,
}

impl NormoReport {
    /// Audit CSV: `rank,max_correlation,redundant` per fitted rank.
    pub fn write_csv(&self, w: &mut impl Write) -> Result<()> {
        writeln!(w, "rank,max_correlation,redundant")?;
        for row in &self.rows {
            writeln!(w, "{},{},{}", row.rank, row.max_correlation, row.redundant)?;
        }
        Ok(())
    }
}

/// Sweeps ranks `1..=r_max`, fitting a CP model per rank, and returns the
/// last rank before any fit contains a redundant pair (`c > delta`).
/// Returns 1 if rank 2 is already redundant and `r_max` if none ever is.
pub fn normo_select(t: &Tensor, cfg: &NormoConfig) -> Result<NormoReport> {
    if cfg.r_max == 0 {
        return Err(TensegError::invalid_argument("r_max must be at least 1"));
    }
    if !(cfg.delta > 0.0 && cfg.delta <= 1.0) {
        return Err(TensegError::invalid_argument(format!(
            "delta must lie in (0, 1], got {}",
            cfg.delta
        )));
    }
    let mut rows = Vec::new();
    for rank in 1..=cfg.r_max {
        let als = AlsConfig {
            rank,
            max_iters: cfg.max_iters,
            rel_tol: cfg.rel_tol,
            restarts: cfg.restarts,
            seed: seed::derive_seed(cfg.seed, &[rank as u64]),
        };
        let fit = cp_als(t, &als)?;
        let max_corr = max_component_correlation(&fit.model)?;
        let redundant = max_corr > cfg.delta;
        rows.push(NormoRow {
            rank,
            max_correlation: max_corr,
            redundant,
        });
        if redundant {
            // First redundancy: the previous rank is the selection.
            return Ok(NormoReport {
                selected: rank - 1,
                rows,
            });
        }
    }
    Ok(NormoReport {
        selected: cfg.r_max,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    /// Builds a 4-row factor pair with exact Pearson correlation `c`.
    fn correlated_pair(c: f64) -> DMatrix<f64> {
        // x and z are mean-zero, orthogonal, equal norm, so cor(x, y) = c.
        let x = [1.0, -1.0, 0.0, 0.0];
        let z = [0.0, 0.0, 1.0, -1.0];
        let mut m = DMatrix::zeros(4, 2);
        for i in 0..4 {
            m[(i, 0)] = x[i];
            m[(i, 1)] = c * x[i] + (1.0 - c * c).sqrt() * z[i];
        }
        m
    }

    #[test]
    fn component_correlation_averages_modes() {
        let model = CpModel {
            weights: vec![1.0, 1.0],
            factors: vec![
                correlated_pair(0.9),
                correlated_pair(-0.6),
                correlated_pair(0.3),
            ],
        };
        let c = component_correlation(&model, 0, 1).unwrap();
       assert!((c - 0.6).abs() < 1e-12, "got {c}");
        // Symmetry.
        let c2 = component_correlation(&model, 1, 0).unwrap();
        assert_eq!(c, c2);
    }

    #[test]
    fn four_mode_models_average_all_modes() {
        let model = CpModel {
            weights: vec![1.0, 1.0],
            factors: vec![
                correlated_pair(1.0),
                correlated_pair(1.0),
                correlated_pair(0.0),
                correlated_pair(0.0),
            ],
        };
        let c = component_correlation(&model, 0, 1).unwrap();
        assert!((c - 0.5).abs() < 1e-12);
    }

    #[test]
    fn constant_column_counts_as_zero() {
        let mut f = correlated_pair(0.9);
        for i in 0..4 {
            f[(i, 1)] = 2.5;
        }
        let model = CpModel {
            weights: vec![1.0, 1.0],
            factors: vec![f.clone(), f.clone(), f],
        };
        let c = component_correlation(&model, 0, 1).unwrap();
        assert_eq!(c, 0.0);
    }

    #[test]
    fn correlation_bounds_and_errors() {
        let model = CpModel {
            weights: vec![1.0, 1.0],
            factors: vec![correlated_pair(0.99); 3],
        };
        let c = component_correlation(&model, 0, 1).unwrap();
        assert!((0.0..=1.0).contains(&c));
        assert!(component_correlation(&model, 0, 0).is_err());
        assert!(component_correlation(&model, 0, 5).is_err());
    }

    #[test]
    fn selects_true_rank_of_synthetic_tensor() {
        use rand::prelude::*;
        let mut rng = StdRng::seed_from_u64(100);
        let shape = [8usize, 9, 10];
        let mut factors = Vec::new();
        for &n in &shape {
            factors.push(DMatrix::from_fn(n, 2, |_, _| rng.random::<f64>() - 0.5));
        }
        let model = CpModel {
            weights: vec![3.0, 2.0],
            factors,
        };
        let t = model.reconstruct().unwrap();
        let report = normo_select(&t, &NormoConfig::new(5).with_seed(1)).unwrap();
        assert_eq!(report.selected, 2, "rows: {:?}", report.rows);
        // Audit rows cover every fitted rank and stop at the first redundancy.
        assert_eq!(report.rows.len(), 3);
        assert!(!report.rows[0].redundant);
        assert!(!report.rows[1].redundant);
        assert!(report.rows[2].redundant);
    }

    #[test]
    fn redundant_true_components_cap_the_rank() {
        // Rank-3 tensor whose third component correlates ~0.95 with the first
        // in every mode. Any exact rank-3 fit recovers those factors up to
        // permutation and scale, so the sweep must flag rank 3 as redundant
        // and settle on 2 regardless of ALS initialization.
        let base = correlated_pair(0.95);
        let mut factors = Vec::new();
        for shift in 0..3 {
            let mut f = DMatrix::zeros(4, 3);
            for i in 0..4 {
                f[(i, 0)] = base[(i, 0)] + 0.05 * (i + shift) as f64;
                f[(i, 2)] = base[(i, 1)] + 0.05 * (i + shift) as f64;
                f[(i, 1)] = if i == shift { 2.0 } else { 0.3 };
            }
            factors.push(f);
        }
        let model = CpModel {
            weights: vec![3.0, 2.5, 2.0],
            factors,
        };
        let t = model.reconstruct().unwrap();
        for seed in [0u64, 1, 2] {
            let mut cfg = NormoConfig::new(5).with_seed(seed);
            cfg.restarts = 2;
            let report = normo_select(&t, &cfg).unwrap();
            assert_eq!(report.selected, 2, "seed {seed}: {:?}", report.rows);
        }
    }

    #[test]
    fn rank_one_sweep_never_redundant() {
        let t = crate::tensor::rank1_outer(&[&[1.0, 2.0], &[3.0, 4.0], &[5.0, 6.0]]).unwrap();
        let report = normo_select(&t, &NormoConfig::new(1).with_seed(3)).unwrap();
        assert_eq!(report.selected, 1);
        assert_eq!(report.rows.len(), 1);
        assert_eq!(report.rows[0].max_correlation, 0.0);
    }

    #[test]
    fn config_validation() {
        let t = crate::tensor::rank1_outer(&[&[1.0, 2.0], &[3.0, 4.0]]).unwrap();
        assert!(normo_select(&t, &NormoConfig::new(0)).is_err());
        assert!(normo_select(&t, &NormoConfig::new(2).with_delta(0.0)).is_err());
        assert!(normo_select(&t, &NormoConfig::new(2).with_delta(1.5)).is_err());
    }

    #[test]
    fn csv_report_shape() {
        let report = NormoReport {
            selected: 2,
            rows: vec![
                NormoRow { rank: 1, max_correlation: 0.0, redundant: false },
                NormoRow { rank: 2, max_correlation: 0.4, redundant: false },
                NormoRow { rank: 3, max_correlation: 0.9, redundant: true },
            ],
        };
        let mut buf = Vec::new();
        report.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 4);
        assert_eq!(lines[0], "rank,max_correlation,redundant");
        assert_eq!(lines[3], "3,0.9,true");
    }
}
