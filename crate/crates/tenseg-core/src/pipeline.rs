//! End-to-end pipeline: decompose a tensor time series along its last mode,
//! run change-point detection on the factor series, and drive Monte Carlo
//! benchmark sweeps over simulated scenarios.

use std::time::Instant;

use rayon::prelude::*;

use crate::ccid::{self, CcidConfig, DetectionResult};
use crate::decompose::{cp_als, hosvd, AlsConfig};
use crate::error::{Result, TensegError};
use crate::metrics::EvalRecord;
use crate::normo::{normo_select, NormoConfig, NormoReport};
use crate::seed::derive_seed;
use crate::sim::{generate, ScenarioSpec};
use crate::tensor::Tensor;

/// Seed stream for ALS initialisation within one replication; the simulator
/// reserves streams 1 and 2. Public so external decompose-then-detect flows
/// can reproduce [`detect_tensor`] exactly.
pub const ALS_STREAM: u64 = 3;
/// Seed stream for the NORMO rank sweep within one replication.
pub const NORMO_STREAM: u64 = 4;

/// Decomposition backing the factor time series.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecompKind {
    Cp,
    Hosvd,
}

/// Number of components: fixed, or chosen by the NORMO sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RankChoice {
    Fixed(usize),
    Auto { r_max: usize, delta: f64 },
}

/// Settings for [`detect_tensor`].
#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub decomp: DecompKind,
    pub rank: RankChoice,
    /// ALS template; its rank and seed are overridden per run.
    pub als: AlsConfig,
    pub ccid: CcidConfig,
}

impl PipelineConfig {
    /// Operating configuration: the detector runs at the minimum segment
    /// length the threshold constants were calibrated for, and ALS runs the
    /// benchmark budget (25 iterations, 1e-5 tolerance, best of 2 restarts)
    /// used during that calibration.
    pub fn new(decomp: DecompKind, rank: RankChoice) -> Self {
        let mut ccid = CcidConfig::default();
        ccid.min_segment = Some(ccid::PIPELINE_MIN_SEGMENT);
        PipelineConfig {
            decomp,
            rank,
            als: AlsConfig::new(1).with_iters(25, 1e-5).with_restarts(2),
            ccid,
        }
    }
}

/// One tensor's detection outcome.
#[derive(Debug, Clone)]
pub struct TensorDetection {
    pub rank_used: usize,
    /// Final relative reconstruction error (CP decompositions only).
    pub rel_error: Option<f64>,
    /// Rank-sweep audit rows when the rank was chosen automatically.
    pub normo: Option<NormoReport>,
    pub detection: DetectionResult,
}

/// Decomposes `x` along its last mode and detects change-points in the factor
/// time series. `seed` drives ALS initialisation and, under automatic rank
/// choice, the NORMO sweep. The sweep always fits CP models; a selected rank
/// may then back an HOSVD run.
pub fn detect_tensor(x: &Tensor, cfg: &PipelineConfig, seed: u64) -> Result<TensorDetection> {
    if x.order() < 3 {
        return Err(TensegError::invalid_argument(format!(
            "pipeline input must have at least 3 modes, got {}",
            x.order()
        )));
    }
    let time_mode = x.order() - 1;
    let (rank, normo) = match cfg.rank {
        RankChoice::Fixed(r) => {
            if r == 0 {
                return Err(TensegError::invalid_argument("rank must be positive"));
            }
            (r, None)
        }
        RankChoice::Auto { r_max, delta } => {
            let mut ncfg = NormoConfig::new(r_max)
                .with_delta(delta)
                .with_seed(derive_seed(seed, &[NORMO_STREAM]));
            ncfg.max_iters = cfg.als.max_iters;
            ncfg.rel_tol = cfg.als.rel_tol;
            ncfg.restarts = cfg.als.restarts;
            let report = normo_select(x, &ncfg)?;
            (report.selected, Some(report))
        }
    };
    let (series, rel_error) = match cfg.decomp {
        DecompKind::Cp => {
            let mut als = cfg.als.clone();
            als.rank = rank;
            als.seed = derive_seed(seed, &[ALS_STREAM]);
            let fit = cp_als(x, &als)?;
            (fit.model.time_series(time_mode)?, Some(fit.rel_error()))
        }
        DecompKind::Hosvd => {
            // "rank C" for HOSVD means a uniform multilinear rank, clamped
            // mode-wise so oversized requests still run.
            let ranks: Vec<usize> = x.shape().iter().map(|&n| rank.min(n)).collect();
            let model = hosvd(x, &ranks)?;
            (model.time_series(time_mode)?, None)
        }
    };
    let detection = ccid::detect(&series, &cfg.ccid)?;
    Ok(TensorDetection {
        rank_used: rank,
        rel_error,
        normo,
        detection,
    })
}

/// Settings for [`run_bench`].
#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub scenario: ScenarioSpec,
    pub reps: usize,
    /// Master seed; replication seeds derive from (seed, rep).
    pub seed: u64,
    pub pipeline: PipelineConfig,
    /// Worker threads; `None` uses the global rayon pool.
    pub workers: Option<usize>,
}

/// Runs `reps` generate → decompose → detect replications and returns one
/// record per replication, in replication order. Every replication depends
/// only on `(seed, rep)`, so apart from timings the output is identical for
/// any worker count.
pub fn run_bench(cfg: &BenchConfig) -> Result<Vec<EvalRecord>> {
    if cfg.reps == 0 {
        return Err(TensegError::invalid_argument(
            "bench needs at least one replication",
        ));
    }
    let body = || {
        (0..cfg.reps)
            .into_par_iter()
            .map(|rep| run_rep(cfg, rep))
            .collect::<Result<Vec<_>>>()
    };
    match cfg.workers {
        None => body(),
        Some(0) => Err(TensegError::invalid_argument(
            "worker count must be positive",
        )),
        Some(w) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(w)
                .build()
                .map_err(|e| TensegError::invalid_argument(format!("worker pool: {e}")))?;
            pool.install(body)
        }
    }
}

/// One replication: the recorded time covers decomposition and detection but
/// not data generation, matching how method runtimes are usually reported.
fn run_rep(cfg: &BenchConfig, rep: usize) -> Result<EvalRecord> {
    let rep_seed = derive_seed(cfg.seed, &[rep as u64]);
    let (tensor, truth) = generate(&cfg.scenario, rep_seed)?;
    let start = Instant::now();
    let det = detect_tensor(&tensor, &cfg.pipeline, rep_seed)?;
    let elapsed = start.elapsed().as_secs_f64();
    EvalRecord::new(
        truth,
        det.detection.change_points,
        cfg.scenario.t_len,
        elapsed,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{NoiseKind, SegmentNetwork};

    /// Small two-segment scenario with a strong correlation contrast.
    fn small_cp1() -> ScenarioSpec {
        ScenarioSpec {
            t_len: 160,
            change_points: vec![80],
            spatial: vec![7, 7, 7],
            segments: vec![
                SegmentNetwork::Ar1 { rho: 0.15 },
                SegmentNetwork::Ar1 { rho: 0.85 },
            ],
            noise: NoiseKind::Iid,
            psi_time: None,
        }
    }

    fn small_cp0() -> ScenarioSpec {
        ScenarioSpec {
            t_len: 80,
            change_points: Vec::new(),
            spatial: vec![5, 5, 5],
            segments: vec![SegmentNetwork::Ar1 { rho: 0.2 }],
            noise: NoiseKind::Iid,
            psi_time: None,
        }
    }

    fn cp_pipeline(rank: usize) -> PipelineConfig {
        let mut cfg = PipelineConfig::new(DecompKind::Cp, RankChoice::Fixed(rank));
        cfg.als = cfg.als.with_iters(25, 1e-5);
        cfg
    }

    #[test]
    fn cp_pipeline_recovers_the_planted_change() {
        let (x, truth) = generate(&small_cp1(), 5).unwrap();
        let mut cfg = cp_pipeline(10);
        cfg.als = cfg.als.with_restarts(2);
        let out = detect_tensor(&x, &cfg, 5).unwrap();
        assert_eq!(truth, vec![80]);
        assert_eq!(out.rank_used, 10);
        assert!(out.rel_error.unwrap() < 1.0);
        let cps = &out.detection.change_points;
        assert_eq!(cps.len(), 1, "got {cps:?}");
        assert!((cps[0] as i64 - 80).unsigned_abs() <= 8, "got {cps:?}");
    }

    #[test]
    fn hosvd_pipeline_recovers_the_planted_change() {
        let (x, _) = generate(&small_cp1(), 5).unwrap();
        let mut cfg = PipelineConfig::new(DecompKind::Hosvd, RankChoice::Fixed(5));
        cfg.als = cfg.als.with_iters(25, 1e-5);
        let out = detect_tensor(&x, &cfg, 5).unwrap();
        assert!(out.rel_error.is_none());
        let cps = &out.detection.change_points;
        assert_eq!(cps.len(), 1, "got {cps:?}");
        assert!((cps[0] as i64 - 80).unsigned_abs() <= 8, "got {cps:?}");
    }

    #[test]
    fn auto_rank_reports_the_sweep_and_still_detects() {
        let (x, _) = generate(&small_cp1(), 5).unwrap();
        let mut cfg = cp_pipeline(1);
        cfg.als = cfg.als.with_restarts(2);
        cfg.rank = RankChoice::Auto {
            r_max: 10,
            delta: 0.7,
        };
        let out = detect_tensor(&x, &cfg, 5).unwrap();
        let report = out.normo.expect("auto rank must attach the sweep report");
        assert_eq!(report.selected, out.rank_used);
        assert!((1..=10).contains(&out.rank_used));
        let cps = &out.detection.change_points;
        assert_eq!(cps.len(), 1, "got {cps:?}");
        assert!((cps[0] as i64 - 80).unsigned_abs() <= 8, "got {cps:?}");
    }

    #[test]
    fn bench_output_is_identical_across_worker_counts() {
        let mut cfg = BenchConfig {
            scenario: small_cp0(),
            reps: 3,
            seed: 42,
            pipeline: cp_pipeline(2),
            workers: Some(1),
        };
        let serial = run_bench(&cfg).unwrap();
        cfg.workers = Some(2);
        let parallel = run_bench(&cfg).unwrap();
        assert_eq!(serial.len(), 3);
        for (a, b) in serial.iter().zip(&parallel) {
            assert_eq!(a.true_cps, b.true_cps);
            assert_eq!(a.est_cps, b.est_cps);
            assert_eq!(a.t_len, b.t_len);
            assert_eq!(a.d_h, b.d_h);
            assert_eq!(a.n_hat_minus_n, b.n_hat_minus_n);
        }
    }

    #[test]
    fn bench_rejects_degenerate_settings() {
        let mut cfg = BenchConfig {
            scenario: small_cp0(),
            reps: 0,
            seed: 1,
            pipeline: cp_pipeline(2),
            workers: None,
        };
        assert!(run_bench(&cfg).is_err());
        cfg.reps = 1;
        cfg.workers = Some(0);
        assert!(run_bench(&cfg).is_err());
        cfg.workers = None;
        cfg.pipeline.rank = RankChoice::Fixed(0);
        assert!(run_bench(&cfg).is_err());
    }

    #[test]
    fn pipeline_rejects_low_order_input() {
        let x = Tensor::zeros(vec![4, 50]).unwrap();
        let err = detect_tensor(&x, &cp_pipeline(2), 0);
        assert!(err.is_err());
    }
}
