//! Subcommand bodies: flag/file resolution into core configs, then thin
//! orchestration around `tenseg_core`.

use std::io::Write as _;
use std::path::{Path, PathBuf};

use log::{info, warn};
use nalgebra::DMatrix;

use tenseg_core::ccid::{self, CcidConfig, DetectionResult, Norm, StopRule};
use tenseg_core::decompose::{cp_als, hosvd, AlsConfig};
use tenseg_core::io;
use tenseg_core::metrics::{tabulate, EvalRecord, Tabulation};
use tenseg_core::normo::{normo_select, NormoConfig, NormoReport};
use tenseg_core::pipeline::{
    detect_tensor, run_bench, BenchConfig, DecompKind, PipelineConfig, RankChoice, ALS_STREAM,
    NORMO_STREAM,
};
use tenseg_core::seed::derive_seed;
use tenseg_core::sim::{generate, Magnitude, NoiseKind, Preset, ScenarioSpec, Structure};
use tenseg_core::tensor::Tensor;

use crate::config::FileConfig;
use crate::{
    BenchArgs, Cli, CliError, Cmd, DecompArg, DecompArgs, DecomposeArgs, DetectArgs,
    DetectCmdArgs, EvalArgs, MagnitudeArg, NoiseArg, NormArg, NormoArgs, ScenarioArg,
    ScenarioArgs, SimulateArgs, StopArg, StructureArg,
};

pub fn run(cli: Cli) -> Result<(), CliError> {
    let file = match &cli.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };
    match cli.cmd {
        Cmd::Simulate(args) => cmd_simulate(args, &file),
        Cmd::Decompose(args) => cmd_decompose(args, &file),
        Cmd::Normo(args) => cmd_normo(args, &file),
        Cmd::Detect(args) => cmd_detect(args, &file),
        Cmd::Bench(args) => cmd_bench(args, &file),
        Cmd::Eval(args) => cmd_eval(args, &file),
    }
}

fn missing(flag: &str) -> CliError {
    CliError::Config(format!("missing required option --{flag}"))
}

/// Attaches the offending path to bare I/O errors from the core readers.
fn with_path<T>(r: tenseg_core::error::Result<T>, path: &Path) -> Result<T, CliError> {
    r.map_err(|e| match e {
        tenseg_core::error::TensegError::Io(ioe) => {
            CliError::Io(format!("{}: {ioe}", path.display()))
        }
        other => CliError::Core(other),
    })
}

fn out_dir(out: Option<PathBuf>) -> Result<PathBuf, CliError> {
    let dir = out.unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&dir)
        .map_err(|e| CliError::Io(format!("creating {}: {e}", dir.display())))?;
    Ok(dir)
}

/// A resolved scenario plus the label benchmarks print for it.
struct Scenario {
    spec: ScenarioSpec,
    label: String,
}

fn resolve_scenario(args: ScenarioArgs, file: &FileConfig) -> Result<Scenario, CliError> {
    let scenario = file
        .resolve(args.scenario, "scenario")?
        .ok_or_else(|| missing("scenario"))?;
    let structure = file
        .resolve(args.structure, "structure")?
        .unwrap_or(StructureArg::Ar);
    let magnitude = file
        .resolve(args.magnitude, "magnitude")?
        .unwrap_or(MagnitudeArg::Standard);
    let noise = file.resolve(args.noise, "noise")?.unwrap_or(NoiseArg::Iid);
    let alpha = file.resolve(args.alpha, "alpha")?.unwrap_or(0.7);
    if noise == NoiseArg::Iid && args.alpha.is_some() {
        warn!("--alpha has no effect with iid noise");
    }

    let preset = match scenario {
        ScenarioArg::Cp0 => Preset::Cp0,
        ScenarioArg::Cp1 => Preset::Cp1,
        ScenarioArg::Cp4 => Preset::Cp4,
        ScenarioArg::Cp10 => Preset::Cp10,
    };
    let structure_core = match structure {
        StructureArg::Ar => Structure::Ar1,
        StructureArg::Sb => Structure::StarBlock,
        StructureArg::Er => Structure::Er,
    };
    let magnitude_core = match magnitude {
        MagnitudeArg::Standard => Magnitude::Standard,
        MagnitudeArg::Small => Magnitude::Small,
    };
    let mut spec = ScenarioSpec::preset(structure_core, preset, magnitude_core)?;
    if noise == NoiseArg::Ar1 {
        spec = spec.with_noise(NoiseKind::Ar1 { alpha });
    }

    let mut label = format!(
        "{}/{}",
        match scenario {
            ScenarioArg::Cp0 => "CP0",
            ScenarioArg::Cp1 => "CP1",
            ScenarioArg::Cp4 => "CP4",
            ScenarioArg::Cp10 => "CP10",
        },
        match structure {
            StructureArg::Ar => "AR",
            StructureArg::Sb => "SB",
            StructureArg::Er => "ER",
        }
    );
    if magnitude == MagnitudeArg::Small {
        label.push_str("/small");
    }
    if noise == NoiseArg::Ar1 {
        label.push_str(&format!("/ar1({alpha})"));
    }
    Ok(Scenario { spec, label })
}

/// Decomposition choice plus ALS overrides (`None` keeps the caller's base).
struct Decomp {
    kind: DecompKind,
    rank: RankChoice,
    iters: Option<usize>,
    tol: Option<f64>,
    restarts: Option<usize>,
}

impl Decomp {
    fn apply_als(&self, als: &mut AlsConfig) {
        if let Some(v) = self.iters {
            als.max_iters = v;
        }
        if let Some(v) = self.tol {
            als.rel_tol = v;
        }
        if let Some(v) = self.restarts {
            als.restarts = v;
        }
    }

    fn components_label(&self) -> String {
        match self.rank {
            RankChoice::Fixed(r) => r.to_string(),
            RankChoice::Auto { r_max, delta } => format!("auto(rmax={r_max},delta={delta})"),
        }
    }
}

fn resolve_decomp(args: DecompArgs, file: &FileConfig) -> Result<Decomp, CliError> {
    let kind = match file.resolve(args.decomp, "decomp")?.unwrap_or(DecompArg::Cp) {
        DecompArg::Cp => DecompKind::Cp,
        DecompArg::Hosvd => DecompKind::Hosvd,
    };
    let auto = file.resolve_flag(args.auto_rank, "auto_rank")?;
    let fixed = file.resolve(args.rank, "rank")?;
    let rank = if auto {
        if fixed.is_some() {
            return Err(CliError::Config(
                "--rank conflicts with --auto-rank".to_string(),
            ));
        }
        let r_max = file.resolve(args.rmax, "rmax")?.ok_or_else(|| {
            CliError::Config("--auto-rank requires --rmax".to_string())
        })?;
        let delta = file.resolve(args.delta, "delta")?.unwrap_or(0.7);
        RankChoice::Auto { r_max, delta }
    } else {
        RankChoice::Fixed(fixed.ok_or_else(|| missing("rank"))?)
    };
    Ok(Decomp {
        kind,
        rank,
        iters: file.resolve(args.iters, "iters")?,
        tol: file.resolve(args.tol, "tol")?,
        restarts: file.resolve(args.restarts, "restarts")?,
    })
}

/// Detector overrides plus the series-reduction wrappers.
struct Detector {
    norm: Option<Norm>,
    stop: Option<StopRule>,
    constant: Option<f64>,
    lambda: Option<usize>,
    min_segment: Option<usize>,
    penalty_alpha: Option<f64>,
    subsample: Option<usize>,
    quorum: Option<usize>,
    preaverage: Option<usize>,
}

fn resolve_detector(args: DetectArgs, file: &FileConfig) -> Result<Detector, CliError> {
    let det = Detector {
        norm: file.resolve(args.norm, "norm")?.map(|n| match n {
            NormArg::L2 => Norm::L2,
            NormArg::Linf => Norm::LInf,
        }),
        stop: file.resolve(args.stop, "stop")?.map(|s| match s {
            StopArg::Threshold => StopRule::Threshold,
            StopArg::Ic => StopRule::ModelSelection,
        }),
        constant: file.resolve(args.constant, "const")?,
        lambda: file.resolve(args.lambda_t, "lambda_t")?,
        min_segment: file.resolve(args.min_segment, "min_segment")?,
        penalty_alpha: file.resolve(args.penalty_alpha, "penalty_alpha")?,
        subsample: file.resolve(args.subsample, "subsample")?,
        quorum: file.resolve(args.quorum, "quorum")?,
        preaverage: file.resolve(args.preaverage, "preaverage")?,
    };
    if det.subsample.is_some() && det.preaverage.is_some() {
        return Err(CliError::Config(
            "--subsample and --preaverage are mutually exclusive".to_string(),
        ));
    }
    if det.quorum.is_some() && det.subsample.is_none() {
        return Err(CliError::Config(
            "--quorum only applies with --subsample".to_string(),
        ));
    }
    Ok(det)
}

impl Detector {
    fn apply_ccid(&self, ccid: &mut CcidConfig) {
        if let Some(v) = self.norm {
            ccid.norm = v;
        }
        if let Some(v) = self.stop {
            ccid.stop = v;
        }
        if self.constant.is_some() {
            ccid.constant = self.constant;
        }
        if let Some(v) = self.lambda {
            ccid.lambda = v;
        }
        if self.min_segment.is_some() {
            ccid.min_segment = self.min_segment;
        }
        if let Some(v) = self.penalty_alpha {
            ccid.penalty_alpha = v;
        }
    }

    /// Runs the configured detect variant on a prepared p x T series.
    fn detect_series(&self, series: &DMatrix<f64>, ccid: &CcidConfig) -> Result<DetectionResult, CliError> {
        match (self.subsample, self.preaverage) {
            (Some(s), _) => {
                // Paper-style majority vote unless a quorum was given.
                let q = self.quorum.unwrap_or(s / 2 + 1);
                Ok(ccid::subsample_detect(series, ccid, s, q)?)
            }
            (None, Some(w)) => Ok(ccid::preaverage_detect(series, ccid, w)?),
            (None, None) => Ok(ccid::detect(series, ccid)?),
        }
    }

    fn wraps_series(&self) -> bool {
        self.subsample.is_some() || self.preaverage.is_some()
    }
}

fn cmd_simulate(args: SimulateArgs, file: &FileConfig) -> Result<(), CliError> {
    let scenario = resolve_scenario(args.scenario, file)?;
    let seed = file.resolve(args.seed, "seed")?.unwrap_or(0);
    let dir = out_dir(file.resolve(args.out, "out")?)?;
    let (tensor, truth) = generate(&scenario.spec, seed)?;
    let tensor_path = dir.join("tensor.tsr1");
    let truth_path = dir.join("truth.csv");
    io::write_tensor(&tensor_path, &tensor)?;
    io::write_change_points(&truth_path, &truth)?;
    info!(
        "{}: wrote {} (shape {:?}) and {} ({} change-points)",
        scenario.label,
        tensor_path.display(),
        tensor.shape(),
        truth_path.display(),
        truth.len()
    );
    Ok(())
}

/// Fits the configured decomposition and returns the factor time series with
/// its provenance. Seeds follow the pipeline's per-stage streams so a
/// decompose-then-detect flow matches `detect` on the same tensor.
fn factor_series(
    x: &Tensor,
    decomp: &Decomp,
    base_als: AlsConfig,
    seed: u64,
) -> Result<(DMatrix<f64>, usize, Option<f64>, Option<NormoReport>), CliError> {
    let time_mode = x.order() - 1;
    let mut als = base_als;
    decomp.apply_als(&mut als);
    let (rank, report) = match decomp.rank {
        RankChoice::Fixed(r) => (r, None),
        RankChoice::Auto { r_max, delta } => {
            let mut ncfg = NormoConfig::new(r_max)
                .with_delta(delta)
                .with_seed(derive_seed(seed, &[NORMO_STREAM]));
            ncfg.max_iters = als.max_iters;
            ncfg.rel_tol = als.rel_tol;
            ncfg.restarts = als.restarts;
            let report = normo_select(x, &ncfg)?;
            (report.selected, Some(report))
        }
    };
    match decomp.kind {
        DecompKind::Cp => {
            als.rank = rank;
            als.seed = derive_seed(seed, &[ALS_STREAM]);
            let fit = cp_als(x, &als)?;
            let series = fit.model.time_series(time_mode)?;
            Ok((series, rank, Some(fit.rel_error()), report))
        }
        DecompKind::Hosvd => {
            let ranks: Vec<usize> = x.shape().iter().map(|&n| rank.min(n)).collect();
            let model = hosvd(x, &ranks)?;
            Ok((model.time_series(time_mode)?, rank, None, report))
        }
    }
}

fn cmd_decompose(args: DecomposeArgs, file: &FileConfig) -> Result<(), CliError> {
    let input = file
        .resolve(args.input, "input")?
        .ok_or_else(|| missing("input"))?;
    let decomp = resolve_decomp(args.decomp, file)?;
    let seed = file.resolve(args.seed, "seed")?.unwrap_or(0);
    let dir = out_dir(file.resolve(args.out, "out")?)?;
    let x = with_path(io::read_tensor(&input), &input)?;

    // Standalone fits default to the full ALS budget rather than the
    // pipeline's benchmark budget.
    let time_mode = x.order() - 1;
    let mut als = AlsConfig::new(1);
    decomp.apply_als(&mut als);
    let (rank, report) = match decomp.rank {
        RankChoice::Fixed(r) => (r, None),
        RankChoice::Auto { r_max, delta } => {
            let mut ncfg = NormoConfig::new(r_max)
                .with_delta(delta)
                .with_seed(derive_seed(seed, &[NORMO_STREAM]));
            ncfg.max_iters = als.max_iters;
            ncfg.rel_tol = als.rel_tol;
            ncfg.restarts = als.restarts;
            let report = normo_select(&x, &ncfg)?;
            (report.selected, Some(report))
        }
    };
    if let Some(report) = &report {
        let mut buf = Vec::new();
        report.write_csv(&mut buf)?;
        std::fs::write(dir.join("normo.csv"), buf)
            .map_err(|e| CliError::Io(format!("normo.csv: {e}")))?;
    }
    let rel_error = match decomp.kind {
        DecompKind::Cp => {
            als.rank = rank;
            als.seed = derive_seed(seed, &[ALS_STREAM]);
            let fit = cp_als(&x, &als)?;
            io::save_cp_model(&dir, &fit.model)?;
            io::write_series_csv(&dir.join("series.csv"), &fit.model.time_series(time_mode)?)?;
            Some(fit.rel_error())
        }
        DecompKind::Hosvd => {
            let ranks: Vec<usize> = x.shape().iter().map(|&n| rank.min(n)).collect();
            let model = hosvd(&x, &ranks)?;
            io::save_hosvd_model(&dir, &model)?;
            io::write_series_csv(&dir.join("series.csv"), &model.time_series(time_mode)?)?;
            None
        }
    };
    info!("model and series.csv written to {}", dir.display());
    println!("rank,rel_error");
    match rel_error {
        Some(e) => println!("{rank},{e:.6e}"),
        None => println!("{rank},-"),
    }
    Ok(())
}

fn cmd_normo(args: NormoArgs, file: &FileConfig) -> Result<(), CliError> {
    let input = file
        .resolve(args.input, "input")?
        .ok_or_else(|| missing("input"))?;
    let r_max = file.resolve(args.rmax, "rmax")?.ok_or_else(|| missing("rmax"))?;
    let delta = file.resolve(args.delta, "delta")?.unwrap_or(0.7);
    let seed = file.resolve(args.seed, "seed")?.unwrap_or(0);
    let x = with_path(io::read_tensor(&input), &input)?;
    let mut ncfg = NormoConfig::new(r_max)
        .with_delta(delta)
        .with_seed(derive_seed(seed, &[NORMO_STREAM]));
    if let Some(v) = file.resolve(args.iters, "iters")? {
        ncfg.max_iters = v;
    }
    if let Some(v) = file.resolve(args.tol, "tol")? {
        ncfg.rel_tol = v;
    }
    if let Some(v) = file.resolve(args.restarts, "restarts")? {
        ncfg.restarts = v;
    }
    let report = normo_select(&x, &ncfg)?;
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    report.write_csv(&mut lock)?;
    writeln!(lock, "selected,{}", report.selected)
        .map_err(|e| CliError::Io(format!("stdout: {e}")))?;
    Ok(())
}

/// What `detect` writes as summary.json.
#[derive(serde::Serialize)]
struct DetectSummary {
    input: String,
    rank_used: Option<usize>,
    rel_error: Option<f64>,
    threshold: f64,
    change_points: Vec<usize>,
    solution_path: Vec<usize>,
    scores: Vec<f64>,
    ic_curve: Vec<f64>,
    elapsed_secs: f64,
}

fn is_csv(path: &Path) -> bool {
    matches!(
        path.extension().and_then(|e| e.to_str()),
        Some(e) if e.eq_ignore_ascii_case("csv")
    )
}

fn cmd_detect(args: DetectCmdArgs, file: &FileConfig) -> Result<(), CliError> {
    let input = file
        .resolve(args.input, "input")?
        .ok_or_else(|| missing("input"))?;
    let det = resolve_detector(args.det, file)?;
    let seed = file.resolve(args.seed, "seed")?.unwrap_or(0);
    let dir = out_dir(file.resolve(args.out, "out")?)?;

    let (result, rank_used, rel_error) = if is_csv(&input) {
        // p-variate passthrough: the CSV rows are already the series.
        let series = with_path(io::read_series_csv(&input), &input)?;
        let mut ccid = CcidConfig::default();
        det.apply_ccid(&mut ccid);
        (det.detect_series(&series, &ccid)?, None, None)
    } else {
        let decomp = resolve_decomp(args.decomp, file)?;
        let x = with_path(io::read_tensor(&input), &input)?;
        let mut pipeline = PipelineConfig::new(decomp.kind, decomp.rank);
        decomp.apply_als(&mut pipeline.als);
        det.apply_ccid(&mut pipeline.ccid);
        if det.wraps_series() {
            let (series, rank, rel, _) = factor_series(&x, &decomp, pipeline.als.clone(), seed)?;
            (det.detect_series(&series, &pipeline.ccid)?, Some(rank), rel)
        } else {
            let out = detect_tensor(&x, &pipeline, seed)?;
            (out.detection, Some(out.rank_used), out.rel_error)
        }
    };

    io::write_change_points(&dir.join("change_points.csv"), &result.change_points)?;
    let summary = DetectSummary {
        input: input.display().to_string(),
        rank_used,
        rel_error,
        threshold: result.threshold,
        change_points: result.change_points.clone(),
        solution_path: result.solution_path.clone(),
        scores: result.scores.clone(),
        ic_curve: result.ic_curve.clone(),
        elapsed_secs: result.elapsed.as_secs_f64(),
    };
    io::write_json(&dir.join("summary.json"), &summary)?;
    info!(
        "{} change-point(s); results in {}",
        result.change_points.len(),
        dir.display()
    );
    println!("change_point");
    for c in &result.change_points {
        println!("{c}");
    }
    Ok(())
}

fn write_records_csv(path: &Path, records: &[EvalRecord]) -> Result<(), CliError> {
    let join =
        |v: &[usize]| v.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(";");
    let mut text =
        String::from("rep,t_len,n_true,n_est,n_hat_minus_n,d_h,elapsed_s,true_cps,est_cps\n");
    for (i, r) in records.iter().enumerate() {
        text.push_str(&format!(
            "{i},{},{},{},{},{:.6},{:.6},{},{}\n",
            r.t_len,
            r.true_cps.len(),
            r.est_cps.len(),
            r.n_hat_minus_n,
            r.d_h,
            r.elapsed_secs,
            join(&r.true_cps),
            join(&r.est_cps),
        ));
    }
    std::fs::write(path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn read_records_csv(path: &Path) -> Result<Vec<EvalRecord>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let parse_cps = |field: &str, lineno: usize| -> Result<Vec<usize>, CliError> {
        field
            .split(';')
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse::<usize>().map_err(|e| {
                    CliError::Core(tenseg_core::error::TensegError::parse(format!(
                        "{} line {lineno}: {e}",
                        path.display()
                    )))
                })
            })
            .collect()
    };
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 9 {
            return Err(CliError::Core(tenseg_core::error::TensegError::parse(
                format!("{} line {}: expected 9 fields", path.display(), lineno + 1),
            )));
        }
        let bad = |e: std::num::ParseIntError| {
            CliError::Core(tenseg_core::error::TensegError::parse(format!(
                "{} line {}: {e}",
                path.display(),
                lineno + 1
            )))
        };
        let t_len = fields[1].parse::<usize>().map_err(bad)?;
        let elapsed = fields[6].parse::<f64>().map_err(|e| {
            CliError::Core(tenseg_core::error::TensegError::parse(format!(
                "{} line {}: {e}",
                path.display(),
                lineno + 1
            )))
        })?;
        let truth = parse_cps(fields[7], lineno + 1)?;
        let est = parse_cps(fields[8], lineno + 1)?;
        out.push(EvalRecord::new(truth, est, t_len, elapsed)?);
    }
    Ok(out)
}

fn cmd_bench(args: BenchArgs, file: &FileConfig) -> Result<(), CliError> {
    let scenario = resolve_scenario(args.scenario, file)?;
    let decomp = resolve_decomp(args.decomp, file)?;
    let det = resolve_detector(args.det, file)?;
    if det.wraps_series() {
        return Err(CliError::Config(
            "--subsample/--preaverage are not supported under bench".to_string(),
        ));
    }
    let reps = file.resolve(args.reps, "reps")?.unwrap_or(100);
    let seed = file.resolve(args.seed, "seed")?.unwrap_or(0);
    let workers = file.resolve(args.workers, "workers")?;

    let mut pipeline = PipelineConfig::new(decomp.kind, decomp.rank);
    decomp.apply_als(&mut pipeline.als);
    det.apply_ccid(&mut pipeline.ccid);
    let method = match decomp.kind {
        DecompKind::Cp => "tenseg",
        DecompKind::Hosvd => "tenseg-hosvd",
    };
    let components = decomp.components_label();
    let bench = BenchConfig {
        scenario: scenario.spec,
        reps,
        seed,
        pipeline,
        workers,
    };
    let records = run_bench(&bench)?;
    if let Some(path) = file.resolve(args.records, "records")? {
        write_records_csv(&path, &records)?;
        info!("per-replication records written to {}", path.display());
    }
    let tab = tabulate(&records);
    let table = format!(
        "{}\n{}\n",
        Tabulation::csv_header(),
        tab.csv_row(method, &scenario.label, &components)
    );
    if let Some(path) = file.resolve(args.out, "out")? {
        std::fs::write(&path, &table)
            .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    }
    print!("{table}");
    Ok(())
}

fn cmd_eval(args: EvalArgs, file: &FileConfig) -> Result<(), CliError> {
    let method = args.method.unwrap_or_else(|| "tenseg".to_string());
    let model = args.model.unwrap_or_else(|| "-".to_string());
    let components = args.components.unwrap_or_else(|| "-".to_string());
    if let Some(path) = file.resolve(args.records, "records")? {
        let records = read_records_csv(&path)?;
        let tab = tabulate(&records);
        println!("{}", Tabulation::csv_header());
        println!("{}", tab.csv_row(&method, &model, &components));
        return Ok(());
    }
    let (truth_path, est_path, t_len) = match (args.truth, args.est, args.t_len) {
        (Some(t), Some(e), Some(len)) => (t, e, len),
        _ => {
            return Err(CliError::Config(
                "eval needs either --records or --truth, --est, and --t-len".to_string(),
            ))
        }
    };
    let truth = with_path(io::read_change_points(&truth_path), &truth_path)?;
    let est = with_path(io::read_change_points(&est_path), &est_path)?;
    let record = EvalRecord::new(truth, est, t_len, 0.0)?;
    println!("n_true,n_est,n_hat_minus_n,d_h");
    println!(
        "{},{},{},{:.6}",
        record.true_cps.len(),
        record.est_cps.len(),
        record.n_hat_minus_n,
        record.d_h
    );
    Ok(())
}
