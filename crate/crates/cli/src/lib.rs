//! Command-line driver: simulate a dataset, reconstruct it with or without a
//! known probe, and evaluate the runs.
//!
//! A dataset directory holds `meta.json`, `frames.ptya`, `probe.ptya` and,
//! for synthetic data, `truth.ptya`. A run directory holds `run.json`,
//! `merged.ptya`, one `sub_<d>.ptya` per subdomain, `convergence.csv` and,
//! for blind runs, the recovered `probe.ptya`.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize, Serializer};
use thiserror::Error;

use ptycho_dd::io::{
    read_array, read_json, write_array, write_convergence_csv, write_json, write_png, PtyArray,
    Window,
};
use ptycho_dd::metrics::{align_global_phase, snr_db, snr_db_aligned, speedup_report, RunTiming};
use ptycho_dd::sim::{add_poisson_noise, calibrate_noise_scale, ExperimentSpec, NoiseSpec};
use ptycho_dd::solver::{
    run_blind, run_nonblind, support_from_probe, BlindConfig, ConvergenceRecord, NonblindConfig,
    StopReason, Support,
};
use ptycho_dd::{plan_stripes, ComplexField2D, Frames, PtychoError, ScanGeometry};

pub const SCHEMA_VERSION: u32 = 1;

/// Relative spectral threshold used when the support is taken from a known probe.
const PROBE_SUPPORT_THRESHOLD: f64 = 1e-9;

pub mod exit {
    pub const SUCCESS: i32 = 0;
    pub const IO: i32 = 1;
    pub const CONFIG: i32 = 2;
    pub const FORMAT: i32 = 3;
    pub const PLAN: i32 = 4;
    pub const DIVERGENCE: i32 = 5;
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),

    #[error("{}: {source}", path.display())]
    File { path: PathBuf, source: PtychoError },

    #[error(transparent)]
    Core(#[from] PtychoError),
}

impl CliError {
    fn file(path: &Path) -> impl FnOnce(PtychoError) -> CliError + '_ {
        move |source| CliError::File {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        let core = match self {
            CliError::Config(_) => return exit::CONFIG,
            CliError::File { source, .. } => source,
            CliError::Core(e) => e,
        };
        match core {
            PtychoError::Parameter(_)
            | PtychoError::Validation(_)
            | PtychoError::Dimension(_)
            | PtychoError::CountOverflow(_) => exit::CONFIG,
            PtychoError::Format { .. } | PtychoError::Json(_) => exit::FORMAT,
            PtychoError::Bounds(_)
            | PtychoError::InfeasibleDecomposition(_)
            | PtychoError::Plan(_)
            | PtychoError::ZeroDensity { .. } => exit::PLAN,
            PtychoError::Divergence { .. } => exit::DIVERGENCE,
            PtychoError::Io(_) | PtychoError::Report(_) | PtychoError::UndefinedMetric(_) => {
                exit::IO
            }
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(
    name = "ptycho-dd",
    version,
    about = "Domain-decomposed ptychographic reconstruction"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a synthetic dataset.
    Simulate(SimulateArgs),
    /// Reconstruct the sample with the known probe.
    Reconstruct(ReconstructArgs),
    /// Recover sample and probe jointly.
    Blind(BlindArgs),
    /// Score runs against the ground truth and compare their timings.
    Evaluate(EvaluateArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, default_value_t = 256)]
    pub size: usize,
    #[arg(long, default_value_t = 64)]
    pub probe_side: usize,
    #[arg(long, default_value_t = 8)]
    pub step: usize,
    /// Add Poisson noise calibrated to this intensity SNR.
    #[arg(long)]
    pub noise_snr_db: Option<f64>,
    /// Seed of the noise generator.
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Seed of the procedural test images.
    #[arg(long, default_value_t = 1)]
    pub image_seed: u64,
    /// Probe energy; the default depends on the sample size.
    #[arg(long)]
    pub flux: Option<f64>,
    #[arg(long)]
    pub pupil_radius: Option<f64>,
    #[arg(long)]
    pub zones: Option<usize>,
    #[arg(long)]
    pub defocus: Option<f64>,
    /// Smallest sample magnitude.
    #[arg(long)]
    pub floor: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    /// Dataset directory.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = 2)]
    pub subdomains: usize,
    #[arg(long, default_value_t = 0.5)]
    pub epsilon: f64,
    #[arg(long, default_value_t = 0.1)]
    pub eta: f64,
    /// Overlap penalty; defaults to a preset chosen from the dataset's noise level.
    #[arg(long)]
    pub r: Option<f64>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    #[arg(long)]
    pub tol_rf: Option<f64>,
    #[arg(long)]
    pub tol_re: Option<f64>,
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReconstructArgs {
    #[command(flatten)]
    pub solve: SolveArgs,
    #[arg(long)]
    pub record_lagrangian: bool,
}

#[derive(Debug, Args)]
pub struct BlindArgs {
    #[command(flatten)]
    pub solve: SolveArgs,
    #[arg(long, default_value_t = 200.0)]
    pub mu: f64,
    /// Proximal weight of the image update; defaults to 1e-3 times eta.
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Fourier support radius in frequency pixels.
    #[arg(long, conflicts_with_all = ["support_energy", "support_from_probe"])]
    pub support_radius: Option<f64>,
    /// Support disk holding this fraction of the initial probe's spectral energy.
    #[arg(long, conflicts_with = "support_from_probe")]
    pub support_energy: Option<f64>,
    /// Take the support from the spectrum of the dataset's probe.
    #[arg(long)]
    pub support_from_probe: bool,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Run directories.
    #[arg(required = true)]
    pub runs: Vec<PathBuf>,
    /// Ground-truth sample; defaults to the truth stored with each run's dataset.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Render magnitude and phase PNGs into each run directory.
    #[arg(long)]
    pub png: bool,
    /// Write the report as JSON.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseMeta {
    pub target_snr_db: f64,
    pub scale: f64,
    pub seed: u64,
    pub measured_snr_db: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub schema_version: u32,
    pub geometry: ScanGeometry,
    pub experiment: Option<ExperimentSpec>,
    pub noise: Option<NoiseMeta>,
    pub has_truth: bool,
}

pub struct Dataset {
    pub meta: DatasetMeta,
    pub frames: Frames,
    pub probe: ComplexField2D,
    pub truth: Option<ComplexField2D>,
}

fn read_checked(dir: &Path, name: &str, dims: &[usize]) -> CliResult<PtyArray> {
    let path = dir.join(name);
    let array = read_array(&path).map_err(CliError::file(&path))?;
    if array.dims != dims {
        return Err(CliError::File {
            path,
            source: PtychoError::Format {
                offset: 8,
                message: format!(
                    "shape {:?} disagrees with meta.json, expected {dims:?}",
                    array.dims
                ),
            },
        });
    }
    Ok(array)
}

/// Loads a dataset, checking every array against the shapes implied by `meta.json`.
pub fn load_dataset(dir: &Path) -> CliResult<Dataset> {
    let meta_path = dir.join("meta.json");
    let meta: DatasetMeta = read_json(&meta_path).map_err(CliError::file(&meta_path))?;
    if meta.schema_version != SCHEMA_VERSION {
        return Err(CliError::File {
            path: meta_path,
            source: PtychoError::Validation(format!(
                "schema version {} is not supported",
                meta.schema_version
            )),
        });
    }
    let g = &meta.geometry;
    let n = g.frame_side();
    let (h, w) = g.image_shape();
    let frames = read_checked(dir, "frames.ptya", &[g.len(), n, n])?.into_frames()?;
    let probe = read_checked(dir, "probe.ptya", &[n, n])?.into_complex()?;
    let truth = if meta.has_truth {
        Some(read_checked(dir, "truth.ptya", &[h, w])?.into_complex()?)
    } else {
        None
    };
    Ok(Dataset {
        meta,
        frames,
        probe,
        truth,
    })
}

fn experiment_spec(args: &SimulateArgs) -> ExperimentSpec {
    let mut spec = if args.size == 512 && args.step == 16 {
        ExperimentSpec::large()
    } else {
        ExperimentSpec::default()
    };
    spec.size = args.size;
    spec.step = args.step;
    spec.seed = args.image_seed;
    spec.probe.side = args.probe_side;
    if let Some(f) = args.flux {
        spec.probe.flux = f;
    }
    if let Some(p) = args.pupil_radius {
        spec.probe.pupil_radius = p;
    }
    if let Some(z) = args.zones {
        spec.probe.zones = z;
    }
    if let Some(d) = args.defocus {
        spec.probe.defocus = d;
    }
    if let Some(f) = args.floor {
        spec.floor = f;
    }
    spec
}

pub fn cmd_simulate(args: &SimulateArgs) -> CliResult<DatasetMeta> {
    let spec = experiment_spec(args);
    let ex = spec.build()?;
    let (frames, noise) = match args.noise_snr_db {
        Some(db) => {
            let scale = calibrate_noise_scale(&ex.frames, db, args.seed)?;
            let (noisy, measured) = add_poisson_noise(
                &ex.frames,
                &NoiseSpec {
                    scale,
                    seed: args.seed,
                },
            )?;
            let meta = NoiseMeta {
                target_snr_db: db,
                scale,
                seed: args.seed,
                measured_snr_db: measured,
            };
            (noisy, Some(meta))
        }
        None => (ex.frames, None),
    };
    let meta = DatasetMeta {
        schema_version: SCHEMA_VERSION,
        geometry: ex.geometry,
        experiment: Some(spec),
        noise,
        has_truth: true,
    };
    std::fs::create_dir_all(&args.out).map_err(|e| CliError::file(&args.out)(e.into()))?;
    let out = &args.out;
    save_array(&out.join("frames.ptya"), &PtyArray::from_frames(&frames))?;
    save_array(&out.join("probe.ptya"), &PtyArray::from_complex(&ex.probe))?;
    save_array(&out.join("truth.ptya"), &PtyArray::from_complex(&ex.sample))?;
    save_json(&out.join("meta.json"), &meta)?;
    Ok(meta)
}

fn save_array(path: &Path, array: &PtyArray) -> CliResult<()> {
    write_array(path, array).map_err(CliError::file(path))
}

fn save_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    write_json(path, value).map_err(CliError::file(path))
}

/// Parameters of a run as persisted in `run.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunParams {
    pub epsilon: f64,
    pub eta: f64,
    pub r: f64,
    pub max_iters: usize,
    pub tol_rf: Option<f64>,
    pub tol_re: Option<f64>,
    pub threads: Option<usize>,
    pub record_lagrangian: bool,
    pub mu: Option<f64>,
    pub gamma: Option<f64>,
    pub support: Option<SupportParams>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SupportParams {
    Radius(f64),
    EnergyFraction(f64),
    FromProbe { threshold: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunKind {
    Nonblind,
    Blind,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub schema_version: u32,
    pub kind: RunKind,
    pub dataset: PathBuf,
    pub subdomains: usize,
    pub params: RunParams,
    pub iterations: usize,
    pub stop: StopReason,
    pub final_rf: f64,
    pub final_re: Option<f64>,
    pub virtual_seconds: f64,
    pub actual_seconds: f64,
    /// Whether `(r, η)` lies in the region where the Lagrangian provably decreases.
    pub in_parameter_set: Option<bool>,
    /// Spectral energy of the recovered probe outside the support.
    pub probe_energy_off_support: Option<f64>,
}

impl RunSummary {
    pub fn timing(&self) -> RunTiming {
        RunTiming {
            subdomains: self.subdomains,
            iterations: self.iterations,
            virtual_seconds: self.virtual_seconds,
        }
    }
}

/// Overlap penalty preset for a dataset: noiseless, moderate and strong noise.
pub fn default_r(noise: Option<&NoiseMeta>) -> f64 {
    match noise {
        None => 4000.0,
        Some(n) if n.target_snr_db >= 35.0 => 90.0,
        Some(_) => 150.0,
    }
}

fn run_params(args: &SolveArgs, noise: Option<&NoiseMeta>, record_lagrangian: bool) -> RunParams {
    let base: NonblindConfig<f64> = match noise {
        Some(_) => NonblindConfig::noisy(default_r(noise)),
        None => NonblindConfig::default(),
    };
    let (tol_rf, tol_re) = if args.tol_rf.is_some() || args.tol_re.is_some() {
        (args.tol_rf, args.tol_re)
    } else {
        (base.tol_rf, base.tol_re)
    };
    RunParams {
        epsilon: args.epsilon,
        eta: args.eta,
        r: args.r.unwrap_or(base.r),
        max_iters: args.max_iters.unwrap_or(base.max_iters),
        tol_rf,
        tol_re,
        threads: args.threads,
        record_lagrangian,
        mu: None,
        gamma: None,
        support: None,
    }
}

fn prepare_out(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::file(dir)(e.into()))
}

fn dataset_path(dir: &Path) -> PathBuf {
    std::fs::canonicalize(dir).unwrap_or_else(|_| dir.to_path_buf())
}

fn write_run_outputs(
    out: &Path,
    subs: &[ComplexField2D],
    merged: &ComplexField2D,
    records: &[ConvergenceRecord],
) -> CliResult<()> {
    save_array(&out.join("merged.ptya"), &PtyArray::from_complex(merged))?;
    for (d, u) in subs.iter().enumerate() {
        save_array(
            &out.join(format!("sub_{d}.ptya")),
            &PtyArray::from_complex(u),
        )?;
    }
    let csv = out.join("convergence.csv");
    write_convergence_csv(&csv, records).map_err(CliError::file(&csv))
}

fn final_timing(records: &[ConvergenceRecord]) -> (Option<f64>, f64, f64) {
    let re = records.last().and_then(|r| r.re);
    let virt = records.iter().map(|r| r.virtual_seconds).sum();
    let actual = records.iter().map(|r| r.actual_seconds).sum();
    (re, virt, actual)
}

pub fn cmd_reconstruct(args: &ReconstructArgs) -> CliResult<RunSummary> {
    let s = &args.solve;
    let data = load_dataset(&s.data)?;
    let params = run_params(s, data.meta.noise.as_ref(), args.record_lagrangian);
    let config = NonblindConfig {
        epsilon: params.epsilon,
        eta: params.eta,
        r: params.r,
        max_iters: params.max_iters,
        tol_rf: params.tol_rf,
        tol_re: params.tol_re,
        record_lagrangian: params.record_lagrangian,
        threads: params.threads,
    };
    let plan = plan_stripes(&data.meta.geometry, s.subdomains)?;
    prepare_out(&s.out)?;
    let result = run_nonblind(&plan, &data.frames, &data.probe, config, |_| {})?;
    write_run_outputs(&s.out, &result.subs, &result.merged, &result.records)?;
    let (final_re, virtual_seconds, actual_seconds) = final_timing(&result.records);
    let summary = RunSummary {
        schema_version: SCHEMA_VERSION,
        kind: RunKind::Nonblind,
        dataset: dataset_path(&s.data),
        subdomains: s.subdomains,
        params,
        iterations: result.iterations,
        stop: result.stop,
        final_rf: result.final_rf,
        final_re,
        virtual_seconds,
        actual_seconds,
        in_parameter_set: Some(result.in_parameter_set),
        probe_energy_off_support: None,
    };
    save_json(&s.out.join("run.json"), &summary)?;
    Ok(summary)
}

pub fn cmd_blind(args: &BlindArgs) -> CliResult<RunSummary> {
    let s = &args.solve;
    let data = load_dataset(&s.data)?;
    let mut params = run_params(s, data.meta.noise.as_ref(), false);
    if s.r.is_none() {
        params.r = BlindConfig::<f64>::default().r;
    }
    if s.max_iters.is_none() {
        params.max_iters = BlindConfig::<f64>::default().max_iters;
    }
    let (support, support_params) = match (args.support_radius, args.support_energy) {
        (Some(r), _) => (Support::Radius(r), SupportParams::Radius(r)),
        (None, Some(f)) => (Support::EnergyFraction(f), SupportParams::EnergyFraction(f)),
        (None, None) if args.support_from_probe => (
            Support::Mask(support_from_probe(&data.probe, PROBE_SUPPORT_THRESHOLD)),
            SupportParams::FromProbe {
                threshold: PROBE_SUPPORT_THRESHOLD,
            },
        ),
        (None, None) => (
            Support::EnergyFraction(0.99),
            SupportParams::EnergyFraction(0.99),
        ),
    };
    let config = BlindConfig {
        epsilon: params.epsilon,
        eta: params.eta,
        r: params.r,
        mu: args.mu,
        gamma: args.gamma,
        support,
        initial_probe: None,
        max_iters: params.max_iters,
        tol_rf: params.tol_rf,
        tol_re: params.tol_re,
        threads: params.threads,
    };
    let plan = plan_stripes(&data.meta.geometry, s.subdomains)?;
    prepare_out(&s.out)?;
    let result = run_blind(&plan, &data.frames, config, |_| {})?;
    write_run_outputs(&s.out, &result.subs, &result.merged, &result.records)?;
    save_array(
        &s.out.join("probe.ptya"),
        &PtyArray::from_complex(&result.probe),
    )?;
    let off_support: f64 = result
        .probe_spectrum
        .data()
        .iter()
        .zip(result.support_mask.data())
        .filter(|(_, m)| **m == 0.0)
        .map(|(x, _)| x.norm_sqr())
        .sum();
    params.mu = Some(args.mu);
    params.gamma = Some(result.gamma);
    params.support = Some(support_params);
    let (final_re, virtual_seconds, actual_seconds) = final_timing(&result.records);
    let summary = RunSummary {
        schema_version: SCHEMA_VERSION,
        kind: RunKind::Blind,
        dataset: dataset_path(&s.data),
        subdomains: s.subdomains,
        params,
        iterations: result.iterations,
        stop: result.stop,
        final_rf: result.final_rf,
        final_re,
        virtual_seconds,
        actual_seconds,
        in_parameter_set: None,
        probe_energy_off_support: Some(off_support),
    };
    save_json(&s.out.join("run.json"), &summary)?;
    Ok(summary)
}

/// An SNR in decibels; `+∞` is written as the string `"inf"`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Decibels(pub f64);

impl Serialize for Decibels {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        if self.0.is_finite() {
            s.serialize_f64(self.0)
        } else {
            s.serialize_str(if self.0 > 0.0 { "inf" } else { "-inf" })
        }
    }
}

impl std::fmt::Display for Decibels {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.0.is_finite() {
            write!(f, "{:.2} dB", self.0)
        } else {
            write!(f, "{} dB", self.0)
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct RunEvaluation {
    pub run: PathBuf,
    pub subdomains: usize,
    pub iterations: usize,
    pub final_rf: f64,
    /// Absent when no ground truth is available.
    pub snr_db: Option<Decibels>,
    /// SNR after removing the global phase offset.
    pub snr_db_aligned: Option<Decibels>,
    pub magnitude_window: Option<Window>,
    pub phase_window: Option<Window>,
}

#[derive(Clone, Debug, Serialize)]
pub struct EvaluationReport {
    pub runs: Vec<RunEvaluation>,
    pub speedup: Option<ptycho_dd::metrics::SpeedupReport>,
    pub notices: Vec<String>,
}

pub const MAGNITUDE_WINDOW: Window = Window { lo: 0.0, hi: 1.0 };
pub const PHASE_WINDOW: Window = Window {
    lo: 0.0,
    hi: std::f64::consts::PI,
};

fn load_truth(path: &Path) -> CliResult<ComplexField2D> {
    read_array(path)
        .and_then(PtyArray::into_complex)
        .map_err(CliError::file(path))
}

fn evaluate_run(
    dir: &Path,
    truth_override: Option<&ComplexField2D>,
    png: bool,
    notices: &mut Vec<String>,
) -> CliResult<(RunEvaluation, RunTiming)> {
    let summary_path = dir.join("run.json");
    let summary: RunSummary = read_json(&summary_path).map_err(CliError::file(&summary_path))?;
    let merged_path = dir.join("merged.ptya");
    let merged = read_array(&merged_path)
        .and_then(PtyArray::into_complex)
        .map_err(CliError::file(&merged_path))?;
    let stored = summary.dataset.join("truth.ptya");
    let truth = match truth_override {
        Some(t) => Some(t.clone()),
        None if stored.exists() => Some(load_truth(&stored)?),
        None => {
            notices.push(format!(
                "{}: no ground truth found, SNR omitted",
                dir.display()
            ));
            None
        }
    };
    let (snr, snr_aligned, display) = match &truth {
        Some(t) => (
            Some(Decibels(snr_db(&merged, t)?)),
            Some(Decibels(snr_db_aligned(&merged, t)?)),
            align_global_phase(&merged, t)?,
        ),
        None => (None, None, merged),
    };
    let windows = if png {
        let mag = dir.join("magnitude.png");
        write_png(&mag, &display.abs(), MAGNITUDE_WINDOW).map_err(CliError::file(&mag))?;
        let phase = dir.join("phase.png");
        write_png(&phase, &display.map(|z| z.arg()), PHASE_WINDOW)
            .map_err(CliError::file(&phase))?;
        (Some(MAGNITUDE_WINDOW), Some(PHASE_WINDOW))
    } else {
        (None, None)
    };
    let eval = RunEvaluation {
        run: dir.to_path_buf(),
        subdomains: summary.subdomains,
        iterations: summary.iterations,
        final_rf: summary.final_rf,
        snr_db: snr,
        snr_db_aligned: snr_aligned,
        magnitude_window: windows.0,
        phase_window: windows.1,
    };
    Ok((eval, summary.timing()))
}

pub fn cmd_evaluate(args: &EvaluateArgs) -> CliResult<EvaluationReport> {
    let truth = args.truth.as_deref().map(load_truth).transpose()?;
    let mut notices = Vec::new();
    let mut runs = Vec::new();
    let mut timings = Vec::new();
    for dir in &args.runs {
        let (eval, timing) = evaluate_run(dir, truth.as_ref(), args.png, &mut notices)?;
        runs.push(eval);
        timings.push(timing);
    }
    let speedup = if timings.len() > 1 {
        match speedup_report(&timings) {
            Ok(report) => Some(report),
            Err(e) => {
                notices.push(format!("speedup report skipped: {e}"));
                None
            }
        }
    } else {
        None
    };
    let report = EvaluationReport {
        runs,
        speedup,
        notices,
    };
    if let Some(out) = &args.out {
        save_json(out, &report)?;
    }
    Ok(report)
}

fn print_summary(s: &RunSummary) {
    println!(
        "{:?} D={} iterations={} stop={:?} rf={:.3e} virtual={:.3}s actual={:.3}s",
        s.kind, s.subdomains, s.iterations, s.stop, s.final_rf, s.virtual_seconds, s.actual_seconds
    );
    if s.in_parameter_set == Some(false) {
        eprintln!("warning: (r, eta) lies outside the proven convergence region");
    }
}

/// Runs a parsed command and prints its summary.
pub fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Simulate(args) => {
            let meta = cmd_simulate(&args)?;
            let g = &meta.geometry;
            let (rows, cols) = g.grid_shape();
            println!(
                "wrote {}: {}x{} sample, {} frames ({rows}x{cols}) of {}x{}",
                args.out.display(),
                g.image_shape().0,
                g.image_shape().1,
                g.len(),
                g.frame_side(),
                g.frame_side()
            );
            if let Some(n) = &meta.noise {
                println!(
                    "noise: target {:.2} dB, measured {:.2} dB",
                    n.target_snr_db, n.measured_snr_db
                );
            }
        }
        Command::Reconstruct(args) => {
            let s = cmd_reconstruct(&args)?;
            if s.in_parameter_set == Some(false) {
                eprintln!("warning: (r, eta) lies outside the region where the Lagrangian is known to decrease");
            }
            print_summary(&s);
        }
        Command::Blind(args) => {
            let s = cmd_blind(&args)?;
            print_summary(&s);
            if let Some(e) = s.probe_energy_off_support {
                println!("probe energy off support: {e:e}");
            }
        }
        Command::Evaluate(args) => {
            let report = cmd_evaluate(&args)?;
            for n in &report.notices {
                eprintln!("notice: {n}");
            }
            for r in &report.runs {
                let fmt = |x: Option<Decibels>| x.map(|d| d.to_string()).unwrap_or("-".into());
                println!(
                    "{}: D={} iterations={} rf={:.3e} snr={} aligned={}",
                    r.run.display(),
                    r.subdomains,
                    r.iterations,
                    r.final_rf,
                    fmt(r.snr_db),
                    fmt(r.snr_db_aligned)
                );
            }
            if let Some(s) = &report.speedup {
                print!("{}", s.to_table());
            }
        }
    }
    Ok(())
}
