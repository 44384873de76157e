//! `entsim` — simulate, estimate, and certify two-mode Gaussian
//! entanglement experiments from the command line.
//!
//! Every stochastic subcommand takes an explicit `--seed`; nothing is ever
//! seeded from the clock, so any run can be reproduced from its arguments
//! (reports embed the input hash and seed for exactly that purpose).
//!
//! Exit codes: 0 success, 2 input validation, 3 I/O failure, 4 domain error
//! (e.g. an unphysical state where a physical one is required).

mod report;

use std::fmt::Display;
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use entsim_core::calibration::{
    fit_thermal, input_sigma, input_temperature, normalize_and_calibrate, read_thermal_sweep,
    CalibrationError, ThermalCalibration, ThermalFit, DEFAULT_SIGNAL_FREQ_HZ,
};
use entsim_core::estimator::{
    bin_variances, estimate_state, parametric_bootstrap, traces_from_dataset, write_variances_csv,
    EstimatorError,
};
use entsim_core::gaussian::{
    entanglement_witness, negativity, squeezing_minima, GaussianState,
};
use entsim_core::squeezer::{fit_model, predict_covariance, SqueezerError};
use entsim_core::synth::{
    generate_dataset, read_dataset_binary, read_dataset_csv, write_dataset_binary,
    write_dataset_csv, SynthError,
};
use entsim_core::{
    AcquisitionConfig, BootstrapReport, EstimatedState, JointConvention, QuadratureDataset,
    SqueezerParams,
};

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {}", err.message);
            ExitCode::from(err.kind.code())
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = load_config(cli.config.as_deref())?;
    match cli.command {
        Command::Simulate(args) => cmd_simulate(args, &cfg),
        Command::Estimate(args) => cmd_estimate(args, &cfg),
        Command::Analyze(args) => cmd_analyze(args, &cfg),
        Command::FitModel(args) => cmd_fit_model(args, &cfg),
        Command::CalibrateThermal(args) => cmd_calibrate_thermal(args, &cfg),
        Command::CalibrateApply(args) => cmd_calibrate_apply(args, &cfg),
        Command::Variances(args) => cmd_variances(args, &cfg),
        Command::Bootstrap(args) => cmd_bootstrap(args, &cfg),
        Command::ReproducePaper(args) => cmd_reproduce(args, &cfg),
    }
}

#[derive(Parser)]
#[command(
    name = "entsim",
    version,
    about = "Two-mode Gaussian entanglement: simulation, estimation, certification",
    propagate_version = true
)]
struct Cli {
    /// JSON config file; values are merged under explicit flags (flags win).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize a phase-swept quadrature dataset from squeezer parameters
    Simulate(SimulateArgs),
    /// Reconstruct a two-mode Gaussian state from a dataset
    Estimate(EstimateArgs),
    /// Certify a state: witness, negativity, physicality, optional bootstrap
    Analyze(AnalyzeArgs),
    /// Fit the squeezer model to a dataset's binned variance traces
    FitModel(FitModelArgs),
    /// Fit the two-channel thermal model to a noise-vs-temperature sweep
    CalibrateThermal(CalibrateThermalArgs),
    /// Rescale raw on/off records into calibrated quadratures
    CalibrateApply(CalibrateApplyArgs),
    /// Emit per-phase-bin variances as CSV
    Variances(VariancesArgs),
    /// Parametric bootstrap of the witness and negativity uncertainties
    Bootstrap(BootstrapArgs),
    /// Run the full pipeline at the published operating point and print a
    /// comparison table against the published values
    ReproducePaper(ReproduceArgs),
}

// ---------------------------------------------------------------------------
// errors

enum ErrorKind {
    /// Exit 2: the inputs themselves are malformed or inconsistent.
    Validation,
    /// Exit 3: the filesystem failed us.
    Io,
    /// Exit 4: well-formed inputs describing something the operation cannot
    /// accept (unphysical or unsampleable state, diverged fit).
    Domain,
}

impl ErrorKind {
    fn code(&self) -> u8 {
        match self {
            ErrorKind::Validation => 2,
            ErrorKind::Io => 3,
            ErrorKind::Domain => 4,
        }
    }
}

struct CliError {
    kind: ErrorKind,
    message: String,
}

impl CliError {
    fn validation(message: impl Display) -> Self {
        CliError { kind: ErrorKind::Validation, message: message.to_string() }
    }

    fn io(path: &Path, err: impl Display) -> Self {
        CliError { kind: ErrorKind::Io, message: format!("{}: {err}", path.display()) }
    }

    fn domain(message: impl Display) -> Self {
        CliError { kind: ErrorKind::Domain, message: message.to_string() }
    }
}

fn synth_error(path: &Path, err: SynthError) -> CliError {
    match err {
        SynthError::Io(inner) => CliError::io(path, inner),
        psd @ SynthError::NonPsdProjection { .. } => CliError::domain(psd),
        other => CliError::validation(format!("{}: {other}", path.display())),
    }
}

fn estimator_error(err: EstimatorError) -> CliError {
    match err {
        EstimatorError::Unsampleable(_)
        | EstimatorError::Gaussian(_)
        | EstimatorError::Synth(SynthError::NonPsdProjection { .. }) => CliError::domain(err),
        other => CliError::validation(other),
    }
}

fn squeezer_error(err: SqueezerError) -> CliError {
    match err {
        SqueezerError::Fit(_) => CliError::domain(err),
        other => CliError::validation(other),
    }
}

fn calibration_error(path: &Path, err: CalibrationError) -> CliError {
    match err {
        CalibrationError::Io(inner) => CliError::io(path, inner),
        CalibrationError::Fit(_) => CliError::domain(err),
        other => CliError::validation(format!("{}: {other}", path.display())),
    }
}

// ---------------------------------------------------------------------------
// config file

/// Optional JSON config; any field present supplies a default for the
/// matching flag.  Unknown keys are rejected rather than silently ignored.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    seed: Option<u64>,
    records: Option<u32>,
    samples_per_record: Option<u32>,
    sample_interval: Option<f64>,
    detune1: Option<f64>,
    detune2: Option<f64>,
    split_ratio: Option<f64>,
    unsplit: Option<bool>,
    replicates: Option<u32>,
    f_s_hz: Option<f64>,
    t_fridge_kelvin: Option<f64>,
    params: Option<SqueezerParams>,
    calibration: Option<ThermalCalibration>,
}

fn load_config(path: Option<&Path>) -> Result<FileConfig, CliError> {
    let Some(path) = path else {
        return Ok(FileConfig::default());
    };
    let bytes = read_file(path)?;
    serde_json::from_slice(&bytes)
        .map_err(|e| CliError::validation(format!("{}: {e}", path.display())))
}

/// Acquisition geometry flags shared by the stochastic subcommands.
#[derive(Debug, Args)]
struct AcqArgs {
    /// Base seed for all pseudo-randomness (there is no wall-clock seeding)
    #[arg(long)]
    seed: Option<u64>,
    /// Number of records (full phase-ramp repetitions)
    #[arg(long)]
    records: Option<u32>,
    /// Samples per record
    #[arg(long)]
    samples_per_record: Option<u32>,
    /// Seconds between consecutive samples
    #[arg(long)]
    sample_interval: Option<f64>,
    /// Phase-ramp frequency of channel 1, Hz
    #[arg(long)]
    detune1: Option<f64>,
    /// Phase-ramp frequency of channel 2, Hz
    #[arg(long)]
    detune2: Option<f64>,
}

impl AcqArgs {
    /// Flags win over config values; anything still missing falls back to
    /// the standard acquisition geometry.  The seed has no implicit default:
    /// it must come from a flag, the config, or the subcommand's documented
    /// constant.
    fn resolve(
        &self,
        cfg: &FileConfig,
        default_seed: Option<u64>,
    ) -> Result<AcquisitionConfig, CliError> {
        let seed = self.seed.or(cfg.seed).or(default_seed).ok_or_else(|| {
            CliError::validation("--seed is required: stochastic runs never seed from the clock")
        })?;
        let std_cfg = AcquisitionConfig::standard(seed);
        Ok(AcquisitionConfig {
            sample_interval: self
                .sample_interval
                .or(cfg.sample_interval)
                .unwrap_or(std_cfg.sample_interval),
            detune1: self.detune1.or(cfg.detune1).unwrap_or(std_cfg.detune1),
            detune2: self.detune2.or(cfg.detune2).unwrap_or(std_cfg.detune2),
            samples_per_record: self
                .samples_per_record
                .or(cfg.samples_per_record)
                .unwrap_or(std_cfg.samples_per_record),
            n_records: self.records.or(cfg.records).unwrap_or(std_cfg.n_records),
            seed,
        })
    }
}

// ---------------------------------------------------------------------------
// dataset and report I/O

/// On-disk dataset encoding.  CSV is the inspectable default; the binary
/// container (little-endian f64 rows plus a JSON sidecar) is for
/// 10^7-sample runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum DataFormat {
    Csv,
    Binary,
}

/// Input encoding; `auto` selects binary exactly when the sidecar
/// `<path>.meta.json` exists.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ReadFormat {
    Auto,
    Csv,
    Binary,
}

fn sidecar_path(path: &Path) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".meta.json");
    PathBuf::from(name)
}

fn read_file(path: &Path) -> Result<Vec<u8>, CliError> {
    std::fs::read(path).map_err(|e| CliError::io(path, e))
}

fn read_dataset(path: &Path, format: ReadFormat) -> Result<QuadratureDataset, CliError> {
    let sidecar = sidecar_path(path);
    let binary = match format {
        ReadFormat::Binary => true,
        ReadFormat::Csv => false,
        ReadFormat::Auto => sidecar.exists(),
    };
    if binary {
        let data = File::open(path).map_err(|e| CliError::io(path, e))?;
        let meta = File::open(&sidecar).map_err(|e| CliError::io(&sidecar, e))?;
        read_dataset_binary(BufReader::new(data), BufReader::new(meta))
            .map_err(|e| synth_error(path, e))
    } else {
        let data = File::open(path).map_err(|e| CliError::io(path, e))?;
        read_dataset_csv(BufReader::new(data)).map_err(|e| synth_error(path, e))
    }
}

fn write_dataset(
    path: &Path,
    format: DataFormat,
    ds: &QuadratureDataset,
) -> Result<(), CliError> {
    match format {
        DataFormat::Csv => {
            let file = File::create(path).map_err(|e| CliError::io(path, e))?;
            write_dataset_csv(BufWriter::new(file), ds).map_err(|e| synth_error(path, e))
        }
        DataFormat::Binary => {
            let sidecar = sidecar_path(path);
            let data = File::create(path).map_err(|e| CliError::io(path, e))?;
            let meta = File::create(&sidecar).map_err(|e| CliError::io(&sidecar, e))?;
            write_dataset_binary(BufWriter::new(data), BufWriter::new(meta), ds)
                .map_err(|e| synth_error(path, e))
        }
    }
}

/// Pretty JSON with a trailing newline.  serde_json emits shortest
/// round-trip decimal for floats, so every value re-parses bit-exactly.
fn to_json_bytes<T: Serialize>(value: &T) -> Result<Vec<u8>, CliError> {
    let mut bytes = serde_json::to_vec_pretty(value)
        .map_err(|e| CliError::validation(format!("serializing output: {e}")))?;
    bytes.push(b'\n');
    Ok(bytes)
}

fn write_output(out: Option<&Path>, bytes: &[u8]) -> Result<(), CliError> {
    match out {
        Some(path) => std::fs::write(path, bytes).map_err(|e| CliError::io(path, e)),
        None => io::stdout()
            .write_all(bytes)
            .map_err(|e| CliError { kind: ErrorKind::Io, message: format!("stdout: {e}") }),
    }
}

/// Accept either a full estimate document or a bare state JSON; return the
/// state plus the hash of the exact input bytes for provenance.
fn read_state(path: &Path) -> Result<(GaussianState, String), CliError> {
    let bytes = read_file(path)?;
    let sha = report::sha256_hex(&bytes);
    if let Ok(est) = serde_json::from_slice::<EstimatedState>(&bytes) {
        return Ok((est.state, sha));
    }
    let state = serde_json::from_slice::<GaussianState>(&bytes).map_err(|e| {
        CliError::validation(format!(
            "{}: neither an estimate document nor a state JSON: {e}",
            path.display()
        ))
    })?;
    Ok((state, sha))
}

// ---------------------------------------------------------------------------
// simulate

#[derive(Args)]
struct SimulateArgs {
    /// Squeezer parameter JSON (falls back to `params` in --config)
    #[arg(long, value_name = "PATH")]
    params: Option<PathBuf>,
    /// Beam-splitter transmission toward channel 1
    #[arg(long)]
    split_ratio: Option<f64>,
    /// Model two independently squeezed channels instead of one split mode
    #[arg(long)]
    unsplit: bool,
    #[command(flatten)]
    acq: AcqArgs,
    /// Output dataset path
    #[arg(long, value_name = "PATH")]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = DataFormat::Csv)]
    format: DataFormat,
}

const DEFAULT_SPLIT_RATIO: f64 = 0.51;

fn cmd_simulate(args: SimulateArgs, cfg: &FileConfig) -> Result<(), CliError> {
    let params = match (&args.params, &cfg.params) {
        (Some(path), _) => {
            let bytes = read_file(path)?;
            serde_json::from_slice::<SqueezerParams>(&bytes)
                .map_err(|e| CliError::validation(format!("{}: {e}", path.display())))?
        }
        (None, Some(p)) => *p,
        (None, None) => {
            return Err(CliError::validation(
                "squeezer parameters required: pass --params or put `params` in --config",
            ))
        }
    };
    let split_ratio = args.split_ratio.or(cfg.split_ratio).unwrap_or(DEFAULT_SPLIT_RATIO);
    let split = !(args.unsplit || cfg.unsplit.unwrap_or(false));
    let state =
        predict_covariance(&params, split_ratio, split).map_err(|e| CliError::validation(e))?;
    let acq = args.acq.resolve(cfg, None)?;
    let ds = generate_dataset(&state, &acq).map_err(|e| synth_error(&args.out, e))?;
    write_dataset(&args.out, args.format, &ds)
}

// ---------------------------------------------------------------------------
// estimate

#[derive(Args)]
struct EstimateArgs {
    /// Input dataset
    #[arg(long = "in", value_name = "PATH")]
    input: PathBuf,
    #[arg(long, value_enum, default_value_t = ReadFormat::Auto)]
    format: ReadFormat,
    /// Output path for the estimate JSON (stdout when omitted)
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

fn cmd_estimate(args: EstimateArgs, _cfg: &FileConfig) -> Result<(), CliError> {
    let ds = read_dataset(&args.input, args.format)?;
    let est = estimate_state(&ds).map_err(estimator_error)?;
    write_output(args.out.as_deref(), &to_json_bytes(&est)?)
}

// ---------------------------------------------------------------------------
// analyze

#[derive(Args)]
struct AnalyzeArgs {
    /// State JSON: an `estimate` document or a bare state
    #[arg(long, value_name = "PATH")]
    state: PathBuf,
    /// Attach a parametric bootstrap with this many replicates
    #[arg(long, value_name = "REPLICATES")]
    bootstrap: Option<u32>,
    #[command(flatten)]
    acq: AcqArgs,
    /// Output path for the report JSON (stdout when omitted)
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

fn cmd_analyze(args: AnalyzeArgs, cfg: &FileConfig) -> Result<(), CliError> {
    let (state, sha) = read_state(&args.state)?;
    let mut seed = None;
    // Estimates of near-boundary states routinely have nu_minus a hair under
    // 1/2 (no projection is applied), and such covariances resample fine.
    // The hard requirement for a bootstrap is positive semidefiniteness;
    // `parametric_bootstrap` rejects anything beyond that as unsampleable,
    // which we surface as a domain error (exit 4).
    let bootstrap = match args.bootstrap.or(cfg.replicates) {
        None => None,
        Some(replicates) => {
            let acq = args.acq.resolve(cfg, None)?;
            seed = Some(acq.seed);
            Some(parametric_bootstrap(&state, &acq, replicates).map_err(estimator_error)?)
        }
    };
    let report = report::analyze_state(&state, bootstrap, sha, seed)
        .map_err(|e| CliError::domain(e))?;
    write_output(args.out.as_deref(), &to_json_bytes(&report)?)
}

// ---------------------------------------------------------------------------
// fit-model

#[derive(Args)]
struct FitModelArgs {
    /// Input dataset
    #[arg(long = "in", value_name = "PATH")]
    input: PathBuf,
    #[arg(long, value_enum, default_value_t = ReadFormat::Auto)]
    format: ReadFormat,
    /// Output path for the fit JSON (stdout when omitted)
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

fn cmd_fit_model(args: FitModelArgs, _cfg: &FileConfig) -> Result<(), CliError> {
    let ds = read_dataset(&args.input, args.format)?;
    let traces = traces_from_dataset(&ds).map_err(estimator_error)?;
    let fit = fit_model(&traces, None).map_err(squeezer_error)?;
    write_output(args.out.as_deref(), &to_json_bytes(&fit)?)
}

// ---------------------------------------------------------------------------
// calibrate-thermal

#[derive(Args)]
struct CalibrateThermalArgs {
    /// Thermal sweep CSV (channel,t_fridge_kelvin,var_raw,repeat_index)
    #[arg(long = "in", value_name = "PATH")]
    input: PathBuf,
    /// Signal frequency in Hz for the occupation model
    #[arg(long, default_value_t = DEFAULT_SIGNAL_FREQ_HZ)]
    signal_freq_hz: f64,
    /// Output path for the calibration JSON (stdout when omitted)
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

fn cmd_calibrate_thermal(args: CalibrateThermalArgs, cfg: &FileConfig) -> Result<(), CliError> {
    let bytes = read_file(&args.input)?;
    let points =
        read_thermal_sweep(&bytes[..]).map_err(|e| calibration_error(&args.input, e))?;
    // A config f_s_hz overrides the built-in default but not an explicit flag;
    // clap can't tell those apart for a defaulted arg, so config wins only
    // when the flag still holds the default.
    let f_s = if args.signal_freq_hz == DEFAULT_SIGNAL_FREQ_HZ {
        cfg.f_s_hz.unwrap_or(DEFAULT_SIGNAL_FREQ_HZ)
    } else {
        args.signal_freq_hz
    };
    let fit = fit_thermal(&points, f_s).map_err(|e| calibration_error(&args.input, e))?;
    write_output(args.out.as_deref(), &to_json_bytes(&fit)?)
}

// ---------------------------------------------------------------------------
// calibrate-apply

#[derive(Args)]
struct CalibrateApplyArgs {
    /// Raw (input-on) dataset
    #[arg(long, value_name = "PATH")]
    raw: PathBuf,
    /// Input-off dataset recorded with the same chain
    #[arg(long, value_name = "PATH")]
    off: PathBuf,
    /// Calibration JSON from calibrate-thermal (falls back to --config)
    #[arg(long, value_name = "PATH")]
    calibration: Option<PathBuf>,
    /// Fridge temperature during the raw acquisition, K
    #[arg(long, value_name = "KELVIN")]
    t_fridge_kelvin: Option<f64>,
    /// Evaluate the Bose occupation exactly instead of the cold-stage policy
    #[arg(long)]
    exact_occupation: bool,
    #[arg(long, value_enum, default_value_t = ReadFormat::Auto)]
    format: ReadFormat,
    /// Output dataset path
    #[arg(long, value_name = "PATH")]
    out: PathBuf,
    #[arg(long = "out-format", value_enum, default_value_t = DataFormat::Csv)]
    out_format: DataFormat,
}

fn cmd_calibrate_apply(args: CalibrateApplyArgs, cfg: &FileConfig) -> Result<(), CliError> {
    let raw = read_dataset(&args.raw, args.format)?;
    let off = read_dataset(&args.off, args.format)?;
    let cal = match (&args.calibration, &cfg.calibration) {
        (Some(path), _) => {
            let bytes = read_file(path)?;
            // Accept the full fit document or just its calibration block.
            match serde_json::from_slice::<ThermalFit>(&bytes) {
                Ok(fit) => fit.calibration,
                Err(_) => serde_json::from_slice::<ThermalCalibration>(&bytes)
                    .map_err(|e| CliError::validation(format!("{}: {e}", path.display())))?,
            }
        }
        (None, Some(cal)) => cal.clone(),
        (None, None) => {
            return Err(CliError::validation(
                "calibration required: pass --calibration or put `calibration` in --config",
            ))
        }
    };
    let t_fridge = args.t_fridge_kelvin.or(cfg.t_fridge_kelvin).unwrap_or(0.0);
    let t_in = input_temperature(t_fridge, cal.t_e_kelvin);
    let sigma = input_sigma(t_in, cal.f_s_hz, args.exact_occupation);
    let gains = (cal.channels[0].gain, cal.channels[1].gain);
    let calibrated =
        normalize_and_calibrate((&raw.w1, &raw.w2), (&off.w1, &off.w2), gains, sigma)
            .map_err(|e| calibration_error(&args.raw, e))?;
    let out_ds = QuadratureDataset { w1: calibrated.w1, w2: calibrated.w2, ..raw };
    write_dataset(&args.out, args.out_format, &out_ds)
}

// ---------------------------------------------------------------------------
// variances

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum JointKind {
    /// (1/2) Var(W1 + W2)
    HalfSum,
    /// Var(W1 + W2) / 2 Var_vacuum, i.e. vacuum-normalized units
    VacuumNormalized,
}

#[derive(Args)]
struct VariancesArgs {
    /// Input dataset
    #[arg(long = "in", value_name = "PATH")]
    input: PathBuf,
    #[arg(long, value_enum, default_value_t = ReadFormat::Auto)]
    format: ReadFormat,
    /// Normalization of the joint-variance column
    #[arg(long, value_enum, default_value_t = JointKind::HalfSum)]
    joint_convention: JointKind,
    /// Output path for the CSV (stdout when omitted)
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

fn cmd_variances(args: VariancesArgs, _cfg: &FileConfig) -> Result<(), CliError> {
    let ds = read_dataset(&args.input, args.format)?;
    let convention = match args.joint_convention {
        JointKind::HalfSum => JointConvention::HalfVarianceSum,
        JointKind::VacuumNormalized => JointConvention::VacuumNormalized,
    };
    let bins = bin_variances(&ds, convention).map_err(estimator_error)?;
    let mut buf = Vec::new();
    write_variances_csv(&mut buf, &bins)
        .map_err(|e| CliError { kind: ErrorKind::Io, message: format!("variances: {e}") })?;
    write_output(args.out.as_deref(), &buf)
}

// ---------------------------------------------------------------------------
// bootstrap

#[derive(Args)]
struct BootstrapArgs {
    /// State JSON: an `estimate` document or a bare state
    #[arg(long, value_name = "PATH")]
    state: PathBuf,
    /// Number of bootstrap replicates
    #[arg(long)]
    replicates: Option<u32>,
    #[command(flatten)]
    acq: AcqArgs,
    /// Output path for the report JSON (stdout when omitted)
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

const DEFAULT_REPLICATES: u32 = 20;

/// Standalone bootstrap report with the provenance needed to re-run it.
#[derive(Serialize)]
struct BootstrapDocument {
    #[serde(flatten)]
    report: BootstrapReport,
    provenance: report::Provenance,
}

fn cmd_bootstrap(args: BootstrapArgs, cfg: &FileConfig) -> Result<(), CliError> {
    let (state, sha) = read_state(&args.state)?;
    let acq = args.acq.resolve(cfg, None)?;
    let replicates = args.replicates.or(cfg.replicates).unwrap_or(DEFAULT_REPLICATES);
    let report = parametric_bootstrap(&state, &acq, replicates).map_err(estimator_error)?;
    let doc = BootstrapDocument {
        report,
        provenance: report::Provenance {
            input_sha256: sha,
            seed: Some(acq.seed),
            version: env!("CARGO_PKG_VERSION").to_string(),
        },
    };
    write_output(args.out.as_deref(), &to_json_bytes(&doc)?)
}

// ---------------------------------------------------------------------------
// reproduce-paper

#[derive(Args)]
struct ReproduceArgs {
    #[command(flatten)]
    acq: AcqArgs,
}

/// The published operating point: squeeze factor and channel participations
/// from the joint model fit, detection phases at the sweep origin, unit
/// gains (calibrated units).
fn published_operating_point() -> SqueezerParams {
    SqueezerParams {
        s: 5.41,
        alpha: 0.1304,
        beta: 0.202,
        phi1: 0.0,
        phi2: 0.0,
        g1: 1.0,
        g2: 1.0,
    }
}

const REPRODUCE_SEED: u64 = 1;

fn cmd_reproduce(args: ReproduceArgs, cfg: &FileConfig) -> Result<(), CliError> {
    let params = published_operating_point();
    let state = predict_covariance(&params, DEFAULT_SPLIT_RATIO, true)
        .map_err(|e| CliError::validation(e))?;
    let acq = args.acq.resolve(cfg, Some(REPRODUCE_SEED))?;
    let ds = generate_dataset(&state, &acq).map_err(|e| synth_error(Path::new("-"), e))?;
    let est = estimate_state(&ds).map_err(estimator_error)?;
    let witness = entanglement_witness(&est.state);
    let neg = negativity(&est.state).map_err(|e| CliError::domain(e))?;
    let (min1, min2, joint) = squeezing_minima(&est.state);
    let below_vacuum = |v: f64| 100.0 * (1.0 - v / 0.5);

    println!(
        "pipeline: simulate ({} records x {} samples, seed {}) -> estimate -> analyze",
        acq.n_records, acq.samples_per_record, acq.seed
    );
    println!();
    println!("{:<22} {:>10} {:>11}", "quantity", "computed", "published");
    println!("{:<22} {:>10.4} {:>11}", "witness E_W", witness.e_w, "-0.263");
    println!("{:<22} {:>10.4} {:>11}", "optimal gain a*", witness.a_star, "1.11");
    println!("{:<22} {:>10.4} {:>11}", "negativity N", neg.negativity, "0.0824");
    println!("{:<22} {:>10.4} {:>11}", "EPR variance", witness.delta_epr, "< 1");
    println!(
        "{:<22} {:>9.1}% {:>11}",
        "W1 below vacuum",
        below_vacuum(min1),
        "~15%"
    );
    println!(
        "{:<22} {:>9.1}% {:>11}",
        "W2 below vacuum",
        below_vacuum(min2),
        "~15%"
    );
    println!(
        "{:<22} {:>9.1}% {:>11}",
        "joint below vacuum",
        below_vacuum(joint),
        "~25%"
    );
    println!();
    println!("note: {}", entsim_core::SYSTEMATICS_NOTE);
    Ok(())
}
