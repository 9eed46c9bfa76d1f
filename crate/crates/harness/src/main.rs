//! `gso-identify`: generate synthetic shift operators, simulate driven
//! streams, identify the operator's support online, debias the surviving
//! entries, and orchestrate full seeded experiments.
//!
//! Exit codes: 0 success, 2 configuration/argument error, 3 numeric
//! failure (unstable process, degenerate input or support), 1 I/O or data
//! errors.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use gso_core::debias::{build_support_mask, debias_stream, Debiaser, TapEstimatorSettings};
use gso_core::error::GsoError;
use gso_core::identify::{identify_stream, HyperParams, Path as AlgPath, StepsizeController};
use gso_core::io as gio;
use gso_core::sim::{simulate, SignalStream};
use gso_core::topology::{
    gen_ar_coeffs, gen_gso, PowerLawParams, RandomParams, RngSeed, SbmParams, TopologyParams,
    TopologySpec,
};
use gso_core::GsoMatrix;
use gso_harness::config::{ExperimentConfig, GridSpec, MaskModeConfig};
use gso_harness::{emit, run_experiment, run_grid_search, TrialError};

#[derive(Parser)]
#[command(
    name = "gso-identify",
    version,
    about = "Online identification of the graph shift operator behind a streaming vertex-time AR process"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum KindArg {
    Random,
    Powerlaw,
    Sbm,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum MaskModeArg {
    Reachability,
    Replicate,
}

#[derive(Args, Debug)]
struct GenerateArgs {
    /// Topology family of the generated operator.
    #[arg(long, value_enum)]
    kind: KindArg,
    /// Vertex count.
    #[arg(long, default_value_t = 12)]
    n: usize,
    #[arg(long)]
    seed: u64,
    /// Output matrix CSV (row-major, 17 significant digits).
    #[arg(long)]
    out: PathBuf,
    /// The operator is scaled to spectral radius 1/norm_factor.
    #[arg(long, default_value_t = 1.5)]
    norm_factor: f64,
    /// Band-threshold lower fraction (random/powerlaw kinds).
    #[arg(long)]
    lo_frac: Option<f64>,
    /// Band-threshold upper fraction (random/powerlaw kinds).
    #[arg(long)]
    hi_frac: Option<f64>,
    #[arg(long, default_value_t = 3)]
    seed_nodes: usize,
    #[arg(long, default_value_t = 0.8)]
    seed_connect_prob: f64,
    #[arg(long, default_value_t = 2)]
    edges_per_node: usize,
    /// Cluster sizes for the sbm kind; must sum to n.
    #[arg(long, value_delimiter = ',', default_values_t = [3usize, 4, 5])]
    cluster_sizes: Vec<usize>,
    #[arg(long, default_value_t = 0.25)]
    base_diag: f64,
    #[arg(long, default_value_t = 0.05)]
    prob_jitter_lo: f64,
    #[arg(long, default_value_t = 0.2)]
    prob_jitter_hi: f64,
    #[arg(long, default_value_t = 2.0)]
    weight_rate: f64,
    /// Also sample sparse AR taps into this CSV (one ragged row per lag).
    #[arg(long)]
    coeffs_out: Option<PathBuf>,
    /// AR order for --coeffs-out.
    #[arg(long, default_value_t = 3)]
    p_order: usize,
    /// Per-tap zeroing probability for --coeffs-out.
    #[arg(long, default_value_t = 0.25)]
    zero_prob: f64,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    /// Shift operator matrix CSV.
    #[arg(long)]
    w: PathBuf,
    /// AR taps CSV (ragged rows).
    #[arg(long)]
    coeffs: PathBuf,
    /// Total steps simulated, including burn-in.
    #[arg(long, default_value_t = 1100)]
    t: usize,
    #[arg(long, default_value_t = 500)]
    burn_in: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value_t = 1.0)]
    noise_std: f64,
    /// Output signal CSV (one row per step).
    #[arg(long)]
    out: PathBuf,
    /// Optional innovation record CSV.
    #[arg(long)]
    noise_out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct IdentifyArgs {
    /// Signal CSV.
    #[arg(long)]
    x: PathBuf,
    /// AR order.
    #[arg(long)]
    p: usize,
    /// 1 = commutator in the operator refinement, 2 = in the lag-matrix step.
    #[arg(long, default_value_t = 1)]
    path: u8,
    /// Per-lag L1 weights, comma separated, non-increasing.
    #[arg(long, value_delimiter = ',')]
    mu: Vec<f64>,
    #[arg(long, default_value_t = 0.5)]
    gamma: f64,
    #[arg(long, default_value_t = 0.95)]
    lambda: f64,
    /// Samples consumed; defaults to the whole file.
    #[arg(long)]
    t_star: Option<usize>,
    #[arg(long)]
    out_w: PathBuf,
    /// Per-step trace CSV (t, sigma_t, zeta_t, nnz).
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Binary state checkpoint for a later debias run.
    #[arg(long)]
    save_state: Option<PathBuf>,
    /// Known true operator; enables the zeta_t trace column.
    #[arg(long)]
    w_true: Option<PathBuf>,
    /// Pin the negative split parts at zero.
    #[arg(long)]
    adjacency_only: bool,
}

#[derive(Args, Debug)]
struct DebiasArgs {
    /// Identifier checkpoint written by `identify --save-state`.
    #[arg(long)]
    resume: PathBuf,
    /// Signal CSV (the same stream the identifier consumed).
    #[arg(long)]
    x: PathBuf,
    /// First 1-based sample index to consume; must equal the checkpoint's
    /// time index + 1.
    #[arg(long)]
    from: usize,
    /// Stop once the tap residual norm drops below this.
    #[arg(long, default_value_t = 1e-3)]
    delta: f64,
    #[arg(long)]
    out_w: PathBuf,
    /// Recovered taps CSV (one ragged row per lag).
    #[arg(long)]
    out_h: PathBuf,
    /// Support threshold relative to the max-abs entry of the estimate.
    #[arg(long, default_value_t = 1e-6)]
    support_eps: f64,
    #[arg(long, value_enum, default_value_t = MaskModeArg::Reachability)]
    mask_mode: MaskModeArg,
    /// Tap sparsity weight.
    #[arg(long, default_value_t = 0.01)]
    eta: f64,
    /// Attractor denominator offset.
    #[arg(long, default_value_t = 1e-2)]
    epsilon: f64,
    /// Use the forgetting-weighted recursive tap form.
    #[arg(long)]
    recursive_h: bool,
    #[arg(long)]
    trace: Option<PathBuf>,
    #[arg(long)]
    w_true: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Draw a synthetic shift operator (optionally with AR taps).
    Generate(GenerateArgs),
    /// Drive the AR recursion and write the retained stream.
    Simulate(SimulateArgs),
    /// Run the online support identification stage over a stream prefix.
    Identify(IdentifyArgs),
    /// Resume from a checkpoint and run the debias stage.
    Debias(DebiasArgs),
    /// Run a full seeded experiment from a TOML config.
    RunExperiment {
        #[arg(long)]
        config: PathBuf,
        /// Overrides [run].out_dir.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Evaluate the hyperparameter grid from a TOML config.
    GridSearch {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out_dir: Option<PathBuf>,
        /// Replace the configured grid with the full reference grid.
        #[arg(long)]
        full_grid: bool,
    },
}

fn exit_code_for(e: &GsoError) -> u8 {
    match e {
        GsoError::InvalidArgument(_) => 2,
        GsoError::Instability { .. } | GsoError::DegenerateInput(_) | GsoError::DegenerateSupport => 3,
        GsoError::Io(_) | GsoError::Parse { .. } => 1,
    }
}

enum AppError {
    Core(GsoError),
    Trial(TrialError),
}

impl From<GsoError> for AppError {
    fn from(e: GsoError) -> Self {
        AppError::Core(e)
    }
}

impl From<TrialError> for AppError {
    fn from(e: TrialError) -> Self {
        AppError::Trial(e)
    }
}

impl AppError {
    fn report(&self) -> u8 {
        match self {
            AppError::Core(e) => {
                eprintln!("error: {e}");
                exit_code_for(e)
            }
            AppError::Trial(e) => {
                eprintln!("error: {e}");
                exit_code_for(&e.source)
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => ExitCode::from(e.report()),
    }
}

fn run(cli: Cli) -> Result<(), AppError> {
    match cli.command {
        Command::Generate(args) => generate(args),
        Command::Simulate(args) => simulate_cmd(args),
        Command::Identify(args) => identify(args),
        Command::Debias(args) => debias(args),
        Command::RunExperiment { config, out_dir } => {
            let cfg = ExperimentConfig::load(&config)?;
            let dir = out_dir
                .or_else(|| cfg.run.out_dir.as_ref().map(PathBuf::from))
                .unwrap_or_else(|| PathBuf::from("runs/experiment"));
            let summary = run_experiment(&cfg, &dir)?;
            println!(
                "{} trials: mean_p_fa={:?} mean_p_m={:?} accuracy={:.4} -> {}",
                summary.trials,
                summary.mean_p_fa,
                summary.mean_p_m,
                summary.mean_support_accuracy,
                dir.display()
            );
            Ok(())
        }
        Command::GridSearch { config, out_dir, full_grid } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if full_grid {
                cfg.grid = Some(GridSpec::full(cfg.model.p_order));
            }
            let dir = out_dir
                .or_else(|| cfg.run.out_dir.as_ref().map(PathBuf::from))
                .unwrap_or_else(|| PathBuf::from("runs/grid"));
            let outcome = run_grid_search(&cfg, &dir)?;
            println!(
                "best: mu={:?} eta={} gamma={} lambda={} objective={} ({} points) -> {}",
                outcome.best.mu,
                outcome.best.eta,
                outcome.best.gamma,
                outcome.best.lambda,
                outcome.best_objective,
                outcome.surface.len(),
                dir.display()
            );
            Ok(())
        }
    }
}

fn generate(args: GenerateArgs) -> Result<(), AppError> {
    let params = match args.kind {
        KindArg::Random => TopologyParams::Random(RandomParams {
            lo_frac: args.lo_frac.unwrap_or(0.3),
            hi_frac: args.hi_frac.unwrap_or(0.7),
        }),
        KindArg::Powerlaw => TopologyParams::PowerLaw(PowerLawParams {
            seed_nodes: args.seed_nodes,
            seed_connect_prob: args.seed_connect_prob,
            edges_per_node: args.edges_per_node,
            lo_frac: args.lo_frac.unwrap_or(0.05),
            hi_frac: args.hi_frac.unwrap_or(0.95),
        }),
        KindArg::Sbm => TopologyParams::Sbm(SbmParams {
            cluster_sizes: args.cluster_sizes.clone(),
            base_diag: args.base_diag,
            prob_jitter_lo: args.prob_jitter_lo,
            prob_jitter_hi: args.prob_jitter_hi,
            weight_rate: args.weight_rate,
        }),
    };
    let spec = TopologySpec { n: args.n, norm_factor: args.norm_factor, params };
    let seed = RngSeed::new(args.seed);
    let w = gen_gso(&spec, seed)?;
    gio::write_matrix_csv(&args.out, w.entries())?;
    println!("wrote {} ({} non-zeros of {})", args.out.display(), w.nnz(), args.n * args.n);
    if let Some(coeffs_out) = &args.coeffs_out {
        let coeffs = gen_ar_coeffs(args.p_order, seed.derive(1), args.zero_prob)?;
        gio::write_coeffs_csv(coeffs_out, &coeffs)?;
        println!("wrote {} (order {})", coeffs_out.display(), args.p_order);
    }
    Ok(())
}

fn simulate_cmd(args: SimulateArgs) -> Result<(), AppError> {
    let w = GsoMatrix::new(gio::read_matrix_csv(&args.w)?, gso_core::TopologyKind::Custom)?;
    let coeffs = gio::read_coeffs_csv(&args.coeffs)?;
    let stream = simulate(&w, &coeffs, args.t, args.burn_in, args.noise_std, RngSeed::new(args.seed))?;
    gio::write_signal_csv(&args.out, stream.samples())?;
    if let Some(noise_out) = &args.noise_out {
        gio::write_signal_csv(noise_out, stream.noise())?;
    }
    println!(
        "wrote {} ({} samples retained after {} burn-in)",
        args.out.display(),
        stream.len(),
        args.burn_in
    );
    Ok(())
}

fn identify(args: IdentifyArgs) -> Result<(), AppError> {
    let samples = gio::read_signal_csv(&args.x)?;
    let stream = SignalStream::from_samples(samples)?;
    let t_star = args.t_star.unwrap_or(stream.len());
    if args.mu.len() != args.p {
        return Err(GsoError::invalid(format!(
            "--mu needs {} comma-separated weights for --p {}",
            args.p, args.p
        ))
        .into());
    }
    let path = match args.path {
        1 => AlgPath::One,
        2 => AlgPath::Two,
        other => return Err(GsoError::invalid(format!("--path must be 1 or 2, got {other}")).into()),
    };
    let hp = HyperParams::new(args.mu.clone(), args.gamma, args.lambda, path)?;
    let w_true = match &args.w_true {
        Some(p) => Some(GsoMatrix::new(gio::read_matrix_csv(p)?, gso_core::TopologyKind::Custom)?),
        None => None,
    };
    let out = identify_stream(
        &stream,
        t_star,
        hp,
        StepsizeController::default(),
        args.adjacency_only,
        w_true.as_ref(),
        None,
    )?;
    gio::write_matrix_csv(&args.out_w, out.w_star.entries())?;
    if let Some(trace_path) = &args.trace {
        emit::write_phase_trace_csv(trace_path, &out.trace)?;
    }
    if let Some(state_path) = &args.save_state {
        gio::save_checkpoint(state_path, &out.identifier)?;
    }
    println!(
        "identified support after {} steps: {} non-zeros -> {}",
        out.identifier.state().t,
        out.w_star.nnz(),
        args.out_w.display()
    );
    Ok(())
}

fn debias(args: DebiasArgs) -> Result<(), AppError> {
    let identifier = gio::load_checkpoint(&args.resume, StepsizeController::default())?;
    let t_done = identifier.state().t;
    if args.from != t_done + 1 {
        return Err(GsoError::invalid(format!(
            "--from {} does not continue the checkpoint (expected {})",
            args.from,
            t_done + 1
        ))
        .into());
    }
    let samples = gio::read_signal_csv(&args.x)?;
    if samples.len() < args.from {
        return Err(GsoError::invalid(format!(
            "signal file holds {} samples, cannot resume at {}",
            samples.len(),
            args.from
        ))
        .into());
    }
    let mask_mode = match args.mask_mode {
        MaskModeArg::Reachability => MaskModeConfig::Reachability,
        MaskModeArg::Replicate => MaskModeConfig::Replicate,
    };
    let mask = build_support_mask(
        &identifier.w_estimate(),
        identifier.state().p_order,
        args.support_eps,
        mask_mode.into(),
    )?;
    let taps = TapEstimatorSettings {
        eta: args.eta,
        epsilon: args.epsilon,
        recursive: args.recursive_h,
    };
    let debiaser = Debiaser::from_identifier(&identifier, mask, StepsizeController::default(), taps)?;
    let w_true = match &args.w_true {
        Some(p) => Some(GsoMatrix::new(gio::read_matrix_csv(p)?, gso_core::TopologyKind::Custom)?),
        None => None,
    };
    let out = debias_stream(debiaser, &samples[args.from - 1..], args.delta, w_true.as_ref())?;
    gio::write_matrix_csv(&args.out_w, out.w_final.entries())?;
    gio::write_coeffs_csv(&args.out_h, &out.h_final)?;
    if let Some(trace_path) = &args.trace {
        emit::write_phase_trace_csv(trace_path, &out.trace)?;
    }
    match out.stopped_at {
        Some(step) => println!(
            "debias stopped by the residual rule after {step} steps -> {}",
            args.out_w.display()
        ),
        None => println!(
            "debias consumed the stream tail ({} steps) -> {}",
            out.trace.len(),
            args.out_w.display()
        ),
    }
    Ok(())
}
