mod manifest;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use nalgebra::DVector;
use serde::Serialize;

use sizeshape::experiment::replicate_grid;
use sizeshape::geometry::{decompose, helmertize, procrustes_distance};
use sizeshape::io::{
    numbered_table, read_chain, read_configurations, read_covariates, read_json, read_matrix, read_priors,
    write_chain, write_configurations, write_json, TruthFile,
};
use sizeshape::{
    default_scenario, generate, gibbs_run, summarize, Configuration, Dataset, Error, ErrorKind, Observation,
    PreForm, Priors, SamplerConfig,
};

use manifest::{FileDigest, RunManifest};

/// Acceptance rates outside this band trigger a tuning hint.
const ACCEPTANCE_HINT_BAND: (f64, f64) = (0.15, 0.6);

#[derive(Parser)]
#[command(name = "sizeshape", version, about = "Bayesian size-and-shape regression")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a dataset from the latent-rotation model.
    Simulate(SimulateArgs),
    /// Fit the model by MCMC and write the identified chain.
    Fit(FitArgs),
    /// Summarize a chain, optionally against a ground truth.
    Summarize(SummarizeArgs),
    /// Size-and-shape distance between two k × p matrices.
    Distance(DistanceArgs),
    /// Run the full (p, kappa, n) simulation grid and report distances.
    #[command(name = "replicate-table1")]
    ReplicateTable1(ReplicateArgs),
}

#[derive(Args, Serialize)]
struct SimulateArgs {
    #[arg(long)]
    p: usize,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    kappa: f64,
    #[arg(long, env = "SNS_SEED", default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Write Helmertized pre-forms (k rows) instead of configurations
    /// (k + 1 landmarks).
    #[arg(long)]
    preform: bool,
}

#[derive(Args, Serialize)]
struct FitArgs {
    /// Configuration CSV.
    data: PathBuf,
    /// Priors JSON.
    #[arg(long, conflicts_with = "default_priors")]
    priors: Option<PathBuf>,
    /// M = 0, V = 1e6 I, nu = k + 1, Psi = I.
    #[arg(long)]
    default_priors: bool,
    /// Covariate CSV (object_id,z_1,…,z_d); intercept only when omitted.
    #[arg(long)]
    covariates: Option<PathBuf>,
    /// Sampler settings as JSON; flags given explicitly take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    burn_in: Option<usize>,
    #[arg(long, env = "SNS_SEED")]
    seed: Option<u64>,
    #[arg(long)]
    thin: Option<usize>,
    #[arg(long)]
    euler_step: Option<f64>,
    /// Rows are pre-form coordinates rather than raw landmarks.
    #[arg(long)]
    preform: bool,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args, Serialize)]
struct SummarizeArgs {
    chain: PathBuf,
    #[arg(long)]
    truth: Option<PathBuf>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args, Serialize)]
struct DistanceArgs {
    a: PathBuf,
    b: PathBuf,
}

#[derive(Args, Serialize)]
struct ReplicateArgs {
    #[arg(long, env = "SNS_SEED", default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 5)]
    replicates: usize,
    #[arg(long, default_value_t = 5000)]
    iterations: usize,
    #[arg(long, default_value_t = 3000)]
    burn_in: usize,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

fn to_value<T: Serialize>(v: &T) -> serde_json::Value {
    serde_json::to_value(v).expect("arguments serialize")
}

fn digests(paths: &[&Path]) -> Result<Vec<FileDigest>, Error> {
    paths.iter().map(|p| FileDigest::of(p).map_err(Error::from)).collect()
}

fn create_out_dir(dir: &Path) -> Result<(), Error> {
    std::fs::create_dir_all(dir).map_err(|e| Error::from(e).context(dir.display().to_string()))
}

fn finish(mut manifest: RunManifest, start: Instant, out: &Path, name: &str) -> Result<(), Error> {
    manifest.wall_time_seconds = start.elapsed().as_secs_f64();
    write_json(&out.join(name), &manifest)
}

fn simulate(args: SimulateArgs) -> Result<(), Error> {
    let start = Instant::now();
    let spec = default_scenario(args.p, args.n, args.kappa, args.seed)?;
    let sim = generate(&spec)?;
    let origin = vec![0.0; spec.p];
    let matrices = if args.preform {
        sim.preforms.iter().map(|x| x.coords().clone()).collect()
    } else {
        sim.preforms
            .iter()
            .map(|x| x.to_configuration(&origin).map(|c| c.coords().clone()))
            .collect::<Result<_, _>>()?
    };
    create_out_dir(&args.out)?;
    let data_path = args.out.join("data.csv");
    let truth_path = args.out.join("truth.json");
    write_configurations(&data_path, &numbered_table(matrices))?;
    write_json(&truth_path, &TruthFile::from_simulation(&spec, &sim))?;
    let mut manifest = RunManifest::new("simulate", to_value(&args), Some(args.seed));
    manifest.outputs = digests(&[&data_path, &truth_path])?;
    println!("wrote {} objects to {}", spec.n, data_path.display());
    finish(manifest, start, &args.out, "simulate_manifest.json")
}

fn load_dataset(args: &FitArgs) -> Result<Dataset, Error> {
    let table = read_configurations(&args.data)?;
    let covariates = args.covariates.as_deref().map(read_covariates).transpose()?;
    let mut items = Vec::with_capacity(table.matrices.len());
    for (id, m) in table.object_ids.iter().zip(table.matrices) {
        let pre = if args.preform {
            PreForm::new(m)?
        } else {
            helmertize(&Configuration::new(m)?)?
        };
        let (y, _) = decompose(&pre).map_err(|e| e.context(format!("object {id}")))?;
        let z = match &covariates {
            Some(map) => map
                .get(id)
                .cloned()
                .ok_or_else(|| Error::Parse(format!("no covariates for object {id}")))?,
            None => DVector::from_element(1, 1.0),
        };
        items.push(Observation { y, z });
    }
    Dataset::new(items)
}

fn fit(args: FitArgs) -> Result<(), Error> {
    let start = Instant::now();
    let mut config: SamplerConfig = match &args.config {
        Some(path) => read_json(path)?,
        None => SamplerConfig::default(),
    };
    if let Some(v) = args.iterations {
        config.iterations = v;
    }
    if let Some(v) = args.burn_in {
        config.burn_in = v;
    }
    if let Some(v) = args.seed {
        config.seed = v;
    }
    if let Some(v) = args.thin {
        config.thin = v;
    }
    if let Some(v) = args.euler_step {
        config.euler_step = v;
    }
    config.store_rotations = false;
    config.validate()?;

    let data = load_dataset(&args)?;
    let (k, d, p) = (data.k(), data.d(), data.p());
    let priors = match (&args.priors, args.default_priors) {
        (Some(path), _) => read_priors(path)?.resolve(k, d, p)?,
        (None, true) => Priors::vague(k, d, p),
        (None, false) => {
            return Err(Error::InvalidArgument("give a priors file (--priors) or --default-priors".into()))
        }
    };
    let chain = gibbs_run(&data, &priors, &config)?;

    create_out_dir(&args.out)?;
    let chain_path = args.out.join("chain.csv");
    write_chain(&chain_path, &chain)?;

    let mut echo = to_value(&args);
    echo["sampler"] = to_value(&config);
    let mut manifest = RunManifest::new("fit", echo, Some(config.seed));
    let mut inputs: Vec<&Path> = vec![&args.data];
    inputs.extend(args.priors.as_deref());
    inputs.extend(args.covariates.as_deref());
    inputs.extend(args.config.as_deref());
    manifest.inputs = digests(&inputs)?;
    manifest.outputs = digests(&[&chain_path])?;
    manifest.acceptance_rate = chain.acceptance_rate;
    println!("wrote {} draws to {}", chain.draws.len(), chain_path.display());
    if let Some(rate) = chain.acceptance_rate {
        println!("rotation acceptance rate {rate:.3}");
        if rate < ACCEPTANCE_HINT_BAND.0 || rate > ACCEPTANCE_HINT_BAND.1 {
            eprintln!(
                "warning: rotation acceptance rate {rate:.3} is outside [{}, {}]; adjust --euler-step (current {})",
                ACCEPTANCE_HINT_BAND.0, ACCEPTANCE_HINT_BAND.1, config.euler_step
            );
        }
    }
    finish(manifest, start, &args.out, "fit_manifest.json")
}

fn summarize_cmd(args: SummarizeArgs) -> Result<(), Error> {
    let start = Instant::now();
    let table = read_chain(&args.chain)?;
    let truth: Option<TruthFile> = args.truth.as_deref().map(read_json).transpose()?;
    let truth_state = truth.as_ref().map(|t| t.identified_state()).transpose()?;
    let summary = summarize(&table.draws, truth_state.as_ref())?;

    create_out_dir(&args.out)?;
    let summary_path = args.out.join("summary.json");
    write_json(&summary_path, &summary)?;

    let p = summary.beta_mean.len();
    if let (Some(t), Some(rho)) = (&truth, summary.rho) {
        println!("{:>5} {:>6} {:>10}", "n", "kappa", format!("rho_{p}"));
        println!("{:>5} {:>6} {:>10.4}", t.scenario.n, t.scenario.kappa, rho);
        println!();
    }
    println!("{:<14} {:>12} {:>12} {:>12} {:>9}", "parameter", "mean", "2.5%", "97.5%", "ess");
    for s in &summary.params {
        println!("{:<14} {:>12.5} {:>12.5} {:>12.5} {:>9.1}", s.name, s.mean, s.lower, s.upper, s.ess);
    }

    let mut manifest = RunManifest::new("summarize", to_value(&args), None);
    let mut inputs: Vec<&Path> = vec![&args.chain];
    inputs.extend(args.truth.as_deref());
    manifest.inputs = digests(&inputs)?;
    manifest.outputs = digests(&[&summary_path])?;
    finish(manifest, start, &args.out, "summarize_manifest.json")
}

fn distance(args: DistanceArgs) -> Result<(), Error> {
    let a = read_matrix(&args.a)?;
    let b = read_matrix(&args.b)?;
    println!("{}", procrustes_distance(&a, &b)?);
    Ok(())
}

fn replicate(args: ReplicateArgs) -> Result<(), Error> {
    let start = Instant::now();
    if args.replicates == 0 {
        return Err(Error::InvalidArgument("replicates must be positive".into()));
    }
    let base = SamplerConfig {
        iterations: args.iterations,
        burn_in: args.burn_in,
        ..SamplerConfig::default()
    };
    base.validate()?;
    let report = replicate_grid(args.seed, args.replicates, &base)?;
    create_out_dir(&args.out)?;
    let report_path = args.out.join("table1.json");
    write_json(&report_path, &report)?;
    print!("{}", report.table());
    let mut manifest = RunManifest::new("replicate-table1", to_value(&args), Some(args.seed));
    manifest.outputs = digests(&[&report_path])?;
    finish(manifest, start, &args.out, "replicate_manifest.json")
}

fn exit_code(e: &Error) -> u8 {
    match e.kind() {
        ErrorKind::Usage => 2,
        ErrorKind::Data => 3,
        ErrorKind::Numerical => 4,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Fit(a) => fit(a),
        Command::Summarize(a) => summarize_cmd(a),
        Command::Distance(a) => distance(a),
        Command::ReplicateTable1(a) => replicate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.to_string().replace('\n', " "));
            ExitCode::from(exit_code(&e))
        }
    }
}
