use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use cachegym::harness::{aggregate, emit_results, run_experiment, ExperimentKind, ExperimentSpec};
use cachegym::nn::Mlp;
use cachegym::trace::{generate_dynamic_trace, generate_static_trace, write_trace, DynamicTraceParams, PopularityModel};
use cachegym::wolpertinger::DIGEST_FILE;
use cachegym::Result;

#[derive(Parser)]
#[command(name = "cachegym", version, about = "Cache replacement experiments on synthetic Zipf workloads")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a request trace file.
    GenTrace {
        #[arg(long, default_value_t = 500)]
        num_contents: usize,
        #[arg(long, default_value_t = 1.3)]
        zipf: f64,
        #[arg(long, default_value_t = 20_000)]
        requests: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Redraw the exponent and rank order every `change-interval` requests.
        #[arg(long)]
        dynamic: bool,
        #[arg(long)]
        change_interval: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run an experiment and write its results table.
    Run(RunArgs),
    /// Describe a saved agent checkpoint directory.
    InspectCheckpoint { dir: PathBuf },
}

#[derive(clap::Args)]
struct RunArgs {
    #[arg(long, default_value = "capacity-sweep")]
    experiment: String,
    /// Comma-separated capacities.
    #[arg(long)]
    capacity: Option<String>,
    #[arg(long)]
    num_contents: Option<usize>,
    #[arg(long)]
    zipf: Option<f64>,
    #[arg(long)]
    requests: Option<usize>,
    /// Comma-separated policies: lru, lfu, fifo, null, drl, drl:<k-frac>, dqn.
    #[arg(long)]
    policy: Option<String>,
    /// Expanded-action fraction for `drl` policies.
    #[arg(long)]
    k_frac: Option<f64>,
    /// First seed.
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Number of consecutive seeds.
    #[arg(long)]
    seeds: Option<usize>,
    #[arg(long)]
    window: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Use the full-size workload (5000 contents, 10000 requests).
    #[arg(long)]
    full_scale: bool,
    #[arg(long)]
    checkpoint_dir: Option<PathBuf>,
    /// key=value file; its settings override the flags.
    #[arg(long)]
    config: Option<PathBuf>,
}

fn build_spec(args: &RunArgs) -> Result<ExperimentSpec> {
    let kind: ExperimentKind = args.experiment.parse()?;
    let mut spec = ExperimentSpec::defaults(kind);
    if args.full_scale {
        spec = spec.full_scale();
    }
    let count = args.seeds.unwrap_or(spec.seeds.len()) as u64;
    spec.seeds = (args.seed..args.seed + count).collect();
    let mut flags: Vec<(&str, String)> = Vec::new();
    if let Some(v) = &args.capacity {
        flags.push(("capacity", v.clone()));
    }
    if let Some(v) = args.num_contents {
        flags.push(("num_contents", v.to_string()));
    }
    if let Some(v) = args.zipf {
        flags.push(("zipf", v.to_string()));
    }
    if let Some(v) = args.requests {
        flags.push(("requests", v.to_string()));
    }
    if let Some(v) = &args.policy {
        flags.push(("policy", v.clone()));
    }
    if let Some(v) = args.k_frac {
        flags.push(("k_frac", v.to_string()));
    }
    if let Some(v) = args.window {
        flags.push(("window", v.to_string()));
    }
    for (key, value) in flags {
        spec.apply(key, &value)?;
    }
    spec.out = args.out.clone();
    spec.checkpoint_dir = args.checkpoint_dir.clone();
    if let Some(path) = &args.config {
        spec.apply_config(&fs::read_to_string(path)?)?;
    }
    spec.validate()?;
    Ok(spec)
}

fn run(args: RunArgs) -> Result<()> {
    let spec = build_spec(&args)?;
    let rows = run_experiment(&spec)?;
    if let Some(path) = &spec.out {
        emit_results(&rows, path)?;
    }
    println!("policy,capacity,window_end,seeds,chr_mean,chr_std,evals_per_epoch,sec_per_epoch");
    for a in aggregate(&rows) {
        println!(
            "{},{},{},{},{:.4},{:.4},{:.2},{:.3e}",
            a.policy, a.capacity, a.window_end, a.seeds, a.chr_mean, a.chr_std, a.evals_per_epoch, a.sec_per_epoch
        );
    }
    Ok(())
}

fn inspect(dir: PathBuf) -> Result<()> {
    let digest = fs::read_to_string(dir.join(DIGEST_FILE))?;
    println!("config digest: {}", digest.trim());
    let mut entries: Vec<PathBuf> = fs::read_dir(&dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "mlp"))
        .collect();
    entries.sort();
    for path in entries {
        let net = Mlp::load(&path)?;
        println!(
            "{}: sizes {:?}, {} parameters, output {:?}",
            path.file_name().unwrap_or_default().to_string_lossy(),
            net.sizes(),
            net.num_params(),
            net.output_activation()
        );
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::GenTrace {
            num_contents,
            zipf,
            requests,
            seed,
            dynamic,
            change_interval,
            out,
        } => (|| {
            let trace = if dynamic {
                let mut params = DynamicTraceParams::new(num_contents, requests);
                if let Some(interval) = change_interval {
                    params.change_interval = interval;
                }
                generate_dynamic_trace(&params, seed)?
            } else {
                generate_static_trace(&PopularityModel::identity(num_contents, zipf)?, requests, seed)?
            };
            write_trace(&trace, &out)
        })(),
        Command::Run(args) => run(args),
        Command::InspectCheckpoint { dir } => inspect(dir),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
