use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use robust_mimo::harness::{
    power_for, radii_from_epsbar, random_system, run_sweep, write_csv, ExperimentConfig,
};
use robust_mimo::json::{DesignJson, SystemFile};
use robust_mimo::model::Weights;
use robust_mimo::perfect::{mse_of_design, PowerBudget};
use robust_mimo::solver::{robust_design, SolverOptions};
use robust_mimo::validate::run_checks;
use robust_mimo::worstcase::UncertaintyRadii;

#[derive(Parser)]
#[command(
    name = "robust-mimo",
    version,
    about = "Worst-case robust MIMO transceiver design"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Design one transceiver and print it as JSON.
    Design(DesignArgs),
    /// Run a Monte-Carlo sweep and write CSV.
    Sweep {
        /// TOML config; defaults apply to missing keys.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output file (stdout if omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the built-in consistency checks.
    Validate,
}

#[derive(Args)]
struct DesignArgs {
    /// JSON system description; overrides the random-system options.
    #[arg(long)]
    system: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 2)]
    n_t: usize,
    #[arg(long, default_value_t = 2)]
    n_r: usize,
    #[arg(long, default_value_t = 10.0)]
    snr_db: f64,
    #[arg(long, default_value_t = 0.1)]
    eps_bar: f64,
    /// TOML solver options.
    #[arg(long)]
    options: Option<PathBuf>,
}

fn design(args: &DesignArgs) -> anyhow::Result<()> {
    let opts: SolverOptions = match &args.options {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))?;
            toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
        }
        None => SolverOptions::default(),
    };
    let (sys, radii, weights, power) = match &args.system {
        Some(path) => {
            let file: SystemFile = serde_json::from_reader(
                File::open(path).with_context(|| format!("opening {}", path.display()))?,
            )
            .with_context(|| format!("parsing {}", path.display()))?;
            let sys = file.system()?;
            let radii = match (file.radii, file.eps_bar) {
                (Some(r), None) => UncertaintyRadii::new(r.eps_h, r.eps_omega, r.eps_phi)?,
                (None, Some(e)) => radii_from_epsbar(e, &sys)?,
                (None, None) => UncertaintyRadii::zero(),
                (Some(_), Some(_)) => bail!("give either radii or eps_bar, not both"),
            };
            let n_r = sys.n_r();
            let weights = file
                .weights
                .clone()
                .unwrap_or_else(|| Weights::uniform(n_r));
            (sys, radii, weights, file.power.unwrap_or(power_for(n_r)))
        }
        None => {
            let sys = random_system(args.seed, args.n_t, args.n_r, args.snr_db)?;
            let radii = radii_from_epsbar(args.eps_bar, &sys)?;
            (sys, radii, Weights::uniform(args.n_r), power_for(args.n_r))
        }
    };
    let d = robust_design(&sys, &radii, &weights, PowerBudget::new(power)?, &opts)?;
    let nominal = mse_of_design(&sys, &weights, &d.transceiver)?;
    let out = DesignJson::new(&d, radii, nominal);
    let stdout = io::stdout();
    let mut lock = stdout.lock();
    serde_json::to_writer_pretty(&mut lock, &out)?;
    writeln!(lock)?;
    Ok(())
}

fn sweep(config: Option<&PathBuf>, out: Option<&PathBuf>) -> anyhow::Result<()> {
    let cfg = match config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    let result = run_sweep(&cfg)?;
    match out {
        Some(path) => {
            let file =
                File::create(path).with_context(|| format!("creating {}", path.display()))?;
            let mut wr = BufWriter::new(file);
            write_csv(&result, &cfg, &mut wr)?;
            wr.flush()?;
        }
        None => write_csv(&result, &cfg, io::stdout().lock())?,
    }
    Ok(())
}

fn validate() -> bool {
    let mut ok = true;
    for c in run_checks() {
        println!(
            "{} {}: {}",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.detail
        );
        ok &= c.passed;
    }
    ok
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Design(args) => design(args),
        Command::Sweep { config, out } => sweep(config.as_ref(), out.as_ref()),
        Command::Validate => {
            return if validate() {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            }
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
