//! Command-line driver: data generation, reconstruction, verification
//! checks, regularization search and the standard experiment cases.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use emrecon::cases;
use emrecon::config::{CaseId, Mode, RunConfig};
use emrecon::error::Result;
use emrecon::io::{write_field_vtk, write_iteration_log, write_trace_csv};

#[derive(Parser)]
#[command(name = "emrecon", version, about = "Time-domain electromagnetic coefficient reconstruction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Config-file plus common overrides; flags mirror the config keys.
#[derive(Args, Clone)]
struct ConfigArgs {
    /// TOML config file; defaults apply for every key it omits.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    omega: Option<f64>,
    #[arg(long)]
    noise_percent: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    h: Option<f64>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    t_final: Option<f64>,
    #[arg(long)]
    gamma1: Option<f64>,
    #[arg(long)]
    gamma2: Option<f64>,
    #[arg(long)]
    alpha1: Option<f64>,
    #[arg(long)]
    alpha2: Option<f64>,
    #[arg(long)]
    theta: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    /// Observation trace file (reconstruct mode).
    #[arg(long)]
    data: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl ConfigArgs {
    fn resolve(&self, mode: Mode) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        cfg.mode = mode;
        macro_rules! over {
            ($($field:ident),*) => {
                $(if let Some(v) = self.$field { cfg.$field = v; })*
            };
        }
        over!(omega, noise_percent, seed, h, tau, t_final, gamma1, gamma2, alpha1, alpha2, theta, max_iter);
        if let Some(p) = &self.data {
            cfg.data_path = Some(p.clone());
        }
        if let Some(p) = &self.out {
            cfg.output_dir = Some(p.clone());
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Solve the forward problem at refined time step and write the clean
    /// and noisy observation traces.
    GenerateData(ConfigArgs),
    /// Run the conjugate-gradient reconstruction and write fields,
    /// iteration log and report.
    Reconstruct(ConfigArgs),
    /// Compare the adjoint gradients against the finite-difference oracle.
    Gradcheck(ConfigArgs),
    /// Check the discrete adjoint identity of the leapfrog chain.
    Adjointcheck {
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Reconstruct on the configured gamma grid and tabulate the errors.
    Regsearch(ConfigArgs),
    /// Run one of the standard cases (i, ii, iii, iv) end to end.
    RunCase {
        /// Case id: i, ii, iii or iv.
        case: String,
        #[arg(long, default_value = "runs")]
        workdir: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
    },
}

fn out_dir(cfg: &RunConfig) -> Result<PathBuf> {
    let dir = cfg
        .output_dir
        .clone()
        .unwrap_or_else(|| PathBuf::from("out"));
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn run() -> Result<()> {
    match Cli::parse().command {
        Command::GenerateData(args) => {
            let cfg = args.resolve(Mode::GenerateData)?;
            let dir = out_dir(&cfg)?;
            let (clean, noisy) = cases::generate_data(&cfg)?;
            write_trace_csv(&clean, &dir.join("trace_clean.csv"))?;
            write_trace_csv(&noisy, &dir.join("trace_noisy.csv"))?;
            std::fs::write(dir.join("manifest.toml"), cfg.to_toml())?;
            println!(
                "wrote clean and noisy traces ({} levels, {} face nodes) to {}",
                clean.n_levels,
                clean.n_face(),
                dir.display()
            );
        }
        Command::Reconstruct(args) => {
            let cfg = args.resolve(Mode::Reconstruct)?;
            let dir = out_dir(&cfg)?;
            let (outcome, observed) = cases::reconstruct_mode(&cfg)?;
            let asm = cfg.assemble()?;
            std::fs::write(dir.join("manifest.toml"), cfg.to_toml())?;
            write_trace_csv(&observed, &dir.join("trace_observed.csv"))?;
            write_iteration_log(&outcome.result.iterations, &dir.join("iterations.csv"))?;
            write_field_vtk(&outcome.eps_raw, &asm.grid, "eps_raw", &dir.join("eps_raw.vtk"))?;
            write_field_vtk(&outcome.mu_raw, &asm.grid, "mu_raw", &dir.join("mu_raw.vtk"))?;
            write_field_vtk(&outcome.eps_masked, &asm.grid, "eps_masked", &dir.join("eps_masked.vtk"))?;
            write_field_vtk(&outcome.mu_masked, &asm.grid, "mu_masked", &dir.join("mu_masked.vtk"))?;
            std::fs::write(dir.join("report.txt"), &outcome.report_text)?;
            print!("{}", outcome.report_text);
        }
        Command::Gradcheck(args) => {
            let cfg = args.resolve(Mode::Gradcheck)?;
            let rows = cases::gradcheck(&cfg)?;
            println!("node,param,fd,adjoint,rel_err");
            let mut worst: f64 = 0.0;
            for r in &rows {
                println!(
                    "({} {} {}),{},{},{},{}",
                    r.node[0], r.node[1], r.node[2], r.param, r.fd, r.adjoint, r.rel_err
                );
                worst = worst.max(r.rel_err);
            }
            println!("worst_rel_err={worst}");
        }
        Command::Adjointcheck { seed } => {
            let out = cases::adjoint_check(seed)?;
            println!("discrepancy={}", out.discrepancy);
            println!("mutated_discrepancy={}", out.mutated_discrepancy);
            println!(
                "sensitive={}",
                out.discrepancy < 1e-10 && out.mutated_discrepancy > 1e-6
            );
        }
        Command::Regsearch(args) => {
            let cfg = args.resolve(Mode::Regsearch)?;
            let (rows, best) = cases::regsearch(&cfg)?;
            let table = cases::regsearch_table(&rows, best);
            let dir = out_dir(&cfg)?;
            std::fs::write(dir.join("regsearch.csv"), &table)?;
            print!("{table}");
        }
        Command::RunCase {
            case,
            workdir,
            config,
        } => {
            let case = CaseId::parse(&case).ok_or_else(|| emrecon::Error::Validation {
                field: "case".into(),
                reason: format!("unknown case `{case}`, expected i, ii, iii or iv"),
            })?;
            let cfg = config.resolve(Mode::Reconstruct)?;
            let dir = cases::run_case(case, &cfg, &workdir)?;
            let report = std::fs::read_to_string(dir.join("report.txt"))?;
            println!("case {} artifacts in {}", case.label(), dir.display());
            print!("{report}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.category());
            ExitCode::from(e.exit_code())
        }
    }
}
