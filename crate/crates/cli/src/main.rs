use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser};

use segbump_cli::{exit_code, run, write_error_report, Mode, RunConfig};

#[derive(Parser, Debug)]
#[command(version, about = "Segregated multi-bump solutions: experiment runner")]
struct Cli {
    mode: Mode,

    /// key=value configuration file, applied before the flags below
    #[arg(long)]
    config: Option<PathBuf>,

    /// Override any configuration key, e.g. `--set n_points=8001`
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,

    #[arg(long, default_value = "runs")]
    output_dir: PathBuf,

    #[arg(long)]
    cache_dir: Option<PathBuf>,

    #[command(flatten)]
    params: Flags,
}

#[derive(Args, Debug, Default)]
struct Flags {
    /// One value, or a comma separated list
    #[arg(long, alias = "epsilons", allow_hyphen_values = true)]
    epsilon: Option<String>,
    #[arg(long)]
    ell: Option<usize>,
    #[arg(long)]
    mu: Option<f64>,
    /// two or three
    #[arg(long)]
    system: Option<String>,
    /// Landscape samples per axis
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    n_points: Option<usize>,
    #[arg(long)]
    r_max: Option<f64>,
    /// Refine the assembled fields with Newton
    #[arg(long)]
    newton: bool,
}

fn build_config(cli: &Cli) -> Result<RunConfig, segbump_cli::ConfigError> {
    let mut cfg = RunConfig::new(cli.mode, cli.output_dir.clone());
    cfg.cache_dir = cli.cache_dir.clone();
    if let Some(path) = &cli.config {
        cfg.apply_file(path)?;
    }
    for pair in &cli.overrides {
        cfg.apply_override(pair)?;
    }
    let f = &cli.params;
    let flags: [(&str, Option<String>); 7] = [
        ("epsilon", f.epsilon.clone()),
        ("ell", f.ell.map(|v| v.to_string())),
        ("mu", f.mu.map(|v| v.to_string())),
        ("system", f.system.clone()),
        ("samples", f.samples.map(|v| v.to_string())),
        ("n_points", f.n_points.map(|v| v.to_string())),
        ("r_max", f.r_max.map(|v| v.to_string())),
    ];
    for (key, value) in flags {
        if let Some(v) = value {
            cfg.set(key, &v)?;
        }
    }
    if f.newton {
        cfg.params.newton = true;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match build_config(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    match run(&cfg) {
        Ok(out) => {
            println!("{}", cfg.mode_dir().join("report.json").display());
            for f in out.files.iter().skip(1) {
                println!("  {f}");
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            if let Err(w) = write_error_report(&cfg, &e) {
                eprintln!("could not write error report: {w:#}");
            }
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
