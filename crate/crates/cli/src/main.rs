use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use bamsprod_cli::grid::parse_grid_arg;
use bamsprod_cli::{execute, load_manifest, recipes, CliError, Report, Settings};

/// Runs optimizer experiments described by manifests and writes CSV logs.
#[derive(Parser)]
#[command(name = "bamsprod", version)]
struct Cli {
    /// Output directory [default: $BAMSPROD_OUT_DIR or ./bamsprod-runs].
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Worker threads (default: available cores).
    #[arg(long, global = true, default_value_t = 0)]
    parallel: usize,

    /// Added to every seed of the manifest.
    #[arg(long, global = true, default_value_t = 0)]
    seed_offset: u64,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every (optimizer × seed) cell of a manifest.
    Run { manifest: PathBuf },
    /// Run a canned recipe and print its PASS/FAIL verdict.
    Repro {
        /// theorem1, theorem3, fig2, shubert or bound_check.
        recipe: String,
    },
    /// Run a manifest over the Cartesian product of parameter grids.
    Sweep {
        manifest: PathBuf,
        /// `name=v1,v2,…`; may be repeated.
        #[arg(long = "grid", value_name = "NAME=VALUES")]
        grid: Vec<String>,
    },
}

fn report(r: &Report) -> Result<(), CliError> {
    println!("wrote {} cell(s) to {}", r.outcomes.len(), r.dir.display());
    if let Some(v) = &r.verdict {
        for line in &v.lines {
            println!("{line}");
        }
        println!("VERDICT: {}", if v.pass { "PASS" } else { "FAIL" });
    }
    let diverged = r.diverged();
    if !diverged.is_empty() {
        let names: Vec<&str> = diverged.iter().map(|o| o.cell.name.as_str()).collect();
        return Err(CliError::Numeric(format!("diverged: {}", names.join(", "))));
    }
    Ok(())
}

fn run(cli: Cli) -> Result<bool, CliError> {
    let mut settings = Settings {
        parallel: cli.parallel,
        seed_offset: cli.seed_offset,
        ..Settings::default()
    };
    if let Some(out) = cli.out {
        settings.out = out;
    }
    let manifest = match &cli.command {
        Command::Run { manifest } => load_manifest(manifest)?,
        Command::Repro { recipe } => recipes::recipe(recipe)?,
        Command::Sweep { manifest, grid } => {
            settings.grid = grid.iter().map(|g| parse_grid_arg(g)).collect::<Result<_, _>>()?;
            load_manifest(manifest)?
        }
    };
    let r = execute(&manifest, &settings)?;
    report(&r)?;
    Ok(r.verdict.is_none_or(|v| v.pass))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
