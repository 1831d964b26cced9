use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use memspin::scenario::{RunOptions, Scenario};
use memspin::Error;

#[derive(Parser)]
#[command(name = "memspin", version, about = "Multimode Raman memory network simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a scenario and write report.json plus CSV artifacts.
    Run(Common),
    /// Check the config and the validity margins without simulating.
    Validate(Common),
    /// Run only the Fock-space gate check.
    FockVerify(Common),
    /// Probe every input mode and write the measured transfer matrix.
    ExtractTransfer(Common),
}

#[derive(Args)]
struct Common {
    config: PathBuf,
    #[arg(long, env = "MEMSPIN_OUT", default_value = "memspin-out")]
    out: PathBuf,
    /// Worker threads for independent probe runs.
    #[arg(long)]
    jobs: Option<usize>,
    /// Refine (>1) or coarsen (<1) the grid in both z and t.
    #[arg(long, default_value_t = 1.0)]
    grid_scale: f64,
}

fn exit_code(e: &Error) -> u8 {
    if e.is_numerical() {
        3
    } else {
        2
    }
}

fn write_json(dir: &Path, value: &impl serde::Serialize) -> memspin::Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("report.json"), serde_json::to_string_pretty(value).expect("serializable") + "\n")?;
    Ok(())
}

fn execute(cmd: Command) -> memspin::Result<()> {
    let (Command::Run(c) | Command::Validate(c) | Command::FockVerify(c) | Command::ExtractTransfer(c)) = &cmd;
    if !(c.grid_scale > 0.0 && c.grid_scale.is_finite()) {
        return Err(Error::Invalid(format!("--grid-scale must be positive, got {}", c.grid_scale)));
    }
    if let Some(n) = c.jobs {
        if n == 0 {
            return Err(Error::Invalid("--jobs must be at least 1".into()));
        }
        // only fails if a pool already exists, which cannot happen here
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let scenario = Scenario::load(&c.config)?;
    let opts = RunOptions { grid_scale: c.grid_scale };
    match &cmd {
        Command::Run(_) => {
            let out = scenario.run(&opts)?;
            for p in out.write(&c.out)? {
                eprintln!("wrote {}", p.display());
            }
            if let Some(e) = out.report.efficiency {
                eprintln!("efficiency {e:.5}  overlap {:.5}", out.report.overlap.unwrap_or(f64::NAN));
            }
        }
        Command::Validate(_) => {
            let v = scenario.validation_report()?;
            if let Some(m) = &v.margins {
                eprintln!("margin7 {:.4e} ({})  margin9 {:.4e} ({})", m.margin7, pass(m.pass7), m.margin9, pass(m.pass9));
            }
            write_json(&c.out, &v)?;
        }
        Command::FockVerify(_) => {
            let f = scenario.fock_report()?;
            for case in &f.cases {
                eprintln!(
                    "|{}>  fidelity {:.12}  success {:.6}",
                    case.input, case.fidelity, case.success_probability
                );
            }
            write_json(&c.out, &f)?;
        }
        Command::ExtractTransfer(_) => {
            let out = scenario.extract_transfer(&opts)?;
            out.write(&c.out)?;
            eprintln!("transfer overlap {:.6}", out.report.transfer_overlap.unwrap_or(f64::NAN));
        }
    }
    Ok(())
}

fn pass(b: bool) -> &'static str {
    if b {
        "pass"
    } else {
        "FAIL"
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
