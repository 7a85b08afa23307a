use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use monoforge::eval::{test_program, TestConfig};
use monoforge::{check_program, compile, CoreProgram};

const EXIT_UNREADABLE: u8 = 2;
const EXIT_COMPILE: u8 = 3;
const EXIT_CHECK: u8 = 4;
const EXIT_TEST: u8 = 5;

#[derive(Parser, Debug)]
#[command(name = "monoforge", version, about = "Expand, check and test polymorphic coproduct programs")]
struct Cli {
    /// Report format.
    #[arg(long, global = true, value_enum, env = "MONOFORGE_FORMAT", default_value_t = Format::Text)]
    format: Format,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write the monomorphic core for each input.
    Expand {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        /// Output file (default: stdout).
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Expand and report typing obligations.
    Check {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
    },
    /// Expand, check, then test every theorem instance over a bounded universe.
    Test {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        /// Maximum constructor nesting of enumerated values.
        #[arg(long, default_value_t = TestConfig::default().depth)]
        depth: usize,
        /// Inclusive integer window, as LO:HI.
        #[arg(long, value_parser = parse_range, allow_hyphen_values = true, default_value = "-2:2")]
        int_range: (i64, i64),
        /// Evaluation steps allowed per assignment.
        #[arg(long, default_value_t = TestConfig::default().fuel)]
        fuel: u64,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Sexpr,
}

fn parse_range(s: &str) -> Result<(i64, i64), String> {
    let (lo, hi) = s
        .split_once(':')
        .ok_or_else(|| format!("expected LO:HI, got `{s}`"))?;
    let lo: i64 = lo.trim().parse().map_err(|e| format!("bad lower bound `{lo}`: {e}"))?;
    let hi: i64 = hi.trim().parse().map_err(|e| format!("bad upper bound `{hi}`: {e}"))?;
    if lo > hi {
        return Err(format!("empty range {lo}:{hi}"));
    }
    Ok((lo, hi))
}

struct Failure(u8);

fn load(path: &Path) -> Result<CoreProgram, Failure> {
    let text = fs::read_to_string(path).map_err(|e| {
        eprintln!("{}: cannot read: {e}", path.display());
        Failure(EXIT_UNREADABLE)
    })?;
    compile(&text).map_err(|e| {
        eprintln!("{}:{e}", path.display());
        Failure(EXIT_COMPILE)
    })
}

fn check(path: &Path, program: &CoreProgram, format: Format, out: &mut impl Write) -> Result<(), Failure> {
    let reports = check_program(program);
    for r in &reports {
        match format {
            Format::Text => write!(out, "{}", r.render_text()),
            Format::Sexpr => writeln!(out, "{}", r.to_sexpr()),
        }
        .map_err(io_failure)?;
    }
    let bad: Vec<&str> = reports
        .iter()
        .filter(|r| !r.all_satisfied())
        .map(|r| r.name.as_str())
        .collect();
    if bad.is_empty() {
        Ok(())
    } else {
        eprintln!("{}: obligations violated in {}", path.display(), bad.join(", "));
        Err(Failure(EXIT_CHECK))
    }
}

fn io_failure(e: io::Error) -> Failure {
    eprintln!("error writing output: {e}");
    Failure(EXIT_UNREADABLE)
}

fn run(cli: Cli) -> Result<(), Failure> {
    let stdout = io::stdout();
    let mut out = stdout.lock();
    match cli.command {
        Command::Expand { inputs, output } => {
            let mut text = String::new();
            for path in &inputs {
                text.push_str(&load(path)?.render());
            }
            match output {
                Some(dest) => fs::write(&dest, text).map_err(|e| {
                    eprintln!("{}: cannot write: {e}", dest.display());
                    Failure(EXIT_UNREADABLE)
                }),
                None => out.write_all(text.as_bytes()).map_err(io_failure),
            }
        }
        Command::Check { inputs } => {
            for path in &inputs {
                let program = load(path)?;
                check(path, &program, cli.format, &mut out)?;
            }
            Ok(())
        }
        Command::Test {
            inputs,
            depth,
            int_range,
            fuel,
        } => {
            let cfg = TestConfig {
                depth,
                int_range,
                fuel,
            };
            if let Err(e) = cfg.validate() {
                eprintln!("{e}");
                return Err(Failure(EXIT_UNREADABLE));
            }
            for path in &inputs {
                let program = load(path)?;
                check(path, &program, cli.format, &mut io::sink())?;
                let reports = test_program(&program, &cfg).map_err(|e| {
                    eprintln!("{}: {e}", path.display());
                    Failure(EXIT_TEST)
                })?;
                for r in &reports {
                    match cli.format {
                        Format::Text => writeln!(out, "{}", r.render_text()),
                        Format::Sexpr => writeln!(out, "{}", r.to_sexpr()),
                    }
                    .map_err(io_failure)?;
                }
                if let Some(r) = reports.iter().find(|r| !r.passed()) {
                    eprintln!("{}: {} {}", path.display(), r.theorem, r.verdict());
                    return Err(Failure(EXIT_TEST));
                }
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure(code)) => ExitCode::from(code),
    }
}
