mod args;
mod commands;

use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;

use args::Cli;
use commands::CliError;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(commands::EXIT_USAGE),
            };
        }
    };
    if let Some(threads) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(threads as usize)
            .build_global()
        {
            eprintln!("error: cannot configure thread pool: {e}");
            return ExitCode::from(commands::EXIT_USAGE);
        }
    }
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        use onebit_cdp::Error;
        match self {
            CliError::Usage(_) => commands::EXIT_USAGE,
            CliError::Core(e) => match e {
                Error::Format { .. } | Error::MissingIntensities | Error::DeadBand => {
                    commands::EXIT_FORMAT
                }
                Error::Io(_) => commands::EXIT_IO,
                e if e.is_numerical() => commands::EXIT_NUMERICAL,
                _ => commands::EXIT_USAGE,
            },
        }
    }
}
