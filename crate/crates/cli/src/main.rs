use std::process::ExitCode;

use clap::Parser;

mod args;
mod commands;

use args::Cli;

/// Log filter variable; falls back to `info`.
const LOG_ENV: &str = "MPU_EMBED_LOG";

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().filter_or(LOG_ENV, "info"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            // clap picks 2 for usage errors and 0 for --help / --version
            let code = e.exit_code();
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
