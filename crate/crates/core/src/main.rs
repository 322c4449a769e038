use std::process::ExitCode;

use alexbench::cli::{execute, parse_args, CliError};

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cfg = match parse_args(std::env::args_os()) {
        Ok(cfg) => cfg,
        Err(e) => {
            match &e {
                CliError::Help(text) => print!("{text}"),
                CliError::Usage(text) | CliError::UnknownFlag(text) => eprint!("{text}"),
                other => eprintln!("error: {other}"),
            }
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    match execute(&cfg) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
