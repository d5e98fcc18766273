use std::process::ExitCode;

use clap::Parser;
use uniqtest::cli::{configure_threads, run, Cli};
use uniqtest::exit;

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { exit::DATA } else { exit::OK });
        }
    };
    match configure_threads().and_then(|()| run(cli, args)) {
        Ok(()) => ExitCode::from(exit::OK),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
