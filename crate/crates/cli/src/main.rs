use std::panic;
use std::process::ExitCode;

use acceptance_cli::{run, Cli, EXIT_INTERNAL, EXIT_OK, EXIT_USAGE};
use clap::Parser;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { EXIT_OK } as u8);
        }
    };
    let code = match panic::catch_unwind(|| run(cli)) {
        Ok(Ok(())) => EXIT_OK,
        Ok(Err(e)) => {
            eprintln!("acceptance: {e}");
            e.exit_code()
        }
        Err(_) => EXIT_INTERNAL,
    };
    ExitCode::from(code as u8)
}
