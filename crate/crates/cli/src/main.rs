use std::process::ExitCode;

use smp_pca_cli::commands::run_argv;
use smp_pca_cli::error::CliError;

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().collect();
    match run_argv(&argv) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Args(e)) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            ExitCode::SUCCESS
        }
        Err(e) => {
            let code = e.exit_code();
            match &e {
                CliError::Args(a) => {
                    let _ = a.print();
                }
                _ => eprintln!("error: {e}"),
            }
            ExitCode::from(code as u8)
        }
    }
}
