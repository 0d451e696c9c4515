use std::process::ExitCode;

fn main() -> ExitCode {
    let code = std::panic::catch_unwind(|| capbias_cli::run_from(std::env::args_os()))
        .unwrap_or(capbias_cli::EXIT_INTERNAL);
    ExitCode::from(code)
}
