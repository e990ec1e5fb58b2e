use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(kron_sgd::cli::run(std::env::args_os()))
}
