use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(aapu::cli::run(std::env::args_os()))
}
