use std::process::ExitCode;

fn main() -> ExitCode {
    longview::cli::run(std::env::args_os())
}
